//! Finite open-chain MPS: canonical forms, TFIM ground states and single-shot
//! product-state sampling.

mod dmrg;
mod lanczos;
mod mpo;
mod sampling;

pub use dmrg::{ground_state_search, DmrgConfig, DmrgResult};
pub use lanczos::{lowest_eigenpair, LanczosConfig};
pub use mpo::{build_tfim_mpo, Mpo, MpoTensor, Op2, IDENTITY, SIGMA_X, SIGMA_Z};
pub use sampling::{sample_cps, single_site_rdm, Basis, LocalBasis, SamplingWindow, ShotRecord};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, qr_positive};
use crate::tensor::Tensor3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrthoCenter {
    Site(usize),
    LeftCanonicalAll,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMps {
    pub tensors: Vec<Tensor3>,
    pub center: OrthoCenter,
}

impl FiniteMps {
    /// Wraps raw tensors without assuming any gauge (center at the last site
    /// would be a claim we cannot verify, so callers canonicalize explicitly).
    pub fn new(tensors: Vec<Tensor3>) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::invalid("MPS needs at least one site"));
        }
        if tensors[0].left() != 1 || tensors[tensors.len() - 1].right() != 1 {
            return Err(Error::invalid("boundary bond dimensions must be 1"));
        }
        for (j, w) in tensors.windows(2).enumerate() {
            if w[0].right() != w[1].left() {
                return Err(Error::invalid(format!("bond mismatch between sites {j} and {}", j + 1)));
            }
        }
        if tensors.iter().any(|t| t.phys() != 2) {
            return Err(Error::invalid("physical dimension must be 2"));
        }
        let last = tensors.len() - 1;
        Ok(FiniteMps {
            tensors,
            center: OrthoCenter::Site(last),
        })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Internal bond dimensions, one per bond between neighbouring sites.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors[..self.len() - 1].iter().map(|t| t.right()).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Product state from one normalized 2-vector per site.
    pub fn product_state(local: &[[f64; 2]]) -> Result<Self> {
        let tensors = local
            .iter()
            .map(|v| Tensor3::from_fn(1, 2, 1, |_, s, _| v[s]))
            .collect();
        let mut mps = Self::new(tensors)?;
        mps.center = OrthoCenter::LeftCanonicalAll;
        let norm = mps.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("product-state vectors must be normalized"));
        }
        Ok(mps)
    }

    /// (|0…0⟩ + |1…1⟩)/√2, bond dimension 2.
    pub fn ghz(sites: usize) -> Result<Self> {
        if sites < 2 {
            return Err(Error::invalid("GHZ state needs at least 2 sites"));
        }
        let mut tensors = Vec::with_capacity(sites);
        tensors.push(Tensor3::from_fn(1, 2, 2, |_, s, b| if s == b { 1.0 } else { 0.0 }));
        for _ in 1..sites - 1 {
            tensors.push(Tensor3::from_fn(2, 2, 2, |a, s, b| if a == s && s == b { 1.0 } else { 0.0 }));
        }
        let amp = std::f64::consts::FRAC_1_SQRT_2;
        tensors.push(Tensor3::from_fn(2, 2, 1, |a, s, _| if a == s { amp } else { 0.0 }));
        let mut mps = Self::new(tensors)?;
        mps.left_canonicalize();
        Ok(mps)
    }

    /// Random Gaussian MPS with bond dimensions min(chi, 2^j, 2^(F-j)),
    /// returned left-canonical and normalized.
    pub fn random<R: Rng + ?Sized>(sites: usize, chi: usize, rng: &mut R) -> Result<Self> {
        if sites == 0 || chi == 0 {
            return Err(Error::invalid("random MPS needs sites > 0 and chi > 0"));
        }
        let bond = |j: usize| -> usize {
            // bond j sits to the left of site j
            let cap_l = 1usize.checked_shl(j as u32).unwrap_or(usize::MAX);
            let cap_r = 1usize.checked_shl((sites - j) as u32).unwrap_or(usize::MAX);
            chi.min(cap_l).min(cap_r)
        };
        let tensors = (0..sites)
            .map(|j| {
                let (l, r) = (bond(j), bond(j + 1));
                let m = gaussian_matrix(l * 2, r, rng);
                Tensor3::from_left_matrix(&m, l, 2)
            })
            .collect();
        let mut mps = Self::new(tensors)?;
        mps.left_canonicalize();
        Ok(mps)
    }

    /// ψ + Xψ with X = ∏σˣ, built as a direct sum of bond spaces and
    /// returned left-canonical. Bond dimensions double.
    pub fn parity_symmetrized(&self) -> Result<Self> {
        let n = self.len();
        if n < 2 {
            return Err(Error::invalid("parity symmetrization needs at least 2 sites"));
        }
        let tensors = self
            .tensors
            .iter()
            .enumerate()
            .map(|(j, t)| {
                let (l, r) = (t.left(), t.right());
                let (nl, nr) = (if j == 0 { 1 } else { 2 * l }, if j == n - 1 { 1 } else { 2 * r });
                Tensor3::from_fn(nl, 2, nr, |a, s, b| {
                    let (ka, oa) = if j == 0 { (None, a) } else { (Some(a / l), a % l) };
                    let (kb, ob) = if j == n - 1 { (None, b) } else { (Some(b / r), b % r) };
                    let block = match (ka, kb) {
                        (Some(x), Some(y)) if x != y => return 0.0,
                        (Some(x), _) | (None, Some(x)) => x,
                        (None, None) => unreachable!("n >= 2"),
                    };
                    // block 1 carries the spin-flipped copy
                    let phys = if block == 1 { 1 - s } else { s };
                    t.get(oa, phys, ob)
                })
            })
            .collect();
        let mut out = Self::new(tensors)?;
        out.left_canonicalize();
        Ok(out)
    }

    /// QR sweep left to right; the final site is normalized so the whole
    /// state has unit norm. Idempotent up to floating-point noise.
    pub fn left_canonicalize(&mut self) {
        let n = self.len();
        for j in 0..n - 1 {
            let (q, r) = qr_positive(&self.tensors[j].left_matrix());
            let l = self.tensors[j].left();
            self.tensors[j] = Tensor3::from_left_matrix(&q, l, 2);
            self.tensors[j + 1] = self.tensors[j + 1].mul_left(&r);
        }
        let last = &mut self.tensors[n - 1];
        let norm = last.norm_sq().sqrt();
        if norm > 0.0 {
            for v in &mut last.data {
                *v /= norm;
            }
        }
        self.center = OrthoCenter::LeftCanonicalAll;
    }

    /// Largest deviation from the left-canonical constraint over all sites
    /// (the last site is checked for unit norm instead).
    pub fn left_canonical_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for t in &self.tensors {
            let m = t.left_matrix();
            let g = m.transpose() * &m;
            let id = DMatrix::<f64>::identity(g.nrows(), g.ncols());
            worst = worst.max((g - id).abs().max());
        }
        worst
    }

    pub fn norm(&self) -> f64 {
        let mut env = DMatrix::from_element(1, 1, 1.0);
        for t in &self.tensors {
            env = transfer_left(&env, t);
        }
        env[(0, 0)].max(0.0).sqrt()
    }

    /// Dense state vector, site 0 as the most significant bit.
    pub fn to_dense(&self) -> DVector<f64> {
        let mut partial = DMatrix::from_element(1, 1, 1.0); // rows: config, cols: bond
        for t in &self.tensors {
            let slices = t.slices();
            let rows = partial.nrows();
            let mut next = DMatrix::zeros(rows * 2, t.right());
            for c in 0..rows {
                let row = partial.row(c);
                for (s, sl) in slices.iter().enumerate() {
                    next.row_mut(c * 2 + s).copy_from(&(row * sl));
                }
            }
            partial = next;
        }
        partial.column(0).into_owned()
    }

    /// ⟨ψ|W|ψ⟩ by left-to-right environment contraction.
    pub fn expectation(&self, mpo: &Mpo) -> Result<f64> {
        if mpo.len() != self.len() {
            return Err(Error::invalid("MPO and MPS lengths differ"));
        }
        let mut env = vec![DMatrix::from_element(1, 1, 1.0)];
        for (t, w) in self.tensors.iter().zip(&mpo.tensors) {
            env = env_step_left(&env, t, w);
        }
        Ok(env[0][(0, 0)])
    }
}

/// E ← Σ_s A^sᵀ E A^s.
pub(crate) fn transfer_left(env: &DMatrix<f64>, t: &Tensor3) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(t.right(), t.right());
    for s in 0..t.phys() {
        let a = t.slice(s);
        out += a.transpose() * env * &a;
    }
    out
}

/// E ← Σ_s A^s E A^sᵀ.
pub(crate) fn transfer_right(env: &DMatrix<f64>, t: &Tensor3) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(t.left(), t.left());
    for s in 0..t.phys() {
        let a = t.slice(s);
        out += &a * env * a.transpose();
    }
    out
}

/// Left MPO environment update: L'[b] = Σ_{a,s,s'} W[a,b]_{ss'} A^sᵀ L[a] A^{s'}.
pub(crate) fn env_step_left(env: &[DMatrix<f64>], t: &Tensor3, w: &MpoTensor) -> Vec<DMatrix<f64>> {
    let slices = t.slices();
    let mut out = vec![DMatrix::zeros(t.right(), t.right()); w.wr];
    let mut cache: Vec<Option<[DMatrix<f64>; 2]>> = vec![None; w.wl];
    for (a, b, op) in w.blocks() {
        let la = cache[a].get_or_insert_with(|| [&env[a] * &slices[0], &env[a] * &slices[1]]);
        for s in 0..2 {
            let mut acc: Option<DMatrix<f64>> = None;
            for (sp, la_sp) in la.iter().enumerate() {
                let c = op[s][sp];
                if c != 0.0 {
                    match acc.as_mut() {
                        Some(m) => *m += la_sp * c,
                        None => acc = Some(la_sp * c),
                    }
                }
            }
            if let Some(m) = acc {
                out[b] += slices[s].transpose() * m;
            }
        }
    }
    out
}

/// Right MPO environment update: R'[a] = Σ_{b,s,s'} W[a,b]_{ss'} A^s R[b] A^{s'}ᵀ.
pub(crate) fn env_step_right(env: &[DMatrix<f64>], t: &Tensor3, w: &MpoTensor) -> Vec<DMatrix<f64>> {
    let slices = t.slices();
    let mut out = vec![DMatrix::zeros(t.left(), t.left()); w.wl];
    let mut cache: Vec<Option<[DMatrix<f64>; 2]>> = vec![None; w.wr];
    for (a, b, op) in w.blocks() {
        let rb = cache[b].get_or_insert_with(|| [&env[b] * slices[0].transpose(), &env[b] * slices[1].transpose()]);
        for s in 0..2 {
            let mut acc: Option<DMatrix<f64>> = None;
            for (sp, rb_sp) in rb.iter().enumerate() {
                let c = op[s][sp];
                if c != 0.0 {
                    match acc.as_mut() {
                        Some(m) => *m += rb_sp * c,
                        None => acc = Some(rb_sp * c),
                    }
                }
            }
            if let Some(m) = acc {
                out[a] += &slices[s] * m;
            }
        }
    }
    out
}
