use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{transfer_left, transfer_right, FiniteMps};
use crate::error::{Error, Result};
use crate::linalg::{frob_dot, seeded_rng, sym_eigen_desc};
use crate::par;
use crate::tensor::Tensor3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    X,
    Z,
}

impl Basis {
    pub fn as_str(self) -> &'static str {
        match self {
            Basis::X => "x",
            Basis::Z => "z",
        }
    }
}

/// Orthonormal eigenbasis {λ_0, λ_1} of a single-site measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalBasis {
    pub vectors: [[f64; 2]; 2],
}

impl LocalBasis {
    pub fn new(vectors: [[f64; 2]; 2]) -> Result<Self> {
        let [a, b] = vectors;
        let na = a[0] * a[0] + a[1] * a[1];
        let nb = b[0] * b[0] + b[1] * b[1];
        let ov = a[0] * b[0] + a[1] * b[1];
        if (na - 1.0).abs() > 1e-12 || (nb - 1.0).abs() > 1e-12 || ov.abs() > 1e-12 {
            return Err(Error::invalid("local basis vectors must be orthonormal"));
        }
        Ok(LocalBasis { vectors })
    }

    pub fn of(basis: Basis) -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let vectors = match basis {
            Basis::Z => [[1.0, 0.0], [0.0, 1.0]],
            Basis::X => [[h, h], [h, -h]],
        };
        LocalBasis { vectors }
    }
}

/// One single-shot measurement of a window of L sites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub basis: Basis,
    pub outcomes: Vec<u8>,
    pub label: usize,
    pub h_source: f64,
}

impl ShotRecord {
    /// Product-state amplitudes x_j = λ_{μ_j} for each measured site.
    pub fn amplitudes(&self) -> Vec<[f64; 2]> {
        let b = LocalBasis::of(self.basis);
        self.outcomes.iter().map(|&m| b.vectors[m as usize]).collect()
    }
}

/// Single-site reduced density matrix, trace-normalized.
///
/// Both environments are contracted explicitly, so this works in any gauge.
pub fn single_site_rdm(mps: &FiniteMps, site: usize) -> Result<DMatrix<f64>> {
    if site >= mps.len() {
        return Err(Error::invalid(format!("site {site} out of range for {} sites", mps.len())));
    }
    let mut left = DMatrix::from_element(1, 1, 1.0);
    for t in &mps.tensors[..site] {
        left = transfer_left(&left, t);
    }
    let mut right = DMatrix::from_element(1, 1, 1.0);
    for t in mps.tensors[site + 1..].iter().rev() {
        right = transfer_right(&right, t);
    }
    let t = &mps.tensors[site];
    let slices = t.slices();
    let mut rho = DMatrix::zeros(2, 2);
    for s in 0..2 {
        for sp in 0..2 {
            rho[(s, sp)] = frob_dot(&left, &(&slices[s] * &right * slices[sp].transpose()));
        }
    }
    let tr = rho.trace();
    if !(tr > 0.0) {
        return Err(Error::Internal(format!("reduced density matrix has trace {tr}")));
    }
    Ok((&rho + rho.transpose()) * (0.5 / tr))
}

/// Prepared window for repeated product-state sampling.
///
/// The traced-out sites to the right of the window are summarized by their
/// environment E = Σ_k e_k v_k v_kᵀ. The window state is the mixture over k
/// of pure states with right boundary v_k, so each shot first draws k and
/// then sweeps through the window with a vector-valued carry.
#[derive(Clone, Debug)]
pub struct SamplingWindow {
    tensors: Vec<Vec<DMatrix<f64>>>,
    bases: Vec<LocalBasis>,
    env_cdf: Vec<f64>,
    env_vectors: Vec<DVector<f64>>,
}

impl SamplingWindow {
    /// Window of `bases.len()` sites starting at `start`. The MPS must be
    /// left-canonical on every site before `start`.
    pub fn prepare(mps: &FiniteMps, start: usize, bases: &[LocalBasis]) -> Result<Self> {
        let len = bases.len();
        if len == 0 || start + len > mps.len() {
            return Err(Error::invalid(format!(
                "window [{start}, {}) does not fit in {} sites",
                start + len,
                mps.len()
            )));
        }
        let mut left = DMatrix::from_element(1, 1, 1.0);
        for t in &mps.tensors[..start] {
            left = transfer_left(&left, t);
        }
        let id = DMatrix::<f64>::identity(left.nrows(), left.ncols());
        if (&left - id).abs().max() > 1e-10 {
            return Err(Error::invalid("MPS is not left-canonical left of the sampling window"));
        }

        let mut env = DMatrix::from_element(1, 1, 1.0);
        for t in mps.tensors[start + len..].iter().rev() {
            env = transfer_right(&env, t);
        }
        let (vals, vecs) = sym_eigen_desc(&env);
        let total: f64 = vals.iter().map(|v| v.max(0.0)).sum();
        if !(total > 0.0) {
            return Err(Error::Internal("right environment of the window vanished".into()));
        }
        let mut env_cdf = Vec::with_capacity(vals.len());
        let mut env_vectors = Vec::with_capacity(vals.len());
        let mut acc = 0.0;
        for (k, v) in vals.iter().enumerate() {
            let w = v.max(0.0) / total;
            if w == 0.0 {
                continue;
            }
            acc += w;
            env_cdf.push(acc);
            env_vectors.push(vecs.column(k).into_owned());
        }

        let tensors = mps.tensors[start..start + len].iter().map(Tensor3::slices).collect();
        Ok(SamplingWindow {
            tensors,
            bases: bases.to_vec(),
            env_cdf,
            env_vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// One shot. Draw order: one uniform for the environment component, then
    /// one per site from the last window site down to the first.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<u8>> {
        let u: f64 = rng.random();
        let k = pick(&self.env_cdf, u);
        let mut carry = self.env_vectors[k].clone();
        let mut out = vec![0u8; self.len()];
        for site in (0..self.len()).rev() {
            let a = &self.tensors[site];
            let b = [&a[0] * &carry, &a[1] * &carry];
            let rho = [
                [b[0].dot(&b[0]), b[0].dot(&b[1])],
                [b[1].dot(&b[0]), b[1].dot(&b[1])],
            ];
            let tr = rho[0][0] + rho[1][1];
            if !(tr > 0.0) {
                return Err(Error::Internal(format!("conditional state vanished at window site {site}")));
            }
            let basis = &self.bases[site];
            let mut probs = [0.0; 2];
            for (mu, p) in probs.iter_mut().enumerate() {
                let l = basis.vectors[mu];
                let mut v = 0.0;
                for (j, lj) in l.iter().enumerate() {
                    for (jp, ljp) in l.iter().enumerate() {
                        v += lj * rho[j][jp] * ljp;
                    }
                }
                v /= tr;
                if v < -1e-12 {
                    return Err(Error::Internal(format!("negative outcome probability {v:.3e}")));
                }
                *p = v.max(0.0);
            }
            let u: f64 = rng.random();
            let mu = if u * (probs[0] + probs[1]) < probs[0] { 0 } else { 1 };
            out[site] = mu as u8;
            let l = basis.vectors[mu];
            let next = &b[0] * l[0] + &b[1] * l[1];
            let norm = next.norm();
            carry = next / norm;
        }
        Ok(out)
    }

    /// `n` shots with per-shot substreams `seeded_rng(seed, shot)`.
    pub fn sample_many(&self, n: usize, seed: u64) -> Result<Vec<Vec<u8>>> {
        par::map_indexed(n, |shot| self.sample(&mut seeded_rng(seed, shot as u64)))
            .into_iter()
            .collect()
    }
}

fn pick(cdf: &[f64], u: f64) -> usize {
    let total = *cdf.last().expect("nonempty");
    let target = u * total;
    cdf.iter().position(|&c| target < c).unwrap_or(cdf.len() - 1)
}

/// One shot over the window starting at `start` with the given bases, drawn
/// from substream 0 of `seed`.
pub fn sample_cps(mps: &FiniteMps, start: usize, bases: &[LocalBasis], seed: u64) -> Result<Vec<u8>> {
    SamplingWindow::prepare(mps, start, bases)?.sample(&mut seeded_rng(seed, 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_up_is_deterministic() {
        let mps = FiniteMps::product_state(&[[1.0, 0.0]; 3]).unwrap();
        let bases = [LocalBasis::of(Basis::Z); 3];
        for seed in 0..20 {
            assert_eq!(sample_cps(&mps, 0, &bases, seed).unwrap(), vec![0, 0, 0]);
        }
    }

    #[test]
    fn rdm_examples() {
        let up = FiniteMps::product_state(&[[1.0, 0.0]; 2]).unwrap();
        let r = single_site_rdm(&up, 1).unwrap();
        assert!((r[(0, 0)] - 1.0).abs() < 1e-15 && r[(1, 1)].abs() < 1e-15);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let right = FiniteMps::product_state(&[[h, h]; 3]).unwrap();
        let r = single_site_rdm(&right, 2).unwrap();
        assert!(r.iter().all(|v| (v - 0.5).abs() < 1e-12));
        let ghz = FiniteMps::ghz(4).unwrap();
        let r = single_site_rdm(&ghz, 3).unwrap();
        assert!((r[(0, 0)] - 0.5).abs() < 1e-12 && r[(0, 1)].abs() < 1e-12);
        assert!(matches!(single_site_rdm(&ghz, 4), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn rejects_non_canonical_prefix() {
        let t = vec![
            Tensor3::from_fn(1, 2, 1, |_, s, _| if s == 0 { 2.0 } else { 0.0 }),
            Tensor3::from_fn(1, 2, 1, |_, s, _| if s == 0 { 1.0 } else { 0.0 }),
        ];
        let mps = FiniteMps::new(t).unwrap();
        let bases = [LocalBasis::of(Basis::Z)];
        assert!(SamplingWindow::prepare(&mps, 1, &bases).is_err());
    }

    #[test]
    fn same_seed_same_shots() {
        let mut rng = seeded_rng(4, 0);
        let mps = FiniteMps::random(6, 4, &mut rng).unwrap();
        let w = SamplingWindow::prepare(&mps, 2, &[LocalBasis::of(Basis::X); 3]).unwrap();
        assert_eq!(w.sample_many(50, 8).unwrap(), w.sample_many(50, 8).unwrap());
    }
}
