//! Translationally invariant MPS in left-canonical form.
//!
//! Conventions: `A` is a (χ, 2, χ) tensor whose (χ·2)×χ matricization is an
//! isometry. The identity channel Φ(X) = Σ_i A^i X A^iᵀ is trace preserving
//! and its fixed point is the half-infinite bond density matrix; the dual
//! channel Φ*(Y) = Σ_i A^iᵀ Y A^i fixes the identity.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{log2_exact, random_stiefel, random_unit_vector, seeded_rng, symmetrize};
use crate::manifold::{minimize, MinimizeConfig, Objective, Point};
use crate::mps::{Op2, IDENTITY};
use crate::par;
use crate::tensor::Tensor3;

/// Spectral gap below which the unit eigenvalue counts as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpsModel {
    pub chi: usize,
    pub h: f64,
    #[serde(rename = "A")]
    pub a: Tensor3,
    #[serde(rename = "V")]
    pub v: Vec<f64>,
    pub nb_prime: usize,
    #[serde(default)]
    pub e0: f64,
    #[serde(default)]
    pub burn_in_cost: f64,
    #[serde(default)]
    pub stalled: bool,
}

impl ImpsModel {
    /// χ = 1 model of a single-site product state.
    pub fn product(amplitudes: [f64; 2], nb_prime: usize) -> Self {
        ImpsModel {
            chi: 1,
            h: f64::NAN,
            a: Tensor3::from_fn(1, 2, 1, |_, s, _| amplitudes[s]),
            v: vec![1.0],
            nb_prime,
            e0: f64::NAN,
            burn_in_cost: 0.0,
            stalled: false,
        }
    }

    pub fn left_canonical_residual(&self) -> f64 {
        crate::linalg::orthonormality_residual(&self.a.left_matrix())
    }
}

/// [T_O]_{(αα'),(ββ')} = Σ_{ii'} A^i_{αβ} O_{ii'} A^{i'}_{α'β'}.
pub fn transfer_matrix(a: &Tensor3, op: &Op2) -> DMatrix<f64> {
    let chi = a.left();
    let chi_r = a.right();
    let mut t = DMatrix::zeros(chi * chi, chi_r * chi_r);
    for (i, row) in op.iter().enumerate() {
        for (ip, &o) in row.iter().enumerate() {
            if o == 0.0 {
                continue;
            }
            let x = a.slice(i);
            let y = a.slice(ip);
            t += x.kronecker(&y) * o;
        }
    }
    t
}

/// Φ(X) = Σ_i A^i X A^iᵀ.
pub fn channel(a: &Tensor3, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.left(), a.left());
    for s in 0..a.phys() {
        let ai = a.slice(s);
        out += &ai * x * ai.transpose();
    }
    out
}

/// Φ*(Y) = Σ_i A^iᵀ Y A^i.
pub fn dual_channel(a: &Tensor3, y: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.right(), a.right());
    for s in 0..a.phys() {
        let ai = a.slice(s);
        out += ai.transpose() * y * &ai;
    }
    out
}

fn vec_rm(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.transpose().as_slice())
}

fn unvec_rm(v: &DVector<f64>, n: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, v.as_slice())
}

/// Gap between the eigenvalue of T_I nearest 1 and the rest of its spectrum.
pub fn unit_eigen_gap(a: &Tensor3) -> f64 {
    let t = transfer_matrix(a, &IDENTITY);
    if t.nrows() == 1 {
        return f64::INFINITY;
    }
    let eig = t.complex_eigenvalues();
    let one = nalgebra::Complex::new(1.0, 0.0);
    let k = (0..eig.len())
        .min_by(|&x, &y| (eig[x] - one).norm().total_cmp(&(eig[y] - one).norm()))
        .expect("nonempty");
    (0..eig.len())
        .filter(|&j| j != k)
        .map(|j| (eig[j] - eig[k]).norm())
        .fold(f64::INFINITY, f64::min)
}

/// Half-infinite bond density matrix: the trace-one fixed point of Φ.
pub fn fixed_point_density(a: &Tensor3) -> Result<DMatrix<f64>> {
    let chi = a.left();
    if chi != a.right() || a.phys() != 2 {
        return Err(Error::invalid("iMPS tensor must be (χ, 2, χ)"));
    }
    if chi == 1 {
        return Ok(DMatrix::from_element(1, 1, 1.0));
    }
    let gap = unit_eigen_gap(a);
    if gap < DEGENERACY_GAP {
        return Err(Error::DegenerateTransfer { gap });
    }
    let t = transfer_matrix(a, &IDENTITY);
    let k = t - DMatrix::<f64>::identity(chi * chi, chi * chi);
    let svd = k.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let idx = svd.singular_values.imin();
    let null = vt.row(idx).transpose();
    let rho = symmetrize(&unvec_rm(&null, chi));
    let tr = rho.trace();
    if tr.abs() < 1e-14 {
        return Err(Error::Internal("fixed point has vanishing trace".into()));
    }
    Ok(rho / tr)
}

struct EnergyTerms {
    e0: f64,
    rho: DMatrix<f64>,
    ez1: DMatrix<f64>,
    m: DMatrix<f64>,
}

fn energy_terms(a: &Tensor3, h: f64) -> Result<EnergyTerms> {
    let rho = fixed_point_density(a)?;
    let a0 = a.slice(0);
    let a1 = a.slice(1);
    let ez1 = a0.transpose() * &a0 - a1.transpose() * &a1;
    let ez2 = a0.transpose() * &ez1 * &a0 - a1.transpose() * &ez1 * &a1;
    let ex = a0.transpose() * &a1 + a1.transpose() * &a0;
    let m = ez2 - ex * h;
    let e0 = (&rho * &m).trace();
    Ok(EnergyTerms { e0, rho, ez1, m })
}

/// TFIM energy density e0 = Tr[ρ (E_z − h E_x)] of a left-canonical iMPS.
pub fn energy_density(a: &Tensor3, h: f64) -> Result<f64> {
    Ok(energy_terms(a, h)?.e0)
}

/// Energy density and its Euclidean gradient with respect to the (χ·2)×χ
/// matricization of `A`, valid along directions tangent to the Stiefel
/// manifold (the fixed point's response is obtained from the adjoint
/// equation Y − Φ*(Y) + I·Tr[ρY] = M − e0·I).
pub fn energy_gradient(a: &Tensor3, h: f64) -> Result<(f64, DMatrix<f64>)> {
    let chi = a.left();
    let EnergyTerms { e0, rho, ez1, m } = energy_terms(a, h)?;
    let slices = a.slices();

    let y = if chi == 1 {
        DMatrix::zeros(1, 1)
    } else {
        let t = transfer_matrix(a, &IDENTITY);
        let n = chi * chi;
        let k = DMatrix::<f64>::identity(n, n) - t.transpose()
            + vec_rm(&DMatrix::identity(chi, chi)) * vec_rm(&rho).transpose();
        let rhs = vec_rm(&(&m - DMatrix::<f64>::identity(chi, chi) * e0));
        let sol = k
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Internal("singular adjoint system for the fixed point".into()))?;
        symmetrize(&unvec_rm(&sol, chi))
    };

    let signs = [1.0, -1.0];
    let mut p = DMatrix::zeros(chi, chi);
    for (ai, s) in slices.iter().zip(signs) {
        p += ai * &rho * ai.transpose() * s;
    }
    let mut grads = Vec::with_capacity(2);
    for (i, ai) in slices.iter().enumerate() {
        let other = &slices[1 - i];
        let g = (&ez1 * ai * &rho) * (2.0 * signs[i]) + (ai * &p) * (2.0 * signs[i]) - (other * &rho) * (2.0 * h)
            + (&y * ai * &rho) * 2.0;
        grads.push(g);
    }
    let g = Tensor3::from_slices(&grads).left_matrix();
    Ok((e0, g))
}

/// Bond state after `n` burn-in channel applications starting from V Vᵀ.
pub fn burn_in_state(a: &Tensor3, v: &[f64], n: usize) -> DMatrix<f64> {
    let v = DVector::from_column_slice(v);
    let mut u = &v * v.transpose();
    for _ in 0..n {
        u = channel(a, &u);
    }
    u
}

/// ‖Φ^n(V Vᵀ) − ρ‖_F.
pub fn burn_in_cost(a: &Tensor3, v: &[f64], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("burn-in needs at least one iteration"));
    }
    if v.len() != a.left() {
        return Err(Error::invalid("boundary vector length differs from the bond dimension"));
    }
    let rho = fixed_point_density(a)?;
    Ok((burn_in_state(a, v, n) - rho).norm())
}

fn burn_in_cost_grad(a: &Tensor3, rho: &DMatrix<f64>, v: &DMatrix<f64>, n: usize) -> (f64, DMatrix<f64>) {
    let delta = burn_in_state(a, v.as_slice(), n) - rho;
    let c = delta.norm();
    if c == 0.0 {
        return (0.0, DMatrix::zeros(v.nrows(), 1));
    }
    let mut back = delta;
    for _ in 0..n {
        back = dual_channel(a, &back);
    }
    (c, back * v * (2.0 / c))
}

#[derive(Clone, Debug)]
pub struct ImpsOptions {
    pub restarts: usize,
    pub boundary_restarts: usize,
    pub energy: MinimizeConfig,
    pub boundary: MinimizeConfig,
}

impl Default for ImpsOptions {
    fn default() -> Self {
        ImpsOptions {
            restarts: 10,
            boundary_restarts: 3,
            energy: MinimizeConfig {
                max_iters: 4000,
                grad_tol: 1e-6,
                momentum: 0.8,
                ..MinimizeConfig::default()
            },
            boundary: MinimizeConfig {
                max_iters: 2000,
                grad_tol: 1e-8,
                ..MinimizeConfig::default()
            },
        }
    }
}

struct EnergyObjective {
    h: f64,
    chi: usize,
}

impl Objective for EnergyObjective {
    fn cost(&self, xs: &[DMatrix<f64>]) -> Result<f64> {
        energy_density(&Tensor3::from_left_matrix(&xs[0], self.chi, 2), self.h)
    }
    fn gradient(&self, xs: &[DMatrix<f64>]) -> Option<Result<(f64, Vec<DMatrix<f64>>)>> {
        Some(energy_gradient(&Tensor3::from_left_matrix(&xs[0], self.chi, 2), self.h).map(|(e, g)| (e, vec![g])))
    }
}

struct BoundaryObjective<'a> {
    a: &'a Tensor3,
    rho: DMatrix<f64>,
    n: usize,
}

impl Objective for BoundaryObjective<'_> {
    fn cost(&self, xs: &[DMatrix<f64>]) -> Result<f64> {
        Ok((burn_in_state(self.a, xs[0].as_slice(), self.n) - &self.rho).norm())
    }
    fn gradient(&self, xs: &[DMatrix<f64>]) -> Option<Result<(f64, Vec<DMatrix<f64>>)>> {
        let (c, g) = burn_in_cost_grad(self.a, &self.rho, &xs[0], self.n);
        Some(Ok((c, vec![g])))
    }
}

/// Variational iMPS ground state of the TFIM at field `h`, followed by the
/// boundary vector that best reproduces the fixed point after `nb_prime`
/// burn-in steps.
pub fn optimize_imps(h: f64, chi: usize, nb_prime: usize, seed: u64, opts: &ImpsOptions) -> Result<ImpsModel> {
    if log2_exact(chi).is_none() {
        return Err(Error::invalid(format!("bond dimension {chi} is not a power of two")));
    }
    if nb_prime == 0 {
        return Err(Error::invalid("nb_prime must be at least 1"));
    }
    let obj = EnergyObjective { h, chi };
    let runs = par::map_indexed(opts.restarts.max(1), |r| {
        let mut rng = seeded_rng(seed, r as u64);
        let x0 = Point::stiefel(random_stiefel(2 * chi, chi, &mut rng));
        minimize(&obj, vec![x0], &[true], &opts.energy)
    });
    let mut best: Option<crate::manifold::MinimizeResult> = None;
    for run in runs {
        let run = match run {
            Ok(r) => r,
            Err(e) => {
                log::warn!("iMPS restart failed: {e}");
                continue;
            }
        };
        if best.as_ref().is_none_or(|b| run.cost < b.cost) {
            best = Some(run);
        }
    }
    let best = best.ok_or_else(|| Error::Internal("every iMPS restart failed".into()))?;
    let a = Tensor3::from_left_matrix(&best.points[0].value, chi, 2);
    let e0 = energy_density(&a, h)?;
    let rho = fixed_point_density(&a)?;

    let bobj = BoundaryObjective { a: &a, rho, n: nb_prime };
    let mut v_best: Option<(f64, DMatrix<f64>)> = None;
    let mut stalled = best.stalled;
    for r in 0..opts.boundary_restarts.max(1) {
        let mut rng = seeded_rng(seed, (opts.restarts + r) as u64);
        let v0 = Point::sphere(DMatrix::from_column_slice(chi, 1, random_unit_vector(chi, &mut rng).as_slice()));
        let res = minimize(&bobj, vec![v0], &[true], &opts.boundary)?;
        if v_best.as_ref().is_none_or(|(c, _)| res.cost < *c) {
            stalled = best.stalled || res.stalled;
            v_best = Some((res.cost, res.points[0].value.clone()));
        }
    }
    let (cost, v) = v_best.expect("at least one boundary restart");
    Ok(ImpsModel {
        chi,
        h,
        a,
        v: v.as_slice().to_vec(),
        nb_prime,
        e0,
        burn_in_cost: cost,
        stalled,
    })
}

/// Exact TFIM ground-state energy density in the thermodynamic limit,
/// e(h) = −(1/2π) ∫ dk √(1 + h² + 2h cos k), by composite Simpson.
pub fn exact_energy_density(h: f64) -> f64 {
    let n = 20000;
    let f = |k: f64| (1.0 + h * h + 2.0 * h * k.cos()).max(0.0).sqrt();
    let a = -std::f64::consts::PI;
    let step = 2.0 * std::f64::consts::PI / n as f64;
    let mut sum = f(a) + f(-a);
    for j in 1..n {
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + j as f64 * step);
    }
    -(sum * step / 3.0) / (2.0 * std::f64::consts::PI)
}
