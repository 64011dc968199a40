//! Unitary embeddings of the discriminator tensors, bond-gauge
//! preconditioning, and greedy beam-search synthesis into CNOT + Ry circuits.

use std::collections::HashSet;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{ParamCircuit, Role};
use crate::discriminator::DiscriminatorTensors;
use crate::error::{Error, Result};
use crate::lbfgs::{lbfgs, LbfgsConfig};
use crate::linalg::{frob_dot, hamming_matrix, log2_exact, orthonormality_residual, random_stiefel, seeded_rng};
use crate::manifold::{minimize, MinimizeConfig, Objective, Point};
use crate::par;

/// Columns of a unitary that a tensor pins down.
///
/// When `transposed` is set the target constrains the columns of Uᵀ, i.e.
/// rows of the unitary the tensor is embedded in; the synthesized circuit is
/// transposed back at the end.
#[derive(Clone, Debug, PartialEq)]
pub struct IsometryTarget {
    pub n_qubits: usize,
    pub target: DMatrix<f64>,
    pub defined_columns: Vec<usize>,
    pub transposed: bool,
    pub role: Role,
}

impl IsometryTarget {
    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// Identity columns at the defined positions.
    pub fn inputs(&self) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(self.dim(), self.defined_columns.len());
        for (k, &c) in self.defined_columns.iter().enumerate() {
            x[(c, k)] = 1.0;
        }
        x
    }

    /// min over s ∈ {±1} of ‖s·U|_defined − target‖²_F for the circuit's
    /// frame (before any transpose back).
    pub fn distance(&self, c: &ParamCircuit, theta: &[f64]) -> f64 {
        let mut x = self.inputs();
        c.apply_rows(theta, &mut x);
        let k = self.defined_columns.len() as f64;
        k + self.target.norm_squared() - 2.0 * frob_dot(&x, &self.target).abs()
    }

    fn cost_grad(&self, c: &ParamCircuit, x0: &DMatrix<f64>, theta: &[f64]) -> (f64, Vec<f64>) {
        let mut x = x0.clone();
        c.apply_rows(theta, &mut x);
        let inner = frob_dot(&x, &self.target);
        let k = self.defined_columns.len() as f64;
        let f = k + self.target.norm_squared() - 2.0 * inner.abs();
        let s = if inner >= 0.0 { -2.0 } else { 2.0 };
        let g = c.pullback(theta, x0, &self.target).into_iter().map(|v| s * v).collect();
        (f, g)
    }

    /// A dense orthogonal matrix satisfying the target exactly, in the
    /// unitary's own frame.
    pub fn completion(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut u = DMatrix::zeros(n, n);
        let mut basis: Vec<nalgebra::DVector<f64>> = self.target.column_iter().map(|c| c.into_owned()).collect();
        let mut free = (0..n).filter(|c| !self.defined_columns.contains(c));
        for (k, &c) in self.defined_columns.iter().enumerate() {
            u.set_column(c, &basis[k]);
        }
        for e in 0..n {
            if basis.len() == n {
                break;
            }
            let mut v = nalgebra::DVector::zeros(n);
            v[e] = 1.0;
            for _ in 0..2 {
                for b in &basis {
                    let p = b.dot(&v);
                    v -= b * p;
                }
            }
            let nv = v.norm();
            if nv > 1e-6 {
                v /= nv;
                let col = free.next().expect("free column available");
                u.set_column(col, &v);
                basis.push(v);
            }
        }
        if self.transposed {
            u.transpose()
        } else {
            u
        }
    }
}

/// Builds the target for one tensor. Expected inputs (storage layouts of
/// [`DiscriminatorTensors`]): R as χ×1, G and D as (2χ)×χ, C as χ×N_C.
///
/// - R: column 0 of U_R is R.
/// - G: ⟨α i|U_G|β 0⟩ = G^i_{αβ}.
/// - D: ⟨α 0|U_D|β i⟩ = D^i_{αβ}, so the rows with physical output 0 are fixed.
/// - C: ⟨ℓ|U_C|α 0⟩ = C_{αℓ} with the class register on the lowest qubits
///   and every other output qubit in |0⟩.
pub fn embed_isometry(t: &DMatrix<f64>, role: Role) -> Result<IsometryTarget> {
    let res = orthonormality_residual(t);
    if res > 1e-8 {
        return Err(Error::invalid(format!("{} tensor is not an isometry (residual {res:.2e})", role.as_str())));
    }
    let rows = t.nrows();
    match role {
        Role::R => {
            let n = log2_exact(rows).ok_or_else(|| Error::invalid("R length must be a power of two"))?;
            if t.ncols() != 1 {
                return Err(Error::invalid("R must be a single column"));
            }
            Ok(IsometryTarget {
                n_qubits: n,
                target: t.clone(),
                defined_columns: vec![0],
                transposed: false,
                role,
            })
        }
        Role::G | Role::D => {
            let chi = t.ncols();
            let n = log2_exact(chi).ok_or_else(|| Error::invalid("bond dimension must be a power of two"))?;
            if rows != 2 * chi {
                return Err(Error::invalid("G and D must be (2χ)×χ"));
            }
            Ok(IsometryTarget {
                n_qubits: n + 1,
                target: t.clone(),
                defined_columns: (0..chi).map(|b| 2 * b).collect(),
                transposed: role == Role::D,
                role,
            })
        }
        Role::C => {
            let chi = rows;
            let nc = t.ncols();
            let n = log2_exact(chi).ok_or_else(|| Error::invalid("bond dimension must be a power of two"))?;
            if log2_exact(nc).is_none() || nc > 2 * chi {
                return Err(Error::invalid("class count must be a power of two not above 2χ"));
            }
            let mut target = DMatrix::zeros(2 * chi, nc);
            for a in 0..chi {
                for l in 0..nc {
                    target[(2 * a, l)] = t[(a, l)];
                }
            }
            Ok(IsometryTarget {
                n_qubits: n + 1,
                target,
                defined_columns: (0..nc).collect(),
                transposed: true,
                role,
            })
        }
    }
}

/// Targets for all four tensors of a discriminator, in the order R, G, D, C.
pub fn embed_model(model: &DiscriminatorTensors) -> Result<[IsometryTarget; 4]> {
    let r = DMatrix::from_column_slice(model.hyper.chi, 1, model.r.as_slice());
    Ok([
        embed_isometry(&r, Role::R)?,
        embed_isometry(&model.g, Role::G)?,
        embed_isometry(&model.d, Role::D)?,
        embed_isometry(&model.c, Role::C)?,
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompileConfig {
    pub tol: f64,
    pub beam: usize,
    pub max_cnots: usize,
    /// Allowed (control, target) pairs; all ordered pairs when absent.
    pub topology: Option<Vec<(usize, usize)>>,
    /// Random angle initializations per candidate, on top of the warm start.
    pub restarts: usize,
    pub inner_iters: usize,
    pub seed: u64,
}

impl Default for CompileConfig {
    fn default() -> Self {
        CompileConfig {
            tol: 4e-4,
            beam: 5,
            max_cnots: 100,
            topology: None,
            restarts: 3,
            inner_iters: 300,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CompileOutcome {
    /// Circuit for the unitary itself (already transposed back if needed).
    pub circuit: ParamCircuit,
    pub distance: f64,
    /// Best distance seen after each depth, starting with the Ry layer.
    pub trace: Vec<f64>,
    pub candidates_evaluated: usize,
}

fn optimize_angles(target: &IsometryTarget, c: &ParamCircuit, cfg: &CompileConfig, key: u64) -> (Vec<f64>, f64) {
    let x0 = target.inputs();
    let lcfg = LbfgsConfig {
        max_iters: cfg.inner_iters,
        grad_tol: 1e-10,
        target: 0.5 * cfg.tol,
        ..LbfgsConfig::default()
    };
    let mut rng = seeded_rng(cfg.seed, key);
    let mut best = (c.params.clone(), target.distance(c, &c.params));
    for k in 0..=cfg.restarts {
        if best.1 <= 0.5 * cfg.tol {
            break;
        }
        // The plain warm start (new angles zero) is a critical point whenever
        // the parent sat at one, so the first restart keeps the parent's
        // angles and draws only the two newest ones.
        let start: Vec<f64> = match k {
            0 => c.params.clone(),
            1 => {
                let mut p = c.params.clone();
                let m = p.len().saturating_sub(2);
                p[m..].iter_mut().for_each(|v| *v = rng.random_range(-PI..PI));
                p
            }
            _ => (0..c.params.len()).map(|_| rng.random_range(-PI..PI)).collect(),
        };
        let run = lbfgs(|th| Ok(target.cost_grad(c, &x0, th)), &start, &lcfg);
        if let Ok(r) = run {
            let d = target.distance(c, &r.x);
            if d < best.1 {
                best = (r.x, d);
            }
        }
    }
    best
}

fn gate_key(c: &ParamCircuit) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    c.gates.hash(&mut h);
    h.finish()
}

fn finish(target: &IsometryTarget, mut c: ParamCircuit, d: f64) -> ParamCircuit {
    if target.transposed {
        c = c.transposed();
    }
    c.role = Some(target.role);
    c.tol_achieved = Some(d);
    c
}

/// Distances closer than this are treated as ties when ranking children.
const TIE_RESOLUTION: f64 = 1e-9;
const TIE_STREAM: u64 = 1 << 32;

/// Greedy beam search: start from one Ry per qubit, repeatedly extend each
/// kept circuit by a CNOT plus Ry on the two touched qubits, optimize all
/// angles, keep the best `beam`, and stop at the first depth that reaches
/// `tol`.
pub fn greedy_compile(target: &IsometryTarget, cfg: &CompileConfig) -> Result<CompileOutcome> {
    if !(cfg.tol > 0.0) || cfg.beam == 0 {
        return Err(Error::invalid("tolerance must be positive and beam at least 1"));
    }
    let n = target.n_qubits;
    let pairs: Vec<(usize, usize)> = match &cfg.topology {
        Some(p) => {
            if p.iter().any(|&(c, t)| c >= n || t >= n || c == t) {
                return Err(Error::invalid("topology contains an invalid qubit pair"));
            }
            p.clone()
        }
        None => (0..n).flat_map(|c| (0..n).filter(move |&t| t != c).map(move |t| (c, t))).collect(),
    };

    let root = ParamCircuit::ry_layer(n);
    let (params, d0) = optimize_angles(target, &root, cfg, gate_key(&root));
    let mut beam = vec![(ParamCircuit { params, ..root }, d0)];
    let mut best = beam[0].clone();
    let mut trace = vec![d0];
    let mut evaluated = 1;
    let mut seen: HashSet<Vec<crate::circuit::Gate>> = HashSet::new();

    while best.1 > cfg.tol {
        let depth = beam[0].0.cnot_count();
        if depth >= cfg.max_cnots || pairs.is_empty() {
            return Err(Error::BudgetExceeded {
                cnots: depth,
                best_distance: best.1,
            });
        }
        let mut children = Vec::new();
        for (parent, _) in &beam {
            for &(c, t) in &pairs {
                let child = parent.extended(c, t);
                if seen.insert(child.gates.clone()) {
                    children.push(child);
                }
            }
        }
        evaluated += children.len();
        let scored: Vec<(ParamCircuit, f64)> = par::map_slice(&children, |child| {
            let (p, d) = optimize_angles(target, child, cfg, gate_key(child));
            (ParamCircuit { params: p, ..child.clone() }, d)
        });
        // Children whose distances agree to TIE_RESOLUTION are ordered by a
        // seeded random key. Generation order would always favour the first
        // qubit pair and, at a stationary point where every child ties, grow
        // a chain of CNOTs on qubits 0 and 1 only.
        let mut rng = seeded_rng(cfg.seed, TIE_STREAM + depth as u64);
        let keyed: Vec<(i64, u64)> = scored.iter().map(|(_, d)| ((d / TIE_RESOLUTION).round() as i64, rng.random())).collect();
        let mut order: Vec<usize> = (0..scored.len()).collect();
        order.sort_by_key(|&i| keyed[i]);
        // Circuits at the same distance are usually the same function, so
        // distinct distances fill the beam first.
        let mut kept: Vec<usize> = Vec::with_capacity(cfg.beam);
        let mut spare: Vec<usize> = Vec::new();
        for &i in &order {
            if kept.iter().any(|&j| keyed[j].0 == keyed[i].0) {
                spare.push(i);
            } else if kept.len() < cfg.beam {
                kept.push(i);
            }
        }
        kept.extend(spare.into_iter().take(cfg.beam - kept.len()));
        beam = kept.iter().map(|&i| scored[i].clone()).collect();
        if beam[0].1 < best.1 {
            best = beam[0].clone();
        }
        trace.push(best.1);
        log::debug!("{} depth {}: best distance {:.3e}", target.role.as_str(), depth + 1, best.1);
    }
    let d = best.1;
    Ok(CompileOutcome {
        circuit: finish(target, best.0, d),
        distance: d,
        trace,
        candidates_evaluated: evaluated,
    })
}

/// Compiles R, G, D, C in that order.
pub fn compile_model(model: &DiscriminatorTensors, cfg: &CompileConfig) -> Result<[CompileOutcome; 4]> {
    let targets = embed_model(model)?;
    let mut out = Vec::with_capacity(4);
    for (k, t) in targets.iter().enumerate() {
        let c = CompileConfig {
            seed: cfg.seed.wrapping_add(k as u64),
            ..cfg.clone()
        };
        out.push(greedy_compile(t, &c)?);
    }
    Ok(out.try_into().expect("four outcomes"))
}

/// Σ_{αβ} Δ_{αβ} Σ_i (W M^i Wᵀ)²_{αβ} over all matrices in `mats`.
pub fn gauge_cost(w: &DMatrix<f64>, mats: &[DMatrix<f64>]) -> f64 {
    let delta = hamming_matrix(w.nrows());
    mats.iter()
        .map(|m| {
            let t = w * m * w.transpose();
            t.component_mul(&t).component_mul(&delta).sum()
        })
        .sum()
}

struct GaugeObjective {
    mats: Vec<DMatrix<f64>>,
    delta: DMatrix<f64>,
}

impl Objective for GaugeObjective {
    fn cost(&self, xs: &[DMatrix<f64>]) -> Result<f64> {
        Ok(gauge_cost(&xs[0], &self.mats))
    }

    fn gradient(&self, xs: &[DMatrix<f64>]) -> Option<Result<(f64, Vec<DMatrix<f64>>)>> {
        let w = &xs[0];
        let mut f = 0.0;
        let mut g = DMatrix::zeros(w.nrows(), w.ncols());
        for m in &self.mats {
            let t = w * m * w.transpose();
            let e = t.component_mul(&self.delta) * 2.0;
            f += 0.5 * e.component_mul(&t).sum();
            g += &e * w * m.transpose() + e.transpose() * w * m;
        }
        Some(Ok((f, vec![g])))
    }
}

#[derive(Clone, Debug)]
pub struct GaugeOutcome {
    pub model: DiscriminatorTensors,
    pub w: DMatrix<f64>,
    pub cost_before: f64,
    pub cost_after: f64,
    pub stalled: bool,
}

/// Rotates the bond basis to make G and D as close to diagonal as possible
/// under the Hamming-distance penalty, then applies the rotation to all four
/// tensors. Starts from the identity plus `restarts` random orthogonal
/// matrices.
pub fn diagonal_gauge(model: &DiscriminatorTensors, restarts: usize, seed: u64) -> Result<GaugeOutcome> {
    let chi = model.hyper.chi;
    let mut mats = model.g_slices().to_vec();
    mats.extend(model.d_slices());
    let obj = GaugeObjective {
        mats,
        delta: hamming_matrix(chi),
    };
    let cfg = MinimizeConfig {
        max_iters: 1000,
        grad_tol: 1e-9,
        momentum: 0.8,
        ..MinimizeConfig::default()
    };
    let eye = DMatrix::identity(chi, chi);
    let cost_before = gauge_cost(&eye, &obj.mats);
    let starts: Vec<DMatrix<f64>> = (0..=restarts)
        .map(|k| {
            if k == 0 {
                eye.clone()
            } else {
                random_stiefel(chi, chi, &mut seeded_rng(seed, k as u64))
            }
        })
        .collect();
    let runs = par::map_slice(&starts, |w0| minimize(&obj, vec![Point::stiefel(w0.clone())], &[true], &cfg));
    let mut best: Option<(DMatrix<f64>, f64, bool)> = None;
    for r in runs {
        let r = r?;
        if best.as_ref().is_none_or(|b| r.cost < b.1) {
            best = Some((r.points[0].value.clone(), r.cost, r.stalled));
        }
    }
    let (w, cost_after, stalled) = best.expect("at least one start");
    Ok(GaugeOutcome {
        model: model.gauge_transform(&w),
        w,
        cost_before,
        cost_after,
        stalled,
    })
}
