//! Density-matrix execution of compiled discriminator circuits without
//! postselection, angle fine-tuning, and inference on product and iMPS
//! inputs.
//!
//! Register layout: every block unitary acts on (bond qubits, one physical
//! qubit) with the physical qubit least significant, except U_R which acts on
//! the bond qubits alone. The class register is the lowest log₂N_C qubits of
//! U_C's output.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{circuit_unitary, ParamCircuit, Role};
use crate::compiler::embed_isometry;
use crate::discriminator::{confusion_matrix, f1_scores, ClassDistribution, DiscriminatorTensors, Hyper, ProductSample};
use crate::error::{Error, Result};
use crate::imps::ImpsModel;
use crate::lbfgs::{lbfgs, LbfgsConfig};
use crate::linalg::seeded_rng;
use crate::par;

/// Trace deviation that signals a broken channel.
pub const TRACE_TOL: f64 = 1e-8;
/// Default cap on the joint register used by entangled inference.
pub const DEFAULT_QUBIT_CAP: usize = 14;

/// Hinge-style cost max(ρ_wrong − ρ_right + λ, 0)^η.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginCost {
    pub lambda: f64,
    pub eta: f64,
}

impl Default for MarginCost {
    fn default() -> Self {
        MarginCost { lambda: 0.9, eta: 2.0 }
    }
}

impl MarginCost {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) || !(self.eta > 0.0) {
            return Err(Error::invalid("lambda must lie in (0, 1] and eta must be positive"));
        }
        Ok(())
    }

    /// Cost and its derivative with respect to each ρ_ℓℓ.
    pub fn eval(&self, diag: &[f64], label: usize) -> (f64, Vec<f64>) {
        let wrong = (0..diag.len())
            .filter(|&l| l != label)
            .fold(None, |best: Option<usize>, l| match best {
                Some(b) if diag[b] >= diag[l] => Some(b),
                _ => Some(l),
            });
        let mut d = vec![0.0; diag.len()];
        let Some(w) = wrong else { return (0.0, d) };
        let m = diag[w] - diag[label] + self.lambda;
        if m <= 0.0 {
            return (0.0, d);
        }
        let slope = self.eta * m.powf(self.eta - 1.0);
        d[w] = slope;
        d[label] = -slope;
        (m.powf(self.eta), d)
    }
}

/// Compiled circuits and their concatenated angles
/// θ = (θ_R, θ_G, θ_D for sites 0..L−1, θ_C).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompiledModel {
    pub chi: usize,
    pub nb: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub nc: usize,
    #[serde(rename = "R")]
    pub r: ParamCircuit,
    #[serde(rename = "G")]
    pub g: ParamCircuit,
    #[serde(rename = "D")]
    pub d: ParamCircuit,
    #[serde(rename = "C")]
    pub c: ParamCircuit,
    pub theta: Vec<f64>,
}

/// Dense block unitaries at a given θ.
#[derive(Clone, Debug)]
pub struct BlockUnitaries {
    pub r: DMatrix<f64>,
    pub g: DMatrix<f64>,
    /// One U_D per site.
    pub d: Vec<DMatrix<f64>>,
    pub c: DMatrix<f64>,
}

impl CompiledModel {
    /// Takes the four circuits (their own params become the warm start; the
    /// D angles are copied to every site).
    pub fn from_circuits(hyper: Hyper, circuits: [ParamCircuit; 4]) -> Result<Self> {
        hyper.validate()?;
        let [r, g, d, c] = circuits;
        let nq = crate::linalg::log2_exact(hyper.chi).expect("validated");
        if r.n_qubits != nq || g.n_qubits != nq + 1 || d.n_qubits != nq + 1 || c.n_qubits != nq + 1 {
            return Err(Error::invalid("circuit widths do not match the bond dimension"));
        }
        for x in [&r, &g, &d, &c] {
            x.validate()?;
        }
        let mut theta = r.params.clone();
        theta.extend(&g.params);
        for _ in 0..hyper.l {
            theta.extend(&d.params);
        }
        theta.extend(&c.params);
        Ok(CompiledModel {
            chi: hyper.chi,
            nb: hyper.nb,
            l: hyper.l,
            nc: hyper.nc,
            r,
            g,
            d,
            c,
            theta,
        })
    }

    pub fn hyper(&self) -> Hyper {
        Hyper {
            chi: self.chi,
            nb: self.nb,
            l: self.l,
            nc: self.nc,
        }
    }

    /// Offsets of θ_R, θ_G, θ_{D,0}, θ_C.
    fn offsets(&self) -> (usize, usize, usize, usize) {
        let r = 0;
        let g = r + self.r.params.len();
        let d = g + self.g.params.len();
        let c = d + self.l * self.d.params.len();
        (r, g, d, c)
    }

    pub fn n_params(&self) -> usize {
        self.offsets().3 + self.c.params.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper().validate()?;
        if self.theta.len() != self.n_params() {
            return Err(Error::invalid("parameter vector length does not match the circuits"));
        }
        Ok(())
    }

    pub fn theta_d(&self, site: usize) -> &[f64] {
        let (_, _, d, _) = self.offsets();
        let k = self.d.params.len();
        &self.theta[d + site * k..d + (site + 1) * k]
    }

    pub fn unitaries(&self, theta: &[f64]) -> Result<BlockUnitaries> {
        let (or, og, od, oc) = self.offsets();
        let k = self.d.params.len();
        Ok(BlockUnitaries {
            r: circuit_unitary(&self.r, &theta[or..og])?,
            g: circuit_unitary(&self.g, &theta[og..od])?,
            d: (0..self.l)
                .map(|s| circuit_unitary(&self.d, &theta[od + s * k..od + (s + 1) * k]))
                .collect::<Result<_>>()?,
            c: circuit_unitary(&self.c, &theta[oc..])?,
        })
    }

    /// Tensors the circuits implement under postselection (site 0 angles for
    /// D). Entries come straight from the dense unitaries, so they are only
    /// as isometric as the compilation tolerance allows.
    pub fn postselected_tensors(&self) -> Result<DiscriminatorTensors> {
        let u = self.unitaries(&self.theta)?;
        let chi = self.chi;
        let r = u.r.column(0).into_owned();
        let g = DMatrix::from_fn(2 * chi, chi, |row, b| u.g[(row, 2 * b)]);
        // d[(β·2+i), α] = D^i_{αβ} = U_D[(α,0),(β,i)]
        let d = DMatrix::from_fn(2 * chi, chi, |row, a| u.d[0][(2 * a, row)]);
        let c = DMatrix::from_fn(chi, self.nc, |a, l| u.c[(l, 2 * a)]);
        DiscriminatorTensors::new(self.hyper(), r, g, d, c)
    }
}

/// Σ_p S[(α,p),(α',p)].
fn trace_lsb(s: &DMatrix<f64>) -> DMatrix<f64> {
    let n = s.nrows() / 2;
    DMatrix::from_fn(n, n, |a, b| s[(2 * a, 2 * b)] + s[(2 * a + 1, 2 * b + 1)])
}

/// Λ ⊗ I₂.
fn kron_i2(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |r, c| if r % 2 == c % 2 { l[(r / 2, c / 2)] } else { 0.0 })
}

/// I_χ ⊗ x as a (2χ)×χ matrix.
fn embed_input(chi: usize, x: &[f64; 2]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2 * chi, chi);
    for b in 0..chi {
        m[(2 * b, b)] = x[0];
        m[(2 * b + 1, b)] = x[1];
    }
    m
}

fn even_columns(u: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(u.nrows(), u.ncols() / 2, |r, c| u[(r, 2 * c)])
}

fn readout(m: &DMatrix<f64>, v: &DMatrix<f64>, nc: usize) -> Vec<f64> {
    let p = m * v * m.transpose();
    let mut diag = vec![0.0; nc];
    for r in 0..p.nrows() {
        diag[r % nc] += p[(r, r)];
    }
    diag
}

fn check_trace(diag: &[f64]) -> Result<()> {
    let t: f64 = diag.iter().sum();
    if (t - 1.0).abs() > TRACE_TOL {
        return Err(Error::ChannelIntegrity {
            trace: t,
            deviation: (t - 1.0).abs(),
        });
    }
    Ok(())
}

struct Forward {
    g_cols: DMatrix<f64>,
    c_cols: DMatrix<f64>,
    burn: Vec<DMatrix<f64>>,
}

impl Forward {
    fn new(u: &BlockUnitaries, nb: usize) -> Self {
        let g_cols = even_columns(&u.g);
        let r = u.r.column(0);
        let mut burn = vec![r * r.transpose()];
        for _ in 0..nb {
            let v = burn.last().expect("nonempty");
            burn.push(trace_lsb(&(&g_cols * v * g_cols.transpose())));
        }
        Forward {
            g_cols,
            c_cols: even_columns(&u.c),
            burn,
        }
    }

    fn prior(&self) -> &DMatrix<f64> {
        self.burn.last().expect("nonempty")
    }
}

fn condition(u: &BlockUnitaries, v: &DMatrix<f64>, x: &[[f64; 2]]) -> DMatrix<f64> {
    let chi = v.nrows();
    let mut v = v.clone();
    for s in (0..x.len()).rev() {
        let y = &u.d[s] * embed_input(chi, &x[s]);
        v = trace_lsb(&(&y * v * y.transpose()));
    }
    v
}

fn check_input(model: &CompiledModel, x: &[[f64; 2]]) -> Result<()> {
    if x.len() != model.l {
        return Err(Error::invalid(format!("sample has {} sites, model expects {}", x.len(), model.l)));
    }
    Ok(())
}

/// Class-register diagonal for one product input.
pub fn infer_product(model: &CompiledModel, x: &[[f64; 2]]) -> Result<ClassDistribution> {
    model.validate()?;
    check_input(model, x)?;
    let u = model.unitaries(&model.theta)?;
    let fw = Forward::new(&u, model.nb);
    let diag = readout(&fw.c_cols, &condition(&u, fw.prior(), x), model.nc);
    check_trace(&diag)?;
    Ok(ClassDistribution { diag, normalized: true })
}

/// Predicted labels and P_SS = ρ_{ℓ_m ℓ_m} for every sample.
pub fn evaluate(model: &CompiledModel, samples: &[ProductSample]) -> Result<(Vec<usize>, Vec<f64>)> {
    model.validate()?;
    let u = model.unitaries(&model.theta)?;
    let fw = Forward::new(&u, model.nb);
    let out: Vec<Result<(usize, f64)>> = par::map_indexed(samples.len(), |m| {
        let s = &samples[m];
        check_input(model, &s.x)?;
        let diag = readout(&fw.c_cols, &condition(&u, fw.prior(), &s.x), model.nc);
        check_trace(&diag)?;
        let dist = ClassDistribution { diag, normalized: true };
        Ok((dist.label(), dist.diag[s.label]))
    });
    let mut labels = Vec::with_capacity(samples.len());
    let mut pss = Vec::with_capacity(samples.len());
    for r in out {
        let (l, p) = r?;
        labels.push(l);
        pss.push(p);
    }
    Ok((labels, pss))
}

pub fn f1_on(model: &CompiledModel, samples: &[ProductSample]) -> Result<f64> {
    let (pred, _) = evaluate(model, samples)?;
    let truth: Vec<usize> = samples.iter().map(|s| s.label).collect();
    Ok(f1_scores(&confusion_matrix(&truth, &pred, model.nc)).average)
}

/// Mean margin cost over the batch at angles `theta`.
pub fn cost_no_postselection(model: &CompiledModel, theta: &[f64], batch: &[ProductSample], cost: &MarginCost) -> Result<f64> {
    Ok(cost_and_gradient(model, theta, batch, cost, false)?.0)
}

/// Mean margin cost and, when `with_grad`, its gradient with respect to θ.
pub fn cost_and_gradient(model: &CompiledModel, theta: &[f64], batch: &[ProductSample], cost: &MarginCost, with_grad: bool) -> Result<(f64, Vec<f64>)> {
    cost.validate()?;
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if theta.len() != model.n_params() {
        return Err(Error::invalid("parameter vector length does not match the circuits"));
    }
    let chi = model.chi;
    let nc = model.nc;
    let l = model.l;
    let u = model.unitaries(theta)?;
    let fw = Forward::new(&u, model.nb);
    let v0 = fw.prior();

    // packed per-sample terms: [cost, Λ_V (χ²), dU_D per site (L·4χ²), dM (2χ·χ)]
    let cc = chi * chi;
    let dd = 4 * cc;
    let len = if with_grad { 1 + cc + l * dd + 2 * cc } else { 1 };
    let acc = par::chunked_sum(batch.len(), |m| -> Result<Vec<f64>> {
        let s = &batch[m];
        check_input(model, &s.x)?;
        let mut states = Vec::with_capacity(l);
        let mut ys = Vec::with_capacity(l);
        let mut v = v0.clone();
        for site in (0..l).rev() {
            let xin = embed_input(chi, &s.x[site]);
            let y = &u.d[site] * &xin;
            states.push((site, v.clone(), xin));
            v = trace_lsb(&(&y * &v * y.transpose()));
            ys.push(y);
        }
        let diag = readout(&fw.c_cols, &v, nc);
        check_trace(&diag)?;
        let (c, dc) = cost.eval(&diag, s.label);
        let mut out = vec![0.0; len];
        out[0] = c;
        if !with_grad || c == 0.0 {
            return Ok(out);
        }
        let gdiag = DMatrix::from_fn(2 * chi, 2 * chi, |r, q| if r == q { dc[r % nc] } else { 0.0 });
        let dm = &gdiag * &fw.c_cols * &v * 2.0;
        let mut lam = fw.c_cols.transpose() * &gdiag * &fw.c_cols;
        for k in (0..ys.len()).rev() {
            let (site, vin, xin) = &states[k];
            let y = &ys[k];
            let lt = kron_i2(&lam);
            let dy = &lt * y * vin * 2.0;
            let du = dy * xin.transpose();
            let off = 1 + cc + site * dd;
            out[off..off + dd].copy_from_slice(du.as_slice());
            lam = y.transpose() * lt * y;
        }
        out[1..1 + cc].copy_from_slice(lam.as_slice());
        let off = 1 + cc + l * dd;
        out[off..off + 2 * cc].copy_from_slice(dm.as_slice());
        Ok(out)
    })?
    .expect("nonempty batch");

    let scale = 1.0 / batch.len() as f64;
    let f = acc[0] * scale;
    if !with_grad {
        return Ok((f, Vec::new()));
    }
    let mut lam = DMatrix::from_column_slice(chi, chi, &acc[1..1 + cc]) * scale;
    let mut dg = DMatrix::zeros(2 * chi, chi);
    for n in (0..model.nb).rev() {
        let lt = kron_i2(&lam);
        dg += &lt * &fw.g_cols * &fw.burn[n] * 2.0;
        lam = fw.g_cols.transpose() * lt * &fw.g_cols;
    }
    let r0 = u.r.column(0).into_owned();
    let dr = &lam * &r0 * 2.0;

    let (or, og, od, oc) = model.offsets();
    let k = model.d.params.len();
    let mut grad = vec![0.0; theta.len()];
    let mut e0 = DMatrix::zeros(chi, 1);
    e0[(0, 0)] = 1.0;
    let gr = model.r.pullback(&theta[or..og], &e0, &DMatrix::from_column_slice(chi, 1, dr.as_slice()));
    grad[or..og].copy_from_slice(&gr);
    let evens = DMatrix::from_fn(2 * chi, chi, |r, c| if r == 2 * c { 1.0 } else { 0.0 });
    let gg = model.g.pullback(&theta[og..od], &evens, &dg);
    grad[og..od].copy_from_slice(&gg);
    let eye = DMatrix::identity(2 * chi, 2 * chi);
    for site in 0..l {
        let off = 1 + cc + site * dd;
        let du = DMatrix::from_column_slice(2 * chi, 2 * chi, &acc[off..off + dd]) * scale;
        let gd = model.d.pullback(&theta[od + site * k..od + (site + 1) * k], &eye, &du);
        grad[od + site * k..od + (site + 1) * k].copy_from_slice(&gd);
    }
    let off = 1 + cc + l * dd;
    let dm = DMatrix::from_column_slice(2 * chi, chi, &acc[off..off + 2 * cc]) * scale;
    let gc = model.c.pullback(&theta[oc..], &evens, &dm);
    grad[oc..].copy_from_slice(&gc);
    Ok((f, grad))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub cost: MarginCost,
    pub epochs: usize,
    /// Quasi-Newton iterations per epoch.
    pub iters_per_epoch: usize,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            cost: MarginCost::default(),
            epochs: 30,
            iters_per_epoch: 20,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FinetuneOutcome {
    pub model: CompiledModel,
    pub f1_before: f64,
    pub f1_after: f64,
    /// Training cost at the start of every epoch plus the final cost.
    pub epoch_costs: Vec<f64>,
    pub restarts: usize,
}

/// L-BFGS over all circuit angles on the margin cost.
pub fn finetune_parameters(model: &CompiledModel, batch: &[ProductSample], cfg: &FinetuneConfig) -> Result<FinetuneOutcome> {
    model.validate()?;
    let f1_before = f1_on(model, batch)?;
    let lcfg = LbfgsConfig {
        max_iters: cfg.epochs * cfg.iters_per_epoch,
        grad_tol: 1e-9,
        init_step: 0.1,
        ..LbfgsConfig::default()
    };
    let r = lbfgs(|th| cost_and_gradient(model, th, batch, &cfg.cost, true), &model.theta, &lcfg)?;
    let mut epoch_costs: Vec<f64> = r.trace.iter().step_by(cfg.iters_per_epoch.max(1)).copied().collect();
    epoch_costs.push(r.f);
    let mut out = model.clone();
    out.theta = r.x;
    let f1_after = f1_on(&out, batch)?;
    Ok(FinetuneOutcome {
        model: out,
        f1_before,
        f1_after,
        epoch_costs,
        restarts: r.restarts,
    })
}

/// Dense generator unitaries of a test state: U_R' on the bond qubits and
/// U_G' on (bond, physical).
#[derive(Clone, Debug)]
pub struct TestState {
    pub n_bond: usize,
    pub r: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub nb_prime: usize,
}

impl TestState {
    /// Exact unitary completions of the iMPS boundary vector and tensor.
    pub fn from_imps(m: &ImpsModel) -> Result<Self> {
        let v = DVector::from_column_slice(&m.v);
        let v = &v / v.norm();
        let tr = embed_isometry(&DMatrix::from_column_slice(m.chi, 1, v.as_slice()), Role::R)?;
        let tg = embed_isometry(&m.a.left_matrix(), Role::G)?;
        Ok(TestState {
            n_bond: tr.n_qubits,
            r: tr.completion(),
            g: tg.completion(),
            nb_prime: m.nb_prime,
        })
    }

    pub fn from_circuits(r: &ParamCircuit, g: &ParamCircuit, nb_prime: usize) -> Result<Self> {
        if g.n_qubits != r.n_qubits + 1 {
            return Err(Error::invalid("generator circuit must act on the bond qubits plus one"));
        }
        Ok(TestState {
            n_bond: r.n_qubits,
            r: circuit_unitary(r, &r.params)?,
            g: circuit_unitary(g, &g.params)?,
            nb_prime,
        })
    }
}

/// Applies `u` to the listed qubits of a density matrix on `n` qubits.
fn apply_on(rho: &DMatrix<f64>, n: usize, qubits: &[usize], u: &DMatrix<f64>) -> DMatrix<f64> {
    let dim = 1usize << n;
    let k = qubits.len();
    let sub = 1usize << k;
    let masks: Vec<usize> = qubits.iter().map(|&q| 1usize << (n - 1 - q)).collect();
    let all: usize = masks.iter().sum();
    let place = |base: usize, s: usize| -> usize {
        let mut idx = base;
        for (j, m) in masks.iter().enumerate() {
            if (s >> (k - 1 - j)) & 1 == 1 {
                idx |= m;
            }
        }
        idx
    };
    let bases: Vec<usize> = (0..dim).filter(|i| i & all == 0).collect();
    let groups: Vec<Vec<usize>> = bases.iter().map(|&b| (0..sub).map(|s| place(b, s)).collect()).collect();
    let left = |m: &DMatrix<f64>| {
        let mut out = DMatrix::zeros(dim, dim);
        let mut buf = vec![0.0; sub];
        for col in 0..dim {
            for g in &groups {
                for (s, &i) in g.iter().enumerate() {
                    buf[s] = m[(i, col)];
                }
                for (r, &i) in g.iter().enumerate() {
                    out[(i, col)] = (0..sub).map(|s| u[(r, s)] * buf[s]).sum();
                }
            }
        }
        out
    };
    let half = left(rho);
    left(&half.transpose()).transpose()
}

/// Traces out the last qubit and puts it back in |0⟩.
fn reset_last(rho: &DMatrix<f64>) -> DMatrix<f64> {
    let t = trace_lsb(rho);
    let n = rho.nrows();
    DMatrix::from_fn(n, n, |r, c| if r % 2 == 0 && c % 2 == 0 { t[(r / 2, c / 2)] } else { 0.0 })
}

/// Classifies a translation-invariant test state generated sequentially by
/// its own circuits. The joint register holds the discriminator bond, the
/// test bond and one physical qubit shared by both.
pub fn infer_entangled(model: &CompiledModel, test: &TestState, qubit_cap: usize) -> Result<ClassDistribution> {
    model.validate()?;
    let nd = crate::linalg::log2_exact(model.chi).expect("validated");
    let nt = test.n_bond;
    let n = nd + nt + 1;
    if n > qubit_cap {
        return Err(Error::ResourceLimit { qubits: n, cap: qubit_cap });
    }
    let u = model.unitaries(&model.theta)?;
    let disc_bond: Vec<usize> = (0..nd).collect();
    let test_bond: Vec<usize> = (nd..nd + nt).collect();
    let phys = nd + nt;
    let with_phys = |b: &[usize]| -> Vec<usize> { b.iter().copied().chain([phys]).collect() };
    let dim = 1usize << n;

    let mut rho = DMatrix::zeros(dim, dim);
    rho[(0, 0)] = 1.0;
    rho = apply_on(&rho, n, &disc_bond, &u.r);
    if nt > 0 {
        rho = apply_on(&rho, n, &test_bond, &test.r);
    }
    for _ in 0..model.nb {
        rho = reset_last(&apply_on(&rho, n, &with_phys(&disc_bond), &u.g));
    }
    for _ in 0..test.nb_prime {
        rho = reset_last(&apply_on(&rho, n, &with_phys(&test_bond), &test.g));
    }
    for site in (0..model.l).rev() {
        rho = apply_on(&rho, n, &with_phys(&test_bond), &test.g);
        rho = reset_last(&apply_on(&rho, n, &with_phys(&disc_bond), &u.d[site]));
    }
    rho = apply_on(&rho, n, &with_phys(&disc_bond), &u.c);

    // class register: lowest log2(nc) qubits of (discriminator bond, physical)
    let tb = 1usize << (nt + 1);
    let mut diag = vec![0.0; model.nc];
    for i in 0..dim {
        let hi = i / tb; // discriminator bond bits
        let p = i & 1;
        diag[(2 * hi + p) % model.nc] += rho[(i, i)];
    }
    check_trace(&diag)?;
    Ok(ClassDistribution { diag, normalized: true })
}

/// I.i.d. labels drawn from a normalized distribution.
pub fn sample_label(dist: &ClassDistribution, n_shots: usize, seed: u64) -> Vec<usize> {
    let mut rng = seeded_rng(seed, 0x5a);
    let total: f64 = dist.diag.iter().sum();
    (0..n_shots)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * total;
            let mut acc = 0.0;
            for (k, &p) in dist.diag.iter().enumerate() {
                acc += p;
                if u < acc {
                    return k;
                }
            }
            dist.diag.iter().rposition(|&p| p > 0.0).unwrap_or(0)
        })
        .collect()
}
