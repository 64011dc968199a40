//! Tensor-level MPS discriminator with postselected readout.
//!
//! Index conventions (d = 2, physical index i is the least significant):
//! - `g` is the (2χ)×χ isometry with g[(α·2 + i), β] = G^i_{αβ}.
//! - `d` is the (2χ)×χ isometry with d[(β·2 + i), α] = D^i_{αβ}, i.e. the
//!   conditioning tensor is the reshaped transpose of `d`.
//! - `c` is χ×N_C with orthonormal columns.
//!
//! The burn-in channel is V ← Σ_i G^i V G^iᵀ applied N_b times to R Rᵀ; each
//! sample then conditions V ← B V Bᵀ with B = Σ_i x_s^i D^i for sites
//! s = L−1 down to 0, and the class weights are ρ_ℓℓ = c_ℓᵀ V c_ℓ.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{log2_exact, random_stiefel, random_unit_vector, seeded_rng};
use crate::manifold::{minimize, GradMode, MinimizeConfig, Objective, Point};
use crate::par;
use crate::tensor::{DenseArray, Tensor3};

/// Class index of the antiferromagnetic phase.
pub const AFM: usize = 0;
/// Class index of the paramagnetic phase.
pub const PM: usize = 1;

/// Threshold on Σ_ℓ ρ_ℓℓ below which a readout is degenerate.
pub const READOUT_FLOOR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyper {
    pub chi: usize,
    pub nb: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub nc: usize,
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        if log2_exact(self.chi).is_none() || log2_exact(self.nc).is_none() {
            return Err(Error::invalid("chi and nc must be powers of two"));
        }
        if self.nc > self.chi {
            return Err(Error::invalid("nc cannot exceed chi"));
        }
        if self.nb == 0 || self.l == 0 {
            return Err(Error::invalid("nb and L must be positive"));
        }
        Ok(())
    }
}

/// A product-state sample: one normalized 2-vector per site plus its label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductSample {
    pub x: Vec<[f64; 2]>,
    pub label: usize,
}

/// Distinct samples with multiplicities. The cost is a weighted mean, so
/// merging duplicates is exact; the canonical ordering makes the result
/// independent of the input order.
#[derive(Clone, Debug)]
pub struct WeightedBatch {
    pub samples: Vec<ProductSample>,
    pub weights: Vec<f64>,
    pub total: f64,
}

impl WeightedBatch {
    pub fn from_samples(samples: &[ProductSample]) -> Self {
        let key = |s: &ProductSample| -> (usize, Vec<u64>) {
            (s.label, s.x.iter().flat_map(|v| [v[0].to_bits(), v[1].to_bits()]).collect())
        };
        let mut keyed: Vec<((usize, Vec<u64>), &ProductSample)> = samples.iter().map(|s| (key(s), s)).collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out = WeightedBatch {
            samples: Vec::new(),
            weights: Vec::new(),
            total: samples.len() as f64,
        };
        let mut last: Option<(usize, Vec<u64>)> = None;
        for (k, s) in keyed {
            if last.as_ref() == Some(&k) {
                *out.weights.last_mut().expect("nonempty") += 1.0;
            } else {
                out.samples.push(s.clone());
                out.weights.push(1.0);
                last = Some(k);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_pss: Option<f64>,
    #[serde(default)]
    pub stalled: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorTensors {
    pub hyper: Hyper,
    pub r: DVector<f64>,
    pub g: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub metrics: Metrics,
}

/// Normalized or raw diagonal of the class-register density matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub diag: Vec<f64>,
    pub normalized: bool,
}

impl ClassDistribution {
    /// Argmax with ties broken toward the lower class index.
    pub fn label(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.diag.iter().enumerate() {
            if p > self.diag[best] {
                best = k;
            }
        }
        best
    }
}

impl DiscriminatorTensors {
    pub fn new(hyper: Hyper, r: DVector<f64>, g: DMatrix<f64>, d: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        hyper.validate()?;
        let chi = hyper.chi;
        if r.len() != chi || g.shape() != (2 * chi, chi) || d.shape() != (2 * chi, chi) || c.shape() != (chi, hyper.nc) {
            return Err(Error::invalid("tensor shapes do not match the hyperparameters"));
        }
        Ok(DiscriminatorTensors {
            hyper,
            r,
            g,
            d,
            c,
            metrics: Metrics::default(),
        })
    }

    pub fn random(hyper: Hyper, seed: u64, stream: u64) -> Result<Self> {
        hyper.validate()?;
        let chi = hyper.chi;
        let mut rng = seeded_rng(seed, stream);
        let r = random_unit_vector(chi, &mut rng);
        let g = random_stiefel(2 * chi, chi, &mut rng);
        let d = random_stiefel(2 * chi, chi, &mut rng);
        let c = random_stiefel(chi, hyper.nc, &mut rng);
        Self::new(hyper, r, g, d, c)
    }

    /// Largest manifold-constraint residual over the four tensors.
    pub fn constraint_residual(&self) -> f64 {
        let points = self.points();
        points.iter().map(Point::residual).fold(0.0, f64::max)
    }

    pub fn points(&self) -> Vec<Point> {
        vec![
            Point::sphere(DMatrix::from_column_slice(self.hyper.chi, 1, self.r.as_slice())),
            Point::stiefel(self.g.clone()),
            Point::stiefel(self.d.clone()),
            Point::stiefel(self.c.clone()),
        ]
    }

    pub fn with_values(&self, xs: &[DMatrix<f64>]) -> Self {
        DiscriminatorTensors {
            hyper: self.hyper,
            r: DVector::from_column_slice(xs[0].as_slice()),
            g: xs[1].clone(),
            d: xs[2].clone(),
            c: xs[3].clone(),
            metrics: self.metrics.clone(),
        }
    }

    /// G^i as χ×χ matrices.
    pub fn g_slices(&self) -> [DMatrix<f64>; 2] {
        g_slices(&self.g, self.hyper.chi)
    }

    /// D^i as χ×χ matrices.
    pub fn d_slices(&self) -> [DMatrix<f64>; 2] {
        d_slices(&self.d, self.hyper.chi)
    }

    /// Orthogonal bond rotation: G^i → W G^i Wᵀ, D^i → W D^i Wᵀ, R → W R, C → W C.
    pub fn gauge_transform(&self, w: &DMatrix<f64>) -> Self {
        let chi = self.hyper.chi;
        let gs = self.g_slices().map(|m| w * m * w.transpose());
        let ds = self.d_slices().map(|m| w * m * w.transpose());
        DiscriminatorTensors {
            hyper: self.hyper,
            r: w * &self.r,
            g: g_from_slices(&gs, chi),
            d: d_from_slices(&ds, chi),
            c: w * &self.c,
            metrics: self.metrics.clone(),
        }
    }

    /// Bond state after the burn-in.
    pub fn burn_in(&self) -> DMatrix<f64> {
        burn_in(&self.r, &self.g_slices(), self.hyper.nb)
    }
}

pub(crate) fn g_slices(g: &DMatrix<f64>, chi: usize) -> [DMatrix<f64>; 2] {
    let t = Tensor3::from_left_matrix(g, chi, 2);
    [t.slice(0), t.slice(1)]
}

pub(crate) fn g_from_slices(s: &[DMatrix<f64>; 2], _chi: usize) -> DMatrix<f64> {
    Tensor3::from_slices(s).left_matrix()
}

pub(crate) fn d_slices(d: &DMatrix<f64>, chi: usize) -> [DMatrix<f64>; 2] {
    let t = Tensor3::from_left_matrix(d, chi, 2);
    [t.slice(0).transpose(), t.slice(1).transpose()]
}

pub(crate) fn d_from_slices(s: &[DMatrix<f64>; 2], _chi: usize) -> DMatrix<f64> {
    Tensor3::from_slices(&[s[0].transpose(), s[1].transpose()]).left_matrix()
}

fn burn_in(r: &DVector<f64>, gs: &[DMatrix<f64>; 2], nb: usize) -> DMatrix<f64> {
    let mut v = r * r.transpose();
    for _ in 0..nb {
        v = &gs[0] * &v * gs[0].transpose() + &gs[1] * &v * gs[1].transpose();
    }
    v
}

fn conditioning(ds: &[DMatrix<f64>; 2], x: &[f64; 2]) -> DMatrix<f64> {
    &ds[0] * x[0] + &ds[1] * x[1]
}

fn check_sample(hyper: &Hyper, s: &ProductSample) -> Result<()> {
    if s.x.len() != hyper.l {
        return Err(Error::invalid(format!("sample has {} sites, model expects {}", s.x.len(), hyper.l)));
    }
    if s.label >= hyper.nc {
        return Err(Error::invalid(format!("label {} out of range", s.label)));
    }
    Ok(())
}

/// Unnormalized class weights ρ_ℓℓ for one sample.
fn raw_diag(model: &DiscriminatorTensors, v: &DMatrix<f64>, ds: &[DMatrix<f64>; 2], x: &[[f64; 2]]) -> Vec<f64> {
    let mut sigma = v.clone();
    for xs in x.iter().rev() {
        let b = conditioning(ds, xs);
        sigma = &b * sigma * b.transpose();
    }
    (0..model.hyper.nc)
        .map(|l| {
            let cl = model.c.column(l);
            (cl.transpose() * &sigma * cl)[(0, 0)]
        })
        .collect()
}

/// Per-sample cost (Σρ − 2ρ_{ℓ_m})/Σρ.
pub fn sample_cost(diag: &[f64], label: usize) -> f64 {
    let t: f64 = diag.iter().sum();
    (t - 2.0 * diag[label]) / t
}

pub fn predict_product(model: &DiscriminatorTensors, x: &[[f64; 2]]) -> Result<ClassDistribution> {
    if x.len() != model.hyper.l {
        return Err(Error::invalid("sample length differs from L"));
    }
    let diag = raw_diag(model, &model.burn_in(), &model.d_slices(), x);
    let t: f64 = diag.iter().sum();
    if !(t >= READOUT_FLOOR) {
        return Err(Error::DegenerateReadout { sample: 0, weight: t });
    }
    Ok(ClassDistribution {
        diag: diag.iter().map(|v| v / t).collect(),
        normalized: true,
    })
}

/// Mean postselected classification cost over a batch.
pub fn classification_cost(model: &DiscriminatorTensors, batch: &[ProductSample]) -> Result<f64> {
    cost_weighted(model, &WeightedBatch::from_samples(batch))
}

pub fn cost_weighted(model: &DiscriminatorTensors, batch: &WeightedBatch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let v = model.burn_in();
    let ds = model.d_slices();
    let sum = par::chunked_sum(batch.len(), |m| {
        let s = &batch.samples[m];
        check_sample(&model.hyper, s)?;
        let diag = raw_diag(model, &v, &ds, &s.x);
        let t: f64 = diag.iter().sum();
        if !(t >= READOUT_FLOOR) {
            return Err(Error::DegenerateReadout { sample: m, weight: t });
        }
        Ok(batch.weights[m] * sample_cost(&diag, s.label))
    })?;
    Ok(sum.unwrap_or(0.0) / batch.total)
}

/// Cost and ambient gradients with respect to (R, G, D, C) in the storage
/// layouts of [`DiscriminatorTensors`], by reverse-mode differentiation.
pub fn cost_and_gradient(model: &DiscriminatorTensors, batch: &WeightedBatch) -> Result<(f64, [DMatrix<f64>; 4])> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let chi = model.hyper.chi;
    let nc = model.hyper.nc;
    let gs = model.g_slices();
    let ds = model.d_slices();

    // forward burn-in, keeping every intermediate state
    let mut vs = vec![&model.r * model.r.transpose()];
    for _ in 0..model.hyper.nb {
        let v = vs.last().expect("nonempty");
        vs.push(&gs[0] * v * gs[0].transpose() + &gs[1] * v * gs[1].transpose());
    }
    let v = vs.last().expect("nonempty").clone();

    // packed accumulator: [cost, Λ_V (χ²), dD^0 (χ²), dD^1 (χ²), dC (χ·nc)]
    let cc = chi * chi;
    let len = 1 + 3 * cc + chi * nc;
    let acc = par::chunked_sum(batch.len(), |m| -> Result<Vec<f64>> {
        let s = &batch.samples[m];
        check_sample(&model.hyper, s)?;
        let w = batch.weights[m];
        let mut states = Vec::with_capacity(s.x.len() + 1);
        let mut bs = Vec::with_capacity(s.x.len());
        let mut sigma = v.clone();
        for xs in s.x.iter().rev() {
            let b = conditioning(&ds, xs);
            states.push(sigma.clone());
            sigma = &b * &sigma * b.transpose();
            bs.push(b);
        }
        let diag: Vec<f64> = (0..nc)
            .map(|l| {
                let cl = model.c.column(l);
                (cl.transpose() * &sigma * cl)[(0, 0)]
            })
            .collect();
        let t: f64 = diag.iter().sum();
        if !(t >= READOUT_FLOOR) {
            return Err(Error::DegenerateReadout { sample: m, weight: t });
        }
        let cost = (t - 2.0 * diag[s.label]) / t;
        let mut out = vec![0.0; len];
        out[0] = w * cost;

        let mut lam = DMatrix::zeros(chi, chi);
        let mut dc = DMatrix::zeros(chi, nc);
        for l in 0..nc {
            let dl = 2.0 * diag[s.label] / (t * t) - if l == s.label { 2.0 / t } else { 0.0 };
            let cl = model.c.column(l);
            lam += cl * cl.transpose() * dl;
            dc.set_column(l, &(&sigma * cl * (2.0 * dl)));
        }
        let mut dd = [DMatrix::zeros(chi, chi), DMatrix::zeros(chi, chi)];
        let sites: Vec<&[f64; 2]> = s.x.iter().rev().collect();
        for k in (0..bs.len()).rev() {
            let b = &bs[k];
            let db = &lam * b * &states[k] * 2.0;
            dd[0] += &db * sites[k][0];
            dd[1] += &db * sites[k][1];
            lam = b.transpose() * lam * b;
        }
        let blocks: [&DMatrix<f64>; 3] = [&lam, &dd[0], &dd[1]];
        for (bi, m) in blocks.iter().enumerate() {
            let off = 1 + bi * cc;
            for r in 0..chi {
                for c in 0..chi {
                    out[off + r * chi + c] = w * m[(r, c)];
                }
            }
        }
        let off = 1 + 3 * cc;
        for r in 0..chi {
            for c in 0..nc {
                out[off + r * nc + c] = w * dc[(r, c)];
            }
        }
        Ok(out)
    })?
    .expect("nonempty batch");

    let scale = 1.0 / batch.total;
    let unpack = |off: usize, rows: usize, cols: usize| DMatrix::from_row_slice(rows, cols, &acc[off..off + rows * cols]) * scale;
    let mut lam = unpack(1, chi, chi);
    let dd = [unpack(1 + cc, chi, chi), unpack(1 + 2 * cc, chi, chi)];
    let dc = unpack(1 + 3 * cc, chi, nc);

    // back through the burn-in
    let mut dg = [DMatrix::zeros(chi, chi), DMatrix::zeros(chi, chi)];
    for n in (0..model.hyper.nb).rev() {
        for i in 0..2 {
            dg[i] += &lam * &gs[i] * &vs[n] * 2.0;
        }
        lam = gs[0].transpose() * &lam * &gs[0] + gs[1].transpose() * &lam * &gs[1];
    }
    let dr = &lam * &model.r * 2.0;

    Ok((
        acc[0] * scale,
        [
            DMatrix::from_column_slice(chi, 1, dr.as_slice()),
            g_from_slices(&dg, chi),
            d_from_slices(&dd, chi),
            dc,
        ],
    ))
}

/// Per-class and class-averaged F1 from a confusion matrix whose rows are
/// true classes and columns predicted classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub per_class: Vec<f64>,
    pub average: f64,
}

pub fn f1_scores(confusion: &[Vec<u64>]) -> F1Report {
    let n = confusion.len();
    let per_class: Vec<f64> = (0..n)
        .map(|i| {
            let tp = confusion[i][i] as f64;
            let col: u64 = (0..n).map(|j| confusion[j][i]).sum();
            let row: u64 = confusion[i].iter().sum();
            let p = if col == 0 { 0.0 } else { tp / col as f64 };
            let r = if row == 0 { 0.0 } else { tp / row as f64 };
            if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        })
        .collect();
    let average = per_class.iter().sum::<f64>() / n.max(1) as f64;
    F1Report { per_class, average }
}

pub fn confusion_matrix(truth: &[usize], predicted: &[usize], nc: usize) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; nc]; nc];
    for (&t, &p) in truth.iter().zip(predicted) {
        m[t][p] += 1;
    }
    m
}

/// Predicted labels and single-shot success probabilities ρ_{ℓ_m ℓ_m}.
pub fn evaluate(model: &DiscriminatorTensors, samples: &[ProductSample]) -> Result<(Vec<usize>, Vec<f64>)> {
    let v = model.burn_in();
    let ds = model.d_slices();
    let out: Vec<Result<(usize, f64)>> = par::map_indexed(samples.len(), |m| {
        let s = &samples[m];
        check_sample(&model.hyper, s)?;
        let diag = raw_diag(model, &v, &ds, &s.x);
        let t: f64 = diag.iter().sum();
        if !(t >= READOUT_FLOOR) {
            return Err(Error::DegenerateReadout { sample: m, weight: t });
        }
        let dist = ClassDistribution {
            diag: diag.iter().map(|d| d / t).collect(),
            normalized: true,
        };
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

pub fn f1_on(model: &DiscriminatorTensors, samples: &[ProductSample]) -> Result<F1Report> {
    let (pred, _) = evaluate(model, samples)?;
    let truth: Vec<usize> = samples.iter().map(|s| s.label).collect();
    Ok(f1_scores(&confusion_matrix(&truth, &pred, model.hyper.nc)))
}

pub(crate) struct DiscriminatorObjective<'a> {
    pub template: &'a DiscriminatorTensors,
    pub batch: &'a WeightedBatch,
}

impl Objective for DiscriminatorObjective<'_> {
    fn cost(&self, xs: &[DMatrix<f64>]) -> Result<f64> {
        cost_weighted(&self.template.with_values(xs), self.batch)
    }
    fn gradient(&self, xs: &[DMatrix<f64>]) -> Option<Result<(f64, Vec<DMatrix<f64>>)>> {
        Some(cost_and_gradient(&self.template.with_values(xs), self.batch).map(|(c, g)| (c, g.to_vec())))
    }
}

/// Joint optimization of all four tensors followed by cyclic rounds in which
/// one tensor moves and the others are frozen.
#[derive(Clone, Debug)]
pub struct TrainSchedule {
    pub restarts: usize,
    pub joint: MinimizeConfig,
    pub rounds: usize,
    pub single: MinimizeConfig,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            restarts: 5,
            joint: MinimizeConfig {
                max_iters: 600,
                grad_tol: 1e-7,
                momentum: 0.8,
                ..MinimizeConfig::default()
            },
            rounds: 3,
            single: MinimizeConfig {
                max_iters: 100,
                grad_tol: 1e-7,
                momentum: 0.8,
                ..MinimizeConfig::default()
            },
        }
    }
}

impl TrainSchedule {
    pub fn with_grad_mode(mut self, mode: GradMode) -> Self {
        self.joint.grad_mode = mode;
        self.single.grad_mode = mode;
        self
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: DiscriminatorTensors,
    pub cost: f64,
    pub stalled: bool,
    /// Largest manifold residual over every optimizer iterate.
    pub max_residual: f64,
    pub restart_costs: Vec<f64>,
}

fn run_schedule(init: DiscriminatorTensors, batch: &WeightedBatch, schedule: &TrainSchedule) -> Result<(DiscriminatorTensors, f64, bool, f64)> {
    let obj = DiscriminatorObjective { template: &init, batch };
    let mut points = init.points();
    let r = minimize(&obj, points, &[true; 4], &schedule.joint)?;
    let mut stalled = r.stalled;
    let mut max_res = r.max_residual;
    let mut cost = r.cost;
    points = r.points;
    for _ in 0..schedule.rounds {
        for k in 0..4 {
            let mut active = [false; 4];
            active[k] = true;
            let r = minimize(&obj, points, &active, &schedule.single)?;
            stalled |= r.stalled;
            max_res = max_res.max(r.max_residual);
            cost = r.cost;
            points = r.points;
        }
    }
    let values: Vec<DMatrix<f64>> = points.into_iter().map(|p| p.value).collect();
    Ok((init.with_values(&values), cost, stalled, max_res))
}

/// Trains from `schedule.restarts` random initializations and keeps the one
/// with the lowest final cost. Training F1 and cost are stored in the metrics.
pub fn train_discriminator(train: &[ProductSample], hyper: Hyper, seed: u64, schedule: &TrainSchedule) -> Result<TrainOutcome> {
    hyper.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    for l in 0..hyper.nc {
        if !train.iter().any(|s| s.label == l) {
            return Err(Error::invalid(format!("class {l} is missing from the training set")));
        }
    }
    let batch = WeightedBatch::from_samples(train);
    let runs = par::map_indexed(schedule.restarts.max(1), |k| {
        let init = DiscriminatorTensors::random(hyper, seed, k as u64)?;
        run_schedule(init, &batch, schedule)
    });
    let mut best: Option<(DiscriminatorTensors, f64, bool, f64)> = None;
    let mut restart_costs = Vec::new();
    let mut max_residual = 0.0f64;
    for run in runs {
        let run = run?;
        restart_costs.push(run.1);
        max_residual = max_residual.max(run.3);
        if best.as_ref().is_none_or(|b| run.1 < b.1) {
            best = Some(run);
        }
    }
    let (mut model, cost, stalled, _) = best.expect("at least one restart");
    let (pred, pss) = evaluate(&model, train)?;
    let truth: Vec<usize> = train.iter().map(|s| s.label).collect();
    model.metrics = Metrics {
        train_cost: Some(cost),
        train_f1: Some(f1_scores(&confusion_matrix(&truth, &pred, hyper.nc)).average),
        test_f1: None,
        mean_pss: Some(pss.iter().sum::<f64>() / pss.len() as f64),
        stalled,
    };
    Ok(TrainOutcome {
        model,
        cost,
        stalled,
        max_residual,
        restart_costs,
    })
}

/// On-disk model layout.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub chi: usize,
    pub nb: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub nc: usize,
    #[serde(rename = "R")]
    pub r: Vec<f64>,
    /// G^i_{αβ} with dims (χ, 2, χ).
    #[serde(rename = "G")]
    pub g: DenseArray,
    /// Conditioning tensor D^i_{αβ} with dims (χ, 2, χ).
    #[serde(rename = "D")]
    pub d: DenseArray,
    /// χ × N_C readout isometry.
    #[serde(rename = "C")]
    pub c: DenseArray,
    #[serde(default)]
    pub metrics: Metrics,
}

impl From<&DiscriminatorTensors> for ModelFile {
    fn from(m: &DiscriminatorTensors) -> Self {
        let chi = m.hyper.chi;
        let ds = m.d_slices();
        ModelFile {
            chi,
            nb: m.hyper.nb,
            l: m.hyper.l,
            nc: m.hyper.nc,
            r: m.r.as_slice().to_vec(),
            g: DenseArray::from_tensor(&Tensor3::from_left_matrix(&m.g, chi, 2)),
            d: DenseArray::from_tensor(&Tensor3::from_slices(&ds)),
            c: DenseArray::from_matrix(&m.c),
            metrics: m.metrics.clone(),
        }
    }
}

impl TryFrom<&ModelFile> for DiscriminatorTensors {
    type Error = Error;

    fn try_from(f: &ModelFile) -> Result<Self> {
        let hyper = Hyper {
            chi: f.chi,
            nb: f.nb,
            l: f.l,
            nc: f.nc,
        };
        let bad = || Error::invalid("malformed model tensor");
        let g = f.g.to_tensor().ok_or_else(bad)?;
        let d = f.d.to_tensor().ok_or_else(bad)?;
        if g.dims != [f.chi, 2, f.chi] || d.dims != [f.chi, 2, f.chi] {
            return Err(bad());
        }
        let d_slices = [d.slice(0), d.slice(1)];
        let mut m = DiscriminatorTensors::new(
            hyper,
            DVector::from_vec(f.r.clone()),
            g.left_matrix(),
            d_from_slices(&d_slices, f.chi),
            f.c.to_matrix().ok_or_else(bad)?,
        )?;
        if m.constraint_residual() > 1e-8 {
            return Err(Error::invalid("model tensors violate their manifold constraints"));
        }
        m.metrics = f.metrics.clone();
        Ok(m)
    }
}
