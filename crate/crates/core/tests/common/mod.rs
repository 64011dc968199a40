//! Brute-force reference implementations shared by the integration and
//! acceptance suites. Everything here is written from the definitions with
//! explicit index loops or Kronecker products, independent of the library's
//! own contraction code.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use tndisc::circuit::{circuit_unitary, Gate, ParamCircuit};
use tndisc::discriminator::{predict_product, DiscriminatorTensors, Hyper};
use tndisc::linalg::seeded_rng;
use tndisc::mps::{Basis, FiniteMps, LocalBasis, SamplingWindow};
use tndisc::runtime::{infer_product, CompiledModel};

pub fn log2(n: usize) -> usize {
    n.trailing_zeros() as usize
}

/// ρ_ℓℓ of Algorithm 1 by nested loops over every bond index.
pub fn alg1_index_loop(m: &DiscriminatorTensors, x: &[[f64; 2]]) -> Vec<f64> {
    let chi = m.hyper.chi;
    // G^i_{ab} = g[(a·2+i), b]; D^i_{ab} = d[(b·2+i), a]
    let g = |i: usize, a: usize, b: usize| m.g[(a * 2 + i, b)];
    let d = |i: usize, a: usize, b: usize| m.d[(b * 2 + i, a)];
    let mut v = vec![vec![0.0; chi]; chi];
    for a in 0..chi {
        for b in 0..chi {
            v[a][b] = m.r[a] * m.r[b];
        }
    }
    for _ in 0..m.hyper.nb {
        let mut nv = vec![vec![0.0; chi]; chi];
        for a in 0..chi {
            for ap in 0..chi {
                for i in 0..2 {
                    for b in 0..chi {
                        for bp in 0..chi {
                            nv[a][ap] += g(i, a, b) * v[b][bp] * g(i, ap, bp);
                        }
                    }
                }
            }
        }
        v = nv;
    }
    for site in (0..m.hyper.l).rev() {
        let mut nv = vec![vec![0.0; chi]; chi];
        for a in 0..chi {
            for ap in 0..chi {
                for i in 0..2 {
                    for ip in 0..2 {
                        for b in 0..chi {
                            for bp in 0..chi {
                                nv[a][ap] += x[site][i] * d(i, a, b) * v[b][bp] * d(ip, ap, bp) * x[site][ip];
                            }
                        }
                    }
                }
            }
        }
        v = nv;
    }
    (0..m.hyper.nc)
        .map(|l| {
            let mut s = 0.0;
            for a in 0..chi {
                for b in 0..chi {
                    s += m.c[(a, l)] * v[a][b] * m.c[(b, l)];
                }
            }
            s
        })
        .collect()
}

pub fn alg1_cost_oracle(m: &DiscriminatorTensors, batch: &[(Vec<[f64; 2]>, usize)]) -> f64 {
    batch
        .iter()
        .map(|(x, l)| {
            let rho = alg1_index_loop(m, x);
            let t: f64 = rho.iter().sum();
            (t - 2.0 * rho[*l]) / t
        })
        .sum::<f64>()
        / batch.len() as f64
}

pub fn random_sample(l: usize, rng: &mut impl Rng) -> Vec<[f64; 2]> {
    (0..l)
        .map(|_| {
            let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            [t.cos(), t.sin()]
        })
        .collect()
}

fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

fn eye(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

/// Gate unitary on n qubits (qubit 0 most significant) from Kronecker
/// products and projector sums.
pub fn gate_matrix(n: usize, g: &Gate, theta: &[f64]) -> DMatrix<f64> {
    let p0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    let p1 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
    let xg = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let chain = |ops: &dyn Fn(usize) -> DMatrix<f64>| (0..n).fold(DMatrix::identity(1, 1), |acc, q| kron(&acc, &ops(q)));
    match *g {
        Gate::Ry { q, slot } => {
            let (s, c) = (0.5 * theta[slot]).sin_cos();
            let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
            chain(&|k| if k == q { r.clone() } else { eye(2) })
        }
        Gate::Cnot { c, t } => {
            let a = chain(&|k| if k == c { p0.clone() } else { eye(2) });
            let b = chain(&|k| {
                if k == c {
                    p1.clone()
                } else if k == t {
                    xg.clone()
                } else {
                    eye(2)
                }
            });
            a + b
        }
    }
}

pub fn circuit_oracle(c: &ParamCircuit, theta: &[f64]) -> DMatrix<f64> {
    c.gates.iter().fold(eye(1 << c.n_qubits), |u, g| gate_matrix(c.n_qubits, g, theta) * u)
}

pub fn random_circuit(n: usize, cnots: usize, rng: &mut impl Rng) -> ParamCircuit {
    let mut c = ParamCircuit::ry_layer(n);
    for _ in 0..cnots {
        if n < 2 {
            break;
        }
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        c = c.extended(a, b);
    }
    c.params = (0..c.params.len()).map(|_| rng.random_range(-3.2..3.2)).collect();
    c
}

pub fn random_compiled(hyper: Hyper, rng: &mut impl Rng) -> CompiledModel {
    let nq = log2(hyper.chi);
    let circuits = [
        random_circuit(nq, rng.random_range(0..3), rng),
        random_circuit(nq + 1, rng.random_range(1..5), rng),
        random_circuit(nq + 1, rng.random_range(1..5), rng),
        random_circuit(nq + 1, rng.random_range(1..4), rng),
    ];
    let mut m = CompiledModel::from_circuits(hyper, circuits).unwrap();
    m.theta = (0..m.theta.len()).map(|_| rng.random_range(-3.2..3.2)).collect();
    m
}

/// Tr over the last qubit of a 2^n × 2^n density matrix, by index loops.
fn trace_last(rho: &DMatrix<f64>) -> DMatrix<f64> {
    let h = rho.nrows() / 2;
    DMatrix::from_fn(h, h, |a, b| rho[(2 * a, 2 * b)] + rho[(2 * a + 1, 2 * b + 1)])
}

/// Algorithm 2 without postselection: full density-matrix simulation with
/// Kronecker-built unitaries.
pub fn alg2_channel_oracle(m: &CompiledModel, x: &[[f64; 2]]) -> Vec<f64> {
    let nq = log2(m.chi);
    let seg = |off: usize, len: usize| m.theta[off..off + len].to_vec();
    let (lr, lg, ld) = (m.r.params.len(), m.g.params.len(), m.d.params.len());
    let ur = circuit_oracle(&m.r, &seg(0, lr));
    let ug = circuit_oracle(&m.g, &seg(lr, lg));
    let ud: Vec<DMatrix<f64>> = (0..m.l).map(|s| circuit_oracle(&m.d, &seg(lr + lg + s * ld, ld))).collect();
    let uc = circuit_oracle(&m.c, &seg(lr + lg + m.l * ld, m.c.params.len()));
    let zero = |n: usize| {
        let mut z = DMatrix::zeros(1 << n, 1 << n);
        z[(0, 0)] = 1.0;
        z
    };
    let mut rho = &ur * zero(nq) * ur.transpose();
    let ket0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    for _ in 0..m.nb {
        let big = kron(&rho, &ket0);
        rho = trace_last(&(&ug * big * ug.transpose()));
    }
    for site in (0..m.l).rev() {
        let xv = DVector::from_column_slice(&x[site]);
        let big = kron(&rho, &(&xv * xv.transpose()));
        rho = trace_last(&(&ud[site] * big * ud[site].transpose()));
    }
    let out = &uc * kron(&rho, &ket0) * uc.transpose();
    let mut diag = vec![0.0; m.nc];
    for r in 0..out.nrows() {
        diag[r % m.nc] += out[(r, r)];
    }
    diag
}

#[derive(Debug)]
pub struct SuiteReport {
    pub cases: usize,
    pub max_err: f64,
}

pub fn alg1_suite(cases: usize, seed: u64) -> SuiteReport {
    let mut rng = seeded_rng(seed, 1);
    let mut max_err: f64 = 0.0;
    for k in 0..cases {
        let hyper = Hyper {
            chi: [2, 4][k % 2],
            nb: rng.random_range(1..4),
            l: rng.random_range(1..4),
            nc: 2,
        };
        let m = DiscriminatorTensors::random(hyper, seed, 100 + k as u64).unwrap();
        let batch: Vec<(Vec<[f64; 2]>, usize)> = (0..3).map(|_| (random_sample(hyper.l, &mut rng), rng.random_range(0..2))).collect();
        for (x, _) in &batch {
            let lib = predict_product(&m, x).unwrap();
            let want = alg1_index_loop(&m, x);
            let t: f64 = want.iter().sum();
            for (a, b) in lib.diag.iter().zip(&want) {
                max_err = max_err.max((a - b / t).abs());
            }
        }
        let samples: Vec<_> = batch.iter().map(|(x, l)| tndisc::discriminator::ProductSample { x: x.clone(), label: *l }).collect();
        let lib = tndisc::discriminator::classification_cost(&m, &samples).unwrap();
        max_err = max_err.max((lib - alg1_cost_oracle(&m, &batch)).abs());
    }
    SuiteReport { cases, max_err }
}

pub fn alg2_suite(cases: usize, seed: u64) -> SuiteReport {
    let mut rng = seeded_rng(seed, 2);
    let mut max_err: f64 = 0.0;
    for k in 0..cases {
        let hyper = Hyper {
            chi: [2, 4][k % 2],
            nb: rng.random_range(1..4),
            l: rng.random_range(1..4),
            nc: 2,
        };
        let m = random_compiled(hyper, &mut rng);
        let x = random_sample(hyper.l, &mut rng);
        let lib = infer_product(&m, &x).unwrap();
        for (a, b) in lib.diag.iter().zip(alg2_channel_oracle(&m, &x)) {
            max_err = max_err.max((a - b).abs());
        }
    }
    SuiteReport { cases, max_err }
}

pub fn circuit_suite(cases: usize, seed: u64) -> SuiteReport {
    let mut rng = seeded_rng(seed, 3);
    let mut max_err: f64 = 0.0;
    for _ in 0..cases {
        let n = rng.random_range(1..4);
        let c = random_circuit(n, rng.random_range(0..8), &mut rng);
        let lib = circuit_unitary(&c, &c.params).unwrap();
        max_err = max_err.max((lib - circuit_oracle(&c, &c.params)).amax());
    }
    SuiteReport { cases, max_err }
}

/// Exact window marginals from the dense state vector.
pub fn window_probabilities(mps: &FiniteMps, start: usize, bases: &[LocalBasis]) -> Vec<f64> {
    let psi = mps.to_dense();
    let f = mps.len();
    let l = bases.len();
    let norm2 = psi.norm_squared();
    let mut p = vec![0.0; 1 << l];
    let rest_sites: Vec<usize> = (0..f).filter(|s| *s < start || *s >= start + l).collect();
    for mu in 0..(1usize << l) {
        for rest in 0..(1usize << rest_sites.len()) {
            // amplitude ⟨λ_μ, rest | ψ⟩ summed over window configurations
            let mut amp = 0.0;
            for win in 0..(1usize << l) {
                let mut idx = 0usize;
                let mut coef = 1.0;
                for (j, &s) in rest_sites.iter().enumerate() {
                    let bit = (rest >> (rest_sites.len() - 1 - j)) & 1;
                    idx |= bit << (f - 1 - s);
                }
                for j in 0..l {
                    let bit = (win >> (l - 1 - j)) & 1;
                    let m = (mu >> (l - 1 - j)) & 1;
                    idx |= bit << (f - 1 - (start + j));
                    coef *= bases[j].vectors[m][bit];
                }
                amp += coef * psi[idx];
            }
            p[mu] += amp * amp / norm2;
        }
    }
    p
}

#[derive(Debug)]
pub struct SamplingReport {
    pub cases: usize,
    pub pooled_p: f64,
    pub min_case_p: f64,
}

fn chi_square(counts: &[usize], probs: &[f64], n: usize) -> (f64, usize) {
    let mut stat = 0.0;
    let mut dof = 0usize;
    for (&c, &p) in counts.iter().zip(probs) {
        if p > 1e-12 {
            let e = p * n as f64;
            stat += (c as f64 - e).powi(2) / e;
            dof += 1;
        } else {
            assert_eq!(c, 0, "outcome with zero probability was sampled");
        }
    }
    (stat, dof.saturating_sub(1))
}

pub fn sampling_suite(cases: usize, shots: usize, seed: u64) -> SamplingReport {
    let mut rng = seeded_rng(seed, 4);
    let (mut stat, mut dof) = (0.0, 0usize);
    let mut min_case_p: f64 = 1.0;
    for k in 0..cases {
        let f = rng.random_range(3..8);
        let l = rng.random_range(1..4).min(f);
        let start = rng.random_range(0..=f - l);
        let chi = [2, 4][k % 2];
        let mut mps = FiniteMps::random(f, chi, &mut rng).unwrap();
        mps.left_canonicalize();
        let basis = if k % 3 == 0 { Basis::Z } else { Basis::X };
        let bases = vec![LocalBasis::of(basis); l];
        let probs = window_probabilities(&mps, start, &bases);
        let w = SamplingWindow::prepare(&mps, start, &bases).unwrap();
        let mut counts = vec![0usize; 1 << l];
        for s in w.sample_many(shots, seed ^ (k as u64) << 8).unwrap() {
            let idx = s.iter().fold(0usize, |a, &b| a * 2 + b as usize);
            counts[idx] += 1;
        }
        let (s, d) = chi_square(&counts, &probs, shots);
        if d > 0 {
            let p = 1.0 - ChiSquared::new(d as f64).unwrap().cdf(s);
            min_case_p = min_case_p.min(p);
            stat += s;
            dof += d;
        }
    }
    let pooled_p = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat);
    SamplingReport { cases, pooled_p, min_case_p }
}

// ---------------------------------------------------------------------------
// Invariants

/// Largest |ΔTr| over every individual channel application of the compiled
/// runtime (each burn-in step, each conditioning step, the readout), with the
/// block unitaries the library builds at θ.
pub fn cptp_suite(cases: usize, seed: u64) -> SuiteReport {
    let mut rng = seeded_rng(seed, 5);
    let mut max_err: f64 = 0.0;
    let ket0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    for k in 0..cases {
        let hyper = Hyper {
            chi: [2, 4][k % 2],
            nb: rng.random_range(1..5),
            l: rng.random_range(1..4),
            nc: 2,
        };
        let m = random_compiled(hyper, &mut rng);
        let u = m.unitaries(&m.theta).unwrap();
        let r0 = u.r.column(0);
        let mut rho = r0 * r0.transpose();
        max_err = max_err.max((rho.trace() - 1.0).abs());
        let step = |rho: &DMatrix<f64>, u: &DMatrix<f64>, env: &DMatrix<f64>, max_err: &mut f64| {
            let out = trace_last(&(u * kron(rho, env) * u.transpose()));
            *max_err = max_err.max((out.trace() - rho.trace()).abs());
            out
        };
        for _ in 0..m.nb {
            rho = step(&rho, &u.g, &ket0, &mut max_err);
        }
        let x = random_sample(hyper.l, &mut rng);
        for site in (0..m.l).rev() {
            let xv = DVector::from_column_slice(&x[site]);
            rho = step(&rho, &u.d[site], &(&xv * xv.transpose()), &mut max_err);
        }
        let out = &u.c * kron(&rho, &ket0) * u.c.transpose();
        max_err = max_err.max((out.trace() - rho.trace()).abs());
        let lib: f64 = infer_product(&m, &x).unwrap().diag.iter().sum();
        max_err = max_err.max((lib - 1.0).abs());
    }
    SuiteReport { cases, max_err }
}

/// Trace preservation of the iMPS transfer channel for random left-canonical
/// tensors.
pub fn imps_channel_suite(cases: usize, seed: u64) -> SuiteReport {
    use tndisc::imps::channel;
    use tndisc::linalg::random_stiefel;
    use tndisc::tensor::Tensor3;
    let mut rng = seeded_rng(seed, 6);
    let mut max_err: f64 = 0.0;
    for k in 0..cases {
        let chi = [1, 2, 4, 8][k % 4];
        let a = Tensor3::from_left_matrix(&random_stiefel(2 * chi, chi, &mut rng), chi, 2);
        let v = random_stiefel(chi, 1, &mut rng);
        let mut rho = &v * v.transpose();
        for _ in 0..6 {
            let next = channel(&a, &rho);
            max_err = max_err.max((next.trace() - rho.trace()).abs());
            rho = next;
        }
    }
    SuiteReport { cases, max_err }
}

/// |cost(W·model) − cost(model)| for random orthogonal W.
pub fn gauge_suite(cases: usize, seed: u64) -> SuiteReport {
    use tndisc::discriminator::{classification_cost, ProductSample};
    use tndisc::linalg::random_stiefel;
    let mut rng = seeded_rng(seed, 7);
    let mut max_err: f64 = 0.0;
    for k in 0..cases {
        let hyper = Hyper {
            chi: [2, 4, 8][k % 3],
            nb: rng.random_range(1..5),
            l: rng.random_range(1..4),
            nc: 2,
        };
        let m = DiscriminatorTensors::random(hyper, seed, 500 + k as u64).unwrap();
        let batch: Vec<ProductSample> = (0..8)
            .map(|_| ProductSample {
                x: random_sample(hyper.l, &mut rng),
                label: rng.random_range(0..2),
            })
            .collect();
        let w = random_stiefel(hyper.chi, hyper.chi, &mut rng);
        let a = classification_cost(&m, &batch).unwrap();
        let b = classification_cost(&m.gauge_transform(&w), &batch).unwrap();
        max_err = max_err.max((a - b).abs());
    }
    SuiteReport { cases, max_err }
}

fn central<F: Fn(f64) -> f64>(f: F, x0: f64) -> f64 {
    let h = 1e-6 * x0.abs().max(1.0);
    (f(x0 + h) - f(x0 - h)) / (2.0 * h)
}

/// Largest |analytic − central difference| over every ambient coordinate of
/// the tensor cost, the circuit-angle cost, and the iMPS energy.
pub fn gradient_suite(cases: usize, seed: u64) -> SuiteReport {
    use tndisc::discriminator::{cost_and_gradient, cost_weighted, ProductSample, WeightedBatch};
    use tndisc::imps::{energy_density, energy_gradient};
    use tndisc::linalg::random_stiefel;
    use tndisc::manifold::{retract, tangent_project, Point};
    use tndisc::runtime::{cost_and_gradient as circuit_cost_and_gradient, MarginCost};
    use tndisc::tensor::Tensor3;
    let mut rng = seeded_rng(seed, 8);
    let mut max_err: f64 = 0.0;
    for k in 0..cases {
        let hyper = Hyper {
            chi: [2, 4][k % 2],
            nb: rng.random_range(1..4),
            l: rng.random_range(1..4),
            nc: 2,
        };
        let samples: Vec<ProductSample> = (0..6)
            .map(|_| ProductSample {
                x: random_sample(hyper.l, &mut rng),
                label: rng.random_range(0..2),
            })
            .collect();

        let m = DiscriminatorTensors::random(hyper, seed, 900 + k as u64).unwrap();
        let batch = WeightedBatch::from_samples(&samples);
        let (_, grads) = cost_and_gradient(&m, &batch).unwrap();
        let xs: Vec<DMatrix<f64>> = m.points().into_iter().map(|p| p.value).collect();
        for (p, g) in grads.iter().enumerate() {
            for idx in 0..g.len() {
                let fd = central(
                    |v| {
                        let mut ys = xs.clone();
                        ys[p][idx] = v;
                        cost_weighted(&m.with_values(&ys), &batch).unwrap()
                    },
                    xs[p][idx],
                );
                max_err = max_err.max((fd - g[idx]).abs());
            }
        }

        let cm = random_compiled(hyper, &mut rng);
        let cost = MarginCost::default();
        let (_, g) = circuit_cost_and_gradient(&cm, &cm.theta, &samples, &cost, true).unwrap();
        for j in 0..cm.theta.len() {
            let fd = central(
                |v| {
                    let mut th = cm.theta.clone();
                    th[j] = v;
                    circuit_cost_and_gradient(&cm, &th, &samples, &cost, false).unwrap().0
                },
                cm.theta[j],
            );
            max_err = max_err.max((fd - g[j]).abs());
        }

        // the energy gradient is only defined along the Stiefel tangent space,
        // so compare directional derivatives along retraction curves
        let chi = [1, 2, 4][k % 3];
        let h = rng.random_range(0.1..3.0);
        let a = Point::stiefel(random_stiefel(2 * chi, chi, &mut rng));
        let (_, ge) = energy_gradient(&Tensor3::from_left_matrix(&a.value, chi, 2), h).unwrap();
        for _ in 0..4 {
            let xi = tangent_project(&a, &tndisc::linalg::gaussian_matrix(2 * chi, chi, &mut rng)).unwrap();
            let fd = central(
                |t| {
                    let b = retract(&a, &(&xi * t)).unwrap();
                    energy_density(&Tensor3::from_left_matrix(&b.value, chi, 2), h).unwrap()
                },
                0.0,
            );
            max_err = max_err.max((fd - ge.dot(&xi)).abs());
        }
    }
    SuiteReport { cases, max_err }
}

/// Small two-class training set whose class is the sign of ⟨σᶻ⟩ on site 0.
pub fn toy_training_set(n: usize, l: usize, seed: u64) -> Vec<tndisc::discriminator::ProductSample> {
    let mut rng = seeded_rng(seed, 9);
    (0..n)
        .map(|k| {
            let label = k % 2;
            let mut x = random_sample(l, &mut rng);
            let t: f64 = rng.random_range(0.0..0.6) + if label == 0 { 0.0 } else { 1.0 };
            x[0] = [t.cos(), t.sin()];
            tndisc::discriminator::ProductSample { x, label }
        })
        .collect()
}

/// Largest manifold residual over every optimizer iterate of discriminator
/// training, the diagonal gauge, and iMPS optimization.
pub fn manifold_suite(seed: u64) -> f64 {
    use tndisc::compiler::diagonal_gauge;
    use tndisc::discriminator::{train_discriminator, TrainSchedule};
    use tndisc::imps::{optimize_imps, ImpsOptions};
    use tndisc::manifold::{minimize, MinimizeConfig, Objective, Point};
    let mut worst: f64 = 0.0;
    let train = toy_training_set(40, 2, seed);
    for chi in [2, 4] {
        let hyper = Hyper { chi, nb: 2, l: 2, nc: 2 };
        let mut sched = TrainSchedule::default();
        sched.restarts = 2;
        sched.joint.max_iters = 60;
        sched.single.max_iters = 10;
        sched.rounds = 1;
        let out = train_discriminator(&train, hyper, seed, &sched).unwrap();
        worst = worst.max(out.max_residual).max(out.model.constraint_residual());
        let gauge = diagonal_gauge(&out.model, 1, seed).unwrap();
        worst = worst.max(gauge.model.constraint_residual());
    }
    let mut opts = ImpsOptions::default();
    opts.restarts = 1;
    opts.energy.max_iters = 100;
    opts.boundary.max_iters = 50;
    let imps = optimize_imps(0.7, 2, 4, seed, &opts).unwrap();
    worst = worst.max(imps.left_canonical_residual());

    // every point the optimizer evaluates passes through the probe's cost
    struct Probe(std::sync::Mutex<f64>);
    impl Objective for Probe {
        fn cost(&self, xs: &[DMatrix<f64>]) -> tndisc::error::Result<f64> {
            let r = tndisc::linalg::orthonormality_residual(&xs[0]);
            let mut w = self.0.lock().unwrap();
            *w = w.max(r).max((xs[1].norm() - 1.0).abs());
            Ok(-(xs[0][(0, 0)] + xs[0][(1, 1)]) + xs[1][0])
        }
        fn gradient(&self, xs: &[DMatrix<f64>]) -> Option<tndisc::error::Result<(f64, Vec<DMatrix<f64>>)>> {
            let f = match self.cost(xs) {
                Ok(f) => f,
                Err(e) => return Some(Err(e)),
            };
            let mut gx = DMatrix::zeros(xs[0].nrows(), xs[0].ncols());
            gx[(0, 0)] = -1.0;
            gx[(1, 1)] = -1.0;
            let mut gv = DMatrix::zeros(xs[1].nrows(), 1);
            gv[0] = 1.0;
            Some(Ok((f, vec![gx, gv])))
        }
    }
    let mut rng = seeded_rng(seed, 10);
    let probe = Probe(std::sync::Mutex::new(0.0));
    let x0 = vec![
        Point::stiefel(tndisc::linalg::random_stiefel(6, 3, &mut rng)),
        Point::sphere(tndisc::linalg::random_stiefel(5, 1, &mut rng)),
    ];
    let cfg = MinimizeConfig {
        max_iters: 200,
        ..MinimizeConfig::default()
    };
    let res = minimize(&probe, x0, &[true, true], &cfg).unwrap();
    worst.max(res.max_residual)
}
