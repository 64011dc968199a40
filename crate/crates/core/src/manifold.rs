//! First-order Riemannian optimization on spheres and real Stiefel manifolds.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{frob_dot, orthonormality_residual, qr_positive};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Manifold {
    /// Unit vectors, stored as n×1 matrices.
    Sphere,
    /// n×p matrices with orthonormal columns.
    Stiefel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub kind: Manifold,
    pub value: DMatrix<f64>,
}

impl Point {
    pub fn sphere(v: DMatrix<f64>) -> Self {
        Point {
            kind: Manifold::Sphere,
            value: v,
        }
    }

    pub fn stiefel(x: DMatrix<f64>) -> Self {
        Point {
            kind: Manifold::Stiefel,
            value: x,
        }
    }

    /// Deviation from the manifold constraint.
    pub fn residual(&self) -> f64 {
        match self.kind {
            Manifold::Sphere => (self.value.norm() - 1.0).abs(),
            Manifold::Stiefel => orthonormality_residual(&self.value),
        }
    }

    pub fn check(&self, tol: f64) -> Result<()> {
        let r = self.residual();
        if r > tol {
            return Err(Error::invalid(format!("point is off its manifold by {r:.3e}")));
        }
        Ok(())
    }
}

/// Orthogonal projection of an ambient gradient onto the tangent space:
/// sphere g − (x·g)x, Stiefel g − X sym(Xᵀg).
pub fn tangent_project(x: &Point, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.value.shape() != g.shape() {
        return Err(Error::invalid(format!(
            "gradient shape {:?} does not match point shape {:?}",
            g.shape(),
            x.value.shape()
        )));
    }
    Ok(match x.kind {
        Manifold::Sphere => g - &x.value * frob_dot(&x.value, g),
        Manifold::Stiefel => {
            let xtg = x.value.transpose() * g;
            let sym = (&xtg + xtg.transpose()) * 0.5;
            g - &x.value * sym
        }
    })
}

/// Tangency residual: |x·ξ| on the sphere, ‖Xᵀξ + ξᵀX‖_max on Stiefel.
pub fn tangency_residual(x: &Point, xi: &DMatrix<f64>) -> f64 {
    match x.kind {
        Manifold::Sphere => frob_dot(&x.value, xi).abs(),
        Manifold::Stiefel => {
            let m = x.value.transpose() * xi;
            (&m + m.transpose()).abs().max()
        }
    }
}

/// Sphere: normalization; Stiefel: Q factor of X + ξ with diag(R) > 0.
pub fn retract(x: &Point, xi: &DMatrix<f64>) -> Result<Point> {
    if x.value.shape() != xi.shape() {
        return Err(Error::invalid("tangent vector shape does not match point"));
    }
    let y = &x.value + xi;
    match x.kind {
        Manifold::Sphere => {
            let n = y.norm();
            if !(n > 1e-300) || !n.is_finite() {
                return Err(Error::RetractionFailure);
            }
            Ok(Point::sphere(y / n))
        }
        Manifold::Stiefel => {
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::RetractionFailure);
            }
            let (q, r) = qr_positive(&y);
            let scale = y.norm().max(1.0);
            for k in 0..r.nrows().min(r.ncols()) {
                if r[(k, k)].abs() < 1e-12 * scale {
                    return Err(Error::RetractionFailure);
                }
            }
            Ok(Point::stiefel(q))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradMode {
    Analytic,
    CentralDifference,
}

#[derive(Clone, Debug)]
pub struct MinimizeConfig {
    /// Initial trial step for the line search.
    pub step: f64,
    pub max_step: f64,
    pub momentum: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub grad_mode: GradMode,
    /// Relative central-difference step.
    pub fd_step: f64,
    pub armijo_c: f64,
    pub max_halvings: usize,
    /// Stop when the relative decrease stays below `stall_rel` for this many steps.
    pub stall_window: usize,
    pub stall_rel: f64,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        MinimizeConfig {
            step: 0.1,
            max_step: 10.0,
            momentum: 0.5,
            max_iters: 500,
            grad_tol: 1e-6,
            grad_mode: GradMode::Analytic,
            fd_step: 1e-6,
            armijo_c: 1e-4,
            max_halvings: 30,
            stall_window: 50,
            stall_rel: 1e-12,
        }
    }
}

/// A cost over a tuple of manifold points.
///
/// `gradient` returns the ambient (Euclidean) gradient for every point; a
/// cost without an analytic gradient returns `None` and is differentiated
/// by central differences. Costs used with finite differences must be
/// smooth in a neighbourhood of the manifold.
pub trait Objective: Sync {
    fn cost(&self, xs: &[DMatrix<f64>]) -> Result<f64>;

    fn gradient(&self, _xs: &[DMatrix<f64>]) -> Option<Result<(f64, Vec<DMatrix<f64>>)>> {
        None
    }
}

#[derive(Clone, Debug)]
pub struct MinimizeResult {
    pub points: Vec<Point>,
    pub cost: f64,
    pub iters: usize,
    pub converged: bool,
    pub stalled: bool,
    pub grad_norm: f64,
    pub trace: Vec<f64>,
    /// Largest manifold-constraint residual seen over all iterates.
    pub max_residual: f64,
}

fn values(points: &[Point]) -> Vec<DMatrix<f64>> {
    points.iter().map(|p| p.value.clone()).collect()
}

/// Central-difference ambient gradient for the active points.
pub fn fd_gradient<O: Objective + ?Sized>(
    obj: &O,
    xs: &[DMatrix<f64>],
    active: &[bool],
    rel_step: f64,
) -> Result<Vec<DMatrix<f64>>> {
    let mut coords = Vec::new();
    for (p, x) in xs.iter().enumerate() {
        if active[p] {
            for k in 0..x.len() {
                coords.push((p, k));
            }
        }
    }
    let partials: Vec<Result<f64>> = par::map_slice(&coords, |&(p, k)| {
        let h = rel_step * xs[p][k].abs().max(1.0);
        let mut plus = xs.to_vec();
        plus[p][k] += h;
        let mut minus = xs.to_vec();
        minus[p][k] -= h;
        Ok((obj.cost(&plus)? - obj.cost(&minus)?) / (2.0 * h))
    });
    let mut grads: Vec<DMatrix<f64>> = xs.iter().map(|x| DMatrix::zeros(x.nrows(), x.ncols())).collect();
    for ((p, k), v) in coords.into_iter().zip(partials) {
        grads[p][k] = v?;
    }
    Ok(grads)
}

/// Cost and Riemannian gradient (zero on inactive points).
pub fn riemannian_gradient<O: Objective + ?Sized>(
    obj: &O,
    points: &[Point],
    active: &[bool],
    mode: GradMode,
    fd_step: f64,
) -> Result<(f64, Vec<DMatrix<f64>>)> {
    let xs = values(points);
    let analytic = match mode {
        GradMode::Analytic => obj.gradient(&xs),
        GradMode::CentralDifference => None,
    };
    let (f, g) = match analytic {
        Some(r) => r?,
        None => (obj.cost(&xs)?, fd_gradient(obj, &xs, active, fd_step)?),
    };
    let mut out = Vec::with_capacity(points.len());
    for ((p, gi), &on) in points.iter().zip(&g).zip(active) {
        out.push(if on {
            tangent_project(p, gi)?
        } else {
            DMatrix::zeros(gi.nrows(), gi.ncols())
        });
    }
    Ok((f, out))
}

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| frob_dot(x, y)).sum()
}

/// Projected-gradient descent with transported momentum and Armijo
/// backtracking. Only points with `active[i]` move.
pub fn minimize<O: Objective + ?Sized>(
    obj: &O,
    x0: Vec<Point>,
    active: &[bool],
    cfg: &MinimizeConfig,
) -> Result<MinimizeResult> {
    if active.len() != x0.len() {
        return Err(Error::invalid("active mask length differs from the number of points"));
    }
    let mut max_residual = 0.0f64;
    for p in &x0 {
        max_residual = max_residual.max(p.residual());
    }
    let mut points = x0;
    let (mut f, mut rg) = riemannian_gradient(obj, &points, active, cfg.grad_mode, cfg.fd_step)?;
    if !f.is_finite() {
        return Err(Error::invalid("cost is not finite at the starting point"));
    }
    let mut dir: Vec<DMatrix<f64>> = rg.iter().map(|g| -g).collect();
    let mut step = cfg.step;
    let mut trace = vec![f];
    let mut converged = false;
    let mut stalled = false;
    let mut slow_steps = 0usize;
    let mut iters = 0;
    let mut gnorm = inner(&rg, &rg).sqrt();

    while iters < cfg.max_iters {
        if gnorm < cfg.grad_tol {
            converged = true;
            break;
        }
        iters += 1;
        let mut slope = inner(&rg, &dir);
        if !(slope < 0.0) {
            dir = rg.iter().map(|g| -g).collect();
            slope = -gnorm * gnorm;
        }

        let mut t = step;
        let mut accepted: Option<(Vec<Point>, f64)> = None;
        for _ in 0..=cfg.max_halvings {
            let trial: Result<Vec<Point>> = points
                .iter()
                .zip(&dir)
                .zip(active)
                .map(|((p, d), &on)| if on { retract(p, &(d * t)) } else { Ok(p.clone()) })
                .collect();
            if let Ok(trial) = trial {
                if let Ok(ft) = obj.cost(&values(&trial)) {
                    if ft.is_finite() && ft <= f + cfg.armijo_c * t * slope {
                        accepted = Some((trial, ft));
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        let Some((new_points, f_new)) = accepted else {
            stalled = true;
            break;
        };

        for p in &new_points {
            let r = p.residual();
            debug_assert!(r < 1e-10, "iterate left its manifold: residual {r:.3e}");
            max_residual = max_residual.max(r);
        }

        let rel = (f - f_new) / f.abs().max(1e-300);
        slow_steps = if rel < cfg.stall_rel { slow_steps + 1 } else { 0 };

        let (_, rg_new) = riemannian_gradient(obj, &new_points, active, cfg.grad_mode, cfg.fd_step)?;
        let mut new_dir = Vec::with_capacity(points.len());
        for ((p, d), g) in new_points.iter().zip(&dir).zip(&rg_new) {
            let transported = tangent_project(p, d)?;
            new_dir.push(-g + transported * cfg.momentum);
        }
        points = new_points;
        f = f_new;
        rg = rg_new;
        dir = new_dir;
        gnorm = inner(&rg, &rg).sqrt();
        trace.push(f);
        step = (t * 2.0).min(cfg.max_step);

        if slow_steps >= cfg.stall_window {
            stalled = true;
            break;
        }
    }
    if !converged && gnorm < cfg.grad_tol {
        converged = true;
    }
    Ok(MinimizeResult {
        points,
        cost: f,
        iters,
        converged,
        stalled,
        grad_norm: gnorm,
        trace,
        max_residual,
    })
}
