use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug)]
pub struct LanczosConfig {
    /// Krylov dimension per restart.
    pub krylov: usize,
    pub max_restarts: usize,
    /// Residual ‖Hv − λv‖ / max(1, |λ|) at which the pair is accepted.
    pub tol: f64,
    /// Problems up to this size are solved by a dense eigendecomposition.
    pub dense_below: usize,
}

impl Default for LanczosConfig {
    fn default() -> Self {
        LanczosConfig {
            krylov: 40,
            max_restarts: 50,
            tol: 1e-9,
            dense_below: 128,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Lowest eigenpair of a symmetric operator given as a matrix-free product.
///
/// `v0` is the starting vector (it need not be normalized but must be
/// nonzero). Thick restarts keep only the current Ritz vector; full
/// reorthogonalization keeps the basis clean at these small sizes.
pub fn lowest_eigenpair<F>(apply: F, v0: &[f64], cfg: &LanczosConfig) -> (f64, Vec<f64>)
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = v0.len();
    if n <= cfg.dense_below {
        return dense_lowest(&apply, n);
    }

    let mut v: Vec<f64> = v0.to_vec();
    let mut best = (f64::INFINITY, v.clone());
    for _ in 0..cfg.max_restarts.max(1) {
        let nv = dot(&v, &v).sqrt();
        if nv == 0.0 {
            v = (0..n).map(|i| 1.0 / (1.0 + i as f64)).collect();
            continue;
        }
        v.iter_mut().for_each(|x| *x /= nv);

        let mut basis: Vec<Vec<f64>> = vec![v.clone()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut ritz = (0.0, DVector::from_element(1, 1.0));
        let m = cfg.krylov.min(n);
        for k in 0..m {
            let mut w = apply(&basis[k]);
            let a = dot(&w, &basis[k]);
            alpha.push(a);
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(&w, q);
                    axpy(&mut w, -c, q);
                }
            }
            let b = dot(&w, &w).sqrt();
            ritz = tridiag_lowest(&alpha, &beta);
            let scale = ritz.0.abs().max(1.0);
            let resid = (b * ritz.1[k]).abs();
            if resid < cfg.tol * scale || b < 1e-14 * scale || k + 1 == m {
                break;
            }
            beta.push(b);
            w.iter_mut().for_each(|x| *x /= b);
            basis.push(w);
        }
        let mut x = vec![0.0; n];
        for (q, c) in basis.iter().zip(ritz.1.iter()) {
            axpy(&mut x, *c, q);
        }
        let nx = dot(&x, &x).sqrt();
        x.iter_mut().for_each(|v| *v /= nx);
        let hx = apply(&x);
        let lam = dot(&x, &hx);
        let resid = hx
            .iter()
            .zip(&x)
            .map(|(h, v)| (h - lam * v).powi(2))
            .sum::<f64>()
            .sqrt();
        if lam < best.0 {
            best = (lam, x.clone());
        }
        if resid < cfg.tol * lam.abs().max(1.0) {
            return (lam, x);
        }
        v = x;
    }
    best
}

fn tridiag_lowest(alpha: &[f64], beta: &[f64]) -> (f64, DVector<f64>) {
    let k = alpha.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = t.symmetric_eigen();
    let (idx, val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))
        .expect("nonempty");
    (val, eig.eigenvectors.column(idx).into_owned())
}

fn dense_lowest<F>(apply: &F, n: usize) -> (f64, Vec<f64>)
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut h = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = apply(&e);
        e[j] = 0.0;
        for i in 0..n {
            h[(i, j)] = col[i];
        }
    }
    let h = (&h + h.transpose()) * 0.5;
    let eig = h.symmetric_eigen();
    let (idx, val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))
        .expect("nonempty");
    (val, eig.eigenvectors.column(idx).iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, seeded_rng};

    #[test]
    fn matches_dense_on_random_symmetric() {
        let mut rng = seeded_rng(9, 0);
        let n = 300;
        let g = gaussian_matrix(n, n, &mut rng);
        let mut h = (&g + g.transpose()) * 0.05;
        for i in 0..n {
            h[(i, i)] += i as f64 * 0.1;
        }
        let want = h.clone().symmetric_eigen().eigenvalues.min();
        let v0: Vec<f64> = (0..n).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
        let cfg = LanczosConfig::default();
        let (lam, x) = lowest_eigenpair(|v| (&h * DVector::from_column_slice(v)).as_slice().to_vec(), &v0, &cfg);
        assert!((lam - want).abs() < 1e-8, "{lam} vs {want}");
        let xv = DVector::from_vec(x);
        assert!((&h * &xv - &xv * lam).norm() < 1e-7);
    }
}
