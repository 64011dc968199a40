use serde::{Deserialize, Serialize};

use super::scan::ScanPoint;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub slope: f64,
    pub intercept: f64,
    /// Field at which the fitted line crosses 1/2.
    pub h_star: f64,
    /// Mean absolute residual over the fitted points.
    pub mae: f64,
    /// Weighted coefficient of determination.
    pub r_squared: f64,
    pub points_used: Vec<(f64, f64)>,
}

/// Weighted least squares y ≈ slope·h + intercept.
pub fn weighted_line(h: &[f64], y: &[f64], w: &[f64]) -> Result<RegressionResult> {
    if h.len() != y.len() || h.len() != w.len() || h.len() < 2 {
        return Err(Error::invalid("weighted fit needs at least two matching points"));
    }
    if w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::invalid("weights must be positive and finite"));
    }
    let sw: f64 = w.iter().sum();
    let hm = h.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = h.iter().zip(w).map(|(a, b)| b * (a - hm).powi(2)).sum();
    let sxy: f64 = h.iter().zip(y).zip(w).map(|((a, c), b)| b * (a - hm) * (c - ym)).sum();
    let spread = h.iter().map(|a| (a - hm).abs()).fold(0.0, f64::max);
    if spread <= 1e-12 * hm.abs().max(1.0) {
        return Err(Error::invalid("singular design: all fields are equal"));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * hm;
    let resid: Vec<f64> = h.iter().zip(y).map(|(a, c)| c - (slope * a + intercept)).collect();
    let mae = resid.iter().map(|r| r.abs()).sum::<f64>() / h.len() as f64;
    let ss_res: f64 = resid.iter().zip(w).map(|(r, b)| b * r * r).sum();
    let ss_tot: f64 = y.iter().zip(w).map(|(c, b)| b * (c - ym).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(RegressionResult {
        slope,
        intercept,
        h_star: (0.5 - intercept) / slope,
        mae,
        r_squared,
        points_used: h.iter().copied().zip(y.iter().copied()).collect(),
    })
}

/// Fits the `n_points` scan points whose PM fraction is closest to 1/2,
/// weighting each by 1/half_width².
pub fn fit_transition(scan: &[ScanPoint], n_points: usize) -> Result<RegressionResult> {
    if n_points < 3 || scan.len() < 3 {
        return Err(Error::invalid("transition fit needs at least three points"));
    }
    let mut pts: Vec<&ScanPoint> = scan.iter().collect();
    pts.sort_by(|a, b| (a.fraction_pm - 0.5).abs().total_cmp(&(b.fraction_pm - 0.5).abs()).then(a.h.total_cmp(&b.h)));
    pts.truncate(n_points);
    pts.sort_by(|a, b| a.h.total_cmp(&b.h));
    let h: Vec<f64> = pts.iter().map(|p| p.h).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.fraction_pm).collect();
    let w: Vec<f64> = pts.iter().map(|p| 1.0 / (p.wilson_half_width * p.wilson_half_width)).collect();
    weighted_line(&h, &y, &w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn collinear_crossing() {
        let r = weighted_line(&[0.9, 1.0, 1.1], &[0.6, 0.5, 0.4], &[1.0; 3]).unwrap();
        assert!((r.h_star - 1.0).abs() < 1e-12);
        assert!((r.slope + 1.0).abs() < 1e-12);
        assert!(r.mae < 1e-12 && (r.r_squared - 1.0).abs() < 1e-12);
        assert!(weighted_line(&[1.0; 3], &[0.1, 0.2, 0.3], &[1.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn duplication_and_weight_scale_invariance(
            pts in proptest::collection::vec((0.0f64..2.0, 0.0f64..1.0, 0.1f64..10.0), 3..10),
            scale in 0.01f64..100.0,
        ) {
            let h: Vec<f64> = pts.iter().map(|p| p.0).collect();
            prop_assume!(h.iter().any(|&x| (x - h[0]).abs() > 1e-3));
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let w: Vec<f64> = pts.iter().map(|p| p.2).collect();
            let base = weighted_line(&h, &y, &w).unwrap();
            let ws: Vec<f64> = w.iter().map(|x| x * scale).collect();
            let scaled = weighted_line(&h, &y, &ws).unwrap();
            let dup = |v: &[f64]| v.iter().chain(v).copied().collect::<Vec<_>>();
            let doubled = weighted_line(&dup(&h), &dup(&y), &dup(&w)).unwrap();
            for r in [scaled, doubled] {
                prop_assert!((r.slope - base.slope).abs() < 1e-8 * (1.0 + base.slope.abs()));
                prop_assert!((r.intercept - base.intercept).abs() < 1e-8 * (1.0 + base.intercept.abs()));
                prop_assert!((r.r_squared - base.r_squared).abs() < 1e-8);
            }
        }
    }
}
