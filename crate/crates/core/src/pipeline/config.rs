use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(usize),
        Many(Vec<usize>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(v) => v,
    })
}

/// Every hyperparameter of the end-to-end run. Unknown keys are rejected so
/// typos surface instead of silently falling back to defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Discriminator bond dimensions; a single number is accepted.
    #[serde(deserialize_with = "one_or_many")]
    pub chi: Vec<usize>,
    pub nb: usize,
    pub nb_prime: usize,
    pub lambda: f64,
    pub eta: f64,
    pub epochs: usize,
    pub tol: f64,
    pub beam: usize,
    pub h_z2: f64,
    #[serde(rename = "F")]
    pub f: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub chi_max: usize,
    pub eps: f64,
    pub p_star: f64,

    /// Shots per basis per training field.
    pub shots: usize,
    pub h_afm: f64,
    pub h_pm: f64,
    pub train_fraction: f64,
    pub restarts: usize,
    pub gauge_restarts: usize,
    pub max_cnots: usize,
    pub rf_trees: usize,
    /// Fields for the phase scans.
    pub scan_h: Vec<f64>,
    /// Shots per basis per field in product-mode scans.
    pub scan_shots: usize,
    /// Simulated circuit shots per field in entangled-mode scans.
    pub entangled_shots: usize,
    /// Bond dimension of the iMPS test states.
    pub chi_i: usize,
    pub imps_restarts: usize,
    /// Points closest to 50% used in the transition fit.
    pub fit_points: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            chi: vec![2, 4, 8],
            nb: 6,
            nb_prime: 6,
            lambda: 0.9,
            eta: 2.0,
            epochs: 30,
            tol: 4e-4,
            beam: 5,
            h_z2: 10.0,
            f: 32,
            l: 6,
            chi_max: 40,
            eps: 1e-6,
            p_star: 0.9,
            shots: 1000,
            h_afm: 0.1,
            h_pm: 10.0,
            train_fraction: 0.8,
            restarts: 5,
            gauge_restarts: 4,
            max_cnots: 100,
            rf_trees: 20,
            scan_h: default_scan_grid(),
            scan_shots: 500,
            entangled_shots: 1000,
            chi_i: 4,
            imps_restarts: 2,
            fit_points: 6,
            seed: 0,
        }
    }
}

/// Coarse outside [0.5, 1.5], 0.05 spacing inside it.
pub fn default_scan_grid() -> Vec<f64> {
    let mut g: Vec<f64> = vec![0.1, 0.2, 0.3, 0.4];
    g.extend((0..=20).map(|k| 0.5 + 0.05 * k as f64));
    g.extend([1.75, 2.0, 2.5, 3.0, 4.0, 5.0, 7.0, 10.0]);
    g.iter().map(|x| (x * 1e6).round() / 1e6).collect()
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        if self.chi.is_empty() || self.chi.iter().any(|&c| crate::linalg::log2_exact(c).is_none_or(|k| k == 0)) {
            return bad("chi values must be powers of two ≥ 2");
        }
        if self.l == 0 || self.l > self.f {
            return bad("need 0 < L ≤ F");
        }
        if self.nb == 0 || self.nb_prime == 0 || self.shots == 0 || self.chi_max == 0 {
            return bad("nb, nb_prime, shots and chi_max must be positive");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must lie in (0, 1)");
        }
        if !(self.p_star > 0.5 && self.p_star < 1.0) {
            return bad("p_star must lie in (1/2, 1)");
        }
        if !(self.tol > 0.0) || self.beam == 0 {
            return bad("tol must be positive and beam at least 1");
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) || !(self.eta > 0.0) {
            return bad("lambda must lie in (0, 1] and eta must be positive");
        }
        if self.fit_points < 3 {
            return bad("fit_points must be at least 3");
        }
        Ok(())
    }

    /// Index of the first site of the centered window.
    pub fn window_start(&self) -> usize {
        (self.f - self.l) / 2
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_and_scalar_chi() {
        let c = PipelineConfig::from_json(r#"{"chi": 2, "F": 16, "L": 4, "nb": 4, "nb_prime": 4, "lambda": 0.5}"#).unwrap();
        assert_eq!(c.chi, vec![2]);
        assert_eq!((c.f, c.l, c.window_start()), (16, 4, 6));
        assert!(PipelineConfig::from_json(r#"{"chii": 2}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"L": 40}"#).is_err());
        let d = PipelineConfig::default();
        let back = PipelineConfig::from_json(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
    }
}
