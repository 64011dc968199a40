//! Finite-shot statistics: Wilson score intervals and an online Bayesian
//! stopping rule for binary class calls.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normal quantile for a two-sided 90% interval.
pub const Z90: f64 = 1.645;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotTally {
    pub n0: u64,
    pub n1: u64,
}

impl ShotTally {
    pub fn n(&self) -> u64 {
        self.n0 + self.n1
    }

    pub fn from_labels(labels: &[usize]) -> Self {
        let n0 = labels.iter().filter(|&&l| l == 0).count() as u64;
        ShotTally {
            n0,
            n1: labels.len() as u64 - n0,
        }
    }
}

/// Wilson score interval for the class-0 probability as (center, half width).
pub fn wilson_interval(t: ShotTally, z: f64) -> Result<(f64, f64)> {
    if t.n() == 0 {
        return Err(Error::invalid("Wilson interval needs at least one shot"));
    }
    if !(z > 0.0) {
        return Err(Error::invalid("z must be positive"));
    }
    let n = t.n() as f64;
    let (n0, n1) = (t.n0 as f64, t.n1 as f64);
    let z2 = z * z;
    let center = (n0 + 0.5 * z2) / (n + z2);
    let half = z / (n + z2) * (n0 * n1 / n + 0.25 * z2).sqrt();
    Ok((center, half))
}

/// Posterior state under a uniform prior on p₀.
///
/// `p_less` is P(p₀ ≤ ½ | n0, n1) = I_½(n0+1, n1+1) and `b` holds
/// 2^{n0+n1+2}·B(n0+1, n1+1), so that both update with one multiply-add per
/// shot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesState {
    pub n0: u64,
    pub n1: u64,
    pub p_less: f64,
    pub b: f64,
}

impl Default for BayesState {
    fn default() -> Self {
        BayesState {
            n0: 0,
            n1: 0,
            p_less: 0.5,
            b: 4.0,
        }
    }
}

impl BayesState {
    pub fn step(self, observation: u8) -> Self {
        let (n0, n1) = (self.n0 as f64, self.n1 as f64);
        if observation == 0 {
            BayesState {
                n0: self.n0 + 1,
                n1: self.n1,
                p_less: self.p_less - 1.0 / ((n0 + 1.0) * self.b),
                b: 2.0 * self.b * (n0 + 1.0) / (n0 + n1 + 2.0),
            }
        } else {
            BayesState {
                n0: self.n0,
                n1: self.n1 + 1,
                p_less: self.p_less + 1.0 / ((n1 + 1.0) * self.b),
                b: 2.0 * self.b * (n1 + 1.0) / (n0 + n1 + 2.0),
            }
        }
    }

    pub fn map_estimate(&self) -> Option<f64> {
        let n = self.n0 + self.n1;
        (n > 0).then(|| self.n0 as f64 / n as f64)
    }
}

pub fn bayes_step(state: BayesState, observation: u8) -> BayesState {
    state.step(observation)
}

/// 10·⌈1/(1−p*)²⌉.
pub fn default_shot_cap(p_star: f64) -> usize {
    // the slack keeps 1/0.1² = 100.000…01 from rounding up to 101
    10 * (1.0 / ((1.0 - p_star) * (1.0 - p_star)) - 1e-9).ceil() as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassCall {
    pub label: usize,
    pub shots_used: usize,
    pub map_estimate: f64,
    /// The shot cap was hit before the posterior became decisive.
    pub capped: bool,
    pub p_less: f64,
}

/// Draws shots until P(p₀ ≤ ½) leaves [1−p*, p*], or the cap is reached, in
/// which case the majority label is returned (ties go to class 0).
pub fn class_from_samples<F: FnMut() -> u8>(p_star: f64, mut sampler: F, shot_cap: usize) -> Result<ClassCall> {
    if !(p_star > 0.5 && p_star < 1.0) {
        return Err(Error::invalid("p_star must lie in (1/2, 1)"));
    }
    if shot_cap == 0 {
        return Err(Error::invalid("shot cap must be positive"));
    }
    let mut st = BayesState::default();
    for k in 1..=shot_cap {
        st = st.step(sampler());
        let decided = if st.p_less > p_star {
            Some(1)
        } else if st.p_less < 1.0 - p_star {
            Some(0)
        } else {
            None
        };
        if let Some(label) = decided {
            return Ok(ClassCall {
                label,
                shots_used: k,
                map_estimate: st.map_estimate().expect("at least one shot"),
                capped: false,
                p_less: st.p_less,
            });
        }
    }
    Ok(ClassCall {
        label: usize::from(st.n1 > st.n0),
        shots_used: shot_cap,
        map_estimate: st.map_estimate().expect("at least one shot"),
        capped: true,
        p_less: st.p_less,
    })
}
