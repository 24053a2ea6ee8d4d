//! Rules turning the two detector posteriors into a clean probability λ and
//! a clean/noisy call. The threshold is `λ > 0.5` everywhere.

use std::f64::consts::PI;

use crate::error::{NlabError, Result};

pub const CLEAN_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionStrategy {
    /// λ = p_loss.
    LossOnly,
    /// λ = min(p_loss, p_conf).
    Hard,
    /// λ = smooth LogSumExp combination, temperature on a cosine ramp.
    Elastic,
}

impl DecisionStrategy {
    pub const ALL: [DecisionStrategy; 3] = [
        DecisionStrategy::LossOnly,
        DecisionStrategy::Hard,
        DecisionStrategy::Elastic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DecisionStrategy::LossOnly => "loss_only",
            DecisionStrategy::Hard => "hard",
            DecisionStrategy::Elastic => "elastic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "loss_only" => Ok(DecisionStrategy::LossOnly),
            "hard" => Ok(DecisionStrategy::Hard),
            "elastic" => Ok(DecisionStrategy::Elastic),
            other => Err(NlabError::Config(format!("unknown decision strategy `{other}`"))),
        }
    }
}

pub fn decide_loss_only(p_loss: f64) -> (f64, bool) {
    (p_loss, p_loss > CLEAN_THRESHOLD)
}

pub fn decide_hard(p_loss: f64, p_conf: f64) -> (f64, bool) {
    let lambda = p_loss.min(p_conf);
    (lambda, lambda > CLEAN_THRESHOLD)
}

/// `α·ln(½(e^{a/α} + e^{b/α}))`: tends to max(a, b) as α → 0⁺ and to
/// min(a, b) as α → 0⁻.
///
/// Inside the guard band `|α| < epsilon` the exact limit is returned
/// (max for α ≥ 0, min for α < 0). The result is clamped to
/// `[min(a, b), max(a, b)]`, which only absorbs rounding.
pub fn smooth_combine(a: f64, b: f64, alpha: f64, epsilon: f64) -> f64 {
    let (lo, hi) = (a.min(b), a.max(b));
    if alpha.abs() < epsilon {
        return if alpha >= 0.0 { hi } else { lo };
    }
    let (x, y) = (a / alpha, b / alpha);
    let m = x.max(y);
    let v = alpha * (m + (0.5 * ((x - m).exp() + (y - m).exp())).ln());
    v.clamp(lo, hi)
}

/// Cosine ramp of the LogSumExp temperature from `alpha_start` at epoch 0
/// to `alpha_end` at `total_epochs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureSchedule {
    pub alpha_start: f64,
    pub alpha_end: f64,
    pub total_epochs: usize,
    pub epsilon: f64,
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        TemperatureSchedule {
            alpha_start: 0.05,
            alpha_end: -0.05,
            total_epochs: 1,
            epsilon: 1e-3,
        }
    }
}

impl TemperatureSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_start.is_finite() && self.alpha_end.is_finite()) {
            return Err(NlabError::Config("temperature endpoints must be finite".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(NlabError::Config("temperature epsilon must be positive".into()));
        }
        Ok(())
    }

    /// Temperature at `epoch`; epochs past the end return `alpha_end`.
    pub fn temperature_at(&self, epoch: usize) -> f64 {
        if epoch >= self.total_epochs {
            return self.alpha_end;
        }
        if epoch == 0 {
            return self.alpha_start;
        }
        let t = epoch as f64 / self.total_epochs as f64;
        self.alpha_end + 0.5 * (self.alpha_start - self.alpha_end) * (1.0 + (PI * t).cos())
    }
}

/// Elastic decision at `epoch` of `schedule`.
///
/// Interior epochs use [`smooth_combine`] at the scheduled temperature.
/// The two endpoint epochs use the limiting rule the endpoint temperature
/// approximates (max for a positive temperature, min for a negative one),
/// so the final epoch reproduces [`decide_hard`] exactly.
pub fn decide_elastic(p_loss: f64, p_conf: f64, schedule: &TemperatureSchedule, epoch: usize) -> (f64, bool) {
    let alpha = schedule.temperature_at(epoch);
    let at_endpoint = epoch == 0 || epoch >= schedule.total_epochs;
    let lambda = if at_endpoint {
        if alpha >= 0.0 {
            p_loss.max(p_conf)
        } else {
            p_loss.min(p_conf)
        }
    } else {
        smooth_combine(p_loss, p_conf, alpha, schedule.epsilon)
    };
    (lambda, lambda > CLEAN_THRESHOLD)
}

/// λ and clean call for any strategy.
pub fn decide(
    strategy: DecisionStrategy,
    p_loss: f64,
    p_conf: f64,
    schedule: &TemperatureSchedule,
    epoch: usize,
) -> (f64, bool) {
    match strategy {
        DecisionStrategy::LossOnly => decide_loss_only(p_loss),
        DecisionStrategy::Hard => decide_hard(p_loss, p_conf),
        DecisionStrategy::Elastic => decide_elastic(p_loss, p_conf, schedule, epoch),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn loss_only_boundary_is_strict() {
        assert_eq!(decide_loss_only(0.9), (0.9, true));
        assert_eq!(decide_loss_only(0.5), (0.5, false));
        assert_eq!(decide_loss_only(0.2), (0.2, false));
    }

    #[test]
    fn hard_takes_minimum() {
        assert_eq!(decide_hard(0.9, 0.4), (0.4, false));
        assert_eq!(decide_hard(0.6, 0.6), (0.6, true));
        assert!(!decide_hard(0.51, 0.49).1);
        assert!(decide_loss_only(0.51).1);
    }

    #[test]
    fn smooth_limits() {
        assert!((smooth_combine(0.2, 0.8, 0.001, 1e-3) - 0.8).abs() < 1e-3);
        assert!((smooth_combine(0.2, 0.8, -0.001, 1e-3) - 0.2).abs() < 1e-3);
        // inside the guard band
        assert_eq!(smooth_combine(0.2, 0.8, 0.0005, 1e-3), 0.8);
        assert_eq!(smooth_combine(0.2, 0.8, -0.0005, 1e-3), 0.2);
    }

    #[test]
    fn smooth_unit_temperature_matches_formula() {
        let direct = (0.5 * (0.2f64.exp() + 0.8f64.exp())).ln();
        let v = smooth_combine(0.2, 0.8, 1.0, 1e-3);
        assert!((v - direct).abs() < 1e-15);
        assert!(v > 0.5 && v < 0.8);
    }

    #[test]
    fn schedule_endpoints_and_midpoint() {
        let s = TemperatureSchedule {
            alpha_start: 0.05,
            alpha_end: -0.05,
            total_epochs: 40,
            epsilon: 1e-3,
        };
        assert_eq!(s.temperature_at(0), 0.05);
        assert_eq!(s.temperature_at(40), -0.05);
        assert!(s.temperature_at(20).abs() < 1e-15);
        let odd = TemperatureSchedule {
            alpha_start: 0.3,
            alpha_end: 0.1,
            total_epochs: 10,
            epsilon: 1e-3,
        };
        assert!((odd.temperature_at(5) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn elastic_is_loose_then_strict() {
        let s = TemperatureSchedule {
            total_epochs: 30,
            ..TemperatureSchedule::default()
        };
        assert_eq!(decide_elastic(0.3, 0.7, &s, 0), (0.7, true));
        assert_eq!(decide_elastic(0.3, 0.7, &s, 30), (0.3, false));
        assert_eq!(decide_elastic(0.3, 0.7, &s, 30), decide_hard(0.3, 0.7));
    }

    proptest! {
        #[test]
        fn smooth_is_bounded_and_symmetric(a in 0.0f64..=1.0, b in 0.0f64..=1.0, alpha in -5.0f64..5.0) {
            let v = smooth_combine(a, b, alpha, 1e-3);
            prop_assert!(a.min(b) <= v && v <= a.max(b));
            prop_assert_eq!(v, smooth_combine(b, a, alpha, 1e-3));
        }

        #[test]
        fn smooth_is_idempotent(x in 0.0f64..=1.0, alpha in -5.0f64..5.0) {
            prop_assert_eq!(smooth_combine(x, x, alpha, 1e-3), x);
        }

        #[test]
        fn schedule_monotone(start in -1.0f64..1.0, drop in 0.0f64..1.0, total in 1usize..200) {
            let s = TemperatureSchedule { alpha_start: start, alpha_end: start - drop, total_epochs: total, epsilon: 1e-3 };
            for t in 0..total {
                prop_assert!(s.temperature_at(t + 1) <= s.temperature_at(t));
            }
        }
    }
}
