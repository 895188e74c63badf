use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training progress used by the ramp-up schedules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    pub t: u64,
    pub t_max: u64,
    pub lambda_c_final: f64,
}

impl ScheduleState {
    pub fn new(t: u64, t_max: u64, lambda_c_final: f64) -> Result<Self> {
        let s = ScheduleState { t, t_max, lambda_c_final };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_max == 0 {
            return Err(Error::InvalidConfig("t_max must be positive".into()));
        }
        if self.t > self.t_max {
            return Err(Error::InvalidConfig(format!("step {} beyond t_max {}", self.t, self.t_max)));
        }
        if !(self.lambda_c_final >= 0.0) {
            return Err(Error::InvalidConfig("lambda_c_final must be >= 0".into()));
        }
        Ok(())
    }

    /// `exp(-5 (1 - t/t_max)^2)`, rising from e^-5 to 1.
    fn kernel(&self) -> f64 {
        let r = 1.0 - self.t as f64 / self.t_max as f64;
        (-5.0 * r * r).exp()
    }
}

/// Consistency weight `lambda_final * exp(-5 (1 - t/t_max)^2)`.
pub fn gaussian_rampup(s: &ScheduleState) -> Result<f64> {
    s.validate()?;
    Ok(s.lambda_c_final * s.kernel())
}

/// Uncertainty cut-off `ln 2 * (3/4 + 1/4 * exp(-5 (1 - t/t_max)^2))`.
pub fn uncertainty_threshold(s: &ScheduleState) -> Result<f64> {
    s.validate()?;
    Ok(std::f64::consts::LN_2 * (0.75 + 0.25 * s.kernel()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_values() {
        let end = ScheduleState::new(100, 100, 0.01).unwrap();
        assert!((gaussian_rampup(&end).unwrap() - 0.01).abs() < 1e-15);
        let start = ScheduleState::new(0, 100, 1.0).unwrap();
        // e^-5 to 7 digits.
        assert!((gaussian_rampup(&start).unwrap() - 0.006_737_947).abs() < 1e-9);
        for t in [0, 30, 100] {
            assert_eq!(gaussian_rampup(&ScheduleState::new(t, 100, 0.0).unwrap()).unwrap(), 0.0);
        }
    }

    #[test]
    fn threshold_values() {
        let ln2 = std::f64::consts::LN_2;
        let at = |t| uncertainty_threshold(&ScheduleState::new(t, 1000, 0.01).unwrap()).unwrap();
        assert!((at(1000) - ln2).abs() < 1e-15);
        assert!((at(0) - 0.521_028).abs() < 1e-6);
        // ln 2 (0.75 + 0.25 e^-1.25), expanded by hand.
        let half = 0.693_147_180_559_945 * (0.75 + 0.25 * 0.286_504_796_860_190);
        assert!((at(500) - half).abs() < 1e-12);
        assert!((at(500) - 0.569).abs() < 1e-3);
    }

    #[test]
    fn schedules_are_monotone() {
        let (mut prev_l, mut prev_t) = (f64::MIN, f64::MIN);
        for t in 0..=1000 {
            let s = ScheduleState::new(t, 1000, 0.5).unwrap();
            let (l, tau) = (gaussian_rampup(&s).unwrap(), uncertainty_threshold(&s).unwrap());
            assert!(l >= prev_l && tau >= prev_t);
            (prev_l, prev_t) = (l, tau);
        }
    }

    #[test]
    fn invalid_states() {
        assert!(ScheduleState::new(0, 0, 1.0).is_err());
        assert!(ScheduleState::new(5, 4, 1.0).is_err());
        assert!(ScheduleState::new(1, 4, -1.0).is_err());
        let raw = ScheduleState { t: 0, t_max: 0, lambda_c_final: 1.0 };
        assert!(gaussian_rampup(&raw).is_err());
        assert!(uncertainty_threshold(&raw).is_err());
    }
}
