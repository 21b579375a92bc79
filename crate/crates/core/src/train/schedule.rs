use super::{Result, TrainError};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    /// Cosine annealing from `lr0` down to `lr0 / 100` at `max_epochs`.
    Cosine,
    /// `lr0 · factor^⌊epoch / interval⌋`.
    Step { interval: usize, factor: f64 },
    Constant,
}

impl LrSchedule {
    pub fn step_default() -> Self {
        Self::Step {
            interval: 10,
            factor: 0.5,
        }
    }

    pub fn lr(&self, epoch: usize, lr0: f64, max_epochs: usize) -> Result<f64> {
        if epoch > max_epochs {
            return Err(TrainError::Config(format!("epoch {epoch} beyond max_epochs {max_epochs}")));
        }
        Ok(match *self {
            Self::Cosine => {
                let lr_min = lr0 / 100.0;
                if max_epochs == 0 {
                    return Ok(lr0);
                }
                // convex-combination form keeps both endpoints exact
                let c = 0.5 * (1.0 + (PI * epoch as f64 / max_epochs as f64).cos());
                c * lr0 + (1.0 - c) * lr_min
            }
            Self::Step { interval, factor } => {
                if interval == 0 {
                    return Err(TrainError::Config("step schedule interval must be positive".into()));
                }
                lr0 * factor.powi((epoch / interval) as i32)
            }
            Self::Constant => lr0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(LrSchedule::Cosine.lr(0, 0.001, 100).unwrap(), 0.001);
        assert_eq!(LrSchedule::Cosine.lr(100, 0.001, 100).unwrap(), 0.001 / 100.0);
        let mid = LrSchedule::Cosine.lr(50, 0.001, 100).unwrap();
        assert!((mid - (0.00001 + 0.5 * 0.00099)).abs() < 1e-15, "{mid}");
        assert!(LrSchedule::Cosine.lr(101, 0.001, 100).is_err());
    }

    #[test]
    fn step_decay() {
        let s = LrSchedule::step_default();
        assert_eq!(s.lr(25, 0.0001, 100).unwrap(), 0.0001 * 0.25);
        assert_eq!(s.lr(9, 0.0001, 100).unwrap(), 0.0001);
    }
}
