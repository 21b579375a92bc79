use super::{DataError, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Per-feature z-score over the last axis, fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    /// Fits on the first `train_steps` steps of a `T×N×d` panel. A feature
    /// with zero spread gets `std = 1`.
    pub fn fit(panel: &Tensor, train_steps: usize) -> Result<Self> {
        let (t_len, n, d) = match panel.shape() {
            [t, n, d] => (*t, *n, *d),
            s => return Err(DataError::InvalidArgument(format!("panel must be T×N×d, got {s:?}"))),
        };
        if train_steps == 0 || train_steps > t_len || n == 0 {
            return Err(DataError::Empty(format!("training split has {train_steps} of {t_len} steps")));
        }
        let rows = &panel.data()[..train_steps * n * d];
        let count = (train_steps * n) as f64;
        let mut mean = vec![0.0; d];
        for chunk in rows.chunks(d) {
            mean.iter_mut().zip(chunk).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; d];
        for chunk in rows.chunks(d) {
            for ((v, x), m) in var.iter_mut().zip(chunk).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .iter()
            .zip(&mean)
            .enumerate()
            .map(|(j, (v, m))| {
                let s = (v / count).sqrt();
                if s <= 1e-12 * m.abs().max(1.0) {
                    log::warn!("feature {j} has zero variance on the training split; std set to 1");
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, t: &Tensor) -> Result<usize> {
        let last = *t.shape().last().unwrap_or(&0);
        if last == 0 || last > self.dims() {
            return Err(DataError::InvalidArgument(format!(
                "last axis {last} incompatible with a {}-feature scaler",
                self.dims()
            )));
        }
        Ok(last)
    }

    /// Scales the leading `c` features, `c` being the size of the last axis.
    pub fn transform(&self, t: &Tensor) -> Result<Tensor> {
        let c = self.check(t)?;
        Ok(Tensor::from_fn(t.shape().to_vec(), |k| {
            let j = k % c;
            (t.data()[k] - self.mean[j]) / self.std[j]
        }))
    }

    /// Inverse of [`Scaler::transform`].
    pub fn inverse(&self, t: &Tensor) -> Result<Tensor> {
        let c = self.check(t)?;
        Ok(Tensor::from_fn(t.shape().to_vec(), |k| {
            let j = k % c;
            t.data()[k] * self.std[j] + self.mean[j]
        }))
    }
}

/// Fits a scaler on the first `train_steps` rows and scales the whole panel.
pub fn fit_apply_scaler(panel: &Tensor, train_steps: usize) -> Result<(Tensor, Scaler)> {
    let s = Scaler::fit(panel, train_steps)?;
    Ok((s.transform(panel)?, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_only_statistics() {
        // train rows {1, 3}; the held-out 100 must not move the mean
        let p = Tensor::new(vec![3, 1, 1], vec![1.0, 3.0, 100.0]).unwrap();
        let (scaled, s) = fit_apply_scaler(&p, 2).unwrap();
        assert_eq!((s.mean[0], s.std[0]), (2.0, 1.0));
        assert_eq!(scaled.data()[1], 1.0);
        assert_eq!(scaled.data()[2], 98.0);
    }

    #[test]
    fn constant_feature() {
        let p = Tensor::full(vec![4, 2, 1], 5.0);
        let (scaled, s) = fit_apply_scaler(&p, 3).unwrap();
        assert_eq!(s.std[0], 1.0);
        assert!(scaled.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn target_channels_use_leading_stats() {
        let p = Tensor::new(vec![2, 1, 2], vec![0.0, 10.0, 2.0, 30.0]).unwrap();
        let s = Scaler::fit(&p, 2).unwrap();
        let target = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        assert_eq!(s.transform(&target).unwrap().data(), &[0.0]);
        assert!(s.transform(&Tensor::zeros(vec![1, 3])).is_err());
        assert!(Scaler::fit(&p, 0).is_err());
    }
}
