use super::{EvalError, Result};
use crate::data::{SampleSet, Scaler};
use crate::model::StgcnModel;
use crate::tensor::Tensor;

/// Mean absolute error over all elements.
pub fn mae(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(EvalError::Shape(format!(
            "prediction {:?} vs truth {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    if pred.is_empty() {
        return Err(EvalError::Shape("empty tensors have no MAE".into()));
    }
    let total: f64 = pred.data().iter().zip(truth.data()).map(|(p, t)| (p - t).abs()).sum();
    Ok(total / pred.len() as f64)
}

/// Historical-average forecast: every one of the `n` output steps is the
/// mean of the `m` history steps, per station and channel.
///
/// `history` is `B×m×N×c`; the result is `B×n×N×c`.
pub fn ha_forecast(history: &Tensor, n: usize) -> Result<Tensor> {
    let (b, m, nodes, c) = match history.shape() {
        [b, m, nn, c] => (*b, *m, *nn, *c),
        s => return Err(EvalError::Shape(format!("history must be B×m×N×c, got {s:?}"))),
    };
    if m == 0 {
        return Err(EvalError::Shape("empty history".into()));
    }
    let plane = nodes * c;
    let h = history.data();
    let mut means = vec![0.0; b * plane];
    for bi in 0..b {
        for t in 0..m {
            let src = &h[(bi * m + t) * plane..(bi * m + t + 1) * plane];
            means[bi * plane..(bi + 1) * plane]
                .iter_mut()
                .zip(src)
                .for_each(|(acc, x)| *acc += x);
        }
    }
    means.iter_mut().for_each(|v| *v /= m as f64);
    Ok(Tensor::from_fn(vec![b, n, nodes, c], |k| {
        let bi = k / (n * plane);
        means[bi * plane + k % plane]
    }))
}

/// Runs the model over every window of `set` and returns predictions and
/// targets in original units, both `S×n×N×c`.
pub fn predict_split(model: &StgcnModel, set: &SampleSet, scaler: &Scaler, batch: usize) -> Result<(Tensor, Tensor)> {
    let idx = set.indices();
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for chunk in idx.chunks(batch.max(1)) {
        let y = model.predict(&set.inputs(chunk))?;
        pred.extend(scaler.inverse(&y)?.into_data());
        truth.extend(set.targets_raw(chunk).into_data());
    }
    let shape = vec![idx.len(), set.output_len(), set.num_nodes(), set.target_channels()];
    Ok((Tensor::new(shape.clone(), pred)?, Tensor::new(shape, truth)?))
}

/// Historical-average predictions and targets over every window of `set`.
pub fn ha_split(set: &SampleSet) -> Result<(Tensor, Tensor)> {
    let idx = set.indices();
    let pred = ha_forecast(&set.history_raw(&idx), set.output_len())?;
    Ok((pred, set.targets_raw(&idx)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mae_closed_form() {
        let p = Tensor::zeros(vec![3]);
        let t = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(mae(&p, &t).unwrap(), 2.0);
        assert_eq!(mae(&t, &t).unwrap(), 0.0);
        assert!(mae(&p, &Tensor::zeros(vec![2])).is_err());
    }

    #[test]
    fn ha_closed_form() {
        let h = Tensor::new(vec![1, 3, 1, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let f = ha_forecast(&h, 2).unwrap();
        assert_eq!(f.shape(), &[1, 2, 1, 1]);
        assert_eq!(f.data(), &[2.0, 2.0]);
        let h = Tensor::full(vec![2, 4, 3, 2], 5.0);
        assert!(ha_forecast(&h, 3).unwrap().data().iter().all(|&v| v == 5.0));
        assert!(ha_forecast(&Tensor::zeros(vec![1, 0, 1, 1]), 1).is_err());
    }
}
