use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probabilities below this are clamped before taking the log.
pub const CE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Mean of squared differences.
    Mse,
    /// `-ln p[target]` for a probability vector and one-hot target.
    CrossEntropy,
    /// Sum of squared differences.
    L2Sq,
}

pub fn loss(kind: LossKind, prediction: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    let (value, grad) = loss_slice(kind, prediction.data(), target.data())?;
    Ok((value, Tensor::from_vec(grad)))
}

pub fn loss_slice(kind: LossKind, prediction: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if prediction.len() != target.len() {
        return Err(Error::dim("loss target", prediction.len(), target.len()));
    }
    match kind {
        LossKind::L2Sq => {
            let grad: Vec<f64> = prediction.iter().zip(target).map(|(p, t)| 2.0 * (p - t)).collect();
            let value = prediction.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
            Ok((value, grad))
        }
        LossKind::Mse => {
            let n = prediction.len().max(1) as f64;
            let grad: Vec<f64> = prediction
                .iter()
                .zip(target)
                .map(|(p, t)| 2.0 * (p - t) / n)
                .collect();
            let value = prediction
                .iter()
                .zip(target)
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                / n;
            Ok((value, grad))
        }
        LossKind::CrossEntropy => {
            let hot: Vec<usize> = target
                .iter()
                .enumerate()
                .filter(|(_, &t)| t != 0.0)
                .map(|(i, _)| i)
                .collect();
            if hot.len() != 1 || target[hot[0]] != 1.0 {
                return Err(Error::InvalidParameter(
                    "cross-entropy target must be one-hot".into(),
                ));
            }
            if prediction.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::Range("cross-entropy prediction is not a probability vector".into()));
            }
            let k = hot[0];
            let p = prediction[k].max(CE_CLAMP);
            let mut grad = vec![0.0; prediction.len()];
            grad[k] = -1.0 / p;
            Ok((-p.ln(), grad))
        }
    }
}

pub fn one_hot(class: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[class] = 1.0;
    v
}
