use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::tasks::Target;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    Mae,
    CrossEntropy,
}

fn check(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::Empty("loss input"));
    }
    if pred.len() != target.len() {
        return Err(Error::shape("loss", (pred.len(), 1), (target.len(), 1)));
    }
    Ok(())
}

pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check(pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64)
}

pub fn mae(pred: &[f64], target: &[f64]) -> Result<f64> {
    check(pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `−log softmax(logits)[label]`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::Empty("logits"));
    }
    if label >= logits.len() {
        return Err(Error::Data(format!("label {label} out of range for {} classes", logits.len())));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    Ok(lse - logits[label])
}

impl LossKind {
    /// Loss and its gradient with respect to `output`.
    pub fn value_and_grad(self, output: &Vector, target: Target<'_>) -> Result<(f64, Vector)> {
        let y = output.as_slice();
        match (self, target) {
            (LossKind::Mse, Target::Values(t)) => {
                let n = y.len() as f64;
                let g = y.iter().zip(t).map(|(p, t)| 2.0 * (p - t) / n).collect::<Vec<_>>();
                Ok((mse(y, t)?, g.into()))
            }
            (LossKind::Mae, Target::Values(t)) => {
                let n = y.len() as f64;
                let g = y.iter().zip(t).map(|(p, t)| (p - t).signum() * f64::from(p != t) / n).collect::<Vec<_>>();
                Ok((mae(y, t)?, g.into()))
            }
            (LossKind::CrossEntropy, Target::Label(l)) => {
                let loss = cross_entropy(y, l)?;
                let mut g = softmax(y);
                g[l] -= 1.0;
                Ok((loss, g.into()))
            }
            (kind, _) => Err(Error::Config(format!("loss {kind:?} does not fit this task's targets"))),
        }
    }
}
