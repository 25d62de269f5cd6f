use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Loss {
    /// `1/2 sum (y - y_hat)^2`, for the bit detectors.
    Mse,
    /// Categorical cross-entropy on a softmax output, for the classifier.
    CrossEntropy,
}

/// Probabilities are clamped to this floor before the logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("loss operands {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// `J = 1/2 sum (y - y_hat)^2` and `dJ/dy_hat = y_hat - y`.
pub fn mse_loss(y: &Tensor, y_hat: &Tensor) -> Result<(f64, Tensor)> {
    same_shape(y, y_hat)?;
    let mut grad = y_hat.clone();
    let mut j = 0.0;
    for (g, t) in grad.data_mut().iter_mut().zip(y.data()) {
        *g -= t;
        j += 0.5 * *g * *g;
    }
    Ok((j, grad))
}

/// `-sum y log(y_hat)` with `y_hat` a softmax output. The returned gradient
/// is taken w.r.t. the softmax logits, `y_hat - y`.
pub fn cross_entropy_loss(one_hot: &Tensor, softmax_out: &Tensor) -> Result<(f64, Tensor)> {
    same_shape(one_hot, softmax_out)?;
    let mut j = 0.0;
    for (t, p) in one_hot.data().iter().zip(softmax_out.data()) {
        if *t != 0.0 {
            j -= t * p.clamp(LOG_CLAMP, 1.0).ln();
        }
    }
    let mut grad = softmax_out.clone();
    for (g, t) in grad.data_mut().iter_mut().zip(one_hot.data()) {
        *g -= t;
    }
    Ok((j, grad))
}

/// Fraction of outputs that land on the label after thresholding.
pub fn binary_accuracy(y: &Tensor, y_hat: &Tensor, threshold: f64) -> Result<f64> {
    same_shape(y, y_hat)?;
    if y.is_empty() {
        return Ok(0.0);
    }
    let hits = y
        .data()
        .iter()
        .zip(y_hat.data())
        .filter(|(t, p)| (**p > threshold) == (**t > threshold))
        .count();
    Ok(hits as f64 / y.len() as f64)
}

pub fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Fraction of rows whose argmax matches the label's argmax.
pub fn categorical_accuracy(y: &Tensor, y_hat: &Tensor) -> Result<f64> {
    same_shape(y, y_hat)?;
    let rows = y.rows();
    if rows == 0 {
        return Ok(0.0);
    }
    let hits = (0..rows).filter(|&r| argmax(y.row(r)) == argmax(y_hat.row(r))).count();
    Ok(hits as f64 / rows as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, v: Vec<f64>) -> Tensor {
        let cols = v.len() / rows;
        Tensor::from_rows(rows, cols, v).unwrap()
    }

    #[test]
    fn mse_examples() {
        let y = t(1, vec![1.0, 0.0]);
        assert_eq!(mse_loss(&y, &y).unwrap().0, 0.0);
        let (j, g) = mse_loss(&y, &t(1, vec![0.0, 0.0])).unwrap();
        assert_eq!(j, 0.5);
        assert_eq!(g.data(), &[-1.0, 0.0]);
        assert!(mse_loss(&y, &t(1, vec![0.0])).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let y = t(1, vec![0.0, 1.0, 0.0, 0.0, 0.0]);
        let (j, _) = cross_entropy_loss(&y, &t(1, vec![0.0, 1.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(j, 0.0);
        let (j, _) = cross_entropy_loss(&y, &t(1, vec![0.2; 5])).unwrap();
        assert!((j - 5f64.ln()).abs() < 1e-12);
        let (j, _) = cross_entropy_loss(&y, &t(1, vec![1.0, 0.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(j.is_finite());
        assert!((j + LOG_CLAMP.ln()).abs() < 1e-9);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(binary_accuracy(&t(1, vec![1.0]), &t(1, vec![0.9]), 0.5).unwrap(), 1.0);
        assert_eq!(binary_accuracy(&t(1, vec![1.0, 0.0]), &t(1, vec![0.1, 0.7]), 0.5).unwrap(), 0.0);
        let bits = t(1, vec![1.0, 0.0, 1.0, 1.0]);
        let soft = t(1, vec![0.8, 0.6, 0.2, 0.9]);
        let ber = 2.0 / 4.0;
        assert_eq!(binary_accuracy(&bits, &soft, 0.5).unwrap(), 1.0 - ber);
        assert_eq!(categorical_accuracy(&t(2, vec![0.0, 1.0, 1.0, 0.0]), &t(2, vec![0.3, 0.7, 0.4, 0.6])).unwrap(), 0.5);
    }
}
