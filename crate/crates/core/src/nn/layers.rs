//! Layer kernels: activations, dense and "same"-padded 1-D convolution,
//! each with an exact backward pass.

use serde::{Deserialize, Serialize};

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    None,
    Relu,
    Sigmoid,
    Softmax,
}

impl Activation {
    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::None => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
            Activation::Softmax => 3,
        }
    }

    pub(crate) fn from_code(c: u8) -> Result<Self> {
        Ok(match c {
            0 => Activation::None,
            1 => Activation::Relu,
            2 => Activation::Sigmoid,
            3 => Activation::Softmax,
            _ => return Err(Error::Format(format!("unknown activation code {c}"))),
        })
    }

    /// Applies the activation in place; softmax works per row.
    pub fn apply(self, z: &mut Tensor) {
        match self {
            Activation::None => {}
            Activation::Relu => z.data_mut().iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Sigmoid => z.data_mut().iter_mut().for_each(|v| *v = sigmoid_scalar(*v)),
            Activation::Softmax => softmax_rows(z),
        }
    }

    /// Chains `grad` (w.r.t. the activation output `a`) back to the
    /// pre-activation `z`. Softmax is only differentiated jointly with
    /// cross-entropy, see [`super::loss`].
    pub fn backward(self, z: &Tensor, a: &Tensor, grad: &mut Tensor) -> Result<()> {
        match self {
            Activation::None => {}
            Activation::Relu => {
                for (g, &zv) in grad.data_mut().iter_mut().zip(z.data()) {
                    if zv <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Sigmoid => {
                for (g, &s) in grad.data_mut().iter_mut().zip(a.data()) {
                    *g *= s * (1.0 - s);
                }
            }
            Activation::Softmax => {
                return Err(Error::Shape(
                    "softmax gradient is only available fused with cross-entropy".into(),
                ))
            }
        }
        Ok(())
    }
}

/// `1 / (1 + e^-z)`, evaluated without overflow for large `|z|`.
#[inline]
pub fn sigmoid_scalar(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn relu(z: &Tensor) -> Tensor {
    let mut a = z.clone();
    Activation::Relu.apply(&mut a);
    a
}

/// Indicator `z > 0`.
pub fn relu_grad(z: &Tensor) -> Tensor {
    let mut g = z.clone();
    g.data_mut().iter_mut().for_each(|v| *v = if *v > 0.0 { 1.0 } else { 0.0 });
    g
}

pub fn sigmoid(z: &Tensor) -> Tensor {
    let mut a = z.clone();
    Activation::Sigmoid.apply(&mut a);
    a
}

/// `sigma (1 - sigma)` elementwise.
pub fn sigmoid_grad(z: &Tensor) -> Tensor {
    let mut g = sigmoid(z);
    g.data_mut().iter_mut().for_each(|s| *s *= 1.0 - *s);
    g
}

pub fn softmax(z: &Tensor) -> Tensor {
    let mut a = z.clone();
    softmax_rows(&mut a);
    a
}

fn softmax_rows(z: &mut Tensor) {
    let c = z.cols().max(1);
    for row in z.data_mut().chunks_mut(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
}

/// `y = x W + b` for a batch `x: [batch, fan_in]`, `W: [fan_in, fan_out]`.
pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (batch, fan_in) = (x.rows(), x.cols());
    if w.shape().len() != 2 || w.shape()[0] != fan_in || b.len() != w.shape()[1] {
        return Err(Error::Shape(format!(
            "dense: input width {fan_in}, weights {:?}, bias {:?}",
            w.shape(),
            b.shape()
        )));
    }
    let fan_out = w.shape()[1];
    let mut y = Vec::with_capacity(batch * fan_out);
    for _ in 0..batch {
        y.extend_from_slice(b.data());
    }
    gemm(batch, fan_in, fan_out, x.data(), false, w.data(), false, 1.0, &mut y);
    Tensor::from_rows(batch, fan_out, y)
}

/// Gradients of a dense layer given `grad_out = dL/dy`. The weight
/// gradient includes the L2 term `l2 * W` of `(l2 / 2) ||W||^2`.
pub fn dense_backward(x: &Tensor, w: &Tensor, grad_out: &Tensor, l2: f64) -> Result<DenseGrads> {
    let (batch, fan_in) = (x.rows(), x.cols());
    let fan_out = w.shape()[1];
    if grad_out.rows() != batch || grad_out.cols() != fan_out {
        return Err(Error::Shape(format!(
            "dense backward: grad {:?} for batch {batch} x {fan_out}",
            grad_out.shape()
        )));
    }
    let mut dw = w.data().to_vec();
    dw.iter_mut().for_each(|v| *v *= l2);
    gemm(fan_in, batch, fan_out, x.data(), true, grad_out.data(), false, 1.0, &mut dw);
    let mut db = vec![0.0; fan_out];
    for row in grad_out.data().chunks(fan_out) {
        for (d, g) in db.iter_mut().zip(row) {
            *d += g;
        }
    }
    let mut dx = vec![0.0; batch * fan_in];
    gemm(batch, fan_out, fan_in, grad_out.data(), false, w.data(), true, 0.0, &mut dx);
    Ok(DenseGrads {
        dx: Tensor::new(x.shape().to_vec(), dx)?,
        dw: Tensor::from_rows(fan_in, fan_out, dw)?,
        db: Tensor::new(vec![fan_out], db)?,
    })
}

/// Geometry of a same-padded 1-D convolution over `[length, in_channels]`
/// samples with `filters` outputs and kernel extent `kernel`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub length: usize,
    pub in_channels: usize,
    pub filters: usize,
    pub kernel: usize,
}

impl ConvGeometry {
    fn pad_left(&self) -> usize {
        (self.kernel - 1) / 2
    }

    fn patch(&self) -> usize {
        self.kernel * self.in_channels
    }

    /// Row `batch * length + t` holds the receptive field of output `t`.
    fn im2col(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let (len, cin, k, pad) = (self.length, self.in_channels, self.kernel, self.pad_left());
        let mut cols = vec![0.0; batch * len * self.patch()];
        for s in 0..batch {
            let xs = &x[s * len * cin..(s + 1) * len * cin];
            for t in 0..len {
                let dst = &mut cols[(s * len + t) * k * cin..(s * len + t + 1) * k * cin];
                for j in 0..k {
                    let src = t + j;
                    if src < pad || src - pad >= len {
                        continue;
                    }
                    let u = src - pad;
                    dst[j * cin..(j + 1) * cin].copy_from_slice(&xs[u * cin..(u + 1) * cin]);
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], batch: usize) -> Vec<f64> {
        let (len, cin, k, pad) = (self.length, self.in_channels, self.kernel, self.pad_left());
        let mut dx = vec![0.0; batch * len * cin];
        for s in 0..batch {
            let dxs = &mut dx[s * len * cin..(s + 1) * len * cin];
            for t in 0..len {
                let src = &cols[(s * len + t) * k * cin..(s * len + t + 1) * k * cin];
                for j in 0..k {
                    let p = t + j;
                    if p < pad || p - pad >= len {
                        continue;
                    }
                    let u = p - pad;
                    for c in 0..cin {
                        dxs[u * cin + c] += src[j * cin + c];
                    }
                }
            }
        }
        dx
    }

    fn check(&self, x: &Tensor, w: &Tensor, b: &Tensor) -> Result<()> {
        if self.kernel == 0 || x.cols() != self.length * self.in_channels {
            return Err(Error::Shape(format!(
                "conv1d: input width {} is not {} x {}",
                x.cols(),
                self.length,
                self.in_channels
            )));
        }
        if w.shape() != [self.kernel, self.in_channels, self.filters] || b.len() != self.filters {
            return Err(Error::Shape(format!(
                "conv1d: filters {:?} / bias {:?} do not match {self:?}",
                w.shape(),
                b.shape()
            )));
        }
        Ok(())
    }
}

/// Cross-correlation along the length axis: `out[t, f] = b[f] +
/// sum_{j, c} x[t + j - pad, c] w[j, c, f]`, zero outside the input.
pub fn conv1d_forward(x: &Tensor, w: &Tensor, b: &Tensor, geo: &ConvGeometry) -> Result<Tensor> {
    geo.check(x, w, b)?;
    let batch = x.rows();
    let rows = batch * geo.length;
    let mut y = Vec::with_capacity(rows * geo.filters);
    for _ in 0..rows {
        y.extend_from_slice(b.data());
    }
    if geo.kernel == 1 {
        gemm(rows, geo.in_channels, geo.filters, x.data(), false, w.data(), false, 1.0, &mut y);
    } else {
        let cols = geo.im2col(x.data(), batch);
        gemm(rows, geo.patch(), geo.filters, &cols, false, w.data(), false, 1.0, &mut y);
    }
    Tensor::from_rows(batch, geo.length * geo.filters, y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
}

pub fn conv1d_backward(
    x: &Tensor,
    w: &Tensor,
    grad_out: &Tensor,
    geo: &ConvGeometry,
    l2: f64,
) -> Result<ConvGrads> {
    let batch = x.rows();
    let rows = batch * geo.length;
    if grad_out.rows() != batch || grad_out.cols() != geo.length * geo.filters {
        return Err(Error::Shape(format!(
            "conv1d backward: grad {:?} for batch {batch}",
            grad_out.shape()
        )));
    }
    let owned;
    let cols: &[f64] = if geo.kernel == 1 {
        x.data()
    } else {
        owned = geo.im2col(x.data(), batch);
        &owned
    };
    let mut dw = w.data().to_vec();
    dw.iter_mut().for_each(|v| *v *= l2);
    gemm(geo.patch(), rows, geo.filters, cols, true, grad_out.data(), false, 1.0, &mut dw);
    let mut db = vec![0.0; geo.filters];
    for row in grad_out.data().chunks(geo.filters) {
        for (d, g) in db.iter_mut().zip(row) {
            *d += g;
        }
    }
    let mut dcols = vec![0.0; rows * geo.patch()];
    gemm(rows, geo.filters, geo.patch(), grad_out.data(), false, w.data(), true, 0.0, &mut dcols);
    let dx = if geo.kernel == 1 { dcols } else { geo.col2im(&dcols, batch) };
    Ok(ConvGrads {
        dx: Tensor::new(x.shape().to_vec(), dx)?,
        dw: Tensor::new(w.shape().to_vec(), dw)?,
        db: Tensor::new(vec![geo.filters], db)?,
    })
}
