//! Sequential networks built from [`LayerSpec`]s.

use rand::Rng;

use super::layers::{conv1d_backward, conv1d_forward, dense_backward, dense_forward, Activation, ConvGeometry};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Dense {
        fan_in: usize,
        fan_out: usize,
        activation: Activation,
    },
    /// Same-padded convolution over `[length, in_channels]` samples.
    Conv1d {
        length: usize,
        in_channels: usize,
        filters: usize,
        kernel: usize,
        activation: Activation,
    },
    /// Inverted dropout; identity at inference.
    Dropout { rate: f64 },
}

impl LayerSpec {
    pub fn input_width(&self) -> Option<usize> {
        match *self {
            LayerSpec::Dense { fan_in, .. } => Some(fan_in),
            LayerSpec::Conv1d { length, in_channels, .. } => Some(length * in_channels),
            LayerSpec::Dropout { .. } => None,
        }
    }

    pub fn output_width(&self) -> Option<usize> {
        match *self {
            LayerSpec::Dense { fan_out, .. } => Some(fan_out),
            LayerSpec::Conv1d { length, filters, .. } => Some(length * filters),
            LayerSpec::Dropout { .. } => None,
        }
    }

    pub fn activation(&self) -> Activation {
        match *self {
            LayerSpec::Dense { activation, .. } | LayerSpec::Conv1d { activation, .. } => activation,
            LayerSpec::Dropout { .. } => Activation::None,
        }
    }

    fn geometry(&self) -> Option<ConvGeometry> {
        match *self {
            LayerSpec::Conv1d {
                length,
                in_channels,
                filters,
                kernel,
                ..
            } => Some(ConvGeometry {
                length,
                in_channels,
                filters,
                kernel,
            }),
            _ => None,
        }
    }

    fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Dense { fan_in, fan_out, .. } => vec![vec![fan_in, fan_out], vec![fan_out]],
            LayerSpec::Conv1d {
                in_channels,
                filters,
                kernel,
                ..
            } => vec![vec![kernel, in_channels, filters], vec![filters]],
            LayerSpec::Dropout { .. } => vec![],
        }
    }

    /// Fan-in scaled uniform init: He bound for ReLU layers, Xavier bound
    /// otherwise. Biases start at zero.
    fn init(&self, rng: &mut SimRng) -> Vec<Tensor> {
        let (fan_in, fan_out) = match *self {
            LayerSpec::Dense { fan_in, fan_out, .. } => (fan_in, fan_out),
            LayerSpec::Conv1d {
                in_channels,
                filters,
                kernel,
                ..
            } => (kernel * in_channels, kernel * filters),
            LayerSpec::Dropout { .. } => return vec![],
        };
        let bound = match self.activation() {
            Activation::Relu => (6.0 / fan_in as f64).sqrt(),
            _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
        };
        let shapes = self.param_shapes();
        let mut w = Tensor::zeros(&shapes[0]);
        w.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
        vec![w, Tensor::zeros(&shapes[1])]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    /// `[weights, bias]` for dense and conv layers; empty for dropout.
    pub params: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
}

/// Activations kept from a training forward pass.
#[derive(Debug)]
pub struct Trace {
    inputs: Vec<Tensor>,
    pre: Vec<Tensor>,
    post: Vec<Tensor>,
    masks: Vec<Option<Vec<f64>>>,
    pub output: Tensor,
}

impl Network {
    pub fn new(specs: &[LayerSpec], rng: &mut SimRng) -> Result<Self> {
        let mut width: Option<usize> = None;
        for s in specs {
            if let LayerSpec::Dropout { rate } = s {
                if !(0.0..1.0).contains(rate) {
                    return Err(Error::InvalidConfig(format!("dropout rate {rate} outside [0, 1)")));
                }
            }
            if let (Some(w), Some(i)) = (width, s.input_width()) {
                if w != i {
                    return Err(Error::Shape(format!("layer expects width {i}, previous layer gives {w}")));
                }
            }
            if let Some(o) = s.output_width() {
                width = Some(o);
            }
        }
        if specs.iter().any(|s| s.activation() == Activation::Softmax)
            && !matches!(specs.last().map(|s| s.activation()), Some(Activation::Softmax))
        {
            return Err(Error::InvalidConfig("softmax is only supported on the output layer".into()));
        }
        let layers = specs
            .iter()
            .map(|s| Layer {
                spec: *s,
                params: s.init(rng),
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn input_width(&self) -> usize {
        self.layers.iter().find_map(|l| l.spec.input_width()).unwrap_or(0)
    }

    pub fn output_width(&self) -> usize {
        self.layers.iter().rev().find_map(|l| l.spec.output_width()).unwrap_or(0)
    }

    pub fn output_activation(&self) -> Activation {
        self.layers
            .iter()
            .rev()
            .find(|l| l.spec.output_width().is_some())
            .map(|l| l.spec.activation())
            .unwrap_or(Activation::None)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| l.params.iter())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.params.iter_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().map(Tensor::len).sum()
    }

    /// Sum of squared weights (biases excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        self.layers
            .iter()
            .filter_map(|l| l.params.first())
            .map(Tensor::sum_sq)
            .sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.input_width() {
            return Err(Error::LengthMismatch {
                what: "network input width",
                expected: self.input_width(),
                got: x.cols(),
            });
        }
        Ok(())
    }

    fn linear(layer: &Layer, x: &Tensor) -> Result<Tensor> {
        match layer.spec {
            LayerSpec::Dense { .. } => dense_forward(x, &layer.params[0], &layer.params[1]),
            LayerSpec::Conv1d { .. } => {
                conv1d_forward(x, &layer.params[0], &layer.params[1], &layer.spec.geometry().unwrap())
            }
            LayerSpec::Dropout { .. } => Ok(x.clone()),
        }
    }

    /// Inference pass: dropout disabled, batch rows independent.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut a = x.clone();
        for layer in &self.layers {
            if let LayerSpec::Dropout { .. } = layer.spec {
                continue;
            }
            a = Self::linear(layer, &a)?;
            layer.spec.activation().apply(&mut a);
        }
        Ok(a)
    }

    /// Training pass with dropout active; keeps what backprop needs.
    pub fn forward_train(&self, x: &Tensor, rng: &mut SimRng) -> Result<Trace> {
        self.check_input(x)?;
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut post = Vec::with_capacity(n);
        let mut masks = Vec::with_capacity(n);
        let mut a = x.clone();
        for layer in &self.layers {
            match layer.spec {
                LayerSpec::Dropout { rate } => {
                    if rate > 0.0 {
                        let keep = 1.0 - rate;
                        let mask: Vec<f64> = (0..a.len())
                            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                            .collect();
                        inputs.push(Tensor::zeros(&[0]));
                        a.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                        masks.push(Some(mask));
                    } else {
                        inputs.push(Tensor::zeros(&[0]));
                        masks.push(None);
                    }
                    pre.push(Tensor::zeros(&[0]));
                    post.push(Tensor::zeros(&[0]));
                }
                _ => {
                    let z = Self::linear(layer, &a)?;
                    let mut out = z.clone();
                    layer.spec.activation().apply(&mut out);
                    post.push(out.clone());
                    inputs.push(std::mem::replace(&mut a, out));
                    pre.push(z);
                    masks.push(None);
                }
            }
        }
        Ok(Trace {
            inputs,
            pre,
            post,
            masks,
            output: a,
        })
    }

    /// Backpropagates `grad_logits`, the loss gradient w.r.t. the output
    /// layer's pre-activation. Returns one gradient per parameter, in
    /// [`Network::params`] order, including the L2 term on weights.
    pub fn backward(&self, trace: &Trace, grad_logits: Tensor, l2: f64) -> Result<Vec<Tensor>> {
        let mut grads: Vec<Vec<Tensor>> = vec![Vec::new(); self.layers.len()];
        let mut g = grad_logits;
        let last_param = self
            .layers
            .iter()
            .rposition(|l| l.spec.output_width().is_some())
            .ok_or_else(|| Error::Shape("network has no parametric layer".into()))?;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            match layer.spec {
                LayerSpec::Dropout { .. } => {
                    if let Some(mask) = &trace.masks[i] {
                        g.data_mut().iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
                    }
                }
                _ => {
                    if i != last_param {
                        layer.spec.activation().backward(&trace.pre[i], &trace.post[i], &mut g)?;
                    }
                    let x = &trace.inputs[i];
                    let (dx, dw, db) = match layer.spec {
                        LayerSpec::Dense { .. } => {
                            let d = dense_backward(x, &layer.params[0], &g, l2)?;
                            (d.dx, d.dw, d.db)
                        }
                        _ => {
                            let d = conv1d_backward(x, &layer.params[0], &g, &layer.spec.geometry().unwrap(), l2)?;
                            (d.dx, d.dw, d.db)
                        }
                    };
                    grads[i] = vec![dw, db];
                    g = dx;
                }
            }
        }
        Ok(grads.into_iter().flatten().collect())
    }
}
