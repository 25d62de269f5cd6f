//! Central finite-difference checks for every layer and loss.
//!
//! Each check builds a scalar objective `L = sum(G * f(theta)) (+ L2)` with a
//! random weighting `G`, then compares the analytic gradient of every input
//! tensor against `(L(theta + h e_i) - L(theta - h e_i)) / 2h`. The error
//! reported per tensor is `||a - n|| / max(||a||, ||n||)`.

use rand::Rng;
use unidnn::nn::layers::{conv1d_backward, conv1d_forward, dense_backward, dense_forward};
use unidnn::nn::train::loss_and_logit_grad;
use unidnn::nn::{cross_entropy_loss, mse_loss, Activation, ConvGeometry, LayerSpec, Loss, Network, Tensor};
use unidnn::rng::{self, SimRng};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Instances whose pre-activations come this close to a ReLU kink are redrawn.
pub const KINK: f64 = 1e-5;

pub fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(n.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn random(rng: &mut SimRng, shape: &[usize], scale: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Numerical gradient of `f` w.r.t. `t`, by central differences.
pub fn numeric(t: &Tensor, mut f: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
    let mut probe = t.clone();
    (0..t.len())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + STEP;
            let up = f(&probe);
            probe.data_mut()[i] = orig - STEP;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

fn weighted(g: &Tensor, y: &Tensor) -> f64 {
    g.data().iter().zip(y.data()).map(|(a, b)| a * b).sum()
}

fn near_kink(z: &Tensor) -> bool {
    z.data().iter().any(|v| v.abs() < KINK)
}

fn activated(act: Activation, z: &Tensor) -> Tensor {
    let mut a = z.clone();
    act.apply(&mut a);
    a
}

/// Dense layer followed by `act`; returns the worst error over x, W and b.
pub fn check_dense(rng: &mut SimRng, act: Activation) -> f64 {
    loop {
        let (batch, fin, fout) = (rng.random_range(1..5), rng.random_range(1..7), rng.random_range(1..6));
        let l2 = rng.random_range(0.0..0.1);
        let x = random(rng, &[batch, fin], 1.0);
        let w = random(rng, &[fin, fout], 1.0);
        let b = random(rng, &[fout], 0.5);
        let g = random(rng, &[batch, fout], 1.0);
        let z = dense_forward(&x, &w, &b).unwrap();
        if act == Activation::Relu && near_kink(&z) {
            continue;
        }
        let a = activated(act, &z);
        let mut gz = g.clone();
        act.backward(&z, &a, &mut gz).unwrap();
        let an = dense_backward(&x, &w, &gz, l2).unwrap();
        let obj = |x: &Tensor, w: &Tensor, b: &Tensor| {
            weighted(&g, &activated(act, &dense_forward(x, w, b).unwrap())) + 0.5 * l2 * w.sum_sq()
        };
        return [
            rel_err(an.dx.data(), &numeric(&x, |t| obj(t, &w, &b))),
            rel_err(an.dw.data(), &numeric(&w, |t| obj(&x, t, &b))),
            rel_err(an.db.data(), &numeric(&b, |t| obj(&x, &w, t))),
        ]
        .into_iter()
        .fold(0.0, f64::max);
    }
}

/// Same-padded conv1d followed by ReLU, kernel extent `k`.
pub fn check_conv(rng: &mut SimRng, k: usize) -> f64 {
    loop {
        let geo = ConvGeometry {
            length: rng.random_range(k..k + 8),
            in_channels: rng.random_range(1..4),
            filters: rng.random_range(1..4),
            kernel: k,
        };
        let batch = rng.random_range(1..3);
        let l2 = rng.random_range(0.0..0.1);
        let x = random(rng, &[batch, geo.length * geo.in_channels], 1.0);
        let w = random(rng, &[k, geo.in_channels, geo.filters], 1.0);
        let b = random(rng, &[geo.filters], 0.5);
        let g = random(rng, &[batch, geo.length * geo.filters], 1.0);
        let z = conv1d_forward(&x, &w, &b, &geo).unwrap();
        if near_kink(&z) {
            continue;
        }
        let a = activated(Activation::Relu, &z);
        let mut gz = g.clone();
        Activation::Relu.backward(&z, &a, &mut gz).unwrap();
        let an = conv1d_backward(&x, &w, &gz, &geo, l2).unwrap();
        let obj = |x: &Tensor, w: &Tensor, b: &Tensor| {
            weighted(&g, &activated(Activation::Relu, &conv1d_forward(x, w, b, &geo).unwrap())) + 0.5 * l2 * w.sum_sq()
        };
        return [
            rel_err(an.dx.data(), &numeric(&x, |t| obj(t, &w, &b))),
            rel_err(an.dw.data(), &numeric(&w, |t| obj(&x, t, &b))),
            rel_err(an.db.data(), &numeric(&b, |t| obj(&x, &w, t))),
        ]
        .into_iter()
        .fold(0.0, f64::max);
    }
}

pub fn check_mse(rng: &mut SimRng) -> f64 {
    let (m, n) = (rng.random_range(1..5), rng.random_range(1..9));
    let y = random(rng, &[m, n], 1.0);
    let y_hat = random(rng, &[m, n], 1.0);
    let (_, g) = mse_loss(&y, &y_hat).unwrap();
    rel_err(g.data(), &numeric(&y_hat, |t| mse_loss(&y, t).unwrap().0))
}

/// Cross-entropy of `softmax(z)`, differentiated w.r.t. the logits `z`.
pub fn check_cross_entropy(rng: &mut SimRng) -> f64 {
    let (m, n) = (rng.random_range(1..5), rng.random_range(2..7));
    let z = random(rng, &[m, n], 3.0);
    let mut y = Tensor::zeros(&[m, n]);
    for i in 0..m {
        let c = rng.random_range(0..n);
        y.data_mut()[i * n + c] = 1.0;
    }
    let (_, g) = cross_entropy_loss(&y, &activated(Activation::Softmax, &z)).unwrap();
    rel_err(
        g.data(),
        &numeric(&z, |t| cross_entropy_loss(&y, &activated(Activation::Softmax, t)).unwrap().0),
    )
}

/// Whole network with dropout (mask frozen by reseeding), trained-loss
/// gradient from `loss_and_logit_grad` plus the L2 term, over every
/// parameter tensor.
pub fn check_network(rng: &mut SimRng, classifier: bool) -> f64 {
    loop {
        let batch = rng.random_range(1..4);
        let (len, cin) = (rng.random_range(3..7), rng.random_range(1..3));
        let hid = rng.random_range(2..6);
        let (out, act, loss) = if classifier {
            (rng.random_range(2..5), Activation::Softmax, Loss::CrossEntropy)
        } else {
            (rng.random_range(1..5), Activation::Sigmoid, Loss::Mse)
        };
        let specs = [
            LayerSpec::Conv1d { length: len, in_channels: cin, filters: 2, kernel: 3, activation: Activation::Relu },
            LayerSpec::Dense { fan_in: 2 * len, fan_out: hid, activation: Activation::Relu },
            LayerSpec::Dropout { rate: 0.3 },
            LayerSpec::Dense { fan_in: hid, fan_out: out, activation: act },
        ];
        let mut net = Network::new(&specs, rng).unwrap();
        for p in net.params_mut() {
            let noise = random(rng, p.shape(), 0.3);
            p.data_mut().iter_mut().zip(noise.data()).for_each(|(v, n)| *v += n);
        }
        let x = random(rng, &[batch, len * cin], 1.0);
        let y = if classifier {
            let mut y = Tensor::zeros(&[batch, out]);
            for i in 0..batch {
                y.data_mut()[i * out + rng.random_range(0..out)] = 1.0;
            }
            y
        } else {
            random(rng, &[batch, out], 0.5)
        };
        let l2 = rng.random_range(0.0..0.05);
        let mask_seed: u64 = rng.random();
        let trace = net.forward_train(&x, &mut rng::seeded(mask_seed)).unwrap();
        // ReLU kinks in either hidden layer invalidate the comparison.
        let mut probe = net.clone();
        probe.layers.truncate(2);
        probe.layers[1].spec = LayerSpec::Dense { fan_in: 2 * len, fan_out: hid, activation: Activation::None };
        let mut conv_only = net.clone();
        conv_only.layers.truncate(1);
        conv_only.layers[0].spec =
            LayerSpec::Conv1d { length: len, in_channels: cin, filters: 2, kernel: 3, activation: Activation::None };
        if near_kink(&conv_only.predict(&x).unwrap()) || near_kink(&probe.predict(&x).unwrap()) {
            continue;
        }
        let (_, g) = loss_and_logit_grad(loss, act, &y, &trace.output).unwrap();
        let grads = net.backward(&trace, g, l2).unwrap();
        let objective = |n: &Network| {
            let t = n.forward_train(&x, &mut rng::seeded(mask_seed)).unwrap();
            let (j, _) = loss_and_logit_grad(loss, act, &y, &t.output).unwrap();
            j + 0.5 * l2 * n.weight_norm_sq()
        };
        let mut worst: f64 = 0.0;
        let n_params = grads.len();
        for (pi, grad) in grads.iter().enumerate().take(n_params) {
            let base = net.params().nth(pi).unwrap().clone();
            let num = numeric(&base, |t| {
                let mut n = net.clone();
                *n.params_mut()[pi] = t.clone();
                objective(&n)
            });
            worst = worst.max(rel_err(grad.data(), &num));
        }
        return worst;
    }
}

/// Every check, `instances` times each; returns `(name, worst error)`.
pub fn run_suite(instances: usize, seed: u64) -> Vec<(String, f64)> {
    let mut r = rng::seeded(seed);
    let mut out = Vec::new();
    let mut run = |name: &str, f: &mut dyn FnMut(&mut SimRng) -> f64| {
        let worst = (0..instances).map(|_| f(&mut r)).fold(0.0, f64::max);
        out.push((name.to_string(), worst));
    };
    run("dense/linear", &mut |r| check_dense(r, Activation::None));
    run("dense/relu", &mut |r| check_dense(r, Activation::Relu));
    run("dense/sigmoid", &mut |r| check_dense(r, Activation::Sigmoid));
    for k in [1, 3, 5] {
        run(&format!("conv1d/k{k}"), &mut |r| check_conv(r, k));
    }
    run("loss/mse", &mut check_mse);
    run("loss/softmax_cross_entropy", &mut check_cross_entropy);
    run("network/dropout_mse", &mut |r| check_network(r, false));
    run("network/dropout_cross_entropy", &mut |r| check_network(r, true));
    out
}
