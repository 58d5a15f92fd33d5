//! Dense ReLU regressor trained with mini-batch Adam.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use svnet::relu_net::{AffineLayer, ReluNetwork};
use svnet::rng::RngKey;

use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
struct Dense {
    n_in: usize,
    n_out: usize,
    /// Row-major `n_out × n_in`.
    w: Vec<f64>,
    b: Vec<f64>,
}

/// Fully connected network with ReLU on every hidden layer and a scalar output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Hidden width and number of hidden layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arch {
    pub width: usize,
    pub hidden: usize,
}

impl Mlp {
    /// He initialization: weights `N(0, 2/fan_in)`, zero biases.
    pub fn he(input: usize, arch: Arch, key: RngKey) -> Self {
        let mut sizes = vec![input];
        sizes.extend(std::iter::repeat_n(arch.width, arch.hidden));
        sizes.push(1);
        let mut rng = key.rng();
        let layers = sizes
            .windows(2)
            .map(|p| {
                let normal = Normal::new(0.0, (2.0 / p[0] as f64).sqrt()).expect("positive fan-in");
                Dense {
                    n_in: p[0],
                    n_out: p[1],
                    w: (0..p[0] * p[1]).map(|_| normal.sample(&mut rng)).collect(),
                    b: vec![0.0; p[1]],
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(&l.b).copied()).collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut it = p.iter().copied();
        for l in &mut self.layers {
            l.w.iter_mut().chain(l.b.iter_mut()).for_each(|x| *x = it.next().expect("parameter count"));
        }
    }

    /// Pre-activations of every layer.
    fn forward_all(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for (j, l) in self.layers.iter().enumerate() {
            let z: Vec<f64> = (0..l.n_out)
                .map(|o| l.b[o] + l.w[o * l.n_in..(o + 1) * l.n_in].iter().zip(&a).map(|(w, x)| w * x).sum::<f64>())
                .collect();
            if j + 1 < self.layers.len() {
                a = z.iter().map(|v| v.max(0.0)).collect();
            }
            pre.push(z);
        }
        pre
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.forward_all(x).last().expect("output layer")[0]
    }

    /// Mean squared error over the batch and its gradient in [`Mlp::params`] order.
    pub fn loss_and_grad(&self, xs: &[&[f64]], ys: &[f64]) -> (f64, Vec<f64>) {
        let mut grad: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.w.len() + l.b.len()]).collect();
        let mut loss = 0.0;
        let scale = 1.0 / xs.len() as f64;
        for (x, &y) in xs.iter().zip(ys) {
            let pre = self.forward_all(x);
            let r = pre.last().expect("output layer")[0] - y;
            loss += r * r * scale;
            let mut delta = vec![2.0 * r * scale];
            for j in (0..self.layers.len()).rev() {
                let l = &self.layers[j];
                let input: Vec<f64> = if j == 0 {
                    x.to_vec()
                } else {
                    pre[j - 1].iter().map(|v| v.max(0.0)).collect()
                };
                let g = &mut grad[j];
                for o in 0..l.n_out {
                    for (i, xi) in input.iter().enumerate() {
                        g[o * l.n_in + i] += delta[o] * xi;
                    }
                    g[l.w.len() + o] += delta[o];
                }
                if j > 0 {
                    delta = (0..l.n_in)
                        .map(|i| {
                            if pre[j - 1][i] > 0.0 {
                                (0..l.n_out).map(|o| l.w[o * l.n_in + i] * delta[o]).sum()
                            } else {
                                0.0
                            }
                        })
                        .collect();
                }
            }
        }
        (loss, grad.concat())
    }

    /// The same function as a [`ReluNetwork`].
    pub fn to_relu_network(&self) -> ReluNetwork {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let rows: Vec<Vec<f64>> = l.w.chunks(l.n_in).map(<[f64]>::to_vec).collect();
                AffineLayer::from_dense(&rows, l.b.clone()).expect("consistent shapes")
            })
            .collect();
        ReluNetwork::from_layers(layers).expect("chained shapes")
    }
}

/// Worst relative gap between the analytic gradient and central differences
/// with step `step`, measured in the Euclidean norm.
pub fn gradient_check(net: &Mlp, xs: &[&[f64]], ys: &[f64], step: f64) -> f64 {
    let (_, analytic) = net.loss_and_grad(xs, ys);
    let p0 = net.params();
    let mut probe = net.clone();
    let mut numeric = vec![0.0; p0.len()];
    let mut p = p0.clone();
    for k in 0..p0.len() {
        p[k] = p0[k] + step;
        probe.set_params(&p);
        let up = probe.loss_and_grad(xs, ys).0;
        p[k] = p0[k] - step;
        probe.set_params(&p);
        let down = probe.loss_and_grad(xs, ys).0;
        p[k] = p0[k];
        numeric[k] = (up - down) / (2.0 * step);
    }
    let diff = analytic.iter().zip(&numeric).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / norm(&analytic).max(norm(&numeric)).max(f64::MIN_POSITIVE)
}

/// Adam optimizer state.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Optimizer settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 1e-3,
            batch: 256,
        }
    }
}

/// Trains `net` in place; the batch order of every epoch is drawn from `key`.
/// Returns the training MSE after each epoch.
pub fn train(net: &mut Mlp, xs: &[Vec<f64>], ys: &[f64], settings: TrainSettings, key: RngKey) -> Result<Vec<f64>, CliError> {
    if xs.is_empty() || settings.batch == 0 {
        return Err(CliError::Config("empty training set or zero batch size".into()));
    }
    let mut adam = Adam::new(net.param_count(), settings.lr);
    let mut params = net.params();
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut history = Vec::with_capacity(settings.epochs);
    for epoch in 0..settings.epochs {
        let mut rng = key.path(epoch as u64).rng();
        order.shuffle(&mut rng);
        for chunk in order.chunks(settings.batch) {
            let bx: Vec<&[f64]> = chunk.iter().map(|&i| xs[i].as_slice()).collect();
            let by: Vec<f64> = chunk.iter().map(|&i| ys[i]).collect();
            let (loss, grad) = net.loss_and_grad(&bx, &by);
            if !loss.is_finite() {
                return Err(CliError::Diverged { epoch });
            }
            adam.step(&mut params, &grad);
            net.set_params(&params);
        }
        history.push(mse(net, xs, ys));
    }
    Ok(history)
}

pub fn mse(net: &Mlp, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    xs.iter().zip(ys).map(|(x, y)| (net.predict(x) - y).powi(2)).sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exported_network_agrees() {
        let net = Mlp::he(3, Arch { width: 5, hidden: 2 }, RngKey::new(4));
        let relu = net.to_relu_network();
        let x = [0.3, -0.7, 0.1];
        assert!((net.predict(&x) - relu.eval1(&x)).abs() < 1e-12);
        assert_eq!(relu.depth(), 4);
    }
}
