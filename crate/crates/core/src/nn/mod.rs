//! Minimal feed-forward network machinery shared by the generator and the
//! encoder: a tensor type, layers with analytic backward passes, a
//! sequential container and the Adam update rule.

pub mod gradcheck;
mod layers;
pub(crate) mod serial;
mod tensor;

pub use layers::{
    sigmoid, BatchNorm, Cache, Conv2d, Layer, Linear, BN_EPS, BN_MOMENTUM, LEAKY_SLOPE,
};
pub use tensor::Tensor;

/// Gradients aligned with [`Sequential::params`].
pub type Grads = Vec<Vec<f64>>;

#[derive(Clone, Debug, PartialEq)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Sequential { layers }
    }

    /// Comma-separated architecture description, e.g. `conv3x3(3,8),batchnorm(8)`.
    pub fn spec(&self) -> String {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Linear(x) => format!("linear({},{})", x.in_features, x.out_features),
                Layer::Conv2d(x) => format!("conv3x3({},{})", x.in_channels, x.out_channels),
                Layer::BatchNorm(x) => format!("batchnorm({})", x.channels),
                Layer::LeakyRelu(a) => format!("leaky_relu({a})"),
                Layer::Reshape(d) => format!("reshape({d:?})"),
                other => other.name().to_string(),
            })
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> (Tensor, Vec<Cache>) {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let (out, cache) = layer.forward(&cur, train);
            caches.push(cache);
            cur = out;
        }
        (cur, caches)
    }

    /// Inference-mode forward without keeping caches.
    pub fn infer(&self, x: &Tensor) -> Tensor {
        self.layers
            .iter()
            .fold(x.clone(), |cur, l| l.forward(&cur, false).0)
    }

    /// Back-propagates `g` through all layers, accumulating into `grads`.
    pub fn backward(&self, caches: &[Cache], g: &Tensor, grads: &mut [Vec<f64>]) -> Tensor {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.params().len();
        }
        let mut cur = g.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let n = layer.params().len();
            cur = layer.backward(&caches[i], &cur, &mut grads[offsets[i]..offsets[i] + n]);
        }
        cur
    }

    /// Sign of every rectifier input seen in a forward pass.
    pub fn kink_signature(&self, caches: &[Cache]) -> Vec<bool> {
        let mut sig = Vec::new();
        for (layer, cache) in self.layers.iter().zip(caches) {
            if let (Layer::LeakyRelu(_), Cache::Input(x)) = (layer, cache) {
                sig.extend(x.data().iter().map(|&v| v > 0.0));
            }
        }
        sig
    }

    pub fn update_running(&mut self, caches: &[Cache]) {
        for (layer, cache) in self.layers.iter_mut().zip(caches) {
            if let Layer::BatchNorm(bn) = layer {
                bn.update_running(cache);
            }
        }
    }

    pub fn params(&self) -> Vec<&Vec<f64>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect()
    }

    pub fn buffers(&self) -> Vec<&Vec<f64>> {
        self.layers.iter().flat_map(|l| l.buffers()).collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.buffers_mut())
            .collect()
    }

    pub fn zero_grads(&self) -> Grads {
        self.params().iter().map(|p| vec![0.0; p.len()]).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Vec<f64>>, grads: &[Vec<f64>]) {
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, p) in params.into_iter().enumerate() {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], &grads[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Mean squared error over all elements and its gradient.
pub fn mse_with_grad(pred: &Tensor, target: &Tensor) -> (f64, Tensor) {
    assert_eq!(pred.shape(), target.shape(), "mse shape mismatch");
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut g = Vec::with_capacity(pred.len());
    for (p, t) in pred.data().iter().zip(target.data()) {
        let d = p - t;
        loss += d * d;
        g.push(2.0 * d / n);
    }
    (loss / n, Tensor::from_parts(pred.shape().to_vec(), g))
}

/// Mean softmax cross-entropy over `[N, K]` logits and its gradient.
pub fn softmax_xent_with_grad(logits: &Tensor, labels: &[usize]) -> (f64, Tensor, usize) {
    let k = logits.item_len();
    assert_eq!(labels.len(), logits.batch());
    let n = labels.len() as f64;
    let mut loss = 0.0;
    let mut correct = 0;
    let mut g = Vec::with_capacity(logits.len());
    for (row, &label) in logits.data().chunks_exact(k).zip(labels) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        loss -= (exps[label] / z).ln();
        let argmax = (0..k).fold(0, |b, i| if row[i] > row[b] { i } else { b });
        if argmax == label {
            correct += 1;
        }
        for (i, e) in exps.iter().enumerate() {
            let p = e / z;
            g.push((p - if i == label { 1.0 } else { 0.0 }) / n);
        }
    }
    (
        loss / n,
        Tensor::from_parts(logits.shape().to_vec(), g),
        correct,
    )
}

/// Relative error used by the gradient checks. The denominator has an
/// absolute floor of 1e-6, well above central-difference round-off
/// (~1e-10 at step 1e-5), so gradients that are exactly zero in theory
/// (e.g. a conv bias feeding batch norm) do not blow up the ratio.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}
