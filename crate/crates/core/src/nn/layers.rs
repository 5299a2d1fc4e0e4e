//! Layers with hand-written forward and backward passes.
//!
//! Forward passes take `&self` and return a [`Cache`] holding whatever the
//! backward pass needs, so models stay immutable while gradients are
//! accumulated into separate buffers.

use rand::Rng;

use super::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out, in]` row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// 3×3 convolution, stride 1, zero padding 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[out, in, 3, 3]` row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Batch normalization over the channel axis of `[N, C]` or `[N, C, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub channels: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Linear(Linear),
    Conv2d(Conv2d),
    BatchNorm(BatchNorm),
    LeakyRelu(f64),
    Sigmoid,
    /// Nearest-neighbor ×2 upscaling.
    Upsample2x,
    /// 2×2 average pooling, stride 2.
    AvgPool2,
    /// Reshape every batch item to the given dims.
    Reshape(Vec<usize>),
}

#[derive(Clone, Debug)]
pub enum Cache {
    None,
    Input(Tensor),
    Output(Tensor),
    Shape(Vec<usize>),
    BatchNorm {
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        mean: Vec<f64>,
        var: Vec<f64>,
        /// Elements per channel in the batch.
        count: usize,
    },
}

pub const LEAKY_SLOPE: f64 = 0.01;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

fn uniform(rng: &mut impl Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

impl Linear {
    /// Uniform fan-in initialization.
    pub fn new(in_features: usize, out_features: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / in_features as f64).sqrt();
        Linear {
            in_features,
            out_features,
            weight: uniform(rng, in_features * out_features, bound),
            bias: vec![0.0; out_features],
        }
    }
}

impl Conv2d {
    pub fn new(in_channels: usize, out_channels: usize, rng: &mut impl Rng) -> Self {
        let fan_in = in_channels * 9;
        let bound = (6.0 / fan_in as f64).sqrt();
        Conv2d {
            in_channels,
            out_channels,
            weight: uniform(rng, out_channels * fan_in, bound),
            bias: vec![0.0; out_channels],
        }
    }
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            channels,
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        }
    }

    /// Folds the batch statistics of a training-mode forward into the
    /// running estimates.
    pub fn update_running(&mut self, cache: &Cache) {
        if let Cache::BatchNorm {
            mean, var, count, ..
        } = cache
        {
            let unbias = if *count > 1 {
                *count as f64 / (*count as f64 - 1.0)
            } else {
                1.0
            };
            for c in 0..self.channels {
                self.running_mean[c] =
                    self.momentum * self.running_mean[c] + (1.0 - self.momentum) * mean[c];
                self.running_var[c] =
                    self.momentum * self.running_var[c] + (1.0 - self.momentum) * var[c] * unbias;
            }
        }
    }
}

/// Spatial extent per channel: `H*W` for 4-D input, 1 for 2-D.
fn bn_geometry(shape: &[usize]) -> (usize, usize, usize) {
    let n = shape[0];
    let c = shape[1];
    let plane: usize = shape[2..].iter().product();
    (n, c, plane)
}

impl Layer {
    pub fn linear(i: usize, o: usize, rng: &mut impl Rng) -> Self {
        Layer::Linear(Linear::new(i, o, rng))
    }

    pub fn conv(i: usize, o: usize, rng: &mut impl Rng) -> Self {
        Layer::Conv2d(Conv2d::new(i, o, rng))
    }

    pub fn batch_norm(c: usize) -> Self {
        Layer::BatchNorm(BatchNorm::new(c))
    }

    pub fn leaky_relu() -> Self {
        Layer::LeakyRelu(LEAKY_SLOPE)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Linear(_) => "linear",
            Layer::Conv2d(_) => "conv2d",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::LeakyRelu(_) => "leaky_relu",
            Layer::Sigmoid => "sigmoid",
            Layer::Upsample2x => "upsample2x",
            Layer::AvgPool2 => "avgpool2",
            Layer::Reshape(_) => "reshape",
        }
    }

    /// Trainable parameter vectors, in a fixed order.
    pub fn params(&self) -> Vec<&Vec<f64>> {
        match self {
            Layer::Linear(l) => vec![&l.weight, &l.bias],
            Layer::Conv2d(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            Layer::Linear(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Conv2d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta],
            _ => vec![],
        }
    }

    /// Non-trainable state saved with the model.
    pub fn buffers(&self) -> Vec<&Vec<f64>> {
        match self {
            Layer::BatchNorm(l) => vec![&l.running_mean, &l.running_var],
            _ => vec![],
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            Layer::BatchNorm(l) => vec![&mut l.running_mean, &mut l.running_var],
            _ => vec![],
        }
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> (Tensor, Cache) {
        match self {
            Layer::Linear(l) => (linear_forward(l, x), Cache::Input(x.clone())),
            Layer::Conv2d(l) => (conv_forward(l, x), Cache::Input(x.clone())),
            Layer::BatchNorm(l) => bn_forward(l, x, train),
            Layer::LeakyRelu(slope) => {
                let data = x
                    .data()
                    .iter()
                    .map(|&v| if v > 0.0 { v } else { slope * v })
                    .collect();
                (
                    Tensor::from_parts(x.shape().to_vec(), data),
                    Cache::Input(x.clone()),
                )
            }
            Layer::Sigmoid => {
                let y = Tensor::from_parts(
                    x.shape().to_vec(),
                    x.data().iter().map(|&v| sigmoid(v)).collect(),
                );
                (y.clone(), Cache::Output(y))
            }
            Layer::Upsample2x => (upsample_forward(x), Cache::None),
            Layer::AvgPool2 => (avgpool_forward(x), Cache::Shape(x.shape().to_vec())),
            Layer::Reshape(dims) => {
                let mut shape = vec![x.batch()];
                shape.extend_from_slice(dims);
                (x.clone().reshaped(shape), Cache::Shape(x.shape().to_vec()))
            }
        }
    }

    /// Back-propagates `g` (gradient w.r.t. this layer's output), adding
    /// parameter gradients into `grads` (same order as [`Layer::params`]).
    pub fn backward(&self, cache: &Cache, g: &Tensor, grads: &mut [Vec<f64>]) -> Tensor {
        match (self, cache) {
            (Layer::Linear(l), Cache::Input(x)) => linear_backward(l, x, g, grads),
            (Layer::Conv2d(l), Cache::Input(x)) => conv_backward(l, x, g, grads),
            (Layer::BatchNorm(l), c @ Cache::BatchNorm { .. }) => bn_backward(l, c, g, grads),
            (Layer::LeakyRelu(slope), Cache::Input(x)) => {
                let data = x
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&v, &d)| if v > 0.0 { d } else { slope * d })
                    .collect();
                Tensor::from_parts(g.shape().to_vec(), data)
            }
            (Layer::Sigmoid, Cache::Output(y)) => {
                let data = y
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&s, &d)| d * s * (1.0 - s))
                    .collect();
                Tensor::from_parts(g.shape().to_vec(), data)
            }
            (Layer::Upsample2x, Cache::None) => upsample_backward(g),
            (Layer::AvgPool2, Cache::Shape(shape)) => avgpool_backward(g, shape),
            (Layer::Reshape(_), Cache::Shape(shape)) => g.clone().reshaped(shape.clone()),
            (layer, _) => panic!("cache does not belong to a {} layer", layer.name()),
        }
    }
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn linear_forward(l: &Linear, x: &Tensor) -> Tensor {
    let n = x.batch();
    assert_eq!(x.item_len(), l.in_features, "linear input size");
    let mut out = Vec::with_capacity(n * l.out_features);
    for row in x.data().chunks_exact(l.in_features) {
        for o in 0..l.out_features {
            let w = &l.weight[o * l.in_features..(o + 1) * l.in_features];
            out.push(l.bias[o] + dot(w, row));
        }
    }
    Tensor::from_parts(vec![n, l.out_features], out)
}

fn linear_backward(l: &Linear, x: &Tensor, g: &Tensor, grads: &mut [Vec<f64>]) -> Tensor {
    let (gw, rest) = grads.split_at_mut(1);
    let (gw, gb) = (&mut gw[0], &mut rest[0]);
    let mut dx = vec![0.0; x.len()];
    for (n, (xrow, grow)) in x
        .data()
        .chunks_exact(l.in_features)
        .zip(g.data().chunks_exact(l.out_features))
        .enumerate()
    {
        let dxrow = &mut dx[n * l.in_features..(n + 1) * l.in_features];
        for (o, &go) in grow.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            gb[o] += go;
            let w = &l.weight[o * l.in_features..(o + 1) * l.in_features];
            axpy(
                go,
                xrow,
                &mut gw[o * l.in_features..(o + 1) * l.in_features],
            );
            axpy(go, w, dxrow);
        }
    }
    Tensor::from_parts(x.shape().to_vec(), dx)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Valid output range along one axis for kernel offset `d` in `{-1, 0, 1}`.
#[inline]
fn span(len: usize, d: isize) -> (usize, usize) {
    let lo = if d < 0 { 1 } else { 0 };
    let hi = if d > 0 { len - 1 } else { len };
    (lo, hi)
}

fn conv_forward(l: &Conv2d, x: &Tensor) -> Tensor {
    let s = x.shape();
    let (n, cin, h, w) = (s[0], s[1], s[2], s[3]);
    assert_eq!(cin, l.in_channels, "conv input channels");
    let cout = l.out_channels;
    let plane = h * w;
    let mut out = vec![0.0; n * cout * plane];
    for b in 0..n {
        let xin = &x.data()[b * cin * plane..(b + 1) * cin * plane];
        for co in 0..cout {
            let op = &mut out[(b * cout + co) * plane..(b * cout + co + 1) * plane];
            op.fill(l.bias[co]);
            for ci in 0..cin {
                let ip = &xin[ci * plane..(ci + 1) * plane];
                let wk = &l.weight[(co * cin + ci) * 9..(co * cin + ci + 1) * 9];
                for ky in 0..3 {
                    let dy = ky as isize - 1;
                    let (y0, y1) = span(h, dy);
                    for kx in 0..3 {
                        let dx = kx as isize - 1;
                        let (x0, x1) = span(w, dx);
                        let wv = wk[ky * 3 + kx];
                        for y in y0..y1 {
                            let sy = (y as isize + dy) as usize;
                            let orow = &mut op[y * w + x0..y * w + x1];
                            let sx0 = (x0 as isize + dx) as usize;
                            let irow = &ip[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                            axpy(wv, irow, orow);
                        }
                    }
                }
            }
        }
    }
    Tensor::from_parts(vec![n, cout, h, w], out)
}

#[allow(clippy::needless_range_loop)]
fn conv_backward(l: &Conv2d, x: &Tensor, g: &Tensor, grads: &mut [Vec<f64>]) -> Tensor {
    let s = x.shape();
    let (n, cin, h, w) = (s[0], s[1], s[2], s[3]);
    let cout = l.out_channels;
    let plane = h * w;
    let (gw, rest) = grads.split_at_mut(1);
    let (gw, gb) = (&mut gw[0], &mut rest[0]);
    let mut dx = vec![0.0; x.len()];
    for b in 0..n {
        let xin = &x.data()[b * cin * plane..(b + 1) * cin * plane];
        let dxin = &mut dx[b * cin * plane..(b + 1) * cin * plane];
        for co in 0..cout {
            let gp = &g.data()[(b * cout + co) * plane..(b * cout + co + 1) * plane];
            gb[co] += gp.iter().sum::<f64>();
            for ci in 0..cin {
                let ip = &xin[ci * plane..(ci + 1) * plane];
                let dip = &mut dxin[ci * plane..(ci + 1) * plane];
                let base = (co * cin + ci) * 9;
                for ky in 0..3 {
                    let dy = ky as isize - 1;
                    let (y0, y1) = span(h, dy);
                    for kx in 0..3 {
                        let dxk = kx as isize - 1;
                        let (x0, x1) = span(w, dxk);
                        let wv = l.weight[base + ky * 3 + kx];
                        let mut acc = 0.0;
                        for y in y0..y1 {
                            let sy = (y as isize + dy) as usize;
                            let sx0 = (x0 as isize + dxk) as usize;
                            let grow = &gp[y * w + x0..y * w + x1];
                            let irow = &ip[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                            acc += dot(grow, irow);
                            axpy(wv, grow, &mut dip[sy * w + sx0..sy * w + sx0 + (x1 - x0)]);
                        }
                        gw[base + ky * 3 + kx] += acc;
                    }
                }
            }
        }
    }
    Tensor::from_parts(x.shape().to_vec(), dx)
}

fn bn_forward(l: &BatchNorm, x: &Tensor, train: bool) -> (Tensor, Cache) {
    let (n, c, plane) = bn_geometry(x.shape());
    assert_eq!(c, l.channels, "batchnorm channels");
    let idx = |b: usize, ch: usize, i: usize| (b * c + ch) * plane + i;
    let count = n * plane;
    let (mean, var) = if train {
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for ch in 0..c {
            let mut s = 0.0;
            for b in 0..n {
                s += x.data()[idx(b, ch, 0)..idx(b, ch, 0) + plane]
                    .iter()
                    .sum::<f64>();
            }
            let m = s / count as f64;
            let mut v = 0.0;
            for b in 0..n {
                v += x.data()[idx(b, ch, 0)..idx(b, ch, 0) + plane]
                    .iter()
                    .map(|&t| (t - m) * (t - m))
                    .sum::<f64>();
            }
            mean[ch] = m;
            var[ch] = v / count as f64;
        }
        (mean, var)
    } else {
        (l.running_mean.clone(), l.running_var.clone())
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + l.eps).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    for b in 0..n {
        for ch in 0..c {
            for i in 0..plane {
                let k = idx(b, ch, i);
                let xh = (x.data()[k] - mean[ch]) * inv_std[ch];
                xhat[k] = xh;
                out[k] = l.gamma[ch] * xh + l.beta[ch];
            }
        }
    }
    let cache = if train {
        Cache::BatchNorm {
            xhat,
            inv_std,
            mean,
            var,
            count,
        }
    } else {
        Cache::None
    };
    (Tensor::from_parts(x.shape().to_vec(), out), cache)
}

fn bn_backward(l: &BatchNorm, cache: &Cache, g: &Tensor, grads: &mut [Vec<f64>]) -> Tensor {
    let Cache::BatchNorm {
        xhat,
        inv_std,
        count,
        ..
    } = cache
    else {
        unreachable!()
    };
    let (n, c, plane) = bn_geometry(g.shape());
    let idx = |b: usize, ch: usize, i: usize| (b * c + ch) * plane + i;
    let m = *count as f64;
    let mut dx = vec![0.0; g.len()];
    for ch in 0..c {
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for b in 0..n {
            for i in 0..plane {
                let k = idx(b, ch, i);
                sum_g += g.data()[k];
                sum_gx += g.data()[k] * xhat[k];
            }
        }
        grads[0][ch] += sum_gx;
        grads[1][ch] += sum_g;
        let scale = l.gamma[ch] * inv_std[ch] / m;
        for b in 0..n {
            for i in 0..plane {
                let k = idx(b, ch, i);
                dx[k] = scale * (m * g.data()[k] - sum_g - xhat[k] * sum_gx);
            }
        }
    }
    Tensor::from_parts(g.shape().to_vec(), dx)
}

fn upsample_forward(x: &Tensor) -> Tensor {
    let s = x.shape();
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![0.0; n * c * h2 * w2];
    for p in 0..n * c {
        let src = &x.data()[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * h2 * w2..(p + 1) * h2 * w2];
        for y in 0..h2 {
            let srow = &src[(y / 2) * w..(y / 2 + 1) * w];
            for (xo, v) in dst[y * w2..(y + 1) * w2].iter_mut().enumerate() {
                *v = srow[xo / 2];
            }
        }
    }
    Tensor::from_parts(vec![n, c, h2, w2], out)
}

fn upsample_backward(g: &Tensor) -> Tensor {
    let s = g.shape();
    let (n, c, h2, w2) = (s[0], s[1], s[2], s[3]);
    let (h, w) = (h2 / 2, w2 / 2);
    let mut out = vec![0.0; n * c * h * w];
    for p in 0..n * c {
        let src = &g.data()[p * h2 * w2..(p + 1) * h2 * w2];
        let dst = &mut out[p * h * w..(p + 1) * h * w];
        for y in 0..h2 {
            for xo in 0..w2 {
                dst[(y / 2) * w + xo / 2] += src[y * w2 + xo];
            }
        }
    }
    Tensor::from_parts(vec![n, c, h, w], out)
}

fn avgpool_forward(x: &Tensor) -> Tensor {
    let s = x.shape();
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (ho, wo) = (h / 2, w / 2);
    let mut out = vec![0.0; n * c * ho * wo];
    for p in 0..n * c {
        let src = &x.data()[p * h * w..(p + 1) * h * w];
        for y in 0..ho {
            for xo in 0..wo {
                let i = 2 * y * w + 2 * xo;
                out[p * ho * wo + y * wo + xo] =
                    0.25 * (src[i] + src[i + 1] + src[i + w] + src[i + w + 1]);
            }
        }
    }
    Tensor::from_parts(vec![n, c, ho, wo], out)
}

fn avgpool_backward(g: &Tensor, in_shape: &[usize]) -> Tensor {
    let (n, c, h, w) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
    let (ho, wo) = (h / 2, w / 2);
    let mut out = vec![0.0; n * c * h * w];
    for p in 0..n * c {
        for y in 0..ho {
            for xo in 0..wo {
                let gv = 0.25 * g.data()[p * ho * wo + y * wo + xo];
                let i = p * h * w + 2 * y * w + 2 * xo;
                out[i] += gv;
                out[i + 1] += gv;
                out[i + w] += gv;
                out[i + w + 1] += gv;
            }
        }
    }
    Tensor::from_parts(in_shape.to_vec(), out)
}
