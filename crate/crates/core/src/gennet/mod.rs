//! The conditional face generator: an identity-mixture vector `y` and a
//! one-hot expression vector `z` in, a 64×64 RGB face out.

mod checkpoint;

pub use checkpoint::{load_generator, save_generator};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::imgcore::Image;
use crate::nn::{mse_with_grad, Adam, Cache, Grads, Layer, Sequential, Tensor};

pub const OUT_SIZE: usize = 64;
const Y_HIDDEN: usize = 64;
const Z_HIDDEN: usize = 16;
const BASE_CHANNELS: usize = 32;
const BASE_SIZE: usize = 8;

/// Convex weights over the M gallery identities.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentityVector(Vec<f64>);

impl IdentityVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("identity vector is empty".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(
                "identity weights must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "identity weights sum to {sum}, not 1"
            )));
        }
        Ok(IdentityVector(weights))
    }

    pub fn one_hot(m: usize, index: usize) -> Result<Self> {
        if index >= m {
            return Err(Error::InvalidArgument(format!(
                "identity {index} out of range for M = {m}"
            )));
        }
        let mut w = vec![0.0; m];
        w[index] = 1.0;
        Ok(IdentityVector(w))
    }

    /// Equal weight on each listed identity.
    pub fn uniform(m: usize, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() || indices.iter().any(|&i| i >= m) {
            return Err(Error::InvalidArgument(
                "uniform mix needs in-range identities".into(),
            ));
        }
        let mut w = vec![0.0; m];
        let share = 1.0 / indices.len() as f64;
        for &i in indices {
            w[i] += share;
        }
        IdentityVector::new(w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One-hot expression selector.
#[derive(Clone, Debug, PartialEq)]
pub struct AppearanceVector(Vec<f64>);

impl AppearanceVector {
    pub fn one_hot(e: usize, index: usize) -> Result<Self> {
        if index >= e {
            return Err(Error::InvalidArgument(format!(
                "expression {index} out of range for E = {e}"
            )));
        }
        let mut v = vec![0.0; e];
        v[index] = 1.0;
        Ok(AppearanceVector(v))
    }

    pub fn new(values: Vec<f64>) -> Result<Self> {
        let ones = values.iter().filter(|&&v| v == 1.0).count();
        let zeros = values.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != values.len() {
            return Err(Error::InvalidArgument(
                "appearance vector must be one-hot".into(),
            ));
        }
        Ok(AppearanceVector(values))
    }

    pub fn index(&self) -> usize {
        self.0.iter().position(|&v| v == 1.0).unwrap_or(0)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorModel {
    m: usize,
    e: usize,
    y_branch: Sequential,
    z_branch: Sequential,
    trunk: Sequential,
    canonical: [Point2; 5],
    final_loss: f64,
}

/// Per-sample forward state kept for the backward pass.
pub struct ForwardState {
    y_caches: Vec<Cache>,
    z_caches: Vec<Cache>,
    trunk_caches: Vec<Cache>,
}

impl GeneratorModel {
    /// Freshly initialized generator for `m` identities and `e` expressions.
    pub fn new(m: usize, e: usize, seed: u64) -> Result<Self> {
        if m == 0 || e == 0 {
            return Err(Error::InvalidArgument(
                "generator needs M ≥ 1 and E ≥ 1".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y_branch = Sequential::new(vec![Layer::linear(m, Y_HIDDEN, &mut rng)]);
        let z_branch = Sequential::new(vec![Layer::linear(e, Z_HIDDEN, &mut rng)]);
        let mut trunk = vec![
            Layer::linear(
                Y_HIDDEN + Z_HIDDEN,
                BASE_CHANNELS * BASE_SIZE * BASE_SIZE,
                &mut rng,
            ),
            Layer::leaky_relu(),
            Layer::Reshape(vec![BASE_CHANNELS, BASE_SIZE, BASE_SIZE]),
        ];
        for (cin, cout) in [(32, 16), (16, 8), (8, 8)] {
            trunk.push(Layer::Upsample2x);
            trunk.push(Layer::conv(cin, cout, &mut rng));
            trunk.push(Layer::batch_norm(cout));
            trunk.push(Layer::leaky_relu());
        }
        trunk.push(Layer::conv(8, 3, &mut rng));
        trunk.push(Layer::Sigmoid);
        let c = OUT_SIZE as f64 / 2.0;
        Ok(GeneratorModel {
            m,
            e,
            y_branch,
            z_branch,
            trunk: Sequential::new(trunk),
            canonical: [Point2::new(c, c); 5],
            final_loss: f64::NAN,
        })
    }

    pub fn identities(&self) -> usize {
        self.m
    }

    pub fn expressions(&self) -> usize {
        self.e
    }

    pub fn output_dims(&self) -> (usize, usize) {
        (OUT_SIZE, OUT_SIZE)
    }

    /// Landmark template of the generated face, in output-pixel coordinates.
    pub fn canonical_landmarks(&self) -> &[Point2; 5] {
        &self.canonical
    }

    pub fn set_canonical_landmarks(&mut self, pts: [Point2; 5]) {
        self.canonical = pts;
    }

    /// Inference-mode MSE over the training set, recorded at the end of
    /// training (NaN for an untrained model).
    pub fn final_loss(&self) -> f64 {
        self.final_loss
    }

    pub fn param_count(&self) -> usize {
        self.y_branch.param_count() + self.z_branch.param_count() + self.trunk.param_count()
    }

    fn parts(&self) -> [&Sequential; 3] {
        [&self.y_branch, &self.z_branch, &self.trunk]
    }

    fn parts_mut(&mut self) -> [&mut Sequential; 3] {
        [&mut self.y_branch, &mut self.z_branch, &mut self.trunk]
    }

    pub fn params(&self) -> Vec<&Vec<f64>> {
        self.parts().into_iter().flat_map(|s| s.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let [a, b, c] = self.parts_mut();
        a.params_mut()
            .into_iter()
            .chain(b.params_mut())
            .chain(c.params_mut())
            .collect()
    }

    pub(crate) fn buffers(&self) -> Vec<&Vec<f64>> {
        self.parts().into_iter().flat_map(|s| s.buffers()).collect()
    }

    pub(crate) fn buffers_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let [a, b, c] = self.parts_mut();
        a.buffers_mut()
            .into_iter()
            .chain(b.buffers_mut())
            .chain(c.buffers_mut())
            .collect()
    }

    /// Human-readable architecture string; also stored in checkpoints.
    pub fn layer_spec(&self) -> String {
        format!(
            "y[{}];z[{}];trunk[{}]",
            self.y_branch.spec(),
            self.z_branch.spec(),
            self.trunk.spec()
        )
    }

    fn check_inputs(&self, y: &IdentityVector, z: &AppearanceVector) -> Result<()> {
        if y.len() != self.m {
            return Err(Error::DimensionMismatch(format!(
                "y has {} entries, model expects {}",
                y.len(),
                self.m
            )));
        }
        if z.len() != self.e {
            return Err(Error::DimensionMismatch(format!(
                "z has {} entries, model expects {}",
                z.len(),
                self.e
            )));
        }
        Ok(())
    }

    /// The exact tensors fed to the two input branches. `y` is passed on
    /// verbatim: mixing happens purely through the first linear stage.
    pub fn input_tensors(
        &self,
        batch: &[(&IdentityVector, &AppearanceVector)],
    ) -> Result<(Tensor, Tensor)> {
        let mut ys = Vec::with_capacity(batch.len() * self.m);
        let mut zs = Vec::with_capacity(batch.len() * self.e);
        for (y, z) in batch {
            self.check_inputs(y, z)?;
            ys.extend_from_slice(y.weights());
            zs.extend_from_slice(z.values());
        }
        Ok((
            Tensor::new(vec![batch.len(), self.m], ys)?,
            Tensor::new(vec![batch.len(), self.e], zs)?,
        ))
    }

    /// Forward pass over a batch; `train` selects batch statistics for
    /// batch norm. Output is `[N, 3, 64, 64]`.
    pub fn forward(&self, y: &Tensor, z: &Tensor, train: bool) -> (Tensor, ForwardState) {
        let (hy, y_caches) = self.y_branch.forward(y, train);
        let (hz, z_caches) = self.z_branch.forward(z, train);
        let n = y.batch();
        let mut joint = Vec::with_capacity(n * (Y_HIDDEN + Z_HIDDEN));
        for b in 0..n {
            joint.extend_from_slice(&hy.data()[b * Y_HIDDEN..(b + 1) * Y_HIDDEN]);
            joint.extend_from_slice(&hz.data()[b * Z_HIDDEN..(b + 1) * Z_HIDDEN]);
        }
        let joint = Tensor::from_parts(vec![n, Y_HIDDEN + Z_HIDDEN], joint);
        let (out, trunk_caches) = self.trunk.forward(&joint, train);
        (
            out,
            ForwardState {
                y_caches,
                z_caches,
                trunk_caches,
            },
        )
    }

    pub fn zero_grads(&self) -> Grads {
        self.params().iter().map(|p| vec![0.0; p.len()]).collect()
    }

    /// Accumulates parameter gradients for output gradient `g`.
    pub fn backward(&self, state: &ForwardState, g: &Tensor, grads: &mut Grads) {
        let ny = self.y_branch.params().len();
        let nz = self.z_branch.params().len();
        let (gy, rest) = grads.split_at_mut(ny);
        let (gz, gt) = rest.split_at_mut(nz);
        let dj = self.trunk.backward(&state.trunk_caches, g, gt);
        let n = g.batch();
        let mut dy = Vec::with_capacity(n * Y_HIDDEN);
        let mut dz = Vec::with_capacity(n * Z_HIDDEN);
        for row in dj.data().chunks_exact(Y_HIDDEN + Z_HIDDEN) {
            dy.extend_from_slice(&row[..Y_HIDDEN]);
            dz.extend_from_slice(&row[Y_HIDDEN..]);
        }
        self.y_branch.backward(
            &state.y_caches,
            &Tensor::from_parts(vec![n, Y_HIDDEN], dy),
            gy,
        );
        self.z_branch.backward(
            &state.z_caches,
            &Tensor::from_parts(vec![n, Z_HIDDEN], dz),
            gz,
        );
    }

    /// Rectifier sign pattern of a forward pass (see [`crate::nn::gradcheck`]).
    pub fn kink_signature(&self, state: &ForwardState) -> Vec<bool> {
        let mut sig = self.y_branch.kink_signature(&state.y_caches);
        sig.extend(self.z_branch.kink_signature(&state.z_caches));
        sig.extend(self.trunk.kink_signature(&state.trunk_caches));
        sig
    }

    fn update_running(&mut self, state: &ForwardState) {
        self.y_branch.update_running(&state.y_caches);
        self.z_branch.update_running(&state.z_caches);
        self.trunk.update_running(&state.trunk_caches);
    }
}

/// Deterministic inference: batch norm uses the stored running statistics.
pub fn generate(model: &GeneratorModel, y: &IdentityVector, z: &AppearanceVector) -> Result<Image> {
    let (yt, zt) = model.input_tensors(&[(y, z)])?;
    let (out, _) = model.forward(&yt, &zt, false);
    out.to_image(0)
}

/// Mean of squared per-sample differences.
pub fn mse_loss(pred: &Image, target: &Image) -> Result<f64> {
    if !pred.same_dims(target) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            pred.width(),
            pred.height(),
            pred.channels(),
            target.width(),
            target.height(),
            target.channels()
        )));
    }
    let n = pred.data().len() as f64;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

#[derive(Clone, Debug)]
pub struct TrainingSample {
    pub y: IdentityVector,
    pub z: AppearanceVector,
    pub image: Image,
    /// Ground-truth landmarks in image coordinates, if known.
    pub landmarks: Option<[Point2; 5]>,
}

/// Analytic gradients of the mean batch MSE (training-mode batch norm).
/// Returns the batch loss alongside the gradients, ordered as
/// [`GeneratorModel::params`].
pub fn parameter_gradients(
    model: &GeneratorModel,
    batch: &[TrainingSample],
) -> Result<(f64, Grads)> {
    let (loss, grads, _) = gradients_with_state(model, batch)?;
    Ok((loss, grads))
}

fn gradients_with_state(
    model: &GeneratorModel,
    batch: &[TrainingSample],
) -> Result<(f64, Grads, ForwardState)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("gradient batch is empty".into()));
    }
    let pairs: Vec<_> = batch.iter().map(|s| (&s.y, &s.z)).collect();
    let (yt, zt) = model.input_tensors(&pairs)?;
    let imgs: Vec<&Image> = batch.iter().map(|s| &s.image).collect();
    let target = Tensor::from_images(&imgs)?;
    let (out, state) = model.forward(&yt, &zt, true);
    if out.shape() != target.shape() {
        return Err(Error::DimensionMismatch(format!(
            "targets are {:?}, generator emits {:?}",
            target.shape(),
            out.shape()
        )));
    }
    let (loss, g) = mse_with_grad(&out, &target);
    let mut grads = model.zero_grads();
    model.backward(&state, &g, &mut grads);
    Ok((loss, grads, state))
}

/// Training-mode batch loss plus the rectifier sign pattern, for
/// finite-difference checks.
pub fn batch_loss_and_kinks(
    model: &GeneratorModel,
    batch: &[TrainingSample],
) -> Result<(f64, Vec<bool>)> {
    let pairs: Vec<_> = batch.iter().map(|s| (&s.y, &s.z)).collect();
    let (yt, zt) = model.input_tensors(&pairs)?;
    let imgs: Vec<&Image> = batch.iter().map(|s| &s.image).collect();
    let (out, state) = model.forward(&yt, &zt, true);
    let (loss, _) = mse_with_grad(&out, &Tensor::from_images(&imgs)?);
    Ok((loss, model.kink_signature(&state)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 8,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.epochs == 0 {
            errs.push("epochs must be ≥ 1");
        }
        if self.batch_size == 0 {
            errs.push("batch_size must be ≥ 1");
        }
        if !(self.learning_rate > 0.0) {
            errs.push("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            errs.push("betas must lie in [0, 1)");
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Training(errs.join("; ")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training-mode batch loss per epoch.
    pub loss_curve: Vec<f64>,
    /// Inference-mode MSE over the whole corpus after training.
    pub final_loss: f64,
}

/// Trains a generator with Adam on `(y, z, image)` triples.
///
/// The canonical landmark template is the mean of the provided landmarks of
/// expression-0 samples (all samples if none carry expression 0).
pub fn train_generator(
    corpus: &[TrainingSample],
    cfg: &TrainConfig,
) -> Result<(GeneratorModel, TrainReport)> {
    cfg.validate()?;
    let first = corpus
        .first()
        .ok_or_else(|| Error::Training("generator corpus is empty".into()))?;
    let (m, e) = (first.y.len(), first.z.len());
    let mut model = GeneratorModel::new(m, e, cfg.seed)?;
    let mut opt = Adam::new(cfg.learning_rate, cfg.beta1, cfg.beta2);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f5a_3f1e);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<TrainingSample> = chunk.iter().map(|&i| corpus[i].clone()).collect();
            let (loss, grads, state) = gradients_with_state(&model, &batch)?;
            model.update_running(&state);
            opt.step(model.params_mut(), &grads);
            total += loss * chunk.len() as f64;
        }
        let mean = total / corpus.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Training(format!("loss diverged at epoch {epoch}")));
        }
        log::debug!("generator epoch {epoch}: loss {mean:.6}");
        curve.push(mean);
    }
    model.final_loss = corpus_loss(&model, corpus)?;
    model.canonical = mean_landmarks(corpus).unwrap_or(model.canonical);
    Ok((
        model.clone(),
        TrainReport {
            loss_curve: curve,
            final_loss: model.final_loss,
        },
    ))
}

/// Inference-mode MSE averaged over every sample.
pub fn corpus_loss(model: &GeneratorModel, corpus: &[TrainingSample]) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("empty corpus".into()));
    }
    let mut total = 0.0;
    for s in corpus {
        total += mse_loss(&generate(model, &s.y, &s.z)?, &s.image)?;
    }
    Ok(total / corpus.len() as f64)
}

fn mean_landmarks(corpus: &[TrainingSample]) -> Option<[Point2; 5]> {
    let pick = |want_neutral: bool| -> Vec<&[Point2; 5]> {
        corpus
            .iter()
            .filter(|s| !want_neutral || s.z.index() == 0)
            .filter_map(|s| s.landmarks.as_ref())
            .collect()
    };
    let mut sel = pick(true);
    if sel.is_empty() {
        sel = pick(false);
    }
    if sel.is_empty() {
        return None;
    }
    let n = sel.len() as f64;
    let mut out = [Point2::new(0.0, 0.0); 5];
    for pts in sel {
        for (o, p) in out.iter_mut().zip(pts) {
            o.x += p.x / n;
            o.y += p.y / n;
        }
    }
    Some(out)
}
