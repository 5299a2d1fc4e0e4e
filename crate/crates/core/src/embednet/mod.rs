//! Identity embeddings: a small convolutional classifier whose penultimate
//! stage serves as the feature vector, plus the enrolled gallery (FeatDB)
//! and k-closest matching.

mod checkpoint;
mod featdb;

pub use checkpoint::{decode_encoder, encode_encoder, load_encoder, save_encoder};
pub use featdb::{
    build_gallery, identities_to_y, match_k_closest, FeatDb, MatchEntry, MatchResult, WeightMode,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{resize_bilinear, Image};
use crate::nn::{softmax_xent_with_grad, Adam, Cache, Grads, Layer, Sequential, Tensor};

pub const INPUT_SIZE: usize = 32;
pub const EMBED_DIM: usize = 64;

/// Finite feature vector with non-zero norm.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "embedding must be non-empty and finite".into(),
            ));
        }
        if v.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidArgument("embedding has zero norm".into()));
        }
        Ok(Embedding(v))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// `a·b / (|a| |b|)`, clamped to `[-1, 1]` against rounding.
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} dims",
            a.dim(),
            b.dim()
        )));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidArgument(
            "cosine similarity of a zero vector".into(),
        ));
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderModel {
    classes: usize,
    /// Image → embedding.
    body: Sequential,
    /// Embedding → class logits (training only).
    head: Sequential,
}

pub struct EncoderState {
    body: Vec<Cache>,
    head: Vec<Cache>,
}

impl EncoderModel {
    pub fn new(classes: usize, seed: u64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidArgument(
                "encoder needs at least 2 classes".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut body = Vec::new();
        for (cin, cout) in [(3, 8), (8, 16), (16, 32)] {
            body.push(Layer::conv(cin, cout, &mut rng));
            body.push(Layer::batch_norm(cout));
            body.push(Layer::leaky_relu());
            body.push(Layer::AvgPool2);
        }
        let flat = 32 * (INPUT_SIZE / 8) * (INPUT_SIZE / 8);
        body.push(Layer::Reshape(vec![flat]));
        body.push(Layer::linear(flat, EMBED_DIM, &mut rng));
        let head = vec![
            Layer::leaky_relu(),
            Layer::linear(EMBED_DIM, classes, &mut rng),
        ];
        Ok(EncoderModel {
            classes,
            body: Sequential::new(body),
            head: Sequential::new(head),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn embedding_dim(&self) -> usize {
        EMBED_DIM
    }

    pub fn input_dims(&self) -> (usize, usize) {
        (INPUT_SIZE, INPUT_SIZE)
    }

    pub fn params(&self) -> Vec<&Vec<f64>> {
        self.body
            .params()
            .into_iter()
            .chain(self.head.params())
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let EncoderModel { body, head, .. } = self;
        body.params_mut()
            .into_iter()
            .chain(head.params_mut())
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.body.param_count() + self.head.param_count()
    }

    pub fn layer_spec(&self) -> String {
        format!("body[{}];head[{}]", self.body.spec(), self.head.spec())
    }

    pub(crate) fn buffers(&self) -> Vec<&Vec<f64>> {
        self.body
            .buffers()
            .into_iter()
            .chain(self.head.buffers())
            .collect()
    }

    pub(crate) fn buffers_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let EncoderModel { body, head, .. } = self;
        body.buffers_mut()
            .into_iter()
            .chain(head.buffers_mut())
            .collect()
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> (Tensor, EncoderState) {
        let (emb, body) = self.body.forward(x, train);
        let (logits, head) = self.head.forward(&emb, train);
        (logits, EncoderState { body, head })
    }

    pub fn backward(&self, state: &EncoderState, g: &Tensor, grads: &mut Grads) {
        let nb = self.body.params().len();
        let (gb, gh) = grads.split_at_mut(nb);
        let de = self.head.backward(&state.head, g, gh);
        self.body.backward(&state.body, &de, gb);
    }

    pub fn kink_signature(&self, state: &EncoderState) -> Vec<bool> {
        let mut sig = self.body.kink_signature(&state.body);
        sig.extend(self.head.kink_signature(&state.head));
        sig
    }

    pub fn zero_grads(&self) -> Grads {
        self.params().iter().map(|p| vec![0.0; p.len()]).collect()
    }

    fn update_running(&mut self, state: &EncoderState) {
        self.body.update_running(&state.body);
        self.head.update_running(&state.head);
    }

    fn embed_tensor(&self, x: &Tensor) -> Tensor {
        self.body.infer(x)
    }
}

/// Resizes to the encoder input and converts to a planar tensor.
fn prepare(images: &[&Image]) -> Result<Tensor> {
    let resized = images
        .iter()
        .map(|img| {
            if img.channels() != 3 {
                return Err(Error::InvalidChannels {
                    expected: 3,
                    got: img.channels(),
                });
            }
            if img.width() == INPUT_SIZE && img.height() == INPUT_SIZE {
                Ok((*img).clone())
            } else {
                resize_bilinear(img, INPUT_SIZE, INPUT_SIZE)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Image> = resized.iter().collect();
    Tensor::from_images(&refs)
}

/// Inference-mode embedding; the image is resized to 32×32 internally.
pub fn extract_embedding(model: &EncoderModel, img: &Image) -> Result<Embedding> {
    let x = prepare(&[img])?;
    Embedding::new(model.embed_tensor(&x).into_data())
}

/// Embeds many images in parallel; output order matches input order.
pub fn extract_embeddings(model: &EncoderModel, imgs: &[&Image]) -> Result<Vec<Embedding>> {
    imgs.par_iter()
        .map(|img| extract_embedding(model, img))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for EncoderTrainConfig {
    fn default() -> Self {
        EncoderTrainConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl EncoderTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Training(
                "encoder epochs, batch_size and learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderReport {
    pub loss_curve: Vec<f64>,
    /// Training-mode accuracy per epoch.
    pub accuracy_curve: Vec<f64>,
    /// Inference-mode accuracy over the training set after training.
    pub final_accuracy: f64,
}

/// Mean cross-entropy gradients for a labelled batch.
pub fn encoder_gradients(
    model: &EncoderModel,
    images: &[&Image],
    labels: &[usize],
) -> Result<(f64, Grads)> {
    let x = prepare(images)?;
    let (logits, state) = model.forward(&x, true);
    let (loss, g, _) = softmax_xent_with_grad(&logits, labels);
    let mut grads = model.zero_grads();
    model.backward(&state, &g, &mut grads);
    Ok((loss, grads))
}

/// Training-mode loss plus rectifier sign pattern, for gradient checks.
pub fn encoder_loss_and_kinks(
    model: &EncoderModel,
    images: &[&Image],
    labels: &[usize],
) -> Result<(f64, Vec<bool>)> {
    let x = prepare(images)?;
    let (logits, state) = model.forward(&x, true);
    Ok((
        softmax_xent_with_grad(&logits, labels).0,
        model.kink_signature(&state),
    ))
}

/// Softmax identity classification. Labels must be `0..classes`.
pub fn train_encoder(
    images: &[Image],
    labels: &[usize],
    cfg: &EncoderTrainConfig,
) -> Result<(EncoderModel, EncoderReport)> {
    cfg.validate()?;
    if images.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} images vs {} labels",
            images.len(),
            labels.len()
        )));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; classes];
    for &l in labels {
        counts[l] += 1;
    }
    if classes < 2 || counts.iter().any(|&c| c < 2) {
        return Err(Error::Training(
            "encoder corpus needs ≥ 2 identities with ≥ 2 images each (labels 0..M)".into(),
        ));
    }
    let x_all = prepare(&images.iter().collect::<Vec<_>>())?;
    let item = x_all.item_len();
    let mut model = EncoderModel::new(classes, cfg.seed)?;
    let mut opt = Adam::new(cfg.learning_rate, 0.9, 0.999);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0E4C_0DE5);
    let mut order: Vec<usize> = (0..images.len()).collect();
    let (mut loss_curve, mut accuracy_curve) = (Vec::new(), Vec::new());
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let mut data = Vec::with_capacity(chunk.len() * item);
            for &i in chunk {
                data.extend_from_slice(&x_all.data()[i * item..(i + 1) * item]);
            }
            let mut shape = x_all.shape().to_vec();
            shape[0] = chunk.len();
            let x = Tensor::new(shape, data)?;
            let lab: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (logits, state) = model.forward(&x, true);
            let (loss, g, ok) = softmax_xent_with_grad(&logits, &lab);
            let mut grads = model.zero_grads();
            model.backward(&state, &g, &mut grads);
            model.update_running(&state);
            opt.step(model.params_mut(), &grads);
            total += loss * chunk.len() as f64;
            correct += ok;
        }
        let n = images.len() as f64;
        if !total.is_finite() {
            return Err(Error::Training(format!(
                "encoder loss diverged at epoch {epoch}"
            )));
        }
        log::debug!(
            "encoder epoch {epoch}: loss {:.4} acc {:.3}",
            total / n,
            correct as f64 / n
        );
        loss_curve.push(total / n);
        accuracy_curve.push(correct as f64 / n);
    }
    let logits = model.head.infer(&model.body.infer(&x_all));
    let (_, _, correct) = softmax_xent_with_grad(&logits, labels);
    let final_accuracy = correct as f64 / images.len() as f64;
    Ok((
        model,
        EncoderReport {
            loss_curve,
            accuracy_curve,
            final_accuracy,
        },
    ))
}
