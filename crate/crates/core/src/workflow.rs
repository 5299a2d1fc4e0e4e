//! Glue between corpora and models: training sets, gallery enrollment and
//! the full "train everything" recipe used by the CLI and the examples.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embednet::{
    build_gallery, train_encoder, EncoderModel, EncoderReport, EncoderTrainConfig, FeatDb,
};
use crate::error::{Error, Result};
use crate::evalharness::{crop_for_mode, ContextMode};
use crate::gennet::{
    train_generator, AppearanceVector, GeneratorModel, IdentityVector, TrainConfig, TrainReport,
    TrainingSample, OUT_SIZE,
};
use crate::geom::Point2;
use crate::imgcore::{crop, resize_bilinear, Image};
use crate::synthface::{generate_corpus, Corpus, CorpusSpec, Expression, FaceSample, Pose, Scene};

/// Gallery id of generator identity `i`.
pub fn gallery_id(i: usize) -> String {
    format!("id{i:03}")
}

/// Per-side growth of the tight box that the generator learns to draw:
/// head, hair and neck, so the blend kernel spans the whole face.
pub const GENERATOR_MARGIN: f64 = 1.25;

/// Head crop resized to the generator's output size, with landmarks
/// mapped into the crop.
pub fn generator_crop(s: &FaceSample) -> Result<(Image, [Point2; 5])> {
    let c = s.tight.grow(GENERATOR_MARGIN);
    let img = resize_bilinear(&crop(&s.image, c)?, OUT_SIZE, OUT_SIZE)?;
    let (sx, sy) = (
        (OUT_SIZE - 1) as f64 / (c.w - 1) as f64,
        (OUT_SIZE - 1) as f64 / (c.h - 1) as f64,
    );
    let lm = s
        .landmarks
        .map(|p| Point2::new((p.x - c.x as f64) * sx, (p.y - c.y as f64) * sy));
    Ok((img, lm))
}

/// One training sample per gallery image: `y` one-hot on the identity,
/// `z` one-hot on the expression.
pub fn generator_training_set(
    samples: &[FaceSample],
    identities: usize,
) -> Result<Vec<TrainingSample>> {
    samples
        .iter()
        .map(|s| {
            if s.identity >= identities {
                return Err(Error::InvalidArgument(format!(
                    "identity {} outside gallery of {identities}",
                    s.identity
                )));
            }
            let (image, lm) = generator_crop(s)?;
            Ok(TrainingSample {
                y: IdentityVector::one_hot(identities, s.identity)?,
                z: AppearanceVector::one_hot(Expression::ALL.len(), s.expression.index())?,
                image,
                landmarks: Some(lm),
            })
        })
        .collect()
}

/// Pixel-wise mean of the generator's training images.
pub fn mean_face(set: &[TrainingSample]) -> Result<Image> {
    let first = set
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty training set".into()))?;
    let mut acc = vec![0.0; first.image.data().len()];
    for s in set {
        for (a, v) in acc.iter_mut().zip(s.image.data()) {
            *a += v;
        }
    }
    let n = set.len() as f64;
    Image::new(
        first.image.width(),
        first.image.height(),
        3,
        acc.into_iter().map(|a| a / n).collect(),
    )
}

/// Both context and no-context crops of every sample, labelled by identity
/// (remapped to `0..n` in order of first appearance).
pub fn encoder_training_set(samples: &[FaceSample]) -> Result<(Vec<Image>, Vec<usize>)> {
    let mut remap = BTreeMap::new();
    let (mut images, mut labels) = (Vec::new(), Vec::new());
    for s in samples {
        let n = remap.len();
        let label = *remap.entry(s.identity).or_insert(n);
        for mode in [ContextMode::Context, ContextMode::NoContext] {
            let c = crop_for_mode(&s.image, s.context, mode)?;
            images.push(resize_bilinear(
                &c,
                crate::embednet::INPUT_SIZE,
                crate::embednet::INPUT_SIZE,
            )?);
            labels.push(label);
        }
    }
    Ok((images, labels))
}

/// Enrolls every gallery identity with the mean embedding of its context crops.
pub fn enroll_gallery(
    encoder: &EncoderModel,
    samples: &[FaceSample],
    identities: usize,
) -> Result<FeatDb> {
    let crops = samples
        .iter()
        .map(|s| crop(&s.image, s.context))
        .collect::<Result<Vec<_>>>()?;
    let groups: Vec<(String, Vec<&Image>)> = (0..identities)
        .map(|i| {
            (
                gallery_id(i),
                samples
                    .iter()
                    .zip(&crops)
                    .filter(|(s, _)| s.identity == i)
                    .map(|(_, c)| c)
                    .collect(),
            )
        })
        .collect();
    if let Some((id, _)) = groups.iter().find(|(_, g)| g.is_empty()) {
        return Err(Error::InsufficientCorpus(format!(
            "gallery identity {id} has no images"
        )));
    }
    build_gallery(encoder, &groups)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    /// Generator identities and the enrolled gallery.
    pub gallery: CorpusSpec,
    /// Disjoint identities the recognizer is trained on.
    pub recognizer: CorpusSpec,
    pub generator: TrainConfig,
    pub encoder: EncoderTrainConfig,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            gallery: CorpusSpec {
                seed: 11,
                identities: 16,
                expressions: Expression::ALL.to_vec(),
                poses: vec![Pose::Frontal],
                illuminations: vec![1.0],
                scene: Scene::Studio,
                colour_jitter: 0.0,
                clothing_swap: 0.0,
            },
            recognizer: CorpusSpec {
                seed: 23,
                identities: 48,
                clothing_swap: 0.25,
                ..CorpusSpec::default()
            },
            generator: TrainConfig::default(),
            encoder: EncoderTrainConfig::default(),
        }
    }
}

/// Evaluation corpus for a seed: 16 street-scene identities, every
/// expression, both poses, two illuminations.
pub fn eval_corpus_spec(seed: u64) -> CorpusSpec {
    CorpusSpec {
        seed: 1000 + seed,
        ..CorpusSpec::default()
    }
}

pub struct TrainedWorld {
    pub gallery: Corpus,
    pub generator: GeneratorModel,
    pub generator_report: TrainReport,
    pub encoder: EncoderModel,
    pub encoder_report: EncoderReport,
    pub featdb: FeatDb,
    pub mean_face: Image,
}

impl TrainedWorld {
    pub fn models(&self) -> crate::deident::Models<'_> {
        crate::deident::Models {
            encoder: &self.encoder,
            featdb: &self.featdb,
            generator: &self.generator,
        }
    }
}

pub fn train_generator_on(
    gallery: &Corpus,
    cfg: &TrainConfig,
) -> Result<(GeneratorModel, TrainReport, Image)> {
    let set = generator_training_set(&gallery.samples, gallery.spec.identities)?;
    let (g, r) = train_generator(&set, cfg)?;
    Ok((g, r, mean_face(&set)?))
}

pub fn train_encoder_on(
    recognizer: &Corpus,
    cfg: &EncoderTrainConfig,
) -> Result<(EncoderModel, EncoderReport)> {
    let (images, labels) = encoder_training_set(&recognizer.samples)?;
    train_encoder(&images, &labels, cfg)
}

pub fn train_world(cfg: &WorldConfig) -> Result<TrainedWorld> {
    if cfg.gallery.seed == cfg.recognizer.seed {
        return Err(Error::Config(
            "gallery and recognizer corpora must use different seeds".into(),
        ));
    }
    let gallery = generate_corpus(&cfg.gallery)?;
    let (generator, generator_report, mean_face) = train_generator_on(&gallery, &cfg.generator)?;
    log::info!(
        "generator trained: final MSE {:.5}",
        generator_report.final_loss
    );
    let recognizer = generate_corpus(&cfg.recognizer)?;
    let (encoder, encoder_report) = train_encoder_on(&recognizer, &cfg.encoder)?;
    log::info!(
        "encoder trained: accuracy {:.3}",
        encoder_report.final_accuracy
    );
    let featdb = enroll_gallery(&encoder, &gallery.samples, cfg.gallery.identities)?;
    Ok(TrainedWorld {
        gallery,
        generator,
        generator_report,
        encoder,
        encoder_report,
        featdb,
        mean_face,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthface::render_face;

    #[test]
    fn crop_landmarks_follow_the_resize() {
        let s = render_face(
            &crate::synthface::IdentityParams::from_seed(4, 0),
            0,
            Expression::Neutral,
            Pose::Frontal,
            1.0,
            Scene::Studio,
        )
        .unwrap();
        let (img, lm) = generator_crop(&s).unwrap();
        assert_eq!((img.width(), img.height()), (OUT_SIZE, OUT_SIZE));
        // Pupils are dark: the mapped eye landmarks land on pixels much
        // darker than the cheek below them.
        let lum = |x: f64, y: f64| {
            img.pixel(x.round() as usize, y.round() as usize)
                .iter()
                .sum::<f64>()
        };
        for p in &lm[..2] {
            assert!(lum(p.x, p.y) < lum(p.x, p.y + 4.0) - 0.6, "{p:?}");
        }
    }

    #[test]
    fn encoder_set_remaps_labels() {
        let c = generate_corpus(&CorpusSpec {
            seed: 5,
            identities: 3,
            expressions: vec![Expression::Neutral],
            poses: vec![Pose::Frontal],
            illuminations: vec![1.0],
            scene: Scene::Street,
            colour_jitter: 0.0,
            clothing_swap: 0.0,
        })
        .unwrap();
        let (imgs, labels) = encoder_training_set(&c.samples[1..]).unwrap();
        assert_eq!(imgs.len(), 4);
        assert_eq!(labels, vec![0, 0, 1, 1]);
    }
}
