//! Per-face replacement: embed → match k → mix identities → generate →
//! align → segment → blend, and sequences with optional identity lock.

mod sidecar;

pub use sidecar::{read_sidecar, sidecar_path, write_sidecar};

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embednet::{
    extract_embedding, identities_to_y, match_k_closest, EncoderModel, FeatDb, MatchResult,
    WeightMode,
};
use crate::error::{Error, Result};
use crate::gennet::{generate, AppearanceVector, GeneratorModel};
use crate::geom::{robust_homography, warp_image, Homography, Point2, RobustFitConfig};
use crate::imgcore::{
    alpha_blend, crop, gaussian_weight_mask, hsv_pixel, morphology, BlendKernelSpec, BoundingBox,
    Image, Mask, MorphOp,
};
use crate::synthface::Expression;

/// One detected face: boxes, landmarks (eyes, nose, mouth corners) and an
/// optional track id supplied by an external tracker.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceAnnotation {
    pub tight: BoundingBox,
    pub context: BoundingBox,
    pub landmarks: [Point2; 5],
    pub track: Option<u64>,
}

impl FaceAnnotation {
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let frame = BoundingBox::new(0, 0, width as i64, height as i64);
        for (name, b) in [("tight", &self.tight), ("context", &self.context)] {
            if b.w <= 0 || b.h <= 0 || !frame.contains_box(b) {
                return Err(Error::InvalidArgument(format!(
                    "{name} box {b:?} not inside {width}x{height} frame"
                )));
            }
        }
        for p in &self.landmarks {
            if !(p.x.is_finite() && p.y.is_finite()) || !frame.contains_point(p.x, p.y) {
                return Err(Error::InvalidArgument(format!(
                    "landmark ({}, {}) outside frame",
                    p.x, p.y
                )));
            }
        }
        Ok(())
    }
}

pub type FrameAnnotation = Vec<FaceAnnotation>;

/// HSV thresholds in 8-bit units: hue in `[0, 180)`, saturation and value in `[0, 255]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkinBounds {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

impl Default for SkinBounds {
    fn default() -> Self {
        SkinBounds {
            lower: [0.0, 10.0, 20.0],
            upper: [200.0, 255.0, 255.0],
        }
    }
}

impl SkinBounds {
    pub fn validate(&self) -> Result<()> {
        for c in 0..3 {
            if !(self.lower[c] <= self.upper[c]) {
                return Err(Error::InvalidArgument(format!(
                    "skin bound lower[{c}] = {} exceeds upper[{c}] = {}",
                    self.lower[c], self.upper[c]
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, hsv8: [f64; 3]) -> bool {
        (0..3).all(|c| self.lower[c] <= hsv8[c] && hsv8[c] <= self.upper[c])
    }
}

/// 1 where the pixel's HSV lies within the bounds (inclusive), else 0.
pub fn skin_segment(img: &Image, bounds: &SkinBounds) -> Result<Mask> {
    img.require_channels(3)?;
    let data = img
        .data()
        .chunks_exact(3)
        .map(|px| {
            let (h, s, v) = hsv_pixel(px[0], px[1], px[2]);
            let hsv8 = [h / 2.0, s * 255.0, v * 255.0];
            if bounds.contains(hsv8) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Image::new(img.width(), img.height(), 1, data)
}

/// Morphological opening: erosion then dilation.
pub fn clean_mask(mask: &Mask, radius: usize) -> Result<Mask> {
    morphology(
        &morphology(mask, MorphOp::Erode, radius)?,
        MorphOp::Dilate,
        radius,
    )
}

/// Homography taking generated-image coordinates onto the frame, fitted
/// robustly from the canonical template to the detected landmarks.
pub fn plan_alignment(
    original: &[Point2; 5],
    canonical: &[Point2; 5],
    cfg: &RobustFitConfig,
) -> Result<Homography> {
    robust_homography(canonical, original, cfg)
        .map(|(h, _)| h)
        .map_err(|e| Error::Alignment(e.to_string()))
}

/// Kernel × skin in generated coordinates, warped into the frame (fill 0).
pub fn compose_blend_mask(
    kernel: &Mask,
    skin: &Mask,
    h: &Homography,
    width: usize,
    height: usize,
) -> Result<Mask> {
    kernel.require_channels(1)?;
    skin.require_channels(1)?;
    if !kernel.same_dims(skin) {
        return Err(Error::DimensionMismatch(format!(
            "kernel {}x{} vs skin mask {}x{}",
            kernel.width(),
            kernel.height(),
            skin.width(),
            skin.height()
        )));
    }
    let prod: Vec<f64> = kernel
        .data()
        .iter()
        .zip(skin.data())
        .map(|(a, b)| a * b)
        .collect();
    let prod = Image::new(kernel.width(), kernel.height(), 1, prod)?;
    warp_image(&prod, h, width, height, 0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub k: usize,
    pub weighting: WeightMode,
    pub expression: Expression,
    pub skin: SkinBounds,
    pub morph_radius: usize,
    pub robust: RobustFitConfig,
    pub identity_lock: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k: 2,
            weighting: WeightMode::Uniform,
            expression: Expression::Neutral,
            skin: SkinBounds::default(),
            morph_radius: 1,
            robust: RobustFitConfig::default(),
            identity_lock: false,
        }
    }
}

impl PipelineConfig {
    /// `gallery_size` is M, the number of enrolled identities.
    pub fn validate(&self, gallery_size: usize) -> Result<()> {
        if self.k == 0 || self.k > gallery_size {
            return Err(Error::InvalidArgument(format!(
                "k = {} must lie in 1..={gallery_size}",
                self.k
            )));
        }
        self.skin.validate()?;
        self.robust.validate()
    }
}

/// The three trained artifacts the pipeline needs.
#[derive(Clone, Copy)]
pub struct Models<'a> {
    pub encoder: &'a EncoderModel,
    pub featdb: &'a FeatDb,
    pub generator: &'a GeneratorModel,
}

impl Models<'_> {
    fn check(&self, cfg: &PipelineConfig) -> Result<()> {
        if self.featdb.len() != self.generator.identities() {
            return Err(Error::DimensionMismatch(format!(
                "gallery has {} identities, generator {}",
                self.featdb.len(),
                self.generator.identities()
            )));
        }
        if self.featdb.dim() != self.encoder.embedding_dim() {
            return Err(Error::DimensionMismatch(format!(
                "gallery embeddings are {}-d, encoder produces {}",
                self.featdb.dim(),
                self.encoder.embedding_dim()
            )));
        }
        cfg.validate(self.featdb.len())
    }
}

/// What happened to one face.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceOutcome {
    /// Gallery ids the surrogate was mixed from.
    pub selection: MatchResult,
    /// Composed blend mask in frame coordinates; `None` when skipped.
    pub mask: Option<Mask>,
    /// The generated surrogate (generated-image coordinates).
    pub surrogate: Image,
}

/// Matches the face against the gallery.
pub fn select_identities(
    frame: &Image,
    face: &FaceAnnotation,
    models: &Models,
    k: usize,
) -> Result<MatchResult> {
    let probe = crop(frame, face.context)?;
    let emb = extract_embedding(models.encoder, &probe)?;
    match_k_closest(models.featdb, &emb, k)
}

/// Renders the surrogate for a selection and blends it over `frame` in place.
fn replace_face(
    frame: &mut Image,
    face: &FaceAnnotation,
    selection: MatchResult,
    models: &Models,
    cfg: &PipelineConfig,
) -> Result<FaceOutcome> {
    let g = models.generator;
    let y = identities_to_y(&selection, cfg.weighting)?;
    let z = AppearanceVector::one_hot(g.expressions(), cfg.expression.index())?;
    let surrogate = generate(g, &y, &z)?;
    let h = match plan_alignment(&face.landmarks, g.canonical_landmarks(), &cfg.robust) {
        Ok(h) => h,
        Err(e) => {
            log::warn!("skipping face at {:?}: {e}", face.tight);
            return Ok(FaceOutcome {
                selection,
                mask: None,
                surrogate,
            });
        }
    };
    let (w, hgt) = (frame.width(), frame.height());
    let kernel = gaussian_weight_mask(BlendKernelSpec::new(surrogate.width(), surrogate.height())?);
    let skin = clean_mask(&skin_segment(&surrogate, &cfg.skin)?, cfg.morph_radius)?;
    let mask = compose_blend_mask(&kernel, &skin, &h, w, hgt)?;
    let warped = warp_image(&surrogate, &h, w, hgt, 0.0)?;
    *frame = alpha_blend(frame, &warped, &mask)?;
    Ok(FaceOutcome {
        selection,
        mask: Some(mask),
        surrogate,
    })
}

/// Deidentifies one face, returning the new frame and what was done.
///
/// A face whose landmarks cannot be aligned is left untouched (and logged).
pub fn deidentify_face_detailed(
    frame: &Image,
    face: &FaceAnnotation,
    models: &Models,
    cfg: &PipelineConfig,
) -> Result<(Image, FaceOutcome)> {
    models.check(cfg)?;
    face.validate(frame.width(), frame.height())?;
    let selection = select_identities(frame, face, models, cfg.k)?;
    let mut out = frame.clone();
    let outcome = replace_face(&mut out, face, selection, models, cfg)?;
    Ok((out, outcome))
}

pub fn deidentify_face(
    frame: &Image,
    face: &FaceAnnotation,
    models: &Models,
    cfg: &PipelineConfig,
) -> Result<Image> {
    deidentify_face_detailed(frame, face, models, cfg).map(|(img, _)| img)
}

/// Processes faces in annotation order; later faces blend over earlier ones.
/// `locked` supplies fixed selections per track id.
fn process_frame(
    frame: &Image,
    faces: &[FaceAnnotation],
    models: &Models,
    cfg: &PipelineConfig,
    locked: &mut HashMap<u64, MatchResult>,
) -> (Image, Vec<Option<FaceOutcome>>) {
    let mut out = frame.clone();
    let mut outcomes = Vec::with_capacity(faces.len());
    for face in faces {
        let res = face.validate(frame.width(), frame.height()).and_then(|_| {
            let pinned = if cfg.identity_lock {
                face.track.and_then(|t| locked.get(&t).cloned())
            } else {
                None
            };
            let selection = match pinned {
                Some(s) => s,
                None => select_identities(&out, face, models, cfg.k)?,
            };
            if cfg.identity_lock {
                if let Some(t) = face.track {
                    locked.entry(t).or_insert_with(|| selection.clone());
                }
            }
            replace_face(&mut out, face, selection, models, cfg)
        });
        match res {
            Ok(o) => outcomes.push(Some(o)),
            Err(e) => {
                log::warn!("face {:?} not deidentified: {e}", face.tight);
                outcomes.push(None);
            }
        }
    }
    (out, outcomes)
}

/// Deidentifies every face of one frame.
pub fn deidentify_frame(
    frame: &Image,
    faces: &[FaceAnnotation],
    models: &Models,
    cfg: &PipelineConfig,
) -> Result<Image> {
    models.check(cfg)?;
    let mut unused = HashMap::new();
    let lock_off = PipelineConfig {
        identity_lock: false,
        ..cfg.clone()
    };
    Ok(process_frame(frame, faces, models, &lock_off, &mut unused).0)
}

#[derive(Clone, Debug)]
pub struct SequenceOutput {
    pub frames: Vec<Image>,
    /// Per frame, per face: the selection, or `None` if the face failed.
    pub outcomes: Vec<Vec<Option<FaceOutcome>>>,
}

impl SequenceOutput {
    /// Selected gallery ids per (frame, face), `None` for failed faces.
    pub fn selections(&self) -> Vec<Vec<Option<Vec<String>>>> {
        self.outcomes
            .iter()
            .map(|f| {
                f.iter()
                    .map(|o| {
                        o.as_ref()
                            .map(|o| o.selection.ids().iter().map(|s| s.to_string()).collect())
                    })
                    .collect()
            })
            .collect()
    }
}

/// Per-face errors are logged and leave that face untouched; they never
/// abort the sequence. Without the lock frames are processed in parallel.
pub fn deidentify_sequence(
    frames: &[(Image, FrameAnnotation)],
    models: &Models,
    cfg: &PipelineConfig,
) -> Result<SequenceOutput> {
    models.check(cfg)?;
    let results: Vec<(Image, Vec<Option<FaceOutcome>>)> = if cfg.identity_lock {
        let mut locked = HashMap::new();
        frames
            .iter()
            .map(|(f, a)| process_frame(f, a, models, cfg, &mut locked))
            .collect()
    } else {
        frames
            .par_iter()
            .map(|(f, a)| process_frame(f, a, models, cfg, &mut HashMap::new()))
            .collect()
    };
    let (frames, outcomes) = results.into_iter().unzip();
    Ok(SequenceOutput { frames, outcomes })
}

#[cfg(test)]
mod tests;
