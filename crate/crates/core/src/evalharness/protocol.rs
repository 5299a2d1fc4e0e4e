use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_auc, compute_roc, eer_from_roc, ver_from_roc, RocCurve, ScoreSet};
use crate::deident::{deidentify_face, FaceAnnotation, Models, PipelineConfig};
use crate::embednet::{cosine_similarity, extract_embedding, Embedding, EncoderModel};
use crate::error::{Error, Result};
use crate::imgcore::{crop, gaussian_blur, pixelate, BoundingBox, Image};
use crate::synthface::{FaceSample, Pose};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeCondition {
    Original,
    Deidentified,
    Pixelated,
    Blurred,
}

/// Where the second image of each pair comes from. `Original` means the
/// frontal split the probes are drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceSplit {
    Original,
    Profile,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextMode {
    Context,
    NoContext,
}

impl ContextMode {
    pub fn label(self) -> &'static str {
        match self {
            ContextMode::Context => "context",
            ContextMode::NoContext => "nocontext",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub probe: ProbeCondition,
    pub reference: ReferenceSplit,
    /// Apply the probe's naive transform to references too.
    pub parrot: bool,
    pub context: ContextMode,
    pub folds: usize,
    pub legit_pairs: usize,
    pub impostor_pairs: usize,
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            probe: ProbeCondition::Original,
            reference: ReferenceSplit::Original,
            parrot: false,
            context: ContextMode::Context,
            folds: 10,
            legit_pairs: 300,
            impostor_pairs: 300,
            seed: 0,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 folds, got {}",
                self.folds
            )));
        }
        if self.legit_pairs == 0 || self.impostor_pairs == 0 {
            return Err(Error::InvalidArgument(
                "pair counts must be at least 1".into(),
            ));
        }
        if self.parrot
            && !matches!(
                self.probe,
                ProbeCondition::Pixelated | ProbeCondition::Blurred
            )
        {
            return Err(Error::InvalidArgument(
                "parrot attacks apply to pixelated or blurred probes only".into(),
            ));
        }
        Ok(())
    }

    /// E.g. `deidentified-vs-profile`, `blurred-parrot-vs-original`.
    pub fn label(&self) -> String {
        let probe = match self.probe {
            ProbeCondition::Original => "original",
            ProbeCondition::Deidentified => "deidentified",
            ProbeCondition::Pixelated => "pixelated",
            ProbeCondition::Blurred => "blurred",
        };
        let reference = match self.reference {
            ReferenceSplit::Original => "original",
            ReferenceSplit::Profile => "profile",
        };
        format!(
            "{probe}{}-vs-{reference}",
            if self.parrot { "-parrot" } else { "" }
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pair {
    pub probe: usize,
    pub reference: usize,
    pub legit: bool,
}

/// Draws one fold's pairs without replacement; `identities[i]` labels sample
/// `i`. With identical splits pairs are unordered and never self-pairs.
/// A short corpus scales both counts by the same factor.
/// Randomness comes from `(spec.seed, fold)` alone.
pub fn sample_fold_pairs(
    identities: &[usize],
    probe_split: &[usize],
    reference_split: &[usize],
    spec: &ExperimentSpec,
    fold: usize,
) -> Result<Vec<Pair>> {
    spec.validate()?;
    if let Some(&i) = probe_split
        .iter()
        .chain(reference_split)
        .find(|&&i| i >= identities.len())
    {
        return Err(Error::InvalidArgument(format!(
            "split index {i} beyond {} samples",
            identities.len()
        )));
    }
    let same = probe_split == reference_split;
    let (mut legit, mut impostor) = (Vec::new(), Vec::new());
    for (a, &p) in probe_split.iter().enumerate() {
        let refs = if same {
            &reference_split[a + 1..]
        } else {
            reference_split
        };
        for &r in refs {
            if p == r {
                continue;
            }
            if identities[p] == identities[r] {
                legit.push((p, r));
            } else {
                impostor.push((p, r));
            }
        }
    }
    if legit.is_empty() || impostor.is_empty() {
        return Err(Error::InsufficientCorpus(format!(
            "need both pair kinds, found {} legitimate and {} impostor pairs",
            legit.len(),
            impostor.len()
        )));
    }
    // Scale both counts down by the same factor when the corpus is short.
    let scale = (legit.len() as f64 / spec.legit_pairs as f64)
        .min(impostor.len() as f64 / spec.impostor_pairs as f64)
        .min(1.0);
    let n_legit = ((spec.legit_pairs as f64 * scale).floor() as usize).max(1);
    let n_impostor = ((spec.impostor_pairs as f64 * scale).floor() as usize).max(1);
    if scale < 1.0 {
        log::warn!(
            "only {} legitimate / {} impostor pairs available; drawing {n_legit} / {n_impostor}",
            legit.len(),
            impostor.len()
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(fold as u64);
    let mut out = Vec::with_capacity(n_legit + n_impostor);
    for (pool, want, is_legit) in [(&legit, n_legit, true), (&impostor, n_impostor, false)] {
        for k in sample(&mut rng, pool.len(), want).into_iter() {
            let (mut p, mut r) = pool[k];
            if same && rng.gen::<bool>() {
                std::mem::swap(&mut p, &mut r);
            }
            out.push(Pair {
                probe: p,
                reference: r,
                legit: is_legit,
            });
        }
    }
    Ok(out)
}

/// Context crops use the context box; no-context crops trim it by 10% per side.
pub fn crop_for_mode(frame: &Image, context: BoundingBox, mode: ContextMode) -> Result<Image> {
    match mode {
        ContextMode::Context => crop(frame, context),
        ContextMode::NoContext => crop(frame, context.shrink(0.10)?),
    }
}

fn embed_needed(
    encoder: &EncoderModel,
    frames: &[&Image],
    boxes: &[BoundingBox],
    needed: &BTreeSet<usize>,
    mode: ContextMode,
) -> Result<Vec<Option<Embedding>>> {
    let computed: Vec<(usize, Embedding)> = needed
        .par_iter()
        .map(|&i| {
            let frame = frames
                .get(i)
                .ok_or_else(|| Error::InvalidArgument(format!("no image for sample {i}")))?;
            let bbox = boxes
                .get(i)
                .ok_or_else(|| Error::InvalidArgument(format!("no box for sample {i}")))?;
            Ok((
                i,
                extract_embedding(encoder, &crop_for_mode(frame, *bbox, mode)?)?,
            ))
        })
        .collect::<Result<_>>()?;
    let mut out = vec![None; frames.len()];
    for (i, e) in computed {
        out[i] = Some(e);
    }
    Ok(out)
}

/// Cosine similarity of embeddings for every pair. `probes[i]` and
/// `references[i]` are the (possibly transformed) frames of sample `i`,
/// `boxes[i]` its context box.
pub fn score_pairs(
    encoder: &EncoderModel,
    pairs: &[Pair],
    probes: &[&Image],
    references: &[&Image],
    boxes: &[BoundingBox],
    mode: ContextMode,
) -> Result<ScoreSet> {
    let pe = embed_needed(
        encoder,
        probes,
        boxes,
        &pairs.iter().map(|p| p.probe).collect(),
        mode,
    )?;
    let re = embed_needed(
        encoder,
        references,
        boxes,
        &pairs.iter().map(|p| p.reference).collect(),
        mode,
    )?;
    let (mut legit, mut impostor) = (Vec::new(), Vec::new());
    for p in pairs {
        let s = cosine_similarity(
            pe[p.probe].as_ref().unwrap(),
            re[p.reference].as_ref().unwrap(),
        )?;
        if p.legit {
            legit.push(s);
        } else {
            impostor.push(s);
        }
    }
    ScoreSet::new(legit, impostor)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NaiveTransform {
    None,
    Pixelate,
    Blur,
}

/// Pixelation block `⌈w/8⌉` and blur `σ = w/16` for a face `w` pixels wide.
pub fn naive_params(face_width: i64) -> (usize, f64) {
    (
        ((face_width + 7) / 8).max(1) as usize,
        face_width as f64 / 16.0,
    )
}

/// Applies a naive transform to the face region only.
pub fn apply_naive(frame: &Image, face: BoundingBox, t: NaiveTransform) -> Result<Image> {
    let (block, sigma) = naive_params(face.w);
    let region = crop(frame, face)?;
    let region = match t {
        NaiveTransform::None => return Ok(frame.clone()),
        NaiveTransform::Pixelate => pixelate(&region, block)?,
        NaiveTransform::Blur => gaussian_blur(&region, sigma)?,
    };
    let mut out = frame.clone();
    for y in 0..region.height() {
        for x in 0..region.width() {
            for c in 0..out.channels() {
                out.set(
                    face.x as usize + x,
                    face.y as usize + y,
                    c,
                    region.get(x, y, c),
                );
            }
        }
    }
    Ok(out)
}

/// The imitation attack: references get the same naive transform as probes.
pub fn parrot_transform(
    references: &[Image],
    faces: &[BoundingBox],
    t: NaiveTransform,
) -> Result<Vec<Image>> {
    if references.len() != faces.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} images vs {} boxes",
            references.len(),
            faces.len()
        )));
    }
    references
        .par_iter()
        .zip(faces)
        .map(|(img, b)| apply_naive(img, *b, t))
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub eer: f64,
    pub ver1: f64,
    pub auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub folds: Vec<FoldMetrics>,
    pub mean: FoldMetrics,
    /// Population standard deviation over folds.
    pub std: FoldMetrics,
}

impl MetricsSummary {
    pub fn from_folds(folds: Vec<FoldMetrics>) -> Result<Self> {
        if folds.is_empty() {
            return Err(Error::InvalidArgument("no folds to summarize".into()));
        }
        let n = folds.len() as f64;
        let stat = |f: fn(&FoldMetrics) -> f64| {
            let m = folds.iter().map(f).sum::<f64>() / n;
            let v = folds.iter().map(|x| (f(x) - m).powi(2)).sum::<f64>() / n;
            (m, v.sqrt())
        };
        let (e, v, a) = (stat(|x| x.eer), stat(|x| x.ver1), stat(|x| x.auc));
        Ok(MetricsSummary {
            mean: FoldMetrics {
                eer: e.0,
                ver1: v.0,
                auc: a.0,
            },
            std: FoldMetrics {
                eer: e.1,
                ver1: v.1,
                auc: a.1,
            },
            folds,
        })
    }
}

pub fn fold_metrics(s: &ScoreSet) -> (FoldMetrics, RocCurve) {
    let roc = compute_roc(s);
    let m = FoldMetrics {
        eer: eer_from_roc(&roc),
        ver1: ver_from_roc(&roc, 0.01),
        auc: compute_auc(s),
    };
    (m, roc)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub summary: MetricsSummary,
    pub rocs: Vec<RocCurve>,
    pub scores: Vec<ScoreSet>,
}

fn annotation(s: &FaceSample) -> FaceAnnotation {
    FaceAnnotation {
        tight: s.tight,
        context: s.context,
        landmarks: s.landmarks,
        track: None,
    }
}

fn naive_for(p: ProbeCondition) -> NaiveTransform {
    match p {
        ProbeCondition::Pixelated => NaiveTransform::Pixelate,
        ProbeCondition::Blurred => NaiveTransform::Blur,
        _ => NaiveTransform::None,
    }
}

fn pick<'a>(samples: &'a [FaceSample], t: &'a [Option<Image>]) -> Vec<&'a Image> {
    samples
        .iter()
        .zip(t)
        .map(|(s, t)| t.as_ref().unwrap_or(&s.image))
        .collect()
}

/// Probes come from the frontal split; references from the frontal or the
/// profile split. Each probe is transformed once and reused across folds.
pub fn run_experiment(
    spec: &ExperimentSpec,
    samples: &[FaceSample],
    models: &Models,
    pipeline: &PipelineConfig,
) -> Result<ExperimentResult> {
    spec.validate()?;
    let ids: Vec<usize> = samples.iter().map(|s| s.identity).collect();
    let split = |pose: Pose| {
        (0..samples.len())
            .filter(|&i| samples[i].pose == pose)
            .collect::<Vec<_>>()
    };
    let probe_split = split(Pose::Frontal);
    let reference_split = match spec.reference {
        ReferenceSplit::Original => probe_split.clone(),
        ReferenceSplit::Profile => split(Pose::Profile),
    };
    let fold_pairs = (0..spec.folds)
        .map(|f| sample_fold_pairs(&ids, &probe_split, &reference_split, spec, f))
        .collect::<Result<Vec<_>>>()?;
    let used_probes: BTreeSet<usize> = fold_pairs.iter().flatten().map(|p| p.probe).collect();
    let used_refs: BTreeSet<usize> = fold_pairs.iter().flatten().map(|p| p.reference).collect();

    let transform = |set: &BTreeSet<usize>,
                     f: &(dyn Fn(&FaceSample) -> Result<Image> + Sync)|
     -> Result<Vec<Option<Image>>> {
        let done: Vec<(usize, Image)> = set
            .par_iter()
            .map(|&i| Ok((i, f(&samples[i])?)))
            .collect::<Result<_>>()?;
        let mut out = vec![None; samples.len()];
        for (i, img) in done {
            out[i] = Some(img);
        }
        Ok(out)
    };
    let naive = naive_for(spec.probe);
    let probe_imgs = match spec.probe {
        ProbeCondition::Original => vec![None; samples.len()],
        ProbeCondition::Deidentified => transform(&used_probes, &|s| {
            deidentify_face(&s.image, &annotation(s), models, pipeline)
        })?,
        _ => transform(&used_probes, &|s| apply_naive(&s.image, s.tight, naive))?,
    };
    let ref_imgs = if spec.parrot {
        transform(&used_refs, &|s| apply_naive(&s.image, s.tight, naive))?
    } else {
        vec![None; samples.len()]
    };
    let probes = pick(samples, &probe_imgs);
    let refs = pick(samples, &ref_imgs);
    let boxes: Vec<BoundingBox> = samples.iter().map(|s| s.context).collect();

    let mut folds = Vec::new();
    let mut rocs = Vec::new();
    let mut scores = Vec::new();
    for pairs in &fold_pairs {
        let s = score_pairs(models.encoder, pairs, &probes, &refs, &boxes, spec.context)?;
        let (m, roc) = fold_metrics(&s);
        folds.push(m);
        rocs.push(roc);
        scores.push(s);
    }
    log::info!(
        "{} ({}): done {} folds",
        spec.label(),
        spec.context.label(),
        spec.folds
    );
    Ok(ExperimentResult {
        spec: spec.clone(),
        summary: MetricsSummary::from_folds(folds)?,
        rocs,
        scores,
    })
}
