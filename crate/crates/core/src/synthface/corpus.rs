use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{render_face, Expression, FaceSample, IdentityParams, Pose, Scene};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub seed: u64,
    pub identities: usize,
    pub expressions: Vec<Expression>,
    pub poses: Vec<Pose>,
    pub illuminations: Vec<f64>,
    pub scene: Scene,
    /// Per-frame white-balance jitter: each channel is scaled by a gain
    /// drawn uniformly from `1 ± colour_jitter` (camera variation).
    pub colour_jitter: f64,
    /// Probability that a frame shows the person in a different outfit
    /// (images pooled from several sessions); 0 is a single session.
    pub clothing_swap: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            seed: 1,
            identities: 16,
            expressions: Expression::ALL.to_vec(),
            poses: vec![Pose::Frontal, Pose::Profile],
            illuminations: vec![0.7, 1.3],
            scene: Scene::Street,
            colour_jitter: 0.18,
            clothing_swap: 0.0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.identities < 2 {
            return Err(Error::InvalidArgument(format!(
                "corpus needs M ≥ 2, got {}",
                self.identities
            )));
        }
        if self.expressions.is_empty() || self.poses.is_empty() || self.illuminations.is_empty() {
            return Err(Error::InvalidArgument(
                "expressions, poses and illuminations must be non-empty".into(),
            ));
        }
        if let Some(l) = self
            .illuminations
            .iter()
            .find(|l| !(0.5..=1.5).contains(*l))
        {
            return Err(Error::InvalidArgument(format!(
                "illumination {l} outside [0.5, 1.5]"
            )));
        }
        if !(0.0..=1.0).contains(&self.clothing_swap) {
            return Err(Error::InvalidArgument(format!(
                "clothing_swap {} outside [0, 1]",
                self.clothing_swap
            )));
        }
        if !(0.0..=0.3).contains(&self.colour_jitter) {
            return Err(Error::InvalidArgument(format!(
                "colour_jitter {} outside [0, 0.3]",
                self.colour_jitter
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub spec: CorpusSpec,
    pub params: Vec<IdentityParams>,
    /// Ordered identity-major, then expression, pose, illumination.
    pub samples: Vec<FaceSample>,
}

impl Corpus {
    pub fn split(&self, pose: Pose) -> Vec<usize> {
        (0..self.samples.len())
            .filter(|&i| self.samples[i].pose == pose)
            .collect()
    }

    pub fn frontal(&self) -> Vec<usize> {
        self.split(Pose::Frontal)
    }

    pub fn profile(&self) -> Vec<usize> {
        self.split(Pose::Profile)
    }
}

/// Renders the full identity × expression × pose × illumination grid.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let params: Vec<IdentityParams> = (0..spec.identities)
        .map(|i| IdentityParams::from_seed(spec.seed, i))
        .collect();
    let mut jobs = Vec::new();
    for id in 0..spec.identities {
        for &e in &spec.expressions {
            for &p in &spec.poses {
                for &l in &spec.illuminations {
                    jobs.push((id, e, p, l));
                }
            }
        }
    }
    let samples = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(id, e, p, l))| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xC0_1A_B0_0F);
            rng.set_stream(i as u64);
            let mut s = if spec.clothing_swap > 0.0 && rng.gen_bool(spec.clothing_swap) {
                let mut q = params[id].clone();
                q.clothing_hue = 45.0 * rng.gen_range(0..8) as f64;
                render_face(&q, id, e, p, l, spec.scene)?
            } else {
                render_face(&params[id], id, e, p, l, spec.scene)?
            };
            if spec.colour_jitter > 0.0 {
                let j = spec.colour_jitter;
                let gain: [f64; 3] = std::array::from_fn(|_| rng.gen_range(1.0 - j..=1.0 + j));
                let (w, h) = (s.image.width(), s.image.height());
                for y in 0..h {
                    for x in 0..w {
                        for (c, g) in gain.iter().enumerate() {
                            let v = s.image.get(x, y, c) * g;
                            s.image.set(x, y, c, v);
                        }
                    }
                }
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        spec: spec.clone(),
        params,
        samples,
    })
}
