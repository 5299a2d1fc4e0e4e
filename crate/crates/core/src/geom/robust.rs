use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{apply_homography, estimate_homography_dlt, Homography, Point2};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustFitConfig {
    pub iterations: usize,
    /// Forward reprojection distance (pixels) below which a pair is an inlier.
    pub inlier_threshold: f64,
    pub seed: u64,
}

impl Default for RobustFitConfig {
    fn default() -> Self {
        RobustFitConfig {
            iterations: 500,
            inlier_threshold: 2.0,
            seed: 0,
        }
    }
}

impl RobustFitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument(
                "robust fit needs at least one iteration".into(),
            ));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(Error::InvalidArgument(
                "inlier threshold must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn residuals(h: &Homography, src: &[Point2], dst: &[Point2]) -> Vec<f64> {
    src.iter()
        .zip(dst)
        .map(|(p, q)| {
            apply_homography(*p, h)
                .map(|r| r.dist(q))
                .unwrap_or(f64::INFINITY)
        })
        .collect()
}

/// Consensus fit over random minimal samples of 4 correspondences.
///
/// The model with most inliers wins (ties go to the lower summed inlier
/// error) and is refit by DLT on its inliers. Deterministic for a fixed
/// `cfg.seed`.
pub fn robust_homography(
    src: &[Point2],
    dst: &[Point2],
    cfg: &RobustFitConfig,
) -> Result<(Homography, Vec<usize>)> {
    cfg.validate()?;
    if src.len() != dst.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} points",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "need at least 4 correspondences, got {}",
            src.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, f64, Vec<usize>, Homography)> = None;
    for _ in 0..cfg.iterations {
        let idx = sample(&mut rng, src.len(), 4).into_vec();
        let s: Vec<Point2> = idx.iter().map(|&i| src[i]).collect();
        let d: Vec<Point2> = idx.iter().map(|&i| dst[i]).collect();
        let Ok(h) = estimate_homography_dlt(&s, &d) else {
            continue;
        };
        let res = residuals(&h, src, dst);
        let inliers: Vec<usize> = (0..src.len())
            .filter(|&i| res[i] < cfg.inlier_threshold)
            .collect();
        let err: f64 = inliers.iter().map(|&i| res[i]).sum();
        let better = match &best {
            None => true,
            Some((n, e, _, _)) => inliers.len() > *n || (inliers.len() == *n && err < *e),
        };
        if better {
            best = Some((inliers.len(), err, inliers, h));
        }
    }
    let (count, _, inliers, model) = best.ok_or(Error::NoConsensus { inliers: 0 })?;
    if count < 4 {
        return Err(Error::NoConsensus { inliers: count });
    }
    let s: Vec<Point2> = inliers.iter().map(|&i| src[i]).collect();
    let d: Vec<Point2> = inliers.iter().map(|&i| dst[i]).collect();
    let refit = estimate_homography_dlt(&s, &d).unwrap_or(model);
    Ok((refit, inliers))
}
