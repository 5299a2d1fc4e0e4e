//! Verification experiments on (de)identified faces: pair sampling, scoring,
//! ROC/EER/VER-1/AUC, naive baselines with parrot attacks, and reports.

mod metrics;
mod protocol;
mod report;

pub use metrics::{
    compute_auc, compute_eer, compute_roc, compute_ver_at_far, roc_area, RocCurve, ScoreSet,
};
pub use protocol::{
    apply_naive, crop_for_mode, fold_metrics, naive_params, parrot_transform, run_experiment,
    sample_fold_pairs, score_pairs, ContextMode, ExperimentResult, ExperimentSpec, FoldMetrics,
    MetricsSummary, NaiveTransform, Pair, ProbeCondition, ReferenceSplit,
};
pub use report::{read_metrics, write_report, FoldRecord, MetricsFile, SummaryRecord};

use crate::deident::{select_identities, FaceAnnotation, Models};
use crate::embednet::identities_to_y;
use crate::error::{Error, Result};
use crate::gennet::{generate, AppearanceVector};
use crate::imgcore::Image;
use crate::synthface::{Expression, FaceSample};

/// Root-mean-square pixel distance between each probe's surrogate and
/// `mean_face`, for every `k`. Larger `k` mixes more identities, so the
/// surrogates should drift towards the average face.
pub fn mixing_distances(
    models: &Models,
    probes: &[&FaceSample],
    mean_face: &Image,
    ks: &[usize],
    expression: Expression,
) -> Result<Vec<f64>> {
    let g = models.generator;
    if (mean_face.width(), mean_face.height()) != g.output_dims() || mean_face.channels() != 3 {
        return Err(Error::DimensionMismatch(format!(
            "mean face is {}x{}x{}, generator draws {:?}x3",
            mean_face.width(),
            mean_face.height(),
            mean_face.channels(),
            g.output_dims()
        )));
    }
    if probes.is_empty() {
        return Err(Error::InvalidArgument("no probes".into()));
    }
    let z = AppearanceVector::one_hot(g.expressions(), expression.index())?;
    ks.iter()
        .map(|&k| {
            let mut total = 0.0;
            for s in probes {
                let face = FaceAnnotation {
                    tight: s.tight,
                    context: s.context,
                    landmarks: s.landmarks,
                    track: None,
                };
                let sel = select_identities(&s.image, &face, models, k)?;
                let y = identities_to_y(&sel, Default::default())?;
                let out = generate(g, &y, &z)?;
                let d: f64 = out
                    .data()
                    .iter()
                    .zip(mean_face.data())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum();
                total += (d / out.data().len() as f64).sqrt();
            }
            Ok(total / probes.len() as f64)
        })
        .collect()
}
