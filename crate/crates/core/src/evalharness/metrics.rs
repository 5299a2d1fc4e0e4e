//! ROC, EER, VER@FAR and AUC over verification scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Legitimate (same identity) and impostor scores; higher means more similar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    legit: Vec<f64>,
    impostor: Vec<f64>,
}

impl ScoreSet {
    pub fn new(legit: Vec<f64>, impostor: Vec<f64>) -> Result<Self> {
        if legit.is_empty() || impostor.is_empty() {
            return Err(Error::InvalidArgument(
                "score set needs legit and impostor scores".into(),
            ));
        }
        if legit.iter().chain(&impostor).any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument("scores must be finite".into()));
        }
        Ok(ScoreSet { legit, impostor })
    }

    pub fn legit(&self) -> &[f64] {
        &self.legit
    }

    pub fn impostor(&self) -> &[f64] {
        &self.impostor
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<ScoreSet> {
        ScoreSet::new(
            self.legit.iter().map(|&s| f(s)).collect(),
            self.impostor.iter().map(|&s| f(s)).collect(),
        )
    }
}

/// `(FAR, VER)` points from the strictest threshold to the most lenient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
}

/// Counts of scores `>= t` for every distinct threshold, descending, with
/// the `+∞` and `−∞` sentinels at the ends.
fn sweep(s: &ScoreSet) -> Vec<(usize, usize)> {
    let mut all: Vec<(f64, bool)> = s
        .legit
        .iter()
        .map(|&v| (v, true))
        .chain(s.impostor.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out = vec![(0, 0)];
    let (mut nl, mut ni) = (0, 0);
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        while i < all.len() && all[i].0 == t {
            if all[i].1 {
                nl += 1;
            } else {
                ni += 1;
            }
            i += 1;
        }
        out.push((ni, nl));
    }
    // −∞ admits everything; identical to the last distinct threshold but kept
    // so the endpoint is explicit.
    out.push((s.impostor.len(), s.legit.len()));
    out
}

pub fn compute_roc(s: &ScoreSet) -> RocCurve {
    let (ni, nl) = (s.impostor.len() as f64, s.legit.len() as f64);
    RocCurve {
        points: sweep(s)
            .into_iter()
            .map(|(i, l)| (i as f64 / ni, l as f64 / nl))
            .collect(),
    }
}

/// Point where FAR and FRR = 1 − VER cross, interpolating linearly between
/// adjacent sweep points.
pub fn compute_eer(s: &ScoreSet) -> f64 {
    eer_from_roc(&compute_roc(s))
}

pub(crate) fn eer_from_roc(roc: &RocCurve) -> f64 {
    let d = |p: (f64, f64)| p.0 - (1.0 - p.1);
    let pts = &roc.points;
    for i in 0..pts.len() {
        let di = d(pts[i]);
        if di >= 0.0 {
            if di == 0.0 || i == 0 {
                return pts[i].0;
            }
            let dp = d(pts[i - 1]);
            let t = dp / (dp - di);
            return pts[i - 1].0 + t * (pts[i].0 - pts[i - 1].0);
        }
    }
    // Unreachable: the last point is (1, 1).
    1.0
}

/// VER at the most lenient sweep point with FAR ≤ `far_target`, linearly
/// interpolated towards the next point when the target is not hit exactly.
pub fn compute_ver_at_far(s: &ScoreSet, far_target: f64) -> f64 {
    ver_from_roc(&compute_roc(s), far_target)
}

pub(crate) fn ver_from_roc(roc: &RocCurve, far_target: f64) -> f64 {
    let pts = &roc.points;
    let i = pts.iter().rposition(|p| p.0 <= far_target).unwrap_or(0);
    let (f0, v0) = pts[i];
    if f0 == far_target || i + 1 == pts.len() {
        return v0;
    }
    let (f1, v1) = pts[i + 1];
    v0 + (far_target - f0) / (f1 - f0) * (v1 - v0)
}

/// Mann–Whitney statistic: P(legit > impostor) with ties counted one half.
///
/// Computed from exact integer counts and rounded once (half to even) onto
/// the 2⁻⁵³ grid, so `auc(−s) = 1 − auc(s)` holds exactly.
pub fn compute_auc(s: &ScoreSet) -> f64 {
    let mut imp = s.impostor.clone();
    imp.sort_by(f64::total_cmp);
    // 2·(#greater) + #ties over all pairs.
    let mut twice: u128 = 0;
    for &l in &s.legit {
        let below = imp.partition_point(|&v| v < l);
        let not_above = imp.partition_point(|&v| v <= l);
        twice += 2 * below as u128 + (not_above - below) as u128;
    }
    let denom = 2 * s.legit.len() as u128 * s.impostor.len() as u128;
    let scaled = twice << 53;
    let (q, r) = (scaled / denom, scaled % denom);
    let q = match (2 * r).cmp(&denom) {
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal if q % 2 == 1 => q + 1,
        _ => q,
    };
    q as f64 / (1u64 << 53) as f64
}

/// Trapezoidal area under a ROC curve.
pub fn roc_area(roc: &RocCurve) -> f64 {
    roc.points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}
