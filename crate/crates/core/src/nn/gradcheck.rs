//! Central finite-difference gradient checking.
//!
//! Piecewise-linear activations make the loss non-differentiable on a set
//! of measure zero, but in a wide network a ±h step routinely moves a few
//! pre-activations across zero, which corrupts the difference quotient by
//! O(h). Each evaluation therefore also reports the sign pattern of every
//! rectifier input; when the pattern at θ±h differs from the one at θ, the
//! step is shrunk tenfold, and a sample that still straddles a kink at the
//! smallest step is redrawn and counted as skipped.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::relative_error;

pub const FD_STEP: f64 = 1e-5;
const MIN_STEP: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub worst: f64,
    pub mean: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.worst <= tol
    }
}

/// Samples `samples` coordinates of the vectors exposed by `slots`, and
/// compares `analytic` against central differences of `eval`.
///
/// `eval` returns the loss and the kink signature of the evaluation.
pub fn finite_difference_check<S>(
    state: &mut S,
    slots: impl Fn(&mut S) -> Vec<&mut Vec<f64>>,
    analytic: &[Vec<f64>],
    eval: impl Fn(&S) -> (f64, Vec<bool>),
    samples: usize,
    seed: u64,
) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = analytic.iter().map(|g| g.len()).collect();
    let nonempty: Vec<usize> = (0..sizes.len()).filter(|&k| sizes[k] > 0).collect();
    let (_, base_sig) = eval(state);
    let mut report = GradCheckReport {
        checked: 0,
        skipped_kinks: 0,
        worst: 0.0,
        mean: 0.0,
    };
    if nonempty.is_empty() {
        return report;
    }
    let mut attempts = 0;
    while report.checked < samples && attempts < samples * 4 {
        attempts += 1;
        let k = nonempty[rng.gen_range(0..nonempty.len())];
        let i = rng.gen_range(0..sizes[k]);
        let orig = slots(state)[k][i];
        let mut h = FD_STEP;
        let mut numeric = None;
        while h >= MIN_STEP {
            slots(state)[k][i] = orig + h;
            let (lp, sp) = eval(state);
            slots(state)[k][i] = orig - h;
            let (lm, sm) = eval(state);
            slots(state)[k][i] = orig;
            if sp == base_sig && sm == base_sig {
                numeric = Some((lp - lm) / (2.0 * h));
                break;
            }
            h /= 10.0;
        }
        match numeric {
            Some(n) => {
                let err = relative_error(analytic[k][i], n);
                report.worst = report.worst.max(err);
                report.mean += err;
                report.checked += 1;
            }
            None => report.skipped_kinks += 1,
        }
    }
    if report.checked > 0 {
        report.mean /= report.checked as f64;
    }
    report
}
