//! Property suites shared by the focused integration tests and the
//! acceptance runner. Each suite returns a one-line summary, or the first
//! violation as an error.
#![allow(dead_code)]

use facedeid::embednet::{encoder_gradients, encoder_loss_and_kinks, EncoderModel};
use facedeid::evalharness::{compute_auc, compute_eer, compute_roc, compute_ver_at_far, ScoreSet};
use facedeid::gennet::{
    batch_loss_and_kinks, parameter_gradients, AppearanceVector, GeneratorModel, IdentityVector,
    TrainingSample,
};
use facedeid::geom::{
    apply_homography, estimate_homography_dlt, robust_homography, Homography, Point2,
    RobustFitConfig,
};
use facedeid::imgcore::{gaussian_weight_mask, BlendKernelSpec, Image};
use facedeid::nn::gradcheck::{finite_difference_check, GradCheckReport};
use facedeid::nn::{BatchNorm, Layer, Sequential, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub type Suite = Result<String, String>;

// ---------------------------------------------------------------- metrics

/// `(FAR, VER)` at every candidate threshold, strictest first, by direct
/// counting (no sorting tricks).
pub fn oracle_roc(legit: &[f64], imp: &[f64]) -> Vec<(f64, f64)> {
    let mut ts: Vec<f64> = legit.iter().chain(imp).copied().collect();
    ts.sort_by(|a, b| b.total_cmp(a));
    ts.dedup();
    let mut thresholds = vec![f64::INFINITY];
    thresholds.extend(ts);
    thresholds.push(f64::NEG_INFINITY);
    thresholds
        .iter()
        .map(|&t| {
            let far = imp.iter().filter(|&&s| s >= t).count() as f64 / imp.len() as f64;
            let ver = legit.iter().filter(|&&s| s >= t).count() as f64 / legit.len() as f64;
            (far, ver)
        })
        .collect()
}

/// Crossing of FAR and FRR, linear between the bracketing sweep points.
pub fn oracle_eer(legit: &[f64], imp: &[f64]) -> f64 {
    let roc = oracle_roc(legit, imp);
    let mut prev: Option<(f64, f64)> = None;
    for &(far, ver) in &roc {
        let frr = 1.0 - ver;
        if far >= frr {
            return match prev {
                Some((pf, pv)) if far != frr => {
                    let (a0, b0) = (pf, 1.0 - pv);
                    // Solve a0 + t(far − a0) = b0 + t(frr − b0).
                    let t = (b0 - a0) / ((far - a0) - (frr - b0));
                    a0 + t * (far - a0)
                }
                _ => far,
            };
        }
        prev = Some((far, ver));
    }
    1.0
}

pub fn oracle_ver(legit: &[f64], imp: &[f64], target: f64) -> f64 {
    let roc = oracle_roc(legit, imp);
    let mut best = 0;
    for (i, p) in roc.iter().enumerate() {
        if p.0 <= target {
            best = i;
        }
    }
    let (f0, v0) = roc[best];
    match roc.get(best + 1) {
        Some(&(f1, v1)) if f0 != target => v0 + (target - f0) / (f1 - f0) * (v1 - v0),
        _ => v0,
    }
}

/// Pairwise Mann–Whitney count.
pub fn oracle_auc(legit: &[f64], imp: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &l in legit {
        for &i in imp {
            acc += if l > i {
                1.0
            } else if l == i {
                0.5
            } else {
                0.0
            };
        }
    }
    acc / (legit.len() * imp.len()) as f64
}

/// Scores drawn on a coarse grid so ties are common.
pub fn random_scores(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let nl = rng.gen_range(10..=500);
    let ni = rng.gen_range(10..=500);
    let shift = rng.gen_range(-0.5..1.5);
    let grid = [0.0, 1e-3, 1e-2][rng.gen_range(0..3)];
    let draw = |rng: &mut ChaCha8Rng, mu: f64| {
        let v: f64 = mu + rng.gen_range(-1.0..1.0);
        if grid > 0.0 {
            (v / grid).round() * grid
        } else {
            v
        }
    };
    let legit = (0..nl).map(|_| draw(rng, shift)).collect();
    let imp = (0..ni).map(|_| draw(rng, 0.0)).collect();
    (legit, imp)
}

pub fn metric_suite() -> Suite {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut sets = Vec::new();
    for n in 0..200 {
        let (l, i) = random_scores(&mut rng);
        let s = ScoreSet::new(l.clone(), i.clone()).map_err(|e| e.to_string())?;
        for (name, got, want) in [
            ("EER", compute_eer(&s), oracle_eer(&l, &i)),
            ("AUC", compute_auc(&s), oracle_auc(&l, &i)),
            (
                "VER-1",
                compute_ver_at_far(&s, 0.01),
                oracle_ver(&l, &i, 0.01),
            ),
        ] {
            let d = (got - want).abs();
            if d.is_nan() || d > 1e-9 {
                return Err(format!("set {n}: {name} {got} vs oracle {want}"));
            }
            worst = worst.max(d);
        }
        let neg = s.map(|v| -v).map_err(|e| e.to_string())?;
        if compute_auc(&neg) != 1.0 - compute_auc(&s) {
            return Err(format!(
                "set {n}: AUC(−s) = {} ≠ 1 − {}",
                compute_auc(&neg),
                compute_auc(&s)
            ));
        }
        sets.push(s);
    }
    let mut tested = 0;
    for (t, s) in sets.iter().enumerate() {
        if tested == 50 {
            break;
        }
        let (a, b) = (rng.gen_range(0.1..5.0), rng.gen_range(-3.0..3.0));
        let c = rng.gen_range(0.2..2.0);
        // Strictly increasing: affine, then the logistic, then a power.
        let f = move |v: f64| (1.0 / (1.0 + (-(a * v + b)).exp())).powf(c);
        let m = s.map(f).map_err(|e| e.to_string())?;
        // Sanity: the transform must not merge distinct scores.
        let distinct = |x: &ScoreSet| {
            let mut v: Vec<f64> = x.legit().iter().chain(x.impostor()).copied().collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v.len()
        };
        if distinct(&m) != distinct(s) {
            continue;
        }
        if compute_eer(&m) != compute_eer(s)
            || compute_auc(&m) != compute_auc(s)
            || compute_roc(&m) != compute_roc(s)
        {
            return Err(format!("transform {t} changed EER/AUC/ROC"));
        }
        tested += 1;
    }
    if tested < 50 {
        return Err(format!("only {tested} transforms kept scores distinct"));
    }
    Ok(format!(
        "200 sets, worst |Δ| {worst:.1e}; negation exact; 50 transforms invariant"
    ))
}

// ---------------------------------------------------------------- kernel

pub fn kernel_suite() -> Suite {
    let mut worst: f64 = 0.0;
    for (w, h) in [(60, 60), (64, 64), (33, 47), (80, 20), (1, 1), (7, 9)] {
        let m = gaussian_weight_mask(BlendKernelSpec::new(w, h).map_err(|e| e.to_string())?);
        let s = w.min(h) as f64;
        let (mu, sigma) = (s / 2.0, s / 6.0);
        for y in 0..h {
            for x in 0..w {
                let r2 = (x as f64 - mu).powi(2) + (y as f64 - mu).powi(2);
                let want = (-r2 / (2.0 * sigma * sigma)).exp();
                worst = worst.max((m.get(x, y, 0) - want).abs());
            }
        }
    }
    if worst > 1e-12 {
        return Err(format!("max |Δ| {worst:e}"));
    }
    let m = gaussian_weight_mask(BlendKernelSpec::new(60, 60).unwrap());
    let checks = [
        (30, 30, 1.0),
        (30, 40, (-0.5f64).exp()),
        (0, 0, (-9.0f64).exp()),
    ];
    for (x, y, want) in checks {
        if (m.get(x, y, 0) - want).abs() > 1e-12 {
            return Err(format!("({x},{y}) = {} want {want}", m.get(x, y, 0)));
        }
    }
    Ok(format!(
        "max |Δ| {worst:.1e}; centre 1, (30,40) e^-0.5, (0,0) e^-9"
    ))
}

// ---------------------------------------------------------------- geometry

pub fn random_homography(rng: &mut ChaCha8Rng) -> Homography {
    loop {
        let m = [
            [
                1.0 + rng.gen_range(-0.2..0.2),
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-20.0..20.0),
            ],
            [
                rng.gen_range(-0.2..0.2),
                1.0 + rng.gen_range(-0.2..0.2),
                rng.gen_range(-20.0..20.0),
            ],
            [rng.gen_range(-1e-3..1e-3), rng.gen_range(-1e-3..1e-3), 1.0],
        ];
        if let Ok(h) = Homography::new(m) {
            return h;
        }
    }
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point2> {
    (0..n)
        .map(|_| Point2::new(rng.gen_range(0.0..64.0), rng.gen_range(0.0..64.0)))
        .collect()
}

/// Largest reprojection error of exact correspondences through the DLT fit.
pub fn dlt_exact_error(seed: u64, n: usize) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = random_homography(&mut rng);
    let src = random_points(&mut rng, n);
    let dst: Vec<Point2> = src
        .iter()
        .map(|p| apply_homography(*p, &h).unwrap())
        .collect();
    let est = estimate_homography_dlt(&src, &dst).map_err(|e| e.to_string())?;
    Ok(src
        .iter()
        .zip(&dst)
        .map(|(p, q)| apply_homography(*p, &est).unwrap().dist(q))
        .fold(0.0, f64::max))
}

/// Mean ground-truth reprojection error over the clean points of one trial
/// with 30% gross outliers and σ = 0.5 px noise.
pub fn robust_trial(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = random_homography(&mut rng);
    let n = 20;
    let outliers = n * 3 / 10;
    let noise = Normal::new(0.0, 0.5).unwrap();
    let src = random_points(&mut rng, n);
    let dst: Vec<Point2> = src
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let q = apply_homography(*p, &h).unwrap();
            if i < outliers {
                let (dx, dy): (f64, f64) = (rng.gen_range(15.0..40.0), rng.gen_range(15.0..40.0));
                let (sx, sy) = (
                    if rng.gen() { 1.0 } else { -1.0 },
                    if rng.gen() { 1.0 } else { -1.0 },
                );
                Point2::new(q.x + sx * dx, q.y + sy * dy)
            } else {
                Point2::new(q.x + noise.sample(&mut rng), q.y + noise.sample(&mut rng))
            }
        })
        .collect();
    let cfg = RobustFitConfig {
        seed,
        ..RobustFitConfig::default()
    };
    let (est, _) = robust_homography(&src, &dst, &cfg).map_err(|e| e.to_string())?;
    let clean = &src[outliers..];
    Ok(clean
        .iter()
        .map(|p| {
            apply_homography(*p, &est)
                .unwrap()
                .dist(&apply_homography(*p, &h).unwrap())
        })
        .sum::<f64>()
        / clean.len() as f64)
}

pub fn homography_suite() -> Suite {
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        worst = worst.max(dlt_exact_error(seed, 4 + seed as usize % 8)?);
    }
    if worst > 1e-6 {
        return Err(format!("exact DLT reprojection {worst:e} px"));
    }
    let ok = (0..100)
        .filter(|&s| robust_trial(1000 + s).map(|e| e < 1.0).unwrap_or(false))
        .count();
    if ok < 95 {
        return Err(format!("robust fit recovered truth in {ok}/100 trials"));
    }
    Ok(format!(
        "exact DLT worst {worst:.1e} px; robust {ok}/100 trials < 1 px"
    ))
}

// ---------------------------------------------------------------- gradients

fn rand_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn projected_loss(net: &Sequential, x: &Tensor, w: &[f64]) -> (f64, Vec<bool>) {
    let (y, caches) = net.forward(x, true);
    (
        y.data().iter().zip(w).map(|(a, b)| a * b).sum(),
        net.kink_signature(&caches),
    )
}

/// Checks the parameters (when any) and the input of `net` under a random
/// linear projection of its output.
pub fn check_network(
    net: &Sequential,
    x: &Tensor,
    samples: usize,
    seed: u64,
) -> Vec<(&'static str, GradCheckReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (y, caches) = net.forward(x, true);
    let w: Vec<f64> = (0..y.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let gout = Tensor::new(y.shape().to_vec(), w.clone()).unwrap();
    let mut grads = net.zero_grads();
    let dx = net.backward(&caches, &gout, &mut grads);
    let mut out = Vec::new();
    if net.param_count() > 0 {
        let mut n = net.clone();
        out.push((
            "params",
            finite_difference_check(
                &mut n,
                |n| n.params_mut(),
                &grads,
                |n| projected_loss(n, x, &w),
                samples,
                seed,
            ),
        ));
    }
    let shape = x.shape().to_vec();
    let mut state = vec![x.data().to_vec()];
    let r = finite_difference_check(
        &mut state,
        |s| s.iter_mut().collect(),
        &[dx.into_data()],
        |s| projected_loss(net, &Tensor::new(shape.clone(), s[0].clone()).unwrap(), &w),
        samples,
        seed + 1,
    );
    out.push(("input", r));
    out
}

/// One small network per layer type, with an input large enough to offer
/// at least 100 distinct coordinates.
pub fn layer_cases() -> Vec<(&'static str, Sequential, Tensor)> {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut bn = BatchNorm::new(3);
    bn.gamma = vec![0.7, 1.3, -0.4];
    bn.beta = vec![0.1, -0.2, 0.3];
    let mut cases = vec![
        (
            "linear",
            Sequential::new(vec![Layer::linear(40, 6, &mut rng)]),
            vec![4, 40],
        ),
        (
            "conv",
            Sequential::new(vec![Layer::conv(2, 3, &mut rng)]),
            vec![2, 2, 6, 6],
        ),
        (
            "batchnorm-2d",
            Sequential::new(vec![Layer::BatchNorm(bn.clone())]),
            vec![4, 3, 4, 4],
        ),
        (
            "batchnorm-1d",
            Sequential::new(vec![Layer::BatchNorm(bn)]),
            vec![40, 3],
        ),
        (
            "leaky-relu",
            Sequential::new(vec![Layer::leaky_relu()]),
            vec![2, 2, 6, 6],
        ),
        (
            "sigmoid",
            Sequential::new(vec![Layer::Sigmoid]),
            vec![2, 2, 6, 6],
        ),
        (
            "upsample",
            Sequential::new(vec![Layer::Upsample2x]),
            vec![2, 2, 6, 6],
        ),
        (
            "avgpool",
            Sequential::new(vec![Layer::AvgPool2]),
            vec![2, 2, 6, 6],
        ),
        (
            "reshape",
            Sequential::new(vec![Layer::Reshape(vec![2, 4, 4])]),
            vec![4, 32],
        ),
    ];
    cases
        .iter_mut()
        .map(|(n, net, shape)| (*n, net.clone(), rand_tensor(shape.clone(), &mut rng)))
        .collect()
}

fn blob(seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cx, cy, r) = (
        rng.gen_range(20.0..44.0),
        rng.gen_range(20.0..44.0),
        rng.gen_range(8.0..16.0),
    );
    let col = [
        rng.gen_range(0.2..0.9),
        rng.gen_range(0.2..0.9),
        rng.gen_range(0.2..0.9),
    ];
    Image::from_rgb_fn(64, 64, |x, y| {
        if ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt() < r {
            col
        } else {
            [0.5, 0.5, 0.5]
        }
    })
    .unwrap()
}

pub fn generator_check(samples: usize) -> GradCheckReport {
    let mut model = GeneratorModel::new(3, 2, 7).unwrap();
    let batch: Vec<TrainingSample> = [(0, 1), (2, 0), (1, 1)]
        .iter()
        .map(|&(i, j)| TrainingSample {
            y: IdentityVector::one_hot(3, i).unwrap(),
            z: AppearanceVector::one_hot(2, j).unwrap(),
            image: blob((i * 10 + j) as u64),
            landmarks: None,
        })
        .collect();
    let (_, grads) = parameter_gradients(&model, &batch).unwrap();
    finite_difference_check(
        &mut model,
        |m| m.params_mut(),
        &grads,
        |m| batch_loss_and_kinks(m, &batch).unwrap(),
        samples,
        99,
    )
}

pub fn encoder_check(samples: usize) -> GradCheckReport {
    let mut model = EncoderModel::new(3, 5).unwrap();
    let imgs: Vec<Image> = (0..4u64)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(i);
            let data = (0..40 * 40 * 3)
                .map(|k| rng.gen_range(0.0..0.4) + if k % 3 == i as usize % 3 { 0.5 } else { 0.0 })
                .collect();
            Image::new(40, 40, 3, data).unwrap()
        })
        .collect();
    let refs: Vec<&Image> = imgs.iter().collect();
    let labels = [0, 1, 2, 0];
    let (_, grads) = encoder_gradients(&model, &refs, &labels).unwrap();
    finite_difference_check(
        &mut model,
        |m| m.params_mut(),
        &grads,
        |m| encoder_loss_and_kinks(m, &refs, &labels).unwrap(),
        samples,
        3,
    )
}

pub fn gradient_suite() -> Suite {
    const TOL: f64 = 1e-4;
    const N: usize = 100;
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    let mut verdict = |what: String, r: GradCheckReport| -> Result<(), String> {
        if !r.passes(TOL) || r.checked < N {
            return Err(format!("{what}: {r:?}"));
        }
        worst = worst.max(r.worst);
        skipped += r.skipped_kinks;
        Ok(())
    };
    for (i, (name, net, x)) in layer_cases().into_iter().enumerate() {
        for (part, r) in check_network(&net, &x, N, 100 + i as u64) {
            verdict(format!("{name} {part}"), r)?;
        }
    }
    verdict("generator".into(), generator_check(N))?;
    verdict("encoder".into(), encoder_check(N))?;
    Ok(format!("9 layer cases + generator + encoder, {N} coords each, worst rel. err {worst:.1e}, {skipped} kink redraws"))
}
