//! Acceptance runner: one PASS/FAIL line per criterion, non-zero exit if
//! any fails. Runs without the libtest harness so the lines always show.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use facedeid::deident::{deidentify_face_detailed, FaceAnnotation, PipelineConfig};
use facedeid::evalharness::{
    mixing_distances, run_experiment, ContextMode, ExperimentSpec, ProbeCondition,
};
use facedeid::gennet::{
    corpus_loss, generate, load_generator, save_generator, train_generator, AppearanceVector,
    IdentityVector,
};
use facedeid::synthface::{generate_corpus, Corpus, Expression};
use facedeid::workflow::{
    eval_corpus_spec, generator_training_set, train_world, TrainedWorld, WorldConfig,
};

type Outcome = Result<String, String>;

struct Runner {
    failed: usize,
}

impl Runner {
    fn check(&mut self, name: &str, f: impl FnOnce() -> Outcome) {
        let t = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t.elapsed().as_secs_f64();
        match r {
            Ok(d) => println!("PASS  {name:<34} {d} [{secs:.1}s]"),
            Err(d) => {
                self.failed += 1;
                println!("FAIL  {name:<34} {d} [{secs:.1}s]");
            }
        }
    }
}

fn within(secs: f64, limit: f64, what: &str) -> Result<(), String> {
    if secs <= limit {
        Ok(())
    } else {
        Err(format!("{what} took {secs:.0}s, limit {limit:.0}s"))
    }
}

/// Mean EER of an experiment over evaluation seeds.
fn mean_eer(
    world: &TrainedWorld,
    corpora: &[Corpus],
    probe: ProbeCondition,
    parrot: bool,
    context: ContextMode,
) -> Result<(f64, Vec<f64>), String> {
    let pipe = PipelineConfig::default();
    let mut eers = Vec::new();
    for (seed, corpus) in corpora.iter().enumerate() {
        let spec = ExperimentSpec {
            probe,
            parrot,
            context,
            seed: seed as u64,
            ..Default::default()
        };
        let r = run_experiment(&spec, &corpus.samples, &world.models(), &pipe)
            .map_err(|e| e.to_string())?;
        eers.push(r.summary.mean.eer);
    }
    Ok((eers.iter().sum::<f64>() / eers.len() as f64, eers))
}

fn fmt(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.3}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn main() {
    let mut run = Runner { failed: 0 };
    run.check("blend kernel exactness", common::kernel_suite);
    run.check("metric oracles", common::metric_suite);
    run.check("homography suite", common::homography_suite);
    run.check("gradient checks", common::gradient_suite);

    let cfg = WorldConfig::default();
    let started = Instant::now();
    let world = match train_world(&cfg) {
        Ok(w) => w,
        Err(e) => {
            for name in [
                "deidentification effect",
                "context effect",
                "parrot attack direction",
                "identity mixing convergence",
                "training reproducibility",
                "pipeline locality/determinism",
            ] {
                run.check(name, || Err(format!("world training failed: {e}")));
            }
            std::process::exit(1);
        }
    };
    let train_secs = started.elapsed().as_secs_f64();
    let corpora: Vec<Corpus> = (0..5)
        .map(|s| generate_corpus(&eval_corpus_spec(s)).expect("eval corpus"))
        .collect();

    run.check("deidentification effect", || {
        let (orig, o) = mean_eer(
            &world,
            &corpora[..3],
            ProbeCondition::Original,
            false,
            ContextMode::Context,
        )?;
        let (deid, d) = mean_eer(
            &world,
            &corpora[..3],
            ProbeCondition::Deidentified,
            false,
            ContextMode::Context,
        )?;
        let detail = format!(
            "original EER {orig:.3} ({}) ≤ 0.10, deidentified {deid:.3} ({}) ≥ 0.30",
            fmt(&o),
            fmt(&d)
        );
        within(
            started.elapsed().as_secs_f64(),
            900.0,
            "training + evaluation",
        )?;
        if orig <= 0.10 && deid >= 0.30 {
            Ok(format!(
                "{detail}; {:.0}s end-to-end",
                started.elapsed().as_secs_f64()
            ))
        } else {
            Err(detail)
        }
    });

    run.check("context effect", || {
        let (c, cs) = mean_eer(
            &world,
            &corpora,
            ProbeCondition::Deidentified,
            false,
            ContextMode::Context,
        )?;
        let (n, ns) = mean_eer(
            &world,
            &corpora,
            ProbeCondition::Deidentified,
            false,
            ContextMode::NoContext,
        )?;
        let detail = format!(
            "deidentified EER context {c:.3} ({}) ≤ no-context {n:.3} ({})",
            fmt(&cs),
            fmt(&ns)
        );
        if c <= n {
            Ok(detail)
        } else {
            Err(detail)
        }
    });

    run.check("parrot attack direction", || {
        let mut parts = Vec::new();
        let mut ok = true;
        for (name, probe) in [
            ("pixelated", ProbeCondition::Pixelated),
            ("blurred", ProbeCondition::Blurred),
        ] {
            let (plain, _) = mean_eer(&world, &corpora, probe, false, ContextMode::Context)?;
            let (parrot, _) = mean_eer(&world, &corpora, probe, true, ContextMode::Context)?;
            ok &= parrot < plain;
            parts.push(format!("{name} {plain:.3} → parrot {parrot:.3}"));
        }
        let detail = parts.join(", ");
        if ok {
            Ok(detail)
        } else {
            Err(detail)
        }
    });

    run.check("identity mixing convergence", || {
        let corpus = &corpora[0];
        let probes: Vec<_> = corpus
            .frontal()
            .into_iter()
            .step_by(4)
            .map(|i| &corpus.samples[i])
            .collect();
        if probes.len() < 20 {
            return Err(format!("only {} probes", probes.len()));
        }
        let d = mixing_distances(
            &world.models(),
            &probes,
            &world.mean_face,
            &[1, 2, 4],
            Expression::Neutral,
        )
        .map_err(|e| e.to_string())?;
        let detail = format!(
            "RMS distance to mean face over {} probes, k=1,2,4: {}",
            probes.len(),
            fmt(&d)
        );
        if d[0] > d[1] && d[1] > d[2] {
            Ok(detail)
        } else {
            Err(detail)
        }
    });

    run.check("training reproducibility", || {
        let set = generator_training_set(&world.gallery.samples, cfg.gallery.identities).map_err(|e| e.to_string())?;
        let t = Instant::now();
        let (again, report) = train_generator(&set, &cfg.generator).map_err(|e| e.to_string())?;
        let secs = t.elapsed().as_secs_f64();
        within(secs, 600.0, "generator training")?;
        let mse = corpus_loss(&world.generator, &set).map_err(|e| e.to_string())?;
        if set.len() != 64 || mse >= 0.01 {
            return Err(format!("{} images, training MSE {mse:.5}", set.len()));
        }
        if report.loss_curve != world.generator_report.loss_curve || again != world.generator {
            return Err("retraining with the same seed diverged".into());
        }
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let path = dir.path().join("g.fdgn");
        save_generator(&world.generator, &path).map_err(|e| e.to_string())?;
        let loaded = load_generator(&path).map_err(|e| e.to_string())?;
        let m = world.generator.identities();
        for (i, e) in [(0, 0), (3, 1), (7, 2), (m - 1, 3)] {
            for y in [IdentityVector::one_hot(m, i).unwrap(), IdentityVector::uniform(m, &[i, (i + 5) % m]).unwrap()] {
                let z = AppearanceVector::one_hot(world.generator.expressions(), e).unwrap();
                if generate(&loaded, &y, &z).unwrap() != generate(&world.generator, &y, &z).unwrap() {
                    return Err("checkpoint round trip changed the output".into());
                }
            }
        }
        Ok(format!("64 images, MSE {mse:.5} < 0.01; rerun bit-identical ({secs:.0}s); checkpoint outputs bit-identical"))
    });

    run.check("pipeline locality/determinism", || {
        let pipe = PipelineConfig::default();
        let corpus = &corpora[1];
        let mut changed = 0usize;
        for s in corpus
            .samples
            .iter()
            .step_by(corpus.samples.len() / 10)
            .take(10)
        {
            let face = FaceAnnotation {
                tight: s.tight,
                context: s.context,
                landmarks: s.landmarks,
                track: None,
            };
            let (a, outcome) = deidentify_face_detailed(&s.image, &face, &world.models(), &pipe)
                .map_err(|e| e.to_string())?;
            let (b, _) = deidentify_face_detailed(&s.image, &face, &world.models(), &pipe)
                .map_err(|e| e.to_string())?;
            if a != b {
                return Err("rerun differs".into());
            }
            let mask = outcome.mask.ok_or("face was skipped")?;
            for y in 0..a.height() {
                for x in 0..a.width() {
                    let differs =
                        (0..3).any(|c| a.get(x, y, c).to_bits() != s.image.get(x, y, c).to_bits());
                    if differs {
                        changed += 1;
                        if mask.get(x, y, 0) <= 0.0 {
                            return Err(format!("pixel ({x},{y}) changed outside the blend mask"));
                        }
                    }
                }
            }
        }
        Ok(format!(
            "10 frames bit-identical on rerun; all {changed} changed pixels inside the mask"
        ))
    });

    println!(
        "world training {train_secs:.0}s, total {:.0}s",
        started.elapsed().as_secs_f64()
    );
    if run.failed > 0 {
        println!("{} criteria failed", run.failed);
        std::process::exit(1);
    }
}
