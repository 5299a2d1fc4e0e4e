//! Reidentification-risk evaluation: original, deidentified and naive
//! (plus parrot) probes against original references, with and without
//! context, over one evaluation corpus.
//!
//! `cargo run --release --example evaluate [seed]`

use facedeid::deident::PipelineConfig;
use facedeid::evalharness::{
    run_experiment, write_report, ContextMode, ExperimentSpec, ProbeCondition,
};
use facedeid::synthface::generate_corpus;
use facedeid::workflow::{eval_corpus_spec, train_world, WorldConfig};

fn main() -> facedeid::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("seed must be a number"))
        .unwrap_or(0);
    println!("training generator and encoder (a few minutes)...");
    let world = train_world(&WorldConfig::default())?;
    let corpus = generate_corpus(&eval_corpus_spec(seed))?;
    let pipe = PipelineConfig::default();

    let mut results = Vec::new();
    for (probe, parrot) in [
        (ProbeCondition::Original, false),
        (ProbeCondition::Deidentified, false),
        (ProbeCondition::Pixelated, false),
        (ProbeCondition::Pixelated, true),
        (ProbeCondition::Blurred, false),
        (ProbeCondition::Blurred, true),
    ] {
        for context in [ContextMode::Context, ContextMode::NoContext] {
            let spec = ExperimentSpec {
                probe,
                parrot,
                context,
                seed,
                ..Default::default()
            };
            let r = run_experiment(&spec, &corpus.samples, &world.models(), &pipe)?;
            let (m, s) = (&r.summary.mean, &r.summary.std);
            println!(
                "{:<28} {:<9} EER {:.3}±{:.3}  VER-1 {:.3}  AUC {:.3}",
                spec.label(),
                context.label(),
                m.eer,
                s.eer,
                m.ver1,
                m.auc
            );
            results.push(r);
        }
    }
    let dir = std::env::temp_dir().join("facedeid-evaluate");
    let metrics = write_report(&results, &dir)?;
    println!("report: {}", metrics.display());
    Ok(())
}
