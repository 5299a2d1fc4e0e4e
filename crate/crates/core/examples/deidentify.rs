//! Trains the default toy world and deidentifies a short street sequence,
//! keeping each tracked person's surrogate stable across frames.

use facedeid::deident::{deidentify_sequence, FaceAnnotation, PipelineConfig};
use facedeid::imgcore::io;
use facedeid::synthface::generate_corpus;
use facedeid::workflow::{eval_corpus_spec, train_world, WorldConfig};

fn main() -> facedeid::Result<()> {
    env_logger::init();
    println!("training generator and encoder (a few minutes)...");
    let world = train_world(&WorldConfig::default())?;
    let corpus = generate_corpus(&eval_corpus_spec(0))?;

    let frames: Vec<_> = corpus
        .samples
        .iter()
        .filter(|s| s.identity < 3)
        .step_by(4)
        .map(|s| {
            let face = FaceAnnotation {
                tight: s.tight,
                context: s.context,
                landmarks: s.landmarks,
                track: Some(s.identity as u64),
            };
            (s.image.clone(), vec![face])
        })
        .collect();
    // With the lock each track keeps the surrogate chosen on its first frame.
    let cfg = PipelineConfig {
        identity_lock: true,
        ..PipelineConfig::default()
    };
    let out = deidentify_sequence(&frames, &world.models(), &cfg)?;

    let dir = std::env::temp_dir().join("facedeid-deidentify");
    std::fs::create_dir_all(&dir).expect("output directory is writable");
    for (i, ((orig, _), deid)) in frames.iter().zip(&out.frames).enumerate() {
        io::save(orig, dir.join(format!("{i:02}_original.ppm")))?;
        io::save(deid, dir.join(format!("{i:02}_deidentified.ppm")))?;
    }
    for (i, sel) in out.selections().iter().enumerate() {
        let track = frames[i].1[0].track.unwrap_or_default();
        println!(
            "frame {i:02}, track {track}: surrogate mixed from {:?}",
            sel[0].as_deref().unwrap_or(&[])
        );
    }
    println!("frames written to {}", dir.display());
    Ok(())
}
