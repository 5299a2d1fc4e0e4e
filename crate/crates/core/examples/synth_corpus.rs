//! Renders a small toy corpus and writes it with a manifest.

use facedeid::synthface::{generate_corpus, load_corpus, write_corpus, CorpusSpec};

fn main() -> facedeid::Result<()> {
    let spec = CorpusSpec {
        identities: 4,
        ..CorpusSpec::default()
    };
    let corpus = generate_corpus(&spec)?;
    println!(
        "{} frames: {} frontal, {} profile, {} identities",
        corpus.samples.len(),
        corpus.frontal().len(),
        corpus.profile().len(),
        spec.identities
    );
    let s = &corpus.samples[0];
    println!(
        "first frame: tight {:?}, context {:?}, left eye at ({:.1}, {:.1})",
        s.tight, s.context, s.landmarks[0].x, s.landmarks[0].y
    );

    let dir = std::env::temp_dir().join("facedeid-corpus");
    let [manifest, ..] = write_corpus(&dir, &corpus)?;
    let back = load_corpus(&manifest)?;
    println!(
        "wrote {} and read back {} samples",
        manifest.display(),
        back.len()
    );
    Ok(())
}
