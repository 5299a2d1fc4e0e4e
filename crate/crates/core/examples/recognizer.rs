//! Trains the recognition encoder, enrolls the gallery and ranks probes by
//! cosine similarity.
//!
//! `cargo run --release --example recognizer [epochs]`

use facedeid::embednet::{extract_embedding, match_k_closest};
use facedeid::imgcore::crop;
use facedeid::synthface::generate_corpus;
use facedeid::workflow::{enroll_gallery, gallery_id, train_encoder_on, WorldConfig};

fn main() -> facedeid::Result<()> {
    let mut cfg = WorldConfig::default();
    if let Some(e) = std::env::args().nth(1) {
        cfg.encoder.epochs = e.parse().expect("epochs must be a number");
    }
    let recognizer = generate_corpus(&cfg.recognizer)?;
    let (encoder, report) = train_encoder_on(&recognizer, &cfg.encoder)?;
    println!(
        "encoder: {} epochs, training accuracy {:.3}",
        cfg.encoder.epochs, report.final_accuracy
    );

    let gallery = generate_corpus(&cfg.gallery)?;
    let db = enroll_gallery(&encoder, &gallery.samples, cfg.gallery.identities)?;
    let mut hits = 0;
    for s in &gallery.samples {
        let e = extract_embedding(&encoder, &crop(&s.image, s.context)?)?;
        let top = match_k_closest(&db, &e, 3)?;
        hits += (top.entries[0].id == gallery_id(s.identity)) as usize;
    }
    println!(
        "gallery rank-1 self-identification: {hits}/{}",
        gallery.samples.len()
    );
    Ok(())
}
