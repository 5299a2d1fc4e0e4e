//! Trains the generator on the studio gallery, checkpoints it, and renders
//! single identities, identity mixtures and every expression.
//!
//! `cargo run --release --example train_generator [epochs]`

use facedeid::gennet::{
    generate, load_generator, save_generator, AppearanceVector, IdentityVector,
};
use facedeid::imgcore::io;
use facedeid::synthface::{generate_corpus, Expression};
use facedeid::workflow::{train_generator_on, WorldConfig};

fn main() -> facedeid::Result<()> {
    let mut cfg = WorldConfig::default();
    if let Some(e) = std::env::args().nth(1) {
        cfg.generator.epochs = e.parse().expect("epochs must be a number");
    }
    let gallery = generate_corpus(&cfg.gallery)?;
    let (g, report, mean) = train_generator_on(&gallery, &cfg.generator)?;
    println!(
        "{} epochs, training MSE {:.5}",
        cfg.generator.epochs, report.final_loss
    );

    let out = std::env::temp_dir().join("facedeid-generator");
    std::fs::create_dir_all(&out).expect("output directory is writable");
    save_generator(&g, &out.join("generator.fdgn"))?;
    let g = load_generator(&out.join("generator.fdgn"))?;
    io::save(&mean, out.join("mean_face.ppm"))?;

    let m = g.identities();
    let neutral = AppearanceVector::one_hot(g.expressions(), Expression::Neutral.index())?;
    for k in [1, 2, 4, 8] {
        let ids: Vec<usize> = (0..k).collect();
        io::save(
            &generate(&g, &IdentityVector::uniform(m, &ids)?, &neutral)?,
            out.join(format!("mix_k{k}.ppm")),
        )?;
    }
    for e in Expression::ALL {
        let z = AppearanceVector::one_hot(g.expressions(), e.index())?;
        io::save(
            &generate(&g, &IdentityVector::one_hot(m, 0)?, &z)?,
            out.join(format!("id0_{e:?}.ppm").to_lowercase()),
        )?;
    }
    println!("samples written to {}", out.display());
    Ok(())
}
