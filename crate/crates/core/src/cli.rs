//! Command-line front end. Every subcommand reads one TOML config and
//! writes only below the configured output directory:
//!
//! ```text
//! <out>/data/{gallery,recognizer,eval}/   synth-data
//! <out>/models/                            train-gen, train-embed, build-gallery
//! <out>/deidentified/                      deidentify
//! <out>/eval/results.json                  evaluate
//! <out>/report/                            evaluate, report
//! ```

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{load_config, RunConfig};
use crate::deident::{
    deidentify_sequence, read_sidecar, sidecar_path, write_sidecar, FaceAnnotation, Models,
};
use crate::embednet::{load_encoder, save_encoder, train_encoder, FeatDb};
use crate::error::{Error, Result};
use crate::evalharness::{run_experiment, write_report, ExperimentResult};
use crate::gennet::{load_generator, save_generator, train_generator};
use crate::imgcore::io;
use crate::synthface::{generate_corpus, load_corpus, write_corpus, CorpusSpec, FaceSample};
use crate::workflow::{encoder_training_set, enroll_gallery, generator_training_set, mean_face};

#[derive(Debug, Parser)]
#[command(name = "facedeid", version, about = "Face deidentification toolkit")]
struct Cli {
    /// Configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the evaluation-corpus and pair-sampling seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Caps the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides `paths.out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate the configuration.
    Config {
        /// Echo the effective configuration as TOML.
        #[arg(long)]
        print: bool,
    },
    /// Render the gallery, recognizer and evaluation corpora.
    SynthData,
    /// Train the generator on the gallery corpus.
    TrainGen,
    /// Train the recognition encoder.
    TrainEmbed,
    /// Enroll the gallery identities with the trained encoder.
    BuildGallery,
    /// Deidentify every annotated frame.
    Deidentify,
    /// Run the experiment grid and write results plus a report.
    Evaluate,
    /// Rebuild the report from saved results.
    Report,
}

struct Layout {
    root: PathBuf,
}

impl Layout {
    fn data(&self, name: &str) -> PathBuf {
        self.root.join("data").join(name)
    }

    fn manifest(&self, name: &str) -> PathBuf {
        self.data(name).join("manifest.csv")
    }

    fn model(&self, file: &str) -> PathBuf {
        self.root.join("models").join(file)
    }

    fn results(&self) -> PathBuf {
        self.root.join("eval").join("results.json")
    }
}

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<()> {
    let text =
        serde_json::to_string_pretty(v).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn require(path: &Path, producer: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{} not found; run `facedeid {producer}` first",
            path.display()
        )))
    }
}

fn load_samples(l: &Layout, name: &str) -> Result<Vec<FaceSample>> {
    let m = l.manifest(name);
    require(&m, "synth-data")?;
    load_corpus(&m)
}

fn identity_count(samples: &[FaceSample]) -> usize {
    samples.iter().map(|s| s.identity + 1).max().unwrap_or(0)
}

fn synth_data(cfg: &RunConfig, l: &Layout) -> Result<()> {
    let sets: [(&str, &CorpusSpec); 3] = [
        ("gallery", &cfg.gallery),
        ("recognizer", &cfg.recognizer),
        ("eval", &cfg.corpus),
    ];
    for (name, spec) in sets {
        let corpus = generate_corpus(spec)?;
        let dir = l.data(name);
        write_corpus(&dir, &corpus)?;
        log::info!(
            "{name}: {} images in {}",
            corpus.samples.len(),
            dir.display()
        );
    }
    // Annotation sidecars make the evaluation images valid `deidentify` input.
    let dir = l.data("eval");
    for r in crate::synthface::read_manifest(&l.manifest("eval"))? {
        let face = FaceAnnotation {
            tight: r.tight(),
            context: r.context(),
            landmarks: r.landmarks(),
            track: Some(r.identity as u64),
        };
        write_sidecar(&sidecar_path(&dir.join(&r.path)), &[face])?;
    }
    Ok(())
}

fn train_gen(cfg: &RunConfig, l: &Layout) -> Result<()> {
    let samples = load_samples(l, "gallery")?;
    let set = generator_training_set(&samples, identity_count(&samples))?;
    let (g, report) = train_generator(&set, &cfg.generator)?;
    mkdir(&l.root.join("models"))?;
    save_generator(&g, &l.model("generator.fdgn"))?;
    io::save(&mean_face(&set)?, l.model("mean_face.ppm"))?;
    write_json(&l.model("generator.json"), &report)?;
    println!("generator: final training MSE {:.6}", report.final_loss);
    Ok(())
}

fn train_embed(cfg: &RunConfig, l: &Layout) -> Result<()> {
    let samples = load_samples(l, "recognizer")?;
    let (images, labels) = encoder_training_set(&samples)?;
    let (enc, report) = train_encoder(&images, &labels, &cfg.encoder)?;
    mkdir(&l.root.join("models"))?;
    save_encoder(&enc, &l.model("encoder.fden"))?;
    write_json(&l.model("encoder.json"), &report)?;
    println!("encoder: training accuracy {:.3}", report.final_accuracy);
    Ok(())
}

fn build_gallery(l: &Layout) -> Result<()> {
    let samples = load_samples(l, "gallery")?;
    let enc_path = l.model("encoder.fden");
    require(&enc_path, "train-embed")?;
    let enc = load_encoder(&enc_path)?;
    let db = enroll_gallery(&enc, &samples, identity_count(&samples))?;
    db.save(&l.model("featdb.bin"))?;
    println!("gallery: {} identities, {}-d templates", db.len(), db.dim());
    Ok(())
}

struct Loaded {
    encoder: crate::embednet::EncoderModel,
    featdb: FeatDb,
    generator: crate::gennet::GeneratorModel,
}

impl Loaded {
    fn open(l: &Layout) -> Result<Self> {
        for (file, producer) in [
            ("generator.fdgn", "train-gen"),
            ("encoder.fden", "train-embed"),
            ("featdb.bin", "build-gallery"),
        ] {
            require(&l.model(file), producer)?;
        }
        Ok(Loaded {
            encoder: load_encoder(&l.model("encoder.fden"))?,
            featdb: FeatDb::load(&l.model("featdb.bin"))?,
            generator: load_generator(&l.model("generator.fdgn"))?,
        })
    }

    fn models(&self) -> Models<'_> {
        Models {
            encoder: &self.encoder,
            featdb: &self.featdb,
            generator: &self.generator,
        }
    }
}

fn deidentify(cfg: &RunConfig, l: &Layout) -> Result<()> {
    let models = Loaded::open(l)?;
    let src = match &cfg.paths.frames {
        Some(p) => p.clone(),
        None => {
            require(&l.manifest("eval"), "synth-data")?;
            l.data("eval").join("images")
        }
    };
    let mut names: Vec<PathBuf> = fs::read_dir(&src)
        .map_err(|e| Error::io(&src, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ppm"))
        .collect();
    names.sort();
    let mut seq = Vec::with_capacity(names.len());
    for p in &names {
        let side = sidecar_path(p);
        let faces = if side.is_file() {
            read_sidecar(&side)?
        } else {
            log::warn!(
                "{}: no annotation sidecar, frame copied unchanged",
                p.display()
            );
            Vec::new()
        };
        seq.push((io::load(p)?, faces));
    }
    let out = deidentify_sequence(&seq, &models.models(), &cfg.pipeline)?;
    let dst = l.root.join("deidentified");
    mkdir(&dst)?;
    let mut log_csv = String::from("frame,face,identities\n");
    for ((p, frame), outcomes) in names.iter().zip(&out.frames).zip(&out.outcomes) {
        let name = p.file_name().expect("listed files have names");
        io::save(frame, dst.join(name))?;
        for (i, o) in outcomes.iter().enumerate() {
            let ids = o
                .as_ref()
                .map(|o| o.selection.ids().join(" "))
                .unwrap_or_else(|| "skipped".into());
            log_csv.push_str(&format!("{},{i},{ids}\n", name.to_string_lossy()));
        }
    }
    let sel = dst.join("selections.csv");
    fs::write(&sel, log_csv).map_err(|e| Error::io(&sel, e))?;
    println!("deidentified {} frames into {}", names.len(), dst.display());
    Ok(())
}

fn evaluate(cfg: &RunConfig, l: &Layout) -> Result<()> {
    let models = Loaded::open(l)?;
    let samples = load_samples(l, "eval")?;
    let mut results = Vec::new();
    for spec in cfg.evaluation.specs() {
        let r = run_experiment(&spec, &samples, &models.models(), &cfg.pipeline)?;
        println!(
            "{:<32} {:<9} EER {:.3} ± {:.3}  VER@1%FAR {:.3}  AUC {:.3}",
            spec.label(),
            spec.context.label(),
            r.summary.mean.eer,
            r.summary.std.eer,
            r.summary.mean.ver1,
            r.summary.mean.auc
        );
        results.push(r);
    }
    let path = l.results();
    mkdir(path.parent().expect("results live in a directory"))?;
    write_json(&path, &results)?;
    write_report(&results, &l.root.join("report"))?;
    Ok(())
}

fn report(l: &Layout) -> Result<()> {
    let path = l.results();
    require(&path, "evaluate")?;
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let results: Vec<ExperimentResult> = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let m = write_report(&results, &l.root.join("report"))?;
    println!(
        "report written to {}",
        m.parent().unwrap_or(&l.root).display()
    );
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.corpus.seed = s;
        cfg.evaluation.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.paths.out = o;
    }
    cfg.validate()?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        // Fails only if a pool already exists (e.g. repeated in-process runs).
        if rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_err()
        {
            log::debug!("thread pool already initialised");
        }
    }
    let l = Layout {
        root: cfg.paths.out.clone(),
    };
    match cli.command {
        Command::Config { print } => {
            if print {
                print!("{}", cfg.to_toml());
            } else {
                println!("configuration is valid");
            }
            Ok(())
        }
        Command::SynthData => synth_data(&cfg, &l),
        Command::TrainGen => train_gen(&cfg, &l),
        Command::TrainEmbed => train_embed(&cfg, &l),
        Command::BuildGallery => build_gallery(&l),
        Command::Deidentify => deidentify(&cfg, &l),
        Command::Evaluate => evaluate(&cfg, &l),
        Command::Report => report(&l),
    }
}

/// Parses `args` (program name first) and runs the subcommand. Returns the
/// process exit code: 0 on success, 2 for usage errors, 1 for failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
