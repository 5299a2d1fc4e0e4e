//! Run configuration: one TOML file drives every CLI subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::deident::PipelineConfig;
use crate::embednet::EncoderTrainConfig;
use crate::error::{Error, Result};
use crate::evalharness::{ContextMode, ExperimentSpec, ProbeCondition, ReferenceSplit};
use crate::gennet::TrainConfig;
use crate::synthface::CorpusSpec;
use crate::workflow::{eval_corpus_spec, WorldConfig};

/// One row of the experiment grid; each is run once per context mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentRow {
    pub probe: ProbeCondition,
    pub reference: ReferenceSplit,
    #[serde(default)]
    pub parrot: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub experiments: Vec<ExperimentRow>,
    pub contexts: Vec<ContextMode>,
    pub folds: usize,
    pub legit_pairs: usize,
    pub impostor_pairs: usize,
    pub seed: u64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        use ProbeCondition as P;
        use ReferenceSplit as R;
        let row = |probe, reference, parrot| ExperimentRow {
            probe,
            reference,
            parrot,
        };
        EvaluationConfig {
            experiments: vec![
                row(P::Original, R::Original, false),
                row(P::Original, R::Profile, false),
                row(P::Deidentified, R::Original, false),
                row(P::Deidentified, R::Profile, false),
                row(P::Pixelated, R::Original, false),
                row(P::Pixelated, R::Original, true),
                row(P::Blurred, R::Original, false),
                row(P::Blurred, R::Original, true),
            ],
            contexts: vec![ContextMode::Context, ContextMode::NoContext],
            folds: 10,
            legit_pairs: 300,
            impostor_pairs: 300,
            seed: 0,
        }
    }
}

impl EvaluationConfig {
    pub fn specs(&self) -> Vec<ExperimentSpec> {
        let mut out = Vec::new();
        for r in &self.experiments {
            for &c in &self.contexts {
                out.push(ExperimentSpec {
                    probe: r.probe,
                    reference: r.reference,
                    parrot: r.parrot,
                    context: c,
                    folds: self.folds,
                    legit_pairs: self.legit_pairs,
                    impostor_pairs: self.impostor_pairs,
                    seed: self.seed,
                });
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Root of everything the CLI writes.
    pub out: PathBuf,
    /// Frames (with `.faces` sidecars) for `deidentify`; defaults to the
    /// synthesized evaluation images.
    pub frames: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            out: PathBuf::from("run"),
            frames: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Evaluation corpus.
    pub corpus: CorpusSpec,
    pub gallery: CorpusSpec,
    pub recognizer: CorpusSpec,
    pub generator: TrainConfig,
    pub encoder: EncoderTrainConfig,
    pub pipeline: PipelineConfig,
    pub evaluation: EvaluationConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let w = WorldConfig::default();
        RunConfig {
            corpus: eval_corpus_spec(0),
            gallery: w.gallery,
            recognizer: w.recognizer,
            generator: w.generator,
            encoder: w.encoder,
            pipeline: PipelineConfig::default(),
            evaluation: EvaluationConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

fn check_corpus(errs: &mut Vec<String>, key: &str, c: &CorpusSpec) {
    if c.identities < 2 {
        errs.push(format!(
            "{key}.identities must be at least 2 (got {})",
            c.identities
        ));
    }
    for (name, empty) in [
        ("expressions", c.expressions.is_empty()),
        ("poses", c.poses.is_empty()),
        ("illuminations", c.illuminations.is_empty()),
    ] {
        if empty {
            errs.push(format!("{key}.{name} must not be empty"));
        }
    }
    for l in &c.illuminations {
        if !(0.5..=1.5).contains(l) {
            errs.push(format!("{key}.illuminations: {l} outside [0.5, 1.5]"));
        }
    }
    if !(0.0..=0.3).contains(&c.colour_jitter) {
        errs.push(format!(
            "{key}.colour_jitter must lie in [0, 0.3] (got {})",
            c.colour_jitter
        ));
    }
    if !(0.0..=1.0).contains(&c.clothing_swap) {
        errs.push(format!(
            "{key}.clothing_swap must lie in [0, 1] (got {})",
            c.clothing_swap
        ));
    }
}

impl RunConfig {
    pub fn world(&self) -> WorldConfig {
        WorldConfig {
            gallery: self.gallery.clone(),
            recognizer: self.recognizer.clone(),
            generator: self.generator.clone(),
            encoder: self.encoder.clone(),
        }
    }

    /// Reports every violation at once, each prefixed by its key path.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        check_corpus(&mut errs, "corpus", &self.corpus);
        check_corpus(&mut errs, "gallery", &self.gallery);
        check_corpus(&mut errs, "recognizer", &self.recognizer);
        if self.gallery.seed == self.recognizer.seed {
            errs.push("recognizer.seed must differ from gallery.seed".into());
        }
        let g = &self.generator;
        if g.epochs == 0 {
            errs.push("generator.epochs must be positive".into());
        }
        if g.batch_size == 0 {
            errs.push("generator.batch_size must be positive".into());
        }
        if !(g.learning_rate > 0.0) {
            errs.push("generator.learning_rate must be positive".into());
        }
        if !(0.0..1.0).contains(&g.beta1) || !(0.0..1.0).contains(&g.beta2) {
            errs.push("generator.beta1 and generator.beta2 must lie in [0, 1)".into());
        }
        let e = &self.encoder;
        if e.epochs == 0 {
            errs.push("encoder.epochs must be positive".into());
        }
        if e.batch_size == 0 {
            errs.push("encoder.batch_size must be positive".into());
        }
        if !(e.learning_rate > 0.0) {
            errs.push("encoder.learning_rate must be positive".into());
        }
        let p = &self.pipeline;
        if p.k == 0 || p.k > self.gallery.identities {
            errs.push(format!(
                "pipeline.k must lie in 1..={} (got {})",
                self.gallery.identities, p.k
            ));
        }
        if p.skin.validate().is_err() {
            errs.push("pipeline.skin: lower must not exceed upper componentwise".into());
        }
        if p.robust.iterations == 0 {
            errs.push("pipeline.robust.iterations must be positive".into());
        }
        if !(p.robust.inlier_threshold > 0.0) {
            errs.push("pipeline.robust.inlier_threshold must be positive".into());
        }
        let v = &self.evaluation;
        if v.folds < 2 {
            errs.push(format!(
                "evaluation.folds must be at least 2 (got {})",
                v.folds
            ));
        }
        if v.legit_pairs == 0 {
            errs.push("evaluation.legit_pairs must be at least 1".into());
        }
        if v.impostor_pairs == 0 {
            errs.push("evaluation.impostor_pairs must be at least 1".into());
        }
        if v.experiments.is_empty() || v.contexts.is_empty() {
            errs.push("evaluation.experiments and evaluation.contexts must not be empty".into());
        }
        for (i, r) in v.experiments.iter().enumerate() {
            if r.parrot && !matches!(r.probe, ProbeCondition::Pixelated | ProbeCondition::Blurred) {
                errs.push(format!(
                    "evaluation.experiments[{i}].parrot needs a pixelated or blurred probe"
                ));
            }
        }
        if self.paths.out.as_os_str().is_empty() {
            errs.push("paths.out must not be empty".into());
        }
        if let Some(f) = &self.paths.frames {
            if !f.is_dir() {
                errs.push(format!("paths.frames: {} is not a directory", f.display()));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid configuration:\n  {}",
                errs.join("\n  ")
            )))
        }
    }

    /// Keys absent from `text` keep their [`RunConfig::default`] values, also
    /// inside partially given tables (`[gallery] identities = 8` keeps the
    /// gallery's own seed and scene).
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut merged = toml::Table::try_from(RunConfig::default()).expect("config serializes");
        overlay(&mut merged, user);
        let cfg: RunConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

fn overlay(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => overlay(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::from_toml(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
