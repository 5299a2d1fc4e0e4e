//! Report files: `metrics.json`, `roc/<experiment>_<context>_foldNN.csv`,
//! `auc/<experiment>_<context>.csv`, `table.md` and `roc.svg`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{compute_roc, ScoreSet};
use super::protocol::{ExperimentResult, FoldMetrics};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub experiment: String,
    pub context: String,
    pub fold: usize,
    #[serde(flatten)]
    pub metrics: FoldMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub experiment: String,
    pub context: String,
    pub folds: usize,
    pub mean: FoldMetrics,
    pub std: FoldMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub records: Vec<FoldRecord>,
    pub summaries: Vec<SummaryRecord>,
}

impl MetricsFile {
    pub fn from_results(results: &[ExperimentResult]) -> Self {
        let mut records = Vec::new();
        let mut summaries = Vec::new();
        for r in results {
            let (experiment, context) = (r.spec.label(), r.spec.context.label().to_string());
            for (fold, m) in r.summary.folds.iter().enumerate() {
                records.push(FoldRecord {
                    experiment: experiment.clone(),
                    context: context.clone(),
                    fold,
                    metrics: *m,
                });
            }
            summaries.push(SummaryRecord {
                experiment,
                context,
                folds: r.summary.folds.len(),
                mean: r.summary.mean,
                std: r.summary.std,
            });
        }
        MetricsFile { records, summaries }
    }

    pub fn summary(&self, experiment: &str, context: &str) -> Option<&SummaryRecord> {
        self.summaries
            .iter()
            .find(|s| s.experiment == experiment && s.context == context)
    }
}

pub fn read_metrics(path: &Path) -> Result<MetricsFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Experiment × context grid with mean ± std in percent.
fn table(m: &MetricsFile) -> String {
    let mut out = String::from(
        "| experiment | context | EER (%) | VER-1 (%) | AUC |\n|---|---|---|---|---|\n",
    );
    for s in &m.summaries {
        writeln!(
            out,
            "| {} | {} | {:.1} ± {:.1} | {:.1} ± {:.1} | {:.3} ± {:.3} |",
            s.experiment,
            s.context,
            100.0 * s.mean.eer,
            100.0 * s.std.eer,
            100.0 * s.mean.ver1,
            100.0 * s.std.ver1,
            s.mean.auc,
            s.std.auc
        )
        .unwrap();
    }
    out
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// ROC of all folds pooled, FAR on a log axis from 10⁻³ as is customary.
fn svg(results: &[ExperimentResult]) -> Result<String> {
    let (w, h, pad) = (520.0, 400.0, 50.0);
    let fx = |far: f64| pad + (far.max(1e-3).log10() + 3.0) / 3.0 * (w - 2.0 * pad);
    let fy = |ver: f64| h - pad - ver * (h - 2.0 * pad);
    let mut out = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    out.push('\n');
    writeln!(
        out,
        r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * pad,
        h - 2.0 * pad
    )
    .unwrap();
    for (i, t) in ["0.001", "0.01", "0.1", "1"].iter().enumerate() {
        let x = pad + i as f64 / 3.0 * (w - 2.0 * pad);
        writeln!(
            out,
            r#"<text x="{x}" y="{}" text-anchor="middle">{t}</text>"#,
            h - pad + 15.0
        )
        .unwrap();
    }
    for v in [0.0, 0.5, 1.0] {
        writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{v}</text>"#,
            pad - 5.0,
            fy(v) + 4.0
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">FAR</text>"#,
        w / 2.0,
        h - 12.0
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">VER</text>"#,
        h / 2.0,
        h / 2.0
    )
    .unwrap();
    for (i, r) in results.iter().enumerate() {
        let legit: Vec<f64> = r
            .scores
            .iter()
            .flat_map(|s| s.legit().iter().copied())
            .collect();
        let imp: Vec<f64> = r
            .scores
            .iter()
            .flat_map(|s| s.impostor().iter().copied())
            .collect();
        let roc = compute_roc(&ScoreSet::new(legit, imp)?);
        let pts: Vec<String> = roc
            .points
            .iter()
            .map(|&(f, v)| format!("{:.2},{:.2}", fx(f), fy(v)))
            .collect();
        let color = PALETTE[i % PALETTE.len()];
        writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        )
        .unwrap();
        let ly = pad + 14.0 + 14.0 * i as f64;
        writeln!(
            out,
            r#"<text x="{}" y="{ly}" fill="{color}">{} ({})</text>"#,
            w - pad - 5.0 - 170.0,
            r.spec.label(),
            r.spec.context.label()
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Writes all report files under `dir` and returns the metrics file path.
pub fn write_report(results: &[ExperimentResult], dir: &Path) -> Result<PathBuf> {
    if results.is_empty() {
        return Err(Error::InvalidArgument("nothing to report".into()));
    }
    for sub in ["roc", "auc"] {
        let d = dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let metrics = MetricsFile::from_results(results);
    for r in results {
        let stem = format!("{}_{}", r.spec.label(), r.spec.context.label());
        for (k, roc) in r.rocs.iter().enumerate() {
            let mut csv = String::from("far,ver\n");
            for (f, v) in &roc.points {
                writeln!(csv, "{f},{v}").unwrap();
            }
            write(
                &dir.join("roc").join(format!("{stem}_fold{k:02}.csv")),
                &csv,
            )?;
        }
        let mut csv = String::from("fold,auc\n");
        for (k, m) in r.summary.folds.iter().enumerate() {
            writeln!(csv, "{k},{}", m.auc).unwrap();
        }
        write(&dir.join("auc").join(format!("{stem}.csv")), &csv)?;
    }
    let path = dir.join("metrics.json");
    let json = serde_json::to_string_pretty(&metrics).map_err(|e| Error::Config(e.to_string()))?;
    write(&path, &json)?;
    write(&dir.join("table.md"), &table(&metrics))?;
    write(&dir.join("roc.svg"), &svg(results)?)?;
    Ok(path)
}
