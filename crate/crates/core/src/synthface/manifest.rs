//! Corpus manifests: one CSV row per sample, image paths relative to the
//! manifest's directory.
//!
//! Header: `path,identity,expression,pose,illumination,` then the five
//! landmarks as `lex,ley,rex,rey,nx,ny,mlx,mly,mrx,mry`, the tight box
//! `tx,ty,tw,th` and the context box `cx,cy,cw,ch`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Corpus, Expression, FaceSample, Pose};
use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::imgcore::{io, BoundingBox};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub path: String,
    pub identity: usize,
    pub expression: Expression,
    pub pose: Pose,
    pub illumination: f64,
    pub lex: f64,
    pub ley: f64,
    pub rex: f64,
    pub rey: f64,
    pub nx: f64,
    pub ny: f64,
    pub mlx: f64,
    pub mly: f64,
    pub mrx: f64,
    pub mry: f64,
    pub tx: i64,
    pub ty: i64,
    pub tw: i64,
    pub th: i64,
    pub cx: i64,
    pub cy: i64,
    pub cw: i64,
    pub ch: i64,
}

impl ManifestRecord {
    pub fn from_sample(path: String, s: &FaceSample) -> Self {
        let l = &s.landmarks;
        ManifestRecord {
            path,
            identity: s.identity,
            expression: s.expression,
            pose: s.pose,
            illumination: s.illumination,
            lex: l[0].x,
            ley: l[0].y,
            rex: l[1].x,
            rey: l[1].y,
            nx: l[2].x,
            ny: l[2].y,
            mlx: l[3].x,
            mly: l[3].y,
            mrx: l[4].x,
            mry: l[4].y,
            tx: s.tight.x,
            ty: s.tight.y,
            tw: s.tight.w,
            th: s.tight.h,
            cx: s.context.x,
            cy: s.context.y,
            cw: s.context.w,
            ch: s.context.h,
        }
    }

    pub fn landmarks(&self) -> [Point2; 5] {
        [
            Point2::new(self.lex, self.ley),
            Point2::new(self.rex, self.rey),
            Point2::new(self.nx, self.ny),
            Point2::new(self.mlx, self.mly),
            Point2::new(self.mrx, self.mry),
        ]
    }

    pub fn tight(&self) -> BoundingBox {
        BoundingBox::new(self.tx, self.ty, self.tw, self.th)
    }

    pub fn context(&self) -> BoundingBox {
        BoundingBox::new(self.cx, self.cy, self.cw, self.ch)
    }
}

fn manifest_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Manifest {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| manifest_err(path, e.to_string()))?;
    for r in records {
        w.serialize(r)
            .map_err(|e| manifest_err(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses a manifest and checks that every referenced image exists.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| manifest_err(path, e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, row) in rd.deserialize().enumerate() {
        let r: ManifestRecord =
            row.map_err(|e| manifest_err(path, format!("row {}: {e}", i + 1)))?;
        let img = base.join(&r.path);
        if !img.is_file() {
            return Err(manifest_err(
                &img,
                format!("image referenced on row {} does not exist", i + 1),
            ));
        }
        out.push(r);
    }
    Ok(out)
}

fn file_name(s: &FaceSample, illum_index: usize) -> String {
    format!(
        "id{:03}_{}_{}_l{}.ppm",
        s.identity, s.expression, s.pose, illum_index
    )
}

/// Writes images under `dir/images/` plus `manifest.csv`, `frontal.csv`
/// and `profile.csv`. Returns the three manifest paths.
pub fn write_corpus(dir: &Path, corpus: &Corpus) -> Result<[PathBuf; 3]> {
    let img_dir = dir.join("images");
    fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let mut all = Vec::with_capacity(corpus.samples.len());
    for s in &corpus.samples {
        let li = corpus
            .spec
            .illuminations
            .iter()
            .position(|&l| l == s.illumination)
            .unwrap_or(0);
        let rel = format!("images/{}", file_name(s, li));
        io::save(&s.image, dir.join(&rel))?;
        all.push(ManifestRecord::from_sample(rel, s));
    }
    let paths = [
        dir.join("manifest.csv"),
        dir.join("frontal.csv"),
        dir.join("profile.csv"),
    ];
    write_manifest(&paths[0], &all)?;
    for (pose, path) in [(Pose::Frontal, &paths[1]), (Pose::Profile, &paths[2])] {
        let part: Vec<_> = all.iter().filter(|r| r.pose == pose).cloned().collect();
        write_manifest(path, &part)?;
    }
    Ok(paths)
}

/// Loads every sample a manifest references.
pub fn load_corpus(manifest: &Path) -> Result<Vec<FaceSample>> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    read_manifest(manifest)?
        .into_iter()
        .map(|r| {
            Ok(FaceSample {
                image: io::load(base.join(&r.path))?,
                landmarks: r.landmarks(),
                tight: r.tight(),
                context: r.context(),
                identity: r.identity,
                expression: r.expression,
                pose: r.pose,
                illumination: r.illumination,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthface::{generate_corpus, CorpusSpec};

    fn small() -> Corpus {
        generate_corpus(&CorpusSpec {
            identities: 2,
            expressions: vec![Expression::Neutral, Expression::Angry],
            illuminations: vec![1.0],
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_fields() {
        let dir = tempfile::tempdir().unwrap();
        let c = small();
        let [all, frontal, profile] = write_corpus(dir.path(), &c).unwrap();
        let recs = read_manifest(&all).unwrap();
        assert_eq!(recs.len(), c.samples.len());
        for (r, s) in recs.iter().zip(&c.samples) {
            assert_eq!(r, &ManifestRecord::from_sample(r.path.clone(), s));
        }
        assert_eq!(
            read_manifest(&frontal).unwrap().len() + read_manifest(&profile).unwrap().len(),
            recs.len()
        );
        let loaded = load_corpus(&all).unwrap();
        assert_eq!(loaded[0].landmarks, c.samples[0].landmarks);
        assert_eq!(
            loaded[0].image,
            io::decode(&io::encode(&c.samples[0].image)).unwrap()
        );
    }

    #[test]
    fn missing_image_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let [all, ..] = write_corpus(dir.path(), &small()).unwrap();
        let text = fs::read_to_string(&all)
            .unwrap()
            .replacen("images/id000", "images/nope", 1);
        fs::write(&all, text).unwrap();
        match read_manifest(&all) {
            Err(Error::Manifest { path, .. }) => assert!(path.to_string_lossy().contains("nope")),
            other => panic!("expected manifest error, got {other:?}"),
        }
    }
}
