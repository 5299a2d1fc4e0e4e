//! The enrolled gallery and k-closest matching.
//!
//! File layout (little-endian): `b"FDDB"`, u32 version, u32 M, u32 D, then
//! per identity a u32 id length, the UTF-8 id bytes and D reals.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{cosine_similarity, extract_embeddings, Embedding, EncoderModel};
use crate::error::{Error, Result};
use crate::gennet::IdentityVector;
use crate::imgcore::Image;

const MAGIC: &[u8; 4] = b"FDDB";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatDb {
    entries: Vec<(String, Embedding)>,
}

impl FeatDb {
    pub fn new(entries: Vec<(String, Embedding)>) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| Error::InvalidArgument("gallery needs at least one identity".into()))?;
        let dim = first.1.dim();
        let mut seen = HashSet::new();
        for (id, e) in &entries {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate gallery id {id:?}"
                )));
            }
            if e.dim() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "template {id:?} has {} dims, expected {dim}",
                    e.dim()
                )));
            }
        }
        Ok(FeatDb { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.entries[0].1.dim()
    }

    pub fn entries(&self) -> &[(String, Embedding)] {
        &self.entries
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|(i, _)| i == id)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        for (id, e) in &self.entries {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for v in e.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut take = |n: usize| -> Result<&[u8]> {
            let end = pos + n;
            if end > bytes.len() {
                return Err(Error::Decode {
                    offset: pos,
                    msg: "gallery file truncated".into(),
                });
            }
            let s = &bytes[pos..end];
            pos = end;
            Ok(s)
        };
        if take(4)? != MAGIC {
            return Err(Error::Decode {
                offset: 0,
                msg: "bad gallery magic".into(),
            });
        }
        let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
        let version = u32_at(take(4)?);
        if version != VERSION {
            return Err(Error::Decode {
                offset: 4,
                msg: format!("unsupported gallery version {version}"),
            });
        }
        let m = u32_at(take(4)?) as usize;
        let d = u32_at(take(4)?) as usize;
        let mut entries = Vec::with_capacity(m.min(1 << 16));
        for _ in 0..m {
            let n = u32_at(take(4)?) as usize;
            let id = std::str::from_utf8(take(n)?)
                .map_err(|_| Error::Decode {
                    offset: 0,
                    msg: "gallery id is not UTF-8".into(),
                })?
                .to_string();
            let mut v = Vec::with_capacity(d);
            for _ in 0..d {
                v.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
            }
            entries.push((id, Embedding::new(v)?));
        }
        if pos != bytes.len() {
            return Err(Error::Decode {
                offset: pos,
                msg: "trailing bytes after gallery".into(),
            });
        }
        FeatDb::new(entries)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        FeatDb::decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Template per identity = arithmetic mean of its image embeddings.
pub fn build_gallery(model: &EncoderModel, groups: &[(String, Vec<&Image>)]) -> Result<FeatDb> {
    let mut entries = Vec::with_capacity(groups.len());
    for (id, imgs) in groups {
        if imgs.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "identity {id:?} has no images"
            )));
        }
        let embs = extract_embeddings(model, imgs)?;
        let mut mean = vec![0.0; model.embedding_dim()];
        for e in &embs {
            for (m, v) in mean.iter_mut().zip(e.values()) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= embs.len() as f64;
        }
        entries.push((id.clone(), Embedding::new(mean)?));
    }
    FeatDb::new(entries)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchEntry {
    pub id: String,
    /// Position in the gallery, i.e. the identity's slot in `y`.
    pub index: usize,
    pub similarity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    /// Gallery size M.
    pub gallery_size: usize,
    /// Sorted by similarity descending, ties by ascending id.
    pub entries: Vec<MatchEntry>,
}

impl MatchResult {
    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.id.as_str()).collect()
    }
}

pub fn match_k_closest(db: &FeatDb, probe: &Embedding, k: usize) -> Result<MatchResult> {
    if k == 0 || k > db.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must lie in 1..={}",
            db.len()
        )));
    }
    let mut entries = db
        .entries
        .iter()
        .enumerate()
        .map(|(index, (id, t))| {
            Ok(MatchEntry {
                id: id.clone(),
                index,
                similarity: cosine_similarity(probe, t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.id.cmp(&b.id))
    });
    entries.truncate(k);
    Ok(MatchResult {
        gallery_size: db.len(),
        entries,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    #[default]
    Uniform,
    Similarity,
}

/// Turns the selected identities into mixture weights. Similarity mode
/// weights by `max(sim, 0)`; if every similarity is ≤ 0 it falls back to
/// uniform weights.
pub fn identities_to_y(m: &MatchResult, mode: WeightMode) -> Result<IdentityVector> {
    if m.entries.is_empty() {
        return Err(Error::InvalidArgument("empty match result".into()));
    }
    let mut w = vec![0.0; m.gallery_size];
    let clipped: Vec<f64> = m.entries.iter().map(|e| e.similarity.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if mode == WeightMode::Similarity && total > 0.0 {
        for (e, c) in m.entries.iter().zip(&clipped) {
            w[e.index] += c / total;
        }
    } else {
        let share = 1.0 / m.entries.len() as f64;
        for e in &m.entries {
            w[e.index] += share;
        }
    }
    IdentityVector::new(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn emb(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    fn db() -> FeatDb {
        FeatDb::new(vec![
            ("C".into(), emb(&[0.2, (1.0f64 - 0.04).sqrt()])),
            ("A".into(), emb(&[0.9, (1.0f64 - 0.81).sqrt()])),
            ("B".into(), emb(&[0.5, (1.0f64 - 0.25).sqrt()])),
        ])
        .unwrap()
    }

    #[test]
    fn top_k_ordering() {
        let r = match_k_closest(&db(), &emb(&[1.0, 0.0]), 2).unwrap();
        assert_eq!(r.ids(), vec!["A", "B"]);
        assert!((r.entries[0].similarity - 0.9).abs() < 1e-12);
        assert!(match_k_closest(&db(), &emb(&[1.0, 0.0]), 4).is_err());
        assert!(match_k_closest(&db(), &emb(&[1.0, 0.0]), 0).is_err());
    }

    #[test]
    fn probe_equal_to_template_ranks_first() {
        let d = db();
        let r = match_k_closest(&d, &d.entries()[2].1, 1).unwrap();
        assert_eq!(r.ids(), vec!["B"]);
        assert!((r.entries[0].similarity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ties_break_by_id() {
        let d = FeatDb::new(vec![
            ("z".into(), emb(&[1.0, 0.0])),
            ("a".into(), emb(&[2.0, 0.0])),
        ])
        .unwrap();
        assert_eq!(
            match_k_closest(&d, &emb(&[1.0, 1.0]), 2).unwrap().ids(),
            vec!["a", "z"]
        );
    }

    #[test]
    fn y_weights() {
        let d = db();
        let probe = emb(&[1.0, 0.0]);
        let one = identities_to_y(
            &match_k_closest(&d, &probe, 1).unwrap(),
            WeightMode::Uniform,
        )
        .unwrap();
        assert_eq!(one.weights(), &[0.0, 1.0, 0.0]);
        let m2 = match_k_closest(&d, &probe, 2).unwrap();
        assert_eq!(
            identities_to_y(&m2, WeightMode::Uniform).unwrap().weights(),
            &[0.0, 0.5, 0.5]
        );
        let manual = MatchResult {
            gallery_size: 3,
            entries: vec![
                MatchEntry {
                    id: "A".into(),
                    index: 1,
                    similarity: 0.9,
                },
                MatchEntry {
                    id: "B".into(),
                    index: 2,
                    similarity: 0.3,
                },
            ],
        };
        let y = identities_to_y(&manual, WeightMode::Similarity).unwrap();
        assert!((y.weights()[1] - 0.75).abs() < 1e-12 && (y.weights()[2] - 0.25).abs() < 1e-12);
        let negative = MatchResult {
            gallery_size: 3,
            entries: vec![
                MatchEntry {
                    id: "A".into(),
                    index: 0,
                    similarity: -0.2,
                },
                MatchEntry {
                    id: "B".into(),
                    index: 2,
                    similarity: -0.6,
                },
            ],
        };
        assert_eq!(
            identities_to_y(&negative, WeightMode::Similarity)
                .unwrap()
                .weights(),
            &[0.5, 0.0, 0.5]
        );
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let d = db();
        assert_eq!(FeatDb::decode(&d.encode()).unwrap(), d);
        let bytes = d.encode();
        assert!(FeatDb::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'Q';
        assert!(FeatDb::decode(&bad).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(FeatDb::new(vec![("a".into(), emb(&[1.0])), ("a".into(), emb(&[2.0]))]).is_err());
    }

    fn vecs(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0f64..1.0, n)
            .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(a in vecs(8), b in vecs(8), s in 0.01f64..100.0) {
            let (ea, eb) = (emb(&a), emb(&b));
            let sa = emb(&a.iter().map(|x| x * s).collect::<Vec<_>>());
            let ab = cosine_similarity(&ea, &eb).unwrap();
            prop_assert!((ab - cosine_similarity(&eb, &ea).unwrap()).abs() <= 1e-12);
            prop_assert!((ab - cosine_similarity(&sa, &eb).unwrap()).abs() <= 1e-12);
        }

        #[test]
        fn ranking_invariant_to_probe_scale(t in prop::collection::vec(vecs(4), 2..8), p in vecs(4), s in 0.01f64..100.0) {
            let d = FeatDb::new(t.iter().enumerate().map(|(i, v)| (format!("id{i:02}"), emb(v))).collect()).unwrap();
            let scaled = emb(&p.iter().map(|x| x * s).collect::<Vec<_>>());
            let a = match_k_closest(&d, &emb(&p), d.len()).unwrap();
            let b = match_k_closest(&d, &scaled, d.len()).unwrap();
            prop_assert_eq!(a.ids(), b.ids());
        }

        #[test]
        fn full_ranking_matches_sort_oracle(t in prop::collection::vec(vecs(4), 1..10), p in vecs(4), k in 1usize..3) {
            let d = FeatDb::new(t.iter().enumerate().map(|(i, v)| (format!("id{i:02}"), emb(v))).collect()).unwrap();
            let probe = emb(&p);
            let mut oracle: Vec<(f64, String)> = d.entries().iter().map(|(id, e)| {
                let dot: f64 = e.values().iter().zip(&p).map(|(x, y)| x * y).sum();
                (dot / (e.norm() * probe.norm()), id.clone())
            }).collect();
            oracle.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let full = match_k_closest(&d, &probe, d.len()).unwrap();
            prop_assert_eq!(full.ids(), oracle.iter().map(|o| o.1.as_str()).collect::<Vec<_>>());
            for mode in [WeightMode::Uniform, WeightMode::Similarity] {
                let y = identities_to_y(&match_k_closest(&d, &probe, k.min(d.len())).unwrap(), mode).unwrap();
                prop_assert!((y.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                prop_assert!(y.weights().iter().all(|w| *w >= 0.0));
            }
        }
    }
}
