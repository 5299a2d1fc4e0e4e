//! `.faces` sidecars: one line per face,
//! `tx,ty,tw,th,cx,cy,cw,ch,lex,ley,rex,rey,nx,ny,mlx,mly,mrx,mry[,track]`.
//! Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::FaceAnnotation;
use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::imgcore::BoundingBox;

/// `frame.ppm` → `frame.ppm.faces`.
pub fn sidecar_path(frame: &Path) -> PathBuf {
    let mut s = frame.as_os_str().to_owned();
    s.push(".faces");
    PathBuf::from(s)
}

pub fn write_sidecar(path: &Path, faces: &[FaceAnnotation]) -> Result<()> {
    let mut out =
        String::from("# tx,ty,tw,th,cx,cy,cw,ch,lex,ley,rex,rey,nx,ny,mlx,mly,mrx,mry[,track]\n");
    for f in faces {
        let (t, c) = (f.tight, f.context);
        write!(
            out,
            "{},{},{},{},{},{},{},{}",
            t.x, t.y, t.w, t.h, c.x, c.y, c.w, c.h
        )
        .unwrap();
        for p in &f.landmarks {
            write!(out, ",{},{}", p.x, p.y).unwrap();
        }
        if let Some(id) = f.track {
            write!(out, ",{id}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn parse_line(line: &str) -> std::result::Result<FaceAnnotation, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 18 && fields.len() != 19 {
        return Err(format!("expected 18 or 19 fields, got {}", fields.len()));
    }
    let int = |i: usize| {
        fields[i]
            .parse::<i64>()
            .map_err(|e| format!("field {}: {e}", i + 1))
    };
    let real = |i: usize| {
        fields[i]
            .parse::<f64>()
            .map_err(|e| format!("field {}: {e}", i + 1))
            .and_then(|v| {
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(format!("field {} is not finite", i + 1))
                }
            })
    };
    let tight = BoundingBox::new(int(0)?, int(1)?, int(2)?, int(3)?);
    let context = BoundingBox::new(int(4)?, int(5)?, int(6)?, int(7)?);
    let mut landmarks = [Point2::new(0.0, 0.0); 5];
    for (j, p) in landmarks.iter_mut().enumerate() {
        *p = Point2::new(real(8 + 2 * j)?, real(9 + 2 * j)?);
    }
    let track = match fields.get(18) {
        Some(s) => Some(s.parse::<u64>().map_err(|e| format!("track id: {e}"))?),
        None => None,
    };
    Ok(FaceAnnotation {
        tight,
        context,
        landmarks,
        track,
    })
}

pub fn read_sidecar(path: &Path) -> Result<Vec<FaceAnnotation>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut faces = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        faces.push(parse_line(line).map_err(|msg| Error::Annotation {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        })?);
    }
    Ok(faces)
}
