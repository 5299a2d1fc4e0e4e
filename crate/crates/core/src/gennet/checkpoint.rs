//! Binary generator checkpoints.
//!
//! Layout (all integers and reals little-endian):
//! `b"FDGN"`, u32 version, u32 M, u32 E, u32 spec length, spec bytes,
//! u64 parameter count, parameters, u64 buffer count, running statistics,
//! 10 reals of canonical landmarks, final loss.

use std::fs;
use std::path::Path;

use super::GeneratorModel;
use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::nn::serial::{put_f64, put_group, put_u32, Reader};

const MAGIC: &[u8; 4] = b"FDGN";
const VERSION: u32 = 1;

pub fn encode_generator(model: &GeneratorModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, model.identities() as u32);
    put_u32(&mut out, model.expressions() as u32);
    let spec = model.layer_spec();
    put_u32(&mut out, spec.len() as u32);
    out.extend_from_slice(spec.as_bytes());
    put_group(&mut out, &model.params());
    put_group(&mut out, &model.buffers());
    for p in model.canonical_landmarks() {
        put_f64(&mut out, p.x);
        put_f64(&mut out, p.y);
    }
    put_f64(&mut out, model.final_loss());
    out
}

pub fn decode_generator(bytes: &[u8]) -> Result<GeneratorModel> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint(
            "not a generator checkpoint (bad magic)".into(),
        ));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let m = r.u32()? as usize;
    let e = r.u32()? as usize;
    if m == 0 || e == 0 || m > 1 << 16 || e > 1 << 16 {
        return Err(Error::Checkpoint(format!(
            "implausible dimensions M = {m}, E = {e}"
        )));
    }
    let spec_len = r.u32()? as usize;
    let spec = std::str::from_utf8(r.take(spec_len)?)
        .map_err(|_| Error::Checkpoint("layer spec is not UTF-8".into()))?
        .to_string();
    let mut model = GeneratorModel::new(m, e, 0)?;
    if spec != model.layer_spec() {
        return Err(Error::Checkpoint(format!(
            "layer spec mismatch: file has {spec}"
        )));
    }
    r.fill(model.params_mut())?;
    r.fill(model.buffers_mut())?;
    let mut pts = [Point2::new(0.0, 0.0); 5];
    for p in pts.iter_mut() {
        p.x = r.f64()?;
        p.y = r.f64()?;
    }
    if pts.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::Checkpoint("non-finite canonical landmark".into()));
    }
    model.set_canonical_landmarks(pts);
    model.final_loss = r.f64()?;
    r.finish()?;
    Ok(model)
}

pub fn save_generator(model: &GeneratorModel, path: &Path) -> Result<()> {
    fs::write(path, encode_generator(model)).map_err(|e| Error::io(path, e))
}

pub fn load_generator(path: &Path) -> Result<GeneratorModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_generator(&bytes)
}
