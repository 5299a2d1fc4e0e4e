//! Binary encoder checkpoints: `b"FDEN"`, u32 version, u32 classes, u32 spec
//! length, spec bytes, parameters, running statistics.

use std::fs;
use std::path::Path;

use super::EncoderModel;
use crate::error::{Error, Result};
use crate::nn::serial::{put_group, put_u32, Reader};

const MAGIC: &[u8; 4] = b"FDEN";
const VERSION: u32 = 1;

pub fn encode_encoder(model: &EncoderModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, model.classes() as u32);
    let spec = model.layer_spec();
    put_u32(&mut out, spec.len() as u32);
    out.extend_from_slice(spec.as_bytes());
    put_group(&mut out, &model.params());
    put_group(&mut out, &model.buffers());
    out
}

pub fn decode_encoder(bytes: &[u8]) -> Result<EncoderModel> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint(
            "not an encoder checkpoint (bad magic)".into(),
        ));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let classes = r.u32()? as usize;
    if !(2..=1 << 16).contains(&classes) {
        return Err(Error::Checkpoint(format!(
            "implausible class count {classes}"
        )));
    }
    let len = r.u32()? as usize;
    let spec = String::from_utf8_lossy(r.take(len)?).into_owned();
    let mut model = EncoderModel::new(classes, 0)?;
    if spec != model.layer_spec() {
        return Err(Error::Checkpoint(format!(
            "layer spec mismatch: file has {spec}"
        )));
    }
    r.fill(model.params_mut())?;
    r.fill(model.buffers_mut())?;
    r.finish()?;
    Ok(model)
}

pub fn save_encoder(model: &EncoderModel, path: &Path) -> Result<()> {
    fs::write(path, encode_encoder(model)).map_err(|e| Error::io(path, e))
}

pub fn load_encoder(path: &Path) -> Result<EncoderModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_encoder(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embednet::extract_embedding;
    use crate::imgcore::Image;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut m = EncoderModel::new(4, 3).unwrap();
        for b in m.buffers_mut() {
            for (i, x) in b.iter_mut().enumerate() {
                *x += 0.01 * i as f64;
            }
        }
        let back = decode_encoder(&encode_encoder(&m)).unwrap();
        assert_eq!(back, m);
        let img =
            Image::from_rgb_fn(40, 40, |x, y| [x as f64 / 40.0, y as f64 / 40.0, 0.3]).unwrap();
        assert_eq!(
            extract_embedding(&m, &img).unwrap(),
            extract_embedding(&back, &img).unwrap()
        );
    }

    #[test]
    fn truncation_and_wrong_magic_are_rejected() {
        let bytes = encode_encoder(&EncoderModel::new(3, 1).unwrap());
        assert!(decode_encoder(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[3] = b'X';
        assert!(matches!(decode_encoder(&bad), Err(Error::Checkpoint(_))));
    }
}
