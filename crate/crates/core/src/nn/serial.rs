//! Little-endian helpers shared by the model checkpoint formats.

use crate::error::{Error, Result};

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

/// u64 count followed by the concatenated values.
pub(crate) fn put_group(out: &mut Vec<u8>, group: &[&Vec<f64>]) {
    let n: usize = group.iter().map(|v| v.len()).sum();
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for v in group.iter().flat_map(|v| v.iter()) {
        put_f64(out, *v);
    }
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Checkpoint(format!("truncated at byte {} (needed {n} more)", self.pos))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Reads a group written by [`put_group`] into tensors of known sizes.
    pub(crate) fn fill(&mut self, dst: Vec<&mut Vec<f64>>) -> Result<()> {
        let want: usize = dst.iter().map(|v| v.len()).sum();
        let n = self.u64()? as usize;
        if n != want {
            return Err(Error::Checkpoint(format!(
                "expected {want} values, file has {n}"
            )));
        }
        for v in dst {
            for x in v.iter_mut() {
                *x = self.f64()?;
                if !x.is_finite() {
                    return Err(Error::Checkpoint("non-finite parameter".into()));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}
