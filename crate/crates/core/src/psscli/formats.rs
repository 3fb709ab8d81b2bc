//! Gradient dumps (`GRDM`) and checkpoints (`CKPT`).
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! GRDM  "GRDM" | u16 version | u32 rows | u32 cols | f64 × rows·cols | u64 byte-sum
//! CKPT  "CKPT" | u16 version | u32 len | config text
//!       then per parameter: u32 len | name | u32 rows | u32 cols | f64 × rows·cols
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::gradnet::ToyModel;
use crate::matcore::Matrix;

use super::config::ExperimentConfig;
use super::write_atomic;

pub const GRDM_MAGIC: &[u8; 4] = b"GRDM";
pub const CKPT_MAGIC: &[u8; 4] = b"CKPT";
pub const FORMAT_VERSION: u16 = 1;

const GRDM_HEADER: usize = 4 + 2 + 4 + 4;

fn byte_sum(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0u64, |acc, b| acc.wrapping_add(*b as u64))
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn dim_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format(format!("{what} {n} does not fit in u32")))
}

pub fn encode_grdm(m: &Matrix) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(GRDM_HEADER + 8 * m.as_slice().len() + 8);
    out.extend_from_slice(GRDM_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&dim_u32(m.rows(), "rows")?.to_le_bytes());
    out.extend_from_slice(&dim_u32(m.cols(), "cols")?.to_le_bytes());
    put_f64s(&mut out, m.as_slice());
    let sum = byte_sum(&out[GRDM_HEADER..]);
    out.extend_from_slice(&sum.to_le_bytes());
    Ok(out)
}

pub fn decode_grdm(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < GRDM_HEADER || &bytes[..4] != GRDM_MAGIC {
        return Err(Error::Format("bad magic: not a GRDM file".into()));
    }
    let mut r = Reader::new(&bytes[4..]);
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported GRDM version {version}")));
    }
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let n = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Format("payload length mismatch".into()))?;
    if bytes.len() != GRDM_HEADER + n + 8 {
        return Err(Error::Format(format!(
            "payload length mismatch: header declares {rows}x{cols}, file has {} payload bytes",
            bytes.len().saturating_sub(GRDM_HEADER + 8)
        )));
    }
    let payload = &bytes[GRDM_HEADER..GRDM_HEADER + n];
    let stored = u64::from_le_bytes(bytes[GRDM_HEADER + n..].try_into().expect("8 bytes"));
    if stored != byte_sum(payload) {
        return Err(Error::Format("checksum mismatch".into()));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Matrix::new(rows, cols, values).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_grdm(path: &Path, m: &Matrix) -> Result<()> {
    write_atomic(path, &encode_grdm(m)?)
}

pub fn read_grdm(path: &Path) -> Result<Matrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    decode_grdm(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| Error::Format("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// A model together with the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ExperimentConfig,
    pub model: ToyModel,
}

pub fn encode_ckpt(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CKPT_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let text = ckpt.config.to_canonical_text();
    out.extend_from_slice(&dim_u32(text.len(), "config length")?.to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    for (name, m) in ckpt.model.names().iter().zip(ckpt.model.params()) {
        out.extend_from_slice(&dim_u32(name.len(), "name length")?.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&dim_u32(m.rows(), "rows")?.to_le_bytes());
        out.extend_from_slice(&dim_u32(m.cols(), "cols")?.to_le_bytes());
        put_f64s(&mut out, m.as_slice());
    }
    Ok(out)
}

pub fn decode_ckpt(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 6 || &bytes[..4] != CKPT_MAGIC {
        return Err(Error::Format("bad magic: not a CKPT file".into()));
    }
    let mut r = Reader::new(&bytes[4..]);
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported CKPT version {version}")));
    }
    let len = r.u32()? as usize;
    let text = std::str::from_utf8(r.take(len)?).map_err(|_| Error::Format("config block is not UTF-8".into()))?;
    let config = ExperimentConfig::parse(text)?;
    let mut named = Vec::new();
    while !r.done() {
        let n = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(n)?)
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?
            .to_string();
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let count = rows
            .checked_mul(cols)
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| Error::Format(format!("parameter {name:?} is too large")))?;
        let values = r
            .take(count)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        named.push((name, Matrix::new(rows, cols, values).map_err(|e| Error::Format(e.to_string()))?));
    }
    let model = ToyModel::from_params(config.train.model.clone(), named)?;
    Ok(Checkpoint { config, model })
}

pub fn write_ckpt(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path, &encode_ckpt(ckpt)?)
}

pub fn read_ckpt(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    decode_ckpt(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grdm_layout() {
        let m = Matrix::new(1, 1, vec![1.0]).unwrap();
        let b = encode_grdm(&m).unwrap();
        assert_eq!(&b[..4], b"GRDM");
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(&b[6..10], &[1, 0, 0, 0]);
        assert_eq!(&b[14..22], &1.0f64.to_le_bytes());
        // 1.0 = 0x3ff0_0000_0000_0000, bytes 0xf0 + 0x3f.
        assert_eq!(u64::from_le_bytes(b[22..30].try_into().unwrap()), 0xf0 + 0x3f);
        assert_eq!(decode_grdm(&b).unwrap(), m);
    }

    #[test]
    fn grdm_errors() {
        let m = Matrix::new(2, 2, vec![1.0, -2.0, 3.5, 0.0]).unwrap();
        let b = encode_grdm(&m).unwrap();
        let err = decode_grdm(&b[..b.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("payload length mismatch"));
        let mut bad = b.clone();
        bad[20] ^= 1;
        assert!(decode_grdm(&bad).unwrap_err().to_string().contains("checksum mismatch"));
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(decode_grdm(&bad).unwrap_err().to_string().contains("magic"));
        let mut bad = b;
        bad[4] = 2;
        assert!(decode_grdm(&bad).unwrap_err().to_string().contains("version"));
    }
}
