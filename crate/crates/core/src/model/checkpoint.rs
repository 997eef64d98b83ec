//! Versioned little-endian binary checkpoint.
//!
//! ```text
//! b"NCFCKPT\0"  u32 version
//! u64 seed      str config_hash   str config_text
//! u32 n_layers  { u32 in, u32 out, f64[in*out] weight, f64[out] bias } * n_layers
//! u32 input_dim
//! u32 P, u32 K, f64[P*K] weight, f64[K] bias
//! ```
//! `str` is a `u32` byte length followed by UTF-8. Floats are stored as raw
//! IEEE-754 bits, so a write-then-read is bit-exact.

use std::fs;
use std::path::Path;

use super::{DenseLayer, LinearClassifier, MlpExtractor};
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

const MAGIC: &[u8; 8] = b"NCFCKPT\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub config_hash: String,
    /// Full experiment config, so the datasets can be rebuilt later.
    pub config_text: String,
    pub extractor: MlpExtractor,
    pub classifier: LinearClassifier,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        out.extend_from_slice(&self.seed.to_le_bytes());
        put_str(&mut out, &self.config_hash);
        put_str(&mut out, &self.config_text);
        put_u32(&mut out, self.extractor.layers().len() as u32);
        for layer in self.extractor.layers() {
            put_u32(&mut out, layer.in_dim() as u32);
            put_u32(&mut out, layer.out_dim() as u32);
            put_f64s(&mut out, layer.weight.data());
            put_f64s(&mut out, layer.bias.data());
        }
        put_u32(&mut out, self.extractor.input_dim() as u32);
        put_u32(&mut out, self.classifier.feature_dim() as u32);
        put_u32(&mut out, self.classifier.num_classes() as u32);
        put_f64s(&mut out, self.classifier.weight.data());
        put_f64s(&mut out, self.classifier.bias.data());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let seed = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        let config_hash = r.string()?;
        let config_text = r.string()?;
        let n_layers = r.u32()? as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let (fan_in, fan_out) = (r.u32()? as usize, r.u32()? as usize);
            let weight = r.matrix(fan_in, fan_out)?;
            let bias = r.matrix(1, fan_out)?;
            layers.push(DenseLayer { weight, bias });
        }
        let input_dim = r.u32()? as usize;
        let extractor = MlpExtractor::from_layers(input_dim, layers)?;
        let (p, k) = (r.u32()? as usize, r.u32()? as usize);
        let weight = r.matrix(p, k)?;
        let bias = r.matrix(1, k)?;
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        if p != extractor.output_dim() {
            return Err(Error::Format(
                "classifier does not match extractor width".into(),
            ));
        }
        Ok(Self {
            seed,
            config_hash,
            config_text,
            extractor,
            classifier: LinearClassifier { weight, bias },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_bits().to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Format("checkpoint string is not UTF-8".into()))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DenseMatrix> {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Format("checkpoint dimensions overflow".into()))?;
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Format("overflow".into()))?,
        )?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        DenseMatrix::from_vec(rows, cols, data)
            .map_err(|e| Error::Format(format!("checkpoint: {e}")))
    }
}
