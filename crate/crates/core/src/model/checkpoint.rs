//! Binary parameter files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "JNTPARSE"
//! version    u32
//! header     u64 byte length, then UTF-8 JSON (config, vocab, labels, ...)
//! tensors    u32 count, then per tensor: u32 ndim, ndim x u64 dims, f64 data
//! ```
//!
//! Tensors follow the declaration order of [`ModelParams::tensors`].

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ModelConfig, ModelError, ModelParams, Vocab};
use crate::decoder::LabelSet;
use crate::transforms::TransformMode;
use crate::treebank::Preprocess;

pub const MAGIC: &[u8; 8] = b"JNTPARSE";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version {0} (expected {VERSION})")]
    Version(u32),
    #[error("truncated checkpoint: {0}")]
    Truncated(&'static str),
    #[error("bad checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("checkpoint header does not match its tensors: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Everything needed to parse with a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: Header,
    pub params: ModelParams<f64>,
}

/// The JSON block of a checkpoint; also written as the sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub labels: LabelSet,
    pub transform: TransformMode,
    pub preprocess: Preprocess,
    /// Update steps taken when the parameters were saved.
    pub step: u64,
}

impl Header {
    fn validate(&self) -> Result<(), CheckpointError> {
        self.config.validate()?;
        if self.vocab.len() != self.config.vocab_size {
            return Err(CheckpointError::Mismatch(format!(
                "vocabulary has {} words, config says {}",
                self.vocab.len(),
                self.config.vocab_size
            )));
        }
        if self.labels.len() != self.config.label_count {
            return Err(CheckpointError::Mismatch(format!(
                "label set has {} labels, config says {}",
                self.labels.len(),
                self.config.label_count
            )));
        }
        Ok(())
    }
}

/// Path of the JSON sidecar next to a checkpoint.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn to_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>, CheckpointError> {
    let header = serde_json::to_vec(&ckpt.header)?;
    let mut out = Vec::with_capacity(8 + 4 + 8 + header.len() + 8 * ckpt.params.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    let tensors = ckpt.params.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (_, shape, data) in tensors {
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() < n {
            return Err(CheckpointError::Truncated(what));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut r = Reader { buf: bytes };
    if r.take(MAGIC.len(), "magic").map_err(|_| CheckpointError::Magic)? != MAGIC {
        return Err(CheckpointError::Magic);
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let len = r.u64("header length")? as usize;
    let header: Header = serde_json::from_slice(r.take(len, "header")?)?;
    header.validate()?;

    let mut params = ModelParams::<f64>::zeros(&header.config);
    let expected: Vec<(String, Vec<usize>)> = params
        .tensors()
        .into_iter()
        .map(|(n, s, _)| (n, s.to_vec()))
        .collect();
    let count = r.u32("tensor count")? as usize;
    if count != expected.len() {
        return Err(CheckpointError::Mismatch(format!(
            "{count} tensors stored, config implies {}",
            expected.len()
        )));
    }
    for ((name, shape), slot) in expected.iter().zip(params.tensors_mut()) {
        let ndim = r.u32("tensor rank")? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(r.u64("tensor dims")? as usize);
        }
        if &dims != shape {
            return Err(CheckpointError::Mismatch(format!(
                "{name} stored as {dims:?}, config implies {shape:?}"
            )));
        }
        let raw = r.take(8 * slot.len(), "tensor data")?;
        for (v, chunk) in slot.iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    if !r.buf.is_empty() {
        return Err(CheckpointError::Mismatch(format!(
            "{} trailing bytes",
            r.buf.len()
        )));
    }
    Ok(Checkpoint { header, params })
}

/// Writes the binary file and its JSON sidecar.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    let io_err = |p: &Path| {
        let p = p.to_path_buf();
        move |source| CheckpointError::Io { path: p, source }
    };
    fs::write(path, to_bytes(ckpt)?).map_err(io_err(path))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&ckpt.header)?;
    fs::write(&side, json + "\n").map_err(io_err(&side))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dropout;

    fn sample() -> Checkpoint {
        let vocab = Vocab::build(["a", "b", "c"]);
        let labels = LabelSet::simple(&["S", "NP", "EDITED"]);
        let config = ModelConfig {
            vocab_size: vocab.len(),
            label_count: labels.len(),
            d_model: 6,
            d_ff: 4,
            heads: 3,
            layers: 1,
            label_hidden: 3,
            max_len: 5,
            dropout: Dropout::NONE,
            ..ModelConfig::desk()
        };
        let params = ModelParams::init(&config).unwrap();
        Checkpoint {
            header: Header {
                config,
                vocab,
                labels,
                transform: TransformMode::Baseline,
                preprocess: Preprocess::default(),
                step: 17,
            },
            params,
        }
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let c = sample();
        let bytes = to_bytes(&c).unwrap();
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn rejects_damaged_files() {
        let bytes = to_bytes(&sample()).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(from_bytes(&bad), Err(CheckpointError::Magic)));
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(from_bytes(&bad), Err(CheckpointError::Version(9))));
        assert!(matches!(
            from_bytes(&bytes[..bytes.len() - 3]),
            Err(CheckpointError::Truncated(_))
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(from_bytes(&long), Err(CheckpointError::Mismatch(_))));
    }

    #[test]
    fn header_must_match_tensors() {
        let mut c = sample();
        let good = to_bytes(&c).unwrap();
        c.header.config.label_hidden = 4;
        c.header.config.label_count = c.header.labels.len();
        // swap in a header that implies different shapes
        let header = serde_json::to_vec(&c.header).unwrap();
        let old_len = u64::from_le_bytes(good[12..20].try_into().unwrap()) as usize;
        let mut bad = good[..12].to_vec();
        bad.extend_from_slice(&(header.len() as u64).to_le_bytes());
        bad.extend_from_slice(&header);
        bad.extend_from_slice(&good[20 + old_len..]);
        assert!(matches!(from_bytes(&bad), Err(CheckpointError::Mismatch(_))));
    }

    #[test]
    fn file_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("best.bin");
        let c = sample();
        save_checkpoint(&path, &c).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), c);
        let side: Header =
            serde_json::from_str(&fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(side, c.header);
    }
}
