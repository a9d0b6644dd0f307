//! Binary generator checkpoints.
//!
//! Layout: an 8-byte magic, a little-endian u32 format version, a
//! length-prefixed JSON descriptor (architecture, latent spec, training
//! summary, config hash), the weight tensors as length-prefixed blocks of
//! little-endian f64, and a trailing SHA-256 digest of everything before it.
//! Writing the same generator twice yields byte-identical files.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use srlfi::nn::{GeneratorNet, LatentSpec, MLPArchitecture, MlpNet};
use srlfi::training::TrainReport;
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SRLFI-CK";
pub const CHECKPOINT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum CkError {
    #[error("checkpoint io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (expected {CHECKPOINT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("checkpoint file is truncated")]
    Truncated,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

/// Condensed training outcome stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs_run: usize,
    pub early_stopped: bool,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
}

impl TrainingSummary {
    pub fn from_report(report: &TrainReport) -> Self {
        TrainingSummary {
            epochs_run: report.epochs_run,
            early_stopped: report.early_stopped,
            best_epoch: report.best_epoch,
            best_val_loss: report.best_val_loss,
        }
    }
}

/// Everything needed to rebuild the generator and audit its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: String,
    pub method: String,
    pub config_sha256: String,
    pub arch: MLPArchitecture,
    pub latent: LatentSpec,
    pub data_dim: usize,
    pub training: TrainingSummary,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(2 * digest.len());
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Serialize `generator` plus provenance into the checkpoint byte layout.
pub fn checkpoint_bytes(
    generator: &GeneratorNet,
    model: &str,
    method: &str,
    config_sha256: &str,
    training: TrainingSummary,
) -> Result<Vec<u8>, CkError> {
    let meta = CheckpointMeta {
        model: model.to_string(),
        method: method.to_string(),
        config_sha256: config_sha256.to_string(),
        arch: generator.mlp.arch.clone(),
        latent: generator.latent.clone(),
        data_dim: generator.data_dim,
        training,
    };
    let descriptor = serde_json::to_vec(&meta)
        .map_err(|e| CkError::Corrupt(format!("descriptor serialization failed: {e}")))?;

    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(descriptor.len() as u32).to_le_bytes());
    buf.extend_from_slice(&descriptor);

    let tensors = generator.mlp.tensors();
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        buf.extend_from_slice(&(t.data().len() as u32).to_le_bytes());
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    Ok(buf)
}

pub fn save_checkpoint(
    path: &Path,
    generator: &GeneratorNet,
    model: &str,
    method: &str,
    config_sha256: &str,
    training: TrainingSummary,
) -> Result<(), CkError> {
    let bytes = checkpoint_bytes(generator, model, method, config_sha256, training)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CkError> {
        if self.pos + n > self.buf.len() {
            return Err(CkError::Truncated);
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, CkError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CkError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(GeneratorNet, CheckpointMeta), CkError> {
    let bytes = std::fs::read(path)?;
    checkpoint_from_bytes(&bytes)
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(GeneratorNet, CheckpointMeta), CkError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
        return Err(CkError::BadMagic);
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CkError::UnsupportedVersion(version));
    }

    if bytes.len() < r.pos + DIGEST_LEN {
        return Err(CkError::Truncated);
    }
    let (payload, stored_digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    // Parse the structure first so a short file reports Truncated; the
    // digest over the full payload is checked once the layout holds up.
    let mut r = Reader { buf: payload, pos: r.pos };

    let desc_len = r.u32()? as usize;
    let descriptor = r.take(desc_len)?;
    let meta: CheckpointMeta = serde_json::from_slice(descriptor)
        .map_err(|e| CkError::Corrupt(format!("bad descriptor: {e}")))?;

    let mut mlp = MlpNet::zeros(meta.arch.clone())
        .map_err(|e| CkError::Corrupt(format!("bad architecture: {e}")))?;
    let n_tensors = r.u32()? as usize;
    {
        let mut slots = mlp.tensors_mut();
        if n_tensors != slots.len() {
            return Err(CkError::Corrupt(format!(
                "architecture expects {} weight tensors, file has {n_tensors}",
                slots.len()
            )));
        }
        for slot in slots.iter_mut() {
            let len = r.u32()? as usize;
            if len != slot.data().len() {
                return Err(CkError::Corrupt(format!(
                    "weight block of {len} values does not fit a tensor of {}",
                    slot.data().len()
                )));
            }
            for v in slot.data_mut() {
                *v = r.f64()?;
            }
        }
    }
    if r.pos != payload.len() {
        return Err(CkError::Corrupt("trailing bytes after weight blocks".into()));
    }
    let digest = Sha256::digest(payload);
    if digest.as_slice() != stored_digest {
        return Err(CkError::Corrupt("content digest mismatch".into()));
    }

    let generator = GeneratorNet::new(mlp, meta.latent.clone(), meta.data_dim)
        .map_err(|e| CkError::Corrupt(format!("inconsistent generator: {e}")))?;
    Ok((generator, meta))
}
