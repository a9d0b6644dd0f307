//! Simulated training data: flat (theta, y) tables with a seeded,
//! per-row-reproducible generator and a versioned binary file format.

use super::{Model, SimError};
use crate::seeds::{derive2, STREAM_PRIOR, STREAM_SIM};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 8] = b"SRLFI-DS";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a dataset file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported dataset format version {0}")]
    UnsupportedVersion(u32),
    #[error("dataset file is truncated")]
    Truncated,
    #[error("corrupt dataset file: {0}")]
    Corrupt(String),
}

/// A table of n simulated (theta, y) pairs stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub model_name: String,
    pub seed: u64,
    pub n: usize,
    /// Parameter dimension.
    pub p: usize,
    /// Observation dimension.
    pub d: usize,
    /// n x p, row-major.
    pub theta: Vec<f64>,
    /// n x d, row-major.
    pub y: Vec<f64>,
}

impl Dataset {
    /// Simulates n pairs from the model's prior predictive. Row i derives
    /// its own prior and simulator seeds from (seed, i), so a dataset is a
    /// prefix of any longer dataset with the same seed.
    pub fn generate(model: &Model, n: usize, seed: u64) -> Result<Dataset, SimError> {
        let p = model.parameter_dim();
        let d = model.data_dim();
        let mut theta = Vec::with_capacity(n * p);
        let mut y = Vec::with_capacity(n * d);
        for i in 0..n {
            let mut prior_rng =
                ChaCha8Rng::seed_from_u64(derive2(seed, STREAM_PRIOR, i as u64));
            let t = model.sample_prior(&mut prior_rng);
            let mut sim_rng = ChaCha8Rng::seed_from_u64(derive2(seed, STREAM_SIM, i as u64));
            let obs = model.simulate(&t, &mut sim_rng)?;
            theta.extend_from_slice(&t);
            y.extend_from_slice(&obs);
        }
        Ok(Dataset { model_name: model.name().to_string(), seed, n, p, d, theta, y })
    }

    pub fn theta_row(&self, i: usize) -> &[f64] {
        &self.theta[i * self.p..(i + 1) * self.p]
    }

    pub fn y_row(&self, i: usize) -> &[f64] {
        &self.y[i * self.d..(i + 1) * self.d]
    }

    /// Borrowed (theta, y) row pairs in order, as the training loops expect.
    pub fn pairs(&self) -> Vec<(&[f64], &[f64])> {
        (0..self.n).map(|i| (self.theta_row(i), self.y_row(i))).collect()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.model_name.len() as u32).to_le_bytes())?;
        w.write_all(self.model_name.as_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&(self.p as u32).to_le_bytes())?;
        w.write_all(&(self.d as u32).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for v in self.theta.iter().chain(&self.y) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Dataset, DatasetError> {
        let mut magic = [0u8; 8];
        read_or_truncated(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(DatasetError::BadMagic);
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(DatasetError::UnsupportedVersion(version));
        }
        let name_len = read_u32(r)? as usize;
        if name_len > 1 << 16 {
            return Err(DatasetError::Corrupt(format!("model name length {name_len}")));
        }
        let mut name = vec![0u8; name_len];
        read_or_truncated(r, &mut name)?;
        let model_name = String::from_utf8(name)
            .map_err(|_| DatasetError::Corrupt("model name is not UTF-8".into()))?;
        let n = read_u64(r)? as usize;
        let p = read_u32(r)? as usize;
        let d = read_u32(r)? as usize;
        let seed = read_u64(r)?;
        let cells = n
            .checked_mul(p)
            .and_then(|tp| n.checked_mul(d).map(|td| (tp, td)))
            .ok_or_else(|| DatasetError::Corrupt("dimension overflow".into()))?;
        let theta = read_f64_block(r, cells.0)?;
        let y = read_f64_block(r, cells.1)?;
        let mut probe = [0u8; 1];
        match r.read(&mut probe)? {
            0 => Ok(Dataset { model_name, seed, n, p, d, theta, y }),
            _ => Err(DatasetError::Corrupt("trailing data after the y block".into())),
        }
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()
    }

    pub fn load(path: &Path) -> Result<Dataset, DatasetError> {
        Dataset::read_from(&mut BufReader::new(File::open(path)?))
    }

    /// CSV rendering with `theta_0..theta_{p-1}, y_0..y_{d-1}` columns.
    pub fn csv_string(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (0..self.p)
            .map(|j| format!("theta_{j}"))
            .chain((0..self.d).map(|j| format!("y_{j}")))
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.n {
            let row: Vec<String> = self
                .theta_row(i)
                .iter()
                .chain(self.y_row(i))
                .map(|v| format!("{v}"))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn read_or_truncated<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), DatasetError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            DatasetError::Truncated
        } else {
            DatasetError::Io(e)
        }
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, DatasetError> {
    let mut b = [0u8; 4];
    read_or_truncated(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, DatasetError> {
    let mut b = [0u8; 8];
    read_or_truncated(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64_block<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>, DatasetError> {
    let mut bytes = vec![0u8; count.checked_mul(8).ok_or_else(|| {
        DatasetError::Corrupt("block size overflow".into())
    })?];
    read_or_truncated(r, &mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
