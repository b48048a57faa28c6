//! Access workloads.

use std::fs;
use std::path::{Path, PathBuf};

use pyramid_oram::Rng;
use rand::{Rng as _, RngCore};
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Workload {
    /// Uniform keys, reads and writes equally likely.
    Uniform,
    /// Keys in order; the first sweep writes, the next reads, and so on.
    Sequential,
    /// Key ranks drawn from a Zipf law with exponent `theta`.
    Zipf { theta: f64 },
    /// Replays a file of keys, one per line, optionally followed by `,w`
    /// (write) or `,r` (read; the default). `#` starts a comment.
    SparseIndexTrace { path: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Op {
    pub key: u32,
    /// Value to write, or `None` for a read.
    pub write: Option<u64>,
}

/// `count` operations over keys `0..keys`.
pub fn generate(w: &Workload, keys: usize, count: u64, seed: u64) -> Result<Vec<Op>> {
    if keys == 0 || keys > u32::MAX as usize {
        return Err(LabError::Invalid("key space must be non-empty and fit in 32 bits".into()));
    }
    let mut rng = Rng::new(seed);
    let count = count as usize;
    let value = |rng: &mut Rng, write: bool| write.then(|| rng.next_u64());
    Ok(match w {
        Workload::Uniform => (0..count)
            .map(|_| {
                let key = rng.random_range(0..keys) as u32;
                let write = rng.random_bool(0.5);
                Op { key, write: value(&mut rng, write) }
            })
            .collect(),
        Workload::Sequential => (0..count)
            .map(|i| Op { key: (i % keys) as u32, write: value(&mut rng, (i / keys).is_multiple_of(2)) })
            .collect(),
        Workload::Zipf { theta } => {
            let zipf = Zipf::new(keys as f64, *theta).map_err(|e| LabError::Invalid(format!("zipf: {e}")))?;
            (0..count)
                .map(|_| {
                    let key = zipf.sample(&mut rng) as u32 - 1;
                    let write = rng.random_bool(0.5);
                    Op { key, write: value(&mut rng, write) }
                })
                .collect()
        }
        Workload::SparseIndexTrace { path } => {
            let base = read_trace_file(path)?;
            if base.is_empty() && count > 0 {
                return Err(LabError::Invalid(format!("{}: no operations", path.display())));
            }
            if let Some(bad) = base.iter().find(|&&(k, _)| k as usize >= keys) {
                return Err(LabError::Invalid(format!("key {} outside 0..{keys}", bad.0)));
            }
            base.iter().cycle().take(count).map(|&(key, write)| Op { key, write: value(&mut rng, write) }).collect()
        }
    })
}

fn read_trace_file(path: &Path) -> Result<Vec<(u32, bool)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = || LabError::Invalid(format!("{}:{}: expected `key[,r|,w]`", path.display(), no + 1));
        let mut parts = line.split(',').map(str::trim);
        let key: u32 = parts.next().and_then(|k| k.parse().ok()).ok_or_else(bad)?;
        let write = match parts.next() {
            None | Some("r") => false,
            Some("w") => true,
            Some(_) => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        out.push((key, write));
    }
    Ok(out)
}
