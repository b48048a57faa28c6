//! End-to-end runs of the ORAM shared by the CLI and the acceptance suite.

use std::collections::HashMap;
use std::time::Instant;

use pyramid_oram::trace::shape_bytes;
use pyramid_oram::{PyramidConfig, PyramidOram, Region, Request, TraceRecorder, DEFAULT_PAYLOAD};
use serde::Serialize;

use crate::error::Result;
use crate::report::BenchRow;
use crate::stats::{chi_square_uniform, ChiSquare};
use crate::workload::Op;

pub type Payload = [u8; DEFAULT_PAYLOAD];

/// The payload a workload value is stored as.
pub fn payload(v: u64) -> Payload {
    let mut p = [0u8; DEFAULT_PAYLOAD];
    p[..8].copy_from_slice(&v.to_le_bytes());
    p
}

fn request(op: &Op) -> Request<DEFAULT_PAYLOAD> {
    op.write.map_or(Request::Read, |v| Request::Write(payload(v)))
}

/// One row per access. With `deterministic`, wall times are written as 0 so
/// equal inputs give byte-identical output.
pub fn run_bench(cfg: &PyramidConfig, ops: &[Op], deterministic: bool) -> Result<Vec<BenchRow>> {
    let mut oram = PyramidOram::<DEFAULT_PAYLOAD>::new(cfg.clone())?;
    let mut rec = TraceRecorder::counting();
    let mut rows = Vec::with_capacity(ops.len());
    for op in ops {
        let start = Instant::now();
        let (_, r) = oram.access_recorded(op.key, request(op), &mut rec)?;
        let wall = if deterministic { 0 } else { start.elapsed().as_nanos() as u64 };
        rows.push(BenchRow::new(&r, wall));
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VerifyOutcome {
    /// Workload operations plus the final read-back of every written key.
    pub ops_checked: u64,
    pub first_divergence: Option<u64>,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.first_divergence.is_none()
    }
}

/// Runs `ops` against the ORAM and a plain map side by side, then reads
/// every key back. Stops at the first differing result. `fault_at` flips a
/// stored bit just before that operation.
pub fn verify(cfg: &PyramidConfig, ops: &[Op], fault_at: Option<u64>) -> Result<VerifyOutcome> {
    let mut oram = PyramidOram::<DEFAULT_PAYLOAD>::new(cfg.clone())?;
    let mut reference: HashMap<u32, Payload> = HashMap::new();
    let mut rec = TraceRecorder::counting();
    let mut index = 0u64;
    let mut step = |oram: &mut PyramidOram<DEFAULT_PAYLOAD>, op: &Op| -> Result<bool> {
        if fault_at == Some(index) {
            oram.inject_fault(0);
        }
        let got = oram.access(op.key, request(op), &mut rec)?;
        let want = match op.write {
            Some(v) => reference.insert(op.key, payload(v)),
            None => reference.get(&op.key).copied(),
        };
        index += 1;
        Ok(got == want)
    };
    for op in ops {
        if !step(&mut oram, op)? {
            return Ok(VerifyOutcome { ops_checked: index, first_divergence: Some(index - 1) });
        }
    }
    let mut keys: Vec<u32> = oram.contents().iter().map(|e| e.0).collect();
    keys.sort_unstable();
    for key in keys {
        if !step(&mut oram, &Op { key, write: None })? {
            return Ok(VerifyOutcome { ops_checked: index, first_divergence: Some(index - 1) });
        }
    }
    Ok(VerifyOutcome { ops_checked: index, first_divergence: None })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ShapeComparison {
    pub accesses: u64,
    pub first_difference: Option<u64>,
}

/// Runs two workloads on two instances of `cfg` in lockstep and compares
/// the index-erased trace of every access, rebuilds included.
pub fn compare_shapes(cfg: &PyramidConfig, a: &[Op], b: &[Op]) -> Result<ShapeComparison> {
    let mut x = PyramidOram::<DEFAULT_PAYLOAD>::new(cfg.clone())?;
    let mut y = PyramidOram::<DEFAULT_PAYLOAD>::new(cfg.clone())?;
    let mut ra = TraceRecorder::recording();
    let mut rb = TraceRecorder::recording();
    let mut accesses = 0;
    for (i, (oa, ob)) in a.iter().zip(b).enumerate() {
        x.access(oa.key, request(oa), &mut ra)?;
        y.access(ob.key, request(ob), &mut rb)?;
        accesses += 1;
        if shape_bytes(ra.events()) != shape_bytes(rb.events()) {
            return Ok(ShapeComparison { accesses, first_difference: Some(i as u64) });
        }
        ra.clear();
        rb.clear();
    }
    Ok(ShapeComparison { accesses, first_difference: None })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelUniformity {
    pub level: u8,
    pub events: u64,
    pub chi: Option<ChiSquare>,
}

/// Bucket indices of online (search) events, pooled per level over its
/// tables, tested for uniformity. Levels with too few events get no test.
pub fn index_uniformity(cfg: &PyramidConfig, ops: &[Op], significance: f64) -> Result<Vec<LevelUniformity>> {
    let levels = cfg.levels();
    let mut counts: Vec<Vec<u64>> = levels.iter().map(|l| vec![0; l.n * l.k]).collect();
    let mut oram = PyramidOram::<DEFAULT_PAYLOAD>::new(cfg.clone())?;
    let mut rec = TraceRecorder::recording();
    for op in ops {
        let (_, r) = oram.access_recorded(op.key, request(op), &mut rec)?;
        for e in &rec.events()[..r.online as usize] {
            if let Region::Table { level, table } = e.region {
                let l = &levels[level as usize - 1];
                counts[level as usize - 1][table as usize * l.n + e.index as usize] += 1;
            }
        }
        rec.clear();
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let events = c.iter().sum();
            let chi = (events >= 5 * c.len() as u64).then(|| chi_square_uniform(&c, significance)).transpose()?;
            Ok(LevelUniformity { level: i as u8 + 1, events, chi })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{generate, Workload};

    fn cfg() -> PyramidConfig {
        PyramidConfig::new(256, 8, 1)
    }

    #[test]
    fn bench_rows_follow_schedule() {
        let ops = generate(&Workload::Uniform, 256, 64, 2).unwrap();
        let rows = run_bench(&cfg(), &ops, true).unwrap();
        assert_eq!(rows.len(), 64);
        for r in &rows {
            assert_eq!(r.wall_ns, 0);
            assert_eq!(r.online_buckets, cfg().online_cost(r.op_index));
            let expect = cfg().rebuild_after(r.op_index + 1).map_or(-1, |i| i as i32);
            assert_eq!(r.rebuilt_level, expect);
        }
    }

    #[test]
    fn verify_passes_and_catches_faults() {
        let ops = generate(&Workload::Uniform, 256, 500, 3).unwrap();
        assert!(verify(&cfg(), &ops, None).unwrap().passed());
        let bad = verify(&cfg(), &ops, Some(200)).unwrap();
        assert!(bad.first_divergence.unwrap() >= 200);
        assert!(verify(&cfg(), &[], None).unwrap().passed());
    }

    #[test]
    fn shapes_agree_across_workloads() {
        let a = generate(&Workload::Uniform, 256, 200, 4).unwrap();
        let b = generate(&Workload::Sequential, 256, 200, 5).unwrap();
        let cmp = compare_shapes(&cfg(), &a, &b).unwrap();
        assert_eq!(cmp, ShapeComparison { accesses: 200, first_difference: None });
    }

    #[test]
    fn uniformity_counts_only_search_events() {
        let ops = generate(&Workload::Uniform, 256, 300, 6).unwrap();
        let u = index_uniformity(&cfg(), &ops, 0.001).unwrap();
        let total: u64 = u.iter().map(|l| l.events).sum();
        let expected: u64 = (0..300).map(|t| cfg().online_cost(t) - 8).sum();
        assert_eq!(total, expected);
    }
}
