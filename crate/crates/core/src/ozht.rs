//! Oblivious construction of a Zigzag hash table.
//!
//! 1. Every input slot is thrown along a path of fresh uniform buckets.
//! 2. For table `i = 1..k`: route table `i` through the network towards
//!    `h_i`. Then scan it; a spilled element is re-thrown into tables
//!    `i+1..k` (again on uniform buckets) and its old slot becomes a dummy,
//!    while every other slot pretends to do the same. Table `k` has no
//!    re-throw; anything still spilled there is a failure.
//!
//! The sequence of buckets touched depends on the input length and
//! `(n, k, c)` only; the indices are either fixed by the network or uniform.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::prn::{route, RoutingSlot};
use crate::slot::Slot;
use crate::trace::TraceRecorder;
use crate::zht::{PathSource, Zht};
use crate::{Error, HashFamily, Result, Rng};

/// Shape of a Zigzag hash table: `k` tables of `n` buckets of `c` slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ZhtParams {
    pub n: usize,
    pub k: usize,
    pub c: usize,
}

impl ZhtParams {
    pub fn validate(&self) -> Result<()> {
        if !self.n.is_power_of_two() {
            return Err(Error::InvalidParameter("n must be a power of two"));
        }
        if self.k == 0 || self.k > u8::MAX as usize {
            return Err(Error::InvalidParameter("k must be in 1..=255"));
        }
        if self.c == 0 {
            return Err(Error::InvalidParameter("c must be positive"));
        }
        if self.n > u32::MAX as usize {
            return Err(Error::InvalidParameter("n too large"));
        }
        Ok(())
    }

    pub fn slots(&self) -> usize {
        self.n * self.k * self.c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FailureReason {
    None,
    /// A spilled element found no free slot in the later tables.
    ThrowOverflow,
    /// Elements were still spilled after routing the last table.
    FinalPhaseSpill,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureReason::None => "none",
            FailureReason::ThrowOverflow => "throw overflow",
            FailureReason::FinalPhaseSpill => "spill in final phase",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BuildReport {
    pub success: bool,
    /// Real elements left spilled in table `i` after its routing phase.
    pub spills_after_phase: Vec<usize>,
    /// Real elements per table in the finished structure.
    pub occupancy_per_table: Vec<usize>,
    /// Real elements that reached table `j` without being placed before it,
    /// counting both the initial throw and re-throws.
    pub arrivals_per_table: Vec<usize>,
    pub failure_reason: FailureReason,
}

/// Exact number of trace events [`oblivious_build`] emits for `m_total`
/// input slots: `k` per input slot for the initial throw, then for each
/// phase `i` two per repartition of the network plus `k - i` per slot of the
/// routed table for the (real or pretend) re-throws.
pub fn build_access_count(m_total: u64, params: ZhtParams) -> u64 {
    let n = params.n as u64;
    let k = params.k as u64;
    let c = params.c as u64;
    let log_n = n.trailing_zeros() as u64;
    let routing = n * log_n; // (n / 2) log n repartitions, two buckets each
    let rethrows: u64 = (1..=k).map(|i| (k - i) * n * c).sum();
    k * m_total + k * routing + rethrows
}

/// Builds a Zigzag hash table holding the real elements of `elems`.
///
/// Non-real input slots are thrown as dummies. Build failure is reported in
/// the [`BuildReport`], not as an error; the trace is complete either way.
pub fn oblivious_build<const D: usize>(
    elems: &[Slot<D>],
    params: ZhtParams,
    level: u8,
    fam: &HashFamily,
    rng: &mut Rng,
    rec: &mut TraceRecorder,
) -> Result<(Zht<D>, BuildReport)> {
    params.validate()?;
    if elems.iter().filter(|s| s.is_real()).count() > params.n {
        return Err(Error::InvalidParameter("more real elements than the table capacity"));
    }
    let ZhtParams { n, k, .. } = params;
    let mut zht = Zht::new(params, level, fam)?;
    let mut failure = FailureReason::None;

    let thrown = zht.throw(elems, PathSource::Random, true, rng, rec);
    let mut arrivals = thrown.arrivals.clone();
    if thrown.failed() {
        failure = FailureReason::ThrowOverflow;
    }

    let mut spills_after_phase = vec![0usize; k];
    let mut path = vec![0usize; k];
    for i in 0..k {
        let region = zht.region(i);
        let dests: Vec<u32> = zht.tables()[i].cells().iter().map(|s| zht.bucket_of(i, s.key()) as u32).collect();
        let mut dest_iter = dests.into_iter();
        let mut routed = zht.tables()[i].map(|s| RoutingSlot::new(*s, dest_iter.next().unwrap_or(0)));
        route(&mut routed, rng, rec, region)?;

        let spilled = routed.cells().iter().filter(|rs| rs.slot.is_real() & !rs.slot.tag()).count();
        spills_after_phase[i] = spilled;

        if i + 1 < k {
            let later = &mut path[..k - i - 1];
            for rs in routed.cells_mut() {
                let spill = rs.slot.is_real() & !rs.slot.tag();
                for b in later.iter_mut() {
                    *b = rng.bucket_pow2(n);
                }
                let mut moving = rs.slot;
                moving.set_tag(true);
                let landed = zht.insert_from(&moving, i + 1, later, true, spill, rec);
                if spill {
                    let reached = landed.map_or(k, |t| t + 1);
                    for a in &mut arrivals[i + 1..reached] {
                        *a += 1;
                    }
                    if landed.is_none() {
                        failure = FailureReason::ThrowOverflow;
                    }
                }
                rs.slot.clear_to_dummy_if(spill);
            }
        } else if spilled > 0 && failure == FailureReason::None {
            failure = FailureReason::FinalPhaseSpill;
        }

        let out = &mut zht.tables_mut()[i];
        for (dst, rs) in out.cells_mut().iter_mut().zip(routed.cells()) {
            *dst = rs.slot;
        }
    }

    let occupancy_per_table = zht.occupancy_per_table();
    let report = BuildReport {
        success: failure == FailureReason::None,
        spills_after_phase,
        occupancy_per_table,
        arrivals_per_table: arrivals,
        failure_reason: failure,
    };
    Ok((zht, report))
}
