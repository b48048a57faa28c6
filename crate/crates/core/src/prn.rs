//! Probabilistic routing network.
//!
//! `log2 n` stages; stage `s` repartitions every pair of buckets whose indices
//! differ only in bit `s - 1`. Live elements (real, tag set) move to the side
//! selected by bit `s - 1` of their destination. When more than `c` compete
//! for one side, a uniformly random choice of `c` wins and the rest are
//! retagged as spilled. Spilled, dummy and empty slots fill whatever space is
//! left. Nothing is ever dropped, and which buckets are touched depends on
//! `n` alone.

use alloc::vec::Vec;

use rand_core::RngCore;

use crate::oprim::{batcher_sort, cond_select, SortItem};
use crate::slot::{Slot, Table};
use crate::trace::{Region, TraceRecorder};
use crate::{Error, Result, Rng};

/// A slot on its way through the network, with its destination cached at
/// network entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RoutingSlot<const D: usize> {
    pub slot: Slot<D>,
    pub dest: u32,
}

impl<const D: usize> RoutingSlot<D> {
    pub fn new(slot: Slot<D>, dest: u32) -> Self {
        RoutingSlot { slot, dest }
    }
}

/// Per-call counters of a [`route`] run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RouteStats {
    pub repartitions: u64,
    /// Elements retagged during each stage.
    pub spills_per_stage: Vec<usize>,
}

impl RouteStats {
    pub fn total_spill(&self) -> usize {
        self.spills_per_stage.iter().sum()
    }
}

/// Reusable scratch for repartitions of one bucket size.
pub(crate) struct Repartitioner<const D: usize> {
    items: Vec<SortItem>,
    scratch: Vec<RoutingSlot<D>>,
}

impl<const D: usize> Repartitioner<D> {
    pub(crate) fn new(c: usize) -> Self {
        Repartitioner { items: Vec::with_capacity(2 * c), scratch: Vec::with_capacity(2 * c) }
    }

    /// Returns the number of elements spilled.
    pub(crate) fn run(
        &mut self,
        left: &mut [RoutingSlot<D>],
        right: &mut [RoutingSlot<D>],
        bit: u32,
        rng: &mut Rng,
    ) -> usize {
        let c = left.len();
        debug_assert_eq!(c, right.len());
        self.items.clear();
        self.scratch.clear();
        self.scratch.extend_from_slice(left);
        self.scratch.extend_from_slice(right);

        for (idx, rs) in self.scratch.iter().enumerate() {
            let live = rs.slot.is_live();
            let side = ((rs.dest >> bit) & 1) as u8;
            let class = cond_select(live, &(2 * side), &SortItem::MIDDLE);
            // Competitors are ordered at random; everything else keeps scan order.
            let random = rng.next_u64();
            let tiebreak = cond_select(class == SortItem::MIDDLE, &(idx as u64), &random);
            self.items.push(SortItem { class, tiebreak, payload_ref: idx as u32 });
        }
        batcher_sort(&mut self.items);

        let mut spilled = 0;
        for (pos, item) in self.items.iter().enumerate() {
            let mut out = self.scratch[item.payload_ref as usize];
            let in_left = pos < c;
            let spill = (in_left & (item.class == SortItem::RIGHT)) | (!in_left & (item.class == SortItem::LEFT));
            out.slot.spill_if(spill);
            spilled += spill as usize;
            if in_left {
                left[pos] = out;
            } else {
                right[pos - c] = out;
            }
        }
        spilled
    }
}

/// Repartitions two buckets on `bit` of the cached destinations. Returns the
/// number of elements spilled.
pub fn repartition<const D: usize>(
    left: &mut [RoutingSlot<D>],
    right: &mut [RoutingSlot<D>],
    bit: u32,
    rng: &mut Rng,
) -> Result<usize> {
    if left.len() != right.len() || left.is_empty() {
        return Err(Error::InvalidParameter("repartition needs two buckets of equal positive size"));
    }
    Ok(Repartitioner::new(left.len()).run(left, right, bit, rng))
}

/// Routes `table` in place. Each repartition shows up as one read-modify-write
/// of each bucket of the pair, in `region`.
pub fn route<const D: usize>(
    table: &mut Table<RoutingSlot<D>>,
    rng: &mut Rng,
    rec: &mut TraceRecorder,
    region: Region,
) -> Result<RouteStats> {
    route_observed(table, rng, rec, region, |_, _| {})
}

/// [`route`], calling `after_stage(s, table)` once stage `s` (1-based) is done.
pub fn route_observed<const D: usize>(
    table: &mut Table<RoutingSlot<D>>,
    rng: &mut Rng,
    rec: &mut TraceRecorder,
    region: Region,
    mut after_stage: impl FnMut(u32, &Table<RoutingSlot<D>>),
) -> Result<RouteStats> {
    let n = table.buckets();
    if !n.is_power_of_two() {
        return Err(Error::InvalidParameter("bucket count must be a power of two"));
    }
    let stages = n.trailing_zeros();
    let mut part = Repartitioner::new(table.bucket_size());
    let mut stats = RouteStats::default();
    for stage in 1..=stages {
        let bit = stage - 1;
        let stride = 1usize << bit;
        let mut spilled = 0;
        for lo in (0..n).filter(|b| b & stride == 0) {
            let hi = lo | stride;
            rec.rw(region, lo);
            rec.rw(region, hi);
            let (left, right) = table.pair_mut(lo, hi);
            spilled += part.run(left, right, bit, rng);
            stats.repartitions += 1;
        }
        stats.spills_per_stage.push(spilled);
        after_stage(stage, table);
    }
    Ok(stats)
}

/// Bucket pairs of stage `stage` (1-based), in execution order.
pub fn stage_pairs(n: usize, stage: u32) -> Vec<(usize, usize)> {
    let stride = 1usize << (stage - 1);
    (0..n).filter(|b| b & stride == 0).map(|lo| (lo, lo | stride)).collect()
}
