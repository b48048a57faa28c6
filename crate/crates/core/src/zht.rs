//! Zigzag hash tables.
//!
//! `k` tables of `n` buckets with `c` slots each; table `j` has its own hash
//! function `h_j`. An element's zigzag path is `h_1(key), ..., h_k(key)` and it
//! lives in the first slot that was free along that path when it was
//! inserted. Every operation here touches exactly one bucket per table it
//! covers, whether or not it finds or places anything.

use alloc::vec;
use alloc::vec::Vec;

use crate::hash::KeyedHash;
use crate::oprim::{cond_select, Cmov};
use crate::ozht::ZhtParams;
use crate::slot::{Slot, SlotState, Table};
use crate::trace::{Region, TraceRecorder};
use crate::{Error, HashFamily, Result, Rng};

/// Where the buckets of a thrown element's path come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathSource {
    /// The table hash functions.
    Hash,
    /// Fresh uniform buckets, one per table.
    Random,
}

/// Outcome of a [`Zht::throw`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ThrowStats {
    /// Real elements that reached table `j` without having been placed in an
    /// earlier table.
    pub arrivals: Vec<usize>,
    /// Real elements that found no slot at all.
    pub unplaced: usize,
}

impl ThrowStats {
    /// Elements that arrived at table `j` but did not fit there.
    pub fn spills(&self) -> Vec<usize> {
        let k = self.arrivals.len();
        (0..k).map(|j| if j + 1 < k { self.arrivals[j + 1] } else { self.unplaced }).collect()
    }

    pub fn failed(&self) -> bool {
        self.unplaced > 0
    }
}

#[derive(Clone, Debug)]
pub struct Zht<const D: usize> {
    tables: Vec<Table<Slot<D>>>,
    hash: KeyedHash,
    params: ZhtParams,
    level: u8,
}

impl<const D: usize> Zht<D> {
    /// Empty tables; the hash functions are those of `level` under `fam`.
    pub fn new(params: ZhtParams, level: u8, fam: &HashFamily) -> Result<Self> {
        params.validate()?;
        let tables =
            (0..params.k).map(|_| Table::new(params.n, params.c, Slot::empty())).collect::<Result<Vec<_>>>()?;
        Ok(Zht { tables, hash: fam.keyed(level as u32), params, level })
    }

    pub fn params(&self) -> ZhtParams {
        self.params
    }

    pub fn level(&self) -> u8 {
        self.level
    }

    pub fn tables(&self) -> &[Table<Slot<D>>] {
        &self.tables
    }

    pub(crate) fn tables_mut(&mut self) -> &mut [Table<Slot<D>>] {
        &mut self.tables
    }

    pub fn region(&self, table: usize) -> Region {
        Region::Table { level: self.level, table: table as u8 }
    }

    /// `h_table(key)`.
    pub fn bucket_of(&self, table: usize, key: u32) -> usize {
        self.hash.bucket(table as u32, key, self.params.n)
    }

    /// The zigzag path of `key`.
    pub fn hash_path(&self, key: u32) -> Vec<usize> {
        (0..self.params.k).map(|j| self.bucket_of(j, key)).collect()
    }

    pub fn slots(&self) -> impl Iterator<Item = &Slot<D>> {
        self.tables.iter().flat_map(|t| t.cells().iter())
    }

    pub fn into_slots(self) -> impl Iterator<Item = Slot<D>> {
        self.tables.into_iter().flat_map(|t| t.into_cells())
    }

    pub fn slot_count(&self) -> usize {
        self.params.k * self.params.n * self.params.c
    }

    pub fn real_count(&self) -> usize {
        self.slots().filter(|s| s.is_real()).count()
    }

    pub fn occupancy_per_table(&self) -> Vec<usize> {
        self.tables.iter().map(|t| t.cells().iter().filter(|s| s.is_real()).count()).collect()
    }

    /// Places `e` in the first free slot along `path`, visiting every bucket
    /// of the path. Returns `false` (and changes nothing) if the whole path is
    /// full.
    pub fn zigzag_insert(
        &mut self,
        e: &Slot<D>,
        path: &[usize],
        allow_overwrite_dummy: bool,
        rec: &mut TraceRecorder,
    ) -> Result<bool> {
        if path.len() != self.params.k || path.iter().any(|&b| b >= self.params.n) {
            return Err(Error::InvalidParameter("path must name one in-range bucket per table"));
        }
        if !e.is_real() {
            return Err(Error::InvalidParameter("only real elements are inserted"));
        }
        Ok(self.insert_from(e, 0, path, allow_overwrite_dummy, true, rec).is_some())
    }

    /// Walks tables `first..k` along `path` (one bucket per table), writing
    /// `e` into the first available slot when `active`. Returns the table it
    /// landed in.
    pub(crate) fn insert_from(
        &mut self,
        e: &Slot<D>,
        first: usize,
        path: &[usize],
        allow_overwrite_dummy: bool,
        active: bool,
        rec: &mut TraceRecorder,
    ) -> Option<usize> {
        debug_assert_eq!(path.len(), self.params.k - first);
        let mut placed = !active;
        let mut landed = usize::MAX;
        for (offset, &b) in path.iter().enumerate() {
            let j = first + offset;
            rec.rw(Region::Table { level: self.level, table: j as u8 }, b);
            for slot in self.tables[j].bucket_mut(b) {
                let free =
                    (slot.state() == SlotState::Empty) | (allow_overwrite_dummy & (slot.state() == SlotState::Dummy));
                let take = free & !placed;
                slot.store_if(e, take);
                landed.cmov(&j, take);
                placed |= take;
            }
        }
        (active & (landed != usize::MAX)).then_some(landed)
    }

    /// Inserts every real element of `elems` along its path; every other
    /// input performs a random-bucket access per table instead. Exactly `k`
    /// bucket accesses per input.
    pub fn throw(
        &mut self,
        elems: &[Slot<D>],
        source: PathSource,
        allow_overwrite_dummy: bool,
        rng: &mut Rng,
        rec: &mut TraceRecorder,
    ) -> ThrowStats {
        let k = self.params.k;
        let n = self.params.n;
        let mut stats = ThrowStats { arrivals: vec![0; k], unplaced: 0 };
        let mut path = vec![0usize; k];
        for e in elems {
            let real = e.is_real();
            let use_hash = real & (source == PathSource::Hash);
            for (j, b) in path.iter_mut().enumerate() {
                let random = rng.bucket_pow2(n);
                let hashed = if source == PathSource::Hash { self.bucket_of(j, e.key()) } else { 0 };
                *b = cond_select(use_hash, &hashed, &random);
            }
            let mut pending = *e;
            pending.set_tag(true);
            let landed = self.insert_from(&pending, 0, &path, allow_overwrite_dummy, real, rec);
            if real {
                let reached = landed.map_or(k, |t| t + 1);
                for a in &mut stats.arrivals[..reached] {
                    *a += 1;
                }
                stats.unplaced += landed.is_none() as usize;
            }
        }
        stats
    }

    /// Oblivious lookup: reads and rewrites `h_j(key)` in every table. With
    /// `remove`, a match is replaced by a dummy in place.
    pub fn search(&mut self, key: u32, remove: bool, rec: &mut TraceRecorder) -> Option<Slot<D>> {
        let mut found = false;
        let mut hit = Slot::empty();
        for j in 0..self.params.k {
            let b = self.bucket_of(j, key);
            rec.rw(Region::Table { level: self.level, table: j as u8 }, b);
            for slot in self.tables[j].bucket_mut(b) {
                let m = slot.holds(key) & slot.is_real() & !found;
                hit.cmov(slot, m);
                found |= m;
                slot.clear_to_dummy_if(m & remove);
            }
        }
        found.then_some(hit)
    }

    /// One random bucket per table, read and rewritten unchanged.
    pub fn dummy_search(&mut self, rng: &mut Rng, rec: &mut TraceRecorder) {
        for j in 0..self.params.k {
            let b = rng.bucket_pow2(self.params.n);
            rec.rw(Region::Table { level: self.level, table: j as u8 }, b);
        }
    }

    /// Real search when `real`, dummy search otherwise; draws `k` random
    /// buckets either way.
    pub(crate) fn probe(&mut self, key: u32, real: bool, rng: &mut Rng, rec: &mut TraceRecorder) -> Option<Slot<D>> {
        let mut found = false;
        let mut hit = Slot::empty();
        for j in 0..self.params.k {
            let random = rng.bucket_pow2(self.params.n);
            let b = cond_select(real, &self.bucket_of(j, key), &random);
            rec.rw(Region::Table { level: self.level, table: j as u8 }, b);
            for slot in self.tables[j].bucket_mut(b) {
                let m = slot.holds(key) & slot.is_real() & real & !found;
                hit.cmov(slot, m);
                found |= m;
                slot.clear_to_dummy_if(m);
            }
        }
        found.then_some(hit)
    }

    /// Every real element sits in bucket `h_j(key)` of its table `j`, and no
    /// key appears twice.
    pub fn check_placement(&self) -> bool {
        let mut keys = Vec::new();
        for (j, t) in self.tables.iter().enumerate() {
            for (b, bucket) in t.iter_buckets().enumerate() {
                for s in bucket.iter().filter(|s| s.is_real()) {
                    if self.bucket_of(j, s.key()) != b {
                        return false;
                    }
                    keys.push(s.key());
                }
            }
        }
        let total = keys.len();
        keys.sort_unstable();
        keys.dedup();
        keys.len() == total
    }
}
