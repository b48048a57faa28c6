//! The adversary's view: bucket-granular access traces.
//!
//! Every oblivious routine in this crate reports each bucket it touches (each
//! slot, for L0) to a [`TraceRecorder`]. The *shape* of a trace is the same
//! sequence with indices erased; for every routine the shape is a function of
//! public parameters only, and the simulators below produce traces from
//! those parameters alone.

use alloc::vec::Vec;

use rand_core::RngCore;

use crate::ozht::{oblivious_build, ZhtParams};
use crate::slot::Slot;
use crate::zht::{PathSource, Zht};
use crate::{HashFamily, Result, Rng};

/// Memory region of an event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    /// The append log, addressed by slot.
    L0,
    /// Table `table` (0-based) of level `level` (1-based), addressed by bucket.
    Table { level: u8, table: u8 },
}

impl Region {
    /// Decimal-friendly code: 0 for L0, `level << 8 | table` otherwise.
    pub fn code(self) -> u32 {
        match self {
            Region::L0 => 0,
            Region::Table { level, table } => (level as u32) << 8 | table as u32,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Region::L0),
            c if c >> 8 != 0 && c >> 16 == 0 => Some(Region::Table { level: (c >> 8) as u8, table: (c & 0xff) as u8 }),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum TraceOp {
    Read = 0,
    Write = 1,
    ReadWrite = 2,
}

impl TraceOp {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(TraceOp::Read),
            1 => Some(TraceOp::Write),
            2 => Some(TraceOp::ReadWrite),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TraceEvent {
    pub region: Region,
    pub index: u32,
    pub op: TraceOp,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Append-only event log.
///
/// When disabled the recorder still counts events and maintains a running
/// digest of the shape, so very long runs can be compared without storing
/// them.
#[derive(Clone, Debug)]
pub struct TraceRecorder {
    events: Vec<TraceEvent>,
    enabled: bool,
    count: u64,
    shape_digest: u64,
}

impl Default for TraceRecorder {
    fn default() -> Self {
        Self::counting()
    }
}

impl TraceRecorder {
    /// Stores every event.
    pub fn recording() -> Self {
        TraceRecorder { events: Vec::new(), enabled: true, count: 0, shape_digest: FNV_OFFSET }
    }

    /// Counts events and digests the shape; stores nothing.
    pub fn counting() -> Self {
        TraceRecorder { events: Vec::new(), enabled: false, count: 0, shape_digest: FNV_OFFSET }
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn set_enabled(&mut self, enabled: bool) {
        self.enabled = enabled;
    }

    #[inline]
    pub fn record(&mut self, region: Region, index: usize, op: TraceOp) {
        self.count += 1;
        let mut h = self.shape_digest;
        for b in region.code().to_le_bytes().into_iter().chain([op.code()]) {
            h = (h ^ b as u64).wrapping_mul(FNV_PRIME);
        }
        self.shape_digest = h;
        if self.enabled {
            self.events.push(TraceEvent { region, index: index as u32, op });
        }
    }

    #[inline]
    pub(crate) fn rw(&mut self, region: Region, index: usize) {
        self.record(region, index, TraceOp::ReadWrite);
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<TraceEvent> {
        core::mem::take(&mut self.events)
    }

    /// Events seen, stored or not.
    pub fn count(&self) -> u64 {
        self.count
    }

    /// FNV-1a over the `(region, op)` sequence of every event seen.
    pub fn shape_digest(&self) -> u64 {
        self.shape_digest
    }

    pub fn shape(&self) -> Vec<(Region, TraceOp)> {
        shape(&self.events)
    }

    pub fn clear(&mut self) {
        self.events.clear();
        self.count = 0;
        self.shape_digest = FNV_OFFSET;
    }
}

/// Erases indices.
pub fn shape(events: &[TraceEvent]) -> Vec<(Region, TraceOp)> {
    events.iter().map(|e| (e.region, e.op)).collect()
}

/// Shape as bytes: little-endian region code then op code, per event.
pub fn shape_bytes(events: &[TraceEvent]) -> Vec<u8> {
    let mut out = Vec::with_capacity(events.len() * 5);
    for e in events {
        out.extend_from_slice(&e.region.code().to_le_bytes());
        out.push(e.op.code());
    }
    out
}

/// Trace of an oblivious build over `elems` slots, all of them dummies.
pub fn sim_build(elems: usize, params: ZhtParams, level: u8, rng: &mut Rng) -> Result<TraceRecorder> {
    let mut rec = TraceRecorder::recording();
    let input: Vec<Slot<0>> = alloc::vec![Slot::dummy(); elems];
    let fam = HashFamily::new(rng.next_u64());
    oblivious_build(&input, params, level, &fam, rng, &mut rec)?;
    Ok(rec)
}

/// Trace of one search: a random bucket in every table.
pub fn sim_search(params: ZhtParams, level: u8, rng: &mut Rng) -> Result<TraceRecorder> {
    let mut rec = TraceRecorder::recording();
    let mut z: Zht<0> = Zht::new(params, level, &HashFamily::new(0))?;
    z.dummy_search(rng, &mut rec);
    Ok(rec)
}

/// Trace of throwing `elems` elements: a random bucket in every table per
/// element.
pub fn sim_throw(elems: usize, params: ZhtParams, level: u8, rng: &mut Rng) -> Result<TraceRecorder> {
    let mut rec = TraceRecorder::recording();
    let mut z: Zht<0> = Zht::new(params, level, &HashFamily::new(0))?;
    let input: Vec<Slot<0>> = alloc::vec![Slot::dummy(); elems];
    z.throw(&input, PathSource::Random, false, rng, &mut rec);
    Ok(rec)
}
