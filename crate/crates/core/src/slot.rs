//! Storage cells and fixed-shape tables of buckets.

use alloc::vec;
use alloc::vec::Vec;

use crate::oprim::{ct_eq_u32, Cmov};
use crate::{Error, Result};

/// Payload size of a slot when none is given: a 64-byte cache line minus the
/// 4-byte key and 4 bytes of state.
pub const DEFAULT_PAYLOAD: usize = 56;

/// Key stored in empty and dummy slots.
pub const EMPTY_KEY: u32 = u32::MAX;

/// Largest key a real element may carry.
pub const MAX_KEY: u32 = u32::MAX - 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum SlotState {
    Empty = 0,
    Dummy = 1,
    Real = 2,
}

impl SlotState {
    fn from_u8(v: u8) -> Self {
        match v {
            0 => SlotState::Empty,
            1 => SlotState::Dummy,
            _ => SlotState::Real,
        }
    }
}

/// One storage cell.
///
/// `tag` is the routing flag: `true` while a real element is pending or
/// correctly routed, `false` once it has been spilled. Empty and dummy slots
/// always carry [`EMPTY_KEY`] and `tag == false`.
///
/// A *vacant* real slot records that its key was looked up and found absent.
/// It moves through the structure like any element.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot<const D: usize = DEFAULT_PAYLOAD> {
    state: SlotState,
    tag: bool,
    vacant: bool,
    key: u32,
    payload: [u8; D],
}

impl<const D: usize> Default for Slot<D> {
    fn default() -> Self {
        Self::empty()
    }
}

impl<const D: usize> Slot<D> {
    pub const fn empty() -> Self {
        Slot { state: SlotState::Empty, tag: false, vacant: false, key: EMPTY_KEY, payload: [0; D] }
    }

    pub const fn dummy() -> Self {
        Slot { state: SlotState::Dummy, tag: false, vacant: false, key: EMPTY_KEY, payload: [0; D] }
    }

    /// A real element, tagged as pending.
    pub fn real(key: u32, payload: [u8; D]) -> Result<Self> {
        if key > MAX_KEY {
            return Err(Error::InvalidParameter("key is the reserved sentinel"));
        }
        Ok(Slot { state: SlotState::Real, tag: true, vacant: false, key, payload })
    }

    /// A real slot marking `key` as absent.
    pub fn vacant(key: u32) -> Result<Self> {
        let mut s = Self::real(key, [0; D])?;
        s.vacant = true;
        Ok(s)
    }

    pub fn state(&self) -> SlotState {
        self.state
    }

    pub fn key(&self) -> u32 {
        self.key
    }

    pub fn tag(&self) -> bool {
        self.tag
    }

    pub fn payload(&self) -> &[u8; D] {
        &self.payload
    }

    pub fn payload_mut(&mut self) -> &mut [u8; D] {
        &mut self.payload
    }

    pub fn is_vacant(&self) -> bool {
        self.vacant
    }

    pub fn is_real(&self) -> bool {
        self.state == SlotState::Real
    }

    /// Real and not spilled.
    pub fn is_live(&self) -> bool {
        self.is_real() & self.tag
    }

    /// Branchless "holds a real element with this key". Relies on empty and
    /// dummy slots carrying the sentinel key, which no real key equals.
    pub(crate) fn holds(&self, key: u32) -> bool {
        ct_eq_u32(self.key, key)
    }

    pub(crate) fn set_tag(&mut self, tag: bool) {
        self.tag = tag & self.is_real();
    }

    /// Clears the tag when `spill` is set, without branching on it.
    pub(crate) fn spill_if(&mut self, spill: bool) {
        self.tag &= !spill;
    }

    /// Overwrites `self` with `other` when `flag` is set.
    pub(crate) fn store_if(&mut self, other: &Self, flag: bool) {
        #[cfg(debug_assertions)]
        if flag {
            check_transition(self.state, other.state);
        }
        self.cmov(other, flag);
    }

    /// Replaces a real element by a dummy when `flag` is set.
    pub(crate) fn clear_to_dummy_if(&mut self, flag: bool) {
        self.store_if(&Slot::dummy(), flag);
    }
}

impl<const D: usize> Cmov for Slot<D> {
    fn cmov(&mut self, other: &Self, flag: bool) {
        let mut state = self.state as u8;
        state.cmov(&(other.state as u8), flag);
        self.state = SlotState::from_u8(state);
        self.tag.cmov(&other.tag, flag);
        self.vacant.cmov(&other.vacant, flag);
        self.key.cmov(&other.key, flag);
        self.payload.cmov(&other.payload, flag);
    }
}

/// Whether a slot may move from `from` to `to` inside a structural operation.
///
/// Staying in place is always allowed, as are the element lifecycle moves:
/// placed, removed, evicted.
pub fn transition_allowed(from: SlotState, to: SlotState) -> bool {
    use SlotState::*;
    from == to || matches!((from, to), (Empty, Real) | (Dummy, Real) | (Real, Dummy) | (Real, Empty))
}

#[cfg(debug_assertions)]
fn check_transition(from: SlotState, to: SlotState) {
    debug_assert!(transition_allowed(from, to), "illegal slot transition {from:?} -> {to:?}");
}

/// `n` buckets of `c` cells each, stored contiguously.
///
/// The bucket count is always a power of two.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table<T> {
    cells: Vec<T>,
    buckets: usize,
    bucket_size: usize,
}

impl<T: Clone> Table<T> {
    pub fn new(buckets: usize, bucket_size: usize, fill: T) -> Result<Self> {
        if !buckets.is_power_of_two() {
            return Err(Error::InvalidParameter("bucket count must be a power of two"));
        }
        if bucket_size == 0 {
            return Err(Error::InvalidParameter("bucket size must be positive"));
        }
        Ok(Table { cells: vec![fill; buckets * bucket_size], buckets, bucket_size })
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Table<U> {
        Table { cells: self.cells.iter().map(f).collect(), buckets: self.buckets, bucket_size: self.bucket_size }
    }
}

impl<T> Table<T> {
    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn bucket_size(&self) -> usize {
        self.bucket_size
    }

    pub fn bucket(&self, b: usize) -> &[T] {
        let c = self.bucket_size;
        &self.cells[b * c..(b + 1) * c]
    }

    pub fn bucket_mut(&mut self, b: usize) -> &mut [T] {
        let c = self.bucket_size;
        &mut self.cells[b * c..(b + 1) * c]
    }

    /// Two distinct buckets at once; `lo < hi`.
    pub fn pair_mut(&mut self, lo: usize, hi: usize) -> (&mut [T], &mut [T]) {
        debug_assert!(lo < hi);
        let c = self.bucket_size;
        let (head, tail) = self.cells.split_at_mut(hi * c);
        (&mut head[lo * c..(lo + 1) * c], &mut tail[..c])
    }

    pub fn cells(&self) -> &[T] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [T] {
        &mut self.cells
    }

    pub fn into_cells(self) -> Vec<T> {
        self.cells
    }

    pub fn iter_buckets(&self) -> impl Iterator<Item = &[T]> {
        self.cells.chunks_exact(self.bucket_size)
    }
}
