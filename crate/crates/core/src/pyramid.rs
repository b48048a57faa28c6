//! Pyramid ORAM: an append log `L0` of `p` slots followed by Zigzag hash
//! table levels `L1..Ll`, level `i` holding up to `2^(i-1) p` elements.
//!
//! Every access scans `L0`, probes each non-empty level once (a real search
//! until the key is found, dummy searches after), appends the element to
//! `L0` and then runs the rebuild that the access counter calls for. A miss
//! appends a vacant marker for the key instead, so the same key is never
//! searched twice at a level between two of its rebuilds; markers are
//! dropped when everything merges into the last level.
//!
//! Which levels exist, and therefore the shape of every access, depends on
//! the counter alone: levels `1..l-1` fill and drain on a binary-counter
//! schedule, and the last level is always present (built empty if need be).

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::oprim::Cmov;
use crate::ozht::{build_access_count, oblivious_build, FailureReason, ZhtParams};
use crate::slot::{Slot, MAX_KEY};
use crate::trace::{Region, TraceOp, TraceRecorder};
use crate::zht::Zht;
use crate::{Error, HashFamily, Result, Rng};

/// Shape of one level.
pub type LevelParams = ZhtParams;

/// What to do when a level build fails.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum FailurePolicy {
    /// Poison the ORAM and report the failure.
    #[default]
    StrictAbort,
    /// Rebuild under a fresh epoch, up to this many extra attempts. Retries
    /// show up in the trace.
    Retry(u32),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PyramidConfig {
    /// `N`, a power of two.
    pub capacity: usize,
    /// `p`, a power of two no larger than `N`.
    pub first_level_size: usize,
    /// Slots per bucket at every level.
    pub c: usize,
    /// Tables per level; `None` uses `max(2, ceil(log2 log2 n_i))`.
    pub k_override: Option<usize>,
    pub seed: u64,
    pub policy: FailurePolicy,
}

impl PyramidConfig {
    pub fn new(capacity: usize, first_level_size: usize, seed: u64) -> Self {
        PyramidConfig { capacity, first_level_size, c: 4, k_override: None, seed, policy: FailurePolicy::StrictAbort }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.capacity.is_power_of_two() || !self.first_level_size.is_power_of_two() {
            return Err(Error::InvalidParameter("capacity and first level size must be powers of two"));
        }
        if self.first_level_size > self.capacity {
            return Err(Error::InvalidParameter("first level larger than capacity"));
        }
        if self.capacity > MAX_KEY as usize {
            return Err(Error::InvalidParameter("capacity too large"));
        }
        if self.num_levels() > u8::MAX as usize {
            return Err(Error::InvalidParameter("too many levels"));
        }
        self.levels().iter().try_for_each(ZhtParams::validate)
    }

    /// `l = log2(N/p) + 1`.
    pub fn num_levels(&self) -> usize {
        (self.capacity / self.first_level_size).trailing_zeros() as usize + 1
    }

    /// Parameters of level `i` (1-based).
    pub fn level(&self, i: usize) -> LevelParams {
        let n = self.first_level_size << (i - 1);
        ZhtParams { n, k: self.k_override.unwrap_or_else(|| default_k(n)), c: self.c }
    }

    pub fn levels(&self) -> Vec<LevelParams> {
        (1..=self.num_levels()).map(|i| self.level(i)).collect()
    }

    /// Whether level `j` (1-based) holds a table while the counter reads `t`.
    pub fn level_present(&self, t: u64, j: usize) -> bool {
        j == self.num_levels() || (t / self.first_level_size as u64) >> (j - 1) & 1 == 1
    }

    /// The highest source level `i*` merged by the rebuild that runs once the
    /// counter reaches `t`: levels `0..=i*` go into level `i* + 1`, and when
    /// that is the last level its old contents join them.
    pub fn rebuild_after(&self, t: u64) -> Option<usize> {
        let p = self.first_level_size as u64;
        if t == 0 || !t.is_multiple_of(p) {
            return None;
        }
        Some(((t / p).trailing_zeros() as usize).min(self.num_levels() - 1))
    }

    /// Bucket accesses of the access made while the counter reads `t`, not
    /// counting a rebuild: one per L0 slot plus `k_j` per present level.
    pub fn online_cost(&self, t: u64) -> u64 {
        let levels: u64 =
            (1..=self.num_levels()).filter(|&j| self.level_present(t, j)).map(|j| self.level(j).k as u64).sum();
        self.first_level_size as u64 + levels
    }

    /// Input slots of a rebuild merging levels `0..=top`.
    pub fn rebuild_input_slots(&self, top: usize) -> usize {
        let l = self.num_levels();
        let mut m = self.first_level_size + (1..=top).map(|i| self.level(i).slots()).sum::<usize>();
        if top + 1 == l {
            m += self.level(l).slots();
        }
        m
    }

    /// Exact bucket accesses of the rebuild merging levels `0..=top`.
    pub fn rebuild_cost(&self, top: usize) -> u64 {
        build_access_count(self.rebuild_input_slots(top) as u64, self.level(top + 1))
    }

    /// Total bucket accesses, rebuilds included, of accesses `t = 0..N`.
    pub fn period_cost(&self) -> u128 {
        let n = self.capacity as u64;
        let online: u128 = (0..n).map(|t| self.online_cost(t) as u128).sum();
        let rebuilds: u128 =
            (1..=n).filter_map(|t| self.rebuild_after(t)).map(|top| self.rebuild_cost(top) as u128).sum();
        online + rebuilds
    }

    /// [`period_cost`](Self::period_cost) per access.
    pub fn amortized_cost(&self) -> f64 {
        self.period_cost() as f64 / self.capacity as f64
    }
}

/// `max(2, ceil(log2 log2 n))`.
pub fn default_k(n: usize) -> usize {
    let log_n = n.trailing_zeros() as usize;
    let ceil_log = if log_n <= 1 { 0 } else { (usize::BITS - (log_n - 1).leading_zeros()) as usize };
    ceil_log.max(2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Request<const D: usize> {
    Read,
    Write([u8; D]),
}

/// Bookkeeping for one access.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AccessRecord {
    pub op_index: u64,
    pub found: bool,
    /// Highest source level of the rebuild this access triggered, or -1.
    pub rebuilt_level: i32,
    pub online: u64,
    /// Online accesses plus those of the rebuild.
    pub total: u64,
}

type RebuildHook = Box<dyn FnMut(usize, u64)>;

pub struct PyramidOram<const D: usize = { crate::DEFAULT_PAYLOAD }> {
    config: PyramidConfig,
    level0: Vec<Slot<D>>,
    /// Index `j - 1` holds level `j`.
    levels: Vec<Option<Zht<D>>>,
    t: u64,
    fam: HashFamily,
    rng: Rng,
    real_count: usize,
    poisoned: bool,
    hook: Option<RebuildHook>,
    #[cfg(debug_assertions)]
    searched: Vec<alloc::collections::BTreeSet<u32>>,
}

impl<const D: usize> fmt::Debug for PyramidOram<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PyramidOram")
            .field("config", &self.config)
            .field("t", &self.t)
            .field("real_count", &self.real_count)
            .field("poisoned", &self.poisoned)
            .finish_non_exhaustive()
    }
}

impl<const D: usize> PyramidOram<D> {
    /// An empty ORAM. The last level starts as an empty table; no trace is
    /// produced.
    pub fn new(config: PyramidConfig) -> Result<Self> {
        config.validate()?;
        let l = config.num_levels();
        let fam = HashFamily::new(config.seed);
        let last = Zht::new(config.level(l), l as u8, &fam)?;
        let mut levels: Vec<Option<Zht<D>>> = (1..l).map(|_| None).collect();
        levels.push(Some(last));
        Ok(PyramidOram {
            level0: vec![Slot::empty(); config.first_level_size],
            levels,
            t: 0,
            fam,
            rng: Rng::new(config.seed),
            real_count: 0,
            poisoned: false,
            hook: None,
            #[cfg(debug_assertions)]
            searched: vec![Default::default(); l],
            config,
        })
    }

    /// Builds the last level from `elems` padded with dummies to `N` slots.
    pub fn bulk_load(config: PyramidConfig, elems: &[(u32, [u8; D])], rec: &mut TraceRecorder) -> Result<Self> {
        let mut oram = Self::new(config)?;
        if elems.len() > oram.config.capacity {
            return Err(Error::CapacityExceeded);
        }
        let mut keys: Vec<u32> = elems.iter().map(|e| e.0).collect();
        keys.sort_unstable();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("duplicate keys"));
        }
        let mut input = elems.iter().map(|&(k, v)| Slot::real(k, v)).collect::<Result<Vec<_>>>()?;
        input.resize(oram.config.capacity, Slot::dummy());
        let l = oram.config.num_levels();
        let built = oram.build_level(&input, l, rec)?;
        oram.levels[l - 1] = Some(built);
        oram.real_count = elems.len();
        Ok(oram)
    }

    pub fn config(&self) -> &PyramidConfig {
        &self.config
    }

    /// Accesses made so far.
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn real_count(&self) -> usize {
        self.real_count
    }

    pub fn is_poisoned(&self) -> bool {
        self.poisoned
    }

    pub fn level0(&self) -> &[Slot<D>] {
        &self.level0
    }

    /// Level `j` (1-based), if present.
    pub fn level(&self, j: usize) -> Option<&Zht<D>> {
        self.levels.get(j.wrapping_sub(1))?.as_ref()
    }

    /// Called with `(i*, t)` right before each rebuild.
    pub fn set_pre_rebuild_hook(&mut self, hook: impl FnMut(usize, u64) + 'static) {
        self.hook = Some(Box::new(hook));
    }

    pub fn access(&mut self, key: u32, req: Request<D>, rec: &mut TraceRecorder) -> Result<Option<[u8; D]>> {
        self.access_recorded(key, req, rec).map(|(v, _)| v)
    }

    /// [`access`](Self::access) plus its [`AccessRecord`]. A fresh-key write
    /// into a full ORAM still performs a complete access (treated as a miss)
    /// before returning [`Error::CapacityExceeded`].
    pub fn access_recorded(
        &mut self,
        key: u32,
        req: Request<D>,
        rec: &mut TraceRecorder,
    ) -> Result<(Option<[u8; D]>, AccessRecord)> {
        if self.poisoned {
            return Err(Error::Poisoned);
        }
        if key > MAX_KEY {
            return Err(Error::InvalidParameter("key out of range"));
        }
        let start = rec.count();
        let p = self.config.first_level_size;
        let append_at = (self.t % p as u64) as usize;

        // L0: every slot but the append position, which is always empty here.
        let mut found = false;
        let mut cached = Slot::<D>::empty();
        for (i, slot) in self.level0.iter_mut().enumerate() {
            if i == append_at {
                continue;
            }
            rec.record(Region::L0, i, TraceOp::ReadWrite);
            let m = slot.holds(key) & slot.is_real();
            cached.cmov(slot, m);
            found |= m;
            slot.clear_to_dummy_if(m);
        }

        for j in 0..self.levels.len() {
            let Some(z) = self.levels[j].as_mut() else { continue };
            let real = !found;
            #[cfg(debug_assertions)]
            if real {
                assert!(self.searched[j].insert(key), "key {key} searched twice at level {} between rebuilds", j + 1);
            }
            if let Some(hit) = z.probe(key, real, &mut self.rng, rec) {
                cached = hit;
                found = true;
            }
        }

        let (write, value) = match req {
            Request::Read => (false, [0u8; D]),
            Request::Write(v) => (true, v),
        };
        let present = found & !cached.is_vacant();
        let result = present.then(|| *cached.payload());
        let fresh = write & !present;
        let overflow = fresh & (self.real_count >= self.config.capacity);
        let mut payload = *cached.payload();
        payload.cmov(&value, write);
        let mut out = Slot::vacant(key)?;
        out.cmov(&Slot::real(key, payload)?, (present | write) & !overflow);
        rec.record(Region::L0, append_at, TraceOp::Write);
        self.level0[append_at].store_if(&out, true);
        self.real_count += (fresh & !overflow) as usize;
        self.t += 1;

        let online = rec.count() - start;
        let rebuilt = self.rebuild_if_due(rec)?;
        let record = AccessRecord {
            op_index: self.t - 1,
            found: present,
            rebuilt_level: rebuilt.map_or(-1, |i| i as i32),
            online,
            total: rec.count() - start,
        };
        if overflow {
            return Err(Error::CapacityExceeded);
        }
        Ok((result, record))
    }

    /// Runs the rebuild scheduled for the current counter, if any, returning
    /// its top source level.
    pub fn rebuild_if_due(&mut self, rec: &mut TraceRecorder) -> Result<Option<usize>> {
        let Some(top) = self.config.rebuild_after(self.t) else { return Ok(None) };
        if let Some(hook) = self.hook.as_mut() {
            hook(top, self.t);
        }
        let l = self.config.num_levels();
        let target = top + 1;
        let mut input = core::mem::replace(&mut self.level0, vec![Slot::empty(); self.config.first_level_size]);
        let last = if target == l { l } else { top };
        for j in 1..=last {
            let z = self.levels[j - 1].take().expect("source level present by schedule");
            input.extend(z.into_slots());
            #[cfg(debug_assertions)]
            self.searched[j - 1].clear();
        }
        debug_assert_eq!(input.len(), self.config.rebuild_input_slots(top));
        if target == l {
            for s in &mut input {
                let drop = s.is_vacant();
                s.clear_to_dummy_if(drop);
            }
        }
        let built = self.build_level(&input, target, rec)?;
        #[cfg(debug_assertions)]
        self.searched[target - 1].clear();
        self.levels[target - 1] = Some(built);
        Ok(Some(top))
    }

    fn build_level(&mut self, input: &[Slot<D>], level: usize, rec: &mut TraceRecorder) -> Result<Zht<D>> {
        let params = self.config.level(level);
        let attempts = match self.config.policy {
            FailurePolicy::StrictAbort => 1,
            FailurePolicy::Retry(r) => r as u64 + 1,
        };
        let mut reason = FailureReason::None;
        for _ in 0..attempts {
            self.fam = self.fam.fresh_epoch()?;
            let (z, report) = oblivious_build(input, params, level as u8, &self.fam, &mut self.rng, rec)?;
            if report.success {
                return Ok(z);
            }
            reason = report.failure_reason;
        }
        self.poisoned = true;
        Err(Error::BuildFailed(reason))
    }

    /// Flips one payload bit of the first real element found in the levels
    /// (then in L0). Returns its key.
    #[doc(hidden)]
    pub fn inject_fault(&mut self, bit: usize) -> Option<u32> {
        let in_levels = self
            .levels
            .iter_mut()
            .flatten()
            .flat_map(|z| z.tables_mut().iter_mut())
            .flat_map(|t| t.cells_mut().iter_mut());
        let slot = in_levels.chain(self.level0.iter_mut()).find(|s| s.is_real() & !s.is_vacant())?;
        if D == 0 {
            return None;
        }
        let bit = bit % (8 * D);
        slot.payload_mut()[bit / 8] ^= 1 << (bit % 8);
        Some(slot.key())
    }

    /// Every stored element, vacant markers excluded.
    pub fn contents(&self) -> Vec<(u32, [u8; D])> {
        let levels = self.levels.iter().flatten().flat_map(|z| z.slots());
        self.level0
            .iter()
            .chain(levels)
            .filter(|s| s.is_real() & !s.is_vacant())
            .map(|s| (s.key(), *s.payload()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeMap;

    fn val(x: u64) -> [u8; 8] {
        x.to_le_bytes()
    }

    fn small(capacity: usize, p: usize) -> PyramidOram<8> {
        PyramidOram::new(PyramidConfig::new(capacity, p, 7)).unwrap()
    }

    #[test]
    fn level_sizes_and_k() {
        let cfg = PyramidConfig::new(1 << 10, 16, 0);
        assert_eq!(cfg.num_levels(), 7);
        assert_eq!(cfg.level(1), ZhtParams { n: 16, k: 2, c: 4 });
        assert_eq!(cfg.level(7), ZhtParams { n: 1024, k: 4, c: 4 });
        assert_eq!(default_k(2), 2);
        assert_eq!(default_k(1 << 16), 4);
        assert_eq!(default_k(1 << 17), 5);
        assert_eq!(PyramidConfig::new(64, 64, 0).num_levels(), 1);
    }

    #[test]
    fn bad_configs_rejected() {
        assert!(PyramidConfig::new(100, 4, 0).validate().is_err());
        assert!(PyramidConfig::new(64, 128, 0).validate().is_err());
        let mut c = PyramidConfig::new(64, 4, 0);
        c.c = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn write_then_read() {
        let mut o = small(64, 4);
        let mut rec = TraceRecorder::counting();
        assert_eq!(o.access(3, Request::Write(val(9)), &mut rec).unwrap(), None);
        assert_eq!(o.access(3, Request::Read, &mut rec).unwrap(), Some(val(9)));
    }

    #[test]
    fn repeated_read_leaves_dummy_and_copy() {
        let mut o = small(64, 4);
        let mut rec = TraceRecorder::counting();
        o.access(5, Request::Write(val(1)), &mut rec).unwrap();
        assert_eq!(o.access(5, Request::Read, &mut rec).unwrap(), Some(val(1)));
        assert_eq!(o.access(5, Request::Read, &mut rec).unwrap(), Some(val(1)));
        let l0 = o.level0();
        assert!(!l0[1].is_real() && l0[1].state() == crate::SlotState::Dummy);
        assert!(l0[2].is_real() && l0[2].key() == 5);
    }

    #[test]
    fn schedule_for_p4() {
        let cfg = PyramidConfig::new(64, 4, 0);
        let got: Vec<_> = (1..=8).map(|t| cfg.rebuild_after(t)).collect();
        assert_eq!(got, vec![None, None, None, Some(0), None, None, None, Some(1)]);
        assert_eq!(cfg.rebuild_after(64), Some(4));
        assert_eq!(cfg.rebuild_after(128), Some(4));
    }

    #[test]
    fn rebuild_moves_l0_into_l1() {
        let mut o = small(64, 4);
        let mut rec = TraceRecorder::counting();
        for k in 0..3 {
            let (_, r) = o.access_recorded(k, Request::Write(val(k as u64)), &mut rec).unwrap();
            assert_eq!(r.rebuilt_level, -1);
        }
        assert!(o.level(1).is_none());
        let (_, r) = o.access_recorded(3, Request::Write(val(3)), &mut rec).unwrap();
        assert_eq!(r.rebuilt_level, 0);
        assert_eq!(o.level(1).unwrap().real_count(), 4);
        assert!(o.level0().iter().all(|s| !s.is_live()));
        for _ in 0..4 {
            o.access(0, Request::Read, &mut rec).unwrap();
        }
        assert!(o.level(1).is_none());
        assert!(o.level(2).is_some());
    }

    #[test]
    fn online_cost_matches_instrumentation() {
        let mut o = small(256, 8);
        let cfg = o.config().clone();
        let mut rec = TraceRecorder::counting();
        assert_eq!(cfg.online_cost(0), 8 + cfg.level(cfg.num_levels()).k as u64);
        for i in 0..600u64 {
            let t = o.t();
            let (_, r) = o.access_recorded((i % 37) as u32, Request::Write(val(i)), &mut rec).unwrap();
            assert_eq!(r.online, cfg.online_cost(t));
            let rebuild = cfg.rebuild_after(t + 1).map_or(0, |top| cfg.rebuild_cost(top));
            assert_eq!(r.total, r.online + rebuild);
        }
    }

    #[test]
    fn period_cost_matches_first_period() {
        let mut o = small(128, 8);
        let cfg = o.config().clone();
        let mut rec = TraceRecorder::counting();
        for i in 0..128u32 {
            o.access(i % 11, Request::Read, &mut rec).unwrap();
        }
        assert_eq!(rec.count() as u128, cfg.period_cost());
    }

    #[test]
    fn oracle_small() {
        let mut o = small(64, 4);
        let mut rec = TraceRecorder::counting();
        let mut rng = Rng::new(11);
        let mut reference = BTreeMap::new();
        use rand_core::RngCore;
        for _ in 0..3000 {
            let key = rng.next_u32() % 64;
            if rng.next_u32() & 1 == 0 {
                let v = val(rng.next_u64());
                let got = o.access(key, Request::Write(v), &mut rec).unwrap();
                assert_eq!(got, reference.insert(key, v));
            } else {
                assert_eq!(o.access(key, Request::Read, &mut rec).unwrap(), reference.get(&key).copied());
            }
        }
        assert_eq!(o.real_count(), reference.len());
    }

    #[test]
    fn capacity_enforced() {
        let mut o = small(8, 4);
        let mut rec = TraceRecorder::counting();
        for k in 0..8 {
            o.access(k, Request::Write(val(1)), &mut rec).unwrap();
        }
        let t = o.t();
        assert_eq!(o.access(100, Request::Write(val(1)), &mut rec), Err(Error::CapacityExceeded));
        assert_eq!(o.t(), t + 1);
        assert_eq!(o.access(100, Request::Read, &mut rec).unwrap(), None);
        assert_eq!(o.access(3, Request::Write(val(2)), &mut rec).unwrap(), Some(val(1)));
    }

    #[test]
    fn bulk_load_then_read() {
        let cfg = PyramidConfig::new(64, 4, 3);
        let elems: Vec<_> = (0..64u32).map(|k| (k * 3, val(k as u64))).collect();
        let mut rec = TraceRecorder::counting();
        let mut o = PyramidOram::bulk_load(cfg.clone(), &elems, &mut rec).unwrap();
        assert_eq!(rec.count(), build_access_count(64, cfg.level(cfg.num_levels())));
        for &(k, v) in &elems {
            let (got, r) = o.access_recorded(k, Request::Read, &mut rec).unwrap();
            assert_eq!(got, Some(v));
            assert!(r.found);
        }
        assert!(PyramidOram::<8>::bulk_load(cfg.clone(), &[(1, val(0)), (1, val(1))], &mut rec).is_err());
        let empty = PyramidOram::<8>::bulk_load(cfg, &[], &mut rec).unwrap();
        assert_eq!(empty.real_count(), 0);
    }

    #[test]
    fn hook_sees_every_rebuild() {
        use alloc::rc::Rc;
        use core::cell::RefCell;
        let mut o = small(32, 4);
        let seen = Rc::new(RefCell::new(Vec::new()));
        let sink = seen.clone();
        o.set_pre_rebuild_hook(move |top, t| sink.borrow_mut().push((top, t)));
        let mut rec = TraceRecorder::counting();
        for _ in 0..16 {
            o.access(1, Request::Read, &mut rec).unwrap();
        }
        assert_eq!(*seen.borrow(), vec![(0, 4), (1, 8), (0, 12), (2, 16)]);
    }

    #[test]
    fn fault_is_visible() {
        let mut o = small(32, 4);
        let mut rec = TraceRecorder::counting();
        for k in 0..4 {
            o.access(k, Request::Write(val(0)), &mut rec).unwrap();
        }
        let k = o.inject_fault(0).unwrap();
        assert_eq!(o.access(k, Request::Read, &mut rec).unwrap(), Some(val(1)));
    }

    #[test]
    fn invalid_key_rejected() {
        let mut o = small(32, 4);
        assert!(o.access(u32::MAX, Request::Read, &mut TraceRecorder::counting()).is_err());
        assert_eq!(o.t(), 0);
    }
}
