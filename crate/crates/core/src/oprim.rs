//! Data-independent building blocks.
//!
//! Everything here touches memory in an order fixed by the input length.
//! Selection is done with masks rather than branches; the compiler is still
//! free to lower that however it likes, so these routines give an
//! algorithm-level guarantee, not a machine-level one.

use alloc::vec::Vec;
use core::hint::black_box;

/// Conditional move: `self = other` iff `flag`, without branching on `flag`.
pub trait Cmov {
    fn cmov(&mut self, other: &Self, flag: bool);
}

#[inline]
fn mask64(flag: bool) -> u64 {
    0u64.wrapping_sub(black_box(flag) as u64)
}

macro_rules! impl_cmov_int {
    ($($t:ty),*) => {$(
        impl Cmov for $t {
            #[inline]
            fn cmov(&mut self, other: &Self, flag: bool) {
                let m = mask64(flag) as $t;
                *self ^= (*self ^ *other) & m;
            }
        }
    )*};
}

impl_cmov_int!(u8, u16, u32, u64, usize, i32, i64);

impl Cmov for bool {
    #[inline]
    fn cmov(&mut self, other: &Self, flag: bool) {
        let mut v = *self as u8;
        v.cmov(&(*other as u8), flag);
        *self = v != 0;
    }
}

impl<const N: usize> Cmov for [u8; N] {
    #[inline]
    fn cmov(&mut self, other: &Self, flag: bool) {
        let m = mask64(flag) as u8;
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a ^= (*a ^ *b) & m;
        }
    }
}

/// `a` if `flag`, else `b`.
#[inline]
pub fn cond_select<T: Cmov + Clone>(flag: bool, a: &T, b: &T) -> T {
    let mut out = b.clone();
    out.cmov(a, flag);
    out
}

/// Exchanges `a` and `b` iff `flag`. Both locations are read and written
/// either way.
#[inline]
pub fn cond_swap<T: Cmov + Clone>(flag: bool, a: &mut T, b: &mut T) {
    let old_a = a.clone();
    a.cmov(b, flag);
    b.cmov(&old_a, flag);
}

#[inline]
pub(crate) fn ct_eq_u32(a: u32, b: u32) -> bool {
    let x = (a ^ b) as u64;
    // x == 0 iff (x - 1) borrows into the top bit.
    ((x.wrapping_sub(1) >> 63) & 1) == 1
}

/// Ordering record for the repartition sort.
///
/// Ordered by `(class, tiebreak)`. Classes: 0 = bound for the left bucket,
/// 1 = free to go anywhere, 2 = bound for the right bucket.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SortItem {
    pub class: u8,
    pub tiebreak: u64,
    pub payload_ref: u32,
}

/// `payload_ref` of the padding items inserted by [`batcher_sort`].
pub const PADDING_REF: u32 = u32::MAX;

impl SortItem {
    pub const LEFT: u8 = 0;
    pub const MIDDLE: u8 = 1;
    pub const RIGHT: u8 = 2;

    #[inline]
    fn rank(&self) -> u128 {
        ((self.class as u128) << 64) | self.tiebreak as u128
    }

    fn padding() -> Self {
        SortItem { class: Self::MIDDLE, tiebreak: u64::MAX, payload_ref: PADDING_REF }
    }
}

impl Cmov for SortItem {
    #[inline]
    fn cmov(&mut self, other: &Self, flag: bool) {
        self.class.cmov(&other.class, flag);
        self.tiebreak.cmov(&other.tiebreak, flag);
        self.payload_ref.cmov(&other.payload_ref, flag);
    }
}

#[inline]
fn ct_gt_u128(a: u128, b: u128) -> bool {
    // Borrow out of b - a.
    let (_, borrow) = b.overflowing_sub(a);
    black_box(borrow)
}

/// Compare-exchange index pairs of Batcher's odd-even mergesort for `m`
/// items, `m` a power of two. The list depends on `m` alone.
pub fn batcher_schedule(m: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for_each_comparator(m, |i, j| out.push((i, j)));
    out
}

fn for_each_comparator(m: usize, mut f: impl FnMut(usize, usize)) {
    debug_assert!(m.is_power_of_two());
    let mut p = 1;
    while p < m {
        let mut k = p;
        while k >= 1 {
            let mut j = k % p;
            while j + k < m {
                for i in 0..k.min(m - j - k) {
                    if (i + j) / (2 * p) == (i + j + k) / (2 * p) {
                        f(i + j, i + j + k);
                    }
                }
                j += 2 * k;
            }
            k /= 2;
        }
        p *= 2;
    }
}

/// Sorts by `(class, tiebreak)` with Batcher's odd-even mergesort.
///
/// Lengths that are not a power of two are padded with middle-class items
/// that sort after every real middle-class item and are removed again
/// afterwards.
pub fn batcher_sort(items: &mut [SortItem]) {
    batcher_sort_observed(items, |_, _| {});
}

/// [`batcher_sort`], reporting each compare-exchange pair (on the padded
/// array) to `observe`.
pub fn batcher_sort_observed(items: &mut [SortItem], mut observe: impl FnMut(usize, usize)) {
    let m = items.len();
    if m <= 1 {
        return;
    }
    if m.is_power_of_two() {
        sort_pow2(items, &mut observe);
        return;
    }
    let mut padded: Vec<SortItem> = Vec::with_capacity(m.next_power_of_two());
    padded.extend_from_slice(items);
    padded.resize(m.next_power_of_two(), SortItem::padding());
    sort_pow2(&mut padded, &mut observe);
    let mut out = padded.iter().filter(|it| it.payload_ref != PADDING_REF);
    for slot in items.iter_mut() {
        *slot = *out.next().expect("padding removal keeps every real item");
    }
}

fn sort_pow2(items: &mut [SortItem], observe: &mut impl FnMut(usize, usize)) {
    for_each_comparator(items.len(), |i, j| {
        observe(i, j);
        let swap = ct_gt_u128(items[i].rank(), items[j].rank());
        let (lo, hi) = items.split_at_mut(j);
        cond_swap(swap, &mut lo[i], &mut hi[0]);
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn select_basic() {
        assert_eq!(cond_select(true, &7u32, &9u32), 7);
        assert_eq!(cond_select(false, &7u32, &9u32), 9);
    }

    #[test]
    fn select_matches_branch_exhaustively() {
        for flag in [false, true] {
            for a in 0..=255u8 {
                for b in 0..=255u8 {
                    let expect = if flag { a } else { b };
                    assert_eq!(cond_select(flag, &a, &b), expect);
                }
            }
        }
    }

    #[test]
    fn swap_basic_and_involution() {
        let (mut a, mut b) = (1u64, 2u64);
        cond_swap(true, &mut a, &mut b);
        assert_eq!((a, b), (2, 1));
        cond_swap(false, &mut a, &mut b);
        assert_eq!((a, b), (2, 1));
        cond_swap(true, &mut a, &mut b);
        assert_eq!((a, b), (1, 2));
    }

    #[test]
    fn ct_eq() {
        assert!(ct_eq_u32(5, 5));
        assert!(!ct_eq_u32(5, 6));
        assert!(ct_eq_u32(u32::MAX, u32::MAX));
        assert!(!ct_eq_u32(0, u32::MAX));
    }

    #[test]
    fn gt_u128() {
        assert!(ct_gt_u128(3, 2));
        assert!(!ct_gt_u128(2, 2));
        assert!(!ct_gt_u128(1, 2));
        assert!(ct_gt_u128(1 << 64, u64::MAX as u128));
    }

    /// Comparator counts from the odd-even merge recurrences:
    /// M(1) = 1, M(m) = 2 M(m/2) + m/2 - 1 for merging two runs of m,
    /// S(m) = 2 S(m/2) + M(m/2).
    fn recurrence_count(m: usize) -> usize {
        fn merge(half: usize) -> usize {
            if half == 1 {
                1
            } else {
                2 * merge(half / 2) + half - 1
            }
        }
        if m <= 1 {
            0
        } else {
            2 * recurrence_count(m / 2) + merge(m / 2)
        }
    }

    #[test]
    fn comparator_count_matches_recurrence() {
        assert_eq!(batcher_schedule(8).len(), 19);
        for e in 1..=10 {
            let m = 1 << e;
            assert_eq!(batcher_schedule(m).len(), recurrence_count(m), "m = {m}");
        }
    }

    #[test]
    fn instrumented_run_counts_19_for_8() {
        let mut items: Vec<SortItem> =
            (0..8).map(|i| SortItem { class: 1, tiebreak: 8 - i as u64, payload_ref: i }).collect();
        let mut count = 0;
        batcher_sort_observed(&mut items, |_, _| count += 1);
        assert_eq!(count, 19);
    }

    fn heap_permutations(v: &mut Vec<SortItem>, k: usize, f: &mut impl FnMut(&[SortItem])) {
        if k == 1 {
            f(v);
            return;
        }
        heap_permutations(v, k - 1, f);
        for i in 0..k - 1 {
            if k.is_multiple_of(2) {
                v.swap(i, k - 1);
            } else {
                v.swap(0, k - 1);
            }
            heap_permutations(v, k - 1, f);
        }
    }

    #[test]
    fn sorts_all_permutations_of_eight() {
        let base: Vec<SortItem> = [(0u8, 5u64), (0, 1), (1, 9), (1, 0), (1, 3), (2, 2), (2, 7), (0, 4)]
            .iter()
            .enumerate()
            .map(|(i, &(class, tiebreak))| SortItem { class, tiebreak, payload_ref: i as u32 })
            .collect();
        let mut reference = base.clone();
        reference.sort_by_key(|it| (it.class, it.tiebreak));
        let mut perm = base.clone();
        let mut seen = 0;
        heap_permutations(&mut perm, 8, &mut |p| {
            let mut work = p.to_vec();
            batcher_sort(&mut work);
            assert_eq!(work, reference);
            seen += 1;
        });
        assert_eq!(seen, 40320);
    }

    #[test]
    fn sorted_input_unchanged() {
        let mut items: Vec<SortItem> =
            (0..8).map(|i| SortItem { class: (i / 3) as u8, tiebreak: i, payload_ref: i as u32 }).collect();
        let before = items.clone();
        batcher_sort(&mut items);
        assert_eq!(items, before);
    }

    #[test]
    fn padded_lengths_sort_and_drop_padding() {
        for m in [1usize, 3, 5, 6, 7, 12] {
            let mut items: Vec<SortItem> = (0..m)
                .map(|i| SortItem {
                    class: ((i * 7) % 3) as u8,
                    tiebreak: ((i * 31) % 11) as u64,
                    payload_ref: i as u32,
                })
                .collect();
            let mut reference = items.clone();
            reference.sort_by_key(|it| (it.class, it.tiebreak, it.payload_ref));
            batcher_sort(&mut items);
            let keys: Vec<_> = items.iter().map(|it| (it.class, it.tiebreak)).collect();
            let expect: Vec<_> = reference.iter().map(|it| (it.class, it.tiebreak)).collect();
            assert_eq!(keys, expect, "m = {m}");
            let mut refs: Vec<_> = items.iter().map(|it| it.payload_ref).collect();
            refs.sort_unstable();
            assert_eq!(refs, (0..m as u32).collect::<Vec<_>>());
        }
    }

    #[test]
    fn schedule_independent_of_data() {
        let mk = |seed: u64| -> Vec<SortItem> {
            (0..16u64)
                .map(|i| SortItem {
                    class: ((i.wrapping_mul(seed) >> 3) % 3) as u8,
                    tiebreak: i.wrapping_mul(seed ^ 0x9e37),
                    payload_ref: i as u32,
                })
                .collect()
        };
        let mut traces = vec![];
        for seed in [1u64, 77, 12345] {
            let mut items = mk(seed);
            let mut trace = vec![];
            batcher_sort_observed(&mut items, |i, j| trace.push((i, j)));
            traces.push(trace);
        }
        assert_eq!(traces[0], traces[1]);
        assert_eq!(traces[1], traces[2]);
        assert_eq!(traces[0], batcher_schedule(16));
    }
}
