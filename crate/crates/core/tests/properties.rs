use std::collections::{BTreeMap, HashMap};

use proptest::prelude::*;
use pyramid_oram::oprim::{batcher_sort, cond_swap, SortItem};
use pyramid_oram::trace::{sim_build, sim_search, sim_throw};
use pyramid_oram::Rng;
use pyramid_oram::*;

fn routing_table(n: usize, c: usize, fill: &[(u32, u32)]) -> Table<RoutingSlot<4>> {
    let mut t = Table::new(n, c, RoutingSlot::new(Slot::empty(), 0)).unwrap();
    for (cell, &(key, dest)) in t.cells_mut().iter_mut().zip(fill) {
        *cell = RoutingSlot::new(Slot::real(key, key.to_le_bytes()).unwrap(), dest);
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn batcher_matches_std_sort(raw in prop::collection::vec((0u8..3, any::<u64>()), 0..70)) {
        let mut items: Vec<SortItem> = raw
            .iter()
            .enumerate()
            .map(|(i, &(class, tiebreak))| SortItem { class, tiebreak, payload_ref: i as u32 })
            .collect();
        let mut want = items.clone();
        want.sort_by_key(|s| (s.class, s.tiebreak));
        batcher_sort(&mut items);
        let got: Vec<_> = items.iter().map(|s| (s.class, s.tiebreak)).collect();
        let want: Vec<_> = want.iter().map(|s| (s.class, s.tiebreak)).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn cond_swap_is_swap_or_identity(a: u64, b: u64, flag: bool) {
        let (mut x, mut y) = (a, b);
        cond_swap(flag, &mut x, &mut y);
        prop_assert_eq!((x, y), if flag { (b, a) } else { (a, b) });
    }

    #[test]
    fn route_conserves_and_places_live(
        log_n in 1u32..6,
        c in 1usize..4,
        load in 0.0f64..1.0,
        seed: u64,
    ) {
        let n = 1usize << log_n;
        let m = ((n * c) as f64 * load) as usize;
        let mut rng = Rng::new(seed);
        let fill: Vec<(u32, u32)> = (0..m as u32).map(|k| (k, rng.random_bucket(n).unwrap() as u32)).collect();
        let mut t = routing_table(n, c, &fill);
        let stats = route(&mut t, &mut rng, &mut TraceRecorder::counting(), Region::L0).unwrap();
        prop_assert_eq!(stats.repartitions, (n as u64 / 2) * log_n as u64);

        let mut keys: Vec<u32> = t.cells().iter().filter(|s| s.slot.is_real()).map(|s| s.slot.key()).collect();
        keys.sort_unstable();
        prop_assert_eq!(keys, (0..m as u32).collect::<Vec<_>>());
        let dest: HashMap<u32, u32> = fill.into_iter().collect();
        for b in 0..n {
            for s in t.bucket(b).iter().filter(|s| s.slot.is_live()) {
                prop_assert_eq!(dest[&s.slot.key()] as usize, b);
            }
        }
        let spilled = t.cells().iter().filter(|s| s.slot.is_real() && !s.slot.tag()).count();
        prop_assert_eq!(spilled, stats.total_spill());
    }

    #[test]
    fn route_prefix_property(log_n in 2u32..6, c in 1usize..3, seed: u64) {
        // After stage s, every live element sits in a bucket agreeing with its
        // destination on the low s bits.
        let n = 1usize << log_n;
        let mut rng = Rng::new(seed);
        let fill: Vec<(u32, u32)> = (0..(n * c) as u32).map(|k| (k, rng.random_bucket(n).unwrap() as u32)).collect();
        let mut t = routing_table(n, c, &fill);
        let mut ok = true;
        pyramid_oram::prn::route_observed(&mut t, &mut rng, &mut TraceRecorder::counting(), Region::L0, |s, tab| {
            let mask = (1usize << s) - 1;
            for b in 0..tab.buckets() {
                for rs in tab.bucket(b).iter().filter(|x| x.slot.is_live()) {
                    ok &= (rs.dest as usize & mask) == (b & mask);
                }
            }
        })
        .unwrap();
        prop_assert!(ok);
    }

    #[test]
    fn build_conserves_and_finds(log_n in 3u32..7, fill in 0.0f64..1.0, dummies in 0usize..40, seed: u64) {
        let n = 1usize << log_n;
        let params = ZhtParams { n, k: 4, c: 4 };
        let m = (n as f64 * fill) as u32;
        let mut input: Vec<Slot<4>> = (0..m).map(|k| Slot::real(k * 7 + 1, k.to_le_bytes()).unwrap()).collect();
        input.extend(std::iter::repeat_n(Slot::dummy(), dummies));
        let mut rec = TraceRecorder::counting();
        let (mut z, report) =
            oblivious_build(&input, params, 1, &HashFamily::new(seed), &mut Rng::new(seed), &mut rec).unwrap();
        prop_assert_eq!(rec.count(), build_access_count(input.len() as u64, params));
        prop_assume!(report.success);
        prop_assert_eq!(report.spills_after_phase[3], 0);
        prop_assert!(z.check_placement());
        prop_assert_eq!(z.real_count(), m as usize);
        prop_assert!(z.slots().all(|s| !s.is_real() || s.tag()));
        for k in 0..m {
            let hit = z.search(k * 7 + 1, false, &mut rec);
            prop_assert_eq!(hit.map(|s| *s.payload()), Some(k.to_le_bytes()));
        }
    }

    #[test]
    fn oram_matches_reference(
        ops in prop::collection::vec((0u32..40, any::<bool>(), any::<u64>()), 1..400),
        seed: u64,
    ) {
        let mut oram = PyramidOram::<8>::new(PyramidConfig::new(64, 4, seed)).unwrap();
        let mut reference = BTreeMap::new();
        let mut rec = TraceRecorder::counting();
        for (key, write, v) in ops {
            let got = if write {
                oram.access(key, Request::Write(v.to_le_bytes()), &mut rec).unwrap()
            } else {
                oram.access(key, Request::Read, &mut rec).unwrap()
            };
            let want = if write { reference.insert(key, v.to_le_bytes()) } else { reference.get(&key).copied() };
            prop_assert_eq!(got, want);
        }
        let mut contents = oram.contents();
        contents.sort();
        prop_assert_eq!(contents, reference.into_iter().collect::<Vec<_>>());
    }

    #[test]
    fn access_shape_is_data_independent(
        a in prop::collection::vec((0u32..200, any::<bool>()), 150),
        b in prop::collection::vec((0u32..200, any::<bool>()), 150),
    ) {
        let cfg = PyramidConfig::new(128, 8, 5);
        let mut x = PyramidOram::<2>::new(cfg.clone()).unwrap();
        let mut y = PyramidOram::<2>::new(cfg).unwrap();
        for (&(ka, wa), &(kb, wb)) in a.iter().zip(&b) {
            let mut ra = TraceRecorder::recording();
            let mut rb = TraceRecorder::recording();
            let req = |w: bool| if w { Request::Write([1, 2]) } else { Request::Read };
            x.access(ka, req(wa), &mut ra).unwrap();
            y.access(kb, req(wb), &mut rb).unwrap();
            prop_assert_eq!(ra.shape(), rb.shape());
            let l0_a: Vec<_> = ra.events().iter().filter(|e| e.region == Region::L0).map(|e| (e.index, e.op)).collect();
            let l0_b: Vec<_> = rb.events().iter().filter(|e| e.region == Region::L0).map(|e| (e.index, e.op)).collect();
            prop_assert_eq!(l0_a, l0_b);
        }
    }
}

#[test]
fn simulators_match_real_shapes() {
    for &(n, k, c, m) in &[(8, 1, 2, 0), (16, 2, 2, 10), (32, 3, 4, 50), (64, 4, 4, 64)] {
        let params = ZhtParams { n, k, c };
        let mut input: Vec<Slot<4>> = (0..(m / 2) as u32).map(|x| Slot::real(x, [0; 4]).unwrap()).collect();
        input.resize(m, Slot::dummy());
        let mut real = TraceRecorder::recording();
        oblivious_build(&input, params, 2, &HashFamily::new(1), &mut Rng::new(1), &mut real).unwrap();
        let sim = sim_build(m, params, 2, &mut Rng::new(2)).unwrap();
        assert_eq!(real.shape(), sim.shape());

        let mut z: Zht<4> = Zht::new(params, 2, &HashFamily::new(3)).unwrap();
        let mut rt = TraceRecorder::recording();
        z.throw(&input, PathSource::Random, false, &mut Rng::new(3), &mut rt);
        assert_eq!(rt.shape(), sim_throw(m, params, 2, &mut Rng::new(4)).unwrap().shape());
        let mut rs = TraceRecorder::recording();
        z.search(0, false, &mut rs);
        assert_eq!(rs.shape(), sim_search(params, 2, &mut Rng::new(5)).unwrap().shape());
    }
}

#[test]
fn schedule_matches_standalone_oracle() {
    // Replays the binary-counter schedule by tracking fill counts per level.
    let cfg = PyramidConfig::new(64, 4, 0);
    let l = cfg.num_levels();
    let mut oram = PyramidOram::<0>::new(cfg.clone()).unwrap();
    let mut rec = TraceRecorder::counting();
    let mut filled = vec![false; l + 1];
    let mut l0 = 0;
    for t in 0..3 * 64u64 {
        for (j, &f) in filled.iter().enumerate().take(l).skip(1) {
            assert_eq!(oram.level(j).is_some(), f, "t={t} level {j}");
        }
        let (_, r) = oram.access_recorded((t % 5) as u32, Request::Read, &mut rec).unwrap();
        l0 += 1;
        let mut expect = -1;
        if l0 == 4 {
            l0 = 0;
            let mut top = 0;
            while top + 1 < l && filled[top + 1] {
                filled[top + 1] = false;
                top += 1;
            }
            if top + 1 < l {
                filled[top + 1] = true;
            }
            expect = top as i32;
        }
        assert_eq!(r.rebuilt_level, expect, "t={t}");
    }
}

#[test]
fn insertion_order_does_not_change_shape() {
    // Sorted, reversed and shuffled key orders, both as build input and as a
    // write sequence against the full structure.
    use rand::seq::SliceRandom;
    let keys: Vec<u32> = (0..32).collect();
    let mut reversed = keys.clone();
    reversed.reverse();
    let mut shuffled = keys.clone();
    shuffled.shuffle(&mut Rng::new(9));
    let params = ZhtParams { n: 32, k: 3, c: 4 };
    let mut build_shapes = Vec::new();
    let mut oram_shapes = Vec::new();
    for order in [&keys, &reversed, &shuffled] {
        let input: Vec<Slot<4>> = order.iter().map(|&k| Slot::real(k, k.to_le_bytes()).unwrap()).collect();
        let mut rec = TraceRecorder::recording();
        let (z, report) = oblivious_build(&input, params, 1, &HashFamily::new(2), &mut Rng::new(3), &mut rec).unwrap();
        assert!(report.success);
        assert_eq!(z.real_count(), 32);
        build_shapes.push(rec.shape());

        let mut oram = PyramidOram::<4>::new(PyramidConfig::new(64, 4, 5)).unwrap();
        let mut rec = TraceRecorder::recording();
        for &k in order.iter().chain(order.iter()) {
            oram.access(k, Request::Write(k.to_le_bytes()), &mut rec).unwrap();
        }
        oram_shapes.push(rec.shape());
    }
    assert!(build_shapes.windows(2).all(|w| w[0] == w[1]));
    assert!(oram_shapes.windows(2).all(|w| w[0] == w[1]));
}
