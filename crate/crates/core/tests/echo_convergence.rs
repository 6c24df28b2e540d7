//! Neighbor discovery over the lossy radio, checked against the geometric
//! reachability predicate.

mod common;

use common::{World, LATENCY_MS};
use hotpotato::echo::Role;
use hotpotato::radio::Position;
use hotpotato::{DeviceId, SimTime};
use proptest::prelude::*;

fn arb_layout() -> impl Strategy<Value = (Vec<Position>, Vec<f64>, u64)> {
    (2usize..=14).prop_flat_map(|n| {
        (
            prop::collection::vec((0.0..40.0f64, 0.0..40.0f64), n),
            prop::collection::vec(0.5..1.5f64, n),
            any::<u64>(),
        )
            .prop_map(|(ps, fs, seed)| {
                (
                    ps.into_iter().map(|(x, y)| Position::new(x, y)).collect(),
                    fs,
                    seed,
                )
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn static_lossless_tables_match_reachability((positions, factors, seed) in arb_layout()) {
        let mut w = World::new(&positions, factors, 0.0, seed);
        // Two beacon periods plus two hops of latency.
        let t = SimTime(1000 + 2 * LATENCY_MS);
        w.run_until(t);
        let bad = w.mismatches(t);
        prop_assert!(bad.is_empty(), "{:?}", bad);
        // Stays correct afterwards.
        w.run_until(SimTime(5000));
        let bad = w.mismatches(SimTime(5000));
        prop_assert!(bad.is_empty(), "{:?}", bad);
    }
}

#[test]
fn cold_pair_is_bidirectional_within_two_periods() {
    for seed in 0..50 {
        let mut w = World::new(
            &[Position::new(1.0, 1.0), Position::new(2.0, 1.0)],
            vec![],
            0.0,
            seed,
        );
        w.run_until(SimTime(1000));
        let now = SimTime(1000);
        assert!(
            w.tables[0].is_bidirectional(DeviceId(1), now),
            "seed {seed}"
        );
        assert!(
            w.tables[1].is_bidirectional(DeviceId(0), now),
            "seed {seed}"
        );
    }
}

#[test]
fn fourteen_devices_list_thirteen_after_a_period() {
    let positions: Vec<Position> = (0..14)
        .map(|i| Position::new(1.0 + f64::from(i) * 0.5, 5.0))
        .collect();
    let mut w = World::new(&positions, vec![], 0.0, 3);
    // Every device beacons once in [0, 50] ms; the next round carries all peers.
    w.run_until(SimTime(600));
    let now = SimTime(600);
    for t in &w.tables {
        let b = t.make_beacon(Role::Player, now, 32);
        assert_eq!(b.heard.len(), 13);
    }
}

#[test]
fn separated_pair_forgets_within_staleness_window() {
    for seed in 0..20 {
        let mut w = World::new(
            &[Position::new(1.0, 1.0), Position::new(3.0, 1.0)],
            vec![],
            0.0,
            seed,
        );
        let t = SimTime(5000);
        w.run_until(t);
        assert!(w.tables[0].contains(DeviceId(1), t));
        w.radio.set_position(DeviceId(1), Position::new(30.0, 30.0));
        let deadline = SimTime(t.0 + 1500 + LATENCY_MS);
        w.run_until(deadline);
        for (a, b) in [(0u16, 1u16), (1, 0)] {
            let table = &w.tables[usize::from(a)];
            assert!(
                !table.contains(DeviceId(b), deadline),
                "seed {seed}: {a} still lists {b}"
            );
            assert_eq!(table.bidirectional_count(deadline, None), 0);
        }
    }
}

#[test]
fn lossy_symmetric_link_is_mostly_bidirectional() {
    for p in [0.1, 0.2, 0.3] {
        let (mut up, mut total) = (0u32, 0u32);
        for seed in 0..20 {
            let mut w = World::new(
                &[Position::new(1.0, 1.0), Position::new(4.0, 1.0)],
                vec![],
                p,
                seed,
            );
            w.run_until(SimTime(2000));
            // One sample every 100 ms over a 60 s window.
            for k in 0..600 {
                let t = SimTime(2000 + k * 100);
                w.run_until(t);
                total += 2;
                up += u32::from(w.tables[0].is_bidirectional(DeviceId(1), t));
                up += u32::from(w.tables[1].is_bidirectional(DeviceId(0), t));
            }
        }
        let frac = f64::from(up) / f64::from(total);
        assert!(
            frac >= 0.95,
            "p_loss={p}: bidirectional {frac:.4} of samples"
        );
    }
}
