mod common;

use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{check_sliding_max, report};
use urllc_la::link_adapt::{clamp_estimate, CqiHistory, HistoryMode, TimingConfig};
use urllc_la::Error;

const T: f64 = 5e-3;
const SLOT: f64 = 142.8e-6;

fn timing() -> TimingConfig {
    TimingConfig {
        t_sch_delay: SLOT,
        t_cqi_delay: 2.0 * SLOT,
        t_cqi_period: T,
    }
}

fn history(mode: HistoryMode, subbands: usize, w: usize, seq: &[Vec<u8>]) -> CqiHistory {
    let mut h = CqiHistory::new(timing(), mode, subbands, w);
    for (i, c) in seq.iter().enumerate() {
        h.on_report(&report(i, T, 2.0 * SLOT, c.clone())).unwrap();
    }
    h
}

#[test]
fn sliding_max_matches_brute_force_over_random_settings() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut total = 0;
    for case in 0..20 {
        let k = rng.random_range(1..=4);
        let w = rng.random_range(1..=60);
        let mode = if case % 2 == 0 {
            HistoryMode::PerSubband
        } else {
            HistoryMode::Merged
        };
        total += check_sliding_max(k, w, 500, 2, mode, case);
    }
    assert!(total >= 10_000);
}

#[test]
fn hand_evaluated_estimate_at_lag_two() {
    // reports 9, 7, 6, 8: lag-1 drops 2, 1, -2; lag-2 drops 3, -1
    let h = history(HistoryMode::PerSubband, 1, 10, &[vec![9], vec![7], vec![6], vec![8]]);
    assert_eq!(h.lag_maxima(0), vec![2, 3]);
    let last_delivery = 3.0 * T + 2.0 * SLOT;
    // Δt = t_sch + SLOT - last_delivery + 2 SLOT, chosen inside (T, Δt_max]
    let t_sch = last_delivery + T + 0.5 * SLOT - 3.0 * SLOT;
    let dt = h.outdating(t_sch).unwrap();
    assert!(dt > T && dt <= timing().delta_t_max());
    assert_eq!(h.estimate_cqi(0, t_sch).unwrap(), 8 - 3);
    // inside the first period the lag-1 maximum applies
    assert_eq!(h.estimate_cqi(0, last_delivery).unwrap(), 8 - 2);
}

#[test]
fn estimate_clamps_at_zero_and_fifteen() {
    let h = history(HistoryMode::PerSubband, 1, 10, &[vec![15], vec![2]]);
    assert_eq!(h.lag_maxima(0)[0], 13);
    let t = 1.0 * T + 2.0 * SLOT;
    assert_eq!(h.estimate_cqi(0, t).unwrap(), 0);

    let h = history(HistoryMode::PerSubband, 1, 10, &[vec![1], vec![14]]);
    assert_eq!(h.estimate_cqi(0, T + 2.0 * SLOT).unwrap(), 15);
    assert_eq!(clamp_estimate(3, 5), 0);
    assert_eq!(clamp_estimate(14, -4), 15);
    assert_eq!(clamp_estimate(8, 0), 8);
}

#[test]
fn lag_boundary_uses_ceiling() {
    let h = history(HistoryMode::PerSubband, 1, 10, &[vec![12], vec![10], vec![9]]);
    // lag 1 max 2, lag 2 max 3
    assert_eq!(h.delta_cqi(0, T).unwrap(), 2);
    assert_eq!(h.delta_cqi(0, T * (1.0 + 1e-6)).unwrap(), 3);
    assert_eq!(h.delta_cqi(0, 1e-6).unwrap(), 2);
}

#[test]
fn outdating_beyond_max_is_rejected() {
    let h = history(HistoryMode::PerSubband, 1, 10, &[vec![5]]);
    let max = timing().delta_t_max();
    assert!(matches!(h.delta_cqi(0, max * 1.01), Err(Error::DeltaOutOfRange { .. })));
    assert!(matches!(h.delta_cqi(0, 0.0), Err(Error::DeltaOutOfRange { .. })));
    let h = CqiHistory::new(timing(), HistoryMode::PerSubband, 1, 10);
    assert_eq!(h.estimate_cqi(0, 0.0), Err(Error::NoReport));
}

#[test]
fn subband_count_is_checked() {
    let mut h = CqiHistory::new(timing(), HistoryMode::PerSubband, 3, 10);
    let err = h.on_report(&report(0, T, 0.0, vec![1, 2])).unwrap_err();
    assert_eq!(err, Error::SubbandMismatch { got: 2, expected: 3 });
}

fn arb_sequence() -> impl Strategy<Value = Vec<Vec<u8>>> {
    proptest::collection::vec(proptest::collection::vec(0u8..=15, 3), 1..80)
}

proptest! {
    #[test]
    fn larger_window_never_lowers_delta(seq in arb_sequence(), w1 in 1usize..20, extra in 0usize..40) {
        let small = history(HistoryMode::PerSubband, 3, w1, &seq);
        let large = history(HistoryMode::PerSubband, 3, w1 + extra, &seq);
        for sb in 0..3 {
            for (a, b) in small.lag_maxima(sb).iter().zip(large.lag_maxima(sb)) {
                prop_assert!(*a <= b);
            }
        }
    }

    #[test]
    fn merged_dominates_per_subband(seq in arb_sequence(), w in 1usize..30) {
        let per = history(HistoryMode::PerSubband, 3, w, &seq);
        let merged = history(HistoryMode::Merged, 3, w, &seq);
        for sb in 0..3 {
            for (a, b) in per.lag_maxima(sb).iter().zip(merged.lag_maxima(sb)) {
                prop_assert!(*a <= b);
            }
        }
    }

    #[test]
    fn estimate_never_exceeds_last_report_when_channel_only_degrades(
        start in 0u8..=15, drops in proptest::collection::vec(0u8..3, 1..40), w in 1usize..20
    ) {
        let mut seq = vec![vec![start]];
        for d in drops {
            let prev = seq.last().unwrap()[0];
            seq.push(vec![prev.saturating_sub(d)]);
        }
        let h = history(HistoryMode::PerSubband, 1, w, &seq);
        let last = seq.last().unwrap()[0];
        let t = (seq.len() - 1) as f64 * T + 2.0 * SLOT;
        prop_assert!(h.estimate_cqi(0, t).unwrap() <= last);
    }
}
