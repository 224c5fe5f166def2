//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use urllc_la::channel::{doppler_hz, make_process, FadingProfile, ProfileKind};
use urllc_la::cqi_reporting::CqiReport;
use urllc_la::link_adapt::{CqiHistory, HistoryMode, TimingConfig};
use urllc_la::phy::PhyTables;
use urllc_la::scheduler::max_tb_subset;

/// Bessel J0 by composite Simpson quadrature of `(1/π) ∫_0^π cos(x sin θ) dθ`.
pub fn bessel_j0(x: f64) -> f64 {
    let n = 2000;
    let h = PI / n as f64;
    let f = |i: usize| (x * (i as f64 * h).sin()).cos();
    let mut s = f(0) + f(n);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i);
    }
    s * h / 3.0 / PI
}

pub const CARRIER_HZ: f64 = 2e9;

pub struct ChannelStats {
    pub samples: usize,
    pub mean_power: f64,
    /// Largest |ρ(τ) − J0²(2π f_d τ)| over the probed lags.
    pub acf_error: f64,
    /// Kolmogorov-Smirnov distance of the envelope to the unit-power Rayleigh CDF.
    pub ks: f64,
}

/// Single-tap statistics over an ensemble of seeded processes.
pub fn flat_channel_stats(speed_kmph: f64) -> ChannelStats {
    let fd = doppler_hz(speed_kmph, CARRIER_HZ);
    let profile = FadingProfile::builtin(ProfileKind::Flat);

    // mean power and envelope distribution: 1000 processes x 1000 instants
    let mut power_sum = 0.0;
    let mut envelopes = Vec::with_capacity(1_000_000);
    for seed in 0..1000u64 {
        let p = make_process(profile.clone(), fd, 10_000 + seed).unwrap();
        for i in 0..1000 {
            let g = p.tap_gains(0.0371 * i as f64)[0];
            power_sum += g.norm_sqr();
            envelopes.push(g.norm());
        }
    }
    let samples = envelopes.len();
    envelopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ks = envelopes
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let cdf = 1.0 - (-r * r).exp();
            let lo = i as f64 / samples as f64;
            let hi = (i + 1) as f64 / samples as f64;
            (cdf - lo).abs().max((hi - cdf).abs())
        })
        .fold(0.0, f64::max);

    // power autocorrelation at lags 0.5 .. 5 ms
    let lags: Vec<f64> = (1..=10).map(|k| k as f64 * 0.5e-3).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut p0 = Vec::new();
    let mut pl: Vec<Vec<f64>> = vec![Vec::new(); lags.len()];
    for seed in 0..500u64 {
        let p = make_process(profile.clone(), fd, 50_000 + seed).unwrap();
        for _ in 0..200 {
            let t0 = rng.random::<f64>() * 100.0;
            p0.push(p.tap_gains(t0)[0].norm_sqr());
            for (j, &tau) in lags.iter().enumerate() {
                pl[j].push(p.tap_gains(t0 + tau)[0].norm_sqr());
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let m0 = mean(&p0);
    let var0 = p0.iter().map(|x| (x - m0).powi(2)).sum::<f64>() / p0.len() as f64;
    let mut acf_error: f64 = 0.0;
    for (j, &tau) in lags.iter().enumerate() {
        let ml = mean(&pl[j]);
        let cov = p0.iter().zip(&pl[j]).map(|(a, b)| (a - m0) * (b - ml)).sum::<f64>() / p0.len() as f64;
        let rho = cov / var0;
        let j0 = bessel_j0(2.0 * PI * fd * tau);
        acf_error = acf_error.max((rho - j0 * j0).abs());
    }

    ChannelStats {
        samples,
        mean_power: power_sum / samples as f64,
        acf_error,
        ks,
    }
}

/// Brute-force ΔCQI: the largest drop over exactly `k` report periods among
/// the last `w` drop samples of that lag.
pub fn brute_delta(history: &[Vec<u8>], subband: usize, k: usize, w: usize, merged: bool) -> i32 {
    let n = history.len();
    if n <= k {
        return 0;
    }
    let drops: Vec<i32> = (k..n)
        .map(|i| {
            let d = |sb: usize| history[i - k][sb] as i32 - history[i][sb] as i32;
            if merged {
                (0..history[i].len()).map(d).max().unwrap()
            } else {
                d(subband)
            }
        })
        .collect();
    let lo = drops.len().saturating_sub(w);
    drops[lo..].iter().copied().max().unwrap_or(0)
}

pub fn report(seq: usize, period: f64, delay: f64, cqi: Vec<u8>) -> CqiReport {
    let measured_at = seq as f64 * period;
    CqiReport {
        measured_at,
        delivered_at: measured_at + delay,
        subband_cqi: cqi,
    }
}

/// Feeds `pushes` random reports into a history with lag count `k` and
/// window `w`, comparing every lag maximum to the brute force after each
/// report. Returns the number of comparisons made.
pub fn check_sliding_max(k: usize, w: usize, pushes: usize, subbands: usize, mode: HistoryMode, seed: u64) -> usize {
    let period = 5e-3;
    // Δt_max = t_sch_delay + T + t_cqi_delay lands in ((k-1)T, kT]
    let timing = TimingConfig {
        t_sch_delay: if k == 1 { 0.0 } else { (k as f64 - 1.0) * period - 5e-5 },
        t_cqi_delay: 0.0,
        t_cqi_period: period,
    };
    let mut h = CqiHistory::new(timing, mode, subbands, w);
    assert_eq!(h.max_lag(), k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hist: Vec<Vec<u8>> = Vec::new();
    let mut checks = 0;
    for i in 0..pushes {
        let cqi: Vec<u8> = (0..subbands).map(|_| rng.random_range(0..=15u8)).collect();
        h.on_report(&report(i, period, timing.t_cqi_delay, cqi.clone()))
            .unwrap();
        hist.push(cqi);
        for sb in 0..subbands {
            let got = h.lag_maxima(sb);
            for lag in 1..=k {
                let want = brute_delta(&hist, sb, lag, w, mode == HistoryMode::Merged);
                assert_eq!(got[lag - 1], want, "k={k} w={w} push={i} sb={sb} lag={lag}");
                checks += 1;
            }
        }
    }
    checks
}

/// Best TB over every prefix of the best-first order, evaluated through
/// `select_mcs` on the CQI-implied SNRs.
pub fn prefix_oracle(phy: &PhyTables, rbs: &[(usize, u8)]) -> (usize, Option<u8>, u64) {
    let mut order = rbs.to_vec();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut best = (0, None, 0);
    for k in 1..=order.len() {
        let snrs: Vec<f64> = order[..k].iter().map(|&(_, c)| phy.cqi_to_snr_db(c)).collect();
        if let Some(m) = phy.select_mcs(&snrs).unwrap() {
            let tb = phy.tb_bits(m, k);
            if tb > best.2 {
                best = (k, Some(m), tb);
            }
        }
    }
    best
}

/// Runs the prefix oracle against `max_tb_subset` on `cases` random
/// instances; panics on the first mismatch.
pub fn check_prefix_search(phy: &PhyTables, cases: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cases {
        let n = rng.random_range(1..=12);
        let rbs: Vec<(usize, u8)> = (0..n).map(|i| (i * 3 + 1, rng.random_range(0..=15u8))).collect();
        let got = max_tb_subset(phy, &rbs);
        let (k, mcs, tb) = prefix_oracle(phy, &rbs);
        assert_eq!(got.tb_bits, tb, "{rbs:?}");
        assert_eq!(got.mcs, mcs, "{rbs:?}");
        assert_eq!(got.rbs.len(), k, "{rbs:?}");
    }
}
