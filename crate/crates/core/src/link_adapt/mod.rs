//! Conservative CQI estimation.
//!
//! On every delivered report the history computes, for each lag `k` (in
//! reporting periods), the CQI drop `CQI(t - k·T) - CQI(t)` and pushes it
//! into a per-lag sliding window over the last `W/T_CQI` samples. At
//! scheduling time the report in hand is outdated by
//! `Δt = t_sch + t_sch_delay - t_last_delivered + t_cqi_delay`; the estimate
//! subtracts the worst drop seen at lag `ceil(Δt / T)`:
//!
//! ```text
//! CQI(t_sch) = max(0, CQI_last - ΔCQI(Δt))
//! ```

mod sliding_max;

use std::collections::VecDeque;
use std::str::FromStr;

pub use sliding_max::SlidingMax;

use crate::cqi_reporting::CqiReport;
use crate::phy::MAX_CQI;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HistoryMode {
    /// Independent degradation statistics per subband.
    PerSubband,
    /// One set of statistics fed with the worst subband of every report.
    Merged,
}

impl HistoryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            HistoryMode::PerSubband => "per_subband",
            HistoryMode::Merged => "merged",
        }
    }
}

impl FromStr for HistoryMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "per_subband" => Ok(HistoryMode::PerSubband),
            "merged" => Ok(HistoryMode::Merged),
            _ => Err(format!(
                "unknown CQI history mode `{s}` (expected per_subband or merged)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingConfig {
    pub t_sch_delay: f64,
    pub t_cqi_delay: f64,
    pub t_cqi_period: f64,
}

impl TimingConfig {
    /// Largest possible outdating of the last report.
    pub fn delta_t_max(&self) -> f64 {
        self.t_sch_delay + self.t_cqi_period + self.t_cqi_delay
    }

    /// Number of reports kept in the history, `ceil(Δt_max / T_CQI)`.
    pub fn max_lag(&self) -> usize {
        lag_for(self.delta_t_max(), self.t_cqi_period)
    }
}

/// `ceil(delta_t / period)`, at least 1, with a small tolerance so that an
/// exact multiple of the period maps onto that multiple.
fn lag_for(delta_t: f64, period: f64) -> usize {
    ((delta_t / period) - 1e-9).ceil().max(1.0) as usize
}

#[derive(Debug, Clone)]
struct Entry {
    measured_at: f64,
    cqi: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct CqiHistory {
    timing: TimingConfig,
    mode: HistoryMode,
    num_subbands: usize,
    max_lag: usize,
    // Newest first, at most `max_lag` entries.
    ring: VecDeque<Entry>,
    // PerSubband: [subband * max_lag + (k - 1)]; Merged: [k - 1].
    lags: Vec<SlidingMax>,
    last_delivered: Option<f64>,
    reports_seen: u64,
}

impl CqiHistory {
    /// `window` is the observation window in reports (`W / T_CQI`).
    pub fn new(timing: TimingConfig, mode: HistoryMode, num_subbands: usize, window: usize) -> Self {
        assert!(timing.t_cqi_period > 0.0);
        assert!(timing.delta_t_max() > 0.0);
        let max_lag = timing.max_lag();
        let streams = match mode {
            HistoryMode::PerSubband => num_subbands,
            HistoryMode::Merged => 1,
        };
        Self {
            timing,
            mode,
            num_subbands,
            max_lag,
            ring: VecDeque::with_capacity(max_lag + 1),
            lags: (0..streams * max_lag).map(|_| SlidingMax::new(window)).collect(),
            last_delivered: None,
            reports_seen: 0,
        }
    }

    pub fn timing(&self) -> &TimingConfig {
        &self.timing
    }

    pub fn mode(&self) -> HistoryMode {
        self.mode
    }

    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    pub fn ring_len(&self) -> usize {
        self.ring.len()
    }

    pub fn reports_seen(&self) -> u64 {
        self.reports_seen
    }

    /// Most recent report: delivery time and per-subband CQIs.
    pub fn last_report(&self) -> Option<(f64, &[u8])> {
        Some((self.last_delivered?, self.ring.front()?.cqi.as_slice()))
    }

    fn lag_slot(&self, subband: usize, k: usize) -> usize {
        match self.mode {
            HistoryMode::PerSubband => subband * self.max_lag + (k - 1),
            HistoryMode::Merged => k - 1,
        }
    }

    pub fn on_report(&mut self, report: &CqiReport) -> Result<()> {
        if report.subband_cqi.len() != self.num_subbands {
            return Err(Error::SubbandMismatch {
                got: report.subband_cqi.len(),
                expected: self.num_subbands,
            });
        }
        if let Some(prev) = self.last_delivered {
            if report.delivered_at < prev {
                return Err(Error::OutOfOrderReport {
                    delivered_at: report.delivered_at,
                    previous: prev,
                });
            }
        }

        let period = self.timing.t_cqi_period;
        for k in 1..=self.max_lag {
            let wanted = report.measured_at - k as f64 * period;
            let Some(older) = self
                .ring
                .iter()
                .find(|e| (e.measured_at - wanted).abs() < period * 1e-6)
            else {
                continue;
            };
            let deltas = older
                .cqi
                .iter()
                .zip(&report.subband_cqi)
                .map(|(&o, &n)| o as i32 - n as i32);
            match self.mode {
                HistoryMode::PerSubband => {
                    for (sb, d) in deltas.enumerate() {
                        let slot = self.lag_slot(sb, k);
                        self.lags[slot].push(d);
                    }
                }
                HistoryMode::Merged => {
                    if let Some(d) = deltas.max() {
                        let slot = self.lag_slot(0, k);
                        self.lags[slot].push(d);
                    }
                }
            }
        }

        self.ring.push_front(Entry {
            measured_at: report.measured_at,
            cqi: report.subband_cqi.clone(),
        });
        self.ring.truncate(self.max_lag);
        self.last_delivered = Some(report.delivered_at);
        self.reports_seen += 1;
        Ok(())
    }

    /// Worst observed CQI drop over `delta_t` in `subband` (ignored in merged
    /// mode). Zero while the matching lag window is still empty.
    pub fn delta_cqi(&self, subband: usize, delta_t: f64) -> Result<i32> {
        let max = self.timing.delta_t_max();
        if delta_t.is_nan() || delta_t <= 0.0 || delta_t > max * (1.0 + 1e-9) {
            return Err(Error::DeltaOutOfRange { delta_t, max });
        }
        let k = lag_for(delta_t, self.timing.t_cqi_period).min(self.max_lag);
        Ok(self.lags[self.lag_slot(subband, k)].max().unwrap_or(0))
    }

    /// Outdating of the last report for a decision taken at `t_sch`.
    pub fn outdating(&self, t_sch: f64) -> Result<f64> {
        let last = self.last_delivered.ok_or(Error::NoReport)?;
        Ok(t_sch + self.timing.t_sch_delay - last + self.timing.t_cqi_delay)
    }

    /// Conservative CQI of `subband` for a scheduling decision at `t_sch`.
    pub fn estimate_cqi(&self, subband: usize, t_sch: f64) -> Result<u8> {
        let (_, cqi) = self.last_report().ok_or(Error::NoReport)?;
        let delta = self.delta_cqi(subband, self.outdating(t_sch)?)?;
        Ok(clamp_estimate(cqi[subband], delta))
    }

    /// Current per-lag window maxima for `subband` (0 for empty windows),
    /// lag 1 first.
    pub fn lag_maxima(&self, subband: usize) -> Vec<i32> {
        (1..=self.max_lag)
            .map(|k| self.lags[self.lag_slot(subband, k)].max().unwrap_or(0))
            .collect()
    }
}

/// `max(0, last - delta)`, additionally capped at the top CQI.
pub fn clamp_estimate(last: u8, delta: i32) -> u8 {
    (last as i32 - delta).clamp(0, MAX_CQI as i32) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: f64 = 5e-3;
    const SLOT: f64 = 142.8e-6;

    fn timing() -> TimingConfig {
        TimingConfig {
            t_sch_delay: SLOT,
            t_cqi_delay: 2.0 * SLOT,
            t_cqi_period: T,
        }
    }

    fn report(seq: usize, cqi: &[u8]) -> CqiReport {
        let measured_at = seq as f64 * T;
        CqiReport {
            measured_at,
            delivered_at: measured_at + 2.0 * SLOT,
            subband_cqi: cqi.to_vec(),
        }
    }

    fn feed(h: &mut CqiHistory, seq: &[u8]) {
        for (i, &c) in seq.iter().enumerate() {
            h.on_report(&report(i, &[c])).unwrap();
        }
    }

    #[test]
    fn max_lag_from_timing() {
        // Δt_max = 5 ms + 3 slots → two reporting periods
        assert_eq!(timing().max_lag(), 2);
        let long = TimingConfig {
            t_cqi_period: 10e-3,
            ..timing()
        };
        assert_eq!(long.max_lag(), 2);
        let exact = TimingConfig {
            t_sch_delay: 0.0,
            t_cqi_delay: 0.0,
            t_cqi_period: T,
        };
        assert_eq!(exact.max_lag(), 1);
    }

    #[test]
    fn ring_holds_at_most_k() {
        let mut h = CqiHistory::new(timing(), HistoryMode::PerSubband, 1, 10);
        assert_eq!(h.ring_len(), 0);
        h.on_report(&report(0, &[7])).unwrap();
        assert_eq!(h.ring_len(), 1);
        for i in 1..6 {
            h.on_report(&report(i, &[7])).unwrap();
            assert_eq!(h.ring_len(), (i + 1).min(2));
        }
        assert_eq!(h.last_report().unwrap().1, &[7]);
    }

    #[test]
    fn constant_channel_has_zero_degradation() {
        let mut h = CqiHistory::new(timing(), HistoryMode::PerSubband, 1, 10);
        feed(&mut h, &[7; 30]);
        assert_eq!(h.lag_maxima(0), vec![0, 0]);
        let t = 29.0 * T + 3.0 * SLOT;
        assert_eq!(h.estimate_cqi(0, t).unwrap(), 7);
    }

    #[test]
    fn single_drop_at_lag_one() {
        let mut h = CqiHistory::new(timing(), HistoryMode::PerSubband, 1, 10);
        feed(&mut h, &[9, 4]);
        assert_eq!(h.delta_cqi(0, 0.4 * T).unwrap(), 5);
        // lag 2 has no sample yet
        assert_eq!(h.delta_cqi(0, 1.05 * T).unwrap(), 0);
    }

    #[test]
    fn improving_channel_gives_negative_delta() {
        let mut h = CqiHistory::new(timing(), HistoryMode::PerSubband, 1, 10);
        feed(&mut h, &[3, 5, 7, 9, 11]);
        assert_eq!(h.delta_cqi(0, 0.5 * T).unwrap(), -2);
        assert_eq!(h.delta_cqi(0, 1.05 * T).unwrap(), -4);
    }

    #[test]
    fn alternating_channel() {
        let mut h = CqiHistory::new(timing(), HistoryMode::PerSubband, 1, 10);
        feed(&mut h, &[10, 2, 10, 2, 10, 2]);
        assert_eq!(h.delta_cqi(0, 0.3 * T).unwrap(), 8);
        assert_eq!(h.delta_cqi(0, 1.05 * T).unwrap(), 0);
    }

    #[test]
    fn lag_uses_ceiling() {
        let mut h = CqiHistory::new(timing(), HistoryMode::PerSubband, 1, 10);
        // lag-1 drops are 1, lag-2 drops are 2
        feed(&mut h, &[10, 9, 8, 7]);
        assert_eq!(h.delta_cqi(0, 0.4 * T).unwrap(), 1);
        assert_eq!(h.delta_cqi(0, T).unwrap(), 1);
        assert_eq!(h.delta_cqi(0, T * 1.0001).unwrap(), 2);
    }

    #[test]
    fn delta_range_checked() {
        let h = CqiHistory::new(timing(), HistoryMode::PerSubband, 1, 10);
        assert!(h.delta_cqi(0, 0.0).is_err());
        assert!(h.delta_cqi(0, timing().delta_t_max() * 1.01).is_err());
        assert_eq!(h.delta_cqi(0, timing().delta_t_max()).unwrap(), 0);
    }

    #[test]
    fn estimate_needs_a_report() {
        let h = CqiHistory::new(timing(), HistoryMode::PerSubband, 1, 10);
        assert_eq!(h.estimate_cqi(0, 0.0), Err(Error::NoReport));
    }

    #[test]
    fn out_of_order_delivery_rejected() {
        let mut h = CqiHistory::new(timing(), HistoryMode::PerSubband, 1, 10);
        h.on_report(&report(3, &[5])).unwrap();
        assert!(matches!(
            h.on_report(&report(2, &[5])),
            Err(Error::OutOfOrderReport { .. })
        ));
        assert!(matches!(
            h.on_report(&report(4, &[5, 5])),
            Err(Error::SubbandMismatch { .. })
        ));
    }

    #[test]
    fn estimate_clamps_at_zero() {
        assert_eq!(clamp_estimate(3, 5), 0);
        assert_eq!(clamp_estimate(8, 3), 5);
        assert_eq!(clamp_estimate(14, -4), 15);
        assert_eq!(clamp_estimate(7, 0), 7);
    }

    #[test]
    fn merged_takes_worst_subband() {
        let mut per = CqiHistory::new(timing(), HistoryMode::PerSubband, 2, 10);
        let mut merged = CqiHistory::new(timing(), HistoryMode::Merged, 2, 10);
        for (i, r) in [[9, 9], [8, 3], [8, 6]].iter().enumerate() {
            per.on_report(&report(i, r)).unwrap();
            merged.on_report(&report(i, r)).unwrap();
        }
        assert_eq!(per.delta_cqi(0, 0.5 * T).unwrap(), 1);
        assert_eq!(per.delta_cqi(1, 0.5 * T).unwrap(), 6);
        assert_eq!(merged.delta_cqi(0, 0.5 * T).unwrap(), 6);
        assert_eq!(merged.delta_cqi(1, 0.5 * T).unwrap(), 6);
    }
}
