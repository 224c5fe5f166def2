//! Periodic per-subband CQI measurement at the UE and its delayed delivery.

use crate::phy::{lin_to_db, PhyTables, MAX_CQI};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportingConfig {
    /// Reporting period T_CQI, seconds.
    pub t_cqi_period: f64,
    /// Report generation and transmission delay, seconds.
    pub t_cqi_delay: f64,
    pub subband_rbs: usize,
}

impl ReportingConfig {
    pub fn num_subbands(&self, num_rbs: usize) -> usize {
        num_rbs.div_ceil(self.subband_rbs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CqiReport {
    pub measured_at: f64,
    pub delivered_at: f64,
    pub subband_cqi: Vec<u8>,
}

/// Linear-domain mean of dB values, returned in dB.
pub fn linear_mean_db(values_db: &[f64]) -> f64 {
    let sum: f64 = values_db.iter().map(|v| 10f64.powf(v / 10.0)).sum();
    lin_to_db(sum / values_db.len() as f64)
}

/// Quantizes one SNR snapshot into a report measured at `measured_at`.
pub fn measure(snr_per_rb: &[f64], measured_at: f64, cfg: &ReportingConfig, phy: &PhyTables) -> CqiReport {
    let subband_cqi = snr_per_rb
        .chunks(cfg.subband_rbs)
        .map(|sb| phy.snr_to_cqi(linear_mean_db(sb)))
        .collect::<Vec<_>>();
    debug_assert!(subband_cqi.iter().all(|&c| c <= MAX_CQI));
    CqiReport {
        measured_at,
        delivered_at: measured_at + cfg.t_cqi_delay,
        subband_cqi,
    }
}

/// One measurement instant and the moment its report reaches the gNB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportSlot {
    pub seq: u64,
    pub measure_at: f64,
    pub deliver_at: f64,
}

/// Measurement instants `0, T, 2T, ...` up to and including `sim_end`.
pub fn schedule_reports(cfg: &ReportingConfig, sim_end: f64) -> impl Iterator<Item = ReportSlot> + '_ {
    let period = cfg.t_cqi_period;
    (0u64..)
        .map(move |seq| (seq, seq as f64 * period))
        // tolerate float drift on the last instant
        .take_while(move |&(_, t)| t <= sim_end + period * 1e-9)
        .map(move |(seq, t)| ReportSlot {
            seq,
            measure_at: t,
            deliver_at: t + cfg.t_cqi_delay,
        })
}
