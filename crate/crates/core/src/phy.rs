//! PHY abstraction: MCS ladder, logistic BLER curves, EESM, TB sizing and
//! the SNR to CQI quantizer.

use rand::RngExt;

use crate::{Error, Result};

const MCS_TABLE: &str = include_str!("../data/mcs.table");

/// SNR gap to Shannon capacity at the 50% BLER point, dB.
pub const IMPLEMENTATION_GAP_DB: f64 = 2.0;
pub const DEFAULT_BLER_SLOPE: f64 = 1.5;
pub const DEFAULT_TARGET_BLER: f64 = 0.1;
pub const NUM_CQI: usize = 16;
pub const MAX_CQI: u8 = 15;

// Threshold comparisons are done with this slack so that an SNR sitting
// exactly on a CQI boundary still qualifies for that level's MCS.
const THRESHOLD_SLACK_DB: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McsEntry {
    pub index: u8,
    pub mod_order: u8,
    pub code_rate: f64,
    pub spectral_eff: f64,
    pub snr50_db: f64,
    pub beta: f64,
}

impl McsEntry {
    /// Derives `snr50` (Shannon gap anchoring) and the EESM `beta` from the
    /// modulation order and code rate.
    pub fn new(index: u8, mod_order: u8, code_rate: f64) -> Self {
        let spectral_eff = mod_order as f64 * code_rate;
        let snr50_db = 10.0 * (spectral_eff.exp2() - 1.0).log10() + IMPLEMENTATION_GAP_DB;
        let beta = (spectral_eff.exp2() / 2.0).max(1.0);
        Self {
            index,
            mod_order,
            code_rate,
            spectral_eff,
            snr50_db,
            beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McsTable {
    entries: Vec<McsEntry>,
}

impl McsTable {
    /// Parses `index mod_order code_rate` lines (`#` comments allowed).
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<McsEntry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::McsTable { line: i + 1, msg };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad(format!("expected `index mod_order code_rate`, got `{line}`")));
            }
            let index: u8 = f[0].parse().map_err(|_| bad(format!("bad index `{}`", f[0])))?;
            let mod_order: u8 = f[1]
                .parse()
                .map_err(|_| bad(format!("bad modulation order `{}`", f[1])))?;
            let code_rate: f64 = f[2].parse().map_err(|_| bad(format!("bad code rate `{}`", f[2])))?;
            if index as usize != entries.len() {
                return Err(bad(format!("expected index {}, got {index}", entries.len())));
            }
            if !matches!(mod_order, 2 | 4 | 6) {
                return Err(bad(format!("modulation order {mod_order} not in {{2, 4, 6}}")));
            }
            if !(code_rate > 0.0 && code_rate < 1.0) {
                return Err(bad(format!("code rate {code_rate} outside (0, 1)")));
            }
            let entry = McsEntry::new(index, mod_order, code_rate);
            if let Some(prev) = entries.last() {
                if entry.spectral_eff <= prev.spectral_eff {
                    return Err(bad("spectral efficiency must increase with index".into()));
                }
            }
            entries.push(entry);
        }
        if entries.is_empty() {
            return Err(Error::McsTable {
                line: 0,
                msg: "empty table".into(),
            });
        }
        Ok(Self { entries })
    }

    pub fn builtin() -> Self {
        Self::parse(MCS_TABLE).expect("bundled MCS table is valid")
    }

    pub fn entries(&self) -> &[McsEntry] {
        &self.entries
    }

    pub fn get(&self, index: u8) -> &McsEntry {
        &self.entries[index as usize]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn highest(&self) -> u8 {
        (self.entries.len() - 1) as u8
    }
}

/// Reference MCS for each CQI level; level 0 means out of range.
#[derive(Debug, Clone, PartialEq)]
pub struct CqiMap {
    ref_mcs: [u8; NUM_CQI],
}

impl CqiMap {
    /// Levels 1..=15 map to every other MCS starting at 0, capped at the
    /// table's highest entry.
    pub fn every_other(table: &McsTable) -> Self {
        let mut ref_mcs = [0u8; NUM_CQI];
        for (c, slot) in ref_mcs.iter_mut().enumerate().skip(1) {
            *slot = (2 * (c - 1)).min(table.highest() as usize) as u8;
        }
        Self { ref_mcs }
    }

    /// Reference MCS of `cqi` (≥ 1).
    pub fn ref_mcs(&self, cqi: u8) -> u8 {
        debug_assert!(cqi >= 1);
        self.ref_mcs[cqi as usize]
    }
}

pub fn bler(mcs: &McsEntry, snr_db: f64, slope_per_db: f64) -> f64 {
    // 1/(1+e^x) written to stay accurate in both tails.
    let x = slope_per_db * (snr_db - mcs.snr50_db);
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// EESM compression of per-RB SNRs (dB) into one effective SNR (dB).
pub fn effective_snr(snrs_db: &[f64], beta: f64) -> Result<f64> {
    if snrs_db.is_empty() {
        return Err(Error::EmptySnrList);
    }
    assert!(beta > 0.0);
    let lin: Vec<f64> = snrs_db.iter().map(|s| 10f64.powf(s / 10.0)).collect();
    let min = lin.iter().cloned().fold(f64::INFINITY, f64::min);
    // log-sum-exp around the smallest SNR keeps large SNRs from underflowing.
    let mean: f64 = lin.iter().map(|g| (-(g - min) / beta).exp()).sum::<f64>() / lin.len() as f64;
    let eff = min - beta * mean.ln();
    Ok(10.0 * eff.log10())
}

/// Transport block size in bits: `floor(n_rbs · data_re · mod_order · code_rate)`.
pub fn tb_bits(mcs: &McsEntry, n_rbs: usize, data_re_per_rb: f64) -> u64 {
    (n_rbs as f64 * data_re_per_rb * mcs.mod_order as f64 * mcs.code_rate + 1e-9).floor() as u64
}

/// Bernoulli draw: `true` (success) with probability `1 - p_error`.
pub fn draw_outcome<R: RngExt + ?Sized>(rng: &mut R, p_error: f64) -> bool {
    debug_assert!((0.0..=1.0).contains(&p_error));
    rng.random::<f64>() >= p_error
}

/// Immutable PHY tables shared by every run of one configuration.
#[derive(Debug, Clone)]
pub struct PhyTables {
    mcs: McsTable,
    cqi: CqiMap,
    slope: f64,
    target_bler: f64,
    data_re_per_rb: f64,
    // SNR (dB) at which each MCS hits the target BLER exactly.
    threshold_db: Vec<f64>,
    // SNR (dB) the scheduler assumes for each CQI level.
    cqi_snr_db: [f64; NUM_CQI],
    // [mcs][cqi] EESM weight exp(-γ_cqi / β_mcs).
    weight: Vec<[f64; NUM_CQI]>,
    // [mcs] largest mean weight that still meets the target.
    weight_bound: Vec<f64>,
}

impl PhyTables {
    pub fn new(mcs: McsTable, slope: f64, target_bler: f64, data_re_per_rb: f64) -> Self {
        assert!(target_bler > 0.0 && target_bler < 1.0);
        assert!(slope > 0.0);
        let cqi = CqiMap::every_other(&mcs);
        let offset = (1.0 / target_bler - 1.0).ln() / slope;
        let threshold_db: Vec<f64> = mcs.entries().iter().map(|e| e.snr50_db + offset).collect();

        let mut cqi_snr_db = [0.0; NUM_CQI];
        for c in 1..NUM_CQI {
            cqi_snr_db[c] = threshold_db[cqi.ref_mcs(c as u8) as usize];
        }
        cqi_snr_db[0] = cqi_snr_db[1] - 3.0;

        let weight = mcs
            .entries()
            .iter()
            .map(|e| {
                let mut w = [0.0; NUM_CQI];
                for (c, slot) in w.iter_mut().enumerate() {
                    *slot = (-db_to_lin(cqi_snr_db[c]) / e.beta).exp();
                }
                w
            })
            .collect();
        let weight_bound = mcs
            .entries()
            .iter()
            .zip(&threshold_db)
            .map(|(e, thr)| (-db_to_lin(thr - THRESHOLD_SLACK_DB) / e.beta).exp())
            .collect();

        Self {
            mcs,
            cqi,
            slope,
            target_bler,
            data_re_per_rb,
            threshold_db,
            cqi_snr_db,
            weight,
            weight_bound,
        }
    }

    pub fn mcs_table(&self) -> &McsTable {
        &self.mcs
    }

    pub fn mcs(&self, index: u8) -> &McsEntry {
        self.mcs.get(index)
    }

    pub fn cqi_map(&self) -> &CqiMap {
        &self.cqi
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn target_bler(&self) -> f64 {
        self.target_bler
    }

    pub fn data_re_per_rb(&self) -> f64 {
        self.data_re_per_rb
    }

    pub fn bler(&self, mcs: u8, snr_db: f64) -> f64 {
        bler(self.mcs(mcs), snr_db, self.slope)
    }

    pub fn tb_bits(&self, mcs: u8, n_rbs: usize) -> u64 {
        tb_bits(self.mcs(mcs), n_rbs, self.data_re_per_rb)
    }

    /// SNR at which `mcs` meets the target BLER exactly.
    pub fn threshold_db(&self, mcs: u8) -> f64 {
        self.threshold_db[mcs as usize]
    }

    fn meets_target(&self, mcs: u8, snr_db: f64) -> bool {
        snr_db >= self.threshold_db[mcs as usize] - THRESHOLD_SLACK_DB
    }

    /// Highest MCS whose BLER at the EESM effective SNR of `snrs_db` is within
    /// the target; `None` if MCS 0 already misses it.
    pub fn select_mcs(&self, snrs_db: &[f64]) -> Result<Option<u8>> {
        if snrs_db.is_empty() {
            return Err(Error::EmptySnrList);
        }
        for m in (0..=self.mcs.highest()).rev() {
            let eff = effective_snr(snrs_db, self.mcs(m).beta)?;
            if self.meets_target(m, eff) {
                return Ok(Some(m));
            }
        }
        Ok(None)
    }

    /// Highest CQI level whose reference MCS meets the target at `snr_db`.
    pub fn snr_to_cqi(&self, snr_db: f64) -> u8 {
        (1..=MAX_CQI)
            .rev()
            .find(|&c| self.meets_target(self.cqi.ref_mcs(c), snr_db))
            .unwrap_or(0)
    }

    /// SNR the scheduler assumes for a CQI level: the boundary SNR of its
    /// reference MCS; CQI 0 sits 3 dB below CQI 1.
    pub fn cqi_to_snr_db(&self, cqi: u8) -> f64 {
        self.cqi_snr_db[cqi as usize]
    }

    /// EESM weight of one RB at `cqi` under `mcs`'s beta.
    #[inline]
    pub(crate) fn cqi_weight(&self, mcs: u8, cqi: u8) -> f64 {
        self.weight[mcs as usize][cqi as usize]
    }

    /// Whether a mean EESM weight qualifies `mcs` for the target.
    #[inline]
    pub(crate) fn weight_meets_target(&self, mcs: u8, mean_weight: f64) -> bool {
        mean_weight <= self.weight_bound[mcs as usize]
    }
}

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tables() -> PhyTables {
        PhyTables::new(McsTable::builtin(), DEFAULT_BLER_SLOPE, 0.1, 18.0)
    }

    #[test]
    fn builtin_table_shape() {
        let t = McsTable::builtin();
        assert_eq!(t.len(), 28);
        let e = t.entries();
        assert!((e[0].spectral_eff - 0.188).abs() < 1e-12);
        assert!((e[27].spectral_eff - 5.55).abs() < 1e-9);
        assert!((e[0].snr50_db + 6.6).abs() < 0.05, "{}", e[0].snr50_db);
        for w in e.windows(2) {
            assert!(w[1].spectral_eff > w[0].spectral_eff);
            assert!(w[1].snr50_db > w[0].snr50_db);
        }
        assert!(e.iter().all(|m| m.beta >= 1.0));
        assert_eq!(e[0].beta, 1.0);
        assert!((e[27].beta - 5.55f64.exp2() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn table_parse_errors() {
        assert!(McsTable::parse("").is_err());
        assert!(McsTable::parse("0 3 0.5\n").is_err());
        assert!(McsTable::parse("0 2 1.5\n").is_err());
        assert!(McsTable::parse("1 2 0.5\n").is_err());
        assert!(McsTable::parse("0 2 0.5\n1 2 0.4\n").is_err());
        assert!(matches!(
            McsTable::parse("0 2 0.5\n1 4\n"),
            Err(Error::McsTable { line: 2, .. })
        ));
    }

    #[test]
    fn cqi_map_every_other() {
        let map = CqiMap::every_other(&McsTable::builtin());
        assert_eq!(map.ref_mcs(1), 0);
        assert_eq!(map.ref_mcs(2), 2);
        assert_eq!(map.ref_mcs(14), 26);
        assert_eq!(map.ref_mcs(15), 27);
        for c in 2..=15 {
            assert!(map.ref_mcs(c) > map.ref_mcs(c - 1));
        }
    }

    #[test]
    fn bler_examples() {
        let m = McsTable::builtin().entries()[5];
        assert!((bler(&m, m.snr50_db, 1.5) - 0.5).abs() < 1e-15);
        assert!(bler(&m, 1e6, 1.5) < 1e-300);
        assert!((bler(&m, -1e6, 1.5) - 1.0).abs() < 1e-15);

        let anchored = McsEntry {
            snr50_db: -6.6,
            ..McsTable::builtin().entries()[0]
        };
        let expected = 1.0 / (1.0 + (1.5f64 * 6.6).exp());
        assert!((bler(&anchored, 0.0, 1.5) - expected).abs() < 1e-18);
        assert!((expected - 5.0e-5).abs() < 0.05e-5);
    }

    #[test]
    fn effective_snr_examples() {
        assert_eq!(effective_snr(&[], 1.0), Err(Error::EmptySnrList));
        for x in [-10.0, 0.0, 7.5, 30.0] {
            assert!((effective_snr(&[x], 3.0).unwrap() - x).abs() < 1e-9);
            assert!((effective_snr(&[x, x, x], 0.7).unwrap() - x).abs() < 1e-9);
        }
        let expected = 10.0 * (-(((-10f64).exp() + (-1f64).exp()) / 2.0).ln()).log10();
        let got = effective_snr(&[10.0, 0.0], 1.0).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 2.2866).abs() < 1e-4, "{got}");
    }

    #[test]
    fn effective_snr_survives_high_snr() {
        let got = effective_snr(&[40.0, 45.0], 1.0).unwrap();
        assert!(got.is_finite() && (40.0..=45.0).contains(&got));
    }

    #[test]
    fn tb_bits_examples() {
        let qpsk30 = McsEntry::new(0, 2, 0.30);
        assert_eq!(tb_bits(&qpsk30, 0, 18.0), 0);
        assert_eq!(tb_bits(&qpsk30, 1, 18.0), 10);
        let t = tables();
        assert_eq!(t.tb_bits(0, 1), 3);
        assert_eq!(t.tb_bits(0, 76), 257);
        assert_eq!(t.tb_bits(27, 3), 299);
    }

    #[test]
    fn select_mcs_extremes() {
        let t = tables();
        assert_eq!(t.select_mcs(&[40.0; 4]).unwrap(), Some(27));
        assert_eq!(t.select_mcs(&[-30.0; 4]).unwrap(), None);
        assert!(t.select_mcs(&[]).is_err());
    }

    #[test]
    fn select_mcs_matches_exhaustive_scan() {
        let t = tables();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let snrs: Vec<f64> = (0..4).map(|_| rng.random_range(-12.0..25.0)).collect();
            let oracle = (0..28u8)
                .filter(|&m| {
                    let e = t.mcs(m);
                    bler(e, effective_snr(&snrs, e.beta).unwrap(), 1.5) <= 0.1
                })
                .max();
            assert_eq!(t.select_mcs(&snrs).unwrap(), oracle, "{snrs:?}");
        }
    }

    #[test]
    fn snr_to_cqi_examples() {
        let t = tables();
        assert_eq!(t.snr_to_cqi(-30.0), 0);
        assert_eq!(t.snr_to_cqi(40.0), 15);
        let mut prev = 0;
        for i in 0..=600 {
            let c = t.snr_to_cqi(-20.0 + 0.1 * i as f64);
            assert!(c >= prev);
            prev = c;
        }
        // boundary SNR of a level maps back onto that level
        for c in 1..=15u8 {
            assert_eq!(t.snr_to_cqi(t.cqi_to_snr_db(c)), c);
        }
        assert_eq!(t.snr_to_cqi(t.cqi_to_snr_db(0)), 0);
    }

    #[test]
    fn draw_outcome_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| draw_outcome(&mut rng, 0.0)));
        assert!((0..1000).all(|_| !draw_outcome(&mut rng, 1.0)));
        let n = 1_000_000;
        let fails = (0..n).filter(|_| !draw_outcome(&mut rng, 0.3)).count();
        let rate = fails as f64 / n as f64;
        assert!((rate - 0.3).abs() < 0.002, "{rate}");
    }

    #[test]
    fn cqi_weights_agree_with_eesm() {
        let t = tables();
        for m in [0u8, 13, 14, 20, 27] {
            for c in [0u8, 1, 7, 15] {
                let direct = (-db_to_lin(t.cqi_to_snr_db(c)) / t.mcs(m).beta).exp();
                assert_eq!(t.cqi_weight(m, c), direct);
            }
        }
    }

    proptest! {
        #[test]
        fn effective_snr_bounded_and_symmetric(
            snrs in proptest::collection::vec(-20.0f64..30.0, 1..12),
            beta in 0.5f64..40.0,
        ) {
            let eff = effective_snr(&snrs, beta).unwrap();
            let lo = snrs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = snrs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(eff >= lo - 1e-9 && eff <= hi + 1e-9);
            let mut rev = snrs.clone();
            rev.reverse();
            prop_assert!((effective_snr(&rev, beta).unwrap() - eff).abs() < 1e-9);
            let mut up = snrs.clone();
            up[0] += 1.0;
            prop_assert!(effective_snr(&up, beta).unwrap() >= eff - 1e-12);
        }

        #[test]
        fn bler_monotone(snr in -20.0f64..30.0, d in 0.01f64..5.0, m in 0u8..27) {
            let t = tables();
            prop_assert!(t.bler(m, snr + d) <= t.bler(m, snr));
            prop_assert!(t.bler(m + 1, snr) >= t.bler(m, snr));
        }

        #[test]
        fn select_mcs_stable_under_stronger_rb(
            snrs in proptest::collection::vec(-10.0f64..25.0, 1..8),
            extra in 0.0f64..10.0,
        ) {
            let t = tables();
            let before = t.select_mcs(&snrs).unwrap();
            // an RB above the current effective SNR of every beta
            let top = snrs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + extra;
            let mut more = snrs.clone();
            more.push(top);
            let after = t.select_mcs(&more).unwrap();
            prop_assert!(after >= before);
        }

        #[test]
        fn cqi_self_consistent(snr in -25.0f64..40.0) {
            let t = tables();
            let c = t.snr_to_cqi(snr);
            if c > 0 {
                let m = t.cqi_map().ref_mcs(c);
                prop_assert!(t.bler(m, snr) <= 0.1 * (1.0 + 1e-6));
            }
        }
    }
}
