//! Simulation configuration: flat `key = value` files with `#` comments,
//! layered as defaults < file < overrides.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::channel::{doppler_hz, GridConfig, ProfileKind, DEFAULT_SINUSOIDS};
use crate::cqi_reporting::ReportingConfig;
use crate::link_adapt::{HistoryMode, TimingConfig};
use crate::phy::{McsTable, PhyTables, DEFAULT_BLER_SLOPE, DEFAULT_TARGET_BLER};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{key}`")]
    UnknownKey { key: String },

    #[error("config key `{key}`: cannot read `{value}` as {expected}")]
    TypeMismatch {
        key: String,
        value: String,
        expected: &'static str,
    },

    #[error("config key `{key}`: {msg}")]
    Constraint { key: String, msg: String },

    #[error("config line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },

    #[error("cannot read config file {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    /// MCS from the last reported CQIs.
    LastCqi,
    /// Last CQIs corrected by the worst degradation seen over `wnd` reports.
    Conservative,
    /// Always MCS 0 on the best reported RBs.
    Mcs0Best,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::LastCqi, Policy::Conservative, Policy::Mcs0Best];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::LastCqi => "last_cqi",
            Policy::Conservative => "conservative",
            Policy::Mcs0Best => "mcs0_best",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "last_cqi" => Ok(Policy::LastCqi),
            "conservative" => Ok(Policy::Conservative),
            "mcs0_best" => Ok(Policy::Mcs0Best),
            _ => Err(format!("unknown policy `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub grid: GridConfig,
    /// Share of a mini-slot's resource elements carrying user data.
    pub data_fraction: f64,
    pub t_cqi_ms: f64,
    pub t_cqi_delay_slots: u32,
    pub subband_rbs: usize,
    pub t_sch_delay_slots: u32,
    /// Initial transmission end to retransmission start, mini-slots.
    pub harq_gap_slots: u32,
    pub max_retx: u32,
    pub profile: ProfileKind,
    pub speed_kmph: f64,
    pub num_sinusoids: usize,
    pub geometry_db: f64,
    pub policy: Policy,
    /// Observation window in reporting periods.
    pub wnd: u32,
    pub cqi_mode: HistoryMode,
    pub target_bler: f64,
    pub bler_slope: f64,
    pub packet_bits: u64,
    pub interarrival_ms: f64,
    pub delay_budget_ms: f64,
    pub duration_s: f64,
    pub seeds: Vec<u64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            data_fraction: 0.75,
            t_cqi_ms: 5.0,
            t_cqi_delay_slots: 2,
            subband_rbs: 8,
            t_sch_delay_slots: 1,
            harq_gap_slots: 3,
            max_retx: 1,
            profile: ProfileKind::Eva,
            speed_kmph: 60.0,
            num_sinusoids: DEFAULT_SINUSOIDS,
            geometry_db: 10.0,
            policy: Policy::Conservative,
            wnd: 100,
            cqi_mode: HistoryMode::PerSubband,
            target_bler: DEFAULT_TARGET_BLER,
            bler_slope: DEFAULT_BLER_SLOPE,
            packet_bits: 256,
            interarrival_ms: 3.0,
            delay_budget_ms: 1.0,
            duration_s: 30.0,
            seeds: vec![1],
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str, expected: &'static str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::TypeMismatch {
        key: key.to_string(),
        value: value.to_string(),
        expected,
    })
}

fn parse_enum<T: FromStr>(key: &str, value: &str, expected: &'static str) -> Result<T, ConfigError> {
    parse(key, value, expected)
}

fn constraint(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Constraint {
        key: key.to_string(),
        msg: msg.into(),
    }
}

impl SimConfig {
    pub const KEYS: [&'static str; 30] = [
        "carrier_hz",
        "bandwidth_hz",
        "subcarrier_hz",
        "rb_subcarriers",
        "num_rbs",
        "symbol_s",
        "minislot_symbols",
        "data_fraction",
        "t_cqi_ms",
        "t_cqi_delay_slots",
        "subband_rbs",
        "t_sch_delay_slots",
        "harq_gap_slots",
        "max_retx",
        "profile",
        "speed_kmph",
        "num_sinusoids",
        "geometry_db",
        "policy",
        "wnd",
        "cqi_mode",
        "target_bler",
        "bler_slope",
        "packet_bits",
        "interarrival_ms",
        "delay_budget_ms",
        "duration_s",
        "seeds",
        // aliases accepted on input
        "seed",
        "t_cqi_period_ms",
    ];

    /// Sets one key from its textual value. Constraints are checked by
    /// [`SimConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "carrier_hz" => self.grid.carrier_hz = parse(key, v, "a number")?,
            "bandwidth_hz" => self.grid.bandwidth_hz = parse(key, v, "a number")?,
            "subcarrier_hz" => self.grid.subcarrier_hz = parse(key, v, "a number")?,
            "rb_subcarriers" => self.grid.rb_subcarriers = parse(key, v, "an integer")?,
            "num_rbs" => self.grid.num_rbs = parse(key, v, "an integer")?,
            "symbol_s" => self.grid.symbol_s = parse(key, v, "a number")?,
            "minislot_symbols" => self.grid.minislot_symbols = parse(key, v, "an integer")?,
            "data_fraction" => self.data_fraction = parse(key, v, "a number")?,
            "t_cqi_ms" | "t_cqi_period_ms" => self.t_cqi_ms = parse(key, v, "a number")?,
            "t_cqi_delay_slots" => self.t_cqi_delay_slots = parse(key, v, "an integer")?,
            "subband_rbs" => self.subband_rbs = parse(key, v, "an integer")?,
            "t_sch_delay_slots" => self.t_sch_delay_slots = parse(key, v, "an integer")?,
            "harq_gap_slots" => self.harq_gap_slots = parse(key, v, "an integer")?,
            "max_retx" => self.max_retx = parse(key, v, "an integer")?,
            "profile" => self.profile = parse_enum(key, v, "FLAT, EPA or EVA")?,
            "speed_kmph" => self.speed_kmph = parse(key, v, "a number")?,
            "num_sinusoids" => self.num_sinusoids = parse(key, v, "an integer")?,
            "geometry_db" => self.geometry_db = parse(key, v, "a number")?,
            "policy" => self.policy = parse_enum(key, v, "last_cqi, conservative or mcs0_best")?,
            "wnd" => self.wnd = parse(key, v, "an integer")?,
            "cqi_mode" => self.cqi_mode = parse_enum(key, v, "per_subband or merged")?,
            "target_bler" => self.target_bler = parse(key, v, "a number")?,
            "bler_slope" => self.bler_slope = parse(key, v, "a number")?,
            "packet_bits" => self.packet_bits = parse(key, v, "an integer")?,
            "interarrival_ms" => self.interarrival_ms = parse(key, v, "a number")?,
            "delay_budget_ms" => self.delay_budget_ms = parse(key, v, "a number")?,
            "duration_s" => self.duration_s = parse(key, v, "a number")?,
            "seeds" | "seed" => {
                self.seeds = v
                    .split(',')
                    .map(|s| parse(key, s.trim(), "a comma-separated list of integers"))
                    .collect::<Result<_, _>>()?
            }
            _ => return Err(ConfigError::UnknownKey { key: key.to_string() }),
        }
        Ok(())
    }

    /// Canonical `(key, value)` listing; feeding it back through
    /// [`SimConfig::set`] reproduces `self`.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let g = &self.grid;
        let seeds = self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        vec![
            ("carrier_hz", g.carrier_hz.to_string()),
            ("bandwidth_hz", g.bandwidth_hz.to_string()),
            ("subcarrier_hz", g.subcarrier_hz.to_string()),
            ("rb_subcarriers", g.rb_subcarriers.to_string()),
            ("num_rbs", g.num_rbs.to_string()),
            ("symbol_s", g.symbol_s.to_string()),
            ("minislot_symbols", g.minislot_symbols.to_string()),
            ("data_fraction", self.data_fraction.to_string()),
            ("t_cqi_ms", self.t_cqi_ms.to_string()),
            ("t_cqi_delay_slots", self.t_cqi_delay_slots.to_string()),
            ("subband_rbs", self.subband_rbs.to_string()),
            ("t_sch_delay_slots", self.t_sch_delay_slots.to_string()),
            ("harq_gap_slots", self.harq_gap_slots.to_string()),
            ("max_retx", self.max_retx.to_string()),
            ("profile", self.profile.to_string()),
            ("speed_kmph", self.speed_kmph.to_string()),
            ("num_sinusoids", self.num_sinusoids.to_string()),
            ("geometry_db", self.geometry_db.to_string()),
            ("policy", self.policy.to_string()),
            ("wnd", self.wnd.to_string()),
            ("cqi_mode", self.cqi_mode.as_str().to_string()),
            ("target_bler", self.target_bler.to_string()),
            ("bler_slope", self.bler_slope.to_string()),
            ("packet_bits", self.packet_bits.to_string()),
            ("interarrival_ms", self.interarrival_ms.to_string()),
            ("delay_budget_ms", self.delay_budget_ms.to_string()),
            ("duration_s", self.duration_s.to_string()),
            ("seeds", seeds),
        ]
    }

    /// Applies a config file's text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: line.to_string(),
                });
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn parse_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.grid;
        let positive = [
            ("carrier_hz", g.carrier_hz),
            ("bandwidth_hz", g.bandwidth_hz),
            ("subcarrier_hz", g.subcarrier_hz),
            ("symbol_s", g.symbol_s),
            ("t_cqi_ms", self.t_cqi_ms),
            ("interarrival_ms", self.interarrival_ms),
            ("delay_budget_ms", self.delay_budget_ms),
            ("bler_slope", self.bler_slope),
        ];
        for (key, v) in positive {
            if v <= 0.0 || !v.is_finite() {
                return Err(constraint(key, format!("must be positive, got {v}")));
            }
        }
        if self.duration_s < 0.0 || !self.duration_s.is_finite() {
            return Err(constraint("duration_s", "must be non-negative"));
        }
        for (key, v) in [
            ("rb_subcarriers", g.rb_subcarriers),
            ("num_rbs", g.num_rbs),
            ("minislot_symbols", g.minislot_symbols),
            ("subband_rbs", self.subband_rbs),
            ("num_sinusoids", self.num_sinusoids),
        ] {
            if v == 0 {
                return Err(constraint(key, "must be at least 1"));
            }
        }
        if g.occupied_hz() > g.bandwidth_hz {
            return Err(constraint(
                "num_rbs",
                format!(
                    "{} Hz of RBs exceed the {} Hz bandwidth",
                    g.occupied_hz(),
                    g.bandwidth_hz
                ),
            ));
        }
        if !(self.data_fraction > 0.0 && self.data_fraction <= 1.0) {
            return Err(constraint("data_fraction", "must be in (0, 1]"));
        }
        if self.speed_kmph < 0.0 || !self.speed_kmph.is_finite() {
            return Err(constraint("speed_kmph", "must be non-negative"));
        }
        if !(self.target_bler > 0.0 && self.target_bler < 1.0) {
            return Err(constraint("target_bler", "must be in (0, 1)"));
        }
        if !self.geometry_db.is_finite() {
            return Err(constraint("geometry_db", "must be finite"));
        }
        if self.wnd == 0 {
            return Err(constraint("wnd", "must be at least 1"));
        }
        if self.packet_bits == 0 {
            return Err(constraint("packet_bits", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(constraint("seeds", "need at least one seed"));
        }
        if self.harq_gap_slots < self.t_sch_delay_slots + 1 {
            return Err(constraint(
                "harq_gap_slots",
                "must leave room for the scheduling delay (≥ t_sch_delay_slots + 1)",
            ));
        }
        if self.slot_ns() == 0 {
            return Err(constraint("symbol_s", "mini-slot shorter than 1 ns"));
        }
        if self.t_cqi_ns() == 0 {
            return Err(constraint("t_cqi_ms", "period shorter than 1 ns"));
        }
        if self.delay_budget_ticks() == 0 {
            return Err(constraint("delay_budget_ms", "delay budget shorter than one mini-slot"));
        }
        Ok(())
    }

    /// Mini-slot duration, integer nanoseconds.
    pub fn slot_ns(&self) -> u64 {
        (self.grid.minislot_s() * 1e9).round() as u64
    }

    pub fn t_cqi_ns(&self) -> u64 {
        (self.t_cqi_ms * 1e6).round() as u64
    }

    pub fn interarrival_ns(&self) -> u64 {
        (self.interarrival_ms * 1e6).round() as u64
    }

    pub fn duration_ns(&self) -> u64 {
        (self.duration_s * 1e9).round() as u64
    }

    /// Whole mini-slots in the delay budget.
    pub fn delay_budget_ticks(&self) -> u64 {
        (self.delay_budget_ms * 1e6 / self.slot_ns() as f64 + 1e-9).floor() as u64
    }

    pub fn doppler_hz(&self) -> f64 {
        doppler_hz(self.speed_kmph, self.grid.carrier_hz)
    }

    /// User-data resource elements per RB and mini-slot.
    pub fn data_re_per_rb(&self) -> f64 {
        self.grid.rb_subcarriers as f64 * self.grid.minislot_symbols as f64 * self.data_fraction
    }

    pub fn phy_tables(&self) -> PhyTables {
        PhyTables::new(
            McsTable::builtin(),
            self.bler_slope,
            self.target_bler,
            self.data_re_per_rb(),
        )
    }

    // times derive from the integer-ns clock so report arithmetic matches
    // the event loop exactly
    pub fn reporting(&self) -> ReportingConfig {
        let slot = self.slot_ns() as f64 * 1e-9;
        ReportingConfig {
            t_cqi_period: self.t_cqi_ns() as f64 * 1e-9,
            t_cqi_delay: self.t_cqi_delay_slots as f64 * slot,
            subband_rbs: self.subband_rbs,
        }
    }

    pub fn timing(&self) -> TimingConfig {
        let slot = self.slot_ns() as f64 * 1e-9;
        TimingConfig {
            t_sch_delay: self.t_sch_delay_slots as f64 * slot,
            t_cqi_delay: self.t_cqi_delay_slots as f64 * slot,
            t_cqi_period: self.t_cqi_ns() as f64 * 1e-9,
        }
    }

    pub fn num_subbands(&self) -> usize {
        self.grid.num_rbs.div_ceil(self.subband_rbs)
    }
}

impl fmt::Display for SimConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.entries() {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Layered resolution: defaults, then the file (if any), then `overrides`
/// in order. The result is validated.
pub fn parse_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<SimConfig, ConfigError> {
    let mut cfg = SimConfig::default();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Io {
            path: p.display().to_string(),
            msg: e.to_string(),
        })?;
        cfg.apply_text(&text)?;
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}
