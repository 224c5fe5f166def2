//! Parameter sweeps over independent seeded runs, and their CSV form.
//!
//! Each cell of the grid is an independent run, so cells are spread over a
//! rayon pool. Output rows always follow cell order regardless of which
//! worker finished first, which keeps the CSV byte-identical across thread
//! counts.

use std::io::{Read, Write};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::channel::ProfileKind;
use crate::config::{Policy, SimConfig};
use crate::engine::{run, Metrics};
use crate::{Error, Result};

/// Value of the leading `schema` column; bump when columns change.
pub const SCHEMA: &str = "urllc-la-sweep/1";

pub const COLUMNS: [&str; 13] = [
    "schema",
    "config_hash",
    "profile",
    "policy",
    "geometry_db",
    "wnd",
    "t_cqi_ms",
    "speed_kmph",
    "seed",
    "plr",
    "avg_mcs",
    "rb_usage",
    "packets",
];

/// Values taken by each swept parameter. Everything else comes from the
/// base configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxes {
    pub profiles: Vec<ProfileKind>,
    pub policies: Vec<Policy>,
    pub geometries_db: Vec<f64>,
    pub wnds: Vec<u32>,
    pub t_cqi_ms: Vec<f64>,
    pub speeds_kmph: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl SweepAxes {
    /// A single cell per seed at the base configuration.
    pub fn from_base(cfg: &SimConfig) -> Self {
        Self {
            profiles: vec![cfg.profile],
            policies: vec![cfg.policy],
            geometries_db: vec![cfg.geometry_db],
            wnds: vec![cfg.wnd],
            t_cqi_ms: vec![cfg.t_cqi_ms],
            speeds_kmph: vec![cfg.speed_kmph],
            seeds: cfg.seeds.clone(),
        }
    }

    /// Cell configurations in output order. The window only matters to
    /// the conservative policy, so other policies get one cell per point
    /// instead of one per window.
    pub fn cells(&self, base: &SimConfig) -> Vec<(SimConfig, u64)> {
        let mut out = Vec::new();
        for &profile in &self.profiles {
            for &policy in &self.policies {
                for &geometry_db in &self.geometries_db {
                    let wnds: &[u32] = if policy == Policy::Conservative {
                        &self.wnds
                    } else {
                        &self.wnds[..self.wnds.len().min(1)]
                    };
                    for &wnd in wnds {
                        for &t_cqi_ms in &self.t_cqi_ms {
                            for &speed_kmph in &self.speeds_kmph {
                                let cfg = SimConfig {
                                    profile,
                                    policy,
                                    geometry_db,
                                    wnd,
                                    t_cqi_ms,
                                    speed_kmph,
                                    ..base.clone()
                                };
                                for &seed in &self.seeds {
                                    out.push((cfg.clone(), seed));
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config_hash: String,
    pub profile: ProfileKind,
    pub policy: Policy,
    pub geometry_db: f64,
    /// `None` for policies that keep no history.
    pub wnd: Option<u32>,
    pub t_cqi_ms: f64,
    pub speed_kmph: f64,
    pub seed: u64,
    pub plr: f64,
    pub avg_mcs: f64,
    pub rb_usage: f64,
    pub packets: u64,
}

impl RunRecord {
    pub fn new(cfg: &SimConfig, seed: u64, m: &Metrics) -> Self {
        Self {
            config_hash: config_hash(cfg),
            profile: cfg.profile,
            policy: cfg.policy,
            geometry_db: cfg.geometry_db,
            wnd: (cfg.policy == Policy::Conservative).then_some(cfg.wnd),
            t_cqi_ms: cfg.t_cqi_ms,
            speed_kmph: cfg.speed_kmph,
            seed,
            plr: m.plr(),
            avg_mcs: m.avg_mcs(),
            rb_usage: m.rb_usage(),
            packets: m.arrived,
        }
    }
}

/// Short SHA-256 digest of every setting except the seeds, so runs of the
/// same cell with different seeds share a hash.
pub fn config_hash(cfg: &SimConfig) -> String {
    let mut h = Sha256::new();
    for (k, v) in cfg.entries() {
        if k == "seeds" {
            continue;
        }
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs every cell and returns the records in cell order.
pub fn run_sweep(base: &SimConfig, axes: &SweepAxes) -> Result<Vec<RunRecord>> {
    let cells = axes.cells(base);
    cells
        .par_iter()
        .map(|(cfg, seed)| run(cfg, *seed).map(|m| RunRecord::new(cfg, *seed, &m)))
        .collect()
}

/// `v` rounded to 9 significant digits, printed in its shortest form.
pub fn format_sig9(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    rounded.to_string()
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Csv(e.to_string())
}

pub fn write_csv<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS).map_err(csv_err)?;
    for r in records {
        w.write_record([
            SCHEMA.to_string(),
            r.config_hash.clone(),
            r.profile.to_string(),
            r.policy.to_string(),
            format_sig9(r.geometry_db),
            r.wnd.map_or_else(String::new, |w| w.to_string()),
            format_sig9(r.t_cqi_ms),
            format_sig9(r.speed_kmph),
            r.seed.to_string(),
            format_sig9(r.plr),
            format_sig9(r.avg_mcs),
            format_sig9(r.rb_usage),
            r.packets.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(csv_err)?.clone();
    if header.iter().ne(COLUMNS) {
        return Err(Error::Csv(format!(
            "unexpected header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let line = i + 2;
        let field = |c: usize| row.get(c).unwrap_or("");
        let bad = |c: usize| Error::Csv(format!("line {line}: bad {} `{}`", COLUMNS[c], field(c)));
        if field(0) != SCHEMA {
            return Err(bad(0));
        }
        let num = |c: usize| field(c).parse::<f64>().map_err(|_| bad(c));
        let int = |c: usize| field(c).parse::<u64>().map_err(|_| bad(c));
        out.push(RunRecord {
            config_hash: field(1).to_string(),
            profile: field(2).parse().map_err(|_| bad(2))?,
            policy: field(3).parse().map_err(|_| bad(3))?,
            geometry_db: num(4)?,
            wnd: match field(5) {
                "" => None,
                s => Some(s.parse().map_err(|_| bad(5))?),
            },
            t_cqi_ms: num(6)?,
            speed_kmph: num(7)?,
            seed: int(8)?,
            plr: num(9)?,
            avg_mcs: num(10)?,
            rb_usage: num(11)?,
            packets: int(12)?,
        });
    }
    Ok(out)
}
