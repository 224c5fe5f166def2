//! Tapped-delay-line Rayleigh fading.
//!
//! Every tap is an independent sum-of-sinusoids process
//!
//! ```text
//! g_k(t) = sqrt(p_k / N) * sum_n exp(j (2π f_d cos(α_n) t + φ_n))
//! ```
//!
//! with angles of arrival stratified over the circle (`α_n = 2π (n + u_n) / N`)
//! and uniform phases. Equal amplitudes make the long-run power of each tap
//! exactly `p_k`, and the stratified angles make the time autocorrelation of
//! the complex gain follow `J0(2π f_d τ)` closely. The process has O(1) random
//! access in `t`, so it is a pure function of `(seed, profile, doppler, t)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub const DEFAULT_SINUSOIDS: usize = 32;

const FLAT_TAPS: &str = include_str!("../data/flat.taps");
const EPA_TAPS: &str = include_str!("../data/epa.taps");
const EVA_TAPS: &str = include_str!("../data/eva.taps");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProfileKind {
    Flat,
    Epa,
    Eva,
}

impl ProfileKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProfileKind::Flat => "FLAT",
            ProfileKind::Epa => "EPA",
            ProfileKind::Eva => "EVA",
        }
    }
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProfileKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "FLAT" => Ok(ProfileKind::Flat),
            "EPA" => Ok(ProfileKind::Epa),
            "EVA" => Ok(ProfileKind::Eva),
            _ => Err(format!("unknown fading profile `{s}` (expected FLAT, EPA or EVA)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub delay_s: f64,
    /// Linear mean power; sums to one over a normalized profile.
    pub mean_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FadingProfile {
    pub kind: ProfileKind,
    pub taps: Vec<Tap>,
}

impl FadingProfile {
    /// Builds a profile from raw taps: powers are normalized to unit sum.
    /// Delays must start at zero and be strictly increasing.
    pub fn new(kind: ProfileKind, taps: Vec<Tap>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::EmptyProfile);
        }
        if taps[0].delay_s != 0.0 {
            return Err(Error::TapFile {
                line: 0,
                msg: "first tap delay must be 0".into(),
            });
        }
        if taps.windows(2).any(|w| w[1].delay_s <= w[0].delay_s) {
            return Err(Error::TapFile {
                line: 0,
                msg: "tap delays must be strictly increasing".into(),
            });
        }
        if taps.iter().any(|t| t.mean_power <= 0.0 || !t.mean_power.is_finite()) {
            return Err(Error::TapFile {
                line: 0,
                msg: "tap powers must be positive and finite".into(),
            });
        }
        let total: f64 = taps.iter().map(|t| t.mean_power).sum();
        let taps = taps
            .into_iter()
            .map(|t| Tap {
                delay_s: t.delay_s,
                mean_power: t.mean_power / total,
            })
            .collect();
        Ok(Self { kind, taps })
    }

    /// Parses the tap file format: one `delay_ns relative_power_db` pair per
    /// line, `#` starts a comment.
    pub fn parse(kind: ProfileKind, text: &str) -> Result<Self> {
        let mut taps = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::TapFile { line: i + 1, msg };
            let mut fields = line.split_whitespace();
            let (Some(delay), Some(power), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(bad(format!("expected `delay_ns power_db`, got `{line}`")));
            };
            let delay_ns: f64 = delay.parse().map_err(|_| bad(format!("bad delay `{delay}`")))?;
            let power_db: f64 = power.parse().map_err(|_| bad(format!("bad power `{power}`")))?;
            taps.push(Tap {
                delay_s: delay_ns * 1e-9,
                mean_power: 10f64.powf(power_db / 10.0),
            });
        }
        Self::new(kind, taps)
    }

    pub fn builtin(kind: ProfileKind) -> Self {
        let text = match kind {
            ProfileKind::Flat => FLAT_TAPS,
            ProfileKind::Epa => EPA_TAPS,
            ProfileKind::Eva => EVA_TAPS,
        };
        Self::parse(kind, text).expect("bundled tap files are valid")
    }
}

/// Radio grid numerology.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub subcarrier_hz: f64,
    pub rb_subcarriers: usize,
    pub num_rbs: usize,
    pub symbol_s: f64,
    pub minislot_symbols: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 2e9,
            bandwidth_hz: 20e6,
            subcarrier_hz: 15e3,
            rb_subcarriers: 12,
            num_rbs: 100,
            symbol_s: 71.4e-6,
            minislot_symbols: 2,
        }
    }
}

impl GridConfig {
    pub fn minislot_s(&self) -> f64 {
        self.minislot_symbols as f64 * self.symbol_s
    }

    pub fn rb_width_hz(&self) -> f64 {
        self.rb_subcarriers as f64 * self.subcarrier_hz
    }

    /// Baseband frequency of the centre of `rb`, measured from the band edge.
    pub fn rb_center_hz(&self, rb: usize) -> f64 {
        (rb as f64 + 0.5) * self.rb_width_hz()
    }

    pub fn occupied_hz(&self) -> f64 {
        self.num_rbs as f64 * self.rb_width_hz()
    }
}

/// Maximum Doppler shift for a terminal moving at `speed_kmph`.
pub fn doppler_hz(speed_kmph: f64, carrier_hz: f64) -> f64 {
    speed_kmph / 3.6 * carrier_hz / SPEED_OF_LIGHT
}

#[derive(Debug, Clone)]
pub struct FadingProcess {
    profile: FadingProfile,
    doppler_hz: f64,
    num_sinusoids: usize,
    // Flattened [tap][sinusoid] oscillator tables.
    omega: Vec<f64>,
    phase: Vec<f64>,
    // Per-tap amplitude sqrt(p_k / N).
    amplitude: Vec<f64>,
}

impl FadingProcess {
    pub fn profile(&self) -> &FadingProfile {
        &self.profile
    }

    pub fn doppler_hz(&self) -> f64 {
        self.doppler_hz
    }

    pub fn num_sinusoids(&self) -> usize {
        self.num_sinusoids
    }

    pub fn num_taps(&self) -> usize {
        self.profile.taps.len()
    }

    /// Complex gain of every tap at time `t`, written into `out`.
    pub fn tap_gains_into(&self, t: f64, out: &mut [Complex64]) {
        let n = self.num_sinusoids;
        for (k, g) in out.iter_mut().enumerate().take(self.num_taps()) {
            let omega = &self.omega[k * n..(k + 1) * n];
            let phase = &self.phase[k * n..(k + 1) * n];
            let (mut re, mut im) = (0.0, 0.0);
            for (w, p) in omega.iter().zip(phase) {
                let (s, c) = (w * t + p).sin_cos();
                re += c;
                im += s;
            }
            *g = Complex64::new(re, im) * self.amplitude[k];
        }
    }

    pub fn tap_gains(&self, t: f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.num_taps()];
        self.tap_gains_into(t, &mut out);
        out
    }

    /// Channel transfer function `H(f, t) = Σ_k g_k(t) exp(-j 2π f τ_k)`.
    pub fn transfer(&self, freq_hz: f64, t: f64) -> Complex64 {
        self.tap_gains(t)
            .iter()
            .zip(&self.profile.taps)
            .map(|(g, tap)| g * Complex64::from_polar(1.0, -2.0 * PI * freq_hz * tap.delay_s))
            .sum()
    }
}

/// Builds a seeded fading process with [`DEFAULT_SINUSOIDS`] oscillators per tap.
pub fn make_process(profile: FadingProfile, doppler_hz: f64, seed: u64) -> Result<FadingProcess> {
    make_process_with(profile, doppler_hz, seed, DEFAULT_SINUSOIDS)
}

pub fn make_process_with(
    profile: FadingProfile,
    doppler_hz: f64,
    seed: u64,
    num_sinusoids: usize,
) -> Result<FadingProcess> {
    if profile.taps.is_empty() {
        return Err(Error::EmptyProfile);
    }
    assert!(doppler_hz >= 0.0, "doppler must be non-negative");
    assert!(num_sinusoids > 0, "need at least one sinusoid per tap");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = num_sinusoids;
    let taps = profile.taps.len();
    let mut omega = Vec::with_capacity(taps * n);
    let mut phase = Vec::with_capacity(taps * n);
    for _ in 0..taps {
        for i in 0..n {
            let u: f64 = rng.random();
            let alpha = 2.0 * PI * (i as f64 + u) / n as f64;
            omega.push(2.0 * PI * doppler_hz * alpha.cos());
            phase.push(2.0 * PI * rng.random::<f64>());
        }
    }
    let amplitude = profile.taps.iter().map(|t| (t.mean_power / n as f64).sqrt()).collect();
    Ok(FadingProcess {
        profile,
        doppler_hz,
        num_sinusoids: n,
        omega,
        phase,
        amplitude,
    })
}

/// Evaluates per-RB SNR for one process on one grid.
///
/// The per-(RB, tap) phase rotations are computed once, so an evaluation
/// costs one tap-gain sweep plus `num_rbs * num_taps` complex multiplies.
#[derive(Debug, Clone)]
pub struct RbChannel {
    process: FadingProcess,
    // [rb][tap] rotation exp(-j 2π f_rb τ_k).
    rotation: Vec<Complex64>,
    num_rbs: usize,
    gains: Vec<Complex64>,
}

impl RbChannel {
    pub fn new(process: FadingProcess, grid: &GridConfig) -> Self {
        let taps = process.num_taps();
        let mut rotation = Vec::with_capacity(grid.num_rbs * taps);
        for rb in 0..grid.num_rbs {
            let f = grid.rb_center_hz(rb);
            for tap in &process.profile.taps {
                rotation.push(Complex64::from_polar(1.0, -2.0 * PI * f * tap.delay_s));
            }
        }
        Self {
            gains: vec![Complex64::new(0.0, 0.0); taps],
            process,
            rotation,
            num_rbs: grid.num_rbs,
        }
    }

    pub fn process(&self) -> &FadingProcess {
        &self.process
    }

    pub fn num_rbs(&self) -> usize {
        self.num_rbs
    }

    /// Per-RB channel power `|H(f_rb, t)|²` (linear, unit long-run mean).
    pub fn power_into(&mut self, t: f64, out: &mut [f64]) {
        self.process.tap_gains_into(t, &mut self.gains);
        let taps = self.gains.len();
        for (rb, p) in out.iter_mut().enumerate().take(self.num_rbs) {
            let h: Complex64 = self.rotation[rb * taps..(rb + 1) * taps]
                .iter()
                .zip(&self.gains)
                .map(|(r, g)| r * g)
                .sum();
            *p = h.norm_sqr();
        }
    }

    /// Per-RB SNR in dB around `geometry_db`.
    pub fn snr_db_into(&mut self, t: f64, geometry_db: f64, out: &mut [f64]) {
        self.power_into(t, out);
        for v in out.iter_mut() {
            *v = geometry_db + 10.0 * v.log10();
        }
    }
}

/// Per-RB SNR (dB) at time `t`: `geometry_db + 10 log10 |H(f_rb, t)|²`,
/// sampled at each RB's centre subcarrier.
pub fn snr_per_rb(process: &FadingProcess, grid: &GridConfig, t: f64, geometry_db: f64) -> Vec<f64> {
    let mut ch = RbChannel::new(process.clone(), grid);
    let mut out = vec![0.0; grid.num_rbs];
    ch.snr_db_into(t, geometry_db, &mut out);
    out
}
