//! SVG figures from sweep records: one file per fading profile, three
//! stacked panels (PLR, average MCS, RB usage) against geometry. Each curve
//! is one policy/window/period/speed combination; points are seed means with
//! min-max whiskers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use urllc_la::sweep::RunRecord;

pub const PANELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlotSummary {
    pub files: Vec<PathBuf>,
    /// Panels per file.
    pub panels: usize,
    /// Curves summed over files.
    pub curves: usize,
}

/// Seed statistics of one metric at one geometry.
#[derive(Debug, Clone, Copy)]
struct Stat {
    mean: f64,
    lo: f64,
    hi: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Self {
        Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            lo: values.iter().cloned().fold(f64::INFINITY, f64::min),
            hi: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

struct Point {
    x: f64,
    metrics: [Stat; PANELS],
}

struct Curve {
    label: String,
    points: Vec<Point>,
}

// Floats as ordered map keys; every value here is finite.
fn key(v: f64) -> u64 {
    let b = v.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

// (policy, wnd, t_cqi, speed) -> geometry -> records
type Groups<'a> = BTreeMap<(String, u32, u64, u64), BTreeMap<u64, Vec<&'a RunRecord>>>;

fn curves_of(records: &[&RunRecord]) -> Vec<Curve> {
    let distinct = |f: fn(&RunRecord) -> f64| {
        let mut v: Vec<u64> = records.iter().map(|r| key(f(r))).collect();
        v.sort_unstable();
        v.dedup();
        v.len() > 1
    };
    let show_t = distinct(|r| r.t_cqi_ms);
    let show_v = distinct(|r| r.speed_kmph);

    let mut groups: Groups = BTreeMap::new();
    for &r in records {
        let id = (
            r.policy.to_string(),
            r.wnd.unwrap_or(0),
            key(r.t_cqi_ms),
            key(r.speed_kmph),
        );
        groups
            .entry(id)
            .or_default()
            .entry(key(r.geometry_db))
            .or_default()
            .push(r);
    }
    groups
        .into_values()
        .map(|by_x| {
            let first = by_x.values().next().expect("non-empty group")[0];
            let mut label = first.policy.to_string();
            if let Some(w) = first.wnd {
                label += &format!(" W={w}");
            }
            if show_t {
                label += &format!(" T={}ms", first.t_cqi_ms);
            }
            if show_v {
                label += &format!(" {}km/h", first.speed_kmph);
            }
            let points = by_x
                .into_values()
                .map(|rs| {
                    let plr: Vec<f64> = rs
                        .iter()
                        .map(|r| r.plr.max(1.0 / r.packets.max(1) as f64).log10())
                        .collect();
                    let mcs: Vec<f64> = rs.iter().map(|r| r.avg_mcs).collect();
                    let rb: Vec<f64> = rs.iter().map(|r| 100.0 * r.rb_usage).collect();
                    Point {
                        x: rs[0].geometry_db,
                        metrics: [Stat::of(&plr), Stat::of(&mcs), Stat::of(&rb)],
                    }
                })
                .collect();
            Curve { label, points }
        })
        .collect()
}

fn padded(lo: f64, hi: f64, pad_floor: f64) -> (f64, f64) {
    let pad = ((hi - lo) * 0.05).max(pad_floor);
    (lo - pad, hi + pad)
}

fn draw_file(path: &Path, title: &str, curves: &[Curve]) -> Result<(), String> {
    let err = |e: DrawingAreaErrorKind<std::io::Error>| e.to_string();
    let root = SVGBackend::new(path, (900, 1200)).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let root = root.titled(title, ("sans-serif", 24)).map_err(err)?;
    let areas = root.split_evenly((PANELS, 1));

    let xs = curves.iter().flat_map(|c| c.points.iter().map(|p| p.x));
    let (x_lo, x_hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (x_lo, x_hi) = padded(x_lo, x_hi, 0.5);

    type Spec = (&'static str, fn(&f64) -> String);
    let specs: [Spec; PANELS] = [
        ("PLR", |v| format!("1e{v:.0}")),
        ("average MCS", |v| format!("{v:.0}")),
        ("RB usage (%)", |v| format!("{v:.2}")),
    ];
    for (panel, (area, (y_desc, fmt))) in areas.iter().zip(specs).enumerate() {
        let stats = curves.iter().flat_map(|c| c.points.iter().map(|p| p.metrics[panel]));
        let (mut y_lo, mut y_hi) = stats.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| {
            (a.min(s.lo), b.max(s.hi))
        });
        if panel == 0 {
            // whole decades, top at PLR = 1
            y_lo = y_lo.floor().min(-1.0);
            y_hi = 0.0;
        } else {
            // both metrics are non-negative; anchor the axis at zero
            y_hi = padded(0.0, y_hi, 0.5).1;
            y_lo = 0.0;
        }
        let mut chart = ChartBuilder::on(area)
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(70)
            .build_cartesian_2d(x_lo..x_hi, y_lo..y_hi)
            .map_err(err)?;
        let mut mesh = chart.configure_mesh();
        mesh.x_desc("geometry (dB)").y_desc(y_desc).y_label_formatter(&fmt);
        if panel == 0 {
            mesh.y_labels((y_hi - y_lo) as usize + 1);
        }
        mesh.draw().map_err(err)?;

        for (i, curve) in curves.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            let line = curve.points.iter().map(|p| (p.x, p.metrics[panel].mean));
            chart
                .draw_series(LineSeries::new(line, color.stroke_width(2)))
                .map_err(err)?
                .label(curve.label.clone())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
            chart
                .draw_series(curve.points.iter().map(|p| {
                    let s = p.metrics[panel];
                    ErrorBar::new_vertical(p.x, s.lo, s.mean, s.hi, color.filled(), 6)
                }))
                .map_err(err)?;
        }
        chart
            .configure_series_labels()
            .position(SeriesLabelPosition::UpperRight)
            .background_style(WHITE.mix(0.85))
            .border_style(BLACK)
            .draw()
            .map_err(err)?;
    }
    root.present().map_err(err)
}

/// Writes `plot_<profile>.svg` into `dir` for every profile in `records`.
/// Zero PLR is drawn at one lost packet's resolution so it fits the log axis.
pub fn plot_records(records: &[RunRecord], dir: &Path) -> Result<PlotSummary, String> {
    let mut by_profile: BTreeMap<String, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        by_profile.entry(r.profile.to_string()).or_default().push(r);
    }
    let mut summary = PlotSummary {
        files: Vec::new(),
        panels: PANELS,
        curves: 0,
    };
    for (profile, rs) in by_profile {
        let curves = curves_of(&rs);
        let path = dir.join(format!("plot_{}.svg", profile.to_ascii_lowercase()));
        draw_file(&path, &format!("{profile}: PLR, average MCS and RB usage"), &curves)?;
        summary.curves += curves.len();
        summary.files.push(path);
    }
    Ok(summary)
}
