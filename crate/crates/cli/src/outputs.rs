//! Deterministic CSV, JSON, and SVG emission. Every numeric is written with
//! a fixed formatter so identical runs produce byte-identical files, and
//! plots read back the CSV columns rather than recomputing anything.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

pub const SCHEMA_HEADER: &str = "# defectlab-schema v1";

pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.is_finite() {
        format!("{v:.17e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Write a CSV with the schema header; columns are (name, data) pairs.
pub fn write_csv(path: &Path, columns: &[(&str, &[f64])]) -> anyhow::Result<()> {
    let rows = columns.first().map(|c| c.1.len()).unwrap_or(0);
    for (name, data) in columns {
        if data.len() != rows {
            anyhow::bail!("column {name} length mismatch");
        }
    }
    let mut out = String::new();
    out.push_str(SCHEMA_HEADER);
    out.push('\n');
    let header: Vec<&str> = columns.iter().map(|c| c.0).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in 0..rows {
        let row: Vec<String> = columns.iter().map(|c| fmt_num(c.1[r])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Read back a schema-v1 CSV as named columns.
pub fn read_csv(path: &Path) -> anyhow::Result<BTreeMap<String, Vec<f64>>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let first = lines.next().unwrap_or_default();
    if first != SCHEMA_HEADER {
        anyhow::bail!("{} missing schema header", path.display());
    }
    let names: Vec<String> = lines
        .next()
        .unwrap_or_default()
        .split(',')
        .map(|s| s.to_string())
        .collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for line in lines {
        if line.is_empty() {
            continue;
        }
        for (i, tok) in line.split(',').enumerate() {
            let v = match tok {
                "nan" => f64::NAN,
                "inf" => f64::INFINITY,
                "-inf" => f64::NEG_INFINITY,
                t => t.parse()?,
            };
            if i < cols.len() {
                cols[i].push(v);
            }
        }
    }
    Ok(names.into_iter().zip(cols).collect())
}

/// Per-stage record in the run manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub passed: bool,
    pub wall_seconds: f64,
    pub constants: BTreeMap<String, f64>,
    pub outputs: Vec<String>,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub experiment: String,
    pub wall_seconds: f64,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn save(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn all_passed(&self) -> bool {
        self.stages.iter().all(|s| s.passed)
    }
}

// ---------------------------------------------------------------------------
// SVG plotting
// ---------------------------------------------------------------------------

const W: f64 = 640.0;
const H: f64 = 420.0;
const ML: f64 = 60.0;
const MR: f64 = 20.0;
const MT: f64 = 24.0;
const MB: f64 = 44.0;

fn f3(v: f64) -> String {
    format!("{v:.3}")
}

struct Frame {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn from_data(xs: &[f64], ys: &[f64]) -> Frame {
        let fin = |v: &&f64| v.is_finite();
        let x_lo = xs.iter().filter(fin).cloned().fold(f64::INFINITY, f64::min);
        let x_hi = xs.iter().filter(fin).cloned().fold(f64::NEG_INFINITY, f64::max);
        let y_lo = ys.iter().filter(fin).cloned().fold(f64::INFINITY, f64::min);
        let y_hi = ys.iter().filter(fin).cloned().fold(f64::NEG_INFINITY, f64::max);
        let pad = |lo: f64, hi: f64| {
            let d = (hi - lo).abs().max(1e-12);
            (lo - 0.05 * d, hi + 0.05 * d)
        };
        let (x_lo, x_hi) = pad(x_lo, x_hi);
        let (y_lo, y_hi) = pad(y_lo, y_hi);
        Frame { x_lo, x_hi, y_lo, y_hi }
    }

    fn px(&self, x: f64) -> f64 {
        ML + (x - self.x_lo) / (self.x_hi - self.x_lo) * (W - ML - MR)
    }

    fn py(&self, y: f64) -> f64 {
        H - MB - (y - self.y_lo) / (self.y_hi - self.y_lo) * (H - MT - MB)
    }
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"16\" font-family=\"monospace\" font-size=\"13\" text-anchor=\"middle\">{title}</text>\n",
        W / 2.0
    );
    s
}

fn svg_axes(s: &mut String, fr: &Frame, xlabel: &str, ylabel: &str) {
    let _ = write!(
        s,
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n",
        ML,
        MT,
        W - ML - MR,
        H - MT - MB
    );
    for i in 0..=4 {
        let fx = fr.x_lo + (fr.x_hi - fr.x_lo) * i as f64 / 4.0;
        let fy = fr.y_lo + (fr.y_hi - fr.y_lo) * i as f64 / 4.0;
        let _ = write!(
            s,
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
            f3(fr.px(fx)),
            H - MB + 14.0,
            f3(fx)
        );
        let _ = write!(
            s,
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"end\">{}</text>\n",
            ML - 4.0,
            f3(fr.py(fy) + 3.0),
            f3(fy)
        );
    }
    let _ = write!(
        s,
        "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">{xlabel}</text>\n",
        (ML + W - MR) / 2.0,
        H - 8.0
    );
    let _ = write!(
        s,
        "<text x=\"14\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{ylabel}</text>\n",
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0
    );
}

fn svg_polyline(s: &mut String, fr: &Frame, xs: &[f64], ys: &[f64], color: &str) {
    let mut pts = String::new();
    for (x, y) in xs.iter().zip(ys) {
        if x.is_finite() && y.is_finite() {
            let _ = write!(pts, "{},{} ", f3(fr.px(*x)), f3(fr.py(*y)));
        }
    }
    let _ = write!(
        s,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
        pts.trim_end()
    );
}

fn svg_dots(s: &mut String, fr: &Frame, xs: &[f64], ys: &[f64], color: &str) {
    for (x, y) in xs.iter().zip(ys) {
        if x.is_finite() && y.is_finite() {
            let _ = write!(
                s,
                "<circle cx=\"{}\" cy=\"{}\" r=\"2.2\" fill=\"{color}\"/>\n",
                f3(fr.px(*x)),
                f3(fr.py(*y))
            );
        }
    }
}

/// Simple line/scatter plot of named series sharing an x column.
pub fn plot_series(
    path: &Path,
    title: &str,
    xlabel: &str,
    ylabel: &str,
    xs: &[f64],
    series: &[(&str, &[f64], &str)],
    dots: bool,
) -> anyhow::Result<()> {
    let mut all_y = Vec::new();
    for (_, ys, _) in series {
        all_y.extend_from_slice(ys);
    }
    let fr = Frame::from_data(xs, &all_y);
    let mut s = svg_open(title);
    svg_axes(&mut s, &fr, xlabel, ylabel);
    let mut ly = MT + 14.0;
    for (name, ys, color) in series {
        if dots {
            svg_dots(&mut s, &fr, xs, ys, color);
        } else {
            svg_polyline(&mut s, &fr, xs, ys, color);
        }
        let _ = write!(
            s,
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"10\" fill=\"{color}\">{name}</text>\n",
            W - MR - 150.0,
            ly
        );
        ly += 13.0;
    }
    s.push_str("</svg>\n");
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

/// Space-time heatmap from a flat row-major field (time rows by x columns),
/// with optional cone overlay rays x = c t from the origin row.
#[allow(clippy::too_many_arguments)]
pub fn plot_heatmap(
    path: &Path,
    title: &str,
    xs: &[f64],
    ts: &[f64],
    values: &[f64],
    cones: &[f64],
    x_label: &str,
    t_label: &str,
) -> anyhow::Result<()> {
    let nx = xs.len();
    let nt = ts.len();
    anyhow::ensure!(values.len() == nx * nt, "heatmap size mismatch");
    // subsample to keep files bounded
    let sx = (nx / 256).max(1);
    let st = (nt / 128).max(1);
    let lo = values.iter().cloned().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    let hi = values
        .iter()
        .cloned()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let fr = Frame {
        x_lo: xs[0],
        x_hi: xs[nx - 1],
        y_lo: ts[0],
        y_hi: ts[nt - 1],
    };
    let mut s = svg_open(title);
    let cw = (W - ML - MR) / (nx as f64 / sx as f64);
    let ch = (H - MT - MB) / (nt as f64 / st as f64);
    for (tj, &t) in ts.iter().enumerate().step_by(st) {
        for (xi, &x) in xs.iter().enumerate().step_by(sx) {
            let v = values[tj * nx + xi];
            let u = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
            // compact two-ramp colormap: dark blue -> white -> dark red
            let (r, g, b) = if u < 0.5 {
                let w = u * 2.0;
                ((40.0 + 215.0 * w) as u8, (40.0 + 215.0 * w) as u8, 255u8)
            } else {
                let w = (u - 0.5) * 2.0;
                (255u8, (255.0 - 215.0 * w) as u8, (255.0 - 215.0 * w) as u8)
            };
            let _ = write!(
                s,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"rgb({r},{g},{b})\"/>\n",
                f3(fr.px(x)),
                f3(fr.py(t) - ch),
                f3(cw + 0.5),
                f3(ch + 0.5)
            );
        }
    }
    for &c in cones {
        let t0 = ts[0].max(0.0);
        let x0 = c * t0;
        let x1 = c * ts[nt - 1];
        let _ = write!(
            s,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\" stroke-width=\"1.2\" stroke-dasharray=\"6 3\"/>\n",
            f3(fr.px(x0.clamp(fr.x_lo, fr.x_hi))),
            f3(fr.py(t0)),
            f3(fr.px(x1.clamp(fr.x_lo, fr.x_hi))),
            f3(fr.py(ts[nt - 1]))
        );
    }
    svg_axes(&mut s, &fr, x_label, t_label);
    s.push_str("</svg>\n");
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}
