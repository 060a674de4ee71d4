//! Plot emission: deterministic SVGs rendered from the run's CSV columns and
//! manifest constants. Nothing is recomputed here.

use std::path::Path;

use anyhow::{bail, Context};

use crate::outputs::{plot_heatmap, plot_series, read_csv, RunManifest};

const KNOWN: &[&str] = &[
    "dispersion",
    "bloch",
    "defect_heatmap",
    "greens_column",
    "greens_beta",
    "plateau",
    "cones_decay",
    "bnorm",
    "laplace",
    "floquet",
];

fn available(dir: &Path, name: &str) -> bool {
    let file = match name {
        "dispersion" => "dispersion.csv",
        "bloch" => "bloch.csv",
        "defect_heatmap" => "defect_frames.csv",
        "greens_column" => "greens_column.csv",
        "greens_beta" => "greens_beta.csv",
        "plateau" => "plateau_eps0.csv",
        "cones_decay" => "cones_eps0.csv",
        "bnorm" => "bnorm_eps0.csv",
        "laplace" => "laplace_reference.csv",
        "floquet" => "floquet_multipliers.csv",
        _ => return false,
    };
    dir.join(file).exists()
}

pub fn emit_plots(manifest_path: &Path, which: &[String]) -> anyhow::Result<Vec<String>> {
    let manifest = RunManifest::load(manifest_path)?;
    let dir = manifest_path
        .parent()
        .context("manifest has no parent directory")?;
    // empty selection is a no-op by contract; "all" selects everything
    if which.is_empty() {
        return Ok(Vec::new());
    }
    let selection: Vec<String> = if which.len() == 1 && which[0] == "all" {
        KNOWN
            .iter()
            .filter(|n| available(dir, n))
            .map(|s| s.to_string())
            .collect()
    } else {
        for w in which {
            if !KNOWN.contains(&w.as_str()) {
                bail!("unknown plot `{w}` (known: {KNOWN:?})");
            }
            if !available(dir, w) {
                bail!("missing data series for plot `{w}`");
            }
        }
        which.to_vec()
    };

    let mut written = Vec::new();
    for name in &selection {
        let out = dir.join(format!("{name}.svg"));
        match name.as_str() {
            "dispersion" => {
                let cols = read_csv(&dir.join("dispersion.csv"))?;
                plot_series(
                    &out,
                    "nonlinear dispersion",
                    "k",
                    "value",
                    &cols["k"],
                    &[
                        ("omega", &cols["omega"], "#1f77b4"),
                        ("c_g", &cols["c_g"], "#d62728"),
                    ],
                    false,
                )?;
            }
            "bloch" => {
                let cols = read_csv(&dir.join("bloch.csv"))?;
                plot_series(
                    &out,
                    "critical Bloch branch",
                    "gamma",
                    "lambda",
                    &cols["gamma"],
                    &[
                        ("re", &cols["re_lambda"], "#1f77b4"),
                        ("im", &cols["im_lambda"], "#d62728"),
                    ],
                    true,
                )?;
            }
            "defect_heatmap" => {
                let cols = read_csv(&dir.join("defect_frames.csv"))?;
                let xs = cols["x"].clone();
                // amplitude sqrt(c0^2 + c1^2) per frame (or |c0| for scalars)
                let n_frames = cols
                    .keys()
                    .filter(|k| k.starts_with('f') && k.ends_with("_c0"))
                    .count();
                let mut values = Vec::with_capacity(n_frames * xs.len());
                let mut ts = Vec::with_capacity(n_frames);
                for j in 0..n_frames {
                    ts.push(j as f64);
                    let c0 = &cols[&format!("f{j}_c0")];
                    if let Some(c1) = cols.get(&format!("f{j}_c1")) {
                        for i in 0..xs.len() {
                            values.push((c0[i] * c0[i] + c1[i] * c1[i]).sqrt());
                        }
                    } else {
                        for v in c0 {
                            values.push(v.abs());
                        }
                    }
                }
                plot_heatmap(
                    &out,
                    "defect amplitude over one period",
                    &xs,
                    &ts,
                    &values,
                    &[],
                    "x",
                    "frame",
                )?;
            }
            "greens_column" => {
                let cols = read_csv(&dir.join("greens_column.csv"))?;
                // reshape scattered (x, tau, value) rows into the grid
                let xs_all = &cols["x"];
                let ts_all = &cols["tau"];
                let vs_all = &cols["g_r_abs"];
                let mut xs: Vec<f64> = Vec::new();
                for &x in xs_all {
                    if xs.last().map(|l| x > *l).unwrap_or(true) {
                        xs.push(x);
                    } else {
                        break;
                    }
                }
                let nx = xs.len();
                let nt = xs_all.len() / nx;
                let ts: Vec<f64> = (0..nt).map(|j| ts_all[j * nx]).collect();
                // log-compressed magnitude for visibility
                let values: Vec<f64> = vs_all
                    .iter()
                    .take(nx * nt)
                    .map(|v| (v.abs() + 1e-12).log10())
                    .collect();
                // cone slopes from the manifest's greens constants
                let mut cones = Vec::new();
                for st in &manifest.stages {
                    if let Some(c) = st.constants.get("c_plus_rescaled") {
                        cones.push(*c);
                        cones.push(-*c);
                    }
                }
                plot_heatmap(
                    &out,
                    "log10 |G_R| with cone overlay",
                    &xs,
                    &ts,
                    &values,
                    &cones,
                    "x",
                    "t - s",
                )?;
            }
            "greens_beta" => {
                let cols = read_csv(&dir.join("greens_beta.csv"))?;
                let b1_abs: Vec<f64> = cols["beta1"].iter().map(|v| v.abs()).collect();
                let b2_abs: Vec<f64> = cols["beta2"].iter().map(|v| v.abs()).collect();
                plot_series(
                    &out,
                    "plateau amplitudes by source point",
                    "y",
                    "|beta|",
                    &cols["y"],
                    &[("beta1", &b1_abs, "#1f77b4"), ("beta2", &b2_abs, "#d62728")],
                    true,
                )?;
            }
            "plateau" => {
                let cols = read_csv(&dir.join("plateau_eps0.csv"))?;
                plot_series(
                    &out,
                    "plateau amplitudes",
                    "t",
                    "delta",
                    &cols["t"],
                    &[
                        ("delta_psi", &cols["delta_psi"], "#1f77b4"),
                        ("delta_phi", &cols["delta_phi"], "#d62728"),
                    ],
                    false,
                )?;
            }
            "cones_decay" => {
                let c1 = read_csv(&dir.join("cones_eps0.csv"))?;
                let c2 = read_csv(&dir.join("cones2_eps0.csv"))?;
                let l1: Vec<f64> = c1["omega1_sup"].iter().map(|v| (v + 1e-16).log10()).collect();
                let l2: Vec<f64> = c2["omega2_sup"].iter().map(|v| (v + 1e-16).log10()).collect();
                // interpolate onto omega1's time column for joint plotting
                plot_series(
                    &out,
                    "cone-region decay (log10 sup)",
                    "t",
                    "log10 sup",
                    &c1["t"],
                    &[("omega1", &l1, "#1f77b4")],
                    false,
                )?;
                let out2 = dir.join("cones2_decay.svg");
                plot_series(
                    &out2,
                    "far-field decay (log10 sup)",
                    "t",
                    "log10 sup",
                    &c2["t"],
                    &[("omega2", &l2, "#d62728")],
                    false,
                )?;
                written.push("cones2_decay.svg".into());
            }
            "bnorm" => {
                let cols = read_csv(&dir.join("bnorm_eps0.csv"))?;
                plot_series(
                    &out,
                    "weighted norm history",
                    "t",
                    "||b||_1",
                    &cols["t"],
                    &[("b_norm", &cols["b_norm"], "#1f77b4")],
                    false,
                )?;
            }
            "laplace" => {
                let cols = read_csv(&dir.join("laplace_reference.csv"))?;
                plot_series(
                    &out,
                    "explicit kernel H0 samples",
                    "x",
                    "H0",
                    &cols["x"],
                    &[("h0", &cols["h0_exact"], "#1f77b4")],
                    true,
                )?;
            }
            "floquet" => {
                let cols = read_csv(&dir.join("floquet_multipliers.csv"))?;
                plot_series(
                    &out,
                    "weighted Floquet multipliers",
                    "Re rho",
                    "Im rho",
                    &cols["re"],
                    &[("multipliers", &cols["im"], "#1f77b4")],
                    true,
                )?;
            }
            _ => unreachable!(),
        }
        written.push(format!("{name}.svg"));
    }
    Ok(written)
}
