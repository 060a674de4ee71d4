//! TOML experiment configuration with strict schemas: unknown keys are
//! rejected and every tolerance must be positive.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use defectlab_core::bounds::ErrfnMode;
use defectlab_core::model::BuiltinModelId;
use defectlab_core::{Boundary, Grid1D};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub output_dir: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub model: ModelConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub wavetrain: WavetrainConfig,
    #[serde(default)]
    pub bloch: BlochConfig,
    #[serde(default)]
    pub defect: DefectConfig,
    #[serde(default)]
    pub linspec: LinspecConfig,
    #[serde(default)]
    pub greens: GreensConfig,
    #[serde(default)]
    pub laplace: LaplaceConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub perturb: PerturbConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Wavetrain,
    Bloch,
    Defect,
    Linspec,
    Greens,
    Laplace,
    Bounds,
    Perturb,
    FullPipeline,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl ModelConfig {
    pub fn build_id(&self) -> anyhow::Result<BuiltinModelId> {
        BuiltinModelId::parse(&self.name, &self.params)
            .with_context(|| format!("model `{}`", self.name))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub half_length: f64,
    pub n_points: usize,
    #[serde(default = "default_bc")]
    pub bc: String,
    #[serde(default = "default_sponge_width")]
    pub sponge_width: f64,
    #[serde(default = "default_sponge_strength")]
    pub sponge_strength: f64,
}

fn default_bc() -> String {
    "periodic".into()
}
fn default_sponge_width() -> f64 {
    8.0
}
fn default_sponge_strength() -> f64 {
    2.0
}

impl GridConfig {
    pub fn build(&self) -> anyhow::Result<Grid1D> {
        let bc = match self.bc.as_str() {
            "periodic" => Boundary::Periodic,
            "far_field_neumann" => Boundary::FarFieldNeumann {
                sponge_width: self.sponge_width,
                sponge_strength: self.sponge_strength,
            },
            other => bail!("unknown boundary condition `{other}`"),
        };
        Ok(Grid1D::new(self.half_length, self.n_points, bc)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WavetrainConfig {
    pub k_min: f64,
    pub k_max: f64,
    pub steps: usize,
    pub n_theta: usize,
}

impl Default for WavetrainConfig {
    fn default() -> Self {
        WavetrainConfig {
            k_min: -0.5,
            k_max: 0.5,
            steps: 20,
            n_theta: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlochConfig {
    pub k: f64,
    pub gamma_max: f64,
    pub gamma_count: usize,
    pub n_theta: usize,
    pub t_modes: usize,
}

impl Default for BlochConfig {
    fn default() -> Self {
        BlochConfig {
            k: 0.0,
            gamma_max: 0.2,
            gamma_count: 8,
            n_theta: 48,
            t_modes: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DefectConfig {
    pub seed_k: f64,
    pub seed_width: f64,
    pub t_transient: f64,
    pub t_sample: f64,
    pub dt: f64,
    pub n_frames: usize,
    pub polish: bool,
}

impl Default for DefectConfig {
    fn default() -> Self {
        DefectConfig {
            seed_k: -0.38,
            seed_width: 2.0,
            t_transient: 900.0,
            t_sample: 60.0,
            dt: 0.04,
            n_frames: 64,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinspecConfig {
    pub weight_a: f64,
    pub weight_smoothing: f64,
    pub steps_per_period: usize,
    pub n_eigs: usize,
    pub power_iters: usize,
}

impl Default for LinspecConfig {
    fn default() -> Self {
        LinspecConfig {
            weight_a: 0.25,
            weight_smoothing: 1.0,
            steps_per_period: 512,
            n_eigs: 6,
            power_iters: 60,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GreensConfig {
    pub ys: Vec<f64>,
    pub t_span: f64,
    pub bump_width_cells: f64,
    pub steps_per_period: usize,
    pub frames_per_period: usize,
    pub m0_candidates: Vec<f64>,
    pub beta_fit_y_min: f64,
}

impl Default for GreensConfig {
    fn default() -> Self {
        GreensConfig {
            ys: vec![
                -8.0, -6.5, -5.0, -3.5, -2.0, -1.25, 0.5, 1.25, 2.0, 3.5, 5.0, 6.5, 8.0,
            ],
            t_span: 88.0,
            bump_width_cells: 3.0,
            steps_per_period: 768,
            frames_per_period: 32,
            m0_candidates: vec![8.0, 16.0, 24.0, 32.0, 48.0, 64.0],
            beta_fit_y_min: 3.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaplaceConfig {
    pub d: f64,
    pub c_d: f64,
    pub mu_values: Vec<f64>,
    pub n_quad: usize,
    pub x_max: f64,
    pub x_count: usize,
    pub t_values: Vec<f64>,
}

impl Default for LaplaceConfig {
    fn default() -> Self {
        LaplaceConfig {
            d: 1.0,
            c_d: 0.5,
            mu_values: vec![1.0, 2.0, 3.0],
            n_quad: 2,
            x_max: 5.0,
            x_count: 21,
            t_values: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    pub c_plus: f64,
    pub c_minus: f64,
    pub d_plus: f64,
    pub d_minus: f64,
    pub m0: f64,
    pub errfn_mode: String,
    pub eta: f64,
    pub c0: f64,
    pub t_end: f64,
    pub s_panels: usize,
    pub y_panels: usize,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig {
            c_plus: 0.658,
            c_minus: -0.658,
            d_plus: 0.337,
            d_minus: 0.337,
            m0: 16.0,
            errfn_mode: "paper_literal".into(),
            eta: 0.5,
            c0: 4.0,
            t_end: 100.0,
            s_panels: 24,
            y_panels: 40,
        }
    }
}

impl BoundsConfig {
    pub fn errfn(&self) -> anyhow::Result<ErrfnMode> {
        match self.errfn_mode.as_str() {
            "paper_literal" => Ok(ErrfnMode::PaperLiteral),
            "unit_step" => Ok(ErrfnMode::UnitStep),
            other => bail!("unknown errfn mode `{other}`"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbConfig {
    pub amplitudes: Vec<f64>,
    pub width_c0: f64,
    pub center: f64,
    pub t_end: f64,
    pub steps_per_period: usize,
    pub frames_per_period: usize,
    pub eps1: f64,
    pub t_min_fit: f64,
    pub window_half_width: f64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            amplitudes: vec![1e-3, 2e-3],
            width_c0: 4.0,
            center: 3.0,
            t_end: 115.0,
            steps_per_period: 768,
            frames_per_period: 32,
            eps1: 0.1,
            t_min_fit: 8.0,
            window_half_width: 6.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub newton: f64,
    pub periodicity: f64,
    pub fit_r2_min: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            newton: 1e-12,
            periodicity: 1e-2,
            fit_r2_min: 0.9,
        }
    }
}

/// Parse and validate a config file.
pub fn load_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let cfg: ExperimentConfig = toml::from_str(&text).context("parsing config")?;
    validate(&cfg)?;
    Ok(cfg)
}

pub fn validate(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    cfg.model.build_id()?;
    cfg.grid.build()?;
    for (name, v) in [
        ("tolerances.newton", cfg.tolerances.newton),
        ("tolerances.periodicity", cfg.tolerances.periodicity),
        ("tolerances.fit_r2_min", cfg.tolerances.fit_r2_min),
        ("defect.dt", cfg.defect.dt),
        ("defect.t_transient", cfg.defect.t_transient),
        ("linspec.weight_a", cfg.linspec.weight_a),
        ("greens.t_span", cfg.greens.t_span),
        ("laplace.d", cfg.laplace.d),
        ("bounds.t_end", cfg.bounds.t_end),
        ("perturb.width_c0", cfg.perturb.width_c0),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            bail!("{name} must be positive, got {v}");
        }
    }
    if cfg.perturb.amplitudes.iter().any(|a| !(*a >= 0.0)) {
        bail!("perturb.amplitudes must be nonnegative");
    }
    cfg.bounds.errfn()?;
    Ok(())
}

/// FNV-1a 64-bit hash of the raw config bytes, hex-encoded.
pub fn config_hash(text: &str) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}
