//! Persistence of computed defect profiles: metadata JSON plus frame CSVs,
//! reloadable for the downstream spectral and perturbation stages.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use defectlab_core::defect::{DefectProfile, RotatingWave};
use defectlab_core::model::BuiltinModelId;
use defectlab_core::{build_builtin, Field, Grid1D};

use crate::outputs::{read_csv, write_csv};

#[derive(Debug, Serialize, Deserialize)]
pub struct DefectMeta {
    pub model_name: String,
    pub model_params: BTreeMap<String, f64>,
    pub half_length: f64,
    pub n_points: usize,
    pub n_comp: usize,
    pub n_frames: usize,
    pub omega_d: f64,
    pub c_d: f64,
    pub k_plus: f64,
    pub k_minus: f64,
    pub periodicity_residual: f64,
    pub drift_fit_residual: f64,
    pub steady: bool,
    pub rotating_omega: Option<f64>,
    pub polish_residual: Option<f64>,
    pub analysis_half_width: f64,
}

pub fn save_defect(dir: &Path, defect: &DefectProfile) -> anyhow::Result<Vec<String>> {
    let mut outputs = Vec::new();
    let meta = DefectMeta {
        model_name: defect.lab_model.name.clone(),
        model_params: defect.lab_model.params.clone(),
        half_length: defect.grid.half_length,
        n_points: defect.grid.n_points,
        n_comp: defect.n_comp(),
        n_frames: defect.n_frames(),
        omega_d: defect.omega_d,
        c_d: defect.c_d,
        k_plus: defect.k_plus,
        k_minus: defect.k_minus,
        periodicity_residual: defect.periodicity_residual,
        drift_fit_residual: defect.drift_fit_residual,
        steady: defect.steady,
        rotating_omega: defect.rotating.as_ref().map(|r| r.omega),
        polish_residual: defect.polish_residual,
        analysis_half_width: defect.analysis_half_width,
    };
    let meta_path = dir.join("defect.json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)
        .with_context(|| format!("writing {}", meta_path.display()))?;
    outputs.push("defect.json".into());

    // frames: x column plus one column per (frame, component)
    let xs = defect.grid.xs();
    let mut names: Vec<String> = vec!["x".into()];
    let mut cols: Vec<Vec<f64>> = vec![xs];
    for (j, f) in defect.frames.iter().enumerate() {
        for c in 0..defect.n_comp() {
            names.push(format!("f{j}_c{c}"));
            cols.push(f.comp(c).to_vec());
        }
    }
    let named: Vec<(&str, &[f64])> = names
        .iter()
        .map(|s| s.as_str())
        .zip(cols.iter().map(|c| c.as_slice()))
        .collect();
    write_csv(&dir.join("defect_frames.csv"), &named)?;
    outputs.push("defect_frames.csv".into());

    if let Some(rw) = &defect.rotating {
        let named: Vec<(&str, &[f64])> = vec![
            ("base_c0", rw.base.comp(0)),
            ("base_c1", rw.base.comp(1)),
        ];
        write_csv(&dir.join("defect_rotating_base.csv"), &named)?;
        outputs.push("defect_rotating_base.csv".into());
    }
    Ok(outputs)
}

pub fn load_defect(dir: &Path) -> anyhow::Result<DefectProfile> {
    let meta: DefectMeta =
        serde_json::from_str(&std::fs::read_to_string(dir.join("defect.json"))?)?;
    let id = BuiltinModelId::parse(&meta.model_name, &meta.model_params)?;
    let lab_model = build_builtin(&id)?;
    let grid = Grid1D::periodic(meta.half_length, meta.n_points)?;
    let frames_csv = read_csv(&dir.join("defect_frames.csv"))?;
    let mut frames = Vec::with_capacity(meta.n_frames);
    for j in 0..meta.n_frames {
        let mut f = Field::zeros(meta.n_comp, meta.n_points);
        for c in 0..meta.n_comp {
            let col = frames_csv
                .get(&format!("f{j}_c{c}"))
                .context("missing frame column")?;
            f.comp_mut(c).copy_from_slice(col);
        }
        frames.push(f);
    }
    let rotating = if let Some(om) = meta.rotating_omega {
        let base_csv = read_csv(&dir.join("defect_rotating_base.csv"))?;
        let mut base = Field::zeros(meta.n_comp, meta.n_points);
        base.comp_mut(0)
            .copy_from_slice(base_csv.get("base_c0").context("base_c0")?);
        base.comp_mut(1)
            .copy_from_slice(base_csv.get("base_c1").context("base_c1")?);
        Some(RotatingWave { base, omega: om })
    } else {
        None
    };
    let model = lab_model
        .with_frame_speed(lab_model.frame_speed() + meta.c_d)
        .time_rescaled(meta.omega_d.abs().max(1e-12));
    Ok(DefectProfile {
        model,
        lab_model,
        grid,
        omega_d: meta.omega_d,
        c_d: meta.c_d,
        frames,
        k_plus: meta.k_plus,
        k_minus: meta.k_minus,
        periodicity_residual: meta.periodicity_residual,
        drift_fit_residual: meta.drift_fit_residual,
        core_history: Vec::new(),
        steady: meta.steady,
        rotating,
        polish_residual: meta.polish_residual,
        analysis_half_width: meta.analysis_half_width,
    })
}
