//! Floquet-Bloch spectra of wave trains, quadratic fits of the critical
//! dispersion curve, and spatial Floquet exponents.
//!
//! For a wave train u_wt(k x - omega t) the Bloch operator at wavenumber
//! gamma acts on 2*pi-periodic profiles Q(theta):
//!
//!   B(gamma) = D (k d_theta + i gamma)^2 + c_d (k d_theta + i gamma)
//!              + omega d_theta + f_u(u_wt(theta)),
//!
//! whose eigenvalues lambda(gamma) are the temporal Floquet exponents with
//! spatial quasimomentum gamma. Spatial Floquet exponents nu(lambda) solve
//! the quadratic pencil D nu^2 Q + (2 k D d_theta + c_d) nu Q + (B(0) -
//! lambda) Q = 0 obtained from the ansatz v = e^{nu x} Q(k x - omega t);
//! theta modes play the role of the Fourier-in-t truncation since the
//! temporal trace of e^{i l theta} at fixed x oscillates at frequency
//! l * omega.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, eigenvector, hessenberg_eigenvalues, overlap, CMat, LuComplex};
use crate::model::ReactionDiffusionModel;
use crate::spectral::fourier_diff_matrices;
use crate::wavetrain::WaveTrainProfile;

pub type C64 = Complex<f64>;

/// Critical Bloch branch lambda(gamma) plus bookkeeping on the rest of the
/// spectrum.
#[derive(Debug, Clone)]
pub struct SpectralCurve {
    pub gamma: Vec<f64>,
    /// Eigenvalue on the branch through lambda(0) = 0, tracked by
    /// eigenvector overlap.
    pub lambda: Vec<C64>,
    /// Per-gamma upper bound on Re(lambda) over the non-tracked branches.
    pub secondary_max_re: Vec<f64>,
    /// Spectral gap delta at gamma = 0: -(max Re of non-critical spectrum).
    pub gap_at_zero: f64,
    /// Number of eigenvalues within tolerance of 0 at gamma = 0.
    pub zero_multiplicity: usize,
    /// Branch collisions: (gamma, tracked, runner-up) where the overlap
    /// criterion was ambiguous.
    pub ambiguities: Vec<(f64, C64, C64)>,
}

/// Least-squares fit lambda(gamma) ~ -i c gamma - d gamma^2 with real c, d.
#[derive(Debug, Clone, Copy)]
pub struct DispersionFit {
    pub c: f64,
    pub d: f64,
    /// max |lambda + i c gamma + d gamma^2| / |gamma|^3 over the window.
    pub cubic_residual: f64,
    pub gamma_max: f64,
    /// d > 0, as the stability hypothesis requires.
    pub hypothesis_ok: bool,
}

/// Spatial Floquet exponents at one spectral parameter.
#[derive(Debug, Clone)]
pub struct SpatialFloquetSet {
    pub lambda: C64,
    pub exponents: Vec<C64>,
    /// Exponent on the branch through nu(0) = 0.
    pub critical: C64,
    /// d nu / d lambda at the origin (centered difference), to compare with
    /// -1/c.
    pub critical_slope: C64,
}

fn fu_at_nodes(model: &ReactionDiffusionModel, wt: &WaveTrainProfile) -> Vec<f64> {
    let n = model.n();
    let m = wt.n_theta();
    let zero = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut jac = vec![0.0; n * n];
    let mut out = vec![0.0; m * n * n];
    for i in 0..m {
        wt.theta_values.at(i, &mut u);
        model.jacobian_u_into(&u, &zero, 0.0, &mut jac);
        out[i * n * n..(i + 1) * n * n].copy_from_slice(&jac);
    }
    out
}

fn assemble_bloch(
    model: &ReactionDiffusionModel,
    wt: &WaveTrainProfile,
    fu: &[f64],
    d1: &[f64],
    d2: &[f64],
    gamma: f64,
) -> CMat {
    let n = model.n();
    let m = wt.n_theta();
    let k = wt.k;
    let omega = wt.omega;
    let c_d = model.frame_speed();
    let dm = model.diffusion();
    let dim = n * m;
    let mut b = CMat::zeros(dim);
    for r in 0..n {
        for c in 0..n {
            let drc = dm[r * n + c];
            for i in 0..m {
                for j in 0..m {
                    let mut v = C64::new(k * k * drc * d2[i * m + j], 0.0);
                    v += C64::new(0.0, 2.0 * k * gamma * drc * d1[i * m + j]);
                    if i == j {
                        v += C64::new(-gamma * gamma * drc, 0.0);
                    }
                    if r == c {
                        v += C64::new((c_d * k + omega) * d1[i * m + j], 0.0);
                        if i == j {
                            v += C64::new(0.0, c_d * gamma);
                        }
                    }
                    if i == j {
                        v += C64::new(fu[i * n * n + r * n + c], 0.0);
                    }
                    if v.norm_sqr() != 0.0 {
                        b[(r * m + i, c * m + j)] += v;
                    }
                }
            }
        }
    }
    b
}

/// Eigenvalues of the Bloch operator across a symmetric gamma grid, with the
/// critical branch tracked through lambda(0) = 0 by eigenvector overlap.
pub fn bloch_spectrum(
    wt: &WaveTrainProfile,
    model: &ReactionDiffusionModel,
    gamma_grid: &[f64],
) -> Result<SpectralCurve> {
    if wt.residual >= 1e-9 {
        return Err(Error::InvalidParameter(
            "wave train not converged to tolerance".into(),
        ));
    }
    let mut gammas: Vec<f64> = gamma_grid.to_vec();
    gammas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let has_zero = gammas.iter().any(|g| g.abs() < 1e-14);
    let symmetric = gammas
        .iter()
        .all(|g| gammas.iter().any(|h| (g + h).abs() < 1e-12));
    if !has_zero || !symmetric {
        return Err(Error::InvalidParameter(
            "gamma grid must be symmetric about 0 and contain 0".into(),
        ));
    }

    let m = wt.n_theta();
    let n = model.n();
    let (d1, d2) = fourier_diff_matrices(m);
    let fu = fu_at_nodes(model, wt);

    // solve each gamma eigenproblem
    struct PerGamma {
        eigs: Vec<C64>,
        mat: CMat,
    }
    let jobs: Vec<(usize, f64)> = gammas.iter().copied().enumerate().collect();
    let solved: Result<Vec<PerGamma>> = jobs
        .iter()
        .map(|&(_, g)| {
            let b = assemble_bloch(model, wt, &fu, &d1, &d2, g);
            let mut eigs = eigenvalues(&b)?;
            eigs.sort_by(|x, y| y.re.partial_cmp(&x.re).unwrap());
            Ok(PerGamma { eigs, mat: b })
        })
        .collect();
    let solved = solved?;

    let zero_idx = gammas.iter().position(|g| g.abs() < 1e-14).unwrap();
    // multiplicity of the zero eigenvalue at gamma = 0
    let tol0 = 1e-7;
    let zero_multiplicity = solved[zero_idx]
        .eigs
        .iter()
        .filter(|l| l.norm() < tol0)
        .count();

    // start the branch at the eigenvalue nearest zero
    let mut lambda = vec![C64::new(0.0, 0.0); gammas.len()];
    let mut secondary = vec![f64::NEG_INFINITY; gammas.len()];
    let mut ambiguities = Vec::new();

    let start_lam = *solved[zero_idx]
        .eigs
        .iter()
        .min_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap())
        .unwrap();
    let start_vec = eigenvector(&solved[zero_idx].mat, start_lam)?;
    lambda[zero_idx] = start_lam;
    secondary[zero_idx] = solved[zero_idx]
        .eigs
        .iter()
        .filter(|l| (*l - start_lam).norm() > 1e-9)
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);

    let gap_at_zero = -secondary[zero_idx];

    // sweep outward in both directions, tracking by eigenvector overlap
    for dir in [1isize, -1isize] {
        let mut prev_vec = start_vec.clone();
        let mut prev_lam = start_lam;
        let mut idx = zero_idx as isize + dir;
        while idx >= 0 && (idx as usize) < gammas.len() {
            let i = idx as usize;
            let pg = &solved[i];
            // candidates: closest eigenvalues to the previous branch point
            let mut cands: Vec<C64> = pg.eigs.clone();
            cands.sort_by(|a, b| {
                (a - prev_lam)
                    .norm()
                    .partial_cmp(&(b - prev_lam).norm())
                    .unwrap()
            });
            cands.truncate(5.min(cands.len()));
            let mut best: Option<(f64, C64, Vec<C64>)> = None;
            let mut second_best: Option<(f64, C64)> = None;
            for &cand in &cands {
                let v = eigenvector(&pg.mat, cand)?;
                let ov = overlap(&prev_vec, &v);
                match &best {
                    Some((bov, blam, _)) if ov <= *bov => {
                        if second_best.map(|(s, _)| ov > s).unwrap_or(true)
                            && (cand - *blam).norm() > 1e-10
                        {
                            second_best = Some((ov, cand));
                        }
                    }
                    _ => {
                        if let Some((bov, blam, _)) = best.take() {
                            second_best = Some((bov, blam));
                        }
                        best = Some((ov, cand, v));
                    }
                }
            }
            let (bov, blam, bvec) = best.expect("candidate list nonempty");
            if let Some((sov, slam)) = second_best {
                if (bov - sov).abs() < 0.1 && (blam - slam).norm() > 1e-9 {
                    ambiguities.push((gammas[i], blam, slam));
                }
            }
            lambda[i] = blam;
            secondary[i] = pg
                .eigs
                .iter()
                .filter(|l| (*l - blam).norm() > 1e-9)
                .map(|l| l.re)
                .fold(f64::NEG_INFINITY, f64::max);
            let n_used = n; // silence unused in case n == 1
            let _ = n_used;
            prev_vec = bvec;
            prev_lam = blam;
            idx += dir;
        }
    }

    Ok(SpectralCurve {
        gamma: gammas,
        lambda,
        secondary_max_re: secondary,
        gap_at_zero,
        zero_multiplicity,
        ambiguities,
    })
}

/// Fit -i c gamma - d gamma^2 on |gamma| <= gamma_max. The real and imaginary
/// parts separate into two one-parameter least-squares problems.
pub fn fit_dispersion_coeffs(curve: &SpectralCurve, gamma_max: f64) -> Result<DispersionFit> {
    let pts: Vec<(f64, C64)> = curve
        .gamma
        .iter()
        .zip(&curve.lambda)
        .filter(|(g, _)| g.abs() <= gamma_max + 1e-15)
        .map(|(&g, &l)| (g, l))
        .collect();
    if pts.len() < 7 {
        return Err(Error::InvalidParameter(format!(
            "need at least 7 points in |gamma| <= {gamma_max}, have {}",
            pts.len()
        )));
    }
    let mut s_g2 = 0.0;
    let mut s_g4 = 0.0;
    let mut s_g_im = 0.0;
    let mut s_g2_re = 0.0;
    for &(g, l) in &pts {
        s_g2 += g * g;
        s_g4 += g * g * g * g;
        s_g_im += g * l.im;
        s_g2_re += g * g * l.re;
    }
    let c = if s_g2 > 0.0 { -s_g_im / s_g2 } else { 0.0 };
    let d = if s_g4 > 0.0 { -s_g2_re / s_g4 } else { 0.0 };
    let mut cubic_residual: f64 = 0.0;
    for &(g, l) in &pts {
        if g.abs() > 1e-12 {
            let model_val = C64::new(-d * g * g, -c * g);
            cubic_residual = cubic_residual.max((l - model_val).norm() / g.abs().powi(3));
        }
    }
    Ok(DispersionFit {
        c,
        d,
        cubic_residual,
        gamma_max,
        hypothesis_ok: d > 0.0,
    })
}

/// Default fit window 0.2 / sqrt(d), iterated once from an initial fit.
pub fn fit_dispersion_default_window(curve: &SpectralCurve) -> Result<DispersionFit> {
    let g_max0 = curve.gamma.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let first = fit_dispersion_coeffs(curve, g_max0)?;
    if first.d <= 0.0 {
        return Ok(first);
    }
    let window = (0.2 / first.d.sqrt()).min(g_max0);
    match fit_dispersion_coeffs(curve, window) {
        Ok(f) => Ok(f),
        Err(_) => Ok(first), // window too narrow for the sampled grid
    }
}

/// Conjugate-symmetry defect max |lambda(-gamma) - conj(lambda(gamma))|.
pub fn conjugate_symmetry_defect(curve: &SpectralCurve) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, g) in curve.gamma.iter().enumerate() {
        if let Some(j) = curve.gamma.iter().position(|h| (h + g).abs() < 1e-12) {
            worst = worst.max((curve.lambda[j] - curve.lambda[i].conj()).norm());
        }
    }
    worst
}

fn small_inverse(n: usize, a: &[f64]) -> Result<Vec<f64>> {
    let lu = crate::linalg::LuReal::factor(n, a.to_vec())?;
    let mut inv = vec![0.0; n * n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = lu.solve(&e);
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    Ok(inv)
}

fn spatial_companion(
    wt: &WaveTrainProfile,
    model: &ReactionDiffusionModel,
    fu: &[f64],
    d1: &[f64],
    d2: &[f64],
    lambda: C64,
) -> Result<CMat> {
    let n = model.n();
    let m = wt.n_theta();
    let k = wt.k;
    let omega = wt.omega;
    let c_d = model.frame_speed();
    let dm = model.diffusion();
    let dinv = small_inverse(n, dm)?;
    let dim = n * m;
    let mut comp = CMat::zeros(2 * dim);
    // top-right block: identity
    for i in 0..dim {
        comp[(i, dim + i)] = C64::new(1.0, 0.0);
    }
    // c0 = k^2 D d2 + (c_d k + omega) d1 + f_u - lambda
    // c1 = 2 k D d1 + c_d
    // bottom blocks: -D^{-1} c0 and -D^{-1} c1
    for r in 0..n {
        for c in 0..n {
            // (D^{-1} k^2 D)_rc d2 term and friends: accumulate D^{-1} * c0
            for i in 0..m {
                for j in 0..m {
                    let mut acc0 = C64::new(0.0, 0.0);
                    let mut acc1 = C64::new(0.0, 0.0);
                    for s in 0..n {
                        let w = dinv[r * n + s];
                        // c0[s,c] at (i,j)
                        let mut c0 = C64::new(k * k * dm[s * n + c] * d2[i * m + j], 0.0);
                        if s == c {
                            c0 += C64::new((c_d * k + omega) * d1[i * m + j], 0.0);
                            if i == j {
                                c0 -= lambda;
                            }
                        }
                        if i == j {
                            c0 += C64::new(fu[i * n * n + s * n + c], 0.0);
                        }
                        acc0 += C64::new(w, 0.0) * c0;
                        // c1[s,c] at (i,j)
                        let mut c1 = C64::new(2.0 * k * dm[s * n + c] * d1[i * m + j], 0.0);
                        if s == c && i == j {
                            c1 += C64::new(c_d, 0.0);
                        }
                        acc1 += C64::new(w, 0.0) * c1;
                    }
                    if acc0.norm_sqr() != 0.0 {
                        comp[(dim + r * m + i, c * m + j)] = -acc0;
                    }
                    if acc1.norm_sqr() != 0.0 {
                        comp[(dim + r * m + i, dim + c * m + j)] = -acc1;
                    }
                }
            }
        }
    }
    Ok(comp)
}

/// Spatial Floquet exponents of the truncated first-order spatial system of
/// the wave train at spectral parameter `lambda`. `t_modes` sets the
/// Fourier-in-t truncation; the collocation grid carries 2*t_modes nodes.
pub fn spatial_floquet(
    wt: &WaveTrainProfile,
    model: &ReactionDiffusionModel,
    lambda: C64,
    t_modes: usize,
) -> Result<SpatialFloquetSet> {
    if t_modes < 8 {
        return Err(Error::InvalidParameter(
            "temporal truncation t_modes must be at least 8".into(),
        ));
    }
    let m_grid = 2 * t_modes;
    // resample the wave train onto the requested resolution
    let wt_r = resample_wavetrain(wt, m_grid);
    let n = model.n();
    let (d1, d2) = fourier_diff_matrices(m_grid);
    let fu = fu_at_nodes(model, &wt_r);

    let exps_at = |lam: C64| -> Result<Vec<C64>> {
        let comp = spatial_companion(&wt_r, model, &fu, &d1, &d2, lam)?;
        eigenvalues(&comp)
    };

    let exponents = exps_at(lambda)?;
    let critical = *exponents
        .iter()
        .min_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap())
        .ok_or_else(|| Error::Degenerate("empty exponent set".into()))?;

    // slope of the critical branch at the origin by centered difference
    let delta = 5e-3;
    let track = |lam: C64, near: C64| -> Result<C64> {
        let e = exps_at(lam)?;
        Ok(*e
            .iter()
            .min_by(|a, b| (*a - near).norm().partial_cmp(&(*b - near).norm()).unwrap())
            .unwrap())
    };
    let zero = C64::new(0.0, 0.0);
    let nu0 = track(zero, zero)?;
    let nup = track(C64::new(delta, 0.0), nu0)?;
    let num = track(C64::new(-delta, 0.0), nu0)?;
    let critical_slope = (nup - num) / C64::new(2.0 * delta, 0.0);

    let _ = n;
    Ok(SpatialFloquetSet {
        lambda,
        exponents,
        critical,
        critical_slope,
    })
}

fn resample_wavetrain(wt: &WaveTrainProfile, m_new: usize) -> WaveTrainProfile {
    if wt.n_theta() == m_new {
        return wt.clone();
    }
    let n = wt.theta_values.n_comp();
    let vals = crate::grid::Field::from_fn(n, m_new, |c, i| {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / m_new as f64;
        wt.eval(c, theta)
    });
    WaveTrainProfile {
        k: wt.k,
        omega: wt.omega,
        theta_values: vals,
        residual: wt.residual,
    }
}

/// Leading eigenvalues of a general complex matrix; shared by callers that
/// assemble their own operators.
pub fn dense_eigenvalues(mat: &CMat) -> Result<Vec<C64>> {
    eigenvalues(mat)
}

/// Solve (A - lambda I) x = b once; used by callers refining eigenvectors.
pub fn shifted_solve(mat: &CMat, lambda: C64, b: &[C64]) -> Result<Vec<C64>> {
    let n = mat.n;
    let mut a = mat.a.clone();
    for i in 0..n {
        a[i * n + i] -= lambda;
    }
    let lu = LuComplex::factor(n, a)?;
    Ok(lu.solve(b))
}

/// Eigenvalues of an upper Hessenberg real matrix (Arnoldi Ritz values).
pub fn ritz_values(h: &CMat) -> Result<Vec<C64>> {
    let mut hh = h.clone();
    hessenberg_eigenvalues(&mut hh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Field;
    use crate::model::{build_builtin, BuiltinModelId, ReactionDiffusionModel};
    use crate::wavetrain::{cgl_plane_wave_guess, solve_wavetrain, WaveTrainOptions};
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn constant_model(c_d: f64) -> ReactionDiffusionModel {
        let zero: Arc<dyn Fn(&[f64], &[f64], f64, &mut [f64]) + Send + Sync> =
            Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0));
        ReactionDiffusionModel::new(
            "const_coef",
            1,
            vec![1.0],
            c_d,
            zero.clone(),
            zero.clone(),
            zero,
            false,
            BTreeMap::new(),
        )
        .unwrap()
    }

    fn zero_wavetrain(m: usize, k: f64, omega: f64) -> WaveTrainProfile {
        WaveTrainProfile {
            k,
            omega,
            theta_values: Field::zeros(1, m),
            residual: 0.0,
        }
    }

    fn sym_gamma_grid(g_max: f64, count: usize) -> Vec<f64> {
        // count points per side plus 0
        let mut g = vec![0.0];
        for i in 1..=count {
            let v = g_max * i as f64 / count as f64;
            g.push(v);
            g.push(-v);
        }
        g
    }

    #[test]
    fn constant_coefficient_symbol_is_exact() {
        // v_t = v_xx + c_d v_x about the zero state: lambda(gamma) =
        // -gamma^2 + i c_d gamma, i.e. advection speed c = -c_d
        let c_d = 0.7;
        let model = constant_model(c_d);
        let wt = zero_wavetrain(32, 0.5, 1.0);
        let grid = sym_gamma_grid(0.3, 6);
        let curve = bloch_spectrum(&wt, &model, &grid).unwrap();
        for (i, &g) in curve.gamma.iter().enumerate() {
            let expect = C64::new(-g * g, c_d * g);
            assert!(
                (curve.lambda[i] - expect).norm() < 1e-10,
                "gamma {g}: {} vs {expect}",
                curve.lambda[i]
            );
        }
        let fit = fit_dispersion_coeffs(&curve, 0.3).unwrap();
        assert!((fit.c - (-c_d)).abs() < 1e-10);
        assert!((fit.d - 1.0).abs() < 1e-10);
        assert!(fit.hypothesis_ok);
    }

    #[test]
    fn synthetic_fit_recovers_coefficients() {
        let gamma = sym_gamma_grid(0.2, 5);
        let mut gs = gamma.clone();
        gs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lambda: Vec<C64> = gs
            .iter()
            .map(|&g| C64::new(-1.2 * g * g, -0.3 * g))
            .collect();
        let curve = SpectralCurve {
            gamma: gs,
            lambda,
            secondary_max_re: vec![],
            gap_at_zero: 1.0,
            zero_multiplicity: 1,
            ambiguities: vec![],
        };
        let fit = fit_dispersion_coeffs(&curve, 0.2).unwrap();
        assert!((fit.c - 0.3).abs() < 1e-10);
        assert!((fit.d - 1.2).abs() < 1e-10);
        assert!(fit.cubic_residual < 1e-9);
    }

    /// Closed-form critical Bloch branch for cubic CGL about the k = 0 state:
    /// eigenvalue of the 2x2 symbol in (A, conj A) coordinates.
    fn cgl_k0_branch(alpha: f64, beta: f64, g: f64) -> C64 {
        let tr_half = C64::new(-1.0 - g * g, 0.0);
        let det = C64::new(
            (1.0 + alpha * alpha) * g.powi(4) + 2.0 * g * g * (1.0 + alpha * beta),
            0.0,
        );
        let disc = (tr_half * tr_half - det).sqrt();
        tr_half + disc
    }

    #[test]
    fn cgl_k0_critical_branch_and_curvature() {
        let (alpha, beta) = (0.5, -0.5);
        let model = build_builtin(&BuiltinModelId::CglCubic {
            alpha,
            beta,
            mu: 1.0,
        })
        .unwrap();
        let guess = cgl_plane_wave_guess(&model, 0.0, 48);
        let wt = solve_wavetrain(&model, 0.0, &guess, &WaveTrainOptions::default()).unwrap();
        let grid = sym_gamma_grid(0.2, 10);
        let curve = bloch_spectrum(&wt, &model, &grid).unwrap();
        assert_eq!(curve.zero_multiplicity, 1, "simple zero eigenvalue");
        // at k = 0 the Floquet exponents repeat at spacing i*omega, so the
        // unquotiented gap is zero; the positive-gap check lives in the
        // k != 0 test below
        for (i, &g) in curve.gamma.iter().enumerate() {
            let expect = cgl_k0_branch(alpha, beta, g);
            assert!(
                (curve.lambda[i] - expect).norm() < 1e-8,
                "gamma {g}: {} vs {expect}",
                curve.lambda[i]
            );
        }
        let window = 0.08;
        let fit = fit_dispersion_coeffs(&curve, window).unwrap();
        assert!(fit.c.abs() < 1e-8, "reflection symmetry forces c = 0, got {}", fit.c);
        // matched-window oracle: same quadratic fit applied to the symbol data
        let oracle_curve = SpectralCurve {
            gamma: curve.gamma.clone(),
            lambda: curve
                .gamma
                .iter()
                .map(|&g| cgl_k0_branch(alpha, beta, g))
                .collect(),
            secondary_max_re: vec![],
            gap_at_zero: 0.0,
            zero_multiplicity: 1,
            ambiguities: vec![],
        };
        let oracle_fit = fit_dispersion_coeffs(&oracle_curve, window).unwrap();
        assert!(
            (fit.d - oracle_fit.d).abs() < 1e-6,
            "d {} vs oracle {}",
            fit.d,
            oracle_fit.d
        );
        let d_expect = 1.0 + alpha * beta;
        assert!(
            (fit.d - d_expect).abs() < 1e-3,
            "d {} vs 1 + alpha beta = {d_expect}",
            fit.d
        );
        assert!(conjugate_symmetry_defect(&curve) < 1e-10);
    }

    #[test]
    fn cgl_traveling_wavetrain_fitted_speed_matches_group_velocity() {
        let (alpha, beta) = (0.5, -0.5);
        let model = build_builtin(&BuiltinModelId::CglCubic {
            alpha,
            beta,
            mu: 1.0,
        })
        .unwrap();
        let k = 0.2;
        let guess = cgl_plane_wave_guess(&model, k, 48);
        let wt = solve_wavetrain(&model, k, &guess, &WaveTrainOptions::default()).unwrap();
        let grid = sym_gamma_grid(0.06, 8);
        let curve = bloch_spectrum(&wt, &model, &grid).unwrap();
        assert_eq!(curve.zero_multiplicity, 1);
        assert!(curve.gap_at_zero > 0.0, "gap {}", curve.gap_at_zero);
        let fit = fit_dispersion_coeffs(&curve, 0.06).unwrap();
        // model frame has c_d = 0, so fitted c should equal c_g = 2(alpha-beta)k
        let cg = 2.0 * (alpha - beta) * k;
        assert!(
            (fit.c - cg).abs() < 1e-3,
            "fitted c {} vs c_g {cg}",
            fit.c
        );
        assert!(fit.hypothesis_ok);
    }

    #[test]
    fn spatial_floquet_constant_coefficient_slope() {
        // scalar heat with drift: lambda = nu^2 + c_d nu, critical slope
        // d nu / d lambda = 1 / c_d at the origin
        let c_d = 1.0;
        let model = constant_model(c_d);
        let wt = zero_wavetrain(32, 0.5, 1.0);
        let set = spatial_floquet(&wt, &model, C64::new(0.0, 0.0), 8).unwrap();
        assert!(
            set.critical.norm() < 1e-9,
            "critical exponent at lambda=0: {}",
            set.critical
        );
        assert!(
            (set.critical_slope - C64::new(1.0 / c_d, 0.0)).norm() < 1e-4,
            "slope {}",
            set.critical_slope
        );
        assert_eq!(set.exponents.len(), 2 * 16);
    }

    #[test]
    fn spatial_floquet_exponents_stable_under_truncation_doubling() {
        let (alpha, beta) = (0.5, -0.5);
        let model = build_builtin(&BuiltinModelId::CglCubic {
            alpha,
            beta,
            mu: 1.0,
        })
        .unwrap();
        let k = 0.2;
        let guess = cgl_plane_wave_guess(&model, k, 64);
        let wt = solve_wavetrain(&model, k, &guess, &WaveTrainOptions::default()).unwrap();
        let lam = C64::new(0.02, 0.0);
        let a = spatial_floquet(&wt, &model, lam, 8).unwrap();
        let b = spatial_floquet(&wt, &model, lam, 16).unwrap();
        // the critical exponent must agree between truncations
        let drift = (a.critical - b.critical).norm();
        assert!(drift < 1e-6, "critical exponent drift {drift}");
        // lambda = 0 keeps exactly one exponent at the origin
        let z = spatial_floquet(&wt, &model, C64::new(0.0, 0.0), 8).unwrap();
        let near_zero = z.exponents.iter().filter(|e| e.norm() < 1e-7).count();
        assert_eq!(near_zero, 1, "one Floquet exponent at the origin");
    }
}
