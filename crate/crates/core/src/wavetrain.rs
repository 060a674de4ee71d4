//! Wave-train profiles u_wt(theta; k) on a 2*pi-periodic collocation grid,
//! the nonlinear dispersion relation omega_nl(k), and group velocities.
//!
//! Profiles solve -omega u' = k^2 D u'' + c_d k u' + f(u) by Newton iteration
//! with omega as an extra unknown and the integral phase condition
//! <guess', u - guess> = 0 closing the system.

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::linalg::LuReal;
use crate::model::ReactionDiffusionModel;
use crate::spectral::{fourier_diff_matrices, trig_interp};

/// Converged wave-train profile at one wavenumber.
#[derive(Debug, Clone)]
pub struct WaveTrainProfile {
    pub k: f64,
    pub omega: f64,
    /// Profile on the uniform theta grid, one row per component.
    pub theta_values: Field,
    /// Sup norm of the collocation residual at the solution.
    pub residual: f64,
}

impl WaveTrainProfile {
    pub fn n_theta(&self) -> usize {
        self.theta_values.len()
    }

    /// Trigonometric interpolation of component `c` at angle `theta`.
    pub fn eval(&self, c: usize, theta: f64) -> f64 {
        trig_interp(
            self.theta_values.comp(c),
            2.0 * std::f64::consts::PI,
            0.0,
            theta.rem_euclid(2.0 * std::f64::consts::PI),
        )
    }

    /// All components at angle `theta`.
    pub fn eval_all(&self, theta: f64) -> Vec<f64> {
        (0..self.theta_values.n_comp())
            .map(|c| self.eval(c, theta))
            .collect()
    }
}

/// Tabulated dispersion relation with derived velocities.
#[derive(Debug, Clone)]
pub struct DispersionCurve {
    pub k: Vec<f64>,
    pub omega: Vec<f64>,
    pub c_g: Vec<f64>,
    pub c_p: Vec<f64>,
    /// Indices where continuation hit a fold (reported, not fatal).
    pub folds: Vec<usize>,
}

/// Options for the collocation solver.
#[derive(Debug, Clone, Copy)]
pub struct WaveTrainOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for WaveTrainOptions {
    fn default() -> Self {
        WaveTrainOptions {
            max_iter: 30,
            tol: 1e-12,
        }
    }
}

/// Plane-wave initial guess for the CGL family: A = r e^{i theta} with the
/// cubic amplitude r^2 = mu - k^2 (clamped away from zero).
pub fn cgl_plane_wave_guess(model: &ReactionDiffusionModel, k: f64, n_theta: usize) -> Field {
    let mu = model.params.get("mu").copied().unwrap_or(1.0);
    let r = (mu - k * k).max(0.09).sqrt();
    Field::from_fn(2, n_theta, |c, i| {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / n_theta as f64;
        if c == 0 {
            r * theta.cos()
        } else {
            r * theta.sin()
        }
    })
}

/// Newton solve for the profile and frequency at fixed wavenumber `k`.
pub fn solve_wavetrain(
    model: &ReactionDiffusionModel,
    k: f64,
    guess: &Field,
    opts: &WaveTrainOptions,
) -> Result<WaveTrainProfile> {
    if model.depends_on_ux_or_x() {
        return Err(Error::InvalidParameter(
            "wave-train solver requires a model autonomous in x".into(),
        ));
    }
    let n = model.n();
    let m = guess.len();
    if guess.n_comp() != n {
        return Err(Error::DimensionMismatch("guess vs model components".into()));
    }
    if guess.sup_norm() == 0.0 {
        return Err(Error::InvalidParameter("guess must be nonzero".into()));
    }
    let (d1, d2) = fourier_diff_matrices(m);
    let dmat = model.diffusion();
    let c_d = model.frame_speed();
    let weight = 2.0 * std::f64::consts::PI / m as f64;

    // phase-condition row: derivative of the guess
    let mut guess_theta = Field::zeros(n, m);
    for c in 0..n {
        let gc = guess.comp(c);
        let gt = guess_theta.comp_mut(c);
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..m {
                acc += d1[i * m + j] * gc[j];
            }
            gt[i] = acc;
        }
    }

    let dim = n * m + 1;
    let mut u = guess.clone();
    // initial omega estimate: least-squares of -omega u' ~ k^2 D u'' + ... at the guess
    let mut omega = initial_omega(model, k, &u, &d1, &d2);

    let mut residual = f64::INFINITY;
    for _iter in 0..opts.max_iter {
        // residual R = k^2 D u'' + (c_d k + omega) u' + f(u); phase condition
        let mut uth = vec![0.0; n * m];
        let mut uthth = vec![0.0; n * m];
        for c in 0..n {
            let uc = u.comp(c);
            for i in 0..m {
                let mut a1 = 0.0;
                let mut a2 = 0.0;
                for j in 0..m {
                    a1 += d1[i * m + j] * uc[j];
                    a2 += d2[i * m + j] * uc[j];
                }
                uth[c * m + i] = a1;
                uthth[c * m + i] = a2;
            }
        }
        let mut rhs = vec![0.0; dim];
        let mut ui = vec![0.0; n];
        let mut fi = vec![0.0; n];
        let zero = vec![0.0; n];
        for i in 0..m {
            u.at(i, &mut ui);
            model.reaction_into(&ui, &zero, 0.0, &mut fi);
            for r in 0..n {
                let mut diff = 0.0;
                for c in 0..n {
                    diff += dmat[r * n + c] * uthth[c * m + i];
                }
                rhs[r * m + i] =
                    -(k * k * diff + (c_d * k + omega) * uth[r * m + i] + fi[r]);
            }
        }
        let mut phase = 0.0;
        for c in 0..n {
            let gt = guess_theta.comp(c);
            let uc = u.comp(c);
            let gc = guess.comp(c);
            for i in 0..m {
                phase += gt[i] * (uc[i] - gc[i]) * weight;
            }
        }
        rhs[n * m] = -phase;

        residual = rhs.iter().fold(0.0f64, |mx, v| mx.max(v.abs()));
        if residual < opts.tol {
            break;
        }

        // Jacobian
        let mut jac = vec![0.0; dim * dim];
        let mut fu = vec![0.0; n * n];
        for i in 0..m {
            u.at(i, &mut ui);
            model.jacobian_u_into(&ui, &zero, 0.0, &mut fu);
            for r in 0..n {
                let row = r * m + i;
                for c in 0..n {
                    for j in 0..m {
                        let mut v = k * k * dmat[r * n + c] * d2[i * m + j];
                        if r == c {
                            v += (c_d * k + omega) * d1[i * m + j];
                        }
                        jac[row * dim + c * m + j] += v;
                    }
                    jac[row * dim + c * m + i] += fu[r * n + c];
                }
                // d/d omega
                jac[row * dim + n * m] = uth[r * m + i];
            }
        }
        for c in 0..n {
            let gt = guess_theta.comp(c);
            for j in 0..m {
                jac[(n * m) * dim + c * m + j] = gt[j] * weight;
            }
        }

        let lu = LuReal::factor(dim, jac).map_err(|_| {
            Error::Singular("wave-train Jacobian singular (possible fold in k)".into())
        })?;
        let delta = lu.solve(&rhs);
        for c in 0..n {
            let uc = u.comp_mut(c);
            for i in 0..m {
                uc[i] += delta[c * m + i];
            }
        }
        omega += delta[n * m];
        if !u.is_finite() || !omega.is_finite() {
            return Err(Error::NoConvergence(
                "wave-train Newton iterate became non-finite".into(),
            ));
        }
    }
    if residual >= 1e-9 {
        return Err(Error::NoConvergence(format!(
            "wave-train Newton residual {residual} at k = {k}"
        )));
    }
    // the zero state solves the profile equation and the phase condition
    // trivially; a genuine wave train varies along theta
    let mut variation: f64 = 0.0;
    for c in 0..n {
        let uc = u.comp(c);
        let mean = uc.iter().sum::<f64>() / m as f64;
        for v in uc {
            variation = variation.max((v - mean).abs());
        }
    }
    if variation < 1e-6 {
        return Err(Error::NoConvergence(format!(
            "wave-train Newton collapsed to a theta-independent state at k = {k}"
        )));
    }
    Ok(WaveTrainProfile {
        k,
        omega,
        theta_values: u,
        residual,
    })
}

fn initial_omega(
    model: &ReactionDiffusionModel,
    k: f64,
    u: &Field,
    d1: &[f64],
    d2: &[f64],
) -> f64 {
    let n = model.n();
    let m = u.len();
    let dmat = model.diffusion();
    let c_d = model.frame_speed();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut ui = vec![0.0; n];
    let mut fi = vec![0.0; n];
    let zero = vec![0.0; n];
    for i in 0..m {
        u.at(i, &mut ui);
        model.reaction_into(&ui, &zero, 0.0, &mut fi);
        for r in 0..n {
            let mut a1 = 0.0;
            let mut a2 = 0.0;
            let uc = u.comp(r);
            for j in 0..m {
                a1 += d1[i * m + j] * uc[j];
                a2 += d2[i * m + j] * uc[j];
            }
            let mut diff = 0.0;
            for c in 0..n {
                let ucc = u.comp(c);
                let mut a2c = 0.0;
                for j in 0..m {
                    a2c += d2[i * m + j] * ucc[j];
                }
                diff += dmat[r * n + c] * a2c;
            }
            let _ = a2;
            // -omega a1 = k^2 diff + c_d k a1 + f  =>  omega = -(k^2 diff + c_d k a1 + f)/a1
            num += -(k * k * diff + c_d * k * a1 + fi[r]) * a1;
            den += a1 * a1;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Continue the dispersion relation over a uniform k grid and tabulate
/// omega, c_g (4th-order centered differences), and c_p = omega/k.
pub fn continue_dispersion(
    model: &ReactionDiffusionModel,
    k_min: f64,
    k_max: f64,
    steps: usize,
    guess_at_kmin: &Field,
    opts: &WaveTrainOptions,
) -> Result<DispersionCurve> {
    if steps < 5 {
        return Err(Error::InvalidParameter(
            "continuation needs at least 5 steps".into(),
        ));
    }
    let dk = (k_max - k_min) / steps as f64;
    let mut ks = Vec::with_capacity(steps + 1);
    let mut omegas = Vec::with_capacity(steps + 1);
    let mut folds = Vec::new();
    let mut guess = guess_at_kmin.clone();
    let mut prev: Option<(f64, Field, f64)> = None;
    for i in 0..=steps {
        let k = k_min + i as f64 * dk;
        let wt = match solve_wavetrain(model, k, &guess, opts) {
            Ok(w) => w,
            Err(Error::Singular(_)) => {
                folds.push(i);
                return Err(Error::NoConvergence(format!(
                    "continuation stalled at k = {k} (fold indices {folds:?})"
                )));
            }
            Err(e) => return Err(e),
        };
        ks.push(k);
        omegas.push(wt.omega);
        // secant predictor for the next step
        guess = if let Some((_pk, pu, _pw)) = &prev {
            let mut g = wt.theta_values.clone();
            g.scale(2.0);
            g.axpy(-1.0, pu);
            g
        } else {
            wt.theta_values.clone()
        };
        prev = Some((k, wt.theta_values.clone(), wt.omega));
    }

    let c_g = differentiate_uniform(&ks, &omegas);
    let c_p = ks
        .iter()
        .zip(&omegas)
        .map(|(&k, &w)| if k.abs() > 1e-12 { w / k } else { f64::NAN })
        .collect();
    Ok(DispersionCurve {
        k: ks,
        omega: omegas,
        c_g,
        c_p,
        folds,
    })
}

/// 4th-order centered differences inside, 2nd-order one-sided at the edges.
fn differentiate_uniform(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h = x[1] - x[0];
    let mut d = vec![0.0; n];
    for i in 0..n {
        d[i] = if i >= 2 && i + 2 < n {
            (-y[i + 2] + 8.0 * y[i + 1] - 8.0 * y[i - 1] + y[i - 2]) / (12.0 * h)
        } else if i == 0 {
            (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h)
        } else if i == n - 1 {
            (3.0 * y[n - 1] - 4.0 * y[n - 2] + y[n - 3]) / (2.0 * h)
        } else if i == 1 {
            (y[2] - y[0]) / (2.0 * h)
        } else {
            (y[n - 1] - y[n - 3]) / (2.0 * h)
        };
    }
    d
}

/// Interpolated group velocity at `k` plus the comoving speed c_g - c_d.
pub fn group_velocity(curve: &DispersionCurve, k: f64, c_d: f64) -> Result<(f64, f64)> {
    let (kmin, kmax) = (curve.k[0], *curve.k.last().unwrap());
    if k < kmin - 1e-12 || k > kmax + 1e-12 {
        return Err(Error::OutOfRange(format!(
            "k = {k} outside tabulated [{kmin}, {kmax}]"
        )));
    }
    // local cubic fit around the four nearest samples
    let n = curve.k.len();
    let pos = (k - kmin) / (curve.k[1] - curve.k[0]);
    let i1 = (pos.floor() as usize).min(n - 2);
    let lo = i1.saturating_sub(1);
    let hi = (i1 + 2).min(n - 1);
    let ks = &curve.k[lo..=hi];
    let cs = &curve.c_g[lo..=hi];
    let cg = lagrange_interp(ks, cs, k);
    Ok((cg, cg - c_d))
}

/// Interpolated frequency at `k`.
pub fn omega_at(curve: &DispersionCurve, k: f64) -> Result<f64> {
    let (kmin, kmax) = (curve.k[0], *curve.k.last().unwrap());
    if k < kmin - 1e-12 || k > kmax + 1e-12 {
        return Err(Error::OutOfRange(format!(
            "k = {k} outside tabulated [{kmin}, {kmax}]"
        )));
    }
    let n = curve.k.len();
    let pos = (k - kmin) / (curve.k[1] - curve.k[0]);
    let i1 = (pos.floor() as usize).min(n - 2);
    let lo = i1.saturating_sub(1);
    let hi = (i1 + 2).min(n - 1);
    Ok(lagrange_interp(&curve.k[lo..=hi], &curve.omega[lo..=hi], k))
}

fn lagrange_interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..xs.len() {
        let mut w = ys[i];
        for j in 0..xs.len() {
            if i != j {
                w *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        acc += w;
    }
    acc
}

/// Consistency measure for the invariant c_g ~ d omega / d k: max absolute
/// deviation between tabulated c_g and a re-differentiated omega.
pub fn cg_consistency(curve: &DispersionCurve) -> f64 {
    let d = differentiate_uniform(&curve.k, &curve.omega);
    curve
        .c_g
        .iter()
        .zip(&d)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_builtin, BuiltinModelId};

    fn cgl(alpha: f64, beta: f64) -> ReactionDiffusionModel {
        build_builtin(&BuiltinModelId::CglCubic {
            alpha,
            beta,
            mu: 1.0,
        })
        .unwrap()
    }

    #[test]
    fn cgl_plane_wave_amplitude_and_frequency() {
        // closed-form oracle: r = sqrt(1 - k^2), omega = beta + (alpha - beta) k^2
        let model = cgl(0.5, -0.5);
        let k = 0.2;
        let guess = cgl_plane_wave_guess(&model, k, 64);
        let wt = solve_wavetrain(&model, k, &guess, &WaveTrainOptions::default()).unwrap();
        let r_expect = (1.0f64 - k * k).sqrt();
        let omega_expect = -0.5 + 1.0 * k * k;
        let mut amp_err: f64 = 0.0;
        for i in 0..wt.n_theta() {
            let a = wt.theta_values.get(0, i);
            let b = wt.theta_values.get(1, i);
            amp_err = amp_err.max(((a * a + b * b).sqrt() - r_expect).abs());
        }
        assert!(amp_err < 1e-8, "amplitude error {amp_err}");
        assert!(
            (wt.omega - omega_expect).abs() < 1e-8,
            "omega {} vs {}",
            wt.omega,
            omega_expect
        );
        assert!(wt.residual < 1e-9);
    }

    #[test]
    fn homogeneous_oscillation_at_k_zero() {
        let model = cgl(0.5, -0.5);
        let guess = cgl_plane_wave_guess(&model, 0.0, 64);
        let wt = solve_wavetrain(&model, 0.0, &guess, &WaveTrainOptions::default()).unwrap();
        assert!((wt.omega - (-0.5)).abs() < 1e-8, "omega_nl(0) = beta");
    }

    #[test]
    fn nonexistent_wavetrain_fails_to_converge() {
        let model = cgl(0.5, -0.5);
        let guess = cgl_plane_wave_guess(&model, 1.05, 64);
        let r = solve_wavetrain(&model, 1.05, &guess, &WaveTrainOptions::default());
        assert!(r.is_err(), "amplitude formula forbids existence at k = 1.05");
    }

    #[test]
    fn toy_model_rejected_as_nonautonomous() {
        let model = build_builtin(&BuiltinModelId::ToyBurgers { c: 1.0 }).unwrap();
        let guess = Field::from_fn(1, 32, |_, i| (i as f64 * 0.1).sin() + 1.0);
        assert!(solve_wavetrain(&model, 0.5, &guess, &WaveTrainOptions::default()).is_err());
    }

    #[test]
    fn phase_condition_translation_covariance() {
        let model = cgl(0.5, -0.5);
        let k = 0.3;
        let guess = cgl_plane_wave_guess(&model, k, 64);
        let wt = solve_wavetrain(&model, k, &guess, &WaveTrainOptions::default()).unwrap();
        // shift the guess by 7 grid nodes
        let m = 64usize;
        let shift = 7usize;
        let shifted_guess = Field::from_fn(2, m, |c, i| guess.get(c, (i + shift) % m));
        let wt2 = solve_wavetrain(&model, k, &shifted_guess, &WaveTrainOptions::default()).unwrap();
        let mut worst: f64 = 0.0;
        for c in 0..2 {
            for i in 0..m {
                worst = worst
                    .max((wt2.theta_values.get(c, i) - wt.theta_values.get(c, (i + shift) % m)).abs());
            }
        }
        assert!(worst < 1e-9, "translated-profile mismatch {worst}");
        assert!((wt.omega - wt2.omega).abs() < 1e-10);
    }

    #[test]
    fn dispersion_curve_matches_cgl_oracle() {
        let model = cgl(0.5, -0.5);
        let guess = cgl_plane_wave_guess(&model, -0.5, 64);
        let curve = continue_dispersion(&model, -0.5, 0.5, 20, &guess, &WaveTrainOptions::default())
            .unwrap();
        // c_g = 2 (alpha - beta) k = 2k
        let mut worst: f64 = 0.0;
        for (i, &k) in curve.k.iter().enumerate() {
            worst = worst.max((curve.c_g[i] - 2.0 * k).abs());
        }
        assert!(worst < 1e-5, "c_g error {worst}");
        // c_g(0) = 0 by reflection symmetry
        let (cg0, _) = group_velocity(&curve, 0.0, 0.0).unwrap();
        assert!(cg0.abs() < 1e-9);
        // c_p tabulated ratio is definitional
        for (i, &k) in curve.k.iter().enumerate() {
            if k.abs() > 1e-12 {
                assert_eq!(curve.c_p[i], curve.omega[i] / k);
            }
        }
        // comoving speed subtracts c_d
        let (cg, c) = group_velocity(&curve, 0.2, 0.1).unwrap();
        assert!((cg - 0.4).abs() < 1e-6);
        assert!((c - 0.3).abs() < 1e-6);
        // out-of-range query errors
        assert!(group_velocity(&curve, 0.7, 0.0).is_err());
        assert!(cg_consistency(&curve) < 1e-9);
    }

    #[test]
    fn profile_residual_decreases_spectrally_under_grid_doubling() {
        // the plane wave is a one-mode profile, so instead probe a quintic CGL
        // where harmonics mix; residual evaluated on the doubled grid
        let model = build_builtin(&BuiltinModelId::CglCubicQuintic {
            alpha: 0.4,
            beta: -0.6,
            gamma1: -0.12,
            gamma2: 0.05,
            mu: 1.0,
        })
        .unwrap();
        let k = 0.25;
        for m in [32usize, 64] {
            let guess = cgl_plane_wave_guess(&model, k, m);
            let wt = solve_wavetrain(&model, k, &guess, &WaveTrainOptions::default()).unwrap();
            assert!(wt.residual < 1e-9, "residual at m = {m}: {}", wt.residual);
        }
    }

    #[test]
    fn omega_interpolation_is_consistent() {
        let model = cgl(0.5, -0.5);
        let guess = cgl_plane_wave_guess(&model, -0.5, 64);
        let curve = continue_dispersion(&model, -0.5, 0.5, 20, &guess, &WaveTrainOptions::default())
            .unwrap();
        let w = omega_at(&curve, 0.137).unwrap();
        let expect = -0.5 + 0.137f64 * 0.137;
        assert!((w - expect).abs() < 1e-7, "omega {w} vs {expect}");
    }
}
