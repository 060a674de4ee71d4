//! Time stepping for the nonlinear system, its linearization about a stored
//! base state, and the adjoint linearization.
//!
//! The scheme is ETD2RK (Cox-Matthews): the constant-coefficient part
//! D d_xx + c_d d_x is integrated exactly per Fourier mode through matrix
//! exponentials and phi-functions, the reaction explicitly. Second order in
//! dt, no step-size adaptivity: runs are reproducible by construction.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::grid::{Boundary, Field, Grid1D};
use crate::linalg::{expm, CMat};
use crate::model::ReactionDiffusionModel;
use crate::spectral::SpectralOps;

pub type C64 = Complex<f64>;

/// Options for a time-stepping run.
#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    /// Store a frame every this many steps (first and last always stored).
    pub store_every: usize,
    /// Abort with `Diverged` when the sup norm exceeds this cap.
    pub sup_cap: f64,
    /// Verify the explicit-part step-size heuristic before running.
    pub check_step: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            store_every: 1,
            sup_cap: 1e6,
            check_step: true,
        }
    }
}

/// Stored samples of an evolution, uniformly spaced in time.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: Grid1D,
    pub n_comp: usize,
    pub times: Vec<f64>,
    pub frames: Vec<Field>,
    /// Integrator step used to produce the frames.
    pub dt: f64,
}

impl Trajectory {
    pub fn t_start(&self) -> f64 {
        *self.times.first().unwrap()
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn last(&self) -> &Field {
        self.frames.last().unwrap()
    }

    pub fn frame_spacing(&self) -> f64 {
        if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            self.dt
        }
    }

    /// Cubic interpolation in time (clamped stencil at the ends). Frames are
    /// uniformly spaced except possibly the last interval, which is handled
    /// by clamping.
    pub fn sample_into(&self, t: f64, out: &mut Field) -> Result<()> {
        let t0 = self.t_start();
        let t1 = self.t_end();
        if t < t0 - 1e-9 || t > t1 + 1e-9 {
            return Err(Error::OutOfRange(format!(
                "time {t} outside stored range [{t0}, {t1}]"
            )));
        }
        let m = self.times.len();
        if m == 1 {
            out.clone_from(&self.frames[0]);
            return Ok(());
        }
        let dt = self.frame_spacing();
        let s = ((t - t0) / dt).clamp(0.0, (m - 1) as f64);
        let i1 = (s.floor() as usize).min(m - 2);
        let w = s - i1 as f64;
        let i0 = i1.saturating_sub(1);
        let i2 = i1 + 1;
        let i3 = (i1 + 2).min(m - 1);
        // Catmull-Rom weights (falls back to one-sided at the ends)
        let (p0, p1, p2, p3) = (
            self.frames[i0].data(),
            self.frames[i1].data(),
            self.frames[i2].data(),
            self.frames[i3].data(),
        );
        let dst = out.data_mut();
        for i in 0..dst.len() {
            let a = -0.5 * p0[i] + 1.5 * p1[i] - 1.5 * p2[i] + 0.5 * p3[i];
            let b = p0[i] - 2.5 * p1[i] + 2.0 * p2[i] - 0.5 * p3[i];
            let c = -0.5 * p0[i] + 0.5 * p2[i];
            dst[i] = ((a * w + b) * w + c) * w + p1[i];
        }
        Ok(())
    }

    pub fn sample(&self, t: f64) -> Result<Field> {
        let mut out = Field::zeros(self.n_comp, self.grid.n_points);
        self.sample_into(t, &mut out)?;
        Ok(out)
    }
}

/// A base state the linearized/adjoint equations can be driven by.
pub trait BaseState: Sync {
    fn grid(&self) -> Grid1D;
    fn n_comp(&self) -> usize;
    /// Inclusive time range on which the base is defined; periodic bases
    /// report an unbounded range.
    fn time_range(&self) -> (f64, f64);
    fn eval_into(&self, t: f64, out: &mut Field) -> Result<()>;
}

impl BaseState for Trajectory {
    fn grid(&self) -> Grid1D {
        self.grid
    }

    fn n_comp(&self) -> usize {
        self.n_comp
    }

    fn time_range(&self) -> (f64, f64) {
        (self.t_start(), self.t_end())
    }

    fn eval_into(&self, t: f64, out: &mut Field) -> Result<()> {
        self.sample_into(t, out)
    }
}

/// Base state defined by a closure (steady or analytically known profiles).
pub struct FnBase<F: Fn(f64, &mut Field) + Sync> {
    pub grid: Grid1D,
    pub n_comp: usize,
    pub f: F,
}

impl<F: Fn(f64, &mut Field) + Sync> BaseState for FnBase<F> {
    fn grid(&self) -> Grid1D {
        self.grid
    }

    fn n_comp(&self) -> usize {
        self.n_comp
    }

    fn time_range(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn eval_into(&self, t: f64, out: &mut Field) -> Result<()> {
        (self.f)(t, out);
        Ok(())
    }
}

enum Direction {
    Forward,
    Adjoint,
}

/// Precomputed per-mode propagators for one (model, grid, dt) combination.
pub struct Stepper<'m> {
    model: &'m ReactionDiffusionModel,
    grid: Grid1D,
    ops: SpectralOps,
    dt: f64,
    n: usize,
    /// exp(dt L_k), dt*phi1(dt L_k), dt*phi2(dt L_k); N blocks of n*n each.
    e: Vec<C64>,
    p1: Vec<C64>,
    p2: Vec<C64>,
    sponge: Option<Sponge>,
    xs: Vec<f64>,
    adjoint: bool,
}

struct Sponge {
    sigma: Vec<f64>,
    reference: Field,
}

impl<'m> Stepper<'m> {
    pub fn new(model: &'m ReactionDiffusionModel, grid: Grid1D, dt: f64) -> Result<Self> {
        Self::build(model, grid, dt, Direction::Forward)
    }

    pub fn new_adjoint(model: &'m ReactionDiffusionModel, grid: Grid1D, dt: f64) -> Result<Self> {
        Self::build(model, grid, dt, Direction::Adjoint)
    }

    fn build(
        model: &'m ReactionDiffusionModel,
        grid: Grid1D,
        dt: f64,
        dir: Direction,
    ) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let n = model.n();
        let npts = grid.n_points;
        let ops = SpectralOps::new(npts, 2.0 * grid.half_length);
        let adjoint = matches!(dir, Direction::Adjoint);

        let d = model.diffusion();
        let c_d = model.frame_speed();
        let mut e = vec![C64::new(0.0, 0.0); npts * n * n];
        let mut p1 = e.clone();
        let mut p2 = e.clone();
        for (j, &k) in ops.k.iter().enumerate() {
            // L_k = -k^2 D + i k c_d I (forward); adjoint uses D^T, -c_d
            let mut w = CMat::zeros(3 * n);
            for r in 0..n {
                for c in 0..n {
                    let dd = if adjoint { d[c * n + r] } else { d[r * n + c] };
                    w[(r, c)] = C64::new(-k * k * dd * dt, 0.0);
                }
                let drift = if adjoint { -c_d } else { c_d };
                w[(r, r)] += C64::new(0.0, k * drift * dt);
                w[(r, n + r)] = C64::new(1.0, 0.0);
                w[(n + r, 2 * n + r)] = C64::new(1.0, 0.0);
            }
            let ew = expm(&w);
            for r in 0..n {
                for c in 0..n {
                    e[j * n * n + r * n + c] = ew[(r, c)];
                    p1[j * n * n + r * n + c] = ew[(r, n + c)] * dt;
                    p2[j * n * n + r * n + c] = ew[(r, 2 * n + c)] * dt;
                }
            }
        }

        let sponge = match grid.bc {
            Boundary::Periodic => None,
            Boundary::FarFieldNeumann {
                sponge_width,
                sponge_strength,
            } => {
                let l = grid.half_length;
                let sigma: Vec<f64> = (0..npts)
                    .map(|i| {
                        let x = grid.x(i);
                        let depth = (x.abs() - (l - sponge_width)).max(0.0) / sponge_width;
                        // smooth ramp, C^1 at the inner edge
                        sponge_strength * depth * depth * (3.0 - 2.0 * depth.min(1.0))
                    })
                    .collect();
                Some(Sponge {
                    sigma,
                    reference: Field::zeros(n, npts),
                })
            }
        };

        Ok(Stepper {
            model,
            grid,
            ops,
            dt,
            n,
            e,
            p1,
            p2,
            sponge,
            xs: grid.xs(),
            adjoint,
        })
    }

    /// Relax the sponge layer toward this state instead of zero.
    pub fn set_sponge_reference(&mut self, reference: Field) {
        if let Some(s) = self.sponge.as_mut() {
            s.reference = reference;
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> Grid1D {
        self.grid
    }

    /// Heuristic stability bound for the explicitly treated terms: the scaled
    /// reaction Jacobians at the initial state must satisfy
    /// dt * (|f_u| + |f_ux| k_max) <= 2.
    pub fn explicit_step_ok(&self, u0: &Field) -> bool {
        let n = self.n;
        let mut jac = vec![0.0; n * n];
        let mut u = vec![0.0; n];
        let mut ux = vec![0.0; n];
        let ux_fields: Option<Vec<Vec<f64>>> = if self.model.depends_on_ux_or_x() {
            Some((0..n).map(|c| self.ops.deriv(u0.comp(c), 1)).collect())
        } else {
            None
        };
        let mut rate: f64 = 0.0;
        for i in 0..self.grid.n_points {
            u0.at(i, &mut u);
            if let Some(uxf) = &ux_fields {
                for c in 0..n {
                    ux[c] = uxf[c][i];
                }
            }
            self.model.jacobian_u_into(&u, &ux, self.xs[i], &mut jac);
            let ju: f64 = jac.iter().map(|v| v.abs()).sum();
            self.model.jacobian_ux_into(&u, &ux, self.xs[i], &mut jac);
            let jux: f64 = jac.iter().map(|v| v.abs()).sum();
            rate = rate.max(ju + jux * self.ops.k_max());
        }
        self.dt * rate <= 2.0
    }

    fn to_hat(&self, f: &Field) -> Vec<Vec<C64>> {
        (0..self.n).map(|c| self.ops.forward(f.comp(c))).collect()
    }

    fn from_hat(&self, hat: &[Vec<C64>]) -> Field {
        let mut out = Field::zeros(self.n, self.grid.n_points);
        for c in 0..self.n {
            let phys = self.ops.inverse_real(hat[c].clone());
            out.comp_mut(c).copy_from_slice(&phys);
        }
        out
    }

    #[inline]
    fn apply_blocks(&self, mats: &[C64], hat: &[Vec<C64>], out: &mut [Vec<C64>]) {
        let n = self.n;
        for j in 0..self.grid.n_points {
            let base = j * n * n;
            for r in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for c in 0..n {
                    acc += mats[base + r * n + c] * hat[c][j];
                }
                out[r][j] = acc;
            }
        }
    }

    #[inline]
    fn add_blocks(&self, mats: &[C64], hat: &[Vec<C64>], out: &mut [Vec<C64>]) {
        let n = self.n;
        for j in 0..self.grid.n_points {
            let base = j * n * n;
            for r in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for c in 0..n {
                    acc += mats[base + r * n + c] * hat[c][j];
                }
                out[r][j] += acc;
            }
        }
    }

    /// Nonlinear reaction term plus sponge relaxation, in physical space.
    fn reaction_term(&self, f: &Field, out: &mut Field) {
        let n = self.n;
        let npts = self.grid.n_points;
        let ux_fields: Option<Vec<Vec<f64>>> = if self.model.depends_on_ux_or_x() {
            Some((0..n).map(|c| self.ops.deriv(f.comp(c), 1)).collect())
        } else {
            None
        };
        let mut u = vec![0.0; n];
        let mut ux = vec![0.0; n];
        let mut val = vec![0.0; n];
        for i in 0..npts {
            f.at(i, &mut u);
            if let Some(uxf) = &ux_fields {
                for c in 0..n {
                    ux[c] = uxf[c][i];
                }
            }
            self.model.reaction_into(&u, &ux, self.xs[i], &mut val);
            for c in 0..n {
                out.set(c, i, val[c]);
            }
        }
        if let Some(s) = &self.sponge {
            for c in 0..n {
                let rf = s.reference.comp(c);
                let fc = f.comp(c);
                let oc = out.comp_mut(c);
                for i in 0..npts {
                    oc[i] -= s.sigma[i] * (fc[i] - rf[i]);
                }
            }
        }
    }

    /// Linearized term f_u(base) v + f_ux(base) v_x (adjoint variant:
    /// f_u^T w - d_x(f_ux^T w)), plus sponge damping.
    fn linear_term(&self, base_u: &Field, base_ux: Option<&Field>, v: &Field, out: &mut Field) {
        let n = self.n;
        let npts = self.grid.n_points;
        let has_ux = self.model.depends_on_ux_or_x();
        let vx_fields: Option<Vec<Vec<f64>>> = if has_ux && !self.adjoint {
            Some((0..n).map(|c| self.ops.deriv(v.comp(c), 1)).collect())
        } else {
            None
        };
        let mut bu = vec![0.0; n];
        let mut bux = vec![0.0; n];
        let mut vv = vec![0.0; n];
        let mut vx = vec![0.0; n];
        let mut jac = vec![0.0; n * n];
        let mut jux = vec![0.0; n * n];
        // adjoint flux g = f_ux^T w gets differentiated afterwards
        let mut flux = if self.adjoint && has_ux {
            Some(Field::zeros(n, npts))
        } else {
            None
        };
        for i in 0..npts {
            base_u.at(i, &mut bu);
            if let Some(bx) = base_ux {
                bx.at(i, &mut bux);
            }
            v.at(i, &mut vv);
            if let Some(vxf) = &vx_fields {
                for c in 0..n {
                    vx[c] = vxf[c][i];
                }
            }
            self.model.jacobian_u_into(&bu, &bux, self.xs[i], &mut jac);
            if has_ux {
                self.model.jacobian_ux_into(&bu, &bux, self.xs[i], &mut jux);
            }
            for r in 0..n {
                let mut acc = 0.0;
                for c in 0..n {
                    if self.adjoint {
                        acc += jac[c * n + r] * vv[c];
                    } else {
                        acc += jac[r * n + c] * vv[c];
                        if has_ux {
                            acc += jux[r * n + c] * vx[c];
                        }
                    }
                }
                out.set(r, i, acc);
            }
            if let Some(fl) = flux.as_mut() {
                for r in 0..n {
                    let mut acc = 0.0;
                    for c in 0..n {
                        acc += jux[c * n + r] * vv[c];
                    }
                    fl.set(r, i, acc);
                }
            }
        }
        if let Some(fl) = &flux {
            for c in 0..n {
                let d = self.ops.deriv(fl.comp(c), 1);
                let oc = out.comp_mut(c);
                for i in 0..npts {
                    oc[i] -= d[i];
                }
            }
        }
        if let Some(s) = &self.sponge {
            for c in 0..n {
                let vc = v.comp(c);
                let oc = out.comp_mut(c);
                for i in 0..npts {
                    oc[i] -= s.sigma[i] * vc[i];
                }
            }
        }
    }

    /// One ETD2RK step of the nonlinear equation.
    pub fn step_nonlinear(&self, u: &Field) -> Field {
        let mut nl = Field::zeros(self.n, self.grid.n_points);
        self.reaction_term(u, &mut nl);
        let u_hat = self.to_hat(u);
        let nl_hat = self.to_hat(&nl);
        let mut a_hat = vec![vec![C64::new(0.0, 0.0); self.grid.n_points]; self.n];
        self.apply_blocks(&self.e, &u_hat, &mut a_hat);
        self.add_blocks(&self.p1, &nl_hat, &mut a_hat);
        let a = self.from_hat(&a_hat);
        let mut nl_a = Field::zeros(self.n, self.grid.n_points);
        self.reaction_term(&a, &mut nl_a);
        // correction: + dt phi2 (N(a) - N(u))
        let mut diff_hat = self.to_hat(&nl_a);
        let nl_hat2 = self.to_hat(&nl);
        for c in 0..self.n {
            for j in 0..self.grid.n_points {
                diff_hat[c][j] -= nl_hat2[c][j];
            }
        }
        self.add_blocks(&self.p2, &diff_hat, &mut a_hat);
        self.from_hat(&a_hat)
    }

    /// Full linear right-hand side D v_xx + c_d v_x (+ adjoint variants) plus
    /// the base-dependent terms, in physical space. Used by the RK4 path.
    fn linear_rhs(&self, base_u: &Field, base_ux: Option<&Field>, v: &Field, out: &mut Field) {
        self.linear_term(base_u, base_ux, v, out);
        let n = self.n;
        let npts = self.grid.n_points;
        let d = self.model.diffusion();
        let c_d = self.model.frame_speed();
        let vx: Vec<Vec<f64>> = (0..n).map(|c| self.ops.deriv(v.comp(c), 1)).collect();
        let vxx: Vec<Vec<f64>> = (0..n).map(|c| self.ops.deriv(v.comp(c), 2)).collect();
        for r in 0..n {
            let oc = out.comp_mut(r);
            for i in 0..npts {
                let mut acc = 0.0;
                for c in 0..n {
                    let dd = if self.adjoint { d[c * n + r] } else { d[r * n + c] };
                    acc += dd * vxx[c][i];
                }
                let drift = if self.adjoint { -c_d } else { c_d };
                acc += drift * vx[r][i];
                oc[i] += acc;
            }
        }
    }

    /// One classical RK4 step of the linearized (or adjoint) equation.
    /// Fourth-order accurate; requires dt below the explicit diffusive
    /// stability bound, which `rk4_max_dt` provides.
    pub fn step_linear_rk4(
        &self,
        v: &Field,
        base0: (&Field, Option<&Field>),
        base_half: (&Field, Option<&Field>),
        base1: (&Field, Option<&Field>),
    ) -> Field {
        let dt = self.dt;
        let mut k1 = Field::zeros(self.n, self.grid.n_points);
        self.linear_rhs(base0.0, base0.1, v, &mut k1);
        let mut stage = v.clone();
        stage.axpy(0.5 * dt, &k1);
        let mut k2 = Field::zeros(self.n, self.grid.n_points);
        self.linear_rhs(base_half.0, base_half.1, &stage, &mut k2);
        let mut stage = v.clone();
        stage.axpy(0.5 * dt, &k2);
        let mut k3 = Field::zeros(self.n, self.grid.n_points);
        self.linear_rhs(base_half.0, base_half.1, &stage, &mut k3);
        let mut stage = v.clone();
        stage.axpy(dt, &k3);
        let mut k4 = Field::zeros(self.n, self.grid.n_points);
        self.linear_rhs(base1.0, base1.1, &stage, &mut k4);
        let mut out = v.clone();
        out.axpy(dt / 6.0, &k1);
        out.axpy(dt / 3.0, &k2);
        out.axpy(dt / 3.0, &k3);
        out.axpy(dt / 6.0, &k4);
        out
    }

    /// Largest stable RK4 step for the spectrally discretized diffusion.
    pub fn rk4_max_dt(&self) -> f64 {
        let n = self.n;
        let d = self.model.diffusion();
        // conservative spectral-radius estimate of D via the row-sum norm
        let dnorm = (0..n)
            .map(|r| (0..n).map(|c| d[r * n + c].abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
        let kmax = self.ops.k_max();
        2.5 / (kmax * kmax * dnorm + 10.0)
    }

    /// One ETD2RK step of the linearized (or adjoint) equation; `base_at`
    /// supplies the base state at the stage times.
    pub fn step_linear(&self, v: &Field, base0: (&Field, Option<&Field>), base1: (&Field, Option<&Field>)) -> Field {
        let mut nl = Field::zeros(self.n, self.grid.n_points);
        self.linear_term(base0.0, base0.1, v, &mut nl);
        let v_hat = self.to_hat(v);
        let nl_hat = self.to_hat(&nl);
        let mut a_hat = vec![vec![C64::new(0.0, 0.0); self.grid.n_points]; self.n];
        self.apply_blocks(&self.e, &v_hat, &mut a_hat);
        self.add_blocks(&self.p1, &nl_hat, &mut a_hat);
        let a = self.from_hat(&a_hat);
        let mut nl_a = Field::zeros(self.n, self.grid.n_points);
        self.linear_term(base1.0, base1.1, &a, &mut nl_a);
        let mut diff_hat = self.to_hat(&nl_a);
        for c in 0..self.n {
            for j in 0..self.grid.n_points {
                diff_hat[c][j] -= nl_hat[c][j];
            }
        }
        self.add_blocks(&self.p2, &diff_hat, &mut a_hat);
        self.from_hat(&a_hat)
    }

    pub fn spatial_derivative(&self, f: &Field) -> Field {
        let mut out = Field::zeros(f.n_comp(), f.len());
        for c in 0..f.n_comp() {
            let d = self.ops.deriv(f.comp(c), 1);
            out.comp_mut(c).copy_from_slice(&d);
        }
        out
    }
}

fn steps_for(t_span: f64, dt: f64) -> Result<usize> {
    let raw = t_span / dt;
    let steps = raw.round() as usize;
    if steps == 0 || (raw - steps as f64).abs() > 1e-8 * raw.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "time span {t_span} is not an integer multiple of dt {dt}"
        )));
    }
    Ok(steps)
}

/// Evolve the nonlinear system from `u0` over `[t0, t0 + t_span]`.
pub fn evolve_nonlinear(
    model: &ReactionDiffusionModel,
    grid: Grid1D,
    u0: &Field,
    t0: f64,
    t_span: f64,
    dt: f64,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    if u0.n_comp() != model.n() || u0.len() != grid.n_points {
        return Err(Error::DimensionMismatch("initial data vs model/grid".into()));
    }
    if !u0.is_finite() {
        return Err(Error::NonFinite("initial data".into()));
    }
    let steps = steps_for(t_span, dt)?;
    let mut stepper = Stepper::new(model, grid, dt)?;
    if matches!(grid.bc, Boundary::FarFieldNeumann { .. }) {
        stepper.set_sponge_reference(u0.clone());
    }
    if opts.check_step && !stepper.explicit_step_ok(u0) {
        return Err(Error::StepConstraint(format!(
            "dt = {dt} too large for the explicit reaction terms"
        )));
    }
    let mut times = vec![t0];
    let mut frames = vec![u0.clone()];
    let mut u = u0.clone();
    for s in 1..=steps {
        u = stepper.step_nonlinear(&u);
        let sup = u.sup_norm();
        if !sup.is_finite() || sup > opts.sup_cap {
            return Err(Error::Diverged(format!(
                "sup norm {sup} at t = {}",
                t0 + s as f64 * dt
            )));
        }
        if s % opts.store_every == 0 || s == steps {
            times.push(t0 + s as f64 * dt);
            frames.push(u.clone());
        }
    }
    Ok(Trajectory {
        grid,
        n_comp: model.n(),
        times,
        frames,
        dt,
    })
}

fn eval_base_pair(
    stepper: &Stepper,
    base: &dyn BaseState,
    t: f64,
    needs_ux: bool,
    buf: &mut Field,
) -> Result<(Field, Option<Field>)> {
    base.eval_into(t, buf)?;
    let u = buf.clone();
    let ux = if needs_ux {
        Some(stepper.spatial_derivative(&u))
    } else {
        None
    };
    Ok((u, ux))
}

/// Evolve the linearization about `base` from `v0` at `t0` to `t0 + t_span`.
pub fn evolve_linearized(
    model: &ReactionDiffusionModel,
    base: &dyn BaseState,
    v0: &Field,
    t0: f64,
    t_span: f64,
    dt: f64,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    let grid = base.grid();
    if v0.n_comp() != model.n() || v0.len() != grid.n_points {
        return Err(Error::DimensionMismatch("initial data vs model/grid".into()));
    }
    let (b0, b1) = base.time_range();
    if t0 < b0 - 1e-9 || t0 + t_span > b1 + 1e-9 {
        return Err(Error::OutOfRange(format!(
            "base state covers [{b0}, {b1}], requested [{t0}, {}]",
            t0 + t_span
        )));
    }
    let steps = steps_for(t_span, dt)?;
    let stepper = Stepper::new(model, grid, dt)?;
    let needs_ux = model.depends_on_ux_or_x();
    let mut buf = Field::zeros(model.n(), grid.n_points);
    let mut times = vec![t0];
    let mut frames = vec![v0.clone()];
    let mut v = v0.clone();
    let mut base_now = eval_base_pair(&stepper, base, t0, needs_ux, &mut buf)?;
    for s in 1..=steps {
        let t_next = t0 + s as f64 * dt;
        let base_next = eval_base_pair(&stepper, base, t_next, needs_ux, &mut buf)?;
        v = stepper.step_linear(
            &v,
            (&base_now.0, base_now.1.as_ref()),
            (&base_next.0, base_next.1.as_ref()),
        );
        let sup = v.sup_norm();
        if !sup.is_finite() || sup > opts.sup_cap {
            return Err(Error::Diverged(format!("sup norm {sup} at t = {t_next}")));
        }
        base_now = base_next;
        if s % opts.store_every == 0 || s == steps {
            times.push(t_next);
            frames.push(v.clone());
        }
    }
    Ok(Trajectory {
        grid,
        n_comp: model.n(),
        times,
        frames,
        dt,
    })
}

/// Fourth-order (classical RK4) variant of `evolve_linearized`, preferred
/// for period maps where the second-order multiplier bias matters. The step
/// must satisfy the explicit diffusive stability bound.
pub fn evolve_linearized_rk4(
    model: &ReactionDiffusionModel,
    base: &dyn BaseState,
    v0: &Field,
    t0: f64,
    t_span: f64,
    dt: f64,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    let grid = base.grid();
    if v0.n_comp() != model.n() || v0.len() != grid.n_points {
        return Err(Error::DimensionMismatch("initial data vs model/grid".into()));
    }
    let steps = steps_for(t_span, dt)?;
    let stepper = Stepper::new(model, grid, dt)?;
    if dt > stepper.rk4_max_dt() {
        return Err(Error::StepConstraint(format!(
            "dt = {dt} exceeds the RK4 diffusive bound {}",
            stepper.rk4_max_dt()
        )));
    }
    let needs_ux = model.depends_on_ux_or_x();
    let mut buf = Field::zeros(model.n(), grid.n_points);
    let mut times = vec![t0];
    let mut frames = vec![v0.clone()];
    let mut v = v0.clone();
    let mut base_now = eval_base_pair(&stepper, base, t0, needs_ux, &mut buf)?;
    for s in 1..=steps {
        let t_mid = t0 + (s as f64 - 0.5) * dt;
        let t_next = t0 + s as f64 * dt;
        let base_mid = eval_base_pair(&stepper, base, t_mid, needs_ux, &mut buf)?;
        let base_next = eval_base_pair(&stepper, base, t_next, needs_ux, &mut buf)?;
        v = stepper.step_linear_rk4(
            &v,
            (&base_now.0, base_now.1.as_ref()),
            (&base_mid.0, base_mid.1.as_ref()),
            (&base_next.0, base_next.1.as_ref()),
        );
        let sup = v.sup_norm();
        if !sup.is_finite() || sup > opts.sup_cap {
            return Err(Error::Diverged(format!("sup norm {sup} at t = {t_next}")));
        }
        base_now = base_next;
        if s % opts.store_every == 0 || s == steps {
            times.push(t_next);
            frames.push(v.clone());
        }
    }
    Ok(Trajectory {
        grid,
        n_comp: model.n(),
        times,
        frames,
        dt,
    })
}

/// Fourth-order variant of `evolve_adjoint`.
pub fn evolve_adjoint_rk4(
    model: &ReactionDiffusionModel,
    base: &dyn BaseState,
    w_final: &Field,
    t0: f64,
    t_span: f64,
    dt: f64,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    let grid = base.grid();
    if w_final.n_comp() != model.n() || w_final.len() != grid.n_points {
        return Err(Error::DimensionMismatch("final data vs model/grid".into()));
    }
    let steps = steps_for(t_span, dt)?;
    let stepper = Stepper::new_adjoint(model, grid, dt)?;
    if dt > stepper.rk4_max_dt() {
        return Err(Error::StepConstraint(format!(
            "dt = {dt} exceeds the RK4 diffusive bound {}",
            stepper.rk4_max_dt()
        )));
    }
    let needs_ux = model.depends_on_ux_or_x();
    let t_end = t0 + t_span;
    let mut buf = Field::zeros(model.n(), grid.n_points);
    let mut times = vec![t_end];
    let mut frames = vec![w_final.clone()];
    let mut w = w_final.clone();
    let mut base_now = eval_base_pair(&stepper, base, t_end, needs_ux, &mut buf)?;
    for s in 1..=steps {
        let t_mid = t_end - (s as f64 - 0.5) * dt;
        let t_next = t_end - s as f64 * dt;
        let base_mid = eval_base_pair(&stepper, base, t_mid, needs_ux, &mut buf)?;
        let base_next = eval_base_pair(&stepper, base, t_next, needs_ux, &mut buf)?;
        w = stepper.step_linear_rk4(
            &w,
            (&base_now.0, base_now.1.as_ref()),
            (&base_mid.0, base_mid.1.as_ref()),
            (&base_next.0, base_next.1.as_ref()),
        );
        let sup = w.sup_norm();
        if !sup.is_finite() || sup > opts.sup_cap {
            return Err(Error::Diverged(format!("sup norm {sup} at t = {t_next}")));
        }
        base_now = base_next;
        if s % opts.store_every == 0 || s == steps {
            times.push(t_next);
            frames.push(w.clone());
        }
    }
    times.reverse();
    frames.reverse();
    Ok(Trajectory {
        grid,
        n_comp: model.n(),
        times,
        frames,
        dt,
    })
}

/// Solve the adjoint equation backward from `w_T` at `t0 + t_span` down to
/// `t0`. The returned trajectory is reported in forward time: its frame at
/// time t is w(t).
pub fn evolve_adjoint(
    model: &ReactionDiffusionModel,
    base: &dyn BaseState,
    w_final: &Field,
    t0: f64,
    t_span: f64,
    dt: f64,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    let grid = base.grid();
    if w_final.n_comp() != model.n() || w_final.len() != grid.n_points {
        return Err(Error::DimensionMismatch("final data vs model/grid".into()));
    }
    let (b0, b1) = base.time_range();
    if t0 < b0 - 1e-9 || t0 + t_span > b1 + 1e-9 {
        return Err(Error::OutOfRange(format!(
            "base state covers [{b0}, {b1}], requested [{t0}, {}]",
            t0 + t_span
        )));
    }
    let steps = steps_for(t_span, dt)?;
    let stepper = Stepper::new_adjoint(model, grid, dt)?;
    let needs_ux = model.depends_on_ux_or_x();
    let t_end = t0 + t_span;
    let mut buf = Field::zeros(model.n(), grid.n_points);
    // integrate in the reversed variable tau = t_end - t
    let mut times = vec![t_end];
    let mut frames = vec![w_final.clone()];
    let mut w = w_final.clone();
    let mut base_now = eval_base_pair(&stepper, base, t_end, needs_ux, &mut buf)?;
    for s in 1..=steps {
        let t_next = t_end - s as f64 * dt;
        let base_next = eval_base_pair(&stepper, base, t_next, needs_ux, &mut buf)?;
        w = stepper.step_linear(
            &w,
            (&base_now.0, base_now.1.as_ref()),
            (&base_next.0, base_next.1.as_ref()),
        );
        let sup = w.sup_norm();
        if !sup.is_finite() || sup > opts.sup_cap {
            return Err(Error::Diverged(format!("sup norm {sup} at t = {t_next}")));
        }
        base_now = base_next;
        if s % opts.store_every == 0 || s == steps {
            times.push(t_next);
            frames.push(w.clone());
        }
    }
    times.reverse();
    frames.reverse();
    Ok(Trajectory {
        grid,
        n_comp: model.n(),
        times,
        frames,
        dt,
    })
}
