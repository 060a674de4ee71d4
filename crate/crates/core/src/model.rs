//! Reaction-diffusion systems u_t = D u_xx + c_d u_x + f(u, u_x, x) and the
//! built-in model family. The u_x and x arguments exist to host the phase
//! equation with x-dependent drift; pure RD models ignore them.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type VecFn = Arc<dyn Fn(&[f64], &[f64], f64, &mut [f64]) + Send + Sync>;
type MatFn = Arc<dyn Fn(&[f64], &[f64], f64, &mut [f64]) + Send + Sync>;

/// A reaction-diffusion system with constant diffusion matrix and frame speed.
/// Immutable after construction; cheap to clone and safe to share.
#[derive(Clone)]
pub struct ReactionDiffusionModel {
    n: usize,
    /// n x n constant diffusion matrix, row-major.
    diffusion: Vec<f64>,
    /// Comoving frame speed c_d multiplying u_x.
    frame_speed: f64,
    reaction: VecFn,
    jacobian_u: MatFn,
    jacobian_ux: MatFn,
    /// True if the reaction actually reads u_x or x.
    depends_on_ux_or_x: bool,
    pub params: BTreeMap<String, f64>,
    pub name: String,
}

impl fmt::Debug for ReactionDiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReactionDiffusionModel")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("diffusion", &self.diffusion)
            .field("frame_speed", &self.frame_speed)
            .field("params", &self.params)
            .finish()
    }
}

impl ReactionDiffusionModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        n: usize,
        diffusion: Vec<f64>,
        frame_speed: f64,
        reaction: VecFn,
        jacobian_u: MatFn,
        jacobian_ux: MatFn,
        depends_on_ux_or_x: bool,
        params: BTreeMap<String, f64>,
    ) -> Result<Self> {
        if diffusion.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "diffusion matrix must be {n}x{n}"
            )));
        }
        if !diffusion.iter().all(|v| v.is_finite()) || !frame_speed.is_finite() {
            return Err(Error::NonFinite("model coefficients".into()));
        }
        let model = ReactionDiffusionModel {
            n,
            diffusion,
            frame_speed,
            reaction,
            jacobian_u,
            jacobian_ux,
            depends_on_ux_or_x,
            params,
            name: name.into(),
        };
        model.check_diffusion()?;
        Ok(model)
    }

    /// Symmetric part of D must be positive definite (checked via leading
    /// minors; n stays tiny here).
    fn check_diffusion(&self) -> Result<()> {
        let n = self.n;
        let mut sym = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                sym[i * n + j] = 0.5 * (self.diffusion[i * n + j] + self.diffusion[j * n + i]);
            }
        }
        // Cholesky without pivoting doubles as the definiteness test
        for i in 0..n {
            for j in 0..=i {
                let mut s = sym[i * n + j];
                for k in 0..j {
                    s -= sym[i * n + k] * sym[j * n + k];
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(Error::InvalidParameter(
                            "symmetric part of diffusion matrix is not positive definite".into(),
                        ));
                    }
                    sym[i * n + j] = s.sqrt();
                } else {
                    sym[i * n + j] = s / sym[j * n + j];
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn diffusion(&self) -> &[f64] {
        &self.diffusion
    }

    pub fn frame_speed(&self) -> f64 {
        self.frame_speed
    }

    pub fn depends_on_ux_or_x(&self) -> bool {
        self.depends_on_ux_or_x
    }

    /// Evaluate f(u, u_x, x) with input validation.
    pub fn reaction(&self, u: &[f64], u_x: &[f64], x: f64) -> Result<Vec<f64>> {
        if u.len() != self.n || u_x.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "state vectors must have length {}",
                self.n
            )));
        }
        if !u.iter().chain(u_x.iter()).all(|v| v.is_finite()) || !x.is_finite() {
            return Err(Error::NonFinite("reaction input".into()));
        }
        let mut out = vec![0.0; self.n];
        (self.reaction)(u, u_x, x, &mut out);
        Ok(out)
    }

    /// Unchecked fast path used inside time-stepping loops.
    #[inline]
    pub fn reaction_into(&self, u: &[f64], u_x: &[f64], x: f64, out: &mut [f64]) {
        (self.reaction)(u, u_x, x, out);
    }

    #[inline]
    pub fn jacobian_u_into(&self, u: &[f64], u_x: &[f64], x: f64, out: &mut [f64]) {
        (self.jacobian_u)(u, u_x, x, out);
    }

    #[inline]
    pub fn jacobian_ux_into(&self, u: &[f64], u_x: &[f64], x: f64, out: &mut [f64]) {
        (self.jacobian_ux)(u, u_x, x, out);
    }

    /// Same model with a different frame speed (used when folding a measured
    /// defect drift into the equations).
    pub fn with_frame_speed(&self, c_d: f64) -> Self {
        let mut m = self.clone();
        m.frame_speed = c_d;
        m
    }

    /// Same dynamics with time rescaled by `omega` (t -> omega * t), which
    /// divides every right-hand side term by omega. Used to normalize a
    /// defect period to 2*pi.
    pub fn time_rescaled(&self, omega: f64) -> Self {
        assert!(omega > 0.0);
        let n = self.n;
        let inv = 1.0 / omega;
        let reaction = self.reaction.clone();
        let jac_u = self.jacobian_u.clone();
        let jac_ux = self.jacobian_ux.clone();
        ReactionDiffusionModel {
            n,
            diffusion: self.diffusion.iter().map(|d| d * inv).collect(),
            frame_speed: self.frame_speed * inv,
            reaction: Arc::new(move |u, ux, x, out| {
                reaction(u, ux, x, out);
                for v in out.iter_mut() {
                    *v *= inv;
                }
            }),
            jacobian_u: Arc::new(move |u, ux, x, out| {
                jac_u(u, ux, x, out);
                for v in out.iter_mut() {
                    *v *= inv;
                }
            }),
            jacobian_ux: Arc::new(move |u, ux, x, out| {
                jac_ux(u, ux, x, out);
                for v in out.iter_mut() {
                    *v *= inv;
                }
            }),
            depends_on_ux_or_x: self.depends_on_ux_or_x,
            params: self.params.clone(),
            name: format!("{}@omega={omega}", self.name),
        }
    }

    /// Max relative error between the analytic Jacobians and central finite
    /// differences of the reaction at the given state.
    pub fn jacobian_fd_error(&self, u: &[f64], u_x: &[f64], x: f64) -> f64 {
        let n = self.n;
        let h = 1e-6;
        let mut jac_u = vec![0.0; n * n];
        let mut jac_ux = vec![0.0; n * n];
        (self.jacobian_u)(u, u_x, x, &mut jac_u);
        (self.jacobian_ux)(u, u_x, x, &mut jac_ux);
        let mut worst: f64 = 0.0;
        let scale = jac_u
            .iter()
            .chain(jac_ux.iter())
            .fold(1.0f64, |m, v| m.max(v.abs()));
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        for j in 0..n {
            let mut up = u.to_vec();
            let mut um = u.to_vec();
            up[j] += h;
            um[j] -= h;
            (self.reaction)(&up, u_x, x, &mut fp);
            (self.reaction)(&um, u_x, x, &mut fm);
            for i in 0..n {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                worst = worst.max((fd - jac_u[i * n + j]).abs() / scale);
            }
            let mut uxp = u_x.to_vec();
            let mut uxm = u_x.to_vec();
            uxp[j] += h;
            uxm[j] -= h;
            (self.reaction)(u, &uxp, x, &mut fp);
            (self.reaction)(u, &uxm, x, &mut fm);
            for i in 0..n {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                worst = worst.max((fd - jac_ux[i * n + j]).abs() / scale);
            }
        }
        worst
    }
}

/// Identifier plus parameters for the built-in model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum BuiltinModelId {
    /// Complex cubic Ginzburg-Landau in real 2-component form.
    CglCubic { alpha: f64, beta: f64, mu: f64 },
    /// Complex cubic-quintic Ginzburg-Landau in real 2-component form.
    CglCubicQuintic {
        alpha: f64,
        beta: f64,
        gamma1: f64,
        gamma2: f64,
        mu: f64,
    },
    /// Scalar phase model phi_t = phi_xx - tanh(c x / 2) phi_x + phi_x^2.
    ToyBurgers { c: f64 },
}

impl BuiltinModelId {
    /// Parse from a name and key-value parameters (config-file path).
    pub fn parse(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let get = |key: &str, default: Option<f64>| -> Result<f64> {
            match params.get(key) {
                Some(&v) if v.is_finite() => Ok(v),
                Some(_) => Err(Error::NonFinite(format!("parameter `{key}`"))),
                None => default.ok_or_else(|| {
                    Error::InvalidParameter(format!("model `{name}` needs parameter `{key}`"))
                }),
            }
        };
        match name {
            "cgl_cubic" => Ok(BuiltinModelId::CglCubic {
                alpha: get("alpha", Some(0.0))?,
                beta: get("beta", Some(0.0))?,
                mu: get("mu", Some(1.0))?,
            }),
            "cgl_cubic_quintic" => Ok(BuiltinModelId::CglCubicQuintic {
                alpha: get("alpha", Some(0.0))?,
                beta: get("beta", Some(0.0))?,
                gamma1: get("gamma1", Some(0.0))?,
                gamma2: get("gamma2", Some(0.0))?,
                mu: get("mu", Some(1.0))?,
            }),
            "toy_burgers" => Ok(BuiltinModelId::ToyBurgers { c: get("c", Some(1.0))? }),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }
}

/// Construct a built-in model.
pub fn build_builtin(id: &BuiltinModelId) -> Result<ReactionDiffusionModel> {
    match *id {
        BuiltinModelId::CglCubic { alpha, beta, mu } => {
            build_cgl("cgl_cubic", alpha, beta, 0.0, 0.0, mu)
        }
        BuiltinModelId::CglCubicQuintic {
            alpha,
            beta,
            gamma1,
            gamma2,
            mu,
        } => build_cgl("cgl_cubic_quintic", alpha, beta, gamma1, gamma2, mu),
        BuiltinModelId::ToyBurgers { c } => build_toy(c),
    }
}

/// Real form of A_t = (1+i alpha) A_xx + mu A - (1+i beta) A|A|^2
///                     + (gamma1 + i gamma2) A|A|^4 with A = u1 + i u2.
fn build_cgl(
    name: &str,
    alpha: f64,
    beta: f64,
    gamma1: f64,
    gamma2: f64,
    mu: f64,
) -> Result<ReactionDiffusionModel> {
    for (k, v) in [
        ("alpha", alpha),
        ("beta", beta),
        ("gamma1", gamma1),
        ("gamma2", gamma2),
        ("mu", mu),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("cgl parameter {k}")));
        }
    }
    let diffusion = vec![1.0, -alpha, alpha, 1.0];
    let reaction: VecFn = Arc::new(move |u, _ux, _x, out| {
        let (a, b) = (u[0], u[1]);
        let r2 = a * a + b * b;
        let r4 = r2 * r2;
        out[0] = mu * a - r2 * (a - beta * b) + r4 * (gamma1 * a - gamma2 * b);
        out[1] = mu * b - r2 * (beta * a + b) + r4 * (gamma2 * a + gamma1 * b);
    });
    let jacobian_u: MatFn = Arc::new(move |u, _ux, _x, out| {
        let (a, b) = (u[0], u[1]);
        let r2 = a * a + b * b;
        let r4 = r2 * r2;
        // d r2 = (2a, 2b); d r4 = (4 r2 a, 4 r2 b)
        out[0] = mu - (2.0 * a * a + r2) + beta * 2.0 * a * b
            + gamma1 * (4.0 * r2 * a * a + r4)
            - gamma2 * 4.0 * r2 * a * b;
        out[1] = -2.0 * b * a + beta * (r2 + 2.0 * b * b) + gamma1 * 4.0 * r2 * b * a
            - gamma2 * (r4 + 4.0 * r2 * b * b);
        out[2] = -beta * (r2 + 2.0 * a * a) - 2.0 * a * b
            + gamma2 * (r4 + 4.0 * r2 * a * a)
            + gamma1 * 4.0 * r2 * a * b;
        out[3] = mu - beta * 2.0 * a * b - (r2 + 2.0 * b * b)
            + gamma2 * 4.0 * r2 * a * b
            + gamma1 * (r4 + 4.0 * r2 * b * b);
    });
    let jacobian_ux: MatFn = Arc::new(|_u, _ux, _x, out| {
        out.fill(0.0);
    });
    let mut params = BTreeMap::new();
    params.insert("alpha".into(), alpha);
    params.insert("beta".into(), beta);
    params.insert("gamma1".into(), gamma1);
    params.insert("gamma2".into(), gamma2);
    params.insert("mu".into(), mu);
    ReactionDiffusionModel::new(
        name,
        2,
        diffusion,
        0.0,
        reaction,
        jacobian_u,
        jacobian_ux,
        false,
        params,
    )
}

/// phi_t = phi_xx - tanh(c x / 2) phi_x + phi_x^2, following the phase model
/// whose zero state is a standing source with characteristics +-1.
fn build_toy(c: f64) -> Result<ReactionDiffusionModel> {
    if !c.is_finite() {
        return Err(Error::NonFinite("toy parameter c".into()));
    }
    let reaction: VecFn = Arc::new(move |_u, ux, x, out| {
        let drift = -(0.5 * c * x).tanh();
        out[0] = drift * ux[0] + ux[0] * ux[0];
    });
    let jacobian_u: MatFn = Arc::new(|_u, _ux, _x, out| {
        out[0] = 0.0;
    });
    let jacobian_ux: MatFn = Arc::new(move |_u, ux, x, out| {
        out[0] = -(0.5 * c * x).tanh() + 2.0 * ux[0];
    });
    let mut params = BTreeMap::new();
    params.insert("c".into(), c);
    ReactionDiffusionModel::new(
        "toy_burgers",
        1,
        vec![1.0],
        0.0,
        reaction,
        jacobian_u,
        jacobian_ux,
        true,
        params,
    )
}
