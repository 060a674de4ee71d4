//! Fourier pseudo-spectral helpers on uniform periodic grids.
//!
//! Wavenumber layout for even `N`: `[0, 1, ..., N/2-1, -N/2, ..., -1] * pi/L`.
//! The Nyquist mode is zeroed in odd-order derivatives to keep real data real.

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

pub type C64 = Complex<f64>;

/// FFT plans and wavenumbers for one periodic grid.
pub struct SpectralOps {
    n: usize,
    /// Signed wavenumbers including the (negative) Nyquist entry.
    pub k: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl SpectralOps {
    /// `length` is the full domain length (`2L` for a grid on `[-L, L)`).
    pub fn new(n: usize, length: f64) -> Self {
        assert!(n % 2 == 0, "spectral grid must have even size");
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scale = 2.0 * PI / length;
        let mut k = vec![0.0; n];
        for (i, ki) in k.iter_mut().enumerate() {
            let m = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
            *ki = m * scale;
        }
        SpectralOps { n, k, fwd, inv }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&self, data: &[f64]) -> Vec<C64> {
        let mut buf: Vec<C64> = data.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        buf
    }

    pub fn inverse_real(&self, mut hat: Vec<C64>) -> Vec<f64> {
        self.inv.process(&mut hat);
        let norm = 1.0 / self.n as f64;
        hat.iter().map(|c| c.re * norm).collect()
    }

    pub fn forward_complex(&self, data: &mut [C64]) {
        self.fwd.process(data);
    }

    pub fn inverse_complex(&self, data: &mut [C64]) {
        self.inv.process(data);
        let norm = 1.0 / self.n as f64;
        for v in data.iter_mut() {
            *v *= norm;
        }
    }

    /// Spectral derivative of given order; Nyquist zeroed for odd orders.
    pub fn deriv(&self, data: &[f64], order: u32) -> Vec<f64> {
        let mut hat = self.forward(data);
        for (i, h) in hat.iter_mut().enumerate() {
            let ik = C64::new(0.0, self.k[i]);
            *h *= ik.powu(order);
        }
        if order % 2 == 1 {
            hat[self.n / 2] = C64::new(0.0, 0.0);
        }
        self.inverse_real(hat)
    }

    /// Translate periodic data by `shift`: result(x) = data(x - shift).
    pub fn shift(&self, data: &[f64], shift: f64) -> Vec<f64> {
        let mut hat = self.forward(data);
        for (i, h) in hat.iter_mut().enumerate() {
            let phase = C64::from_polar(1.0, -self.k[i] * shift);
            *h *= phase;
        }
        self.inverse_real(hat)
    }

    /// Analytic signal of real data: spectrum with negative frequencies zeroed
    /// and positive ones doubled.
    pub fn analytic_signal(&self, data: &[f64]) -> Vec<C64> {
        let mut hat = self.forward(data);
        let n = self.n;
        for (i, h) in hat.iter_mut().enumerate() {
            if i == 0 || i == n / 2 {
                // keep DC and Nyquist as-is
            } else if i < n / 2 {
                *h *= 2.0;
            } else {
                *h = C64::new(0.0, 0.0);
            }
        }
        self.inv.process(&mut hat);
        let norm = 1.0 / n as f64;
        hat.iter_mut().for_each(|v| *v *= norm);
        hat
    }

    /// Max wavenumber magnitude (spectral CFL helper).
    pub fn k_max(&self) -> f64 {
        self.k[self.n / 2].abs()
    }
}

/// Trigonometric interpolation of periodic samples at one off-grid point.
/// O(N) per evaluation; use the cubic variant in inner loops.
pub fn trig_interp(data: &[f64], length: f64, x0: f64, x: f64) -> f64 {
    let n = data.len();
    debug_assert!(n % 2 == 0);
    let h = length / n as f64;
    let t = (x - x0) / h; // in grid units
    // Dirichlet-kernel barycentric form for even N
    let mut num = 0.0;
    let mut den = 0.0;
    for (j, &dj) in data.iter().enumerate() {
        let d = t - j as f64;
        if d.abs() < 1e-13 {
            return dj;
        }
        let w = ((PI * d / n as f64).tan()).recip() * if j % 2 == 0 { 1.0 } else { -1.0 };
        num += w * dj;
        den += w;
    }
    num / den
}

/// Periodic cubic (Catmull-Rom) interpolation of uniform samples.
pub fn cubic_interp_periodic(data: &[f64], length: f64, x0: f64, x: f64) -> f64 {
    let n = data.len();
    let h = length / n as f64;
    let t = ((x - x0) / h).rem_euclid(n as f64);
    let i1 = t.floor() as usize % n;
    let s = t - t.floor();
    let i0 = (i1 + n - 1) % n;
    let i2 = (i1 + 1) % n;
    let i3 = (i1 + 2) % n;
    let (p0, p1, p2, p3) = (data[i0], data[i1], data[i2], data[i3]);
    let a = -0.5 * p0 + 1.5 * p1 - 1.5 * p2 + 0.5 * p3;
    let b = p0 - 2.5 * p1 + 2.0 * p2 - 0.5 * p3;
    let c = -0.5 * p0 + 0.5 * p2;
    ((a * s + b) * s + c) * s + p1
}

/// Dense Fourier differentiation matrices on a 2*pi-periodic grid of even size.
/// Entries per Trefethen, "Spectral Methods in MATLAB", chapter 3.
pub fn fourier_diff_matrices(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n % 2 == 0);
    let h = 2.0 * PI / n as f64;
    let mut d1 = vec![0.0; n * n];
    let mut d2 = vec![0.0; n * n];
    let d2_diag = -PI * PI / (3.0 * h * h) - 1.0 / 6.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                d2[i * n + j] = d2_diag;
            } else {
                let d = (i as isize - j as isize) as f64;
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                let half = 0.5 * d * h;
                d1[i * n + j] = sign * 0.5 / half.tan();
                d2[i * n + j] = -sign * 0.5 / (half.sin() * half.sin());
            }
        }
    }
    (d1, d2)
}

/// Smooth even surrogate for |x|: s*log(2 cosh(x/s)). Slope tends to +-1,
/// curvature scale s near the origin.
pub fn smooth_abs(x: f64, s: f64) -> f64 {
    let z = (x / s).abs();
    // log(2 cosh z) = z + log(1 + exp(-2z)), stable for large z
    s * (z + (1.0 + (-2.0 * z).exp()).ln())
}

/// `smooth_abs` capped smoothly at `cap` so it flattens before a periodic wrap.
pub fn smooth_abs_capped(x: f64, s: f64, cap: f64) -> f64 {
    let v = smooth_abs(x, s);
    let sc = 0.1 * cap;
    // smooth minimum of v and cap
    -sc * ((-v / sc).exp() + (-cap / sc).exp()).ln()
}

/// Abramowitz-Stegun 7.1.26 rational approximation of erf (|error| < 1.5e-7).
pub fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_derivative_of_sine() {
        let n = 64;
        let length = 2.0 * PI;
        let ops = SpectralOps::new(n, length);
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * length / n as f64).collect();
        let data: Vec<f64> = xs.iter().map(|x| (3.0 * x).sin()).collect();
        let d1 = ops.deriv(&data, 1);
        let d2 = ops.deriv(&data, 2);
        for i in 0..n {
            assert!((d1[i] - 3.0 * (3.0 * xs[i]).cos()).abs() < 1e-10);
            assert!((d2[i] + 9.0 * (3.0 * xs[i]).sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn shift_translates_data() {
        let n = 128;
        let length = 10.0;
        let ops = SpectralOps::new(n, length);
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * length / n as f64).collect();
        let data: Vec<f64> = xs
            .iter()
            .map(|x| (2.0 * PI * x / length).cos() + 0.3 * (6.0 * PI * x / length).sin())
            .collect();
        let shifted = ops.shift(&data, 1.7);
        for i in 0..n {
            let x = xs[i] - 1.7;
            let expect = (2.0 * PI * x / length).cos() + 0.3 * (6.0 * PI * x / length).sin();
            assert!((shifted[i] - expect).abs() < 1e-11);
        }
    }

    #[test]
    fn analytic_signal_of_cosine_is_unit_circle() {
        let n = 256;
        let ops = SpectralOps::new(n, 2.0 * PI);
        let data: Vec<f64> = (0..n)
            .map(|i| (5.0 * (i as f64) * 2.0 * PI / n as f64).cos())
            .collect();
        let z = ops.analytic_signal(&data);
        for zi in &z {
            assert!((zi.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn diff_matrices_match_fft_derivative() {
        let n = 32;
        let (d1, d2) = fourier_diff_matrices(n);
        let ops = SpectralOps::new(n, 2.0 * PI);
        let data: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 * 2.0 * PI / n as f64;
                (2.0 * t).sin() + 0.5 * (3.0 * t).cos()
            })
            .collect();
        let fft_d1 = ops.deriv(&data, 1);
        let fft_d2 = ops.deriv(&data, 2);
        for i in 0..n {
            let mut m1 = 0.0;
            let mut m2 = 0.0;
            for j in 0..n {
                m1 += d1[i * n + j] * data[j];
                m2 += d2[i * n + j] * data[j];
            }
            assert!((m1 - fft_d1[i]).abs() < 1e-9, "d1 row {i}");
            assert!((m2 - fft_d2[i]).abs() < 1e-8, "d2 row {i}");
        }
    }

    #[test]
    fn cubic_and_trig_interpolation() {
        let n = 64;
        let length = 2.0 * PI;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * length / n as f64).collect();
        let data: Vec<f64> = xs.iter().map(|x| (2.0 * x).sin()).collect();
        let x = 1.2345_f64;
        let exact = (2.0 * x).sin();
        assert!((trig_interp(&data, length, 0.0, x) - exact).abs() < 1e-10);
        assert!((cubic_interp_periodic(&data, length, 0.0, x) - exact).abs() < 2e-4);
    }

    #[test]
    fn erf_reference_values() {
        // rational approximation carries ~1.5e-7 absolute error
        assert!((erf(0.0)).abs() < 2e-7);
        assert!((erf(1.0) - 0.8427007929497149).abs() < 2e-7);
        assert!((erf(-1.0) + 0.8427007929497149).abs() < 2e-7);
        assert!((erf(3.0) - 0.9999779095030014).abs() < 2e-7);
    }

    #[test]
    fn smooth_abs_limits() {
        assert!((smooth_abs(10.0, 0.5) - 10.0).abs() < 1e-8);
        assert!((smooth_abs(-10.0, 0.5) - 10.0).abs() < 1e-8);
        // even and smooth at 0
        assert!((smooth_abs(0.0, 0.5) - 0.5 * (2.0f64).ln()).abs() < 1e-12);
        // capped version flattens
        let c = smooth_abs_capped(100.0, 0.5, 20.0);
        assert!(c < 20.0 + 1e-9 && c > 19.0);
    }
}
