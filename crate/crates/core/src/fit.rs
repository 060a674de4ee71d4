//! Small regression helpers shared by the measurement modules.

use serde::{Deserialize, Serialize};

/// Ordinary least squares line y = slope*x + intercept with R^2.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn line_fit(x: &[f64], y: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
        syy += (yi - my) * (yi - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 && sxx > 0.0 {
        (sxy * sxy) / (sxx * syy)
    } else {
        0.0
    };
    LineFit {
        slope,
        intercept,
        r2,
    }
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let f = line_fit(x, y);
    f.r2.sqrt() * f.slope.signum()
}

/// Fit y(t) ~= y_inf + amp * exp(-rate * t) by profiling over y_inf:
/// for each candidate limit, the remaining model is log-linear.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExpApproachFit {
    pub y_inf: f64,
    pub amp: f64,
    pub rate: f64,
    /// R^2 of the log-linear fit at the selected y_inf.
    pub r2: f64,
}

pub fn exp_approach_fit(t: &[f64], y: &[f64]) -> ExpApproachFit {
    assert_eq!(t.len(), y.len());
    assert!(t.len() >= 4);
    // bracket y_inf around the tail mean
    let tail = y.len() / 4;
    let tail_mean = y[y.len() - tail..].iter().sum::<f64>() / tail as f64;
    let span = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let scale = (span.1 - span.0).max(1e-300);

    let eval = |y_inf: f64| -> (f64, f64, f64) {
        // returns (rate, log-amp, r2); points too close to the limit are dropped
        let mut ts = Vec::new();
        let mut ls = Vec::new();
        for (&ti, &yi) in t.iter().zip(y) {
            let d = (yi - y_inf).abs();
            if d > 1e-14 * scale.max(1.0) {
                ts.push(ti);
                ls.push(d.ln());
            }
        }
        if ts.len() < 3 {
            return (0.0, 0.0, 0.0);
        }
        let f = line_fit(&ts, &ls);
        (-f.slope, f.intercept, f.r2)
    };

    // golden-section-style scan over candidate limits
    let mut best = (tail_mean, eval(tail_mean));
    let width = 0.5 * scale;
    let grid = 81;
    for i in 0..grid {
        let cand = tail_mean + width * (i as f64 / (grid - 1) as f64 - 0.5);
        let e = eval(cand);
        // prefer high r2 among positive-rate fits
        let better = (e.0 > 0.0 && best.1 .0 <= 0.0)
            || (e.0 > 0.0) == (best.1 .0 > 0.0) && e.2 > best.1 .2;
        if better {
            best = (cand, e);
        }
    }
    // refine around the winner
    let mut lo = best.0 - width / (grid - 1) as f64;
    let mut hi = best.0 + width / (grid - 1) as f64;
    for _ in 0..40 {
        let m1 = lo + (hi - lo) * 0.382;
        let m2 = lo + (hi - lo) * 0.618;
        let e1 = eval(m1);
        let e2 = eval(m2);
        if e1.2 >= e2.2 {
            hi = m2;
            if e1.2 > best.1 .2 && e1.0 > 0.0 {
                best = (m1, e1);
            }
        } else {
            lo = m1;
            if e2.2 > best.1 .2 && e2.0 > 0.0 {
                best = (m2, e2);
            }
        }
    }
    ExpApproachFit {
        y_inf: best.0,
        amp: best.1 .1.exp(),
        rate: best.1 .0,
        r2: best.1 .2,
    }
}

/// Least-squares coefficient a in y ~ a*g (no intercept).
pub fn projection_coeff(g: &[f64], y: &[f64]) -> f64 {
    let gg: f64 = g.iter().map(|v| v * v).sum();
    if gg == 0.0 {
        return 0.0;
    }
    let gy: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
    gy / gg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_exact() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = line_fit(&x, &y);
        assert!((f.slope - 2.0).abs() < 1e-14);
        assert!((f.intercept - 1.0).abs() < 1e-14);
        assert!((f.r2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn exp_approach_recovers_parameters() {
        let ts: Vec<f64> = (0..60).map(|i| i as f64 * 0.25).collect();
        let ys: Vec<f64> = ts.iter().map(|&t| 2.5 + 0.8 * (-0.6 * t).exp()).collect();
        let f = exp_approach_fit(&ts, &ys);
        assert!((f.y_inf - 2.5).abs() < 1e-5, "y_inf {}", f.y_inf);
        assert!((f.rate - 0.6).abs() < 1e-3, "rate {}", f.rate);
        assert!(f.r2 > 0.999);
    }

    #[test]
    fn pearson_signs() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let up = [0.1, 1.1, 2.0, 3.1];
        let down = [3.0, 2.1, 0.9, 0.1];
        assert!(pearson(&x, &up) > 0.99);
        assert!(pearson(&x, &down) < -0.99);
    }
}
