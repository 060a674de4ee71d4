use defectlab_core::evolve::{evolve_nonlinear, EvolveOptions};
use defectlab_core::grid::{Field, Grid1D};
use defectlab_core::model::{build_builtin, BuiltinModelId};
use defectlab_core::spectral::SpectralOps;

fn hole_seed(grid: &Grid1D, k0: f64, w: f64) -> Field {
    let l = grid.half_length;
    Field::from_fn(2, grid.n_points, |c, i| {
        let x = grid.x(i);
        let amp = (x / w).tanh() * ((l - x.abs()) / w).tanh();
        let ph = k0 * x.abs();
        if c == 0 { amp * ph.cos() } else { amp * ph.sin() }
    })
}

fn hole_state(grid: &Grid1D, f: &Field) -> (f64, f64, f64, f64) {
    let n = grid.n_points;
    let mut mn = f64::INFINITY; let mut mx: f64 = 0.0; let mut pos = 0.0;
    for i in 0..n {
        if grid.x(i).abs() > 0.5 * grid.half_length { continue; }
        let a = (f.get(0, i).powi(2) + f.get(1, i).powi(2)).sqrt();
        if a < mn { mn = a; pos = grid.x(i); }
        mx = mx.max(a);
    }
    let ops = SpectralOps::new(n, 2.0 * grid.half_length);
    let re = f.comp(0).to_vec(); let im = f.comp(1).to_vec();
    let dre = ops.deriv(&re, 1); let dim = ops.deriv(&im, 1);
    let kat = |x: f64| -> f64 {
        let i = grid.nearest_index(x);
        let m2 = re[i].powi(2) + im[i].powi(2);
        (dim[i] * re[i] - dre[i] * im[i]) / m2.max(1e-12)
    };
    (pos, mn / mx.max(1e-12), kat(pos + 10.0), kat(pos - 10.0))
}

#[test]
#[ignore]
fn validate_candidate() {
    let opts = EvolveOptions { store_every: usize::MAX, sup_cap: 1e4, check_step: false };
    for (g1, l, n) in [(0.0f64, 60.0f64, 512usize), (-0.05, 60.0, 512), (0.05, 60.0, 512), (0.0, 50.0, 512), (0.0, 70.0, 640)] {
        let model = build_builtin(&BuiltinModelId::CglCubicQuintic {
            alpha: -0.1, beta: -1.2, gamma1: g1, gamma2: 0.0, mu: 1.0,
        }).unwrap();
        let grid = Grid1D::periodic(l, n).unwrap();
        let mut u = hole_seed(&grid, 0.35, 2.0);
        print!("g1={g1} L={l} N={n}: ");
        let mut ok = true;
        // long settle
        for seg in 0..5 {
            match evolve_nonlinear(&model, grid, &u, 0.0, 200.0, 0.04, &opts) {
                Ok(t) => { u = t.last().clone(); }
                Err(e) => { println!("ERR at seg {seg}: {e}"); ok = false; break; }
            }
        }
        if !ok { continue; }
        let (pos, d, kp, km) = hole_state(&grid, &u);
        print!("settled[x={pos:.1} d={d:.3} k=({kp:.3},{km:.3})] ");
        // kick with a Gaussian perturbation on both components
        let mut kicked = u.clone();
        for c in 0..2 {
            for i in 0..grid.n_points {
                let x = grid.x(i);
                let bump = 0.05 * (-(x - 3.0) * (x - 3.0) / 4.0).exp();
                let v = kicked.get(c, i) + bump;
                kicked.set(c, i, v);
            }
        }
        match evolve_nonlinear(&model, grid, &kicked, 0.0, 400.0, 0.04, &opts) {
            Ok(t) => {
                let (pos, d, kp, km) = hole_state(&grid, t.last());
                println!("after kick [x={pos:.1} d={d:.3} k=({kp:.3},{km:.3})] {}", if d < 0.05 && pos.abs() < 3.0 { "RECOVERED" } else { "LOST" });
            }
            Err(e) => println!("kick ERR {e}"),
        }
    }
}

#[test]
#[ignore]
fn kick_recovery() {
    let opts = EvolveOptions { store_every: usize::MAX, sup_cap: 1e4, check_step: false };
    let model = build_builtin(&BuiltinModelId::CglCubicQuintic {
        alpha: -0.1, beta: -1.2, gamma1: 0.0, gamma2: 0.0, mu: 1.0,
    }).unwrap();
    let grid = Grid1D::periodic(60.0, 512).unwrap();
    let mut u = hole_seed(&grid, 0.35, 2.0);
    for _ in 0..5 {
        u = evolve_nonlinear(&model, grid, &u, 0.0, 200.0, 0.04, &opts).unwrap().last().clone();
    }
    for eps in [0.01f64, 0.001] {
        let mut kicked = u.clone();
        for c in 0..2 {
            for i in 0..grid.n_points {
                let x = grid.x(i);
                let bump = eps * (-(x - 3.0) * (x - 3.0) / 4.0).exp();
                let v = kicked.get(c, i) + bump;
                kicked.set(c, i, v);
            }
        }
        print!("eps={eps}: ");
        let mut w = kicked;
        for seg in 0..8 {
            w = evolve_nonlinear(&model, grid, &w, 0.0, 50.0, 0.04, &opts).unwrap().last().clone();
            let (pos, d, kp, km) = hole_state(&grid, &w);
            print!("[{} x={pos:.2} d={d:.4} k=({kp:.3},{km:.3})] ", 50 * (seg + 1));
        }
        println!();
    }
}

#[test]
#[ignore]
fn quintic_kick_scan() {
    let opts = EvolveOptions { store_every: usize::MAX, sup_cap: 1e4, check_step: false };
    for (g1, g2) in [
        (-0.02f64, 0.0f64), (-0.01, 0.0), (0.01, 0.0), (0.02, 0.0),
        (0.0, -0.02), (0.0, -0.01), (0.0, 0.01), (0.0, 0.02),
    ] {
        let model = build_builtin(&BuiltinModelId::CglCubicQuintic {
            alpha: -0.1, beta: -1.2, gamma1: g1, gamma2: g2, mu: 1.0,
        }).unwrap();
        let grid = Grid1D::periodic(60.0, 512).unwrap();
        let mut u = hole_seed(&grid, 0.35, 2.0);
        let mut ok = true;
        for _ in 0..3 {
            match evolve_nonlinear(&model, grid, &u, 0.0, 200.0, 0.04, &opts) {
                Ok(t) => u = t.last().clone(),
                Err(e) => { println!("g=({g1},{g2}): settle ERR {e}"); ok = false; break; }
            }
        }
        if !ok { continue; }
        let (pos0, d0, kp0, _) = hole_state(&grid, &u);
        if d0 > 0.05 || pos0.abs() > 2.0 {
            println!("g=({g1},{g2}): no hole after settle (d={d0:.2})");
            continue;
        }
        let mut kicked = u.clone();
        for c in 0..2 {
            for i in 0..grid.n_points {
                let x = grid.x(i);
                let bump = 0.002 * (-(x - 3.0) * (x - 3.0) / 4.0).exp();
                let v = kicked.get(c, i) + bump;
                kicked.set(c, i, v);
            }
        }
        print!("g=({g1},{g2}) q={kp0:.3}: ");
        let mut w = kicked;
        for seg in 0..6 {
            w = evolve_nonlinear(&model, grid, &w, 0.0, 75.0, 0.04, &opts).unwrap().last().clone();
            let (pos, d, _, _) = hole_state(&grid, &w);
            print!("[{} {pos:.2},{d:.3}] ", 75 * (seg + 1));
        }
        let (posf, df, _, _) = hole_state(&grid, &w);
        println!("{}", if df < 0.02 && posf.abs() < 2.0 { "STABLE" } else { "unstable" });
    }
}

#[test]
#[ignore]
fn breathing_check() {
    let opts = EvolveOptions { store_every: usize::MAX, sup_cap: 1e4, check_step: false };
    for (a, b, g1) in [
        (-0.1f64, -1.2f64, -0.01f64),
        (-0.1, -1.2, -0.005),
        (0.0, -1.1, -0.01),
        (0.0, -1.1, -0.02),
        (-0.1, -1.15, -0.01),
    ] {
        let model = build_builtin(&BuiltinModelId::CglCubicQuintic {
            alpha: a, beta: b, gamma1: g1, gamma2: 0.0, mu: 1.0,
        }).unwrap();
        let grid = Grid1D::periodic(60.0, 512).unwrap();
        let mut u = hole_seed(&grid, 0.35, 2.0);
        for _ in 0..3 {
            u = evolve_nonlinear(&model, grid, &u, 0.0, 200.0, 0.04, &opts).unwrap().last().clone();
        }
        let mut kicked = u.clone();
        for c in 0..2 {
            for i in 0..grid.n_points {
                let x = grid.x(i);
                let bump = 0.002 * (-(x - 3.0) * (x - 3.0) / 4.0).exp();
                let v = kicked.get(c, i) + bump;
                kicked.set(c, i, v);
            }
        }
        // long post-kick settle
        let mut w = kicked;
        for _ in 0..4 {
            w = evolve_nonlinear(&model, grid, &w, 0.0, 225.0, 0.04, &opts).unwrap().last().clone();
        }
        // dense trace of core amplitude over 30 units
        let dense = evolve_nonlinear(&model, grid, &w, 0.0, 30.0, 0.04, &EvolveOptions { store_every: 25, sup_cap: 1e4, check_step: false }).unwrap();
        let mut dmin = f64::INFINITY; let mut dmax: f64 = 0.0;
        let mut posmax: f64 = 0.0;
        for f in &dense.frames {
            let (pos, d, _, _) = hole_state(&grid, f);
            dmin = dmin.min(d); dmax = dmax.max(d);
            posmax = posmax.max(pos.abs());
        }
        println!("a={a} b={b} g1={g1}: post-kick d in [{dmin:.5},{dmax:.5}] |pos|max={posmax:.2}");
    }
}

#[test]
#[ignore]
fn grid_hunt() {
    let opts = EvolveOptions { store_every: usize::MAX, sup_cap: 1e4, check_step: false };
    let mut results: Vec<(f64,f64,f64,f64,String)> = Vec::new();
    for a in [-0.1f64, -0.2] {
        for b in [-1.2f64, -1.3, -1.4] {
            for g1 in [-0.03f64, -0.01, 0.0] {
                for g2 in [0.0f64, 0.02] {
                    let model = build_builtin(&BuiltinModelId::CglCubicQuintic {
                        alpha: a, beta: b, gamma1: g1, gamma2: g2, mu: 1.0,
                    }).unwrap();
                    let grid = Grid1D::periodic(60.0, 512).unwrap();
                    let mut u = hole_seed(&grid, 0.35, 2.0);
                    let mut verdict = String::new();
                    let mut ok = true;
                    for _ in 0..2 {
                        match evolve_nonlinear(&model, grid, &u, 0.0, 200.0, 0.04, &opts) {
                            Ok(t) => u = t.last().clone(),
                            Err(e) => { verdict = format!("settle ERR {e}"); ok = false; break; }
                        }
                    }
                    if ok {
                        let (pos0, d0, kp, _) = hole_state(&grid, &u);
                        if d0 > 0.02 || pos0.abs() > 2.0 {
                            verdict = format!("no-hole d={d0:.2}");
                        } else {
                            let mut kicked = u.clone();
                            for c in 0..2 {
                                for i in 0..grid.n_points {
                                    let x = grid.x(i);
                                    let bump = 0.002 * (-(x - 3.0) * (x - 3.0) / 4.0).exp();
                                    let v = kicked.get(c, i) + bump;
                                    kicked.set(c, i, v);
                                }
                            }
                            let mut w = kicked;
                            let mut failed = false;
                            for _ in 0..2 {
                                match evolve_nonlinear(&model, grid, &w, 0.0, 250.0, 0.04, &opts) {
                                    Ok(t) => w = t.last().clone(),
                                    Err(_) => { failed = true; break; }
                                }
                            }
                            if failed { verdict = "kick ERR".into(); }
                            else {
                                let dense = evolve_nonlinear(&model, grid, &w, 0.0, 30.0, 0.04, &EvolveOptions { store_every: 25, sup_cap: 1e4, check_step: false }).unwrap();
                                let mut dmax: f64 = 0.0; let mut posmax: f64 = 0.0;
                                for f in &dense.frames {
                                    let (pos, d, _, _) = hole_state(&grid, f);
                                    dmax = dmax.max(d); posmax = posmax.max(pos.abs());
                                }
                                verdict = format!("q={kp:.3} kick: dmax={dmax:.4} |pos|={posmax:.2} {}",
                                    if dmax < 0.01 && posmax < 2.5 { "CLEAN" } else { "" });
                            }
                        }
                    }
                    results.push((a, b, g1, g2, verdict));
                }
            }
        }
    }
    for (a, b, g1, g2, v) in results {
        println!("a={a} b={b} g=({g1},{g2}): {v}");
    }
}

#[test]
#[ignore]
fn candidate_spectral_check() {
    use defectlab_core::bloch::{bloch_spectrum, fit_dispersion_coeffs};
    use defectlab_core::wavetrain::{cgl_plane_wave_guess, solve_wavetrain, WaveTrainOptions};
    let model = build_builtin(&BuiltinModelId::CglCubicQuintic {
        alpha: -0.1, beta: -1.3, gamma1: -0.03, gamma2: 0.0, mu: 1.0,
    }).unwrap();
    for k in [0.425f64, 0.43, 0.42, 0.0] {
        let guess = cgl_plane_wave_guess(&model, k, 48);
        match solve_wavetrain(&model, k, &guess, &WaveTrainOptions::default()) {
            Ok(wt) => {
                let mut grid = vec![0.0];
                for i in 1..=8 { grid.push(0.05 * i as f64 / 8.0); grid.push(-0.05 * i as f64 / 8.0); }
                match bloch_spectrum(&wt, &model, &grid) {
                    Ok(curve) => {
                        let fit = fit_dispersion_coeffs(&curve, 0.05).unwrap();
                        println!("k={k}: omega={:.4} c={:.4} d={:.4} gap={:.4} mult={}", wt.omega, fit.c, fit.d, curve.gap_at_zero, curve.zero_multiplicity);
                    }
                    Err(e) => println!("k={k}: bloch ERR {e}"),
                }
            }
            Err(e) => println!("k={k}: wavetrain ERR {e}"),
        }
    }
    // long post-kick relaxation for the winner
    let opts = EvolveOptions { store_every: usize::MAX, sup_cap: 1e4, check_step: false };
    let grid = Grid1D::periodic(60.0, 512).unwrap();
    let mut u = hole_seed(&grid, 0.35, 2.0);
    for _ in 0..3 {
        u = evolve_nonlinear(&model, grid, &u, 0.0, 200.0, 0.04, &opts).unwrap().last().clone();
    }
    for eps in [0.002f64, 0.01] {
        let mut kicked = u.clone();
        for c in 0..2 {
            for i in 0..grid.n_points {
                let x = grid.x(i);
                let bump = eps * (-(x - 3.0) * (x - 3.0) / 4.0).exp();
                let v = kicked.get(c, i) + bump;
                kicked.set(c, i, v);
            }
        }
        let mut w = kicked;
        for _ in 0..4 {
            w = evolve_nonlinear(&model, grid, &w, 0.0, 250.0, 0.04, &opts).unwrap().last().clone();
        }
        let dense = evolve_nonlinear(&model, grid, &w, 0.0, 30.0, 0.04, &EvolveOptions { store_every: 25, sup_cap: 1e4, check_step: false }).unwrap();
        let mut dmax: f64 = 0.0; let mut posmax: f64 = 0.0;
        for f in &dense.frames {
            let (pos, d, _, _) = hole_state(&grid, f);
            dmax = dmax.max(d); posmax = posmax.max(pos.abs());
        }
        println!("eps={eps}: after 1000 units dmax={dmax:.5} |pos|={posmax:.2}");
    }
}

#[test]
#[ignore]
fn full_linspec_on_frozen_candidate() {
    use defectlab_core::defect::{cgl_source_seed, find_defect, fit_farfield_rate, DefectOptions};
    use defectlab_core::linspec::*;
    use defectlab_core::wavetrain::{cgl_plane_wave_guess, solve_wavetrain, WaveTrainOptions};
    let model = build_builtin(&BuiltinModelId::CglCubicQuintic {
        alpha: 0.1, beta: 1.3, gamma1: -0.03, gamma2: 0.0, mu: 1.0,
    }).unwrap();
    let grid = Grid1D::periodic(60.0, 512).unwrap();
    let seed = cgl_source_seed(&grid, -0.35, 2.0);
    let opts = DefectOptions {
        t_transient: 600.0,
        t_sample: 60.0,
        dt: 0.04,
        n_frames: 64,
        polish: true,
        ..Default::default()
    };
    let t0 = std::time::Instant::now();
    let defect = find_defect(&model, grid, &seed, &opts).unwrap();
    println!("find_defect {:.1}s: k+={:.4} k-={:.4} c_d={:.2e} omega_d={:.6} polish={:.2e} presid={:.2e}",
        t0.elapsed().as_secs_f64(), defect.k_plus, defect.k_minus, defect.c_d, defect.omega_d,
        defect.polish_residual.unwrap(), defect.periodicity_residual);

    // far-field rate
    let wt_p = solve_wavetrain(&defect.model, defect.k_plus, &cgl_plane_wave_guess(&defect.model, defect.k_plus, 64), &WaveTrainOptions::default()).unwrap();
    let wt_m = solve_wavetrain(&defect.model, defect.k_minus, &cgl_plane_wave_guess(&defect.model, defect.k_minus, 64), &WaveTrainOptions::default()).unwrap();
    println!("wavetrains: omega(k+)={:.6} omega(k-)={:.6} (omega_d rescaled = 1)", wt_p.omega, wt_m.omega);
    match fit_farfield_rate(&defect, &wt_p, &wt_m) {
        Ok(ff) => println!("eta_fit={:.4} r2={:.4}", ff.eta, ff.r2),
        Err(e) => println!("farfield ERR {e}"),
    }

    // zero modes
    let modes = zero_modes(&defect).unwrap();
    println!("zero modes: basis {:?} resid_x={:.2e} resid_t={:.2e}", modes.basis, modes.residual_x, modes.residual_t);

    // weighted Floquet
    let t0 = std::time::Instant::now();
    let weight = WeightSpec { a: 0.25, smoothing: 1.0 };
    let lopts = LinspecOptions { steps_per_period: 768, seed: 11 };
    let rep = floquet_spectrum_weighted(&defect, &weight, 8, &lopts).unwrap();
    println!("floquet {:.1}s: cluster={} gap={:.4} angle={:.2e}", t0.elapsed().as_secs_f64(), rep.unit_cluster, rep.gap, rep.zero_mode_angle);
    for (i, m) in rep.multipliers.iter().enumerate().take(6) {
        println!("  rho_{i} = {:.6} + {:.6}i  |rho| = {:.6}", m.re, m.im, m.norm());
    }
}

#[test]
#[ignore]
fn diagnose_suspect_mode() {
    use defectlab_core::defect::{cgl_source_seed, find_defect, fit_farfield_rate, DefectOptions};
    use defectlab_core::linspec::*;
    use defectlab_core::wavetrain::{cgl_plane_wave_guess, solve_wavetrain, WaveTrainOptions};
    use num_complex::Complex;
    let model = build_builtin(&BuiltinModelId::CglCubicQuintic {
        alpha: 0.1, beta: 1.3, gamma1: -0.03, gamma2: 0.0, mu: 1.0,
    }).unwrap();
    let grid = Grid1D::periodic(60.0, 512).unwrap();
    let seed = cgl_source_seed(&grid, -0.35, 2.0);
    let opts = DefectOptions { t_transient: 600.0, t_sample: 60.0, dt: 0.04, n_frames: 64, polish: true, ..Default::default() };
    let defect = find_defect(&model, grid, &seed, &opts).unwrap();
    println!("k+={:.5} k-={:.5}", defect.k_plus, defect.k_minus);

    let wt_p = solve_wavetrain(&defect.model, defect.k_plus, &cgl_plane_wave_guess(&defect.model, defect.k_plus, 64), &WaveTrainOptions::default()).unwrap();
    let wt_m = solve_wavetrain(&defect.model, defect.k_minus, &cgl_plane_wave_guess(&defect.model, defect.k_minus, 64), &WaveTrainOptions::default()).unwrap();
    match fit_farfield_rate(&defect, &wt_p, &wt_m) {
        Ok(ff) => println!("eta_fit={:.4} r2={:.4}", ff.eta, ff.r2),
        Err(e) => println!("farfield ERR {e}"),
    }

    let weight = WeightSpec { a: 0.25, smoothing: 1.0 };
    let lopts = LinspecOptions { steps_per_period: 768, seed: 11 };
    let t0 = std::time::Instant::now();
    let rep = floquet_spectrum_weighted(&defect, &weight, 8, &lopts).unwrap();
    println!("floquet {:.1}s cluster={} gap={:.4} angle={:.2e}", t0.elapsed().as_secs_f64(), rep.unit_cluster, rep.gap, rep.zero_mode_angle);
    for (i, m) in rep.multipliers.iter().enumerate().take(6) {
        println!("  rho_{i} = {:.6}+{:.6}i |rho|={:.6}", m.re, m.im, m.norm());
    }
    // locate the largest non-unit mode
    let suspect = rep.multipliers.iter().find(|r| (*r - Complex::new(1.0,0.0)).norm() > 1e-4).copied();
    if let Some(tgt) = suspect {
        if tgt.norm() > 0.99 {
            let (lam, prof) = weighted_mode_profile(&defect, &weight, tgt, &lopts).unwrap();
            // center of mass of |mode|
            let mut num = 0.0; let mut den = 0.0;
            let mut core = 0.0; let mut wrapm = 0.0;
            for i in 0..grid.n_points {
                let x = grid.x(i);
                let a = (prof.get(0, i).powi(2) + prof.get(1, i).powi(2)).sqrt();
                num += x.abs() * a; den += a;
                if x.abs() < 15.0 { core += a; }
                if x.abs() > 45.0 { wrapm += a; }
            }
            println!("suspect {lam}: mean|x|={:.1} core_mass={:.3} wrap_mass={:.3}", num/den, core/den, wrapm/den);
        }
    }
}

#[test]
#[ignore]
fn gamma_multiplier_scan() {
    use defectlab_core::defect::{cgl_source_seed, find_defect, DefectOptions};
    use defectlab_core::linspec::*;
    for (al, be, g1, g2) in [
        (0.1f64, 1.3f64, 0.0f64, 0.0f64),
        (0.1, 1.3, 0.01, 0.0),
        (0.1, 1.3, 0.02, 0.0),
        (0.1, 1.3, 0.03, 0.0),
        (0.1, 1.3, -0.01, 0.0),
        (0.1, 1.3, 0.02, -0.02),
    ] {
        let g1_label = format!("a={al} b={be} g=({g1},{g2})");
        let g1 = g1; let _ = g1;
        let model = build_builtin(&BuiltinModelId::CglCubicQuintic {
            alpha: al, beta: be, gamma1: g1, gamma2: g2, mu: 1.0,
        }).unwrap();
        let grid = Grid1D::periodic(60.0, 512).unwrap();
        let seed = cgl_source_seed(&grid, -0.35, 2.0);
        let opts = DefectOptions { t_transient: 600.0, t_sample: 60.0, dt: 0.04, n_frames: 64, polish: true, ..Default::default() };
        match find_defect(&model, grid, &seed, &opts) {
            Ok(defect) => {
                let weight = WeightSpec { a: 0.25, smoothing: 1.0 };
                let lopts = LinspecOptions { steps_per_period: 768, seed: 11 };
                match floquet_spectrum_weighted(&defect, &weight, 6, &lopts) {
                    Ok(rep) => {
                        let tops: Vec<String> = rep.multipliers.iter().take(4).map(|m| format!("{:.5}@{:.3}", m.norm(), m.im.atan2(m.re))).collect();
                        println!("{g1_label}: k+={:.4} cluster={} gap={:.4} rho=[{}]", defect.k_plus, rep.unit_cluster, rep.gap, tops.join(", "));
                    }
                    Err(e) => println!("{g1_label}: floquet ERR {e}"),
                }
            }
            Err(e) => println!("{g1_label}: defect ERR {e}"),
        }
    }
}

#[test]
#[ignore]
fn zero_mode_residual_under_map() {
    use defectlab_core::defect::{cgl_source_seed, find_defect, DefectOptions};
    use defectlab_core::linspec::*;
    let model = build_builtin(&BuiltinModelId::CglCubicQuintic {
        alpha: 0.1, beta: 1.3, gamma1: -0.03, gamma2: 0.0, mu: 1.0,
    }).unwrap();
    let grid = Grid1D::periodic(60.0, 512).unwrap();
    let seed = cgl_source_seed(&grid, -0.35, 2.0);
    let opts = DefectOptions { t_transient: 600.0, t_sample: 60.0, dt: 0.04, n_frames: 64, polish: true, ..Default::default() };
    let defect = find_defect(&model, grid, &seed, &opts).unwrap();
    for (aw, steps) in [(0.25f64, 768usize), (0.0, 768), (0.25, 1536), (0.25, 3072)] {
    let weight = WeightSpec { a: aw.max(1e-12), smoothing: 1.0 };
    let lopts = LinspecOptions { steps_per_period: steps, seed: 11 };
    let modes = zero_modes(&defect).unwrap();
    let sigma: Vec<f64> = (0..grid.n_points).map(|i| defectlab_core::spectral::smooth_abs_capped(grid.x(i), 1.0, 0.9*defect.analysis_half_width)).collect();
    for (name, m) in [("u_x", &modes.u_x[0]), ("u_t", &modes.u_t[0])] {
        let mut wm = m.clone();
        for c in 0..2 {
            let mc = wm.comp_mut(c);
            for i in 0..mc.len() { mc[i] *= (-weight.a * sigma[i]).exp(); }
        }
        let mapped = weighted_period_map(&defect, &sigma, weight.a, &lopts, &wm).unwrap();
        let nrm = wm.l2_norm(1.0);
        let rayleigh = wm.inner(&mapped, 1.0) / (nrm * nrm);
        let mut diff = mapped.clone();
        diff.axpy(-1.0, &wm);
        println!("a={aw} steps={steps} {name}: rayleigh={rayleigh:.8} resid={:.3e}", diff.l2_norm(1.0) / nrm);
    }
    }
}

#[test]
#[ignore]
fn domain_dependence_of_accel_mode() {
    use defectlab_core::defect::{cgl_source_seed, find_defect, DefectOptions};
    use defectlab_core::linspec::*;
    for (al, be, g1, g2, l, n) in [
        (0.3f64, 1.5f64, -0.05f64, 0.0f64, 60.0f64, 512usize),
        (0.1, 1.3, -0.07, 0.0, 60.0, 512),
        (0.1, 1.3, -0.05, -0.02, 60.0, 512),
        (0.1, 1.3, -0.03, 0.0, 60.0, 512),
        (0.05, 1.15, 0.05, 0.0, 60.0, 512),
        (0.3, 1.5, -0.07, 0.0, 60.0, 512),
        (0.3, 1.5, -0.03, 0.0, 60.0, 512),
        (0.4, 1.6, -0.05, 0.0, 60.0, 512),
    ] {
        let model = build_builtin(&BuiltinModelId::CglCubicQuintic {
            alpha: al, beta: be, gamma1: g1, gamma2: g2, mu: 1.0,
        }).unwrap();
        let grid = Grid1D::periodic(l, n).unwrap();
        let seed = cgl_source_seed(&grid, -0.35, 2.0);
        let opts = DefectOptions { t_transient: 700.0, t_sample: 60.0, dt: 0.04, n_frames: 64, polish: true, ..Default::default() };
        match find_defect(&model, grid, &seed, &opts) {
            Ok(defect) => {
                let weight = WeightSpec { a: 0.25, smoothing: 1.0 };
                let lopts = LinspecOptions { steps_per_period: 1536, seed: 11 };
                match floquet_spectrum_weighted(&defect, &weight, 6, &lopts) {
                    Ok(rep) => {
                        let tops: Vec<String> = rep.multipliers.iter().take(4).map(|m| format!("{:.5}@{:.2}", m.norm(), m.im.atan2(m.re))).collect();
                        println!("a={al} b={be} g=({g1},{g2}): k+={:.4} rho=[{}]", defect.k_plus, tops.join(", "));
                    }
                    Err(e) => println!("a={al} b={be} g=({g1},{g2}): floquet ERR {e}"),
                }
            }
            Err(e) => println!("a={al} b={be} g=({g1},{g2}): defect ERR {e}"),
        }
    }
}

#[test]
#[ignore]
fn greens_pipeline_on_cgl() {
    use defectlab_core::bounds::{ErrfnMode, ProfileParams};
    use defectlab_core::defect::{cgl_source_seed, find_defect, DefectOptions};
    use defectlab_core::greens::*;
    use defectlab_core::linspec::zero_modes;
    let model = build_builtin(&BuiltinModelId::CglCubicQuintic {
        alpha: 0.3, beta: 1.5, gamma1: -0.03, gamma2: 0.0, mu: 1.0,
    }).unwrap();
    let grid = Grid1D::periodic(120.0, 1024).unwrap();
    let seed = cgl_source_seed(&grid, -0.38, 2.0);
    let opts = DefectOptions { t_transient: 900.0, t_sample: 60.0, dt: 0.04, n_frames: 64, polish: true, ..Default::default() };
    let defect = match find_defect(&model, grid, &seed, &opts) {
        Ok(d) => d,
        Err(e) => { println!("find_defect ERR: {e}"); return; }
    };
    let modes = zero_modes(&defect).unwrap();
    let t0 = std::time::Instant::now();
    let col_opts = ColumnOptions { steps_per_period: 768, frames_per_period: 32 };
    let t_span = 60.0; // rounded up to whole periods internally
    let ys = [-8.0, -6.5, -5.0, -3.5, -2.0, 0.5, 2.0, 3.5, 5.0, 6.5, 8.0];
    let mut decs = Vec::new();
    for &y in &ys {
        let col = greens_column(&defect, y, 0.0, 0, t_span, 3.0 * grid.spacing(), &col_opts).unwrap();
        assert!((col.initial_mass - 1.0).abs() < 1e-9);
        let dec = decompose_greens(&col, &defect, &modes).unwrap();
        if y == 0.5 {
            let rd = reconstruction_defect(&col, &defect, &dec);
            println!("reconstruction defect {rd:.2e}, ill {}", dec.ill_conditioned);
        }
        decs.push(dec);
    }
    println!("columns {:.1}s", t0.elapsed().as_secs_f64());
    let tau_geo = 0.85 * defect.analysis_half_width / 0.6582;
    println!("tau_geo = {tau_geo:.1}");
    // slice diagnostics at a mid-late window for y = 0.5
    {
        let params = ProfileParams::new(0.6582, -0.6582, 0.3374, 0.3374, 32.0, ErrfnMode::PaperLiteral).unwrap();
        let dec = &decs[5];
        let widx = dec.window_times.iter().position(|&t| t > 40.0).unwrap();
        let tau = dec.window_times[widx];
        print!("slice tau={tau:.1}: ");
        for &x in &[-50.0, -30.0, -15.0, 0.0, 15.0, 30.0, 50.0] {
            let i = grid.nearest_index(x);
            let e = defectlab_core::bounds::eval_plateau(x - dec.y, tau, &params).unwrap();
            print!("[x={x} E1={:.3} e={:.3}] ", dec.e1[widx][i], e);
        }
        println!();
    }
    {
        let params = ProfileParams::new(0.6582, -0.6582, 0.3374, 0.3374, 48.0, ErrfnMode::PaperLiteral).unwrap();
        for (lo, hi) in [(20.0, tau_geo), (40.0, tau_geo), (50.0, tau_geo)] {
            let c0 = plateau_correlation(&decs[5], &defect, &params, 0, (lo, hi)).unwrap();
            let (cb, lag) = plateau_correlation_best_lag(&decs[5], &defect, &params, 0, (lo, hi), 40.0).unwrap();
            println!("corr tau in [{lo:.0},{hi:.0}]: raw={c0:.4} best={cb:.4} at lag {lag:.1}");
        }
    }
    for m0 in [8.0, 16.0, 32.0, 64.0] {
        let params = ProfileParams::new(0.6582, -0.6582, 0.3374, 0.3374, m0, ErrfnMode::PaperLiteral).unwrap();
        let corr = plateau_correlation(&decs[5], &defect, &params, 0, (20.0, tau_geo)).unwrap();
        let eta = 0.5;
        let r_full = remainder_sup_ratio(&decs[5], &defect, &params, eta, (2.0, tau_geo));
        let r_half = remainder_sup_ratio(&decs[5], &defect, &params, eta, (2.0, tau_geo / 2.0));
        let drv = remainder_derivative_sup_ratio(&decs[5], &defect, &params, eta, (2.0, tau_geo));
        println!("M0={m0}: corr={corr:.4} ratio(T)={r_full:.3} ratio(T/2)={r_half:.3} drift={:.3} drv/k0={:.2}", (r_full - r_half).abs() / r_half, drv / r_full);
    }
    let params = ProfileParams::new(0.6582, -0.6582, 0.3374, 0.3374, 32.0, ErrfnMode::PaperLiteral).unwrap();
    match fit_beta(&decs, &defect, &params, (0.5 * tau_geo, tau_geo), 2.0) {
        Ok(bf) => println!("beta fit: eta={:.3} r2={:.3} beta1={:?}", bf.eta, bf.r2,
            bf.beta1.iter().map(|b| (b * 1e3).round() / 1e3).collect::<Vec<_>>()),
        Err(e) => println!("beta fit ERR {e}"),
    }
}

#[test]
#[ignore]
fn candidate2_full_check() {
    use defectlab_core::bloch::{bloch_spectrum, fit_dispersion_coeffs};
    use defectlab_core::defect::{cgl_source_seed, find_defect, fit_farfield_rate, DefectOptions};
    use defectlab_core::linspec::*;
    use defectlab_core::wavetrain::{cgl_plane_wave_guess, solve_wavetrain, WaveTrainOptions};
    let model = build_builtin(&BuiltinModelId::CglCubicQuintic {
        alpha: 0.3, beta: 1.5, gamma1: -0.03, gamma2: 0.0, mu: 1.0,
    }).unwrap();
    let grid = Grid1D::periodic(120.0, 1024).unwrap();
    let seed = cgl_source_seed(&grid, -0.38, 2.0);
    let opts = DefectOptions { t_transient: 900.0, t_sample: 60.0, dt: 0.04, n_frames: 64, polish: true, ..Default::default() };
    let defect = match find_defect(&model, grid, &seed, &opts) {
        Ok(d) => d, Err(e) => { println!("defect ERR {e}"); return; }
    };
    println!("k+={:.5} k-={:.5} c_d={:.1e} omega_d={:.5} presid={:.1e}", defect.k_plus, defect.k_minus, defect.c_d, defect.omega_d, defect.periodicity_residual);
    // Bloch at the emitted wavenumber
    let wt = solve_wavetrain(&defect.model, defect.k_plus, &cgl_plane_wave_guess(&defect.model, defect.k_plus, 48), &WaveTrainOptions::default()).unwrap();
    let mut gg = vec![0.0];
    for i in 1..=8 { gg.push(0.05 * i as f64 / 8.0); gg.push(-0.05 * i as f64 / 8.0); }
    let curve = bloch_spectrum(&wt, &defect.model, &gg).unwrap();
    let fit = fit_dispersion_coeffs(&curve, 0.05).unwrap();
    println!("bloch at k+: c={:.4} d={:.4} gap={:.4} mult={}", fit.c, fit.d, curve.gap_at_zero, curve.zero_multiplicity);
    // far-field rate
    let wt_m = solve_wavetrain(&defect.model, defect.k_minus, &cgl_plane_wave_guess(&defect.model, defect.k_minus, 48), &WaveTrainOptions::default()).unwrap();
    match fit_farfield_rate(&defect, &wt, &wt_m) {
        Ok(ff) => println!("eta={:.3} r2={:.3}", ff.eta, ff.r2),
        Err(e) => println!("farfield ERR {e}"),
    }
    // weighted Floquet
    let weight = WeightSpec { a: 0.25, smoothing: 1.0 };
    let lopts = LinspecOptions { steps_per_period: 512, seed: 11 };
    let rep = floquet_spectrum_weighted(&defect, &weight, 6, &lopts).unwrap();
    let tops: Vec<String> = rep.multipliers.iter().take(4).map(|m| format!("{:.5}@{:.2}", m.norm(), m.im.atan2(m.re))).collect();
    println!("floquet: cluster={} gap={:.4} angle={:.1e} rho=[{}]", rep.unit_cluster, rep.gap, rep.zero_mode_angle, tops.join(", "));
}

#[test]
#[ignore]
fn derivative_ratio_argmax() {
    use defectlab_core::bounds::{eval_theta, ErrfnMode, ProfileParams};
    use defectlab_core::defect::{cgl_source_seed, find_defect, DefectOptions};
    use defectlab_core::greens::*;
    use defectlab_core::linspec::zero_modes;
    use defectlab_core::spectral::SpectralOps;
    let model = build_builtin(&BuiltinModelId::CglCubicQuintic {
        alpha: 0.3, beta: 1.5, gamma1: -0.03, gamma2: 0.0, mu: 1.0,
    }).unwrap();
    let grid = Grid1D::periodic(120.0, 1024).unwrap();
    let seed = cgl_source_seed(&grid, -0.38, 2.0);
    let opts = DefectOptions { t_transient: 900.0, t_sample: 60.0, dt: 0.04, n_frames: 64, polish: true, ..Default::default() };
    let defect = find_defect(&model, grid, &seed, &opts).unwrap();
    let modes = zero_modes(&defect).unwrap();
    let col_opts = ColumnOptions { steps_per_period: 768, frames_per_period: 32 };
    let col = greens_column(&defect, 0.5, 0.0, 0, 88.0, 3.0 * grid.spacing(), &col_opts).unwrap();
    let dec = decompose_greens(&col, &defect, &modes).unwrap();
    let params = ProfileParams::new(0.6582, -0.6582, 0.3374, 0.3374, 64.0, ErrfnMode::PaperLiteral).unwrap();
    let eta = 0.5;
    let ops = SpectralOps::new(grid.n_points, 2.0 * grid.half_length);
    let mut best = (0.0f64, 0.0f64, 0.0f64, 0.0f64); // ratio, x, tau, |dG_R|
    for (fi, frame) in dec.g_r.iter().enumerate() {
        let tau = dec.g_r_times[fi];
        if tau < 2.0 || tau > 85.0 { continue; }
        let pre = (tau + 1.0) / tau * (tau.powf(-0.5) + (-eta * dec.y.abs()).exp());
        let dx: Vec<Vec<f64>> = (0..2).map(|c| ops.deriv(frame.comp(c), 1)).collect();
        for i in 0..grid.n_points {
            let x = grid.x(i);
            if x.abs() > defect.analysis_half_width { continue; }
            let th = eval_theta(x - dec.y, tau, &params);
            if th < 1e-10 { continue; }
            let mag = dx[0][i].abs().max(dx[1][i].abs());
            let r = mag / (pre * th);
            if r > best.0 { best = (r, x, tau, mag); }
        }
    }
    println!("max drv ratio {:.3e} at x={:.1} tau={:.1} |dG_R|={:.3e}", best.0, best.1, best.2, best.3);
    let k0 = remainder_sup_ratio(&dec, &defect, &params, eta, (2.0, 85.0));
    println!("k0 ratio {k0:.3}");
    // inspect the fields at the argmax
    let fi = dec.g_r_times.iter().position(|&t| (t - best.2).abs() < 1e-9).unwrap();
    let i = grid.nearest_index(best.1);
    let w = (fi / 32).min(dec.e1.len() - 1);
    let gval = col.traj.frames[fi].get(0, i).abs().max(col.traj.frames[fi].get(1, i).abs());
    println!("at argmax: |G|={:.3e} E1={:.3e} E2={:.3e} |G_R|={:.3e}",
        gval, dec.e1[w][i], dec.e2[w][i],
        dec.g_r[fi].get(0, i).abs().max(dec.g_r[fi].get(1, i).abs()));
    // profile of E1(w0) in the outer region
    print!("E1(w0) at x: ");
    for &x in &[-100.0, -80.0, -66.0, -50.0, -30.0] {
        let ii = grid.nearest_index(x);
        print!("[{x}: {:.2e}] ", dec.e1[0][ii]);
    }
    println!();
}
