use std::f64::consts::PI;

use sinhflow::green::green_function_with;
use sinhflow::mfe::{barrier_level, singular_weight, solve_mfe, solve_mfe_with, tilde_j, MfeOptions, ScanOptions};
use sinhflow::{FlowConfig, Grid, Point, WeightSpec, Workspace};

#[test]
fn descent_is_strict_and_certified() {
    let g = Grid::new(64).unwrap();
    let cfg = FlowConfig::with_rhos(8.0 * PI, 6.0 * PI)
        .with_weights(WeightSpec::default(), WeightSpec::CosineFamily { a: 0.4, b: 0.2 });
    let (_, sol) = solve_mfe(Point::new(0.3, 0.6), g, &cfg, &MfeOptions::default()).unwrap();
    assert!(sol.residual <= cfg.tol_mfe);
    // strict until the energy sits at round-off, where the residual still needs a few more steps
    let floor = 1e-14 * sol.energy_tilde.abs().max(1.0);
    assert!(sol.trace.windows(2).all(|w| w[1] < w[0] || (w[1] - w[0]).abs() <= floor), "{:?}", sol.trace);
    assert!(sol.trace.windows(2).take(10).all(|w| w[1] < w[0]));
    assert!((sol.energy_tilde - sol.trace.last().unwrap()).abs() <= 1e-14 * sol.energy_tilde.abs().max(1.0));
}

#[test]
fn scaling_h2_shifts_energy_only() {
    let g = Grid::new(64).unwrap();
    let base = FlowConfig::default().with_weights(
        WeightSpec::default(),
        WeightSpec::GaussianBump { cx: 0.2, cy: 0.2, sigma: 0.2, floor: 0.2 },
    );
    let lambda = 3.5;
    let p = Point::new(0.6, 0.6);
    let (green, a) = solve_mfe(p, g, &base, &MfeOptions::default()).unwrap();
    let mut ws = Workspace::new(g);
    let h2 = base.h2.sample::<f64>(g).map(|v| lambda * v);
    let weight = singular_weight(&green, &h2).unwrap();
    let shifted = tilde_j(&a.w, &weight, base.rho2, &mut ws).unwrap();
    assert!((shifted - (a.energy_tilde - base.rho2 * lambda.ln())).abs() <= 1e-10 * shifted.abs().max(1.0));

    // the minimizer itself does not move
    let weight0 = singular_weight(&green, &base.h2.sample(g)).unwrap();
    let g0 = sinhflow::mfe::tilde_gradient(&a.w, &weight0, base.rho2, &mut ws).unwrap();
    let g1 = sinhflow::mfe::tilde_gradient(&a.w, &weight, base.rho2, &mut ws).unwrap();
    assert!((&g0 - &g1).max_abs() <= 1e-8);
}

#[test]
fn vanishing_rho2_gives_vanishing_solution() {
    let g = Grid::new(128).unwrap();
    let cfg = FlowConfig::with_rhos(8.0 * PI, 1e-6);
    let (_, sol) = solve_mfe(Point::new(0.5, 0.5), g, &cfg, &MfeOptions::default()).unwrap();
    assert!(sol.w.max_abs() <= 1e-4);
}

#[test]
fn resolution_agreement() {
    let cfg = FlowConfig::default();
    let p = Point::new(0.5, 0.5);
    let (_, a) = solve_mfe(p, Grid::new(128).unwrap(), &cfg, &MfeOptions::default()).unwrap();
    let (_, b) = solve_mfe(p, Grid::new(256).unwrap(), &cfg, &MfeOptions::default()).unwrap();
    assert!((a.energy_tilde - b.energy_tilde).abs() <= 1e-4 * a.energy_tilde.abs());
}

#[test]
fn weight_over_r4_tends_to_h2_exp_neg_a() {
    let g = Grid::new(256).unwrap();
    let h2 = WeightSpec::CosineFamily { a: 0.3, b: 0.1 };
    let mut ws = Workspace::new(g);
    let p = Point::new(0.25, 0.5);
    let green = green_function_with(p, &mut ws).unwrap();
    let weight = singular_weight(&green, &h2.sample(g)).unwrap();
    let target = (-green.regular_part).exp() * h2.eval(green.p);
    let (ix, iy) = green.node;
    for k in 1..=3 {
        let r = k as f64 * g.spacing();
        let ratio = weight.at(ix, iy + k) / r.powi(4);
        assert!((ratio / target - 1.0).abs() <= 0.01, "r = {r}");
    }
}

#[test]
fn scan_skips_zero_set_and_stays_bounded() {
    let g = Grid::new(64).unwrap();
    let cfg = FlowConfig::default().with_weights(WeightSpec::ClippedCosine { offset: 0.25 }, WeightSpec::default());
    let scan = barrier_level(&cfg, g, 4, &ScanOptions::default()).unwrap();
    let zero: Vec<_> = scan.rows.iter().filter(|r| r.h1 == 0.0).collect();
    assert!(!zero.is_empty());
    assert!(zero.iter().all(|r| r.score == f64::INFINITY && !r.failed));
    assert!(scan.best.h1 > 0.0);
    assert!(scan.level.is_finite());
    let finite = scan.rows.iter().filter(|r| r.score.is_finite());
    assert!(finite.clone().all(|r| r.score >= scan.best.score));
    assert!(finite.clone().all(|r| r.residual <= cfg.tol_mfe));
}

#[test]
fn multistart_never_raises_the_energy() {
    let g = Grid::new(64).unwrap();
    let cfg = FlowConfig::with_rhos(8.0 * PI, 7.0 * PI);
    let mut ws = Workspace::new(g);
    let green = green_function_with(Point::new(0.5, 0.5), &mut ws).unwrap();
    let plain = solve_mfe_with(&green, &cfg, &MfeOptions::default(), &mut ws).unwrap();
    let multi = solve_mfe_with(&green, &cfg, &MfeOptions { multistart: true, ..Default::default() }, &mut ws).unwrap();
    assert!(multi.energy_tilde <= plain.energy_tilde + 1e-12);
}

#[test]
fn constant_weight_scan_is_flat() {
    let g = Grid::new(64).unwrap();
    let scan = barrier_level(&FlowConfig::default(), g, 4, &ScanOptions { refine: false, ..Default::default() }).unwrap();
    assert!(scan.score_spread() <= 1e-6);
}
