use std::f64::consts::PI;

use sinhflow::green::{green_function, green_function_with, SQUARE_TORUS_A};
use sinhflow::initial::random_smooth_field;
use sinhflow::mfe::solve_mfe;
use sinhflow::{FlowConfig, Grid, Point, Workspace};

#[test]
fn regular_part_converges_under_refinement() {
    let p = Point::new(0.25, 0.25);
    let a: Vec<f64> = [128, 256, 512]
        .iter()
        .map(|&n| green_function(p, Grid::new(n).unwrap()).unwrap().regular_part)
        .collect();
    let (d1, d2) = ((a[0] - a[1]).abs(), (a[1] - a[2]).abs());
    assert!(d2 <= d1 + 1e-12, "{a:?}");
    assert!((a[2] - SQUARE_TORUS_A).abs() <= 1e-6, "{a:?}");
}

#[test]
fn source_is_compatible() {
    let g = Grid::new(128).unwrap();
    let mut ws = Workspace::new(g);
    let green = green_function_with(Point::new(0.3, 0.7), &mut ws).unwrap();
    let smooth_lap = ws.laplacian(green.smooth_part()).unwrap();
    assert!(smooth_lap.integrate().unwrap().abs() <= 1e-10);
    assert!(green.g_field.integrate().unwrap().abs() <= 1e-10);
}

#[test]
fn regular_part_is_translation_invariant() {
    let g = Grid::new(128).unwrap();
    let mut ws = Workspace::new(g);
    let reference = green_function_with(Point::new(0.0, 0.0), &mut ws).unwrap().regular_part;
    for (x, y) in [(0.5, 0.5), (0.1, 0.9), (0.77, 0.33)] {
        let green = green_function_with(Point::new(x, y), &mut ws).unwrap();
        assert!((green.regular_part - reference).abs() <= 1e-6);
        assert!(green.b1.abs() <= 1e-4 && green.b2.abs() <= 1e-4);
    }
}

#[test]
fn green_values_are_translates() {
    let g = Grid::new(64).unwrap();
    let mut ws = Workspace::new(g);
    let a = green_function_with(g.node_point(0, 0), &mut ws).unwrap();
    let b = green_function_with(g.node_point(5, 11), &mut ws).unwrap();
    assert!((&a.g_field.shifted(5, 11) - &b.g_field).max_abs() <= 1e-9);
}

#[test]
fn pairing_with_random_fields() {
    let g = Grid::new(128).unwrap();
    let mut ws = Workspace::new(g);
    let green = green_function_with(Point::new(0.4, 0.15), &mut ws).unwrap();
    let (ix, iy) = green.node;
    for seed in 0..5 {
        let w = random_smooth_field(g, 5, 2.0, seed);
        let expected = 8.0 * PI * (w.at(ix, iy) - w.mean());
        let got = green.pairing(&w, &mut ws).unwrap();
        assert!((got - expected).abs() <= 1e-4 * expected.abs(), "{got} vs {expected}");
    }
}

#[test]
fn pairing_with_mean_field_solution() {
    let g = Grid::new(128).unwrap();
    let cfg = FlowConfig::default();
    let (green, sol) = solve_mfe(Point::new(0.5, 0.5), g, &cfg, &Default::default()).unwrap();
    let mut ws = Workspace::new(g);
    let (ix, iy) = green.node;
    let expected = 8.0 * PI * sol.w.at(ix, iy);
    assert!(sol.w.mean().abs() <= 1e-12);
    let got = green.pairing(&sol.w, &mut ws).unwrap();
    assert!((got - expected).abs() <= 1e-4 * expected.abs(), "{got} vs {expected}");
}

#[test]
fn exp_neg_vanishes_like_r4() {
    let g = Grid::new(256).unwrap();
    let green = green_function(Point::new(0.5, 0.5), g).unwrap();
    let e = green.exp_neg();
    let (ix, iy) = green.node;
    assert_eq!(e.at(ix, iy), 0.0);
    let target = (-green.regular_part).exp();
    let h = g.spacing();
    for k in 1..=4 {
        let r = k as f64 * h;
        let ratio = e.at(ix + k, iy) / r.powi(4);
        assert!((ratio / target - 1.0).abs() <= 0.01, "r = {r}: {ratio} vs {target}");
    }
}
