use proptest::prelude::*;
use sinhflow::initial::random_smooth_field;
use sinhflow::{Field, Field32, Grid, Workspace, Workspace32};

fn grid(n: usize) -> Grid {
    Grid::new(n).unwrap()
}

fn sizes() -> impl Strategy<Value = usize> {
    prop_oneof![Just(16usize), Just(32), Just(64), Just(128)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn poisson_inverts_laplacian(n in sizes(), modes in 1usize..6, amp in 0.1f64..3.0, seed in any::<u64>()) {
        let g = grid(n);
        let mut ws = Workspace::new(g);
        let f = random_smooth_field(g, modes.min(n / 4), amp, seed);
        let lap = ws.laplacian(&f).unwrap();
        let back = ws.solve_poisson(&lap).unwrap();
        prop_assert!((&back - &f).max_abs() <= 1e-10 * amp.max(1.0));
    }

    #[test]
    fn laplacian_integrates_to_zero(n in sizes(), modes in 1usize..6, seed in any::<u64>()) {
        let g = grid(n);
        let mut ws = Workspace::new(g);
        let f = random_smooth_field(g, modes.min(n / 4), 1.0, seed);
        let lap = ws.laplacian(&f).unwrap();
        prop_assert!(lap.integrate().unwrap().abs() <= 1e-12);
    }

    #[test]
    fn dirichlet_energy_by_parts(n in sizes(), modes in 1usize..6, amp in 0.1f64..3.0, seed in any::<u64>()) {
        let g = grid(n);
        let mut ws = Workspace::new(g);
        let f = random_smooth_field(g, modes.min(n / 4), amp, seed);
        let lap = ws.laplacian(&f).unwrap();
        let by_parts = -0.5 * f.dot(&lap);
        let d = ws.dirichlet_energy(&f).unwrap();
        prop_assert!((d - by_parts).abs() <= 1e-9 * d.abs());
    }

    #[test]
    fn band_limited_results_agree_across_resolutions(modes in 1usize..5, seed in any::<u64>()) {
        let (g, g2) = (grid(32), grid(64));
        let (mut ws, mut ws2) = (Workspace::new(g), Workspace::new(g2));
        // same trigonometric polynomial sampled on both grids
        let f2 = random_smooth_field(g2, modes, 1.0, seed);
        let f = Field::from_fn(g, |x, y| f2.at((x * 64.0).round() as usize, (y * 64.0).round() as usize));
        let (d, d2) = (ws.dirichlet_energy(&f).unwrap(), ws2.dirichlet_energy(&f2).unwrap());
        prop_assert!((d - d2).abs() <= 1e-6 * d.abs());
        let (l, l2) = (ws.laplacian(&f).unwrap(), ws2.laplacian(&f2).unwrap());
        let scale = l.max_abs();
        for iy in 0..32 {
            for ix in 0..32 {
                prop_assert!((l.at(ix, iy) - l2.at(2 * ix, 2 * iy)).abs() <= 1e-6 * scale);
            }
        }
        let m = f.map(f64::exp).integrate().unwrap();
        let m2 = f2.map(f64::exp).integrate().unwrap();
        prop_assert!((m - m2).abs() <= 1e-6 * m);
    }

    #[test]
    fn projected_solve_removes_the_mean(n in sizes(), c in -5.0f64..5.0, seed in any::<u64>()) {
        let g = grid(n);
        let mut ws = Workspace::new(g);
        let f = random_smooth_field(g, 3, 1.0, seed);
        let rhs = f.add_constant(c);
        let u = ws.solve_poisson_projected(&rhs).unwrap();
        prop_assert!(u.mean().abs() <= 1e-12);
        let lap = ws.laplacian(&u).unwrap();
        prop_assert!((&lap - &f).max_abs() <= 1e-9);
    }

    #[test]
    fn shifts_commute_with_laplacian(sx in -8isize..8, sy in -8isize..8, seed in any::<u64>()) {
        let g = grid(32);
        let mut ws = Workspace::new(g);
        let f = random_smooth_field(g, 4, 1.0, seed);
        let a = ws.laplacian(&f.shifted(sx, sy)).unwrap();
        let b = ws.laplacian(&f).unwrap().shifted(sx, sy);
        prop_assert!((&a - &b).max_abs() <= 1e-10 * b.max_abs());
    }
}

#[test]
fn poisson_round_trip_at_512() {
    let g = grid(512);
    let mut ws = Workspace::new(g);
    let f = random_smooth_field(g, 16, 1.0, 3);
    let lap = ws.laplacian(&f).unwrap();
        let back = ws.solve_poisson(&lap).unwrap();
    assert!((&back - &f).max_abs() <= 1e-10);
}

#[test]
fn single_precision_tracks_double() {
    let g = grid(64);
    let f: Field = random_smooth_field(g, 4, 1.0, 9);
    let f32v: Field32 = f.cast();
    let mut ws = Workspace::new(g);
    let mut ws32 = Workspace32::new(g);
    let d = ws.dirichlet_energy(&f).unwrap();
    let d32 = ws32.dirichlet_energy(&f32v).unwrap() as f64;
    assert!((d - d32).abs() <= 1e-5 * d);
}

#[test]
fn non_power_of_two_grids_are_rejected() {
    for n in [0, 1, 8, 48, 100] {
        assert!(Grid::new(n).is_err(), "{n}");
    }
}
