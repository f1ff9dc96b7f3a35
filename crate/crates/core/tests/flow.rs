use std::f64::consts::PI;

use sinhflow::flow::{convergence_certificate, run, CertificateThresholds, Monitors, StopReason, Verdict};
use sinhflow::initial::{bubble_field, random_smooth_field};
use sinhflow::{Field, FlowConfig, Grid, Model, Point, WeightSpec};

fn setup(n: usize, cfg: &FlowConfig) -> (Grid, Model) {
    let g = Grid::new(n).unwrap();
    (g, Model::from_config(cfg, g).unwrap())
}

#[test]
fn subcritical_cosine_converges() {
    let cfg = FlowConfig::with_rhos(4.0 * PI, 2.0 * PI);
    let (g, model) = setup(64, &cfg);
    let u0 = Field::from_fn(g, |x, _| (2.0 * PI * x).cos());
    let th = CertificateThresholds::default();
    let monitors = Monitors { stop: Some(th.stop_rule()), ..Default::default() };
    let out = run(u0, &model, &cfg, 500.0, &monitors).unwrap();
    assert_eq!(out.stop_reason, StopReason::Converged);
    let cert = convergence_certificate(&out, &th);
    assert_eq!(cert.verdict, Verdict::Converged);
    assert!(cert.residual < 1e-6);
    assert!(out.record.max_mass_drift <= 1e-6);
}

#[test]
fn mass_bounds_hold_with_weights() {
    let cfg = FlowConfig::default().with_weights(
        WeightSpec::ClippedCosine { offset: 0.25 },
        WeightSpec::GaussianBump { cx: 0.5, cy: 0.5, sigma: 0.2, floor: 0.0 },
    );
    let (g, model) = setup(64, &cfg);
    let u0 = random_smooth_field(g, 3, 1.0, 4);
    let out = run(u0, &model, &cfg, 1.0, &Monitors { sample_every: 1, ..Default::default() }).unwrap();
    let rec = &out.record;
    assert!(rec.max_mass_drift <= cfg.tol_mass);
    let (lo1, hi1) = rec.mass_h1_range;
    let (lo2, _) = rec.mass_h2_range;
    assert!(lo1 > 0.0 && hi1.is_finite() && lo2 > 0.0);
    assert!(rec.rows.iter().all(|r| r.mass_h1 >= lo1 && r.mass_h1 <= hi1 && r.mass_h2 >= lo2));
    assert!(rec.max_energy_increase() <= rec.energy_slack);
}

#[test]
fn energy_drop_matches_dissipation_quadrature() {
    let mut cfg = FlowConfig::default();
    cfg.dt_init = 2.5e-6;
    cfg.dt_max = 2.5e-6;
    let (g, model) = setup(64, &cfg);
    let u0 = random_smooth_field(g, 3, 0.5, 8);
    let out = run(u0, &model, &cfg, 2.5e-3, &Monitors { sample_every: 1, ..Default::default() }).unwrap();
    let rows = &out.record.rows;
    let last = rows.len() - 1;
    let drop = rows[0].energy - rows[last].energy;
    let quad = out.record.dissipation_integral(0, last);
    assert!(drop > 0.0);
    assert!((drop - quad).abs() <= 1e-3 * drop, "drop {drop} quadrature {quad}");
}

#[test]
fn first_order_in_time() {
    let cfg = FlowConfig::default();
    let (g, model) = setup(32, &cfg);
    let u0 = random_smooth_field(g, 3, 1.0, 2);
    let final_state = |dt: f64| {
        let mut c = cfg.clone();
        c.dt_init = dt;
        c.dt_max = dt;
        run(u0.clone(), &model, &c, 0.08, &Monitors::default()).unwrap().state.u
    };
    let (a, b, c) = (final_state(4e-3), final_state(2e-3), final_state(1e-3));
    let e1 = (&a - &b).max_abs();
    let e2 = (&b - &c).max_abs();
    let ratio = e1 / e2;
    assert!(ratio > 1.7 && ratio < 2.3, "successive differences {e1} {e2}");
}

#[test]
fn tall_bubble_is_not_certified() {
    let mut cfg = FlowConfig::default();
    cfg.dt_max = 1e-2;
    let (g, model) = setup(64, &cfg);
    let u0 = bubble_field(g, Point::new(0.5, 0.5), 0.05, -4.0);
    let monitors = Monitors { max_steps: Some(200), ..Default::default() };
    let out = run(u0, &model, &cfg, 1.0, &monitors).unwrap();
    let cert = convergence_certificate(&out, &CertificateThresholds::default());
    if cert.residual > 1e-6 {
        assert_ne!(cert.verdict, Verdict::Converged);
    }
}

#[test]
fn snapshots_follow_the_sampling() {
    let cfg = FlowConfig::default();
    let (g, model) = setup(32, &cfg);
    let u0 = random_smooth_field(g, 2, 0.5, 1);
    let monitors = Monitors { sample_every: 5, keep_snapshots: true, max_steps: Some(50), ..Default::default() };
    let out = run(u0, &model, &cfg, 100.0, &monitors).unwrap();
    assert_eq!(out.stop_reason, StopReason::StepLimit);
    assert_eq!(out.record.accepted_steps, 50);
    assert_eq!(out.snapshots.len(), out.record.rows.len());
    assert!(out.snapshots.windows(2).all(|w| w[1].t > w[0].t));
    for (s, r) in out.snapshots.iter().zip(&out.record.rows) {
        assert_eq!(s.t, r.t);
        assert_eq!(s.dissipation, r.dissipation);
    }
}

#[test]
fn dissipation_minima_are_local() {
    let cfg = FlowConfig::default();
    let (g, model) = setup(32, &cfg);
    let out = run(random_smooth_field(g, 3, 1.0, 6), &model, &cfg, 3.0, &Monitors { sample_every: 1, ..Default::default() }).unwrap();
    let rows = &out.record.rows;
    for i in out.record.dissipation_minima() {
        assert!(rows[i].dissipation < rows[i - 1].dissipation);
        assert!(rows[i].dissipation <= rows[i + 1].dissipation);
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    let cfg = FlowConfig::default();
    let (g, model) = setup(16, &cfg);
    assert!(run(Field::zeros(g), &model, &cfg, 0.0, &Monitors::default()).is_err());
    let mut bad = Field::zeros(g);
    bad.values_mut()[3] = f64::NAN;
    assert!(run(bad, &model, &cfg, 1.0, &Monitors::default()).is_err());
    let mut c = cfg.clone();
    c.dt_init = 1.0;
    c.dt_max = 0.5;
    assert!(run(Field::zeros(g), &model, &c, 1.0, &Monitors::default()).is_err());
}
