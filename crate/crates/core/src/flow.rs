//! Time integration of `eᵘ ∂ₜu = Δu + N(u)`.
//!
//! Each step freezes the mass coefficient `m = e^{u_old}` and solves the linearly implicit
//! problem `(m/dt − Δ) δ = Δu_old + N(u_old)` for the increment `δ` by preconditioned
//! conjugate gradients, with `(m̄/dt − Δ)⁻¹` as the preconditioner. The new iterate is then
//! shifted by a constant so that `∫eᵘ` equals its initial value; both `J` and the flow are
//! invariant under constant shifts, so the projection costs nothing in energy.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::torus::ScalarField;
use crate::{energy::log_weighted_mass, Field, FlowConfig, Model, Workspace};

/// Current point of a trajectory with cached integrals.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub u: Field,
    pub t: f64,
    /// `∫eᵘ`.
    pub mass_e_u: f64,
    /// `∫h₁eᵘ`.
    pub mass_h1: f64,
    /// `∫h₂e⁻ᵘ`.
    pub mass_h2: f64,
    pub energy: f64,
    pub step_count: usize,
}

impl FlowState {
    pub fn new(u: Field, model: &Model, ws: &mut Workspace) -> Result<Self> {
        Self::at_time(u, 0.0, 0, model, ws)
    }

    fn at_time(u: Field, t: f64, step_count: usize, model: &Model, ws: &mut Workspace) -> Result<Self> {
        u.validate()?;
        let ones = ScalarField::constant(u.grid(), 1.0);
        let mass_e_u = log_weighted_mass(&ones, &u, 1.0, "∫e^u")?.exp();
        let (l1, l2) = model.log_masses(&u)?;
        let energy = model.energy_j(&u, ws)?;
        Ok(FlowState {
            u,
            t,
            mass_e_u,
            mass_h1: l1.exp(),
            mass_h2: l2.exp(),
            energy,
            step_count,
        })
    }
}

/// Diagnostics of one accepted or attempted step.
#[derive(Debug, Clone)]
pub struct StepInfo {
    pub dt: f64,
    pub inner_iterations: usize,
    pub inner_residual: f64,
    /// `(u_new − u_old)/dt`.
    pub du_dt: Field,
}

/// Advances `state` by one semi-implicit step of size `dt`, projecting `∫eᵘ` back to
/// `target_mass`.
pub fn step(
    state: &FlowState,
    model: &Model,
    cfg: &FlowConfig,
    dt: f64,
    target_mass: f64,
    ws: &mut Workspace,
) -> Result<(FlowState, StepInfo)> {
    if !(dt > 0.0) {
        return Err(Error::param("dt", "time step must be positive"));
    }
    let u = &state.u;
    let lap = ws.laplacian(u)?;
    let nl = model.nonlinear_term(u)?;
    let force = &lap + &nl;
    // shift exponent by max(u) for the mass coefficient; the scale cancels after dividing dt
    let umax = u.max();
    let m = u.map(|v| (v - umax).exp());
    let dt_eff = dt * (-umax).exp();
    let (delta, iterations, residual) = pcg_helmholtz(&m, dt_eff, &force, cfg, ws)?;
    let mut u_new = u + &delta;
    u_new.validate()?;
    let ones = ScalarField::constant(u.grid(), 1.0);
    let log_mass = log_weighted_mass(&ones, &u_new, 1.0, "∫e^u")?;
    let shift = target_mass.ln() - log_mass;
    for v in u_new.values_mut() {
        *v += shift;
    }
    let du_dt = &(&u_new - u) * (1.0 / dt);
    let next = FlowState::at_time(u_new, state.t + dt, state.step_count + 1, model, ws)?;
    if next.mass_h1 < cfg.mass_floor || !next.mass_h1.is_finite() {
        return Err(Error::MassBound { t: next.t, which: "∫h1·e^u", value: next.mass_h1 });
    }
    if next.mass_h2 < cfg.mass_floor || !next.mass_h2.is_finite() {
        return Err(Error::MassBound { t: next.t, which: "∫h2·e^-u", value: next.mass_h2 });
    }
    Ok((
        next,
        StepInfo {
            dt,
            inner_iterations: iterations,
            inner_residual: residual,
            du_dt,
        },
    ))
}

/// Solves `(m/dt − Δ) x = rhs` by PCG with the constant-coefficient spectral preconditioner.
fn pcg_helmholtz(
    m: &Field,
    dt: f64,
    rhs: &Field,
    cfg: &FlowConfig,
    ws: &mut Workspace,
) -> Result<(Field, usize, f64)> {
    let grid = rhs.grid();
    let rhs_norm = rhs.l2_norm();
    if rhs_norm == 0.0 {
        return Ok((ScalarField::zeros(grid), 0, 0.0));
    }
    let shift = m.mean() / dt;
    let apply = |x: &Field, ws: &mut Workspace| -> Result<Field> {
        let lx = ws.laplacian(x)?;
        let mut out = lx;
        for ((o, &xi), &mi) in out.values_mut().iter_mut().zip(x.values()).zip(m.values()) {
            *o = mi * xi / dt - *o;
        }
        Ok(out)
    };
    let mut x = ScalarField::zeros(grid);
    let mut r = rhs.clone();
    let mut z = ws.solve_helmholtz(shift, &r)?;
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let mut rel = 1.0;
    for it in 1..=cfg.max_inner_iters {
        let ap = apply(&p, ws)?;
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(Error::InnerSolve { residual: rel, iterations: it });
        }
        let alpha = rz / pap;
        for ((xi, ri), (&pi, &api)) in x
            .values_mut()
            .iter_mut()
            .zip(r.values_mut())
            .zip(p.values().iter().zip(ap.values()))
        {
            *xi += alpha * pi;
            *ri -= alpha * api;
        }
        rel = r.l2_norm() / rhs_norm;
        if rel <= cfg.tol_inner {
            return Ok((x, it, rel));
        }
        z = ws.solve_helmholtz(shift, &r)?;
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, &zi) in p.values_mut().iter_mut().zip(z.values()) {
            *pi = zi + beta * *pi;
        }
    }
    Err(Error::InnerSolve {
        residual: rel,
        iterations: cfg.max_inner_iters,
    })
}

/// One sampled row of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub energy: f64,
    pub mass_eu: f64,
    pub mass_h1: f64,
    pub mass_h2: f64,
    pub umax: f64,
    pub umin: f64,
    /// `∫|∂ₜu|²eᵘ` at the sampled state.
    pub dissipation: f64,
    pub residual: f64,
}

pub const TRAJECTORY_HEADER: &str = "t,energy,mass_eu,mass_h1,mass_h2,umax,umin,dissipation,residual";

#[derive(Debug, Clone, Default)]
pub struct TrajectoryRecord {
    pub rows: Vec<TrajectoryRow>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Absolute per-step energy slack used for acceptance.
    pub energy_slack: f64,
    /// Running `(min, max)` of `∫h₁eᵘ` over accepted steps.
    pub mass_h1_range: (f64, f64),
    /// Running `(min, max)` of `∫h₂e⁻ᵘ` over accepted steps.
    pub mass_h2_range: (f64, f64),
    /// Largest relative drift of `∫eᵘ` over accepted steps.
    pub max_mass_drift: f64,
}

impl TrajectoryRecord {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(TRAJECTORY_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.t, r.energy, r.mass_eu, r.mass_h1, r.mass_h2, r.umax, r.umin, r.dissipation, r.residual
            );
        }
        s
    }

    /// Largest per-row energy increase (negative when strictly decreasing).
    pub fn max_energy_increase(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| w[1].energy - w[0].energy)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Trapezoidal time quadrature of the dissipation column over rows `a..=b`.
    pub fn dissipation_integral(&self, a: usize, b: usize) -> f64 {
        self.rows[a..=b]
            .windows(2)
            .map(|w| 0.5 * (w[0].dissipation + w[1].dissipation) * (w[1].t - w[0].t))
            .sum()
    }

    /// Rows where the dissipation is a strict local minimum; the discrete analogue of
    /// selecting times along which `∫|∂ₜu|²eᵘ → 0`.
    pub fn dissipation_minima(&self) -> Vec<usize> {
        self.rows
            .windows(3)
            .enumerate()
            .filter(|(_, w)| w[1].dissipation < w[0].dissipation && w[1].dissipation <= w[2].dissipation)
            .map(|(i, _)| i + 1)
            .collect()
    }
}

/// Stop early once the stationary residual and dissipation are both below these values.
#[derive(Debug, Clone, Copy)]
pub struct StopRule {
    pub residual: f64,
    pub dissipation: f64,
}

/// Sampling and stopping controls for [`run`].
#[derive(Debug, Clone)]
pub struct Monitors {
    /// Record a row every this many accepted steps (the final state is always recorded).
    pub sample_every: usize,
    /// Keep `(u, ∂ₜu)` snapshots at sampled rows.
    pub keep_snapshots: bool,
    pub stop: Option<StopRule>,
    pub max_steps: Option<usize>,
    /// Stop when `exp(−max u₁ / 2)` drops below this length (grid resolution exhausted).
    pub min_scale: Option<f64>,
}

impl Default for Monitors {
    fn default() -> Self {
        Monitors {
            sample_every: 10,
            keep_snapshots: false,
            stop: None,
            max_steps: None,
            min_scale: None,
        }
    }
}

/// Sampled state retained for blow-up post-processing.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub u: Field,
    pub du_dt: Field,
    pub dissipation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ReachedEnd,
    Converged,
    StepLimit,
    ResolutionExhausted,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: TrajectoryRecord,
    pub state: FlowState,
    pub snapshots: Vec<Snapshot>,
    /// `(t, u)` on a geometric ladder in `t`, pruned to those that can still serve as the
    /// `0.9·t_final` reference of [`convergence_certificate`].
    pub checkpoints: Vec<(f64, Field)>,
    pub stop_reason: StopReason,
}

const CHECKPOINT_RATIO: f64 = 1.01;

/// Integrates the flow from `u0` to `t_end` with adaptive `dt`.
///
/// A step is rejected and retried at `dt/2` when the inner solve stalls or `J` increases by
/// more than the energy slack; `dt` doubles (capped at `dt_max`) after ten clean steps.
pub fn run(u0: Field, model: &Model, cfg: &FlowConfig, t_end: f64, monitors: &Monitors) -> Result<RunOutput> {
    cfg.validate()?;
    if !(t_end > 0.0) {
        return Err(Error::param("t_end", "must be positive"));
    }
    let mut ws = Workspace::new(model.grid);
    let mut state = FlowState::new(u0, model, &mut ws)?;
    let target_mass = state.mass_e_u;
    let slack = cfg.tol_energy * state.energy.abs() + 1e-12;
    let mut record = TrajectoryRecord {
        energy_slack: slack,
        mass_h1_range: (state.mass_h1, state.mass_h1),
        mass_h2_range: (state.mass_h2, state.mass_h2),
        ..Default::default()
    };
    let mut snapshots = Vec::new();
    let mut checkpoints = vec![(0.0, state.u.clone())];
    let mut next_checkpoint = 0.0;
    let zero = ScalarField::zeros(model.grid);
    let first = sample_row(&state, model, &mut ws)?;
    if monitors.keep_snapshots {
        snapshots.push(Snapshot {
            t: 0.0,
            u: state.u.clone(),
            du_dt: instantaneous_du_dt(&state, model, &mut ws).unwrap_or(zero.clone()),
            dissipation: first.dissipation,
        });
    }
    record.rows.push(first);

    let mut dt = cfg.dt_init;
    let mut clean = 0usize;
    let mut since_sample = 0usize;
    let mut stop_reason = StopReason::ReachedEnd;
    let t_tol = 1e-12 * t_end.max(1.0);
    while state.t < t_end - t_tol {
        if monitors.max_steps.is_some_and(|cap| record.accepted_steps >= cap) {
            stop_reason = StopReason::StepLimit;
            break;
        }
        let dt_try = dt.min(t_end - state.t);
        let attempt = step(&state, model, cfg, dt_try, target_mass, &mut ws);
        let (next, info) = match attempt {
            Ok((next, info)) if next.energy <= state.energy + slack => (next, info),
            Ok(_) | Err(Error::InnerSolve { .. }) | Err(Error::NonFinite { .. }) | Err(Error::DegenerateMass { .. }) => {
                record.rejected_steps += 1;
                clean = 0;
                dt = dt_try * 0.5;
                if dt < 1e-12 {
                    return Err(Error::StepUnderflow {
                        t: state.t,
                        dt,
                        diagnosis: format!(
                            "max u = {:.3}; near-blow-up stiffness or exhausted resolution",
                            state.u.max()
                        ),
                    });
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        state = next;
        record.accepted_steps += 1;
        let drift = (state.mass_e_u - target_mass).abs() / target_mass;
        record.max_mass_drift = record.max_mass_drift.max(drift);
        if drift > cfg.tol_mass {
            return Err(Error::MassBound { t: state.t, which: "∫e^u drift", value: drift });
        }
        record.mass_h1_range.0 = record.mass_h1_range.0.min(state.mass_h1);
        record.mass_h1_range.1 = record.mass_h1_range.1.max(state.mass_h1);
        record.mass_h2_range.0 = record.mass_h2_range.0.min(state.mass_h2);
        record.mass_h2_range.1 = record.mass_h2_range.1.max(state.mass_h2);
        clean += 1;
        if clean >= 10 {
            dt = (2.0 * dt).min(cfg.dt_max);
            clean = 0;
        }
        if state.t >= next_checkpoint {
            checkpoints.push((state.t, state.u.clone()));
            next_checkpoint = state.t * CHECKPOINT_RATIO;
            // only the latest checkpoint at or before 0.9·t can still serve as a reference
            let cutoff = 0.9 * state.t;
            if let Some(i) = checkpoints.iter().rposition(|(t, _)| *t <= cutoff) {
                checkpoints.drain(..i);
            }
        }

        since_sample += 1;
        let finished = state.t >= t_end - t_tol;
        if since_sample >= monitors.sample_every.max(1) || finished {
            since_sample = 0;
            let row = sample_row(&state, model, &mut ws)?;
            if monitors.keep_snapshots {
                snapshots.push(Snapshot {
                    t: state.t,
                    u: state.u.clone(),
                    du_dt: info.du_dt.clone(),
                    dissipation: row.dissipation,
                });
            }
            record.rows.push(row);
            if let Some(rule) = monitors.stop {
                if row.residual <= rule.residual && row.dissipation <= rule.dissipation {
                    stop_reason = StopReason::Converged;
                    break;
                }
            }
            if let Some(min_scale) = monitors.min_scale {
                let c1 = row.umax - row.mass_h1.ln();
                if (-c1 / 2.0).exp() < min_scale {
                    stop_reason = StopReason::ResolutionExhausted;
                    break;
                }
            }
        }
    }
    if record.rows.last().map(|r| r.t) != Some(state.t) {
        record.rows.push(sample_row(&state, model, &mut ws)?);
    }
    checkpoints.push((state.t, state.u.clone()));
    Ok(RunOutput {
        record,
        state,
        snapshots,
        checkpoints,
        stop_reason,
    })
}

fn sample_row(state: &FlowState, model: &Model, ws: &mut Workspace) -> Result<TrajectoryRow> {
    let g = model.el_gradient(&state.u, ws)?;
    let dissipation = g
        .zip_map(&state.u, |gi, ui| gi * gi * (-ui).exp())
        .mean();
    Ok(TrajectoryRow {
        t: state.t,
        energy: state.energy,
        mass_eu: state.mass_e_u,
        mass_h1: state.mass_h1,
        mass_h2: state.mass_h2,
        umax: state.u.max(),
        umin: state.u.min(),
        dissipation,
        residual: g.l2_norm(),
    })
}

/// `∂ₜu = e⁻ᵘ(Δu + N(u))` at the given state.
pub fn instantaneous_du_dt(state: &FlowState, model: &Model, ws: &mut Workspace) -> Result<Field> {
    let g = model.el_gradient(&state.u, ws)?;
    Ok(g.zip_map(&state.u, |gi, ui| -gi * (-ui).exp()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Converged,
    BlowupSuspect,
    Undecided,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Converged => "CONVERGED",
            Verdict::BlowupSuspect => "BLOWUP-SUSPECT",
            Verdict::Undecided => "UNDECIDED",
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CertificateThresholds {
    pub residual: f64,
    pub dissipation: f64,
    pub max_change: f64,
    /// Growth of `max u` over the run that counts as concentration.
    pub blowup_growth: f64,
}

impl Default for CertificateThresholds {
    fn default() -> Self {
        CertificateThresholds {
            residual: 1e-6,
            dissipation: 1e-8,
            max_change: 1e-5,
            blowup_growth: 2.0,
        }
    }
}

impl CertificateThresholds {
    /// Early-stop rule two orders inside the residual threshold (four for the dissipation, which
    /// scales as its square), so the late-time change has settled when the run ends.
    pub fn stop_rule(&self) -> StopRule {
        StopRule {
            residual: 1e-2 * self.residual,
            dissipation: 1e-4 * self.dissipation,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Certificate {
    pub residual: f64,
    pub dissipation: f64,
    /// `‖u(t_final) − u(0.9·t_final)‖∞`.
    pub max_change: f64,
    pub verdict: Verdict,
}

/// Classifies a finished run from its final residual, dissipation and late-time motion.
pub fn convergence_certificate(out: &RunOutput, thresholds: &CertificateThresholds) -> Certificate {
    let last = *out.record.rows.last().expect("a run records at least one row");
    let t_final = out.state.t;
    let window_start = 0.9 * t_final;
    let reference = out
        .checkpoints
        .iter()
        .filter(|(t, _)| *t <= window_start)
        .next_back()
        .or_else(|| out.checkpoints.first())
        .map(|(_, u)| u)
        .expect("checkpoint at t = 0");
    let max_change = (&out.state.u - reference).max_abs();
    let converged = last.residual <= thresholds.residual
        && last.dissipation <= thresholds.dissipation
        && max_change <= thresholds.max_change;
    let verdict = if converged {
        Verdict::Converged
    } else {
        let rows = &out.record.rows;
        let first = rows[0];
        let scale = |r: &TrajectoryRow| (-(r.umax - r.mass_h1.ln()) / 2.0).exp();
        let window: Vec<&TrajectoryRow> = rows.iter().filter(|r| r.t >= window_start).collect();
        let shrinking = window.len() >= 2 && scale(window[window.len() - 1]) < scale(window[0]);
        if last.umax - first.umax >= thresholds.blowup_growth && shrinking {
            Verdict::BlowupSuspect
        } else {
            Verdict::Undecided
        }
    };
    Certificate {
        residual: last.residual,
        dissipation: last.dissipation,
        max_change,
        verdict,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Grid;
    use std::f64::consts::PI;

    fn model(n: usize, rho1: f64, rho2: f64) -> (Model, FlowConfig) {
        let cfg = FlowConfig::with_rhos(rho1, rho2);
        (Model::from_config(&cfg, Grid::new(n).unwrap()).unwrap(), cfg)
    }

    #[test]
    fn zero_is_stationary() {
        let (m, cfg) = model(32, 8.0 * PI, 4.0 * PI);
        let mut ws = Workspace::new(m.grid);
        let s = FlowState::new(ScalarField::zeros(m.grid), &m, &mut ws).unwrap();
        for dt in [1e-4, 1.0, 100.0] {
            let (next, info) = step(&s, &m, &cfg, dt, s.mass_e_u, &mut ws).unwrap();
            assert!(next.u.max_abs() < 1e-14);
            assert_eq!(info.inner_iterations, 0);
        }
    }

    #[test]
    fn one_step_lowers_energy() {
        let (m, cfg) = model(64, 4.0 * PI, 2.0 * PI);
        let mut ws = Workspace::new(m.grid);
        let u0 = ScalarField::from_fn(m.grid, |x, _| 0.1 * (2.0 * PI * x).cos());
        let s = FlowState::new(u0, &m, &mut ws).unwrap();
        let (next, _) = step(&s, &m, &cfg, 1e-2, s.mass_e_u, &mut ws).unwrap();
        assert!(next.energy <= s.energy + cfg.tol_energy * s.energy.abs() + 1e-12);
        assert!((next.mass_e_u - s.mass_e_u).abs() < 1e-13 * s.mass_e_u);
    }

    #[test]
    fn micro_step_matches_explicit_euler() {
        // explicit Euler: u + dt e^{-u}(Δu + N(u)); the two agree to O(dt²)
        let (m, cfg) = model(32, 8.0 * PI, 4.0 * PI);
        let mut ws = Workspace::new(m.grid);
        let u0 = ScalarField::from_fn(m.grid, |x, y| 0.4 * (2.0 * PI * x).cos() + 0.2 * (2.0 * PI * (x + y)).sin());
        let s = FlowState::new(u0.clone(), &m, &mut ws).unwrap();
        let rate = instantaneous_du_dt(&s, &m, &mut ws).unwrap();
        for dt in [1e-8, 1e-6] {
            let (next, _) = step(&s, &m, &cfg, dt, s.mass_e_u, &mut ws).unwrap();
            let euler = &u0 + &(&rate * dt);
            let scale = rate.max_abs();
            let diff = (&next.u - &euler).max_abs();
            assert!(diff <= 1e3 * scale * dt * dt + 1e-14, "dt={dt}: {diff:e}");
        }
    }

    #[test]
    fn trivial_run_is_constant_and_converged() {
        let (m, cfg) = model(16, 8.0 * PI, 4.0 * PI);
        let out = run(ScalarField::zeros(m.grid), &m, &cfg, 1.0, &Monitors::default()).unwrap();
        assert!(out.record.rows.iter().all(|r| r.residual == 0.0 && r.energy == 0.0));
        let cert = convergence_certificate(&out, &CertificateThresholds::default());
        assert_eq!(cert.verdict, Verdict::Converged);
        assert_eq!(cert.residual, 0.0);
    }

    #[test]
    fn csv_header_and_rows() {
        let (m, cfg) = model(16, 8.0 * PI, 4.0 * PI);
        let out = run(ScalarField::zeros(m.grid), &m, &cfg, 0.01, &Monitors::default()).unwrap();
        let csv = out.record.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(TRAJECTORY_HEADER));
        assert_eq!(lines.count(), out.record.rows.len());
    }

    #[test]
    fn residual_above_threshold_is_never_converged() {
        let (m, cfg) = model(32, 8.0 * PI, 4.0 * PI);
        let u0 = ScalarField::from_fn(m.grid, |x, _| (2.0 * PI * x).cos());
        let mon = Monitors { max_steps: Some(3), ..Default::default() };
        let out = run(u0, &m, &cfg, 10.0, &mon).unwrap();
        let cert = convergence_certificate(&out, &CertificateThresholds::default());
        assert!(cert.residual > 1e-6);
        assert_ne!(cert.verdict, Verdict::Converged);
    }
}
