//! Subcommand dispatch and exit codes.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sinhflow::barrier::{build_test_function, condition_check, expansion_fit, TestFunctionParams};
use sinhflow::blowup::{normalize, track, TrackOptions};
use sinhflow::flow::{convergence_certificate, run, CertificateThresholds, Monitors, RunOutput};
use sinhflow::green::green_function_with;
use sinhflow::initial::{bubble_field, random_smooth_field};
use sinhflow::mfe::{barrier_level, solve_mfe, MfeOptions, ScanOptions};
use sinhflow::{Error, Field, Model, Point, Result, Workspace};

use crate::config::{parse_config, ExperimentConfig, InitialData};
use crate::output::{pgm, with_metadata, write_artifact};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "sinhflow", version, about = "Critical sinh-Gordon flow laboratory on the flat torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the flow from `u0` to `t_end`.
    Flow(Common),
    /// Green function, regular part and expansion coefficients at `p`.
    Green(Common),
    /// Scan the mean-field problem over a lattice of points and report the level.
    Mfe(Common),
    /// Barrier test function: gaps and expansion fit over `eps_list`.
    Barrier(Common),
    /// Flow with blow-up diagnostics over `delta_list`.
    Blowup(Common),
    /// Run the invariant suite and print a pass/fail table.
    Verify(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Configuration file (`key = value` lines).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Extra `key=value` settings applied after the file.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory, overrides `out_dir`.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut text = match &common.config {
        Some(path) => fs::read_to_string(path).map_err(|e| Error::Config {
            line: 0,
            key: "config".into(),
            reason: format!("{}: {e}", path.display()),
        })?,
        None => String::new(),
    };
    if !text.is_empty() && !text.ends_with('\n') {
        text.push('\n');
    }
    for s in &common.set {
        text.push_str(s);
        text.push('\n');
    }
    let mut cfg = parse_config(&text)?;
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let (common, f): (&Common, fn(&ExperimentConfig) -> Result<bool>) = match &cli.command {
        Command::Flow(c) => (c, cmd_flow),
        Command::Green(c) => (c, cmd_green),
        Command::Mfe(c) => (c, cmd_mfe),
        Command::Barrier(c) => (c, cmd_barrier),
        Command::Blowup(c) => (c, cmd_blowup),
        Command::Verify(c) => (c, cmd_verify),
    };
    let outcome = load(common).and_then(|cfg| f(&cfg));
    match outcome {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_SOLVER,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_SOLVER
            }
        }
    }
}

fn initial_field(cfg: &ExperimentConfig) -> Result<Field> {
    let grid = cfg.grid();
    Ok(match cfg.u0 {
        InitialData::Zero => Field::zeros(grid),
        InitialData::Random { modes, amplitude } => random_smooth_field(grid, modes, amplitude, cfg.seed),
        InitialData::Bubble { cx, cy, lambda, shift } => bubble_field(grid, Point::new(cx, cy), lambda, shift),
        InitialData::Barrier { epsilon } => {
            let scan = barrier_level(&cfg.flow, grid, cfg.p_resolution, &ScanOptions::default())?;
            let params = TestFunctionParams::new(epsilon, &scan.green_p0)?;
            params.check_resolution(grid)?;
            println!("u0: barrier test function at p0 = ({:.4}, {:.4}), level {:.10}", scan.p0.x, scan.p0.y, scan.level);
            build_test_function(&params, &scan.green_p0, &scan.solution_p0.w)?
        }
    })
}

fn run_flow(cfg: &ExperimentConfig, snapshots: bool) -> Result<(Model, RunOutput)> {
    let grid = cfg.grid();
    let u0 = initial_field(cfg)?;
    let model = Model::from_config(&cfg.flow, grid)?;
    let th = CertificateThresholds::default();
    let monitors = Monitors {
        sample_every: cfg.sample_every,
        keep_snapshots: snapshots,
        stop: (!snapshots).then_some(th.stop_rule()),
        max_steps: None,
        min_scale: snapshots.then(|| 2.0 * grid.spacing()),
    };
    let out = run(u0, &model, &cfg.flow, cfg.t_end, &monitors)?;
    Ok((model, out))
}

fn cmd_flow(cfg: &ExperimentConfig) -> Result<bool> {
    let (_, out) = run_flow(cfg, false)?;
    let rec = &out.record;
    write_artifact(&cfg.out_dir, "trajectory.csv", &with_metadata(rec.to_csv(), cfg))?;
    write_artifact(&cfg.out_dir, "u_final.pgm", &pgm(&out.state.u))?;
    let cert = convergence_certificate(&out, &CertificateThresholds::default());
    println!(
        "t = {:.6}  steps {} (rejected {})  J {:.10}  mass drift {:.2e}  max dJ {:.2e}",
        out.state.t,
        rec.accepted_steps,
        rec.rejected_steps,
        out.state.energy,
        rec.max_mass_drift,
        rec.max_energy_increase()
    );
    println!(
        "{}  residual {:.3e}  dissipation {:.3e}  late change {:.3e}  ({:?})",
        cert.verdict, cert.residual, cert.dissipation, cert.max_change, out.stop_reason
    );
    Ok(true)
}

fn cmd_green(cfg: &ExperimentConfig) -> Result<bool> {
    let grid = cfg.grid();
    let mut ws = Workspace::new(grid);
    let g = green_function_with(cfg.p, &mut ws)?;
    let csv = format!(
        "px,py,A,b1,b2,fit_error,integral\n{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
        g.p.x,
        g.p.y,
        g.regular_part,
        g.b1,
        g.b2,
        g.fit_error,
        g.g_field.integrate()?
    );
    write_artifact(&cfg.out_dir, "green.csv", &with_metadata(csv, cfg))?;
    write_artifact(&cfg.out_dir, "green.pgm", &pgm(&g.g_field))?;
    println!("p = ({:.6}, {:.6})  A = {:.12}  b = ({:.3e}, {:.3e})", g.p.x, g.p.y, g.regular_part, g.b1, g.b2);
    Ok(true)
}

fn cmd_mfe(cfg: &ExperimentConfig) -> Result<bool> {
    let scan = barrier_level(&cfg.flow, cfg.grid(), cfg.p_resolution, &ScanOptions::default())?;
    write_artifact(&cfg.out_dir, "scan.csv", &with_metadata(scan.to_csv(), cfg))?;
    write_artifact(&cfg.out_dir, "w_p0.pgm", &pgm(&scan.solution_p0.w))?;
    let worst = scan.rows.iter().map(|r| r.residual).filter(|r| r.is_finite()).fold(0.0, f64::max);
    println!(
        "p0 = ({:.6}, {:.6})  level = {:.10}  max residual {:.2e}  failures {}",
        scan.p0.x, scan.p0.y, scan.level, worst, scan.failures
    );
    Ok(scan.failures == 0)
}

fn cmd_barrier(cfg: &ExperimentConfig) -> Result<bool> {
    let grid = cfg.grid();
    let scan = barrier_level(&cfg.flow, grid, cfg.p_resolution, &ScanOptions::default())?;
    let cond = condition_check(scan.p0, &cfg.flow, grid)?;
    let fit = expansion_fit(&cfg.eps_list, &cfg.flow, &scan, grid)?;
    write_artifact(&cfg.out_dir, "barrier.csv", &with_metadata(fit.to_csv(), cfg))?;
    let smallest = fit
        .rows
        .iter()
        .map(|r| r.epsilon)
        .fold(f64::INFINITY, f64::min);
    let params = TestFunctionParams::new(smallest, &scan.green_p0)?;
    let phi = build_test_function(&params, &scan.green_p0, &scan.solution_p0.w)?;
    write_artifact(&cfg.out_dir, "phi_eps.pgm", &pgm(&phi))?;
    println!("p0 = ({:.6}, {:.6})  level {:.10}  condition {:.6}", scan.p0.x, scan.p0.y, scan.level, cond);
    for r in &fit.rows {
        println!("eps {:.3e}  alpha {:.4}  J {:.10}  gap {:+.4e}", r.epsilon, r.alpha, r.j_value, r.gap);
    }
    println!("fit c0 {:.10}  c1 {:.4}  predicted c1 {:.4}", fit.c0, fit.c1, fit.predicted_c1);
    Ok(true)
}

fn cmd_blowup(cfg: &ExperimentConfig) -> Result<bool> {
    let (model, out) = run_flow(cfg, true)?;
    let report = track(&out.snapshots, &model, &cfg.delta_list, &TrackOptions::default())?;
    write_artifact(&cfg.out_dir, "blowup.csv", &with_metadata(report.to_csv(), cfg))?;
    write_artifact(&cfg.out_dir, "trajectory.csv", &with_metadata(out.record.to_csv(), cfg))?;
    let last = report.rows.last().expect("at least the initial sample");
    println!(
        "samples {}  last t {:.5}  c1 {:.4}  r1 {:.4e}  mu1 {:?}  exhausted {}",
        report.rows.len(),
        last.t,
        last.c1,
        last.r1,
        last.mu1,
        report.exhausted
    );
    for flag in [
        sinhflow::blowup::Flag::SinglePointConcentration,
        sinhflow::blowup::Flag::NeverSViolation,
        sinhflow::blowup::Flag::ResolutionExhausted,
    ] {
        println!("{flag}: {}", report.flagged(flag).count());
    }
    Ok(true)
}

struct Check {
    name: &'static str,
    value: f64,
    limit: f64,
}

impl Check {
    fn pass(&self) -> bool {
        self.value.is_finite() && self.value <= self.limit
    }
}

const VERIFY_N: usize = 64;

/// Quick invariant suite at a fixed 64 × 64 grid with the configured model.
fn cmd_verify(cfg: &ExperimentConfig) -> Result<bool> {
    let mut small = cfg.clone();
    small.n = VERIFY_N;
    let grid = small.grid();
    let model = Model::from_config(&small.flow, grid)?;
    let mut ws = Workspace::new(grid);
    let mut checks = Vec::new();

    let u0 = random_smooth_field(grid, 3, 0.5, small.seed);
    let out = run(
        u0.clone(),
        &model,
        &small.flow,
        0.05,
        &Monitors { sample_every: 1, ..Default::default() },
    )?;
    checks.push(Check { name: "mass drift of ∫e^u", value: out.record.max_mass_drift, limit: small.flow.tol_mass });
    checks.push(Check {
        name: "energy increase per step",
        value: out.record.max_energy_increase(),
        limit: out.record.energy_slack,
    });

    let v = random_smooth_field(grid, 3, 1.0, small.seed + 1);
    let h = 1e-4;
    let jp = model.energy_j(&(&u0 + &(&v * h)), &mut ws)?;
    let jm = model.energy_j(&(&u0 - &(&v * h)), &mut ws)?;
    let fd = (jp - jm) / (2.0 * h);
    let pairing = model.el_gradient(&u0, &mut ws)?.dot(&v);
    checks.push(Check {
        name: "directional derivative vs gradient",
        value: (fd - pairing).abs() / pairing.abs().max(1e-12),
        limit: 1e-5,
    });

    let g = green_function_with(small.p, &mut ws)?;
    checks.push(Check { name: "∫G_p", value: g.g_field.integrate()?.abs(), limit: 1e-6 });
    let q = grid.snapped(small.p.offset(0.3, 0.2));
    let gq = green_function_with(q, &mut ws)?;
    checks.push(Check { name: "A(p) − A(q)", value: (g.regular_part - gq.regular_part).abs(), limit: 1e-6 });

    let (_, sol) = solve_mfe(small.p, grid, &small.flow, &MfeOptions::default())?;
    checks.push(Check { name: "mean-field residual", value: sol.residual, limit: small.flow.tol_mfe });

    let pair = normalize(&out.state.u, &model, &Field::zeros(grid))?;
    let m1 = pair.u1.zip_map(&model.h1, |a, b| b * a.exp()).integrate()?;
    checks.push(Check { name: "∫h1·e^(u1) − 1", value: (m1 - 1.0).abs(), limit: 1e-10 });

    let f = random_smooth_field(grid, 4, 1.0, small.seed + 2);
    let inv = ws.solve_poisson(&f.centered())?;
    let round = ws.laplacian(&inv)?;
    checks.push(Check { name: "Δ∘Δ⁻¹ round trip", value: (&round - &f.centered()).max_abs(), limit: 1e-10 });

    println!("{:<40} {:>12} {:>12}  result", "invariant", "value", "limit");
    for c in &checks {
        println!(
            "{:<40} {:>12.3e} {:>12.3e}  {}",
            c.name,
            c.value,
            c.limit,
            if c.pass() { "PASS" } else { "FAIL" }
        );
    }
    Ok(checks.iter().all(Check::pass))
}
