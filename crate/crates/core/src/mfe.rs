//! Singular mean-field problem
//! `−Δw = ρ₂(h₂e^{−G_p}eʷ / ∫h₂e^{−G_p}eʷ − 1)`, `∫w = 0`,
//! solved by minimizing `J̃_p(w) = ½∫|∇w|² − ρ₂ log∫h₂e^{−G_p}eʷ`, and the scan over `p`
//! that produces the level `L*`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use log::warn;
use rayon::prelude::*;

use crate::energy::log_weighted_mass;
use crate::error::{Error, Result};
use crate::green::{green_function_with, GreenData};
use crate::torus::{Grid, Point, ScalarField};
use crate::{Field, FlowConfig, Workspace};

/// `−8π log π − 8π`, the additive constant of the blow-up lower bound.
pub const LEVEL_SHIFT: f64 = -8.0 * PI * 1.144_729_885_849_400_2 - 8.0 * PI;

/// `h₂·e^{−G_p}`, exactly zero at `p`.
pub fn singular_weight(green: &GreenData, h2: &Field) -> Result<Field> {
    let e = green.exp_neg();
    h2.check_grid(&e)?;
    Ok(e.zip_map(h2, |a, b| a * b))
}

/// `J̃_p(w)` for a precomputed singular weight.
pub fn tilde_j(w: &Field, weight: &Field, rho2: f64, ws: &mut Workspace) -> Result<f64> {
    let mean = w.mean();
    if mean.abs() > 1e-10 * w.max_abs().max(1.0) {
        return Err(Error::param("w", format!("mean {mean:e} is not zero")));
    }
    let lm = log_weighted_mass(weight, w, 1.0, "∫h2·e^(-G)·e^w")?;
    Ok(ws.dirichlet_energy(w)? - rho2 * lm)
}

/// L² gradient of `J̃_p` restricted to mean-zero fields: `−Δw − ρ₂(q − 1)`.
pub fn tilde_gradient(w: &Field, weight: &Field, rho2: f64, ws: &mut Workspace) -> Result<Field> {
    let lm = log_weighted_mass(weight, w, 1.0, "∫h2·e^(-G)·e^w")?;
    let lap = ws.laplacian(w)?;
    Ok(ScalarField::from_values(
        w.grid(),
        lap.values()
            .iter()
            .zip(w.values())
            .zip(weight.values())
            .map(|((&l, &wi), &k)| -l - rho2 * (k * (wi - lm).exp() - 1.0))
            .collect(),
    )?)
}

#[derive(Debug, Clone)]
pub struct MfeSolution {
    pub p: Point,
    /// Mean-zero minimizer.
    pub w: Field,
    pub energy_tilde: f64,
    /// L² norm of the equation residual.
    pub residual: f64,
    pub iterations: usize,
    /// `∫h₂e^{−G_p}eʷ`.
    pub weight_mass: f64,
    /// `J̃_p` after each accepted iteration, starting from the initial guess.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct MfeOptions {
    pub max_iters: usize,
    /// Also start from four bubbles at quarter-lattice offsets and keep the lowest energy.
    pub multistart: bool,
}

impl Default for MfeOptions {
    fn default() -> Self {
        MfeOptions {
            max_iters: 2000,
            multistart: false,
        }
    }
}

/// Minimizes `J̃_p` for the Green function already computed at `green.p`.
pub fn solve_mfe_with(
    green: &GreenData,
    cfg: &FlowConfig,
    opts: &MfeOptions,
    ws: &mut Workspace,
) -> Result<MfeSolution> {
    let grid = ws.grid();
    let h2: Field = cfg.h2.sample(grid);
    let weight = singular_weight(green, &h2)?;
    if !(weight.max() > 0.0) {
        return Err(Error::DegenerateMass { which: "∫h2·e^(-G)" });
    }
    let mut best = descend(ScalarField::zeros(grid), &weight, green.p, cfg, opts, ws)?;
    if opts.multistart {
        for (ox, oy) in [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)] {
            let c = green.p.offset(ox, oy);
            let bump = ScalarField::from_fn(grid, |x, y| {
                let r2 = c.dist(Point::new(x, y)).powi(2);
                -(r2 + 0.01).ln()
            })
            .centered();
            match descend(bump, &weight, green.p, cfg, opts, ws) {
                Ok(s) if s.energy_tilde < best.energy_tilde => best = s,
                Ok(_) => {}
                Err(e) => warn!("multistart from ({:.3}, {:.3}) failed: {e}", c.x, c.y),
            }
        }
    }
    Ok(best)
}

/// Green function and minimizer at the node nearest to `p`.
pub fn solve_mfe(p: Point, grid: Grid, cfg: &FlowConfig, opts: &MfeOptions) -> Result<(GreenData, MfeSolution)> {
    cfg.validate()?;
    let mut ws = Workspace::new(grid);
    let green = green_function_with(p, &mut ws)?;
    let sol = solve_mfe_with(&green, cfg, opts, &mut ws)?;
    Ok((green, sol))
}

fn descend(
    mut w: Field,
    weight: &Field,
    p: Point,
    cfg: &FlowConfig,
    opts: &MfeOptions,
    ws: &mut Workspace,
) -> Result<MfeSolution> {
    let rho2 = cfg.rho2;
    let mut energy = tilde_j(&w, weight, rho2, ws)?;
    let mut trace = vec![energy];
    let mut residual = f64::INFINITY;
    for it in 0..=opts.max_iters {
        let g = tilde_gradient(&w, weight, rho2, ws)?;
        residual = g.l2_norm();
        if residual <= cfg.tol_mfe {
            let lm = log_weighted_mass(weight, &w, 1.0, "∫h2·e^(-G)·e^w")?;
            return Ok(MfeSolution {
                p,
                w,
                energy_tilde: energy,
                residual,
                iterations: it,
                weight_mass: lm.exp(),
                trace,
            });
        }
        if it == opts.max_iters {
            break;
        }
        // d = −(−Δ)⁻¹g
        let d = ws.solve_poisson_projected(&g)?;
        let slope = g.dot(&d);
        let slack = 1e-14 * energy.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = (&w + &(&d * t)).centered();
            if let Ok(e) = tilde_j(&trial, weight, rho2, ws) {
                if e <= energy + 1e-4 * t * slope + slack {
                    accepted = Some((trial, e));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((trial, e)) = accepted else { break };
        w = trial;
        energy = e;
        trace.push(energy);
    }
    Err(Error::MfeNonConvergence {
        px: p.x,
        py: p.y,
        residual,
        iterations: opts.max_iters,
    })
}

/// One scanned point.
#[derive(Debug, Clone, Copy)]
pub struct ScanRow {
    pub p: Point,
    pub a: f64,
    /// `J̃_p(w_p)`; NaN when `h₁(p) = 0` (no solve needed) or when the solve failed.
    pub j_tilde: f64,
    pub h1: f64,
    /// `J̃_p(w_p) − 4πA(p) − 8π log h₁(p)`; `+∞` where `h₁(p) = 0`.
    pub score: f64,
    pub residual: f64,
    pub failed: bool,
}

#[derive(Debug, Clone)]
pub struct BarrierScan {
    pub resolution: usize,
    pub rows: Vec<ScanRow>,
    /// Minimizing point (possibly from the local refinement, then not among `rows`).
    pub p0: Point,
    pub best: ScanRow,
    /// `min score + LEVEL_SHIFT`.
    pub level: f64,
    pub failures: usize,
    pub green_p0: GreenData,
    pub solution_p0: MfeSolution,
}

#[derive(Debug, Clone, Copy)]
pub struct ScanOptions {
    pub mfe: MfeOptions,
    /// One level of 2× refinement around the lattice argmin.
    pub refine: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            mfe: MfeOptions::default(),
            refine: true,
        }
    }
}

fn score_at(p: Point, grid: Grid, cfg: &FlowConfig, opts: &MfeOptions, ws: &mut Workspace) -> (ScanRow, Option<(GreenData, MfeSolution)>) {
    let p = grid.snapped(p);
    let h1 = cfg.h1.eval(p);
    let green = match green_function_with(p, ws) {
        Ok(g) => g,
        Err(e) => {
            warn!("green function at ({:.4}, {:.4}) failed: {e}", p.x, p.y);
            return (failed_row(p, f64::NAN, h1), None);
        }
    };
    let a = green.regular_part;
    if !(h1 > 0.0) {
        let row = ScanRow { p, a, j_tilde: f64::NAN, h1, score: f64::INFINITY, residual: f64::NAN, failed: false };
        return (row, None);
    }
    match solve_mfe_with(&green, cfg, opts, ws) {
        Ok(sol) => {
            let row = ScanRow {
                p,
                a,
                j_tilde: sol.energy_tilde,
                h1,
                score: sol.energy_tilde - 4.0 * PI * a - 8.0 * PI * h1.ln(),
                residual: sol.residual,
                failed: false,
            };
            (row, Some((green, sol)))
        }
        Err(e) => {
            warn!("mean-field solve at ({:.4}, {:.4}) failed: {e}", p.x, p.y);
            (failed_row(p, a, h1), None)
        }
    }
}

fn failed_row(p: Point, a: f64, h1: f64) -> ScanRow {
    ScanRow { p, a, j_tilde: f64::NAN, h1, score: f64::NAN, residual: f64::NAN, failed: true }
}

/// Scans `p` over a `resolution × resolution` lattice of grid nodes and returns the argmin of
/// the score together with `L*`.
pub fn barrier_level(cfg: &FlowConfig, grid: Grid, resolution: usize, opts: &ScanOptions) -> Result<BarrierScan> {
    cfg.validate()?;
    if resolution < 4 || resolution > grid.n() {
        return Err(Error::param("p_resolution", format!("{resolution} is outside [4, n]")));
    }
    let points: Vec<Point> = (0..resolution * resolution)
        .map(|k| Point::new((k % resolution) as f64 / resolution as f64, (k / resolution) as f64 / resolution as f64))
        .collect();
    let results: Vec<(ScanRow, Option<(GreenData, MfeSolution)>)> = points
        .par_iter()
        .map_init(|| Workspace::new(grid), |ws, &p| score_at(p, grid, cfg, &opts.mfe, ws))
        .collect();
    let failures = results.iter().filter(|(r, _)| r.failed).count();
    let mut best: Option<(ScanRow, GreenData, MfeSolution)> = None;
    let mut rows = Vec::with_capacity(results.len());
    for (row, data) in results {
        rows.push(row);
        if let Some((g, s)) = data {
            if best.as_ref().is_none_or(|(b, _, _)| row.score < b.score) {
                best = Some((row, g, s));
            }
        }
    }
    let Some(mut best) = best else {
        return Err(Error::ScanFailed);
    };
    if opts.refine {
        let step = 0.5 / resolution as f64;
        let centre = best.0.p;
        let candidates: Vec<Point> = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]
            .iter()
            .map(|&(i, j)| grid.snapped(centre.offset(i as f64 * step, j as f64 * step)))
            .filter(|q| q.dist(centre) > 0.0)
            .collect();
        let refined: Vec<_> = candidates
            .par_iter()
            .map_init(|| Workspace::new(grid), |ws, &p| score_at(p, grid, cfg, &opts.mfe, ws))
            .collect();
        for (row, data) in refined {
            if let Some((g, s)) = data {
                if row.score < best.0.score {
                    best = (row, g, s);
                }
            }
        }
    }
    let (row, green_p0, solution_p0) = best;
    Ok(BarrierScan {
        resolution,
        rows,
        p0: row.p,
        best: row,
        level: row.score + LEVEL_SHIFT,
        failures,
        green_p0,
        solution_p0,
    })
}

pub const SCAN_HEADER: &str = "px,py,A,Jtilde,h1,score";

impl BarrierScan {
    /// Rows as CSV plus a `# summary` comment line naming `p0` and `L*`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(SCAN_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{:e},{:e},{:e},{:e},{:e},{:e}", r.p.x, r.p.y, r.a, r.j_tilde, r.h1, r.score);
        }
        let _ = writeln!(
            s,
            "# summary p0_x={:e} p0_y={:e} score={:e} level={:e} failures={}",
            self.p0.x, self.p0.y, self.best.score, self.level, self.failures
        );
        s
    }

    /// `max − min` of the finite scores.
    pub fn score_spread(&self) -> f64 {
        let finite = self.rows.iter().map(|r| r.score).filter(|s| s.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s), hi.max(s)));
        hi - lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::WeightSpec;

    #[test]
    fn level_shift_value() {
        assert!((LEVEL_SHIFT - (-8.0 * PI * PI.ln() - 8.0 * PI)).abs() < 1e-12);
        assert!((LEVEL_SHIFT + 53.9034).abs() < 1e-3);
    }

    #[test]
    fn weight_vanishes_at_p_only() {
        let grid = Grid::new(64).unwrap();
        let mut ws = Workspace::new(grid);
        let g = green_function_with(Point::new(0.25, 0.5), &mut ws).unwrap();
        let k = singular_weight(&g, &ScalarField::constant(grid, 1.0)).unwrap();
        assert_eq!(k.at(g.node.0, g.node.1), 0.0);
        let far = grid.snap(Point::new(0.75, 0.0));
        assert!((k.at(far.0, far.1) - (-g.g_field.at(far.0, far.1)).exp()).abs() < 1e-15);
        assert!(k.min() >= 0.0);
    }

    #[test]
    fn zero_weight_is_rejected() {
        let cfg = FlowConfig::default().with_weights(WeightSpec::default(), WeightSpec::Constant { value: 0.0 });
        let grid = Grid::new(64).unwrap();
        let mut ws = Workspace::new(grid);
        let g = green_function_with(Point::new(0.5, 0.5), &mut ws).unwrap();
        assert!(matches!(
            solve_mfe_with(&g, &cfg, &MfeOptions::default(), &mut ws),
            Err(Error::DegenerateMass { .. })
        ));
    }

    #[test]
    fn solution_is_certified_and_descent_monotone() {
        let grid = Grid::new(64).unwrap();
        let cfg = FlowConfig::with_rhos(8.0 * PI, 4.0 * PI);
        let (_, s) = solve_mfe(Point::new(0.5, 0.5), grid, &cfg, &MfeOptions::default()).unwrap();
        assert!(s.residual <= 1e-8);
        assert!(s.w.mean().abs() <= 1e-10);
        for w in s.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-13 * w[0].abs().max(1.0));
        }
        assert!(s.trace.last().unwrap() < s.trace.first().unwrap());
    }
}
