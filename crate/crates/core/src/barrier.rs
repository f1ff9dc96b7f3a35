//! Concentrating test function `Φ̃_ε = Φ_ε − w_{p₀}` glued to the Green function, its energy,
//! and the fit of `J(Φ̃_ε) ≈ c₀ + c₁ ε(−log ε)`.
//!
//! `Φ_ε` is a bubble `−2 log(r² + ε)` on `B_{α√ε}(p₀)`, the shifted Green function outside
//! `B_{2α√ε}`, and an interpolation through the Green remainder `β` on the annulus between.
//!
//! The energy is evaluated by splitting every integrand with a radial partition of unity
//! `ψ + (1 − ψ)` around `p₀`: the `ψ` part is integrated in polar coordinates (Gauss–Legendre
//! panels graded at the `√ε` scale, trapezoid in angle) from pointwise evaluations, and the
//! `(1 − ψ)` part, where `Φ̃_ε` is the smooth `G + const − w`, by the grid rule.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::green::GreenData;
use crate::mfe::BarrierScan;
use crate::radial::{composite_rule, least_squares, RadialCutoff};
use crate::torus::{Grid, Point, ScalarField, SpectralInterpolant};
use crate::{Field, FlowConfig, Workspace};

/// Largest admissible `ε`, `e^{−e}`.
pub fn epsilon_max() -> f64 {
    (-std::f64::consts::E).exp()
}

/// `α` with `α⁴ε = 1/log(−log ε)`.
pub fn alpha_for(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < epsilon_max()) {
        return Err(Error::param("epsilon", format!("{epsilon:e} is outside (0, e^-e)")));
    }
    Ok((1.0 / (epsilon * (-epsilon.ln()).ln())).powf(0.25))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunctionParams {
    pub epsilon: f64,
    pub alpha: f64,
    pub p0: Point,
    pub b1: f64,
    pub b2: f64,
    /// `A(p₀)`.
    pub a: f64,
}

impl TestFunctionParams {
    pub fn new(epsilon: f64, green: &GreenData) -> Result<Self> {
        let alpha = alpha_for(epsilon)?;
        let params = TestFunctionParams {
            epsilon,
            alpha,
            p0: green.p,
            b1: green.b1,
            b2: green.b2,
            a: green.regular_part,
        };
        if !(params.inner_radius() < 0.125) {
            return Err(Error::param(
                "epsilon",
                format!("α√ε = {:.4} must stay below 1/8 (ε = {epsilon:e})", params.inner_radius()),
            ));
        }
        Ok(params)
    }

    /// `α√ε`, the radius of the bubble region.
    pub fn inner_radius(&self) -> f64 {
        self.alpha * self.epsilon.sqrt()
    }

    /// Rejects `ε` whose bubble is not resolved by at least eight grid cells.
    pub fn check_resolution(&self, grid: Grid) -> Result<()> {
        let need = 8.0 / grid.n() as f64;
        if self.inner_radius() < need {
            return Err(Error::param(
                "epsilon",
                format!(
                    "α√ε = {:.5} is below 8/n = {need:.5} at n = {}; ε = {:e} is not resolved",
                    self.inner_radius(),
                    grid.n(),
                    self.epsilon
                ),
            ));
        }
        Ok(())
    }

    /// `−2 log((α²+1)/α²) − A + log ε`, the shift of the outer piece.
    pub fn far_constant(&self) -> f64 {
        let a2 = self.alpha * self.alpha;
        -2.0 * ((a2 + 1.0) / a2).ln() - self.a + self.epsilon.ln()
    }

    /// `[η, η']` of the quintic cutoff, one on `r ≤ a`, zero on `r ≥ 2a`.
    fn eta(&self, r: f64) -> [f64; 2] {
        let a = self.inner_radius();
        let t = ((r - a) / a).clamp(0.0, 1.0);
        let p = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
        let dp = 30.0 * t * t * (1.0 - t) * (1.0 - t);
        let d = if r > a && r < 2.0 * a { -dp / a } else { 0.0 };
        [1.0 - p, d]
    }
}

/// Which formula of the three-piece definition applies at distance `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Piece {
    Bubble,
    Annulus,
    Outer,
}

pub fn piece(params: &TestFunctionParams, r: f64) -> Piece {
    let a = params.inner_radius();
    if r <= a {
        Piece::Bubble
    } else if r < 2.0 * a {
        Piece::Annulus
    } else {
        Piece::Outer
    }
}

/// Bubble formula `−2 log(r² + ε) + b·d + log ε` at displacement `d` from `p₀`.
pub fn bubble_value(params: &TestFunctionParams, d: (f64, f64)) -> f64 {
    let r2 = d.0 * d.0 + d.1 * d.1;
    -2.0 * (r2 + params.epsilon).ln() + params.b1 * d.0 + params.b2 * d.1 + params.epsilon.ln()
}

/// Annulus formula `G − ηβ + far_constant` given `G` at displacement `d`.
pub fn annulus_value(params: &TestFunctionParams, d: (f64, f64), g: f64) -> f64 {
    let r = d.0.hypot(d.1);
    let beta = g + 4.0 * r.ln() - params.a - params.b1 * d.0 - params.b2 * d.1;
    g - params.eta(r)[0] * beta + params.far_constant()
}

/// `Φ_ε` at displacement `d` from `p₀` given the Green value there.
fn phi_from_green(params: &TestFunctionParams, d: (f64, f64), g: f64) -> f64 {
    match piece(params, d.0.hypot(d.1)) {
        Piece::Bubble => bubble_value(params, d),
        Piece::Annulus => annulus_value(params, d, g),
        Piece::Outer => g + params.far_constant(),
    }
}

/// Samples `Φ̃_ε = Φ_ε − w_{p₀}` on the grid of `w_p0`, using only nodal Green values.
pub fn build_test_function(params: &TestFunctionParams, green: &GreenData, w_p0: &Field) -> Result<Field> {
    green.g_field.check_grid(w_p0)?;
    let grid = w_p0.grid();
    let mut out = ScalarField::zeros(grid);
    for iy in 0..grid.n() {
        for ix in 0..grid.n() {
            let d = params.p0.delta_to(grid.node_point(ix, iy));
            let k = grid.index(ix, iy);
            out.values_mut()[k] = phi_from_green(params, d, green.g_field.values()[k]) - w_p0.values()[k];
        }
    }
    out.validate()?;
    Ok(out)
}

/// `8π − ρ₂ + Δ log h₁(p)` (the flat torus has no curvature term).
///
/// The Laplacian is spectral when `h₁` is positive on the whole grid, otherwise a
/// fourth-order difference of the analytic weight around `p`.
pub fn condition_check(p: Point, cfg: &FlowConfig, grid: Grid) -> Result<f64> {
    Ok(8.0 * PI - cfg.rho2 + laplacian_log_h1(p, cfg, grid)?)
}

fn laplacian_log_h1(p: Point, cfg: &FlowConfig, grid: Grid) -> Result<f64> {
    let h1_p = cfg.h1.eval(p);
    if !(h1_p > 0.0) {
        return Err(Error::param("p", format!("h1 vanishes at ({:.4}, {:.4})", p.x, p.y)));
    }
    let h1: Field = cfg.h1.sample(grid);
    if h1.min() > 0.0 {
        let mut ws = Workspace::new(grid);
        let lap = ws.laplacian(&h1.map(f64::ln))?;
        let (ix, iy) = grid.snap(p);
        if grid.node_point(ix, iy).dist(p) < 1e-12 {
            return Ok(lap.at(ix, iy));
        }
        return Ok(SpectralInterpolant::new(&mut ws, &lap, 0.0)?.eval(p));
    }
    let f = |dx: f64, dy: f64| cfg.h1.eval(p.offset(dx, dy)).ln();
    let h = 1e-3;
    let mut sum = 0.0;
    for (ux, uy) in [(1.0, 0.0), (0.0, 1.0)] {
        let at = |k: f64| f(k * h * ux, k * h * uy);
        sum += (-at(2.0) + 16.0 * at(1.0) - 30.0 * at(0.0) + 16.0 * at(-1.0) - at(-2.0)) / (12.0 * h * h);
    }
    if !sum.is_finite() {
        return Err(Error::param("p", "h1 vanishes next to p; Δ log h1 undefined"));
    }
    Ok(sum)
}

/// `∇ log h₁(p)` by central differences of the analytic weight.
fn grad_log_h1(p: Point, cfg: &FlowConfig) -> [f64; 2] {
    let h = 1e-5;
    let f = |dx: f64, dy: f64| cfg.h1.eval(p.offset(dx, dy)).ln();
    [(f(h, 0.0) - f(-h, 0.0)) / (2.0 * h), (f(0.0, h) - f(0.0, -h)) / (2.0 * h)]
}

/// The minimizer at `p₀` prepared for pointwise evaluation.
pub struct TestFunctionContext<'a> {
    pub green: &'a GreenData,
    pub w: &'a Field,
    w_interp: SpectralInterpolant,
    w_grad: (Field, Field),
    g_smooth_grad: (Field, Field),
}

impl<'a> TestFunctionContext<'a> {
    pub fn new(green: &'a GreenData, w: &'a Field, ws: &mut Workspace) -> Result<Self> {
        green.g_field.check_grid(w)?;
        Ok(TestFunctionContext {
            green,
            w,
            w_interp: SpectralInterpolant::new(ws, w, 1e-15)?,
            w_grad: ws.gradient(w)?,
            g_smooth_grad: ws.gradient(green.smooth_part())?,
        })
    }

    /// `∇w_{p₀}(p₀)`.
    pub fn grad_w_at_p0(&self) -> [f64; 2] {
        self.w_interp.eval_with_gradient(self.green.p).1
    }

    /// `(Φ̃_ε, ∇Φ̃_ε)` at an arbitrary point.
    pub fn eval(&self, params: &TestFunctionParams, x: Point) -> (f64, [f64; 2]) {
        let d = params.p0.delta_to(x);
        let r = d.0.hypot(d.1);
        let (w, gw) = self.w_interp.eval_with_gradient(x);
        let (phi, gphi) = match piece(params, r) {
            Piece::Bubble => {
                let s = r * r + params.epsilon;
                (
                    bubble_value(params, d),
                    [-4.0 * d.0 / s + params.b1, -4.0 * d.1 / s + params.b2],
                )
            }
            Piece::Annulus => {
                let (g, gg) = self.green.eval_with_gradient(x);
                let beta = g + 4.0 * r.ln() - params.a - params.b1 * d.0 - params.b2 * d.1;
                let gb = [gg[0] + 4.0 * d.0 / (r * r) - params.b1, gg[1] + 4.0 * d.1 / (r * r) - params.b2];
                let [eta, deta] = params.eta(r);
                (
                    g - eta * beta + params.far_constant(),
                    [
                        gg[0] - eta * gb[0] - beta * deta * d.0 / r,
                        gg[1] - eta * gb[1] - beta * deta * d.1 / r,
                    ],
                )
            }
            Piece::Outer => {
                let (g, gg) = self.green.eval_with_gradient(x);
                (g + params.far_constant(), gg)
            }
        };
        (phi - w, [gphi[0] - gw[0], gphi[1] - gw[1]])
    }
}

/// Radial partition of unity: the polar rule handles `ψ`, the grid handles `1 − ψ`.
const SPLIT: (f64, f64) = (0.25, 0.4);
const ANGLES: usize = 128;
const PANEL_NODES: usize = 16;

/// Ingredients of `J(Φ̃_ε)`.
#[derive(Debug, Clone, Copy)]
pub struct EnergyParts {
    /// `½∫|∇Φ̃|²`.
    pub dirichlet: f64,
    /// `∫h₁e^{Φ̃}`.
    pub mass_h1: f64,
    /// `∫h₂e^{−Φ̃}`.
    pub mass_h2: f64,
    /// `∫Φ̃`.
    pub mean: f64,
}

impl EnergyParts {
    pub fn energy(&self, rho1: f64, rho2: f64) -> f64 {
        self.dirichlet - rho1 * self.mass_h1.ln() - rho2 * self.mass_h2.ln() + (rho1 - rho2) * self.mean
    }
}

fn radial_breaks(params: &TestFunctionParams) -> Vec<f64> {
    let se = params.epsilon.sqrt();
    let a = params.inner_radius();
    let mut b = vec![0.0];
    let mut r = 0.25 * se;
    while r < a {
        b.push(r);
        r *= 2.0;
    }
    b.push(a);
    b.push(1.5 * a);
    b.push(2.0 * a);
    let mut r = 4.0 * a;
    while r < SPLIT.0 {
        b.push(r);
        r *= 2.0;
    }
    b.push(SPLIT.0);
    b.push(0.5 * (SPLIT.0 + SPLIT.1));
    b.push(SPLIT.1);
    b
}

/// `J(Φ̃_ε)` components by the hybrid polar/grid quadrature.
pub fn test_function_energy(
    params: &TestFunctionParams,
    ctx: &TestFunctionContext<'_>,
    cfg: &FlowConfig,
) -> Result<EnergyParts> {
    let psi = RadialCutoff::new(SPLIT.0, SPLIT.1);
    let p0 = params.p0;
    let mut near = [0.0f64; 4];
    for (r, wr) in composite_rule(&radial_breaks(params), PANEL_NODES) {
        let weight = psi.value(r);
        if weight == 0.0 {
            continue;
        }
        let mut ring = [0.0f64; 4];
        for m in 0..ANGLES {
            let th = 2.0 * PI * (m as f64 + 0.5) / ANGLES as f64;
            let x = p0.offset(r * th.cos(), r * th.sin());
            let (v, g) = ctx.eval(params, x);
            ring[0] += 0.5 * (g[0] * g[0] + g[1] * g[1]);
            ring[1] += cfg.h1.eval(x) * v.exp();
            ring[2] += cfg.h2.eval(x) * (-v).exp();
            ring[3] += v;
        }
        let scale = wr * r * weight * 2.0 * PI / ANGLES as f64;
        for (acc, s) in near.iter_mut().zip(ring) {
            *acc += scale * s;
        }
    }

    let grid = ctx.w.grid();
    let h1: Field = cfg.h1.sample(grid);
    let h2: Field = cfg.h2.sample(grid);
    let c = params.far_constant();
    let (wx, wy) = &ctx.w_grad;
    let (sx, sy) = &ctx.g_smooth_grad;
    let mut far = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for iy in 0..grid.n() {
        for ix in 0..grid.n() {
            let q = grid.node_point(ix, iy);
            let d = p0.delta_to(q);
            let r = d.0.hypot(d.1);
            let weight = 1.0 - psi.value(r);
            if weight == 0.0 {
                continue;
            }
            let k = grid.index(ix, iy);
            let (_, ds) = ctx.green.singular_profile(r);
            let gx = sx.values()[k] + ds * d.0 / r - wx.values()[k];
            let gy = sy.values()[k] + ds * d.1 / r - wy.values()[k];
            let v = ctx.green.g_field.values()[k] + c - ctx.w.values()[k];
            far[0].push(weight * 0.5 * (gx * gx + gy * gy));
            far[1].push(weight * h1.values()[k] * v.exp());
            far[2].push(weight * h2.values()[k] * (-v).exp());
            far[3].push(weight * v);
        }
    }
    let area = grid.area_element();
    let total = |i: usize| near[i] + area * far[i].iter().sum::<f64>();
    let parts = EnergyParts {
        dirichlet: total(0),
        mass_h1: total(1),
        mass_h2: total(2),
        mean: total(3),
    };
    if !(parts.mass_h1 > 0.0) {
        return Err(Error::DegenerateMass { which: "∫h1·e^Φ" });
    }
    if !(parts.mass_h2 > 0.0) {
        return Err(Error::DegenerateMass { which: "∫h2·e^-Φ" });
    }
    Ok(parts)
}

/// `J(Φ̃_ε) − L*`.
pub fn barrier_gap(params: &TestFunctionParams, ctx: &TestFunctionContext<'_>, cfg: &FlowConfig, scan: &BarrierScan) -> Result<f64> {
    Ok(test_function_energy(params, ctx, cfg)?.energy(cfg.rho1, cfg.rho2) - scan.level)
}

/// Predicted coefficient of `ε(−log ε)`:
/// `−2π(8π − ρ₂ + Δ log h₁(p₀) + Σᵢ(bᵢ + ∂ᵢ log(h₁e^{−w})(p₀))²)`.
pub fn predicted_c1(scan: &BarrierScan, ctx: &TestFunctionContext<'_>, cfg: &FlowConfig, grid: Grid) -> Result<f64> {
    let p0 = scan.p0;
    let cond = condition_check(p0, cfg, grid)?;
    let gl = grad_log_h1(p0, cfg);
    let gw = ctx.grad_w_at_p0();
    let k1 = scan.green_p0.b1 + gl[0] - gw[0];
    let k2 = scan.green_p0.b2 + gl[1] - gw[1];
    Ok(-2.0 * PI * (cond + k1 * k1 + k2 * k2))
}

/// One evaluated `ε`.
#[derive(Debug, Clone, Copy)]
pub struct BarrierRow {
    pub epsilon: f64,
    pub alpha: f64,
    pub j_value: f64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct ExpansionFit {
    pub rows: Vec<BarrierRow>,
    pub c0: f64,
    pub c1: f64,
    pub rms: f64,
    pub condition: f64,
    pub predicted_c1: f64,
    pub level: f64,
}

pub const BARRIER_HEADER: &str = "epsilon,alpha,J_value,gap,c0_fit,c1_fit";

impl ExpansionFit {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(BARRIER_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{:e},{:e},{:e},{:e},{:e},{:e}", r.epsilon, r.alpha, r.j_value, r.gap, self.c0, self.c1);
        }
        let _ = writeln!(
            s,
            "# fit c0={:e} c1={:e} predicted_c1={:e} level={:e} rms={:e} condition={:e}",
            self.c0, self.c1, self.predicted_c1, self.level, self.rms, self.condition
        );
        s
    }
}

/// Least-squares fit of `J(Φ̃_ε) ≈ c₀ + c₁ ε(−log ε)` over at least four decreasing `ε`.
pub fn expansion_fit(eps_list: &[f64], cfg: &FlowConfig, scan: &BarrierScan, grid: Grid) -> Result<ExpansionFit> {
    if eps_list.len() < 4 {
        return Err(Error::param("eps_list", format!("need at least 4 values, got {}", eps_list.len())));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::param("eps_list", "values must be strictly decreasing"));
    }
    let mut ws = Workspace::new(grid);
    let ctx = TestFunctionContext::new(&scan.green_p0, &scan.solution_p0.w, &mut ws)?;
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let params = TestFunctionParams::new(eps, &scan.green_p0)?;
        params.check_resolution(grid)?;
        let j = test_function_energy(&params, &ctx, cfg)?.energy(cfg.rho1, cfg.rho2);
        rows.push(BarrierRow {
            epsilon: eps,
            alpha: params.alpha,
            j_value: j,
            gap: j - scan.level,
        });
    }
    let design: Vec<Vec<f64>> = rows.iter().map(|r| vec![1.0, -r.epsilon * r.epsilon.ln()]).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.j_value).collect();
    let fit = least_squares(&design, &ys)?;
    Ok(ExpansionFit {
        rows,
        c0: fit.coeffs[0],
        c1: fit.coeffs[1],
        rms: fit.rms,
        condition: fit.condition,
        predicted_c1: predicted_c1(scan, &ctx, cfg, grid)?,
        level: scan.level,
    })
}
