//! Green function of `−ΔG_p = 8πδ_p − 8π`, `∫G_p = 0`, and its local expansion
//! `G_p = −4 log r + A(p) + b₁r cosθ + b₂r sinθ + O(r²)`.
//!
//! The logarithmic singularity is split off analytically: `G_p = S + R` with
//! `S = −4 log r · χ(r)` and `χ` a C^∞ cutoff equal to one near `p`. `ΔS` away from `p` is
//! smooth and known in closed form, so `R` solves a Poisson problem with smooth data and is
//! resolved spectrally. The constant in `R` comes from the exact radial integral of `S`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::radial::{composite_rule, least_squares, RadialCutoff};
use crate::torus::{Grid, Point, ScalarField, SpectralInterpolant};
use crate::{Field, Workspace};

/// Half the derivative at zero of `Σ'_{j∈ℤ²} |j|^{−2s}`:
/// `−½ log 2π − log(Γ(1/4)² / (2π√2))`.
///
/// The punctured trapezoid rule misses `h²(log h + LATTICE_LOG)` per unit of `−log r`
/// singularity; the corrected nodal value at `p` puts that back.
pub const LATTICE_LOG: f64 = -1.310_532_925_911_509_5;

/// Closed-form `A(p)` on the unit square torus, `−4 log(Γ(1/4)²/(2√π))`.
pub const SQUARE_TORUS_A: f64 = -5.242_131_703_646_038;

/// Default inner and outer radius of the singular cutoff.
const CUTOFF: (f64, f64) = (0.05, 0.45);
/// Rings used by the expansion fits, in units of the grid spacing.
const RING_SPAN: (f64, f64) = (4.0, 16.0);
const RING_COUNT: usize = 7;
const RING_ANGLES: usize = 64;
/// Ring fits whose RMS residual exceeds this are treated as unresolved.
pub const RING_FIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GreenData {
    /// Singular point, snapped to a grid node.
    pub p: Point,
    pub node: (usize, usize),
    /// `G_p` at the nodes. The value at `p` is the quadrature-corrected nodal weight
    /// `A − 4(log h + LATTICE_LOG)`, so `integrate(g·φ)` approximates `∫G_pφ` to `O(h⁴ log h)`.
    pub g_field: Field,
    /// `A(p)` from the ring fit.
    pub regular_part: f64,
    pub b1: f64,
    pub b2: f64,
    /// RMS residual of the ring fit for `A(p)`.
    pub fit_error: f64,
    cutoff: RadialCutoff,
    /// `G_p + 4 log r · χ`, smooth on the whole torus.
    smooth: Field,
    interp: SpectralInterpolant,
}

/// Green function at the grid node nearest to `p`.
pub fn green_function(p: Point, grid: Grid) -> Result<GreenData> {
    green_function_with(p, &mut Workspace::new(grid))
}

pub fn green_function_with(p: Point, ws: &mut Workspace) -> Result<GreenData> {
    let grid = ws.grid();
    let node = grid.snap(p);
    let p = grid.node_point(node.0, node.1);
    let cutoff = RadialCutoff::new(CUTOFF.0, CUTOFF.1);
    let rhs = ScalarField::from_fn(grid, |x, y| 8.0 * PI - smooth_laplacian_s(&cutoff, p.dist(Point::new(x, y))));
    let r = ws.solve_poisson_projected(&rhs)?;
    let smooth = r.add_constant(-singular_integral(&cutoff));
    let h = grid.spacing();
    let interp = SpectralInterpolant::new(ws, &smooth, 1e-16)?;
    let a_node = smooth.at(node.0, node.1);
    let mut g_field = ScalarField::from_fn(grid, |x, y| {
        let r = p.dist(Point::new(x, y));
        if r == 0.0 {
            0.0
        } else {
            -4.0 * r.ln() * cutoff.value(r)
        }
    });
    for (g, s) in g_field.values_mut().iter_mut().zip(smooth.values()) {
        *g += s;
    }
    g_field.values_mut()[grid.index(node.0, node.1)] = a_node - 4.0 * (h.ln() + LATTICE_LOG);

    let mut data = GreenData {
        p,
        node,
        g_field,
        regular_part: a_node,
        b1: 0.0,
        b2: 0.0,
        fit_error: 0.0,
        cutoff,
        smooth,
        interp,
    };
    let fit = regular_part(|x| data.eval(x), p, h, RING_FIT_TOL)?;
    let (b1, b2) = expansion_coeffs(|x| data.eval(x), p, h, fit.value)?;
    data.regular_part = fit.value;
    data.fit_error = fit.fit_error;
    data.b1 = b1;
    data.b2 = b2;
    Ok(data)
}

impl GreenData {
    /// `G_p(x)`; `+∞` at `p`.
    pub fn eval(&self, x: Point) -> f64 {
        let r = self.p.dist(x);
        if r == 0.0 {
            return f64::INFINITY;
        }
        -4.0 * r.ln() * self.cutoff.value(r) + self.interp.eval(x)
    }

    /// `G_p(x)` and `∇G_p(x)` for `x ≠ p`.
    pub fn eval_with_gradient(&self, x: Point) -> (f64, [f64; 2]) {
        let (dx, dy) = self.p.delta_to(x);
        let r = dx.hypot(dy);
        let (v, g) = self.interp.eval_with_gradient(x);
        if r == 0.0 {
            return (f64::INFINITY, g);
        }
        let [chi, chi1, _] = self.cutoff.eval(r);
        let s = -4.0 * r.ln() * chi;
        let ds = -4.0 * (chi / r + r.ln() * chi1);
        (s + v, [g[0] + ds * dx / r, g[1] + ds * dy / r])
    }

    /// The smooth field `G_p + 4 log r · χ(r)` on the grid; equals `G_p + 4 log r` near `p`.
    pub fn smooth_part(&self) -> &Field {
        &self.smooth
    }

    /// Trigonometric interpolant of [`Self::smooth_part`].
    pub fn smooth_interpolant(&self) -> &SpectralInterpolant {
        &self.interp
    }

    /// `−4 log r · χ(r)` and its radial derivative, the part of `G_p` kept analytic.
    pub fn singular_profile(&self, r: f64) -> (f64, f64) {
        let [chi, chi1, _] = self.cutoff.eval(r);
        (-4.0 * r.ln() * chi, -4.0 * (chi / r + r.ln() * chi1))
    }

    /// Radius inside which `G_p = −4 log r + smooth` exactly.
    pub fn inner_radius(&self) -> f64 {
        self.cutoff.r_in
    }

    /// `β(x) = G_p + 4 log r − A − b₁r cosθ − b₂r sinθ`, the `O(r²)` remainder.
    pub fn remainder(&self, x: Point) -> f64 {
        let (dx, dy) = self.p.delta_to(x);
        let r = dx.hypot(dy);
        let g_plus_log = if r == 0.0 {
            self.interp.eval(x)
        } else {
            self.eval(x) + 4.0 * r.ln()
        };
        g_plus_log - self.regular_part - self.b1 * dx - self.b2 * dy
    }

    /// `e^{−G_p}` at the nodes, exactly zero at `p`.
    pub fn exp_neg(&self) -> Field {
        let mut out = self.g_field.map(|g| (-g).exp());
        let grid = out.grid();
        out.values_mut()[grid.index(self.node.0, self.node.1)] = 0.0;
        out
    }

    /// `∫∇G_p·∇w`, evaluated as `−∫G_p Δw` with the corrected nodal weight.
    pub fn pairing(&self, w: &Field, ws: &mut Workspace) -> Result<f64> {
        let lap = ws.laplacian(w)?;
        Ok(-self.g_field.dot(&lap))
    }
}

/// Smooth part of `ΔS` for `S = −4 log r · χ(r)`; the `−8πδ` at the origin is dropped.
fn smooth_laplacian_s(cutoff: &RadialCutoff, r: f64) -> f64 {
    if r <= cutoff.r_in {
        return 0.0;
    }
    let [_, c1, c2] = cutoff.eval(r);
    let l = r.ln();
    -4.0 * (2.0 * c1 / r + c2 * l + c1 * l / r)
}

/// `∫ −4 log r · χ(r) dA` over the plane.
fn singular_integral(cutoff: &RadialCutoff) -> f64 {
    let a = cutoff.r_in;
    let inner = 0.5 * a * a * a.ln() - 0.25 * a * a;
    let panels: Vec<f64> = (0..=8).map(|i| a + (cutoff.r_out - a) * i as f64 / 8.0).collect();
    let outer: f64 = composite_rule(&panels, 24)
        .into_iter()
        .map(|(r, w)| w * r * r.ln() * cutoff.value(r))
        .sum();
    -8.0 * PI * (inner + outer)
}

/// Regular part and its fit quality.
#[derive(Debug, Clone, Copy)]
pub struct RingFit {
    pub value: f64,
    pub fit_error: f64,
}

fn ring_radii(h: f64) -> Vec<f64> {
    (0..RING_COUNT)
        .map(|k| h * (RING_SPAN.0 + (RING_SPAN.1 - RING_SPAN.0) * k as f64 / (RING_COUNT - 1) as f64))
        .collect()
}

fn ring_point(p: Point, r: f64, theta: f64) -> Point {
    p.offset(r * theta.cos(), r * theta.sin())
}

/// `A(p)` from ring averages of `G + 4 log r` over `r ∈ [4h, 16h]`, extrapolated to `r = 0`
/// with a fit in `1, r², r⁴`.
pub fn regular_part(sampler: impl Fn(Point) -> f64, p: Point, h: f64, tol: f64) -> Result<RingFit> {
    let radii = ring_radii(h);
    let mut rows = Vec::with_capacity(radii.len());
    let mut ys = Vec::with_capacity(radii.len());
    for &r in &radii {
        let avg = (0..RING_ANGLES)
            .map(|m| {
                let th = 2.0 * PI * m as f64 / RING_ANGLES as f64;
                sampler(ring_point(p, r, th)) + 4.0 * r.ln()
            })
            .sum::<f64>()
            / RING_ANGLES as f64;
        rows.push(vec![1.0, r * r, r.powi(4)]);
        ys.push(avg);
    }
    let fit = least_squares(&rows, &ys)?;
    let scale = fit.coeffs[0].abs().max(1.0);
    if !(fit.rms <= tol * scale) {
        return Err(Error::ResolutionTooCoarse {
            residual: fit.rms,
            threshold: tol * scale,
        });
    }
    Ok(RingFit {
        value: fit.coeffs[0],
        fit_error: fit.rms,
    })
}

/// `(b₁, b₂)` from the first angular modes of `G + 4 log r − A` on the fit rings,
/// divided by `r` and extrapolated to `r = 0` with a fit in `1, r²`.
pub fn expansion_coeffs(sampler: impl Fn(Point) -> f64, p: Point, h: f64, a: f64) -> Result<(f64, f64)> {
    let radii = ring_radii(h);
    let mut rows = Vec::new();
    let mut cs = Vec::new();
    let mut ss = Vec::new();
    for &r in &radii {
        let (mut c, mut s) = (0.0, 0.0);
        for m in 0..RING_ANGLES {
            let th = 2.0 * PI * m as f64 / RING_ANGLES as f64;
            let v = sampler(ring_point(p, r, th)) + 4.0 * r.ln() - a;
            c += v * th.cos();
            s += v * th.sin();
        }
        let norm = 2.0 / (RING_ANGLES as f64 * r);
        rows.push(vec![1.0, r * r]);
        cs.push(c * norm);
        ss.push(s * norm);
    }
    let b1 = least_squares(&rows, &cs)?.coeffs[0];
    let b2 = least_squares(&rows, &ss)?.coeffs[0];
    Ok((b1, b2))
}

/// Green function with the discrete delta taken as a single node of weight `n²`.
///
/// Independent of the singularity subtraction above; used as a cross-check.
pub fn spike_green(p: Point, ws: &mut Workspace) -> Result<Field> {
    let grid = ws.grid();
    let (ix, iy) = grid.snap(p);
    let mut rhs = ScalarField::constant(grid, 8.0 * PI);
    rhs.values_mut()[grid.index(ix, iy)] -= 8.0 * PI * grid.len() as f64;
    ws.solve_poisson(&rhs)
}

/// `A(p)` estimated from nodal values of a spike Green function: least squares of
/// `G + 4 log r` against `1, r², r⁴, r⁴cos4θ` over nodes with `4h ≤ r ≤ 16h`.
pub fn spike_regular_part(g: &Field, p: Point) -> Result<RingFit> {
    let grid = g.grid();
    let h = grid.spacing();
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    for iy in 0..grid.n() {
        for ix in 0..grid.n() {
            let q = grid.node_point(ix, iy);
            let (dx, dy) = p.delta_to(q);
            let r = dx.hypot(dy);
            if r < RING_SPAN.0 * h || r > RING_SPAN.1 * h {
                continue;
            }
            let th = dy.atan2(dx);
            rows.push(vec![1.0, r * r, r.powi(4), r.powi(4) * (4.0 * th).cos()]);
            ys.push(g.at(ix, iy) + 4.0 * r.ln());
        }
    }
    let fit = least_squares(&rows, &ys)?;
    Ok(RingFit {
        value: fit.coeffs[0],
        fit_error: fit.rms,
    })
}
