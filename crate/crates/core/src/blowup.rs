//! Blow-up diagnostics along a trajectory: normalized components, maximum points and
//! scales, ball masses of the first component, and the upper-bound monitor for `u₂`.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::flow::Snapshot;
use crate::green::green_function_with;
use crate::torus::Point;
use crate::{Field, Model, Workspace};

/// `u₁ = u − log∫h₁eᵘ`, `u₂ = −u − log∫h₂e⁻ᵘ`, `f = ∂ₜu·e^{u/2}`.
#[derive(Debug, Clone)]
pub struct NormalizedPair {
    pub u1: Field,
    pub u2: Field,
    pub f: Field,
}

pub fn normalize(u: &Field, model: &Model, du_dt: &Field) -> Result<NormalizedPair> {
    model.h1.check_grid(u)?;
    u.check_grid(du_dt)?;
    let (l1, l2) = model.log_masses(u)?;
    Ok(NormalizedPair {
        u1: u.map(|v| v - l1),
        u2: u.map(|v| -v - l2),
        f: du_dt.zip_map(u, |d, v| d * (0.5 * v).exp()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    First,
    Second,
}

/// Fraction of the node-centred cell at distance `d` lying in a ball of radius `delta`.
fn cell_fraction(center: Point, node: Point, h: f64, delta: f64) -> f64 {
    let d = center.dist(node);
    let half_diag = h * std::f64::consts::FRAC_1_SQRT_2;
    if d + half_diag <= delta {
        return 1.0;
    }
    if d - half_diag >= delta {
        return 0.0;
    }
    const SUB: usize = 8;
    let (dx, dy) = center.delta_to(node);
    let mut inside = 0;
    for i in 0..SUB {
        for j in 0..SUB {
            let sx = dx + h * ((i as f64 + 0.5) / SUB as f64 - 0.5);
            let sy = dy + h * ((j as f64 + 0.5) / SUB as f64 - 0.5);
            if sx.hypot(sy) < delta {
                inside += 1;
            }
        }
    }
    inside as f64 / (SUB * SUB) as f64
}

/// `μ₁(B_δ(center)) = ρ₁∫_{B_δ}h₁e^{u₁}` or `μ₂(B_δ) = ρ₂∫_{B_δ}h₂e^{u₂}`.
///
/// The ball is the periodic metric ball; boundary cells count with their covered fraction.
pub fn concentration(pair: &NormalizedPair, center: Point, delta: f64, which: Component, model: &Model) -> Result<f64> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::param("delta", format!("{delta} is outside (0, 1/2)")));
    }
    Ok(ball_and_complement(pair, center, delta, which, model).0)
}

/// `(μ(B_δ), μ(Σ ∖ B_δ))`.
pub fn ball_and_complement(
    pair: &NormalizedPair,
    center: Point,
    delta: f64,
    which: Component,
    model: &Model,
) -> (f64, f64) {
    let (u, h, rho) = match which {
        Component::First => (&pair.u1, &model.h1, model.rho1),
        Component::Second => (&pair.u2, &model.h2, model.rho2),
    };
    let grid = u.grid();
    let spacing = grid.spacing();
    let (mut inner, mut outer) = (0.0, 0.0);
    for iy in 0..grid.n() {
        for ix in 0..grid.n() {
            let k = grid.index(ix, iy);
            let density = h.values()[k] * u.values()[k].exp();
            let frac = cell_fraction(center, grid.node_point(ix, iy), spacing, delta);
            inner += frac * density;
            outer += (1.0 - frac) * density;
        }
    }
    let da = grid.area_element() * rho;
    (inner * da, outer * da)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flag {
    SinglePointConcentration,
    NeverSViolation,
    ResolutionExhausted,
    /// Local minimum of the dissipation among the samples.
    DissipationMin,
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flag::SinglePointConcentration => "SINGLE-POINT-CONCENTRATION",
            Flag::NeverSViolation => "NEVER-S-VIOLATION",
            Flag::ResolutionExhausted => "RESOLUTION-EXHAUSTED",
            Flag::DissipationMin => "DISSIPATION-MIN",
        })
    }
}

#[derive(Debug, Clone)]
pub struct BlowupRow {
    pub t: f64,
    pub x1: Point,
    pub c1: f64,
    pub r1: f64,
    pub x2: Point,
    pub c2: f64,
    pub r2: f64,
    /// `μ₁(B_δ(x₁))` per configured `δ`.
    pub mu1: Vec<f64>,
    pub u2_max: f64,
    /// `max_x u₁(x) + 2 log dist(x, x₁)`.
    pub selection_bound: f64,
    /// RMS of `(u − ū + w) − G_{x₁}` on `δ ≤ r ≤ 2δ`, computed on concentration samples.
    pub weak_indicator: Option<f64>,
    pub dissipation: f64,
    pub flags: Vec<Flag>,
}

#[derive(Debug, Clone, Copy)]
pub struct TrackOptions {
    /// Allowed growth of `max u₂` over its first sample.
    pub never_s_margin: f64,
    /// Fraction of `ρ₁` a ball must hold to count as single-point concentration.
    pub mass_fraction: f64,
    /// `r₁` below this many grid spacings ends the diagnostics.
    pub exhaustion_cells: f64,
    /// Smallest `δ` counted as resolved, in grid spacings.
    pub resolved_cells: f64,
    pub weak_indicator: bool,
}

impl Default for TrackOptions {
    fn default() -> Self {
        TrackOptions {
            never_s_margin: 2.0,
            mass_fraction: 0.95,
            exhaustion_cells: 4.0,
            resolved_cells: 4.0,
            weak_indicator: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlowupReport {
    pub deltas: Vec<f64>,
    pub rows: Vec<BlowupRow>,
    /// Index into `deltas` of the smallest resolved radius.
    pub resolved_delta: Option<usize>,
    pub exhausted: bool,
}

pub const BLOWUP_HEADER_PREFIX: &str = "t,x1x,x1y,c1,r1,x2x,x2y,c2,r2";

/// Diagnostics for every snapshot, stopping at the first sample with `r₁` below
/// the exhaustion threshold.
pub fn track(snapshots: &[Snapshot], model: &Model, deltas: &[f64], opts: &TrackOptions) -> Result<BlowupReport> {
    if deltas.iter().any(|&d| !(d > 0.0 && d < 0.5)) {
        return Err(Error::param("delta_list", "every δ must lie in (0, 1/2)"));
    }
    let grid = model.grid;
    let h = grid.spacing();
    let resolved_delta = deltas
        .iter()
        .enumerate()
        .filter(|(_, &d)| d >= opts.resolved_cells * h)
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i);
    let dissipation: Vec<f64> = snapshots.iter().map(|s| s.dissipation).collect();
    let mut ws = Workspace::new(grid);
    let mut rows: Vec<BlowupRow> = Vec::new();
    let mut exhausted = false;
    for (i, snap) in snapshots.iter().enumerate() {
        let pair = normalize(&snap.u, model, &snap.du_dt)?;
        let (c1, k1) = pair.u1.argmax();
        let (c2, k2) = pair.u2.argmax();
        let node = |k: usize| {
            let (ix, iy) = grid.coords(k);
            grid.node_point(ix, iy)
        };
        let (x1, x2) = (node(k1), node(k2));
        let mu1 = deltas
            .iter()
            .map(|&d| ball_and_complement(&pair, x1, d, Component::First, model).0)
            .collect::<Vec<_>>();
        let mut row = BlowupRow {
            t: snap.t,
            x1,
            c1,
            r1: (-0.5 * c1).exp(),
            x2,
            c2,
            r2: (-0.5 * c2).exp(),
            mu1,
            u2_max: c2,
            selection_bound: selection_bound(&pair.u1, x1),
            weak_indicator: None,
            dissipation: snap.dissipation,
            flags: Vec::new(),
        };
        let prev_c1 = rows.last().map(|r| r.c1);
        let first = rows.first();
        let growing = match (first, prev_c1) {
            (Some(f), Some(p)) => c1 > f.c1 && c1 >= p,
            _ => false,
        };
        if let Some(j) = resolved_delta {
            if growing && row.mu1[j] >= opts.mass_fraction * model.rho1 {
                row.flags.push(Flag::SinglePointConcentration);
                if opts.weak_indicator {
                    row.weak_indicator = weak_indicator(&snap.u, &pair, x1, deltas[j], model, &mut ws).ok();
                }
            }
        }
        if let Some(f) = first {
            if c2 > f.u2_max + opts.never_s_margin {
                row.flags.push(Flag::NeverSViolation);
            }
        }
        if i > 0 && i + 1 < snapshots.len() && dissipation[i] <= dissipation[i - 1] && dissipation[i] < dissipation[i + 1] {
            row.flags.push(Flag::DissipationMin);
        }
        let stop = row.r1 < opts.exhaustion_cells * h;
        if stop {
            row.flags.push(Flag::ResolutionExhausted);
        }
        rows.push(row);
        if stop {
            exhausted = true;
            break;
        }
    }
    Ok(BlowupReport {
        deltas: deltas.to_vec(),
        rows,
        resolved_delta,
        exhausted,
    })
}

fn selection_bound(u1: &Field, x1: Point) -> f64 {
    let grid = u1.grid();
    let mut best = f64::NEG_INFINITY;
    for (k, &v) in u1.values().iter().enumerate() {
        let (ix, iy) = grid.coords(k);
        let d = x1.dist(grid.node_point(ix, iy));
        if d > 0.0 {
            best = best.max(v + 2.0 * d.ln());
        }
    }
    best
}

/// `w` solves `−Δw = ρ₂(h₂e^{u₂} − 1)`; compares `u − ū + w` with `G_{x₁}` on the annulus.
fn weak_indicator(u: &Field, pair: &NormalizedPair, x1: Point, delta: f64, model: &Model, ws: &mut Workspace) -> Result<f64> {
    let rhs = pair.u2.zip_map(&model.h2, |v, h| model.rho2 * (1.0 - h * v.exp()));
    let w = ws.solve_poisson_projected(&rhs)?;
    let green = green_function_with(x1, ws)?;
    let mean = u.mean();
    let grid = u.grid();
    let (mut sum, mut count) = (0.0, 0usize);
    for k in 0..grid.len() {
        let (ix, iy) = grid.coords(k);
        let r = x1.dist(grid.node_point(ix, iy));
        if r >= delta && r <= 2.0 * delta {
            let diff = u.values()[k] - mean + w.values()[k] - green.g_field.values()[k];
            sum += diff * diff;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::param("delta", format!("no grid node in the annulus {delta} <= r <= {}", 2.0 * delta)));
    }
    Ok((sum / count as f64).sqrt())
}

impl BlowupReport {
    pub fn flagged(&self, flag: Flag) -> impl Iterator<Item = &BlowupRow> {
        self.rows.iter().filter(move |r| r.flags.contains(&flag))
    }

    pub fn any(&self, flag: Flag) -> bool {
        self.flagged(flag).next().is_some()
    }

    /// Growth of `max u₂` over the run relative to the first sample.
    pub fn u2_max_growth(&self) -> f64 {
        let Some(first) = self.rows.first() else { return 0.0 };
        self.rows.iter().map(|r| r.u2_max - first.u2_max).fold(0.0, f64::max)
    }

    pub fn max_selection_bound(&self) -> f64 {
        self.rows.iter().map(|r| r.selection_bound).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether `log(r₂/r₁)`, smoothed over three samples, is nondecreasing across the
    /// window spanned by the concentration flags. `None` without at least three flagged rows.
    pub fn ratio_trend_nondecreasing(&self) -> Option<bool> {
        let idx: Vec<usize> = self
            .rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.flags.contains(&Flag::SinglePointConcentration))
            .map(|(i, _)| i)
            .collect();
        let (&lo, &hi) = (idx.first()?, idx.last()?);
        if hi - lo < 2 {
            return None;
        }
        let log_ratio: Vec<f64> = self.rows[lo..=hi].iter().map(|r| 0.5 * (r.c1 - r.c2)).collect();
        let smooth: Vec<f64> = log_ratio.windows(3).map(|w| (w[0] + w[1] + w[2]) / 3.0).collect();
        Some(smooth.windows(2).all(|w| w[1] >= w[0] - 1e-9 * (1.0 + w[0].abs())))
    }

    pub fn header(&self) -> String {
        let mut h = BLOWUP_HEADER_PREFIX.to_string();
        for k in 1..=self.deltas.len() {
            let _ = write!(h, ",mu1_d{k}");
        }
        h.push_str(",u2max,flags");
        h
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header();
        s.push('\n');
        let _ = writeln!(
            s,
            "# deltas {}",
            self.deltas.iter().map(|d| format!("{d:e}")).collect::<Vec<_>>().join(" ")
        );
        for r in &self.rows {
            let _ = write!(
                s,
                "{:e},{},{},{:e},{:e},{},{},{:e},{:e}",
                r.t, r.x1.x, r.x1.y, r.c1, r.r1, r.x2.x, r.x2.y, r.c2, r.r2
            );
            for m in &r.mu1 {
                let _ = write!(s, ",{m:e}");
            }
            let flags = r.flags.iter().map(ToString::to_string).collect::<Vec<_>>().join(";");
            let _ = writeln!(s, ",{:e},{flags}", r.u2_max);
        }
        let _ = writeln!(
            s,
            "# summary exhausted={} u2max_growth={:e} selection_bound_max={:e} ratio_trend={}",
            self.exhausted,
            self.u2_max_growth(),
            self.max_selection_bound(),
            match self.ratio_trend_nondecreasing() {
                Some(true) => "nondecreasing",
                Some(false) => "decreasing",
                None => "n/a",
            }
        );
        s
    }
}

/// Mass fraction of the standard bubble `ε/(π(r²+ε)²)` inside radius `R√ε`.
pub fn bubble_mass_profile(big_r: f64) -> f64 {
    big_r * big_r / (1.0 + big_r * big_r)
}

/// Total mass `8π` carried by the first component at criticality.
pub const CRITICAL_MASS: f64 = 8.0 * PI;
