//! Radial helpers shared by the Green-function and test-function code: Gauss–Legendre rules,
//! a C^∞ radial cutoff with analytic derivatives, and small dense least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[a, b]`.
pub fn gauss_legendre(m: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    assert!(m >= 1, "need at least one node");
    let mut out = Vec::with_capacity(m);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    for i in 0..m {
        // Chebyshev-like initial guess, then Newton on P_m
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(m, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((mid - half * x, half * w));
    }
    out
}

fn legendre(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=m {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if m == 0 { 1.0 } else { p1 };
    let d = m as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Composite Gauss–Legendre rule over consecutive breakpoints.
pub fn composite_rule(breaks: &[f64], per_panel: usize) -> Vec<(f64, f64)> {
    breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .flat_map(|w| gauss_legendre(per_panel, w[0], w[1]))
        .collect()
}

/// `χ(r) = 1` for `r ≤ r_in`, `0` for `r ≥ r_out`, C^∞ in between
/// (the `e^{-1/t}` transition).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialCutoff {
    pub r_in: f64,
    pub r_out: f64,
}

impl RadialCutoff {
    pub fn new(r_in: f64, r_out: f64) -> Self {
        assert!(0.0 < r_in && r_in < r_out, "cutoff radii out of order");
        RadialCutoff { r_in, r_out }
    }

    pub fn value(&self, r: f64) -> f64 {
        self.eval(r)[0]
    }

    /// `[χ, χ', χ'']` at radius `r`.
    pub fn eval(&self, r: f64) -> [f64; 3] {
        let len = self.r_out - self.r_in;
        let t = (self.r_out - r) / len;
        let [s, s1, s2] = smooth_step(t);
        [s, -s1 / len, s2 / (len * len)]
    }
}

/// `[s, s', s'']` of `s(t) = ψ(t)/(ψ(t) + ψ(1−t))`, `ψ(t) = e^{-1/t}` for `t > 0`.
fn smooth_step(t: f64) -> [f64; 3] {
    if t <= 0.0 {
        return [0.0, 0.0, 0.0];
    }
    if t >= 1.0 {
        return [1.0, 0.0, 0.0];
    }
    let psi = |t: f64| {
        let e = (-1.0 / t).exp();
        [e, e / (t * t), e * (1.0 / t.powi(4) - 2.0 / t.powi(3))]
    };
    let [a, a1, a2] = psi(t);
    let [b, b1, b2] = psi(1.0 - t);
    let sum = a + b;
    let sum1 = a1 - b1;
    let sum2 = a2 + b2;
    let num1 = a1 * sum - a * sum1;
    [
        a / sum,
        num1 / (sum * sum),
        (a2 * sum - a * sum2) / (sum * sum) - 2.0 * sum1 * num1 / sum.powi(3),
    ]
}

/// Least-squares fit result.
#[derive(Debug, Clone)]
pub struct LsqFit {
    pub coeffs: Vec<f64>,
    /// Root-mean-square residual.
    pub rms: f64,
    /// Ratio of extreme singular values of the (column-scaled) design matrix.
    pub condition: f64,
}

/// Solves `min ‖X c − y‖₂` by SVD after scaling columns to unit norm.
pub fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<LsqFit> {
    let m = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if m < k || k == 0 {
        return Err(Error::param("fit", format!("{m} samples cannot determine {k} coefficients")));
    }
    let mut x = DMatrix::from_fn(m, k, |i, j| rows[i][j]);
    let scales: Vec<f64> = (0..k)
        .map(|j| {
            let s = x.column(j).norm();
            if s > 0.0 { s } else { 1.0 }
        })
        .collect();
    for (j, s) in scales.iter().enumerate() {
        x.column_mut(j).unscale_mut(*s);
    }
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !condition.is_finite() || condition > 1e12 {
        return Err(Error::IllConditionedFit { condition });
    }
    let rhs = DVector::from_column_slice(y);
    let sol = svd
        .solve(&rhs, 0.0)
        .map_err(|_| Error::IllConditionedFit { condition })?;
    let resid = &x * &sol - &rhs;
    let coeffs = sol.iter().zip(&scales).map(|(c, s)| c / s).collect();
    Ok(LsqFit {
        coeffs,
        rms: (resid.norm_squared() / m as f64).sqrt(),
        condition,
    })
}
