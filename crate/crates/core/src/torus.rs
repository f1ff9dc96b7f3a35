//! Periodic grid, quadrature and spectral operators on the flat unit-area torus `[0,1)²`.
//!
//! Fields are sampled at the nodes `(ix/n, iy/n)` and stored row-major with `iy` as the
//! slow index. Every quadrature is the periodic trapezoidal rule with weight `1/n²`, so the
//! total weight is exactly one.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform `n × n` node lattice on the unit torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(n));
        }
        Ok(Grid { n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of nodes, `n²`.
    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Quadrature weight of one node.
    #[inline]
    pub fn area_element(&self) -> f64 {
        let h = self.spacing();
        h * h
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.n + ix
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.n, idx / self.n)
    }

    #[inline]
    pub fn node_point(&self, ix: usize, iy: usize) -> Point {
        let h = self.spacing();
        Point::new(ix as f64 * h, iy as f64 * h)
    }

    /// Nearest node to `p` (periodically wrapped).
    pub fn snap(&self, p: Point) -> (usize, usize) {
        let n = self.n as f64;
        let w = p.wrapped();
        let ix = ((w.x * n).round() as usize) % self.n;
        let iy = ((w.y * n).round() as usize) % self.n;
        (ix, iy)
    }

    pub fn snapped(&self, p: Point) -> Point {
        let (ix, iy) = self.snap(p);
        self.node_point(ix, iy)
    }

    /// Signed integer frequency of FFT index `i` along one axis; the Nyquist index maps to `-n/2`.
    #[inline]
    pub fn frequency(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i >= n / 2 {
            i - n
        } else {
            i
        }
    }
}

/// Point of the torus, coordinates taken modulo one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn wrapped(self) -> Self {
        Point::new(self.x.rem_euclid(1.0), self.y.rem_euclid(1.0))
    }

    /// Minimum-image displacement `other - self`, each component in `[-1/2, 1/2]`.
    #[inline]
    pub fn delta_to(self, other: Point) -> (f64, f64) {
        (min_image(other.x - self.x), min_image(other.y - self.y))
    }

    /// Periodic Euclidean distance.
    #[inline]
    pub fn dist(self, other: Point) -> f64 {
        let (dx, dy) = self.delta_to(other);
        dx.hypot(dy)
    }

    pub fn offset(self, dx: f64, dy: f64) -> Point {
        Point::new(self.x + dx, self.y + dy).wrapped()
    }
}

#[inline]
pub fn min_image(d: f64) -> f64 {
    d - d.round()
}

/// Real field sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    grid: Grid,
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn constant(grid: Grid, c: T) -> Self {
        ScalarField {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> T) -> Self {
        let h = grid.spacing();
        let n = grid.n();
        let mut values = Vec::with_capacity(grid.len());
        for iy in 0..n {
            for ix in 0..n {
                values.push(f(ix as f64 * h, iy as f64 * h));
            }
        }
        ScalarField { grid, values }
    }

    pub fn from_values(grid: Grid, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::param(
                "values",
                format!("expected {} samples, got {}", grid.len(), values.len()),
            ));
        }
        let f = ScalarField { grid, values };
        f.validate()?;
        Ok(f)
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> T {
        self.values[self.grid.index(ix, iy)]
    }

    /// Value at the node nearest to `p`.
    pub fn at_point(&self, p: Point) -> T {
        let (ix, iy) = self.grid.snap(p);
        self.at(ix, iy)
    }

    /// Rejects NaN and infinities.
    pub fn validate(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(idx) => {
                let (ix, iy) = self.grid.coords(idx);
                Err(Error::NonFinite { ix, iy })
            }
        }
    }

    /// `∫ f dV`, the trapezoidal rule with unit total weight.
    pub fn integrate(&self) -> Result<T> {
        self.validate()?;
        Ok(self.mean())
    }

    /// Unchecked quadrature; callers guarantee finiteness.
    pub fn mean(&self) -> T {
        // pairwise summation keeps the n² accumulation error at O(log n · eps)
        pairwise_sum(&self.values) / T::lit(self.grid.len() as f64)
    }

    /// `sqrt(∫ f²)`.
    pub fn l2_norm(&self) -> T {
        let sq: Vec<T> = self.values.iter().map(|&v| v * v).collect();
        (pairwise_sum(&sq) / T::lit(self.grid.len() as f64)).sqrt()
    }

    /// `∫ f g`.
    pub fn dot(&self, other: &Self) -> T {
        debug_assert_eq!(self.grid, other.grid);
        let prod: Vec<T> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .collect();
        pairwise_sum(&prod) / T::lit(self.grid.len() as f64)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Largest value and the flat index where it occurs (first occurrence).
    pub fn argmax(&self) -> (T, usize) {
        let mut best = (self.values[0], 0);
        for (i, &v) in self.values.iter().enumerate().skip(1) {
            if v > best.0 {
                best = (v, i);
            }
        }
        best
    }

    pub fn argmin(&self) -> (T, usize) {
        let mut best = (self.values[0], 0);
        for (i, &v) in self.values.iter().enumerate().skip(1) {
            if v < best.0 {
                best = (v, i);
            }
        }
        best
    }

    pub fn max(&self) -> T {
        self.argmax().0
    }

    pub fn min(&self) -> T {
        self.argmin().0
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_constant(&self, c: T) -> Self {
        self.map(|v| v + c)
    }

    /// Copy with the mean removed.
    pub fn centered(&self) -> Self {
        let m = self.mean();
        self.add_constant(-m)
    }

    /// Translation by whole nodes: `out(ix, iy) = self(ix - sx, iy - sy)`.
    pub fn shifted(&self, sx: isize, sy: isize) -> Self {
        let n = self.grid.n() as isize;
        let mut out = self.clone();
        for iy in 0..n {
            for ix in 0..n {
                let srcx = (ix - sx).rem_euclid(n) as usize;
                let srcy = (iy - sy).rem_euclid(n) as usize;
                out.values[(iy * n + ix) as usize] = self.values[self.grid.index(srcx, srcy)];
            }
        }
        out
    }

    pub fn cast<U: Real>(&self) -> ScalarField<U> {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub(crate) fn check_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch {
                left: self.grid.n(),
                right: other.grid.n(),
            });
        }
        Ok(())
    }
}

impl<T: Real> Add for &ScalarField<T> {
    type Output = ScalarField<T>;
    fn add(self, rhs: Self) -> ScalarField<T> {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl<T: Real> Sub for &ScalarField<T> {
    type Output = ScalarField<T>;
    fn sub(self, rhs: Self) -> ScalarField<T> {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl<T: Real> Mul<T> for &ScalarField<T> {
    type Output = ScalarField<T>;
    fn mul(self, rhs: T) -> ScalarField<T> {
        self.map(|a| a * rhs)
    }
}

impl<T: Real> Neg for &ScalarField<T> {
    type Output = ScalarField<T>;
    fn neg(self) -> ScalarField<T> {
        self.map(|a| -a)
    }
}

pub(crate) fn pairwise_sum<T: Real>(xs: &[T]) -> T {
    if xs.len() <= 64 {
        xs.iter().fold(T::zero(), |a, &b| a + b)
    } else {
        let (l, r) = xs.split_at(xs.len() / 2);
        pairwise_sum(l) + pairwise_sum(r)
    }
}

/// FFT plans, Fourier multipliers and scratch buffers for one grid size.
///
/// Single-owner mutable scratch: clone one per thread.
pub struct SpectralWorkspace<T: Real> {
    grid: Grid,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
    buf: Vec<Complex<T>>,
    tmp: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
    /// `-|2πk|²` per flat spectral index.
    lap: Vec<T>,
    /// `2πk` along one axis with the Nyquist entry zeroed (odd derivatives).
    wave: Vec<T>,
}

impl<T: Real> Clone for SpectralWorkspace<T> {
    fn clone(&self) -> Self {
        SpectralWorkspace {
            grid: self.grid,
            fwd: Arc::clone(&self.fwd),
            inv: Arc::clone(&self.inv),
            buf: self.buf.clone(),
            tmp: self.tmp.clone(),
            scratch: self.scratch.clone(),
            lap: self.lap.clone(),
            wave: self.wave.clone(),
        }
    }
}

impl<T: Real> std::fmt::Debug for SpectralWorkspace<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralWorkspace")
            .field("n", &self.grid.n())
            .finish()
    }
}

impl<T: Real> SpectralWorkspace<T> {
    pub fn new(grid: Grid) -> Self {
        let n = grid.n();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        let two_pi = T::lit(2.0 * std::f64::consts::PI);
        let freq: Vec<T> = (0..n).map(|i| T::lit(grid.frequency(i) as f64) * two_pi).collect();
        let mut lap = vec![T::zero(); grid.len()];
        for ky in 0..n {
            for kx in 0..n {
                lap[ky * n + kx] = -(freq[kx] * freq[kx] + freq[ky] * freq[ky]);
            }
        }
        let mut wave = freq;
        wave[n / 2] = T::zero();
        SpectralWorkspace {
            grid,
            fwd,
            inv,
            buf: vec![Complex::new(T::zero(), T::zero()); grid.len()],
            tmp: vec![Complex::new(T::zero(), T::zero()); grid.len()],
            scratch: vec![Complex::new(T::zero(), T::zero()); scratch_len],
            lap,
            wave,
        }
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    fn check(&self, f: &ScalarField<T>) -> Result<()> {
        if f.grid() != self.grid {
            return Err(Error::GridMismatch {
                left: self.grid.n(),
                right: f.grid().n(),
            });
        }
        f.validate()
    }

    fn transpose(&mut self) {
        const B: usize = 16;
        let n = self.grid.n();
        for by in (0..n).step_by(B) {
            for bx in (0..n).step_by(B) {
                for iy in by..(by + B).min(n) {
                    for ix in bx..(bx + B).min(n) {
                        self.tmp[ix * n + iy] = self.buf[iy * n + ix];
                    }
                }
            }
        }
        std::mem::swap(&mut self.buf, &mut self.tmp);
    }

    fn fft2(&mut self, forward: bool) {
        let plan = if forward { &self.fwd } else { &self.inv };
        plan.process_with_scratch(&mut self.buf, &mut self.scratch);
        self.transpose();
        let plan = if forward { &self.fwd } else { &self.inv };
        plan.process_with_scratch(&mut self.buf, &mut self.scratch);
        self.transpose();
    }

    fn load(&mut self, f: &ScalarField<T>) {
        for (b, &v) in self.buf.iter_mut().zip(f.values()) {
            *b = Complex::new(v, T::zero());
        }
        self.fft2(true);
    }

    fn unload(&mut self) -> ScalarField<T> {
        self.fft2(false);
        let scale = T::one() / T::lit(self.grid.len() as f64);
        let values = self.buf.iter().map(|c| c.re * scale).collect();
        ScalarField {
            grid: self.grid,
            values,
        }
    }

    /// Normalized Fourier coefficients `f̂_k = (1/n²) Σ f_j e^{-2πi k·x_j}`, flat index `ky*n + kx`.
    pub fn spectrum(&mut self, f: &ScalarField<T>) -> Result<Vec<Complex<T>>> {
        self.check(f)?;
        self.load(f);
        let scale = T::one() / T::lit(self.grid.len() as f64);
        Ok(self.buf.iter().map(|c| c * scale).collect())
    }

    /// Multiplies the spectrum of `f` by `m(kx_index, ky_index)` and transforms back.
    pub fn apply_multiplier(
        &mut self,
        f: &ScalarField<T>,
        m: impl Fn(usize, usize) -> Complex<T>,
    ) -> Result<ScalarField<T>> {
        self.check(f)?;
        self.load(f);
        let n = self.grid.n();
        for ky in 0..n {
            for kx in 0..n {
                self.buf[ky * n + kx] = self.buf[ky * n + kx] * m(kx, ky);
            }
        }
        Ok(self.unload())
    }

    /// Spectral Laplacian; the result has zero mean.
    pub fn laplacian(&mut self, f: &ScalarField<T>) -> Result<ScalarField<T>> {
        self.check(f)?;
        self.load(f);
        for (b, &l) in self.buf.iter_mut().zip(&self.lap) {
            *b = *b * l;
        }
        Ok(self.unload())
    }

    /// Zero-mean `φ` with `Δφ = rhs`. Fails when `rhs` has a mean beyond roundoff.
    pub fn solve_poisson(&mut self, rhs: &ScalarField<T>) -> Result<ScalarField<T>> {
        self.check(rhs)?;
        let mean = rhs.mean();
        let scale = rhs.max_abs().max(T::one());
        if mean.abs() > T::lit(1e-12) * scale {
            return Err(Error::Solvability { mean: mean.as_f64() });
        }
        Ok(self.poisson_inverse(rhs))
    }

    /// As [`Self::solve_poisson`] but silently projects out the mean of `rhs`.
    pub fn solve_poisson_projected(&mut self, rhs: &ScalarField<T>) -> Result<ScalarField<T>> {
        self.check(rhs)?;
        Ok(self.poisson_inverse(rhs))
    }

    fn poisson_inverse(&mut self, rhs: &ScalarField<T>) -> ScalarField<T> {
        self.load(rhs);
        self.buf[0] = Complex::new(T::zero(), T::zero());
        for (b, &l) in self.buf.iter_mut().zip(&self.lap).skip(1) {
            *b = *b / l;
        }
        self.unload()
    }

    /// Solves `(shift − Δ) φ = rhs` for `shift > 0`.
    pub fn solve_helmholtz(&mut self, shift: T, rhs: &ScalarField<T>) -> Result<ScalarField<T>> {
        if !(shift > T::zero()) {
            return Err(Error::param("shift", "Helmholtz shift must be positive"));
        }
        self.check(rhs)?;
        self.load(rhs);
        for (b, &l) in self.buf.iter_mut().zip(&self.lap) {
            *b = *b / (shift - l);
        }
        Ok(self.unload())
    }

    /// `½ ∫ |∇f|²` by Parseval.
    pub fn dirichlet_energy(&mut self, f: &ScalarField<T>) -> Result<T> {
        self.check(f)?;
        self.load(f);
        let scale = T::one() / T::lit(self.grid.len() as f64);
        let terms: Vec<T> = self
            .buf
            .iter()
            .zip(&self.lap)
            .map(|(c, &l)| {
                let a = c * scale;
                -l * a.norm_sqr()
            })
            .collect();
        Ok(T::lit(0.5) * pairwise_sum(&terms))
    }

    /// Spectral partial derivatives `(∂x f, ∂y f)`.
    pub fn gradient(&mut self, f: &ScalarField<T>) -> Result<(ScalarField<T>, ScalarField<T>)> {
        self.check(f)?;
        self.load(f);
        let n = self.grid.n();
        let saved = self.buf.clone();
        for ky in 0..n {
            for kx in 0..n {
                let i = Complex::new(T::zero(), self.wave[kx]);
                self.buf[ky * n + kx] = self.buf[ky * n + kx] * i;
            }
        }
        let fx = self.unload();
        self.buf.copy_from_slice(&saved);
        for ky in 0..n {
            let i = Complex::new(T::zero(), self.wave[ky]);
            for kx in 0..n {
                self.buf[ky * n + kx] = self.buf[ky * n + kx] * i;
            }
        }
        let fy = self.unload();
        Ok((fx, fy))
    }
}

/// Trigonometric interpolant of a grid field, evaluable anywhere on the torus.
///
/// Modes whose magnitude falls below `rel_cutoff · max|f̂|` are dropped.
#[derive(Debug, Clone)]
pub struct SpectralInterpolant {
    kmax: i64,
    modes: Vec<(i64, i64, Complex<f64>)>,
}

impl SpectralInterpolant {
    pub fn new(ws: &mut SpectralWorkspace<f64>, f: &ScalarField<f64>, rel_cutoff: f64) -> Result<Self> {
        let grid = f.grid();
        let n = grid.n();
        let spec = ws.spectrum(f)?;
        let peak = spec.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        let keep = rel_cutoff * peak;
        let half = (n / 2) as i64;
        let mut modes = Vec::new();
        let mut kmax = 0;
        for ky in 0..n {
            for kx in 0..n {
                let c = spec[ky * n + kx];
                if c.norm() <= keep {
                    continue;
                }
                let fx = grid.frequency(kx);
                let fy = grid.frequency(ky);
                // the Nyquist row/column is split evenly between ±n/2 so the sum stays real
                let xs: &[i64] = if fx == -half { &[-half, half] } else { &[fx] };
                let ys: &[i64] = if fy == -half { &[-half, half] } else { &[fy] };
                let w = 1.0 / (xs.len() * ys.len()) as f64;
                for &a in xs {
                    for &b in ys {
                        modes.push((a, b, c * w));
                        kmax = kmax.max(a.abs()).max(b.abs());
                    }
                }
            }
        }
        Ok(SpectralInterpolant { kmax, modes })
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    fn tables(&self, p: Point) -> (Vec<Complex<f64>>, Vec<Complex<f64>>) {
        let k = self.kmax as usize;
        let table = |t: f64| {
            let mut out = vec![Complex::new(1.0, 0.0); 2 * k + 1];
            let base = Complex::from_polar(1.0, 2.0 * std::f64::consts::PI * t);
            for j in 1..=k {
                // direct evaluation keeps the phase exact for large j
                let z = if j % 16 == 0 {
                    Complex::from_polar(1.0, 2.0 * std::f64::consts::PI * t * j as f64)
                } else {
                    out[k + j - 1] * base
                };
                out[k + j] = z;
                out[k - j] = z.conj();
            }
            out
        };
        (table(p.x), table(p.y))
    }

    pub fn eval(&self, p: Point) -> f64 {
        let (ex, ey) = self.tables(p);
        let k = self.kmax;
        self.modes
            .iter()
            .map(|&(a, b, c)| (c * ex[(a + k) as usize] * ey[(b + k) as usize]).re)
            .sum()
    }

    /// Value and gradient at `p`.
    pub fn eval_with_gradient(&self, p: Point) -> (f64, [f64; 2]) {
        let (ex, ey) = self.tables(p);
        let k = self.kmax;
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut v = 0.0;
        let mut gx = 0.0;
        let mut gy = 0.0;
        for &(a, b, c) in &self.modes {
            let z = c * ex[(a + k) as usize] * ey[(b + k) as usize];
            v += z.re;
            // d/dx of Re(z) = Re(2πi a z) = -2π a Im z
            gx -= two_pi * a as f64 * z.im;
            gy -= two_pi * b as f64 * z.im;
        }
        (v, [gx, gy])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        Grid::new(n).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(8).is_err());
        assert!(Grid::new(48).is_err());
        assert!(Grid::new(16).is_ok());
        let g = grid(64);
        assert_eq!(g.area_element() * g.len() as f64, 1.0);
    }

    #[test]
    fn integrate_examples() {
        let g = grid(64);
        assert_eq!(ScalarField::constant(g, 1.0).integrate().unwrap(), 1.0);
        let s = ScalarField::from_fn(g, |x, _| (2.0 * PI * x).sin());
        assert!(s.integrate().unwrap().abs() < 1e-15);
        let c = ScalarField::from_fn(g, |_, y| 2.0 + (2.0 * PI * y).cos());
        assert!((c.integrate().unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn integrate_rejects_nan() {
        let g = grid(16);
        let mut f = ScalarField::<f64>::zeros(g);
        f.values_mut()[g.index(3, 5)] = f64::NAN;
        assert_eq!(f.integrate(), Err(Error::NonFinite { ix: 3, iy: 5 }));
    }

    #[test]
    fn laplacian_eigenfunctions() {
        let g = grid(64);
        let mut ws = SpectralWorkspace::new(g);
        let c = ScalarField::constant(g, 3.5);
        assert!(ws.laplacian(&c).unwrap().max_abs() < 1e-12);
        let f = ScalarField::from_fn(g, |x, _| (2.0 * PI * x).cos());
        let lf = ws.laplacian(&f).unwrap();
        let expect = &f * (-4.0 * PI * PI);
        assert!((&lf - &expect).max_abs() < 1e-10);
        let f2 = ScalarField::from_fn(g, |x, y| (2.0 * PI * x).cos() * (4.0 * PI * y).cos());
        let lf2 = ws.laplacian(&f2).unwrap();
        assert!((&lf2 - &(&f2 * (-20.0 * PI * PI))).max_abs() < 1e-10);
    }

    #[test]
    fn poisson_examples() {
        let g = grid(64);
        let mut ws = SpectralWorkspace::new(g);
        let rhs = ScalarField::from_fn(g, |x, _| -4.0 * PI * PI * (2.0 * PI * x).cos());
        let phi = ws.solve_poisson(&rhs).unwrap();
        let expect = ScalarField::from_fn(g, |x, _| (2.0 * PI * x).cos());
        assert!((&phi - &expect).max_abs() < 1e-13);
        assert_eq!(ws.solve_poisson(&ScalarField::zeros(g)).unwrap().max_abs(), 0.0);
        let bad = ScalarField::constant(g, 0.25);
        match ws.solve_poisson(&bad) {
            Err(Error::Solvability { mean }) => assert!((mean - 0.25).abs() < 1e-15),
            other => panic!("expected solvability error, got {other:?}"),
        }
    }

    #[test]
    fn dirichlet_energy_examples() {
        let g = grid(64);
        let mut ws = SpectralWorkspace::new(g);
        assert_eq!(ws.dirichlet_energy(&ScalarField::constant(g, 5.0)).unwrap(), 0.0);
        let f = ScalarField::from_fn(g, |x, _| (2.0 * PI * x).cos());
        assert!((ws.dirichlet_energy(&f).unwrap() - PI * PI).abs() < 1e-12);
    }

    #[test]
    fn gradient_of_sine() {
        let g = grid(32);
        let mut ws = SpectralWorkspace::new(g);
        let f = ScalarField::from_fn(g, |x, y| (2.0 * PI * x).sin() + (4.0 * PI * y).cos());
        let (fx, fy) = ws.gradient(&f).unwrap();
        let ex = ScalarField::from_fn(g, |x, _| 2.0 * PI * (2.0 * PI * x).cos());
        let ey = ScalarField::from_fn(g, |_, y| -4.0 * PI * (4.0 * PI * y).sin());
        assert!((&fx - &ex).max_abs() < 1e-12);
        assert!((&fy - &ey).max_abs() < 1e-12);
    }

    #[test]
    fn single_precision_laplacian() {
        let g = grid(32);
        let mut ws = SpectralWorkspace::<f32>::new(g);
        let f = ScalarField::from_fn(g, |x, _| (2.0 * PI * x).cos() as f32);
        let lf = ws.laplacian(&f).unwrap();
        let expect = &f * (-4.0 * std::f32::consts::PI * std::f32::consts::PI);
        assert!((&lf - &expect).max_abs() < 1e-3);
    }

    #[test]
    fn interpolant_reproduces_trig_polynomial() {
        let g = grid(32);
        let mut ws = SpectralWorkspace::new(g);
        let exact = |x: f64, y: f64| (2.0 * PI * x).sin() * (6.0 * PI * y).cos() + 0.3 * (4.0 * PI * (x + y)).cos();
        let f = ScalarField::from_fn(g, exact);
        let it = SpectralInterpolant::new(&mut ws, &f, 1e-14).unwrap();
        for &(x, y) in &[(0.123, 0.77), (0.5, 0.0314), (0.999, 0.4)] {
            let (v, [gx, gy]) = it.eval_with_gradient(Point::new(x, y));
            assert!((v - exact(x, y)).abs() < 1e-13);
            let h = 1e-6;
            let fdx = (exact(x + h, y) - exact(x - h, y)) / (2.0 * h);
            let fdy = (exact(x, y + h) - exact(x, y - h)) / (2.0 * h);
            assert!((gx - fdx).abs() < 1e-6 && (gy - fdy).abs() < 1e-6);
        }
    }

    #[test]
    fn shift_and_snap() {
        let g = grid(16);
        let f = ScalarField::from_fn(g, |x, y| x + 10.0 * y);
        let s = f.shifted(2, -1);
        assert_eq!(s.at(2, 15), f.at(0, 0));
        assert_eq!(g.snap(Point::new(0.999, -0.01)), (0, 0));
        assert!((Point::new(0.05, 0.5).dist(Point::new(0.95, 0.5)) - 0.1).abs() < 1e-15);
    }
}
