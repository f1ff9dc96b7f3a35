//! The functional `J(u) = ½∫|∇u|² − ρ₁ log∫h₁eᵘ − ρ₂ log∫h₂e⁻ᵘ + (ρ₁−ρ₂)∫u`,
//! its L² gradient (the stationary sinh-Gordon operator) and the Moser–Trudinger gap.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::torus::{pairwise_sum, Grid, ScalarField, SpectralWorkspace};
use crate::weights::WeightSpec;

/// Model parameters and stepping controls.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub rho1: f64,
    pub rho2: f64,
    pub h1: WeightSpec,
    pub h2: WeightSpec,
    pub dt_init: f64,
    pub dt_max: f64,
    /// Allowed relative drift of `∫eᵘ`.
    pub tol_mass: f64,
    /// Per-step energy slack is `tol_energy·|J(u₀)| + 1e-12`.
    pub tol_energy: f64,
    /// Residual target of the singular mean-field solve.
    pub tol_mfe: f64,
    /// Relative residual target of the inner Helmholtz solve.
    pub tol_inner: f64,
    pub max_inner_iters: usize,
    /// Lower bound enforced on `∫h₁eᵘ` and `∫h₂e⁻ᵘ`.
    pub mass_floor: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            rho1: 8.0 * PI,
            rho2: 4.0 * PI,
            h1: WeightSpec::default(),
            h2: WeightSpec::default(),
            dt_init: 1e-3,
            dt_max: 0.25,
            tol_mass: 1e-6,
            tol_energy: 1e-8,
            tol_mfe: 1e-8,
            tol_inner: 1e-10,
            max_inner_iters: 2000,
            mass_floor: 1e-10,
        }
    }
}

impl FlowConfig {
    pub fn with_rhos(rho1: f64, rho2: f64) -> Self {
        FlowConfig {
            rho1,
            rho2,
            ..Default::default()
        }
    }

    pub fn with_weights(mut self, h1: WeightSpec, h2: WeightSpec) -> Self {
        self.h1 = h1;
        self.h2 = h2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let cap = 8.0 * PI;
        if !(self.rho2 > 0.0 && self.rho2 < cap) {
            return Err(Error::param("rho2", format!("{} is outside (0, 8π ≈ {cap:.6})", self.rho2)));
        }
        if !(self.rho1 > 0.0 && self.rho1 <= cap) {
            return Err(Error::param("rho1", format!("{} is outside (0, 8π ≈ {cap:.6}]", self.rho1)));
        }
        if !(self.dt_init > 0.0 && self.dt_max >= self.dt_init) {
            return Err(Error::param("dt", "need 0 < dt_init <= dt_max"));
        }
        for (name, v) in [
            ("tol_mass", self.tol_mass),
            ("tol_energy", self.tol_energy),
            ("tol_mfe", self.tol_mfe),
            ("tol_inner", self.tol_inner),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, "tolerance must be positive"));
            }
        }
        Ok(())
    }
}

/// Parameters with the weights sampled on a grid.
#[derive(Debug, Clone)]
pub struct SinhModel<T: Real> {
    pub grid: Grid,
    pub rho1: T,
    pub rho2: T,
    pub h1: ScalarField<T>,
    pub h2: ScalarField<T>,
}

impl<T: Real> SinhModel<T> {
    pub fn from_config(cfg: &FlowConfig, grid: Grid) -> Result<Self> {
        cfg.validate()?;
        Self::new(grid, cfg.rho1, cfg.rho2, cfg.h1.sample(grid), cfg.h2.sample(grid))
    }

    /// Builds a model from sampled weights; checks `h₁, h₂ ≥ 0` and `h₁h₂ ≢ 0`.
    pub fn new(grid: Grid, rho1: f64, rho2: f64, h1: ScalarField<T>, h2: ScalarField<T>) -> Result<Self> {
        h1.validate()?;
        h2.validate()?;
        h1.check_grid(&h2)?;
        if h1.min() < T::zero() || h2.min() < T::zero() {
            return Err(Error::param("weight", "h1 and h2 must be non-negative"));
        }
        let overlap = h1
            .values()
            .iter()
            .zip(h2.values())
            .any(|(&a, &b)| a > T::zero() && b > T::zero());
        if !overlap {
            return Err(Error::param("weight", "h1·h2 vanishes identically"));
        }
        Ok(SinhModel {
            grid,
            rho1: T::lit(rho1),
            rho2: T::lit(rho2),
            h1,
            h2,
        })
    }

    /// `(log∫h₁eᵘ, log∫h₂e⁻ᵘ)`.
    pub fn log_masses(&self, u: &ScalarField<T>) -> Result<(T, T)> {
        Ok((
            log_weighted_mass(&self.h1, u, T::one(), "∫h1·e^u")?,
            log_weighted_mass(&self.h2, u, -T::one(), "∫h2·e^-u")?,
        ))
    }

    pub fn energy_j(&self, u: &ScalarField<T>, ws: &mut SpectralWorkspace<T>) -> Result<T> {
        let (l1, l2) = self.log_masses(u)?;
        let dirichlet = ws.dirichlet_energy(u)?;
        Ok(dirichlet - self.rho1 * l1 - self.rho2 * l2 + (self.rho1 - self.rho2) * u.mean())
    }

    /// `N(u) = ρ₁(h₁eᵘ/∫h₁eᵘ − 1) − ρ₂(h₂e⁻ᵘ/∫h₂e⁻ᵘ − 1)`.
    pub fn nonlinear_term(&self, u: &ScalarField<T>) -> Result<ScalarField<T>> {
        let (l1, l2) = self.log_masses(u)?;
        let mut out = u.clone();
        for (((o, &v), &a), &b) in out
            .values_mut()
            .iter_mut()
            .zip(u.values())
            .zip(self.h1.values())
            .zip(self.h2.values())
        {
            let q1 = a * (v - l1).exp();
            let q2 = b * (-v - l2).exp();
            *o = self.rho1 * (q1 - T::one()) - self.rho2 * (q2 - T::one());
        }
        Ok(out)
    }

    /// L² gradient of `J`: `−Δu − N(u)`.
    pub fn el_gradient(&self, u: &ScalarField<T>, ws: &mut SpectralWorkspace<T>) -> Result<ScalarField<T>> {
        let lap = ws.laplacian(u)?;
        let nl = self.nonlinear_term(u)?;
        Ok(lap.zip_map(&nl, |l, n| -l - n))
    }

    /// L² norm of the stationary residual.
    pub fn elliptic_residual(&self, u: &ScalarField<T>, ws: &mut SpectralWorkspace<T>) -> Result<T> {
        Ok(self.el_gradient(u, ws)?.l2_norm())
    }
}

/// `log ∫ h e^{s·u}` evaluated with the exponent shifted by its maximum.
pub fn log_weighted_mass<T: Real>(
    h: &ScalarField<T>,
    u: &ScalarField<T>,
    sign: T,
    which: &'static str,
) -> Result<T> {
    u.validate()?;
    h.check_grid(u)?;
    let shift = u
        .values()
        .iter()
        .fold(T::neg_infinity(), |m, &v| m.max(sign * v));
    let terms: Vec<T> = h
        .values()
        .iter()
        .zip(u.values())
        .map(|(&w, &v)| w * (sign * v - shift).exp())
        .collect();
    let s = pairwise_sum(&terms) / T::lit(u.grid().len() as f64);
    if !(s > T::zero()) || !s.is_finite() {
        return Err(Error::DegenerateMass { which });
    }
    Ok(s.ln() + shift)
}

/// `(1/16π)∫|∇u|² − log∫e^{u−ū} − log∫e^{−u+ū}`; bounded below by a universal constant.
pub fn mt_gap<T: Real>(u: &ScalarField<T>, ws: &mut SpectralWorkspace<T>) -> Result<T> {
    let centered = u.centered();
    let ones = ScalarField::constant(u.grid(), T::one());
    let lp = log_weighted_mass(&ones, &centered, T::one(), "∫e^(u-ū)")?;
    let lm = log_weighted_mass(&ones, &centered, -T::one(), "∫e^(ū-u)")?;
    let grad_sq = T::lit(2.0) * ws.dirichlet_energy(u)?;
    Ok(grad_sq / T::lit(16.0 * PI) - lp - lm)
}
