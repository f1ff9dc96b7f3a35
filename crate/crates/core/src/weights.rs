//! Analytic weight-function descriptors for `h₁`, `h₂`.
//!
//! A descriptor is a name followed by parameters, either positional or `key=value`:
//!
//! ```text
//! constant 1.0
//! gaussian_bump cx=0.5 cy=0.5 sigma=0.1 floor=0.0
//! cosine_family 0.5 0.25          # exp(a cos 2πx + b cos 2πy)
//! clipped_cosine offset=0.25      # max(0, offset + (cos 2πx + cos 2πy)/2)
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::torus::{Grid, Point, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightSpec {
    Constant { value: f64 },
    /// `floor + exp(-d²/2σ²)` with `d` the periodic distance to the centre.
    GaussianBump { cx: f64, cy: f64, sigma: f64, floor: f64 },
    /// `exp(a cos 2πx + b cos 2πy)`.
    CosineFamily { a: f64, b: f64 },
    /// `max(0, offset + (cos 2πx + cos 2πy)/2)`; vanishes on an open set when `offset < 1`.
    ClippedCosine { offset: f64 },
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Constant { value: 1.0 }
    }
}

impl WeightSpec {
    pub fn eval(&self, p: Point) -> f64 {
        match *self {
            WeightSpec::Constant { value } => value,
            WeightSpec::GaussianBump { cx, cy, sigma, floor } => {
                let d = Point::new(cx, cy).dist(p);
                floor + (-d * d / (2.0 * sigma * sigma)).exp()
            }
            WeightSpec::CosineFamily { a, b } => {
                (a * (2.0 * PI * p.x).cos() + b * (2.0 * PI * p.y).cos()).exp()
            }
            WeightSpec::ClippedCosine { offset } => {
                (offset + 0.5 * ((2.0 * PI * p.x).cos() + (2.0 * PI * p.y).cos())).max(0.0)
            }
        }
    }

    pub fn sample<T: Real>(&self, grid: Grid) -> ScalarField<T> {
        ScalarField::from_fn(grid, |x, y| T::lit(self.eval(Point::new(x, y))))
    }

    /// Constant weights make the model translation invariant.
    pub fn is_constant(&self) -> bool {
        matches!(self, WeightSpec::Constant { .. })
    }

    fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Err(Error::param("weight", reason.to_string()));
        match *self {
            WeightSpec::Constant { value } if !(value >= 0.0 && value.is_finite()) => {
                bad("constant weight must be finite and non-negative")
            }
            WeightSpec::GaussianBump { sigma, floor, .. } if !(sigma > 0.0) || !(floor >= 0.0) => {
                bad("gaussian_bump needs sigma > 0 and floor >= 0")
            }
            WeightSpec::CosineFamily { a, b } if !(a.is_finite() && b.is_finite()) => {
                bad("cosine_family coefficients must be finite")
            }
            WeightSpec::ClippedCosine { offset } if !offset.is_finite() => {
                bad("clipped_cosine offset must be finite")
            }
            _ => Ok(()),
        }
    }
}

impl FromStr for WeightSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut tokens = s.split_whitespace();
        let name = tokens
            .next()
            .ok_or_else(|| Error::param("weight", "empty descriptor"))?;
        let keys: &[&str] = match name {
            "constant" => &["value"],
            "gaussian_bump" => &["cx", "cy", "sigma", "floor"],
            "cosine_family" => &["a", "b"],
            "clipped_cosine" => &["offset"],
            other => return Err(Error::param("weight", format!("unknown descriptor `{other}`"))),
        };
        let mut vals: Vec<Option<f64>> = vec![None; keys.len()];
        let mut next_pos = 0;
        for tok in tokens {
            let (slot, raw) = match tok.split_once('=') {
                Some((k, v)) => {
                    let slot = keys.iter().position(|&kk| kk == k).ok_or_else(|| {
                        Error::param("weight", format!("`{name}` has no parameter `{k}`"))
                    })?;
                    (slot, v)
                }
                None => {
                    if next_pos >= keys.len() {
                        return Err(Error::param("weight", format!("too many parameters for `{name}`")));
                    }
                    next_pos += 1;
                    (next_pos - 1, tok)
                }
            };
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::param("weight", format!("`{raw}` is not a number")))?;
            vals[slot] = Some(v);
        }
        let get = |i: usize, default: Option<f64>| {
            vals[i].or(default).ok_or_else(|| {
                Error::param("weight", format!("`{name}` is missing `{}`", keys[i]))
            })
        };
        let spec = match name {
            "constant" => WeightSpec::Constant { value: get(0, Some(1.0))? },
            "gaussian_bump" => WeightSpec::GaussianBump {
                cx: get(0, None)?,
                cy: get(1, None)?,
                sigma: get(2, None)?,
                floor: get(3, Some(0.0))?,
            },
            "cosine_family" => WeightSpec::CosineFamily {
                a: get(0, None)?,
                b: get(1, Some(0.0))?,
            },
            _ => WeightSpec::ClippedCosine { offset: get(0, Some(0.25))? },
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            WeightSpec::Constant { value } => write!(f, "constant value={value:?}"),
            WeightSpec::GaussianBump { cx, cy, sigma, floor } => write!(
                f,
                "gaussian_bump cx={cx:?} cy={cy:?} sigma={sigma:?} floor={floor:?}"
            ),
            WeightSpec::CosineFamily { a, b } => write!(f, "cosine_family a={a:?} b={b:?}"),
            WeightSpec::ClippedCosine { offset } => write!(f, "clipped_cosine offset={offset:?}"),
        }
    }
}
