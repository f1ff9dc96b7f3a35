//! `key = value` experiment configuration.
//!
//! ```text
//! # comment
//! n = 128
//! rho2 = 12.566370614359172
//! h1 = gaussian_bump cx=0.5 cy=0.5 sigma=0.1 floor=0.0
//! eps_list = 4e-4, 2e-4, 1e-4, 5e-5
//! u0 = bubble cx=0 cy=0 lambda=0.1 shift=-9
//! ```

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use sinhflow::{Error, FlowConfig, Grid, Point, Result, WeightSpec};

/// Initial datum for `flow` and `blowup`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialData {
    Zero,
    /// Seeded smooth trigonometric field.
    Random { modes: usize, amplitude: f64 },
    /// `−2 log(r² + λ²) + shift` around `(cx, cy)`.
    Bubble { cx: f64, cy: f64, lambda: f64, shift: f64 },
    /// Barrier test function at the scan minimizer.
    Barrier { epsilon: f64 },
}

impl fmt::Display for InitialData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            InitialData::Zero => write!(f, "zero"),
            InitialData::Random { modes, amplitude } => write!(f, "random modes={modes} amplitude={amplitude}"),
            InitialData::Bubble { cx, cy, lambda, shift } => {
                write!(f, "bubble cx={cx} cy={cy} lambda={lambda} shift={shift}")
            }
            InitialData::Barrier { epsilon } => write!(f, "barrier epsilon={epsilon}"),
        }
    }
}

impl FromStr for InitialData {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let mut tokens = s.split_whitespace();
        let name = tokens.next().ok_or("empty initial-data descriptor")?;
        let keys: &[&str] = match name {
            "zero" => &[],
            "random" => &["modes", "amplitude"],
            "bubble" => &["cx", "cy", "lambda", "shift"],
            "barrier" => &["epsilon"],
            other => return Err(format!("unknown initial data `{other}`")),
        };
        let mut vals: HashMap<&str, f64> = HashMap::new();
        for (i, tok) in tokens.enumerate() {
            let (k, raw) = match tok.split_once('=') {
                Some((k, v)) => (k, v),
                None => (*keys.get(i).ok_or_else(|| format!("too many parameters for `{name}`"))?, tok),
            };
            let key = keys
                .iter()
                .find(|&&kk| kk == k)
                .ok_or_else(|| format!("`{name}` has no parameter `{k}`"))?;
            let v: f64 = raw.parse().map_err(|_| format!("`{raw}` is not a number"))?;
            vals.insert(key, v);
        }
        let get = |k: &str, default: Option<f64>| {
            vals.get(k)
                .copied()
                .or(default)
                .ok_or_else(|| format!("`{name}` is missing `{k}`"))
        };
        Ok(match name {
            "zero" => InitialData::Zero,
            "random" => {
                let modes = get("modes", Some(4.0))?;
                if !(modes >= 1.0 && modes.fract() == 0.0) {
                    return Err("modes must be a positive integer".into());
                }
                InitialData::Random {
                    modes: modes as usize,
                    amplitude: get("amplitude", Some(0.5))?,
                }
            }
            "bubble" => InitialData::Bubble {
                cx: get("cx", None)?,
                cy: get("cy", None)?,
                lambda: get("lambda", None)?,
                shift: get("shift", Some(0.0))?,
            },
            _ => InitialData::Barrier { epsilon: get("epsilon", None)? },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub flow: FlowConfig,
    pub t_end: f64,
    pub eps_list: Vec<f64>,
    pub delta_list: Vec<f64>,
    pub p_resolution: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub u0: InitialData,
    pub sample_every: usize,
    /// Point used by `green`.
    pub p: Point,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 128,
            flow: FlowConfig::default(),
            t_end: 1.0,
            eps_list: vec![4e-4, 2e-4, 1e-4, 5e-5],
            delta_list: vec![0.05, 0.1, 0.2],
            p_resolution: 4,
            out_dir: PathBuf::from("out"),
            seed: 0,
            u0: InitialData::Random { modes: 4, amplitude: 0.5 },
            sample_every: 10,
            p: Point::new(0.5, 0.5),
        }
    }
}

const KEYS: &[&str] = &[
    "n",
    "rho1",
    "rho2",
    "h1",
    "h2",
    "dt_init",
    "dt_max",
    "t_end",
    "tol_mass",
    "tol_energy",
    "tol_mfe",
    "tol_inner",
    "max_inner_iters",
    "mass_floor",
    "eps_list",
    "delta_list",
    "p_resolution",
    "out_dir",
    "seed",
    "u0",
    "sample_every",
    "p",
];

impl ExperimentConfig {
    pub fn grid(&self) -> Grid {
        Grid::new(self.n).expect("n validated at parse time")
    }

    /// Canonical text form; `parse_config(cfg.to_text())` returns `cfg`.
    pub fn to_text(&self) -> String {
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ");
        let f = &self.flow;
        let mut s = String::new();
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "rho1 = {}", f.rho1);
        let _ = writeln!(s, "rho2 = {}", f.rho2);
        let _ = writeln!(s, "h1 = {}", f.h1);
        let _ = writeln!(s, "h2 = {}", f.h2);
        let _ = writeln!(s, "dt_init = {}", f.dt_init);
        let _ = writeln!(s, "dt_max = {}", f.dt_max);
        let _ = writeln!(s, "t_end = {}", self.t_end);
        let _ = writeln!(s, "tol_mass = {}", f.tol_mass);
        let _ = writeln!(s, "tol_energy = {}", f.tol_energy);
        let _ = writeln!(s, "tol_mfe = {}", f.tol_mfe);
        let _ = writeln!(s, "tol_inner = {}", f.tol_inner);
        let _ = writeln!(s, "max_inner_iters = {}", f.max_inner_iters);
        let _ = writeln!(s, "mass_floor = {}", f.mass_floor);
        let _ = writeln!(s, "eps_list = {}", list(&self.eps_list));
        let _ = writeln!(s, "delta_list = {}", list(&self.delta_list));
        let _ = writeln!(s, "p_resolution = {}", self.p_resolution);
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "u0 = {}", self.u0);
        let _ = writeln!(s, "sample_every = {}", self.sample_every);
        let _ = writeln!(s, "p = {} {}", self.p.x, self.p.y);
        s
    }
}

fn config_err(line: usize, key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        line,
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn number<T: FromStr>(raw: &str, what: &str) -> std::result::Result<T, String> {
    raw.parse().map_err(|_| format!("`{raw}` is not {what}"))
}

fn number_list(raw: &str) -> std::result::Result<Vec<f64>, String> {
    raw.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| number(t, "a number"))
        .collect()
}

/// Parses and validates a configuration. Unset keys keep their defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut seen: HashMap<&'static str, usize> = HashMap::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config_err(line_no, line, "expected `key = value`"))?;
        let (k, v) = (k.trim(), v.trim());
        let key = *KEYS
            .iter()
            .find(|&&kk| kk == k)
            .ok_or_else(|| config_err(line_no, k, "unknown key"))?;
        if let Some(prev) = seen.insert(key, line_no) {
            return Err(config_err(line_no, key, format!("already set on line {prev}")));
        }
        apply(&mut cfg, key, v).map_err(|reason| config_err(line_no, key, reason))?;
    }
    validate(&cfg).map_err(|(key, reason)| config_err(seen.get(key).copied().unwrap_or(0), key, reason))?;
    Ok(cfg)
}

fn apply(cfg: &mut ExperimentConfig, key: &str, v: &str) -> std::result::Result<(), String> {
    let f = &mut cfg.flow;
    match key {
        "n" => cfg.n = number(v, "an integer")?,
        "rho1" => f.rho1 = number(v, "a number")?,
        "rho2" => f.rho2 = number(v, "a number")?,
        "h1" => f.h1 = v.parse::<WeightSpec>().map_err(|e| e.to_string())?,
        "h2" => f.h2 = v.parse::<WeightSpec>().map_err(|e| e.to_string())?,
        "dt_init" => f.dt_init = number(v, "a number")?,
        "dt_max" => f.dt_max = number(v, "a number")?,
        "t_end" => cfg.t_end = number(v, "a number")?,
        "tol_mass" => f.tol_mass = number(v, "a number")?,
        "tol_energy" => f.tol_energy = number(v, "a number")?,
        "tol_mfe" => f.tol_mfe = number(v, "a number")?,
        "tol_inner" => f.tol_inner = number(v, "a number")?,
        "max_inner_iters" => f.max_inner_iters = number(v, "an integer")?,
        "mass_floor" => f.mass_floor = number(v, "a number")?,
        "eps_list" => cfg.eps_list = number_list(v)?,
        "delta_list" => cfg.delta_list = number_list(v)?,
        "p_resolution" => cfg.p_resolution = number(v, "an integer")?,
        "out_dir" => {
            if v.is_empty() {
                return Err("empty path".into());
            }
            cfg.out_dir = PathBuf::from(v);
        }
        "seed" => cfg.seed = number(v, "a non-negative integer")?,
        "u0" => cfg.u0 = v.parse()?,
        "sample_every" => cfg.sample_every = number(v, "an integer")?,
        "p" => {
            let xy = number_list(v)?;
            let [x, y] = xy[..] else {
                return Err("expected two coordinates".into());
            };
            cfg.p = Point::new(x, y).wrapped();
        }
        _ => unreachable!("key list and match arms disagree"),
    }
    Ok(())
}

fn validate(cfg: &ExperimentConfig) -> std::result::Result<(), (&'static str, String)> {
    if let Err(e) = Grid::new(cfg.n) {
        return Err(("n", e.to_string()));
    }
    if let Err(e) = cfg.flow.validate() {
        let key = match &e {
            Error::InvalidParameter { name, .. } => match *name {
                "dt" => "dt_init",
                other => KEYS.iter().copied().find(|k| *k == other).unwrap_or("rho1"),
            },
            _ => "rho1",
        };
        let reason = match e {
            Error::InvalidParameter { reason, .. } => reason,
            other => other.to_string(),
        };
        return Err((key, reason));
    }
    if !(cfg.flow.mass_floor > 0.0) {
        return Err(("mass_floor", "must be positive".into()));
    }
    if cfg.flow.max_inner_iters == 0 {
        return Err(("max_inner_iters", "must be positive".into()));
    }
    if !(cfg.t_end > 0.0 && cfg.t_end.is_finite()) {
        return Err(("t_end", "must be positive".into()));
    }
    let e_max = sinhflow::barrier::epsilon_max();
    if cfg.eps_list.iter().any(|&e| !(e > 0.0 && e < e_max)) {
        return Err(("eps_list", format!("every ε must lie in (0, e^-e ≈ {e_max:.4})")));
    }
    if cfg.delta_list.is_empty() || cfg.delta_list.iter().any(|&d| !(d > 0.0 && d < 0.5)) {
        return Err(("delta_list", "every δ must lie in (0, 1/2)".into()));
    }
    if cfg.p_resolution == 0 {
        return Err(("p_resolution", "must be at least 1".into()));
    }
    if cfg.sample_every == 0 {
        return Err(("sample_every", "must be at least 1".into()));
    }
    match cfg.u0 {
        InitialData::Random { amplitude, .. } if !amplitude.is_finite() => {
            return Err(("u0", "amplitude must be finite".into()))
        }
        InitialData::Bubble { lambda, .. } if !(lambda > 0.0) => return Err(("u0", "lambda must be positive".into())),
        InitialData::Barrier { epsilon } if !(epsilon > 0.0 && epsilon < e_max) => {
            return Err(("u0", format!("ε must lie in (0, e^-e ≈ {e_max:.4})")))
        }
        _ => {}
    }
    Ok(())
}
