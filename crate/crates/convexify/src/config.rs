//! Flat dotted-key run configuration (`domain.a = 0.2`, one per line, `#`
//! comments). Unknown keys are rejected by name; every value is re-validated
//! against the module invariants at load time.

use crate::error::{ConvexifyError, Result};
use crate::geometry::{GridSpec, Normalization};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Separable,
    Eigenmode,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Const(f64),
    Exp,
    TwoPlusSin,
    Cos { amplitude: f64, frequency: f64 },
    Zero,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    // domain
    pub n_space: usize,
    pub a: f64,
    pub d: f64,
    pub t_horizon: f64,
    pub epsilon: f64,
    // grid
    pub n_x1: usize,
    pub n_xbar: usize,
    pub n_t: usize,
    pub fine_factor: usize,
    // carleman
    pub lambda: f64,
    pub nu: f64,
    pub normalization: Normalization,
    pub lambda_scan: Vec<f64>,
    // tikhonov
    pub alpha: f64,
    /// 0 means: pick 10x the H4 norm of the boundary lift at run time.
    pub radius: f64,
    // forward
    pub generator: Generator,
    pub mu: f64,
    pub f_profile: Profile,
    pub c_profile: Profile,
    pub num_modes: usize,
    pub gamma: Vec<f64>,
    pub exponent_cap: f64,
    pub b_lower: f64,
    // noise
    pub delta: f64,
    pub seed: u64,
    pub smooth: bool,
    pub degree: usize,
    pub window: usize,
    // optimize
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step0: f64,
    pub backtrack: usize,
    pub restarts: usize,
    pub precondition: bool,
    // output
    pub out_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_space: 1,
            a: 0.2,
            d: 0.5,
            t_horizon: 1.0,
            epsilon: GridSpec::default_epsilon(0.2, 0.5),
            n_x1: 41,
            n_xbar: 41,
            n_t: 41,
            fine_factor: 2,
            lambda: 8.0,
            nu: 2.0,
            normalization: Normalization::Max,
            lambda_scan: vec![0.0, 1.0, 2.0, 4.0, 8.0, 16.0],
            alpha: 1e-4,
            radius: 0.0,
            generator: Generator::Separable,
            mu: 0.0,
            f_profile: Profile::TwoPlusSin,
            c_profile: Profile::Zero,
            num_modes: 2,
            gamma: vec![2.0, 0.1],
            exponent_cap: 600.0,
            b_lower: 0.0,
            delta: 0.0,
            seed: 0,
            smooth: false,
            degree: 2,
            window: 9,
            max_iter: 200,
            grad_tol: 1e-10,
            step0: 1.0,
            backtrack: 45,
            restarts: 0,
            precondition: true,
            out_dir: "out".into(),
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| ConvexifyError::Config(format!("{key}: not a number: {v:?}")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| ConvexifyError::Config(format!("{key}: not a nonnegative integer: {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(ConvexifyError::Config(format!(
            "{key}: expected on/off, got {v:?}"
        ))),
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| parse_f64(key, s.trim()))
        .collect()
}

fn parse_profile(key: &str, v: &str) -> Result<Profile> {
    if let Some(rest) = v.strip_prefix("const:") {
        return Ok(Profile::Const(parse_f64(key, rest)?));
    }
    if let Some(rest) = v.strip_prefix("cos:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 2 {
            return Err(ConvexifyError::Config(format!(
                "{key}: cos profile needs amplitude:frequency, got {v:?}"
            )));
        }
        return Ok(Profile::Cos {
            amplitude: parse_f64(key, parts[0])?,
            frequency: parse_f64(key, parts[1])?,
        });
    }
    match v {
        "exp" => Ok(Profile::Exp),
        "two_plus_sin" => Ok(Profile::TwoPlusSin),
        "zero" => Ok(Profile::Zero),
        _ => Err(ConvexifyError::Config(format!(
            "{key}: unknown profile {v:?} (expected const:V, exp, two_plus_sin, cos:A:F, zero)"
        ))),
    }
}

impl RunConfig {
    /// Parses the dotted-key text format; any unrecognized key is an error.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut epsilon_set = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConvexifyError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            let v = value.trim();
            match key {
                "domain.n_space" => cfg.n_space = parse_usize(key, v)?,
                "domain.a" => cfg.a = parse_f64(key, v)?,
                "domain.d" => cfg.d = parse_f64(key, v)?,
                "domain.T" => cfg.t_horizon = parse_f64(key, v)?,
                "domain.epsilon" => {
                    cfg.epsilon = parse_f64(key, v)?;
                    epsilon_set = true;
                }
                "grid.n_x1" => cfg.n_x1 = parse_usize(key, v)?,
                "grid.n_xbar" => cfg.n_xbar = parse_usize(key, v)?,
                "grid.n_t" => cfg.n_t = parse_usize(key, v)?,
                "grid.fine_factor" => cfg.fine_factor = parse_usize(key, v)?,
                "carleman.lambda" => cfg.lambda = parse_f64(key, v)?,
                "carleman.nu" => cfg.nu = parse_f64(key, v)?,
                "carleman.normalization" => {
                    cfg.normalization = match v {
                        "reference" => Normalization::Reference,
                        "max" => Normalization::Max,
                        _ => {
                            return Err(ConvexifyError::Config(format!(
                                "{key}: expected max or reference, got {v:?}"
                            )))
                        }
                    }
                }
                "carleman.lambda_scan" => cfg.lambda_scan = parse_list(key, v)?,
                "tikhonov.alpha" => cfg.alpha = parse_f64(key, v)?,
                "tikhonov.R" => cfg.radius = parse_f64(key, v)?,
                "forward.generator" => {
                    cfg.generator = match v {
                        "separable" => Generator::Separable,
                        "eigenmode" => Generator::Eigenmode,
                        _ => {
                            return Err(ConvexifyError::Config(format!(
                                "{key}: expected separable or eigenmode, got {v:?}"
                            )))
                        }
                    }
                }
                "forward.mu" => cfg.mu = parse_f64(key, v)?,
                "forward.f_profile" => cfg.f_profile = parse_profile(key, v)?,
                "forward.c_profile" => cfg.c_profile = parse_profile(key, v)?,
                "forward.num_modes" => cfg.num_modes = parse_usize(key, v)?,
                "forward.gamma" => cfg.gamma = parse_list(key, v)?,
                "forward.exponent_cap" => cfg.exponent_cap = parse_f64(key, v)?,
                "forward.b_lower" => cfg.b_lower = parse_f64(key, v)?,
                "noise.delta" => cfg.delta = parse_f64(key, v)?,
                "noise.seed" => {
                    cfg.seed = v.parse().map_err(|_| {
                        ConvexifyError::Config(format!("{key}: not an integer seed: {v:?}"))
                    })?
                }
                "noise.smooth" => cfg.smooth = parse_bool(key, v)?,
                "noise.degree" => cfg.degree = parse_usize(key, v)?,
                "noise.window" => cfg.window = parse_usize(key, v)?,
                "optimize.max_iter" => cfg.max_iter = parse_usize(key, v)?,
                "optimize.grad_tol" => cfg.grad_tol = parse_f64(key, v)?,
                "optimize.step0" => cfg.step0 = parse_f64(key, v)?,
                "optimize.backtrack" => cfg.backtrack = parse_usize(key, v)?,
                "optimize.restarts" => cfg.restarts = parse_usize(key, v)?,
                "optimize.precondition" => cfg.precondition = parse_bool(key, v)?,
                "output.dir" => cfg.out_dir = v.to_string(),
                _ => {
                    return Err(ConvexifyError::Config(format!(
                        "unknown config key {key:?} (line {})",
                        lineno + 1
                    )))
                }
            }
        }
        if !epsilon_set {
            cfg.epsilon = GridSpec::default_epsilon(cfg.a, cfg.d);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid_spec().validate()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ConvexifyError::Config(format!(
                "tikhonov.alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if self.radius < 0.0 {
            return Err(ConvexifyError::Config(
                "tikhonov.R must be positive (or 0 for automatic)".into(),
            ));
        }
        if self.lambda < 0.0 || self.nu < 1.0 {
            return Err(ConvexifyError::Config(format!(
                "carleman.lambda must be >= 0 and carleman.nu >= 1, got {} / {}",
                self.lambda, self.nu
            )));
        }
        if self.delta < 0.0 {
            return Err(ConvexifyError::Config("noise.delta must be >= 0".into()));
        }
        if self.smooth {
            if self.window % 2 == 0 || self.degree + 1 > self.window {
                return Err(ConvexifyError::Config(format!(
                    "noise smoothing needs an odd window > degree, got degree {} window {}",
                    self.degree, self.window
                )));
            }
            if self.window > self.n_t {
                return Err(ConvexifyError::Config(format!(
                    "noise.window {} exceeds grid.n_t {}",
                    self.window, self.n_t
                )));
            }
        }
        if self.generator == Generator::Eigenmode {
            if self.num_modes == 0 || self.gamma.len() < self.num_modes {
                return Err(ConvexifyError::Config(format!(
                    "forward.gamma needs at least forward.num_modes = {} entries, got {}",
                    self.num_modes,
                    self.gamma.len()
                )));
            }
            if self.exponent_cap <= 0.0 {
                return Err(ConvexifyError::Config(
                    "forward.exponent_cap must be positive".into(),
                ));
            }
        }
        if self.max_iter == 0 || self.backtrack == 0 || self.step0 <= 0.0 {
            return Err(ConvexifyError::Config(
                "optimize.max_iter, optimize.backtrack and optimize.step0 must be positive"
                    .into(),
            ));
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            n_space: self.n_space,
            a: self.a,
            d: self.d,
            t_horizon: self.t_horizon,
            epsilon: self.epsilon,
            n_x1: self.n_x1,
            n_xbar: self.n_xbar,
            n_t: self.n_t,
            fine_factor: self.fine_factor,
        }
    }

    /// Canonical key = value rendering: stable order, full precision. Used
    /// for the config hash embedded in artifacts.
    pub fn canonical_string(&self) -> String {
        let mut map: BTreeMap<&str, String> = BTreeMap::new();
        map.insert("domain.n_space", self.n_space.to_string());
        map.insert("domain.a", format!("{:.16e}", self.a));
        map.insert("domain.d", format!("{:.16e}", self.d));
        map.insert("domain.T", format!("{:.16e}", self.t_horizon));
        map.insert("domain.epsilon", format!("{:.16e}", self.epsilon));
        map.insert("grid.n_x1", self.n_x1.to_string());
        map.insert("grid.n_xbar", self.n_xbar.to_string());
        map.insert("grid.n_t", self.n_t.to_string());
        map.insert("grid.fine_factor", self.fine_factor.to_string());
        map.insert("carleman.lambda", format!("{:.16e}", self.lambda));
        map.insert("carleman.nu", format!("{:.16e}", self.nu));
        map.insert(
            "carleman.normalization",
            match self.normalization {
                Normalization::Reference => "reference".into(),
                Normalization::Max => "max".into(),
            },
        );
        map.insert(
            "carleman.lambda_scan",
            self.lambda_scan
                .iter()
                .map(|v| format!("{v:.16e}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        map.insert("tikhonov.alpha", format!("{:.16e}", self.alpha));
        map.insert("tikhonov.R", format!("{:.16e}", self.radius));
        map.insert(
            "forward.generator",
            match self.generator {
                Generator::Separable => "separable".into(),
                Generator::Eigenmode => "eigenmode".into(),
            },
        );
        map.insert("forward.mu", format!("{:.16e}", self.mu));
        map.insert("forward.f_profile", format!("{:?}", self.f_profile));
        map.insert("forward.c_profile", format!("{:?}", self.c_profile));
        map.insert("forward.num_modes", self.num_modes.to_string());
        map.insert(
            "forward.gamma",
            self.gamma
                .iter()
                .map(|v| format!("{v:.16e}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        map.insert("forward.exponent_cap", format!("{:.16e}", self.exponent_cap));
        map.insert("forward.b_lower", format!("{:.16e}", self.b_lower));
        map.insert("noise.delta", format!("{:.16e}", self.delta));
        map.insert("noise.seed", self.seed.to_string());
        map.insert("noise.smooth", self.smooth.to_string());
        map.insert("noise.degree", self.degree.to_string());
        map.insert("noise.window", self.window.to_string());
        map.insert("optimize.max_iter", self.max_iter.to_string());
        map.insert("optimize.grad_tol", format!("{:.16e}", self.grad_tol));
        map.insert("optimize.step0", format!("{:.16e}", self.step0));
        map.insert("optimize.backtrack", self.backtrack.to_string());
        map.insert("optimize.restarts", self.restarts.to_string());
        map.insert("optimize.precondition", self.precondition.to_string());
        map.into_iter()
            .map(|(k, v)| format!("{k} = {v}"))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn config_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_string().as_bytes());
        hex_prefix(&hasher.finalize())
    }
}

/// Short hex digest prefix used in artifact headers.
pub fn hex_prefix(bytes: &[u8]) -> String {
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the grid geometry: axis ranges and node counts.
pub fn grid_hash(spec: &GridSpec) -> String {
    let mut hasher = Sha256::new();
    for (lo, hi) in spec.box_ranges() {
        hasher.update(lo.to_le_bytes());
        hasher.update(hi.to_le_bytes());
    }
    for n in spec.axis_counts() {
        hasher.update((n as u64).to_le_bytes());
    }
    hex_prefix(&hasher.finalize())
}
