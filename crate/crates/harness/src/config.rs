//! Flat `key = value` experiment configuration.
//!
//! Lines starting with `#` and blank lines are ignored. Unknown or repeated
//! keys are errors. [`ExperimentConfig::to_text`] writes every key, so
//! parsing its output reproduces the config exactly.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use spde_coupling::burgers_staged::WaitCoupling;
use spde_coupling::lyapunov::{DEFAULT_GAMMA_INTERP, DEFAULT_KNOTS, DEFAULT_QUAD_TOL};
use spde_coupling::reflection_coupling::MeetingRule;
use spde_coupling::spde_solvers::INTERPOLATION_CONSTANT;
use spde_coupling::{Field, Grid};

use crate::error::{config_err, HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Lyapunov,
    RdCouple,
    BurgersStaged,
    Calibrate,
    OuValidate,
    GeneratorCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        Self::Lyapunov,
        Self::RdCouple,
        Self::BurgersStaged,
        Self::Calibrate,
        Self::OuValidate,
        Self::GeneratorCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Lyapunov => "lyapunov_build",
            Self::RdCouple => "rd_couple",
            Self::BurgersStaged => "burgers_staged",
            Self::Calibrate => "calibrate",
            Self::OuValidate => "ou_validate",
            Self::GeneratorCheck => "generator_check",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| {
                let name = k.name();
                name == s || name.replace('_', "-") == s || (*k == Self::Lyapunov && s == "lyapunov")
            })
            .ok_or_else(|| HarnessError::Config(format!("unknown experiment '{s}'")))
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Initial profile on the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    Zero,
    /// `amplitude * e_k` with `e_k` the unit-norm discrete sine mode.
    Sine {
        k: usize,
        amplitude: f64,
    },
    Constant(f64),
}

impl Profile {
    pub fn field(&self, grid: &Grid) -> Result<Field> {
        Ok(match *self {
            Profile::Zero => grid.zeros(),
            Profile::Sine { k, amplitude } => {
                if k == 0 || k > grid.n_interior() {
                    return config_err(format!("sine mode {k} outside 1..={}", grid.n_interior()));
                }
                grid.sine_mode(k).scaled(amplitude)
            }
            Profile::Constant(c) => grid.from_fn(|_| c),
        })
    }
}

impl FromStr for Profile {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || HarnessError::Config(format!("bad profile '{s}'"));
        if s == "zero" {
            return Ok(Profile::Zero);
        }
        let (name, rest) = s.split_once('(').ok_or_else(bad)?;
        let args: Vec<&str> = rest
            .strip_suffix(')')
            .ok_or_else(bad)?
            .split(',')
            .map(str::trim)
            .collect();
        match (name.trim(), args.as_slice()) {
            ("sine", [k, a]) => Ok(Profile::Sine {
                k: k.parse().map_err(|_| bad())?,
                amplitude: a.parse().map_err(|_| bad())?,
            }),
            ("constant", [c]) => Ok(Profile::Constant(c.parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Zero => f.write_str("zero"),
            Profile::Sine { k, amplitude } => write!(f, "sine({k},{amplitude:?})"),
            Profile::Constant(c) => write!(f, "constant({c:?})"),
        }
    }
}

/// Drift used by `rd_couple` and `generator_check`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftChoice {
    Rd,
    Zero,
}

/// Test function of `generator_check`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestFunction {
    Square,
    Lyapunov,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub n: usize,
    pub dt: f64,
    pub m: usize,
    pub t_max: f64,
    pub k_max: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub drift: DriftChoice,
    /// Cut-off radius `R`.
    pub r: Option<f64>,
    pub rho0: f64,
    pub rho1: f64,
    /// Block length; `T0 + 1` when unset.
    pub t_block: Option<f64>,
    /// Kantorovich weight; calibrated when unset.
    pub nu: Option<f64>,
    pub eps_meet: f64,
    pub bridge: bool,
    pub seed: u64,
    pub threads: Option<usize>,
    pub blowup_guard: f64,
    /// Initial distance `|x1 - x2|_2` along the first sine mode.
    pub separation: f64,
    pub center: Profile,
    pub x1: Profile,
    pub x2: Profile,
    /// Spacing of the output time grid.
    pub t_grid: f64,
    /// Time of the marginal comparison.
    pub t_marginal: f64,
    pub wait_coupling: WaitCoupling,
    pub mc_budget: usize,
    pub r_max: f64,
    pub knots: usize,
    pub quad_tol: f64,
    pub gamma_interp: f64,
    pub c_sob: f64,
    pub test_function: TestFunction,
    /// Noisy modes of the exact OU sampler; all modes when unset.
    pub modes: Option<usize>,
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let mut c = Self {
            experiment: kind,
            n: 32,
            dt: 1e-4,
            m: 500,
            t_max: 1.0,
            k_max: 8,
            alpha: 1.0,
            beta: 0.0,
            gamma: 0.0,
            delta: 0.0,
            drift: DriftChoice::Rd,
            r: None,
            rho0: 1.0,
            rho1: 0.3,
            t_block: None,
            nu: None,
            eps_meet: MeetingRule::DEFAULT_EPS,
            bridge: true,
            seed: 20240611,
            threads: None,
            blowup_guard: 1e3,
            separation: 1.0,
            center: Profile::Zero,
            x1: Profile::Sine { k: 1, amplitude: 1.0 },
            x2: Profile::Sine { k: 1, amplitude: -1.0 },
            t_grid: 0.01,
            t_marginal: 0.5,
            wait_coupling: WaitCoupling::Synchronous,
            mc_budget: 400,
            r_max: 12.0,
            knots: DEFAULT_KNOTS,
            quad_tol: DEFAULT_QUAD_TOL,
            gamma_interp: DEFAULT_GAMMA_INTERP,
            c_sob: INTERPOLATION_CONSTANT,
            test_function: TestFunction::Both,
            modes: None,
        };
        match kind {
            ExperimentKind::Lyapunov => c.r = Some(3.0),
            ExperimentKind::RdCouple => {}
            ExperimentKind::BurgersStaged | ExperimentKind::Calibrate => {
                c.dt = 1e-3;
                c.m = 300;
                c.r = Some(3.0);
            }
            ExperimentKind::OuValidate => {
                c.n = 16;
                c.dt = 1e-3;
                c.m = 5000;
                c.t_max = 0.5;
                c.drift = DriftChoice::Zero;
            }
            ExperimentKind::GeneratorCheck => {
                c.n = 4;
                c.dt = 1e-5;
                c.m = 100_000;
                c.center = Profile::Sine { k: 2, amplitude: 0.3 };
            }
        }
        c
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: Vec<(String, String, usize)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return config_err(format!("line {}: expected key = value", idx + 1));
            };
            let key = k.trim().to_string();
            if pairs.iter().any(|(p, _, _)| *p == key) {
                return config_err(format!("line {}: duplicate key '{key}'", idx + 1));
            }
            pairs.push((key, v.trim().to_string(), idx + 1));
        }
        let kind = match pairs.iter().find(|(k, _, _)| k == "experiment") {
            Some((_, v, _)) => v.parse()?,
            None => return config_err("missing key 'experiment'"),
        };
        let mut cfg = Self::defaults(kind);
        for (key, value, line) in &pairs {
            cfg.set(key, value)
                .map_err(|e| HarnessError::Config(format!("line {line}: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn p<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("bad value '{v}' for '{key}'"))
        }
        fn opt<T: FromStr>(key: &str, v: &str) -> std::result::Result<Option<T>, String> {
            if v == "auto" {
                Ok(None)
            } else {
                p(key, v).map(Some)
            }
        }
        match key {
            "experiment" => self.experiment = value.parse().map_err(|e: HarnessError| e.to_string())?,
            "n" => self.n = p(key, value)?,
            "dt" => self.dt = p(key, value)?,
            "M" => self.m = p(key, value)?,
            "t_max" => self.t_max = p(key, value)?,
            "k_max" => self.k_max = p(key, value)?,
            "alpha" => self.alpha = p(key, value)?,
            "beta" => self.beta = p(key, value)?,
            "gamma" => self.gamma = p(key, value)?,
            "delta" => self.delta = p(key, value)?,
            "drift" => {
                self.drift = match value {
                    "rd" => DriftChoice::Rd,
                    "zero" => DriftChoice::Zero,
                    _ => return Err(format!("drift must be rd or zero, got '{value}'")),
                }
            }
            "R" => self.r = opt(key, value)?,
            "rho0" => self.rho0 = p(key, value)?,
            "rho1" => self.rho1 = p(key, value)?,
            "T" => self.t_block = opt(key, value)?,
            "nu" => self.nu = opt(key, value)?,
            "eps_meet" => self.eps_meet = p(key, value)?,
            "bridge" => self.bridge = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            "threads" => self.threads = opt(key, value)?,
            "blowup_guard" => self.blowup_guard = p(key, value)?,
            "separation" => self.separation = p(key, value)?,
            "center" => self.center = value.parse().map_err(|e: HarnessError| e.to_string())?,
            "x1" => self.x1 = value.parse().map_err(|e: HarnessError| e.to_string())?,
            "x2" => self.x2 = value.parse().map_err(|e: HarnessError| e.to_string())?,
            "t_grid" => self.t_grid = p(key, value)?,
            "t_marginal" => self.t_marginal = p(key, value)?,
            "wait_coupling" => {
                self.wait_coupling = match value {
                    "synchronous" => WaitCoupling::Synchronous,
                    "independent" => WaitCoupling::Independent,
                    _ => {
                        return Err(format!(
                            "wait_coupling must be synchronous or independent, got '{value}'"
                        ))
                    }
                }
            }
            "mc_budget" => self.mc_budget = p(key, value)?,
            "r_max" => self.r_max = p(key, value)?,
            "knots" => self.knots = p(key, value)?,
            "quad_tol" => self.quad_tol = p(key, value)?,
            "gamma_interp" => self.gamma_interp = p(key, value)?,
            "c_sob" => self.c_sob = p(key, value)?,
            "f" => {
                self.test_function = match value {
                    "square" => TestFunction::Square,
                    "lyapunov" => TestFunction::Lyapunov,
                    "both" => TestFunction::Both,
                    _ => return Err(format!("f must be square, lyapunov or both, got '{value}'")),
                }
            }
            "modes" => self.modes = opt(key, value)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                config_err(format!("{name} must be > 0, got {v}"))
            }
        };
        if self.n < 2 {
            return config_err(format!("n must be >= 2, got {}", self.n));
        }
        if self.m == 0 {
            return config_err("M must be >= 1");
        }
        pos("dt", self.dt)?;
        pos("t_max", self.t_max)?;
        pos("t_grid", self.t_grid)?;
        pos("eps_meet", self.eps_meet)?;
        pos("blowup_guard", self.blowup_guard)?;
        pos("r_max", self.r_max)?;
        pos("quad_tol", self.quad_tol)?;
        if self.t_marginal < 0.0 {
            return config_err("t_marginal must be >= 0");
        }
        if self.k_max == 0 {
            return config_err("k_max must be >= 1");
        }
        if self.threads == Some(0) {
            return config_err("threads must be >= 1");
        }
        if let Some(m) = self.modes {
            if m == 0 || m > self.n {
                return config_err(format!("modes must be in 1..={}", self.n));
            }
        }
        if let Some(r) = self.r {
            pos("R", r)?;
        }
        if matches!(
            self.experiment,
            ExperimentKind::BurgersStaged | ExperimentKind::Calibrate
        ) && self.r.is_none()
        {
            return config_err("R is required for this experiment");
        }
        Ok(())
    }

    /// Every key in file form.
    pub fn to_text(&self) -> String {
        fn o<T: fmt::Debug>(v: &Option<T>) -> String {
            v.as_ref().map_or("auto".into(), |x| format!("{x:?}"))
        }
        let wait = match self.wait_coupling {
            WaitCoupling::Synchronous => "synchronous",
            WaitCoupling::Independent => "independent",
        };
        let drift = match self.drift {
            DriftChoice::Rd => "rd",
            DriftChoice::Zero => "zero",
        };
        let f = match self.test_function {
            TestFunction::Square => "square",
            TestFunction::Lyapunov => "lyapunov",
            TestFunction::Both => "both",
        };
        let lines = [
            ("experiment", self.experiment.to_string()),
            ("n", self.n.to_string()),
            ("dt", format!("{:?}", self.dt)),
            ("M", self.m.to_string()),
            ("t_max", format!("{:?}", self.t_max)),
            ("k_max", self.k_max.to_string()),
            ("alpha", format!("{:?}", self.alpha)),
            ("beta", format!("{:?}", self.beta)),
            ("gamma", format!("{:?}", self.gamma)),
            ("delta", format!("{:?}", self.delta)),
            ("drift", drift.into()),
            ("R", o(&self.r)),
            ("rho0", format!("{:?}", self.rho0)),
            ("rho1", format!("{:?}", self.rho1)),
            ("T", o(&self.t_block)),
            ("nu", o(&self.nu)),
            ("eps_meet", format!("{:?}", self.eps_meet)),
            ("bridge", self.bridge.to_string()),
            ("seed", self.seed.to_string()),
            ("threads", o(&self.threads)),
            ("blowup_guard", format!("{:?}", self.blowup_guard)),
            ("separation", format!("{:?}", self.separation)),
            ("center", self.center.to_string()),
            ("x1", self.x1.to_string()),
            ("x2", self.x2.to_string()),
            ("t_grid", format!("{:?}", self.t_grid)),
            ("t_marginal", format!("{:?}", self.t_marginal)),
            ("wait_coupling", wait.into()),
            ("mc_budget", self.mc_budget.to_string()),
            ("r_max", format!("{:?}", self.r_max)),
            ("knots", self.knots.to_string()),
            ("quad_tol", format!("{:?}", self.quad_tol)),
            ("gamma_interp", format!("{:?}", self.gamma_interp)),
            ("c_sob", format!("{:?}", self.c_sob)),
            ("f", f.into()),
            ("modes", o(&self.modes)),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_all_kinds() {
        for kind in ExperimentKind::ALL {
            let mut c = ExperimentConfig::defaults(kind);
            c.nu = Some(0.1);
            c.dt = 1.0 / 3.0 * 1e-3;
            c.center = Profile::Sine { k: 3, amplitude: -0.1 };
            let back = ExperimentConfig::parse(&c.to_text()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn unknown_and_duplicate_keys_fail() {
        assert!(ExperimentConfig::parse("experiment = rd_couple\nfoo = 1\n").is_err());
        assert!(ExperimentConfig::parse("experiment = rd_couple\nn = 8\nn = 9\n").is_err());
        assert!(ExperimentConfig::parse("n = 8\n").is_err());
        assert!(ExperimentConfig::parse("experiment = rd_couple\ndt = -1\n").is_err());
    }

    #[test]
    fn comments_and_profiles() {
        let c = ExperimentConfig::parse(
            "# comment\nexperiment = rd-couple\n\nx1 = constant(0.5)\ncenter = sine(2, 0.25)\nR = auto\n",
        )
        .unwrap();
        assert_eq!(c.x1, Profile::Constant(0.5));
        assert_eq!(c.center, Profile::Sine { k: 2, amplitude: 0.25 });
        assert!("sine(1)".parse::<Profile>().is_err());
    }

    #[test]
    fn staged_requires_radius() {
        assert!(ExperimentConfig::parse("experiment = burgers_staged\nR = auto\n").is_err());
    }
}
