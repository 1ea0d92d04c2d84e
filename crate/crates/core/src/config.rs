//! Plain-text `key = value` configuration.
//!
//! Blank lines and `#` comments are ignored. Every error names the line it
//! came from.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kernels::{FeatureKind, KernelFamily};
use crate::svgp::VariantKind;

/// Parse `key = value` lines into `key -> (line number, value)`.
pub fn parse_kv(text: &str) -> Result<HashMap<String, (usize, String)>> {
    let mut out = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body.split_once('=').ok_or_else(|| Error::ConfigParse {
            line,
            message: format!("expected `key = value`, got `{body}`"),
        })?;
        let key = k.trim();
        if key.is_empty() {
            return Err(Error::ConfigParse { line, message: "empty key".into() });
        }
        if out.insert(key.to_string(), (line, v.trim().to_string())).is_some() {
            return Err(Error::ConfigParse { line, message: format!("duplicate key `{key}`") });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaMode {
    Fixed(f64),
    Theoretical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MSchedule {
    Fixed(usize),
    Table1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InducingRule {
    Greedy,
    KMeans,
}

/// Which information gain feeds the exploration schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaSource {
    Realized,
    Envelope,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub objective: String,
    pub horizon: usize,
    pub batch: usize,
    /// Likelihood noise variance of the surrogate; `None` uses the
    /// observation noise variance (or 0.01 for noiseless objectives).
    pub tau: Option<f64>,
    /// Observation noise variance; `None` uses the objective's default.
    pub noise_variance: Option<f64>,
    pub kernel: KernelFamily,
    /// One entry per axis, or a single entry broadcast to all axes. `None`
    /// uses the objective's default.
    pub lengthscale: Option<Vec<f64>>,
    pub kernel_variance: f64,
    pub variant: VariantKind,
    pub inducing: InducingRule,
    pub m: MSchedule,
    /// Prior feature count; `None` picks a default from the schedule.
    pub big_m: Option<usize>,
    /// `None` uses Mercer features for SE kernels in one or two dimensions
    /// and random Fourier features otherwise.
    pub features: Option<FeatureKind>,
    pub alpha: AlphaMode,
    pub delta: f64,
    /// `None` uses `1 / (T^2 log T)`.
    pub eps0: Option<f64>,
    pub rkhs_norm: f64,
    pub noise_r: f64,
    pub grid_cap: Option<usize>,
    pub lipschitz: f64,
    pub gamma_source: GammaSource,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn new(objective: &str) -> Self {
        Self {
            objective: objective.to_string(),
            horizon: 20,
            batch: 5,
            tau: None,
            noise_variance: None,
            kernel: KernelFamily::SquaredExponential,
            lengthscale: None,
            kernel_variance: 1.0,
            variant: VariantKind::Points,
            inducing: InducingRule::Greedy,
            m: MSchedule::Fixed(20),
            big_m: None,
            features: None,
            alpha: AlphaMode::Fixed(1.0),
            delta: 0.1,
            eps0: None,
            rkhs_norm: 1.0,
            noise_r: 1.0,
            grid_cap: Some(2000),
            lipschitz: 1.0,
            gamma_source: GammaSource::Realized,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.objective.is_empty() {
            return bad("`objective` is required".into());
        }
        if self.horizon == 0 || self.batch == 0 {
            return bad("T and B must be at least 1".into());
        }
        if self.tau.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
            return bad("tau must be positive".into());
        }
        if let Some(v) = self.noise_variance {
            if !(v >= 0.0 && v.is_finite()) {
                return bad("noise_variance must be non-negative".into());
            }
        }
        if let AlphaMode::Fixed(a) = self.alpha {
            if !(a >= 1.0 && a.is_finite()) {
                return bad(format!("fixed alpha must be >= 1, got {a}"));
            }
        }
        if self.m == MSchedule::Fixed(0) {
            return bad("m must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)".into());
        }
        if self.eps0.is_some_and(|e| !(e >= 0.0)) || self.rkhs_norm < 0.0 || self.noise_r < 0.0 {
            return bad("eps0, rkhs_norm and noise_r must be non-negative".into());
        }
        if !(self.lipschitz > 0.0) {
            return bad("lipschitz must be positive".into());
        }
        if self.big_m == Some(0) || self.grid_cap == Some(0) || self.threads == Some(0) {
            return bad("M, grid_cap and threads must be positive".into());
        }
        if self.variant == VariantKind::Features && self.features == Some(FeatureKind::RandomFourier) {
            return bad("the features variant needs Mercer features".into());
        }
        Ok(())
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse `{v}`"))
        }
        fn opt<T: FromStr>(v: &str) -> std::result::Result<Option<T>, String> {
            if matches!(v, "none" | "auto" | "default") { Ok(None) } else { num(v).map(Some) }
        }
        match key {
            "objective" => self.objective = value.to_string(),
            "T" => self.horizon = num(value)?,
            "B" => self.batch = num(value)?,
            "tau" => self.tau = opt(value)?,
            "noise_variance" => self.noise_variance = opt(value)?,
            "kernel" => self.kernel = value.parse().map_err(|e: Error| e.to_string())?,
            "lengthscale" => {
                self.lengthscale = if value == "auto" {
                    None
                } else {
                    Some(value.split(',').map(|s| num(s.trim())).collect::<std::result::Result<_, _>>()?)
                }
            }
            "kernel_variance" => self.kernel_variance = num(value)?,
            "variant" => {
                self.variant = match value {
                    "points" => VariantKind::Points,
                    "features" => VariantKind::Features,
                    _ => return Err(format!("variant must be points or features, got `{value}`")),
                }
            }
            "inducing" => {
                self.inducing = match value {
                    "greedy" => InducingRule::Greedy,
                    "kmeans" => InducingRule::KMeans,
                    _ => return Err(format!("inducing must be greedy or kmeans, got `{value}`")),
                }
            }
            "m" => self.m = if value == "table1" { MSchedule::Table1 } else { MSchedule::Fixed(num(value)?) },
            "M" => self.big_m = opt(value)?,
            "features" => {
                self.features = match value {
                    "mercer" => Some(FeatureKind::MercerTruncated),
                    "rff" => Some(FeatureKind::RandomFourier),
                    "auto" => None,
                    _ => return Err(format!("features must be mercer, rff or auto, got `{value}`")),
                }
            }
            "alpha" => {
                self.alpha = if value == "theoretical" { AlphaMode::Theoretical } else { AlphaMode::Fixed(num(value)?) }
            }
            "delta" => self.delta = num(value)?,
            "eps0" => self.eps0 = opt(value)?,
            "rkhs_norm" => self.rkhs_norm = num(value)?,
            "noise_r" => self.noise_r = num(value)?,
            "grid_cap" => self.grid_cap = opt(value)?,
            "lipschitz" => self.lipschitz = num(value)?,
            "gamma_source" => {
                self.gamma_source = match value {
                    "realized" => GammaSource::Realized,
                    "envelope" => GammaSource::Envelope,
                    _ => return Err(format!("gamma_source must be realized or envelope, got `{value}`")),
                }
            }
            "threads" => self.threads = opt(value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Parse a config file. `objective` is mandatory.
    pub fn parse(text: &str) -> Result<Self> {
        let kv = parse_kv(text)?;
        let mut entries: Vec<(&String, &(usize, String))> = kv.iter().collect();
        entries.sort_by_key(|(_, (line, _))| *line);
        let objective = kv
            .get("objective")
            .ok_or_else(|| Error::InvalidConfig("missing required field `objective`".into()))?;
        let mut cfg = RunConfig::new(&objective.1);
        for (key, (line, value)) in entries {
            cfg.set(key, value).map_err(|message| Error::ConfigParse { line: *line, message })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply `key=value` overrides on top of a parsed config.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("override `{o}` is not key=value")))?;
            self.set(k.trim(), v.trim())
                .map_err(|m| Error::InvalidConfig(format!("override `{o}`: {m}")))?;
        }
        self.validate()
    }

    /// Canonical text form; `parse(to_text())` gives back the same config.
    pub fn to_text(&self) -> String {
        fn o<T: std::fmt::Display>(v: &Option<T>) -> String {
            v.as_ref().map_or("auto".to_string(), |v| v.to_string())
        }
        let mut s = String::new();
        let _ = writeln!(s, "objective = {}", self.objective);
        let _ = writeln!(s, "T = {}", self.horizon);
        let _ = writeln!(s, "B = {}", self.batch);
        let _ = writeln!(s, "tau = {}", o(&self.tau));
        let _ = writeln!(s, "noise_variance = {}", o(&self.noise_variance));
        let _ = writeln!(s, "kernel = {}", self.kernel);
        let ls = self
            .lengthscale
            .as_ref()
            .map_or("auto".to_string(), |l| l.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
        let _ = writeln!(s, "lengthscale = {ls}");
        let _ = writeln!(s, "kernel_variance = {}", self.kernel_variance);
        let _ = writeln!(s, "variant = {}", match self.variant {
            VariantKind::Points => "points",
            VariantKind::Features => "features",
        });
        let _ = writeln!(s, "inducing = {}", match self.inducing {
            InducingRule::Greedy => "greedy",
            InducingRule::KMeans => "kmeans",
        });
        let _ = writeln!(s, "m = {}", match self.m {
            MSchedule::Fixed(m) => m.to_string(),
            MSchedule::Table1 => "table1".into(),
        });
        let _ = writeln!(s, "M = {}", o(&self.big_m));
        let _ = writeln!(s, "features = {}", match self.features {
            None => "auto",
            Some(FeatureKind::MercerTruncated) => "mercer",
            Some(FeatureKind::RandomFourier) => "rff",
        });
        let _ = writeln!(s, "alpha = {}", match self.alpha {
            AlphaMode::Fixed(a) => a.to_string(),
            AlphaMode::Theoretical => "theoretical".into(),
        });
        let _ = writeln!(s, "delta = {}", self.delta);
        let _ = writeln!(s, "eps0 = {}", o(&self.eps0));
        let _ = writeln!(s, "rkhs_norm = {}", self.rkhs_norm);
        let _ = writeln!(s, "noise_r = {}", self.noise_r);
        let _ = writeln!(s, "grid_cap = {}", o(&self.grid_cap));
        let _ = writeln!(s, "lipschitz = {}", self.lipschitz);
        let _ = writeln!(s, "gamma_source = {}", match self.gamma_source {
            GammaSource::Realized => "realized",
            GammaSource::Envelope => "envelope",
        });
        let _ = writeln!(s, "threads = {}", o(&self.threads));
        s
    }
}
