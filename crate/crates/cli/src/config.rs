//! Experiment configuration: a TOML file with nested tables, overridable by
//! command-line flags. Validation failures map to exit status 2.

use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use hnls_core::hypgeo::{Dimension, RadialField, RadialGrid};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub type ConfigResult<T> = std::result::Result<T, ConfigError>;

fn bad<T>(msg: impl Into<String>) -> ConfigResult<T> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dimension: usize,
    pub seed: u64,
    pub grid: GridSpec,
    pub profile: Option<ProfileSpec>,
    pub tolerances: Tolerances,
    pub verify: VerifySpec,
    pub decay: DecaySpec,
    pub strichartz: StrichartzSpec,
    pub nls: NlsSpec,
    pub kernel_table: KernelTableSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dimension: 3,
            seed: 0,
            grid: GridSpec::default(),
            profile: None,
            tolerances: Tolerances::default(),
            verify: VerifySpec::default(),
            decay: DecaySpec::default(),
            strichartz: StrichartzSpec::default(),
            nls: NlsSpec::default(),
            kernel_table: KernelTableSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub r_max: f64,
    pub nodes: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            r_max: 20.0,
            nodes: 1000,
        }
    }
}

/// Named initial-data family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub name: String,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default)]
    pub frequency: f64,
}

fn one() -> f64 {
    1.0
}

pub const PROFILE_NAMES: [&str; 4] = ["gaussian", "gaussian_poly", "cos_gaussian", "sech"];

impl ProfileSpec {
    pub fn gaussian(amplitude: f64, width: f64) -> Self {
        Self {
            name: "gaussian".into(),
            amplitude,
            width,
            frequency: 0.0,
        }
    }

    pub fn validate(&self) -> ConfigResult<()> {
        if !PROFILE_NAMES.contains(&self.name.as_str()) {
            return bad(format!("unknown profile '{}'; expected one of {:?}", self.name, PROFILE_NAMES));
        }
        if !(self.width > 0.0) || !self.amplitude.is_finite() || !self.frequency.is_finite() {
            return bad("profile needs width > 0 and finite amplitude and frequency");
        }
        Ok(())
    }

    pub fn eval(&self, r: f64) -> f64 {
        let x = r / self.width;
        let shape = match self.name.as_str() {
            "gaussian" => (-x * x).exp(),
            "gaussian_poly" => (1.0 + x * x) * (-x * x).exp(),
            "cos_gaussian" => (self.frequency * r).cos() * (-x * x).exp(),
            _ => 1.0 / x.cosh(),
        };
        self.amplitude * shape
    }

    pub fn sample(&self, grid: &Arc<RadialGrid>) -> RadialField {
        grid.sample(|r| Complex64::new(self.eval(r), 0.0))
    }

    pub fn label(&self) -> String {
        format!("{}(a={},w={},k={})", self.name, self.amplitude, self.width, self.frequency)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub identity: f64,
    pub exponent: f64,
    pub mass: f64,
    pub energy: f64,
    pub virial: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: 1e-6,
            exponent: 0.1,
            mass: 1e-8,
            energy: 1e-3,
            virial: 0.05,
        }
    }
}

pub const VERIFY_SUITES: [&str; 6] = ["fk", "spherical", "eigen", "kernel-parity", "bilaplacian", "oscillatory"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySpec {
    pub suites: Vec<String>,
    /// Derivative order for the F_k^m suite.
    pub m: usize,
    /// Random (λ, ρ) or (s, t) samples drawn per suite in addition to fixed grids.
    pub random_samples: usize,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            suites: Vec::new(),
            m: 4,
            random_samples: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecaySpec {
    /// Any of "sup", "sup_large_time", "weighted", "sinh_weighted".
    pub norms: Vec<String>,
    pub t_min: f64,
    pub t_max: f64,
    pub samples: usize,
    /// "spectral" or "kernel".
    pub route: String,
    /// Grid on which the kernel-route constant is calibrated; defaults to a
    /// quarter of the main node count on the same radius.
    pub calibration_nodes: Option<usize>,
}

impl Default for DecaySpec {
    fn default() -> Self {
        Self {
            norms: vec!["sup".into()],
            t_min: 0.02,
            t_max: 0.2,
            samples: 7,
            route: "spectral".into(),
            calibration_nodes: None,
        }
    }
}

pub const DECAY_NORMS: [&str; 4] = ["sup", "sup_large_time", "weighted", "sinh_weighted"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrichartzSpec {
    /// (p, q) pairs; `inf` is accepted for either exponent.
    pub pairs: Vec<[f64; 2]>,
    pub t_end: f64,
    /// Constant the weighted mixed-norm ratios must stay below.
    pub bound: f64,
}

impl Default for StrichartzSpec {
    fn default() -> Self {
        Self {
            pairs: vec![[2.0, 6.0], [4.0, 3.0], [f64::INFINITY, 2.0]],
            t_end: 1.0,
            bound: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NlsSpec {
    pub p: Option<f64>,
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_every: f64,
    pub focusing: bool,
    pub coupling: f64,
    /// Absolute gradient threshold; absent means a multiple of the initial norm.
    pub gradient_threshold: Option<f64>,
    pub gradient_factor: f64,
    /// "blowup", "global" or "any".
    pub expect: String,
    /// Write every k-th diagnostic snapshot as a binary frame; 0 disables.
    pub frame_stride: usize,
}

impl Default for NlsSpec {
    fn default() -> Self {
        Self {
            p: None,
            dt: 0.001,
            t_end: 1.0,
            snapshot_every: 0.01,
            focusing: true,
            coupling: 1.0,
            gradient_threshold: None,
            gradient_factor: 5.0,
            expect: "any".into(),
            frame_stride: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelTableSpec {
    pub t: f64,
    pub y_max: f64,
    pub dy: f64,
}

impl Default for KernelTableSpec {
    fn default() -> Self {
        Self {
            t: 0.5,
            y_max: 10.0,
            dy: 0.004,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> ConfigResult<Self> {
        toml::from_str(text).map_err(|e| ConfigError(format!("config parse error: {e}")))
    }

    pub fn load(path: &Path) -> ConfigResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn dim(&self) -> ConfigResult<Dimension> {
        Dimension::new(self.dimension).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn radial_grid(&self) -> ConfigResult<Arc<RadialGrid>> {
        let g = RadialGrid::new(self.dim()?, self.grid.r_max, self.grid.nodes).map_err(|e| ConfigError(e.to_string()))?;
        Ok(Arc::new(g))
    }

    pub fn validate_common(&self) -> ConfigResult<()> {
        if self.dimension < 2 {
            return bad(format!("dimension must be at least 2, got {}", self.dimension));
        }
        if !(self.grid.r_max > 0.0) || self.grid.nodes < 3 {
            return bad("grid needs r_max > 0 and at least 3 nodes");
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("identity", t.identity),
            ("exponent", t.exponent),
            ("mass", t.mass),
            ("energy", t.energy),
            ("virial", t.virial),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("tolerance '{name}' must be positive, got {v}"));
            }
        }
        if let Some(p) = &self.profile {
            p.validate()?;
        }
        Ok(())
    }

    pub fn require_profile(&self) -> ConfigResult<&ProfileSpec> {
        match &self.profile {
            Some(p) => Ok(p),
            None => bad("this command needs a [profile] table with a name"),
        }
    }

    pub fn validate_verify(&self) -> ConfigResult<()> {
        self.validate_common()?;
        if self.verify.suites.is_empty() {
            return bad(format!("no verification suite selected; choose from {VERIFY_SUITES:?}"));
        }
        for s in &self.verify.suites {
            if !VERIFY_SUITES.contains(&s.as_str()) {
                return bad(format!("unknown suite '{s}'; expected one of {VERIFY_SUITES:?}"));
            }
        }
        if !(1..=8).contains(&self.verify.m) {
            return bad(format!("m must lie in 1..=8, got {}", self.verify.m));
        }
        Ok(())
    }

    pub fn validate_decay(&self) -> ConfigResult<()> {
        self.validate_common()?;
        self.require_profile()?;
        let d = &self.decay;
        if !(d.t_min > 0.0) || !(d.t_max > d.t_min) || !d.t_max.is_finite() {
            return bad(format!("decay window needs 0 < t_min < t_max, got [{}, {}]", d.t_min, d.t_max));
        }
        if d.samples < 5 {
            return bad(format!("decay window needs at least 5 samples, got {}", d.samples));
        }
        if d.norms.is_empty() {
            return bad("decay needs at least one norm");
        }
        for n in &d.norms {
            if !DECAY_NORMS.contains(&n.as_str()) {
                return bad(format!("unknown decay norm '{n}'; expected one of {DECAY_NORMS:?}"));
            }
        }
        if d.route != "spectral" && d.route != "kernel" {
            return bad(format!("decay route must be 'spectral' or 'kernel', got '{}'", d.route));
        }
        if matches!(d.calibration_nodes, Some(n) if n < 3) {
            return bad("calibration grid needs at least 3 nodes");
        }
        Ok(())
    }

    pub fn validate_strichartz(&self) -> ConfigResult<()> {
        self.validate_common()?;
        self.require_profile()?;
        let s = &self.strichartz;
        if s.pairs.is_empty() {
            return bad("strichartz needs at least one (p, q) pair");
        }
        if !(s.t_end > 0.0) || !s.t_end.is_finite() || !(s.bound > 0.0) {
            return bad("strichartz needs t_end > 0 and bound > 0");
        }
        let dim = self.dim()?;
        for &[p, q] in &s.pairs {
            hnls_core::estimates::StrichartzPair::new(dim, p, q).map_err(|e| ConfigError(e.to_string()))?;
        }
        Ok(())
    }

    pub fn validate_nls(&self) -> ConfigResult<()> {
        self.validate_common()?;
        self.require_profile()?;
        if !["blowup", "global", "any"].contains(&self.nls.expect.as_str()) {
            return bad(format!("nls.expect must be blowup, global or any, got '{}'", self.nls.expect));
        }
        if !(self.nls.gradient_factor > 1.0) {
            return bad("nls.gradient_factor must exceed 1");
        }
        self.nls_config().validate().map_err(|e| ConfigError(e.to_string()))
    }

    pub fn validate_kernel_table(&self) -> ConfigResult<()> {
        self.validate_common()?;
        let k = &self.kernel_table;
        if k.t == 0.0 || !k.t.is_finite() || !(k.y_max > 0.0) || !(k.dy > 0.0) || k.dy > k.y_max {
            return bad("kernel_table needs t ≠ 0, y_max > 0 and 0 < dy ≤ y_max");
        }
        Ok(())
    }

    /// Nonlinearity power; defaults to the mass-critical 1 + 4/n.
    pub fn nls_power(&self) -> f64 {
        self.nls.p.unwrap_or(1.0 + 4.0 / self.dimension as f64)
    }

    pub fn nls_config(&self) -> hnls_core::nls::NlsConfig {
        let s = &self.nls;
        let mut cfg = hnls_core::nls::NlsConfig::new(self.nls_power(), s.dt, s.t_end).with_snapshot_every(s.snapshot_every);
        cfg.focusing = s.focusing;
        cfg.coupling = s.coupling;
        cfg.mass_tolerance = self.tolerances.mass;
        cfg.energy_tolerance = self.tolerances.energy;
        if let Some(g) = s.gradient_threshold {
            cfg.blowup_gradient_threshold = g;
        }
        cfg.min_dt = cfg.min_dt.min(s.dt);
        cfg
    }
}
