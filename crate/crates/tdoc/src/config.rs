//! Experiment configuration: TOML with one section per concern.
//!
//! A config may name a `preset`; its own keys are then merged over the
//! preset, so a file only has to list what it changes:
//!
//! ```toml
//! preset = "tls-step"
//!
//! [control]
//! alpha = 0.2
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::presets;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Free-form label echoed into the metadata.
    #[serde(default)]
    pub name: String,
    pub system: SystemConfig,
    pub time: TimeConfig,
    pub target: TargetConfig,
    pub control: ControlConfig,
    #[serde(default)]
    pub reference: Option<ReferenceConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    TwoLevel {
        #[serde(default = "default_ground")]
        ground_energy: f64,
        #[serde(default = "default_gap")]
        gap: f64,
        #[serde(default = "default_dipole")]
        dipole: f64,
    },
    GridAtom {
        #[serde(default = "default_x_min")]
        x_min: f64,
        #[serde(default = "default_x_max")]
        x_max: f64,
        #[serde(default = "default_points")]
        n_points: usize,
        #[serde(default = "default_softening")]
        softening: f64,
        /// Absorbing layer width (a.u.); 0 disables the mask.
        #[serde(default = "default_mask_width")]
        mask_width: f64,
        /// Eigenstates computed for occupations and follower targets.
        #[serde(default = "default_n_states")]
        n_states: usize,
    },
}

impl SystemConfig {
    pub fn is_grid(&self) -> bool {
        matches!(self, SystemConfig::GridAtom { .. })
    }
}

fn default_ground() -> f64 {
    tdoc_core::system::ATOM_GROUND_ENERGY
}
fn default_gap() -> f64 {
    tdoc_core::system::ATOM_GAP
}
fn default_dipole() -> f64 {
    tdoc_core::system::ATOM_DIPOLE
}
fn default_x_min() -> f64 {
    -150.0
}
fn default_x_max() -> f64 {
    150.0
}
fn default_points() -> usize {
    2048
}
fn default_softening() -> f64 {
    1.0
}
fn default_mask_width() -> f64 {
    tdoc_core::mask::MaskFunction::DEFAULT_WIDTH
}
fn default_n_states() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub total: f64,
    pub dt: f64,
}

impl TimeConfig {
    /// `T/dt` when it is an integer to within 1e-9 relative.
    pub fn n_steps(&self) -> Option<usize> {
        if !(self.total > 0.0 && self.dt > 0.0) {
            return None;
        }
        let ratio = self.total / self.dt;
        let n = ratio.round();
        ((ratio - n).abs() <= 1e-9 * ratio && n >= 1.0).then_some(n as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    /// Time-dependent part.
    pub o1: O1Config,
    /// Final-time part.
    #[serde(default)]
    pub o2: O2Config,
    #[serde(default = "one")]
    pub exponent: u32,
    /// Gaussian prefactor: "fourth_root" or "unit_integral".
    #[serde(default = "default_norm")]
    pub density_norm: String,
}

fn one() -> u32 {
    1
}
fn default_norm() -> String {
    "fourth_root".into()
}
fn default_sigma() -> f64 {
    10.0
}
fn default_levels() -> Vec<usize> {
    vec![0, 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum O1Config {
    None,
    /// Population moves linearly 1 → 0 → 1 in level 0 (V shape).
    Vshape {
        #[serde(default = "default_levels")]
        levels: Vec<usize>,
    },
    /// `|a0|² = 1` outside `[t_on, t_off)`, 0 inside; defaults T/3, 2T/3.
    Step {
        #[serde(default)]
        t_on: Option<f64>,
        #[serde(default)]
        t_off: Option<f64>,
        #[serde(default = "default_levels")]
        levels: Vec<usize>,
    },
    /// `a0 = cos ωt`, `a1 = sin ωt`.
    Cosine {
        omega: f64,
        #[serde(default = "default_levels")]
        levels: Vec<usize>,
    },
    /// Tabulated amplitudes: columns `t, a_0, a_1, …` (real).
    Sampled {
        file: PathBuf,
        #[serde(default = "default_levels")]
        levels: Vec<usize>,
    },
    /// Gaussian density around a path `r(t)`: read from `file` (columns
    /// `t, r`) or generated from the `[reference]` section.
    MovingDensity {
        #[serde(default)]
        file: Option<PathBuf>,
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum O2Config {
    #[default]
    None,
    /// `|n⟩⟨n|` for eigenstate `level`.
    Projector { level: usize },
    LocalDensity {
        x0: f64,
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub alpha: f64,
    #[serde(default)]
    pub eta: f64,
    #[serde(default = "unit")]
    pub gamma: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_initial_field")]
    pub initial_field: f64,
    /// "implicit", "predictor_corrector" or "explicit".
    #[serde(default = "default_feedback")]
    pub feedback: String,
    /// "auto", "full" or a checkpoint segment length.
    #[serde(default)]
    pub storage: StorageConfig,
    #[serde(default = "default_memory_cap")]
    pub memory_cap: u64,
    #[serde(default = "default_monotonic_tolerance")]
    pub monotonic_tolerance: f64,
}

fn unit() -> f64 {
    1.0
}
fn default_max_iterations() -> usize {
    500
}
fn default_threshold() -> f64 {
    1e-8
}
fn default_initial_field() -> f64 {
    1e-4
}
fn default_feedback() -> String {
    "implicit".into()
}
fn default_memory_cap() -> u64 {
    tdoc_core::control::DEFAULT_MEMORY_CAP
}
fn default_monotonic_tolerance() -> f64 {
    tdoc_core::control::MONOTONIC_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StorageConfig {
    Segment(usize),
    Named(String),
}

impl Default for StorageConfig {
    fn default() -> Self {
        StorageConfig::Named("auto".into())
    }
}

/// Field used to generate a reference path `r(t) = ⟨x̂⟩(t)`:
/// `ε(t) = amplitude · envelope(t) · sin(frequency · t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub amplitude: f64,
    pub frequency: f64,
    /// "sin2" (sin²(πt/T)), "constant" or "gaussian" (width T/6 at T/2).
    #[serde(default = "default_envelope")]
    pub envelope: String,
    /// Output file for the `reference` command; defaults to
    /// `<output.dir>/reference.dat`.
    #[serde(default)]
    pub file: Option<PathBuf>,
}

fn default_envelope() -> String {
    "sin2".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Write `checkpoint.bin` after every iteration.
    #[serde(default)]
    pub checkpoint: bool,
    /// Resume from this checkpoint file.
    #[serde(default)]
    pub resume: Option<PathBuf>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            stride: default_stride(),
            checkpoint: false,
            resume: None,
        }
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_stride() -> usize {
    10
}

impl ExperimentConfig {
    /// Reads a TOML file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    /// Parses TOML text, merging it over `preset` when one is named.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        let value = match table.remove("preset") {
            Some(toml::Value::String(name)) => {
                let base = presets::preset(&name)?;
                let mut merged = toml::Table::try_from(&base)
                    .map_err(|e| Error::Config(format!("preset {name}: {e}")))?;
                merge(&mut merged, table);
                merged
            }
            Some(other) => return Err(Error::Config(format!("preset must be a string, got {other}"))),
            None => table,
        };
        value
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))
    }

    /// A preset name or a path to a TOML file.
    pub fn from_arg(arg: &str) -> Result<Self> {
        let path = Path::new(arg);
        if path.exists() {
            return Self::load(path);
        }
        presets::preset(arg).map_err(|_| {
            Error::Config(format!(
                "{arg} is neither a config file nor a preset ({})",
                presets::NAMES.join(", ")
            ))
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.target.o1 {
            O1Config::Sampled { file, .. } => fix(file),
            O1Config::MovingDensity { file: Some(file), .. } => fix(file),
            _ => {}
        }
        if let Some(r) = &mut self.output.resume {
            fix(r);
        }
    }

    /// Checks that do not need any numerics; each failure is one message.
    pub fn check(&self) -> Vec<String> {
        let mut failures = Vec::new();
        let t = self.time;
        if self.time.n_steps().is_none() {
            failures.push(format!("T = {} is not an integer multiple of dt = {}", t.total, t.dt));
        }
        let c = &self.control;
        if !(c.alpha > 0.0) {
            failures.push(format!("alpha = {} must be positive", c.alpha));
        }
        for (name, w) in [("eta", c.eta), ("gamma", c.gamma)] {
            if !(0.0..=2.0).contains(&w) {
                failures.push(format!("{name} = {w} must lie in [0, 2]"));
            }
        }
        if self.output.stride == 0 {
            failures.push("output stride must be positive".into());
        } else if let Some(n) = self.time.n_steps() {
            if n % self.output.stride != 0 {
                failures.push(format!(
                    "output stride {} does not divide n_steps = {n}",
                    self.output.stride
                ));
            }
        }
        if let Err(e) = self.feedback() {
            failures.push(e.to_string());
        }
        if let Err(e) = self.storage() {
            failures.push(e.to_string());
        }
        if let Err(e) = self.density_norm() {
            failures.push(e.to_string());
        }
        match &self.target.o1 {
            O1Config::Sampled { file, .. } if !file.exists() => {
                failures.push(format!("sampled target file {} does not exist", file.display()))
            }
            O1Config::MovingDensity { file: Some(file), .. } if !file.exists() => {
                failures.push(format!("trajectory file {} does not exist", file.display()))
            }
            O1Config::MovingDensity { file: None, .. } if self.reference.is_none() => failures.push(
                "moving_density target needs a trajectory file or a [reference] section".into(),
            ),
            _ => {}
        }
        let needs_grid = matches!(self.target.o1, O1Config::MovingDensity { .. })
            || matches!(self.target.o2, O2Config::LocalDensity { .. });
        if needs_grid && !self.system.is_grid() {
            failures.push("density targets need a grid_atom system".into());
        }
        if self.reference.is_some() && !self.system.is_grid() {
            failures.push("reference trajectories need a grid_atom system".into());
        }
        if let Some(r) = &self.reference {
            if let Err(e) = crate::reference::Envelope::parse(&r.envelope) {
                failures.push(e.to_string());
            }
        }
        if let Some(resume) = &self.output.resume {
            if !resume.exists() {
                failures.push(format!("resume file {} does not exist", resume.display()));
            }
        }
        failures
    }

    pub fn feedback(&self) -> Result<tdoc_core::control::FeedbackMode> {
        use tdoc_core::control::FeedbackMode;
        match self.control.feedback.as_str() {
            "implicit" => Ok(FeedbackMode::Implicit),
            "predictor_corrector" => Ok(FeedbackMode::PredictorCorrector),
            "explicit" => Ok(FeedbackMode::Explicit),
            other => Err(Error::Config(format!(
                "feedback must be implicit, predictor_corrector or explicit (got {other})"
            ))),
        }
    }

    pub fn storage(&self) -> Result<tdoc_core::control::Storage> {
        use tdoc_core::control::Storage;
        match &self.control.storage {
            StorageConfig::Segment(0) => Err(Error::Config("storage segment must be positive".into())),
            StorageConfig::Segment(m) => Ok(Storage::Checkpointed { segment: *m }),
            StorageConfig::Named(s) if s == "auto" => Ok(Storage::Auto),
            StorageConfig::Named(s) if s == "full" => Ok(Storage::Full),
            StorageConfig::Named(s) => Err(Error::Config(format!(
                "storage must be auto, full or a segment length (got {s})"
            ))),
        }
    }

    pub fn density_norm(&self) -> Result<tdoc_core::target::DensityNorm> {
        use tdoc_core::target::DensityNorm;
        match self.target.density_norm.as_str() {
            "fourth_root" => Ok(DensityNorm::FourthRoot),
            "unit_integral" => Ok(DensityNorm::UnitIntegral),
            other => Err(Error::Config(format!(
                "density_norm must be fourth_root or unit_integral (got {other})"
            ))),
        }
    }

    /// Sets one sweepable parameter.
    pub fn set_axis(&mut self, axis: Axis, value: f64) -> Result<()> {
        match axis {
            Axis::Alpha => self.control.alpha = value,
            Axis::Eta => self.control.eta = value,
            Axis::Gamma => self.control.gamma = value,
            Axis::Exponent => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!("exponent {value} is not a positive integer")));
                }
                self.target.exponent = value as u32;
            }
            Axis::Sigma => {
                let slot = match (&mut self.target.o1, &mut self.target.o2) {
                    (O1Config::MovingDensity { sigma, .. }, _) => sigma,
                    (_, O2Config::LocalDensity { sigma, .. }) => sigma,
                    _ => return Err(Error::Config("sigma sweep needs a density target".into())),
                };
                *slot = value;
            }
        }
        Ok(())
    }
}

/// Parameters `run_sweep` can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Alpha,
    #[serde(rename = "n")]
    Exponent,
    Eta,
    Gamma,
    Sigma,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(Axis::Alpha),
            "n" | "exponent" => Ok(Axis::Exponent),
            "eta" => Ok(Axis::Eta),
            "gamma" => Ok(Axis::Gamma),
            "sigma" => Ok(Axis::Sigma),
            other => Err(Error::Config(format!(
                "unknown sweep axis {other} (alpha, n, eta, gamma, sigma)"
            ))),
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::Alpha => "alpha",
            Axis::Exponent => "n",
            Axis::Eta => "eta",
            Axis::Gamma => "gamma",
            Axis::Sigma => "sigma",
        })
    }
}

/// Recursive table merge; `over` wins, sub-tables merge key by key unless
/// the `kind` tag changes (then the whole sub-table is replaced).
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o))
                if o.get("kind").is_none() || o.get("kind") == b.get("kind") =>
            {
                merge(b, o)
            }
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}
