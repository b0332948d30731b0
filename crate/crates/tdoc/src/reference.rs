//! Reference paths `r(t) = ⟨x̂⟩(t)` driven by a prescribed field.

use std::f64::consts::PI;
use std::path::PathBuf;

use tdoc_core::eigen::EigenSystem;
use tdoc_core::field::ControlField;
use tdoc_core::grid::TimeGrid;
use tdoc_core::propagation::Propagator;
use tdoc_core::state::expectation_position;
use tdoc_core::system::SystemSpec;
use tdoc_core::target::PathTrajectory;

use crate::config::{ExperimentConfig, ReferenceConfig};
use crate::error::{Error, Result};
use crate::problem;
use crate::table;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Envelope {
    /// `sin²(πt/T)`.
    Sin2,
    Constant,
    /// `exp(-(t - T/2)²/(2 (T/6)²))`.
    Gaussian,
}

impl Envelope {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sin2" => Ok(Envelope::Sin2),
            "constant" => Ok(Envelope::Constant),
            "gaussian" => Ok(Envelope::Gaussian),
            other => Err(Error::Config(format!(
                "envelope must be sin2, constant or gaussian (got {other})"
            ))),
        }
    }

    pub fn at(self, t: f64, total: f64) -> f64 {
        match self {
            Envelope::Sin2 => (PI * t / total).sin().powi(2),
            Envelope::Constant => 1.0,
            Envelope::Gaussian => {
                let w = total / 6.0;
                (-(t - 0.5 * total).powi(2) / (2.0 * w * w)).exp()
            }
        }
    }
}

/// `ε(t) = amplitude · envelope(t) · sin(frequency · t)`.
pub fn reference_field(r: &ReferenceConfig, time: TimeGrid) -> Result<ControlField> {
    let envelope = Envelope::parse(&r.envelope)?;
    let total = time.total_time();
    Ok(ControlField::from_fn(time, |t| {
        r.amplitude * envelope.at(t, total) * (r.frequency * t).sin()
    }))
}

/// Propagates the ground state under the reference field and records
/// `⟨x̂⟩` after every step.
pub fn generate_with(
    system: &SystemSpec,
    eig: &EigenSystem,
    time: TimeGrid,
    r: &ReferenceConfig,
) -> Result<PathTrajectory> {
    let grid = match system {
        SystemSpec::GridAtom(a) => *a.grid(),
        SystemSpec::TwoLevel(_) => {
            return Err(Error::Config("reference trajectories need a grid_atom system".into()))
        }
    };
    let field = reference_field(r, time)?;
    let mut propagator = Propagator::new(system, time.dt())?;
    let mut psi = eig.states()[0].clone();
    let n = time.n_steps();
    let mut times = Vec::with_capacity(n + 1);
    let mut positions = Vec::with_capacity(n + 1);
    times.push(0.0);
    positions.push(expectation_position(&psi, &grid)?);
    for i in 0..n {
        propagator.step(psi.amplitudes_mut(), field.step_value(i));
        times.push(time.t(i + 1));
        positions.push(expectation_position(&psi, &grid)?);
    }
    if positions.iter().any(|x| !x.is_finite()) {
        return Err(Error::Core(tdoc_core::Error::NonFinite { step: n }));
    }
    Ok(PathTrajectory::new(times, positions)?)
}

/// Path for `config`, computed from scratch.
pub fn generate(config: &ExperimentConfig) -> Result<PathTrajectory> {
    let r = config
        .reference
        .as_ref()
        .ok_or_else(|| Error::Config("no [reference] section".into()))?;
    let time = problem::time_grid(config)?;
    let system = problem::build_system(&config.system)?;
    let eig = problem::build_eigensystem(&system, 1)?;
    generate_with(&system, &eig, time, r)
}

/// Writes the path of `config` to `reference.file` (default
/// `<output.dir>/reference.dat`) and returns that location.
pub fn generate_reference_trajectory(config: &ExperimentConfig) -> Result<PathBuf> {
    let path = generate(config)?;
    let file = config
        .reference
        .as_ref()
        .and_then(|r| r.file.clone())
        .unwrap_or_else(|| config.output.dir.join("reference.dat"));
    if let Some(dir) = file.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    table::write_path(&file, &path)?;
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn small() -> ExperimentConfig {
        let mut c = presets::preset("moving-density-ci").unwrap();
        c.system = crate::config::SystemConfig::GridAtom {
            x_min: -40.0,
            x_max: 40.0,
            n_points: 256,
            softening: 1.0,
            mask_width: 10.0,
            n_states: 2,
        };
        c.time.total = 40.0;
        c.time.dt = 0.02;
        c
    }

    #[test]
    fn envelopes() {
        assert_eq!(Envelope::Sin2.at(0.0, 10.0), 0.0);
        assert!((Envelope::Sin2.at(5.0, 10.0) - 1.0).abs() < 1e-15);
        assert_eq!(Envelope::Gaussian.at(5.0, 10.0), 1.0);
        assert_eq!(Envelope::Constant.at(3.0, 10.0), 1.0);
        assert!(Envelope::parse("square").is_err());
    }

    #[test]
    fn zero_field_gives_a_flat_path() {
        let mut c = small();
        c.reference.as_mut().unwrap().amplitude = 0.0;
        let p = generate(&c).unwrap();
        assert_eq!(p.times().len(), 2001);
        assert!(p.positions().iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn output_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small();
        c.output.dir = dir.path().to_path_buf();
        let a = std::fs::read(generate_reference_trajectory(&c).unwrap()).unwrap();
        let b = std::fs::read(generate_reference_trajectory(&c).unwrap()).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
    }
}
