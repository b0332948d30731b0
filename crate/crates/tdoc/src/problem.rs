//! Turns an [`ExperimentConfig`] into the numerical objects of one run.

use tdoc_core::control::ControlParams;
use tdoc_core::eigen::{compute_eigensystem, EigenSystem};
use tdoc_core::field::ControlField;
use tdoc_core::grid::{Grid, TimeGrid};
use tdoc_core::mask::MaskFunction;
use tdoc_core::state::QuantumState;
use tdoc_core::system::{GridAtom, SystemSpec, TwoLevelSystem};
use tdoc_core::target::{CoeffShape, CoeffTrajectory, PathTrajectory, TargetSpec, O1, O2};
use tdoc_core::Complex64;

use crate::config::{ExperimentConfig, O1Config, O2Config, SystemConfig};
use crate::error::{Error, Result};
use crate::reference;
use crate::table;

/// Everything `Optimizer::new` needs, plus the pieces the artifacts reuse.
#[derive(Debug, Clone)]
pub struct Problem {
    pub system: SystemSpec,
    pub eigensystem: EigenSystem,
    pub target: TargetSpec,
    pub params: ControlParams,
    pub psi0: QuantumState,
    pub time: TimeGrid,
    /// Path of a moving-density target.
    pub path: Option<PathTrajectory>,
}

impl Problem {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        let failures = config.check();
        if !failures.is_empty() {
            return Err(Error::Config(failures.join("; ")));
        }
        let time = time_grid(config)?;
        let system = build_system(&config.system)?;
        let eigensystem = build_eigensystem(&system, n_states_needed(config))?;
        let path = match &config.target.o1 {
            O1Config::MovingDensity { file: Some(file), .. } => Some(table::read_path(file)?),
            O1Config::MovingDensity { file: None, .. } => {
                let r = config.reference.as_ref().expect("checked");
                Some(reference::generate_with(&system, &eigensystem, time, r)?)
            }
            _ => None,
        };
        let target = build_target(config, &system, &eigensystem, path.clone())?;
        let params = control_params(config, time)?;
        let psi0 = eigensystem.states()[0].clone();
        Ok(Self {
            system,
            eigensystem,
            target,
            params,
            psi0,
            time,
            path,
        })
    }

    pub fn grid(&self) -> Option<&Grid> {
        match &self.system {
            SystemSpec::GridAtom(a) => Some(a.grid()),
            SystemSpec::TwoLevel(_) => None,
        }
    }
}

pub fn time_grid(config: &ExperimentConfig) -> Result<TimeGrid> {
    let n = config.time.n_steps().ok_or_else(|| {
        Error::Config(format!(
            "T = {} is not an integer multiple of dt = {}",
            config.time.total, config.time.dt
        ))
    })?;
    Ok(TimeGrid::new(config.time.dt, n)?)
}

pub fn build_system(config: &SystemConfig) -> Result<SystemSpec> {
    Ok(match *config {
        SystemConfig::TwoLevel {
            ground_energy,
            gap,
            dipole,
        } => SystemSpec::TwoLevel(TwoLevelSystem::new(ground_energy, ground_energy + gap, dipole)?),
        SystemConfig::GridAtom {
            x_min,
            x_max,
            n_points,
            softening,
            mask_width,
            ..
        } => {
            let grid = Grid::new(x_min, x_max, n_points)?;
            let atom = GridAtom::soft_coulomb(grid, softening);
            let atom = if mask_width > 0.0 {
                let mask = MaskFunction::new(atom.grid(), mask_width)?;
                atom.with_mask(mask)
            } else {
                atom
            };
            SystemSpec::GridAtom(atom)
        }
    })
}

pub fn build_eigensystem(system: &SystemSpec, n_states: usize) -> Result<EigenSystem> {
    Ok(match system {
        SystemSpec::TwoLevel(s) => EigenSystem::two_level(s),
        SystemSpec::GridAtom(_) => compute_eigensystem(system, n_states)?,
    })
}

/// Eigenstates required by the config (at least two, for occupations).
fn n_states_needed(config: &ExperimentConfig) -> usize {
    let configured = match config.system {
        SystemConfig::GridAtom { n_states, .. } => n_states,
        SystemConfig::TwoLevel { .. } => 2,
    };
    let levels = match &config.target.o1 {
        O1Config::Vshape { levels }
        | O1Config::Step { levels, .. }
        | O1Config::Cosine { levels, .. }
        | O1Config::Sampled { levels, .. } => levels.iter().max().map_or(0, |m| m + 1),
        _ => 0,
    };
    let projector = match config.target.o2 {
        O2Config::Projector { level } => level + 1,
        _ => 0,
    };
    configured.max(levels).max(projector).max(2)
}

fn coefficient_shape(config: &ExperimentConfig) -> Result<Option<(CoeffShape, Vec<usize>)>> {
    let total = config.time.total;
    Ok(match &config.target.o1 {
        O1Config::Vshape { levels } => Some((CoeffShape::VShape { total_time: total }, levels.clone())),
        O1Config::Step { t_on, t_off, levels } => Some((
            CoeffShape::Step {
                t_on: t_on.unwrap_or(total / 3.0),
                t_off: t_off.unwrap_or(2.0 * total / 3.0),
            },
            levels.clone(),
        )),
        O1Config::Cosine { omega, levels } => Some((CoeffShape::Cosine { omega: *omega }, levels.clone())),
        O1Config::Sampled { file, levels } => {
            let rows = table::read_columns(file)?;
            let times = rows.iter().map(|r| r[0]).collect();
            let amplitudes = rows
                .iter()
                .map(|r| r[1..].iter().map(|&a| Complex64::new(a, 0.0)).collect())
                .collect();
            Some((CoeffShape::Sampled { times, amplitudes }, levels.clone()))
        }
        O1Config::None | O1Config::MovingDensity { .. } => None,
    })
}

fn build_target(
    config: &ExperimentConfig,
    system: &SystemSpec,
    eig: &EigenSystem,
    path: Option<PathTrajectory>,
) -> Result<TargetSpec> {
    let grid = || match system {
        SystemSpec::GridAtom(a) => Ok(*a.grid()),
        SystemSpec::TwoLevel(_) => Err(Error::Config("density targets need a grid_atom system".into())),
    };
    let o1 = if let Some((shape, levels)) = coefficient_shape(config)? {
        O1::Follower {
            coefficients: CoeffTrajectory::new(shape, levels)?,
            eigensystem: eig.clone(),
        }
    } else if let O1Config::MovingDensity { sigma, .. } = config.target.o1 {
        O1::MovingDensity {
            path: path.expect("path is built for moving-density targets"),
            sigma,
            grid: grid()?,
        }
    } else {
        O1::None
    };
    let o2 = match config.target.o2 {
        O2Config::None => O2::None,
        O2Config::Projector { level } => O2::Projector(
            eig.states()
                .get(level)
                .cloned()
                .ok_or_else(|| Error::Config(format!("projector level {level} not computed")))?,
        ),
        O2Config::LocalDensity { x0, sigma } => O2::LocalDensity {
            x0,
            sigma,
            grid: grid()?,
        },
    };
    Ok(TargetSpec::new(o1, o2, config.target.exponent)?.with_density_norm(config.density_norm()?))
}

pub fn control_params(config: &ExperimentConfig, time: TimeGrid) -> Result<ControlParams> {
    let c = &config.control;
    let field = ControlField::constant(time, 1, c.initial_field)?;
    let mut params = ControlParams::new(c.alpha, field).with_mixing(c.eta, c.gamma);
    params.max_iterations = c.max_iterations;
    params.threshold = c.threshold;
    params.feedback = config.feedback()?;
    params.storage = config.storage()?;
    params.memory_cap = c.memory_cap;
    params.monotonic_tolerance = c.monotonic_tolerance;
    params.validate()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn two_level_preset_builds() {
        let p = Problem::build(&presets::preset("tls-vshape").unwrap()).unwrap();
        assert_eq!(p.psi0.amplitudes()[0], Complex64::new(1.0, 0.0));
        assert_eq!(p.time.n_steps(), 40_000);
        assert_eq!(p.params.alpha, 0.05);
        assert!(p.path.is_none());
    }

    #[test]
    fn projector_level_extends_the_eigensystem() {
        let mut c = presets::preset("h1d-vshape-ci").unwrap();
        c.target.o2 = O2Config::Projector { level: 5 };
        assert_eq!(n_states_needed(&c), 6);
    }

    #[test]
    fn density_target_on_two_levels_is_a_config_error() {
        let mut c = presets::preset("tls-vshape").unwrap();
        c.target.o2 = O2Config::LocalDensity { x0: 1.0, sigma: 10.0 };
        assert!(matches!(Problem::build(&c), Err(Error::Config(_))));
    }
}
