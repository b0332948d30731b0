//! The built-in experiments.

use crate::config::{
    ControlConfig, ExperimentConfig, O1Config, O2Config, OutputConfig, ReferenceConfig,
    StorageConfig, SystemConfig, TargetConfig, TimeConfig,
};
use crate::error::{Error, Result};

pub const NAMES: [&str; 6] = [
    "tls-vshape",
    "tls-step",
    "h1d-vshape",
    "h1d-vshape-ci",
    "moving-density",
    "moving-density-ci",
];

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    Ok(match name {
        "tls-vshape" => two_level(name, O1Config::Vshape { levels: vec![0, 1] }),
        "tls-step" => {
            let mut c = two_level(
                name,
                O1Config::Step {
                    t_on: None,
                    t_off: None,
                    levels: vec![0, 1],
                },
            );
            // from 1e-4 the iteration sits near the field-free saddle
            // (gradient ∝ ε) for many iterations with |δJ| < threshold
            c.control.initial_field = 0.01;
            c
        }
        "h1d-vshape" => hydrogen(name, -150.0, 150.0, 2048, 400.0),
        "h1d-vshape-ci" => hydrogen(name, -75.0, 75.0, 512, 200.0),
        "moving-density" => moving_density(name, -150.0, 150.0, 2048),
        "moving-density-ci" => moving_density(name, -75.0, 75.0, 512),
        other => {
            return Err(Error::Config(format!(
                "unknown preset {other} ({})",
                NAMES.join(", ")
            )))
        }
    })
}

fn control(alpha: f64, threshold: f64, initial_field: f64) -> ControlConfig {
    ControlConfig {
        alpha,
        eta: 0.0,
        gamma: 1.0,
        max_iterations: 5000,
        threshold,
        initial_field,
        feedback: "implicit".into(),
        storage: StorageConfig::Named("auto".into()),
        memory_cap: tdoc_core::control::DEFAULT_MEMORY_CAP,
        monotonic_tolerance: tdoc_core::control::MONOTONIC_TOLERANCE,
    }
}

fn two_level(name: &str, o1: O1Config) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        system: SystemConfig::TwoLevel {
            ground_energy: tdoc_core::system::ATOM_GROUND_ENERGY,
            gap: tdoc_core::system::ATOM_GAP,
            dipole: tdoc_core::system::ATOM_DIPOLE,
        },
        time: TimeConfig {
            total: 400.0,
            dt: 0.01,
        },
        target: TargetConfig {
            o1,
            o2: O2Config::None,
            exponent: 1,
            density_norm: "fourth_root".into(),
        },
        control: control(0.05, 1e-8, 1e-4),
        reference: None,
        output: OutputConfig {
            stride: 100,
            ..OutputConfig::default()
        },
    }
}

fn grid(x_min: f64, x_max: f64, n_points: usize) -> SystemConfig {
    SystemConfig::GridAtom {
        x_min,
        x_max,
        n_points,
        softening: 1.0,
        mask_width: tdoc_core::mask::MaskFunction::DEFAULT_WIDTH,
        n_states: 4,
    }
}

fn hydrogen(name: &str, x_min: f64, x_max: f64, n_points: usize, total: f64) -> ExperimentConfig {
    let mut control = control(1.5, 1e-5, 1e-4);
    control.max_iterations = 200;
    ExperimentConfig {
        name: name.into(),
        system: grid(x_min, x_max, n_points),
        time: TimeConfig { total, dt: 0.005 },
        target: TargetConfig {
            o1: O1Config::Vshape { levels: vec![0, 1] },
            o2: O2Config::None,
            exponent: 1,
            density_norm: "fourth_root".into(),
        },
        control,
        reference: None,
        output: OutputConfig {
            stride: 200,
            ..OutputConfig::default()
        },
    }
}

fn moving_density(name: &str, x_min: f64, x_max: f64, n_points: usize) -> ExperimentConfig {
    let mut control = control(0.5, 1e-6, 1e-3);
    control.max_iterations = 1000;
    ExperimentConfig {
        name: name.into(),
        system: grid(x_min, x_max, n_points),
        time: TimeConfig {
            total: 100.0,
            dt: 0.005,
        },
        target: TargetConfig {
            o1: O1Config::MovingDensity {
                file: None,
                sigma: 10.0,
            },
            o2: O2Config::None,
            exponent: 1,
            density_norm: "fourth_root".into(),
        },
        control,
        reference: Some(ReferenceConfig {
            amplitude: 0.02,
            frequency: 0.395,
            envelope: "sin2".into(),
            file: None,
        }),
        output: OutputConfig {
            stride: 100,
            ..OutputConfig::default()
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_passes_its_own_checks() {
        for name in NAMES {
            let c = preset(name).unwrap();
            assert_eq!(c.name, name);
            assert!(c.check().is_empty(), "{name}: {:?}", c.check());
        }
    }

    #[test]
    fn unknown_preset_is_a_config_error() {
        assert!(matches!(preset("tls"), Err(Error::Config(_))));
    }
}
