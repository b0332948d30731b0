//! Time-sampled control fields.

use alloc::vec;
use alloc::vec::Vec;

use crate::grid::TimeGrid;
use crate::{Error, Result};

/// Electric field with `n_steps + 1` samples per polarization component.
///
/// Sample `i < n_steps` is the value held over the step `[t_i, t_{i+1})`;
/// the trailing sample repeats the last step value. Fields built from a
/// continuous function sample it at the step midpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    samples: Vec<f64>,
    n_components: usize,
    time: TimeGrid,
}

impl ControlField {
    pub fn constant(time: TimeGrid, n_components: usize, value: f64) -> Result<Self> {
        check_components(n_components)?;
        Ok(Self {
            samples: vec![value; (time.n_steps() + 1) * n_components],
            n_components,
            time,
        })
    }

    /// Single-component field sampled from `f` at step midpoints.
    pub fn from_fn(time: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        let n = time.n_steps();
        let dt = time.dt();
        let mut samples: Vec<f64> = (0..n).map(|i| f((i as f64 + 0.5) * dt)).collect();
        samples.push(samples[n - 1]);
        Self {
            samples,
            n_components: 1,
            time,
        }
    }

    /// Wraps raw samples (row-major, `(n_steps + 1) × n_components`).
    pub fn from_samples(time: TimeGrid, n_components: usize, samples: Vec<f64>) -> Result<Self> {
        check_components(n_components)?;
        let expected = (time.n_steps() + 1) * n_components;
        if samples.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                found: samples.len(),
            });
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("field samples must be finite".into()));
        }
        Ok(Self {
            samples,
            n_components,
            time,
        })
    }

    pub fn time_grid(&self) -> TimeGrid {
        self.time
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample(&self, i: usize, component: usize) -> f64 {
        self.samples[i * self.n_components + component]
    }

    /// Value acting over step `i`.
    pub fn step_value(&self, i: usize) -> f64 {
        self.sample(i, 0)
    }

    /// Sets the value of step `i` (component 0); the trailing duplicate
    /// follows the last step.
    pub fn set_step_value(&mut self, i: usize, value: f64) {
        let nc = self.n_components;
        self.samples[i * nc] = value;
        if i + 1 == self.time.n_steps() {
            self.samples[(i + 1) * nc] = value;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `∫ |ε(t)|² dt` of the piecewise-constant field.
    pub fn fluence(&self) -> f64 {
        let nc = self.n_components;
        self.samples[..self.time.n_steps() * nc]
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            * self.time.dt()
    }

    /// `∫ |ε(t) - other(t)|² dt`.
    pub fn distance_sqr(&self, other: &ControlField) -> f64 {
        let len = self.time.n_steps() * self.n_components;
        self.samples[..len]
            .iter()
            .zip(&other.samples[..len])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            * self.time.dt()
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|v| v.is_finite())
    }
}

fn check_components(n: usize) -> Result<()> {
    if n == 1 || n == 3 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(alloc::format!(
            "field must have 1 or 3 components, got {n}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_sampling() {
        let tg = TimeGrid::new(0.5, 4).unwrap();
        let f = ControlField::from_fn(tg, |t| t);
        assert_eq!(f.samples(), &[0.25, 0.75, 1.25, 1.75, 1.75]);
    }

    #[test]
    fn fluence_of_constant_field() {
        let tg = TimeGrid::new(0.01, 1000).unwrap();
        let f = ControlField::constant(tg, 1, 0.2).unwrap();
        assert!((f.fluence() - 0.04 * 10.0).abs() < 1e-12);
    }

    #[test]
    fn trailing_sample_tracks_last_step() {
        let tg = TimeGrid::new(0.1, 3).unwrap();
        let mut f = ControlField::constant(tg, 1, 0.0).unwrap();
        f.set_step_value(2, 4.0);
        assert_eq!(f.samples(), &[0.0, 0.0, 4.0, 4.0]);
    }

    #[test]
    fn validation() {
        let tg = TimeGrid::new(0.1, 3).unwrap();
        assert!(ControlField::constant(tg, 2, 0.0).is_err());
        assert!(ControlField::from_samples(tg, 1, vec![0.0; 3]).is_err());
        assert!(ControlField::from_samples(tg, 1, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
    }
}
