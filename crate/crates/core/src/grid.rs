//! Spatial and temporal meshes.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // inherent methods shadow it once std is linked
use num_traits::Float;

use crate::{Error, Result};

/// Uniform periodic grid `x_j = x_min + j·dx`, `j = 0..n_points`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n_points: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if !n_points.is_power_of_two() || n_points < 2 {
            return Err(Error::InvalidGrid(format!(
                "n_points = {n_points} must be a power of two"
            )));
        }
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "empty extent [{x_min}, {x_max}]"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            n_points,
        })
    }

    /// Default grid for the soft-Coulomb atom: [-150, 150] a.u., 2048 points.
    pub fn atom_default() -> Self {
        Self::new(-150.0, 150.0, 2048).expect("valid default grid")
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_points as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx()
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.x(j)).collect()
    }

    /// Angular wave numbers in FFT order (`0, dk, …, -dk`); the Nyquist
    /// entry carries `-π/dx`.
    pub fn wave_numbers(&self) -> Vec<f64> {
        let n = self.n_points;
        let dk = 2.0 * PI / (n as f64 * self.dx());
        (0..n)
            .map(|j| {
                if j < n / 2 {
                    j as f64 * dk
                } else {
                    (j as f64 - n as f64) * dk
                }
            })
            .collect()
    }
}

/// Uniform time mesh `t_i = i·dt`, `i = 0..=n_steps`, with `T = n_steps·dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidGrid(format!("time step {dt} must be positive")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidGrid("n_steps must be positive".into()));
        }
        Ok(Self { dt, n_steps })
    }

    /// Builds the mesh for a total duration, failing unless `total / dt` is
    /// an integer to 1e-9 relative accuracy.
    pub fn from_duration(total: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !(total > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "duration {total} and step {dt} must be positive"
            )));
        }
        let ratio = total / dt;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "T = {total} is not an integer multiple of dt = {dt}"
            )));
        }
        Self::new(dt, n as usize)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn total_time(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    /// Composite trapezoid weight of mesh point `i` (in units of `dt`).
    pub fn trapezoid_weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.n_steps {
            0.5
        } else {
            1.0
        }
    }
}
