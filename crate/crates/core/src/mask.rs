//! Absorbing boundary mask.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // inherent methods shadow it once std is linked
use num_traits::Float;

use crate::grid::Grid;
use crate::state::{Basis, QuantumState};
use crate::{Error, Result};

/// Real multipliers in `[0, 1]`: 1 in the interior and
/// `cos^{1/8}(π d / 2w)` within distance `w` of either edge, where `d` is
/// the penetration depth into the boundary layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskFunction {
    values: Vec<f64>,
    boundary_width: f64,
}

impl MaskFunction {
    pub const DEFAULT_WIDTH: f64 = 20.0;
    const EXPONENT: f64 = 0.125;

    pub fn new(grid: &Grid, boundary_width: f64) -> Result<Self> {
        let extent = grid.x_max() - grid.x_min();
        if !(boundary_width > 0.0) || 2.0 * boundary_width >= extent {
            return Err(Error::InvalidParameter(alloc::format!(
                "mask width {boundary_width} must be positive and below half the grid extent"
            )));
        }
        let left = grid.x_min() + boundary_width;
        let right = grid.x_max() - boundary_width;
        let values = grid
            .positions()
            .into_iter()
            .map(|x| {
                let depth = if x < left {
                    left - x
                } else if x > right {
                    x - right
                } else {
                    return 1.0;
                };
                let c = (PI * depth / (2.0 * boundary_width)).cos().max(0.0);
                c.powf(Self::EXPONENT)
            })
            .collect();
        Ok(Self {
            values,
            boundary_width,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn boundary_width(&self) -> f64 {
        self.boundary_width
    }

    pub(crate) fn apply_in_place(&self, amplitudes: &mut [num_complex::Complex64]) {
        for (z, &m) in amplitudes.iter_mut().zip(&self.values) {
            *z *= m;
        }
    }
}

/// Pointwise multiplication by the mask.
pub fn apply_mask(psi: &QuantumState, mask: &MaskFunction) -> Result<QuantumState> {
    if !matches!(psi.basis(), Basis::Grid { .. }) {
        return Err(Error::BasisMismatch);
    }
    if psi.len() != mask.values.len() {
        return Err(Error::LengthMismatch {
            expected: mask.values.len(),
            found: psi.len(),
        });
    }
    let mut out = psi.clone();
    mask.apply_in_place(out.amplitudes_mut());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn grid() -> Grid {
        Grid::new(-50.0, 50.0, 256).unwrap()
    }

    #[test]
    fn profile_shape() {
        let g = grid();
        let m = MaskFunction::new(&g, 10.0).unwrap();
        let v = m.values();
        assert!(v.iter().all(|&x| (0.0..=1.0).contains(&x)));
        for (j, &x) in g.positions().iter().enumerate() {
            if x.abs() <= 40.0 {
                assert_eq!(v[j], 1.0);
            }
        }
        // non-increasing toward each edge
        let mid = g.n_points() / 2;
        assert!(v[..mid].windows(2).all(|w| w[0] <= w[1]));
        assert!(v[mid..].windows(2).all(|w| w[0] >= w[1]));
        // cos(π/2)^{1/8} in floating point
        assert!(v[0] < 1e-2);
    }

    #[test]
    fn interior_state_unchanged() {
        let g = grid();
        let m = MaskFunction::new(&g, 10.0).unwrap();
        let psi = QuantumState::from_fn(&g, |x| {
            Complex64::new(if x.abs() < 30.0 { (x * 0.1).cos() } else { 0.0 }, 0.0)
        });
        let out = apply_mask(&psi, &m).unwrap();
        for (a, b) in psi.amplitudes().iter().zip(out.amplitudes()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn boundary_gaussian_loses_norm() {
        let g = grid();
        let m = MaskFunction::new(&g, 10.0).unwrap();
        let psi = QuantumState::from_fn(&g, |x| Complex64::new((-(x - 45.0).powi(2)).exp(), 0.0));
        let out = apply_mask(&psi, &m).unwrap();
        assert!(out.norm_sqr() < psi.norm_sqr());
    }

    #[test]
    fn level_states_rejected() {
        let g = grid();
        let m = MaskFunction::new(&g, 10.0).unwrap();
        assert!(apply_mask(&QuantumState::level(2, 0), &m).is_err());
        assert!(MaskFunction::new(&g, 60.0).is_err());
    }
}
