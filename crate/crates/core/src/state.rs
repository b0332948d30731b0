//! Quantum states on a grid or in a finite level basis.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::eigen::EigenSystem;
use crate::grid::Grid;
use crate::{Error, Result};

/// Representation a state's amplitudes refer to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Basis {
    /// Point values on a uniform grid; inner products carry the weight `dx`.
    Grid { dx: f64 },
    /// Expansion coefficients in an orthonormal set of levels.
    Levels,
}

impl Basis {
    pub fn weight(&self) -> f64 {
        match *self {
            Basis::Grid { dx } => dx,
            Basis::Levels => 1.0,
        }
    }
}

/// Complex amplitude vector with its basis and time stamp.
///
/// Adjoint states use the same type without any normalization requirement.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: Vec<Complex64>,
    basis: Basis,
    time: f64,
}

impl QuantumState {
    pub fn new(amplitudes: Vec<Complex64>, basis: Basis) -> Self {
        Self {
            amplitudes,
            basis,
            time: 0.0,
        }
    }

    pub fn zeros(len: usize, basis: Basis) -> Self {
        Self::new(vec![Complex64::new(0.0, 0.0); len], basis)
    }

    /// Samples `f` on the grid.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> Complex64) -> Self {
        let amplitudes = (0..grid.n_points()).map(|j| f(grid.x(j))).collect();
        Self::new(amplitudes, Basis::Grid { dx: grid.dx() })
    }

    /// Unit vector `|level⟩` in a basis of `n_levels`.
    pub fn level(n_levels: usize, level: usize) -> Self {
        let mut s = Self::zeros(n_levels, Basis::Levels);
        s.amplitudes[level] = Complex64::new(1.0, 0.0);
        s
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, time: f64) {
        self.time = time;
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.basis.weight() * self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        num_traits::Float::sqrt(self.norm_sqr())
    }

    /// Rescales to unit norm; the zero state is left untouched.
    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.scale(Complex64::new(1.0 / n, 0.0));
        }
    }

    pub fn scale(&mut self, factor: Complex64) {
        for z in &mut self.amplitudes {
            *z *= factor;
        }
    }

    /// `self += factor · other`.
    pub fn add_scaled(&mut self, factor: Complex64, other: &QuantumState) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.amplitudes.iter_mut().zip(&other.amplitudes) {
            *a += factor * b;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.amplitudes
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    fn check_compatible(&self, other: &QuantumState) -> Result<()> {
        if self.basis != other.basis {
            return Err(Error::BasisMismatch);
        }
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(())
    }
}

/// `⟨a|b⟩`, conjugate-linear in `a`; grid states carry the weight `dx`.
pub fn inner_product(a: &QuantumState, b: &QuantumState) -> Result<Complex64> {
    a.check_compatible(b)?;
    Ok(raw_inner(&a.amplitudes, &b.amplitudes) * a.basis.weight())
}

pub(crate) fn raw_inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `⟨x̂⟩ = Σ x_j |ψ_j|² dx`.
pub fn expectation_position(psi: &QuantumState, grid: &Grid) -> Result<f64> {
    match psi.basis {
        Basis::Grid { dx } if dx == grid.dx() && psi.len() == grid.n_points() => Ok(psi
            .amplitudes
            .iter()
            .enumerate()
            .map(|(j, z)| grid.x(j) * z.norm_sqr())
            .sum::<f64>()
            * dx),
        _ => Err(Error::BasisMismatch),
    }
}

/// Level populations `p_n = |⟨n|ψ⟩|²`.
pub fn occupations(psi: &QuantumState, eig: &EigenSystem) -> Result<Vec<f64>> {
    eig.states()
        .iter()
        .map(|n| inner_product(n, psi).map(|c| c.norm_sqr()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn gaussian(grid: &Grid, center: f64, width: f64) -> QuantumState {
        let norm = (2.0 / (PI * width * width)).powf(0.25);
        QuantumState::from_fn(grid, |x| {
            Complex64::new(norm * (-(x - center).powi(2) / (width * width)).exp(), 0.0)
        })
    }

    #[test]
    fn normalized_gaussian_has_unit_norm() {
        let grid = Grid::new(-20.0, 20.0, 512).unwrap();
        let psi = gaussian(&grid, 0.3, 1.5);
        let ip = inner_product(&psi, &psi).unwrap();
        assert!((ip.re - 1.0).abs() < 1e-12);
        assert!(ip.im.abs() < 1e-15);
    }

    #[test]
    fn gaussian_first_moment() {
        let grid = Grid::new(-20.0, 20.0, 512).unwrap();
        let psi = gaussian(&grid, 1.7, 1.2);
        let x = expectation_position(&psi, &grid).unwrap();
        assert!((x - 1.7).abs() < 1e-6, "{x}");
    }

    #[test]
    fn translated_even_state_moves_by_shift() {
        let grid = Grid::new(-20.0, 20.0, 256).unwrap();
        let shift = 16.0 * grid.dx();
        let even = gaussian(&grid, 0.0, 1.0);
        assert!(expectation_position(&even, &grid).unwrap().abs() < 1e-8);
        let mut amps = even.amplitudes().to_vec();
        amps.rotate_right(16);
        let moved = QuantumState::new(amps, even.basis());
        let x = expectation_position(&moved, &grid).unwrap();
        assert!((x - shift).abs() < grid.dx());
    }

    #[test]
    fn basis_mismatch_is_an_error() {
        let grid = Grid::new(-4.0, 4.0, 8).unwrap();
        let a = QuantumState::zeros(8, Basis::Grid { dx: grid.dx() });
        let b = QuantumState::zeros(8, Basis::Levels);
        assert_eq!(inner_product(&a, &b), Err(Error::BasisMismatch));
        assert!(expectation_position(&b, &grid).is_err());
        let c = QuantumState::zeros(2, Basis::Levels);
        assert!(matches!(
            inner_product(&b, &c),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn level_states_are_orthonormal() {
        let a = QuantumState::level(3, 0);
        let b = QuantumState::level(3, 1);
        assert_eq!(inner_product(&a, &b).unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(inner_product(&a, &a).unwrap(), Complex64::new(1.0, 0.0));
    }

    fn arb_state(len: usize) -> impl Strategy<Value = QuantumState> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len).prop_map(|v| {
            QuantumState::new(
                v.into_iter().map(|(r, i)| Complex64::new(r, i)).collect(),
                Basis::Grid { dx: 0.25 },
            )
        })
    }

    proptest! {
        #[test]
        fn hermitian_symmetry(a in arb_state(16), b in arb_state(16)) {
            let ab = inner_product(&a, &b).unwrap();
            let ba = inner_product(&b, &a).unwrap();
            prop_assert!((ab - ba.conj()).norm() < 1e-14);
        }

        #[test]
        fn positivity(a in arb_state(16)) {
            let aa = inner_product(&a, &a).unwrap();
            prop_assert!(aa.re >= 0.0);
            prop_assert!(aa.im.abs() < 1e-15);
            if a.amplitudes().iter().any(|z| z.norm() > 0.0) {
                prop_assert!(aa.re > 0.0);
            }
        }
    }
}
