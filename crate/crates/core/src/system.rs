//! Model systems: the two-level system and the one-dimensional grid atom.

use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)] // inherent methods shadow it once std is linked
use num_traits::Float;

use crate::fft::Fft;
use crate::grid::Grid;
use crate::mask::MaskFunction;
use crate::state::{raw_inner, Basis, QuantumState};
use crate::{Error, Result};

/// Lowest excitation energy of the soft-Coulomb atom, shared by the
/// two-level model.
pub const ATOM_GAP: f64 = 0.395;
/// Dipole matrix element `⟨1|x̂|0⟩` of the soft-Coulomb atom.
pub const ATOM_DIPOLE: f64 = 1.05;
/// Ground-state energy used to anchor the two-level energies.
pub const ATOM_GROUND_ENERGY: f64 = -0.6698;

/// Two levels with `H = [[E0, -P ε], [-P ε, E1]]` (length gauge, `μ = P σ_x`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelSystem {
    pub e0: f64,
    pub e1: f64,
    pub dipole: f64,
}

impl TwoLevelSystem {
    pub fn new(e0: f64, e1: f64, dipole: f64) -> Result<Self> {
        if !(e1 > e0) {
            return Err(Error::InvalidParameter(alloc::format!(
                "two-level energies must satisfy E1 > E0 (got {e0}, {e1})"
            )));
        }
        Ok(Self { e0, e1, dipole })
    }

    /// The two lowest levels of the soft-Coulomb atom: `ω01 = 0.395`,
    /// `P01 = 1.05`, `E0 = -0.6698`.
    pub fn atom() -> Self {
        Self {
            e0: ATOM_GROUND_ENERGY,
            e1: ATOM_GROUND_ENERGY + ATOM_GAP,
            dipole: ATOM_DIPOLE,
        }
    }

    pub fn gap(&self) -> f64 {
        self.e1 - self.e0
    }

    /// Row-major Hamiltonian in the presence of the field `field`.
    pub fn hamiltonian(&self, field: f64) -> [[f64; 2]; 2] {
        let off = -self.dipole * field;
        [[self.e0, off], [off, self.e1]]
    }
}

/// One electron on a uniform grid with potential `V(x)` and dipole `μ(x) = x`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAtom {
    grid: Grid,
    potential: Vec<f64>,
    dipole: Vec<f64>,
    mask: Option<MaskFunction>,
}

impl GridAtom {
    pub fn new(grid: Grid, potential: impl Fn(f64) -> f64) -> Self {
        let positions = grid.positions();
        Self {
            potential: positions.iter().map(|&x| potential(x)).collect(),
            dipole: positions,
            grid,
            mask: None,
        }
    }

    /// `V(x) = -1/√(x² + a²)`.
    pub fn soft_coulomb(grid: Grid, softening: f64) -> Self {
        let a2 = softening * softening;
        Self::new(grid, move |x| -1.0 / (x * x + a2).sqrt())
    }

    pub fn with_mask(mut self, mask: MaskFunction) -> Self {
        self.mask = Some(mask);
        self
    }

    pub fn without_mask(mut self) -> Self {
        self.mask = None;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn dipole(&self) -> &[f64] {
        &self.dipole
    }

    pub fn mask(&self) -> Option<&MaskFunction> {
        self.mask.as_ref()
    }

    pub fn basis(&self) -> Basis {
        Basis::Grid { dx: self.grid.dx() }
    }

    /// `H0 ψ` with the spectral kinetic energy `k²/2`.
    pub fn apply_h0(&self, fft: &Fft, psi: &[Complex64]) -> Vec<Complex64> {
        let mut kin = psi.to_vec();
        fft.forward(&mut kin);
        for (z, k) in kin.iter_mut().zip(self.grid.wave_numbers()) {
            *z *= 0.5 * k * k;
        }
        fft.inverse(&mut kin);
        kin.iter()
            .zip(psi)
            .zip(&self.potential)
            .map(|((t, p), v)| t + p * v)
            .collect()
    }
}

/// Either model system.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemSpec {
    TwoLevel(TwoLevelSystem),
    GridAtom(GridAtom),
}

impl SystemSpec {
    pub fn dim(&self) -> usize {
        match self {
            SystemSpec::TwoLevel(_) => 2,
            SystemSpec::GridAtom(a) => a.grid.n_points(),
        }
    }

    pub fn basis(&self) -> Basis {
        match self {
            SystemSpec::TwoLevel(_) => Basis::Levels,
            SystemSpec::GridAtom(a) => a.basis(),
        }
    }

    /// Number of field polarization components the system couples to.
    pub fn n_field_components(&self) -> usize {
        1
    }

    /// `⟨χ|μ̂|ψ⟩`.
    pub fn dipole_matrix_element(&self, chi: &QuantumState, psi: &QuantumState) -> Result<Complex64> {
        if chi.basis() != self.basis() || psi.basis() != self.basis() {
            return Err(Error::BasisMismatch);
        }
        if chi.len() != self.dim() || psi.len() != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                found: chi.len().min(psi.len()),
            });
        }
        let c = chi.amplitudes();
        let p = psi.amplitudes();
        Ok(match self {
            SystemSpec::TwoLevel(s) => (c[0].conj() * p[1] + c[1].conj() * p[0]) * s.dipole,
            SystemSpec::GridAtom(a) => {
                let weighted: Vec<Complex64> =
                    p.iter().zip(&a.dipole).map(|(z, &x)| z * x).collect();
                raw_inner(c, &weighted) * a.grid.dx()
            }
        })
    }
}
