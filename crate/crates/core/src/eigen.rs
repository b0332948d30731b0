//! Field-free eigenstates.
//!
//! Grid eigenstates are obtained in two stages. Imaginary-time split-operator
//! propagation with Gram–Schmidt after every step brings a block of trial
//! states close to the lowest eigenvectors; since the split factorization is
//! only accurate to `O(τ²)`, a block preconditioned Rayleigh–Ritz iteration
//! with the exact spectral Hamiltonian then drives the residuals
//! `‖H0ψ - Eψ‖` down to the requested tolerance.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)] // inherent methods shadow it once std is linked
use num_traits::Float;

use crate::fft::Fft;
use crate::linalg::symmetric_eigen;
use crate::state::{Basis, QuantumState};
use crate::system::{GridAtom, SystemSpec, TwoLevelSystem};
use crate::{Error, Result};

/// Orthonormal eigenstates with their energies, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    states: Vec<QuantumState>,
    energies: Vec<f64>,
}

impl EigenSystem {
    pub fn new(states: Vec<QuantumState>, energies: Vec<f64>) -> Result<Self> {
        if states.len() != energies.len() || states.is_empty() {
            return Err(Error::InvalidParameter(
                "eigensystem needs one energy per state".into(),
            ));
        }
        Ok(Self { states, energies })
    }

    pub fn two_level(system: &TwoLevelSystem) -> Self {
        Self {
            states: vec![QuantumState::level(2, 0), QuantumState::level(2, 1)],
            energies: vec![system.e0, system.e1],
        }
    }

    pub fn states(&self) -> &[QuantumState] {
        &self.states
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn basis(&self) -> Basis {
        self.states[0].basis()
    }
}

/// Tuning knobs of the grid eigensolver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    pub imaginary_dt: f64,
    /// Stop imaginary time once every energy changes less than this per step.
    pub energy_tolerance: f64,
    pub max_imaginary_steps: usize,
    /// Required `‖H0ψ - Eψ‖` for every returned state.
    pub residual_tolerance: f64,
    pub max_refinement_iterations: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            imaginary_dt: 0.05,
            energy_tolerance: 1e-12,
            max_imaginary_steps: 4000,
            residual_tolerance: 1e-6,
            max_refinement_iterations: 400,
        }
    }
}

/// Lowest `n_states` eigenstates of the field-free Hamiltonian.
pub fn compute_eigensystem(system: &SystemSpec, n_states: usize) -> Result<EigenSystem> {
    compute_eigensystem_with(system, n_states, EigenOptions::default())
}

pub fn compute_eigensystem_with(
    system: &SystemSpec,
    n_states: usize,
    options: EigenOptions,
) -> Result<EigenSystem> {
    if n_states == 0 {
        return Err(Error::InvalidParameter("n_states must be positive".into()));
    }
    match system {
        SystemSpec::TwoLevel(s) => {
            if n_states > 2 {
                return Err(Error::InvalidParameter(
                    "a two-level system has only two states".into(),
                ));
            }
            let full = EigenSystem::two_level(s);
            Ok(EigenSystem {
                states: full.states[..n_states].to_vec(),
                energies: full.energies[..n_states].to_vec(),
            })
        }
        SystemSpec::GridAtom(atom) => GridSolver::new(atom)?.solve(n_states, options),
    }
}

struct GridSolver<'a> {
    atom: &'a GridAtom,
    fft: Fft,
    kinetic: Vec<f64>,
    buffer: Vec<Complex64>,
}

impl<'a> GridSolver<'a> {
    fn new(atom: &'a GridAtom) -> Result<Self> {
        let n = atom.grid().n_points();
        Ok(Self {
            atom,
            fft: Fft::new(n)?,
            kinetic: atom
                .grid()
                .wave_numbers()
                .iter()
                .map(|k| 0.5 * k * k)
                .collect(),
            buffer: vec![Complex64::new(0.0, 0.0); n],
        })
    }

    fn apply_h(&mut self, psi: &[f64], out: &mut [f64]) {
        for (b, &p) in self.buffer.iter_mut().zip(psi) {
            *b = Complex64::new(p, 0.0);
        }
        self.fft.forward(&mut self.buffer);
        for (b, &t) in self.buffer.iter_mut().zip(&self.kinetic) {
            *b *= t;
        }
        self.fft.inverse(&mut self.buffer);
        for (((o, b), &p), &v) in out
            .iter_mut()
            .zip(&self.buffer)
            .zip(psi)
            .zip(self.atom.potential())
        {
            *o = b.re + v * p;
        }
    }

    fn kinetic_filter(&mut self, psi: &mut [f64], weight: impl Fn(f64) -> f64) {
        for (b, &p) in self.buffer.iter_mut().zip(psi.iter()) {
            *b = Complex64::new(p, 0.0);
        }
        self.fft.forward(&mut self.buffer);
        for (b, &t) in self.buffer.iter_mut().zip(&self.kinetic) {
            *b *= weight(t);
        }
        self.fft.inverse(&mut self.buffer);
        for (p, b) in psi.iter_mut().zip(&self.buffer) {
            *p = b.re;
        }
    }

    fn rayleigh(&mut self, psi: &[f64]) -> f64 {
        let mut h = vec![0.0; psi.len()];
        self.apply_h(psi, &mut h);
        dot(psi, &h)
    }

    fn solve(mut self, n_states: usize, options: EigenOptions) -> Result<EigenSystem> {
        let grid = *self.atom.grid();
        let n = grid.n_points();
        let block = n_states + 2;
        let positions = grid.positions();
        let center = 0.5 * (grid.x_min() + grid.x_max());
        let width = (0.05 * (grid.x_max() - grid.x_min())).max(2.0 * grid.dx());
        let mut vectors: Vec<Vec<f64>> = (0..block)
            .map(|k| {
                positions
                    .iter()
                    .map(|&x| {
                        let y = (x - center) / width;
                        y.powi(k as i32) * (-0.5 * y * y).exp()
                    })
                    .collect()
            })
            .collect();
        orthonormalize(&mut vectors, 0.0);

        // imaginary time
        let tau = options.imaginary_dt;
        let potential_decay: Vec<f64> = self.atom.potential().iter().map(|v| (-v * tau).exp()).collect();
        let check_every = 10;
        let mut energies = vec![f64::INFINITY; block];
        for step in 1..=options.max_imaginary_steps {
            for v in vectors.iter_mut() {
                self.kinetic_filter(v, |t| (-0.5 * t * tau).exp());
                for (p, d) in v.iter_mut().zip(&potential_decay) {
                    *p *= d;
                }
                self.kinetic_filter(v, |t| (-0.5 * t * tau).exp());
            }
            orthonormalize(&mut vectors, 0.0);
            if step % check_every == 0 {
                let fresh: Vec<f64> = vectors.clone().iter().map(|v| self.rayleigh(v)).collect();
                let change = fresh
                    .iter()
                    .zip(&energies)
                    .take(n_states)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                energies = fresh;
                if change < options.energy_tolerance * check_every as f64 {
                    break;
                }
            }
        }

        // Rayleigh–Ritz refinement with preconditioned residuals
        let target = options.residual_tolerance * 1e-3;
        let mut previous: Vec<Vec<f64>> = Vec::new();
        let mut residual;
        let mut iterations = 0;
        let mut hx: Vec<Vec<f64>> = vec![vec![0.0; n]; block];
        loop {
            for (v, h) in vectors.iter().zip(hx.iter_mut()) {
                self.apply_h(v, h);
            }
            let ritz: Vec<f64> = vectors.iter().zip(&hx).map(|(v, h)| dot(v, h)).collect();
            let residuals: Vec<Vec<f64>> = vectors
                .iter()
                .zip(&hx)
                .zip(&ritz)
                .map(|((v, h), &e)| h.iter().zip(v).map(|(a, b)| a - e * b).collect())
                .collect();
            residual = residuals
                .iter()
                .take(n_states)
                .map(|r| dot(r, r).sqrt())
                .fold(0.0, f64::max);
            energies = ritz;
            if residual <= target || iterations >= options.max_refinement_iterations {
                break;
            }
            iterations += 1;

            let mut basis = vectors.clone();
            for mut r in residuals {
                self.kinetic_filter(&mut r, |t| 1.0 / (t + 1.0));
                basis.push(r);
            }
            basis.extend(previous.iter().cloned());
            orthonormalize(&mut basis, 1e-12);
            let m = basis.len();
            let mut hb: Vec<Vec<f64>> = vec![vec![0.0; n]; m];
            for (b, h) in basis.iter().zip(hb.iter_mut()) {
                self.apply_h(b, h);
            }
            let mut projected = vec![0.0; m * m];
            for r in 0..m {
                for c in r..m {
                    let value = 0.5 * (dot(&basis[r], &hb[c]) + dot(&basis[c], &hb[r]));
                    projected[r * m + c] = value;
                    projected[c * m + r] = value;
                }
            }
            let (_, coeffs) = symmetric_eigen(&projected, m);
            let updated: Vec<Vec<f64>> = (0..block)
                .map(|col| {
                    let mut out = vec![0.0; n];
                    for (row, b) in basis.iter().enumerate() {
                        let c = coeffs[row * m + col];
                        for (o, x) in out.iter_mut().zip(b) {
                            *o += c * x;
                        }
                    }
                    out
                })
                .collect();
            // search direction: the part of the update outside the old block
            previous = updated
                .iter()
                .map(|u| {
                    let mut d = u.clone();
                    for v in &vectors {
                        let c = dot(v, u);
                        for (x, y) in d.iter_mut().zip(v) {
                            *x -= c * y;
                        }
                    }
                    d
                })
                .collect();
            vectors = updated;
            orthonormalize(&mut vectors, 0.0);
        }
        if residual > options.residual_tolerance {
            return Err(Error::NotConverged {
                iterations,
                residual,
            });
        }

        let scale = 1.0 / grid.dx().sqrt();
        let states = vectors
            .into_iter()
            .take(n_states)
            .map(|mut v| {
                let sign: f64 = v.iter().enumerate().map(|(j, x)| x * (j as f64 + 1.0)).sum();
                let s = if sign < 0.0 { -scale } else { scale };
                for x in v.iter_mut() {
                    *x *= s;
                }
                QuantumState::new(
                    v.into_iter().map(|x| Complex64::new(x, 0.0)).collect(),
                    Basis::Grid { dx: grid.dx() },
                )
            })
            .collect();
        energies.truncate(n_states);
        Ok(EigenSystem { states, energies })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Modified Gram–Schmidt (two passes); vectors whose norm collapses below
/// `drop_tolerance` after projection are removed.
fn orthonormalize(vectors: &mut Vec<Vec<f64>>, drop_tolerance: f64) {
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for mut v in vectors.drain(..) {
        let original = dot(&v, &v).sqrt();
        for _pass in 0..2 {
            for q in &kept {
                let c = dot(q, &v);
                for (x, y) in v.iter_mut().zip(q) {
                    *x -= c * y;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm <= drop_tolerance * original.max(f64::MIN_POSITIVE) || norm == 0.0 {
            continue;
        }
        for x in v.iter_mut() {
            *x /= norm;
        }
        kept.push(v);
    }
    *vectors = kept;
}
