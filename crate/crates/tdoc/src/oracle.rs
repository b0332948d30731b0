//! Brute-force references: dense matrix exponentials, finite-difference
//! gradients and the scalar inequality behind monotone convergence.

use nalgebra::{DMatrix, DVector};
use tdoc_core::control::ControlParams;
use tdoc_core::fft::Fft;
use tdoc_core::field::ControlField;
use tdoc_core::propagation::{propagate, FieldRule, Propagator};
use tdoc_core::state::QuantumState;
use tdoc_core::system::{GridAtom, SystemSpec, TwoLevelSystem};
use tdoc_core::target::{j1_value, TargetSpec};
use tdoc_core::Complex64;

use crate::error::{Error, Result};

/// Largest grid the dense oracle accepts.
pub const MAX_POINTS: usize = 128;
/// Per-step unitarity tolerance, `max |U†U - 1|`.
pub const UNITARITY_TOLERANCE: f64 = 1e-13;

/// Dense Hamiltonian with its eigendecomposition.
#[derive(Debug, Clone)]
pub struct DenseOracle {
    hamiltonian: DMatrix<Complex64>,
    values: DVector<f64>,
    vectors: DMatrix<Complex64>,
}

impl DenseOracle {
    /// Diagonalizes `h` after checking that it is Hermitian.
    pub fn new(h: DMatrix<Complex64>) -> Result<Self> {
        if !h.is_square() || h.nrows() == 0 {
            return Err(Error::Oracle("Hamiltonian must be a non-empty square matrix".into()));
        }
        let scale = h.iter().fold(1.0f64, |m, z| m.max(z.norm()));
        let asymmetry = (&h - h.adjoint()).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        if asymmetry > 1e-12 * scale {
            return Err(Error::Oracle(format!(
                "Hamiltonian is not Hermitian (max |H - H†| = {asymmetry:.3e})"
            )));
        }
        let eig = h.clone().symmetric_eigen();
        Ok(Self {
            hamiltonian: h,
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
        })
    }

    /// `[[E0, -P ε], [-P ε, E1]]`.
    pub fn two_level(system: &TwoLevelSystem, field: f64) -> Result<Self> {
        let h = system.hamiltonian(field);
        Self::new(DMatrix::from_fn(2, 2, |i, j| Complex64::new(h[i][j], 0.0)))
    }

    /// `T + V - x ε` with the spectral kinetic matrix, i.e. the operator the
    /// split-operator step approximates. The absorbing mask is ignored.
    pub fn grid(atom: &GridAtom, field: f64) -> Result<Self> {
        let n = atom.grid().n_points();
        if n > MAX_POINTS {
            return Err(Error::Oracle(format!(
                "dense oracle is limited to {MAX_POINTS} points (got {n})"
            )));
        }
        let fft = Fft::new(n)?;
        let k = atom.grid().wave_numbers();
        let mut h = DMatrix::zeros(n, n);
        for l in 0..n {
            let mut col = vec![Complex64::new(0.0, 0.0); n];
            col[l] = Complex64::new(1.0, 0.0);
            fft.forward(&mut col);
            for (z, k) in col.iter_mut().zip(&k) {
                *z *= 0.5 * k * k;
            }
            fft.inverse(&mut col);
            for (j, z) in col.into_iter().enumerate() {
                h[(j, l)] = z;
            }
        }
        // the FFT round trip leaves ~1e-16 relative asymmetry
        let h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
        let mut h = h;
        for j in 0..n {
            h[(j, j)] += atom.potential()[j] - atom.dipole()[j] * field;
        }
        Self::new(h)
    }

    pub fn for_system(system: &SystemSpec, field: f64) -> Result<Self> {
        match system {
            SystemSpec::TwoLevel(s) => Self::two_level(s, field),
            SystemSpec::GridAtom(a) => Self::grid(a, field),
        }
    }

    pub fn hamiltonian(&self) -> &DMatrix<Complex64> {
        &self.hamiltonian
    }

    /// Eigenvalues, ascending.
    pub fn energies(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.values.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    /// `exp(-i H dt)`, checked for unitarity.
    pub fn propagator(&self, dt: f64) -> Result<DMatrix<Complex64>> {
        let phases = DMatrix::from_diagonal(&self.values.map(|e| Complex64::from_polar(1.0, -e * dt)));
        let u = &self.vectors * phases * self.vectors.adjoint();
        let n = u.nrows();
        let defect = (u.adjoint() * &u - DMatrix::identity(n, n))
            .iter()
            .fold(0.0f64, |m, z| m.max(z.norm()));
        if defect > UNITARITY_TOLERANCE {
            return Err(Error::Oracle(format!("propagator not unitary: {defect:.3e}")));
        }
        Ok(u)
    }

    /// Exact `exp(-i H dt) ψ`.
    pub fn step(&self, psi: &QuantumState, dt: f64) -> Result<QuantumState> {
        if psi.len() != self.hamiltonian.nrows() {
            return Err(Error::Oracle(format!(
                "state has {} amplitudes, Hamiltonian is {}×{}",
                psi.len(),
                self.hamiltonian.nrows(),
                self.hamiltonian.nrows()
            )));
        }
        let u = self.propagator(dt)?;
        let out = u * DVector::from_column_slice(psi.amplitudes());
        Ok(QuantumState::new(out.iter().copied().collect(), psi.basis()).with_time(psi.time() + dt))
    }
}

/// `exp(-i H dt) ψ` for a dense `H`.
pub fn oracle_step(psi: &QuantumState, h: &DenseOracle, dt: f64) -> Result<QuantumState> {
    h.step(psi, dt)
}

/// Propagates `psi0` with the dense oracle under a piecewise-constant field.
pub fn oracle_propagate(
    system: &SystemSpec,
    psi0: &QuantumState,
    field: &ControlField,
) -> Result<QuantumState> {
    let time = field.time_grid();
    let mut psi = psi0.clone();
    let mut cached: Option<(f64, DMatrix<Complex64>)> = None;
    for i in 0..time.n_steps() {
        let e = field.step_value(i);
        let u = match &cached {
            Some((f, u)) if *f == e => u.clone(),
            _ => DenseOracle::for_system(system, e)?.propagator(time.dt())?,
        };
        let out = &u * DVector::from_column_slice(psi.amplitudes());
        psi = QuantumState::new(out.iter().copied().collect(), psi.basis());
        cached = Some((e, u));
    }
    psi.set_time(time.total_time());
    Ok(psi)
}

/// `J = J1 + J2` from plain forward propagations, independent of the
/// optimizer's sweeps.
#[derive(Debug, Clone)]
pub struct Functional {
    pub system: SystemSpec,
    pub target: TargetSpec,
    pub psi0: QuantumState,
    pub alpha: f64,
}

impl Functional {
    pub fn value(&self, field: &ControlField) -> Result<f64> {
        let time = field.time_grid();
        let mut propagator = Propagator::new(&self.system, time.dt())?;
        let trajectory = propagate(&self.psi0, FieldRule::Fixed(field), &mut propagator, time, 1)?;
        let j1 = j1_value(&self.target, &trajectory)?;
        Ok(j1 - self.alpha * field.fluence())
    }

    /// `(J[ε + h e_i] - J[ε - h e_i]) / 2h` for the value held on step `i`
    /// of component `component`.
    pub fn fd_gradient(&self, field: &ControlField, i: usize, component: usize, h: f64) -> Result<f64> {
        if !(1e-6..=1e-3).contains(&h) {
            return Err(Error::Oracle(format!("perturbation {h} outside [1e-6, 1e-3]")));
        }
        if component >= field.n_components() || i >= field.time_grid().n_steps() {
            return Err(Error::Oracle(format!("no sample ({i}, {component})")));
        }
        let shifted = |sign: f64| {
            let mut f = field.clone();
            f.set_step_value(i, field.step_value(i) + sign * h);
            self.value(&f)
        };
        Ok((shifted(1.0)? - shifted(-1.0)?) / (2.0 * h))
    }
}

/// [`Functional::fd_gradient`] for a problem given by its parts.
pub fn fd_gradient(
    system: &SystemSpec,
    target: &TargetSpec,
    psi0: &QuantumState,
    params: &ControlParams,
    i: usize,
    component: usize,
    h: f64,
) -> Result<f64> {
    Functional {
        system: system.clone(),
        target: target.clone(),
        psi0: psi0.clone(),
        alpha: params.alpha,
    }
    .fd_gradient(&params.initial_field, i, component, h)
}

/// `aⁿ + (n-1)bⁿ - n b^{n-1} a`, non-negative for `a, b ≥ 0`.
pub fn appendix_inequality(a: f64, b: f64, n: u32) -> Result<f64> {
    if !(a >= 0.0 && b >= 0.0) || n == 0 {
        return Err(Error::Oracle(format!(
            "need a, b ≥ 0 and n ≥ 1 (got a = {a}, b = {b}, n = {n})"
        )));
    }
    let n_f = f64::from(n);
    let value = a.powi(n as i32) + (n_f - 1.0) * b.powi(n as i32) - n_f * b.powi(n as i32 - 1) * a;
    let scale = a.max(b).powi(n as i32).max(1.0);
    assert!(value >= -1e-12 * scale, "inequality violated: {value} at ({a}, {b}, {n})");
    Ok(value.max(0.0))
}

/// `f(y) = yⁿ - n y + n - 1`, the reduced form of the inequality for
/// `a = y b`.
pub fn reduced_inequality(y: f64, n: u32) -> f64 {
    let n_f = f64::from(n);
    y.powi(n as i32) - n_f * y + n_f - 1.0
}
