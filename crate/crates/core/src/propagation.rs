//! Time evolution: exact 2×2 steps, second-order split-operator steps on the
//! grid, the inhomogeneous adjoint step and whole-trajectory propagation.
//!
//! Both propagators expose the same step interface through [`Propagator`].
//! Besides plain forward and adjoint steps it supports the coupled step used
//! by the optimizer: [`Propagator::couple`] caches the half-propagated pair
//! `(χ_{i+1}, ψ_i)`, after which `g(x) = ⟨χ_{i+1}|U(x)|ψ_i⟩` and its
//! difference quotient can be evaluated for any trial field `x` without
//! further transforms, and the step is completed with
//! [`Propagator::finish_forward`] or [`Propagator::finish_backward`].

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)] // inherent methods shadow it once std is linked
use num_traits::Float;

use crate::fft::Fft;
use crate::field::ControlField;
use crate::grid::TimeGrid;
use crate::linalg::GAUSS_LEGENDRE_2;
use crate::state::{Basis, QuantumState};
use crate::system::{GridAtom, SystemSpec, TwoLevelSystem};
use crate::{Error, Result};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Direction of an inhomogeneous step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `χ(t+dt) = U(χ(t) - dt·s)`.
    Forward,
    /// `χ(t) = U†χ(t+dt) + dt·s`, the exact inverse of `Forward`.
    Backward,
}

// ---------------------------------------------------------------------------
// Two-level system

type Mat2 = [[Complex64; 2]; 2];

fn apply2(m: &Mat2, v: &[Complex64]) -> [Complex64; 2] {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

fn apply2_adjoint(m: &Mat2, v: &[Complex64]) -> [Complex64; 2] {
    [
        m[0][0].conj() * v[0] + m[1][0].conj() * v[1],
        m[0][1].conj() * v[0] + m[1][1].conj() * v[1],
    ]
}

/// Closed-form `exp(-i H(ε) dt)` and its derivative with respect to `ε`.
///
/// With `H = a·1 + b_x σ_x + b_z σ_z`, `r = |b|`:
/// `U = e^{-i a dt} (cos(r dt) - i sin(r dt) (b·σ)/r)`.
fn two_level_phase(sys: &TwoLevelSystem, dt: f64) -> Complex64 {
    Complex64::from_polar(1.0, -0.5 * (sys.e0 + sys.e1) * dt)
}

/// `exp(-i H(ε) dt)` with the global phase supplied by the caller.
fn two_level_unitary(sys: &TwoLevelSystem, field: f64, dt: f64, phase: Complex64) -> Mat2 {
    let bz = 0.5 * (sys.e0 - sys.e1);
    let bx = -sys.dipole * field;
    // |b| ≥ |b_z| = ω/2 > 0, so no overflow/underflow care is needed
    let r = (bx * bx + bz * bz).sqrt();
    let (s, c) = (r * dt).sin_cos();
    let (sx, sz) = (s * bx / r, s * bz / r);
    let off = phase * Complex64::new(0.0, -sx);
    [
        [phase * Complex64::new(c, -sz), off],
        [off, phase * Complex64::new(c, sz)],
    ]
}

#[cfg(test)]
fn two_level_propagator(sys: &TwoLevelSystem, field: f64, dt: f64) -> (Mat2, Mat2) {
    let phase = two_level_phase(sys, dt);
    let u = two_level_unitary(sys, field, dt, phase);
    (u, two_level_derivative(sys, field, dt, phase))
}

/// `dU/dε` for [`two_level_unitary`].
fn two_level_derivative(sys: &TwoLevelSystem, field: f64, dt: f64, phase: Complex64) -> Mat2 {
    let bz = 0.5 * (sys.e0 - sys.e1);
    let bx = -sys.dipole * field;
    let r = (bx * bx + bz * bz).sqrt();
    let (nx, nz) = (bx / r, bz / r);
    let (s, c) = (r * dt).sin_cos();
    // r' = P² ε / r, n' = (b_x'/r - b_x r'/r², -b_z r'/r²), b_x' = -P
    let dr = sys.dipole * sys.dipole * field / r;
    let dtheta = dr * dt;
    let dnx = -sys.dipole / r - bx * dr / (r * r);
    let dnz = -bz * dr / (r * r);
    let diag_re = -s * dtheta;
    let nz_term = c * dtheta * nz + s * dnz;
    let nx_term = c * dtheta * nx + s * dnx;
    let off = phase * Complex64::new(0.0, -nx_term);
    [
        [phase * Complex64::new(diag_re, -nz_term), off],
        [off, phase * Complex64::new(diag_re, nz_term)],
    ]
}

/// Exact stepper for the two-level system.
#[derive(Debug, Clone)]
pub struct TwoLevelPropagator {
    system: TwoLevelSystem,
    dt: f64,
    chi: [Complex64; 2],
    psi: [Complex64; 2],
    reference: f64,
    coupling_ref: f64,
    phase: Complex64,
}

impl TwoLevelPropagator {
    pub fn new(system: TwoLevelSystem, dt: f64) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        Self {
            system,
            dt,
            chi: [zero; 2],
            psi: [zero; 2],
            reference: 0.0,
            coupling_ref: 0.0,
            phase: two_level_phase(&system, dt),
        }
    }

    /// `Re⟨χ|U(ε)|ψ⟩` for the cached pair.
    fn coupling(&self, field: f64) -> f64 {
        let w = apply2(&self.unitary(field), &self.psi);
        (self.chi[0].conj() * w[0] + self.chi[1].conj() * w[1]).re
    }

    fn unitary(&self, field: f64) -> Mat2 {
        two_level_unitary(&self.system, field, self.dt, self.phase)
    }

    fn derivative_coupling(&self, field: f64) -> f64 {
        let du = two_level_derivative(&self.system, field, self.dt, self.phase);
        let w = apply2(&du, &self.psi);
        (self.chi[0].conj() * w[0] + self.chi[1].conj() * w[1]).re
    }
}

/// `c ← exp(-i H(ε) dt) c` for a two-level state.
pub fn two_level_step(
    c: &QuantumState,
    system: &TwoLevelSystem,
    field: f64,
    dt: f64,
) -> Result<QuantumState> {
    if c.basis() != Basis::Levels || c.len() != 2 {
        return Err(Error::BasisMismatch);
    }
    let u = two_level_unitary(system, field, dt, two_level_phase(system, dt));
    let out = apply2(&u, c.amplitudes());
    Ok(QuantumState::new(out.to_vec(), Basis::Levels).with_time(c.time() + dt))
}

// ---------------------------------------------------------------------------
// Grid atom

/// Highest moment order kept in the series for the coupled-step slope.
const MOMENTS: usize = 14;
/// Largest `|μ (x - y) dt|` handled by the moment series (truncation
/// 0.5¹⁴/15! ≈ 5e-17 relative).
const SERIES_RADIUS: f64 = 0.5;

/// Second-order split-operator stepper
/// `U(ε) = M e^{-iT̂dt/2} e^{-i(V - xε)dt} e^{-iT̂dt/2}` with optional mask `M`.
#[derive(Debug, Clone)]
pub struct SplitOperator {
    fft: Fft,
    dt: f64,
    dx: f64,
    half_kinetic: Vec<Complex64>,
    potential_phase: Vec<Complex64>,
    dipole: Vec<f64>,
    mask: Option<Vec<f64>>,
    u: Vec<Complex64>,
    v: Vec<Complex64>,
    coupling: Vec<Complex64>,
    powers: Vec<Complex64>,
    reference_phase: Vec<Complex64>,
    moments: [Complex64; MOMENTS + 1],
    max_dipole: f64,
    reference: f64,
    fft_count: u64,
}

impl SplitOperator {
    pub fn new(atom: &GridAtom, dt: f64) -> Result<Self> {
        let grid = atom.grid();
        let fft = Fft::new(grid.n_points())?;
        let half_kinetic = grid
            .wave_numbers()
            .into_iter()
            .map(|k| Complex64::from_polar(1.0, -0.25 * k * k * dt))
            .collect();
        let potential_phase = atom
            .potential()
            .iter()
            .map(|&v| Complex64::from_polar(1.0, -v * dt))
            .collect();
        let n = grid.n_points();
        let zero = Complex64::new(0.0, 0.0);
        Ok(Self {
            fft,
            dt,
            dx: grid.dx(),
            half_kinetic,
            potential_phase,
            dipole: atom.dipole().to_vec(),
            mask: atom.mask().map(|m| m.values().to_vec()),
            u: vec![zero; n],
            v: vec![zero; n],
            coupling: vec![zero; n],
            powers: vec![zero; n],
            reference_phase: vec![zero; n],
            moments: [zero; MOMENTS + 1],
            max_dipole: atom.dipole().iter().fold(0.0, |m, x| m.max(x.abs())),
            reference: 0.0,
            fft_count: 0,
        })
    }

    pub fn fft_count(&self) -> u64 {
        self.fft_count
    }

    fn kinetic(&mut self, data: &mut [Complex64], adjoint: bool) {
        self.fft.forward(data);
        for (z, k) in data.iter_mut().zip(&self.half_kinetic) {
            *z *= if adjoint { k.conj() } else { *k };
        }
        self.fft.inverse(data);
        self.fft_count += 2;
    }

    fn potential(&self, data: &mut [Complex64], field: f64, adjoint: bool) {
        for ((z, p), &x) in data
            .iter_mut()
            .zip(&self.potential_phase)
            .zip(&self.dipole)
        {
            let f = p * Complex64::from_polar(1.0, x * field * self.dt);
            *z *= if adjoint { f.conj() } else { f };
        }
    }

    fn mask(&self, data: &mut [Complex64]) {
        if let Some(m) = &self.mask {
            for (z, &w) in data.iter_mut().zip(m) {
                *z *= w;
            }
        }
    }

    fn step(&mut self, psi: &mut [Complex64], field: f64) {
        self.kinetic(psi, false);
        self.potential(psi, field, false);
        self.kinetic(psi, false);
        self.mask(psi);
    }

    fn adjoint_step(&mut self, chi: &mut [Complex64], field: f64) {
        self.mask(chi);
        self.kinetic(chi, true);
        self.potential(chi, field, true);
        self.kinetic(chi, true);
    }

    fn couple(&mut self, chi_next: &[Complex64], psi: &[Complex64], reference: f64) {
        let mut u = core::mem::take(&mut self.u);
        let mut v = core::mem::take(&mut self.v);
        u.copy_from_slice(psi);
        self.kinetic(&mut u, false);
        v.copy_from_slice(chi_next);
        self.mask(&mut v);
        self.kinetic(&mut v, true);
        self.reference = reference;
        for j in 0..u.len() {
            let p = self.potential_phase[j]
                * Complex64::from_polar(1.0, self.dipole[j] * reference * self.dt);
            self.reference_phase[j] = p;
            self.coupling[j] = v[j].conj() * p * u[j] * self.dx;
        }
        // M_m = Σ_j a_j μ_j^m, one contiguous pass per order
        let mut w = core::mem::take(&mut self.powers);
        w.copy_from_slice(&self.coupling);
        let zero = Complex64::new(0.0, 0.0);
        self.moments[0] = zero;
        for m in 1..=MOMENTS {
            let mut acc = zero;
            for (z, &x) in w.iter_mut().zip(&self.dipole) {
                *z *= x;
                acc += *z;
            }
            self.moments[m] = acc;
        }
        self.powers = w;
        self.u = u;
        self.v = v;
    }

    /// `Re[g(x) - g(y)]/(x - y)` with `g(x) = Σ_j a_j e^{i μ_j (x-y) dt}`.
    fn slope(&self, x: f64) -> f64 {
        let delta = x - self.reference;
        let dt = self.dt;
        if self.max_dipole * delta.abs() * dt <= SERIES_RADIUS {
            // Σ_{m≥1} (i dt)^m δ^{m-1}/m! M_m
            let mut total = Complex64::new(0.0, 0.0);
            let mut coeff = I * dt;
            for m in 1..=MOMENTS {
                total += coeff * self.moments[m];
                coeff *= I * dt * delta / (m as f64 + 1.0);
            }
            total.re
        } else {
            self.coupling
                .iter()
                .zip(&self.dipole)
                .map(|(a, &mu)| {
                    let z = Complex64::from_polar(1.0, mu * delta * dt) - 1.0;
                    (a * z).re
                })
                .sum::<f64>()
                / delta
        }
    }

    /// Potential factor at `x`, reusing the phases cached by `couple` when
    /// `x` is the reference (bitwise the same numbers `potential` forms).
    fn potential_at(&self, data: &mut [Complex64], x: f64, adjoint: bool) {
        if x != self.reference {
            return self.potential(data, x, adjoint);
        }
        for (z, f) in data.iter_mut().zip(&self.reference_phase) {
            *z *= if adjoint { f.conj() } else { *f };
        }
    }

    fn finish_forward(&mut self, x: f64, out: &mut [Complex64]) {
        out.copy_from_slice(&self.u);
        self.potential_at(out, x, false);
        self.kinetic(out, false);
        self.mask(out);
    }

    fn finish_backward(&mut self, x: f64, out: &mut [Complex64]) {
        out.copy_from_slice(&self.v);
        self.potential_at(out, x, true);
        self.kinetic(out, true);
    }
}

/// One split-operator step of a grid state under a constant field sample.
pub fn spo_step(psi: &QuantumState, atom: &GridAtom, field: f64, dt: f64) -> Result<QuantumState> {
    if psi.basis() != atom.basis() || psi.len() != atom.grid().n_points() {
        return Err(Error::BasisMismatch);
    }
    let mut op = SplitOperator::new(atom, dt)?;
    let mut out = psi.clone();
    op.step(out.amplitudes_mut(), field);
    out.set_time(psi.time() + dt);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Unified interface

/// Stepper for either model system with a fixed time step.
#[derive(Debug, Clone)]
pub enum Propagator {
    TwoLevel(TwoLevelPropagator),
    Grid(SplitOperator),
}

impl Propagator {
    pub fn new(system: &SystemSpec, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("dt = {dt}")));
        }
        Ok(match system {
            SystemSpec::TwoLevel(s) => Propagator::TwoLevel(TwoLevelPropagator::new(*s, dt)),
            SystemSpec::GridAtom(a) => Propagator::Grid(SplitOperator::new(a, dt)?),
        })
    }

    pub fn dt(&self) -> f64 {
        match self {
            Propagator::TwoLevel(p) => p.dt,
            Propagator::Grid(p) => p.dt,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Propagator::TwoLevel(_) => 2,
            Propagator::Grid(p) => p.dipole.len(),
        }
    }

    pub fn basis(&self) -> Basis {
        match self {
            Propagator::TwoLevel(_) => Basis::Levels,
            Propagator::Grid(p) => Basis::Grid { dx: p.dx },
        }
    }

    /// Number of FFTs performed so far (zero for the two-level system).
    pub fn fft_count(&self) -> u64 {
        match self {
            Propagator::TwoLevel(_) => 0,
            Propagator::Grid(p) => p.fft_count,
        }
    }

    /// `ψ ← U(ε) ψ`.
    pub fn step(&mut self, psi: &mut [Complex64], field: f64) {
        match self {
            Propagator::TwoLevel(p) => {
                let out = apply2(&p.unitary(field), psi);
                psi.copy_from_slice(&out);
            }
            Propagator::Grid(p) => p.step(psi, field),
        }
    }

    /// `χ ← U(ε)† χ`.
    pub fn adjoint_step(&mut self, chi: &mut [Complex64], field: f64) {
        match self {
            Propagator::TwoLevel(p) => {
                let out = apply2_adjoint(&p.unitary(field), chi);
                chi.copy_from_slice(&out);
            }
            Propagator::Grid(p) => p.adjoint_step(chi, field),
        }
    }

    /// Caches the pair `(χ_{i+1}, ψ_i)` for a coupled step whose old field
    /// value is `reference`.
    pub fn couple(&mut self, chi_next: &[Complex64], psi: &[Complex64], reference: f64) {
        match self {
            Propagator::TwoLevel(p) => {
                p.chi.copy_from_slice(chi_next);
                p.psi.copy_from_slice(psi);
                p.reference = reference;
                p.coupling_ref = p.coupling(reference);
            }
            Propagator::Grid(p) => p.couple(chi_next, psi, reference),
        }
    }

    /// Difference quotient `Re[g(x) - g(y)]/(x - y)` of
    /// `g(x) = ⟨χ_{i+1}|U(x)|ψ_i⟩` around the cached reference `y`; at
    /// `x = y` it is the derivative `Re g'(y)`.
    pub fn slope(&self, x: f64) -> f64 {
        match self {
            Propagator::TwoLevel(p) => {
                let delta = x - p.reference;
                if delta == 0.0 {
                    return p.derivative_coupling(x);
                }
                // the direct quotient loses ~ε_mach/|P dt δ| relative; below
                // 1e-6 integrate g' instead (it varies on the scale 1/(P dt),
                // so two nodes are exact to ~(P dt δ)⁴)
                if (p.system.dipole * p.dt * delta).abs() >= 1e-6 {
                    (p.coupling(x) - p.coupling_ref) / delta
                } else {
                    GAUSS_LEGENDRE_2
                        .iter()
                        .map(|&(s, w)| w * p.derivative_coupling(p.reference + s * delta))
                        .sum()
                }
            }
            Propagator::Grid(p) => p.slope(x),
        }
    }

    /// Completes a coupled step forward: `out = U(x) ψ_i`.
    pub fn finish_forward(&mut self, x: f64, out: &mut [Complex64]) {
        match self {
            Propagator::TwoLevel(p) => {
                let r = apply2(&p.unitary(x), &p.psi);
                out.copy_from_slice(&r);
            }
            Propagator::Grid(p) => p.finish_forward(x, out),
        }
    }

    /// Completes a coupled step backward: `out = U(x)† χ_{i+1}`.
    pub fn finish_backward(&mut self, x: f64, out: &mut [Complex64]) {
        match self {
            Propagator::TwoLevel(p) => {
                let r = apply2_adjoint(&p.unitary(x), &p.chi);
                out.copy_from_slice(&r);
            }
            Propagator::Grid(p) => p.finish_backward(x, out),
        }
    }

    /// One step of the inhomogeneous equation with a source that already
    /// carries every scalar prefactor except `dt`.
    pub fn inhomogeneous_step(
        &mut self,
        chi: &mut [Complex64],
        source: &[Complex64],
        field: f64,
        direction: Direction,
    ) {
        let dt = self.dt();
        match direction {
            Direction::Forward => {
                for (c, s) in chi.iter_mut().zip(source) {
                    *c -= s * dt;
                }
                self.step(chi, field);
            }
            Direction::Backward => {
                self.adjoint_step(chi, field);
                for (c, s) in chi.iter_mut().zip(source) {
                    *c += s * dt;
                }
            }
        }
    }
}

/// State-level wrapper around [`Propagator::inhomogeneous_step`].
pub fn inhomogeneous_step(
    chi: &QuantumState,
    source: &QuantumState,
    propagator: &mut Propagator,
    field: f64,
    direction: Direction,
) -> Result<QuantumState> {
    if chi.basis() != propagator.basis()
        || source.basis() != propagator.basis()
        || chi.len() != propagator.dim()
        || source.len() != propagator.dim()
    {
        return Err(Error::BasisMismatch);
    }
    let mut out = chi.clone();
    propagator.inhomogeneous_step(out.amplitudes_mut(), source.amplitudes(), field, direction);
    let dt = propagator.dt();
    out.set_time(match direction {
        Direction::Forward => chi.time() + dt,
        Direction::Backward => chi.time() - dt,
    });
    Ok(out)
}

// ---------------------------------------------------------------------------
// Trajectories

/// How the field is obtained during a propagation.
pub enum FieldRule<'a> {
    /// Use step `i` of a stored field.
    Fixed(&'a ControlField),
    /// Evaluate the field from the state at the start of step `i`.
    Feedback(&'a mut dyn FnMut(usize, &[Complex64]) -> f64),
}

/// States recorded every `stride` steps, always including `t = 0` and `t = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    states: Vec<QuantumState>,
    stride: usize,
    time: TimeGrid,
    field: ControlField,
}

impl StateTrajectory {
    pub(crate) fn from_parts(
        states: Vec<QuantumState>,
        stride: usize,
        time: TimeGrid,
        field: ControlField,
    ) -> Self {
        Self {
            states,
            stride,
            time,
            field,
        }
    }

    pub fn states(&self) -> &[QuantumState] {
        &self.states
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn time_grid(&self) -> TimeGrid {
        self.time
    }

    /// Field values actually used for each step.
    pub fn field(&self) -> &ControlField {
        &self.field
    }

    pub fn final_state(&self) -> &QuantumState {
        self.states.last().expect("trajectory is never empty")
    }

    /// Mesh index of the `k`-th stored state.
    pub fn step_index(&self, k: usize) -> usize {
        k * self.stride
    }
}

/// Propagates `psi0` over the time grid and records every `stride`-th state.
///
/// Fails if `stride` does not divide the number of steps or if a non-finite
/// amplitude shows up (checked every 100 steps and at the end).
pub fn propagate(
    psi0: &QuantumState,
    mut rule: FieldRule<'_>,
    propagator: &mut Propagator,
    time: TimeGrid,
    stride: usize,
) -> Result<StateTrajectory> {
    let n = time.n_steps();
    if stride == 0 || n % stride != 0 {
        return Err(Error::InvalidParameter(alloc::format!(
            "stride {stride} must divide n_steps = {n}"
        )));
    }
    if psi0.basis() != propagator.basis() || psi0.len() != propagator.dim() {
        return Err(Error::BasisMismatch);
    }
    if (propagator.dt() - time.dt()).abs() > 1e-15 * time.dt() {
        return Err(Error::InvalidParameter(
            "propagator and time grid disagree on dt".into(),
        ));
    }
    let mut psi = psi0.clone().with_time(0.0);
    let mut states = Vec::with_capacity(n / stride + 1);
    states.push(psi.clone());
    let mut used = ControlField::constant(time, 1, 0.0)?;
    for i in 0..n {
        let field = match &mut rule {
            FieldRule::Fixed(f) => f.step_value(i),
            FieldRule::Feedback(f) => f(i, psi.amplitudes()),
        };
        used.set_step_value(i, field);
        propagator.step(psi.amplitudes_mut(), field);
        if ((i + 1) % 100 == 0 || i + 1 == n) && !psi.is_finite() {
            return Err(Error::NonFinite { step: i + 1 });
        }
        if (i + 1) % stride == 0 {
            psi.set_time(time.t(i + 1));
            states.push(psi.clone());
        }
    }
    Ok(StateTrajectory {
        states,
        stride,
        time,
        field: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::mask::MaskFunction;
    use crate::state::inner_product;
    use std::f64::consts::PI;

    fn small_atom() -> GridAtom {
        GridAtom::soft_coulomb(Grid::new(-16.0, 16.0, 64).unwrap(), 1.0)
    }

    fn wavepacket(grid: &Grid, x0: f64, k0: f64) -> QuantumState {
        let mut s = QuantumState::from_fn(grid, |x| {
            Complex64::from_polar((-(x - x0).powi(2) / 2.0).exp(), k0 * x)
        });
        s.normalize();
        s
    }

    #[test]
    fn two_level_field_free_is_pure_phase() {
        let sys = TwoLevelSystem::atom();
        let c = QuantumState::new(
            vec![Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)],
            Basis::Levels,
        );
        let out = two_level_step(&c, &sys, 0.0, 0.3).unwrap();
        let a = out.amplitudes();
        assert!((a[0] - c.amplitudes()[0] * Complex64::from_polar(1.0, -sys.e0 * 0.3)).norm() < 1e-15);
        assert!((a[1] - c.amplitudes()[1] * Complex64::from_polar(1.0, -sys.e1 * 0.3)).norm() < 1e-15);
    }

    #[test]
    fn two_level_matches_taylor_exponential() {
        // exp(-iH dt) by a long Taylor series of the 2×2 matrix
        let sys = TwoLevelSystem::atom();
        let field = 0.37;
        let dt = 0.7;
        let h = sys.hamiltonian(field);
        let mut term = [[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)], [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]];
        let mut sum = term;
        for k in 1..60 {
            let mut next = [[Complex64::new(0.0, 0.0); 2]; 2];
            for r in 0..2 {
                for c in 0..2 {
                    for m in 0..2 {
                        next[r][c] += term[r][m] * h[m][c] * (-I * dt / k as f64);
                    }
                }
            }
            term = next;
            for r in 0..2 {
                for c in 0..2 {
                    sum[r][c] += term[r][c];
                }
            }
        }
        let (u, _) = two_level_propagator(&sys, field, dt);
        for r in 0..2 {
            for c in 0..2 {
                assert!((u[r][c] - sum[r][c]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn two_level_derivative_matches_central_difference() {
        let sys = TwoLevelSystem::atom();
        let (h, dt, field) = (1e-5, 0.05, 0.3);
        let (_, du) = two_level_propagator(&sys, field, dt);
        let (up, _) = two_level_propagator(&sys, field + h, dt);
        let (um, _) = two_level_propagator(&sys, field - h, dt);
        for r in 0..2 {
            for c in 0..2 {
                let fd = (up[r][c] - um[r][c]) / (2.0 * h);
                assert!((fd - du[r][c]).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn two_level_norm_preserved() {
        let sys = TwoLevelSystem::atom();
        let mut c = QuantumState::new(
            vec![Complex64::new(0.6, 0.1), Complex64::new(-0.3, 0.2)],
            Basis::Levels,
        );
        c.normalize();
        for k in 0..1000 {
            c = two_level_step(&c, &sys, 0.2 * (k as f64 * 0.1).sin(), 0.01).unwrap();
        }
        assert!((c.norm_sqr() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn spo_is_unitary_without_mask() {
        let atom = small_atom();
        let mut psi = wavepacket(atom.grid(), 1.0, 0.5);
        let n0 = psi.norm_sqr();
        for _ in 0..10 {
            psi = spo_step(&psi, &atom, 0.3, 0.05).unwrap();
        }
        assert!((psi.norm_sqr() - n0).abs() < 1e-12);
    }

    #[test]
    fn spo_preserves_parity_field_free() {
        let atom = small_atom();
        let grid = *atom.grid();
        // even about x = 0: on this grid x_j = -x_{n-j}
        let mut psi = QuantumState::from_fn(&grid, |x| Complex64::new((-x * x / 3.0).exp(), 0.0));
        let mut prop = Propagator::new(&SystemSpec::GridAtom(atom), 0.05).unwrap();
        for _ in 0..200 {
            prop.step(psi.amplitudes_mut(), 0.0);
        }
        let a = psi.amplitudes();
        let n = a.len();
        for j in 1..n {
            assert!((a[j] - a[n - j]).norm() < 1e-12);
        }
    }

    #[test]
    fn inhomogeneous_zero_source_is_homogeneous() {
        let atom = small_atom();
        let sys = SystemSpec::GridAtom(atom.clone());
        let mut prop = Propagator::new(&sys, 0.02).unwrap();
        let chi = wavepacket(atom.grid(), -2.0, 1.0);
        let zero = QuantumState::zeros(chi.len(), chi.basis());
        let a = inhomogeneous_step(&chi, &zero, &mut prop, 0.1, Direction::Backward).unwrap();
        let mut b = chi.clone();
        prop.adjoint_step(b.amplitudes_mut(), 0.1);
        assert_eq!(a.amplitudes(), b.amplitudes());
    }

    #[test]
    fn inhomogeneous_step_is_affine() {
        let atom = small_atom();
        let sys = SystemSpec::GridAtom(atom.clone());
        let mut prop = Propagator::new(&sys, 0.02).unwrap();
        let chi = wavepacket(atom.grid(), 0.0, 0.0);
        let s1 = wavepacket(atom.grid(), 2.0, 0.3);
        let s2 = wavepacket(atom.grid(), -1.0, -0.7);
        let mut s12 = s1.clone();
        s12.add_scaled(Complex64::new(1.0, 0.0), &s2).unwrap();
        let zero = QuantumState::zeros(chi.len(), chi.basis());
        for dir in [Direction::Forward, Direction::Backward] {
            let a = inhomogeneous_step(&chi, &s12, &mut prop, 0.2, dir).unwrap();
            let b1 = inhomogeneous_step(&chi, &s1, &mut prop, 0.2, dir).unwrap();
            let b2 = inhomogeneous_step(&chi, &s2, &mut prop, 0.2, dir).unwrap();
            let h = inhomogeneous_step(&chi, &zero, &mut prop, 0.2, dir).unwrap();
            for j in 0..chi.len() {
                let lin = b1.amplitudes()[j] + b2.amplitudes()[j] - h.amplitudes()[j];
                assert!((a.amplitudes()[j] - lin).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_and_backward_inhomogeneous_steps_invert() {
        let atom = small_atom();
        let sys = SystemSpec::GridAtom(atom.clone());
        let mut prop = Propagator::new(&sys, 0.02).unwrap();
        let chi = wavepacket(atom.grid(), 0.5, 0.2);
        let s = wavepacket(atom.grid(), -1.0, 0.0);
        let fwd = inhomogeneous_step(&chi, &s, &mut prop, -0.3, Direction::Forward).unwrap();
        let back = inhomogeneous_step(&fwd, &s, &mut prop, -0.3, Direction::Backward).unwrap();
        for (a, b) in chi.amplitudes().iter().zip(back.amplitudes()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    fn coupled_pair(prop: &Propagator, grid: Option<&Grid>) -> (Vec<Complex64>, Vec<Complex64>) {
        match grid {
            Some(g) => (
                wavepacket(g, 1.0, 0.4).into_amplitudes(),
                wavepacket(g, -0.5, -0.2).into_amplitudes(),
            ),
            None => {
                let _ = prop;
                (
                    vec![Complex64::new(0.3, -0.2), Complex64::new(0.1, 0.5)],
                    vec![Complex64::new(0.8, 0.0), Complex64::new(0.0, 0.6)],
                )
            }
        }
    }

    fn g_direct(prop: &mut Propagator, chi: &[Complex64], psi: &[Complex64], x: f64, w: f64) -> Complex64 {
        let mut out = psi.to_vec();
        prop.step(&mut out, x);
        chi.iter().zip(&out).map(|(a, b)| a.conj() * b).sum::<Complex64>() * w
    }

    #[test]
    fn slope_matches_direct_difference_quotient() {
        let atom = small_atom();
        let grid = *atom.grid();
        let mask = MaskFunction::new(&grid, 4.0).unwrap();
        let systems = [
            (SystemSpec::TwoLevel(TwoLevelSystem::atom()), None, 1.0),
            (SystemSpec::GridAtom(atom.with_mask(mask)), Some(grid), grid.dx()),
        ];
        for (sys, g, w) in systems {
            let mut prop = Propagator::new(&sys, 0.05).unwrap();
            let (chi, psi) = coupled_pair(&prop, g.as_ref());
            let y = 0.12;
            for &x in &[0.12 + 0.05, 0.12 - 0.3, 3.0, 0.12 + 1e-3] {
                let gx = g_direct(&mut prop, &chi, &psi, x, w);
                let gy = g_direct(&mut prop, &chi, &psi, y, w);
                let direct = (gx - gy).re / (x - y);
                prop.couple(&chi, &psi, y);
                let s = prop.slope(x);
                assert!(
                    (s - direct).abs() < 1e-9 * (1.0 + direct.abs()),
                    "x = {x}: {s} vs {direct}"
                );
            }
            // derivative at the reference
            let h = 1e-5;
            let d = (g_direct(&mut prop, &chi, &psi, y + h, w) - g_direct(&mut prop, &chi, &psi, y - h, w)).re / (2.0 * h);
            prop.couple(&chi, &psi, y);
            assert!((prop.slope(y) - d).abs() < 1e-8);
        }
    }

    #[test]
    fn finish_steps_match_plain_steps() {
        let atom = small_atom();
        let grid = *atom.grid();
        let mask = MaskFunction::new(&grid, 4.0).unwrap();
        let sys = SystemSpec::GridAtom(atom.with_mask(mask));
        let mut prop = Propagator::new(&sys, 0.05).unwrap();
        let chi = wavepacket(&grid, 1.0, 0.4).into_amplitudes();
        let psi = wavepacket(&grid, -0.5, -0.2).into_amplitudes();
        prop.couple(&chi, &psi, 0.2);
        let mut f = vec![Complex64::new(0.0, 0.0); psi.len()];
        let mut b = f.clone();
        prop.finish_forward(0.7, &mut f);
        prop.finish_backward(0.7, &mut b);
        let mut f2 = psi.clone();
        prop.step(&mut f2, 0.7);
        let mut b2 = chi.clone();
        prop.adjoint_step(&mut b2, 0.7);
        for j in 0..psi.len() {
            assert!((f[j] - f2[j]).norm() < 1e-14);
            assert!((b[j] - b2[j]).norm() < 1e-14);
        }
    }

    #[test]
    fn adjoint_step_is_adjoint() {
        let atom = small_atom();
        let grid = *atom.grid();
        let mask = MaskFunction::new(&grid, 4.0).unwrap();
        let sys = SystemSpec::GridAtom(atom.with_mask(mask));
        let mut prop = Propagator::new(&sys, 0.05).unwrap();
        let a = wavepacket(&grid, 1.0, 0.4);
        let b = wavepacket(&grid, 12.0, -0.2);
        let mut ua = a.clone();
        prop.step(ua.amplitudes_mut(), 0.4);
        let mut ub = b.clone();
        prop.adjoint_step(ub.amplitudes_mut(), 0.4);
        let lhs = inner_product(&b, &ua).unwrap();
        let rhs = inner_product(&ub, &a).unwrap();
        assert!((lhs - rhs).norm() < 1e-14);
    }

    #[test]
    fn propagate_reversibility_and_stride() {
        let atom = small_atom();
        let grid = *atom.grid();
        let sys = SystemSpec::GridAtom(atom);
        let time = TimeGrid::new(0.05, 200).unwrap();
        let field = ControlField::from_fn(time, |t| 0.1 * (0.4 * t).sin());
        let mut prop = Propagator::new(&sys, 0.05).unwrap();
        let psi0 = wavepacket(&grid, 0.0, 0.0);
        let traj = propagate(&psi0, FieldRule::Fixed(&field), &mut prop, time, 10).unwrap();
        assert_eq!(traj.states().len(), 21);
        assert!((traj.final_state().time() - 10.0).abs() < 1e-12);
        let mut back = traj.final_state().clone();
        for i in (0..200).rev() {
            prop.adjoint_step(back.amplitudes_mut(), field.step_value(i));
        }
        for (a, b) in psi0.amplitudes().iter().zip(back.amplitudes()) {
            assert!((a - b).norm() < 1e-10);
        }
        assert!(propagate(&psi0, FieldRule::Fixed(&field), &mut prop, time, 7).is_err());
    }

    #[test]
    fn propagate_detects_non_finite() {
        let sys = SystemSpec::TwoLevel(TwoLevelSystem::atom());
        let time = TimeGrid::new(0.01, 300).unwrap();
        let mut prop = Propagator::new(&sys, 0.01).unwrap();
        let mut rule = |i: usize, _: &[Complex64]| if i == 150 { f64::NAN } else { 0.0 };
        let err = propagate(
            &QuantumState::level(2, 0),
            FieldRule::Feedback(&mut rule),
            &mut prop,
            time,
            1,
        )
        .unwrap_err();
        assert_eq!(err, Error::NonFinite { step: 200 });
    }

    #[test]
    fn resonant_rabi_transfer() {
        // constant-envelope resonant drive: population inversion at t = π/(P ε0)
        let sys = TwoLevelSystem::atom();
        let amp = 0.01;
        let t_pi = PI / (sys.dipole * amp);
        let run = |dt: f64| {
            let time = TimeGrid::from_duration((t_pi / dt).round() * dt, dt).unwrap();
            let field = ControlField::from_fn(time, |t| amp * (sys.gap() * t).cos());
            let mut prop = Propagator::new(&SystemSpec::TwoLevel(sys), dt).unwrap();
            let traj = propagate(&QuantumState::level(2, 0), FieldRule::Fixed(&field), &mut prop, time, time.n_steps()).unwrap();
            traj.final_state().amplitudes()[1].norm_sqr()
        };
        let coarse = run(0.05);
        let fine = run(0.005);
        assert!((coarse - fine).abs() < 1e-4);
        assert!(fine > 0.98, "{fine}");
    }
}
