//! The `(η, γ)` forward/backward iteration with immediate field feedback.
//!
//! Each iteration runs a backward sweep, which propagates the adjoint state
//! `χ` from `T` to 0 along the stored trajectory `Ψ^(k)` while building the
//! intermediate field `ε̃`, and a forward sweep, which propagates `Ψ^(k+1)`
//! while building `ε^(k+1)` from `χ` and the instantaneous state.
//!
//! The per-step feedback is
//! `x = (1 - w)·y + w·Re⟨χ_{i+1}|U(x) - U(y)|ψ_i⟩ / (α dt (x - y))`
//! with `(w, y) = (η, ε_i)` backward and `(γ, ε̃_i)` forward. As `dt → 0` the
//! difference quotient tends to `-Im⟨χ|μ̂|ψ⟩/α`, the continuous update; at
//! finite `dt` it makes the discrete functional obey
//!
//! ```text
//! J^(k+1) - J^(k) ≥ α(2/γ - 1)‖ε^(k+1) - ε̃‖² + α(2/η - 1)‖ε^(k) - ε̃‖²
//! ```
//!
//! exactly, absorbing mask included. [`FeedbackMode::Explicit`] evaluates
//! the quotient at `x = y` instead, which is cheaper but only monotone up to
//! `O(dt)` corrections.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::mem;

use num_complex::Complex64;
#[allow(unused_imports)] // inherent methods shadow it once std is linked
use num_traits::Float;

use crate::field::ControlField;
use crate::grid::TimeGrid;
use crate::propagation::{propagate, FieldRule, Propagator, StateTrajectory};
use crate::state::QuantumState;
use crate::system::SystemSpec;
use crate::target::{j1_value, TargetSpec};
use crate::{Error, Result};

/// Default cap on trajectory storage: 4 GiB.
pub const DEFAULT_MEMORY_CAP: u64 = 4 << 30;
/// `δJ` below `-MONOTONIC_TOLERANCE` counts as a monotonicity violation.
pub const MONOTONIC_TOLERANCE: f64 = 1e-9;

const BYTES_PER_AMPLITUDE: u64 = 16;
const MAX_SECANT: usize = 60;

/// How the feedback equation of a step is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeedbackMode {
    /// Solve the implicit step equation (secant iteration); exactly monotone.
    #[default]
    Implicit,
    /// Explicit estimate followed by one corrector evaluation.
    PredictorCorrector,
    /// One evaluation at the old field value.
    Explicit,
}

/// Trajectory storage policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Storage {
    /// Full storage when it fits under the memory cap, checkpoints otherwise.
    #[default]
    Auto,
    /// Keep every state of `Ψ` and `χ`.
    Full,
    /// Keep every `segment`-th state and recompute the rest on demand.
    Checkpointed { segment: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlParams {
    /// Penalty factor of `J2 = -α ∫ ε² dt`.
    pub alpha: f64,
    /// Mixing of the backward sweep.
    pub eta: f64,
    /// Mixing of the forward sweep.
    pub gamma: f64,
    pub max_iterations: usize,
    /// Stop once `|J^(k+1) - J^(k)|` drops below this.
    pub threshold: f64,
    pub initial_field: ControlField,
    pub feedback: FeedbackMode,
    pub storage: Storage,
    /// Bytes.
    pub memory_cap: u64,
    pub monotonic_tolerance: f64,
}

impl ControlParams {
    /// `η = γ = 1`, implicit feedback, automatic storage.
    pub fn new(alpha: f64, initial_field: ControlField) -> Self {
        Self {
            alpha,
            eta: 1.0,
            gamma: 1.0,
            max_iterations: 500,
            threshold: 1e-8,
            initial_field,
            feedback: FeedbackMode::Implicit,
            storage: Storage::Auto,
            memory_cap: DEFAULT_MEMORY_CAP,
            monotonic_tolerance: MONOTONIC_TOLERANCE,
        }
    }

    pub fn with_mixing(mut self, eta: f64, gamma: f64) -> Self {
        self.eta = eta;
        self.gamma = gamma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "α = {} must be positive",
                self.alpha
            )));
        }
        for (name, v) in [("η", self.eta), ("γ", self.gamma)] {
            if !(0.0..=2.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} = {v} outside [0, 2]")));
            }
        }
        if !(self.threshold >= 0.0) {
            return Err(Error::InvalidParameter("threshold must be non-negative".into()));
        }
        if let Storage::Checkpointed { segment: 0 } = self.storage {
            return Err(Error::InvalidParameter("checkpoint segment must be positive".into()));
        }
        if !self.initial_field.is_finite() {
            return Err(Error::InvalidParameter("initial field is not finite".into()));
        }
        Ok(())
    }
}

/// Bookkeeping of one iteration; `k = 0` is the initial propagation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IterationRecord {
    pub k: usize,
    pub j1: f64,
    pub j2: f64,
    pub j: f64,
    /// `J^(k) - J^(k-1)`; zero for `k = 0`.
    pub delta_j: f64,
    /// `∫ (ε^(k) - ε̃^(k-1))² dt`.
    pub change_next: f64,
    /// `∫ (ε^(k-1) - ε̃^(k-1))² dt`.
    pub change_tilde: f64,
    /// Lower bound on `delta_j` from the two field changes.
    pub predicted_increase: f64,
    /// `1 - ‖Ψ(T)‖²/‖Ψ(0)‖²`.
    pub norm_loss: f64,
    pub max_field: f64,
    /// Seconds since the optimizer was created, if a clock was supplied.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizationTrace {
    pub records: Vec<IterationRecord>,
    /// `(k, δJ)` for every iteration with `δJ < -tolerance`.
    pub monotonic_violations: Vec<(usize, f64)>,
}

impl OptimizationTrace {
    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    MaxIterations,
    MonotonicityAbort,
}

/// Field sample from the stationarity condition, `-Im⟨χ|μ̂|ψ⟩/α`.
pub fn field_from_adjoint(
    chi: &QuantumState,
    psi: &QuantumState,
    system: &SystemSpec,
    alpha: f64,
) -> Result<f64> {
    Ok(-system.dipole_matrix_element(chi, psi)?.im / alpha)
}

/// `ε̃ = (1 - η)ε - (η/α) Im⟨χ|μ̂|ψ⟩`.
pub fn update_field_tilde(
    field: f64,
    chi: &QuantumState,
    psi: &QuantumState,
    system: &SystemSpec,
    params: &ControlParams,
) -> Result<f64> {
    mix(field, params.eta, chi, psi, system, params.alpha)
}

/// `ε^(k+1) = (1 - γ)ε̃ - (γ/α) Im⟨χ|μ̂|ψ^(k+1)⟩`.
pub fn update_field_next(
    field_tilde: f64,
    chi: &QuantumState,
    psi_next: &QuantumState,
    system: &SystemSpec,
    params: &ControlParams,
) -> Result<f64> {
    mix(field_tilde, params.gamma, chi, psi_next, system, params.alpha)
}

fn mix(
    old: f64,
    w: f64,
    chi: &QuantumState,
    psi: &QuantumState,
    system: &SystemSpec,
    alpha: f64,
) -> Result<f64> {
    if w == 0.0 {
        return Ok(old);
    }
    Ok((1.0 - w) * old + w * field_from_adjoint(chi, psi, system, alpha)?)
}

/// `(J1, J2, J)` for a stored trajectory and its field.
pub fn functional_values(
    trajectory: &StateTrajectory,
    field: &ControlField,
    target: &TargetSpec,
    alpha: f64,
) -> Result<(f64, f64, f64)> {
    let j1 = j1_value(target, trajectory)?;
    let j2 = -alpha * field.fluence();
    Ok((j1, j2, j1 + j2))
}

/// Bytes held by trajectory storage for `n_steps` steps of `dim` amplitudes;
/// `segment = None` means full storage.
pub fn memory_estimate(dim: usize, n_steps: usize, segment: Option<usize>) -> u64 {
    let state = dim as u64 * BYTES_PER_AMPLITUDE;
    let fields = 3 * 8 * n_steps as u64;
    let n = n_steps as u64;
    match segment {
        None => 2 * (n + 1) * state + fields,
        Some(m) => {
            let m = (m.min(n_steps)) as u64;
            let segments = n.div_ceil(m);
            (3 * (segments + 1) + 2 * (m + 1)) * state + fields
        }
    }
}

/// Segment length the storage policy picks (`None`: full storage), or the
/// memory-cap error.
pub fn resolve_storage(dim: usize, n_steps: usize, params: &ControlParams) -> Result<Option<usize>> {
    let segment = match params.storage {
        Storage::Full => None,
        Storage::Checkpointed { segment } => Some(segment.min(n_steps)),
        Storage::Auto => {
            if memory_estimate(dim, n_steps, None) <= params.memory_cap {
                None
            } else {
                let m = (1.5 * n_steps as f64).sqrt().ceil() as usize;
                Some(m.clamp(1, n_steps))
            }
        }
    };
    let required = memory_estimate(dim, n_steps, segment);
    if required > params.memory_cap {
        return Err(Error::MemoryCap {
            required,
            cap: params.memory_cap,
        });
    }
    Ok(segment)
}

// ---------------------------------------------------------------------------
// Step kernels shared by the optimizer and the stand-alone sweeps.

struct Sweeper {
    propagator: Propagator,
    target: TargetSpec,
    time: TimeGrid,
    dim: usize,
    weight: f64,
    alpha: f64,
    mode: FeedbackMode,
    scratch: Vec<Complex64>,
}

impl Sweeper {
    fn new(system: &SystemSpec, target: TargetSpec, time: TimeGrid, params: &ControlParams) -> Result<Self> {
        params.validate()?;
        target.check_basis(system.basis(), system.dim())?;
        let propagator = Propagator::new(system, time.dt())?;
        Ok(Self {
            propagator,
            target,
            time,
            dim: system.dim(),
            weight: system.basis().weight(),
            alpha: params.alpha,
            mode: params.feedback,
            scratch: vec![Complex64::new(0.0, 0.0); system.dim()],
        })
    }

    fn n_steps(&self) -> usize {
        self.time.n_steps()
    }

    /// `χ += (dt·w_i/T)·n·b^{n-1}·O1(t_i)ψ_i`; returns `b_i = ⟨ψ_i|O1|ψ_i⟩`.
    fn add_source(&mut self, i: usize, psi: &[Complex64], chi: &mut [Complex64]) -> f64 {
        if !self.target.has_o1() {
            return 0.0;
        }
        let t = self.time.t(i);
        let b = self.target.apply_o1_into(t, psi, self.weight, &mut self.scratch);
        let n = self.target.exponent() as i32;
        let c = self.time.dt() * self.time.trapezoid_weight(i) / self.time.total_time()
            * n as f64
            * b.powi(n - 1);
        for (x, s) in chi.iter_mut().zip(&self.scratch) {
            *x += s * c;
        }
        b
    }

    /// `χ_N = n·a^{n-1}·O2ψ_N + (dt/2T)·n·b^{n-1}·O1ψ_N`.
    fn terminal(&mut self, psi: &[Complex64], chi: &mut [Complex64]) {
        chi.fill(Complex64::new(0.0, 0.0));
        let n_steps = self.n_steps();
        self.add_source(n_steps, psi, chi);
        if self.target.has_o2() {
            let a = self.target.apply_o2_into(psi, self.weight, &mut self.scratch);
            let n = self.target.exponent() as i32;
            let c = n as f64 * a.powi(n - 1);
            for (x, s) in chi.iter_mut().zip(&self.scratch) {
                *x += s * c;
            }
        }
    }

    /// Contribution `(dt·w_i/T)·b_iⁿ` of mesh point `i` to `J1`.
    fn j1_increment(&mut self, i: usize, psi: &[Complex64]) -> f64 {
        if !self.target.has_o1() {
            return 0.0;
        }
        let b = self
            .target
            .apply_o1_into(self.time.t(i), psi, self.weight, &mut self.scratch);
        self.time.dt() * self.time.trapezoid_weight(i) / self.time.total_time()
            * b.powi(self.target.exponent() as i32)
    }

    fn j1_final(&mut self, psi: &[Complex64]) -> f64 {
        if !self.target.has_o2() {
            return 0.0;
        }
        let a = self.target.apply_o2_into(psi, self.weight, &mut self.scratch);
        a.powi(self.target.exponent() as i32)
    }

    /// Solves the feedback equation of the coupled step set up by `couple`.
    fn solve(&self, y: f64, w: f64) -> f64 {
        if w == 0.0 {
            return y;
        }
        let scale = 1.0 / (self.alpha * self.time.dt());
        let f = |x: f64| self.propagator.slope(x) * scale;
        let explicit = (1.0 - w) * y + w * f(y);
        match self.mode {
            FeedbackMode::Explicit => explicit,
            FeedbackMode::PredictorCorrector => (1.0 - w) * y + w * f(explicit),
            FeedbackMode::Implicit => {
                let h = |x: f64| x - (1.0 - w) * y - w * f(x);
                let (mut x0, mut h0) = (y, y - explicit);
                if h0 == 0.0 {
                    return y;
                }
                let mut x1 = explicit;
                // the quotient carries ~ε_mach/|δ| noise, so stop at 2 ulp or
                // as soon as the steps stop shrinking
                let mut last_step = f64::INFINITY;
                for _ in 0..MAX_SECANT {
                    let h1 = h(x1);
                    if h1 == 0.0 || h1 == h0 {
                        return x1;
                    }
                    let x2 = x1 - h1 * (x1 - x0) / (h1 - h0);
                    if !x2.is_finite() {
                        break;
                    }
                    let step = (x2 - x1).abs();
                    if step >= last_step {
                        return x1;
                    }
                    (x0, h0, x1, last_step) = (x1, h1, x2, step);
                    if step <= 2.0 * f64::EPSILON * x2.abs().max(y.abs()) {
                        return x1;
                    }
                }
                // plain fixed-point iteration; a contraction for any sane dt
                let mut x = explicit;
                let mut last_step = f64::INFINITY;
                for _ in 0..200 {
                    let next = (1.0 - w) * y + w * f(x);
                    let step = (next - x).abs();
                    if step <= 2.0 * f64::EPSILON * next.abs() || step >= last_step {
                        return next;
                    }
                    (x, last_step) = (next, step);
                }
                x
            }
        }
    }

    /// Fixed-field propagation of `psi` rows `1..` from row 0; returns the
    /// accumulated `J1` increments of those rows.
    fn plain_forward(&mut self, a: usize, psi: &mut [Complex64], field: &[f64], with_j1: bool) -> Result<f64> {
        let d = self.dim;
        let rows = psi.len() / d;
        let mut j1 = 0.0;
        for r in 0..rows - 1 {
            let i = a + r;
            let (done, rest) = psi.split_at_mut((r + 1) * d);
            let next = &mut rest[..d];
            next.copy_from_slice(&done[r * d..]);
            self.propagator.step(next, field[i]);
            self.check_finite(i + 1, next)?;
            if with_j1 {
                j1 += self.j1_increment(i + 1, next);
            }
        }
        Ok(j1)
    }

    /// Backward sweep over rows `a..=b`; `chi` row `b - a` must hold `χ_b`.
    fn backward_segment(
        &mut self,
        a: usize,
        psi: &[Complex64],
        chi: &mut [Complex64],
        field: &[f64],
        tilde: &mut [f64],
        w: f64,
        mut slopes: Option<&mut [f64]>,
    ) {
        let d = self.dim;
        let rows = psi.len() / d;
        for r in (0..rows - 1).rev() {
            let i = a + r;
            let (lo, hi) = chi.split_at_mut((r + 1) * d);
            let chi_i = &mut lo[r * d..];
            let psi_i = &psi[r * d..(r + 1) * d];
            self.propagator.couple(&hi[..d], psi_i, field[i]);
            if let Some(s) = slopes.as_deref_mut() {
                s[i] = self.propagator.slope(field[i]);
            }
            let x = self.solve(field[i], w);
            tilde[i] = x;
            self.propagator.finish_backward(x, chi_i);
            self.add_source(i, psi_i, chi_i);
        }
    }

    /// Recomputes `χ` rows `1..b-a` from row `b - a` with the stored `ε̃`.
    fn recompute_chi(&mut self, a: usize, psi: &[Complex64], chi: &mut [Complex64], tilde: &[f64]) {
        let d = self.dim;
        let rows = psi.len() / d;
        for r in (1..rows - 1).rev() {
            let (lo, hi) = chi.split_at_mut((r + 1) * d);
            let chi_i = &mut lo[r * d..];
            chi_i.copy_from_slice(&hi[..d]);
            self.propagator.adjoint_step(chi_i, tilde[a + r]);
            self.add_source(a + r, &psi[r * d..(r + 1) * d], chi_i);
        }
    }

    /// Forward sweep from `cur = ψ'_a` using `χ` rows `a..=b`; leaves
    /// `ψ'_b` in `cur` and returns the `J1` increments of rows `a+1..=b`.
    #[allow(clippy::too_many_arguments)]
    fn forward_segment(
        &mut self,
        a: usize,
        cur: &mut [Complex64],
        chi: &[Complex64],
        tilde: &[f64],
        next_field: &mut [f64],
        w: f64,
        mut store: Option<&mut [Complex64]>,
    ) -> Result<f64> {
        let d = self.dim;
        let rows = chi.len() / d;
        let mut j1 = 0.0;
        for r in 0..rows - 1 {
            let i = a + r;
            self.propagator
                .couple(&chi[(r + 1) * d..(r + 2) * d], cur, tilde[i]);
            let x = self.solve(tilde[i], w);
            if !x.is_finite() {
                return Err(Error::NonFinite { step: i });
            }
            next_field[i] = x;
            self.propagator.finish_forward(x, cur);
            self.check_finite(i + 1, cur)?;
            j1 += self.j1_increment(i + 1, cur);
            if let Some(s) = store.as_deref_mut() {
                s[(r + 1) * d..(r + 2) * d].copy_from_slice(cur);
            }
        }
        Ok(j1)
    }

    fn check_finite(&self, step: usize, psi: &[Complex64]) -> Result<()> {
        if (step % 100 == 0 || step == self.n_steps())
            && !psi.iter().all(|z| z.re.is_finite() && z.im.is_finite())
        {
            return Err(Error::NonFinite { step });
        }
        Ok(())
    }
}

fn step_values(field: &ControlField) -> Result<Vec<f64>> {
    if field.n_components() != 1 {
        return Err(Error::InvalidParameter(
            "the model systems couple to a single field component".into(),
        ));
    }
    let n = field.time_grid().n_steps();
    Ok((0..n).map(|i| field.step_value(i)).collect())
}

fn to_field(time: TimeGrid, values: &[f64]) -> Result<ControlField> {
    let mut samples = values.to_vec();
    samples.push(*values.last().expect("at least one step"));
    ControlField::from_samples(time, 1, samples)
}

fn same_mesh(a: TimeGrid, b: TimeGrid) -> Result<()> {
    if a.n_steps() != b.n_steps() || (a.dt() - b.dt()).abs() > 1e-15 * a.dt() {
        return Err(Error::InvalidParameter(
            "field and trajectory use different time meshes".into(),
        ));
    }
    Ok(())
}

/// Backward sweep along a fully stored trajectory (stride 1).
///
/// Returns `χ` at every mesh point and the intermediate field `ε̃`.
pub fn backward_sweep(
    system: &SystemSpec,
    target: &TargetSpec,
    trajectory: &StateTrajectory,
    params: &ControlParams,
) -> Result<(Vec<QuantumState>, ControlField)> {
    let time = trajectory.time_grid();
    if trajectory.stride() != 1 || trajectory.states().len() != time.n_steps() + 1 {
        return Err(Error::LengthMismatch {
            expected: time.n_steps() + 1,
            found: trajectory.states().len() * trajectory.stride(),
        });
    }
    let mut sw = Sweeper::new(system, target.clone(), time, params)?;
    let d = sw.dim;
    let n = time.n_steps();
    let mut psi = Vec::with_capacity((n + 1) * d);
    for s in trajectory.states() {
        if s.len() != d || s.basis() != system.basis() {
            return Err(Error::BasisMismatch);
        }
        psi.extend_from_slice(s.amplitudes());
    }
    let field = step_values(trajectory.field())?;
    let mut chi = vec![Complex64::new(0.0, 0.0); (n + 1) * d];
    sw.terminal(&psi[n * d..], &mut chi[n * d..]);
    let mut tilde = vec![0.0; n];
    sw.backward_segment(0, &psi, &mut chi, &field, &mut tilde, params.eta, None);
    let states = chi
        .chunks(d)
        .enumerate()
        .map(|(i, c)| QuantumState::new(c.to_vec(), system.basis()).with_time(time.t(i)))
        .collect();
    Ok((states, to_field(time, &tilde)?))
}

/// Forward sweep from `psi0` with feedback from `χ` (every mesh point) and
/// the intermediate field `ε̃`. Returns the new trajectory and field.
pub fn forward_sweep(
    system: &SystemSpec,
    target: &TargetSpec,
    psi0: &QuantumState,
    chi: &[QuantumState],
    field_tilde: &ControlField,
    params: &ControlParams,
) -> Result<(StateTrajectory, ControlField)> {
    let time = field_tilde.time_grid();
    let n = time.n_steps();
    if chi.len() != n + 1 {
        return Err(Error::LengthMismatch {
            expected: n + 1,
            found: chi.len(),
        });
    }
    let mut sw = Sweeper::new(system, target.clone(), time, params)?;
    let d = sw.dim;
    if psi0.len() != d || psi0.basis() != system.basis() {
        return Err(Error::BasisMismatch);
    }
    let mut flat = Vec::with_capacity((n + 1) * d);
    for c in chi {
        if c.len() != d || c.basis() != system.basis() {
            return Err(Error::BasisMismatch);
        }
        flat.extend_from_slice(c.amplitudes());
    }
    let tilde = step_values(field_tilde)?;
    let mut next = vec![0.0; n];
    let mut store = vec![Complex64::new(0.0, 0.0); (n + 1) * d];
    store[..d].copy_from_slice(psi0.amplitudes());
    let mut cur = psi0.amplitudes().to_vec();
    sw.forward_segment(0, &mut cur, &flat, &tilde, &mut next, params.gamma, Some(&mut store))?;
    let field = to_field(time, &next)?;
    let states = store
        .chunks(d)
        .enumerate()
        .map(|(i, c)| QuantumState::new(c.to_vec(), system.basis()).with_time(time.t(i)))
        .collect();
    Ok((
        StateTrajectory::from_parts(states, 1, time, field.clone()),
        field,
    ))
}

// ---------------------------------------------------------------------------
// Optimizer

/// Iterative optimizer owning all trajectory storage of one run.
pub struct Optimizer {
    sweeper: Sweeper,
    params: ControlParams,
    psi0: Vec<Complex64>,
    /// `None`: full storage; `Some(m)`: checkpoints every `m` steps.
    segment: Option<usize>,
    field: Vec<f64>,
    tilde: Vec<f64>,
    next_field: Vec<f64>,
    /// Full: every state of `Ψ`. Checkpointed: states at segment starts and `T`.
    psi_store: Vec<Complex64>,
    psi_new: Vec<Complex64>,
    chi_store: Vec<Complex64>,
    seg_psi: Vec<Complex64>,
    seg_chi: Vec<Complex64>,
    cur: Vec<Complex64>,
    norm0: f64,
    trace: OptimizationTrace,
    clock: Option<Box<dyn Fn() -> f64 + Send>>,
    start: f64,
}

impl core::fmt::Debug for Optimizer {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Optimizer")
            .field("params", &self.params)
            .field("segment", &self.segment)
            .field("iterations", &self.trace.iterations())
            .finish_non_exhaustive()
    }
}

impl Optimizer {
    /// Validates the problem, allocates storage and runs the initial
    /// propagation (iteration 0).
    pub fn new(
        system: &SystemSpec,
        target: TargetSpec,
        psi0: &QuantumState,
        params: ControlParams,
    ) -> Result<Self> {
        let time = params.initial_field.time_grid();
        let sweeper = Sweeper::new(system, target, time, &params)?;
        if psi0.basis() != system.basis() || psi0.len() != system.dim() {
            return Err(Error::BasisMismatch);
        }
        let field = step_values(&params.initial_field)?;
        let d = system.dim();
        let n = time.n_steps();
        let segment = resolve_storage(d, n, &params)?;
        let zero = Complex64::new(0.0, 0.0);
        let (stored, seg_rows) = match segment {
            None => (n + 1, 0),
            Some(m) => (n.div_ceil(m) + 1, m + 1),
        };
        let mut opt = Self {
            sweeper,
            psi0: psi0.amplitudes().to_vec(),
            segment,
            tilde: vec![0.0; n],
            next_field: vec![0.0; n],
            field,
            psi_store: vec![zero; stored * d],
            psi_new: if segment.is_some() { vec![zero; stored * d] } else { Vec::new() },
            chi_store: vec![zero; stored * d],
            seg_psi: vec![zero; seg_rows * d],
            seg_chi: vec![zero; seg_rows * d],
            cur: vec![zero; d],
            norm0: psi0.norm_sqr(),
            trace: OptimizationTrace::default(),
            clock: None,
            start: 0.0,
            params,
        };
        let j1 = opt.initial_propagation()?;
        let j2 = opt.j2(&opt.field);
        let record = IterationRecord {
            k: 0,
            j1,
            j2,
            j: j1 + j2,
            norm_loss: opt.norm_loss(),
            max_field: max_abs(&opt.field),
            ..IterationRecord::default()
        };
        opt.trace.records.push(record);
        Ok(opt)
    }

    /// Supplies a clock (seconds) for the `wall_time` column.
    pub fn with_clock(mut self, clock: Box<dyn Fn() -> f64 + Send>) -> Self {
        self.start = clock();
        self.clock = Some(clock);
        if let Some(r) = self.trace.records.first_mut() {
            r.wall_time = 0.0;
        }
        self
    }

    pub fn params(&self) -> &ControlParams {
        &self.params
    }

    pub fn target(&self) -> &TargetSpec {
        &self.sweeper.target
    }

    pub fn time_grid(&self) -> TimeGrid {
        self.sweeper.time
    }

    pub fn trace(&self) -> &OptimizationTrace {
        &self.trace
    }

    pub fn into_trace(self) -> OptimizationTrace {
        self.trace
    }

    /// Checkpoint segment length, `None` for full storage.
    pub fn segment(&self) -> Option<usize> {
        self.segment
    }

    pub fn memory_estimate(&self) -> u64 {
        memory_estimate(self.sweeper.dim, self.sweeper.n_steps(), self.segment)
    }

    pub fn fft_count(&self) -> u64 {
        self.sweeper.propagator.fft_count()
    }

    /// Current field `ε^(k)`.
    pub fn field(&self) -> ControlField {
        to_field(self.sweeper.time, &self.field).expect("field stays finite")
    }

    /// Replaces the current field and re-runs the initial propagation; the
    /// trace restarts at `k = 0`.
    pub fn reset_field(&mut self, field: &ControlField) -> Result<()> {
        same_mesh(field.time_grid(), self.sweeper.time)?;
        self.field = step_values(field)?;
        let j1 = self.initial_propagation()?;
        let j2 = self.j2(&self.field);
        self.trace = OptimizationTrace::default();
        self.trace.records.push(IterationRecord {
            k: 0,
            j1,
            j2,
            j: j1 + j2,
            norm_loss: self.norm_loss(),
            max_field: max_abs(&self.field),
            wall_time: self.elapsed(),
            ..IterationRecord::default()
        });
        Ok(())
    }

    /// `Ψ(T)` under the current field.
    pub fn final_state(&self) -> QuantumState {
        let d = self.sweeper.dim;
        let len = self.psi_store.len();
        QuantumState::new(self.psi_store[len - d..].to_vec(), self.sweeper.propagator.basis())
            .with_time(self.sweeper.time.total_time())
    }

    /// Re-propagates under the current field, recording every `stride`-th state.
    pub fn trajectory(&mut self, stride: usize) -> Result<StateTrajectory> {
        let field = self.field();
        let psi0 = QuantumState::new(self.psi0.clone(), self.sweeper.propagator.basis());
        propagate(
            &psi0,
            FieldRule::Fixed(&field),
            &mut self.sweeper.propagator,
            self.sweeper.time,
            stride,
        )
    }

    /// One iteration `k → k+1`; returns its record.
    pub fn iterate(&mut self) -> Result<IterationRecord> {
        let (eta, gamma) = (self.params.eta, self.params.gamma);
        self.backward(eta, None)?;
        let j1 = self.forward(gamma)?;
        let dt = self.sweeper.time.dt();
        let alpha = self.params.alpha;
        let change_next = dist_sqr(&self.next_field, &self.tilde) * dt;
        let change_tilde = dist_sqr(&self.field, &self.tilde) * dt;
        mem::swap(&mut self.field, &mut self.next_field);
        let j2 = self.j2(&self.field);
        let prev = *self.trace.last().expect("record 0 exists");
        let k = prev.k + 1;
        let bound = |w: f64, c: f64| if w > 0.0 { alpha * (2.0 / w - 1.0) * c } else { 0.0 };
        let record = IterationRecord {
            k,
            j1,
            j2,
            j: j1 + j2,
            delta_j: j1 + j2 - prev.j,
            change_next,
            change_tilde,
            predicted_increase: bound(gamma, change_next) + bound(eta, change_tilde),
            norm_loss: self.norm_loss(),
            max_field: max_abs(&self.field),
            wall_time: self.elapsed(),
        };
        if record.delta_j < -self.params.monotonic_tolerance {
            self.trace.monotonic_violations.push((k, record.delta_j));
        }
        self.trace.records.push(record);
        Ok(record)
    }

    /// Iterates until `|δJ| < threshold`, the iteration limit, or too many
    /// monotonicity violations (more than 10% of iterations, checked from
    /// iteration 10 on).
    pub fn run(&mut self) -> Result<Outcome> {
        self.run_with(|_| true)
    }

    /// Like [`run`](Self::run), calling `observer` after every iteration;
    /// returning `false` stops early with [`Outcome::MaxIterations`].
    pub fn run_with(&mut self, mut observer: impl FnMut(&IterationRecord) -> bool) -> Result<Outcome> {
        while self.trace.iterations() < self.params.max_iterations {
            let record = self.iterate()?;
            if let Some(outcome) = self.stop_reason() {
                return Ok(outcome);
            }
            if !observer(&record) {
                break;
            }
        }
        Ok(Outcome::MaxIterations)
    }

    /// Abort or convergence verdict on the latest iteration, if any; the
    /// iteration limit is left to the caller.
    pub fn stop_reason(&self) -> Option<Outcome> {
        let record = self.trace.last()?;
        let k = record.k;
        if k == 0 {
            return None;
        }
        if k >= 10 && self.trace.monotonic_violations.len() * 10 > k {
            return Some(Outcome::MonotonicityAbort);
        }
        if record.delta_j.abs() < self.params.threshold {
            return Some(Outcome::Converged);
        }
        None
    }

    /// Discrete gradient `∂J/∂ε_i` of the functional with respect to the
    /// value held on step `i` (one backward sweep, field unchanged).
    pub fn gradient(&mut self) -> Result<Vec<f64>> {
        let slopes = self.slopes()?;
        let dt = self.sweeper.time.dt();
        let alpha = self.params.alpha;
        Ok(slopes
            .iter()
            .zip(&self.field)
            .map(|(s, e)| 2.0 * s - 2.0 * alpha * dt * e)
            .collect())
    }

    /// `max_i |α ε_i + Im⟨χ|μ̂|Ψ⟩|` in its discrete form
    /// `|α ε_i - Re⟨χ_{i+1}|∂U/∂ε|ψ_i⟩/dt|`.
    pub fn stationarity_residual(&mut self) -> Result<f64> {
        let slopes = self.slopes()?;
        let dt = self.sweeper.time.dt();
        let alpha = self.params.alpha;
        Ok(slopes
            .iter()
            .zip(&self.field)
            .map(|(s, e)| (alpha * e - s / dt).abs())
            .fold(0.0, f64::max))
    }

    fn slopes(&mut self) -> Result<Vec<f64>> {
        let mut slopes = vec![0.0; self.sweeper.n_steps()];
        self.backward(0.0, Some(&mut slopes))?;
        Ok(slopes)
    }

    fn elapsed(&self) -> f64 {
        self.clock.as_ref().map_or(0.0, |c| c() - self.start)
    }

    fn j2(&self, field: &[f64]) -> f64 {
        -self.params.alpha * self.sweeper.time.dt() * field.iter().map(|e| e * e).sum::<f64>()
    }

    fn norm_loss(&self) -> f64 {
        let d = self.sweeper.dim;
        let len = self.psi_store.len();
        let last: f64 = self.psi_store[len - d..].iter().map(|z| z.norm_sqr()).sum();
        1.0 - last * self.sweeper.weight / self.norm0
    }

    fn bounds(&self, s: usize) -> (usize, usize) {
        let m = self.segment.expect("checkpointed storage");
        let a = s * m;
        (a, (a + m).min(self.sweeper.n_steps()))
    }

    fn n_segments(&self) -> usize {
        self.sweeper.n_steps().div_ceil(self.segment.expect("checkpointed storage"))
    }

    fn initial_propagation(&mut self) -> Result<f64> {
        let d = self.sweeper.dim;
        let mut j1 = self.sweeper.j1_increment(0, &self.psi0);
        self.psi_store[..d].copy_from_slice(&self.psi0);
        match self.segment {
            None => {
                j1 += self
                    .sweeper
                    .plain_forward(0, &mut self.psi_store, &self.field, true)?;
            }
            Some(_) => {
                for s in 0..self.n_segments() {
                    let (a, b) = self.bounds(s);
                    let rows = b - a + 1;
                    self.seg_psi[..d].copy_from_slice(&self.psi_store[s * d..(s + 1) * d]);
                    j1 += self
                        .sweeper
                        .plain_forward(a, &mut self.seg_psi[..rows * d], &self.field, true)?;
                    self.psi_store[(s + 1) * d..(s + 2) * d]
                        .copy_from_slice(&self.seg_psi[(rows - 1) * d..rows * d]);
                }
            }
        }
        let len = self.psi_store.len();
        j1 += self.sweeper.j1_final(&self.psi_store[len - d..]);
        Ok(j1)
    }

    /// Backward sweep with mixing `w`: fills `tilde` and `χ` storage.
    fn backward(&mut self, w: f64, mut slopes: Option<&mut [f64]>) -> Result<()> {
        let d = self.sweeper.dim;
        let len = self.psi_store.len();
        match self.segment {
            None => {
                self.sweeper
                    .terminal(&self.psi_store[len - d..], &mut self.chi_store[len - d..]);
                self.sweeper.backward_segment(
                    0,
                    &self.psi_store,
                    &mut self.chi_store,
                    &self.field,
                    &mut self.tilde,
                    w,
                    slopes,
                );
            }
            Some(_) => {
                let segments = self.n_segments();
                for s in (0..segments).rev() {
                    let (a, b) = self.bounds(s);
                    let rows = b - a + 1;
                    let seg_psi = &mut self.seg_psi[..rows * d];
                    seg_psi[..d].copy_from_slice(&self.psi_store[s * d..(s + 1) * d]);
                    self.sweeper.plain_forward(a, seg_psi, &self.field, false)?;
                    let seg_chi = &mut self.seg_chi[..rows * d];
                    let last = (rows - 1) * d;
                    if s + 1 == segments {
                        self.sweeper
                            .terminal(&seg_psi[last..], &mut seg_chi[last..]);
                        self.chi_store[segments * d..].copy_from_slice(&seg_chi[last..]);
                    } else {
                        seg_chi[last..]
                            .copy_from_slice(&self.chi_store[(s + 1) * d..(s + 2) * d]);
                    }
                    self.sweeper.backward_segment(
                        a,
                        seg_psi,
                        seg_chi,
                        &self.field,
                        &mut self.tilde,
                        w,
                        slopes.as_deref_mut(),
                    );
                    self.chi_store[s * d..(s + 1) * d].copy_from_slice(&seg_chi[..d]);
                }
            }
        }
        Ok(())
    }

    /// Forward sweep with mixing `w`: fills `next_field`, replaces the stored
    /// trajectory and returns `J1` of the new trajectory.
    fn forward(&mut self, w: f64) -> Result<f64> {
        let d = self.sweeper.dim;
        // both trajectories share Ψ(0): δΨ(0) = 0
        assert!(
            self.psi_store[..d] == self.psi0[..],
            "stored trajectory does not start at the initial state"
        );
        self.cur.copy_from_slice(&self.psi0);
        let mut j1 = self.sweeper.j1_increment(0, &self.psi0);
        match self.segment {
            None => {
                j1 += self.sweeper.forward_segment(
                    0,
                    &mut self.cur,
                    &self.chi_store,
                    &self.tilde,
                    &mut self.next_field,
                    w,
                    Some(&mut self.psi_store),
                )?;
            }
            Some(_) => {
                let segments = self.n_segments();
                for s in 0..segments {
                    let (a, b) = self.bounds(s);
                    let rows = b - a + 1;
                    self.psi_new[s * d..(s + 1) * d].copy_from_slice(&self.cur);
                    let seg_psi = &mut self.seg_psi[..rows * d];
                    seg_psi[..d].copy_from_slice(&self.psi_store[s * d..(s + 1) * d]);
                    self.sweeper.plain_forward(a, seg_psi, &self.field, false)?;
                    let seg_chi = &mut self.seg_chi[..rows * d];
                    seg_chi[(rows - 1) * d..]
                        .copy_from_slice(&self.chi_store[(s + 1) * d..(s + 2) * d]);
                    self.sweeper.recompute_chi(a, seg_psi, seg_chi, &self.tilde);
                    j1 += self.sweeper.forward_segment(
                        a,
                        &mut self.cur,
                        seg_chi,
                        &self.tilde,
                        &mut self.next_field,
                        w,
                        None,
                    )?;
                }
                self.psi_new[segments * d..].copy_from_slice(&self.cur);
                mem::swap(&mut self.psi_store, &mut self.psi_new);
            }
        }
        j1 += self.sweeper.j1_final(&self.cur);
        Ok(j1)
    }
}

fn dist_sqr(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Result of [`optimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub outcome: Outcome,
    pub trace: OptimizationTrace,
    pub field: ControlField,
}

/// Runs the full iteration. A monotonicity abort is reported as
/// [`Error::MonotonicityAbort`].
pub fn optimize(
    system: &SystemSpec,
    target: TargetSpec,
    psi0: &QuantumState,
    params: ControlParams,
) -> Result<OptimizationResult> {
    let mut opt = Optimizer::new(system, target, psi0, params)?;
    let outcome = opt.run()?;
    if outcome == Outcome::MonotonicityAbort {
        return Err(Error::MonotonicityAbort {
            violations: opt.trace().monotonic_violations.len(),
            iterations: opt.trace().iterations(),
        });
    }
    let field = opt.field();
    Ok(OptimizationResult {
        outcome,
        trace: opt.into_trace(),
        field,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::EigenSystem;
    use crate::state::Basis;
    use crate::system::TwoLevelSystem;
    use crate::target::{CoeffShape, CoeffTrajectory, O1, O2};

    fn tls() -> SystemSpec {
        SystemSpec::TwoLevel(TwoLevelSystem::atom())
    }

    fn v_target(total: f64) -> TargetSpec {
        TargetSpec::new(
            O1::Follower {
                coefficients: CoeffTrajectory::preset(CoeffShape::VShape { total_time: total }).unwrap(),
                eigensystem: EigenSystem::two_level(&TwoLevelSystem::atom()),
            },
            O2::None,
            1,
        )
        .unwrap()
    }

    fn params(total: f64, dt: f64, alpha: f64) -> ControlParams {
        let time = TimeGrid::from_duration(total, dt).unwrap();
        ControlParams::new(alpha, ControlField::constant(time, 1, 1e-4).unwrap())
    }

    #[test]
    fn field_from_adjoint_two_level_by_hand() {
        let sys = tls();
        let psi = QuantumState::new(
            vec![Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)],
            Basis::Levels,
        );
        // χ = iψ: ⟨χ|μ|ψ⟩ = -i⟨ψ|μ|ψ⟩, so the field is ⟨ψ|μ|ψ⟩/α = 2P·Re(c0* c1)/α
        let mut chi = psi.clone();
        chi.scale(Complex64::new(0.0, 1.0));
        let v = field_from_adjoint(&chi, &psi, &sys, 0.5).unwrap();
        assert!(v.abs() < 1e-15);
        // real superposition: ⟨ψ|μ|ψ⟩ = 2·0.6·0.8·P
        let psi = QuantumState::new(
            vec![Complex64::new(0.6, 0.0), Complex64::new(0.8, 0.0)],
            Basis::Levels,
        );
        let mut chi = psi.clone();
        chi.scale(Complex64::new(0.0, 1.0));
        let v = field_from_adjoint(&chi, &psi, &sys, 0.5).unwrap();
        assert!((v - 2.0 * 0.6 * 0.8 * 1.05 / 0.5).abs() < 1e-14);
        let v2 = field_from_adjoint(&chi, &psi, &sys, 1.0).unwrap();
        assert_eq!(v2 * 2.0, v);
        let zero = QuantumState::zeros(2, Basis::Levels);
        assert_eq!(field_from_adjoint(&zero, &psi, &sys, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn mixing_limits() {
        let sys = tls();
        let p = params(1.0, 0.01, 0.5).with_mixing(0.0, 1.0);
        let psi = QuantumState::new(
            vec![Complex64::new(0.6, 0.0), Complex64::new(0.8, 0.0)],
            Basis::Levels,
        );
        let mut chi = psi.clone();
        chi.scale(Complex64::new(0.3, 0.7));
        assert_eq!(update_field_tilde(0.123, &chi, &psi, &sys, &p).unwrap(), 0.123);
        let pure = field_from_adjoint(&chi, &psi, &sys, 0.5).unwrap();
        assert_eq!(update_field_next(0.123, &chi, &psi, &sys, &p).unwrap(), pure);
        for eta in [0.5, 1.0, 1.7] {
            let p = p.clone().with_mixing(eta, eta);
            let v = update_field_tilde(pure, &chi, &psi, &sys, &p).unwrap();
            assert!((v - pure).abs() < 1e-15);
        }
    }

    #[test]
    fn params_validation() {
        let p = params(1.0, 0.01, 0.5);
        assert!(p.validate().is_ok());
        assert!(p.clone().with_mixing(2.5, 1.0).validate().is_err());
        let mut bad = p.clone();
        bad.alpha = 0.0;
        assert!(bad.validate().is_err());
        let mut bad = p;
        bad.storage = Storage::Checkpointed { segment: 0 };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn memory_estimate_and_cap() {
        assert_eq!(memory_estimate(2, 10, None), 2 * 11 * 32 + 240);
        let p = params(100.0, 0.01, 0.5);
        let mut tight = p.clone();
        tight.memory_cap = 1000;
        let err = Optimizer::new(&tls(), v_target(100.0), &QuantumState::level(2, 0), tight);
        assert!(matches!(err, Err(Error::MemoryCap { .. })));
        let mut auto = p;
        auto.memory_cap = 300_000;
        assert!(memory_estimate(2, 10_000, None) > auto.memory_cap);
        let opt = Optimizer::new(&tls(), v_target(100.0), &QuantumState::level(2, 0), auto).unwrap();
        assert!(opt.segment().is_some());
        assert!(opt.memory_estimate() <= 300_000);
    }

    #[test]
    fn checkpointing_matches_full_storage_bitwise() {
        let target = v_target(40.0);
        let psi0 = QuantumState::level(2, 0);
        let mut full = params(40.0, 0.01, 0.2);
        full.storage = Storage::Full;
        let mut ck = full.clone();
        ck.storage = Storage::Checkpointed { segment: 37 };
        let mut a = Optimizer::new(&tls(), target.clone(), &psi0, full).unwrap();
        let mut b = Optimizer::new(&tls(), target, &psi0, ck).unwrap();
        for _ in 0..3 {
            let ra = a.iterate().unwrap();
            let rb = b.iterate().unwrap();
            // J1 is summed segment by segment, so only the last bits may differ
            assert!((ra.j - rb.j).abs() < 1e-14);
        }
        assert_eq!(a.field(), b.field());
        assert_eq!(a.final_state(), b.final_state());
    }

    #[test]
    fn zero_mixing_keeps_field() {
        let mut p = params(20.0, 0.01, 0.2).with_mixing(0.0, 0.0);
        p.max_iterations = 2;
        let mut opt = Optimizer::new(&tls(), v_target(20.0), &QuantumState::level(2, 0), p).unwrap();
        let before = opt.field();
        let r = opt.iterate().unwrap();
        assert_eq!(opt.field(), before);
        assert_eq!(r.delta_j, 0.0);
    }

    #[test]
    fn first_iteration_increases_functional() {
        let p = params(100.0, 0.01, 0.05);
        let mut opt = Optimizer::new(&tls(), v_target(100.0), &QuantumState::level(2, 0), p).unwrap();
        let r = opt.iterate().unwrap();
        assert!(r.delta_j > 0.0);
        assert!(r.delta_j >= r.predicted_increase - 1e-12);
    }

    #[test]
    fn functional_values_of_constant_field() {
        let p = params(10.0, 0.01, 0.3);
        let time = p.initial_field.time_grid();
        let field = ControlField::constant(time, 1, 0.02).unwrap();
        let mut prop = Propagator::new(&tls(), 0.01).unwrap();
        let traj = propagate(&QuantumState::level(2, 0), FieldRule::Fixed(&field), &mut prop, time, 1).unwrap();
        let (j1, j2, j) = functional_values(&traj, &field, &v_target(10.0), 0.3).unwrap();
        assert!((j2 + 0.3 * 0.02 * 0.02 * 10.0).abs() < 1e-12);
        assert_eq!(j, j1 + j2);
    }

    #[test]
    fn optimizer_j1_matches_trajectory_quadrature() {
        let p = params(30.0, 0.01, 0.1);
        let target = v_target(30.0);
        let mut opt = Optimizer::new(&tls(), target.clone(), &QuantumState::level(2, 0), p).unwrap();
        opt.iterate().unwrap();
        let r = *opt.trace().last().unwrap();
        let traj = opt.trajectory(1).unwrap();
        let (j1, j2, _) = functional_values(&traj, &opt.field(), &target, 0.1).unwrap();
        assert!((j1 - r.j1).abs() < 1e-12, "{j1} vs {}", r.j1);
        assert!((j2 - r.j2).abs() < 1e-14);
    }

    #[test]
    fn sweeps_match_optimizer() {
        let sys = tls();
        let target = v_target(20.0);
        let psi0 = QuantumState::level(2, 0);
        let mut p = params(20.0, 0.01, 0.1).with_mixing(1.5, 0.5);
        p.storage = Storage::Full;
        let mut prop = Propagator::new(&sys, 0.01).unwrap();
        let time = p.initial_field.time_grid();
        let traj = propagate(&psi0, FieldRule::Fixed(&p.initial_field), &mut prop, time, 1).unwrap();
        let (chi, tilde) = backward_sweep(&sys, &target, &traj, &p).unwrap();
        let (next, field) = forward_sweep(&sys, &target, &psi0, &chi, &tilde, &p).unwrap();
        let mut opt = Optimizer::new(&sys, target, &psi0, p).unwrap();
        opt.iterate().unwrap();
        assert_eq!(opt.field(), field);
        assert_eq!(&opt.final_state().amplitudes(), &next.final_state().amplitudes());
    }
}
