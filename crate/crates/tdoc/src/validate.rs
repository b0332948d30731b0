//! Dry-run checks of a config and the deep oracle suite.

use std::fmt;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use tdoc_core::control::{memory_estimate, resolve_storage, ControlParams, Optimizer, Storage};
use tdoc_core::eigen::compute_eigensystem;
use tdoc_core::field::ControlField;
use tdoc_core::grid::{Grid, TimeGrid};
use tdoc_core::propagation::{propagate, Direction, FieldRule, Propagator};
use tdoc_core::state::{inner_product, QuantumState};
use tdoc_core::system::{GridAtom, SystemSpec, TwoLevelSystem, ATOM_DIPOLE, ATOM_GAP};
use tdoc_core::target::{PathTrajectory, TargetSpec, O1, O2};
use tdoc_core::Complex64;

use crate::config::{ExperimentConfig, SystemConfig};
use crate::error::Result;
use crate::oracle::{appendix_inequality, oracle_propagate, reduced_inequality, DenseOracle, Functional};
use crate::problem;

/// Tolerances of the eigensystem sanity check.
pub const GAP_TOLERANCE: f64 = 0.002;
pub const DIPOLE_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    /// `None` for informational entries.
    pub passed: Option<bool>,
    pub detail: String,
}

impl Check {
    fn pass_if(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed: Some(passed),
            detail,
        }
    }

    fn info(name: &str, detail: String) -> Self {
        Self {
            name: name.into(),
            passed: None,
            detail,
        }
    }

    fn fail(name: &str, detail: String) -> Self {
        Self::pass_if(name, false, detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed != Some(false))
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.passed == Some(false))
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            let status = match c.passed {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "info",
            };
            writeln!(f, "{status}  {:width$}  {}", c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Config checks, storage estimate and eigensystem sanity; no optimization.
pub fn validate(config: &ExperimentConfig) -> Report {
    let mut checks: Vec<Check> = config
        .check()
        .into_iter()
        .map(|m| Check::fail("config", m))
        .collect();
    if checks.is_empty() {
        checks.push(Check::pass_if("config", true, "all checks passed".into()));
    }
    let time = problem::time_grid(config).ok();
    let system = match problem::build_system(&config.system) {
        Ok(s) => {
            let kind = if config.system.is_grid() { "grid points" } else { "levels" };
            checks.push(Check::info("system", format!("{} {kind}", s.dim())));
            Some(s)
        }
        Err(e) => {
            checks.push(Check::fail("system", e.to_string()));
            None
        }
    };
    if let (Some(time), Some(system)) = (time, &system) {
        checks.push(storage_check(config, time, system));
    }
    if let Some(system) = &system {
        checks.extend(eigensystem_checks(config, system));
    }
    Report { checks }
}

fn storage_check(config: &ExperimentConfig, time: TimeGrid, system: &SystemSpec) -> Check {
    let n = time.n_steps();
    let full = memory_estimate(system.dim(), n, None);
    let params = match problem::control_params(config, time) {
        Ok(p) => p,
        Err(e) => return Check::fail("storage", e.to_string()),
    };
    match resolve_storage(system.dim(), n, &params) {
        Ok(segment) => Check::pass_if(
            "storage",
            true,
            format!(
                "{n} steps; full storage {}, chosen {} ({})",
                human_bytes(full),
                segment.map_or("full".to_string(), |m| format!("segment {m}")),
                human_bytes(memory_estimate(system.dim(), n, segment))
            ),
        ),
        Err(e) => Check::fail("storage", e.to_string()),
    }
}

fn eigensystem_checks(config: &ExperimentConfig, system: &SystemSpec) -> Vec<Check> {
    let (gap, dipole) = match (config.system.clone(), system) {
        (SystemConfig::TwoLevel { gap, dipole, .. }, _) => (gap, dipole),
        (_, SystemSpec::GridAtom(_)) => match compute_eigensystem(system, 2) {
            Ok(eig) => {
                let e = eig.energies();
                let d = system
                    .dipole_matrix_element(&eig.states()[1], &eig.states()[0])
                    .map(|z| z.norm())
                    .unwrap_or(f64::NAN);
                (e[1] - e[0], d)
            }
            Err(e) => return vec![Check::fail("eigensystem", e.to_string())],
        },
        _ => unreachable!("system built from its config"),
    };
    vec![
        Check::pass_if(
            "omega01",
            (gap - ATOM_GAP).abs() <= GAP_TOLERANCE,
            format!("{gap:.6} (expected {ATOM_GAP} ± {GAP_TOLERANCE})"),
        ),
        Check::pass_if(
            "P01",
            (dipole - ATOM_DIPOLE).abs() <= DIPOLE_TOLERANCE,
            format!("{dipole:.6} (expected {ATOM_DIPOLE} ± {DIPOLE_TOLERANCE})"),
        ),
    ]
}

fn human_bytes(b: u64) -> String {
    const UNITS: [&str; 4] = ["B", "KiB", "MiB", "GiB"];
    let mut v = b as f64;
    let mut unit = 0;
    while v >= 1024.0 && unit + 1 < UNITS.len() {
        v /= 1024.0;
        unit += 1;
    }
    format!("{v:.1} {}", UNITS[unit])
}

// ---------------------------------------------------------------------------
// Deep suite

/// The oracle suite behind `validate --deep`; each entry is independent.
pub fn deep_suite() -> Report {
    let checks = vec![
        guard("two-level step vs oracle", two_level_vs_oracle),
        guard("oracle unitarity", oracle_unitarity),
        guard("SPO global order", spo_order_check),
        guard("norm conservation", norm_conservation),
        guard("appendix inequality", appendix_random),
        guard("appendix case split", appendix_case_split),
        guard("gradient vs finite differences", gradient_check),
        guard("penalty-only gradient", penalty_gradient_check),
        guard("delta-form adjoint", delta_form_check),
    ];
    Report { checks }
}

fn guard(name: &str, f: fn() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check::pass_if(name, passed, detail),
        Err(e) => Check::fail(name, e.to_string()),
    }
}

fn max_distance(a: &QuantumState, b: &QuantumState) -> f64 {
    a.amplitudes()
        .iter()
        .zip(b.amplitudes())
        .fold(0.0, |m, (x, y)| m.max((x - y).norm()))
}

/// 64-point soft-Coulomb atom on `[-16, 16)` without mask.
pub fn small_atom() -> GridAtom {
    GridAtom::soft_coulomb(Grid::new(-16.0, 16.0, 64).expect("valid grid"), 1.0)
}

fn two_level_vs_oracle() -> Result<(bool, String)> {
    let s = TwoLevelSystem::atom();
    let system = SystemSpec::TwoLevel(s);
    let time = TimeGrid::new(0.05, 400)?;
    let field = ControlField::from_fn(time, |t| 0.2 * (0.395 * t).sin());
    let psi0 = QuantumState::level(2, 0);
    let mut p = Propagator::new(&system, time.dt())?;
    let fast = propagate(&psi0, FieldRule::Fixed(&field), &mut p, time, time.n_steps())?;
    let exact = oracle_propagate(&system, &psi0, &field)?;
    let err = max_distance(fast.final_state(), &exact);
    Ok((err <= 1e-12, format!("max deviation after 400 steps {err:.2e} (≤ 1e-12)")))
}

fn oracle_unitarity() -> Result<(bool, String)> {
    // propagator() itself enforces the tolerance
    let atom = GridAtom::soft_coulomb(Grid::new(-20.0, 20.0, 128)?, 1.0);
    DenseOracle::grid(&atom, 0.03)?.propagator(0.01)?;
    DenseOracle::two_level(&TwoLevelSystem::atom(), 0.5)?.propagator(0.5)?;
    Ok((true, "max |U†U - 1| ≤ 1e-13 on 128 points and two levels".into()))
}

/// Global SPO error against the dense oracle (same piecewise-constant
/// field) at `dt` and `dt/2`; returns the ratio.
pub fn spo_order_ratio() -> Result<(f64, f64, f64)> {
    let atom = small_atom();
    let system = SystemSpec::GridAtom(atom.clone());
    let psi0 = QuantumState::from_fn(atom.grid(), |x| {
        Complex64::new((-(x - 1.0) * (x - 1.0) / 2.0).exp(), 0.3 * x.sin())
    });
    let err = |dt: f64| -> Result<f64> {
        let time = TimeGrid::from_duration(2.0, dt)?;
        // piecewise constant on the coarse mesh, so both runs see one field
        let field = ControlField::from_fn(time, |t| 0.05 * (0.5 * (t / 0.04).floor()).cos());
        let mut p = Propagator::new(&system, dt)?;
        let fast = propagate(&psi0, FieldRule::Fixed(&field), &mut p, time, time.n_steps())?;
        let exact = oracle_propagate(&system, &psi0, &field)?;
        let d: f64 = fast
            .final_state()
            .amplitudes()
            .iter()
            .zip(exact.amplitudes())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            * atom.grid().dx();
        Ok(d.sqrt())
    };
    let (coarse, fine) = (err(0.02)?, err(0.01)?);
    Ok((coarse / fine, coarse, fine))
}

fn spo_order_check() -> Result<(bool, String)> {
    let (ratio, coarse, fine) = spo_order_ratio()?;
    Ok((
        (3.5..=4.5).contains(&ratio),
        format!("error {coarse:.3e} → {fine:.3e}, ratio {ratio:.3} (in [3.5, 4.5])"),
    ))
}

fn norm_conservation() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let grid = SystemSpec::GridAtom(small_atom());
    let levels = SystemSpec::TwoLevel(TwoLevelSystem::atom());
    for system in [&grid, &levels] {
        let psi0 = match system {
            SystemSpec::GridAtom(a) => {
                let mut s = QuantumState::from_fn(a.grid(), |x| Complex64::new((-x * x / 4.0).exp(), 0.0));
                s.normalize();
                s
            }
            SystemSpec::TwoLevel(_) => QuantumState::level(2, 0),
        };
        let time = TimeGrid::new(0.01, 1000)?;
        let field = ControlField::from_fn(time, |t| 0.1 * (0.4 * t).sin());
        let mut p = Propagator::new(system, time.dt())?;
        let out = propagate(&psi0, FieldRule::Fixed(&field), &mut p, time, time.n_steps())?;
        worst = worst.max((out.final_state().norm_sqr() - psi0.norm_sqr()).abs());
    }
    Ok((worst <= 1e-12, format!("max |Δ‖ψ‖²| over 10³ steps {worst:.2e} (≤ 1e-12)")))
}

fn appendix_random() -> Result<(bool, String)> {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut min = f64::INFINITY;
    for _ in 0..10_000 {
        let a = rng.random_range(0.0..=10.0);
        let b = rng.random_range(0.0..=10.0);
        let n = rng.random_range(2..=6);
        min = min.min(appendix_inequality(a, b, n)?);
    }
    Ok((min >= 0.0, format!("10⁴ random (a, b, n), smallest value {min:.3e}")))
}

fn appendix_case_split() -> Result<(bool, String)> {
    let mut ok = true;
    for n in 1..=8u32 {
        ok &= reduced_inequality(1.0, n) == 0.0;
        ok &= reduced_inequality(0.0, n) == f64::from(n) - 1.0;
        ok &= (0..100_000).all(|k| reduced_inequality(k as f64 / 100_000.0, n) >= 0.0);
    }
    Ok((ok, "f(y) ≥ 0 on [0, 1), f(1) = 0, f(0) = n - 1 for n ≤ 8".into()))
}

/// Adjoint gradient against central differences on the small atom, for a
/// projector target and for a moving-density target with `n = 2`; returns
/// the worst relative error.
pub fn gradient_relative_error() -> Result<f64> {
    let atom = small_atom();
    let grid = *atom.grid();
    let system = SystemSpec::GridAtom(atom);
    let eig = compute_eigensystem(&system, 2)?;
    let path = PathTrajectory::new(vec![0.0, 5.0], vec![0.0, 1.5])?;
    let targets = [
        TargetSpec::new(O1::None, O2::Projector(eig.states()[1].clone()), 1)?,
        TargetSpec::new(O1::MovingDensity { path, sigma: 2.0, grid }, O2::None, 2)?,
    ];
    let time = TimeGrid::new(0.01, 500)?;
    let field = ControlField::from_fn(time, |t| 0.02 + 0.01 * (0.5 * t).cos());
    let psi0 = eig.states()[0].clone();
    let mut worst: f64 = 0.0;
    for target in targets {
        let mut params = ControlParams::new(0.5, field.clone());
        params.storage = Storage::Full;
        let mut opt = Optimizer::new(&system, target.clone(), &psi0, params)?;
        let gradient = opt.gradient()?;
        let f = Functional {
            system: system.clone(),
            target,
            psi0: psi0.clone(),
            alpha: 0.5,
        };
        for i in [0, 137, 250, 499] {
            let fd = f.fd_gradient(&field, i, 0, 1e-4)?;
            worst = worst.max((fd - gradient[i]).abs() / fd.abs());
        }
    }
    Ok(worst)
}

fn gradient_check() -> Result<(bool, String)> {
    let err = gradient_relative_error()?;
    Ok((err <= 0.05, format!("projector and moving-density (n = 2) targets, worst relative error {err:.2e} (≤ 5%)")))
}

fn penalty_gradient_check() -> Result<(bool, String)> {
    let alpha = 0.7;
    let time = TimeGrid::new(0.01, 200)?;
    let field = ControlField::from_fn(time, |t| 0.3 * (0.7 * t).sin());
    let f = Functional {
        system: SystemSpec::TwoLevel(TwoLevelSystem::atom()),
        target: TargetSpec::null(),
        psi0: QuantumState::level(2, 0),
        alpha,
    };
    let mut worst: f64 = 0.0;
    for i in [0, 50, 199] {
        let want = -2.0 * alpha * field.step_value(i) * time.dt();
        worst = worst.max((f.fd_gradient(&field, i, 0, 1e-4)? - want).abs());
    }
    Ok((worst <= 1e-12, format!("max |fd + 2αε dt| {worst:.2e}")))
}

/// `χ(0)` from the final condition `χ(T) = O2Ψ(T)` and from a source
/// `O2Ψ(t)·g(t)` with `g` a box of `width` steps ending at `T` and unit
/// integral, integrated backward from `χ = 0`. Returns `‖Δχ(0)‖` and
/// `‖χ(0)‖` for each width.
pub fn delta_form_errors(dt: f64, widths: &[usize]) -> Result<Vec<(usize, f64, f64)>> {
    let system = SystemSpec::TwoLevel(TwoLevelSystem::atom());
    let time = TimeGrid::from_duration(20.0, dt)?;
    let field = ControlField::from_fn(time, |t| 0.05 * (0.395 * t).sin());
    let mut p = Propagator::new(&system, time.dt())?;
    let psi = propagate(&QuantumState::level(2, 0), FieldRule::Fixed(&field), &mut p, time, 1)?;
    let o2 = |s: &QuantumState| {
        QuantumState::new(vec![Complex64::new(0.0, 0.0), s.amplitudes()[1]], s.basis())
    };
    let n = time.n_steps();
    let mut split = o2(&psi.states()[n]);
    for i in (0..n).rev() {
        p.adjoint_step(split.amplitudes_mut(), field.step_value(i));
    }
    let norm = inner_product(&split, &split)?.re.sqrt();
    let mut out = Vec::new();
    for &m in widths {
        let mut chi = QuantumState::zeros(2, split.basis());
        let zero = QuantumState::zeros(2, split.basis());
        for i in (0..n).rev() {
            let source = if i + m >= n {
                let mut s = o2(&psi.states()[i + 1]);
                s.scale(Complex64::new(1.0 / (m as f64 * time.dt()), 0.0));
                s
            } else {
                zero.clone()
            };
            p.inhomogeneous_step(chi.amplitudes_mut(), source.amplitudes(), field.step_value(i), Direction::Backward);
        }
        out.push((m, max_distance(&chi, &split), norm));
    }
    Ok(out)
}

fn delta_form_check() -> Result<(bool, String)> {
    // a source spread over w steps acts up to w·dt early; the mismatch is
    // bounded by ‖H‖·(w·dt)·‖χ‖ with ‖H‖ ≤ |E0| + P·max|ε|, and vanishes
    // linearly as dt → 0
    let h_norm = 0.6698 + 1.05 * 0.05;
    let coarse = delta_form_errors(0.01, &[1, 2, 4, 8])?;
    let fine = delta_form_errors(0.005, &[1])?;
    let bounded = coarse
        .iter()
        .all(|&(m, err, norm)| err <= h_norm * m as f64 * 0.01 * norm);
    let ratio = coarse[0].1 / fine[0].1;
    let detail = coarse
        .iter()
        .map(|(m, e, _)| format!("w={m}: {e:.2e}"))
        .chain([format!("halving dt: ×{ratio:.2}")])
        .collect::<Vec<_>>()
        .join(", ");
    Ok((bounded && (1.8..=2.2).contains(&ratio), detail))
}
