//! Target operators `O(t) = O1(t) + 2T δ(t - T) O2` and the objective `J1`.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)] // inherent methods shadow it once std is linked
use num_traits::Float;

use crate::eigen::EigenSystem;
use crate::grid::Grid;
use crate::propagation::StateTrajectory;
use crate::state::{raw_inner, Basis, QuantumState};
use crate::{Error, Result};

/// Prescribed level amplitudes `a_n(t)` of a wave-function follower.
#[derive(Debug, Clone, PartialEq)]
pub enum CoeffShape {
    /// `|a_0|²` falls linearly from 1 to 0 at `T/2` and rises back to 1.
    VShape { total_time: f64 },
    /// `|a_0|² = 1` before `t_on`, 0 on `[t_on, t_off)`, 1 from `t_off` on.
    Step { t_on: f64, t_off: f64 },
    /// `a_0 = cos(Ωt)`, `a_1 = sin(Ωt)`.
    Cosine { omega: f64 },
    /// Tabulated amplitudes, one row per time, linearly interpolated.
    Sampled {
        times: Vec<f64>,
        amplitudes: Vec<Vec<Complex64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoeffTrajectory {
    shape: CoeffShape,
    levels: Vec<usize>,
}

impl CoeffTrajectory {
    /// Two-level presets act on `levels = [0, 1]`.
    pub fn preset(shape: CoeffShape) -> Result<Self> {
        Self::new(shape, alloc::vec![0, 1])
    }

    pub fn new(shape: CoeffShape, levels: Vec<usize>) -> Result<Self> {
        match &shape {
            CoeffShape::Sampled { times, amplitudes } => {
                if times.is_empty() || times.len() != amplitudes.len() {
                    return Err(Error::InvalidTarget(
                        "sampled coefficients need one row per time".into(),
                    ));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidTarget("sample times must increase".into()));
                }
                for (k, row) in amplitudes.iter().enumerate() {
                    if row.len() != levels.len() {
                        return Err(Error::InvalidTarget(format!(
                            "row {k} has {} amplitudes for {} levels",
                            row.len(),
                            levels.len()
                        )));
                    }
                    let norm: f64 = row.iter().map(|a| a.norm_sqr()).sum();
                    if (norm - 1.0).abs() > 1e-10 {
                        return Err(Error::InvalidTarget(format!(
                            "row {k} is not normalized (Σ|a|² = {norm})"
                        )));
                    }
                }
            }
            _ => {
                if levels.len() != 2 {
                    return Err(Error::InvalidTarget(
                        "preset shapes prescribe exactly two levels".into(),
                    ));
                }
            }
        }
        Ok(Self { shape, levels })
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn shape(&self) -> &CoeffShape {
        &self.shape
    }

    /// Amplitudes at time `t`, renormalized after interpolation.
    pub fn amplitudes(&self, t: f64) -> Vec<Complex64> {
        let real = |p0: f64| {
            let p0 = p0.clamp(0.0, 1.0);
            alloc::vec![
                Complex64::new(p0.sqrt(), 0.0),
                Complex64::new((1.0 - p0).sqrt(), 0.0)
            ]
        };
        match &self.shape {
            CoeffShape::VShape { total_time } => real((1.0 - 2.0 * t / total_time).abs()),
            CoeffShape::Step { t_on, t_off } => {
                real(if t < *t_on || t >= *t_off { 1.0 } else { 0.0 })
            }
            CoeffShape::Cosine { omega } => {
                let (s, c) = (omega * t).sin_cos();
                alloc::vec![Complex64::new(c, 0.0), Complex64::new(s, 0.0)]
            }
            CoeffShape::Sampled { times, amplitudes } => {
                let last = times.len() - 1;
                if t <= times[0] {
                    return amplitudes[0].clone();
                }
                if t >= times[last] {
                    return amplitudes[last].clone();
                }
                let k = times.partition_point(|&s| s <= t) - 1;
                let w = (t - times[k]) / (times[k + 1] - times[k]);
                let mut row: Vec<Complex64> = amplitudes[k]
                    .iter()
                    .zip(&amplitudes[k + 1])
                    .map(|(a, b)| a * (1.0 - w) + b * w)
                    .collect();
                let norm = row.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
                for a in row.iter_mut() {
                    *a /= norm;
                }
                row
            }
        }
    }
}

/// `|Φ(t)⟩ = Σ_n a_n(t) e^{-iE_n t} |n⟩`.
pub fn follower_state(traj: &CoeffTrajectory, t: f64, eig: &EigenSystem) -> Result<QuantumState> {
    let mut out = QuantumState::zeros(eig.states()[0].len(), eig.basis());
    follower_into(traj, t, eig, out.amplitudes_mut())?;
    out.set_time(t);
    Ok(out)
}

fn follower_into(
    traj: &CoeffTrajectory,
    t: f64,
    eig: &EigenSystem,
    out: &mut [Complex64],
) -> Result<()> {
    out.fill(Complex64::new(0.0, 0.0));
    for (&level, a) in traj.levels.iter().zip(traj.amplitudes(t)) {
        if level >= eig.len() {
            return Err(Error::InvalidTarget(format!(
                "level {level} is beyond the {} computed eigenstates",
                eig.len()
            )));
        }
        let c = a * Complex64::from_polar(1.0, -eig.energies()[level] * t);
        for (o, s) in out.iter_mut().zip(eig.states()[level].amplitudes()) {
            *o += c * s;
        }
    }
    Ok(())
}

/// Tabulated real-space path `r(t)`, linearly interpolated and clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTrajectory {
    times: Vec<f64>,
    positions: Vec<f64>,
}

impl PathTrajectory {
    pub fn new(times: Vec<f64>, positions: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != positions.len() {
            return Err(Error::InvalidTarget(
                "path needs matching, non-empty time and position columns".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidTarget("path times must increase".into()));
        }
        Ok(Self { times, positions })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn at(&self, t: f64) -> f64 {
        let last = self.times.len() - 1;
        if t <= self.times[0] {
            return self.positions[0];
        }
        if t >= self.times[last] {
            return self.positions[last];
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        self.positions[k] * (1.0 - w) + self.positions[k + 1] * w
    }
}

/// Prefactor convention of the Gaussian that stands in for `δ(x - r)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DensityNorm {
    /// `(σ/π)^{1/4} e^{-σ(x-r)²}`.
    #[default]
    FourthRoot,
    /// `(σ/π)^{1/2} e^{-σ(x-r)²}`, unit integral.
    UnitIntegral,
}

impl DensityNorm {
    fn prefactor(self, sigma: f64) -> f64 {
        match self {
            DensityNorm::FourthRoot => (sigma / PI).powf(0.25),
            DensityNorm::UnitIntegral => (sigma / PI).sqrt(),
        }
    }
}

/// Time-dependent part `O1(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum O1 {
    None,
    Follower {
        coefficients: CoeffTrajectory,
        eigensystem: EigenSystem,
    },
    MovingDensity {
        path: PathTrajectory,
        sigma: f64,
        grid: Grid,
    },
}

/// Final-time part `O2`.
#[derive(Debug, Clone, PartialEq)]
pub enum O2 {
    None,
    Projector(QuantumState),
    LocalDensity { x0: f64, sigma: f64, grid: Grid },
}

/// Complete target: `O1`, `O2`, the exponent `n` and the Gaussian convention.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    o1: O1,
    o2: O2,
    exponent: u32,
    density_norm: DensityNorm,
}

impl TargetSpec {
    pub fn new(o1: O1, o2: O2, exponent: u32) -> Result<Self> {
        if matches!((&o1, &o2), (O1::None, O2::None)) {
            return Err(Error::InvalidTarget(
                "at least one of O1, O2 must be present".into(),
            ));
        }
        if exponent == 0 {
            return Err(Error::InvalidTarget("exponent n must be positive".into()));
        }
        match &o1 {
            O1::Follower {
                coefficients,
                eigensystem,
            } => {
                if let Some(&level) = coefficients.levels().iter().find(|&&l| l >= eigensystem.len()) {
                    return Err(Error::InvalidTarget(format!(
                        "follower uses level {level} but only {} eigenstates are available",
                        eigensystem.len()
                    )));
                }
            }
            O1::MovingDensity { sigma, .. } => check_sigma(*sigma)?,
            O1::None => {}
        }
        match &o2 {
            O2::LocalDensity { sigma, .. } => check_sigma(*sigma)?,
            O2::Projector(phi) if phi.norm_sqr() == 0.0 => {
                return Err(Error::InvalidTarget("projector onto the zero state".into()))
            }
            _ => {}
        }
        Ok(Self {
            o1,
            o2,
            exponent,
            density_norm: DensityNorm::default(),
        })
    }

    /// `O1 = O2 = 0`; `J1` vanishes identically.
    pub fn null() -> Self {
        Self {
            o1: O1::None,
            o2: O2::None,
            exponent: 1,
            density_norm: DensityNorm::default(),
        }
    }

    pub fn with_density_norm(mut self, norm: DensityNorm) -> Self {
        self.density_norm = norm;
        self
    }

    pub fn with_exponent(mut self, exponent: u32) -> Result<Self> {
        if exponent == 0 {
            return Err(Error::InvalidTarget("exponent n must be positive".into()));
        }
        self.exponent = exponent;
        Ok(self)
    }

    pub fn o1(&self) -> &O1 {
        &self.o1
    }

    pub fn o2(&self) -> &O2 {
        &self.o2
    }

    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    pub fn density_norm(&self) -> DensityNorm {
        self.density_norm
    }

    pub fn has_o1(&self) -> bool {
        !matches!(self.o1, O1::None)
    }

    pub fn has_o2(&self) -> bool {
        !matches!(self.o2, O2::None)
    }

    /// Checks that every operator lives in `basis` with `dim` amplitudes.
    pub fn check_basis(&self, basis: Basis, dim: usize) -> Result<()> {
        let grid_ok = |g: &Grid| basis == Basis::Grid { dx: g.dx() } && g.n_points() == dim;
        let ok = match &self.o1 {
            O1::None => true,
            O1::Follower { eigensystem, .. } => {
                eigensystem.basis() == basis && eigensystem.states()[0].len() == dim
            }
            O1::MovingDensity { grid, .. } => grid_ok(grid),
        } && match &self.o2 {
            O2::None => true,
            O2::Projector(phi) => phi.basis() == basis && phi.len() == dim,
            O2::LocalDensity { grid, .. } => grid_ok(grid),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::BasisMismatch)
        }
    }

    /// Writes `O1(t) ψ` into `out` and returns `⟨ψ|O1(t)|ψ⟩`; raw amplitudes
    /// with quadrature weight `weight`.
    pub fn apply_o1_into(&self, t: f64, psi: &[Complex64], weight: f64, out: &mut [Complex64]) -> f64 {
        match &self.o1 {
            O1::None => {
                out.fill(Complex64::new(0.0, 0.0));
                0.0
            }
            O1::Follower {
                coefficients,
                eigensystem,
            } => {
                follower_into(coefficients, t, eigensystem, out)
                    .expect("levels validated at construction");
                project_onto(out, psi, weight)
            }
            O1::MovingDensity { path, sigma, grid } => {
                gaussian_multiply(grid, path.at(t), *sigma, self.density_norm, psi, out);
                (raw_inner(psi, out) * weight).re
            }
        }
    }

    /// Writes `O2 ψ` into `out` and returns `⟨ψ|O2|ψ⟩`.
    pub fn apply_o2_into(&self, psi: &[Complex64], weight: f64, out: &mut [Complex64]) -> f64 {
        match &self.o2 {
            O2::None => {
                out.fill(Complex64::new(0.0, 0.0));
                0.0
            }
            O2::Projector(phi) => {
                out.copy_from_slice(phi.amplitudes());
                project_onto(out, psi, weight)
            }
            O2::LocalDensity { x0, sigma, grid } => {
                gaussian_multiply(grid, *x0, *sigma, self.density_norm, psi, out);
                (raw_inner(psi, out) * weight).re
            }
        }
    }
}

/// `phi ← phi ⟨phi|psi⟩`, returning `|⟨phi|psi⟩|²`.
fn project_onto(phi: &mut [Complex64], psi: &[Complex64], weight: f64) -> f64 {
    let overlap = raw_inner(phi, psi) * weight;
    for p in phi.iter_mut() {
        *p *= overlap;
    }
    overlap.norm_sqr()
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTarget(format!("σ = {sigma} must be positive")))
    }
}

fn gaussian_multiply(
    grid: &Grid,
    center: f64,
    sigma: f64,
    norm: DensityNorm,
    psi: &[Complex64],
    out: &mut [Complex64],
) {
    let pre = norm.prefactor(sigma);
    for (j, (o, p)) in out.iter_mut().zip(psi).enumerate() {
        let d = grid.x(j) - center;
        *o = p * (pre * (-sigma * d * d).exp());
    }
}

/// `O1(t) ψ`; the zero state when `O1` is absent.
pub fn apply_o1(spec: &TargetSpec, psi: &QuantumState, t: f64) -> Result<QuantumState> {
    spec.check_basis(psi.basis(), psi.len())?;
    let mut out = QuantumState::zeros(psi.len(), psi.basis());
    spec.apply_o1_into(t, psi.amplitudes(), psi.basis().weight(), out.amplitudes_mut());
    out.set_time(t);
    Ok(out)
}

/// `⟨ψ|O1(t)|ψ⟩ ≥ 0`.
pub fn expectation_o1(spec: &TargetSpec, psi: &QuantumState, t: f64) -> Result<f64> {
    spec.check_basis(psi.basis(), psi.len())?;
    let mut scratch = alloc::vec![Complex64::new(0.0, 0.0); psi.len()];
    Ok(spec.apply_o1_into(t, psi.amplitudes(), psi.basis().weight(), &mut scratch))
}

/// `⟨ψ|O2|ψ⟩ ≥ 0`.
pub fn expectation_o2(spec: &TargetSpec, psi: &QuantumState) -> Result<f64> {
    spec.check_basis(psi.basis(), psi.len())?;
    let mut scratch = alloc::vec![Complex64::new(0.0, 0.0); psi.len()];
    Ok(spec.apply_o2_into(psi.amplitudes(), psi.basis().weight(), &mut scratch))
}

/// `J1 = (1/T) ∫ ⟨O1(t)⟩ⁿ dt + ⟨O2⟩ⁿ(T)`, trapezoid over the stored states.
pub fn j1_value(spec: &TargetSpec, trajectory: &StateTrajectory) -> Result<f64> {
    let time = trajectory.time_grid();
    let states = trajectory.states();
    let stride = trajectory.stride();
    if stride == 0 || (states.len() - 1) * stride != time.n_steps() {
        return Err(Error::LengthMismatch {
            expected: time.n_steps() / stride.max(1) + 1,
            found: states.len(),
        });
    }
    let n = spec.exponent as i32;
    let last = states.len() - 1;
    let mut integral = 0.0;
    if spec.has_o1() {
        for (k, s) in states.iter().enumerate() {
            let w = if k == 0 || k == last { 0.5 } else { 1.0 };
            let t = time.t(trajectory.step_index(k));
            integral += w * expectation_o1(spec, s, t)?.powi(n);
        }
    }
    let mut j1 = integral * stride as f64 * time.dt() / time.total_time();
    if spec.has_o2() {
        j1 += expectation_o2(spec, &states[last])?.powi(n);
    }
    Ok(j1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::inner_product;
    use crate::system::TwoLevelSystem;

    fn tls_eig() -> EigenSystem {
        EigenSystem::two_level(&TwoLevelSystem::atom())
    }

    fn follower(shape: CoeffShape) -> TargetSpec {
        TargetSpec::new(
            O1::Follower {
                coefficients: CoeffTrajectory::preset(shape).unwrap(),
                eigensystem: tls_eig(),
            },
            O2::None,
            1,
        )
        .unwrap()
    }

    #[test]
    fn v_shape_endpoints_and_midpoint() {
        let eig = tls_eig();
        let c = CoeffTrajectory::preset(CoeffShape::VShape { total_time: 400.0 }).unwrap();
        let phi0 = follower_state(&c, 0.0, &eig).unwrap();
        assert_eq!(phi0.amplitudes(), QuantumState::level(2, 0).amplitudes());
        let mid = follower_state(&c, 200.0, &eig).unwrap();
        assert!(mid.amplitudes()[0].norm() < 1e-15);
        assert!((mid.amplitudes()[1].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn follower_norm_is_one() {
        let eig = tls_eig();
        for shape in [
            CoeffShape::VShape { total_time: 400.0 },
            CoeffShape::Step { t_on: 100.0, t_off: 250.0 },
            CoeffShape::Cosine { omega: 0.013 },
        ] {
            let c = CoeffTrajectory::preset(shape).unwrap();
            for k in 0..100 {
                let t = 4.0 * k as f64 + 0.37;
                let phi = follower_state(&c, t, &eig).unwrap();
                assert!((phi.norm_sqr() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn follower_level_out_of_range() {
        let c = CoeffTrajectory::new(CoeffShape::Cosine { omega: 1.0 }, alloc::vec![0, 5]).unwrap();
        assert!(follower_state(&c, 0.0, &tls_eig()).is_err());
    }

    #[test]
    fn sampled_coefficients_must_be_normalized() {
        let shape = CoeffShape::Sampled {
            times: alloc::vec![0.0, 1.0],
            amplitudes: alloc::vec![
                alloc::vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
                alloc::vec![Complex64::new(0.9, 0.0), Complex64::new(0.0, 0.0)],
            ],
        };
        assert!(CoeffTrajectory::new(shape, alloc::vec![0, 1]).is_err());
    }

    #[test]
    fn follower_projector_properties() {
        let spec = follower(CoeffShape::Cosine { omega: 0.01 });
        let eig = tls_eig();
        let O1::Follower { coefficients, .. } = spec.o1() else { unreachable!() };
        let t = 37.0;
        let phi = follower_state(coefficients, t, &eig).unwrap();
        // ψ = Φ: unchanged, expectation 1
        let out = apply_o1(&spec, &phi, t).unwrap();
        for (a, b) in out.amplitudes().iter().zip(phi.amplitudes()) {
            assert!((a - b).norm() < 1e-14);
        }
        assert!((expectation_o1(&spec, &phi, t).unwrap() - 1.0).abs() < 1e-12);
        // orthogonal complement
        let a = phi.amplitudes();
        let perp = QuantumState::new(alloc::vec![-a[1].conj(), a[0].conj()], Basis::Levels);
        assert!(inner_product(&phi, &perp).unwrap().norm() < 1e-15);
        let zero = apply_o1(&spec, &perp, t).unwrap();
        assert!(zero.norm() < 1e-15);
        let mut half = phi.clone();
        half.add_scaled(Complex64::new(1.0, 0.0), &perp).unwrap();
        half.scale(Complex64::new(1.0 / 2f64.sqrt(), 0.0));
        assert!((expectation_o1(&spec, &half, t).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn moving_density_peaks_at_path() {
        let grid = Grid::new(-10.0, 10.0, 128).unwrap();
        let path = PathTrajectory::new(alloc::vec![0.0, 10.0], alloc::vec![-2.0, 3.0]).unwrap();
        let spec = TargetSpec::new(
            O1::MovingDensity { path, sigma: 10.0, grid },
            O2::None,
            1,
        )
        .unwrap();
        let flat = QuantumState::from_fn(&grid, |_| Complex64::new(0.1, 0.0));
        let t = 6.0; // r = 1.0
        let out = apply_o1(&spec, &flat, t).unwrap();
        let (jmax, _) = out
            .amplitudes()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap();
        assert!((grid.x(jmax) - 1.0).abs() <= grid.dx());
    }

    #[test]
    fn null_and_invalid_targets() {
        assert!(TargetSpec::new(O1::None, O2::None, 1).is_err());
        let phi = QuantumState::level(2, 1);
        assert!(TargetSpec::new(O1::None, O2::Projector(phi.clone()), 0).is_err());
        let spec = TargetSpec::new(O1::None, O2::Projector(phi), 1).unwrap();
        let psi = QuantumState::level(2, 0);
        assert_eq!(expectation_o1(&spec, &psi, 1.0).unwrap(), 0.0);
        assert_eq!(apply_o1(&spec, &psi, 1.0).unwrap().norm(), 0.0);
        assert_eq!(expectation_o2(&spec, &psi).unwrap(), 0.0);
    }

    #[test]
    fn step_shape() {
        let c = CoeffTrajectory::preset(CoeffShape::Step { t_on: 1.0, t_off: 2.0 }).unwrap();
        assert_eq!(c.amplitudes(0.5)[0].re, 1.0);
        assert_eq!(c.amplitudes(1.5)[0].re, 0.0);
        assert_eq!(c.amplitudes(2.0)[0].re, 1.0);
    }
}
