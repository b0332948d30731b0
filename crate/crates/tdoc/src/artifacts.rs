//! One optimization run and the files it leaves behind.
//!
//! A run directory holds:
//!
//! - `occupations.csv`: `t, p0 … p{m-1}, norm` and, for follower targets,
//!   the prescribed `target_p{n}` columns;
//! - `field.csv`: `t, field, abs, envelope` (Hilbert amplitude);
//! - `position.csv` (grid systems): `t, x` and the reference `r` if any;
//! - `trace.csv`: one row per iteration;
//! - `metadata.json`: config echo, control parameters, versions, FFT count,
//!   outcome;
//! - `timing.json`: wall-clock times, kept apart so that everything else is
//!   bit-identical between runs of the same config;
//! - `checkpoint.bin`: the final field (see [`crate::checkpoint`]).
//!
//! Series are sampled every `output.stride` steps, `n_steps/stride + 1` rows.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;
use tdoc_core::control::{IterationRecord, Optimizer, Outcome};
use tdoc_core::fft::Fft;
use tdoc_core::field::ControlField;
use tdoc_core::propagation::StateTrajectory;
use tdoc_core::state::{expectation_position, occupations};
use tdoc_core::target::O1;
use tdoc_core::Complex64;

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::problem::Problem;
use crate::table;

/// Process exit code for an outcome.
pub fn exit_code(outcome: Outcome) -> i32 {
    match outcome {
        Outcome::Converged => 0,
        Outcome::MaxIterations => 2,
        Outcome::MonotonicityAbort => 3,
    }
}

pub fn outcome_name(outcome: Outcome) -> &'static str {
    match outcome {
        Outcome::Converged => "converged",
        Outcome::MaxIterations => "max_iterations",
        Outcome::MonotonicityAbort => "monotonicity_abort",
    }
}

/// A configured run: the problem, its optimizer and the resume state.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub problem: Problem,
    pub optimizer: Optimizer,
    /// Iterations done before a resume.
    offset: usize,
    /// `J` values of those iterations.
    history: Vec<f64>,
    started: Instant,
}

impl std::fmt::Debug for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Experiment")
            .field("name", &self.config.name)
            .field("optimizer", &self.optimizer)
            .field("offset", &self.offset)
            .finish_non_exhaustive()
    }
}

impl Experiment {
    /// Builds the problem and runs the initial propagation, starting from
    /// the checkpoint named in `output.resume` if there is one.
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let started = Instant::now();
        let problem = Problem::build(&config)?;
        let mut optimizer = Optimizer::new(
            &problem.system,
            problem.target.clone(),
            &problem.psi0,
            problem.params.clone(),
        )?;
        let clock = Instant::now();
        optimizer = optimizer.with_clock(Box::new(move || clock.elapsed().as_secs_f64()));
        let (offset, history) = match &config.output.resume {
            Some(path) => {
                let ckpt = Checkpoint::read(path)?;
                if ckpt.field.time_grid() != problem.time {
                    return Err(Error::format(path, "checkpoint time grid differs from the config"));
                }
                optimizer.reset_field(&ckpt.field)?;
                let mut history = ckpt.j_history;
                history.pop();
                (ckpt.iteration as usize, history)
            }
            None => (0, Vec::new()),
        };
        Ok(Self {
            config,
            problem,
            optimizer,
            offset,
            history,
            started,
        })
    }

    /// Iterations completed, counting those before a resume.
    pub fn iterations(&self) -> usize {
        self.offset + self.optimizer.trace().iterations()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut j_history = self.history.clone();
        j_history.extend(self.optimizer.trace().records.iter().map(|r| r.j));
        Checkpoint {
            iteration: self.iterations() as u64,
            j_history,
            field: self.optimizer.field(),
        }
    }

    /// Iterates until convergence, the iteration limit, a monotonicity abort
    /// or until `observer` returns `false` (reported as the iteration limit).
    pub fn run_with(
        &mut self,
        mut observer: impl FnMut(&Optimizer, &IterationRecord) -> bool,
    ) -> Result<Outcome> {
        let checkpoint = self
            .config
            .output
            .checkpoint
            .then(|| self.config.output.dir.join("checkpoint.bin"));
        if checkpoint.is_some() {
            create_dir(&self.config.output.dir)?;
        }
        while self.iterations() < self.config.control.max_iterations {
            let record = self.optimizer.iterate()?;
            if let Some(path) = &checkpoint {
                self.checkpoint().write(path)?;
            }
            if let Some(outcome) = self.optimizer.stop_reason() {
                return Ok(outcome);
            }
            if !observer(&self.optimizer, &record) {
                break;
            }
        }
        Ok(Outcome::MaxIterations)
    }

    pub fn run(&mut self) -> Result<Outcome> {
        self.run_with(|_, _| true)
    }

    /// Re-propagates the final field, computes every series and writes
    /// them to `output.dir`.
    pub fn finish(mut self, outcome: Outcome) -> Result<RunArtifacts> {
        let artifacts = self.collect(outcome)?;
        artifacts.write(&self.config)?;
        self.checkpoint().write(&artifacts.dir.join("checkpoint.bin"))?;
        Ok(artifacts)
    }

    fn collect(&mut self, outcome: Outcome) -> Result<RunArtifacts> {
        let stride = self.config.output.stride;
        let trajectory = self.optimizer.trajectory(stride)?;
        let time = self.problem.time;
        let times: Vec<f64> = (0..trajectory.states().len())
            .map(|k| time.t(trajectory.step_index(k)))
            .collect();
        let eig = &self.problem.eigensystem;
        let occupation_rows = trajectory
            .states()
            .iter()
            .map(|s| occupations(s, eig))
            .collect::<tdoc_core::Result<Vec<_>>>()?;
        let norms = trajectory.states().iter().map(|s| s.norm_sqr()).collect();
        let target = match self.problem.target.o1() {
            O1::Follower { coefficients, .. } => Some(TargetSeries {
                levels: coefficients.levels().to_vec(),
                rows: times
                    .iter()
                    .map(|&t| coefficients.amplitudes(t).iter().map(|a| a.norm_sqr()).collect())
                    .collect(),
            }),
            _ => None,
        };
        let positions = match self.problem.grid() {
            Some(grid) => Some(
                trajectory
                    .states()
                    .iter()
                    .map(|s| expectation_position(s, grid))
                    .collect::<tdoc_core::Result<Vec<_>>>()?,
            ),
            None => None,
        };
        let reference = self
            .problem
            .path
            .as_ref()
            .map(|p| times.iter().map(|&t| p.at(t)).collect());
        let field = self.optimizer.field();
        let envelope = subsample(&hilbert_envelope(&step_values(&field))?, stride);
        let trace = self.optimizer.trace().clone();
        let last = *trace.last().expect("record 0 exists");
        Ok(RunArtifacts {
            dir: self.config.output.dir.clone(),
            outcome,
            iterations: self.iterations(),
            resumed_from: self.offset,
            final_record: last,
            trace: trace.records,
            field,
            times,
            occupations: occupation_rows,
            norms,
            target,
            positions,
            reference,
            envelope,
            trajectory,
            fft_count: self.optimizer.fft_count(),
            segment: self.optimizer.segment(),
            energies: eig.energies().to_vec(),
            wall_time: self.started.elapsed().as_secs_f64(),
        })
    }
}

/// Prescribed populations of a follower target, one row per output time.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSeries {
    pub levels: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub outcome: Outcome,
    /// Total iterations, including those before a resume.
    pub iterations: usize,
    pub resumed_from: usize,
    pub final_record: IterationRecord,
    /// Records of this process (restarting at `k = 0` after a resume).
    pub trace: Vec<IterationRecord>,
    pub field: ControlField,
    pub times: Vec<f64>,
    pub occupations: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
    pub target: Option<TargetSeries>,
    pub positions: Option<Vec<f64>>,
    pub reference: Option<Vec<f64>>,
    pub envelope: Vec<f64>,
    pub trajectory: StateTrajectory,
    pub fft_count: u64,
    pub segment: Option<usize>,
    pub energies: Vec<f64>,
    pub wall_time: f64,
}

impl RunArtifacts {
    pub fn exit_code(&self) -> i32 {
        exit_code(self.outcome)
    }

    /// Largest `|p_n(t) - target_n(t)|` over the output rows.
    pub fn max_occupation_error(&self) -> Option<f64> {
        let target = self.target.as_ref()?;
        let mut worst: f64 = 0.0;
        for (row, want) in self.occupations.iter().zip(&target.rows) {
            for (&level, &p) in target.levels.iter().zip(want) {
                worst = worst.max((row[level] - p).abs());
            }
        }
        Some(worst)
    }

    /// Time average of `|⟨x̂⟩ - r|` over the output rows (trapezoid rule).
    pub fn tracking_error(&self) -> Option<f64> {
        let (x, r) = (self.positions.as_ref()?, self.reference.as_ref()?);
        let d: Vec<f64> = x.iter().zip(r).map(|(a, b)| (a - b).abs()).collect();
        Some(trapezoid_mean(&d))
    }

    pub fn write(&self, config: &ExperimentConfig) -> Result<()> {
        create_dir(&self.dir)?;
        self.write_occupations()?;
        self.write_field(config.output.stride)?;
        self.write_trace()?;
        if let Some(x) = &self.positions {
            let mut header = vec!["t", "x"];
            if self.reference.is_some() {
                header.push("r");
            }
            table::write_csv(
                &self.dir.join("position.csv"),
                &header,
                self.times.iter().enumerate().map(|(k, &t)| {
                    let mut row = vec![t, x[k]];
                    if let Some(r) = &self.reference {
                        row.push(r[k]);
                    }
                    row
                }),
            )?;
        }
        write_json(&self.dir.join("metadata.json"), &self.metadata(config))?;
        write_json(
            &self.dir.join("timing.json"),
            &json!({
                "wall_time_s": self.wall_time,
                "iteration_wall_times_s": self.trace.iter().map(|r| r.wall_time).collect::<Vec<_>>(),
            }),
        )
    }

    fn write_occupations(&self) -> Result<()> {
        let m = self.energies.len();
        let mut names: Vec<String> = (0..m).map(|n| format!("p{n}")).collect();
        names.push("norm".into());
        if let Some(target) = &self.target {
            names.extend(target.levels.iter().map(|n| format!("target_p{n}")));
        }
        let header: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut full = vec!["t"];
        full.extend(header);
        table::write_csv(
            &self.dir.join("occupations.csv"),
            &full,
            self.times.iter().enumerate().map(|(k, &t)| {
                let mut row = vec![t];
                row.extend(&self.occupations[k]);
                row.push(self.norms[k]);
                if let Some(target) = &self.target {
                    row.extend(&target.rows[k]);
                }
                row
            }),
        )
    }

    fn write_field(&self, stride: usize) -> Result<()> {
        let time = self.field.time_grid();
        table::write_csv(
            &self.dir.join("field.csv"),
            &["t", "field", "abs", "envelope"],
            self.envelope.iter().enumerate().map(|(k, &env)| {
                let i = k * stride;
                let v = self.field.sample(i, 0);
                vec![time.t(i), v, v.abs(), env]
            }),
        )
    }

    fn write_trace(&self) -> Result<()> {
        table::write_csv(
            &self.dir.join("trace.csv"),
            &[
                "k",
                "j1",
                "j2",
                "j",
                "delta_j",
                "change_next",
                "change_tilde",
                "predicted_increase",
                "norm_loss",
                "max_field",
            ],
            self.trace.iter().map(|r| {
                vec![
                    (r.k + self.resumed_from) as f64,
                    r.j1,
                    r.j2,
                    r.j,
                    r.delta_j,
                    r.change_next,
                    r.change_tilde,
                    r.predicted_increase,
                    r.norm_loss,
                    r.max_field,
                ]
            }),
        )
    }

    fn metadata(&self, config: &ExperimentConfig) -> serde_json::Value {
        let c = &config.control;
        let r = &self.final_record;
        json!({
            "name": config.name,
            "config": config,
            "control_params": {
                "alpha": c.alpha,
                "eta": c.eta,
                "gamma": c.gamma,
                "max_iterations": c.max_iterations,
                "threshold": c.threshold,
                "initial_field": c.initial_field,
                "feedback": c.feedback,
                "storage": match self.segment {
                    None => "full".to_string(),
                    Some(m) => format!("checkpointed, segment {m}"),
                },
                "memory_cap": c.memory_cap,
                "monotonic_tolerance": c.monotonic_tolerance,
            },
            "versions": {
                "tdoc": env!("CARGO_PKG_VERSION"),
                "tdoc_core": tdoc_core::VERSION,
                "fft_backend": format!("{:?}", Fft::new(2).expect("length 2")),
            },
            "n_steps": self.field.time_grid().n_steps(),
            "stride": config.output.stride,
            "rows": self.times.len(),
            "energies": self.energies,
            "fft_count": self.fft_count,
            "outcome": outcome_name(self.outcome),
            "exit_code": self.exit_code(),
            "iterations": self.iterations,
            "resumed_from": self.resumed_from,
            "monotonic_violations": self.trace.iter().filter(|r| r.delta_j < -c.monotonic_tolerance).count(),
            "final": {
                "j1": r.j1,
                "j2": r.j2,
                "j": r.j,
                "delta_j": r.delta_j,
                "norm_loss": r.norm_loss,
                "max_field": r.max_field,
                "max_occupation_error": self.max_occupation_error(),
                "tracking_error": self.tracking_error(),
            },
        })
    }
}

/// Loads `config`, optimizes and writes the artifacts.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts> {
    let mut experiment = Experiment::new(config.clone())?;
    let outcome = experiment.run()?;
    experiment.finish(outcome)
}

/// `|x + i H[x]|` via the FFT, zero-padded to at least twice the length to
/// keep the wrap-around away from the ends.
pub fn hilbert_envelope(signal: &[f64]) -> Result<Vec<f64>> {
    let n = signal.len();
    let len = (2 * n).next_power_of_two().max(2);
    let fft = Fft::new(len)?;
    let mut data: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    data.resize(len, Complex64::new(0.0, 0.0));
    fft.forward(&mut data);
    let half = len / 2;
    for (k, z) in data.iter_mut().enumerate() {
        match k {
            0 => {}
            k if k < half => *z *= 2.0,
            k if k == half => {}
            _ => *z = Complex64::new(0.0, 0.0),
        }
    }
    fft.inverse(&mut data);
    Ok(data[..n].iter().map(|z| z.norm()).collect())
}

/// Every sample of a single-component field, trailing one included.
fn step_values(field: &ControlField) -> Vec<f64> {
    (0..=field.time_grid().n_steps()).map(|i| field.sample(i, 0)).collect()
}

fn subsample(v: &[f64], stride: usize) -> Vec<f64> {
    v.iter().step_by(stride).copied().collect()
}

fn trapezoid_mean(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => {
            let inner: f64 = v[1..n - 1].iter().sum();
            (inner + 0.5 * (v[0] + v[n - 1])) / (n - 1) as f64
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    text.push('\n');
    table::write_text(path, &text)
}
