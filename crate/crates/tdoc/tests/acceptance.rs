//! Acceptance criteria 1–9, one line each.
//!
//! `cargo test --test acceptance` runs all of them; `-- 3 7` runs a subset.
//! The 2048-point hydrogen run (≈ 10–30 min) is included only with
//! `TDOC_FULL_GRID=1`. `TDOC_BLESS=1` rewrites the golden files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use tdoc::artifacts::{Experiment, RunArtifacts};
use tdoc::config::ExperimentConfig;
use tdoc::presets::preset;
use tdoc::problem;
use tdoc::validate::{deep_suite, spo_order_ratio};
use tdoc_core::control::Outcome;
use tdoc_core::eigen::compute_eigensystem;
use tdoc_core::field::ControlField;
use tdoc_core::system::{ATOM_DIPOLE, ATOM_GAP};

type Verdict = Result<(bool, String), String>;

fn main() {
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let scratch = tempfile::tempdir().expect("temp dir");
    let mut ctx = Context {
        scratch: scratch.path().to_path_buf(),
        two_level: None,
    };
    let criteria: [(usize, &str, fn(&mut Context) -> Verdict); 9] = [
        (1, "two-level V target", two_level_vshape),
        (2, "hydrogen V target", hydrogen_vshape),
        (3, "eigensystem fidelity", eigensystem),
        (4, "monotonicity", monotonicity),
        (5, "penalty factor", penalty_factor),
        (6, "moving density", moving_density),
        (7, "propagator order", propagator_order),
        (8, "property suites", property_suites),
        (9, "golden files", golden_files),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = f(&mut ctx).unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!ok);
        println!(
            "criterion {n} {name:<22} {} [{:.0} s] {detail}",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

struct Context {
    scratch: PathBuf,
    two_level: Option<TwoLevelRun>,
}

impl Context {
    fn dir(&self, name: &str) -> PathBuf {
        self.scratch.join(name)
    }

    /// The converged two-level V-target run, shared by criteria 1, 8 and 9.
    fn two_level(&mut self) -> Result<&TwoLevelRun, String> {
        if self.two_level.is_none() {
            self.two_level = Some(run_two_level(&self.dir("tls-vshape"))?);
        }
        Ok(self.two_level.as_ref().unwrap())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

struct TwoLevelRun {
    artifacts: RunArtifacts,
    /// `(J1 level, J1 reached, max occupation error)` at the first
    /// iterate past each level.
    snapshots: Vec<(f64, f64, f64)>,
    residual: f64,
    threshold: f64,
    seconds: f64,
}

fn tls_vshape(dir: &Path) -> ExperimentConfig {
    let mut c = preset("tls-vshape").unwrap();
    c.time.total = 200.0;
    c.output.dir = dir.to_path_buf();
    c
}

fn run_two_level(dir: &Path) -> Result<TwoLevelRun, String> {
    let config = tls_vshape(dir);
    let start = Instant::now();
    let mut experiment = Experiment::new(config.clone()).map_err(err)?;
    let levels = [0.90, 0.95, 0.99];
    let mut fields: Vec<(f64, f64, ControlField)> = Vec::new();
    let outcome = experiment
        .run_with(|opt, r| {
            if let Some(&level) = levels.get(fields.len()) {
                if r.j1 >= level {
                    fields.push((level, r.j1, opt.field()));
                }
            }
            true
        })
        .map_err(err)?;
    let seconds = start.elapsed().as_secs_f64();
    let residual = experiment.optimizer.stationarity_residual().map_err(err)?;
    let artifacts = experiment.finish(outcome).map_err(err)?;
    let mut snapshots = Vec::new();
    for (level, j1, field) in fields {
        let mut c = config.clone();
        c.output.dir = dir.join(format!("j1_{level}"));
        let mut e = Experiment::new(c).map_err(err)?;
        e.optimizer.reset_field(&field).map_err(err)?;
        let a = e.finish(Outcome::MaxIterations).map_err(err)?;
        snapshots.push((level, j1, a.max_occupation_error().unwrap()));
    }
    Ok(TwoLevelRun {
        artifacts,
        snapshots,
        residual,
        threshold: config.control.threshold,
        seconds,
    })
}

fn two_level_vshape(ctx: &mut Context) -> Verdict {
    let run = ctx.two_level()?;
    let a = &run.artifacts;
    let r = &a.final_record;
    let final_error = a.max_occupation_error().unwrap();
    let at_95 = run.snapshots.iter().find(|s| s.0 == 0.95).map(|s| s.2);
    let ok = a.outcome == Outcome::Converged
        && r.j1 >= 0.999
        && r.delta_j.abs() <= 1e-8
        && run.snapshots.len() == 3
        && at_95.is_some_and(|e| e >= 3.0 * final_error)
        && run.seconds <= 120.0;
    let snaps: Vec<String> = run
        .snapshots
        .iter()
        .map(|(l, j1, e)| format!("J1≥{l}: J1 = {j1:.4}, max occ. error {e:.3}"))
        .collect();
    Ok((
        ok,
        format!(
            "{} iterations, J1 = {:.5}, δJ = {:.1e}, max occ. error {final_error:.4}; {}; {:.0} s (≤ 120)",
            a.iterations,
            r.j1,
            r.delta_j,
            snaps.join("; "),
            run.seconds
        ),
    ))
}

/// Runs until convergence or `limit` seconds; also returns when `J1`
/// first reached `goal`.
fn hydrogen_run(mut c: ExperimentConfig, goal: f64, limit: f64) -> Result<(RunArtifacts, Option<f64>), String> {
    let start = Instant::now();
    c.control.max_iterations = 100_000;
    let mut e = Experiment::new(c).map_err(err)?;
    let mut reached = None;
    let outcome = e
        .run_with(|_, r| {
            let elapsed = start.elapsed().as_secs_f64();
            if r.j1 >= goal && reached.is_none() {
                reached = Some(elapsed);
            }
            elapsed < limit
        })
        .map_err(err)?;
    Ok((e.finish(outcome).map_err(err)?, reached))
}

fn hydrogen_summary(a: &RunArtifacts) -> (f64, f64, String) {
    let loss = 1.0 - a.norms.iter().cloned().fold(f64::INFINITY, f64::min);
    let higher = a
        .occupations
        .iter()
        .map(|p| p[2..].iter().sum::<f64>())
        .fold(0.0, f64::max);
    let r = &a.final_record;
    let detail = format!(
        "{} iterations, J1 = {:.4}, δJ = {:.1e}, norm loss {loss:.1e} (≤ 5e-3), max p≥2 {higher:.1e} (≤ 0.02)",
        a.iterations, r.j1, r.delta_j
    );
    (loss, higher, detail)
}

fn hydrogen_vshape(ctx: &mut Context) -> Verdict {
    let mut c = preset("h1d-vshape-ci").unwrap();
    c.output.dir = ctx.dir("h1d-ci");
    let (a, reached) = hydrogen_run(c, 0.90, 300.0)?;
    let (loss, higher, detail) = hydrogen_summary(&a);
    let mut ok = reached.is_some() && loss <= 5e-3 && higher <= 0.02;
    let when = |r: Option<f64>| r.map_or("never".to_string(), |s| format!("after {s:.0} s"));
    let mut text = format!("512 points, T = 200: J1 ≥ 0.90 {} (≤ 300); {detail}", when(reached));
    if std::env::var_os("TDOC_FULL_GRID").is_some() {
        let mut c = preset("h1d-vshape").unwrap();
        c.output.dir = ctx.dir("h1d");
        let (a, reached) = hydrogen_run(c, 0.95, 1800.0)?;
        let (loss, higher, detail) = hydrogen_summary(&a);
        ok &= a.outcome == Outcome::Converged && reached.is_some() && loss <= 5e-3 && higher <= 0.02;
        text += &format!("; 2048 points, T = 400: J1 ≥ 0.95 {} (≤ 1800), {detail}", when(reached));
    } else {
        text += "; 2048-point run skipped (TDOC_FULL_GRID=1)";
    }
    Ok((ok, text))
}

fn eigensystem(_: &mut Context) -> Verdict {
    let c = preset("h1d-vshape").unwrap();
    let system = problem::build_system(&c.system).map_err(err)?;
    let eig = compute_eigensystem(&system, 2).map_err(err)?;
    let gap = eig.energies()[1] - eig.energies()[0];
    let dipole = system
        .dipole_matrix_element(&eig.states()[1], &eig.states()[0])
        .map_err(err)?
        .norm();
    let ok = (gap - ATOM_GAP).abs() <= 0.002 && (dipole - ATOM_DIPOLE).abs() <= 0.01;
    Ok((ok, format!("2048 points: ω01 = {gap:.5} (0.395 ± 0.002), |P01| = {dipole:.5} (1.05 ± 0.01)")))
}

/// Smallest `δJ` over a run of exactly `iterations` iterations.
fn worst_step(mut c: ExperimentConfig, iterations: usize) -> Result<f64, String> {
    c.control.threshold = 0.0;
    c.control.max_iterations = iterations;
    let mut e = Experiment::new(c).map_err(err)?;
    let outcome = e.run().map_err(err)?;
    let trace = e.optimizer.trace();
    if outcome != Outcome::MaxIterations || trace.iterations() != iterations {
        return Err(format!("stopped early after {} iterations ({outcome:?})", trace.iterations()));
    }
    Ok(trace.records[1..].iter().map(|r| r.delta_j).fold(f64::INFINITY, f64::min))
}

fn monotonicity(ctx: &mut Context) -> Verdict {
    let base = tls_vshape(&ctx.dir("monotonicity"));
    let values = [0.5, 1.0, 1.5, 2.0];
    let mut worst = f64::INFINITY;
    let mut runs = 0;
    for eta in values {
        for gamma in values {
            let mut c = base.clone();
            c.control.eta = eta;
            c.control.gamma = gamma;
            let w = worst_step(c, 200).map_err(|e| format!("η = {eta}, γ = {gamma}: {e}"))?;
            worst = worst.min(w);
            runs += 1;
        }
    }
    for n in 2..=4 {
        for (eta, gamma) in [(1.0, 1.0), (2.0, 2.0)] {
            let mut c = base.clone();
            c.target.exponent = n;
            c.control.eta = eta;
            c.control.gamma = gamma;
            let w = worst_step(c, 200).map_err(|e| format!("n = {n}: {e}"))?;
            worst = worst.min(w);
            runs += 1;
        }
    }
    Ok((
        worst >= -1e-8,
        format!("{runs} runs × 200 iterations ((η, γ) ∈ {{0.5, 1, 1.5, 2}}², n = 2..4), min δJ = {worst:.2e} (≥ -1e-8)"),
    ))
}

/// 10–90 % widths of the down step of `p0` in `[T/6, T/2]` and the up step
/// in `[T/2, 5T/6]`.
fn transition_widths(a: &RunArtifacts, total: f64) -> Option<(f64, f64)> {
    let p0: Vec<(f64, f64)> = a.times.iter().zip(&a.occupations).map(|(&t, p)| (t, p[0])).collect();
    let window = |lo: f64, hi: f64| p0.iter().copied().filter(move |(t, _)| *t >= lo && *t <= hi);
    let width = |lo: f64, hi: f64, start: &dyn Fn(f64) -> bool, end: &dyn Fn(f64) -> bool| {
        let t_end = window(lo, hi).find(|&(_, p)| end(p))?.0;
        let t_start = window(lo, t_end).filter(|&(_, p)| start(p)).last()?.0;
        Some(t_end - t_start)
    };
    let down = width(total / 6.0, total / 2.0, &|p| p >= 0.9, &|p| p <= 0.1)?;
    let up = width(total / 2.0, 5.0 * total / 6.0, &|p| p <= 0.1, &|p| p >= 0.9)?;
    Some((down, up))
}

fn penalty_factor(ctx: &mut Context) -> Verdict {
    let mut rows = Vec::new();
    for alpha in [0.05, 0.2, 0.5] {
        let mut c = preset("tls-step").unwrap();
        c.time.total = 200.0;
        c.control.alpha = alpha;
        c.control.max_iterations = 1500;
        c.output.stride = 10;
        c.output.dir = ctx.dir(&format!("step_{alpha}"));
        let a = tdoc::run_experiment(&c).map_err(err)?;
        let widths = transition_widths(&a, c.time.total)
            .ok_or_else(|| format!("α = {alpha}: occupation steps not resolved (J1 = {:.3})", a.final_record.j1))?;
        rows.push((alpha, a.final_record.max_field, widths, a.final_record.j1));
    }
    let ok = rows.windows(2).all(|w| {
        w[1].1 < w[0].1 && w[1].2 .0 >= w[0].2 .0 && w[1].2 .1 >= w[0].2 .1
    });
    let detail: Vec<String> = rows
        .iter()
        .map(|(a, m, (d, u), j1)| format!("α = {a}: max|ε| = {m:.4}, widths {d:.1}/{u:.1}, J1 = {j1:.3}"))
        .collect();
    Ok((ok, detail.join("; ")))
}

fn moving_density(ctx: &mut Context) -> Verdict {
    let mut rows = Vec::new();
    for n in 1..=4 {
        let mut c = preset("moving-density-ci").unwrap();
        c.output.dir = ctx.dir(&format!("md_n{n}"));
        c.target.exponent = n;
        let a = tdoc::run_experiment(&c).map_err(err)?;
        let reference = a.reference.as_ref().unwrap();
        let rms = (reference.iter().map(|r| r * r).sum::<f64>() / reference.len() as f64).sqrt();
        rows.push((n, a.tracking_error().unwrap(), rms, a.iterations));
    }
    let (_, e1, rms, _) = rows[0];
    let ok = e1 <= 0.15 * rms && rows.windows(2).all(|w| w[1].1 >= w[0].1);
    let detail: Vec<String> = rows
        .iter()
        .map(|(n, e, _, k)| format!("n = {n}: ⟨|x - r|⟩ = {e:.4} ({k} it.)"))
        .collect();
    Ok((ok, format!("reference RMS {rms:.4} (bound {:.4}); {}", 0.15 * rms, detail.join(", "))))
}

fn propagator_order(_: &mut Context) -> Verdict {
    let (ratio, coarse, fine) = spo_order_ratio().map_err(err)?;
    Ok((
        (3.5..=4.5).contains(&ratio),
        format!("64 points: error {coarse:.3e} → {fine:.3e} when dt halves, ratio {ratio:.3} (3.5–4.5)"),
    ))
}

fn property_suites(ctx: &mut Context) -> Verdict {
    let start = Instant::now();
    let report = deep_suite();
    let seconds = start.elapsed().as_secs_f64();
    let run = ctx.two_level()?;
    let bound = 10.0 * run.threshold.sqrt();
    let ok = report.passed() && run.residual <= bound && seconds <= 600.0;
    let failures: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
    Ok((
        ok,
        format!(
            "{} oracle checks{} in {seconds:.0} s; stationarity residual at convergence {:.2e} (≤ {bound:.0e})",
            report.checks.len(),
            if failures.is_empty() { String::new() } else { format!(", failed: {}", failures.join(", ")) },
            run.residual
        ),
    ))
}

// ---------------------------------------------------------------------------
// Golden files

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// A short fixed-iteration run whose every output row is locked.
fn short_run(dir: &Path) -> Result<RunArtifacts, String> {
    let mut c = preset("tls-vshape").unwrap();
    c.time.total = 30.0;
    c.control.max_iterations = 8;
    c.output.stride = 50;
    c.output.dir = dir.to_path_buf();
    tdoc::run_experiment(&c).map_err(err)
}

fn snapshot(short: &RunArtifacts, converged: &RunArtifacts) -> Value {
    json!({
        "short": {
            "trace": short.trace.iter().map(|r| [r.j1, r.j2, r.delta_j, r.max_field]).collect::<Vec<_>>(),
            "occupations": short.occupations,
            "field": short.field.samples(),
        },
        "converged": {
            "iterations": converged.iterations,
            "j1": converged.final_record.j1,
            "j2": converged.final_record.j2,
            "j": converged.final_record.j,
            "max_field": converged.final_record.max_field,
        },
    })
}

/// Largest absolute difference between numeric leaves; `None` when the
/// shapes differ.
fn max_deviation(a: &Value, b: &Value) -> Option<f64> {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => Some((x.as_f64()? - y.as_f64()?).abs()),
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => x
            .iter()
            .zip(y)
            .map(|(x, y)| max_deviation(x, y))
            .try_fold(0.0, |m: f64, d| Some(m.max(d?))),
        (Value::Object(x), Value::Object(y)) if x.len() == y.len() => x
            .iter()
            .map(|(k, v)| max_deviation(v, y.get(k)?))
            .try_fold(0.0, |m: f64, d| Some(m.max(d?))),
        _ => None,
    }
}

fn golden_files(ctx: &mut Context) -> Verdict {
    let short = short_run(&ctx.dir("golden-short"))?;
    let current = snapshot(&short, &ctx.two_level()?.artifacts);
    let file = golden_dir().join("tls_vshape.json");
    if std::env::var_os("TDOC_BLESS").is_some() {
        std::fs::create_dir_all(golden_dir()).map_err(err)?;
        std::fs::write(&file, serde_json::to_string_pretty(&current).unwrap()).map_err(err)?;
        return Ok((true, format!("wrote {}", file.display())));
    }
    let text = std::fs::read_to_string(&file).map_err(|e| format!("{}: {e}", file.display()))?;
    let golden: Value = serde_json::from_str(&text).map_err(err)?;
    match max_deviation(&golden, &current) {
        Some(d) => Ok((
            d <= 1e-10,
            format!("max deviation from tests/golden/tls_vshape.json {d:.1e} (≤ 1e-10)"),
        )),
        None => Ok((false, "output shape differs from the golden file".into())),
    }
}
