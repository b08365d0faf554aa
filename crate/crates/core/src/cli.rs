//! Experiment runner behind the `dampbound` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::antiperiodic::{
    antiperiodic_exponent_sweep, antiperiodic_trajectory, oracle_forcing, shoot, write_antiperiodic_csv,
    AntiPeriodicRow,
};
use crate::bounds::{amplitude_sweep, fmt_num, write_sweep_csv, FitSummary};
use crate::config::{ConfigError, Experiment, ExperimentConfig, ForcingShape, InitialState};
use crate::damping::DampingOp;
use crate::forcing::{ForcingSignal, NormKind};
use crate::integrator::{Problem, State};
use crate::spectral::{ModalVector, OperatorKind, SpectralOperator};
use crate::verify::{format_table, run_property_suite, SuiteConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Validation = 1,
    Numerical = 2,
    Property = 3,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{experiment}: {message}")]
pub struct CliError {
    pub kind: ExitKind,
    pub experiment: String,
    pub message: String,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        self.kind as i32
    }
}

fn name(e: Experiment) -> &'static str {
    match e {
        Experiment::Simulate => "simulate",
        Experiment::Sweep => "sweep",
        Experiment::Antiperiodic => "antiperiodic",
        Experiment::Verify => "verify",
    }
}

struct Ctx {
    experiment: Experiment,
}

impl Ctx {
    fn validation(&self, e: ConfigError) -> CliError {
        CliError { kind: ExitKind::Validation, experiment: name(self.experiment).into(), message: e.to_string() }
    }
    fn numerical(&self, e: impl std::fmt::Display) -> CliError {
        CliError { kind: ExitKind::Numerical, experiment: name(self.experiment).into(), message: e.to_string() }
    }
    fn io(&self, path: &Path, e: impl std::fmt::Display) -> CliError {
        CliError {
            kind: ExitKind::Validation,
            experiment: name(self.experiment).into(),
            message: format!("{}: {e}", path.display()),
        }
    }
}

/// Files written and the text printed by a finished experiment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub report: String,
}

fn build_forcing(
    cfg: &ExperimentConfig,
    op: &SpectralOperator<f64>,
    g: &DampingOp<f64>,
    amplitude: f64,
) -> Result<ForcingSignal<f64>, ConfigError> {
    let f = &cfg.forcing;
    let n = op.num_modes();
    let wrap = |e: &dyn std::fmt::Display| ConfigError { path: "forcing".into(), message: e.to_string() };
    let phi = op.mode(f.mode);
    let signal = match f.kind {
        ForcingShape::Zero => ForcingSignal::zero(n),
        ForcingShape::Constant => ForcingSignal::constant(phi.scaled(amplitude)),
        ForcingShape::Stationary => ForcingSignal::constant(phi.scaled(amplitude * op.lambda()[f.mode - 1])),
        ForcingShape::Sinusoidal => {
            ForcingSignal::sinusoidal(phi, amplitude, cfg.omega(op), f.phase).map_err(|e| wrap(&e))?
        }
        ForcingShape::OddHarmonics => {
            ForcingSignal::odd_harmonics(n, amplitude, cfg.omega(op), f.harmonics).map_err(|e| wrap(&e))?
        }
        ForcingShape::Oracle => oracle_forcing(op, g, f.mode, amplitude).map_err(|e| wrap(&e))?,
        ForcingShape::Csv => {
            let path = f.csv.as_ref().expect("validated");
            let file = fs::File::open(path)
                .map_err(|e| ConfigError { path: "forcing.csv".into(), message: format!("{}: {e}", path.display()) })?;
            let s = ForcingSignal::from_csv(file)
                .map_err(|e| ConfigError { path: "forcing.csv".into(), message: e.to_string() })?;
            if s.dim() != n {
                return Err(ConfigError {
                    path: "forcing.csv".into(),
                    message: format!("{} coefficient columns for {n} modes", s.dim()),
                });
            }
            s.scaled(amplitude)
        }
    };
    match f.antiperiod {
        Some(tau) if signal.declared_antiperiod().is_none() => signal
            .with_antiperiod(tau)
            .map_err(|e| ConfigError { path: "forcing.antiperiod".into(), message: e.to_string() }),
        _ => Ok(signal),
    }
}

fn initial_state(
    cfg: &ExperimentConfig,
    op: &SpectralOperator<f64>,
    g: &DampingOp<f64>,
    forcing: &ForcingSignal<f64>,
) -> Result<State<f64>, ConfigError> {
    let n = op.num_modes();
    Ok(match cfg.initial_kind() {
        InitialState::Zero => State::zero(n),
        InitialState::Stationary => {
            let h = forcing.eval(0.0).map_err(|e| ConfigError { path: "forcing".into(), message: e.to_string() })?;
            let u = h.coeffs().iter().zip(op.lambda()).map(|(x, l)| x / l).collect();
            State::new(ModalVector::new(u), op.zeros(), 0.0)
        }
        InitialState::Antiperiodic => {
            let stepper = cfg.build_stepper(op)?;
            let shooting = cfg.build_shooting(op)?;
            let problem = Problem::new(op, g, forcing)
                .map_err(|e| ConfigError { path: "forcing".into(), message: e.to_string() })?;
            shoot(&problem, &shooting, &stepper)
                .map_err(|e| ConfigError { path: "simulate.initial".into(), message: e.to_string() })?
                .state
        }
        InitialState::Custom => {
            let take = |v: &Option<Vec<f64>>, path: &str| -> Result<ModalVector<f64>, ConfigError> {
                let v = v.clone().unwrap_or_else(|| vec![0.0; n]);
                if v.len() != n {
                    return Err(ConfigError { path: path.into(), message: format!("expected {n} entries, got {}", v.len()) });
                }
                Ok(ModalVector::new(v))
            };
            State::new(take(&cfg.simulate.u0, "simulate.u0")?, take(&cfg.simulate.v0, "simulate.v0")?, 0.0)
        }
    })
}

fn write_file(ctx: &Ctx, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut f = fs::File::create(path).map_err(|e| ctx.io(path, e))?;
    f.write_all(bytes).map_err(|e| ctx.io(path, e))
}

/// Runs `experiment` with `cfg`, writing outputs under `out` (or the
/// configured output directory, or `out/` by default).
pub fn run_experiment(experiment: Experiment, cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Outcome, CliError> {
    let ctx = Ctx { experiment };
    let cfg = ExperimentConfig { experiment: Some(experiment), ..cfg.clone() };
    let resolved = cfg.resolve().map_err(|e| ctx.validation(e))?;
    let out_dir: Option<PathBuf> = out.map(Path::to_path_buf).or_else(|| resolved.output_dir.clone());
    let out_dir = match (experiment, out_dir) {
        (Experiment::Verify, d) => d,
        (_, d) => Some(d.unwrap_or_else(|| PathBuf::from("out"))),
    };
    let mut outcome = Outcome::default();
    if let Some(dir) = &out_dir {
        fs::create_dir_all(dir).map_err(|e| ctx.io(dir, e))?;
        let p = dir.join("resolved_config.toml");
        write_file(&ctx, &p, resolved.to_toml().as_bytes())?;
        outcome.files.push(p);
    }
    let dir = out_dir.unwrap_or_default();
    match experiment {
        Experiment::Verify => verify(&ctx, &resolved, &dir, &mut outcome)?,
        Experiment::Simulate => simulate(&ctx, &resolved, &dir, &mut outcome)?,
        Experiment::Sweep => sweep(&ctx, &resolved, &dir, &mut outcome)?,
        Experiment::Antiperiodic => antiperiodic(&ctx, &resolved, &dir, &mut outcome)?,
    }
    Ok(outcome)
}

fn verify(ctx: &Ctx, cfg: &ExperimentConfig, dir: &Path, outcome: &mut Outcome) -> Result<(), CliError> {
    let suite = SuiteConfig {
        seed: cfg.seed,
        modes: cfg.verify.modes,
        pairs: cfg.verify.pairs,
        certificate_samples: cfg.verify.certificate_samples,
    };
    let results = run_property_suite(&suite);
    outcome.report = format_table(&results);
    if !outcome.files.is_empty() {
        let p = dir.join("verify.txt");
        write_file(ctx, &p, outcome.report.as_bytes())?;
        outcome.files.push(p);
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError {
            kind: ExitKind::Property,
            experiment: "verify".into(),
            message: format!("{}failing properties: {}", outcome.report, failed.join(", ")),
        })
    }
}

fn simulate(ctx: &Ctx, cfg: &ExperimentConfig, dir: &Path, outcome: &mut Outcome) -> Result<(), CliError> {
    let op = cfg.build_operator().map_err(|e| ctx.validation(e))?;
    let g = cfg.build_damping().map_err(|e| ctx.validation(e))?;
    let stepper = cfg.build_stepper(&op).map_err(|e| ctx.validation(e))?;
    let h = build_forcing(cfg, &op, &g, cfg.forcing.amplitude).map_err(|e| ctx.validation(e))?;
    let s0 = initial_state(cfg, &op, &g, &h).map_err(|e| ctx.validation(e))?;
    let problem = Problem::new(&op, &g, &h).map_err(|e| ctx.numerical(e))?;
    let path = dir.join("energy.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| ctx.io(&path, e))?;
    w.write_record(["t", "E", "Phi", "work", "dissipation"]).map_err(|e| ctx.io(&path, e))?;
    let mut write_err = None;
    let mut last = None;
    let res = problem.run_with(&s0, cfg.simulate.t_final, &stepper, cfg.simulate.observe_every, |r, _| {
        last = Some(*r);
        if write_err.is_none() {
            let rec = [fmt_num(r.t), fmt_num(r.energy), fmt_num(r.phi), fmt_num(r.work), fmt_num(r.dissipation)];
            write_err = w.write_record(rec).err();
        }
    });
    w.flush().map_err(|e| ctx.io(&path, e))?;
    outcome.files.push(path.clone());
    if let Some(e) = write_err {
        return Err(ctx.io(&path, e));
    }
    res.map_err(|(s, e)| ctx.numerical(format!("{e} (ledger written up to t = {})", s.t)))?;
    if let Some(r) = last {
        outcome.report = format!("t = {}  E = {:e}  Phi = {:e}\n", r.t, r.energy, r.phi);
    }
    Ok(())
}

fn amplitudes(ctx: &Ctx, cfg: &ExperimentConfig) -> Result<Vec<f64>, CliError> {
    cfg.forcing.amplitudes.clone().ok_or_else(|| {
        ctx.validation(ConfigError { path: "forcing.amplitudes".into(), message: "required for this experiment".into() })
    })
}

fn sweep(ctx: &Ctx, cfg: &ExperimentConfig, dir: &Path, outcome: &mut Outcome) -> Result<(), CliError> {
    let op = cfg.build_operator().map_err(|e| ctx.validation(e))?;
    let g = cfg.build_damping().map_err(|e| ctx.validation(e))?;
    let stepper = cfg.build_stepper(&op).map_err(|e| ctx.validation(e))?;
    let bound = cfg.build_bound().map_err(|e| ctx.validation(e))?;
    let amps = amplitudes(ctx, cfg)?;
    // initial states are computed up front so setup problems surface as validation errors
    let mut starts = Vec::with_capacity(amps.len());
    for &a in &amps {
        let h = build_forcing(cfg, &op, &g, a).map_err(|e| ctx.validation(e))?;
        starts.push(initial_state(cfg, &op, &g, &h).map_err(|e| ctx.validation(e))?);
    }
    let family = |a: f64| Ok(build_forcing(cfg, &op, &g, a).expect("checked above"));
    let initial = |a: f64| {
        let i = amps.iter().position(|x| *x == a).expect("amplitude from the list");
        starts[i].clone()
    };
    let result = amplitude_sweep(&op, &g, family, initial, &amps, cfg.sweep.norm_kind, &bound, &stepper)
        .map_err(|e| ctx.numerical(e))?;
    let csv_path = dir.join("sweep.csv");
    let mut buf = Vec::new();
    write_sweep_csv(&result, &mut buf).map_err(|e| ctx.numerical(e))?;
    write_file(ctx, &csv_path, &buf)?;
    let summary = FitSummary::new(&result, &cfg.sweep.check_exponents);
    let json_path = dir.join("fit_summary.json");
    write_file(ctx, &json_path, summary.to_json().as_bytes())?;
    outcome.files.extend([csv_path, json_path]);
    outcome.report = summary.to_json() + "\n";
    result.fit.map(|_| ()).map_err(|e| ctx.numerical(e))
}

fn write_trajectory(ctx: &Ctx, path: &Path, problem: &Problem<'_, f64>, traj: &[State<f64>]) -> Result<(), CliError> {
    let n = problem.op.num_modes();
    let mut w = csv::Writer::from_path(path).map_err(|e| ctx.io(path, e))?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|k| format!("u{k}")));
    header.extend((1..=n).map(|k| format!("v{k}")));
    header.push("Phi".into());
    w.write_record(&header).map_err(|e| ctx.io(path, e))?;
    for s in traj {
        let mut rec = vec![fmt_num(s.t)];
        rec.extend(s.u.coeffs().iter().chain(s.v.coeffs()).map(|x| fmt_num(*x)));
        rec.push(fmt_num(problem.energy(s).1));
        w.write_record(&rec).map_err(|e| ctx.io(path, e))?;
    }
    w.flush().map_err(|e| ctx.io(path, e))
}

fn antiperiodic(ctx: &Ctx, cfg: &ExperimentConfig, dir: &Path, outcome: &mut Outcome) -> Result<(), CliError> {
    let op = cfg.build_operator().map_err(|e| ctx.validation(e))?;
    let g = cfg.build_damping().map_err(|e| ctx.validation(e))?;
    let stepper = cfg.build_stepper(&op).map_err(|e| ctx.validation(e))?;
    let shooting = cfg.build_shooting(&op).map_err(|e| ctx.validation(e))?;
    let norm_kind = cfg.shooting.norm_kind.unwrap_or(NormKind::L2Period);
    if norm_kind == NormKind::Linf && op.kind() != OperatorKind::Abstract {
        return Err(ctx.validation(ConfigError {
            path: "shooting.norm_kind".into(),
            message: "linf exponent checks need an abstract operator".into(),
        }));
    }
    let amps = cfg.forcing.amplitudes.clone().unwrap_or_else(|| vec![cfg.forcing.amplitude]);
    for &a in &amps {
        build_forcing(cfg, &op, &g, a).map_err(|e| ctx.validation(e))?;
    }
    let family = |a: f64| Ok(build_forcing(cfg, &op, &g, a).expect("checked above"));
    let (rows, summary): (Vec<AntiPeriodicRow<f64>>, Option<FitSummary>) = if amps.len() > 1 {
        let res = antiperiodic_exponent_sweep(&op, &g, family, &amps, norm_kind, &shooting, &stepper)
            .map_err(|e| ctx.numerical(e))?;
        let summary = FitSummary::new(&res.sweep, &cfg.sweep.check_exponents);
        (res.rows, Some(summary))
    } else {
        let h = build_forcing(cfg, &op, &g, amps[0]).map_err(|e| ctx.validation(e))?;
        let problem = Problem::new(&op, &g, &h).map_err(|e| ctx.numerical(e))?;
        let res = shoot(&problem, &shooting, &stepper).map_err(|e| ctx.numerical(e))?;
        let traj = antiperiodic_trajectory(&problem, &res.state, shooting.tau, &stepper).map_err(|e| ctx.numerical(e))?;
        let m = traj.iter().map(|s| problem.energy(s).1).fold(0.0, f64::max);
        let row = AntiPeriodicRow {
            amplitude: amps[0],
            linf_norm: h.linf_norm(2.0 * shooting.tau).map_err(|e| ctx.numerical(e))?,
            l2_period_norm: h.l2_period_norm(shooting.tau).map_err(|e| ctx.numerical(e))?,
            m_hat: Ok(m),
            shooting_residual: res.residual,
            warm_start_used: res.warm_start_used,
            state: Some(res.state),
        };
        (vec![row], None)
    };
    let csv_path = dir.join("antiperiodic.csv");
    let mut buf = Vec::new();
    write_antiperiodic_csv(&rows, &mut buf).map_err(|e| ctx.numerical(e))?;
    write_file(ctx, &csv_path, &buf)?;
    outcome.files.push(csv_path);
    if let Some(row) = rows.iter().rev().find(|r| r.state.is_some()) {
        let h = build_forcing(cfg, &op, &g, row.amplitude).map_err(|e| ctx.validation(e))?;
        let problem = Problem::new(&op, &g, &h).map_err(|e| ctx.numerical(e))?;
        let traj = antiperiodic_trajectory(&problem, row.state.as_ref().expect("found above"), shooting.tau, &stepper)
            .map_err(|e| ctx.numerical(e))?;
        let p = dir.join("trajectory.csv");
        write_trajectory(ctx, &p, &problem, &traj)?;
        outcome.files.push(p);
    }
    if let Some(summary) = &summary {
        let p = dir.join("fit_summary.json");
        write_file(ctx, &p, summary.to_json().as_bytes())?;
        outcome.files.push(p);
        outcome.report = summary.to_json() + "\n";
        if let Some(e) = &summary.fit_error {
            return Err(ctx.numerical(e));
        }
    }
    if rows.iter().any(|r| r.m_hat.is_err()) {
        return Err(ctx.numerical("at least one amplitude failed to converge"));
    }
    Ok(())
}
