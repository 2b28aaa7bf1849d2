//! Subcommand implementations. Each command returns printable key-value
//! lines and an exit status instead of printing directly, so tests can drive
//! them in-process.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use dnes::diagnostics::{error_norms, fit_exponential_rate};
use dnes::equilibrium::{NeSolution, ViVerdict};
use dnes::game_model::estimate_constants;
use dnes::switching_network::Assumption4Report;
use dnes::{
    default_init, make_report, simulate, solve_ne, step_bounds, verify_assumption4, verify_vi,
    AggregativeGame, AlgorithmParams, Error as CoreError, GameConstants, IntegratorConfig,
    NeSolveConfig, Report, SimState, StepBounds, SwitchingSchedule, Trajectory, Vector,
};
use nalgebra::DVector;
use serde::Serialize;
use toml::Spanned;

use crate::config::{ConstantsSpec, InitSpec, LoadedConfig, NeSpec, RunConfig};

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Success = 0,
    Error = 1,
    VerdictFailure = 2,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }

    fn from_pass(pass: bool) -> Self {
        if pass {
            Status::Success
        } else {
            Status::VerdictFailure
        }
    }
}

/// `key = value` lines of a command's result.
#[derive(Debug, Clone, Default)]
pub struct Output {
    lines: Vec<(String, String)>,
}

impl Output {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.lines.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.lines {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

fn fmt_vector(v: &Vector) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.12e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn fmt_bools(v: &[bool]) -> String {
    let parts: Vec<&str> = v.iter().map(|&b| if b { "true" } else { "false" }).collect();
    format!("[{}]", parts.join(", "))
}

/// Constants from explicit values, or computed from the game and overlaid
/// with any explicit values.
pub fn resolve_constants(
    cfg: &LoadedConfig,
    game: Option<&AggregativeGame>,
) -> anyhow::Result<(GameConstants, bool)> {
    let spec: ConstantsSpec = cfg.constants_spec();
    let (constants, violated) = if spec.is_complete() {
        let c = GameConstants {
            mu: spec.mu.unwrap_or_default(),
            theta: spec.theta.unwrap_or_default(),
            theta_hat: spec.theta_hat.unwrap_or_default(),
            l: spec.l.unwrap_or_default(),
            p: spec.p,
        };
        (c, false)
    } else {
        let game = game.ok_or_else(|| {
            anyhow!("constants need either a [game] section or mu, theta, theta_hat and l in [constants]")
        })?;
        let est = estimate_constants(game, spec.sample_count, spec.sample_seed, spec.sampling_box())
            .map_err(|e| cfg.constants_error(e.to_string()))?;
        (spec.overlay(est.constants), est.monotonicity_violated)
    };
    constants
        .validate()
        .map_err(|e| cfg.constants_error(e.to_string()))?;
    Ok((constants, violated))
}

pub fn ne_config(spec: &NeSpec, constants: &GameConstants) -> anyhow::Result<NeSolveConfig> {
    let k = match spec.k {
        Some(k) => k,
        None if constants.mu > 0.0 => constants.mu / (constants.theta * constants.theta),
        None => bail!("strong monotonicity modulus is not positive; set ne.k explicitly"),
    };
    Ok(NeSolveConfig {
        k,
        tol: spec.tol,
        max_iter: spec.max_iter,
    })
}

pub struct Equilibrium {
    pub constants: GameConstants,
    pub monotonicity_violated: bool,
    pub solution: NeSolution,
    pub vi: ViVerdict,
    pub tol: f64,
}

impl Equilibrium {
    pub fn residual_ok(&self) -> bool {
        self.solution.residual <= self.tol * self.solution.x.norm().max(1.0)
    }
}

pub fn equilibrium(cfg: &LoadedConfig, game: &AggregativeGame, seed: u64) -> anyhow::Result<Equilibrium> {
    let (constants, monotonicity_violated) = resolve_constants(cfg, Some(game))?;
    let spec = cfg.ne();
    let solve = ne_config(&spec, &constants)?;
    let solution = solve_ne(game, &solve).context("solving for the equilibrium")?;
    let vi = verify_vi(game, &solution.x, spec.vi_samples, seed, spec.vi_tol)?;
    Ok(Equilibrium {
        constants,
        monotonicity_violated,
        solution,
        vi,
        tol: spec.tol,
    })
}

pub fn cmd_solve_ne(cfg: &LoadedConfig, seed: Option<u64>) -> anyhow::Result<(Output, Status)> {
    let game = cfg.game()?;
    let eq = equilibrium(cfg, &game, seed.unwrap_or(cfg.config.seed))?;
    let mut out = Output::default();
    out.push("players", game.num_players());
    out.push("dim", game.dim());
    out.push("mu", eq.constants.mu);
    out.push("theta", eq.constants.theta);
    out.push("x_star", fmt_vector(&eq.solution.x));
    out.push("aggregate", fmt_vector(&game.aggregate(&eq.solution.x)?));
    out.push("residual", format!("{:e}", eq.solution.residual));
    out.push("iterations", eq.solution.iterations);
    out.push("vi_pass", eq.vi.pass);
    out.push("vi_worst", format!("{:e}", eq.vi.worst));
    out.push("vi_samples", eq.vi.samples);
    let pass = eq.vi.pass && eq.residual_ok();
    Ok((out, Status::from_pass(pass)))
}

pub fn bounds(cfg: &LoadedConfig) -> anyhow::Result<StepBounds> {
    let game = match cfg.config.game {
        Some(_) => Some(cfg.game()?),
        None => None,
    };
    let (constants, _) = resolve_constants(cfg, game.as_ref())?;
    let spec = cfg.bounds_spec();
    let params = cfg.config.params.as_ref().map(|p| *p.get_ref());
    let delta1 = spec
        .delta1
        .or(params.map(|p| p.delta1))
        .ok_or_else(|| anyhow!("bounds need bounds.delta1 or a [params] section"))?;
    let alpha = spec
        .alpha
        .or(params.map(|p| p.alpha))
        .ok_or_else(|| anyhow!("bounds need bounds.alpha or a [params] section"))?;
    step_bounds(&constants, delta1, alpha).map_err(|e| match e {
        CoreError::MissingLyapunovBound => anyhow!(
            "{e} (add `p = <value>` to the [constants] section)"
        ),
        other => anyhow!(other),
    })
}

pub fn cmd_bounds(cfg: &LoadedConfig) -> anyhow::Result<(Output, Status)> {
    let b = bounds(cfg)?;
    let mut out = Output::default();
    out.push("delta1_star", format!("{:.12e}", b.delta1_star));
    out.push("delta1", format!("{:.12e}", b.delta1));
    out.push("m", format!("{:.12e}", b.m));
    out.push("k1", format!("{:.12e}", b.k1));
    out.push("k2", format!("{:.12e}", b.k2));
    out.push("k3", format!("{:.12e}", b.k3));
    out.push("delta2_star", format!("{:.12e}", b.delta2_star));
    if let Some(p) = cfg.config.params.as_ref() {
        let within = p.get_ref().delta2 < b.delta2_star;
        out.push("configured_delta2_within_bound", within);
    }
    Ok((out, Status::Success))
}

pub fn check_graph(cfg: &LoadedConfig) -> anyhow::Result<(SwitchingSchedule, Assumption4Report)> {
    let schedule = cfg.schedule()?;
    let window = cfg.window(&schedule)?;
    let report = verify_assumption4(&schedule, window, cfg.balance_tol())?;
    Ok((schedule, report))
}

pub fn cmd_check_graph(cfg: &LoadedConfig) -> anyhow::Result<(Output, Status)> {
    let (schedule, report) = check_graph(cfg)?;
    let mut out = Output::default();
    out.push("nodes", schedule.node_count());
    out.push("graphs", schedule.graphs().len());
    out.push("tau", schedule.tau());
    out.push("periodic", schedule.is_periodic());
    out.push("weight_balanced", fmt_bools(&report.weight_balanced));
    out.push("instantaneous_connected", fmt_bools(&report.instantaneous_connected));
    for w in &report.windows {
        out.push(format!("window_at_{}", w.start), w.connected);
    }
    out.push("window", report.window);
    out.push("jointly_connected", report.jointly_connected);
    out.push(
        "smallest_window",
        report
            .smallest_window
            .map_or_else(|| "none".to_string(), |w| w.to_string()),
    );
    out.push("verified_until", report.verified_until);
    out.push("passed", report.passed());
    Ok((out, Status::from_pass(report.passed())))
}

/// Initial state from the config, with unspecified parts drawn from the seed.
pub fn initial_state(cfg: &LoadedConfig, game: &AggregativeGame, seed: u64) -> anyhow::Result<SimState> {
    let (spec, span): (InitSpec, _) = cfg.init_spec();
    let mut state = default_init(game, seed)?;
    let len = game.profile_len();
    let take = |name: &str, values: &Option<Vec<f64>>, target: &mut Vector| -> anyhow::Result<()> {
        if let Some(v) = values {
            if v.len() != len {
                return Err(cfg
                    .init_error(span.clone(), format!("init.{name} needs {len} entries, got {}", v.len()))
                    .into());
            }
            *target = DVector::from_vec(v.clone());
        }
        Ok(())
    };
    take("x", &spec.x, &mut state.x)?;
    take("s", &spec.s, &mut state.s)?;
    take("v", &spec.v, &mut state.v)?;
    Ok(state)
}

/// Horizon at which a pilot run's fitted decay predicts an error below
/// `1e-6`, rounded up to a whole number of dwell times. Falls back to `200/μ`
/// when the pilot does not show decay.
#[allow(clippy::too_many_arguments)]
pub fn default_t_end(
    game: &AggregativeGame,
    params: &AlgorithmParams,
    schedule: &SwitchingSchedule,
    init: &SimState,
    integ: &IntegratorConfig,
    x_star: &Vector,
    mu: f64,
) -> anyhow::Result<f64> {
    let fallback = 200.0 / mu.max(1e-12);
    let tau = schedule.tau();
    let pilot = (20.0 * tau).max(10.0 / mu.max(1e-12)).min(fallback);
    let traj = simulate(game, params, schedule, init, integ, pilot)?;
    let errors = error_norms(&traj, game, x_star, params.alpha)?;
    let last = *errors.last().unwrap_or(&0.0);
    if last <= 1e-6 {
        return Ok(pilot);
    }
    let horizon = match fit_exponential_rate(&traj.times(), &errors, 0.5) {
        Ok(fit) if fit.lambda < 0.0 && fit.lambda.is_finite() => {
            pilot + (last / 1e-6).ln() / -fit.lambda
        }
        _ => fallback,
    };
    let capped = horizon.min(100.0 * pilot).max(pilot);
    Ok((capped / tau).ceil() * tau)
}

/// Pass/fail of one convergence requirement.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionCheck {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSection {
    pub ne_residual: f64,
    pub ne_iterations: usize,
    pub ne_k: f64,
    pub vi_pass: bool,
    pub vi_worst: f64,
    pub mu: f64,
    pub theta: f64,
    pub theta_hat: f64,
    pub l: f64,
    pub monotonicity_violated: bool,
    pub window: f64,
    pub simulated: bool,
    pub criteria: Vec<CriterionCheck>,
    pub exit_code: i32,
}

pub struct RunOutcome {
    pub status: Status,
    pub x_star: Vector,
    pub equilibrium: Equilibrium,
    pub assumptions: Assumption4Report,
    pub trajectory: Option<Trajectory>,
    pub report: Option<Report>,
    pub criteria: Vec<CriterionCheck>,
    pub output: Output,
    pub files: Vec<PathBuf>,
}

fn check_criteria(cfg: &LoadedConfig, report: &Report) -> Vec<CriterionCheck> {
    let spec = cfg.criteria();
    let mut checks = Vec::new();
    let mut upper = |name: &str, value: f64, limit: Option<f64>| {
        if let Some(limit) = limit {
            checks.push(CriterionCheck {
                name: name.into(),
                value,
                limit,
                pass: value <= limit,
            });
        }
    };
    upper("x_error", report.x_error, spec.x_error);
    upper("s_error", report.s_error, spec.s_error);
    upper("v_error", report.v_error, spec.v_error);
    if let Some(limit) = spec.rate_below {
        let value = report.rate_lambda.unwrap_or(f64::NAN);
        checks.push(CriterionCheck {
            name: "rate_lambda".into(),
            value,
            limit,
            pass: value < limit,
        });
    }
    if let Some(limit) = spec.min_r_squared {
        let value = report.rate_r_squared.unwrap_or(f64::NAN);
        checks.push(CriterionCheck {
            name: "rate_r_squared".into(),
            value,
            limit,
            pass: value >= limit,
        });
    }
    checks
}

/// Config with every defaulted section filled in, for echoing into reports.
fn resolved_config(
    cfg: &LoadedConfig,
    seed: u64,
    t_end: f64,
    integ: &IntegratorConfig,
) -> RunConfig {
    let mut c = cfg.config.clone();
    c.seed = seed;
    c.t_end = Some(t_end);
    let mut spec = c
        .integrator
        .as_ref()
        .map(|s| *s.get_ref())
        .unwrap_or_default();
    spec.h = Some(integ.h);
    c.integrator = Some(Spanned::new(0..0, spec));
    c.ne = Some(Spanned::new(0..0, cfg.ne()));
    c.constants = Some(Spanned::new(0..0, cfg.constants_spec()));
    c.criteria = Some(Spanned::new(0..0, cfg.criteria()));
    c.output = Some(Spanned::new(0..0, cfg.output()));
    if let Some(net) = c.network.as_mut() {
        if let Ok(n) = cfg.node_count() {
            net.get_mut().nodes = Some(n);
        }
    }
    c
}

#[derive(Serialize)]
struct RunTable<'a> {
    run: &'a RunSection,
}

#[derive(Serialize)]
struct ConfigTable<'a> {
    config: &'a RunConfig,
}

/// Solves the equilibrium, checks the network, simulates and writes the
/// trajectory, report and summary into `out_dir`.
pub fn execute_run(
    cfg: &LoadedConfig,
    seed_override: Option<u64>,
    out_dir: &Path,
) -> anyhow::Result<RunOutcome> {
    let seed = seed_override.unwrap_or(cfg.config.seed);
    let game = cfg.game()?;
    let schedule = cfg.schedule()?;
    if schedule.node_count() != game.num_players() {
        bail!(
            "network has {} nodes but the game has {} players",
            schedule.node_count(),
            game.num_players()
        );
    }
    let params = cfg.params()?;
    let integ = cfg.integrator(&params, &schedule)?;
    let eq = equilibrium(cfg, &game, seed)?;
    let x_star = eq.solution.x.clone();
    let window = cfg.window(&schedule)?;
    let assumptions = verify_assumption4(&schedule, window, cfg.balance_tol())?;

    let mut output = Output::default();
    output.push("x_star", fmt_vector(&x_star));
    output.push("ne_residual", format!("{:e}", eq.solution.residual));
    output.push("vi_pass", eq.vi.pass);
    output.push("weight_balanced", fmt_bools(&assumptions.weight_balanced));
    output.push("jointly_connected", assumptions.jointly_connected);

    let mut run = RunSection {
        ne_residual: eq.solution.residual,
        ne_iterations: eq.solution.iterations,
        ne_k: ne_config(&cfg.ne(), &eq.constants)?.k,
        vi_pass: eq.vi.pass,
        vi_worst: eq.vi.worst,
        mu: eq.constants.mu,
        theta: eq.constants.theta,
        theta_hat: eq.constants.theta_hat,
        l: eq.constants.l,
        monotonicity_violated: eq.monotonicity_violated,
        window,
        simulated: false,
        criteria: Vec::new(),
        exit_code: Status::VerdictFailure.code(),
    };

    if cfg.config.require_assumptions && !assumptions.passed() {
        log::warn!("network assumptions fail; not simulating (set require_assumptions = false to override)");
        output.push("simulated", false);
        output.push("exit_code", Status::VerdictFailure.code());
        return Ok(RunOutcome {
            status: Status::VerdictFailure,
            x_star,
            equilibrium: eq,
            assumptions,
            trajectory: None,
            report: None,
            criteria: Vec::new(),
            output,
            files: Vec::new(),
        });
    }

    let init = initial_state(cfg, &game, seed)?;
    let t_end = match cfg.config.t_end {
        Some(t) => t,
        None => default_t_end(&game, &params, &schedule, &init, &integ, &x_star, eq.constants.mu)?,
    };
    let mut trajectory = simulate(&game, &params, &schedule, &init, &integ, t_end)
        .context("simulating the closed loop")?;
    trajectory.meta.seed = Some(seed);
    trajectory.meta.schedule_label = Some(cfg.name.clone());
    let report = make_report(&trajectory, &game, &schedule, &x_star, &assumptions, &integ)?;
    let criteria = check_criteria(cfg, &report);
    let pass = report.verdicts_pass()
        && eq.vi.pass
        && eq.residual_ok()
        && criteria.iter().all(|c| c.pass);
    let status = Status::from_pass(pass);

    run.simulated = true;
    run.criteria = criteria.clone();
    run.exit_code = status.code();

    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let names = cfg.output();
    let traj_path = out_dir.join(&names.trajectory);
    let report_path = out_dir.join(&names.report);
    let summary_path = out_dir.join(&names.summary);
    let file = fs::File::create(&traj_path).with_context(|| format!("creating {}", traj_path.display()))?;
    trajectory.write_csv(std::io::BufWriter::new(file))?;
    let resolved = resolved_config(cfg, seed, t_end, &integ);
    let mut text = report.to_kv_string()?;
    text.push('\n');
    text.push_str(&toml::to_string(&RunTable { run: &run })?);
    text.push('\n');
    text.push_str(&toml::to_string(&ConfigTable { config: &resolved })?);
    fs::write(&report_path, text).with_context(|| format!("writing {}", report_path.display()))?;
    fs::write(
        &summary_path,
        format!("{}\n{}\n", Report::csv_header(), report.to_csv_row()),
    )
    .with_context(|| format!("writing {}", summary_path.display()))?;

    output.push("simulated", true);
    output.push("t_end", t_end);
    output.push("h", integ.h);
    output.push("method", integ.method);
    output.push("x_error", format!("{:e}", report.x_error));
    output.push("s_error", format!("{:e}", report.s_error));
    output.push("v_error", format!("{:e}", report.v_error));
    if let Some(l) = report.rate_lambda {
        output.push("rate_lambda", format!("{l:e}"));
    }
    if let Some(r) = report.rate_r_squared {
        output.push("rate_r_squared", format!("{r}"));
    }
    output.push("feasibility_ok", report.feasibility_ok);
    output.push("conservation_ok", report.conservation_ok);
    output.push("ev1_ok", report.ev1_ok);
    output.push("assumptions_ok", report.assumptions_ok);
    for c in &criteria {
        output.push(format!("criterion_{}", c.name), c.pass);
    }
    output.push("trajectory", traj_path.display());
    output.push("report", report_path.display());
    output.push("exit_code", status.code());

    Ok(RunOutcome {
        status,
        x_star,
        equilibrium: eq,
        assumptions,
        trajectory: Some(trajectory),
        report: Some(report),
        criteria,
        output,
        files: vec![traj_path, report_path, summary_path],
    })
}

pub fn cmd_run(cfg: &LoadedConfig, seed: Option<u64>, out_dir: &Path) -> anyhow::Result<(Output, Status)> {
    let outcome = execute_run(cfg, seed, out_dir)?;
    Ok((outcome.output, outcome.status))
}

/// One batch entry's result.
#[derive(Debug, Clone)]
pub struct BatchEntry {
    pub config: PathBuf,
    pub status: Status,
    pub message: String,
}

/// Runs each config in its own output subdirectory, `jobs` at a time.
pub fn cmd_batch(
    configs: &[PathBuf],
    seed: Option<u64>,
    out_dir: &Path,
    jobs: usize,
) -> anyhow::Result<(Output, Status, Vec<BatchEntry>)> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("starting the worker pool")?;
    let entries: Vec<BatchEntry> = pool.install(|| {
        configs
            .par_iter()
            .map(|path| {
                let result = LoadedConfig::from_path(path)
                    .map_err(anyhow::Error::from)
                    .and_then(|cfg| {
                        let dir = out_dir.join(&cfg.name);
                        cmd_run(&cfg, seed, &dir)
                    });
                match result {
                    Ok((_, status)) => BatchEntry {
                        config: path.clone(),
                        status,
                        message: String::new(),
                    },
                    Err(e) => BatchEntry {
                        config: path.clone(),
                        status: Status::Error,
                        message: format!("{e:#}"),
                    },
                }
            })
            .collect()
    });
    let mut out = Output::default();
    for e in &entries {
        out.push(e.config.display().to_string(), e.status.code());
    }
    let status = entries
        .iter()
        .map(|e| e.status)
        .max()
        .unwrap_or(Status::Success);
    Ok((out, status, entries))
}
