//! Command-line front end: argument parsing, dispatch, result files and the
//! one-screen summary.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::experiments::{
    design_sigma, fig3_harness, fig3_summary, fig4_harness, guarantee_frequency, run_algorithm1, setup, validate_closed_loop,
    validation_rows, write_csv, write_manifest, Manifest, RunStatus, SampleScope,
};
use crate::linalg::min_eig;
use crate::seeds::{self, stage};
use crate::synthesis::{h_infinity_baseline, solve_dual_problem, solve_exploration_problem, BaselineMode};

/// Exit code for success.
pub const EXIT_OK: i32 = 0;
/// Exit code for errors.
pub const EXIT_ERROR: i32 = 1;
/// Exit code when the requested guarantee is infeasible.
pub const EXIT_INFEASIBLE: i32 = 2;

/// Joint exploration and gain-scheduled control design.
#[derive(Debug, Parser)]
#[command(name = "dualctl", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration, or a manifest.json from an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Master seed (overrides the configuration).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for independent trials.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Suppress the summary.
    #[arg(long, global = true)]
    pub quiet: bool,
}

/// Commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Minimal-energy exploration for the configured goal, with a Monte Carlo check.
    Explore,
    /// Nominal, robust, prior-only and unbounded-exploration H∞ baselines.
    Design,
    /// Full pipeline: dual design, exploration, estimation, feedback.
    Dual,
    /// Targeted versus energy-matched random exploration over prior scalings.
    Fig3,
    /// Exploration energy versus performance level.
    Fig4,
    /// Dual design followed by sampled closed-loop validation.
    Validate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Explore => "explore",
            Command::Design => "design",
            Command::Dual => "dual",
            Command::Fig3 => "fig3",
            Command::Fig4 => "fig4",
            Command::Validate => "validate",
        }
    }
}

/// Resolved inputs of one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub seed: u64,
    pub threads: usize,
    pub quiet: bool,
}

/// Loads a TOML configuration or a run manifest.
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, Option<u64>)> {
    if path.extension().is_some_and(|e| e == "json") {
        let m = Manifest::load(path)?;
        return Ok((m.config, Some(m.seed)));
    }
    Ok((ExperimentConfig::load(path)?, None))
}

impl RunConfig {
    /// Resolves flags and files; seed precedence is flag, manifest, config.
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config <path> is required".into()))?;
        let (mut config, manifest_seed) = load_config(path)?;
        let seed = cli.seed.or(manifest_seed).unwrap_or(config.seed);
        config.seed = seed;
        if cli.threads == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        Ok(Self { command: cli.command, config, out: cli.out.clone(), seed, threads: cli.threads, quiet: cli.quiet })
    }
}

/// Maps an error to its exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Unreachable | Error::UncertaintyTooLarge(_) => EXIT_INFEASIBLE,
        e if e.is_infeasible() => EXIT_INFEASIBLE,
        _ => EXIT_ERROR,
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_ERROR;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    let rc = match RunConfig::from_cli(&cli) {
        Ok(rc) => rc,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_ERROR;
        }
    };
    match dispatch(&rc, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

struct Report<'a> {
    out: &'a mut dyn Write,
    quiet: bool,
}

impl Report<'_> {
    fn say(&mut self, s: impl AsRef<str>) -> Result<()> {
        if !self.quiet {
            writeln!(self.out, "{}", s.as_ref())?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct ExploreRow {
    run: usize,
    dt11: f64,
    goal_margin: f64,
    goal_met: bool,
    energy: f64,
}

#[derive(Serialize)]
struct DesignRow {
    mode: String,
    gamma: f64,
}

#[derive(Serialize)]
struct IterRow {
    iteration: usize,
    gamma_e: f64,
}

/// Runs one command and writes its outputs and manifest.
pub fn dispatch(rc: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    std::fs::create_dir_all(&rc.out)?;
    let cfg = &rc.config;
    let mut rep = Report { out, quiet: rc.quiet };
    let mut outputs: Vec<String> = Vec::new();
    let file = |name: &str, outputs: &mut Vec<String>| {
        outputs.push(name.to_string());
        rc.out.join(name)
    };
    let mut code = EXIT_OK;
    rep.say(format!("dualctl {}  seed {}", rc.command.name(), rc.seed))?;
    match rc.command {
        Command::Explore => {
            let s = setup(cfg, 1.0, rc.seed)?;
            rep.say(format!("gamma_v1 {:.4}  l {:.4}  c_delta {:.4}", s.constants.gamma_v1, s.constants.l, s.constants.c_delta))?;
            let goal = cfg.goal(s.prior.n_phi())?;
            let o = solve_exploration_problem(
                &s.prior,
                &s.grid,
                &s.constants,
                design_sigma(s.system.sigma_w),
                &goal,
                &cfg.exploration.candidate,
                cfg.exploration.max_iters,
            )?;
            let trials = guarantee_frequency(&s.system, &s.prior, &o.plan, cfg.validation.runs, seeds::derive(rc.seed, &[stage::VALIDATION]))?;
            let rows: Vec<ExploreRow> = trials
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let d = t.d_t.as_ref().expect("trial excitation");
                    ExploreRow { run: i, dt11: t.dt11, goal_margin: min_eig(&(d - &goal)), goal_met: t.goal_met == Some(true), energy: t.energy }
                })
                .collect();
            let met = rows.iter().filter(|r| r.goal_met).count();
            write_csv(&file("explore.csv", &mut outputs), &rows)?;
            let iters: Vec<IterRow> = o.history.iter().enumerate().map(|(i, &g)| IterRow { iteration: i, gamma_e: g }).collect();
            write_csv(&file("iterations.csv", &mut outputs), &iters)?;
            let plan = serde_json::to_string_pretty(&o.plan).map_err(|e| Error::Config(e.to_string()))?;
            std::fs::write(file("plan.json", &mut outputs), plan + "\n")?;
            rep.say(format!("gamma_e {:.6e}  iterations {}  converged {}", o.plan.gamma_e, o.history.len(), o.converged))?;
            rep.say(format!("amplitudes {:?}", o.plan.amplitudes))?;
            rep.say(format!(
                "D_T >= goal in {met}/{} runs (guaranteed level {:.3})",
                rows.len(),
                1.0 - 2.0 * s.prior.delta
            ))?;
        }
        Command::Design => {
            let s = setup(cfg, 1.0, rc.seed)?;
            let perf = cfg.performance(s.system.n_x())?;
            let (a0, b0) = s.prior.ab();
            let d0 = s.prior.d0.clone();
            let rows = vec![
                DesignRow { mode: "nominal_true".into(), gamma: h_infinity_baseline(&s.system.a, &s.system.b, &perf, &BaselineMode::Nominal)?.gamma },
                DesignRow { mode: "nominal_prior".into(), gamma: h_infinity_baseline(&a0, &b0, &perf, &BaselineMode::Nominal)?.gamma },
                DesignRow { mode: "robust".into(), gamma: h_infinity_baseline(&a0, &b0, &perf, &BaselineMode::Robust(d0.clone()))?.gamma },
                DesignRow { mode: "prior_only".into(), gamma: h_infinity_baseline(&a0, &b0, &perf, &BaselineMode::PriorOnly(d0.clone()))?.gamma },
                DesignRow { mode: "scheduling_only".into(), gamma: h_infinity_baseline(&a0, &b0, &perf, &BaselineMode::SchedulingOnly(d0))?.gamma },
            ];
            for r in &rows {
                rep.say(format!("{:<16} gamma {:.6}", r.mode, r.gamma))?;
            }
            write_csv(&file("design.csv", &mut outputs), &rows)?;
        }
        Command::Dual => {
            let r = run_algorithm1(cfg, rc.seed);
            let text = serde_json::to_string_pretty(&r).map_err(|e| Error::Config(e.to_string()))?;
            std::fs::write(file("dual.json", &mut outputs), text + "\n")?;
            match r.status {
                RunStatus::Ok => {
                    rep.say(format!("gamma_p {:.4}  gamma_e {:.6e}  energy {:.6e}", r.gamma_p.unwrap_or(f64::NAN), r.gamma_e, r.energy))?;
                    rep.say(format!(
                        "D_T >= goal: {}  closed-loop gain {:.6}  spectral radius {:.4}",
                        r.goal_met.unwrap_or(false),
                        r.closed_loop_gain.unwrap_or(f64::NAN),
                        r.closed_loop_radius.unwrap_or(f64::NAN)
                    ))?;
                    rep.say(format!("guarantee level 1 - 3 delta = {:.3}", 1.0 - 3.0 * cfg.prior.delta))?;
                }
                RunStatus::Infeasible => {
                    rep.say(format!("infeasible: {}", r.message.clone().unwrap_or_default()))?;
                    code = EXIT_INFEASIBLE;
                }
                RunStatus::Failed => {
                    rep.say(format!("failed at {:?}: {}", r.failed_stage, r.message.clone().unwrap_or_default()))?;
                    code = EXIT_ERROR;
                }
            }
        }
        Command::Fig3 => {
            let rows = fig3_harness(cfg, rc.seed, rc.threads)?;
            write_csv(&file("fig3.csv", &mut outputs), &rows)?;
            let summary = fig3_summary(&rows);
            write_csv(&file("fig3_summary.csv", &mut outputs), &summary)?;
            for s in &summary {
                rep.say(format!(
                    "alpha {:>8}  met {}/{}  targeted {:.3e} ± {:.2e}  random {:.3e} ± {:.2e}",
                    s.alpha, s.goal_met, s.trials, s.targeted_mean, s.targeted_std, s.random_mean, s.random_std
                ))?;
            }
        }
        Command::Fig4 => {
            let r = fig4_harness(cfg, rc.seed)?;
            write_csv(&file("fig4.csv", &mut outputs), &r.rows)?;
            let base = vec![
                DesignRow { mode: "nominal".into(), gamma: r.nominal },
                DesignRow { mode: "robust".into(), gamma: r.robust },
                DesignRow { mode: "prior_only".into(), gamma: r.prior_only },
                DesignRow { mode: "gamma_min".into(), gamma: r.gamma_min },
            ];
            write_csv(&file("fig4_baselines.csv", &mut outputs), &base)?;
            rep.say(format!(
                "nominal {:.4}  robust {:.4}  prior-only {:.4}  gamma_min {:.4}",
                r.nominal, r.robust, r.prior_only, r.gamma_min
            ))?;
            for row in &r.rows {
                rep.say(format!("gamma_p {:.4}  gamma_e {:.6e}  {}", row.gamma_p, row.gamma_e, row.status))?;
            }
        }
        Command::Validate => {
            let s = setup(cfg, 1.0, rc.seed)?;
            let perf = cfg.performance(s.system.n_x())?;
            let d = solve_dual_problem(&s.prior, &s.grid, &s.constants, design_sigma(s.system.sigma_w), &perf, &cfg.dual_options())?;
            let v = validate_closed_loop(
                &d.controller,
                &s.prior,
                &d.plan.dbar_t,
                &perf,
                cfg.validation.samples,
                SampleScope::Guaranteed,
                seeds::derive(rc.seed, &[stage::VALIDATION]),
            )?;
            write_csv(&file("validation.csv", &mut outputs), &validation_rows(&v))?;
            rep.say(format!("gamma_p {:.4}  gamma_e {:.6e}", v.gamma_p, d.plan.gamma_e))?;
            rep.say(format!("max closed-loop gain {:.6}  violations {}/{}", v.max_gain, v.violations, v.gains.len()))?;
        }
    }
    let m = Manifest {
        command: rc.command.name().into(),
        seed: rc.seed,
        threads: rc.threads,
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        outputs: outputs.clone(),
    };
    write_manifest(&rc.out, &m)?;
    outputs.push("manifest.json".into());
    rep.say(format!("wrote {} in {}", outputs.join(", "), rc.out.display()))?;
    Ok(code)
}
