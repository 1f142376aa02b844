//! End-to-end dual-control runs, the targeted-versus-random excitation
//! comparison, the energy–performance sweep, closed-loop validation and the
//! CSV/JSON result files.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bounds::{compute_constants, BoundConstants, ConstantsOptions};
use crate::config::{CenterMode, ExperimentConfig};
use crate::error::{Error, Result};
use crate::estimation::{credibility_region, map_estimate, project_parameters, Dataset, GaussianPrior};
use crate::hinf::closed_loop_hinf;
use crate::linalg::{chol, min_eig, spectral_radius, stack_ab, unvec, unvec_ab, vec_ab, Mat, Vector};
use crate::model::{simulate, PerformanceIndex, SystemModel, Trajectory};
use crate::seeds::{self, stage};
use crate::spectral::{generate_input, steady_state_initial, ExplorationPlan, FrequencyGrid};
use crate::synthesis::{
    extract_controller, h_infinity_baseline, solve_dual_problem, solve_exploration_problem, BaselineMode,
    GainScheduledController,
};

/// Noise level used in the design formulas when the configured σ_w is zero;
/// the excitation scale 1/(c_δ σ_w²) is otherwise undefined.
pub const MIN_SIGMA: f64 = 1e-6;

/// Slack on γ_p in closed-loop validation.
pub const VALIDATION_SLACK: f64 = 1e-4;

/// σ_w used in the design and estimation formulas.
pub fn design_sigma(sigma_w: f64) -> f64 {
    sigma_w.max(MIN_SIGMA)
}

/// Uniform sample of the ellipsoid {θ : tr(Δ D Δᵀ) ≤ 1} around `center`.
pub fn sample_in_ellipsoid<R: Rng>(center: &Vector, shape: &Mat, n_x: usize, rng: &mut R) -> Result<Vector> {
    let n = shape.nrows();
    let l_inv = chol(shape, "ellipsoid shape")?.l().try_inverse().ok_or_else(|| Error::Singular("ellipsoid shape".into()))?;
    let z = Mat::from_fn(n_x, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let dim = (n_x * n) as f64;
    let r = rng.gen::<f64>().powf(1.0 / dim);
    let delta = z.clone() / z.norm() * r * l_inv;
    Ok(center + Vector::from_column_slice(delta.as_slice()))
}

/// Random Δ (n_x × n) with Δᵀ Δ ⪯ shape⁻¹; on the boundary when `boundary`.
pub fn sample_matrix_ball<R: Rng>(n_x: usize, shape: &Mat, boundary: bool, rng: &mut R) -> Result<Mat> {
    let n = shape.nrows();
    let l_inv = chol(shape, "uncertainty shape")?.l().try_inverse().ok_or_else(|| Error::Singular("uncertainty shape".into()))?;
    let y = Mat::from_fn(n_x, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let s = y.clone().svd(false, false).singular_values.max().max(1e-300);
    let r = if boundary { 1.0 } else { rng.gen::<f64>() };
    Ok(y / s * r * l_inv)
}

/// Prior, grid and exploration constants of one run.
#[derive(Clone, Debug)]
pub struct Setup {
    pub system: SystemModel,
    pub prior: GaussianPrior,
    pub grid: FrequencyGrid,
    pub constants: BoundConstants,
}

/// Builds the prior (D₀ scaled by α) and computes the exploration constants.
pub fn setup(cfg: &ExperimentConfig, alpha: f64, seed: u64) -> Result<Setup> {
    let system = cfg.system_model()?;
    let n_x = system.n_x();
    let n_phi = system.n_phi();
    let d0 = cfg.d0(n_phi)? * alpha;
    let truth = vec_ab(&system.a, &system.b);
    let center = match cfg.prior.center {
        CenterMode::Truth => truth,
        CenterMode::Sampled => {
            let mut rng = seeds::rng(seeds::derive(seed, &[stage::PRIOR_CENTER]));
            sample_in_ellipsoid(&truth, &d0, n_x, &mut rng)?
        }
        CenterMode::Explicit => {
            let a = cfg.prior.a_hat.as_ref().expect("validated").resolve_shape(n_x, n_x, "prior.a_hat")?;
            let b = cfg.prior.b_hat.as_ref().expect("validated").resolve_shape(n_x, 1, "prior.b_hat")?;
            vec_ab(&a, &b)
        }
    };
    let (a_hat, b_hat) = unvec_ab(&center, n_x)?;
    let prior = GaussianPrior::from_d0(&a_hat, &b_hat, d0, cfg.prior.delta)?;
    let grid = cfg.grid()?;
    let opts = ConstantsOptions { eps: cfg.exploration.eps, beta: cfg.exploration.beta, method: cfg.exploration.constants };
    let constants = compute_constants(&prior, &grid, design_sigma(system.sigma_w), opts, seeds::derive(seed, &[stage::SCENARIO_PRIOR]))?;
    Ok(Setup { system, prior, grid, constants })
}

/// Pipeline stage at which a run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Setup,
    Design,
    Exploration,
    Estimation,
    Projection,
    Extraction,
    Validation,
}

/// Outcome class of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Infeasible,
    Failed,
}

/// Record of one run of the pipeline or of an excitation trial.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialResult {
    pub status: RunStatus,
    pub failed_stage: Option<Stage>,
    pub message: Option<String>,
    pub constants: Option<BoundConstants>,
    pub plan: Option<ExplorationPlan>,
    pub gamma_e: f64,
    pub gamma_p: Option<f64>,
    pub energy: f64,
    pub d_t: Option<Mat>,
    pub dt11: f64,
    pub goal_met: Option<bool>,
    pub theta_hat: Option<Vector>,
    pub theta_tilde: Option<Vector>,
    pub k: Option<Mat>,
    pub closed_loop_gain: Option<f64>,
    pub closed_loop_radius: Option<f64>,
}

impl TrialResult {
    fn empty() -> Self {
        Self {
            status: RunStatus::Ok,
            failed_stage: None,
            message: None,
            constants: None,
            plan: None,
            gamma_e: 0.0,
            gamma_p: None,
            energy: 0.0,
            d_t: None,
            dt11: 0.0,
            goal_met: None,
            theta_hat: None,
            theta_tilde: None,
            k: None,
            closed_loop_gain: None,
            closed_loop_radius: None,
        }
    }

    fn fail(mut self, stage: Stage, e: Error) -> Self {
        self.status = match e {
            Error::Unreachable | Error::UncertaintyTooLarge(_) => RunStatus::Infeasible,
            ref e if e.is_infeasible() => RunStatus::Infeasible,
            _ => RunStatus::Failed,
        };
        self.failed_stage = Some(stage);
        self.message = Some(e.to_string());
        self
    }
}

/// Excitation D_T = (1/(c_δ σ_w²)) Σ φφᵀ of a trajectory.
pub fn excitation(tr: &Trajectory, c_delta: f64, sigma_w: f64) -> Mat {
    let s = design_sigma(sigma_w);
    tr.gram() / (c_delta * s * s)
}

/// Whether D_T ⪰ D̄_T up to round-off relative to the goal.
pub fn goal_met(d_t: &Mat, goal: &Mat) -> bool {
    let scale = goal.abs().max().max(1.0);
    min_eig(&(d_t - goal)) >= -1e-9 * scale
}

/// Applies the plan to the true system from its periodic steady state.
pub fn apply_plan(system: &SystemModel, plan: &ExplorationPlan, seed: u64) -> Result<Trajectory> {
    let x0 = steady_state_initial(&system.a, &system.b, plan)?;
    simulate(system, &generate_input(plan), &x0, seed)
}

/// Simulates one targeted-exploration trial and measures the excitation.
pub fn targeted_trial(system: &SystemModel, prior: &GaussianPrior, plan: &ExplorationPlan, seed: u64) -> Result<TrialResult> {
    let tr = apply_plan(system, plan, seed)?;
    let d_t = excitation(&tr, prior.c_delta, system.sigma_w);
    let mut r = TrialResult::empty();
    r.energy = tr.u.iter().map(|u| u * u).sum();
    r.gamma_e = plan.gamma_e;
    r.dt11 = d_t[(0, 0)];
    r.goal_met = Some(goal_met(&d_t, &plan.dbar_t));
    r.d_t = Some(d_t);
    r.plan = Some(plan.clone());
    Ok(r)
}

/// Gaussian input rescaled to Σ u_k² = budget, applied from x₀ = 0.
pub fn random_exploration_baseline(
    system: &SystemModel,
    prior: &GaussianPrior,
    horizon: usize,
    energy_budget: f64,
    input_seed: u64,
    noise_seed: u64,
) -> Result<TrialResult> {
    if !(energy_budget >= 0.0) {
        return Err(Error::InvalidArgument("energy budget must be non-negative".into()));
    }
    let u = random_input(horizon, energy_budget, input_seed);
    let tr = simulate(system, &u, &Vector::zeros(system.n_x()), noise_seed)?;
    let d_t = excitation(&tr, prior.c_delta, system.sigma_w);
    let mut r = TrialResult::empty();
    r.energy = u.iter().map(|v| v * v).sum();
    r.dt11 = d_t[(0, 0)];
    r.d_t = Some(d_t);
    Ok(r)
}

/// Gaussian sequence scaled to the exact energy.
pub fn random_input(horizon: usize, energy: f64, seed: u64) -> Vec<f64> {
    let mut rng = seeds::rng(seed);
    let raw: Vec<f64> = (0..horizon).map(|_| rng.sample(StandardNormal)).collect();
    let e: f64 = raw.iter().map(|v| v * v).sum();
    if energy == 0.0 || e == 0.0 {
        return vec![0.0; horizon];
    }
    let s = (energy / e).sqrt();
    raw.into_iter().map(|v| v * s).collect()
}

/// Runs the full pipeline: prior, constants, dual design, exploration,
/// estimation, projection, controller extraction and closed-loop check.
pub fn run_algorithm1(cfg: &ExperimentConfig, seed: u64) -> TrialResult {
    let mut r = TrialResult::empty();
    let s = match setup(cfg, 1.0, seed) {
        Ok(s) => s,
        Err(e) => return r.fail(Stage::Setup, e),
    };
    r.constants = Some(s.constants.clone());
    let n_x = s.system.n_x();
    let perf = match cfg.performance(n_x) {
        Ok(p) => p,
        Err(e) => return r.fail(Stage::Setup, e),
    };
    r.gamma_p = perf.gamma();
    let sigma = design_sigma(s.system.sigma_w);
    let dual = match solve_dual_problem(&s.prior, &s.grid, &s.constants, sigma, &perf, &cfg.dual_options()) {
        Ok(d) => d,
        Err(e) => return r.fail(Stage::Design, e),
    };
    r.gamma_e = dual.plan.gamma_e;
    r.plan = Some(dual.plan.clone());
    let tr = match apply_plan(&s.system, &dual.plan, seeds::derive(seed, &[stage::NOISE])) {
        Ok(t) => t,
        Err(e) => return r.fail(Stage::Exploration, e),
    };
    r.energy = tr.u.iter().map(|u| u * u).sum();
    let est = match map_estimate(&s.prior, &Dataset::from_trajectory(&tr), sigma) {
        Ok(m) => m,
        Err(e) => return r.fail(Stage::Estimation, e),
    };
    r.dt11 = est.d_t[(0, 0)];
    r.goal_met = Some(goal_met(&est.d_t, &dual.plan.dbar_t));
    r.d_t = Some(est.d_t.clone());
    r.theta_hat = Some(est.theta_hat.clone());
    let tilde = match project_parameters(&est.theta_hat, &s.prior.theta0(), &est.d_post) {
        Ok(t) => t,
        Err(e) => return r.fail(Stage::Projection, e),
    };
    r.theta_tilde = Some(tilde.clone());
    let (a0, b0) = s.prior.ab();
    let k = match unvec_ab(&tilde, n_x).and_then(|(at, bt)| extract_controller(&dual.controller, &a0, &b0, &at, &bt)) {
        Ok(k) => k,
        Err(e) => return r.fail(Stage::Extraction, e),
    };
    r.closed_loop_radius = Some(spectral_radius(&(&s.system.a + &s.system.b * &k)));
    r.k = Some(k.clone());
    match closed_loop_hinf(&s.system.a, &s.system.b, &k, &perf.c, &perf.d_u, &perf.d_w) {
        Ok(g) => r.closed_loop_gain = Some(g),
        Err(e) => return r.fail(Stage::Validation, e),
    }
    r
}

/// Runs `n` independent jobs on up to `threads` workers, returning results in
/// job order.
pub fn run_jobs<T, F>(n: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let threads = threads.max(1).min(n.max(1));
    if threads == 1 {
        return (0..n).map(&f).collect();
    }
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let done = std::sync::Mutex::new(Vec::new());
    std::thread::scope(|sc| {
        for _ in 0..threads {
            sc.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let v = f(i);
                done.lock().expect("result lock").push((i, v));
            });
        }
    });
    for (i, v) in done.into_inner().expect("result lock") {
        slots[i] = Some(v);
    }
    slots.into_iter().map(|v| v.expect("every job ran")).collect()
}

/// One row of the targeted-versus-random table.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Fig3Row {
    pub alpha: f64,
    pub trial: usize,
    pub method: String,
    pub dt11: f64,
    pub energy: f64,
    pub gamma_e: f64,
    pub gamma_v1: f64,
    pub goal_met: bool,
    pub status: String,
}

/// Targeted exploration against energy-matched random inputs for each α.
///
/// Each (α, trial) job samples a prior center in the α-scaled ellipsoid,
/// recomputes the constants, solves the exploration problem and simulates
/// both inputs with the same noise realization.
pub fn fig3_harness(cfg: &ExperimentConfig, seed: u64, threads: usize) -> Result<Vec<Fig3Row>> {
    let alphas = cfg.fig3.alphas.clone();
    let trials = cfg.fig3.trials;
    let jobs = run_jobs(alphas.len() * trials, threads, |j| {
        let (ai, trial) = (j / trials, j % trials);
        fig3_job(cfg, alphas[ai], seeds::derive(seed, &[ai as u64, trial as u64]), trial)
    });
    let mut rows = Vec::new();
    for j in jobs {
        rows.extend(j?);
    }
    Ok(rows)
}

fn fig3_job(cfg: &ExperimentConfig, alpha: f64, seed: u64, trial: usize) -> Result<Vec<Fig3Row>> {
    let row = |method: &str, r: Option<&TrialResult>, gv1: f64, ge: f64, status: &str| Fig3Row {
        alpha,
        trial,
        method: method.to_string(),
        dt11: r.map_or(f64::NAN, |r| r.dt11),
        energy: r.map_or(f64::NAN, |r| r.energy),
        gamma_e: ge,
        gamma_v1: gv1,
        goal_met: r.and_then(|r| r.goal_met).unwrap_or(false),
        status: status.to_string(),
    };
    let s = setup(cfg, alpha, seed)?;
    let gv1 = s.constants.gamma_v1;
    let goal = cfg.goal(s.prior.n_phi())?;
    let sigma = design_sigma(s.system.sigma_w);
    let plan = match solve_exploration_problem(&s.prior, &s.grid, &s.constants, sigma, &goal, &cfg.exploration.candidate, cfg.exploration.max_iters) {
        Ok(o) => o.plan,
        Err(e) if matches!(e, Error::UncertaintyTooLarge(_)) || e.is_infeasible() => {
            return Ok(vec![row("targeted", None, gv1, f64::NAN, "infeasible"), row("random", None, gv1, f64::NAN, "infeasible")]);
        }
        Err(e) => return Err(e),
    };
    let noise = seeds::derive(seed, &[stage::NOISE]);
    let t = targeted_trial(&s.system, &s.prior, &plan, noise)?;
    let r = random_exploration_baseline(&s.system, &s.prior, s.grid.t, t.energy, seeds::derive(seed, &[stage::RANDOM_INPUT]), noise)?;
    Ok(vec![row("targeted", Some(&t), gv1, plan.gamma_e, "ok"), row("random", Some(&r), gv1, plan.gamma_e, "ok")])
}

/// Per-α aggregate of [`Fig3Row`]s.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Fig3Summary {
    pub alpha: f64,
    pub feasible: bool,
    pub trials: usize,
    pub goal_met: usize,
    pub targeted_mean: f64,
    pub targeted_std: f64,
    pub random_mean: f64,
    pub random_std: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

/// Means and standard deviations of D_T,11 per α.
pub fn fig3_summary(rows: &[Fig3Row]) -> Vec<Fig3Summary> {
    let mut alphas: Vec<f64> = rows.iter().map(|r| r.alpha).collect();
    alphas.dedup();
    alphas
        .into_iter()
        .map(|a| {
            let of = |m: &str| -> Vec<&Fig3Row> { rows.iter().filter(|r| r.alpha == a && r.method == m && r.status == "ok").collect() };
            let t = of("targeted");
            let r = of("random");
            let (tm, ts) = mean_std(&t.iter().map(|x| x.dt11).collect::<Vec<_>>());
            let (rm, rs) = mean_std(&r.iter().map(|x| x.dt11).collect::<Vec<_>>());
            let total = rows.iter().filter(|r| r.alpha == a && r.method == "targeted").count();
            Fig3Summary {
                alpha: a,
                feasible: t.len() == total && total > 0,
                trials: total,
                goal_met: t.iter().filter(|x| x.goal_met).count(),
                targeted_mean: tm,
                targeted_std: ts,
                random_mean: rm,
                random_std: rs,
            }
        })
        .collect()
}

/// One point of the energy–performance sweep.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Fig4Row {
    pub gamma_p: f64,
    pub gamma_e: f64,
    pub status: String,
    pub eps: f64,
    pub lambda_s: f64,
    pub lambda_u: f64,
    pub dbar11: f64,
}

/// Baselines and sweep of minimal exploration energy over γ_p.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Fig4Report {
    /// Optimal ℓ₂ gain with exact knowledge of the true system.
    pub nominal: f64,
    /// Single-channel robust design over Θ₀.
    pub robust: f64,
    /// Smallest γ_p reachable without exploration (D̄_T = 0).
    pub prior_only: f64,
    /// Limit for unbounded exploration (uncertainty channel removed).
    pub gamma_min: f64,
    pub rows: Vec<Fig4Row>,
}

/// Relative upward rounding of reported baselines so that the design LMI at
/// the reported level has a strict certificate.
pub const BASELINE_ROUNDING: f64 = 1e-6;

/// Energy–performance sweep.
///
/// γ_p values are processed in increasing order and the optimal
/// (ε, λ_s, λ_u) of every earlier point is re-evaluated at later points;
/// since the feasible set grows with γ_p this keeps γ_e non-increasing.
pub fn fig4_harness(cfg: &ExperimentConfig, seed: u64) -> Result<Fig4Report> {
    let s = setup(cfg, 1.0, seed)?;
    let n_x = s.system.n_x();
    let perf = cfg.performance(n_x)?;
    let (a0, b0) = s.prior.ab();
    let d0 = s.prior.d0.clone();
    let up = |g: f64| g * (1.0 + BASELINE_ROUNDING);
    let nominal = up(h_infinity_baseline(&s.system.a, &s.system.b, &perf, &BaselineMode::Nominal)?.gamma);
    let robust = up(h_infinity_baseline(&a0, &b0, &perf, &BaselineMode::Robust(d0.clone()))?.gamma);
    let prior_only = up(h_infinity_baseline(&a0, &b0, &perf, &BaselineMode::PriorOnly(d0.clone()))?.gamma);
    let gamma_min = up(h_infinity_baseline(&a0, &b0, &perf, &BaselineMode::SchedulingOnly(d0))?.gamma);
    let mut list = cfg.fig4.gamma_p.clone();
    if list.is_empty() {
        list = default_sweep(nominal, gamma_min, prior_only, cfg.fig4.points.unwrap_or(8));
    }
    let sigma = design_sigma(s.system.sigma_w);
    let mut opts = cfg.dual_options();
    let mut rows = Vec::new();
    for &gp in &list {
        let p = cfg.performance_at(n_x, gp)?;
        match solve_dual_problem(&s.prior, &s.grid, &s.constants, sigma, &p, &opts) {
            Ok(d) => {
                let c = &d.controller;
                let h = [d.eps, c.lambda_s, c.lambda_u];
                if d.plan.gamma_e > 0.0 && !opts.hints.contains(&h) {
                    opts.hints.push(h);
                }
                rows.push(Fig4Row {
                    gamma_p: gp,
                    gamma_e: d.plan.gamma_e,
                    status: "ok".into(),
                    eps: d.eps,
                    lambda_s: c.lambda_s,
                    lambda_u: c.lambda_u,
                    dbar11: d.plan.dbar_t[(0, 0)],
                });
            }
            Err(e) if matches!(e, Error::Unreachable) || e.is_infeasible() => rows.push(Fig4Row {
                gamma_p: gp,
                gamma_e: f64::NAN,
                status: "infeasible".into(),
                eps: f64::NAN,
                lambda_s: f64::NAN,
                lambda_u: f64::NAN,
                dbar11: f64::NAN,
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(Fig4Report { nominal, robust, prior_only, gamma_min, rows })
}

/// Probes below the nominal level and below γ_min, then `points` values from
/// just above γ_min up to the prior-only level.
pub fn default_sweep(nominal: f64, gamma_min: f64, prior_only: f64, points: usize) -> Vec<f64> {
    let mut v = vec![0.99 * nominal, 0.99 * gamma_min];
    let lo = gamma_min * 1.002;
    let hi = prior_only;
    let k = points.max(2);
    for i in 0..k {
        v.push(lo + (hi - lo) * i as f64 / (k - 1) as f64);
    }
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite sweep"));
    v.dedup();
    v
}

/// Region in which validation plants are drawn.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SampleScope {
    /// Δ_s in Θ₀ and Δ_uᵀΔ_u ⪯ (D₀ + D̄_T)⁻¹.
    Guaranteed,
    /// Δ_u inflated by the factor (outside the guarantee).
    Inflated(f64),
}

/// Closed-loop validation summary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub gamma_p: f64,
    pub gains: Vec<f64>,
    pub max_gain: f64,
    pub violations: usize,
}

/// Samples scheduling parameters θ̃ ∈ Θ₀ and residual uncertainties around
/// them, extracts the feedback at θ̃ and checks the closed-loop H∞ norm of
/// the sampled plant against γ_p. Half the residuals lie on the boundary of
/// their matrix ball; unstable loops count as violations.
pub fn validate_closed_loop(
    ctrl: &GainScheduledController,
    prior: &GaussianPrior,
    dbar_t: &Mat,
    perf: &PerformanceIndex,
    samples: usize,
    scope: SampleScope,
    seed: u64,
) -> Result<ValidationReport> {
    let gamma_p = perf.gamma().ok_or_else(|| Error::InvalidArgument("validation needs an l2-gain index".into()))?;
    let n_x = prior.n_x;
    let (a0, b0) = prior.ab();
    let shape_u = &prior.d0 + dbar_t;
    let factor = match scope {
        SampleScope::Guaranteed => 1.0,
        SampleScope::Inflated(f) => f,
    };
    let mut rng = seeds::rng(seed);
    let mut gains = Vec::with_capacity(samples);
    let mut violations = 0;
    for i in 0..samples {
        let tilde = sample_in_ellipsoid(&prior.theta_prior, &prior.d0, n_x, &mut rng)?;
        let (at, bt) = unvec_ab(&tilde, n_x)?;
        let k = extract_controller(ctrl, &a0, &b0, &at, &bt)?;
        let du = sample_matrix_ball(n_x, &shape_u, i % 2 == 0, &mut rng)? * factor;
        let plant = stack_ab(&at, &bt) + du;
        let a = plant.columns(0, n_x).into_owned();
        let b = plant.columns(n_x, 1).into_owned();
        let g = closed_loop_hinf(&a, &b, &k, &perf.c, &perf.d_u, &perf.d_w).unwrap_or(f64::INFINITY);
        if !(g <= gamma_p + VALIDATION_SLACK) {
            violations += 1;
        }
        gains.push(g);
    }
    let max_gain = gains.iter().cloned().fold(0.0, f64::max);
    Ok(ValidationReport { gamma_p, gains, max_gain, violations })
}

/// Membership frequency of the true parameter in the posterior credibility
/// region, with θ_tr drawn from the prior and the plan applied from rest.
pub fn posterior_coverage(prior: &GaussianPrior, plan: &ExplorationPlan, sigma_w: f64, trials: usize, seed: u64) -> Result<usize> {
    let n_x = prior.n_x;
    let l_inv = chol(&prior.dtilde0, "D̃0")?.l().try_inverse().ok_or_else(|| Error::Singular("prior factor".into()))?;
    let center = unvec(&prior.theta_prior, n_x);
    let u = generate_input(plan);
    let mut hits = 0;
    for t in 0..trials {
        let mut rng = seeds::rng(seeds::derive(seed, &[stage::VALIDATION, t as u64]));
        let z = Mat::from_fn(n_x, n_x + 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let th = &center + z * &l_inv;
        let sys = SystemModel::new(th.columns(0, n_x).into_owned(), th.columns(n_x, 1).into_owned(), sigma_w)?;
        let tr = simulate(&sys, &u, &Vector::zeros(n_x), seeds::derive(seed, &[stage::NOISE, t as u64]))?;
        let est = map_estimate(prior, &Dataset::from_trajectory(&tr), sigma_w)?;
        let region = credibility_region(&est.theta_hat, &est.d_post, prior.delta, n_x);
        if region.contains(&Vector::from_column_slice(th.as_slice())) {
            hits += 1;
        }
    }
    Ok(hits)
}

/// Frequency of D_T ⪰ D̄_T over noise realizations for a fixed plan.
pub fn guarantee_frequency(system: &SystemModel, prior: &GaussianPrior, plan: &ExplorationPlan, runs: usize, seed: u64) -> Result<Vec<TrialResult>> {
    (0..runs).map(|i| targeted_trial(system, prior, plan, seeds::derive(seed, &[stage::NOISE, i as u64]))).collect()
}

/// Run manifest: everything needed to reproduce the outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub version: String,
    pub config: ExperimentConfig,
    pub outputs: Vec<String>,
}

impl Manifest {
    /// Reads a manifest written by [`write_manifest`].
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Writes `manifest.json` into `dir`.
pub fn write_manifest(dir: &Path, m: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(m).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Writes rows with a header line.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Validation table row.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationRow {
    pub sample: usize,
    pub gain: f64,
    pub gamma_p: f64,
    pub violation: bool,
}

/// validation.csv from a report.
pub fn validation_rows(r: &ValidationReport) -> Vec<ValidationRow> {
    r.gains
        .iter()
        .enumerate()
        .map(|(i, &g)| ValidationRow { sample: i, gain: g, gamma_p: r.gamma_p, violation: !(g <= r.gamma_p + VALIDATION_SLACK) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_input_energy_exact() {
        let u = random_input(100, 1234.5, 3);
        let e: f64 = u.iter().map(|v| v * v).sum();
        assert!((e - 1234.5).abs() <= 1e-12 * 1234.5);
        assert!(random_input(10, 0.0, 3).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ellipsoid_samples_inside() {
        let mut rng = seeds::rng(4);
        let d = Mat::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let c = Vector::from_column_slice(&[1.0, 2.0, 3.0, 4.0]);
        for _ in 0..200 {
            let th = sample_in_ellipsoid(&c, &d, 2, &mut rng).unwrap();
            let delta = unvec(&(th - &c), 2);
            assert!((&delta * &d * delta.transpose()).trace() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn matrix_ball_bound() {
        let mut rng = seeds::rng(5);
        let d = Mat::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let d_inv = d.clone().try_inverse().unwrap();
        for b in [true, false] {
            let m = sample_matrix_ball(2, &d, b, &mut rng).unwrap();
            let gap = &d_inv - m.transpose() * &m;
            assert!(min_eig(&gap) >= -1e-12);
            if b {
                assert!(min_eig(&gap).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn jobs_keep_order() {
        let v = run_jobs(17, 4, |i| i * i);
        assert_eq!(v, (0..17).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn sweep_is_sorted() {
        let v = default_sweep(3.0, 3.4, 3.9, 6);
        assert!(v.windows(2).all(|w| w[0] < w[1]));
        assert!(v[0] < 3.0 && *v.last().unwrap() == 3.9);
    }
}
