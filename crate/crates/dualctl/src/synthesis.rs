//! Semidefinite programs of the dual-control design: input energy bound,
//! robust exploration constraint, gain-scheduling performance LMI, the
//! combined dual problem, L-iteration, controller extraction and H∞ baselines.

use serde::{Deserialize, Serialize};

use crate::bounds::BoundConstants;
use crate::error::{Error, Result};
use crate::estimation::GaussianPrior;
use crate::linalg::{max_abs, min_eig, spd_inverse, sym, CMat, Mat, Vector};
use crate::model::PerformanceIndex;
use crate::sdp::{log_grid, AffMat, Problem, Solution, Status};
use crate::spectral::{transfer_matrices, ExplorationPlan, FrequencyGrid};

/// [[γ_e, aᵀ], [a, γ_e I]] ⪰ 0, equivalent to ‖a‖ ≤ γ_e.
pub fn energy_bound_lmi(gamma_e: &AffMat, amps: &[AffMat]) -> AffMat {
    let n = amps.len();
    let mut col = AffMat::zeros(n, 1);
    for (i, a) in amps.iter().enumerate() {
        col = col.add(&AffMat::blocks(
            &[vec![None], vec![Some(a.clone())], vec![None]],
            &[i, 1, n - i - 1],
            &[1],
        ));
    }
    AffMat::sym_blocks(
        &[vec![Some(gamma_e.clone())], vec![Some(col), Some(gamma_e.scalar_times(&Mat::identity(n, n)))]],
        &[1, n],
    )
}

/// Precomputed data of the robust exploration constraint.
///
/// With the line map V̂_c = V̂·diag(c) and the true map V_c = (I + E)V̂_c,
/// ‖E‖ ≤ γ_v1, the real part Re(V_c P V_cᴴ) of a diagonal amplitude-power
/// matrix P equals [I, F]·B·diag(P, P)·Bᵀ·[I, F]ᵀ with F = [Re E, −Im E],
/// ‖F‖ ≤ γ_v1, and B = [V̂_R; W], V̂_R = [Re V̂_c, Im V̂_c],
/// W = [[Re V̂_c, Im V̂_c], [Im V̂_c, −Re V̂_c]]. The full-block S-lemma turns
/// the robust requirement into one LMI with multiplier τ ≥ 0.
#[derive(Clone, Debug)]
pub struct ExplorationData {
    pub n: usize,
    pub k: f64,
    pub n0: f64,
    pub gamma_v1: f64,
    pub line_map: CMat,
    pub basis: Vec<Mat>,
}

impl ExplorationData {
    /// Assembles the data; requires γ_v1 < 1/2.
    pub fn new(prior: &GaussianPrior, grid: &FrequencyGrid, c: &BoundConstants, sigma_w: f64) -> Result<Self> {
        if c.gamma_v1 >= 0.5 {
            return Err(Error::UncertaintyTooLarge(c.gamma_v1));
        }
        if !(c.eps > 0.0 && c.eps < 1.0) {
            return Err(Error::InvalidArgument(format!("eps = {} outside (0, 1)", c.eps)));
        }
        let n = prior.n_phi();
        if grid.len() != n {
            return Err(Error::Dimension(format!("grid has {} lines, expected {n}", grid.len())));
        }
        let (a0, b0) = prior.ab();
        let td = transfer_matrices(&a0, &b0, grid)?;
        let vc = td.line_map(grid);
        if vc.clone().rank(1e-10 * vc.iter().fold(0.0_f64, |s, v| s.max(v.norm()))) < n {
            return Err(Error::Singular("nominal transfer matrix is rank deficient".into()));
        }
        let cbar = sigma_w * sigma_w * c.c_delta;
        let t = grid.t as f64;
        let k = t * (1.0 - c.eps) / (cbar * n as f64);
        let n0 = t / (cbar * n as f64) * (1.0 - c.eps) / c.eps * c.l * c.l;
        let re = vc.map(|v| v.re);
        let im = vc.map(|v| v.im);
        let mut bm = Mat::zeros(3 * n, 2 * n);
        bm.view_mut((0, 0), (n, n)).copy_from(&re);
        bm.view_mut((0, n), (n, n)).copy_from(&im);
        bm.view_mut((n, 0), (n, n)).copy_from(&re);
        bm.view_mut((n, n), (n, n)).copy_from(&im);
        bm.view_mut((2 * n, 0), (n, n)).copy_from(&im);
        bm.view_mut((2 * n, n), (n, n)).copy_from(&(-&re));
        let basis = (0..n)
            .map(|i| {
                let a = bm.column(i);
                let b = bm.column(n + i);
                a * a.transpose() + b * b.transpose()
            })
            .collect();
        Ok(Self { n, k, n0, gamma_v1: c.gamma_v1, line_map: vc, basis })
    }

    /// Robust block k Σ q_i G_i − diag(D̄ + n0 I + τγ² I, −τ I) for line powers q_i.
    pub fn robust_block(&self, q: &[AffMat], dbar: &AffMat, tau: &AffMat) -> AffMat {
        let n = self.n;
        let mut z = AffMat::zeros(3 * n, 3 * n);
        for (qi, g) in q.iter().zip(&self.basis) {
            z = z.add(&qi.scalar_times(&(g * self.k)));
        }
        let mut sel_top = Mat::zeros(n, 3 * n);
        sel_top.view_mut((0, 0), (n, n)).fill_with_identity();
        let mut sel_bot = Mat::zeros(2 * n, 3 * n);
        sel_bot.view_mut((0, n), (2 * n, 2 * n)).fill_with_identity();
        let top = dbar
            .add_const(&(Mat::identity(n, n) * self.n0))
            .add(&tau.scalar_times(&(Mat::identity(n, n) * (self.gamma_v1 * self.gamma_v1))));
        let bot = tau.scalar_times(&Mat::identity(2 * n, 2 * n)).scale(-1.0);
        let rhs = top.lmul(&sel_top.transpose()).rmul(&sel_top).add(&bot.lmul(&sel_bot.transpose()).rmul(&sel_bot));
        z.sub(&rhs)
    }

    /// Exact lower bound on D_T for line powers p (nominal line map, no uncertainty).
    pub fn nominal_bound(&self, p: &[f64]) -> Mat {
        let n = self.n;
        let mut g = Mat::zeros(n, n);
        for (i, &pi) in p.iter().enumerate() {
            g += self.basis[i].view((0, 0), (n, n)) * pi;
        }
        g * self.k - Mat::identity(n, n) * self.n0
    }

    /// Minimal eigenvalue of the robust block at numeric (p, D̄, τ), relative to its size.
    pub fn certificate(&self, p: &[f64], dbar: &Mat, tau: f64) -> f64 {
        let q: Vec<AffMat> = p.iter().map(|&v| AffMat::constant(Mat::from_element(1, 1, v))).collect();
        let e = self.robust_block(&q, &AffMat::constant(dbar.clone()), &AffMat::constant(Mat::from_element(1, 1, tau)));
        let m = e.eval(&[]);
        min_eig(&m) / max_abs(&m).max(1e-300)
    }
}

/// Linearized line powers q_i = 2 a_i ã_i − ã_i², a minorant of a_i² tight at ã.
pub fn linearized_powers(amps: &[AffMat], candidate: &[f64]) -> Vec<AffMat> {
    amps.iter()
        .zip(candidate)
        .map(|(a, &c)| a.scale(2.0 * c).add_const(&Mat::from_element(1, 1, -c * c)))
        .collect()
}

/// Robust exploration LMI in the amplitudes, relaxed around a candidate.
pub fn exploration_lmi(data: &ExplorationData, amps: &[AffMat], candidate: &[f64], dbar: &AffMat, tau: &AffMat) -> AffMat {
    data.robust_block(&linearized_powers(amps, candidate), dbar, tau)
}

/// Initial amplitude candidate for the L-iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Candidate {
    /// Unit amplitudes.
    Identity,
    /// Unit amplitudes scaled to the goal and noise floor.
    Scaled,
    /// Explicit amplitudes.
    Explicit(Vec<f64>),
}

impl Candidate {
    fn amplitudes(&self, data: &ExplorationData, goal_norm: f64) -> Vec<f64> {
        let n = data.n;
        match self {
            Candidate::Identity => vec![1.0; n],
            Candidate::Explicit(v) => v.clone(),
            Candidate::Scaled => {
                let g = data.nominal_bound(&vec![1.0; n]) + Mat::identity(n, n) * data.n0;
                let mean = g.trace() / n as f64;
                let s2 = (goal_norm + data.n0) / mean.max(1e-300) * n as f64;
                vec![s2.sqrt(); n]
            }
        }
    }
}

/// Result of the exploration problem.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExplorationOutcome {
    pub plan: ExplorationPlan,
    pub history: Vec<f64>,
    pub converged: bool,
    pub tau: f64,
    pub certificate: f64,
}

fn check_goal(goal: &Mat, n: usize) -> Result<()> {
    if goal.shape() != (n, n) {
        return Err(Error::Dimension(format!("goal must be {n}x{n}")));
    }
    if min_eig(goal) < -1e-12 * max_abs(goal).max(1.0) {
        return Err(Error::InvalidArgument("goal must be positive semidefinite".into()));
    }
    Ok(())
}

fn infeasible(s: &Solution, what: &str) -> Error {
    match s.status {
        Status::Infeasible => Error::Infeasible(format!("{what}: {}", s.detail)),
        _ => Error::Solver(format!("{what}: {}", s.detail)),
    }
}

/// Minimizes γ_e for a fixed excitation goal, iterating the relaxation point.
///
/// Each iteration solves min γ_e subject to the energy LMI and the robust
/// exploration LMI linearized at the previous amplitudes; the previous optimum
/// stays feasible, so γ_e is non-increasing.
pub fn solve_exploration_problem(
    prior: &GaussianPrior,
    grid: &FrequencyGrid,
    constants: &BoundConstants,
    sigma_w: f64,
    goal: &Mat,
    candidate: &Candidate,
    max_iters: usize,
) -> Result<ExplorationOutcome> {
    let n = prior.n_phi();
    check_goal(goal, n)?;
    if max_abs(goal) == 0.0 {
        let mut plan = ExplorationPlan::zero(grid.clone());
        plan.dbar_t = goal.clone();
        return Ok(ExplorationOutcome { plan, history: vec![0.0], converged: true, tau: 0.0, certificate: 0.0 });
    }
    let data = ExplorationData::new(prior, grid, constants, sigma_w)?;
    let goal_norm = max_abs(goal);
    let mut cand = candidate.amplitudes(&data, goal_norm);
    if cand.len() != n || cand.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("candidate amplitudes must be positive, one per line".into()));
    }
    let mut history = Vec::new();
    let mut best: Option<(Vec<f64>, f64, f64)> = None;
    let mut converged = false;
    for it in 0..max_iters.max(1) {
        let scale = cand.iter().fold(0.0_f64, |s, v| s.max(*v));
        let mut p = Problem::new();
        let avars: Vec<usize> = (0..n).map(|i| p.scalar(&format!("a{i}"), scale)).collect();
        let g = p.scalar("gamma_e", scale * (n as f64).sqrt());
        let tau = p.scalar("tau", goal_norm + data.n0);
        let amps: Vec<AffMat> = avars.iter().map(|&v| AffMat::var(v)).collect();
        p.psd("energy", energy_bound_lmi(&AffMat::var(g), &amps), 0.0);
        p.psd("exploration", exploration_lmi(&data, &amps, &cand, &AffMat::constant(goal.clone()), &AffMat::var(tau)), 0.0);
        p.nonneg("tau", AffMat::var(tau));
        p.minimize(g, 1.0);
        let s = p.solve()?;
        if s.status != Status::Optimal {
            if it == 0 {
                return Err(infeasible(&s, "exploration problem"));
            }
            break;
        }
        let a: Vec<f64> = avars.iter().map(|&v| s.x[v]).collect();
        let ge = s.x[g].max(a.iter().map(|v| v * v).sum::<f64>().sqrt());
        history.push(ge);
        let change = a.iter().zip(&cand).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let size = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        best = Some((a.clone(), ge, s.x[tau]));
        cand = a.iter().map(|v| v.abs().max(1e-12 * size)).collect();
        if change <= 1e-6 * size {
            converged = true;
            break;
        }
    }
    let (a, ge, tau) = best.ok_or_else(|| Error::Solver("no iterate".into()))?;
    let powers: Vec<f64> = a.iter().map(|v| v * v).collect();
    let certificate = data.certificate(&powers, goal, tau);
    let plan = ExplorationPlan { grid: grid.clone(), amplitudes: a, gamma_e: ge, dbar_t: goal.clone() };
    Ok(ExplorationOutcome { plan, history, converged, tau, certificate })
}

/// Exact convex form of the exploration problem in the line powers p_i = a_i².
pub fn solve_exploration_lifted(
    prior: &GaussianPrior,
    grid: &FrequencyGrid,
    constants: &BoundConstants,
    sigma_w: f64,
    goal: &Mat,
) -> Result<ExplorationOutcome> {
    let n = prior.n_phi();
    check_goal(goal, n)?;
    if max_abs(goal) == 0.0 {
        let mut plan = ExplorationPlan::zero(grid.clone());
        plan.dbar_t = goal.clone();
        return Ok(ExplorationOutcome { plan, history: vec![0.0], converged: true, tau: 0.0, certificate: 0.0 });
    }
    let data = ExplorationData::new(prior, grid, constants, sigma_w)?;
    let goal_norm = max_abs(goal);
    let s2 = Candidate::Scaled.amplitudes(&data, goal_norm)[0].powi(2);
    let mut p = Problem::new();
    let pv: Vec<usize> = (0..n).map(|i| p.scalar(&format!("p{i}"), s2)).collect();
    let t = p.scalar("t", s2 * n as f64);
    let tau = p.scalar("tau", goal_norm + data.n0);
    let q: Vec<AffMat> = pv.iter().map(|&v| AffMat::var(v)).collect();
    p.psd("exploration", data.robust_block(&q, &AffMat::constant(goal.clone()), &AffMat::var(tau)), 0.0);
    let mut energy = AffMat::var(t);
    for qi in &q {
        p.nonneg("power", qi.clone());
        energy = energy.sub(qi);
    }
    p.nonneg("energy", energy);
    p.nonneg("tau", AffMat::var(tau));
    p.minimize(t, 1.0);
    let s = p.solve()?;
    if s.status != Status::Optimal {
        return Err(infeasible(&s, "lifted exploration problem"));
    }
    let powers: Vec<f64> = pv.iter().map(|&v| s.x[v].max(0.0)).collect();
    let a: Vec<f64> = powers.iter().map(|v| v.sqrt()).collect();
    let ge = s.x[t].max(0.0).sqrt().max(a.iter().map(|v| v * v).sum::<f64>().sqrt());
    let certificate = data.certificate(&powers, goal, s.x[tau]);
    Ok(ExplorationOutcome {
        plan: ExplorationPlan { grid: grid.clone(), amplitudes: a, gamma_e: ge, dbar_t: goal.clone() },
        history: vec![ge],
        converged: true,
        tau: s.x[tau],
        certificate,
    })
}

/// Decision variables of the gain-scheduling LMI.
#[derive(Clone, Debug)]
pub struct GsVars {
    pub n: AffMat,
    pub m: AffMat,
    pub k_s: AffMat,
}

impl GsVars {
    /// Allocates N (n_x × n_x symmetric), M and K_s (1 × n_x).
    pub fn new(p: &mut Problem, n_x: usize) -> Self {
        Self { n: p.symmetric("N", n_x, 1.0), m: p.matrix("M", 1, n_x, 1.0), k_s: p.matrix("Ks", 1, n_x, 1.0) }
    }

    /// Numeric values at a solution.
    pub fn values(&self, x: &[f64]) -> (Mat, Mat, Mat) {
        (self.n.eval(x), self.m.eval(x), self.k_s.eval(x))
    }
}

/// Performance multiplier blocks; γ may be a decision variable.
#[derive(Clone, Debug)]
pub struct PerfBlocks {
    pub c: Mat,
    pub d_u: Mat,
    pub d_w: Mat,
    pub q_p: AffMat,
    pub s_p: Mat,
    pub r_p_inv: AffMat,
}

impl PerfBlocks {
    /// Fixed index.
    pub fn fixed(perf: &PerformanceIndex) -> Result<Self> {
        Ok(Self {
            c: perf.c.clone(),
            d_u: perf.d_u.clone(),
            d_w: perf.d_w.clone(),
            q_p: AffMat::constant(perf.q_p.clone()),
            s_p: perf.s_p.clone(),
            r_p_inv: AffMat::constant(spd_inverse(&perf.r_p, "R_p")?),
        })
    }

    /// ℓ₂-gain index with γ given by a scalar expression.
    pub fn l2_variable(c: &Mat, d_u: &Mat, d_w: &Mat, gamma: &AffMat) -> Self {
        let n_w = d_w.ncols();
        let n_z = c.nrows();
        Self {
            c: c.clone(),
            d_u: d_u.clone(),
            d_w: d_w.clone(),
            q_p: gamma.scalar_times(&Mat::identity(n_w, n_w)).scale(-1.0),
            s_p: Mat::zeros(n_w, n_z),
            r_p_inv: gamma.scalar_times(&Mat::identity(n_z, n_z)),
        }
    }
}

/// Uncertainty channels present in the gain-scheduling LMI.
#[derive(Clone, Debug)]
pub struct Channels {
    /// R_s⁻¹ of the scheduling channel (Δ_sᵀΔ_s ⪯ R_s).
    pub rs_inv: Option<Mat>,
    /// R_u⁻¹ of the residual uncertainty channel, possibly affine in D̄_T.
    pub ru_inv: Option<AffMat>,
    pub lambda_s: f64,
    pub lambda_u: f64,
}

/// Gain-scheduling LMI (to be made negative definite) in N, M, K_s.
///
/// Rows and columns are ordered (x, w^s, w^u, w | x⁺, z^s, z^u, z) with the
/// scheduling and uncertainty groups omitted when the channel is absent.
pub fn gain_scheduling_lmi(a0: &Mat, b0: &Mat, perf: &PerfBlocks, ch: &Channels, v: &GsVars) -> AffMat {
    let n = a0.nrows();
    let n_phi = n + 1;
    let n_w = perf.d_w.ncols();
    let n_z = perf.c.nrows();
    let eye = Mat::identity(n, n);
    let phi_x = v.n.clone();
    let zx = AffMat::blocks(&[vec![Some(phi_x.clone())], vec![Some(v.m.clone())]], &[n, 1], &[n]);
    let zws = AffMat::blocks(&[vec![None], vec![Some(v.k_s.clone())]], &[n, 1], &[n]);
    let cn_dm = v.n.lmul(&perf.c).add(&v.m.lmul(&perf.d_u));
    let dks = v.k_s.lmul(&perf.d_u);
    let sched = ch.rs_inv.is_some();
    let unc = ch.ru_inv.is_some();

    let mut dims = vec![n];
    if sched {
        dims.push(n);
    }
    if unc {
        dims.push(n);
    }
    dims.push(n_w);
    dims.push(n);
    if sched {
        dims.push(n_phi);
    }
    if unc {
        dims.push(n_phi);
    }
    dims.push(n_z);
    let nb = dims.len();
    let idx = |name: &str| -> usize {
        let mut order = vec!["x"];
        if sched {
            order.push("ws");
        }
        if unc {
            order.push("wu");
        }
        order.extend(["w", "x+"]);
        if sched {
            order.push("zs");
        }
        if unc {
            order.push("zu");
        }
        order.push("z");
        order.iter().position(|o| *o == name).unwrap()
    };
    let mut lower: Vec<Vec<Option<AffMat>>> = vec![vec![None; nb]; nb];
    let mut set = |r: &str, c: &str, e: AffMat| {
        let (i, j) = (idx(r), idx(c));
        lower[i][j] = Some(e);
    };
    set("x", "x", v.n.scale(-1.0));
    if sched {
        set("ws", "ws", AffMat::constant(-&eye * ch.lambda_s));
    }
    if unc {
        set("wu", "wu", AffMat::constant(-&eye * ch.lambda_u));
    }
    set("w", "x", cn_dm.lmul(&perf.s_p));
    if sched {
        set("w", "ws", dks.lmul(&perf.s_p));
    }
    let sd = &perf.s_p * &perf.d_w;
    set("w", "w", perf.q_p.add_const(&(sd.transpose() + sd)));
    set("x+", "x", v.n.lmul(a0).add(&v.m.lmul(b0)));
    if sched {
        set("x+", "ws", v.k_s.lmul(b0).add_const(&eye));
    }
    if unc {
        set("x+", "wu", AffMat::constant(eye.clone()));
    }
    set("x+", "w", AffMat::constant(Mat::identity(n, n_w)));
    set("x+", "x+", v.n.scale(-1.0));
    if let Some(rs) = &ch.rs_inv {
        set("zs", "x", zx.clone());
        set("zs", "ws", zws.clone());
        set("zs", "zs", AffMat::constant(-rs / ch.lambda_s));
    }
    if let Some(ru) = &ch.ru_inv {
        set("zu", "x", zx.clone());
        if sched {
            set("zu", "ws", zws.clone());
        }
        set("zu", "zu", ru.scale(-1.0 / ch.lambda_u));
    }
    set("z", "x", cn_dm);
    if sched {
        set("z", "ws", dks);
    }
    set("z", "w", AffMat::constant(perf.d_w.clone()));
    set("z", "z", perf.r_p_inv.scale(-1.0));
    AffMat::sym_blocks(&lower, &dims)
}

/// Quadratic dissipation matrix of the closed loop in the original coordinates
/// (X = N⁻¹, K_x = M N⁻¹); negative definite iff the LMI is.
#[allow(clippy::too_many_arguments)]
pub fn gain_scheduling_expanded(
    a0: &Mat,
    b0: &Mat,
    perf: &PerformanceIndex,
    rs_inv: Option<&Mat>,
    ru_inv: Option<&Mat>,
    lambda_s: f64,
    lambda_u: f64,
    n_mat: &Mat,
    m: &Mat,
    k_s: &Mat,
) -> Result<Mat> {
    let n = a0.nrows();
    let n_w = perf.d_w.ncols();
    let x = spd_inverse(n_mat, "N")?;
    let kx = m * &x;
    let sched = rs_inv.is_some();
    let unc = ru_inv.is_some();
    let dims: Vec<usize> = [Some(n), sched.then_some(n), unc.then_some(n), Some(n_w)].into_iter().flatten().collect();
    let total: usize = dims.iter().sum();
    let mut off = 0;
    let mut sel = |k: usize| {
        let mut s = Mat::zeros(k, total);
        s.view_mut((0, off), (k, k)).fill_with_identity();
        off += k;
        s
    };
    let ex = sel(n);
    let es = if sched { sel(n) } else { Mat::zeros(n, total) };
    let eu = if unc { sel(n) } else { Mat::zeros(n, total) };
    let ew = sel(n_w);
    let xp = (a0 + b0 * &kx) * &ex + (Mat::identity(n, n) + b0 * k_s) * &es + &eu + Mat::identity(n, n_w) * &ew;
    let mut zphi = Mat::zeros(n + 1, total);
    zphi.view_mut((0, 0), (n, total)).copy_from(&ex);
    zphi.view_mut((n, 0), (1, total)).copy_from(&(&kx * &ex + k_s * &es));
    let z = (&perf.c + &perf.d_u * &kx) * &ex + &perf.d_u * k_s * &es + &perf.d_w * &ew;
    let mut e = xp.transpose() * &x * &xp - ex.transpose() * &x * &ex;
    if let Some(rs) = rs_inv {
        let r = spd_inverse(rs, "R_s^-1")?;
        e += (zphi.transpose() * r * &zphi - es.transpose() * &es) * lambda_s;
    }
    if let Some(ru) = ru_inv {
        let r = spd_inverse(ru, "R_u^-1")?;
        e += (zphi.transpose() * r * &zphi - eu.transpose() * &eu) * lambda_u;
    }
    let sp = ew.transpose() * &perf.s_p * &z;
    e += ew.transpose() * &perf.q_p * &ew + &sp + sp.transpose() + z.transpose() * &perf.r_p * &z;
    Ok(sym(&e))
}

/// Gain-scheduled controller u = K_x x + K_s w^s.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GainScheduledController {
    pub k_s: Mat,
    pub m: Mat,
    pub n: Mat,
    pub lambda_s: f64,
    pub lambda_u: f64,
    pub gamma_p: f64,
}

impl GainScheduledController {
    /// K_x = M N⁻¹.
    pub fn k_x(&self) -> Result<Mat> {
        Ok(&self.m * spd_inverse(&self.n, "N")?)
    }
}

/// Explicit feedback K = (1 − K_s(B̃ − B̂₀))⁻¹ (K_x + K_s(Ã − Â₀)).
pub fn extract_controller(ctrl: &GainScheduledController, a0: &Mat, b0: &Mat, at: &Mat, bt: &Mat) -> Result<Mat> {
    let kx = ctrl.k_x()?;
    let f = 1.0 - (&ctrl.k_s * (bt - b0))[(0, 0)];
    if f.abs() < 1e-10 {
        return Err(Error::Singular("scheduling factor 1 - Ks (B~ - B0)".into()));
    }
    Ok((kx + &ctrl.k_s * (at - a0)) / f)
}

fn strict_margin() -> f64 {
    1e-8
}

/// Robustness modes of the H∞ baselines.
#[derive(Clone, Debug)]
pub enum BaselineMode {
    /// Exact knowledge of (A, B).
    Nominal,
    /// Single uncertainty channel Δᵀ Δ ⪯ D₀⁻¹ (scheduling channel removed).
    Robust(Mat),
    /// Both channels at the prior level, i.e. the dual design with D̄_T = 0.
    PriorOnly(Mat),
    /// Scheduling channel only: the limit of unbounded exploration.
    SchedulingOnly(Mat),
}

/// Minimal ℓ₂ gain and the corresponding design.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Baseline {
    pub gamma: f64,
    pub controller: GainScheduledController,
}

fn min_gamma_at(a: &Mat, b: &Mat, perf: &PerformanceIndex, rs: Option<&Mat>, ru: Option<&Mat>, ls: f64, lu: f64) -> Result<Option<Baseline>> {
    let mut p = Problem::new();
    let g = p.scalar("gamma", 1.0);
    let v = GsVars::new(&mut p, a.nrows());
    let blocks = PerfBlocks::l2_variable(&perf.c, &perf.d_u, &perf.d_w, &AffMat::var(g));
    let ch = Channels { rs_inv: rs.cloned(), ru_inv: ru.map(|m| AffMat::constant(m.clone())), lambda_s: ls, lambda_u: lu };
    p.nsd("gain scheduling", gain_scheduling_lmi(a, b, &blocks, &ch, &v), strict_margin());
    p.nonneg("gamma bound", AffMat::var(g).scale(-1.0).add_const(&Mat::from_element(1, 1, 1e6)));
    p.minimize(g, 1.0);
    let s = p.solve()?;
    if s.status != Status::Optimal {
        return Ok(None);
    }
    let (n, m, k_s) = v.values(&s.x);
    Ok(Some(Baseline { gamma: s.x[g], controller: GainScheduledController { k_s, m, n, lambda_s: ls, lambda_u: lu, gamma_p: s.x[g] } }))
}

/// Minimal ℓ₂ gain of the state-feedback design in the given mode.
pub fn h_infinity_baseline(a: &Mat, b: &Mat, perf: &PerformanceIndex, mode: &BaselineMode) -> Result<Baseline> {
    let fail = || Error::Infeasible("not stabilizable with gamma below 1e6".into());
    let best_1d = |f: &dyn Fn(f64) -> Result<Option<Baseline>>| -> Result<Option<Baseline>> {
        let mut best: Option<Baseline> = None;
        let consider = |c: Option<Baseline>, best: &mut Option<Baseline>| {
            if let Some(c) = c {
                if best.as_ref().map_or(true, |b| c.gamma < b.gamma) {
                    *best = Some(c);
                }
            }
        };
        let grid = log_grid(1e-3, 1e3, 13);
        let mut bi = None;
        for (i, &l) in grid.iter().enumerate() {
            let before = best.as_ref().map(|b| b.gamma);
            consider(f(l)?, &mut best);
            if best.as_ref().map(|b| b.gamma) != before {
                bi = Some(i);
            }
        }
        if let Some(i) = bi {
            let lo = grid[i.saturating_sub(1)];
            let hi = grid[(i + 1).min(grid.len() - 1)];
            for l in log_grid(lo, hi, 9) {
                consider(f(l)?, &mut best);
            }
        }
        Ok(best)
    };
    let out = match mode {
        BaselineMode::Nominal => min_gamma_at(a, b, perf, None, None, 1.0, 1.0)?,
        BaselineMode::Robust(d0) => best_1d(&|l| min_gamma_at(a, b, perf, None, Some(d0), 1.0, l))?,
        BaselineMode::SchedulingOnly(d0) => best_1d(&|l| min_gamma_at(a, b, perf, Some(d0), None, l, 1.0))?,
        BaselineMode::PriorOnly(d0) => return min_gamma_scheduled(a, b, perf, d0, d0, &LambdaSearch::default()),
    };
    out.ok_or_else(fail)
}

/// Minimal ℓ₂ gain of the gain-scheduling design with both channels at fixed
/// R_s⁻¹ and R_u⁻¹, minimized over the multiplier search.
pub fn min_gamma_scheduled(a: &Mat, b: &Mat, perf: &PerformanceIndex, rs_inv: &Mat, ru_inv: &Mat, search: &LambdaSearch) -> Result<Baseline> {
    search
        .run(|ls, lu| min_gamma_at(a, b, perf, Some(rs_inv), Some(ru_inv), ls, lu), |c| c.gamma)?
        .ok_or_else(|| Error::Infeasible("not stabilizable with gamma below 1e6".into()))
}

/// Two-dimensional multiplier search: full grid, then coordinate refinement.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LambdaSearch {
    pub lambda_s: Vec<f64>,
    pub lambda_u: Vec<f64>,
    pub refine_points: usize,
}

impl Default for LambdaSearch {
    fn default() -> Self {
        Self { lambda_s: log_grid(1e-3, 1e3, 13), lambda_u: log_grid(1e-3, 1e3, 13), refine_points: 5 }
    }
}

impl LambdaSearch {
    /// Minimizes `key` over the grid; ties keep the lexicographically first point.
    pub fn run<T, F, K>(&self, mut f: F, key: K) -> Result<Option<T>>
    where
        F: FnMut(f64, f64) -> Result<Option<T>>,
        K: Fn(&T) -> f64,
    {
        let mut best: Option<(T, usize, usize)> = None;
        for (i, &ls) in self.lambda_s.iter().enumerate() {
            for (j, &lu) in self.lambda_u.iter().enumerate() {
                if let Some(c) = f(ls, lu)? {
                    if best.as_ref().map_or(true, |(b, _, _)| key(&c) < key(b)) {
                        best = Some((c, i, j));
                    }
                }
            }
        }
        let Some((mut b, i, j)) = best else { return Ok(None) };
        if self.refine_points > 0 {
            let around = |g: &[f64], k: usize| {
                let lo = g[k.saturating_sub(1)];
                let hi = g[(k + 1).min(g.len() - 1)];
                log_grid(lo, hi, self.refine_points + 2)
            };
            let ls0 = self.lambda_s[i];
            let mut lu0 = self.lambda_u[j];
            for lu in around(&self.lambda_u, j) {
                if let Some(c) = f(ls0, lu)? {
                    if key(&c) < key(&b) {
                        b = c;
                        lu0 = lu;
                    }
                }
            }
            for ls in around(&self.lambda_s, i) {
                if let Some(c) = f(ls, lu0)? {
                    if key(&c) < key(&b) {
                        b = c;
                    }
                }
            }
        }
        Ok(Some(b))
    }
}

/// Line-search grids of the dual problem.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualOptions {
    pub eps_grid: Vec<f64>,
    pub eps_start: f64,
    pub lambdas: LambdaSearch,
    /// Extra (ε, λ_s, λ_u) points evaluated after the staged search, e.g. the
    /// optima of neighbouring γ_p values in a sweep.
    pub hints: Vec<[f64; 3]>,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self {
            eps_grid: (1..=9).map(|i| i as f64 / 10.0).collect(),
            eps_start: 0.5,
            lambdas: LambdaSearch::default(),
            hints: Vec::new(),
        }
    }
}

/// Joint exploration plan and controller.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualSolution {
    pub plan: ExplorationPlan,
    pub controller: GainScheduledController,
    pub eps: f64,
    pub tau: f64,
    pub certificate: f64,
    pub solves: usize,
}

struct DualCandidate {
    sol: DualSolution,
}

#[allow(clippy::too_many_arguments)]
fn dual_at(
    prior: &GaussianPrior,
    grid: &FrequencyGrid,
    constants: &BoundConstants,
    sigma_w: f64,
    perf: &PerformanceIndex,
    eps: f64,
    ls: f64,
    lu: f64,
) -> Result<Option<DualCandidate>> {
    let n = prior.n_phi();
    let n_x = prior.n_x;
    let (a0, b0) = prior.ab();
    let mut c = constants.clone();
    c.eps = eps;
    let data = ExplorationData::new(prior, grid, &c, sigma_w)?;
    let d0n = max_abs(&prior.d0);
    let s2 = Candidate::Scaled.amplitudes(&data, 10.0 * d0n)[0].powi(2);
    let mut p = Problem::new();
    let pv: Vec<usize> = (0..n).map(|i| p.scalar(&format!("p{i}"), s2)).collect();
    let t = p.scalar("t", s2 * n as f64);
    let tau = p.scalar("tau", 10.0 * d0n + data.n0);
    let dbar = p.symmetric("Dbar", n, 10.0 * d0n);
    let v = GsVars::new(&mut p, n_x);
    let q: Vec<AffMat> = pv.iter().map(|&x| AffMat::var(x)).collect();
    p.psd("exploration", data.robust_block(&q, &dbar, &AffMat::var(tau)), 0.0);
    p.psd("goal psd", dbar.clone(), 0.0);
    let mut energy = AffMat::var(t);
    for qi in &q {
        p.nonneg("power", qi.clone());
        energy = energy.sub(qi);
    }
    p.nonneg("energy", energy);
    p.nonneg("tau", AffMat::var(tau));
    let blocks = PerfBlocks::fixed(perf)?;
    let ch = Channels {
        rs_inv: Some(prior.d0.clone()),
        ru_inv: Some(dbar.add_const(&prior.d0)),
        lambda_s: ls,
        lambda_u: lu,
    };
    p.nsd("gain scheduling", gain_scheduling_lmi(&a0, &b0, &blocks, &ch, &v), strict_margin());
    p.minimize(t, 1.0);
    let s = p.solve()?;
    if s.status != Status::Optimal {
        return Ok(None);
    }
    let powers: Vec<f64> = pv.iter().map(|&x| s.x[x].max(0.0)).collect();
    let amps: Vec<f64> = powers.iter().map(|v| v.sqrt()).collect();
    let dbar_v = sym(&dbar.eval(&s.x));
    let ge = s.x[t].max(0.0).sqrt().max(amps.iter().map(|v| v * v).sum::<f64>().sqrt());
    let (nm, m, k_s) = v.values(&s.x);
    let certificate = data.certificate(&powers, &dbar_v, s.x[tau]);
    Ok(Some(DualCandidate {
        sol: DualSolution {
            plan: ExplorationPlan { grid: grid.clone(), amplitudes: amps, gamma_e: ge, dbar_t: dbar_v },
            controller: GainScheduledController { k_s, m, n: nm, lambda_s: ls, lambda_u: lu, gamma_p: perf.gamma().unwrap_or(f64::NAN) },
            eps,
            tau: s.x[tau],
            certificate,
            solves: 0,
        },
    }))
}

/// Feasibility of the gain-scheduling LMI with D̄_T = 0 at fixed multipliers.
fn no_exploration_at(a0: &Mat, b0: &Mat, d0: &Mat, perf: &PerformanceIndex, ls: f64, lu: f64) -> Result<Option<GainScheduledController>> {
    let mut p = Problem::new();
    let v = GsVars::new(&mut p, a0.nrows());
    let slack = p.scalar("slack", 1.0);
    let blocks = PerfBlocks::fixed(perf)?;
    let ch = Channels { rs_inv: Some(d0.clone()), ru_inv: Some(AffMat::constant(d0.clone())), lambda_s: ls, lambda_u: lu };
    let lmi = gain_scheduling_lmi(a0, b0, &blocks, &ch, &v);
    let dim = lmi.rows;
    p.nsd("gain scheduling", lmi.add(&AffMat::var(slack).scalar_times(&Mat::identity(dim, dim))), strict_margin());
    p.nonneg("slack", AffMat::var(slack));
    p.nonneg("slack cap", AffMat::var(slack).scale(-1.0).add_const(&Mat::from_element(1, 1, 1.0)));
    p.minimize(slack, -1.0);
    let s = p.solve()?;
    if s.status != Status::Optimal {
        return Ok(None);
    }
    let (n, m, k_s) = v.values(&s.x);
    Ok(Some(GainScheduledController { k_s, m, n, lambda_s: ls, lambda_u: lu, gamma_p: perf.gamma().unwrap_or(f64::NAN) }))
}

/// Minimizes exploration energy subject to the performance requirement.
///
/// If the gain-scheduling LMI is feasible with D̄_T = 0 no exploration is
/// needed. Otherwise the lifted problem (line powers p_i = a_i², energy
/// Σ p_i ≤ γ_e²) is solved over the multiplier grid at the starting ε with
/// one refinement level, then along the ε grid at the best multipliers, then
/// at the hint points. The best point by γ_e wins; ties keep the earlier one.
pub fn solve_dual_problem(
    prior: &GaussianPrior,
    grid: &FrequencyGrid,
    constants: &BoundConstants,
    sigma_w: f64,
    perf: &PerformanceIndex,
    opts: &DualOptions,
) -> Result<DualSolution> {
    let (a0, b0) = prior.ab();
    if constants.gamma_v1 >= 0.5 {
        return Err(Error::UncertaintyTooLarge(constants.gamma_v1));
    }
    let mut solves = 0usize;
    if let Some(ctrl) = first_feasible(&opts.lambdas, |ls, lu| no_exploration_at(&a0, &b0, &prior.d0, perf, ls, lu), &mut solves)? {
        let n = prior.n_phi();
        let mut plan = ExplorationPlan::zero(grid.clone());
        plan.dbar_t = Mat::zeros(n, n);
        return Ok(DualSolution { plan, controller: ctrl, eps: opts.eps_start, tau: 0.0, certificate: 0.0, solves });
    }
    let lam = opts.lambdas.run(
        |ls, lu| {
            solves += 1;
            Ok(dual_at(prior, grid, constants, sigma_w, perf, opts.eps_start, ls, lu)?.map(|c| c.sol))
        },
        |s: &DualSolution| s.plan.gamma_e,
    )?;
    let mut best = lam;
    if let Some((ls, lu)) = best.as_ref().map(|f| (f.controller.lambda_s, f.controller.lambda_u)) {
        for &eps in &opts.eps_grid {
            if (eps - opts.eps_start).abs() < 1e-12 {
                continue;
            }
            solves += 1;
            if let Some(c) = dual_at(prior, grid, constants, sigma_w, perf, eps, ls, lu)? {
                if best.as_ref().map_or(true, |b| c.sol.plan.gamma_e < b.plan.gamma_e) {
                    best = Some(c.sol);
                }
            }
        }
    }
    if let Some(h) = hinted(prior, grid, constants, sigma_w, perf, opts, &mut solves)? {
        if best.as_ref().map_or(true, |b| h.plan.gamma_e < b.plan.gamma_e) {
            best = Some(h);
        }
    }
    let Some(mut out) = best else { return Err(Error::Unreachable) };
    out.solves = solves;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn hinted(
    prior: &GaussianPrior,
    grid: &FrequencyGrid,
    constants: &BoundConstants,
    sigma_w: f64,
    perf: &PerformanceIndex,
    opts: &DualOptions,
    solves: &mut usize,
) -> Result<Option<DualSolution>> {
    let mut best: Option<DualSolution> = None;
    for h in &opts.hints {
        *solves += 1;
        if let Some(c) = dual_at(prior, grid, constants, sigma_w, perf, h[0], h[1], h[2])? {
            if best.as_ref().map_or(true, |b| c.sol.plan.gamma_e < b.plan.gamma_e) {
                best = Some(c.sol);
            }
        }
    }
    Ok(best)
}

fn first_feasible<T, F>(search: &LambdaSearch, mut f: F, solves: &mut usize) -> Result<Option<T>>
where
    F: FnMut(f64, f64) -> Result<Option<T>>,
{
    for &ls in &search.lambda_s {
        for &lu in &search.lambda_u {
            *solves += 1;
            if let Some(t) = f(ls, lu)? {
                return Ok(Some(t));
            }
        }
    }
    Ok(None)
}

/// Spectral-norm helper for reporting.
pub fn controller_gain_norm(k: &Mat) -> f64 {
    Vector::from_column_slice(k.as_slice()).norm()
}
