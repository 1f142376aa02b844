//! Constants entering the exploration LMI: transfer-matrix error bounds,
//! the noise-line radius and the noise operator-norm bound, by LMI,
//! analytic and scenario routes.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::GaussianPrior;
use crate::linalg::{chol, cnorm2, norm2, spectral_radius, unvec, unvec_ab, CMat, Mat, Vector};
use crate::sdp::{line_search_log, AffMat, Problem, Status};
use crate::seeds;
use crate::spectral::{resolvent, transfer_matrices, FrequencyGrid};

/// How a constant was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lmi,
    Scenario,
    Analytic,
}

/// Scalars feeding the exploration LMI.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundConstants {
    pub gamma_v: f64,
    pub gamma_y: f64,
    pub gamma_v1: f64,
    pub l1: f64,
    pub l: f64,
    pub eps: f64,
    pub c_delta: f64,
    pub method_gamma_v1: Method,
    pub method_gamma_y: Method,
    pub method_l1: Method,
}

/// Scenario sampling parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub delta: f64,
    pub beta: f64,
    pub d: usize,
    pub n_s: usize,
}

impl ScenarioConfig {
    /// Config with the minimal admissible sample count.
    pub fn new(delta: f64, beta: f64, d: usize) -> Result<Self> {
        Ok(Self { delta, beta, d, n_s: scenario_sample_count(delta, beta, d)? })
    }
}

/// Radius σ_w/√T of a white-noise spectral line.
pub fn noise_line_radius(sigma_w: f64, t: usize) -> f64 {
    sigma_w / (t as f64).sqrt()
}

/// Aggregates a per-block bound g over n_φ blocks: g·√n_φ.
pub fn aggregate(g: f64, n_phi: usize) -> f64 {
    g * (n_phi as f64).sqrt()
}

/// ⌈(2/δ)(ln(1/β) + d)⌉.
pub fn scenario_sample_count(delta: f64, beta: f64, d: usize) -> Result<usize> {
    if !(delta > 0.0 && delta < 1.0 && beta > 0.0 && beta < 1.0) || d == 0 {
        return Err(Error::InvalidArgument("scenario parameters out of range".into()));
    }
    let v = 2.0 / delta * ((1.0 / beta).ln() + d as f64);
    Ok((v - 1e-9 * v).ceil() as usize)
}

/// Analytic operator-norm bound 2 C_w L_w (2√n_φ + t), t = √ln(2/δ).
pub fn l1_analytic(n_phi: usize, sigma_wbar: f64, delta: f64, c_w: f64, l_w: f64) -> f64 {
    let _ = sigma_wbar;
    let t = (2.0 / delta).ln().max(0.0).sqrt();
    2.0 * c_w * l_w * (2.0 * (n_phi as f64).sqrt() + t)
}

/// The ⌈(1−δ)N⌉-th smallest value (1-based) of a sample.
pub fn scenario_level(values: &mut [f64], delta: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = ((1.0 - delta) * values.len() as f64 - 1e-9).ceil() as usize;
    values[k.clamp(1, values.len()) - 1]
}

/// Operator norm of one n_x × n_φ Gaussian matrix with entry std σ̄.
pub fn gaussian_matrix_norm<R: Rng>(rng: &mut R, n_x: usize, n_phi: usize, sigma_wbar: f64) -> f64 {
    let m = Mat::from_fn(n_x, n_phi, |_, _| sigma_wbar * rng.sample::<f64, _>(StandardNormal));
    norm2(&m)
}

/// Scenario estimate of l₁ from N_s Gaussian n_x × n_φ matrices.
pub fn l1_scenario(n_x: usize, n_phi: usize, sigma_wbar: f64, delta: f64, beta: f64, seed: u64) -> Result<f64> {
    let n_s = scenario_sample_count(delta, beta, 1)?;
    let mut rng = seeds::rng(seed);
    let mut norms: Vec<f64> = (0..n_s).map(|_| gaussian_matrix_norm(&mut rng, n_x, n_phi, sigma_wbar)).collect();
    Ok(scenario_level(&mut norms, delta))
}

/// Parameter samples from the prior restricted to Θ₀ and to Schur-stable plants.
#[derive(Clone, Debug)]
pub struct PriorSamples {
    pub thetas: Vec<Vector>,
    pub outside: usize,
    pub unstable: usize,
    pub warnings: Vec<String>,
}

/// Draws `count` accepted samples θ ~ N(θ̂_prior, (D̃₀)⁻¹ ⊗ I).
pub fn sample_prior(prior: &GaussianPrior, count: usize, seed: u64) -> Result<PriorSamples> {
    let n_x = prior.n_x;
    let n = prior.n_phi();
    let l = chol(&prior.dtilde0, "D̃0")?.l();
    let l_inv = l.try_inverse().ok_or_else(|| Error::Singular("prior factor".into()))?;
    let center = unvec(&prior.theta_prior, n_x);
    let theta0 = prior.theta0();
    let mut rng = seeds::rng(seed);
    let mut out = PriorSamples { thetas: Vec::with_capacity(count), outside: 0, unstable: 0, warnings: Vec::new() };
    let max_draws = 100 * count.max(1);
    let mut draws = 0;
    while out.thetas.len() < count {
        if draws >= max_draws {
            return Err(Error::InvalidArgument("prior sampling rejected almost every draw".into()));
        }
        draws += 1;
        let z = Mat::from_fn(n_x, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let th = &center + z * &l_inv;
        let theta = Vector::from_column_slice(th.as_slice());
        if !theta0.contains(&theta) {
            out.outside += 1;
            continue;
        }
        if spectral_radius(&th.columns(0, n_x).into_owned()) >= 1.0 {
            out.unstable += 1;
            continue;
        }
        out.thetas.push(theta);
    }
    let rejected = out.outside + out.unstable;
    if rejected * 2 > draws {
        out.warnings.push(format!("prior sampling rejected {rejected} of {draws} draws"));
    }
    if out.unstable > 0 {
        out.warnings.push(format!("{} unstable samples rejected", out.unstable));
    }
    Ok(out)
}

/// X = (V̂ᴴV̂)^{−1/2}.
pub fn x_matrix(vhat: &CMat) -> Result<CMat> {
    let g = vhat.adjoint() * vhat;
    let eig = g.symmetric_eigen();
    if eig.eigenvalues.min() <= 1e-14 * eig.eigenvalues.max() {
        return Err(Error::Singular("nominal transfer matrix is rank deficient".into()));
    }
    let d = eig.eigenvalues.map(|v| nalgebra::Complex::new(1.0 / v.sqrt(), 0.0));
    Ok(&eig.eigenvectors * CMat::from_diagonal(&d) * eig.eigenvectors.adjoint())
}

/// Per-sample quantities used by the scenario route.
#[derive(Clone, Copy, Debug)]
pub struct SampleBounds {
    pub v_err_x: f64,
    pub v_err: f64,
    pub resolvent: f64,
}

/// ‖(V(θ) − V̂)X‖, ‖V(θ) − V̂‖ and max_i ‖(z_i I − A)⁻¹‖ for one sample.
pub fn sample_bounds(theta: &Vector, n_x: usize, grid: &FrequencyGrid, vhat: &CMat, x: &CMat) -> Result<SampleBounds> {
    let (a, b) = unvec_ab(theta, n_x)?;
    let td = transfer_matrices(&a, &b, grid)?;
    let diff = &td.v - vhat;
    let mut res = 0.0_f64;
    for z in grid.points() {
        res = res.max(cnorm2(&resolvent(&a, z)?));
    }
    Ok(SampleBounds { v_err_x: cnorm2(&(&diff * x)), v_err: cnorm2(&diff), resolvent: res })
}

/// Scenario report for transfer-matrix constants.
#[derive(Clone, Debug)]
pub struct ScenarioReport {
    pub gamma_v1: f64,
    pub gamma_v: f64,
    pub gamma_y_bar: f64,
    pub gamma_y: f64,
    pub samples: usize,
    pub outside: usize,
    pub unstable: usize,
    pub warnings: Vec<String>,
}

/// Scenario estimates of γ_v1, γ_v and γ_y from N_s prior samples in Θ₀.
pub fn transfer_scenario(prior: &GaussianPrior, grid: &FrequencyGrid, delta: f64, beta: f64, seed: u64) -> Result<ScenarioReport> {
    let n_s = scenario_sample_count(delta, beta, 1)?;
    let (a0, b0) = prior.ab();
    let vhat = transfer_matrices(&a0, &b0, grid)?.v;
    let x = x_matrix(&vhat)?;
    let samples = sample_prior(prior, n_s, seed)?;
    let mut rep = ScenarioReport {
        gamma_v1: 0.0,
        gamma_v: 0.0,
        gamma_y_bar: 0.0,
        gamma_y: 0.0,
        samples: n_s,
        outside: samples.outside,
        unstable: samples.unstable,
        warnings: samples.warnings,
    };
    for th in &samples.thetas {
        let s = sample_bounds(th, prior.n_x, grid, &vhat, &x)?;
        rep.gamma_v1 = rep.gamma_v1.max(s.v_err_x);
        rep.gamma_v = rep.gamma_v.max(s.v_err);
        rep.gamma_y_bar = rep.gamma_y_bar.max(s.resolvent);
    }
    rep.gamma_y = aggregate(rep.gamma_y_bar, prior.n_phi());
    Ok(rep)
}

/// Scenario estimate of γ_v1 = max ‖Ṽ X‖.
pub fn gamma_v1_scenario(prior: &GaussianPrior, grid: &FrequencyGrid, delta: f64, beta: f64, seed: u64) -> Result<f64> {
    Ok(transfer_scenario(prior, grid, delta, beta, seed)?.gamma_v1)
}

fn bounded_real_margin(scale: f64) -> f64 {
    1e-8 * scale.max(1.0)
}

/// Minimal γ̄ for fixed λ in the Appendix A LMI, or `None` if infeasible.
fn gamma_v_bar_at(a0: &Mat, b0: &Mat, d0: &Mat, lambda: f64) -> Result<Option<f64>> {
    let n = a0.nrows();
    let n_phi = n + 1;
    let mut p = Problem::new();
    let nv = p.symmetric("N", 2 * n, 1.0);
    let g = p.scalar("gamma", 1.0);
    let mut a_aug = Mat::zeros(2 * n, 2 * n);
    a_aug.view_mut((0, 0), (n, n)).copy_from(a0);
    a_aug.view_mut((n, n), (n, n)).copy_from(a0);
    let mut b_w = Mat::zeros(2 * n, n);
    b_w.view_mut((n, 0), (n, n)).fill_with_identity();
    let mut b_u = Mat::zeros(2 * n, 1);
    b_u.view_mut((0, 0), (n, 1)).copy_from(b0);
    b_u.view_mut((n, 0), (n, 1)).copy_from(b0);
    let mut c_u = Mat::zeros(n_phi, 2 * n);
    c_u.view_mut((0, n), (n, n)).fill_with_identity();
    let mut d_uu = Mat::zeros(n_phi, 1);
    d_uu[(n, 0)] = 1.0;
    let mut c_z = Mat::zeros(n, 2 * n);
    c_z.view_mut((0, 0), (n, n)).fill_with_identity();
    c_z.view_mut((0, n), (n, n)).copy_from(&(-Mat::identity(n, n)));
    let gi = |k: usize| AffMat::var(g).scalar_times(&Mat::identity(k, k));
    let lower = vec![
        vec![Some(nv.scale(-1.0)), None, None, None, None, None],
        vec![None, Some(AffMat::constant(-Mat::identity(n, n) * lambda)), None, None, None, None],
        vec![None, None, Some(gi(1).scale(-1.0)), None, None, None],
        vec![
            Some(nv.lmul(&a_aug)),
            Some(AffMat::constant(b_w)),
            Some(AffMat::constant(b_u)),
            Some(nv.scale(-1.0)),
            None,
            None,
        ],
        vec![Some(nv.lmul(&c_u)), None, Some(AffMat::constant(d_uu)), None, Some(AffMat::constant(-d0 / lambda)), None],
        vec![Some(nv.lmul(&c_z)), None, None, None, None, Some(gi(n).scale(-1.0))],
    ];
    let lmi = AffMat::sym_blocks(&lower, &[2 * n, n, 1, 2 * n, n_phi, n]);
    p.nsd("bounded real (transfer error)", lmi, bounded_real_margin(1.0));
    p.minimize(g, 1.0);
    let s = p.solve()?;
    Ok((s.status == Status::Optimal).then(|| s.x[g]))
}

/// Appendix A bound: returns (γ̄_v, γ_v = γ̄_v √n_φ).
pub fn gamma_v_lmi(a0: &Mat, b0: &Mat, d0: &Mat, grid: &FrequencyGrid) -> Result<(f64, f64)> {
    let n_phi = a0.nrows() + 1;
    if grid.len() != n_phi {
        return Err(Error::Dimension("grid must have n_phi lines".into()));
    }
    match line_search_log(1e-4, 1e4, 25, 8, |lam| gamma_v_bar_at(a0, b0, d0, lam))? {
        Some((_, g)) if g < 1e6 => Ok((g, aggregate(g, n_phi))),
        _ => Err(Error::Infeasible("prior uncertainty too large / possibly unstable members".into())),
    }
}

fn gamma_y_bar_at(a0: &Mat, d0: &Mat, lambda: f64) -> Result<Option<f64>> {
    let n = a0.nrows();
    let n_phi = n + 1;
    let mut p = Problem::new();
    let nv = p.symmetric("N", n, 1.0);
    let g = p.scalar("gamma", 1.0);
    let mut c_u = Mat::zeros(n_phi, n);
    c_u.view_mut((0, 0), (n, n)).fill_with_identity();
    let gi = |k: usize| AffMat::var(g).scalar_times(&Mat::identity(k, k));
    let eye = Mat::identity(n, n);
    let lower = vec![
        vec![Some(nv.scale(-1.0)), None, None, None, None, None],
        vec![None, Some(AffMat::constant(-&eye * lambda)), None, None, None, None],
        vec![None, None, Some(gi(n).scale(-1.0)), None, None, None],
        vec![Some(nv.lmul(a0)), Some(AffMat::constant(eye.clone())), Some(AffMat::constant(eye.clone())), Some(nv.scale(-1.0)), None, None],
        vec![Some(nv.lmul(&c_u)), None, None, None, Some(AffMat::constant(-d0 / lambda)), None],
        vec![Some(nv.clone()), None, None, None, None, Some(gi(n).scale(-1.0))],
    ];
    let lmi = AffMat::sym_blocks(&lower, &[n, n, n, n, n_phi, n]);
    p.nsd("bounded real (resolvent)", lmi, bounded_real_margin(1.0));
    p.minimize(g, 1.0);
    let s = p.solve()?;
    Ok((s.status == Status::Optimal).then(|| s.x[g]))
}

/// Appendix B bound: returns (γ̄_y, γ_y = γ̄_y √n_φ).
pub fn gamma_y_lmi(a0: &Mat, d0: &Mat) -> Result<(f64, f64)> {
    let n_phi = a0.nrows() + 1;
    match line_search_log(1e-4, 1e4, 25, 8, |lam| gamma_y_bar_at(a0, d0, lam))? {
        Some((_, g)) if g < 1e6 => Ok((g, aggregate(g, n_phi))),
        _ => Err(Error::Infeasible("prior uncertainty too large / possibly unstable members".into())),
    }
}

/// Options for [`compute_constants`].
#[derive(Clone, Copy, Debug)]
pub struct ConstantsOptions {
    pub eps: f64,
    pub beta: f64,
    pub method: Method,
}

/// All exploration constants for a prior and grid.
///
/// The scenario route samples Θ₀ for γ_v1 and γ_y and Gaussian noise-line
/// matrices for l₁; the LMI route uses the Appendix A/B bounds with the
/// scenario l₁ (the analytic l₁ needs uncalibrated absolute constants).
pub fn compute_constants(
    prior: &GaussianPrior,
    grid: &FrequencyGrid,
    sigma_w: f64,
    opts: ConstantsOptions,
    seed: u64,
) -> Result<BoundConstants> {
    let n_x = prior.n_x;
    let n_phi = prior.n_phi();
    let delta = prior.delta;
    let sbar = noise_line_radius(sigma_w, grid.t);
    let l1 = l1_scenario(n_x, n_phi, sbar, delta, opts.beta, seeds::derive(seed, &[seeds::stage::SCENARIO_NOISE]))?;
    let (gamma_v, gamma_v1, gamma_y, m) = match opts.method {
        Method::Lmi => {
            let (a0, b0) = prior.ab();
            let (_, gv) = gamma_v_lmi(&a0, &b0, &prior.d0, grid)?;
            let (_, gy) = gamma_y_lmi(&a0, &prior.d0)?;
            let vhat = transfer_matrices(&a0, &b0, grid)?.v;
            let xn = cnorm2(&x_matrix(&vhat)?);
            (gv, gv * xn, gy, Method::Lmi)
        }
        _ => {
            let r = transfer_scenario(prior, grid, delta, opts.beta, seeds::derive(seed, &[seeds::stage::SCENARIO_PRIOR]))?;
            (aggregate(r.gamma_v, n_phi), r.gamma_v1, r.gamma_y, Method::Scenario)
        }
    };
    Ok(BoundConstants {
        gamma_v,
        gamma_y,
        gamma_v1,
        l1,
        l: gamma_y * l1,
        eps: opts.eps,
        c_delta: prior.c_delta,
        method_gamma_v1: m,
        method_gamma_y: m,
        method_l1: Method::Scenario,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_counts() {
        assert_eq!(scenario_sample_count(0.01, 1e-10, 1).unwrap(), 4806);
        assert_eq!(scenario_sample_count(0.5, (-1.0f64).exp(), 1).unwrap(), 8);
    }

    #[test]
    fn noise_radius() {
        assert_eq!(noise_line_radius(0.0, 10), 0.0);
        assert!((noise_line_radius(1.0, 100) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn level_of_constant_sample() {
        let mut v = vec![2.5; 40];
        assert_eq!(scenario_level(&mut v, 0.1), 2.5);
        assert_eq!(l1_scenario(3, 4, 0.0, 0.01, 1e-10, 1).unwrap(), 0.0);
    }

    #[test]
    fn analytic_limit() {
        let v = l1_analytic(5, 0.1, 2.0 - 1e-12, 1.0, 1.0);
        assert!((v - 4.0 * 5f64.sqrt()).abs() < 1e-5);
        assert!(l1_analytic(5, 0.1, 0.01, 1.0, 1.0) > l1_analytic(5, 0.1, 0.1, 1.0, 1.0));
    }
}
