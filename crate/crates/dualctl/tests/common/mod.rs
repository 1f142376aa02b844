//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use dualctl::bounds::{compute_constants, ConstantsOptions, Method};
use dualctl::estimation::{map_estimate, project_parameters, Dataset, GaussianPrior, UncertaintyEllipsoid};
use dualctl::linalg::{max_abs, max_eig, min_eig, norm2, spd_inverse, sym, CMat, Mat, Vector};
use dualctl::model::{simulate, PerformanceIndex, SystemModel};
use dualctl::sdp::{AffMat, Problem, Status};
use dualctl::seeds;
use dualctl::spectral::FrequencyGrid;
use dualctl::synthesis::{
    energy_bound_lmi, gain_scheduling_expanded, gain_scheduling_lmi, min_gamma_scheduled, Channels, ExplorationData, GsVars, LambdaSearch,
    PerfBlocks,
};
use nalgebra::Complex;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Check = Result<String, String>;

pub fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> Mat {
    let g = randn(rng, n, n);
    &g * g.transpose() + Mat::identity(n, n) * floor
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn scalar(v: f64) -> AffMat {
    AffMat::constant(Mat::from_element(1, 1, v))
}

/// Small well-conditioned test prior: the chained plant with n_x = 2.
pub fn small_prior(d0_scale: f64) -> GaussianPrior {
    let s = SystemModel::chained(2, 0.49, 1.0);
    GaussianPrior::from_d0(&s.a, &s.b, Mat::identity(3, 3) * d0_scale, 0.01).unwrap()
}

pub fn small_grid() -> FrequencyGrid {
    FrequencyGrid::from_omegas(100, &[0.0, 0.2, 0.4]).unwrap()
}

/// ‖a‖ ≤ γ_e against the energy LMI, by eigenvalues and by solving for the minimal γ_e.
pub fn energy_lmi_oracle(instances: usize, seed: u64) -> Check {
    let mut rng = seeds::rng(seed);
    let mut feasible = 0;
    for i in 0..instances {
        let n = 1 + i % 6;
        let a: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * log_uniform(&mut rng, 1e-2, 1e3)).collect();
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ratio = 0.5 + rng.gen::<f64>();
        if (ratio - 1.0).abs() < 1e-6 {
            continue;
        }
        let g = norm * ratio;
        let amps: Vec<AffMat> = a.iter().map(|&v| scalar(v)).collect();
        let m = energy_bound_lmi(&scalar(g), &amps).eval(&[]);
        let lmi_ok = min_eig(&m) >= 0.0;
        let direct = a.iter().map(|v| v * v).sum::<f64>() <= g * g;
        if lmi_ok != direct {
            return Err(format!("instance {i}: LMI says {lmi_ok}, norm test says {direct}"));
        }
        feasible += direct as usize;
        let mut p = Problem::new();
        let gv = p.scalar("gamma_e", norm.max(1e-3));
        p.psd("energy", energy_bound_lmi(&AffMat::var(gv), &amps), 0.0);
        p.minimize(gv, 1.0);
        let s = p.solve().map_err(|e| e.to_string())?;
        if s.status != Status::Optimal || (s.x[gv] - norm).abs() > 1e-6 * norm.max(1.0) {
            return Err(format!("instance {i}: minimal gamma_e {} vs norm {norm}", s.x[gv]));
        }
    }
    Ok(format!("{instances} instances, {feasible} feasible"))
}

/// Dense normal equations in θ-space built from Kronecker products.
pub fn dense_map(prior: &GaussianPrior, data: &Dataset, sigma_w: f64) -> Vector {
    let n_x = prior.n_x;
    let d = n_x * prior.n_phi();
    let eye = Mat::identity(n_x, n_x);
    let mut h = prior.dtilde0.kronecker(&eye);
    let mut r = &h * &prior.theta_prior;
    let s2 = sigma_w * sigma_w;
    for (phi, x) in data.phi.iter().zip(&data.next) {
        let reg = phi.transpose().kronecker(&eye);
        h += reg.transpose() * &reg / s2;
        r += reg.transpose() * x / s2;
    }
    assert_eq!(h.nrows(), d);
    h.lu().solve(&r).expect("dense normal equations")
}

/// MAP estimate against the dense normal equations on simulated data.
pub fn map_oracle(instances: usize, seed: u64) -> Check {
    let mut rng = seeds::rng(seed);
    let mut worst = 0.0_f64;
    for i in 0..instances {
        let n_x = 1 + i % 4;
        let sys = SystemModel::chained(n_x, 0.3 + 0.4 * rng.gen::<f64>(), 0.5 + rng.gen::<f64>());
        let a_hat = &sys.a + randn(&mut rng, n_x, n_x) * 0.05;
        let b_hat = &sys.b + randn(&mut rng, n_x, 1) * 0.05;
        let prior = GaussianPrior::new(&a_hat, &b_hat, random_spd(&mut rng, n_x + 1, 0.5), 0.05).unwrap();
        let u: Vec<f64> = (0..40).map(|_| rng.sample(StandardNormal)).collect();
        let tr = simulate(&sys, &u, &Vector::zeros(n_x), rng.gen()).unwrap();
        let data = Dataset::from_trajectory(&tr);
        let est = map_estimate(&prior, &data, sys.sigma_w).map_err(|e| e.to_string())?;
        let oracle = dense_map(&prior, &data, sys.sigma_w);
        let rel = (&est.theta_hat - &oracle).norm() / oracle.norm().max(1e-300);
        worst = worst.max(rel);
        if rel > 1e-8 {
            return Err(format!("instance {i}: relative error {rel:e}"));
        }
    }
    Ok(format!("{instances} instances, worst relative error {worst:.1e}"))
}

/// Minimizer of the metric distance to θ̂ over the boundary of a 2-D ellipsoid by
/// angle grid and golden-section refinement (n_x = 1).
pub fn grid_projection(theta_hat: &Vector, center: &Vector, shape: &Mat, metric: &Mat) -> Vector {
    let l = shape.clone().cholesky().unwrap().l();
    let l_inv = l.try_inverse().unwrap();
    let point = |t: f64| -> Vector {
        let u = nalgebra::RowVector2::new(t.cos(), t.sin());
        let d = u * &l_inv;
        center + Vector::from_column_slice(d.as_slice())
    };
    let f = |t: f64| {
        let e = point(t) - theta_hat;
        (e.transpose() * metric * &e)[(0, 0)]
    };
    let n = 20_000;
    let step = std::f64::consts::TAU / n as f64;
    let best = (0..n).map(|i| i as f64 * step).min_by(|a, b| f(*a).partial_cmp(&f(*b)).unwrap()).unwrap();
    let (mut a, mut b) = (best - step, best + step);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    point(0.5 * (a + b))
}

/// Projection against the grid oracle for scalar plants (θ ∈ R²).
pub fn projection_oracle(instances: usize, seed: u64) -> Check {
    let mut rng = seeds::rng(seed);
    let mut worst = 0.0_f64;
    for i in 0..instances {
        let shape = random_spd(&mut rng, 2, 0.2);
        let metric = random_spd(&mut rng, 2, 0.2);
        let center = Vector::from_fn(2, |_, _| rng.sample(StandardNormal));
        let dir = Vector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let theta0 = UncertaintyEllipsoid { center: center.clone(), shape: shape.clone(), prob: 0.99, n_x: 1 };
        let mut theta_hat = &center + &dir;
        while theta0.quad_form(&theta_hat) <= 1.5 {
            theta_hat = &center + (&theta_hat - &center) * 2.0;
        }
        let p = project_parameters(&theta_hat, &theta0, &metric).map_err(|e| e.to_string())?;
        let o = grid_projection(&theta_hat, &center, &shape, &metric);
        let err = (&p - &o).norm() / (&theta_hat - &center).norm().max(1.0);
        worst = worst.max(err);
        if err > 1e-6 {
            return Err(format!("instance {i}: projection {p:?} vs oracle {o:?}"));
        }
    }
    Ok(format!("{instances} instances, worst error {worst:.1e}"))
}

/// Perturbation of a matrix at relative size `s`.
fn perturb(rng: &mut ChaCha8Rng, m: &Mat, s: f64, symmetric: bool) -> Mat {
    let mut r = randn(rng, m.nrows(), m.ncols());
    if symmetric {
        r = sym(&r);
    }
    let scale = max_abs(m).max(1e-3) * s / max_abs(&r).max(1e-300);
    m + r * scale
}

/// Gain-scheduling LMI against the expanded dissipation inequality around a solved design.
pub fn gain_scheduling_round_trip(points: usize, seed: u64) -> Check {
    let prior = small_prior(50.0);
    let (a0, b0) = prior.ab();
    let d0 = prior.d0.clone();
    let base_perf = PerformanceIndex::default_channel(2, 10.0);
    let search = LambdaSearch { lambda_s: vec![0.1, 1.0, 10.0], lambda_u: vec![0.1, 1.0, 10.0], refine_points: 0 };
    let base = min_gamma_scheduled(&a0, &b0, &base_perf, &d0, &d0, &search).map_err(|e| e.to_string())?;
    let c = &base.controller;
    let mut rng = seeds::rng(seed);
    let (mut yes, mut no, mut skipped) = (0, 0, 0);
    for i in 0..points {
        let s = log_uniform(&mut rng, 1e-4, 2.0);
        let n = perturb(&mut rng, &c.n, s, true);
        let m = perturb(&mut rng, &c.m, s, false);
        let k_s = perturb(&mut rng, &c.k_s, s, false);
        let gamma = base.gamma * (0.8 + 0.6 * rng.gen::<f64>());
        let perf = PerformanceIndex::default_channel(2, gamma);
        let blocks = PerfBlocks::fixed(&perf).map_err(|e| e.to_string())?;
        let ch = Channels { rs_inv: Some(d0.clone()), ru_inv: Some(AffMat::constant(d0.clone())), lambda_s: c.lambda_s, lambda_u: c.lambda_u };
        let v = GsVars { n: AffMat::constant(n.clone()), m: AffMat::constant(m.clone()), k_s: AffMat::constant(k_s.clone()) };
        let l = gain_scheduling_lmi(&a0, &b0, &blocks, &ch, &v).eval(&[]);
        let lmax = max_eig(&l) / max_abs(&l);
        let (emax, escale) = if min_eig(&n) > 0.0 {
            let e = gain_scheduling_expanded(&a0, &b0, &perf, Some(&d0), Some(&d0), c.lambda_s, c.lambda_u, &n, &m, &k_s)
                .map_err(|e| e.to_string())?;
            (max_eig(&e), max_abs(&e))
        } else {
            (f64::INFINITY, 1.0)
        };
        if lmax.abs() < 1e-9 || (emax / escale).abs() < 1e-9 {
            skipped += 1;
            continue;
        }
        if (lmax < 0.0) != (emax < 0.0) {
            return Err(format!("point {i}: LMI max eig {lmax:e}, expanded max eig {emax:e}"));
        }
        if lmax < 0.0 {
            yes += 1;
        } else {
            no += 1;
        }
    }
    if yes == 0 || no == 0 {
        return Err(format!("degenerate sample: {yes} feasible, {no} infeasible"));
    }
    Ok(format!("{yes} feasible, {no} infeasible, {skipped} on the boundary"))
}

/// Exploration data of the small test prior.
pub fn small_exploration_data() -> (GaussianPrior, ExplorationData) {
    let prior = small_prior(1e3);
    let grid = small_grid();
    let c = compute_constants(&prior, &grid, 1.0, ConstantsOptions { eps: 0.5, beta: 1e-10, method: Method::Scenario }, 11).unwrap();
    let data = ExplorationData::new(&prior, &grid, &c, 1.0).unwrap();
    (prior, data)
}

/// Robust block rebuilt from the line map, k·B diag(p, p) Bᵀ − diag(top, −τI).
pub fn robust_block_oracle(data: &ExplorationData, p: &[f64], dbar: &Mat, tau: f64) -> Mat {
    let n = data.n;
    let vc: &CMat = &data.line_map;
    let re = vc.map(|z| z.re);
    let im = vc.map(|z| z.im);
    let mut b = Mat::zeros(3 * n, 2 * n);
    b.view_mut((0, 0), (n, n)).copy_from(&re);
    b.view_mut((0, n), (n, n)).copy_from(&im);
    b.view_mut((n, 0), (n, n)).copy_from(&re);
    b.view_mut((n, n), (n, n)).copy_from(&im);
    b.view_mut((2 * n, 0), (n, n)).copy_from(&im);
    b.view_mut((2 * n, n), (n, n)).copy_from(&(-&re));
    let mut pp = Vector::zeros(2 * n);
    for i in 0..n {
        pp[i] = p[i];
        pp[n + i] = p[i];
    }
    let mut z = &b * Mat::from_diagonal(&pp) * b.transpose() * data.k;
    let top = dbar + Mat::identity(n, n) * (data.n0 + tau * data.gamma_v1 * data.gamma_v1);
    let mut tl = z.view((0, 0), (n, n)).into_owned();
    tl -= top;
    z.view_mut((0, 0), (n, n)).copy_from(&tl);
    for i in n..3 * n {
        z[(i, i)] += tau;
    }
    z
}

/// Random complex matrix of spectral norm `r`.
pub fn complex_ball(rng: &mut ChaCha8Rng, n: usize, r: f64) -> CMat {
    let e = CMat::from_fn(n, n, |_, _| Complex::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let s = e.clone().singular_values().max();
    e * Complex::new(r / s, 0.0)
}

/// Exploration LMI: assembly against the line-map construction, PSD sign
/// against its Schur complement, and soundness of the S-lemma certificate for
/// sampled line-map perturbations.
pub fn exploration_round_trip(points: usize, seed: u64) -> Check {
    let (_, data) = small_exploration_data();
    let n = data.n;
    let mut rng = seeds::rng(seed);
    let (mut yes, mut no, mut skipped) = (0, 0, 0);
    for i in 0..points {
        let p: Vec<f64> = (0..n).map(|_| log_uniform(&mut rng, 1.0, 1e6)).collect();
        let nominal = data.nominal_bound(&p);
        let g = random_spd(&mut rng, n, 0.0);
        let dbar = &g / max_eig(&g) * max_eig(&nominal).max(1.0) * log_uniform(&mut rng, 1e-4, 0.3);
        let lift = {
            let mut s = Mat::zeros(2 * n, 2 * n);
            for (j, g) in data.basis.iter().enumerate() {
                s += g.view((n, n), (2 * n, 2 * n)) * p[j];
            }
            max_eig(&s) * data.k
        };
        let tau = lift * log_uniform(&mut rng, 1e-3, 1e1);
        let q: Vec<AffMat> = p.iter().map(|&v| scalar(v)).collect();
        let z = data.robust_block(&q, &AffMat::constant(dbar.clone()), &scalar(tau)).eval(&[]);
        let zo = robust_block_oracle(&data, &p, &dbar, tau);
        if max_abs(&(&z - &zo)) > 1e-9 * max_abs(&zo) {
            return Err(format!("point {i}: assembly differs by {:e}", max_abs(&(&z - &zo))));
        }
        let z11 = z.view((0, 0), (n, n)).into_owned();
        let z12 = z.view((0, n), (n, 2 * n)).into_owned();
        let z22 = z.view((n, n), (2 * n, 2 * n)).into_owned();
        let schur = &z11 - &z12 * spd_inverse(&z22, "Z22").map_err(|e| e.to_string())? * z12.transpose();
        let zm = min_eig(&z) / max_abs(&z);
        let sm = min_eig(&schur) / max_abs(&z);
        if zm.abs() < 1e-10 || sm.abs() < 1e-10 {
            skipped += 1;
            continue;
        }
        if (zm >= 0.0) != (sm >= 0.0) {
            return Err(format!("point {i}: block min eig {zm:e}, Schur complement min eig {sm:e}"));
        }
        if zm >= 0.0 {
            yes += 1;
            let pd = Mat::from_diagonal(&Vector::from_column_slice(&p));
            for _ in 0..20 {
                let e = complex_ball(&mut rng, n, data.gamma_v1);
                let v = (CMat::identity(n, n) + e) * &data.line_map;
                let m = (&v * pd.map(|x| Complex::new(x, 0.0)) * v.adjoint()).map(|z| z.re);
                let bound = m * data.k - Mat::identity(n, n) * data.n0 - &dbar;
                if min_eig(&bound) < -1e-8 * max_abs(&z) {
                    return Err(format!("point {i}: certified bound violated by {:e}", min_eig(&bound)));
                }
            }
        } else {
            no += 1;
        }
    }
    if yes == 0 || no == 0 {
        return Err(format!("degenerate sample: {yes} feasible, {no} infeasible"));
    }
    Ok(format!("{yes} feasible, {no} infeasible, {skipped} on the boundary"))
}

/// Scalar closed-loop H∞ norm by a dense frequency sweep.
pub fn scalar_sweep_hinf(a: f64, b: f64, k: f64) -> f64 {
    let p = a + b * k;
    if p.abs() >= 1.0 {
        return f64::INFINITY;
    }
    let n = 4000;
    (0..=n)
        .map(|i| {
            let w = std::f64::consts::PI * i as f64 / n as f64;
            let d = Complex::new(w.cos() - p, w.sin()).norm();
            (1.0 + k * k).sqrt() / d
        })
        .fold(0.0, f64::max)
}

/// Minimal closed-loop H∞ norm over static gains by gain grid and golden section.
pub fn scalar_hinf_optimum(a: f64, b: f64) -> f64 {
    let lo = (-1.0 - a) / b;
    let hi = (1.0 - a) / b;
    let (lo, hi) = (lo.min(hi), lo.max(hi));
    let n = 2000;
    let ks: Vec<f64> = (1..n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let best = ks.iter().cloned().min_by(|x, y| scalar_sweep_hinf(a, b, *x).partial_cmp(&scalar_sweep_hinf(a, b, *y)).unwrap()).unwrap();
    let step = (hi - lo) / n as f64;
    let (mut x, mut y) = (best - step, best + step);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let c = y - r * (y - x);
        let d = x + r * (y - x);
        if scalar_sweep_hinf(a, b, c) < scalar_sweep_hinf(a, b, d) {
            y = d;
        } else {
            x = c;
        }
    }
    scalar_sweep_hinf(a, b, 0.5 * (x + y))
}

/// Spectral norm helper re-exported for tests.
pub fn spectral_norm(m: &Mat) -> f64 {
    norm2(m)
}
