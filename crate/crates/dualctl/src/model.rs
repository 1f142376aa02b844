//! Discrete-time LTI plant, performance channel and trajectory simulation.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hinf;
use crate::linalg::{spectral_radius, Mat, Vector};
use crate::seeds;

/// Plant x⁺ = A x + B u + w with scalar input and w ~ N(0, σ_w² I).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    pub a: Mat,
    pub b: Mat,
    pub sigma_w: f64,
}

impl SystemModel {
    /// Validates dimensions and the noise level.
    pub fn new(a: Mat, b: Mat, sigma_w: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension("A must be square".into()));
        }
        if b.nrows() != a.nrows() || b.ncols() != 1 {
            return Err(Error::Dimension(format!(
                "B must be {}x1, got {}x{}",
                a.nrows(),
                b.nrows(),
                b.ncols()
            )));
        }
        if !(sigma_w >= 0.0) || !sigma_w.is_finite() {
            return Err(Error::InvalidArgument("sigma_w must be finite and nonnegative".into()));
        }
        Ok(Self { a, b, sigma_w })
    }

    /// State dimension.
    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    /// Regressor dimension n_x + 1.
    pub fn n_phi(&self) -> usize {
        self.a.nrows() + 1
    }

    /// The chained example plant: 0.49 on the diagonal and first superdiagonal, B = e_n.
    pub fn chained(n_x: usize, coupling: f64, sigma_w: f64) -> Self {
        let mut a = Mat::zeros(n_x, n_x);
        for i in 0..n_x {
            a[(i, i)] = coupling;
            if i + 1 < n_x {
                a[(i, i + 1)] = coupling;
            }
        }
        let mut b = Mat::zeros(n_x, 1);
        b[(n_x - 1, 0)] = 1.0;
        Self { a, b, sigma_w }
    }
}

/// Performance channel z = C x + D_u u + D_w w with quadratic index (Q_p, S_p, R_p).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerformanceIndex {
    pub c: Mat,
    pub d_u: Mat,
    pub d_w: Mat,
    pub q_p: Mat,
    pub s_p: Mat,
    pub r_p: Mat,
}

impl PerformanceIndex {
    /// ℓ₂-gain index: S_p = 0, R_p = I/γ, Q_p = −γ I.
    pub fn l2_gain(c: Mat, d_u: Mat, d_w: Mat, gamma: f64) -> Result<Self> {
        let n_z = c.nrows();
        let n_x = c.ncols();
        if d_u.nrows() != n_z || d_u.ncols() != 1 || d_w.nrows() != n_z || d_w.ncols() != n_x {
            return Err(Error::Dimension("performance channel blocks do not match C".into()));
        }
        if !(gamma > 0.0) {
            return Err(Error::InvalidArgument("gamma_p must be positive".into()));
        }
        Ok(Self {
            q_p: -Mat::identity(n_x, n_x) * gamma,
            s_p: Mat::zeros(n_x, n_z),
            r_p: Mat::identity(n_z, n_z) / gamma,
            c,
            d_u,
            d_w,
        })
    }

    /// Default channel z = [x; u] used for the example reproduction.
    pub fn default_channel(n_x: usize, gamma: f64) -> Self {
        let (c, d_u, d_w) = default_channel_blocks(n_x);
        Self::l2_gain(c, d_u, d_w, gamma).expect("consistent default channel")
    }

    /// Output dimension.
    pub fn n_z(&self) -> usize {
        self.c.nrows()
    }

    /// ℓ₂-gain level when the index has the ℓ₂ structure.
    pub fn gamma(&self) -> Option<f64> {
        let g = -self.q_p[(0, 0)];
        let n_x = self.q_p.nrows();
        let n_z = self.r_p.nrows();
        let l2 = (&self.q_p + Mat::identity(n_x, n_x) * g).abs().max() < 1e-12 * g.max(1.0)
            && self.s_p.abs().max() == 0.0
            && (&self.r_p - Mat::identity(n_z, n_z) / g).abs().max() < 1e-12 / g.min(1.0);
        l2.then_some(g)
    }
}

/// Blocks (C, D_u, D_w) of the default channel z = [x; u].
pub fn default_channel_blocks(n_x: usize) -> (Mat, Mat, Mat) {
    let mut c = Mat::zeros(n_x + 1, n_x);
    c.view_mut((0, 0), (n_x, n_x)).fill_with_identity();
    let mut d_u = Mat::zeros(n_x + 1, 1);
    d_u[(n_x, 0)] = 1.0;
    (c, d_u, Mat::zeros(n_x + 1, n_x))
}

/// Simulated trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub x: Vec<Vector>,
    pub u: Vec<f64>,
    pub w: Vec<Vector>,
}

impl Trajectory {
    /// Horizon T.
    pub fn len(&self) -> usize {
        self.u.len()
    }

    /// True when no input was applied.
    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Regressor φ_k = [x_k; u_k].
    pub fn phi(&self, k: usize) -> Vector {
        let n = self.x[k].len();
        let mut p = Vector::zeros(n + 1);
        p.rows_mut(0, n).copy_from(&self.x[k]);
        p[n] = self.u[k];
        p
    }

    /// Gram matrix Σ φ_k φ_kᵀ.
    pub fn gram(&self) -> Mat {
        let n = self.x[0].len() + 1;
        let mut g = Mat::zeros(n, n);
        for k in 0..self.len() {
            let p = self.phi(k);
            g.ger(1.0, &p, &p, 1.0);
        }
        g
    }
}

/// Simulates the plant under an input sequence with seeded Gaussian noise.
pub fn simulate(model: &SystemModel, inputs: &[f64], x0: &Vector, seed: u64) -> Result<Trajectory> {
    let n = model.n_x();
    if x0.len() != n {
        return Err(Error::Dimension(format!("x0 has length {}, expected {n}", x0.len())));
    }
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("input sequence is empty".into()));
    }
    let mut rng = seeds::rng(seed);
    let b = model.b.column(0);
    let mut x = Vec::with_capacity(inputs.len() + 1);
    let mut w = Vec::with_capacity(inputs.len());
    x.push(x0.clone());
    for &u in inputs {
        let wk = Vector::from_fn(n, |_, _| model.sigma_w * rng.sample::<f64, _>(StandardNormal));
        let next = &model.a * x.last().unwrap() + b * u + &wk;
        x.push(next);
        w.push(wk);
    }
    Ok(Trajectory { x, u: inputs.to_vec(), w })
}

/// Evaluates z = C x + D_u u + D_w w.
pub fn performance_output(perf: &PerformanceIndex, x: &Vector, u: f64, w: &Vector) -> Result<Vector> {
    if x.len() != perf.c.ncols() || w.len() != perf.d_w.ncols() {
        return Err(Error::Dimension("state or disturbance length does not match the channel".into()));
    }
    Ok(&perf.c * x + perf.d_u.column(0) * u + &perf.d_w * w)
}

/// Lower estimate of the closed-loop ℓ₂ gain from sampled disturbance sequences.
///
/// Candidates are an impulse per channel, seeded Gaussian sequences and
/// sinusoidal bursts aligned with the worst input direction on a frequency grid.
pub fn empirical_l2_gain(
    model: &SystemModel,
    k: &Mat,
    perf: &PerformanceIndex,
    horizon: usize,
    seed: u64,
) -> Result<f64> {
    let n = model.n_x();
    if k.nrows() != 1 || k.ncols() != n {
        return Err(Error::Dimension(format!("K must be 1x{n}")));
    }
    let acl = &model.a + &model.b * k;
    if spectral_radius(&acl) >= 1.0 {
        return Err(Error::NotSchur);
    }
    let ccl = &perf.c + &perf.d_u * k;
    let run = |ws: &[Vector]| -> f64 {
        let mut x = Vector::zeros(n);
        let (mut ez, mut ew) = (0.0, 0.0);
        for wk in ws {
            let z = &ccl * &x + &perf.d_w * wk;
            ez += z.norm_squared();
            ew += wk.norm_squared();
            x = &acl * &x + wk;
        }
        if ew > 0.0 {
            (ez / ew).sqrt()
        } else {
            0.0
        }
    };
    let mut best = 0.0_f64;
    for i in 0..n {
        let mut ws = vec![Vector::zeros(n); horizon.max(1)];
        ws[0][i] = 1.0;
        best = best.max(run(&ws));
    }
    let mut rng = seeds::rng(seed);
    for _ in 0..8 {
        let ws: Vec<Vector> =
            (0..horizon.max(1)).map(|_| Vector::from_fn(n, |_, _| rng.sample(StandardNormal))).collect();
        best = best.max(run(&ws));
    }
    let eye = Mat::identity(n, n);
    for j in 0..=32 {
        let om = std::f64::consts::PI * j as f64 / 32.0;
        let g = hinf::freq_response(&acl, &eye, &ccl, &perf.d_w, om)?;
        let svd = g.svd(false, true);
        let (imax, _) = svd.singular_values.argmax();
        let v = svd.v_t.as_ref().unwrap().row(imax).adjoint();
        let ws: Vec<Vector> = (0..horizon.max(1))
            .map(|t| {
                let ph = nalgebra::Complex::from_polar(1.0, om * t as f64);
                Vector::from_fn(n, |r, _| (v[r] * ph).re)
            })
            .collect();
        best = best.max(run(&ws));
    }
    Ok(best)
}
