//! Gaussian prior, MAP estimation, credibility ellipsoids and projection.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::linalg::{chol, condition, max_eig, min_eig, spd_inverse, sym, unvec, unvec_ab, vec_ab, Mat, Vector};
use crate::model::Trajectory;

/// Upper-tail critical value c with P(X > c) = δ for X ~ χ²_dof.
pub fn chi2_critical(dof: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta = {delta} outside (0, 1)")));
    }
    if dof == 0 {
        return Err(Error::InvalidArgument("dof must be positive".into()));
    }
    let k = dof as f64 / 2.0;
    let tail = |c: f64| gamma_ur(k, c / 2.0);
    let (mut lo, mut hi) = (0.0, dof as f64 + 10.0);
    while tail(hi) > delta {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Gaussian prior over θ = vec([A, B]) with Σ_prior⁻¹ = D̃₀ ⊗ I.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub theta_prior: Vector,
    pub dtilde0: Mat,
    pub delta: f64,
    pub c_delta: f64,
    pub d0: Mat,
    pub n_x: usize,
}

impl GaussianPrior {
    /// Builds the prior from its center and precision shape D̃₀.
    pub fn new(a_hat: &Mat, b_hat: &Mat, dtilde0: Mat, delta: f64) -> Result<Self> {
        let n_x = a_hat.nrows();
        if dtilde0.nrows() != n_x + 1 || !dtilde0.is_square() {
            return Err(Error::Dimension(format!("D̃0 must be {0}x{0}", n_x + 1)));
        }
        chol(&dtilde0, "D̃0")?;
        let c_delta = chi2_critical(n_x * (n_x + 1), delta)?;
        Ok(Self { theta_prior: vec_ab(a_hat, b_hat), d0: sym(&dtilde0) / c_delta, dtilde0: sym(&dtilde0), delta, c_delta, n_x })
    }

    /// Builds the prior from the credibility shape D₀ (D̃₀ = c_δ D₀).
    pub fn from_d0(a_hat: &Mat, b_hat: &Mat, d0: Mat, delta: f64) -> Result<Self> {
        let n_x = a_hat.nrows();
        let c = chi2_critical(n_x * (n_x + 1), delta)?;
        Self::new(a_hat, b_hat, d0 * c, delta)
    }

    /// Prior from a seed data set: least squares with D̃₀ = (1/σ_w²) Σ φφᵀ.
    pub fn from_seed_data(data: &Dataset, sigma_w: f64, delta: f64) -> Result<Self> {
        let n_x = data.n_x()?;
        let g = data.gram();
        if g.clone().rank(1e-10 * g.abs().max().max(1e-300)) < n_x + 1 {
            return Err(Error::Singular("seed data are rank deficient".into()));
        }
        let theta = data.cross() * spd_inverse(&g, "seed Gram")?;
        let a = theta.columns(0, n_x).into_owned();
        let b = theta.columns(n_x, 1).into_owned();
        Self::new(&a, &b, g / (sigma_w * sigma_w), delta)
    }

    /// Regressor dimension.
    pub fn n_phi(&self) -> usize {
        self.n_x + 1
    }

    /// Prior mean as (Â₀, B̂₀).
    pub fn ab(&self) -> (Mat, Mat) {
        unvec_ab(&self.theta_prior, self.n_x).expect("consistent prior")
    }

    /// Credibility ellipsoid Θ₀.
    pub fn theta0(&self) -> UncertaintyEllipsoid {
        UncertaintyEllipsoid { center: self.theta_prior.clone(), shape: self.d0.clone(), prob: 1.0 - self.delta, n_x: self.n_x }
    }
}

/// Ellipsoid {θ : (θ − c)ᵀ(D ⊗ I)(θ − c) ≤ 1}.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UncertaintyEllipsoid {
    pub center: Vector,
    pub shape: Mat,
    pub prob: f64,
    pub n_x: usize,
}

impl UncertaintyEllipsoid {
    /// Quadratic form (θ − c)ᵀ(D ⊗ I)(θ − c) = tr(Δ D Δᵀ).
    pub fn quad_form(&self, theta: &Vector) -> f64 {
        let d = unvec(&(theta - &self.center), self.n_x);
        (&d * &self.shape * d.transpose()).trace()
    }

    /// Membership test.
    pub fn contains(&self, theta: &Vector) -> bool {
        self.quad_form(theta) <= 1.0
    }

    /// Matrix form Δ D Δᵀ ⪯ I, implied by membership.
    pub fn matrix_bound_holds(&self, theta: &Vector) -> bool {
        let d = unvec(&(theta - &self.center), self.n_x);
        max_eig(&(&d * &self.shape * d.transpose())) <= 1.0 + 1e-12
    }
}

/// Regressors and successor states.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub phi: Vec<Vector>,
    pub next: Vec<Vector>,
}

impl Dataset {
    /// Collects (φ_k, x_{k+1}) from a trajectory.
    pub fn from_trajectory(tr: &Trajectory) -> Self {
        Self { phi: (0..tr.len()).map(|k| tr.phi(k)).collect(), next: tr.x[1..].to_vec() }
    }

    /// Horizon T.
    pub fn len(&self) -> usize {
        self.phi.len()
    }

    /// True for the empty data set.
    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    fn n_x(&self) -> Result<usize> {
        self.next.first().map(|x| x.len()).ok_or_else(|| Error::InvalidArgument("empty data set".into()))
    }

    /// Σ φ_k φ_kᵀ.
    pub fn gram(&self) -> Mat {
        let n = self.phi.first().map_or(0, |p| p.len());
        let mut g = Mat::zeros(n, n);
        for p in &self.phi {
            g.ger(1.0, p, p, 1.0);
        }
        g
    }

    /// Σ x_{k+1} φ_kᵀ.
    pub fn cross(&self) -> Mat {
        let n_x = self.next.first().map_or(0, |x| x.len());
        let n = self.phi.first().map_or(0, |p| p.len());
        let mut g = Mat::zeros(n_x, n);
        for (p, x) in self.phi.iter().zip(&self.next) {
            g.ger(1.0, x, p, 1.0);
        }
        g
    }
}

/// Output of [`map_estimate`].
#[derive(Clone, Debug)]
pub struct MapEstimate {
    pub theta_hat: Vector,
    pub d_t: Mat,
    pub d_post: Mat,
    pub condition: f64,
}

impl MapEstimate {
    /// Estimated (A, B).
    pub fn ab(&self, n_x: usize) -> (Mat, Mat) {
        unvec_ab(&self.theta_hat, n_x).expect("consistent estimate")
    }
}

/// MAP estimate of θ under the Gaussian prior and D_T = (1/(c_δ σ_w²)) Σ φφᵀ.
///
/// Minimizes (1/σ_w²) Σ ‖x_{k+1} − Θ φ_k‖² + tr((Θ − Θ₀) D̃₀ (Θ − Θ₀)ᵀ), whose
/// normal equations are Θ (Σφφᵀ/σ_w² + D̃₀) = Σ x_{k+1}φ_kᵀ/σ_w² + Θ₀ D̃₀.
pub fn map_estimate(prior: &GaussianPrior, data: &Dataset, sigma_w: f64) -> Result<MapEstimate> {
    if !(sigma_w > 0.0) {
        return Err(Error::InvalidArgument("sigma_w must be positive".into()));
    }
    let n = prior.n_phi();
    if data.phi.iter().any(|p| p.len() != n) || data.next.iter().any(|x| x.len() != prior.n_x) {
        return Err(Error::Dimension("data set does not match the prior".into()));
    }
    let s2 = sigma_w * sigma_w;
    let theta0 = unvec(&prior.theta_prior, prior.n_x);
    if data.is_empty() {
        return Ok(MapEstimate {
            theta_hat: prior.theta_prior.clone(),
            d_t: Mat::zeros(n, n),
            d_post: prior.d0.clone(),
            condition: condition(&prior.dtilde0),
        });
    }
    let g = data.gram();
    let h = &g / s2 + &prior.dtilde0;
    let rhs = data.cross() / s2 + &theta0 * &prior.dtilde0;
    let ch = chol(&h, "posterior precision")?;
    let theta = ch.solve(&rhs.transpose()).transpose();
    let d_t = g / (prior.c_delta * s2);
    Ok(MapEstimate {
        theta_hat: Vector::from_column_slice(theta.as_slice()),
        d_post: &prior.d0 + &d_t,
        d_t,
        condition: condition(&h),
    })
}

/// Credibility ellipsoid with center θ and shape D.
pub fn credibility_region(center: &Vector, d: &Mat, delta: f64, n_x: usize) -> UncertaintyEllipsoid {
    UncertaintyEllipsoid { center: center.clone(), shape: sym(d), prob: 1.0 - delta, n_x }
}

/// Projection of θ̂_T onto Θ₀ in the (D̄_post ⊗ I) metric.
///
/// With multiplier μ the stationary point is Θ(μ) = (Θ̂M + μ C D)(M + μD)⁻¹;
/// the constraint residual is decreasing in μ and is bracketed then bisected.
pub fn project_parameters(theta_hat: &Vector, theta0: &UncertaintyEllipsoid, metric: &Mat) -> Result<Vector> {
    if min_eig(&theta0.shape) <= 0.0 {
        return Err(Error::InvalidArgument("Θ0 shape must be positive definite".into()));
    }
    if theta0.quad_form(theta_hat) <= 1.0 {
        return Ok(theta_hat.clone());
    }
    let n_x = theta0.n_x;
    let m = sym(metric);
    let d = &theta0.shape;
    let c = unvec(&theta0.center, n_x);
    let e = unvec(theta_hat, n_x) - &c;
    let at = |mu: f64| -> Result<(Mat, f64)> {
        let k = (&m + d * mu).try_inverse().ok_or_else(|| Error::Singular("projection system".into()))?;
        let delta = &e * &m * k;
        let r = (&delta * d * delta.transpose()).trace() - 1.0;
        Ok((delta, r))
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let scale = max_eig(&m).max(1e-300) / min_eig(d);
    hi *= scale;
    while at(hi)?.1 > 0.0 {
        lo = hi;
        hi *= 4.0;
    }
    let mut best = at(hi)?.0;
    for _ in 0..300 {
        let mid = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * hi };
        let (delta, r) = at(mid)?;
        if r > 0.0 {
            lo = mid;
        } else {
            hi = mid;
            best = delta;
            if r > -1e-10 {
                break;
            }
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let theta = c + best;
    Ok(Vector::from_column_slice(theta.as_slice()))
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi2_closed_forms() {
        assert!((chi2_critical(2, (-1.0f64).exp()).unwrap() - 2.0).abs() < 1e-10);
        assert!((chi2_critical(1, 0.3173).unwrap() - 1.0).abs() < 1e-3);
        assert!((chi2_critical(20, 0.01).unwrap() - 37.566).abs() < 1e-3);
        assert!(chi2_critical(3, 1.0).is_err());
    }

    #[test]
    fn empty_data_returns_prior() {
        let a = Mat::identity(2, 2) * 0.3;
        let b = Mat::from_element(2, 1, 1.0);
        let p = GaussianPrior::from_d0(&a, &b, Mat::identity(3, 3) * 10.0, 0.05).unwrap();
        let est = map_estimate(&p, &Dataset::default(), 1.0).unwrap();
        assert_eq!(est.theta_hat, p.theta_prior);
        assert_eq!(est.d_t, Mat::zeros(3, 3));
    }

    #[test]
    fn radial_projection() {
        let n_x = 1;
        let e = UncertaintyEllipsoid { center: Vector::zeros(2), shape: Mat::identity(2, 2), prob: 0.9, n_x };
        let th = Vector::from_column_slice(&[3.0, 4.0]);
        let p = project_parameters(&th, &e, &Mat::identity(2, 2)).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-9 && (p[1] - 0.8).abs() < 1e-9);
        let inside = Vector::from_column_slice(&[0.1, 0.2]);
        assert_eq!(project_parameters(&inside, &e, &Mat::identity(2, 2)).unwrap(), inside);
    }
}
