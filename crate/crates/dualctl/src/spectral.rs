//! Spectral lines, transfer matrices, the information matrix and the
//! excitation lower bound with its convex relaxation.
//!
//! Frequencies are in cycles per sample and lie on the DFT grid
//! Ω_T = {0, 1/T, …, (T−1)/T}. The input 2a·cos(2πωk) has line amplitude
//! c·a with c = 2 at ω ∈ {0, 1/2} and c = 1 otherwise.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{to_complex, CMat, Mat, Vector, C64};

/// n_φ distinct grid frequencies in [0, 1/2] for horizon T.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub t: usize,
    pub bins: Vec<usize>,
}

impl FrequencyGrid {
    /// Grid from DFT bin indices k (ω = k/T).
    pub fn from_bins(t: usize, bins: Vec<usize>) -> Result<Self> {
        if t == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        if bins.len() > t {
            return Err(Error::InvalidArgument("more lines than samples".into()));
        }
        for (i, &k) in bins.iter().enumerate() {
            if 2 * k > t {
                return Err(Error::InvalidArgument(format!("bin {k} exceeds the Nyquist frequency")));
            }
            if bins[..i].contains(&k) {
                return Err(Error::InvalidArgument(format!("bin {k} repeated")));
            }
        }
        Ok(Self { t, bins })
    }

    /// Grid from frequencies in cycles per sample; each must be a multiple of 1/T.
    pub fn from_omegas(t: usize, omegas: &[f64]) -> Result<Self> {
        let bins = omegas.iter().map(|&w| bin_of(w, t)).collect::<Result<Vec<_>>>()?;
        Self::from_bins(t, bins)
    }

    /// Frequencies in cycles per sample.
    pub fn omegas(&self) -> Vec<f64> {
        self.bins.iter().map(|&k| k as f64 / self.t as f64).collect()
    }

    /// Number of lines.
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    /// True for an empty grid.
    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Line coefficients c_i ∈ {1, 2}.
    pub fn line_coefficients(&self) -> Vec<f64> {
        self.bins.iter().map(|&k| if k == 0 || 2 * k == self.t { 2.0 } else { 1.0 }).collect()
    }

    /// Evaluation points z_i = e^{j2πω_i}.
    pub fn points(&self) -> Vec<C64> {
        self.omegas().iter().map(|w| Complex::from_polar(1.0, 2.0 * std::f64::consts::PI * w)).collect()
    }
}

fn bin_of(omega: f64, t: usize) -> Result<usize> {
    let x = omega * t as f64;
    let k = x.round();
    if (x - k).abs() > 1e-9 * (1.0 + x.abs()) || k < 0.0 {
        return Err(Error::InvalidArgument(format!("frequency {omega} is not on the grid of horizon {t}")));
    }
    Ok(k as usize)
}

/// Harmonic exploration input with its guaranteed excitation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExplorationPlan {
    pub grid: FrequencyGrid,
    pub amplitudes: Vec<f64>,
    pub gamma_e: f64,
    pub dbar_t: Mat,
}

impl ExplorationPlan {
    /// Plan with no excitation.
    pub fn zero(grid: FrequencyGrid) -> Self {
        let n = grid.len();
        Self { amplitudes: vec![0.0; n], gamma_e: 0.0, dbar_t: Mat::zeros(n, n), grid }
    }

    /// Diagonal amplitude matrix U_e.
    pub fn ue(&self) -> Mat {
        Mat::from_diagonal(&Vector::from_column_slice(&self.amplitudes))
    }

    /// Input energy Σ u_k².
    pub fn energy(&self) -> f64 {
        generate_input(self).iter().map(|u| u * u).sum()
    }
}

/// u_k = Σ 2a_i cos(2πω_i k), k = 0..T−1.
pub fn generate_input(plan: &ExplorationPlan) -> Vec<f64> {
    let t = plan.grid.t;
    let two_pi = 2.0 * std::f64::consts::PI;
    (0..t)
        .map(|k| {
            plan.grid
                .bins
                .iter()
                .zip(&plan.amplitudes)
                .map(|(&b, &a)| 2.0 * a * (two_pi * ((b * k) % t) as f64 / t as f64).cos())
                .sum()
        })
        .collect()
}

fn kernel(k: usize, bin: usize, t: usize) -> C64 {
    let ang = -2.0 * std::f64::consts::PI * ((bin * k) % t) as f64 / t as f64;
    Complex::from_polar(1.0, ang)
}

/// Spectral line (1/T) Σ s_k e^{−j2πωk} of a length-T signal.
pub fn spectral_line(signal: &[f64], omega: f64) -> Result<C64> {
    let t = signal.len();
    let bin = bin_of(omega, t)?;
    Ok(signal.iter().enumerate().map(|(k, &s)| kernel(k, bin, t) * s).sum::<C64>() / t as f64)
}

/// Spectral lines of a vector sequence at every grid frequency (columns).
pub fn spectral_lines(seq: &[Vector], grid: &FrequencyGrid) -> Result<CMat> {
    let t = seq.len();
    if t != grid.t {
        return Err(Error::Dimension(format!("sequence length {t} does not match horizon {}", grid.t)));
    }
    let n = seq.first().map_or(0, |v| v.len());
    let mut out = CMat::zeros(n, grid.len());
    for (j, &bin) in grid.bins.iter().enumerate() {
        for (k, v) in seq.iter().enumerate() {
            let e = kernel(k, bin, t);
            for r in 0..n {
                out[(r, j)] += e * v[r];
            }
        }
    }
    Ok(out / C64::new(t as f64, 0.0))
}

/// Transfer matrices at the grid points.
#[derive(Clone, Debug)]
pub struct TransferData {
    /// Columns V_i = [(z_i I − A)⁻¹ B; 1].
    pub v: CMat,
    /// Blocks Y_i = [(z_i I − A)⁻¹; 0], each n_φ × n_x.
    pub y: Vec<CMat>,
    pub z: Vec<C64>,
}

impl TransferData {
    /// Line map V·diag(c): Φ̄ = line_map · U_e.
    pub fn line_map(&self, grid: &FrequencyGrid) -> CMat {
        let mut v = self.v.clone();
        for (j, c) in grid.line_coefficients().into_iter().enumerate() {
            v.column_mut(j).scale_mut(c);
        }
        v
    }
}

/// Resolvent (zI − A)⁻¹ with a conditioning guard.
pub fn resolvent(a: &Mat, z: C64) -> Result<CMat> {
    let n = a.nrows();
    let m = CMat::identity(n, n) * z - to_complex(a);
    let s = m.singular_values();
    if s.min() <= 1e-12 * s.max() {
        return Err(Error::ResolventSingular);
    }
    m.try_inverse().ok_or(Error::ResolventSingular)
}

/// V_i and Y_i evaluated at z_i = e^{j2πω_i}.
pub fn transfer_matrices(a: &Mat, b: &Mat, grid: &FrequencyGrid) -> Result<TransferData> {
    let n = a.nrows();
    if b.nrows() != n || b.ncols() != 1 {
        return Err(Error::Dimension("B must be n_x x 1".into()));
    }
    let z = grid.points();
    let mut v = CMat::zeros(n + 1, grid.len());
    let mut y = Vec::with_capacity(grid.len());
    let bc = to_complex(b);
    for (j, &zj) in z.iter().enumerate() {
        let r = resolvent(a, zj)?;
        let col = &r * &bc;
        v.view_mut((0, j), (n, 1)).copy_from(&col);
        v[(n, j)] = C64::new(1.0, 0.0);
        let mut yj = CMat::zeros(n + 1, n);
        yj.view_mut((0, 0), (n, n)).copy_from(&r);
        y.push(yj);
    }
    Ok(TransferData { v, y, z })
}

/// Information matrix Φ̄ = V·diag(c_i a_i).
pub fn information_matrix(transfer: &TransferData, amplitudes: &[f64], grid: &FrequencyGrid) -> Result<CMat> {
    if amplitudes.len() != grid.len() || transfer.v.ncols() != grid.len() {
        return Err(Error::Dimension("amplitudes, grid and transfer data disagree".into()));
    }
    let mut phi = transfer.line_map(grid);
    for (j, &a) in amplitudes.iter().enumerate() {
        phi.column_mut(j).scale_mut(a);
    }
    Ok(phi)
}

/// Real part of a Hermitian matrix after a symmetry check.
pub fn hermitian_real(h: &CMat) -> Result<Mat> {
    let re = h.map(|c| c.re);
    let im = h.map(|c| c.im);
    let skew = (&im + im.transpose()).abs().max();
    let asym = (&re - re.transpose()).abs().max();
    let scale = re.abs().max().max(im.abs().max());
    if skew > 1e-9 * scale.max(1e-300) || asym > 1e-9 * scale.max(1e-300) {
        return Err(Error::InvalidArgument("matrix is not Hermitian".into()));
    }
    Ok((&re + re.transpose()) * 0.5)
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("eps = {eps} outside (0, 1)")))
    }
}

/// Guaranteed lower bound on D_T:
/// (T/(c̄ n_φ))·[(1−ε) Re(Φ̄Φ̄ᴴ) − ((1−ε)/ε) l² I] with c̄ = σ_w² c_δ.
pub fn excitation_lower_bound(phi_bar: &CMat, l: f64, eps: f64, t: usize, c_delta: f64, sigma_w: f64) -> Result<Mat> {
    check_eps(eps)?;
    let n = phi_bar.nrows();
    let cbar = sigma_w * sigma_w * c_delta;
    let k = t as f64 / (cbar * n as f64);
    let gram = hermitian_real(&(phi_bar * phi_bar.adjoint()))?;
    Ok((gram * (1.0 - eps) - Mat::identity(n, n) * ((1.0 - eps) / eps * l * l)) * k)
}

/// Relaxation of the excitation bound that is affine in U_e:
/// (T/(c̄ n_φ))·[(1−ε) Re(V (U Lᵀ + L Uᵀ − L Lᵀ) Vᴴ) − ((1−ε)/ε) l² I],
/// where `v` is the line map (Φ̄ = v·U_e). Since UUᵀ − (ULᵀ + LUᵀ − LLᵀ) =
/// (U − L)(U − L)ᵀ ⪰ 0, it never exceeds the exact bound and is tight at L = U.
pub fn convex_relaxed_bound(l_mat: &Mat, ue: &Mat, v: &CMat, l: f64, eps: f64, t: usize, cbar: f64) -> Result<Mat> {
    check_eps(eps)?;
    let n = v.nrows();
    if l_mat.shape() != ue.shape() || ue.nrows() != v.ncols() {
        return Err(Error::Dimension("L, U_e and the line map disagree".into()));
    }
    let k = t as f64 / (cbar * n as f64);
    let q = relaxed_quadratic(l_mat, ue);
    let gram = hermitian_real(&(v * to_complex(&q) * v.adjoint()))?;
    Ok((gram * (1.0 - eps) - Mat::identity(n, n) * ((1.0 - eps) / eps * l * l)) * k)
}

/// U Lᵀ + L Uᵀ − L Lᵀ, the affine minorant of U Uᵀ.
pub fn relaxed_quadratic(l_mat: &Mat, ue: &Mat) -> Mat {
    ue * l_mat.transpose() + l_mat * ue.transpose() - l_mat * l_mat.transpose()
}

/// Initial state of the periodic steady state under the plan's input, so that
/// a noise-free simulation has exact spectral lines from k = 0.
pub fn steady_state_initial(a: &Mat, b: &Mat, plan: &ExplorationPlan) -> Result<Vector> {
    let td = transfer_matrices(a, b, &plan.grid)?;
    let n = a.nrows();
    let mut x0 = Vector::zeros(n);
    for (j, &amp) in plan.amplitudes.iter().enumerate() {
        for r in 0..n {
            x0[r] += 2.0 * amp * td.v[(r, j)].re;
        }
    }
    Ok(x0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(t: usize, bins: Vec<usize>, amps: Vec<f64>) -> ExplorationPlan {
        let grid = FrequencyGrid::from_bins(t, bins).unwrap();
        let n = grid.len();
        ExplorationPlan { grid, amplitudes: amps, gamma_e: 0.0, dbar_t: Mat::zeros(n, n) }
    }

    #[test]
    fn quarter_wave_input() {
        let u = generate_input(&plan(4, vec![1], vec![1.0]));
        let want = [2.0, 0.0, -2.0, 0.0];
        for (a, b) in u.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_amplitudes_give_zero_input() {
        assert!(generate_input(&plan(10, vec![0, 1, 2], vec![0.0; 3])).iter().all(|&u| u == 0.0));
    }

    #[test]
    fn line_amplitudes_and_edge_factor() {
        let u = generate_input(&plan(20, vec![3], vec![0.7]));
        assert!((spectral_line(&u, 0.15).unwrap() - C64::new(0.7, 0.0)).norm() < 1e-12);
        assert!(spectral_line(&u, 0.25).unwrap().norm() < 1e-12);
        let dc = generate_input(&plan(20, vec![0], vec![0.7]));
        assert!((spectral_line(&dc, 0.0).unwrap() - C64::new(1.4, 0.0)).norm() < 1e-12);
        assert!(spectral_line(&u, 0.123).is_err());
    }

    #[test]
    fn zero_plant_transfer() {
        let grid = FrequencyGrid::from_bins(8, vec![0, 1]).unwrap();
        let td = transfer_matrices(&Mat::zeros(1, 1), &Mat::from_element(1, 1, 2.0), &grid).unwrap();
        for (j, w) in grid.omegas().iter().enumerate() {
            let want = Complex::from_polar(2.0, -2.0 * std::f64::consts::PI * w);
            assert!((td.v[(0, j)] - want).norm() < 1e-14);
            assert_eq!(td.v[(1, j)], C64::new(1.0, 0.0));
        }
    }

    #[test]
    fn bound_is_zero_without_excitation() {
        let b = excitation_lower_bound(&CMat::zeros(3, 3), 0.0, 0.5, 10, 2.0, 1.0).unwrap();
        assert_eq!(b, Mat::zeros(3, 3));
        assert!(excitation_lower_bound(&CMat::zeros(3, 3), 0.0, 1.0, 10, 2.0, 1.0).is_err());
    }

    #[test]
    fn relaxation_tight_at_candidate() {
        let ue = Mat::from_diagonal(&Vector::from_column_slice(&[1.0, 2.0]));
        assert_eq!(relaxed_quadratic(&ue, &ue), &ue * ue.transpose());
        assert_eq!(relaxed_quadratic(&Mat::zeros(2, 2), &ue), Mat::zeros(2, 2));
    }
}
