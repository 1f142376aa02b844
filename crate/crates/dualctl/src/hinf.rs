//! H∞ norm of discrete-time systems.
//!
//! The system is mapped to continuous time by the bilinear transform
//! z = (1+s)/(1−s), which preserves the H∞ norm, and the norm is found by
//! the level-set iteration on the Hamiltonian: a level γ exceeds the norm iff
//! the Hamiltonian has no imaginary-axis eigenvalues. Each step raises the
//! lower bound to the peak gain over the midpoints of the crossing intervals.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{cnorm2, norm2, spectral_radius, to_complex, Mat, C64};

/// Frequency response C(zI − A)⁻¹B + D at z = e^{jω}, ω in radians/sample.
pub fn freq_response(a: &Mat, b: &Mat, c: &Mat, d: &Mat, omega: f64) -> Result<DMatrix<C64>> {
    let n = a.nrows();
    let z = C64::from_polar(1.0, omega);
    let zi = DMatrix::<C64>::identity(n, n) * z - to_complex(a);
    let x = zi.lu().solve(&to_complex(b)).ok_or(Error::ResolventSingular)?;
    Ok(to_complex(c) * x + to_complex(d))
}

/// Largest singular value of the frequency response at ω.
pub fn gain_at(a: &Mat, b: &Mat, c: &Mat, d: &Mat, omega: f64) -> Result<f64> {
    Ok(cnorm2(&freq_response(a, b, c, d, omega)?))
}

/// H∞ norm of a Schur-stable discrete-time system (A, B, C, D).
pub fn hinf_norm(a: &Mat, b: &Mat, c: &Mat, d: &Mat) -> Result<f64> {
    let n = a.nrows();
    if spectral_radius(a) >= 1.0 - 1e-12 {
        return Err(Error::NotSchur);
    }
    if n == 0 || b.ncols() == 0 || c.nrows() == 0 {
        return Ok(norm2(d));
    }
    let ident = Mat::identity(n, n);
    let api = (a + &ident).try_inverse().ok_or(Error::ResolventSingular)?;
    let r2 = std::f64::consts::SQRT_2;
    let ac = &api * (a - &ident);
    let bc = &api * b * r2;
    let cc = c * &api * r2;
    let dc = d - c * &api * b;

    let mut lb = norm2(&dc);
    for k in 0..=64 {
        let w = std::f64::consts::PI * k as f64 / 64.0;
        lb = lb.max(gain_at(a, b, c, d, w)?);
    }
    if lb == 0.0 {
        return Ok(0.0);
    }
    for _ in 0..100 {
        let g = lb * (1.0 + 2e-10);
        let crossings = imaginary_crossings(&ac, &bc, &cc, &dc, g)?;
        if crossings.len() < 2 {
            return Ok(lb);
        }
        let mut improved = lb;
        for pair in crossings.windows(2) {
            let nu = 0.5 * (pair[0] + pair[1]);
            let w = 2.0 * nu.atan();
            improved = improved.max(gain_at(a, b, c, d, w)?);
        }
        if improved <= lb * (1.0 + 1e-12) {
            return Ok(lb);
        }
        lb = improved;
    }
    Ok(lb)
}

fn imaginary_crossings(ac: &Mat, bc: &Mat, cc: &Mat, dc: &Mat, g: f64) -> Result<Vec<f64>> {
    let n = ac.nrows();
    let m = bc.ncols();
    let p = cc.nrows();
    let r = Mat::identity(m, m) * (g * g) - dc.transpose() * dc;
    let ri = r.try_inverse().ok_or_else(|| Error::Singular("level below feedthrough norm".into()))?;
    let a11 = ac + bc * &ri * dc.transpose() * cc;
    let a12 = bc * &ri * bc.transpose();
    let a21 = -(cc.transpose() * (Mat::identity(p, p) + dc * &ri * dc.transpose()) * cc);
    let mut h = Mat::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&a11);
    h.view_mut((0, n), (n, n)).copy_from(&a12);
    h.view_mut((n, 0), (n, n)).copy_from(&a21);
    h.view_mut((n, n), (n, n)).copy_from(&(-a11.transpose()));
    let scale = h.iter().fold(1.0_f64, |s, v| s.max(v.abs()));
    let mut nus: Vec<f64> = h
        .complex_eigenvalues()
        .iter()
        .filter(|e| e.re.abs() <= 1e-7 * scale && e.im >= 0.0)
        .map(|e| e.im)
        .collect();
    nus.sort_by(|x, y| x.partial_cmp(y).unwrap());
    if !nus.is_empty() {
        nus.insert(0, 0.0);
        nus.push(nus[nus.len() - 1] * 2.0 + 1.0);
    }
    Ok(nus)
}

/// H∞ norm of w ↦ z for x⁺ = (A + BK)x + w, z = (C + D_u K)x + D_w w.
pub fn closed_loop_hinf(a: &Mat, b: &Mat, k: &Mat, c: &Mat, d_u: &Mat, d_w: &Mat) -> Result<f64> {
    let acl = a + b * k;
    let ccl = c + d_u * k;
    let n = a.nrows();
    hinf_norm(&acl, &Mat::identity(n, n), &ccl, d_w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sweep(a: &Mat, b: &Mat, c: &Mat, d: &Mat) -> f64 {
        (0..=20000)
            .map(|k| gain_at(a, b, c, d, std::f64::consts::PI * k as f64 / 20000.0).unwrap())
            .fold(0.0, f64::max)
    }

    #[test]
    fn scalar_lowpass_peak_at_dc() {
        let a = Mat::from_element(1, 1, 0.5);
        let one = Mat::from_element(1, 1, 1.0);
        let zero = Mat::zeros(1, 1);
        let g = hinf_norm(&a, &one, &one, &zero).unwrap();
        assert!((g - 2.0).abs() < 1e-9);
    }

    #[test]
    fn matches_dense_sweep() {
        let a = Mat::from_row_slice(2, 2, &[0.3, 0.8, -0.6, 0.2]);
        let b = Mat::from_row_slice(2, 1, &[1.0, 0.5]);
        let c = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.3, 1.0]);
        let d = Mat::from_row_slice(2, 1, &[0.1, 0.0]);
        let g = hinf_norm(&a, &b, &c, &d).unwrap();
        let s = sweep(&a, &b, &c, &d);
        assert!(g >= s - 1e-9 && g <= s * (1.0 + 1e-6), "{g} vs {s}");
    }

    #[test]
    fn unstable_rejected() {
        let a = Mat::from_element(1, 1, 1.2);
        let one = Mat::from_element(1, 1, 1.0);
        assert!(matches!(hinf_norm(&a, &one, &one, &one), Err(Error::NotSchur)));
    }
}
