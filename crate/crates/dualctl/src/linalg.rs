//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Real dense matrix.
pub type Mat = DMatrix<f64>;
/// Complex dense matrix.
pub type CMat = DMatrix<Complex<f64>>;
/// Real dense vector.
pub type Vector = DVector<f64>;
/// Complex scalar.
pub type C64 = Complex<f64>;

/// Symmetric part (M + Mᵀ)/2.
pub fn sym(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part.
pub fn min_eig(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    sym(m).symmetric_eigenvalues().min()
}

/// Largest eigenvalue of the symmetric part.
pub fn max_eig(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    sym(m).symmetric_eigenvalues().max()
}

/// Spectral norm of a real matrix.
pub fn norm2(m: &Mat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().max()
}

/// Spectral norm of a complex matrix.
pub fn cnorm2(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().max()
}

/// Largest absolute entry.
pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

/// Embeds a real matrix into the complex field.
pub fn to_complex(m: &Mat) -> CMat {
    m.map(|v| C64::new(v, 0.0))
}

/// Spectral radius via the real Schur form.
pub fn spectral_radius(a: &Mat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.clone()
        .complex_eigenvalues()
        .iter()
        .fold(0.0_f64, |r, e| r.max(e.norm()))
}

/// Column-major vectorization of the n_x × n_φ block `[A, B]`.
pub fn vec_ab(a: &Mat, b: &Mat) -> Vector {
    let theta = stack_ab(a, b);
    Vector::from_column_slice(theta.as_slice())
}

/// Horizontal concatenation `[A, B]`.
pub fn stack_ab(a: &Mat, b: &Mat) -> Mat {
    let n = a.nrows();
    let mut m = Mat::zeros(n, a.ncols() + b.ncols());
    m.view_mut((0, 0), (n, a.ncols())).copy_from(a);
    m.view_mut((0, a.ncols()), (n, b.ncols())).copy_from(b);
    m
}

/// Inverse of [`vec_ab`]: returns `(A, B)` with a scalar input column.
pub fn unvec_ab(theta: &Vector, n_x: usize) -> Result<(Mat, Mat)> {
    if theta.len() != n_x * (n_x + 1) {
        return Err(Error::Dimension(format!(
            "parameter vector has length {}, expected {}",
            theta.len(),
            n_x * (n_x + 1)
        )));
    }
    let m = Mat::from_column_slice(n_x, n_x + 1, theta.as_slice());
    Ok((m.columns(0, n_x).into_owned(), m.columns(n_x, 1).into_owned()))
}

/// Reshapes a parameter vector into the n_x × n_φ matrix `[A, B]`.
pub fn unvec(theta: &Vector, n_x: usize) -> Mat {
    Mat::from_column_slice(n_x, theta.len() / n_x, theta.as_slice())
}

/// Cholesky factor of a symmetric positive definite matrix.
pub fn chol(m: &Mat, what: &str) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    nalgebra::Cholesky::new(sym(m)).ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(m: &Mat, what: &str) -> Result<Mat> {
    Ok(sym(&chol(m, what)?.inverse()))
}

/// Condition number in the spectral norm.
pub fn condition(m: &Mat) -> f64 {
    let s = m.singular_values();
    let lo = s.min();
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        s.max() / lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vec_roundtrip() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = Mat::from_row_slice(2, 1, &[5.0, 6.0]);
        let t = vec_ab(&a, &b);
        assert_eq!(t.as_slice(), &[1.0, 3.0, 2.0, 4.0, 5.0, 6.0]);
        let (a2, b2) = unvec_ab(&t, 2).unwrap();
        assert_eq!(a2, a);
        assert_eq!(b2, b);
    }

    #[test]
    fn radius_of_rotation() {
        let a = Mat::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert!((spectral_radius(&a) - 0.5).abs() < 1e-12);
    }
}
