//! Small dense linear-algebra helpers shared by the solver modules.
//!
//! Everything here works on `nalgebra` dynamic matrices. The systems in this
//! crate are tiny (tens of rows), so direct dense methods are used throughout.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// `exp(mat * t)` by scaling and squaring with a Padé approximant.
pub fn matrix_exponential(mat: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if !mat.is_square() {
        return Err(Error::InvalidArgument(format!(
            "matrix exponential needs a square matrix, got {}x{}",
            mat.nrows(),
            mat.ncols()
        )));
    }
    if !t.is_finite() || mat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix_exponential"));
    }
    if t == 0.0 || mat.iter().all(|&v| v == 0.0) {
        return Ok(DMatrix::identity(mat.nrows(), mat.ncols()));
    }
    Ok((mat * t).exp())
}

/// Solves `P A + Aᵀ P = -Q` for symmetric `P`.
///
/// The Sylvester operator is assembled explicitly and factored with a
/// pivoted LU; `A` is at most a few dozen rows here.
pub fn lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || q.shape() != (n, n) {
        return Err(Error::InvalidArgument("lyapunov: shape mismatch".into()));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    // column-major vec: vec(P A) = (Aᵀ ⊗ I) vec P, vec(Aᵀ P) = (I ⊗ Aᵀ) vec P
    let op = kron(&at, &eye) + kron(&eye, &at);
    let rhs = DVector::from_iterator(n * n, q.iter().map(|v| -v));
    let lu = op.full_piv_lu();
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidBasis("Lyapunov operator is singular".into()))?;
    let p = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

/// Extreme eigenvalues `(min, max)` of a symmetric matrix.
pub fn sym_eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym).eigenvalues;
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Orthonormal basis of the null space of `a` (columns), via SVD.
pub fn null_space(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (rows, cols) = a.shape();
    if rows == 0 {
        return DMatrix::identity(cols, cols);
    }
    // pad to a square matrix so that V is complete
    let mut padded = DMatrix::zeros(rows.max(cols), cols);
    padded.rows_mut(0, rows).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..cols)
        .filter(|&i| svd.singular_values[i] <= tol * smax.max(1.0))
        .collect();
    let mut out = DMatrix::zeros(cols, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        out.set_column(j, &v_t.row(i).transpose());
    }
    out
}

/// Numerical rank with a relative singular-value threshold.
pub fn rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&v| v > rel_tol * smax).count()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `v` scaled to unit Euclidean norm; zero vectors are returned unchanged.
pub fn normalized(v: &DVector<f64>) -> DVector<f64> {
    let n = v.norm();
    if n == 0.0 {
        v.clone()
    } else {
        v / n
    }
}

/// Max-norm of a matrix.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        // exact up to degree 15
        let integral: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(14)).sum();
        assert_relative_eq!(integral, 2.0 / 15.0, epsilon = 1e-14);
        let total: f64 = w.iter().sum();
        assert_relative_eq!(total, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn lyapunov_scalar() {
        let a = DMatrix::from_element(1, 1, -1.0);
        let q = DMatrix::from_element(1, 1, 1.0);
        let p = lyapunov(&a, &q).unwrap();
        assert_relative_eq!(p[(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn lyapunov_residual() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 0.3, 0.0, -2.0, -1.5, 0.4, 0.1, 0.0, -0.7]);
        let q = DMatrix::identity(3, 3);
        let p = lyapunov(&a, &q).unwrap();
        let res = &p * &a + a.transpose() * &p + &q;
        assert!(max_abs(&res) < 1e-12);
    }

    #[test]
    fn exponential_rejects_nan() {
        let a = DMatrix::from_element(2, 2, f64::NAN);
        assert!(matches!(
            matrix_exponential(&a, 1.0),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn exponential_zero_and_diagonal() {
        let z = DMatrix::zeros(3, 3);
        assert_eq!(
            matrix_exponential(&z, 4.0).unwrap(),
            DMatrix::identity(3, 3)
        );
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        let e = matrix_exponential(&d, 1.0).unwrap();
        assert_relative_eq!(e[(0, 0)], (-1.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(e[(1, 1)], (-2.0f64).exp(), max_relative = 1e-14);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn null_space_is_orthogonal() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let n = null_space(&a, 1e-12);
        assert_eq!(n.ncols(), 2);
        assert!(max_abs(&(&a * &n)) < 1e-14);
    }
}
