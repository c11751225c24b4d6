//! Compact horizons for the semi-infinite constraint.
//!
//! Any signal `τ(t)ᵀη` decays exponentially, so past some time `T_c` it can
//! no longer reach a new extremum (symmetric bounds) or leave a box it has
//! respected on `[0, T_c]` (asymmetric bounds). The constants below are all
//! computable from `M` and `τ(0)` with a Lyapunov solve and one Gram matrix.

use std::fmt;

use nalgebra::DMatrix;

use crate::basis::{gram_quadrature, BasisFamily, QuadratureSpec};
use crate::error::{Error, Result};
use crate::linalg::{lyapunov, sym_eig_range};

/// Extra constants of the asymmetric construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymmetricRecord {
    pub a_l: f64,
    pub a_u: f64,
    pub t_hat: f64,
    /// Smallest eigenvalue of the Lyapunov right-hand side (identity, so 1).
    pub lambda_q: f64,
    pub lambda_p_max: f64,
    pub lambda_p_min: f64,
    /// Largest eigenvalue of `ĤᵀĤ` for the derivative observability map.
    pub lambda_hth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonCertificate {
    /// Envelope amplitude in `|τ(t)|² ≤ C2 e^{−c2 t}`.
    pub big_c2: f64,
    /// Envelope rate.
    pub c2: f64,
    pub t_i: f64,
    pub c3: f64,
    pub c_star_lb: f64,
    /// Time where the envelope `√C2 e^{−c2 t/2}` meets `c_star_lb`.
    pub t_decay: f64,
    pub t_c: f64,
    pub asym: Option<AsymmetricRecord>,
}

impl fmt::Display for HorizonCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "C2 = {:.17e}", self.big_c2)?;
        writeln!(f, "c2 = {:.17e}", self.c2)?;
        writeln!(f, "T_i = {:.17e}", self.t_i)?;
        writeln!(f, "c3 = {:.17e}", self.c3)?;
        writeln!(f, "c_star_lb = {:.17e}", self.c_star_lb)?;
        writeln!(f, "t_decay = {:.17e}", self.t_decay)?;
        writeln!(f, "T_c = {:.17e}", self.t_c)?;
        if let Some(a) = &self.asym {
            writeln!(f, "[asymmetric]")?;
            writeln!(f, "a_l = {:.17e}", a.a_l)?;
            writeln!(f, "a_u = {:.17e}", a.a_u)?;
            writeln!(f, "t_hat = {:.17e}", a.t_hat)?;
            writeln!(f, "lambda_Q = {:.17e}", a.lambda_q)?;
            writeln!(f, "lambda_P_max = {:.17e}", a.lambda_p_max)?;
            writeln!(f, "lambda_P_min = {:.17e}", a.lambda_p_min)?;
            writeln!(f, "lambda_HtH = {:.17e}", a.lambda_hth)?;
        }
        Ok(())
    }
}

fn require_hurwitz(m: &DMatrix<f64>) -> Result<()> {
    if m.clone().complex_eigenvalues().iter().all(|ev| ev.re < 0.0) {
        Ok(())
    } else {
        Err(Error::InvalidBasis("generator is not Hurwitz".into()))
    }
}

/// `(C2, c2)` with `|τ(t)|² ≤ C2 e^{−c2 t}` from `P M + Mᵀ P = −I`.
pub fn decay_envelope(basis: &BasisFamily) -> Result<(f64, f64)> {
    let m = basis.generator();
    require_hurwitz(m)?;
    let p = lyapunov(m, &DMatrix::identity(m.nrows(), m.nrows()))?;
    let (pmin, pmax) = sym_eig_range(&p);
    if !(pmin > 0.0) {
        return Err(Error::InvalidBasis(
            "Lyapunov solution is not positive definite".into(),
        ));
    }
    Ok((pmax / pmin * basis.tau0().norm_squared(), 1.0 / pmax))
}

/// Time after which `(C2/c2) e^{−c2 T}` has dropped to one half.
pub fn independence_horizon(big_c2: f64, c2: f64) -> f64 {
    ((2.0 * big_c2 / c2).ln() / c2).max(1e-6)
}

/// Smallest eigenvalue of `∫₀^{T_i} τ τᵀ dt`.
pub fn gram_min_eig(basis: &BasisFamily, t_i: f64) -> Result<f64> {
    if !(t_i > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "T_i must be positive, got {t_i}"
        )));
    }
    let gram = gram_quadrature(basis, t_i, QuadratureSpec::default());
    let (c3, _) = sym_eig_range(&gram);
    if c3 <= 0.0 {
        return Err(Error::InvalidBasis(format!(
            "Gram matrix on [0, {t_i}] is not positive definite (min eig {c3:e})"
        )));
    }
    Ok(c3)
}

struct Common {
    big_c2: f64,
    c2: f64,
    t_i: f64,
    c3: f64,
    c_star_lb: f64,
    t_decay: f64,
}

fn common(basis: &BasisFamily) -> Result<Common> {
    let (big_c2, c2) = decay_envelope(basis)?;
    let t_i = independence_horizon(big_c2, c2);
    let c3 = gram_min_eig(basis, t_i)?;
    // max_{[0,T_i]} (τᵀη)² ≥ (1/T_i) ∫₀^{T_i} (τᵀη)² ≥ c3/T_i for |η| = 1
    let c_star_lb = (c3 / t_i).sqrt();
    let t_decay = 2.0 / c2 * (big_c2.sqrt() / c_star_lb).ln();
    Ok(Common {
        big_c2,
        c2,
        t_i,
        c3,
        c_star_lb,
        t_decay,
    })
}

/// Horizon after which `|τ(t)ᵀη|` stays below its maximum over `[0, T_c]`.
pub fn compact_horizon_symmetric(basis: &BasisFamily) -> Result<HorizonCertificate> {
    let c = common(basis)?;
    Ok(HorizonCertificate {
        big_c2: c.big_c2,
        c2: c.c2,
        t_i: c.t_i,
        c3: c.c3,
        c_star_lb: c.c_star_lb,
        t_decay: c.t_decay,
        // the lower bound c* refers to the maximum over [0, T_i]
        t_c: c.t_decay.max(c.t_i),
        asym: None,
    })
}

/// Horizon for `a_l ≤ τ(t)ᵀη ≤ a_u` with `a_l < 0 < a_u`.
pub fn compact_horizon_asymmetric(
    basis: &BasisFamily,
    a_l: f64,
    a_u: f64,
) -> Result<HorizonCertificate> {
    if !(a_l < 0.0) || !(a_u > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "asymmetric horizon needs a_l < 0 < a_u, got a_l = {a_l}, a_u = {a_u}"
        )));
    }
    let c = common(basis)?;
    let s = basis.order();
    let m = basis.generator();

    let coeffs = char_poly_coeffs(m);
    let companion = DMatrix::from_fn(s, s, |i, j| {
        if i + 1 < s {
            if j == i + 1 {
                1.0
            } else {
                0.0
            }
        } else {
            -coeffs[s - 1 - j]
        }
    });
    // rows τ(0)ᵀ (Mᵀ)^k map η to the derivatives of τᵀη at t = 0
    let mut obs = DMatrix::zeros(s, s);
    let mut row = basis.tau0().transpose();
    for k in 0..s {
        obs.set_row(k, &row);
        row = &row * m.transpose();
    }
    let p = lyapunov(&companion, &DMatrix::identity(s, s))?;
    let (lambda_p_min, lambda_p_max) = sym_eig_range(&p);
    if !(lambda_p_min > 0.0) {
        return Err(Error::InvalidBasis(
            "companion Lyapunov solution not positive definite".into(),
        ));
    }
    let (_, lambda_hth) = sym_eig_range(&(obs.transpose() * &obs));
    let lambda_q = 1.0;

    let (small, large) = if a_l.abs() <= a_u.abs() {
        (a_l.abs(), a_u.abs())
    } else {
        (a_u.abs(), a_l.abs())
    };
    // |f(t)|² ≤ (λ^P λ^{ĤᵀĤ} T_i a_large² / (λ_P c3)) e^{−λ_Q t/λ^P} must drop below a_small²
    let t_hat = -(lambda_p_max / lambda_q)
        * (2.0 * (small / large).ln()
            + (c.c3 * lambda_p_min / (c.t_i * lambda_p_max * lambda_hth)).ln());
    let t_c = t_hat.max(c.t_i) + 1e-9;
    Ok(HorizonCertificate {
        big_c2: c.big_c2,
        c2: c.c2,
        t_i: c.t_i,
        c3: c.c3,
        c_star_lb: c.c_star_lb,
        t_decay: c.t_decay,
        t_c,
        asym: Some(AsymmetricRecord {
            a_l,
            a_u,
            t_hat,
            lambda_q,
            lambda_p_max,
            lambda_p_min,
            lambda_hth,
        }),
    })
}

/// Coefficients `(a_1, …, a_s)` of `det(xI − M) = xˢ + a_1 xˢ⁻¹ + … + a_s`
/// by the Faddeev–LeVerrier recurrence.
pub fn char_poly_coeffs(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut mk = DMatrix::<f64>::zeros(n, n);
    let mut prev = 1.0;
    let mut out = Vec::with_capacity(n);
    for k in 1..=n {
        mk = m * &mk + &eye * prev;
        let c = -(m * &mk).trace() / k as f64;
        out.push(c);
        prev = c;
    }
    out
}
