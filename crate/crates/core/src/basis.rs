//! Orthonormal, exponentially decaying basis families.
//!
//! A family is described by its order `s`, a Hurwitz generator `M` and the
//! initial value `τ(0)`. The basis vector obeys `τ̇ = M τ`, hence
//! `τ(t) = exp(M t) τ(0)`, and orthonormality on `[0, ∞)` forces
//! `M + Mᵀ = −τ(0) τ(0)ᵀ`.
//!
//! Signals are stored as coefficient vectors in component-major order: a
//! `q`-dimensional signal owns `q·s` coefficients, `s` contiguous entries per
//! component, and evaluates as `(I_q ⊗ τ(t))ᵀ η`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::horizon;
use crate::linalg::{self, matrix_exponential};

/// Tag of the only built-in construction.
pub const LAGUERRE: &str = "laguerre";

#[derive(Debug, Clone, PartialEq)]
pub struct BasisFamily {
    order: usize,
    rate: f64,
    generator: DMatrix<f64>,
    tau0: DVector<f64>,
    tag: String,
}

impl BasisFamily {
    /// Laguerre-type family `τ_i(t) = √(2λ) e^{−λt} L_{i−1}(2λt)`.
    pub fn laguerre(order: usize, rate: f64) -> Result<Self> {
        if order < 1 {
            return Err(Error::InvalidArgument(
                "basis order must be at least 1".into(),
            ));
        }
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "basis rate must be positive and finite, got {rate}"
            )));
        }
        let generator = DMatrix::from_fn(order, order, |i, j| {
            if i == j {
                -rate
            } else if j < i {
                -2.0 * rate
            } else {
                0.0
            }
        });
        let tau0 = DVector::from_element(order, (2.0 * rate).sqrt());
        Ok(Self {
            order,
            rate,
            generator,
            tau0,
            tag: LAGUERRE.to_string(),
        })
    }

    /// Assembles a family from raw parts. Only shape and finiteness are
    /// checked here; use [`check_assumptions`] to validate orthonormality.
    pub fn from_parts(
        generator: DMatrix<f64>,
        tau0: DVector<f64>,
        rate: f64,
        tag: impl Into<String>,
    ) -> Result<Self> {
        let s = tau0.len();
        if s == 0 || generator.shape() != (s, s) {
            return Err(Error::Dimension {
                field: "generator".into(),
                expected: format!("{s}x{s}"),
                got: format!("{}x{}", generator.nrows(), generator.ncols()),
            });
        }
        if generator.iter().chain(tau0.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("basis parts"));
        }
        Ok(Self {
            order: s,
            rate,
            generator,
            tau0,
            tag: tag.into(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    pub fn tau0(&self) -> &DVector<f64> {
        &self.tau0
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    /// `exp(M t)`.
    pub fn transition(&self, t: f64) -> DMatrix<f64> {
        matrix_exponential(&self.generator, t).expect("basis generator is finite")
    }

    /// `τ(t)`; panics on negative time.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        assert!(t >= 0.0, "basis evaluated at negative time {t}");
        self.transition(t) * &self.tau0
    }

    /// `τ(t)` on an ascending list of times, propagating between samples.
    pub fn eval_many(&self, times: &[f64]) -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(times.len());
        let mut last_t = 0.0;
        let mut last = self.tau0.clone();
        for &t in times {
            if t >= last_t {
                last = self.transition(t - last_t) * &last;
            } else {
                last = self.eval(t);
            }
            last_t = t;
            out.push(last.clone());
        }
        out
    }

    /// k-th derivative `M^k τ(t)`.
    pub fn derivative(&self, t: f64, k: u32) -> DVector<f64> {
        let mut v = self.eval(t);
        for _ in 0..k {
            v = &self.generator * v;
        }
        v
    }

    /// Coefficients of the signal advanced by `delta`: `(I_q ⊗ exp(Mᵀδ)) η`.
    pub fn shift_coeffs(&self, eta: &DVector<f64>, delta: f64) -> DVector<f64> {
        assert!(delta >= 0.0, "negative shift {delta}");
        let s = self.order;
        assert_eq!(
            eta.len() % s,
            0,
            "coefficient length not a multiple of the order"
        );
        if delta == 0.0 {
            return eta.clone();
        }
        let phi_t = self.transition(delta).transpose();
        let mut out = DVector::zeros(eta.len());
        for c in 0..eta.len() / s {
            let block = &phi_t * eta.rows(c * s, s);
            out.rows_mut(c * s, s).copy_from(&block);
        }
        out
    }

    /// Value of the `q`-dimensional signal `(I_q ⊗ τ(t))ᵀ η`.
    pub fn signal(&self, eta: &DVector<f64>, t: f64) -> DVector<f64> {
        signal_from_tau(eta, &self.eval(t))
    }

    /// `∫₀^T τ τᵀ dt`, exact via `I − exp(MT) exp(MT)ᵀ`. Valid only for
    /// families that are orthonormal on `[0, ∞)`.
    pub fn gram_closed_form(&self, t_end: f64) -> DMatrix<f64> {
        let phi = self.transition(t_end);
        DMatrix::identity(self.order, self.order) - &phi * phi.transpose()
    }
}

/// `(I_q ⊗ τ)ᵀ η` for an already evaluated `τ`.
pub fn signal_from_tau(eta: &DVector<f64>, tau: &DVector<f64>) -> DVector<f64> {
    let s = tau.len();
    let q = eta.len() / s;
    DVector::from_fn(q, |c, _| eta.rows(c * s, s).dot(tau))
}

/// A coefficient vector together with its signal dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    pub eta: DVector<f64>,
    pub dim: usize,
}

impl CoefficientVector {
    pub fn new(eta: DVector<f64>, dim: usize, basis: &BasisFamily) -> Result<Self> {
        if eta.len() != dim * basis.order() {
            return Err(Error::Dimension {
                field: "eta".into(),
                expected: format!("{}", dim * basis.order()),
                got: format!("{}", eta.len()),
            });
        }
        Ok(Self { eta, dim })
    }

    /// Coefficients of component `c`.
    pub fn component(&self, c: usize) -> DVector<f64> {
        let s = self.eta.len() / self.dim;
        self.eta.rows(c * s, s).into_owned()
    }

    pub fn value_at(&self, basis: &BasisFamily, t: f64) -> DVector<f64> {
        basis.signal(&self.eta, t)
    }

    pub fn shifted(&self, basis: &BasisFamily, delta: f64) -> Self {
        Self {
            eta: basis.shift_coeffs(&self.eta, delta),
            dim: self.dim,
        }
    }
}

/// Composite Gauss–Legendre rule used for Gram integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Panel width in multiples of `1/λ`.
    pub panel_width: f64,
    pub nodes_per_panel: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            panel_width: 0.5,
            nodes_per_panel: 16,
        }
    }
}

/// `∫₀^T τ τᵀ dt` by composite Gauss–Legendre quadrature.
pub fn gram_quadrature(basis: &BasisFamily, t_end: f64, spec: QuadratureSpec) -> DMatrix<f64> {
    let s = basis.order();
    let mut gram = DMatrix::zeros(s, s);
    if t_end <= 0.0 {
        return gram;
    }
    let width_hint = spec.panel_width / basis.rate().max(1e-12);
    let panels = (t_end / width_hint).ceil().max(1.0) as usize;
    let width = t_end / panels as f64;
    let (x, w) = linalg::gauss_legendre(spec.nodes_per_panel);
    let node_maps: Vec<DMatrix<f64>> = x
        .iter()
        .map(|xi| basis.transition(0.5 * width * (xi + 1.0)))
        .collect();
    let step = basis.transition(width);
    let mut start = basis.tau0().clone();
    for _ in 0..panels {
        for (map, wi) in node_maps.iter().zip(&w) {
            let tau = map * &start;
            gram += (0.5 * width * wi) * &tau * tau.transpose();
        }
        start = &step * start;
    }
    gram
}

/// Truncation time beyond which the Gram tail `∫_T^∞ |τ|²` is below `tail`.
pub fn truncation_time(basis: &BasisFamily, tail: f64) -> Result<f64> {
    let (c_big, c_small) = horizon::decay_envelope(basis)?;
    Ok(((c_big / (c_small * tail)).ln() / c_small).max(0.0))
}

/// Residuals of the structural assumptions of a family.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    /// `max |∫₀^∞ ττᵀ − I|`.
    pub gram_error: f64,
    /// `max |τ̇ − Mτ|` on the grid, `τ̇` by central differences.
    pub ode_residual: f64,
    /// `max |M + Mᵀ + τ(0)τ(0)ᵀ|`.
    pub identity_residual: f64,
    pub hurwitz: bool,
    pub passed: bool,
}

/// Tolerances and sampling for [`check_assumptions`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionGrid {
    pub quadrature: QuadratureSpec,
    pub tail: f64,
    pub fd_step: f64,
    pub grid_step: f64,
    pub grid_end: f64,
    pub gram_tol: f64,
    pub ode_tol: f64,
    pub identity_tol: f64,
}

impl Default for AssumptionGrid {
    fn default() -> Self {
        Self {
            quadrature: QuadratureSpec::default(),
            tail: 1e-14,
            fd_step: 1e-4,
            grid_step: 0.05,
            grid_end: 10.0,
            gram_tol: 1e-8,
            ode_tol: 1e-6,
            identity_tol: 1e-12,
        }
    }
}

pub fn check_assumptions(basis: &BasisFamily, grid: &AssumptionGrid) -> AssumptionReport {
    let s = basis.order();
    let m = basis.generator();
    let hurwitz = m.clone().complex_eigenvalues().iter().all(|ev| ev.re < 0.0);

    let tau0 = basis.tau0();
    let identity_residual = linalg::max_abs(&(m + m.transpose() + tau0 * tau0.transpose()));

    let gram_error = if hurwitz {
        match truncation_time(basis, grid.tail) {
            Ok(t_end) => {
                let g = gram_quadrature(basis, t_end, grid.quadrature);
                linalg::max_abs(&(g - DMatrix::identity(s, s)))
            }
            Err(_) => f64::INFINITY,
        }
    } else {
        f64::INFINITY
    };

    let h = grid.fd_step;
    let n_grid = (grid.grid_end / grid.grid_step).round() as usize;
    let mut ode_residual: f64 = 0.0;
    for k in 0..=n_grid {
        let t = (k as f64 * grid.grid_step).max(h);
        let fd = (basis.eval(t + h) - basis.eval(t - h)) / (2.0 * h);
        let exact = m * basis.eval(t);
        ode_residual = ode_residual.max((fd - exact).amax());
    }

    let passed = hurwitz
        && gram_error <= grid.gram_tol
        && ode_residual <= grid.ode_tol
        && identity_residual <= grid.identity_tol;
    AssumptionReport {
        gram_error,
        ode_residual,
        identity_residual,
        hurwitz,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Classical fourth-order Runge–Kutta integration of `ẏ = M y`.
    fn rk4(m: &DMatrix<f64>, y0: &DMatrix<f64>, t: f64, steps: usize) -> DMatrix<f64> {
        let h = t / steps as f64;
        let mut y = y0.clone();
        for _ in 0..steps {
            let k1 = m * &y;
            let k2 = m * (&y + &k1 * (h / 2.0));
            let k3 = m * (&y + &k2 * (h / 2.0));
            let k4 = m * (&y + &k3 * h);
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        y
    }

    #[test]
    fn laguerre_order_one() {
        let b = BasisFamily::laguerre(1, 1.0).unwrap();
        assert_eq!(b.generator()[(0, 0)], -1.0);
        assert_relative_eq!(b.tau0()[0], 2f64.sqrt());
        let sum = b.generator() + b.generator().transpose();
        assert_relative_eq!(sum[(0, 0)], -2.0);
        assert_relative_eq!(b.eval(0.0)[0], 2f64.sqrt());
        assert_relative_eq!(b.eval(1.0)[0], 0.520_260_1, epsilon = 1e-7);
        assert_relative_eq!(
            b.eval(1.0)[0],
            2f64.sqrt() * (-1.0f64).exp(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn laguerre_order_two_structure() {
        let b = BasisFamily::laguerre(2, 1.0).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, -2.0, -1.0]);
        assert_eq!(b.generator(), &expect);
        assert_relative_eq!(b.tau0()[1], 2f64.sqrt());
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(BasisFamily::laguerre(0, 1.0).is_err());
        assert!(BasisFamily::laguerre(3, 0.0).is_err());
        assert!(BasisFamily::laguerre(3, -1.0).is_err());
    }

    #[test]
    fn eval_matches_runge_kutta() {
        let b = BasisFamily::laguerre(3, 1.0).unwrap();
        let y0 = DMatrix::from_column_slice(3, 1, b.tau0().as_slice());
        let rk = rk4(b.generator(), &y0, 2.0, 4000);
        let tau = b.eval(2.0);
        for i in 0..3 {
            assert!((rk[(i, 0)] - tau[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn exponential_matches_fundamental_matrix() {
        let b = BasisFamily::laguerre(2, 1.0).unwrap();
        let rk = rk4(b.generator(), &DMatrix::identity(2, 2), 0.5, 2000);
        let e = matrix_exponential(b.generator(), 0.5).unwrap();
        assert!(linalg::max_abs(&(rk - e)) < 1e-10);
    }

    #[test]
    fn shift_identities() {
        let b = BasisFamily::laguerre(1, 1.0).unwrap();
        let z = DVector::from_vec(vec![3.0]);
        assert_eq!(b.shift_coeffs(&z, 0.0), z);
        assert_relative_eq!(
            b.shift_coeffs(&z, 2.0)[0],
            3.0 * (-2.0f64).exp(),
            max_relative = 1e-14
        );

        let b4 = BasisFamily::laguerre(4, 1.0).unwrap();
        let z = DVector::from_vec(vec![0.3, -1.2, 0.7, 2.0, -0.5, 0.1, 0.9, -0.4]);
        let twice = b4.shift_coeffs(&b4.shift_coeffs(&z, 0.3), 0.7);
        let once = b4.shift_coeffs(&z, 1.0);
        assert!((twice - once).amax() < 1e-12);
    }

    #[test]
    fn gram_orthonormal_order_two() {
        let b = BasisFamily::laguerre(2, 1.0).unwrap();
        let t_end = truncation_time(&b, 1e-14).unwrap();
        let g = gram_quadrature(&b, t_end, QuadratureSpec::default());
        assert!(linalg::max_abs(&(g - DMatrix::identity(2, 2))) < 1e-10);
    }

    #[test]
    fn gram_closed_form_agrees_with_quadrature() {
        let b = BasisFamily::laguerre(4, 0.7).unwrap();
        let g1 = b.gram_closed_form(1.3);
        let g2 = gram_quadrature(&b, 1.3, QuadratureSpec::default());
        assert!(linalg::max_abs(&(g1 - g2)) < 1e-12);
    }

    #[test]
    fn order_four_norm_bound() {
        let b = BasisFamily::laguerre(4, 1.0).unwrap();
        assert_relative_eq!(b.tau0().norm_squared(), 8.0, epsilon = 1e-13);
        let times: Vec<f64> = (0..=50_000).map(|k| k as f64 * 1e-3).collect();
        let n0 = b.tau0().norm();
        for tau in b.eval_many(&times) {
            assert!(tau.norm() <= n0 * (1.0 + 1e-13));
        }
    }

    #[test]
    fn assumptions_hold_for_laguerre() {
        let rep = check_assumptions(
            &BasisFamily::laguerre(3, 1.0).unwrap(),
            &AssumptionGrid::default(),
        );
        assert!(rep.passed, "{rep:?}");
        assert!(rep.gram_error < 1e-6 && rep.ode_residual < 1e-6 && rep.identity_residual < 1e-6);

        let rep = check_assumptions(
            &BasisFamily::laguerre(1, 2.0).unwrap(),
            &AssumptionGrid::default(),
        );
        assert!(rep.gram_error < 1e-10);
    }

    #[test]
    fn scaled_family_fails_identity() {
        let b = BasisFamily::laguerre(3, 1.0).unwrap();
        let doubled =
            BasisFamily::from_parts(b.generator().clone(), b.tau0() * 2.0, 1.0, "scaled").unwrap();
        let rep = check_assumptions(&doubled, &AssumptionGrid::default());
        assert!(!rep.passed);
        // M + Mᵀ + 4τ0τ0ᵀ = 3τ0τ0ᵀ, entries 3·2 = 6
        assert_relative_eq!(rep.identity_residual, 6.0, epsilon = 1e-12);
    }

    #[test]
    fn coefficient_vector_blocks() {
        let b = BasisFamily::laguerre(2, 1.0).unwrap();
        let cv =
            CoefficientVector::new(DVector::from_vec(vec![1.0, 0.0, 0.0, 1.0]), 2, &b).unwrap();
        let v = cv.value_at(&b, 0.0);
        assert_relative_eq!(v[0], 2f64.sqrt());
        assert_relative_eq!(v[1], 2f64.sqrt());
        assert!(CoefficientVector::new(DVector::zeros(3), 2, &b).is_err());
    }
}
