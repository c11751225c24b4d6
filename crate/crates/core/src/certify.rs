//! Certification of `lo ≤ τ(t)ᵀc ≤ hi` on `[0, T_c]` by third-order Taylor
//! envelopes.
//!
//! On a segment starting at `t₀` the row coefficients are shifted to
//! `c₀ = exp(Mᵀt₀) c` so that the signal reads `f(δ) = τ(δ)ᵀ c₀`. With
//! `f_k = τ(0)ᵀ(Mᵀ)ᵏc₀` and `R = sup|τ|·|(Mᵀ)³c₀|`,
//!
//! ```text
//!     b_l(δ) = f₀ + f₁δ + f₂δ²/2 − Rδ³/6  ≤  f(δ)  ≤  b_u(δ) = … + Rδ³/6 .
//! ```
//!
//! A violation is declared only when an envelope proves it, so every witness
//! is a true violation. Otherwise the segment is advanced to the first time
//! an envelope reaches a bound.

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisFamily;
use crate::horizon;
use crate::linalg;
use crate::qp::{Side, SiqProblem};

/// Bound on `sup_t |τ(t)|`: `|τ(0)|` when `|τ|` is non-increasing
/// (`M + Mᵀ ⪯ 0`), otherwise `√C2` from the decay envelope.
pub fn tau_norm_bound(basis: &BasisFamily) -> f64 {
    let m = basis.generator();
    let (_, top) = linalg::sym_eig_range(&(m + m.transpose()));
    if top <= 1e-12 * linalg::spectral_norm(m).max(1.0) {
        basis.tau0().norm()
    } else {
        horizon::decay_envelope(basis)
            .map(|(c2, _)| c2.sqrt())
            .unwrap_or(f64::INFINITY)
    }
}

/// Third-derivative bound `R(c) = sup|τ|·|(Mᵀ)³c|`.
pub fn remainder_bound(basis: &BasisFamily, coeffs: &DVector<f64>) -> f64 {
    remainder_with(basis, coeffs, tau_norm_bound(basis))
}

fn remainder_with(basis: &BasisFamily, coeffs: &DVector<f64>, tau_sup: f64) -> f64 {
    let mt = basis.generator().transpose();
    let c3 = &mt * (&mt * (&mt * coeffs));
    tau_sup * c3.norm()
}

/// Cubic `p₀ + p₁δ + p₂δ² + p₃δ³`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cubic(pub [f64; 4]);

impl Cubic {
    pub fn eval(&self, x: f64) -> f64 {
        let [a, b, c, d] = self.0;
        ((d * x + c) * x + b) * x + a
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let [_, b, c, d] = self.0;
        (3.0 * d * x + 2.0 * c) * x + b
    }

    /// Sorted positive real roots of the derivative.
    fn critical_points(&self) -> Vec<f64> {
        let [_, b, c, d] = self.0;
        let mut out = quadratic_roots(3.0 * d, 2.0 * c, b);
        out.retain(|&x| x > 0.0);
        out
    }

    /// Smallest root in `(0, limit]`, if any.
    pub fn first_root(&self, limit: f64) -> Option<f64> {
        let mut knots = self.critical_points();
        knots.retain(|&x| x < limit);
        knots.push(limit);
        let mut lo = 0.0;
        let mut f_lo = self.eval(0.0);
        for hi in knots {
            let f_hi = self.eval(hi);
            if f_hi == 0.0 && hi > 0.0 {
                return Some(hi);
            }
            if f_lo.signum() != f_hi.signum() && f_lo != 0.0 {
                return Some(self.bracketed_root(lo, hi, f_lo));
            }
            lo = hi;
            f_lo = f_hi;
        }
        None
    }

    /// The function is monotone on `[lo, hi]` with a sign change.
    fn bracketed_root(&self, mut lo: f64, mut hi: f64, f_lo: f64) -> f64 {
        let s_lo = f_lo.signum();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.eval(mid).signum() == s_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // the lower end keeps the sign of f(0), so the envelope has not
        // crossed yet
        lo
    }
}

/// Real roots of `a x² + b x + c`, degenerating gracefully.
fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return vec![];
    }
    if a.abs() <= 1e-14 * scale {
        if b == 0.0 {
            return vec![];
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mut r = if q == 0.0 {
        vec![0.0]
    } else {
        vec![q / a, c / q]
    };
    r.sort_by(f64::total_cmp);
    r
}

/// Envelope data of one segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelopes {
    pub f0: f64,
    pub f1: f64,
    pub f2: f64,
    pub r: f64,
    pub lower: Cubic,
    pub upper: Cubic,
}

/// Lower and upper Taylor envelopes of `τ(δ)ᵀc` with remainder `r`.
pub fn taylor_envelopes(basis: &BasisFamily, coeffs: &DVector<f64>, r: f64) -> Envelopes {
    let mt = basis.generator().transpose();
    let tau0 = basis.tau0();
    let d1 = &mt * coeffs;
    let d2 = &mt * &d1;
    let f0 = tau0.dot(coeffs);
    let f1 = tau0.dot(&d1);
    let f2 = tau0.dot(&d2);
    Envelopes {
        f0,
        f1,
        f2,
        r,
        lower: Cubic([f0, f1, 0.5 * f2, -r / 6.0]),
        upper: Cubic([f0, f1, 0.5 * f2, r / 6.0]),
    }
}

/// Stationary point of the envelope that moves toward a bound: the maximizer
/// `t_u` of `b_l` when `f₁ ≥ 0`, the minimizer `t_l` of `b_u` when `f₁ < 0`.
pub fn stationary_candidate(f1: f64, f2: f64, r: f64) -> Option<(Side, f64)> {
    if r >= 1e-14 {
        if f1 >= 0.0 {
            let t = (f2 + (f2 * f2 + 2.0 * r * f1).sqrt()) / r;
            (t >= 0.0).then_some((Side::Upper, t))
        } else {
            let t = (-f2 + (f2 * f2 - 2.0 * r * f1).sqrt()) / r;
            (t >= 0.0).then_some((Side::Lower, t))
        }
    } else {
        // f₀ + f₁δ + f₂δ²/2: vertex when it is an extremum ahead of us
        let side = if f1 >= 0.0 { Side::Upper } else { Side::Lower };
        if f2 != 0.0 && f1 * f2 < 0.0 {
            Some((side, -f1 / f2))
        } else if f1 == 0.0 {
            Some((side, 0.0))
        } else {
            None
        }
    }
}

/// First time in `(0, remaining]` at which an envelope reaches a bound,
/// floored at `delta_min` and clamped to `remaining`.
pub fn safe_advance(env: &Envelopes, lo: f64, hi: f64, remaining: f64, delta_min: f64) -> f64 {
    let up = Cubic([
        env.upper.0[0] - hi,
        env.upper.0[1],
        env.upper.0[2],
        env.upper.0[3],
    ]);
    let dn = Cubic([
        env.lower.0[0] - lo,
        env.lower.0[1],
        env.lower.0[2],
        env.lower.0[3],
    ]);
    let mut t = remaining;
    if hi.is_finite() {
        if let Some(r) = up.first_root(remaining) {
            t = t.min(r);
        }
    }
    if lo.is_finite() {
        if let Some(r) = dn.first_root(remaining) {
            t = t.min(r);
        }
    }
    t.max(delta_min).min(remaining)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertOptions {
    /// Quick-check factor γ ∈ (0, 1); `None` disables the check.
    pub gamma: Option<f64>,
    /// Minimum advance as a fraction of the horizon.
    pub min_step_rel: f64,
    /// Evaluate the actual signal at the stationary candidate as well as the
    /// envelope (catches violations a segment earlier).
    pub probe_candidates: bool,
}

impl Default for CertOptions {
    fn default() -> Self {
        Self {
            gamma: None,
            min_step_rel: 1e-9,
            probe_candidates: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub t: f64,
    pub row: usize,
    pub value: f64,
    pub bound: f64,
    pub side: Side,
}

impl Violation {
    pub fn magnitude(&self) -> f64 {
        match self.side {
            Side::Upper => self.value - self.bound,
            Side::Lower => self.bound - self.value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Satisfied,
    Violated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertResult {
    pub outcome: Outcome,
    /// Worst witness over all rows (largest magnitude, earliest on ties).
    pub violation: Option<Violation>,
    /// One entry per violated row.
    pub row_violations: Vec<Violation>,
    pub segments: usize,
}

impl CertResult {
    pub fn is_satisfied(&self) -> bool {
        self.outcome == Outcome::Satisfied
    }
}

/// Per-row result of [`certify_row`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowCert {
    pub violation: Option<Violation>,
    pub segments: usize,
}

/// Certifies one scalar signal `τ(t)ᵀc` against `[lo, hi]` on `[0, t_end]`.
pub fn certify_row(
    basis: &BasisFamily,
    coeffs: &DVector<f64>,
    row: usize,
    lo: f64,
    hi: f64,
    t_end: f64,
    opts: &CertOptions,
) -> RowCert {
    let tau_sup = tau_norm_bound(basis);
    certify_row_with(basis, coeffs, row, lo, hi, t_end, opts, tau_sup)
}

#[allow(clippy::too_many_arguments)]
fn certify_row_with(
    basis: &BasisFamily,
    coeffs: &DVector<f64>,
    row: usize,
    lo: f64,
    hi: f64,
    t_end: f64,
    opts: &CertOptions,
    tau_sup: f64,
) -> RowCert {
    let delta_min = opts.min_step_rel * t_end;
    let mt = basis.generator().transpose();
    let tau0_norm = basis.tau0().norm();
    let value_at = |t: f64| basis.eval(t).dot(coeffs);
    let witness = |t: f64, side: Side| {
        let value = value_at(t);
        let bound = match side {
            Side::Upper => hi,
            Side::Lower => lo,
        };
        Violation {
            t,
            row,
            value,
            bound,
            side,
        }
    };
    let breaks = |v: &Violation| v.magnitude() > 0.0;

    let mut t0 = 0.0;
    let mut c0 = coeffs.clone();
    let mut segments = 0usize;
    // exp(Mᵀδ) for the last step length, reused when steps repeat
    let mut step_cache: Option<(f64, DMatrix<f64>)> = None;
    loop {
        let remaining = t_end - t0;
        let env = taylor_envelopes(basis, &c0, remainder_with(basis, &c0, tau_sup));
        if env.f0 > hi {
            let w = witness(t0, Side::Upper);
            if breaks(&w) {
                return RowCert {
                    violation: Some(w),
                    segments,
                };
            }
        }
        if env.f0 < lo {
            let w = witness(t0, Side::Lower);
            if breaks(&w) {
                return RowCert {
                    violation: Some(w),
                    segments,
                };
            }
        }
        if remaining <= 0.0 {
            break;
        }

        let mut step = None;
        if let Some(gamma) = opts.gamma {
            let l1 = tau0_norm * (&mt * &c0).norm();
            let tight = env.f0 <= gamma * hi && env.f0 >= gamma * lo;
            if tight && l1 > 0.0 {
                let look = ((1.0 - gamma) * lo.abs().min(hi.abs()) / l1).min(remaining);
                if look >= delta_min {
                    step = Some(look);
                }
            } else if tight {
                step = Some(remaining);
            }
        }

        let step = match step {
            Some(s) => s,
            None => {
                if let Some((side, tc)) = stationary_candidate(env.f1, env.f2, env.r) {
                    if tc > 0.0 && tc <= remaining {
                        let proven = match side {
                            Side::Upper => env.lower.eval(tc) > hi,
                            Side::Lower => env.upper.eval(tc) < lo,
                        };
                        let w = witness(t0 + tc, side);
                        if (proven || opts.probe_candidates) && breaks(&w) {
                            return RowCert {
                                violation: Some(w),
                                segments,
                            };
                        }
                    }
                }
                safe_advance(&env, lo, hi, remaining, delta_min)
            }
        };

        let phi = match &step_cache {
            Some((d, m)) if *d == step => m.clone(),
            _ => {
                let m = basis.transition(step).transpose();
                step_cache = Some((step, m.clone()));
                m
            }
        };
        c0 = phi * c0;
        segments += 1;
        t0 = if step >= remaining { t_end } else { t0 + step };
    }
    RowCert {
        violation: None,
        segments,
    }
}

/// Certifies every constraint row of `z` against `[lo, hi]` on `[0, T_c]`.
pub fn certify_bounds(
    problem: &SiqProblem,
    z: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    opts: &CertOptions,
) -> CertResult {
    let tau_sup = tau_norm_bound(&problem.basis);
    let mut segments = 0;
    let mut row_violations = vec![];
    for row in 0..problem.n_rows() {
        let c = problem.row_coeffs(z, row);
        let r = certify_row_with(
            &problem.basis,
            &c,
            row,
            lo[row],
            hi[row],
            problem.t_c,
            opts,
            tau_sup,
        );
        segments += r.segments;
        row_violations.extend(r.violation);
    }
    let violation = worst_violation(&row_violations);
    CertResult {
        outcome: if violation.is_some() {
            Outcome::Violated
        } else {
            Outcome::Satisfied
        },
        violation,
        row_violations,
        segments,
    }
}

/// Certifies `z` against the problem bounds widened by `eps`.
pub fn certify(problem: &SiqProblem, z: &DVector<f64>, eps: f64, gamma: Option<f64>) -> CertResult {
    let lo = problem.l_b.add_scalar(-eps);
    let hi = problem.l_u.add_scalar(eps);
    let opts = CertOptions {
        gamma,
        ..CertOptions::default()
    };
    certify_bounds(problem, z, &lo, &hi, &opts)
}

/// Largest magnitude; ties go to the earlier instant.
pub fn worst_violation(vs: &[Violation]) -> Option<Violation> {
    vs.iter()
        .copied()
        .fold(None, |best: Option<Violation>, v| match best {
            None => Some(v),
            Some(b) => {
                let (mv, mb) = (v.magnitude(), b.magnitude());
                if mv > mb || (mv == mb && v.t < b.t) {
                    Some(v)
                } else {
                    Some(b)
                }
            }
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn remainder_examples() {
        let b = BasisFamily::laguerre(1, 1.0).unwrap();
        assert_eq!(remainder_bound(&b, &DVector::zeros(1)), 0.0);
        assert_relative_eq!(
            remainder_bound(&b, &DVector::from_vec(vec![1.0])),
            2f64.sqrt(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn remainder_dominates_third_derivative() {
        let b = BasisFamily::laguerre(3, 1.0).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let c = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let r = remainder_bound(&b, &c);
        let m3 = b.generator().pow(3);
        let mut tau = b.tau0().clone();
        let step = b.transition(1e-3);
        for _ in 0..=24_000 {
            assert!((&m3 * &tau).dot(&c).abs() <= r + 1e-12);
            tau = &step * tau;
        }
    }

    #[test]
    fn scalar_envelope_coefficients() {
        let b = BasisFamily::laguerre(1, 1.0).unwrap();
        let c = DVector::from_vec(vec![1.0]);
        let env = taylor_envelopes(&b, &c, remainder_bound(&b, &c));
        let s2 = 2f64.sqrt();
        assert_relative_eq!(env.f0, s2, epsilon = 1e-15);
        assert_relative_eq!(env.f1, -s2, epsilon = 1e-15);
        assert_relative_eq!(env.f2, s2, epsilon = 1e-15);
        assert_relative_eq!(env.r, s2, epsilon = 1e-15);
        for k in 0..=1000 {
            let t = k as f64 * 1e-3;
            let f = s2 * (-t).exp();
            assert!(env.lower.eval(t) <= f + 1e-15 && f <= env.upper.eval(t) + 1e-15);
        }
    }

    #[test]
    fn envelope_brackets_random_signal() {
        let b = BasisFamily::laguerre(4, 1.0).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let c = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let env = taylor_envelopes(&b, &c, remainder_bound(&b, &c));
            let step = b.transition(1e-4);
            let mut tau = b.tau0().clone();
            for k in 0..=2000 {
                let t = k as f64 * 1e-4;
                let f = tau.dot(&c);
                assert!(env.lower.eval(t) <= f + 1e-12 && f <= env.upper.eval(t) + 1e-12);
                tau = &step * tau;
            }
        }
    }

    #[test]
    fn stationary_examples() {
        assert_eq!(
            stationary_candidate(0.0, -1.0, 1.0),
            Some((Side::Upper, 0.0))
        );
        let (s, t) = stationary_candidate(1.0, 0.0, 2.0).unwrap();
        assert_eq!(s, Side::Upper);
        assert_relative_eq!(t, 1.0, epsilon = 1e-15);
        let (s, t) = stationary_candidate(-1.0, 0.0, 2.0).unwrap();
        assert_eq!(s, Side::Lower);
        assert_relative_eq!(t, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn safe_advance_examples() {
        let zero = Envelopes {
            f0: 0.0,
            f1: 0.0,
            f2: 0.0,
            r: 0.0,
            lower: Cubic([0.0; 4]),
            upper: Cubic([0.0; 4]),
        };
        assert_eq!(safe_advance(&zero, -1.0, 1.0, 3.5, 1e-9), 3.5);
        let cubic = Envelopes {
            f0: 1.0,
            f1: 0.0,
            f2: 0.0,
            r: 1.0,
            lower: Cubic([1.0, 0.0, 0.0, -1.0 / 6.0]),
            upper: Cubic([1.0, 0.0, 0.0, 1.0 / 6.0]),
        };
        let t = safe_advance(&cubic, -100.0, 2.0, 10.0, 1e-9);
        assert_relative_eq!(t, 6f64.cbrt(), epsilon = 1e-12);
        assert_eq!(safe_advance(&cubic, -100.0, 2.0, 1.0, 1e-9), 1.0);
    }

    #[test]
    fn zero_row_is_satisfied_in_one_segment() {
        let b = BasisFamily::laguerre(3, 1.0).unwrap();
        let r = certify_row(
            &b,
            &DVector::zeros(3),
            0,
            -1.0,
            1.0,
            20.0,
            &CertOptions::default(),
        );
        assert!(r.violation.is_none());
        assert_eq!(r.segments, 1);
    }

    #[test]
    fn detects_known_minimum() {
        let b = BasisFamily::laguerre(2, 1.0).unwrap();
        let c = DVector::from_vec(vec![0.0, 1.0]);
        let r = certify_row(&b, &c, 0, -0.5, 2.0, 8.81, &CertOptions::default());
        let v = r.violation.expect("violation");
        assert_eq!(v.side, Side::Lower);
        assert!(v.value < -0.5);
        assert!(v.t > 0.5 && v.t < 3.0, "{v:?}");
        assert_relative_eq!(v.value, b.eval(v.t).dot(&c), epsilon = 1e-12);
        // closed form minimum √2 e^{−t}(1 − 2t) at t = 3/2
        let min = -2.0 * 2f64.sqrt() * (-1.5f64).exp();
        assert_relative_eq!(min, -0.6311, epsilon = 1e-4);
        assert!(v.value >= min - 1e-12);

        let r = certify_row(&b, &c, 0, -0.7, 2.0, 8.81, &CertOptions::default());
        assert!(r.violation.is_none());
    }

    #[test]
    fn quick_check_keeps_soundness() {
        let b = BasisFamily::laguerre(2, 1.0).unwrap();
        let c = DVector::from_vec(vec![0.0, 1.0]);
        let opts = CertOptions {
            gamma: Some(0.9),
            ..CertOptions::default()
        };
        assert!(certify_row(&b, &c, 0, -0.5, 2.0, 8.81, &opts)
            .violation
            .is_some());
        assert!(certify_row(&b, &c, 0, -0.7, 2.0, 8.81, &opts)
            .violation
            .is_none());
    }

    #[test]
    fn worst_violation_rules() {
        let v = |t, value| Violation {
            t,
            row: 0,
            value,
            bound: 1.0,
            side: Side::Upper,
        };
        assert_eq!(worst_violation(&[v(1.0, 1.3), v(2.0, 1.5)]).unwrap().t, 2.0);
        assert_eq!(worst_violation(&[v(3.0, 1.5), v(2.0, 1.5)]).unwrap().t, 2.0);
        assert!(worst_violation(&[]).is_none());
    }

    #[test]
    fn first_root_handles_double_roots() {
        // (x − 1)² (x + 1) touches zero at 1 without crossing
        let c = Cubic([1.0, -1.0, -1.0, 1.0]);
        assert!(c.first_root(0.5).is_none());
        let r = c.first_root(3.0).unwrap();
        assert!((r - 1.0).abs() < 1e-6, "{r}");
    }
}
