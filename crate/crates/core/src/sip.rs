//! Constraint-sampling loop for the semi-infinite QP.
//!
//! Each outer iteration solves the QP with the inequality imposed at a finite
//! set of instants, certifies the result on `[0, T_c]`, and either stops or
//! adds the worst violation instant. Instants whose multipliers vanish are
//! removed. The finite solves are warm-started from the previous working set,
//! so the objective sequence is non-decreasing.

use nalgebra::DVector;

use crate::basis::BasisFamily;
use crate::certify::{self, CertResult, Violation};
use crate::error::{Error, Result};
use crate::linalg;
use crate::qp::{self, KernelOptions, KktReport, Side, SiqProblem, WorkingEntry, WorkingSet};

/// Multipliers at or below this magnitude mark an instant as inactive.
pub const INACTIVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Constraint-satisfaction tolerance in signal units.
    pub eps: f64,
    pub max_iter: usize,
    /// Quick-check factor for the certifier.
    pub gamma: Option<f64>,
    pub initial_samples: Vec<f64>,
    /// Constraints assumed active at the start, as `(t, row, side)`. Their
    /// instants are added to the samples; entries with negative multipliers
    /// are released by the first finite solve.
    pub initial_active: Vec<(f64, usize, Side)>,
    /// Move each witness to the nearby extremum of its row signal.
    pub refine_witness: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps: 1e-4,
            max_iter: 500,
            gamma: None,
            initial_samples: vec![0.0],
            initial_active: vec![],
            refine_witness: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "gamma must lie in (0, 1), got {g}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every outer iteration.
    pub j_seq: Vec<f64>,
    /// Primal iterate after every outer iteration.
    pub z_seq: Vec<DVector<f64>>,
    pub added_times: Vec<f64>,
    pub dropped_counts: Vec<usize>,
    /// Smallest violation of the unwidened bounds among the added instants.
    pub min_violation: Option<f64>,
    /// Iteration bound evaluated with `min_violation`.
    pub bound_value: Option<usize>,
    /// `sup |τ|²`.
    pub c_tau: f64,
    /// Largest squared row norm of `C_z`, which scales `c_tau` in the bound.
    pub c_row_sq: f64,
    pub sigma: f64,
    pub kernel_iterations: usize,
    /// Largest KKT residual of every finite solve.
    pub kkt_seq: Vec<f64>,
    pub final_cert: CertResult,
    pub kkt: KktReport,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub z: DVector<f64>,
    pub j: f64,
    pub samples: Vec<f64>,
    pub report: SolveReport,
}

/// Instant of the largest violation across rows, earliest on ties.
pub fn pick_violation(row_violations: &[Violation]) -> Option<f64> {
    certify::worst_violation(row_violations).map(|v| v.t)
}

/// Keeps the instants that carry a multiplier above [`INACTIVE_TOL`].
/// `active` lists `(t, μ)` pairs of the working set.
pub fn drop_inactive(samples: &[f64], active: &[(f64, f64)]) -> Vec<f64> {
    samples
        .iter()
        .copied()
        .filter(|&t| {
            active
                .iter()
                .any(|&(ta, mu)| ta == t && mu.abs() > INACTIVE_TOL)
        })
        .collect()
}

/// `ceil(4 c_τ (J_final − J₀) / (σ ε²))`.
pub fn iteration_bound(c_tau: f64, sigma: f64, j0: f64, j_final: f64, eps: f64) -> usize {
    let v = 4.0 * c_tau * (j_final - j0) / (sigma * eps * eps);
    if v <= 0.0 {
        0
    } else {
        v.ceil() as usize
    }
}

/// Moves `t` to the closest stationary point of `τ(t)ᵀc` by Newton steps on
/// the derivative, keeping it only if the signal is larger in magnitude.
pub fn refine_extremum(basis: &BasisFamily, coeffs: &DVector<f64>, t: f64, t_end: f64) -> f64 {
    let m = basis.generator();
    let value = |t: f64| basis.eval(t).dot(coeffs);
    let f_start = value(t);
    let mut x = t;
    for _ in 0..20 {
        let tau = basis.eval(x);
        let d1 = (m * &tau).dot(coeffs);
        let d2 = (m * (m * &tau)).dot(coeffs);
        if d2 == 0.0 {
            break;
        }
        let step = -d1 / d2;
        let next = (x + step).clamp(0.0, t_end);
        if (next - x).abs() <= 1e-14 * (1.0 + x) {
            x = next;
            break;
        }
        x = next;
    }
    if (x - t).abs() < 0.5 * t_end
        && value(x).abs() > f_start.abs()
        && value(x).signum() == f_start.signum()
    {
        x
    } else {
        t
    }
}

/// Runs the sampling loop to an `eps`-certified optimum.
pub fn solve(problem: &SiqProblem, config: &SolverConfig) -> Result<SolveOutcome> {
    config.validate()?;
    let cache = problem.cache()?;
    let tau_sup = certify::tau_norm_bound(&problem.basis);
    let c_tau = tau_sup * tau_sup;
    let s = problem.basis.order();
    let c_row_sq = (0..problem.n_rows())
        .map(|r| linalg::spectral_norm(&problem.c_z.rows(r * s, s).into_owned()).powi(2))
        .fold(0.0, f64::max);

    let mut samples: Vec<f64> = config.initial_samples.clone();
    samples.retain(|t| *t >= 0.0 && *t <= problem.t_c);
    let mut ws = WorkingSet::new();
    for &(t, row, side) in &config.initial_active {
        if !(0.0..=problem.t_c).contains(&t) || row >= problem.n_rows() || ws.contains(t, row, side)
        {
            continue;
        }
        let cand = &problem.candidates(&[t])[row];
        // dependent entries are simply left out
        let _ = ws.add(WorkingEntry::from_candidate(cand, side), &cache);
        if !samples.contains(&t) {
            samples.push(t);
        }
    }
    let mut j_seq = vec![];
    let mut z_seq = vec![];
    let mut added = vec![];
    let mut dropped_counts = vec![];
    let mut min_violation: Option<f64> = None;
    let mut kernel_iterations = 0;
    let mut kkt_seq = vec![];
    let kopts = KernelOptions::default();

    let mut iterations = 0;
    let mut converged = false;
    let mut last = None;
    while iterations < config.max_iter {
        iterations += 1;
        let candidates = problem.candidates(&samples);
        let sol = qp::solve_finite(&cache, &candidates, ws, kopts)?;
        kernel_iterations += sol.iterations;
        kkt_seq.push(qp::kkt_residuals(&cache, &sol, &candidates).max_residual());
        j_seq.push(sol.objective);
        z_seq.push(sol.z.clone());

        let active: Vec<(f64, f64)> = sol
            .working_set
            .entries()
            .iter()
            .zip(sol.multipliers.iter())
            .map(|(e, m)| (e.t, *m))
            .collect();
        let kept = drop_inactive(&samples, &active);
        dropped_counts.push(samples.len() - kept.len());
        samples = kept;
        // entries with vanishing multipliers do not move the optimizer
        ws = sol.working_set.clone();
        for j in (0..ws.len()).rev() {
            if sol.multipliers[j].abs() <= INACTIVE_TOL {
                ws.drop(j)?;
            }
        }

        let cert = certify::certify(problem, &sol.z, config.eps, config.gamma);
        let witness = cert.violation;
        last = Some((sol, candidates, cert));
        let Some(v) = witness else {
            converged = true;
            break;
        };
        let mut t = v.t;
        if config.refine_witness {
            let c = problem.row_coeffs(&last.as_ref().unwrap().0.z, v.row);
            t = refine_extremum(&problem.basis, &c, t, problem.t_c);
        }
        let true_bound = match v.side {
            Side::Upper => problem.l_u[v.row],
            Side::Lower => problem.l_b[v.row],
        };
        let mag = (v.value - true_bound).abs();
        min_violation = Some(min_violation.map_or(mag, |m: f64| m.min(mag)));
        if !samples.contains(&t) {
            samples.push(t);
        }
        added.push(t);
    }
    let (sol, candidates, final_cert) = last.expect("at least one iteration");
    let kkt = qp::kkt_residuals(&cache, &sol, &candidates);
    samples.sort_by(f64::total_cmp);
    let bound_value = min_violation.map(|e| {
        iteration_bound(
            c_tau * c_row_sq,
            problem.sigma,
            j_seq[0],
            *j_seq.last().unwrap(),
            e,
        )
    });
    let report = SolveReport {
        iterations,
        converged,
        j_seq,
        z_seq,
        added_times: added,
        dropped_counts,
        min_violation,
        bound_value,
        c_tau,
        c_row_sq,
        sigma: problem.sigma,
        kernel_iterations,
        kkt_seq,
        final_cert,
        kkt,
    };
    Ok(SolveOutcome {
        j: sol.objective,
        z: sol.z,
        samples,
        report,
    })
}
