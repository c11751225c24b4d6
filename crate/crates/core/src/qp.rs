//! Range-space active-set kernel for quadratic programs of the form
//!
//! ```text
//!     minimize    zᵀ H z
//!     subject to  A_eq z = b_eq
//!                 lo_i ≤ n_iᵀ z ≤ hi_i      for finitely many candidates i
//! ```
//!
//! The equality constraints are eliminated once through
//! `Ĥ = H⁻¹A_eqᵀ(A_eq H⁻¹A_eqᵀ)⁻¹A_eq H⁻¹ − H⁻¹` and
//! `b̂ = H⁻¹A_eqᵀ(A_eq H⁻¹A_eqᵀ)⁻¹ b_eq`. For a working set of active
//! inequalities with signed normals `n_j` and levels `l_j` the optimizer is
//! `z = b̂ + Ĥ Σ μ_j n_j` with `S μ = l − N b̂`, where `S_ij = n_iᵀ Ĥ n_j` is
//! negative definite. `S` is kept as an `LDLᵀ` factorization that is bordered
//! on insertion and downdated by a rank-1 update on removal.
//!
//! Inequalities are added by a dual (Goldfarb–Idnani style) iteration: start
//! from a dual-feasible working set, add the most violated candidate, and drop
//! entries whose multiplier would turn negative. The objective never
//! decreases, which matches the outer constraint-sampling loop.

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisFamily;
use crate::error::{Error, Result};
use crate::linalg;

/// Which side of a two-sided row constraint is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Upper,
    Lower,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Upper => 1.0,
            Side::Lower => -1.0,
        }
    }
}

/// A finite inequality `lo ≤ normalᵀ z ≤ hi` tagged with its sampling instant
/// and constraint row.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub t: f64,
    pub row: usize,
    pub normal: DVector<f64>,
    pub lo: f64,
    pub hi: f64,
}

/// One active inequality: `signed_normalᵀ z = level` with `signed_normal =
/// ±normal` and `level = hi` or `−lo`.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingEntry {
    pub t: f64,
    pub row: usize,
    pub side: Side,
    pub signed_normal: DVector<f64>,
    pub level: f64,
}

impl WorkingEntry {
    pub fn from_candidate(c: &Candidate, side: Side) -> Self {
        let (signed_normal, level) = match side {
            Side::Upper => (c.normal.clone(), c.hi),
            Side::Lower => (-&c.normal, -c.lo),
        };
        Self {
            t: c.t,
            row: c.row,
            side,
            signed_normal,
            level,
        }
    }

    fn same_constraint(&self, t: f64, row: usize, side: Side) -> bool {
        self.t == t && self.row == row && self.side == side
    }
}

/// Equality elimination data shared by every solve on one problem.
#[derive(Debug, Clone)]
pub struct RangeSpaceCache {
    pub h: DMatrix<f64>,
    pub h_hat: DMatrix<f64>,
    pub b_hat: DVector<f64>,
    /// `H⁻¹A_eqᵀ(A_eq H⁻¹A_eqᵀ)⁻¹`, so that `b̂ = K b_eq`.
    gain: DMatrix<f64>,
    a_eq: DMatrix<f64>,
    b_eq: DVector<f64>,
}

impl RangeSpaceCache {
    pub fn new(h: &DMatrix<f64>, a_eq: &DMatrix<f64>, b_eq: &DVector<f64>) -> Result<Self> {
        let d = h.nrows();
        if !h.is_square() || a_eq.ncols() != d || a_eq.nrows() != b_eq.len() {
            return Err(Error::InvalidArgument(
                "range-space cache: shape mismatch".into(),
            ));
        }
        let chol = h
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("Hessian is not positive definite".into()))?;
        let h_inv = chol.inverse();
        let (h_hat, gain) = if a_eq.nrows() == 0 {
            (-&h_inv, DMatrix::zeros(d, 0))
        } else {
            let hia = &h_inv * a_eq.transpose();
            let w = a_eq * &hia;
            let w = (&w + w.transpose()) * 0.5;
            let scale = w.diagonal().amax().max(f64::MIN_POSITIVE);
            let wchol = w
                .clone()
                .cholesky()
                .ok_or_else(|| Error::RankDeficient("A_eq H⁻¹ A_eqᵀ is singular".into()))?;
            let l = wchol.l();
            let min_pivot = l
                .diagonal()
                .iter()
                .map(|v| v * v)
                .fold(f64::INFINITY, f64::min);
            if min_pivot < 1e-12 * scale {
                return Err(Error::RankDeficient(format!(
                    "A_eq H⁻¹ A_eqᵀ nearly singular (pivot {min_pivot:e}, scale {scale:e})"
                )));
            }
            let gain = &hia * wchol.inverse();
            let h_hat = &gain * hia.transpose() - &h_inv;
            ((&h_hat + h_hat.transpose()) * 0.5, gain)
        };
        let b_hat = &gain * b_eq;
        Ok(Self {
            h: h.clone(),
            h_hat,
            b_hat,
            gain,
            a_eq: a_eq.clone(),
            b_eq: b_eq.clone(),
        })
    }

    /// Same problem with a different equality right-hand side.
    pub fn with_rhs(&self, b_eq: &DVector<f64>) -> Self {
        let mut out = self.clone();
        out.b_hat = &self.gain * b_eq;
        out.b_eq = b_eq.clone();
        out
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn a_eq(&self) -> &DMatrix<f64> {
        &self.a_eq
    }

    pub fn b_eq(&self) -> &DVector<f64> {
        &self.b_eq
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        z.dot(&(&self.h * z))
    }
}

/// Active entries together with the `LDLᵀ` factors of their dual Schur matrix.
#[derive(Debug, Clone, Default)]
pub struct WorkingSet {
    entries: Vec<WorkingEntry>,
    /// `Ĥ n_j` for every entry.
    h_normals: Vec<DVector<f64>>,
    /// Strict lower triangle of the unit factor, row by row.
    lower: Vec<Vec<f64>>,
    diag: Vec<f64>,
}

/// Pivots below this (relative) magnitude are treated as singular.
pub const PIVOT_TOL: f64 = 1e-11;

impl WorkingSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[WorkingEntry] {
        &self.entries
    }

    pub fn contains(&self, t: f64, row: usize, side: Side) -> bool {
        self.entries.iter().any(|e| e.same_constraint(t, row, side))
    }

    fn pivot_scale(&self, diag: f64) -> f64 {
        self.diag
            .iter()
            .fold(diag.abs(), |acc, d| acc.max(d.abs()))
            .max(1.0)
    }

    /// Borders the factorization with one more entry.
    pub fn add(&mut self, entry: WorkingEntry, cache: &RangeSpaceCache) -> Result<()> {
        if entry.signed_normal.len() != cache.dim() {
            return Err(Error::InvalidArgument(
                "working entry has wrong dimension".into(),
            ));
        }
        let hn = &cache.h_hat * &entry.signed_normal;
        let col: Vec<f64> = self
            .entries
            .iter()
            .map(|e| e.signed_normal.dot(&hn))
            .collect();
        let diag = entry.signed_normal.dot(&hn);
        let k = self.entries.len();
        let mut row = vec![0.0; k];
        for j in 0..k {
            let mut acc = col[j];
            for i in 0..j {
                acc -= row[i] * self.diag[i] * self.lower[j][i];
            }
            row[j] = acc / self.diag[j];
        }
        let pivot = diag
            - row
                .iter()
                .zip(&self.diag)
                .map(|(l, d)| l * l * d)
                .sum::<f64>();
        if pivot.abs() >= PIVOT_TOL * self.pivot_scale(diag) && pivot < 0.0 {
            self.entries.push(entry);
            self.h_normals.push(hn);
            self.lower.push(row);
            self.diag.push(pivot);
            return Ok(());
        }
        // incremental pivot is unreliable: retry from scratch
        let mut trial = self.clone();
        trial.entries.push(entry);
        trial.h_normals.push(hn);
        trial.refactor()?;
        *self = trial;
        Ok(())
    }

    /// Removes entry `index`, downdating the trailing factor.
    pub fn drop(&mut self, index: usize) -> Result<WorkingEntry> {
        let k = self.entries.len();
        if index >= k {
            return Err(Error::InvalidArgument(format!(
                "cannot drop entry {index} from a working set of size {k}"
            )));
        }
        let mut alpha = self.diag[index];
        let mut w: Vec<f64> = ((index + 1)..k).map(|r| self.lower[r][index]).collect();
        let removed = self.entries.remove(index);
        self.h_normals.remove(index);
        self.lower.remove(index);
        self.diag.remove(index);
        for r in index..self.lower.len() {
            self.lower[r].remove(index);
        }
        // rank-1 update L₃ D₃ L₃ᵀ + α w wᵀ of the trailing block
        let n3 = w.len();
        for j in 0..n3 {
            let jj = index + j;
            let p = w[j];
            let d_old = self.diag[jj];
            let d_new = d_old + alpha * p * p;
            let beta = p * alpha / d_new;
            alpha *= d_old / d_new;
            self.diag[jj] = d_new;
            for r in (j + 1)..n3 {
                let rr = index + r;
                w[r] -= p * self.lower[rr][jj];
                self.lower[rr][jj] += beta * w[r];
            }
        }
        Ok(removed)
    }

    /// Recomputes the factorization of `S` from scratch.
    pub fn refactor(&mut self) -> Result<()> {
        let s = self.schur_matrix();
        let k = s.nrows();
        let mut lower: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut diag: Vec<f64> = Vec::with_capacity(k);
        let scale = s.diagonal().amax().max(1.0);
        for j in 0..k {
            let mut row = vec![0.0; j];
            for i in 0..j {
                let mut acc = s[(j, i)];
                for m in 0..i {
                    acc -= row[m] * diag[m] * lower[i][m];
                }
                row[i] = acc / diag[i];
            }
            let pivot = s[(j, j)] - row.iter().zip(&diag).map(|(l, d)| l * l * d).sum::<f64>();
            if !(pivot < 0.0) || pivot.abs() < PIVOT_TOL * scale {
                return Err(Error::DegenerateWorkingSet(format!(
                    "Schur pivot {pivot:e} at position {j}"
                )));
            }
            lower.push(row);
            diag.push(pivot);
        }
        self.lower = lower;
        self.diag = diag;
        Ok(())
    }

    /// `S` rebuilt from the entries.
    pub fn schur_matrix(&self) -> DMatrix<f64> {
        let k = self.entries.len();
        DMatrix::from_fn(k, k, |i, j| {
            self.entries[i].signed_normal.dot(&self.h_normals[j])
        })
    }

    /// Unit lower factor `L` and diagonal `D`.
    pub fn factors(&self) -> (DMatrix<f64>, DVector<f64>) {
        let k = self.entries.len();
        let l = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                1.0
            } else if j < i {
                self.lower[i][j]
            } else {
                0.0
            }
        });
        (l, DVector::from_vec(self.diag.clone()))
    }

    /// `L D Lᵀ` reassembled from the stored factors.
    pub fn factor_product(&self) -> DMatrix<f64> {
        let (l, d) = self.factors();
        &l * DMatrix::from_diagonal(&d) * l.transpose()
    }

    /// Solves `S x = rhs` with the stored factors.
    pub fn solve_schur(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let k = self.entries.len();
        let mut y = rhs.clone();
        for i in 0..k {
            for j in 0..i {
                y[i] -= self.lower[i][j] * y[j];
            }
        }
        for i in 0..k {
            y[i] /= self.diag[i];
        }
        for i in (0..k).rev() {
            for j in (i + 1)..k {
                y[i] -= self.lower[j][i] * y[j];
            }
        }
        y
    }
}

/// Optimizer for the current working set, all entries treated as equalities.
pub fn solve_working_set(cache: &RangeSpaceCache, ws: &WorkingSet) -> (DVector<f64>, DVector<f64>) {
    let k = ws.len();
    if k == 0 {
        return (cache.b_hat.clone(), DVector::zeros(0));
    }
    let rhs = DVector::from_fn(k, |j, _| {
        let e = &ws.entries[j];
        e.level - e.signed_normal.dot(&cache.b_hat)
    });
    let mu = ws.solve_schur(&rhs);
    let mut z = cache.b_hat.clone();
    for (m, hn) in mu.iter().zip(&ws.h_normals) {
        z.axpy(*m, hn, 1.0);
    }
    (z, mu)
}

/// Outcome of a finite solve.
#[derive(Debug, Clone)]
pub struct FiniteSolution {
    pub z: DVector<f64>,
    pub objective: f64,
    pub working_set: WorkingSet,
    /// Multipliers aligned with `working_set.entries()`.
    pub multipliers: DVector<f64>,
    pub iterations: usize,
    /// Objective after every primal change.
    pub objective_trace: Vec<f64>,
}

impl FiniteSolution {
    /// Sampling instants that carry an active entry.
    pub fn active_times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.working_set.entries().iter().map(|e| e.t).collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KernelOptions {
    /// Absolute tolerance on candidate violations.
    pub feas_tol: f64,
    pub max_iter: usize,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

fn violation(c: &Candidate, z: &DVector<f64>) -> (f64, Side) {
    let v = c.normal.dot(z);
    let up = v - c.hi;
    let lo = c.lo - v;
    if up >= lo {
        (up, Side::Upper)
    } else {
        (lo, Side::Lower)
    }
}

/// Dual active-set solve over a finite candidate list, warm-started from
/// `ws` (entries are first made dual feasible by dropping negative
/// multipliers).
pub fn solve_finite(
    cache: &RangeSpaceCache,
    candidates: &[Candidate],
    mut ws: WorkingSet,
    opts: KernelOptions,
) -> Result<FiniteSolution> {
    let (mut z, mut mu) = solve_working_set(cache, &ws);
    while let Some((j, m)) = mu
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(j, m)| (j, *m))
    {
        if m >= 0.0 {
            break;
        }
        ws.drop(j)?;
        (z, mu) = solve_working_set(cache, &ws);
    }
    let mut trace = vec![cache.objective(&z)];
    let mut iterations = 0usize;
    let mut stalled = 0usize;
    let mut best = trace[0];

    loop {
        let bland = stalled > 3 * (cache.dim() + ws.len());
        let mut pick: Option<(usize, Side, f64)> = None;
        for (i, c) in candidates.iter().enumerate() {
            let (v, side) = violation(c, &z);
            let tol = opts.feas_tol * (1.0 + c.hi.abs().min(c.lo.abs()).min(1e6));
            if v <= tol || ws.contains(c.t, c.row, side) {
                continue;
            }
            if bland {
                pick = Some((i, side, v));
                break;
            }
            if pick.is_none_or(|(_, _, best_v)| v > best_v) {
                pick = Some((i, side, v));
            }
        }
        let Some((ci, side, _)) = pick else {
            break;
        };
        let entry = WorkingEntry::from_candidate(&candidates[ci], side);
        let hn_p = &cache.h_hat * &entry.signed_normal;
        let mut mu_p = 0.0;

        loop {
            iterations += 1;
            if iterations > opts.max_iter {
                return Err(Error::Unconverged { iterations });
            }
            let k = ws.len();
            let proj = DVector::from_fn(k, |j, _| ws.entries[j].signed_normal.dot(&hn_p));
            let r = ws.solve_schur(&proj);
            let mut dz = hn_p.clone();
            for (rj, hn) in r.iter().zip(&ws.h_normals) {
                dz.axpy(-rj, hn, 1.0);
            }
            let curvature = entry.signed_normal.dot(&dz);
            let gap = entry.signed_normal.dot(&z) - entry.level;
            // the curvature is the pivot `add` would produce, so the same
            // threshold decides whether the candidate is independent
            let curv_scale = ws.pivot_scale(entry.signed_normal.dot(&hn_p));
            let t_full = if curvature < -PIVOT_TOL * curv_scale {
                (gap / -curvature).max(0.0)
            } else {
                f64::INFINITY
            };
            let mut t_part = f64::INFINITY;
            let mut drop_idx = None;
            for j in 0..k {
                if r[j] > 0.0 {
                    let tj = (mu[j] / r[j]).max(0.0);
                    if tj < t_part {
                        t_part = tj;
                        drop_idx = Some(j);
                    }
                }
            }
            if t_full.is_infinite() && t_part.is_infinite() {
                return Err(Error::Infeasible);
            }
            if t_full <= t_part {
                let t = t_full;
                z.axpy(t, &dz, 1.0);
                mu_p += t;
                let _ = mu_p;
                match ws.add(entry.clone(), cache) {
                    Ok(()) => {}
                    Err(Error::DegenerateWorkingSet(_)) => {
                        return Err(Error::DegenerateWorkingSet(
                            "candidate is dependent on the working set".into(),
                        ))
                    }
                    Err(e) => return Err(e),
                }
                (z, mu) = solve_working_set(cache, &ws);
                break;
            }
            let t = t_part;
            z.axpy(t, &dz, 1.0);
            mu_p += t;
            for j in 0..k {
                mu[j] -= t * r[j];
            }
            let j = drop_idx.expect("finite partial step has an index");
            ws.drop(j)?;
            mu = mu.remove_row(j);
            trace.push(cache.objective(&z));
        }
        let obj = cache.objective(&z);
        trace.push(obj);
        if obj > best * (1.0 + 1e-14) + 1e-300 {
            best = obj;
            stalled = 0;
        } else {
            stalled += 1;
        }
    }
    // the dual iteration keeps μ ≥ 0 up to rounding
    let objective = cache.objective(&z);
    Ok(FiniteSolution {
        z,
        objective,
        working_set: ws,
        multipliers: mu,
        iterations,
        objective_trace: trace,
    })
}

/// Residuals of the KKT conditions of a finite solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    pub equality: f64,
    pub active: f64,
    pub min_multiplier: f64,
    pub stationarity: f64,
    pub primal_violation: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.equality
            .max(self.active)
            .max(self.stationarity)
            .max(self.primal_violation)
            .max((-self.min_multiplier).max(0.0))
    }
}

/// KKT residuals, each scaled by the size of the data it involves. The
/// equality multipliers are recovered by least squares.
pub fn kkt_residuals(
    cache: &RangeSpaceCache,
    sol: &FiniteSolution,
    candidates: &[Candidate],
) -> KktReport {
    let z = &sol.z;
    let a = cache.a_eq();
    let eq_scale = 1.0 + cache.b_eq().amax();
    let equality = if a.nrows() == 0 {
        0.0
    } else {
        (a * z - cache.b_eq()).amax() / eq_scale
    };
    let mut active: f64 = 0.0;
    let mut grad = &cache.h * z;
    for (e, m) in sol.working_set.entries().iter().zip(sol.multipliers.iter()) {
        active = active.max((e.signed_normal.dot(z) - e.level).abs() / (1.0 + e.level.abs()));
        grad.axpy(*m, &e.signed_normal, 1.0);
    }
    let g_scale = 1.0 + (&cache.h * z).amax() + sol.multipliers.amax();
    let stationarity = if a.nrows() == 0 {
        grad.amax() / g_scale
    } else {
        let at = a.transpose();
        let nu = at
            .clone()
            .svd(true, true)
            .solve(&grad, 1e-14)
            .unwrap_or_else(|_| DVector::zeros(a.nrows()));
        (grad - at * nu).amax() / g_scale
    };
    let min_multiplier = sol
        .multipliers
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let primal_violation = candidates
        .iter()
        .map(|c| violation(c, z).0.max(0.0) / (1.0 + c.hi.abs().min(c.lo.abs()).min(1e6)))
        .fold(0.0, f64::max);
    KktReport {
        equality,
        active,
        min_multiplier: if min_multiplier.is_finite() {
            min_multiplier
        } else {
            0.0
        },
        stationarity,
        primal_violation,
    }
}

/// A quadratic program with a linear semi-infinite inequality
/// `l_b ≤ (I_{n_c} ⊗ τ(t))ᵀ C_z z ≤ l_u` for `t ∈ [0, T_c]`.
#[derive(Debug, Clone)]
pub struct SiqProblem {
    pub h: DMatrix<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub c_z: DMatrix<f64>,
    pub l_b: DVector<f64>,
    pub l_u: DVector<f64>,
    pub basis: BasisFamily,
    pub t_c: f64,
    /// Smallest eigenvalue of `H`.
    pub sigma: f64,
    /// Number of trailing `A_eq` rows that pin the initial state; the rows
    /// before them describe the dynamics alone.
    pub initial_rows: usize,
}

impl SiqProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        h: DMatrix<f64>,
        a_eq: DMatrix<f64>,
        b_eq: DVector<f64>,
        c_z: DMatrix<f64>,
        l_b: DVector<f64>,
        l_u: DVector<f64>,
        basis: BasisFamily,
        t_c: f64,
    ) -> Result<Self> {
        let d = h.nrows();
        let s = basis.order();
        let n_c = l_u.len();
        let dims = [
            (
                "H",
                h.ncols() == d,
                format!("{d}x{d}"),
                format!("{}x{}", h.nrows(), h.ncols()),
            ),
            (
                "A_eq",
                a_eq.ncols() == d && a_eq.nrows() == b_eq.len(),
                format!("{}x{d}", b_eq.len()),
                format!("{}x{}", a_eq.nrows(), a_eq.ncols()),
            ),
            (
                "C_z",
                c_z.ncols() == d && c_z.nrows() == n_c * s,
                format!("{}x{d}", n_c * s),
                format!("{}x{}", c_z.nrows(), c_z.ncols()),
            ),
            (
                "l_b",
                l_b.len() == n_c,
                format!("{n_c}"),
                format!("{}", l_b.len()),
            ),
        ];
        for (field, ok, expected, got) in dims {
            if !ok {
                return Err(Error::Dimension {
                    field: field.into(),
                    expected,
                    got,
                });
            }
        }
        if h.iter()
            .chain(a_eq.iter())
            .chain(b_eq.iter())
            .chain(c_z.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("problem data"));
        }
        if linalg::max_abs(&(&h - h.transpose())) > 1e-10 * (1.0 + linalg::max_abs(&h)) {
            return Err(Error::InvalidArgument("H is not symmetric".into()));
        }
        let (sigma, _) = linalg::sym_eig_range(&h);
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "H is not positive definite (smallest eigenvalue {sigma:e})"
            )));
        }
        if a_eq.nrows() > 0 && linalg::rank(&a_eq, 1e-10) < a_eq.nrows() {
            return Err(Error::RankDeficient(
                "A_eq does not have full row rank".into(),
            ));
        }
        for r in 0..n_c {
            if !(l_b[r] < 0.0 && l_u[r] > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "row {r}: bounds must satisfy l_b < 0 < l_u, got [{}, {}]",
                    l_b[r], l_u[r]
                )));
            }
        }
        if !(t_c > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "T_c must be positive, got {t_c}"
            )));
        }
        Ok(Self {
            h,
            a_eq,
            b_eq,
            c_z,
            l_b,
            l_u,
            basis,
            t_c,
            sigma,
            initial_rows: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    /// Marks the last `rows` equality rows as initial-condition rows.
    pub fn with_initial_rows(mut self, rows: usize) -> Self {
        assert!(
            rows <= self.a_eq.nrows(),
            "more initial rows than equality rows"
        );
        self.initial_rows = rows;
        self
    }

    /// Equality rows without the initial-condition block.
    pub fn dynamics_rows(&self) -> DMatrix<f64> {
        let keep = self.a_eq.nrows() - self.initial_rows;
        self.a_eq.rows(0, keep).into_owned()
    }

    pub fn n_rows(&self) -> usize {
        self.l_u.len()
    }

    /// Basis coefficients `(C_z z)` of row `row`.
    pub fn row_coeffs(&self, z: &DVector<f64>, row: usize) -> DVector<f64> {
        let s = self.basis.order();
        self.c_z.rows(row * s, s) * z
    }

    /// `C_zᵀ (e_row ⊗ τ)`.
    pub fn constraint_normal(&self, tau: &DVector<f64>, row: usize) -> DVector<f64> {
        let s = self.basis.order();
        self.c_z.rows(row * s, s).transpose() * tau
    }

    pub fn row_value(&self, z: &DVector<f64>, row: usize, t: f64) -> f64 {
        self.row_coeffs(z, row).dot(&self.basis.eval(t))
    }

    pub fn cache(&self) -> Result<RangeSpaceCache> {
        RangeSpaceCache::new(&self.h, &self.a_eq, &self.b_eq)
    }

    /// Candidates for every row at each sampling instant.
    pub fn candidates(&self, times: &[f64]) -> Vec<Candidate> {
        self.candidates_with_bounds(times, &self.l_b, &self.l_u)
    }

    pub fn candidates_with_bounds(
        &self,
        times: &[f64],
        lo: &DVector<f64>,
        hi: &DVector<f64>,
    ) -> Vec<Candidate> {
        let mut out = Vec::with_capacity(times.len() * self.n_rows());
        for &t in times {
            let tau = self.basis.eval(t);
            for row in 0..self.n_rows() {
                out.push(Candidate {
                    t,
                    row,
                    normal: self.constraint_normal(&tau, row),
                    lo: lo[row],
                    hi: hi[row],
                });
            }
        }
        out
    }
}

/// Solution of the QP restricted to finitely many sampling instants.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub objective: f64,
    pub active: Vec<WorkingEntry>,
    pub multipliers: DVector<f64>,
    pub kkt: KktReport,
}

/// Exact minimizer of the problem with the inequality imposed only at
/// `sample_times`.
pub fn active_set_qp(problem: &SiqProblem, sample_times: &[f64]) -> Result<QpSolution> {
    let cache = problem.cache()?;
    let candidates = problem.candidates(sample_times);
    let sol = solve_finite(
        &cache,
        &candidates,
        WorkingSet::new(),
        KernelOptions::default(),
    )?;
    let kkt = kkt_residuals(&cache, &sol, &candidates);
    Ok(QpSolution {
        z: sol.z.clone(),
        objective: sol.objective,
        active: sol.working_set.entries().to_vec(),
        multipliers: sol.multipliers,
        kkt,
    })
}
