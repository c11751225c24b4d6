//! Infinite-horizon MPC with basis-function parametrized state and input
//! trajectories.
//!
//! The predicted trajectories are `x̃(t) = (I_n ⊗ τ(t))ᵀη_x` and
//! `ũ(t) = (I_m ⊗ τ(t))ᵀη_u`. Dynamics hold exactly on the coefficients,
//! `(I_n ⊗ Mᵀ − A ⊗ I_s)η_x − (B ⊗ I_s)η_u = 0`, and orthonormality turns the
//! infinite-horizon cost into `η_xᵀ(Q ⊗ I_s)η_x + η_uᵀ(R ⊗ I_s)η_u`.

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisFamily;
use crate::error::{Error, Result};
use crate::horizon;
use crate::linalg::{self, kron, matrix_exponential};
use crate::qp::{Side, SiqProblem};
use crate::sip::{self, SolveOutcome, SolverConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c_x: DMatrix<f64>,
    pub c_u: DMatrix<f64>,
    /// Upper bounds of `C_x x + C_u u`.
    pub b_upper: DVector<f64>,
    /// Lower bounds; `None` means `−b_upper`.
    pub b_lower: Option<DVector<f64>>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

fn require_spd(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if linalg::max_abs(&(m - m.transpose())) > 1e-12 * (1.0 + linalg::max_abs(m)) {
        return Err(Error::InvalidArgument(format!("{name} is not symmetric")));
    }
    if m.clone().cholesky().is_none() {
        return Err(Error::InvalidArgument(format!(
            "{name} is not positive definite"
        )));
    }
    Ok(())
}

fn dim_err(field: &str, expected: String, got: String) -> Error {
    Error::Dimension {
        field: field.into(),
        expected,
        got,
    }
}

/// Hautus test on the modes with `Re λ ≥ 0`: `[A − λI, B]` must have full row
/// rank (checked on the real embedding of the complex matrix).
pub fn stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    let m = b.ncols();
    for ev in a.clone().complex_eigenvalues().iter() {
        if ev.re < -1e-10 {
            continue;
        }
        let mut big = DMatrix::zeros(2 * n, 2 * (n + m));
        let shifted = a - DMatrix::identity(n, n) * ev.re;
        let im = DMatrix::identity(n, n) * ev.im;
        big.view_mut((0, 0), (n, n)).copy_from(&shifted);
        big.view_mut((0, n), (n, n)).copy_from(&im);
        big.view_mut((n, 0), (n, n)).copy_from(&(-&im));
        big.view_mut((n, n), (n, n)).copy_from(&shifted);
        big.view_mut((0, 2 * n), (n, m)).copy_from(b);
        big.view_mut((n, 2 * n + m), (n, m)).copy_from(b);
        if linalg::rank(&big, 1e-10) < 2 * n {
            return false;
        }
    }
    true
}

impl PlantModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c_x: DMatrix<f64>,
        c_u: DMatrix<f64>,
        b_upper: DVector<f64>,
        b_lower: Option<DVector<f64>>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        let n_c = b_upper.len();
        if !a.is_square() {
            return Err(dim_err(
                "A",
                format!("{n}x{n}"),
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
        if b.nrows() != n {
            return Err(dim_err(
                "B",
                format!("{n}x{m}"),
                format!("{}x{}", b.nrows(), b.ncols()),
            ));
        }
        if c_x.shape() != (n_c, n) {
            return Err(dim_err(
                "C_x",
                format!("{n_c}x{n}"),
                format!("{}x{}", c_x.nrows(), c_x.ncols()),
            ));
        }
        if c_u.shape() != (n_c, m) {
            return Err(dim_err(
                "C_u",
                format!("{n_c}x{m}"),
                format!("{}x{}", c_u.nrows(), c_u.ncols()),
            ));
        }
        if q.shape() != (n, n) {
            return Err(dim_err(
                "Q",
                format!("{n}x{n}"),
                format!("{}x{}", q.nrows(), q.ncols()),
            ));
        }
        if r.shape() != (m, m) {
            return Err(dim_err(
                "R",
                format!("{m}x{m}"),
                format!("{}x{}", r.nrows(), r.ncols()),
            ));
        }
        if let Some(lo) = &b_lower {
            if lo.len() != n_c {
                return Err(dim_err(
                    "b_lower",
                    format!("{n_c}"),
                    format!("{}", lo.len()),
                ));
            }
        }
        let all = a
            .iter()
            .chain(b.iter())
            .chain(c_x.iter())
            .chain(c_u.iter())
            .chain(b_upper.iter())
            .chain(q.iter())
            .chain(r.iter())
            .chain(b_lower.iter().flat_map(|v| v.iter()));
        for v in all {
            if !v.is_finite() {
                return Err(Error::NonFinite("plant model"));
            }
        }
        require_spd("Q", &q)?;
        require_spd("R", &r)?;
        let lower = b_lower.clone().unwrap_or_else(|| -&b_upper);
        for i in 0..n_c {
            if !(b_upper[i] > 0.0 && lower[i] < 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "constraint row {i}: need lower < 0 < upper, got [{}, {}]",
                    lower[i], b_upper[i]
                )));
            }
        }
        if !stabilizable(&a, &b) {
            return Err(Error::InvalidArgument("(A, B) is not stabilizable".into()));
        }
        Ok(Self {
            a,
            b,
            c_x,
            c_u,
            b_upper,
            b_lower,
            q,
            r,
        })
    }

    /// `ẍ = u` with `|u| ≤ u_max`, `Q = I`, `R = 1`.
    pub fn double_integrator(u_max: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::zeros(1, 2),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, u_max),
            None,
            DMatrix::identity(2, 2),
            DMatrix::identity(1, 1),
        )
    }

    /// Scalar `ẋ = a x + b u` with `|u| ≤ u_max` and unit weights.
    pub fn scalar(a: f64, b: f64, u_max: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, u_max),
            None,
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
        )
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_c(&self) -> usize {
        self.b_upper.len()
    }

    pub fn lower(&self) -> DVector<f64> {
        self.b_lower.clone().unwrap_or_else(|| -&self.b_upper)
    }

    pub fn is_symmetric(&self) -> bool {
        match &self.b_lower {
            None => true,
            Some(lo) => lo
                .iter()
                .zip(self.b_upper.iter())
                .all(|(l, u)| (l + u).abs() <= 1e-15 * u.abs()),
        }
    }

    /// Constraint row values `C_x x + C_u u`.
    pub fn constraint_values(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.c_x * x + &self.c_u * u
    }
}

/// Horizon `T_c` for the plant bounds: symmetric certificate, or the worst
/// row of the asymmetric one.
pub fn horizon_for(plant: &PlantModel, basis: &BasisFamily) -> Result<f64> {
    if plant.is_symmetric() {
        return Ok(horizon::compact_horizon_symmetric(basis)?.t_c);
    }
    let lo = plant.lower();
    let mut t_c: f64 = 0.0;
    for i in 0..plant.n_c() {
        let cert = horizon::compact_horizon_asymmetric(basis, lo[i], plant.b_upper[i])?;
        t_c = t_c.max(cert.t_c);
    }
    Ok(t_c)
}

/// Everything of the MPC problem that does not depend on the initial state.
#[derive(Debug, Clone)]
pub struct MpcTemplate {
    pub plant: PlantModel,
    pub basis: BasisFamily,
    pub t_c: f64,
    h: DMatrix<f64>,
    a_eq: DMatrix<f64>,
    c_z: DMatrix<f64>,
}

impl MpcTemplate {
    pub fn new(plant: &PlantModel, basis: &BasisFamily) -> Result<Self> {
        let (n, m, s) = (plant.n(), plant.m(), basis.order());
        let d = (n + m) * s;
        let i_s = DMatrix::identity(s, s);
        let mut h = DMatrix::zeros(d, d);
        h.view_mut((0, 0), (n * s, n * s))
            .copy_from(&kron(&plant.q, &i_s));
        h.view_mut((n * s, n * s), (m * s, m * s))
            .copy_from(&kron(&plant.r, &i_s));

        let mut a_eq = DMatrix::zeros(n * s + n, d);
        let dyn_x =
            kron(&DMatrix::identity(n, n), &basis.generator().transpose()) - kron(&plant.a, &i_s);
        a_eq.view_mut((0, 0), (n * s, n * s)).copy_from(&dyn_x);
        a_eq.view_mut((0, n * s), (n * s, m * s))
            .copy_from(&(-kron(&plant.b, &i_s)));
        let tau_row = DMatrix::from_row_slice(1, s, basis.tau0().as_slice());
        let ic = kron(&DMatrix::identity(n, n), &tau_row);
        a_eq.view_mut((n * s, 0), (n, n * s)).copy_from(&ic);

        let mut c_z = DMatrix::zeros(plant.n_c() * s, d);
        c_z.view_mut((0, 0), (plant.n_c() * s, n * s))
            .copy_from(&kron(&plant.c_x, &i_s));
        c_z.view_mut((0, n * s), (plant.n_c() * s, m * s))
            .copy_from(&kron(&plant.c_u, &i_s));
        if linalg::rank(&a_eq, 1e-10) < a_eq.nrows() {
            return Err(Error::RankDeficient(format!(
                "dynamics and initial condition rows are dependent (n = {n}, m = {m}, s = {s})"
            )));
        }
        Ok(Self {
            plant: plant.clone(),
            basis: basis.clone(),
            t_c: horizon_for(plant, basis)?,
            h,
            a_eq,
            c_z,
        })
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn problem(&self, x0: &DVector<f64>) -> Result<SiqProblem> {
        let n = self.plant.n();
        if x0.len() != n {
            return Err(dim_err("x0", format!("{n}"), format!("{}", x0.len())));
        }
        let s = self.basis.order();
        let mut b_eq = DVector::zeros(n * s + n);
        b_eq.rows_mut(n * s, n).copy_from(x0);
        SiqProblem::new(
            self.h.clone(),
            self.a_eq.clone(),
            b_eq,
            self.c_z.clone(),
            self.plant.lower(),
            self.plant.b_upper.clone(),
            self.basis.clone(),
            self.t_c,
        )
        .map(|p| p.with_initial_rows(n))
    }

    /// `(η_x, η_u)` split of a decision vector.
    pub fn split(&self, z: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let ns = self.plant.n() * self.basis.order();
        (
            z.rows(0, ns).into_owned(),
            z.rows(ns, z.len() - ns).into_owned(),
        )
    }

    pub fn predicted_state(&self, z: &DVector<f64>, t: f64) -> DVector<f64> {
        self.basis.signal(&self.split(z).0, t)
    }

    pub fn predicted_input(&self, z: &DVector<f64>, t: f64) -> DVector<f64> {
        self.basis.signal(&self.split(z).1, t)
    }

    /// Predicted cost accumulated on `[0, t]`: `η_xᵀ(Q ⊗ G)η_x + η_uᵀ(R ⊗ G)η_u`.
    pub fn stage_integral(&self, z: &DVector<f64>, t: f64) -> f64 {
        let g = self.basis.gram_closed_form(t);
        let (ex, eu) = self.split(z);
        let wx = kron(&self.plant.q, &g);
        let wu = kron(&self.plant.r, &g);
        ex.dot(&(wx * &ex)) + eu.dot(&(wu * &eu))
    }

    /// Input coefficients as an `m × s` matrix, `u(t) = U τ(t)`.
    pub fn input_matrix(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let s = self.basis.order();
        let eu = self.split(z).1;
        DMatrix::from_fn(self.plant.m(), s, |i, j| eu[i * s + j])
    }

    /// Plant state after `t` under `u(t) = U τ(t)`, via the exponential of the
    /// augmented system `d/dt (x, τ) = [A, B U; 0, M] (x, τ)`.
    pub fn integrate(&self, x: &DVector<f64>, u_mat: &DMatrix<f64>, t: f64) -> DVector<f64> {
        let (n, s) = (self.plant.n(), self.basis.order());
        let mut big = DMatrix::zeros(n + s, n + s);
        big.view_mut((0, 0), (n, n)).copy_from(&self.plant.a);
        big.view_mut((0, n), (n, s))
            .copy_from(&(&self.plant.b * u_mat));
        big.view_mut((n, n), (s, s))
            .copy_from(self.basis.generator());
        let phi = matrix_exponential(&big, t).expect("finite plant data");
        let mut w = DVector::zeros(n + s);
        w.rows_mut(0, n).copy_from(x);
        w.rows_mut(n, s).copy_from(self.basis.tau0());
        (phi * w).rows(0, n).into_owned()
    }
}

/// Assembles the semi-infinite QP of the MPC problem at `x0`.
pub fn build_si_qp(
    plant: &PlantModel,
    basis: &BasisFamily,
    x0: &DVector<f64>,
) -> Result<SiqProblem> {
    MpcTemplate::new(plant, basis)?.problem(x0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    pub s: usize,
    pub lambda: f64,
    pub t_d: f64,
    pub steps: usize,
    pub solver: SolverConfig,
    pub warm_start: bool,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            s: 6,
            lambda: 1.0,
            t_d: 0.2,
            steps: 50,
            solver: SolverConfig::default(),
            warm_start: true,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_d > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "T_d must be positive, got {}",
                self.t_d
            )));
        }
        if self.steps < 1 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        self.solver.validate()
    }
}

/// State carried from one MPC step to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    /// Previous solution shifted by `T_d`.
    pub z_guess: DVector<f64>,
    pub samples: Vec<f64>,
    pub active: Vec<(f64, usize, Side)>,
}

/// Shifts the previous solution and its sampling instants by `t_d`.
pub fn warm_start(
    basis: &BasisFamily,
    prev_z: &DVector<f64>,
    prev_samples: &[f64],
    prev_active: &[(f64, usize, Side)],
    t_d: f64,
) -> WarmStart {
    let z_guess = basis.shift_coeffs(prev_z, t_d);
    let mut samples = vec![0.0];
    for &t in prev_samples {
        if t >= t_d && t - t_d > 0.0 {
            samples.push(t - t_d);
        }
    }
    let active = prev_active
        .iter()
        .filter(|(t, _, _)| *t >= t_d)
        .map(|&(t, r, s)| (t - t_d, r, s))
        .collect();
    WarmStart {
        z_guess,
        samples,
        active,
    }
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub outcome: SolveOutcome,
    /// `(t, row, side)` of the final working set.
    pub active: Vec<(f64, usize, Side)>,
}

/// Solves the MPC problem at `x_now`.
pub fn step(
    template: &MpcTemplate,
    solver: &SolverConfig,
    x_now: &DVector<f64>,
    warm: Option<&WarmStart>,
) -> Result<StepResult> {
    let problem = template.problem(x_now)?;
    let mut cfg = solver.clone();
    if let Some(w) = warm {
        cfg.initial_samples = w.samples.clone();
        cfg.initial_active = w.active.clone();
    }
    let outcome = sip::solve(&problem, &cfg)?;
    if !outcome.report.converged {
        return Err(Error::Unconverged {
            iterations: outcome.report.iterations,
        });
    }
    let active = active_entries(&problem, &outcome);
    Ok(StepResult { outcome, active })
}

fn active_entries(problem: &SiqProblem, outcome: &SolveOutcome) -> Vec<(f64, usize, Side)> {
    // recover sides from the sign of the row value at the sampled instants
    let mut out = vec![];
    for &t in &outcome.samples {
        for row in 0..problem.n_rows() {
            let v = problem.row_value(&outcome.z, row, t);
            let tol = 1e-9 * (1.0 + problem.l_u[row].abs());
            if (v - problem.l_u[row]).abs() <= tol {
                out.push((t, row, Side::Upper));
            } else if (v - problem.l_b[row]).abs() <= tol {
                out.push((t, row, Side::Lower));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct ClosedLoopLog {
    pub t_d: f64,
    /// `x(k T_d)` for `k = 0..=steps`.
    pub states: Vec<DVector<f64>>,
    /// Decision vector applied on `[k T_d, (k+1) T_d)`.
    pub solutions: Vec<DVector<f64>>,
    pub j_mpc: Vec<f64>,
    /// Outer iterations per step.
    pub iters: Vec<usize>,
    pub kernel_iters: Vec<usize>,
    pub stage_integrals: Vec<f64>,
    /// Largest KKT residual over the finite solves of each step.
    pub kkt: Vec<f64>,
    /// Whether the first finite solve of each step was already certified.
    pub first_solve_certified: Vec<bool>,
    /// Error that ended the run early, if any.
    pub aborted: Option<Error>,
}

impl ClosedLoopLog {
    pub fn steps(&self) -> usize {
        self.solutions.len()
    }
}

/// Closed-loop simulation with exact plant integration between samples.
pub fn simulate(
    plant: &PlantModel,
    config: &MpcConfig,
    x0: &DVector<f64>,
) -> Result<(MpcTemplate, ClosedLoopLog)> {
    config.validate()?;
    let basis = BasisFamily::laguerre(config.s, config.lambda)?;
    let template = MpcTemplate::new(plant, &basis)?;
    if x0.len() != plant.n() {
        return Err(dim_err(
            "x0",
            format!("{}", plant.n()),
            format!("{}", x0.len()),
        ));
    }
    let mut log = ClosedLoopLog {
        t_d: config.t_d,
        states: vec![x0.clone()],
        ..ClosedLoopLog::default()
    };
    let mut warm: Option<WarmStart> = None;
    let mut x = x0.clone();
    for _ in 0..config.steps {
        let res = match step(&template, &config.solver, &x, warm.as_ref()) {
            Ok(r) => r,
            Err(e) => {
                log.aborted = Some(e);
                break;
            }
        };
        let z = res.outcome.z.clone();
        log.j_mpc.push(res.outcome.j);
        log.iters.push(res.outcome.report.iterations);
        log.kernel_iters.push(res.outcome.report.kernel_iterations);
        log.kkt.push(
            res.outcome
                .report
                .kkt_seq
                .iter()
                .copied()
                .fold(0.0, f64::max),
        );
        log.first_solve_certified
            .push(res.outcome.report.iterations == 1);
        log.stage_integrals
            .push(template.stage_integral(&z, config.t_d));
        x = template.integrate(&x, &template.input_matrix(&z), config.t_d);
        log.states.push(x.clone());
        if config.warm_start {
            warm = Some(warm_start(
                &basis,
                &z,
                &res.outcome.samples,
                &res.active,
                config.t_d,
            ));
        }
        log.solutions.push(z);
    }
    Ok((template, log))
}

/// Optimal value for each order in `s_list` at fixed `lambda`; `None` where
/// the solve fails.
pub fn cost_vs_order(
    plant: &PlantModel,
    x0: &DVector<f64>,
    lambda: f64,
    s_list: &[usize],
    solver: &SolverConfig,
) -> Vec<Option<f64>> {
    s_list
        .iter()
        .map(|&s| {
            let basis = BasisFamily::laguerre(s, lambda).ok()?;
            let problem = build_si_qp(plant, &basis, x0).ok()?;
            let out = sip::solve(&problem, solver).ok()?;
            out.report.converged.then_some(out.j)
        })
        .collect()
}
