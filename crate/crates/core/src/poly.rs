//! Offline selection of a fixed set of sampling instants.
//!
//! Every row bound is tightened to `(1 − ε)` of its level at the chosen
//! instants. With `L` a Lipschitz constant of the row signal over the cost
//! ball `zᵀHz ≤ J̄` and grid spacing `Δ = bε/(2L)`, the peak value
//!
//! ```text
//!     h(t) = max { ±τ(t)ᵀC_r z − bound : z ∈ dynamics, tightened samples, zᵀHz ≤ J̄ }
//! ```
//!
//! being at most `−bε/2` on the grid implies the untightened constraint on
//! `[0, T_c]` for every such `z`. Peaks above the threshold are added as
//! samples until none remain. The initial state is left free, so the result
//! serves every initial condition whose optimum stays inside the ball.

use nalgebra::{DMatrix, DVector};

use crate::certify;
use crate::error::{Error, Result};
use crate::linalg;
use crate::qp::{
    self, Candidate, KernelOptions, QpSolution, RangeSpaceCache, SiqProblem, WorkingSet,
};

/// `sup|τ|·‖Mᵀ‖·‖C_r‖·√(J̄/σ)` for row `row`.
pub fn lipschitz_const(problem: &SiqProblem, row: usize, j_bar: f64) -> f64 {
    let s = problem.basis.order();
    let c_row = problem.c_z.rows(row * s, s).into_owned();
    certify::tau_norm_bound(&problem.basis)
        * linalg::spectral_norm(problem.basis.generator())
        * linalg::spectral_norm(&c_row)
        * (j_bar.max(0.0) / problem.sigma).sqrt()
}

/// Uniform grid on `[0, T_c]` with spacing `b ε / (2L)`, endpoint included.
pub fn build_grid(l: f64, b_row: f64, eps_tight: f64, t_c: f64) -> Result<Vec<f64>> {
    let spacing = grid_spacing(l, b_row, eps_tight, t_c)?;
    let count = (t_c / spacing).floor() as usize;
    let mut grid: Vec<f64> = (0..=count).map(|k| k as f64 * spacing).collect();
    if *grid.last().unwrap() < t_c * (1.0 - 1e-15) {
        grid.push(t_c);
    }
    Ok(grid)
}

fn grid_spacing(l: f64, b_row: f64, eps_tight: f64, t_c: f64) -> Result<f64> {
    if !(l >= 0.0 && b_row > 0.0 && eps_tight > 0.0 && eps_tight < 1.0 && t_c > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "grid needs L ≥ 0, b > 0, 0 < ε < 1, T_c > 0 (got L = {l}, b = {b_row}, ε = {eps_tight}, T_c = {t_c})"
        )));
    }
    if l == 0.0 {
        return Ok(t_c);
    }
    let spacing = b_row * eps_tight / (2.0 * l);
    let floor = 1e-9 * t_c;
    if spacing < floor {
        return Err(Error::GridTooFine { spacing, floor });
    }
    Ok(spacing)
}

/// Reduced coordinates of the cost ball: `z = T w` spans the dynamics
/// (initial state free) and `zᵀHz = |w|²`.
#[derive(Debug, Clone)]
pub struct PeakContext {
    /// `T`, `d × k`.
    pub reduce: DMatrix<f64>,
    /// Per row, `Tᵀ C_rᵀ` (`k × s`): the signal at `t` is `(K_r τ(t))ᵀ w`.
    pub row_maps: Vec<DMatrix<f64>>,
    pub j_bar: f64,
}

impl PeakContext {
    pub fn new(problem: &SiqProblem, j_bar: f64) -> Result<Self> {
        let dynamics = problem.dynamics_rows();
        let null = linalg::null_space(&dynamics, 1e-11);
        let hn = null.transpose() * &problem.h * &null;
        let chol = ((&hn + hn.transpose()) * 0.5).cholesky().ok_or_else(|| {
            Error::InvalidArgument("reduced Hessian not positive definite".into())
        })?;
        // T = N L⁻ᵀ
        let l_inv_t = chol
            .l()
            .try_inverse()
            .ok_or_else(|| Error::RankDeficient("reduced Hessian factor".into()))?
            .transpose();
        let reduce = &null * l_inv_t;
        let s = problem.basis.order();
        let row_maps = (0..problem.n_rows())
            .map(|r| reduce.transpose() * problem.c_z.rows(r * s, s).transpose())
            .collect();
        Ok(Self {
            reduce,
            row_maps,
            j_bar,
        })
    }

    pub fn dim(&self) -> usize {
        self.reduce.ncols()
    }
}

/// Tightened sample constraints of one row in reduced coordinates.
#[derive(Debug, Clone)]
struct SampleSet {
    normals: Vec<DVector<f64>>,
    lo: f64,
    hi: f64,
}

/// `max aᵀw` over `|w|² ≤ J̄` and the samples, as an upper bound that is
/// tight to `1e-6` relative in the ball constraint.
fn ball_max(a: &DVector<f64>, samples: &SampleSet, j_bar: f64) -> f64 {
    let an = a.norm();
    if an == 0.0 || j_bar <= 0.0 {
        return 0.0;
    }
    let r = j_bar.sqrt();
    let w_free = a * (r / an);
    let fits = samples.normals.iter().all(|n| {
        let v = n.dot(&w_free);
        v <= samples.hi && v >= samples.lo
    });
    if fits {
        return r * an;
    }
    // max aᵀw − ρ(|w|² − J̄): with w = v + a/(2ρ) this is a projection of
    // −a/(2ρ) onto the shifted polyhedron, one small QP per ρ
    let k = a.len();
    let cache = RangeSpaceCache::new(
        &DMatrix::identity(k, k),
        &DMatrix::zeros(0, k),
        &DVector::zeros(0),
    )
    .expect("identity Hessian");
    let solve_at = |rho: f64| -> Option<(f64, DVector<f64>)> {
        let shift = a / (2.0 * rho);
        let cands: Vec<Candidate> = samples
            .normals
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let o = n.dot(&shift);
                Candidate {
                    t: i as f64,
                    row: 0,
                    normal: n.clone(),
                    lo: samples.lo - o,
                    hi: samples.hi - o,
                }
            })
            .collect();
        let sol =
            qp::solve_finite(&cache, &cands, WorkingSet::new(), KernelOptions::default()).ok()?;
        let w = sol.z + shift;
        let dual = a.dot(&w) - rho * (w.norm_squared() - j_bar);
        Some((dual, w))
    };
    // |w(ρ)|² decreases in ρ; find ρ with |w|² = J̄ by regula falsi on log ρ
    let phi = |w: &DVector<f64>| (w.norm_squared() / j_bar).ln();
    let (mut lo_u, mut hi_u) = ((1e-8f64).ln(), (1e8f64).ln());
    let Some((d_lo, w_lo)) = solve_at(lo_u.exp()) else {
        return r * an;
    };
    let mut best = d_lo;
    let mut f_lo = phi(&w_lo);
    if f_lo <= 0.0 {
        // the ball is inactive: the polyhedron alone bounds the maximum
        return d_lo.min(r * an);
    }
    let Some((d_hi, w_hi)) = solve_at(hi_u.exp()) else {
        return r * an;
    };
    best = best.min(d_hi);
    let mut f_hi = phi(&w_hi);
    if f_hi >= 0.0 {
        return best.min(r * an);
    }
    let mut side = 0i8;
    for _ in 0..100 {
        let u = (lo_u * f_hi - hi_u * f_lo) / (f_hi - f_lo);
        let u = if u.is_finite() && u > lo_u && u < hi_u {
            u
        } else {
            0.5 * (lo_u + hi_u)
        };
        let Some((d, w)) = solve_at(u.exp()) else {
            break;
        };
        best = best.min(d);
        let f = phi(&w);
        if f.abs() <= 1e-6 {
            break;
        }
        if f > 0.0 {
            lo_u = u;
            f_lo = f;
            if side == 1 {
                f_hi *= 0.5;
            }
            side = 1;
        } else {
            hi_u = u;
            f_hi = f;
            if side == -1 {
                f_lo *= 0.5;
            }
            side = -1;
        }
        if hi_u - lo_u < 1e-12 {
            break;
        }
    }
    best.min(r * an)
}

/// Peak value `h(t)` of row `row` against its upper and lower bound, given
/// the row's sampling instants (tightened by `eps_tight`).
pub fn peak_value(
    problem: &SiqProblem,
    ctx: &PeakContext,
    row: usize,
    samples: &[f64],
    eps_tight: f64,
    t: f64,
) -> f64 {
    let set = sample_set(problem, ctx, row, samples, eps_tight);
    let a = &ctx.row_maps[row] * problem.basis.eval(t);
    peak_from(&a, &set, problem.l_b[row], problem.l_u[row], ctx.j_bar)
}

fn sample_set(
    problem: &SiqProblem,
    ctx: &PeakContext,
    row: usize,
    samples: &[f64],
    eps_tight: f64,
) -> SampleSet {
    SampleSet {
        normals: samples
            .iter()
            .map(|&t| &ctx.row_maps[row] * problem.basis.eval(t))
            .collect(),
        lo: (1.0 - eps_tight) * problem.l_b[row],
        hi: (1.0 - eps_tight) * problem.l_u[row],
    }
}

fn peak_from(a: &DVector<f64>, set: &SampleSet, lo: f64, hi: f64, j_bar: f64) -> f64 {
    let up = ball_max(a, set, j_bar) - hi;
    // the lower side is the upper side of the negated signal
    let neg = SampleSet {
        normals: set.normals.iter().map(|n| -n).collect(),
        lo: -set.hi,
        hi: -set.lo,
    };
    let down = ball_max(&(-a), &neg, j_bar) + lo;
    up.max(down)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowApprox {
    pub row: usize,
    pub lipschitz: f64,
    pub spacing: f64,
    /// Number of grid points on `[0, T_c]`.
    pub grid_len: usize,
    /// Beyond this instant the unconstrained peak is already below the
    /// threshold, so the grid is only scanned up to it.
    pub scan_end: f64,
    pub samples: Vec<f64>,
    /// Largest `h` on the scanned grid at termination.
    pub max_peak: f64,
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyApprox {
    pub eps_tight: f64,
    pub j_bar: f64,
    pub t_c: f64,
    pub rows: Vec<RowApprox>,
}

impl PolyApprox {
    /// Union of the per-row sampling instants, sorted.
    pub fn sample_times(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self
            .rows
            .iter()
            .flat_map(|r| r.samples.iter().copied())
            .collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }
}

/// Greedy selection: scan `h` over the grid, add every local peak above
/// `−bε/2`, repeat until the grid is clear.
pub fn greedy_sample(problem: &SiqProblem, j_bar: f64, eps_tight: f64) -> Result<PolyApprox> {
    if !(j_bar >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "J_bar must be non-negative, got {j_bar}"
        )));
    }
    let ctx = PeakContext::new(problem, j_bar)?;
    let mut rows = vec![];
    for row in 0..problem.n_rows() {
        let b = problem.l_u[row].min(-problem.l_b[row]);
        let l = lipschitz_const(problem, row, j_bar);
        let grid = build_grid(l, b, eps_tight, problem.t_c)?;
        let spacing = if grid.len() > 1 {
            grid[1] - grid[0]
        } else {
            problem.t_c
        };
        let threshold = -0.5 * b * eps_tight;

        // unconstrained peaks √J̄|K_r τ(t)| − bound are non-increasing in t,
        // so the scan can stop once they fall below the threshold
        let taus = problem.basis.eval_many(&grid);
        let free: Vec<f64> = taus
            .iter()
            .map(|tau| {
                let a = &ctx.row_maps[row] * tau;
                j_bar.sqrt() * a.norm() - b
            })
            .collect();
        let scan = free
            .iter()
            .position(|&h| h <= threshold)
            .unwrap_or(grid.len());

        let mut samples: Vec<f64> = vec![];
        let mut rounds = 0;
        let mut max_peak;
        loop {
            rounds += 1;
            let set = sample_set(problem, &ctx, row, &samples, eps_tight);
            let h: Vec<f64> = (0..scan)
                .map(|k| {
                    let a = &ctx.row_maps[row] * &taus[k];
                    peak_from(&a, &set, problem.l_b[row], problem.l_u[row], j_bar)
                })
                .collect();
            max_peak = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut peaks = vec![];
            for k in 0..scan {
                if h[k] <= threshold {
                    continue;
                }
                let left = if k == 0 { f64::NEG_INFINITY } else { h[k - 1] };
                let right = if k + 1 < scan {
                    h[k + 1]
                } else {
                    f64::NEG_INFINITY
                };
                if h[k] >= left && h[k] >= right && !samples.contains(&grid[k]) {
                    peaks.push(grid[k]);
                }
            }
            if peaks.is_empty() {
                if max_peak > threshold {
                    // plateau on already sampled instants: sample the worst point
                    let k = (0..scan).max_by(|&i, &j| h[i].total_cmp(&h[j])).unwrap();
                    if samples.contains(&grid[k]) {
                        return Err(Error::Unconverged { iterations: rounds });
                    }
                    samples.push(grid[k]);
                    continue;
                }
                break;
            }
            samples.extend(peaks);
            samples.sort_by(f64::total_cmp);
            if rounds > grid.len() {
                return Err(Error::Unconverged { iterations: rounds });
            }
        }
        rows.push(RowApprox {
            row,
            lipschitz: l,
            spacing,
            grid_len: grid.len(),
            scan_end: if scan < grid.len() {
                grid[scan]
            } else {
                problem.t_c
            },
            samples,
            max_peak: if scan == 0 {
                f64::NEG_INFINITY
            } else {
                max_peak
            },
            rounds,
        });
    }
    Ok(PolyApprox {
        eps_tight,
        j_bar,
        t_c: problem.t_c,
        rows,
    })
}

/// A plain QP: the problem's equalities plus the tightened sample rows.
#[derive(Debug, Clone)]
pub struct FixedQp {
    pub problem: SiqProblem,
    pub candidates: Vec<Candidate>,
}

impl FixedQp {
    pub fn solve(&self) -> Result<QpSolution> {
        let cache = self.problem.cache()?;
        let sol = qp::solve_finite(
            &cache,
            &self.candidates,
            WorkingSet::new(),
            KernelOptions::default(),
        )?;
        let kkt = qp::kkt_residuals(&cache, &sol, &self.candidates);
        Ok(QpSolution {
            z: sol.z.clone(),
            objective: sol.objective,
            active: sol.working_set.entries().to_vec(),
            multipliers: sol.multipliers,
            kkt,
        })
    }

    /// Whether `z` meets every tightened sample row.
    pub fn is_feasible(&self, z: &DVector<f64>, tol: f64) -> bool {
        self.candidates.iter().all(|c| {
            let v = c.normal.dot(z);
            v <= c.hi + tol && v >= c.lo - tol
        })
    }
}

pub fn export_fixed_qp(approx: &PolyApprox, problem: &SiqProblem) -> FixedQp {
    let mut candidates = vec![];
    for r in &approx.rows {
        for &t in &r.samples {
            let tau = problem.basis.eval(t);
            candidates.push(Candidate {
                t,
                row: r.row,
                normal: problem.constraint_normal(&tau, r.row),
                lo: (1.0 - approx.eps_tight) * problem.l_b[r.row],
                hi: (1.0 - approx.eps_tight) * problem.l_u[r.row],
            });
        }
    }
    FixedQp {
        problem: problem.clone(),
        candidates,
    }
}
