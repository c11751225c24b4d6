//! Brute-force reference solutions that share no code with the basis solver:
//! a trapezoidal transcription of the constrained LQR problem, a dense grid
//! check of basis signals, and the algebraic Riccati equation.

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisFamily;
use crate::error::{Error, Result};
use crate::linalg;
use crate::mpc::PlantModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranscriptionSpec {
    /// Number of intervals; the grid has `intervals + 1` points.
    pub intervals: usize,
    pub h: f64,
    pub t_end: f64,
}

impl TranscriptionSpec {
    /// Grid of step close to `h` that ends exactly at `t_end`.
    pub fn new(h: f64, t_end: f64) -> Result<Self> {
        if !(h > 0.0) || !(t_end > 0.0) || !h.is_finite() || !t_end.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "transcription needs positive step and horizon, got h = {h}, T = {t_end}"
            )));
        }
        let intervals = (t_end / h).round().max(1.0) as usize;
        Ok(Self {
            intervals,
            h: t_end / intervals as f64,
            t_end,
        })
    }
}

/// Banded matrix with partial-pivoting LU.
///
/// Row `i` keeps columns `i − kl ..= i + ku + kl`; the extra `kl` columns hold
/// fill-in from row interchanges.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(
            j + self.kl >= i && j <= i + self.ku + self.kl,
            "({i}, {j}) outside band"
        );
        i * self.width + (j + self.kl - i)
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "entry ({i}, {j}) outside the declared band"
        );
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    /// Solves `A x = b` in place; the matrix is consumed by the factorization.
    pub fn solve(mut self, mut b: DVector<f64>) -> Result<DVector<f64>> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let scale = self
            .data
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in (k + 1)..=last_row {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= 1e-300 || best < 1e-15 * scale * f64::EPSILON {
                return Err(Error::RankDeficient(format!(
                    "banded system singular at column {k}"
                )));
            }
            let last_col = (k + ku + kl).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = self.get(k, j);
                    let c = self.get(p, j);
                    self.set(k, j, c);
                    self.set(p, j, a);
                }
                b.swap_rows(k, p);
            }
            let piv = self.get(k, k);
            for i in (k + 1)..=last_row {
                let f = self.get(i, k) / piv;
                if f == 0.0 {
                    continue;
                }
                self.set(i, k, 0.0);
                for j in (k + 1)..=last_col {
                    let v = self.get(i, j) - f * self.get(k, j);
                    self.set(i, j, v);
                }
                b[i] -= f * b[k];
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + ku + kl).min(n - 1);
            let mut acc = b[k];
            for j in (k + 1)..=last_col {
                acc -= self.get(k, j) * b[j];
            }
            b[k] = acc / self.get(k, k);
        }
        Ok(b)
    }
}

/// Result of the transcription.
#[derive(Debug, Clone)]
pub struct GridSolution {
    pub j: f64,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    /// Active-set iterations.
    pub iterations: usize,
}

/// Trapezoidal transcription of `min ∫ xᵀQx + uᵀRu` subject to the plant and
/// the row constraints at every grid point.
///
/// The equality-constrained subproblems are solved on the time-ordered KKT
/// system with a banded LU; the active set is updated by the primal-dual rule
/// (release rows with a wrong-signed multiplier, add violated rows) until it
/// repeats.
pub fn dense_grid_qp(
    plant: &PlantModel,
    x0: &DVector<f64>,
    spec: &TranscriptionSpec,
) -> Result<GridSolution> {
    let (n, m, nc) = (plant.n(), plant.m(), plant.n_c());
    if x0.len() != n {
        return Err(Error::Dimension {
            field: "x0".into(),
            expected: format!("{n}"),
            got: format!("{}", x0.len()),
        });
    }
    let big_n = spec.intervals;
    let h = spec.h;
    let p = n + m + nc + n;
    let total = (big_n + 1) * p;
    let lo = plant.lower();
    let hi = plant.b_upper.clone();
    let eye = DMatrix::<f64>::identity(n, n);
    let fwd = &eye - &plant.a * (0.5 * h); // coefficient of x_k in E_k
    let back = -(&eye + &plant.a * (0.5 * h)); // coefficient of x_{k-1} in E_k
    let bh = &plant.b * (-0.5 * h);
    let weight = |k: usize| if k == 0 || k == big_n { 0.5 * h } else { h };
    let ox = 0;
    let ou = n;
    let onu = n + m;
    let olam = n + m + nc;

    let mut active = vec![0i8; (big_n + 1) * nc];
    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > 200 {
            return Err(Error::Unconverged { iterations });
        }
        let mut kkt = BandMatrix::zeros(total, 2 * p, 2 * p);
        let mut rhs = DVector::zeros(total);
        for k in 0..=big_n {
            let base = k * p;
            let w = weight(k);
            let nxt = (k + 1) * p;
            // stationarity in x_k
            for i in 0..n {
                for j in 0..n {
                    kkt.add(base + ox + i, base + ox + j, 2.0 * w * plant.q[(i, j)]);
                    let own = if k == 0 { eye[(j, i)] } else { fwd[(j, i)] };
                    kkt.add(base + ox + i, base + olam + j, own);
                    if k < big_n {
                        kkt.add(base + ox + i, nxt + olam + j, back[(j, i)]);
                    }
                }
                for r in 0..nc {
                    kkt.add(base + ox + i, base + onu + r, plant.c_x[(r, i)]);
                }
            }
            // stationarity in u_k
            for i in 0..m {
                for j in 0..m {
                    kkt.add(base + ou + i, base + ou + j, 2.0 * w * plant.r[(i, j)]);
                }
                for j in 0..n {
                    if k > 0 {
                        kkt.add(base + ou + i, base + olam + j, bh[(j, i)]);
                    }
                    if k < big_n {
                        kkt.add(base + ou + i, nxt + olam + j, bh[(j, i)]);
                    }
                }
                for r in 0..nc {
                    kkt.add(base + ou + i, base + onu + r, plant.c_u[(r, i)]);
                }
            }
            // row constraints or zero multipliers
            for r in 0..nc {
                let row = base + onu + r;
                match active[k * nc + r] {
                    0 => kkt.add(row, row, 1.0),
                    side => {
                        for j in 0..n {
                            kkt.add(row, base + ox + j, plant.c_x[(r, j)]);
                        }
                        for j in 0..m {
                            kkt.add(row, base + ou + j, plant.c_u[(r, j)]);
                        }
                        rhs[row] = if side > 0 { hi[r] } else { lo[r] };
                    }
                }
            }
            // dynamics E_k
            for i in 0..n {
                let row = base + olam + i;
                if k == 0 {
                    kkt.add(row, base + ox + i, 1.0);
                    rhs[row] = x0[i];
                    continue;
                }
                let prev = (k - 1) * p;
                for j in 0..n {
                    kkt.add(row, base + ox + j, fwd[(i, j)]);
                    kkt.add(row, prev + ox + j, back[(i, j)]);
                }
                for j in 0..m {
                    kkt.add(row, base + ou + j, bh[(i, j)]);
                    kkt.add(row, prev + ou + j, bh[(i, j)]);
                }
            }
        }
        let sol = kkt.solve(rhs)?;

        let mut changed = false;
        let mut next = active.clone();
        for k in 0..=big_n {
            let base = k * p;
            let x = sol.rows(base + ox, n);
            let u = sol.rows(base + ou, m);
            let g = &plant.c_x * x + &plant.c_u * u;
            for r in 0..nc {
                let nu = sol[base + onu + r];
                let cur = active[k * nc + r];
                let tol = 1e-12 * (1.0 + hi[r].abs().max(lo[r].abs()));
                let new = match cur {
                    1 if nu >= 0.0 => 1,
                    -1 if nu <= 0.0 => -1,
                    _ if g[r] > hi[r] + tol => 1,
                    _ if g[r] < lo[r] - tol => -1,
                    _ => 0,
                };
                if new != cur {
                    changed = true;
                    next[k * nc + r] = new;
                }
            }
        }
        if !changed {
            let mut states = Vec::with_capacity(big_n + 1);
            let mut inputs = Vec::with_capacity(big_n + 1);
            let mut j = 0.0;
            for k in 0..=big_n {
                let base = k * p;
                let x = sol.rows(base + ox, n).into_owned();
                let u = sol.rows(base + ou, m).into_owned();
                j += weight(k) * (x.dot(&(&plant.q * &x)) + u.dot(&(&plant.r * &u)));
                states.push(x);
                inputs.push(u);
            }
            return Ok(GridSolution {
                j,
                times: (0..=big_n).map(|k| k as f64 * h).collect(),
                states,
                inputs,
                iterations,
            });
        }
        active = next;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCert {
    pub satisfied: bool,
    /// `min over grid and rows of min(hi − f, f − lo)`.
    pub worst_margin: f64,
    pub worst_t: f64,
    pub worst_row: usize,
}

/// Evaluates every row `τ(t)ᵀc_r` on `0, step, 2·step, …, t_end`.
pub fn grid_certify(
    basis: &BasisFamily,
    rows: &[DVector<f64>],
    lo: &[f64],
    hi: &[f64],
    t_end: f64,
    step: f64,
) -> GridCert {
    assert!(step > 0.0, "grid step must be positive");
    let phi = basis.transition(step);
    let count = (t_end / step).floor() as usize;
    let mut best = GridCert {
        satisfied: true,
        worst_margin: f64::INFINITY,
        worst_t: 0.0,
        worst_row: 0,
    };
    let mut tau = basis.tau0().clone();
    let mut next = tau.clone();
    let mut visit = |t: f64, tau: &DVector<f64>| {
        for (r, c) in rows.iter().enumerate() {
            let f = tau.dot(c);
            let margin = (hi[r] - f).min(f - lo[r]);
            if margin < best.worst_margin {
                best.worst_margin = margin;
                best.worst_t = t;
                best.worst_row = r;
            }
        }
    };
    for k in 0..=count {
        let t = k as f64 * step;
        if k > 0 {
            // re-anchor periodically so products of Φ do not drift
            if k % 4096 == 0 {
                tau = basis.eval(t);
            } else {
                next.gemv(1.0, &phi, &tau, 0.0);
                std::mem::swap(&mut tau, &mut next);
            }
        }
        visit(t, &tau);
    }
    if (count as f64) * step < t_end {
        visit(t_end, &basis.eval(t_end));
    }
    best.satisfied = best.worst_margin >= 0.0;
    best
}

/// Stabilizing solution of `AᵀP + PA − PBR⁻¹BᵀP + Q = 0`.
///
/// The stable invariant subspace of the Hamiltonian is read off its matrix
/// sign function (scaled Newton iteration), then `P` is obtained by least
/// squares from `[W₁₂; W₂₂ + I] P = −[W₁₁ + I; W₂₁]`.
pub fn riccati(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let r_inv = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("R is not positive definite".into()))?
        .inverse();
    let g = b * r_inv * b.transpose();
    let mut ham = DMatrix::zeros(2 * n, 2 * n);
    ham.view_mut((0, 0), (n, n)).copy_from(a);
    ham.view_mut((0, n), (n, n)).copy_from(&(-&g));
    ham.view_mut((n, 0), (n, n)).copy_from(&(-q));
    ham.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let mut z = ham;
    let mut converged = false;
    for _ in 0..100 {
        let det = z.determinant().abs();
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::NoStabilizingSolution(
                "Hamiltonian is singular".into(),
            ));
        }
        let c = det.powf(-1.0 / (2 * n) as f64);
        let zi = (&z * c)
            .try_inverse()
            .ok_or_else(|| Error::NoStabilizingSolution("sign iteration broke down".into()))?;
        let next = (&z * c + zi) * 0.5;
        let diff = linalg::max_abs(&(&next - &z));
        z = next;
        if diff <= 1e-13 * linalg::max_abs(&z).max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoStabilizingSolution(
            "sign iteration did not converge (eigenvalues near the imaginary axis)".into(),
        ));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n))
        .copy_from(&z.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n))
        .copy_from(&(z.view((n, n), (n, n)) + &eye));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n))
        .copy_from(&(-(z.view((0, 0), (n, n)) + &eye)));
    rhs.view_mut((n, 0), (n, n))
        .copy_from(&(-z.view((n, 0), (n, n))));
    let p = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::NoStabilizingSolution(e.to_string()))?;
    let p = (&p + p.transpose()) * 0.5;
    let closed = a - &g * &p;
    if closed.complex_eigenvalues().iter().any(|ev| ev.re >= 0.0) {
        return Err(Error::NoStabilizingSolution(
            "closed loop is not Hurwitz".into(),
        ));
    }
    Ok(p)
}

/// Residual `AᵀP + PA − PBR⁻¹BᵀP + Q`.
pub fn riccati_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    let r_inv = r.clone().try_inverse().expect("invertible R");
    let res = a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + q;
    linalg::max_abs(&res)
}

/// Unconstrained infinite-horizon value `x₀ᵀPx₀`.
pub fn riccati_value(plant: &PlantModel, x0: &DVector<f64>) -> Result<f64> {
    let p = riccati(&plant.a, &plant.b, &plant.q, &plant.r)?;
    Ok(x0.dot(&(p * x0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_riccati() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let p = riccati(&DMatrix::from_element(1, 1, -1.0), &one, &one, &one).unwrap();
        assert_relative_eq!(p[(0, 0)], 2f64.sqrt() - 1.0, epsilon = 1e-13);
    }

    #[test]
    fn small_q_gives_small_p() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let p = riccati(
            &DMatrix::from_element(1, 1, -2.0),
            &one,
            &(&one * 1e-12),
            &one,
        )
        .unwrap();
        assert!(p[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn double_integrator_riccati() {
        let plant = PlantModel::double_integrator(1.0).unwrap();
        let p = riccati(&plant.a, &plant.b, &plant.q, &plant.r).unwrap();
        assert!(riccati_residual(&plant.a, &plant.b, &plant.q, &plant.r, &p) < 1e-10);
        let s3 = 3f64.sqrt();
        assert_relative_eq!(p[(0, 0)], s3, epsilon = 1e-12);
        assert_relative_eq!(p[(0, 1)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(p[(1, 1)], s3, epsilon = 1e-12);
    }

    #[test]
    fn unstabilizable_has_no_solution() {
        let a = DMatrix::from_element(1, 1, 1.0);
        let b = DMatrix::from_element(1, 1, 0.0);
        let one = DMatrix::from_element(1, 1, 1.0);
        assert!(riccati(&a, &b, &one, &one).is_err());
    }

    #[test]
    fn band_solver_matches_dense() {
        let n = 9;
        let mut band = BandMatrix::zeros(n, 2, 3);
        let mut dense = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(2)..(i + 4).min(n) {
                let v = ((i * 7 + j * 3) % 11) as f64 - 5.0 + if i == j { 0.0 } else { 0.5 };
                band.add(i, j, v);
                dense[(i, j)] = v;
            }
        }
        let b = DVector::from_fn(n, |i, _| i as f64 - 3.0);
        let x = band.solve(b.clone()).unwrap();
        assert!((&dense * x - b).amax() < 1e-10);
    }

    #[test]
    fn zero_state_transcription() {
        let plant = PlantModel::double_integrator(1.0).unwrap();
        let spec = TranscriptionSpec::new(0.05, 5.0).unwrap();
        let sol = dense_grid_qp(&plant, &DVector::zeros(2), &spec).unwrap();
        assert_eq!(sol.j, 0.0);
    }

    #[test]
    fn scalar_transcription_approaches_riccati() {
        let plant = PlantModel::scalar(-1.0, 1.0, 10.0).unwrap();
        let x0 = DVector::from_element(1, 1.0);
        let exact = riccati_value(&plant, &x0).unwrap();
        let mut errs = vec![];
        for h in [0.04, 0.02, 0.01] {
            let sol =
                dense_grid_qp(&plant, &x0, &TranscriptionSpec::new(h, 30.0).unwrap()).unwrap();
            errs.push((sol.j - exact).abs());
        }
        assert!(errs[2] < 1e-4 * exact, "{errs:?}");
        // second order: halving h divides the error by about four
        assert!(
            errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5,
            "{errs:?}"
        );
    }

    #[test]
    fn grid_certify_examples() {
        let b = BasisFamily::laguerre(2, 1.0).unwrap();
        let zero = grid_certify(&b, &[DVector::zeros(2)], &[-0.5], &[2.0], 10.0, 1e-3);
        assert!(zero.satisfied);
        assert_relative_eq!(zero.worst_margin, 0.5, epsilon = 1e-15);
        let c = DVector::from_vec(vec![0.0, 1.0]);
        let r = grid_certify(&b, &[c], &[-0.5], &[2.0], 10.0, 1e-3);
        assert!(!r.satisfied);
        assert_relative_eq!(
            r.worst_margin,
            0.5 - 2.0 * 2f64.sqrt() * (-1.5f64).exp(),
            epsilon = 1e-6
        );
        assert!((r.worst_t - 1.5).abs() < 2e-3);
    }
}
