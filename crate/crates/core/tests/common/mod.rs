//! Shared generators for the integration tests.
#![allow(dead_code)]

use basis_mpc::basis::BasisFamily;
use basis_mpc::error::Error;
use basis_mpc::mpc::{build_si_qp, PlantModel};
use basis_mpc::qp::{Candidate, SiqProblem};
use basis_mpc::sip::{self, SolveOutcome, SolverConfig};
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn normal(rng: &mut StdRng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn normal_vec(rng: &mut StdRng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| normal(rng))
}

pub fn normal_mat(rng: &mut StdRng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| normal(rng))
}

pub fn unit_vec(rng: &mut StdRng, n: usize) -> DVector<f64> {
    loop {
        let v = normal_vec(rng, n);
        let norm = v.norm();
        if norm > 1e-8 {
            return v / norm;
        }
    }
}

/// Random SPD matrix with eigenvalues roughly in `[lo, lo + spread]`.
pub fn spd(rng: &mut StdRng, n: usize, lo: f64, spread: f64) -> DMatrix<f64> {
    let g = normal_mat(rng, n, n);
    let q = g.qr().q();
    let d = DVector::from_fn(n, |_, _| lo + spread * rng.random::<f64>());
    &q * DMatrix::from_diagonal(&d) * q.transpose()
}

/// A randomly drawn constrained LQR problem with `(n + m) s ≤ max_d`.
#[derive(Debug, Clone)]
pub struct RandomCase {
    pub plant: PlantModel,
    pub basis: BasisFamily,
    pub x0: DVector<f64>,
    pub problem: SiqProblem,
}

/// Draws plants until one is well posed and its first solve is feasible.
/// The returned case has been solved once with `config`.
pub fn random_solved_case(
    rng: &mut StdRng,
    max_d: usize,
    config: &SolverConfig,
) -> (RandomCase, SolveOutcome, usize) {
    let mut rejected = 0;
    loop {
        let n = rng.random_range(1..=2);
        let m = rng.random_range(1..=2);
        let s_max = max_d / (n + m);
        if s_max < 2 {
            continue;
        }
        let s = rng.random_range(2..=s_max.min(5));
        let lambda = rng.random_range(0.7..2.0);
        let a = normal_mat(rng, n, n) * 0.6;
        let b = normal_mat(rng, n, m);
        let with_state_row = rng.random::<f64>() < 0.4;
        let n_c = m + usize::from(with_state_row);
        let mut c_x = DMatrix::zeros(n_c, n);
        let mut c_u = DMatrix::zeros(n_c, m);
        for i in 0..m {
            c_u[(i, i)] = 1.0;
        }
        if with_state_row {
            c_x.set_row(m, &normal_vec(rng, n).transpose());
        }
        let upper = DVector::from_fn(n_c, |_, _| rng.random_range(0.3..1.5));
        let lower = if s <= 3 && rng.random::<f64>() < 0.3 {
            Some(DVector::from_fn(n_c, |_, _| -rng.random_range(0.3..1.5)))
        } else {
            None
        };
        let q = spd(rng, n, 0.5, 1.5);
        let r = spd(rng, m, 0.5, 1.5);
        let plant = match PlantModel::new(a, b, c_x, c_u, upper, lower, q, r) {
            Ok(p) => p,
            Err(_) => {
                rejected += 1;
                continue;
            }
        };
        let basis = BasisFamily::laguerre(s, lambda).unwrap();
        let x0 = normal_vec(rng, n) * 1.5;
        let problem = match build_si_qp(&plant, &basis, &x0) {
            Ok(p) => p,
            Err(_) => {
                rejected += 1;
                continue;
            }
        };
        match sip::solve(&problem, config) {
            Ok(out) => {
                return (
                    RandomCase {
                        plant,
                        basis,
                        x0,
                        problem,
                    },
                    out,
                    rejected,
                )
            }
            Err(Error::Infeasible) | Err(Error::RankDeficient(_)) => rejected += 1,
            Err(e) => panic!("unexpected solver error {e}"),
        }
    }
}

/// Random dense equality-constrained QP data plus a pool of candidate rows.
pub fn random_kernel_data(
    rng: &mut StdRng,
    d: usize,
    p: usize,
    pool: usize,
) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>, Vec<Candidate>) {
    let h = spd(rng, d, 0.2, 3.0);
    let a = normal_mat(rng, p, d);
    let b = normal_vec(rng, p);
    let candidates = (0..pool)
        .map(|i| {
            let hi = rng.random_range(0.1..1.0);
            Candidate {
                t: i as f64,
                row: 0,
                normal: normal_vec(rng, d),
                lo: -rng.random_range(0.1..1.0),
                hi,
            }
        })
        .collect();
    (h, a, b, candidates)
}
