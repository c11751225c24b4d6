mod common;

use basis_mpc::error::Error;
use basis_mpc::qp::{
    self, Candidate, KernelOptions, RangeSpaceCache, Side, WorkingEntry, WorkingSet,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use common::*;

/// Equality-constrained minimizer of `zᵀHz` by the dense KKT system, or
/// `None` when the rows are dependent.
fn eq_qp(h: &DMatrix<f64>, rows: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let (d, k) = (h.nrows(), rows.nrows());
    let mut kkt = DMatrix::zeros(d + k, d + k);
    kkt.view_mut((0, 0), (d, d)).copy_from(&(h * 2.0));
    kkt.view_mut((d, 0), (k, d)).copy_from(rows);
    kkt.view_mut((0, d), (d, k)).copy_from(&rows.transpose());
    let mut b = DVector::zeros(d + k);
    b.rows_mut(d, k).copy_from(rhs);
    let svd = kkt.clone().svd(true, true);
    let smin = svd.singular_values.min();
    if smin < 1e-10 * svd.singular_values.max() {
        return None;
    }
    Some(kkt.lu().solve(&b)?.rows(0, d).into_owned())
}

/// Minimum over every assignment of inactive/upper/lower to the candidates
/// of the feasible equality-constrained optima.
fn brute_force(
    h: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    cands: &[Candidate],
) -> Option<(f64, DVector<f64>)> {
    let n = cands.len();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for code in 0..3usize.pow(n as u32) {
        let mut rows: Vec<DVector<f64>> = (0..a.nrows()).map(|i| a.row(i).transpose()).collect();
        let mut rhs: Vec<f64> = b.iter().copied().collect();
        let mut c = code;
        for cand in cands {
            match c % 3 {
                1 => {
                    rows.push(cand.normal.clone());
                    rhs.push(cand.hi);
                }
                2 => {
                    rows.push(cand.normal.clone());
                    rhs.push(cand.lo);
                }
                _ => {}
            }
            c /= 3;
        }
        if rows.len() > h.nrows() {
            continue;
        }
        let mat = DMatrix::from_rows(&rows.iter().map(|r| r.transpose()).collect::<Vec<_>>());
        let Some(z) = eq_qp(h, &mat, &DVector::from_vec(rhs)) else {
            continue;
        };
        let feasible = cands.iter().all(|c| {
            let v = c.normal.dot(&z);
            v <= c.hi + 1e-9 && v >= c.lo - 1e-9
        });
        if feasible {
            let j = z.dot(&(h * &z));
            if best.as_ref().is_none_or(|(bj, _)| j < *bj) {
                best = Some((j, z));
            }
        }
    }
    best
}

#[test]
fn finite_solve_matches_enumeration() {
    let mut rng = StdRng::seed_from_u64(11);
    let mut infeasible = 0;
    for _ in 0..150 {
        let d = rng.random_range(3..=6);
        let p = rng.random_range(1..=2);
        let pool = rng.random_range(2..=6);
        let (h, a, b, mut cands) = random_kernel_data(&mut rng, d, p, pool);
        // make some candidates bind
        for c in &mut cands {
            c.hi *= 0.3;
            c.lo *= 0.3;
        }
        let cache = RangeSpaceCache::new(&h, &a, &b).unwrap();
        let reference = brute_force(&h, &a, &b, &cands);
        match qp::solve_finite(&cache, &cands, WorkingSet::new(), KernelOptions::default()) {
            Ok(sol) => {
                let (j_ref, z_ref) =
                    reference.expect("kernel found a solution the enumeration missed");
                assert!(
                    (sol.objective - j_ref).abs() <= 1e-8 * (1.0 + j_ref),
                    "{} vs {j_ref}",
                    sol.objective
                );
                assert!((&sol.z - &z_ref).amax() <= 1e-6 * (1.0 + z_ref.amax()));
                let kkt = qp::kkt_residuals(&cache, &sol, &cands);
                assert!(kkt.max_residual() < 1e-8, "{kkt:?}");
                assert!(sol.multipliers.iter().all(|m| *m >= -1e-12));
            }
            Err(Error::Infeasible) => {
                infeasible += 1;
                assert!(
                    reference.is_none(),
                    "kernel reported infeasible, enumeration found {reference:?}"
                );
            }
            Err(e) => panic!("unexpected {e}"),
        }
    }
    // most draws must exercise the comparison
    assert!(infeasible < 75, "{infeasible} infeasible draws");
}

#[test]
fn objective_trace_is_non_decreasing() {
    let mut rng = StdRng::seed_from_u64(12);
    for _ in 0..50 {
        let (h, a, b, mut cands) = random_kernel_data(&mut rng, 8, 2, 12);
        for c in &mut cands {
            c.hi *= 0.2;
            c.lo *= 0.2;
        }
        let cache = RangeSpaceCache::new(&h, &a, &b).unwrap();
        if let Ok(sol) =
            qp::solve_finite(&cache, &cands, WorkingSet::new(), KernelOptions::default())
        {
            for w in sol.objective_trace.windows(2) {
                assert!(
                    w[1] >= w[0] - 1e-10 * (1.0 + w[0].abs()),
                    "{:?}",
                    sol.objective_trace
                );
            }
        }
    }
}

#[test]
fn warm_start_reaches_the_cold_optimum() {
    let mut rng = StdRng::seed_from_u64(13);
    for _ in 0..40 {
        let (h, a, b, mut cands) = random_kernel_data(&mut rng, 7, 2, 10);
        for c in &mut cands {
            c.hi *= 0.3;
            c.lo *= 0.3;
        }
        let cache = RangeSpaceCache::new(&h, &a, &b).unwrap();
        let Ok(cold) =
            qp::solve_finite(&cache, &cands, WorkingSet::new(), KernelOptions::default())
        else {
            continue;
        };
        // an arbitrary, partly wrong guess of the active set
        let mut guess = WorkingSet::new();
        for c in cands.iter().take(3) {
            let _ = guess.add(WorkingEntry::from_candidate(c, Side::Upper), &cache);
        }
        let warm = qp::solve_finite(&cache, &cands, guess, KernelOptions::default()).unwrap();
        assert!((warm.objective - cold.objective).abs() <= 1e-9 * (1.0 + cold.objective));
    }
}

fn check_factors(ws: &WorkingSet) {
    let mut scratch = ws.clone();
    scratch.refactor().unwrap();
    let (l1, d1) = ws.factors();
    let (l2, d2) = scratch.factors();
    let scale = d2.amax().max(1.0);
    assert!((l1 - l2).amax() < 1e-8);
    assert!((d1 - d2).amax() / scale < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn incremental_factors_match_refactor(seed in any::<u64>(), ops in prop::collection::vec((any::<bool>(), 0usize..1000), 20)) {
        let mut rng = StdRng::seed_from_u64(seed);
        let d = 10;
        let (h, a, b, pool) = random_kernel_data(&mut rng, d, 2, 16);
        let cache = RangeSpaceCache::new(&h, &a, &b).unwrap();
        let mut ws = WorkingSet::new();
        for (grow, idx) in ops {
            if (grow || ws.is_empty()) && ws.len() + 3 < d {
                let c = &pool[idx % pool.len()];
                if ws.contains(c.t, c.row, Side::Upper) || ws.contains(c.t, c.row, Side::Lower) {
                    continue;
                }
                let side = if idx % 2 == 0 { Side::Upper } else { Side::Lower };
                let _ = ws.add(WorkingEntry::from_candidate(c, side), &cache);
            } else if !ws.is_empty() {
                ws.drop(idx % ws.len()).unwrap();
            }
            check_factors(&ws);
        }
    }
}
