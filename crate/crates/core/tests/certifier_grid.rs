mod common;

use basis_mpc::basis::BasisFamily;
use basis_mpc::certify::{self, CertOptions};
use basis_mpc::mpc::{build_si_qp, PlantModel};
use basis_mpc::oracle;
use basis_mpc::qp::Side;
use nalgebra::DVector;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use common::*;

fn random_row(rng: &mut StdRng) -> (BasisFamily, DVector<f64>, f64, f64, f64) {
    let s = rng.random_range(1..=5);
    let basis = BasisFamily::laguerre(s, rng.random_range(0.5..2.0)).unwrap();
    let c = normal_vec(rng, s);
    let lo = -rng.random_range(0.2..2.0);
    let hi = rng.random_range(0.2..2.0);
    (basis, c, lo, hi, rng.random_range(1.0..4.0))
}

#[test]
fn agrees_with_grid_outside_band() {
    let mut rng = StdRng::seed_from_u64(21);
    for _ in 0..80 {
        let (basis, c, lo, hi, t_end) = random_row(&mut rng);
        let grid =
            oracle::grid_certify(&basis, std::slice::from_ref(&c), &[lo], &[hi], t_end, 1e-4);
        let rc = certify::certify_row(&basis, &c, 0, lo, hi, t_end, &CertOptions::default());
        if grid.worst_margin < -1e-5 {
            assert!(rc.violation.is_some(), "grid margin {}", grid.worst_margin);
        }
        if grid.worst_margin > 1e-5 {
            assert!(rc.violation.is_none());
        }
        if let Some(v) = rc.violation {
            let value = basis.eval(v.t).dot(&c);
            assert_eq!(value, v.value);
            match v.side {
                Side::Upper => assert!(value > hi),
                Side::Lower => assert!(value < lo),
            }
        }
    }
}

#[test]
fn quick_check_does_not_change_outcome() {
    let mut rng = StdRng::seed_from_u64(22);
    for _ in 0..80 {
        let (basis, c, lo, hi, t_end) = random_row(&mut rng);
        let plain = certify::certify_row(&basis, &c, 0, lo, hi, t_end, &CertOptions::default());
        let quick = CertOptions {
            gamma: Some(0.5),
            ..CertOptions::default()
        };
        let fast = certify::certify_row(&basis, &c, 0, lo, hi, t_end, &quick);
        assert_eq!(plain.violation.is_some(), fast.violation.is_some());
    }
}

#[test]
fn segment_count_stays_below_floor_limit() {
    let mut rng = StdRng::seed_from_u64(23);
    let opts = CertOptions::default();
    for _ in 0..40 {
        let (basis, c, lo, hi, t_end) = random_row(&mut rng);
        let rc = certify::certify_row(&basis, &c, 0, lo, hi, t_end, &opts);
        assert!(rc.segments as f64 <= 1.0 / opts.min_step_rel + 1.0);
        assert!(rc.segments <= 10_000, "{}", rc.segments);
    }
}

#[test]
fn problem_level_witness_is_worst_row() {
    let plant = PlantModel::double_integrator(0.3).unwrap();
    let basis = BasisFamily::laguerre(4, 1.0).unwrap();
    let problem = build_si_qp(&plant, &basis, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
    // the unconstrained optimum overshoots |u| ≤ 0.3 at t = 0
    let cache = problem.cache().unwrap();
    let z = cache.b_hat.clone();
    let res = certify::certify(&problem, &z, 0.0, None);
    let v = res
        .violation
        .expect("unconstrained optimum violates the bound");
    assert!(v.magnitude() > 0.0);
    assert!(res
        .row_violations
        .iter()
        .all(|w| w.magnitude() <= v.magnitude()));
}
