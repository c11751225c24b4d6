//! The finite dual active-set kernel on a small QP.
use basis_mpc::qp::{self, Candidate, KernelOptions, RangeSpaceCache, WorkingSet};
use nalgebra::{DMatrix, DVector};

fn main() -> basis_mpc::Result<()> {
    // minimize z1² + z2² + z3² subject to z1 + z2 + z3 = 3 and -1 ≤ z1 - z2 ≤ 0.5, z3 ≤ 0.8
    let h = DMatrix::identity(3, 3);
    let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
    let b = DVector::from_vec(vec![3.0]);
    let cache = RangeSpaceCache::new(&h, &a, &b)?;
    println!("unconstrained optimum b_hat = {:?}", cache.b_hat.as_slice());

    let candidates = vec![
        Candidate {
            t: 0.0,
            row: 0,
            normal: DVector::from_vec(vec![1.0, -1.0, 0.0]),
            lo: -1.0,
            hi: 0.5,
        },
        Candidate {
            t: 0.0,
            row: 1,
            normal: DVector::from_vec(vec![0.0, 0.0, 1.0]),
            lo: -10.0,
            hi: 0.8,
        },
    ];
    let sol = qp::solve_finite(
        &cache,
        &candidates,
        WorkingSet::new(),
        KernelOptions::default(),
    )?;
    println!("z = {:?}", sol.z.as_slice());
    println!(
        "J = {:.12}, kernel iterations = {}",
        sol.objective, sol.iterations
    );
    for (e, mu) in sol.working_set.entries().iter().zip(sol.multipliers.iter()) {
        println!(
            "active row {} ({:?}) with multiplier {mu:.6}",
            e.row, e.side
        );
    }
    println!("{:?}", qp::kkt_residuals(&cache, &sol, &candidates));
    Ok(())
}
