//! Laguerre-type basis: evaluation, shifting and the Gram matrix.
use basis_mpc::basis::{check_assumptions, AssumptionGrid, BasisFamily};
use nalgebra::DVector;

fn main() -> basis_mpc::Result<()> {
    let basis = BasisFamily::laguerre(4, 1.0)?;
    println!("generator M =\n{}", basis.generator());
    println!("tau(0) = {}", basis.tau0().transpose());
    for t in [0.0, 0.5, 1.0, 2.0] {
        println!("tau({t}) = {}", basis.eval(t).transpose());
    }

    // shifting coefficients moves the signal in time
    let eta = DVector::from_vec(vec![1.0, -0.5, 0.25, 0.0]);
    let shifted = basis.shift_coeffs(&eta, 0.7);
    let a = basis.eval(1.2).dot(&eta);
    let b = basis.eval(0.5).dot(&shifted);
    println!("signal at 1.2 = {a:.15}, shifted signal at 0.5 = {b:.15}");

    let gram = basis.gram_closed_form(30.0);
    println!("Gram over [0, 30] (close to I):\n{gram:.6}");
    let report = check_assumptions(&basis, &AssumptionGrid::default());
    println!("{report:?}");
    Ok(())
}
