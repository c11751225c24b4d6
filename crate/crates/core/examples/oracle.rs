//! Reference values: dense time-grid QP and the Riccati equation.
use basis_mpc::basis::BasisFamily;
use basis_mpc::mpc::{build_si_qp, cost_vs_order, PlantModel};
use basis_mpc::oracle::{dense_grid_qp, riccati_value, TranscriptionSpec};
use basis_mpc::sip::SolverConfig;
use nalgebra::DVector;

fn main() -> basis_mpc::Result<()> {
    let plant = PlantModel::double_integrator(0.5)?;
    let x0 = DVector::from_vec(vec![2.0, 0.0]);
    for h in [0.01, 0.005, 0.0025] {
        let g = dense_grid_qp(&plant, &x0, &TranscriptionSpec::new(h, 20.0)?)?;
        println!(
            "grid h = {h}: J = {:.10} ({} active-set passes)",
            g.j, g.iterations
        );
    }
    let solver = SolverConfig {
        eps: 1e-6,
        ..SolverConfig::default()
    };
    let orders = [3, 4, 6, 8, 10];
    for (s, j) in orders
        .iter()
        .zip(cost_vs_order(&plant, &x0, 1.0, &orders, &solver))
    {
        println!("basis order {s}: J = {j:?}");
    }
    println!("unconstrained LQR: {:.10}", riccati_value(&plant, &x0)?);
    let p = build_si_qp(&plant, &BasisFamily::laguerre(4, 1.0)?, &x0)?;
    println!("(order 4 has decision dimension {})", p.dim());
    Ok(())
}
