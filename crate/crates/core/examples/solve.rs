//! Constrained LQR as a semi-infinite QP, solved by constraint sampling.
use basis_mpc::basis::BasisFamily;
use basis_mpc::mpc::{build_si_qp, PlantModel};
use basis_mpc::oracle::riccati_value;
use basis_mpc::sip::{solve, SolverConfig};
use nalgebra::DVector;

fn main() -> basis_mpc::Result<()> {
    let plant = PlantModel::double_integrator(0.5)?;
    let x0 = DVector::from_vec(vec![2.0, 0.0]);
    let basis = BasisFamily::laguerre(6, 1.0)?;
    let problem = build_si_qp(&plant, &basis, &x0)?;
    println!(
        "decision dimension {}, horizon T_c = {:.3}",
        problem.dim(),
        problem.t_c
    );

    let out = solve(
        &problem,
        &SolverConfig {
            eps: 1e-6,
            ..SolverConfig::default()
        },
    )?;
    let r = &out.report;
    println!(
        "converged = {}, iterations = {}, J = {:.10}",
        r.converged, r.iterations, out.j
    );
    println!("objective sequence: {:?}", r.j_seq);
    println!("active instants: {:?}", out.samples);
    println!(
        "KKT residual {:.2e}, iteration bound {:?}",
        r.kkt.max_residual(),
        r.bound_value
    );
    println!(
        "unconstrained LQR value {:.10}",
        riccati_value(&plant, &x0)?
    );
    Ok(())
}
