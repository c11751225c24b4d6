//! Offline sampling of a fixed polytope and the online fixed QP.
use std::time::Instant;

use basis_mpc::basis::BasisFamily;
use basis_mpc::certify;
use basis_mpc::mpc::{build_si_qp, PlantModel};
use basis_mpc::poly::{export_fixed_qp, greedy_sample};
use basis_mpc::sip::{solve, SolverConfig};
use nalgebra::DVector;

fn main() -> basis_mpc::Result<()> {
    let plant = PlantModel::double_integrator(1.0)?;
    let basis = BasisFamily::laguerre(6, 1.0)?;
    let problem = build_si_qp(&plant, &basis, &DVector::from_vec(vec![1.0, 0.0]))?;
    let si = solve(
        &problem,
        &SolverConfig {
            eps: 1e-6,
            ..SolverConfig::default()
        },
    )?;

    let start = Instant::now();
    let approx = greedy_sample(&problem, 1.2 * si.j, 0.05)?;
    println!("offline: {:.2?}", start.elapsed());
    for r in &approx.rows {
        println!(
            "row {}: L = {:.3}, spacing {:.2e}, scanned to t = {:.3}, {} samples in {} rounds",
            r.row,
            r.lipschitz,
            r.spacing,
            r.scan_end,
            r.samples.len(),
            r.rounds
        );
    }
    let fixed = export_fixed_qp(&approx, &problem);
    let start = Instant::now();
    let sol = fixed.solve()?;
    println!("online: {:.2?}", start.elapsed());
    println!("J_fixed = {:.8}, J_SI = {:.8}", sol.objective, si.j);
    let cert = certify::certify(&problem, &sol.z, 0.0, None);
    println!("fixed-QP solution certified: {}", cert.is_satisfied());
    Ok(())
}
