//! Receding-horizon closed loop with warm starts.
use basis_mpc::mpc::{simulate, MpcConfig, PlantModel};
use basis_mpc::sip::SolverConfig;
use nalgebra::DVector;

fn main() -> basis_mpc::Result<()> {
    let plant = PlantModel::double_integrator(0.5)?;
    let cfg = MpcConfig {
        solver: SolverConfig {
            eps: 1e-6,
            ..SolverConfig::default()
        },
        steps: 60,
        ..MpcConfig::default()
    };
    let x0 = DVector::from_vec(vec![2.0, 0.0]);
    let (template, log) = simulate(&plant, &cfg, &x0)?;
    println!("  k        t    |x|        u(0)       J_mpc   iters");
    for k in (0..log.steps()).step_by(5) {
        let u = template.predicted_input(&log.solutions[k], 0.0)[0];
        println!(
            "{k:3} {:8.2} {:10.3e} {:10.5} {:11.5e} {:5}",
            k as f64 * cfg.t_d,
            log.states[k].norm(),
            u,
            log.j_mpc[k],
            log.iters[k]
        );
    }
    println!(
        "final |x| = {:.3e}, aborted = {:?}",
        log.states.last().unwrap().norm(),
        log.aborted
    );
    Ok(())
}
