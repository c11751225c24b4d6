//! Compact horizons for symmetric and asymmetric bounds.
use basis_mpc::basis::BasisFamily;
use basis_mpc::horizon;

fn main() -> basis_mpc::Result<()> {
    for s in 1..=6 {
        let b = BasisFamily::laguerre(s, 1.0)?;
        let sym = horizon::compact_horizon_symmetric(&b)?;
        let asym = horizon::compact_horizon_asymmetric(&b, -0.1, 1.0)?;
        println!(
            "s = {s}: C2 = {:.3}, c2 = {:.4}, T_i = {:.3}, symmetric T_c = {:.3}, asymmetric(-0.1, 1) T_c = {:.3}",
            sym.big_c2, sym.c2, sym.t_i, sym.t_c, asym.t_c
        );
    }
    // larger rates shrink the horizon proportionally
    let fast = horizon::compact_horizon_symmetric(&BasisFamily::laguerre(4, 5.0)?)?;
    println!("laguerre(4, 5): T_c = {:.3}", fast.t_c);
    println!(
        "\nfull certificate for laguerre(2, 1):\n{}",
        horizon::compact_horizon_asymmetric(&BasisFamily::laguerre(2, 1.0)?, -0.1, 1.0)?
    );
    Ok(())
}
