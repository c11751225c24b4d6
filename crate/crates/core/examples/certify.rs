//! Certifying a basis signal against bounds on an interval.
use basis_mpc::basis::BasisFamily;
use basis_mpc::certify::{certify_row, CertOptions};
use nalgebra::DVector;

fn main() -> basis_mpc::Result<()> {
    // √2 e^{-t}(1 - 2t), minimum -2√2 e^{-1.5} ≈ -0.631 at t = 1.5
    let basis = BasisFamily::laguerre(2, 1.0)?;
    let c = DVector::from_vec(vec![0.0, 1.0]);
    for lower in [-0.5, -0.7] {
        let r = certify_row(&basis, &c, 0, lower, 2.0, 10.0, &CertOptions::default());
        match r.violation {
            // the witness is the first instant found outside the bound
            Some(v) => println!(
                "lower {lower}: violated at t = {:.4} (value {:.6}), {} segments",
                v.t, v.value, r.segments
            ),
            None => println!(
                "lower {lower}: satisfied on [0, 10], {} segments",
                r.segments
            ),
        }
    }
    let quick = CertOptions {
        gamma: Some(0.5),
        ..CertOptions::default()
    };
    let r = certify_row(&basis, &c, 0, -0.7, 2.0, 10.0, &quick);
    println!("with the quick check: {} segments", r.segments);
    Ok(())
}
