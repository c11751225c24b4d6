//! Loading a TOML problem and running it through the solver.
use basis_mpc::basis::BasisFamily;
use basis_mpc::mpc::build_si_qp;
use basis_mpc::problem_file::ProblemFile;
use basis_mpc::sip::{solve, SolverConfig};

const DOC: &str = r#"
A = [[0.0, 1.0], [0.0, 0.0]]
B = [[0.0], [1.0]]
C_x = [[0.0, 0.0]]
C_u = [[1.0]]
b = [0.5]
Q = [[1.0, 0.0], [0.0, 1.0]]
R = [[1.0]]
x0 = [2.0, 0.0]

[basis]
s = 6
lambda = 1.0
"#;

fn main() -> basis_mpc::Result<()> {
    let doc = ProblemFile::parse(DOC)?;
    let plant = doc.plant()?;
    let basis = BasisFamily::laguerre(doc.basis.s, doc.basis.lambda)?;
    let out = solve(
        &build_si_qp(&plant, &basis, &doc.initial_state()?)?,
        &SolverConfig::default(),
    )?;
    println!("J = {:.10}", out.j);
    println!("re-emitted:\n{}", doc.emit());
    match ProblemFile::parse("A = [[1.0]\n") {
        Err(e) => println!("malformed input: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
