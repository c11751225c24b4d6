//! Command-line front end. The binary only forwards `std::env::args_os` to
//! [`run`] and exits with the returned code.
//!
//! Exit codes: 0 success, 1 infeasible or unconverged (or any other numerical
//! failure), 2 bad input.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use crate::basis::BasisFamily;
use crate::certify::{self, CertOptions, Violation};
use crate::error::Error;
use crate::horizon;
use crate::mpc::{self, MpcConfig};
use crate::oracle::{self, TranscriptionSpec};
use crate::poly;
use crate::problem_file::ProblemFile;
use crate::qp::Side;
use crate::sip::{self, SolverConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "basis-mpc",
    version,
    about = "Basis-function constrained LQR / MPC"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the semi-infinite QP at x0.
    Solve(Common),
    /// Closed-loop MPC simulation, written as CSV.
    Simulate(Common),
    /// Certify a coefficient vector against its bounds.
    Certify(Common),
    /// Compact-horizon certificate of the basis.
    Horizon(Common),
    /// Offline greedy sampling for the fixed online QP.
    PrecomputePoly(Common),
    /// Dense time-grid reference solution.
    Oracle(Common),
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long = "Td")]
    t_d: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long = "grid-step")]
    grid_step: Option<f64>,
}

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| fmt_f64(*x)).collect();
    format!("[{}]", parts.join(", "))
}

/// Error plus the exit code it maps to.
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Infeasible
            | Error::Unconverged { .. }
            | Error::DegenerateWorkingSet(_)
            | Error::NoStabilizingSolution(_)
            | Error::Io(_) => EXIT_FAILED,
            Error::InvalidArgument(_)
            | Error::InvalidBasis(_)
            | Error::NonFinite(_)
            | Error::RankDeficient(_)
            | Error::Dimension { .. }
            | Error::GridTooFine { .. }
            | Error::Parse { .. } => EXIT_INPUT,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn input_error(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message: msg.into(),
    }
}

type CliResult = std::result::Result<i32, Failure>;

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Diagnostics go to stderr, a short summary to stdout.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    let (common, f): (&Common, fn(&Common, &ProblemFile) -> CliResult) = match &command {
        Command::Solve(c) => (c, cmd_solve),
        Command::Simulate(c) => (c, cmd_simulate),
        Command::Certify(c) => (c, cmd_certify),
        Command::Horizon(c) => (c, cmd_horizon),
        Command::PrecomputePoly(c) => (c, cmd_poly),
        Command::Oracle(c) => (c, cmd_oracle),
    };
    let doc = load(common)?;
    fs::create_dir_all(&common.out)
        .map_err(|e| input_error(format!("cannot create {}: {e}", common.out.display())))?;
    f(common, &doc)
}

fn load(c: &Common) -> std::result::Result<ProblemFile, Failure> {
    let text = fs::read_to_string(&c.problem)
        .map_err(|e| input_error(format!("cannot read {}: {e}", c.problem.display())))?;
    let mut doc = ProblemFile::parse(&text)?;
    if let Some(s) = c.s {
        doc.basis.s = s;
    }
    if let Some(l) = c.lambda {
        doc.basis.lambda = l;
    }
    if c.eps.is_some() {
        doc.solver.eps = c.eps;
    }
    if c.max_iter.is_some() {
        doc.solver.max_iter = c.max_iter;
    }
    if c.gamma.is_some() {
        doc.solver.gamma = c.gamma;
    }
    if c.t_d.is_some() {
        doc.mpc.t_d = c.t_d;
    }
    if c.steps.is_some() {
        doc.mpc.steps = c.steps;
    }
    doc.validate()?;
    Ok(doc)
}

fn solver_config(doc: &ProblemFile) -> SolverConfig {
    let d = SolverConfig::default();
    SolverConfig {
        eps: doc.solver.eps.unwrap_or(d.eps),
        max_iter: doc.solver.max_iter.unwrap_or(d.max_iter),
        gamma: doc.solver.gamma,
        ..d
    }
}

fn basis_of(doc: &ProblemFile) -> std::result::Result<BasisFamily, Failure> {
    Ok(BasisFamily::laguerre(doc.basis.s, doc.basis.lambda)?)
}

fn require_plant(doc: &ProblemFile) -> std::result::Result<(), Failure> {
    if doc.has_plant() {
        Ok(())
    } else {
        Err(input_error("this command needs the plant matrices"))
    }
}

fn write(out: &Path, name: &str, body: &str) -> std::result::Result<(), Failure> {
    let path = out.join(name);
    fs::write(&path, body).map_err(|e| Failure {
        code: EXIT_FAILED,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn cmd_solve(c: &Common, doc: &ProblemFile) -> CliResult {
    require_plant(doc)?;
    let plant = doc.plant()?;
    let x0 = doc.initial_state()?;
    let basis = basis_of(doc)?;
    let problem = mpc::build_si_qp(&plant, &basis, &x0)?;
    let cfg = solver_config(doc);
    let out = sip::solve(&problem, &cfg)?;
    let r = &out.report;
    let mut s = String::new();
    let status = if r.converged {
        "converged"
    } else {
        "unconverged"
    };
    writeln!(s, "status = \"{status}\"").unwrap();
    writeln!(s, "J = {}", fmt_f64(out.j)).unwrap();
    writeln!(s, "iterations = {}", r.iterations).unwrap();
    writeln!(s, "kernel_iterations = {}", r.kernel_iterations).unwrap();
    writeln!(s, "T_c = {}", fmt_f64(problem.t_c)).unwrap();
    writeln!(s, "kkt_residual = {}", fmt_f64(r.kkt.max_residual())).unwrap();
    writeln!(s, "samples = {}", fmt_vec(&out.samples)).unwrap();
    writeln!(s, "J_seq = {}", fmt_vec(&r.j_seq)).unwrap();
    writeln!(s, "z = {}", fmt_vec(out.z.as_slice())).unwrap();
    write(&c.out, "solution.toml", &s)?;
    println!(
        "{status} J = {} iterations = {}",
        fmt_f64(out.j),
        r.iterations
    );
    Ok(if r.converged { EXIT_OK } else { EXIT_FAILED })
}

fn cmd_simulate(c: &Common, doc: &ProblemFile) -> CliResult {
    require_plant(doc)?;
    let plant = doc.plant()?;
    let x0 = doc.initial_state()?;
    let d = MpcConfig::default();
    let cfg = MpcConfig {
        s: doc.basis.s,
        lambda: doc.basis.lambda,
        t_d: doc.mpc.t_d.unwrap_or(d.t_d),
        steps: doc.mpc.steps.unwrap_or(d.steps),
        solver: solver_config(doc),
        warm_start: true,
    };
    let (template, log) = mpc::simulate(&plant, &cfg, &x0)?;
    let dt = c
        .grid_step
        .or(doc.mpc.output_step)
        .unwrap_or(cfg.t_d / 10.0);
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(input_error(format!(
            "output step must be positive, got {dt}"
        )));
    }
    let sub = ((cfg.t_d / dt).round() as usize).max(1);
    let (n, m) = (plant.n(), plant.m());

    let mut csv = String::from("t");
    for i in 1..=n {
        write!(csv, ",x{i}").unwrap();
    }
    for i in 1..=m {
        write!(csv, ",u{i}").unwrap();
    }
    csv.push_str(",J_mpc,iters\n");
    for (k, z) in log.solutions.iter().enumerate() {
        let u_mat = template.input_matrix(z);
        for j in 0..sub {
            let tau = cfg.t_d * j as f64 / sub as f64;
            let x = template.integrate(&log.states[k], &u_mat, tau);
            let u = template.predicted_input(z, tau);
            let mut fields = vec![fmt_f64(k as f64 * cfg.t_d + tau)];
            fields.extend(x.iter().map(|v| fmt_f64(*v)));
            fields.extend(u.iter().map(|v| fmt_f64(*v)));
            fields.push(fmt_f64(log.j_mpc[k]));
            fields.push(log.iters[k].to_string());
            csv.push_str(&fields.join(","));
            csv.push('\n');
        }
    }
    write(&c.out, "simulate.csv", &csv)?;
    let x_end = log.states.last().expect("initial state is logged");
    println!(
        "steps = {} final |x| = {} aborted = {}",
        log.steps(),
        fmt_f64(x_end.norm()),
        log.aborted.is_some()
    );
    match log.aborted {
        Some(e) => Err(e.into()),
        None => Ok(EXIT_OK),
    }
}

fn describe(v: &Violation) -> String {
    let side = match v.side {
        Side::Upper => "upper",
        Side::Lower => "lower",
    };
    format!(
        "Violated row = {} t = {} value = {} bound = {} side = {side}",
        v.row,
        fmt_f64(v.t),
        fmt_f64(v.value),
        fmt_f64(v.bound)
    )
}

fn cmd_certify(c: &Common, doc: &ProblemFile) -> CliResult {
    let Some(sec) = &doc.certify else {
        return Err(input_error("certify needs a [certify] table"));
    };
    let basis = basis_of(doc)?;
    let opts = CertOptions {
        gamma: doc.solver.gamma,
        ..CertOptions::default()
    };
    let eps = c.eps.unwrap_or(0.0);
    let mut violations = vec![];
    let mut segments = 0;
    let t_end;
    if let Some(rows) = &sec.rows {
        let lo = sec.lower.clone().unwrap_or_default();
        let hi = sec.upper.clone().unwrap_or_default();
        t_end = match sec.horizon {
            Some(h) => h,
            None => raw_horizon(&basis, &lo, &hi)?,
        };
        for (i, r) in rows.iter().enumerate() {
            let coeffs = DVector::from_column_slice(r);
            let rc =
                certify::certify_row(&basis, &coeffs, i, lo[i] - eps, hi[i] + eps, t_end, &opts);
            segments += rc.segments;
            violations.extend(rc.violation.map(|v| refine(&basis, &coeffs, v, t_end)));
        }
    } else {
        let plant = doc.plant()?;
        let x0 = doc.initial_state()?;
        let mut problem = mpc::build_si_qp(&plant, &basis, &x0)?;
        if let Some(h) = sec.horizon {
            problem.t_c = h;
        }
        t_end = problem.t_c;
        let z = DVector::from_column_slice(sec.z.as_deref().unwrap_or(&[]));
        let res = certify::certify_bounds(
            &problem,
            &z,
            &problem.l_b.add_scalar(-eps),
            &problem.l_u.add_scalar(eps),
            &opts,
        );
        segments = res.segments;
        for v in res.row_violations {
            let coeffs = problem.row_coeffs(&z, v.row);
            violations.push(refine(&basis, &coeffs, v, t_end));
        }
    }
    let mut s = String::new();
    writeln!(s, "horizon = {}", fmt_f64(t_end)).unwrap();
    writeln!(s, "segments = {segments}").unwrap();
    match certify::worst_violation(&violations) {
        None => {
            writeln!(s, "Satisfied").unwrap();
            println!("Satisfied");
        }
        Some(w) => {
            for v in &violations {
                writeln!(s, "{}", describe(v)).unwrap();
            }
            println!("{}", describe(&w));
        }
    }
    write(&c.out, "certify.txt", &s)?;
    Ok(EXIT_OK)
}

/// Moves a witness to the local extremum of its signal, which is where a
/// reader expects it.
fn refine(basis: &BasisFamily, coeffs: &DVector<f64>, v: Violation, t_end: f64) -> Violation {
    let t = sip::refine_extremum(basis, coeffs, v.t, t_end);
    Violation {
        t,
        value: basis.eval(t).dot(coeffs),
        ..v
    }
}

fn raw_horizon(basis: &BasisFamily, lo: &[f64], hi: &[f64]) -> std::result::Result<f64, Failure> {
    let mut t_c: f64 = 0.0;
    for (l, h) in lo.iter().zip(hi) {
        let t = if *l == -*h {
            horizon::compact_horizon_symmetric(basis)?.t_c
        } else {
            horizon::compact_horizon_asymmetric(basis, *l, *h)?.t_c
        };
        t_c = t_c.max(t);
    }
    Ok(t_c)
}

fn cmd_horizon(c: &Common, doc: &ProblemFile) -> CliResult {
    let basis = basis_of(doc)?;
    let sym = horizon::compact_horizon_symmetric(&basis)?;
    let mut s = String::new();
    writeln!(s, "[symmetric]\n{sym}").unwrap();
    let mut pairs: Vec<(f64, f64)> = vec![];
    if doc.has_plant() {
        let plant = doc.plant()?;
        let lo = plant.lower();
        pairs.extend((0..plant.n_c()).map(|i| (lo[i], plant.b_upper[i])));
    }
    if let Some(sec) = &doc.certify {
        if let (Some(lo), Some(hi)) = (&sec.lower, &sec.upper) {
            pairs.extend(lo.iter().copied().zip(hi.iter().copied()));
        }
    }
    let mut t_c = sym.t_c;
    for (i, (l, h)) in pairs.iter().enumerate() {
        if *l != -*h {
            let a = horizon::compact_horizon_asymmetric(&basis, *l, *h)?;
            writeln!(s, "[row{i}]\n{a}").unwrap();
            t_c = t_c.max(a.t_c);
        }
    }
    write(&c.out, "horizon.txt", &s)?;
    println!("T_c = {}", fmt_f64(t_c));
    Ok(EXIT_OK)
}

fn cmd_poly(c: &Common, doc: &ProblemFile) -> CliResult {
    require_plant(doc)?;
    let plant = doc.plant()?;
    let x0 = doc.initial_state()?;
    let basis = basis_of(doc)?;
    let problem = mpc::build_si_qp(&plant, &basis, &x0)?;
    let sec = doc.poly.clone().unwrap_or_default();
    let eps_tight = sec.eps_tight.unwrap_or(0.05);
    let j_bar = match sec.j_bar {
        Some(j) => j,
        None => {
            let out = sip::solve(&problem, &solver_config(doc))?;
            if !out.report.converged {
                return Err(Error::Unconverged {
                    iterations: out.report.iterations,
                }
                .into());
            }
            1.2 * out.j
        }
    };
    let approx = poly::greedy_sample(&problem, j_bar, eps_tight)?;
    let fixed = poly::export_fixed_qp(&approx, &problem);
    let sol = fixed.solve()?;
    let mut s = String::new();
    writeln!(s, "eps_tight = {}", fmt_f64(eps_tight)).unwrap();
    writeln!(s, "J_bar = {}", fmt_f64(j_bar)).unwrap();
    writeln!(s, "T_c = {}", fmt_f64(approx.t_c)).unwrap();
    writeln!(s, "J_fixed = {}", fmt_f64(sol.objective)).unwrap();
    writeln!(s, "samples = {}", fmt_vec(&approx.sample_times())).unwrap();
    for r in &approx.rows {
        writeln!(s, "\n[[row]]").unwrap();
        writeln!(s, "row = {}", r.row).unwrap();
        writeln!(s, "lipschitz = {}", fmt_f64(r.lipschitz)).unwrap();
        writeln!(s, "spacing = {}", fmt_f64(r.spacing)).unwrap();
        writeln!(s, "grid_len = {}", r.grid_len).unwrap();
        writeln!(s, "scan_end = {}", fmt_f64(r.scan_end)).unwrap();
        writeln!(s, "max_peak = {}", fmt_f64(r.max_peak)).unwrap();
        writeln!(s, "samples = {}", fmt_vec(&r.samples)).unwrap();
    }
    write(&c.out, "poly.toml", &s)?;
    println!(
        "samples = {} J_fixed = {}",
        approx.sample_times().len(),
        fmt_f64(sol.objective)
    );
    Ok(EXIT_OK)
}

fn cmd_oracle(c: &Common, doc: &ProblemFile) -> CliResult {
    require_plant(doc)?;
    let plant = doc.plant()?;
    let x0 = doc.initial_state()?;
    let sec = doc.oracle.clone().unwrap_or_default();
    let h = c.grid_step.or(sec.h).unwrap_or(0.005);
    let t_end = sec.t_end.unwrap_or(20.0);
    let spec = TranscriptionSpec::new(h, t_end)?;
    let sol = oracle::dense_grid_qp(&plant, &x0, &spec)?;
    let mut csv = String::from("t");
    for i in 1..=plant.n() {
        write!(csv, ",x{i}").unwrap();
    }
    for i in 1..=plant.m() {
        write!(csv, ",u{i}").unwrap();
    }
    csv.push('\n');
    for ((t, x), u) in sol.times.iter().zip(&sol.states).zip(&sol.inputs) {
        let mut fields = vec![fmt_f64(*t)];
        fields.extend(x.iter().map(|v| fmt_f64(*v)));
        fields.extend(u.iter().map(|v| fmt_f64(*v)));
        csv.push_str(&fields.join(","));
        csv.push('\n');
    }
    write(&c.out, "oracle.csv", &csv)?;
    write(
        &c.out,
        "oracle.toml",
        &format!(
            "J = {}\nh = {}\nt_end = {}\niterations = {}\n",
            fmt_f64(sol.j),
            fmt_f64(h),
            fmt_f64(t_end),
            sol.iterations
        ),
    )?;
    println!("J = {}", fmt_f64(sol.j));
    Ok(EXIT_OK)
}
