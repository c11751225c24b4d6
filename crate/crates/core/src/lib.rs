//! Constrained LQR and MPC with inputs and states parametrized by an
//! exponentially decaying basis, `u(t) = U τ(t)`, `x(t) = X τ(t)`.
//!
//! The path constraint `l_b ≤ C_x x(t) + C_u u(t) ≤ l_u` for all `t ≥ 0`
//! becomes a semi-infinite QP in the coefficients. It is solved by sampling
//! the constraint at finitely many instants ([`sip`]), with a dual active-set
//! kernel ([`qp`]) and a Taylor-envelope certifier ([`certify`]) on a compact
//! horizon ([`horizon`]).
//!
//! Runnable examples, one per capability (`cargo run --example <name>`):
//!
//! - `basis_functions`: evaluation, time shifts, Gram matrix
//! - `horizon`: compact horizons, symmetric and asymmetric
//! - `qp_kernel`: the finite active-set solve
//! - `certify`: certifying a signal, with and without the quick check
//! - `solve`: constrained LQR at one initial state
//! - `simulate`: receding-horizon closed loop
//! - `polyhedral`: offline sampling and the fixed online QP
//! - `oracle`: grid transcription, order sweep, Riccati value
//! - `problem_file`: TOML input

// `!(x > 0.0)` is used on purpose so that NaN is rejected too; index loops
// mirror the linear-algebra notation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod basis;
pub mod certify;
pub mod cli;
pub mod error;
pub mod horizon;
pub mod linalg;
pub mod mpc;
pub mod oracle;
pub mod poly;
pub mod problem_file;
pub mod qp;
pub mod sip;

pub use error::{Error, Result};
