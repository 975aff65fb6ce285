// `!(x > 0.0)` style checks are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod bench;
pub mod cg;
pub mod environments;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod problem;
pub mod qmc;
pub mod solver;
pub mod validation;

pub use environments::{EnvId, EnvSpec, Environment};
pub use error::{Error, Result};
pub use metrics::{Evaluator, Metrics};
pub use problem::{Bilevel, GroundTruth};
pub use solver::{outer_loop, RunOutcome, SolverConfig};
