//! Command-line harness: single runs, convergence studies, invariant audits,
//! catalog listing and problem-file validation.

// negated comparisons are how NaN gets rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod convergence;
pub mod error;
pub mod format;
pub mod report;

pub use commands::{run_cli, Cli, Command};
pub use convergence::{ConvergenceRow, ConvergenceStudy, ConvergenceTable, ErrorNorm, Reference, ReferenceSpec};
pub use error::CliError;
pub use report::{RunReport, Verdict};
