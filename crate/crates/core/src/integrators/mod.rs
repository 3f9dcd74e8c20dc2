//! Exponential, Patankar and classical one-step methods for `y' = A(t, y) y`.

mod driver;
mod method;
mod problem;
mod steppers;

pub use driver::{integrate, step_count, IntegrateOptions, StepDiagnostics, Trajectory, TrajectorySummary};
pub use method::MethodId;
pub use problem::{MatrixFn, OdeProblem};
pub use steppers::{
    em3_combinations, step, step_baseline, step_em1, step_em2_cheap, step_em2_mid, step_em2_trap, step_em3, step_es2,
    step_es2_signed, step_mpe, step_mprk2, CheapVariant, Es2Step, StepConfig, StepResult, CF_ALPHA, CF_BETA,
    MPRK_EPS_U,
};
