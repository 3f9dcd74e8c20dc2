//! Constructive factorizations of quadratic and mass-action systems into
//! graph-Laplacian form, and a check that a factorization reproduces its
//! right-hand side.

mod mass_action;
mod quadratic;
mod random;
mod verify;

pub use mass_action::{mass_action_laplacian, Rate, Reaction, ReactionNetwork};
pub use quadratic::{
    check_quadratic_assumptions, quadratic_laplacian, AssumptionFamily, AssumptionReport, AssumptionViolation, Pair,
    QuadraticSystem, StateMatrixFn,
};
pub use random::{random_quadratic_system, random_reaction_network};
pub use verify::{sample_simplex, verify_representation, RepresentationReport, SampleDomain};
