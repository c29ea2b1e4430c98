//! Equivalence checking and resilience verdicts.

pub mod bisim;

pub use bisim::{explicit_weak_barbed_bisim, BisimResult, BisimRun, Evidence, Side};
pub mod constraints;

pub use constraints::{check_context_constraints, ConstraintReport, Method, Outcome};
pub mod check;

pub use check::{
    check_resilience, err_unreachable, Bounds, Engine, ExplicitWsts, Query, ResilienceEvidence, ResilienceReport,
    Status,
};
