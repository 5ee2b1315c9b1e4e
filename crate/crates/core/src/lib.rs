//! Workload simulation and sensitivity estimation for single-server queues.
//!
//! The crate simulates G/G/1 workload paths driven by reproducible
//! counter-based random streams, evaluates bounded-variation test functions
//! of the workload, and estimates left/right derivatives of stationary
//! functionals with respect to service, speed, and arrival-scale parameters.
//! Finite-difference and closed-form oracles plus Palm-identity checks make
//! every estimate verifiable.

pub mod bv;
pub mod estimators;
pub mod experiment;
pub mod oracles;
pub mod palm;
pub mod queue;
pub mod rng;
pub mod stats;

pub use bv::{BVFunctional, BvError, Kind, Segment, Shape};
pub use estimators::{
    arrival_scale_derivative, classic_ipa, first_order, first_order_with, second_order,
    speed_derivative, DerivativeEstimate, EstimatorError, FirstOrderOptions, LambdaConvention,
    Order, Pairing, Side,
};
pub use experiment::{
    analytic_values, run, validate, EstimatorOp, EstimatorSpec, ExperimentConfig, FunctionalSpec,
    OracleSpec, PalmCheckSpec, ParameterSpec, ResultsDocument, RunError, RunOptions, Severity,
    ValidationIssue,
};
pub use oracles::{
    dd1_closed_forms, finite_difference, mm1_workload_moments, Dd1ClosedForms, FdEstimate,
    Mm1Moments, OracleError, Stencil,
};
pub use palm::{
    check_ergodic_equivalence, check_inversion, check_wald_lemma, PalmCheckReport, PalmError,
    PalmIdentity, ZAtArrival, ZProcess,
};
pub use queue::{
    default_warmup, lindley_step, simulate_path, simulate_star_path, stability_check,
    ArrivalFamily, ArrivalModel, CustomerPath, CustomerRecord, ParameterKind, QueueSetup,
    ScaleBase, ServiceFamily, ServiceModel, SimError, StabilityReport,
};
