//! Declarative experiment configs and the replication runner.
//!
//! A config names the queue, the parameter, one test functional, the
//! estimators to run, and the oracles and Palm checks to compare against.
//! `run` executes seeded replications (concurrently, keyed by replication
//! index so aggregation is deterministic), pools them, and produces a
//! results document that can be serialized as JSON lines and CSV and that
//! embeds the resolved config for bitwise reproduction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bv::{BVFunctional, BvError, Kind, Segment, Shape};
use crate::estimators::{
    arrival_scale_derivative, classic_ipa, first_order, second_order, speed_derivative,
    DerivativeEstimate, EstimatorError, Order, Side,
};
use crate::oracles::{
    dd1_closed_forms, finite_difference, mm1_workload_moments, FdEstimate, OracleError, Stencil,
};
use crate::palm::{
    check_ergodic_equivalence, check_inversion, check_wald_lemma, PalmCheckReport, PalmError,
    PalmIdentity, ZAtArrival, ZProcess,
};
use crate::queue::{
    default_warmup, stability_check, ArrivalFamily, ArrivalModel, ParameterKind, QueueSetup,
    ServiceFamily, ServiceModel, SimError, StabilityReport,
};
use crate::rng::derive_seed;
use crate::stats::{pooled_mean_and_se, Z95};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub kind: ParameterKind,
    pub value: f64,
    /// Compact interval the parameter (and any stencil point) must stay in.
    pub interval: (f64, f64),
}

/// Declarative shape of one continuous segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum ShapeSpec {
    Constant,
    Linear { slope: f64 },
    Quadratic { lin: f64, quad: f64 },
    ExpLinear { coeff: f64, rate: f64 },
    Tabulated { points: Vec<(f64, f64)> },
}

impl ShapeSpec {
    fn build(&self) -> Shape {
        match self {
            ShapeSpec::Constant => Shape::Constant,
            ShapeSpec::Linear { slope } => Shape::Linear { slope: *slope },
            ShapeSpec::Quadratic { lin, quad } => Shape::Quadratic {
                lin: *lin,
                quad: *quad,
            },
            ShapeSpec::ExpLinear { coeff, rate } => Shape::ExpLinear {
                coeff: *coeff,
                rate: *rate,
            },
            ShapeSpec::Tabulated { points } => Shape::Tabulated {
                points: points.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub start: f64,
    #[serde(flatten)]
    pub shape: ShapeSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindSpec {
    Nondecreasing,
    DifferenceOfMonotone,
}

/// Declarative test functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum FunctionalSpec {
    Identity,
    Indicator {
        threshold: f64,
    },
    Ramp {
        knee: f64,
    },
    /// f(w) = w^2 / 2.
    HalfSquare,
    Constant {
        value: f64,
    },
    Piecewise {
        #[serde(default = "default_kind")]
        kind: KindSpec,
        #[serde(default)]
        segments: Vec<SegmentSpec>,
        #[serde(default)]
        atoms: Vec<(f64, f64)>,
        #[serde(default)]
        offset: f64,
    },
}

fn default_kind() -> KindSpec {
    KindSpec::Nondecreasing
}

impl FunctionalSpec {
    pub fn build(&self) -> Result<BVFunctional, BvError> {
        match self {
            FunctionalSpec::Identity => Ok(BVFunctional::identity()),
            FunctionalSpec::Indicator { threshold } => BVFunctional::indicator(*threshold),
            FunctionalSpec::Ramp { knee } => BVFunctional::ramp(*knee),
            FunctionalSpec::HalfSquare => Ok(BVFunctional::half_square()),
            FunctionalSpec::Constant { value } => Ok(BVFunctional::constant(*value)),
            FunctionalSpec::Piecewise {
                kind,
                segments,
                atoms,
                offset,
            } => {
                let kind = match kind {
                    KindSpec::Nondecreasing => Kind::Nondecreasing,
                    KindSpec::DifferenceOfMonotone => Kind::DifferenceOfMonotone,
                };
                let segs = segments
                    .iter()
                    .map(|s| Segment::new(s.start, s.shape.build()))
                    .collect();
                BVFunctional::from_parts(kind, segs, atoms.clone(), *offset)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorOp {
    FirstOrder,
    SecondOrder,
    Speed,
    ArrivalScale,
    Classic,
}

impl EstimatorOp {
    pub fn label(self) -> &'static str {
        match self {
            EstimatorOp::FirstOrder => "first-order",
            EstimatorOp::SecondOrder => "second-order",
            EstimatorOp::Speed => "speed",
            EstimatorOp::ArrivalScale => "arrival-scale",
            EstimatorOp::Classic => "classic",
        }
    }

    fn order(self) -> Order {
        match self {
            EstimatorOp::SecondOrder => Order::Second,
            _ => Order::First,
        }
    }

    fn required_kind(self) -> Option<ParameterKind> {
        match self {
            EstimatorOp::FirstOrder | EstimatorOp::SecondOrder | EstimatorOp::Classic => {
                Some(ParameterKind::ServiceTheta)
            }
            EstimatorOp::Speed => Some(ParameterKind::SpeedNu),
            EstimatorOp::ArrivalScale => Some(ParameterKind::ArrivalAlpha),
        }
    }
}

fn default_side() -> Side {
    Side::TwoSided
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub op: EstimatorOp,
    #[serde(default = "default_side")]
    pub side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum OracleSpec {
    FiniteDifference {
        /// Step; defaults to 0.01 * parameter value.
        h: Option<f64>,
        #[serde(default = "default_stencil")]
        stencil: Stencil,
    },
    Analytic,
}

fn default_stencil() -> Stencil {
    Stencil::Central
}

fn default_k() -> f64 {
    3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PalmCheckSpec {
    pub identity: PalmIdentity,
    /// Process for the inversion check.
    #[serde(default = "default_z")]
    pub z: ZProcess,
    /// Per-arrival values for the Wald-lemma check.
    #[serde(default = "default_z_arrival")]
    pub z_arrival: ZAtArrival,
    /// Pass threshold in joint standard errors.
    #[serde(default = "default_k")]
    pub k: f64,
}

fn default_z() -> ZProcess {
    ZProcess::Workload
}

fn default_z_arrival() -> ZAtArrival {
    ZAtArrival::FOfWorkload
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub arrivals: ArrivalModel,
    pub services: ServiceModel,
    pub parameter: ParameterSpec,
    pub functional: FunctionalSpec,
    pub estimators: Vec<EstimatorSpec>,
    /// Recorded customers per replication.
    pub horizon: usize,
    /// Discarded customers; defaults to a load-based heuristic.
    #[serde(default)]
    pub warmup: Option<usize>,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub oracles: Vec<OracleSpec>,
    #[serde(default)]
    pub palm_checks: Vec<PalmCheckSpec>,
}

impl ExperimentConfig {
    pub fn setup(&self) -> QueueSetup {
        QueueSetup {
            arrivals: self.arrivals,
            services: self.services,
            parameter_kind: self.parameter.kind,
            parameter_value: self.parameter.value,
        }
    }

    /// Warm-up count actually used: the explicit one, or the heuristic from
    /// the closed-form load at the configured parameter.
    pub fn resolved_warmup(&self) -> usize {
        self.warmup.unwrap_or_else(|| {
            let load = stability_check(
                &self.arrivals,
                &self.services,
                self.parameter.kind,
                (self.parameter.value, self.parameter.value),
            )
            .map(|r| r.load)
            .unwrap_or(0.5);
            default_warmup(load)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub severity: Severity,
    pub field: String,
    pub message: String,
}

impl ValidationIssue {
    fn error(field: &str, message: String) -> Self {
        ValidationIssue {
            severity: Severity::Error,
            field: field.to_string(),
            message,
        }
    }

    fn warning(field: &str, message: String) -> Self {
        ValidationIssue {
            severity: Severity::Warning,
            field: field.to_string(),
            message,
        }
    }
}

/// Schema and semantic validation; no simulation side effects.
pub fn validate(config: &ExperimentConfig) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    if let Err(e) = ArrivalModel::new(config.arrivals.family) {
        issues.push(ValidationIssue::error("arrivals", e.to_string()));
    }
    if let Err(e) = ServiceModel::new(
        config.services.family,
        config.services.theta,
        config.services.theta_interval,
    ) {
        issues.push(ValidationIssue::error("services", e.to_string()));
    }
    let p = &config.parameter;
    if p.interval.0 > p.interval.1 {
        issues.push(ValidationIssue::error(
            "parameter.interval",
            format!("empty interval [{}, {}]", p.interval.0, p.interval.1),
        ));
    }
    if p.value < p.interval.0 || p.value > p.interval.1 {
        issues.push(ValidationIssue::error(
            "parameter.value",
            format!(
                "value {} outside the interval [{}, {}]",
                p.value, p.interval.0, p.interval.1
            ),
        ));
    }
    match p.kind {
        ParameterKind::ServiceTheta => {
            let (lo, hi) = config.services.theta_interval;
            if p.interval.0 < lo || p.interval.1 > hi {
                issues.push(ValidationIssue::error(
                    "parameter.interval",
                    format!("not contained in services.theta_interval [{lo}, {hi}]"),
                ));
            }
        }
        ParameterKind::SpeedNu => {
            if p.interval.0 <= 0.0 {
                issues.push(ValidationIssue::error(
                    "parameter.interval",
                    "speed interval must be positive".to_string(),
                ));
            }
        }
        ParameterKind::ArrivalAlpha => {
            if !config.arrivals.is_scale() {
                issues.push(ValidationIssue::error(
                    "arrivals",
                    "arrival-alpha experiments need a renewal-scale arrival family".to_string(),
                ));
            }
            if p.interval.0 <= 0.0 {
                issues.push(ValidationIssue::error(
                    "parameter.interval",
                    "scale interval must be positive".to_string(),
                ));
            }
        }
    }
    let functional = match config.functional.build() {
        Ok(f) => Some(f),
        Err(e) => {
            issues.push(ValidationIssue::error("functional", e.to_string()));
            None
        }
    };
    if config.horizon == 0 {
        issues.push(ValidationIssue::error(
            "horizon",
            "horizon must be at least 1".to_string(),
        ));
    }
    if config.replications == 0 {
        issues.push(ValidationIssue::error(
            "replications",
            "replications must be at least 1".to_string(),
        ));
    }
    if let Some(w) = config.warmup {
        if w >= config.horizon && config.horizon > 0 {
            issues.push(ValidationIssue::error(
                "warmup",
                format!("warmup {w} must be smaller than the horizon {}", config.horizon),
            ));
        }
    }
    if config.estimators.is_empty() {
        issues.push(ValidationIssue::warning(
            "estimators",
            "no estimators requested".to_string(),
        ));
    }
    for (i, est) in config.estimators.iter().enumerate() {
        let field = format!("estimators[{i}]");
        if let Some(required) = est.op.required_kind() {
            if required != p.kind {
                issues.push(ValidationIssue::error(
                    &field,
                    format!(
                        "{} needs parameter.kind {:?}, config has {:?}",
                        est.op.label(),
                        required,
                        p.kind
                    ),
                ));
            }
        }
        if let Some(f) = &functional {
            let atom_free_needed =
                matches!(est.op, EstimatorOp::SecondOrder | EstimatorOp::Classic);
            if atom_free_needed && f.has_atoms() {
                issues.push(ValidationIssue::error(
                    &field,
                    format!("{} requires an atom-free functional", est.op.label()),
                ));
            }
        }
    }
    for (i, oracle) in config.oracles.iter().enumerate() {
        if let OracleSpec::FiniteDifference { h: Some(h), .. } = oracle {
            if !(*h > 0.0 && h.is_finite()) {
                issues.push(ValidationIssue::error(
                    &format!("oracles[{i}].h"),
                    format!("step must be positive and finite, got {h}"),
                ));
            }
        }
    }
    for (i, check) in config.palm_checks.iter().enumerate() {
        if !(check.k > 0.0 && check.k.is_finite()) {
            issues.push(ValidationIssue::error(
                &format!("palm_checks[{i}].k"),
                format!("pass threshold must be positive, got {}", check.k),
            ));
        }
        if check.identity == PalmIdentity::ErgodicEquivalence {
            if p.kind != ParameterKind::ServiceTheta {
                issues.push(ValidationIssue::error(
                    &format!("palm_checks[{i}]"),
                    "ergodic-equivalence needs a service-theta parameter".to_string(),
                ));
            }
            if functional.as_ref().is_some_and(|f| f.has_atoms()) {
                issues.push(ValidationIssue::error(
                    &format!("palm_checks[{i}]"),
                    "ergodic-equivalence requires an atom-free functional".to_string(),
                ));
            }
        }
    }
    match stability_check(
        &config.arrivals,
        &config.services,
        p.kind,
        p.interval,
    ) {
        Ok(report) if !report.stable => {
            issues.push(ValidationIssue::warning(
                "parameter.interval",
                format!("unstable: worst-case load {:.4} >= 1", report.load),
            ));
        }
        Err(e) => issues.push(ValidationIssue::error("parameter", e.to_string())),
        _ => {}
    }
    issues
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config validation failed: {0:?}")]
    Validation(Vec<ValidationIssue>),
    #[error("unstable input: worst-case load {:.4} (pass --force-unstable to run anyway)", .0.load)]
    Unstable(StabilityReport),
    #[error("replication {replication}: {source}")]
    Sim {
        replication: usize,
        source: SimError,
    },
    #[error("replication {replication}, {op}: {source}")]
    Estimation {
        replication: usize,
        op: &'static str,
        source: EstimatorError,
    },
    #[error("replication {replication}, finite difference: {source}")]
    Oracle {
        replication: usize,
        source: OracleError,
    },
    #[error("replication {replication}, palm check: {source}")]
    Palm {
        replication: usize,
        source: PalmError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledEstimate {
    pub op: EstimatorOp,
    #[serde(flatten)]
    pub estimate: DerivativeEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub index: usize,
    pub seed: u64,
    pub estimates: Vec<LabeledEstimate>,
    pub fd: Vec<FdEstimate>,
    pub palm: Vec<PalmCheckReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledEstimate {
    pub op: EstimatorOp,
    pub side: Side,
    pub order: Order,
    pub value: f64,
    /// Across-replication standard error (batch-means SE for a single
    /// replication).
    pub std_error: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub atom_correction: f64,
    pub n_customers: usize,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledFd {
    pub stencil: Stencil,
    pub h: f64,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticValue {
    pub quantity: String,
    pub order: Order,
    pub side: Side,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsDocument {
    pub config: ExperimentConfig,
    pub warmup_used: usize,
    pub stability: StabilityReport,
    pub unstable_forced: bool,
    pub replications: Vec<ReplicationResult>,
    pub pooled: Vec<PooledEstimate>,
    pub pooled_fd: Vec<PooledFd>,
    pub analytic: Vec<AnalyticValue>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub seed_override: Option<u64>,
    pub replications_override: Option<usize>,
    pub jobs: Option<usize>,
    pub force_unstable: bool,
}

/// Closed-form oracle values for recognized model/functional combinations:
/// M/M/1 (Poisson + exponential-scale) and D/D/1 (deterministic both sides)
/// under a service parameter.
pub fn analytic_values(config: &ExperimentConfig) -> Vec<AnalyticValue> {
    let mut out = Vec::new();
    if config.parameter.kind != ParameterKind::ServiceTheta {
        return out;
    }
    let theta = config.parameter.value;
    match (config.arrivals.family, config.services.family) {
        (ArrivalFamily::Poisson { rate }, ServiceFamily::ExponentialScale) => {
            if let Ok(m) = mm1_workload_moments(rate, theta) {
                match &config.functional {
                    FunctionalSpec::Identity => {
                        out.push(AnalyticValue {
                            quantity: "mm1 d mean/d theta".into(),
                            order: Order::First,
                            side: Side::TwoSided,
                            value: m.d_mean_dtheta,
                        });
                        out.push(AnalyticValue {
                            quantity: "mm1 d2 mean/d theta2".into(),
                            order: Order::Second,
                            side: Side::TwoSided,
                            value: m.d2_mean_dtheta2,
                        });
                    }
                    FunctionalSpec::Indicator { threshold } => {
                        out.push(AnalyticValue {
                            quantity: format!("mm1 d tail({threshold})/d theta"),
                            order: Order::First,
                            side: Side::TwoSided,
                            value: m.tail_dtheta(*threshold),
                        });
                    }
                    _ => {}
                }
            }
        }
        (
            ArrivalFamily::Deterministic { interval },
            ServiceFamily::DeterministicScale,
        ) => match &config.functional {
            FunctionalSpec::Indicator { threshold } => {
                if let Ok(c) = dd1_closed_forms(interval, theta, *threshold) {
                    out.push(AnalyticValue {
                        quantity: format!("dd1 d tail({threshold})/d theta, right"),
                        order: Order::First,
                        side: Side::Right,
                        value: c.jr,
                    });
                    out.push(AnalyticValue {
                        quantity: format!("dd1 d tail({threshold})/d theta, left"),
                        order: Order::First,
                        side: Side::Left,
                        value: c.jl,
                    });
                }
            }
            FunctionalSpec::Identity => {
                if theta < interval {
                    out.push(AnalyticValue {
                        quantity: "dd1 d mean/d theta".into(),
                        order: Order::First,
                        side: Side::TwoSided,
                        value: theta / interval,
                    });
                }
            }
            _ => {}
        },
        _ => {}
    }
    out
}

fn run_replication(
    config: &ExperimentConfig,
    f: &BVFunctional,
    index: usize,
    seed: u64,
    warmup: usize,
) -> Result<ReplicationResult, RunError> {
    let setup = config.setup();
    let n = config.horizon;
    let path = setup
        .simulate(n, seed, warmup)
        .map_err(|source| RunError::Sim {
            replication: index,
            source,
        })?;

    let mut estimates = Vec::with_capacity(config.estimators.len());
    for spec in &config.estimators {
        let res = match spec.op {
            EstimatorOp::FirstOrder => first_order(&path, f, spec.side),
            EstimatorOp::SecondOrder => second_order(&path, f, spec.side),
            EstimatorOp::Speed => speed_derivative(&path, f, spec.side),
            EstimatorOp::ArrivalScale => arrival_scale_derivative(&path, f, spec.side),
            EstimatorOp::Classic => classic_ipa(&path, f),
        };
        let estimate = res.map_err(|source| RunError::Estimation {
            replication: index,
            op: spec.op.label(),
            source,
        })?;
        estimates.push(LabeledEstimate {
            op: spec.op,
            estimate,
        });
    }

    let mut fd = Vec::new();
    for oracle in &config.oracles {
        if let OracleSpec::FiniteDifference { h, stencil } = oracle {
            let h = h.unwrap_or(0.01 * config.parameter.value.abs());
            let est = finite_difference(
                &setup,
                f,
                config.parameter.interval,
                h,
                *stencil,
                n,
                seed,
                warmup,
            )
            .map_err(|source| RunError::Oracle {
                replication: index,
                source,
            })?;
            fd.push(est);
        }
    }

    let mut palm = Vec::new();
    for check in &config.palm_checks {
        let report = match check.identity {
            PalmIdentity::Inversion => {
                check_inversion(&setup, check.z, f, n, seed, warmup, check.k)
            }
            PalmIdentity::WaldLemma => {
                check_wald_lemma(&setup, check.z_arrival, f, n, seed, warmup, check.k)
            }
            PalmIdentity::ErgodicEquivalence => {
                check_ergodic_equivalence(&setup, f, n, seed, warmup, check.k)
            }
        }
        .map_err(|source| RunError::Palm {
            replication: index,
            source,
        })?;
        palm.push(report);
    }

    Ok(ReplicationResult {
        index,
        seed,
        estimates,
        fd,
        palm,
    })
}

/// Execute the experiment: validation, stability gate, seeded replications,
/// pooling.
pub fn run(config: &ExperimentConfig, opts: RunOptions) -> Result<ResultsDocument, RunError> {
    let mut config = config.clone();
    if let Some(seed) = opts.seed_override {
        config.seed = seed;
    }
    if let Some(reps) = opts.replications_override {
        config.replications = reps;
    }
    let issues = validate(&config);
    if issues.iter().any(|i| i.severity == Severity::Error) {
        return Err(RunError::Validation(issues));
    }
    let stability = stability_check(
        &config.arrivals,
        &config.services,
        config.parameter.kind,
        config.parameter.interval,
    )
    .expect("validated config has a well-formed stability report");
    if !stability.stable && !opts.force_unstable {
        return Err(RunError::Unstable(stability));
    }
    let warmup = config.resolved_warmup();
    let f = config
        .functional
        .build()
        .expect("validated config has a well-formed functional");

    let indices: Vec<usize> = (0..config.replications).collect();
    let work = |i: &usize| {
        run_replication(&config, &f, *i, derive_seed(config.seed, *i as u64), warmup)
    };
    let replications: Result<Vec<ReplicationResult>, RunError> = match opts.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .expect("thread pool")
            .install(|| indices.par_iter().map(work).collect()),
        None => indices.par_iter().map(work).collect(),
    };
    let replications = replications?;

    let mut pooled = Vec::new();
    for (slot, spec) in config.estimators.iter().enumerate() {
        let values: Vec<f64> = replications
            .iter()
            .map(|r| r.estimates[slot].estimate.value)
            .collect();
        let (value, se_across) = pooled_mean_and_se(&values);
        let std_error = if values.len() >= 2 {
            se_across
        } else {
            replications[0].estimates[slot].estimate.std_error
        };
        let acs: Vec<f64> = replications
            .iter()
            .map(|r| r.estimates[slot].estimate.atom_correction)
            .collect();
        let first = &replications[0].estimates[slot].estimate;
        pooled.push(PooledEstimate {
            op: spec.op,
            side: first.side,
            order: spec.op.order(),
            value,
            std_error,
            ci_lo: value - Z95 * std_error,
            ci_hi: value + Z95 * std_error,
            atom_correction: acs.iter().sum::<f64>() / acs.len() as f64,
            n_customers: replications.iter().map(|r| r.estimates[slot].estimate.n_customers).sum(),
            replications: values.len(),
        });
    }

    let mut pooled_fd = Vec::new();
    let fd_count = replications.first().map_or(0, |r| r.fd.len());
    for slot in 0..fd_count {
        let values: Vec<f64> = replications.iter().map(|r| r.fd[slot].value).collect();
        let (value, se_across) = pooled_mean_and_se(&values);
        let std_error = if values.len() >= 2 {
            se_across
        } else {
            replications[0].fd[slot].std_error
        };
        pooled_fd.push(PooledFd {
            stencil: replications[0].fd[slot].stencil,
            h: replications[0].fd[slot].h,
            value,
            std_error,
        });
    }

    let analytic = if config
        .oracles
        .iter()
        .any(|o| matches!(o, OracleSpec::Analytic))
    {
        analytic_values(&config)
    } else {
        Vec::new()
    };

    Ok(ResultsDocument {
        warmup_used: warmup,
        stability,
        unstable_forced: !stability.stable,
        config,
        replications,
        pooled,
        pooled_fd,
        analytic,
    })
}

impl ResultsDocument {
    /// Line-delimited JSON: one config record, one stability record, one
    /// record per replication, the pooled records, and analytic values.
    /// Contains no timestamps, so identical runs serialize identically.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Tagged<'a, T> {
            record: &'a str,
            #[serde(flatten)]
            body: &'a T,
        }
        fn line<T: Serialize>(record: &str, body: &T) -> String {
            serde_json::to_string(&Tagged { record, body }).expect("results serialize")
        }
        #[derive(Serialize)]
        struct Meta<'a> {
            warmup_used: usize,
            stability: &'a StabilityReport,
            unstable_forced: bool,
        }
        let mut lines = Vec::new();
        lines.push(line("config", &self.config));
        lines.push(line(
            "meta",
            &Meta {
                warmup_used: self.warmup_used,
                stability: &self.stability,
                unstable_forced: self.unstable_forced,
            },
        ));
        for rep in &self.replications {
            lines.push(line("replication", rep));
        }
        for p in &self.pooled {
            lines.push(line("pooled", p));
        }
        for p in &self.pooled_fd {
            lines.push(line("pooled-fd", p));
        }
        for a in &self.analytic {
            lines.push(line("analytic", a));
        }
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    /// Pooled estimates as CSV with the fixed column order. The oracle
    /// column prefers a finite-difference value of matching order, then an
    /// analytic value of matching order and side.
    pub fn to_csv(&self) -> String {
        fn side_label(side: Side) -> &'static str {
            match side {
                Side::Right => "right",
                Side::Left => "left",
                Side::TwoSided => "two-sided",
            }
        }
        let mut out =
            String::from("estimator,side,value,std_error,ci_lo,ci_hi,atom_correction,oracle_value,oracle_gap\n");
        for p in &self.pooled {
            let fd = self
                .pooled_fd
                .iter()
                .find(|fd| fd.stencil.is_second_order() == (p.order == Order::Second));
            let analytic = self
                .analytic
                .iter()
                .find(|a| a.order == p.order && (a.side == p.side || a.side == Side::TwoSided));
            let oracle = fd.map(|f| f.value).or(analytic.map(|a| a.value));
            let (oracle_value, oracle_gap) = match oracle {
                Some(v) => (format!("{v}"), format!("{}", p.value - v)),
                None => (String::new(), String::new()),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                p.op.label(),
                side_label(p.side),
                p.value,
                p.std_error,
                p.ci_lo,
                p.ci_hi,
                p.atom_correction,
                oracle_value,
                oracle_gap
            ));
        }
        out
    }
}
