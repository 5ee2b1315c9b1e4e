//! Customer-average derivative estimators for stationary workload
//! functionals E f(W).
//!
//! Each estimator averages a per-customer summand built from the pairing
//! (W(T_k), W(T_{k+1}-)) = (w_k + sigma_k, w_{k+1}) and the pathwise
//! derivatives carried by the path. Jumps of f contribute one-sided atom
//! corrections: the left and right derivatives of E f(W) differ exactly by
//! the realized atom terms, which are reported separately.
//!
//! Estimator values satisfy `value = base - atom_correction`, with the base
//! shared between sides, so the one-sided gap equals the difference of the
//! atom corrections by construction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bv::{BVFunctional, BvError};
use crate::queue::{CustomerPath, ParameterKind};
use crate::stats::{BatchAccumulator, Z95};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Right,
    Left,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Order {
    First,
    Second,
}

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("estimator needs a {expected:?} path, got {got:?}")]
    WrongParameterKind {
        expected: ParameterKind,
        got: ParameterKind,
    },
    #[error("path has no customers")]
    EmptyPath,
    #[error("estimator requires an atom-free functional")]
    AtomBearingFunctional,
    #[error(
        "two-sided derivative does not exist on this path: realized atom corrections \
         right = {right}, left = {left}"
    )]
    TwoSidedAtomHit { right: f64, left: f64 },
    #[error("functional derivative unavailable: {0}")]
    Derivative(#[from] BvError),
}

/// Point estimate of a one-sided derivative with batch-means error bars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_customers: usize,
    pub side: Side,
    pub order: Order,
    pub parameter_kind: ParameterKind,
    /// Summed contribution of the atom terms, reported separately;
    /// `value = base - atom_correction` where the base is side-independent.
    pub atom_correction: f64,
}

impl DerivativeEstimate {
    /// Normal 95% confidence interval.
    pub fn ci95(&self) -> (f64, f64) {
        (
            self.value - Z95 * self.std_error,
            self.value + Z95 * self.std_error,
        )
    }
}

/// Which workload the summand pairs with the post-arrival value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// f(w_k + sigma_k) - f(w_{k+1}): the Palm pairing the estimators are
    /// derived with.
    #[default]
    NextPreArrival,
    /// f(w_k + sigma_k) - f(w_k): the same-customer jump, kept only for the
    /// equivalence comparison between the two forms.
    SameCustomer,
}

/// Which intensity multiplies the customer average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaConvention {
    /// The path's intensity: exact model value when known, else empirical.
    #[default]
    Model,
    /// Always n / T_n, which makes the customer average coincide with the
    /// time-average estimator.
    Empirical,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FirstOrderOptions {
    pub pairing: Pairing,
    pub lambda: LambdaConvention,
}

struct SummandSums {
    plain: BatchAccumulator,
    side_series: BatchAccumulator,
    extra_right: f64,
    extra_left: f64,
}

/// Accumulate plain and atom-extra summands; `side_series` carries the
/// requested side's combined summand for the batch-means standard error.
fn accumulate(
    n: usize,
    side: Side,
    summands: impl Iterator<Item = (f64, f64, f64)>,
) -> SummandSums {
    let mut s = SummandSums {
        plain: BatchAccumulator::new(n),
        side_series: BatchAccumulator::new(n),
        extra_right: 0.0,
        extra_left: 0.0,
    };
    for (plain, er, el) in summands {
        s.plain.push(plain);
        s.extra_right += er;
        s.extra_left += el;
        let e = match side {
            Side::Right => er,
            Side::Left => el,
            Side::TwoSided => 0.0,
        };
        s.side_series.push(plain + e);
    }
    s
}

fn assemble(
    sums: SummandSums,
    scale: f64,
    side: Side,
    order: Order,
    kind: ParameterKind,
) -> Result<DerivativeEstimate, EstimatorError> {
    let n = sums.plain.count();
    let nf = n as f64;
    let base = scale * sums.plain.mean();
    // value = base - atom_correction; corrections are the negated extras
    // (normalized so a correction-free side reports +0.0)
    let normalize = |x: f64| if x == 0.0 { 0.0 } else { x };
    let ac_right = normalize(-(scale * sums.extra_right / nf));
    let ac_left = normalize(-(scale * sums.extra_left / nf));
    let std_error = scale.abs() * sums.side_series.std_error();
    let (value, atom_correction) = match side {
        Side::Right => (base - ac_right, ac_right),
        Side::Left => (base - ac_left, ac_left),
        Side::TwoSided => {
            if ac_right != 0.0 || ac_left != 0.0 {
                return Err(EstimatorError::TwoSidedAtomHit {
                    right: ac_right,
                    left: ac_left,
                });
            }
            (base, 0.0)
        }
    };
    Ok(DerivativeEstimate {
        value,
        std_error,
        n_customers: n,
        side,
        order,
        parameter_kind: kind,
        atom_correction,
    })
}

fn require_kind(path: &CustomerPath, expected: ParameterKind) -> Result<(), EstimatorError> {
    if path.parameter_kind != expected {
        return Err(EstimatorError::WrongParameterKind {
            expected,
            got: path.parameter_kind,
        });
    }
    if path.is_empty() {
        return Err(EstimatorError::EmptyPath);
    }
    Ok(())
}

/// First derivative of E f(W) in the service parameter.
///
/// Summand: d_k [ f(W(T_k)) - f(W(T_{k+1}-)) ], with the atom term
/// d_k [mu_f({W(T_k)}) - mu_f({W(T_{k+1}-)})] subtracted on {d_k < 0} for
/// the right derivative and on {d_k > 0} for the left, averaged and scaled
/// by the intensity.
pub fn first_order(
    path: &CustomerPath,
    f: &BVFunctional,
    side: Side,
) -> Result<DerivativeEstimate, EstimatorError> {
    first_order_with(path, f, side, FirstOrderOptions::default())
}

pub fn first_order_with(
    path: &CustomerPath,
    f: &BVFunctional,
    side: Side,
    opts: FirstOrderOptions,
) -> Result<DerivativeEstimate, EstimatorError> {
    require_kind(path, ParameterKind::ServiceTheta)?;
    let n = path.len();
    let has_atoms = f.has_atoms();
    let sums = accumulate(
        n,
        side,
        (0..n).map(|k| {
            let r = &path.records[k];
            let top = r.w + r.sigma;
            let bot = match opts.pairing {
                Pairing::NextPreArrival => path.next_pre_arrival(k),
                Pairing::SameCustomer => r.w,
            };
            let plain = r.d * (f.eval(top) - f.eval(bot));
            if has_atoms {
                let mdiff = f.atom_mass(top) - f.atom_mass(bot);
                let er = if r.d < 0.0 { -r.d * mdiff } else { 0.0 };
                let el = if r.d > 0.0 { -r.d * mdiff } else { 0.0 };
                (plain, er, el)
            } else {
                (plain, 0.0, 0.0)
            }
        }),
    );
    let scale = match opts.lambda {
        LambdaConvention::Model => path.lambda_hat,
        LambdaConvention::Empirical => path.empirical_intensity(),
    };
    assemble(sums, scale, side, Order::First, ParameterKind::ServiceTheta)
}

/// Second derivative of E f(W) in the service parameter, for differentiable
/// f (no atoms). Atoms of f' at kinks of f enter one-sided corrections with
/// weight d_k^2.
pub fn second_order(
    path: &CustomerPath,
    f: &BVFunctional,
    side: Side,
) -> Result<DerivativeEstimate, EstimatorError> {
    require_kind(path, ParameterKind::ServiceTheta)?;
    if f.has_atoms() {
        return Err(EstimatorError::AtomBearingFunctional);
    }
    let fp = f.formal_derivative()?;
    let n = path.len();
    let has_fp_atoms = fp.has_atoms();
    let sums = accumulate(
        n,
        side,
        (0..n).map(|k| {
            let r = &path.records[k];
            let top = r.w + r.sigma;
            let bot = path.next_pre_arrival(k);
            let dsq = r.d * r.d;
            let plain = r.d2 * (f.eval(top) - f.eval(bot)) + dsq * (fp.eval(top) - fp.eval(bot));
            if has_fp_atoms {
                let mdiff = fp.atom_mass(top) - fp.atom_mass(bot);
                let er = if r.d < 0.0 { -dsq * mdiff } else { 0.0 };
                let el = if r.d > 0.0 { -dsq * mdiff } else { 0.0 };
                (plain, er, el)
            } else {
                (plain, 0.0, 0.0)
            }
        }),
    );
    assemble(
        sums,
        path.lambda_hat,
        side,
        Order::Second,
        ParameterKind::ServiceTheta,
    )
}

/// Derivative of E f(W) in the server speed. The drain slope moves with the
/// parameter, so the summand carries the primitive F of f:
///
///   nu d_k [f(top) - f(bot)] - [F(top) - F(bot)] + (top - bot) f(bot),
///
/// scaled by lambda / nu^2. Speed derivatives push the workload down
/// (d_k <= 0), so realized atom terms attach to the right derivative:
///
///   - nu d_k [mu_f({top}) - mu_f({bot})] - (top - bot) mu_f({bot}).
pub fn speed_derivative(
    path: &CustomerPath,
    f: &BVFunctional,
    side: Side,
) -> Result<DerivativeEstimate, EstimatorError> {
    require_kind(path, ParameterKind::SpeedNu)?;
    let nu = path.parameter_value;
    let sums = scaled_drain_sums(path, f, side, nu);
    assemble(
        sums,
        path.lambda_hat / (nu * nu),
        side,
        Order::First,
        ParameterKind::SpeedNu,
    )
}

/// Derivative of E f(W) in the arrival scale (tau_n = alpha eta_n), obtained
/// from the speed estimator of the time-scaled system; the summand matches
/// the speed one with alpha in place of nu and prefactor lambda / alpha.
pub fn arrival_scale_derivative(
    path: &CustomerPath,
    f: &BVFunctional,
    side: Side,
) -> Result<DerivativeEstimate, EstimatorError> {
    require_kind(path, ParameterKind::ArrivalAlpha)?;
    let alpha = path.parameter_value;
    let sums = scaled_drain_sums(path, f, side, alpha);
    assemble(
        sums,
        path.lambda_hat / alpha,
        side,
        Order::First,
        ParameterKind::ArrivalAlpha,
    )
}

fn scaled_drain_sums(path: &CustomerPath, f: &BVFunctional, side: Side, p: f64) -> SummandSums {
    let n = path.len();
    let has_atoms = f.has_atoms();
    accumulate(
        n,
        side,
        (0..n).map(|k| {
            let r = &path.records[k];
            let top = r.w + r.sigma;
            let bot = path.next_pre_arrival(k);
            let plain = p * r.d * (f.eval(top) - f.eval(bot)) - (f.primitive(top) - f.primitive(bot))
                + (top - bot) * f.eval(bot);
            if has_atoms {
                let mdiff = f.atom_mass(top) - f.atom_mass(bot);
                let er = -p * r.d * mdiff - (top - bot) * f.atom_mass(bot);
                (plain, er, 0.0)
            } else {
                (plain, 0.0, 0.0)
            }
        }),
    )
}

/// Time-average form of the first-order estimator for differentiable f:
/// the same summands normalized by elapsed time instead of lambda / n.
pub fn classic_ipa(
    path: &CustomerPath,
    f: &BVFunctional,
) -> Result<DerivativeEstimate, EstimatorError> {
    require_kind(path, ParameterKind::ServiceTheta)?;
    if f.has_atoms() {
        return Err(EstimatorError::AtomBearingFunctional);
    }
    let n = path.len();
    let mut num = BatchAccumulator::new(n);
    let mut den = BatchAccumulator::new(n);
    for k in 0..n {
        let r = &path.records[k];
        let top = r.w + r.sigma;
        let bot = path.next_pre_arrival(k);
        num.push(r.d * (f.eval(top) - f.eval(bot)));
        den.push(r.tau);
    }
    let value = num.sum() / path.total_time;
    let batch: Vec<f64> = num
        .batch_means()
        .iter()
        .zip(den.batch_means())
        .map(|(a, b)| a / b)
        .collect();
    Ok(DerivativeEstimate {
        value,
        std_error: crate::stats::std_error_of_means(&batch),
        n_customers: n,
        side: Side::TwoSided,
        order: Order::First,
        parameter_kind: ParameterKind::ServiceTheta,
        atom_correction: 0.0,
    })
}
