//! Empirical checks of the Palm-calculus identities the estimators rest on:
//! the inversion formula between time and customer averages, the stationary
//! Wald-type lemma over busy cycles, and the equivalence of the time-average
//! and customer-average derivative estimators.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bv::BVFunctional;
use crate::estimators::{
    classic_ipa, first_order_with, EstimatorError, FirstOrderOptions, LambdaConvention, Side,
};
use crate::queue::{CustomerPath, QueueSetup, SimError};
use crate::stats::{std_error_of_means, BatchAccumulator};

#[derive(Debug, Error, PartialEq)]
pub enum PalmError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("no complete busy cycle inside the horizon")]
    NoCompleteCycle,
}

/// The path-level process whose time average the inversion check compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZProcess {
    Constant,
    Workload,
    FOfWorkload,
}

/// Per-arrival values for the Wald-lemma check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZAtArrival {
    One,
    /// f evaluated at the post-arrival workload.
    FOfWorkload,
    /// 1 when the customer finds the system empty.
    IdleIndicator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PalmIdentity {
    Inversion,
    WaldLemma,
    ErgodicEquivalence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PalmCheckReport {
    pub identity: PalmIdentity,
    pub lhs: f64,
    pub rhs: f64,
    pub joint_std_error: f64,
    /// |lhs - rhs| <= k * joint_std_error (exact equality when the error is 0).
    pub pass: bool,
}

fn verdict(identity: PalmIdentity, lhs: f64, rhs: f64, jse: f64, k: f64) -> PalmCheckReport {
    PalmCheckReport {
        identity,
        lhs,
        rhs,
        joint_std_error: jse,
        pass: (lhs - rhs).abs() <= k * jse,
    }
}

/// Inversion formula: the time average of Z equals the intensity times the
/// customer average of the integral of Z over one inter-arrival interval.
/// Both sides come from the same closed-form per-interval integrals, so the
/// check is free of discretization error; the statistical content is the
/// intensity factor.
pub fn check_inversion(
    setup: &QueueSetup,
    z: ZProcess,
    f: &BVFunctional,
    n: usize,
    seed: u64,
    warmup: usize,
    k: f64,
) -> Result<PalmCheckReport, PalmError> {
    let path = setup.simulate(n, seed, warmup)?;
    let identity_f = BVFunctional::identity();
    let zf = match z {
        ZProcess::Constant => None,
        ZProcess::Workload => Some(&identity_f),
        ZProcess::FOfWorkload => Some(f),
    };
    let m = path.len();
    let mut num = BatchAccumulator::new(m);
    let mut den = BatchAccumulator::new(m);
    let nu = path.drain_rate;
    for i in 0..m {
        let r = &path.records[i];
        let integral = match zf {
            None => r.tau,
            Some(f) => {
                let top = path.post_arrival(i);
                let bot = path.next_pre_arrival(i);
                let busy_wall = ((top - bot) / nu).min(r.tau);
                (f.primitive(top) - f.primitive(bot)) / nu + (r.tau - busy_wall) * f.eval(0.0)
            }
        };
        num.push(integral);
        den.push(r.tau);
    }
    let lhs = num.sum() / den.sum();
    let rhs = path.lambda_hat * num.mean();
    let diffs: Vec<f64> = num
        .batch_means()
        .iter()
        .zip(den.batch_means())
        .map(|(u, t)| u / t - path.lambda_hat * u)
        .collect();
    Ok(verdict(
        PalmIdentity::Inversion,
        lhs,
        rhs,
        std_error_of_means(&diffs),
        k,
    ))
}

/// Complete busy cycles of a path: half-open index ranges between successive
/// customers that found the system empty. The partial cycles at both horizon
/// ends are discarded.
fn complete_cycles(path: &CustomerPath) -> Vec<std::ops::Range<usize>> {
    let starts: Vec<usize> = (0..path.len())
        .filter(|&i| path.records[i].idle_before())
        .collect();
    starts.windows(2).map(|w| w[0]..w[1]).collect()
}

/// Wald-type lemma for stationary sequences: the customer average of the
/// cycle total of Z equals the customer average of (arrivals in own cycle)
/// times the customer's own Z.
pub fn check_wald_lemma(
    setup: &QueueSetup,
    z: ZAtArrival,
    f: &BVFunctional,
    n: usize,
    seed: u64,
    warmup: usize,
    k: f64,
) -> Result<PalmCheckReport, PalmError> {
    let path = setup.simulate(n, seed, warmup)?;
    let cycles = complete_cycles(&path);
    if cycles.is_empty() {
        return Err(PalmError::NoCompleteCycle);
    }
    let zval = |i: usize| -> f64 {
        match z {
            ZAtArrival::One => 1.0,
            ZAtArrival::FOfWorkload => f.eval(path.post_arrival(i)),
            ZAtArrival::IdleIndicator => {
                if path.records[i].idle_before() {
                    1.0
                } else {
                    0.0
                }
            }
        }
    };
    let retained: usize = cycles.iter().map(|c| c.len()).sum();
    let mut lhs_acc = BatchAccumulator::new(retained);
    let mut rhs_acc = BatchAccumulator::new(retained);
    let mut diff_acc = BatchAccumulator::new(retained);
    for c in &cycles {
        let cycle_total: f64 = c.clone().map(zval).sum();
        let count = c.len() as f64;
        for i in c.clone() {
            let x = cycle_total;
            let y = count * zval(i);
            lhs_acc.push(x);
            rhs_acc.push(y);
            diff_acc.push(x - y);
        }
    }
    Ok(verdict(
        PalmIdentity::WaldLemma,
        lhs_acc.mean(),
        rhs_acc.mean(),
        diff_acc.std_error(),
        k,
    ))
}

/// Time-average (classic) and customer-average derivative estimates built
/// from the same data are algebraically equal once the intensity is
/// estimated empirically; the realized gap must stay below a single
/// boundary-term bound C/n estimated from the largest summand.
pub fn check_ergodic_equivalence(
    setup: &QueueSetup,
    f: &BVFunctional,
    n: usize,
    seed: u64,
    warmup: usize,
    k: f64,
) -> Result<PalmCheckReport, PalmError> {
    let path = setup.simulate(n, seed, warmup)?;
    let lhs = classic_ipa(&path, f)?.value;
    let rhs = first_order_with(
        &path,
        f,
        Side::TwoSided,
        FirstOrderOptions {
            lambda: LambdaConvention::Empirical,
            ..Default::default()
        },
    )?
    .value;
    let max_summand = (0..path.len())
        .map(|i| {
            let r = &path.records[i];
            (r.d * (f.eval(path.post_arrival(i)) - f.eval(path.next_pre_arrival(i)))).abs()
        })
        .fold(0.0f64, f64::max);
    let bound = path.empirical_intensity() * max_summand / path.len() as f64
        + 1e-12 * lhs.abs().max(rhs.abs()).max(1.0);
    Ok(verdict(
        PalmIdentity::ErgodicEquivalence,
        lhs,
        rhs,
        bound / k,
        k,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::mm1_workload_moments;
    use crate::queue::{ArrivalFamily, ArrivalModel, ParameterKind, ServiceFamily, ServiceModel};

    fn mm1_setup() -> QueueSetup {
        QueueSetup {
            arrivals: ArrivalModel::new(ArrivalFamily::Poisson { rate: 0.5 }).unwrap(),
            services: ServiceModel::new(ServiceFamily::ExponentialScale, 1.0, (0.5, 1.5)).unwrap(),
            parameter_kind: ParameterKind::ServiceTheta,
            parameter_value: 1.0,
        }
    }

    fn dd1_setup() -> QueueSetup {
        QueueSetup {
            arrivals: ArrivalModel::new(ArrivalFamily::Deterministic { interval: 1.0 }).unwrap(),
            services: ServiceModel::new(ServiceFamily::DeterministicScale, 0.5, (0.05, 0.9))
                .unwrap(),
            parameter_kind: ParameterKind::ServiceTheta,
            parameter_value: 0.5,
        }
    }

    #[test]
    fn inversion_for_constants_is_exact_on_the_left() {
        let f = BVFunctional::identity();
        let r = check_inversion(&mm1_setup(), ZProcess::Constant, &f, 100_000, 5, 100, 3.0)
            .unwrap();
        assert_eq!(r.lhs, 1.0);
        assert!((r.rhs - 1.0).abs() < 0.02);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn inversion_for_the_workload_matches_the_mm1_mean() {
        let f = BVFunctional::identity();
        let r = check_inversion(&mm1_setup(), ZProcess::Workload, &f, 400_000, 5, 200, 3.0)
            .unwrap();
        let mean = mm1_workload_moments(0.5, 1.0).unwrap().mean;
        assert!(r.pass, "{r:?}");
        assert!((r.lhs - mean).abs() < 0.05, "lhs {} vs {}", r.lhs, mean);
    }

    #[test]
    fn inversion_is_bitwise_exact_on_dd1() {
        let f = BVFunctional::identity();
        let r = check_inversion(&dd1_setup(), ZProcess::Workload, &f, 1000, 5, 10, 3.0).unwrap();
        assert_eq!(r.lhs, 0.125);
        assert_eq!(r.rhs, 0.125);
        assert_eq!(r.joint_std_error, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn inversion_reproduces_the_tail_probability_both_ways() {
        let f = BVFunctional::indicator(1.0).unwrap();
        let r = check_inversion(&mm1_setup(), ZProcess::FOfWorkload, &f, 400_000, 5, 200, 3.0)
            .unwrap();
        let tail = mm1_workload_moments(0.5, 1.0).unwrap().tail(1.0);
        assert!(r.pass, "{r:?}");
        assert!((r.lhs - tail).abs() < 0.01, "lhs {} vs tail {}", r.lhs, tail);
        assert!((r.rhs - tail).abs() < 0.01, "rhs {} vs tail {}", r.rhs, tail);
    }

    #[test]
    fn wald_lemma_with_constant_z_is_termwise_identical() {
        let f = BVFunctional::identity();
        let r = check_wald_lemma(&mm1_setup(), ZAtArrival::One, &f, 50_000, 5, 100, 3.0).unwrap();
        assert_eq!(r.lhs, r.rhs);
        // both sides estimate the size of the cycle containing a typical
        // customer, the size-biased mean E N^2 / E N; the busy-period count
        // is a total progeny with offspring mean 0.5 and variance 0.75, so
        // E N = 2, Var N = 0.75/(1-rho)^3 = 6, E N^2 / E N = 5
        assert!((r.lhs - 5.0).abs() < 0.5, "{}", r.lhs);
    }

    #[test]
    fn wald_lemma_passes_for_the_idle_indicator_and_f() {
        let f = BVFunctional::identity();
        let r = check_wald_lemma(
            &mm1_setup(),
            ZAtArrival::IdleIndicator,
            &f,
            100_000,
            5,
            100,
            3.0,
        )
        .unwrap();
        assert!(r.pass, "{r:?}");
        let r2 = check_wald_lemma(&mm1_setup(), ZAtArrival::FOfWorkload, &f, 100_000, 5, 100, 3.0)
            .unwrap();
        assert!(r2.pass, "{r2:?}");
    }

    #[test]
    fn wald_lemma_is_exact_on_dd1_singleton_cycles() {
        let f = BVFunctional::identity();
        let r =
            check_wald_lemma(&dd1_setup(), ZAtArrival::FOfWorkload, &f, 1000, 5, 10, 3.0).unwrap();
        assert_eq!(r.lhs, r.rhs);
        assert_eq!(r.joint_std_error, 0.0);
        assert!(r.pass);
        assert_eq!(r.lhs, 0.5);
    }

    #[test]
    fn wald_lemma_needs_a_complete_cycle() {
        let err =
            check_wald_lemma(&dd1_setup(), ZAtArrival::One, &BVFunctional::identity(), 1, 5, 0, 3.0)
                .unwrap_err();
        assert_eq!(err, PalmError::NoCompleteCycle);
    }

    #[test]
    fn ergodic_equivalence_for_identity_and_constant() {
        let r = check_ergodic_equivalence(
            &mm1_setup(),
            &BVFunctional::identity(),
            100_000,
            5,
            100,
            3.0,
        )
        .unwrap();
        assert!(r.pass, "{r:?}");
        let c = check_ergodic_equivalence(&mm1_setup(), &BVFunctional::constant(2.0), 10_000, 5, 10, 3.0)
            .unwrap();
        assert_eq!(c.lhs, 0.0);
        assert_eq!(c.rhs, 0.0);
        assert!(c.pass);
    }

    #[test]
    fn ergodic_equivalence_is_exact_on_dd1() {
        let r = check_ergodic_equivalence(&dd1_setup(), &BVFunctional::identity(), 1000, 5, 10, 3.0)
            .unwrap();
        assert!(r.pass, "{r:?}");
        assert!((r.lhs - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ergodic_equivalence_rejects_atoms() {
        let f = BVFunctional::indicator(0.3).unwrap();
        let err = check_ergodic_equivalence(&dd1_setup(), &f, 1000, 5, 10, 3.0).unwrap_err();
        assert_eq!(
            err,
            PalmError::Estimator(EstimatorError::AtomBearingFunctional)
        );
    }

    #[test]
    fn single_customer_equivalence_holds_by_construction() {
        let r = check_ergodic_equivalence(&mm1_setup(), &BVFunctional::identity(), 1, 5, 0, 3.0)
            .unwrap();
        assert!(r.pass, "{r:?}");
    }
}
