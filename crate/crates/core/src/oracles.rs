//! Independent ground truth for the derivative estimators: common-random-
//! number finite differences of simulated functional means, and exact
//! stationary quantities for the M/M/1 and D/D/1 queues.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bv::BVFunctional;
use crate::queue::{stability_check, QueueSetup, SimError};
use crate::stats::std_error_of_means;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("utilization rho = {rho} must be < 1")]
    RhoNotBelowOne { rho: f64 },
    #[error("D/D/1 closed forms need 0 < theta < tau, got theta = {theta}, tau = {tau}")]
    UnstableDd1 { theta: f64, tau: f64 },
    #[error("tail threshold must be positive, got {x}")]
    NonPositiveThreshold { x: f64 },
    #[error("stencil point {value} leaves the parameter interval [{lo}, {hi}]")]
    PointOutsideInterval { value: f64, lo: f64, hi: f64 },
    #[error("stencil point {value} is unstable (load {load:.4})")]
    UnstablePoint { value: f64, load: f64 },
    #[error("finite-difference step must be positive and finite, got {h}")]
    BadStep { h: f64 },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Finite-difference stencil over the parameter axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stencil {
    /// (J(p + h) - J(p)) / h
    Forward,
    /// (J(p) - J(p - h)) / h
    Backward,
    /// (J(p + h) - J(p - h)) / 2h
    Central,
    /// (J(p + h) - 2 J(p) + J(p - h)) / h^2
    SecondCentral,
    /// (J(p + 2h) - 2 J(p + h) + J(p)) / h^2, the one-sided stencil whose
    /// limit defines the right second derivative.
    SecondForward,
}

impl Stencil {
    /// Offsets (in units of h) and coefficients; the divisor is h^order.
    fn layout(self) -> (&'static [f64], &'static [f64], u32) {
        match self {
            Stencil::Forward => (&[0.0, 1.0], &[-1.0, 1.0], 1),
            Stencil::Backward => (&[-1.0, 0.0], &[-1.0, 1.0], 1),
            Stencil::Central => (&[-1.0, 1.0], &[-0.5, 0.5], 1),
            Stencil::SecondCentral => (&[-1.0, 0.0, 1.0], &[1.0, -2.0, 1.0], 2),
            Stencil::SecondForward => (&[0.0, 1.0, 2.0], &[1.0, -2.0, 1.0], 2),
        }
    }

    pub fn is_second_order(self) -> bool {
        matches!(self, Stencil::SecondCentral | Stencil::SecondForward)
    }
}

/// A finite-difference estimate of a parameter derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdEstimate {
    pub value: f64,
    pub h: f64,
    pub stencil: Stencil,
    /// Batch-means standard error of the stencil quotient under common
    /// random numbers.
    pub std_error: f64,
}

/// Difference quotient of simulated functional means J(p) = E f(W_p), with
/// every stencil point driven by the identical variate streams. J is
/// estimated by the time average of f along the path, with the integral over
/// each inter-arrival interval in closed form.
pub fn finite_difference(
    setup: &QueueSetup,
    f: &BVFunctional,
    param_interval: (f64, f64),
    h: f64,
    stencil: Stencil,
    n: usize,
    seed: u64,
    warmup: usize,
) -> Result<FdEstimate, OracleError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(OracleError::BadStep { h });
    }
    let (offsets, coeffs, order) = stencil.layout();
    let p0 = setup.parameter_value;
    let denom = h.powi(order as i32);

    let mut value = 0.0;
    let mut batch_combined: Option<Vec<f64>> = None;
    for (&o, &c) in offsets.iter().zip(coeffs) {
        let p = p0 + o * h;
        if p < param_interval.0 || p > param_interval.1 {
            return Err(OracleError::PointOutsideInterval {
                value: p,
                lo: param_interval.0,
                hi: param_interval.1,
            });
        }
        let report = stability_check(
            &setup.arrivals,
            &setup.services,
            setup.parameter_kind,
            (p, p),
        )?;
        if !report.stable {
            return Err(OracleError::UnstablePoint {
                value: p,
                load: report.load,
            });
        }
        let path = setup.at(p).simulate(n, seed, warmup)?;
        let ta = path.time_average_of(f);
        value += c * ta.value / denom;
        match &mut batch_combined {
            None => {
                batch_combined = Some(ta.batch_values.iter().map(|j| c * j / denom).collect())
            }
            Some(acc) => {
                for (a, j) in acc.iter_mut().zip(&ta.batch_values) {
                    *a += c * j / denom;
                }
            }
        }
    }
    let std_error = std_error_of_means(batch_combined.as_deref().unwrap_or(&[]));
    Ok(FdEstimate {
        value,
        h,
        stencil,
        std_error,
    })
}

/// Exact stationary workload quantities of the M/M/1 queue with arrival rate
/// lambda and mean service time theta, as functions of theta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mm1Moments {
    pub lambda: f64,
    pub theta: f64,
    /// E W = lambda theta^2 / (1 - lambda theta), the Pollaczek-Khinchine
    /// mean with E sigma^2 = 2 theta^2.
    pub mean: f64,
    /// d/dtheta of the mean:
    ///   d/dt [l t^2/(1-l t)] = l [2t(1-lt) + l t^2] / (1-lt)^2
    ///                        = l t (2 - l t) / (1 - l t)^2.
    pub d_mean_dtheta: f64,
    /// Second derivative; differentiating again collapses to
    ///   2 l / (1 - l t)^3.
    pub d2_mean_dtheta2: f64,
}

impl Mm1Moments {
    /// Tail of the stationary workload: P(W > x) = rho e^{-(1/theta - lambda) x}.
    pub fn tail(&self, x: f64) -> f64 {
        self.lambda * self.theta * (-(1.0 / self.theta - self.lambda) * x).exp()
    }

    /// d/dtheta of the tail:
    ///   d/dt [l t e^{-(1/t - l)x}] = l e^{-(1/t - l)x} + l t e^{-(1/t - l)x} (x / t^2)
    ///                              = l e^{-(1/t - l)x} (1 + x / t).
    pub fn tail_dtheta(&self, x: f64) -> f64 {
        self.lambda * (-(1.0 / self.theta - self.lambda) * x).exp() * (1.0 + x / self.theta)
    }
}

pub fn mm1_workload_moments(lambda: f64, theta: f64) -> Result<Mm1Moments, OracleError> {
    let rho = lambda * theta;
    if !(rho < 1.0) || lambda <= 0.0 || theta <= 0.0 {
        return Err(OracleError::RhoNotBelowOne { rho });
    }
    let slack = 1.0 - rho;
    Ok(Mm1Moments {
        lambda,
        theta,
        mean: lambda * theta * theta / slack,
        d_mean_dtheta: lambda * theta * (2.0 - rho) / (slack * slack),
        d2_mean_dtheta2: 2.0 * lambda / (slack * slack * slack),
    })
}

/// Exact D/D/1 quantities for the tail functional 1{w >= x}: the stationary
/// workload is a triangle wave of height theta repeating every tau.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dd1ClosedForms {
    /// J = P(W >= x) = ((theta - x)/tau)^+, the fraction of each cycle spent
    /// at or above x.
    pub j: f64,
    /// Right derivative (1/tau) 1{theta >= x}.
    pub jr: f64,
    /// Left derivative (1/tau) 1{theta > x}.
    pub jl: f64,
    /// Time average of the triangle wave: integral of (theta - t) over
    /// [0, theta] divided by tau = theta^2 / (2 tau).
    pub mean_workload: f64,
    /// d/dtheta of the mean: theta / tau.
    pub d_mean: f64,
}

pub fn dd1_closed_forms(tau: f64, theta: f64, x: f64) -> Result<Dd1ClosedForms, OracleError> {
    if !(theta > 0.0 && theta < tau) {
        return Err(OracleError::UnstableDd1 { theta, tau });
    }
    if !(x > 0.0) {
        return Err(OracleError::NonPositiveThreshold { x });
    }
    Ok(Dd1ClosedForms {
        j: ((theta - x) / tau).max(0.0),
        jr: if theta >= x { 1.0 / tau } else { 0.0 },
        jl: if theta > x { 1.0 / tau } else { 0.0 },
        mean_workload: theta * theta / (2.0 * tau),
        d_mean: theta / tau,
    })
}
