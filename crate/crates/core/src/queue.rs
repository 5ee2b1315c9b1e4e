//! Single-server queue simulation: stationary input sequences, service times
//! by inverse transform, and the Lindley recursion for the workload together
//! with its first and second pathwise parameter derivatives.
//!
//! Three parameters are supported: a service-time parameter (theta), the
//! server speed (nu), and a scale factor on the inter-arrival times (alpha).
//! All randomness comes from counter-based streams, so paths at different
//! parameter values driven by the same seed share their underlying variates
//! (common random numbers) by construction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{Stream, StreamId};
use crate::stats::BatchAccumulator;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("uniform variate {xi} outside [0, 1)")]
    XiOutOfRange { xi: f64 },
    #[error("parameter {theta} invalid for this service family (need theta > 0)")]
    InvalidTheta { theta: f64 },
    #[error("parameter {value} outside the declared interval [{lo}, {hi}]")]
    OutsideInterval { value: f64, lo: f64, hi: f64 },
    #[error("speed/scale parameter must be positive, got {value}")]
    NonPositiveParameter { value: f64 },
    #[error("arrival-scale experiments need arrivals declared as a scale family")]
    ArrivalsNotScaleFamily,
    #[error("service realization {sigma} outside the family support")]
    SigmaOutOfSupport { sigma: f64 },
    #[error("unstable input: empirical load {load:.4} >= 1 over the horizon")]
    UnstableInput { load: f64 },
    #[error("stability probe needs n_probe >= 1000, got {n_probe}")]
    ProbeTooSmall { n_probe: usize },
    #[error("distribution shape parameter must be positive and finite, got {shape}")]
    BadShape { shape: f64 },
}

/// Lanczos approximation of the gamma function for x > 0 (g = 7, n = 9).
/// Used for closed-form means of Weibull bases; accurate to ~1e-13 here.
pub(crate) fn gamma_fn(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection, not needed for our arguments but kept total
        return std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_fn(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = C[0];
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

/// Unit-parameter base distribution used by scale families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScaleBase {
    /// Exponential with mean 1.
    Exponential,
    /// Point mass at 1.
    Deterministic,
    /// Weibull with the given shape and unit scale.
    Weibull { shape: f64 },
}

impl ScaleBase {
    fn check(self) -> Result<(), SimError> {
        match self {
            ScaleBase::Weibull { shape } if !(shape > 0.0 && shape.is_finite()) => {
                Err(SimError::BadShape { shape })
            }
            _ => Ok(()),
        }
    }

    /// Inverse-transform sample of the base variate from a uniform in [0, 1).
    #[inline]
    pub fn sample(self, u: f64) -> f64 {
        match self {
            ScaleBase::Exponential => -(-u).ln_1p(),
            ScaleBase::Deterministic => 1.0,
            ScaleBase::Weibull { shape } => (-(-u).ln_1p()).powf(1.0 / shape),
        }
    }

    /// Closed-form mean; Weibull mean is Gamma(1 + 1/shape).
    pub fn mean(self) -> f64 {
        match self {
            ScaleBase::Exponential | ScaleBase::Deterministic => 1.0,
            ScaleBase::Weibull { shape } => gamma_fn(1.0 + 1.0 / shape),
        }
    }
}

/// Parametrized service-time distribution with an inverse-transform sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ServiceFamily {
    /// sigma = theta * E, E ~ Exp(1).
    ExponentialScale,
    /// sigma = theta.
    DeterministicScale,
    /// sigma = theta * B, B ~ Weibull(shape, 1).
    WeibullScale { shape: f64 },
    /// sigma = theta^power * base variate; a general-inverse-cdf entry whose
    /// derivative comes from differentiating the quantile in theta.
    PowerScale { power: f64, base: ScaleBase },
    /// Exponential with rate theta (mean 1/theta): F(x) = 1 - e^{-theta x}.
    /// General-inverse-cdf entry with a decreasing quantile; its derivative
    /// is -dF/dtheta over dF/dx = -(x e^{-theta x})/(theta e^{-theta x}) = -x/theta.
    ExponentialRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceModel {
    #[serde(flatten)]
    pub family: ServiceFamily,
    pub theta: f64,
    /// Compact parameter interval the experiment may probe.
    pub theta_interval: (f64, f64),
}

impl ServiceModel {
    pub fn new(family: ServiceFamily, theta: f64, theta_interval: (f64, f64)) -> Result<Self, SimError> {
        let m = ServiceModel {
            family,
            theta,
            theta_interval,
        };
        if let Some(base) = m.base() {
            base.check()?;
        }
        if let ServiceFamily::PowerScale { power, .. } = family {
            if !power.is_finite() {
                return Err(SimError::BadShape { shape: power });
            }
        }
        m.check_theta(theta)?;
        m.check_theta(theta_interval.0)?;
        m.check_theta(theta_interval.1)?;
        if theta_interval.0 > theta_interval.1 || theta < theta_interval.0 || theta > theta_interval.1 {
            return Err(SimError::OutsideInterval {
                value: theta,
                lo: theta_interval.0,
                hi: theta_interval.1,
            });
        }
        Ok(m)
    }

    fn check_theta(&self, theta: f64) -> Result<(), SimError> {
        if theta > 0.0 && theta.is_finite() {
            Ok(())
        } else {
            Err(SimError::InvalidTheta { theta })
        }
    }

    /// True when sigma = theta * (base variate) exactly.
    pub fn is_scale(&self) -> bool {
        matches!(
            self.family,
            ServiceFamily::ExponentialScale
                | ServiceFamily::DeterministicScale
                | ServiceFamily::WeibullScale { .. }
        )
    }

    fn base(&self) -> Option<ScaleBase> {
        match self.family {
            ServiceFamily::ExponentialScale => Some(ScaleBase::Exponential),
            ServiceFamily::DeterministicScale => Some(ScaleBase::Deterministic),
            ServiceFamily::WeibullScale { shape } => Some(ScaleBase::Weibull { shape }),
            ServiceFamily::PowerScale { base, .. } => Some(base),
            ServiceFamily::ExponentialRate => None,
        }
    }

    /// Quantile G(xi, theta) of the service distribution.
    pub fn inverse_transform(&self, xi: f64, theta: f64) -> Result<f64, SimError> {
        if !(0.0..1.0).contains(&xi) {
            return Err(SimError::XiOutOfRange { xi });
        }
        self.check_theta(theta)?;
        Ok(self.sample(xi, theta))
    }

    #[inline]
    fn sample(&self, xi: f64, theta: f64) -> f64 {
        match self.family {
            ServiceFamily::ExponentialScale
            | ServiceFamily::DeterministicScale
            | ServiceFamily::WeibullScale { .. } => theta * self.base().unwrap().sample(xi),
            ServiceFamily::PowerScale { power, base } => theta.powf(power) * base.sample(xi),
            ServiceFamily::ExponentialRate => -(-xi).ln_1p() / theta,
        }
    }

    /// d sigma / d theta for a realized service time.
    pub fn service_derivative(&self, sigma: f64, theta: f64) -> Result<f64, SimError> {
        self.check_theta(theta)?;
        if sigma < 0.0 {
            return Err(SimError::SigmaOutOfSupport { sigma });
        }
        Ok(match self.family {
            ServiceFamily::ExponentialScale
            | ServiceFamily::DeterministicScale
            | ServiceFamily::WeibullScale { .. } => sigma / theta,
            ServiceFamily::PowerScale { power, .. } => power * sigma / theta,
            ServiceFamily::ExponentialRate => -sigma / theta,
        })
    }

    /// d^2 sigma / d theta^2 for a realized service time.
    pub fn service_second_derivative(&self, sigma: f64, theta: f64) -> Result<f64, SimError> {
        self.check_theta(theta)?;
        if sigma < 0.0 {
            return Err(SimError::SigmaOutOfSupport { sigma });
        }
        Ok(match self.family {
            // sigma = theta * eta is linear in theta
            ServiceFamily::ExponentialScale
            | ServiceFamily::DeterministicScale
            | ServiceFamily::WeibullScale { .. } => 0.0,
            // sigma = theta^p eta: p (p-1) theta^{p-2} eta = p (p-1) sigma / theta^2
            ServiceFamily::PowerScale { power, .. } => power * (power - 1.0) * sigma / (theta * theta),
            // sigma = c / theta: 2 c / theta^3 = 2 sigma / theta^2
            ServiceFamily::ExponentialRate => 2.0 * sigma / (theta * theta),
        })
    }

    /// Parameter value attaining sup over an interval of sigma(xi, theta),
    /// pointwise in xi (every family is monotone in theta).
    pub fn star_in(&self, interval: (f64, f64)) -> f64 {
        let increasing = match self.family {
            ServiceFamily::ExponentialRate => false,
            ServiceFamily::PowerScale { power, .. } => power >= 0.0,
            _ => true,
        };
        if increasing {
            interval.1
        } else {
            interval.0
        }
    }

    /// The star parameter over the model's own declared interval.
    pub fn star_theta(&self) -> f64 {
        self.star_in(self.theta_interval)
    }

    /// Closed-form mean service time at a given theta.
    pub fn mean_service(&self, theta: f64) -> f64 {
        match self.family {
            ServiceFamily::ExponentialScale
            | ServiceFamily::DeterministicScale
            | ServiceFamily::WeibullScale { .. } => theta * self.base().unwrap().mean(),
            ServiceFamily::PowerScale { power, base } => theta.powf(power) * base.mean(),
            ServiceFamily::ExponentialRate => 1.0 / theta,
        }
    }
}

/// Stationary arrival process; sampled inputs are renewal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ArrivalFamily {
    /// Poisson process with the given intensity.
    Poisson { rate: f64 },
    /// Fixed inter-arrival interval.
    Deterministic { interval: f64 },
    /// tau = scale * base variate; the family used by arrival-scale
    /// derivative experiments.
    RenewalScale { base: ScaleBase, scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalModel {
    #[serde(flatten)]
    pub family: ArrivalFamily,
}

impl ArrivalModel {
    pub fn new(family: ArrivalFamily) -> Result<Self, SimError> {
        if let ArrivalFamily::RenewalScale { base, .. } = family {
            base.check()?;
        }
        let bad = match family {
            ArrivalFamily::Poisson { rate } => !(rate > 0.0 && rate.is_finite()),
            ArrivalFamily::Deterministic { interval } => !(interval > 0.0 && interval.is_finite()),
            ArrivalFamily::RenewalScale { scale, .. } => !(scale > 0.0 && scale.is_finite()),
        };
        if bad {
            return Err(SimError::NonPositiveParameter {
                value: match family {
                    ArrivalFamily::Poisson { rate } => rate,
                    ArrivalFamily::Deterministic { interval } => interval,
                    ArrivalFamily::RenewalScale { scale, .. } => scale,
                },
            });
        }
        Ok(ArrivalModel { family })
    }

    pub fn is_scale(&self) -> bool {
        matches!(self.family, ArrivalFamily::RenewalScale { .. })
    }

    /// Base variate of the inter-arrival time (eta for scale families,
    /// the raw interval otherwise).
    #[inline]
    fn base_variate(&self, u: f64) -> f64 {
        match self.family {
            ArrivalFamily::Poisson { rate } => -(-u).ln_1p() / rate,
            ArrivalFamily::Deterministic { interval } => interval,
            ArrivalFamily::RenewalScale { base, .. } => base.sample(u),
        }
    }

    /// Exact model intensity when known; arrival-scale families report None
    /// and the simulator falls back to the empirical rate.
    pub fn exact_intensity(&self) -> Option<f64> {
        match self.family {
            ArrivalFamily::Poisson { rate } => Some(rate),
            ArrivalFamily::Deterministic { interval } => Some(1.0 / interval),
            ArrivalFamily::RenewalScale { .. } => None,
        }
    }

    /// Closed-form mean inter-arrival time at a given scale (ignored unless
    /// the family is a scale family).
    pub fn mean_interval(&self, alpha: f64) -> f64 {
        match self.family {
            ArrivalFamily::Poisson { rate } => 1.0 / rate,
            ArrivalFamily::Deterministic { interval } => interval,
            ArrivalFamily::RenewalScale { base, .. } => alpha * base.mean(),
        }
    }

    fn declared_scale(&self) -> Option<f64> {
        match self.family {
            ArrivalFamily::RenewalScale { scale, .. } => Some(scale),
            _ => None,
        }
    }
}

/// Which parameter the path's derivatives are taken against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParameterKind {
    ServiceTheta,
    SpeedNu,
    ArrivalAlpha,
}

/// One customer of a simulated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CustomerRecord {
    /// Workload found on arrival (pre-arrival, W(T_k-)).
    pub w: f64,
    /// Service requirement brought by this customer.
    pub sigma: f64,
    /// Wall-clock time until the next arrival.
    pub tau: f64,
    /// First derivative of the post-arrival workload, W'(T_k).
    pub d: f64,
    /// Second derivative, W''(T_k); zero unless the parameter is service-theta.
    pub d2: f64,
}

impl CustomerRecord {
    /// The Lindley recursion yields exact zeros, so idle detection is exact.
    #[inline]
    pub fn idle_before(&self) -> bool {
        self.w == 0.0
    }
}

/// A simulated customer path after warm-up.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomerPath {
    pub records: Vec<CustomerRecord>,
    pub parameter_kind: ParameterKind,
    /// The theta, nu, or alpha the path was simulated at.
    pub parameter_value: f64,
    /// Workload drained per unit time (nu for speed paths, 1 otherwise).
    pub drain_rate: f64,
    /// Exact model intensity when known, else the empirical n / T_n.
    pub lambda_hat: f64,
    pub lambda_is_exact: bool,
    /// Pre-arrival workload of the customer just past the horizon.
    pub w_final: f64,
    /// Elapsed time spanned by the recorded customers.
    pub total_time: f64,
}

impl CustomerPath {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Workload just after arrival k: w_k + sigma_k.
    #[inline]
    pub fn post_arrival(&self, k: usize) -> f64 {
        self.records[k].w + self.records[k].sigma
    }

    /// Pre-arrival workload of customer k+1 (the path's final value for the
    /// last record).
    #[inline]
    pub fn next_pre_arrival(&self, k: usize) -> f64 {
        match self.records.get(k + 1) {
            Some(r) => r.w,
            None => self.w_final,
        }
    }

    /// Empirical arrival intensity over the recorded horizon.
    pub fn empirical_intensity(&self) -> f64 {
        self.len() as f64 / self.total_time
    }
}

/// Estimate of a time average along a path, with batch means of the ratio.
#[derive(Debug, Clone)]
pub struct TimeAverage {
    pub value: f64,
    pub std_error: f64,
    pub batch_values: Vec<f64>,
}

impl CustomerPath {
    /// Time average of f(W(s)) over the recorded horizon, with the integral
    /// over each inter-arrival interval in closed form: the workload falls
    /// linearly at the drain rate, so the integral is a primitive difference
    /// plus the idle stretch at f(0). No quadrature error.
    pub fn time_average_of(&self, f: &crate::bv::BVFunctional) -> TimeAverage {
        let n = self.len();
        let mut num = BatchAccumulator::new(n);
        let mut den = BatchAccumulator::new(n);
        let f0 = f.eval(0.0);
        let nu = self.drain_rate;
        for k in 0..n {
            let r = &self.records[k];
            let top = self.post_arrival(k);
            let bot = self.next_pre_arrival(k);
            let busy_wall = ((top - bot) / nu).min(r.tau);
            let integral = (f.primitive(top) - f.primitive(bot)) / nu + (r.tau - busy_wall) * f0;
            num.push(integral);
            den.push(r.tau);
        }
        let value = num.sum() / den.sum();
        let nb = num.batch_means();
        let db = den.batch_means();
        let batch_values: Vec<f64> = nb.iter().zip(&db).map(|(a, b)| a / b).collect();
        TimeAverage {
            value,
            std_error: crate::stats::std_error_of_means(&batch_values),
            batch_values,
        }
    }
}

/// One Lindley step: workload left just before the next arrival.
#[inline]
pub fn lindley_step(w: f64, sigma: f64, drain: f64) -> f64 {
    (w + sigma - drain).max(0.0)
}

/// Default warm-up heuristic: paths start empty rather than stationary, and
/// the transient shrinks roughly like the squared busy-period length.
pub fn default_warmup(load: f64) -> usize {
    if load >= 1.0 {
        return 1000;
    }
    let slack = 1.0 - load;
    (10.0 / (slack * slack)).ceil() as usize
}

/// Full description of one simulation, shared by estimators and oracles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueSetup {
    pub arrivals: ArrivalModel,
    pub services: ServiceModel,
    pub parameter_kind: ParameterKind,
    /// theta, nu, or alpha depending on the kind.
    pub parameter_value: f64,
}

impl QueueSetup {
    /// Same setup evaluated at a different parameter point (for finite
    /// differences and coupling tests).
    pub fn at(&self, value: f64) -> QueueSetup {
        QueueSetup {
            parameter_value: value,
            ..*self
        }
    }

    pub fn simulate(&self, n: usize, seed: u64, warmup: usize) -> Result<CustomerPath, SimError> {
        simulate_path(
            &self.arrivals,
            &self.services,
            self.parameter_kind,
            self.parameter_value,
            n,
            seed,
            warmup,
        )
    }
}

/// Run the Lindley recursion and its derivative recursions, discarding the
/// first `warmup` customers. Identical (seed, inputs) give a bitwise
/// identical path.
pub fn simulate_path(
    arrivals: &ArrivalModel,
    services: &ServiceModel,
    parameter_kind: ParameterKind,
    parameter_value: f64,
    n: usize,
    seed: u64,
    warmup: usize,
) -> Result<CustomerPath, SimError> {
    let (theta, nu, alpha) = match parameter_kind {
        ParameterKind::ServiceTheta => {
            let (lo, hi) = services.theta_interval;
            if parameter_value < lo || parameter_value > hi {
                return Err(SimError::OutsideInterval {
                    value: parameter_value,
                    lo,
                    hi,
                });
            }
            (parameter_value, 1.0, arrivals.declared_scale().unwrap_or(1.0))
        }
        ParameterKind::SpeedNu => {
            if !(parameter_value > 0.0) {
                return Err(SimError::NonPositiveParameter {
                    value: parameter_value,
                });
            }
            (
                services.theta,
                parameter_value,
                arrivals.declared_scale().unwrap_or(1.0),
            )
        }
        ParameterKind::ArrivalAlpha => {
            if !arrivals.is_scale() {
                return Err(SimError::ArrivalsNotScaleFamily);
            }
            if !(parameter_value > 0.0) {
                return Err(SimError::NonPositiveParameter {
                    value: parameter_value,
                });
            }
            (services.theta, 1.0, parameter_value)
        }
    };
    services.check_theta(theta)?;

    let mut svc = Stream::new(seed, StreamId::Services);
    let mut arr = Stream::new(seed, StreamId::Arrivals);

    let mut records = Vec::with_capacity(n);
    let mut w = 0.0f64;
    let mut prev_d = 0.0f64;
    let mut prev_d2 = 0.0f64;
    let mut prev_tau = 0.0f64;
    let mut prev_eta = 0.0f64;
    let mut total_sigma = 0.0f64;
    let mut horizon_time = 0.0f64;
    let mut recorded_time = 0.0f64;

    let total = warmup + n;
    for k in 0..total {
        let xi = svc.next_f64();
        let u = arr.next_f64();
        let sigma = services.sample(xi, theta);
        let eta = arrivals.base_variate(u);
        let tau = match arrivals.family {
            ArrivalFamily::RenewalScale { .. } => alpha * eta,
            _ => eta,
        };

        let busy = w > 0.0;
        let (d, d2) = match parameter_kind {
            ParameterKind::ServiceTheta => {
                let sp = services.service_derivative(sigma, theta)?;
                let spp = services.service_second_derivative(sigma, theta)?;
                let carry = if busy { prev_d } else { 0.0 };
                let carry2 = if busy { prev_d2 } else { 0.0 };
                (carry + sp, carry2 + spp)
            }
            ParameterKind::SpeedNu => {
                // differentiating w_k = (w_{k-1} + sigma_{k-1} - nu tau_{k-1})^+
                // in nu on {w_k > 0}; an idle hit zeroes both w_k and its
                // derivative, consistent with the indicator
                let d = if busy { prev_d - prev_tau } else { 0.0 };
                (d, 0.0)
            }
            ParameterKind::ArrivalAlpha => {
                // same derivation with tau_{k-1} = alpha eta_{k-1}
                let d = if busy { prev_d - prev_eta } else { 0.0 };
                (d, 0.0)
            }
        };

        if k >= warmup {
            records.push(CustomerRecord { w, sigma, tau, d, d2 });
            recorded_time += tau;
        }

        w = lindley_step(w, sigma, nu * tau);
        prev_d = d;
        prev_d2 = d2;
        prev_tau = tau;
        prev_eta = eta;
        total_sigma += sigma;
        horizon_time += tau;
    }

    if total > 0 {
        let load = total_sigma / (nu * horizon_time);
        if load >= 1.0 {
            return Err(SimError::UnstableInput { load });
        }
    }

    let (lambda_hat, lambda_is_exact) = match arrivals.exact_intensity() {
        Some(l) => (l, true),
        None => {
            let l = if recorded_time > 0.0 {
                n as f64 / recorded_time
            } else {
                0.0
            };
            (l, false)
        }
    };

    Ok(CustomerPath {
        records,
        parameter_kind,
        parameter_value,
        drain_rate: nu,
        lambda_hat,
        lambda_is_exact,
        w_final: w,
        total_time: recorded_time,
    })
}

/// The dominating path driven by sigma*_n = sup over the theta interval of
/// sigma_n(theta); for the catalog families the sup is attained at an
/// endpoint, so this is a plain simulation at the star parameter.
pub fn simulate_star_path(
    arrivals: &ArrivalModel,
    services: &ServiceModel,
    n: usize,
    seed: u64,
    warmup: usize,
) -> Result<CustomerPath, SimError> {
    simulate_path(
        arrivals,
        services,
        ParameterKind::ServiceTheta,
        services.star_theta(),
        n,
        seed,
        warmup,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// lambda * E[sup over the parameter interval of the per-customer work],
    /// divided by the worst-case drain rate.
    pub load: f64,
    pub std_error: f64,
    /// Strict inequality: load < 1.
    pub stable: bool,
}

/// Worst-case offered load over the declared parameter interval, exact for
/// the built-in families (their sup means are closed-form).
pub fn stability_check(
    arrivals: &ArrivalModel,
    services: &ServiceModel,
    parameter_kind: ParameterKind,
    interval: (f64, f64),
) -> Result<StabilityReport, SimError> {
    let load = match parameter_kind {
        ParameterKind::ServiceTheta => {
            let star = services.star_in(interval);
            let intensity = arrivals
                .exact_intensity()
                .unwrap_or(1.0 / arrivals.mean_interval(arrivals.declared_scale().unwrap_or(1.0)));
            intensity * services.mean_service(star)
        }
        ParameterKind::SpeedNu => {
            if !(interval.0 > 0.0) {
                return Err(SimError::NonPositiveParameter { value: interval.0 });
            }
            let intensity = arrivals
                .exact_intensity()
                .unwrap_or(1.0 / arrivals.mean_interval(arrivals.declared_scale().unwrap_or(1.0)));
            intensity * services.mean_service(services.theta) / interval.0
        }
        ParameterKind::ArrivalAlpha => {
            if !arrivals.is_scale() {
                return Err(SimError::ArrivalsNotScaleFamily);
            }
            if !(interval.0 > 0.0) {
                return Err(SimError::NonPositiveParameter { value: interval.0 });
            }
            services.mean_service(services.theta) / arrivals.mean_interval(interval.0)
        }
    };
    Ok(StabilityReport {
        load,
        std_error: 0.0,
        stable: load < 1.0,
    })
}

/// Monte Carlo cross-check of the stability load for service-theta
/// experiments: samples sigma* = sup over a grid of the parameter interval.
/// Exists to validate the closed forms and to cover families without them.
pub fn monte_carlo_load_probe(
    arrivals: &ArrivalModel,
    services: &ServiceModel,
    interval: (f64, f64),
    grid_points: usize,
    n_probe: usize,
    seed: u64,
) -> Result<StabilityReport, SimError> {
    if n_probe < 1000 {
        return Err(SimError::ProbeTooSmall { n_probe });
    }
    let stream = Stream::new(seed, StreamId::Probe);
    let g = grid_points.max(2);
    let grid: Vec<f64> = (0..g)
        .map(|i| interval.0 + (interval.1 - interval.0) * i as f64 / (g - 1) as f64)
        .collect();
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for i in 0..n_probe {
        let xi = stream.nth_f64(i as u64);
        let star = grid
            .iter()
            .map(|&t| services.sample(xi, t))
            .fold(f64::NEG_INFINITY, f64::max);
        sum += star;
        sumsq += star * star;
    }
    let nf = n_probe as f64;
    let mean = sum / nf;
    let var = (sumsq - nf * mean * mean).max(0.0) / (nf - 1.0);
    let intensity = arrivals
        .exact_intensity()
        .unwrap_or(1.0 / arrivals.mean_interval(arrivals.declared_scale().unwrap_or(1.0)));
    let load = intensity * mean;
    let std_error = intensity * (var / nf).sqrt();
    Ok(StabilityReport {
        load,
        std_error,
        stable: load < 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dd1(theta: f64) -> (ArrivalModel, ServiceModel) {
        let arr = ArrivalModel::new(ArrivalFamily::Deterministic { interval: 1.0 }).unwrap();
        let svc =
            ServiceModel::new(ServiceFamily::DeterministicScale, theta, (0.1, 0.9)).unwrap();
        (arr, svc)
    }

    fn mm1() -> (ArrivalModel, ServiceModel) {
        let arr = ArrivalModel::new(ArrivalFamily::Poisson { rate: 0.5 }).unwrap();
        let svc = ServiceModel::new(ServiceFamily::ExponentialScale, 1.0, (0.8, 1.2)).unwrap();
        (arr, svc)
    }

    #[test]
    fn gamma_known_values() {
        assert!((gamma_fn(1.0) - 1.0).abs() < 1e-12);
        assert!((gamma_fn(2.0) - 1.0).abs() < 1e-12);
        assert!((gamma_fn(5.0) - 24.0).abs() < 1e-9);
        let half = std::f64::consts::PI.sqrt() / 2.0;
        assert!((gamma_fn(1.5) - half).abs() < 1e-12);
    }

    #[test]
    fn lindley_by_hand() {
        // tau = 3 throughout, sigma = [2, 4]: (0+2-3)^+ = 0, (0+4-3)^+ = 1
        let mut w = 0.0;
        let mut ws = vec![w];
        for sigma in [2.0, 4.0] {
            w = lindley_step(w, sigma, 3.0);
            ws.push(w);
        }
        assert_eq!(ws, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn exponential_inverse_transform() {
        let (_, _) = mm1();
        let svc = ServiceModel::new(ServiceFamily::ExponentialScale, 2.0, (1.0, 3.0)).unwrap();
        let v = svc.inverse_transform(0.5, 2.0).unwrap();
        assert!((v - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(svc.inverse_transform(0.0, 2.0).unwrap(), 0.0);
        assert!(svc.inverse_transform(1.0, 2.0).is_err());
        assert!(svc.inverse_transform(-0.1, 2.0).is_err());

        let det = ServiceModel::new(ServiceFamily::DeterministicScale, 0.5, (0.1, 0.9)).unwrap();
        assert_eq!(det.inverse_transform(0.77, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn service_derivatives() {
        let scale = ServiceModel::new(ServiceFamily::ExponentialScale, 0.5, (0.1, 1.0)).unwrap();
        assert_eq!(scale.service_derivative(1.5, 0.5).unwrap(), 3.0);
        assert_eq!(scale.service_derivative(0.0, 0.5).unwrap(), 0.0);
        assert_eq!(scale.service_second_derivative(9.0, 0.5).unwrap(), 0.0);

        let rate = ServiceModel::new(ServiceFamily::ExponentialRate, 1.0, (0.5, 2.0)).unwrap();
        assert_eq!(rate.service_derivative(2.0, 1.0).unwrap(), -2.0);

        let power = ServiceModel::new(
            ServiceFamily::PowerScale {
                power: 2.0,
                base: ScaleBase::Deterministic,
            },
            3.0,
            (1.0, 4.0),
        )
        .unwrap();
        // sigma = theta^2 * 1 = 9; second derivative 2 * eta = 2
        assert_eq!(power.service_second_derivative(9.0, 3.0).unwrap(), 2.0);
        let det = ServiceModel::new(ServiceFamily::DeterministicScale, 0.5, (0.1, 0.9)).unwrap();
        assert_eq!(det.service_second_derivative(0.5, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn dd1_path_is_flat_with_unit_derivative() {
        let (arr, svc) = dd1(0.5);
        let p = simulate_path(&arr, &svc, ParameterKind::ServiceTheta, 0.5, 100, 7, 10).unwrap();
        assert_eq!(p.len(), 100);
        for k in 0..p.len() {
            let r = &p.records[k];
            assert_eq!(r.w, 0.0);
            assert_eq!(r.d, 1.0);
            assert_eq!(r.sigma, 0.5);
            assert!(r.idle_before());
            assert_eq!(p.post_arrival(k), 0.5);
            assert_eq!(p.next_pre_arrival(k), 0.0);
        }
        assert_eq!(p.lambda_hat, 1.0);
        assert!(p.lambda_is_exact);
    }

    #[test]
    fn first_customer_of_empty_start() {
        let (arr, svc) = mm1();
        let p = simulate_path(&arr, &svc, ParameterKind::ServiceTheta, 1.0, 1, 3, 0).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.records[0].w, 0.0);
    }

    #[test]
    fn zero_customers_gives_empty_path() {
        let (arr, svc) = mm1();
        let p = simulate_path(&arr, &svc, ParameterKind::ServiceTheta, 1.0, 0, 3, 0).unwrap();
        assert!(p.is_empty());
        let p = simulate_star_path(&arr, &svc, 0, 3, 0).unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn identical_seed_and_config_reproduce_bitwise() {
        let (arr, svc) = mm1();
        let a = simulate_path(&arr, &svc, ParameterKind::ServiceTheta, 1.0, 5000, 9, 50).unwrap();
        let b = simulate_path(&arr, &svc, ParameterKind::ServiceTheta, 1.0, 5000, 9, 50).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn star_path_at_theta_hi_equals_theta_path() {
        let (arr, svc) = mm1();
        let star = simulate_star_path(&arr, &svc, 2000, 5, 20).unwrap();
        let at_hi = simulate_path(&arr, &svc, ParameterKind::ServiceTheta, 1.2, 2000, 5, 20).unwrap();
        assert_eq!(star.records, at_hi.records);
    }

    #[test]
    fn domination_by_the_star_path() {
        let (arr, svc) = mm1();
        let star = simulate_star_path(&arr, &svc, 5000, 11, 0).unwrap();
        for theta in [0.8, 0.9, 1.0, 1.1, 1.2] {
            let p =
                simulate_path(&arr, &svc, ParameterKind::ServiceTheta, theta, 5000, 11, 0).unwrap();
            for k in 0..p.len() {
                assert!(p.records[k].w <= star.records[k].w);
            }
        }
    }

    #[test]
    fn speed_derivatives_are_nonpositive() {
        let (arr, svc) = mm1();
        let p = simulate_path(&arr, &svc, ParameterKind::SpeedNu, 1.0, 5000, 13, 50).unwrap();
        assert!(p.records.iter().all(|r| r.d <= 0.0));
        assert!(p.records.iter().any(|r| r.d < 0.0));
        assert_eq!(p.drain_rate, 1.0);
    }

    #[test]
    fn theta_derivatives_nonnegative_for_scale_families() {
        let (arr, svc) = mm1();
        let p = simulate_path(&arr, &svc, ParameterKind::ServiceTheta, 1.0, 5000, 13, 50).unwrap();
        assert!(p.records.iter().all(|r| r.d >= 0.0));
    }

    #[test]
    fn arrival_scale_requires_scale_family() {
        let (arr, svc) = mm1();
        let err = simulate_path(&arr, &svc, ParameterKind::ArrivalAlpha, 2.0, 10, 1, 0);
        assert_eq!(err.unwrap_err(), SimError::ArrivalsNotScaleFamily);
    }

    #[test]
    fn stability_examples() {
        let arr = ArrivalModel::new(ArrivalFamily::Poisson { rate: 0.5 }).unwrap();
        let svc = ServiceModel::new(ServiceFamily::ExponentialScale, 0.9, (0.8, 1.0)).unwrap();
        let r = stability_check(&arr, &svc, ParameterKind::ServiceTheta, (0.8, 1.0)).unwrap();
        assert_eq!(r.load, 0.5);
        assert!(r.stable);

        let arr2 = ArrivalModel::new(ArrivalFamily::Poisson { rate: 2.0 }).unwrap();
        let det = ServiceModel::new(ServiceFamily::DeterministicScale, 1.0, (0.5, 1.0)).unwrap();
        let r2 = stability_check(&arr2, &det, ParameterKind::ServiceTheta, (0.5, 1.0)).unwrap();
        assert_eq!(r2.load, 2.0);
        assert!(!r2.stable);

        // boundary: load exactly 1 is unstable (strict inequality)
        let arr3 = ArrivalModel::new(ArrivalFamily::Poisson { rate: 1.0 }).unwrap();
        let svc3 = ServiceModel::new(ServiceFamily::ExponentialScale, 1.0, (0.8, 1.0)).unwrap();
        let r3 = stability_check(&arr3, &svc3, ParameterKind::ServiceTheta, (0.8, 1.0)).unwrap();
        assert_eq!(r3.load, 1.0);
        assert!(!r3.stable);
    }

    #[test]
    fn probe_agrees_with_closed_form() {
        let (arr, svc) = mm1();
        let exact = stability_check(&arr, &svc, ParameterKind::ServiceTheta, (0.8, 1.2)).unwrap();
        let probe = monte_carlo_load_probe(&arr, &svc, (0.8, 1.2), 5, 20_000, 3).unwrap();
        assert!(
            (probe.load - exact.load).abs() <= 4.0 * probe.std_error,
            "probe {} vs exact {} (se {})",
            probe.load,
            exact.load,
            probe.std_error
        );
        assert!(monte_carlo_load_probe(&arr, &svc, (0.8, 1.2), 5, 10, 3).is_err());
    }

    #[test]
    fn shape_parameters_are_validated() {
        assert!(matches!(
            ServiceModel::new(ServiceFamily::WeibullScale { shape: 0.0 }, 1.0, (0.5, 1.5)),
            Err(SimError::BadShape { .. })
        ));
        assert!(matches!(
            ArrivalModel::new(ArrivalFamily::RenewalScale {
                base: ScaleBase::Weibull { shape: -2.0 },
                scale: 1.0,
            }),
            Err(SimError::BadShape { .. })
        ));
        assert!(ServiceModel::new(
            ServiceFamily::WeibullScale { shape: 1.5 },
            1.0,
            (0.5, 1.5)
        )
        .is_ok());
    }

    #[test]
    fn star_parameter_follows_the_monotone_direction() {
        let up = ServiceModel::new(ServiceFamily::ExponentialScale, 1.0, (0.5, 1.5)).unwrap();
        assert_eq!(up.star_theta(), 1.5);
        let down = ServiceModel::new(ServiceFamily::ExponentialRate, 1.0, (0.5, 1.5)).unwrap();
        assert_eq!(down.star_theta(), 0.5);
        let inv = ServiceModel::new(
            ServiceFamily::PowerScale {
                power: -1.0,
                base: ScaleBase::Exponential,
            },
            1.0,
            (0.5, 1.5),
        )
        .unwrap();
        assert_eq!(inv.star_theta(), 0.5);
        // worst-case load for a decreasing family sits at the low endpoint
        let arr = ArrivalModel::new(ArrivalFamily::Poisson { rate: 0.5 }).unwrap();
        let r = stability_check(&arr, &inv, ParameterKind::ServiceTheta, (0.5, 1.5)).unwrap();
        assert_eq!(r.load, 0.5 * inv.mean_service(0.5));
    }

    #[test]
    fn overloaded_horizon_is_rejected() {
        let arr = ArrivalModel::new(ArrivalFamily::Poisson { rate: 2.0 }).unwrap();
        let svc = ServiceModel::new(ServiceFamily::DeterministicScale, 1.0, (0.5, 1.5)).unwrap();
        let err = simulate_path(&arr, &svc, ParameterKind::ServiceTheta, 1.0, 2000, 1, 0);
        assert!(matches!(err, Err(SimError::UnstableInput { .. })));
    }

    #[test]
    fn empirical_intensity_tracks_the_model() {
        let arr = ArrivalModel::new(ArrivalFamily::RenewalScale {
            base: ScaleBase::Exponential,
            scale: 2.0,
        })
        .unwrap();
        let svc = ServiceModel::new(ServiceFamily::ExponentialScale, 1.0, (0.8, 1.2)).unwrap();
        let p = simulate_path(&arr, &svc, ParameterKind::ArrivalAlpha, 2.0, 50_000, 21, 100).unwrap();
        assert!(!p.lambda_is_exact);
        assert!((p.lambda_hat - 0.5).abs() < 0.02, "{}", p.lambda_hat);
        assert!(p.records.iter().all(|r| r.d <= 0.0));
    }

    #[test]
    fn time_average_of_identity_on_dd1_is_exact() {
        // stationary D/D/1 workload is a triangle wave: mean theta^2 / (2 tau)
        let (arr, svc) = dd1(0.5);
        let p = simulate_path(&arr, &svc, ParameterKind::ServiceTheta, 0.5, 1000, 3, 10).unwrap();
        let ta = p.time_average_of(&crate::bv::BVFunctional::identity());
        assert!((ta.value - 0.125).abs() < 1e-15);
        assert_eq!(ta.std_error, 0.0);
    }

    #[test]
    fn warmup_default_grows_with_load() {
        assert_eq!(default_warmup(0.5), 40);
        assert!(default_warmup(0.9) > default_warmup(0.5));
        assert_eq!(default_warmup(1.5), 1000);
    }
}
