//! Heavy-traffic and light-load limits of the scaled mean waiting time.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::sig12;
use crate::ode::{mean_waiting_with, SolverOptions};
use crate::policy::{choose_b, log_p_idle, Discipline, PolicyKind, PolicySpec, Secant};

/// Grid on which [`choose_b`] is run by default.
pub const DEFAULT_B_GRID: [f64; 5] = [0.95, 0.99, 0.999, 0.9999, 0.99999];

/// Largest allowed fit residual before an extrapolation is rejected.
pub const MAX_FIT_RESIDUAL: f64 = 1e-2;

/// `1 - 10^-k` for each `k` in the range.
pub fn heavy_lambda_seq(ks: std::ops::RangeInclusive<i32>) -> Vec<f64> {
    ks.map(|k| 1.0 - 10f64.powi(-k)).collect()
}

/// Result of fitting `y = c0 + c1 * x` and reading off `c0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub value: f64,
    pub slope: f64,
    /// Largest absolute deviation of the samples from the fitted line.
    pub residual: f64,
    /// `(lambda, observed)` pairs that entered the fit.
    pub samples: Vec<(f64, f64)>,
}

/// Least-squares line through `(x, y)`; returns `(intercept, slope, max residual)`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let residual = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (intercept + slope * x - y).abs())
        .fold(0.0, f64::max);
    (intercept, slope, residual)
}

fn extrapolate(
    lambdas: &[f64],
    ys: Vec<f64>,
    abscissa: impl Fn(f64) -> f64,
) -> Result<Extrapolation> {
    if ys.len() < 2 {
        return Err(Error::InvalidArgument(
            "extrapolation needs at least two points".into(),
        ));
    }
    let xs: Vec<f64> = lambdas.iter().map(|&l| abscissa(l)).collect();
    let (value, slope, residual) = fit_line(&xs, &ys);
    if !(residual <= MAX_FIT_RESIDUAL) || !value.is_finite() {
        return Err(Error::ExtrapolationUnstable { residual });
    }
    Ok(Extrapolation {
        value,
        slope,
        residual,
        samples: lambdas.iter().copied().zip(ys).collect(),
    })
}

fn neg_log_one_minus(lambda: f64) -> f64 {
    -(-lambda).ln_1p()
}

/// `lim h(u - lambda^b)` as `lambda -> 1`, by a linear fit in `1 - lambda`.
#[allow(non_snake_case)]
pub fn numeric_A(policy: &PolicySpec, b: u32, lambda_seq: &[f64]) -> Result<Extrapolation> {
    let ys = lambda_seq
        .iter()
        .map(|&lambda| {
            let s = Secant::new(policy, lambda)?;
            Ok(s.h(s.u_lambda() - lambda.powi(b as i32)))
        })
        .collect::<Result<Vec<_>>>()?;
    extrapolate(lambda_seq, ys, |l| 1.0 - l)
}

/// `lim log(u - lambda^b) / log(1 - lambda)`. The ratio approaches its limit
/// like `1 / log(1 - lambda)`, so the fit is linear in that variable and uses
/// only the [`HEAVY_FIT_POINTS`] rates closest to 1, where higher-order terms
/// (e.g. `sqrt(1 - lambda)` with dispatcher memory) have died out.
#[allow(non_snake_case)]
pub fn numeric_B(policy: &PolicySpec, b: u32, lambda_seq: &[f64]) -> Result<Extrapolation> {
    let mut lambdas = lambda_seq.to_vec();
    lambdas.sort_by(f64::total_cmp);
    let lambda_seq = &lambdas[lambdas.len().saturating_sub(HEAVY_FIT_POINTS)..];
    let ys = lambda_seq
        .iter()
        .map(|&lambda| {
            let s = Secant::new(policy, lambda)?;
            Ok((s.u_lambda() - lambda.powi(b as i32)).ln() / (-lambda).ln_1p())
        })
        .collect::<Result<Vec<_>>>()?;
    extrapolate(lambda_seq, ys, |l| 1.0 / neg_log_one_minus(l))
}

/// Closed-form `B / (A - 1)` for workload policies and `B / log A` for the
/// queue-length variants.
pub fn heavy_traffic_limit(policy: &PolicySpec) -> Result<f64> {
    let a = policy.heavy_traffic_a().unwrap_or(1.0);
    if a <= 1.0 {
        return Err(Error::UnsupportedPolicy(format!(
            "{policy}: no heavy-traffic limit for A = {a}"
        )));
    }
    let b = policy.heavy_traffic_b();
    Ok(match policy.discipline() {
        Discipline::Workload => b / (a - 1.0),
        Discipline::QueueLength => b / a.ln(),
    })
}

/// Limit of `-E[W] / log(p_idle)` as `lambda -> 0`.
pub fn low_load_limit(policy: &PolicySpec) -> Result<f64> {
    if policy.discipline() == Discipline::QueueLength {
        return Err(Error::UnsupportedPolicy(format!(
            "{policy}: no light-load limit for the queue-length variant"
        )));
    }
    match policy.kind() {
        PolicyKind::LeastLoaded { d } => Ok(1.0 / *d as f64),
        PolicyKind::Batch { d, k } => Ok(1.0 / (d - k + 1) as f64),
        PolicyKind::Mix { choices } => {
            // choices are sorted by d
            let d = choices.iter().find(|c| c.1 > 0.0).map(|c| c.0).unwrap_or(1);
            Ok(1.0 / d as f64)
        }
        PolicyKind::Redundancy { .. } | PolicyKind::Memory { .. } => {
            Err(Error::UnsupportedPolicy(policy.to_string()))
        }
    }
}

/// Denominator used to scale the mean waiting time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scaling {
    /// `-E[W] / log(1 - lambda)`
    #[serde(rename = "log1mlambda", alias = "log_one_minus_lambda")]
    LogOneMinusLambda,
    /// `-E[W] / log(p_idle)`
    #[serde(rename = "logplambda", alias = "log_p_lambda")]
    LogPLambda,
}

impl Scaling {
    pub fn denominator(&self, policy: &PolicySpec, lambda: f64) -> Result<f64> {
        match self {
            Scaling::LogOneMinusLambda => Ok(-neg_log_one_minus(lambda)),
            Scaling::LogPLambda => log_p_idle(policy, lambda),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Scaling::LogOneMinusLambda => "log1mlambda",
            Scaling::LogPLambda => "logplambda",
        }
    }
}

impl fmt::Display for Scaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Scaling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log1mlambda" | "log_one_minus_lambda" => Ok(Scaling::LogOneMinusLambda),
            "logplambda" | "log_p_lambda" => Ok(Scaling::LogPLambda),
            other => Err(Error::InvalidArgument(format!(
                "unknown scaling `{other}` (use log1mlambda or logplambda)"
            ))),
        }
    }
}

/// One row of a scaled curve. Failed rows keep the error instead of values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub lambda: f64,
    pub mean_wait: Option<f64>,
    pub scaled: Option<f64>,
    pub error: Option<String>,
}

/// Scaled mean waiting time at one arrival rate.
pub fn scaled_point(
    policy: &PolicySpec,
    lambda: f64,
    scaling: Scaling,
    opts: &SolverOptions,
) -> Result<(f64, f64)> {
    let denominator = scaling.denominator(policy, lambda)?;
    let ew = mean_waiting_with(policy, lambda, opts)?;
    Ok((ew, -ew / denominator))
}

/// Rows `(lambda, E[W], -E[W] / log(denominator))`, computed in parallel and
/// returned in grid order.
pub fn scaled_curve(policy: &PolicySpec, lambda_grid: &[f64], scaling: Scaling) -> Vec<CurveRow> {
    scaled_curve_with(policy, lambda_grid, scaling, &SolverOptions::default())
}

pub fn scaled_curve_with(
    policy: &PolicySpec,
    lambda_grid: &[f64],
    scaling: Scaling,
    opts: &SolverOptions,
) -> Vec<CurveRow> {
    lambda_grid
        .par_iter()
        .map(
            |&lambda| match scaled_point(policy, lambda, scaling, opts) {
                Ok((ew, scaled)) => CurveRow {
                    lambda,
                    mean_wait: Some(ew),
                    scaled: Some(scaled),
                    error: None,
                },
                Err(e) => CurveRow {
                    lambda,
                    mean_wait: None,
                    scaled: None,
                    error: Some(e.to_string()),
                },
            },
        )
        .collect()
}

pub const CURVE_HEADER: [&str; 5] = ["lambda", "mean_wait", "scaled", "scaling", "policy"];

/// CSV rendering of [`scaled_curve`] output; failed rows leave the numeric
/// fields empty.
pub fn curve_csv(policy: &PolicySpec, scaling: Scaling, rows: &[CurveRow]) -> String {
    let mut out = csv::Writer::from_writer(Vec::new());
    let opt = |v: Option<f64>| v.map(sig12).unwrap_or_default();
    out.write_record(CURVE_HEADER).expect("in-memory write");
    for row in rows {
        out.write_record([
            sig12(row.lambda),
            opt(row.mean_wait),
            opt(row.scaled),
            scaling.to_string(),
            policy.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(out.into_inner().expect("in-memory write")).expect("ascii output")
}

/// Number of largest-`lambda` points used by [`heavy_traffic_extrapolation`].
pub const HEAVY_FIT_POINTS: usize = 4;

/// Extrapolated `-E[W] / log(1 - lambda)` as `lambda -> 1`, from a fit
/// `c0 + c1 / (-log(1 - lambda))` on the largest [`HEAVY_FIT_POINTS`] rates.
pub fn heavy_traffic_extrapolation(
    policy: &PolicySpec,
    lambda_seq: &[f64],
) -> Result<Extrapolation> {
    let mut lambdas = lambda_seq.to_vec();
    lambdas.sort_by(f64::total_cmp);
    let tail = &lambdas[lambdas.len().saturating_sub(HEAVY_FIT_POINTS)..];
    let ys = tail
        .par_iter()
        .map(|&lambda| {
            scaled_point(
                policy,
                lambda,
                Scaling::LogOneMinusLambda,
                &SolverOptions::default(),
            )
            .map(|r| r.1)
        })
        .collect::<Result<Vec<_>>>()?;
    extrapolate(tail, ys, |l| 1.0 / neg_log_one_minus(l))
}

/// Extrapolated `-E[W] / log(p_idle)` as `lambda -> 0`, linear in `lambda`.
pub fn low_load_extrapolation(policy: &PolicySpec, lambda_seq: &[f64]) -> Result<Extrapolation> {
    let ys = lambda_seq
        .par_iter()
        .map(|&lambda| {
            scaled_point(
                policy,
                lambda,
                Scaling::LogPLambda,
                &SolverOptions::default(),
            )
            .map(|r| r.1)
        })
        .collect::<Result<Vec<_>>>()?;
    extrapolate(lambda_seq, ys, |l| l)
}

/// Summary of the heavy-traffic constants of one policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub policy: PolicySpec,
    /// Exponent `b` from [`choose_b`].
    pub b_exponent: u32,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    /// `B / (A - 1)` or `B / log A` with the numeric `A` and `B`.
    pub heavy_limit: f64,
    pub closed_form_reference: f64,
    /// Extrapolated scaled mean waiting time, when the policy has one.
    pub scaled_extrapolation: Option<f64>,
    pub low_load_limit: Option<f64>,
    pub extrapolation_residual: f64,
}

/// Runs [`choose_b`], [`numeric_A`], [`numeric_B`] and the mean-waiting
/// extrapolation for one policy.
pub fn limit_report(policy: &PolicySpec) -> Result<LimitReport> {
    let closed_form_reference = heavy_traffic_limit(policy)?;
    let b_exponent = choose_b(policy, &DEFAULT_B_GRID)?;
    let seq = heavy_lambda_seq(2..=10);
    let a = numeric_A(policy, b_exponent, &seq)?;
    let b = numeric_B(policy, b_exponent, &seq)?;
    let heavy_limit = match policy.discipline() {
        Discipline::Workload => b.value / (a.value - 1.0),
        Discipline::QueueLength => b.value / a.value.ln(),
    };
    let mut residual = a.residual.max(b.residual);
    let scaled = match policy.kind() {
        PolicyKind::Redundancy { .. } => None,
        _ => {
            let fit = heavy_traffic_extrapolation(policy, &heavy_lambda_seq(2..=8))?;
            residual = residual.max(fit.residual);
            Some(fit.value)
        }
    };
    Ok(LimitReport {
        policy: policy.clone(),
        b_exponent,
        a: a.value,
        b: b.value,
        heavy_limit,
        closed_form_reference,
        scaled_extrapolation: scaled,
        low_load_limit: low_load_limit(policy).ok(),
        extrapolation_residual: residual,
    })
}
