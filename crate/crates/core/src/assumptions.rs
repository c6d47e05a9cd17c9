//! Sampled verification of the sufficient conditions behind the heavy-traffic
//! limit, of the auxiliary inequalities on `T`, and of the floor/ceil
//! majorization used to compare mixes.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::mm1_ccdf;
use crate::error::{Error, Result};
use crate::limits::{fit_line, heavy_lambda_seq, numeric_A, numeric_B, DEFAULT_B_GRID};
use crate::ode::{mean_waiting, solve_ccdf, SolverOptions};
use crate::policy::{choose_b, h_monotonicity_violation, PolicyKind, PolicySpec, Secant, TMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

/// A sampled point at which a condition failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub lambda: f64,
    /// The `x` or `u` coordinate, when the condition has one.
    pub at: Option<f64>,
    pub observed: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub assumption_id: String,
    pub policy: PolicySpec,
    pub lambda_grid: Vec<f64>,
    pub status: Status,
    pub witnesses: Vec<Witness>,
    /// Named numbers observed during the check (fitted limits, `b`, ...).
    pub measurements: BTreeMap<String, f64>,
    /// Why the check was skipped or what failed, in words.
    pub note: Option<String>,
}

impl AssumptionReport {
    fn new(id: impl Into<String>, policy: &PolicySpec, grid: &[f64]) -> Self {
        Self {
            assumption_id: id.into(),
            policy: policy.clone(),
            lambda_grid: grid.to_vec(),
            status: Status::Pass,
            witnesses: Vec::new(),
            measurements: BTreeMap::new(),
            note: None,
        }
    }

    fn fail(&mut self, witness: Witness) {
        self.status = Status::Fail;
        self.witnesses.push(witness);
    }

    fn skip(mut self, why: impl Into<String>) -> Self {
        self.status = Status::Skipped;
        self.note = Some(why.into());
        self
    }

    fn measure(&mut self, name: &str, value: f64) {
        self.measurements.insert(name.to_string(), value);
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckOptions {
    /// Relative tolerance on extrapolated limits.
    pub tolerance: f64,
    /// Fixed `b`; when absent it comes from [`choose_b`] on the grid.
    pub b: Option<u32>,
    /// Points in `(0, 1]` on which conditions on `T` are sampled.
    pub u_points: usize,
    pub solver: SolverOptions,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            tolerance: 0.01,
            b: None,
            u_points: 1000,
            solver: SolverOptions::default(),
        }
    }
}

/// Values of `epsilon` for the double limit in assumption 7.
pub const EPSILONS: [f64; 3] = [0.1, 0.05, 0.01];

fn relative_gap(observed: f64, expected: f64) -> f64 {
    (observed - expected).abs() / expected.abs().max(f64::MIN_POSITIVE)
}

fn resolve_b(policy: &PolicySpec, grid: &[f64], opts: &CheckOptions) -> Result<u32> {
    match opts.b {
        Some(b) => Ok(b),
        None => choose_b(policy, grid),
    }
}

/// Verifies assumption `id` (1 to 7) on the grid.
pub fn check_assumption(
    policy: &PolicySpec,
    id: u8,
    lambda_grid: &[f64],
    opts: &CheckOptions,
) -> Result<AssumptionReport> {
    let mut grid = lambda_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    for &lambda in &grid {
        crate::policy::check_lambda(lambda)?;
    }
    let mut report = AssumptionReport::new(id.to_string(), policy, &grid);
    match id {
        1 => check_root_path(policy, &grid, opts, &mut report),
        2 => check_below_diagonal(policy, &grid, opts, &mut report),
        3 => {
            let b = match resolve_b(policy, &grid, opts) {
                Ok(b) => b,
                Err(Error::NoRoot { lambda, .. }) => {
                    return Ok(report.skip(format!("no fixed point at lambda = {lambda}")))
                }
                Err(Error::BNotFound { lambda, b_max }) => {
                    report.fail(Witness {
                        lambda,
                        at: None,
                        observed: Some(b_max as f64),
                    });
                    report.note = Some(format!("no b <= {b_max} works"));
                    return Ok(report);
                }
                Err(e) => return Err(e),
            };
            report.measure("b", b as f64);
            for &lambda in &grid {
                let s = Secant::new(policy, lambda)?;
                if let Some(x) = h_monotonicity_violation(&s, b) {
                    report.fail(Witness {
                        lambda,
                        at: Some(x),
                        observed: Some(s.h(x)),
                    });
                }
            }
        }
        4 => {
            if matches!(policy.kind(), PolicyKind::Redundancy { .. }) {
                return Ok(report.skip("the redundancy curve starts at 1, not lambda"));
            }
            let b = match resolve_b(policy, &grid, opts) {
                Ok(b) => b,
                Err(e) => return Ok(report.skip(e.to_string())),
            };
            report.measure("b", b as f64);
            check_plateau_exit(policy, &grid, b, opts, &mut report)?;
        }
        5..=7 => {
            let b = match resolve_b(policy, &grid, opts) {
                Ok(b) => b,
                Err(e) => return Ok(report.skip(e.to_string())),
            };
            report.measure("b", b as f64);
            let seq = heavy_lambda_seq(2..=10);
            let (name, expected) = match id {
                5 | 7 => ("A", policy.heavy_traffic_a()),
                _ => ("B", Some(policy.heavy_traffic_b())),
            };
            let observed = match id {
                5 => numeric_A(policy, b, &seq).map(|e| e.value),
                6 => numeric_B(policy, b, &seq).map(|e| e.value),
                _ => double_limit_h(policy),
            };
            let observed = match observed {
                Ok(v) => v,
                Err(e @ Error::NoRoot { .. }) => return Ok(report.skip(e.to_string())),
                Err(e @ Error::ExtrapolationUnstable { .. }) => {
                    report.status = Status::Fail;
                    report.note = Some(e.to_string());
                    report.witnesses.push(Witness {
                        lambda: 1.0,
                        at: None,
                        observed: None,
                    });
                    return Ok(report);
                }
                Err(e) => return Err(e),
            };
            report.measure(name, observed);
            if let Some(expected) = expected {
                report.measure(&format!("{name}_expected"), expected);
                if relative_gap(observed, expected) > opts.tolerance {
                    report.fail(Witness {
                        lambda: 1.0,
                        at: None,
                        observed: Some(observed),
                    });
                }
            }
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "assumption id {other} is not in 1..=7"
            )))
        }
    }
    Ok(report)
}

fn check_root_path(
    policy: &PolicySpec,
    grid: &[f64],
    opts: &CheckOptions,
    report: &mut AssumptionReport,
) {
    let mut previous: Option<f64> = None;
    for &lambda in grid {
        match Secant::new(policy, lambda) {
            Ok(s) => {
                let u = s.u_lambda();
                if previous.is_some_and(|p| u > p) {
                    // u should shrink toward 1 as lambda grows
                    report.fail(Witness {
                        lambda,
                        at: None,
                        observed: Some(u),
                    });
                }
                previous = Some(u);
            }
            Err(_) => report.fail(Witness {
                lambda,
                at: None,
                observed: None,
            }),
        }
    }
    let near_one = 1.0 - 1e-10;
    match Secant::new(policy, near_one) {
        Ok(s) => {
            report.measure("u_near_one", s.u_lambda());
            if s.u_lambda() - 1.0 > opts.tolerance {
                report.fail(Witness {
                    lambda: near_one,
                    at: None,
                    observed: Some(s.u_lambda()),
                });
            }
        }
        Err(_) => report.fail(Witness {
            lambda: near_one,
            at: None,
            observed: None,
        }),
    }
}

fn check_below_diagonal(
    policy: &PolicySpec,
    grid: &[f64],
    opts: &CheckOptions,
    report: &mut AssumptionReport,
) {
    let n = opts.u_points.max(2);
    let mut lambdas = grid.to_vec();
    lambdas.push(1.0 - 1e-12);
    for &lambda in &lambdas {
        let t = TMap::new(policy, lambda).expect("grid validated");
        if t.value(0.0) != 0.0 {
            report.fail(Witness {
                lambda,
                at: Some(0.0),
                observed: Some(t.value(0.0)),
            });
        }
        let mut prev_ratio = 0.0;
        for i in 1..=n {
            let u = i as f64 / n as f64;
            let ratio = t.value(u) / u;
            let limit_probe = lambda > grid.last().copied().unwrap_or(0.0);
            if limit_probe {
                // T/u must stay below 1 as lambda -> 1 away from u = 1
                if i < n && ratio >= 1.0 {
                    report.fail(Witness {
                        lambda,
                        at: Some(u),
                        observed: Some(ratio),
                    });
                }
                continue;
            }
            if ratio >= 1.0 {
                report.fail(Witness {
                    lambda,
                    at: Some(u),
                    observed: Some(ratio),
                });
            }
            if ratio < prev_ratio * (1.0 - 1e-14) {
                report.fail(Witness {
                    lambda,
                    at: Some(u),
                    observed: Some(ratio - prev_ratio),
                });
            }
            prev_ratio = ratio;
        }
    }
}

/// `w_bar` is the first `w` with `F(w) <= lambda^b`. Random-routing
/// domination `F(w) <= lambda e^{-(1-lambda) w}` bounds it by
/// `(b - 1) log(1/lambda) / (1 - lambda)`, which tends to `b - 1`.
fn check_plateau_exit(
    policy: &PolicySpec,
    grid: &[f64],
    b: u32,
    opts: &CheckOptions,
    report: &mut AssumptionReport,
) -> Result<()> {
    let results: Vec<Result<(f64, f64, Option<f64>)>> = grid
        .par_iter()
        .map(|&lambda| {
            let curve = solve_ccdf(policy, lambda, lambda, &opts.solver)?;
            let level = lambda.powi(b as i32);
            let w_bar = first_crossing(&curve, level);
            let bound = ((b as f64 - 1.0) * -lambda.ln() / (1.0 - lambda)).max(0.0);
            let violation = curve
                .grid()
                .iter()
                .zip(curve.values())
                .find(|(w, f)| **f > mm1_ccdf(lambda, **w) * (1.0 + 1e-9) + 1e-15)
                .map(|(w, _)| *w);
            Ok((w_bar, bound, violation))
        })
        .collect();
    let mut worst: f64 = 0.0;
    for (&lambda, result) in grid.iter().zip(results) {
        let (w_bar, bound, violation) = result?;
        worst = worst.max(w_bar);
        if let Some(w) = violation {
            report.fail(Witness {
                lambda,
                at: Some(w),
                observed: None,
            });
            report.note = Some("curve exceeds the M/M/1 ccdf".into());
        }
        if w_bar > bound + 1e-9 {
            report.fail(Witness {
                lambda,
                at: None,
                observed: Some(w_bar),
            });
        }
    }
    report.measure("w_bar_max", worst);
    Ok(())
}

fn first_crossing(curve: &crate::ode::WorkloadCurve, level: f64) -> f64 {
    if curve.boundary() <= level {
        return 0.0;
    }
    let i = curve.values().partition_point(|&f| f > level);
    if i >= curve.grid().len() {
        return curve.tail_cut();
    }
    let (mut lo, mut hi) = (curve.grid()[i - 1], curve.grid()[i]);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if curve.ccdf(mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// `lim_{eps -> 0} lim_{lambda -> 1} h(eps)`: the inner limit by a linear
/// fit in `1 - lambda`, the outer one by quadratic interpolation at 0.
fn double_limit_h(policy: &PolicySpec) -> Result<f64> {
    let lambdas = heavy_lambda_seq(3..=6);
    let inner = EPSILONS
        .iter()
        .map(|&eps| {
            let ys = lambdas
                .iter()
                .map(|&lambda| Secant::new(policy, lambda).map(|s| s.h(eps)))
                .collect::<Result<Vec<_>>>()?;
            let xs: Vec<f64> = lambdas.iter().map(|l| 1.0 - l).collect();
            Ok(fit_line(&xs, &ys).0)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(lagrange_at_zero(&EPSILONS, &inner))
}

fn lagrange_at_zero(xs: &[f64], ys: &[f64]) -> f64 {
    (0..xs.len())
        .map(|i| {
            let weight: f64 = (0..xs.len())
                .filter(|&j| j != i)
                .map(|j| xs[j] / (xs[j] - xs[i]))
                .product();
            weight * ys[i]
        })
        .sum()
}

/// `T(u) <= lambda u` on a `lambda` grid times `u_points` values of `u`.
#[allow(non_snake_case)]
pub fn check_T_dominated(
    policy: &PolicySpec,
    lambda_grid: &[f64],
    u_points: usize,
) -> Result<AssumptionReport> {
    let report = AssumptionReport::new("T_dominated", policy, lambda_grid);
    if !matches!(
        policy.kind(),
        PolicyKind::Batch { .. } | PolicyKind::LeastLoaded { .. }
    ) {
        return Ok(report.skip("stated for LL(d, K) only"));
    }
    sample_t(policy, lambda_grid, u_points, report, |t, lambda, u| {
        let v = t.value(u);
        (v > lambda * u * (1.0 + 4.0 * f64::EPSILON)).then_some(v - lambda * u)
    })
}

/// `T(u) / u` is nondecreasing in `u` on `(0, 1]`.
pub fn check_t_over_u_increasing(
    policy: &PolicySpec,
    lambda_grid: &[f64],
    u_points: usize,
) -> Result<AssumptionReport> {
    let report = AssumptionReport::new("T_over_u_increasing", policy, lambda_grid);
    let step = 1.0 / u_points.max(1) as f64;
    sample_t(policy, lambda_grid, u_points, report, |t, _, u| {
        let lower = u - step;
        if lower <= 0.0 {
            return None;
        }
        let drop = t.value(lower) / lower - t.value(u) / u;
        (drop > 1e-14 * (t.value(u) / u)).then_some(-drop)
    })
}

fn sample_t(
    policy: &PolicySpec,
    lambda_grid: &[f64],
    u_points: usize,
    mut report: AssumptionReport,
    violation: impl Fn(&TMap, f64, f64) -> Option<f64>,
) -> Result<AssumptionReport> {
    let mut samples = 0usize;
    for &lambda in lambda_grid {
        let t = TMap::new(policy, lambda)?;
        for i in 1..=u_points {
            let u = i as f64 / u_points as f64;
            samples += 1;
            if let Some(observed) = violation(&t, lambda, u) {
                report.fail(Witness {
                    lambda,
                    at: Some(u),
                    observed: Some(observed),
                });
            }
        }
    }
    report.measure("samples", samples as f64);
    Ok(report)
}

/// Closed-form `lim u'` as `lambda -> 1`: `-K/(d-K)` for LL(d, K) and
/// `-1/(sum p_i d_i - 1)` for mixes.
pub fn u_prime_limit(policy: &PolicySpec) -> Result<f64> {
    match policy.kind() {
        PolicyKind::LeastLoaded { d } => Ok(-1.0 / (*d as f64 - 1.0)),
        PolicyKind::Batch { d, k } => Ok(-(*k as f64) / (d - k) as f64),
        PolicyKind::Mix { .. } => Ok(-1.0 / (policy.mean_d().unwrap() - 1.0)),
        _ => Err(Error::UnsupportedPolicy(policy.to_string())),
    }
}

/// Closed-form `lim u''` when it is checked: `2 d K / (d - K)^2` for `K = 2`
/// and `d / (d - 1)^2` for `K = 1`.
pub fn u_second_limit(policy: &PolicySpec) -> Option<f64> {
    let (d, k) = match policy.kind() {
        PolicyKind::LeastLoaded { d } => (*d as f64, 1.0),
        PolicyKind::Batch { d, k } if *k <= 2 => (*d as f64, *k as f64),
        _ => return None,
    };
    if k == 1.0 {
        Some(d / ((d - 1.0) * (d - 1.0)))
    } else {
        Some(2.0 * d * k / ((d - k) * (d - k)))
    }
}

fn u_at(policy: &PolicySpec, lambda: f64) -> Result<f64> {
    Ok(Secant::new(policy, lambda)?.u_lambda())
}

/// Central differences of `u` at `lambda = 1 - 10^-k` with step
/// `(1 - lambda) / 10`, extrapolated linearly in `1 - lambda`.
pub fn u_derivative_extrapolation(
    policy: &PolicySpec,
    order: u8,
    ks: std::ops::RangeInclusive<i32>,
) -> Result<f64> {
    let lambdas = heavy_lambda_seq(ks);
    let ys = lambdas
        .iter()
        .map(|&lambda| {
            let h = (1.0 - lambda) / 10.0;
            let (lo, mid, hi) = (
                u_at(policy, lambda - h)?,
                u_at(policy, lambda)?,
                u_at(policy, lambda + h)?,
            );
            Ok(match order {
                1 => (hi - lo) / (2.0 * h),
                _ => (hi - 2.0 * mid + lo) / (h * h),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = lambdas.iter().map(|l| 1.0 - l).collect();
    let (value, _, residual) = fit_line(&xs, &ys);
    if !value.is_finite() || residual > 0.05 * value.abs().max(1.0) {
        return Err(Error::ExtrapolationUnstable { residual });
    }
    Ok(value)
}

/// Compares the extrapolated `u'` (within 1%) and, for `K <= 2`, `u''`
/// (within 5%) against their closed forms.
pub fn check_u_prime_limit(policy: &PolicySpec) -> Result<AssumptionReport> {
    let mut report = AssumptionReport::new("u_prime_limit", policy, &heavy_lambda_seq(3..=6));
    let expected = match u_prime_limit(policy) {
        Ok(v) => v,
        Err(e) => return Ok(report.skip(e.to_string())),
    };
    let observed = u_derivative_extrapolation(policy, 1, 3..=6)?;
    report.measure("u_prime", observed);
    report.measure("u_prime_expected", expected);
    if relative_gap(observed, expected) > 0.01 {
        report.fail(Witness {
            lambda: 1.0,
            at: None,
            observed: Some(observed),
        });
    }
    if let Some(expected2) = u_second_limit(policy) {
        let observed2 = u_derivative_extrapolation(policy, 2, 2..=4)?;
        report.measure("u_second", observed2);
        report.measure("u_second_expected", expected2);
        if relative_gap(observed2, expected2) > 0.05 {
            report.fail(Witness {
                lambda: 1.0,
                at: None,
                observed: Some(observed2),
            });
        }
    }
    Ok(report)
}

/// `(q, b)` with `b = (floor(dbar), ceil(dbar))` and `q` matching the mean
/// `dbar = sum p_j a_j`; a single entry when `dbar` is an integer.
pub fn floor_ceil_pair(p: &[f64], a: &[u32]) -> Result<(Vec<f64>, Vec<u32>)> {
    check_distribution(p, a)?;
    let dbar: f64 = p.iter().zip(a).map(|(p, a)| p * *a as f64).sum();
    let floor = dbar.floor();
    let frac = dbar - floor;
    if !(1e-12..=1.0 - 1e-12).contains(&frac) {
        return Ok((vec![1.0], vec![dbar.round() as u32]));
    }
    Ok((vec![1.0 - frac, frac], vec![floor as u32, floor as u32 + 1]))
}

fn check_distribution(p: &[f64], a: &[u32]) -> Result<()> {
    if p.is_empty() || p.len() != a.len() {
        return Err(Error::InvalidArgument(
            "p and a must be nonempty and of equal length".into(),
        ));
    }
    if p.iter().any(|&x| !(x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(
            "p must be a probability vector".into(),
        ));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub holds: bool,
    /// Row `k` describes how entry `k` of `(q, b)` spreads over `(p, a)`.
    pub matrix: Vec<Vec<f64>>,
    /// Largest violation among the four matrix conditions.
    pub max_violation: f64,
}

const CERT_TOL: f64 = 1e-10;

/// Builds the matrix showing that `(q, b)`, the floor/ceil pair of `(p, a)`,
/// is majorized by `(p, a)`, then checks it.
///
/// The ceiling row is a convex combination of the two greedy fills of
/// `[0, p_j / q_2]` (largest `a_j` first and smallest first), which have the
/// largest and smallest attainable means; the combination hits `ceil(dbar)`
/// exactly. The floor row is then `(p_j - q_2 a_2j) / q_1`.
pub fn majorization_certificate(p: &[f64], a: &[u32], q: &[f64], b: &[u32]) -> Result<Certificate> {
    let (q_expected, b_expected) = floor_ceil_pair(p, a)?;
    let same = q.len() == q_expected.len()
        && b == b_expected.as_slice()
        && q.iter()
            .zip(&q_expected)
            .all(|(x, y)| (x - y).abs() <= 1e-12);
    if !same {
        return Err(Error::ConstructionFailed(format!(
            "(q, b) = ({q:?}, {b:?}) is not the floor/ceil pair ({q_expected:?}, {b_expected:?})"
        )));
    }
    let matrix = if q.len() == 1 {
        vec![p.to_vec()]
    } else {
        let q2 = q[1];
        let target = b[1] as f64;
        let mut order: Vec<usize> = (0..p.len()).collect();
        order.sort_by_key(|&j| std::cmp::Reverse(a[j]));
        let top = greedy_fill(p, q2, &order);
        order.reverse();
        let bottom = greedy_fill(p, q2, &order);
        let mean = |r: &[f64]| r.iter().zip(a).map(|(r, a)| r * *a as f64).sum::<f64>();
        let (hi, lo) = (mean(&top), mean(&bottom));
        if target > hi + CERT_TOL || target < lo - CERT_TOL {
            return Err(Error::ConstructionFailed(format!(
                "ceiling {target} is outside the attainable row means [{lo}, {hi}]"
            )));
        }
        let theta = if hi - lo > 0.0 {
            ((target - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let ceil_row: Vec<f64> = top
            .iter()
            .zip(&bottom)
            .map(|(t, b)| theta * t + (1.0 - theta) * b)
            .collect();
        let floor_row: Vec<f64> = p
            .iter()
            .zip(&ceil_row)
            .map(|(p, r)| (p - q2 * r) / q[0])
            .collect();
        vec![floor_row, ceil_row]
    };
    let max_violation = certificate_violation(&matrix, p, a, q, b);
    Ok(Certificate {
        holds: max_violation <= CERT_TOL,
        matrix,
        max_violation,
    })
}

fn greedy_fill(p: &[f64], q2: f64, order: &[usize]) -> Vec<f64> {
    let mut row = vec![0.0; p.len()];
    let mut left = 1.0;
    for &j in order {
        let take = (p[j] / q2).min(left);
        row[j] = take;
        left -= take;
        if left <= 0.0 {
            break;
        }
    }
    row
}

fn certificate_violation(matrix: &[Vec<f64>], p: &[f64], a: &[u32], q: &[f64], b: &[u32]) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, row) in matrix.iter().enumerate() {
        for &x in row {
            worst = worst.max(-x);
        }
        worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
        let mean: f64 = row.iter().zip(a).map(|(x, a)| x * *a as f64).sum();
        worst = worst.max((mean - b[k] as f64).abs());
    }
    for j in 0..p.len() {
        let mass: f64 = matrix.iter().zip(q).map(|(row, q)| q * row[j]).sum();
        worst = worst.max((mass - p[j]).abs());
    }
    worst
}

/// Policy applying LL(b_k) with probability q_k.
pub fn policy_from_pairs(q: &[f64], b: &[u32]) -> Result<PolicySpec> {
    if q.len() == 1 {
        return PolicySpec::least_loaded(b[0]);
    }
    let pairs: Vec<(u32, f64)> = b.iter().copied().zip(q.iter().copied()).collect();
    PolicySpec::mix(&pairs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingRow {
    pub lambda: f64,
    pub original: f64,
    pub floor_ceil: f64,
    pub holds: bool,
}

/// `E[W]` of the floor/ceil mix against the original mix.
pub fn majorization_ordering(
    p: &[f64],
    a: &[u32],
    lambdas: &[f64],
    tol: f64,
) -> Result<Vec<OrderingRow>> {
    let (q, b) = floor_ceil_pair(p, a)?;
    let original = policy_from_pairs(p, a)?;
    let reduced = policy_from_pairs(&q, &b)?;
    lambdas
        .par_iter()
        .map(|&lambda| {
            let original = mean_waiting(&original, lambda)?;
            let floor_ceil = mean_waiting(&reduced, lambda)?;
            Ok(OrderingRow {
                lambda,
                original,
                floor_ceil,
                holds: floor_ceil <= original + tol,
            })
        })
        .collect()
}

/// The conditions checked for every policy in [`verify_policy`], on
/// [`DEFAULT_B_GRID`].
pub fn verify_policy(policy: &PolicySpec, opts: &CheckOptions) -> Result<Vec<AssumptionReport>> {
    let grid = DEFAULT_B_GRID;
    let mut reports: Vec<AssumptionReport> = (1..=7)
        .map(|id| check_assumption(policy, id, &grid, opts))
        .collect::<Result<_>>()?;
    let t_grid: Vec<f64> = (1..=100).map(|i| i as f64 / 101.0).collect();
    let u_points = 100;
    if matches!(
        policy.kind(),
        PolicyKind::Batch { .. } | PolicyKind::LeastLoaded { .. }
    ) {
        reports.push(check_T_dominated(policy, &t_grid, u_points)?);
    }
    reports.push(check_t_over_u_increasing(policy, &t_grid, u_points)?);
    if u_prime_limit(policy).is_ok() {
        reports.push(check_u_prime_limit(policy)?);
    }
    Ok(reports)
}
