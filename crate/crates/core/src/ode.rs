//! Adaptive integration of the cavity equation `F'(w) = T(F(w)) - F(w)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{check_lambda, Discipline, PolicyKind, PolicySpec, TMap};

/// Solver settings. Every field has a default, so partial JSON is accepted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Relative local error per step, measured on `F`.
    pub local_tol: f64,
    /// Integration stops once `F` falls below this value.
    pub tail_epsilon: f64,
    /// Allowed violation of the integral form of the equation.
    pub consistency_tol: f64,
    /// Scales the integration window `w_max_factor * -ln(1-lambda) / (A-1)`.
    pub w_max_factor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            local_tol: 1e-10,
            tail_epsilon: 1e-12,
            consistency_tol: 1e-8,
            w_max_factor: 50.0,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "solver option {name} = {v} must be positive"
                )))
            }
        };
        positive("local_tol", self.local_tol)?;
        positive("tail_epsilon", self.tail_epsilon)?;
        positive("consistency_tol", self.consistency_tol)?;
        positive("w_max_factor", self.w_max_factor)
    }
}

const MIN_STEP: f64 = 1e-14;
const MAX_STEP: f64 = 0.05;
const FIRST_STEP: f64 = 1e-3;
const PROBES: usize = 10;

/// Sampled solution of the cavity equation plus a certified tail bound.
#[derive(Clone, Debug)]
pub struct WorkloadCurve {
    tmap: TMap,
    grid: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    curvatures: Vec<f64>,
    // running integrals of F and T(F)/lambda
    mass: Vec<f64>,
    wait_mass: Vec<f64>,
    boundary: f64,
    tail_remainder_bound: f64,
    wait_remainder_bound: f64,
    tail_decay: f64,
    consistency_residual: f64,
}

impl WorkloadCurve {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lambda(&self) -> f64 {
        self.tmap.lambda()
    }

    pub fn boundary(&self) -> f64 {
        self.boundary
    }

    pub fn tail_cut(&self) -> f64 {
        *self.grid.last().expect("curve is never empty")
    }

    /// Upper bound on the integral of `F` beyond [`tail_cut`](Self::tail_cut).
    pub fn tail_remainder_bound(&self) -> f64 {
        self.tail_remainder_bound
    }

    /// Largest violation of the integral identity seen at the probe points.
    pub fn consistency_residual(&self) -> f64 {
        self.consistency_residual
    }

    fn segment(&self, w: f64) -> usize {
        match self.grid.binary_search_by(|g| g.total_cmp(&w)) {
            Ok(i) => i.min(self.grid.len() - 2),
            Err(i) => i - 1,
        }
    }

    /// `F(w)` by quintic Hermite interpolation. Beyond the tail cut the
    /// exponential bound `F_c exp(-(1 - rho_c)(w - w_c))` is returned.
    pub fn ccdf(&self, w: f64) -> f64 {
        self.ccdf_flagged(w).0
    }

    fn ccdf_flagged(&self, w: f64) -> (f64, bool) {
        if w <= 0.0 {
            return (self.boundary, false);
        }
        let cut = self.tail_cut();
        if w >= cut {
            let last = *self.values.last().unwrap();
            return (last * (-self.tail_decay * (w - cut)).exp(), w > cut);
        }
        if self.grid.len() < 2 {
            return (self.boundary, false);
        }
        let i = self.segment(w);
        (self.hermite(i, w), false)
    }

    fn hermite(&self, i: usize, w: f64) -> f64 {
        let (w0, w1) = (self.grid[i], self.grid[i + 1]);
        let h = w1 - w0;
        let t = (w - w0) / h;
        quintic_hermite(
            t,
            h,
            [self.values[i], self.slopes[i], self.curvatures[i]],
            [
                self.values[i + 1],
                self.slopes[i + 1],
                self.curvatures[i + 1],
            ],
        )
    }

    /// `P(W > w) = T(F(w)) / lambda`, with a flag set when `w` lies beyond
    /// the tail cut and the value is the certified bound.
    pub fn waiting_ccdf(&self, w: f64) -> CcdfValue {
        let (f, extrapolated) = self.ccdf_flagged(w.max(0.0));
        CcdfValue {
            value: self.tmap.value(f) / self.tmap.lambda(),
            extrapolated,
        }
    }

    /// Integral of `F` over `[0, infinity)`, the tail taken as half its bound.
    pub fn mean_workload(&self) -> f64 {
        self.mass.last().unwrap() + 0.5 * self.tail_remainder_bound
    }

    /// Integral of `T(F)/lambda`, i.e. the mean waiting time.
    pub fn mean_waiting(&self) -> f64 {
        self.wait_mass.last().unwrap() + 0.5 * self.wait_remainder_bound
    }

    /// Integral of `g(F(w))` over the stored grid, by five-point
    /// Gauss-Legendre on every segment of the interpolant.
    pub fn integrate<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        let mut total = 0.0;
        for i in 0..self.grid.len().saturating_sub(1) {
            let (w0, w1) = (self.grid[i], self.grid[i + 1]);
            let half = 0.5 * (w1 - w0);
            let mid = 0.5 * (w0 + w1);
            total += half
                * GAUSS5
                    .iter()
                    .map(|&(x, wt)| wt * g(self.hermite(i, mid + half * x)))
                    .sum::<f64>();
        }
        total
    }
}

/// A ccdf value that may come from the tail bound rather than the solution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcdfValue {
    pub value: f64,
    pub extrapolated: bool,
}

const GAUSS5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

fn quintic_hermite(t: f64, h: f64, left: [f64; 3], right: [f64; 3]) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let h00 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h10 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h20 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
    let h01 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    let h11 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h21 = 0.5 * (t3 - 2.0 * t4 + t5);
    h00 * left[0]
        + h10 * h * left[1]
        + h20 * h * h * left[2]
        + h01 * right[0]
        + h11 * h * right[1]
        + h21 * h * h * right[2]
}

// Dormand-Prince 5(4)
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Step {
    f: f64,
    mass: f64,
    wait: f64,
    error: f64,
}

fn dp_step(tmap: &TMap, f0: f64, h: f64) -> Step {
    let lambda = tmap.lambda();
    let mut stage_f = [0.0; 7];
    let mut k = [0.0; 7];
    for s in 0..7 {
        let y = f0 + h * (0..s).map(|j| A[s][j] * k[j]).sum::<f64>();
        stage_f[s] = y;
        k[s] = tmap.value(y) - y;
    }
    let f = f0 + h * (0..7).map(|s| B5[s] * k[s]).sum::<f64>();
    let mass = h * (0..7).map(|s| B5[s] * stage_f[s]).sum::<f64>();
    let wait = h * (0..7).map(|s| B5[s] * tmap.value(stage_f[s])).sum::<f64>() / lambda;
    let error = h * (0..7).map(|s| E[s] * k[s]).sum::<f64>();
    Step {
        f,
        mass,
        wait,
        error,
    }
}

fn integration_window(
    policy: &PolicySpec,
    lambda: f64,
    boundary: f64,
    opts: &SolverOptions,
) -> f64 {
    let a = policy.heavy_traffic_a().filter(|a| *a > 1.0).unwrap_or(2.0);
    let plateau = opts.w_max_factor * -(-lambda).ln_1p() / (a - 1.0);
    // the M/M/1 bound reaches tail_epsilon by this point regardless of policy
    let dominated = (boundary / opts.tail_epsilon).ln().max(1.0) / (1.0 - lambda);
    plateau.max(dominated)
}

/// Solves the cavity equation from `F(0) = boundary` until `F` drops below
/// `opts.tail_epsilon`.
pub fn solve_ccdf(
    policy: &PolicySpec,
    lambda: f64,
    boundary: f64,
    opts: &SolverOptions,
) -> Result<WorkloadCurve> {
    check_lambda(lambda)?;
    opts.validate()?;
    if !(boundary >= lambda && boundary <= 1.0) {
        return Err(Error::InvalidBoundary { boundary, lambda });
    }
    let tmap = TMap::new(policy, lambda)?;
    let w_max = integration_window(policy, lambda, boundary, opts);
    let deriv = |f: f64| tmap.value(f) - f;
    let second = |f: f64| (tmap.derivative(f) - 1.0) * deriv(f);

    let mut grid = vec![0.0];
    let mut values = vec![boundary];
    let mut slopes = vec![deriv(boundary)];
    let mut curvatures = vec![second(boundary)];
    let mut mass = vec![0.0];
    let mut wait_mass = vec![0.0];

    let mut w = 0.0;
    let mut f = boundary;
    let mut h = FIRST_STEP;
    while f >= opts.tail_epsilon {
        if w >= w_max {
            return Err(Error::NonConvergence {
                what: "cavity integration window",
                iterations: grid.len(),
            });
        }
        h = h.min(MAX_STEP);
        let step = dp_step(&tmap, f, h);
        let scale = opts.local_tol * f.abs().max(opts.tail_epsilon);
        let err = step.error.abs() / scale;
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        if err <= 1.0 && step.f.is_finite() {
            w += h;
            f = step.f;
            grid.push(w);
            values.push(f);
            slopes.push(deriv(f));
            curvatures.push(second(f));
            mass.push(mass.last().unwrap() + step.mass);
            wait_mass.push(wait_mass.last().unwrap() + step.wait);
            h *= factor;
        } else {
            h *= factor.min(0.5);
            if h < MIN_STEP {
                return Err(Error::StepUnderflow {
                    w,
                    min_step: MIN_STEP,
                });
            }
        }
    }

    let last = f.max(0.0);
    let rho = if last > 0.0 {
        (tmap.value(last) / last).min(lambda)
    } else {
        0.0
    };
    let tail_remainder_bound = last / (1.0 - rho);
    let wait_remainder_bound = tmap.value(last) / lambda / (1.0 - rho);
    let mut curve = WorkloadCurve {
        tmap,
        grid,
        values,
        slopes,
        curvatures,
        mass,
        wait_mass,
        boundary,
        tail_remainder_bound,
        wait_remainder_bound,
        tail_decay: 1.0 - rho,
        consistency_residual: 0.0,
    };
    curve.consistency_residual = integral_identity_residual(&curve);
    if !(curve.consistency_residual <= opts.consistency_tol) {
        return Err(Error::Inconsistent {
            residual: curve.consistency_residual,
            tolerance: opts.consistency_tol,
        });
    }
    Ok(curve)
}

/// Largest `|F(w) - F(0) e^{-w} - int_0^w T(F(s)) e^{s-w} ds|` over probe
/// nodes. The convolution is accumulated node to node by Gauss-Legendre on
/// the interpolant, independently of the Runge-Kutta stages.
fn integral_identity_residual(curve: &WorkloadCurve) -> f64 {
    let n = curve.grid.len();
    if n < 2 {
        return 0.0;
    }
    let cut = curve.tail_cut();
    let mut targets: Vec<usize> = (1..=PROBES)
        .map(|p| {
            let w = cut * p as f64 / PROBES as f64;
            curve.segment(w.min(cut)) + 1
        })
        .collect();
    targets.dedup();

    let mut conv = 0.0;
    let mut worst: f64 = 0.0;
    let mut next = 0;
    for i in 0..n - 1 {
        let (w0, w1) = (curve.grid[i], curve.grid[i + 1]);
        let half = 0.5 * (w1 - w0);
        let mid = 0.5 * (w0 + w1);
        let piece: f64 = GAUSS5
            .iter()
            .map(|&(x, wt)| {
                let s = mid + half * x;
                wt * curve.tmap.value(curve.hermite(i, s)) * (s - w1).exp()
            })
            .sum();
        conv = conv * (w0 - w1).exp() + half * piece;
        if next < targets.len() && targets[next] == i + 1 {
            let residual = curve.values[i + 1] - curve.boundary * (-w1).exp() - conv;
            worst = worst.max(residual.abs());
            next += 1;
        }
    }
    worst
}

fn workload_policy(policy: &PolicySpec) -> Result<()> {
    if matches!(policy.kind(), PolicyKind::Redundancy { .. }) {
        return Err(Error::UnsupportedPolicy(format!(
            "{policy}: the redundancy curve is a response-time ccdf, not a workload ccdf"
        )));
    }
    Ok(())
}

/// Mean workload `E[L] = int_0^inf F(w) dw`.
pub fn mean_workload(curve: &WorkloadCurve) -> f64 {
    curve.mean_workload()
}

/// Mean waiting time with default solver options. Queue-length policies are
/// routed to [`sq_mean_waiting`].
pub fn mean_waiting(policy: &PolicySpec, lambda: f64) -> Result<f64> {
    mean_waiting_with(policy, lambda, &SolverOptions::default())
}

/// Mean waiting time, computed as `int T(F)/lambda dw` rather than
/// `E[L]/lambda - 1` since the latter cancels badly at light load.
pub fn mean_waiting_with(policy: &PolicySpec, lambda: f64, opts: &SolverOptions) -> Result<f64> {
    if policy.discipline() == Discipline::QueueLength {
        return sq_mean_waiting(policy, lambda, SQ_TOL);
    }
    workload_policy(policy)?;
    let curve = solve_ccdf(policy, lambda, lambda, opts)?;
    Ok(curve.mean_waiting())
}

/// `P(W > w)` for a curve solved with this policy and arrival rate.
pub fn waiting_ccdf(
    policy: &PolicySpec,
    lambda: f64,
    curve: &WorkloadCurve,
    w: f64,
) -> Result<CcdfValue> {
    check_lambda(lambda)?;
    if (curve.lambda() - lambda).abs() > 0.0 {
        return Err(Error::InvalidArgument(format!(
            "curve was solved at lambda = {}, not {lambda}",
            curve.lambda()
        )));
    }
    workload_policy(policy)?;
    if !(w >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "w = {w} must be nonnegative"
        )));
    }
    Ok(curve.waiting_ccdf(w))
}

/// Default cutoff of the queue-length recursion.
pub const SQ_TOL: f64 = 1e-14;
const SQ_MAX_TERMS: usize = 1_000_000;

/// Mean waiting time of the queue-length variant from `u_{k+1} = T(u_k)`,
/// `u_1 = lambda`: `sum_{k>=1} u_k / lambda - 1`.
pub fn sq_mean_waiting(policy: &PolicySpec, lambda: f64, tol: f64) -> Result<f64> {
    let tmap = TMap::new(policy, lambda)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tol = {tol} must be positive"
        )));
    }
    // the k = 1 term cancels the -1 exactly, so sum from k = 2
    let mut u = lambda;
    let mut sum = 0.0;
    let mut carry = 0.0;
    for k in 1..SQ_MAX_TERMS {
        let next = tmap.value(u);
        if !(next < u) {
            return Err(Error::Divergence { k });
        }
        u = next;
        if u < tol {
            return Ok((sum + u) / lambda);
        }
        let y = u - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    Err(Error::NonConvergence {
        what: "queue-length recursion",
        iterations: SQ_MAX_TERMS,
    })
}
