//! Exact results for LL(d, p), which applies LL(d) with probability `p` and
//! random routing otherwise, and the M/M/1 reference ccdf.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::check_lambda;

/// Above this value of `z` the series is replaced by its integral form.
pub const SLOW_SERIES_Z: f64 = 1.0 - 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LLdpParams {
    pub d: u32,
    pub p: f64,
    pub lambda: f64,
}

impl LLdpParams {
    pub fn new(d: u32, p: f64, lambda: f64) -> Result<Self> {
        if !(2..=crate::policy::MAX_D).contains(&d) {
            return Err(Error::InvalidArgument(format!(
                "LL(d,p) needs 2 <= d <= 64, got {d}"
            )));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "LL(d,p) needs p in (0, 1], got {p}"
            )));
        }
        check_lambda(lambda)?;
        Ok(Self { d, p, lambda })
    }

    /// `b = 1 - (1 - p) lambda`.
    pub fn b(&self) -> f64 {
        1.0 - (1.0 - self.p) * self.lambda
    }

    fn p_lambda_d(&self) -> f64 {
        self.p * self.lambda.powi(self.d as i32)
    }

    /// `b - p lambda^d = (1 - p)(1 - lambda) + p (1 - lambda^d)`, without
    /// cancellation near `lambda = 1`.
    fn gap(&self) -> f64 {
        let one_minus_ld = -(self.d as f64 * self.lambda.ln()).exp_m1();
        (1.0 - self.p) * (1.0 - self.lambda) + self.p * one_minus_ld
    }

    /// `z = p lambda^d / b`.
    pub fn z(&self) -> f64 {
        self.p_lambda_d() / self.b()
    }
}

/// Workload ccdf of LL(d, p).
pub fn lldp_ccdf(params: &LLdpParams, w: f64) -> f64 {
    let LLdpParams { d, lambda, .. } = *params;
    let b = params.b();
    let pld = params.p_lambda_d();
    let c = (d - 1) as f64;
    // divide through by e^{cbw} so large w underflows to 0 instead of inf
    let decay = (-c * b * w).exp();
    let ratio = b * decay / (pld * decay + params.gap());
    lambda * ratio.powf(1.0 / c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanQueue {
    pub value: f64,
    /// Number of series terms summed; zero when the integral form was used.
    pub terms: usize,
    /// Set when `z` was too close to 1 for the series to be practical.
    pub slow_convergence: bool,
}

/// Mean queue length (equal to the mean workload) of LL(d, p),
/// `(lambda / b) sum_n z^n / (1 + n(d-1))`. The series stops once a term
/// drops below `tol` times the running sum.
pub fn lldp_mean_queue(params: &LLdpParams, tol: f64) -> Result<MeanQueue> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tol = {tol} must be positive"
        )));
    }
    let z = params.z();
    let c = (params.d - 1) as f64;
    let scale = params.lambda / params.b();
    if z > SLOW_SERIES_Z {
        return Ok(MeanQueue {
            value: scale * series_integral(c, z, params.gap() / params.b()),
            terms: 0,
            slow_convergence: true,
        });
    }
    let mut sum = 0.0;
    let mut carry = 0.0;
    let mut power = 1.0;
    let mut n = 0usize;
    loop {
        let term = power / (1.0 + n as f64 * c);
        let y = term - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
        n += 1;
        if term < tol * sum {
            break;
        }
        power *= z;
    }
    Ok(MeanQueue {
        value: scale * sum,
        terms: n,
        slow_convergence: false,
    })
}

/// `sum_n z^n / (1 + n c) = int_0^1 dt / (1 - z t^c)`, integrated on a mesh
/// that refines geometrically toward `t = 1`. `one_minus_z` is passed in
/// separately to keep its digits.
pub fn series_integral(c: f64, z: f64, one_minus_z: f64) -> f64 {
    const NODES: [(f64, f64); 5] = [
        (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
        (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (0.0, 0.568_888_888_888_888_9),
        (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (0.906_179_845_938_664, 0.236_926_885_056_189_1),
    ];
    // integrate in s = 1 - t over [2^-(k+1), 2^-k], split further in 8
    let integrand = |s: f64| 1.0 / (one_minus_z - z * (c * (-s).ln_1p()).exp_m1());
    let mut total = 0.0;
    for k in 0..64 {
        let hi = 0.5f64.powi(k);
        let lo = 0.5 * hi;
        let width = (hi - lo) / 8.0;
        for piece in 0..8 {
            let a = lo + piece as f64 * width;
            let mid = a + 0.5 * width;
            total += 0.5
                * width
                * NODES
                    .iter()
                    .map(|&(x, wt)| wt * integrand(mid + 0.5 * width * x))
                    .sum::<f64>();
        }
    }
    // the remaining sliver [0, 2^-64] contributes at most its width / (1 - z)
    total + 0.5f64.powi(64) / one_minus_z
}

/// `(lower, upper)` bracket of the mean queue length. The upper bound is
/// `Q~ = (lambda / b)(1 + log(b / (b - p lambda^d)) / (d - 1))`.
pub fn lldp_bounds(params: &LLdpParams) -> (f64, f64) {
    let LLdpParams { d, p, lambda } = *params;
    let b = params.b();
    let c = (d - 1) as f64;
    let upper = lambda / b * (1.0 + (b / params.gap()).ln() / c);
    let correction =
        lambda.powi(d as i32 + 1) * std::f64::consts::PI.powi(2) / (6.0 * p * c * c * b * b);
    (upper - correction, upper)
}

/// Workload ccdf of an M/M/1 queue with load `lambda`.
pub fn mm1_ccdf(lambda: f64, w: f64) -> f64 {
    lambda * (-(1.0 - lambda) * w).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(d: u32, p: f64, lambda: f64) -> LLdpParams {
        LLdpParams::new(d, p, lambda).unwrap()
    }

    #[test]
    fn ccdf_examples() {
        assert_relative_eq!(lldp_ccdf(&params(2, 1.0, 0.5), 0.0), 0.5, epsilon = 1e-15);
        let e = std::f64::consts::E;
        assert_relative_eq!(
            lldp_ccdf(&params(2, 1.0, 0.5), 1.0),
            0.5 / (0.25 + 0.75 * e),
            epsilon = 1e-15
        );
        assert_eq!(lldp_ccdf(&params(3, 0.5, 0.8), 1e6), 0.0);
        let q = params(3, 0.5, 0.8);
        assert_relative_eq!(lldp_ccdf(&q, 0.0), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn ccdf_solves_its_equation() {
        for (d, p, lambda) in [(2, 1.0, 0.5), (3, 0.5, 0.8), (4, 0.3, 0.95)] {
            let q = params(d, p, lambda);
            for i in 0..30 {
                let w = 0.25 * i as f64 + 0.1;
                let step = 1e-5;
                let fd = (lldp_ccdf(&q, w + step) - lldp_ccdf(&q, w - step)) / (2.0 * step);
                let f = lldp_ccdf(&q, w);
                let rhs = lambda * (p * f.powi(d as i32) + (1.0 - p) * f) - f;
                assert!((fd - rhs).abs() < 1e-6, "{d} {p} {lambda} w={w}");
                assert!(lldp_ccdf(&q, w + 0.1) < f);
            }
        }
    }

    #[test]
    fn mean_queue_examples() {
        let m = lldp_mean_queue(&params(2, 1.0, 0.7), 1e-16).unwrap();
        assert_relative_eq!(m.value, -(0.51f64).ln() / 0.7, epsilon = 1e-12);
        assert!(!m.slow_convergence);
        let m = lldp_mean_queue(&params(2, 1.0, 1e-6), 1e-16).unwrap();
        assert_relative_eq!(m.value, 1e-6, max_relative = 1e-5);
        let m = lldp_mean_queue(&params(3, 1.0, 0.5), 1e-16).unwrap();
        let partial: f64 = (0..6)
            .map(|n| 0.125f64.powi(n) / (1.0 + 2.0 * n as f64))
            .sum::<f64>()
            * 0.5;
        assert!(m.value >= partial && m.value - partial < 1e-6);
        // 0.5 (1 + 1/24 + 1/320 + 1/3584 + ...)
        assert_relative_eq!(m.value, 0.522_550_457_380_48, epsilon = 1e-13);
    }

    #[test]
    fn d2_matches_log_form() {
        for p in [0.2, 0.5, 1.0] {
            for lambda in [0.1, 0.5, 0.9, 0.99] {
                let q = params(2, p, lambda);
                let m = lldp_mean_queue(&q, 1e-17).unwrap();
                let log_form = -(1.0 - p * lambda * lambda / q.b()).ln() / (p * lambda);
                assert_relative_eq!(m.value, log_form, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn integral_form_matches_series() {
        for (d, p, lambda) in [(2, 1.0, 0.99), (3, 0.5, 0.9), (5, 1.0, 0.999)] {
            let q = params(d, p, lambda);
            let series = lldp_mean_queue(&q, 1e-17).unwrap().value;
            let integral = lambda / q.b() * series_integral((d - 1) as f64, q.z(), q.gap() / q.b());
            assert_relative_eq!(series, integral, max_relative = 1e-11);
        }
    }

    #[test]
    fn slow_convergence_falls_back() {
        let lambda = 1.0 - 1e-8;
        let q = params(2, 1.0, lambda);
        let m = lldp_mean_queue(&q, 1e-16).unwrap();
        assert!(m.slow_convergence);
        let log_form = -(1.0 - lambda * lambda).ln() / lambda;
        assert_relative_eq!(m.value, log_form, max_relative = 1e-10);
    }

    #[test]
    fn bounds_bracket_the_series() {
        let (lo, hi) = lldp_bounds(&params(2, 1.0, 0.7));
        assert_relative_eq!(hi, 0.7 * (1.0 - (0.51f64).ln()), epsilon = 1e-14);
        assert_relative_eq!(
            lo,
            hi - 0.343 * std::f64::consts::PI.powi(2) / 6.0,
            epsilon = 1e-14
        );
        for (d, p, lambda) in [(2, 1.0, 0.99), (3, 0.5, 0.9), (4, 1.0, 0.3), (2, 0.5, 1e-4)] {
            let q = params(d, p, lambda);
            let (lo, hi) = lldp_bounds(&q);
            let m = lldp_mean_queue(&q, 1e-16).unwrap().value;
            assert!(lo <= m && m <= hi, "{d} {p} {lambda}: {lo} {m} {hi}");
        }
        let (lo, hi) = lldp_bounds(&params(3, 0.5, 1e-7));
        assert_relative_eq!(lo, 1e-7, max_relative = 1e-6);
        assert_relative_eq!(hi, 1e-7, max_relative = 1e-6);
    }

    #[test]
    fn upper_bound_heavy_traffic() {
        for (d, p) in [(2, 1.0), (3, 0.5), (4, 0.25)] {
            let scaled: Vec<f64> = (4..=10)
                .map(|k| {
                    let lambda = 1.0 - 10f64.powi(-k);
                    lldp_bounds(&params(d, p, lambda)).1 / -(-lambda).ln_1p()
                })
                .collect();
            // scaled = c0 + c1 / L; eliminate c1 with the last two points
            let l = |k: i32| (10f64.powi(k)).ln();
            let (s1, s2) = (scaled[5], scaled[6]);
            let c0 = (s2 * l(10) - s1 * l(9)) / (l(10) - l(9));
            assert_relative_eq!(c0, 1.0 / (p * (d - 1) as f64), max_relative = 1e-3);
        }
    }

    #[test]
    fn mm1_examples() {
        assert_eq!(mm1_ccdf(0.5, 0.0), 0.5);
        assert_relative_eq!(mm1_ccdf(0.5, 2.0), 0.183_939_720_585_721_2, epsilon = 1e-15);
        assert_relative_eq!(mm1_ccdf(0.9, 10.0), 0.331_091_497_054_298, epsilon = 1e-14);
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(LLdpParams::new(1, 1.0, 0.5).is_err());
        assert!(LLdpParams::new(2, 0.0, 0.5).is_err());
        assert!(LLdpParams::new(2, 1.0, 1.0).is_err());
    }
}
