//! Policy family and the maps that drive the cavity equation.
//!
//! Every workload policy handled here is described by a map `T(u)` giving the
//! arrival rate of work to servers holding at least `w` work when a fraction
//! `u` of servers holds at least `w`. The stationary workload ccdf solves
//! `F'(w) = T(F(w)) - F(w)`; the heavy-traffic behaviour is governed by the
//! minimal fixed point `u* > 1` of `T` and by the secant slope
//! `h(x) = (u* - T(u* - x)) / x`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest probe count accepted by any policy.
pub const MAX_D: u32 = 64;

/// Largest `b` tried by [`choose_b`].
pub const B_MAX: u32 = 64;

const MIX_SUM_TOL: f64 = 1e-12;
const SCAN_GROWTH: f64 = 1e-3;
const SCAN_CEILING: f64 = 1e6;
const BISECTION_CAP: usize = 400;

/// Selects whether the policy balances on workload (cavity ODE) or on queue
/// length (the `u_{k+1} = T(u_k)` recursion).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discipline {
    #[default]
    Workload,
    QueueLength,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PolicyKind {
    /// LL(d): join the least loaded of `d` sampled servers.
    LeastLoaded { d: u32 },
    /// LL(d, K): batches of `k` jobs go to the `k` least loaded of `d` servers.
    Batch { d: u32, k: u32 },
    /// With probability `p_i` apply LL(`d_i`). Sorted by ascending `d_i`.
    Mix { choices: Vec<(u32, f64)> },
    /// Red(d) with i.i.d. replicas. Its ccdf is a response-time ccdf.
    Redundancy { d: u32 },
    /// LL(d) with a dispatcher memory of `memory_size` idle-server tokens.
    Memory { d: u32, memory_size: u32 },
}

/// A validated policy instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PolicySpec {
    kind: PolicyKind,
    discipline: Discipline,
}

fn check_d(d: u32) -> Result<()> {
    if d == 0 || d > MAX_D {
        return Err(Error::InvalidPolicy(format!(
            "probe count d = {d} must be in 1..={MAX_D}"
        )));
    }
    Ok(())
}

impl PolicySpec {
    pub fn least_loaded(d: u32) -> Result<Self> {
        check_d(d)?;
        Ok(Self::from_kind(PolicyKind::LeastLoaded { d }))
    }

    pub fn batch(d: u32, k: u32) -> Result<Self> {
        check_d(d)?;
        if k == 0 || k >= d {
            return Err(Error::InvalidPolicy(format!(
                "batch size k = {k} must satisfy 1 <= k < d = {d}"
            )));
        }
        Ok(Self::from_kind(PolicyKind::Batch { d, k }))
    }

    /// Builds LL(d_1..d_n, p_1..p_n). Entries are sorted by ascending `d_i`.
    pub fn mix(choices: &[(u32, f64)]) -> Result<Self> {
        if choices.is_empty() {
            return Err(Error::InvalidPolicy(
                "mix needs at least one (d, p) pair".into(),
            ));
        }
        let mut total = 0.0;
        let mut mean_d = 0.0;
        for &(d, p) in choices {
            check_d(d)?;
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::InvalidPolicy(format!(
                    "mix probability {p} is not a probability"
                )));
            }
            total += p;
            mean_d += p * d as f64;
        }
        if (total - 1.0).abs() > MIX_SUM_TOL {
            return Err(Error::InvalidPolicy(format!(
                "mix probabilities sum to {total}, not 1"
            )));
        }
        if mean_d <= 1.0 {
            return Err(Error::InvalidPolicy(format!(
                "mix needs sum p_i d_i > 1, got {mean_d}"
            )));
        }
        let mut choices = choices.to_vec();
        choices.sort_by_key(|&(d, _)| d);
        Ok(Self::from_kind(PolicyKind::Mix { choices }))
    }

    pub fn redundancy(d: u32) -> Result<Self> {
        check_d(d)?;
        Ok(Self::from_kind(PolicyKind::Redundancy { d }))
    }

    pub fn memory(d: u32, memory_size: u32) -> Result<Self> {
        check_d(d)?;
        Ok(Self::from_kind(PolicyKind::Memory { d, memory_size }))
    }

    fn from_kind(kind: PolicyKind) -> Self {
        Self {
            kind,
            discipline: Discipline::Workload,
        }
    }

    pub fn with_discipline(mut self, discipline: Discipline) -> Self {
        self.discipline = discipline;
        self
    }

    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }

    pub fn discipline(&self) -> Discipline {
        self.discipline
    }

    /// Largest probe count used by the policy.
    pub fn max_d(&self) -> u32 {
        match &self.kind {
            PolicyKind::LeastLoaded { d }
            | PolicyKind::Batch { d, .. }
            | PolicyKind::Redundancy { d }
            | PolicyKind::Memory { d, .. } => *d,
            PolicyKind::Mix { choices } => choices.iter().map(|c| c.0).max().unwrap_or(1),
        }
    }

    /// Mean number of probes per job for mixes, `sum p_i d_i`.
    pub fn mean_d(&self) -> Option<f64> {
        match &self.kind {
            PolicyKind::Mix { choices } => Some(choices.iter().map(|&(d, p)| p * d as f64).sum()),
            _ => None,
        }
    }

    /// Heavy-traffic slope `A` of the secant function when its
    /// closed form is known.
    pub fn heavy_traffic_a(&self) -> Option<f64> {
        match &self.kind {
            PolicyKind::LeastLoaded { d }
            | PolicyKind::Redundancy { d }
            | PolicyKind::Memory { d, .. } => Some(*d as f64),
            PolicyKind::Batch { d, k } => Some(*d as f64 / *k as f64),
            PolicyKind::Mix { .. } => self.mean_d(),
        }
    }

    /// Heavy-traffic exponent `B`.
    pub fn heavy_traffic_b(&self) -> f64 {
        match &self.kind {
            PolicyKind::Memory { memory_size, .. } => 1.0 / (*memory_size as f64 + 1.0),
            _ => 1.0,
        }
    }

    /// Default boundary value `F(0)`: `lambda` for workload ccdfs, `1` for
    /// the Red(d) response-time ccdf.
    pub fn default_boundary(&self, lambda: f64) -> f64 {
        match self.kind {
            PolicyKind::Redundancy { .. } => 1.0,
            _ => lambda,
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PolicyKind::LeastLoaded { d } => write!(f, "ll:d={d}")?,
            PolicyKind::Batch { d, k } => write!(f, "lldk:d={d},k={k}")?,
            PolicyKind::Mix { choices } => {
                let ds: Vec<String> = choices.iter().map(|c| c.0.to_string()).collect();
                let ps: Vec<String> = choices.iter().map(|c| c.1.to_string()).collect();
                write!(f, "mix:d={};p={}", ds.join(","), ps.join(","))?
            }
            PolicyKind::Redundancy { d } => write!(f, "red:d={d}")?,
            PolicyKind::Memory { d, memory_size } => write!(f, "mem:d={d},m={memory_size}")?,
        }
        if self.discipline == Discipline::QueueLength {
            f.write_str(":sq")?;
        }
        Ok(())
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| Error::InvalidPolicy(format!("cannot parse `{s}` in `{key}`")))
        })
        .collect()
}

impl FromStr for PolicySpec {
    type Err = Error;

    /// Parses the policy mini-language: `ll:d=2`, `lldk:d=4,k=2`,
    /// `mix:d=1,2;p=0.5,0.5`, `red:d=2`, `mem:d=2,m=1`, each optionally
    /// followed by `:sq`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (body, discipline) = match s.strip_suffix(":sq") {
            Some(body) => (body, Discipline::QueueLength),
            None => (s, Discipline::Workload),
        };
        let (name, args) = body
            .split_once(':')
            .ok_or_else(|| Error::InvalidPolicy(format!("expected `<kind>:<args>`, got `{s}`")))?;

        let mut d: Option<Vec<u32>> = None;
        let mut k: Option<u32> = None;
        let mut m: Option<u32> = None;
        let mut p: Option<Vec<f64>> = None;
        // mixes separate keys with `;`, the others with `,` between scalar keys
        let fields: Vec<&str> = if name == "mix" {
            args.split(';').collect()
        } else {
            args.split(',').collect()
        };
        for field in fields {
            let (key, value) = field.split_once('=').ok_or_else(|| {
                Error::InvalidPolicy(format!("expected key=value, got `{field}`"))
            })?;
            match key.trim() {
                "d" => d = Some(parse_list(key, value)?),
                "k" => k = Some(parse_list::<u32>(key, value)?[0]),
                "m" => m = Some(parse_list::<u32>(key, value)?[0]),
                "p" => p = Some(parse_list(key, value)?),
                other => {
                    return Err(Error::InvalidPolicy(format!(
                        "unknown key `{other}` in `{s}`"
                    )))
                }
            }
        }
        let single_d = |d: &Option<Vec<u32>>| -> Result<u32> {
            match d.as_deref() {
                Some([d]) => Ok(*d),
                _ => Err(Error::InvalidPolicy(format!("`{s}` needs exactly one d"))),
            }
        };
        let reject = |present: bool, key: &str| -> Result<()> {
            if present {
                Err(Error::InvalidPolicy(format!(
                    "key `{key}` is not valid for `{name}`"
                )))
            } else {
                Ok(())
            }
        };
        let spec = match name {
            "ll" => {
                reject(k.is_some(), "k")?;
                reject(m.is_some(), "m")?;
                reject(p.is_some(), "p")?;
                PolicySpec::least_loaded(single_d(&d)?)?
            }
            "lldk" => {
                reject(m.is_some(), "m")?;
                reject(p.is_some(), "p")?;
                let k = k.ok_or_else(|| Error::InvalidPolicy(format!("`{s}` needs k")))?;
                PolicySpec::batch(single_d(&d)?, k)?
            }
            "mix" => {
                reject(k.is_some(), "k")?;
                reject(m.is_some(), "m")?;
                let d = d.ok_or_else(|| Error::InvalidPolicy(format!("`{s}` needs d")))?;
                let p = p.ok_or_else(|| Error::InvalidPolicy(format!("`{s}` needs p")))?;
                if d.len() != p.len() {
                    return Err(Error::InvalidPolicy(format!(
                        "`{s}` has {} d values but {} p values",
                        d.len(),
                        p.len()
                    )));
                }
                let pairs: Vec<(u32, f64)> = d.into_iter().zip(p).collect();
                PolicySpec::mix(&pairs)?
            }
            "red" => {
                reject(k.is_some(), "k")?;
                reject(m.is_some(), "m")?;
                reject(p.is_some(), "p")?;
                PolicySpec::redundancy(single_d(&d)?)?
            }
            "mem" => {
                reject(k.is_some(), "k")?;
                reject(p.is_some(), "p")?;
                let m = m.ok_or_else(|| Error::InvalidPolicy(format!("`{s}` needs m")))?;
                PolicySpec::memory(single_d(&d)?, m)?
            }
            other => {
                return Err(Error::InvalidPolicy(format!(
                    "unknown policy kind `{other}`"
                )))
            }
        };
        Ok(spec.with_discipline(discipline))
    }
}

impl TryFrom<String> for PolicySpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PolicySpec> for String {
    fn from(p: PolicySpec) -> String {
        p.to_string()
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLambda(lambda))
    }
}

/// `C(n, j)` by the multiplicative recurrence, in floating point.
pub fn binomial(n: u32, j: u32) -> f64 {
    if j > n {
        return 0.0;
    }
    let j = j.min(n - j);
    (0..j).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Probability that the dispatcher uses LL(d) rather than a remembered idle
/// server, for servers that notify the dispatcher when they idle.
pub fn memory_pi0(lambda: f64, d: u32, memory_size: u32) -> f64 {
    let ld = lambda.powi(d as i32);
    // 1 - (1 - ld)^(1/(M+1)) without cancellation
    let idle_all = (-ld).ln_1p() / (memory_size as f64 + 1.0);
    -idle_all.exp_m1() / ld
}

#[derive(Clone, Debug)]
enum Form {
    /// `coef * u^d`
    Power { coef: f64, d: i32 },
    /// `(lambda / K) sum_{j<K} (K - j) C(d, j) u^(d-j) (1-u)^j`
    Batch {
        lambda_over_k: f64,
        d: i32,
        k: i32,
        binom: Vec<f64>,
    },
    /// `sum_i coef_i u^(d_i)`
    Polynomial { terms: Vec<(f64, i32)> },
}

/// The map `T` of one policy at one arrival rate, validated once.
#[derive(Clone, Debug)]
pub struct TMap {
    lambda: f64,
    form: Form,
    ceiling_coef: f64,
    max_d: u32,
}

impl TMap {
    pub fn new(policy: &PolicySpec, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        let (form, ceiling_coef) = match policy.kind() {
            PolicyKind::LeastLoaded { d } | PolicyKind::Redundancy { d } => (
                Form::Power {
                    coef: lambda,
                    d: *d as i32,
                },
                lambda,
            ),
            PolicyKind::Memory { d, memory_size } => {
                let coef = lambda * memory_pi0(lambda, *d, *memory_size);
                (Form::Power { coef, d: *d as i32 }, coef)
            }
            PolicyKind::Batch { d, k } => {
                let binom = (0..*k).map(|j| binomial(*d, j)).collect();
                (
                    Form::Batch {
                        lambda_over_k: lambda / *k as f64,
                        d: *d as i32,
                        k: *k as i32,
                        binom,
                    },
                    lambda,
                )
            }
            PolicyKind::Mix { choices } => {
                let terms: Vec<(f64, i32)> = choices
                    .iter()
                    .map(|&(d, p)| (lambda * p, d as i32))
                    .collect();
                let top = choices.iter().map(|c| c.0).max().unwrap_or(1);
                let top_coef: f64 = choices
                    .iter()
                    .filter(|c| c.0 == top)
                    .map(|c| lambda * c.1)
                    .sum();
                (Form::Polynomial { terms }, top_coef)
            }
        };
        Ok(Self {
            lambda,
            form,
            ceiling_coef,
            max_d: policy.max_d(),
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn value(&self, u: f64) -> f64 {
        match &self.form {
            Form::Power { coef, d } => coef * u.powi(*d),
            Form::Batch {
                lambda_over_k,
                d,
                k,
                binom,
            } => {
                let v = 1.0 - u;
                let sum: f64 = (0..*k)
                    .map(|j| (k - j) as f64 * binom[j as usize] * u.powi(d - j) * v.powi(j))
                    .sum();
                lambda_over_k * sum
            }
            Form::Polynomial { terms } => terms.iter().map(|&(c, d)| c * u.powi(d)).sum(),
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match &self.form {
            Form::Power { coef, d } => coef * *d as f64 * u.powi(d - 1),
            Form::Batch {
                lambda_over_k,
                d,
                k,
                binom,
            } => {
                let v = 1.0 - u;
                let sum: f64 = (0..*k)
                    .map(|j| (d - j) as f64 * binom[j as usize] * u.powi(d - j - 1) * v.powi(j))
                    .sum();
                lambda_over_k * sum
            }
            Form::Polynomial { terms } => terms
                .iter()
                .map(|&(c, d)| c * d as f64 * u.powi(d - 1))
                .sum(),
        }
    }

    /// Upper end of the fixed-point scan.
    fn scan_ceiling(&self) -> f64 {
        if self.max_d < 2 {
            return 1.0;
        }
        (10.0 * self.ceiling_coef.powf(1.0 / (1.0 - self.max_d as f64))).min(SCAN_CEILING)
    }
}

fn check_u(u: f64) -> Result<()> {
    if u >= 0.0 && u.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "u = {u} must be a finite nonnegative number"
        )))
    }
}

/// `T(u)` for the given policy and arrival rate.
pub fn t_map(policy: &PolicySpec, lambda: f64, u: f64) -> Result<f64> {
    check_u(u)?;
    Ok(TMap::new(policy, lambda)?.value(u))
}

/// Analytic `dT/du`.
pub fn t_map_derivative(policy: &PolicySpec, lambda: f64, u: f64) -> Result<f64> {
    check_u(u)?;
    Ok(TMap::new(policy, lambda)?.derivative(u))
}

/// Minimal root of `T(u) = u` on `(1, u_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub u_lambda: f64,
    pub residual: f64,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub iterations: usize,
}

impl TMap {
    /// Sign scan on `(1, u_max]` with geometric steps in `u - 1`, followed by
    /// bisection down to adjacent floats. The scan starts below any root that
    /// a double can resolve, so the first sign change brackets the minimal
    /// root.
    pub fn fixed_point(&self) -> Result<FixedPointResult> {
        let g = |u: f64| self.value(u) - u;
        let u_max = self.scan_ceiling();
        let no_root = Error::NoRoot {
            lambda: self.lambda,
            u_max,
        };
        if u_max <= 1.0 {
            return Err(no_root);
        }
        let mut lo = 1.0;
        let mut x = (1e-3 * (1.0 - self.lambda)).min(1e-14);
        let hi = loop {
            let u = (1.0 + x).min(u_max);
            if g(u) >= 0.0 {
                break u;
            }
            if u >= u_max {
                return Err(no_root);
            }
            lo = u;
            x *= 1.0 + SCAN_GROWTH;
        };

        let (mut a, mut b) = (lo, hi);
        let mut iterations = 0;
        loop {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            iterations += 1;
            if iterations > BISECTION_CAP {
                return Err(Error::NonConvergence {
                    what: "fixed-point bisection",
                    iterations,
                });
            }
            if g(mid) >= 0.0 {
                b = mid;
            } else {
                a = mid;
            }
        }
        let (ga, gb) = (g(a).abs(), g(b).abs());
        let u_lambda = if ga < gb { a } else { b };
        Ok(FixedPointResult {
            u_lambda,
            residual: ga.min(gb),
            bracket_lo: a,
            bracket_hi: b,
            iterations,
        })
    }
}

pub fn fixed_point_u(policy: &PolicySpec, lambda: f64) -> Result<FixedPointResult> {
    TMap::new(policy, lambda)?.fixed_point()
}

/// `T` together with its minimal fixed point; evaluates `h` and `zeta`.
#[derive(Clone, Debug)]
pub struct Secant {
    tmap: TMap,
    fixed: FixedPointResult,
    batch: Option<(u32, u32)>,
}

impl Secant {
    pub fn new(policy: &PolicySpec, lambda: f64) -> Result<Self> {
        let tmap = TMap::new(policy, lambda)?;
        let fixed = tmap.fixed_point()?;
        let batch = match policy.kind() {
            PolicyKind::Batch { d, k } => Some((*d, *k)),
            PolicyKind::LeastLoaded { d } => Some((*d, 1)),
            _ => None,
        };
        Ok(Self { tmap, fixed, batch })
    }

    pub fn u_lambda(&self) -> f64 {
        self.fixed.u_lambda
    }

    pub fn fixed_point(&self) -> &FixedPointResult {
        &self.fixed
    }

    pub fn tmap(&self) -> &TMap {
        &self.tmap
    }

    /// `h(x) = (u* - T(u* - x)) / x`.
    pub fn h(&self, x: f64) -> f64 {
        let u = self.fixed.u_lambda;
        (u - self.tmap.value(u - x)) / x
    }

    /// `zeta(x) = K x^2 h'(x)` in the closed form for LL(d, K); LL(d) is
    /// treated as K = 1.
    pub fn zeta(&self, x: f64) -> Option<f64> {
        let (d, k) = self.batch?;
        let lambda = self.tmap.lambda;
        let u = self.fixed.u_lambda;
        let (di, ki) = (d as i32, k as i32);
        let (a, c) = (u - x, 1.0 - u + x);
        let mut level = 0.0;
        let mut slope = 0.0;
        for j in 0..ki {
            let bin = binomial(d, j as u32);
            level += bin * a.powi(di - j) * c.powi(j);
            slope += (di - j) as f64 * bin * a.powi(di - j - 1) * c.powi(j);
        }
        Some(-(k as f64) * u - lambda * (d - k) as f64 * level + lambda * u * slope)
    }
}

/// Secant slope `h(x)` at the minimal fixed point.
pub fn h(policy: &PolicySpec, lambda: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::InvalidArgument(format!("h needs x > 0, got {x}")));
    }
    Ok(Secant::new(policy, lambda)?.h(x))
}

/// `zeta(x) = K x^2 h'(x)` for LL(d, K).
pub fn zeta(policy: &PolicySpec, lambda: f64, x: f64) -> Result<f64> {
    if !matches!(
        policy.kind(),
        PolicyKind::Batch { .. } | PolicyKind::LeastLoaded { .. }
    ) {
        return Err(Error::UnsupportedPolicy(policy.to_string()));
    }
    let secant = Secant::new(policy, lambda)?;
    Ok(secant.zeta(x).expect("batch policies carry (d, K)"))
}

/// Number of interior points used when `h` monotonicity is checked directly.
pub const H_GRID_POINTS: usize = 100;

/// Checks that `h` is nonincreasing on a uniform grid of
/// `[u* - lambda^b, u*)`. Returns the first violating `x`, if any.
pub fn h_monotonicity_violation(secant: &Secant, b: u32) -> Option<f64> {
    let u = secant.u_lambda();
    let lambda = secant.tmap.lambda;
    let start = u - lambda.powi(b as i32);
    let width = u - start;
    let mut prev = secant.h(start.max(f64::MIN_POSITIVE));
    for i in 1..H_GRID_POINTS {
        let x = start + width * i as f64 / H_GRID_POINTS as f64;
        let cur = secant.h(x);
        if cur > prev + 1e-10 * prev.abs().max(1.0) {
            return Some(x);
        }
        prev = cur;
    }
    None
}

/// Smallest `b` such that `h` is decreasing on `[u* - lambda^b, u*)` for every
/// `lambda` in the grid. LL(d) and LL(d, K) use the sign of `zeta` at
/// `u* - lambda^b`; other policies fall back to the direct grid check.
pub fn choose_b(policy: &PolicySpec, lambda_grid: &[f64]) -> Result<u32> {
    let secants: Vec<Secant> = lambda_grid
        .iter()
        .map(|&lambda| Secant::new(policy, lambda))
        .collect::<Result<_>>()?;
    let mut last_failure = lambda_grid.first().copied().unwrap_or(f64::NAN);
    for b in 0..=B_MAX {
        let failing = secants.iter().find(|s| {
            let lambda = s.tmap.lambda;
            match s.zeta(s.u_lambda() - lambda.powi(b as i32)) {
                Some(z) => z > 0.0,
                None => h_monotonicity_violation(s, b).is_some(),
            }
        });
        match failing {
            None => return Ok(b),
            Some(s) => last_failure = s.tmap.lambda,
        }
    }
    Err(Error::BNotFound {
        b_max: B_MAX,
        lambda: last_failure,
    })
}

/// `1 - p_idle`: probability an arrival is routed to a busy server.
pub fn busy_assignment_probability(policy: &PolicySpec, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    match policy.kind() {
        PolicyKind::LeastLoaded { d } => Ok(lambda.powi(*d as i32)),
        PolicyKind::Batch { d, k } => {
            let (di, ki) = (*d as i32, *k as i32);
            Ok((0..ki)
                .map(|j| {
                    (ki - j) as f64 / ki as f64
                        * binomial(*d, j as u32)
                        * (1.0 - lambda).powi(j)
                        * lambda.powi(di - j)
                })
                .sum())
        }
        PolicyKind::Mix { choices } => Ok(choices
            .iter()
            .map(|&(d, p)| p * lambda.powi(d as i32))
            .sum()),
        PolicyKind::Redundancy { .. } | PolicyKind::Memory { .. } => {
            Err(Error::UnsupportedPolicy(policy.to_string()))
        }
    }
}

/// Probability that an arriving job is assigned to an idle server.
pub fn p_idle(policy: &PolicySpec, lambda: f64) -> Result<f64> {
    Ok(1.0 - busy_assignment_probability(policy, lambda)?)
}

/// `ln(p_idle)` evaluated without cancellation at light load.
pub fn log_p_idle(policy: &PolicySpec, lambda: f64) -> Result<f64> {
    Ok((-busy_assignment_probability(policy, lambda)?).ln_1p())
}
