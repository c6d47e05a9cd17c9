//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when a criterion fails that is not listed in `KNOWN_RED`.

use std::process::ExitCode;
use std::time::Instant;

use cavity_lb::assumptions::{
    check_T_dominated, check_assumption, check_t_over_u_increasing, floor_ceil_pair,
    majorization_certificate, majorization_ordering, u_derivative_extrapolation, u_prime_limit,
    CheckOptions,
};
use cavity_lb::closed_form::{lldp_bounds, lldp_mean_queue, mm1_ccdf, LLdpParams};
use cavity_lb::limits::{
    heavy_lambda_seq, heavy_traffic_extrapolation, low_load_extrapolation, numeric_A, numeric_B,
    scaled_curve, Scaling, DEFAULT_B_GRID,
};
use cavity_lb::ode::{mean_waiting, solve_ccdf, sq_mean_waiting, SolverOptions, SQ_TOL};
use cavity_lb::policy::{choose_b, PolicySpec};
use cavity_lb::sim::{simulate, SimConfig};
use cavity_lb::Result;

/// Criteria whose target cannot be met by a correct implementation; they
/// still print FAIL but do not fail the run. See the notes in the README.
const KNOWN_RED: &[u32] = &[11];

fn ll(d: u32) -> PolicySpec {
    PolicySpec::least_loaded(d).unwrap()
}

fn lldk(d: u32, k: u32) -> PolicySpec {
    PolicySpec::batch(d, k).unwrap()
}

fn mix(pairs: &[(u32, f64)]) -> PolicySpec {
    PolicySpec::mix(pairs).unwrap()
}

/// LL(d) with probability p, a single random server otherwise.
fn lldp(d: u32, p: f64) -> PolicySpec {
    if p == 1.0 {
        ll(d)
    } else {
        mix(&[(1, 1.0 - p), (d, p)])
    }
}

fn batch_set() -> Vec<(u32, u32)> {
    vec![(3, 2), (4, 2), (5, 3)]
}

fn mixes() -> Vec<(Vec<(u32, f64)>, f64)> {
    // (choices, sum p_i d_i)
    vec![
        (vec![(1, 0.5), (3, 0.5)], 2.0),
        (vec![(2, 0.6), (4, 0.4)], 2.8),
    ]
}

fn rel(observed: f64, expected: f64) -> f64 {
    (observed - expected).abs() / expected.abs()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn tenths() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

fn criterion_1() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for d in [2, 3, 4] {
        for p in [0.5, 1.0] {
            for lambda in tenths() {
                let series =
                    lldp_mean_queue(&LLdpParams::new(d, p, lambda)?, 1e-16)?.value / lambda - 1.0;
                let ode = mean_waiting(&lldp(d, p), lambda)?;
                worst = worst.max((ode - series).abs());
            }
        }
    }
    outcome(
        worst <= 1e-6,
        format!("max |ODE - series| = {worst:.2e} (tol 1e-6)"),
    )
}

fn criterion_2() -> Result<Outcome> {
    let (mut wait_err, mut ccdf_err): (f64, f64) = (0.0, 0.0);
    for lambda in [0.2, 0.5, 0.8] {
        wait_err = wait_err.max((mean_waiting(&ll(1), lambda)? - lambda / (1.0 - lambda)).abs());
        let curve = solve_ccdf(&ll(1), lambda, lambda, &SolverOptions::default())?;
        for i in 0..20 {
            let w = i as f64 * 0.5;
            ccdf_err = ccdf_err.max((curve.ccdf(w) - mm1_ccdf(lambda, w)).abs());
        }
    }
    outcome(
        wait_err <= 1e-8 && ccdf_err <= 1e-8,
        format!("max E[W] error {wait_err:.2e}, max ccdf error {ccdf_err:.2e} (tol 1e-8)"),
    )
}

fn heavy_cases() -> Vec<(PolicySpec, f64)> {
    let mut cases: Vec<(PolicySpec, f64)> = [2, 3, 4]
        .iter()
        .map(|&d| (ll(d), 1.0 / (d as f64 - 1.0)))
        .collect();
    cases.extend(
        batch_set()
            .into_iter()
            .map(|(d, k)| (lldk(d, k), k as f64 / (d - k) as f64)),
    );
    cases.extend(mixes().into_iter().map(|(m, a)| (mix(&m), 1.0 / (a - 1.0))));
    cases
}

fn criterion_3() -> Result<Outcome> {
    let seq = heavy_lambda_seq(2..=8);
    let mut worst = (0.0, String::new());
    for (policy, expected) in heavy_cases() {
        let fit = heavy_traffic_extrapolation(&policy, &seq)?;
        let gap = rel(fit.value, expected);
        if gap >= worst.0 {
            worst = (gap, format!("{policy}: {:.5} vs {expected:.5}", fit.value));
        }
    }
    outcome(
        worst.0 <= 0.02,
        format!(
            "worst relative gap {:.3}% at {} (tol 2%)",
            100.0 * worst.0,
            worst.1
        ),
    )
}

fn criterion_4() -> Result<Outcome> {
    let seq = [1e-2, 1e-3, 1e-4];
    let mut cases: Vec<(PolicySpec, f64)> = (2..=5).map(|d| (ll(d), 1.0 / d as f64)).collect();
    cases.extend(
        batch_set()
            .into_iter()
            .map(|(d, k)| (lldk(d, k), 1.0 / (d - k + 1) as f64)),
    );
    cases.extend(
        mixes()
            .into_iter()
            .map(|(m, _)| (mix(&m), 1.0 / m[0].0 as f64)),
    );
    let mut worst = (0.0, String::new());
    for (policy, expected) in cases {
        let fit = low_load_extrapolation(&policy, &seq)?;
        let gap = rel(fit.value, expected);
        if gap >= worst.0 {
            worst = (gap, format!("{policy}: {:.5} vs {expected:.5}", fit.value));
        }
    }
    outcome(
        worst.0 <= 0.05,
        format!(
            "worst relative gap {:.3}% at {} (tol 5%)",
            100.0 * worst.0,
            worst.1
        ),
    )
}

fn criterion_5() -> Result<Outcome> {
    let seq = heavy_lambda_seq(2..=10);
    let mut cases: Vec<(PolicySpec, f64)> = (2..=5).map(|d| (ll(d), d as f64)).collect();
    cases.extend(
        batch_set()
            .into_iter()
            .map(|(d, k)| (lldk(d, k), d as f64 / k as f64)),
    );
    cases.extend(mixes().into_iter().map(|(m, a)| (mix(&m), a)));
    let mut worst = (0.0, String::new());
    for (policy, a_expected) in cases {
        let b = choose_b(&policy, &DEFAULT_B_GRID)?;
        let a = numeric_A(&policy, b, &seq)?.value;
        let bb = numeric_B(&policy, b, &seq)?.value;
        for (what, got, want) in [("A", a, a_expected), ("B", bb, 1.0)] {
            let gap = rel(got, want);
            if gap >= worst.0 {
                worst = (gap, format!("{what} of {policy}: {got:.5} vs {want:.5}"));
            }
        }
    }
    outcome(
        worst.0 <= 0.01,
        format!(
            "worst relative gap {:.4}% at {} (tol 1%)",
            100.0 * worst.0,
            worst.1
        ),
    )
}

fn assumption_policies() -> Vec<PolicySpec> {
    let mut v: Vec<PolicySpec> = (2..=5).map(ll).collect();
    v.extend(
        [(3, 2), (4, 2), (4, 3), (5, 3)]
            .iter()
            .map(|&(d, k)| lldk(d, k)),
    );
    v.extend(mixes().into_iter().map(|(m, _)| mix(&m)));
    v
}

fn criterion_6() -> Result<Outcome> {
    let opts = CheckOptions::default();
    let mut failures = Vec::new();
    let mut checks = 0;
    // 100 rates times 100 values of u gives 10^4 points per condition.
    let t_grid: Vec<f64> = (1..=100).map(|i| i as f64 / 100.5).collect();
    for policy in assumption_policies() {
        for id in 1..=7 {
            let report = check_assumption(&policy, id, &DEFAULT_B_GRID, &opts)?;
            checks += 1;
            if !report.passed() {
                failures.push(format!("{policy} A{id}"));
            }
        }
        for report in [
            check_T_dominated(&policy, &t_grid, 100)?,
            check_t_over_u_increasing(&policy, &t_grid, 100)?,
        ] {
            checks += 1;
            // T <= lambda u is stated for LL(d, K); mixes report SKIPPED.
            if !report.passed()
                && !(report.assumption_id == "T_dominated" && policy.to_string().starts_with("mix"))
            {
                failures.push(format!("{policy} {}", report.assumption_id));
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!("{checks} checks, failures: {failures:?}"),
    )
}

fn criterion_7() -> Result<Outcome> {
    let mut cases: Vec<PolicySpec> = batch_set().into_iter().map(|(d, k)| lldk(d, k)).collect();
    cases.extend(mixes().into_iter().map(|(m, _)| mix(&m)));
    let mut worst = (0.0, String::new());
    for policy in cases {
        let expected = u_prime_limit(&policy)?;
        let observed = u_derivative_extrapolation(&policy, 1, 3..=6)?;
        let gap = rel(observed, expected);
        if gap >= worst.0 {
            worst = (gap, format!("{policy}: {observed:.5} vs {expected:.5}"));
        }
    }
    outcome(
        worst.0 <= 0.01,
        format!(
            "worst relative gap {:.4}% at {} (tol 1%)",
            100.0 * worst.0,
            worst.1
        ),
    )
}

fn criterion_8() -> Result<Outcome> {
    let mut violations = 0;
    let mut points = 0;
    for d in [2, 3, 4] {
        for p in [0.5, 1.0] {
            for lambda in tenths() {
                let params = LLdpParams::new(d, p, lambda)?;
                let series = lldp_mean_queue(&params, 1e-16)?.value;
                let (lower, upper) = lldp_bounds(&params);
                points += 1;
                if !(lower <= series && series <= upper) {
                    violations += 1;
                }
            }
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations over {points} points"),
    )
}

fn criterion_9() -> Result<Outcome> {
    let instances: [(&[f64], &[u32]); 3] = [
        (&[0.5, 0.5], &[1, 4]),
        (&[0.2, 0.3, 0.5], &[1, 2, 5]),
        (&[0.25, 0.25, 0.5], &[2, 3, 6]),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (p, a) in instances {
        let (q, b) = floor_ceil_pair(p, a)?;
        let cert = majorization_certificate(p, a, &q, &b)?;
        let rows = majorization_ordering(p, a, &[0.3, 0.6, 0.9], 1e-8)?;
        let ordered = rows.iter().all(|r| r.holds);
        ok &= cert.holds && ordered;
        notes.push(format!(
            "a={a:?}: certificate {} ordering {}",
            cert.holds, ordered
        ));
    }
    outcome(ok, notes.join("; "))
}

fn criterion_10() -> Result<Outcome> {
    let mut worst = (0.0, String::new());
    let mut ok = true;
    for policy in [ll(2), lldk(3, 2)] {
        for lambda in [0.5, 0.8] {
            let mut config = SimConfig::new(policy.clone(), lambda, 2000, 2000.0);
            config.warmup = 200.0;
            config.replications = 10;
            config.seed = 20_251_015;
            let report = simulate(&config)?;
            let mean_field = mean_waiting(&policy, lambda)?;
            let allowed = (3.0 * report.stderr).max(0.02 * mean_field);
            let gap = (report.mean_wait - mean_field).abs();
            ok &= gap <= allowed;
            if gap / allowed >= worst.0 {
                worst = (
                    gap / allowed,
                    format!(
                        "{policy} at {lambda}: sim {:.5} +- {:.5} vs {mean_field:.5}",
                        report.mean_wait, report.stderr
                    ),
                );
            }
        }
    }
    outcome(
        ok,
        format!("worst gap/allowance {:.3} at {}", worst.0, worst.1),
    )
}

fn criterion_11() -> Result<Outcome> {
    let sq2 = ll(2).with_discipline(cavity_lb::policy::Discipline::QueueLength);
    let value = sq_mean_waiting(&sq2, 0.5, SQ_TOL)?;
    // u_k = lambda^(2^k - 1), so E[W] = sum_{k>=2} lambda^(2^k - 2)
    let tower: f64 = (2..12).map(|k| 0.5f64.powi((1 << k) - 2)).sum();
    let target = 0.26587;
    let constant_ok = (value - target).abs() <= 1e-5;
    let tower_ok = (value - tower).abs() <= 1e-12;

    let fit = heavy_traffic_extrapolation(&sq2, &heavy_lambda_seq(2..=8))?;
    let limit_ok = rel(fit.value, 1.0 / 2f64.ln()) <= 0.02;

    let mut a_values: Vec<f64> = (2..=5).map(|d| d as f64).collect();
    a_values.extend(
        [(3, 2), (4, 2), (4, 3), (5, 3)]
            .iter()
            .map(|&(d, k)| d as f64 / k as f64),
    );
    let ordering_ok = a_values.iter().all(|&a| 1.0 / (a - 1.0) <= 1.0 / a.ln());

    outcome(
        constant_ok && tower_ok && limit_ok && ordering_ok,
        format!(
            "SQ(2) E[W] at 0.5 = {value:.8}; target 0.26587 +- 1e-5: {constant_ok}; \
             tower oracle {tower:.8}: {tower_ok}; limit {:.5} vs {:.5}: {limit_ok}; \
             1/(A-1) <= 1/log A: {ordering_ok}",
            fit.value,
            1.0 / 2f64.ln()
        ),
    )
}

fn criterion_12() -> Result<Outcome> {
    let mut worst = (0.0, String::new());
    for d in [3, 4, 5] {
        let policy = lldk(d, 2);
        let rows = scaled_curve(&policy, &tenths(), Scaling::LogPLambda);
        let values = rows
            .iter()
            .map(|r| {
                r.scaled
                    .ok_or_else(|| cavity_lb::Error::Config(r.error.clone().unwrap()))
            })
            .collect::<Result<Vec<f64>>>()?;
        let max = values.iter().cloned().fold(f64::MIN, f64::max);
        let min = values.iter().cloned().fold(f64::MAX, f64::min);
        if max / min >= worst.0 {
            worst = (max / min, policy.to_string());
        }
    }
    outcome(
        worst.0 <= 2.0,
        format!(
            "largest max/min ratio {:.4} at {} (limit 2)",
            worst.0, worst.1
        ),
    )
}

type Criterion = fn() -> Result<Outcome>;

fn main() -> ExitCode {
    let criteria: [(u32, Criterion); 12] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
        (12, criterion_12),
    ];
    let mut unexpected = 0;
    for (n, run) in criteria {
        let start = Instant::now();
        let result = run().unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!("error {}: {e}", e.kind()),
        });
        let elapsed = start.elapsed().as_secs_f64();
        let tag = if result.pass { "PASS" } else { "FAIL" };
        let known = !result.pass && KNOWN_RED.contains(&n);
        let suffix = if known { " [known red]" } else { "" };
        println!(
            "{tag} criterion {n}: {} ({elapsed:.1}s){suffix}",
            result.detail
        );
        if !result.pass && !known {
            unexpected += 1;
        }
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} criteria failed");
        ExitCode::FAILURE
    }
}
