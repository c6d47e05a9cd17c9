//! Command-line front end. Flags and JSON config files both resolve to a
//! [`RunConfig`], which [`execute`] turns into CSV or JSON text.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::assumptions::{
    check_assumption, floor_ceil_pair, majorization_certificate, policy_from_pairs, verify_policy,
    CheckOptions,
};
use crate::error::{Error, Result};
use crate::fmt::{round12, sig12};
use crate::limits::{curve_csv, limit_report, scaled_curve_with, Scaling, DEFAULT_B_GRID};
use crate::ode::{mean_waiting_with, solve_ccdf, sq_mean_waiting, SolverOptions, SQ_TOL};
use crate::policy::{fixed_point_u, p_idle, Discipline, PolicyKind, PolicySpec};
use crate::sim::{simulate, SimConfig};

/// Environment variable capping the rayon worker count.
pub const THREADS_ENV: &str = "CAVITY_LB_THREADS";

/// Grid used by `curve` and `compare` when none is given.
pub const DEFAULT_GRID: &str = "0.05:0.95:0.05";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Analyze,
    Curve,
    Limits,
    Verify,
    Simulate,
    Compare,
}

/// Either a `start:stop:step` range or an explicit list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaGrid {
    Range(String),
    Values(Vec<f64>),
}

impl LambdaGrid {
    pub fn resolve(&self) -> Result<Vec<f64>> {
        let values = match self {
            LambdaGrid::Range(s) => parse_grid(s)?,
            LambdaGrid::Values(v) => v.clone(),
        };
        if values.is_empty() {
            return Err(Error::Config("lambda grid is empty".into()));
        }
        Ok(values)
    }
}

/// Parses `a:b:step` (inclusive of `b` up to rounding) or `x,y,z`.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let num = |t: &str| -> Result<f64> {
        t.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad number `{t}` in grid `{s}`")))
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if !(step > 0.0) || !(a <= b) || !a.is_finite() || !b.is_finite() {
                return Err(Error::Config(format!(
                    "grid `{s}` needs start <= stop and step > 0"
                )));
            }
            let n = ((b - a) / step + 1e-9).floor() as usize + 1;
            if n > 1_000_000 {
                return Err(Error::Config(format!("grid `{s}` has {n} points")));
            }
            Ok((0..n).map(|i| round12(a + i as f64 * step)).collect())
        }
        [list] => list.split(',').map(num).collect(),
        _ => Err(Error::Config(format!(
            "grid `{s}` is neither a:b:step nor a comma list"
        ))),
    }
}

/// Simulation settings besides the policy and arrival rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub n_servers: usize,
    pub horizon: f64,
    /// Defaults to a tenth of the horizon.
    #[serde(default)]
    pub warmup: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub replications: Option<usize>,
    #[serde(default)]
    pub ccdf_points: Option<Vec<f64>>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            n_servers: 1000,
            horizon: 1000.0,
            warmup: None,
            seed: 0,
            replications: None,
            ccdf_points: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub policy: Option<PolicySpec>,
    /// Extra policies, appended after `policy`.
    #[serde(default)]
    pub policies: Vec<PolicySpec>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub lambda_grid: Option<LambdaGrid>,
    #[serde(default)]
    pub scaling: Option<Scaling>,
    #[serde(default)]
    pub solver: SolverOptions,
    /// Single assumption for `verify`; all checks when absent.
    #[serde(default)]
    pub assumption: Option<u8>,
    /// Fixed exponent `b` for `verify`.
    #[serde(default)]
    pub b: Option<u32>,
    #[serde(default)]
    pub sim: Option<SimSection>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Where `simulate` writes the empirical ccdf as CSV.
    #[serde(default)]
    pub ccdf_out: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            policy: None,
            policies: Vec::new(),
            lambda: None,
            lambda_grid: None,
            scaling: None,
            solver: SolverOptions::default(),
            assumption: None,
            b: None,
            sim: None,
            out: None,
            ccdf_out: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn all_policies(&self) -> Result<Vec<PolicySpec>> {
        let list: Vec<PolicySpec> = self.policy.iter().chain(&self.policies).cloned().collect();
        if list.is_empty() {
            return Err(Error::Config("no policy given".into()));
        }
        Ok(list)
    }

    fn one_policy(&self) -> Result<PolicySpec> {
        let mut list = self.all_policies()?;
        if list.len() > 1 {
            return Err(Error::Config(format!(
                "{:?} takes exactly one policy",
                self.command
            )));
        }
        Ok(list.remove(0))
    }

    fn one_lambda(&self) -> Result<f64> {
        self.lambda
            .ok_or_else(|| Error::Config("no lambda given".into()))
    }

    fn grid(&self) -> Result<Vec<f64>> {
        match &self.lambda_grid {
            Some(g) => g.resolve(),
            None => parse_grid(DEFAULT_GRID),
        }
    }
}

/// Text produced by one run. `error` is set when some rows failed but the
/// rest of the output is still worth writing.
#[derive(Debug, Default)]
pub struct Output {
    pub body: String,
    pub files: Vec<(PathBuf, String)>,
    pub error: Option<Error>,
}

impl Output {
    fn text(body: String) -> Self {
        Self {
            body,
            ..Self::default()
        }
    }
}

/// Mean performance measures at one arrival rate. Measures the model does
/// not define for the policy are null.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub policy: PolicySpec,
    pub lambda: f64,
    /// Mean waiting time.
    #[serde(rename = "E[W]")]
    pub mean_wait: Option<f64>,
    /// Mean queue length per server.
    #[serde(rename = "E[Q]")]
    pub mean_queue: Option<f64>,
    /// Mean response time.
    #[serde(rename = "E[R]")]
    pub mean_response: Option<f64>,
    /// Mean workload per server.
    #[serde(rename = "E[L]")]
    pub mean_workload: Option<f64>,
    pub u_lambda: Option<f64>,
    pub p_idle: Option<f64>,
}

pub fn analyze(policy: &PolicySpec, lambda: f64, opts: &SolverOptions) -> Result<Analysis> {
    let mut a = Analysis {
        policy: policy.clone(),
        lambda,
        mean_wait: None,
        mean_queue: None,
        mean_response: None,
        mean_workload: None,
        u_lambda: fixed_point_u(policy, lambda).ok().map(|r| r.u_lambda),
        p_idle: p_idle(policy, lambda).ok(),
    };
    if let PolicyKind::Redundancy { .. } = policy.kind() {
        if policy.discipline() == Discipline::QueueLength {
            return Err(Error::UnsupportedPolicy(format!(
                "{policy}: no queue-length variant"
            )));
        }
        // The curve started at 1 is the response-time ccdf.
        let curve = solve_ccdf(policy, lambda, policy.default_boundary(lambda), opts)?;
        a.mean_response = Some(curve.mean_workload());
        return Ok(a);
    }
    let ew = match policy.discipline() {
        Discipline::Workload => mean_waiting_with(policy, lambda, opts)?,
        Discipline::QueueLength => sq_mean_waiting(policy, lambda, SQ_TOL)?,
    };
    let er = ew + 1.0;
    a.mean_wait = Some(ew);
    a.mean_response = Some(er);
    a.mean_queue = Some(lambda * er);
    a.mean_workload = Some(lambda * er);
    Ok(a)
}

/// One row of `compare`: mean waiting times of every policy plus, for each
/// mix, its floor/ceil reduction and the two majorization verdicts.
fn compare_csv(policies: &[PolicySpec], grid: &[f64], opts: &SolverOptions) -> Result<Output> {
    use rayon::prelude::*;

    struct Reduction {
        index: usize,
        policy: PolicySpec,
        certified: bool,
    }
    let mut reductions = Vec::new();
    for (index, policy) in policies.iter().enumerate() {
        if let PolicyKind::Mix { choices } = policy.kind() {
            let a: Vec<u32> = choices.iter().map(|c| c.0).collect();
            let p: Vec<f64> = choices.iter().map(|c| c.1).collect();
            let (q, b) = floor_ceil_pair(&p, &a)?;
            let certificate = majorization_certificate(&p, &a, &q, &b)?;
            let reduced = policy_from_pairs(&q, &b)?.with_discipline(policy.discipline());
            reductions.push(Reduction {
                index,
                policy: reduced,
                certified: certificate.holds,
            });
        }
    }

    let wait = |policy: &PolicySpec, lambda: f64| match policy.discipline() {
        Discipline::Workload => mean_waiting_with(policy, lambda, opts),
        Discipline::QueueLength => sq_mean_waiting(policy, lambda, SQ_TOL),
    };
    type Row = (Vec<Result<f64>>, Vec<Result<f64>>);
    let rows: Vec<Row> = grid
        .par_iter()
        .map(|&lambda| {
            let main = policies.iter().map(|p| wait(p, lambda)).collect();
            let reduced = reductions.iter().map(|r| wait(&r.policy, lambda)).collect();
            (main, reduced)
        })
        .collect();

    let mut header = vec!["lambda".to_string()];
    header.extend(policies.iter().map(|p| format!("E[W] {p}")));
    for r in &reductions {
        let original = &policies[r.index];
        header.push(format!("E[W] floor/ceil {original} = {}", r.policy));
        header.push(format!("certificate {original}"));
        header.push(format!("ordering {original}"));
    }

    let mut first_error = None;
    let mut cell = |v: &Result<f64>| match v {
        Ok(x) => sig12(*x),
        Err(e) => {
            first_error.get_or_insert_with(|| e.clone());
            String::new()
        }
    };
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(&header).map_err(csv_error)?;
    for (&lambda, (main, reduced)) in grid.iter().zip(&rows) {
        let mut record = vec![sig12(lambda)];
        record.extend(main.iter().map(&mut cell));
        for (r, value) in reductions.iter().zip(reduced) {
            let ordering = match (&main[r.index], value) {
                (Ok(orig), Ok(fc)) => (fc <= &(orig + opts.consistency_tol.max(1e-9))).to_string(),
                _ => String::new(),
            };
            record.push(cell(value));
            record.push(r.certified.to_string());
            record.push(ordering);
        }
        out.write_record(&record).map_err(csv_error)?;
    }
    let bytes = out.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(Output {
        body: String::from_utf8_lossy(&bytes).into_owned(),
        files: Vec::new(),
        error: first_error,
    })
}

fn csv_error(e: csv::Error) -> Error {
    Error::Config(e.to_string())
}

fn ccdf_csv(report: &crate::sim::SimReport) -> Result<String> {
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["w", "fraction"]).map_err(csv_error)?;
    for s in &report.empirical_ccdf {
        out.write_record([sig12(s.w), sig12(s.fraction)])
            .map_err(csv_error)?;
    }
    let bytes = out.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

/// Serializes with every float rounded to 12 significant digits.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    fn round(v: &mut Value) {
        match v {
            Value::Number(n) if n.is_f64() => {
                if let Some(x) = n
                    .as_f64()
                    .and_then(|x| serde_json::Number::from_f64(round12(x)))
                {
                    *n = x;
                }
            }
            Value::Array(items) => items.iter_mut().for_each(round),
            Value::Object(map) => map.values_mut().for_each(round),
            _ => {}
        }
    }
    let mut v = serde_json::to_value(value).map_err(|e| Error::Config(e.to_string()))?;
    round(&mut v);
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::Config(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Runs one configured command and returns its output without touching the
/// filesystem.
pub fn execute(config: &RunConfig) -> Result<Output> {
    let opts = &config.solver;
    match config.command {
        Command::Analyze => {
            let a = analyze(&config.one_policy()?, config.one_lambda()?, opts)?;
            Ok(Output::text(to_json(&a)?))
        }
        Command::Curve => {
            let policy = config.one_policy()?;
            let scaling = config.scaling.unwrap_or(Scaling::LogOneMinusLambda);
            let rows = scaled_curve_with(&policy, &config.grid()?, scaling, opts);
            let error = rows.iter().find_map(|r| r.error.clone()).map(Error::Config);
            let mut out = Output::text(curve_csv(&policy, scaling, &rows));
            // Rows carry only the message; rerun the first failure to recover the kind.
            if error.is_some() {
                let bad = rows
                    .iter()
                    .find(|r| r.error.is_some())
                    .map(|r| r.lambda)
                    .unwrap_or_default();
                out.error = crate::limits::scaled_point(&policy, bad, scaling, opts)
                    .err()
                    .or(error);
            }
            Ok(out)
        }
        Command::Limits => {
            let reports = config
                .all_policies()?
                .iter()
                .map(limit_report)
                .collect::<Result<Vec<_>>>()?;
            let body = if reports.len() == 1 {
                to_json(&reports[0])?
            } else {
                to_json(&reports)?
            };
            Ok(Output::text(body))
        }
        Command::Verify => {
            let check = CheckOptions {
                b: config.b,
                solver: *opts,
                ..CheckOptions::default()
            };
            let mut reports = Vec::new();
            for policy in config.all_policies()? {
                match config.assumption {
                    Some(id) => {
                        let grid = match &config.lambda_grid {
                            Some(g) => g.resolve()?,
                            None => DEFAULT_B_GRID.to_vec(),
                        };
                        reports.push(check_assumption(&policy, id, &grid, &check)?);
                    }
                    None => reports.extend(verify_policy(&policy, &check)?),
                }
            }
            Ok(Output::text(to_json(&reports)?))
        }
        Command::Simulate => {
            let section = config.sim.clone().unwrap_or_default();
            let mut sim = SimConfig::new(
                config.one_policy()?,
                config.one_lambda()?,
                section.n_servers,
                section.horizon,
            );
            sim.seed = section.seed;
            if let Some(w) = section.warmup {
                sim.warmup = w;
            }
            if let Some(r) = section.replications {
                sim.replications = r;
            }
            if let Some(points) = section.ccdf_points {
                sim.ccdf_points = points;
            }
            let report = simulate(&sim)?;
            let mut out = Output::text(to_json(&report)?);
            if let Some(path) = &config.ccdf_out {
                out.files.push((path.clone(), ccdf_csv(&report)?));
            }
            Ok(out)
        }
        Command::Compare => compare_csv(&config.all_policies()?, &config.grid()?, opts),
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "cavity-lb",
    version,
    about = "Mean-field workload analysis of power-of-d load balancing"
)]
struct Cli {
    /// JSON run configuration; flags given alongside override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the main output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Cmd>,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Policy such as ll:d=2, lldk:d=4,k=2, mix:d=1,2;p=0.5,0.5, red:d=2,
    /// mem:d=2,m=1; append :sq for the queue-length variant. Repeatable.
    #[arg(long)]
    policy: Vec<String>,
    #[arg(long)]
    lambda: Option<f64>,
    /// `start:stop:step` or a comma-separated list.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// E[W], E[Q], E[R] and E[L] at one arrival rate.
    Analyze(#[command(flatten)] Common),
    /// Scaled mean waiting time over a grid, as CSV.
    Curve {
        #[command(flatten)]
        common: Common,
        /// log1mlambda or logplambda.
        #[arg(long)]
        scaling: Option<String>,
    },
    /// Heavy-traffic constants and limits.
    Limits(#[command(flatten)] Common),
    /// Checks the assumptions behind the heavy-traffic limit.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        assumption: Option<u8>,
        #[arg(long)]
        b: Option<u32>,
    },
    /// Finite-N simulation.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        servers: Option<usize>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        warmup: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replications: Option<usize>,
        /// Also write the empirical ccdf as `w,fraction` CSV.
        #[arg(long)]
        ccdf_out: Option<PathBuf>,
    },
    /// Mean waiting times of several policies side by side, as CSV.
    Compare(#[command(flatten)] Common),
}

fn overlay_common(config: &mut RunConfig, common: Common) -> Result<()> {
    if !common.policy.is_empty() {
        let mut parsed = common
            .policy
            .iter()
            .map(|s| s.parse::<PolicySpec>())
            .collect::<Result<Vec<_>>>()?;
        config.policy = Some(parsed.remove(0));
        config.policies = parsed;
    }
    if common.lambda.is_some() {
        config.lambda = common.lambda;
    }
    if let Some(g) = common.grid {
        config.lambda_grid = Some(LambdaGrid::Range(g));
    }
    Ok(())
}

fn resolve(cli: Cli) -> Result<RunConfig> {
    let mut config = match (&cli.config, &cli.command) {
        (Some(path), _) => RunConfig::from_file(path)?,
        (None, Some(cmd)) => RunConfig::new(match cmd {
            Cmd::Analyze(_) => Command::Analyze,
            Cmd::Curve { .. } => Command::Curve,
            Cmd::Limits(_) => Command::Limits,
            Cmd::Verify { .. } => Command::Verify,
            Cmd::Simulate { .. } => Command::Simulate,
            Cmd::Compare(_) => Command::Compare,
        }),
        (None, None) => return Err(Error::Config("no subcommand or --config given".into())),
    };
    if cli.out.is_some() {
        config.out = cli.out;
    }
    let Some(cmd) = cli.command else {
        return Ok(config);
    };
    match cmd {
        Cmd::Analyze(c) => {
            config.command = Command::Analyze;
            overlay_common(&mut config, c)?;
        }
        Cmd::Curve { common, scaling } => {
            config.command = Command::Curve;
            overlay_common(&mut config, common)?;
            if let Some(s) = scaling {
                config.scaling = Some(s.parse()?);
            }
        }
        Cmd::Limits(c) => {
            config.command = Command::Limits;
            overlay_common(&mut config, c)?;
        }
        Cmd::Verify {
            common,
            assumption,
            b,
        } => {
            config.command = Command::Verify;
            overlay_common(&mut config, common)?;
            config.assumption = assumption.or(config.assumption);
            config.b = b.or(config.b);
        }
        Cmd::Simulate {
            common,
            servers,
            horizon,
            warmup,
            seed,
            replications,
            ccdf_out,
        } => {
            config.command = Command::Simulate;
            overlay_common(&mut config, common)?;
            let mut sim = config.sim.take().unwrap_or_default();
            if let Some(n) = servers {
                sim.n_servers = n;
            }
            if let Some(h) = horizon {
                sim.horizon = h;
            }
            sim.warmup = warmup.or(sim.warmup);
            sim.seed = seed.unwrap_or(sim.seed);
            sim.replications = replications.or(sim.replications);
            config.sim = Some(sim);
            config.ccdf_out = ccdf_out.or(config.ccdf_out);
        }
        Cmd::Compare(c) => {
            config.command = Command::Compare;
            overlay_common(&mut config, c)?;
        }
    }
    Ok(config)
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize =
        raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            Error::Config(format!("{THREADS_ENV}={raw} is not a positive integer"))
        })?;
    // A pool may already exist when several runs share a process.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn report_error(err: &Error, stderr: &mut dyn Write) -> i32 {
    let code = if err.is_config_error() { 1 } else { 2 };
    let payload =
        serde_json::json!({ "error": err.kind(), "message": err.to_string(), "exit_code": code });
    let _ = writeln!(stderr, "{payload}");
    code
}

/// Full CLI entry point. Returns the process exit status: 0 on success, 1
/// for configuration errors, 2 for numerical failures.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(stdout, "{e}");
            return 0;
        }
        Err(e) => {
            return report_error(&Error::Config(e.to_string().trim_end().to_string()), stderr)
        }
    };
    let result = configure_threads()
        .and_then(|_| resolve(cli))
        .and_then(|config| {
            let output = execute(&config)?;
            match &config.out {
                Some(path) => write_file(path, &output.body)?,
                None => stdout
                    .write_all(output.body.as_bytes())
                    .map_err(|e| Error::Config(e.to_string()))?,
            }
            for (path, text) in &output.files {
                write_file(path, text)?;
            }
            match output.error {
                Some(e) => Err(e),
                None => Ok(()),
            }
        });
    match result {
        Ok(()) => 0,
        Err(e) => report_error(&e, stderr),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(
            std::iter::once("cavity-lb").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn grid_parsing() {
        let g = parse_grid("0.05:0.95:0.05").unwrap();
        assert_eq!(g.len(), 19);
        assert_eq!(g[2], 0.15);
        assert_eq!(*g.last().unwrap(), 0.95);
        assert_eq!(parse_grid("0.1, 0.5").unwrap(), vec![0.1, 0.5]);
        assert!(parse_grid("0.9:0.1:0.1").is_err());
        assert!(parse_grid("a:b").is_err());
    }

    #[test]
    fn mm1_analysis() {
        let (code, out, _) = run_args(&["analyze", "--policy", "ll:d=1", "--lambda", "0.5"]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert!((v["E[W]"].as_f64().unwrap() - 1.0).abs() < 1e-9);
        assert!((v["E[R]"].as_f64().unwrap() - 2.0).abs() < 1e-9);
        assert!((v["E[Q]"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn exit_codes() {
        let (code, _, err) = run_args(&["analyze", "--policy", "ll:d=0", "--lambda", "0.5"]);
        assert_eq!(code, 1);
        let v: Value = serde_json::from_str(err.trim()).unwrap();
        assert_eq!(v["exit_code"], 1);
        assert_eq!(
            run_args(&["analyze", "--policy", "ll:d=2", "--lambda", "1.5"]).0,
            1
        );
        assert_eq!(run_args(&["bogus"]).0, 1);
        assert_eq!(run_args(&["--help"]).0, 0);
    }

    #[test]
    fn numeric_failure_exits_2() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(
            &path,
            r#"{"command": "analyze", "policy": "ll:d=2", "lambda": 0.9, "solver": {"consistency_tol": 1e-300}}"#,
        )
        .unwrap();
        let (code, _, err) = run_args(&["--config", path.to_str().unwrap()]);
        assert_eq!(code, 2, "{err}");
        let v: Value = serde_json::from_str(err.trim()).unwrap();
        assert_eq!(v["error"], "INCONSISTENT");
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let err =
            RunConfig::from_json(r#"{"command": "analyze", "policy": "ll:d=2", "lamda": 0.5}"#)
                .unwrap_err();
        assert!(err.is_config_error());
        let ok = RunConfig::from_json(
            r#"{"command": "curve", "policy": "ll:d=2", "lambda_grid": [0.5, 0.6], "scaling": "logplambda",
                "solver": {"local_tol": 1e-9}}"#,
        )
        .unwrap();
        assert_eq!(ok.solver.local_tol, 1e-9);
        assert_eq!(ok.lambda_grid.unwrap().resolve().unwrap(), vec![0.5, 0.6]);
    }

    #[test]
    fn config_round_trips() {
        let mut c = RunConfig::new(Command::Simulate);
        c.policy = Some("lldk:d=3,k=2".parse().unwrap());
        c.lambda = Some(0.8);
        c.sim = Some(SimSection::default());
        let back = RunConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn red_reports_response_only() {
        let a = analyze(&"red:d=2".parse().unwrap(), 0.5, &SolverOptions::default()).unwrap();
        assert!(a.mean_wait.is_none());
        // F = 1 / (lambda + (1 - lambda) e^w) integrates to -ln(1 - lambda) / lambda
        let er = a.mean_response.unwrap();
        assert!((er - 4f64.ln()).abs() < 1e-8, "{er}");
    }

    #[test]
    fn sq_analysis_uses_recursion() {
        let a = analyze(
            &"ll:d=2:sq".parse().unwrap(),
            0.5,
            &SolverOptions::default(),
        )
        .unwrap();
        let ew = a.mean_wait.unwrap();
        let tower: f64 = (1..8).map(|k| 0.5f64.powi((1 << (k + 1)) - 2)).sum();
        assert!((ew - tower).abs() < 1e-12, "{ew}");
    }

    #[test]
    fn json_floats_are_rounded() {
        let s = to_json(&serde_json::json!({"x": 0.1 + 0.2, "n": 3})).unwrap();
        assert!(s.contains("0.3") && !s.contains("0.30000000000000004"));
    }
}
