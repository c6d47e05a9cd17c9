//! Finite-N discrete-event simulation of workload-based dispatching with
//! Poisson arrivals and exponential(1) job sizes.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{check_lambda, Discipline, PolicyKind, PolicySpec};

/// Arrival events between two workload snapshots.
pub const SNAPSHOT_EVERY: u64 = 10_000;

fn default_replications() -> usize {
    10
}

fn default_ccdf_points() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub policy: PolicySpec,
    pub lambda: f64,
    pub n_servers: usize,
    pub horizon: f64,
    #[serde(default)]
    pub warmup: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Workload levels at which the empirical ccdf is recorded.
    #[serde(default = "default_ccdf_points")]
    pub ccdf_points: Vec<f64>,
}

impl SimConfig {
    pub fn new(policy: PolicySpec, lambda: f64, n_servers: usize, horizon: f64) -> Self {
        Self {
            policy,
            lambda,
            n_servers,
            horizon,
            warmup: 0.1 * horizon,
            seed: 0,
            replications: default_replications(),
            ccdf_points: default_ccdf_points(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if self.policy.discipline() == Discipline::QueueLength {
            return Err(Error::UnsupportedPolicy(format!(
                "{}: queue-length variants are not simulated",
                self.policy
            )));
        }
        if matches!(
            self.policy.kind(),
            PolicyKind::Redundancy { .. } | PolicyKind::Memory { .. }
        ) {
            return Err(Error::UnsupportedPolicy(format!(
                "{}: not simulated",
                self.policy
            )));
        }
        if self.n_servers < 2 {
            return Err(Error::InvalidArgument(format!(
                "n_servers = {} must be at least 2",
                self.n_servers
            )));
        }
        if self.policy.max_d() as usize > self.n_servers {
            return Err(Error::InvalidArgument(format!(
                "policy probes {} servers but only {} exist",
                self.policy.max_d(),
                self.n_servers
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite())
            || !(self.warmup >= 0.0)
            || self.warmup >= self.horizon
        {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= warmup ({}) < horizon ({})",
                self.warmup, self.horizon
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidArgument(
                "replications must be at least 1".into(),
            ));
        }
        if self.ccdf_points.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument(
                "ccdf points must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcdfSample {
    pub w: f64,
    /// Fraction of servers holding more than `w` work.
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub policy: PolicySpec,
    pub lambda: f64,
    pub n_servers: usize,
    /// Average over replications of the per-replication mean waiting time.
    pub mean_wait: f64,
    /// Standard error of `mean_wait` across replications (0 with one run).
    pub stderr: f64,
    pub n_jobs: u64,
    pub empirical_ccdf: Vec<CcdfSample>,
    pub replication_means: Vec<f64>,
    /// Largest relative violation of `arrived = served + remaining` work.
    pub conservation_error: f64,
    pub seed_echo: u64,
}

#[derive(Clone, Debug)]
struct Replication {
    mean_wait: f64,
    jobs: u64,
    ccdf: Vec<f64>,
    conservation_error: f64,
}

enum Router {
    Single(u32),
    Batch {
        d: u32,
        k: u32,
    },
    Mix {
        ds: Vec<u32>,
        pick: WeightedIndex<f64>,
    },
}

impl Router {
    fn new(policy: &PolicySpec) -> Self {
        match policy.kind() {
            PolicyKind::LeastLoaded { d } => Router::Single(*d),
            PolicyKind::Batch { d, k } => Router::Batch { d: *d, k: *k },
            PolicyKind::Mix { choices } => Router::Mix {
                ds: choices.iter().map(|c| c.0).collect(),
                pick: WeightedIndex::new(choices.iter().map(|c| c.1)).expect("validated mix"),
            },
            _ => unreachable!("validated policy"),
        }
    }

    fn batch_size(&self) -> u32 {
        match self {
            Router::Batch { k, .. } => *k,
            _ => 1,
        }
    }

    /// `(probes, jobs)` for the next arrival event.
    fn draw<R: Rng>(&self, rng: &mut R) -> (u32, u32) {
        match self {
            Router::Single(d) => (*d, 1),
            Router::Batch { d, k } => (*d, *k),
            Router::Mix { ds, pick } => (ds[pick.sample(rng)], 1),
        }
    }
}

fn run_replication(config: &SimConfig, stream: u64) -> Replication {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let n = config.n_servers;
    let router = Router::new(&config.policy);
    let size = Exp::new(1.0).unwrap();
    let gap = Exp::new(config.lambda * n as f64 / router.batch_size() as f64).unwrap();

    // a server's workload at time t is max(0, finish - t)
    let mut finish = vec![0.0f64; n];
    let mut touched = vec![0.0f64; n];
    let mut arrived = 0.0;
    let mut served = 0.0;
    let mut probes: Vec<(f64, u32, usize)> = Vec::with_capacity(64);

    let mut t = 0.0;
    let mut wait_sum = 0.0;
    let mut jobs = 0u64;
    let mut events = 0u64;
    let mut ccdf = vec![0.0; config.ccdf_points.len()];
    let mut snapshots = 0u64;

    loop {
        t += gap.sample(&mut rng);
        if t > config.horizon {
            break;
        }
        let (d, k) = router.draw(&mut rng);
        probes.clear();
        for i in sample(&mut rng, n, d as usize).into_iter() {
            probes.push(((finish[i] - t).max(0.0), rng.gen(), i));
        }
        // least work first; the random key breaks ties (idle servers) uniformly
        probes.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let record = t >= config.warmup;
        for &(work, _, i) in probes.iter().take(k as usize) {
            served += (finish[i] - touched[i]).max(0.0) - work;
            let job = size.sample(&mut rng);
            arrived += job;
            finish[i] = finish[i].max(t) + job;
            touched[i] = t;
            if record {
                wait_sum += work;
                jobs += 1;
            }
        }
        events += 1;
        if record && events.is_multiple_of(SNAPSHOT_EVERY) {
            snapshots += 1;
            for (slot, &w) in ccdf.iter_mut().zip(&config.ccdf_points) {
                let above = finish.iter().filter(|&&f| f - t > w).count();
                *slot += above as f64 / n as f64;
            }
        }
    }

    let end = config.horizon;
    let mut remaining = 0.0;
    for i in 0..n {
        let left = (finish[i] - end).max(0.0);
        served += (finish[i] - touched[i]).max(0.0) - left;
        remaining += left;
    }
    let conservation_error = if arrived > 0.0 {
        (arrived - served - remaining).abs() / arrived
    } else {
        0.0
    };
    if snapshots > 0 {
        for slot in &mut ccdf {
            *slot /= snapshots as f64;
        }
    }
    Replication {
        mean_wait: if jobs > 0 {
            wait_sum / jobs as f64
        } else {
            0.0
        },
        jobs,
        ccdf,
        conservation_error,
    }
}

/// Runs `config.replications` independent replications in parallel.
/// Replication `r` uses stream `r` of a ChaCha8 generator keyed by the seed,
/// so reports are reproducible regardless of thread count.
pub fn simulate(config: &SimConfig) -> Result<SimReport> {
    config.validate()?;
    let runs: Vec<Replication> = (0..config.replications as u64)
        .into_par_iter()
        .map(|r| run_replication(config, r))
        .collect();
    let reps = runs.len() as f64;
    let means: Vec<f64> = runs.iter().map(|r| r.mean_wait).collect();
    let mean_wait = means.iter().sum::<f64>() / reps;
    let stderr = if runs.len() > 1 {
        let var = means.iter().map(|m| (m - mean_wait).powi(2)).sum::<f64>() / (reps - 1.0);
        (var / reps).sqrt()
    } else {
        0.0
    };
    let empirical_ccdf = config
        .ccdf_points
        .iter()
        .enumerate()
        .map(|(j, &w)| CcdfSample {
            w,
            fraction: runs.iter().map(|r| r.ccdf[j]).sum::<f64>() / reps,
        })
        .collect();
    Ok(SimReport {
        policy: config.policy.clone(),
        lambda: config.lambda,
        n_servers: config.n_servers,
        mean_wait,
        stderr,
        n_jobs: runs.iter().map(|r| r.jobs).sum(),
        empirical_ccdf,
        replication_means: means,
        conservation_error: runs
            .iter()
            .map(|r| r.conservation_error)
            .fold(0.0, f64::max),
        seed_echo: config.seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n_servers: usize,
    pub mean_wait: f64,
    pub stderr: f64,
    pub mean_field: f64,
    pub gap: f64,
}

/// Simulates the configuration for every `N` in `n_list` and compares with
/// the mean-field mean waiting time. Rows are sorted by `N`.
pub fn convergence_study(config: &SimConfig, n_list: &[usize]) -> Result<Vec<ConvergenceRow>> {
    let mean_field = crate::ode::mean_waiting(&config.policy, config.lambda)?;
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.iter()
        .map(|&n| {
            let report = simulate(&SimConfig {
                n_servers: n,
                ..config.clone()
            })?;
            Ok(ConvergenceRow {
                n_servers: n,
                mean_wait: report.mean_wait,
                stderr: report.stderr,
                mean_field,
                gap: (report.mean_wait - mean_field).abs(),
            })
        })
        .collect()
}
