use std::fmt::Write as _;
use std::time::Duration;

use rayon::prelude::*;

use super::{derive_seed, train_realization, Outcome, TrainingConfig, TrainingReport};
use crate::error::{AncError, Result};
use crate::keygen::KeyPool;
use crate::networks::AncModel;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "RANDOM_ANC_THREADS";

/// Rayon pool sized by `RANDOM_ANC_THREADS` when set, else by rayon's default.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| AncError::Argument(format!("{THREADS_ENV}={v} is not a thread count")))?;
        b = b.num_threads(n.max(1));
    }
    b.build().map_err(|e| AncError::Usage(e.to_string()))
}

#[derive(Clone, Debug)]
pub struct RealizationResult {
    pub n_proj: usize,
    pub seed: u64,
    pub model: AncModel,
    pub report: TrainingReport,
}

/// Trains one realization per config, in parallel, preserving order.
pub fn run_realizations(configs: &[TrainingConfig], pool: &KeyPool) -> Result<Vec<RealizationResult>> {
    let workers = thread_pool()?;
    workers.install(|| {
        configs
            .par_iter()
            .map(|cfg| {
                let (model, report) = train_realization(cfg, pool)?;
                Ok(RealizationResult {
                    n_proj: cfg.n_proj,
                    seed: cfg.seed,
                    model,
                    report,
                })
            })
            .collect()
    })
}

/// 95% Wilson score interval for `successes` out of `n`.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let denom = 1.0 + z * z / n_f;
    let centre = (p + z * z / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z * z / (4.0 * n_f * n_f)).sqrt() / denom;
    // The bounds are exactly 0 and 1 at the extremes; avoid rounding residue.
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Aggregate for one projection width.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub n_proj: usize,
    pub realizations: usize,
    pub converged: usize,
    pub passthrough_rejected: usize,
    pub convergence_rate: f64,
    pub rate_ci: (f64, f64),
    /// Means over converged realizations; NaN when none converged.
    pub mean_epochs: f64,
    pub mean_wall_time_s: f64,
    pub mean_eve_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OrderingVerdict {
    /// The expected width has the strictly highest convergence rate.
    Confirmed,
    /// It does not, but its interval overlaps the leader's.
    Inconclusive { leader: usize },
    /// Another width is better with non-overlapping intervals.
    Contradicted { leader: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn from_results(dims: &[usize], results: &[RealizationResult]) -> Self {
        let rows = dims
            .iter()
            .map(|&n_proj| {
                let runs: Vec<&RealizationResult> = results.iter().filter(|r| r.n_proj == n_proj).collect();
                let conv: Vec<&&RealizationResult> = runs.iter().filter(|r| r.report.converged()).collect();
                let mean = |f: &dyn Fn(&RealizationResult) -> f64| {
                    if conv.is_empty() {
                        f64::NAN
                    } else {
                        conv.iter().map(|r| f(r)).sum::<f64>() / conv.len() as f64
                    }
                };
                SweepRow {
                    n_proj,
                    realizations: runs.len(),
                    converged: conv.len(),
                    passthrough_rejected: runs
                        .iter()
                        .filter(|r| r.report.outcome == Outcome::IdentityPassthroughRejected)
                        .count(),
                    convergence_rate: if runs.is_empty() {
                        0.0
                    } else {
                        conv.len() as f64 / runs.len() as f64
                    },
                    rate_ci: wilson_interval(conv.len(), runs.len()),
                    mean_epochs: mean(&|r| r.report.epochs_used as f64),
                    mean_wall_time_s: mean(&|r| r.report.wall_time.as_secs_f64()),
                    mean_eve_accuracy: mean(&|r| r.report.final_eve_accuracy),
                }
            })
            .collect();
        Self { rows }
    }

    /// `n_proj,realizations,converged,passthrough_rejected,convergence_rate,rate_ci_low,rate_ci_high,mean_epochs,mean_wall_time_s,mean_eve_accuracy`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "n_proj,realizations,converged,passthrough_rejected,convergence_rate,rate_ci_low,rate_ci_high,mean_epochs,mean_wall_time_s,mean_eve_accuracy\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.4},{:.4},{:.4},{:.2},{:.3},{:.4}",
                r.n_proj,
                r.realizations,
                r.converged,
                r.passthrough_rejected,
                r.convergence_rate,
                r.rate_ci.0,
                r.rate_ci.1,
                r.mean_epochs,
                r.mean_wall_time_s,
                r.mean_eve_accuracy
            );
        }
        s
    }

    /// Compares the convergence rate of `expected` against every other width.
    pub fn ordering_verdict(&self, expected: usize) -> Result<OrderingVerdict> {
        let target = self
            .rows
            .iter()
            .find(|r| r.n_proj == expected)
            .ok_or_else(|| AncError::Argument(format!("width {expected} not in sweep")))?;
        let leader = self
            .rows
            .iter()
            .filter(|r| r.n_proj != expected)
            .max_by(|a, b| a.convergence_rate.total_cmp(&b.convergence_rate));
        let Some(leader) = leader else {
            return Ok(OrderingVerdict::Confirmed);
        };
        if target.convergence_rate > leader.convergence_rate {
            Ok(OrderingVerdict::Confirmed)
        } else if leader.rate_ci.0 > target.rate_ci.1 {
            Ok(OrderingVerdict::Contradicted { leader: leader.n_proj })
        } else {
            Ok(OrderingVerdict::Inconclusive { leader: leader.n_proj })
        }
    }
}

/// Independent realizations for every width in `dims`; realization `i` of a
/// width uses seed `derive_seed(cfg.seed, i)`.
pub fn sweep_projection_dims(
    dims: &[usize],
    realizations_per_dim: usize,
    cfg: &TrainingConfig,
    pool: &KeyPool,
) -> Result<(SweepReport, Vec<RealizationResult>)> {
    if dims.is_empty() {
        return Err(AncError::Argument("sweep needs at least one projection width".into()));
    }
    let configs: Vec<TrainingConfig> = dims
        .iter()
        .flat_map(|&n_proj| {
            (0..realizations_per_dim).map(move |i| TrainingConfig {
                n_proj,
                seed: derive_seed(cfg.seed, i as u64),
                ..cfg.clone()
            })
        })
        .collect();
    let results = run_realizations(&configs, pool)?;
    Ok((SweepReport::from_results(dims, &results), results))
}

/// Total wall time across results.
pub fn total_wall_time(results: &[RealizationResult]) -> Duration {
    results.iter().map(|r| r.report.wall_time).sum()
}
