//! Monte Carlo estimators for the time to hack, the functional probability
//! at a fixed time, and the per-cycle hack probability.
//!
//! Every replication owns a ChaCha8 stream selected by (master seed,
//! estimator, replication index), so results are a pure function of the
//! model and the plan: the worker count only changes wall time. Aggregation
//! always runs sequentially in replication order.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{play_cycle, AttackModel, CycleOutcome, DrawSource};

pub const DEFAULT_CYCLE_CAP: u64 = 1_000_000_000;

/// Stream families, so estimators sharing a master seed draw independent variates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamPurpose {
    TimeToHack = 0x5445_4d50_0000_0001,
    FunctionalAt = 0x5445_4d50_0000_0002,
    CycleOutcome = 0x5445_4d50_0000_0003,
}

/// The random stream of one replication.
pub fn replication_stream(master_seed: u64, purpose: StreamPurpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed ^ (purpose as u64).rotate_left(17));
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicationPlan {
    pub n_reps: u64,
    pub master_seed: u64,
    pub workers: usize,
    pub cycle_cap: u64,
}

impl ReplicationPlan {
    pub fn new(n_reps: u64, master_seed: u64) -> Self {
        Self { n_reps, master_seed, workers: 1, cycle_cap: DEFAULT_CYCLE_CAP }
    }

    pub fn with_workers(self, workers: usize) -> Self {
        Self { workers, ..self }
    }

    pub fn with_cycle_cap(self, cycle_cap: u64) -> Self {
        Self { cycle_cap, ..self }
    }

    fn validate(&self) -> Result<()> {
        if self.n_reps < 2 {
            return Err(Error::config(format!("need at least 2 replications, got {}", self.n_reps)));
        }
        if self.workers == 0 {
            return Err(Error::config("workers must be at least 1"));
        }
        Ok(())
    }
}

/// A Monte Carlo point estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_reps: u64,
    pub seed: u64,
    /// Wall-clock seconds; excluded from all emitted files.
    #[serde(skip)]
    pub elapsed: f64,
}

impl Estimate {
    fn from_values(values: impl Iterator<Item = f64> + Clone, n: u64, seed: u64, started: Instant) -> Self {
        let mean = values.clone().sum::<f64>() / n as f64;
        let ss = values.map(|v| (v - mean) * (v - mean)).sum::<f64>();
        let sd = (ss / (n - 1) as f64).sqrt();
        Self { mean, std_error: sd / (n as f64).sqrt(), n_reps: n, seed, elapsed: started.elapsed().as_secs_f64() }
    }

    fn from_indicator(hits: u64, n: u64, seed: u64, started: Instant) -> Self {
        let p = hits as f64 / n as f64;
        Self {
            mean: p,
            std_error: (p * (1.0 - p) / n as f64).sqrt(),
            n_reps: n,
            seed,
            elapsed: started.elapsed().as_secs_f64(),
        }
    }
}

/// One realisation of the time to hack, split per the cycle decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Passage {
    /// Total time until the chain is hacked.
    pub time: f64,
    /// Reset cycles before the successful one.
    pub resets: u64,
    /// Summed durations of the reset cycles.
    pub reset_time: f64,
    /// Duration of the successful cycle.
    pub hack_duration: f64,
}

/// Runs cycles until one ends hacked. Fails after `cycle_cap` cycles.
pub fn simulate_time_to_hack<S: DrawSource + ?Sized>(m: u32, source: &mut S, cycle_cap: u64) -> Result<Passage> {
    let mut reset_time = 0.0;
    for resets in 0..cycle_cap {
        match play_cycle(m, source) {
            CycleOutcome::Reset(d) => reset_time += d,
            CycleOutcome::Hacked(d) => {
                return Ok(Passage { time: reset_time + d, resets, reset_time, hack_duration: d });
            }
        }
    }
    Err(Error::Runaway { replication: 0, cap: cycle_cap })
}

/// Whether the chain is still functional at time `t`. A hack completing
/// exactly at `t` counts as hacked.
pub fn functional_at<S: DrawSource + ?Sized>(m: u32, source: &mut S, t: f64, cycle_cap: u64) -> Result<bool> {
    if t <= 0.0 {
        return Ok(true);
    }
    let mut clock = 0.0;
    for _ in 0..cycle_cap {
        match play_cycle(m, source) {
            CycleOutcome::Hacked(d) => return Ok(clock + d > t),
            CycleOutcome::Reset(d) => {
                clock += d;
                if clock >= t {
                    return Ok(true);
                }
            }
        }
    }
    Err(Error::Runaway { replication: 0, cap: cycle_cap })
}

fn run_replications<T, F>(plan: &ReplicationPlan, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    plan.validate()?;
    let tag = |i: u64, r: Result<T>| {
        r.map_err(|e| match e {
            Error::Runaway { cap, .. } => Error::Runaway { replication: i, cap },
            other => other,
        })
    };
    if plan.workers == 1 {
        return (0..plan.n_reps).map(|i| tag(i, job(i))).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start {} workers: {e}", plan.workers)))?;
    pool.install(|| (0..plan.n_reps).into_par_iter().map(|i| tag(i, job(i))).collect())
}

/// Sample of `n_reps` passages from caller-supplied draw sources.
pub fn sample_passages_with<S, F>(m: u32, plan: &ReplicationPlan, make_source: F) -> Result<Vec<Passage>>
where
    S: DrawSource,
    F: Fn(u64) -> S + Sync + Send,
{
    run_replications(plan, |i| simulate_time_to_hack(m, &mut make_source(i), plan.cycle_cap))
}

pub fn sample_passages(model: &AttackModel, plan: &ReplicationPlan) -> Result<Vec<Passage>> {
    let seed = plan.master_seed;
    sample_passages_with(model.m(), plan, |i| model.draws(replication_stream(seed, StreamPurpose::TimeToHack, i)))
}

/// Mean time to hack: average of independent T_m draws, standard error sd/√n.
pub fn estimate_mean_functional_time(model: &AttackModel, plan: &ReplicationPlan) -> Result<Estimate> {
    let started = Instant::now();
    let passages = sample_passages(model, plan)?;
    Ok(Estimate::from_values(passages.iter().map(|p| p.time), plan.n_reps, plan.master_seed, started))
}

pub fn estimate_mean_functional_time_with<S, F>(m: u32, plan: &ReplicationPlan, make_source: F) -> Result<Estimate>
where
    S: DrawSource,
    F: Fn(u64) -> S + Sync + Send,
{
    let started = Instant::now();
    let passages = sample_passages_with(m, plan, make_source)?;
    Ok(Estimate::from_values(passages.iter().map(|p| p.time), plan.n_reps, plan.master_seed, started))
}

/// Summary of a passage sample beyond the mean time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassageSummary {
    pub time: Estimate,
    pub resets: Estimate,
    /// p̂ = n / (total cycles), the geometric maximum-likelihood estimate.
    pub cycle_success: Estimate,
}

pub fn summarize_passages(passages: &[Passage], seed: u64) -> PassageSummary {
    let started = Instant::now();
    let n = passages.len() as u64;
    let time = Estimate::from_values(passages.iter().map(|p| p.time), n, seed, started);
    let resets = Estimate::from_values(passages.iter().map(|p| p.resets as f64), n, seed, started);
    let cycles: f64 = passages.iter().map(|p| (p.resets + 1) as f64).sum();
    let p = n as f64 / cycles;
    let cycle_success = Estimate {
        mean: p,
        std_error: (p * p * (1.0 - p) / n as f64).sqrt(),
        n_reps: n,
        seed,
        elapsed: 0.0,
    };
    PassageSummary { time, resets, cycle_success }
}

/// Probability the chain is functional at `t`: average of indicators W,
/// standard error √(p̂(1 − p̂)/n).
pub fn estimate_functional_prob(model: &AttackModel, t: f64, plan: &ReplicationPlan) -> Result<Estimate> {
    let seed = plan.master_seed;
    estimate_functional_prob_with(model.m(), t, plan, |i| {
        model.draws(replication_stream(seed, StreamPurpose::FunctionalAt, i))
    })
}

pub fn estimate_functional_prob_with<S, F>(m: u32, t: f64, plan: &ReplicationPlan, make_source: F) -> Result<Estimate>
where
    S: DrawSource,
    F: Fn(u64) -> S + Sync + Send,
{
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time must be non-negative, got {t}")));
    }
    let started = Instant::now();
    let flags = run_replications(plan, |i| functional_at(m, &mut make_source(i), t, plan.cycle_cap))?;
    let hits = flags.iter().filter(|&&w| w).count() as u64;
    Ok(Estimate::from_indicator(hits, plan.n_reps, plan.master_seed, started))
}

/// Per-cycle statistics from `n_reps` independent cycles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleStats {
    /// Fraction of cycles ending hacked (p̂_m).
    pub success: Estimate,
    /// Mean duration of reset cycles, E[Y | Y ≤ ΣX].
    pub reset_duration: Estimate,
    /// Mean duration of hacked cycles, E[ΣX | ΣX < Y].
    pub hack_duration: Estimate,
}

impl CycleStats {
    /// E[N₁]·E[Y₁] + E[ΣX | hacked] with E[N₁] = (1 − p)/p, and its
    /// delta-method standard error.
    pub fn wald_decomposition(&self) -> (f64, f64) {
        let p = self.success.mean;
        let y = self.reset_duration.mean;
        let x = self.hack_duration.mean;
        let value = (1.0 - p) / p * y + x;
        let var = (y / (p * p)).powi(2) * self.success.std_error.powi(2)
            + ((1.0 - p) / p).powi(2) * self.reset_duration.std_error.powi(2)
            + self.hack_duration.std_error.powi(2);
        (value, var.sqrt())
    }
}

pub fn estimate_cycle_stats(model: &AttackModel, plan: &ReplicationPlan) -> Result<CycleStats> {
    let seed = plan.master_seed;
    estimate_cycle_stats_with(model.m(), plan, |i| model.draws(replication_stream(seed, StreamPurpose::CycleOutcome, i)))
}

pub fn estimate_cycle_stats_with<S, F>(m: u32, plan: &ReplicationPlan, make_source: F) -> Result<CycleStats>
where
    S: DrawSource,
    F: Fn(u64) -> S + Sync + Send,
{
    let started = Instant::now();
    let outcomes = run_replications(plan, |i| Ok(play_cycle(m, &mut make_source(i))))?;
    let hits = outcomes.iter().filter(|o| o.is_hacked()).count() as u64;
    let success = Estimate::from_indicator(hits, plan.n_reps, plan.master_seed, started);
    let conditional = |hacked: bool| {
        let vals = outcomes.iter().filter(move |o| o.is_hacked() == hacked).map(|o| o.duration());
        let n = vals.clone().count() as u64;
        if n < 2 {
            Estimate { mean: f64::NAN, std_error: f64::NAN, n_reps: n, seed: plan.master_seed, elapsed: 0.0 }
        } else {
            Estimate::from_values(vals, n, plan.master_seed, started)
        }
    };
    Ok(CycleStats { success, reset_duration: conditional(false), hack_duration: conditional(true) })
}

/// p̂_m: direct per-cycle Bernoulli frequency.
pub fn estimate_cycle_success_prob(model: &AttackModel, plan: &ReplicationPlan) -> Result<Estimate> {
    estimate_cycle_stats(model, plan).map(|s| s.success)
}
