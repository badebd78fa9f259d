//! The `estimate`, `sweep` and `validate` commands.

use std::path::PathBuf;

use chainsim_core::analytic;
use chainsim_core::econ::{self, Engine, SweepTable};
use chainsim_core::mc::{self, ReplicationPlan};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{check_range, check_times, EngineChoice, ExperimentConfig, Format, DEFAULT_SEED};
use crate::report::{Failure, Record, Report, Selection, Summary};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "chainsim", version, about = "Time-to-hack and cost-benefit analysis for blockchains under attack")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate one quantity at one or more thresholds.
    Estimate(RunArgs),
    /// Tabulate every quantity over a range of thresholds, with the revenue optimum.
    Sweep(RunArgs),
    /// Check monotonicity in m and agreement between the engines.
    Validate(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Quantity {
    MeanTime,
    PFunctional,
    PHack,
    NetRevenue,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::MeanTime => "mean-time",
            Quantity::PFunctional => "p-functional",
            Quantity::PHack => "p-hack",
            Quantity::NetRevenue => "net-revenue",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, conflicts_with = "m_range")]
    pub m: Option<u32>,
    /// Inclusive range A:B.
    #[arg(long, value_parser = parse_m_range)]
    pub m_range: Option<(u32, u32)>,
    #[arg(long, conflicts_with = "t_grid")]
    pub t: Option<f64>,
    /// Times A, A+STEP, … up to B, written A:B:STEP.
    #[arg(long, value_parser = parse_t_grid)]
    pub t_grid: Option<TGrid>,
    /// Replications for every Monte Carlo estimate.
    #[arg(long)]
    pub iters: Option<u64>,
    /// Master seed; falls back to the config, then CHAIN_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub engine: Option<EngineChoice>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long, value_enum, default_value = "mean-time")]
    pub quantity: Quantity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TGrid(pub Vec<f64>);

fn parse_m_range(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once(':').ok_or("expected A:B")?;
    let a: u32 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: u32 = b.trim().parse().map_err(|e| format!("{e}"))?;
    check_range(a, b).map_err(|e| e.to_string())?;
    Ok((a, b))
}

fn parse_t_grid(s: &str) -> Result<TGrid, String> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{e}")))
        .collect::<Result<_, _>>()?;
    let [a, b, step] = parts[..] else {
        return Err("expected A:B:STEP".into());
    };
    if !(a >= 0.0 && b >= a && step > 0.0 && b.is_finite()) {
        return Err("need 0 <= A <= B and STEP > 0".into());
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    if n > 100_000 {
        return Err("t grid has more than 100000 points".into());
    }
    // Rounded to 12 decimals so 0.1-style steps print cleanly.
    Ok(TGrid((0..=n).map(|k| ((a + k as f64 * step) * 1e12).round() / 1e12).collect()))
}

/// A config with the command-line overrides applied.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub ms: Vec<u32>,
    pub times: Vec<f64>,
    pub quantity: Quantity,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl Resolved {
    pub fn seed(&self) -> u64 {
        self.config.plan.seed.expect("seed resolved")
    }

    fn time_plan(&self) -> ReplicationPlan {
        let p = &self.config.plan;
        ReplicationPlan::new(p.time_reps, self.seed()).with_workers(p.workers).with_cycle_cap(p.cycle_cap)
    }

    fn prob_plan(&self) -> ReplicationPlan {
        let p = &self.config.plan;
        ReplicationPlan::new(p.prob_reps, self.seed()).with_workers(p.workers).with_cycle_cap(p.cycle_cap)
    }

    fn engines(&self) -> Vec<Engine> {
        let mut out = Vec::new();
        if self.config.engine.analytic() {
            out.push(Engine::Analytic(self.config.quadrature));
        }
        if self.config.engine.mc() {
            out.push(Engine::MonteCarlo { time_plan: self.time_plan(), prob_plan: self.prob_plan() });
        }
        out
    }

    fn selection(&self, with_quantity: bool) -> Selection {
        Selection { m: self.ms.clone(), quantity: with_quantity.then(|| self.quantity.name()), t: self.times.clone() }
    }
}

/// Applies `args` to the config file. `env_seed` is the value of CHAIN_SEED.
pub fn resolve(args: &RunArgs, env_seed: Option<&str>, ranged: bool) -> Result<Resolved, CliError> {
    let mut cfg = ExperimentConfig::from_path(&args.config)?;
    let env_seed = env_seed
        .map(|s| s.trim().parse::<u64>().map_err(|e| CliError::Config(format!("CHAIN_SEED is not a u64: {e}"))))
        .transpose()?;
    cfg.plan.seed = Some(args.seed.or(cfg.plan.seed).or(env_seed).unwrap_or(DEFAULT_SEED));
    if let Some(n) = args.iters {
        cfg.plan.time_reps = n;
        cfg.plan.prob_reps = n;
    }
    if let Some(e) = args.engine {
        cfg.engine = e;
    }
    if let Some(w) = args.workers {
        cfg.plan.workers = w;
    }
    let times = match (&args.t, &args.t_grid) {
        (Some(t), _) => vec![*t],
        (None, Some(g)) => g.0.clone(),
        (None, None) => cfg.t_grid.clone().unwrap_or_default(),
    };
    if !times.is_empty() {
        check_times(&times)?;
        cfg.t_grid = Some(times.clone());
    }
    let ms: Vec<u32> = match (args.m, args.m_range, cfg.model.m_range, cfg.default_m()) {
        (Some(m), ..) => vec![m],
        (None, Some((a, b)), ..) => (a..=b).collect(),
        (None, None, Some([a, b]), d) => {
            if ranged || d.is_none() {
                (a..=b).collect()
            } else {
                vec![d.unwrap()]
            }
        }
        (None, None, None, Some(d)) => vec![d],
        (None, None, None, None) => return Err(CliError::Config("no threshold selected: pass --m or --m-range".into())),
    };
    if ms.contains(&0) {
        return Err(CliError::Config("m must be at least 1".into()));
    }
    cfg.validate()?;
    let format = args.format.unwrap_or(cfg.output.format);
    let out = args.out.clone().or_else(|| cfg.output.path.clone());
    Ok(Resolved { config: cfg, ms, times, quantity: args.quantity, out, format })
}

fn analytic_record(m: u32, quantity: Quantity, t: Option<f64>, r: analytic::AnalyticResult) -> Record {
    Record { m, quantity: quantity.name(), t, value: r.value, std_error: r.est_abs_error, engine: "analytic", n_reps: None, seed: None }
}

fn mc_record(m: u32, quantity: Quantity, t: Option<f64>, e: mc::Estimate) -> Record {
    Record { m, quantity: quantity.name(), t, value: e.mean, std_error: e.std_error, engine: "mc", n_reps: Some(e.n_reps), seed: Some(e.seed) }
}

fn report(run: &Resolved, command: &'static str, with_quantity: bool) -> Report {
    Report {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config: run.config.clone(),
        selection: run.selection(with_quantity),
        records: Vec::new(),
        failures: Vec::new(),
        summaries: Vec::new(),
    }
}

pub fn estimate(run: &Resolved) -> Result<Report, CliError> {
    let mut rep = report(run, "estimate", true);
    let cost = run.config.cost;
    match run.quantity {
        Quantity::PFunctional if run.times.is_empty() => {
            return Err(CliError::Config("p-functional needs --t, --t-grid or t_grid".into()));
        }
        Quantity::NetRevenue if cost.is_none() => {
            return Err(CliError::Config("net-revenue needs a cost section".into()));
        }
        _ => {}
    }
    let q = run.quantity;
    for &m in &run.ms {
        let model = run.config.model_at(m)?;
        for engine in run.engines() {
            match (&engine, q) {
                (Engine::Analytic(cfg), Quantity::MeanTime) => {
                    rep.records.push(analytic_record(m, q, None, analytic::mean_functional_time(&model, cfg)?));
                }
                (Engine::Analytic(cfg), Quantity::PHack) => {
                    rep.records.push(analytic_record(m, q, None, analytic::hack_success_prob(&model, cfg)?));
                }
                (Engine::Analytic(cfg), Quantity::PFunctional) => {
                    let curve = analytic::functional_prob_curve(&model, cfg, &run.times)?;
                    for (r, &t) in curve.into_iter().zip(&run.times) {
                        rep.records.push(analytic_record(m, q, Some(t), r));
                    }
                }
                (Engine::Analytic(cfg), Quantity::NetRevenue) => {
                    let c = cost.expect("checked above");
                    let t = analytic::mean_functional_time(&model, cfg)?;
                    let value = econ::expected_net_revenue(&c, m, t.value)?;
                    let err = econ::net_revenue_error(&c, m, t.value, t.est_abs_error);
                    rep.records.push(analytic_record(m, q, None, analytic::AnalyticResult { value, est_abs_error: err, ..t }));
                }
                (Engine::MonteCarlo { time_plan, .. }, Quantity::MeanTime) => {
                    rep.records.push(mc_record(m, q, None, mc::estimate_mean_functional_time(&model, time_plan)?));
                }
                (Engine::MonteCarlo { time_plan, .. }, Quantity::PHack) => {
                    rep.records.push(mc_record(m, q, None, mc::estimate_cycle_success_prob(&model, time_plan)?));
                }
                (Engine::MonteCarlo { prob_plan, .. }, Quantity::PFunctional) => {
                    for &t in &run.times {
                        rep.records.push(mc_record(m, q, Some(t), mc::estimate_functional_prob(&model, t, prob_plan)?));
                    }
                }
                (Engine::MonteCarlo { time_plan, .. }, Quantity::NetRevenue) => {
                    let c = cost.expect("checked above");
                    let t = mc::estimate_mean_functional_time(&model, time_plan)?;
                    let value = econ::expected_net_revenue(&c, m, t.mean)?;
                    let err = econ::net_revenue_error(&c, m, t.mean, t.std_error);
                    rep.records.push(mc_record(m, q, None, mc::Estimate { mean: value, std_error: err, ..t }));
                }
            }
        }
    }
    Ok(rep)
}

/// Every quantity for every m, per engine, plus the revenue optimum when a
/// cost model is configured. Rows that fail are reported and skipped.
pub fn sweep(run: &Resolved) -> Result<Report, CliError> {
    let mut rep = report(run, "sweep", false);
    let (first, last) = (run.ms[0], *run.ms.last().expect("non-empty"));
    let base = run.config.model_at(first)?;
    let cost = run.config.cost;
    for engine in run.engines() {
        let tag = engine.tag();
        let table = econ::sweep(&base, first..=last, cost.as_ref(), &engine, None)?;
        for row in &table.rows {
            if let Some(msg) = &row.failure {
                rep.failures.push(Failure { m: row.m, engine: tag, message: msg.clone() });
                continue;
            }
            let rec = |quantity: Quantity, t: Option<f64>, v: econ::Measured| {
                let (n_reps, seed) = match &engine {
                    Engine::Analytic(_) => (None, None),
                    Engine::MonteCarlo { time_plan, prob_plan } => {
                        let plan = if quantity == Quantity::PFunctional { prob_plan } else { time_plan };
                        (Some(plan.n_reps), Some(plan.master_seed))
                    }
                };
                Record { m: row.m, quantity: quantity.name(), t, value: v.value, std_error: v.error, engine: tag, n_reps, seed }
            };
            if let Some(v) = row.hack_prob {
                rep.records.push(rec(Quantity::PHack, None, v));
            }
            if let Some(v) = row.mean_time {
                rep.records.push(rec(Quantity::MeanTime, None, v));
            }
            if let Some(v) = row.net_revenue {
                rep.records.push(rec(Quantity::NetRevenue, None, v));
            }
            if run.times.is_empty() {
                continue;
            }
            let model = run.config.model_at(row.m)?;
            let curve: Result<Vec<econ::Measured>, chainsim_core::Error> = match &engine {
                Engine::Analytic(cfg) => analytic::functional_prob_curve(&model, cfg, &run.times)
                    .map(|c| c.into_iter().map(|r| econ::Measured { value: r.value, error: r.est_abs_error }).collect()),
                Engine::MonteCarlo { prob_plan, .. } => run
                    .times
                    .iter()
                    .map(|&t| {
                        mc::estimate_functional_prob(&model, t, prob_plan)
                            .map(|e| econ::Measured { value: e.mean, error: e.std_error })
                    })
                    .collect(),
            };
            match curve {
                Ok(values) => {
                    for (v, &t) in values.into_iter().zip(&run.times) {
                        rep.records.push(rec(Quantity::PFunctional, Some(t), v));
                    }
                }
                Err(e) => rep.failures.push(Failure { m: row.m, engine: tag, message: e.to_string() }),
            }
        }
        if cost.is_some() {
            rep.summaries.push(summary(tag, &table));
        }
    }
    if rep.records.is_empty() && !rep.failures.is_empty() {
        let first = &rep.failures[0];
        return Err(CliError::Numerical(format!("every row failed; m={}: {}", first.m, first.message)));
    }
    Ok(rep)
}

fn summary(engine: &'static str, table: &SweepTable) -> Summary {
    Summary {
        engine,
        argmax_m: table.argmax_m,
        max: table.max_value,
        flat_set: table.flat_set.clone(),
        no_interior_optimum: table.no_interior_optimum,
    }
}

/// Fewest replications for which the engine cross-checks are run.
pub const MIN_CHECK_REPS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub verdict: Verdict,
    pub name: String,
    pub detail: String,
}

impl Check {
    pub fn line(&self) -> String {
        let v = match self.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Skipped => "SKIPPED",
        };
        format!("{v} {}: {}", self.name, self.detail)
    }
}

/// `next − prev` must exceed the summed errors for every consecutive pair.
fn monotone_check(name: String, values: &[(u32, f64, f64)], increasing: bool) -> Check {
    if values.len() < 2 {
        return Check { verdict: Verdict::Skipped, name, detail: "needs at least two thresholds".into() };
    }
    let mut worst: Option<(u32, f64, f64)> = None;
    for w in values.windows(2) {
        let gap = if increasing { w[1].1 - w[0].1 } else { w[0].1 - w[1].1 };
        let err = w[0].2 + w[1].2;
        let slack = gap - err;
        if worst.is_none_or(|(_, s, _)| slack < s) {
            worst = Some((w[1].0, slack, err));
        }
    }
    let (m, slack, err) = worst.expect("at least one pair");
    let verdict = if slack > 0.0 { Verdict::Pass } else { Verdict::Fail };
    Check { verdict, name, detail: format!("smallest margin {slack:.3e} above error {err:.3e} at m={m}") }
}

/// Analytic monotonicity in m and, when budgets allow, Monte Carlo agreement.
pub fn validate(run: &Resolved) -> Result<Vec<Check>, CliError> {
    let cfg = &run.config.quadrature;
    let mut checks = Vec::new();
    let span = format!("m={}..{}", run.ms[0], run.ms.last().expect("non-empty"));
    let mut p = Vec::new();
    let mut t_mean = Vec::new();
    for &m in &run.ms {
        let model = run.config.model_at(m)?;
        let mom = analytic::conditional_cycle_moments(&model, cfg)?;
        p.push((m, mom.hack_prob.value, mom.hack_prob.est_abs_error));
        let t = analytic::mean_time_from_moments(&mom);
        t_mean.push((m, t.value, t.est_abs_error));
    }
    checks.push(monotone_check(format!("p_m decreasing over {span}"), &p, false));
    checks.push(monotone_check(format!("E[T_m] increasing over {span}"), &t_mean, true));
    let times = if run.times.is_empty() { vec![1.0, 3.0, 5.0] } else { run.times.clone() };
    let mut hacked: Vec<Vec<(u32, f64, f64)>> = vec![Vec::new(); times.len()];
    for &m in &run.ms {
        let curve = analytic::hack_prob_curve(&run.config.model_at(m)?, cfg, &times)?;
        for (k, r) in curve.into_iter().enumerate() {
            hacked[k].push((m, r.value, r.est_abs_error));
        }
    }
    for (k, t) in times.iter().enumerate() {
        if *t == 0.0 {
            continue;
        }
        // P_m(t) increasing is checked on 1 − P_m(t), which keeps relative precision.
        checks.push(monotone_check(format!("P_m({t}) increasing over {span}"), &hacked[k], false));
    }

    let mut probe: Vec<u32> = vec![run.ms[0], run.ms[run.ms.len() / 2], *run.ms.last().expect("non-empty")];
    probe.dedup();
    for m in probe {
        let name = format!("engines agree on E[T_{m}]");
        let plan = run.time_plan();
        if !run.config.engine.mc() {
            checks.push(Check { verdict: Verdict::Skipped, name, detail: "Monte Carlo engine not selected".into() });
            continue;
        }
        if plan.n_reps < MIN_CHECK_REPS {
            checks.push(Check {
                verdict: Verdict::Skipped,
                name,
                detail: format!("underpowered: {} replications < {MIN_CHECK_REPS}", plan.n_reps),
            });
            continue;
        }
        let model = run.config.model_at(m)?;
        let exact = analytic::mean_functional_time(&model, cfg)?;
        let est = mc::estimate_mean_functional_time(&model, &plan)?;
        checks.push(agreement(name, exact, est));
        let t = times[times.len() - 1];
        let name = format!("engines agree on P_{m}({t})");
        let prob_plan = run.prob_plan();
        if prob_plan.n_reps < MIN_CHECK_REPS {
            checks.push(Check {
                verdict: Verdict::Skipped,
                name,
                detail: format!("underpowered: {} replications < {MIN_CHECK_REPS}", prob_plan.n_reps),
            });
            continue;
        }
        let exact = analytic::functional_prob(&model, cfg, t)?;
        let est = mc::estimate_functional_prob(&model, t, &prob_plan)?;
        checks.push(agreement(name, exact, est));
    }
    Ok(checks)
}

fn agreement(name: String, exact: analytic::AnalyticResult, est: mc::Estimate) -> Check {
    let diff = (est.mean - exact.value).abs();
    let allowed = 3.0 * est.std_error + exact.est_abs_error;
    Check {
        verdict: if diff <= allowed { Verdict::Pass } else { Verdict::Fail },
        name,
        detail: format!(
            "analytic {:.6} vs mc {:.6} ± {:.2e}: |diff| {diff:.3e} within {allowed:.3e}",
            exact.value, est.mean, est.std_error
        ),
    }
}

/// Header lines and one line per check, as written by `validate`.
pub fn render_checks(run: &Resolved, checks: &[Check]) -> String {
    let cfg = serde_json::to_string(&run.config).expect("config serializes");
    let mut out = format!("# chainsim {} validate\n# config {cfg}\n", env!("CARGO_PKG_VERSION"));
    for c in checks {
        out.push_str(&c.line());
        out.push('\n');
    }
    out
}

/// Writes `text` to `path` (through a temporary file) or to stdout.
pub fn emit(text: &str, path: Option<&PathBuf>) -> Result<(), CliError> {
    use std::io::Write;
    match path {
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string())),
        Some(p) => {
            let tmp = p.with_extension("partial");
            std::fs::write(&tmp, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", tmp.display())))?;
            std::fs::rename(&tmp, p).map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display())))
        }
    }
}

/// Runs a parsed command line; returns the process exit code.
pub fn run(cli: Cli, env_seed: Option<&str>) -> Result<i32, CliError> {
    match cli.command {
        Command::Estimate(args) => {
            let run = resolve(&args, env_seed, false)?;
            let text = estimate(&run)?.render(run.format)?;
            emit(&text, run.out.as_ref())?;
            Ok(0)
        }
        Command::Sweep(args) => {
            let run = resolve(&args, env_seed, true)?;
            let text = sweep(&run)?.render(run.format)?;
            emit(&text, run.out.as_ref())?;
            Ok(0)
        }
        Command::Validate(args) => {
            let run = resolve(&args, env_seed, true)?;
            let checks = validate(&run)?;
            emit(&render_checks(&run, &checks), run.out.as_ref())?;
            Ok(if checks.iter().any(|c| c.verdict == Verdict::Fail) { 1 } else { 0 })
        }
    }
}
