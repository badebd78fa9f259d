//! Expected net revenue per unit time and sweeps over the breach threshold m.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::analytic::{self, QuadratureConfig};
use crate::error::{Error, Result};
use crate::mc::{self, ReplicationPlan};
use crate::model::AttackModel;

/// c·m^k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerTerm {
    pub coeff: f64,
    pub exp: f64,
}

impl PowerTerm {
    pub fn eval(&self, m: u32) -> f64 {
        self.coeff * (m as f64).powf(self.exp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    /// Revenue R per unit time.
    pub revenue: f64,
    /// C₁(m), paid at every hack.
    pub reset_cost: PowerTerm,
    /// C₂(m), paid per unit time.
    pub run_cost: PowerTerm,
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.revenue, self.reset_cost.coeff, self.reset_cost.exp, self.run_cost.coeff, self.run_cost.exp]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.revenue < 0.0 || self.reset_cost.coeff < 0.0 || self.run_cost.coeff < 0.0 {
            return Err(Error::config("cost model needs finite values with revenue and coefficients >= 0"));
        }
        Ok(())
    }
}

/// E_m[NR] = R − C₂(m) − C₁(m)/E[T_m].
pub fn expected_net_revenue(cost: &CostModel, m: u32, mean_time: f64) -> Result<f64> {
    if !(mean_time > 0.0) {
        return Err(Error::domain(format!("mean functional time must be positive, got {mean_time}")));
    }
    Ok(cost.revenue - cost.run_cost.eval(m) - cost.reset_cost.eval(m) / mean_time)
}

/// Delta-method uncertainty of E_m[NR] given the uncertainty of E[T_m].
pub fn net_revenue_error(cost: &CostModel, m: u32, mean_time: f64, mean_time_error: f64) -> f64 {
    cost.reset_cost.eval(m) * mean_time_error / (mean_time * mean_time)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Engine {
    Analytic(QuadratureConfig),
    MonteCarlo { time_plan: ReplicationPlan, prob_plan: ReplicationPlan },
}

impl Engine {
    pub fn tag(&self) -> &'static str {
        match self {
            Engine::Analytic(_) => "analytic",
            Engine::MonteCarlo { .. } => "mc",
        }
    }
}

/// A value with its uncertainty: standard error for Monte Carlo, estimated
/// absolute error for the analytic engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: u32,
    pub engine: String,
    pub hack_prob: Option<Measured>,
    pub mean_time: Option<Measured>,
    pub functional_prob: Option<Measured>,
    pub net_revenue: Option<Measured>,
    /// Set when the engine failed for this m; the other fields are then empty.
    pub failure: Option<String>,
}

impl SweepRow {
    fn failed(m: u32, engine: &Engine, err: &Error) -> Self {
        Self {
            m,
            engine: engine.tag().into(),
            hack_prob: None,
            mean_time: None,
            functional_prob: None,
            net_revenue: None,
            failure: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub t_eval: Option<f64>,
    /// Smallest m attaining the largest E_m[NR].
    pub argmax_m: Option<u32>,
    pub max_value: Option<f64>,
    /// Every m whose E_m[NR] is within one combined uncertainty of the maximum.
    pub flat_set: Vec<u32>,
    /// No step down beyond noise anywhere, and the last row is within noise of the maximum.
    pub no_interior_optimum: bool,
}

/// Step drops larger than this many combined uncertainties count as real.
pub const NOISE_MULTIPLE: f64 = 3.0;

impl SweepTable {
    pub fn from_rows(mut rows: Vec<SweepRow>, t_eval: Option<f64>) -> Self {
        rows.sort_by_key(|r| r.m);
        let revenue: Vec<(u32, Measured)> = rows.iter().filter_map(|r| r.net_revenue.map(|v| (r.m, v))).collect();
        let best = argmax(&revenue);
        let (argmax_m, max_value, flat_set, no_interior_optimum) = match best {
            None => (None, None, Vec::new(), false),
            Some((m_star, top)) => {
                let combined = |a: &Measured| (a.error * a.error + top.error * top.error).sqrt();
                let flat = revenue.iter().filter(|(_, v)| top.value - v.value <= combined(v)).map(|(m, _)| *m).collect();
                let steps_ok = revenue.windows(2).all(|w| {
                    let (a, b) = (w[0].1, w[1].1);
                    a.value - b.value <= NOISE_MULTIPLE * (a.error * a.error + b.error * b.error).sqrt()
                });
                let last = revenue.last().expect("non-empty").1;
                let tail_ok = top.value - last.value <= NOISE_MULTIPLE * combined(&last);
                (Some(m_star), Some(top.value), flat, steps_ok && tail_ok)
            }
        };
        Self { rows, t_eval, argmax_m, max_value, flat_set, no_interior_optimum }
    }

    /// The argmax implied by the stored rows.
    pub fn recompute_argmax(&self) -> Option<u32> {
        let revenue: Vec<(u32, Measured)> = self.rows.iter().filter_map(|r| r.net_revenue.map(|v| (r.m, v))).collect();
        argmax(&revenue).map(|(m, _)| m)
    }
}

// Ties keep the smaller m.
fn argmax(values: &[(u32, Measured)]) -> Option<(u32, Measured)> {
    values.iter().fold(None, |best, &(m, v)| match best {
        Some((_, b)) if b.value >= v.value => best,
        _ => Some((m, v)),
    })
}

/// Evaluates each m in `ms` with `engine`. Failing rows are kept and marked.
pub fn sweep(
    base: &AttackModel,
    ms: RangeInclusive<u32>,
    cost: Option<&CostModel>,
    engine: &Engine,
    t_eval: Option<f64>,
) -> Result<SweepTable> {
    if ms.is_empty() || *ms.start() == 0 {
        return Err(Error::config(format!("m range must be non-empty and start at 1 or more, got {ms:?}")));
    }
    if let Some(c) = cost {
        c.validate()?;
    }
    let rows = ms
        .map(|m| {
            let row = base.at_threshold(m).and_then(|model| evaluate_row(&model, cost, engine, t_eval));
            row.unwrap_or_else(|e| SweepRow::failed(m, engine, &e))
        })
        .collect();
    Ok(SweepTable::from_rows(rows, t_eval))
}

fn evaluate_row(model: &AttackModel, cost: Option<&CostModel>, engine: &Engine, t_eval: Option<f64>) -> Result<SweepRow> {
    let m = model.m();
    let (hack_prob, mean_time, functional_prob) = match engine {
        Engine::Analytic(cfg) => {
            let mom = analytic::conditional_cycle_moments(model, cfg)?;
            let mean = analytic::mean_time_from_moments(&mom);
            let functional = t_eval.map(|t| analytic::functional_prob(model, cfg, t)).transpose()?;
            let m = |r: analytic::AnalyticResult| Measured { value: r.value, error: r.est_abs_error };
            (m(mom.hack_prob), m(mean), functional.map(m))
        }
        Engine::MonteCarlo { time_plan, prob_plan } => {
            let passages = mc::sample_passages(model, time_plan)?;
            let summary = mc::summarize_passages(&passages, time_plan.master_seed);
            let functional = t_eval.map(|t| mc::estimate_functional_prob(model, t, prob_plan)).transpose()?;
            let m = |e: mc::Estimate| Measured { value: e.mean, error: e.std_error };
            (m(summary.cycle_success), m(summary.time), functional.map(m))
        }
    };
    let net_revenue = cost
        .map(|c| {
            expected_net_revenue(c, m, mean_time.value)
                .map(|v| Measured { value: v, error: net_revenue_error(c, m, mean_time.value, mean_time.error) })
        })
        .transpose()?;
    Ok(SweepRow {
        m,
        engine: engine.tag().into(),
        hack_prob: Some(hack_prob),
        mean_time: Some(mean_time),
        functional_prob,
        net_revenue,
        failure: None,
    })
}
