//! Numerical evaluation of the per-cycle hack probability, the mean time to
//! hack and the functional probability P_m(t).
//!
//! With S = X₁ + … + X_m and Y the detecting time:
//!
//! * p_m = P(S < Y) = ∫ F_S f_Y, and 1 − p_m = ∫ (1 − F_S) f_Y;
//! * E[T_m] = (E[Y·1{Y<S}] + E[S·1{S<Y}]) / p_m;
//! * Q(t) = 1 − P_m(t) solves Q = H + Q ∗ dR, where R(u) = P(reset cycle
//!   shorter than u) and H(u) = P(hacked cycle shorter than u). It is solved
//!   as Q = H + U ∗ dH with U = R + U ∗ dR the renewal function of resets,
//!   so the grid recursion only involves the kernel R.

use serde::{Deserialize, Serialize};

use crate::dist::{DistributionSpec, Family, SumDistribution};
use crate::error::{Error, Result};
use crate::model::AttackModel;
use crate::quad::{integrate_to_infinity_with_breaks, integrate_with_breaks, QuadOptions, Quadrature};

/// Tolerances and grid settings for the analytic engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Improper integrals are split at this quantile of the detecting time;
    /// the remainder is covered by doubling panels plus a tail bound.
    pub truncation_quantile: f64,
    /// Renewal-grid step; `None` uses `horizon / grid_points`.
    pub grid_step: Option<f64>,
    pub grid_points: usize,
    /// Largest accepted change of P_m(t) between step h and h/2.
    pub grid_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-8,
            rel_tol: 1e-8,
            truncation_quantile: 1.0 - 1e-9,
            grid_step: None,
            grid_points: 4000,
            grid_tol: 1e-3,
            max_subdivisions: 4000,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive, got {v}")))
            }
        };
        pos("abs_tol", self.abs_tol)?;
        pos("rel_tol", self.rel_tol)?;
        pos("grid_tol", self.grid_tol)?;
        if let Some(step) = self.grid_step {
            pos("grid_step", step)?;
        }
        if !(self.truncation_quantile > 0.0 && self.truncation_quantile < 1.0) {
            return Err(Error::config(format!(
                "truncation_quantile must lie in (0, 1), got {}",
                self.truncation_quantile
            )));
        }
        if self.grid_points < 2 || self.max_subdivisions < 1 {
            return Err(Error::config("grid_points must be >= 2 and max_subdivisions >= 1"));
        }
        Ok(())
    }

    // Absolute floor near zero: the integrals here can be astronomically
    // small and are then controlled by rel_tol alone.
    fn quad_options(&self) -> QuadOptions {
        QuadOptions { abs_tol: 1e-280, rel_tol: self.rel_tol, max_subdivisions: self.max_subdivisions }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    AdaptiveQuadrature,
    VolterraGrid,
    ClosedForm,
    /// Not computed: follows from p_m > 0.
    Theorem,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticResult {
    pub value: f64,
    pub est_abs_error: f64,
    pub method: Method,
    /// Set when a probability left [−tol, 1 + tol] and was clamped.
    pub clamped: bool,
}

impl AnalyticResult {
    fn new(value: f64, est_abs_error: f64, method: Method) -> Self {
        Self { value, est_abs_error, method, clamped: false }
    }

    fn probability(value: f64, est_abs_error: f64, method: Method, tol: f64) -> Self {
        let clamped = value < -tol || value > 1.0 + tol;
        Self { value: value.clamp(0.0, 1.0), est_abs_error, method, clamped }
    }
}

fn check_accuracy(what: &str, q: Quadrature, cfg: &QuadratureConfig) -> Result<Quadrature> {
    if q.abs_error <= cfg.abs_tol.max(cfg.rel_tol * q.value.abs()) {
        Ok(q)
    } else {
        Err(Error::Numerical { message: format!("{what} did not reach tolerance"), achieved: q.abs_error })
    }
}

/// The integrands shared by the analytic operations for one model.
struct CycleIntegrals<'a> {
    sum: SumDistribution,
    detect: &'a DistributionSpec,
    split: f64,
    breaks: Vec<f64>,
    opts: QuadOptions,
}

impl<'a> CycleIntegrals<'a> {
    fn new(model: &'a AttackModel, cfg: &QuadratureConfig) -> Result<Self> {
        cfg.validate()?;
        let detect = model.detect_time();
        let sum = model.hack_sum()?;
        // Quantiles of both variables mark where the integrands live.
        let levels = [1e-9, 1e-6, 1e-3, 0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 0.999, 1.0 - 1e-6];
        let mut breaks: Vec<f64> = levels.iter().flat_map(|&p| [detect.quantile(p), sum.quantile(p)]).collect();
        breaks.retain(|x| x.is_finite() && *x > 0.0);
        Ok(Self { sum, detect, split: detect.quantile(cfg.truncation_quantile), breaks, opts: cfg.quad_options() })
    }

    /// p_m = ∫ F_S(s) f_Y(s) ds.
    fn hack_prob(&self) -> Result<Quadrature> {
        integrate_to_infinity_with_breaks(
            |s| self.sum.cdf(s) * self.detect.pdf(s),
            0.0,
            self.split,
            &self.breaks,
            |b| self.detect.sf(b),
            &self.opts,
        )
    }

    /// 1 − p_m = ∫ (1 − F_S(y)) f_Y(y) dy, computed directly.
    fn reset_prob(&self) -> Result<Quadrature> {
        integrate_to_infinity_with_breaks(
            |y| self.sum.sf(y) * self.detect.pdf(y),
            0.0,
            self.split,
            &self.breaks,
            |b| self.detect.sf(b) * self.sum.sf(b),
            &self.opts,
        )
    }

    /// E[Y·1{Y < S}] = ∫ y f_Y(y) (1 − F_S(y)) dy.
    fn reset_partial_mean(&self) -> Result<Quadrature> {
        integrate_to_infinity_with_breaks(
            |y| y * self.detect.pdf(y) * self.sum.sf(y),
            0.0,
            self.split,
            &self.breaks,
            |b| self.detect.partial_mean_above(b) * self.sum.sf(b),
            &self.opts,
        )
    }

    /// E[Y·1{Y ≥ S}] = ∫ y f_Y(y) F_S(y) dy.
    fn detect_after_hack_mean(&self) -> Result<Quadrature> {
        integrate_to_infinity_with_breaks(
            |y| y * self.detect.pdf(y) * self.sum.cdf(y),
            0.0,
            self.split,
            &self.breaks,
            |b| self.detect.partial_mean_above(b),
            &self.opts,
        )
    }

    /// E[S·1{S < Y}] = ∫ s f_S(s) (1 − F_Y(s)) ds.
    fn hack_partial_mean(&self) -> Result<Quadrature> {
        integrate_to_infinity_with_breaks(
            |s| s * self.sum.pdf(s) * self.detect.sf(s),
            0.0,
            self.split,
            &self.breaks,
            |b| self.detect.sf(b) * self.sum.partial_mean_above(b),
            &self.opts,
        )
    }
}

/// p_m with the closed form (λ/(λ+δ))^m for exponential hacking and
/// detecting times and adaptive quadrature otherwise.
pub fn hack_success_prob(model: &AttackModel, cfg: &QuadratureConfig) -> Result<AnalyticResult> {
    if let (Family::Exponential { rate: lambda }, Family::Exponential { rate: delta }) =
        (model.hack_time().family(), model.detect_time().family())
    {
        cfg.validate()?;
        let p = (lambda / (lambda + delta)).powi(model.m() as i32);
        return Ok(AnalyticResult::new(p, p * 4.0 * f64::EPSILON * model.m() as f64, Method::ClosedForm));
    }
    hack_success_prob_by_quadrature(model, cfg)
}

/// p_m = ∫₀^∞ F_X^{(m)}(s) f_Y(s) ds by adaptive quadrature, for every family.
pub fn hack_success_prob_by_quadrature(model: &AttackModel, cfg: &QuadratureConfig) -> Result<AnalyticResult> {
    let ints = CycleIntegrals::new(model, cfg)?;
    let p = check_accuracy("p_m quadrature", ints.hack_prob()?, cfg)?;
    Ok(AnalyticResult::probability(p.value, p.abs_error, Method::AdaptiveQuadrature, cfg.abs_tol))
}

/// Conditional cycle durations and the pieces they are built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleMoments {
    pub hack_prob: AnalyticResult,
    pub reset_prob: AnalyticResult,
    /// E[Y·1{Y < S}].
    pub reset_partial_mean: AnalyticResult,
    /// E[S·1{S < Y}].
    pub hack_partial_mean: AnalyticResult,
    /// E[Y·1{Y ≥ S}], for the check E[Y·1{Y<S}] + E[Y·1{Y≥S}] = E[Y].
    pub detect_after_hack_mean: AnalyticResult,
    /// E[Y | Y < S], the mean reset-cycle length.
    pub reset_mean: AnalyticResult,
    /// E[S | S < Y], the mean length of the successful cycle.
    pub hack_mean: AnalyticResult,
}

impl CycleMoments {
    /// |E[Y·1{Y<S}] + E[Y·1{Y≥S}] − E[Y]| against its error budget.
    pub fn detect_mean_residual(&self, detect_mean: f64) -> (f64, f64) {
        let total = self.reset_partial_mean.value + self.detect_after_hack_mean.value;
        let budget = self.reset_partial_mean.est_abs_error + self.detect_after_hack_mean.est_abs_error;
        ((total - detect_mean).abs(), budget)
    }
}

pub fn conditional_cycle_moments(model: &AttackModel, cfg: &QuadratureConfig) -> Result<CycleMoments> {
    let ints = CycleIntegrals::new(model, cfg)?;
    let p = check_accuracy("p_m quadrature", ints.hack_prob()?, cfg)?;
    if p.value < 1e-300 {
        return Err(Error::Underflow { p: p.value });
    }
    let q = check_accuracy("1 - p_m quadrature", ints.reset_prob()?, cfg)?;
    let a = check_accuracy("E[Y 1{Y<S}]", ints.reset_partial_mean()?, cfg)?;
    let b = check_accuracy("E[S 1{S<Y}]", ints.hack_partial_mean()?, cfg)?;
    let c = check_accuracy("E[Y 1{Y>=S}]", ints.detect_after_hack_mean()?, cfg)?;
    let ratio = |num: Quadrature, den: Quadrature| {
        let v = num.value / den.value;
        let e = num.abs_error / den.value + v * den.abs_error / den.value;
        AnalyticResult::new(v, e, Method::AdaptiveQuadrature)
    };
    let quad = |q: Quadrature| AnalyticResult::new(q.value, q.abs_error, Method::AdaptiveQuadrature);
    Ok(CycleMoments {
        hack_prob: AnalyticResult::probability(p.value, p.abs_error, Method::AdaptiveQuadrature, cfg.abs_tol),
        reset_prob: AnalyticResult::probability(q.value, q.abs_error, Method::AdaptiveQuadrature, cfg.abs_tol),
        reset_partial_mean: quad(a),
        hack_partial_mean: quad(b),
        detect_after_hack_mean: quad(c),
        reset_mean: ratio(a, q),
        hack_mean: ratio(b, p),
    })
}

/// E[T_m] = ((1 − p_m)/p_m)·E[Y | Y < S] + E[S | S < Y], counting the
/// geometric number of resets as failures before the first success.
pub fn mean_functional_time(model: &AttackModel, cfg: &QuadratureConfig) -> Result<AnalyticResult> {
    let mom = conditional_cycle_moments(model, cfg)?;
    Ok(mean_time_from_moments(&mom))
}

/// E[T_m] from already computed cycle moments.
pub fn mean_time_from_moments(mom: &CycleMoments) -> AnalyticResult {
    let p = mom.hack_prob;
    let (a, b) = (mom.reset_partial_mean, mom.hack_partial_mean);
    let value = (a.value + b.value) / p.value;
    let err = (a.est_abs_error + b.est_abs_error) / p.value + value * p.est_abs_error / p.value;
    AnalyticResult::new(value, err, Method::AdaptiveQuadrature)
}

/// CDF of a reset cycle's length, F_{Y₁}(s) = ∫₀^s (1 − F_S) f_Y / (1 − p_m).
pub fn conditional_detect_cdf(model: &AttackModel, cfg: &QuadratureConfig, s: f64) -> Result<AnalyticResult> {
    if !(s >= 0.0) {
        return Err(Error::domain(format!("time must be non-negative, got {s}")));
    }
    if s == 0.0 {
        return Ok(AnalyticResult::new(0.0, 0.0, Method::AdaptiveQuadrature));
    }
    let ints = CycleIntegrals::new(model, cfg)?;
    let q = check_accuracy("1 - p_m quadrature", ints.reset_prob()?, cfg)?;
    let part = if s.is_infinite() {
        q
    } else {
        integrate_with_breaks(|y| ints.sum.sf(y) * ints.detect.pdf(y), 0.0, s, &ints.breaks, &ints.opts)?
    };
    let v = part.value / q.value;
    let e = part.abs_error / q.value + v * q.abs_error / q.value;
    Ok(AnalyticResult::probability(v, e, Method::AdaptiveQuadrature, cfg.abs_tol))
}

/// Reset-renewal function and hack-cycle CDF on a uniform grid over [0, horizon].
struct RenewalGrid {
    step: f64,
    /// H at the nodes: P(a cycle ends hacked within u).
    hacked: Vec<f64>,
    /// U at the nodes: expected number of resets in [0, u].
    renewals: Vec<f64>,
    /// Running sums of the cell quadrature errors for H and R.
    hack_err: Vec<f64>,
    reset_err: Vec<f64>,
}

/// Per-cell integrals ∫ F_S f_Y and ∫ (1 − F_S) f_Y on `n` cells of [0, horizon].
struct CellMasses {
    hack_cells: Vec<f64>,
    reset_cells: Vec<f64>,
    edge: Vec<(f64, f64, f64)>, // (F_S, 1 − F_S, 1 − F_Y) at each node
    hack_err: Vec<f64>,
    reset_err: Vec<f64>,
}

impl CellMasses {
    fn compute(ints: &CycleIntegrals<'_>, horizon: f64, n: usize) -> Result<Self> {
        let step = horizon / n as f64;
        let mut hack_cells = Vec::with_capacity(n);
        let mut reset_cells = Vec::with_capacity(n);
        let mut edge = Vec::with_capacity(n + 1);
        let (mut hack_err, mut reset_err) = (Vec::with_capacity(n), Vec::with_capacity(n));
        edge.push((0.0, 1.0, 1.0));
        for k in 1..=n {
            let (a, b) = ((k - 1) as f64 * step, if k == n { horizon } else { k as f64 * step });
            let hk = integrate_with_breaks(|s| ints.sum.cdf(s) * ints.detect.pdf(s), a, b, &[], &ints.opts)?;
            let rk = integrate_with_breaks(|s| ints.sum.sf(s) * ints.detect.pdf(s), a, b, &[], &ints.opts)?;
            hack_err.push(hk.abs_error);
            reset_err.push(rk.abs_error);
            hack_cells.push(hk.value);
            reset_cells.push(rk.value);
            let (fs, ss) = ints.sum.cdf_sf(b);
            edge.push((fs, ss, ints.detect.sf(b)));
        }
        Ok(Self { hack_cells, reset_cells, edge, hack_err, reset_err })
    }

    /// Merges cell pairs: the same quantities on the grid with step 2h.
    fn coarsen(&self) -> Self {
        let pairs = |v: &[f64]| v.chunks(2).map(|c| c.iter().sum()).collect::<Vec<f64>>();
        Self {
            hack_cells: pairs(&self.hack_cells),
            reset_cells: pairs(&self.reset_cells),
            edge: self.edge.iter().step_by(2).copied().collect(),
            hack_err: pairs(&self.hack_err),
            reset_err: pairs(&self.reset_err),
        }
    }
}

impl RenewalGrid {
    fn solve(cells: &CellMasses, horizon: f64) -> Self {
        let n = cells.reset_cells.len();
        let step = horizon / n as f64;
        // H(x_k) = F_S(x_k)(1 − F_Y(x_k)) + ∫₀^{x_k} F_S f_Y
        let mut hacked = Vec::with_capacity(n + 1);
        hacked.push(0.0);
        let mut j = 0.0;
        for k in 1..=n {
            j += cells.hack_cells[k - 1];
            let (fs, _, sy) = cells.edge[k];
            hacked.push(fs * sy + j);
        }
        // Trapezoidal Stieltjes rule for U = R + U ∗ dR, forward substitution.
        let dr = &cells.reset_cells;
        let mut renewals = vec![0.0; n + 1];
        let mut r = 0.0;
        let diag = 1.0 - 0.5 * dr[0];
        for i in 1..=n {
            r += dr[i - 1];
            let mut acc = r + 0.5 * renewals[i - 1] * dr[0];
            for jj in 2..=i {
                acc += 0.5 * (renewals[i - jj] + renewals[i - jj + 1]) * dr[jj - 1];
            }
            renewals[i] = acc / diag;
        }
        let running = |v: &[f64]| {
            std::iter::once(0.0)
                .chain(v.iter().scan(0.0, |acc, e| {
                    *acc += e;
                    Some(*acc)
                }))
                .collect::<Vec<f64>>()
        };
        Self { step, hacked, renewals, hack_err: running(&cells.hack_err), reset_err: running(&cells.reset_err) }
    }

    /// Q(x_k) = H(x_k) + ∫₀^{x_k} U(x_k − v) dH(v).
    fn hack_prob_at_node(&self, k: usize) -> f64 {
        let mut q = self.hacked[k];
        for j in 1..=k {
            let dh = self.hacked[j] - self.hacked[j - 1];
            q += 0.5 * (self.renewals[k - j + 1] + self.renewals[k - j]) * dh;
        }
        q
    }

    /// First-order bound on the effect of cell quadrature errors on Q(x_k).
    /// An error in H enters scaled by 1 + U; one in R moves U by up to
    /// (1 + U)² times as much, which then enters scaled by H.
    fn quad_error_at(&self, k: usize) -> f64 {
        let g = 1.0 + self.renewals[k];
        self.hack_err[k] * g + self.hacked[k] * self.reset_err[k] * g * g
    }

    fn node_of(&self, t: f64) -> usize {
        let k = (t / self.step).round();
        k.clamp(0.0, (self.hacked.len() - 1) as f64) as usize
    }
}

/// Q(t) = 1 − P_m(t) at each requested time, with the grid-refinement drift
/// as the error estimate. Times are snapped to the fine grid.
pub fn hack_prob_curve(model: &AttackModel, cfg: &QuadratureConfig, times: &[f64]) -> Result<Vec<AnalyticResult>> {
    for &t in times {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::domain(format!("time must be finite and non-negative, got {t}")));
        }
    }
    let horizon = times.iter().copied().fold(0.0, f64::max);
    if horizon == 0.0 {
        return Ok(times.iter().map(|_| AnalyticResult::new(0.0, 0.0, Method::VolterraGrid)).collect());
    }
    let ints = CycleIntegrals::new(model, cfg)?;
    let step = cfg.grid_step.unwrap_or(horizon / cfg.grid_points as f64);
    let coarse_cells = (horizon / step).ceil().max(1.0) as usize;
    // The fine grid halves the step; the coarse one is recovered by pairing cells.
    let fine = CellMasses::compute(&ints, horizon, 2 * coarse_cells)?;
    let coarse = fine.coarsen();
    let fine_grid = RenewalGrid::solve(&fine, horizon);
    let coarse_grid = RenewalGrid::solve(&coarse, horizon);
    times
        .iter()
        .map(|&t| {
            if t == 0.0 {
                return Ok(AnalyticResult::new(0.0, 0.0, Method::VolterraGrid));
            }
            let kf = fine_grid.node_of(t);
            let kc = coarse_grid.node_of(t);
            let qf = fine_grid.hack_prob_at_node(kf);
            let qc = coarse_grid.hack_prob_at_node(kc);
            let drift = (qf - qc).abs();
            if drift > cfg.grid_tol {
                return Err(Error::Resolution {
                    message: format!("P_m({t}) moved by {drift:e} between steps {} and {}", coarse_grid.step, fine_grid.step),
                    suggested_step: fine_grid.step / 2.0,
                });
            }
            Ok(AnalyticResult::probability(qf, drift + fine_grid.quad_error_at(kf), Method::VolterraGrid, cfg.grid_tol))
        })
        .collect()
}

/// Probability the chain has been hacked by time `t`, 1 − P_m(t), evaluated
/// without cancellation when it is tiny.
pub fn hack_prob_by(model: &AttackModel, cfg: &QuadratureConfig, t: f64) -> Result<AnalyticResult> {
    Ok(hack_prob_curve(model, cfg, &[t])?.remove(0))
}

/// P_m(t), the probability the chain is still functional at time `t`.
pub fn functional_prob(model: &AttackModel, cfg: &QuadratureConfig, t: f64) -> Result<AnalyticResult> {
    Ok(complement(hack_prob_by(model, cfg, t)?))
}

/// P_m at several times from one renewal solve over [0, max(times)].
pub fn functional_prob_curve(model: &AttackModel, cfg: &QuadratureConfig, times: &[f64]) -> Result<Vec<AnalyticResult>> {
    Ok(hack_prob_curve(model, cfg, times)?.into_iter().map(complement).collect())
}

fn complement(q: AnalyticResult) -> AnalyticResult {
    AnalyticResult { value: 1.0 - q.value, ..q }
}

/// P_m(∞) = 0 whenever p_m > 0, which holds for every model with densities.
pub fn limiting_functional_prob(_model: &AttackModel) -> AnalyticResult {
    AnalyticResult::new(0.0, 0.0, Method::Theorem)
}
