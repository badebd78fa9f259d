//! Positive continuous distributions for hacking and detecting times, and
//! the distribution of an m-fold sum of i.i.d. hacking times.

use std::sync::Arc;

use rand::Rng;
use rand_distr::Distribution as _;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::gk15;
use crate::special::{inc_gamma_pair, ln_gamma, reg_lower_inc_gamma, reg_upper_inc_gamma};

/// Minimum last CDF value a tabulated grid must reach.
pub const TABULATED_MASS_FLOOR: f64 = 1.0 - 1e-6;
/// Probability mass the gridded convolution may leave beyond its truncation point.
pub const SUM_TRUNCATION_MASS: f64 = 1e-8;
/// Grid points spanning the base distribution's 0.999 quantile.
pub const GRID_POINTS_PER_Q999: usize = 2000;
/// Largest FFT length the gridded convolution will allocate.
pub const MAX_GRID_LEN: usize = 1 << 23;

/// The parametric family of a [`DistributionSpec`].
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
    /// Density (β/α)(x/α)^{β−1} exp(−(x/α)^β) with α = `scale`, β = `shape`.
    Weibull { scale: f64, shape: f64 },
    Tabulated(Arc<TabulatedCdf>),
}

/// A piecewise-linear CDF through `(x, F(x))` knots starting at `(0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedCdf {
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl TabulatedCdf {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::config("tabulated distribution needs at least two points"));
        }
        if points[0] != (0.0, 0.0) {
            return Err(Error::config("tabulated distribution must start at (0, 0)"));
        }
        for w in points.windows(2) {
            let ((x0, c0), (x1, c1)) = (w[0], w[1]);
            if !(x1 > x0) || !x1.is_finite() {
                return Err(Error::config(format!("tabulated x values must strictly increase ({x0} then {x1})")));
            }
            if !(c1 >= c0) || c1 > 1.0 {
                return Err(Error::config(format!("tabulated CDF must be non-decreasing in [0, 1] ({c0} then {c1})")));
            }
        }
        let last = points[points.len() - 1].1;
        if last < TABULATED_MASS_FLOOR {
            return Err(Error::config(format!("tabulated CDF ends at {last}, below {TABULATED_MASS_FLOOR}")));
        }
        Ok(Self { xs: points.iter().map(|p| p.0).collect(), cdf: points.iter().map(|p| p.1).collect() })
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.cdf.iter().copied())
    }

    fn upper(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    /// Index `i` with `xs[i] <= x < xs[i + 1]`.
    fn segment(&self, x: f64) -> usize {
        self.xs.partition_point(|&k| k <= x).saturating_sub(1).min(self.xs.len() - 2)
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= self.upper() {
            return 1.0;
        }
        let i = self.segment(x);
        let w = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.cdf[i] + w * (self.cdf[i + 1] - self.cdf[i])
    }

    fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 || x >= self.upper() {
            return 0.0;
        }
        let i = self.segment(x);
        (self.cdf[i + 1] - self.cdf[i]) / (self.xs[i + 1] - self.xs[i])
    }

    fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        let i = self.cdf.partition_point(|&c| c < p);
        if i >= self.cdf.len() {
            return self.upper();
        }
        if i == 0 {
            return 0.0;
        }
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let w = if c1 > c0 { (p - c0) / (c1 - c0) } else { 1.0 };
        self.xs[i - 1] + w * (self.xs[i] - self.xs[i - 1])
    }

    /// E[X·1{X > b}] = b·S(b) + ∫_b^∞ S(x) dx, exact for linear interpolation.
    fn partial_mean_above(&self, b: f64) -> f64 {
        let b = b.max(0.0);
        let mut integral = 0.0;
        for i in 0..self.xs.len() - 1 {
            let (x0, x1) = (self.xs[i].max(b), self.xs[i + 1]);
            if x1 <= x0 {
                continue;
            }
            integral += 0.5 * (x1 - x0) * ((1.0 - self.cdf(x0)) + (1.0 - self.cdf[i + 1]));
        }
        b * (1.0 - self.cdf(b)) + integral
    }
}

/// A validated positive-support distribution.
///
/// Construct through the named constructors or from JSON; parameters are
/// checked once so density and CDF evaluation are infallible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct DistributionSpec {
    family: Family,
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl DistributionSpec {
    pub fn exponential(rate: f64) -> Result<Self> {
        Ok(Self { family: Family::Exponential { rate: positive("exponential rate", rate)? } })
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        Ok(Self {
            family: Family::Gamma { shape: positive("gamma shape", shape)?, rate: positive("gamma rate", rate)? },
        })
    }

    /// Weibull with the scale α and shape β named explicitly to avoid transposition.
    pub fn weibull(scale: f64, shape: f64) -> Result<Self> {
        Ok(Self {
            family: Family::Weibull {
                scale: positive("weibull scale", scale)?,
                shape: positive("weibull shape", shape)?,
            },
        })
    }

    pub fn tabulated(points: &[(f64, f64)]) -> Result<Self> {
        Ok(Self { family: Family::Tabulated(Arc::new(TabulatedCdf::new(points)?)) })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Density; 0 for x < 0.
    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match &self.family {
            Family::Exponential { rate } => rate * (-rate * x).exp(),
            Family::Gamma { shape, rate } => gamma_pdf(*shape, *rate, x),
            Family::Weibull { scale, shape } => {
                let z = x / scale;
                if x == 0.0 {
                    return match shape.partial_cmp(&1.0) {
                        Some(std::cmp::Ordering::Less) => f64::INFINITY,
                        Some(std::cmp::Ordering::Equal) => 1.0 / scale,
                        _ => 0.0,
                    };
                }
                (shape / scale) * z.powf(shape - 1.0) * (-z.powf(*shape)).exp()
            }
            Family::Tabulated(t) => t.pdf(x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        match &self.family {
            Family::Exponential { rate } => -(-rate * x).exp_m1(),
            Family::Gamma { shape, rate } => reg_lower_inc_gamma(*shape, rate * x).expect("validated gamma"),
            Family::Weibull { scale, shape } => -(-(x / scale).powf(*shape)).exp_m1(),
            Family::Tabulated(t) => t.cdf(x),
        }
    }

    /// Survival function 1 − F(x), evaluated directly in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 1.0;
        }
        match &self.family {
            Family::Exponential { rate } => (-rate * x).exp(),
            Family::Gamma { shape, rate } => reg_upper_inc_gamma(*shape, rate * x).expect("validated gamma"),
            Family::Weibull { scale, shape } => (-(x / scale).powf(*shape)).exp(),
            Family::Tabulated(t) => 1.0 - t.cdf(x),
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.family {
            Family::Exponential { rate } => 1.0 / rate,
            Family::Gamma { shape, rate } => shape / rate,
            Family::Weibull { scale, shape } => scale * ln_gamma(1.0 + 1.0 / shape).exp(),
            Family::Tabulated(t) => t.partial_mean_above(0.0),
        }
    }

    /// E[X·1{X > b}], used as a tail bound for moment integrals.
    pub fn partial_mean_above(&self, b: f64) -> f64 {
        if b <= 0.0 {
            return self.mean();
        }
        match &self.family {
            Family::Exponential { rate } => (b + 1.0 / rate) * (-rate * b).exp(),
            Family::Gamma { shape, rate } => {
                shape / rate * reg_upper_inc_gamma(shape + 1.0, rate * b).expect("validated gamma")
            }
            Family::Weibull { scale, shape } => {
                let k = 1.0 + 1.0 / shape;
                scale * ln_gamma(k).exp() * reg_upper_inc_gamma(k, (b / scale).powf(*shape)).expect("positive")
            }
            Family::Tabulated(t) => t.partial_mean_above(b),
        }
    }

    /// Smallest x with F(x) >= p, for p in [0, 1).
    pub fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        let p = p.min(1.0 - f64::EPSILON);
        match &self.family {
            Family::Exponential { rate } => -(-p).ln_1p() / rate,
            Family::Weibull { scale, shape } => scale * (-(-p).ln_1p()).powf(1.0 / shape),
            Family::Tabulated(t) => t.quantile(p),
            Family::Gamma { .. } => bisect_quantile(|x| self.cdf(x), |x| self.sf(x), p, self.mean()),
        }
    }

    /// A sampler with per-family constants precomputed.
    pub fn sampler(&self) -> Sampler {
        match &self.family {
            Family::Exponential { rate } => Sampler::Exponential { rate: *rate },
            Family::Gamma { shape, rate } => {
                Sampler::Gamma(rand_distr::Gamma::new(*shape, 1.0 / rate).expect("validated gamma"))
            }
            Family::Weibull { scale, shape } => Sampler::Weibull { scale: *scale, inv_shape: 1.0 / shape },
            Family::Tabulated(t) => Sampler::Tabulated(Arc::clone(t)),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sampler().sample(rng)
    }
}

fn gamma_pdf(shape: f64, rate: f64, x: f64) -> f64 {
    if x == 0.0 {
        return match shape.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Less) => f64::INFINITY,
            Some(std::cmp::Ordering::Equal) => rate,
            _ => 0.0,
        };
    }
    ((shape - 1.0) * x.ln() - rate * x + shape * rate.ln() - ln_gamma(shape)).exp()
}

/// Bracket-and-bisect inversion, comparing on the survival side for p > 1/2.
fn bisect_quantile(cdf: impl Fn(f64) -> f64, sf: impl Fn(f64) -> f64, p: f64, scale_hint: f64) -> f64 {
    let below = |x: f64| if p > 0.5 { sf(x) > 1.0 - p } else { cdf(x) < p };
    let mut hi = scale_hint.max(f64::MIN_POSITIVE);
    while below(hi) {
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::MAX;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Draws from a [`DistributionSpec`]. Inverse-CDF for the closed-form
/// families, Marsaglia–Tsang (via `rand_distr`) for gamma.
#[derive(Debug, Clone)]
pub enum Sampler {
    Exponential { rate: f64 },
    Gamma(rand_distr::Gamma<f64>),
    Weibull { scale: f64, inv_shape: f64 },
    Tabulated(Arc<TabulatedCdf>),
}

impl Sampler {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Exponential { rate } => inverse_exponential(rng.random::<f64>(), *rate),
            Sampler::Gamma(g) => g.sample(rng),
            Sampler::Weibull { scale, inv_shape } => scale * (-(-rng.random::<f64>()).ln_1p()).powf(*inv_shape),
            Sampler::Tabulated(t) => t.quantile(rng.random::<f64>()),
        }
    }
}

/// −ln(1 − u)/λ.
#[inline]
pub fn inverse_exponential(u: f64, rate: f64) -> f64 {
    -(-u).ln_1p() / rate
}

// JSON form: {"family":"gamma","shape":0.05,"rate":15}. Exponential and gamma
// also accept "scale" (= 1/rate) in place of "rate".
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
enum RawDistribution {
    Exponential {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rate: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
    },
    Gamma {
        shape: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rate: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
    },
    Weibull {
        scale: f64,
        shape: f64,
    },
    Tabulated {
        points: Vec<(f64, f64)>,
    },
}

fn rate_or_scale(family: &str, rate: Option<f64>, scale: Option<f64>) -> Result<f64> {
    match (rate, scale) {
        (Some(r), None) => Ok(r),
        (None, Some(s)) => Ok(1.0 / positive(&format!("{family} scale"), s)?),
        _ => Err(Error::config(format!("{family} needs exactly one of \"rate\" or \"scale\""))),
    }
}

impl TryFrom<RawDistribution> for DistributionSpec {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        match raw {
            RawDistribution::Exponential { rate, scale } => Self::exponential(rate_or_scale("exponential", rate, scale)?),
            RawDistribution::Gamma { shape, rate, scale } => Self::gamma(shape, rate_or_scale("gamma", rate, scale)?),
            RawDistribution::Weibull { scale, shape } => Self::weibull(scale, shape),
            RawDistribution::Tabulated { points } => Self::tabulated(&points),
        }
    }
}

impl From<DistributionSpec> for RawDistribution {
    fn from(spec: DistributionSpec) -> Self {
        match spec.family {
            Family::Exponential { rate } => RawDistribution::Exponential { rate: Some(rate), scale: None },
            Family::Gamma { shape, rate } => RawDistribution::Gamma { shape, rate: Some(rate), scale: None },
            Family::Weibull { scale, shape } => RawDistribution::Weibull { scale, shape },
            Family::Tabulated(t) => RawDistribution::Tabulated { points: t.points().collect() },
        }
    }
}

/// How the law of X₁ + … + X_m is represented.
#[derive(Debug, Clone, PartialEq)]
pub enum SumRepresentation {
    AnalyticGamma { shape: f64, rate: f64 },
    GriddedConvolution(GriddedCdf),
}

/// CDF values on the uniform grid `k·step`, k = 0..len; 1 beyond the last node.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedCdf {
    step: f64,
    cdf: Vec<f64>,
}

impl GriddedCdf {
    pub fn step(&self) -> f64 {
        self.step
    }

    /// Truncation point U.
    pub fn upper(&self) -> f64 {
        self.step * (self.cdf.len() - 1) as f64
    }

    pub fn node_values(&self) -> &[f64] {
        &self.cdf
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let pos = x / self.step;
        let i = pos.floor() as usize;
        if i + 1 >= self.cdf.len() {
            return 1.0;
        }
        let w = pos - i as f64;
        self.cdf[i] + w * (self.cdf[i + 1] - self.cdf[i])
    }

    fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let i = (x / self.step).floor() as usize;
        if i + 1 >= self.cdf.len() {
            return 0.0;
        }
        (self.cdf[i + 1] - self.cdf[i]) / self.step
    }

    /// E[S·1{S > b}] = b·S̄(b) + ∫_b^U S̄, trapezoid-exact for linear interpolation.
    fn partial_mean_above(&self, b: f64) -> f64 {
        let b = b.max(0.0);
        if b >= self.upper() {
            return 0.0;
        }
        let start = (b / self.step).floor() as usize;
        let mut integral = 0.0;
        let mut x0 = b;
        let mut s0 = 1.0 - self.cdf(b);
        for k in start + 1..self.cdf.len() {
            let x1 = k as f64 * self.step;
            let s1 = 1.0 - self.cdf[k];
            integral += 0.5 * (x1 - x0) * (s0 + s1);
            x0 = x1;
            s0 = s1;
        }
        b * (1.0 - self.cdf(b)) + integral
    }
}

/// Law of X₁ + … + X_m for i.i.d. X_i following `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct SumDistribution {
    base: DistributionSpec,
    m: u32,
    repr: SumRepresentation,
}

/// Builds the m-fold sum: closed-form gamma for exponential and gamma bases,
/// FFT grid convolution otherwise.
pub fn sum_dist(base: &DistributionSpec, m: u32) -> Result<SumDistribution> {
    if m == 0 {
        return Err(Error::domain("sum of zero terms"));
    }
    match base.family {
        Family::Exponential { rate } => Ok(SumDistribution {
            base: base.clone(),
            m,
            repr: SumRepresentation::AnalyticGamma { shape: m as f64, rate },
        }),
        Family::Gamma { shape, rate } => Ok(SumDistribution {
            base: base.clone(),
            m,
            repr: SumRepresentation::AnalyticGamma { shape: m as f64 * shape, rate },
        }),
        _ => SumDistribution::gridded(base, m),
    }
}

impl SumDistribution {
    /// Forces the grid convolution regardless of family, with the default step.
    pub fn gridded(base: &DistributionSpec, m: u32) -> Result<Self> {
        let step = base.quantile(0.999) / GRID_POINTS_PER_Q999 as f64;
        Self::gridded_with_step(base, m, step)
    }

    pub fn gridded_with_step(base: &DistributionSpec, m: u32, step: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("sum of zero terms"));
        }
        let step = positive("grid step", step)?;
        // Union bound: P(S > m·q) <= m·P(X > q) = SUM_TRUNCATION_MASS / 100.
        let q_hi = base.quantile(1.0 - SUM_TRUNCATION_MASS / (100.0 * m as f64));
        let base_nodes = (q_hi / step).ceil() as usize + 1;
        let sum_len = (m as usize) * (base_nodes - 1) + 1;
        let fft_len = sum_len.next_power_of_two();
        if fft_len > MAX_GRID_LEN {
            let suggested = step * fft_len as f64 / MAX_GRID_LEN as f64;
            return Err(Error::Resolution {
                message: format!("sum grid needs {fft_len} points (limit {MAX_GRID_LEN})"),
                suggested_step: suggested,
            });
        }
        let cdf = if m == 1 {
            let mut nodes = Vec::with_capacity(base_nodes);
            for k in 0..base_nodes {
                let c = base.cdf(k as f64 * step);
                nodes.push(c);
                if c >= 1.0 - SUM_TRUNCATION_MASS {
                    break;
                }
            }
            nodes
        } else {
            let atoms = moment_matched_atoms(base, step, base_nodes);
            let sum_atoms = fft_power(&atoms, m as usize, fft_len, sum_len);
            atoms_to_cdf(&sum_atoms)
        };
        Ok(Self { base: base.clone(), m, repr: SumRepresentation::GriddedConvolution(GriddedCdf { step, cdf }) })
    }

    pub fn base(&self) -> &DistributionSpec {
        &self.base
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn representation(&self) -> &SumRepresentation {
        &self.repr
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        match &self.repr {
            SumRepresentation::AnalyticGamma { shape, rate } => reg_lower_inc_gamma(*shape, rate * x).expect("positive"),
            SumRepresentation::GriddedConvolution(g) => g.cdf(x),
        }
    }

    pub fn sf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 1.0;
        }
        match &self.repr {
            SumRepresentation::AnalyticGamma { shape, rate } => reg_upper_inc_gamma(*shape, rate * x).expect("positive"),
            SumRepresentation::GriddedConvolution(g) => 1.0 - g.cdf(x),
        }
    }

    /// Both F and 1 − F with full relative accuracy on either side.
    pub fn cdf_sf(&self, x: f64) -> (f64, f64) {
        if !(x > 0.0) {
            return (0.0, 1.0);
        }
        match &self.repr {
            SumRepresentation::AnalyticGamma { shape, rate } => inc_gamma_pair(*shape, rate * x).expect("positive"),
            SumRepresentation::GriddedConvolution(g) => {
                let c = g.cdf(x);
                (c, 1.0 - c)
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match &self.repr {
            SumRepresentation::AnalyticGamma { shape, rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    gamma_pdf(*shape, *rate, x)
                }
            }
            SumRepresentation::GriddedConvolution(g) => g.pdf(x),
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.repr {
            SumRepresentation::AnalyticGamma { shape, rate } => shape / rate,
            SumRepresentation::GriddedConvolution(g) => g.partial_mean_above(0.0),
        }
    }

    pub fn partial_mean_above(&self, b: f64) -> f64 {
        match &self.repr {
            SumRepresentation::AnalyticGamma { shape, rate } => {
                if b <= 0.0 {
                    shape / rate
                } else {
                    shape / rate * reg_upper_inc_gamma(shape + 1.0, rate * b).expect("positive")
                }
            }
            SumRepresentation::GriddedConvolution(g) => g.partial_mean_above(b),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        bisect_quantile(|x| self.cdf(x), |x| self.sf(x), p.min(1.0 - f64::EPSILON), self.mean())
    }
}

/// Splits each grid cell's mass between its two end nodes so that the cell's
/// conditional mean is preserved (local moment matching).
fn moment_matched_atoms(base: &DistributionSpec, step: f64, nodes: usize) -> Vec<f64> {
    let mut atoms = vec![0.0; nodes];
    let mut prev = (0.0, 1.0);
    for k in 1..nodes {
        let (a, b) = ((k - 1) as f64 * step, k as f64 * step);
        let cur = (base.cdf(b), base.sf(b));
        // Upper half: differences of survival values avoid cancellation.
        let upper = prev.0 > 0.5;
        let mass = if upper { prev.1 - cur.1 } else { cur.0 - prev.0 };
        if mass > 0.0 {
            // ∫_a^b (x − a) dF = ∫_a^b (F(b) − F(x)) dx
            let offset = if upper {
                gk15(&|x| base.sf(x) - cur.1, a, b).value
            } else {
                gk15(&|x| cur.0 - base.cdf(x), a, b).value
            };
            let right = (offset / step).clamp(0.0, mass);
            atoms[k - 1] += mass - right;
            atoms[k] += right;
        }
        prev = cur;
    }
    // Mass beyond the last node sits on it.
    atoms[nodes - 1] += prev.1.max(0.0);
    atoms
}

/// m-fold self-convolution of an atom vector by FFT exponentiation.
fn fft_power(atoms: &[f64], m: usize, fft_len: usize, keep: usize) -> Vec<f64> {
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(fft_len);
    let inverse = planner.plan_fft_inverse(fft_len);
    let mut buf: Vec<Complex<f64>> = atoms.iter().map(|&a| Complex::new(a, 0.0)).collect();
    buf.resize(fft_len, Complex::new(0.0, 0.0));
    forward.process(&mut buf);
    for z in buf.iter_mut() {
        *z = z.powu(m as u32);
    }
    inverse.process(&mut buf);
    let scale = 1.0 / fft_len as f64;
    buf.iter().take(keep).map(|z| (z.re * scale).max(0.0)).collect()
}

/// Atoms spread uniformly over [x_k − h/2, x_k + h/2] give node CDF values
/// Σ_{j<k} w_j + w_k/2; the grid stops once 1 − SUM_TRUNCATION_MASS is reached.
fn atoms_to_cdf(atoms: &[f64]) -> Vec<f64> {
    let mut cdf = Vec::with_capacity(atoms.len());
    cdf.push(0.0);
    let mut below = atoms[0];
    for &w in &atoms[1..] {
        let c = (below + 0.5 * w).min(1.0);
        let c = c.max(*cdf.last().unwrap());
        cdf.push(c);
        below += w;
        if c >= 1.0 - SUM_TRUNCATION_MASS {
            break;
        }
    }
    cdf
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate, QuadOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn specs() -> Vec<DistributionSpec> {
        vec![
            DistributionSpec::exponential(0.2).unwrap(),
            DistributionSpec::exponential(3.0).unwrap(),
            DistributionSpec::gamma(2.0, 10.0).unwrap(),
            DistributionSpec::gamma(0.05, 15.0).unwrap(),
            DistributionSpec::weibull(2.0, 1.5).unwrap(),
            DistributionSpec::weibull(1.0, 0.7).unwrap(),
            DistributionSpec::tabulated(&[(0.0, 0.0), (1.0, 0.3), (2.0, 0.9), (4.0, 1.0)]).unwrap(),
        ]
    }

    #[test]
    fn exponential_density_at_zero_is_rate() {
        assert_eq!(DistributionSpec::exponential(1.0).unwrap().pdf(0.0), 1.0);
    }

    #[test]
    fn shape_one_gamma_is_exponential() {
        let g = DistributionSpec::gamma(1.0, 0.7).unwrap();
        let e = DistributionSpec::exponential(0.7).unwrap();
        for x in [0.0, 0.3, 1.0, 4.5, 20.0] {
            assert!((g.pdf(x) - e.pdf(x)).abs() < 1e-13);
            assert!((g.cdf(x) - e.cdf(x)).abs() < 1e-13);
        }
    }

    #[test]
    fn weibull_density_matches_finite_difference() {
        let w = DistributionSpec::weibull(2.0, 1.5).unwrap();
        let h = 1e-6;
        let fd = (w.cdf(1.3 + h) - w.cdf(1.3 - h)) / (2.0 * h);
        assert!((w.pdf(1.3) - fd).abs() < 1e-8, "{} vs {fd}", w.pdf(1.3));
    }

    #[test]
    fn cdf_fixed_points() {
        for s in specs() {
            assert_eq!(s.cdf(0.0), 0.0);
            assert_eq!(s.cdf(-1.0), 0.0);
            assert_eq!(s.pdf(-1.0), 0.0);
        }
        let e = DistributionSpec::exponential(0.2).unwrap();
        assert!((e.cdf(5.0) - 0.632_120_558_828_557_7).abs() < 1e-15);
        let w = DistributionSpec::weibull(2.7, 0.8).unwrap();
        assert!((w.cdf(2.7) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn inverse_cdf_exponential_draw() {
        let u: f64 = 0.37;
        assert_eq!(inverse_exponential(u, 0.2), -(1.0 - u).ln() / 0.2);
    }

    #[test]
    fn invalid_parameters_are_config_errors() {
        assert!(matches!(DistributionSpec::exponential(-1.0), Err(Error::Config(_))));
        assert!(matches!(DistributionSpec::gamma(0.0, 1.0), Err(Error::Config(_))));
        assert!(matches!(DistributionSpec::weibull(1.0, f64::NAN), Err(Error::Config(_))));
        assert!(DistributionSpec::tabulated(&[(0.0, 0.0), (1.0, 0.5)]).is_err());
        assert!(DistributionSpec::tabulated(&[(0.0, 0.0), (1.0, 0.6), (1.0, 1.0)]).is_err());
        assert!(DistributionSpec::tabulated(&[(0.1, 0.0), (1.0, 1.0)]).is_err());
        assert!(DistributionSpec::tabulated(&[(0.0, 0.0), (1.0, 0.6), (2.0, 0.5), (3.0, 1.0)]).is_err());
    }

    #[test]
    fn json_schema_round_trip() {
        let g: DistributionSpec = serde_json::from_str(r#"{"family":"gamma","shape":0.05,"rate":15}"#).unwrap();
        assert_eq!(g, DistributionSpec::gamma(0.05, 15.0).unwrap());
        let e: DistributionSpec = serde_json::from_str(r#"{"family":"exponential","rate":0.2}"#).unwrap();
        assert_eq!(e, DistributionSpec::exponential(0.2).unwrap());
        let w: DistributionSpec = serde_json::from_str(r#"{"family":"weibull","scale":2.0,"shape":1.5}"#).unwrap();
        assert_eq!(w, DistributionSpec::weibull(2.0, 1.5).unwrap());
        let s: DistributionSpec = serde_json::from_str(r#"{"family":"gamma","shape":2,"scale":4}"#).unwrap();
        assert_eq!(s, DistributionSpec::gamma(2.0, 0.25).unwrap());
        let back: DistributionSpec = serde_json::from_str(&serde_json::to_string(&w).unwrap()).unwrap();
        assert_eq!(back, w);

        for bad in [
            r#"{"family":"gamma","shape":1,"rate":1,"scale":1}"#,
            r#"{"family":"exponential"}"#,
            r#"{"family":"exponential","rate":-1}"#,
            r#"{"family":"weibull","scale":1,"shape":1,"extra":2}"#,
            r#"{"family":"lognormal","mu":0}"#,
        ] {
            assert!(serde_json::from_str::<DistributionSpec>(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn density_integrates_to_cdf_at_q999() {
        let opts = QuadOptions { abs_tol: 1e-10, rel_tol: 1e-10, max_subdivisions: 5000 };
        for s in specs() {
            let q = s.quantile(0.999);
            let area = integrate(|x| s.pdf(x), 0.0, q, &opts).unwrap();
            assert!((area.value - s.cdf(q)).abs() <= 1e-6, "{s:?}: {} vs {}", area.value, s.cdf(q));
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for s in specs() {
            for p in [0.01, 0.3, 0.5, 0.9, 0.999, 1.0 - 1e-9] {
                let x = s.quantile(p);
                assert!((s.cdf(x) - p).abs() < 1e-9, "{s:?} p={p} x={x} F={}", s.cdf(x));
            }
        }
    }

    #[test]
    fn closed_form_means_match_quadrature() {
        let opts = QuadOptions::default();
        for s in specs() {
            let q = integrate(|x| s.sf(x), 0.0, s.quantile(1.0 - 1e-13), &opts).unwrap();
            assert!((q.value - s.mean()).abs() < 1e-8 * s.mean().max(1.0), "{s:?}");
            let b = s.quantile(0.7);
            let pm = integrate(|x| x * s.pdf(x), b, s.quantile(1.0 - 1e-14), &opts).unwrap();
            assert!((pm.value - s.partial_mean_above(b)).abs() < 1e-7, "{s:?}");
        }
    }

    #[test]
    fn gamma_sample_mean_moment_oracle() {
        let g = DistributionSpec::gamma(2.0, 10.0).unwrap();
        let sampler = g.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mean = (0..n).map(|_| sampler.sample(&mut rng)).sum::<f64>() / n as f64;
        let sd = (2.0f64).sqrt() / 10.0;
        assert!((mean - 0.2).abs() < 3.0 * sd / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        for s in specs() {
            let a: Vec<f64> = {
                let mut r = ChaCha8Rng::seed_from_u64(5);
                (0..50).map(|_| s.sample(&mut r)).collect()
            };
            let b: Vec<f64> = {
                let mut r = ChaCha8Rng::seed_from_u64(5);
                (0..50).map(|_| s.sample(&mut r)).collect()
            };
            assert_eq!(a, b);
            assert!(a.iter().all(|&x| x >= 0.0));
        }
    }

    // 1% critical value of the one-sample KS statistic: 1.628/√n.
    #[test]
    fn empirical_cdf_passes_kolmogorov_smirnov() {
        let n = 100_000;
        let crit = 1.628 / (n as f64).sqrt();
        for (i, s) in specs().into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
            let mut xs: Vec<f64> = (0..n).map(|_| s.sample(&mut rng)).collect();
            xs.sort_by(f64::total_cmp);
            let d = xs
                .iter()
                .enumerate()
                .map(|(k, &x)| {
                    let f = s.cdf(x);
                    (f - k as f64 / n as f64).abs().max(((k + 1) as f64 / n as f64 - f).abs())
                })
                .fold(0.0, f64::max);
            assert!(d < crit, "{s:?}: D = {d}, critical {crit}");
        }
    }

    #[test]
    fn sum_of_exponentials_is_analytic_gamma() {
        let s = sum_dist(&DistributionSpec::exponential(0.2).unwrap(), 3).unwrap();
        assert_eq!(s.representation(), &SumRepresentation::AnalyticGamma { shape: 3.0, rate: 0.2 });
        let g = sum_dist(&DistributionSpec::gamma(0.05, 15.0).unwrap(), 12).unwrap();
        match g.representation() {
            SumRepresentation::AnalyticGamma { shape, rate } => {
                assert!((shape - 0.6).abs() < 1e-15);
                assert_eq!(*rate, 15.0);
            }
            other => panic!("{other:?}"),
        }
        let w = sum_dist(&DistributionSpec::weibull(2.0, 1.5).unwrap(), 3).unwrap();
        assert!(matches!(w.representation(), SumRepresentation::GriddedConvolution(_)));
        assert!(sum_dist(&DistributionSpec::weibull(2.0, 1.5).unwrap(), 0).is_err());
    }

    #[test]
    fn single_term_sum_is_the_base() {
        for base in specs() {
            let s = sum_dist(&base, 1).unwrap();
            match s.representation() {
                SumRepresentation::AnalyticGamma { .. } => {
                    for x in [0.01, 0.1, 1.0, 3.0, 10.0] {
                        assert!((s.cdf(x) - base.cdf(x)).abs() < 1e-12);
                    }
                }
                SumRepresentation::GriddedConvolution(g) => {
                    for (k, &c) in g.node_values().iter().enumerate() {
                        assert!((c - base.cdf(k as f64 * g.step())).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn gridded_matches_analytic_gamma_sum() {
        let base = DistributionSpec::gamma(0.05, 15.0).unwrap();
        let analytic = sum_dist(&base, 12).unwrap();
        let gridded = SumDistribution::gridded(&base, 12).unwrap();
        // The lattice cannot resolve the x^0.6 cusp at the origin, so points start at the 10% quantile.
        for p in [0.1, 0.25, 0.5, 0.75, 0.9, 0.99] {
            let x = analytic.quantile(p);
            let diff = (analytic.cdf(x) - gridded.cdf(x)).abs();
            assert!(diff < 2e-4, "p={p} x={x} diff={diff}");
        }
    }

    #[test]
    fn gridded_cdf_is_monotone_and_reaches_one() {
        let base = DistributionSpec::weibull(2.0, 1.5).unwrap();
        let s = sum_dist(&base, 4).unwrap();
        let SumRepresentation::GriddedConvolution(g) = s.representation() else { panic!() };
        assert!(g.node_values().windows(2).all(|w| w[1] >= w[0]));
        assert!(*g.node_values().last().unwrap() >= 1.0 - 1e-6);
    }

    #[test]
    fn grid_budget_overflow_suggests_coarser_step() {
        let base = DistributionSpec::exponential(1.0).unwrap();
        let err = SumDistribution::gridded_with_step(&base, 40, 1e-6).unwrap_err();
        match err {
            Error::Resolution { suggested_step, .. } => assert!(suggested_step > 1e-6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sum_means_are_additive() {
        for base in specs() {
            for m in [1u32, 2, 5] {
                let s = sum_dist(&base, m).unwrap();
                let tol = match s.representation() {
                    SumRepresentation::AnalyticGamma { .. } => 1e-6,
                    SumRepresentation::GriddedConvolution(_) => 1e-3,
                };
                let opts = QuadOptions { abs_tol: 1e-10, rel_tol: 1e-10, max_subdivisions: 20_000 };
                let upper = s.quantile(1.0 - 1e-12);
                let mean = integrate(|x| s.sf(x), 0.0, upper, &opts).unwrap().value;
                assert!((mean - m as f64 * base.mean()).abs() <= tol * (m as f64 * base.mean()).max(1.0),
                    "{base:?} m={m}: {mean}");
            }
        }
    }

    #[test]
    fn adding_a_term_is_stochastically_larger() {
        for base in specs() {
            let grid: Vec<f64> = (1..60).map(|k| k as f64 * base.quantile(0.999) / 10.0).collect();
            for m in 1..5u32 {
                let a = sum_dist(&base, m).unwrap();
                let b = sum_dist(&base, m + 1).unwrap();
                for &x in &grid {
                    assert!(b.cdf(x) <= a.cdf(x) + 1e-12, "{base:?} m={m} x={x}");
                }
            }
        }
    }
}
