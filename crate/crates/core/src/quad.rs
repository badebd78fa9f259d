//! Adaptive Gauss–Kronrod quadrature.

use crate::error::{Error, Result};

// 15-point Kronrod nodes on [0, 1]; odd indices are the embedded 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-10, rel_tol: 1e-10, max_subdivisions: 2000 }
    }
}

impl QuadOptions {
    fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

/// An integral value with its estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub abs_error: f64,
}

impl std::ops::Add for Quadrature {
    type Output = Quadrature;
    fn add(self, rhs: Self) -> Self {
        Quadrature { value: self.value + rhs.value, abs_error: self.abs_error + rhs.abs_error }
    }
}

/// Single 15-point Gauss–Kronrod panel with the QUADPACK error heuristic.
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Quadrature {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut res_abs = kronrod.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = kronrod * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut err = ((kronrod - gauss) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Quadrature { value, abs_error: err }
}

/// Globally adaptive bisection on [a, b]: the panel with the largest error is
/// split until the summed error meets the tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<Quadrature> {
    integrate_with_breaks(f, a, b, &[], opts)
}

/// As [`integrate`], with the initial partition also split at `breaks`
/// (points outside (a, b) are ignored). Breaks placed near the integrand's
/// features keep a wide first panel from missing them.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    opts: &QuadOptions,
) -> Result<Quadrature> {
    if a == b {
        return Ok(Quadrature { value: 0.0, abs_error: 0.0 });
    }
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::domain(format!("integration bounds must be finite with a < b, got [{a}, {b}]")));
    }
    let mut nodes: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    nodes.push(a);
    nodes.push(b);
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    let mut panels = Vec::with_capacity(nodes.len() - 1);
    let mut total = Quadrature { value: 0.0, abs_error: 0.0 };
    for w in nodes.windows(2) {
        let q = gk15(&f, w[0], w[1]);
        if !q.value.is_finite() {
            return Err(Error::Numerical {
                message: format!("integrand is not finite on [{}, {}]", w[0], w[1]),
                achieved: f64::INFINITY,
            });
        }
        total = total + q;
        panels.push((w[0], w[1], q));
    }
    while total.abs_error > opts.target(total.value) {
        if panels.len() >= opts.max_subdivisions.max(nodes.len()) {
            return Err(Error::Numerical {
                message: format!("adaptive quadrature hit {} subdivisions on [{a}, {b}]", opts.max_subdivisions),
                achieved: total.abs_error,
            });
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2.abs_error.total_cmp(&y.1 .2.abs_error))
            .expect("panel list is never empty");
        let (lo, hi, old) = panels.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if !(lo < mid && mid < hi) {
            // Interval can no longer be split in floating point.
            return Err(Error::Numerical {
                message: format!("quadrature panel collapsed near {mid}"),
                achieved: total.abs_error,
            });
        }
        let left = gk15(&f, lo, mid);
        let right = gk15(&f, mid, hi);
        total.value += left.value + right.value - old.value;
        total.abs_error += left.abs_error + right.abs_error - old.abs_error;
        panels.push((lo, mid, left));
        panels.push((mid, hi, right));
    }
    // Re-sum to shed the drift of incremental updates.
    let resummed = panels.iter().fold(Quadrature { value: 0.0, abs_error: 0.0 }, |acc, p| acc + p.2);
    Ok(resummed)
}

/// Integrates over [a, ∞): first [a, split], then doubling panels until
/// `tail_bound(b)` (an upper bound on the integral over [b, ∞)) is below the
/// tolerance. The final tail bound is added to the reported error.
pub fn integrate_to_infinity<F, T>(f: F, a: f64, split: f64, tail_bound: T, opts: &QuadOptions) -> Result<Quadrature>
where
    F: Fn(f64) -> f64,
    T: Fn(f64) -> f64,
{
    integrate_to_infinity_with_breaks(f, a, split, &[], tail_bound, opts)
}

/// As [`integrate_to_infinity`], with `breaks` seeding the partition of [a, split].
pub fn integrate_to_infinity_with_breaks<F, T>(
    f: F,
    a: f64,
    split: f64,
    breaks: &[f64],
    tail_bound: T,
    opts: &QuadOptions,
) -> Result<Quadrature>
where
    F: Fn(f64) -> f64,
    T: Fn(f64) -> f64,
{
    let split = split.max(a);
    let mut total = integrate_with_breaks(&f, a, split, breaks, opts)?;
    let mut b = split;
    for _ in 0..200 {
        let tail = tail_bound(b);
        if tail <= 0.5 * opts.target(total.value) {
            total.abs_error += tail.max(0.0);
            return Ok(total);
        }
        let next = if b > 0.0 { 2.0 * b } else { 1.0 };
        total = total + integrate(&f, b, next, opts)?;
        b = next;
    }
    Err(Error::Numerical {
        message: "semi-infinite integral tail did not decay".into(),
        achieved: tail_bound(b),
    })
}
