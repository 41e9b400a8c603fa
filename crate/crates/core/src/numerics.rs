//! Special functions, the doubly non-central F density, samplers and
//! semi-infinite adaptive quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Truncation control for the double series of the doubly non-central F density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesControl {
    /// Stop once a term falls below `rel_tol` times the running sum.
    pub rel_tol: f64,
    /// Largest total index `a + b` that may be visited.
    pub max_index: usize,
}

impl Default for SeriesControl {
    fn default() -> Self {
        Self { rel_tol: 1e-12, max_index: 800 }
    }
}

impl SeriesControl {
    pub fn with_cap(max_index: usize) -> Self {
        Self { max_index, ..Self::default() }
    }
}

/// `ln Γ(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("log_gamma requires x > 0, got {x}")));
    }
    Ok(statrs::function::gamma::ln_gamma(x))
}

fn ln_beta(a: f64, b: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Euler Beta function.
pub fn beta_fn(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Domain(format!("beta requires a, b > 0, got ({a}, {b})")));
    }
    Ok(ln_beta(a, b).exp())
}

/// Standard normal upper tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Running `ln Σ exp(x_i)`.
#[derive(Debug, Clone, Copy)]
struct LogSum {
    shift: f64,
    acc: f64,
}

impl LogSum {
    fn new() -> Self {
        Self { shift: f64::NEG_INFINITY, acc: 0.0 }
    }

    fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.shift {
            self.acc = self.acc * (self.shift - x).exp() + 1.0;
            self.shift = x;
        } else {
            self.acc += (x - self.shift).exp();
        }
    }

    fn value(&self) -> f64 {
        if self.acc == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.shift + self.acc.ln()
        }
    }
}

/// Log-domain evaluator of the terms `T(a, b)` of the doubly non-central F
/// density with numerator 2 and denominator `2(M-1)` degrees of freedom:
///
/// `T(a,b) = Pois(a; λ1/2) Pois(b; λ2/2) (M-1)^{b+M-1} s^a (M-1+s)^{-(a+b+M)} / B(a+1, b+M-1)`
struct DncfTerms {
    s: f64,
    half1: f64,
    half2: f64,
    m1: f64,
    ln_m1: f64,
    ln_s: f64,
    ln_den: f64,
}

impl DncfTerms {
    fn log_term(&self, a: usize, b: usize) -> f64 {
        use statrs::function::gamma::ln_gamma;
        let (af, bf) = (a as f64, b as f64);
        let pois = |k: f64, half: f64| {
            if half == 0.0 {
                if k == 0.0 { 0.0 } else { f64::NEG_INFINITY }
            } else {
                -half + k * half.ln() - ln_gamma(k + 1.0)
            }
        };
        let s_pow = if a == 0 { 0.0 } else { af * self.ln_s };
        pois(af, self.half1) + pois(bf, self.half2) + (bf + self.m1) * self.ln_m1 + s_pow
            - (af + bf + self.m1 + 1.0) * self.ln_den
            - ln_beta(af + 1.0, bf + self.m1)
    }

    /// `ln T(a, b+1) - ln T(a, b)`.
    fn log_ratio_b(&self, a: usize, b: usize) -> f64 {
        let (af, bf) = (a as f64, b as f64);
        self.half2.ln() - (bf + 1.0).ln() + self.ln_m1 - self.ln_den + (af + bf + self.m1 + 1.0).ln()
            - (bf + self.m1).ln()
    }

    /// Approximate maximiser over `b` for fixed `a`.
    fn b_mode(&self, a: usize) -> usize {
        if self.half2 == 0.0 {
            return 0;
        }
        let c = self.half2 * self.m1 / (self.m1 + self.s);
        let m = self.m1 + 1.0;
        let p = m - c;
        let q = m - 1.0 - c * (a as f64 + m);
        let disc = p * p - 4.0 * q;
        if disc < 0.0 {
            return 0;
        }
        ((-p + disc.sqrt()) / 2.0).max(0.0).round() as usize
    }

    /// Approximate maximiser over `a` for fixed `b`.
    fn a_mode(&self, b: usize) -> usize {
        if self.half1 == 0.0 || self.s == 0.0 {
            return 0;
        }
        let e = self.half1 * self.s / (self.m1 + self.s);
        let t = (e + (e * e + 4.0 * e * (b as f64 + self.m1)).sqrt()) / 2.0;
        (t - 1.0).max(0.0).round() as usize
    }

    /// Log of the row sum `Σ_b T(a, b)`, walking outward from the row mode.
    fn log_row(&self, a: usize, ctrl: &SeriesControl) -> Result<f64> {
        let ln_tol = ctrl.rel_tol.ln();
        let b0 = self.b_mode(a);
        if a + b0 > ctrl.max_index {
            return Err(Error::SeriesNotConverged { cap: ctrl.max_index });
        }
        let start = self.log_term(a, b0);
        let mut sum = LogSum::new();
        sum.add(start);
        if self.half2 == 0.0 {
            return Ok(sum.value());
        }
        // upward
        let (mut b, mut lt) = (b0, start);
        loop {
            let next = lt + self.log_ratio_b(a, b);
            b += 1;
            if a + b > ctrl.max_index {
                return Err(Error::SeriesNotConverged { cap: ctrl.max_index });
            }
            sum.add(next);
            let decreasing = next < lt;
            lt = next;
            if decreasing && lt < sum.value() + ln_tol {
                break;
            }
        }
        // downward
        let (mut b, mut lt) = (b0, start);
        while b > 0 {
            let prev = lt - self.log_ratio_b(a, b - 1);
            b -= 1;
            sum.add(prev);
            let decreasing = prev < lt;
            lt = prev;
            if decreasing && lt < sum.value() + ln_tol {
                break;
            }
        }
        Ok(sum.value())
    }
}

/// Density of `(M-1) · SINR` for the noiseless eavesdropper: a doubly
/// non-central F variate with `(2, 2(M-1))` degrees of freedom and
/// non-centralities `(λ1, λ2)`.
///
/// The double Poisson-mixture series is summed in log space outward from its
/// mode, so large non-centralities neither overflow nor require visiting the
/// low-index terms.
pub fn dncf_scaled_pdf(s: f64, lambda1: f64, lambda2: f64, m: usize, ctrl: &SeriesControl) -> Result<f64> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("density argument must be >= 0, got {s}")));
    }
    if !(lambda1 >= 0.0 && lambda2 >= 0.0) || !lambda1.is_finite() || !lambda2.is_finite() {
        return Err(Error::Domain(format!("non-centralities must be finite and >= 0, got ({lambda1}, {lambda2})")));
    }
    if m < 2 {
        return Err(Error::Domain(format!("stream count must be >= 2, got {m}")));
    }
    let m1 = (m - 1) as f64;
    let terms = DncfTerms {
        s,
        half1: lambda1 / 2.0,
        half2: lambda2 / 2.0,
        m1,
        ln_m1: m1.ln(),
        ln_s: if s > 0.0 { s.ln() } else { f64::NEG_INFINITY },
        ln_den: (m1 + s).ln(),
    };
    let ln_tol = ctrl.rel_tol.ln();

    let mut a0 = 0;
    for _ in 0..4 {
        a0 = terms.a_mode(terms.b_mode(a0));
    }
    let first = terms.log_row(a0, ctrl)?;
    let mut total = LogSum::new();
    total.add(first);
    if terms.half1 > 0.0 && s > 0.0 {
        let (mut a, mut lr) = (a0, first);
        loop {
            a += 1;
            if a > ctrl.max_index {
                return Err(Error::SeriesNotConverged { cap: ctrl.max_index });
            }
            let next = terms.log_row(a, ctrl)?;
            total.add(next);
            let decreasing = next < lr;
            lr = next;
            if decreasing && lr < total.value() + ln_tol {
                break;
            }
        }
        let (mut a, mut lr) = (a0, first);
        while a > 0 {
            a -= 1;
            let prev = terms.log_row(a, ctrl)?;
            total.add(prev);
            let decreasing = prev < lr;
            lr = prev;
            if decreasing && lr < total.value() + ln_tol {
                break;
            }
        }
    }
    Ok(total.value().exp())
}

/// Non-central chi-square draw as a sum of squared unit-variance normals.
pub fn sample_ncx2<R: Rng + ?Sized>(dof: usize, lambda: f64, rng: &mut R) -> f64 {
    let shift = lambda.sqrt();
    (0..dof)
        .map(|i| {
            let z: f64 = StandardNormal.sample(rng);
            let z = if i == 0 { z + shift } else { z };
            z * z
        })
        .sum()
}

// Gauss-Kronrod 7/15 abscissae and weights.
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

/// Maximum number of interval bisections.
const MAX_SUBDIVISIONS: usize = 4000;
/// Absolute error floor below which a result is accepted regardless of its
/// relative error (integrals of probabilities that are numerically zero).
const ABS_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: FnMut(f64) -> Result<f64>>(f: &mut F, lo: f64, hi: f64) -> Result<Segment> {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let (f1, f2) = (f(center - dx)?, f(center + dx)?);
        kronrod += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    Ok(Segment { lo, hi, value, error })
}

/// Adaptive Gauss-Kronrod quadrature of `f` over `[lo, hi]`.
pub fn integrate<F: FnMut(f64) -> Result<f64>>(mut f: F, lo: f64, hi: f64, rel_tol: f64) -> Result<f64> {
    if !(rel_tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be > 0, got {rel_tol}")));
    }
    let mut heap = BinaryHeap::new();
    // a few initial panels so narrow features are not missed
    let panels = 32;
    for i in 0..panels {
        let a = lo + (hi - lo) * i as f64 / panels as f64;
        let b = lo + (hi - lo) * (i + 1) as f64 / panels as f64;
        heap.push(gk15(&mut f, a, b)?);
    }
    for _ in 0..MAX_SUBDIVISIONS {
        let (value, error): (f64, f64) = heap.iter().fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
        if error <= rel_tol * value.abs() || error <= ABS_FLOOR {
            return Ok(value);
        }
        let worst = heap.pop().expect("non-empty segment heap");
        let mid = 0.5 * (worst.lo + worst.hi);
        heap.push(gk15(&mut f, worst.lo, mid)?);
        heap.push(gk15(&mut f, mid, worst.hi)?);
    }
    let (value, error): (f64, f64) = heap.iter().fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
    if error <= rel_tol * value.abs() || error <= ABS_FLOOR {
        Ok(value)
    } else {
        Err(Error::QuadratureFailure { estimate: error / value.abs().max(f64::MIN_POSITIVE), tol: rel_tol })
    }
}

/// `∫_0^∞ f(s) ds` through the substitution `s = t / (1 - t)`.
pub fn integrate_semi_infinite<F: FnMut(f64) -> Result<f64>>(mut f: F, tol: f64) -> Result<f64> {
    integrate(
        |t| {
            let one_minus = 1.0 - t;
            let s = t / one_minus;
            if !s.is_finite() {
                return Ok(0.0);
            }
            Ok(f(s)? / (one_minus * one_minus))
        },
        0.0,
        1.0,
        tol,
    )
}

/// Nodes and weights of the Gauss rule for a symmetric tridiagonal Jacobi
/// matrix (Golub-Welsch); weights are normalised to sum to one.
fn golub_welsch(diag: &[f64], off: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    let j = nalgebra::DMatrix::from_fn(n, n, |r, c| {
        if r == c {
            diag[r]
        } else if r + 1 == c {
            off[r]
        } else if c + 1 == r {
            off[c]
        } else {
            0.0
        }
    });
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> =
        (0..n).map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    pairs.into_iter().map(|(x, w)| (x, w / total)).unzip()
}

/// `n`-point rule for expectations over a standard normal variable.
pub fn gauss_hermite_normal(n: usize) -> (Vec<f64>, Vec<f64>) {
    let off: Vec<f64> = (1..n).map(|i| (i as f64).sqrt()).collect();
    golub_welsch(&vec![0.0; n], &off)
}

/// `n`-point rule for expectations over a central chi-square variable with
/// `dof` degrees of freedom.
pub fn gauss_laguerre_chi2(n: usize, dof: f64) -> (Vec<f64>, Vec<f64>) {
    let alpha = dof / 2.0 - 1.0;
    let diag: Vec<f64> = (0..n).map(|i| 2.0 * i as f64 + alpha + 1.0).collect();
    let off: Vec<f64> = (1..n).map(|i| (i as f64 * (i as f64 + alpha)).sqrt()).collect();
    let (x, w) = golub_welsch(&diag, &off);
    (x.into_iter().map(|x| 2.0 * x).collect(), w)
}
