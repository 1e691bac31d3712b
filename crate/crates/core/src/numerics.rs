//! Numeric kernels shared by the line-shape and noise code: adaptive
//! Gauss–Kronrod quadrature of complex integrands and the complex imaginary
//! error function.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

pub const DEFAULT_REL_TOL: f64 = 1e-9;
pub const DEFAULT_ABS_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_EVALUATIONS: usize = 400_000;

/// Kronrod abscissae for the 15-point rule on [-1, 1] (non-negative half).
#[allow(clippy::excessive_precision)]
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

#[allow(clippy::excessive_precision)]
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

/// Weights of the embedded 7-point Gauss rule (abscissae XGK[1], XGK[3], XGK[5], XGK[7]).
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Outcome of a quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: Complex64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("tolerances must be positive (rel_tol = {rel_tol}, abs_tol = {abs_tol})")]
    InvalidTolerance { rel_tol: f64, abs_tol: f64 },
    #[error("invalid integration domain: {0}")]
    InvalidDomain(String),
    #[error("quadrature did not converge after {} evaluations (estimate {}, error {:.3e})", .best.evaluations, .best.value, .best.error_estimate)]
    NonConvergence { best: QuadratureResult },
    #[error("integrand is not finite at x = {x}")]
    NonFinite { x: f64 },
}

/// Integration domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Finite { a: f64, b: f64 },
    /// The whole real line, mapped onto (-1, 1) through
    /// `x = center + scale * t / (1 - t^2)`. Choosing `center` and `scale`
    /// near the bulk of the integrand keeps the transformed integrand tame.
    RealLine { center: f64, scale: f64 },
}

impl Domain {
    pub fn real_line() -> Self {
        Domain::RealLine {
            center: 0.0,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_evaluations: usize,
    /// Interior points (in x) where the integrand is sharply peaked or kinked.
    /// Points outside the domain are ignored.
    pub breakpoints: Vec<f64>,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: DEFAULT_REL_TOL,
            abs_tol: DEFAULT_ABS_TOL,
            max_evaluations: DEFAULT_MAX_EVALUATIONS,
            breakpoints: Vec::new(),
        }
    }
}

impl QuadOptions {
    pub fn with_breakpoints(mut self, points: impl IntoIterator<Item = f64>) -> Self {
        self.breakpoints.extend(points);
        self
    }
}

/// Integrate `f` over `domain` to `max(rel_tol * |value|, abs_tol)`.
pub fn adaptive_quad<F>(
    f: F,
    domain: Domain,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<QuadratureResult, QuadError>
where
    F: Fn(f64) -> Complex64,
{
    let opts = QuadOptions {
        rel_tol,
        abs_tol,
        ..QuadOptions::default()
    };
    adaptive_quad_with(f, domain, &opts)
}

pub fn adaptive_quad_with<F>(
    f: F,
    domain: Domain,
    opts: &QuadOptions,
) -> Result<QuadratureResult, QuadError>
where
    F: Fn(f64) -> Complex64,
{
    if !(opts.rel_tol > 0.0 && opts.abs_tol > 0.0) {
        return Err(QuadError::InvalidTolerance {
            rel_tol: opts.rel_tol,
            abs_tol: opts.abs_tol,
        });
    }
    match domain {
        Domain::Finite { a, b } => {
            if !(a.is_finite() && b.is_finite()) {
                return Err(QuadError::InvalidDomain(format!(
                    "finite domain with bounds [{a}, {b}]"
                )));
            }
            if a == b {
                return Ok(QuadratureResult {
                    value: Complex64::new(0.0, 0.0),
                    error_estimate: 0.0,
                    evaluations: 1,
                });
            }
            let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
            let mut cuts: Vec<f64> = opts
                .breakpoints
                .iter()
                .copied()
                .filter(|p| p.is_finite() && *p > lo && *p < hi)
                .collect();
            cuts.push(lo);
            cuts.push(hi);
            let mut res = integrate_intervals(&f, &sorted_unique(cuts), opts)?;
            res.value *= sign;
            Ok(res)
        }
        Domain::RealLine { center, scale } => {
            if !(center.is_finite() && scale.is_finite() && scale > 0.0) {
                return Err(QuadError::InvalidDomain(format!(
                    "real line with center {center} and scale {scale}"
                )));
            }
            let to_t = |x: f64| {
                let y = (x - center) / scale;
                if y == 0.0 {
                    0.0
                } else {
                    (-1.0 + (1.0 + 4.0 * y * y).sqrt()) / (2.0 * y)
                }
            };
            let mut cuts: Vec<f64> = opts
                .breakpoints
                .iter()
                .copied()
                .filter(|p| p.is_finite())
                .map(to_t)
                .filter(|t| t.abs() < 1.0)
                .collect();
            cuts.extend([-1.0, 0.0, 1.0]);
            let g = |t: f64| {
                let d = 1.0 - t * t;
                let x = center + scale * t / d;
                let jac = scale * (1.0 + t * t) / (d * d);
                if !x.is_finite() || !jac.is_finite() {
                    return Complex64::new(0.0, 0.0);
                }
                let v = f(x);
                if v == Complex64::new(0.0, 0.0) {
                    v
                } else {
                    v * jac
                }
            };
            integrate_intervals(g, &sorted_unique(cuts), opts)
        }
    }
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * (1.0 + a.abs()));
    v
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
    res_abs: f64,
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
        self.error
            .partial_cmp(&other.error)
            .unwrap_or(Ordering::Equal)
    }
}

fn integrate_intervals<F>(
    f: F,
    cuts: &[f64],
    opts: &QuadOptions,
) -> Result<QuadratureResult, QuadError>
where
    F: Fn(f64) -> Complex64,
{
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0usize;
    for w in cuts.windows(2) {
        let seg = kronrod15(&f, w[0], w[1])?;
        evaluations += 15;
        heap.push(seg);
    }
    loop {
        let total: Complex64 = heap.iter().map(|s| s.value).sum();
        let err: f64 = heap.iter().map(|s| s.error).sum();
        // Below 50 eps * int|f| subdivision cannot help; the estimate says so.
        let floor = 50.0 * f64::EPSILON * heap.iter().map(|s| s.res_abs).sum::<f64>();
        let target = (opts.rel_tol * total.norm()).max(opts.abs_tol).max(floor);
        let result = QuadratureResult {
            value: total,
            error_estimate: err,
            evaluations,
        };
        if err <= target {
            return Ok(result);
        }
        if evaluations + 30 > opts.max_evaluations {
            return Err(QuadError::NonConvergence { best: result });
        }
        let worst = heap.pop().expect("at least one segment");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval at floating-point resolution: accept what we have.
            return Err(QuadError::NonConvergence { best: result });
        }
        heap.push(kronrod15(&f, worst.a, mid)?);
        heap.push(kronrod15(&f, mid, worst.b)?);
        evaluations += 30;
    }
}

fn kronrod15<F>(f: &F, a: f64, b: f64) -> Result<Segment, QuadError>
where
    F: Fn(f64) -> Complex64,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |x: f64| -> Result<Complex64, QuadError> {
        let v = f(x);
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            Err(QuadError::NonFinite { x })
        }
    };
    let fc = eval(center)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_k = fc.norm() * WGK[7];
    let mut fv = [(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)); 7];
    for (j, x) in XGK.iter().take(7).enumerate() {
        let dx = half * x;
        let f1 = eval(center - dx)?;
        let f2 = eval(center + dx)?;
        fv[j] = (f1, f2);
        kronrod += (f1 + f2) * WGK[j];
        abs_k += (f1.norm() + f2.norm()) * WGK[j];
        if j % 2 == 1 {
            gauss += (f1 + f2) * WG[j / 2];
        }
    }
    let mean = kronrod * 0.5;
    let mut asc = WGK[7] * (fc - mean).norm();
    for (j, (f1, f2)) in fv.iter().enumerate() {
        asc += WGK[j] * ((f1 - mean).norm() + (f2 - mean).norm());
    }
    let value = kronrod * half;
    let res_abs = abs_k * half.abs();
    let res_asc = asc * half.abs();
    let mut err = ((kronrod - gauss) * half).norm();
    if res_asc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / res_asc).powf(1.5);
        err = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Ok(Segment {
        a,
        b,
        value,
        error: err,
        res_abs,
    })
}

/// Fixed composite 15-point Kronrod rule on [a, b] with `panels` equal panels.
fn composite_kronrod<F>(f: F, a: f64, b: f64, panels: usize) -> Complex64
where
    F: Fn(f64) -> Complex64,
{
    let h = (b - a) / panels as f64;
    let mut sum = Complex64::new(0.0, 0.0);
    for k in 0..panels {
        let lo = a + h * k as f64;
        let center = lo + 0.5 * h;
        let half = 0.5 * h;
        let mut s = f(center) * WGK[7];
        for (j, x) in XGK.iter().take(7).enumerate() {
            s += (f(center - half * x) + f(center + half * x)) * WGK[j];
        }
        sum += s * half;
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("erfi({z}) is outside the supported range (|Re z^2| must stay below {ERFI_MAX_EXPONENT})")]
pub struct RangeError {
    pub z: Complex64,
}

/// Largest Re(z^2) accepted by [`erfi_complex`]; beyond it erfi overflows.
pub const ERFI_MAX_EXPONENT: f64 = 700.0;
const ERFI_SERIES_RADIUS: f64 = 2.0;
const ERFI_QUADRATURE_RADIUS: f64 = 12.0;

/// Imaginary error function `erfi(z) = -i erf(iz)` for complex `z`.
///
/// Three regimes: the Maclaurin series for |z| <= 2, a composite Kronrod
/// evaluation of `2z/sqrt(pi) * int_0^1 exp(z^2 s^2) ds` up to |z| = 12, and
/// the Laplace continued fraction for erfc beyond that.
pub fn erfi_complex(z: Complex64) -> Result<Complex64, RangeError> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(RangeError { z });
    }
    let z2 = z * z;
    if z2.re > ERFI_MAX_EXPONENT || z.norm() > 1e6 {
        return Err(RangeError { z });
    }
    let r = z.norm();
    if r <= ERFI_SERIES_RADIUS {
        Ok(erfi_series(z))
    } else if r <= ERFI_QUADRATURE_RADIUS {
        let panels = (r * r).ceil() as usize + 4;
        let integral = composite_kronrod(|s| (z2 * (s * s)).exp(), 0.0, 1.0, panels);
        Ok(integral * z * (2.0 / PI.sqrt()))
    } else {
        Ok(erfi_continued_fraction(z))
    }
}

fn erfi_series(z: Complex64) -> Complex64 {
    let z2 = z * z;
    // term_n = z^(2n+1) / n!
    let mut term = z;
    let mut sum = z;
    for n in 1..200 {
        term *= z2 / n as f64;
        let contrib = term / (2 * n + 1) as f64;
        sum += contrib;
        if contrib.norm() <= 1e-17 * sum.norm() {
            break;
        }
    }
    sum * (2.0 / PI.sqrt())
}

/// erfc(zeta) for Re(zeta) >= 0, |zeta| large, by backward evaluation of the
/// Laplace continued fraction.
fn erfc_continued_fraction(zeta: Complex64) -> Complex64 {
    const DEPTH: usize = 240;
    let mut tail = zeta;
    for k in (1..=DEPTH).rev() {
        tail = zeta + (k as f64 * 0.5) / tail;
    }
    (-zeta * zeta).exp() / (tail * PI.sqrt())
}

fn erfi_continued_fraction(z: Complex64) -> Complex64 {
    let i = Complex64::i();
    // erfi(z) = -i erf(iz); erf is odd, so fold zeta into the right half plane.
    let mut zeta = i * z;
    let mut sign = 1.0;
    if zeta.re < 0.0 {
        zeta = -zeta;
        sign = -1.0;
    }
    let erf = Complex64::new(1.0, 0.0) - erfc_continued_fraction(zeta);
    -i * erf * sign
}

/// Faddeeva function `w(z) = exp(-z^2) (1 + i erfi(z))`, expressed through erfi.
pub fn faddeeva_via_erfi(z: Complex64) -> Result<Complex64, RangeError> {
    let e = erfi_complex(z)?;
    Ok((-z * z).exp() * (Complex64::new(1.0, 0.0) + Complex64::i() * e))
}
