//! Susceptibilities of the two ensembles as seen by the cavity mode.
//!
//! `beta1` is the memory ensemble, `beta2` the dispersion compensator. Both
//! are complex rates in kappa units; they enter the cavity response through
//! `xi = kappa/2 + beta1 - i beta2 - i omega`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{CompensatorParams, DistributionSpec, MemoryEnsembleParams, Shape};
use crate::numerics::{adaptive_quad_with, faddeeva_via_erfi, Domain, QuadOptions};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Outside this region the erfi form of the Gaussian average loses digits to
/// cancellation and the quadrature path is used instead.
const GAUSSIAN_MAX_IM: f64 = 1.5;
const GAUSSIAN_MAX_ABS: f64 = 10.0;

const ORACLE_REL_TOL: f64 = 1e-11;
const ORACLE_ABS_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Beta1Method {
    #[default]
    ClosedForm,
    Quadrature,
}

/// Memory response of a single spin class with splitting `delta21`.
struct MemoryKernel {
    /// gamma13 + i (Delta_L - omega)
    a: Complex64,
    /// omega + i gamma12
    z: Complex64,
    rabi2: f64,
}

impl MemoryKernel {
    fn new(m: &MemoryEnsembleParams, omega: f64) -> Self {
        Self {
            a: Complex64::new(m.gamma13, m.detuning - omega),
            z: Complex64::new(omega, m.gamma12),
            rabi2: m.rabi * m.rabi,
        }
    }

    /// `1 / (a - i Omega^2 / (delta - z))`, valid for complex `delta` too.
    fn eval(&self, delta: Complex64) -> Complex64 {
        let d = delta - self.z;
        d / (self.a * d - I * self.rabi2)
    }

    /// Raman pole in the delta21 plane; always in the upper half plane.
    fn pole(&self) -> Complex64 {
        self.z + I * self.rabi2 / self.a
    }
}

/// Memory susceptibility, averaged over the spin-splitting distribution.
pub fn beta1(m: &MemoryEnsembleParams, omega: f64, method: Beta1Method) -> Result<Complex64> {
    let g = &m.broadening;
    let k = MemoryKernel::new(m, omega);
    if g.shape == Shape::None {
        return Ok(m.coupling * k.eval(Complex64::from(g.center)));
    }
    match method {
        Beta1Method::Quadrature => beta1_quadrature(m, omega),
        Beta1Method::ClosedForm => match g.shape {
            Shape::None => unreachable!(),
            Shape::Lorentzian => Ok(m.coupling * k.eval(Complex64::new(g.center, -g.width))),
            Shape::Rectangular => {
                let half = 0.5 * g.width;
                let p = k.pole();
                // The segment from lo - p to hi - p stays below the real axis,
                // so the principal log of the ratio is already continuous.
                let log = ((g.center + half - p) / (g.center - half - p)).ln();
                Ok(m.coupling * (1.0 / k.a + I * k.rabi2 / (g.width * k.a * k.a) * log))
            }
            Shape::Gaussian => {
                let sigma = g.width;
                let zeta = (k.pole() - g.center) / (2f64.sqrt() * sigma);
                if zeta.im > GAUSSIAN_MAX_IM || zeta.norm() > GAUSSIAN_MAX_ABS {
                    log::debug!("gaussian beta1 at omega = {omega}: zeta = {zeta} out of closed-form range, integrating");
                    return beta1_quadrature(m, omega);
                }
                let w = faddeeva_via_erfi(zeta)?;
                let avg = 1.0 / k.a - (PI / 2.0).sqrt() * k.rabi2 * w / (sigma * k.a * k.a);
                Ok(m.coupling * avg)
            }
        },
    }
}

/// Integration domain for averaging over `g` shifted by `offset`.
fn average_domain(g: &DistributionSpec, offset: f64) -> Domain {
    let center = g.center + offset;
    match g.shape {
        Shape::Rectangular => Domain::Finite {
            a: center - 0.5 * g.width,
            b: center + 0.5 * g.width,
        },
        _ => Domain::RealLine {
            center,
            scale: g.width,
        },
    }
}

fn average<F>(g: &DistributionSpec, offset: f64, breakpoints: Vec<f64>, kernel: F) -> Result<Complex64>
where
    F: Fn(f64) -> Complex64,
{
    let domain = average_domain(g, offset);
    let opts = QuadOptions {
        rel_tol: ORACLE_REL_TOL,
        abs_tol: ORACLE_ABS_TOL,
        ..QuadOptions::default()
    }
    .with_breakpoints(breakpoints);
    let density = |x: f64| match g.shape {
        // Open interval: the edge value never matters for the integral.
        Shape::Rectangular => 1.0 / g.width,
        _ => g.density(x - offset),
    };
    let r = adaptive_quad_with(|x| kernel(x) * density(x), domain, &opts)?;
    Ok(r.value)
}

fn beta1_quadrature(m: &MemoryEnsembleParams, omega: f64) -> Result<Complex64> {
    let k = MemoryKernel::new(m, omega);
    let pole = k.pole();
    let v = average(&m.broadening, 0.0, vec![pole.re], |d| k.eval(Complex64::from(d)))?;
    Ok(m.coupling * v)
}

/// Non-Raman part of the memory response, `C1 / (gamma13 + i (Delta_L - omega))`.
/// This is the Omega_L -> 0 limit of every shape.
pub fn beta1_background(m: &MemoryEnsembleParams, omega: f64) -> Complex64 {
    m.coupling / Complex64::new(m.gamma13, m.detuning - omega)
}

/// Raman absorption part, `beta1 - beta1_background`.
pub fn beta1_ab(m: &MemoryEnsembleParams, omega: f64, method: Beta1Method) -> Result<Complex64> {
    Ok(beta1(m, omega, method)? - beta1_background(m, omega))
}

/// Compensator kernel for one class with two-photon detuning `delta_p` and a
/// single control component.
pub fn beta2_kernel(c: &CompensatorParams, omega: f64, delta_p: f64) -> Complex64 {
    let r2 = c.rabi * c.rabi;
    let dl = c.detuning;
    let u = Complex64::new(omega - delta_p, c.gamma45);
    let num = r2 * (1.0 / Complex64::new(dl, c.gamma46) - u / (dl * dl + c.gamma46 * c.gamma46));
    let den = r2 + Complex64::new(dl + delta_p - omega, -c.gamma56) * u;
    num / den
}

/// Compensator kernel with a phase-modulated control: components
/// `n = -n_c..=n_c` with amplitude `alpha^|n| Omega'`, detuning
/// `Delta' - n Delta_SB` and two-photon detuning `delta_p + n Delta_SB`.
/// Reduces to [`beta2_kernel`] for `n_c = 0`.
pub fn beta2_sideband_kernel(c: &CompensatorParams, omega: f64, delta_p: f64) -> Complex64 {
    let mut num = Complex64::new(0.0, 0.0);
    let mut den = Complex64::new(c.detuning + delta_p - omega, -c.gamma56);
    for n in c.modulation.orders() {
        let (amp, det, two) = c.modulation.sideband(n, c.rabi, c.detuning, delta_p);
        let r2 = amp * amp;
        let raman = 1.0 / Complex64::new(two - omega, -c.gamma45);
        num += r2 / Complex64::new(det, c.gamma46) * (raman + 1.0 / Complex64::new(det, -c.gamma46));
        den -= r2 * raman;
    }
    -num / den
}

/// Approximate real poles of the compensator kernel in the delta' plane.
fn beta2_breakpoints(c: &CompensatorParams, omega: f64) -> Vec<f64> {
    let mut pts = vec![omega - c.detuning];
    for n in c.modulation.orders() {
        let (amp, det, _) = c.modulation.sideband(n, c.rabi, c.detuning, 0.0);
        let shift = omega - n as f64 * c.modulation.delta_sb;
        pts.push(shift);
        if det != 0.0 {
            pts.push(shift + amp * amp / det);
        }
    }
    pts
}

/// Dispersion-compensator susceptibility.
pub fn beta2(c: &CompensatorParams, omega: f64) -> Result<Complex64> {
    if c.rabi == 0.0 || c.coupling == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let modulated = c.modulation.n_c > 0;
    let kernel = |d: f64| {
        if modulated {
            beta2_sideband_kernel(c, omega, d)
        } else {
            beta2_kernel(c, omega, d)
        }
    };
    if c.broadening.shape == Shape::None {
        return Ok(c.coupling * kernel(c.two_photon + c.broadening.center));
    }
    let v = average(&c.broadening, c.two_photon, beta2_breakpoints(c, omega), kernel)?;
    Ok(c.coupling * v)
}
