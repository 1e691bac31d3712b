//! Vacuum noise emitted into the cavity mode by the compensating ensemble.
//!
//! Spontaneous Raman scattering from atoms left in |6> and from the |4>-|5>
//! decoherence feeds photons into the output. The spectral density is
//!
//! ```text
//! S(w) = kappa^2 C2 / |xi-(w)|^2 * [ g56 p6 / |Xi|^2 + Om'^2 (g45 p4 + (g46 + g56) p6) / |Gamma Xi|^2 ]
//! Gamma = g45 + i (w - delta)
//! Xi    = g56 + i (Delta' - w) + Om'^2 / Gamma
//! ```
//!
//! with `p4 = 1 - p6`. Only the central control component drives the
//! scattering; sidebands enter through `xi-` alone.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Band, CompensatorParams, Shape, SystemParams};
use crate::numerics::{adaptive_quad_with, Domain, QuadOptions};
use crate::response::{check_grid, xi, SpectralCurve, XiSign};

const NOISE_REL_TOL: f64 = 1e-9;
const NOISE_ABS_TOL: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePasses {
    /// Noise picked up while writing the pulse in.
    #[default]
    Single,
    /// Write-in plus read-out; time reversal makes the two equal.
    WriteAndRead,
}

impl NoisePasses {
    fn factor(self) -> f64 {
        match self {
            NoisePasses::Single => 1.0,
            NoisePasses::WriteAndRead => 2.0,
        }
    }
}

/// Per-class bracket for a compensator class with two-photon detuning `delta`.
fn bracket(c: &CompensatorParams, omega: f64, delta: f64) -> Result<f64> {
    let gamma = Complex64::new(c.gamma45, omega - delta);
    if gamma.norm() == 0.0 {
        return Err(Error::NoisePole { omega });
    }
    let r2 = c.rabi * c.rabi;
    let big_xi = Complex64::new(c.gamma56, c.detuning - omega) + r2 / gamma;
    let xi2 = big_xi.norm_sqr();
    if xi2 == 0.0 || !xi2.is_finite() {
        return Err(Error::NoisePole { omega });
    }
    let p6 = c.p6();
    let p4 = 1.0 - p6;
    let spont = c.gamma56 * p6 / xi2;
    let raman = r2 * (c.gamma45 * p4 + (c.gamma46 + c.gamma56) * p6) / (gamma.norm_sqr() * xi2);
    Ok(spont + raman)
}

/// Approximate real frequencies where `Gamma Xi` is small.
fn resonances(c: &CompensatorParams, delta: f64) -> Vec<f64> {
    let mut pts = vec![delta];
    let sum = c.detuning + delta;
    let disc = (c.detuning - delta).powi(2) - 4.0 * c.rabi * c.rabi;
    if disc >= 0.0 {
        pts.push(0.5 * (sum - disc.sqrt()));
        pts.push(0.5 * (sum + disc.sqrt()));
    }
    pts
}

fn averaged_bracket(c: &CompensatorParams, omega: f64) -> Result<f64> {
    let g = &c.broadening;
    let center = c.two_photon + g.center;
    if g.shape == Shape::None {
        return bracket(c, omega, center);
    }
    let domain = match g.shape {
        Shape::Rectangular => Domain::Finite {
            a: center - 0.5 * g.width,
            b: center + 0.5 * g.width,
        },
        _ => Domain::RealLine {
            center,
            scale: g.width,
        },
    };
    // Class resonances in the delta' plane: Gamma vanishes at delta' = omega,
    // the light-shifted Raman line at delta' ~ omega + Om'^2 / Delta'.
    let mut pts = vec![omega];
    if c.detuning != 0.0 {
        pts.push(omega + c.rabi * c.rabi / c.detuning);
    }
    let opts = QuadOptions {
        rel_tol: NOISE_REL_TOL,
        abs_tol: NOISE_ABS_TOL,
        ..QuadOptions::default()
    }
    .with_breakpoints(pts);
    let density = |d: f64| match g.shape {
        Shape::Rectangular => 1.0 / g.width,
        _ => g.density(d - c.two_photon),
    };
    let r = adaptive_quad_with(
        |d| match bracket(c, omega, d) {
            Ok(b) => Complex64::from(b * density(d)),
            Err(_) => Complex64::from(f64::NAN),
        },
        domain,
        &opts,
    )?;
    Ok(r.value.re)
}

/// Output noise spectral density (photons per unit frequency, kappa units).
pub fn noise_spectrum(p: &SystemParams, omega: f64) -> Result<f64> {
    let c = &p.compensator;
    if c.coupling == 0.0 {
        return Ok(0.0);
    }
    let b = averaged_bracket(c, omega)?;
    let xm = xi(p, omega, XiSign::Minus)?;
    if xm.norm() == 0.0 {
        return Err(Error::LasingThreshold { omega });
    }
    let kappa = p.cavity.kappa;
    Ok(kappa * kappa * c.coupling * b / xm.norm_sqr())
}

pub fn noise_curve(p: &SystemParams, grid: &[f64]) -> Result<SpectralCurve<f64>> {
    use rayon::prelude::*;
    check_grid(grid)?;
    let values = grid
        .par_iter()
        .map(|&w| noise_spectrum(p, w))
        .collect::<Result<Vec<_>>>()?;
    SpectralCurve::new(grid.to_vec(), values)
}

/// Noise photons per pulse collected over `band`.
pub fn integrated_noise(p: &SystemParams, band: Band, passes: NoisePasses) -> Result<f64> {
    let band = Band::new(band.lo, band.hi)?;
    let c = &p.compensator;
    if c.coupling == 0.0 {
        return Ok(0.0);
    }
    let opts = QuadOptions {
        rel_tol: NOISE_REL_TOL,
        abs_tol: NOISE_ABS_TOL,
        ..QuadOptions::default()
    }
    .with_breakpoints(resonances(c, c.two_photon + c.broadening.center));
    let f = |w: f64| match noise_spectrum(p, w) {
        Ok(s) => Complex64::from(s),
        Err(_) => Complex64::from(f64::NAN),
    };
    // The integrand only fails at an exact pole; report it as such.
    let r = adaptive_quad_with(
        f,
        Domain::Finite {
            a: band.lo,
            b: band.hi,
        },
        &opts,
    )
    .map_err(|e| match e {
        crate::numerics::QuadError::NonFinite { x } => match noise_spectrum(p, x) {
            Err(err) => err,
            Ok(_) => Error::Quadrature(e),
        },
        other => Error::Quadrature(other),
    })?;
    Ok(passes.factor() * r.value.re)
}
