//! Cavity-level observables built from the two susceptibilities.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lineshapes::{beta1, beta1_background, beta2, Beta1Method};
use crate::model::{MemoryBackground, Protocol, SystemParams};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Slack allowed on |T| <= 1 before the beam-splitter relation is rejected.
pub const PASSIVITY_SLACK: f64 = 1e-9;

pub const DEFAULT_GRID_MIN: f64 = -3.0;
pub const DEFAULT_GRID_MAX: f64 = 3.0;
pub const DEFAULT_GRID_POINTS: usize = 2001;

/// Samples on a strictly increasing frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralCurve<T> {
    grid: Vec<f64>,
    values: Vec<T>,
}

impl<T> SpectralCurve<T> {
    pub fn new(grid: Vec<f64>, values: Vec<T>) -> Result<Self> {
        check_grid(&grid)?;
        if grid.len() != values.len() {
            return Err(Error::InvalidGrid(format!(
                "{} frequencies but {} values",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &T)> {
        self.grid.iter().copied().zip(self.values.iter())
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> SpectralCurve<U> {
        SpectralCurve {
            grid: self.grid.clone(),
            values: self.values.iter().map(f).collect(),
        }
    }
}

pub fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("empty grid".into()));
    }
    if let Some(x) = grid.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidGrid(format!("non-finite frequency {x}")));
    }
    if let Some(w) = grid.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid(format!(
            "grid is not strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// `n` equally spaced points on `[min, max]`.
pub fn uniform_grid(min: f64, max: f64, n: usize) -> Result<Vec<f64>> {
    if !(min.is_finite() && max.is_finite()) || max <= min || n < 2 {
        return Err(Error::InvalidGrid(format!("{min}:{max}:{n}")));
    }
    let h = (max - min) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| if i == n - 1 { max } else { min + h * i as f64 })
        .collect())
}

pub fn default_grid() -> Vec<f64> {
    uniform_grid(DEFAULT_GRID_MIN, DEFAULT_GRID_MAX, DEFAULT_GRID_POINTS).expect("static grid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XiSign {
    Plus,
    Minus,
}

/// Both susceptibilities at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Susceptibilities {
    pub beta1: Complex64,
    pub beta1_ab: Complex64,
    pub beta2: Complex64,
}

impl Susceptibilities {
    pub fn evaluate(p: &SystemParams, omega: f64) -> Result<Self> {
        let b1 = beta1(&p.memory, omega, Beta1Method::ClosedForm)?;
        Ok(Self {
            beta1: b1,
            beta1_ab: b1 - beta1_background(&p.memory, omega),
            beta2: beta2(&p.compensator, omega)?,
        })
    }

    /// The memory term seen by the cavity resonance.
    pub fn cavity_beta1(&self, background: MemoryBackground) -> Complex64 {
        match background {
            MemoryBackground::Absorbed => self.beta1_ab,
            MemoryBackground::Explicit => self.beta1,
        }
    }
}

/// `kappa/2 -+ beta1 +- i beta2 +- i omega`.
pub fn xi_from(kappa: f64, beta1: Complex64, beta2: Complex64, omega: f64, sign: XiSign) -> Complex64 {
    let s = match sign {
        XiSign::Plus => -1.0,
        XiSign::Minus => 1.0,
    };
    0.5 * kappa + s * (beta1 - I * beta2 - I * omega)
}

fn xi_of(p: &SystemParams, s: &Susceptibilities, omega: f64, sign: XiSign) -> Complex64 {
    xi_from(
        p.cavity.kappa,
        s.cavity_beta1(p.cavity.memory_background),
        s.beta2,
        omega,
        sign,
    )
}

pub fn xi(p: &SystemParams, omega: f64, sign: XiSign) -> Result<Complex64> {
    let s = Susceptibilities::evaluate(p, omega)?;
    Ok(xi_of(p, &s, omega, sign))
}

fn nonzero_xi(p: &SystemParams, value: Complex64, omega: f64) -> Result<Complex64> {
    if value.norm() <= 1e-14 * p.cavity.kappa || !value.is_finite() {
        Err(Error::LasingThreshold { omega })
    } else {
        Ok(value)
    }
}

/// `r = xi+ / xi-`.
pub fn reflectivity(p: &SystemParams, omega: f64) -> Result<Complex64> {
    let s = Susceptibilities::evaluate(p, omega)?;
    let minus = nonzero_xi(p, xi_of(p, &s, omega, XiSign::Minus), omega)?;
    Ok(xi_of(p, &s, omega, XiSign::Plus) / minus)
}

fn xi_minus(p: &SystemParams, omega: f64) -> Result<(Susceptibilities, Complex64)> {
    let s = Susceptibilities::evaluate(p, omega)?;
    let x = nonzero_xi(p, xi_of(p, &s, omega, XiSign::Minus), omega)?;
    Ok((s, x))
}

/// Retrieval amplitude for the configured protocol.
pub fn transfer(p: &SystemParams, omega: f64) -> Result<Complex64> {
    transfer_for(p, p.protocol, omega)
}

/// Retrieval amplitude for either protocol: `-2 kappa Re beta1_ab / (xi-(w) xi-(-w))`
/// for CRIB, `-2 kappa Re beta1_ab / xi-(w)^2` for AFC/ROSE.
pub fn transfer_for(p: &SystemParams, protocol: Protocol, omega: f64) -> Result<Complex64> {
    let (s, xm) = xi_minus(p, omega)?;
    let num = -2.0 * p.cavity.kappa * s.beta1_ab.re;
    let den = match protocol {
        Protocol::Crib => xm * xi_minus(p, -omega)?.1,
        Protocol::AfcRose => xm * xm,
    };
    Ok(num / den)
}

pub fn efficiency(p: &SystemParams, omega: f64) -> Result<f64> {
    Ok(transfer(p, omega)?.norm_sqr())
}

pub fn efficiency_curve(p: &SystemParams, grid: &[f64]) -> Result<SpectralCurve<f64>> {
    check_grid(grid)?;
    let values = grid
        .par_iter()
        .map(|&w| efficiency(p, w))
        .collect::<Result<Vec<_>>>()?;
    SpectralCurve::new(grid.to_vec(), values)
}

/// Phase of the emitted echo, `atan2(Im xi-, Re xi-)`, in (-pi, pi].
pub fn echo_phase(p: &SystemParams, omega: f64) -> Result<f64> {
    let x = xi(p, omega, XiSign::Minus)?;
    Ok(x.im.atan2(x.re))
}

/// Remove 2 pi jumps between consecutive samples.
pub fn unwrap_phase(phases: &mut [f64]) {
    let mut offset = 0.0;
    for i in 1..phases.len() {
        let raw_prev = phases[i - 1] - offset;
        let raw = phases[i];
        let d = raw - raw_prev;
        if d > PI {
            offset -= 2.0 * PI * ((d + PI) / (2.0 * PI)).floor();
        } else if d < -PI {
            offset += 2.0 * PI * ((-d + PI) / (2.0 * PI)).floor();
        }
        phases[i] = raw + offset;
    }
}

pub fn echo_phase_curve(p: &SystemParams, grid: &[f64], unwrap: bool) -> Result<SpectralCurve<f64>> {
    check_grid(grid)?;
    let mut values = grid
        .par_iter()
        .map(|&w| echo_phase(p, w))
        .collect::<Result<Vec<_>>>()?;
    if unwrap {
        unwrap_phase(&mut values);
    }
    SpectralCurve::new(grid.to_vec(), values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoCoefficients {
    pub signal: Complex64,
    pub vacuum: f64,
}

/// Beam-splitter weights of the stored signal and the vacuum port after a
/// storage time `tau`.
pub fn echo_coefficients(p: &SystemParams, omega: f64, tau: f64) -> Result<EchoCoefficients> {
    let t = transfer(p, omega)?;
    beam_splitter(t, p.memory.gamma12, tau, omega)
}

pub fn beam_splitter(t: Complex64, gamma12: f64, tau: f64, omega: f64) -> Result<EchoCoefficients> {
    let modulus = t.norm();
    if modulus > 1.0 + PASSIVITY_SLACK {
        return Err(Error::ModelViolation { omega, modulus });
    }
    let decay = (-2.0 * gamma12 * tau).exp();
    let signal = decay * t;
    let vacuum = (1.0 - signal.norm_sqr()).max(0.0).sqrt();
    Ok(EchoCoefficients { signal, vacuum })
}

/// Spin coherence written into the spectral class `delta21` by a monochromatic
/// input of amplitude `input`, after time `t`. The collective factor
/// `sqrt(C1)` stands in for the per-atom coupling.
pub fn stored_coherence(p: &SystemParams, delta21: f64, t: f64, input: Complex64) -> Result<Complex64> {
    let m = &p.memory;
    let (_, xm) = xi_minus(p, delta21)?;
    let prefactor = I * (2.0 * PI * p.cavity.kappa).sqrt() * m.rabi * m.coupling.sqrt();
    let evolution = (-I * Complex64::new(delta21, -m.gamma12) * t).exp();
    let optical = Complex64::new(m.detuning - delta21, -m.gamma13);
    Ok(prefactor * input * evolution / (xm * optical))
}

/// Everything the spectrum writer reports at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSample {
    pub beta1: Complex64,
    pub beta2: Complex64,
    pub reflectance: f64,
    pub efficiency: f64,
    pub echo_phase: f64,
}

pub fn sample(p: &SystemParams, omega: f64) -> Result<SpectralSample> {
    let (s, xm) = xi_minus(p, omega)?;
    let xp = xi_of(p, &s, omega, XiSign::Plus);
    let t = transfer(p, omega)?;
    Ok(SpectralSample {
        beta1: s.beta1,
        beta2: s.beta2,
        reflectance: (xp / xm).norm_sqr(),
        efficiency: t.norm_sqr(),
        echo_phase: xm.im.atan2(xm.re),
    })
}

/// Full spectrum on a grid; the echo phase is unwrapped along the grid.
pub fn spectrum(p: &SystemParams, grid: &[f64]) -> Result<SpectralCurve<SpectralSample>> {
    check_grid(grid)?;
    let mut values = grid
        .par_iter()
        .map(|&w| sample(p, w))
        .collect::<Result<Vec<_>>>()?;
    let mut phases: Vec<f64> = values.iter().map(|s| s.echo_phase).collect();
    unwrap_phase(&mut phases);
    for (s, ph) in values.iter_mut().zip(phases) {
        s.echo_phase = ph;
    }
    SpectralCurve::new(grid.to_vec(), values)
}
