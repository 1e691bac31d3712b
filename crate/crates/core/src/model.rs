//! Physical configuration of the memory: cavity, memory ensemble, dispersion
//! compensating ensemble and retrieval protocol.
//!
//! Every rate and detuning is stored in units of the cavity decay rate
//! (kappa = 1). Collective couplings `C = N * P * |g|^2` carry units of
//! kappa^2. [`normalize_physical`] converts laboratory values.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    None,
    Lorentzian,
    Gaussian,
    Rectangular,
}

impl Shape {
    pub fn name(self) -> &'static str {
        match self {
            Shape::None => "none",
            Shape::Lorentzian => "lorentzian",
            Shape::Gaussian => "gaussian",
            Shape::Rectangular => "rectangular",
        }
    }

    pub fn parse(s: &str) -> Option<Shape> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Some(Shape::None),
            "lorentzian" | "lorentz" => Some(Shape::Lorentzian),
            "gaussian" | "gauss" => Some(Shape::Gaussian),
            "rectangular" | "rect" | "uniform" => Some(Shape::Rectangular),
            _ => None,
        }
    }
}

/// Inhomogeneous distribution of transition frequencies.
///
/// `width` is the Lorentzian half width, the Gaussian standard deviation, or
/// the full width of the rectangular window, matching the densities
///
/// * Lorentzian: `w / (pi (w^2 + x^2))`
/// * Gaussian: `exp(-x^2 / (2 w^2)) / (sqrt(2 pi) w)`
/// * rectangular: `rect(x / w) / w`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub shape: Shape,
    pub width: f64,
    pub center: f64,
}

impl DistributionSpec {
    pub const fn none() -> Self {
        Self {
            shape: Shape::None,
            width: 0.0,
            center: 0.0,
        }
    }

    pub const fn new(shape: Shape, width: f64, center: f64) -> Self {
        Self {
            shape,
            width,
            center,
        }
    }

    pub fn is_none(&self) -> bool {
        self.shape == Shape::None
    }

    /// Probability density at `x`. Zero everywhere for `Shape::None`, which
    /// represents a delta at `center`.
    pub fn density(&self, x: f64) -> f64 {
        let w = self.width;
        let d = x - self.center;
        match self.shape {
            Shape::None => 0.0,
            Shape::Lorentzian => w / (PI * (w * w + d * d)),
            Shape::Gaussian => (-d * d / (2.0 * w * w)).exp() / ((2.0 * PI).sqrt() * w),
            Shape::Rectangular => {
                let r = (d / w).abs();
                if r < 0.5 {
                    1.0 / w
                } else if r == 0.5 {
                    0.5 / w
                } else {
                    0.0
                }
            }
        }
    }
}

impl Default for DistributionSpec {
    fn default() -> Self {
        Self::none()
    }
}

/// How the off-resonant (non-Raman) background of the memory ensemble enters
/// the cavity response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryBackground {
    /// The cavity resonance is tuned to absorb the background pulling; only
    /// the Raman part of the memory susceptibility shifts the cavity.
    #[default]
    Absorbed,
    /// The full susceptibility, background included, enters xi.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    pub kappa: f64,
    #[serde(default)]
    pub memory_background: MemoryBackground,
}

impl Default for CavityParams {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            memory_background: MemoryBackground::Absorbed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryEnsembleParams {
    /// Control Rabi frequency Omega_L.
    pub rabi: f64,
    /// Single-photon detuning Delta_L.
    pub detuning: f64,
    pub gamma12: f64,
    pub gamma13: f64,
    /// Collective coupling N1 P1 |g13|^2.
    pub coupling: f64,
    /// Distribution of the spin splitting delta_21.
    pub broadening: DistributionSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModulationSpec {
    /// Sideband orders per side; 2 n_c + 1 control components in total.
    pub n_c: u32,
    pub delta_sb: f64,
    pub alpha: f64,
}

impl ModulationSpec {
    /// Sideband order `n` as (Rabi amplitude, single-photon detuning, two-photon detuning).
    pub fn sideband(&self, n: i32, rabi: f64, detuning: f64, two_photon: f64) -> (f64, f64, f64) {
        let amp = self.alpha.powi(n.abs()) * rabi;
        let nf = n as f64;
        (amp, detuning - nf * self.delta_sb, two_photon + nf * self.delta_sb)
    }

    pub fn orders(&self) -> impl Iterator<Item = i32> {
        let n = self.n_c as i32;
        -n..=n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompensatorParams {
    /// Control Rabi frequency Omega_L'.
    pub rabi: f64,
    /// Single-photon detuning Delta_L'.
    pub detuning: f64,
    /// Two-photon detuning delta.
    pub two_photon: f64,
    /// |4>-|5> coherence decay (also written gamma_54).
    pub gamma45: f64,
    pub gamma46: f64,
    pub gamma56: f64,
    /// Collective coupling N2 P4 |g56|^2.
    pub coupling: f64,
    /// Residual population of |6>; `None` uses the steady-state value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p6: Option<f64>,
    #[serde(default)]
    pub modulation: ModulationSpec,
    /// Distribution of the |4>-|5> splitting around `two_photon`: the
    /// density is evaluated at `delta' - two_photon`.
    #[serde(default)]
    pub broadening: DistributionSpec,
}

impl CompensatorParams {
    /// Population left in |6>: the override if set, otherwise
    /// `Omega'^2 / (gamma56^2 + Delta'^2)`.
    pub fn p6(&self) -> f64 {
        self.p6.unwrap_or_else(|| {
            let denom = self.gamma56 * self.gamma56 + self.detuning * self.detuning;
            if denom == 0.0 {
                0.0
            } else {
                self.rabi * self.rabi / denom
            }
        })
    }

    pub fn p4(&self) -> f64 {
        1.0 - self.p6()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Controllable reversal of inhomogeneous broadening (time-reversed echo).
    #[default]
    Crib,
    /// Atomic frequency comb / revival of silent echo.
    AfcRose,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Crib => "crib",
            Protocol::AfcRose => "afc_rose",
        }
    }

    pub fn parse(s: &str) -> Option<Protocol> {
        match s.to_ascii_lowercase().as_str() {
            "crib" => Some(Protocol::Crib),
            "afc_rose" | "afc" | "rose" => Some(Protocol::AfcRose),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub cavity: CavityParams,
    pub memory: MemoryEnsembleParams,
    pub compensator: CompensatorParams,
    pub protocol: Protocol,
    /// Storage time tau in units of 1/kappa.
    pub storage_time: f64,
}

impl SystemParams {
    /// Same configuration with the compensating control switched off.
    pub fn without_compensation(&self) -> Self {
        let mut p = *self;
        p.compensator.rabi = 0.0;
        p.compensator.modulation.n_c = 0;
        p
    }

    /// Cavity with no atoms at all.
    pub fn empty_cavity() -> Self {
        let mut p = presets::fig3a_blue();
        p.memory.coupling = 0.0;
        p.compensator.coupling = 0.0;
        p
    }
}

/// Closed frequency interval `[lo, hi]` in kappa units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_finite() && hi.is_finite() && lo < hi {
            Ok(Self { lo, hi })
        } else {
            Err(Error::InvalidBand { lo, hi })
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    fn error(message: String) -> Self {
        Self {
            severity: Severity::Error,
            message,
        }
    }

    fn warning(message: String) -> Self {
        Self {
            severity: Severity::Warning,
            message,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

/// A "much greater than" comparison is flagged once the ratio drops below this.
const SOFT_RATIO: f64 = 5.0;
/// Largest tolerated gamma12 * tau.
const MAX_DECAY_PRODUCT: f64 = 0.1;
/// Largest tolerated |Omega_n / (Delta_n + i gamma46)| for sidebands.
const MAX_SIDEBAND_EXCITATION: f64 = 0.2;

/// Check invariants (errors) and validity regimes (warnings).
pub fn validate(p: &SystemParams) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let m = &p.memory;
    let c = &p.compensator;

    let finite = [
        ("cavity.kappa", p.cavity.kappa),
        ("memory.rabi", m.rabi),
        ("memory.detuning", m.detuning),
        ("memory.gamma12", m.gamma12),
        ("memory.gamma13", m.gamma13),
        ("memory.coupling", m.coupling),
        ("memory.broadening.width", m.broadening.width),
        ("memory.broadening.center", m.broadening.center),
        ("compensator.rabi", c.rabi),
        ("compensator.detuning", c.detuning),
        ("compensator.two_photon", c.two_photon),
        ("compensator.gamma45", c.gamma45),
        ("compensator.gamma46", c.gamma46),
        ("compensator.gamma56", c.gamma56),
        ("compensator.coupling", c.coupling),
        ("compensator.modulation.delta_sb", c.modulation.delta_sb),
        ("compensator.modulation.alpha", c.modulation.alpha),
        ("compensator.broadening.width", c.broadening.width),
        ("compensator.broadening.center", c.broadening.center),
        ("storage_time", p.storage_time),
    ];
    for (name, v) in finite {
        if !v.is_finite() {
            out.push(Diagnostic::error(format!("non-finite value: {name} = {v}")));
        }
    }
    if !out.is_empty() {
        return out;
    }

    if p.cavity.kappa <= 0.0 {
        out.push(Diagnostic::error(format!(
            "non-positive cavity decay rate: cavity.kappa = {}",
            p.cavity.kappa
        )));
    }
    for (name, v) in [
        ("memory.gamma12", m.gamma12),
        ("memory.gamma13", m.gamma13),
        ("compensator.gamma45", c.gamma45),
        ("compensator.gamma46", c.gamma46),
        ("compensator.gamma56", c.gamma56),
    ] {
        if v < 0.0 {
            out.push(Diagnostic::error(format!("negative decay rate: {name} = {v}")));
        }
    }
    for (name, v) in [("memory.coupling", m.coupling), ("compensator.coupling", c.coupling)] {
        if v < 0.0 {
            out.push(Diagnostic::error(format!("negative coupling: {name} = {v}")));
        }
    }
    for (name, b) in [("memory.broadening", &m.broadening), ("compensator.broadening", &c.broadening)] {
        if b.shape != Shape::None && b.width <= 0.0 {
            out.push(Diagnostic::error(format!(
                "{name}: {} broadening needs a positive width (got {})",
                b.shape.name(),
                b.width
            )));
        }
    }
    if let Some(p6) = c.p6 {
        if !(0.0..=1.0).contains(&p6) {
            out.push(Diagnostic::error(format!("compensator.p6 = {p6} is not a population in [0, 1]")));
        }
    }
    if !(0.0..=1.0).contains(&c.modulation.alpha) {
        out.push(Diagnostic::error(format!(
            "compensator.modulation.alpha = {} outside [0, 1]",
            c.modulation.alpha
        )));
    }
    if p.storage_time < 0.0 {
        out.push(Diagnostic::error(format!("negative storage time: {}", p.storage_time)));
    }
    if out.iter().any(Diagnostic::is_error) {
        return out;
    }

    if m.coupling > 0.0 && m.detuning.abs() < SOFT_RATIO * m.gamma13 {
        out.push(Diagnostic::warning(format!(
            "memory detuning |Delta_L| = {} is not much larger than gamma13 = {}",
            m.detuning.abs(),
            m.gamma13
        )));
    }
    if c.rabi != 0.0 && c.coupling > 0.0 {
        let scale = c.gamma46.max(c.gamma56).max(c.rabi.abs());
        if c.detuning.abs() < SOFT_RATIO * scale {
            out.push(Diagnostic::warning(format!(
                "adiabatic elimination marginal: |Delta_L'| = {} vs max(gamma46, gamma56, Omega_L') = {}",
                c.detuning.abs(),
                scale
            )));
        }
        if c.modulation.n_c > 0 {
            for n in c.modulation.orders() {
                let (amp, det, _) = c.modulation.sideband(n, c.rabi, c.detuning, c.two_photon);
                let excitation = amp / (det * det + c.gamma46 * c.gamma46).sqrt();
                if excitation > MAX_SIDEBAND_EXCITATION {
                    out.push(Diagnostic::warning(format!(
                        "sideband {n} not weakly exciting: |Omega/(Delta + i gamma46)| = {excitation:.3}"
                    )));
                }
            }
        }
    }
    if m.gamma12 * p.storage_time > MAX_DECAY_PRODUCT {
        out.push(Diagnostic::warning(format!(
            "gamma12 * tau = {} is not small; the beam-splitter relation assumes gamma12 tau << 1",
            m.gamma12 * p.storage_time
        )));
    }
    out
}

/// Reject parameter sets with invariant violations.
pub fn ensure_valid(p: &SystemParams) -> Result<()> {
    let errors: Vec<_> = validate(p).into_iter().filter(Diagnostic::is_error).collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidParams(errors))
    }
}

fn rescale(p: &SystemParams, rate: f64) -> SystemParams {
    let mut q = *p;
    let coupling = rate * rate;
    q.cavity.kappa /= rate;
    let m = &mut q.memory;
    m.rabi /= rate;
    m.detuning /= rate;
    m.gamma12 /= rate;
    m.gamma13 /= rate;
    m.coupling /= coupling;
    m.broadening.width /= rate;
    m.broadening.center /= rate;
    let c = &mut q.compensator;
    c.rabi /= rate;
    c.detuning /= rate;
    c.two_photon /= rate;
    c.gamma45 /= rate;
    c.gamma46 /= rate;
    c.gamma56 /= rate;
    c.coupling /= coupling;
    c.modulation.delta_sb /= rate;
    c.broadening.width /= rate;
    c.broadening.center /= rate;
    q.storage_time *= rate;
    q
}

/// Convert a configuration given in laboratory units (rates in Hz, couplings
/// in Hz^2, storage time in s) to kappa units.
pub fn normalize_physical(kappa_hz: f64, raw: &SystemParams) -> Result<SystemParams> {
    if !(kappa_hz > 0.0 && kappa_hz.is_finite()) {
        return Err(Error::NonPositiveKappa(kappa_hz));
    }
    Ok(rescale(raw, kappa_hz))
}

/// Inverse of [`normalize_physical`].
pub fn denormalize(kappa_hz: f64, p: &SystemParams) -> Result<SystemParams> {
    if !(kappa_hz > 0.0 && kappa_hz.is_finite()) {
        return Err(Error::NonPositiveKappa(kappa_hz));
    }
    Ok(rescale(p, 1.0 / kappa_hz))
}

/// Reference parameter sets, in kappa units.
pub mod presets {
    use super::*;

    const GAMMA_SPIN: f64 = 1e-4;
    const GAMMA_OPTICAL: f64 = 0.1;

    fn base(memory: MemoryEnsembleParams, compensator: CompensatorParams) -> SystemParams {
        SystemParams {
            cavity: CavityParams::default(),
            memory,
            compensator,
            // Both protocol families should give one efficiency;
            // |xi_-(omega)|^4 is the form that makes that true.
            protocol: Protocol::AfcRose,
            storage_time: 0.0,
        }
    }

    fn compensator(rabi: f64, two_photon: f64, coupling: f64, delta_sb: f64, alpha: f64) -> CompensatorParams {
        CompensatorParams {
            rabi,
            detuning: 100.0,
            two_photon,
            gamma45: GAMMA_SPIN,
            gamma46: GAMMA_OPTICAL,
            gamma56: GAMMA_OPTICAL,
            coupling,
            p6: None,
            modulation: ModulationSpec {
                n_c: 0,
                delta_sb,
                alpha,
            },
            broadening: DistributionSpec::none(),
        }
    }

    /// Lorentzian broadening, single compensating control.
    pub fn fig3a_blue() -> SystemParams {
        base(
            MemoryEnsembleParams {
                rabi: 9.65,
                detuning: 100.0,
                gamma12: GAMMA_SPIN,
                gamma13: GAMMA_OPTICAL,
                coupling: 750.0,
                broadening: DistributionSpec::new(Shape::Lorentzian, 10.0, 0.0),
            },
            compensator(5.5, -3.55, 1150.0, 4.6, 0.53),
        )
    }

    pub fn fig3a_red() -> SystemParams {
        fig3a_blue().without_compensation()
    }

    pub fn fig3a_green() -> SystemParams {
        let mut p = fig3a_blue();
        p.compensator.modulation.n_c = 1;
        p
    }

    /// Rectangular broadening, single compensating control.
    pub fn fig3b_blue() -> SystemParams {
        base(
            MemoryEnsembleParams {
                rabi: 10.7,
                detuning: 150.0,
                gamma12: GAMMA_SPIN,
                gamma13: GAMMA_OPTICAL,
                coupling: 480.0,
                broadening: DistributionSpec::new(Shape::Rectangular, 14.0, 0.0),
            },
            compensator(5.75, -5.6, 480.0, 3.0, 0.53),
        )
    }

    pub fn fig3b_red() -> SystemParams {
        fig3b_blue().without_compensation()
    }

    pub fn fig3b_green() -> SystemParams {
        let mut p = fig3b_blue();
        p.compensator.modulation.n_c = 1;
        p
    }

    /// Fig. 3(a) with 5% of the compensating ensemble left in |6>.
    pub fn fig4() -> SystemParams {
        let mut p = fig3a_blue();
        p.compensator.p6 = Some(0.05);
        p
    }

    /// Rectangular broadening on both ensembles.
    pub fn fig5_blue() -> SystemParams {
        let mut comp = compensator(13.55, -12.8, 837.0, 0.0, 0.0);
        comp.broadening = DistributionSpec::new(Shape::Rectangular, 14.0, 0.0);
        base(
            MemoryEnsembleParams {
                rabi: 3.0,
                detuning: 150.0,
                gamma12: GAMMA_SPIN,
                gamma13: GAMMA_OPTICAL,
                coupling: 482.0,
                broadening: DistributionSpec::new(Shape::Rectangular, 14.0, 0.0),
            },
            comp,
        )
    }

    pub fn fig5_red() -> SystemParams {
        fig5_blue().without_compensation()
    }

    pub fn fig5_green() -> SystemParams {
        let mut p = fig5_blue();
        p.compensator.coupling = 1700.0;
        p.compensator.two_photon = -12.7;
        p.compensator.modulation = ModulationSpec {
            n_c: 1,
            delta_sb: 21.1,
            alpha: 0.87,
        };
        p
    }

    /// Every bundled configuration with its fixture name.
    pub fn all() -> Vec<(&'static str, SystemParams)> {
        vec![
            ("fig3a_red", fig3a_red()),
            ("fig3a_blue", fig3a_blue()),
            ("fig3a_green", fig3a_green()),
            ("fig3b_red", fig3b_red()),
            ("fig3b_blue", fig3b_blue()),
            ("fig3b_green", fig3b_green()),
            ("fig4", fig4()),
            ("fig5_red", fig5_red()),
            ("fig5_blue", fig5_blue()),
            ("fig5_green", fig5_green()),
        ]
    }
}
