//! Scalar figures of merit derived from efficiency curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Band, SystemParams};
use crate::noise::{integrated_noise, NoisePasses};
use crate::response::{check_grid, efficiency, efficiency_curve, reflectivity, uniform_grid, SpectralCurve};

/// Edges are bisected until the bracketing interval is below this width.
pub const EDGE_TOLERANCE: f64 = 1e-5;

/// Points used to scan a band for the worst reflectance.
const RESIDUAL_SAMPLES: usize = 1001;

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidThreshold(threshold))
    }
}

/// Index and value of the first global maximum.
pub fn peak(curve: &SpectralCurve<f64>) -> (usize, f64) {
    curve
        .values()
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
}

/// Grid indices of the contiguous run at or above `threshold` containing the
/// global maximum.
fn pass_run(curve: &SpectralCurve<f64>, threshold: f64) -> Option<(usize, usize)> {
    let v = curve.values();
    let (top, max) = peak(curve);
    if max < threshold {
        return None;
    }
    let mut lo = top;
    while lo > 0 && v[lo - 1] >= threshold {
        lo -= 1;
    }
    let mut hi = top;
    while hi + 1 < v.len() && v[hi + 1] >= threshold {
        hi += 1;
    }
    Some((lo, hi))
}

fn interpolate(x0: f64, y0: f64, x1: f64, y1: f64, level: f64) -> f64 {
    if y1 == y0 {
        0.5 * (x0 + x1)
    } else {
        x0 + (level - y0) * (x1 - x0) / (y1 - y0)
    }
}

fn band_from_edges(lo: f64, hi: f64) -> Option<Band> {
    // A single grid point above threshold has zero measurable width.
    Band::new(lo, hi).ok()
}

/// Pass band around the global maximum with edges linearly interpolated
/// between grid points. `None` when the maximum is below threshold.
pub fn bandwidth_at_threshold(curve: &SpectralCurve<f64>, threshold: f64) -> Result<Option<Band>> {
    check_threshold(threshold)?;
    let Some((lo, hi)) = pass_run(curve, threshold) else {
        return Ok(None);
    };
    let x = curve.grid();
    let v = curve.values();
    let left = if lo == 0 {
        x[0]
    } else {
        interpolate(x[lo - 1], v[lo - 1], x[lo], v[lo], threshold)
    };
    let right = if hi + 1 == x.len() {
        x[hi]
    } else {
        interpolate(x[hi], v[hi], x[hi + 1], v[hi + 1], threshold)
    };
    Ok(band_from_edges(left, right))
}

/// Crossing between `inside` (f >= level) and `outside` (f < level).
fn bisect<F>(f: &F, mut inside: f64, mut outside: f64, level: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    while (outside - inside).abs() > EDGE_TOLERANCE {
        let mid = 0.5 * (inside + outside);
        if f(mid)? >= level {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    Ok(0.5 * (inside + outside))
}

/// Like [`bandwidth_at_threshold`], with each edge bisected on `f` itself.
/// Edges that reach the end of the grid stay there.
pub fn bandwidth_refined<F>(curve: &SpectralCurve<f64>, threshold: f64, f: F) -> Result<Option<Band>>
where
    F: Fn(f64) -> Result<f64>,
{
    check_threshold(threshold)?;
    let Some((lo, hi)) = pass_run(curve, threshold) else {
        return Ok(None);
    };
    let x = curve.grid();
    let left = if lo == 0 {
        x[0]
    } else {
        bisect(&f, x[lo], x[lo - 1], threshold)?
    };
    let right = if hi + 1 == x.len() {
        x[hi]
    } else {
        bisect(&f, x[hi], x[hi + 1], threshold)?
    };
    Ok(band_from_edges(left, right))
}

/// Efficiency pass band of a configuration, sampled on `grid` and refined.
pub fn system_band(p: &SystemParams, grid: &[f64], threshold: f64) -> Result<Option<Band>> {
    check_threshold(threshold)?;
    let curve = efficiency_curve(p, grid)?;
    bandwidth_refined(&curve, threshold, |w| efficiency(p, w))
}

pub fn system_bandwidth(p: &SystemParams, grid: &[f64], threshold: f64) -> Result<f64> {
    Ok(system_band(p, grid, threshold)?.map_or(0.0, |b| b.width()))
}

/// Bandwidth relative to the same configuration without compensation.
pub fn expansion_factor(p: &SystemParams, grid: &[f64], threshold: f64) -> Result<f64> {
    expansion_factor_against(p, &p.without_compensation(), grid, threshold)
}

pub fn expansion_factor_against(
    p: &SystemParams,
    baseline: &SystemParams,
    grid: &[f64],
    threshold: f64,
) -> Result<f64> {
    let base = system_bandwidth(baseline, grid, threshold)?;
    if base == 0.0 {
        return Err(Error::ZeroBaseline { threshold });
    }
    Ok(system_bandwidth(p, grid, threshold)? / base)
}

/// Worst reflectance `max |r|^2` over a band, scanned on a fine grid.
pub fn impedance_residual(p: &SystemParams, band: Band) -> Result<f64> {
    let r2 = |w: f64| reflectivity(p, w).map(|r| r.norm_sqr());
    if band.lo == band.hi {
        return r2(band.lo);
    }
    let band = Band::new(band.lo, band.hi)?;
    let grid = uniform_grid(band.lo, band.hi, RESIDUAL_SAMPLES)?;
    grid.iter().try_fold(0.0f64, |m, &w| Ok(m.max(r2(w)?)))
}

/// Number of temporal modes storable: bandwidth (kappa units) times the
/// cavity rate in Hz times the storage time in seconds.
pub fn delay_bandwidth_product(bandwidth: f64, storage_time_s: f64, kappa_hz: f64) -> f64 {
    bandwidth * kappa_hz * storage_time_s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub threshold: f64,
    pub peak_efficiency: f64,
    pub peak_omega: f64,
    pub bandwidth: f64,
    pub band: Option<Band>,
    /// Against the uncompensated configuration; `None` when that has no band.
    pub expansion_factor: Option<f64>,
    pub impedance_residual: Option<f64>,
    /// One-pass noise photons over the band.
    pub integrated_noise: Option<f64>,
}

pub fn efficiency_report(p: &SystemParams, grid: &[f64], threshold: f64) -> Result<EfficiencyReport> {
    check_threshold(threshold)?;
    check_grid(grid)?;
    let curve = efficiency_curve(p, grid)?;
    let (i, peak_efficiency) = peak(&curve);
    let band = bandwidth_refined(&curve, threshold, |w| efficiency(p, w))?;
    let bandwidth = band.map_or(0.0, |b| b.width());
    let expansion_factor = match expansion_factor(p, grid, threshold) {
        Ok(x) => Some(x),
        Err(Error::ZeroBaseline { .. }) => None,
        Err(e) => return Err(e),
    };
    let (impedance_residual, integrated_noise) = match band {
        Some(b) => (
            Some(impedance_residual(p, b)?),
            Some(integrated_noise(p, b, NoisePasses::Single)?),
        ),
        None => (None, None),
    };
    Ok(EfficiencyReport {
        threshold,
        peak_efficiency,
        peak_omega: curve.grid()[i],
        bandwidth,
        band,
        expansion_factor,
        impedance_residual,
        integrated_noise,
    })
}
