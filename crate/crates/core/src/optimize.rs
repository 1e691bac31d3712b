//! Bounded Nelder-Mead search for configurations with the widest pass band.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{bandwidth_refined, peak};
use crate::model::{validate, SystemParams};
use crate::response::{efficiency, efficiency_curve};

/// Objective slope per unit of missing peak efficiency below threshold.
pub const PENALTY_SCALE: f64 = 10.0;
/// Objective assigned to configurations the model cannot evaluate.
pub const FAILURE_PENALTY: f64 = 1e3;
/// Initial simplex edge as a fraction of each box width.
const INITIAL_STEP: f64 = 0.05;
/// Simplex edge for the restart.
const RESTART_STEP: f64 = 0.01;
const F_TOL: f64 = 1e-10;
const X_TOL: f64 = 1e-7;

/// A tunable scalar inside [`SystemParams`], addressed by its dotted path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamPath {
    MemoryRabi,
    MemoryDetuning,
    MemoryCoupling,
    MemoryGamma12,
    MemoryGamma13,
    MemoryBroadeningWidth,
    MemoryBroadeningCenter,
    CompensatorRabi,
    CompensatorDetuning,
    CompensatorTwoPhoton,
    CompensatorCoupling,
    CompensatorGamma45,
    CompensatorGamma46,
    CompensatorGamma56,
    ModulationDeltaSb,
    ModulationAlpha,
    CompensatorBroadeningWidth,
    CompensatorBroadeningCenter,
}

const PATHS: [(ParamPath, &str); 18] = [
    (ParamPath::MemoryRabi, "memory.rabi"),
    (ParamPath::MemoryDetuning, "memory.detuning"),
    (ParamPath::MemoryCoupling, "memory.coupling"),
    (ParamPath::MemoryGamma12, "memory.gamma12"),
    (ParamPath::MemoryGamma13, "memory.gamma13"),
    (ParamPath::MemoryBroadeningWidth, "memory.broadening.width"),
    (ParamPath::MemoryBroadeningCenter, "memory.broadening.center"),
    (ParamPath::CompensatorRabi, "compensator.rabi"),
    (ParamPath::CompensatorDetuning, "compensator.detuning"),
    (ParamPath::CompensatorTwoPhoton, "compensator.two_photon"),
    (ParamPath::CompensatorCoupling, "compensator.coupling"),
    (ParamPath::CompensatorGamma45, "compensator.gamma45"),
    (ParamPath::CompensatorGamma46, "compensator.gamma46"),
    (ParamPath::CompensatorGamma56, "compensator.gamma56"),
    (ParamPath::ModulationDeltaSb, "compensator.modulation.delta_sb"),
    (ParamPath::ModulationAlpha, "compensator.modulation.alpha"),
    (ParamPath::CompensatorBroadeningWidth, "compensator.broadening.width"),
    (ParamPath::CompensatorBroadeningCenter, "compensator.broadening.center"),
];

impl ParamPath {
    pub fn all() -> impl Iterator<Item = ParamPath> {
        PATHS.iter().map(|(p, _)| *p)
    }

    pub fn name(self) -> &'static str {
        PATHS.iter().find(|(p, _)| *p == self).map(|(_, n)| *n).unwrap()
    }

    fn slot(self, p: &mut SystemParams) -> &mut f64 {
        let m = &mut p.memory;
        let c = &mut p.compensator;
        match self {
            ParamPath::MemoryRabi => &mut m.rabi,
            ParamPath::MemoryDetuning => &mut m.detuning,
            ParamPath::MemoryCoupling => &mut m.coupling,
            ParamPath::MemoryGamma12 => &mut m.gamma12,
            ParamPath::MemoryGamma13 => &mut m.gamma13,
            ParamPath::MemoryBroadeningWidth => &mut m.broadening.width,
            ParamPath::MemoryBroadeningCenter => &mut m.broadening.center,
            ParamPath::CompensatorRabi => &mut c.rabi,
            ParamPath::CompensatorDetuning => &mut c.detuning,
            ParamPath::CompensatorTwoPhoton => &mut c.two_photon,
            ParamPath::CompensatorCoupling => &mut c.coupling,
            ParamPath::CompensatorGamma45 => &mut c.gamma45,
            ParamPath::CompensatorGamma46 => &mut c.gamma46,
            ParamPath::CompensatorGamma56 => &mut c.gamma56,
            ParamPath::ModulationDeltaSb => &mut c.modulation.delta_sb,
            ParamPath::ModulationAlpha => &mut c.modulation.alpha,
            ParamPath::CompensatorBroadeningWidth => &mut c.broadening.width,
            ParamPath::CompensatorBroadeningCenter => &mut c.broadening.center,
        }
    }

    pub fn get(self, p: &SystemParams) -> f64 {
        let mut q = *p;
        *self.slot(&mut q)
    }

    pub fn set(self, p: &mut SystemParams, value: f64) {
        *self.slot(p) = value;
    }
}

impl fmt::Display for ParamPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ParamPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PATHS
            .iter()
            .find(|(_, n)| *n == s)
            .map(|(p, _)| *p)
            .ok_or_else(|| Error::Optimizer(format!("unknown parameter path `{s}`")))
    }
}

impl Serialize for ParamPath {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ParamPath {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeParamSpec {
    pub path: ParamPath,
    pub lower: f64,
    pub upper: f64,
    pub initial: f64,
}

impl FreeParamSpec {
    pub fn new(path: ParamPath, lower: f64, upper: f64, initial: f64) -> Result<Self> {
        let spec = Self {
            path,
            lower,
            upper,
            initial,
        };
        spec.check()?;
        Ok(spec)
    }

    /// Free parameter starting from its current value in `p`.
    pub fn around(path: ParamPath, lower: f64, upper: f64, p: &SystemParams) -> Result<Self> {
        Self::new(path, lower, upper, path.get(p))
    }

    pub fn check(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return Err(Error::Optimizer(format!(
                "{}: bounds [{}, {}] are not an interval",
                self.path, self.lower, self.upper
            )));
        }
        if !(self.lower..=self.upper).contains(&self.initial) {
            return Err(Error::Optimizer(format!(
                "{}: initial value {} outside [{}, {}]",
                self.path, self.initial, self.lower, self.upper
            )));
        }
        Ok(())
    }

    fn width(&self) -> f64 {
        self.upper - self.lower
    }

    fn clip(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper)
    }
}

/// Default search space: {Omega_L, Omega_L', delta, C2, Delta_SB, alpha}.
pub fn default_free_params(p: &SystemParams) -> Result<Vec<FreeParamSpec>> {
    let clamp_in = |path: ParamPath, lo: f64, hi: f64| {
        let v = path.get(p).clamp(lo, hi);
        FreeParamSpec::new(path, lo, hi, v)
    };
    let mut out = vec![
        clamp_in(ParamPath::MemoryRabi, 0.5, 30.0)?,
        clamp_in(ParamPath::CompensatorRabi, 0.0, 30.0)?,
        clamp_in(ParamPath::CompensatorTwoPhoton, -25.0, 25.0)?,
        clamp_in(ParamPath::CompensatorCoupling, 0.0, 5000.0)?,
    ];
    if p.compensator.modulation.n_c > 0 {
        out.push(clamp_in(ParamPath::ModulationDeltaSb, 0.0, 30.0)?);
        out.push(clamp_in(ParamPath::ModulationAlpha, 0.0, 1.0)?);
    }
    Ok(out)
}

/// Objective to minimize: `-bandwidth` when the pass band exists, otherwise
/// `(threshold - peak) * PENALTY_SCALE`. Both branches meet at zero.
pub fn bandwidth_objective(p: &SystemParams, grid: &[f64], threshold: f64) -> f64 {
    match try_objective(p, grid, threshold) {
        Ok(v) => v,
        Err(e) => {
            log::warn!("objective evaluation failed: {e}");
            FAILURE_PENALTY
        }
    }
}

fn try_objective(p: &SystemParams, grid: &[f64], threshold: f64) -> Result<f64> {
    if let Some(d) = validate(p).into_iter().find(|d| d.is_error()) {
        return Err(Error::InvalidParams(vec![d]));
    }
    let curve = efficiency_curve(p, grid)?;
    let (_, top) = peak(&curve);
    if top < threshold {
        return Ok((threshold - top) * PENALTY_SCALE);
    }
    let band = bandwidth_refined(&curve, threshold, |w| efficiency(p, w))?;
    Ok(-band.map_or(0.0, |b| b.width()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub x: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_params: SystemParams,
    pub best_bandwidth: f64,
    pub best_objective: f64,
    pub evaluations: usize,
    pub free: Vec<FreeParamSpec>,
    pub trace: Vec<TracePoint>,
}

struct Search<'a> {
    base: SystemParams,
    free: &'a [FreeParamSpec],
    grid: &'a [f64],
    threshold: f64,
    budget: usize,
    trace: Vec<TracePoint>,
}

impl Search<'_> {
    fn params_at(&self, x: &[f64]) -> SystemParams {
        let mut p = self.base;
        for (spec, &v) in self.free.iter().zip(x) {
            spec.path.set(&mut p, v);
        }
        p
    }

    fn clip(&self, x: &mut [f64]) {
        for (spec, v) in self.free.iter().zip(x.iter_mut()) {
            *v = spec.clip(*v);
        }
    }

    fn remaining(&self) -> usize {
        self.budget.saturating_sub(self.trace.len())
    }

    /// Evaluate a batch concurrently, recording in order. Points past the
    /// budget are not evaluated.
    fn eval_batch(&mut self, points: Vec<Vec<f64>>) -> Vec<Option<f64>> {
        let n = points.len().min(self.remaining());
        let values: Vec<f64> = points[..n]
            .par_iter()
            .map(|x| bandwidth_objective(&self.params_at(x), self.grid, self.threshold))
            .collect();
        let mut out = Vec::with_capacity(points.len());
        for (i, x) in points.into_iter().enumerate() {
            if i < n {
                self.trace.push(TracePoint {
                    x,
                    objective: values[i],
                });
                out.push(Some(values[i]));
            } else {
                out.push(None);
            }
        }
        out
    }

    fn eval(&mut self, x: Vec<f64>) -> Option<f64> {
        self.eval_batch(vec![x]).pop().flatten()
    }

    /// One Nelder-Mead run started at `start` with edge `step` times the box
    /// widths. Returns the best vertex.
    fn nelder_mead(&mut self, start: Vec<f64>, f_start: f64, step: f64) -> (Vec<f64>, f64) {
        let n = start.len();
        let mut vertices = vec![start.clone()];
        for i in 0..n {
            let mut v = start.clone();
            let spec = &self.free[i];
            let h = step * spec.width();
            // Step inward when the start sits on the upper bound.
            v[i] = if v[i] + h <= spec.upper { v[i] + h } else { v[i] - h };
            vertices.push(v);
        }
        let vals = self.eval_batch(vertices[1..].to_vec());
        let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.clone(), f_start)];
        for (v, f) in vertices.into_iter().skip(1).zip(vals) {
            match f {
                Some(f) => simplex.push((v, f)),
                None => return best_of(simplex),
            }
        }

        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let spread = simplex[n].1 - simplex[0].1;
            let diameter = simplex
                .iter()
                .skip(1)
                .map(|(v, _)| {
                    v.iter()
                        .zip(&simplex[0].0)
                        .zip(self.free)
                        .map(|((a, b), s)| ((a - b) / s.width()).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if spread.abs() <= F_TOL && diameter <= X_TOL || self.remaining() == 0 {
                break;
            }
            let centroid: Vec<f64> = (0..n)
                .map(|j| simplex[..n].iter().map(|(v, _)| v[j]).sum::<f64>() / n as f64)
                .collect();
            let worst = simplex[n].clone();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&worst.0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };
            let mut xr = along(1.0);
            self.clip(&mut xr);
            let Some(fr) = self.eval(xr.clone()) else { break };
            if fr < simplex[0].1 {
                let mut xe = along(2.0);
                self.clip(&mut xe);
                let Some(fe) = self.eval(xe.clone()) else {
                    simplex[n] = (xr, fr);
                    break;
                };
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
                continue;
            }
            let (mut xc, outside) = if fr < worst.1 { (along(0.5), true) } else { (along(-0.5), false) };
            self.clip(&mut xc);
            let Some(fc) = self.eval(xc.clone()) else { break };
            if (outside && fc <= fr) || (!outside && fc < worst.1) {
                simplex[n] = (xc, fc);
                continue;
            }
            // Shrink toward the best vertex.
            let best = simplex[0].0.clone();
            let shrunk: Vec<Vec<f64>> = simplex[1..]
                .iter()
                .map(|(v, _)| v.iter().zip(&best).map(|(a, b)| b + 0.5 * (a - b)).collect())
                .collect();
            let vals = self.eval_batch(shrunk.clone());
            for (k, (v, f)) in shrunk.into_iter().zip(vals).enumerate() {
                if let Some(f) = f {
                    simplex[k + 1] = (v, f);
                }
            }
        }
        best_of(simplex)
    }
}

fn best_of(simplex: Vec<(Vec<f64>, f64)>) -> (Vec<f64>, f64) {
    simplex
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("simplex has a vertex")
}

/// Widen the pass band at `threshold` by tuning `free`, spending at most
/// `budget` objective evaluations.
pub fn maximize_bandwidth(
    initial: &SystemParams,
    free: &[FreeParamSpec],
    grid: &[f64],
    threshold: f64,
    budget: usize,
) -> Result<OptimizationResult> {
    if budget == 0 {
        return Err(Error::Optimizer("budget must allow at least one evaluation".into()));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidThreshold(threshold));
    }
    for spec in free {
        spec.check()?;
    }
    let mut search = Search {
        base: *initial,
        free,
        grid,
        threshold,
        budget,
        trace: Vec::new(),
    };
    let x0: Vec<f64> = free.iter().map(|s| s.initial).collect();
    let f0 = search.eval(x0.clone()).expect("budget >= 1");
    let (mut best_x, mut best_f) = (x0.clone(), f0);
    if !free.is_empty() {
        let (x1, f1) = search.nelder_mead(x0, f0, INITIAL_STEP);
        if f1 < best_f {
            best_x = x1;
            best_f = f1;
        }
        if search.remaining() > free.len() {
            let (x2, f2) = search.nelder_mead(best_x.clone(), best_f, RESTART_STEP);
            if f2 < best_f {
                best_x = x2;
                best_f = f2;
            }
        }
    }
    if search.trace.iter().all(|t| t.objective >= FAILURE_PENALTY) {
        return Err(Error::Optimizer(format!(
            "all {} evaluations failed; last point {:?}",
            search.trace.len(),
            search.trace.last().map(|t| &t.x)
        )));
    }
    let best_params = search.params_at(&best_x);
    // Recompute rather than trust the penalized objective.
    let curve = efficiency_curve(&best_params, grid)?;
    let best_bandwidth = bandwidth_refined(&curve, threshold, |w| efficiency(&best_params, w))?
        .map_or(0.0, |b| b.width());
    Ok(OptimizationResult {
        best_params,
        best_bandwidth,
        best_objective: best_f,
        evaluations: search.trace.len(),
        free: free.to_vec(),
        trace: search.trace,
    })
}

/// Uncompensated reference with the memory control re-tuned for the widest
/// band on its own.
pub fn reoptimized_baseline(
    p: &SystemParams,
    grid: &[f64],
    threshold: f64,
    budget: usize,
) -> Result<OptimizationResult> {
    let red = p.without_compensation();
    let free = [FreeParamSpec::new(
        ParamPath::MemoryRabi,
        0.5,
        30.0,
        red.memory.rabi.clamp(0.5, 30.0),
    )?];
    maximize_bandwidth(&red, &free, grid, threshold, budget)
}
