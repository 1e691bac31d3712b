//! Command-line front end: config parsing, output writers and subcommands.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::Error;
use crate::lineshapes::{beta1, beta2_kernel, beta2_sideband_kernel, Beta1Method};
use crate::metrics::{delay_bandwidth_product, efficiency_report, system_band, EfficiencyReport};
use crate::model::{
    denormalize, normalize_physical, presets, validate, Band, CavityParams, CompensatorParams,
    DistributionSpec, MemoryBackground, MemoryEnsembleParams, ModulationSpec, Protocol, Shape,
    SystemParams,
};
use crate::noise::{integrated_noise, noise_curve, NoisePasses};
use crate::optimize::{maximize_bandwidth, FreeParamSpec, OptimizationResult, ParamPath};
use crate::response::{
    beam_splitter, spectrum, transfer_for, uniform_grid, xi, XiSign, DEFAULT_GRID_MAX,
    DEFAULT_GRID_MIN, DEFAULT_GRID_POINTS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

const DEFAULT_THRESHOLDS: [f64; 2] = [0.9, 0.95];
const DEFAULT_BUDGET: usize = 500;
const NOISE_THRESHOLD: f64 = 0.9;

#[derive(Debug, Parser)]
#[command(name = "qmem", version, about = "Impedance-matched cavity quantum memory with dispersion compensation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Susceptibilities, reflectance, efficiency and echo phase on a grid.
    Curves(RunArgs),
    /// Noise spectrum and photons per pulse.
    Noise(RunArgs),
    /// Search the configured free parameters for the widest band.
    Optimize(RunArgs),
    /// Run the numerical self-checks, and check a config if given.
    Validate(ValidateArgs),
    /// Convert between laboratory units and kappa units.
    Convert(ConvertArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Frequency grid as min:max:points, in kappa units.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Express a kappa-unit config in laboratory units with this cavity rate (Hz).
    #[arg(long)]
    pub kappa_hz: Option<f64>,
    /// Also report the delay-bandwidth product for this storage time (s).
    #[arg(long)]
    pub storage_seconds: Option<f64>,
}

/// Failure with the process exit code it maps to.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    fn numeric(e: Error) -> Self {
        let message = match e.omega() {
            Some(w) => format!("numeric failure at omega = {w}: {e}"),
            None => format!("numeric failure: {e}"),
        };
        Self {
            code: EXIT_NUMERIC,
            message,
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self::config(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::config(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParams(_) => Self {
                code: EXIT_VALIDATION,
                message: e.to_string(),
            },
            Error::InvalidGrid(_) | Error::InvalidThreshold(_) | Error::InvalidBand { .. } => {
                Self::config(e.to_string())
            }
            e => Self::numeric(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "`{key}`: ")?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn values(&self) -> crate::error::Result<Vec<f64>> {
        uniform_grid(self.min, self.max, self.points)
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            min: DEFAULT_GRID_MIN,
            max: DEFAULT_GRID_MAX,
            points: DEFAULT_GRID_POINTS,
        }
    }
}

pub fn parse_grid(s: &str) -> Result<GridSpec, ConfigError> {
    let bad = || ConfigError {
        line: None,
        key: Some("--grid".into()),
        message: format!("expected min:max:points, got `{s}`"),
    };
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let min: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let max: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let points: usize = parts[2].trim().parse().map_err(|_| bad())?;
    let g = GridSpec { min, max, points };
    check_grid_spec(&g, None)?;
    Ok(g)
}

fn check_grid_spec(g: &GridSpec, line: Option<usize>) -> Result<(), ConfigError> {
    if !(g.min.is_finite() && g.max.is_finite() && g.min < g.max && g.points >= 2) {
        return Err(ConfigError {
            line,
            key: Some("grid".into()),
            message: format!("need min < max and points >= 2 (got {}:{}:{})", g.min, g.max, g.points),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeConfig {
    pub threshold: f64,
    pub budget: usize,
    pub free: Vec<FreeParamSpec>,
}

/// Parsed configuration file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    /// Always in kappa units, converted already if `kappa_hz` was given.
    pub system: SystemParams,
    pub kappa_hz: Option<f64>,
    pub grid: GridSpec,
    pub thresholds: Vec<f64>,
    pub optimize: Option<OptimizeConfig>,
}

/// Flattened `dotted.key -> value` view of the document, consumed as read.
struct Fields<'a> {
    src: &'a str,
    map: BTreeMap<String, toml::Value>,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

/// Line where `key` is assigned, for diagnostics.
fn line_of(src: &str, key: &str) -> Option<usize> {
    let last = key.rsplit('.').next().unwrap_or(key);
    let mut section = String::new();
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(s) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = s.trim().to_string();
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else { continue };
        let lhs: String = lhs.split('.').map(|p| p.trim().trim_matches('"')).collect::<Vec<_>>().join(".");
        let full = if section.is_empty() {
            lhs.clone()
        } else {
            format!("{section}.{lhs}")
        };
        if full == key || (lhs == last && key.ends_with(&full)) {
            return Some(i + 1);
        }
    }
    None
}

impl<'a> Fields<'a> {
    fn parse(src: &'a str) -> Result<Self, ConfigError> {
        let table: toml::Table = src.parse().map_err(|e: toml::de::Error| {
            let line = e.span().map(|s| src[..s.start.min(src.len())].lines().count().max(1));
            ConfigError {
                line,
                key: None,
                message: e.message().to_string(),
            }
        })?;
        let mut map = BTreeMap::new();
        flatten("", &table, &mut map);
        Ok(Self { src, map })
    }

    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: line_of(self.src, key),
            key: Some(key.to_string()),
            message: message.into(),
        }
    }

    fn take(&mut self, key: &str) -> Option<toml::Value> {
        self.map.remove(key)
    }

    fn number_opt(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Float(x)) => Ok(Some(x)),
            Some(toml::Value::Integer(n)) => Ok(Some(n as f64)),
            Some(_) => Err(self.err(key, "expected a number")),
        }
    }

    fn number(&mut self, key: &str) -> Result<f64, ConfigError> {
        self.number_opt(key)?.ok_or_else(|| ConfigError {
            line: None,
            key: Some(key.to_string()),
            message: "missing required key".into(),
        })
    }

    fn number_or(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.number_opt(key)?.unwrap_or(default))
    }

    fn count_or(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(toml::Value::Integer(n)) if n >= 0 => Ok(n as usize),
            Some(_) => Err(self.err(key, "expected a non-negative integer")),
        }
    }

    fn string_opt(&mut self, key: &str) -> Result<Option<String>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(self.err(key, "expected a string")),
        }
    }

    fn numbers(&mut self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    toml::Value::Float(x) => Ok(*x),
                    toml::Value::Integer(n) => Ok(*n as f64),
                    _ => Err(self.err(key, "expected an array of numbers")),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(_) => Err(self.err(key, "expected an array of numbers")),
        }
    }

    fn distribution(&mut self, prefix: &str) -> Result<DistributionSpec, ConfigError> {
        let shape_key = format!("{prefix}.shape");
        let shape = match self.string_opt(&shape_key)? {
            None => Shape::None,
            Some(s) => Shape::parse(&s).ok_or_else(|| {
                self.err(&shape_key, format!("unknown shape `{s}` (none, lorentzian, gaussian, rectangular)"))
            })?,
        };
        let width_key = format!("{prefix}.width");
        let width = if shape == Shape::None {
            self.number_or(&width_key, 0.0)?
        } else {
            self.number(&width_key)?
        };
        let center = self.number_or(&format!("{prefix}.center"), 0.0)?;
        Ok(DistributionSpec::new(shape, width, center))
    }

    fn remaining_keys(&self) -> Vec<String> {
        self.map.keys().cloned().collect()
    }
}

pub fn parse_config(src: &str) -> Result<RunConfig, ConfigError> {
    let mut f = Fields::parse(src)?;

    let protocol = match f.string_opt("protocol")? {
        None => Protocol::default(),
        Some(s) => Protocol::parse(&s).ok_or_else(|| f.err("protocol", format!("unknown protocol `{s}` (crib, afc_rose)")))?,
    };
    let memory_background = match f.string_opt("cavity.memory_background")? {
        None => MemoryBackground::default(),
        Some(s) => match s.as_str() {
            "absorbed" => MemoryBackground::Absorbed,
            "explicit" => MemoryBackground::Explicit,
            _ => return Err(f.err("cavity.memory_background", format!("unknown value `{s}` (absorbed, explicit)"))),
        },
    };
    let kappa_hz = f.number_opt("kappa_hz")?;
    let cavity = CavityParams {
        kappa: f.number_or("cavity.kappa", kappa_hz.unwrap_or(1.0))?,
        memory_background,
    };
    let memory = MemoryEnsembleParams {
        rabi: f.number("memory.rabi")?,
        detuning: f.number("memory.detuning")?,
        gamma12: f.number("memory.gamma12")?,
        gamma13: f.number("memory.gamma13")?,
        coupling: f.number("memory.coupling")?,
        broadening: f.distribution("memory.broadening")?,
    };
    let n_c = f.count_or("compensator.modulation.n_c", 0)?;
    let compensator = CompensatorParams {
        rabi: f.number("compensator.rabi")?,
        detuning: f.number("compensator.detuning")?,
        two_photon: f.number("compensator.two_photon")?,
        gamma45: f.number("compensator.gamma45")?,
        gamma46: f.number("compensator.gamma46")?,
        gamma56: f.number("compensator.gamma56")?,
        coupling: f.number("compensator.coupling")?,
        p6: f.number_opt("compensator.p6")?,
        modulation: ModulationSpec {
            n_c: u32::try_from(n_c).map_err(|_| f.err("compensator.modulation.n_c", "too large"))?,
            delta_sb: f.number_or("compensator.modulation.delta_sb", 0.0)?,
            alpha: f.number_or("compensator.modulation.alpha", 0.0)?,
        },
        broadening: f.distribution("compensator.broadening")?,
    };
    let raw = SystemParams {
        cavity,
        memory,
        compensator,
        protocol,
        storage_time: f.number_or("storage_time", 0.0)?,
    };
    let system = match kappa_hz {
        Some(k) => normalize_physical(k, &raw).map_err(|e| f.err("kappa_hz", e.to_string()))?,
        None => raw,
    };

    let grid = GridSpec {
        min: f.number_or("grid.min", DEFAULT_GRID_MIN)?,
        max: f.number_or("grid.max", DEFAULT_GRID_MAX)?,
        points: f.count_or("grid.points", DEFAULT_GRID_POINTS)?,
    };
    check_grid_spec(&grid, line_of(src, "grid.min").or(line_of(src, "grid.points")))?;
    let thresholds = f.numbers("thresholds")?.unwrap_or_else(|| DEFAULT_THRESHOLDS.to_vec());
    if thresholds.is_empty() || thresholds.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
        return Err(f.err("thresholds", "every threshold must lie in (0, 1)"));
    }

    let free_keys: Vec<String> = f
        .remaining_keys()
        .into_iter()
        .filter(|k| k.starts_with("optimize.free."))
        .collect();
    let has_optimize = f.remaining_keys().iter().any(|k| k.starts_with("optimize."));
    let optimize = if has_optimize {
        let threshold = f.number_or("optimize.threshold", thresholds[0])?;
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(f.err("optimize.threshold", "must lie in (0, 1)"));
        }
        let budget = f.count_or("optimize.budget", DEFAULT_BUDGET)?;
        if budget == 0 {
            return Err(f.err("optimize.budget", "must be at least 1"));
        }
        let mut free = Vec::new();
        for key in free_keys {
            let name = &key["optimize.free.".len()..];
            let path: ParamPath = name
                .parse()
                .map_err(|_| f.err(&key, format!("unknown parameter `{name}`")))?;
            let bounds = f.numbers(&key)?.unwrap_or_default();
            if bounds.len() != 2 {
                return Err(f.err(&key, "expected [lower, upper]"));
            }
            let initial = path.get(&system);
            let spec = FreeParamSpec::new(path, bounds[0], bounds[1], initial).map_err(|e| f.err(&key, e.to_string()))?;
            free.push(spec);
        }
        Some(OptimizeConfig { threshold, budget, free })
    } else {
        None
    };

    if let Some(key) = f.remaining_keys().first() {
        return Err(f.err(key, "unknown key"));
    }
    Ok(RunConfig {
        system,
        kappa_hz,
        grid,
        thresholds,
        optimize,
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let src = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&src).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn fmt_num(x: f64) -> String {
    // Shortest representation that reads back to the same value.
    let s = format!("{x:?}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

/// Render a configuration in the same flat format [`parse_config`] reads.
pub fn write_config(p: &SystemParams, kappa_hz: Option<f64>, grid: Option<&GridSpec>) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    if let Some(k) = kappa_hz {
        kv("kappa_hz", fmt_num(k));
    }
    kv("protocol", format!("\"{}\"", p.protocol.name()));
    kv("storage_time", fmt_num(p.storage_time));
    kv("cavity.kappa", fmt_num(p.cavity.kappa));
    let bg = match p.cavity.memory_background {
        MemoryBackground::Absorbed => "absorbed",
        MemoryBackground::Explicit => "explicit",
    };
    kv("cavity.memory_background", format!("\"{bg}\""));
    let m = &p.memory;
    kv("memory.rabi", fmt_num(m.rabi));
    kv("memory.detuning", fmt_num(m.detuning));
    kv("memory.gamma12", fmt_num(m.gamma12));
    kv("memory.gamma13", fmt_num(m.gamma13));
    kv("memory.coupling", fmt_num(m.coupling));
    kv("memory.broadening.shape", format!("\"{}\"", m.broadening.shape.name()));
    kv("memory.broadening.width", fmt_num(m.broadening.width));
    kv("memory.broadening.center", fmt_num(m.broadening.center));
    let c = &p.compensator;
    kv("compensator.rabi", fmt_num(c.rabi));
    kv("compensator.detuning", fmt_num(c.detuning));
    kv("compensator.two_photon", fmt_num(c.two_photon));
    kv("compensator.gamma45", fmt_num(c.gamma45));
    kv("compensator.gamma46", fmt_num(c.gamma46));
    kv("compensator.gamma56", fmt_num(c.gamma56));
    kv("compensator.coupling", fmt_num(c.coupling));
    if let Some(p6) = c.p6 {
        kv("compensator.p6", fmt_num(p6));
    }
    kv("compensator.modulation.n_c", c.modulation.n_c.to_string());
    kv("compensator.modulation.delta_sb", fmt_num(c.modulation.delta_sb));
    kv("compensator.modulation.alpha", fmt_num(c.modulation.alpha));
    kv("compensator.broadening.shape", format!("\"{}\"", c.broadening.shape.name()));
    kv("compensator.broadening.width", fmt_num(c.broadening.width));
    kv("compensator.broadening.center", fmt_num(c.broadening.center));
    if let Some(g) = grid {
        kv("grid.min", fmt_num(g.min));
        kv("grid.max", fmt_num(g.max));
        kv("grid.points", g.points.to_string());
    }
    s
}

struct Resolved {
    config: RunConfig,
    grid: GridSpec,
    thresholds: Vec<f64>,
    stem: String,
}

fn resolve(args: &RunArgs) -> Result<Resolved, CliError> {
    let config = load_config(&args.config)?;
    let grid = match &args.grid {
        Some(g) => parse_grid(g)?,
        None => config.grid,
    };
    let thresholds = match args.threshold {
        Some(t) if t > 0.0 && t < 1.0 => vec![t],
        Some(t) => return Err(CliError::config(format!("--threshold {t} must lie in (0, 1)"))),
        None => config.thresholds.clone(),
    };
    let errors: Vec<_> = validate(&config.system).into_iter().filter(|d| d.is_error()).collect();
    for d in validate(&config.system) {
        eprintln!("{}: {d}", args.config.display());
    }
    if !errors.is_empty() {
        return Err(Error::InvalidParams(errors).into());
    }
    let stem = args
        .config
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "qmem".into());
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    Ok(Resolved {
        config,
        grid,
        thresholds,
        stem,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct CurvesReport<'a> {
    params: &'a SystemParams,
    grid: GridSpec,
    reports: Vec<EfficiencyReport>,
}

fn cmd_curves(args: &RunArgs) -> Result<(), CliError> {
    let r = resolve(args)?;
    let p = &r.config.system;
    let grid = r.grid.values()?;
    let s = spectrum(p, &grid)?;
    let mut csv = String::from("omega,re_beta1,im_beta1,re_beta2,im_beta2,abs_r2,efficiency,echo_phase\n");
    for (w, v) in s.iter() {
        let _ = writeln!(
            csv,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            w, v.beta1.re, v.beta1.im, v.beta2.re, v.beta2.im, v.reflectance, v.efficiency, v.echo_phase
        );
    }
    let reports = r
        .thresholds
        .iter()
        .map(|&t| efficiency_report(p, &grid, t))
        .collect::<crate::error::Result<Vec<_>>>()?;
    write_file(&args.out.join(format!("{}.csv", r.stem)), &csv)?;
    let report = CurvesReport {
        params: p,
        grid: r.grid,
        reports,
    };
    write_file(&args.out.join(format!("{}.json", r.stem)), &to_json(&report))?;
    for rep in &report.reports {
        println!(
            "threshold {}: bandwidth {:.6} kappa, peak {:.6} at omega {:.4}",
            rep.threshold, rep.bandwidth, rep.peak_efficiency, rep.peak_omega
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    gamma45: f64,
    photons: f64,
}

#[derive(Serialize)]
struct NoiseReport<'a> {
    params: &'a SystemParams,
    grid: GridSpec,
    threshold: f64,
    band: Option<Band>,
    photons_one_pass: Option<f64>,
    photons_write_and_read: Option<f64>,
    gamma45_sweep: Vec<SweepRow>,
    sweep_monotone: bool,
}

/// Five log-spaced decoherence rates on [1e-5, 1e-2].
pub fn gamma45_sweep_points() -> Vec<f64> {
    (0..5).map(|k| 10f64.powf(-5.0 + 0.75 * k as f64)).collect()
}

fn cmd_noise(args: &RunArgs) -> Result<(), CliError> {
    let r = resolve(args)?;
    let p = &r.config.system;
    let grid = r.grid.values()?;
    let curve = noise_curve(p, &grid)?;
    let mut csv = String::from("omega,S\n");
    for (w, s) in curve.iter() {
        let _ = writeln!(csv, "{w:.16e},{s:.16e}");
    }
    let threshold = args.threshold.unwrap_or(NOISE_THRESHOLD);
    let band = system_band(p, &grid, threshold)?;
    let (one, two, sweep) = match band {
        Some(b) => {
            let sweep = gamma45_sweep_points()
                .into_iter()
                .map(|g| {
                    let mut q = *p;
                    q.compensator.gamma45 = g;
                    integrated_noise(&q, b, NoisePasses::Single).map(|n| SweepRow { gamma45: g, photons: n })
                })
                .collect::<crate::error::Result<Vec<_>>>()?;
            (
                Some(integrated_noise(p, b, NoisePasses::Single)?),
                Some(integrated_noise(p, b, NoisePasses::WriteAndRead)?),
                sweep,
            )
        }
        None => (None, None, Vec::new()),
    };
    let sweep_monotone = sweep.windows(2).all(|w| w[1].photons >= w[0].photons);
    write_file(&args.out.join(format!("{}_noise.csv", r.stem)), &csv)?;
    let report = NoiseReport {
        params: p,
        grid: r.grid,
        threshold,
        band,
        photons_one_pass: one,
        photons_write_and_read: two,
        gamma45_sweep: sweep,
        sweep_monotone,
    };
    write_file(&args.out.join(format!("{}_noise.json", r.stem)), &to_json(&report))?;
    match one {
        Some(n) => println!("noise photons over the {threshold} band: {n:.6e} (one pass)"),
        None => println!("no band reaches efficiency {threshold}"),
    }
    Ok(())
}

fn cmd_optimize(args: &RunArgs) -> Result<(), CliError> {
    let r = resolve(args)?;
    let opt = r
        .config
        .optimize
        .clone()
        .unwrap_or(OptimizeConfig {
            threshold: r.thresholds[0],
            budget: DEFAULT_BUDGET,
            free: Vec::new(),
        });
    let threshold = args.threshold.unwrap_or(opt.threshold);
    let grid = r.grid.values()?;
    let result: OptimizationResult = maximize_bandwidth(&r.config.system, &opt.free, &grid, threshold, opt.budget)?;
    write_file(&args.out.join(format!("{}_opt_result.json", r.stem)), &to_json(&result))?;
    let mut cfg = write_config(&result.best_params, None, Some(&r.grid));
    let _ = writeln!(cfg, "thresholds = [{}]", fmt_num(threshold));
    write_file(&args.out.join(format!("{}_opt.cfg", r.stem)), &cfg)?;
    println!(
        "best bandwidth {:.6} kappa at threshold {threshold} after {} evaluations",
        result.best_bandwidth, result.evaluations
    );
    Ok(())
}

/// One line of the self-check report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn outcome(name: &str, worst: f64, tolerance: f64) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        worst,
        tolerance,
        passed: worst < tolerance,
    }
}

fn rel_dev(a: Complex64, b: Complex64) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

/// Numerical self-checks: closed forms against quadrature, the two compensator
/// forms at n_c = 0, and exact algebraic identities.
pub fn self_checks() -> crate::error::Result<Vec<CheckOutcome>> {
    let grid101 = uniform_grid(-3.0, 3.0, 101)?;
    let mut out = Vec::new();
    for shape in [Shape::Lorentzian, Shape::Rectangular, Shape::Gaussian] {
        let mut m = presets::fig3a_blue().memory;
        m.broadening.shape = shape;
        if shape == Shape::Rectangular {
            m = presets::fig3b_blue().memory;
        }
        let mut worst: f64 = 0.0;
        for &w in &grid101 {
            let a = beta1(&m, w, Beta1Method::ClosedForm)?;
            let b = beta1(&m, w, Beta1Method::Quadrature)?;
            worst = worst.max(rel_dev(a, b));
        }
        out.push(outcome(&format!("beta1 closed form vs quadrature ({})", shape.name()), worst, 1e-6));
    }
    let mut worst: f64 = 0.0;
    for p in [presets::fig3a_blue(), presets::fig3b_blue(), presets::fig5_blue()] {
        let c = p.compensator;
        for &w in &grid101 {
            worst = worst.max(rel_dev(beta2_sideband_kernel(&c, w, c.two_photon), beta2_kernel(&c, w, c.two_photon)));
        }
    }
    out.push(outcome("beta2 sideband form at n_c = 0 vs single control", worst, 1e-10));

    let (mut sum_rule, mut ratio, mut split): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for (_, p) in presets::all() {
        for &w in &grid101 {
            let plus = xi(&p, w, XiSign::Plus)?;
            let minus = xi(&p, w, XiSign::Minus)?;
            sum_rule = sum_rule.max((plus + minus - p.cavity.kappa).norm() / (p.cavity.kappa + minus.norm()));
            let minus_neg = xi(&p, -w, XiSign::Minus)?;
            let tp = transfer_for(&p, Protocol::AfcRose, w)?;
            let tm = transfer_for(&p, Protocol::Crib, w)?;
            ratio = ratio.max(rel_dev(tp * minus, tm * minus_neg));
            let t = if tp.norm() <= 1.0 { tp } else { tp / tp.norm() };
            for tau in [0.0, 10.0, 1000.0] {
                let c = beam_splitter(t, p.memory.gamma12, tau, w)?;
                split = split.max((c.signal.norm_sqr() + c.vacuum * c.vacuum - 1.0).abs());
            }
        }
    }
    out.push(outcome("xi+ + xi- = kappa", sum_rule, 1e-12));
    out.push(outcome("T+ xi-(w) = T- xi-(-w)", ratio, 1e-12));
    out.push(outcome("|signal|^2 + vacuum^2 = 1", split, 1e-12));
    Ok(out)
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), CliError> {
    let mut failed = false;
    if let Some(path) = &args.config {
        let config = load_config(path)?;
        let diagnostics = validate(&config.system);
        for d in &diagnostics {
            println!("{}: {d}", path.display());
        }
        if diagnostics.iter().any(|d| d.is_error()) {
            failed = true;
        } else {
            println!("{}: parameters valid", path.display());
        }
    }
    for c in self_checks()? {
        println!(
            "{} {} (worst {:.3e}, tolerance {:.0e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.worst,
            c.tolerance
        );
        failed |= !c.passed;
    }
    if failed {
        Err(CliError {
            code: EXIT_VALIDATION,
            message: "validation failed".into(),
        })
    } else {
        Ok(())
    }
}

fn cmd_convert(args: &ConvertArgs) -> Result<(), CliError> {
    let config = load_config(&args.config)?;
    let text = match (config.kappa_hz, args.kappa_hz) {
        (Some(_), Some(_)) => {
            return Err(CliError::config("config is already in laboratory units; drop --kappa-hz"));
        }
        (Some(_), None) => write_config(&config.system, None, Some(&config.grid)),
        (None, Some(k)) => {
            let raw = denormalize(k, &config.system).map_err(|e| CliError::config(e.to_string()))?;
            write_config(&raw, Some(k), Some(&config.grid))
        }
        (None, None) => {
            return Err(CliError::config(
                "nothing to convert: give kappa_hz in the config or --kappa-hz on the command line",
            ));
        }
    };
    match &args.out {
        Some(path) => write_file(path, &text)?,
        None => print!("{text}"),
    }
    if let Some(seconds) = args.storage_seconds {
        let kappa_hz = config.kappa_hz.or(args.kappa_hz).expect("checked above");
        let grid = config.grid.values()?;
        let threshold = config.thresholds[0];
        let b = system_band(&config.system, &grid, threshold)?.map_or(0.0, |b| b.width());
        eprintln!(
            "delay-bandwidth product: {:.6e} ({b:.6} kappa at threshold {threshold}, kappa = {kappa_hz} Hz, tau = {seconds} s)",
            delay_bandwidth_product(b, seconds, kappa_hz)
        );
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Curves(a) => cmd_curves(a),
        Command::Noise(a) => cmd_noise(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Convert(a) => cmd_convert(a),
    }
}

/// Cap rayon's pool from `QMEM_THREADS`, if set.
pub fn configure_threads() {
    if let Ok(v) = std::env::var("QMEM_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("QMEM_THREADS ignored: {e}");
                }
            }
            _ => log::warn!("QMEM_THREADS must be a positive integer, got `{v}`"),
        }
    }
}
