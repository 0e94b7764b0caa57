//! Experiment specifications loaded from TOML.
//!
//! ```toml
//! kind = "benchmark"        # gain_compare | convergence_m | convergence_np | benchmark
//! seeds = [0, 1, 2]         # optional
//! output_dir = "out"        # optional
//!
//! [benchmark]               # optional; the section must match `kind`
//! t_final = 40.0
//! runs = 50
//! ```
//!
//! Every key has a default; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::density::GaussianMixture;
use crate::error::{Error, Result};
use crate::gain::HhatMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    GainCompare,
    ConvergenceM,
    ConvergenceNp,
    Benchmark,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::GainCompare => "gain_compare",
            ExperimentKind::ConvergenceM => "convergence_m",
            ExperimentKind::ConvergenceNp => "convergence_np",
            ExperimentKind::Benchmark => "benchmark",
        }
    }
}

/// Uniform evaluation grid for gain errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridParams {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            min: -2.0,
            max: 2.0,
            points: 2001,
        }
    }
}

/// `½ N(−μ, σ²) + ½ N(μ, σ²)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixtureParams {
    pub mu: f64,
    pub variance: f64,
}

impl Default for MixtureParams {
    fn default() -> Self {
        Self { mu: 1.0, variance: 0.2 }
    }
}

impl MixtureParams {
    pub fn build(&self) -> Result<GaussianMixture> {
        GaussianMixture::symmetric_bimodal(self.mu, self.variance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainCompareParams {
    pub mixture: MixtureParams,
    pub particles: usize,
    pub bandwidth: f64,
    pub orders: Vec<usize>,
    pub grid: GridParams,
    pub hhat_mode: HhatMode,
}

impl Default for GainCompareParams {
    fn default() -> Self {
        Self {
            mixture: MixtureParams::default(),
            particles: 200,
            bandwidth: 0.5,
            orders: vec![1, 4, 7],
            grid: GridParams::default(),
            hhat_mode: HhatMode::SampleMean,
        }
    }
}

/// Shared by both convergence sweeps. The bandwidth is `c · Np^{-1/5}`;
/// `c` defaults to the AMISE-optimal constant of the mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceParams {
    pub mixture: MixtureParams,
    pub bandwidth_constant: Option<f64>,
    /// Orders swept at fixed `particles`.
    pub orders: Vec<usize>,
    pub particles: usize,
    /// Particle counts swept at fixed `order`.
    pub particle_counts: Vec<usize>,
    pub order: usize,
    pub grid: GridParams,
}

impl Default for ConvergenceParams {
    fn default() -> Self {
        Self {
            mixture: MixtureParams::default(),
            bandwidth_constant: None,
            orders: vec![2, 4, 6, 8, 10],
            particles: 200,
            particle_counts: vec![10, 30, 50, 100, 200],
            order: 10,
            grid: GridParams::default(),
        }
    }
}

impl ConvergenceParams {
    pub fn bandwidth_constant(&self) -> Result<f64> {
        match self.bandwidth_constant {
            Some(c) => Ok(c),
            None => Ok(self.mixture.build()?.amise_bandwidth_constant()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkParams {
    pub t_final: f64,
    pub dt: f64,
    /// Monte Carlo runs when no explicit seed list is given.
    pub runs: usize,
    pub particles: usize,
    pub order: usize,
    pub bandwidth: f64,
    pub state_noise_cov: f64,
    pub obs_noise_cov: f64,
    pub x0: f64,
    pub init_mean: f64,
    pub init_variance: f64,
    pub dm_eps: f64,
    pub dm_max_iters: usize,
    pub dm_centered: bool,
    pub normalize_by_obs_noise: bool,
    /// Ensemble sizes for the per-step gain timing.
    pub timing_particles: Vec<usize>,
    pub timing_steps: usize,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        Self {
            t_final: 40.0,
            dt: 0.01,
            runs: 50,
            particles: 10,
            order: 6,
            bandwidth: 0.5,
            state_noise_cov: 0.4,
            obs_noise_cov: 0.4,
            x0: 0.1,
            init_mean: 0.0,
            init_variance: 1.0,
            dm_eps: 0.1,
            dm_max_iters: 10_000,
            dm_centered: true,
            normalize_by_obs_noise: false,
            timing_particles: vec![200],
            timing_steps: 20,
        }
    }
}

impl BenchmarkParams {
    /// Horizon and run count of the full-length study.
    pub fn full() -> Self {
        Self {
            t_final: 400.0,
            runs: 100,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub gain_compare: Option<GainCompareParams>,
    #[serde(default)]
    pub convergence: Option<ConvergenceParams>,
    #[serde(default)]
    pub benchmark: Option<BenchmarkParams>,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            seeds: None,
            output_dir: None,
            gain_compare: None,
            convergence: None,
            benchmark: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let section_ok = match self.kind {
            ExperimentKind::GainCompare => self.convergence.is_none() && self.benchmark.is_none(),
            ExperimentKind::ConvergenceM | ExperimentKind::ConvergenceNp => {
                self.gain_compare.is_none() && self.benchmark.is_none()
            }
            ExperimentKind::Benchmark => self.gain_compare.is_none() && self.convergence.is_none(),
        };
        if !section_ok {
            return Err(Error::Config(format!(
                "parameter section does not belong to experiment kind `{}`",
                self.kind.name()
            )));
        }
        if let Some(seeds) = &self.seeds {
            if seeds.is_empty() {
                return Err(Error::Config("`seeds` must not be empty".into()));
            }
        }
        match self.kind {
            ExperimentKind::GainCompare => {
                let p = self.gain_compare_params();
                check_grid(&p.grid)?;
                positive("bandwidth", p.bandwidth)?;
                nonzero("particles", p.particles)?;
                if p.orders.is_empty() {
                    return Err(Error::Config("`orders` must not be empty".into()));
                }
            }
            ExperimentKind::ConvergenceM | ExperimentKind::ConvergenceNp => {
                let p = self.convergence_params();
                check_grid(&p.grid)?;
                positive("bandwidth_constant", p.bandwidth_constant()?)?;
                if self.kind == ExperimentKind::ConvergenceM {
                    nonzero("particles", p.particles)?;
                    if p.orders.len() < 2 || p.orders.contains(&0) {
                        return Err(Error::Config("`orders` needs at least two positive entries".into()));
                    }
                } else if p.particle_counts.len() < 2 || p.particle_counts.contains(&0) {
                    return Err(Error::Config("`particle_counts` needs at least two positive entries".into()));
                }
            }
            ExperimentKind::Benchmark => {
                let p = self.benchmark_params();
                positive("dt", p.dt)?;
                positive("dm_eps", p.dm_eps)?;
                positive("bandwidth", p.bandwidth)?;
                if !(p.t_final >= p.dt) {
                    return Err(Error::Config(format!("`t_final` ({}) must be at least `dt` ({})", p.t_final, p.dt)));
                }
                if p.state_noise_cov < 0.0 || p.obs_noise_cov < 0.0 || p.init_variance < 0.0 {
                    return Err(Error::Config("covariances must be non-negative".into()));
                }
                nonzero("runs", p.runs)?;
                if p.particles < 2 {
                    return Err(Error::Config("`particles` must be at least 2".into()));
                }
                if p.timing_particles.iter().any(|&n| n < 2) {
                    return Err(Error::Config("`timing_particles` entries must be at least 2".into()));
                }
            }
        }
        Ok(())
    }

    pub fn gain_compare_params(&self) -> GainCompareParams {
        self.gain_compare.clone().unwrap_or_default()
    }

    pub fn convergence_params(&self) -> ConvergenceParams {
        self.convergence.clone().unwrap_or_default()
    }

    pub fn benchmark_params(&self) -> BenchmarkParams {
        self.benchmark.clone().unwrap_or_default()
    }

    /// Seeds to run. Defaults: `0` for the gain comparison, `0..50` for the order
    /// and particle sweeps and `0..runs` for the benchmark.
    pub fn seed_list(&self) -> Vec<u64> {
        if let Some(s) = &self.seeds {
            return s.clone();
        }
        match self.kind {
            ExperimentKind::GainCompare => vec![0],
            ExperimentKind::ConvergenceM => (0..50).collect(),
            ExperimentKind::ConvergenceNp => (0..50).collect(),
            ExperimentKind::Benchmark => (0..self.benchmark_params().runs as u64).collect(),
        }
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentSpec::from_toml(&text)
}

/// Parses `"1,2,5"` or a half-open range `"0..20"`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let text = text.trim();
    let bad = |what: &str| Error::Config(format!("invalid seed list `{text}`: {what}"));
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad("range start"))?;
        let b: u64 = b.trim().parse().map_err(|_| bad("range end"))?;
        (a..b).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<u64>().map_err(|_| bad("expected integers")))
            .collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(bad("no seeds"));
    }
    Ok(seeds)
}

fn check_grid(g: &GridParams) -> Result<()> {
    if g.points < 2 || !(g.min < g.max) {
        return Err(Error::Config(format!(
            "grid needs at least 2 points and min < max, got {} points on [{}, {}]",
            g.points, g.min, g.max
        )));
    }
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("`{name}` must be positive, got {v}")))
    }
}

fn nonzero(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::Config(format!("`{name}` must be positive")))
    } else {
        Ok(())
    }
}
