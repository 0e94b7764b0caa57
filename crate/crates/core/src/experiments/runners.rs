use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{GaussianMixture, KdeModel, ParticleEnsemble};
use crate::error::{Error, Result};
use crate::filter::{fpf_run, strategy_for, FilterConfig, GainMethod, InitialDistribution};
use crate::gain::{
    exact_flux_on_grid, exact_gain_on_grid, DiffusionMap, GainClamps, HermiteGalerkin, HhatMode, ObservationFn,
};
use crate::quadrature::QuadratureRule;
use crate::rng::derive_seed;
use crate::sde::{simulate_truth, SdeModel};

use super::config::{BenchmarkParams, ExperimentKind, ExperimentSpec, GridParams};
use super::metrics::{armse, grid_error_values, loglog_slope, rmse, uniform_grid, Norm};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a header line and one comma-separated line per row.
pub fn write_csv<S: AsRef<str>>(path: &Path, header: &[&str], rows: &[Vec<S>]) -> Result<()> {
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        let cells: Vec<&str> = row.iter().map(|c| c.as_ref()).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn float_rows(columns: &[&[f64]]) -> Vec<Vec<String>> {
    let n = columns.first().map_or(0, |c| c.len());
    (0..n).map(|i| columns.iter().map(|c| fmt_f64(c[i])).collect()).collect()
}

fn write_summary<T: Serialize>(out: &Path, report: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(report).map_err(|e| Error::Numerical(e.to_string()))?;
    std::fs::write(out.join("summary.json"), text + "\n")?;
    Ok(())
}

fn grid_points(g: &GridParams) -> Result<Vec<f64>> {
    uniform_grid(g.min, g.max, g.points)
}

/// `ĥ = ∫ h p dx` for a known density.
fn true_hhat(mix: &GaussianMixture, h: &ObservationFn, quad: &QuadratureRule) -> f64 {
    quad.integrate(|x| h.eval(x) * mix.eval(x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Report {
    GainCompare(GainCompareReport),
    ConvergenceM(ConvergenceMReport),
    ConvergenceNp(ConvergenceNpReport),
    Benchmark(BenchmarkReport),
}

/// Runs the experiment described by `spec`, writing artifacts into `out`.
pub fn run_experiment(spec: &ExperimentSpec, out: &Path) -> Result<Report> {
    spec.validate()?;
    std::fs::create_dir_all(out)?;
    let report = match spec.kind {
        ExperimentKind::GainCompare => Report::GainCompare(run_gain_compare(spec, out)?),
        ExperimentKind::ConvergenceM => Report::ConvergenceM(run_convergence_m(spec, out)?),
        ExperimentKind::ConvergenceNp => Report::ConvergenceNp(run_convergence_np(spec, out)?),
        ExperimentKind::Benchmark => Report::Benchmark(run_benchmark(spec, out)?),
    };
    write_summary(out, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCompareReport {
    pub seed: u64,
    pub particles: usize,
    pub bandwidth: f64,
    pub orders: Vec<usize>,
    /// `L²` distance on the grid to the exact gain of the particle density estimate.
    pub l2_error_vs_kde_exact: Vec<f64>,
    /// `L²` distance on the grid to the exact gain of the sampled density.
    pub l2_error_vs_true: Vec<f64>,
    pub row0_residuals: Vec<f64>,
    pub strictly_decreasing: bool,
}

/// Hermite-Galerkin gains of one bimodal ensemble for several orders, next to
/// the exact gains of the true density and of its kernel estimate.
pub fn run_gain_compare(spec: &ExperimentSpec, out: &Path) -> Result<GainCompareReport> {
    let p = spec.gain_compare_params();
    let seed = spec.seed_list()[0];
    let mix = p.mixture.build()?;
    let h = ObservationFn::identity();
    let quad = QuadratureRule::default();
    let grid = grid_points(&p.grid)?;

    let ensemble = mix.sample(p.particles, seed)?;
    let exact_true = exact_gain_on_grid(|x| mix.eval(x), &h, true_hhat(&mix, &h, &quad), &grid, &quad)?;
    write_csv(&out.join("gain_exact.csv"), &["x", "gain"], &float_rows(&[&grid, &exact_true]))?;

    let kde = KdeModel::new(&ensemble, p.bandwidth)?;
    let mut solver = HermiteGalerkin::new(0, p.bandwidth);
    solver.hhat_mode = p.hhat_mode;
    let hhat = solver.hhat(&ensemble, &kde, &h);
    let exact_kde = exact_gain_on_grid(|x| kde.eval(x), &h, hhat, &grid, &quad)?;
    write_csv(&out.join("gain_exact_kde.csv"), &["x", "gain"], &float_rows(&[&grid, &exact_kde]))?;

    let mut vs_kde = Vec::new();
    let mut vs_true = Vec::new();
    let mut residuals = Vec::new();
    for &m in &p.orders {
        solver.order = m;
        let gain = solver.solve(&ensemble, &h)?;
        let values: Vec<f64> = grid.iter().map(|&x| gain.eval(x)).collect();
        write_csv(&out.join(format!("gain_hg_m{m}.csv")), &["x", "gain"], &float_rows(&[&grid, &values]))?;
        let d: Vec<f64> = values.iter().zip(&exact_kde).map(|(a, b)| a - b).collect();
        vs_kde.push(grid_error_values(&grid, &d, Norm::L2)?);
        let d: Vec<f64> = values.iter().zip(&exact_true).map(|(a, b)| a - b).collect();
        vs_true.push(grid_error_values(&grid, &d, Norm::L2)?);
        residuals.push(gain.row0_residual);
    }

    let report = GainCompareReport {
        seed,
        particles: p.particles,
        bandwidth: p.bandwidth,
        strictly_decreasing: vs_kde.windows(2).all(|w| w[1] < w[0]),
        orders: p.orders,
        l2_error_vs_kde_exact: vs_kde,
        l2_error_vs_true: vs_true,
        row0_residuals: residuals,
    };
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceMReport {
    pub seeds: usize,
    pub particles: usize,
    pub bandwidth: f64,
    pub orders: Vec<usize>,
    /// `M⁻¹ log M`
    pub envelope: Vec<f64>,
    /// Seed-averaged `‖f_{N,M} − f‖_{L²}` against the flux of the sampled density.
    pub f_error_l2: Vec<f64>,
    pub ratio_to_envelope: Vec<f64>,
    /// Seed-averaged `‖f_{N,M} − f_N‖_{L²}` against the exact flux of the kernel estimate.
    pub spectral_f_error_l2: Vec<f64>,
    pub gain_error_l2: Vec<f64>,
    pub non_increasing: bool,
    pub within_envelope_band: bool,
}

/// Exact flux and gain of the mixture on `grid`.
fn true_flux_and_gain(mix: &GaussianMixture, h: &ObservationFn, grid: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let quad = QuadratureRule::default();
    let hhat = true_hhat(mix, h, &quad);
    let gain = exact_gain_on_grid(|x| mix.eval(x), h, hhat, grid, &quad)?;
    let flux = grid.iter().zip(&gain).map(|(&x, k)| k * mix.eval(x)).collect();
    Ok((flux, gain))
}

fn average(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    let mut acc = vec![0.0; rows.first().map_or(0, |r| r.len())];
    for row in rows {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    acc.iter().map(|a| a / n).collect()
}

/// Flux and gain errors against the mixture as the truncation order grows.
pub fn run_convergence_m(spec: &ExperimentSpec, out: &Path) -> Result<ConvergenceMReport> {
    let p = spec.convergence_params();
    let seeds = spec.seed_list();
    let mix = p.mixture.build()?;
    let h = ObservationFn::identity();
    let grid = grid_points(&p.grid)?;
    let (f_true, k_true) = true_flux_and_gain(&mix, &h, &grid)?;
    let eps = p.bandwidth_constant()? * (p.particles as f64).powf(-0.2);
    let quad = QuadratureRule::default();

    // Per seed: [f errors..., spectral errors..., gain errors...].
    let per_seed: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<f64>> {
            let ensemble = mix.sample(p.particles, seed)?;
            let kde = KdeModel::new(&ensemble, eps)?;
            let mut row = vec![0.0; 3 * p.orders.len()];
            let mut f_kde = None;
            for (j, &m) in p.orders.iter().enumerate() {
                let gain = HermiteGalerkin::new(m, eps).solve(&ensemble, &h)?;
                let f_kde = match &f_kde {
                    Some(f) => f,
                    None => f_kde.insert(exact_flux_on_grid(|x| kde.eval(x), &h, gain.hhat, &grid, &quad)?),
                };
                let flux: Vec<f64> = grid.iter().map(|&x| gain.flux(x)).collect();
                let d: Vec<f64> = flux.iter().zip(&f_true).map(|(a, b)| a - b).collect();
                row[j] = grid_error_values(&grid, &d, Norm::L2)?;
                let d: Vec<f64> = flux.iter().zip(f_kde).map(|(a, b)| a - b).collect();
                row[p.orders.len() + j] = grid_error_values(&grid, &d, Norm::L2)?;
                let d: Vec<f64> = grid.iter().zip(&k_true).map(|(&x, k)| gain.eval(x) - k).collect();
                row[2 * p.orders.len() + j] = grid_error_values(&grid, &d, Norm::L2)?;
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mean = average(&per_seed);
    let n = p.orders.len();
    let (f_err, rest) = mean.split_at(n);
    let (spectral, gain_err) = rest.split_at(n);

    let orders_f: Vec<f64> = p.orders.iter().map(|&m| m as f64).collect();
    let envelope: Vec<f64> = orders_f.iter().map(|m| m.ln() / m).collect();
    let ratio: Vec<f64> = f_err.iter().zip(&envelope).map(|(e, v)| e / v).collect();
    write_csv(
        &out.join("error_vs_order.csv"),
        &["order", "envelope", "f_error_l2", "spectral_f_error_l2", "gain_error_l2"],
        &float_rows(&[&orders_f, &envelope, f_err, spectral, gain_err]),
    )?;

    let report = ConvergenceMReport {
        seeds: seeds.len(),
        particles: p.particles,
        bandwidth: eps,
        non_increasing: f_err.windows(2).all(|w| w[1] <= w[0]),
        within_envelope_band: ratio.iter().all(|r| (0.1..=10.0).contains(r)),
        orders: p.orders,
        envelope,
        f_error_l2: f_err.to_vec(),
        ratio_to_envelope: ratio,
        spectral_f_error_l2: spectral.to_vec(),
        gain_error_l2: gain_err.to_vec(),
    };
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceNpReport {
    pub seeds: usize,
    pub order: usize,
    pub bandwidth_constant: f64,
    pub particle_counts: Vec<usize>,
    pub bandwidths: Vec<f64>,
    /// Seed-averaged `‖f_{N,M} − f‖_{L¹}`.
    pub f_error_l1: Vec<f64>,
    pub gain_error_l1: Vec<f64>,
    pub f_slope: f64,
    pub gain_slope: f64,
}

/// Flux and gain errors against the mixture as the ensemble grows, with the
/// bandwidth following `c · Np^{-1/5}`.
pub fn run_convergence_np(spec: &ExperimentSpec, out: &Path) -> Result<ConvergenceNpReport> {
    let p = spec.convergence_params();
    let seeds = spec.seed_list();
    let mix = p.mixture.build()?;
    let h = ObservationFn::identity();
    let grid = grid_points(&p.grid)?;
    let (f_true, k_true) = true_flux_and_gain(&mix, &h, &grid)?;
    let c = p.bandwidth_constant()?;
    let bandwidths: Vec<f64> = p.particle_counts.iter().map(|&n| c * (n as f64).powf(-0.2)).collect();

    let per_seed: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<f64>> {
            let n = p.particle_counts.len();
            let mut row = vec![0.0; 2 * n];
            for (j, (&np, &eps)) in p.particle_counts.iter().zip(&bandwidths).enumerate() {
                let ensemble = mix.sample(np, seed)?;
                let gain = HermiteGalerkin::new(p.order, eps).solve(&ensemble, &h)?;
                let d: Vec<f64> = grid.iter().zip(&f_true).map(|(&x, f)| gain.flux(x) - f).collect();
                row[j] = grid_error_values(&grid, &d, Norm::L1)?;
                let d: Vec<f64> = grid.iter().zip(&k_true).map(|(&x, k)| gain.eval(x) - k).collect();
                row[n + j] = grid_error_values(&grid, &d, Norm::L1)?;
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mean = average(&per_seed);
    let (f_err, gain_err) = mean.split_at(p.particle_counts.len());

    let counts: Vec<f64> = p.particle_counts.iter().map(|&n| n as f64).collect();
    write_csv(
        &out.join("error_vs_particles.csv"),
        &["particles", "bandwidth", "f_error_l1", "gain_error_l1"],
        &float_rows(&[&counts, &bandwidths, f_err, gain_err]),
    )?;
    let report = ConvergenceNpReport {
        seeds: seeds.len(),
        order: p.order,
        bandwidth_constant: c,
        f_slope: loglog_slope(&counts, f_err)?,
        gain_slope: loglog_slope(&counts, gain_err)?,
        particle_counts: p.particle_counts,
        bandwidths,
        f_error_l1: f_err.to_vec(),
        gain_error_l1: gain_err.to_vec(),
    };
    Ok(report)
}

/// Per-method results of the Monte Carlo benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub rmse: Vec<f64>,
    pub armse: f64,
    /// `(ARMSE_constant − ARMSE_method) / ARMSE_constant`
    pub margin_vs_constant: f64,
    pub wall_time_seconds: f64,
    pub unconverged_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTiming {
    pub particles: usize,
    pub steps: usize,
    /// Mean seconds per gain computation, keyed by method name.
    pub seconds_per_step: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub seeds: Vec<u64>,
    pub params: BenchmarkParams,
    pub methods: BTreeMap<String, MethodSummary>,
    pub observation_streams_shared: bool,
    pub step_timing: Vec<StepTiming>,
}

impl BenchmarkReport {
    pub fn method(&self, m: GainMethod) -> &MethodSummary {
        &self.methods[m.name()]
    }
}

impl BenchmarkParams {
    pub fn model(&self) -> Result<SdeModel> {
        SdeModel::bistable(self.state_noise_cov, self.obs_noise_cov)
    }

    pub fn filter_config(&self, method: GainMethod, seed: u64) -> Result<FilterConfig> {
        Ok(FilterConfig {
            model: self.model()?,
            particles: self.particles,
            order: self.order,
            bandwidth: self.bandwidth,
            dt: self.dt,
            t_final: self.t_final,
            gain_method: method,
            init: InitialDistribution::Gaussian {
                mean: self.init_mean,
                variance: self.init_variance,
            },
            seed,
            clamps: GainClamps::default(),
            hhat_mode: HhatMode::SampleMean,
            diffusion_map: DiffusionMap {
                eps: self.dm_eps,
                max_iters: self.dm_max_iters,
                centered: self.dm_centered,
                ..DiffusionMap::default()
            },
            store_ensembles: false,
            normalize_by_obs_noise: self.normalize_by_obs_noise,
        })
    }
}

struct SeedOutcome {
    rmse: [f64; 3],
    wall: [f64; 3],
    unconverged: [usize; 3],
    digests: [u64; 3],
    trajectory: Option<Vec<Vec<f64>>>,
}

/// Paired Monte Carlo comparison of the three gain approximations on the
/// double-well model, plus per-step gain timing on larger ensembles.
pub fn run_benchmark(spec: &ExperimentSpec, out: &Path) -> Result<BenchmarkReport> {
    let p = spec.benchmark_params();
    let seeds = spec.seed_list();
    let model = p.model()?;

    let outcomes: Vec<SeedOutcome> = seeds
        .par_iter()
        .enumerate()
        .map(|(run, &seed)| -> Result<SeedOutcome> {
            let truth = simulate_truth(&model, p.x0, p.dt, p.t_final, derive_seed(seed, &[0]))?;
            let mut o = SeedOutcome {
                rmse: [0.0; 3],
                wall: [0.0; 3],
                unconverged: [0; 3],
                digests: [0; 3],
                trajectory: (run == 0).then(|| vec![truth.times.clone(), truth.states.clone()]),
            };
            for (j, method) in GainMethod::ALL.into_iter().enumerate() {
                let cfg = p.filter_config(method, derive_seed(seed, &[1]))?;
                let result = fpf_run(&cfg, &truth).map_err(|e| {
                    Error::Numerical(format!("{} filter failed for seed {seed}: {e}", method.name()))
                })?;
                o.digests[j] = truth.observation_digest();
                o.rmse[j] = rmse(&truth.states, &result.estimates)?;
                o.wall[j] = result.wall_time_seconds;
                o.unconverged[j] = result.counters.unconverged_steps;
                if let Some(t) = o.trajectory.as_mut() {
                    t.push(result.estimates);
                }
            }
            Ok(o)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(seeds.len());
    for (seed, o) in seeds.iter().zip(&outcomes) {
        let mut row = vec![seed.to_string()];
        row.extend(o.rmse.iter().map(|&r| fmt_f64(r)));
        rows.push(row);
    }
    let mut header = vec!["seed"];
    header.extend(GainMethod::ALL.iter().map(|m| m.name()));
    write_csv(&out.join("rmse_runs.csv"), &header, &rows)?;

    if let Some(t) = outcomes.first().and_then(|o| o.trajectory.as_ref()) {
        for (j, method) in GainMethod::ALL.into_iter().enumerate() {
            write_csv(
                &out.join(format!("trajectory_{}.csv", method.name())),
                &["time", "estimate", "state"],
                &float_rows(&[&t[0], &t[2 + j], &t[1]]),
            )?;
        }
    }

    let constant_idx = GainMethod::ALL.iter().position(|&m| m == GainMethod::Constant).unwrap_or(2);
    let armses: Vec<f64> = (0..3)
        .map(|j| armse(&outcomes.iter().map(|o| o.rmse[j]).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    let mut methods = BTreeMap::new();
    let mut armse_rows = Vec::new();
    for (j, method) in GainMethod::ALL.into_iter().enumerate() {
        armse_rows.push(vec![method.name().to_string(), fmt_f64(armses[j])]);
        methods.insert(
            method.name().to_string(),
            MethodSummary {
                rmse: outcomes.iter().map(|o| o.rmse[j]).collect(),
                armse: armses[j],
                margin_vs_constant: (armses[constant_idx] - armses[j]) / armses[constant_idx],
                wall_time_seconds: outcomes.iter().map(|o| o.wall[j]).sum(),
                unconverged_steps: outcomes.iter().map(|o| o.unconverged[j]).sum(),
            },
        );
    }
    write_csv(&out.join("armse.csv"), &["method", "armse"], &armse_rows)?;

    let step_timing = p
        .timing_particles
        .iter()
        .map(|&n| time_gain_steps(&p, n, seeds[0]))
        .collect::<Result<_>>()?;

    let report = BenchmarkReport {
        seeds,
        observation_streams_shared: outcomes.iter().all(|o| o.digests.iter().all(|&d| d == o.digests[0])),
        params: p,
        methods,
        step_timing,
    };
    Ok(report)
}

/// Times each method's gain computation on the same sequence of ensembles,
/// taken from a short Hermite-Galerkin filter run with `particles` particles.
pub fn time_gain_steps(p: &BenchmarkParams, particles: usize, seed: u64) -> Result<StepTiming> {
    let steps = p.timing_steps.max(1);
    let t_final = steps as f64 * p.dt;
    let model = p.model()?;
    let truth = simulate_truth(&model, p.x0, p.dt, t_final, derive_seed(seed, &[0]))?;
    let mut cfg = p.filter_config(GainMethod::HermiteGalerkin, derive_seed(seed, &[1]))?;
    cfg.particles = particles;
    cfg.t_final = t_final;
    cfg.store_ensembles = true;
    let ensembles: Vec<ParticleEnsemble> = fpf_run(&cfg, &truth)?.ensembles.unwrap_or_default();

    let mut seconds_per_step = BTreeMap::new();
    let mut gains = vec![0.0; particles];
    let mut controls = vec![0.0; particles];
    for method in GainMethod::ALL {
        cfg.gain_method = method;
        let mut strategy = strategy_for(&cfg);
        let started = Instant::now();
        for e in &ensembles {
            strategy.compute(e.positions(), &model.observation, &mut gains, &mut controls)?;
        }
        seconds_per_step.insert(
            method.name().to_string(),
            started.elapsed().as_secs_f64() / ensembles.len() as f64,
        );
    }
    Ok(StepTiming {
        particles,
        steps: ensembles.len(),
        seconds_per_step,
    })
}

/// One line per method: ARMSE, margin over constant gain and wall-clock.
pub fn format_benchmark_table(report: &BenchmarkReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<18} {:>12} {:>10} {:>12}", "method", "ARMSE", "margin", "seconds");
    for m in GainMethod::ALL {
        let r = report.method(m);
        let _ = writeln!(
            s,
            "{:<18} {:>12.4} {:>9.2}% {:>12.4}",
            m.name(),
            r.armse,
            100.0 * r.margin_vs_constant,
            r.wall_time_seconds
        );
    }
    s
}
