//! The feedback particle filter loop with a pluggable gain approximation.
//!
//! Each particle follows
//! `Xⁱ ← Xⁱ + g Δt + σ √Q ΔBⁱ + K(Xⁱ) ΔZ / R + u(Xⁱ) Δt / R`,
//! where `K` and `u` come from the unit-noise gain problem and `R` is the
//! observation noise covariance. The gain is refreshed once per step and
//! held fixed over `[t_k, t_{k+1})`.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::density::{GaussianMixture, ParticleEnsemble};
use crate::error::{Error, Result};
use crate::gain::{
    compute_hhat, constant_gain, DiffusionMap, GainClamps, HermiteGalerkin, HhatMode, ObservationFn,
};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sde::{check_horizon, step_count, SdeModel, TruthRun};

pub use crate::density::particle_mean;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainMethod {
    HermiteGalerkin,
    Constant,
    DiffusionMap,
}

impl GainMethod {
    pub const ALL: [GainMethod; 3] = [GainMethod::HermiteGalerkin, GainMethod::DiffusionMap, GainMethod::Constant];

    pub fn name(self) -> &'static str {
        match self {
            GainMethod::HermiteGalerkin => "hermite_galerkin",
            GainMethod::Constant => "constant",
            GainMethod::DiffusionMap => "diffusion_map",
        }
    }
}

impl std::str::FromStr for GainMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hermite_galerkin" => Ok(GainMethod::HermiteGalerkin),
            "constant" => Ok(GainMethod::Constant),
            "diffusion_map" => Ok(GainMethod::DiffusionMap),
            other => Err(Error::Domain(format!("unknown gain method `{other}`"))),
        }
    }
}

/// Distribution of the initial particles.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialDistribution {
    Gaussian { mean: f64, variance: f64 },
    Mixture(GaussianMixture),
    /// Fixed positions; the particle count must match.
    Particles(Vec<f64>),
}

impl InitialDistribution {
    fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        match self {
            InitialDistribution::Gaussian { mean, variance } => {
                if !(*variance >= 0.0) {
                    return Err(Error::Domain(format!("initial variance must be non-negative, got {variance}")));
                }
                let mut rng = rng_from_seed(seed);
                Ok((0..n)
                    .map(|_| mean + variance.sqrt() * rng.sample::<f64, _>(StandardNormal))
                    .collect())
            }
            InitialDistribution::Mixture(mix) => Ok(mix.sample(n, seed)?.positions().to_vec()),
            InitialDistribution::Particles(xs) => {
                if xs.len() != n {
                    return Err(Error::Domain(format!(
                        "{} initial particles given for an ensemble of {n}",
                        xs.len()
                    )));
                }
                Ok(xs.clone())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct FilterConfig {
    pub model: SdeModel,
    pub particles: usize,
    /// Hermite truncation order `M`.
    pub order: usize,
    /// KDE bandwidth `ε`.
    pub bandwidth: f64,
    pub dt: f64,
    pub t_final: f64,
    pub gain_method: GainMethod,
    pub init: InitialDistribution,
    pub seed: u64,
    pub clamps: GainClamps,
    pub hhat_mode: HhatMode,
    pub diffusion_map: DiffusionMap,
    pub store_ensembles: bool,
    /// Divide `K` and `u` by the observation noise covariance. Off by default,
    /// which applies the unit-noise gain to the raw increments.
    pub normalize_by_obs_noise: bool,
}

impl FilterConfig {
    /// Double-well tracking setup: 10 particles from `N(0, 1)`, `M = 6`,
    /// `ε = 0.5`, `Δt = 0.01`, both noise covariances 0.4.
    pub fn bistable_benchmark(t_final: f64, gain_method: GainMethod, seed: u64) -> Result<Self> {
        Ok(Self {
            model: SdeModel::bistable(0.4, 0.4)?,
            particles: 10,
            order: 6,
            bandwidth: 0.5,
            dt: 0.01,
            t_final,
            gain_method,
            init: InitialDistribution::Gaussian {
                mean: 0.0,
                variance: 1.0,
            },
            seed,
            clamps: GainClamps::default(),
            hhat_mode: HhatMode::SampleMean,
            diffusion_map: DiffusionMap::default(),
            store_ensembles: false,
            normalize_by_obs_noise: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::Domain("the filter needs at least one particle".into()));
        }
        check_horizon(self.dt, self.t_final)?;
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(Error::Domain(format!("bandwidth must be positive, got {}", self.bandwidth)));
        }
        if self.gain_method == GainMethod::DiffusionMap && self.particles < 2 {
            return Err(Error::Domain("the diffusion-map gain needs at least two particles".into()));
        }
        Ok(())
    }

    /// Factor applied to `K` and `u`: `1/R` when normalizing, else 1.
    pub fn gain_scale(&self) -> f64 {
        if self.normalize_by_obs_noise && self.model.obs_noise_cov > 0.0 {
            1.0 / self.model.obs_noise_cov
        } else {
            1.0
        }
    }
}

/// Work counters accumulated over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCounters {
    pub kde_builds: usize,
    pub rhs_quadratures: usize,
    pub backward_solves: usize,
    /// Steps at which the diffusion-map fixed point hit its sweep limit.
    pub unconverged_steps: usize,
}

/// Per-step gain computation: fills `K(Xⁱ)` and `u(Xⁱ)` for unit observation noise.
pub trait GainStrategy {
    fn compute(
        &mut self,
        positions: &[f64],
        h: &ObservationFn,
        gains: &mut [f64],
        controls: &mut [f64],
    ) -> Result<()>;

    fn counters(&self) -> StepCounters {
        StepCounters::default()
    }
}

pub struct HermiteGalerkinStrategy {
    solver: HermiteGalerkin,
    counters: StepCounters,
}

impl HermiteGalerkinStrategy {
    pub fn new(solver: HermiteGalerkin) -> Self {
        Self {
            solver,
            counters: StepCounters::default(),
        }
    }
}

impl GainStrategy for HermiteGalerkinStrategy {
    fn compute(
        &mut self,
        positions: &[f64],
        h: &ObservationFn,
        gains: &mut [f64],
        controls: &mut [f64],
    ) -> Result<()> {
        let ensemble = ParticleEnsemble::new(positions.to_vec(), 0.0)?;
        let gain = self.solver.solve(&ensemble, h)?;
        self.counters.kde_builds += 1;
        self.counters.rhs_quadratures += 1;
        self.counters.backward_solves += 1;
        for ((x, k), u) in positions.iter().zip(gains.iter_mut()).zip(controls.iter_mut()) {
            let (kx, dkx) = gain.eval_with_derivative(*x);
            *k = kx;
            *u = -0.5 * kx * (h.eval(*x) + gain.hhat) + 0.5 * kx * dkx;
        }
        Ok(())
    }

    fn counters(&self) -> StepCounters {
        self.counters
    }
}

pub struct ConstantGainStrategy;

impl GainStrategy for ConstantGainStrategy {
    fn compute(
        &mut self,
        positions: &[f64],
        h: &ObservationFn,
        gains: &mut [f64],
        controls: &mut [f64],
    ) -> Result<()> {
        let ensemble = ParticleEnsemble::new(positions.to_vec(), 0.0)?;
        let k = constant_gain(&ensemble, h);
        let hhat = compute_hhat(&ensemble, h);
        for ((x, kx), u) in positions.iter().zip(gains.iter_mut()).zip(controls.iter_mut()) {
            *kx = k;
            *u = -0.5 * k * (h.eval(*x) + hhat);
        }
        Ok(())
    }
}

/// Diffusion-map gains; the `K K'` part of the control is dropped because the
/// per-particle scheme provides no derivative.
pub struct DiffusionMapStrategy {
    settings: DiffusionMap,
    counters: StepCounters,
}

impl DiffusionMapStrategy {
    pub fn new(settings: DiffusionMap) -> Self {
        Self {
            settings,
            counters: StepCounters::default(),
        }
    }
}

impl GainStrategy for DiffusionMapStrategy {
    fn compute(
        &mut self,
        positions: &[f64],
        h: &ObservationFn,
        gains: &mut [f64],
        controls: &mut [f64],
    ) -> Result<()> {
        let out = self.settings.solve(positions, h)?;
        if !out.converged {
            self.counters.unconverged_steps += 1;
        }
        let hhat = positions.iter().map(|&x| h.eval(x)).sum::<f64>() / positions.len() as f64;
        for (i, x) in positions.iter().enumerate() {
            gains[i] = out.gains[i];
            controls[i] = -0.5 * out.gains[i] * (h.eval(*x) + hhat);
        }
        Ok(())
    }

    fn counters(&self) -> StepCounters {
        self.counters
    }
}

pub fn strategy_for(cfg: &FilterConfig) -> Box<dyn GainStrategy> {
    match cfg.gain_method {
        GainMethod::HermiteGalerkin => {
            let mut solver = HermiteGalerkin::new(cfg.order, cfg.bandwidth);
            solver.clamps = cfg.clamps;
            solver.hhat_mode = cfg.hhat_mode;
            Box::new(HermiteGalerkinStrategy::new(solver))
        }
        GainMethod::Constant => Box::new(ConstantGainStrategy),
        GainMethod::DiffusionMap => Box::new(DiffusionMapStrategy::new(cfg.diffusion_map)),
    }
}

#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub times: Vec<f64>,
    /// Particle mean at each `t_k`, before the step's update.
    pub estimates: Vec<f64>,
    pub ensembles: Option<Vec<ParticleEnsemble>>,
    /// Wall-clock seconds spent on gain computation and particle updates.
    pub wall_time_seconds: f64,
    pub counters: StepCounters,
}

impl FilterOutput {
    pub fn write_csv(&self, path: &Path, truth: Option<&TruthRun>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        match truth {
            Some(_) => writeln!(out, "time,estimate,state")?,
            None => writeln!(out, "time,estimate")?,
        }
        for k in 0..self.times.len() {
            write!(out, "{:.16e},{:.16e}", self.times[k], self.estimates[k])?;
            if let Some(t) = truth {
                write!(out, ",{:.16e}", t.states[k])?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }
}

const INIT_STREAM: u64 = 0;
const PARTICLE_NOISE_STREAM: u64 = 1;

pub fn fpf_run(cfg: &FilterConfig, truth: &TruthRun) -> Result<FilterOutput> {
    let mut strategy = strategy_for(cfg);
    fpf_run_with(cfg, truth, strategy.as_mut())
}

/// Runs the filter loop against a recorded truth with a caller-supplied gain strategy.
pub fn fpf_run_with(
    cfg: &FilterConfig,
    truth: &TruthRun,
    strategy: &mut dyn GainStrategy,
) -> Result<FilterOutput> {
    cfg.validate()?;
    let steps = step_count(cfg.dt, cfg.t_final) + 1;
    if truth.len() != steps {
        return Err(Error::Domain(format!(
            "truth has {} samples but the filter horizon needs {steps}",
            truth.len()
        )));
    }
    if steps > 1 && (truth.dt() - cfg.dt).abs() > 1e-9 * cfg.dt {
        return Err(Error::Domain(format!(
            "truth time step {} does not match the filter's {}",
            truth.dt(),
            cfg.dt
        )));
    }

    let n = cfg.particles;
    let model = &cfg.model;
    let h = &model.observation;
    let scale = cfg.gain_scale();
    let noise = (model.state_noise_cov * cfg.dt).sqrt();

    let mut positions = cfg.init.sample(n, derive_seed(cfg.seed, &[INIT_STREAM]))?;
    let mut gains = vec![0.0; n];
    let mut controls = vec![0.0; n];
    let mut estimates = Vec::with_capacity(steps);
    let mut ensembles = cfg.store_ensembles.then(Vec::new);
    let mut busy = 0.0;

    for k in 0..steps {
        estimates.push(positions.iter().sum::<f64>() / n as f64);
        if let Some(store) = ensembles.as_mut() {
            store.push(ParticleEnsemble::new(positions.clone(), truth.times[k])?);
        }

        let started = Instant::now();
        strategy
            .compute(&positions, h, &mut gains, &mut controls)
            .map_err(|e| e.at_step(k))?;
        let dz = truth.obs_increments[k];
        for (i, x) in positions.iter_mut().enumerate() {
            let mut rng = rng_from_seed(derive_seed(cfg.seed, &[PARTICLE_NOISE_STREAM, k as u64, i as u64]));
            let db: f64 = rng.sample(StandardNormal);
            let x0 = *x;
            *x = x0
                + model.drift(x0) * cfg.dt
                + model.diffusion(x0) * noise * db
                + scale * (gains[i] * dz + controls[i] * cfg.dt);
            if !x.is_finite() {
                return Err(Error::Numerical(format!("particle {i} diverged")).at_step(k));
            }
        }
        busy += started.elapsed().as_secs_f64();
    }

    Ok(FilterOutput {
        times: truth.times.clone(),
        estimates,
        ensembles,
        wall_time_seconds: busy,
        counters: strategy.counters(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::simulate_truth;

    fn still_model() -> SdeModel {
        SdeModel::new("still", |_| 0.0, |_| 0.0, ObservationFn::constant(1.0), 0.0, 0.0).unwrap()
    }

    fn short_config(method: GainMethod) -> FilterConfig {
        let mut cfg = FilterConfig::bistable_benchmark(2.0, method, 17).unwrap();
        cfg.store_ensembles = true;
        cfg
    }

    #[test]
    fn uninformative_observations_leave_particles_alone() {
        for method in GainMethod::ALL {
            let mut cfg = short_config(method);
            cfg.model = still_model();
            cfg.particles = 4;
            cfg.init = InitialDistribution::Particles(vec![0.7; 4]);
            let truth = simulate_truth(&cfg.model, 0.7, cfg.dt, cfg.t_final, 1).unwrap();
            let out = fpf_run(&cfg, &truth).unwrap();
            for e in &out.estimates {
                assert!((e - 0.7).abs() < 1e-12, "{method:?} drifted to {e}");
            }
        }
    }

    #[test]
    fn reruns_are_identical() {
        for method in GainMethod::ALL {
            let cfg = short_config(method);
            let truth = simulate_truth(&cfg.model, 0.1, cfg.dt, cfg.t_final, 5).unwrap();
            let a = fpf_run(&cfg, &truth).unwrap();
            let b = fpf_run(&cfg, &truth).unwrap();
            assert_eq!(a.estimates, b.estimates);
            assert_eq!(a.estimates.len(), 201);
        }
    }

    struct Fixed<S> {
        inner: S,
        k: f64,
    }

    impl<S: GainStrategy> GainStrategy for Fixed<S> {
        fn compute(&mut self, positions: &[f64], h: &ObservationFn, gains: &mut [f64], controls: &mut [f64]) -> Result<()> {
            self.inner.compute(positions, h, gains, controls)?;
            for ((x, g), u) in positions.iter().zip(gains.iter_mut()).zip(controls.iter_mut()) {
                *g = self.k;
                *u = -0.5 * self.k * (h.eval(*x) + 0.0);
            }
            Ok(())
        }
    }

    #[test]
    fn methods_share_the_loop_skeleton() {
        let cfg = short_config(GainMethod::HermiteGalerkin);
        let truth = simulate_truth(&cfg.model, 0.1, cfg.dt, cfg.t_final, 5).unwrap();
        let solver = HermiteGalerkin::new(cfg.order, cfg.bandwidth);
        let a = fpf_run_with(&cfg, &truth, &mut Fixed { inner: HermiteGalerkinStrategy::new(solver), k: 0.3 }).unwrap();
        let b = fpf_run_with(&cfg, &truth, &mut Fixed { inner: ConstantGainStrategy, k: 0.3 }).unwrap();
        let c = fpf_run_with(&cfg, &truth, &mut Fixed { inner: DiffusionMapStrategy::new(DiffusionMap::default()), k: 0.3 }).unwrap();
        assert_eq!(a.ensembles, b.ensembles);
        assert_eq!(b.ensembles, c.ensembles);
    }

    #[test]
    fn one_solve_per_step() {
        let cfg = short_config(GainMethod::HermiteGalerkin);
        let truth = simulate_truth(&cfg.model, 0.1, cfg.dt, cfg.t_final, 5).unwrap();
        for particles in [10, 40] {
            let mut cfg = cfg.clone();
            cfg.particles = particles;
            let out = fpf_run(&cfg, &truth).unwrap();
            let steps = truth.len();
            assert_eq!(out.counters.kde_builds, steps);
            assert_eq!(out.counters.rhs_quadratures, steps);
            assert_eq!(out.counters.backward_solves, steps);
        }
    }

    #[test]
    fn mismatched_truth_is_rejected() {
        let cfg = short_config(GainMethod::Constant);
        let truth = simulate_truth(&cfg.model, 0.1, cfg.dt, 1.0, 5).unwrap();
        assert!(matches!(fpf_run(&cfg, &truth), Err(Error::Domain(_))));
        let truth = simulate_truth(&cfg.model, 0.1, 0.02, 2.0, 5).unwrap();
        assert!(fpf_run(&cfg, &truth).is_err());
    }

    #[test]
    fn divergence_reports_the_step() {
        let mut cfg = short_config(GainMethod::Constant);
        cfg.model = SdeModel::new("blowup", |x| x.powi(5), |_| 0.0, ObservationFn::identity(), 0.0, 1.0).unwrap();
        cfg.init = InitialDistribution::Particles(vec![30.0; 10]);
        let truth = simulate_truth(&still_model(), 0.0, cfg.dt, cfg.t_final, 1).unwrap();
        match fpf_run(&cfg, &truth) {
            Err(Error::Filter { step, .. }) => assert!(step < truth.len()),
            other => panic!("expected a filter error, got {other:?}"),
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in GainMethod::ALL {
            assert_eq!(m.name().parse::<GainMethod>().unwrap(), m);
        }
        assert!("kalman".parse::<GainMethod>().is_err());
    }
}
