//! Euler-Maruyama simulation of the signal/observation model
//! `dX = g(X) dt + σ(X) √Q dB`, `dZ = h(X) dt + √R dW`.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure_finite, Error, Result};
use crate::gain::{ObservationFn, ScalarFn};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Clone)]
pub struct SdeModel {
    pub name: String,
    pub drift: ScalarFn,
    pub diffusion: ScalarFn,
    pub observation: ObservationFn,
    /// `Q`, scaling of the state Wiener increments.
    pub state_noise_cov: f64,
    /// `R`, scaling of the observation Wiener increments.
    pub obs_noise_cov: f64,
}

impl fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeModel")
            .field("name", &self.name)
            .field("observation", &self.observation)
            .field("state_noise_cov", &self.state_noise_cov)
            .field("obs_noise_cov", &self.obs_noise_cov)
            .finish()
    }
}

impl SdeModel {
    pub fn new<G, S>(
        name: impl Into<String>,
        drift: G,
        diffusion: S,
        observation: ObservationFn,
        state_noise_cov: f64,
        obs_noise_cov: f64,
    ) -> Result<Self>
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        S: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        for (what, v) in [("state noise covariance", state_noise_cov), ("observation noise covariance", obs_noise_cov)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain(format!("{what} must be non-negative, got {v}")));
            }
        }
        Ok(Self {
            name: name.into(),
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            observation,
            state_noise_cov,
            obs_noise_cov,
        })
    }

    /// Double-well model `dX = X(1 − X²) dt + dB`, `dZ = X dt + dW`.
    pub fn bistable(state_noise_cov: f64, obs_noise_cov: f64) -> Result<Self> {
        Self::new(
            "bistable",
            |x| x * (1.0 - x * x),
            |_| 1.0,
            ObservationFn::identity(),
            state_noise_cov,
            obs_noise_cov,
        )
    }

    /// `dX = −X dt + dB`, `dZ = X dt + dW`.
    pub fn ornstein_uhlenbeck(state_noise_cov: f64, obs_noise_cov: f64) -> Result<Self> {
        Self::new(
            "ornstein_uhlenbeck",
            |x| -x,
            |_| 1.0,
            ObservationFn::identity(),
            state_noise_cov,
            obs_noise_cov,
        )
    }

    #[inline]
    pub fn drift(&self, x: f64) -> f64 {
        (self.drift)(x)
    }

    #[inline]
    pub fn diffusion(&self, x: f64) -> f64 {
        (self.diffusion)(x)
    }
}

/// Number of steps `⌊T/Δt⌋`, tolerant to `T/Δt` landing just below an integer.
pub fn step_count(dt: f64, t_final: f64) -> usize {
    (t_final / dt + 1e-9).floor() as usize
}

pub(crate) fn check_horizon(dt: f64, t_final: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    if !(t_final.is_finite() && t_final + 1e-12 >= dt) {
        return Err(Error::Domain(format!("horizon {t_final} is shorter than the time step {dt}")));
    }
    Ok(())
}

/// Ground-truth path at `t_k = kΔt`, `k = 0..=⌊T/Δt⌋`, with the observation
/// increment `ΔZ_k = Z_{t_{k+1}} − Z_{t_k}` recorded at each step.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRun {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub obs_increments: Vec<f64>,
    pub seed: u64,
}

impl TruthRun {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            0.0
        }
    }

    /// FNV-1a over the bit patterns of the observation increments.
    pub fn observation_digest(&self) -> u64 {
        self.obs_increments
            .iter()
            .flat_map(|v| v.to_bits().to_le_bytes())
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "time,state,dZ")?;
        for k in 0..self.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e}",
                self.times[k], self.states[k], self.obs_increments[k]
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn simulate_truth(model: &SdeModel, x0: f64, dt: f64, t_final: f64, seed: u64) -> Result<TruthRun> {
    check_horizon(dt, t_final)?;
    ensure_finite(x0, "initial state")?;
    let n = step_count(dt, t_final) + 1;
    let mut state_rng = rng_from_seed(derive_seed(seed, &[0]));
    let mut obs_rng = rng_from_seed(derive_seed(seed, &[1]));
    let state_scale = (model.state_noise_cov * dt).sqrt();
    let obs_scale = (model.obs_noise_cov * dt).sqrt();

    let mut times = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    let mut obs_increments = Vec::with_capacity(n);
    let mut x = x0;
    for k in 0..n {
        times.push(k as f64 * dt);
        states.push(x);
        let eta: f64 = obs_rng.sample(StandardNormal);
        obs_increments.push(model.observation.eval(x) * dt + obs_scale * eta);
        let xi: f64 = state_rng.sample(StandardNormal);
        if k + 1 < n {
            x += model.drift(x) * dt + model.diffusion(x) * state_scale * xi;
            if !x.is_finite() {
                return Err(Error::Simulation { step: k + 1, value: x });
            }
        }
    }
    Ok(TruthRun {
        times,
        states,
        obs_increments,
        seed,
    })
}

/// `n` i.i.d. draws from `N(0, cov·Δt)`.
pub fn gaussian_increments(n: usize, dt: f64, cov: f64, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Domain("need at least one increment".into()));
    }
    if !(dt > 0.0 && cov >= 0.0) {
        return Err(Error::Domain(format!("invalid increment parameters dt = {dt}, cov = {cov}")));
    }
    let scale = (cov * dt).sqrt();
    let mut rng = rng_from_seed(seed);
    Ok((0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn degenerate_model_is_deterministic() {
        let m = SdeModel::new("still", |_| 0.0, |_| 0.0, ObservationFn::identity(), 0.0, 0.0).unwrap();
        let run = simulate_truth(&m, 1.0, 0.1, 1.0, 3).unwrap();
        assert_eq!(run.len(), 11);
        assert!(run.states.iter().all(|&x| x == 1.0));
        for dz in &run.obs_increments {
            assert_abs_diff_eq!(*dz, 0.1, epsilon = 1e-15);
        }
    }

    #[test]
    fn same_seed_same_bits() {
        let m = SdeModel::bistable(0.4, 0.4).unwrap();
        let a = simulate_truth(&m, 0.1, 0.01, 5.0, 99).unwrap();
        let b = simulate_truth(&m, 0.1, 0.01, 5.0, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.observation_digest(), b.observation_digest());
        let c = simulate_truth(&m, 0.1, 0.01, 5.0, 100).unwrap();
        assert_ne!(a.observation_digest(), c.observation_digest());
    }

    #[test]
    fn step_count_tolerates_rounding() {
        assert_eq!(step_count(0.01, 40.0), 4000);
        assert_eq!(step_count(0.01, 400.0), 40_000);
        assert_eq!(step_count(0.1, 1.0), 10);
        assert_eq!(step_count(0.3, 1.0), 3);
    }

    #[test]
    fn uniform_times() {
        let m = SdeModel::ornstein_uhlenbeck(1.0, 1.0).unwrap();
        let run = simulate_truth(&m, 0.0, 0.01, 1.0, 1).unwrap();
        for (k, t) in run.times.iter().enumerate() {
            assert_abs_diff_eq!(*t, k as f64 * 0.01, epsilon = 1e-15);
        }
        assert_eq!(run.states.len(), run.obs_increments.len());
    }

    #[test]
    fn explosion_is_reported() {
        let m = SdeModel::new("blowup", |x| x * x * x, |_| 0.0, ObservationFn::identity(), 0.0, 0.0).unwrap();
        match simulate_truth(&m, 10.0, 0.5, 10.0, 0) {
            Err(Error::Simulation { step, .. }) => assert!(step >= 1),
            other => panic!("expected explosion, got {other:?}"),
        }
    }

    #[test]
    fn bad_horizon_is_rejected() {
        let m = SdeModel::ornstein_uhlenbeck(1.0, 1.0).unwrap();
        assert!(simulate_truth(&m, 0.0, 0.0, 1.0, 0).is_err());
        assert!(simulate_truth(&m, 0.0, 0.1, 0.01, 0).is_err());
        assert!(SdeModel::bistable(-1.0, 1.0).is_err());
    }

    #[test]
    fn increment_variance() {
        let v = gaussian_increments(1_000_000, 0.01, 1.0, 5).unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        assert!((var / 0.01 - 1.0).abs() < 0.01, "variance {var}");
        assert!(gaussian_increments(10, 0.01, 0.0, 5).unwrap().iter().all(|&x| x == 0.0));
        assert_ne!(gaussian_increments(4, 0.01, 1.0, 1).unwrap(), gaussian_increments(4, 0.01, 1.0, 2).unwrap());
        assert!(gaussian_increments(0, 0.01, 1.0, 1).is_err());
    }

    #[test]
    fn ou_stationary_variance() {
        let m = SdeModel::ornstein_uhlenbeck(1.0, 1.0).unwrap();
        let run = simulate_truth(&m, 0.0, 0.01, 1000.0, 21).unwrap();
        let xs = &run.states[1000..];
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((var - 0.5).abs() < 0.05 * 0.5, "variance {var}");
    }

    #[test]
    fn bistable_paths_stay_near_the_wells() {
        let m = SdeModel::bistable(0.4, 0.4).unwrap();
        let run = simulate_truth(&m, 0.1, 0.01, 400.0, 8).unwrap();
        let inside = run
            .states
            .iter()
            .filter(|x| (0.4..=1.6).contains(&x.abs()))
            .count();
        let frac = inside as f64 / run.len() as f64;
        assert!(frac > 0.75, "fraction near wells {frac}");
        let crossings = run.states.windows(2).filter(|w| w[0].signum() != w[1].signum()).count();
        assert!(crossings > 0);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let m = SdeModel::ornstein_uhlenbeck(1.0, 1.0).unwrap();
        let run = simulate_truth(&m, 0.0, 0.1, 0.5, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.csv");
        run.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "time,state,dZ");
        assert_eq!(lines.len(), 7);
    }
}
