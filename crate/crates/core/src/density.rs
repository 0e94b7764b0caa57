//! Particle ensembles, Gaussian kernel density estimation and reference mixtures.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Kernel contributions farther than this many bandwidths from `x` are skipped.
pub const KERNEL_CUTOFF: f64 = 12.0;

/// Particle positions at one time instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleEnsemble {
    positions: Vec<f64>,
    timestamp: f64,
}

impl ParticleEnsemble {
    pub fn new(positions: Vec<f64>, timestamp: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Domain("an ensemble needs at least one particle".into()));
        }
        if let Some(x) = positions.iter().find(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("particle position {x} is not finite")));
        }
        Ok(Self {
            positions,
            timestamp,
        })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.positions.iter().sum::<f64>() / self.positions.len() as f64
    }
}

/// Arithmetic mean of the particle positions, the filter's state estimate.
pub fn particle_mean(ensemble: &ParticleEnsemble) -> f64 {
    ensemble.mean()
}

/// Gaussian kernel density estimator `p(x) = (1/N) Σ K_ε(x − Xⁱ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeModel {
    /// Sorted copy of the particle positions.
    centers: Vec<f64>,
    bandwidth: f64,
}

impl KdeModel {
    pub fn new(ensemble: &ParticleEnsemble, bandwidth: f64) -> Result<Self> {
        Self::from_positions(ensemble.positions(), bandwidth)
    }

    pub fn from_positions(positions: &[f64], bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if positions.is_empty() {
            return Err(Error::Domain("a density estimate needs at least one particle".into()));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("particle positions must be finite".into()));
        }
        let mut centers = positions.to_vec();
        centers.sort_by(f64::total_cmp);
        Ok(Self { centers, bandwidth })
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Centers within the kernel cutoff of `x`.
    fn window(&self, x: f64) -> &[f64] {
        let reach = KERNEL_CUTOFF * self.bandwidth;
        let lo = self.centers.partition_point(|&c| c < x - reach);
        let hi = self.centers.partition_point(|&c| c <= x + reach);
        &self.centers[lo..hi]
    }

    pub fn eval(&self, x: f64) -> f64 {
        let inv = 1.0 / self.bandwidth;
        let sum: f64 = self
            .window(x)
            .iter()
            .map(|&c| {
                let u = (x - c) * inv;
                (-0.5 * u * u).exp()
            })
            .sum();
        sum * INV_SQRT_2PI * inv / self.centers.len() as f64
    }

    pub fn eval_derivative(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).1
    }

    /// `(p(x), p'(x))` in one sweep over the kernel window.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let inv = 1.0 / self.bandwidth;
        let (mut value, mut slope) = (0.0, 0.0);
        for &c in self.window(x) {
            let u = (x - c) * inv;
            let k = (-0.5 * u * u).exp();
            value += k;
            slope -= u * k;
        }
        let scale = INV_SQRT_2PI * inv / self.centers.len() as f64;
        (value * scale, slope * scale * inv)
    }

    /// Interval outside of which every kernel is below the cutoff.
    pub fn support(&self) -> (f64, f64) {
        let reach = KERNEL_CUTOFF * self.bandwidth;
        (self.centers[0] - reach, self.centers[self.centers.len() - 1] + reach)
    }

    /// Largest density value attained at a particle position.
    pub fn max_at_centers(&self) -> f64 {
        self.centers.iter().map(|&c| self.eval(c)).fold(0.0, f64::max)
    }
}

pub fn kde_build(ensemble: &ParticleEnsemble, eps: f64) -> Result<KdeModel> {
    KdeModel::new(ensemble, eps)
}

pub fn kde_eval(model: &KdeModel, x: f64) -> f64 {
    model.eval(x)
}

pub fn kde_eval_derivative(model: &KdeModel, x: f64) -> f64 {
    model.eval_derivative(x)
}

/// `c · N^{-1/(2s+1)}`, the rate-optimal bandwidth for a kernel of order `s`.
pub fn optimal_bandwidth(np: usize, s: u32, c: f64) -> f64 {
    assert!(np >= 1, "optimal_bandwidth needs at least one particle");
    c * (np as f64).powf(-1.0 / (2.0 * s as f64 + 1.0))
}

/// Bandwidth constant for which `optimal_bandwidth(200, 2, c) == 0.5`.
pub fn calibrated_bandwidth_constant() -> f64 {
    0.5 * 200f64.powf(0.2)
}

/// Finite mixture of univariate Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != variances.len() {
            return Err(Error::Domain("mixture components must have matching, non-zero lengths".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Domain("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("mixture weights sum to {total}, not 1")));
        }
        if variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Domain("mixture variances must be positive".into()));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Domain("mixture means must be finite".into()));
        }
        Ok(Self {
            weights,
            means,
            variances,
        })
    }

    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![variance])
    }

    /// `½ N(−μ, σ²) + ½ N(μ, σ²)`.
    pub fn symmetric_bimodal(mu: f64, variance: f64) -> Result<Self> {
        Self::new(vec![0.5, 0.5], vec![-mu, mu], vec![variance, variance])
    }

    /// The bimodal test density with `μ = 1`, `σ² = 0.2`.
    pub fn bimodal_reference() -> Self {
        Self::symmetric_bimodal(1.0, 0.2).expect("valid constants")
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((w, m), v)| {
                let d = x - m;
                w * (-0.5 * d * d / v).exp() * INV_SQRT_2PI / v.sqrt()
            })
            .sum()
    }

    /// `∫ (p'')² dx`, in closed form from pairwise Gaussian convolutions.
    pub fn curvature_roughness(&self) -> f64 {
        let k = self.weights.len();
        let mut r = 0.0;
        for i in 0..k {
            for j in 0..k {
                let d = self.means[i] - self.means[j];
                let v = self.variances[i] + self.variances[j];
                let phi = (-0.5 * d * d / v).exp() * INV_SQRT_2PI / v.sqrt();
                let d2 = d * d;
                r += self.weights[i] * self.weights[j] * phi * (d2 * d2 - 6.0 * d2 * v + 3.0 * v * v) / v.powi(4);
            }
        }
        r
    }

    /// Constant `c` of the AMISE-optimal Gaussian-kernel bandwidth `c · N^{-1/5}`
    /// for this density: `c = (R(K) / R(p''))^{1/5}` with `R(K) = 1/(2√π)`.
    pub fn amise_bandwidth_constant(&self) -> f64 {
        let rk = 0.5 / std::f64::consts::PI.sqrt();
        (rk / self.curvature_roughness()).powf(0.2)
    }

    /// Draws `n` i.i.d. samples: a component by weight, then a Gaussian draw.
    pub fn sample(&self, n: usize, seed: u64) -> Result<ParticleEnsemble> {
        let mut rng = rng_from_seed(seed);
        let positions = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut k = self.weights.len() - 1;
                for (j, w) in self.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        k = j;
                        break;
                    }
                }
                let z: f64 = rng.sample(StandardNormal);
                self.means[k] + self.variances[k].sqrt() * z
            })
            .collect();
        ParticleEnsemble::new(positions, 0.0)
    }
}

pub fn mixture_eval(mix: &GaussianMixture, x: f64) -> f64 {
    mix.eval(x)
}

pub fn mixture_sample(mix: &GaussianMixture, n: usize, seed: u64) -> Result<ParticleEnsemble> {
    mix.sample(n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::QuadratureRule;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn integral(model: &KdeModel) -> f64 {
        let (a, b) = model.support();
        QuadratureRule::default().integrate_over(a, b, |x| model.eval(x))
    }

    #[test]
    fn amise_constant_for_a_gaussian_is_silvermans() {
        for sigma in [0.5, 1.0, 3.0] {
            let g = GaussianMixture::gaussian(0.3, sigma * sigma).unwrap();
            assert_abs_diff_eq!(g.amise_bandwidth_constant(), (4.0f64 / 3.0).powf(0.2) * sigma, epsilon = 1e-12);
        }
    }

    #[test]
    fn curvature_roughness_matches_quadrature() {
        let mix = GaussianMixture::bimodal_reference();
        let second = |x: f64| {
            mix.weights()
                .iter()
                .zip(mix.means())
                .zip(mix.variances())
                .map(|((w, m), v)| {
                    let d = x - m;
                    w * (d * d / (v * v) - 1.0 / v) * (-0.5 * d * d / v).exp() * INV_SQRT_2PI / v.sqrt()
                })
                .sum::<f64>()
        };
        let numeric = QuadratureRule::default().integrate(|x| second(x).powi(2));
        assert_abs_diff_eq!(mix.curvature_roughness(), numeric, epsilon = 1e-9 * numeric);
    }

    #[test]
    fn single_particle_is_standard_gaussian() {
        let e = ParticleEnsemble::new(vec![0.0], 0.0).unwrap();
        let m = kde_build(&e, 1.0).unwrap();
        assert_abs_diff_eq!(kde_eval(&m, 0.0), 0.398_942, epsilon = 1e-6);
        assert_eq!(kde_eval_derivative(&m, 0.0), 0.0);
        assert_abs_diff_eq!(integral(&m), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn two_symmetric_particles() {
        let e = ParticleEnsemble::new(vec![-1.0, 1.0], 0.0).unwrap();
        let m = kde_build(&e, 1.0).unwrap();
        let expect = INV_SQRT_2PI * (-0.5f64).exp();
        assert_abs_diff_eq!(kde_eval(&m, 0.0), expect, epsilon = 1e-15);
        assert_abs_diff_eq!(kde_eval(&m, 0.0), 0.241_971, epsilon = 1e-6);
        assert_abs_diff_eq!(kde_eval_derivative(&m, 0.0), 0.0, epsilon = 1e-16);
    }

    #[test]
    fn far_tail_underflows_to_zero() {
        let e = ParticleEnsemble::new(vec![0.0, 0.5], 0.0).unwrap();
        let m = kde_build(&e, 0.3).unwrap();
        assert!(kde_eval(&m, 1e3) < 1e-300);
        assert!(kde_eval(&m, -1e6) < 1e-300);
    }

    #[test]
    fn bimodal_kde_has_interior_minimum() {
        let e = GaussianMixture::bimodal_reference().sample(200, 3).unwrap();
        let m = kde_build(&e, 0.5).unwrap();
        let at0 = kde_eval(&m, 0.0);
        assert!(at0 > 0.0);
        assert!(at0 < kde_eval(&m, 1.0) && at0 < kde_eval(&m, -1.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let e = ParticleEnsemble::new(vec![0.0], 0.0).unwrap();
        assert!(matches!(kde_build(&e, 0.0), Err(Error::Domain(_))));
        assert!(kde_build(&e, -1.0).is_err());
        assert!(ParticleEnsemble::new(vec![], 0.0).is_err());
        assert!(ParticleEnsemble::new(vec![f64::NAN], 0.0).is_err());
    }

    #[test]
    fn bandwidth_rule() {
        assert_abs_diff_eq!(optimal_bandwidth(200, 2, 1.0), 0.346_57, epsilon = 1e-5);
        assert_eq!(optimal_bandwidth(1, 2, 0.5), 0.5);
        assert_abs_diff_eq!(optimal_bandwidth(100_000, 2, 1.0), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(optimal_bandwidth(200, 2, calibrated_bandwidth_constant()), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(calibrated_bandwidth_constant(), 1.442_699_9, epsilon = 1e-7);
    }

    #[test]
    fn bimodal_mixture_value_at_origin() {
        let mix = GaussianMixture::bimodal_reference();
        let expect = (2.0 * std::f64::consts::PI * 0.2).powf(-0.5) * (-1.0f64 / 0.4).exp();
        assert_abs_diff_eq!(mixture_eval(&mix, 0.0), expect, epsilon = 1e-15);
        assert_abs_diff_eq!(mixture_eval(&mix, 0.0), 0.07322, epsilon = 1e-5);
    }

    #[test]
    fn bimodal_sample_mean_is_zero() {
        let mix = GaussianMixture::bimodal_reference();
        let s = mixture_sample(&mix, 1_000_000, 11).unwrap();
        assert!(s.mean().abs() < 3e-3, "mean {}", s.mean());
    }

    #[test]
    fn single_component_is_plain_gaussian() {
        let mix = GaussianMixture::gaussian(0.5, 2.0).unwrap();
        let x = 1.3;
        let expect = (-(x - 0.5f64).powi(2) / 4.0).exp() / (2.0 * std::f64::consts::PI * 2.0).sqrt();
        assert_abs_diff_eq!(mix.eval(x), expect, epsilon = 1e-15);
    }

    #[test]
    fn mixture_validation() {
        assert!(GaussianMixture::new(vec![0.5, 0.4], vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(GaussianMixture::new(vec![1.0], vec![0.0], vec![0.0]).is_err());
        assert!(GaussianMixture::new(vec![1.0], vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn particle_mean_examples() {
        assert_eq!(particle_mean(&ParticleEnsemble::new(vec![-1.0, 1.0], 0.0).unwrap()), 0.0);
        assert_eq!(particle_mean(&ParticleEnsemble::new(vec![1.0, 2.0, 3.0], 0.0).unwrap()), 2.0);
        let g = GaussianMixture::gaussian(3.0, 1.0).unwrap().sample(10_000, 5).unwrap();
        assert!((particle_mean(&g) - 3.0).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn kde_integrates_to_one(
            positions in proptest::collection::vec(-5.0f64..5.0, 1..40),
            eps in 0.05f64..2.0,
        ) {
            let m = KdeModel::from_positions(&positions, eps).unwrap();
            prop_assert!((integral(&m) - 1.0).abs() < 1e-10);
        }

        #[test]
        fn kde_derivative_matches_finite_differences(
            positions in proptest::collection::vec(-3.0f64..3.0, 1..20),
            eps in 0.2f64..1.5,
            x in -4.0f64..4.0,
        ) {
            let m = KdeModel::from_positions(&positions, eps).unwrap();
            let h = 1e-5;
            let fd = (m.eval(x + h) - m.eval(x - h)) / (2.0 * h);
            prop_assert!((m.eval_derivative(x) - fd).abs() < 1e-6);
            prop_assert!(m.eval(x) >= 0.0);
        }
    }
}
