//! Baseline gain approximations: constant gain and the diffusion-map
//! (kernel-based) per-particle gain.

use serde::{Deserialize, Serialize};

use crate::density::ParticleEnsemble;
use crate::error::{Error, Result};

use super::galerkin::compute_hhat;
use super::observation::ObservationFn;

/// `(1/N) Σ (h(Xⁱ) − ĥ) Xⁱ`, the Galerkin gain on the single basis function `x`.
pub fn constant_gain(ensemble: &ParticleEnsemble, h: &ObservationFn) -> f64 {
    let hhat = compute_hhat(ensemble, h);
    let xs = ensemble.positions();
    xs.iter().map(|&x| (h.eval(x) - hhat) * x).sum::<f64>() / xs.len() as f64
}

/// Settings of the diffusion-map gain approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionMap {
    pub eps: f64,
    pub max_iters: usize,
    /// Max-norm change of the potential at which the fixed point stops.
    pub tol: f64,
    /// Measure displacements from the kernel-weighted local mean `Σ_k T_ik X_k`
    /// instead of from `Xⁱ` itself.
    pub centered: bool,
}

impl Default for DiffusionMap {
    fn default() -> Self {
        Self {
            eps: 0.1,
            max_iters: 10_000,
            tol: 1e-9,
            centered: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionMapGain {
    /// Gain at each particle, in input order.
    pub gains: Vec<f64>,
    /// Fixed-point potential `Φ`.
    pub potential: Vec<f64>,
    pub iterations: usize,
    /// Last max-norm change of `Φ`.
    pub residual: f64,
    pub converged: bool,
}

impl DiffusionMap {
    pub fn new(eps: f64, max_iters: usize) -> Self {
        Self {
            eps,
            max_iters,
            ..Self::default()
        }
    }

    /// Runs the fixed point and returns the gains whether or not the
    /// tolerance was reached; check [`DiffusionMapGain::converged`].
    pub fn solve(&self, positions: &[f64], h: &ObservationFn) -> Result<DiffusionMapGain> {
        let n = positions.len();
        if n < 2 {
            return Err(Error::Domain("diffusion-map gain needs at least two particles".into()));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::Domain(format!("diffusion-map bandwidth must be positive, got {}", self.eps)));
        }
        let eps = self.eps;

        // Gaussian affinities, then the symmetric density normalization.
        let mut t = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let d = positions[i] - positions[j];
                let g = (-d * d / (4.0 * eps)).exp();
                t[i * n + j] = g;
                t[j * n + i] = g;
            }
        }
        let degree: Vec<f64> = (0..n).map(|i| t[i * n..(i + 1) * n].iter().sum::<f64>().sqrt()).collect();
        for i in 0..n {
            let row = &mut t[i * n..(i + 1) * n];
            for (j, v) in row.iter_mut().enumerate() {
                *v /= degree[i] * degree[j];
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }

        let hv: Vec<f64> = positions.iter().map(|&x| h.eval(x)).collect();
        let hhat = hv.iter().sum::<f64>() / n as f64;
        let source: Vec<f64> = hv.iter().map(|v| eps * (v - hhat)).collect();

        let mut phi = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        while iterations < self.max_iters {
            iterations += 1;
            for i in 0..n {
                let row = &t[i * n..(i + 1) * n];
                next[i] = row.iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>() + source[i];
            }
            let mean = next.iter().sum::<f64>() / n as f64;
            residual = 0.0;
            for (p, q) in phi.iter_mut().zip(next.iter_mut()) {
                *q -= mean;
                residual = residual.max((*q - *p).abs());
                *p = *q;
            }
            if residual < self.tol {
                break;
            }
        }
        let converged = residual < self.tol;

        let r: Vec<f64> = phi.iter().zip(&hv).map(|(p, v)| p + eps * v).collect();
        let gains = (0..n)
            .map(|i| {
                let row = &t[i * n..(i + 1) * n];
                let anchor = if self.centered {
                    row.iter().zip(positions).map(|(a, x)| a * x).sum()
                } else {
                    positions[i]
                };
                row.iter()
                    .zip(&r)
                    .zip(positions)
                    .map(|((a, rj), xj)| a * rj * (xj - anchor))
                    .sum::<f64>()
                    / (2.0 * eps)
            })
            .collect::<Vec<f64>>();
        if gains.iter().any(|k| !k.is_finite()) {
            return Err(Error::Numerical("diffusion-map gain is not finite".into()));
        }
        Ok(DiffusionMapGain {
            gains,
            potential: phi,
            iterations,
            residual,
            converged,
        })
    }
}

/// Diffusion-map gain at each particle; errors if the fixed point does not
/// reach tolerance within `iters` sweeps.
pub fn diffusion_map_gain(
    ensemble: &ParticleEnsemble,
    h: &ObservationFn,
    eps_dm: f64,
    iters: usize,
) -> Result<DiffusionMapGain> {
    let out = DiffusionMap::new(eps_dm, iters).solve(ensemble.positions(), h)?;
    if out.converged {
        Ok(out)
    } else {
        Err(Error::NotConverged {
            iters: out.iterations,
            residual: out.residual,
        })
    }
}
