//! Reference gain by direct integration of the scalar boundary value problem:
//! `K(x) = −(1/p(x)) ∫_{−∞}^x (h(y) − ĥ) p(y) dy`.

use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;

use super::observation::ObservationFn;

/// Densities below this value are clamped before dividing.
pub const EXACT_DENSITY_FLOOR: f64 = 1e-300;

fn floored(px: f64, x: f64) -> f64 {
    if px < EXACT_DENSITY_FLOOR {
        log::warn!("density {px:e} at x = {x} is below the floor; clamping");
        EXACT_DENSITY_FLOOR
    } else {
        px
    }
}

/// Exact gain at `x`, integrating from the left cutoff `−L` of `quad`.
pub fn exact_gain<P>(p: P, h: &ObservationFn, hhat: f64, x: f64, quad: &QuadratureRule) -> f64
where
    P: Fn(f64) -> f64,
{
    let lower = -quad.half_width();
    let flux = -quad.integrate_over(lower, x, |y| (h.eval(y) - hhat) * p(y));
    flux / floored(p(x), x)
}

/// `f(x) = −∫_{−∞}^x (h − ĥ) p dy` on an ascending grid, accumulated panel by panel.
pub fn exact_flux_on_grid<P>(
    p: P,
    h: &ObservationFn,
    hhat: f64,
    grid: &[f64],
    quad: &QuadratureRule,
) -> Result<Vec<f64>>
where
    P: Fn(f64) -> f64,
{
    if grid.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::Domain("grid must be sorted ascending".into()));
    }
    let integrand = |y: f64| (h.eval(y) - hhat) * p(y);
    let mut out = Vec::with_capacity(grid.len());
    let mut prev = -quad.half_width();
    let mut acc = 0.0;
    for &x in grid {
        if x > prev {
            acc += quad.integrate_over(prev, x, integrand);
            prev = x;
        }
        out.push(-acc);
    }
    Ok(out)
}

pub fn exact_gain_on_grid<P>(
    p: P,
    h: &ObservationFn,
    hhat: f64,
    grid: &[f64],
    quad: &QuadratureRule,
) -> Result<Vec<f64>>
where
    P: Fn(f64) -> f64,
{
    let flux = exact_flux_on_grid(&p, h, hhat, grid, quad)?;
    Ok(grid
        .iter()
        .zip(flux)
        .map(|(&x, f)| f / floored(p(x), x))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::GaussianMixture;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gaussian_gain_is_the_variance() {
        let quad = QuadratureRule::default();
        for (mu, var) in [(0.0, 1.0), (0.7, 0.3), (-1.0, 2.0)] {
            let g = GaussianMixture::gaussian(mu, var).unwrap();
            for x in [-1.5, -0.2, 0.0, 0.9, 2.0] {
                let x = mu + x * var.sqrt();
                let k = exact_gain(|y| g.eval(y), &ObservationFn::identity(), mu, x, &quad);
                assert_abs_diff_eq!(k, var, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn constant_observation_has_zero_gain() {
        let g = GaussianMixture::bimodal_reference();
        let k = exact_gain(|y| g.eval(y), &ObservationFn::constant(3.0), 3.0, 0.4, &QuadratureRule::default());
        assert_eq!(k, 0.0);
    }

    #[test]
    fn grid_version_agrees_with_pointwise() {
        let g = GaussianMixture::bimodal_reference();
        let quad = QuadratureRule::default();
        let h = ObservationFn::identity();
        let grid: Vec<f64> = (0..41).map(|i| -2.0 + 0.1 * i as f64).collect();
        let on_grid = exact_gain_on_grid(|y| g.eval(y), &h, 0.0, &grid, &quad).unwrap();
        for (x, k) in grid.iter().zip(&on_grid) {
            let point = exact_gain(|y| g.eval(y), &h, 0.0, *x, &quad);
            assert_abs_diff_eq!(*k, point, epsilon = 1e-10);
        }
        // Gain is even for the symmetric mixture and peaks at the origin.
        assert_abs_diff_eq!(on_grid[0], on_grid[40], epsilon = 1e-9);
        assert!(on_grid[20] > on_grid[10]);
    }

    #[test]
    fn unsorted_grid_is_rejected() {
        let r = exact_flux_on_grid(|_| 1.0, &ObservationFn::identity(), 0.0, &[0.0, -1.0], &QuadratureRule::default());
        assert!(r.is_err());
    }

    #[test]
    fn vanishing_density_is_clamped() {
        let k = exact_gain(|_| 0.0, &ObservationFn::identity(), 0.0, 1.0, &QuadratureRule::default());
        assert_eq!(k, 0.0);
    }
}
