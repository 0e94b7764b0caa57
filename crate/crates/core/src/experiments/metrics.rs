//! Error metrics for filter runs and gain approximations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `[Σ_k (x_k − x̂_k)²]^{1/2}`: the root of the summed (not averaged) squared error.
pub fn rmse(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::Domain(format!(
            "rmse needs equal lengths, got {} and {}",
            truth.len(),
            estimate.len()
        )));
    }
    Ok(truth
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Mean of per-run RMSEs.
pub fn armse(rmses: &[f64]) -> Result<f64> {
    if rmses.is_empty() {
        return Err(Error::Domain("armse of an empty list".into()));
    }
    Ok(rmses.iter().sum::<f64>() / rmses.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L1,
    L2,
}

/// `n` equally spaced points covering `[a, b]`.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(a < b) {
        return Err(Error::Domain(format!("grid needs n >= 2 and a < b, got n = {n} on [{a}, {b}]")));
    }
    let h = (b - a) / (n - 1) as f64;
    Ok((0..n).map(|i| if i == n - 1 { b } else { a + i as f64 * h }).collect())
}

/// Composite trapezoid approximation of `‖f_ref − f_test‖` over the grid's span.
pub fn grid_error<F, G>(f_ref: F, f_test: G, grid: &[f64], norm: Norm) -> Result<f64>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let diffs: Vec<f64> = grid.iter().map(|&x| f_ref(x) - f_test(x)).collect();
    grid_error_values(grid, &diffs, norm)
}

/// [`grid_error`] from the pointwise differences already sampled on `grid`.
pub fn grid_error_values(grid: &[f64], diffs: &[f64], norm: Norm) -> Result<f64> {
    if grid.len() < 2 || grid.len() != diffs.len() {
        return Err(Error::Domain("grid error needs at least two points and matching values".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Domain("grid must be strictly increasing".into()));
    }
    let g = |d: f64| match norm {
        Norm::L1 => d.abs(),
        Norm::L2 => d * d,
    };
    let integral: f64 = grid
        .windows(2)
        .zip(diffs.windows(2))
        .map(|(x, d)| 0.5 * (x[1] - x[0]) * (g(d[0]) + g(d[1])))
        .sum();
    Ok(match norm {
        Norm::L1 => integral,
        Norm::L2 => integral.sqrt(),
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Domain("slope fit needs at least two (x, y) pairs".into()));
    }
    if xs.iter().chain(ys).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Domain("log-log fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("log-log fit needs at least two distinct x values".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}
