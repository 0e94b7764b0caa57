//! Generalized Hermite functions.
//!
//! `H̃_n(x) = (π^{1/4} √(2ⁿ n!))⁻¹ e^{-x²/2} H_n(x)` form an orthonormal basis of
//! `L²(ℝ)`. Values are produced with the forward three-term recursion, which
//! stays bounded thanks to the Gaussian envelope.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::quadrature::QuadratureRule;

/// `π^{-1/4}`
pub const PI_POW_NEG_QUARTER: f64 = 0.751_125_544_464_942_5;

/// Truncation order of the spectral space `span{H̃_0, …, H̃_M}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub order: usize,
}

impl BasisSpec {
    pub fn new(order: usize) -> Self {
        Self { order }
    }

    /// Number of basis functions, `M + 1`.
    pub fn len(&self) -> usize {
        self.order + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Writes `H̃_0(x), …, H̃_{out.len()-1}(x)` into `out`. No input checks.
pub fn fill_basis(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    let h0 = PI_POW_NEG_QUARTER * (-0.5 * x * x).exp();
    out[0] = h0;
    if out.len() == 1 {
        return;
    }
    out[1] = std::f64::consts::SQRT_2 * x * h0;
    for n in 1..out.len() - 1 {
        let nf = n as f64;
        out[n + 1] = (2.0 / (nf + 1.0)).sqrt() * x * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
    }
}

/// `[H̃_0(x), …, H̃_M(x)]`.
pub fn eval_all(spec: BasisSpec, x: f64) -> Result<Vec<f64>> {
    ensure_finite(x, "evaluation point")?;
    let mut out = vec![0.0; spec.len()];
    fill_basis(x, &mut out);
    Ok(out)
}

/// `[H̃'_0(x), …, H̃'_M(x)]` from `H̃'_n = √(n/2) H̃_{n-1} − √((n+1)/2) H̃_{n+1}`.
pub fn eval_derivative_all(spec: BasisSpec, x: f64) -> Result<Vec<f64>> {
    ensure_finite(x, "evaluation point")?;
    let mut values = vec![0.0; spec.len() + 1];
    fill_basis(x, &mut values);
    Ok(derivatives_from_values(&values))
}

fn derivatives_from_values(values: &[f64]) -> Vec<f64> {
    (0..values.len() - 1)
        .map(|n| {
            let nf = n as f64;
            let down = if n == 0 {
                0.0
            } else {
                (nf / 2.0).sqrt() * values[n - 1]
            };
            down - ((nf + 1.0) / 2.0).sqrt() * values[n + 1]
        })
        .collect()
}

/// A finite expansion `Σ_m c_m H̃_m(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteSeries {
    basis: BasisSpec,
    coeffs: Vec<f64>,
}

impl HermiteSeries {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Domain("a Hermite series needs at least one coefficient".into()));
        }
        if let Some(c) = coeffs.iter().find(|c| !c.is_finite()) {
            return Err(Error::Numerical(format!("non-finite Hermite coefficient {c}")));
        }
        Ok(Self {
            basis: BasisSpec::new(coeffs.len() - 1),
            coeffs,
        })
    }

    pub fn zeros(spec: BasisSpec) -> Self {
        Self {
            basis: spec,
            coeffs: vec![0.0; spec.len()],
        }
    }

    pub fn basis(&self) -> BasisSpec {
        self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut basis = vec![0.0; self.coeffs.len()];
        fill_basis(x, &mut basis);
        dot(&self.coeffs, &basis)
    }

    pub fn eval_derivative(&self, x: f64) -> f64 {
        let mut values = vec![0.0; self.coeffs.len() + 1];
        fill_basis(x, &mut values);
        dot(&self.coeffs, &derivatives_from_values(&values))
    }

    /// Value and derivative from one pass over the recursion.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let mut values = vec![0.0; self.coeffs.len() + 1];
        fill_basis(x, &mut values);
        let value = dot(&self.coeffs, &values[..self.coeffs.len()]);
        (value, dot(&self.coeffs, &derivatives_from_values(&values)))
    }

    /// Sum of squared coefficients, i.e. the squared `L²` norm of the expansion.
    pub fn l2_norm_squared(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn eval_series(series: &HermiteSeries, x: f64) -> Result<f64> {
    ensure_finite(x, "evaluation point")?;
    Ok(series.eval(x))
}

pub fn eval_series_derivative(series: &HermiteSeries, x: f64) -> Result<f64> {
    ensure_finite(x, "evaluation point")?;
    Ok(series.eval_derivative(x))
}

/// Absolute tolerance (scaled by `1 + max|f̂|`) between two refinement levels in [`project`].
pub const PROJECTION_TOL: f64 = 1e-9;

/// `L²` projection onto `span{H̃_0, …, H̃_M}`: `f̂_m = ∫ f H̃_m dx` over the rule's window.
///
/// The coefficients are computed with `quad` and with its refinement; the
/// refined values are returned if both agree to [`PROJECTION_TOL`].
pub fn project<F: Fn(f64) -> f64>(
    f: F,
    spec: BasisSpec,
    quad: &QuadratureRule,
) -> Result<HermiteSeries> {
    let project_with = |rule: &QuadratureRule| -> Result<Vec<f64>> {
        let mut coeffs = vec![0.0; spec.len()];
        let mut basis = vec![0.0; spec.len()];
        let mut bad = None;
        let l = rule.half_width();
        rule.for_each_node(-l, l, |x, w| {
            let fx = f(x);
            if !fx.is_finite() {
                bad = Some(x);
                return;
            }
            fill_basis(x, &mut basis);
            for (c, b) in coeffs.iter_mut().zip(&basis) {
                *c += w * fx * b;
            }
        });
        match bad {
            Some(x) => Err(Error::Domain(format!("integrand is not finite at x = {x}"))),
            None => Ok(coeffs),
        }
    };
    let coarse = project_with(quad)?;
    let fine = project_with(&quad.refined())?;
    let scale = 1.0 + fine.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    let residual = coarse
        .iter()
        .zip(&fine)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    if residual > PROJECTION_TOL * scale {
        return Err(Error::Numerical(format!(
            "projection quadrature not converged (refinement residual {residual:.3e})"
        )));
    }
    HermiteSeries::new(fine)
}
