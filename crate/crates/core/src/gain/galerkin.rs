use serde::{Deserialize, Serialize};

use crate::density::{KdeModel, ParticleEnsemble};
use crate::error::{Error, Result};
use crate::hermite::{fill_basis, HermiteSeries};
use crate::quadrature::QuadratureRule;

use super::observation::ObservationFn;

/// Max-norm change between successive refinements at which the RHS is accepted.
pub const RHS_TOL: f64 = 1e-10;
const MAX_REFINEMENTS: usize = 10;

/// How `ĥ` is obtained for the Galerkin right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HhatMode {
    /// `(1/N) Σ h(Xⁱ)`
    #[default]
    SampleMean,
    /// `∫ h p_ε dx` against the kernel density estimate.
    KdeIntegral,
}

/// Safeguards applied when reconstructing `K = f / p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainClamps {
    /// Density floor as a fraction of the largest density value at a particle.
    pub p_floor_rel: f64,
    /// Bound on `|K|`.
    pub k_max: f64,
}

impl Default for GainClamps {
    fn default() -> Self {
        Self {
            p_floor_rel: 1e-8,
            k_max: 1e3,
        }
    }
}

pub fn compute_hhat(ensemble: &ParticleEnsemble, h: &ObservationFn) -> f64 {
    let xs = ensemble.positions();
    xs.iter().map(|&x| h.eval(x)).sum::<f64>() / xs.len() as f64
}

/// `b_l = −∫ (h − ĥ) p_ε H̃_l dx` for `l = 0..=M+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhsVector {
    b: Vec<f64>,
    panels_per_unit: usize,
}

impl RhsVector {
    pub fn new(b: Vec<f64>) -> Result<Self> {
        if b.len() < 2 {
            return Err(Error::Domain(format!(
                "right-hand side needs at least 2 entries, got {}",
                b.len()
            )));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("right-hand side has non-finite entries".into()));
        }
        Ok(Self {
            b,
            panels_per_unit: 0,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.b
    }

    /// Truncation order `M` the vector belongs to.
    pub fn order(&self) -> usize {
        self.b.len() - 2
    }

    /// Panel density of the accepted quadrature level (0 when built by hand).
    pub fn panels_per_unit(&self) -> usize {
        self.panels_per_unit
    }
}

fn integration_intervals(kde: &KdeModel, half_width: f64) -> Vec<(f64, f64)> {
    let (a, b) = kde.support();
    let (c, d) = (-half_width, half_width);
    if b < c || d < a {
        let mut v = vec![(a, b), (c, d)];
        v.sort_by(|x, y| x.0.total_cmp(&y.0));
        v
    } else {
        vec![(a.min(c), b.max(d))]
    }
}

fn rhs_with_rule(
    kde: &KdeModel,
    h: &ObservationFn,
    hhat: f64,
    len: usize,
    rule: &QuadratureRule,
) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; len];
    let mut basis = vec![0.0; len];
    let mut bad = None;
    for (lo, hi) in integration_intervals(kde, rule.half_width()) {
        rule.for_each_node(lo, hi, |x, w| {
            let p = kde.eval(x);
            if p == 0.0 {
                return;
            }
            let hx = h.eval(x);
            if !hx.is_finite() {
                bad.get_or_insert(x);
                return;
            }
            fill_basis(x, &mut basis);
            let s = w * (hx - hhat) * p;
            for (a, b) in acc.iter_mut().zip(&basis) {
                *a -= s * b;
            }
        });
    }
    match bad {
        Some(x) => Err(Error::Domain(format!(
            "observation function `{}` is not finite at x = {x}",
            h.description()
        ))),
        None => Ok(acc),
    }
}

/// Builds the Galerkin right-hand side for truncation order `order`.
///
/// Integrates over `[min Xⁱ − 12ε, max Xⁱ + 12ε] ∪ [−L, L]`, starting from
/// `quad` and doubling its panel count until two successive vectors agree to
/// [`RHS_TOL`] in the max norm.
pub fn galerkin_rhs(
    kde: &KdeModel,
    h: &ObservationFn,
    hhat: f64,
    order: usize,
    quad: &QuadratureRule,
) -> Result<RhsVector> {
    let len = order + 2;
    let mut rule = quad.clone();
    let mut prev = rhs_with_rule(kde, h, hhat, len, &rule)?;
    let mut change = f64::INFINITY;
    for _ in 0..MAX_REFINEMENTS {
        rule = rule.refined();
        let next = rhs_with_rule(kde, h, hhat, len, &rule)?;
        change = prev
            .iter()
            .zip(&next)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        prev = next;
        if change < RHS_TOL {
            let mut rhs = RhsVector::new(prev)?;
            rhs.panels_per_unit = rule.panels_per_unit();
            return Ok(rhs);
        }
    }
    Err(Error::Numerical(format!(
        "right-hand side quadrature not converged after {MAX_REFINEMENTS} refinements (change {change:.3e})"
    )))
}

/// Coefficients of `f_{N,M}` and the mismatch of the one row the recursion skips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalerkinSolution {
    pub series: HermiteSeries,
    /// `|a_1 √(1/2) − b_0|`
    pub row0_residual: f64,
}

/// Backward recursion over rows `l = M+1, …, 1` of the tridiagonal system
/// `a_{l+1} √((l+1)/2) − a_{l−1} √(l/2) = b_l`.
pub fn galerkin_solve(rhs: &RhsVector) -> Result<GalerkinSolution> {
    let b = rhs.values();
    let m = rhs.order();
    let mut a = vec![0.0; m + 1];
    a[m] = -b[m + 1] * (2.0 / (m as f64 + 1.0)).sqrt();
    if m >= 1 {
        a[m - 1] = -b[m] * (2.0 / m as f64).sqrt();
    }
    for l in (1..m).rev() {
        let lf = l as f64;
        a[l - 1] = (a[l + 1] * ((lf + 1.0) / 2.0).sqrt() - b[l]) * (2.0 / lf).sqrt();
    }
    let a1 = if m >= 1 { a[1] } else { 0.0 };
    let row0_residual = (a1 * 0.5f64.sqrt() - b[0]).abs();
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("backward recursion produced non-finite coefficients".into()));
    }
    Ok(GalerkinSolution {
        series: HermiteSeries::new(a)?,
        row0_residual,
    })
}

/// Row residuals `(A a − b)_l` for `l = 0..=M+1`, with `A` the
/// `(M+2) × (M+1)` tridiagonal Galerkin matrix.
pub fn tridiagonal_residuals(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(b.len(), a.len() + 1, "b must have one more entry than a");
    let coef = |k: isize| -> f64 {
        if k < 0 || k as usize >= a.len() {
            0.0
        } else {
            a[k as usize]
        }
    };
    (0..b.len())
        .map(|l| {
            let lf = l as f64;
            let li = l as isize;
            coef(li + 1) * ((lf + 1.0) / 2.0).sqrt() - coef(li - 1) * (lf / 2.0).sqrt() - b[l]
        })
        .collect()
}

/// Hermite-Galerkin gain: `K(x) = f_{N,M}(x) / p_ε(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalerkinGain {
    pub series: HermiteSeries,
    pub kde: KdeModel,
    pub hhat: f64,
    pub row0_residual: f64,
    p_floor: f64,
    k_max: f64,
}

impl GalerkinGain {
    pub fn new(solution: GalerkinSolution, kde: KdeModel, hhat: f64, clamps: GainClamps) -> Self {
        let p_floor = clamps.p_floor_rel * kde.max_at_centers();
        Self {
            series: solution.series,
            kde,
            hhat,
            row0_residual: solution.row0_residual,
            p_floor,
            k_max: clamps.k_max,
        }
    }

    pub fn p_floor(&self) -> f64 {
        self.p_floor
    }

    /// `f_{N,M}(x)`
    pub fn flux(&self, x: f64) -> f64 {
        self.series.eval(x)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let p = self.kde.eval(x).max(self.p_floor);
        (self.series.eval(x) / p).clamp(-self.k_max, self.k_max)
    }

    /// `(K(x), K'(x))`; the derivative is zero where `K` is clamped, and the
    /// floored density is treated as locally constant.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let (f, df) = self.series.eval_with_derivative(x);
        let (mut p, mut dp) = self.kde.eval_with_derivative(x);
        if p < self.p_floor {
            p = self.p_floor;
            dp = 0.0;
        }
        let k = f / p;
        if k.abs() > self.k_max {
            return (k.clamp(-self.k_max, self.k_max), 0.0);
        }
        (k, (df * p - f * dp) / (p * p))
    }

    pub fn eval_derivative(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).1
    }

    /// `u = −½ K (h + ĥ) + ½ K K'`
    pub fn control(&self, h: &ObservationFn, x: f64) -> f64 {
        let (k, dk) = self.eval_with_derivative(x);
        -0.5 * k * (h.eval(x) + self.hhat) + 0.5 * k * dk
    }
}

pub fn gain_eval(g: &GalerkinGain, x: f64) -> f64 {
    g.eval(x)
}

pub fn gain_derivative_eval(g: &GalerkinGain, x: f64) -> f64 {
    g.eval_derivative(x)
}

pub fn control_u(g: &GalerkinGain, h: &ObservationFn, x: f64) -> f64 {
    g.control(h, x)
}

/// Hermite-Galerkin solver settings.
#[derive(Debug, Clone)]
pub struct HermiteGalerkin {
    pub order: usize,
    pub bandwidth: f64,
    /// Starting rule for the adaptive right-hand side quadrature.
    pub quad: QuadratureRule,
    pub clamps: GainClamps,
    pub hhat_mode: HhatMode,
}

impl HermiteGalerkin {
    pub fn new(order: usize, bandwidth: f64) -> Self {
        Self {
            order,
            bandwidth,
            quad: QuadratureRule::coarse(),
            clamps: GainClamps::default(),
            hhat_mode: HhatMode::SampleMean,
        }
    }

    pub fn hhat(&self, ensemble: &ParticleEnsemble, kde: &KdeModel, h: &ObservationFn) -> f64 {
        match self.hhat_mode {
            HhatMode::SampleMean => compute_hhat(ensemble, h),
            HhatMode::KdeIntegral => {
                let (a, b) = kde.support();
                QuadratureRule::default().integrate_over(a, b, |x| h.eval(x) * kde.eval(x))
            }
        }
    }

    /// KDE, right-hand side and backward solve for one ensemble.
    pub fn solve(&self, ensemble: &ParticleEnsemble, h: &ObservationFn) -> Result<GalerkinGain> {
        let kde = KdeModel::new(ensemble, self.bandwidth)?;
        let hhat = self.hhat(ensemble, &kde, h);
        let rhs = galerkin_rhs(&kde, h, hhat, self.order, &self.quad)?;
        let solution = galerkin_solve(&rhs)?;
        Ok(GalerkinGain::new(solution, kde, hhat, self.clamps))
    }
}
