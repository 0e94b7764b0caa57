//! Composite Gauss-Legendre quadrature on uniform panels.

use std::num::NonZeroUsize;
use std::sync::Arc;

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};

/// A composite Gauss-Legendre rule: intervals are cut into panels of length
/// at most `1 / panels_per_unit` and each panel gets an `order`-point rule.
///
/// `half_width` is the default integration window `[-L, L]` used when no
/// explicit interval is given.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    half_width: f64,
    panels_per_unit: usize,
    reference: Arc<[(f64, f64)]>,
}

impl QuadratureRule {
    pub fn new(half_width: f64, panels_per_unit: usize, order: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::Domain(format!(
                "quadrature half-width must be positive, got {half_width}"
            )));
        }
        if panels_per_unit == 0 {
            return Err(Error::Domain("panels_per_unit must be at least 1".into()));
        }
        let order = NonZeroUsize::new(order)
            .ok_or_else(|| Error::Domain("quadrature order must be at least 1".into()))?;
        let reference: Arc<[(f64, f64)]> = GaussLegendre::new(order)
            .as_node_weight_pairs()
            .iter()
            .copied()
            .collect();
        Ok(Self {
            half_width,
            panels_per_unit,
            reference,
        })
    }

    /// Coarse starting rule for adaptive refinement: `[-12, 12]`, unit panels, 16 nodes each.
    pub fn coarse() -> Self {
        Self::new(12.0, 1, 16).expect("valid constants")
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn panels_per_unit(&self) -> usize {
        self.panels_per_unit
    }

    pub fn order(&self) -> usize {
        self.reference.len()
    }

    /// Same rule with twice as many panels per unit length.
    pub fn refined(&self) -> Self {
        Self {
            half_width: self.half_width,
            panels_per_unit: self.panels_per_unit * 2,
            reference: Arc::clone(&self.reference),
        }
    }

    /// Calls `visit(node, weight)` for every node of the composite rule on `[a, b]`.
    pub fn for_each_node<F: FnMut(f64, f64)>(&self, a: f64, b: f64, mut visit: F) {
        if !(b > a) {
            return;
        }
        let panels = (((b - a) * self.panels_per_unit as f64).ceil() as usize).max(1);
        let h = (b - a) / panels as f64;
        for p in 0..panels {
            let lo = a + p as f64 * h;
            let mid = lo + 0.5 * h;
            for &(t, w) in self.reference.iter() {
                visit(mid + 0.5 * h * t, 0.5 * h * w);
            }
        }
    }

    pub fn integrate_over<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let mut acc = 0.0;
        self.for_each_node(a, b, |x, w| acc += w * f(x));
        acc
    }

    /// Integral over the default window `[-L, L]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, f: F) -> f64 {
        self.integrate_over(-self.half_width, self.half_width, f)
    }
}

impl Default for QuadratureRule {
    /// `[-12, 12]`, unit panels, 64 nodes per panel.
    fn default() -> Self {
        Self::new(12.0, 1, 64).expect("valid constants")
    }
}
