use std::fmt;
use std::sync::Arc;

/// Shared scalar function handle.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Observation function `h` with a human-readable description.
#[derive(Clone)]
pub struct ObservationFn {
    h: ScalarFn,
    description: String,
}

impl ObservationFn {
    pub fn new<F>(description: impl Into<String>, h: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            h: Arc::new(h),
            description: description.into(),
        }
    }

    /// `h(x) = x`
    pub fn identity() -> Self {
        Self::new("x", |x| x)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("{c}"), move |_| c)
    }

    /// `h(x) = Σ_k c_k x^k`
    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        let description = coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| format!("{c}*x^{k}"))
            .collect::<Vec<_>>()
            .join(" + ");
        Self::new(description, move |x| coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.h)(x)
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

impl fmt::Debug for ObservationFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ObservationFn")
            .field("description", &self.description)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_uses_horner() {
        let h = ObservationFn::polynomial(vec![1.0, -2.0, 3.0]);
        assert_eq!(h.eval(2.0), 1.0 - 4.0 + 12.0);
        assert_eq!(ObservationFn::identity().eval(-0.25), -0.25);
        assert_eq!(ObservationFn::constant(4.0).eval(9.0), 4.0);
    }
}
