use thiserror::Error;

/// Errors produced by the filtering toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical routine failed to reach its tolerance or produced a non-finite value.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The Euler-Maruyama recursion produced a non-finite state.
    #[error("simulation diverged at step {step} (state = {value})")]
    Simulation { step: usize, value: f64 },

    /// The diffusion-map fixed point stopped before reaching its tolerance.
    #[error("diffusion-map fixed point not converged after {iters} sweeps (residual {residual:.3e})")]
    NotConverged { iters: usize, residual: f64 },

    /// A filter step failed; `source` carries the underlying cause.
    #[error("filter failed at step {step}: {source}")]
    Filter {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Filter {
            step,
            source: Box::new(self),
        }
    }
}

pub(crate) fn ensure_finite(x: f64, what: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must be finite, got {x}")))
    }
}
