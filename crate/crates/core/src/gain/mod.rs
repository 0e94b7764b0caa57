//! Gain-function solvers: the Hermite-Galerkin method, the exact quadrature
//! gain, and the constant-gain and diffusion-map baselines.

mod baselines;
mod exact;
mod galerkin;
mod observation;

pub use baselines::{constant_gain, diffusion_map_gain, DiffusionMap, DiffusionMapGain};
pub use exact::{exact_flux_on_grid, exact_gain, exact_gain_on_grid, EXACT_DENSITY_FLOOR};
pub use galerkin::{
    compute_hhat, control_u, gain_derivative_eval, gain_eval, galerkin_rhs, galerkin_solve,
    tridiagonal_residuals, GainClamps, GalerkinGain, GalerkinSolution, HermiteGalerkin, HhatMode,
    RhsVector, RHS_TOL,
};
pub use observation::{ObservationFn, ScalarFn};
