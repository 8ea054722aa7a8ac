//! Onsager–Machlup functionals for McKean–Vlasov equations driven by
//! fractional Brownian motion.
//!
//! The crate provides Riemann–Liouville fractional operators on uniform
//! grids, the fBm Volterra kernel with its operator `K^H` and inverse, fBm
//! samplers, mean-field particle simulation, the Onsager–Machlup action in
//! the singular (`1/4 < H < 1/2`), classical (`H = 1/2`) and regular
//! (`1/2 < H < 1`) regimes, and a most-probable-path solver.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod frac;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod mkv;
pub mod mpp;
pub mod om;
pub mod par;
pub mod quad;
pub mod rng;
pub mod scenarios;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use grid::{Path, SampledFn, TimeGrid};
pub use kernel::{
    apply_kh, apply_kh_inverse, estimate_small_ball, fbm_covariance, kernel_kh, norm_holder,
    norm_sup, sample_fbm_cholesky, sample_fbm_volterra, FbmMethod, FbmSampler, Norm,
    SmallBallEstimate, SmallBallQuery,
};
pub use mkv::{
    empirical_mean, law_path, simulate_ensemble, wasserstein2_1d, DriftSpec, EmpiricalLaw,
    Ensemble, LawMode, LawPath, LawView,
};
pub use mpp::{
    action_gradient, el_residual_classical, minimize_action, pendulum_reference, MppOptions,
    MppResult,
};
pub use om::{
    drift_transform, estimate_ratio, estimate_ratio_with_law, om_action, phi_dot, OmReport,
    RatioEstimate, RatioQuery,
};
pub use special::{beta, gamma, HurstModel, Regime};
