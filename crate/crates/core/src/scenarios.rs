//! The two worked examples: laws of the mean-field equations and the
//! corresponding most probable paths.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::Result;
use crate::grid::{Path, TimeGrid};
use crate::kernel::{FbmMethod, CHOLESKY_MAX_STEPS};
use crate::mkv::{law_path, simulate_ensemble_with, DriftSpec, EnsembleConfig, LawMode, LawPath};
use crate::mpp::{minimize_action, MppOptions, MppResult};
use crate::special::HurstModel;

/// Finest grid used to simulate a law before restricting it.
pub const LAW_STEPS: usize = 1024;

pub const EXAMPLE1_START: f64 = PI;
pub const EXAMPLE1_END: f64 = 2.0;
pub const EXAMPLE2_START: [f64; 2] = [-FRAC_PI_2, 0.0];
pub const EXAMPLE2_END: [f64; 2] = [FRAC_PI_2, 0.0];

/// Smallest multiple of `grid.steps()` that is at least [`LAW_STEPS`].
pub fn law_grid(grid: TimeGrid) -> Result<TimeGrid> {
    let n = grid.steps();
    TimeGrid::new(n * LAW_STEPS.div_ceil(n).max(1))
}

/// Law of the mean-field equation on `grid`, simulated with antithetic
/// particle pairs on a grid of at least [`LAW_STEPS`] steps and restricted.
///
/// With antithetic pairs the noise averages to exactly zero, so for drifts
/// that are affine in the state the ensemble mean is the Euler solution of
/// the mean equation; the fine grid keeps that Euler error small.
pub fn frozen_law(
    drift: &DriftSpec,
    x0: &[f64],
    model: &HurstModel,
    grid: TimeGrid,
    particles: usize,
    seed: u64,
) -> Result<LawPath> {
    let fine = law_grid(grid)?;
    let mut cfg = EnsembleConfig::new(particles + particles % 2, seed);
    cfg.antithetic = true;
    if fine.steps() <= CHOLESKY_MAX_STEPS {
        cfg.method = FbmMethod::Cholesky;
    }
    let e = simulate_ensemble_with(drift, x0, model, fine, &cfg)?;
    law_path(&e, LawMode::MeanOnly).restrict(grid)
}

pub fn example1_law(
    model: &HurstModel,
    grid: TimeGrid,
    particles: usize,
    seed: u64,
) -> Result<LawPath> {
    frozen_law(
        &DriftSpec::example1_sine(),
        &[EXAMPLE1_START],
        model,
        grid,
        particles,
        seed,
    )
}

pub fn example2_law(
    model: &HurstModel,
    grid: TimeGrid,
    particles: usize,
    seed: u64,
) -> Result<LawPath> {
    frozen_law(
        &DriftSpec::example2_pendulum(),
        &EXAMPLE2_START,
        model,
        grid,
        particles,
        seed,
    )
}

/// Most probable path from `pi` to `2` for the sine mean-field drift.
pub fn example1_mpp(model: &HurstModel, law: &LawPath, opts: &MppOptions) -> Result<MppResult> {
    minimize_action(
        &DriftSpec::example1_sine(),
        law,
        model,
        &[EXAMPLE1_START],
        &[EXAMPLE1_END],
        law.grid(),
        opts,
    )
}

/// Most probable path from `(-pi/2, 0)` to `(pi/2, 0)` for the pendulum.
pub fn example2_mpp(model: &HurstModel, law: &LawPath, opts: &MppOptions) -> Result<MppResult> {
    minimize_action(
        &DriftSpec::example2_pendulum(),
        law,
        model,
        &EXAMPLE2_START,
        &EXAMPLE2_END,
        law.grid(),
        opts,
    )
}

/// Zero-drift minimizer between `x0` and `x1`: `x0 + (x1 - x0) R(t, 1) / R(1, 1)`
/// with `R` the fBm covariance.
pub fn cameron_martin_bridge(model: &HurstModel, grid: TimeGrid, x0: f64, x1: f64) -> Result<Path> {
    Path::from_fn(grid, |t| {
        x0 + (x1 - x0) * crate::kernel::fbm_covariance(t, 1.0, model)
    })
}
