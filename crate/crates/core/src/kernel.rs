//! The fBm Volterra kernel, the operator `K^H` and its inverse, path
//! samplers, path norms and the small-ball Monte Carlo estimator.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, Error, Result};
use crate::frac::{
    cell_integral_left_slice, derivative_left_slice, finite_difference_slice, integral_left_slice,
    power_weight_slice, weighted_integral_left_slice, Target,
};
use crate::grid::{Path, SampledFn, TimeGrid};
use crate::par;
use crate::quad;
use crate::rng::{self, StreamRng};
use crate::special::{HurstModel, Regime};
use crate::stats;

/// Largest grid accepted by the dense covariance sampler.
pub const CHOLESKY_MAX_STEPS: usize = 2048;
const CHOLESKY_JITTER: f64 = 1e-12;

/// First-order discrete-monitoring correction for the sup of Brownian
/// motion, `-zeta(1/2) / sqrt(2 pi)`.
pub const SUP_MONITORING_SHIFT: f64 = 0.582_597_157_939_010_7;

/// Volterra kernel `K^H(t, s)` for `0 < s < t <= 1`.
pub fn kernel_kh(t: f64, s: f64, model: &HurstModel) -> Result<f64> {
    if !(s > 0.0 && s < t && t <= 1.0) {
        return domain(format!("kernel needs 0 < s < t <= 1, got t = {t}, s = {s}"));
    }
    Ok(kernel_unchecked(t, s, model))
}

fn kernel_unchecked(t: f64, s: f64, model: &HurstModel) -> f64 {
    const ABS: f64 = 1e-14;
    const REL: f64 = 1e-11;
    let a = model.alpha;
    match model.regime {
        Regime::Classical => 1.0,
        Regime::Regular => {
            // Substituting u = (theta - s)^a removes the (theta - s)^{a-1}
            // singularity: the integrand becomes theta^a / a.
            let upper = (t - s).powf(a);
            let inner = quad::integrate(|u| (s + u.powf(1.0 / a)).powf(a), 0.0, upper, ABS, REL);
            model.c_h * s.powf(-a) * inner
        }
        Regime::Singular => {
            // Substituting u = (theta - s)^{H + 1/2} leaves the bounded
            // integrand (1 - (s/theta)^a) / ((H + 1/2)(theta - s)).
            let g = model.hurst + 0.5;
            let upper = (t - s).powf(g);
            let inner = quad::integrate(
                |u| {
                    let d = u.powf(1.0 / g);
                    if d == 0.0 {
                        return a / (s * g);
                    }
                    -(-a * (d / s).ln_1p()).exp_m1() / (d * g)
                },
                0.0,
                upper,
                ABS,
                REL,
            );
            model.c_h * (t - s).powf(-a) + model.c_h * a * inner
        }
    }
}

/// `(K^H h)(t) = int_0^t K^H(t, s) h(s) ds`, evaluated through the composed
/// fractional form
///
/// * `H < 1/2`: `d_H I^{1-2a} s^a I^a s^{-a} h`
/// * `H > 1/2`: `d_H I^1 s^a I^a s^{-a} h`
///
/// Each power weight is folded into the fractional integral that follows it
/// so that the singular factor `s^{-a}` is integrated exactly. The factor `d_H = c_H Gamma(H + 1/2)` is what makes the composed form agree
/// with the kernel integral. The result is returned as a path starting at 0.
pub fn apply_kh(h: &SampledFn, model: &HurstModel) -> Result<Path> {
    let dt = h.grid().dt();
    let out = h.map_components(|c| apply_kh_slice(c, dt, model))?;
    Ok(Path::from(out))
}

fn apply_kh_slice(h: &[f64], dt: f64, model: &HurstModel) -> Vec<f64> {
    let a = model.alpha;
    let outer = match model.regime {
        Regime::Classical => return integral_left_slice(h, dt, 1.0),
        Regime::Singular => 1.0 - 2.0 * a,
        Regime::Regular => 1.0,
    };
    let x = weighted_integral_left_slice(h, dt, a, -a);
    let mut x = weighted_integral_left_slice(&x, dt, outer, a);
    x.iter_mut().for_each(|v| *v *= model.d_h);
    x
}

/// The operator chain shared by `(K^H)^{-1}` and the drift transform: it maps
/// the derivative `g = F'` of a function `F` with `F(0) = 0` to
/// `(K^H)^{-1} F`.
///
/// * `H < 1/2`: `d_H^{-1} s^{-a} I^a s^a g`
/// * `H > 1/2`: `d_H^{-1} s^a D^a s^{-a} g`
pub(crate) fn kh_inverse_chain_slice(g: &[f64], dt: f64, model: &HurstModel) -> Vec<f64> {
    let a = model.alpha;
    let mut x = match model.regime {
        Regime::Classical => return g.to_vec(),
        Regime::Singular => {
            let x = weighted_integral_left_slice(g, dt, a, a);
            power_weight_slice(&x, dt, -a)
        }
        Regime::Regular => {
            let x = power_weight_slice(g, dt, -a);
            let x = derivative_left_slice(&x, dt, a);
            power_weight_slice(&x, dt, a)
        }
    };
    let inv = 1.0 / model.d_h;
    x.iter_mut().for_each(|v| *v *= inv);
    x
}

/// The same chain for a piecewise-linear `F`, given its cell slopes, with
/// the result taken at the cell midpoints. Every step is exact for
/// piecewise-constant input; the regular regime differentiates the exact
/// node values of `I^{1-a}(s^{-a} g)` across each cell.
pub(crate) fn kh_inverse_cells(cells: &[f64], dt: f64, model: &HurstModel) -> Vec<f64> {
    let a = model.alpha;
    let inv = 1.0 / model.d_h;
    let mid = |i: usize| (i as f64 + 0.5) * dt;
    match model.regime {
        Regime::Classical => cells.to_vec(),
        Regime::Singular => cell_integral_left_slice(cells, dt, a, a, Target::Midpoints)
            .iter()
            .enumerate()
            .map(|(i, v)| inv * mid(i).powf(-a) * v)
            .collect(),
        Regime::Regular => {
            let y = cell_integral_left_slice(cells, dt, 1.0 - a, -a, Target::Nodes);
            y.windows(2)
                .enumerate()
                .map(|(i, w)| inv * mid(i).powf(a) * (w[1] - w[0]) / dt)
                .collect()
        }
    }
}

/// `(K^H)^{-1}(p - p(0))` for a differentiable path: the derivative comes
/// from second-order finite differences, then the regime's weighted chain is
/// applied componentwise.
pub fn apply_kh_inverse(p: &Path, model: &HurstModel) -> Result<SampledFn> {
    let dt = p.grid().dt();
    p.centered().map_components(|c| {
        let d = finite_difference_slice(c, dt);
        kh_inverse_chain_slice(&d, dt, model)
    })
}

/// `E[B^H_t B^H_s]`.
pub fn fbm_covariance(t: f64, s: f64, model: &HurstModel) -> f64 {
    let h2 = 2.0 * model.hurst;
    0.5 * (t.abs().powf(h2) + s.abs().powf(h2) - (t - s).abs().powf(h2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FbmMethod {
    /// Cell-averaged Volterra kernel against Brownian increments.
    Volterra,
    /// Exact covariance factorization.
    Cholesky,
}

impl std::str::FromStr for FbmMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "volterra" => Ok(Self::Volterra),
            "cholesky" => Ok(Self::Cholesky),
            _ => Err(Error::Usage(format!(
                "unknown fBm method '{s}' (expected volterra or cholesky)"
            ))),
        }
    }
}

impl std::fmt::Display for FbmMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Volterra => "volterra",
            Self::Cholesky => "cholesky",
        })
    }
}

/// Lower-triangular map from i.i.d. standard normals to node values
/// `B(t_1..t_n)`. Row `r` (node `r + 1`) has `r + 1` entries, packed.
#[derive(Debug)]
enum Factor {
    Brownian,
    Lower(Vec<f64>),
}

type FactorCache = RwLock<HashMap<(FbmMethod, usize, u64), Arc<Factor>>>;

fn factor_cache() -> &'static FactorCache {
    static CACHE: OnceLock<FactorCache> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Reusable fBm path generator for one `(grid, H, method)`.
#[derive(Debug, Clone)]
pub struct FbmSampler {
    grid: TimeGrid,
    model: HurstModel,
    method: FbmMethod,
    factor: Arc<Factor>,
}

impl FbmSampler {
    pub fn new(grid: TimeGrid, model: HurstModel, method: FbmMethod) -> Result<Self> {
        let key = (method, grid.steps(), model.hurst.to_bits());
        let cached = factor_cache()
            .read()
            .ok()
            .and_then(|m| m.get(&key).cloned());
        let factor = match cached {
            Some(f) => f,
            None => {
                let f = Arc::new(build_factor(grid, &model, method)?);
                if let Ok(mut m) = factor_cache().write() {
                    m.entry(key).or_insert_with(|| f.clone());
                }
                f
            }
        };
        Ok(Self {
            grid,
            model,
            method,
            factor,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn model(&self) -> &HurstModel {
        &self.model
    }

    pub fn method(&self) -> FbmMethod {
        self.method
    }

    /// One scalar path into `out` (length `n + 1`), consuming `n` normals.
    pub fn sample_into(&self, rng: &mut StreamRng, out: &mut [f64]) {
        let n = self.grid.steps();
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        out[0] = 0.0;
        match &*self.factor {
            Factor::Brownian => {
                let sd = self.grid.dt().sqrt();
                let mut acc = 0.0;
                for (o, zi) in out[1..].iter_mut().zip(&z) {
                    acc += sd * zi;
                    *o = acc;
                }
            }
            Factor::Lower(l) => {
                let mut offset = 0;
                for r in 0..n {
                    let row = &l[offset..offset + r + 1];
                    out[r + 1] = row.iter().zip(&z[..=r]).map(|(a, b)| a * b).sum();
                    offset += r + 1;
                }
            }
        }
    }

    /// Path with independent components; replica `index` of `seed`.
    pub fn sample_path(&self, dim: usize, seed: u64, index: u64) -> Path {
        let mut rng = rng::stream(seed, index);
        self.sample_with(&mut rng, dim)
    }

    pub fn sample_with(&self, rng: &mut StreamRng, dim: usize) -> Path {
        let len = self.grid.len();
        let mut comp = vec![0.0; len];
        let mut values = vec![0.0; len * dim];
        for c in 0..dim {
            self.sample_into(rng, &mut comp);
            for (i, v) in comp.iter().enumerate() {
                values[i * dim + c] = *v;
            }
        }
        Path::from_raw(self.grid, dim, values)
    }

    /// `count` paths, path `k` drawn from stream `(seed, k)`.
    pub fn sample_paths(&self, dim: usize, count: usize, seed: u64) -> Vec<Path> {
        par::map_indices(count, |k| self.sample_path(dim, seed, k as u64))
    }
}

fn build_factor(grid: TimeGrid, model: &HurstModel, method: FbmMethod) -> Result<Factor> {
    if model.is_classical() {
        return Ok(Factor::Brownian);
    }
    match method {
        FbmMethod::Volterra => Ok(Factor::Lower(volterra_weights(grid, model))),
        FbmMethod::Cholesky => cholesky_factor(grid, model).map(Factor::Lower),
    }
}

/// Packed rows `w[i][j] = (int_{t_j}^{t_{j+1}} K(t_i, s) ds) / sqrt(dt)`, so
/// that `B(t_i) = sum_j w[i][j] Z_j` with `Z_j` standard normal.
fn volterra_weights(grid: TimeGrid, model: &HurstModel) -> Vec<f64> {
    let n = grid.steps();
    let dt = grid.dt();
    let inv_sd = 1.0 / dt.sqrt();
    let rows = par::map_indices(n, |r| {
        let i = r + 1;
        let t = grid.node(i);
        (0..i)
            .map(|j| {
                let (a, b) = (grid.node(j), grid.node(j + 1));
                let cell = quad::integrate_singular(
                    |s| kernel_unchecked(t, s, model),
                    a,
                    b,
                    j == 0,
                    j + 1 == i,
                    1e-13,
                    1e-10,
                );
                cell * inv_sd
            })
            .collect::<Vec<f64>>()
    });
    rows.into_iter().flatten().collect()
}

fn cholesky_factor(grid: TimeGrid, model: &HurstModel) -> Result<Vec<f64>> {
    let n = grid.steps();
    if n > CHOLESKY_MAX_STEPS {
        return domain(format!(
            "dense covariance sampling supports at most {CHOLESKY_MAX_STEPS} steps, got {n}"
        ));
    }
    let cov = DMatrix::from_fn(n, n, |r, c| {
        fbm_covariance(grid.node(r + 1), grid.node(c + 1), model)
    });
    let chol = match cov.clone().cholesky() {
        Some(c) => c,
        None => {
            let mut jittered = cov;
            for d in 0..n {
                jittered[(d, d)] += CHOLESKY_JITTER;
            }
            jittered.cholesky().ok_or_else(|| {
                Error::Factorization(format!(
                    "covariance matrix (n = {n}, H = {}) is not positive definite even \
                     after adding {CHOLESKY_JITTER:e} jitter; try a smaller grid",
                    model.hurst
                ))
            })?
        }
    };
    let l = chol.l();
    let mut packed = Vec::with_capacity(n * (n + 1) / 2);
    for r in 0..n {
        for c in 0..=r {
            packed.push(l[(r, c)]);
        }
    }
    Ok(packed)
}

/// fBm path from the Volterra representation, stream `(seed, 0)`.
pub fn sample_fbm_volterra(
    grid: TimeGrid,
    model: &HurstModel,
    dim: usize,
    seed: u64,
) -> Result<Path> {
    Ok(FbmSampler::new(grid, *model, FbmMethod::Volterra)?.sample_path(dim, seed, 0))
}

/// fBm path from the exact covariance factorization, stream `(seed, 0)`.
pub fn sample_fbm_cholesky(
    grid: TimeGrid,
    model: &HurstModel,
    dim: usize,
    seed: u64,
) -> Result<Path> {
    Ok(FbmSampler::new(grid, *model, FbmMethod::Cholesky)?.sample_path(dim, seed, 0))
}

/// Path norm used for tube events.
/// Node fractions `(t, s)` probed by [`covariance_probe`].
pub const PROBE_PAIRS: [(f64, f64); 8] = [
    (0.125, 0.125),
    (0.25, 0.125),
    (0.5, 0.25),
    (0.5, 0.5),
    (0.75, 0.25),
    (1.0, 0.5),
    (0.75, 0.75),
    (1.0, 1.0),
];

/// Empirical against analytic covariance at one pair of nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceProbe {
    pub t: f64,
    pub s: f64,
    pub empirical: f64,
    pub analytic: f64,
    /// Standard error of `empirical`.
    pub std_error: f64,
}

impl CovarianceProbe {
    /// `(empirical - analytic) / std_error`.
    pub fn z_score(&self) -> f64 {
        (self.empirical - self.analytic) / self.std_error
    }
}

/// Empirical covariance of `count` scalar paths at the nodes nearest to the
/// fractions in `pairs`. Streams come from the `PROBE` domain of `seed`.
pub fn covariance_probe(
    sampler: &FbmSampler,
    pairs: &[(f64, f64)],
    count: usize,
    seed: u64,
) -> Result<Vec<CovarianceProbe>> {
    if count < 2 {
        return domain("the covariance probe needs at least two paths");
    }
    let grid = sampler.grid();
    let n = grid.steps();
    let stream_seed = rng::derive_seed(seed, rng::domain::PROBE);
    let paths = par::map_indices(count, |k| sampler.sample_path(1, stream_seed, k as u64));
    let model = sampler.model();
    let probes = pairs
        .iter()
        .map(|&(ft, fs)| {
            let (i, j) = (
                (ft * n as f64).round() as usize,
                (fs * n as f64).round() as usize,
            );
            let products: Vec<f64> = paths
                .iter()
                .map(|p| p.get(i.min(n), 0) * p.get(j.min(n), 0))
                .collect();
            let (empirical, std_error) = stats::mean_and_se(&products);
            let (t, s) = (grid.node(i.min(n)), grid.node(j.min(n)));
            CovarianceProbe {
                t,
                s,
                empirical,
                analytic: fbm_covariance(t, s, model),
                std_error,
            }
        })
        .collect();
    Ok(probes)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Norm {
    Sup,
    Holder { beta: f64 },
}

impl Norm {
    pub fn eval(&self, p: &Path) -> f64 {
        match *self {
            Norm::Sup => norm_sup(p),
            Norm::Holder { beta } => holder_unchecked(p, beta),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Norm::Holder { beta } = *self {
            if !(beta > 0.0 && beta < 1.0) {
                return domain(format!("Hölder exponent must lie in (0, 1), got {beta}"));
            }
        }
        Ok(())
    }

    /// Checks the Hölder exponent against the window in which the action is
    /// the small-tube limit: `0 < beta < H - 1/4` for `H <= 1/2`,
    /// `H - 1/2 < beta < H - 1/4` for `H > 1/2`.
    pub fn check_admissible(&self, model: &HurstModel) -> Result<()> {
        self.validate()?;
        if let Norm::Holder { beta } = *self {
            let hi = model.hurst - 0.25;
            let lo = if model.regime == Regime::Regular {
                model.hurst - 0.5
            } else {
                0.0
            };
            if !(beta > lo && beta < hi) {
                return domain(format!(
                    "Hölder exponent {beta} outside the admissible window ({lo}, {hi}) for H = {}",
                    model.hurst
                ));
            }
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        match self {
            Norm::Sup => "sup".to_string(),
            Norm::Holder { beta } => format!("holder({beta})"),
        }
    }
}

fn row_distance(p: &Path, i: usize, j: usize) -> f64 {
    p.row(i)
        .iter()
        .zip(p.row(j))
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// `max_i |p(t_i) - p(0)|` (Euclidean in the state).
pub fn norm_sup(p: &Path) -> f64 {
    (0..p.grid().len())
        .map(|i| row_distance(p, i, 0))
        .fold(0.0, f64::max)
}

/// `max_{i<j} |p(t_j) - p(t_i)| / (t_j - t_i)^beta` over all node pairs.
pub fn norm_holder(p: &Path, beta: f64) -> Result<f64> {
    Norm::Holder { beta }.validate()?;
    Ok(holder_unchecked(p, beta))
}

fn holder_unchecked(p: &Path, beta: f64) -> f64 {
    let g = p.grid();
    let n = g.steps();
    // Lag powers are shared by every pair with the same separation.
    let inv_pow: Vec<f64> = (0..=n)
        .map(|k| {
            if k == 0 {
                0.0
            } else {
                (k as f64 * g.dt()).powf(-beta)
            }
        })
        .collect();
    let mut best = 0.0f64;
    for i in 0..n {
        for j in i + 1..=n {
            best = best.max(row_distance(p, j, i) * inv_pow[j - i]);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallBallQuery {
    pub norm: Norm,
    pub eps: f64,
    pub samples: usize,
    pub seed: u64,
    /// Shift the sup-norm threshold by `SUP_MONITORING_SHIFT * dt^H` to
    /// compensate for monitoring the path only at grid nodes. First-order
    /// exact for Brownian motion; a heuristic for other `H`. Ignored for
    /// Hölder norms.
    pub continuity_correction: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallBallEstimate {
    pub probability: f64,
    pub std_error: f64,
    pub hits: usize,
    pub samples: usize,
    /// Fewer than 50 hits: the estimate is unreliable, enlarge `eps` or the
    /// sample count.
    pub low_hits: bool,
}

impl SmallBallEstimate {
    pub fn from_hits(hits: usize, samples: usize) -> Self {
        let p = hits as f64 / samples as f64;
        Self {
            probability: p,
            std_error: (p * (1.0 - p) / samples as f64).sqrt(),
            hits,
            samples,
            low_hits: hits < 50,
        }
    }
}

/// Norms of `samples` independent scalar fBm paths, path `k` from stream
/// `(seed, k)` of the small-ball domain.
pub fn sample_norms(
    model: &HurstModel,
    grid: TimeGrid,
    norm: Norm,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    norm.validate()?;
    let sampler = FbmSampler::new(grid, *model, FbmMethod::Volterra)?;
    let stream_seed = rng::derive_seed(seed, rng::domain::SMALL_BALL);
    Ok(par::map_indices(samples, |k| {
        norm.eval(&sampler.sample_path(1, stream_seed, k as u64))
    }))
}

/// Effective threshold after the optional monitoring correction.
pub fn effective_threshold(query: &SmallBallQuery, grid: TimeGrid, model: &HurstModel) -> f64 {
    match query.norm {
        Norm::Sup if query.continuity_correction => {
            query.eps - SUP_MONITORING_SHIFT * grid.dt().powf(model.hurst)
        }
        _ => query.eps,
    }
}

/// Plain Monte Carlo estimate of `P(||B^H|| <= eps)`.
pub fn estimate_small_ball(
    model: &HurstModel,
    grid: TimeGrid,
    query: &SmallBallQuery,
) -> Result<SmallBallEstimate> {
    if !(query.eps > 0.0) {
        return domain(format!("eps must be positive, got {}", query.eps));
    }
    if query.samples == 0 {
        return domain("small-ball estimation needs at least one sample");
    }
    let norms = sample_norms(model, grid, query.norm, query.samples, query.seed)?;
    let threshold = effective_threshold(query, grid, model);
    let hits = norms.iter().filter(|&&v| v <= threshold).count();
    Ok(SmallBallEstimate::from_hits(hits, query.samples))
}
