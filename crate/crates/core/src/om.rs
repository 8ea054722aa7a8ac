//! Onsager–Machlup action of a path under a frozen law, and the Monte Carlo
//! tube-probability ratio it approximates.

use std::fmt;

use crate::error::{domain, Error, Result};
use crate::grid::{trapz, Path, SampledFn};
use crate::kernel::{
    apply_kh_inverse, kh_inverse_cells, kh_inverse_chain_slice, FbmMethod, FbmSampler, Norm,
};
use crate::mkv::{simulate_ensemble, simulate_frozen_law, DriftSpec, LawPath};
use crate::par;
use crate::rng;
use crate::special::{HurstModel, Regime};

/// Value of the action with its two parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmReport {
    pub j: f64,
    /// `-1/2 int |phi_dot - transformed drift|^2`, never positive.
    pub action_term: f64,
    /// `-1/2 int d_H div b`.
    pub divergence_term: f64,
    pub regime: Regime,
    pub n: usize,
    pub hurst: f64,
}

impl OmReport {
    pub fn record(&self) -> Vec<(&'static str, String)> {
        vec![
            ("J", fmt_f64(self.j)),
            ("action_term", fmt_f64(self.action_term)),
            ("divergence_term", fmt_f64(self.divergence_term)),
            ("regime", self.regime.to_string()),
            ("n", self.n.to_string()),
            ("H", fmt_f64(self.hurst)),
        ]
    }
}

impl fmt::Display for OmReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.record() {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `phi_dot = (K^H)^{-1}(phi - phi(0))`.
pub fn phi_dot(phi: &Path, model: &HurstModel) -> Result<SampledFn> {
    apply_kh_inverse(phi, model)
}

fn check_inputs(phi: &Path, drift: &DriftSpec, law: &LawPath) -> Result<()> {
    if drift.dim() != phi.dim() {
        return Err(Error::GridMismatch(format!(
            "drift has dimension {}, path has {}",
            drift.dim(),
            phi.dim()
        )));
    }
    law.check_compatible(phi.grid(), phi.dim())
}

fn sampled_drift(phi: &Path, drift: &DriftSpec, law: &LawPath) -> Vec<f64> {
    let dim = phi.dim();
    let mut g = vec![0.0; phi.values().len()];
    for (i, out) in g.chunks_exact_mut(dim).enumerate() {
        drift.eval_into(phi.row(i), law.view(i), out);
    }
    g
}

/// `(K^H)^{-1} int_0^. b(phi_s, law_s) ds`: the sampled drift pushed through
/// the regime's weighted chain (`s^{-a} I^a s^a` below 1/2, `s^a D^a s^{-a}`
/// above, identity at 1/2), scaled by `1/d_H`.
pub fn drift_transform(
    phi: &Path,
    drift: &DriftSpec,
    law: &LawPath,
    model: &HurstModel,
) -> Result<SampledFn> {
    check_inputs(phi, drift, law)?;
    let g = SampledFn::new(phi.grid(), phi.dim(), sampled_drift(phi, drift, law))?;
    let dt = phi.grid().dt();
    g.map_components(|c| kh_inverse_chain_slice(c, dt, model))
}

/// Onsager–Machlup action
/// `J = -1/2 int |phi_dot - T b|^2 ds - 1/2 int d_H div b(phi_s, law_s) ds`.
///
/// The quadratic term is discretized on cells. `phi` is taken piecewise
/// linear and `int_0^. b` piecewise linear with cell slopes equal to the
/// average of `b` at the two ends, so the residual `phi - x - int_0^. b` has
/// constant slope on every cell. The regime chain is applied to those slopes
/// exactly and the square is integrated by the midpoint rule. Node-based
/// derivatives would leave the alternating mode `(-1)^i` unpenalized, which a
/// minimizer is free to exploit. The divergence term uses the trapezoid rule.
pub fn om_action(
    phi: &Path,
    drift: &DriftSpec,
    law: &LawPath,
    model: &HurstModel,
) -> Result<OmReport> {
    check_inputs(phi, drift, law)?;
    let grid = phi.grid();
    let dt = grid.dt();
    let dim = phi.dim();
    let b = sampled_drift(phi, drift, law);
    let v = phi.values();
    let n = grid.steps();
    let mut sq = 0.0;
    for c in 0..dim {
        let slopes: Vec<f64> = (0..n)
            .map(|j| {
                let (l, r) = (j * dim + c, (j + 1) * dim + c);
                (v[r] - v[l]) / dt - 0.5 * (b[l] + b[r])
            })
            .collect();
        sq += kh_inverse_cells(&slopes, dt, model)
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            * dt;
    }
    let divs: Vec<f64> = (0..=n)
        .map(|i| drift.divergence(phi.row(i), law.view(i)))
        .collect();
    let div = trapz(&divs, dt);
    if !sq.is_finite() || !div.is_finite() {
        return Err(Error::NonFinite(format!(
            "action integrand for a {dim}-dimensional path"
        )));
    }
    // `+ 0.0` turns a negative zero into zero.
    let action_term = -0.5 * sq + 0.0;
    let divergence_term = -0.5 * model.d_h * div + 0.0;
    Ok(OmReport {
        j: action_term + divergence_term,
        action_term,
        divergence_term,
        regime: model.regime,
        n,
        hurst: model.hurst,
    })
}

/// Monte Carlo set-up for the tube-probability ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioQuery {
    pub eps: f64,
    pub norm: Norm,
    /// Replicas in each of numerator and denominator.
    pub samples: usize,
    pub seed: u64,
    /// Particles in the ensemble that fixes the law.
    pub law_particles: usize,
}

impl RatioQuery {
    pub fn new(eps: f64, norm: Norm, samples: usize, seed: u64) -> Self {
        Self {
            eps,
            norm,
            samples,
            seed,
            law_particles: 2000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return domain(format!("eps must be positive, got {}", self.eps));
        }
        if self.samples == 0 {
            return domain("the ratio needs at least one sample");
        }
        self.norm.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioEstimate {
    pub gamma: f64,
    pub std_error: f64,
    pub numerator_hits: usize,
    pub denominator_hits: usize,
    pub samples: usize,
    /// Fewer than 50 hits on either side.
    pub low_hits: bool,
}

impl RatioEstimate {
    fn from_hits(num: usize, den: usize, samples: usize) -> Result<Self> {
        if den == 0 {
            return Err(Error::NoHits(
                "the reference fBm never stayed inside the tube; increase eps or the sample count"
                    .into(),
            ));
        }
        let m = samples as f64;
        let (p1, p0) = (num as f64 / m, den as f64 / m);
        let v1 = p1 * (1.0 - p1) / m;
        let v0 = p0 * (1.0 - p0) / m;
        let gamma = p1 / p0;
        // Delta method for a ratio of independent means.
        let std_error = (v1 / (p0 * p0) + gamma * gamma * v0 / (p0 * p0)).sqrt();
        Ok(Self {
            gamma,
            std_error,
            numerator_hits: num,
            denominator_hits: den,
            samples,
            low_hits: num < 50 || den < 50,
        })
    }
}

/// Estimates `P(||X - phi|| <= eps) / P(||B^H|| <= eps)`.
///
/// The law of `X` comes from a prior particle run of `law_particles`
/// particles; numerator paths are then simulated with that law frozen.
/// Numerator and denominator use independent streams.
pub fn estimate_ratio(
    phi: &Path,
    drift: &DriftSpec,
    model: &HurstModel,
    q: &RatioQuery,
) -> Result<RatioEstimate> {
    q.validate()?;
    if q.law_particles == 0 {
        return domain("the law needs at least one particle");
    }
    let grid = phi.grid();
    let x0 = phi.initial();
    let ensemble = simulate_ensemble(
        drift,
        x0,
        model,
        grid,
        q.law_particles,
        rng::derive_seed(q.seed, rng::domain::LAW),
    )?;
    let law = crate::mkv::law_path(&ensemble, drift.law_mode());
    estimate_ratio_with_law(phi, drift, &law, model, q)
}

/// [`estimate_ratio`] with a law supplied by the caller.
pub fn estimate_ratio_with_law(
    phi: &Path,
    drift: &DriftSpec,
    law: &LawPath,
    model: &HurstModel,
    q: &RatioQuery,
) -> Result<RatioEstimate> {
    q.validate()?;
    check_inputs(phi, drift, law)?;
    let grid = phi.grid();
    let dim = phi.dim();
    let sampler = FbmSampler::new(grid, *model, FbmMethod::Volterra)?;
    let num_seed = rng::derive_seed(q.seed, rng::domain::RATIO_NUMERATOR);
    let den_seed = rng::derive_seed(q.seed, rng::domain::RATIO_DENOMINATOR);

    let num_hits = par::try_map_indices(q.samples, |k| {
        let noise = sampler.sample_path(dim, num_seed, k as u64);
        let x = simulate_frozen_law(drift, phi.initial(), law, &noise)?;
        Ok::<_, Error>(q.norm.eval(&x.difference(phi)?) <= q.eps)
    })?
    .into_iter()
    .filter(|&h| h)
    .count();
    let den_hits = par::map_indices(q.samples, |k| {
        q.norm.eval(&sampler.sample_path(dim, den_seed, k as u64)) <= q.eps
    })
    .into_iter()
    .filter(|&h| h)
    .count();
    RatioEstimate::from_hits(num_hits, den_hits, q.samples)
}
