//! Discrete Riemann–Liouville fractional integrals and derivatives on a
//! uniform grid.
//!
//! Both operators use product-trapezoidal quadrature: the grid function is
//! replaced by its piecewise-linear interpolant and the moments of the
//! weakly singular kernel are integrated exactly on every cell. On a uniform
//! grid the resulting weights depend only on the lag `k = i - j`, so one
//! weight table per `(alpha, n)` serves every node; tables are cached.
//!
//! Right-sided operators are the left-sided ones conjugated by the
//! reflection `t -> 1 - t`.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use crate::error::{domain, Result};
use crate::grid::SampledFn;
use crate::quad;
use crate::special::{gamma_unchecked, pow_diff};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum WeightKind {
    Integral,
    Weyl,
}

/// Lag weights `(far, near)` for lags `0..n`.
type LagWeights = Arc<Vec<(f64, f64)>>;

type Cache<K, V> = RwLock<HashMap<K, V>>;

fn weight_cache() -> &'static Cache<(WeightKind, u64, usize), LagWeights> {
    static CACHE: OnceLock<Cache<(WeightKind, u64, usize), LagWeights>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

fn cached_weights(kind: WeightKind, alpha: f64, n: usize) -> LagWeights {
    let key = (kind, alpha.to_bits(), n);
    if let Some(w) = weight_cache()
        .read()
        .ok()
        .and_then(|m| m.get(&key).cloned())
    {
        return w;
    }
    let w = Arc::new(match kind {
        WeightKind::Integral => integral_weights(alpha, n),
        WeightKind::Weyl => weyl_weights(alpha, n),
    });
    if let Ok(mut m) = weight_cache().write() {
        m.entry(key).or_insert_with(|| w.clone());
    }
    w
}

/// On the lag-`k` cell, in units of the step, `v` runs over `[k, k+1]` and
/// the interpolant weighs the far node by `v - k` and the near node by
/// `k + 1 - v`. The weights are the exact moments of `v^{alpha-1}`.
fn integral_weights(alpha: f64, n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|k| {
            let k = k as f64;
            let m0 = pow_diff(k, alpha) / alpha;
            let m1 = pow_diff(k, alpha + 1.0) / (alpha + 1.0);
            (m1 - k * m0, (k + 1.0) * m0 - m1)
        })
        .collect()
}

/// Moments of `v^{-alpha-1}` for the Weyl difference quotient. On the lag-0
/// cell only the far-node term survives (the near node is the evaluation
/// point itself), and its moment `int_0^1 v^{-alpha} dv` is finite.
fn weyl_weights(alpha: f64, n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|k| {
            if k == 0 {
                return (1.0 / (1.0 - alpha), 0.0);
            }
            let k = k as f64;
            let n0 = -pow_diff(k, -alpha) / alpha;
            let n1 = pow_diff(k, 1.0 - alpha) / (1.0 - alpha);
            (n1 - k * n0, (k + 1.0) * n0 - n1)
        })
        .collect()
}

fn check_integral_order(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return domain(format!(
            "fractional integral order must lie in (0, 1], got {alpha}"
        ));
    }
    Ok(())
}

fn check_derivative_order(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!(
            "fractional derivative order must lie in (0, 1), got {alpha}"
        ));
    }
    Ok(())
}

/// `I^alpha_{0+}` on node values with spacing `dt`. Caller checks `alpha`.
pub(crate) fn integral_left_slice(f: &[f64], dt: f64, alpha: f64) -> Vec<f64> {
    let n = f.len() - 1;
    let w = cached_weights(WeightKind::Integral, alpha, n);
    let scale = dt.powf(alpha) / gamma_unchecked(alpha);
    let mut out = vec![0.0; n + 1];
    for i in 1..=n {
        let mut acc = 0.0;
        for (k, &(far, near)) in w[..i].iter().enumerate() {
            acc += far * f[i - k - 1] + near * f[i - k];
        }
        out[i] = scale * acc;
    }
    out
}

pub(crate) fn integral_right_slice(f: &[f64], dt: f64, alpha: f64) -> Vec<f64> {
    reflected(f, |g| integral_left_slice(g, dt, alpha))
}

type CellWeights = Arc<Vec<(f64, f64)>>;

fn weighted_cache() -> &'static Cache<(u64, u64, usize), CellWeights> {
    static CACHE: OnceLock<Cache<(u64, u64, usize), CellWeights>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Cell weights for `I^alpha (s^p g)` with `g` piecewise linear, in units of
/// the step: row `i` (packed, `i` cells) holds
/// `int_j^{j+1} (i - v)^{alpha-1} v^p (j+1-v, v-j) dv` for `j < i`.
fn weighted_weights(alpha: f64, p: f64, n: usize) -> CellWeights {
    let key = (alpha.to_bits(), p.to_bits(), n);
    if let Some(w) = weighted_cache()
        .read()
        .ok()
        .and_then(|m| m.get(&key).cloned())
    {
        return w;
    }
    let rows = crate::par::map_indices(n, |r| {
        let i = (r + 1) as f64;
        (0..=r)
            .map(|j| {
                let (a, b) = (j as f64, j as f64 + 1.0);
                // `lo = v - j`, `hi = j + 1 - v`; the lag `i - v` is formed
                // from `hi` so it stays accurate next to `v = i`.
                let lag = i - b;
                let ea = (j == 0 && p.fract() != 0.0).then_some(p);
                let eb = (j == r && alpha < 1.0).then_some(alpha - 1.0);
                let kern = |lo: f64, hi: f64| {
                    let near = if eb.is_some() {
                        1.0
                    } else {
                        (lag + hi).powf(alpha - 1.0)
                    };
                    let far = if ea.is_some() { 1.0 } else { (a + lo).powf(p) };
                    near * far
                };
                let m0 = quad::integrate_power_singular(kern, a, b, ea, eb, 1e-15, 1e-13);
                let m1 = quad::integrate_power_singular(
                    |lo, hi| kern(lo, hi) * lo,
                    a,
                    b,
                    ea,
                    eb,
                    1e-15,
                    1e-13,
                );
                (m0 - m1, m1)
            })
            .collect::<Vec<_>>()
    });
    let w: CellWeights = Arc::new(rows.into_iter().flatten().collect());
    if let Ok(mut m) = weighted_cache().write() {
        m.entry(key).or_insert_with(|| w.clone());
    }
    w
}

/// `I^alpha_{0+}(s^p g)` with the power weight integrated exactly against
/// the piecewise-linear interpolant of `g`. Needs `p > -1`. The value at
/// `t = 0` is the exact limit when `p + alpha >= 0` and is extrapolated
/// otherwise.
pub(crate) fn weighted_integral_left_slice(g: &[f64], dt: f64, alpha: f64, p: f64) -> Vec<f64> {
    let n = g.len() - 1;
    let w = weighted_weights(alpha, p, n);
    let scale = dt.powf(alpha + p) / gamma_unchecked(alpha);
    let mut out = vec![0.0; n + 1];
    let mut offset = 0;
    for i in 1..=n {
        let row = &w[offset..offset + i];
        let acc: f64 = row
            .iter()
            .enumerate()
            .map(|(j, &(left, right))| left * g[j] + right * g[j + 1])
            .sum();
        out[i] = scale * acc;
        offset += i;
    }
    // Near 0 the result behaves like g(0) Gamma(1+p)/Gamma(1+p+alpha) t^{p+alpha}.
    let order = p + alpha;
    if order.abs() < 1e-14 {
        out[0] = g[0] * gamma_unchecked(1.0 + p) / gamma_unchecked(1.0 + order);
    } else if order < 0.0 && n >= 2 {
        out[0] = 2.0 * out[1] - out[2];
    }
    out
}

/// Where [`cell_integral_left_slice`] evaluates its result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum Target {
    /// All `n + 1` nodes.
    Nodes,
    /// The `n` cell midpoints.
    Midpoints,
}

type PiecewiseWeights = Arc<Vec<f64>>;

fn piecewise_cache() -> &'static Cache<(u64, u64, usize, Target), PiecewiseWeights> {
    static CACHE: OnceLock<Cache<(u64, u64, usize, Target), PiecewiseWeights>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Row `r` (packed, `r + 1` entries) holds `int (tau - v)^{alpha-1} v^p dv`
/// over `[j, min(j + 1, tau)]` for `j <= r`, where `tau = r + 1` for nodes
/// and `tau = r + 1/2` for midpoints.
fn piecewise_weights(alpha: f64, p: f64, n: usize, target: Target) -> PiecewiseWeights {
    let key = (alpha.to_bits(), p.to_bits(), n, target);
    if let Some(w) = piecewise_cache()
        .read()
        .ok()
        .and_then(|m| m.get(&key).cloned())
    {
        return w;
    }
    let rows = crate::par::map_indices(n, |r| {
        let tau = match target {
            Target::Nodes => (r + 1) as f64,
            Target::Midpoints => r as f64 + 0.5,
        };
        (0..=r)
            .map(|j| {
                let a = j as f64;
                let b = (a + 1.0).min(tau);
                let lag = tau - b;
                let ea = (j == 0 && p.fract() != 0.0).then_some(p);
                let eb = (j == r && alpha < 1.0).then_some(alpha - 1.0);
                let kern = |lo: f64, hi: f64| {
                    let near = if eb.is_some() {
                        1.0
                    } else {
                        (lag + hi).powf(alpha - 1.0)
                    };
                    let far = if ea.is_some() { 1.0 } else { (a + lo).powf(p) };
                    near * far
                };
                quad::integrate_power_singular(kern, a, b, ea, eb, 1e-15, 1e-13)
            })
            .collect::<Vec<_>>()
    });
    let w: PiecewiseWeights = Arc::new(rows.into_iter().flatten().collect());
    if let Ok(mut m) = piecewise_cache().write() {
        m.entry(key).or_insert_with(|| w.clone());
    }
    w
}

/// `I^alpha_{0+}(s^p g)` for `g` constant on each cell (`cells[j]` on
/// `[t_j, t_{j+1}]`), integrated exactly. Needs `p > -1`. With
/// [`Target::Nodes`] the value at `t = 0` is the limit when `p + alpha >= 0`
/// and 0 otherwise.
pub(crate) fn cell_integral_left_slice(
    cells: &[f64],
    dt: f64,
    alpha: f64,
    p: f64,
    target: Target,
) -> Vec<f64> {
    let n = cells.len();
    let w = piecewise_weights(alpha, p, n, target);
    let scale = dt.powf(alpha + p) / gamma_unchecked(alpha);
    let mut values = Vec::with_capacity(n + 1);
    if target == Target::Nodes {
        let order = p + alpha;
        values.push(if order.abs() < 1e-14 {
            cells.first().copied().unwrap_or(0.0) * gamma_unchecked(1.0 + p)
                / gamma_unchecked(1.0 + order)
        } else {
            0.0
        });
    }
    let mut offset = 0;
    for r in 0..n {
        let row = &w[offset..offset + r + 1];
        let acc: f64 = row.iter().zip(cells).map(|(w, g)| w * g).sum();
        values.push(scale * acc);
        offset += r + 1;
    }
    values
}

/// `D^alpha_{0+}` in Weyl form. The node `t_0` is filled by linear
/// extrapolation from `t_1`, `t_2`.
pub(crate) fn derivative_left_slice(f: &[f64], dt: f64, alpha: f64) -> Vec<f64> {
    let n = f.len() - 1;
    let w = cached_weights(WeightKind::Weyl, alpha, n);
    let scale_diff = alpha * dt.powf(-alpha);
    let inv_gamma = 1.0 / gamma_unchecked(1.0 - alpha);
    let mut out = vec![0.0; n + 1];
    for i in 1..=n {
        let fi = f[i];
        let mut acc = 0.0;
        for (k, &(far, near)) in w[..i].iter().enumerate() {
            acc += (fi - f[i - k - 1]) * far + (fi - f[i - k]) * near;
        }
        let t = i as f64 * dt;
        out[i] = inv_gamma * (fi * t.powf(-alpha) + scale_diff * acc);
    }
    out[0] = 2.0 * out[1] - out[2];
    out
}

pub(crate) fn derivative_right_slice(f: &[f64], dt: f64, alpha: f64) -> Vec<f64> {
    reflected(f, |g| derivative_left_slice(g, dt, alpha))
}

/// `t^p f(t)`; for `p < 0` the value at `t_0 = 0` is extrapolated linearly.
/// `t_i`, computed as `i / n` so that grid nodes are reproduced exactly.
fn node(i: usize, len: usize, dt: f64) -> f64 {
    if len > 1 {
        i as f64 / (len - 1) as f64
    } else {
        i as f64 * dt
    }
}

pub(crate) fn power_weight_slice(f: &[f64], dt: f64, p: f64) -> Vec<f64> {
    if p == 0.0 {
        return f.to_vec();
    }
    let mut out: Vec<f64> = f
        .iter()
        .enumerate()
        .map(|(i, v)| {
            if i == 0 {
                0.0
            } else {
                node(i, f.len(), dt).powf(p) * v
            }
        })
        .collect();
    if p < 0.0 {
        out[0] = 2.0 * out[1] - out[2];
    }
    out
}

/// Second-order finite differences: central inside, one-sided at the ends.
pub(crate) fn finite_difference_slice(f: &[f64], dt: f64) -> Vec<f64> {
    let n = f.len() - 1;
    let h2 = 2.0 * dt;
    let mut out = vec![0.0; n + 1];
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / h2;
    out[n] = (3.0 * f[n] - 4.0 * f[n - 1] + f[n - 2]) / h2;
    for i in 1..n {
        out[i] = (f[i + 1] - f[i - 1]) / h2;
    }
    out
}

fn reflected(f: &[f64], op: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let rev: Vec<f64> = f.iter().rev().copied().collect();
    let mut out = op(&rev);
    out.reverse();
    out
}

/// Left Riemann–Liouville fractional integral `I^alpha_{0+} f`, `alpha` in `(0, 1]`.
pub fn frac_integral_left(f: &SampledFn, alpha: f64) -> Result<SampledFn> {
    check_integral_order(alpha)?;
    let dt = f.grid().dt();
    f.map_components(|c| integral_left_slice(c, dt, alpha))
}

/// Right Riemann–Liouville fractional integral `I^alpha_{1-} f`.
pub fn frac_integral_right(f: &SampledFn, alpha: f64) -> Result<SampledFn> {
    check_integral_order(alpha)?;
    let dt = f.grid().dt();
    f.map_components(|c| integral_right_slice(c, dt, alpha))
}

/// `I^alpha_{0+}(t^p f)` for `p > -1`, with the power weight integrated
/// exactly. More accurate than weighting first and integrating when `t^p`
/// is singular or non-smooth at 0.
pub fn frac_integral_left_weighted(f: &SampledFn, alpha: f64, p: f64) -> Result<SampledFn> {
    check_integral_order(alpha)?;
    if !(p > -1.0) {
        return domain(format!("power weight exponent must exceed -1, got {p}"));
    }
    let dt = f.grid().dt();
    f.map_components(|c| weighted_integral_left_slice(c, dt, alpha, p))
}

/// Left fractional derivative `D^alpha_{0+} f`, `alpha` in `(0, 1)`.
pub fn frac_derivative_left(f: &SampledFn, alpha: f64) -> Result<SampledFn> {
    check_derivative_order(alpha)?;
    let dt = f.grid().dt();
    f.map_components(|c| derivative_left_slice(c, dt, alpha))
}

/// Right fractional derivative `D^alpha_{1-} f`.
pub fn frac_derivative_right(f: &SampledFn, alpha: f64) -> Result<SampledFn> {
    check_derivative_order(alpha)?;
    let dt = f.grid().dt();
    f.map_components(|c| derivative_right_slice(c, dt, alpha))
}

/// Multiplies by the power weight `t^p`.
pub fn multiply_power_weight(f: &SampledFn, p: f64) -> Result<SampledFn> {
    if !p.is_finite() {
        return domain(format!("power weight exponent must be finite, got {p}"));
    }
    let dt = f.grid().dt();
    f.map_components(|c| power_weight_slice(c, dt, p))
}

/// Nodal derivative, exact on quadratics.
pub fn finite_difference(f: &SampledFn) -> Result<SampledFn> {
    let dt = f.grid().dt();
    f.map_components(|c| finite_difference_slice(c, dt))
}
