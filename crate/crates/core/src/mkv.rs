//! Mean-field particle simulation of distribution-dependent SDEs with
//! additive fBm noise, empirical laws and the 1-D Wasserstein-2 distance.

use std::fmt;
use std::sync::Arc;

use crate::error::{domain, Error, Result};
use crate::grid::{restriction_factor, Path, SampledFn, TimeGrid};
use crate::kernel::{FbmMethod, FbmSampler};
use crate::par;
use crate::rng;
use crate::special::HurstModel;

/// How a drift reads the law of the current state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawMode {
    FullEmpirical,
    MeanOnly,
}

/// Equal-weight empirical measure on `R^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalLaw {
    dim: usize,
    atoms: Vec<f64>,
    mean: Vec<f64>,
}

impl EmpiricalLaw {
    /// Atoms given row-major, `dim` values per atom.
    pub fn new(dim: usize, atoms: Vec<f64>) -> Result<Self> {
        if dim == 0 || atoms.is_empty() || !atoms.len().is_multiple_of(dim) {
            return domain("an empirical law needs at least one atom of positive dimension");
        }
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("empirical law atom".into()));
        }
        let mean = atom_mean(dim, &atoms);
        Ok(Self { dim, atoms, mean })
    }

    pub fn dirac(x: &[f64]) -> Result<Self> {
        Self::new(x.len(), x.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.atoms.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atom(&self, k: usize) -> &[f64] {
        &self.atoms[k * self.dim..(k + 1) * self.dim]
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn view(&self) -> LawView<'_> {
        LawView {
            mean: &self.mean,
            empirical: Some(self),
        }
    }
}

/// Offsets are summed relative to the first atom, so identical atoms give
/// their common value exactly.
fn atom_mean(dim: usize, atoms: &[f64]) -> Vec<f64> {
    let n = (atoms.len() / dim) as f64;
    let first = &atoms[..dim];
    let mut m = vec![0.0; dim];
    for row in atoms.chunks_exact(dim) {
        for ((a, x), x0) in m.iter_mut().zip(row).zip(first) {
            *a += x - x0;
        }
    }
    m.iter_mut().zip(first).for_each(|(a, x0)| *a = x0 + *a / n);
    m
}

/// Arithmetic mean of the atoms.
pub fn empirical_mean(law: &EmpiricalLaw) -> Vec<f64> {
    law.mean.clone()
}

/// What a drift sees of the law at one time: always the mean, and the full
/// atom list when it was recorded.
#[derive(Debug, Clone, Copy)]
pub struct LawView<'a> {
    mean: &'a [f64],
    empirical: Option<&'a EmpiricalLaw>,
}

impl<'a> LawView<'a> {
    pub fn mean_only(mean: &'a [f64]) -> Self {
        Self {
            mean,
            empirical: None,
        }
    }

    pub fn mean(&self) -> &'a [f64] {
        self.mean
    }

    pub fn empirical(&self) -> Option<&'a EmpiricalLaw> {
        self.empirical
    }
}

/// Exact `W_2` between two equal-size empirical laws on the line (sorted
/// coupling).
pub fn wasserstein2_1d(mu: &EmpiricalLaw, nu: &EmpiricalLaw) -> Result<f64> {
    if mu.dim != 1 || nu.dim != 1 {
        return Err(Error::Unsupported(
            "Wasserstein-2 is only implemented for one-dimensional laws".into(),
        ));
    }
    if mu.len() != nu.len() {
        return Err(Error::Unsupported(format!(
            "Wasserstein-2 needs equal atom counts, got {} and {}",
            mu.len(),
            nu.len()
        )));
    }
    let mut a = mu.atoms.clone();
    let mut b = nu.atoms.clone();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let ss: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((ss / a.len() as f64).sqrt())
}

type DriftFn = dyn Fn(&[f64], LawView<'_>, &mut [f64]) + Send + Sync;

/// Drift `b(x, law)` of the equation, with an optional analytic Jacobian
/// (row-major `dim x dim`, `J[r][c] = d b_r / d x_c`).
///
/// Drifts are expected to be bounded and Lipschitz in both arguments; this
/// is not checked.
#[derive(Clone)]
pub struct DriftSpec {
    name: String,
    dim: usize,
    law_mode: LawMode,
    b: Arc<DriftFn>,
    jacobian: Option<Arc<DriftFn>>,
}

impl fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("law_mode", &self.law_mode)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

/// Gamma(1/4)^4 / (4 pi).
pub fn pendulum_constant() -> f64 {
    crate::special::gamma_unchecked(0.25).powi(4) / (4.0 * std::f64::consts::PI)
}

impl DriftSpec {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        law_mode: LawMode,
        b: impl Fn(&[f64], LawView<'_>, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            law_mode,
            b: Arc::new(b),
            jacobian: None,
        }
    }

    pub fn with_jacobian(
        mut self,
        jac: impl Fn(&[f64], LawView<'_>, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn law_mode(&self) -> LawMode {
        self.law_mode
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn eval_into(&self, x: &[f64], law: LawView<'_>, out: &mut [f64]) {
        (self.b)(x, law, out)
    }

    pub fn eval(&self, x: &[f64], law: LawView<'_>) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, law, &mut out);
        out
    }

    /// Spatial Jacobian; central differences with step `1e-6 (1 + |x_c|)`
    /// when no analytic form was supplied.
    pub fn jacobian(&self, x: &[f64], law: LawView<'_>) -> Vec<f64> {
        let d = self.dim;
        let mut jac = vec![0.0; d * d];
        if let Some(j) = &self.jacobian {
            j(x, law, &mut jac);
            return jac;
        }
        let mut xp = x.to_vec();
        let mut hi = vec![0.0; d];
        let mut lo = vec![0.0; d];
        for c in 0..d {
            let h = 1e-6 * (1.0 + x[c].abs());
            xp[c] = x[c] + h;
            self.eval_into(&xp, law, &mut hi);
            xp[c] = x[c] - h;
            self.eval_into(&xp, law, &mut lo);
            xp[c] = x[c];
            for r in 0..d {
                jac[r * d + c] = (hi[r] - lo[r]) / (2.0 * h);
            }
        }
        jac
    }

    /// Trace of the Jacobian.
    pub fn divergence(&self, x: &[f64], law: LawView<'_>) -> f64 {
        let jac = self.jacobian(x, law);
        (0..self.dim).map(|r| jac[r * self.dim + r]).sum()
    }

    /// `b = 0`.
    pub fn zero(dim: usize) -> Self {
        Self::new("zero", dim, LawMode::MeanOnly, |_, _, out| out.fill(0.0))
            .with_jacobian(|_, _, jac| jac.fill(0.0))
    }

    /// `b(x, mu) = -x`, ignoring the law.
    pub fn linear_decay(dim: usize) -> Self {
        Self::new("linear-decay", dim, LawMode::MeanOnly, |x, _, out| {
            for (o, v) in out.iter_mut().zip(x) {
                *o = -v;
            }
        })
        .with_jacobian(move |_, _, jac| {
            jac.fill(0.0);
            for r in 0..dim {
                jac[r * dim + r] = -1.0;
            }
        })
    }

    /// Scalar `b(x, mu) = sin(E mu)`.
    pub fn example1_sine() -> Self {
        Self::new("example1-sine", 1, LawMode::MeanOnly, |_, law, out| {
            out[0] = law.mean()[0].sin();
        })
        .with_jacobian(|_, _, jac| jac[0] = 0.0)
    }

    /// Planar `b((x, y), mu) = (y, -K sin(E mu_x))` with
    /// `K = Gamma(1/4)^4 / (4 pi)`.
    pub fn example2_pendulum() -> Self {
        let k = pendulum_constant();
        Self::new(
            "example2-pendulum",
            2,
            LawMode::MeanOnly,
            move |x, law, out| {
                out[0] = x[1];
                out[1] = -k * law.mean()[0].sin();
            },
        )
        .with_jacobian(|_, _, jac| jac.copy_from_slice(&[0.0, 1.0, 0.0, 0.0]))
    }

    /// Built-in drift by its command-line name.
    pub fn by_name(name: &str, dim: usize) -> Result<Self> {
        match name {
            "zero" => Ok(Self::zero(dim)),
            "linear-decay" => Ok(Self::linear_decay(dim)),
            "example1-sine" => Ok(Self::example1_sine()),
            "example2-pendulum" => Ok(Self::example2_pendulum()),
            _ => Err(Error::Usage(format!(
                "unknown drift '{name}' (expected zero, linear-decay, example1-sine or \
                 example2-pendulum)"
            ))),
        }
    }
}

/// Simulated particle paths on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    grid: TimeGrid,
    dim: usize,
    paths: Vec<Path>,
}

impl Ensemble {
    pub fn new(paths: Vec<Path>) -> Result<Self> {
        let first = paths
            .first()
            .ok_or_else(|| Error::Domain("an ensemble needs at least one path".into()))?;
        let (grid, dim) = (first.grid(), first.dim());
        for p in &paths {
            grid.check_same(&p.grid())?;
            if p.dim() != dim {
                return Err(Error::GridMismatch(
                    "ensemble paths differ in dimension".into(),
                ));
            }
        }
        Ok(Self { grid, dim, paths })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn law_at(&self, i: usize) -> EmpiricalLaw {
        let atoms = self.paths.iter().flat_map(|p| p.row(i).to_vec()).collect();
        EmpiricalLaw::new(self.dim, atoms).expect("ensemble paths are finite")
    }

    fn node_means(&self) -> Vec<f64> {
        (0..self.grid.len())
            .flat_map(|i| atom_mean(self.dim, &self.law_at(i).atoms))
            .collect()
    }

    /// Nodewise ensemble mean.
    pub fn mean_path(&self) -> Path {
        Path::from_raw(self.grid, self.dim, self.node_means())
    }

    /// Nodewise standard error of the ensemble mean.
    pub fn mean_std_error(&self) -> SampledFn {
        let means = self.node_means();
        let n = self.paths.len() as f64;
        let values = means
            .iter()
            .enumerate()
            .map(|(k, m)| {
                if self.paths.len() < 2 {
                    return 0.0;
                }
                let ss: f64 = self.paths.iter().map(|p| (p.values()[k] - m).powi(2)).sum();
                (ss / (n - 1.0) / n).sqrt()
            })
            .collect();
        SampledFn::new(self.grid, self.dim, values).expect("finite standard errors")
    }
}

/// Options for [`simulate_ensemble_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    pub particles: usize,
    pub seed: u64,
    /// Pair particle `2m + 1` with the negated noise of particle `2m`. The
    /// noise then averages to exactly zero across the ensemble.
    pub antithetic: bool,
    pub method: FbmMethod,
}

impl EnsembleConfig {
    pub fn new(particles: usize, seed: u64) -> Self {
        Self {
            particles,
            seed,
            antithetic: false,
            method: FbmMethod::Volterra,
        }
    }
}

/// Explicit Euler for the `N`-particle system, law frozen at the left end of
/// each step. Particle `k` draws its noise from stream `(seed, k)`.
pub fn simulate_ensemble(
    drift: &DriftSpec,
    x0: &[f64],
    model: &HurstModel,
    grid: TimeGrid,
    particles: usize,
    seed: u64,
) -> Result<Ensemble> {
    simulate_ensemble_with(
        drift,
        x0,
        model,
        grid,
        &EnsembleConfig::new(particles, seed),
    )
}

pub fn simulate_ensemble_with(
    drift: &DriftSpec,
    x0: &[f64],
    model: &HurstModel,
    grid: TimeGrid,
    cfg: &EnsembleConfig,
) -> Result<Ensemble> {
    let n_part = cfg.particles;
    if n_part < 2 {
        return domain(format!("need at least 2 particles, got {n_part}"));
    }
    if cfg.antithetic && !n_part.is_multiple_of(2) {
        return domain("antithetic sampling needs an even particle count");
    }
    let dim = drift.dim();
    if x0.len() != dim {
        return domain(format!(
            "initial state has dimension {}, drift expects {dim}",
            x0.len()
        ));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state".into()));
    }
    let sampler = FbmSampler::new(grid, *model, cfg.method)?;
    let stream_seed = rng::derive_seed(cfg.seed, rng::domain::FBM);
    let noise: Vec<Path> = if cfg.antithetic {
        let base = sampler.sample_paths(dim, n_part / 2, stream_seed);
        base.into_iter()
            .flat_map(|p| {
                let neg =
                    Path::from_raw(p.grid(), p.dim(), p.values().iter().map(|v| -v).collect());
                [p, neg]
            })
            .collect()
    } else {
        sampler.sample_paths(dim, n_part, stream_seed)
    };

    let len = grid.len();
    let dt = grid.dt();
    let mut states: Vec<Vec<f64>> = (0..n_part)
        .map(|_| {
            let mut v = vec![0.0; len * dim];
            v[..dim].copy_from_slice(x0);
            v
        })
        .collect();
    for i in 0..grid.steps() {
        let atoms: Vec<f64> = states
            .iter()
            .flat_map(|s| s[i * dim..(i + 1) * dim].to_vec())
            .collect();
        let law = EmpiricalLaw::new(dim, atoms).map_err(|_| Error::Diverged {
            step: i,
            time: grid.node(i),
        })?;
        let view = match drift.law_mode() {
            LawMode::FullEmpirical => law.view(),
            LawMode::MeanOnly => LawView::mean_only(law.mean()),
        };
        par::for_each_mut(&mut states, |k, s| {
            let (past, future) = s.split_at_mut((i + 1) * dim);
            let x = &past[i * dim..];
            let next = &mut future[..dim];
            drift.eval_into(x, view, next);
            let w = noise[k].values();
            for c in 0..dim {
                next[c] = x[c] + next[c] * dt + (w[(i + 1) * dim + c] - w[i * dim + c]);
            }
        });
        if states.iter().any(|s| {
            s[(i + 1) * dim..(i + 2) * dim]
                .iter()
                .any(|v| !v.is_finite())
        }) {
            return Err(Error::Diverged {
                step: i + 1,
                time: grid.node(i + 1),
            });
        }
    }
    let paths = states
        .into_iter()
        .map(|v| Path::from_raw(grid, dim, v))
        .collect();
    Ensemble::new(paths)
}

/// One Euler path of the equation with the law held fixed, driven by the
/// given noise path (which must start at 0).
pub fn simulate_frozen_law(
    drift: &DriftSpec,
    x0: &[f64],
    law: &LawPath,
    noise: &Path,
) -> Result<Path> {
    let grid = noise.grid();
    let dim = drift.dim();
    law.check_compatible(grid, dim)?;
    if x0.len() != dim || noise.dim() != dim {
        return Err(Error::GridMismatch(
            "state, noise and drift dimensions differ".into(),
        ));
    }
    let dt = grid.dt();
    let w = noise.values();
    let mut v = vec![0.0; grid.len() * dim];
    v[..dim].copy_from_slice(x0);
    for i in 0..grid.steps() {
        let (past, future) = v.split_at_mut((i + 1) * dim);
        let x = &past[i * dim..];
        let next = &mut future[..dim];
        drift.eval_into(x, law.view(i), next);
        for c in 0..dim {
            next[c] = x[c] + next[c] * dt + (w[(i + 1) * dim + c] - w[i * dim + c]);
        }
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::Diverged {
                step: i + 1,
                time: grid.node(i + 1),
            });
        }
    }
    Ok(Path::from_raw(grid, dim, v))
}

/// The time-indexed law of an ensemble, frozen for action evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LawPath {
    grid: TimeGrid,
    dim: usize,
    means: Vec<f64>,
    laws: Option<Vec<EmpiricalLaw>>,
}

impl LawPath {
    /// Mean-only law path from nodewise means.
    pub fn from_means(grid: TimeGrid, dim: usize, means: Vec<f64>) -> Result<Self> {
        let f = SampledFn::new(grid, dim, means)?;
        Ok(Self {
            grid,
            dim,
            means: f.into_values(),
            laws: None,
        })
    }

    /// Mean-only law path with the same mean at every node.
    pub fn constant_mean(grid: TimeGrid, mean: &[f64]) -> Result<Self> {
        let means = (0..grid.len()).flat_map(|_| mean.to_vec()).collect();
        Self::from_means(grid, mean.len(), means)
    }

    /// One-atom laws following a deterministic path.
    pub fn dirac(path: &Path) -> Self {
        let laws = (0..path.grid().len())
            .map(|i| EmpiricalLaw::dirac(path.row(i)).expect("path values are finite"))
            .collect();
        Self {
            grid: path.grid(),
            dim: path.dim(),
            means: path.values().to_vec(),
            laws: Some(laws),
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> LawMode {
        if self.laws.is_some() {
            LawMode::FullEmpirical
        } else {
            LawMode::MeanOnly
        }
    }

    pub fn mean(&self, i: usize) -> &[f64] {
        &self.means[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mean_path(&self) -> Path {
        Path::from_raw(self.grid, self.dim, self.means.clone())
    }

    pub fn law(&self, i: usize) -> Option<&EmpiricalLaw> {
        self.laws.as_ref().map(|l| &l[i])
    }

    pub fn view(&self, i: usize) -> LawView<'_> {
        match &self.laws {
            Some(l) => l[i].view(),
            None => LawView::mean_only(self.mean(i)),
        }
    }

    /// Restriction to a coarser grid whose step count divides this one's.
    pub fn restrict(&self, coarse: TimeGrid) -> Result<Self> {
        let f = restriction_factor(self.grid, coarse)?;
        let nodes = 0..coarse.len();
        Ok(Self {
            grid: coarse,
            dim: self.dim,
            means: nodes
                .clone()
                .flat_map(|i| self.mean(i * f).to_vec())
                .collect(),
            laws: self
                .laws
                .as_ref()
                .map(|l| nodes.map(|i| l[i * f].clone()).collect()),
        })
    }

    pub(crate) fn check_compatible(&self, grid: TimeGrid, dim: usize) -> Result<()> {
        self.grid.check_same(&grid)?;
        if self.dim != dim {
            return Err(Error::GridMismatch(format!(
                "law has dimension {}, path has {dim}",
                self.dim
            )));
        }
        Ok(())
    }
}

/// Slices an ensemble into its nodewise laws.
pub fn law_path(e: &Ensemble, mode: LawMode) -> LawPath {
    let means = e.node_means();
    let laws = match mode {
        LawMode::FullEmpirical => Some((0..e.grid.len()).map(|i| e.law_at(i)).collect()),
        LawMode::MeanOnly => None,
    };
    LawPath {
        grid: e.grid,
        dim: e.dim,
        means,
        laws,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::sample_fbm_volterra;

    fn model(h: f64) -> HurstModel {
        HurstModel::new(h).unwrap()
    }

    fn law1(atoms: &[f64]) -> EmpiricalLaw {
        EmpiricalLaw::new(1, atoms.to_vec()).unwrap()
    }

    #[test]
    fn means() {
        assert_eq!(empirical_mean(&law1(&[3.5])), vec![3.5]);
        assert_eq!(empirical_mean(&law1(&[-1.0, 1.0])), vec![0.0]);
        assert_eq!(
            empirical_mean(&law1(&[std::f64::consts::PI; 2000])),
            vec![std::f64::consts::PI]
        );
        assert_eq!(empirical_mean(&law1(&[1.0, 2.0, 3.0, 4.0])), vec![2.5]);
    }

    #[test]
    fn wasserstein_examples() {
        let a = law1(&[0.0, 1.0, 2.0]);
        assert_eq!(wasserstein2_1d(&a, &law1(&[2.0, 0.0, 1.0])).unwrap(), 0.0);
        let w = wasserstein2_1d(&law1(&[0.0, 0.0, 0.0]), &law1(&[1.0, 2.0, 3.0])).unwrap();
        assert!((w - (14.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(wasserstein2_1d(&law1(&[2.0]), &law1(&[-1.5])).unwrap(), 3.5);
        assert!(matches!(
            wasserstein2_1d(&a, &law1(&[1.0])),
            Err(Error::Unsupported(_))
        ));
        let two = EmpiricalLaw::new(2, vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            wasserstein2_1d(&two, &two),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn fd_jacobian_matches_analytic() {
        let analytic = DriftSpec::example2_pendulum();
        let fd = DriftSpec::new("p", 2, LawMode::MeanOnly, {
            let k = pendulum_constant();
            move |x, law, out| {
                out[0] = x[1];
                out[1] = -k * law.mean()[0].sin();
            }
        });
        let mean = [0.3, 0.0];
        let view = LawView::mean_only(&mean);
        let x = [0.2, -1.3];
        let (a, b) = (analytic.jacobian(&x, view), fd.jacobian(&x, view));
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-8);
        }
        assert!(fd.divergence(&x, view).abs() < 1e-9);
        let quad = DriftSpec::new("q", 1, LawMode::MeanOnly, |x, _, o| o[0] = x[0] * x[0]);
        assert!((quad.jacobian(&[1.5], view)[0] - 3.0).abs() < 1e-7);
    }

    #[test]
    fn pendulum_constant_value() {
        assert!((pendulum_constant() - 13.750_371_636_040_745).abs() < 1e-10);
    }

    #[test]
    fn zero_drift_paths_are_shifted_noise() {
        let g = TimeGrid::new(32).unwrap();
        let m = model(0.7);
        let e = simulate_ensemble(&DriftSpec::zero(1), &[1.25], &m, g, 4, 3).unwrap();
        let s = rng::derive_seed(3, rng::domain::FBM);
        let sampler = FbmSampler::new(g, m, FbmMethod::Volterra).unwrap();
        for (k, p) in e.paths().iter().enumerate() {
            let w = sampler.sample_path(1, s, k as u64);
            for i in 0..g.len() {
                let expect = 1.25 + w.get(i, 0);
                assert!((p.get(i, 0) - expect).abs() <= 4.0 * f64::EPSILON * expect.abs());
            }
        }
        let _ = sample_fbm_volterra(g, &m, 1, 0).unwrap();
    }

    #[test]
    fn deterministic_and_validated() {
        let g = TimeGrid::new(16).unwrap();
        let m = model(0.3);
        let d = DriftSpec::example1_sine();
        let a = simulate_ensemble(&d, &[1.0], &m, g, 8, 5).unwrap();
        let b = simulate_ensemble(&d, &[1.0], &m, g, 8, 5).unwrap();
        assert_eq!(a, b);
        assert!(simulate_ensemble(&d, &[1.0], &m, g, 1, 5).is_err());
        assert!(simulate_ensemble(&d, &[1.0, 2.0], &m, g, 4, 5).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let g = TimeGrid::new(16).unwrap();
        let blow = DriftSpec::new("blow", 1, LawMode::MeanOnly, |x, _, o| {
            o[0] = 1.0 / (x[0] - 1.0)
        });
        let err = simulate_ensemble(&blow, &[1.0], &model(0.5), g, 2, 1).unwrap_err();
        assert!(matches!(err, Error::Diverged { step: 1, .. }), "{err:?}");
    }

    #[test]
    fn antithetic_mean_is_exact_for_sine() {
        let g = TimeGrid::new(32).unwrap();
        let mut cfg = EnsembleConfig::new(20, 1);
        cfg.antithetic = true;
        let e = simulate_ensemble_with(
            &DriftSpec::example1_sine(),
            &[std::f64::consts::PI],
            &model(0.3),
            g,
            &cfg,
        )
        .unwrap();
        let m = e.mean_path();
        for i in 0..g.len() {
            assert!((m.get(i, 0) - std::f64::consts::PI).abs() < 1e-13);
        }
    }

    #[test]
    fn law_paths() {
        let g = TimeGrid::new(8).unwrap();
        let e =
            simulate_ensemble(&DriftSpec::linear_decay(1), &[2.0], &model(0.7), g, 6, 2).unwrap();
        let full = law_path(&e, LawMode::FullEmpirical);
        let mean = law_path(&e, LawMode::MeanOnly);
        assert_eq!(full.mean(0), &[2.0]);
        for i in 0..g.len() {
            assert_eq!(full.mean(i), mean.mean(i));
            assert_eq!(full.law(i).unwrap().len(), 6);
        }
        let one = Ensemble::new(vec![e.paths()[0].clone()]).unwrap();
        let lp = law_path(&one, LawMode::FullEmpirical);
        for i in 0..g.len() {
            assert_eq!(lp.law(i).unwrap().atoms(), e.paths()[0].row(i));
        }
        let coarse = full.restrict(TimeGrid::new(4).unwrap()).unwrap();
        assert_eq!(coarse.mean(2), full.mean(4));
    }
}
