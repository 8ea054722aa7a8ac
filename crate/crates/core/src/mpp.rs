//! Most probable transition paths by direct maximization of the discrete
//! action, plus classical Euler–Lagrange residuals and the pendulum
//! reference trajectory.

use std::collections::VecDeque;

use crate::error::{domain, Error, Result};
use crate::grid::{Path, SampledFn, TimeGrid};
use crate::mkv::{pendulum_constant, DriftSpec, LawPath};
use crate::om::{om_action, OmReport};
use crate::par;
use crate::special::HurstModel;

const MAX_SHRINKS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct MppOptions {
    pub max_iters: usize,
    /// Stop once the sup norm of the discrete gradient falls below this.
    pub grad_tol: f64,
    pub ls_shrink: f64,
    pub ls_c1: f64,
    /// Relative central-difference step: `h = fd_step (1 + |u|)`.
    pub fd_step: f64,
    /// Curvature pairs kept by the quasi-Newton update.
    pub memory: usize,
    /// Starting path; the straight line between the endpoints if absent.
    pub initial: Option<Path>,
}

impl Default for MppOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            grad_tol: 1e-6,
            ls_shrink: 0.5,
            ls_c1: 1e-4,
            fd_step: 1e-6,
            memory: 20,
            initial: None,
        }
    }
}

impl MppOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return domain("max_iters must be positive");
        }
        if !(self.grad_tol > 0.0 && self.fd_step > 0.0) {
            return domain("grad_tol and fd_step must be positive");
        }
        if !(self.ls_shrink > 0.0 && self.ls_shrink < 1.0) {
            return domain(format!(
                "ls_shrink must lie in (0, 1), got {}",
                self.ls_shrink
            ));
        }
        if !(self.ls_c1 > 0.0 && self.ls_c1 < 1.0) {
            return domain(format!("ls_c1 must lie in (0, 1), got {}", self.ls_c1));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MppResult {
    pub path: Path,
    pub j: f64,
    pub iters: usize,
    pub grad_norm: f64,
    pub converged: bool,
    pub report: OmReport,
    /// `-J` at the start and after every accepted step.
    pub objective_history: Vec<f64>,
}

/// Maximizes `J` over the interior node values with both endpoints pinned.
///
/// The objective `F = -J` is minimized by limited-memory BFGS with Armijo
/// backtracking, starting from the straight line (or `opts.initial`). The
/// gradient is taken by central differences, one coordinate per task.
pub fn minimize_action(
    drift: &DriftSpec,
    law: &LawPath,
    model: &HurstModel,
    x0: &[f64],
    x1: &[f64],
    grid: TimeGrid,
    opts: &MppOptions,
) -> Result<MppResult> {
    opts.validate()?;
    let dim = drift.dim();
    if x0.len() != dim || x1.len() != dim {
        return domain(format!("endpoints must have dimension {dim}"));
    }
    law.check_compatible(grid, dim)?;
    let start = match &opts.initial {
        Some(p) => {
            grid.check_same(&p.grid())?;
            if p.dim() != dim {
                return Err(Error::GridMismatch("initial path dimension".into()));
            }
            p.values().to_vec()
        }
        None => Path::linear(grid, x0, x1)?.values().to_vec(),
    };
    let problem = Problem {
        drift,
        law,
        model,
        grid,
        dim,
        x0,
        x1,
    };
    let interior = dim..start.len() - dim;
    let mut u = start[interior].to_vec();
    let mut f = problem.objective(&u)?;
    let mut trace = vec![f];
    let mut g = problem.gradient(&u, opts.fd_step)?;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iters = 0;

    loop {
        let gnorm = sup(&g);
        if gnorm <= opts.grad_tol || iters >= opts.max_iters || u.is_empty() {
            return problem.finish(u, iters, gnorm, gnorm <= opts.grad_tol, trace);
        }
        let mut p = two_loop(&g, &history);
        let mut slope = dot(&g, &p);
        if !(slope < 0.0) {
            history.clear();
            p = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        if history.is_empty() {
            // Keep the first trial step modest.
            let s = 1.0 / sup(&p).max(1.0);
            p.iter_mut().for_each(|v| *v *= s);
            slope *= s;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_SHRINKS {
            let trial: Vec<f64> = u.iter().zip(&p).map(|(a, b)| a + step * b).collect();
            if let Ok(ft) = problem.objective(&trial) {
                if ft <= f + opts.ls_c1 * step * slope {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            step *= opts.ls_shrink;
        }
        let Some((next, f_next)) = accepted else {
            let best = problem.finish(u, iters, gnorm, false, trace)?;
            return Err(Error::LineSearch {
                shrinks: MAX_SHRINKS,
                best: Box::new(best),
            });
        };
        let g_next = problem.gradient(&next, opts.fd_step)?;
        let s: Vec<f64> = next.iter().zip(&u).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        u = next;
        f = f_next;
        trace.push(f);
        g = g_next;
        iters += 1;
    }
}

struct Problem<'a> {
    drift: &'a DriftSpec,
    law: &'a LawPath,
    model: &'a HurstModel,
    grid: TimeGrid,
    dim: usize,
    x0: &'a [f64],
    x1: &'a [f64],
}

impl Problem<'_> {
    fn path(&self, u: &[f64]) -> Result<Path> {
        let mut v = Vec::with_capacity(u.len() + 2 * self.dim);
        v.extend_from_slice(self.x0);
        v.extend_from_slice(u);
        v.extend_from_slice(self.x1);
        Path::new(self.grid, self.dim, v)
    }

    fn report(&self, u: &[f64]) -> Result<OmReport> {
        om_action(&self.path(u)?, self.drift, self.law, self.model)
    }

    fn objective(&self, u: &[f64]) -> Result<f64> {
        Ok(-self.report(u)?.j)
    }

    fn gradient(&self, u: &[f64], rel_step: f64) -> Result<Vec<f64>> {
        par::try_map_indices(u.len(), |k| {
            let mut v = u.to_vec();
            let h = rel_step * (1.0 + u[k].abs());
            v[k] = u[k] + h;
            let hi = self.objective(&v)?;
            v[k] = u[k] - h;
            let lo = self.objective(&v)?;
            Ok((hi - lo) / (2.0 * h))
        })
    }

    fn finish(
        &self,
        u: Vec<f64>,
        iters: usize,
        grad_norm: f64,
        converged: bool,
        objective_history: Vec<f64>,
    ) -> Result<MppResult> {
        let path = self.path(&u)?;
        let report = om_action(&path, self.drift, self.law, self.model)?;
        Ok(MppResult {
            path,
            j: report.j,
            iters,
            grad_norm,
            converged,
            report,
            objective_history,
        })
    }
}

/// Central-difference gradient of `-J` with respect to the interior node
/// values of `phi` (row-major), as used by [`minimize_action`].
pub fn action_gradient(
    phi: &Path,
    drift: &DriftSpec,
    law: &LawPath,
    model: &HurstModel,
    fd_step: f64,
) -> Result<Vec<f64>> {
    let dim = phi.dim();
    let v = phi.values();
    let problem = Problem {
        drift,
        law,
        model,
        grid: phi.grid(),
        dim,
        x0: phi.initial(),
        x1: phi.terminal(),
    };
    problem.gradient(&v[dim..v.len() - dim], fd_step)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// L-BFGS two-loop recursion: returns `-H g`.
fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Residual of the classical Euler–Lagrange equation for the Lagrangian
/// `L = |phi' - b|^2 + div b`:
///
/// `r = d/dt dL/dphi' - dL/dphi = 2 (phi'' - d/dt b) + 2 Db^T (phi' - b) - grad div b`.
///
/// Central differences throughout; the endpoint rows are left at zero.
pub fn el_residual_classical(
    phi: &Path,
    drift: &DriftSpec,
    law: &LawPath,
    model: &HurstModel,
) -> Result<SampledFn> {
    if !model.is_classical() {
        return Err(Error::Unsupported(format!(
            "the Euler–Lagrange residual is only available for H = 1/2, got H = {}",
            model.hurst
        )));
    }
    let grid = phi.grid();
    let dim = phi.dim();
    if drift.dim() != dim {
        return Err(Error::GridMismatch(
            "drift and path dimensions differ".into(),
        ));
    }
    law.check_compatible(grid, dim)?;
    let dt = grid.dt();
    let n = grid.steps();
    let b: Vec<Vec<f64>> = (0..=n)
        .map(|i| drift.eval(phi.row(i), law.view(i)))
        .collect();
    let mut out = vec![0.0; grid.len() * dim];
    for i in 1..n {
        let view = law.view(i);
        let x = phi.row(i);
        let jac = drift.jacobian(x, view);
        let grad_div = divergence_gradient(drift, x, view);
        for c in 0..dim {
            let d2 = (phi.get(i + 1, c) - 2.0 * phi.get(i, c) + phi.get(i - 1, c)) / (dt * dt);
            let db = (b[i + 1][c] - b[i - 1][c]) / (2.0 * dt);
            let mut jt = 0.0;
            for r in 0..dim {
                let v = (phi.get(i + 1, r) - phi.get(i - 1, r)) / (2.0 * dt) - b[i][r];
                jt += jac[r * dim + c] * v;
            }
            out[i * dim + c] = 2.0 * (d2 - db) + 2.0 * jt - grad_div[c];
        }
    }
    SampledFn::new(grid, dim, out)
}

fn divergence_gradient(drift: &DriftSpec, x: &[f64], law: crate::mkv::LawView<'_>) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|c| {
            let h = 1e-4 * (1.0 + x[c].abs());
            xp[c] = x[c] + h;
            let hi = drift.divergence(&xp, law);
            xp[c] = x[c] - h;
            let lo = drift.divergence(&xp, law);
            xp[c] = x[c];
            (hi - lo) / (2.0 * h)
        })
        .collect()
}

/// Undamped pendulum `Z'' + K sin Z = 0`, `K = Gamma(1/4)^4 / (4 pi)`, from
/// `(Z, Z') = (-pi/2, 0)`, integrated by classical RK4 with at least 1024
/// steps on `[0, 1]` and sampled on `grid` as the path `(Z, Z')`.
pub fn pendulum_reference(grid: TimeGrid) -> Path {
    let k = pendulum_constant();
    let n = grid.steps();
    let sub = 1024usize.div_ceil(n).max(1);
    let h = grid.dt() / sub as f64;
    let rhs = |z: [f64; 2]| [z[1], -k * z[0].sin()];
    let mut z = [-std::f64::consts::FRAC_PI_2, 0.0];
    let mut values = Vec::with_capacity(2 * grid.len());
    values.extend_from_slice(&z);
    for _ in 0..n {
        for _ in 0..sub {
            let k1 = rhs(z);
            let k2 = rhs([z[0] + 0.5 * h * k1[0], z[1] + 0.5 * h * k1[1]]);
            let k3 = rhs([z[0] + 0.5 * h * k2[0], z[1] + 0.5 * h * k2[1]]);
            let k4 = rhs([z[0] + h * k3[0], z[1] + h * k3[1]]);
            for c in 0..2 {
                z[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
            }
        }
        values.extend_from_slice(&z);
    }
    Path::from_raw(grid, 2, values)
}

/// `E = Z'^2 / 2 - K cos Z` along a `(Z, Z')` path.
pub fn pendulum_energy(p: &Path) -> Vec<f64> {
    let k = pendulum_constant();
    (0..p.grid().len())
        .map(|i| 0.5 * p.get(i, 1).powi(2) - k * p.get(i, 0).cos())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn model(h: f64) -> HurstModel {
        HurstModel::new(h).unwrap()
    }

    #[test]
    fn options_validation() {
        assert!(MppOptions::default().validate().is_ok());
        let bad = MppOptions {
            ls_shrink: 1.0,
            ..MppOptions::default()
        };
        assert!(bad.validate().is_err());
        let bad = MppOptions {
            ls_c1: 0.0,
            ..MppOptions::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn equal_endpoints_zero_drift() {
        let g = TimeGrid::new(32).unwrap();
        let law = LawPath::constant_mean(g, &[0.0]).unwrap();
        let r = minimize_action(
            &DriftSpec::zero(1),
            &law,
            &model(0.5),
            &[0.4],
            &[0.4],
            g,
            &MppOptions::default(),
        )
        .unwrap();
        assert!(r.converged);
        assert_eq!(r.j, 0.0);
        assert!(r.path.values().iter().all(|v| *v == 0.4));
    }

    #[test]
    fn classical_example1_is_linear() {
        let g = TimeGrid::new(64).unwrap();
        let law = LawPath::constant_mean(g, &[PI]).unwrap();
        let start = Path::from_fn(g, |t| PI + (2.0 - PI) * t + 0.3 * (PI * t).sin()).unwrap();
        let opts = MppOptions {
            initial: Some(start),
            ..MppOptions::default()
        };
        let r = minimize_action(
            &DriftSpec::example1_sine(),
            &law,
            &model(0.5),
            &[PI],
            &[2.0],
            g,
            &opts,
        )
        .unwrap();
        assert!(r.converged);
        assert_eq!(r.path.initial(), &[PI]);
        assert_eq!(r.path.terminal(), &[2.0]);
        let line = Path::linear(g, &[PI], &[2.0]).unwrap();
        let dev = r
            .path
            .difference(&line)
            .unwrap()
            .values()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(dev < 1e-4, "{dev}");
        let res =
            el_residual_classical(&r.path, &DriftSpec::example1_sine(), &law, &model(0.5)).unwrap();
        assert!(res.max_abs() < 1e-2);
    }

    #[test]
    fn residual_of_quadratic() {
        let g = TimeGrid::new(16).unwrap();
        let phi = Path::from_fn(g, |t| t * t).unwrap();
        let law = LawPath::constant_mean(g, &[0.0]).unwrap();
        let r = el_residual_classical(&phi, &DriftSpec::zero(1), &law, &model(0.5)).unwrap();
        for i in 1..16 {
            assert!((r.get(i, 0) - 4.0).abs() < 1e-8);
        }
        assert_eq!(r.get(0, 0), 0.0);
        let line = Path::from_fn(g, |t| 1.0 - t).unwrap();
        let r = el_residual_classical(&line, &DriftSpec::zero(1), &law, &model(0.5)).unwrap();
        assert!(r.max_abs() < 1e-10);
        assert!(matches!(
            el_residual_classical(&phi, &DriftSpec::zero(1), &law, &model(0.7)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn residual_with_state_dependent_drift() {
        // b = -x: the EL equation is phi'' = phi, solved by cosh.
        let g = TimeGrid::new(200).unwrap();
        let phi = Path::from_fn(g, f64::cosh).unwrap();
        let law = LawPath::constant_mean(g, &[0.0]).unwrap();
        let r =
            el_residual_classical(&phi, &DriftSpec::linear_decay(1), &law, &model(0.5)).unwrap();
        assert!(r.max_abs() < 1e-4, "{}", r.max_abs());
    }

    #[test]
    fn pendulum_reference_lands_and_conserves() {
        let g = TimeGrid::new(1024).unwrap();
        let p = pendulum_reference(g);
        assert_eq!(p.initial(), &[-FRAC_PI_2, 0.0]);
        assert!((p.get(1024, 0) - FRAC_PI_2).abs() < 1e-3);
        assert!(p.get(1024, 1).abs() < 1e-3);
        let e = pendulum_energy(&p);
        let drift = e.iter().map(|v| (v - e[0]).abs()).fold(0.0, f64::max);
        assert!(drift < 1e-8, "{drift}");
        let coarse = pendulum_reference(TimeGrid::new(128).unwrap());
        assert_eq!(coarse.get(128, 0), p.get(1024, 0));
    }
}
