//! Uniform time grids on `[0, 1]` and the grid functions that live on them.

use crate::error::{Error, Result};

/// Uniform grid `t_i = i / n`, `i = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeGrid {
    steps: usize,
}

impl TimeGrid {
    pub fn new(steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Domain(format!(
                "a time grid needs at least 2 steps, got {steps}"
            )));
        }
        Ok(Self { steps })
    }

    /// Number of steps `n`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes, `n + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.steps {
            1.0
        } else {
            i as f64 / self.steps as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    pub(crate) fn check_same(&self, other: &TimeGrid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "expected {} steps, got {}",
                self.steps, other.steps
            )));
        }
        Ok(())
    }
}

/// A `dim`-valued function sampled on every node of a grid, stored row-major
/// as `(n + 1) x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFn {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl SampledFn {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(grid, dim, &values)?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "grid function entry {} (node {})",
                i,
                i / dim
            )));
        }
        Ok(Self { grid, dim, values })
    }

    /// Builds a scalar function from a closure of time.
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, 1, grid.nodes().into_iter().map(f).collect())
    }

    /// Builds a vector function; `f(t, out)` fills one row.
    pub fn from_fn_vec(grid: TimeGrid, dim: usize, f: impl Fn(f64, &mut [f64])) -> Result<Self> {
        let mut values = vec![0.0; grid.len() * dim];
        for (i, row) in values.chunks_mut(dim).enumerate() {
            f(grid.node(i), row);
        }
        Self::new(grid, dim, values)
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        Self {
            grid,
            dim,
            values: vec![0.0; grid.len() * dim],
        }
    }

    /// Assembles a function from per-component node arrays.
    pub fn from_components(grid: TimeGrid, components: &[Vec<f64>]) -> Result<Self> {
        let dim = components.len();
        if dim == 0 {
            return Err(Error::Domain("a grid function needs dim >= 1".into()));
        }
        let mut values = vec![0.0; grid.len() * dim];
        for (c, comp) in components.iter().enumerate() {
            if comp.len() != grid.len() {
                return Err(Error::GridMismatch(format!(
                    "component {c} has {} nodes, grid has {}",
                    comp.len(),
                    grid.len()
                )));
            }
            for (i, v) in comp.iter().enumerate() {
                values[i * dim + c] = *v;
            }
        }
        Self::new(grid, dim, values)
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, i: usize, c: usize) -> f64 {
        self.values[i * self.dim + c]
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.values
            .iter()
            .skip(c)
            .step_by(self.dim)
            .copied()
            .collect()
    }

    pub fn components(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|c| self.component(c)).collect()
    }

    /// Applies a scalar operator to every component.
    pub fn map_components(&self, op: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let comps: Vec<Vec<f64>> = self.components().iter().map(|c| op(c)).collect();
        Self::from_components(self.grid, &comps)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            grid: self.grid,
            dim: self.dim,
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    /// `a * self + b * other`
    pub fn lin_comb(&self, a: f64, other: &SampledFn, b: f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        if self.dim != other.dim {
            return Err(Error::GridMismatch(format!(
                "dimension {} vs {}",
                self.dim, other.dim
            )));
        }
        Ok(Self {
            grid: self.grid,
            dim: self.dim,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Trapezoid-rule integral of each component.
    pub fn trapz(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|c| trapz(&self.component(c), self.grid.dt()))
            .collect()
    }
}

/// A `dim`-valued path with a pinned initial value `values[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl Path {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        let f = SampledFn::new(grid, dim, values)?;
        Ok(Self {
            grid,
            dim,
            values: f.values,
        })
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, 1, grid.nodes().into_iter().map(f).collect())
    }

    pub fn from_fn_vec(grid: TimeGrid, dim: usize, f: impl Fn(f64, &mut [f64])) -> Result<Self> {
        let s = SampledFn::from_fn_vec(grid, dim, f)?;
        Ok(Self::from(s))
    }

    /// Straight line from `x0` to `x1`.
    pub fn linear(grid: TimeGrid, x0: &[f64], x1: &[f64]) -> Result<Self> {
        if x0.len() != x1.len() || x0.is_empty() {
            return Err(Error::Domain("endpoint dimensions differ".into()));
        }
        Self::from_fn_vec(grid, x0.len(), |t, row| {
            for (c, r) in row.iter_mut().enumerate() {
                *r = x0[c] + (x1[c] - x0[c]) * t;
            }
        })
    }

    /// The path `initial + f`.
    pub fn from_offset(initial: &[f64], f: &SampledFn) -> Result<Self> {
        if initial.len() != f.dim() {
            return Err(Error::Domain("initial value dimension mismatch".into()));
        }
        let dim = f.dim();
        let mut values = f.values().to_vec();
        for (k, v) in values.iter_mut().enumerate() {
            *v += initial[k % dim];
        }
        // Pin the initial node exactly.
        values[..dim].copy_from_slice(initial);
        Self::new(f.grid(), dim, values)
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn initial(&self) -> &[f64] {
        &self.values[..self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        &self.values[self.values.len() - self.dim..]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, i: usize, c: usize) -> f64 {
        self.values[i * self.dim + c]
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.values
            .iter()
            .skip(c)
            .step_by(self.dim)
            .copied()
            .collect()
    }

    /// `self - initial`, a grid function vanishing at `t = 0`.
    pub fn centered(&self) -> SampledFn {
        let dim = self.dim;
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| v - self.values[k % dim])
            .collect();
        SampledFn {
            grid: self.grid,
            dim,
            values,
        }
    }

    pub fn as_sampled(&self) -> SampledFn {
        SampledFn {
            grid: self.grid,
            dim: self.dim,
            values: self.values.clone(),
        }
    }

    /// Pointwise difference `self - other` as a path (starting at the
    /// difference of the initial values).
    pub fn difference(&self, other: &Path) -> Result<Path> {
        self.grid.check_same(&other.grid)?;
        if self.dim != other.dim {
            return Err(Error::GridMismatch("path dimensions differ".into()));
        }
        Ok(Path {
            grid: self.grid,
            dim: self.dim,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// Restriction to a coarser grid whose step count divides this one's.
    pub fn restrict(&self, coarse: TimeGrid) -> Result<Path> {
        let factor = restriction_factor(self.grid, coarse)?;
        let dim = self.dim;
        let values = (0..coarse.len())
            .flat_map(|i| self.row(i * factor).to_vec())
            .collect();
        Ok(Path {
            grid: coarse,
            dim,
            values,
        })
    }

    pub(crate) fn from_raw(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len() * dim);
        Self { grid, dim, values }
    }
}

impl From<SampledFn> for Path {
    fn from(f: SampledFn) -> Self {
        Self {
            grid: f.grid,
            dim: f.dim,
            values: f.values,
        }
    }
}

pub(crate) fn restriction_factor(fine: TimeGrid, coarse: TimeGrid) -> Result<usize> {
    if coarse.steps() == 0 || !fine.steps().is_multiple_of(coarse.steps()) {
        return Err(Error::GridMismatch(format!(
            "cannot restrict {} steps onto {} steps",
            fine.steps(),
            coarse.steps()
        )));
    }
    Ok(fine.steps() / coarse.steps())
}

fn check_shape(grid: TimeGrid, dim: usize, values: &[f64]) -> Result<()> {
    if dim == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    if values.len() != grid.len() * dim {
        return Err(Error::GridMismatch(format!(
            "expected {} values ({} nodes x {dim}), got {}",
            grid.len() * dim,
            grid.len(),
            values.len()
        )));
    }
    Ok(())
}

/// Composite trapezoid rule with uniform spacing.
pub fn trapz(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            dt * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_nodes() {
        let g = TimeGrid::new(4).unwrap();
        assert_eq!(g.nodes(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(TimeGrid::new(1).is_err());
        assert_eq!(TimeGrid::new(3).unwrap().node(3), 1.0);
    }

    #[test]
    fn components_round_trip() {
        let g = TimeGrid::new(3).unwrap();
        let f = SampledFn::from_fn_vec(g, 2, |t, r| {
            r[0] = t;
            r[1] = -t;
        })
        .unwrap();
        let back = SampledFn::from_components(g, &f.components()).unwrap();
        assert_eq!(f, back);
        assert_eq!(f.component(1), vec![0.0, -1.0 / 3.0, -2.0 / 3.0, -1.0]);
    }

    #[test]
    fn rejects_non_finite() {
        let g = TimeGrid::new(2).unwrap();
        assert!(SampledFn::new(g, 1, vec![0.0, f64::NAN, 1.0]).is_err());
        assert!(Path::new(g, 1, vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn centered_and_offset() {
        let g = TimeGrid::new(4).unwrap();
        let p = Path::from_fn(g, |t| 3.0 + t).unwrap();
        let c = p.centered();
        assert_eq!(c.get(0, 0), 0.0);
        let back = Path::from_offset(p.initial(), &c).unwrap();
        assert_eq!(back.initial(), &[3.0]);
        assert!((back.get(4, 0) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn restrict_to_coarse() {
        let fine = TimeGrid::new(8).unwrap();
        let coarse = TimeGrid::new(4).unwrap();
        let p = Path::from_fn(fine, |t| t * t).unwrap();
        let r = p.restrict(coarse).unwrap();
        assert_eq!(r.component(0), vec![0.0, 0.0625, 0.25, 0.5625, 1.0]);
        assert!(p.restrict(TimeGrid::new(3).unwrap()).is_err());
    }

    #[test]
    fn trapz_is_exact_for_linear() {
        let g = TimeGrid::new(10).unwrap();
        let f = SampledFn::from_fn(g, |t| 2.0 * t + 1.0).unwrap();
        assert!((f.trapz()[0] - 2.0).abs() < 1e-14);
    }
}
