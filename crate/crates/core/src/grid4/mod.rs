//! Uniform lattice discretisation of a 4-ball, grid functions and the polar
//! annulus grid.
//!
//! Grid functions store NaN at nodes where they are undefined. Every finite
//! difference operator writes a value only where its whole stencil is
//! defined, so the interior margin grows by one stencil reach per operator
//! application and never needs to be tracked separately.

mod annulus;
mod bhm4;
mod interp;
mod ops;
mod sphere;

use std::sync::Arc;

use crate::error::{Error, Result};

pub use annulus::{radial_angular_split, AnnulusField, AnnulusGrid, RadialAngularSplit};
pub use bhm4::{decode_bhm4, encode_bhm4, read_bhm4, write_bhm4, BHM4_MAGIC, BHM4_VERSION};
pub use interp::{interpolate_at, interpolate_into, polar_resample};
pub use ops::{
    bilaplacian, divergence, gradient, hessian, hessian_norm, laplacian, partial, radial_derivatives,
    third_radial_derivative,
};
pub use sphere::{gauss_legendre, S3Quadrature};

/// Cartesian lattice `x = -R + i h` (i = 0..n) in each axis, restricted to the
/// open ball |x| < R.
#[derive(Debug, Clone, PartialEq)]
pub struct BallGrid4 {
    n: usize,
    h: f64,
    radius: f64,
}

impl BallGrid4 {
    /// Grid on the unit ball with spacing `h`; `1/h` must be an integer.
    pub fn unit(h: f64) -> Result<Arc<Self>> {
        Self::new(1.0, h)
    }

    pub fn new(radius: f64, h: f64) -> Result<Arc<Self>> {
        if !(h > 0.0) || !(radius > 0.0) {
            return Err(Error::ConfigInvalid(format!("bad grid radius {radius} / spacing {h}")));
        }
        let cells = 2.0 * radius / h;
        let rounded = cells.round();
        if (cells - rounded).abs() > 1e-9 * rounded.max(1.0) || rounded < 4.0 {
            return Err(Error::ConfigInvalid(format!(
                "2R/h = {cells} must be an integer >= 4"
            )));
        }
        Ok(Arc::new(Self { n: rounded as usize + 1, h, radius }))
    }

    /// Grid from lattice size and spacing, as stored in BHM4 files.
    pub fn from_lattice(n: usize, h: f64) -> Result<Arc<Self>> {
        if n < 5 || !(h > 0.0) {
            return Err(Error::InputMissing(format!("bad lattice n = {n}, h = {h}")));
        }
        Ok(Arc::new(Self { n, h, radius: 0.5 * (n - 1) as f64 * h }))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn node_count(&self) -> usize {
        self.n.pow(4)
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(4)
    }

    pub fn strides(&self) -> [usize; 4] {
        let n = self.n;
        [n * n * n, n * n, n, 1]
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.radius + i as f64 * self.h
    }

    pub fn index(&self, ijkl: [usize; 4]) -> usize {
        let n = self.n;
        ((ijkl[0] * n + ijkl[1]) * n + ijkl[2]) * n + ijkl[3]
    }

    pub fn multi_index(&self, mut idx: usize) -> [usize; 4] {
        let n = self.n;
        let i3 = idx % n;
        idx /= n;
        let i2 = idx % n;
        idx /= n;
        let i1 = idx % n;
        [idx / n, i1, i2, i3]
    }

    pub fn position(&self, idx: usize) -> [f64; 4] {
        let m = self.multi_index(idx);
        [self.coord(m[0]), self.coord(m[1]), self.coord(m[2]), self.coord(m[3])]
    }

    pub fn in_ball(&self, x: &[f64; 4]) -> bool {
        x.iter().map(|v| v * v).sum::<f64>() < self.radius * self.radius
    }

    /// Calls `f(index, position)` for every lattice node.
    pub fn for_each_node(&self, mut f: impl FnMut(usize, [f64; 4])) {
        let n = self.n;
        let mut idx = 0;
        for i0 in 0..n {
            let x0 = self.coord(i0);
            for i1 in 0..n {
                let x1 = self.coord(i1);
                for i2 in 0..n {
                    let x2 = self.coord(i2);
                    for i3 in 0..n {
                        f(idx, [x0, x1, x2, self.coord(i3)]);
                        idx += 1;
                    }
                }
            }
        }
    }
}

/// Vector-valued grid function on a [`BallGrid4`]; `values[node * m + c]`.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<BallGrid4>,
    m: usize,
    values: Vec<f64>,
}

impl Field {
    /// Samples `f` at every lattice node inside the open ball; NaN elsewhere.
    pub fn from_fn(grid: &Arc<BallGrid4>, m: usize, mut f: impl FnMut(&[f64; 4], &mut [f64])) -> Self {
        let mut values = vec![f64::NAN; grid.node_count() * m];
        grid.for_each_node(|idx, x| {
            if grid.in_ball(&x) {
                f(&x, &mut values[idx * m..(idx + 1) * m]);
            }
        });
        Self { grid: grid.clone(), m, values }
    }

    pub fn constant(grid: &Arc<BallGrid4>, value: &[f64]) -> Self {
        Self::from_fn(grid, value.len(), |_, out| out.copy_from_slice(value))
    }

    pub fn from_values(grid: &Arc<BallGrid4>, m: usize, values: Vec<f64>) -> Result<Self> {
        if m == 0 || values.len() != grid.node_count() * m {
            return Err(Error::InputMissing(format!(
                "expected {} values, got {}",
                grid.node_count() * m,
                values.len()
            )));
        }
        Ok(Self { grid: grid.clone(), m, values })
    }

    /// All-NaN field with `m` components.
    pub fn undefined(grid: &Arc<BallGrid4>, m: usize) -> Self {
        Self { grid: grid.clone(), m, values: vec![f64::NAN; grid.node_count() * m] }
    }

    pub fn grid(&self) -> &Arc<BallGrid4> {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.m..(idx + 1) * self.m]
    }

    pub fn at_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.values[idx * self.m..(idx + 1) * self.m]
    }

    pub fn is_defined(&self, idx: usize) -> bool {
        self.values[idx * self.m].is_finite()
    }

    pub fn defined_count(&self) -> usize {
        (0..self.grid.node_count()).filter(|&i| self.is_defined(i)).count()
    }

    /// Copies components `start..start + len` into a new field.
    pub fn slice_components(&self, start: usize, len: usize) -> Field {
        let nodes = self.grid.node_count();
        let mut values = Vec::with_capacity(nodes * len);
        for idx in 0..nodes {
            values.extend_from_slice(&self.at(idx)[start..start + len]);
        }
        Field { grid: self.grid.clone(), m: len, values }
    }

    /// Pointwise map into a field with `m_out` components; nodes where `self`
    /// is undefined stay undefined.
    pub fn map(&self, m_out: usize, mut f: impl FnMut(&[f64; 4], &[f64], &mut [f64])) -> Field {
        let mut out = Field::undefined(&self.grid, m_out);
        let grid = self.grid.clone();
        grid.for_each_node(|idx, x| {
            if self.is_defined(idx) {
                f(&x, self.at(idx), &mut out.values[idx * m_out..(idx + 1) * m_out]);
            }
        });
        out
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(
        &self,
        other: &Field,
        m_out: usize,
        mut f: impl FnMut(&[f64; 4], &[f64], &[f64], &mut [f64]),
    ) -> Field {
        assert!(Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid);
        let mut out = Field::undefined(&self.grid, m_out);
        let grid = self.grid.clone();
        grid.for_each_node(|idx, x| {
            if self.is_defined(idx) && other.is_defined(idx) {
                f(&x, self.at(idx), other.at(idx), &mut out.values[idx * m_out..(idx + 1) * m_out]);
            }
        });
        out
    }

    pub fn sub(&self, other: &Field) -> Field {
        assert_eq!(self.m, other.m);
        self.zip_map(other, self.m, |_, a, b, o| {
            for c in 0..a.len() {
                o[c] = a[c] - b[c];
            }
        })
    }

    pub fn add(&self, other: &Field) -> Field {
        assert_eq!(self.m, other.m);
        self.zip_map(other, self.m, |_, a, b, o| {
            for c in 0..a.len() {
                o[c] = a[c] + b[c];
            }
        })
    }

    pub fn scale(&self, s: f64) -> Field {
        self.map(self.m, |_, a, o| {
            for c in 0..a.len() {
                o[c] = s * a[c];
            }
        })
    }

    /// Pointwise Euclidean norm of the component vector.
    pub fn pointwise_norm(&self) -> Field {
        self.map(1, |_, a, o| o[0] = a.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    /// Keeps values only where `mask` is defined.
    pub fn restrict_to(&self, mask: &Field) -> Field {
        let mut out = self.clone();
        for idx in 0..self.grid.node_count() {
            if !mask.is_defined(idx) {
                out.at_mut(idx).fill(f64::NAN);
            }
        }
        out
    }

    /// Discrete L² norm √(Σ |v|² h⁴) over defined nodes inside `region`.
    pub fn l2_norm(&self, region: &Region) -> f64 {
        let sq = self.map(1, |_, a, o| o[0] = a.iter().map(|v| v * v).sum());
        integrate(&sq, region).unwrap_or(0.0).max(0.0).sqrt()
    }

    /// Max of the pointwise norm over defined nodes inside `region`.
    pub fn max_norm(&self, region: &Region) -> f64 {
        let mut best: f64 = 0.0;
        let grid = self.grid.clone();
        grid.for_each_node(|idx, x| {
            if self.is_defined(idx) && region.contains(&x) {
                let v = self.at(idx).iter().map(|v| v * v).sum::<f64>().sqrt();
                best = best.max(v);
            }
        });
        best
    }
}

/// Integration region for [`integrate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Whole,
    Ball { center: [f64; 4], radius: f64 },
    Annulus { center: [f64; 4], inner: f64, outer: f64 },
}

impl Region {
    pub fn ball(radius: f64) -> Self {
        Region::Ball { center: [0.0; 4], radius }
    }

    pub fn annulus(inner: f64, outer: f64) -> Self {
        Region::Annulus { center: [0.0; 4], inner, outer }
    }

    pub fn contains(&self, x: &[f64; 4]) -> bool {
        match self {
            Region::Whole => true,
            Region::Ball { center, radius } => dist(x, center) < *radius,
            Region::Annulus { center, inner, outer } => {
                let d = dist(x, center);
                d >= *inner && d < *outer
            }
        }
    }
}

pub(crate) fn dist(x: &[f64; 4], c: &[f64; 4]) -> f64 {
    (0..4).map(|a| (x[a] - c[a]).powi(2)).sum::<f64>().sqrt()
}

/// Σ u · h⁴ over defined nodes in `region`, summed over components.
///
/// Regions reaching into the undefined margin only see the defined nodes, an
/// O(h) boundary error relative to the exact region.
pub fn integrate(u: &Field, region: &Region) -> Result<f64> {
    let grid = u.grid().clone();
    let mut total = 0.0;
    let mut hits = 0usize;
    grid.for_each_node(|idx, x| {
        if u.is_defined(idx) && region.contains(&x) {
            total += u.at(idx).iter().sum::<f64>();
            hits += 1;
        }
    });
    if hits == 0 {
        return Err(Error::EmptyRegion);
    }
    Ok(total * grid.cell_volume())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn unit_ball_volume() {
        let g = BallGrid4::unit(1.0 / 24.0).unwrap();
        assert_eq!(g.n(), 49);
        let one = Field::constant(&g, &[1.0]);
        let vol = integrate(&one, &Region::Whole).unwrap();
        let exact = PI * PI / 2.0;
        assert!((vol - exact).abs() / exact < 0.01, "{vol} vs {exact}");
    }

    #[test]
    fn zero_integrates_to_zero() {
        let g = BallGrid4::unit(0.125).unwrap();
        let z = Field::constant(&g, &[0.0]);
        assert_eq!(integrate(&z, &Region::ball(0.5)).unwrap(), 0.0);
    }

    #[test]
    fn empty_region_is_an_error() {
        let g = BallGrid4::unit(0.25).unwrap();
        let one = Field::constant(&g, &[1.0]);
        let r = Region::Ball { center: [0.1, 0.1, 0.1, 0.1], radius: 0.01 };
        assert!(matches!(integrate(&one, &r), Err(Error::EmptyRegion)));
    }

    #[test]
    fn index_round_trip() {
        let g = BallGrid4::unit(0.25).unwrap();
        for idx in [0, 17, 400, g.node_count() - 1] {
            assert_eq!(g.index(g.multi_index(idx)), idx);
        }
        assert_eq!(g.position(0), [-1.0; 4]);
    }

    #[test]
    fn grid_rejects_non_integer_cells() {
        assert!(BallGrid4::new(1.0, 0.3).is_err());
    }
}
