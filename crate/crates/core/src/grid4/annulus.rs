//! Polar grids on annuli: geometrically spaced shells times an S³ rule.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::sphere::S3Quadrature;
use crate::error::{Error, Result};
use crate::s3harmonics::{eigenvalue, SphericalHarmonicBasis};

/// Shells r_0 < … < r_{N−1} equally spaced in log r (N odd), each carrying a
/// copy of an S³ quadrature rule. The radial rule is exact for functions
/// that are quadratic in log r on each pair of shells.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnulusGrid {
    center: [f64; 4],
    radii: Vec<f64>,
    radial_weights: Vec<f64>,
    sphere: S3Quadrature,
}

impl AnnulusGrid {
    /// Shells from `r_in` to `r_out` inclusive, consecutive ratio at most
    /// `max_ratio`, at least five of them.
    pub fn geometric(
        center: [f64; 4],
        r_in: f64,
        r_out: f64,
        max_ratio: f64,
        sphere: S3Quadrature,
    ) -> Result<Arc<Self>> {
        if !(r_in > 0.0 && r_out > r_in) {
            return Err(Error::ConfigInvalid(format!("annulus radii {r_in}..{r_out}")));
        }
        if !(max_ratio > 1.0) {
            return Err(Error::ConfigInvalid(format!("shell ratio {max_ratio} must exceed 1")));
        }
        let span = (r_out / r_in).ln();
        let mut steps = ((span / max_ratio.ln()) - 1e-9).ceil().max(4.0) as usize;
        if steps % 2 == 1 {
            steps += 1;
        }
        let ds = span / steps as f64;
        let radii: Vec<f64> = (0..=steps).map(|j| r_in * (j as f64 * ds).exp()).collect();
        // r³ dr = r⁴ ds with s = ln r; piecewise-quadratic interpolation of the
        // integrand's smooth factor, the e^{4s} factor integrated exactly
        let mut radial_weights = vec![0.0; radii.len()];
        let moments = exp_moments(4.0, 2.0 * ds);
        let d2 = ds * ds;
        let local = [
            (moments[2] - 3.0 * ds * moments[1] + 2.0 * d2 * moments[0]) / (2.0 * d2),
            (-moments[2] + 2.0 * ds * moments[1]) / d2,
            (moments[2] - ds * moments[1]) / (2.0 * d2),
        ];
        for panel in (0..steps).step_by(2) {
            let scale = radii[panel].powi(4);
            for (i, w) in local.iter().enumerate() {
                radial_weights[panel + i] += scale * w;
            }
        }
        Ok(Arc::new(Self { center, radii, radial_weights, sphere }))
    }

    pub fn center(&self) -> [f64; 4] {
        self.center
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn r_in(&self) -> f64 {
        self.radii[0]
    }

    pub fn r_out(&self) -> f64 {
        *self.radii.last().unwrap()
    }

    pub fn shell_count(&self) -> usize {
        self.radii.len()
    }

    pub fn sphere(&self) -> &S3Quadrature {
        &self.sphere
    }

    pub fn node_count(&self) -> usize {
        self.radii.len() * self.sphere.len()
    }

    /// Radial quadrature weights, including the r³ Jacobian.
    pub fn radial_weights(&self) -> &[f64] {
        &self.radial_weights
    }

    pub fn weight(&self, shell: usize, q: usize) -> f64 {
        self.radial_weights[shell] * self.sphere.weights()[q]
    }

    pub fn point(&self, shell: usize, q: usize) -> [f64; 4] {
        let r = self.radii[shell];
        let d = self.sphere.points()[q];
        std::array::from_fn(|a| self.center[a] + r * d[a])
    }
}

/// Vector-valued function on an [`AnnulusGrid`];
/// `values[(shell * nq + q) * m + c]`.
#[derive(Debug, Clone)]
pub struct AnnulusField {
    grid: Arc<AnnulusGrid>,
    m: usize,
    values: Vec<f64>,
}

impl AnnulusField {
    pub fn from_fn(grid: &Arc<AnnulusGrid>, m: usize, mut f: impl FnMut(&[f64; 4], &mut [f64])) -> Self {
        let nq = grid.sphere.len();
        let mut values = vec![0.0; grid.node_count() * m];
        for j in 0..grid.shell_count() {
            for q in 0..nq {
                let x = grid.point(j, q);
                let at = (j * nq + q) * m;
                f(&x, &mut values[at..at + m]);
            }
        }
        Self { grid: grid.clone(), m, values }
    }

    pub fn from_values(grid: &Arc<AnnulusGrid>, m: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() * m {
            return Err(Error::InputMissing("annulus field length mismatch".into()));
        }
        Ok(Self { grid: grid.clone(), m, values })
    }

    pub fn grid(&self) -> &Arc<AnnulusGrid> {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, shell: usize, q: usize) -> &[f64] {
        let at = (shell * self.grid.sphere.len() + q) * self.m;
        &self.values[at..at + self.m]
    }

    pub fn at_mut(&mut self, shell: usize, q: usize) -> &mut [f64] {
        let at = (shell * self.grid.sphere.len() + q) * self.m;
        &mut self.values[at..at + self.m]
    }

    /// Pointwise map; `f(x, value, out)`.
    pub fn map(&self, m_out: usize, mut f: impl FnMut(&[f64; 4], &[f64], &mut [f64])) -> AnnulusField {
        let mut out = AnnulusField { grid: self.grid.clone(), m: m_out, values: vec![0.0; self.grid.node_count() * m_out] };
        let nq = self.grid.sphere.len();
        for j in 0..self.grid.shell_count() {
            for q in 0..nq {
                let x = self.grid.point(j, q);
                let at = (j * nq + q) * m_out;
                f(&x, self.at(j, q), &mut out.values[at..at + m_out]);
            }
        }
        out
    }

    /// ∫ over the annulus, summed over components.
    pub fn integrate(&self) -> f64 {
        let nq = self.grid.sphere.len();
        let mut total = 0.0;
        for j in 0..self.grid.shell_count() {
            for q in 0..nq {
                total += self.grid.weight(j, q) * self.at(j, q).iter().sum::<f64>();
            }
        }
        total
    }

    /// ∫_{S³} u(r_j ω) dω on one shell (unit-sphere measure), per component.
    pub fn sphere_integral(&self, shell: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (q, w) in self.grid.sphere.weights().iter().enumerate() {
            for (o, v) in out.iter_mut().zip(self.at(shell, q)) {
                *o += w * v;
            }
        }
        out
    }
}

/// ∫₀^L t^k e^{ct} dt for k = 0, 1, 2.
fn exp_moments(c: f64, len: f64) -> [f64; 3] {
    let e = (c * len).exp();
    let i0 = (e - 1.0) / c;
    let i1 = len * e / c - i0 / c;
    let i2 = len * len * e / c - 2.0 * i1 / c;
    [i0, i1, i2]
}

/// Radial derivatives and angular pieces of a function on an annulus.
#[derive(Debug, Clone)]
pub struct RadialAngularSplit {
    pub du_dr: AnnulusField,
    pub d2u_dr2: AnnulusField,
    /// Unit-sphere Laplace–Beltrami operator applied on each shell.
    pub lap_s3: AnnulusField,
    /// Tangential Euclidean gradient ∇u − ∂_r u x̂, layout `c * 4 + a`.
    pub angular_grad: AnnulusField,
}

impl RadialAngularSplit {
    /// ∂_r²u + (3/r)∂_r u + r⁻² Δ_{S³}u.
    pub fn laplacian(&self) -> AnnulusField {
        let grid = self.du_dr.grid.clone();
        let m = self.du_dr.m;
        let nq = grid.sphere.len();
        let mut out = self.d2u_dr2.clone();
        for (j, r) in grid.radii.iter().enumerate() {
            for q in 0..nq {
                let at = (j * nq + q) * m;
                for c in 0..m {
                    out.values[at + c] += 3.0 / r * self.du_dr.values[at + c]
                        + self.lap_s3.values[at + c] / (r * r);
                }
            }
        }
        out
    }
}

/// Finite-difference weights for derivatives 0..=`order` at `x0` from
/// arbitrary distinct `nodes` (Fornberg's recursion). Row d holds the
/// weights of the d-th derivative.
pub(crate) fn fd_weights(nodes: &[f64], x0: f64, order: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; order + 1];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Radial first and second derivatives (three-point stencils inside, four
/// points at the ends) and the angular Laplacian and gradient from a
/// spherical-harmonic expansion of each shell truncated at the basis degree.
pub fn radial_angular_split(u: &AnnulusField, basis: &SphericalHarmonicBasis) -> Result<RadialAngularSplit> {
    let grid = u.grid.clone();
    let ns = grid.shell_count();
    if ns < 5 {
        return Err(Error::TooFewShells { needed: 5, got: ns });
    }
    let m = u.m;
    let nq = grid.sphere.len();
    let radii = &grid.radii;

    let mut du = u.clone();
    let mut d2u = u.clone();
    for j in 0..ns {
        let window: Vec<usize> = if j == 0 {
            (0..4).collect()
        } else if j == ns - 1 {
            (ns - 4..ns).collect()
        } else {
            vec![j - 1, j, j + 1]
        };
        let nodes: Vec<f64> = window.iter().map(|&i| radii[i]).collect();
        let w = fd_weights(&nodes, radii[j], 2);
        for q in 0..nq {
            for c in 0..m {
                let mut d1 = 0.0;
                let mut d2 = 0.0;
                for (t, &i) in window.iter().enumerate() {
                    let v = u.values[(i * nq + q) * m + c];
                    d1 += w[1][t] * v;
                    d2 += w[2][t] * v;
                }
                du.values[(j * nq + q) * m + c] = d1;
                d2u.values[(j * nq + q) * m + c] = d2;
            }
        }
    }

    // angular part: coefficients C = Yᵀ W U for all shells and components at once
    let nb = basis.len();
    let mut y = DMatrix::zeros(nq, nb);
    let mut gy: [DMatrix<f64>; 4] = std::array::from_fn(|_| DMatrix::zeros(nq, nb));
    for (q, x) in grid.sphere.points().iter().enumerate() {
        for (b, v) in basis.eval(x).into_iter().enumerate() {
            y[(q, b)] = v;
        }
        for (b, g) in basis.eval_gradient(x).into_iter().enumerate() {
            for a in 0..4 {
                gy[a][(q, b)] = g[a];
            }
        }
    }
    let cols = ns * m;
    let mut wu = DMatrix::zeros(nq, cols);
    for j in 0..ns {
        for (q, w) in grid.sphere.weights().iter().enumerate() {
            for c in 0..m {
                wu[(q, j * m + c)] = w * u.values[(j * nq + q) * m + c];
            }
        }
    }
    let coef = y.transpose() * wu;
    let mut lam_coef = coef.clone();
    for (b, (l, _)) in basis.modes().into_iter().enumerate() {
        lam_coef.row_mut(b).scale_mut(eigenvalue(l));
    }
    let lap = &y * lam_coef;
    let grads: Vec<DMatrix<f64>> = gy.iter().map(|g| g * &coef).collect();

    let mut lap_s3 = u.clone();
    let mut ang = AnnulusField { grid: grid.clone(), m: 4 * m, values: vec![0.0; grid.node_count() * 4 * m] };
    for j in 0..ns {
        let r = radii[j];
        for q in 0..nq {
            for c in 0..m {
                lap_s3.values[(j * nq + q) * m + c] = lap[(q, j * m + c)];
                for a in 0..4 {
                    ang.values[(j * nq + q) * 4 * m + c * 4 + a] = grads[a][(q, j * m + c)] / r;
                }
            }
        }
    }
    Ok(RadialAngularSplit { du_dr: du, d2u_dr2: d2u, lap_s3, angular_grad: ang })
}
