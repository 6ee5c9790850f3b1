//! Target manifolds N ⊂ R^k.
//!
//! Both supported kinds are hypersurfaces given by a quadratic level set
//! `g(y) = Σ y_i² / a_i² − 1 = 0` (the unit sphere is the case `a = 1`), so the
//! unit normal is `n(y) = D y / |D y|` with `D = diag(1/a_i²)`, the normal
//! projector is `P⊥ = n nᵀ` and the second fundamental form is
//! `B(y)(Y, Z) = D_Y P⊥(y) Z = n ⟨Y, D Z⟩ / |D y|`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ON_MANIFOLD_TOL: f64 = 1e-10;
const NEWTON_TOL: f64 = 1e-13;
const NEWTON_MAX_ITER: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifoldKind {
    /// Unit sphere S^{k-1} ⊂ R^k.
    Sphere { ambient_dim: usize },
    /// Axis-aligned ellipsoid with the given semi-axes.
    Ellipsoid { semi_axes: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetManifold {
    kind: ManifoldKind,
    reach: f64,
    /// Diagonal of D = diag(1/a_i²).
    #[serde(skip)]
    metric: Vec<f64>,
}

/// Tangent and normal projectors at a point of N.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorPair {
    pub p: DMatrix<f64>,
    pub p_perp: DMatrix<f64>,
}

impl TargetManifold {
    pub fn sphere(ambient_dim: usize) -> Result<Self> {
        Self::with_reach(ManifoldKind::Sphere { ambient_dim }, None)
    }

    pub fn ellipsoid(semi_axes: Vec<f64>) -> Result<Self> {
        Self::with_reach(ManifoldKind::Ellipsoid { semi_axes }, None)
    }

    /// Builds a manifold with an explicit reach δ, or the default when `None`
    /// (sphere 0.5, ellipsoid half the minimal curvature radius).
    pub fn with_reach(kind: ManifoldKind, reach: Option<f64>) -> Result<Self> {
        let metric = match &kind {
            ManifoldKind::Sphere { ambient_dim } => {
                if *ambient_dim < 2 {
                    return Err(Error::ConfigInvalid("ambient dimension must be >= 2".into()));
                }
                vec![1.0; *ambient_dim]
            }
            ManifoldKind::Ellipsoid { semi_axes } => {
                if semi_axes.len() < 2 || semi_axes.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
                    return Err(Error::ConfigInvalid(
                        "ellipsoid needs >= 2 positive semi-axes".into(),
                    ));
                }
                semi_axes.iter().map(|a| 1.0 / (a * a)).collect()
            }
        };
        // The exterior projection onto a convex ellipsoid is unique at any
        // distance, so only the sphere caps δ.
        let (default_reach, max_reach) = match &kind {
            ManifoldKind::Sphere { .. } => (0.5, 1.0),
            ManifoldKind::Ellipsoid { semi_axes } => {
                (0.5 * min_curvature_radius(semi_axes), f64::INFINITY)
            }
        };
        let reach = reach.unwrap_or(default_reach);
        if !(reach > 0.0) || reach >= max_reach {
            return Err(Error::ConfigInvalid(format!(
                "reach {reach} must lie in (0, {max_reach})"
            )));
        }
        Ok(Self { kind, reach, metric })
    }

    pub fn kind(&self) -> &ManifoldKind {
        &self.kind
    }

    pub fn ambient_dim(&self) -> usize {
        self.metric.len()
    }

    pub fn reach(&self) -> f64 {
        self.reach
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self.kind, ManifoldKind::Sphere { .. })
    }

    /// Diagonal entries of D = diag(1/a_i²).
    pub fn metric(&self) -> &[f64] {
        &self.metric
    }

    /// Level-set value g(y); zero on N.
    pub fn level(&self, y: &[f64]) -> f64 {
        y.iter().zip(&self.metric).map(|(v, d)| d * v * v).sum::<f64>() - 1.0
    }

    /// Nearest point Π(y) on N.
    pub fn nearest_point(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; y.len()];
        self.nearest_point_into(y, &mut out)?;
        Ok(out)
    }

    pub fn nearest_point_into(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(y.len(), self.ambient_dim());
        match &self.kind {
            ManifoldKind::Sphere { .. } => {
                let r = norm(y);
                let distance = (r - 1.0).abs();
                if distance > self.reach || r == 0.0 {
                    return Err(Error::OutsideTubularNeighborhood { distance, reach: self.reach });
                }
                for (o, v) in out.iter_mut().zip(y) {
                    *o = v / r;
                }
                Ok(())
            }
            ManifoldKind::Ellipsoid { semi_axes } => {
                let t = self.ellipsoid_multiplier(y, semi_axes)?;
                for ((o, v), a) in out.iter_mut().zip(y).zip(semi_axes) {
                    let a2 = a * a;
                    *o = v * a2 / (a2 + t);
                }
                let distance = out.iter().zip(y).map(|(p, v)| (p - v) * (p - v)).sum::<f64>().sqrt();
                if distance > self.reach {
                    return Err(Error::OutsideTubularNeighborhood { distance, reach: self.reach });
                }
                Ok(())
            }
        }
    }

    /// Solves Σ y_i² a_i² / (a_i² + t)² = 1 for the Lagrange multiplier of the
    /// projection onto the ellipsoid by damped Newton iteration.
    fn ellipsoid_multiplier(&self, y: &[f64], semi_axes: &[f64]) -> Result<f64> {
        let a2_min = semi_axes.iter().map(|a| a * a).fold(f64::INFINITY, f64::min);
        let phi = |t: f64| -> (f64, f64) {
            let mut g = -1.0;
            let mut dg = 0.0;
            for (v, a) in y.iter().zip(semi_axes) {
                let a2 = a * a;
                let q = v * a / (a2 + t);
                g += q * q;
                dg += -2.0 * q * q / (a2 + t);
            }
            (g, dg)
        };
        let mut t = 0.0;
        for _ in 0..NEWTON_MAX_ITER {
            let (g, dg) = phi(t);
            if g.abs() < NEWTON_TOL {
                return Ok(t);
            }
            if dg == 0.0 || !dg.is_finite() {
                break;
            }
            let mut step = -g / dg;
            // stay right of the pole at t = -a_min²
            while t + step <= -a2_min {
                step *= 0.5;
            }
            t += step;
        }
        let (g, _) = phi(t);
        if g.abs() < 1e-10 {
            return Ok(t);
        }
        let distance = (self.level(y)).abs().sqrt();
        Err(Error::OutsideTubularNeighborhood { distance, reach: self.reach })
    }

    fn check_on_manifold(&self, y: &[f64]) -> Result<()> {
        let defect = self.level(y).abs();
        if defect > ON_MANIFOLD_TOL || !defect.is_finite() {
            return Err(Error::NotOnManifold { defect });
        }
        Ok(())
    }

    /// Unit normal n(y) = D y / |D y|, written into `out`; returns |D y|.
    /// Defined for every y ≠ 0 (the level-set extension off N).
    pub fn normal_into(&self, y: &[f64], out: &mut [f64]) -> f64 {
        let mut s = 0.0;
        for ((o, v), d) in out.iter_mut().zip(y).zip(&self.metric) {
            *o = d * v;
            s += *o * *o;
        }
        let len = s.sqrt();
        for o in out.iter_mut() {
            *o /= len;
        }
        len
    }

    pub fn projectors(&self, y: &[f64]) -> Result<ProjectorPair> {
        self.check_on_manifold(y)?;
        let k = self.ambient_dim();
        let mut n = vec![0.0; k];
        self.normal_into(y, &mut n);
        let p_perp = DMatrix::from_fn(k, k, |i, j| n[i] * n[j]);
        let p = DMatrix::identity(k, k) - &p_perp;
        Ok(ProjectorPair { p, p_perp })
    }

    /// Row-major k×k normal projector n nᵀ at y (no membership check).
    pub fn normal_projector_into(&self, y: &[f64], out: &mut [f64]) {
        let k = self.ambient_dim();
        let mut n = [0.0; 16];
        self.normal_into(y, &mut n[..k]);
        for i in 0..k {
            for j in 0..k {
                out[i * k + j] = n[i] * n[j];
            }
        }
    }

    /// Scalar second fundamental form b(Y, Z) = ⟨Y, D Z⟩ / |D y|, so that
    /// B(y)(Y, Z) = b(Y, Z) n(y).
    pub fn b_scalar(&self, y: &[f64], yv: &[f64], zv: &[f64]) -> f64 {
        let dy = y.iter().zip(&self.metric).map(|(v, d)| (d * v) * (d * v)).sum::<f64>().sqrt();
        let s: f64 = yv.iter().zip(zv).zip(&self.metric).map(|((a, b), d)| a * d * b).sum();
        s / dy
    }

    pub fn second_fundamental_form(&self, y: &[f64], yv: &[f64], zv: &[f64]) -> Result<Vec<f64>> {
        self.check_on_manifold(y)?;
        let k = self.ambient_dim();
        let mut n = vec![0.0; k];
        self.normal_into(y, &mut n);
        for v in [yv, zv] {
            let scale = norm(v).max(1.0);
            let normal = dot(&n, v).abs();
            if normal > ON_MANIFOLD_TOL * scale {
                return Err(Error::NotTangent { normal });
            }
        }
        let b = self.b_scalar(y, yv, zv);
        Ok(n.iter().map(|ni| b * ni).collect())
    }

    /// Directional derivative D_Z P⊥(y) of the extended normal projector,
    /// row-major k×k.
    pub fn normal_projector_derivative_into(&self, y: &[f64], z: &[f64], out: &mut [f64]) {
        let k = self.ambient_dim();
        let mut n = [0.0; 16];
        let dy = self.normal_into(y, &mut n[..k]);
        let mut dn = [0.0; 16];
        // D_Z n = (I - n nᵀ) D Z / |D y|
        let mut dz = [0.0; 16];
        for i in 0..k {
            dz[i] = self.metric[i] * z[i];
        }
        let nd = dot(&n[..k], &dz[..k]);
        for i in 0..k {
            dn[i] = (dz[i] - n[i] * nd) / dy;
        }
        for i in 0..k {
            for j in 0..k {
                out[i * k + j] = dn[i] * n[j] + n[i] * dn[j];
            }
        }
    }

    /// Gradient in y of ½|B(y)(∇u, ∇u)|² with the tangent vectors frozen,
    /// where `s = Σ_i ⟨∂_i u, D ∂_i u⟩`. Equals −s² D² y / |D y|⁴.
    pub fn half_sq_b_gradient_into(&self, y: &[f64], s: f64, out: &mut [f64]) {
        let dy2: f64 = y.iter().zip(&self.metric).map(|(v, d)| (d * v) * (d * v)).sum();
        for ((o, v), d) in out.iter_mut().zip(y).zip(&self.metric) {
            *o = -s * s * d * d * v / (dy2 * dy2);
        }
    }
}

fn min_curvature_radius(semi_axes: &[f64]) -> f64 {
    let amin = semi_axes.iter().cloned().fold(f64::INFINITY, f64::min);
    let amax = semi_axes.iter().cloned().fold(0.0, f64::max);
    amin * amin / amax
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
