//! Manufactured maps with known closed forms, shared by tests, the CLI and the
//! Python bindings.

use std::sync::Arc;

use crate::grid4::{BallGrid4, Field};

/// u = (cos φ, sin φ, 0) into S² with
/// φ(x) = c·x + ½ xᵀMx + κ x₀⁴. Its tension fields have closed forms:
/// T_e = (Δ²φ − 4∇φᵀ∇²φ∇φ − 2|∇φ|²Δφ) J and T_i = Δ²φ J, J = (−sin φ, cos φ, 0).
#[derive(Debug, Clone, PartialEq)]
pub struct CircleMap {
    pub c: [f64; 4],
    pub m: [[f64; 4]; 4],
    pub kappa: f64,
}

impl Default for CircleMap {
    fn default() -> Self {
        Self {
            c: [1.0, 0.5, -0.3, 0.2],
            m: [
                [0.8, 0.2, 0.0, 0.1],
                [0.2, -0.4, 0.3, 0.0],
                [0.0, 0.3, 0.5, -0.2],
                [0.1, 0.0, -0.2, 0.3],
            ],
            kappa: 0.5,
        }
    }
}

impl CircleMap {
    pub fn phi(&self, x: &[f64; 4]) -> f64 {
        let mut s = self.kappa * x[0].powi(4);
        for a in 0..4 {
            s += self.c[a] * x[a];
            for b in 0..4 {
                s += 0.5 * self.m[a][b] * x[a] * x[b];
            }
        }
        s
    }

    fn grad(&self, x: &[f64; 4]) -> [f64; 4] {
        let mut g = self.c;
        for a in 0..4 {
            for b in 0..4 {
                g[a] += self.m[a][b] * x[b];
            }
        }
        g[0] += 4.0 * self.kappa * x[0].powi(3);
        g
    }

    fn hess(&self, x: &[f64; 4]) -> [[f64; 4]; 4] {
        let mut h = self.m;
        h[0][0] += 12.0 * self.kappa * x[0] * x[0];
        h
    }

    pub fn field(&self, grid: &Arc<BallGrid4>) -> Field {
        Field::from_fn(grid, 3, |x, out| {
            let p = self.phi(x);
            out[0] = p.cos();
            out[1] = p.sin();
            out[2] = 0.0;
        })
    }

    /// Scalar factors (t_e, t_i) of the two tension fields along J.
    pub fn tension_factors(&self, x: &[f64; 4]) -> (f64, f64) {
        let g = self.grad(x);
        let h = self.hess(x);
        let lap: f64 = (0..4).map(|a| h[a][a]).sum();
        let bilap = 24.0 * self.kappa;
        let g2: f64 = g.iter().map(|v| v * v).sum();
        let ghg: f64 = (0..4).map(|a| (0..4).map(|b| g[a] * h[a][b] * g[b]).sum::<f64>()).sum();
        (bilap - 4.0 * ghg - 2.0 * g2 * lap, bilap)
    }

    /// Exact T_e and T_i sampled on the grid (3 + 3 components).
    pub fn tension_oracle(&self, grid: &Arc<BallGrid4>) -> (Field, Field) {
        let te = Field::from_fn(grid, 3, |x, out| {
            let p = self.phi(x);
            let (t, _) = self.tension_factors(x);
            out.copy_from_slice(&[-t * p.sin(), t * p.cos(), 0.0]);
        });
        let ti = Field::from_fn(grid, 3, |x, out| {
            let p = self.phi(x);
            let (_, t) = self.tension_factors(x);
            out.copy_from_slice(&[-t * p.sin(), t * p.cos(), 0.0]);
        });
        (te, ti)
    }
}

/// u = Π(e_k + ε g(x)) into S^{k−1} ⊂ R^k for a fixed cubic polynomial g
/// (k = 3), with the radial projection Π(y) = y/|y|.
pub fn projected_polynomial_map(grid: &Arc<BallGrid4>, eps: f64, coeffs: &[f64; 6]) -> Field {
    Field::from_fn(grid, 3, |x, out| {
        let y = [
            eps * (coeffs[0] * x[0] + x[1] * x[2] + coeffs[1] * x[3] * x[3] * x[0]),
            eps * (coeffs[2] * x[1] - x[3] * x[3] + coeffs[3] * x[0] * x[2]),
            1.0 + eps * (coeffs[4] * x[0] * x[3] + coeffs[5] * x[1] * x[1] * x[2]),
        ];
        let r = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
        for c in 0..3 {
            out[c] = y[c] / r;
        }
    })
}

/// Inverse stereographic projection R^4 → S^4 ⊂ R^5 rescaled to concentrate
/// at `center` with scale `lambda`: y = (x − a)/λ,
/// u = (2y, |y|² − 1)/(1 + |y|²).
pub fn stereographic_bubble(grid: &Arc<BallGrid4>, center: [f64; 4], lambda: f64) -> Field {
    Field::from_fn(grid, 5, |x, out| {
        let y: Vec<f64> = (0..4).map(|a| (x[a] - center[a]) / lambda).collect();
        let r2: f64 = y.iter().map(|v| v * v).sum();
        for a in 0..4 {
            out[a] = 2.0 * y[a] / (1.0 + r2);
        }
        out[4] = (r2 - 1.0) / (1.0 + r2);
    })
}

/// Bubble into S⁴ ⊂ R⁵: ω(y) = Π(e₅ + w(y/s)) with w(z) = η z/(1 + |z|²)²
/// in the first four components and Π(z) = z/|z|. ω is rotation
/// equivariant, so its energy density |∇²ω|² + |∇ω|⁴ is radial and every
/// profile energy reduces to 1D quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BubbleProfile {
    pub eta: f64,
    pub scale: f64,
}

impl BubbleProfile {
    /// Total energy 3·eps0 with eps0/2 of it outside the unit ball, so the
    /// ε₀/2 scale rule recovers λ = 1 on the unscaled profile while the core
    /// clears the ε₀ detection threshold.
    pub fn calibrated(eps0: f64) -> Self {
        // The total is scale invariant and close to quadratic in η.
        let mut eta = 0.1;
        for _ in 0..30 {
            let e = Self { eta, scale: 1.0 }.total_energy();
            let next = eta * (3.0 * eps0 / e).sqrt();
            if (next - eta).abs() <= 1e-13 * eta {
                break;
            }
            eta = next;
        }
        // By scale invariance the energy outside |y| = 1 at scale s equals
        // the unscaled energy outside 1/s; Newton on that radius.
        let unit = Self { eta, scale: 1.0 };
        let mut k = 1.0f64;
        for _ in 0..50 {
            let slope = -2.0 * std::f64::consts::PI.powi(2) * k.powi(3) * unit.energy_density(k);
            let step = (unit.energy_outside(k) - 0.5 * eps0) / slope;
            k = (k - step).clamp(0.5 * k, 2.0 * k);
            if step.abs() <= 1e-12 * k {
                break;
            }
        }
        Self { eta, scale: 1.0 / k }
    }

    pub fn value(&self, y: &[f64; 4]) -> [f64; 5] {
        let y = y.map(|t| t / self.scale);
        let r2: f64 = y.iter().map(|t| t * t).sum();
        let s = self.eta / ((1.0 + r2) * (1.0 + r2));
        let z = [s * y[0], s * y[1], s * y[2], s * y[3], 1.0];
        let n = z.iter().map(|t| t * t).sum::<f64>().sqrt();
        z.map(|t| t / n)
    }

    /// |∇²ω|² + |∇ω|⁴ at radius ρ, by Richardson-extrapolated central
    /// differences of the closed form (relative accuracy well below 1e-8).
    pub fn energy_density(&self, rho: f64) -> f64 {
        let at = |d: f64| {
            let (hess, grad) = point_derivatives(|y| self.value(y), &[rho, 0.0, 0.0, 0.0], d);
            hess + grad * grad
        };
        let d = 1e-3 * (self.scale + rho);
        (4.0 * at(0.5 * d) - at(d)) / 3.0
    }

    /// Energy of ω on the ball of radius `radius`.
    pub fn energy_inside(&self, radius: f64) -> f64 {
        radial_quadrature(|r| self.energy_density(r), 0.0, radius)
    }

    /// Energy of ω outside the ball of radius `radius`, integrated in t = 1/ρ.
    pub fn energy_outside(&self, radius: f64) -> f64 {
        let (x, w) = crate::grid4::gauss_legendre(24);
        let panels = 32;
        let t_max = 1.0 / radius;
        let dt = t_max / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let t0 = p as f64 * dt;
            for (xi, wi) in x.iter().zip(&w) {
                let t = t0 + 0.5 * dt * (xi + 1.0);
                if t <= 0.0 {
                    continue;
                }
                let r = 1.0 / t;
                // dρ = dt/t², ρ³ dρ = dt/t⁵
                total += 0.5 * dt * wi * self.energy_density(r) / t.powi(5);
            }
        }
        2.0 * std::f64::consts::PI.powi(2) * total
    }

    pub fn total_energy(&self) -> f64 {
        self.energy_inside(1.0) + self.energy_outside(1.0)
    }

    /// x ↦ ω((x − a)/λ) on `grid`.
    pub fn plant(&self, grid: &Arc<BallGrid4>, center: [f64; 4], lambda: f64) -> Field {
        Field::from_fn(grid, 5, |x, out| {
            let y = [0, 1, 2, 3].map(|a| (x[a] - center[a]) / lambda);
            out.copy_from_slice(&self.value(&y));
        })
    }
}

/// 2π² ∫ g(ρ) ρ³ dρ over [a, b] by composite Gauss–Legendre.
fn radial_quadrature(g: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (x, w) = crate::grid4::gauss_legendre(24);
    let panels = 32;
    let d = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let r0 = a + p as f64 * d;
        for (xi, wi) in x.iter().zip(&w) {
            let r = r0 + 0.5 * d * (xi + 1.0);
            total += 0.5 * d * wi * g(r) * r.powi(3);
        }
    }
    2.0 * std::f64::consts::PI.powi(2) * total
}

/// (|∇²f|², |∇f|²) at x by central differences with step d.
fn point_derivatives<const K: usize>(f: impl Fn(&[f64; 4]) -> [f64; K], x: &[f64; 4], d: f64) -> (f64, f64) {
    let shifted = |s: &[(usize, f64)]| {
        let mut y = *x;
        for &(a, t) in s {
            y[a] += t;
        }
        f(&y)
    };
    let f0 = f(x);
    let (mut hess, mut grad) = (0.0, 0.0);
    for a in 0..4 {
        let p = shifted(&[(a, d)]);
        let m = shifted(&[(a, -d)]);
        for c in 0..K {
            grad += ((p[c] - m[c]) / (2.0 * d)).powi(2);
            hess += ((p[c] - 2.0 * f0[c] + m[c]) / (d * d)).powi(2);
        }
        for b in a + 1..4 {
            let pp = shifted(&[(a, d), (b, d)]);
            let pm = shifted(&[(a, d), (b, -d)]);
            let mp = shifted(&[(a, -d), (b, d)]);
            let mm = shifted(&[(a, -d), (b, -d)]);
            for c in 0..K {
                hess += 2.0 * ((pp[c] - pm[c] - mp[c] + mm[c]) / (4.0 * d * d)).powi(2);
            }
        }
    }
    (hess, grad)
}
