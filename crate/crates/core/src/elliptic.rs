//! Matrix-free Poisson solves on the ball lattice and the Hodge split of
//! matrix-valued 1-forms.
//!
//! Matrix-valued fields store the k×k entries row-major as components; a
//! matrix-valued 1-form stores entry e in direction a at component `e * 4 + a`
//! (the layout produced by [`gradient`]), and a matrix-valued 2-form β_ij at
//! `e * 16 + i * 4 + j`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid4::{gradient, partial, BallGrid4, Field, Region};

pub const MAX_ITERATIONS: usize = 10_000;
pub const TOLERANCE: f64 = 1e-10;

/// Unknowns of a Dirichlet problem: the nodes where the right-hand side is
/// defined. `slot[node]` is the unknown's position or `u32::MAX`.
struct Domain {
    grid: Arc<BallGrid4>,
    nodes: Vec<usize>,
    slot: Vec<u32>,
}

impl Domain {
    fn from_mask(rhs: &Field) -> Result<Self> {
        let grid = rhs.grid().clone();
        let n = grid.n();
        let mut slot = vec![u32::MAX; grid.node_count()];
        let mut nodes = Vec::new();
        for idx in 0..grid.node_count() {
            if rhs.is_defined(idx) {
                let m = grid.multi_index(idx);
                if m.iter().any(|&i| i == 0 || i == n - 1) {
                    return Err(Error::GridTooCoarse("Poisson unknown on the lattice edge".into()));
                }
                slot[idx] = nodes.len() as u32;
                nodes.push(idx);
            }
        }
        if nodes.is_empty() {
            return Err(Error::EmptyRegion);
        }
        Ok(Self { grid, nodes, slot })
    }

    /// y = −Δ_h x on the unknowns, zero outside.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let st = self.grid.strides();
        let inv_h2 = 1.0 / (self.grid.h() * self.grid.h());
        for (i, &idx) in self.nodes.iter().enumerate() {
            let mut acc = 8.0 * x[i];
            for s in st {
                for nb in [idx + s, idx - s] {
                    let k = self.slot[nb];
                    if k != u32::MAX {
                        acc -= x[k as usize];
                    }
                }
            }
            y[i] = acc * inv_h2;
        }
    }
}

/// Preconditioned conjugate gradients for A x = b with the diagonal
/// preconditioner (constant 8/h² here).
fn pcg(dom: &Domain, b: &[f64], x: &mut [f64]) -> Result<usize> {
    let n = b.len();
    let diag = 8.0 / (dom.grid.h() * dom.grid.h());
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        x.fill(0.0);
        return Ok(0);
    }
    let mut r = vec![0.0; n];
    dom.apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().map(|v| v / diag).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
    for it in 0..MAX_ITERATIONS {
        if res <= TOLERANCE {
            return Ok(it);
        }
        dom.apply(&p, &mut ap);
        let alpha = rz / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag;
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
    }
    if res <= TOLERANCE {
        Ok(MAX_ITERATIONS)
    } else {
        Err(Error::SolverDiverged { iterations: MAX_ITERATIONS, residual: res })
    }
}

/// Solves Δ_h u = rhs on the nodes where `rhs` is defined, with u equal to
/// `boundary_value` on the neighbouring nodes. Every component is solved
/// independently. The result is defined on the unknowns and on the boundary
/// nodes they touch.
pub fn poisson_dirichlet(rhs: &Field, boundary_value: &Field) -> Result<Field> {
    let m = rhs.components();
    if boundary_value.components() != m {
        return Err(Error::InputMissing("boundary value component count differs".into()));
    }
    let dom = Domain::from_mask(rhs)?;
    let st = dom.grid.strides();
    let inv_h2 = 1.0 / (dom.grid.h() * dom.grid.h());
    let mut out = Field::undefined(&dom.grid, m);
    let mut b = vec![0.0; dom.nodes.len()];
    let mut x = vec![0.0; dom.nodes.len()];
    for c in 0..m {
        for (i, &idx) in dom.nodes.iter().enumerate() {
            let mut v = -rhs.at(idx)[c];
            for s in st {
                for nb in [idx + s, idx - s] {
                    if dom.slot[nb] == u32::MAX {
                        let g = boundary_value.at(nb)[c];
                        let g = if g.is_finite() { g } else { 0.0 };
                        v += g * inv_h2;
                        out.at_mut(nb)[c] = g;
                    }
                }
            }
            b[i] = v;
        }
        x.fill(0.0);
        pcg(&dom, &b, &mut x)?;
        for (i, &idx) in dom.nodes.iter().enumerate() {
            out.at_mut(idx)[c] = x[i];
        }
    }
    Ok(out)
}

/// Solves Δ_h u = rhs with zero boundary values.
pub fn poisson_zero(rhs: &Field) -> Result<Field> {
    let zero = Field::constant(rhs.grid(), &vec![0.0; rhs.components()]);
    poisson_dirichlet(rhs, &zero)
}

/// α, β with ω ≈ dα + d*β, i.e. ω_j = ∂_j α + Σ_i ∂_i β_ij.
#[derive(Debug, Clone)]
pub struct HodgeParts {
    /// k×k matrix field.
    pub alpha: Field,
    /// k×k-valued 2-form, component `e * 16 + i * 4 + j`.
    pub beta: Field,
    /// ‖ω − dα − d*β‖₂ on the nodes where everything is defined.
    pub remainder_norm: f64,
    /// remainder_norm / ‖ω‖₂ on the same nodes (0 when ω vanishes).
    pub relative_remainder: f64,
    /// Whether ω was pointwise antisymmetric, in which case only the upper
    /// entries are solved and α, β are antisymmetric by construction.
    pub antisymmetric: bool,
}

/// Metadata recorded with every Hodge split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HodgeConventions {
    pub alpha_boundary: &'static str,
    pub beta_boundary: &'static str,
    pub alpha_equation: &'static str,
    pub beta_equation: &'static str,
    pub codifferential: &'static str,
}

pub const HODGE_CONVENTIONS: HodgeConventions = HodgeConventions {
    alpha_boundary: "zero Dirichlet",
    beta_boundary: "zero Dirichlet, componentwise",
    alpha_equation: "Δα = Σ_i ∂_i ω_i",
    beta_equation: "Δβ_ij = ∂_i ω_j − ∂_j ω_i",
    codifferential: "(d*β)_j = Σ_i ∂_i β_ij",
};

fn matrix_dim(entries: usize) -> Result<usize> {
    let k = (entries as f64).sqrt().round() as usize;
    if k * k != entries || k == 0 {
        return Err(Error::InputMissing(format!("{entries} entries is not a square matrix")));
    }
    Ok(k)
}

fn is_antisymmetric(omega: &Field, k: usize) -> bool {
    let g = omega.grid().clone();
    (0..g.node_count()).filter(|&i| omega.is_defined(i)).all(|idx| {
        let v = omega.at(idx);
        let scale = v.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-300);
        (0..k).all(|p| {
            (0..k).all(|q| (0..4).all(|a| (v[(p * k + q) * 4 + a] + v[(q * k + p) * 4 + a]).abs() <= 1e-12 * scale))
        })
    })
}

/// Hodge split of a k×k-valued 1-form (components `e * 4 + a`).
pub fn hodge_decompose(omega: &Field) -> Result<HodgeParts> {
    let m4 = omega.components();
    if m4 % 4 != 0 {
        return Err(Error::InputMissing("1-form needs 4 components per entry".into()));
    }
    let entries = m4 / 4;
    let k = matrix_dim(entries)?;
    let grid = omega.grid().clone();
    let antisymmetric = is_antisymmetric(omega, k);
    let pairs: Vec<(usize, usize)> = if antisymmetric {
        (0..k).flat_map(|p| (p + 1..k).map(move |q| (p, q))).collect()
    } else {
        (0..k).flat_map(|p| (0..k).map(move |q| (p, q))).collect()
    };
    let d: Vec<Field> = (0..4).map(|a| partial(omega, a)).collect::<Result<_>>()?;
    let mut alpha = Field::undefined(&grid, entries);
    let mut beta = Field::undefined(&grid, entries * 16);
    for &(p, q) in &pairs {
        let e = p * k + q;
        // Δα_e = Σ_i ∂_i ω_{e,i}
        let rhs_a = d[0].map(1, |_, v, o| o[0] = v[e * 4]);
        let rhs_a = (1..4).fold(rhs_a, |acc, a| {
            acc.zip_map(&d[a], 1, |_, s, v, o| o[0] = s[0] + v[e * 4 + a])
        });
        let sol = poisson_zero(&rhs_a)?;
        scatter_entry(&mut alpha, &sol, p, q, k, antisymmetric);
        for i in 0..4 {
            for j in i + 1..4 {
                let rhs_b = d[i].zip_map(&d[j], 1, |_, di, dj, o| o[0] = di[e * 4 + j] - dj[e * 4 + i]);
                let sol = poisson_zero(&rhs_b)?;
                let (ij, ji) = (i * 4 + j, j * 4 + i);
                for idx in 0..grid.node_count() {
                    let v = sol.at(idx)[0];
                    if !v.is_finite() {
                        continue;
                    }
                    let mut put = |entry: usize, sign: f64| {
                        let slot = beta.at_mut(idx);
                        if slot[0].is_nan() {
                            slot.fill(0.0);
                        }
                        slot[entry * 16 + ij] = sign * v;
                        slot[entry * 16 + ji] = -sign * v;
                    };
                    put(e, 1.0);
                    if antisymmetric {
                        put(q * k + p, -1.0);
                    }
                }
            }
        }
    }
    let (remainder_norm, relative_remainder) = remainder(omega, &alpha, &beta)?;
    Ok(HodgeParts { alpha, beta, remainder_norm, relative_remainder, antisymmetric })
}

/// Writes a scalar solution into entry (p, q) of a matrix field, and −v into
/// (q, p) for antisymmetric problems. Untouched entries start at zero.
fn scatter_entry(target: &mut Field, sol: &Field, p: usize, q: usize, k: usize, antisymmetric: bool) {
    for idx in 0..sol.grid().node_count() {
        let v = sol.at(idx)[0];
        if !v.is_finite() {
            continue;
        }
        let slot = target.at_mut(idx);
        if slot[0].is_nan() {
            slot.fill(0.0);
        }
        slot[p * k + q] = v;
        if antisymmetric {
            slot[q * k + p] = -v;
        }
    }
}

/// d*β as a 1-form: (d*β)_{e,j} = Σ_i ∂_i β_{e,ij}.
pub fn codifferential(beta: &Field) -> Result<Field> {
    let entries = beta.components() / 16;
    let d: Vec<Field> = (0..4).map(|a| partial(beta, a)).collect::<Result<_>>()?;
    let mut out = Field::undefined(beta.grid(), entries * 4);
    for idx in 0..beta.grid().node_count() {
        if (0..4).all(|a| d[a].is_defined(idx)) {
            let slot = out.at_mut(idx);
            for e in 0..entries {
                for j in 0..4 {
                    slot[e * 4 + j] = (0..4).map(|i| d[i].at(idx)[e * 16 + i * 4 + j]).sum();
                }
            }
        }
    }
    Ok(out)
}

fn remainder(omega: &Field, alpha: &Field, beta: &Field) -> Result<(f64, f64)> {
    let da = gradient(alpha)?;
    let dsb = codifferential(beta)?;
    let rec = da.add(&dsb);
    let rem = omega.sub(&rec);
    let region = Region::Whole;
    let rn = rem.l2_norm(&region);
    let on = omega.restrict_to(&rem).l2_norm(&region);
    Ok((rn, if on > 0.0 { rn / on } else { 0.0 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid4::laplacian;

    #[test]
    fn zero_rhs_gives_zero() {
        let g = BallGrid4::unit(0.125).unwrap();
        let rhs = Field::constant(&g, &[0.0]);
        let u = poisson_zero(&rhs).unwrap();
        assert_eq!(u.max_norm(&Region::Whole), 0.0);
    }

    #[test]
    fn manufactured_quartic() {
        let err = |h: f64| {
            let g = BallGrid4::unit(h).unwrap();
            let exact = |x: &[f64; 4]| (1.0 - x.iter().map(|t| t * t).sum::<f64>()).powi(2);
            // ∂_i(−4x_i(1 − s)) = −4(1 − s) + 8x_i², s = |x|²
            let rhs = Field::from_fn(&g, 1, |x, o| {
                let s: f64 = x.iter().map(|t| t * t).sum();
                o[0] = -16.0 * (1.0 - s) + 8.0 * s;
            });
            let rhs = rhs.restrict_to(&laplacian(&Field::constant(&g, &[0.0])).unwrap());
            let bv = Field::from_fn(&g, 1, |x, o| o[0] = exact(x));
            let u = poisson_dirichlet(&rhs, &bv).unwrap();
            let diff = u.map(1, |x, v, o| o[0] = v[0] - exact(x));
            diff.max_norm(&Region::Whole)
        };
        let (e1, e2) = (err(0.125), err(0.0625));
        assert!(e2 < 0.01 && e1 / e2 > 3.0, "{e1} {e2}");
    }

    #[test]
    fn residual_meets_tolerance() {
        let g = BallGrid4::unit(0.125).unwrap();
        let rhs = Field::constant(&g, &[1.0]).restrict_to(&laplacian(&Field::constant(&g, &[0.0])).unwrap());
        let u = poisson_zero(&rhs).unwrap();
        let lap = laplacian(&u).unwrap();
        let res = lap.sub(&rhs);
        assert!(res.l2_norm(&Region::Whole) <= 1e-9 * rhs.l2_norm(&Region::Whole));
        // u ≈ (|x|² − R²)/8 near the centre
        let centre = u.at(g.index([8, 8, 8, 8]))[0];
        assert!((centre + 1.0 / 8.0).abs() < 0.03, "{centre}");
    }

    #[test]
    fn self_adjoint() {
        let g = BallGrid4::unit(0.125).unwrap();
        let mask = laplacian(&Field::constant(&g, &[0.0])).unwrap();
        let f = Field::from_fn(&g, 1, |x, o| o[0] = 1.0 + x[0] * x[0] + x[1]).restrict_to(&mask);
        let h = Field::from_fn(&g, 1, |x, o| o[0] = (x[3] * 3.0).cos()).restrict_to(&mask);
        let sf = poisson_zero(&f).unwrap();
        let sh = poisson_zero(&h).unwrap();
        let dot = |a: &Field, b: &Field| {
            let p = a.zip_map(b, 1, |_, x, y, o| o[0] = x[0] * y[0]);
            crate::grid4::integrate(&p, &Region::Whole).unwrap()
        };
        let (l, r) = (dot(&sf, &h), dot(&f, &sh));
        assert!((l - r).abs() <= 1e-8 * l.abs().max(r.abs()), "{l} {r}");
    }

    fn antisym_alpha(x: &[f64; 4]) -> [f64; 4] {
        // α₀ with entries (0,1) = φ, (1,0) = −φ, k = 2
        let phi = (1.0 - x.iter().map(|t| t * t).sum::<f64>()).powi(3) * (x[0] + 0.5 * x[1]);
        [0.0, phi, -phi, 0.0]
    }

    #[test]
    fn exact_form_has_small_coexact_part() {
        let norms = |h: f64| {
            let g = BallGrid4::unit(h).unwrap();
            let a0 = Field::from_fn(&g, 4, |x, o| o.copy_from_slice(&antisym_alpha(x)));
            let omega = gradient(&a0).unwrap();
            let parts = hodge_decompose(&omega).unwrap();
            assert!(parts.antisymmetric);
            (parts.beta.l2_norm(&Region::Whole), a0.l2_norm(&Region::Whole))
        };
        // centered differences commute, so the discrete curl of dα₀ vanishes
        let (b1, a1) = norms(0.125);
        assert!(b1 <= 1e-10 * a1, "{b1} {a1}");
    }

    #[test]
    fn coexact_form_has_small_exact_part() {
        let g = BallGrid4::unit(0.125).unwrap();
        let beta0 = Field::from_fn(&g, 64, |x, o| {
            o.fill(0.0);
            let phi = (1.0 - x.iter().map(|t| t * t).sum::<f64>()).powi(3) * (1.0 + x[2]);
            // entry (0,1) of β_{01} = φ, antisymmetric in both index pairs
            for (e, sign) in [(1usize, 1.0), (2usize, -1.0)] {
                o[e * 16 + 1] = sign * phi;
                o[e * 16 + 4] = -sign * phi;
            }
        });
        let omega = codifferential(&beta0).unwrap();
        let parts = hodge_decompose(&omega).unwrap();
        let a = parts.alpha.l2_norm(&Region::Whole);
        let w = omega.l2_norm(&Region::Whole);
        assert!(a <= 1e-10 * w, "{a} {w}");
        assert!(parts.beta.l2_norm(&Region::Whole) > 0.0);
    }

    #[test]
    fn zero_form_zero_parts() {
        let g = BallGrid4::unit(0.125).unwrap();
        let omega = Field::constant(&g, &[0.0; 16]);
        let parts = hodge_decompose(&omega).unwrap();
        assert_eq!(parts.alpha.max_norm(&Region::Whole), 0.0);
        assert_eq!(parts.beta.max_norm(&Region::Whole), 0.0);
        assert_eq!(parts.relative_remainder, 0.0);
    }
}
