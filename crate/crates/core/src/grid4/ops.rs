//! Centered second-order finite differences.
//!
//! NaN marks undefined nodes, so any stencil touching one yields NaN and the
//! output is masked without bookkeeping. Nodes closer than the stencil reach
//! to the lattice edge are skipped to keep indices in range.

use super::Field;
use crate::error::{Error, Result};

/// Runs `f(idx, out)` on every node at least `reach` steps from the lattice
/// edge whose centre value is defined.
fn stencil_map(u: &Field, m_out: usize, reach: usize, mut f: impl FnMut(usize, &mut [f64])) -> Result<Field> {
    let grid = u.grid().clone();
    let n = grid.n();
    let mut out = Field::undefined(&grid, m_out);
    if n <= 2 * reach {
        return Err(Error::GridTooCoarse(format!("lattice of {n} nodes per axis")));
    }
    let mut any = false;
    for i0 in reach..n - reach {
        for i1 in reach..n - reach {
            for i2 in reach..n - reach {
                for i3 in reach..n - reach {
                    let idx = grid.index([i0, i1, i2, i3]);
                    if !u.is_defined(idx) {
                        continue;
                    }
                    let slot = out.at_mut(idx);
                    f(idx, slot);
                    if slot.iter().all(|v| v.is_finite()) {
                        any = true;
                    } else {
                        slot.fill(f64::NAN);
                    }
                }
            }
        }
    }
    if !any {
        return Err(Error::GridTooCoarse("no node has a complete stencil".into()));
    }
    Ok(out)
}

#[inline]
fn d1(v: &[f64], m: usize, s: usize, inv2h: f64, idx: usize, c: usize) -> f64 {
    (v[(idx + s) * m + c] - v[(idx - s) * m + c]) * inv2h
}

#[inline]
fn d2(v: &[f64], m: usize, sa: usize, sb: usize, h: f64, idx: usize, c: usize) -> f64 {
    if sa == sb {
        (v[(idx + sa) * m + c] - 2.0 * v[idx * m + c] + v[(idx - sa) * m + c]) / (h * h)
    } else {
        (v[(idx + sa + sb) * m + c] - v[(idx + sa - sb) * m + c] - v[(idx - sa + sb) * m + c]
            + v[(idx - sa - sb) * m + c])
            / (4.0 * h * h)
    }
}

/// ∂_a u, same component count as `u`.
pub fn partial(u: &Field, a: usize) -> Result<Field> {
    let m = u.components();
    let s = u.grid().strides()[a];
    let inv2h = 0.5 / u.grid().h();
    let v = u.values();
    stencil_map(u, m, 1, |idx, out| {
        for c in 0..m {
            out[c] = d1(v, m, s, inv2h, idx, c);
        }
    })
}

/// ∇u with layout `c * 4 + a`.
pub fn gradient(u: &Field) -> Result<Field> {
    let m = u.components();
    let st = u.grid().strides();
    let inv2h = 0.5 / u.grid().h();
    let v = u.values();
    stencil_map(u, 4 * m, 1, |idx, out| {
        for c in 0..m {
            for a in 0..4 {
                out[c * 4 + a] = d1(v, m, st[a], inv2h, idx, c);
            }
        }
    })
}

/// Five-point-per-axis Laplacian.
pub fn laplacian(u: &Field) -> Result<Field> {
    let m = u.components();
    let st = u.grid().strides();
    let h = u.grid().h();
    let v = u.values();
    stencil_map(u, m, 1, |idx, out| {
        for c in 0..m {
            out[c] = (0..4).map(|a| d2(v, m, st[a], st[a], h, idx, c)).sum();
        }
    })
}

/// Δ_h Δ_h u.
pub fn bilaplacian(u: &Field) -> Result<Field> {
    laplacian(&laplacian(u)?)
}

/// ∇²u with layout `c * 16 + a * 4 + b`.
pub fn hessian(u: &Field) -> Result<Field> {
    let m = u.components();
    let st = u.grid().strides();
    let h = u.grid().h();
    let v = u.values();
    stencil_map(u, 16 * m, 1, |idx, out| {
        for c in 0..m {
            for a in 0..4 {
                for b in a..4 {
                    let val = d2(v, m, st[a], st[b], h, idx, c);
                    out[c * 16 + a * 4 + b] = val;
                    out[c * 16 + b * 4 + a] = val;
                }
            }
        }
    })
}

/// Pointwise Frobenius norm |∇²u| over all components, without storing the
/// Hessian.
pub fn hessian_norm(u: &Field) -> Result<Field> {
    let m = u.components();
    let st = u.grid().strides();
    let h = u.grid().h();
    let v = u.values();
    stencil_map(u, 1, 1, |idx, out| {
        let mut acc = 0.0;
        for c in 0..m {
            for a in 0..4 {
                for b in 0..4 {
                    acc += d2(v, m, st[a], st[b], h, idx, c).powi(2);
                }
            }
        }
        out[0] = acc.sqrt();
    })
}

/// Σ_a ∂_a v_{c,a} for a field with layout `c * 4 + a`.
pub fn divergence(v: &Field) -> Result<Field> {
    let m4 = v.components();
    if m4 % 4 != 0 {
        return Err(Error::InputMissing(format!("divergence needs 4m components, got {m4}")));
    }
    let m = m4 / 4;
    let st = v.grid().strides();
    let inv2h = 0.5 / v.grid().h();
    let vals = v.values();
    stencil_map(v, m, 1, |idx, out| {
        for c in 0..m {
            out[c] = (0..4).map(|a| d1(vals, m4, st[a], inv2h, idx, c * 4 + a)).sum();
        }
    })
}

/// Radial first and second derivatives x̂·∇u and x̂ᵀ∇²u x̂, layout
/// `c * 2 + {0, 1}`; both are 0 at the origin.
pub fn radial_derivatives(u: &Field) -> Result<Field> {
    let grid = u.grid().clone();
    let m = u.components();
    let st = grid.strides();
    let h = grid.h();
    let inv2h = 0.5 / h;
    let v = u.values();
    stencil_map(u, 2 * m, 1, |idx, out| {
        let x = grid.position(idx);
        let r = x.iter().map(|t| t * t).sum::<f64>().sqrt();
        if r == 0.0 {
            out.fill(0.0);
            return;
        }
        let xh = [x[0] / r, x[1] / r, x[2] / r, x[3] / r];
        for c in 0..m {
            out[2 * c] = (0..4).map(|a| xh[a] * d1(v, m, st[a], inv2h, idx, c)).sum();
            let mut acc = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    acc += xh[a] * xh[b] * d2(v, m, st[a], st[b], h, idx, c);
                }
            }
            out[2 * c + 1] = acc;
        }
    })
}

/// x̂x̂x̂ : ∇³u, the third radial derivative, evaluated as the centered
/// difference of the discrete Hessian. Reach is two nodes.
pub fn third_radial_derivative(u: &Field) -> Result<Field> {
    let grid = u.grid().clone();
    let m = u.components();
    let st = grid.strides();
    let h = grid.h();
    let inv2h = 0.5 / h;
    let v = u.values();
    stencil_map(u, m, 2, |idx, out| {
        let x = grid.position(idx);
        let r = x.iter().map(|t| t * t).sum::<f64>().sqrt();
        if r == 0.0 {
            out.fill(0.0);
            return;
        }
        let xh = [x[0] / r, x[1] / r, x[2] / r, x[3] / r];
        for c in 0..m {
            let mut acc = 0.0;
            for a in 0..4 {
                let mut inner = 0.0;
                for b in 0..4 {
                    for e in 0..4 {
                        let plus = d2(v, m, st[b], st[e], h, idx + st[a], c);
                        let minus = d2(v, m, st[b], st[e], h, idx - st[a], c);
                        inner += xh[b] * xh[e] * (plus - minus) * inv2h;
                    }
                }
                acc += xh[a] * inner;
            }
            out[c] = acc;
        }
    })
}
