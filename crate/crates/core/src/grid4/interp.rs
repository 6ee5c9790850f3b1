//! Tensor-product cubic Lagrange interpolation from the lattice.

use super::annulus::{AnnulusField, AnnulusGrid};
use super::Field;
use crate::error::{Error, Result};
use std::sync::Arc;

fn cubic_weights(t: f64) -> [f64; 4] {
    // nodes at −1, 0, 1, 2
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// Interpolates all components of `u` at `x` into `out`. Exact for
/// polynomials of degree three in each variable; needs the 4⁴ surrounding
/// nodes to be defined.
pub fn interpolate_into(u: &Field, x: &[f64; 4], out: &mut [f64]) -> Result<()> {
    let grid = u.grid();
    let n = grid.n();
    let m = u.components();
    let mut base = [0usize; 4];
    let mut w = [[0.0; 4]; 4];
    for a in 0..4 {
        let s = (x[a] + grid.radius()) / grid.h();
        let i = s.floor();
        if !(i >= 1.0 && i + 2.0 <= (n - 1) as f64) {
            return Err(Error::OutOfSupport(format!("{x:?}")));
        }
        base[a] = i as usize - 1;
        w[a] = cubic_weights(s - i);
    }
    out[..m].fill(0.0);
    let st = grid.strides();
    let origin = grid.index(base);
    for i0 in 0..4 {
        for i1 in 0..4 {
            let w01 = w[0][i0] * w[1][i1];
            for i2 in 0..4 {
                let w012 = w01 * w[2][i2];
                for i3 in 0..4 {
                    let ww = w012 * w[3][i3];
                    let idx = origin + i0 * st[0] + i1 * st[1] + i2 * st[2] + i3;
                    let v = u.at(idx);
                    for c in 0..m {
                        out[c] += ww * v[c];
                    }
                }
            }
        }
    }
    if out[..m].iter().any(|v| !v.is_finite()) {
        return Err(Error::OutOfSupport(format!("stencil around {x:?} leaves the defined region")));
    }
    Ok(())
}

pub fn interpolate_at(u: &Field, x: &[f64; 4]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; u.components()];
    interpolate_into(u, x, &mut out)?;
    Ok(out)
}

/// Samples `u` on every node of `annulus`.
pub fn polar_resample(u: &Field, annulus: &Arc<AnnulusGrid>) -> Result<AnnulusField> {
    let m = u.components();
    let mut values = vec![0.0; annulus.node_count() * m];
    let nq = annulus.sphere().len();
    for j in 0..annulus.shell_count() {
        for q in 0..nq {
            let at = (j * nq + q) * m;
            interpolate_into(u, &annulus.point(j, q), &mut values[at..at + m])?;
        }
    }
    AnnulusField::from_values(annulus, m, values)
}
