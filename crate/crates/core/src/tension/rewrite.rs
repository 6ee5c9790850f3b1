//! The rewritten equation Δ²u = P⊥Δ²u + T(u) with P⊥Δ²u expanded through
//! product rules into terms with at most three derivatives on u.

use serde::Serialize;

use super::{intrinsic_extra, mat_vec, sum_terms, Geometry, TensionReport, Variant};
use crate::error::Result;
use crate::grid4::{bilaplacian, divergence, gradient, laplacian, Field, Region};
use crate::manifold::TargetManifold;

/// Σ_i (∂_i P⊥) g_i for a vector-valued 1-form g stored c*4+i.
fn dpperp_dot(g: &Geometry, form: &Field) -> Field {
    let k = g.k;
    g.dpperp.zip_map(form, k, |_, dp, f, out| {
        for c in 0..k {
            out[c] = (0..k)
                .map(|d| (0..4).map(|i| dp[(c * k + d) * 4 + i] * f[d * 4 + i]).sum::<f64>())
                .sum();
        }
    })
}

pub(crate) fn extrinsic_rhs_terms(g: &Geometry) -> Result<Vec<(&'static str, Field)>> {
    let k = g.k;
    let x = g.x_field();
    let t1 = laplacian(&x)?.scale(-1.0);
    let y = g.dpperp_lap_u();
    let t2 = divergence(&y)?.scale(-1.0);
    let dx = gradient(&x)?;
    let t3 = dpperp_dot(g, &dx).scale(2.0);
    let t4 = dpperp_dot(g, &y).scale(2.0);
    let omega = g.omega_form();
    let dlap = gradient(&g.lap_u)?;
    let t5 = omega.zip_map(&dlap, k, |_, w, dl, out| {
        for p in 0..k {
            out[p] = -(0..k).map(|q| (0..4).map(|i| w[(p * k + q) * 4 + i] * dl[q * 4 + i]).sum::<f64>()).sum::<f64>();
        }
    });
    Ok(vec![
        ("laplacian_x", t1),
        ("divergence_dpperp_lap_u", t2),
        ("dpperp_gradient_x", t3),
        ("dpperp_dpperp_lap_u", t4),
        ("omega_gradient_lap_u", t5),
    ])
}

/// Right-hand side of Δ²u = rhs. In the continuum the extrinsic rhs equals
/// P⊥Δ²u for every N-valued u; the intrinsic one adds the extra terms of T_i
/// with opposite sign.
pub fn rewritten_rhs(u: &Field, manifold: &TargetManifold, variant: Variant) -> Result<TensionReport> {
    let g = Geometry::new(u, manifold)?;
    let mut terms = extrinsic_rhs_terms(&g)?;
    if variant == Variant::Intrinsic {
        terms.push(("intrinsic_terms", intrinsic_extra(&g, manifold)?.scale(-1.0)));
    }
    Ok(sum_terms(&terms))
}

/// div(P⊥∇Δu) − ∇P⊥·∇Δu against P⊥Δ²u.
#[derive(Debug, Clone, Serialize)]
pub struct LeibnizCheck {
    pub lhs_norm: f64,
    pub rhs_norm: f64,
    pub residual_norm: f64,
    pub relative_residual: f64,
}

pub fn leibniz_check(u: &Field, manifold: &TargetManifold, region: &Region) -> Result<LeibnizCheck> {
    let g = Geometry::new(u, manifold)?;
    let k = g.k;
    let dlap = gradient(&g.lap_u)?;
    let proj = g.pperp.zip_map(&dlap, 4 * k, |_, pp, dl, out| {
        for c in 0..k {
            for i in 0..4 {
                out[c * 4 + i] = (0..k).map(|d| pp[c * k + d] * dl[d * 4 + i]).sum();
            }
        }
    });
    let lhs = divergence(&proj)?.sub(&dpperp_dot(&g, &dlap));
    let rhs = mat_vec(&g.pperp, &bilaplacian(u)?, k);
    let res = lhs.sub(&rhs);
    let lhs_norm = lhs.restrict_to(&res).l2_norm(region);
    let rhs_norm = rhs.restrict_to(&res).l2_norm(region);
    let residual_norm = res.l2_norm(region);
    let relative_residual = if rhs_norm > 0.0 { residual_norm / rhs_norm } else { residual_norm };
    Ok(LeibnizCheck { lhs_norm, rhs_norm, residual_norm, relative_residual })
}
