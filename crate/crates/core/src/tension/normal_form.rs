//! Normal form Δ²u = Δ(V∇u) + div(w∇u) + ∇Ω∇u + F∇u of the extrinsic
//! equation, assembled term by term from the rewritten right-hand side.

use serde::Serialize;

use super::rewrite::extrinsic_rhs_terms;
use super::{sum_terms, Geometry};
use crate::elliptic::hodge_decompose;
use crate::error::Result;
use crate::grid4::{divergence, gradient, hessian, hessian_norm, laplacian, Field, Region};
use crate::manifold::TargetManifold;

#[derive(Debug, Clone)]
pub struct NormalFormCoefficients {
    pub k: usize,
    /// k×k per direction, (p*k+q)*4+i.
    pub v: Field,
    /// k×k per direction pair, (p*k+q)*16+a*4+b.
    pub w: Field,
    /// Antisymmetric k×k, p*k+q.
    pub omega: Field,
    /// k×k per direction, (p*k+q)*4+i.
    pub f: Field,
    /// ‖ω − dα − d*β‖₂ of the Hodge split, absolute and relative.
    pub hodge_remainder: f64,
    pub hodge_relative_remainder: f64,
}

impl NormalFormCoefficients {
    /// max |Ω + Ωᵀ| over defined nodes.
    pub fn antisymmetry_defect(&self) -> f64 {
        let k = self.k;
        let mut worst: f64 = 0.0;
        for idx in 0..self.omega.grid().node_count() {
            if !self.omega.is_defined(idx) {
                continue;
            }
            let o = self.omega.at(idx);
            for p in 0..k {
                for q in 0..k {
                    worst = worst.max((o[p * k + q] + o[q * k + p]).abs());
                }
            }
        }
        worst
    }
}

/// Numerators and denominators of the pointwise coefficient bounds, stored as
/// two-component fields (numerator, denominator):
/// |V| against |∇u|, |w| + |Ω| against |∇²u| + |∇u|², |F| against
/// (|∇²u| + |∇u|²)|∇u|.
#[derive(Debug, Clone)]
pub struct CcRatios {
    pub v: Field,
    pub w: Field,
    pub f: Field,
}

/// Smallest constants for which the pointwise bounds hold on a region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CcConstants {
    pub c_v: f64,
    pub c_w: f64,
    pub c_f: f64,
}

/// Ratios are taken only where the denominator exceeds this fraction of its
/// maximum over the region.
pub const CC_FLOOR: f64 = 1e-3;

fn max_ratio(pair: &Field, region: &Region, accept: &dyn Fn(&[f64; 4]) -> bool) -> f64 {
    let g = pair.grid();
    let mut den_max: f64 = 0.0;
    g.for_each_node(|idx, x| {
        if pair.is_defined(idx) && region.contains(&x) && accept(&x) {
            den_max = den_max.max(pair.at(idx)[1]);
        }
    });
    let mut worst: f64 = 0.0;
    g.for_each_node(|idx, x| {
        if pair.is_defined(idx) && region.contains(&x) && accept(&x) {
            let v = pair.at(idx);
            if v[1] > CC_FLOOR * den_max {
                worst = worst.max(v[0] / v[1]);
            }
        }
    });
    worst
}

impl CcRatios {
    pub fn constants(&self, region: &Region) -> CcConstants {
        self.constants_where(region, &|_| true)
    }

    /// As [`CcRatios::constants`], restricted to nodes accepted by `accept`
    /// (e.g. the nodes of a coarser lattice).
    pub fn constants_where(&self, region: &Region, accept: &dyn Fn(&[f64; 4]) -> bool) -> CcConstants {
        CcConstants {
            c_v: max_ratio(&self.v, region, accept),
            c_w: max_ratio(&self.w, region, accept),
            c_f: max_ratio(&self.f, region, accept),
        }
    }
}

fn frob(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Builds V, w, Ω, F from the derivative fields of u:
/// V_i = −2∂_iP⊥ − ω_i, w_ab = 2∂_a∂_bP⊥ − δ_ab ΔP⊥ + 2∂_aω_b, Ω = −Δα with α
/// from the Hodge split of ω, and F = F₁ + F₂ + F₃ with
/// F₁_i = −(Δω_i − ∂_i Σ_j∂_jω_j), (F₂_i)^l = 2 ∂P⊥/∂y^l ∂_i X,
/// (F₃_i)^l = 2 ∂P⊥/∂y^l (∂_iP⊥)Δu.
pub fn assemble_normal_form(u: &Field, manifold: &TargetManifold) -> Result<NormalFormCoefficients> {
    let g = Geometry::new(u, manifold)?;
    let k = g.k;
    let kk = k * k;
    let omega_form = g.omega_form();
    let v = g.dpperp.zip_map(&omega_form, 4 * kk, |_, dp, w, out| {
        for c in 0..4 * kk {
            out[c] = -2.0 * dp[c] - w[c];
        }
    });
    let w = {
        let hess = hessian(&g.pperp)?;
        let dw = gradient(&omega_form)?;
        let partial_w = hess.zip_map(&g.lap_pperp, 16 * kk, |_, hs, lp, out| {
            for e in 0..kk {
                for a in 0..4 {
                    for b in 0..4 {
                        let delta = if a == b { lp[e] } else { 0.0 };
                        out[e * 16 + a * 4 + b] = 2.0 * hs[e * 16 + a * 4 + b] - delta;
                    }
                }
            }
        });
        partial_w.zip_map(&dw, 16 * kk, |_, pw, d, out| {
            for e in 0..kk {
                for a in 0..4 {
                    for b in 0..4 {
                        out[e * 16 + a * 4 + b] = pw[e * 16 + a * 4 + b] + 2.0 * d[(e * 4 + b) * 4 + a];
                    }
                }
            }
        })
    };
    let hodge = hodge_decompose(&omega_form)?;
    let omega = laplacian(&hodge.alpha)?.scale(-1.0);
    let div_omega = divergence(&omega_form)?;
    let f1 = laplacian(&omega_form)?.sub(&gradient(&div_omega)?).scale(-1.0);
    let x = g.x_field();
    let dx = gradient(&x)?;
    let y = g.dpperp_lap_u();
    let mut f23 = dx.zip_map(&y, 4 * kk, |_, _, _, out| out.fill(0.0));
    let mut dpl = vec![0.0; kk];
    let mut axis = vec![0.0; k];
    for idx in 0..u.grid().node_count() {
        if !f23.is_defined(idx) {
            continue;
        }
        let yu = u.at(idx);
        let (dxv, yv) = (dx.at(idx), y.at(idx));
        let slot = f23.at_mut(idx);
        for l in 0..k {
            axis.fill(0.0);
            axis[l] = 1.0;
            manifold.normal_projector_derivative_into(yu, &axis, &mut dpl);
            for c in 0..k {
                for i in 0..4 {
                    let s: f64 = (0..k).map(|d| dpl[c * k + d] * (dxv[d * 4 + i] + yv[d * 4 + i])).sum();
                    slot[(c * k + l) * 4 + i] = 2.0 * s;
                }
            }
        }
    }
    let f = f1.add(&f23);
    Ok(NormalFormCoefficients {
        k,
        v,
        w,
        omega,
        f,
        hodge_remainder: hodge.remainder_norm,
        hodge_relative_remainder: hodge.relative_remainder,
    })
}

/// Σ_i M_i ∂_i u for a k×k matrix 1-form M stored (p*k+q)*4+i.
fn form_dot_du(m: &Field, du: &Field, k: usize) -> Field {
    m.zip_map(du, k, |_, mv, d, out| {
        for p in 0..k {
            out[p] = (0..k).map(|q| (0..4).map(|i| mv[(p * k + q) * 4 + i] * d[q * 4 + i]).sum::<f64>()).sum();
        }
    })
}

/// Δ(V∇u) + div(w∇u) + ∇Ω∇u + F∇u.
pub fn reassemble(coeffs: &NormalFormCoefficients, u: &Field) -> Result<Field> {
    let k = coeffs.k;
    let du = gradient(u)?;
    let r1 = laplacian(&form_dot_du(&coeffs.v, &du, k))?;
    let wdu = coeffs.w.zip_map(&du, 4 * k, |_, w, d, out| {
        for p in 0..k {
            for a in 0..4 {
                out[p * 4 + a] = (0..k)
                    .map(|q| (0..4).map(|b| w[(p * k + q) * 16 + a * 4 + b] * d[q * 4 + b]).sum::<f64>())
                    .sum();
            }
        }
    });
    let r2 = divergence(&wdu)?;
    let r3 = form_dot_du(&gradient(&coeffs.omega)?, &du, k);
    let r4 = form_dot_du(&coeffs.f, &du, k);
    Ok(r1.add(&r2).add(&r3).add(&r4))
}

impl NormalFormCoefficients {
    pub fn cc_ratios(&self, u: &Field) -> Result<CcRatios> {
        let du = gradient(u)?;
        let hn = hessian_norm(u)?;
        let grad_sq = du.map(1, |_, d, o| o[0] = d.iter().map(|a| a * a).sum());
        let second = hn.zip_map(&grad_sq, 1, |_, h, g, o| o[0] = h[0] + g[0]);
        let v = self.v.zip_map(&grad_sq, 2, |_, v, g, o| {
            o[0] = frob(v);
            o[1] = g[0].sqrt();
        });
        let wo = self.w.zip_map(&self.omega, 1, |_, w, om, o| o[0] = frob(w) + frob(om));
        let w = wo.zip_map(&second, 2, |_, a, b, o| {
            o[0] = a[0];
            o[1] = b[0];
        });
        let sg = second.zip_map(&grad_sq, 1, |_, s, g, o| o[0] = s[0] * g[0].sqrt());
        let f = self.f.zip_map(&sg, 2, |_, f, d, o| {
            o[0] = frob(f);
            o[1] = d[0];
        });
        Ok(CcRatios { v, w, f })
    }
}

/// Reassembly against the rewritten right-hand side.
#[derive(Debug, Clone, Serialize)]
pub struct NormalFormCheck {
    pub rhs_norm: f64,
    pub residual_norm: f64,
    pub relative_residual: f64,
    pub hodge_relative_remainder: f64,
    pub antisymmetry_defect: f64,
    pub constants: CcConstants,
}

impl NormalFormCheck {
    pub fn run(u: &Field, manifold: &TargetManifold, region: &Region) -> Result<(Self, NormalFormCoefficients)> {
        let coeffs = assemble_normal_form(u, manifold)?;
        let g = Geometry::new(u, manifold)?;
        let rhs = sum_terms(&extrinsic_rhs_terms(&g)?).field;
        let back = reassemble(&coeffs, u)?;
        let res = back.sub(&rhs);
        let rhs_norm = rhs.restrict_to(&res).l2_norm(region);
        let residual_norm = res.l2_norm(region);
        let check = Self {
            rhs_norm,
            residual_norm,
            relative_residual: if rhs_norm > 0.0 { residual_norm / rhs_norm } else { residual_norm },
            hodge_relative_remainder: coeffs.hodge_relative_remainder,
            antisymmetry_defect: coeffs.antisymmetry_defect(),
            constants: coeffs.cc_ratios(u)?.constants(region),
        };
        Ok((check, coeffs))
    }
}
