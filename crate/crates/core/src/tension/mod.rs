//! Tension fields of the extrinsic and intrinsic bi-energies, the rewritten
//! equations, the normal-form coefficients and the general-Lagrangian term.
//!
//! Projector fields P⊥(u) are sampled pointwise and differentiated on the
//! grid like any other field. Index placement for every contraction is
//! listed in [`CONTRACTION_TABLE`].

mod lagrangian;
mod normal_form;
mod rewrite;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid4::{bilaplacian, divergence, gradient, laplacian, Field, Region};
use crate::manifold::TargetManifold;

pub use lagrangian::{hamiltonian_term, lagrangian_energy, FourForm};
pub use normal_form::{
    assemble_normal_form, reassemble, CcConstants, CcRatios, NormalFormCoefficients, NormalFormCheck,
};
pub use rewrite::{leibniz_check, rewritten_rhs, LeibnizCheck};

/// Largest allowed distance from u to N.
pub const MANIFOLD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Extrinsic,
    Intrinsic,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionEntry {
    pub symbol: &'static str,
    pub meaning: &'static str,
}

pub const CONTRACTION_TABLE: &[ContractionEntry] = &[
    ContractionEntry { symbol: "∇u", meaning: "(∂_i u)^c stored at c*4+i" },
    ContractionEntry { symbol: "∇P⊥", meaning: "(∂_i P⊥)_{cd} stored at (c*k+d)*4+i" },
    ContractionEntry { symbol: "B(u)(∇u,∇u)", meaning: "Σ_i B(u)(∂_i u, ∂_i u)" },
    ContractionEntry { symbol: "⟨Δu,∇P⟩", meaning: "1-form with i-th entry (∂_i P) Δu, P acting on the left" },
    ContractionEntry { symbol: "∇·⟨Δu,∇P⟩", meaning: "Σ_i ∂_i((∂_i P) Δu)" },
    ContractionEntry { symbol: "⟨ΔP,Δu⟩", meaning: "(ΔP) Δu" },
    ContractionEntry { symbol: "∇P⊥∇u", meaning: "X = Σ_i (∂_i P⊥) ∂_i u" },
    ContractionEntry { symbol: "∇P⊥∇(∇P⊥∇u)", meaning: "Σ_i (∂_i P⊥) ∂_i X" },
    ContractionEntry { symbol: "ω", meaning: "ω_i = (∂_i P) P⊥ − P⊥ (∂_i P), antisymmetric k×k per direction" },
    ContractionEntry { symbol: "V∇u", meaning: "Σ_i V_i ∂_i u" },
    ContractionEntry { symbol: "div(w∇u)", meaning: "Σ_a ∂_a(Σ_b w_ab ∂_b u), w_ab stored at e*16+a*4+b" },
    ContractionEntry { symbol: "∇Ω∇u", meaning: "Σ_i (∂_i Ω) ∂_i u" },
    ContractionEntry { symbol: "F∇u", meaning: "Σ_i F_i ∂_i u" },
    ContractionEntry { symbol: "∂P⊥/∂y^l", meaning: "derivative of y ↦ P⊥(y) along the l-th ambient axis, evaluated at u" },
    ContractionEntry { symbol: "H", meaning: "dΩ(U,V,W,X,Y) = U_i H^i(V,W,X,Y), evaluated on (∂_1u,∂_2u,∂_3u,∂_4u)" },
];

/// A field with the L² norm of each contributing term.
#[derive(Debug, Clone)]
pub struct TensionReport {
    pub field: Field,
    pub terms: BTreeMap<String, f64>,
}

/// Largest distance |u − Π(u)| over defined nodes.
pub fn manifold_distance(u: &Field, manifold: &TargetManifold) -> f64 {
    let k = manifold.ambient_dim();
    if u.components() != k {
        return f64::INFINITY;
    }
    let mut proj = vec![0.0; k];
    let mut worst: f64 = 0.0;
    for idx in 0..u.grid().node_count() {
        if !u.is_defined(idx) {
            continue;
        }
        let y = u.at(idx);
        let d = match manifold.nearest_point_into(y, &mut proj) {
            Ok(()) => y.iter().zip(&proj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
            Err(_) => f64::INFINITY,
        };
        worst = worst.max(d);
    }
    worst
}

pub(crate) fn check_manifold_valued(u: &Field, manifold: &TargetManifold) -> Result<()> {
    let distance = manifold_distance(u, manifold);
    if distance > MANIFOLD_TOL || distance.is_nan() {
        return Err(Error::NotManifoldValued { distance });
    }
    Ok(())
}

/// Derivative fields shared by every assembly in this module.
pub(crate) struct Geometry {
    pub k: usize,
    pub u: Field,
    /// c*4+i
    pub du: Field,
    pub lap_u: Field,
    /// row-major k×k
    pub pperp: Field,
    /// (c*k+d)*4+i
    pub dpperp: Field,
    pub lap_pperp: Field,
}

impl Geometry {
    pub fn new(u: &Field, manifold: &TargetManifold) -> Result<Self> {
        check_manifold_valued(u, manifold)?;
        let k = manifold.ambient_dim();
        let pperp = u.map(k * k, |_, y, out| manifold.normal_projector_into(y, out));
        Ok(Self {
            k,
            u: u.clone(),
            du: gradient(u)?,
            lap_u: laplacian(u)?,
            dpperp: gradient(&pperp)?,
            lap_pperp: laplacian(&pperp)?,
            pperp,
        })
    }

    /// Σ_i (∂_i P⊥) ∂_i u.
    pub fn x_field(&self) -> Field {
        let k = self.k;
        self.dpperp.zip_map(&self.du, k, |_, dp, du, out| {
            for c in 0..k {
                out[c] = (0..k)
                    .map(|d| (0..4).map(|i| dp[(c * k + d) * 4 + i] * du[d * 4 + i]).sum::<f64>())
                    .sum();
            }
        })
    }

    /// 1-form (∂_i P⊥) Δu, stored c*4+i.
    pub fn dpperp_lap_u(&self) -> Field {
        let k = self.k;
        self.dpperp.zip_map(&self.lap_u, 4 * k, |_, dp, lu, out| {
            for c in 0..k {
                for i in 0..4 {
                    out[c * 4 + i] = (0..k).map(|d| dp[(c * k + d) * 4 + i] * lu[d]).sum();
                }
            }
        })
    }

    /// ω_i = (∂_i P) P⊥ − P⊥ (∂_i P) = P⊥ ∂_i P⊥ − ∂_i P⊥ P⊥, stored (p*k+q)*4+i.
    pub fn omega_form(&self) -> Field {
        let k = self.k;
        self.dpperp.zip_map(&self.pperp, 4 * k * k, |_, dp, pp, out| {
            for p in 0..k {
                for q in 0..k {
                    for i in 0..4 {
                        let mut s = 0.0;
                        for r in 0..k {
                            s += pp[p * k + r] * dp[(r * k + q) * 4 + i] - dp[(p * k + r) * 4 + i] * pp[r * k + q];
                        }
                        out[(p * k + q) * 4 + i] = s;
                    }
                }
            }
        })
    }
}

fn l2(f: &Field) -> f64 {
    f.l2_norm(&Region::Whole)
}

/// Applies the k×k matrix field `m` (row-major) to the vector field `v`.
pub(crate) fn mat_vec(m: &Field, v: &Field, k: usize) -> Field {
    m.zip_map(v, k, |_, a, b, out| {
        for c in 0..k {
            out[c] = (0..k).map(|d| a[c * k + d] * b[d]).sum();
        }
    })
}

/// The four terms of T_e, in assembly order.
fn extrinsic_terms(g: &Geometry, manifold: &TargetManifold) -> Result<Vec<(&'static str, Field)>> {
    let k = g.k;
    let bilap = bilaplacian(&g.u)?;
    let b_field = g.u.zip_map(&g.du, k, |_, y, du, out| {
        let mut n = [0.0; 16];
        let dy = manifold.normal_into(y, &mut n[..k]);
        let metric = manifold.metric();
        let s: f64 = (0..k).map(|c| (0..4).map(|i| du[c * 4 + i] * du[c * 4 + i]).sum::<f64>() * metric[c]).sum();
        for c in 0..k {
            out[c] = s / dy * n[c];
        }
    });
    let b_term = laplacian(&b_field)?;
    // (∂_i P) Δu = −(∂_i P⊥) Δu
    let div_term = divergence(&g.dpperp_lap_u())?.scale(2.0);
    let proj_term = mat_vec(&g.lap_pperp, &g.lap_u, k).scale(-1.0);
    Ok(vec![
        ("bilaplacian", bilap),
        ("b_term", b_term),
        ("divergence_term", div_term),
        ("projector_laplacian_term", proj_term),
    ])
}

/// The two extra intrinsic terms, each already carrying the sign with which
/// it enters T_i = T_e + a + b.
fn intrinsic_terms(g: &Geometry, manifold: &TargetManifold) -> Result<Vec<(&'static str, Field)>> {
    let k = g.k;
    let metric = manifold.metric().to_vec();
    let s_field = g.du.map(1, |_, du, out| {
        out[0] = (0..k).map(|c| (0..4).map(|i| du[c * 4 + i] * du[c * 4 + i]).sum::<f64>() * metric[c]).sum();
    });
    let tangential = |v: &Field| -> Field {
        let nv = mat_vec(&g.pperp, v, k);
        v.sub(&nv)
    };
    // a = −P ∇_y(½|B|²) with ∂u frozen
    let grad_y = g.u.zip_map(&s_field, k, |_, y, s, out| manifold.half_sq_b_gradient_into(y, s[0], out));
    let term_a = tangential(&grad_y).scale(-1.0);
    // b = 2 P Σ_i ∂_i(s D ∂_i u / |D u|²)
    let kfield = g.u.zip_map(&g.du, 4 * k, |_, y, du, out| {
        let dy2: f64 = y.iter().zip(&metric).map(|(v, d)| (d * v) * (d * v)).sum();
        let s: f64 = (0..k).map(|c| (0..4).map(|i| du[c * 4 + i] * du[c * 4 + i]).sum::<f64>() * metric[c]).sum();
        for c in 0..k {
            for i in 0..4 {
                out[c * 4 + i] = s * metric[c] * du[c * 4 + i] / dy2;
            }
        }
    });
    let term_b = tangential(&divergence(&kfield)?).scale(2.0);
    Ok(vec![("intrinsic_gradient_term", term_a), ("intrinsic_divergence_term", term_b)])
}

fn sum_terms(terms: &[(&'static str, Field)]) -> TensionReport {
    let mut field = terms[0].1.clone();
    for (_, t) in &terms[1..] {
        field = field.add(t);
    }
    let terms = terms.iter().map(|(name, f)| (name.to_string(), l2(&f.restrict_to(&field)))).collect();
    TensionReport { field, terms }
}

/// T_e(u) = Δ²u + Δ(Σ_i B(u)(∂_iu, ∂_iu)) − 2∇·⟨Δu, ∇P⟩ + ⟨ΔP, Δu⟩, which is
/// P(u)Δ²u in the continuum.
pub fn tension_extrinsic(u: &Field, manifold: &TargetManifold) -> Result<TensionReport> {
    let g = Geometry::new(u, manifold)?;
    Ok(sum_terms(&extrinsic_terms(&g, manifold)?))
}

/// T_i(u) = T_e(u) − P∇_y(½|B|²) + P∇·(∂(½|B|²)/∂∇u), with B = Σ_i B(u)(∂_iu, ∂_iu).
/// On spheres the first extra term vanishes and the second is 2P∇·(|∇u|²∇u).
pub fn tension_intrinsic(u: &Field, manifold: &TargetManifold) -> Result<TensionReport> {
    let g = Geometry::new(u, manifold)?;
    let mut terms = extrinsic_terms(&g, manifold)?;
    terms.extend(intrinsic_terms(&g, manifold)?);
    Ok(sum_terms(&terms))
}

pub(crate) fn intrinsic_extra(g: &Geometry, manifold: &TargetManifold) -> Result<Field> {
    let t = intrinsic_terms(g, manifold)?;
    Ok(t[0].1.add(&t[1].1))
}
