//! Both sides of the Pohozaev identities on annuli A = B_R ∖ B_r.
//!
//! With Q = ½(Δu)² − ∂²_ν u Δu + ∂_ν u ∂_νΔu − ∂_ν u Δu/ρ, integration by
//! parts gives ρ∫_{∂B_ρ} Q dσ = ∫_{B_ρ} (x·∇u)·Δ²u dx for every smooth u, and
//! the radial/angular split of Δu turns ∫_A Q into
//! −bulk_lhs + bulk_rhs_angular + boundary_terms. For an f-approximate map
//! (x·∇u)·Δ²u = (x·∇u)·f, so dividing by ρ and integrating from r to R gives
//! ∫_A Q = ∫_{B_R} (x·∇u)·f ln(R / max(|x|, r)) dx. The forcing term below is
//! minus that integral. Exact maps have f = 0 and recover the classical
//! identity; the log-weighted forcing term is our extension to approximate
//! maps.
//!
//! Annulus integrals use polar resampling onto geometric shells; the forcing
//! integral over B_R is a lattice sum (its integrand vanishes on ∂B_R).

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid4::{
    bilaplacian, gradient, integrate, laplacian, polar_resample, radial_angular_split, radial_derivatives,
    third_radial_derivative, AnnulusField, AnnulusGrid, Field, Region,
};
use crate::manifold::TargetManifold;
use crate::s3harmonics::{AnnulusSampling, SphericalHarmonicBasis};
use crate::tension::{check_manifold_valued, FourForm, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnnulusBounds {
    pub inner: f64,
    pub outer: f64,
}

impl AnnulusBounds {
    pub fn new(inner: f64, outer: f64) -> Result<Self> {
        if !(inner > 0.0 && outer > inner) {
            return Err(Error::ConfigInvalid(format!("annulus needs 0 < r < R, got ({inner}, {outer})")));
        }
        Ok(Self { inner, outer })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PohozaevReport {
    pub variant: Variant,
    pub inner: f64,
    pub outer: f64,
    /// ∫_A 3/2 (∂²_ν u)² + (∂_ν u)²/(2ρ²)
    pub bulk_lhs: f64,
    /// ∫_A (Δ_{S³}u)²/(2ρ⁴) + ∂_νΔ_{S³}u ∂_ν u/ρ²
    pub bulk_rhs_angular: f64,
    /// [∫_{∂B_R} − ∫_{∂B_r}] (∂_ν u ∂²_ν u − (∂_ν u)²/(2ρ)) dσ
    pub boundary_terms: f64,
    /// −∫_{B_R} (x·∇u)·P(u)f ln(R/max(|x|, r)) dx
    pub forcing_term: f64,
    /// The same with f in place of P(u)f.
    pub forcing_term_unprojected: f64,
    /// Intrinsic correction ∫_A (2 b ⟨∂_ν u, D ∂_ν u⟩ − ½|B|²) with
    /// b = Σ_i⟨∂_iu, D∂_iu⟩/|Du|²; 0 for the extrinsic identity.
    pub intrinsic_term: f64,
    /// bulk_lhs − bulk_rhs_angular − boundary_terms − forcing_term − intrinsic_term
    pub residual: f64,
    pub relative_residual: f64,
    /// True when a nonzero forcing enters, i.e. the identity is used beyond
    /// exact biharmonic maps.
    pub approximate_map_extension: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MasterIdentity {
    /// ∫_A (x·∇u)·Δ²u dx
    pub lhs: f64,
    /// R∫_{∂B_R} Q dσ − r∫_{∂B_r} Q dσ
    pub rhs: f64,
    pub residual: f64,
}

/// Per-component blocks of the packed Cartesian data.
const U: usize = 0;
const UR: usize = 1;
const URR: usize = 2;
const URRR: usize = 3;
const LAP: usize = 4;
const LAPR: usize = 5;
const BLOCKS: usize = 6;

/// Packs u, ρ∂_ν u, ρ²∂²_ν u, ρ³∂³_ν u, Δu, ρ∂_νΔu and ∇u (6k + 4k
/// components) on the nodes where all are defined. The ρ-weighted radial
/// derivatives are polynomial whenever u is, so they interpolate well near
/// small shells.
fn radial_data(u: &Field) -> Result<Field> {
    let k = u.components();
    let rd = radial_derivatives(u)?;
    let u3 = third_radial_derivative(u)?;
    let lap = laplacian(u)?;
    let lap_r = radial_derivatives(&lap)?;
    let du = gradient(u)?;
    let grid = u.grid().clone();
    let m = BLOCKS * k + 4 * k;
    let mut out = Field::undefined(&grid, m);
    for idx in 0..grid.node_count() {
        if !(u3.is_defined(idx) && lap_r.is_defined(idx) && rd.is_defined(idx) && du.is_defined(idx)) {
            continue;
        }
        let r = rho(&grid.position(idx));
        let slot = out.at_mut(idx);
        for c in 0..k {
            slot[U * k + c] = u.at(idx)[c];
            slot[UR * k + c] = r * rd.at(idx)[2 * c];
            slot[URR * k + c] = r * r * rd.at(idx)[2 * c + 1];
            slot[URRR * k + c] = r * r * r * u3.at(idx)[c];
            slot[LAP * k + c] = lap.at(idx)[c];
            slot[LAPR * k + c] = r * lap_r.at(idx)[2 * c];
        }
        slot[BLOCKS * k..].copy_from_slice(du.at(idx));
    }
    Ok(out)
}

/// Polar resampling of [`radial_data`] with the ρ weights divided out again.
fn resample_radial(u: &Field, annulus: &Arc<AnnulusGrid>) -> Result<AnnulusField> {
    let k = u.components();
    let data = polar_resample(&radial_data(u)?, annulus)?;
    Ok(data.map(data.components(), |x, v, out| {
        out.copy_from_slice(v);
        let r = rho(x);
        for (block, power) in [(UR, 1), (URR, 2), (URRR, 3), (LAPR, 1)] {
            let scale = r.powi(power);
            out[block * k..(block + 1) * k].iter_mut().for_each(|t| *t /= scale);
        }
    }))
}

fn annulus_grid(bounds: &AnnulusBounds, sampling: &AnnulusSampling) -> Result<Arc<AnnulusGrid>> {
    AnnulusGrid::geometric([0.0; 4], bounds.inner, bounds.outer, sampling.shell_ratio, sampling.sphere.clone())
}

fn rho(x: &[f64; 4]) -> f64 {
    x.iter().map(|t| t * t).sum::<f64>().sqrt()
}

/// [R³ ∫_{S³} g(Rω) − r³ ∫_{S³} g(rω)] for a scalar annulus field, each shell
/// value additionally multiplied by `weight(ρ)`.
fn shell_difference(g: &AnnulusField, weight: impl Fn(f64) -> f64) -> f64 {
    let grid = g.grid();
    let last = grid.shell_count() - 1;
    let (r, big_r) = (grid.r_in(), grid.r_out());
    let outer: f64 = g.sphere_integral(last).iter().sum();
    let inner: f64 = g.sphere_integral(0).iter().sum();
    big_r.powi(3) * weight(big_r) * outer - r.powi(3) * weight(r) * inner
}

fn q_density(v: &[f64], k: usize, x: &[f64; 4], out: &mut [f64]) {
    let p = rho(x);
    out[0] = (0..k)
        .map(|c| {
            let (ur, urr, lap, lapr) = (v[UR * k + c], v[URR * k + c], v[LAP * k + c], v[LAPR * k + c]);
            0.5 * lap * lap - urr * lap + ur * lapr - ur * lap / p
        })
        .sum();
}

/// ∫_A (x·∇u)·Δ²u against R∫_{∂B_R}Q − r∫_{∂B_r}Q, valid for every smooth u.
pub fn master_identity(u: &Field, bounds: AnnulusBounds, sampling: &AnnulusSampling) -> Result<MasterIdentity> {
    let k = u.components();
    let du = gradient(u)?;
    let xdu_bilap = du.zip_map(&bilaplacian(u)?, 1, |x, d, b, out| {
        out[0] = (0..k).map(|c| b[c] * (0..4).map(|i| x[i] * d[c * 4 + i]).sum::<f64>()).sum();
    });
    let annulus = annulus_grid(&bounds, sampling)?;
    let lhs = polar_resample(&xdu_bilap, &annulus)?.integrate();
    let data = resample_radial(u, &annulus)?;
    let q = data.map(1, |x, v, out| q_density(v, k, x, out));
    let rhs = shell_difference(&q, |p| p);
    Ok(MasterIdentity { lhs, rhs, residual: lhs - rhs })
}

/// −∫_{B_R} (x·∇u)·g ln(R/max(|x|, r)) dx for g = P(u)f and g = f.
fn forcing_terms(u: &Field, f: &Field, manifold: &TargetManifold, bounds: &AnnulusBounds) -> Result<(f64, f64)> {
    let k = u.components();
    if f.components() != k {
        return Err(Error::ConfigInvalid(format!("forcing has {} components, map has {k}", f.components())));
    }
    let du = gradient(u)?;
    let region = Region::ball(bounds.outer);
    let grid = u.grid().clone();
    let mut missing = 0usize;
    grid.for_each_node(|idx, x| {
        if grid.in_ball(&x) && region.contains(&x) && !(du.is_defined(idx) && f.is_defined(idx)) {
            missing += 1;
        }
    });
    if missing > 0 {
        return Err(Error::OutOfSupport(format!("{missing} nodes of B_R lack ∇u or f")));
    }
    let (r, big_r) = (bounds.inner, bounds.outer);
    let mut weighted = Field::undefined(&grid, 2);
    let mut n = vec![0.0; k];
    grid.for_each_node(|idx, x| {
        if !(du.is_defined(idx) && f.is_defined(idx)) {
            return;
        }
        let w = (big_r / rho(&x).max(r)).ln().max(0.0);
        let (d, fv) = (du.at(idx), f.at(idx));
        manifold.normal_into(u.at(idx), &mut n);
        let f_normal: f64 = (0..k).map(|c| n[c] * fv[c]).sum();
        let (mut full, mut proj) = (0.0, 0.0);
        for c in 0..k {
            let xdu: f64 = (0..4).map(|i| x[i] * d[c * 4 + i]).sum();
            full += xdu * fv[c];
            proj += xdu * (fv[c] - f_normal * n[c]);
        }
        weighted.at_mut(idx).copy_from_slice(&[w * proj, w * full]);
    });
    let proj = integrate(&weighted.slice_components(0, 1), &region)?;
    let full = integrate(&weighted.slice_components(1, 1), &region)?;
    Ok((-proj, -full))
}

fn pohozaev(
    u: &Field,
    f: &Field,
    manifold: &TargetManifold,
    bounds: AnnulusBounds,
    sampling: &AnnulusSampling,
    variant: Variant,
) -> Result<PohozaevReport> {
    check_manifold_valued(u, manifold)?;
    let k = u.components();
    let annulus = annulus_grid(&bounds, sampling)?;
    let data = resample_radial(u, &annulus)?;
    let metric = manifold.metric().to_vec();
    let dens = data.map(4, |x, v, out| {
        let p = rho(x);
        let (mut lhs, mut rhs, mut bnd) = (0.0, 0.0, 0.0);
        for c in 0..k {
            let (ur, urr, urrr) = (v[UR * k + c], v[URR * k + c], v[URRR * k + c]);
            let (lap, lapr) = (v[LAP * k + c], v[LAPR * k + c]);
            let ang = p * p * (lap - urr) - 3.0 * p * ur;
            let ang_r = 2.0 * p * (lap - urr) + p * p * (lapr - urrr) - 3.0 * ur - 3.0 * p * urr;
            lhs += 1.5 * urr * urr + ur * ur / (2.0 * p * p);
            rhs += ang * ang / (2.0 * p.powi(4)) + ang_r * ur / (p * p);
            bnd += ur * urr - ur * ur / (2.0 * p);
        }
        out[0] = lhs;
        out[1] = rhs;
        out[2] = bnd;
        out[3] = match variant {
            Variant::Extrinsic => 0.0,
            Variant::Intrinsic => {
                let y = &v[U * k..U * k + k];
                let du = &v[BLOCKS * k..];
                let dy2: f64 = (0..k).map(|c| (metric[c] * y[c]).powi(2)).sum();
                let s: f64 = (0..k).map(|c| metric[c] * (0..4).map(|i| du[c * 4 + i].powi(2)).sum::<f64>()).sum();
                let ur_dur: f64 = (0..k).map(|c| metric[c] * v[UR * k + c].powi(2)).sum();
                2.0 * s * ur_dur / dy2 - 0.5 * s * s / dy2
            }
        };
    });
    let bulk_lhs = dens.map(1, |_, v, o| o[0] = v[0]).integrate();
    let bulk_rhs_angular = dens.map(1, |_, v, o| o[0] = v[1]).integrate();
    let boundary_terms = shell_difference(&dens.map(1, |_, v, o| o[0] = v[2]), |_| 1.0);
    let intrinsic_term = dens.map(1, |_, v, o| o[0] = v[3]).integrate();
    let (forcing_term, forcing_term_unprojected) = forcing_terms(u, f, manifold, &bounds)?;
    let residual = bulk_lhs - bulk_rhs_angular - boundary_terms - forcing_term - intrinsic_term;
    let relative_residual = if bulk_lhs > 0.0 { residual / bulk_lhs } else { residual };
    Ok(PohozaevReport {
        variant,
        inner: bounds.inner,
        outer: bounds.outer,
        bulk_lhs,
        bulk_rhs_angular,
        boundary_terms,
        forcing_term,
        forcing_term_unprojected,
        intrinsic_term,
        residual,
        relative_residual,
        approximate_map_extension: forcing_term != 0.0 || forcing_term_unprojected != 0.0,
    })
}

/// Extrinsic identity for an f-approximate map (T_e(u) = f).
pub fn pohozaev_extrinsic(
    u: &Field,
    f: &Field,
    manifold: &TargetManifold,
    bounds: AnnulusBounds,
    sampling: &AnnulusSampling,
) -> Result<PohozaevReport> {
    pohozaev(u, f, manifold, bounds, sampling, Variant::Extrinsic)
}

/// Intrinsic identity for an f-approximate map (T_i(u) = f). The extra terms
/// of T_i contracted with x·∇u form the divergence of
/// ∂(½|B|²)/∂(∇u)·(x·∇u) − x ½|B|², which enters as a bulk term.
pub fn pohozaev_intrinsic(
    u: &Field,
    f: &Field,
    manifold: &TargetManifold,
    bounds: AnnulusBounds,
    sampling: &AnnulusSampling,
) -> Result<PohozaevReport> {
    pohozaev(u, f, manifold, bounds, sampling, Variant::Intrinsic)
}

/// ρ/2 |B(u)(∇u, ∇u)|² at one point, from u and its gradient (layout c*4+i).
pub fn intrinsic_boundary_density(manifold: &TargetManifold, y: &[f64], du: &[f64], radius: f64) -> f64 {
    let k = manifold.ambient_dim();
    let metric = manifold.metric();
    let dy2: f64 = (0..k).map(|c| (metric[c] * y[c]).powi(2)).sum();
    let s: f64 = (0..k).map(|c| metric[c] * (0..4).map(|i| du[c * 4 + i].powi(2)).sum::<f64>()).sum();
    0.5 * radius * s * s / dy2
}

/// ∫_A 3/2 (∂²_ν u)² + (∂_ν u)²/(2ρ²) from the radial derivatives of the
/// polar-resampled map.
pub fn bulk_lhs_from_split(
    u: &Field,
    bounds: AnnulusBounds,
    sampling: &AnnulusSampling,
    basis: &SphericalHarmonicBasis,
) -> Result<f64> {
    let annulus = annulus_grid(&bounds, sampling)?;
    let split = radial_angular_split(&polar_resample(u, &annulus)?, basis)?;
    let k = u.components();
    let mut values = Vec::with_capacity(annulus.node_count());
    let nq = annulus.sphere().len();
    for j in 0..annulus.shell_count() {
        let p = annulus.radii()[j];
        for q in 0..nq {
            let (ur, urr) = (split.du_dr.at(j, q), split.d2u_dr2.at(j, q));
            values.push((0..k).map(|c| 1.5 * urr[c] * urr[c] + ur[c] * ur[c] / (2.0 * p * p)).sum());
        }
    }
    Ok(AnnulusField::from_values(&annulus, 1, values)?.integrate())
}

/// max over lattice nodes of A of |dΩ(x·∇u, ∂₁u, ∂₂u, ∂₃u, ∂₄u)|, with the
/// first slot expanded as Σ_i x_i dΩ(∂_iu, ∂₁u, …, ∂₄u).
pub fn lagrangian_pohozaev_vanishing(u: &Field, omega: &FourForm, bounds: AnnulusBounds) -> Result<f64> {
    let k = omega.ambient_dim();
    if u.components() != k {
        return Err(Error::ConfigInvalid("4-form and map dimensions differ".into()));
    }
    let du = gradient(u)?;
    let region = Region::annulus(bounds.inner, bounds.outer);
    let mut worst: f64 = 0.0;
    let grid = u.grid().clone();
    grid.for_each_node(|idx, x| {
        if !(du.is_defined(idx) && region.contains(&x)) {
            return;
        }
        let d = du.at(idx);
        let cols: Vec<Vec<f64>> = (0..4).map(|i| (0..k).map(|c| d[c * 4 + i]).collect()).collect();
        let v: f64 = (0..4)
            .map(|i| x[i] * omega.exterior_derivative([&cols[i], &cols[0], &cols[1], &cols[2], &cols[3]]))
            .sum();
        worst = worst.max(v.abs());
    });
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{projected_polynomial_map, CircleMap};
    use crate::grid4::{BallGrid4, S3Quadrature};
    use crate::tension::{tension_extrinsic, tension_intrinsic};

    fn sampling() -> AnnulusSampling {
        AnnulusSampling { shell_ratio: 1.05, sphere: S3Quadrature::new(8, 8, 16) }
    }

    fn bounds() -> AnnulusBounds {
        AnnulusBounds::new(0.1, 0.2).unwrap()
    }

    fn smooth(x: &[f64; 4], out: &mut [f64]) {
        out[0] = (1.3 * x[0] - 0.4 * x[2]).sin() + 0.5 * (0.9 * x[1] + 1.1 * x[3]).cos() + x[0] * x[1] * x[2];
    }

    fn map(grid: &Arc<BallGrid4>) -> Field {
        projected_polynomial_map(grid, 0.6, &[1.0, 0.5, -1.0, 0.7, 0.3, -0.4])
    }

    #[test]
    fn constant_map_gives_zeros() {
        let g = BallGrid4::new(0.75, 1.0 / 12.0).unwrap();
        let u = Field::constant(&g, &[0.0, 0.6, 0.8]);
        let mi = master_identity(&u, bounds(), &sampling()).unwrap();
        assert_eq!((mi.lhs, mi.rhs, mi.residual), (0.0, 0.0, 0.0));
        let m = TargetManifold::sphere(3).unwrap();
        let f = Field::constant(&g, &[0.0; 3]);
        let rep = pohozaev_extrinsic(&u, &f, &m, bounds(), &sampling()).unwrap();
        for v in [rep.bulk_lhs, rep.bulk_rhs_angular, rep.boundary_terms, rep.forcing_term, rep.residual] {
            assert_eq!(v, 0.0);
        }
        assert!(!rep.approximate_map_extension);
    }

    #[test]
    fn quadratic_radial_field_balances() {
        let g = BallGrid4::new(0.75, 1.0 / 12.0).unwrap();
        let u = Field::from_fn(&g, 1, |x, o| o[0] = x.iter().map(|t| t * t).sum());
        let mi = master_identity(&u, bounds(), &sampling()).unwrap();
        assert!(mi.lhs.abs() < 1e-10 && mi.rhs.abs() < 1e-10, "{mi:?}");
    }

    #[test]
    fn master_identity_converges_at_second_order() {
        let mut res = Vec::new();
        let bounds = AnnulusBounds::new(0.15, 0.3).unwrap();
        for h in [1.0 / 16.0, 1.0 / 32.0] {
            let g = BallGrid4::new(0.6875, h).unwrap();
            let u = Field::from_fn(&g, 1, smooth);
            let mi = master_identity(&u, bounds, &sampling()).unwrap();
            res.push(mi.residual.abs() / mi.lhs.abs());
        }
        assert!((res[0] / res[1]).log2() > 1.8, "{res:?}");
    }

    #[test]
    fn exact_forcing_closes_the_extrinsic_identity() {
        let m = TargetManifold::sphere(3).unwrap();
        let mut res = Vec::new();
        let mut last = None;
        for h in [1.0 / 12.0, 1.0 / 24.0] {
            let g = BallGrid4::new(0.75, h).unwrap();
            let u = CircleMap::default().field(&g);
            let f = tension_extrinsic(&u, &m).unwrap().field;
            let rep = pohozaev_extrinsic(&u, &f, &m, bounds(), &sampling()).unwrap();
            assert!(rep.approximate_map_extension);
            res.push(rep.relative_residual.abs());
            last = Some(rep);
        }
        let rep = last.unwrap();
        assert!(rep.forcing_term.abs() > 5.0 * rep.residual.abs(), "{rep:?}");
        assert!((res[0] / res[1]).log2() > 1.5, "{res:?}");
    }

    #[test]
    fn exact_forcing_closes_the_intrinsic_identity() {
        let m = TargetManifold::sphere(3).unwrap();
        let mut res = Vec::new();
        for h in [1.0 / 12.0, 1.0 / 24.0] {
            let g = BallGrid4::new(0.75, h).unwrap();
            let u = map(&g);
            let f = tension_intrinsic(&u, &m).unwrap().field;
            let rep = pohozaev_intrinsic(&u, &f, &m, bounds(), &sampling()).unwrap();
            assert!(rep.intrinsic_term.abs() > 0.0);
            res.push(rep.relative_residual.abs());
        }
        assert!((res[0] / res[1]).log2() > 1.5, "{res:?}");
    }

    #[test]
    fn sphere_intrinsic_density_closed_form() {
        use rand::{Rng, SeedableRng};
        let m = TargetManifold::sphere(3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let mut y: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            y.iter_mut().for_each(|v| *v /= n);
            let du: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
            let r = rng.random_range(0.1..1.0);
            let g2: f64 = du.iter().map(|v| v * v).sum();
            let expect = 0.5 * r * g2 * g2;
            assert!((intrinsic_boundary_density(&m, &y, &du, r) - expect).abs() <= 1e-10 * expect.max(1.0));
        }
    }

    #[test]
    fn radial_split_agrees_with_cartesian_bulk() {
        let m = TargetManifold::sphere(3).unwrap();
        let g = BallGrid4::new(0.75, 1.0 / 16.0).unwrap();
        let u = map(&g);
        let f = tension_extrinsic(&u, &m).unwrap().field;
        let rep = pohozaev_extrinsic(&u, &f, &m, bounds(), &sampling()).unwrap();
        let basis = crate::s3harmonics::build_basis_with(6, &S3Quadrature::new(8, 8, 16)).unwrap();
        let split = bulk_lhs_from_split(&u, bounds(), &sampling(), &basis).unwrap();
        assert!((split - rep.bulk_lhs).abs() < 1e-2 * rep.bulk_lhs, "{split} {}", rep.bulk_lhs);
    }

    #[test]
    fn lagrangian_term_vanishes_pointwise() {
        let g = BallGrid4::new(0.75, 1.0 / 12.0).unwrap();
        let u = crate::fixtures::stereographic_bubble(&g, [0.1, 0.0, 0.0, -0.05], 0.3);
        let form = FourForm::zero(5)
            .with_linear_term(4, [0, 1, 2, 3], 1.3)
            .unwrap()
            .with_linear_term(2, [0, 1, 3, 4], -0.4)
            .unwrap()
            .with_term([0, 1, 2, 4], 2.0)
            .unwrap();
        assert!(lagrangian_pohozaev_vanishing(&u, &form, bounds()).unwrap() <= 1e-12);
        assert_eq!(lagrangian_pohozaev_vanishing(&u, &FourForm::zero(5), bounds()).unwrap(), 0.0);
    }
}
