//! Spherical harmonics on S³, growing/decaying mode expansions of harmonic
//! functions on annuli, and Lorentz norms of radial powers and harmonic
//! functions on annuli.

mod basis;
mod poly;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

pub use basis::{
    build_basis, build_basis_with, eigenvalue, galerkin_spectrum, multiplicity, DegreeSummary, SpectrumCluster,
    SphericalHarmonicBasis, MAX_DEGREE,
};

use crate::error::{Error, Result};
use crate::grid4::{gauss_legendre, radial_angular_split, AnnulusField, AnnulusGrid, S3Quadrature};
use crate::lorentz::{lorentz_norm, LorentzQ, MeasuredSample};

/// Amplitudes of r^l φ and r^{−l−2} φ for one mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeCoefficients {
    pub l: usize,
    pub k: usize,
    pub growing: f64,
    pub decaying: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnnulusExpansion {
    pub center: [f64; 4],
    pub modes: Vec<ModeCoefficients>,
    /// RMS misfit of the two-mode radial fits over all shells and modes,
    /// relative to the RMS of the shell projections.
    pub fit_residual: f64,
    /// Max over shells of the relative L²(S³) mass not captured by the basis.
    pub truncation_residual: f64,
}

impl AnnulusExpansion {
    /// Σ (d⁺ r^l + d⁻ r^{−l−2}) φ(x̂).
    pub fn reconstruct(&self, basis: &SphericalHarmonicBasis, x: &[f64; 4]) -> f64 {
        let y: [f64; 4] = std::array::from_fn(|a| x[a] - self.center[a]);
        let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dir = y.map(|v| v / r);
        let vals = basis.eval(&dir);
        self.modes
            .iter()
            .zip(vals)
            .map(|(m, v)| (m.growing * r.powi(m.l as i32) + m.decaying * r.powi(-(m.l as i32) - 2)) * v)
            .sum()
    }

    /// Largest |coefficient| over all modes except `keep`.
    pub fn max_other(&self, keep: &[(usize, usize)]) -> f64 {
        self.modes
            .iter()
            .filter(|m| !keep.contains(&(m.l, m.k)))
            .map(|m| m.growing.abs().max(m.decaying.abs()))
            .fold(0.0, f64::max)
    }

    pub fn mode(&self, l: usize, k: usize) -> Option<&ModeCoefficients> {
        self.modes.iter().find(|m| m.l == l && m.k == k)
    }
}

/// Shell projections ⟨u(r,·), φ⟩ for every shell (rows) and mode.
fn shell_projections(u: &AnnulusField, basis: &SphericalHarmonicBasis) -> (Vec<Vec<f64>>, Vec<f64>) {
    let g = u.grid();
    let nb = basis.len();
    let evals: Vec<Vec<f64>> = g.sphere().points().iter().map(|x| basis.eval(x)).collect();
    let mut proj = vec![vec![0.0; nb]; g.shell_count()];
    let mut mass = vec![0.0; g.shell_count()];
    for (j, row) in proj.iter_mut().enumerate() {
        for (q, w) in g.sphere().weights().iter().enumerate() {
            let v = u.at(j, q)[0];
            mass[j] += w * v * v;
            for (b, y) in evals[q].iter().enumerate() {
                row[b] += w * v * y;
            }
        }
    }
    (proj, mass)
}

/// Least-squares fit of each shell projection profile to a r^l + b r^{−l−2}.
pub fn annulus_expand(u: &AnnulusField, basis: &SphericalHarmonicBasis) -> Result<AnnulusExpansion> {
    let g = u.grid();
    let ratio = g.r_out() / g.r_in();
    if ratio < 1.5 {
        return Err(Error::IllConditionedFit { ratio });
    }
    if u.components() != 1 {
        return Err(Error::InputMissing("annulus_expand takes a scalar field".into()));
    }
    let (proj, mass) = shell_projections(u, basis);
    let (r_in, r_out) = (g.r_in(), g.r_out());
    let mut modes = Vec::with_capacity(basis.len());
    let mut misfit = 0.0;
    let mut signal = 0.0;
    for (b, (l, k)) in basis.modes().into_iter().enumerate() {
        // scaled regressors keep the 2×2 normal equations well conditioned
        let li = l as i32;
        let f1 = |r: f64| (r / r_out).powi(li);
        let f2 = |r: f64| (r_in / r).powi(li + 2);
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (j, r) in g.radii().iter().enumerate() {
            let (p, q) = (f1(*r), f2(*r));
            let c = proj[j][b];
            a11 += p * p;
            a12 += p * q;
            a22 += q * q;
            b1 += p * c;
            b2 += q * c;
        }
        let det = a11 * a22 - a12 * a12;
        let (s1, s2) = ((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det);
        for (j, r) in g.radii().iter().enumerate() {
            let c = proj[j][b];
            misfit += (s1 * f1(*r) + s2 * f2(*r) - c).powi(2);
            signal += c * c;
        }
        modes.push(ModeCoefficients {
            l,
            k,
            growing: s1 * r_out.powi(-li),
            decaying: s2 * r_in.powi(li + 2),
        });
    }
    let truncation_residual = proj
        .iter()
        .zip(&mass)
        .map(|(row, m)| {
            let captured: f64 = row.iter().map(|c| c * c).sum();
            if *m > 0.0 {
                ((m - captured).max(0.0) / m).sqrt()
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    let fit_residual = if signal > 0.0 { (misfit / signal).sqrt() } else { 0.0 };
    Ok(AnnulusExpansion { center: g.center(), modes, fit_residual, truncation_residual })
}

/// Which norm of f_j = |x|^j to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PowerNorm {
    L2,
    L21,
}

/// Constant in ‖f_j‖₂ ≥ κ_low r^{2+j} / (2√(−2j−4)) for j ≤ −3, 0 < r < 1/8:
/// κ_low = √6 π 2^{2+j}, from ‖f_j‖₂² = 2π²((2r)^{2j+4} − 2^{−2j−4})/(−2j−4)
/// and (4r)^{−2j−4} ≤ 1/4.
pub fn l2_lower_constant(j: i32) -> f64 {
    6f64.sqrt() * PI * 2f64.powi(2 + j)
}

/// Constant in ‖f_j‖_{2,1} ≤ κ_up (2r)^{2+j} for j ≤ −3: κ_up = π(√2 + 2^{7/4}),
/// splitting the rearrangement integral at |x| = 2^{1/4}·2r.
pub fn l21_upper_constant() -> f64 {
    PI * (2f64.sqrt() + 2f64.powf(1.75))
}

/// Norms of f_j(x) = |x|^j on B_{1/2}∖B_{2r} ⊂ ℝ⁴. L² in closed form; L^{2,1}
/// by the radial rearrangement integral, written in s = √t to remove the
/// t^{−1/2} singularity and integrated by composite Gauss–Legendre on a
/// graded mesh.
pub fn power_norms(j: f64, r: f64, kind: PowerNorm) -> Result<f64> {
    if !(r > 0.0 && r < 0.125) {
        return Err(Error::BadRadius(r));
    }
    let (a, b) = (2.0 * r, 0.5);
    match kind {
        PowerNorm::L2 => {
            let e = 2.0 * j + 4.0;
            let integral = if e.abs() < 1e-14 { (b / a).ln() } else { (b.powf(e) - a.powf(e)) / e };
            Ok((2.0 * PI * PI * integral).sqrt())
        }
        PowerNorm::L21 => {
            let c = PI * PI / 2.0;
            let total = c * (b.powi(4) - a.powi(4));
            // f* at measure t: decreasing profile ⇒ sweep outward from the
            // large-value end of the annulus
            let rho_of_t = |t: f64| -> f64 {
                if j <= 0.0 {
                    (a.powi(4) + t / c).powf(0.25)
                } else {
                    (b.powi(4) - t / c).max(0.0).powf(0.25)
                }
            };
            let s_max = total.sqrt();
            // ‖f‖_{2,1} = ∫₀^T t^{−1/2} f*(t) dt = 2 ∫₀^{√T} f*(s²) ds
            let s0 = (c * a.powi(4)).sqrt() * 1e-3;
            let panels = 240;
            let (gx, gw) = gauss_legendre(12);
            let mut edges = vec![0.0];
            let grow = (s_max / s0).powf(1.0 / (panels - 1) as f64);
            let mut e = s0;
            for _ in 0..panels - 1 {
                edges.push(e.min(s_max));
                e *= grow;
            }
            edges.push(s_max);
            let mut acc = 0.0;
            for w in edges.windows(2) {
                let (lo, hi) = (w[0], w[1]);
                let half = 0.5 * (hi - lo);
                let mid = 0.5 * (hi + lo);
                for (x, wt) in gx.iter().zip(&gw) {
                    let s = mid + half * x;
                    acc += wt * half * rho_of_t(s * s).powf(j);
                }
            }
            Ok(2.0 * acc)
        }
    }
}

/// The two Lorentz-type norms of a function on annuli and their ratio.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct L2Ratio {
    pub r: f64,
    /// ‖u‖_{L^{2,1}(B_{1/2}∖B_{2r})}
    pub l21_inner: f64,
    /// ‖u‖_{L²(B₁∖B_r)}
    pub l2_outer: f64,
    pub ratio: f64,
}

/// Settings for the polar grids used by [`lemma_l2_ratio`].
#[derive(Debug, Clone, PartialEq)]
pub struct AnnulusSampling {
    pub shell_ratio: f64,
    pub sphere: S3Quadrature,
}

impl Default for AnnulusSampling {
    fn default() -> Self {
        Self { shell_ratio: 1.05, sphere: S3Quadrature::default() }
    }
}

fn check_boundary_means(u: &dyn Fn(&[f64; 4]) -> f64, r: f64, sphere: &S3Quadrature) -> Result<()> {
    for radius in [1.0, r] {
        let mut mean = 0.0;
        let mut scale: f64 = 0.0;
        for (x, w) in sphere.points().iter().zip(sphere.weights()) {
            let v = u(&x.map(|t| radius * t));
            mean += w * v;
            scale = scale.max(v.abs());
        }
        mean /= sphere.total_weight();
        if mean.abs() > 1e-8 * scale.max(1.0) {
            return Err(Error::MeanNotZero { mean });
        }
    }
    Ok(())
}

/// ‖u‖_{L^{2,1}(B_{1/2}∖B_{2r})} against ‖u‖_{L²(B₁∖B_r)} for a function whose
/// means over ∂B₁ and ∂B_r vanish.
pub fn lemma_l2_ratio(u: &dyn Fn(&[f64; 4]) -> f64, r: f64, sampling: &AnnulusSampling) -> Result<L2Ratio> {
    if !(r > 0.0 && r < 0.125) {
        return Err(Error::BadRadius(r));
    }
    check_boundary_means(u, r, &sampling.sphere)?;
    let inner = AnnulusGrid::geometric([0.0; 4], 2.0 * r, 0.5, sampling.shell_ratio, sampling.sphere.clone())?;
    let outer = AnnulusGrid::geometric([0.0; 4], r, 1.0, sampling.shell_ratio, sampling.sphere.clone())?;
    let fi = AnnulusField::from_fn(&inner, 1, |x, o| o[0] = u(x));
    let fo = AnnulusField::from_fn(&outer, 1, |x, o| o[0] = u(x));
    let l21_inner = lorentz_norm(&MeasuredSample::from_annulus(&fi)?, 2.0, LorentzQ::Finite(1.0))?;
    let l2_outer = fo.map(1, |_, v, o| o[0] = v[0] * v[0]).integrate().max(0.0).sqrt();
    Ok(L2Ratio { r, l21_inner, l2_outer, ratio: ratio_or_zero(l21_inner, l2_outer) })
}

fn ratio_or_zero(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}

/// The same ratio for the tangential derivative of the gradient, ∇^T∇u,
/// computed spectrally from ∇u sampled on each annulus.
pub fn lemma_l2_ratio_angular_hessian(
    grad_u: &dyn Fn(&[f64; 4]) -> [f64; 4],
    r: f64,
    basis: &SphericalHarmonicBasis,
    sampling: &AnnulusSampling,
) -> Result<L2Ratio> {
    if !(r > 0.0 && r < 0.125) {
        return Err(Error::BadRadius(r));
    }
    let tangential = |grid: &Arc<AnnulusGrid>| -> Result<AnnulusField> {
        let du = AnnulusField::from_fn(grid, 4, |x, o| o.copy_from_slice(&grad_u(x)));
        Ok(radial_angular_split(&du, basis)?.angular_grad)
    };
    let inner = AnnulusGrid::geometric([0.0; 4], 2.0 * r, 0.5, sampling.shell_ratio, sampling.sphere.clone())?;
    let outer = AnnulusGrid::geometric([0.0; 4], r, 1.0, sampling.shell_ratio, sampling.sphere.clone())?;
    let ti = tangential(&inner)?;
    let to = tangential(&outer)?;
    let l21_inner = lorentz_norm(&MeasuredSample::from_annulus(&ti)?, 2.0, LorentzQ::Finite(1.0))?;
    let l2_outer = to.map(1, |_, v, o| o[0] = v.iter().map(|t| t * t).sum()).integrate().max(0.0).sqrt();
    Ok(L2Ratio { r, l21_inner, l2_outer, ratio: ratio_or_zero(l21_inner, l2_outer) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn annulus(r_in: f64, r_out: f64) -> Arc<AnnulusGrid> {
        AnnulusGrid::geometric([0.0; 4], r_in, r_out, 1.1, S3Quadrature::new(8, 8, 16)).unwrap()
    }

    #[test]
    fn expand_linear_mode() {
        let basis = build_basis(3).unwrap();
        let g = annulus(0.2, 0.9);
        let u = AnnulusField::from_fn(&g, 1, |x, o| o[0] = x[0]);
        let e = annulus_expand(&u, &basis).unwrap();
        let norm = PI / 2f64.sqrt();
        let m = e.mode(1, 0).unwrap();
        assert!((m.growing - norm).abs() < 1e-8, "{m:?}");
        assert!(m.decaying.abs() < 1e-8);
        assert!(e.max_other(&[(1, 0)]) < 1e-8);
        let x = [0.3, 0.1, -0.2, 0.25];
        assert!((e.reconstruct(&basis, &x) - 0.3).abs() < 1e-8);
    }

    #[test]
    fn expand_decaying_modes() {
        let basis = build_basis(2).unwrap();
        let g = annulus(0.2, 0.9);
        let kelvin = AnnulusField::from_fn(&g, 1, |x, o| o[0] = x[1] / x.iter().map(|t| t * t).sum::<f64>().powi(2));
        let e = annulus_expand(&kelvin, &basis).unwrap();
        let m = e.mode(1, 1).unwrap();
        assert!((m.decaying - PI / 2f64.sqrt()).abs() < 1e-7, "{m:?}");
        assert!(e.max_other(&[(1, 1)]) < 1e-7);
        let fund = AnnulusField::from_fn(&g, 1, |x, o| o[0] = 1.0 / x.iter().map(|t| t * t).sum::<f64>());
        let e = annulus_expand(&fund, &basis).unwrap();
        assert!((e.mode(0, 0).unwrap().decaying - 2f64.sqrt() * PI).abs() < 1e-7);
        assert!(e.max_other(&[(0, 0)]) < 1e-7);
    }

    #[test]
    fn thin_annulus_rejected() {
        let basis = build_basis(1).unwrap();
        let g = annulus(0.5, 0.7);
        let u = AnnulusField::from_fn(&g, 1, |_, o| o[0] = 1.0);
        assert!(matches!(annulus_expand(&u, &basis), Err(Error::IllConditionedFit { .. })));
    }

    #[test]
    fn power_norm_closed_forms() {
        let r = 0.05;
        let l2 = power_norms(0.0, r, PowerNorm::L2).unwrap();
        let exact = (2.0 * PI * PI * (0.5f64.powi(4) - (2.0 * r).powi(4)) / 4.0).sqrt();
        assert!((l2 - exact).abs() < 1e-12);
        // constant: ‖1‖_{2,1} = 2 |E|^{1/2}
        let l21 = power_norms(0.0, r, PowerNorm::L21).unwrap();
        assert!((l21 - 2.0 * exact).abs() < 1e-9 * exact, "{l21} vs {}", 2.0 * exact);
        assert!(matches!(power_norms(-3.0, 0.2, PowerNorm::L2), Err(Error::BadRadius(_))));
    }

    #[test]
    fn power_norm_bounds() {
        for j in -8..=-3 {
            for r in [0.01, 0.05, 0.1] {
                let l2 = power_norms(j as f64, r, PowerNorm::L2).unwrap();
                let l21 = power_norms(j as f64, r, PowerNorm::L21).unwrap();
                let low = l2_lower_constant(j) * r.powi(2 + j) / (2.0 * ((-2 * j - 4) as f64).sqrt());
                assert!(l2 >= low, "j={j} r={r}");
                assert!(l21 <= l21_upper_constant() * (2.0 * r).powi(2 + j), "j={j} r={r}");
            }
        }
    }

    #[test]
    fn zero_function_ratio() {
        let s = AnnulusSampling { shell_ratio: 1.2, sphere: S3Quadrature::new(6, 6, 12) };
        let out = lemma_l2_ratio(&|_| 0.0, 0.05, &s).unwrap();
        assert_eq!(out.l2_outer, 0.0);
        assert_eq!(out.ratio, 0.0);
        assert!(matches!(lemma_l2_ratio(&|_| 1.0, 0.05, &s), Err(Error::MeanNotZero { .. })));
    }
}
