//! Concentration detection, bubble extraction, neck analysis and energy
//! bookkeeping for a single sampled map.
//!
//! Energies use the scale-invariant density e = |∇²u|² + |∇u|⁴ evaluated with
//! fourth-order central differences (reach two nodes per axis), so bubbles a
//! few cells wide still carry most of their energy.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid4::{dist, BallGrid4, Field};
use crate::lorentz::{lorentz_norm, LorentzQ, MeasuredSample};

pub const DEFAULT_EPS0: f64 = 0.35;

// Integer weights (divided by 12 afterwards) so constants differentiate to
// exactly zero.
const D1: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
const D2: [f64; 5] = [-1.0, 16.0, -30.0, 16.0, -1.0];

/// Gradient (c*4 + a) and Hessian (c*16 + a*4 + b) at a node, or None when
/// the stencil leaves the defined region.
fn local_derivatives(u: &Field, idx: usize, grad: &mut [f64], hess: &mut [f64]) -> bool {
    let grid = u.grid();
    let n = grid.n();
    let mi = grid.multi_index(idx);
    if mi.iter().any(|&i| i < 2 || i + 2 >= n) || !u.is_defined(idx) {
        return false;
    }
    let k = u.components();
    let st = grid.strides();
    let v = u.values();
    let h = grid.h();
    let at = |off: isize, c: usize| v[(idx as isize + off) as usize * k + c];
    for c in 0..k {
        for a in 0..4 {
            let sa = st[a] as isize;
            let (mut g, mut d) = (0.0, 0.0);
            for (j, (w1, w2)) in D1.iter().zip(&D2).enumerate() {
                let f = at((j as isize - 2) * sa, c);
                g += w1 * f;
                d += w2 * f;
            }
            grad[c * 4 + a] = g / (12.0 * h);
            hess[c * 16 + a * 5] = d / (12.0 * h * h);
            for b in a + 1..4 {
                let sb = st[b] as isize;
                let mut m = 0.0;
                for (i, wi) in D1.iter().enumerate() {
                    if *wi == 0.0 {
                        continue;
                    }
                    for (j, wj) in D1.iter().enumerate() {
                        if *wj == 0.0 {
                            continue;
                        }
                        m += wi * wj * at((i as isize - 2) * sa + (j as isize - 2) * sb, c);
                    }
                }
                m /= 144.0 * h * h;
                hess[c * 16 + a * 4 + b] = m;
                hess[c * 16 + b * 4 + a] = m;
            }
        }
    }
    grad.iter().chain(hess.iter()).all(|t| t.is_finite())
}

/// Two components per node: |∇²u|² and |∇u|². The energy density is
/// e = |∇²u|² + (|∇u|²)².
pub fn energy_density(u: &Field) -> Field {
    let k = u.components();
    let grid = u.grid().clone();
    let mut out = Field::undefined(&grid, 2);
    let (mut grad, mut hess) = (vec![0.0; 4 * k], vec![0.0; 16 * k]);
    for idx in 0..grid.node_count() {
        if local_derivatives(u, idx, &mut grad, &mut hess) {
            let slot = out.at_mut(idx);
            slot[0] = hess.iter().map(|t| t * t).sum();
            slot[1] = grad.iter().map(|t| t * t).sum();
        }
    }
    out
}

fn density_at(e: &Field, idx: usize) -> f64 {
    if e.is_defined(idx) {
        let s = e.at(idx);
        s[0] + s[1] * s[1]
    } else {
        0.0
    }
}

/// ∫ e over the defined nodes with `inner ≤ |x − center| < outer`.
fn shell_energy(e: &Field, center: &[f64; 4], inner: f64, outer: f64) -> f64 {
    let grid = e.grid();
    let mut total = 0.0;
    for_nodes_near(grid, center, outer, |idx, x| {
        let d = dist(&x, center);
        if d >= inner && d < outer {
            total += density_at(e, idx);
        }
    });
    total * grid.cell_volume()
}

/// Visits the lattice nodes of the bounding box of B(center, radius).
fn for_nodes_near(grid: &BallGrid4, center: &[f64; 4], radius: f64, mut f: impl FnMut(usize, [f64; 4])) {
    let n = grid.n() as isize;
    let h = grid.h();
    let mut lo = [0usize; 4];
    let mut hi = [0usize; 4];
    for a in 0..4 {
        let s = (center[a] + grid.radius()) / h;
        lo[a] = ((s - radius / h).floor() as isize).clamp(0, n - 1) as usize;
        hi[a] = ((s + radius / h).ceil() as isize).clamp(0, n - 1) as usize;
    }
    for i0 in lo[0]..=hi[0] {
        for i1 in lo[1]..=hi[1] {
            for i2 in lo[2]..=hi[2] {
                for i3 in lo[3]..=hi[3] {
                    let idx = grid.index([i0, i1, i2, i3]);
                    f(idx, grid.position(idx));
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationPoint {
    pub center: [f64; 4],
    /// (ρ, ∫_{B(center, ρ)} e) for ρ = rho_min · 2^{j/2}, j = 0..=4.
    pub energy_profile: Vec<(f64, f64)>,
}

impl ConcentrationPoint {
    /// Energy at the floor scale.
    pub fn floor_energy(&self) -> f64 {
        self.energy_profile[0].1
    }
}

/// Ball offsets (as signed index shifts) of lattice nodes within `radius`.
fn ball_offsets(grid: &BallGrid4, radius: f64) -> Vec<isize> {
    let w = (radius / grid.h()).ceil() as isize;
    let st = grid.strides().map(|s| s as isize);
    let r2 = (radius / grid.h()).powi(2);
    let mut out = Vec::new();
    for i0 in -w..=w {
        for i1 in -w..=w {
            for i2 in -w..=w {
                for i3 in -w..=w {
                    if ((i0 * i0 + i1 * i1 + i2 * i2 + i3 * i3) as f64) < r2 {
                        out.push(i0 * st[0] + i1 * st[1] + i2 * st[2] + i3 * st[3]);
                    }
                }
            }
        }
    }
    out
}

/// Cube sums Σ_{|i−j|_∞ ≤ w} e_j via a 4D summed-area table.
fn cube_sums(e: &[f64], n: usize, w: usize) -> Vec<f64> {
    let m = n + 1;
    let pidx = |i: [usize; 4]| ((i[0] * m + i[1]) * m + i[2]) * m + i[3];
    let mut p = vec![0.0; m * m * m * m];
    for i0 in 1..m {
        for i1 in 1..m {
            for i2 in 1..m {
                let mut row = 0.0;
                for i3 in 1..m {
                    row += e[(((i0 - 1) * n + i1 - 1) * n + i2 - 1) * n + i3 - 1];
                    p[pidx([i0, i1, i2, i3])] = row
                        + p[pidx([i0 - 1, i1, i2, i3])]
                        + p[pidx([i0, i1 - 1, i2, i3])]
                        + p[pidx([i0, i1, i2 - 1, i3])]
                        - p[pidx([i0 - 1, i1 - 1, i2, i3])]
                        - p[pidx([i0 - 1, i1, i2 - 1, i3])]
                        - p[pidx([i0, i1 - 1, i2 - 1, i3])]
                        + p[pidx([i0 - 1, i1 - 1, i2 - 1, i3])];
                }
            }
        }
    }
    let mut out = vec![0.0; n * n * n * n];
    let mut idx = 0;
    for i0 in 0..n {
        for i1 in 0..n {
            for i2 in 0..n {
                for i3 in 0..n {
                    let i = [i0, i1, i2, i3];
                    let lo = i.map(|t| t.saturating_sub(w));
                    let hi = i.map(|t| (t + w + 1).min(n));
                    let mut s = 0.0;
                    for mask in 0..16u32 {
                        let mut corner = [0usize; 4];
                        for a in 0..4 {
                            corner[a] = if mask & (1 << a) != 0 { lo[a] } else { hi[a] };
                        }
                        let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                        s += sign * p[pidx(corner)];
                    }
                    out[idx] = s;
                    idx += 1;
                }
            }
        }
    }
    out
}

/// Local maxima of x ↦ ∫_{B(x, rho_min)} e above `eps0`, deduplicated within
/// 2·rho_min (the stronger point wins), strongest first.
pub fn detect_concentration(u: &Field, eps0: f64, rho_min: f64) -> Result<Vec<ConcentrationPoint>> {
    if !(eps0 > 0.0) {
        return Err(Error::ConfigInvalid(format!("eps0 must be positive, got {eps0}")));
    }
    let grid = u.grid().clone();
    let h = grid.h();
    if !(rho_min >= 3.0 * h * (1.0 - 1e-12)) {
        return Err(Error::ScaleFloorTooSmall { rho_min, floor: 3.0 * h });
    }
    let e = energy_density(u);
    let dens: Vec<f64> = (0..grid.node_count()).map(|i| density_at(&e, i) * grid.cell_volume()).collect();
    // The cube of half-width ⌈ρ/h⌉ contains the ball, so it filters safely.
    let cube = cube_sums(&dens, grid.n(), (rho_min / h).ceil() as usize);
    let offsets = ball_offsets(&grid, rho_min);
    let total = dens.len() as isize;
    let ball = |idx: usize| -> f64 {
        offsets
            .iter()
            .map(|o| idx as isize + o)
            .filter(|j| *j >= 0 && *j < total)
            .map(|j| dens[j as usize])
            .sum()
    };
    let mut energy = std::collections::HashMap::new();
    for (idx, c) in cube.iter().enumerate() {
        if *c >= eps0 {
            let b = ball(idx);
            if b >= eps0 {
                energy.insert(idx, b);
            }
        }
    }
    let st = grid.strides().map(|s| s as isize);
    let mut maxima: Vec<(usize, f64)> = energy
        .iter()
        .filter(|(idx, b)| {
            let mut is_max = true;
            for m in 0..81 {
                if m == 40 {
                    continue;
                }
                let mut off = 0isize;
                let mut t = m;
                for s in st {
                    off += ((t % 3) as isize - 1) * s;
                    t /= 3;
                }
                if let Some(other) = energy.get(&((**idx as isize + off) as usize)) {
                    if other > *b {
                        is_max = false;
                        break;
                    }
                }
            }
            is_max
        })
        .map(|(i, b)| (*i, *b))
        .collect();
    maxima.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let mut kept: Vec<[f64; 4]> = Vec::new();
    for (idx, _) in maxima {
        let x = grid.position(idx);
        if kept.iter().all(|k| dist(k, &x) >= 2.0 * rho_min) {
            kept.push(x);
        }
    }
    Ok(kept
        .into_iter()
        .map(|center| {
            let energy_profile = (0..=4)
                .map(|j| {
                    let r = rho_min * 2f64.powf(0.5 * j as f64);
                    (r, shell_energy(&e, &center, 0.0, r))
                })
                .collect();
            ConcentrationPoint { center, energy_profile }
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct Bubble {
    /// |∇²u|²-weighted center of mass over B(point, r_i).
    pub center: [f64; 4],
    /// Lattice node nearest to `center`; the rescaled map is sampled around it.
    pub lattice_center: [f64; 4],
    pub scale: f64,
    pub localization_radius: f64,
    /// ∫_{B(a, r_i) ∖ B(a, λ)} e, equal to ε₀/2 up to the bisection tolerance.
    pub annulus_energy: f64,
    /// ũ(y) = u(a + λy) on a reference grid of spacing h/λ reaching a few
    /// nodes beyond r_i/λ.
    /// Its nodes are exactly the physical lattice nodes around the lattice
    /// center, so no interpolation enters.
    #[serde(skip)]
    pub rescaled_map: Field,
}

impl Bubble {
    /// ∫ (|∇²ũ|² + |∇ũ|⁴) dy over the reference ball of radius `radius`.
    pub fn rescaled_energy(&self, radius: f64) -> f64 {
        let e = energy_density(&self.rescaled_map);
        shell_energy(&e, &[0.0; 4], 0.0, radius)
    }

    /// Radius of the reference grid.
    pub fn reference_radius(&self) -> f64 {
        self.rescaled_map.grid().radius()
    }
}

/// Cumulative energy C(ρ) = ∫_{B(center, ρ)} e as a continuous, piecewise
/// linear function of ρ through the sorted node distances.
struct RadialCumulative {
    radii: Vec<f64>,
    cumulative: Vec<f64>,
}

impl RadialCumulative {
    fn new(e: &Field, center: &[f64; 4], radius: f64) -> Self {
        let grid = e.grid();
        let mut nodes = Vec::new();
        for_nodes_near(grid, center, radius, |idx, x| {
            let d = dist(&x, center);
            if d < radius {
                nodes.push((d, density_at(e, idx) * grid.cell_volume()));
            }
        });
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut radii = vec![0.0];
        let mut cumulative = vec![0.0];
        let mut acc = 0.0;
        for (d, w) in nodes {
            acc += w;
            if d > *radii.last().unwrap() {
                radii.push(d);
                cumulative.push(acc);
            } else {
                *cumulative.last_mut().unwrap() = acc;
            }
        }
        radii.push(radius);
        cumulative.push(acc);
        Self { radii, cumulative }
    }

    fn total(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn at(&self, rho: f64) -> f64 {
        let j = self.radii.partition_point(|r| *r <= rho);
        if j == 0 {
            return 0.0;
        }
        if j >= self.radii.len() {
            return self.total();
        }
        let (r0, r1) = (self.radii[j - 1], self.radii[j]);
        let (c0, c1) = (self.cumulative[j - 1], self.cumulative[j]);
        c0 + (c1 - c0) * (rho - r0) / (r1 - r0)
    }
}

/// Center of mass and ε₀/2 scale of the concentration at `point`.
pub fn center_and_scale(u: &Field, point: &ConcentrationPoint, r_i: f64, eps0: f64) -> Result<Bubble> {
    let grid = u.grid().clone();
    let h = grid.h();
    if !(r_i >= 2.0 * h) {
        return Err(Error::ConfigInvalid(format!("localization radius {r_i} is below 2h")));
    }
    let e = energy_density(u);
    let (mut wsum, mut xsum) = (0.0, [0.0; 4]);
    for_nodes_near(&grid, &point.center, r_i, |idx, x| {
        if dist(&x, &point.center) < r_i && e.is_defined(idx) {
            let w = e.at(idx)[0];
            wsum += w;
            for a in 0..4 {
                xsum[a] += w * x[a];
            }
        }
    });
    if !(wsum > 0.0) {
        return Err(Error::BisectionFailed("no curvature in the localization ball".into()));
    }
    let center = xsum.map(|t| t / wsum);
    let cum = RadialCumulative::new(&e, &center, r_i);
    let target = 0.5 * eps0;
    let annulus = |lambda: f64| cum.total() - cum.at(lambda);
    if annulus(0.0) < target {
        return Err(Error::BisectionFailed(format!(
            "energy {:.4e} in B(a, {r_i}) stays below eps0/2 = {target:.4e}",
            annulus(0.0)
        )));
    }
    // annulus(λ) is continuous and non-increasing on [0, r_i].
    let (mut lo, mut hi) = (0.0, r_i);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if annulus(mid) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * r_i {
            break;
        }
    }
    let scale = 0.5 * (lo + hi);
    if !(scale > 0.0) {
        return Err(Error::BisectionFailed("scale collapsed to zero".into()));
    }
    let annulus_energy = annulus(scale);
    let (lattice_center, rescaled_map) = rescale_around(u, &center, scale, r_i)?;
    Ok(Bubble { center, lattice_center, scale, localization_radius: r_i, annulus_energy, rescaled_map })
}

/// Samples y ↦ u(a* + λy) on the reference grid of spacing h/λ, where a* is
/// the lattice node nearest to `center`.
fn rescale_around(u: &Field, center: &[f64; 4], lambda: f64, r_i: f64) -> Result<([f64; 4], Field)> {
    let grid = u.grid();
    let h = grid.h();
    // Three extra nodes keep the fourth-order density defined out to r_i.
    let half = (r_i / h).ceil() as usize + 3;
    let reference = BallGrid4::from_lattice(2 * half + 1, h / lambda)?;
    let n = grid.n() as isize;
    let base = center.map(|c| ((c + grid.radius()) / h).round() as isize);
    let lattice_center = grid.position(grid.index(base.map(|b| b.clamp(0, n - 1) as usize)));
    let k = u.components();
    let mut values = vec![f64::NAN; reference.node_count() * k];
    reference.for_each_node(|ridx, y| {
        if !reference.in_ball(&y) {
            return;
        }
        let r = reference.multi_index(ridx);
        let mut phys = [0usize; 4];
        for a in 0..4 {
            let i = base[a] + r[a] as isize - half as isize;
            if i < 0 || i >= n {
                return;
            }
            phys[a] = i as usize;
        }
        let pidx = grid.index(phys);
        if u.is_defined(pidx) {
            values[ridx * k..(ridx + 1) * k].copy_from_slice(u.at(pidx));
        }
    });
    Ok((lattice_center, Field::from_values(&reference, k, values)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NeckRegion {
    pub center: [f64; 4],
    pub inner: f64,
    pub outer: f64,
}

impl NeckRegion {
    pub fn new(center: [f64; 4], inner: f64, outer: f64) -> Result<Self> {
        if !(inner > 0.0 && outer > inner) {
            return Err(Error::ConfigInvalid(format!("neck needs 0 < inner < outer, got ({inner}, {outer})")));
        }
        Ok(Self { center, inner, outer })
    }

    /// The neck between a bubble of scale λ and a body scale δ, starting at
    /// the geometric mean √(λδ).
    pub fn between(center: [f64; 4], lambda: f64, delta: f64) -> Result<Self> {
        Self::new(center, (lambda * delta).sqrt(), delta)
    }

    /// Dyadic annuli [ρ, 2ρ) from the inner radius outward; the last one is
    /// truncated at the outer radius.
    pub fn dyadic_annuli(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut r = self.inner;
        while r < self.outer * (1.0 - 1e-12) {
            out.push((r, (2.0 * r).min(self.outer)));
            r *= 2.0;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeckAnnulus {
    pub inner: f64,
    pub outer: f64,
    pub energy: f64,
    /// ‖∇²u‖_{L^{2,∞}} + ‖∇u‖_{L^{4,∞}} on this annulus alone.
    pub weak_norm: f64,
    /// ‖∇^T∇u‖_{L²} on this annulus alone.
    pub angular_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeckAnalysis {
    pub neck: NeckRegion,
    pub annuli: Vec<NeckAnnulus>,
    pub dyadic_max: f64,
    /// ‖∇²u‖_{L^{2,∞}(N)}
    pub hessian_weak: f64,
    /// ‖∇u‖_{L^{4,∞}(N)}
    pub gradient_weak: f64,
    /// ‖∇^T∇u‖_{L²(N)}, ∇^T the derivative tangent to spheres about the center.
    pub angular_l2: f64,
    /// ‖∇^T∇u‖_{L^{2,1}(N)}
    pub angular_l21: f64,
}

/// Pointwise (|∇²u|, |∇u|, |∇^T∇u|) on the defined nodes of a region.
struct NeckSamples {
    hess: Vec<f64>,
    grad: Vec<f64>,
    angular: Vec<f64>,
    missing: usize,
}

fn neck_samples(u: &Field, center: &[f64; 4], inner: f64, outer: f64) -> NeckSamples {
    let grid = u.grid().clone();
    let k = u.components();
    let (mut g, mut hs) = (vec![0.0; 4 * k], vec![0.0; 16 * k]);
    let mut s = NeckSamples { hess: Vec::new(), grad: Vec::new(), angular: Vec::new(), missing: 0 };
    for_nodes_near(&grid, center, outer, |idx, x| {
        let d = dist(&x, center);
        if !(d >= inner && d < outer) {
            return;
        }
        if !local_derivatives(u, idx, &mut g, &mut hs) {
            s.missing += 1;
            return;
        }
        let xh = [0, 1, 2, 3].map(|a| (x[a] - center[a]) / d);
        let h2: f64 = hs.iter().map(|t| t * t).sum();
        let mut radial = 0.0;
        for c in 0..k {
            for a in 0..4 {
                let r: f64 = (0..4).map(|b| xh[b] * hs[c * 16 + b * 4 + a]).sum();
                radial += r * r;
            }
        }
        s.hess.push(h2.sqrt());
        s.grad.push(g.iter().map(|t| t * t).sum::<f64>().sqrt());
        s.angular.push((h2 - radial).max(0.0).sqrt());
    });
    s
}

fn weak(values: &[f64], w: f64, p: f64) -> Result<f64> {
    let sample = MeasuredSample::new(values.to_vec(), vec![w; values.len()])?;
    lorentz_norm(&sample, p, LorentzQ::Infinity)
}

/// Dyadic energy sweep, weak norms and angular energy on a neck.
pub fn neck_analysis(u: &Field, neck: &NeckRegion) -> Result<NeckAnalysis> {
    let grid = u.grid().clone();
    let h = grid.h();
    if neck.inner < 4.0 * h {
        return Err(Error::NeckUnresolvable(format!("inner radius {} is below 4h = {}", neck.inner, 4.0 * h)));
    }
    let w = grid.cell_volume();
    let all = neck_samples(u, &neck.center, neck.inner, neck.outer);
    if all.missing > 0 || all.hess.is_empty() {
        return Err(Error::NeckUnresolvable(format!(
            "{} neck nodes lack a full stencil ({} usable)",
            all.missing,
            all.hess.len()
        )));
    }
    let mut annuli = Vec::new();
    for (r0, r1) in neck.dyadic_annuli() {
        let s = neck_samples(u, &neck.center, r0, r1);
        let energy = s.hess.iter().zip(&s.grad).map(|(a, b)| a * a + b.powi(4)).sum::<f64>() * w;
        let (weak_norm, angular_energy) = if s.hess.is_empty() {
            (0.0, 0.0)
        } else {
            (
                weak(&s.hess, w, 2.0)? + weak(&s.grad, w, 4.0)?,
                (s.angular.iter().map(|t| t * t).sum::<f64>() * w).sqrt(),
            )
        };
        annuli.push(NeckAnnulus { inner: r0, outer: r1, energy, weak_norm, angular_energy });
    }
    let dyadic_max = annuli.iter().map(|a| a.energy).fold(0.0, f64::max);
    let angular = MeasuredSample::new(all.angular.clone(), vec![w; all.angular.len()])?;
    Ok(NeckAnalysis {
        neck: *neck,
        annuli,
        dyadic_max,
        hessian_weak: weak(&all.hess, w, 2.0)?,
        gradient_weak: weak(&all.grad, w, 4.0)?,
        angular_l2: (all.angular.iter().map(|t| t * t).sum::<f64>() * w).sqrt(),
        angular_l21: lorentz_norm(&angular, 2.0, LorentzQ::Finite(1.0))?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BubbleTreeReport {
    pub eps0: f64,
    pub limit_region_cutoff: f64,
    pub total_energy: f64,
    /// Energy outside every ball B(a_i, δ), δ the limit-region cutoff.
    pub limit_region_energy: f64,
    /// Energy of each rescaled map over its reference ball of radius δ/λ_i,
    /// i.e. the whole bubble including its tail.
    pub bubble_energies: Vec<f64>,
    /// Energy of each neck B(a_i, δ) ∖ B(a_i, √(λ_i δ)).
    pub neck_energies: Vec<f64>,
    /// total − limit − Σ bubbles − Σ necks. Since the bubble energies already
    /// contain the necks, this is −Σ necks up to discretization and vanishes
    /// exactly when the necks carry no energy.
    pub bookkeeping_defect: f64,
}

/// Energy bookkeeping over the grid ball for extracted bubbles.
pub fn bookkeeping(u: &Field, bubbles: &[Bubble], limit_region_cutoff: f64, eps0: f64) -> Result<BubbleTreeReport> {
    let delta = limit_region_cutoff;
    if !(delta > 0.0) {
        return Err(Error::ConfigInvalid(format!("limit-region cutoff must be positive, got {delta}")));
    }
    for (i, a) in bubbles.iter().enumerate() {
        if a.localization_radius + 1e-12 < delta {
            return Err(Error::ConfigInvalid(format!(
                "bubble {i} was rescaled on radius {} < cutoff {delta}",
                a.localization_radius
            )));
        }
        for (j, b) in bubbles.iter().enumerate().skip(i + 1) {
            let d = dist(&a.lattice_center, &b.lattice_center);
            if d < a.scale + b.scale {
                return Err(Error::OverlappingBubbles(format!("bubbles {i} and {j} at distance {d:.4e}")));
            }
            if d < 2.0 * delta {
                return Err(Error::OverlappingBubbles(format!(
                    "cutoff balls of bubbles {i} and {j} intersect (distance {d:.4e}, cutoff {delta})"
                )));
            }
        }
    }
    let e = energy_density(u);
    let grid = u.grid().clone();
    let mut total = 0.0;
    let mut limit = 0.0;
    grid.for_each_node(|idx, x| {
        let v = density_at(&e, idx);
        total += v;
        if bubbles.iter().all(|b| dist(&x, &b.lattice_center) >= delta) {
            limit += v;
        }
    });
    let w = grid.cell_volume();
    let (total, limit) = (total * w, limit * w);
    let bubble_energies: Vec<f64> = bubbles.iter().map(|b| b.rescaled_energy(delta / b.scale)).collect();
    let neck_energies: Vec<f64> = bubbles
        .iter()
        .map(|b| shell_energy(&e, &b.lattice_center, (b.scale * delta).sqrt(), delta))
        .collect();
    let defect = total - limit - bubble_energies.iter().sum::<f64>() - neck_energies.iter().sum::<f64>();
    Ok(BubbleTreeReport {
        eps0,
        limit_region_cutoff: delta,
        total_energy: total,
        limit_region_energy: limit,
        bubble_energies,
        neck_energies,
        bookkeeping_defect: defect,
    })
}

/// Parameters of the full single-field pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct BubbleTreeConfig {
    pub eps0: f64,
    /// Floor scale of the concentration test; `None` means 3h.
    pub rho_min: Option<f64>,
    /// Localization radius r_i and limit-region cutoff δ; `None` means half
    /// the distance to the nearest other concentration point, capped so the
    /// ball stays inside the grid.
    pub localization_radius: Option<f64>,
}

impl Default for BubbleTreeConfig {
    fn default() -> Self {
        Self { eps0: DEFAULT_EPS0, rho_min: None, localization_radius: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BubbleTree {
    pub points: Vec<ConcentrationPoint>,
    pub bubbles: Vec<Bubble>,
    pub necks: Vec<NeckAnalysis>,
    pub report: BubbleTreeReport,
    /// Scale below which concentration cannot be tested on this grid.
    pub floor_scale: f64,
}

/// Detection, extraction, neck analysis and bookkeeping in one pass.
pub fn analyze(u: &Field, config: &BubbleTreeConfig) -> Result<BubbleTree> {
    let grid = u.grid().clone();
    let h = grid.h();
    let rho_min = config.rho_min.unwrap_or(3.0 * h);
    let points = detect_concentration(u, config.eps0, rho_min)?;
    let radius_for = |i: usize| -> f64 {
        if let Some(r) = config.localization_radius {
            return r;
        }
        let c = &points[i].center;
        let to_others = points
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, p)| 0.5 * dist(c, &p.center))
            .fold(f64::INFINITY, f64::min);
        let to_edge = grid.radius() - dist(c, &[0.0; 4]) - 3.0 * h;
        to_others.min(to_edge)
    };
    let radii: Vec<f64> = (0..points.len()).map(radius_for).collect();
    let delta = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let mut bubbles = Vec::new();
    for (p, r) in points.iter().zip(&radii) {
        bubbles.push(center_and_scale(u, p, *r, config.eps0)?);
    }
    let mut necks = Vec::new();
    for b in &bubbles {
        let neck = NeckRegion::between(b.lattice_center, b.scale, delta)?;
        necks.push(neck_analysis(u, &neck)?);
    }
    let delta = if bubbles.is_empty() { grid.radius() } else { delta };
    let report = bookkeeping(u, &bubbles, delta, config.eps0)?;
    Ok(BubbleTree { points, bubbles, necks, report, floor_scale: rho_min })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::BubbleProfile;
    use std::sync::Arc;

    const A: [f64; 4] = [0.0123, -0.0071, 0.0049, 0.0102];

    fn grid() -> Arc<BallGrid4> {
        BallGrid4::new(0.3125, 1.0 / 48.0).unwrap()
    }

    fn planted(lambda: f64) -> (Arc<BallGrid4>, Field) {
        let g = grid();
        let u = BubbleProfile::calibrated(DEFAULT_EPS0).plant(&g, A, lambda);
        (g, u)
    }

    #[test]
    fn constant_map_has_nothing() {
        let g = BallGrid4::new(0.25, 1.0 / 48.0).unwrap();
        let u = Field::constant(&g, &[0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(detect_concentration(&u, DEFAULT_EPS0, 0.0625).unwrap().is_empty());
        let neck = NeckRegion::new([0.0; 4], 0.09, 0.15).unwrap();
        let na = neck_analysis(&u, &neck).unwrap();
        assert_eq!((na.dyadic_max, na.hessian_weak, na.gradient_weak, na.angular_l2, na.angular_l21), (0.0, 0.0, 0.0, 0.0, 0.0));
        let rep = bookkeeping(&u, &[], 0.1, DEFAULT_EPS0).unwrap();
        assert_eq!(rep.bookkeeping_defect, 0.0);
        assert_eq!(rep.limit_region_energy, rep.total_energy);
    }

    #[test]
    fn scale_floor_is_enforced() {
        let g = BallGrid4::new(0.25, 1.0 / 24.0).unwrap();
        let u = Field::constant(&g, &[1.0]);
        assert!(matches!(detect_concentration(&u, 0.35, 0.1), Err(Error::ScaleFloorTooSmall { .. })));
    }

    #[test]
    fn planted_bubble_is_found_and_extracted() {
        let (g, u) = planted(0.1);
        let h = g.h();
        let pts = detect_concentration(&u, DEFAULT_EPS0, 3.0 * h).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(dist(&pts[0].center, &A) <= 2.0 * h);
        assert!(pts[0].energy_profile.windows(2).all(|w| w[1].1 >= w[0].1));
        let b = center_and_scale(&u, &pts[0], 0.18, DEFAULT_EPS0).unwrap();
        assert!(dist(&b.center, &A) <= h, "{:?}", b.center);
        assert!(b.scale >= 0.05 && b.scale <= 0.2, "{}", b.scale);
        assert!((b.annulus_energy / (0.5 * DEFAULT_EPS0) - 1.0).abs() <= 1e-3);
    }

    #[test]
    fn rescaling_is_exact_on_the_lattice() {
        let (g, u) = planted(0.1);
        let pts = detect_concentration(&u, DEFAULT_EPS0, 3.0 * g.h()).unwrap();
        let b = center_and_scale(&u, &pts[0], 0.15, DEFAULT_EPS0).unwrap();
        let physical = shell_energy(&energy_density(&u), &b.lattice_center, 0.0, 0.15);
        let rescaled = b.rescaled_energy(0.15 / b.scale);
        assert!((rescaled / physical - 1.0).abs() < 1e-10, "{rescaled} {physical}");
    }

    #[test]
    fn bisection_fails_without_enough_energy() {
        let (g, u) = planted(0.1);
        let pts = detect_concentration(&u, DEFAULT_EPS0, 3.0 * g.h()).unwrap();
        assert!(matches!(center_and_scale(&u, &pts[0], 0.15, 10.0), Err(Error::BisectionFailed(_))));
    }

    #[test]
    fn two_separated_bubbles_give_two_points() {
        let g = BallGrid4::new(0.4, 1.0 / 40.0).unwrap();
        let p = BubbleProfile::calibrated(DEFAULT_EPS0);
        let (a, b) = ([0.25, 0.0, 0.0, 0.0], [-0.25, 0.0, 0.0, 0.0]);
        let (ua, ub) = (p.plant(&g, a, 0.06), p.plant(&g, b, 0.06));
        // Both profiles are small perturbations of e₅; superpose and renormalize.
        let u = ua.zip_map(&ub, 5, |_, x, y, out| {
            let mut z = [0.0; 5];
            for c in 0..4 {
                z[c] = x[c] + y[c];
            }
            z[4] = 1.0;
            let n = z.iter().map(|t| t * t).sum::<f64>().sqrt();
            for c in 0..5 {
                out[c] = z[c] / n;
            }
        });
        let pts = detect_concentration(&u, DEFAULT_EPS0, 3.0 * g.h()).unwrap();
        assert_eq!(pts.len(), 2);
        for c in [a, b] {
            assert!(pts.iter().any(|p| dist(&p.center, &c) <= 2.0 * g.h()));
        }
    }

    #[test]
    fn fundamental_profile_weak_norm() {
        let g = BallGrid4::new(0.375, 1.0 / 48.0).unwrap();
        let u = Field::from_fn(&g, 1, |x, out| {
            let r2: f64 = x.iter().map(|t| t * t).sum();
            out[0] = if r2 > 0.0 { 0.7 / r2 } else { f64::NAN };
        });
        let nu = 0.12;
        let na = neck_analysis(&u, &NeckRegion::new([0.0; 4], nu, 0.3).unwrap()).unwrap();
        // |∇²(b/|x|²)| = √48 b/|x|⁴; the weak norm peaks where |{ρ < s}| doubles.
        let exact = 48f64.sqrt() * 0.7 * std::f64::consts::PI / (2.0 * 2f64.sqrt() * nu * nu);
        assert!((na.hessian_weak / exact - 1.0).abs() < 0.05, "{} {exact}", na.hessian_weak);
    }

    #[test]
    fn weak_norms_shrink_with_the_neck() {
        let (g, u) = planted(0.1);
        let big = neck_analysis(&u, &NeckRegion::new(A, 0.1, 0.2).unwrap()).unwrap();
        let small = neck_analysis(&u, &NeckRegion::new(A, 0.13, 0.18).unwrap()).unwrap();
        assert!(small.hessian_weak <= 1.01 * big.hessian_weak);
        assert!(small.gradient_weak <= 1.01 * big.gradient_weak);
        assert!(small.angular_l21 <= 1.01 * big.angular_l21);
        assert!(matches!(
            neck_analysis(&u, &NeckRegion::new(A, 2.0 * g.h(), 0.2).unwrap()),
            Err(Error::NeckUnresolvable(_))
        ));
    }

    #[test]
    fn dyadic_annuli_cover_the_neck() {
        let n = NeckRegion::new([0.0; 4], 0.05, 0.3).unwrap();
        assert_eq!(n.dyadic_annuli(), vec![(0.05, 0.1), (0.1, 0.2), (0.2, 0.3)]);
    }
}
