//! Acceptance suite: one PASS/FAIL line per criterion. Set ACCEPTANCE_ONLY to
//! a comma-separated list of criterion numbers to run a subset.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use bihm_core::bubbletree::{bookkeeping, center_and_scale, detect_concentration, neck_analysis, NeckRegion};
use bihm_core::fixtures::{projected_polynomial_map, stereographic_bubble, BubbleProfile, CircleMap};
use bihm_core::flow::{perturbed_constant, FlowConfig, FlowState};
use bihm_core::grid4::{AnnulusField, AnnulusGrid, BallGrid4, Field, Region, S3Quadrature};
use bihm_core::lorentz::{duality_check, lorentz_norm, LorentzQ, MeasuredSample};
use bihm_core::manifold::TargetManifold;
use bihm_core::pohozaev::{lagrangian_pohozaev_vanishing, master_identity, pohozaev_extrinsic, AnnulusBounds};
use bihm_core::s3harmonics::{
    galerkin_spectrum, l21_upper_constant, l2_lower_constant, lemma_l2_ratio, power_norms, AnnulusSampling,
    PowerNorm,
};
use bihm_core::tension::{leibniz_check, FourForm, NormalFormCheck};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn max_abs(a: f64, b: f64) -> f64 {
    a.max(b.abs())
}

fn order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

fn unit_vector(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return v.into_iter().map(|t| t / n).collect();
        }
    }
}

// 1. P² = P, P + P⊥ = Id, B normal and symmetric, B(u)(∇u,∇u) = |∇u|²u.
fn geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = [0.0f64; 5];
    for trial in 0..10_000 {
        let k = 3 + 2 * (trial % 2);
        let m = TargetManifold::sphere(k).unwrap();
        let y = unit_vector(&mut rng, k);
        let pp = m.projectors(&y).unwrap();
        let sq = &pp.p * &pp.p;
        let tangent = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let r: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
            (0..k).map(|i| (0..k).map(|j| pp.p[(i, j)] * r[j]).sum()).collect()
        };
        for i in 0..k {
            for j in 0..k {
                let id = if i == j { 1.0 } else { 0.0 };
                worst[0] = max_abs(worst[0], sq[(i, j)] - pp.p[(i, j)]);
                worst[1] = max_abs(worst[1], pp.p[(i, j)] + pp.p_perp[(i, j)] - id);
            }
        }
        let (v, w) = (tangent(&mut rng), tangent(&mut rng));
        let bvw = m.second_fundamental_form(&y, &v, &w).unwrap();
        let bwv = m.second_fundamental_form(&y, &w, &v).unwrap();
        for i in 0..k {
            let t: f64 = (0..k).map(|j| pp.p[(i, j)] * bvw[j]).sum();
            worst[2] = max_abs(worst[2], t);
            worst[3] = max_abs(worst[3], bvw[i] - bwv[i]);
        }
        // ∇u: four tangent columns
        let cols: Vec<Vec<f64>> = (0..4).map(|_| tangent(&mut rng)).collect();
        let mut lhs = vec![0.0; k];
        let mut g2 = 0.0;
        for c in &cols {
            let b = m.second_fundamental_form(&y, c, c).unwrap();
            lhs.iter_mut().zip(&b).for_each(|(l, v)| *l += v);
            g2 += c.iter().map(|t| t * t).sum::<f64>();
        }
        for i in 0..k {
            worst[4] = max_abs(worst[4], lhs[i] - g2 * y[i]);
        }
    }
    let max = worst.iter().copied().fold(0.0, f64::max);
    Outcome::new(
        max <= 1e-10,
        format!(
            "10^4 samples on S^2 and S^4: |P²−P| {:.1e}, |P+P⊥−I| {:.1e}, |P B| {:.1e}, |B(v,w)−B(w,v)| {:.1e}, sphere identity {:.1e} (tol 1e-10)",
            worst[0], worst[1], worst[2], worst[3], worst[4]
        ),
    )
}

// 2. Laplace–Beltrami spectrum on S³ from a Galerkin computation.
fn eigenstructure() -> Outcome {
    let spectrum = galerkin_spectrum(3, &S3Quadrature::default(), 1e-6).unwrap();
    let want = [(0.0, 1), (-3.0, 4), (-8.0, 9), (-15.0, 16)];
    let mut ok = spectrum.len() == want.len();
    let mut err: f64 = 0.0;
    for (c, (e, m)) in spectrum.iter().zip(want) {
        err = err.max((c.eigenvalue - e).abs()).max(c.spread);
        ok &= c.multiplicity == m;
    }
    ok &= err <= 1e-6;
    let found: Vec<String> = spectrum.iter().map(|c| format!("{:.9}×{}", c.eigenvalue, c.multiplicity)).collect();
    Outcome::new(ok, format!("clusters [{}], max eigenvalue error {err:.1e} (tol 1e-6)", found.join(", ")))
}

// 3. ‖f_j‖ on B_{1/2}∖B_{2r}: sampled 4D norms against the radial oracle, and
// the two bound shapes.
fn power_norm_bounds() -> Outcome {
    let mut worst_match: f64 = 0.0;
    let mut bounds_ok = true;
    let mut worst_margin = f64::INFINITY;
    for j in -8..=-3 {
        for r in [0.01, 0.05, 0.1] {
            let grid = AnnulusGrid::geometric([0.0; 4], 2.0 * r, 0.5, 1.002, S3Quadrature::new(2, 2, 4)).unwrap();
            let f = AnnulusField::from_fn(&grid, 1, |x, o| {
                o[0] = x.iter().map(|t| t * t).sum::<f64>().sqrt().powi(j)
            });
            let l2 = f.map(1, |_, v, o| o[0] = v[0] * v[0]).integrate().sqrt();
            let l21 = lorentz_norm(&MeasuredSample::from_annulus(&f).unwrap(), 2.0, LorentzQ::Finite(1.0)).unwrap();
            let o2 = power_norms(j as f64, r, PowerNorm::L2).unwrap();
            let o21 = power_norms(j as f64, r, PowerNorm::L21).unwrap();
            worst_match = worst_match.max((l2 / o2 - 1.0).abs()).max((l21 / o21 - 1.0).abs());
            let lower = l2_lower_constant(j) * r.powi(2 + j) / (2.0 * ((-2 * j - 4) as f64).sqrt());
            let upper = l21_upper_constant() * (2.0 * r).powi(2 + j);
            bounds_ok &= l2 >= lower && o2 >= lower && l21 <= upper && o21 <= upper;
            worst_margin = worst_margin.min(l2 / lower).min(upper / l21);
        }
    }
    Outcome::new(
        bounds_ok && worst_match <= 5e-3,
        format!(
            "j in -8..-3, r in {{0.01, 0.05, 0.1}}: max sampled/oracle deviation {:.2e} (tol 5e-3), bounds hold: {bounds_ok}, tightest margin {:.3}",
            worst_match, worst_margin
        ),
    )
}

fn norm2(x: &[f64; 4]) -> f64 {
    x.iter().map(|t| t * t).sum()
}

/// Kelvin transform of a degree-l harmonic polynomial: P(x)/|x|^{2l+2}.
fn kelvin(p: f64, x: &[f64; 4], l: i32) -> f64 {
    p / norm2(x).powi(l + 1)
}

type Battery = Vec<(&'static str, Box<dyn Fn(&[f64; 4]) -> f64>)>;

fn harmonic_battery() -> Battery {
    vec![
        ("x1 + x2/|x|^4", Box::new(|x: &[f64; 4]| x[0] + kelvin(x[1], x, 1))),
        ("x1x2 + K[x3x4]", Box::new(|x: &[f64; 4]| x[0] * x[1] + kelvin(x[2] * x[3], x, 2))),
        ("x1x2x3 + K[x1x2x4]", Box::new(|x: &[f64; 4]| x[0] * x[1] * x[2] + kelvin(x[0] * x[1] * x[3], x, 3))),
        ("x1x2x3x4 + K[x1^4-6x1^2x2^2+x2^4]", Box::new(|x: &[f64; 4]| {
            let (a, b) = (x[0] * x[0], x[1] * x[1]);
            x[0] * x[1] * x[2] * x[3] + kelvin(a * a - 6.0 * a * b + b * b, x, 4)
        })),
        ("x2 + x1x3 + K[x1^2-x4^2] + K[x1x2x3]", Box::new(|x: &[f64; 4]| {
            x[1] + x[0] * x[2] + kelvin(x[0] * x[0] - x[3] * x[3], x, 2) + kelvin(x[0] * x[1] * x[2], x, 3)
        })),
    ]
}

// 4. ‖u‖_{L^{2,1}(B_{1/2}∖B_{2r})} / ‖u‖_{L²(B₁∖B_r)} across r.
fn annulus_ratio() -> Outcome {
    let sampling = AnnulusSampling { shell_ratio: 1.02, sphere: S3Quadrature::new(10, 10, 20) };
    let mut worst = ("", 0.0f64);
    let mut rows = Vec::new();
    for (name, u) in harmonic_battery() {
        let ratios: Vec<f64> =
            [0.1, 0.03, 0.01].iter().map(|&r| lemma_l2_ratio(u.as_ref(), r, &sampling).unwrap().ratio).collect();
        let hi = ratios.iter().copied().fold(0.0, f64::max);
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let spread = hi / lo - 1.0;
        rows.push(format!("{name}: {:.3}/{:.3}/{:.3} spread {spread:.3}", ratios[0], ratios[1], ratios[2]));
        if spread > worst.1 {
            worst = (name, spread);
        }
    }
    Outcome::new(
        worst.1 < 0.25,
        format!("ratio at r = 0.1/0.03/0.01 and max/min − 1 (tol 0.25): {}", rows.join("; ")),
    )
}

// 5. Lorentz norms: indicator closed form, L^{2,∞} of |x|^{-2}, duality.
fn lorentz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut indicator_err: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(5..200);
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.4) { 1.0 } else { 0.0 }).collect();
        let m: f64 = values.iter().zip(&weights).map(|(v, w)| v * w).sum();
        let s = MeasuredSample::new(values, weights).unwrap();
        for (p, q) in [(2.0, Some(1.0)), (2.0, Some(2.0)), (1.5, Some(3.0)), (3.0, Some(1.0)), (2.0, None), (4.0, None)] {
            let (got, want) = match q {
                Some(q) => (lorentz_norm(&s, p, LorentzQ::Finite(q)).unwrap(), (p / q).powf(1.0 / q) * m.powf(1.0 / p)),
                None => (lorentz_norm(&s, p, LorentzQ::Infinity).unwrap(), m.powf(1.0 / p)),
            };
            indicator_err = indicator_err.max((got - want).abs());
        }
    }

    // Radial surrogate on B₁ at h = 1/32: node r_i = i·h carries the shell
    // (r_{i−1}, r_i] of measure π²/2 (r_i⁴ − r_{i−1}⁴).
    let h = 1.0 / 32.0;
    let c = PI * PI / 2.0;
    let (values, weights): (Vec<f64>, Vec<f64>) = (1..=32)
        .map(|i| {
            let (r, r0) = (i as f64 * h, (i - 1) as f64 * h);
            (r.powi(-2), c * (r.powi(4) - r0.powi(4)))
        })
        .unzip();
    let weak = lorentz_norm(&MeasuredSample::new(values, weights).unwrap(), 2.0, LorentzQ::Infinity).unwrap();
    let weak_err = weak / c.sqrt() - 1.0;

    let mut violations = 0;
    let mut max_ratio: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..300);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.001..1.0)).collect();
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0) * rng.random_range(0.0f64..1.0).powi(3)).collect();
        let (lhs, rhs) = duality_check(&MeasuredSample::new(f, w.clone()).unwrap(), &MeasuredSample::new(g, w).unwrap()).unwrap();
        if lhs.abs() > rhs * (1.0 + 1e-12) {
            violations += 1;
        }
        max_ratio = max_ratio.max(lhs.abs() / rhs);
    }
    Outcome::new(
        indicator_err <= 1e-10 && weak_err.abs() <= 0.02 && violations == 0,
        format!(
            "indicator error {indicator_err:.1e} (tol 1e-10); ‖|x|^-2‖_(2,∞) = {weak:.6} vs {:.6}, rel {weak_err:+.2e} (tol 0.02); duality violations {violations}/100, max |Σfg|/(‖f‖‖g‖) {max_ratio:.3}",
            c.sqrt()
        ),
    )
}

fn tension_maps() -> Vec<(&'static str, Box<dyn Fn(&Arc<BallGrid4>) -> Field>)> {
    vec![
        ("poly A", Box::new(|g: &Arc<BallGrid4>| projected_polynomial_map(g, 0.6, &[1.0, 0.5, -1.0, 0.7, 0.3, -0.4]))),
        ("poly B", Box::new(|g: &Arc<BallGrid4>| projected_polynomial_map(g, 0.4, &[-0.6, 1.2, 0.2, -0.8, 0.9, 0.5]))),
        ("circle", Box::new(|g: &Arc<BallGrid4>| CircleMap::default().field(g))),
    ]
}

// 6. Leibniz sub-check and normal-form reassembly under refinement.
fn tension_ladder() -> Outcome {
    let m = TargetManifold::sphere(3).unwrap();
    let mut ok = true;
    let mut rows = Vec::new();
    let mut antisym: f64 = 0.0;
    for (name, make) in tension_maps() {
        let mut leib = Vec::new();
        let mut nf = Vec::new();
        for h in [1.0 / 12.0, 1.0 / 24.0] {
            let g = BallGrid4::new(0.5, h).unwrap();
            let u = make(&g);
            leib.push(leibniz_check(&u, &m, &Region::ball(0.25)).unwrap().relative_residual);
            let (check, _) = NormalFormCheck::run(&u, &m, &Region::ball(0.2)).unwrap();
            antisym = antisym.max(check.antisymmetry_defect);
            nf.push(check);
        }
        let lo = order(leib[0], leib[1]);
        let no = order(nf[0].relative_residual, nf[1].relative_residual);
        let (a, b) = (nf[0].constants, nf[1].constants);
        let drift = [(a.c_v, b.c_v), (a.c_w, b.c_w), (a.c_f, b.c_f)]
            .iter()
            .map(|(x, y)| (x - y).abs() / y)
            .fold(0.0, f64::max);
        ok &= lo >= 1.5 && no >= 1.5 && drift <= 0.2;
        rows.push(format!("{name}: Leibniz order {lo:.2}, normal form order {no:.2}, cc drift {drift:.3}"));
    }
    ok &= antisym <= 1e-12;
    Outcome::new(
        ok,
        format!("h 1/12 to 1/24 (order ≥ 1.5, drift ≤ 0.2): {}; max ω antisymmetry {antisym:.1e} (tol 1e-12)", rows.join("; ")),
    )
}

fn smooth_scalar(x: &[f64; 4], out: &mut [f64]) {
    out[0] = (1.3 * x[0] - 0.4 * x[2]).sin() + 0.5 * (0.9 * x[1] + 1.1 * x[3]).cos() + x[0] * x[1] * x[2];
}

fn random_four_form(k: usize, rng: &mut ChaCha8Rng) -> FourForm {
    let mut form = FourForm::zero(k);
    for a in 0..k {
        for b in a + 1..k {
            for c in b + 1..k {
                for d in c + 1..k {
                    form = form.with_term([a, b, c, d], rng.random_range(-1.0..1.0)).unwrap();
                    for e in 0..k {
                        form = form.with_linear_term(e, [a, b, c, d], rng.random_range(-1.0..1.0)).unwrap();
                    }
                }
            }
        }
    }
    form
}

// 7. Master identity ladder, forced Pohozaev on flow output, and the
// Lagrangian term.
fn pohozaev() -> Outcome {
    let sampling = AnnulusSampling { shell_ratio: 1.05, sphere: S3Quadrature::new(8, 8, 16) };

    let bounds = AnnulusBounds::new(0.15, 0.3).unwrap();
    let mut res = Vec::new();
    for h in [1.0 / 16.0, 1.0 / 32.0] {
        let g = BallGrid4::new(0.6875, h).unwrap();
        let mi = master_identity(&Field::from_fn(&g, 1, smooth_scalar), bounds, &sampling).unwrap();
        res.push(mi.residual.abs() / mi.lhs.abs());
    }
    let master_order = order(res[0], res[1]);

    let m = TargetManifold::sphere(3).unwrap();
    let g = BallGrid4::new(0.5, 1.0 / 24.0).unwrap();
    let bounds = AnnulusBounds::new(0.1, 0.2).unwrap();
    let mut forced: f64 = 0.0;
    for variant in 0..3 {
        let u0 = perturbed_constant(&g, &m, &[0.0, 0.0, 1.0], 0.25, variant).unwrap();
        let mut state = FlowState::new(u0, m.clone(), FlowConfig::default()).unwrap();
        state.run(40).unwrap();
        let slice = state.select_time_slice().unwrap();
        let rep = pohozaev_extrinsic(&slice.u, &slice.f, &m, bounds, &sampling).unwrap();
        forced = forced.max((rep.residual / rep.bulk_lhs).abs());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let gb = BallGrid4::new(0.75, 1.0 / 12.0).unwrap();
    let mut vanishing: f64 = 0.0;
    for _ in 0..5 {
        let center = [0u8; 4].map(|_| rng.random_range(-0.1..0.1));
        let u = stereographic_bubble(&gb, center, rng.random_range(0.1..0.5));
        let form = random_four_form(5, &mut rng);
        vanishing = vanishing.max(lagrangian_pohozaev_vanishing(&u, &form, bounds).unwrap());
    }
    let s3 = TargetManifold::sphere(4).unwrap();
    let u = perturbed_constant(&gb, &s3, &[0.0, 0.0, 0.0, 1.0], 0.2, 1).unwrap();
    vanishing = vanishing.max(lagrangian_pohozaev_vanishing(&u, &random_four_form(4, &mut rng), bounds).unwrap());

    Outcome::new(
        master_order >= 1.8 && forced <= 0.05 && vanishing <= 1e-12,
        format!(
            "master identity order {master_order:.2} (≥ 1.8, residuals {:.2e} → {:.2e}); forced extrinsic |residual|/bulk {forced:.2e} at h 1/24 (tol 0.05); Lagrangian term {vanishing:.1e} (tol 1e-12)",
            res[0], res[1]
        ),
    )
}

struct FlowRun {
    energies: Vec<f64>,
    defect: f64,
    distance: f64,
}

fn run_flow(g: &Arc<BallGrid4>, m: &TargetManifold, variant: usize, dt: f64, steps: usize) -> FlowRun {
    let u0 = perturbed_constant(g, m, &[0.0, 0.0, 1.0], 0.25, variant).unwrap();
    let cfg = FlowConfig { dt: Some(dt), snapshot_every: steps, ..Default::default() };
    let mut state = FlowState::new(u0, m.clone(), cfg).unwrap();
    state.run(steps).unwrap();
    FlowRun {
        energies: state.energy_trace.iter().map(|e| e.1).collect(),
        defect: state.energy_identity_defect(),
        distance: state.manifold_distance(),
    }
}

// 8. Flow: monotone energy, energy-identity defect and its dt-scaling, and
// staying on the target.
fn flow() -> Outcome {
    let m = TargetManifold::sphere(3).unwrap();
    let h = 1.0 / 8.0;
    let g = BallGrid4::unit(h).unwrap();
    let dt = 0.1 * h.powi(4);
    let mut ok = true;
    let mut rows = Vec::new();
    for variant in 0..3 {
        let a = run_flow(&g, &m, variant, dt, 200);
        let b = run_flow(&g, &m, variant, dt / 2.0, 400);
        let e0 = a.energies[0];
        let rise = a.energies.windows(2).map(|w| (w[1] - w[0]) / e0).fold(f64::NEG_INFINITY, f64::max);
        let rel = a.defect.abs() / e0;
        let halving = a.defect.abs() / b.defect.abs();
        let dist = a.distance.max(b.distance);
        ok &= rise <= 1e-3 && rel <= 0.01 && (1.4..=2.6).contains(&halving) && dist <= 1e-12;
        rows.push(format!(
            "variant {variant}: max step rise {rise:.1e}, defect/E0 {rel:.1e}, halving ratio {halving:.2}, distance {dist:.1e}"
        ));
    }
    Outcome::new(
        ok,
        format!("200 steps at dt = 0.1h⁴, h 1/8 (rise ≤ 1e-3, defect ≤ 0.01, ratio 2 ± 30%, distance ≤ 1e-12): {}", rows.join("; ")),
    )
}

// 9. Planted bubbles: extraction, discrete conformal invariance, necks.
fn bubble_family() -> Outcome {
    let eps0 = 0.35;
    let delta = 0.15;
    let profile = BubbleProfile::calibrated(eps0);
    let a = [0.0061, -0.0037, 0.0023, 0.0049];
    let h = 1.0 / 128.0;
    let g = BallGrid4::new(0.1953125, h).unwrap();
    let mut ok = true;
    let mut rows = Vec::new();
    let mut necks = Vec::new();
    for lambda in [0.1, 0.05, 0.025] {
        let u = profile.plant(&g, a, lambda);
        let pts = detect_concentration(&u, eps0, 0.08).unwrap();
        if pts.len() != 1 {
            return Outcome::new(false, format!("λ = {lambda}: {} concentration points", pts.len()));
        }
        let b = center_and_scale(&u, &pts[0], delta, eps0).unwrap();
        let err = (0..4).map(|i| (b.center[i] - a[i]).powi(2)).sum::<f64>().sqrt();
        let energy = b.rescaled_energy(delta / b.scale);
        let oracle = profile.energy_inside(delta / lambda);
        let e_rel = energy / oracle - 1.0;
        // the planted bubble of the criterion; the others are reported only
        if lambda == 0.05 {
            ok &= err <= 2.0 * h && b.scale / lambda <= 2.0 && lambda / b.scale <= 2.0 && e_rel.abs() <= 0.05;
        }
        let na = neck_analysis(&u, &NeckRegion::between(b.lattice_center, b.scale, delta).unwrap()).unwrap();
        let rep = bookkeeping(&u, std::slice::from_ref(&b), delta, eps0).unwrap();
        rows.push(format!(
            "λ {lambda}: center err {:.3}h, scale {:.4}, energy rel {e_rel:+.3}, neck max {:.3e}, weak {:.3e}/{:.3e}, defect {:.3e}",
            err / h,
            b.scale,
            na.dyadic_max,
            na.hessian_weak,
            na.gradient_weak,
            rep.bookkeeping_defect
        ));
        necks.push((na.dyadic_max, na.hessian_weak, na.gradient_weak, rep.bookkeeping_defect.abs()));
    }
    for w in necks.windows(2) {
        let (p, q) = (w[0], w[1]);
        ok &= q.0 < p.0 && q.1 < p.1 && q.2 < p.2 && q.3 < p.3;
    }
    Outcome::new(
        ok,
        format!("h 1/128 (λ 0.05: center ≤ 2h, scale within ×2, energy within 5%; necks and |defect| decreasing): {}", rows.join("; ")),
    )
}

fn bihm_binary() -> Result<PathBuf, String> {
    let exe = std::env::current_exe().map_err(|e| e.to_string())?;
    let dir = exe.parent().and_then(Path::parent).ok_or("no target directory")?;
    let bin = dir.join(format!("bihm{}", std::env::consts::EXE_SUFFIX));
    if !bin.exists() {
        let status = Command::new(env!("CARGO"))
            .args(["build", "-q", "-p", "bihm-cli", "--bin", "bihm"])
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() || !bin.exists() {
            return Err(format!("could not build {}", bin.display()));
        }
    }
    Ok(bin)
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn comparable(path: &Path, bytes: Vec<u8>) -> Vec<u8> {
    if path.extension().is_some_and(|e| e == "json") {
        let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        if let Some(map) = v.as_object_mut() {
            map.remove("timestamp");
        }
        return serde_json::to_vec(&v).unwrap();
    }
    bytes
}

// 10. Two runs of every command with the same config and seed.
fn reproducibility() -> Outcome {
    let bin = match bihm_binary() {
        Ok(b) => b,
        Err(e) => return Outcome::new(false, e),
    };
    let root = std::env::temp_dir().join(format!("bihm-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root).unwrap();
    let config = root.join("run.toml");
    std::fs::write(&config, "seed = 2024\n[flow]\nsteps = 10\nsnapshot_every = 5\n").unwrap();
    let commands = ["verify-identities", "flow", "lorentz", "harmonics", "pohozaev", "analyze"];
    let out = root.join("out");
    let mut runs = Vec::new();
    for _ in 0..2 {
        let _ = std::fs::remove_dir_all(&out);
        for cmd in commands {
            let o = Command::new(&bin)
                .args([cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
                .output()
                .unwrap();
            if !o.status.success() {
                return Outcome::new(false, format!("{cmd} failed: {}", String::from_utf8_lossy(&o.stderr).trim()));
            }
        }
        let files: Vec<(PathBuf, Vec<u8>)> = files_under(&out)
            .into_iter()
            .map(|rel| {
                let bytes = comparable(&rel, std::fs::read(out.join(&rel)).unwrap());
                (rel, bytes)
            })
            .collect();
        runs.push(files);
    }
    let a: Vec<&PathBuf> = runs[0].iter().map(|f| &f.0).collect();
    let b: Vec<&PathBuf> = runs[1].iter().map(|f| &f.0).collect();
    let mut differing = Vec::new();
    if a != b {
        differing.push("file lists".to_string());
    }
    for ((rel, x), (_, y)) in runs[0].iter().zip(&runs[1]) {
        if x != y {
            differing.push(rel.display().to_string());
        }
    }
    let _ = std::fs::remove_dir_all(&root);
    Outcome::new(
        differing.is_empty(),
        format!(
            "{} commands, {} artifacts compared (timestamp excluded), differing: {}",
            commands.len(),
            a.len(),
            if differing.is_empty() { "none".to_string() } else { differing.join(", ") }
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "geometry", geometry, Duration::from_secs(10)),
        (2, "S3 eigenstructure", eigenstructure, Duration::from_secs(30)),
        (3, "power-norm bounds", power_norm_bounds, Duration::from_secs(60)),
        (4, "annulus L2 ratio", annulus_ratio, Duration::from_secs(300)),
        (5, "Lorentz norms", lorentz, Duration::from_secs(60)),
        (6, "tension identities", tension_ladder, Duration::from_secs(1800)),
        (7, "Pohozaev", pohozaev, Duration::from_secs(1200)),
        (8, "flow", flow, Duration::from_secs(1800)),
        (9, "bubble pipeline", bubble_family, Duration::from_secs(1800)),
        (10, "reproducibility", reproducibility, Duration::from_secs(300)),
    ];
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = 0;
    for (id, name, run, budget) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let pass = outcome.pass && elapsed <= budget;
        if !pass {
            failed += 1;
        }
        println!(
            "[{}] {id} {name}: {} [{:.1} s, budget {} s]",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
