//! The six subcommands.

use std::collections::BTreeMap;
use std::path::PathBuf;

use bihm_core::bubbletree::analyze as analyze_tree;
use bihm_core::fixtures::{projected_polynomial_map, BubbleProfile, CircleMap};
use bihm_core::flow::{bienergy, perturbed_constant, FlowConfig, FlowState};
use bihm_core::grid4::{
    gradient, hessian_norm, laplacian, polar_resample, read_bhm4, AnnulusGrid, Field, Region, S3Quadrature,
};
use bihm_core::lorentz::{duality_check, lorentz_norm, LorentzQ, MeasuredSample};
use bihm_core::manifold::{ManifoldKind, TargetManifold};
use bihm_core::pohozaev::{lagrangian_pohozaev_vanishing, master_identity, pohozaev_extrinsic, pohozaev_intrinsic};
use bihm_core::s3harmonics::{annulus_expand, build_basis_with, AnnulusExpansion};
use bihm_core::tension::{
    leibniz_check, manifold_distance, tension_extrinsic, tension_intrinsic, FourForm, NormalFormCheck, Variant,
};
use bihm_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{FieldSource, Quantity, RunConfig};
use crate::report::{num, ArtifactWriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    VerifyIdentities,
    Flow,
    Analyze,
    Lorentz,
    Harmonics,
    Pohozaev,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::VerifyIdentities => "verify-identities",
            Command::Flow => "flow",
            Command::Analyze => "analyze",
            Command::Lorentz => "lorentz",
            Command::Harmonics => "harmonics",
            Command::Pohozaev => "pohozaev",
        }
    }
}

/// Runs one command and returns the paths it wrote.
pub fn run(command: Command, config: &RunConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let mut config = config.clone();
    let manifold = config.manifold()?;
    let u = load_field(&mut config, &manifold)?;
    let mut out = ArtifactWriter::new(&config, command.name())?;
    match command {
        Command::VerifyIdentities => verify_identities(&config, &manifold, &u, &mut out)?,
        Command::Flow => flow(&config, manifold, u, &mut out)?,
        Command::Analyze => analyze(&config, &u, &mut out)?,
        Command::Lorentz => lorentz(&config, &u, &mut out)?,
        Command::Harmonics => harmonics(&config, &u, &mut out)?,
        Command::Pohozaev => pohozaev(&config, &manifold, &u, &mut out)?,
    }
    Ok(out.written)
}

/// The input map, checked against the target. A field read from disk
/// replaces the configured lattice.
fn load_field(config: &mut RunConfig, manifold: &TargetManifold) -> Result<Field> {
    let k = manifold.ambient_dim();
    let u = match config.field.clone() {
        FieldSource::File { path } => {
            let u = read_bhm4(&path)?;
            config.adopt_grid(u.grid());
            u
        }
        FieldSource::PerturbedConstant { eps, variant } => {
            let mut pole = vec![0.0; k];
            pole[k - 1] = match &manifold.kind() {
                ManifoldKind::Sphere { .. } => 1.0,
                ManifoldKind::Ellipsoid { semi_axes } => semi_axes[k - 1],
            };
            perturbed_constant(&config.grid()?, manifold, &pole, eps, variant)?
        }
        FieldSource::Polynomial { eps, coeffs } => projected_polynomial_map(&config.grid()?, eps, &coeffs),
        FieldSource::Circle => CircleMap::default().field(&config.grid()?),
        FieldSource::Bubble { center, lambda } => {
            BubbleProfile::calibrated(config.eps0).plant(&config.grid()?, center, lambda)
        }
    };
    if u.components() != k {
        return Err(Error::ConfigInvalid(format!(
            "field has {} components, target lives in R^{k}",
            u.components()
        )));
    }
    Ok(u)
}

/// The configured forcing, or zero.
fn load_forcing(config: &RunConfig, u: &Field) -> Result<Field> {
    let Some(path) = &config.forcing else {
        return Ok(Field::constant(u.grid(), &vec![0.0; u.components()]));
    };
    let f = read_bhm4(path)?;
    let (a, b) = (f.grid(), u.grid());
    if a.n() != b.n() || a.h() != b.h() || f.components() != u.components() {
        return Err(Error::InputMissing(format!(
            "forcing {} does not match the field's lattice",
            path.display()
        )));
    }
    Ok(f)
}

fn rng(config: &RunConfig) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(config.seed)
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::ConfigInvalid(e.to_string()))
}

#[derive(Debug, Serialize)]
struct GeometryResiduals {
    samples: usize,
    projector_idempotence: f64,
    projector_sum: f64,
    b_normality: f64,
    b_symmetry: f64,
    /// max |B(y)(v, v) − |v|² y| on the unit sphere; absent for ellipsoids.
    sphere_b_identity: Option<f64>,
}

fn random_point(manifold: &TargetManifold, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let k = manifold.ambient_dim();
    loop {
        let d: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r > 1e-3 {
            return match manifold.kind() {
                ManifoldKind::Sphere { .. } => d.iter().map(|v| v / r).collect(),
                ManifoldKind::Ellipsoid { semi_axes } => d.iter().zip(semi_axes).map(|(v, a)| a * v / r).collect(),
            };
        }
    }
}

fn geometry_residuals(manifold: &TargetManifold, samples: usize, rng: &mut ChaCha8Rng) -> Result<GeometryResiduals> {
    let k = manifold.ambient_dim();
    let mut res = GeometryResiduals {
        samples,
        projector_idempotence: 0.0,
        projector_sum: 0.0,
        b_normality: 0.0,
        b_symmetry: 0.0,
        sphere_b_identity: manifold.is_sphere().then_some(0.0),
    };
    for _ in 0..samples {
        let y = random_point(manifold, rng);
        let pp = manifold.projectors(&y)?;
        let sq = &pp.p * &pp.p;
        let mut tangent = || -> Vec<f64> {
            let r: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
            (0..k).map(|i| (0..k).map(|j| pp.p[(i, j)] * r[j]).sum()).collect()
        };
        let (v, w) = (tangent(), tangent());
        for i in 0..k {
            for j in 0..k {
                let id = if i == j { 1.0 } else { 0.0 };
                res.projector_idempotence = res.projector_idempotence.max((sq[(i, j)] - pp.p[(i, j)]).abs());
                res.projector_sum = res.projector_sum.max((pp.p[(i, j)] + pp.p_perp[(i, j)] - id).abs());
            }
        }
        let bvw = manifold.second_fundamental_form(&y, &v, &w)?;
        let bwv = manifold.second_fundamental_form(&y, &w, &v)?;
        for i in 0..k {
            let tangential: f64 = (0..k).map(|j| pp.p[(i, j)] * bvw[j]).sum();
            res.b_normality = res.b_normality.max(tangential.abs());
            res.b_symmetry = res.b_symmetry.max((bvw[i] - bwv[i]).abs());
        }
        if let Some(worst) = res.sphere_b_identity.as_mut() {
            let bvv = manifold.second_fundamental_form(&y, &v, &v)?;
            let v2: f64 = v.iter().map(|t| t * t).sum();
            for i in 0..k {
                *worst = worst.max((bvv[i] - v2 * y[i]).abs());
            }
        }
    }
    Ok(res)
}

/// Σ over 4-subsets of random constant and affine coefficients.
fn random_four_form(k: usize, rng: &mut ChaCha8Rng) -> Result<FourForm> {
    let mut form = FourForm::zero(k);
    for a in 0..k {
        for b in a + 1..k {
            for c in b + 1..k {
                for d in c + 1..k {
                    form = form.with_term([a, b, c, d], rng.random_range(-1.0..1.0))?;
                    for e in 0..k {
                        form = form.with_linear_term(e, [a, b, c, d], rng.random_range(-1.0..1.0))?;
                    }
                }
            }
        }
    }
    Ok(form)
}

fn verify_identities(config: &RunConfig, manifold: &TargetManifold, u: &Field, out: &mut ArtifactWriter) -> Result<()> {
    let mut rng = rng(config);
    let geometry = geometry_residuals(manifold, config.verify.geometry_samples, &mut rng)?;
    let extrinsic = tension_extrinsic(u, manifold)?;
    let intrinsic = tension_intrinsic(u, manifold)?;
    let leibniz = leibniz_check(u, manifold, &Region::Whole)?;
    let (normal_form, _) = NormalFormCheck::run(u, manifold, &Region::Whole)?;
    let bounds = config.bounds()?;
    let master = master_identity(u, bounds, &config.sampling())?;
    let omega = random_four_form(manifold.ambient_dim(), &mut rng)?;
    let vanishing = lagrangian_pohozaev_vanishing(u, &omega, bounds)?;
    out.json(
        "identities.json",
        json!({
            "geometry": to_value(&geometry)?,
            "manifold_distance": manifold_distance(u, manifold),
            "bienergy": bienergy(u)?,
            "tension_terms": {
                "extrinsic": extrinsic.terms,
                "intrinsic": intrinsic.terms,
            },
            "leibniz": to_value(&leibniz)?,
            "normal_form": to_value(&normal_form)?,
            "master_identity": {
                "lhs": master.lhs,
                "rhs": master.rhs,
                "residual": master.residual,
                "relative_residual": master.residual.abs() / master.lhs.abs().max(f64::MIN_POSITIVE),
            },
            "lagrangian_pohozaev_vanishing": vanishing,
        }),
    )?;
    Ok(())
}

fn flow(config: &RunConfig, manifold: TargetManifold, u0: Field, out: &mut ArtifactWriter) -> Result<()> {
    let s = &config.flow;
    let dt = config.dt();
    let flow_config = FlowConfig { dt: Some(dt), c_cfl: s.c_cfl, snapshot_every: s.snapshot_every };
    let mut state = FlowState::new(u0, manifold, flow_config)?;
    state.run(s.steps)?;
    for snap in &state.snapshots {
        out.field(&format!("snapshots/u_{:06}.bhm4", snap.step), &snap.u)?;
    }
    let e = &state.energy_trace;
    let d = &state.dissipation_trace;
    let e0 = e[0].1;
    let mut dissipated = 0.0;
    let mut rows = Vec::with_capacity(e.len());
    for i in 0..e.len() {
        if i > 0 {
            dissipated += 0.5 * (d[i - 1].1 + d[i].1) * (d[i].0 - d[i - 1].0);
        }
        let defect = 2.0 * dissipated + e[i].1 - e0;
        rows.push(vec![num(e[i].0), num(e[i].1), num(d[i].1), num(defect)]);
    }
    out.csv("trace.csv", &["t", "energy", "dissipation", "defect"], &rows)?;
    let slice = state.select_time_slice()?;
    out.field("slice_u.bhm4", &slice.u)?;
    out.field("slice_f.bhm4", &slice.f)?;
    let max_increase = e.windows(2).map(|w| w[1].1 - w[0].1).fold(f64::NEG_INFINITY, f64::max);
    let defect = state.energy_identity_defect();
    out.json(
        "flow.json",
        json!({
            "steps": state.step,
            "dt": dt,
            "t_final": state.t,
            "free_nodes": state.free_node_count(),
            "initial_energy": e0,
            "final_energy": e[e.len() - 1].1,
            "max_energy_increase": if s.steps > 0 { max_increase } else { 0.0 },
            "energy_identity_defect": defect,
            "relative_defect": defect / e0.max(f64::MIN_POSITIVE),
            "manifold_distance": state.manifold_distance(),
            "selected_slice": {
                "step": slice.step,
                "t": slice.t,
                "forcing_l2": slice.f.l2_norm(&Region::Whole),
            },
        }),
    )?;
    Ok(())
}

fn analyze(config: &RunConfig, u: &Field, out: &mut ArtifactWriter) -> Result<()> {
    let forcing_l2 = match &config.forcing {
        Some(_) => Some(load_forcing(config, u)?.l2_norm(&Region::Whole)),
        None => None,
    };
    let tree = analyze_tree(u, &config.bubble_tree())?;
    let mut rows = Vec::new();
    for (b, neck) in tree.necks.iter().enumerate() {
        for (i, a) in neck.annuli.iter().enumerate() {
            rows.push(vec![
                b.to_string(),
                i.to_string(),
                num(a.inner),
                num(a.outer),
                num(a.energy),
                num(a.weak_norm),
                num(a.angular_energy),
            ]);
        }
    }
    out.csv(
        "necks.csv",
        &["bubble", "annulus", "rho", "outer", "energy", "weak_norm", "angular_energy"],
        &rows,
    )?;
    let mut results = to_value(&tree)?;
    results["forcing_l2"] = json!(forcing_l2);
    out.json("bubbletree.json", results)?;
    Ok(())
}

fn quantity_field(u: &Field, quantity: Quantity) -> Result<Field> {
    Ok(match quantity {
        Quantity::Value => u.pointwise_norm(),
        Quantity::Gradient => gradient(u)?.pointwise_norm(),
        Quantity::Hessian => hessian_norm(u)?,
        Quantity::Laplacian => laplacian(u)?.pointwise_norm(),
    })
}

fn q_value(q: Option<f64>) -> Value {
    match q {
        Some(q) => json!(q),
        None => json!("inf"),
    }
}

fn lorentz(config: &RunConfig, u: &Field, out: &mut ArtifactWriter) -> Result<()> {
    let s = &config.lorentz;
    let g = quantity_field(u, s.quantity)?;
    let sample = MeasuredSample::from_field(&g, &s.region.region())?;
    let mut rows = Vec::new();
    for e in &s.exponents {
        let q = e.q.map_or(LorentzQ::Infinity, LorentzQ::Finite);
        rows.push(json!({"p": e.p, "q": q_value(e.q), "norm": lorentz_norm(&sample, e.p, q)?}));
    }
    let mut rng = rng(config);
    let mut violations = 0usize;
    let mut max_ratio: f64 = 0.0;
    for _ in 0..s.duality_pairs {
        let n = s.duality_samples;
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let fv: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let gv: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (lhs, rhs) = duality_check(&MeasuredSample::new(fv, w.clone())?, &MeasuredSample::new(gv, w)?)?;
        if lhs > rhs {
            violations += 1;
        }
        if rhs > 0.0 {
            max_ratio = max_ratio.max(lhs / rhs);
        }
    }
    out.json(
        "lorentz.json",
        json!({
            "quantity": to_value(&s.quantity)?,
            "region": to_value(&s.region)?,
            "measure": sample.total_measure(),
            "rows": rows,
            "duality": {"pairs": s.duality_pairs, "violations": violations, "max_ratio": max_ratio},
        }),
    )?;
    Ok(())
}

fn harmonics(config: &RunConfig, u: &Field, out: &mut ArtifactWriter) -> Result<()> {
    let a = &config.annulus;
    let [n1, n2, n3] = a.sphere;
    let quad = S3Quadrature::new(n1, n2, n3);
    let basis = build_basis_with(config.l_max, &quad)?;
    let summary = basis.summary(&quad);
    let rows: Vec<Vec<String>> = summary
        .iter()
        .map(|d| {
            vec![
                d.l.to_string(),
                num(d.eigenvalue),
                d.multiplicity.to_string(),
                num(d.eigen_residual),
                num(d.orthonormality_defect),
            ]
        })
        .collect();
    out.csv(
        "basis.csv",
        &["l", "eigenvalue", "multiplicity", "eigen_residual", "orthonormality_defect"],
        &rows,
    )?;
    let annulus = AnnulusGrid::geometric(a.center, a.inner, a.outer, a.shell_ratio, quad)?;
    let sampled = polar_resample(u, &annulus)?;
    let mut components: Vec<AnnulusExpansion> = Vec::new();
    for c in 0..u.components() {
        let scalar = sampled.map(1, |_, v, o| o[0] = v[c]);
        components.push(annulus_expand(&scalar, &basis)?);
    }
    out.json(
        "harmonics.json",
        json!({
            "basis": to_value(&summary)?,
            "annulus": {"center": a.center, "inner": a.inner, "outer": a.outer, "shells": annulus.shell_count()},
            "components": to_value(&components)?,
        }),
    )?;
    Ok(())
}

fn pohozaev(config: &RunConfig, manifold: &TargetManifold, u: &Field, out: &mut ArtifactWriter) -> Result<()> {
    let f = load_forcing(config, u)?;
    let bounds = config.bounds()?;
    let sampling = config.sampling();
    let report = match config.annulus.variant {
        Variant::Extrinsic => pohozaev_extrinsic(u, &f, manifold, bounds, &sampling)?,
        Variant::Intrinsic => pohozaev_intrinsic(u, &f, manifold, bounds, &sampling)?,
    };
    let master = master_identity(u, bounds, &sampling)?;
    let omega = random_four_form(manifold.ambient_dim(), &mut rng(config))?;
    let vanishing = lagrangian_pohozaev_vanishing(u, &omega, bounds)?;
    let mut extra = BTreeMap::new();
    extra.insert("master_identity", to_value(&master)?);
    extra.insert("lagrangian_pohozaev_vanishing", json!(vanishing));
    let mut results = to_value(&report)?;
    results["checks"] = to_value(&extra)?;
    out.json("pohozaev.json", results)?;
    Ok(())
}
