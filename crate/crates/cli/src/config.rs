//! Run configuration, read from a single TOML file.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use bihm_core::bubbletree::{BubbleTreeConfig, DEFAULT_EPS0};
use bihm_core::grid4::{BallGrid4, Region, S3Quadrature};
use bihm_core::manifold::{ManifoldKind, TargetManifold};
use bihm_core::pohozaev::AnnulusBounds;
use bihm_core::s3harmonics::{AnnulusSampling, MAX_DEGREE};
use bihm_core::tension::Variant;
use bihm_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Everything a command needs. Every field has a default, and the fully
/// resolved value is echoed into each report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Lattice spacing.
    pub h: f64,
    /// Radius of the grid ball; 2·grid_radius/h must be an integer.
    pub grid_radius: f64,
    pub manifold: ManifoldSpec,
    pub eps0: f64,
    pub seed: u64,
    pub l_max: usize,
    pub output_dir: PathBuf,
    pub field: FieldSource,
    /// Optional BHM4 forcing f for `pohozaev` and `analyze`.
    pub forcing: Option<PathBuf>,
    pub flow: FlowSettings,
    pub annulus: AnnulusSpec,
    pub lorentz: LorentzSettings,
    pub analyze: AnalyzeSettings,
    pub verify: VerifySettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            h: 1.0 / 12.0,
            grid_radius: 0.75,
            manifold: ManifoldSpec::default(),
            eps0: DEFAULT_EPS0,
            seed: 0,
            l_max: 4,
            output_dir: PathBuf::from("out"),
            field: FieldSource::default(),
            forcing: None,
            flow: FlowSettings::default(),
            annulus: AnnulusSpec::default(),
            lorentz: LorentzSettings::default(),
            analyze: AnalyzeSettings::default(),
            verify: VerifySettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSpec {
    #[serde(flatten)]
    pub kind: ManifoldKind,
    /// Tubular-neighbourhood radius; the manifold's default when absent.
    #[serde(default)]
    pub reach: Option<f64>,
}

impl Default for ManifoldSpec {
    fn default() -> Self {
        Self { kind: ManifoldKind::Sphere { ambient_dim: 4 }, reach: None }
    }
}

/// Where the input map comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSource {
    /// Π(y₀ + ε g(x)) around the last coordinate pole of the target.
    PerturbedConstant {
        #[serde(default = "default_perturbation")]
        eps: f64,
        #[serde(default)]
        variant: usize,
    },
    /// Projected cubic polynomial map into S² ⊂ R³.
    Polynomial {
        #[serde(default = "default_polynomial_eps")]
        eps: f64,
        #[serde(default = "default_polynomial_coeffs")]
        coeffs: [f64; 6],
    },
    /// A map (cos φ, sin φ, 0) into S² with a fixed quartic phase φ.
    Circle,
    /// Calibrated bubble into S⁴ ⊂ R⁵ planted at `center` with scale `lambda`.
    Bubble {
        #[serde(default)]
        center: [f64; 4],
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    /// A BHM4 file; its grid replaces `h` and `grid_radius`.
    File { path: PathBuf },
}

fn default_perturbation() -> f64 {
    0.25
}

fn default_polynomial_eps() -> f64 {
    0.3
}

fn default_polynomial_coeffs() -> [f64; 6] {
    [1.0, 0.5, -0.7, 0.3, 0.8, -0.4]
}

fn default_lambda() -> f64 {
    0.1
}

impl Default for FieldSource {
    fn default() -> Self {
        FieldSource::PerturbedConstant { eps: default_perturbation(), variant: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSettings {
    /// dt = dt_factor · h⁴.
    pub dt_factor: f64,
    /// Largest admissible dt_factor.
    pub c_cfl: f64,
    pub steps: usize,
    /// A BHM4 snapshot is written every this many steps.
    pub snapshot_every: usize,
}

impl Default for FlowSettings {
    fn default() -> Self {
        Self { dt_factor: 0.1, c_cfl: 1.0, steps: 20, snapshot_every: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnulusSpec {
    pub center: [f64; 4],
    pub inner: f64,
    pub outer: f64,
    pub shell_ratio: f64,
    /// S³ product quadrature (ψ, θ, φ).
    pub sphere: [usize; 3],
    pub variant: Variant,
}

impl Default for AnnulusSpec {
    fn default() -> Self {
        Self {
            center: [0.0; 4],
            inner: 0.1,
            outer: 0.2,
            shell_ratio: 1.05,
            sphere: [16, 16, 32],
            variant: Variant::Extrinsic,
        }
    }
}

/// Pointwise quantity whose Lorentz norms are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Value,
    Gradient,
    Hessian,
    Laplacian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum RegionSpec {
    Whole,
    Ball { center: [f64; 4], radius: f64 },
    Annulus { center: [f64; 4], inner: f64, outer: f64 },
}

impl RegionSpec {
    pub fn region(&self) -> Region {
        match *self {
            RegionSpec::Whole => Region::Whole,
            RegionSpec::Ball { center, radius } => Region::Ball { center, radius },
            RegionSpec::Annulus { center, inner, outer } => Region::Annulus { center, inner, outer },
        }
    }
}

/// One (p, q) pair; q absent means q = ∞.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exponents {
    pub p: f64,
    #[serde(default)]
    pub q: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LorentzSettings {
    pub quantity: Quantity,
    pub region: RegionSpec,
    pub exponents: Vec<Exponents>,
    /// Random (f, g) pairs for the L^{2,1}–L^{2,∞} duality check.
    pub duality_pairs: usize,
    pub duality_samples: usize,
}

impl Default for LorentzSettings {
    fn default() -> Self {
        Self {
            quantity: Quantity::Hessian,
            region: RegionSpec::Whole,
            exponents: vec![
                Exponents { p: 2.0, q: Some(1.0) },
                Exponents { p: 2.0, q: Some(2.0) },
                Exponents { p: 2.0, q: None },
                Exponents { p: 4.0, q: None },
            ],
            duality_pairs: 100,
            duality_samples: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeSettings {
    /// Floor scale of the concentration test; 3h when absent.
    pub rho_min: Option<f64>,
    /// Localization radius and limit-region cutoff; chosen from the geometry
    /// when absent.
    pub localization_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    /// Random points and tangent pairs for the geometry checks.
    pub geometry_samples: usize,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self { geometry_samples: 1000 }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub h: Option<f64>,
    pub eps0: Option<f64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::InputMissing(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Reads `path` when given (defaults otherwise), applies the overrides
    /// and validates.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(out) = &overrides.out {
            cfg.output_dir = out.clone();
        }
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(h) = overrides.h {
            cfg.h = h;
        }
        if let Some(eps0) = overrides.eps0 {
            cfg.eps0 = eps0;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigInvalid(msg));
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad(format!("h must be positive, got {}", self.h));
        }
        if !(self.grid_radius > 0.0) {
            return bad(format!("grid_radius must be positive, got {}", self.grid_radius));
        }
        let cells = 2.0 * self.grid_radius / self.h;
        if (cells - cells.round()).abs() > 1e-9 * cells || cells.round() < 4.0 {
            return bad(format!("2·grid_radius/h = {cells} must be an integer >= 4"));
        }
        if !(self.eps0 > 0.0) {
            return bad(format!("eps0 must be positive, got {}", self.eps0));
        }
        if self.l_max > MAX_DEGREE {
            return bad(format!("l_max = {} exceeds {MAX_DEGREE}", self.l_max));
        }
        let f = &self.flow;
        if !(f.c_cfl > 0.0) {
            return bad(format!("c_cfl must be positive, got {}", f.c_cfl));
        }
        if !(f.dt_factor > 0.0) || f.dt_factor > f.c_cfl {
            return bad(format!(
                "flow time step dt = {}·h⁴ violates the stability bound dt <= {}·h⁴",
                f.dt_factor, f.c_cfl
            ));
        }
        if f.snapshot_every == 0 {
            return bad("snapshot_every must be positive".into());
        }
        let a = &self.annulus;
        if !(a.inner > 0.0 && a.outer > a.inner) {
            return bad(format!("annulus needs 0 < inner < outer, got ({}, {})", a.inner, a.outer));
        }
        if !(a.shell_ratio > 1.0) {
            return bad(format!("shell_ratio must exceed 1, got {}", a.shell_ratio));
        }
        if a.sphere.iter().any(|&n| n < 2) {
            return bad(format!("sphere quadrature {:?} needs at least 2 nodes per angle", a.sphere));
        }
        for e in &self.lorentz.exponents {
            if !(e.p > 1.0) || e.q.is_some_and(|q| !(q >= 1.0)) {
                return bad(format!("Lorentz exponents need p > 1, q >= 1, got {e:?}"));
            }
        }
        if self.lorentz.duality_samples == 0 {
            return bad("duality_samples must be positive".into());
        }
        let k = self.manifold()?.ambient_dim();
        let needed = match self.field {
            FieldSource::Polynomial { .. } | FieldSource::Circle => Some(3),
            FieldSource::Bubble { .. } => Some(5),
            _ => None,
        };
        if let Some(n) = needed {
            if !matches!(self.manifold.kind, ManifoldKind::Sphere { ambient_dim } if ambient_dim == n) {
                return bad(format!("field source {:?} needs the unit sphere in R^{n}, manifold has k = {k}", self.field));
            }
        }
        if let FieldSource::Bubble { lambda, .. } = self.field {
            if !(lambda > 0.0) {
                return bad(format!("bubble scale must be positive, got {lambda}"));
            }
        }
        Ok(())
    }

    pub fn manifold(&self) -> Result<TargetManifold> {
        TargetManifold::with_reach(self.manifold.kind.clone(), self.manifold.reach)
    }

    pub fn grid(&self) -> Result<Arc<BallGrid4>> {
        BallGrid4::new(self.grid_radius, self.h)
    }

    pub fn dt(&self) -> f64 {
        self.flow.dt_factor * self.h.powi(4)
    }

    pub fn bounds(&self) -> Result<AnnulusBounds> {
        AnnulusBounds::new(self.annulus.inner, self.annulus.outer)
    }

    pub fn sampling(&self) -> AnnulusSampling {
        let [a, b, c] = self.annulus.sphere;
        AnnulusSampling { shell_ratio: self.annulus.shell_ratio, sphere: S3Quadrature::new(a, b, c) }
    }

    pub fn bubble_tree(&self) -> BubbleTreeConfig {
        BubbleTreeConfig {
            eps0: self.eps0,
            rho_min: self.analyze.rho_min,
            localization_radius: self.analyze.localization_radius,
        }
    }

    /// Adopts the lattice of a field read from disk.
    pub fn adopt_grid(&mut self, grid: &BallGrid4) {
        self.h = grid.h();
        self.grid_radius = grid.radius();
    }
}
