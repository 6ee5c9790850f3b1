//! Python bindings. Structured results come back as plain dicts and lists.

use std::path::PathBuf;
use std::sync::Arc;

use bihm_core::bubbletree::{analyze as analyze_tree, BubbleTreeConfig, DEFAULT_EPS0};
use bihm_core::fixtures::BubbleProfile;
use bihm_core::flow::{bienergy, perturbed_constant as perturbed, FlowConfig, FlowState};
use bihm_core::grid4::{read_bhm4, write_bhm4, BallGrid4, Region};
use bihm_core::lorentz::{duality_check as duality, lorentz_norm as lorentz, LorentzQ, MeasuredSample};
use bihm_core::manifold::TargetManifold;
use bihm_core::pohozaev::{pohozaev_extrinsic, pohozaev_intrinsic, AnnulusBounds};
use bihm_core::s3harmonics::{self, build_basis, AnnulusSampling, PowerNorm};
use bihm_core::tension::{tension_extrinsic, tension_intrinsic};
use bihm_core::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

fn py_err(e: Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py(py: Python<'_>, v: &Value) -> PyResult<PyObject> {
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any().unbind(),
            (None, Some(f)) => f.into_pyobject(py)?.into_any().unbind(),
            _ => py.None(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any().unbind()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any().unbind()
        }
    })
}

fn serialize<T: Serialize>(py: Python<'_>, v: &T) -> PyResult<PyObject> {
    let value = serde_json::to_value(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &value)
}

/// Target manifold N ⊂ R^k: a unit sphere or an axis-aligned ellipsoid.
#[pyclass(name = "Manifold", module = "bihm")]
#[derive(Clone)]
struct PyManifold {
    inner: TargetManifold,
}

#[pymethods]
impl PyManifold {
    #[staticmethod]
    #[pyo3(signature = (ambient_dim, reach = None))]
    fn sphere(ambient_dim: usize, reach: Option<f64>) -> PyResult<Self> {
        let kind = bihm_core::manifold::ManifoldKind::Sphere { ambient_dim };
        Ok(Self { inner: TargetManifold::with_reach(kind, reach).map_err(py_err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (semi_axes, reach = None))]
    fn ellipsoid(semi_axes: Vec<f64>, reach: Option<f64>) -> PyResult<Self> {
        let kind = bihm_core::manifold::ManifoldKind::Ellipsoid { semi_axes };
        Ok(Self { inner: TargetManifold::with_reach(kind, reach).map_err(py_err)? })
    }

    #[getter]
    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim()
    }

    #[getter]
    fn reach(&self) -> f64 {
        self.inner.reach()
    }

    fn nearest_point(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.nearest_point(&y).map_err(py_err)
    }

    /// (P, P⊥) as nested lists.
    fn projectors(&self, y: Vec<f64>) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let pp = self.inner.projectors(&y).map_err(py_err)?;
        let k = y.len();
        let rows = |m: &nalgebra::DMatrix<f64>| (0..k).map(|i| (0..k).map(|j| m[(i, j)]).collect()).collect();
        Ok((rows(&pp.p), rows(&pp.p_perp)))
    }

    fn second_fundamental_form(&self, y: Vec<f64>, v: Vec<f64>, w: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.second_fundamental_form(&y, &v, &w).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Manifold({:?})", self.inner.kind())
    }
}

/// A k-component field on the lattice of a 4-ball. Undefined nodes hold NaN.
#[pyclass(name = "Field", module = "bihm")]
#[derive(Clone)]
struct PyField {
    inner: bihm_core::grid4::Field,
}

fn grid(radius: f64, h: f64) -> PyResult<Arc<BallGrid4>> {
    BallGrid4::new(radius, h).map_err(py_err)
}

#[pymethods]
impl PyField {
    #[staticmethod]
    fn constant(radius: f64, h: f64, value: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: bihm_core::grid4::Field::constant(&grid(radius, h)?, &value) })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: read_bhm4(&path).map_err(py_err)? })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        write_bhm4(&path, &self.inner).map_err(py_err)
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.grid().h()
    }

    #[getter]
    fn radius(&self) -> f64 {
        self.inner.grid().radius()
    }

    /// Nodes per axis.
    #[getter]
    fn n(&self) -> usize {
        self.inner.grid().n()
    }

    #[getter]
    fn components(&self) -> usize {
        self.inner.components()
    }

    fn defined_count(&self) -> usize {
        self.inner.defined_count()
    }

    /// Flat values, node-major with components fastest.
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn at(&self, x: [f64; 4]) -> PyResult<Vec<f64>> {
        bihm_core::grid4::interpolate_at(&self.inner, &x).map_err(py_err)
    }

    fn l2_norm(&self) -> f64 {
        self.inner.l2_norm(&Region::Whole)
    }

    fn bienergy(&self) -> PyResult<f64> {
        bienergy(&self.inner).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        let g = self.inner.grid();
        format!("Field(radius={}, h={}, components={})", g.radius(), g.h(), self.inner.components())
    }
}

#[pyfunction]
#[pyo3(signature = (manifold, radius, h, y0, eps, variant = 0))]
fn perturbed_constant(manifold: &PyManifold, radius: f64, h: f64, y0: Vec<f64>, eps: f64, variant: usize) -> PyResult<PyField> {
    let u = perturbed(&grid(radius, h)?, &manifold.inner, &y0, eps, variant).map_err(py_err)?;
    Ok(PyField { inner: u })
}

/// Calibrated bubble into S⁴ ⊂ R⁵ centred at `center` with scale `lam`.
#[pyfunction]
#[pyo3(signature = (radius, h, center, lam, eps0 = DEFAULT_EPS0))]
fn planted_bubble(radius: f64, h: f64, center: [f64; 4], lam: f64, eps0: f64) -> PyResult<PyField> {
    Ok(PyField { inner: BubbleProfile::calibrated(eps0).plant(&grid(radius, h)?, center, lam) })
}

/// L² norm of every term of the tension field.
#[pyfunction]
#[pyo3(signature = (u, manifold, intrinsic = false))]
fn tension_terms(py: Python<'_>, u: &PyField, manifold: &PyManifold, intrinsic: bool) -> PyResult<PyObject> {
    let rep = if intrinsic {
        tension_intrinsic(&u.inner, &manifold.inner)
    } else {
        tension_extrinsic(&u.inner, &manifold.inner)
    }
    .map_err(py_err)?;
    serialize(py, &rep.terms)
}

/// Runs the biharmonic map heat flow with dt = dt_factor·h⁴. Returns
/// (final field, dict with energy/dissipation traces and the defect).
#[pyfunction]
#[pyo3(signature = (u0, manifold, steps, dt_factor = 0.1))]
fn flow(py: Python<'_>, u0: &PyField, manifold: &PyManifold, steps: usize, dt_factor: f64) -> PyResult<(PyField, PyObject)> {
    let h = u0.inner.grid().h();
    let cfg = FlowConfig { dt: Some(dt_factor * h.powi(4)), ..FlowConfig::default() };
    let mut state = FlowState::new(u0.inner.clone(), manifold.inner.clone(), cfg).map_err(py_err)?;
    state.run(steps).map_err(py_err)?;
    let summary = serde_json::json!({
        "energy": state.energy_trace,
        "dissipation": state.dissipation_trace,
        "energy_identity_defect": state.energy_identity_defect(),
        "manifold_distance": state.manifold_distance(),
    });
    Ok((PyField { inner: state.u.clone() }, to_py(py, &summary)?))
}

/// Concentration detection, bubble extraction, necks and bookkeeping.
#[pyfunction]
#[pyo3(signature = (u, eps0 = DEFAULT_EPS0, rho_min = None, localization_radius = None))]
fn analyze(py: Python<'_>, u: &PyField, eps0: f64, rho_min: Option<f64>, localization_radius: Option<f64>) -> PyResult<PyObject> {
    let tree = analyze_tree(&u.inner, &BubbleTreeConfig { eps0, rho_min, localization_radius }).map_err(py_err)?;
    serialize(py, &tree)
}

/// Both sides of the Pohozaev identity on B_outer ∖ B_inner.
#[pyfunction]
#[pyo3(signature = (u, f, manifold, inner, outer, intrinsic = false))]
fn pohozaev(
    py: Python<'_>,
    u: &PyField,
    f: &PyField,
    manifold: &PyManifold,
    inner: f64,
    outer: f64,
    intrinsic: bool,
) -> PyResult<PyObject> {
    let bounds = AnnulusBounds::new(inner, outer).map_err(py_err)?;
    let sampling = AnnulusSampling::default();
    let rep = if intrinsic {
        pohozaev_intrinsic(&u.inner, &f.inner, &manifold.inner, bounds, &sampling)
    } else {
        pohozaev_extrinsic(&u.inner, &f.inner, &manifold.inner, bounds, &sampling)
    }
    .map_err(py_err)?;
    serialize(py, &rep)
}

fn exponent(q: Option<f64>) -> LorentzQ {
    q.map_or(LorentzQ::Infinity, LorentzQ::Finite)
}

/// ‖f‖_{L^{p,q}} of a weighted sample; q = None means q = ∞.
#[pyfunction]
#[pyo3(signature = (values, weights, p, q = None))]
fn lorentz_norm(values: Vec<f64>, weights: Vec<f64>, p: f64, q: Option<f64>) -> PyResult<f64> {
    let s = MeasuredSample::new(values, weights).map_err(py_err)?;
    lorentz(&s, p, exponent(q)).map_err(py_err)
}

/// (Σ f g w, ‖f‖_{2,1} ‖g‖_{2,∞}) on common weights.
#[pyfunction]
fn duality_check(f: Vec<f64>, g: Vec<f64>, weights: Vec<f64>) -> PyResult<(f64, f64)> {
    let fs = MeasuredSample::new(f, weights.clone()).map_err(py_err)?;
    let gs = MeasuredSample::new(g, weights).map_err(py_err)?;
    duality(&fs, &gs).map_err(py_err)
}

#[pyfunction]
fn eigenvalue(l: usize) -> f64 {
    s3harmonics::eigenvalue(l)
}

#[pyfunction]
fn multiplicity(l: usize) -> usize {
    s3harmonics::multiplicity(l)
}

/// One row per degree: eigenvalue, multiplicity and the numerical defects.
#[pyfunction]
fn harmonic_basis(py: Python<'_>, l_max: usize) -> PyResult<PyObject> {
    let basis = build_basis(l_max).map_err(py_err)?;
    serialize(py, &basis.summary(&Default::default()))
}

/// ‖f_j‖₂ on B₁∖B_r (kind "l2") or ‖f_j‖_{L^{2,1}(B_{1/2}∖B_{2r})} (kind "l21").
#[pyfunction]
fn power_norm(j: f64, r: f64, kind: &str) -> PyResult<f64> {
    let kind = match kind {
        "l2" => PowerNorm::L2,
        "l21" => PowerNorm::L21,
        other => return Err(PyValueError::new_err(format!("unknown norm kind {other:?}"))),
    };
    s3harmonics::power_norms(j, r, kind).map_err(py_err)
}

#[pymodule]
fn bihm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyManifold>()?;
    m.add_class::<PyField>()?;
    m.add_function(wrap_pyfunction!(perturbed_constant, m)?)?;
    m.add_function(wrap_pyfunction!(planted_bubble, m)?)?;
    m.add_function(wrap_pyfunction!(tension_terms, m)?)?;
    m.add_function(wrap_pyfunction!(flow, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(pohozaev, m)?)?;
    m.add_function(wrap_pyfunction!(lorentz_norm, m)?)?;
    m.add_function(wrap_pyfunction!(duality_check, m)?)?;
    m.add_function(wrap_pyfunction!(eigenvalue, m)?)?;
    m.add_function(wrap_pyfunction!(multiplicity, m)?)?;
    m.add_function(wrap_pyfunction!(harmonic_basis, m)?)?;
    m.add_function(wrap_pyfunction!(power_norm, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
