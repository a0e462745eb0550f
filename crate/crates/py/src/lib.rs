//! Python module `bwb`: planform geometry, the aerodynamic oracle, trained
//! surrogates and diffusion sampler, metrics, and the pipeline stages.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use bwb_core::diffusion::{CdmModel, ConditionVector};
use bwb_core::geom::{self, ParamBox, N_PARAMS};
use bwb_core::invert::Method;
use bwb_core::io::{load_checkpoint, read_surface_fields, write_surface_fields};
use bwb_core::pipeline::{self as pl, PipelineConfig, Profile, WorkDir};
use bwb_core::surrogate::{oracle_aero, LdSurrogate};
use bwb_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Shape { .. } | Error::NonFinite(_) | Error::NotApplicable(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Nine planform parameters: span fractions b1-b3, chord fractions c2-c4,
/// sweeps s1, s3 in degrees and break position x3.
#[pyclass(name = "PlanformParams", module = "bwb", from_py_object)]
#[derive(Clone, Copy)]
struct PyPlanform(geom::PlanformParams);

#[pymethods]
impl PyPlanform {
    #[new]
    #[allow(clippy::too_many_arguments)]
    fn new(b1: f64, b2: f64, b3: f64, c2: f64, c3: f64, c4: f64, s1: f64, s3: f64, x3: f64) -> Self {
        Self(geom::PlanformParams::from_array([b1, b2, b3, c2, c3, c4, s1, s3, x3]))
    }

    #[staticmethod]
    fn from_list(v: Vec<f64>) -> PyResult<Self> {
        geom::PlanformParams::from_slice(&v).map(Self).map_err(py_err)
    }

    /// Centre of the feasible box.
    #[staticmethod]
    fn midpoint() -> Self {
        Self(ParamBox::default().midpoint())
    }

    fn to_list(&self) -> Vec<f64> {
        self.0.to_array().to_vec()
    }

    fn in_box(&self) -> bool {
        ParamBox::default().contains(&self.0)
    }

    fn __repr__(&self) -> String {
        let v: Vec<String> = self.0.to_array().iter().map(|x| format!("{x}")).collect();
        format!("PlanformParams({})", v.join(", "))
    }
}

#[pyclass(name = "FlightCondition", module = "bwb", from_py_object)]
#[derive(Clone, Copy)]
struct PyFlight(geom::FlightCondition);

#[pymethods]
impl PyFlight {
    #[new]
    fn new(altitude_kft: f64, mach: f64, centerline_length: f64, alpha_deg: f64) -> PyResult<Self> {
        geom::FlightCondition::new(altitude_kft, mach, centerline_length, alpha_deg)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn altitude_kft(&self) -> f64 {
        self.0.altitude_kft
    }
    #[getter]
    fn mach(&self) -> f64 {
        self.0.mach
    }
    #[getter]
    fn centerline_length(&self) -> f64 {
        self.0.centerline_length
    }
    #[getter]
    fn alpha_deg(&self) -> f64 {
        self.0.alpha_deg
    }
    #[getter]
    fn reynolds(&self) -> f64 {
        self.0.reynolds
    }

    fn __repr__(&self) -> String {
        let f = &self.0;
        format!(
            "FlightCondition(altitude_kft={}, mach={}, centerline_length={}, alpha_deg={})",
            f.altitude_kft, f.mach, f.centerline_length, f.alpha_deg
        )
    }
}

fn cloud_dict<'py>(py: Python<'py>, c: &geom::SurfacePointCloud) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("points", c.points.iter().map(|p| p.to_vec()).collect::<Vec<_>>())?;
    d.set_item("normals", c.normals.iter().map(|p| p.to_vec()).collect::<Vec<_>>())?;
    d.set_item("polygons", c.polygons.clone())?;
    for (k, v) in [("cp", &c.cp), ("cfx", &c.cfx), ("cfy", &c.cfy), ("cfz", &c.cfz)] {
        d.set_item(k, v.clone())?;
    }
    Ok(d)
}

/// Closed-form aerodynamic oracle. Returns coefficients and the surface
/// fields on an `n_chord` x `n_span` lofted grid.
#[pyfunction]
#[pyo3(signature = (params, condition, n_chord=10, n_span=6))]
fn oracle<'py>(
    py: Python<'py>,
    params: &PyPlanform,
    condition: &PyFlight,
    n_chord: usize,
    n_span: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let r = oracle_aero(&params.0, &condition.0, &geom::SurfaceOptions::new(n_chord, n_span)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("cl", r.coefficients.cl)?;
    d.set_item("cd", r.coefficients.cd)?;
    d.set_item("cm", r.coefficients.cm)?;
    d.set_item("ld", r.coefficients.ld)?;
    d.set_item("surface", cloud_dict(py, &r.surface)?)?;
    Ok(d)
}

/// Surface point cloud of a planform without aerodynamic fields.
#[pyfunction]
#[pyo3(signature = (params, n_chord=24, n_span=12))]
fn surface<'py>(py: Python<'py>, params: &PyPlanform, n_chord: usize, n_span: usize) -> PyResult<Bound<'py, PyDict>> {
    let c = geom::synthesize_surface(&params.0, n_chord, n_span).map_err(py_err)?;
    cloud_dict(py, &c)
}

#[pyfunction]
#[pyo3(signature = (params, path, n_chord=24, n_span=12))]
fn write_surface(params: &PyPlanform, path: PathBuf, n_chord: usize, n_span: usize) -> PyResult<()> {
    let c = geom::synthesize_surface(&params.0, n_chord, n_span).map_err(py_err)?;
    write_surface_fields(&path, &c, "planform").map_err(py_err)
}

#[pyfunction]
fn read_vtk(py: Python<'_>, path: PathBuf) -> PyResult<Bound<'_, PyDict>> {
    let c = read_surface_fields(&path).map_err(py_err)?;
    cloud_dict(py, &c)
}

/// Mean relative error of a planform against a reference, per-parameter
/// differences divided by `ranges`.
#[pyfunction]
fn mre(guess: &PyPlanform, truth: &PyPlanform, ranges: Vec<f64>) -> PyResult<f64> {
    let r: [f64; N_PARAMS] = ranges
        .try_into()
        .map_err(|_| PyValueError::new_err(format!("ranges needs {N_PARAMS} entries")))?;
    bwb_core::eval::mre(&guess.0, &truth.0, &r).map_err(py_err)
}

/// Mean pairwise distance and mean nearest-neighbour distance of a set of
/// vectors.
#[pyfunction]
fn diversity(samples: Vec<Vec<f64>>) -> PyResult<(f64, f64)> {
    let d = bwb_core::eval::diversity(&samples).map_err(py_err)?;
    Ok((d.mpd, d.min_dist))
}

#[pyclass(name = "LdSurrogate", module = "bwb")]
struct PyLd(LdSurrogate);

#[pymethods]
impl PyLd {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        load_checkpoint(&path).map(Self).map_err(py_err)
    }

    fn predict(&self, params: &PyPlanform, condition: &PyFlight) -> PyResult<f64> {
        self.0.predict_ld(&params.0, &condition.0).map_err(py_err)
    }

    /// Prediction and its gradient with respect to the nine parameters.
    fn gradient(&self, params: &PyPlanform, condition: &PyFlight) -> PyResult<(f64, Vec<f64>)> {
        let (v, g) = self.0.predict_ld_grad(&params.0, &condition.0).map_err(py_err)?;
        Ok((v, g.to_vec()))
    }
}

#[pyclass(name = "Cdm", module = "bwb")]
struct PyCdm(CdmModel);

#[pymethods]
impl PyCdm {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        load_checkpoint(&path).map(Self).map_err(py_err)
    }

    /// Draws `k` planforms for a flight condition and target L/D.
    #[pyo3(signature = (condition, target_ld, k=32, seed=0))]
    fn sample(&self, condition: &PyFlight, target_ld: f64, k: usize, seed: u64) -> PyResult<Vec<PyPlanform>> {
        let mu = ConditionVector::new(&condition.0, target_ld);
        let ps = self.0.sample(&mu, k, seed).map_err(py_err)?;
        Ok(ps.into_iter().map(PyPlanform).collect())
    }
}

/// Work directory plus configuration; each method runs one pipeline stage.
#[pyclass(name = "Pipeline", module = "bwb")]
struct PyPipeline {
    cfg: PipelineConfig,
    wd: WorkDir,
}

#[pymethods]
impl PyPipeline {
    #[new]
    #[pyo3(signature = (dir, profile="smoke", seed=0, config=None))]
    fn new(dir: PathBuf, profile: &str, seed: u64, config: Option<&str>) -> PyResult<Self> {
        let p: Profile = profile.parse().map_err(py_err)?;
        let mut cfg = PipelineConfig::profile(p, seed);
        if let Some(text) = config {
            cfg.apply_toml(text).map_err(py_err)?;
        }
        Ok(Self { cfg, wd: WorkDir::new(dir) })
    }

    fn gen_data(&self, py: Python<'_>) -> PyResult<()> {
        py.detach(|| pl::gen_data(&self.cfg, &self.wd)).map_err(py_err)
    }

    /// Trains the surrogates and returns their held-out report as JSON text.
    fn train_surrogates(&self, py: Python<'_>) -> PyResult<String> {
        let r = py.detach(|| pl::train_surrogates(&self.cfg, &self.wd)).map_err(py_err)?;
        serde_json::to_string(&r).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn train_diffusion(&self, py: Python<'_>) -> PyResult<()> {
        py.detach(|| pl::train_diffusion(&self.cfg, &self.wd)).map(|_| ()).map_err(py_err)
    }

    #[pyo3(signature = (methods=None, workers=1))]
    fn invert(&self, py: Python<'_>, methods: Option<Vec<String>>, workers: usize) -> PyResult<()> {
        let methods: Vec<Method> = match methods {
            None => Method::ALL.to_vec(),
            Some(v) => v.iter().map(|m| m.parse()).collect::<Result<_, _>>().map_err(py_err)?,
        };
        py.detach(|| pl::invert(&self.cfg, &self.wd, &methods, workers))
            .map(|_| ())
            .map_err(py_err)
    }

    /// Computes metrics and returns them as JSON text.
    fn evaluate(&self, py: Python<'_>) -> PyResult<String> {
        let m = py.detach(|| pl::evaluate(&self.cfg, &self.wd)).map_err(py_err)?;
        serde_json::to_string(&m).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    /// Writes the summary table and returns its CSV text.
    fn report(&self) -> PyResult<String> {
        let path = pl::report(&self.wd).map_err(py_err)?;
        std::fs::read_to_string(&path).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[getter]
    fn ld_checkpoint(&self) -> PathBuf {
        self.wd.ld_checkpoint()
    }

    #[getter]
    fn cdm_checkpoint(&self) -> PathBuf {
        self.wd.cdm_checkpoint()
    }
}

#[pymodule]
fn bwb(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPlanform>()?;
    m.add_class::<PyFlight>()?;
    m.add_class::<PyLd>()?;
    m.add_class::<PyCdm>()?;
    m.add_class::<PyPipeline>()?;
    m.add_function(wrap_pyfunction!(oracle, m)?)?;
    m.add_function(wrap_pyfunction!(surface, m)?)?;
    m.add_function(wrap_pyfunction!(write_surface, m)?)?;
    m.add_function(wrap_pyfunction!(read_vtk, m)?)?;
    m.add_function(wrap_pyfunction!(mre, m)?)?;
    m.add_function(wrap_pyfunction!(diversity, m)?)?;
    m.add("PARAM_LO", ParamBox::default().lo.to_vec())?;
    m.add("PARAM_HI", ParamBox::default().hi.to_vec())?;
    Ok(())
}
