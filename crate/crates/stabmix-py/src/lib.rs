//! Python bindings for the stabmix simulator: the stabilizer tableau,
//! two-qubit Clifford gates, entanglement reports, trajectory runs, and the
//! scaling fits, all exposed with plain Python types (ints, floats, dicts).

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stabmix::analysis::{
    data_collapse, fit_scaling, CollapsePoint, FitModel, QPoint,
};
use stabmix::circuit::{run_trajectory, Boundary, CircuitConfig, NoiseModel};
use stabmix::entanglement::{Bipartition, EntanglementReport};
use stabmix::gate::CliffordGate;
use stabmix::tableau::Tableau as CoreTableau;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Deterministic random stream (ChaCha8) for measurements and gate sampling.
#[pyclass(name = "Rng")]
struct PyRng(ChaCha8Rng);

#[pymethods]
impl PyRng {
    #[new]
    fn new(seed: u64) -> Self {
        PyRng(ChaCha8Rng::seed_from_u64(seed))
    }
}

/// Two-qubit Clifford gate, described by the images of X0, Z0, X1, Z1.
#[pyclass(name = "CliffordGate", skip_from_py_object)]
#[derive(Clone)]
struct PyCliffordGate(CliffordGate);

#[pymethods]
impl PyCliffordGate {
    #[staticmethod]
    fn identity() -> Self {
        PyCliffordGate(CliffordGate::identity())
    }

    #[staticmethod]
    fn hadamard_first() -> Self {
        PyCliffordGate(CliffordGate::hadamard_first())
    }

    #[staticmethod]
    fn phase_first() -> Self {
        PyCliffordGate(CliffordGate::phase_first())
    }

    #[staticmethod]
    fn cnot() -> Self {
        PyCliffordGate(CliffordGate::cnot())
    }

    #[staticmethod]
    fn swap() -> Self {
        PyCliffordGate(CliffordGate::swap())
    }

    /// Uniformly random element of the two-qubit Clifford group.
    #[staticmethod]
    fn sample(rng: &mut PyRng) -> Self {
        PyCliffordGate(CliffordGate::sample(&mut rng.0))
    }

    fn inverse(&self) -> Self {
        PyCliffordGate(self.0.inverse())
    }

    /// Images of X0, Z0, X1, Z1 as strings like "+XZ".
    fn images(&self) -> Vec<String> {
        self.0
            .images()
            .iter()
            .map(|p| p.to_pauli_string().to_string())
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("CliffordGate(images={:?})", self.images())
    }
}

/// Mixed stabilizer state on a chain of qubits, starting in |0...0>.
#[pyclass(name = "Tableau")]
struct PyTableau(CoreTableau);

#[pymethods]
impl PyTableau {
    #[new]
    fn new(n: usize) -> PyResult<Self> {
        Ok(PyTableau(CoreTableau::new_product_state(n).map_err(value_err)?))
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n_sites()
    }

    /// log2 of the purity: 0 for pure states, negative for mixed ones.
    fn purity_exponent(&self) -> i64 {
        self.0.purity_exponent()
    }

    fn apply_gate(&mut self, gate: &PyCliffordGate, i: usize, j: usize) -> PyResult<()> {
        self.0.apply_gate(&gate.0, i, j).map_err(value_err)
    }

    /// Projective Z measurement; returns the outcome (0 or 1).
    fn measure_z(&mut self, site: usize, rng: &mut PyRng) -> PyResult<u8> {
        Ok(self.0.measure_z(site, &mut rng.0).map_err(value_err)? as u8)
    }

    /// Incoherent reset of one site to |0>.
    fn reset(&mut self, site: usize) -> PyResult<()> {
        self.0.reset(site).map_err(value_err)
    }

    /// Current stabilizer generators as strings like "+ZZI".
    fn generators(&self) -> Vec<String> {
        self.0.generators().iter().map(|g| g.to_string()).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Tableau(n={}, generators={}, purity_exponent={})",
            self.0.n_sites(),
            self.0.generators().len(),
            self.0.purity_exponent()
        )
    }
}

fn report_dict<'py>(
    py: Python<'py>,
    report: &EntanglementReport,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("s_a", report.s_a)?;
    d.set_item("s_b", report.s_b)?;
    d.set_item("s_ab", report.s_ab)?;
    d.set_item("mutual_information", report.mutual_information)?;
    d.set_item("log_negativity", report.log_negativity)?;
    d.set_item("purity_exponent", report.purity_exponent)?;
    Ok(d)
}

/// Entanglement diagnostics of `tableau` for the bipartition `a` / `b`
/// (half-open site ranges; defaults to the half-chain split).
#[pyfunction]
#[pyo3(signature = (tableau, a=None, b=None))]
fn entanglement_report<'py>(
    py: Python<'py>,
    tableau: &PyTableau,
    a: Option<(usize, usize)>,
    b: Option<(usize, usize)>,
) -> PyResult<Bound<'py, PyDict>> {
    let n = tableau.0.n_sites();
    let bp = match (a, b) {
        (None, None) => Bipartition::half_chain(n),
        (Some(a), Some(b)) => Bipartition { a: a.0..a.1, b: b.0..b.1 },
        _ => return Err(value_err("pass both a and b, or neither")),
    };
    let report = EntanglementReport::compute(&tableau.0, &bp).map_err(value_err)?;
    report_dict(py, &report)
}

/// Run one circuit trajectory and return its observables as a dict.
#[pyfunction(name = "run_trajectory")]
#[pyo3(signature = (
    l, p, q, model="bulk_noise", boundary="pbc", t_noise=0, depth=None,
    master_seed=0, trajectory_index=0,
))]
#[allow(clippy::too_many_arguments)]
fn run_trajectory_py<'py>(
    py: Python<'py>,
    l: usize,
    p: f64,
    q: f64,
    model: &str,
    boundary: &str,
    t_noise: usize,
    depth: Option<usize>,
    master_seed: u64,
    trajectory_index: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = CircuitConfig {
        model: model.parse::<NoiseModel>().map_err(value_err)?,
        n_qubits: l,
        measure_rate: p,
        reset_rate: q,
        t_noise,
        boundary: boundary.parse::<Boundary>().map_err(value_err)?,
        depth: depth.unwrap_or_else(|| CircuitConfig::default_depth(l)),
        master_seed,
        trajectory_index,
    };
    let rec = run_trajectory(&cfg).map_err(value_err)?;
    let d = report_dict(py, &rec.report)?;
    d.set_item("l", cfg.n_qubits)?;
    d.set_item("depth", cfg.depth)?;
    d.set_item("stream", &rec.stream)?;
    Ok(d)
}

/// Fit `value(q)` with one of the scaling models ("pow13", "powfree",
/// "log"), optionally restricted to `q <= q_max`.
#[pyfunction(name = "fit_scaling")]
#[pyo3(signature = (q, value, stderr=None, model="pow13", q_max=None))]
fn fit_scaling_py<'py>(
    py: Python<'py>,
    q: Vec<f64>,
    value: Vec<f64>,
    stderr: Option<Vec<f64>>,
    model: &str,
    q_max: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    if q.len() != value.len() {
        return Err(value_err("q and value must have the same length"));
    }
    let stderr = stderr.unwrap_or_else(|| vec![0.0; q.len()]);
    if stderr.len() != q.len() {
        return Err(value_err("stderr must have the same length as q"));
    }
    let points: Vec<QPoint> = q
        .iter()
        .zip(&value)
        .zip(&stderr)
        .map(|((&q, &value), &stderr)| QPoint { q, value, stderr })
        .collect();
    let model: FitModel = model.parse().map_err(value_err)?;
    let fit = fit_scaling(&points, model, q_max).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("model", fit.model.to_string())?;
    d.set_item("a", fit.a)?;
    d.set_item("b", fit.b)?;
    d.set_item("exponent", fit.exponent)?;
    d.set_item("rss", fit.rss)?;
    d.set_item("n_used", fit.n_used)?;
    d.set_item("q_max", fit.q_max)?;
    Ok(d)
}

/// Finite-size data collapse of `value(l, q)` curves; returns the optimal
/// critical rate and exponent.
#[pyfunction(name = "data_collapse")]
#[pyo3(signature = (l, q, value, qc_range, nu_range))]
fn data_collapse_py<'py>(
    py: Python<'py>,
    l: Vec<usize>,
    q: Vec<f64>,
    value: Vec<f64>,
    qc_range: (f64, f64),
    nu_range: (f64, f64),
) -> PyResult<Bound<'py, PyDict>> {
    if l.len() != q.len() || q.len() != value.len() {
        return Err(value_err("l, q and value must have the same length"));
    }
    let points: Vec<CollapsePoint> = l
        .iter()
        .zip(&q)
        .zip(&value)
        .map(|((&l, &q), &value)| CollapsePoint { l, q, value })
        .collect();
    let res = data_collapse(&points, qc_range, nu_range).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("q_c", res.q_c)?;
    d.set_item("nu", res.nu)?;
    d.set_item("cost", res.cost)?;
    Ok(d)
}

#[pymodule]
fn stabmix_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRng>()?;
    m.add_class::<PyCliffordGate>()?;
    m.add_class::<PyTableau>()?;
    m.add_function(wrap_pyfunction!(entanglement_report, m)?)?;
    m.add_function(wrap_pyfunction!(run_trajectory_py, m)?)?;
    m.add_function(wrap_pyfunction!(fit_scaling_py, m)?)?;
    m.add_function(wrap_pyfunction!(data_collapse_py, m)?)?;
    Ok(())
}
