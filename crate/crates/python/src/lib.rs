//! Python bindings. Tensors cross the boundary as flat lists in
//! first-index-fastest order; indices are 0-based on the Python side.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use ttcomp_core::coherence::{rip_estimate, CoherenceReport};
use ttcomp_core::harness::{self, PhaseConfig, SidePhaseConfig};
use ttcomp_core::rgd::{solve_completion, SolverConfig};
use ttcomp_core::sampling::{sample_uniform, Observations, SampleSet};
use ttcomp_core::tt::{gaussian_tt, tt_round, tt_svd};
use ttcomp_core::{io, DenseTensor, RankTuple, Shape, TtError};

fn err(e: TtError) -> PyErr {
    match e {
        TtError::Io(e) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(format!("{}: {e}", e.kind())),
    }
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(f)) => f.into_pyobject(py)?.into_any(),
            _ => py.None().into_bound(py),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(a) => {
            let items = a.iter().map(|x| to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any()
        }
        Value::Object(m) => {
            let d = PyDict::new(py);
            for (k, x) in m {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(v).map_err(|e| err(e.into()))?;
    to_py(py, &v)
}

fn observations(shape: &Shape, indices: Vec<Vec<usize>>, values: Vec<f64>) -> Result<Observations, TtError> {
    let d = shape.order();
    let mut flat = Vec::with_capacity(indices.len() * d);
    for (j, w) in indices.iter().enumerate() {
        if w.len() != d {
            return Err(TtError::DimensionMismatch(format!("index {j} has {} entries, need {d}", w.len())));
        }
        flat.extend_from_slice(w);
    }
    Observations::new(SampleSet::from_flat(shape.clone(), flat)?, values)
}

/// A tensor train.
#[pyclass(name = "TensorTrain", module = "ttcomp", frozen)]
struct PyTensorTrain {
    inner: ttcomp_core::TensorTrain,
}

#[pymethods]
impl PyTensorTrain {
    /// Random train with i.i.d. standard normal cores.
    #[staticmethod]
    #[pyo3(signature = (shape, ranks, seed=0))]
    fn gaussian(shape: Vec<usize>, ranks: Vec<usize>, seed: u64) -> PyResult<Self> {
        let shape = Shape::new(shape).map_err(err)?;
        let inner = gaussian_tt(&shape, &RankTuple::new(ranks), seed).map_err(err)?;
        Ok(PyTensorTrain { inner })
    }

    /// TT-SVD of a dense tensor given as a flat first-index-fastest list.
    #[staticmethod]
    fn from_dense(shape: Vec<usize>, data: Vec<f64>, ranks: Vec<usize>) -> PyResult<Self> {
        let x = DenseTensor::new(Shape::new(shape).map_err(err)?, data).map_err(err)?;
        let inner = tt_svd(&x, &RankTuple::new(ranks)).map_err(err)?;
        Ok(PyTensorTrain { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyTensorTrain { inner: io::load_tt(path.as_ref()).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        io::save_tt(path.as_ref(), &self.inner).map_err(err)
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape().dims().to_vec()
    }

    #[getter]
    fn ranks(&self) -> Vec<usize> {
        self.inner.ranks().0
    }

    fn norm(&self) -> f64 {
        self.inner.frob_norm()
    }

    fn __getitem__(&self, idx: Vec<usize>) -> PyResult<f64> {
        let shape = self.inner.shape();
        if idx.len() != shape.order() || idx.iter().zip(shape.dims()).any(|(&i, &n)| i >= n) {
            return Err(PyValueError::new_err(format!("index {idx:?} outside {:?}", shape.dims())));
        }
        Ok(self.inner.eval0(&idx))
    }

    fn to_dense(&self) -> PyResult<Vec<f64>> {
        Ok(self.inner.to_dense().map_err(err)?.into_data())
    }

    fn round(&self, ranks: Vec<usize>) -> PyResult<Self> {
        Ok(PyTensorTrain { inner: tt_round(&self.inner, &RankTuple::new(ranks)).map_err(err)? })
    }

    fn __sub__(&self, other: &PyTensorTrain) -> PyResult<Self> {
        Ok(PyTensorTrain { inner: self.inner.sub(&other.inner).map_err(err)? })
    }

    fn __repr__(&self) -> String {
        format!("TensorTrain(shape={:?}, ranks={:?})", self.shape(), self.ranks())
    }
}

/// Draw `count` uniform indices with replacement, returned 0-based.
#[pyfunction]
#[pyo3(signature = (shape, count, seed=0))]
fn sample(shape: Vec<usize>, count: usize, seed: u64) -> PyResult<Vec<Vec<usize>>> {
    let s = sample_uniform(&Shape::new(shape).map_err(err)?, count, seed).map_err(err)?;
    Ok((0..s.len()).map(|j| s.entry(j).to_vec()).collect())
}

/// Complete a tensor from observed entries. Returns `(tt, info)`.
#[pyfunction]
#[pyo3(signature = (shape, indices, values, ranks, seed=0, max_iters=500, test_indices=None, test_values=None))]
#[allow(clippy::too_many_arguments)]
fn complete<'py>(
    py: Python<'py>,
    shape: Vec<usize>,
    indices: Vec<Vec<usize>>,
    values: Vec<f64>,
    ranks: Vec<usize>,
    seed: u64,
    max_iters: usize,
    test_indices: Option<Vec<Vec<usize>>>,
    test_values: Option<Vec<f64>>,
) -> PyResult<(PyTensorTrain, Bound<'py, PyAny>)> {
    let shape = Shape::new(shape).map_err(err)?;
    let obs = observations(&shape, indices, values).map_err(err)?;
    let test = match (test_indices, test_values) {
        (Some(i), Some(v)) => Some(observations(&shape, i, v).map_err(err)?),
        (None, None) => None,
        _ => return Err(PyValueError::new_err("give both test_indices and test_values")),
    };
    let cfg = SolverConfig { max_iters, seed, ..SolverConfig::with_ranks(RankTuple::new(ranks)) };
    let res = py
        .detach(|| solve_completion(&obs, &cfg, None, None, test.as_ref()))
        .map_err(err)?;
    let info = serde_json::json!({
        "status": res.status,
        "iterations": res.iterations,
        "test_error": res.test_error,
        "success": res.success,
        "residuals": res.trace.rows.iter().map(|r| r.residual).collect::<Vec<_>>(),
    });
    Ok((PyTensorTrain { inner: res.x }, to_py(py, &info)?))
}

/// Coherence report as a dict.
#[pyfunction]
fn coherence<'py>(py: Python<'py>, x: &PyTensorTrain) -> PyResult<Bound<'py, PyAny>> {
    json_to_py(py, &CoherenceReport::new(&x.inner).map_err(err)?)
}

/// Tangent-space RIP constant for the given 0-based indices.
#[pyfunction]
fn rip<'py>(py: Python<'py>, x: &PyTensorTrain, indices: Vec<Vec<usize>>) -> PyResult<Bound<'py, PyAny>> {
    let n = indices.len();
    let obs = observations(x.inner.shape(), indices, vec![0.0; n]).map_err(err)?;
    json_to_py(py, &rip_estimate(&x.inner, obs.sample()).map_err(err)?)
}

/// Phase plot from a JSON config string; returns the CSV text.
#[pyfunction]
fn phase_plot(py: Python<'_>, config: &str) -> PyResult<String> {
    let cfg: PhaseConfig = serde_json::from_str(config).map_err(|e| err(e.into()))?;
    let t = py.detach(|| harness::run_phase_plot(&cfg)).map_err(err)?;
    let mut out = Vec::new();
    t.write_csv(&mut out).map_err(|e| err(e.into()))?;
    Ok(String::from_utf8(out).expect("CSV is ASCII"))
}

/// Side-information phase plot from a JSON config string.
#[pyfunction]
fn phase_plot_side(py: Python<'_>, config: &str) -> PyResult<String> {
    let cfg: SidePhaseConfig = serde_json::from_str(config).map_err(|e| err(e.into()))?;
    let t = py.detach(|| harness::run_phase_plot_side(&cfg)).map_err(err)?;
    let mut out = Vec::new();
    t.write_csv(&mut out).map_err(|e| err(e.into()))?;
    Ok(String::from_utf8(out).expect("CSV is ASCII"))
}

/// Rows `{k, median, mean, expected_mean}` for products of χ²(r).
#[pyfunction]
#[pyo3(signature = (r, k_max, samples=1_000_000, seed=0))]
fn chi_median<'py>(py: Python<'py>, r: usize, k_max: usize, samples: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let rows = py.detach(|| harness::run_chi_median(r, k_max, samples, seed)).map_err(err)?;
    json_to_py(py, &rows)
}

#[pymodule]
fn ttcomp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyTensorTrain>()?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(complete, m)?)?;
    m.add_function(wrap_pyfunction!(coherence, m)?)?;
    m.add_function(wrap_pyfunction!(rip, m)?)?;
    m.add_function(wrap_pyfunction!(phase_plot, m)?)?;
    m.add_function(wrap_pyfunction!(phase_plot_side, m)?)?;
    m.add_function(wrap_pyfunction!(chi_median, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observations_from_python_indices() {
        let shape = Shape::new(vec![3, 4]).unwrap();
        let obs = observations(&shape, vec![vec![2, 3], vec![0, 1]], vec![1.0, 2.0]).unwrap();
        assert_eq!(obs.sample().entries_flat(), &[2, 3, 0, 1]);
        assert!(observations(&shape, vec![vec![3, 0]], vec![1.0]).is_err());
        assert!(observations(&shape, vec![vec![0]], vec![1.0]).is_err());
    }
}
