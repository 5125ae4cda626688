//! Python bindings: `import toral_clt`.

use std::path::Path;
use std::sync::Arc;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::Rational64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

use toral_core::clt::{self, CltExperiment, Standardization};
use toral_core::coboundary::{self, CoboundarySource};
use toral_core::ergodic;
use toral_core::experiment::{self, ExperimentConfig};
use toral_core::lattice::{self, FreqVector, SeparationInstance};
use toral_core::products::{self, WordSource};
use toral_core::sl2;

fn err(e: toral_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let s = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (s,))?.unbind())
}

#[pyclass(name = "IntMatrix", module = "toral_clt")]
#[derive(Clone)]
struct PyIntMatrix(toral_core::IntMatrix);

#[pymethods]
impl PyIntMatrix {
    #[new]
    fn new(rows: Vec<Vec<BigInt>>) -> PyResult<Self> {
        toral_core::IntMatrix::new(rows).map(Self).map_err(err)
    }

    fn rows(&self) -> Vec<Vec<BigInt>> {
        self.0.rows()
    }

    fn det(&self) -> BigInt {
        self.0.det()
    }

    fn trace(&self) -> BigInt {
        self.0.trace()
    }

    fn sup_norm(&self) -> BigInt {
        self.0.sup_norm()
    }

    fn __matmul__(&self, other: &PyIntMatrix) -> PyResult<Self> {
        self.0.mul(&other.0).map(Self).map_err(err)
    }

    fn __eq__(&self, other: &PyIntMatrix) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("IntMatrix({:?})", self.0.rows().iter().map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>()).collect::<Vec<_>>())
    }
}

#[pyclass(name = "Alphabet", module = "toral_clt")]
#[derive(Clone)]
struct PyAlphabet(Arc<toral_core::Alphabet>);

#[pymethods]
impl PyAlphabet {
    #[new]
    fn new(matrices: Vec<PyIntMatrix>) -> PyResult<Self> {
        toral_core::Alphabet::from_matrices(matrices.into_iter().map(|m| m.0).collect())
            .map(|a| Self(Arc::new(a)))
            .map_err(err)
    }

    #[staticmethod]
    fn standard() -> Self {
        Self(Arc::new(toral_core::Alphabet::standard_positive()))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn matrix(&self, k: usize) -> PyResult<PyIntMatrix> {
        if k >= self.0.len() {
            return Err(PyValueError::new_err("letter index out of range"));
        }
        Ok(PyIntMatrix(self.0.matrix(k).clone()))
    }

    /// Draws an i.i.d. uniform word of length `n`.
    fn sample_word(&self, n: usize, seed: u64) -> PyResult<PyWord> {
        products::sample_word(&WordSource::uniform(self.0.clone(), seed), n).map(PyWord).map_err(err)
    }
}

#[pyclass(name = "Word", module = "toral_clt")]
#[derive(Clone)]
struct PyWord(toral_core::Word);

#[pymethods]
impl PyWord {
    #[new]
    fn new(alphabet: &PyAlphabet, indices: Vec<usize>) -> PyResult<Self> {
        toral_core::Word::new(alphabet.0.clone(), indices).map(Self).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn indices(&self) -> Vec<usize> {
        self.0.indices().to_vec()
    }

    /// `A_i ⋯ A_j`, 1-based and inclusive.
    fn product(&self, i: usize, j: usize) -> PyResult<PyIntMatrix> {
        self.0.product(i, j).map(PyIntMatrix).map_err(err)
    }

    /// `A_1 ⋯ A_ℓ p`.
    fn pushforward(&self, ell: usize, p: Vec<BigInt>) -> PyResult<Vec<BigInt>> {
        lattice::pushforward(&self.0, ell, &FreqVector(p)).map(|v| v.0).map_err(err)
    }
}

#[pyclass(name = "TrigPoly", module = "toral_clt")]
#[derive(Clone)]
struct PyTrigPoly(toral_core::TrigPoly);

#[pymethods]
impl PyTrigPoly {
    /// Terms are `(frequency, re, im)`; missing negative frequencies get the conjugate.
    #[new]
    fn new(dim: usize, terms: Vec<(Vec<i64>, f64, f64)>) -> PyResult<Self> {
        toral_core::TrigPoly::from_terms(dim, terms.into_iter().map(|(p, re, im)| (p, Complex64::new(re, im))))
            .map(Self)
            .map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (p, amplitude = 1.0))]
    fn cosine(p: Vec<i64>, amplitude: f64) -> Self {
        Self(toral_core::TrigPoly::cosine(&p, amplitude))
    }

    fn coeff(&self, p: Vec<i64>) -> (f64, f64) {
        let c = self.0.coeff(&p);
        (c.re, c.im)
    }

    fn terms(&self) -> Vec<(Vec<i64>, f64, f64)> {
        self.0.full_support().into_iter().map(|(p, c)| (p, c.re, c.im)).collect()
    }

    fn center(&self) -> Self {
        Self(self.0.center())
    }

    fn __add__(&self, other: &PyTrigPoly) -> Self {
        Self(self.0.add(&other.0))
    }

    fn __sub__(&self, other: &PyTrigPoly) -> Self {
        Self(self.0.sub(&other.0))
    }

    fn l2_norm_sq(&self) -> f64 {
        self.0.l2_norm_sq()
    }

    /// Evaluates at a point of `[0, 1)^d`.
    fn __call__(&self, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.0.dim() {
            return Err(PyValueError::new_err("point has the wrong dimension"));
        }
        Ok(self.0.eval_unit(&x))
    }
}

/// Exact `‖S_n g‖₂²` for a zero-mean polynomial.
#[pyfunction]
fn exact_l2_norm_sq(word: &PyWord, g: &PyTrigPoly, n: usize) -> PyResult<f64> {
    ergodic::exact_l2_norm_sq(&word.0, &g.0, n).map_err(err)
}

#[pyfunction]
fn quenched_variance_curve(word: &PyWord, g: &PyTrigPoly, n_grid: Vec<usize>) -> PyResult<Vec<f64>> {
    ergodic::quenched_variance_curve(&word.0, &g.0, &n_grid).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (word, d_bound, gap, s_max, particular = false))]
fn check_separation(py: Python<'_>, word: &PyWord, d_bound: u64, gap: usize, s_max: usize, particular: bool) -> PyResult<PyObject> {
    let mut inst = SeparationInstance::new(word.0.clone(), d_bound, gap, s_max);
    inst.particular = particular;
    let report = py.allow_threads(|| lattice::check_separation(&inst)).map_err(err)?;
    to_py(py, &report)
}

#[pyfunction]
fn spectral(py: Python<'_>, m: &PyIntMatrix) -> PyResult<PyObject> {
    to_py(py, &sl2::spectral(&m.0).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (alphabet, budget = sl2::DEFAULT_SAMPLE_BUDGET, seed = 0))]
fn dilation_constants(py: Python<'_>, alphabet: &PyAlphabet, budget: usize, seed: u64) -> PyResult<PyObject> {
    let k = py.allow_threads(|| sl2::dilation_constants(&alphabet.0, budget, seed)).map_err(err)?;
    to_py(py, &k)
}

#[pyfunction]
#[pyo3(signature = (matrix, f, horizon = coboundary::DEFAULT_HORIZON, assume_condition = false))]
fn coboundary_detect(py: Python<'_>, matrix: &PyIntMatrix, f: &PyTrigPoly, horizon: usize, assume_condition: bool) -> PyResult<PyObject> {
    let r = coboundary::coboundary_detect(CoboundarySource::Letter(&matrix.0), &f.0, horizon, assume_condition).map_err(err)?;
    to_py(py, &r)
}

/// `(numerator, denominator, no_rate)` of the exact rate exponent.
#[pyfunction]
fn rate_exponent(beta: (i64, i64), delta: (i64, i64)) -> PyResult<(i64, i64, bool)> {
    if beta.1 == 0 || delta.1 == 0 {
        return Err(PyValueError::new_err("zero denominator"));
    }
    let r = clt::rate_exponent(Rational64::new(beta.0, beta.1), Rational64::new(delta.0, delta.1));
    Ok((*r.gamma.numer(), *r.gamma.denom(), r.no_rate))
}

/// Standardized-sum CLT experiment with an i.i.d. uniform word source.
#[pyfunction]
#[pyo3(signature = (alphabet, f, n_grid, samples, seed = 0))]
fn run_clt(py: Python<'_>, alphabet: &PyAlphabet, f: &PyTrigPoly, n_grid: Vec<usize>, samples: usize, seed: u64) -> PyResult<PyObject> {
    let exp = CltExperiment {
        source: WordSource::uniform(alphabet.0.clone(), seed),
        f: &f.0,
        proxy: Some(&f.0),
        n_grid,
        samples,
        seed,
        q: toral_core::Modulus::default(),
        standardization: Standardization::ExactL2,
    };
    let report = py.allow_threads(|| clt::run_clt(&exp)).map_err(err)?;
    to_py(py, &report)
}

/// Validates a TOML configuration; raises `ValueError` when invalid.
#[pyfunction]
fn validate_config(text: &str) -> PyResult<String> {
    ExperimentConfig::from_toml(text).map(|c| c.task.name().to_string()).map_err(err)
}

/// Runs a TOML configuration, writing outputs into `out_dir`; returns the manifest.
#[pyfunction]
fn run_experiment(py: Python<'_>, config: &str, out_dir: &str) -> PyResult<PyObject> {
    let cfg = ExperimentConfig::from_toml(config).map_err(err)?;
    let m = py.allow_threads(|| experiment::run(&cfg, Path::new(out_dir))).map_err(err)?;
    to_py(py, &m)
}

#[pymodule]
fn toral_clt(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyIntMatrix>()?;
    m.add_class::<PyAlphabet>()?;
    m.add_class::<PyWord>()?;
    m.add_class::<PyTrigPoly>()?;
    m.add_function(wrap_pyfunction!(exact_l2_norm_sq, m)?)?;
    m.add_function(wrap_pyfunction!(quenched_variance_curve, m)?)?;
    m.add_function(wrap_pyfunction!(check_separation, m)?)?;
    m.add_function(wrap_pyfunction!(spectral, m)?)?;
    m.add_function(wrap_pyfunction!(dilation_constants, m)?)?;
    m.add_function(wrap_pyfunction!(coboundary_detect, m)?)?;
    m.add_function(wrap_pyfunction!(rate_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(run_clt, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("SCHEMA", experiment::SCHEMA)?;
    Ok(())
}
