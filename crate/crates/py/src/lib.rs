//! Python bindings: models, property automata, and the checking pipeline.
//!
//! Results are returned as plain dicts mirroring the command line's JSON
//! reports.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value as Json;

use caretprob::analysis::{self, CheckOptions, Query};
use caretprob::caret::{eval_caret_on_lasso, parse_caret};
use caretprob::format::{bundled, parse_prob, parse_pvpa, parse_vpa, write_pvpa, write_vpa};
use caretprob::lasso::LassoWord;
use caretprob::probsolve::{solve, Backend, SolveOptions};
use caretprob::product::{build_product, LabelMatch};
use caretprob::report::returns_json;
use caretprob::stepchain::build_step_chain;
use caretprob::translate::{caret_to_nvpa, determinize};
use caretprob::{Error, Symbol};

fn err(e: Error) -> PyErr {
    match e {
        Error::Parse { .. } | Error::Syntax { .. } | Error::Invalid(_) | Error::UnknownAtom(_) | Error::UnknownSymbol(_) | Error::AlphabetMismatch(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py(py: Python<'_>, v: &Json) -> PyResult<Py<PyAny>> {
    Ok(match v {
        Json::Null => py.None(),
        Json::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Json::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any().unbind(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind(),
        },
        Json::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        Json::Array(xs) => {
            let l = PyList::empty(py);
            for x in xs {
                l.append(to_py(py, x)?)?;
            }
            l.into_any().unbind()
        }
        Json::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any().unbind()
        }
    })
}

fn bundled_text(name: &str) -> PyResult<&'static str> {
    bundled(name).ok_or_else(|| PyValueError::new_err(format!("no bundled file `{name}`")))
}

/// A probabilistic visibly pushdown automaton.
#[pyclass(name = "Pvpa", module = "pycaretprob", skip_from_py_object)]
#[derive(Clone)]
struct PyPvpa {
    inner: caretprob::pvpa::Pvpa,
}

#[pymethods]
impl PyPvpa {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<PyPvpa> {
        Ok(PyPvpa { inner: parse_pvpa(text, "<text>").map_err(err)? })
    }

    #[staticmethod]
    fn bundled(name: &str) -> PyResult<PyPvpa> {
        Ok(PyPvpa { inner: parse_pvpa(bundled_text(name)?, name).map_err(err)? })
    }

    #[getter]
    fn states(&self) -> Vec<String> {
        self.inner.states.clone()
    }

    #[getter]
    fn stack(&self) -> Vec<String> {
        self.inner.stack.clone()
    }

    #[getter]
    fn initial(&self) -> String {
        self.inner.states[self.inner.initial].clone()
    }

    fn to_text(&self) -> String {
        write_pvpa(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("Pvpa({} states, {} stack symbols)", self.inner.num_states(), self.inner.stack.len())
    }
}

/// A visibly pushdown automaton used as a property.
#[pyclass(name = "Vpa", module = "pycaretprob", skip_from_py_object)]
#[derive(Clone)]
struct PyVpa {
    inner: caretprob::vpa::Vpa,
}

#[pymethods]
impl PyVpa {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<PyVpa> {
        Ok(PyVpa { inner: parse_vpa(text, "<text>").map_err(err)? })
    }

    #[staticmethod]
    fn bundled(name: &str) -> PyResult<PyVpa> {
        Ok(PyVpa { inner: parse_vpa(bundled_text(name)?, name).map_err(err)? })
    }

    /// Translates a CaRet formula into a Büchi NVPA over its atoms.
    #[staticmethod]
    fn from_caret(formula: &str) -> PyResult<PyVpa> {
        let phi = parse_caret(formula).map_err(err)?;
        Ok(PyVpa { inner: caret_to_nvpa(&phi, &phi.atoms()).map_err(err)? })
    }

    fn determinize(&self) -> PyResult<PyVpa> {
        Ok(PyVpa { inner: determinize(&self.inner).map_err(err)? })
    }

    #[getter]
    fn states(&self) -> Vec<String> {
        self.inner.states.clone()
    }

    #[getter]
    fn deterministic(&self) -> bool {
        self.inner.is_deterministic()
    }

    fn to_text(&self) -> String {
        write_vpa(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("Vpa({} states, {} stack symbols)", self.inner.states.len(), self.inner.stack.len())
    }
}

fn options(backend: &str) -> PyResult<SolveOptions> {
    let b: Backend = backend.parse().map_err(err)?;
    Ok(SolveOptions { backend: b, ..Default::default() })
}

fn query(threshold: Option<&str>) -> PyResult<Query> {
    Ok(match threshold {
        Some(t) => Query::AtLeast(parse_prob(t).map_err(PyValueError::new_err)?),
        None => Query::AlmostSure,
    })
}

/// Return and divergence probabilities.
#[pyfunction]
#[pyo3(signature = (model, backend = "exact"))]
fn returns(py: Python<'_>, model: &PyPvpa, backend: &str) -> PyResult<Py<PyAny>> {
    let t = solve(&model.inner, &options(backend)?).map_err(err)?;
    to_py(py, &returns_json(&model.inner, &t))
}

/// Step chain of the model, or of its product with a parity DVPA.
#[pyfunction]
#[pyo3(signature = (model, dvpa = None, reachable = false, backend = "exact"))]
fn step_chain(py: Python<'_>, model: &PyPvpa, dvpa: Option<&PyVpa>, reachable: bool, backend: &str) -> PyResult<Py<PyAny>> {
    let target = match dvpa {
        Some(d) => build_product(&model.inner, &d.inner).map_err(err)?,
        None => model.inner.clone(),
    };
    let t = solve(&target, &options(backend)?).map_err(err)?;
    let mut c = build_step_chain(&target, &t).map_err(err)?;
    if reachable {
        c = c.reachable();
    }
    to_py(py, &c.to_json())
}

/// Checks a model against an automaton. Without a threshold the query is
/// almost-sure acceptance.
#[pyfunction]
#[pyo3(signature = (model, spec, threshold = None, backend = "exact"))]
fn check(py: Python<'_>, model: &PyPvpa, spec: &PyVpa, threshold: Option<&str>, backend: &str) -> PyResult<Py<PyAny>> {
    let opts = CheckOptions { solve: options(backend)?, with_probability: true, ..Default::default() };
    let q = query(threshold)?;
    let (p, n) = analysis::product_with_spec(&model.inner, &spec.inner, LabelMatch::Exact, &opts).map_err(err)?;
    let v = analysis::check_product(&model.inner, &p, n, &q, &opts).map_err(err)?;
    to_py(py, &serde_json::to_value(&v).expect("json"))
}

/// Checks a CaRet formula.
#[pyfunction]
#[pyo3(signature = (model, formula, threshold = None, backend = "exact"))]
fn check_caret(py: Python<'_>, model: &PyPvpa, formula: &str, threshold: Option<&str>, backend: &str) -> PyResult<Py<PyAny>> {
    let opts = CheckOptions { solve: options(backend)?, with_probability: true, ..Default::default() };
    let phi = parse_caret(formula).map_err(err)?;
    let v = analysis::check_caret(&model.inner, &phi, &query(threshold)?, &opts).map_err(err)?;
    to_py(py, &serde_json::to_value(&v).expect("json"))
}

/// Evaluates a formula on the lasso `prefix · period^ω`; symbols are
/// written like `call{p,q}`.
#[pyfunction]
fn eval_lasso(formula: &str, prefix: Vec<String>, period: Vec<String>) -> PyResult<bool> {
    let sym = |t: &String| Symbol::parse(t).ok_or_else(|| PyValueError::new_err(format!("bad symbol `{t}`")));
    let u = prefix.iter().map(sym).collect::<PyResult<Vec<_>>>()?;
    let v = period.iter().map(sym).collect::<PyResult<Vec<_>>>()?;
    let w = LassoWord::new(u, v).map_err(err)?;
    eval_caret_on_lasso(&parse_caret(formula).map_err(err)?, &w).map_err(err)
}

/// Samples one run prefix; returns state names and stack heights.
#[pyfunction]
#[pyo3(signature = (model, seed, horizon))]
fn simulate(model: &PyPvpa, seed: u64, horizon: usize) -> PyResult<(Vec<String>, Vec<usize>)> {
    let t = caretprob::sim::simulate(&model.inner, seed, horizon).map_err(err)?;
    Ok((t.states.iter().map(|&q| model.inner.states[q].clone()).collect(), t.heights))
}

#[pymodule]
fn pycaretprob(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPvpa>()?;
    m.add_class::<PyVpa>()?;
    m.add_function(wrap_pyfunction!(returns, m)?)?;
    m.add_function(wrap_pyfunction!(step_chain, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(check_caret, m)?)?;
    m.add_function(wrap_pyfunction!(eval_lasso, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add("SCHEMA_VERSION", caretprob::report::SCHEMA_VERSION)?;
    Ok(())
}
