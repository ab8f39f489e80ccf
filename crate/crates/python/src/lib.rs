//! Python bindings: run configuration, pipeline stages, model scoring and the
//! mixed-model fitter.

use std::collections::BTreeMap;
use std::path::PathBuf;

use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use synsurp::pipeline;
use synsurp::regression::{self, GroupingFactor, LmmOptions, LmmProblem, RandomEffects, RandomTerm};
use synsurp::surprisal::SurprisalEngine;
use synsurp::Error;

create_exception!(synsurp_py, SynsurpError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Config(_) => PyValueError::new_err(msg),
        Error::Io { .. } => PyOSError::new_err(msg),
        _ => SynsurpError::new_err(msg),
    }
}

/// A pipeline run configuration loaded from TOML.
#[pyclass(name = "RunConfig", from_py_object)]
#[derive(Clone)]
struct PyRunConfig {
    inner: pipeline::RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyRunConfig {
            inner: pipeline::RunConfig::load(&path).map_err(to_py)?,
        })
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        pipeline::write_config(&path, &self.inner).map_err(to_py)
    }

    #[getter]
    fn seeds(&self) -> Vec<u64> {
        self.inner.seeds.clone()
    }

    #[setter]
    fn set_seeds(&mut self, seeds: Vec<u64>) {
        self.inner.seeds = seeds;
    }

    #[getter]
    fn out(&self) -> PathBuf {
        self.inner.out.clone()
    }

    #[setter]
    fn set_out(&mut self, out: PathBuf) {
        self.inner.out = out;
    }

    #[getter]
    fn k(&self) -> Option<usize> {
        self.inner.k
    }

    #[setter]
    fn set_k(&mut self, k: Option<usize>) {
        self.inner.k = k;
    }

    fn checkpoint(&self, seed: u64) -> PathBuf {
        self.inner.layout().checkpoint(seed)
    }

    fn __repr__(&self) -> String {
        format!("RunConfig(seeds={:?}, out={:?})", self.inner.seeds, self.inner.out)
    }
}

/// Write the toy-grammar dataset and its config; returns the config path.
#[pyfunction]
#[pyo3(signature = (out, seed = 7))]
fn write_toy_dataset(out: PathBuf, seed: u64) -> PyResult<PathBuf> {
    let toy = pipeline::ToyDataConfig {
        seed,
        ..pipeline::ToyDataConfig::default()
    };
    pipeline::write_toy_dataset(&out, &toy).map_err(to_py)
}

/// Train every seed; one dict per seed.
#[pyfunction]
fn train<'py>(py: Python<'py>, cfg: &PyRunConfig) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let inner = cfg.inner.clone();
    let outcomes = py.detach(move || pipeline::cmd_train(&inner)).map_err(to_py)?;
    outcomes
        .into_iter()
        .map(|o| {
            let d = PyDict::new(py);
            d.set_item("seed", o.seed)?;
            d.set_item("checkpoint", o.checkpoint)?;
            if let Some(ev) = o.evaluation {
                d.set_item("dev_perplexity", ev.dev_perplexity)?;
                d.set_item("dev_tag_accuracy", ev.dev_tag_accuracy)?;
            }
            Ok(d)
        })
        .collect()
}

/// Score the items with every seed; maps seed to token count.
#[pyfunction]
fn score(py: Python<'_>, cfg: &PyRunConfig) -> PyResult<BTreeMap<u64, usize>> {
    let inner = cfg.inner.clone();
    let scored = py.detach(move || pipeline::cmd_score(&inner)).map_err(to_py)?;
    Ok(scored.into_iter().map(|(s, r)| (s, r.len())).collect())
}

/// Simulate reading times; returns the number of readings.
#[pyfunction]
fn simulate(py: Python<'_>, cfg: &PyRunConfig) -> PyResult<usize> {
    let inner = cfg.inner.clone();
    Ok(py.detach(move || pipeline::cmd_simulate(&inner)).map_err(to_py)?.len())
}

/// Fit the conversion models and predict; returns the averaged row count.
#[pyfunction]
fn fit_predict(py: Python<'_>, cfg: &PyRunConfig) -> PyResult<usize> {
    let inner = cfg.inner.clone();
    Ok(py.detach(move || pipeline::cmd_fit_predict(&inner)).map_err(to_py)?.averaged.len())
}

type EffectRow = (String, String, String, f64, f64, f64);

fn effect_rows(a: &pipeline::AnalysisOutcome) -> Vec<EffectRow> {
    a.effects
        .iter()
        .map(|e| {
            (
                e.construction.to_string(),
                e.region.to_string(),
                e.source.to_string(),
                e.effect_ms,
                e.ci_low,
                e.ci_high,
            )
        })
        .collect()
}

/// Run the analysis stage. Returns (construction, region, source, effect_ms,
/// ci_low, ci_high) rows.
#[pyfunction]
fn analyze(py: Python<'_>, cfg: &PyRunConfig) -> PyResult<Vec<EffectRow>> {
    let inner = cfg.inner.clone();
    let a = py.detach(move || pipeline::cmd_analyze(&inner)).map_err(to_py)?;
    Ok(effect_rows(&a))
}

/// Every stage in order; same return value as `analyze`.
#[pyfunction]
fn run_all(py: Python<'_>, cfg: &PyRunConfig) -> PyResult<Vec<EffectRow>> {
    let inner = cfg.inner.clone();
    let a = py.detach(move || pipeline::cmd_all(&inner)).map_err(to_py)?;
    Ok(effect_rows(&a))
}

/// A trained joint language-model / supertagger.
#[pyclass(name = "JointModel")]
struct PyJointModel {
    inner: synsurp::model::JointModel,
}

#[pymethods]
impl PyJointModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyJointModel {
            inner: synsurp::model::load_checkpoint(&path).map_err(to_py)?,
        })
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.dims.vocab_size
    }

    #[getter]
    fn tag_count(&self) -> usize {
        self.inner.dims.tag_count
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    /// (token, surp_lex, surp_syn) per token, in nats. `k` defaults to the
    /// whole vocabulary.
    #[pyo3(signature = (tokens, k = None))]
    fn score_sentence(&self, tokens: Vec<String>, k: Option<usize>) -> PyResult<Vec<(String, f64, f64)>> {
        let engine = SurprisalEngine::new(&self.inner);
        let scores = engine
            .score_sentence(&tokens, k.unwrap_or(usize::MAX))
            .map_err(to_py)?;
        Ok(scores.into_iter().map(|s| (s.token, s.surp_lex, s.surp_syn)).collect())
    }

    /// Next-word distribution after a context of tokens.
    fn next_word_distribution(&self, context: Vec<String>) -> PyResult<Vec<f64>> {
        let m = &self.inner;
        let state = m.state_after(&m.vocab.encode(&context)).map_err(to_py)?;
        m.next_word_distribution(&state).map_err(to_py)
    }

    /// Supertag posterior for the last token of a non-empty context.
    fn tag_posterior(&self, context: Vec<String>) -> PyResult<Vec<f64>> {
        let m = &self.inner;
        let state = m.state_after(&m.vocab.encode(&context)).map_err(to_py)?;
        m.tag_posterior(&state).map_err(to_py)
    }
}

/// Result of a mixed-model fit.
#[pyclass(name = "LmmFit")]
struct PyLmmFit {
    inner: regression::LmmFit,
}

#[pymethods]
impl PyLmmFit {
    /// (name, estimate, std_error, p_value) per fixed effect.
    #[getter]
    fn fixed(&self) -> Vec<(String, f64, f64, f64)> {
        self.inner
            .fixed
            .iter()
            .map(|f| (f.name.clone(), f.estimate, f.std_error, f.p_value))
            .collect()
    }

    /// (group, term, variance) per random-effect component.
    #[getter]
    fn components(&self) -> Vec<(String, String, f64)> {
        self.inner
            .components
            .iter()
            .map(|c| (c.group.clone(), c.term.clone(), c.variance))
            .collect()
    }

    #[getter]
    fn residual_variance(&self) -> f64 {
        self.inner.residual_variance
    }

    #[getter]
    fn log_likelihood(&self) -> f64 {
        self.inner.log_likelihood
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }
}

/// Fit a linear mixed model by REML.
///
/// `x` is row-major with the intercept column included. `groups` maps a
/// grouping factor to per-row labels; each factor gets a random intercept
/// plus one random slope per entry of `slopes[factor]`.
#[pyfunction]
#[pyo3(signature = (y, x, fixed_names, groups, slopes = None))]
fn fit_lmm(
    py: Python<'_>,
    y: Vec<f64>,
    x: Vec<Vec<f64>>,
    fixed_names: Vec<String>,
    groups: BTreeMap<String, Vec<String>>,
    slopes: Option<BTreeMap<String, BTreeMap<String, Vec<f64>>>>,
) -> PyResult<PyLmmFit> {
    let n = x.len();
    let p = fixed_names.len();
    if x.iter().any(|r| r.len() != p) {
        return Err(PyValueError::new_err("every row of x needs one value per fixed name"));
    }
    let mut slopes = slopes.unwrap_or_default();
    let random = groups
        .iter()
        .map(|(name, labels)| {
            let mut terms = vec![RandomTerm::intercept()];
            for (term, values) in slopes.remove(name).unwrap_or_default() {
                terms.push(RandomTerm::slope(&term, values));
            }
            RandomEffects {
                factor: GroupingFactor::from_labels(name, labels),
                terms,
            }
        })
        .collect();
    if let Some(name) = slopes.keys().next() {
        return Err(PyValueError::new_err(format!("slopes given for unknown group {name}")));
    }
    let problem = LmmProblem {
        y,
        x: DMatrix::from_fn(n, p, |i, j| x[i][j]),
        fixed_names,
        random,
    };
    let fit = py
        .detach(move || regression::fit_lmm(&problem, &LmmOptions::default()))
        .map_err(to_py)?;
    Ok(PyLmmFit { inner: fit })
}

#[pymodule]
fn synsurp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SynsurpError", m.py().get_type::<SynsurpError>())?;
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyJointModel>()?;
    m.add_class::<PyLmmFit>()?;
    m.add_function(wrap_pyfunction!(write_toy_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_predict, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(run_all, m)?)?;
    m.add_function(wrap_pyfunction!(fit_lmm, m)?)?;
    Ok(())
}
