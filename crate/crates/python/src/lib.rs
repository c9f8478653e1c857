use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use corelink::corpus::{self, Clustering, Split, SynthSpec};
use corelink::harness::{self, Checkpoint};
use corelink::metrics::{self, PRF};
use corelink::model::Predictor;

fn py_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_split(name: &str) -> PyResult<Split> {
    name.parse().map_err(py_err)
}

#[pyclass(module = "corelink_py")]
struct Corpus {
    inner: corpus::Corpus,
}

#[pymethods]
impl Corpus {
    /// Loads a corpus file or directory.
    #[staticmethod]
    #[pyo3(signature = (path, singular_only = true))]
    fn load(path: PathBuf, singular_only: bool) -> PyResult<Self> {
        let inner = corpus::load_corpus(&path, singular_only).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (scenes = 20, characters = 5, seed = 0))]
    fn synthetic(scenes: usize, characters: usize, seed: u64) -> PyResult<Self> {
        let spec = SynthSpec {
            scenes,
            characters,
            ..SynthSpec::default()
        };
        let inner = corpus::generate_synthetic_corpus(&spec, seed).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn num_documents(&self, split: &str) -> PyResult<usize> {
        Ok(self.inner.get(&parse_split(split)?).map_or(0, Vec::len))
    }

    fn num_mentions(&self, split: &str) -> PyResult<usize> {
        let docs = self.inner.get(&parse_split(split)?);
        Ok(docs.map_or(0, |d| d.iter().map(|d| d.num_mentions()).sum()))
    }

    fn stats_markdown(&self) -> String {
        corpus::corpus_stats(&self.inner).to_markdown()
    }

    fn write(&self, dir: PathBuf) -> PyResult<()> {
        corpus::write_canonical(&self.inner, &dir).map_err(py_err)
    }
}

#[pyclass(module = "corelink_py")]
struct ExperimentConfig {
    inner: harness::ExperimentConfig,
}

#[pymethods]
impl ExperimentConfig {
    /// Parses a JSON config; missing keys take their defaults.
    #[new]
    #[pyo3(signature = (json = None))]
    fn new(json: Option<&str>) -> PyResult<Self> {
        let inner = match json {
            Some(text) => harness::ExperimentConfig::from_json(text).map_err(py_err)?,
            None => harness::ExperimentConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn toy() -> Self {
        Self {
            inner: harness::ExperimentConfig::toy(),
        }
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
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
    fn max_epochs(&self) -> usize {
        self.inner.training.max_epochs
    }

    #[setter]
    fn set_max_epochs(&mut self, n: usize) {
        self.inner.training.max_epochs = n;
    }

    #[getter]
    fn mlsa_layers(&self) -> usize {
        self.inner.mlsa.layers
    }

    #[setter]
    fn set_mlsa_layers(&mut self, n: usize) {
        self.inner.mlsa.layers = n;
    }
}

/// A trained model with its checkpoint.
#[pyclass(module = "corelink_py")]
struct Model {
    checkpoint: Checkpoint,
    best: corelink::model::JointModel,
    log_json: String,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn train(config: &ExperimentConfig, corpus: &Corpus) -> PyResult<Self> {
        let outcome = harness::train(&config.inner, &corpus.inner).map_err(py_err)?;
        let log_json = serde_json::to_string(&outcome.log).map_err(py_err)?;
        Ok(Self {
            checkpoint: outcome.checkpoint,
            best: outcome.best,
            log_json,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let checkpoint = Checkpoint::load(&path).map_err(py_err)?;
        let best = checkpoint.best_model();
        let log_json = serde_json::to_string(&checkpoint.state.log).map_err(py_err)?;
        Ok(Self {
            checkpoint,
            best,
            log_json,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.checkpoint.save(&path).map_err(py_err)
    }

    /// Per-epoch training log as JSON.
    fn log_json(&self) -> String {
        self.log_json.clone()
    }

    fn characters(&self) -> Vec<String> {
        self.best.characters().labels().to_vec()
    }

    /// Flat metric map for the split.
    #[pyo3(signature = (corpus, split = "dev"))]
    fn evaluate(&self, corpus: &Corpus, split: &str) -> PyResult<BTreeMap<String, f64>> {
        let docs = corpus.inner.get(&parse_split(split)?).map(Vec::as_slice).unwrap_or(&[]);
        let eval = harness::evaluate(&self.best, docs).map_err(py_err)?;
        Ok(eval.report.flat())
    }

    /// Decoded clusters and character labels per document, as JSON.
    #[pyo3(signature = (corpus, split = "dev"))]
    fn predict_json(&self, corpus: &Corpus, split: &str) -> PyResult<String> {
        let docs = corpus.inner.get(&parse_split(split)?).map(Vec::as_slice).unwrap_or(&[]);
        let eval = harness::evaluate(&self.best, docs).map_err(py_err)?;
        serde_json::to_string(&eval.predictions).map_err(py_err)
    }
}

fn clustering(num_mentions: usize, clusters: Vec<Vec<usize>>) -> PyResult<Clustering> {
    Clustering::new(num_mentions, clusters).map_err(py_err)
}

fn triple(p: PRF) -> (f64, f64, f64) {
    (p.precision, p.recall, p.f1)
}

/// (precision, recall, F1) of B³ for one document.
#[pyfunction]
fn b_cubed(num_mentions: usize, gold: Vec<Vec<usize>>, pred: Vec<Vec<usize>>) -> PyResult<(f64, f64, f64)> {
    let (g, p) = (clustering(num_mentions, gold)?, clustering(num_mentions, pred)?);
    metrics::b_cubed(&g, &p).map(triple).map_err(py_err)
}

#[pyfunction]
fn ceaf_phi4(num_mentions: usize, gold: Vec<Vec<usize>>, pred: Vec<Vec<usize>>) -> PyResult<(f64, f64, f64)> {
    let (g, p) = (clustering(num_mentions, gold)?, clustering(num_mentions, pred)?);
    metrics::ceaf_phi4(&g, &p).map(triple).map_err(py_err)
}

#[pyfunction]
fn blanc(num_mentions: usize, gold: Vec<Vec<usize>>, pred: Vec<Vec<usize>>) -> PyResult<(f64, f64, f64)> {
    let (g, p) = (clustering(num_mentions, gold)?, clustering(num_mentions, pred)?);
    metrics::blanc(&g, &p).map(triple).map_err(py_err)
}

/// (micro F1, macro F1) of class predictions.
#[pyfunction]
fn linking_f1(gold: Vec<usize>, pred: Vec<usize>, num_classes: usize) -> PyResult<(f64, f64)> {
    let s = metrics::linking_f1(&gold, &pred, num_classes).map_err(py_err)?;
    Ok((s.micro_f1, s.macro_f1))
}

/// Ablation table (markdown) over `config.seeds`.
#[pyfunction]
#[pyo3(signature = (config, corpus, split = "dev"))]
fn run_ablations(config: &ExperimentConfig, corpus: &Corpus, split: &str) -> PyResult<String> {
    let report = harness::run_ablations(&config.inner, &corpus.inner, parse_split(split)?).map_err(py_err)?;
    Ok(report.to_markdown())
}

/// Layer sweep as CSV.
#[pyfunction]
#[pyo3(signature = (config, corpus, layers, split = "dev"))]
fn run_layer_sweep(config: &ExperimentConfig, corpus: &Corpus, layers: Vec<usize>, split: &str) -> PyResult<String> {
    let report =
        harness::run_layer_sweep(&config.inner, &corpus.inner, &layers, parse_split(split)?).map_err(py_err)?;
    Ok(report.to_csv())
}

#[pymodule]
fn corelink_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Corpus>()?;
    m.add_class::<ExperimentConfig>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(b_cubed, m)?)?;
    m.add_function(wrap_pyfunction!(ceaf_phi4, m)?)?;
    m.add_function(wrap_pyfunction!(blanc, m)?)?;
    m.add_function(wrap_pyfunction!(linking_f1, m)?)?;
    m.add_function(wrap_pyfunction!(run_ablations, m)?)?;
    m.add_function(wrap_pyfunction!(run_layer_sweep, m)?)?;
    Ok(())
}
