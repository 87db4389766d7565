//! Python bindings for `lsm-core`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use lsm_core::config::ExperimentConfig;
use lsm_core::harness::{self, SynthMode, SynthSpec};
use lsm_core::input_map::{build_input_map, InputScheme, InputSpec};
use lsm_core::neuron::{self, PopulationState, SparseWeights};
use lsm_core::preprocess::{self, Event, EventStream};
use lsm_core::readout::{self, SampleStateVector};
use lsm_core::topology::{self, ConnectionLaw, Coord, GridDims, NeuronKind};
use lsm_core::LsmError;

type Edge = (u32, u32, f64);

fn py_err(e: LsmError) -> PyErr {
    match e {
        LsmError::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn dims(d: (usize, usize, usize)) -> PyResult<GridDims> {
    GridDims::new(d.0, d.1, d.2).map_err(py_err)
}

fn kind(c: char) -> PyResult<NeuronKind> {
    match c {
        'E' | 'e' => Ok(NeuronKind::Excitatory),
        'I' | 'i' => Ok(NeuronKind::Inhibitory),
        _ => Err(PyValueError::new_err(format!("neuron kind must be E or I, got {c}"))),
    }
}

#[pyclass(name = "NeuronParams", from_py_object)]
#[derive(Clone)]
struct PyNeuronParams {
    inner: neuron::NeuronParams,
}

#[pymethods]
impl PyNeuronParams {
    #[new]
    #[pyo3(signature = (tau_v=16.0, tau_u=16.0, theta=20.0, dt=1.0, w_lsm=1.0))]
    fn new(tau_v: f64, tau_u: f64, theta: f64, dt: f64, w_lsm: f64) -> PyResult<Self> {
        let inner = neuron::NeuronParams {
            tau_v,
            tau_u,
            theta,
            dt,
            w_lsm,
        };
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn tau_v(&self) -> f64 {
        self.inner.tau_v
    }

    #[getter]
    fn tau_u(&self) -> f64 {
        self.inner.tau_u
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn w_lsm(&self) -> f64 {
        self.inner.w_lsm
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "NeuronParams(tau_v={}, tau_u={}, theta={}, dt={}, w_lsm={})",
            p.tau_v, p.tau_u, p.theta, p.dt, p.w_lsm
        )
    }
}

fn params_or_default(p: Option<PyNeuronParams>) -> neuron::NeuronParams {
    p.map(|p| p.inner).unwrap_or_default()
}

/// One forward-Euler step; returns `(v, u, spikes)`.
#[pyfunction]
#[pyo3(signature = (v, u, spikes, injected, edges, params=None))]
fn lif_step(
    v: Vec<f64>,
    u: Vec<f64>,
    spikes: Vec<bool>,
    injected: Vec<f64>,
    edges: Vec<Edge>,
    params: Option<PyNeuronParams>,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<bool>)> {
    let n = v.len();
    let w = SparseWeights::from_edges(n, &edges).map_err(py_err)?;
    let state = PopulationState { v, u, spikes };
    let next = neuron::lif_step(&state, &injected, &w, &params_or_default(params)).map_err(py_err)?;
    Ok((next.v, next.u, next.spikes))
}

#[pyfunction]
#[pyo3(signature = (i, j, kinds, lambda_=2.0, d=0.0))]
fn connection_probability(
    i: (usize, usize, usize),
    j: (usize, usize, usize),
    kinds: &str,
    lambda_: f64,
    d: f64,
) -> PyResult<f64> {
    let mut k = kinds.chars();
    let (Some(a), Some(b), None) = (k.next(), k.next(), k.next()) else {
        return Err(PyValueError::new_err("kinds must be two letters such as \"EI\""));
    };
    let law = ConnectionLaw::with_offset(lambda_, d);
    law.validate().map_err(py_err)?;
    topology::connection_probability(Coord::new(i.0, i.1, i.2), Coord::new(j.0, j.1, j.2), &law, (kind(a)?, kind(b)?))
        .map_err(py_err)
}

#[pyclass(name = "Reservoir", from_py_object)]
#[derive(Clone)]
struct PyReservoir {
    inner: topology::ReservoirTopology,
}

#[pymethods]
impl PyReservoir {
    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        let d = self.inner.dims;
        (d.nx, d.ny, d.nz)
    }

    #[getter]
    fn size(&self) -> usize {
        self.inner.size()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    /// Neuron kinds as a string of `E`/`I`.
    #[getter]
    fn kinds(&self) -> String {
        self.inner.kinds.iter().map(|k| k.symbol()).collect()
    }

    #[getter]
    fn edges(&self) -> Vec<Edge> {
        self.inner.edges.clone()
    }

    fn edge_lengths(&self) -> Vec<f64> {
        self.inner.edges.iter().map(|&(s, d, _)| self.inner.edge_length(s, d)).collect()
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: text.parse().map_err(py_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.edges.len()
    }
}

#[pyfunction]
#[pyo3(signature = (dims, seed, lambda_=2.0, d=0.0, params=None))]
fn build_reservoir(
    dims: (usize, usize, usize),
    seed: u64,
    lambda_: f64,
    d: f64,
    params: Option<PyNeuronParams>,
) -> PyResult<PyReservoir> {
    let law = ConnectionLaw::with_offset(lambda_, d);
    let inner = topology::build_reservoir(self::dims(dims)?, &law, &params_or_default(params), seed).map_err(py_err)?;
    Ok(PyReservoir { inner })
}

/// Input edges `(input, reservoir, weight)`. Passing `window` selects the
/// receptive-field scheme, which also needs `shape = (channels, height, width)`.
#[pyfunction]
#[pyo3(signature = (n_inputs, dims, seed, weight=8.0, density=0.15, window=None, shape=None))]
fn build_input_edges(
    n_inputs: usize,
    dims: (usize, usize, usize),
    seed: u64,
    weight: f64,
    density: f64,
    window: Option<usize>,
    shape: Option<(usize, usize, usize)>,
) -> PyResult<Vec<Edge>> {
    let scheme = match (window, shape) {
        (None, _) => InputScheme::Standard,
        (Some(window), Some((channels, height, width))) => InputScheme::ReceptiveField {
            window,
            width,
            height,
            channels,
        },
        (Some(_), None) => return Err(PyValueError::new_err("receptive-field input needs shape")),
    };
    let spec = InputSpec {
        n_inputs,
        weight,
        density,
        scheme,
    };
    Ok(build_input_map(&spec, self::dims(dims)?, seed).map_err(py_err)?.edges)
}

fn to_stream(events: Vec<(u64, u16, u16, u8)>, width: u32, height: u32, label: Option<u32>) -> PyResult<EventStream> {
    let events = events.into_iter().map(|(t, x, y, p)| Event { t, x, y, p }).collect();
    EventStream::new(events, width, height, label).map_err(py_err)
}

/// Reads an EVS1 file; returns `(events, width, height, label)`.
#[pyfunction]
fn read_events(path: PathBuf) -> PyResult<(Vec<(u64, u16, u16, u8)>, u32, u32, Option<u32>)> {
    let f = std::fs::File::open(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
    let s = preprocess::read_events(std::io::BufReader::new(f)).map_err(py_err)?;
    let events = s.events.iter().map(|e| (e.t, e.x, e.y, e.p)).collect();
    Ok((events, s.width, s.height, s.label))
}

#[pyfunction]
#[pyo3(signature = (path, events, width, height, label=None))]
fn write_events(path: PathBuf, events: Vec<(u64, u16, u16, u8)>, width: u32, height: u32, label: Option<u32>) -> PyResult<()> {
    let s = to_stream(events, width, height, label)?;
    let f = std::fs::File::create(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
    preprocess::write_events(&s, std::io::BufWriter::new(f)).map_err(|e| PyIOError::new_err(e.to_string()))
}

/// Bins events into frames; returns `((steps, channels, height, width), flat data)`.
#[pyfunction]
fn bin_events(
    events: Vec<(u64, u16, u16, u8)>,
    width: u32,
    height: u32,
    time_window: u64,
) -> PyResult<((usize, usize, usize, usize), Vec<f64>)> {
    let f = preprocess::bin_events(&to_stream(events, width, height, None)?, time_window).map_err(py_err)?;
    Ok(((f.steps, f.channels, f.height, f.width), f.data))
}

#[pyclass(name = "Readout")]
struct PyReadout {
    inner: readout::ReadoutModel,
}

#[pymethods]
impl PyReadout {
    #[getter]
    fn classes(&self) -> usize {
        self.inner.classes
    }

    #[getter]
    fn features(&self) -> usize {
        self.inner.features
    }

    fn predict(&self, features: Vec<f64>) -> PyResult<usize> {
        if features.len() != self.inner.features {
            return Err(PyValueError::new_err("feature length mismatch"));
        }
        Ok(self.inner.predict(&features))
    }

    fn accuracy(&self, features: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<f64> {
        let data = states(features, labels)?;
        Ok(readout::evaluate(&self.inner, &data).map_err(py_err)?.accuracy)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }
}

fn states(features: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<Vec<SampleStateVector>> {
    if features.len() != labels.len() {
        return Err(PyValueError::new_err("features and labels differ in length"));
    }
    Ok(features
        .into_iter()
        .zip(labels)
        .map(|(features, label)| SampleStateVector { features, label })
        .collect())
}

#[pyfunction]
#[pyo3(signature = (features, labels, l2=1e-4, max_epochs=500, seed=0))]
fn train_readout(features: Vec<Vec<f64>>, labels: Vec<usize>, l2: f64, max_epochs: usize, seed: u64) -> PyResult<PyReadout> {
    let cfg = readout::ReadoutConfig {
        l2,
        max_epochs,
        ..Default::default()
    };
    let out = readout::train_readout(&states(features, labels)?, &cfg, seed).map_err(py_err)?;
    Ok(PyReadout { inner: out.model })
}

/// Runs the experiment described by a TOML config file and returns the
/// report as a JSON string. Artifacts go to the config's output directory
/// when `write` is true.
#[pyfunction]
#[pyo3(signature = (config_path, write=false))]
fn run_experiment(py: Python<'_>, config_path: PathBuf, write: bool) -> PyResult<String> {
    let cfg = ExperimentConfig::load(&config_path).map_err(py_err)?;
    let artifacts = py.detach(|| harness::run_config(&cfg)).map_err(py_err)?;
    if write {
        harness::write_report(&artifacts, &cfg.output_dir).map_err(py_err)?;
    }
    serde_json::to_string(&artifacts.report).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Writes a synthetic multi-phase dataset; returns the number of samples.
#[pyfunction]
#[pyo3(signature = (out_dir, classes=4, phases=3, train=500, test=500, seed=7, signal_phase=None))]
fn synth(
    out_dir: PathBuf,
    classes: usize,
    phases: usize,
    train: usize,
    test: usize,
    seed: u64,
    signal_phase: Option<usize>,
) -> PyResult<usize> {
    let spec = SynthSpec {
        classes,
        phases,
        train,
        test,
        seed,
        mode: signal_phase.map_or(SynthMode::Permutation, |phase| SynthMode::SinglePhase { phase }),
        ..Default::default()
    };
    Ok(harness::write_synthetic(&spec, &out_dir).map_err(py_err)?.len())
}

#[pymodule]
fn lsm_ensemble(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNeuronParams>()?;
    m.add_class::<PyReservoir>()?;
    m.add_class::<PyReadout>()?;
    m.add_function(wrap_pyfunction!(lif_step, m)?)?;
    m.add_function(wrap_pyfunction!(connection_probability, m)?)?;
    m.add_function(wrap_pyfunction!(build_reservoir, m)?)?;
    m.add_function(wrap_pyfunction!(build_input_edges, m)?)?;
    m.add_function(wrap_pyfunction!(read_events, m)?)?;
    m.add_function(wrap_pyfunction!(write_events, m)?)?;
    m.add_function(wrap_pyfunction!(bin_events, m)?)?;
    m.add_function(wrap_pyfunction!(train_readout, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    Ok(())
}
