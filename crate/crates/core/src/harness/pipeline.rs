use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::{load_dataset, Dataset, Split};
use crate::config::{ExperimentConfig, Seeds};
use crate::ensemble::{Ensemble, EnsembleSeeds, InputLayout, SpikeRecord};
use crate::error::{LsmError, Result};
use crate::preprocess::{
    bin_events_from, downscale, frames_to_spike_drive, gabor_bank, merge_channels, EventStream, FrameSequence,
    PresentationSpec,
};
use crate::readout::{evaluate, extract_state, train_readout, Metrics, ReadoutModel, SampleStateVector};
use crate::rng::derive_seed;

/// One sample after binning, pooling and filtering.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub split: Split,
    pub label: usize,
    pub frames: FrameSequence,
}

pub fn preprocess_sample(stream: &EventStream, cfg: &ExperimentConfig) -> Result<FrameSequence> {
    let p = &cfg.preprocess;
    let mut frames = bin_events_from(stream, p.time_window_us, p.origin)?;
    if p.merge_polarities {
        frames = merge_channels(&frames);
    }
    frames = downscale(&frames, p.downscale)?;
    if let Some(bank) = &p.gabor {
        frames = gabor_bank(&frames, bank)?;
    }
    Ok(frames)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub preprocess_s: f64,
    pub build_s: f64,
    pub simulate_s: f64,
    pub train_s: f64,
    pub evaluate_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberStats {
    pub member: usize,
    pub neurons: usize,
    pub recurrent_edges: usize,
    pub input_edges: usize,
    pub d: f64,
    pub lambda: f64,
    /// Spikes per neuron per step, averaged over all samples.
    pub mean_rate: f64,
    /// Fraction of neurons that never fired on any sample.
    pub silent_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatReport {
    pub repeat: usize,
    pub seeds: Seeds,
    pub train: Metrics,
    pub test: Metrics,
    pub epochs: usize,
    pub final_loss: f64,
    pub inter_partition_edges: usize,
    pub members: Vec<MemberStats>,
    /// SHA-256 over every state vector and label, in dataset order.
    pub state_hash: String,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub mean_train: f64,
    pub mean_test: f64,
    pub std_test: f64,
    pub min_test: f64,
    pub max_test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub total_neurons: usize,
    pub readout_parameters: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub presentation_steps: usize,
    pub input_neurons: usize,
    pub repeats: Vec<RepeatReport>,
    pub summary: AccuracySummary,
}

impl RunReport {
    /// Report with timings zeroed, for reproducibility comparisons.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.repeats.iter_mut().for_each(|x| x.timings = StageTimings::default());
        r
    }
}

pub struct RunArtifacts {
    pub report: RunReport,
    pub models: Vec<ReadoutModel>,
    pub train_states: Vec<Vec<SampleStateVector>>,
    pub test_states: Vec<Vec<SampleStateVector>>,
}

pub fn state_hash(states: &[SampleStateVector]) -> String {
    let mut h = Sha256::new();
    for s in states {
        h.update((s.label as u64).to_le_bytes());
        for v in &s.features {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn repeat_seeds(base: &Seeds, r: usize) -> Seeds {
    if r == 0 {
        return *base;
    }
    let r = r as u64;
    Seeds {
        topology: derive_seed(base.topology, 0xA1, r),
        input: derive_seed(base.input, 0xA2, r),
        training: derive_seed(base.training, 0xA3, r),
        repeats: base.repeats,
    }
}

/// Preprocesses every sample of the dataset in parallel.
pub fn preprocess_dataset(cfg: &ExperimentConfig, data: &Dataset) -> Result<Vec<Preprocessed>> {
    data.samples
        .par_iter()
        .map(|s| {
            Ok(Preprocessed {
                split: s.split,
                label: s.label,
                frames: preprocess_sample(&s.stream, cfg)?,
            })
        })
        .collect()
}

pub fn run_experiment(cfg: &ExperimentConfig, data: &Dataset) -> Result<RunReport> {
    Ok(run_experiment_detailed(cfg, data)?.report)
}

pub fn run_experiment_detailed(cfg: &ExperimentConfig, data: &Dataset) -> Result<RunArtifacts> {
    cfg.validate()?;
    if data.count(Split::Train) == 0 || data.count(Split::Test) == 0 {
        return Err(LsmError::Dataset("dataset needs both train and test samples".into()));
    }
    let t0 = Instant::now();
    let pre = preprocess_dataset(cfg, data)?;
    let preprocess_s = t0.elapsed().as_secs_f64();
    run_preprocessed(cfg, &pre, preprocess_s)
}

pub(crate) fn run_preprocessed(cfg: &ExperimentConfig, pre: &[Preprocessed], preprocess_s: f64) -> Result<RunArtifacts> {
    cfg.validate()?;
    let first = &pre.first().ok_or_else(|| LsmError::Dataset("empty dataset".into()))?.frames;
    let (channels, height, width) = (first.channels, first.height, first.width);
    if let Some(bad) = pre
        .iter()
        .find(|p| (p.frames.channels, p.frames.height, p.frames.width) != (channels, height, width))
    {
        return Err(LsmError::Dataset(format!(
            "sample frames {}x{}x{} differ from {channels}x{height}x{width}",
            bad.frames.channels, bad.frames.height, bad.frames.width
        )));
    }
    let presentation = PresentationSpec {
        steps: cfg.preprocess.presentation_steps,
        input_scale: cfg.preprocess.input_scale,
    };
    let steps = presentation
        .steps
        .unwrap_or_else(|| pre.iter().map(|p| p.frames.steps).max().unwrap_or(0));
    let layout = InputLayout {
        width,
        height,
        channels,
        weight: cfg.input.weight,
        density: cfg.input.density,
    };

    let mut repeats = Vec::new();
    let mut models = Vec::new();
    let (mut all_train, mut all_test) = (Vec::new(), Vec::new());
    for r in 0..cfg.seeds.repeats {
        let seeds = repeat_seeds(&cfg.seeds, r);
        let mut timings = StageTimings {
            preprocess_s,
            ..Default::default()
        };

        let t = Instant::now();
        let ensemble = Ensemble::build(
            &cfg.ensemble,
            cfg.reservoir.member_dims,
            &cfg.reservoir.law,
            &cfg.neuron,
            layout,
            EnsembleSeeds {
                topology: seeds.topology,
                input: seeds.input,
            },
        )?;
        timings.build_s = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let records: Vec<Vec<SpikeRecord>> = pre
            .par_iter()
            .map(|p| {
                let mut pres = presentation;
                pres.steps = Some(steps);
                let drive = frames_to_spike_drive(&p.frames, &pres);
                ensemble.run(&drive, &cfg.neuron)
            })
            .collect::<Result<_>>()?;
        timings.simulate_s = t.elapsed().as_secs_f64();

        let mut train = Vec::new();
        let mut test = Vec::new();
        for (p, rec) in pre.iter().zip(&records) {
            let s = extract_state(rec, cfg.readout.state, p.label)?;
            match p.split {
                Split::Train => train.push(s),
                Split::Test => test.push(s),
            }
        }
        let members = member_stats(&ensemble, &records, steps);

        let t = Instant::now();
        let outcome = train_readout(&train, &cfg.readout.train, seeds.training)?;
        timings.train_s = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let train_metrics = evaluate(&outcome.model, &train)?;
        let test_metrics = evaluate(&outcome.model, &test)?;
        timings.evaluate_s = t.elapsed().as_secs_f64();

        let hash_input: Vec<SampleStateVector> = train.iter().chain(&test).cloned().collect();
        repeats.push(RepeatReport {
            repeat: r,
            seeds,
            train: train_metrics,
            test: test_metrics,
            epochs: outcome.epochs,
            final_loss: *outcome.losses.last().unwrap(),
            inter_partition_edges: ensemble.inter_edges.len(),
            members,
            state_hash: state_hash(&hash_input),
            timings,
        });
        models.push(outcome.model);
        all_train.push(train);
        all_test.push(test);
    }

    let tests: Vec<f64> = repeats.iter().map(|r| r.test.accuracy).collect();
    let mean_test = tests.iter().sum::<f64>() / tests.len() as f64;
    let var = tests.iter().map(|a| (a - mean_test).powi(2)).sum::<f64>() / tests.len() as f64;
    let summary = AccuracySummary {
        mean_train: repeats.iter().map(|r| r.train.accuracy).sum::<f64>() / repeats.len() as f64,
        mean_test,
        std_test: var.sqrt(),
        min_test: tests.iter().cloned().fold(f64::INFINITY, f64::min),
        max_test: tests.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    };
    let total_neurons = cfg.total_neurons();
    let classes = models[0].classes;
    let report = RunReport {
        config: cfg.clone(),
        total_neurons,
        readout_parameters: total_neurons * classes,
        train_samples: all_train[0].len(),
        test_samples: all_test[0].len(),
        presentation_steps: steps,
        input_neurons: layout.n_inputs(),
        repeats,
        summary,
    };
    Ok(RunArtifacts {
        report,
        models,
        train_states: all_train,
        test_states: all_test,
    })
}

fn member_stats(ensemble: &Ensemble, records: &[Vec<SpikeRecord>], steps: usize) -> Vec<MemberStats> {
    (0..ensemble.members.len())
        .map(|k| {
            let m = &ensemble.members[k];
            let n = m.size();
            let mut fired = vec![false; n];
            let mut total = 0u64;
            for rec in records {
                total += rec[k].total();
                for (f, &c) in fired.iter_mut().zip(&rec[k].counts) {
                    *f |= c > 0;
                }
            }
            let law = &m.topology.law;
            let denom = (n * steps.max(1) * records.len().max(1)) as f64;
            MemberStats {
                member: k,
                neurons: n,
                recurrent_edges: m.topology.edges.len(),
                input_edges: m.input.edges.len(),
                d: law.d,
                lambda: law.lambda,
                mean_rate: total as f64 / denom,
                silent_fraction: fired.iter().filter(|f| !**f).count() as f64 / n as f64,
            }
        })
        .collect()
}

/// Loads the manifest named by the config and runs it.
pub fn run_config(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    let data = load_dataset(&cfg.manifest)?;
    run_experiment_detailed(cfg, &data)
}

/// Writes `report.json` and one readout model per repeat into `dir`.
pub fn write_report(artifacts: &RunArtifacts, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(&artifacts.report).map_err(|e| LsmError::Parse(e.to_string()))?;
    std::fs::write(dir.join("report.json"), json)?;
    for (r, m) in artifacts.models.iter().enumerate() {
        std::fs::write(dir.join(format!("readout_{r}.txt")), m.to_text())?;
    }
    Ok(())
}
