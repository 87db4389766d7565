//! Spike-count state vectors and a multinomial logistic readout trained by
//! full-batch gradient descent with backtracking line search.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::SpikeRecord;
use crate::error::{LsmError, Result};
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateMode {
    #[default]
    FullWindow,
    /// Count only spikes inside each partition's own gating interval.
    PerSlab,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleStateVector {
    pub features: Vec<f64>,
    pub label: usize,
}

/// Concatenates per-member spike counts.
pub fn extract_state(records: &[SpikeRecord], mode: StateMode, label: usize) -> Result<SampleStateVector> {
    if records.is_empty() {
        return Err(LsmError::Dataset("no spike records to extract a state from".into()));
    }
    let mut features = Vec::with_capacity(records.iter().map(|r| r.counts.len()).sum());
    for r in records {
        let counts = match mode {
            StateMode::FullWindow => &r.counts,
            StateMode::PerSlab => r
                .slab_counts
                .as_ref()
                .ok_or_else(|| LsmError::Config("per-slab state needs a partitioned ensemble".into()))?,
        };
        features.extend(counts.iter().map(|&c| f64::from(c)));
    }
    Ok(SampleStateVector { features, label })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReadoutConfig {
    /// L2 penalty on weights (not biases).
    pub l2: f64,
    pub max_epochs: usize,
    /// Stop once the gradient norm drops below this.
    pub tolerance: f64,
    /// Divide each feature by its training-set maximum.
    pub standardize: bool,
    /// Scale of the seeded uniform weight initialisation.
    pub init_scale: f64,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            max_epochs: 500,
            tolerance: 1e-6,
            standardize: true,
            init_scale: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutModel {
    pub classes: usize,
    pub features: usize,
    /// Row-major `classes x features`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// Per-feature divisor applied before scoring.
    pub scale: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: ReadoutModel,
    pub losses: Vec<f64>,
    pub epochs: usize,
}

/// A standardized design matrix.
pub struct Problem {
    pub classes: usize,
    pub features: usize,
    pub x: Vec<f64>,
    pub y: Vec<usize>,
}

impl Problem {
    pub fn new(classes: usize, features: usize, x: Vec<f64>, y: Vec<usize>) -> Result<Self> {
        if x.len() != features * y.len() {
            return Err(LsmError::Dataset("design matrix shape does not match labels".into()));
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= classes) {
            return Err(LsmError::Dataset(format!("label {bad} outside {classes} classes")));
        }
        Ok(Self { classes, features, x, y })
    }

    pub fn samples(&self) -> usize {
        self.y.len()
    }

    pub fn n_params(&self) -> usize {
        self.classes * (self.features + 1)
    }

    /// Mean cross-entropy plus `l2/2 * |W|^2` and its gradient. Parameters
    /// are the flattened weights followed by the biases.
    pub fn loss_and_gradient(&self, params: &[f64], l2: f64) -> (f64, Vec<f64>) {
        self.evaluate(params, l2, true)
    }

    pub fn loss(&self, params: &[f64], l2: f64) -> f64 {
        self.evaluate(params, l2, false).0
    }

    fn evaluate(&self, params: &[f64], l2: f64, with_grad: bool) -> (f64, Vec<f64>) {
        const CHUNK: usize = 256;
        let (c, f, n) = (self.classes, self.features, self.samples());
        let (w, b) = params.split_at(c * f);
        let partials: Vec<(f64, Vec<f64>)> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|chunk| {
                let mut grad = if with_grad { vec![0.0; params.len()] } else { Vec::new() };
                let mut loss = 0.0;
                let mut scores = vec![0.0; c];
                for i in chunk * CHUNK..((chunk + 1) * CHUNK).min(n) {
                    let xi = &self.x[i * f..(i + 1) * f];
                    for k in 0..c {
                        scores[k] = b[k] + dot(&w[k * f..(k + 1) * f], xi);
                    }
                    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
                    let log_z = max + z.ln();
                    loss += log_z - scores[self.y[i]];
                    if with_grad {
                        for k in 0..c {
                            let p = (scores[k] - log_z).exp() - f64::from(u8::from(k == self.y[i]));
                            let row = &mut grad[k * f..(k + 1) * f];
                            for (g, x) in row.iter_mut().zip(xi) {
                                *g += p * x;
                            }
                            grad[c * f + k] += p;
                        }
                    }
                }
                (loss, grad)
            })
            .collect();
        // chunks are reduced in index order so results do not depend on scheduling
        let mut loss = 0.0;
        let mut grad = if with_grad { vec![0.0; params.len()] } else { Vec::new() };
        for (l, g) in partials {
            loss += l;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        let inv_n = 1.0 / n as f64;
        loss = loss * inv_n + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
        for (k, g) in grad.iter_mut().enumerate() {
            *g *= inv_n;
            if k < c * f {
                *g += l2 * w[k];
            }
        }
        (loss, grad)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dataset(data: &[SampleStateVector]) -> Result<usize> {
    let first = data.first().ok_or_else(|| LsmError::Dataset("empty dataset".into()))?;
    let dim = first.features.len();
    for s in data {
        if s.features.len() != dim {
            return Err(LsmError::Dataset(format!(
                "state vector length {} differs from {dim}",
                s.features.len()
            )));
        }
        if s.features.iter().any(|v| !v.is_finite()) {
            return Err(LsmError::Numerical("non-finite feature in state vector".into()));
        }
    }
    Ok(dim)
}

pub fn train_readout(train: &[SampleStateVector], config: &ReadoutConfig, seed: u64) -> Result<TrainOutcome> {
    let features = check_dataset(train)?;
    let classes = train.iter().map(|s| s.label).max().unwrap() + 1;
    let mut present = vec![false; classes];
    train.iter().for_each(|s| present[s.label] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(LsmError::Dataset("training set needs at least two classes".into()));
    }
    let scale = if config.standardize {
        (0..features)
            .map(|j| {
                let m = train.iter().map(|s| s.features[j].abs()).fold(0.0, f64::max);
                if m > 0.0 { m } else { 1.0 }
            })
            .collect()
    } else {
        vec![1.0; features]
    };
    let x = train
        .iter()
        .flat_map(|s| s.features.iter().zip(&scale).map(|(v, d)| v / d))
        .collect();
    let problem = Problem::new(classes, features, x, train.iter().map(|s| s.label).collect())?;

    let mut rng = rng_from(seed);
    let mut params: Vec<f64> = (0..problem.n_params())
        .map(|i| {
            if i < classes * features {
                config.init_scale * (2.0 * rng.random::<f64>() - 1.0)
            } else {
                0.0
            }
        })
        .collect();

    let (mut loss, mut grad) = problem.loss_and_gradient(&params, config.l2);
    let mut losses = vec![loss];
    let mut step = 1.0;
    let mut epochs = 0;
    let mut trial = vec![0.0; params.len()];
    while epochs < config.max_epochs {
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        if gnorm2.sqrt() < config.tolerance {
            break;
        }
        // Armijo backtracking
        step *= 2.0;
        let accepted = loop {
            for ((t, p), g) in trial.iter_mut().zip(&params).zip(&grad) {
                *t = p - step * g;
            }
            let l = problem.loss(&trial, config.l2);
            if l <= loss - 1e-4 * step * gnorm2 {
                break Some(l);
            }
            step *= 0.5;
            if step < 1e-12 {
                break None;
            }
        };
        let Some(new_loss) = accepted else { break };
        std::mem::swap(&mut params, &mut trial);
        epochs += 1;
        let (l, g) = problem.loss_and_gradient(&params, config.l2);
        debug_assert!(l <= new_loss + 1e-12 * new_loss.abs().max(1.0));
        loss = l;
        grad = g;
        losses.push(loss);
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(LsmError::Numerical("readout parameters diverged".into()));
    }
    let bias = params.split_off(classes * features);
    Ok(TrainOutcome {
        model: ReadoutModel {
            classes,
            features,
            weights: params,
            bias,
            scale,
        },
        losses,
        epochs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
}

impl ReadoutModel {
    pub fn scores(&self, features: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|k| {
                let row = &self.weights[k * self.features..(k + 1) * self.features];
                self.bias[k] + row.iter().zip(features).zip(&self.scale).map(|((w, x), s)| w * x / s).sum::<f64>()
            })
            .collect()
    }

    /// Argmax of class scores; ties go to the lowest class index.
    pub fn predict(&self, features: &[f64]) -> usize {
        argmax(&self.scores(features))
    }

    /// Squared weight norm restricted to a feature range, summed over classes.
    pub fn weight_mass(&self, range: std::ops::Range<usize>) -> f64 {
        (0..self.classes)
            .map(|k| {
                self.weights[k * self.features + range.start..k * self.features + range.end]
                    .iter()
                    .map(|w| w * w)
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut s = String::from("# lsm-readout v1\n");
        let _ = writeln!(s, "classes {} features {}", self.classes, self.features);
        let _ = writeln!(s, "scale {}", join(&self.scale));
        let _ = writeln!(s, "bias {}", join(&self.bias));
        for k in 0..self.classes {
            let _ = writeln!(s, "{}", join(&self.weights[k * self.features..(k + 1) * self.features]));
        }
        s
    }
}

pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = k;
        }
    }
    best
}

impl FromStr for ReadoutModel {
    type Err = LsmError;

    fn from_str(text: &str) -> Result<Self> {
        let bad = |m: &str| LsmError::Parse(format!("readout model: {m}"));
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty file"))?.split_whitespace().collect();
        let (classes, features) = match header.as_slice() {
            ["classes", c, "features", f] => (
                c.parse::<usize>().map_err(|_| bad("class count"))?,
                f.parse::<usize>().map_err(|_| bad("feature count"))?,
            ),
            _ => return Err(bad("bad header")),
        };
        let mut row = |key: Option<&str>, len: usize| -> Result<Vec<f64>> {
            let line = lines.next().ok_or_else(|| bad("truncated"))?;
            let mut toks = line.split_whitespace().peekable();
            if let Some(k) = key {
                if toks.next() != Some(k) {
                    return Err(bad(&format!("expected `{k}` row")));
                }
            }
            let v = toks
                .map(|t| t.parse::<f64>().map_err(|_| bad("bad number")))
                .collect::<Result<Vec<_>>>()?;
            if v.len() != len {
                return Err(bad("row length"));
            }
            Ok(v)
        };
        let scale = row(Some("scale"), features)?;
        let bias = row(Some("bias"), classes)?;
        let mut weights = Vec::with_capacity(classes * features);
        for _ in 0..classes {
            weights.extend(row(None, features)?);
        }
        Ok(Self {
            classes,
            features,
            weights,
            bias,
            scale,
        })
    }
}

pub fn evaluate(model: &ReadoutModel, test: &[SampleStateVector]) -> Result<Metrics> {
    let dim = check_dataset(test)?;
    if dim != model.features {
        return Err(LsmError::Dataset(format!(
            "test features have {dim} dimensions, model expects {}",
            model.features
        )));
    }
    let mut confusion = vec![vec![0u64; model.classes]; model.classes];
    let mut correct = 0;
    for s in test {
        if s.label >= model.classes {
            return Err(LsmError::Dataset(format!("test label {} unseen in training", s.label)));
        }
        let p = model.predict(&s.features);
        confusion[s.label][p] += 1;
        correct += usize::from(p == s.label);
    }
    Ok(Metrics {
        accuracy: correct as f64 / test.len() as f64,
        correct,
        total: test.len(),
        confusion,
    })
}
