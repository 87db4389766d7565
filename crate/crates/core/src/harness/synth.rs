//! Synthetic event datasets whose class evidence lives in distinct temporal
//! phases.
//!
//! A presentation has `phases` equal phases. Every phase shows one of a small
//! set of fixed random pixel patterns; active pixels fire independently with
//! probability `rate` per time window, and every pixel fires with probability
//! `noise_rate`.
//!
//! * `Permutation`: class `c` shows the `c`-th lexicographic permutation of
//!   the `phases` patterns. All classes show the same patterns for the same
//!   total time, so only their order carries the label.
//! * `SinglePhase { phase }`: phase `phase` shows the class's own pattern and
//!   every other phase a uniformly random one, so only that phase is
//!   informative.
//!
//! With `noise_rate = 0` the pattern identity of every phase is recoverable
//! exactly, so the Bayes-optimal accuracy is 1. The defaults (50-step phases,
//! rate 0.1, noise 0.05) keep every phase near-perfectly identifiable while
//! making the order hard to recover from a single fading-memory reservoir.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Split;
use crate::error::{config_err, Result};
use crate::preprocess::{write_events, Event, EventStream};
use crate::rng::{derive_seed, rng_from, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SynthMode {
    Permutation,
    SinglePhase { phase: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: usize,
    pub phases: usize,
    pub mode: SynthMode,
    pub width: u32,
    pub height: u32,
    /// Time windows per phase.
    pub phase_steps: usize,
    pub time_window_us: u64,
    /// Fraction of pixels belonging to each pattern.
    pub pattern_density: f64,
    pub rate: f64,
    pub noise_rate: f64,
    pub train: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 4,
            phases: 3,
            mode: SynthMode::Permutation,
            width: 16,
            height: 16,
            phase_steps: 50,
            time_window_us: 1000,
            pattern_density: 0.25,
            rate: 0.1,
            noise_rate: 0.05,
            train: 500,
            test: 500,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn steps(&self) -> usize {
        self.phases * self.phase_steps
    }

    fn patterns(&self) -> usize {
        match self.mode {
            SynthMode::Permutation => self.phases,
            SynthMode::SinglePhase { .. } => self.classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.phases == 0 || self.phase_steps == 0 {
            return config_err("synthetic data needs >= 2 classes and non-empty phases");
        }
        if self.width == 0 || self.height == 0 || self.time_window_us == 0 {
            return config_err("synthetic sensor and time window must be non-empty");
        }
        for p in [self.pattern_density, self.rate, self.noise_rate] {
            if !(0.0..=1.0).contains(&p) {
                return config_err(format!("probability {p} outside [0, 1]"));
            }
        }
        match self.mode {
            SynthMode::Permutation => {
                let perms: usize = (1..=self.phases).product();
                if self.classes > perms {
                    return config_err(format!("{} phases only give {perms} orderings", self.phases));
                }
            }
            SynthMode::SinglePhase { phase } => {
                if phase >= self.phases {
                    return config_err(format!("signal phase {phase} >= {} phases", self.phases));
                }
            }
        }
        Ok(())
    }
}

/// The `k`-th permutation of `0..n` in lexicographic order.
fn nth_permutation(n: usize, mut k: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let mut fact: usize = (1..n).product::<usize>().max(1);
    let mut out = Vec::with_capacity(n);
    for i in (0..n).rev() {
        let idx = k / fact;
        k %= fact;
        out.push(pool.remove(idx));
        if i > 0 {
            fact /= i;
        }
    }
    out
}

fn pattern_pixels(spec: &SynthSpec, rng: &mut SimRng) -> Vec<Vec<(u16, u16)>> {
    let all: Vec<(u16, u16)> = (0..spec.height as u16)
        .flat_map(|y| (0..spec.width as u16).map(move |x| (x, y)))
        .collect();
    let k = ((spec.pattern_density * all.len() as f64).round() as usize).max(1);
    (0..spec.patterns())
        .map(|_| {
            let mut px = all.clone();
            px.shuffle(rng);
            px.truncate(k);
            px.sort_unstable();
            px
        })
        .collect()
}

fn sample_stream(spec: &SynthSpec, patterns: &[Vec<(u16, u16)>], label: usize, rng: &mut SimRng) -> EventStream {
    let sequence: Vec<usize> = match spec.mode {
        SynthMode::Permutation => nth_permutation(spec.phases, label),
        SynthMode::SinglePhase { phase } => (0..spec.phases)
            .map(|p| if p == phase { label } else { rng.random_range(0..patterns.len()) })
            .collect(),
    };
    let mut events = Vec::new();
    let window = spec.time_window_us;
    for step in 0..spec.steps() {
        let pattern = &patterns[sequence[step / spec.phase_steps]];
        let mut fire = |x: u16, y: u16, rng: &mut SimRng| {
            events.push(Event {
                t: step as u64 * window + rng.random_range(0..window),
                x,
                y,
                p: rng.random_range(0..2),
            });
        };
        if spec.rate > 0.0 {
            for &(x, y) in pattern {
                if rng.random::<f64>() < spec.rate {
                    fire(x, y, rng);
                }
            }
        }
        if spec.noise_rate > 0.0 {
            for y in 0..spec.height as u16 {
                for x in 0..spec.width as u16 {
                    if rng.random::<f64>() < spec.noise_rate {
                        fire(x, y, rng);
                    }
                }
            }
        }
    }
    events.sort_by_key(|e| e.t);
    EventStream {
        events,
        width: spec.width,
        height: spec.height,
        label: Some(label as u32),
    }
}

/// Balanced, interleaved labels: sample `i` of a split has label `i % classes`.
pub fn generate(spec: &SynthSpec) -> Result<Vec<(Split, EventStream)>> {
    spec.validate()?;
    let patterns = pattern_pixels(spec, &mut rng_from(derive_seed(spec.seed, 0x5A, 0)));
    let mut out = Vec::with_capacity(spec.train + spec.test);
    for (split, n, tag) in [(Split::Train, spec.train, 1u64), (Split::Test, spec.test, 2u64)] {
        for i in 0..n {
            let mut rng = rng_from(derive_seed(spec.seed, tag, i as u64));
            out.push((split, sample_stream(spec, &patterns, i % spec.classes, &mut rng)));
        }
    }
    Ok(out)
}

/// Writes `<split>/<index>.evs` files and a `manifest.txt` into `dir`.
pub fn write_synthetic(spec: &SynthSpec, dir: &Path) -> Result<Vec<(Split, EventStream)>> {
    let samples = generate(spec)?;
    std::fs::create_dir_all(dir.join("train"))?;
    std::fs::create_dir_all(dir.join("test"))?;
    let mut manifest = BufWriter::new(File::create(dir.join("manifest.txt"))?);
    writeln!(manifest, "# synthetic {:?}, {} classes, {} phases x {} steps", spec.mode, spec.classes, spec.phases, spec.phase_steps)?;
    let mut counters = [0usize; 2];
    for (split, stream) in &samples {
        let idx = &mut counters[*split as usize];
        let rel = format!("{}/{:06}.evs", split.as_str(), *idx);
        *idx += 1;
        write_events(stream, BufWriter::new(File::create(dir.join(&rel))?))?;
        writeln!(manifest, "{} {rel}", split.as_str())?;
    }
    manifest.flush()?;
    Ok(samples)
}
