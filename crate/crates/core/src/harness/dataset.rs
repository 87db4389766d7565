use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::DATA_ROOT_ENV;
use crate::error::{LsmError, Result};
use crate::preprocess::{read_events, EventStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Text manifest: one `train <path>` or `test <path>` per line, `#` comments.
/// Relative paths resolve against `$LSM_DATA_ROOT` when set, else against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<(Split, PathBuf)>,
}

impl Manifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let root = std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from);
        let base = root.as_deref().unwrap_or(base);
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (split, path) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| LsmError::Dataset(format!("manifest line {}: expected `<split> <path>`", n + 1)))?;
            let split = match split {
                "train" => Split::Train,
                "test" => Split::Test,
                other => return Err(LsmError::Dataset(format!("manifest line {}: unknown split `{other}`", n + 1))),
            };
            let path = PathBuf::from(path.trim());
            entries.push((split, if path.is_relative() { base.join(path) } else { path }));
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LsmError::Dataset(format!("cannot read manifest {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub split: Split,
    pub stream: EventStream,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn from_streams(items: Vec<(Split, EventStream)>) -> Result<Self> {
        let samples = items
            .into_iter()
            .map(|(split, stream)| {
                let label = stream
                    .label
                    .ok_or_else(|| LsmError::Dataset("sample has no label".into()))? as usize;
                Ok(Sample { split, stream, label })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { samples })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }
}

pub fn load_dataset(manifest: &Path) -> Result<Dataset> {
    let m = Manifest::load(manifest)?;
    let items = m
        .entries
        .par_iter()
        .map(|(split, path)| {
            let f = File::open(path).map_err(|e| LsmError::Dataset(format!("cannot open {}: {e}", path.display())))?;
            Ok((*split, read_events(BufReader::new(f))?))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::from_streams(items)
}
