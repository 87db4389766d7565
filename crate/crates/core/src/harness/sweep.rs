use std::fmt::Write as _;
use std::time::Instant;

use super::dataset::Dataset;
use super::pipeline::{preprocess_dataset, run_preprocessed, RunReport};
use crate::config::ExperimentConfig;
use crate::ensemble::EnsembleSpec;
use crate::error::{config_err, Result};
use crate::topology::GridDims;

#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    /// TEPRE partition counts at a fixed total neuron budget.
    Partitions(Vec<usize>),
    /// MuLRE distance-offset lists at a fixed total neuron budget.
    DList(Vec<Vec<f64>>),
    /// Receptive-field window sizes.
    Window(Vec<usize>),
}

impl SweepAxis {
    pub fn len(&self) -> usize {
        match self {
            SweepAxis::Partitions(v) => v.len(),
            SweepAxis::DList(v) => v.len(),
            SweepAxis::Window(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Partitions(_) => "partitions",
            SweepAxis::DList(_) => "d_list",
            SweepAxis::Window(_) => "window",
        }
    }

    fn label(&self, i: usize) -> String {
        match self {
            SweepAxis::Partitions(v) => v[i].to_string(),
            SweepAxis::DList(v) => format!("{:?}", v[i]),
            SweepAxis::Window(v) => v[i].to_string(),
        }
    }
}

/// Member grid for `members` reservoirs sharing `total` neurons. The base
/// layout is kept when the member count is unchanged.
fn rebudget(base: &ExperimentConfig, members: usize) -> Result<GridDims> {
    if members == base.ensemble.members() {
        return Ok(base.reservoir.member_dims);
    }
    let total = base.total_neurons();
    if members == 0 || total % members != 0 {
        return config_err(format!("{total} neurons do not split evenly into {members} members"));
    }
    GridDims::near_cubic(total / members)
}

fn variant(base: &ExperimentConfig, axis: &SweepAxis, i: usize) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    match (axis, &mut cfg.ensemble) {
        (SweepAxis::Partitions(v), EnsembleSpec::Tepre { partitions, .. }) => {
            *partitions = v[i];
            cfg.reservoir.member_dims = rebudget(base, v[i])?;
        }
        (SweepAxis::DList(v), EnsembleSpec::Mulre { d_list, lambdas, .. }) => {
            *d_list = v[i].clone();
            *lambdas = None;
            cfg.reservoir.member_dims = rebudget(base, v[i].len())?;
        }
        (SweepAxis::Window(v), EnsembleSpec::Mulre { window, .. }) => *window = v[i],
        _ => return config_err(format!("sweep axis `{}` does not apply to this ensemble", axis.name())),
    }
    cfg.name = format!("{}-{}-{}", base.name, axis.name(), axis.label(i));
    cfg.output_dir = base.output_dir.join(format!("{}-{i}", axis.name()));
    cfg.validate()?;
    Ok(cfg)
}

/// One run per axis value with the base config's seeds. Preprocessing is
/// shared because no axis touches it.
pub fn sweep(base: &ExperimentConfig, data: &Dataset, axis: &SweepAxis) -> Result<Vec<RunReport>> {
    if axis.is_empty() {
        return config_err("sweep axis has no values");
    }
    let configs = (0..axis.len()).map(|i| variant(base, axis, i)).collect::<Result<Vec<_>>>()?;
    let t = Instant::now();
    let pre = preprocess_dataset(base, data)?;
    let pre_s = t.elapsed().as_secs_f64();
    configs
        .iter()
        .map(|cfg| Ok(run_preprocessed(cfg, &pre, pre_s)?.report))
        .collect()
}

/// Tab-separated summary, one row per run.
pub fn summary_table(axis: &SweepAxis, reports: &[RunReport]) -> String {
    let mut s = format!("{}\tmembers\tmember_dims\tneurons\ttrain_acc\ttest_acc_mean\ttest_acc_std\n", axis.name());
    for (i, r) in reports.iter().enumerate() {
        let d = r.config.reservoir.member_dims;
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}",
            axis.label(i),
            r.config.ensemble.members(),
            d,
            r.total_neurons,
            r.summary.mean_train,
            r.summary.mean_test,
            r.summary.std_test
        );
    }
    s
}
