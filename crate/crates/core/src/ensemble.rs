//! Reservoir ensembles.
//!
//! * Multi-length-scale (MuLRE): independent reservoirs that differ only in
//!   the preferred connection length `d`, all fed the same receptive-field
//!   input at every step.
//! * Temporally partitioned (TEPRE): the presentation is split into equal
//!   slabs; slab `r` drives only partition `r` through standard input. Each
//!   partition's inhibitory neurons project sparsely onto the next partition.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::input_map::{build_input_map, InputMap, InputScheme, InputSpec};
use crate::neuron::{step_in_place, NeuronParams, PopulationState, SparseWeights};
use crate::rng::{derive_seed, rng_from};
use crate::topology::{build_reservoir, ConnectionLaw, GridDims, ReservoirTopology};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnsembleSpec {
    Mulre {
        d_list: Vec<f64>,
        /// Per-member length scale; the shared law's lambda when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambdas: Option<Vec<f64>>,
        window: usize,
    },
    Tepre {
        partitions: usize,
        inter_density: f64,
        inter_weight: f64,
    },
}

impl EnsembleSpec {
    pub fn members(&self) -> usize {
        match self {
            EnsembleSpec::Mulre { d_list, .. } => d_list.len(),
            EnsembleSpec::Tepre { partitions, .. } => *partitions,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnsembleSpec::Mulre { d_list, lambdas, window } => {
                if d_list.is_empty() {
                    return config_err("MuLRE needs at least one distance offset");
                }
                if d_list.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
                    return config_err("distance offsets must be finite and >= 0");
                }
                if let Some(l) = lambdas {
                    if l.len() != d_list.len() {
                        return config_err(format!("{} lambdas for {} members", l.len(), d_list.len()));
                    }
                }
                if *window == 0 {
                    return config_err("receptive-field window must be >= 1");
                }
            }
            EnsembleSpec::Tepre {
                partitions,
                inter_density,
                inter_weight,
            } => {
                if *partitions == 0 {
                    return config_err("TEPRE needs at least one partition");
                }
                if !(0.0..=1.0).contains(inter_density) {
                    return config_err(format!("inter-partition density {inter_density} outside [0, 1]"));
                }
                if !(*inter_weight < 0.0) {
                    return config_err("inter-partition weight must be negative (inhibitory)");
                }
            }
        }
        Ok(())
    }
}

/// Half-open input windows `[start, end)`, one per partition, tiling `[0, T)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatingSchedule {
    pub intervals: Vec<(usize, usize)>,
}

impl GatingSchedule {
    pub fn equal_split(steps: usize, partitions: usize) -> Result<Self> {
        if partitions == 0 {
            return config_err("schedule needs at least one partition");
        }
        let intervals = (0..partitions)
            .map(|r| (r * steps / partitions, (r + 1) * steps / partitions))
            .collect();
        Ok(Self { intervals })
    }

    pub fn steps(&self) -> usize {
        self.intervals.last().map_or(0, |iv| iv.1)
    }

    /// Checks that the intervals are ordered, contiguous and cover `[0, steps)`.
    pub fn validate(&self, steps: usize) -> Result<()> {
        let mut cursor = 0;
        for &(a, b) in &self.intervals {
            if a != cursor || b < a {
                return config_err(format!("gating interval [{a}, {b}) leaves a gap or overlap at {cursor}"));
            }
            cursor = b;
        }
        if cursor != steps {
            return config_err(format!("gating schedule covers [0, {cursor}) but the presentation has {steps} steps"));
        }
        Ok(())
    }

    pub fn partition_at(&self, t: usize) -> Option<usize> {
        self.intervals.iter().position(|&(a, b)| a <= t && t < b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SpikeRecord {
    /// Spikes per neuron over the whole presentation.
    pub counts: Vec<u32>,
    /// Spikes per neuron inside the member's own gating interval (TEPRE only).
    pub slab_counts: Option<Vec<u32>>,
}

impl SpikeRecord {
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }
}

/// Per-step hook; receives each member's injected current and spike flags.
pub trait StepObserver {
    fn on_step(&mut self, t: usize, member: usize, injected: &[f64], spikes: &[bool]);
}

impl StepObserver for () {
    fn on_step(&mut self, _: usize, _: usize, _: &[f64], _: &[bool]) {}
}

/// Collects spike rasters as `(step, neuron)` pairs per member.
#[derive(Debug, Clone, Default)]
pub struct RasterRecorder {
    pub spikes: Vec<Vec<(u32, u32)>>,
}

impl StepObserver for RasterRecorder {
    fn on_step(&mut self, t: usize, member: usize, _: &[f64], spikes: &[bool]) {
        if self.spikes.len() <= member {
            self.spikes.resize(member + 1, Vec::new());
        }
        let list = &mut self.spikes[member];
        list.extend(spikes.iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| (t as u32, i as u32)));
    }
}

/// One reservoir with its input wiring.
#[derive(Debug, Clone)]
pub struct Member {
    pub topology: ReservoirTopology,
    pub input: InputMap,
    weights: SparseWeights,
}

impl Member {
    pub fn new(topology: ReservoirTopology, input: InputMap) -> Result<Self> {
        if input.n_reservoir != topology.size() {
            return config_err(format!(
                "input map targets {} neurons but the reservoir has {}",
                input.n_reservoir,
                topology.size()
            ));
        }
        let weights = topology.weights();
        Ok(Self {
            topology,
            input,
            weights,
        })
    }

    pub fn size(&self) -> usize {
        self.topology.size()
    }
}

fn check_drive(drive: &[Vec<f64>], members: &[Member]) -> Result<()> {
    for m in members {
        if let Some(bad) = drive.iter().find(|d| d.len() != m.input.n_inputs) {
            return config_err(format!(
                "drive has {} inputs but the input map expects {}",
                bad.len(),
                m.input.n_inputs
            ));
        }
    }
    Ok(())
}

/// Simulates one reservoir driven at every step.
pub fn run_single(drive: &[Vec<f64>], member: &Member, params: &NeuronParams) -> Result<SpikeRecord> {
    let mut recs = run_mulre_observed(drive, std::slice::from_ref(member), params, &mut ())?;
    Ok(recs.pop().unwrap())
}

pub fn run_mulre(drive: &[Vec<f64>], members: &[Member], params: &NeuronParams) -> Result<Vec<SpikeRecord>> {
    run_mulre_observed(drive, members, params, &mut ())
}

/// Members share the drive but never interact.
pub fn run_mulre_observed(
    drive: &[Vec<f64>],
    members: &[Member],
    params: &NeuronParams,
    observer: &mut impl StepObserver,
) -> Result<Vec<SpikeRecord>> {
    check_drive(drive, members)?;
    members
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let n = m.size();
            let mut state = PopulationState::zeros(n);
            let (mut injected, mut scratch) = (vec![0.0; n], vec![0.0; n]);
            let mut counts = vec![0u32; n];
            for (t, x) in drive.iter().enumerate() {
                injected.iter_mut().for_each(|v| *v = 0.0);
                m.input.inject(x, &mut injected);
                step_in_place(&mut state, &injected, &m.weights, params, &mut scratch)?;
                tally(&state.spikes, &mut counts);
                observer.on_step(t, k, &injected, &state.spikes);
            }
            Ok(SpikeRecord {
                counts,
                slab_counts: None,
            })
        })
        .collect()
}

fn tally(spikes: &[bool], counts: &mut [u32]) {
    for (c, &s) in counts.iter_mut().zip(spikes) {
        *c += u32::from(s);
    }
}

fn offsets(members: &[impl AsRef<ReservoirTopology>]) -> Vec<usize> {
    let mut off = vec![0];
    for m in members {
        off.push(off.last().unwrap() + m.as_ref().size());
    }
    off
}

impl AsRef<ReservoirTopology> for ReservoirTopology {
    fn as_ref(&self) -> &ReservoirTopology {
        self
    }
}

impl AsRef<ReservoirTopology> for Member {
    fn as_ref(&self) -> &ReservoirTopology {
        &self.topology
    }
}

/// Inter-partition inhibition in concatenated indexing: every inhibitory
/// neuron of partition `r` projects to each neuron of partition `r + 1` with
/// probability `inter_density`.
pub fn build_tepre(
    members: &[ReservoirTopology],
    inter_density: f64,
    inter_weight: f64,
    seed: u64,
) -> Result<Vec<(u32, u32, f64)>> {
    if !(inter_weight < 0.0) {
        return config_err("inter-partition weight must be negative (inhibitory)");
    }
    if !(0.0..=1.0).contains(&inter_density) {
        return config_err(format!("inter-partition density {inter_density} outside [0, 1]"));
    }
    let off = offsets(members);
    let mut edges = Vec::new();
    if inter_density == 0.0 {
        return Ok(edges);
    }
    for r in 0..members.len().saturating_sub(1) {
        let mut rng = rng_from(derive_seed(seed, 0x7E, r as u64));
        let next = members[r + 1].size();
        for src in members[r].inhibitory() {
            for dst in 0..next {
                if rng.random::<f64>() < inter_density {
                    edges.push(((off[r] + src) as u32, (off[r + 1] + dst) as u32, inter_weight));
                }
            }
        }
    }
    Ok(edges)
}

pub fn run_tepre(
    drive: &[Vec<f64>],
    members: &[Member],
    inter_edges: &[(u32, u32, f64)],
    schedule: &GatingSchedule,
    params: &NeuronParams,
) -> Result<Vec<SpikeRecord>> {
    run_tepre_observed(drive, members, inter_edges, schedule, params, &mut ())
}

/// Concatenates all partitions into one population so inter-partition spikes
/// follow the same one-step delay as recurrent ones.
pub fn combined_weights(members: &[Member], inter_edges: &[(u32, u32, f64)]) -> Result<SparseWeights> {
    let off = offsets(members);
    let mut edges = Vec::with_capacity(members.iter().map(|m| m.topology.edges.len()).sum::<usize>() + inter_edges.len());
    for (m, &o) in members.iter().zip(&off) {
        edges.extend(m.topology.edges.iter().map(|&(s, d, w)| (s + o as u32, d + o as u32, w)));
    }
    edges.extend_from_slice(inter_edges);
    SparseWeights::from_edges(off[members.len()], &edges)
}

pub fn run_tepre_observed(
    drive: &[Vec<f64>],
    members: &[Member],
    inter_edges: &[(u32, u32, f64)],
    schedule: &GatingSchedule,
    params: &NeuronParams,
    observer: &mut impl StepObserver,
) -> Result<Vec<SpikeRecord>> {
    let weights = combined_weights(members, inter_edges)?;
    run_tepre_with(drive, members, &weights, schedule, params, observer)
}

/// As [`run_tepre_observed`] with precombined weights (see [`combined_weights`]).
pub fn run_tepre_with(
    drive: &[Vec<f64>],
    members: &[Member],
    weights: &SparseWeights,
    schedule: &GatingSchedule,
    params: &NeuronParams,
    observer: &mut impl StepObserver,
) -> Result<Vec<SpikeRecord>> {
    if schedule.intervals.len() != members.len() {
        return config_err(format!(
            "{} gating intervals for {} partitions",
            schedule.intervals.len(),
            members.len()
        ));
    }
    schedule.validate(drive.len())?;
    check_drive(drive, members)?;
    let off = offsets(members);
    let n = off[members.len()];
    if weights.len() != n {
        return config_err("combined weights do not match the partitions");
    }
    let mut state = PopulationState::zeros(n);
    let (mut injected, mut scratch) = (vec![0.0; n], vec![0.0; n]);
    let mut counts = vec![0u32; n];
    let mut slab = vec![0u32; n];
    let mut active = 0;
    for (t, x) in drive.iter().enumerate() {
        while t >= schedule.intervals[active].1 {
            active += 1;
        }
        injected.iter_mut().for_each(|v| *v = 0.0);
        let (a, b) = (off[active], off[active + 1]);
        members[active].input.inject(x, &mut injected[a..b]);
        step_in_place(&mut state, &injected, weights, params, &mut scratch)?;
        tally(&state.spikes, &mut counts);
        tally(&state.spikes[a..b], &mut slab[a..b]);
        for (k, w) in off.windows(2).enumerate() {
            observer.on_step(t, k, &injected[w[0]..w[1]], &state.spikes[w[0]..w[1]]);
        }
    }
    Ok(off
        .windows(2)
        .map(|w| SpikeRecord {
            counts: counts[w[0]..w[1]].to_vec(),
            slab_counts: Some(slab[w[0]..w[1]].to_vec()),
        })
        .collect())
}

/// Input layout shared by every member of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputLayout {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub weight: f64,
    pub density: f64,
}

impl InputLayout {
    pub fn n_inputs(&self) -> usize {
        self.width * self.height * self.channels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnsembleSeeds {
    pub topology: u64,
    pub input: u64,
}

/// A fully wired ensemble ready to simulate samples.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub spec: EnsembleSpec,
    pub members: Vec<Member>,
    pub inter_edges: Vec<(u32, u32, f64)>,
    combined: Option<SparseWeights>,
}

impl Ensemble {
    /// Builds every member. MuLRE members use receptive-field input and the
    /// member's own `d`; TEPRE partitions use standard input and `law.d`.
    pub fn build(
        spec: &EnsembleSpec,
        member_dims: GridDims,
        law: &ConnectionLaw,
        params: &NeuronParams,
        layout: InputLayout,
        seeds: EnsembleSeeds,
    ) -> Result<Self> {
        spec.validate()?;
        params.validate()?;
        member_dims.validate()?;
        let scheme = match spec {
            EnsembleSpec::Mulre { window, .. } => InputScheme::ReceptiveField {
                window: *window,
                width: layout.width,
                height: layout.height,
                channels: layout.channels,
            },
            EnsembleSpec::Tepre { .. } => InputScheme::Standard,
        };
        let input_spec = InputSpec {
            n_inputs: layout.n_inputs(),
            weight: layout.weight,
            density: layout.density,
            scheme,
        };
        let member_law = |k: usize| match spec {
            EnsembleSpec::Mulre { d_list, lambdas, .. } => ConnectionLaw {
                d: d_list[k],
                lambda: lambdas.as_ref().map_or(law.lambda, |l| l[k]),
                c: law.c,
            },
            EnsembleSpec::Tepre { .. } => *law,
        };
        let members = (0..spec.members())
            .map(|k| {
                let topo = build_reservoir(member_dims, &member_law(k), params, derive_seed(seeds.topology, 0x70, k as u64))?;
                let input = build_input_map(&input_spec, member_dims, derive_seed(seeds.input, 0x1F, k as u64))?;
                Member::new(topo, input)
            })
            .collect::<Result<Vec<_>>>()?;
        let (inter_edges, combined) = match spec {
            EnsembleSpec::Tepre {
                inter_density,
                inter_weight,
                ..
            } => {
                let topos: Vec<_> = members.iter().map(|m| m.topology.clone()).collect();
                let inter = build_tepre(&topos, *inter_density, *inter_weight, derive_seed(seeds.topology, 0x1E, 0))?;
                let combined = combined_weights(&members, &inter)?;
                (inter, Some(combined))
            }
            EnsembleSpec::Mulre { .. } => (Vec::new(), None),
        };
        Ok(Self {
            spec: spec.clone(),
            members,
            inter_edges,
            combined,
        })
    }

    pub fn total_neurons(&self) -> usize {
        self.members.iter().map(Member::size).sum()
    }

    pub fn run(&self, drive: &[Vec<f64>], params: &NeuronParams) -> Result<Vec<SpikeRecord>> {
        self.run_observed(drive, params, &mut ())
    }

    pub fn run_observed(
        &self,
        drive: &[Vec<f64>],
        params: &NeuronParams,
        observer: &mut impl StepObserver,
    ) -> Result<Vec<SpikeRecord>> {
        match &self.combined {
            None => run_mulre_observed(drive, &self.members, params, observer),
            Some(w) => {
                let schedule = GatingSchedule::equal_split(drive.len(), self.members.len())?;
                run_tepre_with(drive, &self.members, w, &schedule, params, observer)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::input_map::build_standard_input;

    fn params() -> NeuronParams {
        NeuronParams::default()
    }

    fn member(dims: GridDims, n_inputs: usize, seed: u64) -> Member {
        let topo = build_reservoir(dims, &ConnectionLaw::default(), &params(), seed).unwrap();
        let spec = InputSpec {
            n_inputs,
            weight: 40.0,
            density: 0.25,
            scheme: InputScheme::Standard,
        };
        Member::new(topo, build_standard_input(&spec, dims, seed + 100).unwrap()).unwrap()
    }

    fn drive(steps: usize, n: usize) -> Vec<Vec<f64>> {
        (0..steps)
            .map(|t| (0..n).map(|i| ((t * 7 + i * 3) % 5 == 0) as u8 as f64).collect())
            .collect()
    }

    #[test]
    fn schedule_equal_split() {
        let s = GatingSchedule::equal_split(300, 3).unwrap();
        assert_eq!(s.intervals, vec![(0, 100), (100, 200), (200, 300)]);
        let s = GatingSchedule::equal_split(10, 3).unwrap();
        let lens: Vec<_> = s.intervals.iter().map(|(a, b)| b - a).collect();
        assert!(lens.iter().max().unwrap() - lens.iter().min().unwrap() <= 1);
        s.validate(10).unwrap();
    }

    #[test]
    fn schedule_gaps_and_overlaps_rejected() {
        let gap = GatingSchedule { intervals: vec![(0, 4), (5, 10)] };
        assert!(gap.validate(10).is_err());
        let overlap = GatingSchedule { intervals: vec![(0, 6), (5, 10)] };
        assert!(overlap.validate(10).is_err());
        let short = GatingSchedule { intervals: vec![(0, 6)] };
        assert!(short.validate(10).is_err());
    }

    #[test]
    fn single_partition_matches_plain_run() {
        let dims = GridDims::new(4, 4, 4).unwrap();
        let m = member(dims, 20, 1);
        let d = drive(50, 20);
        let plain = run_single(&d, &m, &params()).unwrap();
        assert!(plain.total() > 0, "test drive should make the reservoir spike");
        let sched = GatingSchedule::equal_split(50, 1).unwrap();
        let tepre = run_tepre(&d, std::slice::from_ref(&m), &[], &sched, &params()).unwrap();
        assert_eq!(tepre[0].counts, plain.counts);
        let mulre = run_mulre(&d, std::slice::from_ref(&m), &params()).unwrap();
        assert_eq!(mulre[0], plain);
    }

    #[test]
    fn mulre_member_order_is_irrelevant() {
        let dims = GridDims::new(2, 4, 4).unwrap();
        let (a, b) = (member(dims, 10, 1), member(dims, 10, 2));
        let d = drive(30, 10);
        let ab = run_mulre(&d, &[a.clone(), b.clone()], &params()).unwrap();
        let ba = run_mulre(&d, &[b, a], &params()).unwrap();
        assert_eq!(ab[0], ba[1]);
        assert_eq!(ab[1], ba[0]);
    }

    #[test]
    fn inter_edges_are_inhibitory_and_forward() {
        let dims = GridDims::new(2, 2, 4).unwrap();
        let topos: Vec<_> = (0..3)
            .map(|s| build_reservoir(dims, &ConnectionLaw::default(), &params(), s).unwrap())
            .collect();
        let edges = build_tepre(&topos, 0.5, -1.0, 3).unwrap();
        assert!(!edges.is_empty());
        for &(s, d, w) in &edges {
            assert!(w < 0.0);
            let (ps, pd) = (s as usize / 16, d as usize / 16);
            assert_eq!(pd, ps + 1);
            assert_eq!(topos[ps].kinds[s as usize % 16], crate::topology::NeuronKind::Inhibitory);
        }
        assert!(build_tepre(&topos[..1], 0.5, -1.0, 3).unwrap().is_empty());
        assert!(build_tepre(&topos, 0.0, -1.0, 3).unwrap().is_empty());
        assert!(build_tepre(&topos, 0.5, 0.0, 3).is_err());
    }

    #[test]
    fn mismatched_schedule_rejected() {
        let dims = GridDims::new(2, 2, 2).unwrap();
        let m = member(dims, 4, 0);
        let sched = GatingSchedule::equal_split(9, 2).unwrap();
        assert!(run_tepre(&drive(10, 4), &[m.clone(), m], &[], &sched, &params()).is_err());
    }

    #[test]
    fn raster_matches_counts() {
        let dims = GridDims::new(4, 4, 4).unwrap();
        let m = member(dims, 20, 5);
        let mut rec = RasterRecorder::default();
        let out = run_mulre_observed(&drive(40, 20), std::slice::from_ref(&m), &params(), &mut rec).unwrap();
        assert_eq!(rec.spikes[0].len() as u64, out[0].total());
    }
}
