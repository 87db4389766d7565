//! Leaky integrate-and-fire population with exponential synaptic current.
//!
//! One call to [`lif_step`] advances every neuron by `dt` using forward Euler:
//!
//! ```text
//! u'[i] = u[i] (1 - dt/tau_u) + (sum_{j fired at t-1, j != i} w[j,i] + drive[i]) / tau_u
//! v'[i] = v[i] (1 - dt/tau_v) + u'[i] dt
//! fire  = v'[i] >= theta,  v'[i] -= theta on fire
//! ```
//!
//! Spikes emitted at step `t` reach their targets at step `t + 1`.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, LsmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams {
    /// Membrane decay time constant, in timesteps.
    pub tau_v: f64,
    /// Synaptic current time constant, in timesteps.
    pub tau_u: f64,
    /// Spiking threshold.
    pub theta: f64,
    pub dt: f64,
    /// Magnitude of recurrent reservoir weights.
    pub w_lsm: f64,
}

impl Default for NeuronParams {
    fn default() -> Self {
        Self {
            tau_v: 16.0,
            tau_u: 16.0,
            theta: 20.0,
            dt: 1.0,
            w_lsm: 1.0,
        }
    }
}

impl NeuronParams {
    pub fn new(tau_v: f64, tau_u: f64) -> Result<Self> {
        let p = Self {
            tau_v,
            tau_u,
            ..Self::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.tau_v, self.tau_u, self.theta, self.dt, self.w_lsm];
        if all.iter().any(|x| !x.is_finite()) {
            return config_err("neuron parameters must be finite");
        }
        if self.tau_v <= 0.0 || self.tau_u <= 0.0 || self.theta <= 0.0 || self.dt <= 0.0 {
            return config_err("tau_v, tau_u, theta and dt must be positive");
        }
        // forward Euler is only a contraction when dt < tau
        if self.dt >= self.tau_v || self.dt >= self.tau_u {
            return config_err(format!(
                "dt ({}) must be smaller than tau_v ({}) and tau_u ({})",
                self.dt, self.tau_v, self.tau_u
            ));
        }
        if self.w_lsm < 0.0 {
            return config_err("w_lsm is a magnitude and must be non-negative");
        }
        Ok(())
    }

    #[inline]
    pub fn membrane_decay(&self) -> f64 {
        1.0 - self.dt / self.tau_v
    }

    #[inline]
    pub fn synapse_decay(&self) -> f64 {
        1.0 - self.dt / self.tau_u
    }
}

/// Recurrent weights stored by source neuron (compressed rows).
///
/// Within a row, targets keep the order in which edges were supplied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseWeights {
    n: usize,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
}

impl SparseWeights {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            offsets: vec![0; n + 1],
            targets: Vec::new(),
            weights: Vec::new(),
        }
    }

    /// Builds the row structure from `(src, dst, weight)` triples. Sources and
    /// targets must be `< n`.
    pub fn from_edges(n: usize, edges: &[(u32, u32, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; n + 1];
        for &(s, d, _) in edges {
            if s as usize >= n || d as usize >= n {
                return config_err(format!("edge ({s}, {d}) out of range for population of {n}"));
            }
            counts[s as usize + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut targets = vec![0u32; edges.len()];
        let mut weights = vec![0f64; edges.len()];
        // stable bucketing keeps each row in input order
        for &(s, d, w) in edges {
            let slot = &mut cursor[s as usize];
            targets[*slot] = d;
            weights[*slot] = w;
            *slot += 1;
        }
        Ok(Self {
            n,
            offsets,
            targets,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn nnz(&self) -> usize {
        self.targets.len()
    }

    pub fn row(&self, src: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.offsets[src], self.offsets[src + 1]);
        self.targets[a..b]
            .iter()
            .zip(&self.weights[a..b])
            .map(|(&t, &w)| (t as usize, w))
    }

    /// Adds `sum_{j: fired[j]} w[j, i]` into `acc[i]`, skipping self edges.
    pub fn accumulate(&self, fired: &[bool], acc: &mut [f64]) {
        for (src, _) in fired.iter().enumerate().filter(|(_, &f)| f) {
            for (dst, w) in self.row(src) {
                if dst != src {
                    acc[dst] += w;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub spikes: Vec<bool>,
}

impl PopulationState {
    pub fn zeros(n: usize) -> Self {
        Self {
            v: vec![0.0; n],
            u: vec![0.0; n],
            spikes: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn spike_count(&self) -> usize {
        self.spikes.iter().filter(|&&s| s).count()
    }

    fn check(&self) -> Result<()> {
        if self.u.len() != self.v.len() || self.spikes.len() != self.v.len() {
            return config_err("population state vectors differ in length");
        }
        if let Some(i) = self
            .v
            .iter()
            .zip(&self.u)
            .position(|(v, u)| !v.is_finite() || !u.is_finite())
        {
            return Err(LsmError::Numerical(format!("non-finite state at neuron {i}")));
        }
        Ok(())
    }
}

/// One decay step of the synaptic trace: `trace * (1 - dt/tau_u) + arriving / tau_u`.
pub fn synapse_trace_update(trace: &[f64], arriving: &[f64], params: &NeuronParams) -> Result<Vec<f64>> {
    if trace.len() != arriving.len() {
        return config_err("trace and arrival vectors differ in length");
    }
    let decay = params.synapse_decay();
    Ok(trace
        .iter()
        .zip(arriving)
        .map(|(&u, &a)| u * decay + a / params.tau_u)
        .collect())
}

/// Integrates the membrane for one step given the already-updated current,
/// applies threshold and subtractive reset in place. Returns whether it fired.
#[inline]
pub fn membrane_update(v: &mut f64, u: f64, params: &NeuronParams) -> bool {
    *v = *v * params.membrane_decay() + u * params.dt;
    if *v >= params.theta {
        *v -= params.theta;
        true
    } else {
        false
    }
}

/// Advances `state` in place. `injected` is the external drive per neuron,
/// which enters the synaptic trace scaled by `1/tau_u` like recurrent input.
/// `scratch` must have the population length; it is overwritten.
pub fn step_in_place(
    state: &mut PopulationState,
    injected: &[f64],
    weights: &SparseWeights,
    params: &NeuronParams,
    scratch: &mut [f64],
) -> Result<()> {
    let n = state.len();
    if injected.len() != n || weights.len() != n || scratch.len() != n {
        return config_err(format!(
            "length mismatch: population {n}, injected {}, weights {}",
            injected.len(),
            weights.len()
        ));
    }
    scratch.copy_from_slice(injected);
    weights.accumulate(&state.spikes, scratch);

    let syn_decay = params.synapse_decay();
    let inv_tau_u = 1.0 / params.tau_u;
    let mut fault = None;
    for i in 0..n {
        let u = state.u[i] * syn_decay + scratch[i] * inv_tau_u;
        state.u[i] = u;
        state.spikes[i] = membrane_update(&mut state.v[i], u, params);
        if fault.is_none() && !state.v[i].is_finite() {
            fault = Some(i);
        }
    }
    match fault {
        Some(i) => Err(LsmError::Numerical(format!("membrane potential of neuron {i} is not finite"))),
        None => Ok(()),
    }
}

/// Pure form of [`step_in_place`].
pub fn lif_step(
    state: &PopulationState,
    injected: &[f64],
    weights: &SparseWeights,
    params: &NeuronParams,
) -> Result<PopulationState> {
    state.check()?;
    let mut next = state.clone();
    let mut scratch = vec![0.0; state.len()];
    step_in_place(&mut next, injected, weights, params, &mut scratch)?;
    Ok(next)
}
