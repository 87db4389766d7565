//! Sparse signed input-to-reservoir wiring.
//!
//! Each input neuron gets `k` distinct reservoir targets, half with
//! `+weight` and half with `-weight`. Under the standard scheme targets come
//! from the whole reservoir; under the receptive-field scheme they come from
//! an `(x, y)` window (all `z`) anchored at the pixel's scaled position.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, LsmError, Result};
use crate::rng::{derive_seed, rng_from};
use crate::topology::{parse_err, parse_num, read_edges, write_edges, GridDims};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum InputScheme {
    Standard,
    ReceptiveField {
        window: usize,
        width: usize,
        height: usize,
        channels: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    pub n_inputs: usize,
    pub weight: f64,
    /// Fraction of candidate reservoir neurons each input connects to.
    pub density: f64,
    pub scheme: InputScheme,
}

impl InputSpec {
    pub fn validate(&self, dims: &GridDims) -> Result<()> {
        if !(self.density > 0.0 && self.density <= 1.0) {
            return config_err(format!("input density {} outside (0, 1]", self.density));
        }
        if !self.weight.is_finite() || self.weight < 0.0 {
            return config_err("input weight is a non-negative magnitude");
        }
        match self.scheme {
            InputScheme::Standard => {
                standard_fan_out(self.density, dims.size())?;
            }
            InputScheme::ReceptiveField {
                window,
                width,
                height,
                channels,
            } => {
                if window == 0 || window > dims.nx || window > dims.ny {
                    return config_err(format!("window {window} does not fit a {}x{} reservoir face", dims.nx, dims.ny));
                }
                if width == 0 || height == 0 || channels == 0 {
                    return config_err("receptive-field input needs a non-empty pixel grid");
                }
                if width * height * channels != self.n_inputs {
                    return config_err(format!(
                        "{} inputs do not match a {channels}x{height}x{width} pixel grid",
                        self.n_inputs
                    ));
                }
            }
        }
        Ok(())
    }
}

fn standard_fan_out(density: f64, n: usize) -> Result<usize> {
    let k = (density * n as f64).round() as usize;
    if k > n {
        return config_err(format!("fan-out {k} exceeds reservoir size {n}"));
    }
    if k < 2 || k % 2 != 0 {
        return config_err(format!(
            "fan-out round({density} * {n}) = {k} must be even and at least 2"
        ));
    }
    Ok(k)
}

/// Fan-out inside a window pool: `round(density * pool)`, rounded down to
/// even, at least 2 and at most the pool size.
pub fn pool_fan_out(density: f64, pool: usize) -> Result<usize> {
    let cap = pool - pool % 2;
    if cap < 2 {
        return config_err(format!("receptive-field pool of {pool} neurons is too small for a +/- pair"));
    }
    let k = (density * pool as f64).round() as usize;
    Ok((k - k % 2).clamp(2, cap))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputMap {
    pub n_inputs: usize,
    pub n_reservoir: usize,
    /// `(input, reservoir, signed weight)`, grouped by input in ascending order.
    pub edges: Vec<(u32, u32, f64)>,
    pub seed: u64,
}

pub fn build_input_map(spec: &InputSpec, dims: GridDims, seed: u64) -> Result<InputMap> {
    match spec.scheme {
        InputScheme::Standard => build_standard_input(spec, dims, seed),
        InputScheme::ReceptiveField { .. } => build_receptive_field_input(spec, dims, seed),
    }
}

fn signed_edges(edges: &mut Vec<(u32, u32, f64)>, input: usize, targets: impl Iterator<Item = usize>, k: usize, weight: f64) {
    // targets arrive in uniformly random order, so the first half is a random half
    for (n, t) in targets.enumerate() {
        let w = if n < k / 2 { weight } else { -weight };
        edges.push((input as u32, t as u32, w));
    }
}

pub fn build_standard_input(spec: &InputSpec, dims: GridDims, seed: u64) -> Result<InputMap> {
    if spec.scheme != InputScheme::Standard {
        return config_err("build_standard_input needs the standard scheme");
    }
    dims.validate()?;
    spec.validate(&dims)?;
    let n = dims.size();
    let k = standard_fan_out(spec.density, n)?;
    let mut edges = Vec::with_capacity(spec.n_inputs * k);
    for input in 0..spec.n_inputs {
        let mut rng = rng_from(derive_seed(seed, 0x1A, input as u64));
        let picks = index::sample(&mut rng, n, k);
        signed_edges(&mut edges, input, picks.into_iter(), k, spec.weight);
    }
    Ok(InputMap {
        n_inputs: spec.n_inputs,
        n_reservoir: n,
        edges,
        seed,
    })
}

/// Reservoir `(x, y)` column that pixel `(px, py)` maps onto.
pub fn anchor(px: usize, py: usize, width: usize, height: usize, dims: &GridDims) -> (usize, usize) {
    (px * dims.nx / width, py * dims.ny / height)
}

/// Inclusive window bounds along one axis, clipped to `[0, extent)`.
pub fn window_span(center: usize, window: usize, extent: usize) -> (usize, usize) {
    let half = window / 2;
    let lo = center as isize - half as isize;
    let hi = lo + window as isize - 1;
    (lo.max(0) as usize, (hi.min(extent as isize - 1)) as usize)
}

/// All reservoir neurons in the window around an anchor, in index order.
pub fn window_pool(anchor: (usize, usize), window: usize, dims: &GridDims) -> Vec<usize> {
    let (x0, x1) = window_span(anchor.0, window, dims.nx);
    let (y0, y1) = window_span(anchor.1, window, dims.ny);
    let mut pool = Vec::with_capacity((x1 - x0 + 1) * (y1 - y0 + 1) * dims.nz);
    for x in x0..=x1 {
        for y in y0..=y1 {
            for z in 0..dims.nz {
                pool.push(dims.index(crate::topology::Coord::new(x, y, z)));
            }
        }
    }
    pool
}

pub fn build_receptive_field_input(spec: &InputSpec, dims: GridDims, seed: u64) -> Result<InputMap> {
    let InputScheme::ReceptiveField {
        window,
        width,
        height,
        ..
    } = spec.scheme
    else {
        return config_err("build_receptive_field_input needs the receptive-field scheme");
    };
    dims.validate()?;
    spec.validate(&dims)?;
    let plane = width * height;
    let mut edges = Vec::new();
    for input in 0..spec.n_inputs {
        // channel-major flattening: every channel shares the pixel's anchor
        let pixel = input % plane;
        let (px, py) = (pixel % width, pixel / width);
        let pool = window_pool(anchor(px, py, width, height, &dims), window, &dims);
        if pool.is_empty() {
            return config_err(format!("empty receptive field for input {input}"));
        }
        let k = pool_fan_out(spec.density, pool.len())?;
        let mut rng = rng_from(derive_seed(seed, 0x2B, input as u64));
        let picks = index::sample(&mut rng, pool.len(), k);
        signed_edges(&mut edges, input, picks.into_iter().map(|i| pool[i]), k, spec.weight);
    }
    Ok(InputMap {
        n_inputs: spec.n_inputs,
        n_reservoir: dims.size(),
        edges,
        seed,
    })
}

impl InputMap {
    /// `out[j] += sum_i drive[i] * w[i, j]`.
    pub fn inject(&self, drive: &[f64], out: &mut [f64]) {
        for &(i, j, w) in &self.edges {
            let x = drive[i as usize];
            if x != 0.0 {
                out[j as usize] += x * w;
            }
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "input");
        let _ = writeln!(s, "n_inputs {}", self.n_inputs);
        let _ = writeln!(s, "n_reservoir {}", self.n_reservoir);
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "edges {}", self.edges.len());
        write_edges(&mut s, &self.edges);
        s
    }
}

impl FromStr for InputMap {
    type Err = LsmError;

    fn from_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        if lines.next().map(str::trim) != Some("input") {
            return Err(parse_err("missing `input` section header"));
        }
        let mut field = |key: &str| -> Result<u64> {
            let line = lines.next().ok_or_else(|| parse_err(format!("missing `{key}`")))?;
            let mut t = line.split_whitespace();
            if t.next() != Some(key) {
                return Err(parse_err(format!("expected `{key}`, found `{line}`")));
            }
            parse_num(t.next(), key)
        };
        let n_inputs = field("n_inputs")? as usize;
        let n_reservoir = field("n_reservoir")? as usize;
        let seed = field("seed")?;
        let count = field("edges")? as usize;
        let edges = read_edges(&mut lines, count)?;
        if edges
            .iter()
            .any(|&(i, j, _)| i as usize >= n_inputs || j as usize >= n_reservoir)
        {
            return Err(parse_err("input edge endpoint out of range"));
        }
        Ok(Self {
            n_inputs,
            n_reservoir,
            edges,
            seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    fn standard(n_inputs: usize, density: f64) -> InputSpec {
        InputSpec {
            n_inputs,
            weight: 8.0,
            density,
            scheme: InputScheme::Standard,
        }
    }

    fn rf(window: usize, w: usize, h: usize, c: usize, density: f64) -> InputSpec {
        InputSpec {
            n_inputs: w * h * c,
            weight: 8.0,
            density,
            scheme: InputScheme::ReceptiveField {
                window,
                width: w,
                height: h,
                channels: c,
            },
        }
    }

    fn per_input(map: &InputMap) -> Vec<Vec<(u32, f64)>> {
        let mut v = vec![Vec::new(); map.n_inputs];
        for &(i, j, w) in &map.edges {
            v[i as usize].push((j, w));
        }
        v
    }

    #[test]
    fn minimal_fan_out_is_one_pair() {
        let dims = GridDims::new(1, 2, 2).unwrap();
        let map = build_standard_input(&standard(5, 0.5), dims, 1).unwrap();
        for edges in per_input(&map) {
            assert_eq!(edges.len(), 2);
            assert_eq!(edges.iter().filter(|e| e.1 > 0.0).count(), 1);
        }
    }

    #[test]
    fn full_density_hits_every_neuron_once() {
        let dims = GridDims::new(2, 2, 3).unwrap();
        let map = build_standard_input(&standard(4, 1.0), dims, 2).unwrap();
        for edges in per_input(&map) {
            let targets: HashSet<_> = edges.iter().map(|e| e.0).collect();
            assert_eq!(targets.len(), 12);
            assert_eq!(edges.iter().filter(|e| e.1 > 0.0).count(), 6);
        }
    }

    #[test]
    fn odd_or_tiny_fan_out_rejected() {
        let dims = GridDims::new(1, 2, 5).unwrap();
        assert!(build_standard_input(&standard(1, 0.3), dims, 0).is_err());
        assert!(build_standard_input(&standard(1, 0.01), dims, 0).is_err());
        assert!(build_standard_input(&standard(1, 1.5), dims, 0).is_err());
    }

    #[test]
    fn corner_pixel_pool() {
        let dims = GridDims::new(20, 20, 10).unwrap();
        assert_eq!(anchor(0, 0, 64, 64, &dims), (0, 0));
        let pool = window_pool((0, 0), 5, &dims);
        assert_eq!(pool.len(), 90);
        let spec = rf(5, 64, 64, 2, 0.15);
        let map = build_receptive_field_input(&spec, dims, 4).unwrap();
        let pool: HashSet<_> = pool.into_iter().map(|p| p as u32).collect();
        let plane = 64 * 64;
        for &(i, j, _) in &map.edges {
            if i as usize % plane == 0 {
                assert!(pool.contains(&j));
            }
        }
    }

    #[test]
    fn unit_window_stays_in_one_column() {
        let dims = GridDims::new(4, 4, 6).unwrap();
        let map = build_receptive_field_input(&rf(1, 8, 8, 1, 0.5), dims, 5).unwrap();
        for edges in per_input(&map) {
            let cols: HashSet<_> = edges
                .iter()
                .map(|e| {
                    let c = dims.coord(e.0 as usize);
                    (c.x, c.y)
                })
                .collect();
            assert_eq!(cols.len(), 1);
            assert_eq!(edges.len(), 2);
        }
    }

    #[test]
    fn even_window_bounds() {
        assert_eq!(window_span(5, 6, 20), (2, 7));
        assert_eq!(window_span(0, 6, 20), (0, 2));
        assert_eq!(window_span(19, 5, 20), (17, 19));
    }

    #[test]
    fn oversized_window_rejected() {
        let dims = GridDims::new(4, 4, 2).unwrap();
        assert!(build_receptive_field_input(&rf(5, 8, 8, 1, 0.2), dims, 0).is_err());
    }

    #[test]
    fn text_roundtrip() {
        let dims = GridDims::new(2, 2, 2).unwrap();
        let map = build_standard_input(&standard(3, 0.5), dims, 11).unwrap();
        let back: InputMap = map.to_text().parse().unwrap();
        assert_eq!(back, map);
    }

    #[test]
    fn inject_accumulates_signed_drive() {
        let map = InputMap {
            n_inputs: 2,
            n_reservoir: 2,
            edges: vec![(0, 0, 2.0), (0, 1, -2.0), (1, 1, 3.0)],
            seed: 0,
        };
        let mut out = vec![0.0; 2];
        map.inject(&[1.0, 2.0], &mut out);
        assert_eq!(out, vec![2.0, 4.0]);
    }
}
