//! 3-D grid reservoirs with distance-offset connection probabilities.
//!
//! Every ordered pair `(i, j)`, `i != j`, is connected with probability
//! `C[kind_i, kind_j] * exp(-((D(i, j) - d) / lambda)^2)` where `D` is the
//! Euclidean distance between integer grid coordinates. `d = 0` gives the
//! usual local connectivity; larger `d` favours connections of length `d`.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, LsmError, Result};
use crate::neuron::{NeuronParams, SparseWeights};
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridDims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl GridDims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        let d = Self { nx, ny, nz };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return config_err(format!("grid dims must be positive, got {self}"));
        }
        if self.size() % 2 != 0 {
            return config_err(format!(
                "reservoir size {} is odd; it must split evenly into excitatory and inhibitory halves",
                self.size()
            ));
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn index(&self, c: Coord) -> usize {
        (c.x * self.ny + c.y) * self.nz + c.z
    }

    #[inline]
    pub fn coord(&self, idx: usize) -> Coord {
        let z = idx % self.nz;
        let y = (idx / self.nz) % self.ny;
        let x = idx / (self.nz * self.ny);
        Coord { x, y, z }
    }

    /// Most cube-like factorisation of `n` neurons (sorted ascending).
    pub fn near_cubic(n: usize) -> Result<Self> {
        if n == 0 || n % 2 != 0 {
            return config_err(format!("cannot lay out {n} neurons as an even-sized grid"));
        }
        let mut best: Option<(usize, Self)> = None;
        for a in 1..=n {
            if a * a * a > n {
                break;
            }
            if n % a != 0 {
                continue;
            }
            let rest = n / a;
            for b in a..=rest {
                if b * b > rest {
                    break;
                }
                if rest % b != 0 {
                    continue;
                }
                let c = rest / b;
                let spread = c - a;
                if best.is_none_or(|(s, _)| spread < s) {
                    best = Some((spread, Self { nx: a, ny: b, nz: c }));
                }
            }
        }
        Ok(best.expect("n >= 1 always factors").1)
    }
}

impl fmt::Display for GridDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Coord {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl Coord {
    pub fn new(x: usize, y: usize, z: usize) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Coord) -> f64 {
        (self.distance_sq(other) as f64).sqrt()
    }

    pub fn distance_sq(&self, other: &Coord) -> usize {
        let dx = self.x.abs_diff(other.x);
        let dy = self.y.abs_diff(other.y);
        let dz = self.z.abs_diff(other.z);
        dx * dx + dy * dy + dz * dz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NeuronKind {
    Excitatory,
    Inhibitory,
}

impl NeuronKind {
    pub fn symbol(self) -> char {
        match self {
            NeuronKind::Excitatory => 'E',
            NeuronKind::Inhibitory => 'I',
        }
    }
}

/// Base connection probabilities keyed by (source kind, target kind).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CTable {
    pub ee: f64,
    pub ei: f64,
    pub ie: f64,
    pub ii: f64,
}

impl Default for CTable {
    fn default() -> Self {
        Self {
            ee: 0.2,
            ei: 0.1,
            ie: 0.05,
            ii: 0.3,
        }
    }
}

impl CTable {
    pub fn get(&self, src: NeuronKind, dst: NeuronKind) -> f64 {
        use NeuronKind::*;
        match (src, dst) {
            (Excitatory, Excitatory) => self.ee,
            (Excitatory, Inhibitory) => self.ei,
            (Inhibitory, Excitatory) => self.ie,
            (Inhibitory, Inhibitory) => self.ii,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnectionLaw {
    pub lambda: f64,
    /// Preferred connection length; 0 recovers plain local connectivity.
    pub d: f64,
    #[serde(default)]
    pub c: CTable,
}

impl Default for ConnectionLaw {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            d: 0.0,
            c: CTable::default(),
        }
    }
}

impl ConnectionLaw {
    pub fn with_offset(lambda: f64, d: f64) -> Self {
        Self {
            lambda,
            d,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return config_err(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.d >= 0.0 && self.d.is_finite()) {
            return config_err(format!("distance offset d must be >= 0, got {}", self.d));
        }
        for c in [self.c.ee, self.c.ei, self.c.ie, self.c.ii] {
            if !(c > 0.0 && c <= 1.0) {
                return config_err(format!("connection base probability {c} outside (0, 1]"));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn probability_at(&self, distance: f64, src: NeuronKind, dst: NeuronKind) -> f64 {
        let r = (distance - self.d) / self.lambda;
        self.c.get(src, dst) * (-(r * r)).exp()
    }
}

pub fn connection_probability(
    i: Coord,
    j: Coord,
    law: &ConnectionLaw,
    kinds: (NeuronKind, NeuronKind),
) -> Result<f64> {
    if i == j {
        return config_err("self-connections are excluded");
    }
    Ok(law.probability_at(i.distance(&j), kinds.0, kinds.1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirTopology {
    pub dims: GridDims,
    pub law: ConnectionLaw,
    pub w_lsm: f64,
    pub kinds: Vec<NeuronKind>,
    /// `(src, dst, weight)` in row-major pair order.
    pub edges: Vec<(u32, u32, f64)>,
    pub seed: u64,
}

/// Seeded E/I assignment with exactly half of each kind.
pub fn assign_kinds(n: usize, seed: u64) -> Vec<NeuronKind> {
    let mut kinds: Vec<NeuronKind> = (0..n)
        .map(|i| if i < n / 2 { NeuronKind::Excitatory } else { NeuronKind::Inhibitory })
        .collect();
    kinds.shuffle(&mut rng_from(seed));
    kinds
}

pub fn build_reservoir(dims: GridDims, law: &ConnectionLaw, params: &NeuronParams, seed: u64) -> Result<ReservoirTopology> {
    dims.validate()?;
    let kinds = assign_kinds(dims.size(), seed);
    build_reservoir_with_kinds(dims, law, params, kinds, seed)
}

/// Samples edges for a fixed kind assignment. The stream uses one uniform
/// draw per ordered pair, sources outer, targets inner, self-pairs skipped.
pub fn build_reservoir_with_kinds(
    dims: GridDims,
    law: &ConnectionLaw,
    params: &NeuronParams,
    kinds: Vec<NeuronKind>,
    seed: u64,
) -> Result<ReservoirTopology> {
    law.validate()?;
    let n = dims.size();
    if kinds.len() != n {
        return config_err(format!("{} kinds supplied for {} neurons", kinds.len(), n));
    }
    let coords: Vec<Coord> = (0..n).map(|i| dims.coord(i)).collect();
    // distinct squared distances are few; cache the exponential per value
    let max_sq = (dims.nx - 1).pow(2) + (dims.ny - 1).pow(2) + (dims.nz - 1).pow(2);
    let shape: Vec<f64> = (0..=max_sq)
        .map(|sq| {
            let r = ((sq as f64).sqrt() - law.d) / law.lambda;
            (-(r * r)).exp()
        })
        .collect();

    // the edge stream is seeded independently from the kind permutation
    let mut rng = rng_from(seed ^ 0x5EED_ED6E_5EED_ED6E);
    let mut edges = Vec::new();
    for (i, ci) in coords.iter().enumerate() {
        let w = match kinds[i] {
            NeuronKind::Excitatory => params.w_lsm,
            NeuronKind::Inhibitory => -params.w_lsm,
        };
        for (j, cj) in coords.iter().enumerate() {
            if i == j {
                continue;
            }
            let p = law.c.get(kinds[i], kinds[j]) * shape[ci.distance_sq(cj)];
            if rng.random::<f64>() < p {
                edges.push((i as u32, j as u32, w));
            }
        }
    }
    Ok(ReservoirTopology {
        dims,
        law: *law,
        w_lsm: params.w_lsm,
        kinds,
        edges,
        seed,
    })
}

impl ReservoirTopology {
    pub fn size(&self) -> usize {
        self.dims.size()
    }

    pub fn weights(&self) -> SparseWeights {
        SparseWeights::from_edges(self.size(), &self.edges).expect("edges are in range by construction")
    }

    pub fn inhibitory(&self) -> impl Iterator<Item = usize> + '_ {
        self.kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == NeuronKind::Inhibitory)
            .map(|(i, _)| i)
    }

    pub fn edge_length(&self, src: u32, dst: u32) -> f64 {
        self.dims.coord(src as usize).distance(&self.dims.coord(dst as usize))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# lsm-topology v1");
        let _ = writeln!(s, "dims {} {} {}", self.dims.nx, self.dims.ny, self.dims.nz);
        let _ = writeln!(s, "seed {}", self.seed);
        let c = &self.law.c;
        let _ = writeln!(
            s,
            "law lambda={} d={} ee={} ei={} ie={} ii={}",
            self.law.lambda, self.law.d, c.ee, c.ei, c.ie, c.ii
        );
        let _ = writeln!(s, "w_lsm {}", self.w_lsm);
        let kinds: String = self.kinds.iter().map(|k| k.symbol()).collect();
        let _ = writeln!(s, "kinds {kinds}");
        let _ = writeln!(s, "edges {}", self.edges.len());
        write_edges(&mut s, &self.edges);
        s
    }
}

pub(crate) fn write_edges(s: &mut String, edges: &[(u32, u32, f64)]) {
    for (a, b, w) in edges {
        let _ = writeln!(s, "{a} {b} {w}");
    }
}

pub(crate) fn parse_err(msg: impl Into<String>) -> LsmError {
    LsmError::Parse(msg.into())
}

pub(crate) fn parse_num<T: FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(format!("bad or missing {what}")))
}

/// Reads `count` edge triples from the line iterator.
pub(crate) fn read_edges<'a>(
    lines: &mut impl Iterator<Item = &'a str>,
    count: usize,
) -> Result<Vec<(u32, u32, f64)>> {
    let mut edges = Vec::with_capacity(count);
    for _ in 0..count {
        let line = lines.next().ok_or_else(|| parse_err("truncated edge list"))?;
        let mut t = line.split_whitespace();
        edges.push((
            parse_num(t.next(), "edge source")?,
            parse_num(t.next(), "edge target")?,
            parse_num(t.next(), "edge weight")?,
        ));
    }
    Ok(edges)
}

fn expect_key<'a>(line: Option<&'a str>, key: &str) -> Result<std::str::SplitWhitespace<'a>> {
    let line = line.ok_or_else(|| parse_err(format!("missing `{key}` line")))?;
    let mut t = line.split_whitespace();
    if t.next() != Some(key) {
        return Err(parse_err(format!("expected `{key}`, found `{line}`")));
    }
    Ok(t)
}

impl FromStr for ReservoirTopology {
    type Err = LsmError;

    fn from_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let mut t = expect_key(lines.next(), "dims")?;
        let dims = GridDims::new(
            parse_num(t.next(), "nx")?,
            parse_num(t.next(), "ny")?,
            parse_num(t.next(), "nz")?,
        )?;
        let seed = parse_num(expect_key(lines.next(), "seed")?.next(), "seed")?;
        let mut law = ConnectionLaw::default();
        for kv in expect_key(lines.next(), "law")? {
            let (k, v) = kv.split_once('=').ok_or_else(|| parse_err(format!("bad law field `{kv}`")))?;
            let v: f64 = parse_num(Some(v), k)?;
            match k {
                "lambda" => law.lambda = v,
                "d" => law.d = v,
                "ee" => law.c.ee = v,
                "ei" => law.c.ei = v,
                "ie" => law.c.ie = v,
                "ii" => law.c.ii = v,
                _ => return Err(parse_err(format!("unknown law field `{k}`"))),
            }
        }
        let w_lsm = parse_num(expect_key(lines.next(), "w_lsm")?.next(), "w_lsm")?;
        let kinds = expect_key(lines.next(), "kinds")?
            .next()
            .unwrap_or("")
            .chars()
            .map(|c| match c {
                'E' => Ok(NeuronKind::Excitatory),
                'I' => Ok(NeuronKind::Inhibitory),
                _ => Err(parse_err(format!("unknown neuron kind `{c}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if kinds.len() != dims.size() {
            return Err(parse_err("kind string length does not match dims"));
        }
        let count = parse_num(expect_key(lines.next(), "edges")?.next(), "edge count")?;
        let edges = read_edges(&mut lines, count)?;
        if edges.iter().any(|&(a, b, _)| a as usize >= dims.size() || b as usize >= dims.size()) {
            return Err(parse_err("edge endpoint outside the grid"));
        }
        Ok(Self {
            dims,
            law,
            w_lsm,
            kinds,
            edges,
            seed,
        })
    }
}
