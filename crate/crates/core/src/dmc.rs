//! Discrete memoryless channels with uniform-input diagnostics.
//!
//! Storage is column-major: `cols[y * inputs + x] = P(y|x)`. Transforms build
//! one output column at a time, and posteriors are per-column quantities, so
//! this layout keeps the hot loops contiguous.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::BalancedPartition;

/// Row-sum tolerance for user-supplied channels.
pub const ROW_TOLERANCE: f64 = 1e-9;
/// Outputs whose average probability falls below this are dropped by canonicalisation.
pub const NEGLIGIBLE_MASS: f64 = 1e-15;
/// Posterior merge tolerance applied between transform steps.
pub const DEFAULT_MERGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DmcError {
    #[error("channel needs at least one input and one output")]
    Empty,
    #[error("row {row} has {len} entries, expected {expected}")]
    Ragged { row: usize, len: usize, expected: usize },
    #[error("entry P({y}|{x}) = {value} is not a probability")]
    BadEntry { x: usize, y: usize, value: f64 },
    #[error("row {row} sums to {sum}")]
    NotStochastic { row: usize, sum: f64 },
    #[error("partition covers {got} symbols but the channel has {expected} inputs")]
    PartitionMismatch { expected: usize, got: usize },
    #[error("declared {what} = {declared} does not match the matrix ({actual})")]
    DeclaredSize { what: &'static str, declared: usize, actual: usize },
    #[error("unknown built-in channel '{0}'")]
    UnknownBuiltin(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DmcFile", into = "DmcFile")]
pub struct Dmc {
    inputs: usize,
    outputs: usize,
    cols: Vec<f64>,
}

/// On-disk form: `{"inputs": n, "outputs": m, "matrix": [[P(y|x) for y] for x]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DmcFile {
    pub inputs: usize,
    pub outputs: usize,
    pub matrix: Vec<Vec<f64>>,
}

impl TryFrom<DmcFile> for Dmc {
    type Error = DmcError;
    fn try_from(f: DmcFile) -> Result<Self, DmcError> {
        if f.matrix.len() != f.inputs {
            return Err(DmcError::DeclaredSize { what: "inputs", declared: f.inputs, actual: f.matrix.len() });
        }
        let d = Dmc::from_rows(&f.matrix)?;
        if d.outputs != f.outputs {
            return Err(DmcError::DeclaredSize { what: "outputs", declared: f.outputs, actual: d.outputs });
        }
        Ok(d)
    }
}

impl From<Dmc> for DmcFile {
    fn from(d: Dmc) -> Self {
        DmcFile { inputs: d.inputs, outputs: d.outputs, matrix: d.rows() }
    }
}

impl Dmc {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, DmcError> {
        let inputs = rows.len();
        let outputs = rows.first().map_or(0, |r| r.len());
        if inputs == 0 || outputs == 0 {
            return Err(DmcError::Empty);
        }
        let mut cols = vec![0.0; inputs * outputs];
        for (x, row) in rows.iter().enumerate() {
            if row.len() != outputs {
                return Err(DmcError::Ragged { row: x, len: row.len(), expected: outputs });
            }
            for (y, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(DmcError::BadEntry { x, y, value: v });
                }
                cols[y * inputs + x] = v;
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(DmcError::NotStochastic { row: x, sum });
            }
        }
        Ok(Dmc { inputs, outputs, cols })
    }

    /// Builds a channel from column-major data the caller guarantees is stochastic.
    pub(crate) fn from_columns(inputs: usize, cols: Vec<f64>) -> Self {
        debug_assert!(inputs > 0 && cols.len().is_multiple_of(inputs));
        Dmc { inputs, outputs: cols.len() / inputs, cols }
    }

    /// Binary erasure channel; outputs are `0`, `1`, erasure.
    pub fn bec(eps: f64) -> Self {
        Self::from_columns(2, vec![1.0 - eps, 0.0, 0.0, 1.0 - eps, eps, eps])
    }

    pub fn bsc(p: f64) -> Self {
        Self::from_columns(2, vec![1.0 - p, p, p, 1.0 - p])
    }

    pub fn identity(n: usize) -> Self {
        let mut cols = vec![0.0; n * n];
        for x in 0..n {
            cols[x * n + x] = 1.0;
        }
        Self::from_columns(n, cols)
    }

    /// `n` inputs, a single output.
    pub fn useless(n: usize) -> Self {
        Self::from_columns(n, vec![1.0; n])
    }

    /// Resolves `BEC:eps`, `BSC:p`, `identity:n` and `useless:n`.
    pub fn builtin(name: &str) -> Result<Self, DmcError> {
        let unknown = || DmcError::UnknownBuiltin(name.to_string());
        let (kind, arg) = name.split_once(':').ok_or_else(unknown)?;
        let arg = arg.trim();
        match kind {
            "BEC" | "BSC" => {
                let p: f64 = arg.parse().map_err(|_| unknown())?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(unknown());
                }
                Ok(if kind == "BEC" { Self::bec(p) } else { Self::bsc(p) })
            }
            "identity" | "useless" => {
                let n: usize = arg.parse().map_err(|_| unknown())?;
                if n == 0 {
                    return Err(unknown());
                }
                Ok(if kind == "identity" { Self::identity(n) } else { Self::useless(n) })
            }
            _ => Err(unknown()),
        }
    }

    #[inline]
    pub fn inputs(&self) -> usize {
        self.inputs
    }

    #[inline]
    pub fn outputs(&self) -> usize {
        self.outputs
    }

    #[inline]
    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.cols[y * self.inputs + x]
    }

    /// `P(y|·)` for one output.
    #[inline]
    pub fn column(&self, y: usize) -> &[f64] {
        &self.cols[y * self.inputs..(y + 1) * self.inputs]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.cols.chunks(self.inputs)
    }

    pub fn raw_columns(&self) -> &[f64] {
        &self.cols
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.inputs).map(|x| (0..self.outputs).map(|y| self.prob(x, y)).collect()).collect()
    }

    /// Largest deviation of a row sum from one.
    pub fn row_sum_error(&self) -> f64 {
        (0..self.inputs)
            .map(|x| ((0..self.outputs).map(|y| self.prob(x, y)).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Output probability under uniform input.
    pub fn output_mass(&self, y: usize) -> f64 {
        self.column(y).iter().sum::<f64>() / self.inputs as f64
    }

    /// Posterior `P(x|y)` under uniform input, written into `out`.
    pub fn posterior_into(&self, y: usize, out: &mut [f64]) {
        let col = self.column(y);
        let s: f64 = col.iter().sum();
        for (o, &c) in out.iter_mut().zip(col) {
            *o = if s > 0.0 { c / s } else { 0.0 };
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mutual_info: f64,
    pub bhattacharyya: f64,
    pub ml_error_prob: f64,
}

pub fn stats(p: &Dmc) -> ChannelStats {
    ChannelStats {
        mutual_info: mutual_information(p),
        bhattacharyya: bhattacharyya(p),
        ml_error_prob: ml_error_probability(p),
    }
}

/// `I(X;Y)` in bits with `X` uniform.
pub fn mutual_information(p: &Dmc) -> f64 {
    let n = p.inputs as f64;
    let mut acc = 0.0;
    for col in p.columns() {
        let mean = col.iter().sum::<f64>() / n;
        if mean <= 0.0 {
            continue;
        }
        for &v in col {
            if v > 0.0 {
                acc += v * (v / mean).log2();
            }
        }
    }
    (acc / n).max(0.0)
}

/// Average pairwise root overlap of the rows; zero for a one-input channel.
pub fn bhattacharyya(p: &Dmc) -> f64 {
    let n = p.inputs;
    if n < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for col in p.columns() {
        let r: Vec<f64> = col.iter().map(|v| v.sqrt()).collect();
        let s: f64 = r.iter().sum();
        let sq: f64 = col.iter().sum();
        // Σ_{x≠x'} √(ab) = (Σ√a)² − Σa
        acc += s * s - sq;
    }
    (acc / (n * (n - 1)) as f64).clamp(0.0, 1.0)
}

/// `P[H](y|H) = (1/||H||) Σ_{x∈H} P(y|x)`.
pub fn project_channel(p: &Dmc, h: &BalancedPartition) -> Result<Dmc, DmcError> {
    if h.carrier_size() != p.inputs {
        return Err(DmcError::PartitionMismatch { expected: p.inputs, got: h.carrier_size() });
    }
    let k = h.block_count();
    let w = 1.0 / h.block_size() as f64;
    let mut cols = vec![0.0; k * p.outputs];
    for y in 0..p.outputs {
        let col = p.column(y);
        for (x, &v) in col.iter().enumerate() {
            cols[y * k + h.block_of(x)] += v * w;
        }
    }
    Ok(Dmc::from_columns(k, cols))
}

/// Maximum-likelihood input for output `y`, smallest index on ties.
pub fn ml_decode(p: &Dmc, y: usize) -> usize {
    argmax_first(p.column(y))
}

pub(crate) fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn ml_error_probability(p: &Dmc) -> f64 {
    let hit: f64 = p.columns().map(|c| c[argmax_first(c)]).sum();
    (1.0 - hit / p.inputs as f64).clamp(0.0, 1.0)
}

/// Incremental builder that merges output columns with matching posteriors.
///
/// With `tol > 0` two columns merge when every coordinate of `√P(x|y)` falls in
/// the same cell of side `tol`; with `tol == 0` the posterior bits must agree.
/// Cells in square-root coordinates keep entropy and root overlaps Lipschitz,
/// so I and Z move by O(tol) even for posteriors near zero.
pub(crate) struct OutputMerger {
    inputs: usize,
    tol: f64,
    index: HashMap<Vec<u64>, usize>,
    cols: Vec<f64>,
    key: Vec<u64>,
}

impl OutputMerger {
    pub fn new(inputs: usize, tol: f64) -> Self {
        OutputMerger { inputs, tol, index: HashMap::new(), cols: Vec::new(), key: vec![0; inputs] }
    }

    pub fn len(&self) -> usize {
        self.cols.len() / self.inputs
    }

    pub fn push(&mut self, col: &[f64]) {
        let s: f64 = col.iter().sum();
        if s / (self.inputs as f64) < NEGLIGIBLE_MASS {
            return;
        }
        for (k, &c) in self.key.iter_mut().zip(col) {
            let post = c / s;
            *k = if self.tol > 0.0 { (post.sqrt() / self.tol).floor() as u64 } else { post.to_bits() };
        }
        match self.index.get(&self.key) {
            Some(&j) => {
                for (a, &c) in self.cols[j * self.inputs..(j + 1) * self.inputs].iter_mut().zip(col) {
                    *a += c;
                }
            }
            None => {
                self.index.insert(self.key.clone(), self.len());
                self.cols.extend_from_slice(col);
            }
        }
    }

    pub fn finish(self) -> Dmc {
        if self.cols.is_empty() {
            return Dmc::useless(self.inputs);
        }
        Dmc::from_columns(self.inputs, self.cols)
    }
}

/// Drops negligible outputs and merges outputs with equal posteriors (up to `tol`).
pub fn canonicalize(p: &Dmc, tol: f64) -> Dmc {
    let mut m = OutputMerger::new(p.inputs, tol.max(0.0));
    for col in p.columns() {
        m.push(col);
    }
    m.finish()
}

/// Mass of outputs whose posterior lies within `delta` (max-norm) of the
/// uniform distribution on some block of `h`.
pub fn posterior_partition_score(p: &Dmc, h: &BalancedPartition, delta: f64) -> Result<f64, DmcError> {
    if h.carrier_size() != p.inputs {
        return Err(DmcError::PartitionMismatch { expected: p.inputs, got: h.carrier_size() });
    }
    let u = 1.0 / h.block_size() as f64;
    let mut post = vec![0.0; p.inputs];
    let mut score = 0.0;
    for y in 0..p.outputs {
        let mass = p.output_mass(y);
        if mass <= 0.0 {
            continue;
        }
        p.posterior_into(y, &mut post);
        let near = h.blocks().iter().enumerate().any(|(b, _)| {
            post.iter().enumerate().all(|(x, &v)| {
                let target = if h.block_of(x) == b { u } else { 0.0 };
                (v - target).abs() < delta
            })
        });
        if near {
            score += mass;
        }
    }
    Ok(score)
}

/// Equality of the posterior measures of two channels, up to `tol`.
///
/// Posterior points of both channels are clustered by single linkage at
/// max-norm distance `tol`; the channels agree when every cluster carries the
/// same output mass from each side (within `tol`).
pub fn channels_equivalent(p: &Dmc, q: &Dmc, tol: f64) -> bool {
    if p.inputs != q.inputs {
        return false;
    }
    let n = p.inputs;
    let mut pts: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    for (d, side) in [(p, false), (q, true)] {
        for y in 0..d.outputs {
            let mass = d.output_mass(y);
            if mass < NEGLIGIBLE_MASS {
                continue;
            }
            let mut post = vec![0.0; n];
            d.posterior_into(y, &mut post);
            pts.push((post, mass, side));
        }
    }
    pts.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]));
    let mut parent: Vec<usize> = (0..pts.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            if pts[j].0[0] - pts[i].0[0] > tol {
                break;
            }
            let close = pts[i].0.iter().zip(&pts[j].0).all(|(a, b)| (a - b).abs() <= tol);
            if close {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut mass: HashMap<usize, (f64, f64)> = HashMap::new();
    for i in 0..pts.len() {
        let r = find(&mut parent, i);
        let e = mass.entry(r).or_default();
        if pts[i].2 {
            e.1 += pts[i].1;
        } else {
            e.0 += pts[i].1;
        }
    }
    mass.values().all(|(a, b)| (a - b).abs() <= tol.max(1e-12))
}

/// Draws channel outputs by inverse-CDF sampling.
#[derive(Debug, Clone)]
pub struct ChannelSampler {
    cdf: Vec<Vec<f64>>,
}

impl ChannelSampler {
    pub fn new(p: &Dmc) -> Self {
        let cdf = (0..p.inputs)
            .map(|x| {
                let mut acc = 0.0;
                (0..p.outputs)
                    .map(|y| {
                        acc += p.prob(x, y);
                        acc
                    })
                    .collect()
            })
            .collect();
        ChannelSampler { cdf }
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        let c = &self.cdf[x];
        let u: f64 = rng.gen::<f64>() * c[c.len() - 1];
        let y = c.partition_point(|&v| v <= u);
        // Skip zero-probability outputs that share a CDF value.
        y.min(c.len() - 1)
    }
}
