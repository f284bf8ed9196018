//! Polarization transforms, iterated branches, and branch classification.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{
    enumerate_stable_partitions, partition_product, AlgebraError, BalancedPartition, Division, Quasigroup,
    StablePartition,
};
use crate::dmc::{
    self, bhattacharyya, mutual_information, project_channel, ChannelSampler, ChannelStats, Dmc, DmcError,
    OutputMerger, DEFAULT_MERGE_TOL,
};
use crate::sc::{encode_symbols, ScWorkspace};

pub const DEFAULT_MAX_OUTPUTS: usize = 200_000;
pub const DEFAULT_DELTA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolarizeError {
    #[error("channel has {channel} inputs but the quasigroup has {quasigroup} elements")]
    SizeMismatch { channel: usize, quasigroup: usize },
    #[error("output alphabet reached {size} at step {step}; use Monte Carlo mode")]
    OutputExplosion { step: usize, size: usize },
    #[error("partition does not match the alphabet")]
    PartitionMismatch,
    #[error("depth {0} is too large")]
    DepthTooLarge(u32),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Dmc(#[from] DmcError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Minus,
    Plus,
}

/// `(s_1, …, s_n)` packed as an integer: sign `i` is bit `i-1`, minus = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SignSequence {
    len: u32,
    index: u64,
}

impl SignSequence {
    pub fn new(len: u32, index: u64) -> Self {
        assert!(len <= 63 && index >> len == 0, "index {index} out of range for length {len}");
        SignSequence { len, index }
    }

    pub fn empty() -> Self {
        SignSequence { len: 0, index: 0 }
    }

    pub fn from_signs(signs: &[Sign]) -> Self {
        let index = signs.iter().enumerate().fold(0u64, |acc, (i, s)| acc | ((*s == Sign::Plus) as u64) << i);
        SignSequence::new(signs.len() as u32, index)
    }

    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    /// Sign `i`, 1-based.
    pub fn sign(&self, i: u32) -> Sign {
        assert!(i >= 1 && i <= self.len);
        if self.index >> (i - 1) & 1 == 1 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }

    pub fn signs(&self) -> Vec<Sign> {
        (1..=self.len).map(|i| self.sign(i)).collect()
    }

    pub fn push(&self, s: Sign) -> SignSequence {
        SignSequence::new(self.len + 1, self.index | ((s == Sign::Plus) as u64) << self.len)
    }
}

impl std::fmt::Display for SignSequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for s in self.signs() {
            f.write_str(if s == Sign::Plus { "+" } else { "-" })?;
        }
        Ok(())
    }
}

impl std::str::FromStr for SignSequence {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let signs = s
            .chars()
            .map(|c| match c {
                '-' => Ok(Sign::Minus),
                '+' => Ok(Sign::Plus),
                _ => Err(format!("bad sign '{c}'")),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if signs.len() > 63 {
            return Err("sign sequence too long".into());
        }
        Ok(SignSequence::from_signs(&signs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformOptions {
    /// Posterior merge tolerance (see [`dmc::canonicalize`]).
    pub tol: f64,
    pub max_outputs: usize,
}

impl Default for TransformOptions {
    fn default() -> Self {
        TransformOptions { tol: DEFAULT_MERGE_TOL, max_outputs: DEFAULT_MAX_OUTPUTS }
    }
}

fn check_size(p: &Dmc, g: &Quasigroup) -> Result<(), PolarizeError> {
    if p.inputs() != g.size() {
        return Err(PolarizeError::SizeMismatch { channel: p.inputs(), quasigroup: g.size() });
    }
    Ok(())
}

/// `P⁻(y1,y2|u1) = (1/|Q|) Σ_{u2} P(y1|u1*u2) P(y2|u2)`, canonicalised.
pub fn minus_transform(p: &Dmc, g: &Quasigroup) -> Result<Dmc, PolarizeError> {
    minus_transform_with(p, g, &TransformOptions::default(), 1)
}

/// `P⁺(y1,y2,u1|u2) = (1/|Q|) P(y1|u1*u2) P(y2|u2)`, canonicalised.
pub fn plus_transform(p: &Dmc, g: &Quasigroup) -> Result<Dmc, PolarizeError> {
    plus_transform_with(p, g, &TransformOptions::default(), 1)
}

pub fn minus_transform_with(
    p: &Dmc,
    g: &Quasigroup,
    opts: &TransformOptions,
    step: usize,
) -> Result<Dmc, PolarizeError> {
    check_size(p, g)?;
    let q = g.size();
    let w = 1.0 / q as f64;
    let mut m = OutputMerger::new(q, opts.tol);
    let mut col = vec![0.0; q];
    for y1 in 0..p.outputs() {
        let c1 = p.column(y1);
        for y2 in 0..p.outputs() {
            let c2 = p.column(y2);
            for (u1, v) in col.iter_mut().enumerate() {
                *v = w * (0..q).map(|u2| c1[g.op(u1, u2)] * c2[u2]).sum::<f64>();
            }
            m.push(&col);
            if m.len() > opts.max_outputs {
                return Err(PolarizeError::OutputExplosion { step, size: m.len() });
            }
        }
    }
    Ok(m.finish())
}

pub fn plus_transform_with(
    p: &Dmc,
    g: &Quasigroup,
    opts: &TransformOptions,
    step: usize,
) -> Result<Dmc, PolarizeError> {
    check_size(p, g)?;
    let q = g.size();
    let w = 1.0 / q as f64;
    let mut m = OutputMerger::new(q, opts.tol);
    let mut col = vec![0.0; q];
    for y1 in 0..p.outputs() {
        let c1 = p.column(y1);
        for y2 in 0..p.outputs() {
            let c2 = p.column(y2);
            for u1 in 0..q {
                for (u2, v) in col.iter_mut().enumerate() {
                    *v = w * c1[g.op(u1, u2)] * c2[u2];
                }
                m.push(&col);
            }
            if m.len() > opts.max_outputs {
                return Err(PolarizeError::OutputExplosion { step, size: m.len() });
            }
        }
    }
    Ok(m.finish())
}

/// Unmerged `P⁻`; output `(y1,y2)` has index `y1·|Y| + y2`.
pub fn minus_transform_raw(p: &Dmc, g: &Quasigroup) -> Result<Dmc, PolarizeError> {
    check_size(p, g)?;
    let (q, ny) = (g.size(), p.outputs());
    let w = 1.0 / q as f64;
    let mut cols = vec![0.0; ny * ny * q];
    for y1 in 0..ny {
        for y2 in 0..ny {
            let o = (y1 * ny + y2) * q;
            for u1 in 0..q {
                cols[o + u1] = w * (0..q).map(|u2| p.prob(g.op(u1, u2), y1) * p.prob(u2, y2)).sum::<f64>();
            }
        }
    }
    Ok(Dmc::from_columns(q, cols))
}

/// Unmerged `P⁺`; output `(y1,y2,u1)` has index `(y1·|Y| + y2)·|Q| + u1`.
pub fn plus_transform_raw(p: &Dmc, g: &Quasigroup) -> Result<Dmc, PolarizeError> {
    check_size(p, g)?;
    let (q, ny) = (g.size(), p.outputs());
    let w = 1.0 / q as f64;
    let mut cols = vec![0.0; ny * ny * q * q];
    for y1 in 0..ny {
        for y2 in 0..ny {
            for u1 in 0..q {
                let o = ((y1 * ny + y2) * q + u1) * q;
                for u2 in 0..q {
                    cols[o + u2] = w * p.prob(g.op(u1, u2), y1) * p.prob(u2, y2);
                }
            }
        }
    }
    Ok(Dmc::from_columns(q, cols))
}

pub fn transform_with(
    p: &Dmc,
    g: &Quasigroup,
    s: Sign,
    opts: &TransformOptions,
    step: usize,
) -> Result<Dmc, PolarizeError> {
    match s {
        Sign::Minus => minus_transform_with(p, g, opts, step),
        Sign::Plus => plus_transform_with(p, g, opts, step),
    }
}

/// `P^s = ((P^{s_1})^{s_2}…)^{s_n}` with canonicalisation after each step.
pub fn polarize_path(p: &Dmc, g: &Quasigroup, s: SignSequence, max_outputs: usize) -> Result<Dmc, PolarizeError> {
    check_size(p, g)?;
    let opts = TransformOptions { max_outputs, ..Default::default() };
    let mut cur = p.clone();
    for (i, sign) in s.signs().into_iter().enumerate() {
        cur = transform_with(&cur, g, sign, &opts, i + 1)?;
    }
    Ok(cur)
}

/// The stable partitions that polarized channels over `g` collapse onto: those of `(Q,/*)`.
pub fn candidate_partitions(g: &Quasigroup) -> Result<Vec<StablePartition>, PolarizeError> {
    Ok(enumerate_stable_partitions(&g.derived(Division::RightDiv))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionStats {
    /// `I(P^s[H])` in bits.
    pub info: f64,
    pub info_stderr: f64,
    /// `Z(P^s[H])`.
    pub z: f64,
    pub z_stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Montecarlo,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Exact => "exact",
            Mode::Montecarlo => "mc",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchReport {
    pub signs: SignSequence,
    pub mode: Mode,
    /// Zero in exact mode.
    pub samples: usize,
    pub mutual_info: f64,
    pub mutual_info_stderr: f64,
    /// One entry per candidate partition, in the survey's partition order.
    pub candidates: Vec<PartitionStats>,
    pub matched: Option<usize>,
    pub matched_partition: Option<StablePartition>,
    pub partition_info: Option<f64>,
    pub z_projected: Option<f64>,
}

impl BranchReport {
    fn new(
        signs: SignSequence,
        mode: Mode,
        samples: usize,
        info: f64,
        info_se: f64,
        candidates: Vec<PartitionStats>,
    ) -> Self {
        BranchReport {
            signs,
            mode,
            samples,
            mutual_info: info,
            mutual_info_stderr: info_se,
            candidates,
            matched: None,
            matched_partition: None,
            partition_info: None,
            z_projected: None,
        }
    }

    fn classify(&mut self, partitions: &[StablePartition], delta: f64, sel: Selection) {
        self.matched = classify_branch(self.mutual_info, &self.candidates, partitions, delta, sel);
        if let Some(i) = self.matched {
            self.matched_partition = Some(partitions[i].clone());
            self.partition_info = Some(self.candidates[i].info);
            self.z_projected = Some(self.candidates[i].z);
        }
    }
}

/// How to choose among several qualifying partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Selection {
    /// Largest `|H|`, then smallest Z.
    #[default]
    LargestBlockCount,
    /// Smallest Z, then largest `|H|`.
    SmallestZ,
}

/// Index of the partition `H` with `|I(P^s) − log|H|| < δ` and
/// `|I(P^s[H]) − log|H|| < δ`, if any.
pub fn classify_branch(
    mutual_info: f64,
    candidates: &[PartitionStats],
    partitions: &[StablePartition],
    delta: f64,
    sel: Selection,
) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (c, h)) in candidates.iter().zip(partitions).enumerate() {
        let target = (h.partition().block_count() as f64).log2();
        if (mutual_info - target).abs() >= delta || (c.info - target).abs() >= delta {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let kb = partitions[b].partition().block_count();
                let ki = h.partition().block_count();
                let zb = candidates[b].z;
                let better = match sel {
                    Selection::LargestBlockCount => ki > kb || (ki == kb && c.z < zb),
                    Selection::SmallestZ => c.z < zb || (c.z == zb && ki > kb),
                };
                Some(if better { i } else { b })
            }
        };
    }
    best
}

fn exact_stats(p: &Dmc, partitions: &[BalancedPartition]) -> Result<(f64, Vec<PartitionStats>), PolarizeError> {
    let info = mutual_information(p);
    let cands = partitions
        .iter()
        .map(|h| {
            let ph = project_channel(p, h)?;
            Ok(PartitionStats { info: mutual_information(&ph), info_stderr: 0.0, z: bhattacharyya(&ph), z_stderr: 0.0 })
        })
        .collect::<Result<Vec<_>, DmcError>>()?;
    Ok((info, cands))
}

/// Running sums for one branch of a Monte Carlo estimate.
#[derive(Clone)]
struct BranchAcc {
    h: (f64, f64),
    parts: Vec<[(f64, f64); 2]>,
}

fn entropy_bits(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.log2()).sum::<f64>()
}

/// Genie-aided estimates of `I(P^s)`, `I(P^s[H])` and `Z(P^s[H])` for the
/// requested branches, sharing one stream of `samples` code blocks.
///
/// Each block draws uniform branch symbols, encodes, passes every codeword
/// symbol through `p`, and runs the SC recursion with the true symbols fed
/// back, so the leaf posterior for branch `s` is exactly
/// `P(U_s | Y, U_{<s})`. Then `I = log|Q| − E[H(π)]`,
/// `I(P[H]) = log|H| − E[H(π_H)]` and
/// `Z(P[H]) = E[Σ_{h≠h'} √(π_h π_h')] / (|H| − 1)`.
pub fn montecarlo_stats(
    p: &Dmc,
    g: &Quasigroup,
    n: u32,
    branches: &[usize],
    partitions: &[BalancedPartition],
    samples: usize,
    seed: u64,
) -> Result<Vec<(f64, f64, Vec<PartitionStats>)>, PolarizeError> {
    check_size(p, g)?;
    if n > 24 {
        return Err(PolarizeError::DepthTooLarge(n));
    }
    for h in partitions {
        if h.carrier_size() != g.size() {
            return Err(PolarizeError::PartitionMismatch);
        }
    }
    let q = g.size();
    let size = 1usize << n;
    let mut slot = vec![usize::MAX; size];
    for (k, &b) in branches.iter().enumerate() {
        slot[b] = k;
    }
    let mut acc = vec![BranchAcc { h: (0.0, 0.0), parts: vec![[(0.0, 0.0); 2]; partitions.len()] }; branches.len()];
    let sampler = ChannelSampler::new(p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ws = ScWorkspace::new(q, n);
    let mut u = vec![0usize; size];
    let mut marg = vec![0.0; q];
    for _ in 0..samples.max(1) {
        for v in u.iter_mut() {
            *v = rng.gen_range(0..q);
        }
        let x = encode_symbols(g, &u);
        let lik = ws.likelihoods_mut();
        for (j, &xj) in x.iter().enumerate() {
            let y = sampler.sample(xj, &mut rng);
            lik[j * q..(j + 1) * q].copy_from_slice(p.column(y));
        }
        ws.run(g, &mut |b, post| {
            let k = slot[b];
            if k != usize::MAX {
                let a = &mut acc[k];
                let h = entropy_bits(post);
                a.h.0 += h;
                a.h.1 += h * h;
                for (pi, part) in partitions.iter().enumerate() {
                    let kb = part.block_count();
                    let m = &mut marg[..kb];
                    m.iter_mut().for_each(|v| *v = 0.0);
                    for (x, &v) in post.iter().enumerate() {
                        m[part.block_of(x)] += v;
                    }
                    let hb = entropy_bits(m);
                    let s: f64 = m.iter().map(|v| v.max(0.0).sqrt()).sum();
                    let zterm = if kb > 1 { (s * s - 1.0).max(0.0) / (kb - 1) as f64 } else { 0.0 };
                    let e = &mut a.parts[pi];
                    e[0].0 += hb;
                    e[0].1 += hb * hb;
                    e[1].0 += zterm;
                    e[1].1 += zterm * zterm;
                }
            }
            u[b]
        });
    }
    let ns = samples.max(1) as f64;
    let mean_se = |(s, s2): (f64, f64)| {
        let mean = s / ns;
        let var = (s2 / ns - mean * mean).max(0.0);
        (mean, if ns > 1.0 { (var / (ns - 1.0)).sqrt() } else { 0.0 })
    };
    let lq = (q as f64).log2();
    Ok(acc
        .into_iter()
        .map(|a| {
            let (mh, sh) = mean_se(a.h);
            let parts = a
                .parts
                .iter()
                .zip(partitions)
                .map(|(e, part)| {
                    let (mhb, shb) = mean_se(e[0]);
                    let (mz, sz) = mean_se(e[1]);
                    let info = ((part.block_count() as f64).log2() - mhb).max(0.0);
                    PartitionStats { info, info_stderr: shb, z: mz, z_stderr: sz }
                })
                .collect();
            ((lq - mh).max(0.0), sh, parts)
        })
        .collect())
}

/// Monte Carlo report for one branch, classified against the stable partitions of `(Q,/*)`.
pub fn estimate_branch_montecarlo(
    p: &Dmc,
    g: &Quasigroup,
    s: SignSequence,
    samples: usize,
    seed: u64,
    delta: f64,
) -> Result<BranchReport, PolarizeError> {
    let partitions = candidate_partitions(g)?;
    let blocks: Vec<BalancedPartition> = partitions.iter().map(|h| h.partition().clone()).collect();
    let mut stats = montecarlo_stats(p, g, s.len(), &[s.index() as usize], &blocks, samples, seed)?;
    let (info, se, cands) = stats.pop().expect("one branch");
    let mut r = BranchReport::new(s, Mode::Montecarlo, samples, info, se, cands);
    r.classify(&partitions, delta, Selection::default());
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SurveyMode {
    Exact,
    MonteCarlo { samples: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyConfig {
    pub n: u32,
    pub mode: SurveyMode,
    pub delta: f64,
    /// Survey this many uniformly drawn branches instead of all `2^n`.
    pub branch_sample: Option<usize>,
    pub seed: u64,
    pub transform: TransformOptions,
    pub selection: Selection,
}

impl SurveyConfig {
    pub fn new(n: u32, mode: SurveyMode) -> Self {
        SurveyConfig {
            n,
            mode,
            delta: DEFAULT_DELTA,
            branch_sample: None,
            seed: 0,
            transform: TransformOptions::default(),
            selection: Selection::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Survey {
    pub partitions: Vec<StablePartition>,
    pub reports: Vec<BranchReport>,
    pub base: ChannelStats,
    pub classified_fraction: f64,
    pub mean_info: f64,
    /// `Σ_{classified} log|H_s|` divided by the number of surveyed branches.
    pub rate: f64,
}

/// The branch indices a survey visits, sorted.
pub fn surveyed_branches(n: u32, branch_sample: Option<usize>, seed: u64) -> Vec<usize> {
    let size = 1usize << n;
    match branch_sample {
        Some(k) if k < size => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_b2a7_c4e5);
            let mut v = sample_indices(&mut rng, size, k).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..size).collect(),
    }
}

pub fn survey(p: &Dmc, g: &Quasigroup, cfg: &SurveyConfig) -> Result<Survey, PolarizeError> {
    let partitions = candidate_partitions(g)?;
    survey_with_partitions(p, g, partitions, cfg)
}

/// [`survey`] against a caller-supplied candidate list.
pub fn survey_with_partitions(
    p: &Dmc,
    g: &Quasigroup,
    partitions: Vec<StablePartition>,
    cfg: &SurveyConfig,
) -> Result<Survey, PolarizeError> {
    check_size(p, g)?;
    if cfg.n > 24 {
        return Err(PolarizeError::DepthTooLarge(cfg.n));
    }
    let blocks: Vec<BalancedPartition> = partitions.iter().map(|h| h.partition().clone()).collect();
    let branches = surveyed_branches(cfg.n, cfg.branch_sample, cfg.seed);
    let mut reports = match cfg.mode {
        SurveyMode::Exact => {
            let mut out = Vec::with_capacity(branches.len());
            explore(p, g, cfg, &blocks, 0, 0, &branches, &mut out)?;
            out
        }
        SurveyMode::MonteCarlo { samples } => {
            let stats = montecarlo_stats(p, g, cfg.n, &branches, &blocks, samples, cfg.seed)?;
            branches
                .iter()
                .zip(stats)
                .map(|(&b, (i, se, c))| {
                    BranchReport::new(SignSequence::new(cfg.n, b as u64), Mode::Montecarlo, samples, i, se, c)
                })
                .collect()
        }
    };
    for r in reports.iter_mut() {
        r.classify(&partitions, cfg.delta, cfg.selection);
    }
    let count = reports.len() as f64;
    let classified = reports.iter().filter(|r| r.matched.is_some()).count() as f64;
    let rate = reports
        .iter()
        .filter_map(|r| r.matched.map(|i| (partitions[i].partition().block_count() as f64).log2()))
        .sum::<f64>();
    let mean_info = reports.iter().map(|r| r.mutual_info).sum::<f64>() / count;
    Ok(Survey {
        base: dmc::stats(p),
        classified_fraction: classified / count,
        mean_info,
        rate: rate / count,
        partitions,
        reports,
    })
}

#[allow(clippy::too_many_arguments)]
fn explore(
    p: &Dmc,
    g: &Quasigroup,
    cfg: &SurveyConfig,
    blocks: &[BalancedPartition],
    depth: u32,
    prefix: u64,
    wanted: &[usize],
    out: &mut Vec<BranchReport>,
) -> Result<(), PolarizeError> {
    if wanted.is_empty() {
        return Ok(());
    }
    if depth == cfg.n {
        let (info, cands) = exact_stats(p, blocks)?;
        out.push(BranchReport::new(SignSequence::new(cfg.n, prefix), Mode::Exact, 0, info, 0.0, cands));
        return Ok(());
    }
    let bit = 1usize << depth;
    let (minus, plus): (Vec<usize>, Vec<usize>) = wanted.iter().partition(|&&b| b & bit == 0);
    if !minus.is_empty() {
        let child = minus_transform_with(p, g, &cfg.transform, depth as usize + 1)?;
        explore(&child, g, cfg, blocks, depth + 1, prefix, &minus, out)?;
    }
    if !plus.is_empty() {
        let child = plus_transform_with(p, g, &cfg.transform, depth as usize + 1)?;
        explore(&child, g, cfg, blocks, depth + 1, prefix | bit as u64, &plus, out)?;
    }
    if depth == 0 {
        out.sort_by_key(|r| r.signs.index());
    }
    Ok(())
}

/// `(P[H]⁻, P[H]⁺)` for a stable partition `H` of `(Q,/*)`.
///
/// `P[H]⁻` has input alphabet `H^{/*}` (block order of that partition) and
/// output `(y1,y2)` at index `y1·|Y|+y2`; `P[H]⁺` has input alphabet `H` and
/// output `(y1,y2,H1)` at index `(y1·|Y|+y2)·|H| + H1`. Neither is merged.
pub fn projected_transforms(p: &Dmc, h: &StablePartition, g: &Quasigroup) -> Result<(Dmc, Dmc), PolarizeError> {
    check_size(p, g)?;
    let hp = h.partition();
    if hp.carrier_size() != g.size() {
        return Err(PolarizeError::PartitionMismatch);
    }
    let hd = partition_product(&g.derived(Division::RightDiv), hp).ok_or(PolarizeError::PartitionMismatch)?;
    let k = hp.block_count();
    let table = block_product_table(g, &hd, hp)?;
    let ph = project_channel(p, hp)?;
    let ny = ph.outputs();
    let w = 1.0 / k as f64;
    let mut minus = vec![0.0; ny * ny * k];
    let mut plus = vec![0.0; ny * ny * k * k];
    for y1 in 0..ny {
        for y2 in 0..ny {
            let o = y1 * ny + y2;
            for h1 in 0..k {
                for h2 in 0..k {
                    let v = w * ph.prob(table[h1 * k + h2], y1) * ph.prob(h2, y2);
                    minus[o * k + h1] += v;
                    plus[(o * k + h1) * k + h2] = v;
                }
            }
        }
    }
    Ok((Dmc::from_columns(k, minus), Dmc::from_columns(k, plus)))
}

/// `t[h1·k + h2]` = the block of `H` equal to `H1*H2`, for `H1 ∈ H^{/*}`, `H2 ∈ H`.
fn block_product_table(
    g: &Quasigroup,
    hd: &BalancedPartition,
    h: &BalancedPartition,
) -> Result<Vec<usize>, PolarizeError> {
    let k = h.block_count();
    let mut t = vec![0; k * k];
    for h1 in 0..k {
        for h2 in 0..k {
            let set = g.set_product(hd.block(h1), h.block(h2));
            let b = h.block_of(set[0]);
            if set != h.block(b) {
                return Err(PolarizeError::PartitionMismatch);
            }
            t[h1 * k + h2] = b;
        }
    }
    Ok(t)
}

/// Largest gap between the entries of `p_h_plus` (laid out as in
/// [`projected_transforms`]) and `Σ_{x1 ∈ H1} P⁺[H](y1,y2,x1|H2)`.
pub fn aggregation_residual(
    p_h_plus: &Dmc,
    p: &Dmc,
    h: &StablePartition,
    g: &Quasigroup,
) -> Result<f64, PolarizeError> {
    check_size(p, g)?;
    let hp = h.partition();
    let hd = partition_product(&g.derived(Division::RightDiv), hp).ok_or(PolarizeError::PartitionMismatch)?;
    let q = g.size();
    let k = hp.block_count();
    let ny = p.outputs();
    if p_h_plus.inputs() != k || p_h_plus.outputs() != ny * ny * k {
        return Err(PolarizeError::PartitionMismatch);
    }
    let pplus_h = project_channel(&plus_transform_raw(p, g)?, hp)?;
    let mut worst: f64 = 0.0;
    for o in 0..ny * ny {
        for h1 in 0..k {
            for h2 in 0..k {
                let agg: f64 = hd.block(h1).iter().map(|&x1| pplus_h.prob(h2, o * q + x1)).sum();
                worst = worst.max((agg - p_h_plus.prob(h2, o * k + h1)).abs());
            }
        }
    }
    Ok(worst)
}

/// Checks that `P[H]⁺` is the aggregation of `P⁺[H]` over blocks of `H^{/*}`.
pub fn degradation_aggregation_check(
    p: &Dmc,
    h: &StablePartition,
    g: &Quasigroup,
    tol: f64,
) -> Result<bool, PolarizeError> {
    let (_, plus) = projected_transforms(p, h, g)?;
    Ok(aggregation_residual(&plus, p, h, g)? <= tol)
}
