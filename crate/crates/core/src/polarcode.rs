//! Single-user polar codes: construction, encoding, SC decoding, simulation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{stable_orbit, BalancedPartition, Division, Quasigroup, StablePartition};
use crate::dmc::{argmax_first, ChannelSampler, Dmc};
use crate::polarize::{survey, PolarizeError, Selection, SignSequence, SurveyConfig, SurveyMode, TransformOptions};
use crate::sc::{encode_symbols, ScWorkspace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodeError {
    #[error("no information symbol supplied for active branch {0}")]
    MissingInfoSymbol(usize),
    #[error("block index {index} is out of range for branch {branch}")]
    InvalidBlockIndex { branch: usize, index: usize },
    #[error("received {got} symbols, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("channel has {channel} inputs but the code is over {code} symbols")]
    AlphabetMismatch { channel: usize, code: usize },
    #[error("malformed code configuration: {0}")]
    Malformed(String),
    #[error(transparent)]
    Polarize(#[from] PolarizeError),
}

/// `f_s`: one chosen element per block of `H_s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectionMapping {
    partition: StablePartition,
    representative: Vec<usize>,
}

impl SectionMapping {
    /// Minimal element of each block.
    pub fn minimal(partition: StablePartition) -> Self {
        let representative = partition.partition().blocks().iter().map(|b| b[0]).collect();
        SectionMapping { partition, representative }
    }

    pub fn with_representatives(partition: StablePartition, representative: Vec<usize>) -> Result<Self, CodeError> {
        let p = partition.partition();
        if representative.len() != p.block_count()
            || representative.iter().enumerate().any(|(b, &x)| x >= p.carrier_size() || p.block_of(x) != b)
        {
            return Err(CodeError::Malformed("section representative outside its block".into()));
        }
        Ok(SectionMapping { partition, representative })
    }

    pub fn partition(&self) -> &StablePartition {
        &self.partition
    }

    pub fn representatives(&self) -> &[usize] {
        &self.representative
    }

    pub fn apply(&self, block: usize) -> usize {
        self.representative[block]
    }

    pub fn block_count(&self) -> usize {
        self.representative.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BranchKind {
    Frozen { value: usize },
    Active { section: SectionMapping, z: f64, info: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPlan {
    pub signs: SignSequence,
    pub kind: BranchKind,
}

impl BranchPlan {
    pub fn is_active(&self) -> bool {
        matches!(self.kind, BranchKind::Active { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeConfig {
    pub n: u32,
    pub quasigroup: Quasigroup,
    pub plans: Vec<BranchPlan>,
    pub rate_bits: f64,
    pub z_threshold: f64,
    pub delta: f64,
    pub seed: u64,
}

impl CodeConfig {
    pub fn len(&self) -> usize {
        1 << self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn active_branches(&self) -> impl Iterator<Item = usize> + '_ {
        self.plans.iter().enumerate().filter(|(_, p)| p.is_active()).map(|(i, _)| i)
    }

    /// `Σ_{active} log₂|H_s| / 2ⁿ` recomputed from the plans.
    pub fn recompute_rate(&self) -> f64 {
        self.plans
            .iter()
            .filter_map(|p| match &p.kind {
                BranchKind::Active { section, .. } => Some((section.block_count() as f64).log2()),
                _ => None,
            })
            .sum::<f64>()
            / self.len() as f64
    }

    /// `Σ_{active} |H_s| · Z(P^s[H_s])`.
    pub fn union_bound(&self) -> f64 {
        self.plans
            .iter()
            .filter_map(|p| match &p.kind {
                BranchKind::Active { section, z, .. } => Some(section.block_count() as f64 * z),
                _ => None,
            })
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&CodeFile::from(self)).expect("serialisable")
    }

    pub fn from_json(s: &str) -> Result<Self, CodeError> {
        let f: CodeFile = serde_json::from_str(s).map_err(|e| CodeError::Malformed(e.to_string()))?;
        CodeConfig::try_from(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstructOptions {
    pub delta: f64,
    pub z_threshold: f64,
    pub mode: SurveyMode,
    pub seed: u64,
    pub selection: Selection,
    pub transform: TransformOptions,
}

impl Default for ConstructOptions {
    fn default() -> Self {
        ConstructOptions {
            delta: crate::polarize::DEFAULT_DELTA,
            z_threshold: 1e-3,
            mode: SurveyMode::Exact,
            seed: 0,
            selection: Selection::default(),
            transform: TransformOptions::default(),
        }
    }
}

/// Classifies every branch; a branch is active when it matches some `H_s`
/// with more than one block and `Z(P^s[H_s]) < zThreshold`, otherwise frozen
/// to a seeded random symbol.
pub fn construct_code(p: &Dmc, g: &Quasigroup, n: u32, opts: &ConstructOptions) -> Result<CodeConfig, CodeError> {
    let mut cfg = SurveyConfig::new(n, opts.mode);
    cfg.delta = opts.delta;
    cfg.seed = opts.seed;
    cfg.selection = opts.selection;
    cfg.transform = opts.transform;
    let s = survey(p, g, &cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let plans = s
        .reports
        .into_iter()
        .map(|r| {
            let frozen = rng.gen_range(0..g.size());
            let kind = match (r.matched_partition, r.z_projected) {
                (Some(h), Some(z)) if z < opts.z_threshold && h.partition().block_count() > 1 => {
                    BranchKind::Active { section: SectionMapping::minimal(h), z, info: r.partition_info.unwrap_or(0.0) }
                }
                _ => BranchKind::Frozen { value: frozen },
            };
            BranchPlan { signs: r.signs, kind }
        })
        .collect();
    let mut c = CodeConfig {
        n,
        quasigroup: g.clone(),
        plans,
        rate_bits: 0.0,
        z_threshold: opts.z_threshold,
        delta: opts.delta,
        seed: opts.seed,
    };
    c.rate_bits = c.recompute_rate();
    Ok(c)
}

/// Branch symbols `U_s` for the given information blocks.
pub fn branch_symbols(c: &CodeConfig, info: &BTreeMap<usize, usize>) -> Result<Vec<usize>, CodeError> {
    c.plans
        .iter()
        .enumerate()
        .map(|(i, plan)| match &plan.kind {
            BranchKind::Frozen { value } => Ok(*value),
            BranchKind::Active { section, .. } => {
                let b = *info.get(&i).ok_or(CodeError::MissingInfoSymbol(i))?;
                if b >= section.block_count() {
                    return Err(CodeError::InvalidBlockIndex { branch: i, index: b });
                }
                Ok(section.apply(b))
            }
        })
        .collect()
}

pub fn encode(c: &CodeConfig, info: &BTreeMap<usize, usize>) -> Result<Vec<usize>, CodeError> {
    Ok(encode_symbols(&c.quasigroup, &branch_symbols(c, info)?))
}

/// Successive cancellation decoding; returns `Û_s` for every branch.
pub fn sc_decode(c: &CodeConfig, y: &[usize], p: &Dmc) -> Result<Vec<usize>, CodeError> {
    let mut ws = ScWorkspace::new(c.quasigroup.size(), c.n);
    sc_decode_with(c, y, p, &mut ws)
}

pub fn sc_decode_with(c: &CodeConfig, y: &[usize], p: &Dmc, ws: &mut ScWorkspace) -> Result<Vec<usize>, CodeError> {
    let q = c.quasigroup.size();
    if y.len() != c.len() {
        return Err(CodeError::LengthMismatch { expected: c.len(), got: y.len() });
    }
    if p.inputs() != q {
        return Err(CodeError::AlphabetMismatch { channel: p.inputs(), code: q });
    }
    if let Some(&bad) = y.iter().find(|&&v| v >= p.outputs()) {
        return Err(CodeError::Malformed(format!("output symbol {bad} out of range")));
    }
    let lik = ws.likelihoods_mut();
    for (j, &yj) in y.iter().enumerate() {
        lik[j * q..(j + 1) * q].copy_from_slice(p.column(yj));
    }
    let mut marg = Vec::with_capacity(q);
    ws.run(&c.quasigroup, &mut |b, post| match &c.plans[b].kind {
        BranchKind::Frozen { value } => *value,
        BranchKind::Active { section, .. } => {
            let part = section.partition().partition();
            marg.clear();
            marg.resize(part.block_count(), 0.0);
            for (x, &v) in post.iter().enumerate() {
                marg[part.block_of(x)] += v;
            }
            section.apply(argmax_first(&marg))
        }
    });
    Ok(ws.decisions().to_vec())
}

/// Posterior of every `U_s` given `y` and the true earlier symbols `u`.
pub fn genie_posteriors(g: &Quasigroup, p: &Dmc, y: &[usize], u: &[usize]) -> Vec<Vec<f64>> {
    let q = g.size();
    let n = y.len().trailing_zeros();
    let mut ws = ScWorkspace::new(q, n);
    let lik = ws.likelihoods_mut();
    for (j, &yj) in y.iter().enumerate() {
        lik[j * q..(j + 1) * q].copy_from_slice(p.column(yj));
    }
    let mut out = vec![Vec::new(); y.len()];
    ws.run(g, &mut |b, post| {
        out[b] = post.to_vec();
        u[b]
    });
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimulationReport {
    pub trials: usize,
    pub block_error_rate: f64,
    pub symbol_error_rate: f64,
    /// Standard error of the block error rate.
    pub stderr: f64,
    pub union_bound: f64,
}

/// Uniform info symbols through encode, the channel, and SC decoding.
pub fn simulate(c: &CodeConfig, p: &Dmc, trials: usize, seed: u64) -> Result<SimulationReport, CodeError> {
    let q = c.quasigroup.size();
    if p.inputs() != q {
        return Err(CodeError::AlphabetMismatch { channel: p.inputs(), code: q });
    }
    let trials = trials.max(1);
    let active: Vec<usize> = c.active_branches().collect();
    let sampler = ChannelSampler::new(p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ws = ScWorkspace::new(q, c.n);
    let mut info = BTreeMap::new();
    let (mut block_errors, mut symbol_errors) = (0usize, 0usize);
    for _ in 0..trials {
        for &i in &active {
            if let BranchKind::Active { section, .. } = &c.plans[i].kind {
                info.insert(i, rng.gen_range(0..section.block_count()));
            }
        }
        let u = branch_symbols(c, &info)?;
        let x = encode_symbols(&c.quasigroup, &u);
        let y: Vec<usize> = x.iter().map(|&xi| sampler.sample(xi, &mut rng)).collect();
        let uh = sc_decode_with(c, &y, p, &mut ws)?;
        let wrong = active.iter().filter(|&&i| uh[i] != u[i]).count();
        symbol_errors += wrong;
        block_errors += (wrong > 0) as usize;
    }
    let bler = block_errors as f64 / trials as f64;
    Ok(SimulationReport {
        trials,
        block_error_rate: bler,
        symbol_error_rate: if active.is_empty() { 0.0 } else { symbol_errors as f64 / (trials * active.len()) as f64 },
        stderr: (bler * (1.0 - bler) / trials as f64).sqrt(),
        union_bound: c.union_bound(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct CodeFile {
    n: u32,
    quasigroup: Quasigroup,
    rate_bits: f64,
    z_threshold: f64,
    delta: f64,
    seed: u64,
    branches: Vec<BranchFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum BranchFile {
    Frozen { signs: String, value: usize },
    Active { signs: String, partition: String, blocks: Vec<Vec<usize>>, representatives: Vec<usize>, z: f64, info: f64 },
}

impl From<&CodeConfig> for CodeFile {
    fn from(c: &CodeConfig) -> Self {
        let branches = c
            .plans
            .iter()
            .map(|p| match &p.kind {
                BranchKind::Frozen { value } => BranchFile::Frozen { signs: p.signs.to_string(), value: *value },
                BranchKind::Active { section, z, info } => BranchFile::Active {
                    signs: p.signs.to_string(),
                    partition: section.partition().partition().signature(),
                    blocks: section.partition().partition().blocks().to_vec(),
                    representatives: section.representatives().to_vec(),
                    z: *z,
                    info: *info,
                },
            })
            .collect();
        CodeFile {
            n: c.n,
            quasigroup: c.quasigroup.clone(),
            rate_bits: c.rate_bits,
            z_threshold: c.z_threshold,
            delta: c.delta,
            seed: c.seed,
            branches,
        }
    }
}

impl TryFrom<CodeFile> for CodeConfig {
    type Error = CodeError;
    fn try_from(f: CodeFile) -> Result<Self, CodeError> {
        let bad = |m: &str| CodeError::Malformed(m.to_string());
        if f.n > 24 || f.branches.len() != 1usize << f.n {
            return Err(bad("branch count does not match n"));
        }
        let q = f.quasigroup.size();
        let rd = f.quasigroup.derived(Division::RightDiv);
        let mut plans = Vec::with_capacity(f.branches.len());
        for (i, b) in f.branches.into_iter().enumerate() {
            let (signs, kind) = match b {
                BranchFile::Frozen { signs, value } => {
                    if value >= q {
                        return Err(bad("frozen value out of range"));
                    }
                    (signs, BranchKind::Frozen { value })
                }
                BranchFile::Active { signs, blocks, representatives, z, info, .. } => {
                    let bp = BalancedPartition::new(blocks, q).map_err(|e| CodeError::Malformed(e.to_string()))?;
                    let h = stable_orbit(&rd, &bp).ok_or_else(|| bad("partition is not stable"))?;
                    (
                        signs,
                        BranchKind::Active {
                            section: SectionMapping::with_representatives(h, representatives)?,
                            z,
                            info,
                        },
                    )
                }
            };
            let signs: SignSequence = signs.parse().map_err(|e: String| CodeError::Malformed(e))?;
            if signs.len() != f.n || signs.index() as usize != i {
                return Err(bad("branch signs out of order"));
            }
            plans.push(BranchPlan { signs, kind });
        }
        let mut c = CodeConfig {
            n: f.n,
            quasigroup: f.quasigroup,
            plans,
            rate_bits: 0.0,
            z_threshold: f.z_threshold,
            delta: f.delta,
            seed: f.seed,
        };
        c.rate_bits = c.recompute_rate();
        if (c.rate_bits - f.rate_bits).abs() > 1e-9 {
            return Err(bad("rateBits does not match the plans"));
        }
        Ok(c)
    }
}
