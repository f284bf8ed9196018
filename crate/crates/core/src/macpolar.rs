//! Multiple access channels with prime-field users.
//!
//! An `m`-user MAC with alphabets `F_{q_1} × … × F_{q_m}` is handled as a
//! single-user channel over the abelian group `Π Z_{q_k}` (mixed radix, user 1
//! most significant), so its minus and plus transforms are the quasigroup
//! transforms of that group. Projections `P[A]` by generalized matrices are
//! projections onto the cosets of `ker Aᵀ`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{stable_orbit, BalancedPartition, Division, Quasigroup, StablePartition};
use crate::dmc::{argmax_first, mutual_information, project_channel, ChannelSampler, Dmc, DmcError};
use crate::gf::{self, all_subspaces, is_prime, prime_power, Subspace};
use crate::polarize::{
    minus_transform, plus_transform, survey_with_partitions, PolarizeError, SignSequence, SurveyConfig,
};
use crate::sc::{encode_symbols, ScWorkspace};

pub const MAX_USERS: usize = 6;
pub const MAX_BLOCK_ALPHABET: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MacError {
    #[error("user alphabet {0} is not prime")]
    NotPrime(usize),
    #[error("user alphabet {0} is not a prime power")]
    NotPrimePower(usize),
    #[error("{users} users exceed the limit of {limit}")]
    UserCountTooLarge { users: usize, limit: usize },
    #[error("users declare {declared} input tuples but the matrix has {actual} rows")]
    InputCount { declared: usize, actual: usize },
    #[error("generalized matrix does not match the users: {0}")]
    ShapeMismatch(String),
    #[error("generalized matrix is not full rank")]
    NotFullRank,
    #[error("block F_{p}^{m} is too large to enumerate")]
    BlockTooLarge { p: usize, m: usize },
    #[error("no information symbol for user {user} on branch {branch}")]
    MissingInfoSymbol { branch: usize, user: usize },
    #[error("symbol {value} is out of range for user {user}")]
    InvalidSymbol { user: usize, value: usize },
    #[error("received {got} symbols, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("active rows of branch {0} are not independent")]
    SingularSolve(usize),
    #[error("malformed MAC code configuration: {0}")]
    Malformed(String),
    #[error(transparent)]
    Dmc(#[from] DmcError),
    #[error(transparent)]
    Polarize(#[from] PolarizeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MacFile", into = "MacFile")]
pub struct MacChannel {
    users: Vec<usize>,
    channel: Dmc,
}

/// On-disk form: `{"users": [q1, …], "outputs": m, "matrix": [[P(y|x) for y] for x]}`
/// with input tuples in mixed-radix order, user 1 most significant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MacFile {
    pub users: Vec<usize>,
    pub outputs: usize,
    pub matrix: Vec<Vec<f64>>,
}

impl TryFrom<MacFile> for MacChannel {
    type Error = MacError;
    fn try_from(f: MacFile) -> Result<Self, MacError> {
        let d = Dmc::try_from(crate::dmc::DmcFile { inputs: f.matrix.len(), outputs: f.outputs, matrix: f.matrix })?;
        MacChannel::new(f.users, d)
    }
}

impl From<MacChannel> for MacFile {
    fn from(m: MacChannel) -> Self {
        MacFile { outputs: m.channel.outputs(), matrix: m.channel.rows(), users: m.users }
    }
}

impl MacChannel {
    pub fn new(users: Vec<usize>, channel: Dmc) -> Result<Self, MacError> {
        if let Some(&q) = users.iter().find(|&&q| !is_prime(q)) {
            return Err(MacError::NotPrime(q));
        }
        let declared: usize = users.iter().product();
        if declared != channel.inputs() {
            return Err(MacError::InputCount { declared, actual: channel.inputs() });
        }
        Ok(MacChannel { users, channel })
    }

    /// Replaces each prime-power user `p^k` by `k` virtual users over `F_p`;
    /// the channel matrix is unchanged since the digits nest.
    pub fn from_prime_powers(alphabets: &[usize], channel: Dmc) -> Result<Self, MacError> {
        let mut users = Vec::new();
        for &q in alphabets {
            let (p, k) = prime_power(q).ok_or(MacError::NotPrimePower(q))?;
            users.extend(std::iter::repeat_n(p, k as usize));
        }
        MacChannel::new(users, channel)
    }

    /// Output is the input tuple.
    pub fn perfect(users: &[usize]) -> Result<Self, MacError> {
        MacChannel::new(users.to_vec(), Dmc::identity(users.iter().product()))
    }

    pub fn useless(users: &[usize]) -> Result<Self, MacError> {
        MacChannel::new(users.to_vec(), Dmc::useless(users.iter().product()))
    }

    /// `y = x_1 + … + x_m` over `F_p`.
    pub fn adder(p: usize, m: usize) -> Result<Self, MacError> {
        let users = vec![p; m];
        let n = p.pow(m as u32);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|x| {
                let s = digits_of(&users, x).iter().sum::<usize>() % p;
                (0..p).map(|y| (y == s) as usize as f64).collect()
            })
            .collect();
        MacChannel::new(users, Dmc::from_rows(&rows)?)
    }

    pub fn users(&self) -> &[usize] {
        &self.users
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn channel(&self) -> &Dmc {
        &self.channel
    }

    pub fn group(&self) -> Quasigroup {
        Quasigroup::abelian_product(&self.users)
    }

    pub fn digits(&self, x: usize) -> Vec<usize> {
        digits_of(&self.users, x)
    }

    pub fn index(&self, d: &[usize]) -> usize {
        index_of(&self.users, d)
    }
}

pub(crate) fn digits_of(radix: &[usize], mut x: usize) -> Vec<usize> {
    let mut d = vec![0; radix.len()];
    for k in (0..radix.len()).rev() {
        d[k] = x % radix[k];
        x /= radix[k];
    }
    d
}

pub(crate) fn index_of(radix: &[usize], d: &[usize]) -> usize {
    radix.iter().zip(d).fold(0, |acc, (&q, &v)| acc * q + v)
}

pub fn mac_minus(p: &MacChannel) -> Result<MacChannel, MacError> {
    Ok(MacChannel { users: p.users.clone(), channel: minus_transform(&p.channel, &p.group())? })
}

pub fn mac_plus(p: &MacChannel) -> Result<MacChannel, MacError> {
    Ok(MacChannel { users: p.users.clone(), channel: plus_transform(&p.channel, &p.group())? })
}

/// `I[S]` for every subset, indexed by bitmask (bit `k` = user `k`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRegion {
    pub users: usize,
    pub values: Vec<f64>,
}

impl RateRegion {
    pub fn get(&self, mask: usize) -> f64 {
        self.values[mask]
    }

    pub fn sum_capacity(&self) -> f64 {
        self.values[(1 << self.users) - 1]
    }

    /// Corner points of the dominant face, one per user ordering, deduplicated.
    pub fn dominant_vertices(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        for perm in permutations(self.users) {
            let mut r = vec![0.0; self.users];
            let mut mask = 0;
            for &k in &perm {
                let prev = self.values[mask];
                mask |= 1 << k;
                r[k] = self.values[mask] - prev;
            }
            if !out.iter().any(|v| v.iter().zip(&r).all(|(a, b)| (a - b).abs() < 1e-12)) {
                out.push(r);
            }
        }
        out
    }

    pub fn contains(&self, r: &[f64], tol: f64) -> bool {
        (1..1usize << self.users).all(|mask| {
            let s: f64 = (0..self.users).filter(|k| mask >> k & 1 == 1).map(|k| r[k]).sum();
            s <= self.values[mask] + tol
        })
    }
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(m - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, m - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// `I[S] = I(X;Y) − I(X_{S^c};Y)` in bits with uniform inputs.
pub fn rate_region(p: &MacChannel) -> Result<RateRegion, MacError> {
    let m = p.user_count();
    if m > MAX_USERS {
        return Err(MacError::UserCountTooLarge { users: m, limit: MAX_USERS });
    }
    let total = mutual_information(&p.channel);
    let n = p.channel.inputs();
    let mut values = vec![0.0; 1 << m];
    for mask in 1..(1usize << m) {
        let labels: Vec<usize> = (0..n)
            .map(|x| {
                let d = p.digits(x);
                (0..m).filter(|k| mask >> k & 1 == 0).fold(0, |acc, k| acc * p.users[k] + d[k])
            })
            .collect();
        let h = BalancedPartition::from_labels(&labels).expect("coordinate partition is balanced");
        let rest = mutual_information(&project_channel(&p.channel, &h)?);
        values[mask] = (total - rest).max(0.0);
    }
    Ok(RateRegion { users: m, values })
}

/// Users grouped by prime in increasing order; each entry lists user indices.
pub fn user_blocks(users: &[usize]) -> Vec<(usize, Vec<usize>)> {
    let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, &q) in users.iter().enumerate() {
        map.entry(q).or_default().push(k);
    }
    map.into_iter().collect()
}

/// One block `A_i ∈ F_p^{m_i × l_i}`, stored as `m_i` rows of length `l_i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatrixBlock {
    pub p: usize,
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<Vec<usize>>,
}

impl MatrixBlock {
    pub fn rank(&self) -> usize {
        gf::rank(&self.entries, self.p)
    }

    /// Column space as a subspace of `F_p^{rows}`.
    pub fn column_space(&self) -> Subspace {
        let cols: Vec<Vec<usize>> = (0..self.cols).map(|c| self.entries.iter().map(|r| r[c]).collect()).collect();
        Subspace::span(self.p, self.rows, &cols)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GeneralizedMatrix {
    pub blocks: Vec<MatrixBlock>,
}

impl GeneralizedMatrix {
    /// Columns are the reduced echelon basis of each subspace.
    pub fn from_column_spaces(users: &[usize], spaces: &[Subspace]) -> Result<Self, MacError> {
        let groups = user_blocks(users);
        if groups.len() != spaces.len() {
            return Err(MacError::ShapeMismatch(format!("{} blocks for {} primes", spaces.len(), groups.len())));
        }
        let blocks = groups
            .iter()
            .zip(spaces)
            .map(|((p, members), v)| {
                if v.field() != *p || v.ambient() != members.len() {
                    return Err(MacError::ShapeMismatch(format!("subspace over F_{} does not fit", v.field())));
                }
                let entries = (0..members.len()).map(|r| v.basis().iter().map(|b| b[r]).collect()).collect();
                Ok(MatrixBlock { p: *p, rows: members.len(), cols: v.dim(), entries })
            })
            .collect::<Result<_, _>>()?;
        Ok(GeneralizedMatrix { blocks })
    }

    pub fn identity(users: &[usize]) -> Self {
        let spaces: Vec<Subspace> = user_blocks(users).iter().map(|(p, m)| Subspace::full(*p, m.len())).collect();
        Self::from_column_spaces(users, &spaces).expect("shapes agree")
    }

    /// All blocks empty.
    pub fn empty(users: &[usize]) -> Self {
        let spaces: Vec<Subspace> = user_blocks(users).iter().map(|(p, m)| Subspace::zero(*p, m.len())).collect();
        Self::from_column_spaces(users, &spaces).expect("shapes agree")
    }

    pub fn rank(&self) -> usize {
        self.blocks.iter().map(|b| b.rank()).sum()
    }

    /// `Σ rank(A_i) · log₂ p_i` bits.
    pub fn lrank(&self) -> f64 {
        self.blocks.iter().map(|b| b.rank() as f64 * (b.p as f64).log2()).sum()
    }

    pub fn is_full_rank(&self) -> bool {
        self.blocks.iter().all(|b| b.rank() == b.cols)
    }

    /// Users of `P[A]`: `l_i` copies of `p_i` per block.
    pub fn output_users(&self) -> Vec<usize> {
        self.blocks.iter().flat_map(|b| std::iter::repeat_n(b.p, b.cols)).collect()
    }

    pub fn check_shape(&self, users: &[usize]) -> Result<(), MacError> {
        let groups = user_blocks(users);
        let ok = groups.len() == self.blocks.len()
            && groups.iter().zip(&self.blocks).all(|((p, m), b)| {
                b.p == *p
                    && b.rows == m.len()
                    && b.entries.len() == b.rows
                    && b.entries.iter().all(|r| r.len() == b.cols)
            });
        if ok {
            Ok(())
        } else {
            Err(MacError::ShapeMismatch("blocks do not match the user primes".into()))
        }
    }

    /// `Aᵀ x` as digits over [`output_users`](Self::output_users).
    pub fn apply_transpose(&self, users: &[usize], x: &[usize]) -> Vec<usize> {
        let groups = user_blocks(users);
        let mut out = Vec::new();
        for ((_, members), b) in groups.iter().zip(&self.blocks) {
            for c in 0..b.cols {
                let s: usize = members.iter().enumerate().map(|(r, &k)| b.entries[r][c] * x[k]).sum();
                out.push(s % b.p);
            }
        }
        out
    }

    /// Label of every input tuple under `x ↦ Aᵀx`.
    pub fn labels(&self, users: &[usize]) -> Vec<usize> {
        let outs = self.output_users();
        let n: usize = users.iter().product();
        (0..n).map(|x| index_of(&outs, &self.apply_transpose(users, &digits_of(users, x)))).collect()
    }

    pub fn signature(&self) -> String {
        self.blocks
            .iter()
            .map(|b| {
                let rows: Vec<String> =
                    b.entries.iter().map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")).collect();
                format!("F{}[{}]", b.p, rows.join(";"))
            })
            .collect::<Vec<_>>()
            .join("|")
    }
}

/// `P[A](y|u) = (1/Π p_i^{m_i−l_i}) Σ_{Aᵀx=u} P(y|x)`.
pub fn project_mac(p: &MacChannel, a: &GeneralizedMatrix) -> Result<MacChannel, MacError> {
    a.check_shape(&p.users)?;
    if !a.is_full_rank() {
        return Err(MacError::NotFullRank);
    }
    let outs = a.output_users();
    let k: usize = outs.iter().product();
    let labels = a.labels(&p.users);
    let w = k as f64 / p.channel.inputs() as f64;
    let ny = p.channel.outputs();
    let mut cols = vec![0.0; k * ny];
    for y in 0..ny {
        for (x, &v) in p.channel.column(y).iter().enumerate() {
            cols[y * k + labels[x]] += v * w;
        }
    }
    Ok(MacChannel { users: outs, channel: Dmc::from_columns(k, cols) })
}

/// Every full-rank generalized matrix up to column space, in order of
/// increasing rank.
pub fn candidate_matrices(users: &[usize]) -> Result<Vec<GeneralizedMatrix>, MacError> {
    if users.len() > MAX_USERS {
        return Err(MacError::UserCountTooLarge { users: users.len(), limit: MAX_USERS });
    }
    let groups = user_blocks(users);
    let mut per_block = Vec::new();
    for (p, m) in &groups {
        if p.pow(m.len() as u32) > MAX_BLOCK_ALPHABET {
            return Err(MacError::BlockTooLarge { p: *p, m: m.len() });
        }
        per_block.push(all_subspaces(*p, m.len()));
    }
    let mut out = Vec::new();
    let mut idx = vec![0usize; per_block.len()];
    loop {
        let spaces: Vec<Subspace> = idx.iter().zip(&per_block).map(|(&i, v)| v[i].clone()).collect();
        out.push(GeneralizedMatrix::from_column_spaces(users, &spaces)?);
        let mut k = 0;
        while k < idx.len() {
            idx[k] += 1;
            if idx[k] < per_block[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == idx.len() {
            break;
        }
    }
    out.sort_by(|a, b| a.lrank().total_cmp(&b.lrank()));
    Ok(out)
}

fn coset_partition_of(users: &[usize], a: &GeneralizedMatrix, rd: &Quasigroup) -> StablePartition {
    let bp = BalancedPartition::from_labels(&a.labels(users)).expect("fibres of a surjection are balanced");
    stable_orbit(rd, &bp).expect("coset partitions are stable")
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacBranchReport {
    pub signs: SignSequence,
    pub mutual_info: f64,
    pub mutual_info_stderr: f64,
    pub matrix: Option<GeneralizedMatrix>,
    pub lrank: Option<f64>,
    pub info_projected: Option<f64>,
    pub z_projected: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MacSurvey {
    pub reports: Vec<MacBranchReport>,
    pub candidates: Vec<GeneralizedMatrix>,
    pub classified_fraction: f64,
    pub mean_info: f64,
    /// Mean `lrank(A_s)` over classified branches, divided by all surveyed branches.
    pub sum_rate: f64,
}

/// Branch survey with candidates `P^s[A]` for every full-rank `A`.
///
/// Ties in `lrank` go to the smallest `Z(P^s[A])`.
pub fn mac_survey(p: &MacChannel, cfg: &SurveyConfig) -> Result<MacSurvey, MacError> {
    let g = p.group();
    let rd = g.derived(Division::RightDiv);
    let candidates = candidate_matrices(&p.users)?;
    let partitions: Vec<StablePartition> = candidates.iter().map(|a| coset_partition_of(&p.users, a, &rd)).collect();
    let s = survey_with_partitions(&p.channel, &g, partitions, cfg)?;
    let reports: Vec<MacBranchReport> = s
        .reports
        .iter()
        .map(|r| MacBranchReport {
            signs: r.signs,
            mutual_info: r.mutual_info,
            mutual_info_stderr: r.mutual_info_stderr,
            matrix: r.matched.map(|i| candidates[i].clone()),
            lrank: r.matched.map(|i| candidates[i].lrank()),
            info_projected: r.partition_info,
            z_projected: r.z_projected,
        })
        .collect();
    let count = reports.len() as f64;
    Ok(MacSurvey {
        classified_fraction: s.classified_fraction,
        mean_info: s.mean_info,
        sum_rate: reports.iter().filter_map(|r| r.lrank).sum::<f64>() / count,
        reports,
        candidates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RowPolicy {
    /// Lexicographically first independent rows of each block.
    #[default]
    FirstRows,
    /// Independent rows chosen from the bottom up.
    LastRows,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MacBranch {
    Frozen {
        values: Vec<usize>,
    },
    /// `active[k]` marks user `k` as carrying information (`F = 0`); `frozen[k]`
    /// is used for the other users.
    Active {
        matrix: GeneralizedMatrix,
        active: Vec<bool>,
        frozen: Vec<usize>,
        z: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacCodeConfig {
    pub n: u32,
    pub users: Vec<usize>,
    pub branches: Vec<MacBranch>,
    /// `R_k = (1/2ⁿ) Σ_s (1 − F(s,k)) log₂ q_k`.
    pub rates: Vec<f64>,
    pub z_threshold: f64,
    pub delta: f64,
    pub seed: u64,
    pub policy: RowPolicy,
}

fn choose_rows(a: &GeneralizedMatrix, users: &[usize], policy: RowPolicy) -> Vec<bool> {
    let mut active = vec![false; users.len()];
    for ((_, members), b) in user_blocks(users).iter().zip(&a.blocks) {
        let order: Vec<usize> = match policy {
            RowPolicy::FirstRows => (0..b.rows).collect(),
            RowPolicy::LastRows => (0..b.rows).rev().collect(),
        };
        let mut chosen: Vec<Vec<usize>> = Vec::new();
        for r in order {
            let mut trial = chosen.clone();
            trial.push(b.entries[r].clone());
            if gf::rank(&trial, b.p) > chosen.len() {
                chosen = trial;
                active[members[r]] = true;
            }
        }
    }
    active
}

impl MacCodeConfig {
    pub fn len(&self) -> usize {
        1 << self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn recompute_rates(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.users.len()];
        for b in &self.branches {
            if let MacBranch::Active { active, .. } = b {
                for (k, &a) in active.iter().enumerate() {
                    if a {
                        r[k] += (self.users[k] as f64).log2();
                    }
                }
            }
        }
        r.iter().map(|v| v / self.len() as f64).collect()
    }

    pub fn sum_rate(&self) -> f64 {
        self.rates.iter().sum()
    }

    pub fn union_bound(&self) -> f64 {
        self.branches
            .iter()
            .filter_map(|b| match b {
                MacBranch::Active { matrix, z, .. } => Some(matrix.output_users().iter().product::<usize>() as f64 * z),
                _ => None,
            })
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&MacCodeFile::from(self)).expect("serialisable")
    }

    pub fn from_json(s: &str) -> Result<Self, MacError> {
        let f: MacCodeFile = serde_json::from_str(s).map_err(|e| MacError::Malformed(e.to_string()))?;
        MacCodeConfig::try_from(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacConstructOptions {
    pub delta: f64,
    pub z_threshold: f64,
    pub mode: crate::polarize::SurveyMode,
    pub seed: u64,
    pub policy: RowPolicy,
}

impl Default for MacConstructOptions {
    fn default() -> Self {
        MacConstructOptions {
            delta: crate::polarize::DEFAULT_DELTA,
            z_threshold: 1e-3,
            mode: crate::polarize::SurveyMode::Exact,
            seed: 0,
            policy: RowPolicy::default(),
        }
    }
}

pub fn construct_mac_code(p: &MacChannel, n: u32, opts: &MacConstructOptions) -> Result<MacCodeConfig, MacError> {
    let mut cfg = SurveyConfig::new(n, opts.mode);
    cfg.delta = opts.delta;
    cfg.seed = opts.seed;
    let s = mac_survey(p, &cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let branches = s
        .reports
        .into_iter()
        .map(|r| {
            let frozen: Vec<usize> = p.users.iter().map(|&q| rng.gen_range(0..q)).collect();
            match (r.matrix, r.z_projected) {
                (Some(a), Some(z)) if z < opts.z_threshold && a.rank() > 0 => {
                    let active = choose_rows(&a, &p.users, opts.policy);
                    MacBranch::Active { matrix: a, active, frozen, z }
                }
                _ => MacBranch::Frozen { values: frozen },
            }
        })
        .collect();
    let mut c = MacCodeConfig {
        n,
        users: p.users.clone(),
        branches,
        rates: Vec::new(),
        z_threshold: opts.z_threshold,
        delta: opts.delta,
        seed: opts.seed,
        policy: opts.policy,
    };
    c.rates = c.recompute_rates();
    Ok(c)
}

/// Branch tuples `U_s` (as group elements) for the given information symbols,
/// keyed by `(branch, user)`.
pub fn mac_branch_symbols(c: &MacCodeConfig, info: &BTreeMap<(usize, usize), usize>) -> Result<Vec<usize>, MacError> {
    c.branches
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let d = match b {
                MacBranch::Frozen { values } => values.clone(),
                MacBranch::Active { active, frozen, .. } => (0..c.users.len())
                    .map(|k| {
                        if !active[k] {
                            return Ok(frozen[k]);
                        }
                        let v = *info.get(&(i, k)).ok_or(MacError::MissingInfoSymbol { branch: i, user: k })?;
                        if v >= c.users[k] {
                            return Err(MacError::InvalidSymbol { user: k, value: v });
                        }
                        Ok(v)
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            };
            Ok(index_of(&c.users, &d))
        })
        .collect()
}

/// Per-user codewords: `result[k][j]` is user `k`'s `j`-th channel symbol.
pub fn mac_encode(c: &MacCodeConfig, info: &BTreeMap<(usize, usize), usize>) -> Result<Vec<Vec<usize>>, MacError> {
    let u = mac_branch_symbols(c, info)?;
    let x = encode_symbols(&Quasigroup::abelian_product(&c.users), &u);
    Ok((0..c.users.len()).map(|k| x.iter().map(|&t| digits_of(&c.users, t)[k]).collect()).collect())
}

/// Precomputed per-branch tables for SC decoding.
pub struct MacDecoder<'a> {
    code: &'a MacCodeConfig,
    group: Quasigroup,
    /// For active branches: `(label of each tuple, label count, tuple for each label)`.
    tables: Vec<Option<(Vec<usize>, usize, Vec<usize>)>>,
}

impl<'a> MacDecoder<'a> {
    pub fn new(c: &'a MacCodeConfig) -> Result<Self, MacError> {
        let groups = user_blocks(&c.users);
        let mut tables = Vec::with_capacity(c.branches.len());
        for (i, b) in c.branches.iter().enumerate() {
            let MacBranch::Active { matrix, active, frozen, .. } = b else {
                tables.push(None);
                continue;
            };
            matrix.check_shape(&c.users)?;
            let outs = matrix.output_users();
            let k: usize = outs.iter().product();
            let mut solved = vec![0usize; k];
            for (label, slot) in solved.iter_mut().enumerate() {
                let target = digits_of(&outs, label);
                let mut tuple = frozen.clone();
                let mut off = 0;
                for ((p, members), blk) in groups.iter().zip(&matrix.blocks) {
                    let s_rows: Vec<usize> = (0..blk.rows).filter(|&r| active[members[r]]).collect();
                    if s_rows.len() != blk.cols {
                        return Err(MacError::SingularSolve(i));
                    }
                    // Σ_{r∈S} A[r][c] U_r = û_c − Σ_{r∉S} A[r][c] F_r
                    let m: Vec<Vec<usize>> =
                        (0..blk.cols).map(|c| s_rows.iter().map(|&r| blk.entries[r][c]).collect()).collect();
                    let rhs: Vec<usize> = (0..blk.cols)
                        .map(|c| {
                            let known: usize = (0..blk.rows)
                                .filter(|r| !s_rows.contains(r))
                                .map(|r| blk.entries[r][c] * frozen[members[r]])
                                .sum();
                            (target[off + c] + p - known % p) % p
                        })
                        .collect();
                    let z = if blk.cols == 0 {
                        Vec::new()
                    } else {
                        gf::solve(&m, &rhs, *p).ok_or(MacError::SingularSolve(i))?
                    };
                    for (j, &r) in s_rows.iter().enumerate() {
                        tuple[members[r]] = z[j];
                    }
                    off += blk.cols;
                }
                *slot = index_of(&c.users, &tuple);
            }
            tables.push(Some((matrix.labels(&c.users), k, solved)));
        }
        Ok(MacDecoder { code: c, group: Quasigroup::abelian_product(&c.users), tables })
    }

    /// Decoded branch tuples (group elements), one per branch.
    pub fn decode(&self, y: &[usize], p: &MacChannel, ws: &mut ScWorkspace) -> Result<Vec<usize>, MacError> {
        let c = self.code;
        if y.len() != c.len() {
            return Err(MacError::LengthMismatch { expected: c.len(), got: y.len() });
        }
        if p.users != c.users {
            return Err(MacError::ShapeMismatch("channel users differ from the code".into()));
        }
        let q = self.group.size();
        let lik = ws.likelihoods_mut();
        for (j, &yj) in y.iter().enumerate() {
            if yj >= p.channel.outputs() {
                return Err(MacError::InvalidSymbol { user: usize::MAX, value: yj });
            }
            lik[j * q..(j + 1) * q].copy_from_slice(p.channel.column(yj));
        }
        let mut marg = Vec::new();
        ws.run(&self.group, &mut |b, post| match (&c.branches[b], &self.tables[b]) {
            (MacBranch::Frozen { values }, _) => index_of(&c.users, values),
            (_, Some((labels, k, solved))) => {
                marg.clear();
                marg.resize(*k, 0.0);
                for (x, &v) in post.iter().enumerate() {
                    marg[labels[x]] += v;
                }
                solved[argmax_first(&marg)]
            }
            _ => unreachable!("active branches have tables"),
        });
        Ok(ws.decisions().to_vec())
    }
}

pub fn mac_sc_decode(c: &MacCodeConfig, y: &[usize], p: &MacChannel) -> Result<Vec<usize>, MacError> {
    let mut ws = ScWorkspace::new(p.channel.inputs(), c.n);
    MacDecoder::new(c)?.decode(y, p, &mut ws)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MacSimulationReport {
    pub trials: usize,
    pub block_error_rate: f64,
    pub symbol_error_rate: f64,
    pub stderr: f64,
    pub union_bound: f64,
}

pub fn mac_simulate(
    c: &MacCodeConfig,
    p: &MacChannel,
    trials: usize,
    seed: u64,
) -> Result<MacSimulationReport, MacError> {
    let trials = trials.max(1);
    let dec = MacDecoder::new(c)?;
    let mut ws = ScWorkspace::new(p.channel.inputs(), c.n);
    let sampler = ChannelSampler::new(&p.channel);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots: Vec<(usize, usize)> = c
        .branches
        .iter()
        .enumerate()
        .flat_map(|(i, b)| match b {
            MacBranch::Active { active, .. } => (0..active.len()).filter(|&k| active[k]).map(|k| (i, k)).collect(),
            _ => Vec::new(),
        })
        .collect();
    let group = Quasigroup::abelian_product(&c.users);
    let (mut blocks, mut symbols) = (0usize, 0usize);
    let mut info = BTreeMap::new();
    for _ in 0..trials {
        for &(i, k) in &slots {
            info.insert((i, k), rng.gen_range(0..c.users[k]));
        }
        let u = mac_branch_symbols(c, &info)?;
        let x = encode_symbols(&group, &u);
        let y: Vec<usize> = x.iter().map(|&t| sampler.sample(t, &mut rng)).collect();
        let uh = dec.decode(&y, p, &mut ws)?;
        let wrong =
            slots.iter().filter(|&&(i, k)| digits_of(&c.users, uh[i])[k] != digits_of(&c.users, u[i])[k]).count();
        symbols += wrong;
        blocks += (wrong > 0) as usize;
    }
    let bler = blocks as f64 / trials as f64;
    Ok(MacSimulationReport {
        trials,
        block_error_rate: bler,
        symbol_error_rate: if slots.is_empty() { 0.0 } else { symbols as f64 / (trials * slots.len()) as f64 },
        stderr: (bler * (1.0 - bler) / trials as f64).sqrt(),
        union_bound: c.union_bound(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct MacCodeFile {
    n: u32,
    users: Vec<usize>,
    rates: Vec<f64>,
    z_threshold: f64,
    delta: f64,
    seed: u64,
    policy: RowPolicy,
    branches: Vec<MacBranchFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum MacBranchFile {
    Frozen { signs: String, values: Vec<usize> },
    Active { signs: String, matrix: GeneralizedMatrix, active: Vec<bool>, frozen: Vec<usize>, z: f64 },
}

impl From<&MacCodeConfig> for MacCodeFile {
    fn from(c: &MacCodeConfig) -> Self {
        let branches = c
            .branches
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let signs = SignSequence::new(c.n, i as u64).to_string();
                match b {
                    MacBranch::Frozen { values } => MacBranchFile::Frozen { signs, values: values.clone() },
                    MacBranch::Active { matrix, active, frozen, z } => MacBranchFile::Active {
                        signs,
                        matrix: matrix.clone(),
                        active: active.clone(),
                        frozen: frozen.clone(),
                        z: *z,
                    },
                }
            })
            .collect();
        MacCodeFile {
            n: c.n,
            users: c.users.clone(),
            rates: c.rates.clone(),
            z_threshold: c.z_threshold,
            delta: c.delta,
            seed: c.seed,
            policy: c.policy,
            branches,
        }
    }
}

impl TryFrom<MacCodeFile> for MacCodeConfig {
    type Error = MacError;
    fn try_from(f: MacCodeFile) -> Result<Self, MacError> {
        let bad = |m: &str| MacError::Malformed(m.to_string());
        if f.n > 24 || f.branches.len() != 1usize << f.n {
            return Err(bad("branch count does not match n"));
        }
        if let Some(&q) = f.users.iter().find(|&&q| !is_prime(q)) {
            return Err(MacError::NotPrime(q));
        }
        let m = f.users.len();
        let in_range = |v: &[usize]| v.len() == m && v.iter().zip(&f.users).all(|(a, q)| a < q);
        let mut branches = Vec::with_capacity(f.branches.len());
        for (i, b) in f.branches.into_iter().enumerate() {
            let (signs, branch) = match b {
                MacBranchFile::Frozen { signs, values } => {
                    if !in_range(&values) {
                        return Err(bad("frozen values out of range"));
                    }
                    (signs, MacBranch::Frozen { values })
                }
                MacBranchFile::Active { signs, matrix, active, frozen, z } => {
                    matrix.check_shape(&f.users)?;
                    if !matrix.is_full_rank() {
                        return Err(MacError::NotFullRank);
                    }
                    if !in_range(&frozen) || active.len() != m {
                        return Err(bad("active branch has the wrong number of users"));
                    }
                    (signs, MacBranch::Active { matrix, active, frozen, z })
                }
            };
            let s: SignSequence = signs.parse().map_err(|e: String| MacError::Malformed(e))?;
            if s.len() != f.n || s.index() as usize != i {
                return Err(bad("branch signs out of order"));
            }
            branches.push(branch);
        }
        let mut c = MacCodeConfig {
            n: f.n,
            users: f.users,
            branches,
            rates: Vec::new(),
            z_threshold: f.z_threshold,
            delta: f.delta,
            seed: f.seed,
            policy: f.policy,
        };
        c.rates = c.recompute_rates();
        if c.rates.len() != f.rates.len() || c.rates.iter().zip(&f.rates).any(|(a, b)| (a - b).abs() > 1e-9) {
            return Err(bad("rates do not match the branches"));
        }
        MacDecoder::new(&c)?;
        Ok(c)
    }
}
