//! Finite quasigroups, balanced and stable partitions, and group structure.
//!
//! Elements are dense indices `0..size`. A quasigroup is stored as its Cayley
//! table together with the two division tables, so every lookup is O(1).

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default cap on `|Q|` for brute-force enumeration of stable partitions.
pub const DEFAULT_ENUMERATION_LIMIT: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlgebraError {
    #[error("table is not square: row {row} has {len} entries, expected {size}")]
    NotSquare { row: usize, len: usize, size: usize },
    #[error("empty table")]
    Empty,
    #[error("entry {value} at ({row},{col}) is out of range for size {size}")]
    EntryOutOfRange { row: usize, col: usize, value: usize, size: usize },
    #[error("not a quasigroup: {line} {index} repeats value {value}")]
    NotAQuasigroup { line: Line, index: usize, value: usize },
    #[error("alphabet of size {size} exceeds the enumeration limit {limit}")]
    AlphabetTooLarge { size: usize, limit: usize },
    #[error("partition is not balanced")]
    NotBalanced,
    #[error("partition does not match an alphabet of size {expected}")]
    PartitionMismatch { expected: usize },
    #[error("expected {expected} labels, got {got}")]
    LabelCount { expected: usize, got: usize },
    #[error("unknown built-in quasigroup '{0}'")]
    UnknownBuiltin(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Line {
    Row,
    Column,
}

impl std::fmt::Display for Line {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Line::Row => write!(f, "row"),
            Line::Column => write!(f, "column"),
        }
    }
}

/// Which division operation a derived quasigroup uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Division {
    /// `(a, b) ↦ a/*b`, the unique `d` with `d*b = a`.
    RightDiv,
    /// `(b, a) ↦ b\*a`, the unique `c` with `b*c = a`.
    LeftDiv,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "QuasigroupFile", into = "QuasigroupFile")]
pub struct Quasigroup {
    size: usize,
    table: Vec<usize>,
    ldiv: Vec<usize>,
    rdiv: Vec<usize>,
    labels: Option<Vec<String>>,
}

/// On-disk form: `{"size": n, "table": [[...]], "labels": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuasigroupFile {
    pub size: usize,
    pub table: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl TryFrom<QuasigroupFile> for Quasigroup {
    type Error = AlgebraError;
    fn try_from(f: QuasigroupFile) -> Result<Self, AlgebraError> {
        if f.table.len() != f.size {
            return Err(AlgebraError::NotSquare { row: f.table.len(), len: 0, size: f.size });
        }
        let q = Quasigroup::from_table(&f.table)?;
        match f.labels {
            Some(l) => q.with_labels(l),
            None => Ok(q),
        }
    }
}

impl From<Quasigroup> for QuasigroupFile {
    fn from(q: Quasigroup) -> Self {
        QuasigroupFile { size: q.size, table: q.rows(), labels: q.labels }
    }
}

impl Quasigroup {
    /// Validates a Cayley table and builds the division tables.
    pub fn from_table(rows: &[Vec<usize>]) -> Result<Self, AlgebraError> {
        let size = rows.len();
        if size == 0 {
            return Err(AlgebraError::Empty);
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != size {
                return Err(AlgebraError::NotSquare { row: r, len: row.len(), size });
            }
            for (c, &v) in row.iter().enumerate() {
                if v >= size {
                    return Err(AlgebraError::EntryOutOfRange { row: r, col: c, value: v, size });
                }
            }
        }
        let mut seen = vec![false; size];
        for (r, row) in rows.iter().enumerate() {
            seen.iter_mut().for_each(|s| *s = false);
            for &v in row {
                if std::mem::replace(&mut seen[v], true) {
                    return Err(AlgebraError::NotAQuasigroup { line: Line::Row, index: r, value: v });
                }
            }
        }
        for c in 0..size {
            seen.iter_mut().for_each(|s| *s = false);
            for row in rows {
                let v = row[c];
                if std::mem::replace(&mut seen[v], true) {
                    return Err(AlgebraError::NotAQuasigroup { line: Line::Column, index: c, value: v });
                }
            }
        }
        let table: Vec<usize> = rows.iter().flatten().copied().collect();
        Ok(Self::from_flat_unchecked(size, table))
    }

    fn from_flat_unchecked(size: usize, table: Vec<usize>) -> Self {
        let mut ldiv = vec![0; size * size];
        let mut rdiv = vec![0; size * size];
        for a in 0..size {
            for b in 0..size {
                let v = table[a * size + b];
                // a*b = v  =>  a\v = b  and  v/b = a
                ldiv[a * size + v] = b;
                rdiv[v * size + b] = a;
            }
        }
        Quasigroup { size, table, ldiv, rdiv, labels: None }
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, AlgebraError> {
        if labels.len() != self.size {
            return Err(AlgebraError::LabelCount { expected: self.size, got: labels.len() });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// The cyclic group `Z_k` under addition.
    pub fn cyclic(k: usize) -> Self {
        assert!(k >= 1);
        Self::from_flat_unchecked(k, (0..k * k).map(|i| (i / k + i % k) % k).collect())
    }

    /// `F_2^k` under componentwise XOR.
    pub fn xor(k: u32) -> Self {
        let n = 1usize << k;
        Self::from_flat_unchecked(n, (0..n * n).map(|i| (i / n) ^ (i % n)).collect())
    }

    /// The abelian group `Z_{m_1} × … × Z_{m_r}` in mixed radix, first factor most significant.
    pub fn abelian_product(moduli: &[usize]) -> Self {
        let n: usize = moduli.iter().product();
        let digits = |mut v: usize| {
            let mut d = vec![0; moduli.len()];
            for k in (0..moduli.len()).rev() {
                d[k] = v % moduli[k];
                v /= moduli[k];
            }
            d
        };
        let mut table = Vec::with_capacity(n * n);
        for a in 0..n {
            let da = digits(a);
            for b in 0..n {
                let db = digits(b);
                let mut v = 0;
                for k in 0..moduli.len() {
                    v = v * moduli[k] + (da[k] + db[k]) % moduli[k];
                }
                table.push(v);
            }
        }
        Self::from_flat_unchecked(n, table)
    }

    /// `Z_n × Z_n` with `(x1,y1)*(x2,y2) = (x1+y1+x2+y2, y1+y2)`; element `(x,y)` has index `x·n+y`.
    /// Not associative for `n > 1`; the block-by-`x` partition is stable with period `n`.
    pub fn twisted(n: usize) -> Self {
        assert!(n >= 1);
        let size = n * n;
        let mut table = Vec::with_capacity(size * size);
        for a in 0..size {
            let (x1, y1) = (a / n, a % n);
            for b in 0..size {
                let (x2, y2) = (b / n, b % n);
                table.push(((x1 + y1 + x2 + y2) % n) * n + (y1 + y2) % n);
            }
        }
        Self::from_flat_unchecked(size, table)
    }

    /// Resolves `Zn:k`, `XOR:k` and `twisted:n`.
    pub fn builtin(name: &str) -> Result<Self, AlgebraError> {
        let unknown = || AlgebraError::UnknownBuiltin(name.to_string());
        let (kind, arg) = name.split_once(':').ok_or_else(unknown)?;
        let k: usize = arg.trim().parse().map_err(|_| unknown())?;
        match kind {
            "Zn" | "Z" if k >= 1 => Ok(Self::cyclic(k)),
            "XOR" if k <= 10 => Ok(Self::xor(k as u32)),
            "twisted" | "paperExample" if k >= 1 => Ok(Self::twisted(k)),
            _ => Err(unknown()),
        }
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn op(&self, a: usize, b: usize) -> usize {
        self.table[a * self.size + b]
    }

    /// `b\*a`: the unique `c` with `b*c = a`.
    #[inline]
    pub fn left_divide(&self, b: usize, a: usize) -> usize {
        self.ldiv[b * self.size + a]
    }

    /// `a/*b`: the unique `d` with `d*b = a`.
    #[inline]
    pub fn right_divide(&self, a: usize, b: usize) -> usize {
        self.rdiv[a * self.size + b]
    }

    pub fn table(&self) -> &[usize] {
        &self.table
    }

    pub fn rows(&self) -> Vec<Vec<usize>> {
        self.table.chunks(self.size).map(|r| r.to_vec()).collect()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn label(&self, x: usize) -> String {
        match &self.labels {
            Some(l) => l[x].clone(),
            None => x.to_string(),
        }
    }

    pub fn derived(&self, which: Division) -> Quasigroup {
        let n = self.size;
        let table = match which {
            Division::RightDiv => self.rdiv.clone(),
            Division::LeftDiv => self.ldiv.clone(),
        };
        let mut q = Self::from_flat_unchecked(n, table);
        q.labels = self.labels.clone();
        q
    }

    /// `{a*b : a ∈ A, b ∈ B}` as a sorted set.
    pub fn set_product(&self, a: &[usize], b: &[usize]) -> Vec<usize> {
        let mut hit = vec![false; self.size];
        for &x in a {
            for &y in b {
                hit[self.op(x, y)] = true;
            }
        }
        (0..self.size).filter(|&i| hit[i]).collect()
    }

    pub fn is_associative(&self) -> bool {
        let n = self.size;
        (0..n).all(|a| (0..n).all(|b| (0..n).all(|c| self.op(self.op(a, b), c) == self.op(a, self.op(b, c)))))
    }

    pub fn identity(&self) -> Option<usize> {
        let n = self.size;
        (0..n).find(|&e| (0..n).all(|x| self.op(e, x) == x && self.op(x, e) == x))
    }
}

/// A partition of `0..n` into blocks of equal size, kept in canonical form:
/// each block sorted, blocks ordered by their minimal element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BalancedPartition {
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
}

impl BalancedPartition {
    pub fn new(mut blocks: Vec<Vec<usize>>, n: usize) -> Result<Self, AlgebraError> {
        let mismatch = AlgebraError::PartitionMismatch { expected: n };
        if n == 0 || blocks.is_empty() {
            return Err(mismatch);
        }
        let mut block_of = vec![usize::MAX; n];
        for b in blocks.iter_mut() {
            b.sort_unstable();
        }
        blocks.sort();
        let size = blocks[0].len();
        for (i, b) in blocks.iter().enumerate() {
            if b.is_empty() {
                return Err(mismatch);
            }
            for &x in b {
                if x >= n || block_of[x] != usize::MAX {
                    return Err(mismatch);
                }
                block_of[x] = i;
            }
        }
        if block_of.contains(&usize::MAX) {
            return Err(mismatch);
        }
        if blocks.iter().any(|b| b.len() != size) {
            return Err(AlgebraError::NotBalanced);
        }
        Ok(BalancedPartition { blocks, block_of })
    }

    /// Builds the partition whose blocks are the level sets of `labels`.
    pub fn from_labels(labels: &[usize]) -> Result<Self, AlgebraError> {
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (x, &l) in labels.iter().enumerate() {
            groups.entry(l).or_default().push(x);
        }
        Self::new(groups.into_values().collect(), labels.len())
    }

    pub fn singletons(n: usize) -> Self {
        Self::new((0..n).map(|x| vec![x]).collect(), n).expect("valid")
    }

    pub fn whole(n: usize) -> Self {
        Self::new(vec![(0..n).collect()], n).expect("valid")
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &[usize] {
        &self.blocks[i]
    }

    /// `|H|`.
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// `||H||`.
    pub fn block_size(&self) -> usize {
        self.blocks[0].len()
    }

    pub fn carrier_size(&self) -> usize {
        self.block_of.len()
    }

    #[inline]
    pub fn block_of(&self, x: usize) -> usize {
        self.block_of[x]
    }

    pub fn block_map(&self) -> &[usize] {
        &self.block_of
    }

    pub fn is_trivial(&self) -> bool {
        self.block_count() == 1 || self.block_size() == 1
    }

    /// Compact text form, e.g. `2x2:{0,1}{2,3}`.
    pub fn signature(&self) -> String {
        let mut s = format!("{}x{}:", self.block_count(), self.block_size());
        for b in &self.blocks {
            s.push('{');
            s.push_str(&b.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
            s.push('}');
        }
        s
    }
}

/// A stable partition together with its orbit `H_1 = H, H_{i+1} = H_i^*`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StablePartition {
    orbit: Vec<BalancedPartition>,
}

impl StablePartition {
    pub fn partition(&self) -> &BalancedPartition {
        &self.orbit[0]
    }

    pub fn period(&self) -> usize {
        self.orbit.len()
    }

    pub fn orbit(&self) -> &[BalancedPartition] {
        &self.orbit
    }

    /// The next partition in the orbit, i.e. `H^*`.
    pub fn successor(&self) -> &BalancedPartition {
        &self.orbit[1 % self.orbit.len()]
    }

    /// The same orbit started one step later.
    pub fn advanced(&self) -> StablePartition {
        let mut orbit = self.orbit.clone();
        orbit.rotate_left(1);
        StablePartition { orbit }
    }
}

/// `H^* = {A*B : A,B ∈ H}` if it is again a balanced partition.
pub fn partition_product(g: &Quasigroup, h: &BalancedPartition) -> Option<BalancedPartition> {
    if h.carrier_size() != g.size() {
        return None;
    }
    let mut sets: BTreeSet<Vec<usize>> = BTreeSet::new();
    for a in h.blocks() {
        for b in h.blocks() {
            sets.insert(g.set_product(a, b));
        }
    }
    BalancedPartition::new(sets.into_iter().collect(), g.size()).ok()
}

/// Iterates the product up to `max_period` times and reports the minimal period.
pub fn stable_partition_check(g: &Quasigroup, h: &BalancedPartition, max_period: usize) -> Option<StablePartition> {
    let mut orbit = vec![h.clone()];
    for _ in 0..max_period {
        let next = partition_product(g, orbit.last().unwrap())?;
        if next == *h {
            return Some(StablePartition { orbit });
        }
        orbit.push(next);
    }
    None
}

/// Stability test that needs no period bound: follows the orbit until it repeats.
pub fn stable_orbit(g: &Quasigroup, h: &BalancedPartition) -> Option<StablePartition> {
    let mut seen = HashSet::new();
    let mut orbit = vec![h.clone()];
    seen.insert(h.clone());
    loop {
        let next = partition_product(g, orbit.last().unwrap())?;
        if next == *h {
            return Some(StablePartition { orbit });
        }
        if !seen.insert(next.clone()) {
            return None;
        }
        orbit.push(next);
    }
}

/// All balanced partitions of `0..n` with blocks of size `d`.
pub fn balanced_partitions(n: usize, d: usize) -> Vec<BalancedPartition> {
    fn rec(free: &mut Vec<usize>, d: usize, cur: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if free.is_empty() {
            out.push(cur.clone());
            return;
        }
        let first = free.remove(0);
        let rest = free.clone();
        let mut pick = Vec::with_capacity(d);
        choose(&rest, d - 1, 0, &mut pick, &mut |chosen| {
            let mut block = vec![first];
            block.extend_from_slice(chosen);
            let mut remaining: Vec<usize> = rest.iter().copied().filter(|x| !chosen.contains(x)).collect();
            cur.push(block);
            rec(&mut remaining, d, cur, out);
            cur.pop();
        });
        free.insert(0, first);
    }
    fn choose(pool: &[usize], k: usize, start: usize, pick: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if pick.len() == k {
            f(pick);
            return;
        }
        for i in start..pool.len() {
            if pool.len() - i < k - pick.len() {
                break;
            }
            pick.push(pool[i]);
            choose(pool, k, i + 1, pick, f);
            pick.pop();
        }
    }
    if d == 0 || !n.is_multiple_of(d) {
        return Vec::new();
    }
    let mut out = Vec::new();
    rec(&mut (0..n).collect(), d, &mut Vec::new(), &mut out);
    out.into_iter().map(|b| BalancedPartition::new(b, n).expect("valid")).collect()
}

pub fn enumerate_stable_partitions(g: &Quasigroup) -> Result<Vec<StablePartition>, AlgebraError> {
    enumerate_stable_partitions_with_limit(g, DEFAULT_ENUMERATION_LIMIT)
}

/// Every stable partition of `(Q, g.op)`, sorted by block count then blocks.
pub fn enumerate_stable_partitions_with_limit(
    g: &Quasigroup,
    limit: usize,
) -> Result<Vec<StablePartition>, AlgebraError> {
    let n = g.size();
    if n > limit {
        return Err(AlgebraError::AlphabetTooLarge { size: n, limit });
    }
    let mut out = Vec::new();
    for d in (1..=n).rev().filter(|d| n.is_multiple_of(*d)) {
        for h in balanced_partitions(n, d) {
            if let Some(s) = stable_orbit(g, &h) {
                out.push(s);
            }
        }
    }
    Ok(out)
}

/// `H₁ ∧ H₂`: the nonempty pairwise intersections.
pub fn wedge(h1: &BalancedPartition, h2: &BalancedPartition) -> Result<BalancedPartition, AlgebraError> {
    let n = h1.carrier_size();
    if h2.carrier_size() != n {
        return Err(AlgebraError::PartitionMismatch { expected: n });
    }
    let labels: Vec<usize> = (0..n).map(|x| h1.block_of(x) * h2.block_count() + h2.block_of(x)).collect();
    BalancedPartition::from_labels(&labels)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupInfo {
    pub is_group: bool,
    pub identity: Option<usize>,
    /// Sorted element sets, ordered by size then contents.
    pub normal_subgroups: Vec<Vec<usize>>,
}

impl GroupInfo {
    /// The coset partitions `G/N`, each stable with period 1.
    pub fn quotient_partitions(&self, g: &Quasigroup) -> Vec<StablePartition> {
        self.normal_subgroups.iter().map(|h| StablePartition { orbit: vec![coset_partition(g, h)] }).collect()
    }
}

/// Left cosets `xH` of a subgroup.
pub fn coset_partition(g: &Quasigroup, h: &[usize]) -> BalancedPartition {
    let mut sets = BTreeSet::new();
    for x in 0..g.size() {
        sets.insert(g.set_product(&[x], h));
    }
    BalancedPartition::new(sets.into_iter().collect(), g.size()).expect("cosets partition a group")
}

/// All subgroups of a finite group, grown one generator at a time from `{e}`.
pub fn subgroups(g: &Quasigroup, e: usize) -> Vec<Vec<usize>> {
    let n = g.size();
    let close = |start: &[usize], extra: usize| -> Vec<usize> {
        let mut inset = vec![false; n];
        let mut members: Vec<usize> = start.to_vec();
        for &x in start {
            inset[x] = true;
        }
        if !inset[extra] {
            inset[extra] = true;
            members.push(extra);
        }
        let mut i = 0;
        while i < members.len() {
            for j in 0..=i {
                for (a, b) in [(members[i], members[j]), (members[j], members[i])] {
                    let c = g.op(a, b);
                    if !inset[c] {
                        inset[c] = true;
                        members.push(c);
                    }
                }
            }
            i += 1;
        }
        members.sort_unstable();
        members
    };
    let mut found: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut frontier = vec![vec![e]];
    found.insert(vec![e]);
    while let Some(h) = frontier.pop() {
        for x in 0..n {
            if h.binary_search(&x).is_ok() {
                continue;
            }
            let bigger = close(&h, x);
            if found.insert(bigger.clone()) {
                frontier.push(bigger);
            }
        }
    }
    let mut v: Vec<_> = found.into_iter().collect();
    v.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    v
}

pub fn group_analysis(g: &Quasigroup) -> GroupInfo {
    let identity = g.identity();
    let is_group = identity.is_some() && g.is_associative();
    if !is_group {
        return GroupInfo { is_group, identity: None, normal_subgroups: Vec::new() };
    }
    let e = identity.unwrap();
    let normal = subgroups(g, e)
        .into_iter()
        .filter(|h| {
            let mut inset = vec![false; g.size()];
            h.iter().for_each(|&x| inset[x] = true);
            (0..g.size()).all(|x| {
                let inv = g.left_divide(x, e);
                h.iter().all(|&y| inset[g.op(g.op(x, y), inv)])
            })
        })
        .collect();
    GroupInfo { is_group, identity, normal_subgroups: normal }
}
