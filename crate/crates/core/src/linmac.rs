//! Combinations of linear channels.
//!
//! A mixture `Σ p_k C_{V_k}` reveals `A_kᵀx` with probability `p_k`, where the
//! columns of `A_k` span `V_k ⊆ F_q^m`. Everything here is closed form:
//! `I[S] = Σ p_k dim proj_S(V_k)` in base-`q` units, the minus transform
//! intersects pairs of subspaces and the plus transform adds them.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dmc::Dmc;
use crate::gf::{all_subspaces, is_prime, Subspace};
use crate::macpolar::{MacChannel, MacError};
use crate::polarize::Sign;

pub const DEFAULT_CLOSURE_LIMIT: usize = 4096;
pub const WEIGHT_TOLERANCE: f64 = 1e-12;
pub const MAX_DMC_ALPHABET: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinmacError {
    #[error("subspaces live in different ambient spaces")]
    AmbientMismatch,
    #[error("field size {0} is not prime")]
    NotPrime(usize),
    #[error("weights must be positive and sum to 1 (sum is {0})")]
    BadWeights(f64),
    #[error("mixture has no components")]
    Empty,
    #[error("closure exceeds {limit} subspaces")]
    LatticeTooLarge { limit: usize },
    #[error("channel alphabet {0} is too large")]
    AlphabetTooLarge(usize),
    #[error("subset mask {0:#b} is not a nonempty subset of the users")]
    BadSubset(usize),
    #[error("malformed mixture: {0}")]
    Malformed(String),
    #[error(transparent)]
    Mac(#[from] MacError),
}

fn same_space(a: &Subspace, b: &Subspace) -> Result<(), LinmacError> {
    if a.field() != b.field() || a.ambient() != b.ambient() {
        return Err(LinmacError::AmbientMismatch);
    }
    Ok(())
}

pub fn intersect(a: &Subspace, b: &Subspace) -> Result<Subspace, LinmacError> {
    same_space(a, b)?;
    Ok(a.intersection(b))
}

pub fn sum(a: &Subspace, b: &Subspace) -> Result<Subspace, LinmacError> {
    same_space(a, b)?;
    Ok(a.sum(b))
}

/// Coordinates of a user subset mask (bit `k` = user `k`), ascending.
pub fn mask_coords(mask: usize, m: usize) -> Vec<usize> {
    (0..m).filter(|k| mask >> k & 1 == 1).collect()
}

/// `proj_S(V)` as a subspace of `F_q^S`.
pub fn proj(v: &Subspace, mask: usize) -> Result<Subspace, LinmacError> {
    if mask == 0 || mask >> v.ambient() != 0 {
        return Err(LinmacError::BadSubset(mask));
    }
    Ok(v.project(&mask_coords(mask, v.ambient())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureFile", into = "MixtureFile")]
pub struct LinearMixture {
    q: usize,
    m: usize,
    components: Vec<(f64, Subspace)>,
}

/// `{"q": 2, "m": 2, "components": [{"p": 0.5, "basis": [[1,0]]}, …]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureFile {
    pub q: usize,
    pub m: usize,
    pub components: Vec<ComponentFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentFile {
    pub p: f64,
    pub basis: Vec<Vec<usize>>,
}

impl TryFrom<MixtureFile> for LinearMixture {
    type Error = LinmacError;
    fn try_from(f: MixtureFile) -> Result<Self, LinmacError> {
        if !is_prime(f.q) {
            return Err(LinmacError::NotPrime(f.q));
        }
        let mut comps = Vec::new();
        for c in f.components {
            if c.basis.iter().any(|r| r.len() != f.m || r.iter().any(|&v| v >= f.q)) {
                return Err(LinmacError::Malformed("basis vector does not fit F_q^m".into()));
            }
            comps.push((c.p, Subspace::span(f.q, f.m, &c.basis)));
        }
        LinearMixture::new(f.q, f.m, comps)
    }
}

impl From<LinearMixture> for MixtureFile {
    fn from(x: LinearMixture) -> Self {
        MixtureFile {
            q: x.q,
            m: x.m,
            components: x.components.into_iter().map(|(p, v)| ComponentFile { p, basis: v.basis().to_vec() }).collect(),
        }
    }
}

impl LinearMixture {
    /// Merges duplicate subspaces and sorts components by subspace.
    pub fn new(q: usize, m: usize, components: Vec<(f64, Subspace)>) -> Result<Self, LinmacError> {
        if components.is_empty() {
            return Err(LinmacError::Empty);
        }
        let mut merged: BTreeMap<Subspace, f64> = BTreeMap::new();
        let mut total = 0.0;
        for (p, v) in components {
            if v.field() != q || v.ambient() != m {
                return Err(LinmacError::AmbientMismatch);
            }
            if !(p > 0.0 && p <= 1.0 + WEIGHT_TOLERANCE) {
                return Err(LinmacError::BadWeights(p));
            }
            total += p;
            *merged.entry(v).or_default() += p;
        }
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(LinmacError::BadWeights(total));
        }
        Ok(LinearMixture { q, m, components: merged.into_iter().map(|(v, p)| (p, v)).collect() })
    }

    pub fn pure(v: Subspace) -> Self {
        LinearMixture { q: v.field(), m: v.ambient(), components: vec![(1.0, v)] }
    }

    pub fn field(&self) -> usize {
        self.q
    }

    pub fn users(&self) -> usize {
        self.m
    }

    pub fn components(&self) -> &[(f64, Subspace)] {
        &self.components
    }

    pub fn subspaces(&self) -> Vec<Subspace> {
        self.components.iter().map(|(_, v)| v.clone()).collect()
    }

    pub fn weight_of(&self, v: &Subspace) -> f64 {
        self.components.iter().find(|(_, w)| w == v).map_or(0.0, |(p, _)| *p)
    }

    fn combine(&self, op: impl Fn(&Subspace, &Subspace) -> Subspace) -> LinearMixture {
        let mut merged: BTreeMap<Subspace, f64> = BTreeMap::new();
        for (p1, v1) in &self.components {
            for (p2, v2) in &self.components {
                *merged.entry(op(v1, v2)).or_default() += p1 * p2;
            }
        }
        LinearMixture { q: self.q, m: self.m, components: merged.into_iter().map(|(v, p)| (p, v)).collect() }
    }
}

/// `I[S] = Σ p_k dim proj_S(V_k)`, in base-`q` units.
pub fn lin_rate_region(ch: &LinearMixture, mask: usize) -> Result<f64, LinmacError> {
    ch.components.iter().map(|(p, v)| Ok(p * proj(v, mask)?.dim() as f64)).sum()
}

pub fn lin_minus(ch: &LinearMixture) -> LinearMixture {
    ch.combine(|a, b| a.intersection(b))
}

pub fn lin_plus(ch: &LinearMixture) -> LinearMixture {
    ch.combine(|a, b| a.sum(b))
}

pub fn lin_transform(ch: &LinearMixture, s: Sign) -> LinearMixture {
    match s {
        Sign::Minus => lin_minus(ch),
        Sign::Plus => lin_plus(ch),
    }
}

/// Least superset closed under pairwise `∩` and `+`, sorted.
pub fn closure(set: &[Subspace], limit: usize) -> Result<Vec<Subspace>, LinmacError> {
    let Some(first) = set.first() else { return Err(LinmacError::Empty) };
    for v in set {
        same_space(first, v)?;
    }
    let mut all: BTreeSet<Subspace> = set.iter().cloned().collect();
    let mut frontier: Vec<Subspace> = all.iter().cloned().collect();
    while !frontier.is_empty() {
        let mut fresh = Vec::new();
        let current: Vec<Subspace> = all.iter().cloned().collect();
        for a in &frontier {
            for b in &current {
                for c in [a.intersection(b), a.sum(b)] {
                    if !all.contains(&c) {
                        all.insert(c.clone());
                        fresh.push(c);
                        if all.len() > limit {
                            return Err(LinmacError::LatticeTooLarge { limit });
                        }
                    }
                }
            }
        }
        frontier = fresh;
    }
    Ok(all.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Consistency {
    pub consistent: bool,
    /// First pair in the closure with `proj_S(V₁∩V₂) ≠ proj_S(V₁) ∩ proj_S(V₂)`.
    pub witness: Option<(Subspace, Subspace)>,
}

/// Whether `I[S]` survives polarization: projection onto `S` must commute
/// with intersection on the whole closure.
pub fn is_consistent(set: &[Subspace], mask: usize, limit: usize) -> Result<Consistency, LinmacError> {
    let cl = closure(set, limit)?;
    let projected: Vec<Subspace> = cl.iter().map(|v| proj(v, mask)).collect::<Result<_, _>>()?;
    for (i, a) in cl.iter().enumerate() {
        for (j, b) in cl.iter().enumerate().skip(i) {
            if proj(&a.intersection(b), mask)? != projected[i].intersection(&projected[j]) {
                return Ok(Consistency { consistent: false, witness: Some((a.clone(), b.clone())) });
            }
        }
    }
    Ok(Consistency { consistent: true, witness: None })
}

/// A subspace `V_S` with `dim V_S = |S|`, `proj_S(V_S) = F_q^S` and
/// `proj_S(V_S ∩ V) = proj_S(V)` for every `V` in the set. Presence is
/// sufficient for `I[S]` to be preserved; absence proves nothing.
pub fn sufficient_preservation(set: &[Subspace], mask: usize) -> Result<Option<Subspace>, LinmacError> {
    let Some(first) = set.first() else { return Err(LinmacError::Empty) };
    let (q, m) = (first.field(), first.ambient());
    let k = mask.count_ones() as usize;
    let targets: Vec<Subspace> = set.iter().map(|v| proj(v, mask)).collect::<Result<_, _>>()?;
    for cand in all_subspaces(q, m).into_iter().filter(|c| c.dim() == k) {
        if !proj(&cand, mask)?.is_full() {
            continue;
        }
        let mut ok = true;
        for (v, t) in set.iter().zip(&targets) {
            same_space(&cand, v)?;
            if &proj(&cand.intersection(v), mask)? != t {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(Some(cand));
        }
    }
    Ok(None)
}

/// Explicit MAC: output `(k, A_kᵀx)` with probability `p_k`, where the columns
/// of `A_k` are the echelon basis of `V_k`.
pub fn to_dmc(ch: &LinearMixture) -> Result<MacChannel, LinmacError> {
    let (q, m) = (ch.q, ch.m);
    let inputs =
        q.checked_pow(m as u32).filter(|&n| n <= MAX_DMC_ALPHABET).ok_or(LinmacError::AlphabetTooLarge(usize::MAX))?;
    let outputs: usize = ch.components.iter().map(|(_, v)| q.pow(v.dim() as u32)).sum();
    if outputs > MAX_DMC_ALPHABET {
        return Err(LinmacError::AlphabetTooLarge(outputs));
    }
    let users = vec![q; m];
    let mut rows = vec![vec![0.0; outputs]; inputs];
    for (x, row) in rows.iter_mut().enumerate() {
        let d = crate::macpolar::digits_of(&users, x);
        let mut off = 0;
        for (p, v) in &ch.components {
            let y = v.basis().iter().fold(0, |acc, b| acc * q + crate::gf::dot(b, &d, q));
            row[off + y] += p;
            off += q.pow(v.dim() as u32);
        }
    }
    Ok(MacChannel::new(users, Dmc::from_rows(&rows).map_err(MacError::from)?)?)
}

/// The five subspaces of `F_2^2` in the order `V₀ = {0}`, `V₁ = ⟨(1,0)⟩`,
/// `V₂ = ⟨(0,1)⟩`, `V₃ = ⟨(1,1)⟩`, `V₄ = F_2^2`.
pub fn binary_subspaces() -> [Subspace; 5] {
    [
        Subspace::zero(2, 2),
        Subspace::span(2, 2, &[vec![1, 0]]),
        Subspace::span(2, 2, &[vec![0, 1]]),
        Subspace::span(2, 2, &[vec![1, 1]]),
        Subspace::full(2, 2),
    ]
}

/// Weights `(p₀,…,p₄)` on [`binary_subspaces`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryState(pub [f64; 5]);

impl BinaryState {
    pub fn new(p: [f64; 5]) -> Result<Self, LinmacError> {
        let s: f64 = p.iter().sum();
        if p.iter().any(|&v| !(v >= 0.0)) || (s - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(LinmacError::BadWeights(s));
        }
        Ok(BinaryState(p))
    }

    pub fn from_mixture(ch: &LinearMixture) -> Result<Self, LinmacError> {
        if ch.q != 2 || ch.m != 2 {
            return Err(LinmacError::AmbientMismatch);
        }
        let vs = binary_subspaces();
        Ok(BinaryState(std::array::from_fn(|k| ch.weight_of(&vs[k]))))
    }

    pub fn to_mixture(&self) -> LinearMixture {
        let comps = binary_subspaces().into_iter().zip(self.0).filter(|(_, p)| *p > 0.0).map(|(v, p)| (p, v)).collect();
        let mut m = LinearMixture::new(2, 2, comps).expect("valid state");
        // renormalise away rounding drift
        let s: f64 = m.components.iter().map(|c| c.0).sum();
        m.components.iter_mut().for_each(|c| c.0 /= s);
        m
    }

    /// `I[{1}] = p₁ + p₃ + p₄`.
    pub fn i1(&self) -> f64 {
        self.0[1] + self.0[3] + self.0[4]
    }

    /// `I[{2}] = p₂ + p₃ + p₄`.
    pub fn i2(&self) -> f64 {
        self.0[2] + self.0[3] + self.0[4]
    }

    /// `I[{1,2}] = p₁ + p₂ + p₃ + 2p₄`.
    pub fn isum(&self) -> f64 {
        self.0[1] + self.0[2] + self.0[3] + 2.0 * self.0[4]
    }
}

/// One transform of the binary state, renormalised.
pub fn binary_step(st: &BinaryState, s: Sign) -> BinaryState {
    let [p0, p1, p2, p3, p4] = st.0;
    let cross = 2.0 * (p1 * p2 + p2 * p3 + p1 * p3);
    let mut next = match s {
        Sign::Minus => [
            p0 * p0 + 2.0 * p0 * (p1 + p2 + p3 + p4) + cross,
            p1 * p1 + 2.0 * p1 * p4,
            p2 * p2 + 2.0 * p2 * p4,
            p3 * p3 + 2.0 * p3 * p4,
            p4 * p4,
        ],
        Sign::Plus => [
            p0 * p0,
            p1 * p1 + 2.0 * p1 * p0,
            p2 * p2 + 2.0 * p2 * p0,
            p3 * p3 + 2.0 * p3 * p0,
            p4 * p4 + 2.0 * p4 * (p0 + p1 + p2 + p3) + cross,
        ],
    };
    let total: f64 = next.iter().sum();
    next.iter_mut().for_each(|v| *v /= total);
    BinaryState(next)
}

/// Log-grid resolution used by [`binary_evolve`] unless told otherwise.
pub const DEFAULT_EVOLVE_RESOLUTION: f64 = 0.3;
/// Coordinates below this share one grid cell.
pub const EVOLVE_FLOOR: f64 = 1e-12;

/// `p^{(k)}`, the average of `p^s` over all `2^k` sign sequences, for `k = 0..=n`.
///
/// States of one level are merged when every coordinate has the same
/// `round(ln p_k / resolution)` (coordinates under [`EVOLVE_FLOOR`] count as
/// one cell), and the merged state is the weight average. Level averages are
/// therefore exact at the merge; the only error comes from applying the
/// quadratic step to an average, and a relative grid keeps that error
/// proportional to each coordinate. `resolution = 0` merges only identical
/// states.
pub fn binary_evolve(st: &BinaryState, n: u32, resolution: f64) -> Vec<BinaryState> {
    let mut level: Vec<(f64, BinaryState)> = vec![(1.0, *st)];
    let mut out = vec![*st];
    for _ in 0..n {
        let mut cells: HashMap<[i64; 5], (f64, [f64; 5])> = HashMap::with_capacity(level.len() * 2);
        let mut order: Vec<[i64; 5]> = Vec::new();
        for (w, s) in &level {
            for sign in [Sign::Minus, Sign::Plus] {
                let c = binary_step(s, sign);
                let key: [i64; 5] = std::array::from_fn(|k| {
                    let v = c.0[k];
                    if resolution == 0.0 {
                        v.to_bits() as i64
                    } else if v < EVOLVE_FLOOR {
                        i64::MIN
                    } else {
                        (v.ln() / resolution).round() as i64
                    }
                });
                let e = cells.entry(key).or_insert_with(|| {
                    order.push(key);
                    (0.0, [0.0; 5])
                });
                e.0 += w / 2.0;
                for k in 0..5 {
                    e.1[k] += w / 2.0 * c.0[k];
                }
            }
        }
        level = order
            .iter()
            .map(|key| {
                let (w, acc) = cells[key];
                (w, BinaryState(std::array::from_fn(|k| acc[k] / w)))
            })
            .collect();
        let mut avg = [0.0; 5];
        for (w, s) in &level {
            for k in 0..5 {
                avg[k] += w * s.0[k];
            }
        }
        out.push(BinaryState(avg));
    }
    out
}

pub const LOSS_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LossReport {
    pub n: u32,
    pub trajectory: Vec<BinaryState>,
    pub i1: f64,
    pub i2: f64,
    pub isum: f64,
    /// `p₃ ≤ max(p₁, p₂)` at the start, which guarantees maximal loss.
    pub analytic_loss: bool,
    /// `p₃^{(n)} < 1e-6`.
    pub maximal_loss_detected: bool,
    /// `|p^{(n)} − p^{(n−1)}|_∞ < 1e-9`.
    pub converged: bool,
}

pub fn loss_report(st: &BinaryState, n: u32, resolution: f64) -> LossReport {
    let trajectory = binary_evolve(st, n, resolution);
    let last = *trajectory.last().expect("level 0 present");
    let converged = n > 0 && {
        let prev = trajectory[trajectory.len() - 2];
        (0..5).all(|k| (last.0[k] - prev.0[k]).abs() < 1e-9)
    };
    LossReport {
        n,
        i1: last.i1(),
        i2: last.i2(),
        isum: last.isum(),
        analytic_loss: st.0[3] <= st.0[1].max(st.0[2]),
        maximal_loss_detected: last.0[3] < LOSS_THRESHOLD,
        converged,
        trajectory,
    }
}
