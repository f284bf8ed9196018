//! Linear algebra over prime fields `F_p`.
//!
//! Subspaces are kept as reduced row-echelon bases, which makes them
//! canonical: two subspaces are equal iff their bases are.

use serde::{Deserialize, Serialize};

pub fn is_prime(p: usize) -> bool {
    p >= 2 && (2..).take_while(|d| d * d <= p).all(|d| !p.is_multiple_of(d))
}

/// `p^k = q` decomposition, if `q` is a prime power.
pub fn prime_power(q: usize) -> Option<(usize, u32)> {
    let p = (2..=q).find(|d| q.is_multiple_of(*d))?;
    let mut k = 0;
    let mut r = q;
    while r.is_multiple_of(p) {
        r /= p;
        k += 1;
    }
    (r == 1).then_some((p, k))
}

pub fn inv(a: usize, p: usize) -> usize {
    debug_assert!(!a.is_multiple_of(p));
    let mut r = 1;
    let mut b = a % p;
    let mut e = p - 2;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % p;
        }
        b = b * b % p;
        e >>= 1;
    }
    r
}

pub fn dot(a: &[usize], b: &[usize], p: usize) -> usize {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<usize>() % p
}

/// Reduces `rows` in place to reduced row-echelon form, drops zero rows,
/// and returns the pivot columns.
pub fn rref(rows: &mut Vec<Vec<usize>>, p: usize) -> Vec<usize> {
    let ncols = rows.first().map_or(0, |r| r.len());
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        let Some(k) = (r..rows.len()).find(|&k| !rows[k][c].is_multiple_of(p)) else { continue };
        rows.swap(r, k);
        let s = inv(rows[r][c] % p, p);
        rows[r].iter_mut().for_each(|v| *v = *v * s % p);
        for k in 0..rows.len() {
            if k != r && !rows[k][c].is_multiple_of(p) {
                let f = rows[k][c] % p;
                for j in 0..ncols {
                    rows[k][j] = (rows[k][j] + (p - f) * rows[r][j]) % p;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    rows.truncate(r);
    pivots
}

pub fn rank(rows: &[Vec<usize>], p: usize) -> usize {
    rref(&mut rows.to_vec(), p).len()
}

/// Solves `M z = b` for square invertible `M`.
pub fn solve(m: &[Vec<usize>], b: &[usize], p: usize) -> Option<Vec<usize>> {
    let n = m.len();
    let mut aug: Vec<Vec<usize>> = m.iter().zip(b).map(|(r, &v)| r.iter().copied().chain([v % p]).collect()).collect();
    let piv = rref(&mut aug, p);
    if piv.len() != n || piv.last() == Some(&n) {
        return None;
    }
    Some(aug.iter().map(|r| r[n]).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Subspace {
    p: usize,
    ambient: usize,
    basis: Vec<Vec<usize>>,
}

impl Subspace {
    pub fn span(p: usize, ambient: usize, vectors: &[Vec<usize>]) -> Self {
        let mut rows: Vec<Vec<usize>> = vectors.iter().map(|v| v.iter().map(|x| x % p).collect()).collect();
        assert!(rows.iter().all(|r| r.len() == ambient));
        rref(&mut rows, p);
        Subspace { p, ambient, basis: rows }
    }

    pub fn zero(p: usize, ambient: usize) -> Self {
        Subspace { p, ambient, basis: Vec::new() }
    }

    pub fn full(p: usize, ambient: usize) -> Self {
        let basis = (0..ambient).map(|i| (0..ambient).map(|j| (i == j) as usize).collect()).collect();
        Subspace { p, ambient, basis }
    }

    pub fn field(&self) -> usize {
        self.p
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<usize>] {
        &self.basis
    }

    pub fn is_full(&self) -> bool {
        self.dim() == self.ambient
    }

    pub fn contains(&self, v: &[usize]) -> bool {
        let mut rows = self.basis.clone();
        rows.push(v.to_vec());
        rank(&rows, self.p) == self.dim()
    }

    pub fn is_subspace_of(&self, other: &Subspace) -> bool {
        self.basis.iter().all(|v| other.contains(v))
    }

    pub fn sum(&self, other: &Subspace) -> Subspace {
        let mut rows = self.basis.clone();
        rows.extend(other.basis.iter().cloned());
        Subspace::span(self.p, self.ambient, &rows)
    }

    /// `{v : v·w = 0 for all w in self}`.
    pub fn orthogonal(&self) -> Subspace {
        let mut rows = self.basis.clone();
        let piv = rref(&mut rows, self.p);
        let free: Vec<usize> = (0..self.ambient).filter(|c| !piv.contains(c)).collect();
        let vecs: Vec<Vec<usize>> = free
            .iter()
            .map(|&f| {
                let mut v = vec![0; self.ambient];
                v[f] = 1;
                for (r, &pc) in piv.iter().enumerate() {
                    v[pc] = (self.p - rows[r][f]) % self.p;
                }
                v
            })
            .collect();
        Subspace::span(self.p, self.ambient, &vecs)
    }

    /// `(A⊥ + B⊥)⊥`.
    pub fn intersection(&self, other: &Subspace) -> Subspace {
        self.orthogonal().sum(&other.orthogonal()).orthogonal()
    }

    /// Image under the coordinate projection onto `coords`.
    pub fn project(&self, coords: &[usize]) -> Subspace {
        let rows: Vec<Vec<usize>> = self.basis.iter().map(|r| coords.iter().map(|&c| r[c]).collect()).collect();
        Subspace::span(self.p, coords.len(), &rows)
    }

    /// Every vector of the subspace, in lexicographic coefficient order.
    pub fn elements(&self) -> Vec<Vec<usize>> {
        let d = self.dim();
        (0..self.p.pow(d as u32))
            .map(|mut w| {
                let mut v = vec![0; self.ambient];
                for r in 0..d {
                    let c = w % self.p;
                    w /= self.p;
                    for (x, b) in v.iter_mut().zip(&self.basis[r]) {
                        *x = (*x + c * b) % self.p;
                    }
                }
                v
            })
            .collect()
    }
}

/// All subspaces of `F_p^m`, ordered by dimension then basis.
pub fn all_subspaces(p: usize, m: usize) -> Vec<Subspace> {
    let mut out = Vec::new();
    for k in 0..=m {
        for pivots in combinations(m, k) {
            // free positions: (row r, column c) with c > pivot_r and c not a pivot
            let slots: Vec<(usize, usize)> = (0..k)
                .flat_map(|r| {
                    let pv = &pivots;
                    ((pv[r] + 1)..m).filter(move |c| !pv.contains(c)).map(move |c| (r, c))
                })
                .collect();
            for w in 0..p.pow(slots.len() as u32) {
                let mut rows = vec![vec![0; m]; k];
                for (r, &c) in pivots.iter().enumerate() {
                    rows[r][c] = 1;
                }
                let mut w = w;
                for &(r, c) in &slots {
                    rows[r][c] = w % p;
                    w /= p;
                }
                out.push(Subspace { p, ambient: m, basis: rows });
            }
        }
    }
    out
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}
