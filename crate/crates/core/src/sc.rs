//! Encoding recursion and the successive-cancellation likelihood kernel.
//!
//! Branch `i` of a depth-`n` code carries sign `s_k` in bit `k-1` of `i`.
//! The encoder splits on bit 0 first:
//!
//! ```text
//! Enc(u) = u                                  if N = 1
//! w- = Enc(u[even]),  w+ = Enc(u[odd])
//! x[j] = w-[j] * w+[j],  x[j + N/2] = w+[j]
//! ```
//!
//! so that `x[j] = u1 * u2`, `x[j+N/2] = u2` matches the minus/plus transform
//! pair at every level. Decoding follows the same recursion, which visits
//! branches in bit-reversed index order (`s_1` most significant).

use crate::algebra::Quasigroup;

/// Codeword for the branch symbols `u` (indexed by branch).
pub fn encode_symbols(g: &Quasigroup, u: &[usize]) -> Vec<usize> {
    assert!(u.len().is_power_of_two());
    let mut x = vec![0; u.len()];
    encode_into(g, u, 0, 1, &mut x);
    x
}

fn encode_into(g: &Quasigroup, u: &[usize], base: usize, stride: usize, out: &mut [usize]) {
    let m = out.len();
    if m == 1 {
        out[0] = u[base];
        return;
    }
    let h = m / 2;
    let mut wm = vec![0; h];
    encode_into(g, u, base, stride * 2, &mut wm);
    let (lo, hi) = out.split_at_mut(h);
    encode_into(g, u, base + stride, stride * 2, hi);
    for j in 0..h {
        lo[j] = g.op(wm[j], hi[j]);
    }
}

/// Inverse of [`encode_symbols`], peeling each level with right division.
pub fn invert_symbols(g: &Quasigroup, x: &[usize]) -> Vec<usize> {
    assert!(x.len().is_power_of_two());
    let mut u = vec![0; x.len()];
    invert_into(g, x, 0, 1, &mut u);
    u
}

fn invert_into(g: &Quasigroup, x: &[usize], base: usize, stride: usize, u: &mut [usize]) {
    if x.len() == 1 {
        u[base] = x[0];
        return;
    }
    let h = x.len() / 2;
    let wp = &x[h..];
    let wm: Vec<usize> = (0..h).map(|j| g.right_divide(x[j], wp[j])).collect();
    invert_into(g, &wm, base, stride * 2, u);
    invert_into(g, wp, base + stride, stride * 2, u);
}

/// Branch indices in the order successive cancellation visits them.
pub fn decode_order(n: u32) -> Vec<usize> {
    let size = 1usize << n;
    (0..size).map(|r| reverse_bits(r, n)).collect()
}

/// Position of `index` in [`decode_order`].
pub fn decode_rank(index: usize, n: u32) -> usize {
    reverse_bits(index, n)
}

fn reverse_bits(v: usize, n: u32) -> usize {
    if n == 0 {
        0
    } else {
        v.reverse_bits() >> (usize::BITS - n)
    }
}

/// Reusable buffers for one code length.
pub struct ScWorkspace {
    q: usize,
    n: u32,
    /// `lik[d]` holds `N >> d` likelihood vectors of length `q`.
    lik: Vec<Vec<f64>>,
    /// `x[d]` holds the re-encoded partial codeword of the current subtree.
    x: Vec<Vec<usize>>,
    wm: Vec<Vec<usize>>,
    post: Vec<f64>,
    u: Vec<usize>,
}

impl ScWorkspace {
    pub fn new(q: usize, n: u32) -> Self {
        let size = 1usize << n;
        ScWorkspace {
            q,
            n,
            lik: (0..=n).map(|d| vec![0.0; (size >> d) * q]).collect(),
            x: (0..=n).map(|d| vec![0; size >> d]).collect(),
            wm: (0..=n).map(|d| vec![0; (size >> d) / 2]).collect(),
            post: vec![0.0; q],
            u: vec![0; size],
        }
    }

    pub fn len(&self) -> usize {
        1 << self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Mutable view of the channel likelihoods: entry `j*q + v` is `P(y_j | v)`.
    pub fn likelihoods_mut(&mut self) -> &mut [f64] {
        &mut self.lik[0]
    }

    /// Runs the recursion. At each leaf `decide(branch, posterior)` returns the
    /// symbol to fix for that branch; the posterior is normalised.
    pub fn run(&mut self, g: &Quasigroup, decide: &mut dyn FnMut(usize, &[f64]) -> usize) {
        debug_assert_eq!(g.size(), self.q);
        self.rec(g, 0, 0, 1, decide);
    }

    /// Branch symbols fixed by the last [`run`](Self::run).
    pub fn decisions(&self) -> &[usize] {
        &self.u
    }

    /// Codeword re-encoded from the last run's decisions.
    pub fn codeword(&self) -> &[usize] {
        &self.x[0]
    }

    fn rec(
        &mut self,
        g: &Quasigroup,
        d: usize,
        base: usize,
        stride: usize,
        decide: &mut dyn FnMut(usize, &[f64]) -> usize,
    ) {
        let q = self.q;
        let m = self.x[d].len();
        if m == 1 {
            let l = &self.lik[d];
            let s: f64 = l.iter().sum();
            for v in 0..q {
                self.post[v] = if s > 0.0 { l[v] / s } else { 1.0 / q as f64 };
            }
            let v = decide(base, &self.post);
            self.u[base] = v;
            self.x[d][0] = v;
            return;
        }
        let h = m / 2;
        {
            let (lo, hi) = self.lik.split_at_mut(d + 1);
            let (cur, next) = (&lo[d], &mut hi[0]);
            for j in 0..h {
                let l1 = &cur[j * q..(j + 1) * q];
                let l2 = &cur[(j + h) * q..(j + h + 1) * q];
                let out = &mut next[j * q..(j + 1) * q];
                for a in 0..q {
                    let mut acc = 0.0;
                    for b in 0..q {
                        acc += l1[g.op(a, b)] * l2[b];
                    }
                    out[a] = acc;
                }
                normalise(out);
            }
        }
        self.rec(g, d + 1, base, stride * 2, decide);
        let mut wm = std::mem::take(&mut self.wm[d]);
        wm.copy_from_slice(&self.x[d + 1]);
        {
            let (lo, hi) = self.lik.split_at_mut(d + 1);
            let (cur, next) = (&lo[d], &mut hi[0]);
            for j in 0..h {
                let l1 = &cur[j * q..(j + 1) * q];
                let l2 = &cur[(j + h) * q..(j + h + 1) * q];
                let out = &mut next[j * q..(j + 1) * q];
                let a = wm[j];
                for b in 0..q {
                    out[b] = l1[g.op(a, b)] * l2[b];
                }
                normalise(out);
            }
        }
        self.rec(g, d + 1, base + stride, stride * 2, decide);
        let (lo, hi) = self.x.split_at_mut(d + 1);
        let (cur, wp) = (&mut lo[d], &hi[0]);
        for j in 0..h {
            cur[j] = g.op(wm[j], wp[j]);
            cur[j + h] = wp[j];
        }
        self.wm[d] = wm;
    }
}

fn normalise(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        let inv = 1.0 / s;
        v.iter_mut().for_each(|x| *x *= inv);
    }
}
