//! Acceptance suite: one line per criterion with the measured values, the
//! pinned tolerance and the wall time against its budget.
//!
//! Criteria listed in `KNOWN_RED` are reported as FAIL when they fail but do
//! not change the exit status, so `cargo test` stays usable. Set
//! `POLARQ_ACCEPTANCE_STRICT=1` to make every failure fatal.

mod common;

use std::time::{Duration, Instant};

use common::*;
use polarq::algebra::{partition_product, Division, Quasigroup};
use polarq::dmc::*;
use polarq::linmac::*;
use polarq::macpolar::{mac_minus, mac_plus, rate_region, MacChannel};
use polarq::polarcode::{construct_code, sc_decode, simulate, ConstructOptions};
use polarq::polarize::*;
use polarq::sc::{decode_order, encode_symbols};
use rand::seq::SliceRandom;
use rand::Rng;

/// Criteria that fail for reasons recorded in the decisions ledger.
const KNOWN_RED: &[u32] = &[10];

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// A random Latin square isotopic to `Z_q` or, for `q = 4`, to `Z_2²`.
fn random_quasigroup<R: Rng>(r: &mut R, q: usize) -> Quasigroup {
    let base = if q == 4 && r.gen_bool(0.5) { Quasigroup::xor(2) } else { Quasigroup::cyclic(q) };
    let mut perms: Vec<Vec<usize>> = (0..3).map(|_| (0..q).collect()).collect();
    perms.iter_mut().for_each(|p| p.shuffle(r));
    let rows: Vec<Vec<usize>> =
        (0..q).map(|i| (0..q).map(|j| perms[2][base.op(perms[0][i], perms[1][j])]).collect()).collect();
    Quasigroup::from_table(&rows).unwrap()
}

fn duality() -> Outcome {
    let mut r = rng(1001);
    let (mut worst_sum, mut worst_order) = (0.0f64, f64::NEG_INFINITY);
    for _ in 0..100 {
        let q = r.gen_range(2..=4);
        let ny = r.gen_range(2..=5);
        let p = random_channel(&mut r, q, ny);
        let i = mutual_information(&p);
        for _ in 0..5 {
            let g = random_quasigroup(&mut r, q);
            let im = mutual_information(&minus_transform(&p, &g).unwrap());
            let ip = mutual_information(&plus_transform(&p, &g).unwrap());
            worst_sum = worst_sum.max((im + ip - 2.0 * i).abs());
            worst_order = worst_order.max(im - i).max(i - ip);
        }
    }
    ensure(
        worst_sum < 1e-9 && worst_order <= 1e-12,
        format!("max|I-+I+-2I| = {worst_sum:.2e} (< 1e-9), max order violation = {worst_order:.2e} (<= 1e-12)"),
    )
}

fn bec_oracle() -> Outcome {
    let g = Quasigroup::xor(1);
    let mut worst = 0.0f64;
    let mut count = 0;
    for k in 1..=9 {
        let eps = k as f64 / 10.0;
        let p = Dmc::bec(eps);
        for len in 0..=4u32 {
            for idx in 0..1u64 << len {
                let s = SignSequence::new(len, idx);
                let e = s.signs().iter().fold(eps, |e, sg| match sg {
                    Sign::Minus => 2.0 * e - e * e,
                    Sign::Plus => e * e,
                });
                let ch = polarize_path(&p, &g, s, 1 << 20).unwrap();
                worst = worst.max((mutual_information(&ch) - (1.0 - e)).abs()).max((bhattacharyya(&ch) - e).abs());
                count += 1;
            }
        }
    }
    ensure(worst < 1e-9, format!("{count} (eps, s) pairs, max deviation in I and Z = {worst:.2e} (< 1e-9)"))
}

fn bhattacharyya_bound() -> Outcome {
    let mut r = rng(1003);
    let mut slack = f64::INFINITY;
    for _ in 0..200 {
        let q = r.gen_range(2..=5);
        let ny = r.gen_range(2..=6);
        let p = random_channel(&mut r, q, ny);
        slack = slack.min(q as f64 * bhattacharyya(&p) + 1e-12 - ml_error_probability(&p));
    }
    ensure(slack >= 0.0, format!("min(|X|Z + 1e-12 - Pe) = {slack:.3e} (>= 0)"))
}

fn projected_identities() -> Outcome {
    let g = Quasigroup::cyclic(4);
    let parts = candidate_partitions(&g).unwrap();
    let hd = g.derived(Division::RightDiv);
    let mut r = rng(1004);
    let (mut checks, mut bad_equiv, mut bad_agg) = (0, 0, 0);
    for _ in 0..50 {
        let ny = r.gen_range(2..=4);
        let p = random_channel(&mut r, 4, ny);
        let minus = minus_transform(&p, &g).unwrap();
        for h in &parts {
            let (ph_minus, _) = projected_transforms(&p, h, &g).unwrap();
            let h_div = partition_product(&hd, h.partition()).unwrap();
            if !channels_equivalent(&ph_minus, &project_channel(&minus, &h_div).unwrap(), 1e-9) {
                bad_equiv += 1;
            }
            if !degradation_aggregation_check(&p, h, &g, 1e-9).unwrap() {
                bad_agg += 1;
            }
            checks += 1;
        }
    }
    ensure(
        bad_equiv == 0 && bad_agg == 0,
        format!("{checks} (P, H) pairs over {} partitions, equivalence failures {bad_equiv}, aggregation failures {bad_agg} (tol 1e-9)", parts.len()),
    )
}

/// A 4-ary symmetric channel with error 0.3 mixed 20/80 with a random channel.
fn perturbed_channel() -> Dmc {
    let mut r = rng(1005);
    let noise = random_rows(&mut r, 4, 4);
    let rows: Vec<Vec<f64>> =
        (0..4).map(|x| (0..4).map(|y| 0.8 * if x == y { 0.7 } else { 0.1 } + 0.2 * noise[x][y]).collect()).collect();
    Dmc::from_rows(&rows).unwrap()
}

fn survey_fractions() -> Outcome {
    let g = Quasigroup::twisted(2);
    let p = perturbed_channel();
    let mut fractions = Vec::new();
    for n in [4u32, 8, 12] {
        let mut cfg = SurveyConfig::new(n, SurveyMode::MonteCarlo { samples: 10_000 });
        cfg.delta = 0.15;
        cfg.branch_sample = Some(200);
        cfg.seed = 5;
        fractions.push(survey(&p, &g, &cfg).unwrap().classified_fraction);
    }
    let monotone = fractions.windows(2).all(|w| w[0] <= w[1]);
    ensure(
        fractions[2] >= 0.85 && monotone,
        format!(
            "I(P) = {:.4}, classified fraction n=4,8,12: {:.3}, {:.3}, {:.3} (>= 0.85 at n=12, nondecreasing)",
            mutual_information(&p),
            fractions[0],
            fractions[1],
            fractions[2]
        ),
    )
}

/// Successive decisions by summing the joint over all 16 input words.
fn brute_sc(g: &Quasigroup, p: &Dmc, y: &[usize]) -> Vec<usize> {
    let mut fixed = vec![0usize; 4];
    for (rank, &i) in decode_order(2).iter().enumerate() {
        let prior = &decode_order(2)[..rank];
        let mut post = [0.0; 2];
        for w in 0..16usize {
            let u: Vec<usize> = (0..4).map(|k| w >> k & 1).collect();
            if prior.iter().any(|&b| u[b] != fixed[b]) {
                continue;
            }
            let x = encode_symbols(g, &u);
            post[u[i]] += x.iter().zip(y).map(|(&a, &b)| p.prob(a, b)).product::<f64>();
        }
        fixed[i] = usize::from(post[1] > post[0]);
    }
    fixed
}

fn sc_oracle() -> Outcome {
    let g = Quasigroup::xor(1);
    let code = construct_code(&Dmc::identity(2), &g, 2, &ConstructOptions::default()).unwrap();
    let mut r = rng(1006);
    let mut mismatches = 0;
    for _ in 0..500 {
        let p = random_channel(&mut r, 2, 3);
        let sampler = ChannelSampler::new(&p);
        let u: Vec<usize> = (0..4).map(|_| r.gen_range(0..2)).collect();
        let y: Vec<usize> = encode_symbols(&g, &u).iter().map(|&x| sampler.sample(x, &mut r)).collect();
        if sc_decode(&code, &y, &p).unwrap() != brute_sc(&g, &p, &y) {
            mismatches += 1;
        }
    }
    ensure(mismatches == 0, format!("500 trials, {mismatches} mismatches (exact equality)"))
}

fn code_performance() -> Outcome {
    let g = Quasigroup::xor(1);
    let p = Dmc::bec(0.4);
    let code = construct_code(&p, &g, 8, &ConstructOptions::default()).unwrap();
    let s = simulate(&code, &p, 2000, 7).unwrap();
    let bound = code.union_bound();
    ensure(
        code.rate_bits >= 0.30 && s.block_error_rate < 0.05 && s.block_error_rate <= bound + 3.0 * s.stderr,
        format!(
            "rate = {:.4} (>= 0.30), BLER = {:.4} +- {:.4} (< 0.05, <= union bound {:.4} + 3 sigma)",
            code.rate_bits, s.block_error_rate, s.stderr, bound
        ),
    )
}

fn mac_martingale() -> Outcome {
    let mut r = rng(1008);
    let (mut worst_super, mut worst_eq) = (f64::NEG_INFINITY, 0.0f64);
    for _ in 0..100 {
        let ny = r.gen_range(2..=5);
        let p = MacChannel::new(vec![2, 2], random_channel(&mut r, 4, ny)).unwrap();
        let base = rate_region(&p).unwrap();
        let m = rate_region(&mac_minus(&p).unwrap()).unwrap();
        let pl = rate_region(&mac_plus(&p).unwrap()).unwrap();
        for s in 1..=3 {
            worst_super = worst_super.max(m.get(s) + pl.get(s) - 2.0 * base.get(s));
        }
        worst_eq = worst_eq.max((m.get(3) + pl.get(3) - 2.0 * base.get(3)).abs());
    }
    ensure(
        worst_super <= 1e-9 && worst_eq < 1e-9,
        format!("max(I-[S]+I+[S]-2I[S]) = {worst_super:.2e} (<= 1e-9), sum-rate defect = {worst_eq:.2e} (< 1e-9)"),
    )
}

fn region_gap(mac: &MacChannel, lin: &LinearMixture) -> f64 {
    let region = rate_region(mac).unwrap();
    (1..4).map(|s| (region.get(s) - lin_rate_region(lin, s).unwrap()).abs()).fold(0.0, f64::max)
}

fn linmac_oracle() -> Outcome {
    let all = polarq::gf::all_subspaces(2, 2);
    let mut r = rng(1009);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let k = r.gen_range(1..=4);
        let picks: Vec<_> = all.choose_multiple(&mut r, k).cloned().collect();
        let w: Vec<f64> = (0..k).map(|_| r.gen::<f64>() + 0.05).collect();
        let total: f64 = w.iter().sum();
        let lin = LinearMixture::new(2, 2, w.iter().map(|x| x / total).zip(picks).collect()).unwrap();
        let mac = to_dmc(&lin).unwrap();
        worst = worst.max(region_gap(&mac, &lin));
        for s1 in [Sign::Minus, Sign::Plus] {
            let l1 = lin_transform(&lin, s1);
            let m1 = if s1 == Sign::Minus { mac_minus(&mac) } else { mac_plus(&mac) }.unwrap();
            worst = worst.max(region_gap(&m1, &l1));
            for s2 in [Sign::Minus, Sign::Plus] {
                let l2 = lin_transform(&l1, s2);
                let m2 = if s2 == Sign::Minus { mac_minus(&m1) } else { mac_plus(&m1) }.unwrap();
                worst = worst.max(region_gap(&m2, &l2));
            }
        }
    }
    ensure(worst < 1e-9, format!("50 mixtures, depth <= 2, max |I[S] gap| = {worst:.2e} (< 1e-9)"))
}

/// All grid states with step 0.1 and `p₃ ≤ max(p₁,p₂)`.
fn loss_grid() -> Vec<[f64; 5]> {
    let mut out = Vec::new();
    for a in 0..=10 {
        for b in 0..=10 - a {
            for c in 0..=10 - a - b {
                for d in 0..=10 - a - b - c {
                    let e = 10 - a - b - c - d;
                    if d <= b.max(c) {
                        out.push([a, b, c, d, e].map(|v| v as f64 / 10.0));
                    }
                }
            }
        }
    }
    out
}

/// Whether every strict initial inequality among `(p₁,p₂,p₃)` survives the
/// whole tree to `depth`. Pairs that underflow to zero together count as kept.
fn order_kept(st: &BinaryState, pairs: &[(usize, usize)], depth: u32) -> bool {
    pairs.iter().all(|&(a, b)| st.0[a] < st.0[b] || (st.0[a] == 0.0 && st.0[b] == 0.0))
        && (depth == 0 || [Sign::Minus, Sign::Plus].iter().all(|&s| order_kept(&binary_step(st, s), pairs, depth - 1)))
}

fn loss_dynamics() -> Outcome {
    let grid = loss_grid();
    let (mut not_killed, mut ties_not_killed, mut drift, mut monotone_bad, mut order_bad) = (0, 0, 0.0f64, 0, 0);
    let mut worst_p3 = 0.0f64;
    for p in &grid {
        let st = BinaryState::new(*p).unwrap();
        let traj = binary_evolve(&st, 40, DEFAULT_EVOLVE_RESOLUTION);
        let p3 = traj[40].0[3];
        if !(p3 < LOSS_THRESHOLD) {
            not_killed += 1;
            worst_p3 = worst_p3.max(p3);
            if p[3] == p[1].max(p[2]) {
                ties_not_killed += 1;
            }
        }
        drift = traj.iter().map(|s| (s.isum() - st.isum()).abs()).fold(drift, f64::max);
        let up = |k: usize| traj.windows(2).all(|w| w[1].0[k] >= w[0].0[k] - 1e-12);
        let down = |k: usize| traj.windows(2).all(|w| w[1].0[k] <= w[0].0[k] + 1e-12);
        if !(up(0) && up(4) && down(1) && down(2) && down(3)) {
            monotone_bad += 1;
        }
        let pairs: Vec<(usize, usize)> =
            [(1, 2), (1, 3), (2, 3), (2, 1), (3, 1), (3, 2)].into_iter().filter(|&(a, b)| p[a] < p[b]).collect();
        if !order_kept(&st, &pairs, 10) {
            order_bad += 1;
        }
    }
    ensure(
        not_killed == 0 && drift <= 1e-12 && monotone_bad == 0 && order_bad == 0,
        format!(
            "{} states: p3(40) >= 1e-6 in {not_killed} ({ties_not_killed} with p3 = max(p1,p2), worst {worst_p3:.2e}); \
             Isum drift {drift:.1e} (<= 1e-12); monotonicity failures {monotone_bad}; order failures to n=10 {order_bad}",
            grid.len()
        ),
    )
}

fn consistency() -> Outcome {
    let vs = binary_subspaces();
    let set = [vs[1].clone(), vs[3].clone()];
    let user1 = is_consistent(&set, 0b01, DEFAULT_CLOSURE_LIMIT).unwrap();
    let user2 = is_consistent(&set, 0b10, DEFAULT_CLOSURE_LIMIT).unwrap();
    let witness_ok = user1.witness.as_ref().is_some_and(|(a, b)| {
        proj(&a.intersection(b), 0b01).unwrap() != proj(a, 0b01).unwrap().intersection(&proj(b, 0b01).unwrap())
    });
    let mix = LinearMixture::new(2, 2, vec![(0.5, vs[1].clone()), (0.5, vs[3].clone())]).unwrap();
    let before = 2.0 * lin_rate_region(&mix, 0b01).unwrap();
    let after = lin_rate_region(&lin_minus(&mix), 0b01).unwrap() + lin_rate_region(&lin_plus(&mix), 0b01).unwrap();
    ensure(
        !user1.consistent && witness_ok && user2.consistent && before > after,
        format!(
            "S={{1}} consistent={} witness valid={witness_ok}; S={{2}} consistent={}; 2I[1] = {before} vs I-[1]+I+[1] = {after}",
            user1.consistent, user2.consistent
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, u64, fn() -> Outcome); 11] = [
        (1, "duality identity", 10, duality),
        (2, "BEC oracle", 5, bec_oracle),
        (3, "Bhattacharyya bound", 5, bhattacharyya_bound),
        (4, "projected-transform identities", 30, projected_identities),
        (5, "polarization survey", 300, survey_fractions),
        (6, "SC decoder oracle", 5, sc_oracle),
        (7, "code performance", 30, code_performance),
        (8, "MAC martingale", 20, mac_martingale),
        (9, "linmac oracle", 30, linmac_oracle),
        (10, "loss dynamics", 30, loss_dynamics),
        (11, "consistency", 5, consistency),
    ];
    let strict = std::env::var("POLARQ_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let (mut passed, mut fatal) = (0, 0);
    for (id, name, budget, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let in_time = took <= Duration::from_secs(budget);
        let (ok, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        let note = if !ok && KNOWN_RED.contains(&id) { " [known red]" } else { "" };
        println!(
            "[{}] {id:>2} {name}: {detail}; {:.2}s (budget {budget}s){note}",
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
        if ok {
            passed += 1;
        } else if strict || !KNOWN_RED.contains(&id) {
            fatal += 1;
        }
    }
    println!("acceptance: {passed}/{} passed", criteria.len());
    if fatal > 0 {
        std::process::exit(1);
    }
}
