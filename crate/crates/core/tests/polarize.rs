mod common;

use common::*;
use polarq::algebra::*;
use polarq::dmc::*;
use polarq::polarize::*;
use polarq::sc::{decode_order, decode_rank};
use proptest::prelude::*;

/// The encoder written straight from its recursive definition.
fn recursive_encode(g: &Quasigroup, u: &[usize]) -> Vec<usize> {
    if u.len() == 1 {
        return u.to_vec();
    }
    let even: Vec<usize> = u.iter().step_by(2).copied().collect();
    let odd: Vec<usize> = u.iter().skip(1).step_by(2).copied().collect();
    let (a, b) = (recursive_encode(g, &even), recursive_encode(g, &odd));
    let mut x: Vec<usize> = a.iter().zip(&b).map(|(&p, &q)| g.op(p, q)).collect();
    x.extend(b);
    x
}

/// The synthetic channel seen by branch `i`: output `(y, u_prior)` where
/// `u_prior` are the branches decoded before `i`.
fn synthetic_channel(p: &Dmc, g: &Quasigroup, n: u32, i: usize) -> Dmc {
    let q = g.size();
    let size = 1usize << n;
    let ny = p.outputs();
    let rank = decode_rank(i, n);
    let prior: Vec<usize> = decode_order(n)[..rank].to_vec();
    let n_prior = q.pow(prior.len() as u32);
    let n_y = ny.pow(size as u32);
    let mut cols = vec![0.0; n_y * n_prior * q];
    let scale = 1.0 / q.pow(size as u32 - 1) as f64;
    for word in 0..q.pow(size as u32) {
        let u: Vec<usize> = (0..size).map(|k| word / q.pow(k as u32) % q).collect();
        let x = recursive_encode(g, &u);
        let pr_idx = prior.iter().fold(0, |acc, &b| acc * q + u[b]);
        for yw in 0..n_y {
            let mut pr = scale;
            for (j, &xj) in x.iter().enumerate() {
                pr *= p.prob(xj, yw / ny.pow(j as u32) % ny);
            }
            cols[(yw * n_prior + pr_idx) * q + u[i]] += pr;
        }
    }
    let rows: Vec<Vec<f64>> = (0..q).map(|x| (0..n_y * n_prior).map(|o| cols[o * q + x]).collect()).collect();
    Dmc::from_rows(&rows).unwrap()
}

#[test]
fn branch_channels_match_encoder_enumeration() {
    let mut r = rng(11);
    let cases = [(Quasigroup::xor(1), 2u32, 2usize), (Quasigroup::cyclic(3), 2, 2), (Quasigroup::twisted(2), 1, 3)];
    for (g, n, ny) in cases {
        let p = random_channel(&mut r, g.size(), ny);
        for i in 0..(1usize << n) {
            let want = synthetic_channel(&p, &g, n, i);
            let got = polarize_path(&p, &g, SignSequence::new(n, i as u64), 1 << 20).unwrap();
            assert!(channels_equivalent(&got, &want, 1e-9), "branch {i}");
            assert!((mutual_information(&got) - mutual_information(&want)).abs() < 1e-9);
        }
    }
}

#[test]
fn one_step_raw_transforms_by_definition() {
    let mut r = rng(5);
    let g = Quasigroup::twisted(2);
    let p = random_channel(&mut r, 4, 3);
    let m = minus_transform_raw(&p, &g).unwrap();
    let pl = plus_transform_raw(&p, &g).unwrap();
    for y1 in 0..3 {
        for y2 in 0..3 {
            for u1 in 0..4 {
                let mut s = 0.0;
                for u2 in 0..4 {
                    let v = p.prob(g.op(u1, u2), y1) * p.prob(u2, y2) / 4.0;
                    s += v;
                    assert!((pl.prob(u2, (y1 * 3 + y2) * 4 + u1) - v).abs() < 1e-15);
                }
                assert!((m.prob(u1, y1 * 3 + y2) - s).abs() < 1e-15);
            }
        }
    }
    assert!(channels_equivalent(&m, &minus_transform(&p, &g).unwrap(), 1e-9));
    assert!(channels_equivalent(&pl, &plus_transform(&p, &g).unwrap(), 1e-9));
}

fn bec_erasure(eps: f64, s: SignSequence) -> f64 {
    s.signs().iter().fold(eps, |e, sg| match sg {
        Sign::Minus => 2.0 * e - e * e,
        Sign::Plus => e * e,
    })
}

#[test]
fn bec_branches_follow_erasure_recursion() {
    let g = Quasigroup::xor(1);
    for eps in [0.1, 0.5, 0.77] {
        let s = survey(&Dmc::bec(eps), &g, &SurveyConfig::new(6, SurveyMode::Exact)).unwrap();
        for r in &s.reports {
            let e = bec_erasure(eps, r.signs);
            assert!((r.mutual_info - (1.0 - e)).abs() < 1e-9, "{} {}", r.signs, eps);
            assert!((r.candidates.last().unwrap().z - e).abs() < 1e-9);
        }
        assert!((s.mean_info - (1.0 - eps)).abs() < 1e-9);
    }
}

#[test]
fn bec_half_depth_ten_classification() {
    let cfg = SurveyConfig::new(10, SurveyMode::Exact);
    let s = survey(&Dmc::bec(0.5), &Quasigroup::xor(1), &cfg).unwrap();
    let classified = s.reports.iter().filter(|r| r.matched.is_some()).count();
    // closed-form count: branches with erasure outside (0.1, 0.9)
    let want = (0..1024u64).filter(|&i| {
        let e = bec_erasure(0.5, SignSequence::new(10, i));
        !(0.1..=0.9).contains(&e)
    });
    assert_eq!(classified, want.count());
    assert_eq!(classified, 890);
}

fn four_ary(seed: u64) -> Dmc {
    random_channel(&mut rng(seed), 4, 3)
}

#[test]
fn projected_z_bounds_hold() {
    for g in [Quasigroup::cyclic(4), Quasigroup::twisted(2), Quasigroup::xor(2)] {
        let parts = candidate_partitions(&g).unwrap();
        for seed in 0..20 {
            let p = four_ary(seed);
            for h in &parts {
                let k = h.partition().block_count() as f64;
                if k < 2.0 {
                    continue;
                }
                let z = bhattacharyya(&project_channel(&p, h.partition()).unwrap());
                let (m, pl) = projected_transforms(&p, h, &g).unwrap();
                assert!(bhattacharyya(&m) <= (k * k - k + 1.0) * z + 1e-12);
                assert!(bhattacharyya(&pl) <= (k - 1.0) * z * z + 1e-12);
                assert!(degradation_aggregation_check(&p, h, &g, 1e-12).unwrap());
            }
        }
    }
}

#[test]
fn montecarlo_agrees_with_exact() {
    let g = Quasigroup::cyclic(4);
    let p = four_ary(3);
    let exact = survey(&p, &g, &SurveyConfig::new(2, SurveyMode::Exact)).unwrap();
    let mut cfg = SurveyConfig::new(2, SurveyMode::MonteCarlo { samples: 20000 });
    cfg.seed = 9;
    let mc = survey(&p, &g, &cfg).unwrap();
    for (e, m) in exact.reports.iter().zip(&mc.reports) {
        assert_eq!(e.signs, m.signs);
        assert!((e.mutual_info - m.mutual_info).abs() < 4.0 * m.mutual_info_stderr + 1e-3, "{}", e.signs);
        for (ce, cm) in e.candidates.iter().zip(&m.candidates) {
            assert!((ce.info - cm.info).abs() < 4.0 * cm.info_stderr + 1e-3);
            assert!((ce.z - cm.z).abs() < 4.0 * cm.z_stderr + 1e-3);
        }
    }
}

#[test]
fn branch_sampling_is_deterministic() {
    let a = surveyed_branches(12, Some(100), 4);
    assert_eq!(a, surveyed_branches(12, Some(100), 4));
    assert_eq!(a.len(), 100);
    assert!(a.windows(2).all(|w| w[0] < w[1]));
    assert_ne!(a, surveyed_branches(12, Some(100), 5));
}

fn small_quasigroup() -> impl Strategy<Value = Quasigroup> {
    prop_oneof![
        Just(Quasigroup::xor(1)),
        Just(Quasigroup::cyclic(3)),
        Just(Quasigroup::cyclic(4)),
        Just(Quasigroup::twisted(2)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn one_step_conserves_information(g in small_quasigroup(), seed in any::<u64>(), ny in 2usize..4) {
        let p = random_channel(&mut rng(seed), g.size(), ny);
        let i = mutual_information(&p);
        let im = mutual_information(&minus_transform(&p, &g).unwrap());
        let ip = mutual_information(&plus_transform(&p, &g).unwrap());
        prop_assert!((im + ip - 2.0 * i).abs() < 1e-7);
        prop_assert!(im <= i + 1e-7 && i <= ip + 1e-7);
    }
}
