mod common;

use std::collections::BTreeMap;

use common::*;
use polarq::dmc::mutual_information;
use polarq::macpolar::*;
use polarq::polarize::{SignSequence, SurveyConfig, SurveyMode};
use rand::Rng;

fn random_mac(seed: u64, users: &[usize], outputs: usize) -> MacChannel {
    let n: usize = users.iter().product();
    MacChannel::new(users.to_vec(), random_channel(&mut rng(seed), n, outputs)).unwrap()
}

fn digits(users: &[usize], mut x: usize) -> Vec<usize> {
    let mut d = vec![0; users.len()];
    for k in (0..users.len()).rev() {
        d[k] = x % users[k];
        x /= users[k];
    }
    d
}

/// `I(X_S; Y | X_{S^c})` from the joint distribution.
fn brute_conditional_info(p: &MacChannel, mask: usize) -> f64 {
    let users = p.users();
    let n = p.channel().inputs();
    let ny = p.channel().outputs();
    let key = |x: usize| {
        let d = digits(users, x);
        (0..users.len()).filter(|k| mask >> k & 1 == 0).fold(0, |a, k| a * users[k] + d[k])
    };
    // H(Y | X_{S^c}) − H(Y | X)
    let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for x in 0..n {
        let e = groups.entry(key(x)).or_insert_with(|| vec![0.0; ny]);
        for y in 0..ny {
            e[y] += p.channel().prob(x, y);
        }
    }
    let h_cond_sc: f64 = groups
        .values()
        .map(|v| {
            let s: f64 = v.iter().sum();
            let norm: Vec<f64> = v.iter().map(|a| a / s).collect();
            s / n as f64 * h2(&norm)
        })
        .sum();
    let h_cond_x: f64 =
        (0..n).map(|x| h2(&(0..ny).map(|y| p.channel().prob(x, y)).collect::<Vec<_>>())).sum::<f64>() / n as f64;
    h_cond_sc - h_cond_x
}

#[test]
fn rate_region_matches_conditional_informations() {
    for (seed, users) in [(1, vec![2, 2]), (2, vec![2, 3]), (3, vec![2, 2, 2]), (4, vec![3, 2, 2, 2])] {
        let p = random_mac(seed, &users, 4);
        let r = rate_region(&p).unwrap();
        for mask in 1..(1usize << users.len()) {
            assert!((r.get(mask) - brute_conditional_info(&p, mask)).abs() < 1e-9, "{users:?} {mask}");
        }
        assert!((r.sum_capacity() - mutual_information(p.channel())).abs() < 1e-12);
    }
}

#[test]
fn polymatroid_axioms() {
    for seed in 0..20 {
        let m = 2 + (seed as usize % 3);
        let p = random_mac(seed, &vec![2; m], 3);
        let r = rate_region(&p).unwrap();
        let full = (1usize << m) - 1;
        for a in 0..=full {
            for b in 0..=full {
                if a & b == a {
                    assert!(r.get(a) <= r.get(b) + 1e-12);
                }
                assert!(r.get(a | b) + r.get(a & b) <= r.get(a) + r.get(b) + 1e-12);
            }
        }
        for v in r.dominant_vertices() {
            assert!(r.contains(&v, 1e-9));
            assert!((v.iter().sum::<f64>() - r.sum_capacity()).abs() < 1e-9);
        }
    }
}

#[test]
fn transforms_are_super_martingale() {
    for seed in 0..15 {
        let users = if seed % 2 == 0 { vec![2, 2] } else { vec![2, 3] };
        let p = random_mac(100 + seed, &users, 3);
        let r = rate_region(&p).unwrap();
        let rm = rate_region(&mac_minus(&p).unwrap()).unwrap();
        let rp = rate_region(&mac_plus(&p).unwrap()).unwrap();
        let full = (1usize << users.len()) - 1;
        for s in 1..=full {
            assert!(rm.get(s) + rp.get(s) <= 2.0 * r.get(s) + 1e-9);
        }
        assert!((rm.get(full) + rp.get(full) - 2.0 * r.get(full)).abs() < 1e-9);
    }
}

#[test]
fn adder_keeps_one_bit_of_sum() {
    let p = MacChannel::adder(2, 2).unwrap();
    for t in [mac_minus(&p).unwrap(), mac_plus(&p).unwrap()] {
        assert!((rate_region(&t).unwrap().get(3) - 1.0).abs() < 1e-12);
    }
    let perfect = MacChannel::perfect(&[2, 3]).unwrap();
    for t in [mac_minus(&perfect).unwrap(), mac_plus(&perfect).unwrap()] {
        assert!((mutual_information(t.channel()) - 6f64.log2()).abs() < 1e-12);
    }
    let useless = MacChannel::useless(&[2, 2]).unwrap();
    assert_eq!(mutual_information(mac_plus(&useless).unwrap().channel()), 0.0);
}

#[test]
fn virtual_users_agree() {
    let d = random_channel(&mut rng(7), 4, 5);
    let split = MacChannel::from_prime_powers(&[4], d.clone()).unwrap();
    assert_eq!(split.users(), &[2, 2]);
    assert!((rate_region(&split).unwrap().sum_capacity() - mutual_information(&d)).abs() < 1e-12);
    let eight = MacChannel::from_prime_powers(&[2, 4], random_channel(&mut rng(8), 8, 3)).unwrap();
    assert_eq!(eight.users(), &[2, 2, 2]);
}

#[test]
fn projection_by_definition() {
    let p = random_mac(9, &[2, 2, 3], 3);
    for a in candidate_matrices(p.users()).unwrap() {
        let proj = project_mac(&p, &a).unwrap();
        let outs = a.output_users();
        let k: usize = outs.iter().product();
        let fibre = p.channel().inputs() / k;
        for y in 0..3 {
            let mut want = vec![0.0; k];
            for x in 0..p.channel().inputs() {
                let u = a.apply_transpose(p.users(), &digits(p.users(), x));
                let ui = u.iter().zip(&outs).fold(0, |acc, (&v, &q)| acc * q + v);
                want[ui] += p.channel().prob(x, y) / fibre as f64;
            }
            for (ui, w) in want.iter().enumerate() {
                assert!((proj.channel().prob(ui, y) - w).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn surveys_of_extreme_channels() {
    let cfg = SurveyConfig::new(3, SurveyMode::Exact);
    let s = mac_survey(&MacChannel::perfect(&[2, 3]).unwrap(), &cfg).unwrap();
    assert_eq!(s.classified_fraction, 1.0);
    for r in &s.reports {
        assert!((r.lrank.unwrap() - 6f64.log2()).abs() < 1e-12);
    }
    let s = mac_survey(&MacChannel::useless(&[2, 2]).unwrap(), &cfg).unwrap();
    for r in &s.reports {
        assert_eq!(r.matrix.as_ref().unwrap().rank(), 0);
    }
}

/// Brute-force SC decision for an `N = 2` MAC code.
fn brute_decode(c: &MacCodeConfig, p: &MacChannel, y: &[usize]) -> Vec<usize> {
    let users = p.users().to_vec();
    let q: usize = users.iter().product();
    let add = |a: usize, b: usize| {
        let (da, db) = (digits(&users, a), digits(&users, b));
        da.iter().zip(&db).zip(&users).fold(0, |acc, ((x, y), m)| acc * m + (x + y) % m)
    };
    let joint = |u0: usize, u1: usize| p.channel().prob(add(u0, u1), y[0]) * p.channel().prob(u1, y[1]);
    let mut out = vec![0; 2];
    for b in [0usize, 1] {
        out[b] = match &c.branches[b] {
            MacBranch::Frozen { values } => values.iter().zip(&users).fold(0, |acc, (v, m)| acc * m + v),
            MacBranch::Active { matrix, active, frozen, .. } => {
                let outs = matrix.output_users();
                let k: usize = outs.iter().product();
                let mut marg = vec![0.0; k];
                for u in 0..q {
                    let pr: f64 = if b == 0 { (0..q).map(|u1| joint(u, u1)).sum() } else { joint(out[0], u) };
                    let lab = matrix.apply_transpose(&users, &digits(&users, u));
                    marg[lab.iter().zip(&outs).fold(0, |acc, (&v, &m)| acc * m + v)] += pr;
                }
                let best = (0..k).fold(0, |bi, i| if marg[i] > marg[bi] { i } else { bi });
                // the unique tuple with frozen users fixed and Aᵀu = best
                (0..q)
                    .find(|&u| {
                        let d = digits(&users, u);
                        let lab = matrix.apply_transpose(&users, &d);
                        lab.iter().zip(&outs).fold(0, |acc, (&v, &m)| acc * m + v) == best
                            && (0..users.len()).all(|kk| active[kk] || d[kk] == frozen[kk])
                    })
                    .unwrap()
            }
        };
    }
    out
}

#[test]
fn decoder_matches_brute_force_at_length_two() {
    let mut r = rng(31);
    let users = vec![2, 2];
    let cands: Vec<GeneralizedMatrix> =
        candidate_matrices(&users).unwrap().into_iter().filter(|a| a.rank() > 0).collect();
    for trial in 0..500 {
        let p = random_mac(1000 + trial, &users, 3);
        let branches = (0..2)
            .map(|_| {
                let frozen = vec![r.gen_range(0..2), r.gen_range(0..2)];
                if r.gen_bool(0.2) {
                    return MacBranch::Frozen { values: frozen };
                }
                let a = cands[r.gen_range(0..cands.len())].clone();
                // first independent rows
                let rows = &a.blocks[0].entries;
                let mut active = vec![false; 2];
                if a.rank() == 2 {
                    active = vec![true, true];
                } else if rows[0].iter().any(|&v| v != 0) {
                    active[0] = true;
                } else {
                    active[1] = true;
                }
                MacBranch::Active { matrix: a, active, frozen, z: 0.0 }
            })
            .collect();
        let mut c = MacCodeConfig {
            n: 1,
            users: users.clone(),
            branches,
            rates: vec![],
            z_threshold: 1.0,
            delta: 0.1,
            seed: 0,
            policy: RowPolicy::FirstRows,
        };
        c.rates = c.recompute_rates();
        let y = vec![r.gen_range(0..3), r.gen_range(0..3)];
        assert_eq!(mac_sc_decode(&c, &y, &p).unwrap(), brute_decode(&c, &p, &y), "trial {trial}");
    }
}

#[test]
fn noiseless_codes_recover_everything() {
    let p = MacChannel::perfect(&[3, 2]).unwrap();
    let c = construct_mac_code(&p, 3, &Default::default()).unwrap();
    assert_eq!(c.rates, vec![3f64.log2(), 1.0]);
    let mut r = rng(2);
    let info: BTreeMap<(usize, usize), usize> =
        (0..8).flat_map(|i| [((i, 0), r.gen_range(0..3)), ((i, 1), r.gen_range(0..2))]).collect();
    let x = mac_encode(&c, &info).unwrap();
    let y: Vec<usize> = (0..8).map(|j| x[0][j] * 2 + x[1][j]).collect();
    let u = mac_sc_decode(&c, &y, &p).unwrap();
    for i in 0..8 {
        assert_eq!(u[i], info[&(i, 0)] * 2 + info[&(i, 1)]);
    }
    assert_eq!(SignSequence::new(3, 5).to_string(), "+-+");
}

#[test]
fn adder_rate_split_decodes_user_one() {
    let p = MacChannel::adder(2, 2).unwrap();
    let c = construct_mac_code(&p, 1, &Default::default()).unwrap();
    assert_eq!(c.rates, vec![1.0, 0.0]);
    for a in 0..2 {
        for b in 0..2 {
            let info = BTreeMap::from([((0, 0), a), ((1, 0), b)]);
            let x = mac_encode(&c, &info).unwrap();
            let y: Vec<usize> = (0..2).map(|j| (x[0][j] + x[1][j]) % 2).collect();
            let u = mac_sc_decode(&c, &y, &p).unwrap();
            assert_eq!((u[0] >> 1, u[1] >> 1), (a, b));
        }
    }
}

#[test]
fn sum_rate_is_bounded_by_capacity() {
    let p = random_mac(55, &[2, 2], 4);
    let ip = mutual_information(p.channel());
    let opts = MacConstructOptions { z_threshold: 0.5, ..Default::default() };
    let c = construct_mac_code(&p, 2, &opts).unwrap();
    let s = mac_survey(&p, &SurveyConfig::new(2, SurveyMode::Exact)).unwrap();
    let active = c.branches.iter().filter(|b| matches!(b, MacBranch::Active { .. })).count() as f64 / 4.0;
    assert!(c.sum_rate() <= ip + opts.delta * active + 2.0 * (1.0 - s.classified_fraction) + 1e-9);
}
