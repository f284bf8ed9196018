mod common;

use polarq::gf::{all_subspaces, Subspace};
use polarq::linmac::*;
use polarq::macpolar::{mac_minus, mac_plus, rate_region, MacChannel};
use polarq::polarize::Sign;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn random_mixture(rng: &mut impl Rng, q: usize, m: usize, k: usize) -> LinearMixture {
    let all = all_subspaces(q, m);
    let picks: Vec<Subspace> = all.choose_multiple(rng, k).cloned().collect();
    let w: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 0.05).collect();
    let s: f64 = w.iter().sum();
    LinearMixture::new(q, m, w.iter().map(|x| x / s).zip(picks).collect()).unwrap()
}

fn assert_same_region(mac: &MacChannel, lin: &LinearMixture) {
    let region = rate_region(mac).unwrap();
    let unit = (lin.field() as f64).log2();
    for mask in 1..1usize << lin.users() {
        let want = lin_rate_region(lin, mask).unwrap() * unit;
        assert!((region.get(mask) - want).abs() < 1e-9, "mask {mask}: {} vs {want}", region.get(mask));
    }
}

#[test]
fn to_dmc_examples() {
    let vs = binary_subspaces();
    let full = to_dmc(&LinearMixture::pure(vs[4].clone())).unwrap();
    assert_eq!(full.channel().outputs(), 4);
    assert_same_region(&full, &LinearMixture::pure(vs[4].clone()));
    let useless = to_dmc(&LinearMixture::pure(vs[0].clone())).unwrap();
    assert_eq!(useless.channel().outputs(), 1);
    let mix = LinearMixture::new(2, 2, vec![(0.5, vs[1].clone()), (0.5, vs[3].clone())]).unwrap();
    assert_same_region(&to_dmc(&mix).unwrap(), &mix);
}

#[test]
fn closed_form_transforms_match_generic_mac_transforms() {
    let mut rng = common::rng(17);
    for (q, m, trials) in [(2, 2, 20), (3, 2, 5), (2, 3, 5)] {
        for _ in 0..trials {
            let k = rng.gen_range(1..=3);
            let lin = random_mixture(&mut rng, q, m, k);
            let mac = to_dmc(&lin).unwrap();
            assert_same_region(&mac, &lin);
            for s1 in [Sign::Minus, Sign::Plus] {
                let (l1, m1) = step(&lin, &mac, s1);
                assert_same_region(&m1, &l1);
                for s2 in [Sign::Minus, Sign::Plus] {
                    let (l2, m2) = step(&l1, &m1, s2);
                    assert_same_region(&m2, &l2);
                }
            }
        }
    }
}

fn step(lin: &LinearMixture, mac: &MacChannel, s: Sign) -> (LinearMixture, MacChannel) {
    let next = match s {
        Sign::Minus => mac_minus(mac),
        Sign::Plus => mac_plus(mac),
    };
    (lin_transform(lin, s), next.unwrap())
}

#[test]
fn dimension_formula_over_the_lattice() {
    for (q, m) in [(2, 3), (3, 2)] {
        let all = all_subspaces(q, m);
        for a in &all {
            for b in &all {
                let (s, i) = (sum(a, b).unwrap(), intersect(a, b).unwrap());
                assert_eq!(s.dim() + i.dim(), a.dim() + b.dim());
            }
        }
    }
}

/// Consistency by definition: `I[S]` is preserved in one step for every
/// mixture supported on the closure.
#[test]
fn consistency_matches_one_step_preservation() {
    let mut rng = common::rng(3);
    let all = all_subspaces(2, 3);
    for _ in 0..40 {
        let k = rng.gen_range(1..=3);
        let set: Vec<Subspace> = all.choose_multiple(&mut rng, k).cloned().collect();
        let cl = closure(&set, DEFAULT_CLOSURE_LIMIT).unwrap();
        for mask in 1..8usize {
            let c = is_consistent(&set, mask, DEFAULT_CLOSURE_LIMIT).unwrap();
            // uniform weights on the closure exercise every pair
            let w = 1.0 / cl.len() as f64;
            let mix = LinearMixture::new(2, 3, cl.iter().map(|v| (w, v.clone())).collect()).unwrap();
            let before = 2.0 * lin_rate_region(&mix, mask).unwrap();
            let after =
                lin_rate_region(&lin_minus(&mix), mask).unwrap() + lin_rate_region(&lin_plus(&mix), mask).unwrap();
            assert_eq!(c.consistent, (before - after).abs() < 1e-12, "set {set:?} mask {mask}");
            if let Some(vs) = sufficient_preservation(&set, mask).unwrap() {
                assert!(c.consistent);
                assert_eq!(vs.dim(), mask.count_ones() as usize);
            }
        }
    }
}

#[test]
fn strict_loss_on_the_inconsistent_example() {
    let vs = binary_subspaces();
    let mix = LinearMixture::new(2, 2, vec![(0.5, vs[1].clone()), (0.5, vs[3].clone())]).unwrap();
    let before = 2.0 * lin_rate_region(&mix, 0b01).unwrap();
    let after = lin_rate_region(&lin_minus(&mix), 0b01).unwrap() + lin_rate_region(&lin_plus(&mix), 0b01).unwrap();
    assert_eq!((before, after), (2.0, 1.5));
}

fn order(p: &[f64; 5]) -> [usize; 3] {
    let mut idx = [1, 2, 3];
    idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    idx
}

/// Every node of the depth-10 tree keeps the initial order of `(p₁,p₂,p₃)`.
/// Values can underflow to zero deep in the tree, in which case only the weak
/// order is checkable.
fn check_order(st: &BinaryState, want: [usize; 3], depth: u32) {
    for w in want.windows(2) {
        let (a, b) = (st.0[w[0]], st.0[w[1]]);
        assert!(a < b || (a == 0.0 && b == 0.0), "order broken at {st:?}");
    }
    if depth > 0 {
        for s in [Sign::Minus, Sign::Plus] {
            check_order(&binary_step(st, s), want, depth - 1);
        }
    }
}

#[test]
fn order_preserved_exhaustively() {
    let mut rng = common::rng(8);
    for _ in 0..20 {
        let mut p: [f64; 5] = std::array::from_fn(|_| rng.gen::<f64>());
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        let st = BinaryState::new(p).unwrap();
        check_order(&st, order(&p), 10);
    }
}

#[test]
fn evolve_is_exact_without_merging() {
    let st = BinaryState([0.1, 0.2, 0.3, 0.15, 0.25]);
    let traj = binary_evolve(&st, 6, 0.0);
    // brute-force average over all 2^n leaves
    for (n, avg) in traj.iter().enumerate() {
        let mut want = [0.0; 5];
        for idx in 0..1usize << n {
            let mut s = st;
            for i in 0..n {
                s = binary_step(&s, if idx >> i & 1 == 0 { Sign::Minus } else { Sign::Plus });
            }
            for k in 0..5 {
                want[k] += s.0[k] / (1usize << n) as f64;
            }
        }
        for k in 0..5 {
            assert!((avg.0[k] - want[k]).abs() < 1e-14);
        }
    }
}

#[test]
fn merged_evolution_tracks_exact_evolution() {
    let st = BinaryState([0.1, 0.2, 0.3, 0.15, 0.25]);
    let exact = binary_evolve(&st, 14, 0.0);
    let merged = binary_evolve(&st, 14, DEFAULT_EVOLVE_RESOLUTION);
    for (a, b) in exact.iter().zip(&merged) {
        for k in 0..5 {
            assert!((a.0[k] - b.0[k]).abs() <= 0.02 * a.0[k] + 1e-15, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn loss_dichotomy_examples() {
    let killed = loss_report(&BinaryState([0.1, 0.3, 0.3, 0.2, 0.1]), 40, DEFAULT_EVOLVE_RESOLUTION);
    assert!(killed.analytic_loss);
    assert!(killed.maximal_loss_detected, "p3 = {}", killed.trajectory[40].0[3]);
    let survives = loss_report(&BinaryState([0.0, 0.2, 0.2, 0.6, 0.0]), 40, DEFAULT_EVOLVE_RESOLUTION);
    assert!(!survives.analytic_loss);
    assert!(survives.trajectory[40].0[3] > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn evolution_is_monotone_and_a_martingale(raw in prop::array::uniform5(0.0f64..1.0)) {
        let s: f64 = raw.iter().sum();
        prop_assume!(s > 1e-3);
        let st = BinaryState::new(raw.map(|v| v / s)).unwrap();
        let traj = binary_evolve(&st, 12, 0.0);
        for w in traj.windows(2) {
            let (a, b) = (w[0].0, w[1].0);
            prop_assert!(b[0] >= a[0] - 1e-12 && b[4] >= a[4] - 1e-12);
            for k in 1..4 {
                prop_assert!(b[k] <= a[k] + 1e-12);
            }
            prop_assert!((w[1].isum() - st.isum()).abs() < 1e-12);
            prop_assert!(w[1].i1() <= w[0].i1() + 1e-12 && w[1].i2() <= w[0].i2() + 1e-12);
        }
    }

    #[test]
    fn pair_expansion_matches_generic_transform(raw in prop::array::uniform5(0.01f64..1.0)) {
        let s: f64 = raw.iter().sum();
        let st = BinaryState::new(raw.map(|v| v / s)).unwrap();
        for sign in [Sign::Minus, Sign::Plus] {
            let generic = BinaryState::from_mixture(&lin_transform(&st.to_mixture(), sign)).unwrap();
            let closed = binary_step(&st, sign);
            for k in 0..5 {
                prop_assert!((generic.0[k] - closed.0[k]).abs() < 1e-14);
            }
        }
    }
}
