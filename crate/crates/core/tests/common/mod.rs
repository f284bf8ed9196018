#![allow(dead_code)]

use polarq::dmc::Dmc;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random stochastic rows with a sprinkling of exact zeros.
pub fn random_rows<R: Rng>(rng: &mut R, inputs: usize, outputs: usize) -> Vec<Vec<f64>> {
    (0..inputs)
        .map(|_| {
            let mut r: Vec<f64> =
                (0..outputs).map(|_| if rng.gen_bool(0.15) { 0.0 } else { rng.gen::<f64>() + 1e-3 }).collect();
            if r.iter().all(|&v| v == 0.0) {
                r[0] = 1.0;
            }
            let s: f64 = r.iter().sum();
            r.iter_mut().for_each(|v| *v /= s);
            r
        })
        .collect()
}

pub fn random_channel<R: Rng>(rng: &mut R, inputs: usize, outputs: usize) -> Dmc {
    Dmc::from_rows(&random_rows(rng, inputs, outputs)).unwrap()
}

pub fn h2(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.log2()).sum::<f64>()
}

/// I(X;Y) from the joint distribution with X uniform: H(X) + H(Y) − H(X,Y).
pub fn joint_mutual_information(rows: &[Vec<f64>]) -> f64 {
    let nx = rows.len() as f64;
    let ny = rows[0].len();
    let joint: Vec<f64> = rows.iter().flatten().map(|v| v / nx).collect();
    let py: Vec<f64> = (0..ny).map(|y| rows.iter().map(|r| r[y] / nx).sum()).collect();
    nx.log2() + h2(&py) - h2(&joint)
}
