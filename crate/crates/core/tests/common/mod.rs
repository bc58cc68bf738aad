#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson};

pub fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.json"))
}

/// Center value of the field with an indicator shape of half-width `w`,
/// Pareto(xi, sigma) marks and intensity `lambda`, from every point of the
/// process in `[-span, span]`. Marks come straight from the tail inverse, so
/// nothing here shares code with the threshold sampler.
pub fn brute_force_center(w: f64, xi: f64, sigma: f64, lambda: f64, span: f64, seed: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = Poisson::new(lambda * 2.0 * span).unwrap().sample(&mut rng) as usize;
    let mut best = 0.0f64;
    for _ in 0..n {
        let x: f64 = rng.random_range(-span..span);
        let v: f64 = 1.0 - rng.random::<f64>();
        let m = sigma * v.powf(-1.0 / xi);
        if x.abs() <= w {
            best = best.max(m);
        }
    }
    best
}
