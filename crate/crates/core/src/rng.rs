//! Seeded, counter-based randomness and low-discrepancy sequences.
//!
//! Every random draw is addressed by `(seed, purpose, index)`, so results do not
//! depend on evaluation order or on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Purpose tags keep independent sampling tasks on disjoint streams.
pub fn purpose(tag: &str) -> u64 {
    tag.bytes().fold(0xCBF2_9CE4_8422_2325_u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100_0000_01B3)
    })
}

/// A generator for the `index`-th item of the task `(seed, purpose)`.
pub fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(purpose ^ splitmix64(index)));
    ChaCha8Rng::seed_from_u64(key)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Uniform point on the Euclidean unit sphere of `R^dim`.
pub fn unit_sphere(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let g = gaussian_vec(rng, dim);
        if let Some(u) = crate::vecops::normalize(&g) {
            return u;
        }
    }
}

/// Uniform point in the Euclidean ball of radius `r` in `R^dim`.
pub fn in_ball(rng: &mut ChaCha8Rng, dim: usize, r: f64) -> Vec<f64> {
    use rand::Rng;
    let dir = unit_sphere(rng, dim);
    let t: f64 = rng.gen::<f64>().powf(1.0 / dim as f64);
    crate::vecops::scale(&dir, r * t)
}

/// Radical inverse of `i` in base `b` (Halton coordinate).
pub fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let inv = 1.0 / b as f64;
    while i > 0 {
        f *= inv;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

const PRIMES: [u64; 6] = [2, 3, 5, 7, 11, 13];

/// The `i`-th Halton point in `[0,1)^dim` (skipping the origin).
pub fn halton(i: u64, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|k| radical_inverse(i + 1, PRIMES[k]))
        .collect()
}

/// Fractional part of `i * golden ratio`, offset so index 0 is not at zero.
pub fn golden(i: u64) -> f64 {
    const G: f64 = 0.618_033_988_749_894_8;
    ((i as f64 + 0.5) * G).fract()
}

/// Fibonacci lattice point `i` of `count` on the unit 2-sphere.
pub fn fibonacci_sphere(i: u64, count: u64) -> [f64; 3] {
    let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let phi = 2.0 * std::f64::consts::PI * golden(i);
    [r * phi.cos(), r * phi.sin(), z]
}
