//! Seeded low-discrepancy and pseudo-random sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Randomly shifted Halton sequence in `[0,1)^dim` (Cranley–Patterson
/// rotation driven by the seed).
#[derive(Debug, Clone)]
pub struct Halton {
    shift: Vec<f64>,
    skip: u64,
}

impl Halton {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim <= PRIMES.len(), "Halton dimension too large");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            shift: (0..dim).map(|_| rng.gen::<f64>()).collect(),
            skip: 17,
        }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    /// The `i`-th point; pure in `i`, so batches can be generated in parallel.
    pub fn point(&self, i: u64) -> Vec<f64> {
        self.shift
            .iter()
            .zip(PRIMES)
            .map(|(&s, b)| (radical_inverse(i + self.skip, b) + s).fract())
            .collect()
    }
}

/// Deterministic pseudo-random generator for a given stream.
pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Standard normal deviate by Box–Muller.
pub fn normal<R: Rng>(r: &mut R) -> f64 {
    let u1: f64 = r.gen::<f64>().max(1e-300);
    let u2: f64 = r.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Uniform point on the unit sphere `S^{n-1}`.
pub fn unit_vector<R: Rng>(r: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| normal(r)).collect();
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nv > 1e-8 {
            return v.into_iter().map(|x| x / nv).collect();
        }
    }
}

/// Maps a point of `[0,1)^{n-1}` to the unit sphere `S^{n-1}`; area-preserving
/// for n = 1, 2, 3, 4.
pub fn sphere_from_cube(u: &[f64], n: usize) -> Vec<f64> {
    use std::f64::consts::TAU;
    match n {
        1 => vec![if u.first().copied().unwrap_or(0.0) < 0.5 { -1.0 } else { 1.0 }],
        2 => {
            let t = TAU * u[0];
            vec![t.cos(), t.sin()]
        }
        3 => {
            let z = 2.0 * u[0] - 1.0;
            let t = TAU * u[1];
            let s = (1.0 - z * z).max(0.0).sqrt();
            vec![s * t.cos(), s * t.sin(), z]
        }
        4 => {
            let a = u[0].sqrt();
            let b = (1.0 - u[0]).max(0.0).sqrt();
            let (t1, t2) = (TAU * u[1], TAU * u[2]);
            vec![a * t1.cos(), a * t1.sin(), b * t2.cos(), b * t2.sin()]
        }
        _ => {
            // Fall back to a normalized Gaussian built from the cube point.
            let mut v: Vec<f64> = u
                .chunks(2)
                .flat_map(|c| {
                    let a = c[0].max(1e-12);
                    let b = c.get(1).copied().unwrap_or(0.5);
                    let rr = (-2.0 * a.ln()).sqrt();
                    [rr * (TAU * b).cos(), rr * (TAU * b).sin()]
                })
                .take(n)
                .collect();
            while v.len() < n {
                v.push(0.0);
            }
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|x| x / nv).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_is_deterministic_and_in_unit_cube() {
        let h = Halton::new(3, 7);
        let a = h.point(123);
        assert_eq!(a, Halton::new(3, 7).point(123));
        assert!(a.iter().all(|&x| (0.0..1.0).contains(&x)));
    }

    #[test]
    fn halton_mean_is_near_half() {
        let h = Halton::new(2, 1);
        let m: f64 = (0..4096).map(|i| h.point(i)[1]).sum::<f64>() / 4096.0;
        assert!((m - 0.5).abs() < 2e-3);
    }
}
