//! Counter-based random streams.
//!
//! A [`SeedStream`] names a `(seed, stream)` pair. Every consumer draws from
//! independent ChaCha8 block generators addressed by a block index, so the
//! sample at any position depends only on `(seed, stream, block)` and never on
//! scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::ops::Range;

/// Samples per block for every blocked sampler in the crate.
pub const BLOCK_SIZE: usize = 4096;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream {
    seed: u64,
    stream: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Derived stream for a named sub-task; distinct tags give unrelated streams.
    pub fn fork(&self, tag: u64) -> Self {
        Self {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(tag.wrapping_add(0xA076_1D64_78BD_642F))),
        }
    }

    /// Generator for block `block` of this stream.
    pub fn block_rng(&self, block: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut state = self.seed ^ splitmix64(self.stream);
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(block);
        rng
    }

    /// Runs `f` on every block of `total` items and concatenates the outputs
    /// in block order. Blocks execute in parallel.
    pub fn blocked<T, F>(&self, total: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&mut ChaCha8Rng, Range<usize>) -> Vec<T> + Sync,
    {
        let blocks = total.div_ceil(BLOCK_SIZE);
        let parts: Vec<Vec<T>> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = self.block_rng(b as u64);
                let range = b * BLOCK_SIZE..((b + 1) * BLOCK_SIZE).min(total);
                f(&mut rng, range)
            })
            .collect();
        parts.into_iter().flatten().collect()
    }
}

/// One uniform point on S^{n−1}, written into `out`.
pub fn fill_sphere_point<R: rand::Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    loop {
        let mut sq = 0.0;
        for v in out.iter_mut() {
            let g: f64 = StandardNormal.sample(rng);
            *v = g;
            sq += g * g;
        }
        if sq > 1e-300 {
            let inv = 1.0 / sq.sqrt();
            out.iter_mut().for_each(|v| *v *= inv);
            return;
        }
    }
}

/// `count` uniform points on S^{n−1}, row-major `count × n`.
pub fn sphere_points(n: usize, count: usize, stream: &SeedStream) -> Vec<f64> {
    stream.blocked(count, |rng, range| {
        let mut out = vec![0.0; range.len() * n];
        for row in out.chunks_exact_mut(n) {
            fill_sphere_point(rng, row);
        }
        out
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn blocks_are_addressable_independently() {
        let s = SeedStream::new(7).fork(3);
        let all = s.blocked(3 * BLOCK_SIZE, |rng, range| {
            range.map(|_| rng.random::<u64>()).collect::<Vec<_>>()
        });
        let mut second = s.block_rng(1);
        let direct: Vec<u64> = (0..BLOCK_SIZE).map(|_| second.random::<u64>()).collect();
        assert_eq!(&all[BLOCK_SIZE..2 * BLOCK_SIZE], &direct[..]);
    }

    #[test]
    fn forks_differ() {
        let s = SeedStream::new(1);
        assert_ne!(s.fork(1), s.fork(2));
        let a: u64 = s.fork(1).block_rng(0).random();
        let b: u64 = s.fork(2).block_rng(0).random();
        assert_ne!(a, b);
    }

    #[test]
    fn sphere_points_have_unit_norm() {
        let pts = sphere_points(5, 1000, &SeedStream::new(3));
        for p in pts.chunks_exact(5) {
            let nrm: f64 = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((nrm - 1.0).abs() < 1e-14);
        }
    }
}
