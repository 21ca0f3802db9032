//! Compensated sums and fixed-shape parallel reductions.
//!
//! Work is cut into chunks whose boundaries depend only on the problem size,
//! each chunk is summed sequentially, and the chunk partials are merged in
//! chunk order. The result is therefore bit-identical for any thread count.

use rayon::prelude::*;
use std::ops::Range;

/// Neumaier (improved Kahan–Babuška) running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub const fn new() -> Self {
        Self { sum: 0.0, comp: 0.0 }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &NeumaierSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Rows per chunk in the pair reductions.
pub const PAIR_ROW_CHUNK: usize = 32;

/// Items per chunk in the single reductions.
pub const ITEM_CHUNK: usize = 1024;

fn chunk_ranges(len: usize, chunk: usize) -> Vec<Range<usize>> {
    (0..len.div_ceil(chunk))
        .map(|c| c * chunk..((c + 1) * chunk).min(len))
        .collect()
}

/// Sums `K` quantities over `0..len`; `f(i)` yields the i-th contributions.
pub fn chunked_sum<const K: usize, F>(len: usize, f: F) -> [f64; K]
where
    F: Fn(usize) -> [f64; K] + Sync,
{
    let partials: Vec<[NeumaierSum; K]> = chunk_ranges(len, ITEM_CHUNK)
        .into_par_iter()
        .map(|range| {
            let mut acc = [NeumaierSum::new(); K];
            for i in range {
                let v = f(i);
                for k in 0..K {
                    acc[k].add(v[k]);
                }
            }
            acc
        })
        .collect();
    finish(partials)
}

/// Sums a symmetric pair function over all ordered pairs `(i, j)` in
/// `0..len × 0..len`, evaluating each unordered pair once.
///
/// `f(i, j)` must equal `f(j, i)`; the diagonal is added once and the strict
/// upper triangle twice.
pub fn symmetric_pair_sum<const K: usize, F>(len: usize, f: F) -> [f64; K]
where
    F: Fn(usize, usize) -> [f64; K] + Sync,
{
    let partials: Vec<[NeumaierSum; K]> = chunk_ranges(len, PAIR_ROW_CHUNK)
        .into_par_iter()
        .map(|rows| {
            let mut acc = [NeumaierSum::new(); K];
            for i in rows {
                let d = f(i, i);
                let mut off = [NeumaierSum::new(); K];
                for j in i + 1..len {
                    let v = f(i, j);
                    for k in 0..K {
                        off[k].add(v[k]);
                    }
                }
                for k in 0..K {
                    acc[k].add(d[k]);
                    acc[k].add(2.0 * off[k].value());
                }
            }
            acc
        })
        .collect();
    finish(partials)
}

fn finish<const K: usize>(partials: Vec<[NeumaierSum; K]>) -> [f64; K] {
    let mut total = [NeumaierSum::new(); K];
    for p in &partials {
        for k in 0..K {
            total[k].merge(&p[k]);
        }
    }
    total.map(|s| s.value())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_recovers_cancelled_terms() {
        let s: NeumaierSum = [1.0, 1e100, 1.0, -1e100].into_iter().collect();
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn pair_sum_matches_full_double_loop() {
        let xs: Vec<f64> = (0..257).map(|i| ((i * 37) % 101) as f64 / 7.0 - 3.0).collect();
        let [fast] = symmetric_pair_sum(xs.len(), |i, j| [xs[i] * xs[j] + (xs[i] - xs[j]).abs()]);
        let mut slow = NeumaierSum::new();
        for a in &xs {
            for b in &xs {
                slow.add(a * b + (a - b).abs());
            }
        }
        assert!((fast - slow.value()).abs() <= 1e-12 * slow.value().abs());
    }

    #[test]
    fn reductions_do_not_depend_on_thread_count() {
        let xs: Vec<f64> = (0..3000).map(|i| (i as f64 * 0.7).sin()).collect();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    let a = symmetric_pair_sum::<1, _>(xs.len(), |i, j| [(xs[i] * xs[j]).cos()]);
                    let b = chunked_sum::<1, _>(xs.len(), |i| [xs[i].exp()]);
                    (a[0].to_bits(), b[0].to_bits())
                })
        };
        let reference = run(1);
        for t in [2, 4, 8] {
            assert_eq!(run(t), reference);
        }
    }
}
