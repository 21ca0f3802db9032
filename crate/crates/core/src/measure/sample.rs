//! Constructors and samplers for the measure families used in the experiments.

use super::{DiscreteMeasure, MeasureError};
use crate::rng::{fill_sphere_point, SeedStream};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::Serialize;

/// Largest cube dimension `cube_measure` will enumerate by default.
pub const DEFAULT_MAX_ENUMERATION: usize = 20;

/// Uniform measure on the 2ⁿ vertices of {−1, 1}ⁿ.
pub fn cube_measure(n: usize, max_enumeration: usize) -> Result<DiscreteMeasure, MeasureError> {
    if n == 0 {
        return Err(MeasureError::ZeroDimension);
    }
    if n > max_enumeration || n >= usize::BITS as usize {
        return Err(MeasureError::EnumerationTooLarge { n, limit: max_enumeration });
    }
    let count = 1usize << n;
    let mut atoms = Vec::with_capacity(count * n);
    for mask in 0..count {
        atoms.extend((0..n).map(|b| if mask >> b & 1 == 1 { -1.0 } else { 1.0 }));
    }
    let w = (-(n as f64)).exp2();
    DiscreteMeasure::new(n, atoms, vec![w; count])
}

fn sample_rows<F>(n: usize, count: usize, stream: &SeedStream, draw: F) -> Result<DiscreteMeasure, MeasureError>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng, &mut [f64]) + Sync,
{
    if count == 0 {
        return Err(MeasureError::Empty);
    }
    if n == 0 {
        return Err(MeasureError::ZeroDimension);
    }
    let atoms = stream.blocked(count, |rng, range| {
        let mut out = vec![0.0; range.len() * n];
        for row in out.chunks_exact_mut(n) {
            draw(rng, row);
        }
        out
    });
    DiscreteMeasure::uniform(n, atoms)
}

/// `count` i.i.d. uniform cube vertices, duplicates kept as separate atoms.
pub fn sample_cube_subset(n: usize, count: usize, stream: &SeedStream) -> Result<DiscreteMeasure, MeasureError> {
    sample_rows(n, count, stream, |rng, row| {
        for v in row {
            *v = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
    })
}

/// Standard Gaussian sample.
pub fn sample_gaussian(n: usize, count: usize, stream: &SeedStream) -> Result<DiscreteMeasure, MeasureError> {
    sample_rows(n, count, stream, |rng, row| {
        for v in row {
            *v = StandardNormal.sample(rng);
        }
    })
}

/// Product of unit-scale Laplace coordinates (variance 2 each).
pub fn sample_laplace_product(n: usize, count: usize, stream: &SeedStream) -> Result<DiscreteMeasure, MeasureError> {
    sample_rows(n, count, stream, |rng, row| {
        for v in row {
            let e: f64 = Exp1.sample(rng);
            *v = if rng.random::<bool>() { e } else { -e };
        }
    })
}

/// Uniform sample from [−1, 1]ⁿ.
pub fn sample_uniform_cube(n: usize, count: usize, stream: &SeedStream) -> Result<DiscreteMeasure, MeasureError> {
    sample_rows(n, count, stream, |rng, row| {
        for v in row {
            *v = rng.random_range(-1.0..1.0);
        }
    })
}

/// Uniform measure on {±e₁, …, ±eₙ}.
pub fn cross_polytope(n: usize) -> Result<DiscreteMeasure, MeasureError> {
    if n == 0 {
        return Err(MeasureError::ZeroDimension);
    }
    let mut atoms = vec![0.0; 2 * n * n];
    for k in 0..n {
        atoms[2 * k * n + k] = 1.0;
        atoms[(2 * k + 1) * n + k] = -1.0;
    }
    DiscreteMeasure::uniform(n, atoms)
}

/// `count` images of `atom` under independent Haar rotations, equal weights.
///
/// `U x` for Haar `U` is uniform on the sphere of radius `|x|`, so the images
/// are drawn directly as scaled sphere points.
pub fn random_orbit(atom: &[f64], count: usize, stream: &SeedStream) -> Result<DiscreteMeasure, MeasureError> {
    let r = atom.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(r >= super::MIN_ATOM_NORM) {
        return Err(MeasureError::AtomAtOrigin { index: 0, norm: r });
    }
    sample_rows(atom.len(), count, stream, |rng, row| {
        fill_sphere_point(rng, row);
        row.iter_mut().for_each(|v| *v *= r);
    })
}

/// Cube cross-moments from the Hamming profile, without enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CubeMoments {
    pub n: usize,
    /// `E (X·Y)⁴` for independent uniform vertices; equals 3n² − 2n.
    pub fourth_sum: f64,
    /// `E (X·Y)⁶`; equals 15n³ − 30n² + 16n.
    pub sixth_sum: f64,
    pub beta: f64,
    pub delta: f64,
}

pub fn cube_moments_hamming(n: usize) -> CubeMoments {
    let profile = crate::special::binomial_half_profile(n);
    let mut s4 = crate::reduce::NeumaierSum::new();
    let mut s6 = crate::reduce::NeumaierSum::new();
    for (k, p) in profile.iter().enumerate() {
        let d = n as f64 - 2.0 * k as f64;
        let d2 = d * d;
        s4.add(p * d2 * d2);
        s6.add(p * d2 * d2 * d2);
    }
    let nf = n as f64;
    let (fourth_sum, sixth_sum) = (s4.value(), s6.value());
    CubeMoments { n, fourth_sum, sixth_sum, beta: fourth_sum / (nf * nf), delta: sixth_sum / (nf * nf * nf) }
}
