//! Discrete probability measures on ℝⁿ and their moment functionals.

mod io;
mod moments;
mod sample;

pub use moments::{
    alpha, center_of_mass, cov1, covp, cross_moments, moment_beta, moment_delta, moment_report,
    kappa_lambda_report, z_p, CrossMoments, MomentReport,
};
pub use sample::{
    cross_polytope, cube_measure, cube_moments_hamming, random_orbit, sample_cube_subset,
    sample_gaussian, sample_laplace_product, sample_uniform_cube, CubeMoments,
    DEFAULT_MAX_ENUMERATION,
};

use nalgebra::DMatrix;
use thiserror::Error;

/// Atoms closer to the origin than this are rejected.
pub const MIN_ATOM_NORM: f64 = 1e-12;

/// Weight sums within this distance of 1 are renormalised; beyond, rejected.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-6;

/// Default cap on N for the O(N²) pair functionals.
pub const DEFAULT_PAIR_CAP: usize = 100_000;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("measure has no atoms")]
    Empty,
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("atom data length {len} is not a multiple of dimension {dim}")]
    RaggedAtoms { len: usize, dim: usize },
    #[error("{atoms} atoms but {weights} weights")]
    WeightCount { atoms: usize, weights: usize },
    #[error("weight {weight} at atom {index} is negative")]
    NegativeWeight { index: usize, weight: f64 },
    #[error("weights sum to {sum}, more than 1e-6 away from 1")]
    WeightSum { sum: f64 },
    #[error("atom {index} lies at the origin (norm {norm:e})")]
    AtomAtOrigin { index: usize, norm: f64 },
    #[error("non-finite value in atom {index}")]
    NonFinite { index: usize },
    #[error("cube of dimension {n} exceeds the enumeration limit {limit}")]
    EnumerationTooLarge { n: usize, limit: usize },
    #[error("{n} atoms exceed the pair-sum cap of {cap}")]
    PairCapExceeded { n: usize, cap: usize },
    #[error("malformed measure file: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `N` weighted atoms in ℝⁿ. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    /// Row-major `N × n`.
    atoms: Vec<f64>,
    weights: Vec<f64>,
    sq_norms: Vec<f64>,
    norms: Vec<f64>,
}

impl DiscreteMeasure {
    /// Validates atoms and weights; renormalises weights that sum to within
    /// `WEIGHT_SUM_TOLERANCE` of one.
    pub fn new(dim: usize, atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self, MeasureError> {
        if dim == 0 {
            return Err(MeasureError::ZeroDimension);
        }
        if atoms.len() % dim != 0 {
            return Err(MeasureError::RaggedAtoms { len: atoms.len(), dim });
        }
        let count = atoms.len() / dim;
        if count == 0 {
            return Err(MeasureError::Empty);
        }
        if weights.len() != count {
            return Err(MeasureError::WeightCount { atoms: count, weights: weights.len() });
        }
        for (index, &weight) in weights.iter().enumerate() {
            if !weight.is_finite() {
                return Err(MeasureError::NonFinite { index });
            }
            if weight < 0.0 {
                return Err(MeasureError::NegativeWeight { index, weight });
            }
        }
        let sum = crate::reduce::NeumaierSum::from_iter(weights.iter().copied()).value();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(MeasureError::WeightSum { sum });
        }
        // Sums already within rounding of 1 are left alone so save/load is idempotent.
        let weights = if (sum - 1.0).abs() <= 1e-12 {
            weights
        } else {
            weights.into_iter().map(|w| w / sum).collect()
        };
        let mut sq_norms = Vec::with_capacity(count);
        for (index, row) in atoms.chunks_exact(dim).enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(MeasureError::NonFinite { index });
            }
            let sq: f64 = row.iter().map(|v| v * v).sum();
            if sq.sqrt() < MIN_ATOM_NORM {
                return Err(MeasureError::AtomAtOrigin { index, norm: sq.sqrt() });
            }
            sq_norms.push(sq);
        }
        let norms = sq_norms.iter().map(|s| s.sqrt()).collect();
        Ok(Self { dim, atoms, weights, sq_norms, norms })
    }

    /// Equal weights `1/N`.
    pub fn uniform(dim: usize, atoms: Vec<f64>) -> Result<Self, MeasureError> {
        if dim == 0 {
            return Err(MeasureError::ZeroDimension);
        }
        let count = atoms.len() / dim;
        let w = if count == 0 { 0.0 } else { 1.0 / count as f64 };
        Self::new(dim, atoms, vec![w; count])
    }

    pub fn from_rows(rows: &[Vec<f64>], weights: Vec<f64>) -> Result<Self, MeasureError> {
        let dim = rows.first().map(|r| r.len()).ok_or(MeasureError::Empty)?;
        let mut atoms = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(MeasureError::DimensionMismatch { expected: dim, found: r.len() });
            }
            atoms.extend_from_slice(r);
        }
        Self::new(dim, atoms, weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of atoms.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    pub fn atoms(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.atoms.chunks_exact(self.dim)
    }

    /// Row-major `N × n` atom storage.
    pub fn atoms_flat(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    #[inline]
    pub fn norm(&self, i: usize) -> f64 {
        self.norms[i]
    }

    #[inline]
    pub fn sq_norm(&self, i: usize) -> f64 {
        self.sq_norms[i]
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// `x_i · x_j`.
    #[inline]
    pub fn dot(&self, i: usize, j: usize) -> f64 {
        self.atom(i).iter().zip(self.atom(j)).map(|(a, b)| a * b).sum()
    }

    /// `|x_i| |x_j|`, computed as `√(|x_i|²|x_j|²)` so that equal-norm atoms
    /// with integer squared norms give exact products.
    #[inline]
    pub fn norm_product(&self, i: usize, j: usize) -> f64 {
        (self.sq_norms[i] * self.sq_norms[j]).sqrt()
    }

    /// Errors when `N` exceeds `cap`.
    pub fn check_pair_cap(&self, cap: usize) -> Result<(), MeasureError> {
        if self.len() > cap {
            return Err(MeasureError::PairCapExceeded { n: self.len(), cap });
        }
        Ok(())
    }

    /// Push-forward under `x ↦ A x`.
    pub fn map_linear(&self, a: &DMatrix<f64>) -> Result<Self, MeasureError> {
        if a.ncols() != self.dim {
            return Err(MeasureError::DimensionMismatch { expected: self.dim, found: a.ncols() });
        }
        let image = self.atom_matrix() * a.transpose();
        // Column-major N × m transposed is row-major N × m.
        let atoms = image.transpose().as_slice().to_vec();
        Self::new(a.nrows(), atoms, self.weights.clone())
    }

    /// Push-forward under `x ↦ x − shift`.
    pub fn translate(&self, shift: &[f64]) -> Result<Self, MeasureError> {
        if shift.len() != self.dim {
            return Err(MeasureError::DimensionMismatch { expected: self.dim, found: shift.len() });
        }
        let atoms = self
            .atoms
            .chunks_exact(self.dim)
            .flat_map(|x| x.iter().zip(shift).map(|(a, s)| a - s))
            .collect();
        Self::new(self.dim, atoms, self.weights.clone())
    }

    /// Translate so the center of mass is at the origin.
    pub fn centered(&self) -> Result<Self, MeasureError> {
        let c = center_of_mass(self);
        if c.iter().all(|&v| v == 0.0) {
            return Ok(self.clone());
        }
        self.translate(&c)
    }

    /// Atoms as an `N × n` column-major matrix.
    pub fn atom_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.atoms)
    }

    /// Sums `f(i, j, x_i·x_j)` over all ordered pairs, evaluating each
    /// unordered pair once. `f` must be symmetric in `(i, j)`.
    ///
    /// Dot products come from one Gram block per row chunk; chunk boundaries
    /// and merge order are fixed, so the result is thread-count independent.
    pub fn pair_sum<const K: usize, F>(&self, f: F) -> [f64; K]
    where
        F: Fn(usize, usize, f64) -> [f64; K] + Sync,
    {
        use crate::reduce::{NeumaierSum, PAIR_ROW_CHUNK};
        use rayon::prelude::*;
        let len = self.len();
        let x = self.atom_matrix();
        let xt = x.transpose();
        let chunks: Vec<(usize, usize)> = (0..len.div_ceil(PAIR_ROW_CHUNK))
            .map(|c| (c * PAIR_ROW_CHUNK, ((c + 1) * PAIR_ROW_CHUNK).min(len)))
            .collect();
        let partials: Vec<[NeumaierSum; K]> = chunks
            .into_par_iter()
            .map(|(r0, r1)| {
                let rest = len - r0;
                // Column c holds dots of atom r0 + c against atoms r0.. .
                let gram = x.rows(r0, rest) * xt.columns(r0, r1 - r0);
                let mut acc = [NeumaierSum::new(); K];
                for c in 0..r1 - r0 {
                    let i = r0 + c;
                    let col = gram.column(c);
                    let d = f(i, i, col[c]);
                    let mut off = [NeumaierSum::new(); K];
                    for j in i + 1..len {
                        let v = f(i, j, col[j - r0]);
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
        let mut total = [NeumaierSum::new(); K];
        for p in &partials {
            for k in 0..K {
                total[k].merge(&p[k]);
            }
        }
        total.map(|s| s.value())
    }
}
