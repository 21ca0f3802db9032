//! L^p-isotropic linear positions.
//!
//! A centred measure μ is L^p-isotropic when `Cov_p(μ) = Z_{p,μ} Id`. The
//! optimiser works on the shape (a determinant-one matrix `S`) by a damped
//! fixed-point iteration on the normalised `Cov_p` map, backtracking on the
//! objective `∫|Sx|^p dμ`. The scale that makes `Cov_p/Z_p` exactly the
//! identity is reported separately as `scale`, so the full map is
//! `scale · transform`.

use crate::linalg::{normalize_det, op_norm, random_gl, spd_power, Singular};
use crate::measure::{covp, z_p, DiscreteMeasure, MeasureError};
use crate::reduce::chunked_sum;
use crate::rng::SeedStream;
use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PositionError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("support is degenerate: Cov_p eigenvalues span [{min_eigenvalue:e}, {max_eigenvalue:e}]")]
    DegenerateSupport { min_eigenvalue: f64, max_eigenvalue: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("p = {0} is outside (0, 4)")]
    InvalidP(f64),
}

impl From<Singular> for PositionError {
    fn from(s: Singular) -> Self {
        PositionError::DegenerateSupport { min_eigenvalue: s.min_eigenvalue, max_eigenvalue: s.max_eigenvalue }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionOptions {
    /// Operator-norm residual target.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial damping exponent η ∈ (0, 1].
    pub damping: f64,
}

impl Default for PositionOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 500, damping: 1.0 }
    }
}

fn rows<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    let r: Vec<Vec<f64>> = m.row_iter().map(|row| row.iter().copied().collect()).collect();
    r.serialize(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositionResult {
    pub p: f64,
    /// Determinant-one shape matrix `S`.
    #[serde(serialize_with = "rows")]
    pub transform: DMatrix<f64>,
    /// `s > 0` such that `s · S` maps the centred input to an L^p-isotropic image.
    pub scale: f64,
    /// `‖Cov_p(ν)/Z_{p,ν} − Id‖_op` for ν the image under `scale · transform`.
    pub residual: f64,
    pub iterations: usize,
    /// `∫|Sx|^p dμ` at every accepted iterate, starting with `S = Id`.
    pub objective_trace: Vec<f64>,
    /// Centre of mass subtracted before positioning.
    pub center: Vec<f64>,
}

impl PositionResult {
    /// `scale · transform`.
    pub fn full_map(&self) -> DMatrix<f64> {
        &self.transform * self.scale
    }

    /// Image of `mu` (centred first) under the full map.
    pub fn apply(&self, mu: &DiscreteMeasure) -> Result<DiscreteMeasure, MeasureError> {
        mu.translate(&self.center)?.map_linear(&self.full_map())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IsotropyCheck {
    pub isotropic: bool,
    pub residual: f64,
}

fn residual_of(m: &DMatrix<f64>) -> f64 {
    crate::linalg::sym_op_norm(&(m - DMatrix::identity(m.nrows(), m.ncols())))
}

/// `‖Cov_p/Z_p − Id‖_op ≤ tol`.
pub fn is_lp_isotropic(mu: &DiscreteMeasure, p: f64, tol: f64) -> IsotropyCheck {
    let residual = residual_of(&(covp(mu, p) / z_p(mu, p)));
    IsotropyCheck { isotropic: residual <= tol, residual }
}

/// `∫|Sx|^p dμ`.
pub fn objective(mu: &DiscreteMeasure, s: &DMatrix<f64>, p: f64) -> f64 {
    let image = mu.atom_matrix() * s.transpose();
    let [j] = chunked_sum(mu.len(), |i| [mu.weight(i) * image.row(i).norm_squared().powf(0.5 * p)]);
    j
}

fn check_p(p: f64) -> Result<(), PositionError> {
    if !(p > 0.0 && p < 4.0) {
        return Err(PositionError::InvalidP(p));
    }
    Ok(())
}

/// Scale-free `n Cov_p / Tr Cov_p`, its inverse square root power, and `s²`.
struct Shape {
    normalized: DMatrix<f64>,
    scale_sq: f64,
}

fn shape(nu: &DiscreteMeasure, p: f64) -> Result<Shape, PositionError> {
    let c = covp(nu, p);
    let n = nu.dim() as f64;
    let trace = c.trace();
    // Rank check before anything divides by the spectrum.
    spd_power(&c, 1.0)?;
    Ok(Shape { normalized: c * (n / trace), scale_sq: n * z_p(nu, p) / trace })
}

pub fn lp_isotropic_position(
    mu: &DiscreteMeasure,
    p: f64,
    opts: &PositionOptions,
) -> Result<PositionResult, PositionError> {
    check_p(p)?;
    let center = crate::measure::center_of_mass(mu);
    let centred = mu.translate(&center)?;
    let n = mu.dim();
    let mut s = DMatrix::<f64>::identity(n, n);
    let mut nu = centred.clone();
    let mut sh = shape(&nu, p)?;
    let mut residual = residual_of(&sh.normalized);
    let mut j = objective(&centred, &s, p);
    let mut trace = vec![j];
    let mut eta = opts.damping.clamp(f64::MIN_POSITIVE, 1.0);
    let mut iterations = 0;
    while residual > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let mut accepted = false;
        while eta > 1e-12 {
            let step = spd_power(&sh.normalized, -0.5 * eta)?;
            let candidate = normalize_det(&(step * &s));
            let cj = objective(&centred, &candidate, p);
            if cj <= j + 1e-13 * j.abs() {
                s = candidate;
                j = cj;
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            break;
        }
        trace.push(j);
        eta = (2.0 * eta).min(1.0);
        nu = centred.map_linear(&s)?;
        sh = shape(&nu, p)?;
        residual = residual_of(&sh.normalized);
    }
    if residual > opts.tol {
        return Err(PositionError::NonConvergence { iterations, residual });
    }
    Ok(PositionResult { p, transform: s, scale: sh.scale_sq.sqrt(), residual, iterations, objective_trace: trace, center })
}

/// Closed-form p = 2 position: `S ∝ Cov(μ)^{−1/2}` after centring.
pub fn isotropic_position(mu: &DiscreteMeasure) -> Result<PositionResult, PositionError> {
    let center = crate::measure::center_of_mass(mu);
    let centred = mu.translate(&center)?;
    let cov = covp(&centred, 2.0);
    let s = normalize_det(&spd_power(&cov, -0.5)?);
    let nu = centred.map_linear(&s)?;
    let sh = shape(&nu, 2.0)?;
    let j = objective(&centred, &s, 2.0);
    Ok(PositionResult {
        p: 2.0,
        transform: s,
        scale: sh.scale_sq.sqrt(),
        residual: residual_of(&sh.normalized),
        iterations: 0,
        objective_trace: vec![j],
        center,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub p: f64,
    pub trials: usize,
    /// Largest `max_k |σ_k(Q) − σ̄(Q)| / σ̄(Q)` over trials.
    pub max_deviation: f64,
}

/// Positions two random GL images of μ and measures how far the map between
/// the two positioned images is from a multiple of an orthogonal matrix.
pub fn uniqueness_check(
    mu: &DiscreteMeasure,
    p: f64,
    trials: usize,
    stream: &SeedStream,
    opts: &PositionOptions,
) -> Result<UniquenessReport, PositionError> {
    check_p(p)?;
    let n = mu.dim();
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let mut rng = stream.block_rng(trial as u64);
        let a1 = random_gl(n, 0.5, &mut rng);
        let a2 = random_gl(n, 0.5, &mut rng);
        let r1 = lp_isotropic_position(&mu.map_linear(&a1)?, p, opts)?;
        let r2 = lp_isotropic_position(&mu.map_linear(&a2)?, p, opts)?;
        let t1 = r1.full_map() * a1;
        let t2 = r2.full_map() * a2;
        let inv = t2.try_inverse().ok_or(PositionError::DegenerateSupport {
            min_eigenvalue: 0.0,
            max_eigenvalue: f64::NAN,
        })?;
        let sv = (t1 * inv).singular_values();
        let mean = sv.mean();
        let dev = sv.iter().map(|s| (s - mean).abs()).fold(0.0, f64::max) / mean;
        worst = worst.max(dev);
    }
    Ok(UniquenessReport { p, trials, max_deviation: worst })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProximityReport {
    /// `‖T‖_op` for `T` carrying the L¹-isotropic image to the isotropic one.
    pub op_norm_t: f64,
    pub op_norm_t_inv: f64,
    /// `√n Z_{1,ν}` on the L¹-isotropic image ν.
    pub sqrt_n_z1: f64,
}

pub fn proximity_report(mu: &DiscreteMeasure, opts: &PositionOptions) -> Result<ProximityReport, PositionError> {
    let r = lp_isotropic_position(mu, 1.0, opts)?;
    let nu = r.apply(mu)?;
    let cov = covp(&nu, 2.0);
    let t = spd_power(&cov, -0.5)?;
    let t_inv = spd_power(&cov, 0.5)?;
    Ok(ProximityReport {
        op_norm_t: op_norm(&t),
        op_norm_t_inv: op_norm(&t_inv),
        sqrt_n_z1: (mu.dim() as f64).sqrt() * z_p(&nu, 1.0),
    })
}

/// Largest relative objective decrease over `trials` random perturbations
/// `normalize_det((Id + εK) S)` with `‖K‖_F = 1`. Nonpositive at a minimiser
/// up to second order.
pub fn perturbation_check(
    mu: &DiscreteMeasure,
    result: &PositionResult,
    trials: usize,
    eps: f64,
    stream: &SeedStream,
) -> Result<f64, PositionError> {
    let centred = mu.translate(&result.center)?;
    let n = mu.dim();
    let base = objective(&centred, &result.transform, result.p);
    let mut rng = stream.block_rng(0);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let k = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        let k = &k / k.norm();
        let moved = normalize_det(&((DMatrix::identity(n, n) + k * eps) * &result.transform));
        let j = objective(&centred, &moved, result.p);
        worst = worst.max((base - j) / base);
    }
    Ok(worst)
}
