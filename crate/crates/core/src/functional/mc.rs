//! Monte Carlo over σ with batched evaluation.
//!
//! Directions are drawn in fixed blocks of `BLOCK_SIZE`; inside a block they
//! are evaluated in sub-batches through two matrix products, `X Θ` for the
//! projections and `Xᵀ (w ∘ 1{XΘ > 0})` for the gradients.

use super::{FStats, FunctionalError, McStdErrors, StatsMethod};
use crate::measure::DiscreteMeasure;
use crate::reduce::NeumaierSum;
use crate::rng::{fill_sphere_point, SeedStream};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Per-direction values of `F`, `|∇F|²` and `|∇_S F|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereSamples {
    pub f: Vec<f64>,
    /// Empty unless gradients were requested.
    pub grad_sq: Vec<f64>,
    pub grad_s_sq: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_err: f64,
    pub samples: usize,
}

fn sub_batch(atoms: usize) -> usize {
    ((1usize << 22) / atoms.max(1)).clamp(16, 512)
}

enum Want {
    Values,
    Gradients,
    Cubes,
}

/// Draws `count` directions and evaluates the requested per-direction
/// quantities; outputs are in sample order and thread-count independent.
fn evaluate(mu: &DiscreteMeasure, count: usize, stream: &SeedStream, want: Want) -> Vec<[f64; 3]> {
    let n = mu.dim();
    let x = mu.atom_matrix();
    let xt = x.transpose();
    let w = mu.weights();
    let batch = sub_batch(mu.len());
    stream.blocked(count, |rng, range| {
        let mut out = Vec::with_capacity(range.len());
        let mut remaining = range.len();
        let mut col = vec![0.0; n];
        while remaining > 0 {
            let b = remaining.min(batch);
            remaining -= b;
            let mut theta = DMatrix::<f64>::zeros(n, b);
            for c in 0..b {
                fill_sphere_point(rng, &mut col);
                theta.column_mut(c).copy_from_slice(&col);
            }
            let proj = &x * &theta;
            match want {
                Want::Values => {
                    for c in 0..b {
                        let f = proj.column(c).iter().zip(w).map(|(p, wi)| wi * p.max(0.0)).sum();
                        out.push([f, 0.0, 0.0]);
                    }
                }
                Want::Cubes => {
                    for c in 0..b {
                        let g = proj.column(c).iter().zip(w).map(|(p, wi)| wi * p * p * p).sum();
                        out.push([g, 0.0, 0.0]);
                    }
                }
                Want::Gradients => {
                    let mask = DMatrix::from_fn(proj.nrows(), b, |i, c| {
                        if proj[(i, c)] > 0.0 {
                            w[i]
                        } else {
                            0.0
                        }
                    });
                    let grads = &xt * &mask;
                    for c in 0..b {
                        let f = proj.column(c).iter().zip(w).map(|(p, wi)| wi * p.max(0.0)).sum();
                        let g = grads.column(c);
                        let g2 = g.norm_squared();
                        let radial = g.dot(&theta.column(c));
                        out.push([f, g2, (g2 - radial * radial).max(0.0)]);
                    }
                }
            }
        }
        out
    })
}

pub fn sample_values(mu: &DiscreteMeasure, count: usize, stream: &SeedStream, with_grad: bool) -> SphereSamples {
    let want = if with_grad { Want::Gradients } else { Want::Values };
    let rows = evaluate(mu, count, stream, want);
    let f = rows.iter().map(|r| r[0]).collect();
    let (grad_sq, grad_s_sq) = if with_grad {
        (rows.iter().map(|r| r[1]).collect(), rows.iter().map(|r| r[2]).collect())
    } else {
        (Vec::new(), Vec::new())
    };
    SphereSamples { f, grad_sq, grad_s_sq }
}

fn mean(v: &[f64]) -> f64 {
    NeumaierSum::from_iter(v.iter().copied()).value() / v.len() as f64
}

/// Plug-in central moment `(1/m) Σ (v − c)^k`.
pub(crate) fn central(v: &[f64], c: f64, k: i32) -> f64 {
    NeumaierSum::from_iter(v.iter().map(|x| (x - c).powi(k))).value() / v.len() as f64
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let m = mean(v);
    (m, (central(v, m, 2) / v.len() as f64).sqrt())
}

/// Monte Carlo statistics over `samples` uniform directions.
///
/// The variance uses the plug-in `1/m` normalisation; its standard error is
/// `√((m₄ − m₂²)/m)` from the fourth central moment.
pub fn stats_mc(mu: &DiscreteMeasure, samples: usize, stream: &SeedStream) -> Result<FStats, FunctionalError> {
    if samples < 2 {
        return Err(FunctionalError::TooFewSamples { min: 2, got: samples });
    }
    let s = sample_values(mu, samples, stream, true);
    let m = samples as f64;
    let (mean_f, se_mean) = mean_and_se(&s.f);
    let sq: Vec<f64> = s.f.iter().map(|v| v * v).collect();
    let (second, se_second) = mean_and_se(&sq);
    let m2 = central(&s.f, mean_f, 2);
    let m4 = central(&s.f, mean_f, 4);
    let (grad_sq, se_grad) = mean_and_se(&s.grad_sq);
    let (grad_s_sq, se_grad_s) = mean_and_se(&s.grad_s_sq);
    Ok(FStats {
        n: mu.dim(),
        mean_f,
        second_moment_f: second,
        var_f: m2,
        grad_sq,
        grad_s_sq,
        method: StatsMethod::MonteCarlo,
        mc_std_err: Some(McStdErrors {
            mean_f: se_mean,
            second_moment_f: se_second,
            var_f: ((m4 - m2 * m2).max(0.0) / m).sqrt(),
            grad_sq: se_grad,
            grad_s_sq: se_grad_s,
        }),
        samples: Some(samples),
        var_clipped: false,
    })
}

/// Monte Carlo estimate of `n² ∫ (Σ wᵢ (xᵢ·θ)³)² dσ`.
pub fn third_moment_variance_mc(
    mu: &DiscreteMeasure,
    samples: usize,
    stream: &SeedStream,
) -> Result<McEstimate, FunctionalError> {
    if samples < 2 {
        return Err(FunctionalError::TooFewSamples { min: 2, got: samples });
    }
    let n2 = (mu.dim() * mu.dim()) as f64;
    let g2: Vec<f64> = evaluate(mu, samples, stream, Want::Cubes).iter().map(|r| r[0] * r[0]).collect();
    let (m, se) = mean_and_se(&g2);
    Ok(McEstimate { estimate: n2 * m, std_err: n2 * se, samples })
}
