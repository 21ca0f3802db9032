//! The half-space functional `F_μ(θ) = Σ wᵢ (xᵢ·θ)₊` on the unit sphere and
//! its spherical statistics.

mod exact;
mod mc;
mod orlicz;

pub use exact::{
    cube_stats_exact, stats_exact, stats_exact_capped, third_moment_variance_exact,
    third_moment_variance_exact_capped,
};
pub use mc::{sample_values, stats_mc, third_moment_variance_mc, McEstimate, SphereSamples};
pub use orlicz::{
    moment_norms, moment_norms_from_samples, orlicz_norm, MomentNorm, OrliczEstimate, MIN_ORLICZ_SAMPLES,
};

use crate::measure::{DiscreteMeasure, MeasureError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Allowed deviation of `|θ|` from 1.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// Cancellation noise below this magnitude is clipped to zero with a flag.
pub const NEGATIVE_CLIP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FunctionalError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("direction has dimension {found}, measure has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("direction has norm {0}, not 1")]
    NotUnit(f64),
    #[error("{quantity} evaluated to {value:e}, below the clipping tolerance")]
    NegativeMoment { quantity: &'static str, value: f64 },
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("invalid Orlicz index {0}; expected 1 or 2")]
    OrliczIndex(u8),
    #[error("moment order {0} must be at least 1")]
    MomentOrder(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatsMethod {
    ExactKernel,
    HammingExact,
    MonteCarlo,
}

/// Standard errors of the Monte Carlo fields of [`FStats`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McStdErrors {
    #[serde(rename = "mean_F")]
    pub mean_f: f64,
    #[serde(rename = "second_moment_F")]
    pub second_moment_f: f64,
    #[serde(rename = "var_F")]
    pub var_f: f64,
    pub grad_sq: f64,
    pub grad_s_sq: f64,
}

/// Mean, second moment and variance of `F_μ` under σ, together with the
/// second moments of its Euclidean and spherical gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FStats {
    pub n: usize,
    #[serde(rename = "mean_F")]
    pub mean_f: f64,
    #[serde(rename = "second_moment_F")]
    pub second_moment_f: f64,
    #[serde(rename = "var_F")]
    pub var_f: f64,
    /// `E|∇F|²`.
    pub grad_sq: f64,
    /// `E|∇_S F|²`.
    pub grad_s_sq: f64,
    pub method: StatsMethod,
    pub mc_std_err: Option<McStdErrors>,
    pub samples: Option<usize>,
    /// Set when a negative rounding residue in `var_F` or `grad_s_sq` was clipped.
    pub var_clipped: bool,
}

impl FStats {
    /// `Var F ≤ E|∇_S F|²/(n−1)`, the spherical Poincaré inequality.
    pub fn poincare_holds(&self, slack: f64) -> bool {
        self.n < 2 || self.var_f <= self.grad_s_sq / (self.n as f64 - 1.0) + slack
    }
}

pub(crate) fn clip_nonnegative(quantity: &'static str, value: f64) -> Result<(f64, bool), FunctionalError> {
    if value >= 0.0 {
        Ok((value, false))
    } else if value > -NEGATIVE_CLIP {
        Ok((0.0, true))
    } else {
        Err(FunctionalError::NegativeMoment { quantity, value })
    }
}

fn check_direction(mu: &DiscreteMeasure, theta: &[f64]) -> Result<(), FunctionalError> {
    if theta.len() != mu.dim() {
        return Err(FunctionalError::DimensionMismatch { expected: mu.dim(), found: theta.len() });
    }
    let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
        return Err(FunctionalError::NotUnit(norm));
    }
    Ok(())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `F_μ(θ) = Σ wᵢ (xᵢ·θ)₊`.
#[allow(non_snake_case)]
pub fn eval_F(mu: &DiscreteMeasure, theta: &[f64]) -> Result<f64, FunctionalError> {
    check_direction(mu, theta)?;
    let mut s = crate::reduce::NeumaierSum::new();
    for (i, x) in mu.atoms().enumerate() {
        s.add(mu.weight(i) * dot(x, theta).max(0.0));
    }
    Ok(s.value())
}

/// `∇F_μ(θ) = Σ_{xᵢ·θ > 0} wᵢ xᵢ`; atoms on the boundary hyperplane are excluded.
#[allow(non_snake_case)]
pub fn grad_F(mu: &DiscreteMeasure, theta: &[f64]) -> Result<Vec<f64>, FunctionalError> {
    check_direction(mu, theta)?;
    let mut g = vec![0.0; mu.dim()];
    for (i, x) in mu.atoms().enumerate() {
        if dot(x, theta) > 0.0 {
            let w = mu.weight(i);
            g.iter_mut().zip(x).for_each(|(a, v)| *a += w * v);
        }
    }
    Ok(g)
}

/// Tangential part `∇F − (∇F·θ)θ`.
#[allow(non_snake_case)]
pub fn grad_S_F(mu: &DiscreteMeasure, theta: &[f64]) -> Result<Vec<f64>, FunctionalError> {
    let mut g = grad_F(mu, theta)?;
    let radial = dot(&g, theta);
    g.iter_mut().zip(theta).for_each(|(a, t)| *a -= radial * t);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::cube_measure;

    #[test]
    fn point_mass() {
        let d = DiscreteMeasure::uniform(3, vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(eval_F(&d, &[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(eval_F(&d, &[-1.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(grad_F(&d, &[1.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(grad_F(&d, &[-1.0, 0.0, 0.0]).unwrap(), vec![0.0; 3]);
        assert!(matches!(eval_F(&d, &[1.0, 1.0, 0.0]), Err(FunctionalError::NotUnit(_))));
        assert!(matches!(eval_F(&d, &[1.0, 0.0]), Err(FunctionalError::DimensionMismatch { .. })));
    }

    #[test]
    fn square_closed_form() {
        let c = cube_measure(2, 20).unwrap();
        for k in 0..50 {
            let a = k as f64 * 0.13;
            let f = eval_F(&c, &[a.cos(), a.sin()]).unwrap();
            let expect = a.cos().abs().max(a.sin().abs()) / 2.0;
            assert!((f - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn cube_lipschitz_seminorm_is_large() {
        for n in [4, 6, 8, 10] {
            let c = cube_measure(n, 20).unwrap();
            let best = (1..200)
                .map(|k| {
                    let phi = k as f64 / 200.0 * std::f64::consts::FRAC_PI_4;
                    let mut theta = vec![0.0; n];
                    theta[0] = phi.cos();
                    theta[1] = phi.sin();
                    let g = grad_S_F(&c, &theta).unwrap();
                    dot(&g, &g).sqrt()
                })
                .fold(0.0, f64::max);
            assert!(best >= 0.3, "n={n}: {best}");
        }
    }
}
