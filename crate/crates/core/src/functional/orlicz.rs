//! Empirical Orlicz and central L^p norms of sampled values.

use super::mc::{central, sample_values};
use super::FunctionalError;
use crate::measure::DiscreteMeasure;
use crate::reduce::NeumaierSum;
use crate::rng::SeedStream;
use serde::{Deserialize, Serialize};

/// Fewest samples accepted by [`orlicz_norm`].
pub const MIN_ORLICZ_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrliczEstimate {
    pub alpha_index: u8,
    /// Centred norm: root `t*` of `mean exp((|f − mean f|/t)^α) = 2`.
    pub norm: f64,
    pub samples: usize,
    /// `mean exp((|f − mean f|/t*)^α) − 2` at the returned root.
    pub residual: f64,
    /// All samples equal; the norm is reported as 0.
    pub degenerate: bool,
    /// Same construction without centring.
    pub uncentered_norm: f64,
}

fn solve(dev: &[f64], alpha: u8) -> (f64, f64, bool) {
    let max = dev.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) {
        return (0.0, 0.0, true);
    }
    let g = |t: f64| {
        let s: NeumaierSum = dev.iter().map(|d| (d / t).powi(alpha as i32).exp()).collect();
        s.value() / dev.len() as f64 - 2.0
    };
    // g decreases in t; g(max/40) ≥ e⁴⁰/m − 1 > 0 and g(40·max) ≤ e^{1/40} − 2 < 0.
    let (mut lo, mut hi) = (max / 40.0, max * 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (hi, g(hi), false)
}

pub fn orlicz_norm(samples: &[f64], alpha_index: u8) -> Result<OrliczEstimate, FunctionalError> {
    if !(alpha_index == 1 || alpha_index == 2) {
        return Err(FunctionalError::OrliczIndex(alpha_index));
    }
    if samples.len() < MIN_ORLICZ_SAMPLES {
        return Err(FunctionalError::TooFewSamples { min: MIN_ORLICZ_SAMPLES, got: samples.len() });
    }
    let mean = NeumaierSum::from_iter(samples.iter().copied()).value() / samples.len() as f64;
    let centred: Vec<f64> = samples.iter().map(|f| (f - mean).abs()).collect();
    let raw: Vec<f64> = samples.iter().map(|f| f.abs()).collect();
    let (norm, residual, degenerate) = solve(&centred, alpha_index);
    let (uncentered_norm, _, _) = solve(&raw, alpha_index);
    Ok(OrliczEstimate { alpha_index, norm, samples: samples.len(), residual, degenerate, uncentered_norm })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentNorm {
    pub p: f64,
    /// `(mean |f − mean f|^p)^{1/p}`.
    pub norm: f64,
}

pub fn moment_norms_from_samples(samples: &[f64], p_list: &[f64]) -> Result<Vec<MomentNorm>, FunctionalError> {
    if samples.len() < 2 {
        return Err(FunctionalError::TooFewSamples { min: 2, got: samples.len() });
    }
    let mean = NeumaierSum::from_iter(samples.iter().copied()).value() / samples.len() as f64;
    p_list
        .iter()
        .map(|&p| {
            if !(p >= 1.0) {
                return Err(FunctionalError::MomentOrder(p));
            }
            // Even integer orders use the signed power so p = 2 reproduces the plug-in variance bit for bit.
            let mp = if p <= 64.0 && p == p.trunc() && p as i32 % 2 == 0 {
                central(samples, mean, p as i32)
            } else {
                abs_moment(samples, mean, p)
            };
            Ok(MomentNorm { p, norm: mp.powf(1.0 / p) })
        })
        .collect()
}

fn abs_moment(v: &[f64], c: f64, p: f64) -> f64 {
    NeumaierSum::from_iter(v.iter().map(|x| (x - c).abs().powf(p))).value() / v.len() as f64
}

/// Central L^p norms of `F_μ` over `samples` uniform directions.
pub fn moment_norms(
    mu: &DiscreteMeasure,
    p_list: &[f64],
    samples: usize,
    stream: &SeedStream,
) -> Result<Vec<MomentNorm>, FunctionalError> {
    let s = sample_values(mu, samples, stream, false);
    moment_norms_from_samples(&s.f, p_list)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::stats_mc;
    use crate::measure::cube_measure;

    #[test]
    fn two_point_closed_form() {
        let a = 0.37;
        let v: Vec<f64> = (0..1000).map(|k| if k % 2 == 0 { a } else { -a }).collect();
        let e = orlicz_norm(&v, 1).unwrap();
        assert!((e.norm - a / 2f64.ln()).abs() < 1e-12);
        let e2 = orlicz_norm(&v, 2).unwrap();
        assert!((e2.norm - a / 2f64.ln().sqrt()).abs() < 1e-12);
        assert!(e.residual.abs() < 1e-3);
    }

    #[test]
    fn constant_samples_are_degenerate() {
        let e = orlicz_norm(&[0.5; 200], 1).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.norm, 0.0);
        assert!(e.uncentered_norm > 0.0);
        assert!(orlicz_norm(&[0.5; 99], 1).is_err());
        assert!(orlicz_norm(&[0.5; 200], 3).is_err());
    }

    #[test]
    fn second_norm_is_the_variance() {
        let c = cube_measure(10, 20).unwrap();
        let stream = SeedStream::new(5);
        let norms = moment_norms(&c, &[1.0, 2.0, 3.0, 4.0, 8.0], 20_000, &stream).unwrap();
        let mc = stats_mc(&c, 20_000, &stream).unwrap();
        assert!((norms[1].norm.powi(2) - mc.var_f).abs() <= 1e-12 * mc.var_f);
        for w in norms.windows(2) {
            assert!(w[0].norm <= w[1].norm * (1.0 + 1e-12));
        }
    }

    #[test]
    fn cube_psi1_scale() {
        let n = 12;
        let c = cube_measure(n, 20).unwrap();
        let s = sample_values(&c, 100_000, &SeedStream::new(6), false);
        let e = orlicz_norm(&s.f, 1).unwrap();
        assert!(e.norm <= 5.0 / n as f64, "{e:?}");
    }
}
