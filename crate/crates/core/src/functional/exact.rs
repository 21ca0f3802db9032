//! Exact statistics through closed-form pair kernels.

use super::{clip_nonnegative, FStats, FunctionalError, StatsMethod};
use crate::measure::{cov1, DiscreteMeasure, DEFAULT_PAIR_CAP};
use crate::reduce::NeumaierSum;
use crate::sphere_kernel::{kernel_plus1, phi_excess_sphere_mean, phi_psi_excess, Correlation, SphericalConstants};
use nalgebra::DMatrix;
use std::f64::consts::PI;

pub fn stats_exact(mu: &DiscreteMeasure) -> Result<FStats, FunctionalError> {
    stats_exact_capped(mu, DEFAULT_PAIR_CAP)
}

/// O(N²) kernel double sums.
///
/// The variance avoids subtracting two nearly equal moments. With
/// `φ = 1 + πt/2 + t²/2 + e(t)`, the linear and quadratic parts collapse to
/// `|Σ w x|²/(4n)` and the traceless part of `Cov₁`, and only the excess
/// `e` is summed over pairs against its sphere mean.
pub fn stats_exact_capped(mu: &DiscreteMeasure, cap: usize) -> Result<FStats, FunctionalError> {
    mu.check_pair_cap(cap)?;
    let n = mu.dim();
    let consts = SphericalConstants::new(n);
    let kp1 = consts.kernel_plus1();
    let [second, excess, grad_sq] = mu.pair_sum(|i, j, d| {
        let np = mu.norm_product(i, j);
        let t = Correlation::clamped(d / np);
        let ww = mu.weight(i) * mu.weight(j);
        let (phi, psi, excess) = phi_psi_excess(t);
        [ww * np * phi, ww * np * excess, ww * d * psi]
    });
    let nf = n as f64;
    let (second, grad_sq) = (second / (2.0 * PI * nf), grad_sq / (2.0 * PI));
    let [mass] = crate::reduce::chunked_sum(mu.len(), |i| [mu.weight(i) * mu.norm(i)]);
    let c1 = cov1(mu);
    let shift = c1.trace() / nf;
    let traceless = c1 - DMatrix::identity(n, n) * shift;
    let first: Vec<f64> = (0..n)
        .map(|k| NeumaierSum::from_iter((0..mu.len()).map(|i| mu.weight(i) * mu.atom(i)[k])).value())
        .collect();
    let first_sq: f64 = first.iter().map(|v| v * v).sum();
    let var = (excess - mass * mass * phi_excess_sphere_mean(n) + 0.5 * traceless.norm_squared()) / (2.0 * PI * nf)
        + first_sq / (4.0 * nf);
    finish(n, kp1 * mass, second, var, grad_sq, StatsMethod::ExactKernel)
}

fn finish(
    n: usize,
    mean: f64,
    second: f64,
    var: f64,
    grad_sq: f64,
    method: StatsMethod,
) -> Result<FStats, FunctionalError> {
    let (var_f, c1) = clip_nonnegative("var_F", var)?;
    let (grad_s_sq, c2) = clip_nonnegative("grad_s_sq", grad_sq - second)?;
    Ok(FStats {
        n,
        mean_f: mean,
        second_moment_f: second,
        var_f,
        grad_sq,
        grad_s_sq,
        method,
        mc_std_err: None,
        samples: None,
        var_clipped: c1 || c2,
    })
}

/// Exact statistics of the uniform measure on {−1, 1}ⁿ in O(n).
///
/// Two independent vertices at Hamming distance k have correlation
/// `(n − 2k)/n`, and the distance is Binomial(n, 1/2).
pub fn cube_stats_exact(n: usize) -> Result<FStats, FunctionalError> {
    assert!(n >= 1, "dimension must be at least 1");
    let nf = n as f64;
    let kp1 = kernel_plus1(n);
    let profile = crate::special::binomial_half_profile(n);
    let (mut second, mut excess, mut grad) = (NeumaierSum::new(), NeumaierSum::new(), NeumaierSum::new());
    for (k, p) in profile.iter().enumerate() {
        let d = nf - 2.0 * k as f64;
        // Endpoints k = 0, n give exactly ±1.
        let t = Correlation::clamped(d / nf);
        let (phi, psi, e) = phi_psi_excess(t);
        second.add(p * phi);
        excess.add(p * e);
        grad.add(p * d * psi);
    }
    // Cov₁ is scalar and the centre of mass is zero.
    let var = NeumaierSum::from_iter([excess.value(), -phi_excess_sphere_mean(n)]).value() / (2.0 * PI);
    finish(n, nf.sqrt() * kp1, second.value() / (2.0 * PI), var, grad.value() / (2.0 * PI), StatsMethod::HammingExact)
}

pub fn third_moment_variance_exact(mu: &DiscreteMeasure) -> Result<f64, FunctionalError> {
    third_moment_variance_exact_capped(mu, DEFAULT_PAIR_CAP)
}

/// `n² ∫ (Σ wᵢ (xᵢ·θ)³)² dσ(θ)`.
pub fn third_moment_variance_exact_capped(mu: &DiscreteMeasure, cap: usize) -> Result<f64, FunctionalError> {
    mu.check_pair_cap(cap)?;
    let n = mu.dim() as f64;
    let c6 = crate::sphere_kernel::cnp(mu.dim(), 6.0);
    let [s] = mu.pair_sum(|i, j, d| {
        let np = mu.norm_product(i, j);
        let t = (d / np).clamp(-1.0, 1.0);
        // |x|³|y|³ (9t + 6t³)
        [mu.weight(i) * mu.weight(j) * np * np * np * t * (9.0 + 6.0 * t * t)]
    });
    Ok(n * n * s / c6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::cube_measure;
    use std::f64::consts::PI;

    #[test]
    fn point_mass_closed_forms() {
        for n in [2usize, 3, 7] {
            let mut atom = vec![0.0; n];
            atom[0] = 1.0;
            let d = DiscreteMeasure::uniform(n, atom).unwrap();
            let s = stats_exact(&d).unwrap();
            let nf = n as f64;
            assert!((s.second_moment_f - 0.5 / nf).abs() < 1e-15);
            assert!((s.grad_sq - 0.5).abs() < 1e-15);
            assert!((s.grad_s_sq - (0.5 - 0.5 / nf)).abs() < 1e-15);
            let third = third_moment_variance_exact(&d).unwrap();
            let expect = nf * nf * 15.0 / (nf * (nf + 2.0) * (nf + 4.0));
            assert!((third - expect).abs() < 1e-13 * expect);
        }
    }

    #[test]
    fn square_variance_closed_form() {
        let s = stats_exact(&cube_measure(2, 20).unwrap()).unwrap();
        let exact = 0.125 + 0.25 / PI - 2.0 / (PI * PI);
        assert!((s.var_f - exact).abs() < 1e-12 * exact);
        // Circle quadrature of Var(max(|cos|,|sin|)/2).
        let m = 200_000;
        let (mut a, mut b) = (0.0, 0.0);
        for k in 0..m {
            let u = (k as f64 + 0.5) / m as f64 * 2.0 * PI;
            let f = u.cos().abs().max(u.sin().abs()) / 2.0;
            a += f;
            b += f * f;
        }
        let quad = b / m as f64 - (a / m as f64).powi(2);
        assert!((quad - exact).abs() < 1e-10);
    }

    #[test]
    fn one_dimensional_symmetric_measure_has_no_variance() {
        let m = DiscreteMeasure::uniform(1, vec![1.0, -1.0]).unwrap();
        assert_eq!(stats_exact(&m).unwrap().var_f, 0.0);
        assert_eq!(cube_stats_exact(1).unwrap().var_f, 0.0);
    }

    #[test]
    fn hamming_matches_brute_force() {
        for n in 1..=9 {
            let fast = cube_stats_exact(n).unwrap();
            let slow = stats_exact(&cube_measure(n, 20).unwrap()).unwrap();
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
            assert!(rel(fast.mean_f, slow.mean_f) < 1e-12);
            assert!(rel(fast.second_moment_f, slow.second_moment_f) < 1e-12);
            assert!(rel(fast.grad_sq, slow.grad_sq) < 1e-12);
            if n > 1 {
                assert!(rel(fast.var_f, slow.var_f) < 1e-12, "n={n}");
            }
        }
    }

    #[test]
    fn symmetric_measure_has_zero_third_moment() {
        assert!(third_moment_variance_exact(&cube_measure(8, 20).unwrap()).unwrap().abs() < 1e-12);
    }
}
