//! Closed-form integrals over the uniform measure σ on S^{n−1}.
//!
//! Every pair integral used by the crate depends on two directions only
//! through their correlation `t = cos ρ`, so each kernel is a scalar function
//! of `t` (and the dimension). The constants `C_{n,p}` relate integrals of
//! p-homogeneous functions under σ and under the standard Gaussian:
//! `∫ f dγ_n = C_{n,p} ∫ f dσ`.

use crate::rng::{fill_sphere_point, SeedStream};
use crate::special::gamma_ratio;
use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("correlation {0} is not in [-1, 1]")]
    InvalidCorrelation(f64),
    #[error("dimension {n} is below the minimum {min} for this quantity")]
    DimensionTooSmall { n: usize, min: usize },
    #[error("unsupported expansion order {0}")]
    UnsupportedOrder(u32),
}

/// Cosine of the angle between two directions, validated into `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Correlation(f64);

impl Correlation {
    /// Inputs this far outside `[-1, 1]` are rounding noise and get clamped.
    pub const SLACK: f64 = 1e-9;

    pub fn new(t: f64) -> Result<Self, KernelError> {
        if t.is_nan() || t.abs() > 1.0 + Self::SLACK {
            return Err(KernelError::InvalidCorrelation(t));
        }
        Ok(Self(t.clamp(-1.0, 1.0)))
    }

    /// Correlation of two nonzero vectors.
    pub fn between(x: &[f64], y: &[f64]) -> Result<Self, KernelError> {
        let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let xx: f64 = x.iter().map(|a| a * a).sum();
        let yy: f64 = y.iter().map(|a| a * a).sum();
        Self::new(dot / (xx * yy).sqrt())
    }

    /// Clamp without validation; for inner loops where `t` is a computed
    /// cosine and can only overshoot by rounding.
    #[inline]
    pub(crate) fn clamped(t: f64) -> Self {
        Self(t.clamp(-1.0, 1.0))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// `C_{n,p} = n 2^{p/2−1} Γ((n+p)/2) / Γ((n+2)/2)`.
pub fn cnp(n: usize, p: f64) -> f64 {
    assert!(n >= 1, "dimension must be at least 1");
    assert!(p >= 0.0, "cnp needs p >= 0");
    if p == 0.0 {
        return 1.0;
    }
    let nf = n as f64;
    nf * (p / 2.0 - 1.0).exp2() * gamma_ratio((nf + 2.0) / 2.0, (p - 2.0) / 2.0)
}

/// `∫ (θ·η)₊ dσ(θ)` for a unit vector η; equals `1/(√(2π) C_{n,1})`.
pub fn kernel_plus1(n: usize) -> f64 {
    assert!(n >= 1, "dimension must be at least 1");
    // 1/(√(2π) C_{n,1}) = Γ(n/2 + 1) / (n √π Γ((n+1)/2))
    let nf = n as f64;
    gamma_ratio((nf + 1.0) / 2.0, 0.5) / (nf * PI.sqrt())
}

/// `φ(t) = (π − arccos t) t + √(1 − t²)`.
#[inline]
pub fn phi(t: Correlation) -> f64 {
    let t = t.value();
    (PI - t.acos()) * t + (1.0 - t * t).max(0.0).sqrt()
}

/// `∫ (θ·η)₊ (θ·ξ)₊ dσ(θ) = φ(t) / (2πn)` for unit vectors with `η·ξ = t`.
#[inline]
pub fn kernel_plus2(t: Correlation, n: usize) -> f64 {
    phi(t) / (2.0 * PI * n as f64)
}

/// `σ({θ·x ≥ 0} ∩ {θ·y ≥ 0}) = (π − arccos t) / 2π`.
#[inline]
pub fn kernel_halfspace(t: Correlation) -> f64 {
    psi(t) / (2.0 * PI)
}

/// `∫ (θ·η)³ (θ·ξ)³ dσ(θ) = (9t + 6t³) / C_{n,6}`, with `C_{n,6} = n(n+2)(n+4)`.
#[inline]
pub fn kernel_cube3(t: Correlation, n: usize) -> f64 {
    let t = t.value();
    let nf = n as f64;
    (9.0 * t + 6.0 * t * t * t) / (nf * (nf + 2.0) * (nf + 4.0))
}

/// Truncated Taylor polynomial of φ at 0 through order 2 or 4.
pub fn phi_poly(t: f64, order: u32) -> Result<f64, KernelError> {
    let t2 = t * t;
    let quadratic = 1.0 + PI * t / 2.0 + t2 / 2.0;
    match order {
        2 => Ok(quadratic),
        4 => Ok(quadratic + t2 * t2 / 24.0),
        other => Err(KernelError::UnsupportedOrder(other)),
    }
}

/// `ψ(t) = π − arccos t`.
#[inline]
pub fn psi(t: Correlation) -> f64 {
    PI - t.value().acos()
}

/// `φ(t) − 1 − πt/2 − t²/2`, the even part of φ beyond order two.
///
/// Power series `Σ_{j≥2} b_{j−1} t^{2j} / (2j(2j−1))` with `b_j = C(2j, j)/4ʲ`
/// for `|t| ≤ 1/2`, where the closed form would cancel.
pub fn phi_excess(t: Correlation) -> f64 {
    let t = t.value();
    let t2 = t * t;
    if t2 > 0.25 {
        return t * t.asin() - t2 / (1.0 + (1.0 - t2).sqrt()) - 0.5 * t2;
    }
    excess_series(t2)
}

/// `(φ(t), ψ(t), phi_excess(t))` sharing one arcsine and one square root.
#[inline]
pub(crate) fn phi_psi_excess(t: Correlation) -> (f64, f64, f64) {
    let t = t.value();
    let t2 = t * t;
    let s = t.asin();
    let r = (1.0 - t2).max(0.0).sqrt();
    let psi = PI / 2.0 + s;
    let excess = if t2 > 0.25 { t * s - t2 / (1.0 + r) - 0.5 * t2 } else { excess_series(t2) };
    (t * psi + r, psi, excess)
}

#[inline]
fn excess_series(t2: f64) -> f64 {
    // Truncation below 1e-17 relative: 8 terms for t² ≤ 1/64, 16 for t² ≤ 1/16.
    let terms = if t2 <= 1.0 / 64.0 {
        8
    } else if t2 <= 0.0625 {
        16
    } else {
        EXCESS_TERMS
    };
    // Four interleaved Horner chains in t⁸ keep the dependency chain short.
    let x4 = (t2 * t2) * (t2 * t2);
    let mut q = [0.0f64; 4];
    for k in (0..terms / 4).rev() {
        for (r, acc) in q.iter_mut().enumerate() {
            *acc = *acc * x4 + EXCESS_COEFFS[4 * k + r];
        }
    }
    let p = (q[3] * t2 + q[2]) * (t2 * t2) + (q[1] * t2 + q[0]);
    p * t2 * t2
}

const EXCESS_TERMS: usize = 28;

/// `b_{j−1} / (2j(2j−1))` for j = 2, 3, ...
static EXCESS_COEFFS: [f64; EXCESS_TERMS] = {
    let mut c = [0.0; EXCESS_TERMS];
    let mut b = 0.5;
    let mut k = 0;
    while k < EXCESS_TERMS {
        let j = (k + 2) as f64;
        c[k] = b / (2.0 * j * (2.0 * j - 1.0));
        b *= (2.0 * j - 1.0) / (2.0 * j);
        k += 1;
    }
    c
};

/// `∫ phi_excess(θ·η) dσ(θ)` for a unit vector η.
///
/// Tanh-sinh quadrature in `t = sin u` against `cos^{n−2} u` below n = 48,
/// the moment series `Σ c_j E[t^{2j}]` above.
pub fn phi_excess_sphere_mean(n: usize) -> f64 {
    assert!(n >= 1, "dimension must be at least 1");
    if n == 1 {
        return phi_excess(Correlation(1.0));
    }
    let nf = n as f64;
    if n >= 48 {
        // E t^{2j} = Π_{i<j} (2i+1)/(n+2i).
        let (mut b, mut m, mut s) = (0.5, 3.0 / (nf * (nf + 2.0)), 0.0);
        for j in 2..10_000 {
            let jf = j as f64;
            let term = b * m / (2.0 * jf * (2.0 * jf - 1.0));
            s += term;
            if term <= 1e-18 * s {
                break;
            }
            b *= (2.0 * jf - 1.0) / (2.0 * jf);
            m *= (2.0 * jf + 1.0) / (nf + 2.0 * jf);
        }
        return s;
    }
    let h = 1.0 / 64.0;
    let (mut num, mut den) = (crate::reduce::NeumaierSum::new(), crate::reduce::NeumaierSum::new());
    for k in -320i32..=320 {
        let s = k as f64 * h;
        let a = 0.5 * PI * s.sinh();
        let u = 0.25 * PI * (1.0 + a.tanh());
        let w = s.cosh() / (a.cosh() * a.cosh());
        let c = u.cos().max(0.0).powi(n as i32 - 2);
        num.add(w * c * phi_excess(Correlation::clamped(u.sin())));
        den.add(w * c);
    }
    num.value() / den.value()
}

/// Cubic Taylor coefficient of ψ at 0 (that of arcsin).
pub const PSI_CUBIC: f64 = 1.0 / 6.0;

/// Cubic coefficient of ψ at 0 measured from ψ itself: the third derivative
/// by the 7-point central stencil with step `h`, divided by 6.
pub fn measured_psi_cubic(h: f64) -> f64 {
    let f = |t: f64| psi(Correlation::clamped(t));
    let d3 = (-f(3.0 * h) + 8.0 * f(2.0 * h) - 13.0 * f(h) + 13.0 * f(-h) - 8.0 * f(-2.0 * h) + f(-3.0 * h))
        / (8.0 * h * h * h);
    d3 / 6.0
}

/// Truncated Taylor polynomial of ψ at 0 through order 1 or 3.
pub fn psi_poly(t: f64, order: u32) -> Result<f64, KernelError> {
    psi_poly_with(t, order, PSI_CUBIC)
}

/// As [`psi_poly`] with an explicit cubic coefficient.
pub fn psi_poly_with(t: f64, order: u32, cubic: f64) -> Result<f64, KernelError> {
    match order {
        1 => Ok(PI / 2.0 + t),
        3 => Ok(PI / 2.0 + t + cubic * t * t * t),
        other => Err(KernelError::UnsupportedOrder(other)),
    }
}

/// `1/n + 1/(2n²) + 1/(8n³)`, the large-n expansion of `C_{n,1}^{-2}`.
pub fn cn1_inv_sq_series(n: usize) -> f64 {
    let nf = n as f64;
    1.0 / nf + 1.0 / (2.0 * nf * nf) + 1.0 / (8.0 * nf * nf * nf)
}

/// `Ω_n = ((n−2)/2) (Γ((n−1)/2) / Γ(n/2))²`, the density constant of the
/// rotated-equator pair law.
pub fn omega_n(n: usize) -> Result<f64, KernelError> {
    if n < 3 {
        return Err(KernelError::DimensionTooSmall { n, min: 3 });
    }
    let nf = n as f64;
    let r = 1.0 / gamma_ratio((nf - 1.0) / 2.0, 0.5);
    Ok((nf - 2.0) / 2.0 * r * r)
}

/// Per-dimension constants, computed once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphericalConstants {
    n: usize,
    c1: f64,
    c6: f64,
    plus1: f64,
    omega: Option<f64>,
}

impl SphericalConstants {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "dimension must be at least 1");
        Self {
            n,
            c1: cnp(n, 1.0),
            c6: cnp(n, 6.0),
            plus1: kernel_plus1(n),
            omega: omega_n(n).ok(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn cnp(&self, p: f64) -> f64 {
        match p {
            p if p == 1.0 => self.c1,
            p if p == 6.0 => self.c6,
            p => cnp(self.n, p),
        }
    }

    pub fn kernel_plus1(&self) -> f64 {
        self.plus1
    }

    #[inline]
    pub fn kernel_plus2(&self, t: Correlation) -> f64 {
        kernel_plus2(t, self.n)
    }

    #[inline]
    pub fn kernel_cube3(&self, t: Correlation) -> f64 {
        let t = t.value();
        (9.0 * t + 6.0 * t * t * t) / self.c6
    }

    pub fn omega(&self) -> Result<f64, KernelError> {
        self.omega.ok_or(KernelError::DimensionTooSmall { n: self.n, min: 3 })
    }
}

/// Closed-form kernels against Monte Carlo sphere averages for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairKernelCheck {
    pub n: usize,
    pub t: f64,
    pub plus2: McComparison,
    pub halfspace: McComparison,
    pub cube3: McComparison,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McComparison {
    pub exact: f64,
    pub estimate: f64,
    pub std_err: f64,
}

impl McComparison {
    /// |estimate − exact| in units of the standard error.
    pub fn z_score(&self) -> f64 {
        let diff = (self.estimate - self.exact).abs();
        if self.std_err > 0.0 {
            diff / self.std_err
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn within(&self, k_se: f64) -> bool {
        self.z_score() <= k_se
    }
}

/// Random unit pair with correlation drawn uniformly from `[-0.99, 0.99]`.
pub fn random_unit_pair<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2, "a pair with prescribed correlation needs n >= 2");
    let mut eta = vec![0.0; n];
    fill_sphere_point(rng, &mut eta);
    let mut zeta = vec![0.0; n];
    loop {
        fill_sphere_point(rng, &mut zeta);
        let d: f64 = eta.iter().zip(&zeta).map(|(a, b)| a * b).sum();
        zeta.iter_mut().zip(&eta).for_each(|(z, e)| *z -= d * e);
        let nz: f64 = zeta.iter().map(|z| z * z).sum::<f64>().sqrt();
        if nz > 1e-6 {
            zeta.iter_mut().for_each(|z| *z /= nz);
            break;
        }
    }
    let t: f64 = rng.random_range(-0.99..=0.99);
    let s = (1.0 - t * t).sqrt();
    let xi = eta.iter().zip(&zeta).map(|(e, z)| t * e + s * z).collect();
    (eta, xi)
}

/// Compares `kernel_plus2`, `kernel_halfspace` and `kernel_cube3` with sphere
/// averages over `samples` shared uniform points, for each supplied pair.
pub fn mc_pair_kernels(
    n: usize,
    pairs: &[(Vec<f64>, Vec<f64>)],
    samples: usize,
    stream: &SeedStream,
) -> Vec<PairKernelCheck> {
    let consts = SphericalConstants::new(n);
    let np = pairs.len();
    // Columns: η_1..η_P, ξ_1..ξ_P
    let dirs = DMatrix::from_fn(n, 2 * np, |r, c| {
        if c < np {
            pairs[c].0[r]
        } else {
            pairs[c - np].1[r]
        }
    });
    // Per block: for each pair and kernel, Σv and Σv².
    let partials = stream.blocked(samples, |rng, range| {
        let b = range.len();
        let mut theta = DMatrix::<f64>::zeros(b, n);
        let mut row = vec![0.0; n];
        for i in 0..b {
            fill_sphere_point(rng, &mut row);
            for (k, v) in row.iter().enumerate() {
                theta[(i, k)] = *v;
            }
        }
        let proj = &theta * &dirs;
        let mut acc = vec![[crate::reduce::NeumaierSum::new(); 6]; np];
        for (p, slot) in acc.iter_mut().enumerate() {
            for i in 0..b {
                let a = proj[(i, p)];
                let c = proj[(i, np + p)];
                let plus = a.max(0.0) * c.max(0.0);
                let half = if a >= 0.0 && c >= 0.0 { 1.0 } else { 0.0 };
                let cube = a * a * a * c * c * c;
                for (k, v) in [plus, half, cube].into_iter().enumerate() {
                    slot[2 * k].add(v);
                    slot[2 * k + 1].add(v * v);
                }
            }
        }
        vec![acc]
    });
    let m = samples as f64;
    (0..np)
        .map(|p| {
            let mut tot = [crate::reduce::NeumaierSum::new(); 6];
            for block in &partials {
                for k in 0..6 {
                    tot[k].merge(&block[p][k]);
                }
            }
            let stat = |k: usize, exact: f64| {
                let mean = tot[2 * k].value() / m;
                let var = (tot[2 * k + 1].value() / m - mean * mean).max(0.0);
                McComparison { exact, estimate: mean, std_err: (var / (m - 1.0)).sqrt() }
            };
            let t = Correlation::between(&pairs[p].0, &pairs[p].1)
                .unwrap_or_else(|_| Correlation::clamped(0.0));
            PairKernelCheck {
                n,
                t: t.value(),
                plus2: stat(0, consts.kernel_plus2(t)),
                halfspace: stat(1, kernel_halfspace(t)),
                cube3: stat(2, consts.kernel_cube3(t)),
            }
        })
        .collect()
}

/// Monte Carlo estimate of `kernel_plus1(n)` as `(mean, std_err)`.
pub fn mc_plus1(n: usize, samples: usize, stream: &SeedStream) -> McComparison {
    let vals = stream.blocked(samples, |rng, range| {
        let mut row = vec![0.0; n];
        range
            .map(|_| {
                fill_sphere_point(rng, &mut row);
                row[0].max(0.0)
            })
            .collect::<Vec<_>>()
    });
    let m = samples as f64;
    let mean = crate::reduce::NeumaierSum::from_iter(vals.iter().copied()).value() / m;
    let var = crate::reduce::NeumaierSum::from_iter(vals.iter().map(|v| (v - mean).powi(2))).value()
        / (m - 1.0);
    McComparison { exact: kernel_plus1(n), estimate: mean, std_err: (var / m).sqrt() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn phi_excess_matches_closed_form() {
        for k in -100..=100 {
            let t = k as f64 / 100.0;
            let direct = phi(Correlation(t)) - 1.0 - PI * t / 2.0 - t * t / 2.0;
            assert!((phi_excess(Correlation(t)) - direct).abs() < 1e-15, "t={t}");
        }
        assert!((phi_excess(Correlation(1e-3)) - (1e-12 / 24.0 + 1e-18 / 80.0)).abs() < 1e-26);
    }

    #[test]
    fn phi_excess_sphere_mean_matches_gamma_form() {
        // E φ(t) = 2πn·kernel_plus1² and E t = 0, E t² = 1/n.
        for n in 2..=160usize {
            let nf = n as f64;
            let direct = 2.0 * PI * nf * kernel_plus1(n).powi(2) - 1.0 - 0.5 / nf;
            let e = phi_excess_sphere_mean(n);
            assert!((e - direct).abs() < 1e-14, "n={n}: {e} vs {direct}");
        }
        let (a, b) = (phi_excess_sphere_mean(47), phi_excess_sphere_mean(48));
        assert!(a > b && (a - b) / b < 0.05);
    }

    /// Composite Simpson rule on [a, b] with `m` (even) panels.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
        let h = (b - a) / m as f64;
        let mut s = f(a) + f(b);
        for k in 1..m {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + k as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn cnp_exact_values() {
        for n in 1..200 {
            assert_eq!(cnp(n, 2.0), n as f64);
            assert_eq!(cnp(n, 0.0), 1.0);
        }
        // (1/2π)∫(cos φ)₊ dφ = 1/π and C_{2,1} = 1/(√(2π) · 1/π)
        let quad = simpson(|phi: f64| phi.cos().max(0.0), -PI / 2.0, PI / 2.0, 2000) / (2.0 * PI);
        assert_relative_eq!(quad, 1.0 / PI, max_relative = 1e-12);
        assert_relative_eq!(cnp(2, 1.0), 1.0 / ((2.0 * PI).sqrt() * quad), max_relative = 1e-12);
        assert_relative_eq!(cnp(2, 1.0), (PI / 2.0).sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn cnp_six_is_product() {
        for n in 1..100 {
            let nf = n as f64;
            assert_relative_eq!(cnp(n, 6.0), nf * (nf + 2.0) * (nf + 4.0), max_relative = 1e-14);
        }
        // large n must not overflow
        assert!(cnp(5000, 1.0).is_finite());
        assert!(cnp(5000, 3.5).is_finite());
    }

    #[test]
    fn plus1_small_dimensions() {
        assert_eq!(kernel_plus1(1), 0.5);
        assert_relative_eq!(kernel_plus1(2), 1.0 / PI, max_relative = 1e-15);
        let quad = simpson(|phi: f64| phi.cos().max(0.0), -PI / 2.0, PI / 2.0, 2000) / (2.0 * PI);
        assert_relative_eq!(kernel_plus1(2), quad, max_relative = 1e-12);
    }

    #[test]
    fn kernel_endpoints() {
        let one = Correlation::new(1.0).unwrap();
        let minus = Correlation::new(-1.0).unwrap();
        for n in [1, 2, 5, 40] {
            assert_relative_eq!(kernel_plus2(one, n), 1.0 / (2.0 * n as f64), max_relative = 1e-15);
            assert_eq!(kernel_plus2(minus, n), 0.0);
            assert_relative_eq!(
                kernel_cube3(one, n),
                15.0 / cnp(n, 6.0),
                max_relative = 1e-15
            );
            assert_eq!(kernel_cube3(Correlation::new(0.0).unwrap(), n), 0.0);
        }
        assert_eq!(kernel_halfspace(one), 0.5);
        assert_eq!(kernel_halfspace(minus), 0.0);
        assert_eq!(kernel_halfspace(Correlation::new(0.0).unwrap()), 0.25);
        assert_eq!(phi(Correlation::new(0.0).unwrap()), 1.0);
        assert_eq!(phi(one), PI);
        assert_eq!(psi(Correlation::new(0.0).unwrap()), PI / 2.0);
        assert_eq!(psi(one), PI);
        assert_eq!(psi(minus), 0.0);
    }

    #[test]
    fn correlation_validation() {
        assert!(Correlation::new(f64::NAN).is_err());
        assert!(Correlation::new(1.0 + 1e-6).is_err());
        assert_eq!(Correlation::new(1.0 + 1e-12).unwrap().value(), 1.0);
        assert_eq!(Correlation::new(-1.0 - 1e-12).unwrap().value(), -1.0);
    }

    #[test]
    fn omega_closed_forms() {
        assert_relative_eq!(omega_n(3).unwrap(), 2.0 / PI, max_relative = 1e-15);
        assert_relative_eq!(omega_n(4).unwrap(), PI / 4.0, max_relative = 1e-15);
        assert!(omega_n(2).is_err());
    }

    #[test]
    fn omega_normalizes_pair_density_by_quadrature() {
        // t = θ₁·θ₂ has density (1−t²)^{(n−3)/2} / B(1/2, (n−1)/2); substitute t = sin u.
        for n in 4..=64 {
            let nf = n as f64;
            let beta = (statrs::function::gamma::ln_gamma(0.5)
                + statrs::function::gamma::ln_gamma((nf - 1.0) / 2.0)
                - statrs::function::gamma::ln_gamma(nf / 2.0))
            .exp();
            let integral = simpson(|u: f64| u.cos().powf(nf - 3.0), -PI / 2.0, PI / 2.0, 4000);
            let total = omega_n(n).unwrap() * integral / beta;
            assert!((total - 1.0).abs() < 1e-10, "n={n}: {total}");
        }
    }

    #[test]
    fn phi_quartic_remainder() {
        // next coefficient is 1/80; dense grid oracle away from 0 where t⁶ underflows the rounding
        let mut worst: f64 = 0.0;
        for k in 0..=2000 {
            let t = 0.05 + 0.45 * k as f64 / 2000.0;
            for s in [t, -t] {
                let r = (phi(Correlation::new(s).unwrap()) - phi_poly(s, 4).unwrap()).abs() / s.powi(6);
                worst = worst.max(r);
            }
        }
        assert!(worst <= 0.02, "{worst}");
        assert!(worst >= 0.0125 - 1e-6);
        assert!(phi_poly(0.1, 3).is_err());
    }

    #[test]
    fn psi_cubic_coefficient_by_finite_differences() {
        let coeff = measured_psi_cubic(1e-2);
        assert!((coeff - 1.0 / 6.0).abs() < 1e-6, "{coeff}");
        assert!((coeff - 1.0 / (12.0 * PI)).abs() > 0.1);
        assert_eq!(psi_poly(0.2, 3).unwrap(), PI / 2.0 + 0.2 + 0.2f64.powi(3) / 6.0);
    }

    #[test]
    fn cn1_series_error_scales_as_n_minus_4() {
        assert_eq!(cn1_inv_sq_series(1), 1.625);
        let exact2 = cnp(2, 1.0).powi(-2);
        assert_relative_eq!(exact2, 2.0 / PI, max_relative = 1e-15);
        assert!((exact2 - cn1_inv_sq_series(2)).abs() < 1.0 / 32.0);
        let mut scaled = Vec::new();
        let mut n = 8;
        while n <= 4096 {
            let e = (cnp(n, 1.0).powi(-2) - cn1_inv_sq_series(n)).abs() * (n as f64).powi(4);
            scaled.push(e);
            n *= 2;
        }
        let max = scaled.iter().cloned().fold(0.0, f64::max);
        assert!(max < 0.1, "{scaled:?}");
    }

    #[test]
    fn phi_factorization_and_monotonicity() {
        let mut prev = -1.0;
        for k in 0..=400 {
            let t = Correlation::new(-1.0 + k as f64 / 200.0).unwrap();
            for n in [1, 3, 17] {
                assert_relative_eq!(
                    phi(t),
                    2.0 * PI * n as f64 * kernel_plus2(t, n),
                    max_relative = 1e-14
                );
            }
            let v = kernel_plus2(t, 5);
            assert!(v >= 0.0 && v >= prev);
            prev = v;
            let minus = Correlation::new(-t.value()).unwrap();
            assert!((kernel_halfspace(t) + kernel_halfspace(minus) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn mc_kernels_small_case() {
        let stream = SeedStream::new(11);
        let mut rng = stream.fork(1).block_rng(0);
        let (eta, _) = random_unit_pair(8, &mut rng);
        // build a pair with t = 0.3 exactly
        let mut zeta = vec![0.0; 8];
        fill_sphere_point(&mut rng, &mut zeta);
        let d: f64 = eta.iter().zip(&zeta).map(|(a, b)| a * b).sum();
        zeta.iter_mut().zip(&eta).for_each(|(z, e)| *z -= d * e);
        let nz = zeta.iter().map(|z| z * z).sum::<f64>().sqrt();
        let xi: Vec<f64> =
            eta.iter().zip(&zeta).map(|(e, z)| 0.3 * e + (1.0f64 - 0.09).sqrt() * z / nz).collect();
        let checks = mc_pair_kernels(8, &[(eta, xi)], 1_000_000, &stream.fork(2));
        let c = &checks[0];
        assert!((c.t - 0.3).abs() < 1e-12);
        assert!(c.plus2.within(4.0), "{:?}", c.plus2);
        assert!(c.halfspace.within(4.0), "{:?}", c.halfspace);
        assert!(c.cube3.within(4.0), "{:?}", c.cube3);
        let p1 = mc_plus1(64, 1_000_000, &stream.fork(3));
        assert!(p1.within(4.0), "{p1:?}");
    }

    #[test]
    fn deterministic_evaluation() {
        let t = Correlation::new(0.123456).unwrap();
        assert_eq!(kernel_plus2(t, 9).to_bits(), kernel_plus2(t, 9).to_bits());
        assert_eq!(SphericalConstants::new(9), SphericalConstants::new(9));
    }
}
