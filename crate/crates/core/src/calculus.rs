//! Finite-difference spherical derivatives of smooth 1-homogeneous test
//! functions and Monte Carlo checks of integral identities on the sphere.
//!
//! For a 1-homogeneous `f` the spherical Hessian is
//! `f''_S(θ) = P_θ (f''(θ) − (∇f(θ)·θ) Id) P_θ` with `P_θ = Id − θθᵀ`.

use crate::functional::McEstimate;
use crate::reduce::NeumaierSum;
use crate::rng::{fill_sphere_point, SeedStream};
use crate::sphere_kernel::{omega_n, KernelError};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Default finite-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// Smooth 1-homogeneous functions on ℝⁿ∖{0} with closed-form derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum HomogeneousTestFunction {
    /// `x·a`.
    Linear { a: Vec<f64> },
    /// `|x|`, constant on the sphere.
    Norm { n: usize },
    /// `(x·a)(x·b)/|x|`.
    BilinearNormalized { a: Vec<f64>, b: Vec<f64> },
    /// `Σ c_k (x·a_k)²/|x|`.
    QuadraticMixture { terms: Vec<(f64, Vec<f64>)> },
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut v = vec![0.0; n];
    fill_sphere_point(rng, &mut v);
    v
}

/// Gradient and Hessian of `(x·a)(x·b)/|x|`.
fn bilinear_derivatives(x: &[f64], a: &[f64], b: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.len();
    let (u, v) = (dot(x, a), dot(x, b));
    let r2 = dot(x, x);
    let r = r2.sqrt();
    let r3 = r2 * r;
    let xv = DVector::from_column_slice(x);
    let av = DVector::from_column_slice(a);
    let bv = DVector::from_column_slice(b);
    let m = &av * v + &bv * u;
    let grad = &m / r - &xv * (u * v / r3);
    let hess = (&av * bv.transpose() + &bv * av.transpose()) / r
        - (&m * xv.transpose() + &xv * m.transpose()) / r3
        - DMatrix::identity(n, n) * (u * v / r3)
        + &xv * xv.transpose() * (3.0 * u * v / (r3 * r2));
    (grad, hess)
}

impl HomogeneousTestFunction {
    pub fn random_bilinear<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self::BilinearNormalized { a: random_vector(n, rng), b: random_vector(n, rng) }
    }

    /// Mixture of `terms` squares with coefficients uniform in [0.5, 1.5].
    pub fn random_quadratic_mixture<R: Rng + ?Sized>(n: usize, terms: usize, rng: &mut R) -> Self {
        Self::QuadraticMixture {
            terms: (0..terms).map(|_| (rng.random_range(0.5..1.5), random_vector(n, rng))).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Linear { a } => a.len(),
            Self::Norm { n } => *n,
            Self::BilinearNormalized { a, .. } => a.len(),
            Self::QuadraticMixture { terms } => terms.first().map_or(0, |t| t.1.len()),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Self::Linear { .. } => "linear",
            Self::Norm { .. } => "norm",
            Self::BilinearNormalized { .. } => "bilinear-normalized",
            Self::QuadraticMixture { .. } => "quadratic-mixture",
        }
    }

    /// Even functions: `f(−x) = f(x)`.
    pub fn is_even(&self) -> bool {
        !matches!(self, Self::Linear { .. })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Linear { a } => dot(x, a),
            Self::Norm { .. } => dot(x, x).sqrt(),
            Self::BilinearNormalized { a, b } => dot(x, a) * dot(x, b) / dot(x, x).sqrt(),
            Self::QuadraticMixture { terms } => {
                let r = dot(x, x).sqrt();
                terms.iter().map(|(c, a)| c * dot(x, a).powi(2)).sum::<f64>() / r
            }
        }
    }

    /// Closed-form Euclidean gradient and Hessian.
    pub fn derivatives(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let n = x.len();
        match self {
            Self::Linear { a } => (DVector::from_column_slice(a), DMatrix::zeros(n, n)),
            Self::Norm { .. } => {
                let r = dot(x, x).sqrt();
                let xv = DVector::from_column_slice(x);
                let hess = (DMatrix::identity(n, n) - &xv * xv.transpose() / (r * r)) / r;
                (xv / r, hess)
            }
            Self::BilinearNormalized { a, b } => bilinear_derivatives(x, a, b),
            Self::QuadraticMixture { terms } => {
                let mut g = DVector::zeros(n);
                let mut h = DMatrix::zeros(n, n);
                for (c, a) in terms {
                    let (gk, hk) = bilinear_derivatives(x, a, a);
                    g += gk * *c;
                    h += hk * *c;
                }
                (g, h)
            }
        }
    }
}

fn projector(theta: &[f64]) -> DMatrix<f64> {
    let t = DVector::from_column_slice(theta);
    DMatrix::identity(theta.len(), theta.len()) - &t * t.transpose()
}

/// Central-difference Euclidean gradient.
pub fn euclidean_grad_fd(f: &HomogeneousTestFunction, x: &[f64], h: f64) -> DVector<f64> {
    let mut y = x.to_vec();
    DVector::from_fn(x.len(), |k, _| {
        y[k] = x[k] + h;
        let up = f.eval(&y);
        y[k] = x[k] - h;
        let down = f.eval(&y);
        y[k] = x[k];
        (up - down) / (2.0 * h)
    })
}

/// Central-difference Euclidean Hessian, symmetrised.
pub fn euclidean_hessian_fd(f: &HomogeneousTestFunction, x: &[f64], h: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut y = x.to_vec();
    let mut eval_at = |k: usize, sk: f64, l: usize, sl: f64| {
        y[k] += sk * h;
        y[l] += sl * h;
        let v = f.eval(&y);
        y[k] = x[k];
        y[l] = x[l];
        v
    };
    let mut m = DMatrix::zeros(n, n);
    for k in 0..n {
        for l in k..n {
            let v = (eval_at(k, 1.0, l, 1.0) - eval_at(k, 1.0, l, -1.0) - eval_at(k, -1.0, l, 1.0)
                + eval_at(k, -1.0, l, -1.0))
                / (4.0 * h * h);
            m[(k, l)] = v;
            m[(l, k)] = v;
        }
    }
    m
}

/// `P_θ ∇f(θ)` by central differences.
pub fn spherical_grad_fd(f: &HomogeneousTestFunction, theta: &[f64], h: f64) -> DVector<f64> {
    projector(theta) * euclidean_grad_fd(f, theta, h)
}

/// `P_θ (f''(θ) − (∇f(θ)·θ) Id) P_θ` by central differences.
pub fn spherical_hessian_fd(f: &HomogeneousTestFunction, theta: &[f64], h: f64) -> DMatrix<f64> {
    let g = euclidean_grad_fd(f, theta, h);
    let hess = euclidean_hessian_fd(f, theta, h);
    spherical_hessian_from(theta, &g, &hess)
}

/// Spherical Hessian from Euclidean derivatives.
pub fn spherical_hessian_from(theta: &[f64], grad: &DVector<f64>, hess: &DMatrix<f64>) -> DMatrix<f64> {
    let n = theta.len();
    let radial = grad.dot(&DVector::from_column_slice(theta));
    let p = projector(theta);
    let m = &p * (hess - DMatrix::identity(n, n) * radial) * &p;
    crate::linalg::symmetrize(&m)
}

/// Per-direction quantities shared by the identity and Poincaré checks:
/// `f`, `|∇_S f|²`, `‖f''‖²_HS`, `‖f''_S‖²_HS`.
fn pointwise(f: &HomogeneousTestFunction, theta: &[f64], h: f64) -> [f64; 4] {
    let g = euclidean_grad_fd(f, theta, h);
    let hess = euclidean_hessian_fd(f, theta, h);
    let gs = projector(theta) * &g;
    let hs = spherical_hessian_from(theta, &g, &hess);
    [f.eval(theta), gs.norm_squared(), hess.norm_squared(), hs.norm_squared()]
}

fn sample_pointwise(f: &HomogeneousTestFunction, samples: usize, stream: &SeedStream, h: f64) -> Vec<[f64; 4]> {
    let n = f.dim();
    stream.blocked(samples, |rng, range| {
        let mut theta = vec![0.0; n];
        range
            .map(|_| {
                fill_sphere_point(rng, &mut theta);
                pointwise(f, &theta, h)
            })
            .collect()
    })
}

fn mean_se(v: impl Iterator<Item = f64> + Clone, m: usize) -> (f64, f64) {
    let mf = m as f64;
    let mean = NeumaierSum::from_iter(v.clone()).value() / mf;
    let var = NeumaierSum::from_iter(v.map(|x| (x - mean).powi(2))).value() / mf;
    (mean, (var / mf).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub n: usize,
    pub samples: usize,
    /// `E‖f''_S‖²_HS`.
    pub lhs: f64,
    /// `E‖f''‖²_HS − (n−1)(Ef)² − (n−1)Var f + 2E|∇_S f|²`.
    pub rhs: f64,
    pub difference: f64,
    pub std_err: f64,
    /// Allowance for finite-difference bias.
    pub fd_floor: f64,
    pub pass: bool,
}

/// Both sides of the second-order expansion identity on common sample points.
pub fn check_second_order_identity(
    f: &HomogeneousTestFunction,
    samples: usize,
    stream: &SeedStream,
    h: f64,
) -> IdentityReport {
    let n = f.dim();
    let nm1 = n as f64 - 1.0;
    let rows = sample_pointwise(f, samples, stream, h);
    let col = |k: usize| rows.iter().map(move |r| r[k]);
    let mf = samples as f64;
    let mean = |k: usize| NeumaierSum::from_iter(col(k)).value() / mf;
    let (ef, grad_s, hess, hess_s) = (mean(0), mean(1), mean(2), mean(3));
    let var = NeumaierSum::from_iter(col(0).map(|v| (v - ef).powi(2))).value() / mf;
    let rhs = hess - nm1 * ef * ef - nm1 * var + 2.0 * grad_s;
    // Pointwise D has mean lhs − rhs; its spread gives the standard error.
    let d = rows.iter().map(|r| r[3] - r[2] + nm1 * r[0] * r[0] - 2.0 * r[1]);
    let (_, std_err) = mean_se(d, samples);
    let difference = hess_s - rhs;
    let scale = hess + nm1 * (ef * ef + var) + 2.0 * grad_s;
    let fd_floor = 1e-6 * scale.max(1.0);
    IdentityReport {
        n,
        samples,
        lhs: hess_s,
        rhs,
        difference,
        std_err,
        fd_floor,
        pass: difference.abs() <= 4.0 * std_err + fd_floor,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaRandReport {
    pub n: usize,
    pub samples: usize,
    pub omega: f64,
    /// `Ω_n E_{σ×σ}[1/√(1−t²)]`, target 1.
    pub normalization: McEstimate,
    /// `Ω_n E_{σ×σ}[t²/√(1−t²)]`, target `1/(n−1)`.
    pub t2_reweighted: McEstimate,
    pub t2_exact: f64,
    /// Quadrature value of the normalisation, independent of sampling.
    pub quadrature: f64,
    /// n = 3: the weight has infinite variance and the standard errors are unreliable.
    pub infinite_variance: bool,
    pub normalization_pass: bool,
    pub moment_pass: bool,
}

/// `Ω_n ∫ (1−t²)^{(n−4)/2} dt / B(1/2, (n−1)/2)` by Simpson's rule after `t = sin u`.
pub fn lemma_rand_quadrature(n: usize, omega: f64) -> f64 {
    use crate::special::ln_gamma;
    let nf = n as f64;
    let beta = (ln_gamma(0.5) + ln_gamma((nf - 1.0) / 2.0) - ln_gamma(nf / 2.0)).exp();
    let m = 20_000;
    let (a, b) = (-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2);
    let h = (b - a) / m as f64;
    let g = |u: f64| u.cos().max(0.0).powi(n as i32 - 3);
    let mut s = NeumaierSum::new();
    for k in 0..=m {
        let w = if k == 0 || k == m { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        s.add(w * g(a + k as f64 * h));
    }
    omega * s.value() * h / 3.0 / beta
}

/// Monte Carlo check of the random-rotation density `Ω_n/√(1−t²)`.
/// `omega_override` replaces `Ω_n` (used to demonstrate sensitivity).
pub fn check_lemma_rand(
    n: usize,
    samples: usize,
    stream: &SeedStream,
    omega_override: Option<f64>,
) -> Result<LemmaRandReport, KernelError> {
    let omega = match omega_override {
        Some(o) => o,
        None => omega_n(n)?,
    };
    if n < 3 {
        return Err(KernelError::DimensionTooSmall { n, min: 3 });
    }
    let rows: Vec<[f64; 2]> = stream.blocked(samples, |rng, range| {
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        range
            .map(|_| {
                fill_sphere_point(rng, &mut a);
                fill_sphere_point(rng, &mut b);
                let t = dot(&a, &b).clamp(-1.0, 1.0);
                let w = omega / (1.0 - t * t).max(f64::MIN_POSITIVE).sqrt();
                [w, t * t * w]
            })
            .collect()
    });
    let (nm, nse) = mean_se(rows.iter().map(|r| r[0]), samples);
    let (tm, tse) = mean_se(rows.iter().map(|r| r[1]), samples);
    let t2_exact = 1.0 / (n as f64 - 1.0);
    let normalization = McEstimate { estimate: nm, std_err: nse, samples };
    let t2_reweighted = McEstimate { estimate: tm, std_err: tse, samples };
    Ok(LemmaRandReport {
        n,
        samples,
        omega,
        normalization,
        t2_reweighted,
        t2_exact,
        quadrature: lemma_rand_quadrature(n, omega),
        infinite_variance: n == 3,
        normalization_pass: (nm - 1.0).abs() <= 0.01 && (nm - 1.0).abs() <= 4.0 * nse,
        moment_pass: (tm - t2_exact).abs() <= 4.0 * tse,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoincareReport {
    pub n: usize,
    pub samples: usize,
    pub variance: f64,
    /// `E‖f''_S‖²_HS / 2n(n+2)`.
    pub hessian_bound: f64,
    pub ratio: f64,
    pub ratio_std_err: f64,
    pub pass: bool,
}

/// Compares `Var f` with `E‖f''_S‖²/2n(n+2)` for an even test function.
pub fn second_order_poincare_check(
    f: &HomogeneousTestFunction,
    samples: usize,
    stream: &SeedStream,
    h: f64,
) -> PoincareReport {
    let n = f.dim();
    let nf = n as f64;
    let denom = 2.0 * nf * (nf + 2.0);
    let rows = sample_pointwise(f, samples, stream, h);
    let mf = samples as f64;
    let ef = NeumaierSum::from_iter(rows.iter().map(|r| r[0])).value() / mf;
    let a: Vec<f64> = rows.iter().map(|r| (r[0] - ef).powi(2)).collect();
    let b: Vec<f64> = rows.iter().map(|r| r[3] / denom).collect();
    let va = NeumaierSum::from_iter(a.iter().copied()).value() / mf;
    let vb = NeumaierSum::from_iter(b.iter().copied()).value() / mf;
    let fd_floor = 1e-6;
    if vb <= 1e-14 && va <= 1e-14 {
        return PoincareReport { n, samples, variance: va, hessian_bound: vb, ratio: 0.0, ratio_std_err: 0.0, pass: true };
    }
    let ratio = va / vb;
    // Delta method on the ratio of two means.
    let infl = a.iter().zip(&b).map(|(x, y)| x / vb - va * y / (vb * vb));
    let (_, ratio_std_err) = mean_se(infl, samples);
    PoincareReport {
        n,
        samples,
        variance: va,
        hessian_bound: vb,
        ratio,
        ratio_std_err,
        pass: ratio <= 1.0 + 4.0 * ratio_std_err + fd_floor,
    }
}
