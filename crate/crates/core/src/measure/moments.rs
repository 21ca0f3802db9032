//! First and second moment matrices and the normalised cross-moments.

use super::{DiscreteMeasure, MeasureError};
use crate::reduce::{NeumaierSum, ITEM_CHUNK};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

pub fn center_of_mass(mu: &DiscreteMeasure) -> Vec<f64> {
    let n = mu.dim();
    let partials: Vec<Vec<NeumaierSum>> = (0..mu.len().div_ceil(ITEM_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![NeumaierSum::new(); n];
            for i in c * ITEM_CHUNK..((c + 1) * ITEM_CHUNK).min(mu.len()) {
                let w = mu.weight(i);
                for (a, x) in acc.iter_mut().zip(mu.atom(i)) {
                    a.add(w * x);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![NeumaierSum::new(); n];
    for p in &partials {
        for (t, s) in total.iter_mut().zip(p) {
            t.merge(s);
        }
    }
    total.iter().map(|s| s.value()).collect()
}

/// `Σ wᵢ |xᵢ|^{p−2} xᵢ ⊗ xᵢ`.
pub fn covp(mu: &DiscreteMeasure, p: f64) -> DMatrix<f64> {
    let x = mu.atom_matrix();
    let mut scaled = x.clone();
    for i in 0..mu.len() {
        let c = mu.weight(i) * radial_power(mu, i, p - 2.0);
        scaled.row_mut(i).scale_mut(c);
    }
    let m = x.transpose() * scaled;
    crate::linalg::symmetrize(&m)
}

pub fn cov1(mu: &DiscreteMeasure) -> DMatrix<f64> {
    covp(mu, 1.0)
}

/// `Σ wᵢ |xᵢ|^{p−2}`.
pub fn z_p(mu: &DiscreteMeasure, p: f64) -> f64 {
    let [s] = crate::reduce::chunked_sum(mu.len(), |i| [mu.weight(i) * radial_power(mu, i, p - 2.0)]);
    s
}

/// `|xᵢ|^e`, using the exact norm or squared norm for the common exponents.
#[inline]
pub(crate) fn radial_power(mu: &DiscreteMeasure, i: usize, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if e == -1.0 {
        1.0 / mu.norm(i)
    } else if e == 1.0 {
        mu.norm(i)
    } else if e == 2.0 {
        mu.sq_norm(i)
    } else {
        mu.sq_norm(i).powf(0.5 * e)
    }
}

/// `Tr Cov₁ / √n = Σ wᵢ|xᵢ| / √n`.
pub fn alpha(mu: &DiscreteMeasure) -> f64 {
    let [s] = crate::reduce::chunked_sum(mu.len(), |i| [mu.weight(i) * mu.norm(i)]);
    s / (mu.dim() as f64).sqrt()
}

/// Raw cross-moment double sums `∬ (x·y)^k / (|x|^{k−1}|y|^{k−1})` for k = 4, 6.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossMoments {
    pub s4: f64,
    pub s6: f64,
}

pub fn cross_moments(mu: &DiscreteMeasure, cap: usize) -> Result<CrossMoments, MeasureError> {
    mu.check_pair_cap(cap)?;
    let [s4, s6] = mu.pair_sum(|i, j, dot| {
        let np = mu.norm_product(i, j);
        let t = dot / np;
        let t2 = t * t;
        let t4 = t2 * t2;
        let ww = mu.weight(i) * mu.weight(j) * np;
        [ww * t4, ww * t4 * t2]
    });
    Ok(CrossMoments { s4, s6 })
}

pub fn moment_beta(mu: &DiscreteMeasure) -> Result<f64, MeasureError> {
    let a = alpha(mu);
    Ok(mu.dim() as f64 * cross_moments(mu, super::DEFAULT_PAIR_CAP)?.s4 / (a * a))
}

pub fn moment_delta(mu: &DiscreteMeasure) -> Result<f64, MeasureError> {
    let a = alpha(mu);
    let n = mu.dim() as f64;
    Ok(n * n * cross_moments(mu, super::DEFAULT_PAIR_CAP)?.s6 / (a * a))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub n: usize,
    pub atoms: usize,
    pub center_norm: f64,
    pub alpha: f64,
    pub p: f64,
    pub z_p: f64,
    pub beta: f64,
    pub delta: f64,
    pub gamma_excess: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub zeta: f64,
    /// `n · ∬ (x·y)⁴/(|x|³|y|³)`, the unnormalised fourth-moment parameter.
    pub beta_item4: f64,
}

pub fn moment_report(mu: &DiscreteMeasure, p: f64, cap: usize) -> Result<MomentReport, MeasureError> {
    let n = mu.dim() as f64;
    let center = center_of_mass(mu);
    let center_norm = center.iter().map(|v| v * v).sum::<f64>().sqrt();
    let c1 = cov1(mu);
    let trace = c1.trace();
    let hs = c1.norm_squared();
    let a = alpha(mu);
    let cm = cross_moments(mu, cap)?;
    let beta = n * cm.s4 / (a * a);
    Ok(MomentReport {
        n: mu.dim(),
        atoms: mu.len(),
        center_norm,
        alpha: a,
        p,
        z_p: z_p(mu, p),
        beta,
        delta: n * n * cm.s6 / (a * a),
        gamma_excess: n * (beta - 3.0),
        kappa: n.sqrt() * center_norm,
        lambda: (n * hs - trace * trace).abs(),
        zeta: trace / n.sqrt(),
        beta_item4: n * cm.s4,
    })
}

pub fn kappa_lambda_report(mu: &DiscreteMeasure) -> Result<MomentReport, MeasureError> {
    moment_report(mu, 1.0, super::DEFAULT_PAIR_CAP)
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use crate::rng::SeedStream;

    #[test]
    fn cube_is_l1_isotropic() {
        for n in 1..=10 {
            let c = cube_measure(n, 20).unwrap();
            let expected = 1.0 / (n as f64).sqrt();
            let m = cov1(&c);
            for i in 0..n {
                for j in 0..n {
                    let e = if i == j { expected } else { 0.0 };
                    assert!((m[(i, j)] - e).abs() < 1e-14);
                }
            }
            assert!((z_p(&c, 1.0) - expected).abs() < 1e-15);
            assert!(center_of_mass(&c).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_atom_and_trace_identity() {
        let d = DiscreteMeasure::uniform(3, vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(cov1(&d)[(0, 0)], 1.0);
        assert_eq!(cov1(&d).sum(), 1.0);
        let g = sample_gaussian(5, 500, &SeedStream::new(4)).unwrap();
        for p in [0.5, 1.0, 2.0, 3.0] {
            let tr = covp(&g, p).trace();
            let direct: f64 = (0..g.len()).map(|i| g.weight(i) * g.norm(i).powf(p)).sum();
            assert!((tr - direct).abs() < 1e-12 * direct);
        }
    }

    #[test]
    fn cube_moments_exact() {
        for n in 2..=10 {
            let c = cube_measure(n, 20).unwrap();
            let nf = n as f64;
            let beta = moment_beta(&c).unwrap();
            assert!((beta - (3.0 - 2.0 / nf)).abs() < 1e-12 * beta);
            let delta = moment_delta(&c).unwrap();
            let d = (nf + 15.0 * nf * (nf - 1.0) + 15.0 * nf * (nf - 1.0) * (nf - 2.0)) / nf.powi(3);
            assert!((delta - d).abs() < 1e-12 * d);
            let r = kappa_lambda_report(&c).unwrap();
            assert!(r.kappa == 0.0 && r.lambda < 1e-12 && (r.zeta - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn cross_polytope_breaks_fourth_moment_assumption() {
        for n in [3, 8, 20] {
            let r = kappa_lambda_report(&cross_polytope(n).unwrap()).unwrap();
            assert!((r.beta_item4 - 1.0).abs() < 1e-12);
            assert!((r.beta - n as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn gaussian_beta_matches_symmetry_factorization() {
        // E[|x||y|(θ·η)⁴] = (E|x|)² · 3/(n(n+2)), α = E|x|/√n ⇒ β = 3n/(n+2).
        let n = 6;
        let g = sample_gaussian(n, 4000, &SeedStream::new(8)).unwrap();
        let beta = moment_beta(&g).unwrap();
        let target = 3.0 * n as f64 / (n as f64 + 2.0);
        assert!((beta - target).abs() < 0.06, "beta {beta} target {target}");
    }

    #[test]
    fn pair_cap_enforced() {
        let c = cube_measure(6, 20).unwrap();
        assert!(matches!(cross_moments(&c, 10), Err(MeasureError::PairCapExceeded { .. })));
    }
}
