use conclab_core::functional::{eval_F, stats_exact};
use conclab_core::linalg::random_orthogonal;
use conclab_core::measure::{covp, moment_beta, moment_delta, DiscreteMeasure};
use conclab_core::sphere_kernel::{kernel_halfspace, kernel_plus2, phi, psi, Correlation};
use conclab_core::SeedStream;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Measures with 1..=10 atoms in dimension 2..=5, atoms bounded away from 0.
fn measure() -> impl Strategy<Value = DiscreteMeasure> {
    (2usize..=5, 1usize..=10).prop_flat_map(|(n, count)| {
        (
            prop::collection::vec(prop::collection::vec(-2.0f64..2.0, n), count),
            prop::collection::vec(0.05f64..1.0, count),
        )
            .prop_filter_map("atom too close to origin", move |(rows, raw)| {
                if rows.iter().any(|r| r.iter().map(|v| v * v).sum::<f64>() < 1e-2) {
                    return None;
                }
                let total: f64 = raw.iter().sum();
                DiscreteMeasure::from_rows(&rows, raw.iter().map(|w| w / total).collect()).ok()
            })
    })
}

fn unit(n: usize, seed: u64) -> Vec<f64> {
    conclab_core::rng::sphere_points(n, 1, &SeedStream::new(seed))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn statistics_are_rotation_invariant(mu in measure(), seed in any::<u64>()) {
        let q = random_orthogonal(mu.dim(), &mut ChaCha8Rng::seed_from_u64(seed));
        let rotated = mu.map_linear(&q).unwrap();
        let (a, b) = (stats_exact(&mu).unwrap(), stats_exact(&rotated).unwrap());
        prop_assert!(close(a.var_f, b.var_f, 1e-10), "{} vs {}", a.var_f, b.var_f);
        prop_assert!(close(a.grad_s_sq, b.grad_s_sq, 1e-10));
        prop_assert!(close(moment_beta(&mu).unwrap(), moment_beta(&rotated).unwrap(), 1e-10));
        prop_assert!(close(moment_delta(&mu).unwrap(), moment_delta(&rotated).unwrap(), 1e-10));
    }

    #[test]
    fn variance_is_nonnegative_and_obeys_poincare(mu in measure()) {
        let s = stats_exact(&mu).unwrap();
        prop_assert!(s.var_f >= 0.0);
        prop_assert!(s.poincare_holds(1e-12), "{s:?}");
        prop_assert!(s.second_moment_f >= s.mean_f * s.mean_f * (1.0 - 1e-12));
    }

    #[test]
    fn variance_matches_naive_moments(mu in measure()) {
        let s = stats_exact(&mu).unwrap();
        let naive = s.second_moment_f - s.mean_f * s.mean_f;
        prop_assert!((s.var_f - naive).abs() <= 1e-12 * s.second_moment_f, "{} vs {naive}", s.var_f);
    }

    #[test]
    fn scaling_is_homogeneous(mu in measure(), c in 0.1f64..10.0, seed in any::<u64>()) {
        let n = mu.dim();
        let scaled = mu.map_linear(&(DMatrix::identity(n, n) * c)).unwrap();
        let theta = unit(n, seed);
        prop_assert!(close(eval_F(&scaled, &theta).unwrap(), c * eval_F(&mu, &theta).unwrap(), 1e-12));
        let (a, b) = (stats_exact(&mu).unwrap(), stats_exact(&scaled).unwrap());
        prop_assert!(close(b.var_f, c * c * a.var_f, 1e-9));
        prop_assert!(close(moment_beta(&scaled).unwrap(), moment_beta(&mu).unwrap(), 1e-10));
    }

    #[test]
    fn antipodal_values_sum_to_absolute_projection(mu in measure(), seed in any::<u64>()) {
        let theta = unit(mu.dim(), seed);
        let minus: Vec<f64> = theta.iter().map(|v| -v).collect();
        let abs: f64 = mu
            .atoms()
            .enumerate()
            .map(|(i, x)| mu.weight(i) * x.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>().abs())
            .sum();
        let total = eval_F(&mu, &theta).unwrap() + eval_F(&mu, &minus).unwrap();
        prop_assert!(close(total, abs, 1e-12));
    }

    #[test]
    fn covp_is_positive_semidefinite(mu in measure(), p in 1.0f64..4.0) {
        let c = covp(&mu, p);
        let eig = c.clone().symmetric_eigenvalues();
        let floor = -1e-12 * c.trace().abs();
        prop_assert!(eig.iter().all(|&e| e >= floor), "{eig:?}");
        prop_assert!((c.clone() - c.transpose()).abs().max() <= 1e-15 * c.abs().max());
    }

    #[test]
    fn kernels_increase_with_correlation(a in -1.0f64..=1.0, b in -1.0f64..=1.0, n in 1usize..64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (lo, hi) = (Correlation::new(lo).unwrap(), Correlation::new(hi).unwrap());
        prop_assert!(kernel_plus2(lo, n) <= kernel_plus2(hi, n));
        prop_assert!(kernel_halfspace(lo) <= kernel_halfspace(hi));
        prop_assert!(phi(lo) >= 0.0 && psi(lo) >= 0.0);
    }

    #[test]
    fn measure_csv_round_trips(mu in measure()) {
        let mut buf = Vec::new();
        mu.write_csv(&mut buf).unwrap();
        let back = DiscreteMeasure::read_csv(buf.as_slice(), Some(mu.dim())).unwrap();
        prop_assert_eq!(back, mu);
    }
}
