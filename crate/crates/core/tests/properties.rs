mod common;

use proptest::prelude::*;

use spectral_iv::basis::{parseval_sq_distance, CoefficientVector};
use spectral_iv::dgp::{generate_sample, true_eigenvalue, DgpSpec};
use spectral_iv::estimator::{
    adaptive_estimate, estimate_eigenvalues, scan_eigenvalues, select_m_star, select_resolution,
    EmpiricalCoefficients, EstimatorConfig,
};
use spectral_iv::risk::risk_r0;
use spectral_iv::study::clopper_pearson;

use common::{periodic_quadrature, reference_synthesize};

fn small_spec() -> DgpSpec {
    DgpSpec::default_sobolev()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn estimate_is_equivariant_under_response_scaling(seed in any::<u64>(), n in 60usize..600, c in 0.01f64..100.0) {
        let sample = generate_sample(&small_spec(), n, seed).unwrap();
        let config = EstimatorConfig::default();
        let base = adaptive_estimate(&sample, &config).unwrap();
        let scaled = adaptive_estimate(&sample.with_scaled_response(c), &config).unwrap();
        prop_assert_eq!(base.resolution, scaled.resolution);
        prop_assert_eq!(base.m_star, scaled.m_star);
        for (a, b) in scaled.phi_star.coeffs.iter().zip(&base.phi_star.coeffs) {
            prop_assert!((a - c * b).abs() <= 1e-12 * (c * b).abs().max(1e-300));
        }
    }

    #[test]
    fn lazy_scan_matches_full_estimation(seed in any::<u64>(), n in 20usize..400) {
        let sample = generate_sample(&small_spec(), n, seed).unwrap();
        let config = EstimatorConfig { k_max: 60, ..EstimatorConfig::default() };
        let scan = scan_eigenvalues(&sample, &config).unwrap();
        let full = estimate_eigenvalues(&sample, 60);
        for (a, b) in scan.lambda_hat.iter().zip(&full) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        prop_assert_eq!(select_resolution(&full, n, &config).unwrap(), scan.resolution());
    }

    #[test]
    fn parseval_matches_quadrature(
        f in prop::collection::vec(-2.0f64..2.0, 0..16),
        g in prop::collection::vec(-2.0f64..2.0, 0..16),
    ) {
        let quad = periodic_quadrature(1 << 10, |x| (reference_synthesize(&f, x) - reference_synthesize(&g, x)).powi(2));
        let exact = parseval_sq_distance(&CoefficientVector::new(f), &CoefficientVector::new(g));
        prop_assert!((quad - exact).abs() <= 1e-10 * (1.0 + exact));
    }

    #[test]
    fn criterion_path_and_selection(
        coeffs in prop::collection::vec((-1.0f64..1.0, 0.05f64..1.0, 0.01f64..3.0), 1..20),
        n in 10usize..10_000,
        weight in 0.0f64..0.5,
    ) {
        let r: Vec<f64> = coeffs.iter().map(|c| c.0).collect();
        let l: Vec<f64> = coeffs.iter().map(|c| c.1).collect();
        let s: Vec<f64> = coeffs.iter().map(|c| c.2).collect();
        let emp = EmpiricalCoefficients::new(n, r.clone(), l.clone(), s.clone()).unwrap();
        let path = emp.criterion_path(weight);
        prop_assert_eq!(path.len(), coeffs.len() + 1);
        for (m, value) in path.iter().enumerate() {
            let direct: f64 = (0..m).map(|k| (weight * s[k] - r[k] * r[k]) / (l[k] * l[k])).sum();
            prop_assert!((value - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
            prop_assert_eq!(*value, emp.criterion_with_weight(m, weight).unwrap());
        }
        let m_star = select_m_star(&path).unwrap();
        let min = path.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(path[m_star], min);
        prop_assert!(path[..m_star].iter().all(|v| *v > min));
    }

    #[test]
    fn r0_increments_telescope(
        phi in prop::collection::vec(-1.0f64..1.0, 1..12),
        sigma in prop::collection::vec(0.01f64..2.0, 62),
        n in 10usize..100_000,
        t in 0.5f64..3.0,
    ) {
        let phi = CoefficientVector::new(phi);
        for m in 1..=phi.support() + 3 {
            let step = risk_r0(&phi, t, &sigma, n, m).unwrap() - risk_r0(&phi, t, &sigma, n, m - 1).unwrap();
            let expected = -phi.get(m).powi(2) + sigma[m - 1] / (n as f64 * true_eigenvalue(m, t).powi(2));
            prop_assert!((step - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn clopper_pearson_brackets_the_fraction(trials in 1usize..2000, frac in 0.0f64..=1.0) {
        let hits = ((trials as f64) * frac).round() as usize;
        let (lo, hi) = clopper_pearson(hits, trials, 0.95);
        let p = hits as f64 / trials as f64;
        prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
    }
}
