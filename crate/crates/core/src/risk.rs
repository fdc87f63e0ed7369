//! True risks of projection estimators and the oracle cut-offs they define.
//!
//! For a known regression `phi` the risk of the known-operator estimator cut
//! at `m` is
//!
//! ```text
//! R0(m) = sum_{k > m} phi_k^2 + (1/n) sum_{k <= m} lambda_k^{-2} sigma_k^2
//! ```
//!
//! and `R(m)` is the same with the variance term inflated by `log^2 n`.
//! Past the support of `phi` the bias term is zero and the variance term
//! strictly increasing, so minimizers never lie beyond it.

use serde::{Deserialize, Serialize};

use crate::basis::{parseval_sq_distance, CoefficientVector};
use crate::dgp::true_eigenvalue;
use crate::error::{Error, Result};
use crate::estimator::deterministic_bounds;

/// Indices scanned past the support of `phi` when searching for a minimizer.
pub const ORACLE_SEARCH_BUFFER: usize = 50;

fn check_sigma(sigma_sq: &[f64], needed: usize) -> Result<()> {
    if sigma_sq.len() < needed {
        return Err(Error::InsufficientOracle {
            needed,
            available: sigma_sq.len(),
        });
    }
    Ok(())
}

/// Risk with variance weight `weight`, i.e. `R0` for `weight = 1/n`.
fn weighted_risk(phi: &CoefficientVector, t: f64, sigma_sq: &[f64], weight: f64, m: usize) -> Result<f64> {
    check_sigma(sigma_sq, m)?;
    let bias: f64 = (m + 1..=phi.support()).map(|k| phi.get(k).powi(2)).sum();
    let variance: f64 = (1..=m)
        .map(|k| sigma_sq[k - 1] / true_eigenvalue(k, t).powi(2))
        .sum();
    Ok(bias + weight * variance)
}

fn log_sq(n: usize) -> f64 {
    (n as f64).ln().powi(2)
}

pub fn risk_r0(phi: &CoefficientVector, t: f64, sigma_sq: &[f64], n: usize, m: usize) -> Result<f64> {
    weighted_risk(phi, t, sigma_sq, 1.0 / n as f64, m)
}

/// Penalized risk, variance term multiplied by `log^2 n`.
pub fn risk_r(phi: &CoefficientVector, t: f64, sigma_sq: &[f64], n: usize, m: usize) -> Result<f64> {
    weighted_risk(phi, t, sigma_sq, log_sq(n) / n as f64, m)
}

/// Risk values `m = 0..=upper` computed by telescoping increments.
fn risk_path(phi: &CoefficientVector, t: f64, sigma_sq: &[f64], weight: f64, upper: usize) -> Result<Vec<f64>> {
    check_sigma(sigma_sq, upper)?;
    let mut path = Vec::with_capacity(upper + 1);
    let mut value = phi.norm_sq();
    path.push(value);
    for k in 1..=upper {
        value += weight * sigma_sq[k - 1] / true_eigenvalue(k, t).powi(2) - phi.get(k).powi(2);
        path.push(value);
    }
    Ok(path)
}

fn first_argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (m, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = m;
        }
    }
    best
}

/// Upper end of the oracle search.
pub fn oracle_search_limit(phi: &CoefficientVector) -> usize {
    phi.support() + ORACLE_SEARCH_BUFFER
}

fn minimize(phi: &CoefficientVector, t: f64, sigma_sq: &[f64], weight: f64, upper: usize) -> Result<(usize, f64)> {
    let path = risk_path(phi, t, sigma_sq, weight, upper)?;
    // past the support every increment is a positive variance term
    if upper > phi.support() && !path[phi.support()..].windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::InvalidConfig(
            "risk is not increasing past the support of phi; sigma^2 must be positive".into(),
        ));
    }
    let m = first_argmin(&path);
    Ok((m, path[m]))
}

/// Smallest minimizer of `R0` over `m = 0..=support(phi) + 50`.
pub fn oracle_m0(phi: &CoefficientVector, t: f64, sigma_sq: &[f64], n: usize) -> Result<usize> {
    Ok(minimize(phi, t, sigma_sq, 1.0 / n as f64, oracle_search_limit(phi))?.0)
}

/// Smallest minimizer of `R0` restricted to `m <= resolution`.
pub fn random_oracle_m1(phi: &CoefficientVector, t: f64, sigma_sq: &[f64], n: usize, resolution: usize) -> Result<usize> {
    let upper = resolution.min(oracle_search_limit(phi));
    let path = risk_path(phi, t, sigma_sq, 1.0 / n as f64, upper)?;
    Ok(first_argmin(&path))
}

/// `(argmin, min)` of the penalized risk `R`.
pub fn min_risk_r(phi: &CoefficientVector, t: f64, sigma_sq: &[f64], n: usize) -> Result<(usize, f64)> {
    minimize(phi, t, sigma_sq, log_sq(n) / n as f64, oracle_search_limit(phi))
}

/// `(argmin, min)` of `R0`.
pub fn min_risk_r0(phi: &CoefficientVector, t: f64, sigma_sq: &[f64], n: usize) -> Result<(usize, f64)> {
    minimize(phi, t, sigma_sq, 1.0 / n as f64, oracle_search_limit(phi))
}

/// Cost of the random range possibly excluding the oracle:
/// `sum_{k = min(M0, m0)}^{m0} [phi_k^2 + lambda_k^{-2} sigma_k^2 / n]`,
/// taken as zero when the two limits coincide.
pub fn gamma_remainder(phi: &CoefficientVector, t: f64, sigma_sq: &[f64], n: usize) -> Result<f64> {
    let m0 = oracle_m0(phi, t, sigma_sq, n)?;
    let (lower_bracket, _) = deterministic_bounds(t, n)?;
    Ok(gamma_between(phi, t, sigma_sq, n, lower_bracket, m0))
}

fn gamma_between(phi: &CoefficientVector, t: f64, sigma_sq: &[f64], n: usize, lower_bracket: usize, m0: usize) -> f64 {
    let start = lower_bracket.min(m0);
    if start == m0 {
        return 0.0;
    }
    // index 0 does not exist; the empty model contributes nothing
    (start.max(1)..=m0)
        .map(|k| phi.get(k).powi(2) + sigma_sq[k - 1] / (n as f64 * true_eigenvalue(k, t).powi(2)))
        .sum()
}

/// Squared `L^2` loss.
pub fn loss(phi_star: &CoefficientVector, phi: &CoefficientVector) -> f64 {
    parseval_sq_distance(phi_star, phi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub n: usize,
    pub m0: usize,
    /// Random oracle for the supplied resolution level, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m1: Option<usize>,
    #[serde(rename = "M0")]
    pub lower_bracket: usize,
    #[serde(rename = "M1")]
    pub upper_bracket: usize,
    #[serde(rename = "R0_values")]
    pub r0_values: Vec<f64>,
    #[serde(rename = "R_values")]
    pub r_values: Vec<f64>,
    pub inf_r0: f64,
    pub inf_r: f64,
    pub gamma: f64,
}

/// Oracle quantities at sample size `n`; `resolution` is a realized `M`.
pub fn oracle_summary(
    phi: &CoefficientVector,
    t: f64,
    sigma_sq: &[f64],
    n: usize,
    resolution: Option<usize>,
) -> Result<OracleSummary> {
    let upper = oracle_search_limit(phi);
    let r0_values = risk_path(phi, t, sigma_sq, 1.0 / n as f64, upper)?;
    let r_values = risk_path(phi, t, sigma_sq, log_sq(n) / n as f64, upper)?;
    let (m0, inf_r0) = min_risk_r0(phi, t, sigma_sq, n)?;
    let (_, inf_r) = min_risk_r(phi, t, sigma_sq, n)?;
    let (lower_bracket, upper_bracket) = deterministic_bounds(t, n)?;
    let m1 = resolution
        .map(|res| random_oracle_m1(phi, t, sigma_sq, n, res))
        .transpose()?;
    Ok(OracleSummary {
        n,
        m0,
        m1,
        lower_bracket,
        upper_bracket,
        r0_values,
        r_values,
        inf_r0,
        inf_r,
        gamma: gamma_between(phi, t, sigma_sq, n, lower_bracket, m0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ones(len: usize) -> Vec<f64> {
        vec![1.0; len]
    }

    #[test]
    fn r0_examples() {
        let zero = CoefficientVector::default();
        assert_eq!(risk_r0(&zero, 1.0, &ones(10), 100, 0).unwrap(), 0.0);
        let mut previous = 0.0;
        for m in 1..10 {
            let r = risk_r0(&zero, 1.0, &ones(10), 100, m).unwrap();
            assert!(r > previous);
            previous = r;
        }
        assert_eq!(oracle_m0(&zero, 1.0, &ones(60), 100).unwrap(), 0);

        let phi = CoefficientVector::new(vec![1.0]);
        assert_abs_diff_eq!(risk_r0(&phi, 1.0, &ones(1), 100, 1).unwrap(), 0.04, epsilon = 1e-15);
        assert_eq!(risk_r0(&phi, 1.0, &ones(1), 100, 0).unwrap(), 1.0);
        assert_eq!(oracle_m0(&phi, 1.0, &ones(51), 100).unwrap(), 1);
        assert!(matches!(
            risk_r0(&phi, 1.0, &ones(1), 100, 2),
            Err(Error::InsufficientOracle { needed: 2, available: 1 })
        ));
    }

    #[test]
    fn r_examples() {
        let phi = CoefficientVector::new(vec![1.0]);
        let log100 = 100f64.ln();
        assert_abs_diff_eq!(
            risk_r(&phi, 1.0, &ones(1), 100, 1).unwrap(),
            log100 * log100 / 100.0 * 4.0,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(risk_r(&phi, 1.0, &ones(1), 100, 1).unwrap(), 0.8486, epsilon = 5e-4);
        let phi = CoefficientVector::new(vec![0.5, 0.3, 0.2, 0.1]);
        assert_eq!(risk_r(&phi, 1.0, &ones(4), 50, 0).unwrap(), risk_r0(&phi, 1.0, &ones(4), 50, 0).unwrap());
        for m in 1..=4 {
            assert!(risk_r(&phi, 1.0, &ones(4), 50, m).unwrap() > risk_r0(&phi, 1.0, &ones(4), 50, m).unwrap());
        }
    }

    #[test]
    fn telescoping_identity() {
        let phi = CoefficientVector::new(vec![0.5, -0.3, 0.2, 0.05, 0.01]);
        let sigma = vec![0.7, 1.1, 0.9, 1.3, 1.0, 0.8];
        let n = 300;
        for m in 1..=6 {
            let diff = risk_r0(&phi, 1.5, &sigma, n, m).unwrap() - risk_r0(&phi, 1.5, &sigma, n, m - 1).unwrap();
            let expected = -phi.get(m).powi(2) + sigma[m - 1] / (n as f64 * true_eigenvalue(m, 1.5).powi(2));
            assert_abs_diff_eq!(diff, expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn early_stopped_search_matches_brute_force() {
        let sigma = ones(500);
        for (coeffs, t, n) in [
            (vec![1.0], 1.0, 100),
            (vec![0.9, 0.5, 0.3, 0.2, 0.1, 0.05], 1.0, 1000),
            ((1..=40).map(|k| (1.0 + k as f64).powi(-2)).collect(), 1.0, 100_000),
            ((1..=40).map(|k| (1.0 + k as f64).powi(-2)).collect(), 0.5, 10_000_000),
        ] {
            let phi = CoefficientVector::new(coeffs);
            let brute: Vec<f64> = (0..=500).map(|m| risk_r0(&phi, t, &sigma, n, m).unwrap()).collect();
            let brute_min = brute.iter().cloned().fold(f64::INFINITY, f64::min);
            let brute_arg = brute.iter().position(|v| *v == brute_min).unwrap();
            let m0 = oracle_m0(&phi, t, &sigma, n).unwrap();
            assert_eq!(m0, brute_arg);

            let brute_r: Vec<f64> = (0..=500).map(|m| risk_r(&phi, t, &sigma, n, m).unwrap()).collect();
            let brute_r_min = brute_r.iter().cloned().fold(f64::INFINITY, f64::min);
            let (_, inf_r) = min_risk_r(&phi, t, &sigma, n).unwrap();
            assert_abs_diff_eq!(inf_r, brute_r_min, epsilon = 1e-14);
        }
    }

    #[test]
    fn random_oracle_examples() {
        let phi = CoefficientVector::new(vec![0.9, 0.6]);
        let sigma = ones(60);
        let n = 1000;
        let m0 = oracle_m0(&phi, 1.0, &sigma, n).unwrap();
        assert_eq!(m0, 2);
        assert_eq!(random_oracle_m1(&phi, 1.0, &sigma, n, 10).unwrap(), m0);
        assert_eq!(random_oracle_m1(&phi, 1.0, &sigma, n, m0).unwrap(), m0);
        assert_eq!(random_oracle_m1(&phi, 1.0, &sigma, n, 0).unwrap(), 0);
        // R0 decreases up to m0, so the constrained minimizer is the constraint itself
        assert_eq!(random_oracle_m1(&phi, 1.0, &sigma, n, m0 - 1).unwrap(), m0 - 1);
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_remainder(&CoefficientVector::default(), 1.0, &ones(60), 1000).unwrap(), 0.0);

        // huge n with a fast-decaying phi: the oracle sits below M0
        let phi = CoefficientVector::new(vec![0.5, 0.01]);
        let n = 100_000_000;
        let m0 = oracle_m0(&phi, 1.0, &ones(60), n).unwrap();
        let (lower, _) = deterministic_bounds(1.0, n).unwrap();
        assert!(m0 <= lower);
        assert_eq!(gamma_remainder(&phi, 1.0, &ones(60), n).unwrap(), 0.0);

        // small n with a slowly decaying phi: m0 > M0 = 0
        let phi = CoefficientVector::new((1..=10).map(|k| (k as f64).powf(-0.6)).collect());
        let sigma: Vec<f64> = (0..60).map(|i| 0.5 + 0.01 * i as f64).collect();
        let n = 1000;
        let m0 = oracle_m0(&phi, 1.0, &sigma, n).unwrap();
        let (lower, _) = deterministic_bounds(1.0, n).unwrap();
        assert!(m0 > lower);
        let mut expected = 0.0;
        for k in lower.max(1)..=m0 {
            let lambda = true_eigenvalue(k, 1.0);
            expected += phi.get(k).powi(2) + sigma[k - 1] / (n as f64 * lambda * lambda);
        }
        assert!(expected > 0.0);
        assert_abs_diff_eq!(gamma_remainder(&phi, 1.0, &sigma, n).unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn loss_is_parseval_distance() {
        let a = CoefficientVector::new(vec![0.1, 0.2]);
        let b = CoefficientVector::new(vec![0.1, 0.0, 0.3]);
        assert_abs_diff_eq!(loss(&a, &b), 0.04 + 0.09, epsilon = 1e-16);
    }

    #[test]
    fn summary_is_consistent() {
        let phi = CoefficientVector::new((1..=20).map(|k| (1.0 + k as f64).powi(-2)).collect());
        let sigma = ones(70);
        let s = oracle_summary(&phi, 1.0, &sigma, 4096, Some(3)).unwrap();
        assert_eq!(s.r0_values.len(), 71);
        assert_eq!(first_argmin(&s.r0_values), s.m0);
        assert_eq!(s.inf_r0, s.r0_values[s.m0]);
        assert_eq!(s.m1, Some(s.m0.min(3)));
        assert!(s.inf_r >= s.inf_r0);
        assert!(s.lower_bracket <= s.upper_bracket);
        let json = serde_json::to_value(&s).unwrap();
        assert!(json.get("R0_values").is_some() && json.get("M0").is_some());
    }
}
