//! Monte Carlo studies over replications and sample-size grids.
//!
//! Replications run in parallel on the current rayon pool. Results are
//! collected in replication order and reduced sequentially, so every output
//! is identical to a single-threaded run.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::dgp::{generate_sample, sigma_sq_oracle, DgpSpec, SigmaSqOracle, ORACLE_DRAWS};
use crate::error::{Error, Result};
use crate::estimator::{
    adaptive_estimate, deterministic_bounds, estimate_r_coeffs, naive_estimator, scan_eigenvalues, EstimatorConfig,
};
use crate::risk::{loss, oracle_search_limit, oracle_summary};
use crate::rng::{derive_seed, ORACLE_SEED};

/// Stream tag shared by every risk study, so the same `(n, rep)` sees the same sample.
pub const RISK_TAG: &str = "risk";
pub const COVERAGE_TAG: &str = "coverage";

/// Mean and standard error of a set of draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanEstimate {
    pub fn from_draws(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::DegenerateStudy("need at least 2 replications".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(MeanEstimate {
            mean,
            stderr: (var / n).sqrt(),
        })
    }
}

/// One replication of the adaptive estimator, with the known-operator
/// estimator at the oracle cut-off computed on the same sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replication {
    pub loss: f64,
    pub naive_loss: f64,
    pub m_star: usize,
    pub resolution: usize,
}

fn replicate(spec: &DgpSpec, config: &EstimatorConfig, n: usize, seed: u64, oracle_m0: usize) -> Result<Replication> {
    let sample = generate_sample(spec, n, seed)?;
    let report = adaptive_estimate(&sample, config)?;
    let naive = naive_estimator(&estimate_r_coeffs(&sample, oracle_m0), spec.t, oracle_m0)?;
    Ok(Replication {
        loss: loss(&report.phi_star, &spec.phi),
        naive_loss: loss(&naive, &spec.phi),
        m_star: report.m_star,
        resolution: report.resolution,
    })
}

fn check_reps(reps: usize, at_least: usize) -> Result<()> {
    if reps < at_least {
        return Err(Error::DegenerateStudy(format!(
            "reps = {reps}, at least {at_least} required"
        )));
    }
    Ok(())
}

fn run_replications(
    spec: &DgpSpec,
    config: &EstimatorConfig,
    n: usize,
    reps: usize,
    master_seed: u64,
    oracle_m0: usize,
) -> Result<Vec<Replication>> {
    (0..reps)
        .into_par_iter()
        .map(|rep| replicate(spec, config, n, derive_seed(master_seed, RISK_TAG, n as u64, rep as u64), oracle_m0))
        .collect()
}

/// Monte Carlo mean squared loss of the adaptive estimator at sample size `n`.
pub fn mc_risk(spec: &DgpSpec, config: &EstimatorConfig, n: usize, reps: usize, master_seed: u64) -> Result<MeanEstimate> {
    check_reps(reps, 2)?;
    let losses: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_seed(master_seed, RISK_TAG, n as u64, rep as u64);
            let sample = generate_sample(spec, n, seed)?;
            Ok(loss(&adaptive_estimate(&sample, config)?.phi_star, &spec.phi))
        })
        .collect::<Result<_>>()?;
    MeanEstimate::from_draws(&losses)
}

/// Per-`n` Monte Carlo risk next to the best attainable penalized risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCurve {
    pub n_grid: Vec<usize>,
    pub mean_loss: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `inf_m R(m, phi)`.
    pub oracle_risk: Vec<f64>,
    pub reps: usize,
}

impl RiskCurve {
    pub fn len(&self) -> usize {
        self.n_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n_grid.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::DegenerateStudy("risk curve has no grid points".into()));
        }
        let len = self.len();
        if self.mean_loss.len() != len || self.stderr.len() != len || self.oracle_risk.len() != len {
            return Err(Error::DegenerateStudy("risk curve arrays differ in length".into()));
        }
        let positive = |v: &[f64]| v.iter().all(|x| *x > 0.0 && x.is_finite());
        if !positive(&self.mean_loss) || !positive(&self.oracle_risk) {
            return Err(Error::DegenerateStudy("risk curve values must be positive and finite".into()));
        }
        Ok(())
    }

    /// `mean_loss / (log^2 n * inf_m R)` at each grid point.
    pub fn oracle_ratios(&self) -> Vec<f64> {
        self.n_grid
            .iter()
            .zip(&self.mean_loss)
            .zip(&self.oracle_risk)
            .map(|((&n, l), r)| l / ((n as f64).ln().powi(2) * r))
            .collect()
    }
}

/// Everything measured at one grid point of a risk study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: usize,
    pub mean_loss: f64,
    pub stderr: f64,
    /// Known-operator estimator at the oracle cut-off, same replications.
    pub naive_mean_loss: f64,
    pub naive_stderr: f64,
    pub inf_r: f64,
    pub inf_r0: f64,
    pub m0: usize,
    #[serde(rename = "M0")]
    pub lower_bracket: usize,
    #[serde(rename = "M1")]
    pub upper_bracket: usize,
    pub gamma: f64,
    pub mean_m_star: f64,
    pub mean_resolution: f64,
    /// Share of replications with `M0 <= M < M1`.
    pub bracket_fraction: f64,
    pub ratio: f64,
}

impl GridPoint {
    /// Adaptive over known-operator Monte Carlo risk.
    pub fn adaptive_over_naive(&self) -> f64 {
        self.mean_loss / self.naive_mean_loss
    }

    /// `sqrt(se_adaptive^2 + se_naive^2)`.
    pub fn combined_stderr(&self) -> f64 {
        self.stderr.hypot(self.naive_stderr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskStudy {
    pub curve: RiskCurve,
    pub ratio: Vec<f64>,
    pub points: Vec<GridPoint>,
    pub master_seed: u64,
    pub oracle_draws: usize,
    pub oracle_seed: u64,
}

fn check_grid(n_grid: &[usize]) -> Result<()> {
    if n_grid.is_empty() {
        return Err(Error::DegenerateStudy("n_grid is empty".into()));
    }
    if n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::DegenerateStudy("n_grid must be strictly increasing".into()));
    }
    if n_grid[0] < 3 {
        return Err(Error::DegenerateStudy("every n must be >= 3".into()));
    }
    Ok(())
}

/// Variance oracle covering every index a risk study may touch.
pub fn risk_oracle(spec: &DgpSpec, draws: usize) -> Result<SigmaSqOracle> {
    sigma_sq_oracle(spec, oracle_search_limit(&spec.phi), draws, ORACLE_SEED)
}

/// Oracle-ratio study with the default variance oracle.
pub fn oracle_ratio_study(
    spec: &DgpSpec,
    config: &EstimatorConfig,
    n_grid: &[usize],
    reps: usize,
    master_seed: u64,
) -> Result<RiskStudy> {
    let oracle = risk_oracle(spec, ORACLE_DRAWS)?;
    oracle_ratio_study_with(spec, config, n_grid, reps, master_seed, &oracle)
}

pub fn oracle_ratio_study_with(
    spec: &DgpSpec,
    config: &EstimatorConfig,
    n_grid: &[usize],
    reps: usize,
    master_seed: u64,
    oracle: &SigmaSqOracle,
) -> Result<RiskStudy> {
    spec.validate()?;
    config.validate()?;
    check_grid(n_grid)?;
    check_reps(reps, 2)?;

    let mut points = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let summary = oracle_summary(&spec.phi, spec.t, &oracle.values, n, None)?;
        let runs = run_replications(spec, config, n, reps, master_seed, summary.m0)?;
        let adaptive = MeanEstimate::from_draws(&runs.iter().map(|r| r.loss).collect::<Vec<_>>())?;
        let naive = MeanEstimate::from_draws(&runs.iter().map(|r| r.naive_loss).collect::<Vec<_>>())?;
        let in_bracket = runs
            .iter()
            .filter(|r| summary.lower_bracket <= r.resolution && r.resolution < summary.upper_bracket)
            .count();
        let reps_f = reps as f64;
        points.push(GridPoint {
            n,
            mean_loss: adaptive.mean,
            stderr: adaptive.stderr,
            naive_mean_loss: naive.mean,
            naive_stderr: naive.stderr,
            inf_r: summary.inf_r,
            inf_r0: summary.inf_r0,
            m0: summary.m0,
            lower_bracket: summary.lower_bracket,
            upper_bracket: summary.upper_bracket,
            gamma: summary.gamma,
            mean_m_star: runs.iter().map(|r| r.m_star as f64).sum::<f64>() / reps_f,
            mean_resolution: runs.iter().map(|r| r.resolution as f64).sum::<f64>() / reps_f,
            bracket_fraction: in_bracket as f64 / reps_f,
            ratio: adaptive.mean / ((n as f64).ln().powi(2) * summary.inf_r),
        });
    }

    let curve = RiskCurve {
        n_grid: n_grid.to_vec(),
        mean_loss: points.iter().map(|p| p.mean_loss).collect(),
        stderr: points.iter().map(|p| p.stderr).collect(),
        oracle_risk: points.iter().map(|p| p.inf_r).collect(),
        reps,
    };
    Ok(RiskStudy {
        ratio: curve.oracle_ratios(),
        curve,
        points,
        master_seed,
        oracle_draws: oracle.draws,
        oracle_seed: oracle.seed,
    })
}

/// Least-squares line through `(x, y)`: `(slope, intercept)`.
pub fn least_squares(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::DegenerateStudy("least squares needs >= 2 paired points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateStudy("abscissa has zero spread".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Log exponent `2 + 2s + 2t` of the rate abscissa.
pub fn rate_log_exponent(s: f64, t: f64) -> f64 {
    2.0 + 2.0 * s + 2.0 * t
}

/// `-2s / (2s + 2t + 1)`.
pub fn expected_rate_slope(s: f64, t: f64) -> f64 {
    -2.0 * s / (2.0 * s + 2.0 * t + 1.0)
}

/// `log(n / log^{2 gamma} n)`.
pub fn rate_abscissa(n: usize, gamma: f64) -> f64 {
    let nf = n as f64;
    nf.ln() - 2.0 * gamma * nf.ln().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub s: f64,
    pub t: f64,
    /// Log exponent `gamma` of the abscissa.
    pub gamma: f64,
    pub fitted_slope: f64,
    pub intercept: f64,
    pub expected_slope: f64,
    /// Slope against plain `log n`, for diagnostics.
    pub raw_slope: f64,
    pub raw_intercept: f64,
    pub abscissa: Vec<f64>,
    pub log_mean_loss: Vec<f64>,
}

/// Regresses `log mean_loss` on `log(n / log^{2 gamma} n)`.
pub fn rate_fit(curve: &RiskCurve, s: f64, t: f64) -> Result<RateFit> {
    curve.validate()?;
    if curve.len() < 4 {
        return Err(Error::DegenerateStudy(format!(
            "rate fit needs at least 4 grid points, got {}",
            curve.len()
        )));
    }
    let (lo, hi) = (curve.n_grid[0], curve.n_grid[curve.len() - 1]);
    if (hi as f64) < 10.0 * lo as f64 {
        return Err(Error::DegenerateStudy(format!(
            "grid {lo}..{hi} spans less than one decade"
        )));
    }
    let gamma = rate_log_exponent(s, t);
    let abscissa: Vec<f64> = curve.n_grid.iter().map(|&n| rate_abscissa(n, gamma)).collect();
    let log_mean_loss: Vec<f64> = curve.mean_loss.iter().map(|l| l.ln()).collect();
    let (fitted_slope, intercept) = least_squares(&abscissa, &log_mean_loss)?;
    let log_n: Vec<f64> = curve.n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let (raw_slope, raw_intercept) = least_squares(&log_n, &log_mean_loss)?;
    Ok(RateFit {
        s,
        t,
        gamma,
        fitted_slope,
        intercept,
        expected_slope: expected_rate_slope(s, t),
        raw_slope,
        raw_intercept,
        abscissa,
        log_mean_loss,
    })
}

/// How often the realized resolution level lands in `[M0, M1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub n: usize,
    pub reps: usize,
    pub hits: usize,
    pub fraction: f64,
    /// Exact (Clopper-Pearson) 95% interval.
    pub ci_low: f64,
    pub ci_high: f64,
    #[serde(rename = "M0")]
    pub lower_bracket: usize,
    #[serde(rename = "M1")]
    pub upper_bracket: usize,
    pub mean_resolution: f64,
}

/// Clopper-Pearson interval for `hits` successes out of `trials`.
pub fn clopper_pearson(hits: usize, trials: usize, level: f64) -> (f64, f64) {
    let alpha = 1.0 - level;
    let (x, n) = (hits as f64, trials as f64);
    let low = if hits == 0 {
        0.0
    } else {
        Beta::new(x, n - x + 1.0).expect("positive shape").inverse_cdf(alpha / 2.0)
    };
    let high = if hits == trials {
        1.0
    } else {
        Beta::new(x + 1.0, n - x).expect("positive shape").inverse_cdf(1.0 - alpha / 2.0)
    };
    (low, high)
}

pub fn coverage_study(
    spec: &DgpSpec,
    config: &EstimatorConfig,
    n: usize,
    reps: usize,
    master_seed: u64,
) -> Result<Coverage> {
    check_reps(reps, 1)?;
    let (lower, upper) = deterministic_bounds(spec.t, n)?;
    let resolutions: Vec<usize> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_seed(master_seed, COVERAGE_TAG, n as u64, rep as u64);
            let sample = generate_sample(spec, n, seed)?;
            Ok(scan_eigenvalues(&sample, config)?.resolution())
        })
        .collect::<Result<_>>()?;
    let hits = resolutions.iter().filter(|&&m| lower <= m && m < upper).count();
    let (ci_low, ci_high) = clopper_pearson(hits, reps, 0.95);
    Ok(Coverage {
        n,
        reps,
        hits,
        fraction: hits as f64 / reps as f64,
        ci_low,
        ci_high,
        lower_bracket: lower,
        upper_bracket: upper,
        mean_resolution: resolutions.iter().sum::<usize>() as f64 / reps as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn expected_slopes() {
        assert_abs_diff_eq!(expected_rate_slope(1.0, 1.0), -0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(expected_rate_slope(2.0, 1.0), -4.0 / 7.0, epsilon = 1e-15);
        assert_eq!(rate_log_exponent(1.0, 1.0), 6.0);
    }

    #[test]
    fn exact_power_law_recovers_slope() {
        let gamma = rate_log_exponent(1.0, 1.0);
        let n_grid: Vec<usize> = (9..=15).map(|e| 1usize << e).collect();
        let mean_loss: Vec<f64> = n_grid
            .iter()
            .map(|&n| 3.0 * rate_abscissa(n, gamma).exp().powf(-0.4))
            .collect();
        let curve = RiskCurve {
            oracle_risk: vec![1.0; n_grid.len()],
            stderr: vec![0.0; n_grid.len()],
            n_grid,
            mean_loss,
            reps: 1,
        };
        let fit = rate_fit(&curve, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(fit.fitted_slope, -0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept, 3f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn rate_fit_rejects_degenerate_grids() {
        let curve = |n_grid: Vec<usize>| RiskCurve {
            mean_loss: vec![1.0; n_grid.len()],
            stderr: vec![0.1; n_grid.len()],
            oracle_risk: vec![1.0; n_grid.len()],
            n_grid,
            reps: 2,
        };
        assert!(rate_fit(&curve(vec![100, 200, 400]), 1.0, 1.0).is_err());
        assert!(rate_fit(&curve(vec![100, 200, 400, 800]), 1.0, 1.0).is_err());
        assert!(rate_fit(&curve(vec![100, 200, 400, 1000]), 1.0, 1.0).is_ok());
        assert!(rate_fit(&curve(vec![]), 1.0, 1.0).is_err());
    }

    #[test]
    fn clopper_pearson_bounds() {
        let (lo, hi) = clopper_pearson(0, 10, 0.95);
        assert_eq!(lo, 0.0);
        assert_abs_diff_eq!(hi, 1.0 - 0.025f64.powf(0.1), epsilon = 1e-9);
        let (lo, hi) = clopper_pearson(10, 10, 0.95);
        assert_abs_diff_eq!(lo, 0.025f64.powf(0.1), epsilon = 1e-9);
        assert_eq!(hi, 1.0);
        let (lo, hi) = clopper_pearson(45, 100, 0.95);
        assert!(lo < 0.45 && 0.45 < hi);
    }

    #[test]
    fn mean_estimate_needs_two_draws() {
        assert!(MeanEstimate::from_draws(&[1.0]).is_err());
        let m = MeanEstimate::from_draws(&[1.0, 3.0]).unwrap();
        assert_eq!(m.mean, 2.0);
        assert_abs_diff_eq!(m.stderr, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn mc_risk_is_deterministic_and_pure_noise_is_small() {
        let spec = DgpSpec {
            t: 1.0,
            phi: Default::default(),
            g: Default::default(),
            a: 0.0,
            eta_sd: 0.1,
        };
        let config = EstimatorConfig::default();
        let a = mc_risk(&spec, &config, 1024, 40, 5).unwrap();
        let b = mc_risk(&spec, &config, 1024, 40, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.mean < 1e-3, "{a:?}");

        let empty = (0..40)
            .filter(|&rep| {
                let s = generate_sample(&spec, 1024, derive_seed(5, RISK_TAG, 1024, rep)).unwrap();
                adaptive_estimate(&s, &config).unwrap().m_star == 0
            })
            .count();
        assert!(empty >= 30, "{empty}");
        assert!(mc_risk(&spec, &config, 1024, 1, 5).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(check_grid(&[]).is_err());
        assert!(check_grid(&[100, 100]).is_err());
        assert!(check_grid(&[2, 100]).is_err());
        assert!(check_grid(&[100, 200]).is_ok());
    }
}
