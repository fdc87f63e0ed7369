//! Spectral cut-off estimation with estimated eigenvalues.
//!
//! From a sample `(Y_i, X_i, W_i)` the pipeline computes
//!
//! * `r_k = (1/n) sum_i Y_i psi_k(W_i)` and `lambda_k = (1/n) sum_i psi_k(W_i) phi_k(X_i)`,
//! * the resolution level `M`: one less than the first `k` whose `|lambda_k|`
//!   drops to `log(n) / sqrt(n)`,
//! * the empirical criterion
//!   `U(m) = sum_{k <= m} lambda_k^{-2} (w sigma_k^2 - r_k^2)` with penalty
//!   weight `w = log^p(n) / n`,
//! * `m* = argmin_{m <= M} U(m)` and `phi*[k] = r_k / lambda_k` for `k <= m*`.
//!
//! (All hatted quantities above are empirical.) The basis is the same
//! trigonometric system on both sides, so `phi_k = psi_k`.

use serde::{Deserialize, Serialize};

use crate::basis::{fill_basis_block, fill_basis_row, frequency, CoefficientVector};
use crate::dgp::{true_eigenvalue, IvSample};
use crate::error::{Error, Result};

/// Frequencies per pass of the lazy eigenvalue scan.
const SCAN_BLOCK_FREQS: usize = 16;

fn default_k_max() -> usize {
    1_000_000
}

fn default_log_exponent() -> f64 {
    2.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Hard cap on any coefficient index the estimator computes.
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// Search cap `N` for the resolution level. Defaults to `min(n^4, k_max)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution_cap: Option<usize>,
    /// Exponent `p` of the `log^p(n) / n` penalty weight.
    #[serde(default = "default_log_exponent")]
    pub penalty_log_exponent: f64,
    /// Constant `c` of the comparative criterion with weight `c / n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0_constant: Option<f64>,
    /// Whether `m = 0` is a candidate model.
    #[serde(default = "yes")]
    pub allow_empty_model: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            k_max: default_k_max(),
            resolution_cap: None,
            penalty_log_exponent: default_log_exponent(),
            u0_constant: None,
            allow_empty_model: true,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 {
            return Err(Error::InvalidConfig("k_max must be >= 1".into()));
        }
        match self.resolution_cap {
            Some(0) => return Err(Error::InvalidConfig("resolution_cap must be >= 1".into())),
            Some(cap) if cap > self.k_max => {
                return Err(Error::InvalidConfig(format!(
                    "resolution_cap {cap} exceeds k_max {}",
                    self.k_max
                )))
            }
            _ => {}
        }
        if !(self.penalty_log_exponent >= 0.0 && self.penalty_log_exponent.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "penalty_log_exponent must be finite and >= 0, got {}",
                self.penalty_log_exponent
            )));
        }
        if let Some(c) = self.u0_constant {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::InvalidConfig(format!("u0_constant must be >= 0, got {c}")));
            }
        }
        Ok(())
    }

    /// The cap `N` in effect for sample size `n`.
    pub fn resolution_cap_for(&self, n: usize) -> usize {
        self.resolution_cap
            .unwrap_or_else(|| (n as u128).pow(4).min(self.k_max as u128) as usize)
    }

    /// Whether the default `n^4` cap was cut down to `k_max`.
    pub fn cap_limited_by_k_max(&self, n: usize) -> bool {
        self.resolution_cap.is_none() && (n as u128).pow(4) > self.k_max as u128
    }

    /// `log^p(n) / n`.
    pub fn penalty_weight(&self, n: usize) -> f64 {
        (n as f64).ln().powf(self.penalty_log_exponent) / n as f64
    }
}

/// `log(n) / sqrt(n)`, the noise level below which an estimated eigenvalue is discarded.
pub fn eigen_threshold(n: usize) -> f64 {
    let nf = n as f64;
    nf.ln() / nf.sqrt()
}

/// `r_k` for `k = 1..=k_max`.
pub fn estimate_r_coeffs(sample: &IvSample, k_max: usize) -> Vec<f64> {
    let mut sums = vec![0.0; k_max];
    let mut row = Vec::new();
    for (y, w) in sample.y.iter().zip(&sample.w) {
        fill_basis_row(*w, k_max, &mut row);
        for (s, b) in sums.iter_mut().zip(&row) {
            *s += y * b;
        }
    }
    let n = sample.n() as f64;
    sums.into_iter().map(|s| s / n).collect()
}

/// `lambda_k` for `k = 1..=k_max`.
pub fn estimate_eigenvalues(sample: &IvSample, k_max: usize) -> Vec<f64> {
    if k_max == 0 {
        return Vec::new();
    }
    let mut lambda = eigen_block(sample, 1, frequency(k_max));
    lambda.truncate(k_max);
    lambda
}

/// Estimated eigenvalues for indices `2 first_freq - 1 ..= 2 last_freq`.
fn eigen_block(sample: &IvSample, first_freq: usize, last_freq: usize) -> Vec<f64> {
    let width = 2 * (last_freq - first_freq + 1);
    let mut sums = vec![0.0; width];
    let (mut bx, mut bw) = (Vec::with_capacity(width), Vec::with_capacity(width));
    for (x, w) in sample.x.iter().zip(&sample.w) {
        fill_basis_block(*x, first_freq, last_freq, &mut bx);
        fill_basis_block(*w, first_freq, last_freq, &mut bw);
        for ((s, a), b) in sums.iter_mut().zip(&bx).zip(&bw) {
            *s += a * b;
        }
    }
    let n = sample.n() as f64;
    sums.into_iter().map(|s| s / n).collect()
}

/// `sigma_k^2 = (1/n) sum_i (Y_i psi_k(W_i) - r_k)^2` for `k = 1..=k_max`.
pub fn estimate_sigma_sq(sample: &IvSample, k_max: usize) -> Vec<f64> {
    let r_hat = estimate_r_coeffs(sample, k_max);
    sigma_sq_given_r(sample, &r_hat)
}

fn sigma_sq_given_r(sample: &IvSample, r_hat: &[f64]) -> Vec<f64> {
    let k_max = r_hat.len();
    let mut sums = vec![0.0; k_max];
    let mut row = Vec::new();
    for (y, w) in sample.y.iter().zip(&sample.w) {
        fill_basis_row(*w, k_max, &mut row);
        for ((s, b), r) in sums.iter_mut().zip(&row).zip(r_hat) {
            let d = y * b - r;
            *s += d * d;
        }
    }
    let n = sample.n() as f64;
    sums.into_iter().map(|s| s / n).collect()
}

/// Outcome of the lazy eigenvalue scan.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenScan {
    /// `lambda_k` for every scanned `k`, ending at the crossing (or at the cap).
    pub lambda_hat: Vec<f64>,
    /// First `k` with `|lambda_k| <= log(n)/sqrt(n)`, if any within the cap.
    pub crossing: Option<usize>,
    pub cap: usize,
}

impl EigenScan {
    pub fn resolution(&self) -> usize {
        match self.crossing {
            Some(k) => k - 1,
            None => self.cap,
        }
    }
}

/// Estimates eigenvalues `k = 1, 2, ...` only until the first one falls below
/// the noise threshold, or until the cap `N` is reached.
pub fn scan_eigenvalues(sample: &IvSample, config: &EstimatorConfig) -> Result<EigenScan> {
    let n = sample.n();
    if n < 3 {
        return Err(Error::DegenerateSample { n });
    }
    config.validate()?;
    let cap = config.resolution_cap_for(n);
    let threshold = eigen_threshold(n);
    let last_freq_cap = frequency(cap);
    let mut lambda_hat = Vec::new();
    let mut first = 1;
    while first <= last_freq_cap {
        let last = (first + SCAN_BLOCK_FREQS - 1).min(last_freq_cap);
        for value in eigen_block(sample, first, last) {
            if lambda_hat.len() == cap {
                break;
            }
            lambda_hat.push(value);
            if value.abs() <= threshold {
                let k = lambda_hat.len();
                return Ok(EigenScan {
                    lambda_hat,
                    crossing: Some(k),
                    cap,
                });
            }
        }
        first = last + 1;
    }
    Ok(EigenScan {
        lambda_hat,
        crossing: None,
        cap,
    })
}

/// Resolution level `M` from eigenvalue estimates covering at least `1..=N`
/// (or up to and including the first crossing).
pub fn select_resolution(lambda_hat: &[f64], n: usize, config: &EstimatorConfig) -> Result<usize> {
    if n < 3 {
        return Err(Error::DegenerateSample { n });
    }
    let cap = config.resolution_cap_for(n);
    let threshold = eigen_threshold(n);
    let scanned = &lambda_hat[..lambda_hat.len().min(cap)];
    if let Some(pos) = scanned.iter().position(|l| l.abs() <= threshold) {
        return Ok(pos);
    }
    if lambda_hat.len() >= cap {
        Ok(cap)
    } else {
        Err(Error::InvalidConfig(format!(
            "eigenvalue estimates cover {} indices, the cap N = {cap} needs all of them",
            lambda_hat.len()
        )))
    }
}

/// Deterministic brackets `(M0, M1)` computed from the true eigenvalues:
/// `M0 = inf{k : lambda_k <= log^2(n)/sqrt(n)} - 1` and
/// `M1 = inf{k : lambda_k <= log^{3/4}(n)/sqrt(n)}`.
pub fn deterministic_bounds(t: f64, n: usize) -> Result<(usize, usize)> {
    if n < 3 {
        return Err(Error::DegenerateSample { n });
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidConfig(format!("t must be > 0, got {t}")));
    }
    let nf = n as f64;
    let (log_n, root_n) = (nf.ln(), nf.sqrt());
    let first_below = |level: f64| {
        // lambda is constant on frequency pairs, so the first index is always odd
        let j = (1..).find(|&j| (1.0 + j as f64).powf(-t) <= level).expect("eigenvalues vanish");
        2 * j - 1
    };
    let m0 = first_below(log_n.powi(2) / root_n) - 1;
    let m1 = first_below(log_n.powf(0.75) / root_n);
    Ok((m0, m1))
}

/// Known-operator projection estimator `r_k / lambda_k`, `k <= m`.
pub fn naive_estimator(r_hat: &[f64], t: f64, m: usize) -> Result<CoefficientVector> {
    if m > r_hat.len() {
        return Err(Error::InvalidConfig(format!(
            "cut-off m = {m} exceeds the {} available coefficients",
            r_hat.len()
        )));
    }
    Ok(r_hat[..m]
        .iter()
        .enumerate()
        .map(|(i, r)| r / true_eigenvalue(i + 1, t))
        .collect::<Vec<_>>()
        .into())
}

/// `r_k / lambda_k` for `k <= min(m, M)`, using estimated eigenvalues.
pub fn thresholded_estimator(r_hat: &[f64], lambda_hat: &[f64], m: usize, resolution: usize) -> CoefficientVector {
    let support = m.min(resolution).min(r_hat.len()).min(lambda_hat.len());
    r_hat[..support]
        .iter()
        .zip(lambda_hat)
        .map(|(r, l)| r / l)
        .collect::<Vec<_>>()
        .into()
}

/// Empirical coefficients on `1..=M`: the inputs to the selection criteria.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCoefficients {
    pub n: usize,
    pub r_hat: Vec<f64>,
    pub lambda_hat: Vec<f64>,
    pub sigma_sq_hat: Vec<f64>,
}

impl EmpiricalCoefficients {
    pub fn new(n: usize, r_hat: Vec<f64>, lambda_hat: Vec<f64>, sigma_sq_hat: Vec<f64>) -> Result<Self> {
        if r_hat.len() != sigma_sq_hat.len() || lambda_hat.len() < r_hat.len() {
            return Err(Error::InvalidConfig(format!(
                "coefficient arrays disagree (r: {}, lambda: {}, sigma^2: {})",
                r_hat.len(),
                lambda_hat.len(),
                sigma_sq_hat.len()
            )));
        }
        Ok(EmpiricalCoefficients {
            n,
            r_hat,
            lambda_hat,
            sigma_sq_hat,
        })
    }

    /// Largest admissible `m`.
    pub fn resolution(&self) -> usize {
        self.r_hat.len()
    }

    /// Increment `U(k) - U(k - 1)` for penalty weight `weight`.
    #[inline]
    fn increment(&self, k: usize, weight: f64) -> f64 {
        let inv_sq = self.lambda_hat[k - 1].powi(-2);
        inv_sq * (weight * self.sigma_sq_hat[k - 1] - self.r_hat[k - 1] * self.r_hat[k - 1])
    }

    fn check_m(&self, m: usize) -> Result<()> {
        if m > self.resolution() {
            return Err(Error::InvalidConfig(format!(
                "m = {m} exceeds the resolution level M = {}",
                self.resolution()
            )));
        }
        Ok(())
    }

    /// Criterion with an arbitrary penalty weight, summed from scratch.
    pub fn criterion_with_weight(&self, m: usize, weight: f64) -> Result<f64> {
        self.check_m(m)?;
        Ok((1..=m).map(|k| self.increment(k, weight)).fold(0.0, |acc, d| acc + d))
    }

    /// `U(m)` with weight `log^p(n) / n`.
    pub fn criterion_u(&self, m: usize, config: &EstimatorConfig) -> Result<f64> {
        self.criterion_with_weight(m, config.penalty_weight(self.n))
    }

    /// `U_0(m)` with weight `c / n`.
    pub fn criterion_u0(&self, m: usize, c: f64) -> Result<f64> {
        self.criterion_with_weight(m, c / self.n as f64)
    }

    /// `U(0), U(1), ..., U(M)` by a running sum (same summation order as
    /// [`Self::criterion_with_weight`], so the values agree exactly).
    pub fn criterion_path(&self, weight: f64) -> Vec<f64> {
        let mut path = Vec::with_capacity(self.resolution() + 1);
        let mut acc = 0.0;
        path.push(acc);
        for k in 1..=self.resolution() {
            acc += self.increment(k, weight);
            path.push(acc);
        }
        path
    }
}

/// Smallest index attaining the minimum.
pub fn select_m_star(u_values: &[f64]) -> Result<usize> {
    if u_values.is_empty() {
        return Err(Error::InvalidConfig("criterion path is empty".into()));
    }
    let mut best = 0;
    for (m, &u) in u_values.iter().enumerate().skip(1) {
        if u < u_values[best] {
            best = m;
        }
    }
    Ok(best)
}

fn select_with_policy(u_values: &[f64], allow_empty: bool) -> Result<usize> {
    if allow_empty || u_values.len() == 1 {
        select_m_star(u_values)
    } else {
        Ok(1 + select_m_star(&u_values[1..])?)
    }
}

/// Everything the adaptive estimator computed from one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub n: usize,
    pub config: EstimatorConfig,
    /// Cap `N` in effect.
    pub resolution_cap: usize,
    /// `log(n) / sqrt(n)`.
    pub threshold: f64,
    /// First index whose estimated eigenvalue fell below the threshold.
    pub crossing: Option<usize>,
    /// Estimated eigenvalues for every scanned index.
    pub lambda_hat: Vec<f64>,
    pub r_hat: Vec<f64>,
    pub sigma_sq_hat: Vec<f64>,
    #[serde(rename = "M")]
    pub resolution: usize,
    pub penalty_weight: f64,
    #[serde(rename = "U_values")]
    pub u_values: Vec<f64>,
    pub m_star: usize,
    pub phi_star: CoefficientVector,
    /// Whether `m = 0` was a candidate.
    pub empty_model_admissible: bool,
    #[serde(rename = "U0_values", default, skip_serializing_if = "Option::is_none")]
    pub u0_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_star_u0: Option<usize>,
}

impl EstimateReport {
    /// CSV `k,coefficient` of the selected estimate.
    pub fn phi_star_csv(&self) -> String {
        let mut out = String::from("k,coefficient\n");
        for (i, c) in self.phi_star.coeffs.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, c));
        }
        out
    }
}

pub fn adaptive_estimate(sample: &IvSample, config: &EstimatorConfig) -> Result<EstimateReport> {
    let n = sample.n();
    if n < 3 {
        return Err(Error::DegenerateSample { n });
    }
    let scan = scan_eigenvalues(sample, config)?;
    let resolution = scan.resolution();

    let r_hat = estimate_r_coeffs(sample, resolution);
    let sigma_sq_hat = sigma_sq_given_r(sample, &r_hat);
    let coeffs = EmpiricalCoefficients::new(n, r_hat, scan.lambda_hat[..resolution].to_vec(), sigma_sq_hat)?;

    let penalty_weight = config.penalty_weight(n);
    let u_values = coeffs.criterion_path(penalty_weight);
    let m_star = select_with_policy(&u_values, config.allow_empty_model)?;
    let phi_star = thresholded_estimator(&coeffs.r_hat, &coeffs.lambda_hat, m_star, resolution);

    let (u0_values, m_star_u0) = match config.u0_constant {
        Some(c) => {
            let path = coeffs.criterion_path(c / n as f64);
            let m = select_with_policy(&path, config.allow_empty_model)?;
            (Some(path), Some(m))
        }
        None => (None, None),
    };

    let EmpiricalCoefficients { r_hat, sigma_sq_hat, .. } = coeffs;
    Ok(EstimateReport {
        n,
        config: config.clone(),
        resolution_cap: scan.cap,
        threshold: eigen_threshold(n),
        crossing: scan.crossing,
        lambda_hat: scan.lambda_hat,
        r_hat,
        sigma_sq_hat,
        resolution,
        penalty_weight,
        u_values,
        m_star,
        phi_star,
        empty_model_admissible: config.allow_empty_model,
        u0_values,
        m_star_u0,
    })
}
