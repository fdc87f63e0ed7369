//! Exact simulator for an instrumental-variable model on the circle.
//!
//! The instrument `W` is uniform on `[0, 1)` and the regressor is
//! `X = W + eps (mod 1)`, with `eps` independent of `W`. Conditional
//! expectation given `W` is then circular convolution with the law of `eps`,
//! which is diagonal in the trigonometric system with eigenvalue
//! `E cos(2 pi j eps)` on both modes of frequency `j`.
//!
//! `eps` is drawn from a wrapped Cauchy law whose concentration is
//! `rho = exp(-G)` with `G ~ Gamma(t, 1)`. Since `E[rho^j] = (1 + j)^{-t}`,
//! the eigenvalues are exactly `(1 + j)^{-t}`.
//!
//! The structural error is `U = a (g(X) - (Tg)(W)) + eta`, so `E[U | W] = 0`
//! holds identically while `U` stays correlated with `X` whenever `a g != 0`.

use std::f64::consts::{PI, SQRT_2};
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{fill_basis_row, frequency, make_test_function, CoefficientVector, FunctionFamilySpec};
use crate::error::{Error, Result};
use crate::rng::{stream, ORACLE_SEED};

/// Draws used by the variance oracle unless told otherwise.
pub const ORACLE_DRAWS: usize = 1_000_000;

const ORACLE_CHUNK: usize = 16_384;

/// Joint law of `(Y, X, W)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    /// Degree of ill-posedness: eigenvalues decay like `(1 + j)^{-t}`.
    pub t: f64,
    /// True regression function.
    pub phi: CoefficientVector,
    /// Function carrying the endogeneity.
    pub g: CoefficientVector,
    /// Endogeneity strength.
    pub a: f64,
    /// Standard deviation of the exogenous Gaussian noise.
    pub eta_sd: f64,
}

impl DgpSpec {
    /// Sobolev regression (`s = 1`, `q = 2`, 64 coefficients), `t = 1`,
    /// `g` the first cosine, `a = 0.5`, `eta_sd = 0.5`.
    pub fn default_sobolev() -> Self {
        let phi = make_test_function(&FunctionFamilySpec::Sobolev {
            s: 1.0,
            q: Some(2.0),
            amplitude: 1.0,
            k_support: 64,
        })
        .expect("valid default family");
        DgpSpec {
            t: 1.0,
            phi,
            g: CoefficientVector::new(vec![1.0]),
            a: 0.5,
            eta_sd: 0.5,
        }
    }

    /// Checks everything the sampler needs. `eta_sd = 0` is accepted here as
    /// the noiseless limit; [`DgpSpec::validate`] insists on `eta_sd > 0`.
    fn check_sampleable(&self) -> Result<()> {
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::InvalidConfig(format!("t must be > 0, got {}", self.t)));
        }
        if !(self.eta_sd >= 0.0 && self.eta_sd.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "eta_sd must be >= 0, got {}",
                self.eta_sd
            )));
        }
        if !self.a.is_finite() {
            return Err(Error::InvalidConfig(format!("a must be finite, got {}", self.a)));
        }
        let finite = |f: &CoefficientVector| f.coeffs.iter().all(|c| c.is_finite());
        if !finite(&self.phi) || !finite(&self.g) {
            return Err(Error::InvalidConfig("phi and g must have finite coefficients".into()));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check_sampleable()?;
        if self.eta_sd <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "eta_sd must be > 0, got {}",
                self.eta_sd
            )));
        }
        Ok(())
    }
}

/// `n` observed triples. `x` and `w` lie in `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IvSample {
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    y: f64,
    x: f64,
    w: f64,
}

impl IvSample {
    pub fn new(y: Vec<f64>, x: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if y.is_empty() || y.len() != x.len() || y.len() != w.len() {
            return Err(Error::InvalidConfig(format!(
                "sample arrays must be nonempty and of equal length (y: {}, x: {}, w: {})",
                y.len(),
                x.len(),
                w.len()
            )));
        }
        let unit = |v: &f64| (0.0..1.0).contains(v);
        if !x.iter().all(unit) || !w.iter().all(unit) {
            return Err(Error::InvalidConfig("x and w must lie in [0, 1)".into()));
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("y must be finite".into()));
        }
        Ok(IvSample { y, x, w })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Same sample with every response multiplied by `c`.
    pub fn with_scaled_response(&self, c: f64) -> Self {
        IvSample {
            y: self.y.iter().map(|v| c * v).collect(),
            x: self.x.clone(),
            w: self.w.clone(),
        }
    }

    /// CSV with header `y,x,w`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        for i in 0..self.n() {
            out.serialize(Row {
                y: self.y[i],
                x: self.x[i],
                w: self.w[i],
            })?;
        }
        out.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let (mut y, mut x, mut w) = (Vec::new(), Vec::new(), Vec::new());
        for row in rdr.deserialize() {
            let row: Row = row?;
            y.push(row.y);
            x.push(row.x);
            w.push(row.w);
        }
        IvSample::new(y, x, w)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        IvSample::read_csv(std::io::BufReader::new(file))
    }
}

/// `(1 + ceil(k/2))^{-t}`.
pub fn true_eigenvalue(k: usize, t: f64) -> f64 {
    debug_assert!(k >= 1);
    (1.0 + frequency(k) as f64).powf(-t)
}

pub fn true_eigenvalues(t: f64, k_max: usize) -> Vec<f64> {
    (1..=k_max).map(|k| true_eigenvalue(k, t)).collect()
}

/// Gamma-mixed wrapped Cauchy law on the circle `[0, 1)`.
#[derive(Debug, Clone, Copy)]
pub struct ConvolutionNoise {
    mixing: Gamma<f64>,
}

impl ConvolutionNoise {
    pub fn new(t: f64) -> Result<Self> {
        let mixing = Gamma::new(t, 1.0)
            .map_err(|e| Error::InvalidConfig(format!("t must be > 0, got {t} ({e})")))?;
        Ok(ConvolutionNoise { mixing })
    }
}

impl Distribution<f64> for ConvolutionNoise {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let rho = (-self.mixing.sample(rng)).exp();
        let v: f64 = rng.random();
        // quantile transform of the wrapped Cauchy centred at 0
        let theta = 2.0 * (((1.0 - rho) / (1.0 + rho)) * (PI * (v - 0.5)).tan()).atan();
        wrap_unit(theta / (2.0 * PI))
    }
}

#[inline]
fn wrap_unit(v: f64) -> f64 {
    let r = v - v.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

pub fn sample_noise<R: Rng + ?Sized>(t: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let law = ConvolutionNoise::new(t)?;
    Ok((0..n).map(|_| law.sample(rng)).collect())
}

/// `(Tf)[k] = lambda_k f[k]`.
pub fn apply_operator(f: &CoefficientVector, t: f64) -> CoefficientVector {
    f.coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| true_eigenvalue(i + 1, t) * c)
        .collect::<Vec<_>>()
        .into()
}

/// Draws `n` observations; the stream is seeded from `seed` alone.
pub fn generate_sample(spec: &DgpSpec, n: usize, seed: u64) -> Result<IvSample> {
    generate_sample_with(spec, n, &mut stream(seed))
}

pub fn generate_sample_with<R: Rng + ?Sized>(spec: &DgpSpec, n: usize, rng: &mut R) -> Result<IvSample> {
    spec.check_sampleable()?;
    if n == 0 {
        return Err(Error::InvalidConfig("sample size must be >= 1".into()));
    }
    let noise = ConvolutionNoise::new(spec.t)?;
    let eta = Normal::new(0.0, spec.eta_sd)
        .map_err(|e| Error::InvalidConfig(format!("eta_sd: {e}")))?;
    let tg = apply_operator(&spec.g, spec.t);
    let endogenous = spec.a != 0.0 && !spec.g.is_zero();
    let k_row = spec.phi.support().max(spec.g.support()).max(1);

    let (mut y, mut x, mut w) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut row_x, mut row_w) = (Vec::new(), Vec::new());
    for _ in 0..n {
        let wi: f64 = rng.random();
        let xi = wrap_unit(wi + noise.sample(rng));
        let ei = eta.sample(rng);

        fill_basis_row(xi, k_row, &mut row_x);
        let mut ui = ei;
        if endogenous {
            fill_basis_row(wi, k_row, &mut row_w);
            ui += spec.a * (spec.g.dot_row(&row_x) - tg.dot_row(&row_w));
        }
        y.push(spec.phi.dot_row(&row_x) + ui);
        x.push(xi);
        w.push(wi);
    }
    Ok(IvSample { y, x, w })
}

/// Recovers the structural error `U = Y - phi(X)` of a simulated sample.
pub fn structural_error(spec: &DgpSpec, sample: &IvSample) -> Vec<f64> {
    let mut row = Vec::new();
    let k_row = spec.phi.support().max(1);
    sample
        .y
        .iter()
        .zip(&sample.x)
        .map(|(&y, &x)| {
            fill_basis_row(x, k_row, &mut row);
            y - spec.phi.dot_row(&row)
        })
        .collect()
}

/// Monte Carlo values of `sigma_k^2 = Var(Y psi_k(W))` for `k = 1..=k_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaSqOracle {
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub draws: usize,
    pub seed: u64,
}

impl SigmaSqOracle {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Accumulates one chunk of `(y, w)` into `acc`, using `row` as scratch.
type ChunkKernel<'a> = dyn Fn(&[f64], &[f64], &mut Vec<f64>, &mut [f64]) + Sync + 'a;

pub fn sigma_sq_oracle(spec: &DgpSpec, k_max: usize, draws: usize, seed: u64) -> Result<SigmaSqOracle> {
    if draws < 2 {
        return Err(Error::InvalidConfig("variance oracle needs at least 2 draws".into()));
    }
    let sample = generate_sample(spec, draws, seed)?;
    let chunks = |f: &ChunkKernel<'_>, width: usize| {
        let parts: Vec<Vec<f64>> = sample
            .y
            .par_chunks(ORACLE_CHUNK)
            .zip(sample.w.par_chunks(ORACLE_CHUNK))
            .map(|(y, w)| {
                let mut acc = vec![0.0; width * k_max];
                let mut row = Vec::new();
                f(y, w, &mut row, &mut acc);
                acc
            })
            .collect();
        // fixed-order reduction keeps the result independent of scheduling
        parts.into_iter().fold(vec![0.0; width * k_max], |mut tot, p| {
            tot.iter_mut().zip(p).for_each(|(a, b)| *a += b);
            tot
        })
    };

    let sums = chunks(
        &|y, w, row, acc| {
            for (yi, wi) in y.iter().zip(w) {
                fill_basis_row(*wi, k_max, row);
                for (a, b) in acc.iter_mut().zip(row.iter()) {
                    *a += yi * b;
                }
            }
        },
        1,
    );
    let nf = draws as f64;
    let means: Vec<f64> = sums.iter().map(|s| s / nf).collect();

    let central = chunks(
        &|y, w, row, acc| {
            for (yi, wi) in y.iter().zip(w) {
                fill_basis_row(*wi, k_max, row);
                for k in 0..k_max {
                    let d = yi * row[k] - means[k];
                    let d2 = d * d;
                    acc[2 * k] += d2;
                    acc[2 * k + 1] += d2 * d2;
                }
            }
        },
        2,
    );

    let mut values = Vec::with_capacity(k_max);
    let mut stderr = Vec::with_capacity(k_max);
    for k in 0..k_max {
        let m2 = central[2 * k] / nf;
        let m4 = central[2 * k + 1] / nf;
        values.push(central[2 * k] / (nf - 1.0));
        stderr.push(((m4 - m2 * m2).max(0.0) / nf).sqrt());
    }
    Ok(SigmaSqOracle {
        values,
        stderr,
        draws,
        seed,
    })
}

/// `sigma_k^2` and its Monte Carlo standard error, from the fixed oracle stream.
pub fn sigma_sq_true(k: usize, spec: &DgpSpec) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::Domain {
            what: "k",
            value: 0.0,
            expected: "basis index must be >= 1",
        });
    }
    let oracle = sigma_sq_oracle(spec, k, ORACLE_DRAWS, ORACLE_SEED)?;
    Ok((oracle.values[k - 1], oracle.stderr[k - 1]))
}

/// Numerical check of the regularity conditions the estimator relies on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Sup-norm bound of every basis function.
    pub basis_sup_norm: f64,
    /// Whether `Y` is almost surely bounded (false whenever `eta_sd > 0`).
    pub response_bounded: bool,
    pub moment_condition: String,
    pub k_max: usize,
    /// Range of `lambda_k k^t` over `k <= k_max`.
    pub eigen_ratio_min: f64,
    pub eigen_ratio_max: f64,
    /// Range of `sigma_k^2` over `k <= k_max`.
    pub sigma_sq_min: f64,
    pub sigma_sq_max: f64,
}

pub fn validate_assumptions(spec: &DgpSpec, k_max: usize) -> Result<AssumptionReport> {
    let oracle = sigma_sq_oracle(spec, k_max.max(1), ORACLE_DRAWS, ORACLE_SEED)?;
    validate_assumptions_with_oracle(spec, &oracle)
}

pub fn validate_assumptions_with_oracle(spec: &DgpSpec, oracle: &SigmaSqOracle) -> Result<AssumptionReport> {
    spec.validate()?;
    let k_max = oracle.len();
    if k_max == 0 {
        return Err(Error::InsufficientOracle { needed: 1, available: 0 });
    }
    let ratios = (1..=k_max).map(|k| true_eigenvalue(k, spec.t) * (k as f64).powf(spec.t));
    let (eigen_ratio_min, eigen_ratio_max) = min_max(ratios);
    let (sigma_sq_min, sigma_sq_max) = min_max(oracle.values.iter().copied());
    Ok(AssumptionReport {
        basis_sup_norm: SQRT_2,
        response_bounded: spec.eta_sd == 0.0,
        moment_condition: "Gaussian tail, Bernstein-compatible".to_string(),
        k_max,
        eigen_ratio_min,
        eigen_ratio_max,
        sigma_sq_min,
        sigma_sq_max,
    })
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}
