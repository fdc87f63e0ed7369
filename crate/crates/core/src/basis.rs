//! The real trigonometric system on `[0, 1]` and functions expanded in it.
//!
//! Index `k >= 1` maps to frequency `j = ceil(k / 2)`: odd `k` is the cosine
//! `sqrt(2) cos(2 pi j x)`, even `k` the sine `sqrt(2) sin(2 pi j x)`. The
//! constant mode is not part of the system, so every represented function
//! integrates to zero over `[0, 1]`.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Frequencies between exact `sin_cos` evaluations in [`fill_basis_block`].
const RESYNC_EVERY: usize = 16;

/// 1-based index into the paired trigonometric system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BasisIndex(usize);

impl BasisIndex {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Domain {
                what: "k",
                value: 0.0,
                expected: "basis index must be >= 1",
            });
        }
        Ok(BasisIndex(k))
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// `ceil(k / 2)`.
    pub fn frequency(self) -> usize {
        frequency(self.0)
    }

    pub fn is_cosine(self) -> bool {
        self.0 % 2 == 1
    }
}

#[inline]
pub(crate) fn frequency(k: usize) -> usize {
    k.div_ceil(2)
}

fn check_point(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "x",
            value: x,
            expected: "evaluation point must lie in [0, 1]",
        })
    }
}

/// Evaluates the `k`-th basis function at `x`.
pub fn eval_basis(k: usize, x: f64) -> Result<f64> {
    let k = BasisIndex::new(k)?;
    check_point(x)?;
    Ok(eval_unchecked(k.get(), x))
}

#[inline]
fn eval_unchecked(k: usize, x: f64) -> f64 {
    let angle = TWO_PI * frequency(k) as f64 * x;
    if k % 2 == 1 {
        SQRT_2 * angle.cos()
    } else {
        SQRT_2 * angle.sin()
    }
}

/// Fills `out` with the basis values for frequencies `first_freq ..= last_freq`,
/// laid out as `[cos_j, sin_j, cos_{j+1}, sin_{j+1}, ...]` (scaled by `sqrt 2`).
///
/// Entry `2 (j - first_freq)` is index `k = 2j - 1`, so a block starting at
/// frequency `f` covers `k = 2f - 1 ..= 2 last_freq`. Consecutive frequencies
/// use the angle-addition recurrence and resynchronise with an exact
/// `sin_cos` every few steps, keeping the drift at a few ulps.
pub(crate) fn fill_basis_block(x: f64, first_freq: usize, last_freq: usize, out: &mut Vec<f64>) {
    debug_assert!(first_freq >= 1 && last_freq >= first_freq);
    out.clear();
    let (s1, c1) = (TWO_PI * x).sin_cos();
    let (mut s, mut c) = (0.0, 0.0);
    for (step, j) in (first_freq..=last_freq).enumerate() {
        if step % RESYNC_EVERY == 0 {
            (s, c) = (TWO_PI * j as f64 * x).sin_cos();
        } else {
            (s, c) = (s * c1 + c * s1, c * c1 - s * s1);
        }
        out.push(SQRT_2 * c);
        out.push(SQRT_2 * s);
    }
}

/// Basis values for `k = 1 ..= k_max` at `x`, written to `out[k - 1]`.
pub(crate) fn fill_basis_row(x: f64, k_max: usize, out: &mut Vec<f64>) {
    if k_max == 0 {
        out.clear();
        return;
    }
    fill_basis_block(x, 1, frequency(k_max), out);
    out.truncate(k_max);
}

/// A function on `[0, 1]` stored as its coefficients `f[1], f[2], ...` in the
/// trigonometric system. Indices past the stored length are zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CoefficientVector {
    pub coeffs: Vec<f64>,
}

impl CoefficientVector {
    pub fn new(coeffs: Vec<f64>) -> Self {
        CoefficientVector { coeffs }
    }

    pub fn zeros(len: usize) -> Self {
        CoefficientVector {
            coeffs: vec![0.0; len],
        }
    }

    /// Number of stored coefficients.
    pub fn support(&self) -> usize {
        self.coeffs.len()
    }

    /// Coefficient at 1-based index `k`, zero beyond the stored support.
    pub fn get(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        self.coeffs.get(k - 1).copied().unwrap_or(0.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// Squared `L^2` norm, which by Parseval is the sum of squared coefficients.
    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        CoefficientVector {
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    /// Point evaluation `sum_k f[k] e_k(x)`.
    pub fn synthesize(&self, x: f64) -> Result<f64> {
        synthesize(self, x)
    }

    /// Evaluation against a precomputed basis row (`row[k - 1] = e_k(x)`).
    #[inline]
    pub(crate) fn dot_row(&self, row: &[f64]) -> f64 {
        self.coeffs.iter().zip(row).map(|(c, b)| c * b).sum()
    }
}

impl From<Vec<f64>> for CoefficientVector {
    fn from(coeffs: Vec<f64>) -> Self {
        CoefficientVector { coeffs }
    }
}

pub fn synthesize(f: &CoefficientVector, x: f64) -> Result<f64> {
    check_point(x)?;
    Ok(f
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| c * eval_unchecked(i + 1, x))
        .sum())
}

/// `||f - g||^2` computed in coefficient space; the shorter vector is zero-padded.
pub fn parseval_sq_distance(f: &CoefficientVector, g: &CoefficientVector) -> f64 {
    let len = f.support().max(g.support());
    (1..=len)
        .map(|k| {
            let d = f.get(k) - g.get(k);
            d * d
        })
        .sum()
}

/// `sum_k k^{2s} f[k]^2`.
pub fn sobolev_seminorm_sq(f: &CoefficientVector, s: f64) -> f64 {
    f.coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| ((i + 1) as f64).powf(2.0 * s) * c * c)
        .sum()
}

/// Parametric families of test functions used as the true regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionFamilySpec {
    /// `f[k] = A (1 + k)^{-q}`, inside the Sobolev ellipsoid of order `s`
    /// whenever `q > s + 1/2`. `q` defaults to `s + 1`.
    Sobolev {
        s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q: Option<f64>,
        #[serde(default = "unit_amplitude")]
        amplitude: f64,
        k_support: usize,
    },
    /// `f[k] = A exp(-gamma k^{t_exp})`.
    Supersmooth {
        gamma: f64,
        t_exp: f64,
        #[serde(default = "unit_amplitude")]
        amplitude: f64,
        k_support: usize,
    },
}

fn unit_amplitude() -> f64 {
    1.0
}

impl FunctionFamilySpec {
    pub fn sobolev(s: f64, k_support: usize) -> Self {
        FunctionFamilySpec::Sobolev {
            s,
            q: None,
            amplitude: 1.0,
            k_support,
        }
    }

    /// Smoothness index of the Sobolev family, if this is one.
    pub fn smoothness(&self) -> Option<f64> {
        match self {
            FunctionFamilySpec::Sobolev { s, .. } => Some(*s),
            FunctionFamilySpec::Supersmooth { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FunctionFamilySpec::Sobolev {
                s,
                q,
                amplitude,
                k_support,
            } => {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(Error::InvalidSpec(format!("sobolev s must be > 0, got {s}")));
                }
                let q = q.unwrap_or(s + 1.0);
                if !(q.is_finite() && q > s + 0.5) {
                    return Err(Error::InvalidSpec(format!(
                        "sobolev decay q = {q} must exceed s + 1/2 = {}",
                        s + 0.5
                    )));
                }
                check_common(amplitude, k_support)
            }
            FunctionFamilySpec::Supersmooth {
                gamma,
                t_exp,
                amplitude,
                k_support,
            } => {
                if !(gamma >= 0.0 && gamma.is_finite()) {
                    return Err(Error::InvalidSpec(format!(
                        "supersmooth gamma must be >= 0, got {gamma}"
                    )));
                }
                if !(t_exp > 0.0 && t_exp.is_finite()) {
                    return Err(Error::InvalidSpec(format!(
                        "supersmooth t_exp must be > 0, got {t_exp}"
                    )));
                }
                check_common(amplitude, k_support)
            }
        }
    }
}

fn check_common(amplitude: f64, k_support: usize) -> Result<()> {
    if !amplitude.is_finite() {
        return Err(Error::InvalidSpec(format!("amplitude must be finite, got {amplitude}")));
    }
    if k_support == 0 {
        return Err(Error::InvalidSpec("k_support must be >= 1".into()));
    }
    Ok(())
}

pub fn make_test_function(spec: &FunctionFamilySpec) -> Result<CoefficientVector> {
    spec.validate()?;
    let coeffs = match *spec {
        FunctionFamilySpec::Sobolev {
            s,
            q,
            amplitude,
            k_support,
        } => {
            let q = q.unwrap_or(s + 1.0);
            (1..=k_support)
                .map(|k| amplitude * (1.0 + k as f64).powf(-q))
                .collect()
        }
        FunctionFamilySpec::Supersmooth {
            gamma,
            t_exp,
            amplitude,
            k_support,
        } => (1..=k_support)
            .map(|k| amplitude * (-gamma * (k as f64).powf(t_exp)).exp())
            .collect(),
    };
    Ok(CoefficientVector { coeffs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn basis_examples() {
        assert_eq!(eval_basis(1, 0.0).unwrap(), SQRT_2);
        assert_abs_diff_eq!(eval_basis(2, 0.25).unwrap(), SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(eval_basis(3, 0.5).unwrap(), SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(eval_basis(4, 0.125).unwrap(), SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn basis_domain_errors() {
        assert!(matches!(eval_basis(0, 0.5), Err(Error::Domain { what: "k", .. })));
        assert!(matches!(eval_basis(1, -0.1), Err(Error::Domain { what: "x", .. })));
        assert!(matches!(eval_basis(1, 1.5), Err(Error::Domain { what: "x", .. })));
        assert!(eval_basis(1, f64::NAN).is_err());
        assert!(eval_basis(1, 1.0).is_ok());
    }

    #[test]
    fn basis_bounded_on_grid() {
        for k in 1..=40 {
            for i in 0..=4000 {
                let v = eval_basis(k, i as f64 / 4000.0).unwrap();
                assert!(v.abs() <= SQRT_2 + 1e-15);
            }
        }
    }

    #[test]
    fn block_fill_matches_direct_evaluation() {
        let mut buf = Vec::new();
        for &x in &[0.0, 0.123_456, 0.5, 0.999_999] {
            fill_basis_row(x, 301, &mut buf);
            assert_eq!(buf.len(), 301);
            for (i, v) in buf.iter().enumerate() {
                assert_abs_diff_eq!(*v, eval_basis(i + 1, x).unwrap(), epsilon = 1e-12);
            }
            fill_basis_block(x, 7, 20, &mut buf);
            assert_eq!(buf.len(), 28);
            assert_abs_diff_eq!(buf[0], eval_basis(13, x).unwrap(), epsilon = 1e-12);
            assert_abs_diff_eq!(buf[27], eval_basis(40, x).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn synthesize_examples() {
        assert_eq!(CoefficientVector::zeros(5).synthesize(0.3).unwrap(), 0.0);
        assert_eq!(CoefficientVector::new(vec![1.0]).synthesize(0.0).unwrap(), SQRT_2);
        let f = CoefficientVector::new(vec![0.3, -0.2]);
        let expected =
            0.3 * SQRT_2 * (0.2 * PI).cos() - 0.2 * SQRT_2 * (0.2 * PI).sin();
        assert_abs_diff_eq!(f.synthesize(0.1).unwrap(), expected, epsilon = 1e-15);
        assert!(f.synthesize(1.01).is_err());
    }

    #[test]
    fn parseval_and_seminorm_examples() {
        let f = CoefficientVector::new(vec![0.4, -1.0, 2.0]);
        assert_eq!(parseval_sq_distance(&f, &f), 0.0);
        let e1 = CoefficientVector::new(vec![1.0, 0.0]);
        let e2 = CoefficientVector::new(vec![0.0, 1.0]);
        assert_eq!(parseval_sq_distance(&e1, &e2), 2.0);
        // zero padding
        assert_eq!(
            parseval_sq_distance(&CoefficientVector::new(vec![1.0]), &CoefficientVector::new(vec![1.0, 0.0, 3.0])),
            9.0
        );

        assert_eq!(sobolev_seminorm_sq(&CoefficientVector::zeros(3), 1.0), 0.0);
        assert_eq!(sobolev_seminorm_sq(&CoefficientVector::new(vec![1.0]), 2.0), 1.0);
        assert_abs_diff_eq!(
            sobolev_seminorm_sq(&CoefficientVector::new(vec![1.0, 0.25]), 1.0),
            1.25,
            epsilon = 1e-15
        );
    }

    #[test]
    fn test_function_examples() {
        let f = make_test_function(&FunctionFamilySpec::Sobolev {
            s: 1.0,
            q: Some(2.0),
            amplitude: 1.0,
            k_support: 3,
        })
        .unwrap();
        assert_eq!(f.coeffs, vec![0.25, 1.0 / 9.0, 1.0 / 16.0]);

        let f = make_test_function(&FunctionFamilySpec::Supersmooth {
            gamma: 0.0,
            t_exp: 1.0,
            amplitude: 1.0,
            k_support: 2,
        })
        .unwrap();
        assert_eq!(f.coeffs, vec![1.0, 1.0]);

        let f = make_test_function(&FunctionFamilySpec::Sobolev {
            s: 0.7,
            q: None,
            amplitude: 0.0,
            k_support: 8,
        })
        .unwrap();
        assert!(f.is_zero());
        assert_eq!(f.support(), 8);
    }

    #[test]
    fn sobolev_family_rejects_decay_outside_ellipsoid() {
        let bad = FunctionFamilySpec::Sobolev {
            s: 1.0,
            q: Some(1.5),
            amplitude: 1.0,
            k_support: 4,
        };
        assert!(matches!(make_test_function(&bad), Err(Error::InvalidSpec(_))));
        assert!(make_test_function(&FunctionFamilySpec::sobolev(0.0, 4)).is_err());
        assert!(make_test_function(&FunctionFamilySpec::sobolev(1.0, 0)).is_err());
    }

    #[test]
    fn sobolev_family_is_stable_under_longer_support() {
        let s = 1.0;
        let short = make_test_function(&FunctionFamilySpec::sobolev(s, 10_000)).unwrap();
        let long = make_test_function(&FunctionFamilySpec::sobolev(s, 40_000)).unwrap();
        assert!(sobolev_seminorm_sq(&long, s).is_finite());
        let tail = long.norm_sq() - short.norm_sq();
        assert!((0.0..1e-9).contains(&tail), "tail {tail}");
        assert!(parseval_sq_distance(&short, &long) < 1e-9);
    }

    #[test]
    fn coefficient_vector_json_shape() {
        let f = CoefficientVector::new(vec![0.5, -0.25]);
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(json, r#"{"coeffs":[0.5,-0.25]}"#);
        let back: CoefficientVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, f);
    }
}
