#![allow(dead_code)]

use std::f64::consts::{PI, SQRT_2};

pub const QUAD_POINTS: usize = 1 << 16;

/// Trigonometric basis written out from its definition, independent of the library.
pub fn reference_basis(k: usize, x: f64) -> f64 {
    let j = k.div_ceil(2) as f64;
    if k % 2 == 1 {
        SQRT_2 * (2.0 * PI * j * x).cos()
    } else {
        SQRT_2 * (2.0 * PI * j * x).sin()
    }
}

pub fn reference_synthesize(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().enumerate().map(|(i, c)| c * reference_basis(i + 1, x)).sum()
}

/// Composite trapezoid rule on the periodic unit interval.
pub fn periodic_quadrature(points: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = 1.0 / points as f64;
    (0..points).map(|i| f(i as f64 * h)).sum::<f64>() * h
}

/// Mean and standard error of the mean.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
