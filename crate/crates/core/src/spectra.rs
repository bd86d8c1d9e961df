//! Hermitian spectra, the spectral step function `Λ^m`, and Szegő-type
//! diagnostics comparing eigenvalue averages with integrals of the symbol.

use std::io::{self, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, fmt17};
use crate::sphere_domain::{integrate_with, QuadratureRule, SphereSymbol};
use crate::toeplitz::{hermitian_deviation, hermitian_tolerance, ToeplitzMatrix};

/// A real function on `[0, 1)`.
pub trait IntervalFunction {
    fn eval(&self, s: f64) -> f64;

    /// Number of uniform pieces when the function is a step function on the
    /// partition `[k/n, (k+1)/n)`.
    fn uniform_pieces(&self) -> Option<usize> {
        None
    }
}

impl<F: Fn(f64) -> f64> IntervalFunction for F {
    fn eval(&self, s: f64) -> f64 {
        self(s)
    }
}

/// Eigenvalues sorted non-increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    order: usize,
    values: Vec<f64>,
}

impl Spectrum {
    /// Sorts `values` non-increasing (stable, ties keep input order).
    pub fn from_unsorted(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::argument("spectrum needs at least one value"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("spectrum values must be finite"));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(Self {
            order: values.len() - 1,
            values,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sum(&self) -> f64 {
        compensated_sum(self.values.iter().copied())
    }

    pub fn sum_of_squares(&self) -> f64 {
        compensated_sum(self.values.iter().map(|v| v * v))
    }
}

/// Step function with value `values[k]` on `I_k = [k/(m+1), (k+1)/(m+1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::argument("step function needs at least one piece"));
        }
        Ok(Self { values })
    }

    pub fn constant(c: f64, rank: usize) -> Self {
        Self {
            values: vec![c; rank + 1],
        }
    }

    /// `m`, so the function has `m + 1` pieces.
    pub fn rank(&self) -> usize {
        self.values.len() - 1
    }

    pub fn pieces(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Index of the piece containing `x`, clamped into range.
    pub fn piece_index(&self, x: f64) -> usize {
        let n = self.values.len();
        let k = (x * n as f64).floor();
        if k < 0.0 {
            0
        } else {
            (k as usize).min(n - 1)
        }
    }

    pub fn l2_norm_sq(&self) -> f64 {
        compensated_sum(self.values.iter().map(|v| v * v)) / self.values.len() as f64
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(self.values.iter().copied()) / self.values.len() as f64
    }

    /// Same function on `pieces` uniform pieces; `pieces` must be a multiple
    /// of the current piece count.
    pub fn refine(&self, pieces: usize) -> Result<Self> {
        let n = self.values.len();
        if pieces == 0 || !pieces.is_multiple_of(n) {
            return Err(Error::argument(format!(
                "cannot refine {n} pieces into {pieces}"
            )));
        }
        let rep = pieces / n;
        Ok(Self {
            values: self
                .values
                .iter()
                .flat_map(|&v| std::iter::repeat_n(v, rep))
                .collect(),
        })
    }
}

impl IntervalFunction for StepFunction {
    fn eval(&self, s: f64) -> f64 {
        self.values[self.piece_index(s)]
    }

    fn uniform_pieces(&self) -> Option<usize> {
        Some(self.values.len())
    }
}

/// Default residual tolerance relative to `‖A‖_F`.
pub const DEFAULT_EIGEN_TOLERANCE: f64 = 1e-10;

/// All eigenvalues of a Hermitian matrix, non-increasing.
///
/// Householder tridiagonalization plus implicit symmetric QR (nalgebra);
/// each eigenpair is then checked against `‖Av − λv‖ ≤ tol ‖A‖_F`.
pub fn eigenvalues(a: &DMatrix<Complex64>, tol: f64) -> Result<Spectrum> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::argument("matrix must be square and non-empty"));
    }
    let deviation = hermitian_deviation(a);
    if deviation > hermitian_tolerance(a) {
        return Err(Error::NotHermitian { deviation });
    }
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 100_000).ok_or(Error::Convergence {
        worst_residual: f64::INFINITY,
    })?;
    let norm = a.norm();
    let mut worst = 0.0f64;
    for (idx, &lambda) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(idx);
        let r = (a * v - v * Complex64::new(lambda, 0.0)).norm();
        worst = worst.max(r);
    }
    if worst > tol * norm.max(f64::MIN_POSITIVE) && worst > 0.0 {
        return Err(Error::Convergence {
            worst_residual: worst,
        });
    }
    Spectrum::from_unsorted(eig.eigenvalues.iter().copied().collect())
}

/// Spectrum of an assembled Toeplitz matrix.
pub fn toeplitz_spectrum(a: &ToeplitzMatrix) -> Result<Spectrum> {
    eigenvalues(a.entries(), DEFAULT_EIGEN_TOLERANCE)
}

/// `Λ^m`: the value `λ_k` on `I_k`.
pub fn lambda_step(s: &Spectrum) -> StepFunction {
    StepFunction {
        values: s.values.clone(),
    }
}

/// `| (1/(m+1)) Σ φ(λ_k) − ∫ φ(f) dμ |`.
pub fn szego_error<P: Fn(f64) -> f64>(
    s: &Spectrum,
    symbol: &SphereSymbol,
    phi: P,
    rule: &QuadratureRule,
) -> Result<f64> {
    let mean = compensated_sum(s.values.iter().map(|&v| phi(v))) / s.values.len() as f64;
    let integral = integrate_with(symbol, rule, &phi)?;
    Ok((mean - integral).abs())
}

/// Writes `m,k,lambda` rows.
pub fn write_spectrum_csv<W: Write>(mut w: W, spectra: &[Spectrum]) -> io::Result<()> {
    writeln!(w, "m,k,lambda")?;
    for s in spectra {
        for (k, v) in s.values.iter().enumerate() {
            writeln!(w, "{},{},{}", s.order, k, fmt17(*v))?;
        }
    }
    Ok(())
}

/// One Szegő diagnostic row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SzegoRow {
    pub m: usize,
    pub phi: String,
    pub error: f64,
}

/// Writes `m,phi,error` rows.
pub fn write_szego_csv<W: Write>(mut w: W, rows: &[SzegoRow]) -> io::Result<()> {
    writeln!(w, "m,phi,error")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.m, r.phi, fmt17(r.error))?;
    }
    Ok(())
}
