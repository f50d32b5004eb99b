//! Kernel ridge and Gaussian process regression.
//!
//! Both models share one kernel implementation and one dual solver, so the
//! GP posterior mean and the kernel ridge prediction coincide whenever the
//! regularization equals the noise variance.

mod model;
mod ridge;
mod tuning;

pub use model::{FittedModel, ModelKind, Surrogate};
pub use ridge::{GaussianProcess, KernelRidge};
pub use tuning::{
    grid_search, kernel_from_combo, kfold_indices, log_space, Combination, CvRow, GpTrainer, KrrTrainer, ParamValue,
    Scoring, SearchResult, Trainer, TuningGrid,
};

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVectorView};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `exp(-γ ‖x - x'‖²)`
    Rbf { gamma: f64 },
    /// `x · x'`
    Linear,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf { gamma } if !(gamma > 0.0) || !gamma.is_finite() => {
                Err(Error::InvalidInput(format!("rbf gamma must be positive, got {gamma}")))
            }
            _ => Ok(()),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            KernelSpec::Rbf { .. } => "rbf",
            KernelSpec::Linear => "linear",
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            KernelSpec::Rbf { gamma } => Some(gamma),
            KernelSpec::Linear => None,
        }
    }

    pub fn eval(&self, a: DVectorView<f64>, b: DVectorView<f64>) -> f64 {
        match *self {
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
            KernelSpec::Linear => a.dot(&b),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Rbf { gamma } => write!(f, "rbf:{gamma}"),
            KernelSpec::Linear => f.write_str("linear"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    /// `linear`, or `rbf:<gamma>`.
    fn from_str(s: &str) -> Result<Self> {
        let spec = match s.split_once(':') {
            None if s == "linear" => KernelSpec::Linear,
            Some(("rbf", g)) => {
                KernelSpec::Rbf { gamma: g.parse().map_err(|_| Error::InvalidInput(format!("bad rbf gamma `{g}`")))? }
            }
            _ => return Err(Error::InvalidInput(format!("unknown kernel `{s}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Kernel matrix between the rows of `x` and the rows of `x2`.
pub fn gram(x: &DMatrix<f64>, x2: &DMatrix<f64>, spec: KernelSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if x.ncols() != x2.ncols() {
        return Err(Error::DimensionMismatch { expected: x.ncols(), got: x2.ncols() });
    }
    // Rows are accessed as columns of the transposes, which are contiguous.
    let (a, b) = (x.transpose(), x2.transpose());
    Ok(DMatrix::from_fn(x.nrows(), x2.nrows(), |i, j| spec.eval(a.column(i), b.column(j))))
}

/// Symmetric kernel matrix of `x` with itself, evaluated on one triangle.
pub fn self_gram(x: &DMatrix<f64>, spec: KernelSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let a = x.transpose();
    let n = x.nrows();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = spec.eval(a.column(i), a.column(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_kernel_values() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let y = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        assert_eq!(gram(&x, &y, KernelSpec::Linear).unwrap()[(0, 0)], 11.0);
        assert_eq!(gram(&x, &x, KernelSpec::Rbf { gamma: 3.0 }).unwrap()[(0, 0)], 1.0);
        // ‖x - x'‖² = 0.2
        let a = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        let b = DMatrix::from_row_slice(1, 2, &[0.4, 0.2]);
        let k = gram(&a, &b, KernelSpec::Rbf { gamma: 5.0 }).unwrap()[(0, 0)];
        assert!((k - 0.36787944117144233).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let x = DMatrix::<f64>::zeros(2, 3);
        let y = DMatrix::<f64>::zeros(2, 4);
        assert!(matches!(gram(&x, &y, KernelSpec::Linear), Err(Error::DimensionMismatch { .. })));
        assert!(gram(&x, &x, KernelSpec::Rbf { gamma: 0.0 }).is_err());
    }

    #[test]
    fn kernel_spec_text() {
        for s in ["linear", "rbf:5", "rbf:0.01"] {
            assert_eq!(s.parse::<KernelSpec>().unwrap().to_string(), s);
        }
        assert!("poly".parse::<KernelSpec>().is_err());
        assert!("rbf:-1".parse::<KernelSpec>().is_err());
    }

    #[test]
    fn self_gram_matches_gram() {
        let x = DMatrix::from_fn(5, 3, |i, j| (i * 3 + j) as f64 * 0.1);
        let spec = KernelSpec::Rbf { gamma: 2.0 };
        assert_eq!(self_gram(&x, spec).unwrap(), gram(&x, &x, spec).unwrap());
    }
}
