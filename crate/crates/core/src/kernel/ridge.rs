use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{gram, self_gram, KernelSpec};
use crate::error::{Error, Result};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
enum JitterPolicy {
    /// No jitter; a singular system is an error.
    None,
    /// Try the plain system first, then escalate.
    OnFailure,
    /// Start escalating immediately.
    Always,
}

/// Cholesky factor of `K + (reg + jitter) I` and the jitter that was needed.
struct Factorized {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

fn factorize(k: &DMatrix<f64>, reg: f64, policy: JitterPolicy) -> Result<Factorized> {
    let n = k.nrows();
    let scale = (k.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    let try_with = |jitter: f64| {
        let mut m = k.clone();
        for i in 0..n {
            m[(i, i)] += reg + jitter;
        }
        Cholesky::new(m)
    };
    if policy == JitterPolicy::None {
        let chol = try_with(0.0).ok_or(Error::RankDeficient)?;
        let diag = chol.l_dirty().diagonal();
        let min_pivot = diag.iter().fold(f64::INFINITY, |a, &b| a.min(b * b));
        let max_diag = k.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if !(min_pivot > n as f64 * f64::EPSILON * max_diag) {
            return Err(Error::RankDeficient);
        }
        return Ok(Factorized { chol, jitter: 0.0 });
    }
    if policy == JitterPolicy::OnFailure {
        if let Some(chol) = try_with(0.0) {
            return Ok(Factorized { chol, jitter: 0.0 });
        }
    }
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * scale;
        if let Some(chol) = try_with(jitter) {
            return Ok(Factorized { chol, jitter });
        }
        rel *= 10.0;
    }
    Err(Error::IllConditioned { jitter: JITTER_MAX * scale })
}

/// Solve `(K + shift I) α = y` with a few steps of iterative refinement.
fn dual_solve(k: &DMatrix<f64>, shift: f64, f: &Factorized, y: &DVector<f64>) -> DVector<f64> {
    let mut alpha = f.chol.solve(y);
    let ynorm = y.norm();
    for _ in 0..3 {
        let r = y - (k * &alpha + &alpha * shift);
        if r.norm() <= 1e-14 * ynorm {
            break;
        }
        alpha += f.chol.solve(&r);
    }
    alpha
}

fn check_training(x: &DMatrix<f64>, y: &DVector<f64>, reg: f64, what: &str) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::InvalidInput("no training samples".into()));
    }
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
    }
    if !(reg >= 0.0) || !reg.is_finite() {
        return Err(Error::InvalidInput(format!("{what} must be finite and >= 0, got {reg}")));
    }
    Ok(())
}

/// Kernel ridge regression in dual form, `α = (K + λI)⁻¹ y`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRidge {
    pub kernel: KernelSpec,
    pub lambda: f64,
    pub train_x: DMatrix<f64>,
    pub alpha: DVector<f64>,
    /// Diagonal jitter added on top of `λ` to factorize the system.
    pub jitter: f64,
    pub fit_time_s: f64,
}

impl KernelRidge {
    /// With `λ = 0` no jitter is applied and a singular kernel matrix is reported
    /// as [`Error::RankDeficient`].
    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, kernel: KernelSpec) -> Result<Self> {
        let start = Instant::now();
        check_training(x, y, lambda, "lambda")?;
        let k = self_gram(x, kernel)?;
        let policy = if lambda == 0.0 { JitterPolicy::None } else { JitterPolicy::OnFailure };
        let f = factorize(&k, lambda, policy)?;
        let alpha = dual_solve(&k, lambda + f.jitter, &f, y);
        Ok(Self {
            kernel,
            lambda,
            train_x: x.clone(),
            alpha,
            jitter: f.jitter,
            fit_time_s: start.elapsed().as_secs_f64(),
        })
    }

    pub fn predict(&self, xq: &DMatrix<f64>) -> Result<DVector<f64>> {
        if xq.ncols() != self.train_x.ncols() {
            return Err(Error::DimensionMismatch { expected: self.train_x.ncols(), got: xq.ncols() });
        }
        Ok(gram(xq, &self.train_x, self.kernel)? * &self.alpha)
    }
}

/// Gaussian process regression with fixed hyperparameters.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    pub kernel: KernelSpec,
    pub noise_variance: f64,
    pub train_x: DMatrix<f64>,
    pub alpha: DVector<f64>,
    pub jitter: f64,
    pub fit_time_s: f64,
    chol: Cholesky<f64, Dyn>,
}

impl GaussianProcess {
    /// A zero noise variance starts directly on the jitter ladder.
    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, noise_variance: f64, kernel: KernelSpec) -> Result<Self> {
        let start = Instant::now();
        check_training(x, y, noise_variance, "noise variance")?;
        let k = self_gram(x, kernel)?;
        let policy = if noise_variance == 0.0 { JitterPolicy::Always } else { JitterPolicy::OnFailure };
        let f = factorize(&k, noise_variance, policy)?;
        let alpha = dual_solve(&k, noise_variance + f.jitter, &f, y);
        Ok(Self {
            kernel,
            noise_variance,
            train_x: x.clone(),
            alpha,
            jitter: f.jitter,
            fit_time_s: start.elapsed().as_secs_f64(),
            chol: f.chol,
        })
    }

    /// Rebuild a fitted process from stored inputs, weights and jitter.
    pub(crate) fn from_parts(
        kernel: KernelSpec,
        noise_variance: f64,
        jitter: f64,
        train_x: DMatrix<f64>,
        alpha: DVector<f64>,
    ) -> Result<Self> {
        let mut k = self_gram(&train_x, kernel)?;
        for i in 0..k.nrows() {
            k[(i, i)] += noise_variance + jitter;
        }
        let chol = Cholesky::new(k).ok_or(Error::IllConditioned { jitter })?;
        Ok(Self { kernel, noise_variance, train_x, alpha, jitter, fit_time_s: 0.0, chol })
    }

    pub fn predict_mean(&self, xq: &DMatrix<f64>) -> Result<DVector<f64>> {
        if xq.ncols() != self.train_x.ncols() {
            return Err(Error::DimensionMismatch { expected: self.train_x.ncols(), got: xq.ncols() });
        }
        Ok(gram(xq, &self.train_x, self.kernel)? * &self.alpha)
    }

    /// Posterior mean and variance `k(x,x) - k_qᵀ (K + σ²I)⁻¹ k_q`.
    pub fn predict(&self, xq: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let mean = self.predict_mean(xq)?;
        let kq = gram(&self.train_x, xq, self.kernel)?;
        let v = self.chol.l().solve_lower_triangular(&kq).ok_or(Error::IllConditioned { jitter: self.jitter })?;
        let xt = xq.transpose();
        let tol = 1e-9 + 10.0 * self.jitter;
        let var = DVector::from_fn(xq.nrows(), |i, _| {
            let prior = self.kernel.eval(xt.column(i), xt.column(i));
            let s = prior - v.column(i).norm_squared();
            if s < 0.0 && s > -tol * prior.abs().max(1.0) {
                0.0
            } else {
                s
            }
        });
        Ok((mean, var))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rbf(g: f64) -> KernelSpec {
        KernelSpec::Rbf { gamma: g }
    }

    #[test]
    fn single_point_interpolation() {
        let x = DMatrix::from_row_slice(1, 2, &[0.3, 0.4]);
        let y = DVector::from_vec(vec![7.0]);
        let m = KernelRidge::fit(&x, &y, 0.0, rbf(1.0)).unwrap();
        assert_eq!(m.alpha[0], 7.0);
        assert_eq!(m.predict(&x).unwrap()[0], 7.0);
    }

    #[test]
    fn shrinkage_is_monotone_in_lambda() {
        // Two points at distance 1 with γ = 1: K = [[1, e⁻¹], [e⁻¹, 1]].
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let q = DMatrix::from_row_slice(1, 1, &[0.25]);
        let c = (-1.0f64).exp();
        let hand = |lam: f64| {
            let (a, b) = (1.0 + lam, c);
            let det = a * a - b * b;
            let (a0, a1) = ((a * 1.0 - b * 2.0) / det, (a * 2.0 - b * 1.0) / det);
            a0 * (-0.0625f64).exp() + a1 * (-0.5625f64).exp()
        };
        let mut prev = f64::INFINITY;
        for lam in [1e-3, 1e-1, 1.0, 10.0, 1e3] {
            let p = KernelRidge::fit(&x, &y, lam, rbf(1.0)).unwrap().predict(&q).unwrap()[0];
            assert!((p - hand(lam)).abs() < 1e-12);
            assert!(p < prev && p > 0.0);
            prev = p;
        }
        assert!(prev < 0.01);
    }

    #[test]
    fn antisymmetric_targets_predict_zero_at_midpoint() {
        let x = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 1.0, 0.5]);
        let y = DVector::from_vec(vec![1.0, -1.0]);
        let q = DMatrix::from_row_slice(1, 2, &[0.0, 0.5]);
        for g in [0.1, 1.0, 7.0] {
            let p = KernelRidge::fit(&x, &y, 1e-3, rbf(g)).unwrap().predict(&q).unwrap()[0];
            assert!(p.abs() < 1e-14);
        }
    }

    #[test]
    fn singular_system_without_regularization() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        assert!(matches!(KernelRidge::fit(&x, &y, 0.0, rbf(1.0)), Err(Error::RankDeficient)));
        let m = KernelRidge::fit(&x, &y, 0.5, rbf(1.0)).unwrap();
        assert_eq!(m.jitter, 0.0);
    }

    #[test]
    fn gp_variance_limits() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 0.5, 1.0]);
        let y = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let gp = GaussianProcess::fit(&x, &y, 0.0, rbf(2.0)).unwrap();
        assert!(gp.jitter > 0.0);
        let (_, var) = gp.predict(&x).unwrap();
        assert!(var.iter().all(|&v| (0.0..=1e-6).contains(&v)));
        let far = DMatrix::from_row_slice(1, 1, &[50.0]);
        let (mean, var) = gp.predict(&far).unwrap();
        assert!((var[0] - 1.0).abs() < 1e-3);
        assert!(mean[0].abs() < 1e-3);
    }

    #[test]
    fn gp_rebuild_matches() {
        let x = DMatrix::from_fn(6, 2, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.2);
        let y = DVector::from_fn(6, |i, _| i as f64);
        let gp = GaussianProcess::fit(&x, &y, 0.01, rbf(1.0)).unwrap();
        let again = GaussianProcess::from_parts(gp.kernel, 0.01, gp.jitter, x.clone(), gp.alpha.clone()).unwrap();
        let q = DMatrix::from_fn(4, 2, |i, j| (i + j) as f64 * 0.3);
        assert_eq!(gp.predict(&q).unwrap(), again.predict(&q).unwrap());
    }

    #[test]
    fn fit_input_errors() {
        let x = DMatrix::<f64>::zeros(3, 2);
        assert!(KernelRidge::fit(&x, &DVector::zeros(2), 1.0, KernelSpec::Linear).is_err());
        assert!(KernelRidge::fit(&x, &DVector::zeros(3), -1.0, KernelSpec::Linear).is_err());
        assert!(KernelRidge::fit(&DMatrix::zeros(0, 2), &DVector::zeros(0), 1.0, KernelSpec::Linear).is_err());
        let m = KernelRidge::fit(
            &DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            &DVector::from_vec(vec![1.0]),
            1.0,
            KernelSpec::Linear,
        )
        .unwrap();
        assert!(matches!(m.predict(&DMatrix::zeros(1, 3)), Err(Error::DimensionMismatch { .. })));
    }
}
