//! Accuracy metrics and the surrogate cost / break-even analysis.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

/// Accuracy of predictions against reference values, all in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    /// `100 · mean((A - Â)²) / mean(A)`
    pub nmse_percent: f64,
    /// `100 · mean(|A - Â|) / mean(A)`
    pub nmae_percent: f64,
    /// `100 · max|A - Â| / max|A|`
    pub nmaxe_percent: f64,
    /// `100 · (1 - SS_res / SS_tot)`; not clamped, may be negative.
    pub r2_percent: f64,
    pub n_points: usize,
}

pub fn compute_metrics(actual: &[f64], predicted: &[f64]) -> Result<MetricReport> {
    if actual.len() != predicted.len() {
        return Err(Error::DimensionMismatch { expected: actual.len(), got: predicted.len() });
    }
    if actual.is_empty() {
        return Err(Error::UndefinedMetric("no points".into()));
    }
    let n = actual.len() as f64;
    let mean = actual.iter().sum::<f64>() / n;
    let max_abs = actual.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if mean == 0.0 {
        return Err(Error::UndefinedMetric("mean of reference values is zero".into()));
    }
    if max_abs == 0.0 {
        return Err(Error::UndefinedMetric("reference values are all zero".into()));
    }
    let (mut sq, mut abs, mut worst, mut tot) = (0.0, 0.0, 0.0f64, 0.0);
    for (&a, &p) in actual.iter().zip(predicted) {
        let e = a - p;
        sq += e * e;
        abs += e.abs();
        worst = worst.max(e.abs());
        tot += (a - mean) * (a - mean);
    }
    if tot == 0.0 {
        return Err(Error::UndefinedMetric("reference values have zero variance".into()));
    }
    Ok(MetricReport {
        nmse_percent: 100.0 * (sq / n) / mean,
        nmae_percent: 100.0 * (abs / n) / mean,
        nmaxe_percent: 100.0 * worst / max_abs,
        r2_percent: 100.0 * (1.0 - sq / tot),
        n_points: actual.len(),
    })
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "label,n,nmse_percent,nmae_percent,nmaxe_percent,r2_percent";

    pub fn csv_row(&self, label: &str) -> String {
        format!(
            "{label},{},{},{},{},{}",
            self.n_points, self.nmse_percent, self.nmae_percent, self.nmaxe_percent, self.r2_percent
        )
    }

    /// Aligned plain-text table of labelled reports.
    pub fn table(reports: &[(String, MetricReport)]) -> String {
        let w = reports.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(5);
        let mut s =
            format!("{:<w$}  {:>6}  {:>10}  {:>10}  {:>10}  {:>10}\n", "model", "n", "nMSE%", "nMAE%", "nMaxE%", "R2%");
        for (label, r) in reports {
            s.push_str(&format!(
                "{label:<w$}  {:>6}  {:>10.4}  {:>10.4}  {:>10.4}  {:>10.4}\n",
                r.n_points, r.nmse_percent, r.nmae_percent, r.nmaxe_percent, r.r2_percent
            ));
        }
        s
    }
}

/// Durations (seconds) that make up the cost of building and using a surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostLedger {
    pub t_pred_per_sample_s: f64,
    pub t_fit_s: f64,
    pub t_tune_s: f64,
    pub t_database_s: f64,
    /// Mean wall time of one reference contact simulation.
    pub mean_bem_time_s: f64,
}

impl CostLedger {
    pub fn validate(&self) -> Result<()> {
        let all = [self.t_pred_per_sample_s, self.t_fit_s, self.t_tune_s, self.t_database_s, self.mean_bem_time_s];
        if all.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(Error::InvalidInput("cost ledger durations must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// One-off cost of database, tuning and fitting.
    pub fn fixed_cost(&self) -> f64 {
        self.t_database_s + self.t_tune_s + self.t_fit_s
    }

    pub fn to_csv(&self) -> String {
        format!(
            "quantity,seconds\nt_database,{}\nt_tune,{}\nt_fit,{}\nt_pred_per_sample,{}\nmean_bem_time,{}\n",
            self.t_database_s, self.t_tune_s, self.t_fit_s, self.t_pred_per_sample_s, self.mean_bem_time_s
        )
    }
}

/// `t_d + t_h + t_f + n · t_p`
pub fn surrogate_total_cost(ledger: &CostLedger, n_evals: u64) -> f64 {
    ledger.fixed_cost() + n_evals as f64 * ledger.t_pred_per_sample_s
}

/// `n · t_BEM`
pub fn reference_total_cost(ledger: &CostLedger, n_evals: u64) -> f64 {
    n_evals as f64 * ledger.mean_bem_time_s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreakEven {
    /// Smallest evaluation count at which the reference cost reaches the surrogate cost.
    At(u64),
    /// Predicting is no cheaper than simulating.
    NeverProfitable,
}

pub fn break_even(ledger: &CostLedger) -> Result<BreakEven> {
    ledger.validate()?;
    let margin = ledger.mean_bem_time_s - ledger.t_pred_per_sample_s;
    if !(margin > 0.0) {
        return Ok(BreakEven::NeverProfitable);
    }
    let mut n = (ledger.fixed_cost() / margin).ceil().max(0.0) as u64;
    // Settle rounding so the defining inequality holds exactly at n and fails at n - 1.
    while reference_total_cost(ledger, n) < surrogate_total_cost(ledger, n) {
        n += 1;
    }
    while n > 0 && reference_total_cost(ledger, n - 1) >= surrogate_total_cost(ledger, n - 1) {
        n -= 1;
    }
    Ok(BreakEven::At(n))
}

/// `(n, reference, surrogate)` rows from 0 to `max_n` in `points` steps.
pub fn break_even_curve(ledger: &CostLedger, max_n: u64, points: usize) -> Vec<(u64, f64, f64)> {
    let points = points.max(2);
    let mut ns: Vec<u64> = (0..points).map(|k| max_n * k as u64 / (points - 1) as u64).collect();
    ns.dedup();
    ns.into_iter().map(|n| (n, reference_total_cost(ledger, n), surrogate_total_cost(ledger, n))).collect()
}

pub fn write_curve_csv(curve: &[(u64, f64, f64)], mut w: impl Write) -> Result<()> {
    let mut s = String::from("n,reference_s,surrogate_s\n");
    for (n, r, m) in curve {
        s.push_str(&format!("{n},{r},{m}\n"));
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

/// Draw `count` inputs uniformly inside the per-column bounding box of `reference`.
pub fn uniform_inputs(reference: &DMatrix<f64>, count: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng::seeded(seed);
    let bounds: Vec<(f64, f64)> = reference
        .column_iter()
        .map(|c| (c.iter().copied().fold(f64::INFINITY, f64::min), c.iter().copied().fold(f64::NEG_INFINITY, f64::max)))
        .collect();
    let mut out = DMatrix::zeros(count, reference.ncols());
    for i in 0..count {
        for (j, &(lo, hi)) in bounds.iter().enumerate() {
            out[(i, j)] = lo + (hi - lo) * r.random::<f64>();
        }
    }
    out
}

/// Mean wall time per sample of predicting `count` random inputs in one batch.
pub fn per_sample_prediction_time<F>(reference: &DMatrix<f64>, count: usize, seed: u64, mut predict: F) -> Result<f64>
where
    F: FnMut(&DMatrix<f64>) -> Result<()>,
{
    if count == 0 {
        return Err(Error::InvalidInput("need at least one timing sample".into()));
    }
    let inputs = uniform_inputs(reference, count, seed);
    let start = Instant::now();
    predict(&inputs)?;
    Ok(start.elapsed().as_secs_f64() / count as f64)
}
