//! Exhaustive grid search scored by k-fold cross-validation.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{GaussianProcess, KernelRidge, KernelSpec};
use crate::dataset::{parse_key_values, parse_value, Timing};
use crate::error::{Error, Result};
use crate::eval::compute_metrics;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Num(f64),
    Text(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Num(v) => Some(*v),
            ParamValue::Text(_) => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Num(v) => write!(f, "{v}"),
            ParamValue::Text(s) => f.write_str(s),
        }
    }
}

/// One point of a grid: `(name, value)` pairs in declaration order.
pub type Combination = Vec<(String, ParamValue)>;

fn lookup<'a>(combo: &'a [(String, ParamValue)], name: &str) -> Option<&'a ParamValue> {
    combo.iter().find(|(k, _)| k == name).map(|(_, v)| v)
}

fn number(combo: &[(String, ParamValue)], name: &str) -> Result<f64> {
    lookup(combo, name)
        .and_then(ParamValue::as_f64)
        .ok_or_else(|| Error::InvalidInput(format!("combination has no numeric `{name}`")))
}

/// Validation score, lower is better.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scoring {
    Nmse,
    Nmae,
    /// `-R²`, so that lower is still better.
    NegR2,
}

impl Scoring {
    fn score(&self, actual: &[f64], predicted: &[f64]) -> Result<f64> {
        let m = compute_metrics(actual, predicted)?;
        Ok(match self {
            Scoring::Nmse => m.nmse_percent,
            Scoring::Nmae => m.nmae_percent,
            Scoring::NegR2 => -m.r2_percent,
        })
    }
}

impl FromStr for Scoring {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nmse" => Ok(Scoring::Nmse),
            "nmae" => Ok(Scoring::Nmae),
            "neg-r2" => Ok(Scoring::NegR2),
            _ => Err(Error::Config(format!("unknown scoring `{s}`"))),
        }
    }
}

impl fmt::Display for Scoring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scoring::Nmse => "nmse",
            Scoring::Nmae => "nmae",
            Scoring::NegR2 => "neg-r2",
        })
    }
}

/// `n` log-spaced values from `a` to `b`, endpoints exact.
pub fn log_space(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n)
            .map(|i| match i {
                0 => a,
                i if i == n - 1 => b,
                i => a * (b / a).powf(i as f64 / (n - 1) as f64),
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningGrid {
    pub params: Vec<(String, Vec<ParamValue>)>,
    pub folds: usize,
    pub scoring: Scoring,
}

impl TuningGrid {
    /// λ: 8 log-spaced values on [1e-5, 1], γ: 10 on [0.01, 150], kernel: rbf or linear.
    pub fn kernel_ridge_default() -> Self {
        let nums = |v: Vec<f64>| v.into_iter().map(ParamValue::Num).collect();
        Self {
            params: vec![
                ("lambda".into(), nums(log_space(1e-5, 1.0, 8))),
                ("gamma".into(), nums(log_space(0.01, 150.0, 10))),
                ("kernel".into(), vec![ParamValue::Text("rbf".into()), ParamValue::Text("linear".into())]),
            ],
            folds: 5,
            scoring: Scoring::Nmse,
        }
    }

    /// Noise variance: 110 log-spaced values on [1e-3, 1] with an rbf kernel of fixed γ.
    pub fn gaussian_process_default(gamma: f64) -> Self {
        Self {
            params: vec![
                ("noise".into(), log_space(1e-3, 1.0, 110).into_iter().map(ParamValue::Num).collect()),
                ("gamma".into(), vec![ParamValue::Num(gamma)]),
            ],
            folds: 5,
            scoring: Scoring::Nmse,
        }
    }

    /// Parse a grid file. Parameters are declared as `param.<name> = <values>`
    /// where values are either `log:<lo>:<hi>:<count>`, `lin:<lo>:<hi>:<count>`
    /// or a comma-separated list. `folds` and `scoring` are optional.
    pub fn parse(text: &str) -> Result<Self> {
        let mut grid = Self { params: vec![], folds: 5, scoring: Scoring::Nmse };
        for (line, key, v) in parse_key_values(text)? {
            if let Some(name) = key.strip_prefix("param.") {
                grid.params.push((name.to_string(), parse_values(line, &v)?));
                continue;
            }
            match key.as_str() {
                "folds" => grid.folds = parse_value(line, &key, &v)?,
                "scoring" => grid.scoring = v.parse()?,
                _ => return Err(Error::Config(format!("unknown key `{key}` at line {line}"))),
            }
        }
        grid.validate()?;
        Ok(grid)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("folds = {}\nscoring = {}\n", self.folds, self.scoring);
        for (name, values) in &self.params {
            let v: Vec<String> = values.iter().map(|v| v.to_string()).collect();
            s.push_str(&format!("param.{name} = {}\n", v.join(",")));
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() || self.params.iter().any(|(_, v)| v.is_empty()) {
            return Err(Error::Config("tuning grid is empty".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("need at least 2 folds, got {}", self.folds)));
        }
        Ok(())
    }

    /// Cartesian product; the first declared parameter varies slowest.
    pub fn combinations(&self) -> Vec<Combination> {
        let mut out: Vec<Combination> = vec![vec![]];
        for (name, values) in &self.params {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut c = prefix.clone();
                        c.push((name.clone(), v.clone()));
                        c
                    })
                })
                .collect();
        }
        out
    }
}

fn parse_values(line: usize, v: &str) -> Result<Vec<ParamValue>> {
    let parts: Vec<&str> = v.split(':').map(str::trim).collect();
    if parts.len() == 4 && (parts[0] == "log" || parts[0] == "lin") {
        let lo: f64 = parse_value(line, "range start", parts[1])?;
        let hi: f64 = parse_value(line, "range end", parts[2])?;
        let n: usize = parse_value(line, "range count", parts[3])?;
        let values = if parts[0] == "log" {
            if !(lo > 0.0 && hi > 0.0) {
                return Err(Error::parse(line, "log range needs positive bounds"));
            }
            log_space(lo, hi, n)
        } else if n == 1 {
            vec![lo]
        } else {
            (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
        };
        return Ok(values.into_iter().map(ParamValue::Num).collect());
    }
    Ok(v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map(ParamValue::Num).unwrap_or_else(|_| ParamValue::Text(s.to_string())))
        .collect())
}

/// Fits a model for one grid combination and predicts held-out rows.
pub trait Trainer: Sync {
    fn fit_predict(
        &self,
        combo: &[(String, ParamValue)],
        x_train: &DMatrix<f64>,
        y_train: &DVector<f64>,
        x_val: &DMatrix<f64>,
    ) -> Result<DVector<f64>>;
}

/// Kernel ridge over `lambda`, `kernel` and (for rbf) `gamma`.
#[derive(Debug, Clone, Copy, Default)]
pub struct KrrTrainer;

/// Build a kernel from `kernel` (default rbf) and `gamma` entries of a combination.
pub fn kernel_from_combo(combo: &[(String, ParamValue)]) -> Result<KernelSpec> {
    let family = lookup(combo, "kernel").map(|v| v.to_string()).unwrap_or_else(|| "rbf".into());
    let spec = match family.as_str() {
        "linear" => KernelSpec::Linear,
        "rbf" => KernelSpec::Rbf { gamma: number(combo, "gamma")? },
        other => return Err(Error::InvalidInput(format!("unknown kernel `{other}`"))),
    };
    spec.validate()?;
    Ok(spec)
}

impl Trainer for KrrTrainer {
    fn fit_predict(
        &self,
        combo: &[(String, ParamValue)],
        x_train: &DMatrix<f64>,
        y_train: &DVector<f64>,
        x_val: &DMatrix<f64>,
    ) -> Result<DVector<f64>> {
        KernelRidge::fit(x_train, y_train, number(combo, "lambda")?, kernel_from_combo(combo)?)?.predict(x_val)
    }
}

/// Gaussian process over `noise`, `kernel` and `gamma`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GpTrainer;

impl Trainer for GpTrainer {
    fn fit_predict(
        &self,
        combo: &[(String, ParamValue)],
        x_train: &DMatrix<f64>,
        y_train: &DVector<f64>,
        x_val: &DMatrix<f64>,
    ) -> Result<DVector<f64>> {
        GaussianProcess::fit(x_train, y_train, number(combo, "noise")?, kernel_from_combo(combo)?)?.predict_mean(x_val)
    }
}

/// Shuffle `0..n` and deal it into `k` folds whose sizes differ by at most one.
/// Larger folds come first; indices inside a fold are sorted.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("cannot make {k} folds from {n} samples")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut order, &mut rng::seeded(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut at = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut fold = order[at..at + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        at += size;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvRow {
    pub id: usize,
    pub combination: Combination,
    pub fold_scores: Vec<f64>,
    /// Mean over folds; `+inf` when any fold failed.
    pub mean_score: f64,
    pub fit_time_s: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub rows: Vec<CvRow>,
    pub best: usize,
    pub folds: usize,
}

impl SearchResult {
    pub fn best_row(&self) -> &CvRow {
        &self.rows[self.best]
    }

    pub fn failures(&self) -> impl Iterator<Item = &CvRow> {
        self.rows.iter().filter(|r| r.error.is_some())
    }

    /// CV table. With [`Timing::Off`] the fit time column is written as 0.
    pub fn write_csv(&self, mut w: impl Write, timing: Timing) -> Result<()> {
        let mut header = vec!["combination".to_string()];
        if let Some(first) = self.rows.first() {
            header.extend(first.combination.iter().map(|(k, _)| k.clone()));
        }
        header.extend((1..=self.folds).map(|f| format!("fold_{f}")));
        header.extend(["mean_score".into(), "fit_time_s".into(), "error".into()]);
        let mut buf = header.join(",");
        buf.push('\n');
        for r in &self.rows {
            let mut f = vec![r.id.to_string()];
            f.extend(r.combination.iter().map(|(_, v)| v.to_string()));
            f.extend(r.fold_scores.iter().map(|s| s.to_string()));
            f.push(r.mean_score.to_string());
            f.push(match timing {
                Timing::Wall => r.fit_time_s.to_string(),
                Timing::Off => "0".into(),
            });
            f.push(r.error.as_deref().unwrap_or("").replace([',', '\n'], ";"));
            buf.push_str(&f.join(","));
            buf.push('\n');
        }
        w.write_all(buf.as_bytes())?;
        Ok(())
    }
}

/// Score every grid combination by k-fold cross-validation.
///
/// A combination whose training fails on any fold is scored `+inf` and its
/// error kept in the table. The best combination is the first one with the
/// lowest mean score in enumeration order.
pub fn grid_search(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    grid: &TuningGrid,
    trainer: &dyn Trainer,
    seed: u64,
) -> Result<SearchResult> {
    grid.validate()?;
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
    }
    let folds = kfold_indices(x.nrows(), grid.folds, seed)?;
    let splits: Vec<_> = folds
        .iter()
        .map(|val| {
            let mut in_val = vec![false; x.nrows()];
            val.iter().for_each(|&i| in_val[i] = true);
            let train: Vec<usize> = (0..x.nrows()).filter(|&i| !in_val[i]).collect();
            let xt = x.select_rows(train.iter());
            let yt = DVector::from_iterator(train.len(), train.iter().map(|&i| y[i]));
            let xv = x.select_rows(val.iter());
            let yv: Vec<f64> = val.iter().map(|&i| y[i]).collect();
            (xt, yt, xv, yv)
        })
        .collect();

    let rows: Vec<CvRow> = grid
        .combinations()
        .into_par_iter()
        .enumerate()
        .map(|(id, combination)| {
            let start = Instant::now();
            let scores: Result<Vec<f64>> = splits
                .iter()
                .map(|(xt, yt, xv, yv)| {
                    let pred = trainer.fit_predict(&combination, xt, yt, xv)?;
                    grid.scoring.score(yv, pred.as_slice())
                })
                .collect();
            let fit_time_s = start.elapsed().as_secs_f64();
            match scores {
                Ok(fold_scores) => {
                    let mean = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
                    let mean_score = if mean.is_nan() { f64::INFINITY } else { mean };
                    CvRow { id, combination, fold_scores, mean_score, fit_time_s, error: None }
                }
                Err(e) => CvRow {
                    id,
                    combination,
                    fold_scores: vec![f64::INFINITY; splits.len()],
                    mean_score: f64::INFINITY,
                    fit_time_s,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let mut best = 0;
    for (k, r) in rows.iter().enumerate() {
        if r.mean_score < rows[best].mean_score {
            best = k;
        }
    }
    Ok(SearchResult { rows, best, folds: grid.folds })
}
