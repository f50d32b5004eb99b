//! Fitted surrogates and their text file format.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use super::{GaussianProcess, KernelRidge, KernelSpec};
use crate::dataset::{parse_value, Normalization};
use crate::error::{Error, Result};

const MAGIC: &str = "# rough-contact model v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Krr,
    Gp,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Krr => "krr",
            ModelKind::Gp => "gp",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "krr" => Ok(ModelKind::Krr),
            "gp" => Ok(ModelKind::Gp),
            _ => Err(Error::InvalidInput(format!("unknown model `{s}` (expected krr or gp)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum FittedModel {
    Krr(KernelRidge),
    Gp(GaussianProcess),
}

impl FittedModel {
    pub fn fit(
        kind: ModelKind,
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        regularization: f64,
        kernel: KernelSpec,
    ) -> Result<Self> {
        Ok(match kind {
            ModelKind::Krr => FittedModel::Krr(KernelRidge::fit(x, y, regularization, kernel)?),
            ModelKind::Gp => FittedModel::Gp(GaussianProcess::fit(x, y, regularization, kernel)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::Krr(_) => ModelKind::Krr,
            FittedModel::Gp(_) => ModelKind::Gp,
        }
    }

    pub fn kernel(&self) -> KernelSpec {
        match self {
            FittedModel::Krr(m) => m.kernel,
            FittedModel::Gp(m) => m.kernel,
        }
    }

    /// `λ` for kernel ridge, the noise variance for a Gaussian process.
    pub fn regularization(&self) -> f64 {
        match self {
            FittedModel::Krr(m) => m.lambda,
            FittedModel::Gp(m) => m.noise_variance,
        }
    }

    pub fn jitter(&self) -> f64 {
        match self {
            FittedModel::Krr(m) => m.jitter,
            FittedModel::Gp(m) => m.jitter,
        }
    }

    pub fn train_x(&self) -> &DMatrix<f64> {
        match self {
            FittedModel::Krr(m) => &m.train_x,
            FittedModel::Gp(m) => &m.train_x,
        }
    }

    pub fn alpha(&self) -> &DVector<f64> {
        match self {
            FittedModel::Krr(m) => &m.alpha,
            FittedModel::Gp(m) => &m.alpha,
        }
    }

    pub fn fit_time_s(&self) -> f64 {
        match self {
            FittedModel::Krr(m) => m.fit_time_s,
            FittedModel::Gp(m) => m.fit_time_s,
        }
    }

    /// Point prediction (the posterior mean for a Gaussian process).
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        match self {
            FittedModel::Krr(m) => m.predict(x),
            FittedModel::Gp(m) => m.predict_mean(x),
        }
    }
}

/// A fitted model together with the preprocessing applied to raw features.
#[derive(Debug, Clone)]
pub struct Surrogate {
    pub model: FittedModel,
    pub normalization: Normalization,
    pub feature_names: Vec<String>,
}

impl Surrogate {
    /// Fit on raw features. `normalization` is applied to `x` first.
    #[allow(clippy::too_many_arguments)]
    pub fn fit(
        kind: ModelKind,
        kernel: KernelSpec,
        regularization: f64,
        normalization: Normalization,
        feature_names: Vec<String>,
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        ids: &[u64],
    ) -> Result<Self> {
        if feature_names.len() != x.ncols() {
            return Err(Error::DimensionMismatch { expected: x.ncols(), got: feature_names.len() });
        }
        let xn = normalization.apply(x, ids)?;
        let model = FittedModel::fit(kind, &xn, y, regularization, kernel)?;
        Ok(Self { model, normalization, feature_names })
    }

    pub fn predict(&self, x: &DMatrix<f64>, ids: &[u64]) -> Result<DVector<f64>> {
        self.model.predict(&self.normalization.apply(x, ids)?)
    }

    /// Mean and variance; only available for Gaussian process models.
    pub fn predict_with_variance(&self, x: &DMatrix<f64>, ids: &[u64]) -> Result<(DVector<f64>, DVector<f64>)> {
        match &self.model {
            FittedModel::Gp(gp) => gp.predict(&self.normalization.apply(x, ids)?),
            FittedModel::Krr(_) => Err(Error::InvalidInput("kernel ridge models carry no predictive variance".into())),
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let e = |v: f64| format!("{v:.16e}");
        let x = self.model.train_x();
        let mut s = format!("{MAGIC}\n");
        s.push_str(&format!("model = {}\n", self.model.kind()));
        s.push_str(&format!("kernel = {}\n", self.model.kernel().family()));
        if let Some(g) = self.model.kernel().gamma() {
            s.push_str(&format!("gamma = {}\n", e(g)));
        }
        s.push_str(&format!("regularization = {}\n", e(self.model.regularization())));
        s.push_str(&format!("jitter = {}\n", e(self.model.jitter())));
        s.push_str(&format!("normalization = {}\n", self.normalization.name()));
        if let Normalization::Standardize { mean, scale } = &self.normalization {
            s.push_str(&format!("mean = {}\n", mean.iter().map(|&v| e(v)).collect::<Vec<_>>().join(" ")));
            s.push_str(&format!("scale = {}\n", scale.iter().map(|&v| e(v)).collect::<Vec<_>>().join(" ")));
        }
        s.push_str(&format!("features = {}\n", self.feature_names.join(",")));
        s.push_str(&format!("n = {}\nd = {}\n", x.nrows(), x.ncols()));
        s.push_str("data\n");
        for (i, row) in x.row_iter().enumerate() {
            let mut fields: Vec<String> = row.iter().map(|&v| e(v)).collect();
            fields.push(e(self.model.alpha()[i]));
            s.push_str(&fields.join(" "));
            s.push('\n');
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let mut next = || -> Result<(usize, String)> {
            match lines.next() {
                Some((k, l)) => Ok((k + 1, l?)),
                None => Err(Error::parse(0, "unexpected end of model file")),
            }
        };
        let (_, magic) = next()?;
        if magic.trim() != MAGIC {
            return Err(Error::parse(1, "not a model file"));
        }
        let (mut kind, mut family, mut gamma, mut reg, mut jitter) = (None, None, None, None, 0.0);
        let (mut norm_name, mut mean, mut scale, mut features) = (None, None, None, None);
        let (mut n, mut d): (Option<usize>, Option<usize>) = (None, None);
        let floats = |line: usize, v: &str| -> Result<Vec<f64>> {
            v.split_whitespace().map(|t| parse_value(line, "value", t)).collect()
        };
        loop {
            let (line, text) = next()?;
            let text = text.trim();
            if text == "data" {
                break;
            }
            let (k, v) = text.split_once('=').ok_or_else(|| Error::parse(line, "expected key = value"))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "model" => kind = Some(v.parse::<ModelKind>().map_err(|e| Error::parse(line, e.to_string()))?),
                "kernel" => family = Some(v.to_string()),
                "gamma" => gamma = Some(parse_value::<f64>(line, k, v)?),
                "regularization" => reg = Some(parse_value::<f64>(line, k, v)?),
                "jitter" => jitter = parse_value(line, k, v)?,
                "normalization" => norm_name = Some(v.to_string()),
                "mean" => mean = Some(floats(line, v)?),
                "scale" => scale = Some(floats(line, v)?),
                "features" => features = Some(v.split(',').map(str::to_string).collect::<Vec<_>>()),
                "n" => n = Some(parse_value(line, k, v)?),
                "d" => d = Some(parse_value(line, k, v)?),
                _ => return Err(Error::parse(line, format!("unknown key `{k}`"))),
            }
        }
        let missing = |what: &str| Error::parse(0, format!("model file lacks `{what}`"));
        let kind = kind.ok_or_else(|| missing("model"))?;
        let kernel = match family.as_deref() {
            Some("linear") => KernelSpec::Linear,
            Some("rbf") => KernelSpec::Rbf { gamma: gamma.ok_or_else(|| missing("gamma"))? },
            _ => return Err(missing("kernel")),
        };
        let reg = reg.ok_or_else(|| missing("regularization"))?;
        let (n, d) = (n.ok_or_else(|| missing("n"))?, d.ok_or_else(|| missing("d"))?);
        let normalization = match norm_name.as_deref() {
            Some("row-l2") => Normalization::RowL2,
            Some("none") => Normalization::None,
            Some("standardize") => Normalization::Standardize {
                mean: mean.ok_or_else(|| missing("mean"))?,
                scale: scale.ok_or_else(|| missing("scale"))?,
            },
            _ => return Err(missing("normalization")),
        };
        let feature_names = features.ok_or_else(|| missing("features"))?;
        if feature_names.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: feature_names.len() });
        }
        let mut x = DMatrix::zeros(n, d);
        let mut alpha = DVector::zeros(n);
        for i in 0..n {
            let (line, text) = next()?;
            let v = floats(line, &text)?;
            if v.len() != d + 1 {
                return Err(Error::parse(line, format!("expected {} values, got {}", d + 1, v.len())));
            }
            for j in 0..d {
                x[(i, j)] = v[j];
            }
            alpha[i] = v[d];
        }
        let model = match kind {
            ModelKind::Krr => {
                FittedModel::Krr(KernelRidge { kernel, lambda: reg, train_x: x, alpha, jitter, fit_time_s: 0.0 })
            }
            ModelKind::Gp => FittedModel::Gp(GaussianProcess::from_parts(kernel, reg, jitter, x, alpha)?),
        };
        Ok(Self { model, normalization, feature_names })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (DMatrix<f64>, DVector<f64>, Vec<u64>) {
        let x = DMatrix::from_fn(12, 3, |i, j| 1.0 + ((i * 5 + j * 7) % 11) as f64 / 3.0);
        let y = DVector::from_fn(12, |i, _| (i as f64 * 0.7).sin() + 2.0);
        (x, y, (0..12).collect())
    }

    fn names() -> Vec<String> {
        vec!["a".into(), "b".into(), "c".into()]
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let (x, y, ids) = data();
        let q = DMatrix::from_fn(5, 3, |i, j| 0.5 + (i + 2 * j) as f64 * 0.37);
        let qid: Vec<u64> = (0..5).collect();
        let cases = [
            (ModelKind::Krr, KernelSpec::Rbf { gamma: 5.0 }, Normalization::RowL2),
            (ModelKind::Krr, KernelSpec::Linear, Normalization::None),
            (ModelKind::Gp, KernelSpec::Rbf { gamma: 0.3 }, Normalization::fit_standardize(&x)),
        ];
        for (kind, kernel, norm) in cases {
            let s = Surrogate::fit(kind, kernel, 1e-3, norm, names(), &x, &y, &ids).unwrap();
            let mut buf = Vec::new();
            s.write_to(&mut buf).unwrap();
            let back = Surrogate::read_from(buf.as_slice()).unwrap();
            assert_eq!(s.predict(&q, &qid).unwrap(), back.predict(&q, &qid).unwrap());
            let mut again = Vec::new();
            back.write_to(&mut again).unwrap();
            assert_eq!(buf, again);
        }
    }

    #[test]
    fn variance_only_for_gp() {
        let (x, y, ids) = data();
        let s = Surrogate::fit(ModelKind::Krr, KernelSpec::Linear, 0.1, Normalization::None, names(), &x, &y, &ids)
            .unwrap();
        assert!(s.predict_with_variance(&x, &ids).is_err());
    }

    #[test]
    fn corrupt_files() {
        assert!(Surrogate::read_from("hello\n".as_bytes()).is_err());
        let text = format!("{MAGIC}\nmodel = krr\nkernel = linear\nregularization = 1\nnormalization = none\nfeatures = a\nn = 1\nd = 1\nwat = 1\ndata\n1 2\n");
        assert!(Surrogate::read_from(text.as_bytes()).is_err());
        let ok = text.replace("wat = 1\n", "");
        let s = Surrogate::read_from(ok.as_bytes()).unwrap();
        assert_eq!(s.predict(&DMatrix::from_element(1, 1, 3.0), &[0]).unwrap()[0], 6.0);
    }
}
