//! Self-affine rough surfaces: random midpoint displacement synthesis,
//! datum shifting, Hurst exponent estimation and the plain-text surface format.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{self, PRNG_NAME};

/// Hurst exponents sampled for the surface database.
pub const SAMPLED_HURST_BAND: (f64, f64) = (0.5, 0.8);

/// Inputs of the random midpoint displacement generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSpec {
    /// Side length of the square patch (µm).
    pub scan_length: f64,
    /// Number of refinement passes; the output has `2^k + 1` points per side.
    pub iterations: u32,
    pub hurst: f64,
    /// Standard deviation of the first perturbation pass (µm).
    pub sigma0: f64,
    /// Corner heights in the order (top-left, top-right, bottom-left, bottom-right).
    pub corner_heights: [f64; 4],
    pub seed: u64,
}

impl SurfaceSpec {
    pub fn new(scan_length: f64, iterations: u32, hurst: f64, sigma0: f64, seed: u64) -> Self {
        Self { scan_length, iterations, hurst, sigma0, corner_heights: [0.0; 4], seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidSpec("iterations must be at least 1".into()));
        }
        if self.iterations > 14 {
            return Err(Error::InvalidSpec(format!(
                "{} iterations exceed the supported maximum of 14",
                self.iterations
            )));
        }
        if !(self.sigma0 >= 0.0) || !self.sigma0.is_finite() {
            return Err(Error::InvalidSpec(format!("sigma0 must be finite and >= 0, got {}", self.sigma0)));
        }
        if !(self.hurst > 0.0 && self.hurst < 1.0) {
            return Err(Error::InvalidSpec(format!("Hurst exponent must lie in (0, 1), got {}", self.hurst)));
        }
        if !(self.scan_length > 0.0) || !self.scan_length.is_finite() {
            return Err(Error::InvalidSpec(format!("scan length must be positive, got {}", self.scan_length)));
        }
        if self.corner_heights.iter().any(|h| !h.is_finite()) {
            return Err(Error::InvalidSpec("corner heights must be finite".into()));
        }
        Ok(())
    }

    /// Whether H falls outside the band the database generator samples from.
    pub fn hurst_outside_sampled_band(&self) -> bool {
        self.hurst < SAMPLED_HURST_BAND.0 || self.hurst > SAMPLED_HURST_BAND.1
    }

    pub fn points_per_side(&self) -> usize {
        (1usize << self.iterations) + 1
    }
}

/// Generation metadata carried alongside a height field and written to file headers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurfaceMeta {
    pub hurst: Option<f64>,
    pub sigma0: Option<f64>,
    pub seed: Option<u64>,
    pub prng: Option<String>,
}

/// Square grid of heights (µm), stored row-major. Row index `i` runs along y,
/// column index `j` along x.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    n: usize,
    heights: Vec<f64>,
    scan_length: f64,
    pub meta: SurfaceMeta,
}

impl HeightField {
    pub fn new(n: usize, heights: Vec<f64>, scan_length: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(format!("a height field needs at least 2 points per side, got {n}")));
        }
        if heights.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: heights.len() });
        }
        if !(scan_length > 0.0) || !scan_length.is_finite() {
            return Err(Error::InvalidInput(format!("scan length must be positive, got {scan_length}")));
        }
        if let Some(k) = heights.iter().position(|h| !h.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite height at node {k}")));
        }
        Ok(Self { n, heights, scan_length, meta: SurfaceMeta::default() })
    }

    /// Build a field by evaluating `f(x, y)` at every node, with x along columns.
    pub fn from_fn(n: usize, scan_length: f64, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let g = scan_length / (n.max(2) - 1) as f64;
        let mut heights = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                heights.push(f(j as f64 * g, i as f64 * g));
            }
        }
        Self::new(n, heights, scan_length)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn scan_length(&self) -> f64 {
        self.scan_length
    }

    /// Grid spacing `L / (n - 1)`.
    pub fn spacing(&self) -> f64 {
        self.scan_length / (self.n - 1) as f64
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.heights[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.heights[i * self.n..(i + 1) * self.n]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn min(&self) -> f64 {
        self.heights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.heights.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// A copy with every height transformed by `f`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut out = Self::new(self.n, self.heights.iter().map(|&h| f(h)).collect(), self.scan_length)?;
        out.meta = self.meta.clone();
        Ok(out)
    }

    /// Write the field in the plain-text surface format.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let opt_f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.16e}"));
        let mut head = String::new();
        writeln!(head, "# rough-contact surface v1").unwrap();
        writeln!(head, "n = {}", self.n).unwrap();
        writeln!(head, "elements = {}", self.n - 1).unwrap();
        writeln!(head, "L_um = {:.16e}", self.scan_length).unwrap();
        writeln!(head, "H = {}", opt_f(self.meta.hurst)).unwrap();
        writeln!(head, "sigma0_um = {}", opt_f(self.meta.sigma0)).unwrap();
        writeln!(head, "seed = {}", self.meta.seed.map_or("-".to_string(), |s| s.to_string())).unwrap();
        writeln!(head, "prng = {}", self.meta.prng.as_deref().unwrap_or("-")).unwrap();
        w.write_all(head.as_bytes())?;
        let mut line = String::new();
        for i in 0..self.n {
            line.clear();
            for (j, h) in self.row(i).iter().enumerate() {
                if j > 0 {
                    line.push(' ');
                }
                write!(line, "{h:.16e}").unwrap();
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut n = None;
        let mut scan_length = None;
        let mut meta = SurfaceMeta::default();
        let mut heights = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            if let Some((key, value)) = t.split_once('=') {
                let (key, value) = (key.trim(), value.trim());
                let real = |v: &str| -> Result<Option<f64>> {
                    if v == "-" {
                        return Ok(None);
                    }
                    v.parse().map(Some).map_err(|_| Error::parse(lineno, format!("bad number '{v}'")))
                };
                match key {
                    "n" => n = Some(value.parse::<usize>().map_err(|_| Error::parse(lineno, "bad n"))?),
                    "elements" => {}
                    "L_um" => scan_length = real(value)?,
                    "H" => meta.hurst = real(value)?,
                    "sigma0_um" => meta.sigma0 = real(value)?,
                    "seed" => {
                        meta.seed = if value == "-" {
                            None
                        } else {
                            Some(value.parse().map_err(|_| Error::parse(lineno, "bad seed"))?)
                        }
                    }
                    "prng" => meta.prng = (value != "-").then(|| value.to_string()),
                    other => return Err(Error::parse(lineno, format!("unknown header key '{other}'"))),
                }
                continue;
            }
            for tok in t.split_whitespace() {
                heights.push(tok.parse::<f64>().map_err(|_| Error::parse(lineno, format!("bad height '{tok}'")))?);
            }
        }
        let n = n.ok_or_else(|| Error::parse(0, "missing 'n' header"))?;
        let scan_length = scan_length.ok_or_else(|| Error::parse(0, "missing 'L_um' header"))?;
        let mut field = Self::new(n, heights, scan_length)?;
        field.meta = meta;
        Ok(field)
    }
}

/// Random midpoint displacement on a `(2^k + 1)²` grid.
///
/// Each pass halves the cell size. Edge midpoints take the mean of their two
/// end nodes, cell centres the mean of the four cell corners, and every new
/// node receives a Gaussian perturbation with the current standard deviation.
/// New nodes are visited in row-major order and draw from a single seeded
/// stream. After each pass the standard deviation is multiplied by `2^-H`.
pub fn rmd_generate(spec: &SurfaceSpec) -> Result<HeightField> {
    spec.validate()?;
    let n = spec.points_per_side();
    let mut z = vec![0.0; n * n];
    let last = n - 1;
    z[0] = spec.corner_heights[0];
    z[last] = spec.corner_heights[1];
    z[last * n] = spec.corner_heights[2];
    z[last * n + last] = spec.corner_heights[3];

    let mut rng = rng::seeded(spec.seed);
    let decay = 2f64.powf(-spec.hurst);
    let mut sigma = spec.sigma0;
    let mut step = last;
    while step > 1 {
        let half = step / 2;
        for i in (0..n).step_by(half) {
            let on_row = i % step == 0;
            for j in (0..n).step_by(half) {
                let on_col = j % step == 0;
                let mean = match (on_row, on_col) {
                    (true, true) => continue,
                    (true, false) => 0.5 * (z[i * n + j - half] + z[i * n + j + half]),
                    (false, true) => 0.5 * (z[(i - half) * n + j] + z[(i + half) * n + j]),
                    (false, false) => {
                        0.25 * (z[(i - half) * n + j - half]
                            + z[(i - half) * n + j + half]
                            + z[(i + half) * n + j - half]
                            + z[(i + half) * n + j + half])
                    }
                };
                let noise: f64 = rng.sample(StandardNormal);
                z[i * n + j] = mean + sigma * noise;
            }
        }
        sigma *= decay;
        step = half;
    }

    let mut field = HeightField::new(n, z, spec.scan_length)?;
    field.meta = SurfaceMeta {
        hurst: Some(spec.hurst),
        sigma0: Some(spec.sigma0),
        seed: Some(spec.seed),
        prng: Some(PRNG_NAME.to_string()),
    };
    Ok(field)
}

/// Shift heights so that the lowest node sits exactly at zero.
pub fn shift_to_datum(field: &HeightField) -> HeightField {
    let min = field.min();
    let mut out = field.clone();
    for h in &mut out.heights {
        *h -= min;
    }
    out
}

/// Mean squared height increment at integer lag `lag`, pooled over all row
/// and column pairs.
pub fn structure_function(field: &HeightField, lag: usize) -> f64 {
    let n = field.n();
    if lag == 0 || lag >= n {
        return 0.0;
    }
    let z = field.heights();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n - lag {
            let dx = z[i * n + j + lag] - z[i * n + j];
            let dy = z[(j + lag) * n + i] - z[j * n + i];
            sum += dx * dx + dy * dy;
        }
    }
    sum / (2 * n * (n - lag)) as f64
}

/// Hurst exponent from the log-log slope of the structure function.
///
/// Uses dyadic lags from one grid step up to a quarter of the scan length;
/// `S(r) ~ r^(2H)`, so the fitted slope is halved.
pub fn estimate_hurst(field: &HeightField) -> Result<f64> {
    let n = field.n();
    if n < 9 {
        return Err(Error::InvalidInput(format!("Hurst estimation needs at least 9 points per side, got {n}")));
    }
    let max_lag = (n - 1) / 4;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut lag = 1;
    while lag <= max_lag {
        let s = structure_function(field, lag);
        if !(s > 0.0) {
            return Err(Error::DegenerateSurface(format!("structure function vanishes at lag {lag}")));
        }
        xs.push((lag as f64).ln());
        ys.push(s.ln());
        lag *= 2;
    }
    Ok(0.5 * least_squares_slope(&xs, &ys))
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(k: u32, h: f64, sigma0: f64, seed: u64) -> SurfaceSpec {
        SurfaceSpec::new(1000.0, k, h, sigma0, seed)
    }

    #[test]
    fn zero_noise_zero_corners_is_flat() {
        let f = rmd_generate(&spec(3, 0.7, 0.0, 1)).unwrap();
        assert_eq!(f.n(), 9);
        assert!(f.heights().iter().all(|&h| h == 0.0));
    }

    #[test]
    fn zero_noise_reproduces_bilinear_interpolation() {
        let mut s = spec(2, 0.7, 0.0, 1);
        s.corner_heights = [0.0, 0.0, 4.0, 4.0];
        let f = rmd_generate(&s).unwrap();
        assert_eq!(f.n(), 5);
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(f.get(i, j), i as f64, "node ({i},{j})");
            }
        }
        // All four corners distinct: still bilinear.
        s.corner_heights = [1.0, 3.0, -2.0, 5.0];
        let f = rmd_generate(&s).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let (u, v) = (j as f64 / 4.0, i as f64 / 4.0);
                let expect = (1.0 - u) * (1.0 - v) * 1.0 + u * (1.0 - v) * 3.0 + (1.0 - u) * v * -2.0 + u * v * 5.0;
                assert!((f.get(i, j) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grid_sizes_follow_iteration_count() {
        assert_eq!(spec(7, 0.6, 1.0, 0).points_per_side(), 129);
        assert_eq!(spec(8, 0.6, 1.0, 0).points_per_side(), 257);
        let f = rmd_generate(&spec(7, 0.6, 1.0, 0)).unwrap();
        assert_eq!(f.n(), 129);
        assert_eq!(f.spacing() * 128.0, 1000.0);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(matches!(rmd_generate(&spec(0, 0.7, 1.0, 0)), Err(Error::InvalidSpec(_))));
        assert!(matches!(rmd_generate(&spec(3, 0.7, -1.0, 0)), Err(Error::InvalidSpec(_))));
        assert!(matches!(rmd_generate(&spec(3, 1.0, 1.0, 0)), Err(Error::InvalidSpec(_))));
        assert!(spec(3, 0.9, 1.0, 0).hurst_outside_sampled_band());
        assert!(!spec(3, 0.65, 1.0, 0).hurst_outside_sampled_band());
    }

    #[test]
    fn same_seed_is_bit_identical_and_seeds_differ() {
        let a = rmd_generate(&spec(5, 0.7, 10.0, 99)).unwrap();
        let b = rmd_generate(&spec(5, 0.7, 10.0, 99)).unwrap();
        let c = rmd_generate(&spec(5, 0.7, 10.0, 100)).unwrap();
        assert_eq!(a.heights(), b.heights());
        assert_ne!(a.heights(), c.heights());
    }

    #[test]
    fn datum_shift_examples() {
        let f = HeightField::new(2, vec![1.0, 2.0, 3.0, 2.0], 1.0).unwrap();
        assert_eq!(shift_to_datum(&f).heights(), &[0.0, 1.0, 2.0, 1.0]);
        let g = HeightField::new(2, vec![0.0, 2.0, 3.0, 2.0], 1.0).unwrap();
        assert_eq!(shift_to_datum(&g), g);
        let r = rmd_generate(&spec(6, 0.6, 7.0, 5)).unwrap();
        let s = shift_to_datum(&r);
        assert_eq!(s.min(), 0.0);
        let range_before = r.max() - r.min();
        let range_after = s.max() - s.min();
        assert!((range_before - range_after).abs() <= 1e-12 * range_before);
    }

    #[test]
    fn hurst_of_tilted_plane_is_one() {
        let f = HeightField::from_fn(65, 1000.0, |x, _| x).unwrap();
        let h = estimate_hurst(&f).unwrap();
        assert!((h - 1.0).abs() < 0.05, "{h}");
    }

    #[test]
    fn hurst_of_constant_field_is_degenerate() {
        let f = HeightField::new(9, vec![3.0; 81], 1.0).unwrap();
        assert!(matches!(estimate_hurst(&f), Err(Error::DegenerateSurface(_))));
        let small = HeightField::new(5, vec![0.0; 25], 1.0).unwrap();
        assert!(matches!(estimate_hurst(&small), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn file_format_round_trips_exactly() {
        let f = rmd_generate(&spec(4, 0.55, 3.3, 17)).unwrap();
        let mut buf = Vec::new();
        f.write_to(&mut buf).unwrap();
        let g = HeightField::read_from(buf.as_slice()).unwrap();
        assert_eq!(f, g);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("prng = chacha8"));
        assert!(text.contains("elements = 16"));
    }

    #[test]
    fn unknown_header_key_is_rejected() {
        let text = "n = 2\nL_um = 1\nbogus = 3\n0 0\n0 0\n";
        assert!(matches!(HeightField::read_from(text.as_bytes()), Err(Error::Parse { line: 3, .. })));
    }
}
