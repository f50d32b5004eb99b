//! Statistical characterization of a height field.
//!
//! Peaks are strict 1D maxima of row and column profiles, summits strict 2D
//! maxima over the 8-neighbourhood. Curvatures are negated second
//! differences, so maxima carry positive curvature. RMS values are standard
//! deviations about the mean and kurtosis is reported in the excess
//! convention throughout.

use crate::error::{Error, Result};
use crate::surface::HeightField;

/// Profile direction. Along-x profiles are grid rows, along-y profiles are columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    AlongX,
    AlongY,
    Pooled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakSet {
    pub heights: Vec<f64>,
    pub curvatures: Vec<f64>,
    pub direction: Direction,
    /// Interior profile nodes examined.
    pub candidate_count: usize,
}

impl PeakSet {
    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    pub fn density(&self) -> f64 {
        self.len() as f64 / self.candidate_count as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummitSet {
    pub heights: Vec<f64>,
    pub curvatures: Vec<f64>,
    pub candidate_count: usize,
}

impl SummitSet {
    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    pub fn density(&self) -> f64 {
        self.len() as f64 / self.candidate_count as f64
    }
}

/// Mean, standard deviation, skewness and excess kurtosis of a sample,
/// all with population (1/N) normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub std_dev: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

impl Moments {
    pub fn of(values: &[f64], what: &str) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::DegenerateStatistics(format!("{what}: need at least 2 values, got {}", values.len())));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &v in values {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        m2 /= n;
        m3 /= n;
        m4 /= n;
        if !(m2 > 0.0) {
            return Err(Error::DegenerateStatistics(format!("{what}: zero variance")));
        }
        Ok(Self { mean, std_dev: m2.sqrt(), skewness: m3 / m2.powf(1.5), excess_kurtosis: m4 / (m2 * m2) - 3.0 })
    }
}

fn profiles(field: &HeightField, direction: Direction) -> Vec<Vec<f64>> {
    let n = field.n();
    let rows = || (0..n).map(|i| field.row(i).to_vec());
    let cols = || (0..n).map(|j| field.column(j));
    match direction {
        Direction::AlongX => rows().collect(),
        Direction::AlongY => cols().collect(),
        Direction::Pooled => rows().chain(cols()).collect(),
    }
}

/// Peaks of all profiles in `direction`.
pub fn detect_peaks_in(field: &HeightField, direction: Direction) -> Result<PeakSet> {
    let n = field.n();
    if n < 3 {
        return Err(Error::InvalidInput(format!("peak detection needs at least 3 points per side, got {n}")));
    }
    let g2 = field.spacing() * field.spacing();
    let mut out = PeakSet { heights: Vec::new(), curvatures: Vec::new(), direction, candidate_count: 0 };
    for p in profiles(field, direction) {
        for w in p.windows(3) {
            out.candidate_count += 1;
            if w[0] < w[1] && w[2] < w[1] {
                out.heights.push(w[1]);
                out.curvatures.push(-(w[0] - 2.0 * w[1] + w[2]) / g2);
            }
        }
    }
    Ok(out)
}

/// Peaks pooled over every row and column profile.
pub fn detect_peaks(field: &HeightField) -> Result<PeakSet> {
    detect_peaks_in(field, Direction::Pooled)
}

/// Interior nodes strictly higher than all eight neighbours.
pub fn detect_summits(field: &HeightField) -> Result<SummitSet> {
    let n = field.n();
    if n < 3 {
        return Err(Error::InvalidInput(format!("summit detection needs at least 3 points per side, got {n}")));
    }
    let g2 = field.spacing() * field.spacing();
    let z = |i: usize, j: usize| field.get(i, j);
    let mut out = SummitSet { heights: Vec::new(), curvatures: Vec::new(), candidate_count: (n - 2) * (n - 2) };
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            let c = z(i, j);
            let is_summit = (i - 1..=i + 1)
                .flat_map(|a| (j - 1..=j + 1).map(move |b| (a, b)))
                .filter(|&(a, b)| (a, b) != (i, j))
                .all(|(a, b)| z(a, b) < c);
            if is_summit {
                let kxx = -(z(i, j - 1) - 2.0 * c + z(i, j + 1)) / g2;
                let kyy = -(z(i - 1, j) - 2.0 * c + z(i + 1, j)) / g2;
                out.heights.push(c);
                out.curvatures.push(0.5 * (kxx + kyy));
            }
        }
    }
    Ok(out)
}

/// Zeroth, second and fourth spectral moments of the profiles in one direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralMoments {
    pub m0: f64,
    pub m2: f64,
    pub m4: f64,
}

impl SpectralMoments {
    /// Bandwidth parameter `m0 m4 / m2²`.
    pub fn bandwidth(&self) -> f64 {
        self.m0 * self.m4 / (self.m2 * self.m2)
    }
}

/// Profile-averaged height variance, mean squared central-difference slope
/// and mean squared second-difference curvature.
pub fn spectral_moments(field: &HeightField, direction: Direction) -> Result<SpectralMoments> {
    let n = field.n();
    if n < 5 {
        return Err(Error::InvalidInput(format!("spectral moments need at least 5 points per side, got {n}")));
    }
    let g = field.spacing();
    let profs = profiles(field, direction);
    let (mut m0, mut m2, mut m4) = (0.0, 0.0, 0.0);
    for p in &profs {
        let mean = p.iter().sum::<f64>() / n as f64;
        m0 += p.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let (mut s2, mut s4) = (0.0, 0.0);
        for w in p.windows(3) {
            let slope = (w[2] - w[0]) / (2.0 * g);
            let curv = (w[0] - 2.0 * w[1] + w[2]) / (g * g);
            s2 += slope * slope;
            s4 += curv * curv;
        }
        m2 += s2 / (n - 2) as f64;
        m4 += s4 / (n - 2) as f64;
    }
    let count = profs.len() as f64;
    let moments = SpectralMoments { m0: m0 / count, m2: m2 / count, m4: m4 / count };
    if !(moments.m2 > 0.0) {
        return Err(Error::DegenerateStatistics("mean squared slope is zero".into()));
    }
    Ok(moments)
}

/// The 22 surface descriptors used as surrogate features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatVector {
    pub mean_peak_height: f64,
    pub rms_peak_height: f64,
    pub kurtosis_peak_height: f64,
    pub skewness_peak_height: f64,
    pub peak_density: f64,
    pub mean_peak_curvature: f64,
    pub kurtosis_peak_curvature: f64,
    pub skewness_peak_curvature: f64,
    pub bandwidth_x: f64,
    pub bandwidth_y: f64,
    pub mean_summit_height: f64,
    pub rms_summit_height: f64,
    pub kurtosis_summit_height: f64,
    pub skewness_summit_height: f64,
    pub summit_density: f64,
    pub mean_summit_curvature: f64,
    pub rms_summit_curvature: f64,
    pub kurtosis_summit_curvature: f64,
    pub skewness_summit_curvature: f64,
    pub mean_height: f64,
    pub max_height: f64,
    pub rms_height: f64,
}

/// What physical quantity a [`StatVector`] entry represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatKind {
    /// Shifted by a height translation, scaled by a height scaling.
    Location,
    /// Height spread; scaled by a height scaling only.
    Spread,
    Curvature,
    Dimensionless,
}

impl StatVector {
    pub const LEN: usize = 22;

    /// CSV column names in feature order.
    pub const COLUMNS: [&'static str; 22] = [
        "mean_zp", "rms_zp", "kurt_zp", "skew_zp", "rho_p", "mean_kp", "kurt_kp", "skew_kp", "alpha_x", "alpha_y",
        "mean_za", "rms_za", "kurt_za", "skew_za", "rho_a", "mean_ka", "rms_ka", "kurt_ka", "skew_ka", "mean_z",
        "max_z", "rms_z",
    ];

    pub const KINDS: [StatKind; 22] = {
        use StatKind::*;
        [
            Location,
            Spread,
            Dimensionless,
            Dimensionless,
            Dimensionless,
            Curvature,
            Dimensionless,
            Dimensionless,
            Dimensionless,
            Dimensionless,
            Location,
            Spread,
            Dimensionless,
            Dimensionless,
            Dimensionless,
            Curvature,
            Curvature,
            Dimensionless,
            Dimensionless,
            Location,
            Location,
            Spread,
        ]
    };

    pub fn to_array(&self) -> [f64; 22] {
        [
            self.mean_peak_height,
            self.rms_peak_height,
            self.kurtosis_peak_height,
            self.skewness_peak_height,
            self.peak_density,
            self.mean_peak_curvature,
            self.kurtosis_peak_curvature,
            self.skewness_peak_curvature,
            self.bandwidth_x,
            self.bandwidth_y,
            self.mean_summit_height,
            self.rms_summit_height,
            self.kurtosis_summit_height,
            self.skewness_summit_height,
            self.summit_density,
            self.mean_summit_curvature,
            self.rms_summit_curvature,
            self.kurtosis_summit_curvature,
            self.skewness_summit_curvature,
            self.mean_height,
            self.max_height,
            self.rms_height,
        ]
    }

    pub fn from_array(a: [f64; 22]) -> Self {
        Self {
            mean_peak_height: a[0],
            rms_peak_height: a[1],
            kurtosis_peak_height: a[2],
            skewness_peak_height: a[3],
            peak_density: a[4],
            mean_peak_curvature: a[5],
            kurtosis_peak_curvature: a[6],
            skewness_peak_curvature: a[7],
            bandwidth_x: a[8],
            bandwidth_y: a[9],
            mean_summit_height: a[10],
            rms_summit_height: a[11],
            kurtosis_summit_height: a[12],
            skewness_summit_height: a[13],
            summit_density: a[14],
            mean_summit_curvature: a[15],
            rms_summit_curvature: a[16],
            kurtosis_summit_curvature: a[17],
            skewness_summit_curvature: a[18],
            mean_height: a[19],
            max_height: a[20],
            rms_height: a[21],
        }
    }

    /// Checks the structural invariants every characterized surface satisfies.
    pub fn check_invariants(&self) -> Result<()> {
        let a = self.to_array();
        if let Some(k) = a.iter().position(|v| !v.is_finite()) {
            return Err(Error::DegenerateStatistics(format!("{} is not finite", Self::COLUMNS[k])));
        }
        let rms = [self.rms_peak_height, self.rms_summit_height, self.rms_summit_curvature, self.rms_height];
        if rms.iter().any(|&v| v < 0.0) {
            return Err(Error::DegenerateStatistics("negative RMS entry".into()));
        }
        for (name, rho) in [("rho_p", self.peak_density), ("rho_a", self.summit_density)] {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(Error::DegenerateStatistics(format!("{name} = {rho} outside (0, 1)")));
            }
        }
        if self.max_height < self.mean_height {
            return Err(Error::DegenerateStatistics("max height below mean height".into()));
        }
        Ok(())
    }
}

/// Map a height field to its [`StatVector`].
pub fn characterize(field: &HeightField) -> Result<StatVector> {
    let peaks = detect_peaks(field)?;
    let summits = detect_summits(field)?;
    if peaks.len() < 2 {
        return Err(Error::DegenerateStatistics(format!("{} peaks found, need at least 2", peaks.len())));
    }
    if summits.len() < 2 {
        return Err(Error::DegenerateStatistics(format!("{} summits found, need at least 2", summits.len())));
    }
    let zp = Moments::of(&peaks.heights, "peak heights")?;
    let kp = Moments::of(&peaks.curvatures, "peak curvatures")?;
    let za = Moments::of(&summits.heights, "summit heights")?;
    let ka = Moments::of(&summits.curvatures, "summit curvatures")?;
    let z = Moments::of(field.heights(), "surface heights")?;
    let ax = spectral_moments(field, Direction::AlongX)?.bandwidth();
    let ay = spectral_moments(field, Direction::AlongY)?.bandwidth();
    Ok(StatVector {
        mean_peak_height: zp.mean,
        rms_peak_height: zp.std_dev,
        kurtosis_peak_height: zp.excess_kurtosis,
        skewness_peak_height: zp.skewness,
        peak_density: peaks.density(),
        mean_peak_curvature: kp.mean,
        kurtosis_peak_curvature: kp.excess_kurtosis,
        skewness_peak_curvature: kp.skewness,
        bandwidth_x: ax,
        bandwidth_y: ay,
        mean_summit_height: za.mean,
        rms_summit_height: za.std_dev,
        kurtosis_summit_height: za.excess_kurtosis,
        skewness_summit_height: za.skewness,
        summit_density: summits.density(),
        mean_summit_curvature: ka.mean,
        rms_summit_curvature: ka.std_dev,
        kurtosis_summit_curvature: ka.excess_kurtosis,
        skewness_summit_curvature: ka.skewness,
        mean_height: z.mean,
        max_height: field.max(),
        rms_height: z.std_dev,
    })
}
