//! Database generation and preprocessing.
//!
//! A database is built by drawing surface parameters and far-field
//! displacements from a master seed, generating and characterizing each
//! surface, and solving the contact problem once per displacement. Every
//! record stores the seed and parameters needed to replay it.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::bem::{solve_contact_with, LoadCase, Material, SolverOptions};
use crate::error::{Error, Result};
use crate::rng::{self, derive_seed};
use crate::stats::{characterize, StatVector};
use crate::surface::{rmd_generate, shift_to_datum, SurfaceSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// Model inputs in column order: the displacement followed by the surface statistics.
pub const FEATURE_NAMES: [&str; 23] = [
    "delta_um", "mean_zp", "rms_zp", "kurt_zp", "skew_zp", "rho_p", "mean_kp", "kurt_kp", "skew_kp", "alpha_x",
    "alpha_y", "mean_za", "rms_za", "kurt_za", "skew_za", "rho_a", "mean_ka", "rms_ka", "kurt_ka", "skew_ka", "mean_z",
    "max_z", "rms_z",
];

const STREAM_SURFACE: u64 = 0;
const STREAM_PARAMS: u64 = 1;
const STREAM_DELTAS: u64 = 2;

/// Parse `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) =
            line.split_once('=').ok_or_else(|| Error::parse(k + 1, format!("expected key = value, got `{line}`")))?;
        out.push((k + 1, key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

pub(crate) fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::parse(line, format!("invalid value `{value}` for `{key}`")))
}

/// 64-bit FNV-1a, used to fingerprint configs in provenance records.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stratum {
    pub lo: f64,
    pub hi: f64,
    pub weight: f64,
}

/// Stratified uniform sampling of far-field displacements.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    pub strata: Vec<Stratum>,
    pub count: usize,
    pub seed: u64,
}

impl SamplingPlan {
    /// 70 % of the samples on [5, 25] µm and 30 % on (25, 45] µm.
    pub fn default_strata() -> Vec<Stratum> {
        vec![Stratum { lo: 5.0, hi: 25.0, weight: 0.7 }, Stratum { lo: 25.0, hi: 45.0, weight: 0.3 }]
    }

    pub fn delta_range(&self) -> (f64, f64) {
        (self.strata.first().map_or(f64::NAN, |s| s.lo), self.strata.last().map_or(f64::NAN, |s| s.hi))
    }

    pub fn validate(&self) -> Result<()> {
        if self.strata.is_empty() {
            return Err(Error::Plan("no strata".into()));
        }
        for (k, s) in self.strata.iter().enumerate() {
            if !(s.weight > 0.0) || !s.weight.is_finite() {
                return Err(Error::Plan(format!("stratum {k} has non-positive weight {}", s.weight)));
            }
            if !(s.lo < s.hi) || !s.lo.is_finite() || !s.hi.is_finite() {
                return Err(Error::Plan(format!("stratum {k} has an empty range [{}, {}]", s.lo, s.hi)));
            }
            if !(s.lo > 0.0) {
                return Err(Error::Plan(format!("stratum {k} admits non-positive displacements")));
            }
            if k > 0 && self.strata[k - 1].hi != s.lo {
                return Err(Error::Plan(format!("strata {} and {k} do not tile the range", k - 1)));
            }
        }
        let total: f64 = self.strata.iter().map(|s| s.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Plan(format!("stratum weights sum to {total}, not 1")));
        }
        if self.count == 0 {
            return Err(Error::Plan("sample count is zero, every stratum is empty".into()));
        }
        Ok(())
    }

    /// Samples per stratum by largest remainder, so the total is exactly `count`.
    pub fn allocation(&self) -> Vec<usize> {
        let exact: Vec<f64> = self.strata.iter().map(|s| s.weight * self.count as f64).collect();
        let mut alloc: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut left = self.count - alloc.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..exact.len()).collect();
        order.sort_by(|&a, &b| {
            let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &k in order.iter().cycle() {
            if left == 0 {
                break;
            }
            alloc[k] += 1;
            left -= 1;
        }
        alloc
    }
}

impl fmt::Display for SamplingPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.strata.iter().map(|s| format!("{}..{}:{}", s.lo, s.hi, s.weight)).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Parse strata written as `lo..hi:weight` separated by commas.
pub fn parse_strata(text: &str) -> Result<Vec<Stratum>> {
    text.split(',')
        .map(|part| {
            let bad = || Error::Plan(format!("cannot parse stratum `{}` (expected lo..hi:weight)", part.trim()));
            let (range, weight) = part.trim().split_once(':').ok_or_else(bad)?;
            let (lo, hi) = range.split_once("..").ok_or_else(bad)?;
            Ok(Stratum {
                lo: lo.trim().parse().map_err(|_| bad())?,
                hi: hi.trim().parse().map_err(|_| bad())?,
                weight: weight.trim().parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Draw the displacements of a plan.
///
/// The first stratum is sampled on `[lo, hi)` and later ones on `(lo, hi]`,
/// so a shared boundary belongs to the lower stratum. The result is shuffled.
pub fn sample_displacements(plan: &SamplingPlan) -> Result<Vec<f64>> {
    plan.validate()?;
    let mut r = rng::seeded(plan.seed);
    let mut out = Vec::with_capacity(plan.count);
    for (k, (s, m)) in plan.strata.iter().zip(plan.allocation()).enumerate() {
        for _ in 0..m {
            let u: f64 = r.random();
            out.push(if k == 0 { s.lo + (s.hi - s.lo) * u } else { s.hi - (s.hi - s.lo) * u });
        }
    }
    rng::shuffle(&mut out, &mut r);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timing {
    /// Measured wall-clock solve times.
    Wall,
    /// Zero in place of every duration, for byte-reproducible output.
    Off,
}

impl FromStr for Timing {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wall" => Ok(Timing::Wall),
            "off" => Ok(Timing::Off),
            _ => Err(Error::Config(format!("timing must be `wall` or `off`, got `{s}`"))),
        }
    }
}

impl fmt::Display for Timing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Timing::Wall => "wall",
            Timing::Off => "off",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatabaseConfig {
    pub seed: u64,
    pub surfaces: usize,
    pub deltas_per_surface: usize,
    /// RMD passes; surfaces have `2^k + 1` points per side.
    pub iterations: u32,
    pub scan_length: f64,
    pub hurst_range: (f64, f64),
    pub sigma0_range: (f64, f64),
    pub delta_strata: Vec<Stratum>,
    pub material: Material,
    pub tol: f64,
    pub max_sweeps: usize,
    pub timing: Timing,
}

impl Default for DatabaseConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            surfaces: 100,
            deltas_per_surface: 3,
            iterations: 7,
            scan_length: 1000.0,
            hurst_range: (0.5, 0.8),
            sigma0_range: (3.0, 16.0),
            delta_strata: SamplingPlan::default_strata(),
            material: Material::default(),
            tol: 1e-8,
            max_sweeps: 100,
            timing: Timing::Wall,
        }
    }
}

impl DatabaseConfig {
    pub const KEYS: [&'static str; 15] = [
        "seed",
        "surfaces",
        "deltas_per_surface",
        "iterations",
        "scan_length_um",
        "hurst_min",
        "hurst_max",
        "sigma0_min_um",
        "sigma0_max_um",
        "delta_strata",
        "youngs_modulus",
        "poisson_ratio",
        "tol",
        "max_sweeps",
        "timing",
    ];

    /// Parse a `key = value` file on top of the defaults. Unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (line, key, v) in parse_key_values(text)? {
            match key.as_str() {
                "seed" => c.seed = parse_value(line, &key, &v)?,
                "surfaces" => c.surfaces = parse_value(line, &key, &v)?,
                "deltas_per_surface" => c.deltas_per_surface = parse_value(line, &key, &v)?,
                "iterations" => c.iterations = parse_value(line, &key, &v)?,
                "scan_length_um" => c.scan_length = parse_value(line, &key, &v)?,
                "hurst_min" => c.hurst_range.0 = parse_value(line, &key, &v)?,
                "hurst_max" => c.hurst_range.1 = parse_value(line, &key, &v)?,
                "sigma0_min_um" => c.sigma0_range.0 = parse_value(line, &key, &v)?,
                "sigma0_max_um" => c.sigma0_range.1 = parse_value(line, &key, &v)?,
                "delta_strata" => c.delta_strata = parse_strata(&v)?,
                "youngs_modulus" => c.material.youngs = parse_value(line, &key, &v)?,
                "poisson_ratio" => c.material.poisson = parse_value(line, &key, &v)?,
                "tol" => c.tol = parse_value(line, &key, &v)?,
                "max_sweeps" => c.max_sweeps = parse_value(line, &key, &v)?,
                "timing" => c.timing = v.parse()?,
                _ => return Err(Error::Config(format!("unknown key `{key}` at line {line}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// Canonical text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        format!(
            "seed = {}\nsurfaces = {}\ndeltas_per_surface = {}\niterations = {}\nscan_length_um = {}\nhurst_min = {}\n\
             hurst_max = {}\nsigma0_min_um = {}\nsigma0_max_um = {}\ndelta_strata = {}\nyoungs_modulus = {}\n\
             poisson_ratio = {}\ntol = {}\nmax_sweeps = {}\ntiming = {}\n",
            self.seed,
            self.surfaces,
            self.deltas_per_surface,
            self.iterations,
            self.scan_length,
            self.hurst_range.0,
            self.hurst_range.1,
            self.sigma0_range.0,
            self.sigma0_range.1,
            self.plan(),
            self.material.youngs,
            self.material.poisson,
            self.tol,
            self.max_sweeps,
            self.timing,
        )
    }

    pub fn plan(&self) -> SamplingPlan {
        SamplingPlan {
            strata: self.delta_strata.clone(),
            count: self.surfaces * self.deltas_per_surface,
            seed: derive_seed(self.seed, STREAM_DELTAS, 0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.surfaces == 0 || self.deltas_per_surface == 0 {
            return Err(Error::Config("surfaces and deltas_per_surface must be positive".into()));
        }
        let (h0, h1) = self.hurst_range;
        if !(h0 > 0.0 && h0 <= h1 && h1 < 1.0) {
            return Err(Error::Config(format!("Hurst range [{h0}, {h1}] must satisfy 0 < min <= max < 1")));
        }
        let (s0, s1) = self.sigma0_range;
        if !(s0 >= 0.0 && s0 <= s1 && s1.is_finite()) {
            return Err(Error::Config(format!("sigma0 range [{s0}, {s1}] must satisfy 0 <= min <= max")));
        }
        if !(self.tol > 0.0) || self.max_sweeps == 0 {
            return Err(Error::Config("tol and max_sweeps must be positive".into()));
        }
        self.material.validate()?;
        SurfaceSpec::new(self.scan_length, self.iterations, h0, s0, 0).validate()?;
        self.plan().validate()
    }

    pub fn fingerprint(&self) -> u64 {
        fnv1a(self.to_text().as_bytes())
    }

    fn solver_options(&self) -> SolverOptions {
        SolverOptions { tol: self.tol, max_sweeps: self.max_sweeps, ..SolverOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    SolverFailed,
    DegenerateSurface,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Ok => "ok",
            Status::SolverFailed => "solver-failed",
            Status::DegenerateSurface => "degenerate-surface",
        })
    }
}

impl FromStr for Status {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(Status::Ok),
            "solver-failed" => Ok(Status::SolverFailed),
            "degenerate-surface" => Ok(Status::DegenerateSurface),
            _ => Err(Error::InvalidInput(format!("unknown status `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: u64,
    /// Seed of the surface generator.
    pub seed: u64,
    pub hurst: f64,
    pub sigma0: f64,
    pub delta: f64,
    pub stats: StatVector,
    /// Effective contact area (%).
    pub effective_area: f64,
    pub sim_time_s: f64,
    pub status: Status,
}

impl SampleRecord {
    /// `[Δ, statistics...]` in [`FEATURE_NAMES`] order.
    pub fn features(&self) -> [f64; 23] {
        let mut f = [0.0; 23];
        f[0] = self.delta;
        f[1..].copy_from_slice(&self.stats.to_array());
        f
    }

    fn is_complete(&self) -> bool {
        self.features().iter().all(|v| v.is_finite()) && self.effective_area.is_finite() && self.sim_time_s.is_finite()
    }
}

/// Where a dataset came from. Kept out of the CSV so the table itself is reproducible.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    pub config_hash: Option<u64>,
    pub created_unix_s: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<SampleRecord>,
    pub schema_version: u32,
    pub provenance: Provenance,
}

fn csv_header() -> String {
    let mut cols = vec!["id", "seed", "H", "sigma0_um", "delta_um"];
    cols.extend(StatVector::COLUMNS);
    cols.extend(["Ae_percent", "sim_time_s", "status"]);
    cols.join(",")
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn parse_num(line: usize, s: &str) -> Result<f64> {
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse().map_err(|_| Error::parse(line, format!("invalid number `{s}`")))
}

impl Dataset {
    pub fn new(records: Vec<SampleRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        if let Some(r) = records.iter().find(|r| !seen.insert(r.id)) {
            return Err(Error::InvalidInput(format!("duplicate sample id {}", r.id)));
        }
        Ok(Self { records, schema_version: SCHEMA_VERSION, provenance: Provenance::default() })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.id).collect()
    }

    /// `len × 23` matrix of raw features.
    pub fn feature_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), FEATURE_NAMES.len(), |i, j| self.records[i].features()[j])
    }

    pub fn targets(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.records.iter().map(|r| r.effective_area))
    }

    /// Sum of per-record solve times.
    pub fn total_sim_time(&self) -> f64 {
        self.records.iter().map(|r| r.sim_time_s).filter(|t| t.is_finite()).sum()
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let mut buf = csv_header();
        buf.push('\n');
        for r in &self.records {
            let mut fields =
                vec![r.id.to_string(), r.seed.to_string(), fmt_num(r.hurst), fmt_num(r.sigma0), fmt_num(r.delta)];
            fields.extend(r.stats.to_array().iter().map(|&v| fmt_num(v)));
            fields.extend([fmt_num(r.effective_area), fmt_num(r.sim_time_s), r.status.to_string()]);
            buf.push_str(&fields.join(","));
            buf.push('\n');
        }
        w.write_all(buf.as_bytes())?;
        Ok(())
    }

    pub fn read_csv(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::parse(1, "empty file"))??;
        if header.trim() != csv_header() {
            return Err(Error::parse(1, "unexpected header"));
        }
        let width = 5 + StatVector::LEN + 3;
        let mut records = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line?;
            let no = k + 2;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != width {
                return Err(Error::parse(no, format!("expected {width} fields, got {}", f.len())));
            }
            let mut stats = [0.0; 22];
            for (s, v) in stats.iter_mut().zip(&f[5..5 + StatVector::LEN]) {
                *s = parse_num(no, v)?;
            }
            records.push(SampleRecord {
                id: parse_value(no, "id", f[0])?,
                seed: parse_value(no, "seed", f[1])?,
                hurst: parse_num(no, f[2])?,
                sigma0: parse_num(no, f[3])?,
                delta: parse_num(no, f[4])?,
                stats: StatVector::from_array(stats),
                effective_area: parse_num(no, f[width - 3])?,
                sim_time_s: parse_num(no, f[width - 2])?,
                status: f[width - 1].parse().map_err(|e: Error| Error::parse(no, e.to_string()))?,
            });
        }
        Self::new(records)
    }
}

/// Output of [`build_database`].
#[derive(Debug, Clone)]
pub struct BuildReport {
    pub dataset: Dataset,
    pub wall_time_s: f64,
    pub failed: usize,
}

/// Parameters drawn for one surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceDraw {
    pub seed: u64,
    pub hurst: f64,
    pub sigma0: f64,
}

fn draw_surface(config: &DatabaseConfig, index: usize) -> SurfaceDraw {
    let mut r = rng::seeded(derive_seed(config.seed, STREAM_PARAMS, index as u64));
    let (h0, h1) = config.hurst_range;
    let (s0, s1) = config.sigma0_range;
    let hurst = h0 + (h1 - h0) * r.random::<f64>();
    let sigma0 = s0 + (s1 - s0) * r.random::<f64>();
    SurfaceDraw { seed: derive_seed(config.seed, STREAM_SURFACE, index as u64), hurst, sigma0 }
}

fn failed_record(id: u64, draw: SurfaceDraw, delta: f64, status: Status) -> SampleRecord {
    SampleRecord {
        id,
        seed: draw.seed,
        hurst: draw.hurst,
        sigma0: draw.sigma0,
        delta,
        stats: StatVector::from_array([f64::NAN; 22]),
        effective_area: f64::NAN,
        sim_time_s: f64::NAN,
        status,
    }
}

/// Simulate every displacement on one surface.
fn simulate_surface(config: &DatabaseConfig, draw: SurfaceDraw, cases: &[(u64, f64)]) -> Vec<SampleRecord> {
    let spec = SurfaceSpec::new(config.scan_length, config.iterations, draw.hurst, draw.sigma0, draw.seed);
    let surface = rmd_generate(&spec).map(|f| shift_to_datum(&f));
    let stats = surface.as_ref().ok().and_then(|f| characterize(f).ok());
    let (Ok(field), Some(stats)) = (surface, stats) else {
        return cases.iter().map(|&(id, d)| failed_record(id, draw, d, Status::DegenerateSurface)).collect();
    };
    let opts = config.solver_options();
    cases
        .iter()
        .map(|&(id, delta)| {
            let solved = LoadCase::new(delta).and_then(|load| solve_contact_with(&field, load, config.material, &opts));
            match solved {
                Ok(sol) => SampleRecord {
                    id,
                    seed: draw.seed,
                    hurst: draw.hurst,
                    sigma0: draw.sigma0,
                    delta,
                    stats,
                    effective_area: sol.effective_area,
                    sim_time_s: match config.timing {
                        Timing::Wall => sol.elapsed_s,
                        Timing::Off => 0.0,
                    },
                    status: Status::Ok,
                },
                Err(_) => failed_record(id, draw, delta, Status::SolverFailed),
            }
        })
        .collect()
}

/// Generate one record per (surface, displacement) pair.
///
/// Record `s · m + d` is displacement `d` of surface `s`, where `m` is the
/// number of displacements per surface. Surfaces are processed in parallel
/// on the current rayon pool; records come back in id order.
pub fn build_database(config: &DatabaseConfig) -> Result<BuildReport> {
    config.validate()?;
    let start = Instant::now();
    let deltas = sample_displacements(&config.plan())?;
    let m = config.deltas_per_surface;
    let records: Vec<SampleRecord> = (0..config.surfaces)
        .into_par_iter()
        .flat_map_iter(|s| {
            let cases: Vec<(u64, f64)> = (0..m).map(|d| ((s * m + d) as u64, deltas[s * m + d])).collect();
            simulate_surface(config, draw_surface(config, s), &cases)
        })
        .collect();
    let failed = records.iter().filter(|r| r.status != Status::Ok).count();
    let mut dataset = Dataset::new(records)?;
    dataset.provenance = Provenance {
        config_hash: Some(config.fingerprint()),
        created_unix_s: std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).ok().map(|d| d.as_secs()),
    };
    Ok(BuildReport { dataset, wall_time_s: start.elapsed().as_secs_f64(), failed })
}

/// Re-run a single record from its stored seed and parameters.
pub fn replay_record(config: &DatabaseConfig, record: &SampleRecord) -> SampleRecord {
    let draw = SurfaceDraw { seed: record.seed, hurst: record.hurst, sigma0: record.sigma0 };
    simulate_surface(config, draw, &[(record.id, record.delta)]).remove(0)
}

/// Keep only complete records with status ok. Returns the cleaned set and
/// the number of records removed.
pub fn clean(ds: &Dataset) -> (Dataset, usize) {
    let kept: Vec<SampleRecord> =
        ds.records.iter().filter(|r| r.status == Status::Ok && r.is_complete()).cloned().collect();
    let removed = ds.len() - kept.len();
    (Dataset { records: kept, schema_version: ds.schema_version, provenance: ds.provenance.clone() }, removed)
}

/// Scale every row to unit Euclidean norm. `ids` names the rows in errors.
pub fn normalize_rows(features: &DMatrix<f64>, ids: &[u64]) -> Result<DMatrix<f64>> {
    if ids.len() != features.nrows() {
        return Err(Error::DimensionMismatch { expected: features.nrows(), got: ids.len() });
    }
    let mut out = features.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let norm = row.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::ZeroNormRow { sample_id: ids[i] });
        }
        row /= norm;
    }
    Ok(out)
}

/// Feature preprocessing applied before fitting and prediction.
#[derive(Debug, Clone, PartialEq)]
pub enum Normalization {
    /// Per-sample unit L2 norm over all features.
    RowL2,
    /// Per-feature centring and scaling with statistics taken from training data.
    Standardize {
        mean: Vec<f64>,
        scale: Vec<f64>,
    },
    None,
}

impl Normalization {
    /// Per-feature standardization fitted on `x`. Constant columns keep unit scale.
    pub fn fit_standardize(x: &DMatrix<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let mu = col.sum() / n;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            mean.push(mu);
            scale.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Normalization::Standardize { mean, scale }
    }

    pub fn apply(&self, x: &DMatrix<f64>, ids: &[u64]) -> Result<DMatrix<f64>> {
        match self {
            Normalization::RowL2 => normalize_rows(x, ids),
            Normalization::None => Ok(x.clone()),
            Normalization::Standardize { mean, scale } => {
                if mean.len() != x.ncols() {
                    return Err(Error::DimensionMismatch { expected: mean.len(), got: x.ncols() });
                }
                Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - mean[j]) / scale[j]))
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Normalization::RowL2 => "row-l2",
            Normalization::Standardize { .. } => "standardize",
            Normalization::None => "none",
        }
    }
}

/// Number of training records for a split: `ceil(f N)`, kept within `[1, N - 1]`.
pub fn train_size(n: usize, train_fraction: f64) -> usize {
    let raw = (train_fraction * n as f64 - 1e-9).ceil() as usize;
    raw.clamp(1, n - 1)
}

/// Shuffled split into disjoint train and test sets. Each part keeps id order.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidInput(format!("train fraction must lie in (0, 1), got {train_fraction}")));
    }
    if ds.len() < 2 {
        return Err(Error::InvalidInput(format!("cannot split {} records", ds.len())));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    rng::shuffle(&mut order, &mut rng::seeded(seed));
    let n_train = train_size(ds.len(), train_fraction);
    let pick = |idx: &mut [usize]| {
        idx.sort_unstable();
        Dataset {
            records: idx.iter().map(|&k| ds.records[k].clone()).collect(),
            schema_version: ds.schema_version,
            provenance: ds.provenance.clone(),
        }
    };
    let (a, b) = order.split_at_mut(n_train);
    Ok((pick(a), pick(b)))
}

/// Human-readable description of the database CSV columns.
pub fn schema_markdown() -> String {
    let mut s = format!(
        "# Database schema (version {SCHEMA_VERSION})\n\n\
         One row per (surface, far-field displacement) pair. Empty cells mark values that\n\
         are unavailable because the record failed. Lengths in µm, curvatures in 1/µm.\n\n\
         | column | meaning |\n|---|---|\n"
    );
    let rows: [(&str, &str); 30] = [
        ("id", "sample id, `surface_index * deltas_per_surface + delta_index`"),
        ("seed", "RMD generator seed of the surface"),
        ("H", "Hurst exponent"),
        ("sigma0_um", "standard deviation of the first RMD pass"),
        ("delta_um", "far-field displacement"),
        ("mean_zp", "mean peak height"),
        ("rms_zp", "standard deviation of peak heights"),
        ("kurt_zp", "excess kurtosis of peak heights"),
        ("skew_zp", "skewness of peak heights"),
        ("rho_p", "peak density: peaks per interior profile node, rows and columns pooled"),
        ("mean_kp", "mean peak curvature"),
        ("kurt_kp", "excess kurtosis of peak curvatures"),
        ("skew_kp", "skewness of peak curvatures"),
        ("alpha_x", "bandwidth parameter m0 m4 / m2^2 of row profiles"),
        ("alpha_y", "bandwidth parameter of column profiles"),
        ("mean_za", "mean summit height"),
        ("rms_za", "standard deviation of summit heights"),
        ("kurt_za", "excess kurtosis of summit heights"),
        ("skew_za", "skewness of summit heights"),
        ("rho_a", "summit density: summits per interior node"),
        ("mean_ka", "mean summit curvature"),
        ("rms_ka", "standard deviation of summit curvatures"),
        ("kurt_ka", "excess kurtosis of summit curvatures"),
        ("skew_ka", "skewness of summit curvatures"),
        ("mean_z", "mean height above the lowest node"),
        ("max_z", "maximum height above the lowest node"),
        ("rms_z", "standard deviation of heights"),
        ("Ae_percent", "effective contact area, 100 n_c g^2 / L^2"),
        ("sim_time_s", "wall time of the contact solve (0 when timing is off)"),
        ("status", "`ok`, `solver-failed` or `degenerate-surface`"),
    ];
    for (c, m) in rows {
        s.push_str(&format!("| `{c}` | {m} |\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(count: usize) -> SamplingPlan {
        SamplingPlan { strata: SamplingPlan::default_strata(), count, seed: 11 }
    }

    #[test]
    fn stratified_counts() {
        let d = sample_displacements(&plan(1000)).unwrap();
        assert_eq!(d.len(), 1000);
        assert_eq!(d.iter().filter(|&&v| v <= 25.0).count(), 700);
        assert!(d.iter().all(|&v| (5.0..=45.0).contains(&v)));
    }

    #[test]
    fn single_sample_lands_in_heaviest_stratum() {
        let d = sample_displacements(&plan(1)).unwrap();
        assert_eq!(d.len(), 1);
        assert!(d[0] >= 5.0 && d[0] <= 25.0);
    }

    #[test]
    fn plan_errors() {
        assert!(matches!(sample_displacements(&plan(0)), Err(Error::Plan(_))));
        let mut p = plan(10);
        p.strata[1].weight = 0.5;
        assert!(p.validate().is_err());
        let mut p = plan(10);
        p.strata[1].lo = 26.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn strata_text_round_trip() {
        let p = plan(3);
        assert_eq!(parse_strata(&p.to_string()).unwrap(), p.strata);
        assert!(parse_strata("5-25:1").is_err());
    }

    #[test]
    fn config_round_trip_and_unknown_keys() {
        let c = DatabaseConfig { seed: 99, iterations: 5, timing: Timing::Off, ..Default::default() };
        assert_eq!(DatabaseConfig::parse(&c.to_text()).unwrap(), c);
        assert!(matches!(DatabaseConfig::parse("surfaces = 3\nbogus = 1\n"), Err(Error::Config(_))));
        assert!(matches!(DatabaseConfig::parse("surfaces = x\n"), Err(Error::Parse { line: 1, .. })));
        assert!(DatabaseConfig::parse("hurst_min = 0.9\nhurst_max = 0.5\n").is_err());
    }

    fn small_config() -> DatabaseConfig {
        DatabaseConfig {
            seed: 5,
            surfaces: 10,
            deltas_per_surface: 2,
            iterations: 4,
            timing: Timing::Off,
            ..Default::default()
        }
    }

    #[test]
    fn cartesian_record_count() {
        let report = build_database(&small_config()).unwrap();
        let ids: Vec<u64> = report.dataset.ids();
        assert_eq!(ids, (0..20).collect::<Vec<_>>());
        for pair in report.dataset.records.chunks(2) {
            assert_eq!(pair[0].seed, pair[1].seed);
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut ds = build_database(&small_config()).unwrap().dataset;
        ds.records[3] = failed_record(3, SurfaceDraw { seed: 1, hurst: 0.6, sigma0: 4.0 }, 7.0, Status::SolverFailed);
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        let mut again = Vec::new();
        back.write_csv(&mut again).unwrap();
        assert_eq!(buf, again);
        assert_eq!(back.records[3].status, Status::SolverFailed);
        assert!(back.records[3].effective_area.is_nan());
    }

    fn dummy(id: u64, status: Status) -> SampleRecord {
        let mut stats = [1.0; 22];
        stats[0] = id as f64;
        SampleRecord {
            id,
            seed: id,
            hurst: 0.6,
            sigma0: 5.0,
            delta: 10.0,
            stats: StatVector::from_array(stats),
            effective_area: 1.0,
            sim_time_s: 0.0,
            status,
        }
    }

    #[test]
    fn cleaning() {
        let ok = Dataset::new((0..10).map(|i| dummy(i, Status::Ok)).collect()).unwrap();
        let (c, removed) = clean(&ok);
        assert_eq!((c.clone(), removed), (ok, 0));
        let mixed: Vec<_> =
            (0..10).map(|i| dummy(i, if i % 3 == 1 { Status::SolverFailed } else { Status::Ok })).collect();
        let (c, removed) = clean(&Dataset::new(mixed).unwrap());
        assert_eq!((c.len(), removed), (7, 3));
        assert!(c.records.iter().all(|r| r.is_complete()));
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(Dataset::new(vec![dummy(1, Status::Ok), dummy(1, Status::Ok)]).is_err());
    }

    #[test]
    fn row_normalization() {
        let x = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 0.6, 0.8]);
        let y = normalize_rows(&x, &[0, 1]).unwrap();
        assert!((y[(0, 0)] - 0.6).abs() < 1e-15 && (y[(0, 1)] - 0.8).abs() < 1e-15);
        assert!((y[(1, 0)] - 0.6).abs() < 1e-12 && (y[(1, 1)] - 0.8).abs() < 1e-12);
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(normalize_rows(&z, &[4, 9]), Err(Error::ZeroNormRow { sample_id: 9 })));
    }

    #[test]
    fn standardization_centres_columns() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        let norm = Normalization::fit_standardize(&x);
        let y = norm.apply(&x, &[0, 1, 2]).unwrap();
        assert!(y.column(0).sum().abs() < 1e-12);
        assert!((y.column(0).norm_squared() / 3.0 - 1.0).abs() < 1e-12);
        assert!(y.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn split_sizes() {
        assert_eq!(train_size(10, 0.8), 8);
        assert_eq!(train_size(15_878, 0.8), 12_703);
        assert_eq!(15_878 - train_size(15_878, 0.8), 3_175);
        let ds = Dataset::new((0..10).map(|i| dummy(i, Status::Ok)).collect()).unwrap();
        let (tr, te) = split(&ds, 0.8, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        let a: HashSet<u64> = tr.ids().into_iter().collect();
        assert!(te.ids().iter().all(|i| !a.contains(i)));
        assert!(split(&Dataset::new(vec![dummy(0, Status::Ok)]).unwrap(), 0.8, 1).is_err());
        assert!(split(&ds, 1.0, 1).is_err());
    }

    #[test]
    fn split_replay() {
        let ds = Dataset::new((0..50).map(|i| dummy(i, Status::Ok)).collect()).unwrap();
        let (a, _) = split(&ds, 0.8, 3).unwrap();
        let (b, _) = split(&ds, 0.8, 3).unwrap();
        let (c, _) = split(&ds, 0.8, 4).unwrap();
        assert_eq!(a.ids(), b.ids());
        assert_ne!(a.ids(), c.ids());
        assert_eq!(a.len(), c.len());
    }
}
