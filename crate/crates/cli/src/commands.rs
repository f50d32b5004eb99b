//! Subcommand implementations.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use rough_contact::bem::{hertz_reference, paraboloid_field, solve_contact_with, LoadCase, Material, SolverOptions};
use rough_contact::dataset::{
    self, build_database, clean, parse_key_values, split, DatabaseConfig, Dataset, Normalization, Timing, FEATURE_NAMES,
};
use rough_contact::eval::{
    break_even, break_even_curve, compute_metrics, per_sample_prediction_time, write_curve_csv, BreakEven, CostLedger,
    MetricReport,
};
use rough_contact::kernel::{
    grid_search, kernel_from_combo, GpTrainer, KernelSpec, KrrTrainer, ModelKind, Surrogate, Trainer, TuningGrid,
};
use rough_contact::stats::{characterize, StatVector};
use rough_contact::surface::{rmd_generate, shift_to_datum, HeightField, SurfaceSpec};
use rough_contact::Error;

use crate::provenance::{read_input, Provenance};
use crate::{Cli, Command, KernelArg, ModelArg, NormArg, SolverArgs};

pub fn run(cli: Cli) -> Result<()> {
    let timing: Timing = cli.timing.into();
    match cli.command {
        Command::GenSurface { k, scan_length, hurst, sigma0, datum, seed, out } => {
            gen_surface(timing, k, scan_length, hurst, sigma0, datum, seed, out.as_deref())
        }
        Command::Stats { surface, out } => stats(timing, &surface, out.as_deref()),
        Command::Solve { surface, delta, solver, out } => solve(timing, &surface, delta, &solver, out.as_deref()),
        Command::HertzBench { radius, scan_length, n, delta_max, steps, solver, out } => {
            hertz_bench(timing, radius, scan_length, n, delta_max, steps, &solver, out.as_deref())
        }
        Command::BuildDb { config, seed, surfaces, deltas_per_surface, k, jobs, print_config, out } => {
            let overrides = DbOverrides { seed, surfaces, deltas_per_surface, k };
            build_db(timing, config.as_deref(), overrides, jobs, print_config, out.as_deref())
        }
        Command::Clean { db, out } => clean_db(timing, &db, &out),
        Command::Split { db, train_fraction, seed, train_out, test_out } => {
            split_db(timing, &db, train_fraction, seed, &train_out, &test_out)
        }
        Command::Tune { train, model, grid, gamma, folds, normalization, seed, jobs, out, best_out } => {
            let opts = TuneOptions { model, grid, gamma, folds, normalization, seed, jobs };
            tune(timing, &train, &opts, &out, best_out.as_deref())
        }
        Command::Train { train, params, model, kernel, gamma, lambda, normalization, out } => {
            let flags = TrainParams { model, kernel, gamma, lambda, normalization };
            train_model(timing, &train, params.as_deref(), flags, &out)
        }
        Command::Predict { model, input, variance, out } => predict(timing, &model, &input, variance, &out),
        Command::Evaluate { model, test, train, out, predictions_out } => {
            evaluate(timing, &model, &test, train.as_deref(), &out, predictions_out.as_deref())
        }
        Command::Cost { db, tuning, model, train, samples, seed, t_database, t_tune, t_fit, t_pred, t_bem, out } => {
            let given = LedgerFlags { t_database, t_tune, t_fit, t_pred, t_bem };
            let sources = CostSources { db, tuning, model, train, samples, seed };
            cost(timing, &sources, given, &out)
        }
        Command::BreakEven { ledger, t_database, t_tune, t_fit, t_pred, t_bem, curve_out, max_n, points, out } => {
            let given = LedgerFlags { t_database, t_tune, t_fit, t_pred, t_bem };
            break_even_cmd(timing, ledger.as_deref(), given, curve_out.as_deref(), max_n, points, out.as_deref())
        }
    }
}

/// Use the given seed or draw and announce a fresh one.
fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rough_contact::rng::fresh_seed();
        eprintln!("seed = {s} (generated)");
        s
    })
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidInput("--jobs must be at least 1".into()).into()),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(j).build().context("starting worker pool")?;
            Ok(pool.install(f))
        }
    }
}

fn read_dataset(prov: &mut Provenance, path: &Path) -> Result<Dataset> {
    let bytes = read_input(prov, path)?;
    Dataset::read_csv(&bytes[..]).with_context(|| format!("reading database {}", path.display()))
}

fn read_surface(prov: &mut Provenance, path: &Path) -> Result<HeightField> {
    let bytes = read_input(prov, path)?;
    HeightField::read_from(&bytes[..]).with_context(|| format!("reading surface {}", path.display()))
}

fn read_model(prov: &mut Provenance, path: &Path) -> Result<Surrogate> {
    let bytes = read_input(prov, path)?;
    Surrogate::read_from(&bytes[..]).with_context(|| format!("reading model {}", path.display()))
}

fn dataset_bytes(ds: &Dataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    ds.write_csv(&mut buf)?;
    Ok(buf)
}

/// Write to `out`, or to stdout without a sidecar.
fn emit(prov: &Provenance, out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => prov.write(path, bytes),
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn material(s: &SolverArgs) -> Result<Material> {
    Ok(Material::new(s.youngs, s.poisson)?)
}

fn solver_options(s: &SolverArgs) -> SolverOptions {
    SolverOptions { tol: s.tol, max_sweeps: s.max_sweeps, ..SolverOptions::default() }
}

#[allow(clippy::too_many_arguments)]
fn gen_surface(
    timing: Timing,
    k: u32,
    scan_length: f64,
    hurst: f64,
    sigma0: f64,
    datum: bool,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<()> {
    let spec = SurfaceSpec::new(scan_length, k, hurst, sigma0, 0);
    spec.validate()?;
    let seed = resolve_seed(seed);
    let mut field = rmd_generate(&SurfaceSpec { seed, ..spec })?;
    if datum {
        field = shift_to_datum(&field);
    }
    let mut buf = Vec::new();
    field.write_to(&mut buf)?;
    let mut prov = Provenance::new("gen-surface", timing);
    prov.seed = Some(seed);
    emit(&prov, out, &buf)
}

fn stats(timing: Timing, surface: &Path, out: Option<&Path>) -> Result<()> {
    let mut prov = Provenance::new("stats", timing);
    let field = read_surface(&mut prov, surface)?;
    let s = characterize(&field)?;
    let values: Vec<String> = s.to_array().iter().map(|v| v.to_string()).collect();
    let text = format!("{}\n{}\n", StatVector::COLUMNS.join(","), values.join(","));
    emit(&prov, out, text.as_bytes())
}

fn solve(timing: Timing, surface: &Path, delta: f64, solver: &SolverArgs, out: Option<&Path>) -> Result<()> {
    let mut prov = Provenance::new("solve", timing);
    let field = read_surface(&mut prov, surface)?;
    let sol = solve_contact_with(&field, LoadCase::new(delta)?, material(solver)?, &solver_options(solver))?;
    println!(
        "A_e = {} %  n_c = {}  force = {}  sweeps = {}  residual = {:e}",
        sol.effective_area, sol.contact_count, sol.total_force, sol.iterations, sol.complementarity_residual
    );
    if let Some(path) = out {
        let mut buf = Vec::new();
        sol.write_csv(&field, &mut buf)?;
        prov.write(path, &buf)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn hertz_bench(
    timing: Timing,
    radius: f64,
    scan_length: f64,
    n: usize,
    delta_max: f64,
    steps: usize,
    solver: &SolverArgs,
    out: Option<&Path>,
) -> Result<()> {
    if steps == 0 || delta_max.is_nan() || delta_max <= 0.0 {
        return Err(Error::InvalidInput("hertz-bench needs --steps >= 1 and --delta-max > 0".into()).into());
    }
    let mat = material(solver)?;
    let field = paraboloid_field(radius, scan_length, n)?;
    let mut text = String::from("delta,F_bem,F_analytical,Ae_bem,An_analytical\n");
    for i in 1..=steps {
        let delta = delta_max * i as f64 / steps as f64;
        let sol = solve_contact_with(&field, LoadCase::new(delta)?, mat, &solver_options(solver))?;
        let h = hertz_reference(radius, delta, mat, scan_length)?;
        text.push_str(&format!("{delta},{},{},{},{}\n", sol.total_force, h.force, sol.effective_area, h.area_percent));
    }
    emit(&Provenance::new("hertz-bench", timing), out, text.as_bytes())
}

struct DbOverrides {
    seed: Option<u64>,
    surfaces: Option<usize>,
    deltas_per_surface: Option<usize>,
    k: Option<u32>,
}

fn build_db(
    timing: Timing,
    config: Option<&Path>,
    o: DbOverrides,
    jobs: Option<usize>,
    print_config: bool,
    out: Option<&Path>,
) -> Result<()> {
    let mut prov = Provenance::new("build-db", timing);
    let (mut cfg, seed_in_file) = match config {
        Some(path) => {
            let text = String::from_utf8(read_input(&mut prov, path)?).context("config is not UTF-8")?;
            let has_seed = parse_key_values(&text)?.iter().any(|(_, k, _)| k == "seed");
            (DatabaseConfig::parse(&text)?, has_seed)
        }
        None => (DatabaseConfig::default(), false),
    };
    if let Some(s) = o.surfaces {
        cfg.surfaces = s;
    }
    if let Some(m) = o.deltas_per_surface {
        cfg.deltas_per_surface = m;
    }
    if let Some(k) = o.k {
        cfg.iterations = k;
    }
    cfg.timing = timing;
    cfg.validate()?;
    if print_config {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    cfg.seed = match o.seed {
        Some(s) => s,
        None if seed_in_file => cfg.seed,
        None => resolve_seed(None),
    };
    let report = with_jobs(jobs, || build_database(&cfg))??;
    eprintln!(
        "{} records, {} failed, {:.1} s wall",
        report.dataset.len(),
        report.failed,
        if timing == Timing::Wall { report.wall_time_s } else { 0.0 }
    );
    prov.seed = Some(cfg.seed);
    let prov = prov.with("config", cfg.to_text());
    let out = out.expect("clap requires --out");
    prov.write(out, &dataset_bytes(&report.dataset)?)
}

fn clean_db(timing: Timing, db: &Path, out: &Path) -> Result<()> {
    let mut prov = Provenance::new("clean", timing);
    let ds = read_dataset(&mut prov, db)?;
    let (cleaned, removed) = clean(&ds);
    eprintln!("kept {}, removed {removed}", cleaned.len());
    prov.with("removed", removed).write(out, &dataset_bytes(&cleaned)?)
}

fn split_db(
    timing: Timing,
    db: &Path,
    fraction: f64,
    seed: Option<u64>,
    train_out: &Path,
    test_out: &Path,
) -> Result<()> {
    let mut prov = Provenance::new("split", timing);
    let ds = read_dataset(&mut prov, db)?;
    let seed = resolve_seed(seed);
    let (train, test) = split(&ds, fraction, seed)?;
    eprintln!("train {}, test {}", train.len(), test.len());
    prov.seed = Some(seed);
    prov.write(train_out, &dataset_bytes(&train)?)?;
    prov.write(test_out, &dataset_bytes(&test)?)
}

fn model_kind(m: ModelArg) -> ModelKind {
    match m {
        ModelArg::Krr => ModelKind::Krr,
        ModelArg::Gp => ModelKind::Gp,
    }
}

fn fit_normalization(n: NormArg, x: &nalgebra::DMatrix<f64>) -> Normalization {
    match n {
        NormArg::RowL2 => Normalization::RowL2,
        NormArg::Standardize => Normalization::fit_standardize(x),
        NormArg::None => Normalization::None,
    }
}

fn norm_arg(name: &str) -> Result<NormArg> {
    match name {
        "row-l2" => Ok(NormArg::RowL2),
        "standardize" => Ok(NormArg::Standardize),
        "none" => Ok(NormArg::None),
        _ => Err(Error::Config(format!("unknown normalization `{name}`")).into()),
    }
}

/// Training inputs of a clean database. Failed records are rejected by id.
fn training_data(ds: &Dataset) -> Result<(nalgebra::DMatrix<f64>, nalgebra::DVector<f64>, Vec<u64>)> {
    if let Some(bad) = ds.records.iter().find(|r| r.status != dataset::Status::Ok) {
        return Err(
            Error::InvalidInput(format!("record {} has status {}; run `clean` first", bad.id, bad.status)).into()
        );
    }
    Ok((ds.feature_matrix(), ds.targets(), ds.ids()))
}

struct TuneOptions {
    model: ModelArg,
    grid: Option<PathBuf>,
    gamma: Option<f64>,
    folds: Option<usize>,
    normalization: NormArg,
    seed: Option<u64>,
    jobs: Option<usize>,
}

fn tune(timing: Timing, train: &Path, o: &TuneOptions, out: &Path, best_out: Option<&Path>) -> Result<()> {
    let mut prov = Provenance::new("tune", timing);
    let ds = read_dataset(&mut prov, train)?;
    let mut grid = match (&o.grid, o.model) {
        (Some(path), _) => {
            let text = String::from_utf8(read_input(&mut prov, path)?).context("grid file is not UTF-8")?;
            TuningGrid::parse(&text)?
        }
        (None, ModelArg::Krr) => TuningGrid::kernel_ridge_default(),
        (None, ModelArg::Gp) => {
            let gamma = o.gamma.ok_or_else(|| Error::InvalidInput("the built-in gp grid needs --gamma".into()))?;
            TuningGrid::gaussian_process_default(gamma)
        }
    };
    if let Some(f) = o.folds {
        grid.folds = f;
    }
    grid.validate()?;
    let seed = resolve_seed(o.seed);
    let (x, y, ids) = training_data(&ds)?;
    let norm = fit_normalization(o.normalization, &x);
    let xn = norm.apply(&x, &ids)?;
    let trainer: &(dyn Trainer + Sync) = match o.model {
        ModelArg::Krr => &KrrTrainer,
        ModelArg::Gp => &GpTrainer,
    };
    let start = Instant::now();
    let result = with_jobs(o.jobs, || grid_search(&xn, &y, &grid, trainer, seed))??;
    let wall = start.elapsed().as_secs_f64();
    let best = result.best_row();
    let params: Vec<String> = best.combination.iter().map(|(k, v)| format!("{k}={v}")).collect();
    eprintln!(
        "{} combinations, {} failed; best #{} ({}) score {}",
        result.rows.len(),
        result.failures().count(),
        best.id,
        params.join(" "),
        best.mean_score
    );
    if !best.mean_score.is_finite() {
        return Err(Error::InvalidInput("every grid combination failed".into()).into());
    }
    let mut buf = Vec::new();
    result.write_csv(&mut buf, timing)?;
    prov.seed = Some(seed);
    let mut prov = prov.with("normalization", norm.name()).with("grid", grid.to_text());
    if timing == Timing::Wall {
        prov = prov.with("tune_wall_s", wall);
    }
    prov.write(out, &buf)?;
    if let Some(path) = best_out {
        let kernel = kernel_from_combo(&best.combination)?;
        let reg_key = match o.model {
            ModelArg::Krr => "lambda",
            ModelArg::Gp => "noise",
        };
        let reg = best
            .combination
            .iter()
            .find(|(k, _)| k == reg_key)
            .and_then(|(_, v)| v.as_f64())
            .ok_or_else(|| Error::Config(format!("grid has no numeric `{reg_key}`")))?;
        let mut text = format!("model = {}\nkernel = {}\n", model_kind(o.model), kernel.family());
        if let Some(g) = kernel.gamma() {
            text.push_str(&format!("gamma = {g}\n"));
        }
        text.push_str(&format!("lambda = {reg}\nnormalization = {}\ncv_score = {}\n", norm.name(), best.mean_score));
        prov.write(path, text.as_bytes())?;
    }
    Ok(())
}

#[derive(Default)]
struct TrainParams {
    model: Option<ModelArg>,
    kernel: Option<KernelArg>,
    gamma: Option<f64>,
    lambda: Option<f64>,
    normalization: Option<NormArg>,
}

fn parse_params(text: &str) -> Result<TrainParams> {
    let mut p = TrainParams::default();
    let num = |line: usize, v: &str| -> Result<f64> {
        v.parse().map_err(|_| Error::Parse { line, msg: format!("invalid number `{v}`") }.into())
    };
    for (line, key, v) in parse_key_values(text)? {
        match key.as_str() {
            "model" => {
                p.model = Some(match v.parse::<ModelKind>()? {
                    ModelKind::Krr => ModelArg::Krr,
                    ModelKind::Gp => ModelArg::Gp,
                })
            }
            "kernel" => {
                p.kernel = Some(match v.as_str() {
                    "rbf" => KernelArg::Rbf,
                    "linear" => KernelArg::Linear,
                    _ => return Err(Error::Parse { line, msg: format!("unknown kernel `{v}`") }.into()),
                })
            }
            "gamma" => p.gamma = Some(num(line, &v)?),
            "lambda" | "noise" => p.lambda = Some(num(line, &v)?),
            "normalization" => p.normalization = Some(norm_arg(&v)?),
            "cv_score" => {}
            _ => return Err(Error::Config(format!("unknown key `{key}` at line {line}")).into()),
        }
    }
    Ok(p)
}

fn train_model(timing: Timing, train: &Path, params: Option<&Path>, flags: TrainParams, out: &Path) -> Result<()> {
    let mut prov = Provenance::new("train", timing);
    let file = match params {
        Some(path) => parse_params(&String::from_utf8(read_input(&mut prov, path)?).context("params not UTF-8")?)?,
        None => TrainParams::default(),
    };
    let model = flags.model.or(file.model).unwrap_or(ModelArg::Krr);
    let family = flags.kernel.or(file.kernel).unwrap_or(KernelArg::Rbf);
    let lambda =
        flags.lambda.or(file.lambda).ok_or_else(|| Error::InvalidInput("--lambda is required (or --params)".into()))?;
    let kernel = match family {
        KernelArg::Linear => KernelSpec::Linear,
        KernelArg::Rbf => KernelSpec::Rbf {
            gamma: flags
                .gamma
                .or(file.gamma)
                .ok_or_else(|| Error::InvalidInput("--gamma is required for the rbf kernel".into()))?,
        },
    };
    kernel.validate()?;
    let norm_arg = flags.normalization.or(file.normalization).unwrap_or(NormArg::RowL2);
    let ds = read_dataset(&mut prov, train)?;
    let (x, y, ids) = training_data(&ds)?;
    let norm = fit_normalization(norm_arg, &x);
    let names = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    let surrogate = Surrogate::fit(model_kind(model), kernel, lambda, norm, names, &x, &y, &ids)?;
    if timing == Timing::Wall {
        eprintln!("fit {} records in {:.3} s", ds.len(), surrogate.model.fit_time_s());
    }
    let mut buf = Vec::new();
    surrogate.write_to(&mut buf)?;
    if timing == Timing::Wall {
        prov = prov.with("fit_time_s", surrogate.model.fit_time_s());
    }
    prov.write(out, &buf)
}

fn predict(timing: Timing, model: &Path, input: &Path, variance: bool, out: &Path) -> Result<()> {
    let mut prov = Provenance::new("predict", timing);
    let surrogate = read_model(&mut prov, model)?;
    let ds = read_dataset(&mut prov, input)?;
    let (x, ids) = (ds.feature_matrix(), ds.ids());
    let mut text = String::new();
    if variance {
        let (mean, var) = surrogate.predict_with_variance(&x, &ids)?;
        text.push_str("id,prediction,variance\n");
        for (k, id) in ids.iter().enumerate() {
            text.push_str(&format!("{id},{},{}\n", mean[k], var[k]));
        }
    } else {
        let mean = surrogate.predict(&x, &ids)?;
        text.push_str("id,prediction\n");
        for (k, id) in ids.iter().enumerate() {
            text.push_str(&format!("{id},{}\n", mean[k]));
        }
    }
    prov.write(out, text.as_bytes())
}

fn metrics_of(surrogate: &Surrogate, ds: &Dataset) -> Result<(MetricReport, Vec<f64>)> {
    let (x, y, ids) = training_data(ds)?;
    let pred = surrogate.predict(&x, &ids)?;
    Ok((compute_metrics(y.as_slice(), pred.as_slice())?, pred.iter().copied().collect()))
}

fn evaluate(
    timing: Timing,
    model: &Path,
    test: &Path,
    train: Option<&Path>,
    out: &Path,
    predictions_out: Option<&Path>,
) -> Result<()> {
    let mut prov = Provenance::new("evaluate", timing);
    let surrogate = read_model(&mut prov, model)?;
    let mut reports = Vec::new();
    if let Some(path) = train {
        let ds = read_dataset(&mut prov, path)?;
        reports.push(("train".to_string(), metrics_of(&surrogate, &ds)?.0));
    }
    let test_ds = read_dataset(&mut prov, test)?;
    let (report, pred) = metrics_of(&surrogate, &test_ds)?;
    reports.push(("test".to_string(), report));
    print!("{}", MetricReport::table(&reports));
    let mut text = format!("{}\n", MetricReport::CSV_HEADER);
    for (label, r) in &reports {
        text.push_str(&r.csv_row(label));
        text.push('\n');
    }
    prov.write(out, text.as_bytes())?;
    if let Some(path) = predictions_out {
        let mut text = String::from("id,actual,predicted\n");
        for (r, p) in test_ds.records.iter().zip(&pred) {
            text.push_str(&format!("{},{},{p}\n", r.id, r.effective_area));
        }
        prov.write(path, text.as_bytes())?;
    }
    Ok(())
}

#[derive(Debug, Default, Clone, Copy)]
struct LedgerFlags {
    t_database: Option<f64>,
    t_tune: Option<f64>,
    t_fit: Option<f64>,
    t_pred: Option<f64>,
    t_bem: Option<f64>,
}

impl LedgerFlags {
    /// Fill unset entries from `other`.
    fn or(self, other: LedgerFlags) -> LedgerFlags {
        LedgerFlags {
            t_database: self.t_database.or(other.t_database),
            t_tune: self.t_tune.or(other.t_tune),
            t_fit: self.t_fit.or(other.t_fit),
            t_pred: self.t_pred.or(other.t_pred),
            t_bem: self.t_bem.or(other.t_bem),
        }
    }

    fn complete(self) -> Result<CostLedger> {
        let need = |v: Option<f64>, what: &str| {
            v.ok_or_else(|| anyhow::Error::new(Error::InvalidInput(format!("{what} is unknown; pass it explicitly"))))
        };
        let ledger = CostLedger {
            t_database_s: need(self.t_database, "database cost")?,
            t_tune_s: need(self.t_tune, "tuning cost")?,
            t_fit_s: need(self.t_fit, "fit cost")?,
            t_pred_per_sample_s: need(self.t_pred, "per-sample prediction cost")?,
            mean_bem_time_s: need(self.t_bem, "mean simulation time")?,
        };
        ledger.validate()?;
        Ok(ledger)
    }
}

/// Parse the `quantity,seconds` CSV written by [`CostLedger::to_csv`].
fn parse_ledger(text: &str) -> Result<LedgerFlags> {
    let mut l = LedgerFlags::default();
    for (k, line) in text.lines().enumerate().skip(1) {
        let Some((name, v)) = line.split_once(',') else { continue };
        let v: f64 = v.trim().parse().map_err(|_| Error::Parse { line: k + 1, msg: format!("bad duration `{v}`") })?;
        match name.trim() {
            "t_database" => l.t_database = Some(v),
            "t_tune" => l.t_tune = Some(v),
            "t_fit" => l.t_fit = Some(v),
            "t_pred_per_sample" => l.t_pred = Some(v),
            "mean_bem_time" => l.t_bem = Some(v),
            other => return Err(Error::Parse { line: k + 1, msg: format!("unknown quantity `{other}`") }.into()),
        }
    }
    Ok(l)
}

struct CostSources {
    db: Option<PathBuf>,
    tuning: Option<PathBuf>,
    model: Option<PathBuf>,
    train: Option<PathBuf>,
    samples: usize,
    seed: Option<u64>,
}

/// Sum of the `fit_time_s` column of a tuning CSV.
fn tuning_time(text: &str) -> Result<f64> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse { line: 1, msg: "empty tuning CSV".into() })?;
    let col = header
        .split(',')
        .position(|h| h == "fit_time_s")
        .ok_or_else(|| Error::Parse { line: 1, msg: "tuning CSV has no fit_time_s column".into() })?;
    let mut total = 0.0;
    for (k, line) in lines.enumerate() {
        let cell = line.split(',').nth(col).unwrap_or("");
        total +=
            cell.parse::<f64>().map_err(|_| Error::Parse { line: k + 2, msg: format!("bad fit time `{cell}`") })?;
    }
    Ok(total)
}

fn cost(timing: Timing, src: &CostSources, given: LedgerFlags, out: &Path) -> Result<()> {
    let mut prov = Provenance::new("cost", timing);
    let mut measured = LedgerFlags::default();
    if let Some(path) = &src.db {
        let ds = read_dataset(&mut prov, path)?;
        let ok: Vec<f64> = ds.records.iter().filter(|r| r.sim_time_s.is_finite()).map(|r| r.sim_time_s).collect();
        if ok.is_empty() {
            return Err(Error::InvalidInput("database has no timed records".into()).into());
        }
        let total: f64 = ok.iter().sum();
        measured.t_database = Some(total);
        measured.t_bem = Some(total / ok.len() as f64);
    }
    if let Some(path) = &src.tuning {
        let text = String::from_utf8(read_input(&mut prov, path)?).context("tuning CSV is not UTF-8")?;
        measured.t_tune = Some(tuning_time(&text)?);
    }
    let mut reference = None;
    if let Some(path) = &src.train {
        reference = Some(read_dataset(&mut prov, path)?);
    }
    if let Some(path) = &src.model {
        let surrogate = read_model(&mut prov, path)?;
        let ds = reference
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("--model needs --train to bound the timing inputs".into()))?;
        let (x, y, ids) = training_data(ds)?;
        if given.t_fit.is_none() {
            let m = &surrogate.model;
            let start = Instant::now();
            Surrogate::fit(
                m.kind(),
                m.kernel(),
                m.regularization(),
                surrogate.normalization.clone(),
                surrogate.feature_names.clone(),
                &x,
                &y,
                &ids,
            )?;
            measured.t_fit = Some(start.elapsed().as_secs_f64());
        }
        if given.t_pred.is_none() {
            let seed = resolve_seed(src.seed);
            prov.seed = Some(seed);
            let ids: Vec<u64> = (0..src.samples as u64).collect();
            let t = per_sample_prediction_time(&x, src.samples, seed, |inputs| {
                surrogate.predict(inputs, &ids).map(|_| ())
            })?;
            measured.t_pred = Some(t);
        }
    }
    let mut ledger = given.or(measured).complete()?;
    if timing == Timing::Off {
        // Measured durations are replaced by zero; explicit flags are kept.
        let keep = |flag: Option<f64>, v: f64| if flag.is_some() { v } else { 0.0 };
        ledger.t_fit_s = keep(given.t_fit, ledger.t_fit_s);
        ledger.t_pred_per_sample_s = keep(given.t_pred, ledger.t_pred_per_sample_s);
    }
    print!("{}", ledger.to_csv());
    prov.write(out, ledger.to_csv().as_bytes())
}

fn break_even_cmd(
    timing: Timing,
    ledger: Option<&Path>,
    given: LedgerFlags,
    curve_out: Option<&Path>,
    max_n: Option<u64>,
    points: usize,
    out: Option<&Path>,
) -> Result<()> {
    let mut prov = Provenance::new("break-even", timing);
    let from_file = match ledger {
        Some(path) => parse_ledger(&String::from_utf8(read_input(&mut prov, path)?).context("ledger is not UTF-8")?)?,
        None => LedgerFlags::default(),
    };
    let ledger = given.or(from_file).complete()?;
    let result = break_even(&ledger)?;
    let summary = match result {
        BreakEven::At(n) => {
            println!("break-even after {n} evaluations");
            n.to_string()
        }
        BreakEven::NeverProfitable => {
            println!("never profitable: predicting is not cheaper than simulating");
            "never".to_string()
        }
    };
    if let Some(path) = out {
        let text = format!(
            "quantity,value\nfixed_cost_s,{}\nsaving_per_evaluation_s,{}\nbreak_even,{summary}\n",
            ledger.fixed_cost(),
            ledger.mean_bem_time_s - ledger.t_pred_per_sample_s
        );
        prov.write(path, text.as_bytes())?;
    }
    if let Some(path) = curve_out {
        let max_n = max_n.unwrap_or(match result {
            BreakEven::At(n) => (2 * n).max(10),
            BreakEven::NeverProfitable => 1000,
        });
        let mut buf = Vec::new();
        write_curve_csv(&break_even_curve(&ledger, max_n, points), &mut buf)?;
        prov.write(path, &buf)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_csv_round_trip() {
        let l = CostLedger {
            t_pred_per_sample_s: 1e-4,
            t_fit_s: 2.5,
            t_tune_s: 30.0,
            t_database_s: 900.0,
            mean_bem_time_s: 3.0,
        };
        assert_eq!(parse_ledger(&l.to_csv()).unwrap().complete().unwrap(), l);
    }

    #[test]
    fn explicit_flags_override_ledger() {
        let file = LedgerFlags {
            t_database: Some(1.0),
            t_tune: Some(1.0),
            t_fit: Some(1.0),
            t_pred: Some(0.0),
            t_bem: Some(1.0),
        };
        let flags = LedgerFlags { t_bem: Some(7.0), ..Default::default() };
        assert_eq!(flags.or(file).complete().unwrap().mean_bem_time_s, 7.0);
        assert!(LedgerFlags::default().complete().is_err());
    }

    #[test]
    fn params_file_parses() {
        let p = parse_params(
            "model = gp\nkernel = rbf\ngamma = 2\nlambda = 0.01\nnormalization = standardize\ncv_score = 3\n",
        )
        .unwrap();
        assert_eq!(p.model, Some(ModelArg::Gp));
        assert_eq!(p.gamma, Some(2.0));
        assert_eq!(p.lambda, Some(0.01));
        assert_eq!(p.normalization, Some(NormArg::Standardize));
        assert!(parse_params("colour = red").is_err());
    }

    #[test]
    fn tuning_time_sums_column() {
        let csv = "combination,lambda,fold_1,mean_score,fit_time_s,error\n0,1,2,2,0.5,\n1,2,3,3,1.25,\n";
        assert_eq!(tuning_time(csv).unwrap(), 1.75);
    }
}
