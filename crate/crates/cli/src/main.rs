//! `rough-contact`: the surface, contact and surrogate workflow from the command line.
//!
//! Exit codes: 0 success, 2 invalid arguments, 3 validation failure, 4 runtime failure.

mod commands;
mod provenance;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rough_contact::dataset::Timing;

#[derive(Debug, Parser)]
#[command(name = "rough-contact", version, about = "Rough-surface contact simulation and kernel surrogate modeling")]
pub struct Cli {
    /// Record wall-clock durations (`wall`) or write zeros in their place (`off`) so that
    /// outputs are byte-reproducible. Applies to every artifact and provenance file.
    #[arg(long, global = true, value_enum, default_value_t = TimingArg::Wall)]
    pub timing: TimingArg,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TimingArg {
    Wall,
    Off,
}

impl From<TimingArg> for Timing {
    fn from(t: TimingArg) -> Self {
        match t {
            TimingArg::Wall => Timing::Wall,
            TimingArg::Off => Timing::Off,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    /// Kernel ridge regression.
    Krr,
    /// Gaussian process regression.
    Gp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    /// Scale each feature row to unit Euclidean norm.
    RowL2,
    /// Centre and scale each feature with training-set statistics.
    Standardize,
    /// Use raw features.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Rbf,
    Linear,
}

/// Elastic half-space and solver settings shared by the contact commands.
#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Young's modulus of the half-space. Pressures and forces come out in this unit.
    #[arg(long, default_value_t = 1.0)]
    pub youngs: f64,
    /// Poisson ratio of the half-space.
    #[arg(long, default_value_t = 0.3)]
    pub poisson: f64,
    /// Relative tolerance of the active-set solver.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Maximum number of active-set sweeps before reporting a stall.
    #[arg(long, default_value_t = 100)]
    pub max_sweeps: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a self-affine surface by random midpoint displacement.
    GenSurface {
        /// Refinement passes; the surface has 2^k + 1 points per side.
        #[arg(long)]
        k: u32,
        /// Scan length L of the square patch (µm).
        #[arg(long = "L", default_value_t = 1000.0)]
        scan_length: f64,
        /// Hurst exponent in (0, 1).
        #[arg(long, default_value_t = 0.65)]
        hurst: f64,
        /// Standard deviation of the first perturbation pass (µm).
        #[arg(long, default_value_t = 10.0)]
        sigma0: f64,
        /// Shift heights so the lowest point sits at zero.
        #[arg(long)]
        datum: bool,
        /// Master seed. A random seed is generated, printed and recorded when omitted.
        #[arg(long)]
        seed: Option<u64>,
        /// Output surface file. Written to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the 22 statistical descriptors of a surface file.
    Stats {
        /// Input surface file.
        #[arg(long)]
        surface: PathBuf,
        /// Output CSV (header plus one row). Written to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the frictionless contact of a rigid rough surface on an elastic half-space.
    Solve {
        /// Input surface file.
        #[arg(long)]
        surface: PathBuf,
        /// Far-field displacement Δ (µm).
        #[arg(long)]
        delta: f64,
        #[command(flatten)]
        solver: SolverArgs,
        /// Per-node CSV of pressures, gaps and contact flags.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the solver against the Hertzian paraboloid solution.
    HertzBench {
        /// Paraboloid radius R (µm).
        #[arg(long = "R", default_value_t = 5000.0)]
        radius: f64,
        /// Scan length L (µm).
        #[arg(long = "L", default_value_t = 1000.0)]
        scan_length: f64,
        /// Grid points per side.
        #[arg(long, default_value_t = 129)]
        n: usize,
        /// Largest displacement (µm); the sweep is delta_max·i/steps for i = 1..=steps.
        #[arg(long, default_value_t = 1.0)]
        delta_max: f64,
        /// Number of displacements in the sweep.
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[command(flatten)]
        solver: SolverArgs,
        /// Output CSV (delta, F_bem, F_analytical, Ae_bem, An_analytical). Stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a database of surface statistics and simulated contact areas.
    BuildDb {
        /// key = value configuration file; unset keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed; overrides the config file. Generated and printed when neither sets it.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of surfaces; overrides the config file.
        #[arg(long)]
        surfaces: Option<usize>,
        /// Displacements simulated per surface; overrides the config file.
        #[arg(long)]
        deltas_per_surface: Option<usize>,
        /// RMD refinement passes; overrides the config file.
        #[arg(long)]
        k: Option<u32>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Print the effective configuration with defaults filled in and exit.
        #[arg(long)]
        print_config: bool,
        /// Output database CSV.
        #[arg(long, required_unless_present = "print_config")]
        out: Option<PathBuf>,
    },
    /// Drop failed and incomplete records from a database.
    Clean {
        /// Input database CSV.
        #[arg(long)]
        db: PathBuf,
        /// Output database CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Shuffle a database into disjoint train and test sets.
    Split {
        /// Input database CSV.
        #[arg(long)]
        db: PathBuf,
        /// Fraction of records assigned to the training set.
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        /// Shuffle seed. Generated and printed when omitted.
        #[arg(long)]
        seed: Option<u64>,
        /// Output training CSV.
        #[arg(long)]
        train_out: PathBuf,
        /// Output test CSV.
        #[arg(long)]
        test_out: PathBuf,
    },
    /// Grid search with k-fold cross-validation.
    Tune {
        /// Training database CSV.
        #[arg(long)]
        train: PathBuf,
        /// Model type.
        #[arg(long, value_enum, default_value_t = ModelArg::Krr)]
        model: ModelArg,
        /// Grid file (`param.<name> = log:lo:hi:n | lin:lo:hi:n | a,b,..`, `folds`, `scoring`).
        /// Without it the built-in grid for the model is used.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// RBF γ held fixed by the built-in Gaussian process grid.
        #[arg(long)]
        gamma: Option<f64>,
        /// Number of folds; overrides the grid.
        #[arg(long)]
        folds: Option<usize>,
        /// Feature preprocessing applied before tuning.
        #[arg(long, value_enum, default_value_t = NormArg::RowL2)]
        normalization: NormArg,
        /// Fold assignment seed. Generated and printed when omitted.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Output CSV with one row per combination.
        #[arg(long)]
        out: PathBuf,
        /// Parameter file of the best combination, readable by `train --params`.
        #[arg(long)]
        best_out: Option<PathBuf>,
    },
    /// Fit a surrogate on a database and save it.
    Train {
        /// Training database CSV.
        #[arg(long)]
        train: PathBuf,
        /// Parameter file written by `tune --best-out`. Explicit flags take precedence.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Model type [default: krr].
        #[arg(long, value_enum)]
        model: Option<ModelArg>,
        /// Kernel family [default: rbf].
        #[arg(long, value_enum)]
        kernel: Option<KernelArg>,
        /// RBF γ; required for the rbf kernel.
        #[arg(long)]
        gamma: Option<f64>,
        /// Regularization λ; for a Gaussian process this is the noise variance.
        #[arg(long, alias = "noise")]
        lambda: Option<f64>,
        /// Feature preprocessing [default: row-l2].
        #[arg(long, value_enum)]
        normalization: Option<NormArg>,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict effective contact areas for the records of a database.
    Predict {
        /// Model file.
        #[arg(long)]
        model: PathBuf,
        /// Database CSV providing the feature columns.
        #[arg(long)]
        input: PathBuf,
        /// Also write the predictive variance (Gaussian process models only).
        #[arg(long)]
        variance: bool,
        /// Output CSV (id, prediction[, variance]).
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy metrics of a model on a labelled database.
    Evaluate {
        /// Model file.
        #[arg(long)]
        model: PathBuf,
        /// Test database CSV.
        #[arg(long)]
        test: PathBuf,
        /// Training database CSV, reported alongside the test metrics.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Output metrics CSV.
        #[arg(long)]
        out: PathBuf,
        /// Per-record CSV (id, actual, predicted).
        #[arg(long)]
        predictions_out: Option<PathBuf>,
    },
    /// Assemble the cost ledger of a surrogate from artifacts and measurements.
    Cost {
        /// Database whose recorded simulation times give the database cost and mean simulation time.
        #[arg(long)]
        db: Option<PathBuf>,
        /// Tuning CSV whose fit times are summed into the tuning cost.
        #[arg(long)]
        tuning: Option<PathBuf>,
        /// Model file; its per-sample prediction time is measured.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Training database; the model is refitted on it to measure the fit time.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Number of random inputs for the prediction timing.
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        /// Seed of the timing inputs. Generated and printed when omitted.
        #[arg(long)]
        seed: Option<u64>,
        /// Database cost (s); overrides --db.
        #[arg(long)]
        t_database: Option<f64>,
        /// Tuning cost (s); overrides --tuning.
        #[arg(long)]
        t_tune: Option<f64>,
        /// Fit cost (s); overrides --train.
        #[arg(long)]
        t_fit: Option<f64>,
        /// Prediction cost per sample (s); overrides --model.
        #[arg(long)]
        t_pred: Option<f64>,
        /// Mean simulation time (s); overrides --db.
        #[arg(long)]
        t_bem: Option<f64>,
        /// Output ledger CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Number of evaluations after which the surrogate pays for itself.
    BreakEven {
        /// Ledger CSV written by `cost`.
        #[arg(long, required_unless_present_all = ["t_database", "t_tune", "t_fit", "t_pred", "t_bem"])]
        ledger: Option<PathBuf>,
        /// Database cost (s); overrides the ledger.
        #[arg(long)]
        t_database: Option<f64>,
        /// Tuning cost (s); overrides the ledger.
        #[arg(long)]
        t_tune: Option<f64>,
        /// Fit cost (s); overrides the ledger.
        #[arg(long)]
        t_fit: Option<f64>,
        /// Prediction cost per sample (s); overrides the ledger.
        #[arg(long)]
        t_pred: Option<f64>,
        /// Mean simulation time (s); overrides the ledger.
        #[arg(long)]
        t_bem: Option<f64>,
        /// Cost curve CSV (n, reference_s, surrogate_s).
        #[arg(long)]
        curve_out: Option<PathBuf>,
        /// Largest evaluation count on the curve [default: twice the break-even point, or 1000].
        #[arg(long)]
        max_n: Option<u64>,
        /// Number of curve points.
        #[arg(long, default_value_t = 200)]
        points: usize,
        /// Summary CSV (quantity, value).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<rough_contact::Error>() {
        Some(e) if e.is_validation() => 3,
        _ => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn every_flag_is_documented() {
        let cmd = Cli::command();
        for sub in cmd.get_subcommands() {
            assert!(sub.get_about().is_some(), "{} lacks a description", sub.get_name());
            for arg in sub.get_arguments() {
                let id = arg.get_id().as_str();
                if id == "help" || id == "version" {
                    continue;
                }
                assert!(arg.get_help().is_some(), "{} --{id} lacks help", sub.get_name());
            }
        }
    }

    #[test]
    fn validation_errors_map_to_exit_3() {
        let e = anyhow::Error::new(rough_contact::Error::InvalidInput("x".into()));
        assert_eq!(exit_code(&e), 3);
        let e = anyhow::Error::new(rough_contact::Error::SolverStall { sweeps: 1, residual: 1.0 });
        assert_eq!(exit_code(&e), 4);
        assert_eq!(exit_code(&anyhow::anyhow!("io")), 4);
    }
}
