use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use eigengreedy::cli::{
    cmd_bench, cmd_build_eig, cmd_build_gap, cmd_eval, cmd_gen, cmd_grid, cmd_verify,
    BuildOptions, GenSpec,
};
use eigengreedy::eigensolve::{ClusterTol, EigOptions};
use eigengreedy::gap_cert::GapWidthConvention;
use eigengreedy::Real;

/// Certified reduced-order models for the smallest eigenpair of parametric
/// Hermitian matrix families.
#[derive(Parser)]
#[command(name = "eigengreedy", version, about)]
struct Cli {
    /// Worker thread cap for grid sweeps (default: EIGENGREEDY_THREADS or
    /// all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Residual tolerance of the iterative eigensolver (relative).
    #[arg(long, default_value_t = 1e-14)]
    eig_tol: Real,
    /// Relative coalescence tolerance of the eigenvalue clustering.
    #[arg(long, default_value_t = 1e-8)]
    cluster_rel: Real,
    /// Absolute near-zero coalescence tolerance of the clustering.
    #[arg(long, default_value_t = 1e-14)]
    cluster_abs: Real,
    /// Dense eigensolver size limit; larger problems go matrix-free.
    #[arg(long, default_value_t = 4096)]
    dense_limit: usize,
    /// Seed for the deterministic solver start vectors.
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
}

impl SolverArgs {
    fn eig_options(&self) -> EigOptions<Real> {
        EigOptions {
            tol: self.eig_tol,
            cluster: ClusterTol {
                abs: self.cluster_abs,
                rel: self.cluster_rel,
            },
            dense_limit: self.dense_limit,
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a built-in model file.
    Gen {
        #[command(subcommand)]
        which: GenCommand,
    },
    /// Emit a Chebyshev-with-endpoints tensor grid over the model domain.
    Grid {
        #[arg(long)]
        model: PathBuf,
        /// Points per axis, comma separated (>= 2 each).
        #[arg(long, value_delimiter = ',')]
        counts: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the spectral-gap reduced model (stage one).
    BuildGap {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        /// Termination tolerance for the relative gap width.
        #[arg(long)]
        tol: Real,
        #[arg(long)]
        out: PathBuf,
        /// Keep the full basis in the ROM file (needed for lifting/verify).
        #[arg(long)]
        store_basis: bool,
        /// Write the per-iteration trace CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 400)]
        max_iterations: usize,
        /// Re-verify incremental Gramians against recomputation.
        #[arg(long)]
        paranoid: bool,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Build the eigenspace reduced model (stage two).
    BuildEig {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        /// Converged gap ROM from `build-gap` over the same grid.
        #[arg(long)]
        gap_rom: PathBuf,
        #[arg(long)]
        tol: Real,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        store_basis: bool,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 400)]
        max_iterations: usize,
        #[arg(long)]
        paranoid: bool,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Evaluate the reduced models at parameters with conditional
    /// certification; cost independent of the full dimension.
    Eval {
        #[arg(long)]
        eig_rom: PathBuf,
        #[arg(long)]
        gap_rom: PathBuf,
        /// CSV of parameters (one point per row).
        #[arg(long)]
        mu_file: PathBuf,
        /// Report CSV output path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write lifted eigenvectors here (requires a stored basis).
        #[arg(long)]
        lift: Option<PathBuf>,
        /// Use the relative gap-width convention for eps_mu.
        #[arg(long)]
        relative_gap_width: bool,
    },
    /// Full-order verification sweep of every certified claim.
    Verify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        gap_rom: PathBuf,
        #[arg(long)]
        eig_rom: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Wall-clock comparison of full-order and reduced solves.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        rom: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
        /// Measure only the reduced model.
        #[arg(long)]
        skip_fom: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

#[derive(Subcommand)]
enum GenCommand {
    /// Spin-1/2 xxz chain with open boundary.
    Xxz {
        #[arg(long, short = 'L')]
        length: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bilinear-biquadratic spin-1 chain with uniaxial anisotropy.
    Blbq {
        #[arg(long, short = 'L')]
        length: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded random dense symmetric quadratic family.
    Random {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// The analytic 3x3 diagonal family with degeneracies at +-1.
    Example1 {
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank-one family from Lagrange polynomials over the given nodes.
    Lagrange {
        /// Nodes in [-1, 1], comma separated, pairwise distinct.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        nodes: Vec<Real>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_or_print(out: Option<&PathBuf>, text: &str) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Exit contract: 0 all claims verified, 1 operational error, 2 claim
/// violation.
fn run(cli: Cli) -> Result<u8, Box<dyn std::error::Error + Send + Sync>> {
    match cli.command {
        Command::Gen { which } => {
            let (spec, out) = match which {
                GenCommand::Xxz { length, out } => (GenSpec::Xxz { length }, out),
                GenCommand::Blbq { length, out } => (GenSpec::Blbq { length }, out),
                GenCommand::Random { n, seed, out } => (GenSpec::Random { n, seed }, out),
                GenCommand::Example1 { out } => (GenSpec::Example1, out),
                GenCommand::Lagrange { nodes, out } => (GenSpec::Lagrange { nodes }, out),
            };
            cmd_gen(&spec, &out)?;
            Ok(0)
        }
        Command::Grid { model, counts, out } => {
            let count = cmd_grid(&model, &counts, &out)?;
            eprintln!("wrote {count} grid points to {}", out.display());
            Ok(0)
        }
        Command::BuildGap {
            model,
            grid,
            tol,
            out,
            store_basis,
            trace,
            max_iterations,
            paranoid,
            solver,
        } => {
            let opts = BuildOptions {
                tol,
                store_basis,
                trace_out: trace,
                max_iterations,
                eig: solver.eig_options(),
                paranoid,
            };
            let summary = cmd_build_gap(&model, &grid, &out, &opts)?;
            eprintln!(
                "gap ROM: r = {}, {} snapshots ({} enforcement), max indicator {:.3e}",
                summary.r,
                summary.snapshots,
                summary.enforcement_insertions,
                summary.final_max_estimator
            );
            Ok(0)
        }
        Command::BuildEig {
            model,
            grid,
            gap_rom,
            tol,
            out,
            store_basis,
            trace,
            max_iterations,
            paranoid,
            solver,
        } => {
            let opts = BuildOptions {
                tol,
                store_basis,
                trace_out: trace,
                max_iterations,
                eig: solver.eig_options(),
                paranoid,
            };
            let summary = cmd_build_eig(&model, &grid, &gap_rom, &out, &opts)?;
            eprintln!(
                "eigenspace ROM: r = {}, {} snapshots ({} enforcement), max estimator {:.3e}",
                summary.r,
                summary.snapshots,
                summary.enforcement_insertions,
                summary.final_max_estimator
            );
            Ok(0)
        }
        Command::Eval {
            eig_rom,
            gap_rom,
            mu_file,
            out,
            lift,
            relative_gap_width,
        } => {
            let eig_state = eigengreedy::subspace::load_rom::<Real>(&eig_rom)?;
            let mus = eigengreedy::affine::load_grid::<Real>(&mu_file, eig_state.p())?;
            let convention = if relative_gap_width {
                GapWidthConvention::Relative
            } else {
                GapWidthConvention::Absolute
            };
            let report = cmd_eval(&eig_rom, &gap_rom, &mus, convention, lift.as_deref())?;
            write_or_print(out.as_ref(), &report.csv)?;
            Ok(0)
        }
        Command::Verify {
            model,
            gap_rom,
            eig_rom,
            grid,
            out,
            solver,
        } => {
            let outcome = cmd_verify(&model, &gap_rom, &eig_rom, &grid, &solver.eig_options())?;
            write_or_print(out.as_ref(), &outcome.csv)?;
            if outcome.violations > 0 {
                eprintln!(
                    "{} of {} grid points violate certified claims",
                    outcome.violations, outcome.rows
                );
                Ok(2)
            } else {
                eprintln!("all certified claims hold on {} grid points", outcome.rows);
                Ok(0)
            }
        }
        Command::Bench {
            model,
            rom,
            grid,
            repetitions,
            skip_fom,
            out,
            solver,
        } => {
            let outcome = cmd_bench(
                &model,
                &rom,
                &grid,
                repetitions,
                skip_fom,
                &solver.eig_options(),
            )?;
            write_or_print(out.as_ref(), &outcome.csv)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are not errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let threads = cli.threads.or_else(|| {
        std::env::var("EIGENGREEDY_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    let result = match threads {
        Some(n) if n > 0 => {
            let pool = match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            pool.install(|| run(cli))
        }
        _ => run(cli),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
