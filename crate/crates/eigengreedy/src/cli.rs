//! Command implementations behind the binary: model generation, grid
//! emission, the two offline builds, online evaluation with conditional
//! certification, the oracle verification sweep, and timing comparisons.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::affine::{
    chebyshev_grid, load_grid, load_model, save_grid, save_model, AffineFamily, ModelError,
    ParameterGrid,
};
use crate::eigensolve::{solve_clustered, EigOptions, EigenError};
use crate::gap_cert::{
    check_dim_condition, conditional_certify_online, f_diagnostics, gap_bounds, CertifyOutcome,
    GapWidthConvention,
};
use crate::generators;
use crate::greedy::{greedy_eigenspace, greedy_gap, GreedyConfig, GreedyError, GreedyTrace};
use crate::lowerbounds::{BoundError, MuEval};
use crate::subspace::{load_rom, projector_distance, save_rom, RomState, SubspaceError};
use crate::Real;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Subspace(#[from] SubspaceError),
    #[error(transparent)]
    Greedy(#[from] GreedyError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error("invalid arguments: {0}")]
    BadArgs(String),
}

/// Formats a float with 17 significant digits (reproducible reports).
fn fmt17(x: Real) -> String {
    format!("{x:.16e}")
}

// ---------------------------------------------------------------------------
// gen / grid
// ---------------------------------------------------------------------------

/// Which built-in family to generate.
#[derive(Debug, Clone)]
pub enum GenSpec {
    Xxz { length: usize },
    Blbq { length: usize },
    Random { n: usize, seed: u64 },
    Example1,
    Lagrange { nodes: Vec<Real> },
}

pub fn cmd_gen(spec: &GenSpec, out: &Path) -> Result<(), CliError> {
    let family: AffineFamily<Real> = match spec {
        GenSpec::Xxz { length } => generators::xxz_family(*length)?,
        GenSpec::Blbq { length } => generators::blbq_family(*length)?,
        GenSpec::Random { n, seed } => generators::random_quadratic_family(*n, *seed)?,
        GenSpec::Example1 => generators::example1_family(),
        GenSpec::Lagrange { nodes } => generators::lagrange_rank_one_family(nodes)?,
    };
    save_model(&family, out)?;
    log::info!(
        "wrote model n={} Q={} p={} to {}",
        family.n(),
        family.q(),
        family.p(),
        out.display()
    );
    Ok(())
}

pub fn cmd_grid(model: &Path, counts: &[usize], out: &Path) -> Result<usize, CliError> {
    let family: AffineFamily<Real> = load_model(model)?;
    let grid = chebyshev_grid(family.domain(), counts)?;
    save_grid(&grid, out)?;
    Ok(grid.len())
}

// ---------------------------------------------------------------------------
// build-gap / build-eig
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub tol: Real,
    pub store_basis: bool,
    pub trace_out: Option<PathBuf>,
    pub max_iterations: usize,
    pub eig: EigOptions<Real>,
    pub paranoid: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            store_basis: false,
            trace_out: None,
            max_iterations: 400,
            eig: EigOptions::default(),
            paranoid: false,
        }
    }
}

fn trace_to_csv(trace: &GreedyTrace<Real>, p: usize) -> String {
    let mut out = String::new();
    let mu_cols: Vec<String> = (0..p).map(|k| format!("mu{k}")).collect();
    writeln!(
        out,
        "iteration,{},estimator,h_term,residual_term,denominator,ell,r_after,forced",
        mu_cols.join(",")
    )
    .unwrap();
    for row in &trace.rows {
        let mu: Vec<String> = row.mu.iter().map(|x| fmt17(*x)).collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            row.iteration,
            mu.join(","),
            fmt17(row.estimator),
            fmt17(row.h_term),
            fmt17(row.residual_term),
            fmt17(row.denominator),
            row.ell,
            row.r_after,
            row.forced
        )
        .unwrap();
    }
    out
}

pub struct BuildSummary {
    pub r: usize,
    pub snapshots: usize,
    pub final_max_estimator: Real,
    pub enforcement_insertions: usize,
}

fn finish_build(
    family: &AffineFamily<Real>,
    mut state: RomState<Real>,
    trace: GreedyTrace<Real>,
    out: &Path,
    opts: &BuildOptions,
) -> Result<BuildSummary, CliError> {
    if opts.paranoid {
        let worst = state.verify_gramians(family)?;
        log::info!("paranoid gramian recheck: worst deviation {worst:.3e}");
        if worst > 1e-8 {
            return Err(CliError::BadArgs(format!(
                "incremental gramians deviate from recomputation by {worst:.3e}"
            )));
        }
    }
    if let Some(trace_path) = &opts.trace_out {
        std::fs::write(trace_path, trace_to_csv(&trace, state.p()))?;
    }
    let summary = BuildSummary {
        r: state.r(),
        snapshots: state.snapshots().len(),
        final_max_estimator: trace.final_max_estimator,
        enforcement_insertions: trace.enforcement_insertions,
    };
    if !opts.store_basis {
        state.strip_basis();
    }
    save_rom(&state, out)?;
    Ok(summary)
}

pub fn cmd_build_gap(
    model: &Path,
    grid_path: &Path,
    out: &Path,
    opts: &BuildOptions,
) -> Result<BuildSummary, CliError> {
    let family: AffineFamily<Real> = load_model(model)?;
    let grid = load_grid(grid_path, family.p())?;
    let mut config = GreedyConfig::new(grid, opts.tol);
    config.max_iterations = opts.max_iterations;
    config.eig = opts.eig;
    let (state, trace) = greedy_gap(&family, &config)?;
    log::info!(
        "gap subspace: r = {}, {} snapshots, max indicator {:.3e}",
        state.r(),
        state.snapshots().len(),
        trace.final_max_estimator
    );
    finish_build(&family, state, trace, out, opts)
}

pub fn cmd_build_eig(
    model: &Path,
    grid_path: &Path,
    gap_rom: &Path,
    out: &Path,
    opts: &BuildOptions,
) -> Result<BuildSummary, CliError> {
    let family: AffineFamily<Real> = load_model(model)?;
    let grid = load_grid(grid_path, family.p())?;
    let gap_state = load_rom(gap_rom)?;
    let mut config = GreedyConfig::new(grid, opts.tol);
    config.max_iterations = opts.max_iterations;
    config.eig = opts.eig;
    let (state, trace) = greedy_eigenspace(&family, &gap_state, &config)?;
    log::info!(
        "eigenspace subspace: r = {}, {} snapshots, max estimator {:.3e}",
        state.r(),
        state.snapshots().len(),
        trace.final_max_estimator
    );
    finish_build(&family, state, trace, out, opts)
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EvalRow {
    pub mu: Vec<Real>,
    pub lambda1_v: Real,
    pub m1_v: usize,
    pub outcome: CertifyOutcome<Real>,
}

pub struct EvalReport {
    pub csv: String,
    pub rows: Vec<EvalRow>,
}

/// Online evaluation at a list of parameters: reduced ground data and the
/// conditionally certified error bound. No n-dimensional work happens unless
/// lifted vectors are requested (which requires a stored basis).
pub fn cmd_eval(
    eig_rom: &Path,
    gap_rom: &Path,
    mus: &ParameterGrid<Real>,
    convention: GapWidthConvention,
    lift_out: Option<&Path>,
) -> Result<EvalReport, CliError> {
    let eig_state = load_rom(eig_rom)?;
    let gap_state = load_rom(gap_rom)?;
    let margin = crate::gap_cert::default_dim_margin::<Real>();
    let mut rows = Vec::with_capacity(mus.len());
    let mut csv = String::new();
    let p = eig_state.p();
    let mu_cols: Vec<String> = (0..p).map(|k| format!("mu{k}")).collect();
    writeln!(
        csv,
        "{},lambda1_v,m1_v,status,eps_mu,bound,coeffs",
        mu_cols.join(",")
    )
    .unwrap();
    let mut lifted_csv = String::new();
    for mu in &mus.points {
        let ev = MuEval::new(&eig_state, mu)?;
        let outcome = conditional_certify_online(&gap_state, &eig_state, mu, convention, margin)?;
        let (status, eps_mu, bound) = match outcome {
            CertifyOutcome::Certified { bound, eps_mu } => {
                ("certified".to_string(), fmt17(eps_mu), fmt17(bound))
            }
            CertifyOutcome::DimConditionFailed => {
                ("dim-condition-failed".to_string(), String::new(), String::new())
            }
            CertifyOutcome::GapWidthTooLarge { eps_mu } => {
                ("gap-width-too-large".to_string(), fmt17(eps_mu), String::new())
            }
        };
        let block = ev.red.ground_block();
        let mut coeffs = String::new();
        for j in 0..block.ncols() {
            for i in 0..block.nrows() {
                let v = block[(i, j)];
                if !coeffs.is_empty() {
                    coeffs.push(' ');
                }
                write!(coeffs, "{} {}", fmt17(v.re), fmt17(v.im)).unwrap();
            }
        }
        let mu_str: Vec<String> = mu.iter().map(|x| fmt17(*x)).collect();
        writeln!(
            csv,
            "{},{},{},{status},{eps_mu},{bound},{coeffs}",
            mu_str.join(","),
            fmt17(ev.red.lambda1()),
            ev.red.m1()
        )
        .unwrap();
        if lift_out.is_some() {
            let lifted = eig_state.lift(&block)?;
            for j in 0..lifted.ncols() {
                let col: Vec<String> = (0..lifted.nrows())
                    .map(|i| format!("{} {}", fmt17(lifted[(i, j)].re), fmt17(lifted[(i, j)].im)))
                    .collect();
                writeln!(lifted_csv, "{},{},{}", mu_str.join(","), j, col.join(" ")).unwrap();
            }
        }
        rows.push(EvalRow {
            mu: mu.clone(),
            lambda1_v: ev.red.lambda1(),
            m1_v: ev.red.m1(),
            outcome,
        });
    }
    if let Some(path) = lift_out {
        std::fs::write(path, lifted_csv)?;
    }
    Ok(EvalReport { csv, rows })
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

pub struct VerifyOutcome {
    pub csv: String,
    pub violations: usize,
    pub rows: usize,
}

/// Full-order oracle sweep over a grid: recomputes every certified claim
/// (dimension recovery, gap bracketing, the projection-error bound, and the
/// certified gap error) and reports violations.
pub fn cmd_verify(
    model: &Path,
    gap_rom: &Path,
    eig_rom: &Path,
    grid_path: &Path,
    eig_opts: &EigOptions<Real>,
) -> Result<VerifyOutcome, CliError> {
    let family: AffineFamily<Real> = load_model(model)?;
    let grid = load_grid(grid_path, family.p())?;
    if grid.is_empty() {
        return Err(CliError::BadArgs("verification grid is empty".into()));
    }
    let gap_state = load_rom(gap_rom)?;
    let eig_state = load_rom(eig_rom)?;
    if !eig_state.has_basis() {
        return Err(CliError::Subspace(SubspaceError::MissingBasis));
    }
    let margin = crate::gap_cert::default_dim_margin::<Real>();

    struct Row {
        line: String,
        ok: bool,
        err: Option<String>,
    }

    let rows: Vec<Row> = grid
        .points
        .par_iter()
        .map(|mu| -> Row {
            let inner = || -> Result<(String, bool), CliError> {
                let ev_gamma = MuEval::new(&gap_state, mu)?;
                let ev_w = MuEval::new(&eig_state, mu)?;
                let bounds = gap_bounds(&ev_gamma)?;
                let dim_gamma = check_dim_condition(&ev_gamma, 1, margin)?.all_satisfied();
                let dim_w = check_dim_condition(&ev_w, 1, margin)?.all_satisfied();
                let f_gamma = f_diagnostics(&ev_gamma)?;
                let f_w = f_diagnostics(&ev_w)?;
                let s1 = ev_w.srange(1)?;
                let slb1 = ev_w.slb(1, s1)?;
                let outcome = conditional_certify_online(
                    &gap_state,
                    &eig_state,
                    mu,
                    GapWidthConvention::Absolute,
                    margin,
                )?;

                // Full-order reference.
                let solve = solve_clustered(&family, mu, 1, eig_opts)?;
                let gamma = solve.next_value - solve.values[0];
                let m1_true = solve.ell();
                let e_gap = (bounds.reduced_gap - gamma).abs() / bounds.reduced_gap;
                let lifted = eig_state.lift(&ev_w.red.ground_block())?;
                let proj_err = projector_distance(&solve.vectors, &lifted)?;

                let slack = 1e-9 * (1.0 + gamma.abs());
                let mut ok = true;
                // Certified dimension recovery.
                if dim_gamma && ev_gamma.red.m1() != m1_true {
                    ok = false;
                }
                if dim_w && ev_w.red.m1() != m1_true {
                    ok = false;
                }
                // Gap bracketing whenever the reduced multiplicity matches.
                if ev_gamma.red.m1() == m1_true
                    && !(bounds.slb - slack <= gamma && gamma <= bounds.sub + slack)
                {
                    ok = false;
                }
                // Certified gap error whenever the recorded tolerance binds.
                if let Some(tol) = gap_state.build_tolerance {
                    if dim_gamma && bounds.indicator <= tol && e_gap > bounds.indicator + slack {
                        ok = false;
                    }
                }
                // Conditional projection-error certification.
                let (status, bound_str) = match outcome {
                    CertifyOutcome::Certified { bound, .. } => {
                        if proj_err > bound + 1e-9 * (1.0 + bound) {
                            ok = false;
                        }
                        ("certified", fmt17(bound))
                    }
                    CertifyOutcome::DimConditionFailed => ("dim-condition-failed", String::new()),
                    CertifyOutcome::GapWidthTooLarge { .. } => {
                        ("gap-width-too-large", String::new())
                    }
                };

                let mu_str: Vec<String> = mu.iter().map(|x| fmt17(*x)).collect();
                let fmt_opt = |v: Option<Real>| v.map(fmt17).unwrap_or_else(|| "inf".into());
                let line = format!(
                    "{},{},{},{},{},{},{},{},{},{},{status},{bound_str},{},{},{},{},{}",
                    mu_str.join(","),
                    fmt17(ev_w.red.lambda1()),
                    fmt17(slb1),
                    fmt17(bounds.sub),
                    fmt17(bounds.slb),
                    fmt17(bounds.indicator),
                    fmt_opt(f_gamma),
                    fmt_opt(f_w),
                    dim_gamma,
                    dim_w,
                    fmt17(solve.values[0]),
                    fmt17(gamma),
                    fmt17(e_gap),
                    fmt17(proj_err),
                    ok
                );
                Ok((line, ok))
            };
            match inner() {
                Ok((line, ok)) => Row {
                    line,
                    ok,
                    err: None,
                },
                Err(e) => Row {
                    line: String::new(),
                    ok: false,
                    err: Some(e.to_string()),
                },
            }
        })
        .collect();

    let p = family.p();
    let mu_cols: Vec<String> = (0..p).map(|k| format!("mu{k}")).collect();
    let mut csv = String::new();
    writeln!(
        csv,
        "{},lambda1_v,slb1,gap_sub,gap_slb,gamma_indicator,f_gamma,f_w,dim_ok_gamma,dim_ok_w,status,delta_bound,lambda1,gamma,gap_error,proj_err,claims_ok",
        mu_cols.join(",")
    )
    .unwrap();
    let mut violations = 0usize;
    for (idx, row) in rows.iter().enumerate() {
        if let Some(err) = &row.err {
            log::error!("verification failed at grid row {idx}: {err}");
            violations += 1;
            writeln!(csv, "# row {idx} error: {err}").unwrap();
            continue;
        }
        if !row.ok {
            violations += 1;
        }
        csv.push_str(&row.line);
        csv.push('\n');
    }
    Ok(VerifyOutcome {
        csv,
        violations,
        rows: rows.len(),
    })
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

pub struct BenchOutcome {
    pub csv: String,
    pub fom_mean: Option<f64>,
    pub rom_mean: f64,
}

/// Wall-clock comparison of ground-state solves: full-order versus reduced.
/// Informational only; no acceptance thresholds are attached to timings.
pub fn cmd_bench(
    model: &Path,
    rom: &Path,
    grid_path: &Path,
    repetitions: usize,
    skip_fom: bool,
    eig_opts: &EigOptions<Real>,
) -> Result<BenchOutcome, CliError> {
    if repetitions == 0 {
        return Err(CliError::BadArgs("repetitions must be positive".into()));
    }
    let family: AffineFamily<Real> = load_model(model)?;
    let grid = load_grid(grid_path, family.p())?;
    if grid.is_empty() {
        return Err(CliError::BadArgs("bench grid is empty".into()));
    }
    let state = load_rom(rom)?;

    let rom_mean = {
        let start = Instant::now();
        for _ in 0..repetitions {
            for mu in &grid.points {
                let ev = MuEval::new(&state, mu)?;
                std::hint::black_box(ev.red.lambda1());
            }
        }
        start.elapsed().as_secs_f64() / (repetitions * grid.len()) as f64
    };
    let fom_mean = if skip_fom {
        None
    } else {
        let start = Instant::now();
        for _ in 0..repetitions {
            for mu in &grid.points {
                let solve = solve_clustered(&family, mu, 1, eig_opts)?;
                std::hint::black_box(solve.values[0]);
            }
        }
        Some(start.elapsed().as_secs_f64() / (repetitions * grid.len()) as f64)
    };

    let mut csv = String::from("quantity,seconds\n");
    writeln!(csv, "rom_mean,{rom_mean:.9e}").unwrap();
    if let Some(f) = fom_mean {
        writeln!(csv, "fom_mean,{f:.9e}").unwrap();
        writeln!(csv, "speedup,{:.6}", f / rom_mean).unwrap();
    }
    Ok(BenchOutcome {
        csv,
        fom_mean,
        rom_mean,
    })
}
