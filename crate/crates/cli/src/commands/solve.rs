use std::fmt::Write as _;
use std::path::PathBuf;

use clap::ValueEnum;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use spinlab_core::distsolver::{
    discretize_tetrahedral, mass_near_planes, residuals, solve, uniform_grid, ResidualReport, SolveOptions, SolveStatus,
    StepRule, UniformPairs,
};

use super::Report;
use crate::error::CliError;
use crate::formats::{ensure_dir, grid_text, write_json, write_text};
use crate::meta::Meta;

pub const INITIAL_GRID_FILE: &str = "grid_initial.txt";
pub const FINAL_GRID_FILE: &str = "grid_final.txt";
pub const TRACE_FILE: &str = "trace.csv";
pub const RESIDUALS_FILE: &str = "residuals.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InitArg {
    /// Product of uniform marginals.
    Uniform,
    /// The tetrahedral density, averaged over each cell.
    #[value(alias = "eq11")]
    Tetrahedral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StepArg {
    /// Minimize the merit along each move.
    Optimal,
    /// Move until one cell empties.
    Empty,
}

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct SolveArgs {
    /// Cells per axis; even.
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    /// Target for the conditional residual `r_c3`.
    #[arg(long, default_value_t = 5e-3)]
    pub tol: f64,
    /// Budget of accepted moves.
    #[arg(long, default_value_t = 1_000_000)]
    pub max_moves: usize,
    /// Proposals per sweep; 0 means n³.
    #[arg(long, default_value_t = 0)]
    pub sweep_len: usize,
    #[arg(long, value_enum, default_value_t = InitArg::Uniform)]
    pub init: InitArg,
    #[arg(long, value_enum, default_value_t = StepArg::Optimal)]
    pub step: StepArg,
    /// Recheck the marginal constraints after every move.
    #[arg(long)]
    pub audit: bool,
    /// Output directory for grids, trace and residuals.
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub r_c1: f64,
    pub r_c2a: f64,
    pub r_c2b: f64,
    pub r_c3: f64,
}

impl From<ResidualReport> for Residuals {
    fn from(r: ResidualReport) -> Self {
        Self { r_c1: r.r_c1, r_c2a: r.r_c2a, r_c2b: r.r_c2b, r_c3: r.r_c3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualsFile {
    pub meta: Meta,
    pub status: String,
    pub r_c1: f64,
    pub r_c2a: f64,
    pub r_c2b: f64,
    pub r_c3: f64,
    pub move_count: usize,
    pub sweeps: usize,
    /// Largest marginal residual seen at any audit point.
    pub max_marginal_residual: f64,
    /// Mass fraction within one cell width of the four tetrahedron faces.
    pub mass_near_planes: f64,
    pub initial: Residuals,
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Converged => "converged",
        SolveStatus::BudgetExhausted => "budget_exhausted",
        SolveStatus::Stalled => "stalled",
    }
}

pub fn run(args: &SolveArgs, seed: u64) -> Result<Report, CliError> {
    if !(args.tol >= 0.0 && args.tol.is_finite()) {
        return Err(CliError::Validation(format!("tolerance {} must be finite and >= 0", args.tol)));
    }
    let meta = Meta::new("solve-dist", seed, args);
    let grid = match args.init {
        InitArg::Uniform => uniform_grid(args.n)?,
        InitArg::Tetrahedral => discretize_tetrahedral(args.n)?,
    };
    let initial = residuals(&grid);
    let initial_text = grid_text(&meta, &grid);

    let opts = SolveOptions {
        tol: args.tol,
        max_moves: args.max_moves,
        sweep_len: args.sweep_len,
        step: match args.step {
            StepArg::Optimal => StepRule::Optimal,
            StepArg::Empty => StepRule::Empty,
        },
        audit_constraints: args.audit,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = solve(grid, &mut UniformPairs, &opts, &mut rng)?;

    let mut trace = meta.comment_block();
    trace.push_str("sweep,moves,merit,r_c1,r_c2a,r_c2b,r_c3\n");
    for t in &out.trace {
        let r = t.report;
        writeln!(trace, "{},{},{},{},{},{},{}", t.sweep, t.moves, t.merit, r.r_c1, r.r_c2a, r.r_c2b, r.r_c3).unwrap();
    }

    let doc = ResidualsFile {
        meta: meta.clone(),
        status: status_name(out.status).into(),
        r_c1: out.report.r_c1,
        r_c2a: out.report.r_c2a,
        r_c2b: out.report.r_c2b,
        r_c3: out.report.r_c3,
        move_count: out.move_count,
        sweeps: out.trace.len(),
        max_marginal_residual: out.max_marginal_residual,
        mass_near_planes: mass_near_planes(&out.grid),
        initial: initial.into(),
    };

    ensure_dir(&args.out)?;
    write_text(&args.out.join(INITIAL_GRID_FILE), &initial_text)?;
    write_text(&args.out.join(FINAL_GRID_FILE), &grid_text(&meta, &out.grid))?;
    write_text(&args.out.join(TRACE_FILE), &trace)?;
    write_json(&args.out.join(RESIDUALS_FILE), &doc)?;

    let mut report = Report::new(format!(
        "solve-dist: n={} seed={seed} status={} moves={} r_c3={:e} (start {:e}) near-plane mass={:.4}",
        args.n,
        doc.status,
        doc.move_count,
        doc.r_c3,
        initial.r_c3,
        doc.mass_near_planes
    ));
    if out.status != SolveStatus::Converged {
        report.warnings.push(format!("solver stopped before reaching r_c3 <= {:e}", args.tol));
    }
    Ok(report)
}
