mod bench;
mod convergence;
mod selftest;
mod solve;

use std::path::Path;
use std::time::Instant;

use fastfem::assembly::{assemble_rhs, error_uniform, ManufacturedBox};
use fastfem::grid::TensorMesh;
use fastfem::solver::{SolveOptions, Solver};

use crate::config::{AlgorithmArg, Command, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::Sink;

pub fn run(config: &RunConfig) -> CliResult<()> {
    let mut sink = Sink::new(config.out.as_deref(), config.json.as_deref())?;
    let result = match config.cmd {
        Command::Solve => solve::run(config, &mut sink),
        Command::Convergence => convergence::run(config, &mut sink),
        Command::Bench => bench::run(config, &mut sink),
        Command::Selftest => selftest::run(config, &mut sink),
    };
    // Keep whatever rows were produced, even on failure.
    let finished = sink.finish();
    result.and(finished)
}

/// Builds the solver; problems that make the operator singular or
/// indefinite are configuration errors.
pub fn build_solver(mesh: &TensorMesh, alpha: f64, cache_dir: Option<&Path>) -> CliResult<Solver> {
    let built = match cache_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Solver::with_cache(mesh.clone(), alpha, dir)
        }
        None => Solver::new(mesh.clone(), alpha),
    };
    built.map_err(|e| match e {
        fastfem::Error::IndefiniteOperator { .. }
        | fastfem::Error::InvalidProblem(_)
        | fastfem::Error::InvalidMesh(_) => CliError::Usage(format!("rejected before compute: {e}")),
        other => CliError::Numerical(other),
    })
}

/// Timings in seconds and accuracy of one manufactured solve.
#[derive(Debug, Clone, Copy)]
pub struct CaseResult {
    pub dofs: u64,
    pub error: f64,
    pub residual: f64,
    pub setup: f64,
    pub assembly: f64,
    pub transforms: f64,
    pub solves: f64,
    pub total: f64,
}

pub fn run_case(
    mesh: &TensorMesh,
    alpha: f64,
    algorithm: AlgorithmArg,
    cache_dir: Option<&Path>,
) -> CliResult<CaseResult> {
    let problem = ManufacturedBox::for_mesh(mesh, alpha).map_err(|e| CliError::Usage(e.to_string()))?;
    let start = Instant::now();
    let solver = build_solver(mesh, alpha, cache_dir)?;
    let setup = start.elapsed().as_secs_f64();

    let t = Instant::now();
    let rhs = assemble_rhs(mesh, &|x: &[f64]| problem.f(x))?;
    let assembly = t.elapsed().as_secs_f64();

    let (u, times) = solver.solve_timed(rhs.clone(), &SolveOptions::with_algorithm(algorithm.algorithm()))?;
    let total = start.elapsed().as_secs_f64();

    let error = error_uniform(mesh, &u, &|x: &[f64]| problem.u(x))?;
    let residual = solver.relative_residual(&u, &rhs)?;
    if !(error.is_finite() && residual.is_finite()) {
        return Err(CliError::Check(format!("non-finite result: error {error}, residual {residual}")));
    }
    Ok(CaseResult {
        dofs: mesh.unknowns() as u64,
        error,
        residual,
        setup,
        assembly,
        transforms: times.transforms.as_secs_f64(),
        solves: times.solves.as_secs_f64(),
        total,
    })
}
