use serde::Serialize;

use super::run_case;
use crate::config::{join, RunConfig};
use crate::error::CliResult;
use crate::output::{Sink, SOLVE_SCHEMA};

#[derive(Debug, Serialize)]
struct SolveRow {
    schema: &'static str,
    dims: usize,
    #[serde(rename = "K")]
    k: String,
    n: usize,
    #[serde(rename = "X")]
    x: String,
    alpha: f64,
    algorithm: &'static str,
    threads: usize,
    dofs: u64,
    error_uniform: f64,
    residual: f64,
    t_setup: f64,
    t_assembly: f64,
    t_transforms: f64,
    t_solves: f64,
    t_total: f64,
}

pub fn run(config: &RunConfig, sink: &mut Sink) -> CliResult<()> {
    let n = config.n[0];
    let algorithm = config.algorithm.expect("solve always has an algorithm");
    let mesh = config.mesh(&config.k, n)?;
    log::info!("solving on {} elements, order {n}, {} unknowns", join(&config.k), mesh.unknowns());
    let r = run_case(&mesh, config.alpha, algorithm, config.cache_dir.as_deref())?;
    sink.record(&SolveRow {
        schema: SOLVE_SCHEMA,
        dims: config.dims,
        k: join(&config.k),
        n,
        x: join(&config.x),
        alpha: config.alpha,
        algorithm: algorithm.label(),
        threads: rayon::current_num_threads(),
        dofs: r.dofs,
        error_uniform: r.error,
        residual: r.residual,
        t_setup: r.setup,
        t_assembly: r.assembly,
        t_transforms: r.transforms,
        t_solves: r.solves,
        t_total: r.total,
    })
}
