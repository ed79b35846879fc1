use serde::Serialize;

use super::{run_case, CaseResult};
use crate::config::{join, RunConfig};
use crate::error::CliResult;
use crate::output::{Sink, BENCH_SCHEMA};

const REPEATS: usize = 3;

#[derive(Debug, Serialize)]
struct BenchRow {
    schema: &'static str,
    dims: usize,
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "X")]
    x: String,
    alpha: f64,
    algorithm: &'static str,
    threads: usize,
    dofs: u64,
    error_uniform: f64,
    t_setup: f64,
    t_assembly: f64,
    t_transforms: f64,
    t_solves: f64,
    t_total: f64,
    /// Median total time over the previous row with the same `n` and algorithm.
    ratio_total: Option<f64>,
    /// The same ratio for transforms plus solves only.
    ratio_solve: Option<f64>,
    /// `ratio_total` divided by the growth in unknowns.
    ratio_per_dof: Option<f64>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

pub fn run(config: &RunConfig, sink: &mut Sink) -> CliResult<()> {
    for algorithm in config.algorithms() {
        for &n in &config.n {
            let mut prev: Option<(f64, f64, u64)> = None;
            for &k in &config.k {
                let mesh = config.sweep_mesh(k, n)?;
                let runs: Vec<CaseResult> = (0..REPEATS)
                    .map(|_| run_case(&mesh, config.alpha, algorithm, config.cache_dir.as_deref()))
                    .collect::<CliResult<_>>()?;
                let med = |f: fn(&CaseResult) -> f64| median(runs.iter().map(f).collect());
                let total = med(|r| r.total);
                let solve = med(|r| r.transforms + r.solves);
                let dofs = runs[0].dofs;
                log::info!("algorithm {} n={n} K={k}: median {total:.3} s", algorithm.label());
                sink.record(&BenchRow {
                    schema: BENCH_SCHEMA,
                    dims: config.dims,
                    n,
                    k,
                    x: join(&config.x),
                    alpha: config.alpha,
                    algorithm: algorithm.label(),
                    threads: rayon::current_num_threads(),
                    dofs,
                    error_uniform: runs[0].error,
                    t_setup: med(|r| r.setup),
                    t_assembly: med(|r| r.assembly),
                    t_transforms: med(|r| r.transforms),
                    t_solves: med(|r| r.solves),
                    t_total: total,
                    ratio_total: prev.map(|(t, _, _)| total / t),
                    ratio_solve: prev.map(|(_, s, _)| solve / s),
                    ratio_per_dof: prev.map(|(t, _, d)| (total / t) / (dofs as f64 / d as f64)),
                })?;
                prev = Some((total, solve, dofs));
            }
        }
    }
    Ok(())
}
