use fastfem::assembly::ManufacturedBox;
use serde::Serialize;

use super::run_case;
use crate::config::{join, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{Sink, CONVERGENCE_SCHEMA};

/// Largest relative mismatch tolerated between `f` and a finite-difference
/// `-Δu + αu` before any solve starts.
const FD_TOL: f64 = 1e-6;

#[derive(Debug, Serialize)]
struct ConvergenceRow {
    schema: &'static str,
    dims: usize,
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "X")]
    x: String,
    alpha: f64,
    algorithm: &'static str,
    dofs: u64,
    error_uniform: f64,
    /// `log(e_prev / e) / log(K / K_prev)`; empty on the first row of each order.
    observed_order: Option<f64>,
    residual: f64,
    t_total: f64,
}

pub fn run(config: &RunConfig, sink: &mut Sink) -> CliResult<()> {
    let algorithm = config.algorithm.expect("convergence always has an algorithm");
    let problem = ManufacturedBox::new(config.x.clone(), config.alpha).map_err(|e| CliError::Usage(e.to_string()))?;
    let fd = problem.finite_difference_check();
    if !(fd <= FD_TOL) {
        return Err(CliError::Check(format!("manufactured f disagrees with finite differences: {fd:.2e}")));
    }
    log::info!("manufactured right-hand side matches finite differences to {fd:.1e}");
    for &n in &config.n {
        let mut prev: Option<(usize, f64)> = None;
        for &k in &config.k {
            let mesh = config.sweep_mesh(k, n)?;
            let r = run_case(&mesh, config.alpha, algorithm, config.cache_dir.as_deref())?;
            let observed_order = prev.map(|(pk, pe)| (pe / r.error).ln() / (k as f64 / pk as f64).ln());
            log::info!("n={n} K={k}: error {:.3e}", r.error);
            sink.record(&ConvergenceRow {
                schema: CONVERGENCE_SCHEMA,
                dims: config.dims,
                n,
                k,
                x: join(&config.x),
                alpha: config.alpha,
                algorithm: algorithm.label(),
                dofs: r.dofs,
                error_uniform: r.error,
                observed_order,
                residual: r.residual,
                t_total: r.total,
            })?;
            prev = Some((k, r.error));
        }
    }
    Ok(())
}
