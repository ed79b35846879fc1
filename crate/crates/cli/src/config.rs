//! Command-line flags, the optional JSON config file, and their merge.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use fastfem::grid::{Mesh1D, TensorMesh};
use fastfem::solver::Algorithm;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Largest number of axes accepted on the command line.
pub const MAX_DIMS: usize = fastfem::assembly::MAX_AXES;
/// Largest supported element order.
pub const MAX_ORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Solve,
    Convergence,
    Bench,
    Selftest,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Solve => "solve",
            Command::Convergence => "convergence",
            Command::Bench => "bench",
            Command::Selftest => "selftest",
        })
    }
}

/// `a`: diagonalize every axis; `b`: banded solves along the first axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmArg {
    A,
    B,
}

impl AlgorithmArg {
    pub fn algorithm(self) -> Algorithm {
        match self {
            AlgorithmArg::A => Algorithm::Full,
            AlgorithmArg::B => Algorithm::Partial,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AlgorithmArg::A => "a",
            AlgorithmArg::B => "b",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fastfem", version, about = "Fast direct FEM solver for -Δu + αu = f on boxes")]
pub struct Cli {
    /// What to run.
    #[arg(long, value_enum)]
    pub cmd: Option<Command>,
    /// Number of space dimensions.
    #[arg(long)]
    pub dims: Option<usize>,
    /// Elements per axis (solve) or the K sweep (convergence, bench), comma separated.
    #[arg(long = "K", value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    /// Element order (solve) or the order sweep (convergence, bench), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Box side lengths, one value or one per axis.
    #[arg(long = "X", value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Option<Vec<f64>>,
    /// Zero-order coefficient α.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Solver algorithm; bench runs both when omitted.
    #[arg(long, value_enum)]
    pub algorithm: Option<AlgorithmArg>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// CSV destination (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the records as a JSON array to this file.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Directory for cached 1D spectral data.
    #[arg(long = "cache-dir")]
    pub cache_dir: Option<PathBuf>,
    /// JSON file with any of the above keys; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// A scalar or a list in the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub cmd: Option<Command>,
    pub dims: Option<usize>,
    #[serde(rename = "K")]
    pub k: Option<OneOrMany<usize>>,
    pub n: Option<OneOrMany<usize>>,
    #[serde(rename = "X")]
    pub x: Option<OneOrMany<f64>>,
    pub alpha: Option<f64>,
    pub algorithm: Option<AlgorithmArg>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub json: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }
}

/// Fully resolved and validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub cmd: Command,
    pub dims: usize,
    /// Per-axis element counts for `solve`, the sweep otherwise.
    pub k: Vec<usize>,
    /// Element order for `solve` (one entry), the sweep otherwise.
    pub n: Vec<usize>,
    /// Per-axis lengths.
    pub x: Vec<f64>,
    pub alpha: f64,
    /// `None` means both (bench only).
    pub algorithm: Option<AlgorithmArg>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub json: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

fn broadcast<T: Copy>(name: &str, v: Vec<T>, dims: usize) -> CliResult<Vec<T>> {
    match v.len() {
        1 => Ok(vec![v[0]; dims]),
        len if len == dims => Ok(v),
        len => usage(format!("--{name} has {len} values; give one or one per axis ({dims})")),
    }
}

impl RunConfig {
    pub fn resolve(cli: Cli) -> CliResult<Self> {
        let file = match &cli.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let cmd = cli.cmd.or(file.cmd).unwrap_or(Command::Solve);
        let dims = cli.dims.or(file.dims).unwrap_or(2);
        if dims == 0 || dims > MAX_DIMS {
            return usage(format!("--dims must be in 1..={MAX_DIMS}, got {dims}"));
        }
        let (default_k, default_n): (Vec<usize>, Vec<usize>) = match cmd {
            Command::Solve | Command::Selftest => (vec![16], vec![3]),
            Command::Convergence => ((3..=10).map(|p| 1 << p).collect(), (1..=9).collect()),
            Command::Bench => (vec![128, 256, 512, 1024], vec![3]),
        };
        let k = cli.k.or(file.k.map(OneOrMany::into_vec)).unwrap_or(default_k);
        let n = cli.n.or(file.n.map(OneOrMany::into_vec)).unwrap_or(default_n);
        let x = cli.x.or(file.x.map(OneOrMany::into_vec)).unwrap_or_else(|| vec![1.0]);
        let alpha = cli.alpha.or(file.alpha).unwrap_or(1.0);
        let algorithm = cli.algorithm.or(file.algorithm);
        let algorithm = match cmd {
            Command::Bench => algorithm,
            _ => Some(algorithm.unwrap_or(AlgorithmArg::A)),
        };
        let threads = cli.threads.or(file.threads);
        if threads == Some(0) {
            return usage("--threads must be at least 1");
        }
        if k.is_empty() || n.is_empty() || x.is_empty() {
            return usage("--K, --n and --X need at least one value");
        }
        if let Some(&bad) = k.iter().find(|&&k| k < 2) {
            return usage(format!("--K values must be at least 2, got {bad}"));
        }
        if let Some(&bad) = n.iter().find(|&&n| n == 0 || n > MAX_ORDER) {
            return usage(format!("--n values must be in 1..={MAX_ORDER}, got {bad}"));
        }
        if let Some(&bad) = x.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return usage(format!("--X values must be positive and finite, got {bad}"));
        }
        if !alpha.is_finite() {
            return usage(format!("--alpha must be finite, got {alpha}"));
        }
        let x = broadcast("X", x, dims)?;
        let (k, n) = match cmd {
            Command::Solve => {
                let k = broadcast("K", k, dims)?;
                if n.iter().any(|&m| m != n[0]) {
                    return usage("all axes must share one element order");
                }
                (k, vec![n[0]])
            }
            Command::Convergence => {
                if let Some(&bad) = k.iter().find(|k| !k.is_power_of_two()) {
                    return usage(format!("convergence sweeps use powers of two for --K, got {bad}"));
                }
                (sorted_unique(k), sorted_unique(n))
            }
            Command::Bench => (sorted_unique(k), sorted_unique(n)),
            Command::Selftest => (k, n),
        };
        Ok(Self {
            cmd,
            dims,
            k,
            n,
            x,
            alpha,
            algorithm,
            threads,
            out: cli.out.or(file.out),
            json: cli.json.or(file.json),
            cache_dir: cli.cache_dir.or(file.cache_dir),
        })
    }

    /// Mesh with `k[i]` elements on axis `i`.
    pub fn mesh(&self, k: &[usize], n: usize) -> CliResult<TensorMesh> {
        let axes = k
            .iter()
            .zip(&self.x)
            .map(|(&k, &x)| Mesh1D::new(k, n, x))
            .collect::<fastfem::Result<Vec<_>>>()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        TensorMesh::new(axes).map_err(|e| CliError::Usage(e.to_string()))
    }

    /// Uniform mesh with `k` elements on every axis.
    pub fn sweep_mesh(&self, k: usize, n: usize) -> CliResult<TensorMesh> {
        self.mesh(&vec![k; self.dims], n)
    }

    pub fn algorithms(&self) -> Vec<AlgorithmArg> {
        match self.algorithm {
            Some(a) => vec![a],
            None => vec![AlgorithmArg::A, AlgorithmArg::B],
        }
    }
}

fn sorted_unique(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v.dedup();
    v
}

/// `16x16`-style rendering of a per-axis list.
pub fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("x")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> CliResult<RunConfig> {
        let cli = Cli::try_parse_from(std::iter::once("fastfem").chain(args.iter().copied())).unwrap();
        RunConfig::resolve(cli)
    }

    #[test]
    fn defaults_per_command() {
        let solve = parse(&[]).unwrap();
        assert_eq!(
            (solve.cmd, solve.dims, solve.k.clone(), solve.n.clone()),
            (Command::Solve, 2, vec![16, 16], vec![3])
        );
        assert_eq!(solve.algorithm, Some(AlgorithmArg::A));
        let conv = parse(&["--cmd", "convergence"]).unwrap();
        assert_eq!(conv.k.first(), Some(&8));
        assert_eq!(conv.k.last(), Some(&1024));
        let bench = parse(&["--cmd", "bench"]).unwrap();
        assert_eq!(bench.algorithms().len(), 2);
    }

    #[test]
    fn per_axis_lists_broadcast() {
        let c = parse(&["--dims", "3", "--K", "4,5,6", "--X", "2"]).unwrap();
        assert_eq!(c.k, vec![4, 5, 6]);
        assert_eq!(c.x, vec![2.0; 3]);
        assert!(parse(&["--dims", "3", "--K", "4,5"]).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        for args in [
            &["--dims", "0"][..],
            &["--K", "1"],
            &["--n", "17"],
            &["--X", "-1"],
            &["--threads", "0"],
            &["--n", "2,3"],
            &["--cmd", "convergence", "--K", "8,12"],
        ] {
            let err = parse(args).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{args:?}");
        }
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"cmd": "solve", "K": [8, 4], "n": 2, "alpha": 3.5, "algorithm": "b"}"#).unwrap();
        let p = path.to_str().unwrap();
        let c = parse(&["--config", p, "--alpha", "-2"]).unwrap();
        assert_eq!(c.k, vec![8, 4]);
        assert_eq!(c.n, vec![2]);
        assert_eq!(c.alpha, -2.0);
        assert_eq!(c.algorithm, Some(AlgorithmArg::B));
        std::fs::write(&path, r#"{"unknown": 1}"#).unwrap();
        assert_eq!(parse(&["--config", p]).unwrap_err().exit_code(), 1);
    }
}
