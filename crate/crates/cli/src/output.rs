//! CSV rows (with a schema id column) and optional JSON records.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliResult;

pub const SOLVE_SCHEMA: &str = "fastfem.solve/1";
pub const CONVERGENCE_SCHEMA: &str = "fastfem.convergence/1";
pub const BENCH_SCHEMA: &str = "fastfem.bench/1";
pub const SELFTEST_SCHEMA: &str = "fastfem.selftest/1";

pub struct Sink {
    csv: csv::Writer<Box<dyn Write>>,
    json: Option<(PathBuf, Vec<serde_json::Value>)>,
}

impl Sink {
    pub fn new(out: Option<&Path>, json: Option<&Path>) -> CliResult<Self> {
        let target: Box<dyn Write> = match out {
            Some(path) => Box::new(io::BufWriter::new(File::create(path)?)),
            None => Box::new(io::stdout()),
        };
        Ok(Self { csv: csv::Writer::from_writer(target), json: json.map(|p| (p.to_path_buf(), Vec::new())) })
    }

    pub fn record<T: Serialize>(&mut self, row: &T) -> CliResult<()> {
        self.csv.serialize(row)?;
        self.csv.flush()?;
        if let Some((_, records)) = &mut self.json {
            records.push(serde_json::to_value(row)?);
        }
        Ok(())
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.csv.flush()?;
        if let Some((path, records)) = self.json {
            let mut f = io::BufWriter::new(File::create(path)?);
            serde_json::to_writer_pretty(&mut f, &records)?;
            writeln!(f)?;
            f.flush()?;
        }
        Ok(())
    }
}
