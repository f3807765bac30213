//! The learning-curve CSV schema shared by every method.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HEADER: &str = "method,ensemble,normalization,a,p,sigma2,nu,epsilon,stderr,n_samples,seed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub method: String,
    pub ensemble: String,
    pub normalization: String,
    pub a: f64,
    pub p: usize,
    pub sigma2: f64,
    pub nu: f64,
    pub epsilon: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub seed: u64,
}

pub fn write_rows<W: std::io::Write>(out: W, rows: &[CurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(HEADER.split(','))?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn save(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_rows(std::io::BufWriter::new(file), rows)
}

pub fn read_rows<R: std::io::Read>(input: R) -> Result<Vec<CurveRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != HEADER {
        return Err(Error::Config(format!("unexpected curve header {:?}", header.join(","))));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn load(path: &Path) -> Result<Vec<CurveRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_rows(file).map_err(|e| match e {
        Error::Csv(err) => Error::Parse { path: path.to_path_buf(), message: err.to_string() },
        Error::Config(message) => Error::Parse { path: path.to_path_buf(), message },
        other => other,
    })
}
