//! Numeric CSV and JSON persistence.
//!
//! Matrices are headerless CSV, one row per line. Floats are written with
//! Rust's shortest round-trip formatting, so reading a file back yields the
//! exact same bits.

use std::fs;
use std::path::{Path, PathBuf};

use lrad_core::graph::Adjacency;
use nalgebra::{DMatrix, DVector};
use serde::{de::DeserializeOwned, Serialize};

use crate::error::{CliError, CliResult};

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))
}

/// `{prefix}_{t:03}.csv`
pub fn indexed(dir: &Path, prefix: &str, t: usize) -> PathBuf {
    dir.join(format!("{prefix}_{t:03}.csv"))
}

/// Number of consecutive `{prefix}_000.csv, {prefix}_001.csv, …` in `dir`.
pub fn count_indexed(dir: &Path, prefix: &str) -> usize {
    (0..).take_while(|&t| indexed(dir, prefix, t).is_file()).count()
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

fn writer(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(CliError::io(path))?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        kind => CliError::format(path, format!("{kind:?}")),
    }
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> CliResult<()> {
    let mut w = writer(path)?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|&v| fmt(v))).map_err(csv_err(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

/// Single-row CSV.
pub fn write_row(path: &Path, v: &DVector<f64>) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(v.iter().map(|&x| fmt(x))).map_err(csv_err(path))?;
    w.flush().map_err(CliError::io(path))
}

pub fn read_matrix(path: &Path) -> CliResult<DMatrix<f64>> {
    let file = fs::File::open(path).map_err(CliError::io(path))?;
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(file);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(CliError::format(
                    path,
                    format!("row {} has {} fields, expected {c}", rows + 1, rec.len()),
                ))
            }
            _ => {}
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::format(path, format!("row {}, column {}: not a number: {field:?}", rows + 1, j + 1))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| CliError::format(path, "empty matrix file"))?;
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn read_row(path: &Path) -> CliResult<DVector<f64>> {
    let m = read_matrix(path)?;
    if m.nrows() != 1 {
        return Err(CliError::format(path, format!("expected one row, found {}", m.nrows())));
    }
    Ok(m.row(0).transpose())
}

/// Edge list with header `i,j`, `i < j`, zero-based.
pub fn write_edges(path: &Path, adj: &Adjacency) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(["i", "j"]).map_err(csv_err(path))?;
    for (i, j) in adj.edges() {
        w.write_record([i.to_string(), j.to_string()]).map_err(csv_err(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn read_edges(path: &Path, p: usize) -> CliResult<Adjacency> {
    let file = fs::File::open(path).map_err(CliError::io(path))?;
    let mut r = csv::Reader::from_reader(file);
    let mut edges = Vec::new();
    for rec in r.deserialize::<(usize, usize)>() {
        edges.push(rec.map_err(csv_err(path))?);
    }
    Adjacency::from_edges(p, &edges).map_err(|e| CliError::format(path, e.to_string()))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    fs::write(path, s).map_err(CliError::io(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let s = fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&s).map_err(|e| CliError::format(path, e.to_string()))
}

/// Generic CSV table with a header row.
pub struct Table {
    w: csv::Writer<fs::File>,
    path: PathBuf,
}

impl Table {
    pub fn create(path: &Path, header: &[&str]) -> CliResult<Self> {
        let mut w = writer(path)?;
        w.write_record(header).map_err(csv_err(path))?;
        Ok(Self {
            w,
            path: path.to_path_buf(),
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> CliResult<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields).map_err(csv_err(&self.path))
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.w.flush().map_err(CliError::io(&self.path))
    }
}

/// Header and raw fields of a CSV table.
pub fn read_table(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    let file = fs::File::open(path).map_err(CliError::io(path))?;
    let mut r = csv::Reader::from_reader(file);
    let head = r.headers().map_err(csv_err(path))?.iter().map(str::to_owned).collect();
    let rows = r
        .records()
        .map(|rec| Ok(rec.map_err(csv_err(path))?.iter().map(str::to_owned).collect()))
        .collect::<CliResult<_>>()?;
    Ok((head, rows))
}

pub fn num(v: f64) -> String {
    fmt(v)
}
