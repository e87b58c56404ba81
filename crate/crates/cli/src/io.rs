//! CSV ingestion and artifact output.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! value read back from any emitted CSV is bit-identical to the one written.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DMatrix;
use serde::Serialize;

/// A parsed CSV file. The first record is taken as a header when any of
/// its fields is not a number.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn n_cols(&self) -> usize {
        self.header
            .as_ref()
            .map(Vec::len)
            .or_else(|| self.rows.first().map(Vec::len))
            .unwrap_or(0)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.as_ref()?.iter().position(|h| h == name)
    }
}

fn is_number(field: &str) -> bool {
    field.trim().parse::<f64>().is_ok()
}

pub fn read_table(path: &Path) -> Result<Table> {
    let name = path.display().to_string();
    let file = File::open(path).with_context(|| name.clone())?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(file);
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| anyhow!("{name}: {e}"))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        records.push(rec.iter().map(str::to_string).collect::<Vec<_>>());
    }
    let mut it = records.into_iter();
    let first = it.next().ok_or_else(|| anyhow!("{name}: file is empty"))?;
    let (header, rows) = if first.iter().any(|f| !is_number(f)) {
        (Some(first), it.collect::<Vec<_>>())
    } else {
        (None, std::iter::once(first).chain(it).collect())
    };
    if rows.is_empty() {
        bail!("{name}: no data rows");
    }
    Ok(Table { header, rows })
}

/// Reads a dense numeric matrix; rows are items.
pub fn read_matrix(path: &Path) -> Result<(Option<Vec<String>>, DMatrix<f64>)> {
    let name = path.display().to_string();
    let table = read_table(path)?;
    let p = table.n_cols();
    let n = table.rows.len();
    let mut values = Vec::with_capacity(n * p);
    for (i, row) in table.rows.iter().enumerate() {
        for (j, field) in row.iter().enumerate() {
            let x: f64 = field
                .parse()
                .map_err(|_| anyhow!("{name}: row {}, column {}: '{field}' is not a number", i + 1, j + 1))?;
            if !x.is_finite() {
                bail!("{name}: row {}, column {}: non-finite value", i + 1, j + 1);
            }
            values.push(x);
        }
    }
    Ok((table.header, DMatrix::from_row_slice(n, p, &values)))
}

/// Reads one label column. Without `column`, a single-column file is used as
/// is and a file whose first column is `item` uses its second column.
pub fn read_labels(path: &Path, column: Option<&str>) -> Result<Vec<String>> {
    let name = path.display().to_string();
    let table = read_table(path)?;
    let idx = match column {
        Some(c) => match table.column_index(c) {
            Some(i) => i,
            None => c
                .parse::<usize>()
                .ok()
                .filter(|&i| i < table.n_cols())
                .ok_or_else(|| anyhow!("{name}: no column '{c}'"))?,
        },
        None if table.n_cols() == 1 => 0,
        None if table.n_cols() == 2 && table.column_index("item") == Some(0) => 1,
        None => bail!("{name}: {} columns, choose one with --column", table.n_cols()),
    };
    Ok(table.rows.into_iter().map(|mut r| std::mem::take(&mut r[idx])).collect())
}

/// Maps arbitrary label strings to dense ids in order of first appearance.
pub fn encode_labels(labels: &[String]) -> Vec<usize> {
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    let mut next = 0;
    labels
        .iter()
        .map(|l| {
            *ids.entry(l.as_str()).or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Output directory that remembers every artifact written into it.
#[derive(Debug)]
pub struct OutDir {
    dir: PathBuf,
    artifacts: Vec<String>,
}

#[derive(Serialize)]
struct Artifact<'a> {
    file: &'a str,
    seed: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    settings: &'a BTreeMap<String, String>,
    artifacts: Vec<Artifact<'a>>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    fn open(&mut self, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| path.display().to_string())?;
        self.artifacts.push(name.to_string());
        Ok((path, BufWriter::new(file)))
    }

    pub fn write_with(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let (path, mut w) = self.open(name)?;
        f(&mut w).and_then(|_| w.flush().map_err(Into::into)).with_context(|| path.display().to_string())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        self.write_with(name, |w| Ok(w.write_all(text.as_bytes())?))
    }

    pub fn write_rows<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        self.write_with(name, |w| {
            let mut out = csv::Writer::from_writer(w);
            if !header.is_empty() {
                out.write_record(header)?;
            }
            for row in rows {
                out.write_record(&row)?;
            }
            out.flush()?;
            Ok(())
        })
    }

    /// Writes a numeric matrix, with a header row when one is given.
    pub fn write_matrix(&mut self, name: &str, m: &DMatrix<f64>, header: Option<&[String]>) -> Result<()> {
        let cols: Vec<&str> = header.map(|h| h.iter().map(String::as_str).collect()).unwrap_or_default();
        let rows = (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect());
        self.write_rows(name, &cols, rows)
    }

    /// Lists every artifact written so far, then itself.
    pub fn write_manifest(mut self, command: &str, seed: u64, settings: &BTreeMap<String, String>) -> Result<()> {
        let names = std::mem::take(&mut self.artifacts);
        let manifest = Manifest {
            command,
            seed,
            settings,
            artifacts: names.iter().map(|file| Artifact { file, seed }).collect(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        self.write_text("manifest.json", &text)
    }
}
