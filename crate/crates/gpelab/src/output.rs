//! Artifacts on disk: CSV tables, the manifest and report text.
//!
//! Floats are written with Rust's `Display`, which is the shortest decimal
//! that round-trips, so identical runs give byte-identical files.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use gpelab_core::Grid3;

/// A CSV file flushed after every row, so a killed run leaves a readable
/// prefix.
pub struct CsvSink {
    out: BufWriter<File>,
    columns: usize,
}

impl CsvSink {
    pub fn create(path: &Path, comment: &str, columns: &[&str]) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "# {comment}")?;
        writeln!(out, "{}", columns.join(","))?;
        out.flush()?;
        Ok(Self {
            out,
            columns: columns.len(),
        })
    }

    pub fn row(&mut self, cells: &[Cell]) -> io::Result<()> {
        debug_assert_eq!(cells.len(), self.columns);
        let line: Vec<String> = cells.iter().map(Cell::render).collect();
        writeln!(self.out, "{}", line.join(","))?;
        self.out.flush()
    }

    pub fn comment(&mut self, text: &str) -> io::Result<()> {
        writeln!(self.out, "# {text}")?;
        self.out.flush()
    }
}

pub enum Cell {
    F(f64),
    Opt(Option<f64>),
    S(String),
    B(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => v.to_string(),
            Cell::Opt(Some(v)) => v.to_string(),
            Cell::Opt(None) => String::new(),
            Cell::S(s) => s.clone(),
            Cell::B(b) => b.to_string(),
        }
    }
}

pub fn config_hash(canonical: &str) -> String {
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// `manifest.txt`: written with status `running` before any heavy work and
/// rewritten with the terminal status at the end.
pub struct Manifest {
    path: PathBuf,
    lines: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(dir: &Path, experiment: &str, canonical: &str, seed: u64, grid: &Grid3) -> Self {
        let n = grid.n();
        let l = grid.lengths();
        let lines = vec![
            ("experiment".into(), experiment.to_string()),
            ("config_sha256".into(), config_hash(canonical)),
            ("seed".into(), seed.to_string()),
            ("grid_n".into(), format!("{} {} {}", n[0], n[1], n[2])),
            ("grid_L".into(), format!("{} {} {}", l[0], l[1], l[2])),
            ("version".into(), env!("CARGO_PKG_VERSION").to_string()),
            ("status".into(), "running".into()),
        ];
        Self {
            path: dir.join("manifest.txt"),
            lines,
        }
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.lines.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.lines.push((key.to_string(), value)),
        }
    }

    pub fn write(&self) -> io::Result<()> {
        let mut f = BufWriter::new(File::create(&self.path)?);
        for (k, v) in &self.lines {
            writeln!(f, "{k} = {v}")?;
        }
        f.flush()
    }
}

/// Free-form `key = value` report, one line per entry.
#[derive(Default)]
pub struct Report {
    text: String,
}

impl Report {
    pub fn line(&mut self, key: &str, value: impl std::fmt::Display) {
        self.text.push_str(&format!("{key} = {value}\n"));
    }

    pub fn heading(&mut self, title: &str) {
        if !self.text.is_empty() {
            self.text.push('\n');
        }
        self.text.push_str(&format!("# {title}\n"));
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, &self.text)
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}
