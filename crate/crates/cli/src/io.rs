//! File plumbing shared by the subcommands: CSV reading with line-numbered
//! errors, timestamp handling, config loading and the run manifest.

use std::fs::File;
use std::io::{BufWriter, Read};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use chrono::{DateTime, NaiveDateTime};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Input file problems: exit code 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub fn input_error(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(InputError(msg.into()))
}

/// A parsed CSV: header plus rows, each tagged with its 1-based file line.
pub struct Table {
    pub path: PathBuf,
    headers: Vec<String>,
    pub rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    pub fn read(path: &Path, required: &[&str]) -> Result<Self> {
        let file = File::open(path).map_err(|e| input_error(format!("cannot open {}: {e}", path.display())))?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| input_error(format!("{}: cannot read header: {e}", path.display())))?
            .iter()
            .map(|h| h.to_ascii_lowercase())
            .collect();
        for col in required {
            if !headers.iter().any(|h| h == col) {
                return Err(input_error(format!("{}: missing column `{col}`", path.display())));
            }
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                input_error(format!("{}: line {line}: {e}", path.display()))
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Self {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Field `name` of row `i`, parsed with `parse`; errors name the line.
    pub fn field<T>(&self, i: usize, name: &str, parse: impl FnOnce(&str) -> Result<T>) -> Result<T> {
        let (line, rec) = &self.rows[i];
        let col = self.column(name).ok_or_else(|| input_error(format!("missing column `{name}`")))?;
        let raw = rec.get(col).unwrap_or("");
        parse(raw).map_err(|e| input_error(format!("{}: line {line}: column `{name}`: {e}", self.path.display())))
    }

    pub fn line(&self, i: usize) -> u64 {
        self.rows[i].0
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }
}

pub fn parse_num<T: std::str::FromStr>(raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>().map_err(|e| anyhow!("cannot parse {raw:?}: {e}"))
}

pub fn parse_f64(raw: &str) -> Result<f64> {
    let v: f64 = parse_num(raw)?;
    if !v.is_finite() {
        bail!("value {raw:?} is not finite");
    }
    Ok(v)
}

fn parse_naive(raw: &str) -> Result<NaiveDateTime> {
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Ok(t);
        }
    }
    bail!("cannot parse timestamp {raw:?} (expected ISO-8601 like 2019-03-04T08:15:00)")
}

/// Local wall-clock seconds, treating the naive time as if it were UTC.
pub fn parse_secs(raw: &str) -> Result<i64> {
    Ok(parse_naive(raw)?.and_utc().timestamp())
}

pub fn parse_millis(raw: &str) -> Result<i64> {
    Ok(parse_naive(raw)?.and_utc().timestamp_millis())
}

pub fn format_secs(secs: i64) -> String {
    DateTime::from_timestamp(secs, 0)
        .map(|t| t.naive_utc().format("%Y-%m-%dT%H:%M:%S").to_string())
        .unwrap_or_else(|| secs.to_string())
}

pub fn format_millis(ms: i64) -> String {
    DateTime::from_timestamp_millis(ms)
        .map(|t| t.naive_utc().format("%Y-%m-%dT%H:%M:%S%.3f").to_string())
        .unwrap_or_else(|| ms.to_string())
}

/// Reads a JSON config file into `T`, or `T::default()` when no file is given.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| input_error(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| input_error(format!("config {}: {e}", p.display())))
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| input_error(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    inputs: Vec<InputDigest>,
    config: serde_json::Value,
    seed: u64,
    outputs: Vec<String>,
    duration_ms: u128,
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).with_context(|| format!("hashing {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Tracks one command's inputs and outputs and writes `manifest.json`.
pub struct Run {
    command: &'static str,
    out_dir: PathBuf,
    seed: u64,
    started: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run {
    pub fn start(command: &'static str, out_dir: &Path, seed: u64) -> Result<Self> {
        std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        Ok(Self {
            command,
            out_dir: out_dir.to_path_buf(),
            seed,
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    fn output_path(&mut self, name: &str) -> PathBuf {
        let p = self.out_dir.join(name);
        self.outputs.push(p.clone());
        p
    }

    pub fn csv_writer(&mut self, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
        let p = self.output_path(name);
        let f = File::create(&p).with_context(|| format!("creating {}", p.display()))?;
        Ok(csv::Writer::from_writer(BufWriter::new(f)))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.output_path(name);
        let f = File::create(&p).with_context(|| format!("creating {}", p.display()))?;
        serde_json::to_writer_pretty(BufWriter::new(f), value)?;
        Ok(())
    }

    pub fn finish<C: Serialize>(self, config: &C) -> Result<()> {
        let inputs = self
            .inputs
            .iter()
            .map(|p| {
                Ok(InputDigest {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest_path = self.out_dir.join("manifest.json");
        let manifest = Manifest {
            command: self.command,
            inputs,
            config: serde_json::to_value(config)?,
            seed: self.seed,
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
            duration_ms: self.started.elapsed().as_millis(),
        };
        let f = File::create(&manifest_path).with_context(|| format!("creating {}", manifest_path.display()))?;
        serde_json::to_writer_pretty(BufWriter::new(f), &manifest)?;
        Ok(())
    }
}
