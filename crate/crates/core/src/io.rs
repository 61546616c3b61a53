//! Export formats.
//!
//! Binary trajectory layout (little endian):
//!
//! ```text
//! b"OPTOTRJ1"  u64 header_len  header (JSON, header_len bytes)
//! column 0: count × f64, column 1: count × f64, ...
//! ```
//!
//! The header records `dt`, `t0`, the column `names`, the sample `count`,
//! the stage schedule and free-form `metadata`. CSV files start with `#`
//! comment lines followed by a header row.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::FitResult;
use crate::sim::{Stage, Trajectory};
use crate::spectral::{Spectrum, ZeroSpanTrace};

const MAGIC: &[u8; 8] = b"OPTOTRJ1";

#[derive(Serialize, Deserialize)]
struct Header {
    dt: f64,
    t0: f64,
    names: Vec<String>,
    count: usize,
    #[serde(default)]
    stages: Vec<Stage>,
    #[serde(default)]
    metadata: serde_json::Value,
}

pub fn write_trajectory(path: &Path, tr: &Trajectory, metadata: serde_json::Value) -> Result<()> {
    let cols = tr.columns();
    let header = Header {
        dt: tr.dt,
        t0: tr.t0,
        names: cols.iter().map(|(n, _)| n.to_string()).collect(),
        count: tr.len(),
        stages: tr.stages.clone(),
        metadata,
    };
    let json = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for (_, col) in cols {
        for v in col {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a binary trajectory and its metadata.
pub fn read_trajectory(path: &Path) -> Result<(Trajectory, serde_json::Value)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a trajectory file".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let h: Header = serde_json::from_slice(&json)?;
    let mut read_col = || -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; h.count * 8];
        r.read_exact(&mut bytes)?;
        Ok(bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect())
    };
    let mut tr = Trajectory { dt: h.dt, t0: h.t0, stages: h.stages, ..Default::default() };
    for name in &h.names {
        let col = read_col()?;
        match name.as_str() {
            "x" => tr.x = col,
            "v" => tr.v = col,
            "y" => tr.y = col,
            "x_a" => tr.x_a = Some(col),
            "v_a" => tr.v_a = Some(col),
            other => return Err(Error::Format(format!("unknown column `{other}`"))),
        }
    }
    if tr.x.len() != h.count || tr.v.len() != h.count || tr.y.len() != h.count {
        return Err(Error::Format("missing x, v or y column".into()));
    }
    Ok((tr, h.metadata))
}

fn comments(w: &mut impl Write, lines: &[String]) -> Result<()> {
    for l in lines {
        writeln!(w, "# {l}")?;
    }
    Ok(())
}

/// Trajectory as CSV: `t, x, v, y[, x_a, v_a]`, every `stride`-th sample.
pub fn write_trajectory_csv(path: &Path, tr: &Trajectory, stride: usize, header: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    comments(&mut w, header)?;
    let cols = tr.columns();
    let names: Vec<&str> = std::iter::once("t").chain(cols.iter().map(|c| c.0)).collect();
    writeln!(w, "{}", names.join(","))?;
    for i in (0..tr.len()).step_by(stride.max(1)) {
        write!(w, "{:.9e}", tr.time(i))?;
        for (_, c) in &cols {
            write!(w, ",{:.9e}", c[i])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_spectrum_csv(path: &Path, s: &Spectrum, header: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    comments(&mut w, header)?;
    writeln!(w, "# resolution_bw = {}", s.resolution_bw)?;
    writeln!(w, "# n_averages = {}", s.n_averages)?;
    writeln!(w, "freq_hz,psd_m2_per_hz")?;
    for (f, p) in s.freq.iter().zip(&s.psd) {
        writeln!(w, "{f:.12e},{p:.9e}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_csv(path: &Path, tr: &ZeroSpanTrace, header: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    comments(&mut w, header)?;
    writeln!(w, "# center_freq = {}", tr.center_freq)?;
    writeln!(w, "# bandwidth = {}", tr.bandwidth)?;
    writeln!(w, "t_s,temperature_k")?;
    for (t, k) in tr.t.iter().zip(&tr.temperature) {
        writeln!(w, "{t:.9e},{k:.9e}")?;
    }
    w.flush()?;
    Ok(())
}

/// Generic numeric table with named columns.
pub fn write_table_csv(path: &Path, names: &[&str], rows: &[Vec<f64>], header: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    comments(&mut w, header)?;
    writeln!(w, "{}", names.join(","))?;
    for row in rows {
        if row.len() != names.len() {
            return Err(Error::InvalidInput("row width differs from header".into()));
        }
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.9e}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Parsed CSV: `# key = value` comments, column names and numeric rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub comments: Vec<String>,
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.names.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Value of a `# key = value` comment.
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.comments.iter().find_map(|c| {
            let (k, v) = c.split_once('=')?;
            (k.trim() == key).then(|| v.trim())
        })
    }
}

pub fn read_table_csv(path: &Path) -> Result<Table> {
    let r = BufReader::new(File::open(path)?);
    let mut t = Table::default();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            t.comments.push(c.trim().to_string());
        } else if t.names.is_empty() {
            t.names = line.split(',').map(|s| s.trim().to_string()).collect();
        } else {
            let row = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
            if row.len() != t.names.len() {
                return Err(Error::Format(format!("line {}: expected {} fields", lineno + 1, t.names.len())));
            }
            t.rows.push(row);
        }
    }
    Ok(t)
}

pub fn read_spectrum_csv(path: &Path) -> Result<Spectrum> {
    let t = read_table_csv(path)?;
    let freq = t.column("freq_hz").ok_or_else(|| Error::Format("no freq_hz column".into()))?;
    let psd = t.column("psd_m2_per_hz").ok_or_else(|| Error::Format("no psd_m2_per_hz column".into()))?;
    let parse = |k: &str| t.meta(k).and_then(|v| v.parse::<f64>().ok());
    Ok(Spectrum {
        freq,
        psd,
        n_averages: parse("n_averages").unwrap_or(0.0) as usize,
        resolution_bw: parse("resolution_bw").unwrap_or(0.0),
    })
}

pub fn write_fit_json(path: &Path, fit: &FitResult) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, fit)?;
    Ok(())
}

pub fn read_fit_json(path: &Path) -> Result<FitResult> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}
