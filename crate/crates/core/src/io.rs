//! Matrix files.
//!
//! CSV: a `# rows=n cols=p` header line, then one comma-separated row per
//! line. Further `#` lines and blank lines are skipped.
//!
//! Binary: 16-byte header (`SPCV`, version, rows, cols as little-endian
//! `u32`) followed by `rows * cols` little-endian `f64` values, row-major.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SPCV";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Bin,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Bin => "bin",
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "bin" => Ok(Format::Bin),
            other => Err(Error::Parse(format!("unknown format `{other}` (expected csv or bin)"))),
        }
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut rows = None;
    let mut cols = None;
    for tok in line.trim_start_matches('#').split_whitespace() {
        if let Some(v) = tok.strip_prefix("rows=") {
            rows = v.parse().ok();
        } else if let Some(v) = tok.strip_prefix("cols=") {
            cols = v.parse().ok();
        }
    }
    Some((rows?, cols?))
}

pub fn write_csv<W: Write>(mut w: W, m: &DMatrix<f64>) -> Result<()> {
    writeln!(w, "# rows={} cols={}", m.nrows(), m.ncols())?;
    let mut line = String::new();
    for r in 0..m.nrows() {
        line.clear();
        for c in 0..m.ncols() {
            if c > 0 {
                line.push(',');
            }
            line.push_str(&m[(r, c)].to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<DMatrix<f64>> {
    let mut shape: Option<(usize, usize)> = None;
    let mut values: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    let mut width: Option<usize> = None;
    for (lineno, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if t.starts_with('#') {
            if shape.is_none() && rows == 0 {
                shape = parse_header(t);
            }
            continue;
        }
        let before = values.len();
        for field in t.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: cannot parse `{}` as a number", lineno + 1, field.trim())))?;
            values.push(v);
        }
        let k = values.len() - before;
        match width {
            None => width = Some(k),
            Some(wd) if wd != k => {
                return Err(Error::Parse(format!("line {}: expected {wd} fields, found {k}", lineno + 1)));
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = width.ok_or_else(|| Error::Parse("no data rows".into()))?;
    if let Some((hr, hc)) = shape {
        if (hr, hc) != (rows, cols) {
            return Err(Error::Parse(format!("header says {hr}x{hc} but file holds {rows}x{cols}")));
        }
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn write_bin<W: Write>(mut w: W, m: &DMatrix<f64>) -> Result<()> {
    let dim = |d: usize| u32::try_from(d).map_err(|_| Error::InvalidInput(format!("dimension {d} exceeds u32")));
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&dim(m.nrows())?.to_le_bytes())?;
    w.write_all(&dim(m.ncols())?.to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            buf.extend_from_slice(&m[(r, c)].to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_bin<R: Read>(mut r: R) -> Result<DMatrix<f64>> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header).map_err(|_| Error::Parse("truncated header".into()))?;
    if &header[..4] != MAGIC {
        return Err(Error::Parse("bad magic (expected SPCV)".into()));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().expect("4 bytes"));
    if word(4) != VERSION {
        return Err(Error::Parse(format!("unsupported version {}", word(4))));
    }
    let (rows, cols) = (word(8) as usize, word(12) as usize);
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != 8 * rows * cols {
        return Err(Error::Parse(format!("expected {} payload bytes for {rows}x{cols}, found {}", 8 * rows * cols, body.len())));
    }
    let values: Vec<f64> = body.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

/// Reads either format, recognising binary files by their magic bytes.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        read_bin(bytes.as_slice())
    } else {
        read_csv(bytes.as_slice())
    }
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>, format: Format) -> Result<()> {
    let mut buf = Vec::new();
    match format {
        Format::Csv => write_csv(&mut buf, m)?,
        Format::Bin => write_bin(&mut buf, m)?,
    }
    fs::write(path, buf)?;
    Ok(())
}
