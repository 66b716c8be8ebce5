//! Heatmap file formats.
//!
//! Text: CSV, one grid row per line, decimal floats separated by commas.
//!
//! Binary: the four magic bytes `HMAP`, then `rows` and `cols` as
//! little-endian `u32`, then `rows * cols` little-endian IEEE-754 `f64`
//! values in row-major order.

use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::heatmap::Heatmap;

pub const MAGIC: &[u8; 4] = b"HMAP";

/// Shortest round-trip decimal form; exponent notation outside
/// `[1e-5, 1e16)` keeps tiny and huge values compact.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn to_csv_string(h: &Heatmap) -> String {
    let mut out = String::with_capacity(h.len() * 12);
    for i in 0..h.rows() {
        for j in 0..h.cols() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", fmt_f64(h.get(i, j)));
        }
        out.push('\n');
    }
    out
}

pub fn from_csv_str(text: &str) -> Result<Heatmap> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = values.len();
        for field in line.split(',') {
            let field = field.trim();
            let v: f64 = field.parse().map_err(|_| {
                Error::Format(format!("line {}: cannot parse {field:?} as a number", lineno + 1))
            })?;
            values.push(v);
        }
        let n = values.len() - before;
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => {
                return Err(Error::Format(format!(
                    "line {}: expected {c} columns, found {n}",
                    lineno + 1
                )))
            }
            _ => {}
        }
        rows += 1;
    }
    Heatmap::new(rows, cols.unwrap_or(0), values)
}

pub fn write_csv<W: Write>(mut w: W, h: &Heatmap) -> Result<()> {
    w.write_all(to_csv_string(h).as_bytes())?;
    Ok(())
}

pub fn read_csv<R: Read>(mut r: R) -> Result<Heatmap> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    from_csv_str(&text)
}

pub fn to_binary(h: &Heatmap) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * h.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(h.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(h.cols() as u32).to_le_bytes());
    for v in h.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn from_binary(bytes: &[u8]) -> Result<Heatmap> {
    if bytes.len() < 12 {
        return Err(Error::Format("binary heatmap shorter than its header".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("missing HMAP magic".into()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Format("grid dimensions overflow".into()))?;
    if body.len() != expected {
        return Err(Error::Format(format!(
            "expected {expected} payload bytes for {rows}x{cols}, found {}",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Heatmap::new(rows, cols, values)
}

pub fn write_binary<W: Write>(mut w: W, h: &Heatmap) -> Result<()> {
    w.write_all(&to_binary(h))?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<Heatmap> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    from_binary(&bytes)
}

/// Reads either format, sniffing the magic bytes.
pub fn read_any(bytes: &[u8]) -> Result<Heatmap> {
    if bytes.starts_with(MAGIC) {
        from_binary(bytes)
    } else {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| Error::Format("heatmap is neither HMAP binary nor UTF-8 CSV".into()))?;
        from_csv_str(text)
    }
}
