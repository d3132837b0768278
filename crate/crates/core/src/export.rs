//! Plain-text and image artifacts: CSV tables and binary PGM maps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Formats a float with 17 significant digits, the shortest fixed width
/// that round-trips every `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl Cell {
    fn render(&self, out: &mut String) {
        match self {
            Cell::Float(v) => out.push_str(&fmt_f64(*v)),
            Cell::Int(v) => {
                let _ = write!(out, "{v}");
            }
            Cell::Text(s) => {
                if s.contains([',', '"', '\n']) {
                    out.push('"');
                    out.push_str(&s.replace('"', "\"\""));
                    out.push('"');
                } else {
                    out.push_str(s);
                }
            }
        }
    }
}

/// An in-memory CSV table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "csv row width");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn header_line(&self) -> String {
        self.header.join(",")
    }

    fn render_rows(&self, out: &mut String) {
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                cell.render(out);
            }
            out.push('\n');
        }
    }

    pub fn render(&self) -> String {
        let mut out = self.header_line();
        out.push('\n');
        self.render_rows(&mut out);
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render())?;
        Ok(())
    }

    /// Appends the rows to `path`, writing the header first if the file is
    /// new or empty. An existing file must carry the same header.
    pub fn append(&self, path: &Path) -> Result<()> {
        let existing = match fs::read_to_string(path) {
            Ok(s) => s,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(e.into()),
        };
        let mut out = existing;
        if out.is_empty() {
            out.push_str(&self.header_line());
            out.push('\n');
        } else if out.lines().next() != Some(self.header_line().as_str()) {
            return Err(Error::Format(format!("{} has a different header", path.display())));
        } else if !out.ends_with('\n') {
            out.push('\n');
        }
        self.render_rows(&mut out);
        fs::write(path, out)?;
        Ok(())
    }
}

/// Scales nonnegative values to bytes, mapping the maximum to 255. An
/// all-zero grid maps to all zeros.
pub fn normalize_to_bytes(values: &[f64]) -> Vec<u8> {
    let max = values.iter().copied().fold(0.0f64, f64::max);
    values
        .iter()
        .map(|&v| if max > 0.0 { (255.0 * v / max).round().clamp(0.0, 255.0) as u8 } else { 0 })
        .collect()
}

/// Binary (P5) 8-bit PGM, rows top to bottom.
pub fn pgm_bytes(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height, "pgm size");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    fs::write(path, pgm_bytes(width, height, pixels))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_text() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
            let digits = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(digits.len(), 17);
        }
    }

    #[test]
    fn csv_layout() {
        let mut csv = Csv::new(&["method", "d", "nll"]);
        csv.push(vec!["cmgn".into(), 2usize.into(), 0.5.into()]);
        csv.push(vec!["a,b".into(), 16usize.into(), (-1.0).into()]);
        assert_eq!(
            csv.render(),
            "method,d,nll\ncmgn,2,5.0000000000000000e-1\n\"a,b\",16,-1.0000000000000000e0\n"
        );
    }

    #[test]
    fn append_writes_header_once() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut csv = Csv::new(&["x"]);
        csv.push(vec![1usize.into()]);
        csv.append(&path).unwrap();
        csv.append(&path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "x\n1\n1\n");
        let other = Csv::new(&["y"]);
        assert!(matches!(other.append(&path), Err(Error::Format(_))));
    }

    #[test]
    fn pgm_header_and_scaling() {
        let bytes = normalize_to_bytes(&[0.0, 1.0, 2.0, 4.0]);
        assert_eq!(bytes, vec![0, 64, 128, 255]);
        assert_eq!(normalize_to_bytes(&[0.0, 0.0]), vec![0, 0]);
        let pgm = pgm_bytes(2, 2, &bytes);
        assert!(pgm.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(&pgm[pgm.len() - 4..], &[0, 64, 128, 255]);
    }
}
