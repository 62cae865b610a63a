//! CSV output with 12 significant digits and the binary strip dump.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use crate::strip::StripSolution;

/// `x` with 12 significant digits: fixed notation for exponents in
/// `[-5, 12)`, scientific otherwise.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        format!("{:.*}", (11 - exp) as usize, x)
    } else {
        format!("{x:.11e}")
    }
}

/// Header row plus numeric rows, every value through [`fmt_sig`].
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|&x| fmt_sig(x)))?;
    }
    w.flush()
}

/// Column-wise variant of [`write_csv`]; all columns must have equal length.
pub fn write_columns(path: &Path, header: &[&str], columns: &[&[f64]]) -> io::Result<()> {
    let n = columns.first().map_or(0, |c| c.len());
    assert!(columns.iter().all(|c| c.len() == n), "ragged columns");
    write_csv(path, header, (0..n).map(|i| columns.iter().map(|c| c[i]).collect()))
}

/// Binary dump: `n_s`, `n_x` as little-endian u64, `h_s`, `h_x` as
/// little-endian f64, then `u` and `v` row-major (s-major, boundary rows
/// included).
pub fn write_strip_dump(path: &Path, sol: &StripSolution) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let g = &sol.grid;
    w.write_all(&(g.n_s() as u64).to_le_bytes())?;
    w.write_all(&(g.n_x() as u64).to_le_bytes())?;
    w.write_all(&g.spacing().to_le_bytes())?;
    w.write_all(&g.spacing().to_le_bytes())?;
    for x in sol.u.iter().chain(&sol.v) {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StripDump {
    pub n_s: usize,
    pub n_x: usize,
    pub h_s: f64,
    pub h_x: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

pub fn read_strip_dump(path: &Path) -> io::Result<StripDump> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let bad = || io::Error::new(io::ErrorKind::InvalidData, "truncated strip dump");
    let word = |k: usize| -> io::Result<[u8; 8]> {
        bytes.get(8 * k..8 * k + 8).map(|s| s.try_into().unwrap()).ok_or_else(bad)
    };
    let n_s = u64::from_le_bytes(word(0)?) as usize;
    let n_x = u64::from_le_bytes(word(1)?) as usize;
    let (h_s, h_x) = (f64::from_le_bytes(word(2)?), f64::from_le_bytes(word(3)?));
    let n = n_s.checked_mul(n_x).ok_or_else(bad)?;
    if bytes.len() != 8 * (4 + 2 * n) {
        return Err(bad());
    }
    let read = |from: usize| (0..n).map(|k| word(from + k).map(f64::from_le_bytes)).collect::<io::Result<Vec<_>>>();
    Ok(StripDump { n_s, n_x, h_s, h_x, u: read(4)?, v: read(4 + n)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(-1.0000000000000409), "-1.00000000000");
        assert_eq!(fmt_sig(0.975326), "0.975326000000");
        assert_eq!(fmt_sig(123.456), "123.456000000");
        assert_eq!(fmt_sig(1.5e-9), "1.50000000000e-9");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(f64::NAN), "NaN");
    }
}
