//! On-disk formats.
//!
//! Outcome files hold packed measurement bits:
//!
//! | offset | size | content                          |
//! |--------|------|----------------------------------|
//! | 0      | 4    | magic `RPRB`                     |
//! | 4      | 2    | format version, u16 little-endian |
//! | 6      | 8    | `N`, u64 little-endian           |
//! | 14     | 2    | reserved, zero                   |
//! | 16     | ...  | `K` runs of `ceil(N/8)` bytes    |
//!
//! Bit `n` of a run is bit `n % 8` (least significant first) of byte `n / 8`.
//! Spectra and curves are written as CSV with `.` decimals, `\n` line ends
//! and 17 significant digits.

use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ramsey_probe::estimation::PowerSpectrum;
use ramsey_probe::simulator::OutcomeRun;

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 4] = b"RPRB";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;

pub fn header(n: usize) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[..4].copy_from_slice(MAGIC);
    h[4..6].copy_from_slice(&VERSION.to_le_bytes());
    h[6..14].copy_from_slice(&(n as u64).to_le_bytes());
    h
}

pub fn bytes_per_run(n: usize) -> usize {
    n.div_ceil(8)
}

pub fn write_outcomes(path: &Path, n: usize, runs: &[OutcomeRun]) -> CliResult<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| CliError::io(path, e);
    out.write_all(&header(n)).map_err(io)?;
    for run in runs {
        if run.len() != n {
            return Err(CliError::format(path, format!("run {} has {} outcomes, expected {n}", run.stream_id, run.len())));
        }
        out.write_all(run.packed()).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads an outcome file; run `k` gets stream id `k`. The modulation phase
/// is not stored and reads back as NaN.
pub fn read_outcomes(path: &Path) -> CliResult<(usize, Vec<OutcomeRun>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| CliError::io(path, e))?;
    parse_outcomes(&bytes).map_err(|m| CliError::format(path, m))
}

pub fn parse_outcomes(bytes: &[u8]) -> Result<(usize, Vec<OutcomeRun>), String> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err("not an outcome file (bad magic)".into());
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let n = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
    let n = usize::try_from(n).map_err(|_| format!("N = {n} does not fit in memory"))?;
    if n == 0 {
        return Err("N must be positive".into());
    }
    let stride = bytes_per_run(n);
    let payload = &bytes[HEADER_LEN..];
    if payload.len() % stride != 0 {
        return Err(format!("payload of {} bytes is not a whole number of {stride}-byte runs", payload.len()));
    }
    let runs = payload
        .chunks_exact(stride)
        .enumerate()
        .map(|(k, chunk)| OutcomeRun::from_packed(chunk.to_vec(), n, k as u64, f64::NAN))
        .collect();
    Ok((n, runs))
}

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Int(usize),
    Float(f64),
}

pub fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<Cell>>) -> CliResult<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| CliError::io(path, e);
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    let mut line = String::new();
    for row in rows {
        line.clear();
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            match *v {
                Cell::Int(k) => {
                    let _ = write!(line, "{k}");
                }
                Cell::Float(x) => line.push_str(&format_float(x)),
            }
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn write_spectrum_csv(path: &Path, ps: &PowerSpectrum) -> CliResult<()> {
    write_csv(path, &["m", "S"], ps.values.iter().enumerate().map(|(m, &s)| vec![Cell::Int(m), Cell::Float(s)]))
}

/// Reads a two-column `m,S` spectrum; rows must cover `0..N` in order.
pub fn read_spectrum_csv(path: &Path) -> CliResult<PowerSpectrum> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut values = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if i == 0 {
            if line.trim() != "m,S" {
                return Err(CliError::format(path, format!("expected header `m,S`, found `{line}`")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let bad = || CliError::format(path, format!("line {}: cannot parse `{line}`", i + 1));
        let (m, s) = line.split_once(',').ok_or_else(bad)?;
        let m: usize = m.trim().parse().map_err(|_| bad())?;
        let s: f64 = s.trim().parse().map_err(|_| bad())?;
        if m != values.len() {
            return Err(CliError::format(path, format!("line {}: expected bin {}, found {m}", i + 1, values.len())));
        }
        values.push(s);
    }
    if values.is_empty() {
        return Err(CliError::format(path, "spectrum has no rows"));
    }
    Ok(PowerSpectrum { values, repetitions: 0, fingerprint: None })
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let read = reader.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if read == 0 {
            break;
        }
        hasher.update(&buf[..read]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let h = header(100_000);
        assert_eq!(&h[..4], b"RPRB");
        assert_eq!(&h[4..6], &[1, 0]);
        assert_eq!(u64::from_le_bytes(h[6..14].try_into().unwrap()), 100_000);
        assert_eq!(&h[14..], &[0, 0]);
    }

    #[test]
    fn parse_roundtrip_and_rejections() {
        let run = OutcomeRun::from_bits(&[1, 0, 1, 1, 0, 0, 0, 0, 1, 1], 0, 0.0);
        let mut bytes = header(10).to_vec();
        bytes.extend_from_slice(run.packed());
        bytes.extend_from_slice(run.packed());
        let (n, runs) = parse_outcomes(&bytes).unwrap();
        assert_eq!(n, 10);
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[1].bits().collect::<Vec<_>>(), vec![1, 0, 1, 1, 0, 0, 0, 0, 1, 1]);
        assert_eq!(runs[1].stream_id, 1);

        assert!(parse_outcomes(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(parse_outcomes(&wrong).is_err());
        let mut future = bytes;
        future[4] = 2;
        assert!(parse_outcomes(&future).unwrap_err().contains("version"));
    }

    #[test]
    fn floats_carry_17_significant_digits() {
        let text = format_float(0.1);
        assert_eq!(text, "1.0000000000000001e-1");
        assert_eq!(text.parse::<f64>().unwrap(), 0.1);
        let third = 1.0 / 3.0;
        assert_eq!(format_float(third).parse::<f64>().unwrap().to_bits(), third.to_bits());
    }

    #[test]
    fn stride_is_rounded_up() {
        assert_eq!(bytes_per_run(16), 2);
        assert_eq!(bytes_per_run(17), 3);
        assert_eq!(bytes_per_run(100_000), 12_500);
    }
}
