//! File formats and reproducibility manifests.
//!
//! Binary layouts: a one-line JSON header terminated by `\n`, followed by a
//! raw little-endian f64 payload.
//!
//! * shape bank: header `{version, k, d, t, sample_rate_hz}`, payload of
//!   `k*d*t` floats in (neuron, electrode, lag) order;
//! * signal: header `{version, d, n, sample_rate_hz}`, payload of `d*n`
//!   floats, electrode-major.
//!
//! Activations travel as CSV with the exact header `neuron,sample,amplitude`;
//! amplitudes are printed in shortest round-trip form so write-then-read is
//! bit-exact.

use crate::activation::{Activation, ActivationSet};
use crate::error::{Error, Result};
use crate::shapes::ShapeBank;
use crate::signal::MultiSignal;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;
const MAX_HEADER_BYTES: u64 = 65_536;

#[derive(Debug, Serialize, Deserialize)]
struct ShapeHeader {
    version: u32,
    k: usize,
    d: usize,
    t: usize,
    sample_rate_hz: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SignalHeader {
    version: u32,
    d: usize,
    n: usize,
    sample_rate_hz: f64,
}

pub fn write_shape_bank(path: &Path, bank: &ShapeBank, sample_rate_hz: f64) -> Result<()> {
    let header = ShapeHeader {
        version: FORMAT_VERSION,
        k: bank.k(),
        d: bank.d(),
        t: bank.t(),
        sample_rate_hz,
    };
    write_payload(path, &serde_json::to_string(&header)?, bank.raw())
}

pub fn read_shape_bank(path: &Path) -> Result<(ShapeBank, f64)> {
    let mut reader = BufReader::new(File::open(path)?);
    let (header_line, header_len) = read_header_line(&mut reader)?;
    let header: ShapeHeader = parse_header(&header_line)?;
    check_version(header.version)?;
    let count = header
        .k
        .checked_mul(header.d)
        .and_then(|v| v.checked_mul(header.t))
        .ok_or_else(|| Error::Format {
            offset: 0,
            message: "header dimensions overflow".into(),
        })?;
    let values = read_f64_payload(&mut reader, count, header_len)?;
    let bank = ShapeBank::new(header.k, header.d, header.t, values)?;
    Ok((bank, header.sample_rate_hz))
}

pub fn write_signal(path: &Path, signal: &MultiSignal, sample_rate_hz: f64) -> Result<()> {
    let header = SignalHeader {
        version: FORMAT_VERSION,
        d: signal.d(),
        n: signal.n(),
        sample_rate_hz,
    };
    write_payload(path, &serde_json::to_string(&header)?, signal.raw())
}

pub fn read_signal(path: &Path) -> Result<(MultiSignal, f64)> {
    let mut reader = BufReader::new(File::open(path)?);
    let (header_line, header_len) = read_header_line(&mut reader)?;
    let header: SignalHeader = parse_header(&header_line)?;
    check_version(header.version)?;
    let count = header
        .d
        .checked_mul(header.n)
        .ok_or_else(|| Error::Format {
            offset: 0,
            message: "header dimensions overflow".into(),
        })?;
    let values = read_f64_payload(&mut reader, count, header_len)?;
    let signal = MultiSignal::from_samples(header.d, header.n, values)?;
    Ok((signal, header.sample_rate_hz))
}

fn write_payload(path: &Path, header_json: &str, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(header_json.as_bytes())?;
    w.write_all(b"\n")?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_header_line(reader: &mut impl BufRead) -> Result<(String, u64)> {
    let mut line = Vec::new();
    let taken = reader
        .take(MAX_HEADER_BYTES)
        .read_until(b'\n', &mut line)
        .map_err(Error::Io)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Format {
            offset: taken as u64,
            message: "missing newline-terminated JSON header".into(),
        });
    }
    line.pop();
    let text = String::from_utf8(line).map_err(|e| Error::Format {
        offset: e.utf8_error().valid_up_to() as u64,
        message: "header is not valid UTF-8".into(),
    })?;
    Ok((text, taken as u64))
}

fn parse_header<T: for<'de> Deserialize<'de>>(line: &str) -> Result<T> {
    serde_json::from_str(line).map_err(|e| Error::Format {
        offset: e.column().saturating_sub(1) as u64,
        message: format!("bad header: {e}"),
    })
}

fn check_version(version: u32) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::Format {
            offset: 0,
            message: format!("unsupported format version {version}, expected {FORMAT_VERSION}"),
        });
    }
    Ok(())
}

fn read_f64_payload(reader: &mut impl Read, count: usize, header_len: u64) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let expected = count * 8;
    if bytes.len() < expected {
        return Err(Error::Format {
            offset: header_len + bytes.len() as u64,
            message: format!(
                "truncated payload: header advertises {count} floats ({expected} bytes), file ends after {} payload bytes",
                bytes.len()
            ),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Format {
            offset: header_len + expected as u64,
            message: format!(
                "unexpected trailing data: header advertises {count} floats but payload has {} extra bytes",
                bytes.len() - expected
            ),
        });
    }
    let mut values = Vec::with_capacity(count);
    for (i, chunk) in bytes.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("chunks_exact yields 8 bytes"));
        if !v.is_finite() {
            return Err(Error::Format {
                offset: header_len + (i * 8) as u64,
                message: format!("non-finite payload value at index {i}"),
            });
        }
        values.push(v);
    }
    Ok(values)
}

pub const ACTIVATION_CSV_HEADER: &str = "neuron,sample,amplitude";

pub fn write_activations(path: &Path, acts: &ActivationSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{ACTIVATION_CSV_HEADER}")?;
    for a in acts.iter() {
        writeln!(w, "{},{},{}", a.neuron, a.sample, a.amplitude)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads raw activation rows without binding them to a (k, n) grid.
pub fn read_activation_rows(path: &Path) -> Result<Vec<Activation>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => {
            return Err(Error::Csv {
                row: 0,
                message: "empty file".into(),
            })
        }
    };
    if header.trim_end_matches('\r') != ACTIVATION_CSV_HEADER {
        return Err(Error::Csv {
            row: 0,
            message: format!("expected header '{ACTIVATION_CSV_HEADER}', found '{header}'"),
        });
    }
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in lines {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let parse_err = |what: &str, value: &str| Error::Csv {
            row: idx,
            message: format!("bad {what}: '{value}'"),
        };
        let neuron: usize = match fields.next() {
            Some(v) => v.trim().parse().map_err(|_| parse_err("neuron", v))?,
            None => return Err(parse_err("row", line)),
        };
        let sample: usize = match fields.next() {
            Some(v) => v.trim().parse().map_err(|_| parse_err("sample", v))?,
            None => return Err(parse_err("row", line)),
        };
        let amplitude: f64 = match fields.next() {
            Some(v) => v.trim().parse().map_err(|_| parse_err("amplitude", v))?,
            None => return Err(parse_err("row", line)),
        };
        if fields.next().is_some() {
            return Err(Error::Csv {
                row: idx,
                message: "too many fields".into(),
            });
        }
        if !amplitude.is_finite() {
            return Err(Error::Csv {
                row: idx,
                message: format!("non-finite amplitude {amplitude}"),
            });
        }
        if !seen.insert((neuron, sample)) {
            return Err(Error::Csv {
                row: idx,
                message: format!("duplicate (neuron, sample) pair ({neuron}, {sample})"),
            });
        }
        out.push(Activation {
            neuron,
            sample,
            amplitude,
        });
    }
    Ok(out)
}

/// Reads activations onto an explicit (k, n) grid.
pub fn read_activations(path: &Path, k: usize, n: usize) -> Result<ActivationSet> {
    ActivationSet::new(k, n, read_activation_rows(path)?)
}

/// Smallest grid that fits every row: `(max neuron + 1, max sample + 1)`.
pub fn infer_grid(rows: &[Activation]) -> (usize, usize) {
    rows.iter().fold((1, 1), |(k, n), a| {
        (k.max(a.neuron + 1), n.max(a.sample + 1))
    })
}

/// A file an invocation read or wrote, with its content checksum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub path: String,
    /// fnv1a-64 of the file contents, hex.
    pub checksum: String,
}

/// Record of one CLI invocation: the resolved parameters plus artifact
/// checksums, written next to the outputs. Re-running the same binary
/// version from a manifest reproduces the outputs bit for bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    /// Binary version tag.
    pub version: String,
    pub command: String,
    /// Fully resolved parameter set for the command.
    pub params: serde_json::Value,
    pub inputs: Vec<ArtifactRef>,
    pub outputs: Vec<ArtifactRef>,
    pub wall_seconds: f64,
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn checksum_file(path: &Path) -> Result<String> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    Ok(format!("{:016x}", fnv1a64(&bytes)))
}
