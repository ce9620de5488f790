//! Record files.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! ```text
//! offset  size  field
//!      0     8  magic "QSREC\0\0\x01"
//!      8     1  detector kind (0 = dN, 1 = dX, 2 = dY)
//!      9     8  rate (f64)
//!     17     8  phase (f64)
//!     25     8  dt (f64)
//!     33     8  T (f64), equal to count * dt
//!     41     8  seed (u64)
//!     49     8  count (u64)
//!     57     -  payload: count bytes of 0/1 for dN, count f64 values otherwise
//! ```
//!
//! The CSV form carries the same header as a `#` comment line followed by one
//! increment per row.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::unravelling::{DetectorConfig, DetectorKind, Increments, Record};

pub const MAGIC: [u8; 8] = *b"QSREC\0\0\x01";

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    Ok(buf)
}

pub fn write_binary<W: Write>(record: &Record, mut w: W) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&[record.detector.kind.code()])?;
    for v in [record.detector.rate, record.detector.phase, record.dt, record.duration()] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&record.seed.to_le_bytes())?;
    w.write_all(&(record.len() as u64).to_le_bytes())?;
    match &record.increments {
        Increments::Jump(v) => {
            let bytes: Vec<u8> = v.iter().map(|&b| b as u8).collect();
            w.write_all(&bytes)?;
        }
        Increments::Diffusive(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<Record> {
    if read_array::<8, _>(&mut r)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let [code] = read_array::<1, _>(&mut r)?;
    let kind = DetectorKind::from_code(code).ok_or_else(|| Error::Format(format!("unknown kind code {code}")))?;
    let mut f = || -> Result<f64> { Ok(f64::from_le_bytes(read_array::<8, _>(&mut r)?)) };
    let (rate, phase, dt, duration) = (f()?, f()?, f()?, f()?);
    let seed = u64::from_le_bytes(read_array::<8, _>(&mut r)?);
    let count = u64::from_le_bytes(read_array::<8, _>(&mut r)?) as usize;
    let detector = DetectorConfig { kind, rate, phase };
    let width = if kind.is_jump() { 1 } else { 8 };
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != count * width {
        return Err(Error::Format(format!(
            "payload has {} bytes, header announces {} increments",
            payload.len(),
            count
        )));
    }
    let mut record = if kind.is_jump() {
        let clicks = payload
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(Error::Format(format!("jump byte {b} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Record::jumps(detector, dt, clicks)?
    } else {
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Record::diffusive(detector, dt, values)?
    };
    record.seed = seed;
    check_duration(&record, duration)?;
    Ok(record)
}

fn check_duration(record: &Record, duration: f64) -> Result<()> {
    if (record.duration() - duration).abs() > 1e-9 * duration.abs().max(1.0) {
        return Err(Error::Format(format!(
            "header T = {duration} disagrees with {} steps of dt = {}",
            record.len(),
            record.dt
        )));
    }
    Ok(())
}

pub fn write_csv<W: Write>(record: &Record, mut w: W) -> Result<()> {
    writeln!(
        w,
        "# kind={},rate={},phase={},dt={},T={},seed={}",
        record.detector.kind,
        record.detector.rate,
        record.detector.phase,
        record.dt,
        record.duration(),
        record.seed
    )?;
    writeln!(w, "increment")?;
    match &record.increments {
        Increments::Jump(v) => {
            for &b in v {
                writeln!(w, "{}", b as u8)?;
            }
        }
        Increments::Diffusive(v) => {
            for x in v {
                writeln!(w, "{x}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: BufRead>(r: R) -> Result<Record> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty file".into()))??;
    let header = header
        .strip_prefix("# ")
        .ok_or_else(|| Error::Format("missing header comment".into()))?;
    let mut fields = std::collections::HashMap::new();
    for kv in header.split(',') {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header field {kv:?}")))?;
        fields.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| fields.get(k).ok_or_else(|| Error::Format(format!("header lacks {k}")));
    let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| Error::Format(format!("bad {k}"))) };
    let kind: DetectorKind = get("kind")?.parse().map_err(|_| Error::Format("bad kind".into()))?;
    let detector = DetectorConfig {
        kind,
        rate: num("rate")?,
        phase: num("phase")?,
    };
    let dt = num("dt")?;
    let duration = num("T")?;
    let seed: u64 = get("seed")?.parse().map_err(|_| Error::Format("bad seed".into()))?;
    match lines.next() {
        Some(Ok(l)) if l.trim() == "increment" => {}
        _ => return Err(Error::Format("missing column header".into())),
    }
    let rows: Vec<String> = lines
        .filter(|l| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true))
        .collect::<std::io::Result<_>>()?;
    let bad = |row: &str| Error::Format(format!("bad increment {row:?}"));
    let mut record = if kind.is_jump() {
        let clicks = rows
            .iter()
            .map(|row| match row.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(bad(row)),
            })
            .collect::<Result<Vec<_>>>()?;
        Record::jumps(detector, dt, clicks)?
    } else {
        let values = rows
            .iter()
            .map(|row| row.trim().parse::<f64>().map_err(|_| bad(row)))
            .collect::<Result<Vec<_>>>()?;
        Record::diffusive(detector, dt, values)?
    };
    record.seed = seed;
    check_duration(&record, duration)?;
    Ok(record)
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Writes CSV for a `.csv` extension and the binary layout otherwise.
pub fn save(record: &Record, path: &Path) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    if is_csv(path) {
        write_csv(record, w)
    } else {
        write_binary(record, w)
    }
}

pub fn load(path: &Path) -> Result<Record> {
    let r = BufReader::new(File::open(path)?);
    if is_csv(path) {
        read_csv(r)
    } else {
        read_binary(r)
    }
}
