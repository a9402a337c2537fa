use std::fs;
use std::io::Write;
use std::path::Path;

use super::{AccelSample, AlignedRecord, RawTrip, SpeedSample, Vin, MAX_SPEED_KMH};
use crate::error::{Error, Result};

const TRIP_MAGIC: &str = "obdguard-trace";
const ALIGNED_MAGIC: &str = "obdguard-aligned";
const SCHEMA_VERSION: &str = "1";

const TRIP_COLUMNS: [&str; 5] = ["t", "v_kmh", "ax", "ay", "az"];
const ALIGNED_COLUMNS: [&str; 6] = ["t", "y", "x1", "x2", "x3", "label"];

/// Leading `# key=value` lines. The first may be `# <magic> <version>`.
struct Preamble {
    lines: u64,
    pairs: Vec<(String, String)>,
}

fn split_preamble<'a>(path: &Path, text: &'a str, magic: &str) -> Result<(Preamble, &'a str)> {
    let mut rest = text;
    let mut pre = Preamble {
        lines: 0,
        pairs: Vec::new(),
    };
    while let Some(line) = rest.lines().next() {
        let Some(comment) = line.strip_prefix('#') else {
            break;
        };
        pre.lines += 1;
        let comment = comment.trim();
        if pre.lines == 1 {
            if let Some(version) = comment.strip_prefix(magic) {
                let version = version.trim();
                if version != SCHEMA_VERSION {
                    return Err(Error::Version {
                        path: path.to_path_buf(),
                        found: version.to_string(),
                        expected: SCHEMA_VERSION.to_string(),
                    });
                }
            }
        }
        if let Some((k, v)) = comment.split_once('=') {
            pre.pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        rest = rest.get(line.len()..).unwrap_or("");
        rest = rest.strip_prefix("\r\n").or_else(|| rest.strip_prefix('\n')).unwrap_or(rest);
    }
    Ok((pre, rest))
}

fn parse_f64(path: &Path, line: u64, column: &str, cell: &str) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("column {column}: {cell:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("column {column}: non-finite value"),
        });
    }
    Ok(v)
}

fn parse_label(path: &Path, line: u64, cell: &str) -> Result<Option<bool>> {
    match cell {
        "" => Ok(None),
        "0" => Ok(Some(false)),
        "1" => Ok(Some(true)),
        other => Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("label must be 0, 1 or empty, got {other:?}"),
        }),
    }
}

fn csv_error(path: &Path, line: u64, err: csv::Error) -> Error {
    let line = err.position().map_or(line, |p| p.line() + line);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: err.to_string(),
    }
}

fn check_header(path: &Path, line: u64, header: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    if header.len() != expected.len() || header.iter().zip(expected).any(|(h, e)| h.trim() != *e) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!(
                "expected header {:?}, found {:?}",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads a trace CSV (`t,v_kmh,ax,ay,az[,label]`).
///
/// Rows carry a speed sample, an accelerometer sample, or both. Labels are
/// only meaningful on speed rows; the column may be omitted entirely.
pub fn read_trip(path: impl AsRef<Path>) -> Result<RawTrip> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let (pre, body) = split_preamble(path, &text, TRIP_MAGIC)?;

    let mut trip = RawTrip::default();
    for (k, v) in &pre.pairs {
        match k.as_str() {
            "vin" => {
                trip.vin = Vin::new(v.clone()).map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: 0,
                    message: e.to_string(),
                })?
            }
            "scenario" => trip.meta.scenario = v.clone(),
            "seed" => {
                trip.meta.seed = Some(v.parse().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line: 0,
                    message: format!("seed {v:?} is not an integer"),
                })?)
            }
            _ => {}
        }
    }

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let header_line = pre.lines + 1;
    let header = rdr.headers().map_err(|e| csv_error(path, pre.lines, e))?.clone();
    let has_label = header.len() == TRIP_COLUMNS.len() + 1;
    let mut expected = TRIP_COLUMNS.to_vec();
    if has_label {
        expected.push("label");
    }
    check_header(path, header_line, &header, &expected)?;

    let mut labels = Vec::new();
    let mut any_label = false;
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(path, pre.lines, e))?;
        let line = row.position().map_or(0, |p| p.line()) + pre.lines;
        let t = parse_f64(path, line, "t", &row[0])?;
        if t < 0.0 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("negative timestamp {t}"),
            });
        }
        let label = if has_label { parse_label(path, line, &row[5])? } else { None };

        if !row[1].is_empty() {
            let v = parse_f64(path, line, "v_kmh", &row[1])?;
            if !(0.0..=MAX_SPEED_KMH).contains(&v) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("speed {v} outside 0..=255 km/h"),
                });
            }
            if let Some(prev) = trip.speed_series.last() {
                if !(t > prev.t) {
                    return Err(Error::NonMonotonic {
                        path: path.to_path_buf(),
                        series: "speed",
                        t,
                        line,
                    });
                }
            }
            trip.speed_series.push(SpeedSample { t, v });
            any_label |= label.is_some();
            labels.push(label);
        } else if label.is_some() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "label on a row without a speed value".into(),
            });
        }

        let accel_cells = [&row[2], &row[3], &row[4]];
        let n_accel = accel_cells.iter().filter(|c| !c.is_empty()).count();
        match n_accel {
            0 => {}
            3 => {
                let ax = parse_f64(path, line, "ax", accel_cells[0])?;
                let ay = parse_f64(path, line, "ay", accel_cells[1])?;
                let az = parse_f64(path, line, "az", accel_cells[2])?;
                if let Some(prev) = trip.accel_series.last() {
                    if !(t > prev.t) {
                        return Err(Error::NonMonotonic {
                            path: path.to_path_buf(),
                            series: "accel",
                            t,
                            line,
                        });
                    }
                }
                trip.accel_series.push(AccelSample { t, ax, ay, az });
            }
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: "ax, ay and az must be all present or all empty".into(),
                })
            }
        }
        if row[1].is_empty() && n_accel == 0 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "row carries neither speed nor acceleration".into(),
            });
        }
    }

    if any_label {
        if labels.iter().any(Option::is_none) {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: "label column is only partially filled on speed rows".into(),
            });
        }
        trip.truth_labels = Some(labels.into_iter().map(|l| l.unwrap_or(false)).collect());
    }
    Ok(trip)
}

fn write_preamble(out: &mut Vec<u8>, magic: &str, pairs: &[(&str, String)]) {
    let _ = writeln!(out, "# {magic} {SCHEMA_VERSION}");
    for (k, v) in pairs {
        let _ = writeln!(out, "# {k}={v}");
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a trace CSV. Speed and accelerometer samples are merged in time
/// order; samples sharing a timestamp share a row. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_trip(trip: &RawTrip, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    trip.validate()?;
    let mut out = Vec::new();
    let mut pairs = vec![("vin", trip.vin.to_string())];
    if !trip.meta.scenario.is_empty() {
        pairs.push(("scenario", trip.meta.scenario.replace('\n', " ")));
    }
    if let Some(seed) = trip.meta.seed {
        pairs.push(("seed", seed.to_string()));
    }
    write_preamble(&mut out, TRIP_MAGIC, &pairs);

    let labelled = trip.truth_labels.is_some();
    out.extend_from_slice(TRIP_COLUMNS.join(",").as_bytes());
    if labelled {
        out.extend_from_slice(b",label");
    }
    out.push(b'\n');

    let (speeds, accels) = (&trip.speed_series, &trip.accel_series);
    let (mut i, mut j) = (0, 0);
    while i < speeds.len() || j < accels.len() {
        let ts = speeds.get(i).map_or(f64::INFINITY, |s| s.t);
        let ta = accels.get(j).map_or(f64::INFINITY, |a| a.t);
        let t = ts.min(ta);
        let _ = write!(out, "{t},");
        if ts == t {
            let _ = write!(out, "{}", speeds[i].v);
        }
        out.push(b',');
        if ta == t {
            let a = accels[j];
            let _ = write!(out, "{},{},{}", a.ax, a.ay, a.az);
        } else {
            out.extend_from_slice(b",,");
        }
        if labelled {
            out.push(b',');
            if ts == t {
                out.push(if trip.label(i) == Some(true) { b'1' } else { b'0' });
            }
        }
        out.push(b'\n');
        if ts == t {
            i += 1;
        }
        if ta == t {
            j += 1;
        }
    }
    write_bytes(path, &out)
}

/// Writes aligned records as `t,y,x1,x2,x3,label`.
pub fn write_aligned(records: &[AlignedRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::new();
    write_preamble(&mut out, ALIGNED_MAGIC, &[]);
    out.extend_from_slice(ALIGNED_COLUMNS.join(",").as_bytes());
    out.push(b'\n');
    for r in records {
        let label = match r.label {
            Some(true) => "1",
            Some(false) => "0",
            None => "",
        };
        let _ = writeln!(out, "{},{},{},{},{},{}", r.t, r.y, r.x[0], r.x[1], r.x[2], label);
    }
    write_bytes(path.as_ref(), &out)
}

pub fn read_aligned(path: impl AsRef<Path>) -> Result<Vec<AlignedRecord>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let (pre, body) = split_preamble(path, &text, ALIGNED_MAGIC)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let header = rdr.headers().map_err(|e| csv_error(path, pre.lines, e))?.clone();
    check_header(path, pre.lines + 1, &header, &ALIGNED_COLUMNS)?;
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(path, pre.lines, e))?;
        let line = row.position().map_or(0, |p| p.line()) + pre.lines;
        let t: i64 = row[0].parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("t must be an integer second index, got {:?}", &row[0]),
        })?;
        records.push(AlignedRecord {
            t,
            y: parse_f64(path, line, "y", &row[1])?,
            x: [
                parse_f64(path, line, "x1", &row[2])?,
                parse_f64(path, line, "x2", &row[3])?,
                parse_f64(path, line, "x3", &row[4])?,
            ],
            label: parse_label(path, line, &row[5])?,
        });
    }
    Ok(records)
}
