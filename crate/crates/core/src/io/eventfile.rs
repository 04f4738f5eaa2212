//! Event files: CSV with header `cycle,pulse,raw_time_ps[,kind]`. The `kind` column is
//! simulator truth and may be omitted for blinded data.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::path_error;
use crate::sim::{EventKind, EventRecord};

const HEADER: &str = "cycle,pulse,raw_time_ps";
const HEADER_KIND: &str = "cycle,pulse,raw_time_ps,kind";

/// Writes events; `with_kind = false` produces a blinded file.
pub fn format_events(events: &[EventRecord], with_kind: bool) -> String {
    let mut s = String::with_capacity(32 * events.len() + 32);
    let _ = writeln!(s, "{}", if with_kind { HEADER_KIND } else { HEADER });
    for e in events {
        let _ = write!(s, "{},{},{}", e.cycle_index, e.pulse_index, e.raw_time_ps);
        if with_kind {
            let _ = write!(s, ",{}", e.kind.map(|k| k.as_str()).unwrap_or(""));
        }
        s.push('\n');
    }
    s
}

pub fn write_events(path: &Path, events: &[EventRecord], with_kind: bool) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path).map_err(|e| path_error(path, e))?);
    w.write_all(format_events(events, with_kind).as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn parse_events(text: &str) -> Result<Vec<EventRecord>> {
    read_lines(text.lines().map(|l| Ok(l.to_string())))
}

pub fn read_events(path: &Path) -> Result<Vec<EventRecord>> {
    let r = BufReader::new(std::fs::File::open(path).map_err(|e| path_error(path, e))?);
    read_lines(r.lines().map(|l| l.map_err(Error::from)))
}

fn read_lines(lines: impl Iterator<Item = Result<String>>) -> Result<Vec<EventRecord>> {
    let mut out = Vec::new();
    let mut with_kind = None;
    for (i, line) in lines.enumerate() {
        let line = line?;
        let n = i + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let Some(has_kind) = with_kind else {
            with_kind = Some(match t {
                HEADER => false,
                HEADER_KIND => true,
                _ => {
                    return Err(Error::Parse {
                        line: n,
                        msg: format!("expected header `{HEADER}[,kind]`, got `{t}`"),
                    })
                }
            });
            continue;
        };
        let err = |msg: String| Error::Parse { line: n, msg };
        let fields: Vec<&str> = t.split(',').map(str::trim).collect();
        let expected = if has_kind { 4 } else { 3 };
        if fields.len() != expected {
            return Err(err(format!("expected {expected} fields, got {}", fields.len())));
        }
        let cycle_index = fields[0]
            .parse::<u64>()
            .map_err(|_| err(format!("bad cycle `{}`", fields[0])))?;
        let pulse_index = fields[1]
            .parse::<u32>()
            .map_err(|_| err(format!("bad pulse `{}`", fields[1])))?;
        let raw_time_ps = fields[2]
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| err(format!("bad raw_time_ps `{}`", fields[2])))?;
        let kind = match fields.get(3) {
            Some(&"") | None => None,
            Some(k) => Some(k.parse::<EventKind>().map_err(|e| err(e.to_string()))?),
        };
        out.push(EventRecord {
            cycle_index,
            pulse_index,
            raw_time_ps,
            kind,
        });
    }
    if with_kind.is_none() {
        return Err(Error::Parse {
            line: 1,
            msg: format!("missing header `{HEADER}`"),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<EventRecord> {
        vec![
            EventRecord {
                cycle_index: 0,
                pulse_index: 3,
                raw_time_ps: 1234.5,
                kind: Some(EventKind::Decay),
            },
            EventRecord {
                cycle_index: 7,
                pulse_index: 0,
                raw_time_ps: 0.1,
                kind: Some(EventKind::Prompt),
            },
        ]
    }

    #[test]
    fn round_trip_with_and_without_kind() {
        let ev = sample();
        assert_eq!(parse_events(&format_events(&ev, true)).unwrap(), ev);
        let blind = parse_events(&format_events(&ev, false)).unwrap();
        assert!(blind.iter().all(|e| e.kind.is_none()));
        assert_eq!(blind[1].raw_time_ps, 0.1);
    }

    #[test]
    fn bad_rows_cite_line() {
        let err = parse_events("cycle,pulse,raw_time_ps\n1,2,3\n1,-2,3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(parse_events("a,b\n").is_err());
        assert!(parse_events("").is_err());
        assert!(parse_events("cycle,pulse,raw_time_ps,kind\n1,2,3,laser\n").is_err());
    }
}
