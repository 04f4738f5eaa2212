//! Histogram files: a `# key = value` header, a `# bin_start_ps,count` column line,
//! then one row per bin. Metadata keys are written as `meta.<key>`.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::analysis::TimeHistogram;
use crate::error::{Error, Result};
use crate::io::path_error;

const COLUMNS: &str = "bin_start_ps,count";

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

pub fn format_histogram(h: &TimeHistogram) -> String {
    let mut s = String::with_capacity(32 * h.counts.len() + 256);
    let _ = writeln!(s, "# bin_width_ps = {}", h.bin_width_ps);
    let _ = writeln!(s, "# origin_ps = {}", h.origin_ps);
    let _ = writeln!(s, "# exposure_s = {}", h.exposure_s);
    for (k, v) in &h.metadata {
        let _ = writeln!(s, "# meta.{k} = {v}");
    }
    let _ = writeln!(s, "# {COLUMNS}");
    for (i, c) in h.counts.iter().enumerate() {
        let _ = writeln!(s, "{},{c}", h.origin_ps + i as f64 * h.bin_width_ps);
    }
    s
}

pub fn write_histogram(path: &Path, h: &TimeHistogram) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path).map_err(|e| path_error(path, e))?);
    w.write_all(format_histogram(h).as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn parse_histogram(text: &str) -> Result<TimeHistogram> {
    read_lines(text.lines().map(|l| Ok(l.to_string())))
}

pub fn read_histogram(path: &Path) -> Result<TimeHistogram> {
    let r = BufReader::new(std::fs::File::open(path).map_err(|e| path_error(path, e))?);
    read_lines(r.lines().map(|l| l.map_err(Error::from)))
}

fn read_lines(lines: impl Iterator<Item = Result<String>>) -> Result<TimeHistogram> {
    let mut bin_width = None;
    let mut origin = None;
    let mut exposure = 0.0;
    let mut meta = std::collections::BTreeMap::new();
    let mut counts = Vec::new();
    let mut in_body = false;
    for (i, line) in lines.enumerate() {
        let line = line?;
        let n = i + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(h) = t.strip_prefix('#') {
            let h = h.trim();
            if in_body {
                continue;
            }
            if h == COLUMNS {
                in_body = true;
                continue;
            }
            let Some((k, v)) = h.split_once('=') else {
                return Err(parse_err(n, format!("expected `# key = value`, got `{t}`")));
            };
            let (k, v) = (k.trim(), v.trim());
            let num = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| parse_err(n, format!("`{k}` is not a number: `{v}`")))
            };
            match k {
                "bin_width_ps" => bin_width = Some(num(v)?),
                "origin_ps" => origin = Some(num(v)?),
                "exposure_s" => exposure = num(v)?,
                _ => match k.strip_prefix("meta.") {
                    Some(mk) => {
                        meta.insert(mk.to_string(), v.to_string());
                    }
                    None => return Err(parse_err(n, format!("unknown header key `{k}`"))),
                },
            }
            continue;
        }
        if !in_body {
            return Err(parse_err(n, format!("data row before `# {COLUMNS}` line")));
        }
        let Some((_, c)) = t.split_once(',') else {
            return Err(parse_err(n, format!("expected `bin_start_ps,count`, got `{t}`")));
        };
        let c = c.trim();
        let count = c.parse::<u64>().map_err(|_| {
            if c.starts_with('-') {
                parse_err(n, format!("negative count `{c}`"))
            } else {
                parse_err(n, format!("count must be a non-negative integer, got `{c}`"))
            }
        })?;
        counts.push(count);
    }
    let bin_width = bin_width.ok_or_else(|| Error::MissingKeys(vec!["bin_width_ps".into()]))?;
    let mut h = TimeHistogram::new(bin_width, origin.unwrap_or(0.0), counts)?;
    h.exposure_s = exposure;
    h.metadata = meta;
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TimeHistogram {
        let mut h = TimeHistogram::new(100.0, -50.0, vec![0, 3, 17, 2]).unwrap();
        h.exposure_s = 12.5;
        h.metadata.insert("folded_period_ps".into(), "400".into());
        h
    }

    #[test]
    fn round_trip() {
        let h = sample();
        assert_eq!(parse_histogram(&format_histogram(&h)).unwrap(), h);
    }

    #[test]
    fn negative_count_cites_line() {
        let text = "# bin_width_ps = 100\n# bin_start_ps,count\n0,1\n100,-4\n";
        let err = parse_histogram(text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
        assert!(err.to_string().contains("negative"));
    }

    #[test]
    fn malformed_rows_rejected() {
        for bad in ["0;1", "0,1.5", "0,x"] {
            let text = format!("# bin_width_ps = 100\n# bin_start_ps,count\n{bad}\n");
            assert!(
                matches!(parse_histogram(&text), Err(Error::Parse { line: 3, .. })),
                "{bad}"
            );
        }
        assert!(parse_histogram("0,1\n").is_err());
        assert!(matches!(
            parse_histogram("# bin_start_ps,count\n"),
            Err(Error::MissingKeys(_))
        ));
    }
}
