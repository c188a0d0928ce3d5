//! Trajectory logs: CSV with one comment line carrying the schema version and
//! the digest of the scenario that produced the run.
//!
//! ```text
//! # formation-log v1 scenario_digest=3f1c...
//! t,x_0,y_0,u_0,u_act_0,...,e_tail_0,e_head_0,mu_hat_0,...,centroid_x,centroid_y,orient
//! ```
//!
//! Floats are written in shortest round-trip form, so reading a log back
//! reproduces the records bit for bit. An absent estimate is an empty cell.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::sim::{EdgeRecord, RobotRecord, TickRecord};

pub const LOG_SCHEMA_VERSION: u32 = 1;
const MAGIC: &str = "# formation-log v";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogHeader {
    pub scenario_digest: String,
    pub robot_count: usize,
    pub edge_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub header: LogHeader,
    pub records: Vec<TickRecord>,
}

pub fn column_names(robot_count: usize, edge_count: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for i in 0..robot_count {
        cols.extend([
            format!("x_{i}"),
            format!("y_{i}"),
            format!("u_{i}"),
            format!("u_act_{i}"),
        ]);
    }
    for k in 0..edge_count {
        cols.extend([format!("e_tail_{k}"), format!("e_head_{k}"), format!("mu_hat_{k}")]);
    }
    cols.extend(["centroid_x".into(), "centroid_y".into(), "orient".into()]);
    cols
}

pub fn write_log<W: Write>(mut out: W, header: &LogHeader, records: &[TickRecord]) -> Result<()> {
    writeln!(
        out,
        "{MAGIC}{LOG_SCHEMA_VERSION} scenario_digest={}",
        header.scenario_digest
    )?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(column_names(header.robot_count, header.edge_count))?;
    let mut row: Vec<String> = Vec::new();
    for (idx, r) in records.iter().enumerate() {
        if r.robots.len() != header.robot_count || r.edges.len() != header.edge_count {
            return Err(Error::MalformedLog(format!(
                "record {idx} has {} robots and {} edges, header declares {} and {}",
                r.robots.len(),
                r.edges.len(),
                header.robot_count,
                header.edge_count
            )));
        }
        row.clear();
        row.push(r.t.to_string());
        for rb in &r.robots {
            row.extend([
                rb.x.to_string(),
                rb.y.to_string(),
                rb.u.to_string(),
                rb.u_act.to_string(),
            ]);
        }
        for e in &r.edges {
            row.extend([
                e.e_tail.to_string(),
                e.e_head.to_string(),
                e.mu_hat.map(|m| m.to_string()).unwrap_or_default(),
            ]);
        }
        row.extend([r.centroid.x.to_string(), r.centroid.y.to_string(), r.orient.to_string()]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_comment(line: &str) -> Result<String> {
    let line = line.trim_end_matches(['\r', '\n']);
    let rest = line
        .strip_prefix(MAGIC)
        .ok_or_else(|| Error::MalformedLog(format!("missing `{MAGIC}N` header line, found `{line}`")))?;
    let (version, tail) = rest.split_once(' ').unwrap_or((rest, ""));
    if version != LOG_SCHEMA_VERSION.to_string() {
        return Err(Error::SchemaVersion {
            found: version.to_string(),
            expected: LOG_SCHEMA_VERSION,
        });
    }
    let digest = tail
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("scenario_digest="))
        .ok_or_else(|| Error::MalformedLog("header line lacks scenario_digest".into()))?;
    Ok(digest.to_string())
}

fn counts_from_columns(cols: &csv::StringRecord) -> Result<(usize, usize)> {
    let n = cols.iter().filter(|c| c.starts_with("u_act_")).count();
    let m = cols.iter().filter(|c| c.starts_with("mu_hat_")).count();
    let expected = column_names(n, m);
    if cols.len() != expected.len() || cols.iter().zip(&expected).any(|(a, b)| a != b) {
        return Err(Error::MalformedLog(format!(
            "unexpected columns; expected `{}`",
            expected.join(",")
        )));
    }
    Ok((n, m))
}

pub fn read_log<R: Read>(input: R) -> Result<TrajectoryLog> {
    let mut input = BufReader::new(input);
    let mut first = String::new();
    input.read_line(&mut first)?;
    if first.is_empty() {
        return Err(Error::MalformedLog("empty file".into()));
    }
    let scenario_digest = parse_comment(&first)?;

    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let (robot_count, edge_count) = counts_from_columns(rdr.headers()?)?;

    let mut records = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let row = row?;
        let line = idx + 3;
        let mut cells = row.iter();
        let mut next = |name: &str| -> Result<&str> {
            cells
                .next()
                .ok_or_else(|| Error::MalformedLog(format!("line {line}: missing `{name}`")))
        };
        let num = |s: &str, name: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::MalformedLog(format!("line {line}: `{name}` = `{s}` is not a number")))
        };
        let t = num(next("t")?, "t")?;
        let mut robots = Vec::with_capacity(robot_count);
        for _ in 0..robot_count {
            robots.push(RobotRecord {
                x: num(next("x")?, "x")?,
                y: num(next("y")?, "y")?,
                u: num(next("u")?, "u")?,
                u_act: num(next("u_act")?, "u_act")?,
            });
        }
        let mut edges = Vec::with_capacity(edge_count);
        for _ in 0..edge_count {
            let e_tail = num(next("e_tail")?, "e_tail")?;
            let e_head = num(next("e_head")?, "e_head")?;
            let mu = next("mu_hat")?;
            edges.push(EdgeRecord {
                e_tail,
                e_head,
                mu_hat: if mu.is_empty() { None } else { Some(num(mu, "mu_hat")?) },
            });
        }
        let cx = num(next("centroid_x")?, "centroid_x")?;
        let cy = num(next("centroid_y")?, "centroid_y")?;
        let orient = num(next("orient")?, "orient")?;
        records.push(TickRecord {
            t,
            robots,
            edges,
            centroid: Vec2::new(cx, cy),
            orient,
        });
    }
    Ok(TrajectoryLog {
        header: LogHeader {
            scenario_digest,
            robot_count,
            edge_count,
        },
        records,
    })
}

pub fn log_to_string(header: &LogHeader, records: &[TickRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_log(&mut buf, header, records)?;
    Ok(String::from_utf8(buf).expect("log output is ASCII"))
}

pub fn log_from_str(text: &str) -> Result<TrajectoryLog> {
    read_log(text.as_bytes())
}

pub fn write_log_file(path: &Path, header: &LogHeader, records: &[TickRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_log(&mut out, header, records)?;
    out.flush()?;
    Ok(())
}

pub fn read_log_file(path: &Path) -> Result<TrajectoryLog> {
    read_log(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> LogHeader {
        LogHeader {
            scenario_digest: "ab".repeat(32),
            robot_count: 2,
            edge_count: 1,
        }
    }

    fn record(t: f64, mu: Option<f64>) -> TickRecord {
        TickRecord {
            t,
            robots: vec![
                RobotRecord {
                    x: 0.1,
                    y: -1.0 / 3.0,
                    u: 1e-17,
                    u_act: 0.0,
                },
                RobotRecord {
                    x: 1.0,
                    y: 2.0,
                    u: 0.5,
                    u_act: 0.5,
                },
            ],
            edges: vec![EdgeRecord {
                e_tail: 0.003,
                e_head: -0.003,
                mu_hat: mu,
            }],
            centroid: Vec2::new(0.55, 0.8333333333333334),
            orient: -2.5,
        }
    }

    #[test]
    fn column_order() {
        assert_eq!(
            column_names(2, 1).join(","),
            "t,x_0,y_0,u_0,u_act_0,x_1,y_1,u_1,u_act_1,e_tail_0,e_head_0,mu_hat_0,centroid_x,centroid_y,orient"
        );
    }

    #[test]
    fn empty_log_is_header_only() {
        let text = log_to_string(&header(), &[]).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back = log_from_str(&text).unwrap();
        assert!(back.records.is_empty());
        assert_eq!(back.header, header());
    }

    #[test]
    fn round_trip_is_exact() {
        let recs = vec![record(0.0, None), record(0.2, Some(0.0059999999999999))];
        let text = log_to_string(&header(), &recs).unwrap();
        let back = log_from_str(&text).unwrap();
        assert_eq!(back.records, recs);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let text = log_to_string(&header(), &[record(0.0, None)])
            .unwrap()
            .replacen("v1", "v2", 1);
        assert!(matches!(
            log_from_str(&text),
            Err(Error::SchemaVersion { expected: 1, .. })
        ));
    }

    #[test]
    fn garbage_is_a_typed_error() {
        assert!(matches!(log_from_str(""), Err(Error::MalformedLog(_))));
        assert!(matches!(log_from_str("t,x_0\n1,2\n"), Err(Error::MalformedLog(_))));
        let text = log_to_string(&header(), &[record(0.0, None)])
            .unwrap()
            .replace("0.003", "oops");
        assert!(matches!(log_from_str(&text), Err(Error::MalformedLog(_))));
    }
}
