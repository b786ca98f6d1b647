//! Text formats for path logs, projections and feature files.
//!
//! A path log is UTF-8, one record per line after a header:
//!
//! ```text
//! # codinet path log n=6 classes=8
//! 17	3	101101	0.912345,0.002000,...	147456	0.01,0.9,...
//! ```
//!
//! Fields are tab-separated: id, label, bitstring, relaxed values with six
//! decimals, cost in MACCs, prediction probabilities (shortest exact form).

#![allow(clippy::tabs_in_doc_comments)]

use std::fmt::Write as _;
use std::path::Path;

use codinet_core::analytics::{pca2, PathLog, PathRecord, Projection};
use codinet_core::net::{RelaxedPath, RoutingPath};

use crate::error::CliError;

const HEADER: &str = "# codinet path log";

pub fn format_path_log(log: &PathLog) -> String {
    let mut out = format!("{HEADER} n={} classes={}\n", log.depth(), log.num_classes());
    for r in log.records() {
        let relaxed = r.relaxed.values().iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(",");
        let probs = r.probs.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        writeln!(out, "{}\t{}\t{}\t{}\t{}\t{}", r.id, r.label, r.path.to_bitstring(), relaxed, r.cost_maccs, probs).expect("writing to a String");
    }
    out
}

fn data_err(line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("path log line {line}: {msg}"))
}

fn header_field(header: &str, key: &str) -> Option<usize> {
    header.split_whitespace().find_map(|w| w.strip_prefix(key)?.strip_prefix('=')?.parse().ok())
}

pub fn parse_path_log(text: &str) -> Result<PathLog, CliError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| data_err(1, "missing header"))?;
    if !header.starts_with(HEADER) {
        return Err(data_err(1, format!("expected header starting with {HEADER:?}")));
    }
    let n = header_field(header, "n").ok_or_else(|| data_err(1, "header lacks n="))?;
    let classes = header_field(header, "classes").ok_or_else(|| data_err(1, "header lacks classes="))?;
    let mut log = PathLog::new(n, classes);
    for (i, line) in lines.enumerate() {
        let ln = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(data_err(ln, format!("expected 6 tab-separated fields, got {}", f.len())));
        }
        let reals = |s: &str| -> Result<Vec<f64>, CliError> {
            s.split(',').map(|x| x.parse::<f64>().map_err(|_| data_err(ln, format!("bad number {x:?}")))).collect()
        };
        let rec = PathRecord {
            id: f[0].parse().map_err(|_| data_err(ln, "bad id"))?,
            label: f[1].parse().map_err(|_| data_err(ln, "bad label"))?,
            path: RoutingPath::parse_bitstring(f[2]).map_err(|e| data_err(ln, e))?,
            relaxed: RelaxedPath::new(reals(f[3])?).map_err(|e| data_err(ln, e))?,
            cost_maccs: f[4].parse().map_err(|_| data_err(ln, "bad cost"))?,
            probs: reals(f[5])?,
        };
        log.push(rec).map_err(|e| data_err(ln, e))?;
    }
    Ok(log)
}

pub fn write_path_log(log: &PathLog, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, format_path_log(log)).map_err(CliError::io(path))
}

pub fn read_path_log(path: &Path) -> Result<PathLog, CliError> {
    parse_path_log(&std::fs::read_to_string(path).map_err(CliError::io(path))?)
}

/// Relaxed paths plus their two leading principal components, as CSV.
pub fn format_projection(log: &PathLog) -> Result<(String, Projection), CliError> {
    let points: Vec<Vec<f64>> = log.records().iter().map(|r| r.relaxed.values().to_vec()).collect();
    let proj = pca2(&points)?;
    let mut out = String::from("id,label,path,pc1,pc2");
    for k in 0..log.depth() {
        write!(out, ",v{k}").expect("writing to a String");
    }
    out.push('\n');
    for (r, c) in log.records().iter().zip(&proj.coords) {
        write!(out, "{},{},{},{},{}", r.id, r.label, r.path.to_bitstring(), c[0], c[1]).expect("writing to a String");
        for v in r.relaxed.values() {
            write!(out, ",{v}").expect("writing to a String");
        }
        out.push('\n');
    }
    Ok((out, proj))
}

pub fn write_projection(log: &PathLog, path: &Path) -> Result<Projection, CliError> {
    let (text, proj) = format_projection(log)?;
    std::fs::write(path, text).map_err(CliError::io(path))?;
    Ok(proj)
}

/// One feature vector per non-empty line; values separated by commas or
/// whitespace.
pub fn parse_features(text: &str) -> Result<Vec<Vec<f64>>, CliError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            l.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|_| CliError::Data(format!("features line {}: bad number {s:?}", i + 1))))
                .collect()
        })
        .collect()
}
