//! CSV formats: observables (`basis,alpha,beta,S,E,N`), channel tables
//! (`n,m,y,e`) and per-command result tables. Lines starting with `#` are
//! comments. Floats are written with 17 significant digits.

use std::io::Write;
use std::path::Path;

use mdk_core::{Basis, Observables, SourceKind, Table3};

use crate::error::CliError;

pub const OBSERVABLES_HEADER: [&str; 6] = ["basis", "alpha", "beta", "S", "E", "N"];

/// Fixed, platform-independent float formatting.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn input_err(path: &Path, line: Option<u64>, msg: impl std::fmt::Display) -> CliError {
    match line {
        Some(l) => CliError::Input(format!("{}:{l}: {msg}", path.display())),
        None => CliError::Input(format!("{}: {msg}", path.display())),
    }
}

/// Rows `(n, m, y, e)` of a channel-table override file.
pub fn read_channel_table(path: &Path) -> Result<Vec<(usize, usize, f64, f64)>, CliError> {
    let text = read_text(path)?;
    let mut rdr = reader(&text);
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<(usize, usize, f64, f64)>() {
        let row =
            rec.map_err(|e| CliError::Config(format!("channel.table {}: {e}", path.display())))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Observables CSV body for both bases. Cells absent from `x` are omitted.
pub fn write_observables(
    out: &mut Vec<u8>,
    z: &Observables<f64>,
    x: &Observables<f64>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CliError::Other(e.to_string());
    w.write_record(OBSERVABLES_HEADER).map_err(csv_err)?;
    for obs in [z, x] {
        for a in SourceKind::ALL {
            for b in SourceKind::ALL {
                if !obs.is_present(a, b) {
                    continue;
                }
                let n = obs.n(a, b).map(|n| n.to_string()).unwrap_or_default();
                w.write_record([
                    obs.basis.symbol().to_string(),
                    a.symbol().to_string(),
                    b.symbol().to_string(),
                    fmt_f64(obs.s(a, b)),
                    fmt_f64(obs.e(a, b)),
                    n,
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush().map_err(|e| CliError::Other(e.to_string()))?;
    Ok(())
}

#[derive(Debug, serde::Deserialize)]
struct ObservableRow {
    basis: String,
    alpha: String,
    beta: String,
    #[serde(rename = "S")]
    s: f64,
    #[serde(rename = "E")]
    e: f64,
    #[serde(rename = "N", default)]
    n: Option<u64>,
}

fn kind(path: &Path, line: Option<u64>, s: &str) -> Result<SourceKind, CliError> {
    let mut chars = s.chars();
    match (chars.next().and_then(SourceKind::from_symbol), chars.next()) {
        (Some(k), None) => Ok(k),
        _ => Err(input_err(
            path,
            line,
            format!("source label {s:?} is not one of o, x, y"),
        )),
    }
}

/// Parses an observables file into `(Z, X)` tables.
pub fn read_observables(path: &Path) -> Result<(Observables<f64>, Observables<f64>), CliError> {
    let text = read_text(path)?;
    let mut rdr = reader(&text);
    let mut yields = [[[0.0; 3]; 3]; 2];
    let mut errors = [[[0.0; 3]; 3]; 2];
    let mut counts: [Table3<u64>; 2] = [[[0; 3]; 3]; 2];
    let mut has_counts = [true; 2];
    let mut present = [[[false; 3]; 3]; 2];
    let headers = rdr.headers().map_err(|e| input_err(path, None, e))?.clone();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| input_err(path, None, e))?;
        let line = rec.position().map(|p| p.line());
        let row: ObservableRow = rec
            .deserialize(Some(&headers))
            .map_err(|e| input_err(path, line, e))?;
        let basis = match row.basis.as_str() {
            "Z" | "z" => 0,
            "X" | "x" => 1,
            other => {
                return Err(input_err(
                    path,
                    line,
                    format!("basis {other:?} is not Z or X"),
                ))
            }
        };
        let (a, b) = (
            kind(path, line, &row.alpha)?.index(),
            kind(path, line, &row.beta)?.index(),
        );
        if present[basis][a][b] {
            return Err(input_err(
                path,
                line,
                format!("duplicate row {}/{}{}", row.basis, row.alpha, row.beta),
            ));
        }
        present[basis][a][b] = true;
        yields[basis][a][b] = row.s;
        errors[basis][a][b] = row.e;
        match row.n {
            Some(n) => counts[basis][a][b] = n,
            None => has_counts[basis] = false,
        }
    }
    let build = |i: usize, basis: Basis| {
        Observables::with_presence(
            basis,
            yields[i],
            errors[i],
            has_counts[i].then_some(counts[i]),
            present[i],
        )
        .map_err(|e| input_err(path, None, e))
    };
    Ok((build(0, Basis::Z)?, build(1, Basis::X)?))
}

/// Writes `bytes` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::io(p, e)),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

/// Appends `row` to `path`, writing `preamble` first when the file is new or empty.
pub fn append_row(path: &Path, preamble: &str, row: &str) -> Result<(), CliError> {
    let fresh = std::fs::metadata(path)
        .map(|m| m.len() == 0)
        .unwrap_or(true);
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    if fresh {
        f.write_all(preamble.as_bytes())
            .map_err(|e| CliError::io(path, e))?;
    }
    f.write_all(row.as_bytes())
        .map_err(|e| CliError::io(path, e))
}

/// One CSV line from already formatted fields.
pub fn csv_line<I, S>(fields: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(fields).expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}
