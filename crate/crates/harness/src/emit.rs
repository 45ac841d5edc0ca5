use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::OutputFormat;
use crate::record::{PipelineFailure, ResultRecord, Table, Timestamps};

#[derive(Debug, thiserror::Error)]
#[error("cannot write {}: {source}", path.display())]
pub struct EmitError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EmitError + '_ {
    move |source| EmitError {
        path: path.to_owned(),
        source,
    }
}

pub fn table_csv(table: &Table) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    w.write_record(&table.columns).expect("in-memory write");
    for row in &table.rows {
        w.write_record(row.iter().map(|c| c.render()))
            .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// `(x, y)` pairs: first column against each later numeric column.
pub fn table_plotdata(table: &Table) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for (ci, col) in table.columns.iter().enumerate().skip(1) {
        let mut body = String::new();
        for row in &table.rows {
            if let (Some(x), Some(y)) = (row[0].as_f64(), row[ci].as_f64()) {
                body.push_str(ryu::Buffer::new().format(x));
                body.push(' ');
                body.push_str(ryu::Buffer::new().format(y));
                body.push('\n');
            }
        }
        if table.rows.iter().any(|r| r[ci].as_f64().is_some()) || table.rows.is_empty() {
            out.push((format!("{}__{}.dat", table.name, col), body));
        }
    }
    out
}

#[derive(Serialize)]
struct Provenance<'a> {
    table: &'a str,
    operation: &'a str,
    seed: u64,
    label: &'a Option<String>,
    rows: usize,
    notes: &'a [String],
}

#[derive(Serialize)]
struct Metadata<'a> {
    schema_version: u32,
    config_digest: &'a str,
    master_seed: u64,
    timestamps: &'a Timestamps,
    provenance: Vec<Provenance<'a>>,
    failures: &'a [PipelineFailure],
}

pub fn record_json(record: &ResultRecord) -> String {
    serde_json::to_string_pretty(record).expect("record serializes")
}

pub fn parse_record_json(text: &str) -> serde_json::Result<ResultRecord> {
    serde_json::from_str(text)
}

fn write(path: PathBuf, bytes: &[u8], written: &mut Vec<PathBuf>) -> Result<(), EmitError> {
    let mut f = fs::File::create(&path).map_err(io_err(&path))?;
    f.write_all(bytes).map_err(io_err(&path))?;
    written.push(path);
    Ok(())
}

/// Writes the record in each format plus `metadata.json`, the only file
/// holding timestamps. Returns the written paths.
pub fn emit_results(
    record: &ResultRecord,
    formats: &[OutputFormat],
    dir: &Path,
) -> Result<Vec<PathBuf>, EmitError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for format in formats {
        match format {
            OutputFormat::Csv => {
                for t in &record.tables {
                    write(
                        dir.join(format!("{}.csv", t.name)),
                        &table_csv(t),
                        &mut written,
                    )?;
                }
            }
            OutputFormat::Json => write(
                dir.join("record.json"),
                record_json(record).as_bytes(),
                &mut written,
            )?,
            OutputFormat::Plotdata => {
                for t in &record.tables {
                    for (name, body) in table_plotdata(t) {
                        write(dir.join(name), body.as_bytes(), &mut written)?;
                    }
                }
            }
        }
    }
    let meta = Metadata {
        schema_version: record.schema_version,
        config_digest: &record.config_digest,
        master_seed: record.master_seed,
        timestamps: &record.timestamps,
        provenance: record
            .tables
            .iter()
            .map(|t| Provenance {
                table: &t.name,
                operation: &t.operation,
                seed: t.seed,
                label: &t.label,
                rows: t.rows.len(),
                notes: &t.notes,
            })
            .collect(),
        failures: &record.failures,
    };
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    write(dir.join("metadata.json"), text.as_bytes(), &mut written)?;
    Ok(written)
}
