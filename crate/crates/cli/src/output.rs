//! Atomic report and model writing.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use divdist::report::Report;

use crate::inputs::{Classify, CliResult};
use crate::Format;

fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut file = tempfile::NamedTempFile::new_in(&dir)
        .with_context(|| format!("cannot create a file in {}", dir.display()))
        .config()?;
    file.write_all(contents.as_bytes())
        .and_then(|_| file.as_file().sync_all())
        .with_context(|| format!("cannot write {}", path.display()))
        .config()?;
    file.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))
        .config()?;
    Ok(())
}

/// Writes text to `path`, or to stdout without one.
pub fn emit(path: Option<&Path>, contents: &str) -> CliResult<()> {
    match path {
        Some(p) => write_atomic(p, contents),
        None => std::io::stdout()
            .write_all(contents.as_bytes())
            .context("cannot write to stdout")
            .config(),
    }
}

/// CSV renderings go to `<stem>.<table>.csv` and `<stem>.summary.csv`
/// beside the requested path.
fn csv_path(path: &Path, table: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let safe: String = table
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '.'
            }
        })
        .collect();
    path.with_file_name(format!("{stem}.{safe}.csv"))
}

/// Writes the report and maps per-item errors to exit code 1.
pub fn finish(report: &Report, output: Option<&Path>, format: Format) -> CliResult<ExitCode> {
    report
        .validate()
        .context("internal error: report failed validation")
        .data()?;
    match format {
        Format::Json => emit(output, &report.to_json_string().data()?)?,
        Format::Csv => {
            let path = output.expect("csv output requires a path");
            for table in &report.tables {
                write_atomic(&csv_path(path, &table.name), &table.to_csv().data()?)?;
            }
            write_atomic(&csv_path(path, "summary"), &report.summary_csv().data()?)?;
        }
    }
    for e in &report.errors {
        eprintln!("{}: {}", e.item, e.error);
    }
    Ok(if report.errors.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
