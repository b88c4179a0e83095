//! Per-round CSV traces.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::runner::ExperimentRun;
use crate::error::{Error, Result};

pub const PER_ALGORITHM_COLUMNS: [&str; 7] = ["loss", "regret", "gate", "c", "nu", "v", "improvement"];

pub fn header(run: &ExperimentRun) -> Vec<String> {
    let mut cols = vec!["t".to_string(), "signal".to_string()];
    for r in &run.runs {
        cols.extend(PER_ALGORITHM_COLUMNS.iter().map(|c| format!("{}_{c}", r.spec.name)));
    }
    cols
}

/// Writes the trace to any writer: a header row, then one row per round.
pub fn write_csv<W: Write>(run: &ExperimentRun, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(run))?;
    for (i, signal) in run.signal.iter().enumerate() {
        let mut row = vec![(i + 1).to_string(), signal.to_string()];
        for r in &run.runs {
            let rec = &r.records[i];
            row.push(rec.loss.to_string());
            row.push(rec.regret.to_string());
            row.push(rec.gate.to_string());
            row.push(rec.count.to_string());
            row.push(rec.nu.to_string());
            row.push(rec.path_variation.to_string());
            row.push(rec.improvement.map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(run: &ExperimentRun) -> String {
    let mut buf = Vec::new();
    write_csv(run, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("CSV output is UTF-8")
}

/// Writes the trace to `path` through a temporary sibling file, so a failed
/// run never leaves a partial file behind.
pub fn emit_csv(run: &ExperimentRun, path: &Path) -> Result<()> {
    let tmp = temp_sibling(path);
    let io_err = |source: std::io::Error| Error::Io {
        path: path.to_owned(),
        source,
    };
    let file = fs::File::create(&tmp).map_err(io_err)?;
    if let Err(source) = write_csv(run, std::io::BufWriter::new(file)) {
        let _ = fs::remove_file(&tmp);
        return Err(Error::Csv {
            path: path.to_owned(),
            source,
        });
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_err(e)
    })
}

fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".{}.tmp", std::process::id()));
    path.with_file_name(name)
}
