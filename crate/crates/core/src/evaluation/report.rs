use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::evaluation::{EvalError, ExperimentReport, Method};

pub const CSV_HEADER: &str = "method,k,fold0,fold1,fold2,fold3,fold4,mae,predictions,fallbacks,skipped";

fn mae4(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "NA".to_owned()
    }
}

pub fn format_csv(reports: &[ExperimentReport]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in reports {
        let folds: Vec<String> = r.fold_mae.iter().map(|&m| mae4(m)).collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method,
            r.k,
            folds.join(","),
            mae4(r.mae),
            r.predictions,
            r.fallbacks,
            r.skipped
        )
        .unwrap();
    }
    out
}

/// Neighborhood sizes down the side, one MAE column per method.
pub fn format_table(reports: &[ExperimentReport]) -> String {
    let mut methods: Vec<Method> = Vec::new();
    let mut ks: Vec<usize> = Vec::new();
    for r in reports {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
        if !ks.contains(&r.k) {
            ks.push(r.k);
        }
    }
    let mut out = String::new();
    write!(out, "{:<22}", "Number of Neighbours").unwrap();
    for m in &methods {
        write!(out, "{:>8}", m.to_string()).unwrap();
    }
    out.push('\n');
    for k in ks {
        write!(out, "{k:<22}").unwrap();
        for m in &methods {
            let cell = reports
                .iter()
                .find(|r| r.k == k && r.method == *m)
                .map_or_else(|| "-".to_owned(), |r| mae4(r.mae));
            write!(out, "{cell:>8}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Writes the CSV to `path` and the comparison table next to it with a
/// `.txt` extension. Returns the table.
pub fn emit_report(reports: &[ExperimentReport], path: impl AsRef<Path>) -> Result<String, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let path = path.as_ref();
    let io_err = |p: &Path| {
        let p = p.to_path_buf();
        move |source| EvalError::Io { path: p, source }
    };
    fs::write(path, format_csv(reports)).map_err(io_err(path))?;
    let table = format_table(reports);
    let table_path = path.with_extension("txt");
    fs::write(&table_path, &table).map_err(io_err(&table_path))?;
    Ok(table)
}
