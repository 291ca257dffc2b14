//! The `fit` command: decay-law fits over a saved `diagnostics.csv`.

use std::path::Path;

use cuspflow::analysis::{DiagnosticsRow, Observable, TimeSeries, Window};
use serde::Deserialize;

use crate::simulate::{fit_observable, FitRow};
use crate::CliError;

#[derive(Debug, Deserialize)]
struct Record {
    run_id: String,
    t: f64,
    sup_u_half: f64,
    dist_half: f64,
    #[serde(rename = "sup_abs_K")]
    sup_abs_k: f64,
    #[serde(rename = "min_K")]
    min_k: f64,
    functional_value: f64,
}

/// Reads a diagnostics CSV into one series per run, in order of first
/// appearance.
pub fn read_series(path: &Path) -> Result<Vec<TimeSeries>, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut groups: Vec<(String, Vec<DiagnosticsRow>)> = Vec::new();
    for rec in reader.deserialize() {
        let rec: Record = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let row = DiagnosticsRow {
            t: rec.t,
            sup_u_half: rec.sup_u_half,
            dist_half: rec.dist_half,
            sup_abs_k: rec.sup_abs_k,
            min_k: rec.min_k,
            functional_value: rec.functional_value,
        };
        match groups.iter_mut().find(|(id, _)| *id == rec.run_id) {
            Some((_, rows)) => rows.push(row),
            None => groups.push((rec.run_id, vec![row])),
        }
    }
    groups
        .into_iter()
        .map(|(id, rows)| TimeSeries::from_rows(id, rows).map_err(CliError::from))
        .collect()
}

/// Parses `t_lo,t_hi`.
pub fn parse_window(text: &str) -> Result<Window, CliError> {
    let bad = || CliError::Config(format!("window must be `t_lo,t_hi`, got {text:?}"));
    let (lo, hi) = text.split_once(',').ok_or_else(bad)?;
    let t_lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let t_hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(t_lo > 0.0 && t_lo < t_hi) {
        return Err(CliError::Config(format!(
            "window needs 0 < t_lo < t_hi, got {text:?}"
        )));
    }
    Ok(Window::Explicit { t_lo, t_hi })
}

pub fn fit_file(
    path: &Path,
    observable: Observable,
    window: Window,
) -> Result<Vec<FitRow>, CliError> {
    read_series(path)?
        .iter()
        .map(|s| {
            fit_observable(s, observable, window).map(|f| FitRow::new(&s.run_id, observable, &f))
        })
        .collect()
}
