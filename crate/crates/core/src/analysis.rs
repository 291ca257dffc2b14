//! Observables along a run and the power-law/log-law fits used to compare
//! them with the predicted decay rates.

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowState;
use crate::grid::{integrate_radial, Field};
use crate::metrics::{cusp_factor, gauss_curvature};

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub field: Field,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub sup_u_half: f64,
    pub dist_half: f64,
    #[serde(rename = "sup_abs_K")]
    pub sup_abs_k: f64,
    #[serde(rename = "min_K")]
    pub min_k: f64,
    pub functional_value: f64,
}

/// One accepted time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub error_estimate: f64,
    pub newton_iters: usize,
    pub functional_value: f64,
}

/// Parameters of `∫_{r ≤ region_r} φ(M − u) dA`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSpec {
    pub level: f64,
    pub region_r: f64,
}

impl FunctionalSpec {
    /// `M = u(r_max) − 1` over the whole grid, so that the boundary condition
    /// `u ≥ M + 1` holds for as long as the outer value is held fixed.
    pub fn for_state(state: &FlowState) -> Self {
        Self {
            level: state.bc_value - 1.0,
            region_r: state.u.grid().r_max(),
        }
    }

    pub fn evaluate(&self, u: &Field) -> Result<f64> {
        monotone_functional(u, self.level, self.region_r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub run_id: String,
    functional: FunctionalSpec,
    snapshots: Vec<Snapshot>,
    diagnostics: Vec<DiagnosticsRow>,
    steps: Vec<StepRecord>,
}

impl TimeSeries {
    pub fn new(run_id: impl Into<String>, functional: FunctionalSpec) -> Self {
        Self {
            run_id: run_id.into(),
            functional,
            snapshots: Vec::new(),
            diagnostics: Vec::new(),
            steps: Vec::new(),
        }
    }

    /// A series that carries only diagnostics rows (e.g. read back from CSV).
    pub fn from_rows(run_id: impl Into<String>, rows: Vec<DiagnosticsRow>) -> Result<Self> {
        check_increasing(rows.iter().map(|r| r.t))?;
        Ok(Self {
            run_id: run_id.into(),
            functional: FunctionalSpec {
                level: f64::NAN,
                region_r: f64::NAN,
            },
            snapshots: Vec::new(),
            diagnostics: rows,
            steps: Vec::new(),
        })
    }

    /// A series of bare snapshots, with diagnostics computed from them.
    pub fn from_snapshots(
        run_id: impl Into<String>,
        functional: FunctionalSpec,
        snapshots: Vec<Snapshot>,
    ) -> Result<Self> {
        let mut ts = Self::new(run_id, functional);
        for s in snapshots {
            ts.push_snapshot(s)?;
        }
        Ok(ts)
    }

    pub fn push_snapshot(&mut self, snapshot: Snapshot) -> Result<()> {
        if let Some(last) = self.snapshots.last() {
            if snapshot.t <= last.t {
                return Err(Error::InvalidArgument(format!(
                    "snapshot at t = {} does not follow t = {}",
                    snapshot.t, last.t
                )));
            }
        }
        let row = diagnostics_row(&snapshot.field, snapshot.t, &self.functional)?;
        self.snapshots.push(snapshot);
        self.diagnostics.push(row);
        Ok(())
    }

    pub fn push_step(&mut self, step: StepRecord) {
        self.steps.push(step);
    }

    pub fn functional(&self) -> &FunctionalSpec {
        &self.functional
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn diagnostics(&self) -> &[DiagnosticsRow] {
        &self.diagnostics
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

fn check_increasing(times: impl Iterator<Item = f64>) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for t in times {
        if !(t > prev) {
            return Err(Error::InvalidArgument(format!(
                "times must be strictly increasing ({t} after {prev})"
            )));
        }
        prev = t;
    }
    Ok(())
}

pub fn diagnostics_row(u: &Field, t: f64, functional: &FunctionalSpec) -> Result<DiagnosticsRow> {
    let grid = u.grid();
    let (sup_u_half, _) = u.sup_within(0.5);
    let dist_half = if grid.r_max() >= 0.5 {
        distance_to_half(u)?
    } else {
        f64::NAN
    };
    let k = gauss_curvature(u)?;
    let mut sup_abs_k = 0.0f64;
    let mut min_k = f64::INFINITY;
    for i in grid.interior() {
        let ki = k.values()[i];
        min_k = min_k.min(ki);
        if grid.r(i) <= 0.5 {
            sup_abs_k = sup_abs_k.max(ki.abs());
        }
    }
    let functional_value = if functional.level.is_finite() {
        functional.evaluate(u)?
    } else {
        f64::NAN
    };
    Ok(DiagnosticsRow {
        t,
        sup_u_half,
        dist_half,
        sup_abs_k,
        min_k,
        functional_value,
    })
}

/// Radial distance from the innermost node (the origin on a disc grid) to
/// `r = ½`. Radial lines are geodesics of rotationally symmetric metrics.
pub fn distance_to_half(u: &Field) -> Result<f64> {
    let grid = u.grid();
    if grid.r_max() < 0.5 || grid.r_min() >= 0.5 {
        return Err(Error::InvalidArgument(format!(
            "grid [{}, {}] does not reach r = 1/2",
            grid.r_min(),
            grid.r_max()
        )));
    }
    integrate_radial(u, grid.r_min(), 0.5)
}

/// Convex profile `φ`: `s` above 1, `(s+1)²/4` on (−1, 1), 0 below −1.
pub fn phi_convex(s: f64) -> f64 {
    if s >= 1.0 {
        s
    } else if s <= -1.0 {
        0.0
    } else {
        0.25 * (s + 1.0) * (s + 1.0)
    }
}

/// `∫_{r ≤ region_r} φ(M − u) dA` with the flat area element, summed over
/// the finite-volume cells (the node nearest `region_r` contributes its inner
/// half-cell).
pub fn monotone_functional(u: &Field, level: f64, region_r: f64) -> Result<f64> {
    let grid = u.grid();
    if !(region_r > grid.r_min() && region_r <= grid.r_max()) {
        return Err(Error::InvalidArgument(format!(
            "region radius {region_r} is outside the grid ({}, {}]",
            grid.r_min(),
            grid.r_max()
        )));
    }
    let last = grid.nearest(region_r).max(1);
    let mut total = 0.0;
    for i in 0..last {
        total += grid.cell_measure(i) * phi_convex(level - u.values()[i]);
    }
    let face = 0.5 * (grid.r(last - 1) + grid.r(last));
    let edge = 0.5 * (grid.r(last) * grid.r(last) - face * face);
    total += edge * phi_convex(level - u.values()[last]);
    Ok(2.0 * PI * total)
}

/// Circumference of the circle `|z| = r` in the hyperbolic cusp metric.
pub fn cusp_circumference(r: f64) -> Result<f64> {
    Ok(2.0 * PI * r * cusp_factor(r)?.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    SupUHalf,
    DistHalf,
    SupAbsK,
    MinK,
    FunctionalValue,
}

impl Observable {
    pub fn of(&self, row: &DiagnosticsRow) -> f64 {
        match self {
            Observable::SupUHalf => row.sup_u_half,
            Observable::DistHalf => row.dist_half,
            Observable::SupAbsK => row.sup_abs_k,
            Observable::MinK => row.min_k,
            Observable::FunctionalValue => row.functional_value,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Observable::SupUHalf => "sup_u_half",
            Observable::DistHalf => "dist_half",
            Observable::SupAbsK => "sup_abs_K",
            Observable::MinK => "min_K",
            Observable::FunctionalValue => "functional_value",
        }
    }
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sup_u_half" => Observable::SupUHalf,
            "dist_half" => Observable::DistHalf,
            "sup_abs_K" | "sup_abs_k" => Observable::SupAbsK,
            "min_K" | "min_k" => Observable::MinK,
            "functional_value" => Observable::FunctionalValue,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown observable {other:?}"
                )));
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Window {
    /// Drop the outer 15% of the log-time range on each side, then keep the
    /// longest stretch on which the observable is monotone.
    Auto,
    Explicit {
        t_lo: f64,
        t_hi: f64,
    },
}

/// Fraction of the log-time range trimmed from each end by [`Window::Auto`].
pub const AUTO_TRIM: f64 = 0.15;

fn positive_rows(series: &TimeSeries) -> Vec<&DiagnosticsRow> {
    series.diagnostics().iter().filter(|r| r.t > 0.0).collect()
}

/// Resolves a window to concrete `(t_lo, t_hi)` for an observable.
pub fn resolve_window(
    series: &TimeSeries,
    observable: Observable,
    window: Window,
) -> Result<(f64, f64)> {
    match window {
        Window::Explicit { t_lo, t_hi } => {
            if !(t_lo < t_hi) {
                return Err(Error::InvalidArgument(format!(
                    "empty window [{t_lo}, {t_hi}]"
                )));
            }
            Ok((t_lo, t_hi))
        }
        Window::Auto => auto_window(series, observable),
    }
}

pub fn auto_window(series: &TimeSeries, observable: Observable) -> Result<(f64, f64)> {
    let rows = positive_rows(series);
    if rows.len() < 2 {
        return Err(Error::InsufficientData(
            "need at least two snapshots with t > 0".into(),
        ));
    }
    let lo = rows[0].t.ln();
    let hi = rows[rows.len() - 1].t.ln();
    let (a, b) = (lo + AUTO_TRIM * (hi - lo), hi - AUTO_TRIM * (hi - lo));
    let kept: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| (a..=b).contains(&r.t.ln()))
        .map(|r| (r.t, observable.of(r)))
        .filter(|(_, y)| y.is_finite())
        .collect();
    if kept.len() < 2 {
        return Err(Error::InsufficientData(
            "automatic window holds fewer than two snapshots".into(),
        ));
    }
    // longest monotone run (either direction)
    let mut best = (0, 0);
    for dir in [1.0, -1.0] {
        let mut start = 0;
        for i in 1..kept.len() {
            if dir * (kept[i].1 - kept[i - 1].1) < 0.0 {
                start = i;
            }
            if i - start > best.1 - best.0 {
                best = (start, i);
            }
        }
    }
    if best.1 == best.0 {
        return Err(Error::InsufficientData(
            "observable is not monotone anywhere in the window".into(),
        ));
    }
    Ok((kept[best.0].0, kept[best.1].0))
}

/// Time range over which an observable stays inside `[lo, hi]`.
pub fn value_band_window(
    series: &TimeSeries,
    observable: Observable,
    lo: f64,
    hi: f64,
) -> Result<(f64, f64)> {
    let times: Vec<f64> = positive_rows(series)
        .into_iter()
        .filter(|r| (lo..=hi).contains(&observable.of(r)))
        .map(|r| r.t)
        .collect();
    match (times.first(), times.last()) {
        (Some(&a), Some(&b)) if a < b => Ok((a, b)),
        _ => Err(Error::InsufficientData(format!(
            "{} never spans the band [{lo}, {hi}] at two snapshots",
            observable.name()
        ))),
    }
}

fn rows_in(series: &TimeSeries, (t_lo, t_hi): (f64, f64)) -> Vec<&DiagnosticsRow> {
    positive_rows(series)
        .into_iter()
        .filter(|r| r.t >= t_lo && r.t <= t_hi)
        .collect()
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn least_squares(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return Err(Error::InsufficientData(format!(
            "least squares needs ≥ 2 points, got {n}"
        )));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - slope * a - intercept).powi(2))
        .sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    Ok((slope, intercept, r2.clamp(0.0, 1.0)))
}

fn fit(
    series: &TimeSeries,
    window: (f64, f64),
    min_points: usize,
    x: impl Fn(f64) -> f64,
    y: impl Fn(&DiagnosticsRow) -> Result<f64>,
) -> Result<FitResult> {
    let rows = rows_in(series, window);
    if rows.len() < min_points {
        return Err(Error::InsufficientData(format!(
            "window [{}, {}] holds {} snapshots, need {min_points}",
            window.0,
            window.1,
            rows.len()
        )));
    }
    let xs: Vec<f64> = rows.iter().map(|r| x(r.t)).collect();
    let ys = rows.iter().map(|r| y(r)).collect::<Result<Vec<f64>>>()?;
    let (slope, intercept, r_squared) = least_squares(&xs, &ys)?;
    Ok(FitResult {
        slope,
        intercept,
        r_squared,
        window,
        points: rows.len(),
    })
}

/// Fits `dist_half ≈ slope·(−ln t) + intercept`.
pub fn fit_diameter_law(series: &TimeSeries, window: Window) -> Result<FitResult> {
    let w = resolve_window(series, Observable::DistHalf, window)?;
    fit(series, w, 6, |t| -t.ln(), |r| Ok(r.dist_half))
}

fn log_of(observable: Observable) -> impl Fn(&DiagnosticsRow) -> Result<f64> {
    move |r| {
        let y = observable.of(r);
        if y > 0.0 {
            Ok(y.ln())
        } else {
            Err(Error::InvalidArgument(format!(
                "{} = {y} at t = {} is not positive",
                observable.name(),
                r.t
            )))
        }
    }
}

/// Fits `ln sup_{r≤½} u ≈ slope·ln t + intercept`.
pub fn fit_sup_factor_exponent(series: &TimeSeries, window: Window) -> Result<FitResult> {
    let w = resolve_window(series, Observable::SupUHalf, window)?;
    fit(series, w, 3, f64::ln, log_of(Observable::SupUHalf))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupReport {
    pub fit: FitResult,
    /// `t·sup|K|` grows strictly as `t` decreases through the window.
    pub type_iic: bool,
    pub t_times_k: Vec<(f64, f64)>,
}

/// Fits `ln sup_{r≤½}|K| ≈ slope·ln t + intercept` and checks whether
/// `t·sup|K|` increases as `t` decreases.
pub fn fit_curvature_blowup(series: &TimeSeries, window: Window) -> Result<BlowupReport> {
    let w = resolve_window(series, Observable::SupAbsK, window)?;
    let rows = rows_in(series, w);
    if rows.is_empty() {
        return Err(Error::InsufficientData("empty window".into()));
    }
    let fit = fit(series, w, 2, f64::ln, log_of(Observable::SupAbsK))?;
    let t_times_k: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.t * r.sup_abs_k)).collect();
    let type_iic = t_times_k.windows(2).all(|p| p[0].1 > p[1].1 * (1.0 + 1e-9));
    Ok(BlowupReport {
        fit,
        type_iic,
        t_times_k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Persistence {
    Crossed(f64),
    BeyondHorizon,
}

impl Persistence {
    pub fn time(&self) -> Option<f64> {
        match self {
            Persistence::Crossed(t) => Some(*t),
            Persistence::BeyondHorizon => None,
        }
    }
}

/// Drop below the initial value that ends persistence.
pub const PERSISTENCE_DROP: f64 = 1.0;

/// First time `u(r_probe, t)` falls below `a(r_probe) − 1`, with `a` the
/// first snapshot of the series, interpolated linearly between snapshots.
pub fn persistence_time(series: &TimeSeries, r_probe: f64) -> Result<Persistence> {
    let snaps = series.snapshots();
    let first = snaps
        .first()
        .ok_or_else(|| Error::InsufficientData("series has no snapshots".into()))?;
    let grid = first.field.grid();
    if !(r_probe >= grid.r_min() && r_probe <= grid.r_max()) {
        return Err(crate::error::out_of_domain(
            "r_probe",
            r_probe,
            format!("[{}, {}]", grid.r_min(), grid.r_max()),
        ));
    }
    let threshold = first.field.value_at(r_probe) - PERSISTENCE_DROP;
    let mut prev = (first.t, first.field.value_at(r_probe));
    for s in &snaps[1..] {
        let u = s.field.value_at(r_probe);
        if u < threshold {
            let frac = (prev.1 - threshold) / (prev.1 - u);
            return Ok(Persistence::Crossed(prev.0 + frac * (s.t - prev.0)));
        }
        prev = (s.t, u);
    }
    Ok(Persistence::BeyondHorizon)
}
