//! The `simulate` pipeline: sweep, checks, fits, CSV output.

use std::path::Path;

use cuspflow::analysis::{
    fit_curvature_blowup, fit_diameter_law, fit_sup_factor_exponent, FitResult, Observable,
    TimeSeries, Window,
};
use cuspflow::barriers::{
    check_moving_cap, check_rate_bound, check_static_upper, fit_rate_bound, BARRIER_TOL,
};
use cuspflow::flow::{init_state, run_lockstep, BcMode, ExactSolution};
use cuspflow::metrics::gauss_curvature;
use cuspflow::surgery::{
    measured_curvature_bound_of, truncate, verify_truncation, Factor, TruncationReport,
};
use cuspflow::MetricSpec;
use serde::Serialize;

use crate::config::{Check, ExperimentConfig};
use crate::CliError;

/// Largest per-step increase of the monotone functional still counted as
/// nonincreasing.
pub const FUNCTIONAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationRow {
    pub run_id: String,
    pub check: String,
    pub t: f64,
    pub worst_r: f64,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitRow {
    pub run_id: String,
    pub observable: String,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub t_lo: f64,
    pub t_hi: f64,
}

impl FitRow {
    pub fn new(run_id: &str, observable: Observable, fit: &FitResult) -> Self {
        Self {
            run_id: run_id.to_string(),
            observable: observable.name().to_string(),
            slope: fit.slope,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
            t_lo: fit.window.0,
            t_hi: fit.window.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub series: Vec<TimeSeries>,
    pub violations: Vec<ViolationRow>,
    pub fits: Vec<FitRow>,
    /// Fits that could not be made, as `(run_id, observable, reason)`.
    pub skipped_fits: Vec<(String, String, String)>,
    pub beta_hat: Option<f64>,
}

impl Outcome {
    pub fn failures(&self) -> impl Iterator<Item = &ViolationRow> {
        self.violations.iter().filter(|v| !v.pass)
    }

    pub fn passed(&self) -> bool {
        self.failures().next().is_none()
    }
}

/// Runs every level of the sweep in lockstep on a pool of `jobs` threads
/// (`0` for the rayon default) and evaluates the enabled checks.
pub fn simulate(cfg: &ExperimentConfig, jobs: usize) -> Result<Outcome, CliError> {
    let grid = cfg.build_grid()?;
    let runs = cfg.runs();
    let mut members = Vec::with_capacity(runs.len());
    for (id, spec) in &runs {
        let u0 = spec.sample(grid.clone())?.shifted(cfg.initial_shift)?;
        members.push((id.clone(), init_state(u0, BcMode::Freeze)?));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    let series = pool
        .install(|| run_lockstep(members, cfg.t_end, &cfg.solver, &cfg.snapshot_times))
        .map_err(CliError::Solver)?;

    let mut violations = Vec::new();
    let mut beta_hat = None;
    for check in &cfg.checks {
        match check {
            Check::StaticUpper => {
                for run in &series {
                    for s in run.snapshots() {
                        violations.push(row(&run.run_id, check_static_upper(&s.field, s.t)?));
                    }
                }
            }
            Check::MovingCap => {
                for run in &series {
                    for s in run.snapshots().iter().filter(|s| s.t > 0.0 && s.t < 1.0) {
                        violations.push(row(&run.run_id, check_moving_cap(&s.field, s.t)?));
                    }
                }
            }
            Check::RateBound => {
                let (rows, beta) = rate_bound_rows(&series, cfg.beta_max)?;
                violations.extend(rows);
                beta_hat = beta;
            }
            Check::Comparison => violations.extend(comparison_rows(&series)?),
            Check::Truncation => violations.extend(truncation_rows(cfg, &runs)?),
            Check::Functional => violations.extend(functional_rows(&series)?),
        }
    }

    let mut fits = Vec::new();
    let mut skipped_fits = Vec::new();
    for run in &series {
        for observable in [
            Observable::DistHalf,
            Observable::SupUHalf,
            Observable::SupAbsK,
        ] {
            match fit_observable(run, observable, Window::Auto) {
                Ok(fit) => fits.push(FitRow::new(&run.run_id, observable, &fit)),
                Err(e) => skipped_fits.push((
                    run.run_id.clone(),
                    observable.name().to_string(),
                    e.to_string(),
                )),
            }
        }
    }

    Ok(Outcome {
        series,
        violations,
        fits,
        skipped_fits,
        beta_hat,
    })
}

/// The law fitted for each observable: the diameter law for `dist_half`,
/// power laws in `t` for the two suprema.
pub fn fit_observable(
    series: &TimeSeries,
    observable: Observable,
    window: Window,
) -> Result<FitResult, CliError> {
    Ok(match observable {
        Observable::DistHalf => fit_diameter_law(series, window)?,
        Observable::SupUHalf => fit_sup_factor_exponent(series, window)?,
        Observable::SupAbsK => fit_curvature_blowup(series, window)?.fit,
        other => {
            return Err(CliError::Config(format!(
                "no fit law for observable {}",
                other.name()
            )));
        }
    })
}

fn row(run_id: &str, rep: cuspflow::barriers::ViolationReport) -> ViolationRow {
    ViolationRow {
        run_id: run_id.to_string(),
        check: rep.check,
        t: rep.t,
        worst_r: rep.worst_r,
        margin: rep.margin,
        pass: rep.pass,
    }
}

fn excess_row(run_id: String, check: &str, t: f64, worst: (f64, f64)) -> ViolationRow {
    ViolationRow {
        run_id,
        check: check.to_string(),
        t,
        worst_r: worst.1,
        margin: worst.0,
        pass: worst.0 <= BARRIER_TOL,
    }
}

/// One `β̂` for the whole sweep, then `t·sup u − β̂` per snapshot and a
/// summary row `β̂ − beta_max`.
fn rate_bound_rows(
    series: &[TimeSeries],
    beta_max: f64,
) -> Result<(Vec<ViolationRow>, Option<f64>), CliError> {
    let mut beta: Option<(f64, f64)> = None;
    for run in series {
        let b = match fit_rate_bound(run) {
            Ok(b) => b,
            // no snapshot inside (0, 1)
            Err(cuspflow::Error::InsufficientData(_)) => continue,
            Err(e) => return Err(e.into()),
        };
        let at = run
            .diagnostics()
            .iter()
            .filter(|r| r.t > 0.0 && r.t < 1.0)
            .find(|r| r.t * r.sup_u_half.max(0.0) == b)
            .map_or(f64::NAN, |r| r.t);
        if beta.is_none_or(|(best, _)| b > best) {
            beta = Some((b, at));
        }
    }
    let Some((beta_hat, t_at)) = beta else {
        return Ok((Vec::new(), None));
    };
    let mut rows = Vec::new();
    for run in series {
        for s in run.snapshots().iter().filter(|s| s.t > 0.0 && s.t < 1.0) {
            rows.push(row(&run.run_id, check_rate_bound(&s.field, s.t, beta_hat)?));
        }
    }
    let margin = beta_hat - beta_max;
    rows.push(ViolationRow {
        run_id: "sweep".into(),
        check: "rate_bound_fit".into(),
        t: t_at,
        worst_r: 0.5,
        margin,
        pass: margin <= 0.0,
    });
    Ok((rows, Some(beta_hat)))
}

/// `u_a ≤ u_b` for consecutive levels, and every run below the exact cusp
/// flow, at each snapshot.
fn comparison_rows(series: &[TimeSeries]) -> Result<Vec<ViolationRow>, CliError> {
    let mut rows = Vec::new();
    for pair in series.windows(2) {
        let id = format!("{}<={}", pair[0].run_id, pair[1].run_id);
        for (a, b) in pair[0].snapshots().iter().zip(pair[1].snapshots()) {
            let worst = a
                .field
                .grid()
                .nodes()
                .iter()
                .zip(a.field.values().iter().zip(b.field.values()))
                .map(|(&r, (x, y))| (x - y, r))
                .fold(
                    (f64::NEG_INFINITY, f64::NAN),
                    |m, p| if p.0 > m.0 { p } else { m },
                );
            rows.push(excess_row(id.clone(), "comparison", a.t, worst));
        }
    }
    for run in series {
        let id = format!("{}<=cusp", run.run_id);
        for s in run.snapshots() {
            let mut worst = (f64::NEG_INFINITY, f64::NAN);
            for (&r, &u) in s.field.grid().nodes().iter().zip(s.field.values()) {
                if r == 0.0 {
                    continue;
                }
                let d = u - ExactSolution::Cusp.eval(r, s.t)?;
                if d > worst.0 {
                    worst = (d, r);
                }
            }
            rows.push(excess_row(id.clone(), "comparison", s.t, worst));
        }
    }
    Ok(rows)
}

/// Properties of each truncation at `t = 0`; the margin is the curvature
/// shortfall below `−e²M − 0.05`.
fn truncation_rows(
    cfg: &ExperimentConfig,
    runs: &[(String, MetricSpec)],
) -> Result<Vec<ViolationRow>, CliError> {
    let grid = cfg.build_grid()?;
    let cusp = MetricSpec::HyperbolicCusp;
    let mut rows = Vec::new();
    let mut m_bound = None;
    for (id, spec) in runs {
        let MetricSpec::TruncatedCusp { k } = *spec else {
            continue;
        };
        let m = match m_bound {
            Some(m) => m,
            None => *m_bound.insert(measured_curvature_bound_of(&cusp, &grid)?),
        };
        let u = truncate(Factor::Metric(&cusp), &grid, k)?;
        let rep = verify_truncation(&u, Factor::Metric(&cusp), k, m)?;
        rows.push(ViolationRow {
            run_id: id.clone(),
            check: "truncation".into(),
            t: 0.0,
            worst_r: rep.equal_beyond,
            margin: rep.curvature_floor - TruncationReport::CURVATURE_TOL - rep.min_curvature,
            pass: rep.passed(),
        });
    }
    Ok(rows)
}

/// Largest per-step increase of `∫φ(M − u)` along each run.
fn functional_rows(series: &[TimeSeries]) -> Result<Vec<ViolationRow>, CliError> {
    let mut rows = Vec::new();
    for run in series {
        let first = &run.snapshots()[0];
        let mut prev = run.functional().evaluate(&first.field)?;
        let mut worst = (f64::NEG_INFINITY, first.t);
        for step in run.steps() {
            let inc = step.functional_value - prev;
            if inc > worst.0 {
                worst = (inc, step.t);
            }
            prev = step.functional_value;
        }
        if run.steps().is_empty() {
            worst.0 = 0.0;
        }
        rows.push(ViolationRow {
            run_id: run.run_id.clone(),
            check: "functional".into(),
            t: worst.1,
            worst_r: run.functional().region_r,
            margin: worst.0,
            pass: worst.0 <= FUNCTIONAL_TOL,
        });
    }
    Ok(rows)
}

#[derive(Serialize)]
struct SnapshotRow<'a> {
    run_id: &'a str,
    t: f64,
    r: f64,
    u: f64,
    #[serde(rename = "K")]
    k: f64,
}

#[derive(Serialize)]
struct DiagnosticsCsvRow<'a> {
    run_id: &'a str,
    t: f64,
    sup_u_half: f64,
    dist_half: f64,
    #[serde(rename = "sup_abs_K")]
    sup_abs_k: f64,
    #[serde(rename = "min_K")]
    min_k: f64,
    functional_value: f64,
}

pub const SNAPSHOTS_CSV: &str = "snapshots.csv";
pub const DIAGNOSTICS_CSV: &str = "diagnostics.csv";
pub const VIOLATIONS_CSV: &str = "violations.csv";
pub const FITS_CSV: &str = "fits.csv";

/// Writes the four CSV files into `dir`, creating it if needed.
pub fn write_outputs(outcome: &Outcome, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;

    let mut w = csv::Writer::from_path(dir.join(SNAPSHOTS_CSV))?;
    for run in &outcome.series {
        for s in run.snapshots() {
            let k = gauss_curvature(&s.field)?;
            for ((&r, &u), &k) in s
                .field
                .grid()
                .nodes()
                .iter()
                .zip(s.field.values())
                .zip(k.values())
            {
                w.serialize(SnapshotRow {
                    run_id: &run.run_id,
                    t: s.t,
                    r,
                    u,
                    k,
                })?;
            }
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(DIAGNOSTICS_CSV))?;
    for run in &outcome.series {
        for d in run.diagnostics() {
            w.serialize(DiagnosticsCsvRow {
                run_id: &run.run_id,
                t: d.t,
                sup_u_half: d.sup_u_half,
                dist_half: d.dist_half,
                sup_abs_k: d.sup_abs_k,
                min_k: d.min_k,
                functional_value: d.functional_value,
            })?;
        }
    }
    w.flush()?;

    write_rows(
        &dir.join(VIOLATIONS_CSV),
        &outcome.violations,
        &["run_id", "check", "t", "worst_r", "margin", "pass"],
    )?;
    write_rows(
        &dir.join(FITS_CSV),
        &outcome.fits,
        &[
            "run_id",
            "observable",
            "slope",
            "intercept",
            "r_squared",
            "t_lo",
            "t_hi",
        ],
    )?;
    Ok(())
}

/// Headers are written explicitly so that empty tables still carry them.
fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
