//! Flat TOML experiment configuration.
//!
//! Every key is top level; unknown keys are rejected.  Only `n_nodes`,
//! `r_max`, `initial_metric` and `t_end` are required.
//!
//! ```toml
//! n_nodes = 2049
//! r_max = 0.9
//! initial_metric = "truncated_cusp"
//! truncation_levels = [4, 8, 12]
//! t_end = 1.0
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use cuspflow::flow::SolverConfig;
use cuspflow::{MetricSpec, RadialGrid};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridChoice {
    Uniform,
    Stretched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialMetric {
    Flat,
    Sphere,
    Cigar,
    TruncatedCusp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    StaticUpper,
    MovingCap,
    RateBound,
    Comparison,
    Truncation,
    Functional,
}

impl Check {
    pub const ALL: [Check; 6] = [
        Check::StaticUpper,
        Check::MovingCap,
        Check::RateBound,
        Check::Comparison,
        Check::Truncation,
        Check::Functional,
    ];
}

const DEFAULT_LEVELS: [f64; 3] = [4.0, 8.0, 12.0];

/// Snapshots per decade of the default logarithmic schedule.
pub const DEFAULT_PER_DECADE: usize = 20;
/// Decades below `t_end` covered by the default schedule.
pub const DEFAULT_DECADES: usize = 4;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n_nodes: usize,
    r_max: f64,
    grid: Option<GridChoice>,
    core_radius: Option<f64>,
    log_share: Option<f64>,

    initial_metric: InitialMetric,
    flat_value: Option<f64>,
    sphere_lambda: Option<f64>,
    sphere_shift: Option<f64>,
    truncation_levels: Option<Vec<f64>>,
    initial_shift: Option<f64>,

    t_end: f64,
    snapshot_times: Option<Vec<f64>>,
    dt_init: Option<f64>,
    dt_max: Option<f64>,
    newton_tol: Option<f64>,
    newton_max_iters: Option<usize>,
    error_tol: Option<f64>,

    checks: Option<Vec<Check>>,
    beta_max: Option<f64>,
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_nodes: usize,
    pub r_max: f64,
    pub grid: GridChoice,
    pub core_radius: f64,
    pub log_share: f64,
    pub initial_metric: InitialMetric,
    pub flat_value: f64,
    pub sphere_lambda: f64,
    pub sphere_shift: f64,
    /// Empty unless the metric is a truncated cusp.
    pub truncation_levels: Vec<f64>,
    /// Constant added to every initial factor.
    pub initial_shift: f64,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    pub solver: SolverConfig,
    /// Sorted, without duplicates.
    pub checks: Vec<Check>,
    pub beta_max: f64,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawConfig) -> Result<Self, CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let defaults = SolverConfig::default();

        if !(raw.t_end.is_finite() && raw.t_end > 0.0) {
            return bad(format!("t_end: must be finite and > 0, got {}", raw.t_end));
        }
        let snapshot_times = match raw.snapshot_times {
            Some(times) => times,
            None => default_schedule(raw.t_end),
        };
        for (i, &t) in snapshot_times.iter().enumerate() {
            if !(t > 0.0 && t <= raw.t_end) {
                return bad(format!("snapshot_times[{i}]: {t} is outside (0, t_end]"));
            }
            if i > 0 && !(t > snapshot_times[i - 1]) {
                return bad(format!(
                    "snapshot_times[{i}]: times must be strictly increasing"
                ));
            }
        }

        let truncation_levels = match (raw.initial_metric, raw.truncation_levels) {
            (InitialMetric::TruncatedCusp, None) => DEFAULT_LEVELS.to_vec(),
            (InitialMetric::TruncatedCusp, Some(levels)) => {
                if levels.is_empty() {
                    return bad("truncation_levels: must be nonempty for truncated_cusp".into());
                }
                if let Some(k) = levels.iter().find(|k| !(k.is_finite() && **k > 1.0)) {
                    return bad(format!(
                        "truncation_levels: level {k} must be finite and > 1"
                    ));
                }
                let mut sorted = levels.clone();
                sorted.sort_by(f64::total_cmp);
                sorted.dedup();
                if sorted != levels {
                    return bad("truncation_levels: levels must be strictly increasing".into());
                }
                levels
            }
            (_, Some(_)) => {
                return bad(
                    "truncation_levels: only valid with initial_metric = \"truncated_cusp\"".into(),
                );
            }
            (_, None) => Vec::new(),
        };

        let mut checks = raw.checks.unwrap_or_else(|| Check::ALL.to_vec());
        checks.sort();
        checks.dedup();

        let solver = SolverConfig {
            dt_init: raw.dt_init.unwrap_or(defaults.dt_init),
            dt_max: raw.dt_max.unwrap_or(defaults.dt_max),
            newton_tol: raw.newton_tol.unwrap_or(defaults.newton_tol),
            newton_max_iters: raw.newton_max_iters.unwrap_or(defaults.newton_max_iters),
            error_tol: raw.error_tol.unwrap_or(defaults.error_tol),
        };
        solver
            .validate()
            .map_err(|e| CliError::Config(format!("solver: {e}")))?;

        let beta_max = raw.beta_max.unwrap_or(20.0);
        if !(beta_max > 0.0) {
            return bad(format!("beta_max: must be > 0, got {beta_max}"));
        }
        let initial_shift = raw.initial_shift.unwrap_or(0.0);
        if !initial_shift.is_finite() {
            return bad(format!(
                "initial_shift: must be finite, got {initial_shift}"
            ));
        }

        let cfg = Self {
            n_nodes: raw.n_nodes,
            r_max: raw.r_max,
            grid: raw.grid.unwrap_or(GridChoice::Stretched),
            core_radius: raw.core_radius.unwrap_or(1.5e-6),
            log_share: raw.log_share.unwrap_or(0.5),
            initial_metric: raw.initial_metric,
            flat_value: raw.flat_value.unwrap_or(0.0),
            sphere_lambda: raw.sphere_lambda.unwrap_or(1.0),
            sphere_shift: raw.sphere_shift.unwrap_or(0.0),
            truncation_levels,
            initial_shift,
            t_end: raw.t_end,
            snapshot_times,
            solver,
            checks,
            beta_max,
            output_dir: raw.output_dir,
        };
        cfg.build_grid()?;
        for (_, spec) in cfg.runs() {
            spec.validate()
                .map_err(|e| CliError::Config(format!("initial_metric: {e}")))?;
        }
        Ok(cfg)
    }

    pub fn build_grid(&self) -> Result<Arc<RadialGrid>, CliError> {
        let grid = match self.grid {
            GridChoice::Uniform => RadialGrid::uniform(self.n_nodes, self.r_max),
            GridChoice::Stretched => {
                RadialGrid::stretched(self.n_nodes, self.r_max, self.core_radius, self.log_share)
            }
        };
        grid.map(Arc::new)
            .map_err(|e| CliError::Config(format!("grid: {e}")))
    }

    /// `(run_id, metric)` pairs in sweep order.
    pub fn runs(&self) -> Vec<(String, MetricSpec)> {
        match self.initial_metric {
            InitialMetric::Flat => vec![("flat".into(), MetricSpec::Flat { c: self.flat_value })],
            InitialMetric::Sphere => vec![(
                "sphere".into(),
                MetricSpec::Sphere {
                    lambda: self.sphere_lambda,
                    shift: self.sphere_shift,
                },
            )],
            InitialMetric::Cigar => vec![("cigar".into(), MetricSpec::Cigar)],
            InitialMetric::TruncatedCusp => self
                .truncation_levels
                .iter()
                .map(|&k| (format!("k{k}"), MetricSpec::TruncatedCusp { k }))
                .collect(),
        }
    }

    pub fn enabled(&self, check: Check) -> bool {
        self.checks.contains(&check)
    }
}

/// `t_end · 10^{−j/20}` for `j = 80, …, 0`.
pub fn default_schedule(t_end: f64) -> Vec<f64> {
    let n = DEFAULT_PER_DECADE * DEFAULT_DECADES;
    (0..=n)
        .map(|i| t_end * 10f64.powf((i as f64 - n as f64) / DEFAULT_PER_DECADE as f64))
        .collect()
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_toml(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "n_nodes = 129\nr_max = 0.9\ninitial_metric = \"flat\"\nt_end = 0.5\n";

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.grid, GridChoice::Stretched);
        assert_eq!(cfg.checks, Check::ALL.to_vec());
        assert_eq!(cfg.snapshot_times.len(), 81);
        assert!((cfg.snapshot_times[80] - 0.5).abs() < 1e-15);
        assert!((cfg.snapshot_times[0] - 0.5e-4).abs() < 1e-18);
        assert_eq!(cfg.solver, SolverConfig::default());
        assert_eq!(cfg.beta_max, 20.0);
        assert!(cfg.truncation_levels.is_empty());
    }

    #[test]
    fn unknown_key_is_named() {
        let text = format!("{MINIMAL}snapshotts = [0.1]\n");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("snapshotts"), "{err}");
    }

    #[test]
    fn unknown_check_is_rejected() {
        let text = format!("{MINIMAL}checks = [\"static_upper\", \"vibes\"]\n");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn cusp_levels_become_runs() {
        let text = "n_nodes = 129\nr_max = 0.9\ninitial_metric = \"truncated_cusp\"\n\
                    truncation_levels = [4, 8, 12]\nt_end = 0.5\n";
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        let ids: Vec<String> = cfg.runs().into_iter().map(|(id, _)| id).collect();
        assert_eq!(ids, ["k4", "k8", "k12"]);
    }

    #[test]
    fn rejects_bad_schedules_and_levels() {
        for extra in [
            "snapshot_times = [0.1, 0.6]",
            "snapshot_times = [0.2, 0.1]",
            "snapshot_times = [0.0]",
            "truncation_levels = [4]",
            "t_end = 0.5",
        ] {
            let text = format!("{MINIMAL}{extra}\n");
            assert!(ExperimentConfig::from_toml(&text).is_err(), "{extra}");
        }
        let cusp = "n_nodes = 129\nr_max = 0.9\ninitial_metric = \"truncated_cusp\"\nt_end = 0.5\n";
        for extra in [
            "truncation_levels = []",
            "truncation_levels = [8, 4]",
            "truncation_levels = [0.5]",
        ] {
            let text = format!("{cusp}{extra}\n");
            assert!(ExperimentConfig::from_toml(&text).is_err(), "{extra}");
        }
    }

    #[test]
    fn missing_required_key_is_named() {
        let err = ExperimentConfig::from_toml("n_nodes = 129\nr_max = 0.9\nt_end = 1.0\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("initial_metric"), "{err}");
    }
}
