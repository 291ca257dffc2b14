//! Closed-form identity battery behind `verify-metrics`.

use std::fmt;
use std::sync::Arc;

use cuspflow::barriers::{h_barrier, lambda_of_t, sphere_barrier, supersolution_residual};
use cuspflow::metrics::gauss_curvature;
use cuspflow::{Field, MetricSpec, RadialGrid};

use crate::CliError;

/// Accepted range for `err(N/2) / err(N)` of a second-order scheme.
pub const REFINEMENT_RANGE: (f64, f64) = (2.8, 5.5);
pub const CURVATURE_TOL: f64 = 1e-3;
pub const RESIDUAL_TOL: f64 = 1e-6;
pub const RESIDUAL_SAMPLES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityRow {
    pub name: String,
    /// What the identity asserts, e.g. `-1 ± 1e-3`.
    pub claim: String,
    pub measured: f64,
    pub pass: bool,
}

impl fmt::Display for IdentityRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<28} {:<26} {:>14.6e}  {}",
            self.name,
            self.claim,
            self.measured,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

pub type Curvature<'a> = &'a dyn Fn(&Field) -> cuspflow::Result<Field>;

struct Identity {
    name: &'static str,
    claim: &'static str,
    spec: MetricSpec,
    grid: fn(usize) -> cuspflow::Result<RadialGrid>,
    /// `None` checks only the origin node.
    exact: Option<fn(f64) -> f64>,
    origin: f64,
}

fn annulus(n: usize) -> cuspflow::Result<RadialGrid> {
    RadialGrid::annulus(n, 0.05, 0.8)
}

fn disc(n: usize) -> cuspflow::Result<RadialGrid> {
    RadialGrid::uniform(n, 0.9)
}

fn battery() -> [Identity; 5] {
    [
        Identity {
            name: "K(cusp)",
            claim: "= -1 ± 1e-3",
            spec: MetricSpec::HyperbolicCusp,
            grid: annulus,
            exact: Some(|_| -1.0),
            origin: 0.0,
        },
        Identity {
            name: "K(sphere)",
            claim: "= +1 ± 1e-3",
            spec: MetricSpec::Sphere {
                lambda: 1.0,
                shift: 0.0,
            },
            grid: disc,
            exact: Some(|_| 1.0),
            origin: 0.0,
        },
        Identity {
            name: "K(cigar, r = 0)",
            claim: "= 2 ± 1e-3",
            spec: MetricSpec::Cigar,
            grid: disc,
            exact: None,
            origin: 2.0,
        },
        Identity {
            name: "K(cigar)",
            claim: "= 2/(1+r²) ± 1e-3",
            spec: MetricSpec::Cigar,
            grid: disc,
            exact: Some(|r| 2.0 / (1.0 + r * r)),
            origin: 0.0,
        },
        Identity {
            name: "K(band, δ = 0.2)",
            claim: "= -1 ± 1e-3",
            spec: MetricSpec::HyperbolicBand { delta: 0.2 },
            grid: annulus,
            exact: Some(|_| -1.0),
            origin: 0.0,
        },
    ]
}

fn curvature_error(id: &Identity, n: usize, curvature: Curvature<'_>) -> cuspflow::Result<f64> {
    let grid = Arc::new((id.grid)(n)?);
    let k = curvature(&id.spec.sample(grid.clone())?)?;
    Ok(match id.exact {
        Some(exact) => grid
            .nodes()
            .iter()
            .zip(k.values())
            .map(|(&r, &k)| (k - exact(r)).abs())
            .fold(0.0, f64::max),
        None => (k.values()[0] - id.origin).abs(),
    })
}

/// Runs the battery at `resolution` nodes with the library curvature.
pub fn identity_suite(resolution: usize) -> Result<Vec<IdentityRow>, CliError> {
    identity_suite_with(resolution, &gauss_curvature)
}

/// Runs the battery with a caller-supplied curvature operator, so that the
/// checker itself can be tested against a deliberately broken one.
pub fn identity_suite_with(
    resolution: usize,
    curvature: Curvature<'_>,
) -> Result<Vec<IdentityRow>, CliError> {
    if resolution < 16 {
        return Err(CliError::Config(format!(
            "resolution must be ≥ 16, got {resolution}"
        )));
    }
    let mut rows = Vec::new();
    for id in battery() {
        let fine = curvature_error(&id, resolution, curvature)?;
        let coarse = curvature_error(&id, resolution / 2, curvature)?;
        rows.push(IdentityRow {
            name: format!("{} @ {resolution}", id.name),
            claim: id.claim.to_string(),
            measured: fine,
            pass: fine <= CURVATURE_TOL,
        });
        let ratio = coarse / fine;
        rows.push(IdentityRow {
            name: format!("{} refinement", id.name),
            claim: format!("ratio in [{}, {}]", REFINEMENT_RANGE.0, REFINEMENT_RANGE.1),
            measured: ratio,
            pass: (REFINEMENT_RANGE.0..=REFINEMENT_RANGE.1).contains(&ratio),
        });
    }
    rows.extend(barrier_rows()?);
    Ok(rows)
}

fn sample_times() -> impl Iterator<Item = f64> {
    (0..RESIDUAL_SAMPLES).map(|j| 0.05 + 0.9 * j as f64 / (RESIDUAL_SAMPLES - 1) as f64)
}

fn barrier_rows() -> Result<Vec<IdentityRow>, CliError> {
    // seam: S(λ⁻, t) against h(λ)
    let mut seam: f64 = 0.0;
    for t in sample_times() {
        let lam = lambda_of_t(t)?;
        let inside = sphere_barrier(lam * (1.0 - 1e-12), t)?;
        seam = seam.max((inside / h_barrier(lam)? - 1.0).abs());
    }

    // residual ≥ 6/t² and spatial term = −12/t² on a 20×20 sample of r < λ(t)
    let mut worst_ratio = f64::INFINITY;
    let mut worst_spatial: f64 = 0.0;
    for t in sample_times() {
        let lam = lambda_of_t(t)?;
        for i in 0..RESIDUAL_SAMPLES {
            let r = lam * i as f64 / RESIDUAL_SAMPLES as f64;
            let res = supersolution_residual(r, t)?;
            let scale = 6.0 / (t * t);
            worst_ratio = worst_ratio.min(res.residual / scale);
            worst_spatial = worst_spatial.max((res.spatial_term / (-2.0 * scale) - 1.0).abs());
        }
    }
    let at_one = supersolution_residual(0.0, 1.0)?;

    Ok(vec![
        IdentityRow {
            name: "U seam continuity".into(),
            claim: "rel. jump ≤ 1e-9".into(),
            measured: seam,
            pass: seam <= 1e-9,
        },
        IdentityRow {
            name: "residual · t²/6 (20×20)".into(),
            claim: format!("≥ 1 - {RESIDUAL_TOL:e}"),
            measured: worst_ratio,
            pass: worst_ratio >= 1.0 - RESIDUAL_TOL,
        },
        IdentityRow {
            name: "spatial · t²/-12 (20×20)".into(),
            claim: format!("= 1 ± {RESIDUAL_TOL:e}"),
            measured: worst_spatial,
            pass: worst_spatial <= RESIDUAL_TOL,
        },
        IdentityRow {
            name: "spatial term at t = 1".into(),
            claim: "= -12 ± 1e-6".into(),
            measured: at_one.spatial_term,
            pass: (at_one.spatial_term + 12.0).abs() <= 1e-6,
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_battery_passes() {
        let rows = identity_suite(4096).unwrap();
        assert_eq!(rows.len(), 14);
        for row in &rows {
            assert!(row.pass, "{row}");
        }
        // too coarse for the cusp neck at 1e-3
        assert!(!identity_suite(1024).unwrap()[0].pass);
    }

    #[test]
    fn flipped_sign_is_caught() {
        let broken = |u: &Field| gauss_curvature(u).and_then(|k| k.map(|x| -x));
        let rows = identity_suite_with(1024, &broken).unwrap();
        assert!(rows.iter().any(|r| !r.pass));
        // barrier rows do not depend on the curvature operator
        assert!(rows[10..].iter().all(|r| r.pass));
    }
}
