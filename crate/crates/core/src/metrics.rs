//! Closed-form conformal factors, the Gauss curvature operator and the change
//! of variables between the disc chart `z = re^{iθ}` and the cylinder
//! `(s, θ)` with `s = −ln r`.

use std::f64::consts::{LN_2, PI};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{out_of_domain, Error, Result};
use crate::grid::{laplacian, Field, RadialGrid};
use crate::surgery::truncate_value;

/// A closed-form conformal factor `u(r)` for the metric `e^{2u}|dz|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    /// `u ≡ c`.
    Flat { c: f64 },
    /// Complete hyperbolic cusp `v = −ln(−r ln r)` on the punctured disc.
    HyperbolicCusp,
    /// Complete hyperbolic band `v_δ(s) = −ln[sin(δ(s−δ))/δ]` on
    /// `s ∈ (δ, π/δ + δ)`, pulled back to the disc chart.
    HyperbolicBand { delta: f64 },
    /// Round sphere `s(r/λ) − ln λ + shift` with `s(r) = ln(2/(1+r²))`;
    /// curvature `e^{−2·shift}`.
    Sphere { lambda: f64, shift: f64 },
    /// Cigar soliton `−½ ln(1+r²)`.
    Cigar,
    /// The cusp capped at level `k`: `ψ(v − k) + k`, equal to `k` at the origin.
    TruncatedCusp { k: f64 },
}

impl MetricSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |what: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{what} must be finite and > 0, got {x}"
                )))
            }
        };
        match *self {
            MetricSpec::Flat { c } if !c.is_finite() => Err(Error::InvalidArgument(format!(
                "flat constant must be finite, got {c}"
            ))),
            MetricSpec::HyperbolicBand { delta } => positive("delta", delta),
            MetricSpec::Sphere { lambda, shift } => {
                positive("lambda", lambda)?;
                if shift.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!(
                        "shift must be finite, got {shift}"
                    )))
                }
            }
            MetricSpec::TruncatedCusp { k } => positive("k", k),
            _ => Ok(()),
        }
    }

    /// Whether the factor is finite at `r = 0`, so that it can seed a flow on
    /// the whole disc.
    pub fn regular_at_origin(&self) -> bool {
        !matches!(
            self,
            MetricSpec::HyperbolicCusp | MetricSpec::HyperbolicBand { .. }
        )
    }

    pub fn sample(&self, grid: Arc<RadialGrid>) -> Result<Field> {
        self.validate()?;
        Field::try_from_fn(grid, |r| eval_factor(self, r))
    }
}

/// The hyperbolic cusp factor `−ln(−r ln r)`, for `r ∈ (0, 1)`.
pub fn cusp_factor(r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(out_of_domain("r", r, "(0, 1) for the hyperbolic cusp"));
    }
    Ok(-(-r * r.ln()).ln())
}

/// Conformal factor of the round sphere, `s(r) = ln(2/(1+r²))`.
pub fn sphere_factor(r: f64) -> f64 {
    LN_2 - (r * r).ln_1p()
}

/// `v_δ(s)` in cylinder coordinates.
pub fn band_cylinder_factor(delta: f64, s: f64) -> Result<f64> {
    let hi = PI / delta + delta;
    if !(s > delta && s < hi) {
        return Err(out_of_domain("s", s, format!("({delta}, {hi})")));
    }
    Ok(-((delta * (s - delta)).sin() / delta).ln())
}

pub fn eval_factor(spec: &MetricSpec, r: f64) -> Result<f64> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(out_of_domain("r", r, "[0, ∞)"));
    }
    match *spec {
        MetricSpec::Flat { c } => Ok(c),
        MetricSpec::HyperbolicCusp => cusp_factor(r),
        MetricSpec::HyperbolicBand { delta } => {
            if r == 0.0 {
                return Err(out_of_domain("r", r, "r > 0 for the hyperbolic band"));
            }
            let s = -r.ln();
            from_cylinder(band_cylinder_factor(delta, s)?, s)
        }
        MetricSpec::Sphere { lambda, shift } => Ok(sphere_factor(r / lambda) - lambda.ln() + shift),
        MetricSpec::Cigar => Ok(-0.5 * (r * r).ln_1p()),
        MetricSpec::TruncatedCusp { k } => {
            if r == 0.0 {
                return Ok(k);
            }
            Ok(truncate_value(cusp_factor(r)?, k))
        }
    }
}

/// Discrete Gauss curvature `K = −e^{−2u} Δu`.
pub fn gauss_curvature(u: &Field) -> Result<Field> {
    let lap = laplacian(u)?;
    let k = u
        .values()
        .iter()
        .zip(lap.values())
        .map(|(&u, &d)| -(-2.0 * u).exp() * d)
        .collect();
    Field::new(u.grid().clone(), k)
}

/// Cylinder factor `û = u + ln r` at `s = −ln r`, so that
/// `e^{2u}|dz|² = e^{2û}(ds² + dθ²)`.
pub fn to_cylinder(u: f64, r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(out_of_domain("r", r, "(0, 1)"));
    }
    Ok(u + r.ln())
}

/// Inverse of [`to_cylinder`]: the disc factor at `r = e^{−s}`.
pub fn from_cylinder(u_hat: f64, s: f64) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(out_of_domain("s", s, "(0, ∞)"));
    }
    Ok(u_hat + s)
}

/// Exact hyperbolic length of the radial segment `[r_lo, r_hi]` in the cusp.
pub fn cusp_distance(r_lo: f64, r_hi: f64) -> Result<f64> {
    if !(0.0 < r_lo && r_lo < r_hi && r_hi < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "cusp distance needs 0 < r_lo < r_hi < 1, got ({r_lo}, {r_hi})"
        )));
    }
    Ok((-r_lo.ln()).ln() - (-r_hi.ln()).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::E;

    #[test]
    fn closed_form_values() {
        let cusp = eval_factor(&MetricSpec::HyperbolicCusp, (-1f64).exp()).unwrap();
        assert_relative_eq!(cusp, 1.0, epsilon = 1e-15);
        let sphere = eval_factor(
            &MetricSpec::Sphere {
                lambda: 1.0,
                shift: 0.0,
            },
            0.0,
        )
        .unwrap();
        assert_relative_eq!(sphere, std::f64::consts::LN_2, epsilon = 1e-15);
        let cigar = eval_factor(&MetricSpec::Cigar, 1.0).unwrap();
        assert_relative_eq!(cigar, -0.346574, epsilon = 1e-6);
        assert_eq!(eval_factor(&MetricSpec::Flat { c: 2.5 }, 0.3).unwrap(), 2.5);
    }

    #[test]
    fn cusp_refuses_origin_and_outside() {
        for r in [0.0, 1.0, 1.2, -0.1] {
            assert!(
                eval_factor(&MetricSpec::HyperbolicCusp, r).is_err(),
                "r = {r}"
            );
        }
        assert!(!MetricSpec::HyperbolicCusp.regular_at_origin());
    }

    #[test]
    fn band_domain() {
        let band = MetricSpec::HyperbolicBand { delta: 0.1 };
        // s = −ln r must lie in (0.1, 31.52)
        assert!(eval_factor(&band, 0.95).is_err());
        assert!(eval_factor(&band, 1e-20).is_err());
        assert!(eval_factor(&band, 0.5).is_ok());
        assert!(MetricSpec::HyperbolicBand { delta: 0.0 }
            .validate()
            .is_err());
    }

    #[test]
    fn truncated_cusp_caps_at_level() {
        let spec = MetricSpec::TruncatedCusp { k: 8.0 };
        assert_eq!(eval_factor(&spec, 0.0).unwrap(), 8.0);
        assert_eq!(eval_factor(&spec, 1e-9).unwrap(), 8.0);
        let r = 0.3;
        assert_eq!(eval_factor(&spec, r).unwrap(), cusp_factor(r).unwrap());
    }

    #[test]
    fn cylinder_transform() {
        let r = (-1f64).exp();
        assert_relative_eq!(to_cylinder(1.0, r).unwrap(), 0.0, epsilon = 1e-15);
        assert_relative_eq!(
            to_cylinder(0.0, (-2f64).exp()).unwrap(),
            -2.0,
            epsilon = 1e-15
        );
        for r in [0.01, 0.2, 0.7] {
            let v = cusp_factor(r).unwrap();
            let s = -r.ln();
            assert_relative_eq!(to_cylinder(v, r).unwrap(), -s.ln(), epsilon = 1e-13);
            assert_relative_eq!(
                from_cylinder(to_cylinder(v, r).unwrap(), s).unwrap(),
                v,
                epsilon = 1e-13
            );
        }
        assert!(to_cylinder(0.0, 1.0).is_err());
    }

    #[test]
    fn cusp_distance_values() {
        assert_relative_eq!(
            cusp_distance((-E).exp(), (-1f64).exp()).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        assert_relative_eq!(
            cusp_distance((-E * E).exp(), (-E).exp()).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        assert!(cusp_distance(0.5, 0.2).is_err());
        assert!(cusp_distance(0.0, 0.2).is_err());
    }

    #[test]
    fn flat_has_zero_curvature() {
        let g = Arc::new(RadialGrid::uniform(64, 0.9).unwrap());
        let k = gauss_curvature(&Field::constant(g, 0.0).unwrap()).unwrap();
        assert!(k.values().iter().all(|&x| x == 0.0));
    }
}
