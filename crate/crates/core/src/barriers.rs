//! Upper barriers for flows that start below the hyperbolic cusp, and the
//! checks that hold numerical snapshots against them.
//!
//! * static: `v(r) + ½ln(1 + 2t)`, valid for all `t ≥ 0`;
//! * moving cap: `U = S` on `r < λ(t)` and `U = h` beyond, where
//!   `h = v + ½ln 3`, `S(r,t) = s(r/λ) − ln[λ(−ln λ)] + ½ln 3` is a piece of
//!   a round sphere and `λ(t) = e^{−6/t}`;
//! * rate bound: `u ≤ β/t` on `r ≤ ½`, with `β` fitted from runs.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::analysis::TimeSeries;
use crate::error::{out_of_domain, Error, Result};
use crate::grid::Field;
use crate::metrics::{cusp_factor, sphere_factor};

/// Absolute slack allowed by every barrier check.
pub const BARRIER_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BarrierSpec {
    StaticUpper,
    MovingCap,
    RateBound { beta_hat: f64 },
}

impl BarrierSpec {
    pub fn name(&self) -> &'static str {
        match self {
            BarrierSpec::StaticUpper => "static_upper",
            BarrierSpec::MovingCap => "moving_cap",
            BarrierSpec::RateBound { .. } => "rate_bound",
        }
    }

    pub fn check(&self, u: &Field, t: f64) -> Result<ViolationReport> {
        match *self {
            BarrierSpec::StaticUpper => check_static_upper(u, t),
            BarrierSpec::MovingCap => check_moving_cap(u, t),
            BarrierSpec::RateBound { beta_hat } => check_rate_bound(u, t, beta_hat),
        }
    }
}

/// Worst violation of one barrier at one instant. `margin` is the largest
/// excess of the field over the barrier; the check passes when it is at most
/// [`BARRIER_TOL`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationReport {
    pub check: String,
    pub t: f64,
    pub worst_r: f64,
    pub margin: f64,
    pub pass: bool,
}

impl ViolationReport {
    fn new(check: &str, t: f64, worst: (f64, f64)) -> Self {
        Self {
            check: check.to_string(),
            t,
            worst_r: worst.1,
            margin: worst.0,
            pass: worst.0 <= BARRIER_TOL,
        }
    }
}

pub fn lambda_of_t(t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(out_of_domain("t", t, "(0, ∞)"));
    }
    Ok((-6.0 / t).exp())
}

/// `h(r) = −ln[r(−ln r)] + ½ln 3`.
pub fn h_barrier(r: f64) -> Result<f64> {
    Ok(cusp_factor(r)? + 0.5 * 3f64.ln())
}

fn check_unit_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t < 1.0) {
        return Err(out_of_domain("t", t, "(0, 1)"));
    }
    Ok(())
}

/// `r < λ(t)`, decided in log space so that tiny `λ` does not underflow.
fn inside_cap(r: f64, t: f64) -> bool {
    r == 0.0 || r.ln() < -6.0 / t
}

/// The spherical piece `S(r, t)`, for `r < λ(t)`. The closed form makes
/// sense for every `t > 0`; only the barrier checks are confined to `(0, 1)`.
pub fn sphere_barrier(r: f64, t: f64) -> Result<f64> {
    lambda_of_t(t)?;
    if !(r >= 0.0) || !inside_cap(r, t) {
        return Err(out_of_domain("r", r, "[0, λ(t))"));
    }
    let x = r * (6.0 / t).exp();
    // −ln λ = 6/t and −ln(−ln λ) = −ln(6/t)
    Ok(sphere_factor(x) + 6.0 / t - (6.0 / t).ln() + 0.5 * 3f64.ln())
}

pub fn barrier_u(r: f64, t: f64) -> Result<f64> {
    check_unit_time(t)?;
    if !(0.0..1.0).contains(&r) {
        return Err(out_of_domain("r", r, "[0, 1)"));
    }
    if inside_cap(r, t) {
        sphere_barrier(r, t)
    } else {
        h_barrier(r)
    }
}

/// Value of `U` at the origin, `ln 2 + 6/t − ln(6/t) + ½ln 3`, which bounds
/// `U` on `r ≤ ½`.
pub fn barrier_u_at_origin(t: f64) -> Result<f64> {
    check_unit_time(t)?;
    Ok(LN_2 + 6.0 / t - (6.0 / t).ln() + 0.5 * 3f64.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupersolutionResidual {
    /// `∂S/∂t`.
    pub time_term: f64,
    /// `e^{−2S} ΔS`.
    pub spatial_term: f64,
    /// `∂S/∂t − e^{−2S} ΔS`.
    pub residual: f64,
}

/// Evaluates the supersolution inequality for the spherical piece at a point
/// with `r < λ(t)`, from closed forms. The time derivative goes through
/// `dλ/dt = (6/t²)λ`.
pub fn supersolution_residual(r: f64, t: f64) -> Result<SupersolutionResidual> {
    lambda_of_t(t)?;
    if !(r >= 0.0) || !inside_cap(r, t) {
        return Err(out_of_domain("r", r, "[0, λ(t))"));
    }
    let log_lambda = -6.0 / t;
    let x = r * (6.0 / t).exp();
    let x2 = x * x;

    // ∂S/∂λ · dλ/dt with x = r/λ and s'(x) = −2x/(1+x²)
    let time_term = (6.0 / (t * t)) * (2.0 * x2 / (1.0 + x2) - 1.0 - 1.0 / log_lambda);

    // ΔS = λ^{−2}(Δs)(x) = −4/(λ²(1+x²)²); combine with e^{−2S} in log space
    let s = sphere_barrier(r, t)?;
    let log_abs_lap = 4f64.ln() - 2.0 * log_lambda - 2.0 * x2.ln_1p();
    let spatial_term = -(log_abs_lap - 2.0 * s).exp();

    Ok(SupersolutionResidual {
        time_term,
        spatial_term,
        residual: time_term - spatial_term,
    })
}

fn worst_excess(u: &Field, barrier: impl Fn(f64) -> Result<Option<f64>>) -> Result<(f64, f64)> {
    let mut worst = (f64::NEG_INFINITY, f64::NAN);
    for (&r, &x) in u.grid().nodes().iter().zip(u.values()) {
        if let Some(b) = barrier(r)? {
            let excess = x - b;
            if excess > worst.0 {
                worst = (excess, r);
            }
        }
    }
    Ok(worst)
}

/// `u ≤ v(r) + ½ln(1 + 2t)` at every node with `r > 0`.
pub fn check_static_upper(u: &Field, t: f64) -> Result<ViolationReport> {
    if !(t >= 0.0) {
        return Err(out_of_domain("t", t, "[0, ∞)"));
    }
    let lift = 0.5 * (2.0 * t).ln_1p();
    let worst = worst_excess(u, |r| {
        if r == 0.0 {
            Ok(None)
        } else {
            Ok(Some(cusp_factor(r)? + lift))
        }
    })?;
    Ok(ViolationReport::new("static_upper", t, worst))
}

/// `u ≤ U(r, t)` at every node.
pub fn check_moving_cap(u: &Field, t: f64) -> Result<ViolationReport> {
    check_unit_time(t)?;
    let worst = worst_excess(u, |r| barrier_u(r, t).map(Some))?;
    Ok(ViolationReport::new("moving_cap", t, worst))
}

/// `t · sup_{r≤½} u ≤ β̂`.
pub fn check_rate_bound(u: &Field, t: f64, beta_hat: f64) -> Result<ViolationReport> {
    check_unit_time(t)?;
    let (sup, at) = u.sup_within(0.5);
    Ok(ViolationReport::new(
        "rate_bound",
        t,
        (t * sup - beta_hat, at),
    ))
}

/// `β̂ = max t · sup_{r≤½} u` over the snapshots with `t ∈ (0, 1)`, counting
/// only positive suprema.
pub fn fit_rate_bound(series: &TimeSeries) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::InsufficientData("empty series".into()));
    }
    let eligible: Vec<f64> = series
        .diagnostics()
        .iter()
        .filter(|row| row.t > 0.0 && row.t < 1.0)
        .map(|row| row.t * row.sup_u_half.max(0.0))
        .collect();
    if eligible.is_empty() {
        return Err(Error::InsufficientData(
            "no snapshot with t in (0, 1)".into(),
        ));
    }
    Ok(eligible.into_iter().fold(0.0, f64::max))
}
