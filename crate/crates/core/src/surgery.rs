//! Capping a cusp at a finite level, and the cutoff glue between a metric and
//! the hyperbolic cusp used to compare them through the Schwarz lemma.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, RadialGrid};
use crate::metrics::{cusp_factor, eval_factor, gauss_curvature, MetricSpec};

/// Concave transition profile: `x` below −1, `−(x−1)²/4` on (−1, 1), and 0
/// above 1. It is C¹ with `ψ' ∈ [0, 1]` and `ψ'' ∈ {0, −½}`.
pub fn psi(x: f64) -> f64 {
    if x <= -1.0 {
        x
    } else if x >= 1.0 {
        0.0
    } else {
        -0.25 * (x - 1.0) * (x - 1.0)
    }
}

pub fn psi_prime(x: f64) -> f64 {
    if x <= -1.0 {
        1.0
    } else if x >= 1.0 {
        0.0
    } else {
        0.5 * (1.0 - x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationParams {
    pub k: f64,
    pub profile: Profile,
}

impl TruncationParams {
    pub fn new(k: f64) -> Result<Self> {
        if !(k >= 1.0 && k.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "truncation level must be ≥ 1, got {k}"
            )));
        }
        Ok(Self {
            k,
            profile: Profile::Quadratic,
        })
    }
}

/// Where the factor to be truncated comes from.
#[derive(Debug, Clone, Copy)]
pub enum Factor<'a> {
    Field(&'a Field),
    Metric(&'a MetricSpec),
}

impl Factor<'_> {
    /// Samples on `grid`. A metric that diverges at the puncture is reported
    /// as `+∞` at the origin node.
    fn sample(&self, grid: &Arc<RadialGrid>) -> Result<Vec<f64>> {
        match self {
            Factor::Field(f) => {
                if **f.grid() != **grid {
                    return Err(Error::GridMismatch);
                }
                Ok(f.values().to_vec())
            }
            Factor::Metric(spec) => grid
                .nodes()
                .iter()
                .map(|&r| {
                    if r == 0.0 && !spec.regular_at_origin() {
                        match spec {
                            MetricSpec::HyperbolicCusp => Ok(f64::INFINITY),
                            _ => Err(Error::InvalidArgument(format!(
                                "{spec:?} is not defined near the origin"
                            ))),
                        }
                    } else {
                        eval_factor(spec, r)
                    }
                })
                .collect(),
        }
    }
}

/// `ψ(a − k) + k`, returning `a` itself (bit for bit) where `a ≤ k − 1`.
pub fn truncate_value(a: f64, k: f64) -> f64 {
    let x = a - k;
    if x <= -1.0 {
        a
    } else if x >= 1.0 {
        k
    } else {
        psi(x) + k
    }
}

/// Truncated factor `u_k = ψ(a − k) + k` sampled on `grid`.
///
/// On a grid containing the origin the factor must blow up there (at least
/// `a(0) ≥ k + 1`), so that `u_k ≡ k` near `r = 0`.
pub fn truncate(a: Factor<'_>, grid: &Arc<RadialGrid>, k: f64) -> Result<Field> {
    let params = TruncationParams::new(k)?;
    let values = a.sample(grid)?;
    if grid.has_origin() && values[0] < params.k + 1.0 {
        return Err(Error::InvalidArgument(format!(
            "factor is {} at the origin; it must diverge there (≥ k + 1 = {})",
            values[0],
            params.k + 1.0
        )));
    }
    Field::new(
        grid.clone(),
        values
            .into_iter()
            .map(|a| truncate_value(a, params.k))
            .collect(),
    )
}

/// Outcome of the four truncation properties for one level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationReport {
    pub k: f64,
    pub curvature_bound: f64,
    /// Smallest node radius beyond which `u_k` equals `a` at every node.
    pub equal_beyond: f64,
    pub equal_within_one_over_k: bool,
    pub equality_holds: bool,
    /// `max(u_k − a)`; nonpositive when `g_k ≤ g_0`.
    pub max_excess: f64,
    pub cap_min: f64,
    pub cap_nodes: usize,
    pub min_curvature: f64,
    pub curvature_floor: f64,
    /// Largest `|K(u_k)|` at nodes whose whole stencil lies in the cap.
    pub cap_curvature: f64,
    /// Largest `|K(u_k) − K(a)|` where the stencil lies in `{a ≤ k − 1}`.
    pub untouched_deviation: f64,
}

impl TruncationReport {
    pub const CURVATURE_TOL: f64 = 0.05;
    pub const REGION_TOL: f64 = 1e-6;

    pub fn equality(&self) -> bool {
        self.equality_holds
    }

    pub fn below(&self) -> bool {
        self.max_excess <= 0.0
    }

    pub fn cap_level(&self) -> bool {
        self.cap_nodes > 0 && (self.cap_min - self.k).abs() <= 1e-12
    }

    pub fn curvature(&self) -> bool {
        self.min_curvature >= self.curvature_floor - Self::CURVATURE_TOL
    }

    pub fn regions(&self) -> bool {
        self.cap_curvature <= Self::REGION_TOL && self.untouched_deviation <= Self::REGION_TOL
    }

    pub fn passed(&self) -> bool {
        self.equality() && self.below() && self.cap_level() && self.curvature() && self.regions()
    }
}

/// Checks the four truncation properties (equality away from the cap, `u_k ≤ a`,
/// a flat cap at level `k`, the curvature floor) of `u_k` against `a`, whose
/// curvature lies in `[−m_bound, −1]`.
pub fn verify_truncation(
    u_k: &Field,
    a: Factor<'_>,
    k: f64,
    m_bound: f64,
) -> Result<TruncationReport> {
    let grid = u_k.grid();
    let a = a.sample(grid)?;
    let u = u_k.values();
    let n = u.len();
    let eq = |i: usize| u[i] == a[i];

    let equality_holds = (0..n).filter(|&i| a[i] <= k - 1.0).all(eq);
    let first_equal = (0..n).rev().take_while(|&i| eq(i)).last().unwrap_or(n - 1);
    let equal_beyond = grid.r(first_equal);

    let max_excess = (0..n)
        .map(|i| u[i] - a[i])
        .fold(f64::NEG_INFINITY, f64::max);

    let cap: Vec<usize> = (0..n).filter(|&i| a[i] >= k + 1.0).collect();
    let cap_min = cap.iter().map(|&i| u[i]).fold(f64::INFINITY, f64::min);

    let curv = gauss_curvature(u_k)?;
    let interior: Vec<usize> = grid.interior().collect();
    let min_curvature = interior
        .iter()
        .map(|&i| curv.values()[i])
        .fold(f64::INFINITY, f64::min);

    let in_stencil = |i: usize, pred: &dyn Fn(f64) -> bool| {
        let lo = i.saturating_sub(1);
        (lo..=i + 1).all(|j| pred(a[j]))
    };
    let cap_curvature = interior
        .iter()
        .filter(|&&i| in_stencil(i, &|x| x >= k + 1.0))
        .map(|&i| curv.values()[i].abs())
        .fold(0.0, f64::max);

    let finite_a: Vec<f64> = a
        .iter()
        .map(|&x| if x.is_finite() { x } else { k + 1.0 })
        .collect();
    let curv_a = gauss_curvature(&Field::new(grid.clone(), finite_a)?)?;
    let untouched_deviation = interior
        .iter()
        .filter(|&&i| in_stencil(i, &|x| x <= k - 1.0))
        .map(|&i| (curv.values()[i] - curv_a.values()[i]).abs())
        .fold(0.0, f64::max);

    Ok(TruncationReport {
        k,
        curvature_bound: m_bound,
        equal_beyond,
        equal_within_one_over_k: equal_beyond <= 1.0 / k,
        equality_holds,
        max_excess,
        cap_min,
        cap_nodes: cap.len(),
        min_curvature,
        curvature_floor: -(2.0f64).exp() * m_bound,
        cap_curvature,
        untouched_deviation,
    })
}

/// Relative stencil width `(r_{i+1} − r_{i−1})/r_i` above which a node is
/// too coarse to resolve a factor that is singular at the origin.
pub const RESOLVED_WIDTH: f64 = 0.1;

/// `M = max(1, −min K)` over the interior nodes of a sampled factor, the
/// measured lower curvature bound magnitude. Nodes near the origin whose
/// stencil is wider than [`RESOLVED_WIDTH`]`·r` are skipped: a factor like
/// `−ln r` is not resolved there, and the truncation replaces it anyway.
pub fn measured_curvature_bound(a: &Field) -> Result<f64> {
    let k = gauss_curvature(a)?;
    let grid = a.grid();
    let nodes = grid.nodes();
    let min = (1..grid.len() - 1)
        .filter(|&i| nodes[i + 1] - nodes[i - 1] <= RESOLVED_WIDTH * nodes[i])
        .map(|i| k.values()[i])
        .fold(f64::INFINITY, f64::min);
    if min == f64::INFINITY {
        return Err(Error::InsufficientData("no resolved interior node".into()));
    }
    Ok((-min).max(1.0))
}

/// Same as [`measured_curvature_bound`] for a closed-form metric, sampled at the
/// grid nodes with `r > 0`.
pub fn measured_curvature_bound_of(spec: &MetricSpec, grid: &Arc<RadialGrid>) -> Result<f64> {
    let values = Factor::Metric(spec).sample(grid)?;
    // the origin node is never resolved, so its value does not matter
    let finite = values
        .iter()
        .map(|&x| if x.is_finite() { x } else { 0.0 })
        .collect();
    measured_curvature_bound(&Field::new(grid.clone(), finite)?)
}

/// Smooth radial cutoff: 1 on `[0, plateau]`, 0 on `[support, ∞)`, and a
/// smoothstep of a smoothstep in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub plateau: f64,
    pub support: f64,
}

impl Default for Cutoff {
    fn default() -> Self {
        Self {
            plateau: 0.5,
            support: 0.75,
        }
    }
}

impl Cutoff {
    pub fn eval(&self, r: f64) -> f64 {
        if r <= self.plateau {
            return 1.0;
        }
        if r >= self.support {
            return 0.0;
        }
        let smooth = |x: f64| x * x * (3.0 - 2.0 * x);
        1.0 - smooth(smooth((r - self.plateau) / (self.support - self.plateau)))
    }

    fn check(&self) -> Result<()> {
        if !(self.plateau >= 0.5 && self.support <= 0.75 && self.plateau < self.support) {
            return Err(Error::InvalidArgument(format!(
                "cutoff must equal 1 on r ≤ 1/2 and vanish for r ≥ 3/4, got plateau {} support {}",
                self.plateau, self.support
            )));
        }
        Ok(())
    }
}

/// `α = φa + (1 − φ)v`: equal to `a` inside the plateau and to the hyperbolic
/// cusp outside the support of `φ`.
pub fn glue_hyperbolic(a: &Field, phi: &Cutoff) -> Result<Field> {
    phi.check()?;
    let values = a
        .grid()
        .nodes()
        .iter()
        .zip(a.values())
        .map(|(&r, &a)| {
            let w = phi.eval(r);
            if w == 1.0 {
                Ok(a)
            } else {
                Ok(w * a + (1.0 - w) * cusp_factor(r)?)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Field::new(a.grid().clone(), values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchwarzReport {
    pub holds: bool,
    /// `max(v − ½ln β − α)`; nonpositive when the inequality holds.
    pub worst_margin: f64,
    pub worst_r: f64,
}

/// Checks `v ≤ ½ ln β + α` at every node with `r > 0`.
pub fn schwarz_check(alpha: &Field, beta: f64) -> Result<SchwarzReport> {
    if !(beta >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "curvature bound magnitude must be ≥ 1, got {beta}"
        )));
    }
    let half_log = 0.5 * beta.ln();
    let mut worst = (f64::NEG_INFINITY, f64::NAN);
    for (&r, &a) in alpha.grid().nodes().iter().zip(alpha.values()) {
        if r == 0.0 {
            continue;
        }
        let margin = cusp_factor(r)? - half_log - a;
        if margin > worst.0 {
            worst = (margin, r);
        }
    }
    Ok(SchwarzReport {
        holds: worst.0 <= 1e-12,
        worst_margin: worst.0,
        worst_r: worst.1,
    })
}
