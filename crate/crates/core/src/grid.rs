//! Radial grids on the disc (or an annulus) and the discrete operators used
//! by every other module.
//!
//! The Laplacian is written in finite-volume form
//!
//! ```text
//! (Δf)_i = [ρ⁺ (f_{i+1} − f_i)/h⁺ − ρ⁻ (f_i − f_{i−1})/h⁻] / V_i
//! ```
//!
//! with face radii `ρ± = (r_i + r_{i±1})/2`, face spacings `h±` and the cell
//! measure `V_i = (ρ⁺² − ρ⁻²)/2`. On a uniform grid this is exactly the
//! three-point stencil for `f_rr + f_r/r`, and at the origin (where `ρ⁻ = 0`)
//! it reduces to `4(f_1 − f_0)/h²`. Quadratics in `r` are reproduced exactly
//! on any node distribution.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest grid accepted by the operators.
pub const MIN_NODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridKind {
    /// `r_i = i·h` on `[0, r_max]`.
    Uniform,
    /// `r_i = r_min + i·h` on `[r_min, r_max]`, `r_min > 0`.
    Annulus { r_min: f64 },
    /// Node `i` solves `ln(1 + r/c)/β + r/H = i`: spacing about `β(c + r)`
    /// (geometric) while that is below `H`, and about `H` beyond. `log_share`
    /// is the fraction of the nodes charged to the geometric part.
    Stretched { core: f64, log_share: f64 },
}

#[derive(Debug, Clone, Copy)]
struct Stencil {
    lo: f64,
    hi: f64,
}

#[derive(Debug, Clone)]
pub struct RadialGrid {
    kind: GridKind,
    nodes: Vec<f64>,
    // Interior stencils; entries for Dirichlet/one-sided boundary nodes are unused.
    stencils: Vec<Stencil>,
    volumes: Vec<f64>,
}

impl PartialEq for RadialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.nodes == other.nodes
    }
}

impl RadialGrid {
    pub fn uniform(n_nodes: usize, r_max: f64) -> Result<Self> {
        check_count(n_nodes)?;
        check_radius("r_max", r_max)?;
        let h = r_max / (n_nodes - 1) as f64;
        let mut nodes: Vec<f64> = (0..n_nodes).map(|i| i as f64 * h).collect();
        nodes[n_nodes - 1] = r_max;
        Self::from_nodes(GridKind::Uniform, nodes)
    }

    pub fn annulus(n_nodes: usize, r_min: f64, r_max: f64) -> Result<Self> {
        check_count(n_nodes)?;
        check_radius("r_min", r_min)?;
        check_radius("r_max", r_max)?;
        if r_min >= r_max {
            return Err(Error::InvalidGrid(format!(
                "annulus needs r_min < r_max, got [{r_min}, {r_max}]"
            )));
        }
        let h = (r_max - r_min) / (n_nodes - 1) as f64;
        let mut nodes: Vec<f64> = (0..n_nodes).map(|i| r_min + i as f64 * h).collect();
        nodes[n_nodes - 1] = r_max;
        Self::from_nodes(GridKind::Annulus { r_min }, nodes)
    }

    pub fn stretched(n_nodes: usize, r_max: f64, core: f64, log_share: f64) -> Result<Self> {
        check_count(n_nodes)?;
        check_radius("r_max", r_max)?;
        if !(core > 0.0 && core < r_max) {
            return Err(Error::InvalidGrid(format!(
                "stretching core must lie in (0, r_max), got {core}"
            )));
        }
        if !(log_share > 0.0 && log_share < 1.0) {
            return Err(Error::InvalidGrid(format!(
                "log_share must lie in (0, 1), got {log_share}"
            )));
        }
        let last = (n_nodes - 1) as f64;
        let beta = (r_max / core).ln_1p() / (log_share * last);
        let h = r_max / ((1.0 - log_share) * last);
        let xi = |r: f64| (r / core).ln_1p() / beta + r / h;
        let dxi = |r: f64| 1.0 / (beta * (core + r)) + 1.0 / h;

        // ξ is increasing and concave, so Newton from the left never overshoots
        let mut nodes = Vec::with_capacity(n_nodes);
        let mut r = 0.0;
        for i in 0..n_nodes {
            let target = i as f64;
            for _ in 0..100 {
                let step = (target - xi(r)) / dxi(r);
                r += step;
                if step.abs() <= 1e-15 * r {
                    break;
                }
            }
            nodes.push(r);
        }
        nodes[0] = 0.0;
        nodes[n_nodes - 1] = r_max;
        Self::from_nodes(GridKind::Stretched { core, log_share }, nodes)
    }

    fn from_nodes(kind: GridKind, nodes: Vec<f64>) -> Result<Self> {
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(
                "nodes must be strictly increasing".into(),
            ));
        }
        let n = nodes.len();
        let mut stencils = vec![Stencil { lo: 0.0, hi: 0.0 }; n];
        let mut volumes = vec![0.0; n];
        for i in 0..n - 1 {
            let face_lo = if i == 0 {
                0.0
            } else {
                0.5 * (nodes[i - 1] + nodes[i])
            };
            let face_hi = 0.5 * (nodes[i] + nodes[i + 1]);
            let volume = 0.5 * (face_hi * face_hi - face_lo * face_lo);
            volumes[i] = volume;
            if i == 0 {
                if nodes[0] == 0.0 {
                    stencils[0] = Stencil {
                        lo: 0.0,
                        hi: face_hi / (nodes[1] - nodes[0]) / volume,
                    };
                }
                continue;
            }
            stencils[i] = Stencil {
                lo: face_lo / (nodes[i] - nodes[i - 1]) / volume,
                hi: face_hi / (nodes[i + 1] - nodes[i]) / volume,
            };
        }
        let face = 0.5 * (nodes[n - 2] + nodes[n - 1]);
        volumes[n - 1] = 0.5 * (nodes[n - 1] * nodes[n - 1] - face * face);
        Ok(Self {
            kind,
            nodes,
            stencils,
            volumes,
        })
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn r(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    pub fn r_min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn r_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// True when the first node is the origin of the disc.
    pub fn has_origin(&self) -> bool {
        self.nodes[0] == 0.0
    }

    /// Nodes where the Laplacian uses a genuine two-sided (or origin) stencil.
    /// The outer node, and the inner node of an annulus, only get one-sided
    /// boundary-quality estimates.
    pub fn interior(&self) -> std::ops::Range<usize> {
        let start = if self.has_origin() { 0 } else { 1 };
        start..self.len() - 1
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        !self.interior().contains(&i)
    }

    /// Cell measure `∫ r dr` over the control volume of node `i` (the area
    /// element divided by 2π). The outer node owns only its inner half-cell.
    pub fn cell_measure(&self, i: usize) -> f64 {
        if i == 0 && !self.has_origin() {
            let face = 0.5 * (self.nodes[0] + self.nodes[1]);
            return 0.5 * (face * face - self.nodes[0] * self.nodes[0]);
        }
        self.volumes[i]
    }

    /// Coefficients `(lo, hi)` with `(Δf)_i = lo·(f_{i−1} − f_i) + hi·(f_{i+1} − f_i)`.
    pub(crate) fn stencil(&self, i: usize) -> (f64, f64) {
        let s = self.stencils[i];
        (s.lo, s.hi)
    }

    /// Index of the last node with `r_i ≤ r` (clamped to the grid).
    pub fn index_below(&self, r: f64) -> usize {
        match self.nodes.binary_search_by(|x| x.total_cmp(&r)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        }
    }

    /// Index of the node closest to `r`.
    pub fn nearest(&self, r: f64) -> usize {
        let i = self.index_below(r);
        if i + 1 < self.len() && (self.nodes[i + 1] - r).abs() < (r - self.nodes[i]).abs() {
            i + 1
        } else {
            i
        }
    }
}

fn check_count(n: usize) -> Result<()> {
    if n < MIN_NODES {
        return Err(Error::GridTooSmall { n, min: MIN_NODES });
    }
    Ok(())
}

fn check_radius(what: &'static str, r: f64) -> Result<()> {
    if !(r > 0.0 && r < 1.0) {
        return Err(crate::error::out_of_domain(what, r, "(0, 1)"));
    }
    Ok(())
}

/// A conformal factor `u` sampled on a grid; the metric is `e^{2u}|dz|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values but grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Arc<RadialGrid>, value: f64) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![value; n])
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::new(grid, values)
    }

    pub fn try_from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> Result<f64>) -> Result<Self> {
        let values = grid
            .nodes()
            .iter()
            .map(|&r| f(r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    /// Linear interpolation at `r`, clamped to the grid ends.
    pub fn value_at(&self, r: f64) -> f64 {
        let g = &self.grid;
        if r <= g.r_min() {
            return self.values[0];
        }
        if r >= g.r_max() {
            return self.values[self.values.len() - 1];
        }
        let i = g.index_below(r);
        let (r0, r1) = (g.r(i), g.r(i + 1));
        let w = (r - r0) / (r1 - r0);
        (1.0 - w) * self.values[i] + w * self.values[i + 1]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Field> {
        Field::new(
            self.grid.clone(),
            self.values.iter().map(|&x| f(x)).collect(),
        )
    }

    pub fn shifted(&self, c: f64) -> Result<Field> {
        self.map(|x| x + c)
    }

    /// `alpha·self + beta·other`.
    pub fn combine(&self, alpha: f64, other: &Field, beta: f64) -> Result<Field> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Field::new(self.grid.clone(), values)
    }

    /// Maximum value over nodes with `r ≤ radius`, and the radius where it occurs.
    pub fn sup_within(&self, radius: f64) -> (f64, f64) {
        self.grid
            .nodes()
            .iter()
            .zip(&self.values)
            .take_while(|(r, _)| **r <= radius)
            .fold((f64::NEG_INFINITY, f64::NAN), |acc, (&r, &u)| {
                if u > acc.0 {
                    (u, r)
                } else {
                    acc
                }
            })
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

/// Discrete flat Laplacian `f_rr + f_r/r` of a radial function.
///
/// Interior nodes use the finite-volume stencil described in the module docs;
/// the outer node (and the inner node of an annulus) get a one-sided
/// four-point estimate, which is only boundary-quality.
pub fn laplacian(f: &Field) -> Result<Field> {
    let grid = f.grid();
    check_count(grid.len())?;
    check_finite(f.values())?;
    let u = f.values();
    let n = u.len();
    let mut out = vec![0.0; n];
    for i in grid.interior() {
        let (lo, hi) = grid.stencil(i);
        let down = if i > 0 { lo * (u[i - 1] - u[i]) } else { 0.0 };
        out[i] = down + hi * (u[i + 1] - u[i]);
    }
    out[n - 1] = one_sided(grid.nodes(), u, n - 1, [n - 4, n - 3, n - 2, n - 1]);
    if !grid.has_origin() {
        out[0] = one_sided(grid.nodes(), u, 0, [0, 1, 2, 3]);
    }
    Field::new(grid.clone(), out)
}

fn one_sided(r: &[f64], u: &[f64], at: usize, idx: [usize; 4]) -> f64 {
    let x = idx.map(|j| r[j]);
    let w = fornberg_weights(r[at], &x);
    // differences against u[at], so constants map to exactly zero
    let (mut d1, mut d2) = (0.0, 0.0);
    for (k, &j) in idx.iter().enumerate() {
        d1 += w[1][k] * (u[j] - u[at]);
        d2 += w[2][k] * (u[j] - u[at]);
    }
    d2 + d1 / r[at]
}

/// Finite-difference weights for derivatives 0..=2 at `z` from nodes `x`.
fn fornberg_weights(z: f64, x: &[f64; 4]) -> [[f64; 4]; 3] {
    let mut c = [[0.0; 4]; 3];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..4 {
        let mn = i.min(2);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Composite trapezoidal approximation of `∫_{r_lo}^{r_hi} e^{f(r)} dr`, the
/// radial length of the metric `e^{2f}|dz|²`. Endpoints off the grid use
/// linear interpolation of `f`.
pub fn integrate_radial(f: &Field, r_lo: f64, r_hi: f64) -> Result<f64> {
    let grid = f.grid();
    if !(r_lo < r_hi) {
        return Err(Error::InvalidArgument(format!(
            "integration limits out of order: [{r_lo}, {r_hi}]"
        )));
    }
    if r_lo < grid.r_min() || r_hi > grid.r_max() {
        return Err(crate::error::out_of_domain(
            "integration interval",
            if r_lo < grid.r_min() { r_lo } else { r_hi },
            format!("[{}, {}]", grid.r_min(), grid.r_max()),
        ));
    }
    let mut prev_r = r_lo;
    let mut prev_e = f.value_at(r_lo).exp();
    let mut total = 0.0;
    let start = grid.index_below(r_lo) + 1;
    for i in start..grid.len() {
        let r = grid.r(i);
        if r >= r_hi {
            break;
        }
        if r <= prev_r {
            continue;
        }
        let e = f.values()[i].exp();
        total += 0.5 * (r - prev_r) * (prev_e + e);
        prev_r = r;
        prev_e = e;
    }
    let e_hi = f.value_at(r_hi).exp();
    total += 0.5 * (r_hi - prev_r) * (prev_e + e_hi);
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn disc(n: usize) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::uniform(n, 0.9).unwrap())
    }

    #[test]
    fn grid_endpoints_are_exact() {
        for g in [
            RadialGrid::uniform(2049, 0.9).unwrap(),
            RadialGrid::stretched(2049, 0.9, 1.5e-6, 0.5).unwrap(),
        ] {
            assert_eq!(g.r(0), 0.0);
            assert_eq!(g.r_max(), 0.9);
            assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
        }
        let a = RadialGrid::annulus(100, 0.05, 0.9).unwrap();
        assert_eq!(a.r_min(), 0.05);
        assert!(!a.has_origin());
        assert_eq!(a.interior(), 1..99);
    }

    #[test]
    fn rejects_small_or_bad_grids() {
        assert_eq!(
            RadialGrid::uniform(15, 0.9),
            Err(Error::GridTooSmall { n: 15, min: 16 })
        );
        assert!(RadialGrid::uniform(64, 1.0).is_err());
        assert!(RadialGrid::annulus(64, 0.5, 0.4).is_err());
        assert!(RadialGrid::stretched(64, 0.9, 0.95, 0.5).is_err());
    }

    #[test]
    fn field_rejects_nan_and_wrong_length() {
        let g = disc(32);
        let mut v = vec![0.0; 32];
        v[7] = f64::NAN;
        assert!(matches!(
            Field::new(g.clone(), v),
            Err(Error::NonFinite { index: 7, .. })
        ));
        assert!(Field::new(g, vec![0.0; 31]).is_err());
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        for g in [
            disc(64),
            Arc::new(RadialGrid::stretched(64, 0.9, 1e-3, 0.5).unwrap()),
        ] {
            let f = Field::constant(g, 3.7).unwrap();
            let lap = laplacian(&f).unwrap();
            assert!(lap.values().iter().all(|x| x.abs() < 1e-9));
        }
    }

    #[test]
    fn laplacian_of_r_squared_is_four() {
        let grids = [
            disc(100),
            Arc::new(RadialGrid::stretched(100, 0.9, 1e-2, 0.5).unwrap()),
            Arc::new(RadialGrid::annulus(100, 0.1, 0.9).unwrap()),
        ];
        for g in grids {
            let f = Field::from_fn(g, |r| r * r).unwrap();
            for x in laplacian(&f).unwrap().values() {
                assert_relative_eq!(*x, 4.0, epsilon = 1e-8, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn origin_stencil_matches_mean_value_rule() {
        let g = disc(64);
        let h = g.r(1);
        let f = Field::from_fn(g, |r| (3.0 * r).cos()).unwrap();
        let lap = laplacian(&f).unwrap();
        let u = f.values();
        assert_relative_eq!(
            lap.values()[0],
            4.0 * (u[1] - u[0]) / (h * h),
            max_relative = 1e-12
        );
    }

    #[test]
    fn boundary_estimate_is_second_order() {
        // Δ(r⁴) = 16r²
        let err = |n| {
            let g = disc(n);
            let f = Field::from_fn(g, |r| r.powi(4)).unwrap();
            let lap = laplacian(&f).unwrap();
            (lap.values()[n - 1] - 16.0 * 0.81).abs()
        };
        let ratio = err(257) / err(513);
        assert!((2.8..5.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn flat_and_scaled_lengths() {
        let g = disc(257);
        let zero = Field::constant(g.clone(), 0.0).unwrap();
        assert_relative_eq!(
            integrate_radial(&zero, 0.0, 0.5).unwrap(),
            0.5,
            epsilon = 1e-14
        );
        let ln2 = Field::constant(g, 2f64.ln()).unwrap();
        assert_relative_eq!(
            integrate_radial(&ln2, 0.0, 0.25).unwrap(),
            0.5,
            epsilon = 1e-14
        );
    }

    #[test]
    fn integrate_rejects_bad_limits() {
        let f = Field::constant(disc(64), 0.0).unwrap();
        assert!(integrate_radial(&f, 0.5, 0.2).is_err());
        assert!(integrate_radial(&f, 0.0, 0.95).is_err());
        assert!(integrate_radial(&f, -0.1, 0.5).is_err());
    }

    #[test]
    fn value_at_interpolates() {
        let g = disc(91);
        let f = Field::from_fn(g, |r| 2.0 * r + 1.0).unwrap();
        assert_relative_eq!(f.value_at(0.3333), 1.6666, epsilon = 1e-12);
    }
}
