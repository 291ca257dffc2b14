//! Ricci flow of a radial conformal factor, `u_t = e^{−2u} Δu`, discretised
//! with backward Euler in time and the finite-volume Laplacian in space.
//!
//! Each implicit step solves `w − u − dt·e^{−2w}Δw = 0` by damped Newton
//! iteration on the tridiagonal Jacobian. Time steps are chosen by step
//! doubling. Several runs can be advanced in lockstep with a shared step
//! sequence, which keeps the discrete comparison principle exact between
//! them.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{FunctionalSpec, Snapshot, StepRecord, TimeSeries};
use crate::error::{out_of_domain, Error, Result};
use crate::grid::{Field, RadialGrid};
use crate::metrics::{cusp_factor, sphere_factor};

/// Smallest time step before a run gives up.
pub const DT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub dt_init: f64,
    pub dt_max: f64,
    /// Sup-norm tolerance on the diagonally scaled Newton residual.
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    /// Target for the step-doubling estimate of the local error (sup norm).
    pub error_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt_init: 1e-6,
            dt_max: 1e-3,
            newton_tol: 1e-10,
            newton_max_iters: 30,
            error_tol: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt_init", self.dt_init),
            ("dt_max", self.dt_max),
            ("newton_tol", self.newton_tol),
            ("error_tol", self.error_tol),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {x}"
                )));
            }
        }
        if self.newton_max_iters < 4 {
            return Err(Error::InvalidArgument(format!(
                "newton_max_iters must be at least 4, got {}",
                self.newton_max_iters
            )));
        }
        Ok(())
    }
}

/// Closed-form Ricci flows used as references and as boundary data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ExactSolution {
    /// `u ≡ c`, a fixed point.
    Flat { c: f64 },
    /// `v(r) + ½ln(1 + 2t)`: the expanding hyperbolic cusp.
    Cusp,
    /// `s(r/λ) − ln λ + ½ln(1 − 2t)`: the shrinking sphere, for `t < ½`.
    Sphere { lambda: f64 },
}

impl ExactSolution {
    pub fn eval(&self, r: f64, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(out_of_domain("t", t, "[0, ∞)"));
        }
        match *self {
            ExactSolution::Flat { c } => Ok(c),
            ExactSolution::Cusp => Ok(cusp_factor(r)? + 0.5 * (2.0 * t).ln_1p()),
            ExactSolution::Sphere { lambda } => {
                if t >= 0.5 {
                    return Err(out_of_domain("t", t, "[0, 1/2) for the sphere"));
                }
                if !(r >= 0.0) {
                    return Err(out_of_domain("r", r, "[0, ∞)"));
                }
                Ok(sphere_factor(r / lambda) - lambda.ln() + 0.5 * (-2.0 * t).ln_1p())
            }
        }
    }

    pub fn sample(&self, grid: Arc<RadialGrid>, t: f64) -> Result<Field> {
        Field::try_from_fn(grid, |r| self.eval(r, t))
    }
}

pub fn exact_solution(name: ExactSolution, r: f64, t: f64) -> Result<f64> {
    name.eval(r, t)
}

/// Dirichlet data on one end of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryData {
    Frozen(f64),
    Exact(ExactSolution),
}

impl BoundaryData {
    fn value(&self, r: f64, t: f64) -> Result<f64> {
        match self {
            BoundaryData::Frozen(v) => Ok(*v),
            BoundaryData::Exact(sol) => sol.eval(r, t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcMode {
    /// Hold the initial boundary values for all time.
    Freeze,
}

/// Dirichlet data at `r_max`, and at `r_min` when the grid is an annulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Boundary {
    pub outer: BoundaryData,
    pub inner: Option<BoundaryData>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub u: Field,
    pub t: f64,
    pub boundary: Boundary,
    /// Current outer Dirichlet value.
    pub bc_value: f64,
    pub step_count: usize,
    pub last_dt: f64,
}

pub fn init_state(u0: Field, bc_mode: BcMode) -> Result<FlowState> {
    let BcMode::Freeze = bc_mode;
    if let Some(index) = u0.values().iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            index,
            value: u0.values()[index],
        });
    }
    let bc_value = u0.values()[u0.len() - 1];
    let inner = (!u0.grid().has_origin()).then(|| BoundaryData::Frozen(u0.values()[0]));
    Ok(FlowState {
        u: u0,
        t: 0.0,
        boundary: Boundary {
            outer: BoundaryData::Frozen(bc_value),
            inner,
        },
        bc_value,
        step_count: 0,
        last_dt: 0.0,
    })
}

/// State whose Dirichlet data follow an exact solution (on both ends of an
/// annulus), for regression against that solution.
pub fn init_exact_state(u0: Field, t0: f64, solution: ExactSolution) -> Result<FlowState> {
    let grid = u0.grid().clone();
    let inner = (!grid.has_origin()).then_some(BoundaryData::Exact(solution));
    let bc_value = solution.eval(grid.r_max(), t0)?;
    Ok(FlowState {
        u: u0,
        t: t0,
        boundary: Boundary {
            outer: BoundaryData::Exact(solution),
            inner,
        },
        bc_value,
        step_count: 0,
        last_dt: 0.0,
    })
}

#[derive(Debug, Clone, Copy)]
struct NewtonStats {
    iters: usize,
}

/// Solves one backward-Euler step from `prev` over `dt`, with Dirichlet values
/// taken at `t_new`.
fn implicit_solve(
    grid: &RadialGrid,
    prev: &[f64],
    boundary: &Boundary,
    t_new: f64,
    dt: f64,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, NewtonStats)> {
    let n = prev.len();
    let mut w = prev.to_vec();
    w[n - 1] = boundary.outer.value(grid.r_max(), t_new)?;
    if let Some(inner) = &boundary.inner {
        w[0] = inner.value(grid.r_min(), t_new)?;
    }
    let unknowns = grid.interior();
    let first = unknowns.start;
    let m = unknowns.len();

    let mut res = vec![0.0; m];
    let mut sub = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut sup = vec![0.0; m];
    let mut delta = vec![0.0; m];
    let mut trial = w.clone();

    let mut norm = residual(grid, prev, &w, dt, first, &mut res, None);
    for iter in 0..cfg.newton_max_iters {
        if norm <= cfg.newton_tol {
            return Ok((w, NewtonStats { iters: iter }));
        }
        residual(
            grid,
            prev,
            &w,
            dt,
            first,
            &mut res,
            Some((&mut sub, &mut diag, &mut sup)),
        );
        for (d, r) in delta.iter_mut().zip(&res) {
            *d = -r;
        }
        if !solve_tridiagonal(&sub, &diag, &sup, &mut delta) {
            return Err(Error::NewtonNonConvergence {
                iters: iter,
                dt,
                residual: norm,
            });
        }
        let mut step = 1.0;
        loop {
            trial.copy_from_slice(&w);
            for (j, d) in delta.iter().enumerate() {
                trial[first + j] += step * d;
            }
            let trial_norm = residual(grid, prev, &trial, dt, first, &mut res, None);
            if trial_norm < norm {
                std::mem::swap(&mut w, &mut trial);
                norm = trial_norm;
                break;
            }
            step *= 0.5;
            if step < 1.0 / 4096.0 {
                return Err(Error::NewtonStagnation { dt, residual: norm });
            }
        }
    }
    if norm <= cfg.newton_tol {
        return Ok((
            w,
            NewtonStats {
                iters: cfg.newton_max_iters,
            },
        ));
    }
    Err(Error::NewtonNonConvergence {
        iters: cfg.newton_max_iters,
        dt,
        residual: norm,
    })
}

/// Fills `res` with the backward-Euler residual on the unknowns and returns its
/// diagonally scaled sup norm. With `jac`, also assembles the Jacobian.
fn residual(
    grid: &RadialGrid,
    prev: &[f64],
    w: &[f64],
    dt: f64,
    first: usize,
    res: &mut [f64],
    mut jac: Option<(&mut Vec<f64>, &mut Vec<f64>, &mut Vec<f64>)>,
) -> f64 {
    let m = res.len();
    let mut norm = 0.0f64;
    for (j, r) in res.iter_mut().enumerate() {
        let i = first + j;
        let (lo, hi) = grid.stencil(i);
        let down = if i > 0 { w[i - 1] - w[i] } else { 0.0 };
        let lap = lo * down + hi * (w[i + 1] - w[i]);
        let diffusivity = dt * (-2.0 * w[i]).exp();
        *r = w[i] - prev[i] - diffusivity * lap;
        let scale = 1.0 + diffusivity * (lo + hi);
        let scaled = (*r / scale).abs();
        norm = if scaled.is_nan() {
            f64::INFINITY
        } else {
            norm.max(scaled)
        };
        if let Some((sub, diag, sup)) = jac.as_mut() {
            sub[j] = if j > 0 { -diffusivity * lo } else { 0.0 };
            sup[j] = if j + 1 < m { -diffusivity * hi } else { 0.0 };
            diag[j] = scale + 2.0 * diffusivity * lap;
        }
    }
    norm
}

/// Thomas algorithm; `rhs` is overwritten by the solution. Returns false on a
/// vanishing or non-finite pivot.
fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) -> bool {
    let m = diag.len();
    let mut c = vec![0.0; m];
    let mut pivot = diag[0];
    if pivot == 0.0 || !pivot.is_finite() {
        return false;
    }
    c[0] = sup[0] / pivot;
    rhs[0] /= pivot;
    for j in 1..m {
        pivot = diag[j] - sub[j] * c[j - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return false;
        }
        c[j] = sup[j] / pivot;
        rhs[j] = (rhs[j] - sub[j] * rhs[j - 1]) / pivot;
    }
    for j in (0..m - 1).rev() {
        rhs[j] -= c[j] * rhs[j + 1];
    }
    rhs.iter().all(|x| x.is_finite())
}

/// One backward-Euler step of size `dt`.
pub fn step(state: &FlowState, dt: f64, cfg: &SolverConfig) -> Result<FlowState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let grid = state.u.grid().clone();
    let t_new = state.t + dt;
    let (w, _) = implicit_solve(&grid, state.u.values(), &state.boundary, t_new, dt, cfg)?;
    let bc_value = w[w.len() - 1];
    Ok(FlowState {
        u: Field::new(grid, w)?,
        t: t_new,
        boundary: state.boundary,
        bc_value,
        step_count: state.step_count + 1,
        last_dt: dt,
    })
}

/// Outcome of one step-doubling attempt for a single member.
struct Attempt {
    values: Vec<f64>,
    error: f64,
    newton_iters: usize,
}

fn attempt(state: &FlowState, dt: f64, cfg: &SolverConfig) -> Result<Attempt> {
    let grid = state.u.grid();
    let prev = state.u.values();
    let (full, a) = implicit_solve(grid, prev, &state.boundary, state.t + dt, dt, cfg)?;
    let half = 0.5 * dt;
    let (mid, b) = implicit_solve(grid, prev, &state.boundary, state.t + half, half, cfg)?;
    let (end, c) = implicit_solve(grid, &mid, &state.boundary, state.t + dt, half, cfg)?;
    let error = full
        .iter()
        .zip(&end)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    Ok(Attempt {
        values: end,
        error,
        newton_iters: a.iters + b.iters + c.iters,
    })
}

fn check_schedule(t_end: f64, snapshot_times: &[f64]) -> Result<()> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    if snapshot_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "snapshot times must be strictly increasing".into(),
        ));
    }
    if let Some(&t) = snapshot_times.iter().find(|&&t| !(t > 0.0 && t <= t_end)) {
        return Err(Error::InvalidArgument(format!(
            "snapshot time {t} is outside (0, {t_end}]"
        )));
    }
    Ok(())
}

/// Evolves `u0` (frozen boundary) to `t_end`, recording the requested
/// snapshots plus the initial state.
pub fn run(
    u0: Field,
    t_end: f64,
    cfg: &SolverConfig,
    snapshot_times: &[f64],
) -> Result<TimeSeries> {
    let state = init_state(u0, BcMode::Freeze)?;
    let mut out = run_lockstep(vec![("run".to_string(), state)], t_end, cfg, snapshot_times)?;
    Ok(out.pop().expect("one member"))
}

/// Evolves an already initialised state.
pub fn run_state(
    run_id: &str,
    state: FlowState,
    t_end: f64,
    cfg: &SolverConfig,
    snapshot_times: &[f64],
) -> Result<TimeSeries> {
    let mut out = run_lockstep(
        vec![(run_id.to_string(), state)],
        t_end,
        cfg,
        snapshot_times,
    )?;
    Ok(out.pop().expect("one member"))
}

/// Advances several runs with one shared adaptive step sequence: a step is
/// accepted only if every member's error estimate is within tolerance, and
/// the next step size is the smallest proposal. Members are stepped in
/// parallel on the current rayon pool.
pub fn run_lockstep(
    members: Vec<(String, FlowState)>,
    t_end: f64,
    cfg: &SolverConfig,
    snapshot_times: &[f64],
) -> Result<Vec<TimeSeries>> {
    cfg.validate()?;
    check_schedule(t_end, snapshot_times)?;
    if members.is_empty() {
        return Ok(Vec::new());
    }
    let mut series: Vec<TimeSeries> = members
        .iter()
        .map(|(id, state)| {
            let functional = FunctionalSpec::for_state(state);
            let mut ts = TimeSeries::new(id.clone(), functional);
            ts.push_snapshot(Snapshot {
                t: state.t,
                field: state.u.clone(),
            })?;
            Ok(ts)
        })
        .collect::<Result<_>>()?;
    let mut states: Vec<FlowState> = members.into_iter().map(|(_, s)| s).collect();

    let mut targets: Vec<f64> = snapshot_times.to_vec();
    if targets.last().copied() != Some(t_end) {
        targets.push(t_end);
    }
    let mut t = states[0].t;
    let mut dt = cfg.dt_init.min(cfg.dt_max);
    for &target in &targets {
        while t < target {
            let remaining = target - t;
            let clipped = dt >= remaining;
            let dt_try = if clipped {
                remaining
            } else {
                dt.min(cfg.dt_max)
            };

            let attempts: Vec<Result<Attempt>> =
                states.par_iter().map(|s| attempt(s, dt_try, cfg)).collect();
            let mut worst = 0.0f64;
            let mut failed: Option<Error> = None;
            for a in &attempts {
                match a {
                    Ok(a) => worst = worst.max(a.error),
                    Err(e) => failed = Some(e.clone()),
                }
            }
            if let Some(err) = failed {
                dt = 0.5 * dt_try;
                if dt < DT_FLOOR {
                    return Err(Error::StepUnderflow {
                        t,
                        cause: err.to_string(),
                    });
                }
                continue;
            }
            if worst > cfg.error_tol {
                dt = dt_try * (0.9 * (cfg.error_tol / worst).sqrt()).max(0.2);
                if dt < DT_FLOOR {
                    return Err(Error::StepUnderflow {
                        t,
                        cause: format!("local error {worst:e} above tolerance"),
                    });
                }
                continue;
            }

            let t_new = if clipped { target } else { t + dt_try };
            for ((state, a), ts) in states.iter_mut().zip(attempts).zip(series.iter_mut()) {
                let a = a.expect("checked above");
                let grid = state.u.grid().clone();
                state.bc_value = a.values[a.values.len() - 1];
                state.u = Field::new(grid, a.values)?;
                state.t = t_new;
                state.step_count += 1;
                state.last_dt = dt_try;
                ts.push_step(StepRecord {
                    t: t_new,
                    dt: dt_try,
                    error_estimate: a.error,
                    newton_iters: a.newton_iters,
                    functional_value: ts.functional().evaluate(&state.u)?,
                });
            }
            t = t_new;
            let growth = if worst > 0.0 {
                (0.9 * (cfg.error_tol / worst).sqrt()).min(2.0)
            } else {
                2.0
            };
            let proposal = dt_try * growth;
            dt = if clipped { dt.max(proposal) } else { proposal };
        }
        if snapshot_times.contains(&target) {
            for (state, ts) in states.iter().zip(series.iter_mut()) {
                ts.push_snapshot(Snapshot {
                    t: target,
                    field: state.u.clone(),
                })?;
            }
        }
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn disc(n: usize) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::uniform(n, 0.9).unwrap())
    }

    #[test]
    fn exact_solution_values() {
        let r = (-1f64).exp();
        assert_relative_eq!(
            exact_solution(ExactSolution::Cusp, r, 0.0).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        let sphere = exact_solution(ExactSolution::Sphere { lambda: 1.0 }, 0.0, 0.25).unwrap();
        assert_relative_eq!(sphere, 0.346574, epsilon = 1e-6);
        assert_eq!(
            exact_solution(ExactSolution::Flat { c: 1.5 }, 0.7, 3.0).unwrap(),
            1.5
        );
        assert!(exact_solution(ExactSolution::Sphere { lambda: 1.0 }, 0.0, 0.5).is_err());
        assert!(exact_solution(ExactSolution::Cusp, 0.0, 0.1).is_err());
    }

    #[test]
    fn init_state_freezes_boundary() {
        let u0 = Field::constant(disc(64), 0.0).unwrap();
        let s = init_state(u0, BcMode::Freeze).unwrap();
        assert_eq!(s.bc_value, 0.0);
        assert_eq!(s.t, 0.0);
        assert_eq!(s.boundary.inner, None);
    }

    #[test]
    fn flat_is_a_fixed_point() {
        let u0 = Field::constant(disc(64), 0.0).unwrap();
        let s = init_state(u0, BcMode::Freeze).unwrap();
        let next = step(&s, 0.37, &SolverConfig::default()).unwrap();
        assert!(next.u.values().iter().all(|&x| x == 0.0));
        assert_eq!(next.t, 0.37);
    }

    #[test]
    fn step_satisfies_implicit_equation() {
        let g = disc(200);
        let u0 = Field::from_fn(g.clone(), |r| 1.0 - r * r + 0.3 * (5.0 * r).sin()).unwrap();
        let s = init_state(u0.clone(), BcMode::Freeze).unwrap();
        let dt = 1e-2;
        let next = step(&s, dt, &SolverConfig::default()).unwrap();
        let lap = crate::grid::laplacian(&next.u).unwrap();
        for i in g.interior() {
            let w = next.u.values()[i];
            let r = w - u0.values()[i] - dt * (-2.0 * w).exp() * lap.values()[i];
            assert!(r.abs() < 1e-8, "node {i}: residual {r}");
        }
        assert_eq!(next.bc_value, u0.values()[199]);
    }

    #[test]
    fn rejects_bad_config_and_schedule() {
        let u0 = Field::constant(disc(32), 0.0).unwrap();
        let cfg = SolverConfig {
            newton_max_iters: 3,
            ..SolverConfig::default()
        };
        assert!(run(u0.clone(), 1.0, &cfg, &[]).is_err());
        let cfg = SolverConfig::default();
        assert!(run(u0.clone(), 1.0, &cfg, &[0.5, 0.2]).is_err());
        assert!(run(u0.clone(), 1.0, &cfg, &[1.5]).is_err());
        assert!(run(u0, -1.0, &cfg, &[]).is_err());
    }

    #[test]
    fn tridiagonal_solver() {
        let sub = [0.0, 1.0, 1.0];
        let diag = [4.0, 4.0, 4.0];
        let sup = [1.0, 1.0, 0.0];
        let mut rhs = [5.0, 6.0, 5.0];
        assert!(solve_tridiagonal(&sub, &diag, &sup, &mut rhs));
        for x in rhs {
            assert_relative_eq!(x, 1.0, epsilon = 1e-14);
        }
    }
}
