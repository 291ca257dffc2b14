//! Closed-form identities and reference values computed independently at
//! 40 digits.

// reference values are quoted to the digits they were computed at
#![allow(clippy::excessive_precision)]

use std::f64::consts::{E, PI};
use std::sync::Arc;

use approx::assert_relative_eq;
use cuspflow::analysis::{cusp_circumference, distance_to_half, monotone_functional};
use cuspflow::barriers::{barrier_u, h_barrier, sphere_barrier, supersolution_residual};
use cuspflow::flow::ExactSolution;
use cuspflow::grid::integrate_radial;
use cuspflow::metrics::{cusp_distance, gauss_curvature};
use cuspflow::{Field, MetricSpec, RadialGrid};

fn cusp_annulus(n: usize) -> Arc<RadialGrid> {
    Arc::new(RadialGrid::annulus(n, 0.05, 0.8).unwrap())
}

fn disc(n: usize) -> Arc<RadialGrid> {
    Arc::new(RadialGrid::uniform(n, 0.9).unwrap())
}

/// Largest `|K − expected|` over all nodes.
fn curvature_error(spec: MetricSpec, grid: Arc<RadialGrid>, expected: impl Fn(f64) -> f64) -> f64 {
    let u = spec.sample(grid.clone()).unwrap();
    let k = gauss_curvature(&u).unwrap();
    grid.nodes()
        .iter()
        .zip(k.values())
        .map(|(&r, &k)| (k - expected(r)).abs())
        .fold(0.0, f64::max)
}

fn cigar_origin_error(n: usize) -> f64 {
    let u = MetricSpec::Cigar.sample(disc(n)).unwrap();
    (gauss_curvature(&u).unwrap().values()[0] - 2.0).abs()
}

type ErrorAt = Box<dyn Fn(usize) -> f64>;

fn identities() -> Vec<(&'static str, ErrorAt)> {
    vec![
        (
            "cusp",
            Box::new(|n| curvature_error(MetricSpec::HyperbolicCusp, cusp_annulus(n), |_| -1.0)),
        ),
        (
            "sphere",
            Box::new(|n| {
                curvature_error(
                    MetricSpec::Sphere {
                        lambda: 1.0,
                        shift: 0.0,
                    },
                    disc(n),
                    |_| 1.0,
                )
            }),
        ),
        ("cigar_origin", Box::new(cigar_origin_error)),
        (
            "cigar",
            Box::new(|n| curvature_error(MetricSpec::Cigar, disc(n), |r| 2.0 / (1.0 + r * r))),
        ),
        (
            "band",
            Box::new(|n| {
                curvature_error(
                    MetricSpec::HyperbolicBand { delta: 0.2 },
                    cusp_annulus(n),
                    |_| -1.0,
                )
            }),
        ),
    ]
}

#[test]
fn curvature_identities_hold_at_4096() {
    for (name, err) in identities() {
        let e = err(4096);
        assert!(e <= 1e-3, "{name}: error {e:e}");
    }
}

#[test]
fn curvature_identities_converge_at_second_order() {
    for (name, err) in identities() {
        let ratio = err(2048) / err(4096);
        assert!((2.8..=5.5).contains(&ratio), "{name}: ratio {ratio}");
    }
}

#[test]
fn sphere_scaling_rule() {
    // K of s(r/λ) − ln λ + c is e^{−2c}
    let g = disc(2049);
    for (lambda, shift) in [(0.5, 0.0), (2.0, 0.3), (1.0, -0.7)] {
        let expected = (-2.0f64 * shift).exp();
        let e = curvature_error(MetricSpec::Sphere { lambda, shift }, g.clone(), |_| {
            expected
        });
        assert!(
            e <= 1e-5 * expected.max(1.0),
            "λ={lambda} shift={shift}: {e:e}"
        );
    }
}

#[test]
fn cusp_length_by_quadrature() {
    let g = Arc::new(RadialGrid::annulus(4096, 0.01, 0.9).unwrap());
    let v = MetricSpec::HyperbolicCusp.sample(g).unwrap();
    let lo = (-E).exp();
    let hi = (-1f64).exp();
    let len = integrate_radial(&v, lo, hi).unwrap();
    assert_relative_eq!(len, 1.0, epsilon = 1e-4);
    assert_relative_eq!(cusp_distance(lo, hi).unwrap(), 1.0, epsilon = 1e-14);
}

#[test]
fn distance_to_half_of_truncated_cusps() {
    let g = Arc::new(RadialGrid::stretched(2049, 0.9, 1.5e-6, 0.5).unwrap());
    for (k, reference) in [(8.0, 2.783925202292025), (12.0, 3.111400966041436)] {
        let u = MetricSpec::TruncatedCusp { k }.sample(g.clone()).unwrap();
        let d = distance_to_half(&u).unwrap();
        assert_relative_eq!(d, reference, max_relative = 1e-4);
    }
    let flat = Field::constant(g.clone(), 4f64.ln()).unwrap();
    assert_relative_eq!(distance_to_half(&flat).unwrap(), 2.0, epsilon = 1e-12);
}

#[test]
fn barrier_reference_values() {
    assert_relative_eq!(
        sphere_barrier(0.0, 0.5).unwrap(),
        10.757546675105999,
        epsilon = 1e-12
    );
    let lam = (-12f64).exp();
    assert_relative_eq!(
        sphere_barrier(0.25 * lam, 0.5).unwrap(),
        10.696922053289565,
        epsilon = 1e-12
    );
    assert_relative_eq!(
        barrier_u(0.0, 0.5).unwrap(),
        10.757546675105999,
        epsilon = 1e-12
    );
    assert_relative_eq!(h_barrier(0.9).unwrap(), 2.905033987304326, epsilon = 1e-12);
    assert_relative_eq!(
        sphere_barrier(0.0, 1.0).unwrap(),
        5.450693855665945,
        epsilon = 1e-12
    );
}

#[test]
fn supersolution_reference_values() {
    // (r/λ, t) → (∂S/∂t, e^{−2S}ΔS)
    let cases = [
        (0.0f64, 0.5f64, -22.0, -48.0),
        (0.25, 0.5, -19.176470588235294, -48.0),
        (0.75, 0.8, -1.375, -18.75),
        (0.0, 1.0, -5.0, -12.0),
    ];
    for (x, t, time_term, spatial) in cases {
        let r: f64 = x * (-6.0f64 / t).exp();
        let res = supersolution_residual(r, t).unwrap();
        assert_relative_eq!(res.time_term, time_term, max_relative = 1e-12);
        assert_relative_eq!(res.spatial_term, spatial, max_relative = 1e-12);
        assert_relative_eq!(res.residual, time_term - spatial, max_relative = 1e-12);
    }
}

#[test]
fn residual_matches_centred_differences() {
    for (x, t) in [(0.1f64, 0.3f64), (0.6, 0.7), (0.9, 0.95)] {
        let r: f64 = x * (-6.0f64 / t).exp();
        let dt = 1e-6 * t;
        let fd =
            (sphere_barrier(r, t + dt).unwrap() - sphere_barrier(r, t - dt).unwrap()) / (2.0 * dt);
        let res = supersolution_residual(r, t).unwrap();
        assert_relative_eq!(res.time_term, fd, max_relative = 1e-6);
    }
}

#[test]
fn exact_solution_reference_values() {
    assert_relative_eq!(
        ExactSolution::Cusp.eval(0.3, 0.2).unwrap(),
        1.1865821637741768,
        epsilon = 1e-14
    );
    assert_relative_eq!(
        ExactSolution::Sphere { lambda: 1.0 }
            .eval(0.5, 0.2)
            .unwrap(),
        0.21459081736274021,
        epsilon = 1e-14
    );
    assert!(ExactSolution::Sphere { lambda: 1.0 }
        .eval(0.5, 0.5)
        .is_err());
}

#[test]
fn band_reference_value() {
    let u =
        cuspflow::metrics::eval_factor(&MetricSpec::HyperbolicBand { delta: 0.2 }, 0.3).unwrap();
    assert_relative_eq!(u, 1.2067366675369406, epsilon = 1e-13);
}

#[test]
fn cusp_circumference_identity() {
    for r in [1e-6, 1e-3, 0.1, 0.5, 0.9] {
        let c = cusp_circumference(r).unwrap();
        assert_relative_eq!(c, PI * (2.0 / -r.ln()), max_relative = 1e-12);
    }
    assert_relative_eq!(
        cusp_circumference(0.1).unwrap(),
        2.7287527076836827,
        epsilon = 1e-12
    );
}

#[test]
fn functional_plateau_values() {
    let g = Arc::new(RadialGrid::uniform(1025, 0.9).unwrap());
    let m = 1.5;
    let region = 0.6;
    let above = Field::constant(g.clone(), m + 1.0).unwrap();
    assert_eq!(monotone_functional(&above, m, region).unwrap(), 0.0);
    let below = Field::constant(g.clone(), m - 2.0).unwrap();
    assert_relative_eq!(
        monotone_functional(&below, m, region).unwrap(),
        2.0 * PI * region * region,
        max_relative = 1e-3
    );
    let level = Field::constant(g, m).unwrap();
    assert_relative_eq!(
        monotone_functional(&level, m, region).unwrap(),
        0.25 * PI * region * region,
        max_relative = 1e-3
    );
}
