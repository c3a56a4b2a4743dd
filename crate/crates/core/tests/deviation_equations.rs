use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use pathdev::catalog::builtin;
use pathdev::deviation::congruence::geodesic_deviation_rhs_general;
use pathdev::deviation::jacobi::integrate_geodesic_deviation;
use pathdev::deviation::motion::{
    equation_of_motion_rhs, force_difference_term, infinitesimal_deviation_equation_residual, AnalyticFamily,
    ParticleFamily,
};
use pathdev::deviation::motion::infinitesimal_deviation_rhs;
use pathdev::deviation::multipoint::{multipoint_covariant_derivative, Anchor, MultiPointTensor};
use pathdev::deviation::{DeviationScenario, Observer};
use pathdev::geometry::{torsion_tensor, ConnectionManifold};
use pathdev::oracles::{fd_second_deviation, fd_second_deviation_with, measure_order, two_geodesic_separation_grid, Stencil};
use pathdev::paths::{geodesic_endpoint, integrate_geodesic, Congruence};
use pathdev::tensor::Vector;
use pathdev::transport::{transport_matrix, TransportLaw};
use pathdev::Result;

fn v(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

fn jacobi_against_separation(m: &ConnectionManifold, x0: Vector, u0: Vector, h0: Vector, raw_dv0: Vector, end: f64) {
    let base = integrate_geodesic(m, &x0, &u0, (0.0, end), None, 1e-3).unwrap();
    let dh0 = &raw_dv0 + m.gamma(x0.as_slice()).unwrap().apply(&u0, &h0);
    let states = integrate_geodesic_deviation(m, &base, &h0, &dh0, (0.0, end), 1e-3).unwrap();
    let picks: Vec<_> = states.iter().step_by(500).skip(1).collect();
    let us: Vec<f64> = picks.iter().map(|s| s.u).collect();
    let oracle = two_geodesic_separation_grid(m, &base, &h0, &raw_dv0, &us, 1e-2, 1e-3).unwrap();
    for (st, est) in picks.iter().zip(&oracle) {
        let diff = (&st.h - &est.value).amax();
        assert!(diff <= 10.0 * est.bound, "u = {}: diff {diff:e}, bound {:e}", st.u, est.bound);
    }
}

#[test]
fn jacobi_field_on_the_sphere_matches_neighbouring_geodesics() {
    let m = builtin("sphere2:1").unwrap();
    jacobi_against_separation(&m, v(&[1.2, 0.1]), v(&[0.3, 0.9]), v(&[0.05, -0.1]), v(&[0.4, 0.2]), 2.5);
}

#[test]
fn torsion_terms_match_neighbouring_geodesics() {
    let m = builtin("flat_torsion:0.5").unwrap();
    assert!(torsion_tensor(&m, &[0.0, 0.0]).unwrap().max_abs() > 0.4);
    jacobi_against_separation(&m, v(&[0.0, 0.0]), v(&[1.0, 0.5]), v(&[0.2, -0.1]), v(&[0.3, 0.4]), 2.0);
}

#[test]
fn hyperbolic_jacobi_field_matches_neighbouring_geodesics() {
    let m = builtin("hyperbolic2").unwrap();
    jacobi_against_separation(&m, v(&[0.0, 1.0]), v(&[0.8, 0.3]), v(&[0.0, 0.0]), v(&[0.1, -0.2]), 2.0);
}

/// The congruence `y = a0 + e^u b0 + e^v (a1 + e^u b1)`: both families are
/// straight lines with `∇_U U = U` and `∇_V V = V`.
fn flat_exponential_net() -> Congruence {
    Congruence::new(
        2,
        |u, w| {
            let (eu, ev) = (u.exp(), w.exp());
            Ok(v(&[eu + ev * 0.3 * eu, 0.2 + ev * (1.0 + 0.2 * eu)]))
        },
        1e-2,
    )
}

/// Great circles through the gnomonic chart: lines `(1, u, v)` projected to the
/// unit sphere and written in `(θ, φ)`.
fn gnomonic_net() -> Congruence {
    Congruence::new(
        2,
        |a, b| {
            let rho = (1.0 + a * a + b * b).sqrt();
            Ok(v(&[(b / rho).acos(), a.atan2(1.0)]))
        },
        1e-2,
    )
}

fn gnomonic_rate(x: f64, other: f64) -> f64 {
    -2.0 * x / (1.0 + x * x + other * other)
}

fn congruence_identity_order(m: &ConnectionManifold, c: Congruence, f: &(dyn Fn(f64, f64) -> f64 + Sync), g: &(dyn Fn(f64, f64) -> f64 + Sync), use_f: bool) -> f64 {
    let (u, v1, v2) = (0.3, 0.1, 0.4);
    let rhs = geodesic_deviation_rhs_general(m, &c, u, v1, v2, if use_f { Some(f) } else { None }, Some(g), 128).unwrap();
    let scn = DeviationScenario::from_congruence(m.clone(), c, (v1, v2), (-1.0, 1.0)).unwrap();
    let law = TransportLaw::parallel(m.clone(), 1e-3);
    let report = measure_order(
        |h| {
            let lhs = fd_second_deviation_with(&scn, &law, u, h, 64, Stencil::ThreePoint)?;
            Ok((lhs - &rhs).norm())
        },
        &[4e-3, 2e-3, 1e-3],
    )
    .unwrap();
    eprintln!("{report:?}");
    report.fitted_order
}

#[test]
fn non_affine_identity_closes_in_flat_space() {
    let m = builtin("euclidean:2").unwrap();
    let one = |_: f64, _: f64| 1.0;
    for use_f in [true, false] {
        let order = congruence_identity_order(&m, flat_exponential_net(), &one, &one, use_f);
        assert!((order - 2.0).abs() <= 0.3, "{order}");
    }
}

#[test]
fn non_affine_identity_closes_on_the_sphere() {
    let m = builtin("sphere2:1").unwrap();
    let f = |u: f64, w: f64| gnomonic_rate(u, w);
    let g = |u: f64, w: f64| gnomonic_rate(w, u);
    for use_f in [true, false] {
        let order = congruence_identity_order(&m, gnomonic_net(), &f, &g, use_f);
        assert!((order - 2.0).abs() <= 0.3, "{order}");
    }
}

#[test]
fn affine_geodesic_congruence_deviation_is_scaled_tangent() {
    let m = builtin("sphere2:1").unwrap();
    // meridians fanned in φ; at u = 0.5 the connector is the equator
    let c = Congruence::new(2, |u, w| Ok(v(&[FRAC_PI_2 - 0.5 + u, w])), 1e-2);
    let scn = DeviationScenario::from_congruence(m.clone(), c.clone(), (0.2, 0.5), (0.0, 1.0)).unwrap();
    let h = scn.deviation_vector(&TransportLaw::parallel(m, 1e-3), 0.5, 64).unwrap();
    let expected = c.v_tangent(0.5, 0.2).unwrap() * 0.3;
    assert!((h.components - expected).norm() < 1e-10);
}

fn flat_forced_family() -> AnalyticFamily {
    AnalyticFamily::from_expressions(&[
        "0.5*r + (0.2 + r)*s + sin(r)*s^2/2",
        "r^2 - 0.3*s + cos(r)*s^2/2",
        "0.1*r*s",
    ])
    .unwrap()
}

#[test]
fn newtonian_limit_in_flat_space() {
    let m = builtin("euclidean:3").unwrap();
    let scn = DeviationScenario::from_family(m.clone(), Arc::new(flat_forced_family()), (0.2, 1.1), (-1.0, 1.0), Observer::FirstParticle)
        .unwrap();
    let law = TransportLaw::parallel(m, 1e-3);
    let lhs = fd_second_deviation(&scn, &law, 0.3, 1e-2, 32).unwrap();
    let expected = v(&[1.1f64.sin() - 0.2f64.sin(), 1.1f64.cos() - 0.2f64.cos(), 0.0]);
    assert!((lhs - expected).norm() <= 1e-6);
}

fn sphere_family() -> AnalyticFamily {
    AnalyticFamily::from_expressions(&[
        "1.0 + 0.2*s + r*(0.3 + 0.1*s^2) + 0.05*r^2",
        "0.5*s + r*(0.4 + 0.2*s) - 0.1*s^2",
    ])
    .unwrap()
}

#[test]
fn equation_of_motion_matches_finite_differences_on_the_sphere() {
    let m = builtin("sphere2:1").unwrap();
    let observer = Observer::Geodesic {
        direction: Arc::new(|s| v(&[0.1, 0.05 * s])),
        length: 1.0,
        steps: 200,
    };
    let scn = DeviationScenario::from_family(m.clone(), Arc::new(sphere_family()), (0.0, 0.6), (-1.0, 1.0), observer).unwrap();
    let law = TransportLaw::parallel(m, 1e-3);
    let s = 0.2;
    let lhs = fd_second_deviation(&scn, &law, s, 1e-2, 32).unwrap();
    let errs: Vec<f64> = [2e-3, 1e-3]
        .iter()
        .map(|&h| (v(&equation_of_motion_rhs(&law, &scn, s, h, 32).unwrap().total) - &lhs).norm())
        .collect();
    eprintln!("eom errors {errs:?}");
    assert!(errs[1] < 1e-4, "{errs:?}");
    assert!(errs[0] / errs[1] > 3.0, "{errs:?}");
}

#[test]
fn force_term_forms_agree() {
    let m = builtin("flat_torsion:0.5").unwrap();
    let scn = DeviationScenario::from_family(m.clone(), Arc::new(sphere_family()), (0.0, 0.6), (-1.0, 1.0), Observer::FirstParticle)
        .unwrap();
    let law = TransportLaw::parallel(m.clone(), 1e-3);
    let fam = scn.family.clone().unwrap();
    let s = 0.2;
    let by_parts = v(&force_difference_term(&law, &scn, s, 1e-4, 64).unwrap());
    let gamma = (scn.gamma)(s).unwrap();
    let force = |r: f64| -> Result<MultiPointTensor> {
        Ok(MultiPointTensor::vector(Anchor::new("y", fam.point(s, r)?), &fam.force(&m, s, r)?))
    };
    let direct = pathdev::displacement::simpson(
        |u| {
            let f = fam.force(&m, s, u)?;
            let df = multipoint_covariant_derivative(&m, force, u, 1e-4)?.as_vector().unwrap();
            let t = torsion_tensor(&m, fam.point(s, u)?.as_slice())?;
            let lam = transport_matrix(&law, &gamma, u, 0.0)?.h;
            Ok(lam * (df + t.apply(&f, &fam.r_tangent(s, u)?)))
        },
        0.0,
        0.6,
        64,
    )
    .unwrap();
    assert!((&by_parts - &direct).norm() < 1e-7, "{by_parts} vs {direct}");
    assert!(by_parts.norm() > 1e-2);
}

/// Connectors are geodesics from `x1(s)` with initial tangent `w(s)`, so the
/// displacement along them is exactly `(r″ − r′) γ̇(r′)`.
struct GeodesicFan {
    m: ConnectionManifold,
}

impl GeodesicFan {
    fn start(s: f64) -> (Vector, Vector) {
        (v(&[1.0 + 0.1 * s, 0.5 * s]), v(&[0.3 + 0.1 * s, 0.4]))
    }
}

impl ParticleFamily for GeodesicFan {
    fn dim(&self) -> usize {
        2
    }

    fn point(&self, s: f64, r: f64) -> Result<Vector> {
        let (x0, w) = Self::start(s);
        geodesic_endpoint(&self.m, &x0, &w, 0.0, r, 400, None).map(|(x, _)| x)
    }

    fn s_tangent(&self, s: f64, r: f64) -> Result<Vector> {
        let h = 1e-3;
        Ok((self.point(s - 2.0 * h, r)? - self.point(s - h, r)? * 8.0 + self.point(s + h, r)? * 8.0
            - self.point(s + 2.0 * h, r)?)
            / (12.0 * h))
    }

    fn r_tangent(&self, s: f64, r: f64) -> Result<Vector> {
        let (x0, w) = Self::start(s);
        geodesic_endpoint(&self.m, &x0, &w, 0.0, r, 400, None).map(|(_, u)| u)
    }

    fn force(&self, _m: &ConnectionManifold, _s: f64, _r: f64) -> Result<Vector> {
        unimplemented!("not needed for first-order checks")
    }
}

#[test]
fn first_order_deviation_error_is_linear_in_observer_offset() {
    let m = builtin("sphere2:1").unwrap();
    let fam: Arc<dyn ParticleFamily> = Arc::new(GeodesicFan { m: m.clone() });
    let law = TransportLaw::parallel(m.clone(), 1e-3);
    let report = measure_order(
        |eps| {
            let observer = Observer::Geodesic {
                direction: Arc::new(|s| v(&[0.2, 0.3 + 0.1 * s])),
                length: eps,
                steps: 50,
            };
            let scn = DeviationScenario::from_family(m.clone(), fam.clone(), (0.0, 0.2), (-1.0, 1.0), observer)?;
            let h = scn.deviation_vector(&law, 0.3, 32)?.components;
            Ok((h - scn.infinitesimal_deviation(0.3)?.components).norm())
        },
        &[0.1, 0.05, 0.025],
    )
    .unwrap();
    assert!((report.fitted_order - 1.0).abs() <= 0.3, "{report:?}");
}

#[test]
fn first_order_deviation_error_is_quadratic_in_particle_offset() {
    let m = builtin("sphere2:1").unwrap();
    let fam: Arc<dyn ParticleFamily> = Arc::new(sphere_family());
    let law = TransportLaw::parallel(m.clone(), 1e-3);
    let report = measure_order(
        |dr| {
            let scn = DeviationScenario::from_family(m.clone(), fam.clone(), (0.0, dr), (-1.0, 1.0), Observer::FirstParticle)?;
            let h = scn.deviation_vector(&law, 0.3, 32)?.components;
            Ok((h - scn.infinitesimal_deviation(0.3)?.components).norm())
        },
        &[0.1, 0.05, 0.025],
    )
    .unwrap();
    assert!((report.fitted_order - 2.0).abs() <= 0.3, "{report:?}");
}

#[test]
fn nearby_particle_equation_residual_is_quadratic() {
    for name in ["sphere2:1", "flat_torsion:0.5"] {
        let m = builtin(name).unwrap();
        let fam: Arc<dyn ParticleFamily> = Arc::new(sphere_family());
        let law = TransportLaw::parallel(m.clone(), 1e-3);
        let report = measure_order(
            |dr| {
                let scn =
                    DeviationScenario::from_family(m.clone(), fam.clone(), (0.0, dr), (-1.0, 1.0), Observer::FirstParticle)?;
                infinitesimal_deviation_equation_residual(&law, &scn, 0.3, 1e-2, 32)
            },
            &[0.1, 0.05, 0.025],
        )
        .unwrap();
        assert!((report.fitted_order - 2.0).abs() <= 0.3, "{name}: {report:?}");
    }
}

#[test]
fn nearby_geodesics_reduce_to_the_jacobi_equation() {
    let m = builtin("sphere2:1").unwrap();
    // meridians on the unit sphere: forces vanish and R(U, ζ)U = −ζ for ζ ⟂ U
    let c = Congruence::new(2, |u, w| Ok(v(&[0.6 + u, w])), 1e-2);
    let scn = DeviationScenario::from_congruence(m, c, (0.0, 1e-3), (0.0, 1.5)).unwrap();
    let rhs = infinitesimal_deviation_rhs(&scn, 0.5, 1e-3).unwrap();
    assert!((&rhs - v(&[0.0, -1e-3])).norm() < 1e-10, "{rhs}");
}
