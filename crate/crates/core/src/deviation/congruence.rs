//! Deviation equation for congruences whose particles and connectors need not
//! be affinely parametrised.
//!
//! With `∇_U U = f U` on the particles and `∇_V V = g V` on the connectors, the
//! displacement between the particles at `v1` and `v2` is `h = λ V(u, v1)` with
//! `λ(u) = ∫_{v1}^{v2} exp(∫_{v1}^{v} g(u, w) dw) dv`.

use serde::Serialize;

use crate::displacement::{even_panels, simpson_weights};
use crate::error::{Error, Result};
use crate::geometry::{curvature_from_parts, torsion_derivative_from_parts, torsion_from_gamma, ConnectionManifold, DEFAULT_GAMMA_STEP};
use crate::paths::{central4, Congruence};
use crate::tensor::Vector;

/// Step in `u` of the central differences giving `λ′` and `λ″`.
pub const LAMBDA_DIFFERENCE_STEP: f64 = 1e-3;

/// A scalar function of the congruence parameters `(u, v)`.
pub type CongruenceScalar<'a> = &'a (dyn Fn(f64, f64) -> f64 + Sync);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaFactor {
    pub value: f64,
    pub first: f64,
    pub second: f64,
}

fn simpson_scalar(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    if a == b {
        return 0.0;
    }
    let p = even_panels(panels.max(2));
    let h = (b - a) / p as f64;
    let sum: f64 = simpson_weights(p)
        .into_iter()
        .enumerate()
        .map(|(k, w)| w * f(if k == p { b } else { a + k as f64 * h }))
        .sum();
    sum * h / 3.0
}

fn lambda_value(g: CongruenceScalar, u: f64, v1: f64, v2: f64, panels: usize) -> f64 {
    let inner = |v: f64| simpson_scalar(|w| g(u, w), v1, v, panels).exp();
    simpson_scalar(inner, v1, v2, panels)
}

/// `λ`, `λ′ = ∂λ/∂u` and `λ″` by nested composite Simpson quadrature and
/// five-point central differences in `u`.
pub fn lambda_factor(g: CongruenceScalar, u: f64, v1: f64, v2: f64, panels: usize) -> LambdaFactor {
    let h = LAMBDA_DIFFERENCE_STEP;
    let l = |du: f64| lambda_value(g, u + du, v1, v2, panels);
    let (m2, m1, c, p1, p2) = (l(-2.0 * h), l(-h), l(0.0), l(h), l(2.0 * h));
    LambdaFactor {
        value: c,
        first: ((m2 - p2) + 8.0 * (p1 - m1)) / (12.0 * h),
        second: (16.0 * (m1 + p1) - (m2 + p2) - 30.0 * c) / (12.0 * h * h),
    }
}

/// Right-hand side of the deviation equation at `(u, v1)` for the displacement
/// `h = λV` to the particle at `v2`.
///
/// With `f` given, the particles are taken to satisfy `∇_U U = f U`; with
/// `f = None` their acceleration is read off the congruence itself. With
/// `g = None` the connectors are affine geodesics and `λ = v2 − v1`.
#[allow(clippy::too_many_arguments)]
pub fn geodesic_deviation_rhs_general(
    m: &ConnectionManifold,
    congruence: &Congruence,
    u: f64,
    v1: f64,
    v2: f64,
    f: Option<CongruenceScalar>,
    g: Option<CongruenceScalar>,
    panels: usize,
) -> Result<Vector> {
    let lam = match g {
        Some(g) => lambda_factor(g, u, v1, v2, panels),
        None => LambdaFactor {
            value: v2 - v1,
            first: 0.0,
            second: 0.0,
        },
    };
    if lam.value == 0.0 || !lam.value.is_finite() {
        return Err(Error::DegenerateScaling);
    }
    let x = congruence.point(u, v1)?;
    let uu = congruence.u_tangent(u, v1)?;
    let vv = congruence.v_tangent(u, v1)?;
    let gam = m.gamma(x.as_slice())?;
    let dgam = m.gamma_derivatives(x.as_slice(), DEFAULT_GAMMA_STEP)?;
    let curv = curvature_from_parts(&gam, &dgam);
    let tor = torsion_from_gamma(&gam);
    let dtor = torsion_derivative_from_parts(&gam, &dgam, &uu);

    let h = &vv * lam.value;
    let nabla_u_v = congruence.vu(u, v1)? + gam.apply(&uu, &vv);
    let dh = &vv * lam.first + &nabla_u_v * lam.value;

    let mut rhs = curv.apply(&uu, &h, &uu) + dtor.apply(&uu, &h) + tor.apply(&uu, &dh);
    match f {
        Some(f) => {
            let fv = f(u, v1);
            let df_dv = (f(u, v1 - 2.0 * congruence.fd_step) - 8.0 * f(u, v1 - congruence.fd_step)
                + 8.0 * f(u, v1 + congruence.fd_step)
                - f(u, v1 + 2.0 * congruence.fd_step))
                / (12.0 * congruence.fd_step);
            let nabla_v_u = congruence.uv(u, v1)? + gam.apply(&vv, &uu);
            rhs += tor.apply(&uu, &h) * fv;
            rhs += (&uu * df_dv + nabla_v_u * fv) * lam.value;
        }
        None => {
            let accel = |v: f64| -> Result<Vector> {
                let y = congruence.point(u, v)?;
                let t = congruence.u_tangent(u, v)?;
                Ok(congruence.uu(u, v)? + m.gamma(y.as_slice())?.apply(&t, &t))
            };
            let a = accel(v1)?;
            let nabla_v_a = central4(accel, v1, congruence.fd_step)? + gam.apply(&vv, &a);
            rhs += tor.apply(&a, &h);
            rhs += nabla_v_a * lam.value;
        }
    }
    let ratio = lam.first / lam.value;
    rhs += (&dh * 2.0 - &h * (2.0 * ratio) + tor.apply(&h, &uu)) * ratio;
    rhs += &h * (lam.second / lam.value);
    Ok(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::builtin;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn lambda_without_reparametrisation() {
        let zero = |_: f64, _: f64| 0.0;
        let l = lambda_factor(&zero, 0.3, 0.5, 1.7, 16);
        assert!((l.value - 1.2).abs() < 1e-14);
        assert_eq!((l.first, l.second), (0.0, 0.0));
        assert_eq!(lambda_factor(&zero, 0.3, 0.5, 0.5, 16).value, 0.0);
    }

    #[test]
    fn lambda_for_constant_rate_matches_closed_form() {
        for c in [-1.5, 0.7, 2.0] {
            let g = move |_: f64, _: f64| c;
            let l = lambda_factor(&g, 0.0, 0.2, 1.2, 256);
            let exact = (c * 1.0f64).exp_m1() / c;
            assert!((l.value - exact).abs() < 1e-10, "{c}: {} vs {exact}", l.value);
        }
    }

    #[test]
    fn u_dependent_rate_gives_derivatives() {
        // g = u: λ(u) = (e^{uΔ} − 1)/u with Δ = 1
        let g = |u: f64, _: f64| u;
        let l = lambda_factor(&g, 0.8, 0.0, 1.0, 256);
        let lam = |u: f64| u.exp_m1() / u;
        let d1 = (0.8f64.exp() * (0.8 - 1.0) + 1.0) / 0.64;
        assert!((l.value - lam(0.8)).abs() < 1e-10);
        assert!((l.first - d1).abs() < 1e-7, "{} vs {d1}", l.first);
    }

    #[test]
    fn affine_sphere_congruence_reduces_to_jacobi_form() {
        let m = builtin("sphere2:1").unwrap();
        // meridians φ = v parametrised by θ = u
        let c = Congruence::new(2, |a, b| Ok(v(&[a, b])), 1e-2);
        let zero = |_: f64, _: f64| 0.0;
        let with_f = geodesic_deviation_rhs_general(&m, &c, 1.0, 0.2, 0.3, Some(&zero), None, 16).unwrap();
        let generic = geodesic_deviation_rhs_general(&m, &c, 1.0, 0.2, 0.3, None, None, 16).unwrap();
        // meridians: h = 0.1 ∂φ, R(∂θ, ∂φ)∂θ = −∂φ
        assert!((&with_f - v(&[0.0, -0.1])).norm() < 1e-9, "{with_f}");
        assert!((&generic - v(&[0.0, -0.1])).norm() < 1e-8, "{generic}");
    }

    #[test]
    fn degenerate_scaling_is_rejected() {
        let m = builtin("euclidean:2").unwrap();
        let c = Congruence::new(2, |a, b| Ok(v(&[a, b])), 1e-2);
        assert_eq!(
            geodesic_deviation_rhs_general(&m, &c, 0.0, 0.4, 0.4, None, None, 8).unwrap_err(),
            Error::DegenerateScaling
        );
    }
}
