//! Integration of the geodesic deviation equation with torsion along a fixed
//! base geodesic.

use crate::error::{Error, Result};
use crate::geometry::{curvature_from_parts, torsion_derivative_from_parts, torsion_from_gamma, ConnectionManifold, DEFAULT_GAMMA_STEP};
use crate::ode::{rk4_nodes, step_count};
use crate::paths::Curve;
use crate::tensor::Vector;

/// The deviation `h` and its covariant derivative `Dh/du` at parameter `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiState {
    pub u: f64,
    pub h: Vector,
    pub dh: Vector,
}

/// Integrates `D²h/du² = R(U, h)U + (∇_U T)(U, h) + T(U, Dh/du)` along `base`
/// from `interval.0` to `interval.1`, starting from `h0` and `Dh/du = dh0`.
///
/// The state `(h, w = Dh/du)` evolves by `h′ = w − Γ(U)h` and
/// `w′ = R(U, h)U + (∇_U T)(U, h) + T(U, w) − Γ(U)w`, with `Γ(U)^i_m = Γ^i_km U^k`.
pub fn integrate_geodesic_deviation(
    m: &ConnectionManifold,
    base: &Curve,
    h0: &Vector,
    dh0: &Vector,
    interval: (f64, f64),
    step: f64,
) -> Result<Vec<JacobiState>> {
    let n = m.dim();
    m.check_vector(h0.as_slice())?;
    m.check_vector(dh0.as_slice())?;
    base.check_parameter(interval.0)?;
    base.check_parameter(interval.1)?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Configuration(format!("integration step must be positive, got {step}")));
    }
    let rhs = |u: f64, y: &Vector| -> Result<Vector> {
        let x = base.point_at(u)?;
        let tangent = base.tangent_at(u)?;
        let g = m.gamma(x.as_slice())?;
        let dg = m.gamma_derivatives(x.as_slice(), DEFAULT_GAMMA_STEP)?;
        let h = y.rows(0, n).into_owned();
        let w = y.rows(n, n).into_owned();
        let a = g.contract_first(&tangent);
        let t = torsion_from_gamma(&g);
        let dt = torsion_derivative_from_parts(&g, &dg, &tangent);
        let r = curvature_from_parts(&g, &dg);
        let dh = &w - &a * &h;
        let dw = r.apply(&tangent, &h, &tangent) + dt.apply(&tangent, &h) + t.apply(&tangent, &w) - &a * &w;
        let mut out = Vector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&dh);
        out.rows_mut(n, n).copy_from(&dw);
        Ok(out)
    };
    let mut y0 = Vector::zeros(2 * n);
    y0.rows_mut(0, n).copy_from(h0);
    y0.rows_mut(n, n).copy_from(dh0);
    let steps = step_count(interval.1 - interval.0, step);
    let nodes = rk4_nodes(&rhs, interval.0, interval.1, y0, steps)?;
    Ok(nodes
        .into_iter()
        .map(|(u, y)| JacobiState {
            u,
            h: y.rows(0, n).into_owned(),
            dh: y.rows(n, n).into_owned(),
        })
        .collect())
}
