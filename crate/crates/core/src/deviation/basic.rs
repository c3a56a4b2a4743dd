//! The second covariant derivative of a vector field along another, split into
//! curvature, acceleration, torsion and bracket terms.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{
    check_stencil, covariant_derivative, covariant_derivative_field, curvature_tensor, lie_bracket_field,
    ConnectionManifold, VectorField,
};
use crate::tensor::Vector;

/// Both sides of `∇²_U ξ = R(U, ξ)U + ∇_ξ(∇_U U) + ∇_U(T(U, ξ)) + ∇_U[U, ξ] + ∇_{[U, ξ]}U`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasicEquationTerms {
    pub lhs: Vec<f64>,
    pub curvature: Vec<f64>,
    pub acceleration: Vec<f64>,
    pub torsion: Vec<f64>,
    pub bracket: Vec<f64>,
    pub bracket_direction: Vec<f64>,
}

impl BasicEquationTerms {
    pub fn rhs(&self) -> Vector {
        [&self.curvature, &self.acceleration, &self.torsion, &self.bracket, &self.bracket_direction]
            .into_iter()
            .map(|t| Vector::from_column_slice(t))
            .fold(Vector::zeros(self.lhs.len()), |acc, t| acc + t)
    }

    pub fn residual(&self) -> f64 {
        (Vector::from_column_slice(&self.lhs) - self.rhs()).norm()
    }
}

/// Evaluates every term with nested central differences of step `h`.
pub fn basic_equation_terms(
    m: &ConnectionManifold,
    u: &VectorField,
    xi: &VectorField,
    x: &[f64],
    h: f64,
) -> Result<BasicEquationTerms> {
    if !(h > 0.0) {
        return Err(Error::Configuration(format!("finite-difference step must be positive, got {h}")));
    }
    m.check_point(x)?;
    check_stencil(m, x, 2.0 * h)?;
    let n = m.dim();
    let nan = move || Vector::from_element(n, f64::NAN);

    let uv = u.eval(x);
    let xv = xi.eval(x);
    let nabla_u_xi = covariant_derivative_field(m, u, xi, h);
    let lhs = covariant_derivative(m, u, &nabla_u_xi, x, h)?;

    let curvature = curvature_tensor(m, x, h)?.apply(&uv, &xv, &uv);

    let accel = covariant_derivative_field(m, u, u, h);
    let acceleration = covariant_derivative(m, xi, &accel, x, h)?;

    let (mt, ut, xt) = (m.clone(), u.clone(), xi.clone());
    let t_u_xi = VectorField::new(move |y| match mt.gamma(y) {
        Ok(g) => {
            let (a, b) = (ut.eval(y), xt.eval(y));
            g.apply(&a, &b) - g.apply(&b, &a)
        }
        Err(_) => nan(),
    });
    let torsion = covariant_derivative(m, u, &t_u_xi, x, h)?;

    let br = lie_bracket_field(u, xi, h);
    let bracket = covariant_derivative(m, u, &br, x, h)?;
    let bracket_direction = covariant_derivative(m, &br, u, x, h)?;

    let terms = BasicEquationTerms {
        lhs: lhs.as_slice().to_vec(),
        curvature: curvature.as_slice().to_vec(),
        acceleration: acceleration.as_slice().to_vec(),
        torsion: torsion.as_slice().to_vec(),
        bracket: bracket.as_slice().to_vec(),
        bracket_direction: bracket_direction.as_slice().to_vec(),
    };
    if !terms.residual().is_finite() {
        return Err(Error::Stencil {
            manifold: m.name().to_string(),
            point: x.to_vec(),
        });
    }
    Ok(terms)
}

/// `‖LHS − RHS‖`, which vanishes identically; numerically `O(h²)`.
pub fn basic_equation_residual(
    m: &ConnectionManifold,
    u: &VectorField,
    xi: &VectorField,
    x: &[f64],
    h: f64,
) -> Result<f64> {
    basic_equation_terms(m, u, xi, x, h).map(|t| t.residual())
}
