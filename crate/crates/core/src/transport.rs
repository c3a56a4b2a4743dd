//! Linear transports along paths and their matrices `H(t, s; γ)`.

use serde::ser::{Serialize, SerializeStruct, Serializer};

use crate::error::{Error, Result};
use crate::geometry::{ConnectionManifold, TangentVector};
use crate::ode::step_count;
use crate::paths::Curve;
use crate::tensor::{max_norm, Matrix};

/// Default fixed step of the transport integrator, in curve-parameter units.
pub const DEFAULT_TRANSPORT_STEP: f64 = 1e-3;

#[derive(Debug, Clone)]
pub enum TransportKind {
    /// Parallel transport of the manifold's connection.
    Parallel(ConnectionManifold),
    /// Components are carried unchanged (`H = I`).
    Euclidean,
}

#[derive(Debug, Clone)]
pub struct TransportLaw {
    pub kind: TransportKind,
    step: f64,
}

impl TransportLaw {
    pub fn new(kind: TransportKind, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Configuration(format!(
                "transport integrator step must be positive, got {step}"
            )));
        }
        Ok(TransportLaw { kind, step })
    }

    pub fn parallel(m: ConnectionManifold, step: f64) -> Self {
        Self::new(TransportKind::Parallel(m), step).expect("positive step")
    }

    pub fn euclidean(step: f64) -> Self {
        Self::new(TransportKind::Euclidean, step).expect("positive step")
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn with_step(&self, step: f64) -> Self {
        TransportLaw::new(self.kind.clone(), step).expect("positive step")
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            TransportKind::Parallel(_) => "parallel",
            TransportKind::Euclidean => "euclidean",
        }
    }
}

/// The matrix of a linear transport from `γ(s)` to `γ(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMatrix {
    pub h: Matrix,
    pub curve_id: String,
    pub s: f64,
    pub t: f64,
}

impl Serialize for TransportMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = self.h.row_iter().map(|r| r.iter().copied().collect()).collect();
        let mut st = serializer.serialize_struct("TransportMatrix", 4)?;
        st.serialize_field("curve_id", &self.curve_id)?;
        st.serialize_field("s", &self.s)?;
        st.serialize_field("t", &self.t)?;
        st.serialize_field("h", &rows)?;
        st.end()
    }
}

fn curve_dim(gamma: &Curve, s: f64) -> Result<usize> {
    Ok(gamma.point_at(s)?.len())
}

/// Solves `dH/dτ = −A(τ) H`, `A^i_j = Γ^i_kj γ̇^k`, from `H(s) = I` to `τ = t`.
fn parallel_matrix(m: &ConnectionManifold, gamma: &Curve, s: f64, t: f64, step: f64) -> Result<Matrix> {
    let n = m.dim();
    let generator = |tau: f64| -> Result<Matrix> {
        let x = gamma.point_unchecked(tau);
        let g = m.gamma(x.as_slice()).map_err(|e| match e {
            Error::Dimension { .. } => e,
            _ => Error::LeftDomain {
                curve: gamma.id().to_string(),
                at: tau,
            },
        })?;
        Ok(g.contract_first(&gamma.tangent_unchecked(tau)))
    };
    let steps = step_count(t - s, step);
    let h = (t - s) / steps as f64;
    let mut hm = Matrix::identity(n, n);
    let mut a0 = generator(s)?;
    for k in 0..steps {
        let tk = s + k as f64 * h;
        let t_next = if k + 1 == steps { t } else { s + (k + 1) as f64 * h };
        let am = generator(tk + 0.5 * h)?;
        let a1 = generator(t_next)?;
        let k1 = -(&a0 * &hm);
        let k2 = -(&am * (&hm + &k1 * (0.5 * h)));
        let k3 = -(&am * (&hm + &k2 * (0.5 * h)));
        let k4 = -(&a1 * (&hm + &k3 * h));
        hm += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        a0 = a1;
    }
    Ok(hm)
}

/// `H(t, s; γ)`: identity when `s == t`, without integrating.
pub fn transport_matrix(law: &TransportLaw, gamma: &Curve, s: f64, t: f64) -> Result<TransportMatrix> {
    gamma.check_parameter(s)?;
    gamma.check_parameter(t)?;
    let n = curve_dim(gamma, s)?;
    let h = if s == t {
        Matrix::identity(n, n)
    } else {
        match &law.kind {
            TransportKind::Euclidean => Matrix::identity(n, n),
            TransportKind::Parallel(m) => {
                m.check_vector(gamma.point_unchecked(s).as_slice())?;
                parallel_matrix(m, gamma, s, t, law.step)?
            }
        }
    };
    Ok(TransportMatrix {
        h,
        curve_id: gamma.id().to_string(),
        s,
        t,
    })
}

/// `H(target, s; γ)` for every target, integrating outward from `s` once per side.
pub fn transport_sweep(law: &TransportLaw, gamma: &Curve, s: f64, targets: &[f64]) -> Result<Vec<Matrix>> {
    gamma.check_parameter(s)?;
    for &t in targets {
        gamma.check_parameter(t)?;
    }
    let n = curve_dim(gamma, s)?;
    let mut out = vec![Matrix::identity(n, n); targets.len()];
    let m = match &law.kind {
        TransportKind::Euclidean => return Ok(out),
        TransportKind::Parallel(m) => m,
    };
    for upward in [true, false] {
        let mut idx: Vec<usize> = (0..targets.len())
            .filter(|&i| if upward { targets[i] > s } else { targets[i] < s })
            .collect();
        idx.sort_by(|&a, &b| {
            let (da, db) = ((targets[a] - s).abs(), (targets[b] - s).abs());
            da.partial_cmp(&db).unwrap()
        });
        let mut current = Matrix::identity(n, n);
        let mut at = s;
        for i in idx {
            let t = targets[i];
            if t != at {
                current = parallel_matrix(m, gamma, at, t, law.step)? * current;
                at = t;
            }
            out[i] = current.clone();
        }
    }
    Ok(out)
}

/// Carries `u` from `γ(s)` to `γ(t)`.
pub fn transport_vector(
    law: &TransportLaw,
    gamma: &Curve,
    s: f64,
    t: f64,
    u: &TangentVector,
) -> Result<TangentVector> {
    let base = gamma.point_at(s)?;
    if base.len() != u.base_point.len() || (&base - &u.base_point).amax() > 1e-9 {
        return Err(Error::BasePointMismatch {
            expected: base.as_slice().to_vec(),
            got: u.base_point.as_slice().to_vec(),
        });
    }
    let h = transport_matrix(law, gamma, s, t)?;
    Ok(TangentVector::new(gamma.point_at(t)?, &h.h * &u.components))
}

/// `max |H(r, t) H(t, s) − H(r, s)|`.
pub fn compose_check(law: &TransportLaw, gamma: &Curve, s: f64, t: f64, r: f64) -> Result<f64> {
    let hts = transport_matrix(law, gamma, s, t)?.h;
    let hrt = transport_matrix(law, gamma, t, r)?.h;
    let hrs = transport_matrix(law, gamma, s, r)?.h;
    Ok(max_norm(&(hrt * hts - hrs)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::builtin;
    use crate::paths::integrate_geodesic;
    use crate::tensor::Vector;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn wavy() -> Curve {
        Curve::from_expressions("wavy", (0.0, 1.5), &["1.0 + 0.3*sin(2*t)", "t + 0.2*cos(3*t)"]).unwrap()
    }

    #[test]
    fn identity_cases() {
        let eu = TransportLaw::euclidean(1e-3);
        let c = wavy();
        assert_eq!(transport_matrix(&eu, &c, 0.1, 1.2).unwrap().h, Matrix::identity(2, 2));
        let flat = TransportLaw::parallel(builtin("euclidean:2").unwrap(), 1e-3);
        assert_eq!(transport_matrix(&flat, &c, 0.1, 1.2).unwrap().h, Matrix::identity(2, 2));
        let sphere = TransportLaw::parallel(builtin("sphere2:1").unwrap(), 1e-3);
        assert_eq!(transport_matrix(&sphere, &c, 0.7, 0.7).unwrap().h, Matrix::identity(2, 2));
        assert_eq!(compose_check(&sphere, &c, 0.4, 0.4, 0.4).unwrap(), 0.0);
        assert_eq!(compose_check(&eu, &c, 0.0, 0.7, 1.3).unwrap(), 0.0);
    }

    #[test]
    fn zero_vector_and_base_point_checks() {
        let law = TransportLaw::parallel(builtin("sphere2:1").unwrap(), 1e-3);
        let c = wavy();
        let zero = TangentVector::new(c.point_at(0.2).unwrap(), Vector::zeros(2));
        let out = transport_vector(&law, &c, 0.2, 1.0, &zero).unwrap();
        assert_eq!(out.components, Vector::zeros(2));
        assert!((out.base_point - c.point_at(1.0).unwrap()).norm() == 0.0);
        let wrong = TangentVector::new(v(&[0.0, 0.0]), v(&[1.0, 0.0]));
        assert!(matches!(
            transport_vector(&law, &c, 0.2, 1.0, &wrong),
            Err(Error::BasePointMismatch { .. })
        ));
        assert!(matches!(
            transport_matrix(&law, &c, 0.2, 2.0),
            Err(Error::ParameterOutOfRange { .. })
        ));
    }

    #[test]
    fn equator_tangent_is_transported_into_itself() {
        let m = builtin("sphere2:1").unwrap();
        let law = TransportLaw::parallel(m.clone(), 1e-3);
        let c = integrate_geodesic(&m, &v(&[FRAC_PI_2, 0.0]), &v(&[0.0, 1.0]), (0.0, 2.0), None, 1e-3).unwrap();
        let u = TangentVector::new(c.point_at(0.3).unwrap(), c.tangent_at(0.3).unwrap());
        let w = transport_vector(&law, &c, 0.3, 1.7, &u).unwrap();
        assert!((w.components - c.tangent_at(1.7).unwrap()).norm() < 1e-12);
    }

    #[test]
    fn polar_radial_transport_matches_cartesian_pushforward() {
        let m = builtin("euclidean2_polar").unwrap();
        let law = TransportLaw::parallel(m, 1e-3);
        // a curve that also turns in angle so that H is not the identity
        let c = Curve::from_expressions("spiral", (0.0, 1.0), &["1 + t", "0.8*t"]).unwrap();
        let h = transport_matrix(&law, &c, 0.0, 1.0).unwrap().h;
        // constant Cartesian vector (1, 0): polar components (cos φ, −sin φ / r)
        let polar = |r: f64, phi: f64| v(&[phi.cos(), -phi.sin() / r]);
        let out = &h * polar(1.0, 0.0);
        assert!((out - polar(2.0, 0.8)).norm() < 1e-12);
    }

    #[test]
    fn latitude_loop_rotates_by_pi() {
        let m = builtin("sphere2:1").unwrap();
        let c = Curve::from_expressions("latitude", (0.0, 2.0 * PI), &["pi/3", "t"]).unwrap();
        let angle = |step: f64| {
            let law = TransportLaw::parallel(m.clone(), step);
            let h = transport_matrix(&law, &c, 0.0, 2.0 * PI).unwrap().h;
            let s = FRAC_PI_3.sin();
            // orthonormal frame (∂θ, ∂φ / sin θ)
            let a = [h[(0, 0)], h[(0, 1)] * s, h[(1, 0)] / s, h[(1, 1)]];
            ((a[2] - a[1]).abs() / 2.0).atan2((a[0] + a[3]) / 2.0)
        };
        assert!((angle(1e-3) - PI).abs() < 1e-9);
    }

    #[test]
    fn compose_residual_shrinks_at_fourth_order() {
        let law = TransportLaw::parallel(builtin("sphere2:1").unwrap(), 1e-3);
        let c = wavy();
        let at = |step: f64| compose_check(&law.with_step(step), &c, 0.05, 0.7333, 1.3).unwrap();
        assert!(at(1e-3) <= 1e-8);
        // leading error terms of a consistent one-step method cancel under
        // composition, so the decay is at least fourth order
        let ratio = at(0.04) / at(0.02);
        assert!(ratio >= 12.0, "{ratio}");
    }

    #[test]
    fn sweep_agrees_with_direct_transport() {
        let law = TransportLaw::parallel(builtin("hyperbolic2").unwrap(), 1e-3);
        let c = Curve::from_expressions("c", (0.0, 1.0), &["t", "1 + 0.5*t*t"]).unwrap();
        let targets = [0.0, 0.9, 0.1, 0.5, 0.5, 1.0];
        let sweep = transport_sweep(&law, &c, 0.5, &targets).unwrap();
        for (t, h) in targets.iter().zip(&sweep) {
            let direct = transport_matrix(&law, &c, 0.5, *t).unwrap().h;
            assert!(max_norm(&(h - direct)) < 1e-11);
        }
    }

    #[test]
    fn metric_norm_is_conserved_on_the_sphere() {
        let m = builtin("sphere2:1").unwrap();
        let law = TransportLaw::parallel(m.clone(), 1e-3);
        let c = wavy();
        let u = v(&[0.3, -0.7]);
        let h = transport_matrix(&law, &c, 0.0, 1.5).unwrap().h;
        let a = m.norm(c.point_at(0.0).unwrap().as_slice(), &u);
        let b = m.norm(c.point_at(1.5).unwrap().as_slice(), &(&h * &u));
        assert!((a - b).abs() < 1e-11);
    }

    #[test]
    fn leaving_the_domain_is_reported() {
        let law = TransportLaw::parallel(builtin("euclidean2_polar").unwrap(), 1e-3);
        let c = Curve::from_expressions("through-origin", (0.0, 1.0), &["1 - 2*t", "0"]).unwrap();
        assert!(matches!(transport_matrix(&law, &c, 0.0, 1.0), Err(Error::LeftDomain { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn inverse_consistency(s in 0.0f64..1.5, t in 0.0f64..1.5, name in prop::sample::select(vec!["sphere2:1", "hyperbolic2", "euclidean2_polar", "flat_torsion:0.5"])) {
            let law = TransportLaw::parallel(builtin(name).unwrap(), 1e-3);
            let c = wavy();
            let fwd = transport_matrix(&law, &c, s, t).unwrap().h;
            let back = transport_matrix(&law, &c, t, s).unwrap().h;
            prop_assert!(max_norm(&(back * fwd - Matrix::identity(2, 2))) <= 2e-8);
        }

        #[test]
        fn composition_holds(s in 0.0f64..1.5, t in 0.0f64..1.5, r in 0.0f64..1.5) {
            let law = TransportLaw::parallel(builtin("sphere2:1").unwrap(), 1e-3);
            prop_assert!(compose_check(&law, &wavy(), s, t, r).unwrap() <= 1e-8);
        }
    }
}
