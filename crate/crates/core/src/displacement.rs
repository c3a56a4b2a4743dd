//! Displacement vectors along a path: the tangent integrated after being
//! carried back to the anchor point.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::TangentVector;
use crate::paths::Curve;
use crate::tensor::{Matrix, Vector};
use crate::transport::{transport_matrix, TransportLaw};

#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementVector {
    pub anchor_s: f64,
    pub target_t: f64,
    pub vector: TangentVector,
}

/// Simpson panel count tied to the transport step, rounded up to even.
pub fn default_panels(s: f64, t: f64, step: f64) -> usize {
    even_panels(((t - s).abs() / step).ceil() as usize)
}

pub(crate) fn even_panels(p: usize) -> usize {
    let p = p.max(2);
    p + p % 2
}

/// Composite Simpson weights for `panels` (even) equal subintervals.
pub(crate) fn simpson_weights(panels: usize) -> Vec<f64> {
    let p = even_panels(panels);
    (0..=p)
        .map(|k| {
            if k == 0 || k == p {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            }
        })
        .collect()
}

/// Composite Simpson rule for a vector-valued integrand on `[a, b]`.
pub fn simpson<F>(f: F, a: f64, b: f64, panels: usize) -> Result<Vector>
where
    F: Fn(f64) -> Result<Vector>,
{
    let p = even_panels(panels);
    let h = (b - a) / p as f64;
    let mut acc: Option<Vector> = None;
    for (k, w) in simpson_weights(p).into_iter().enumerate() {
        let x = if k == p { b } else { a + k as f64 * h };
        let v = f(x)? * w;
        acc = Some(match acc {
            Some(s) => s + v,
            None => v,
        });
    }
    Ok(acc.expect("at least three nodes") * (h / 3.0))
}

/// `d_s(t) = ∫_s^t H(s, u; γ) γ̇(u) du`, by composite Simpson with the
/// running transport `H(s, u_{k+1}) = H(s, u_k) H(u_k, u_{k+1})`.
pub fn displacement_vector(
    law: &TransportLaw,
    gamma: &Curve,
    s: f64,
    t: f64,
    panels: usize,
) -> Result<DisplacementVector> {
    let base = gamma.point_at(s)?;
    gamma.check_parameter(t)?;
    let n = base.len();
    if s == t {
        return Ok(DisplacementVector {
            anchor_s: s,
            target_t: t,
            vector: TangentVector::new(base, Vector::zeros(n)),
        });
    }
    if panels < 2 {
        return Err(Error::Configuration(format!("need at least 2 quadrature panels, got {panels}")));
    }
    let p = even_panels(panels);
    let h = (t - s) / p as f64;
    let weights = simpson_weights(p);
    let node = |k: usize| if k == p { t } else { s + k as f64 * h };
    let mut running = Matrix::identity(n, n);
    let mut acc = gamma.tangent_at(s)? * weights[0];
    for (k, w) in weights.iter().enumerate().skip(1) {
        let (u0, u1) = (node(k - 1), node(k));
        running *= transport_matrix(law, gamma, u1, u0)?.h;
        acc += &running * gamma.tangent_at(u1)? * *w;
    }
    Ok(DisplacementVector {
        anchor_s: s,
        target_t: t,
        vector: TangentVector::new(base, acc * (h / 3.0)),
    })
}

/// `‖d_r(s) − d_r(t) − H(r, t) d_t(s)‖`.
pub fn composition_residual(law: &TransportLaw, gamma: &Curve, r: f64, s: f64, t: f64, panels: usize) -> Result<f64> {
    let d_rs = displacement_vector(law, gamma, r, s, panels)?.vector.components;
    let d_rt = displacement_vector(law, gamma, r, t, panels)?.vector.components;
    let d_ts = displacement_vector(law, gamma, t, s, panels)?.vector.components;
    let h_rt = transport_matrix(law, gamma, t, r)?.h;
    Ok((d_rs - d_rt - h_rt * d_ts).norm())
}

/// First-order approximation `(t − s) γ̇(s)`.
pub fn infinitesimal_displacement(gamma: &Curve, s: f64, t: f64) -> Result<TangentVector> {
    gamma.check_parameter(t)?;
    Ok(TangentVector::new(gamma.point_at(s)?, gamma.tangent_at(s)? * (t - s)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub max_error: f64,
    pub samples: usize,
    /// Set when the functional used for inversion is not strictly monotone,
    /// i.e. the displacement map is not shown to be injective.
    pub flagged: bool,
}

/// Recovers `t` from `d_s(t)` by bisection on `φ(t) = ⟨d_s(t), d_s(b)⟩`,
/// `b` being the curve end farther from `s`.
pub fn coordinate_recovery_check(
    law: &TransportLaw,
    gamma: &Curve,
    s: f64,
    samples: usize,
    panels: usize,
) -> Result<RecoveryReport> {
    let (a, b) = gamma.interval();
    let far = if (b - s).abs() >= (s - a).abs() { b } else { a };
    let d_far = displacement_vector(law, gamma, s, far, panels)?.vector.components;
    let phi = |t: f64| -> Result<f64> {
        let span_panels = even_panels(((panels as f64) * ((t - s) / (far - s)).abs()).ceil() as usize);
        Ok(displacement_vector(law, gamma, s, t, span_panels)?.vector.components.dot(&d_far))
    };
    let samples = samples.max(2);
    let scale = d_far.norm_squared();
    let mut flagged = !(scale > 1e-24);
    // monotonicity on a grid four times finer than the samples
    let fine = 4 * samples;
    let mut prev = 0.0;
    for k in 1..=fine {
        let t = s + (far - s) * k as f64 / fine as f64;
        let v = phi(t)?;
        if v <= prev {
            flagged = true;
            break;
        }
        prev = v;
    }
    if flagged {
        return Ok(RecoveryReport {
            max_error: f64::NAN,
            samples,
            flagged,
        });
    }
    let mut max_error: f64 = 0.0;
    for k in 1..=samples {
        let t_true = s + (far - s) * k as f64 / samples as f64;
        let target = phi(t_true)?;
        let (mut lo, mut hi) = (s, far);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if phi(mid)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo).abs() < 1e-13 {
                break;
            }
        }
        max_error = max_error.max((0.5 * (lo + hi) - t_true).abs());
    }
    Ok(RecoveryReport {
        max_error,
        samples,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::builtin;
    use crate::paths::integrate_geodesic;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn equator() -> Curve {
        let m = builtin("sphere2:1").unwrap();
        integrate_geodesic(&m, &v(&[FRAC_PI_2, 0.0]), &v(&[0.0, 1.0]), (0.0, 3.0), None, 1e-3).unwrap()
    }

    #[test]
    fn zero_when_endpoints_coincide() {
        let law = TransportLaw::parallel(builtin("sphere2:1").unwrap(), 1e-3);
        let d = displacement_vector(&law, &equator(), 0.4, 0.4, 10).unwrap();
        assert_eq!(d.vector.components, Vector::zeros(2));
        assert!(infinitesimal_displacement(&equator(), 0.4, 0.4).unwrap().components.norm() == 0.0);
    }

    #[test]
    fn euclidean_law_gives_coordinate_difference() {
        let law = TransportLaw::euclidean(1e-3);
        let c = Curve::from_expressions("c", (0.0, 2.0), &["sin(t)", "t*t*t", "exp(t)"]).unwrap();
        let d = displacement_vector(&law, &c, 0.3, 1.7, 400).unwrap();
        let exact = c.point_at(1.7).unwrap() - c.point_at(0.3).unwrap();
        assert!((d.vector.components - exact).norm() < 1e-10);
    }

    #[test]
    fn equator_displacement_is_linear() {
        let law = TransportLaw::parallel(builtin("sphere2:1").unwrap(), 1e-3);
        let d = displacement_vector(&law, &equator(), 0.0, 0.5, 100).unwrap();
        assert!((d.vector.components - v(&[0.0, 0.5])).norm() < 1e-12);
        assert!((d.vector.base_point - v(&[FRAC_PI_2, 0.0])).norm() < 1e-15);
    }

    #[test]
    fn first_order_approximation_error_is_quadratic() {
        let law = TransportLaw::parallel(builtin("sphere2:1").unwrap(), 1e-3);
        let c = Curve::from_expressions("c", (0.0, 1.0), &["1 + 0.3*t*t", "sin(t)"]).unwrap();
        let err = |dt: f64| {
            let d = displacement_vector(&law, &c, 0.2, 0.2 + dt, 40).unwrap().vector.components;
            (d - infinitesimal_displacement(&c, 0.2, 0.2 + dt).unwrap().components).norm()
        };
        let ratio = err(0.2) / err(0.1);
        assert!((3.4..4.6).contains(&ratio), "{ratio}");
    }

    #[test]
    fn simpson_is_fourth_order() {
        let f = |x: f64| Ok(Vector::from_element(1, x.exp() * x.sin()));
        let exact = 0.5 * (1f64.exp() * (1f64.sin() - 1f64.cos()) + 1.0);
        let err = |p: usize| (simpson(f, 0.0, 1.0, p).unwrap()[0] - exact).abs();
        let ratio = err(8) / err(16);
        assert!((14.0..18.0).contains(&ratio), "{ratio}");
        assert_eq!(even_panels(7), 8);
        assert_eq!(even_panels(0), 2);
    }

    #[test]
    fn composition_on_the_sphere() {
        let law = TransportLaw::parallel(builtin("sphere2:1").unwrap(), 1e-3);
        let c = Curve::from_expressions("c", (0.0, 1.2), &["1 + 0.4*sin(t)", "2*t"]).unwrap();
        assert_eq!(composition_residual(&law, &c, 0.5, 0.5, 0.5, 400).unwrap(), 0.0);
        assert!(composition_residual(&law, &c, 0.0, 1.0, 0.4, 400).unwrap() <= 1e-7);
        let eu = TransportLaw::euclidean(1e-3);
        assert!(composition_residual(&eu, &c, 0.0, 1.0, 0.4, 400).unwrap() <= 1e-12);
    }

    #[test]
    fn recovery_checks() {
        let eu = TransportLaw::euclidean(1e-3);
        let line = Curve::from_expressions("line", (0.0, 1.0), &["2*t", "1 - t"]).unwrap();
        let r = coordinate_recovery_check(&eu, &line, 0.0, 5, 20).unwrap();
        assert!(!r.flagged && r.max_error < 1e-12);

        let law = TransportLaw::parallel(builtin("sphere2:1").unwrap(), 1e-3);
        let arc = integrate_geodesic(
            &builtin("sphere2:1").unwrap(),
            &v(&[FRAC_PI_2, 0.0]),
            &v(&[0.0, 1.0]),
            (0.0, 1.0),
            None,
            1e-3,
        )
        .unwrap();
        let r = coordinate_recovery_check(&law, &arc, 0.0, 5, 40).unwrap();
        assert!(!r.flagged && r.max_error <= 1e-6, "{r:?}");

        let eight = Curve::from_expressions("eight", (0.0, std::f64::consts::TAU), &["sin(t)", "sin(t)*cos(t)"]).unwrap();
        let r = coordinate_recovery_check(&eu, &eight, 0.0, 8, 200).unwrap();
        assert!(r.flagged);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn reversal_under_euclidean_law_is_exact(s in 0.0f64..2.0, t in 0.0f64..2.0) {
            let law = TransportLaw::euclidean(1e-3);
            let c = Curve::from_expressions("c", (0.0, 2.0), &["t*t", "cos(t)"]).unwrap();
            let a = displacement_vector(&law, &c, s, t, 200).unwrap().vector.components;
            let b = displacement_vector(&law, &c, t, s, 200).unwrap().vector.components;
            let exact = c.point_at(t).unwrap() - c.point_at(s).unwrap();
            prop_assert!((&a + &b).norm() <= 1e-12);
            prop_assert!((a - exact).norm() <= 1e-10);
        }

        #[test]
        fn reversal_under_parallel_law(s in 0.0f64..1.2, t in 0.0f64..1.2) {
            let law = TransportLaw::parallel(builtin("sphere2:1").unwrap(), 1e-3);
            let c = Curve::from_expressions("c", (0.0, 1.2), &["1 + 0.4*sin(t)", "2*t"]).unwrap();
            let a = displacement_vector(&law, &c, s, t, 400).unwrap().vector.components;
            let b = displacement_vector(&law, &c, t, s, 400).unwrap().vector.components;
            let h = transport_matrix(&law, &c, t, s).unwrap().h;
            prop_assert!((a + h * b).norm() <= 2e-7);
        }
    }
}
