//! Brute-force references: convergence-order fits, holonomy loops, separation
//! of neighbouring geodesics, and finite differences of the deviation vector.

use serde::Serialize;

use crate::deviation::DeviationScenario;
use crate::error::{Error, Result};
use crate::geometry::ConnectionManifold;
use crate::paths::{integrate_geodesic, Curve};
use crate::tensor::{Matrix, Vector};
use crate::transport::{transport_matrix, TransportLaw};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementReport {
    pub parameter_values: Vec<f64>,
    pub errors: Vec<f64>,
    pub fitted_order: f64,
}

/// Least-squares slope of `log(error)` against `log(parameter)`.
pub fn fit_order(parameter_values: Vec<f64>, errors: Vec<f64>) -> Result<RefinementReport> {
    if parameter_values.len() != errors.len() {
        return Err(Error::Fit(format!(
            "{} parameters but {} errors",
            parameter_values.len(),
            errors.len()
        )));
    }
    if parameter_values.len() < 3 {
        return Err(Error::Fit("need at least three refinement levels".into()));
    }
    if parameter_values.windows(2).any(|w| !(w[1] < w[0])) || parameter_values.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::Fit("parameters must be positive and strictly decreasing".into()));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::Fit(format!("non-positive or non-finite error {e}")));
    }
    let xs: Vec<f64> = parameter_values.iter().map(|p| p.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(RefinementReport {
        parameter_values,
        errors,
        fitted_order: sxy / sxx,
    })
}

/// Evaluates `error(step)` for every step and fits the convergence order.
pub fn measure_order<F>(mut error: F, steps: &[f64]) -> Result<RefinementReport>
where
    F: FnMut(f64) -> Result<f64>,
{
    let errors = steps.iter().map(|&h| error(h)).collect::<Result<Vec<_>>>()?;
    fit_order(steps.to_vec(), errors)
}

/// Parallel transport around the closed polygon through `corners`.
pub fn loop_transport(m: &ConnectionManifold, corners: &[Vector], step: f64) -> Result<Matrix> {
    let law = TransportLaw::parallel(m.clone(), step);
    let n = m.dim();
    let mut h = Matrix::identity(n, n);
    for (k, a) in corners.iter().enumerate() {
        let b = &corners[(k + 1) % corners.len()];
        let seg = Curve::segment(format!("edge{k}"), a.clone(), b.clone());
        h = transport_matrix(&law, &seg, 0.0, 1.0)?.h * h;
    }
    Ok(h)
}

/// `(I − H_loop)/ε²` for the coordinate square of side `ε` centred at `x` in the
/// `(k, l)` plane, traversed along `e_k` first. Tends to `R^i_jkl`.
pub fn holonomy_curvature(
    m: &ConnectionManifold,
    x: &[f64],
    plane: (usize, usize),
    eps: f64,
    step: f64,
) -> Result<Matrix> {
    let n = m.dim();
    let (k, l) = plane;
    if k >= n || l >= n || k == l {
        return Err(Error::Configuration(format!("invalid coordinate plane ({k}, {l}) in dimension {n}")));
    }
    let centre = Vector::from_column_slice(x);
    let corner = |a: f64, b: f64| {
        let mut p = centre.clone();
        p[k] += a * eps;
        p[l] += b * eps;
        p
    };
    let corners = [corner(-0.5, -0.5), corner(0.5, -0.5), corner(0.5, 0.5), corner(-0.5, 0.5)];
    for c in &corners {
        m.check_point(c.as_slice())?;
    }
    // carry the loop holonomy from its first corner back to the centre
    let law = TransportLaw::parallel(m.clone(), step);
    let spoke = Curve::segment("spoke", centre.clone(), corners[0].clone());
    let out = transport_matrix(&law, &spoke, 0.0, 1.0)?.h;
    let back = transport_matrix(&law, &spoke, 1.0, 0.0)?.h;
    let h = back * loop_transport(m, &corners, step)? * out;
    Ok((Matrix::identity(n, n) - h) / (eps * eps))
}

/// Rotation angle in `[0, π]` of parallel transport once around a closed curve
/// in a two-dimensional chart with a metric, measured in an orthonormal frame
/// at the start point.
pub fn loop_rotation_angle(m: &ConnectionManifold, curve: &Curve, step: f64) -> Result<f64> {
    if m.dim() != 2 {
        return Err(Error::Dimension { expected: 2, got: m.dim() });
    }
    let (a, b) = curve.interval();
    let start = curve.point_at(a)?;
    let g = m
        .metric_at(start.as_slice())
        .ok_or_else(|| Error::Configuration(format!("`{}` has no metric to measure angles", m.name())))?;
    let chol = g
        .cholesky()
        .ok_or_else(|| Error::Configuration("metric is not positive definite".into()))?;
    let lt = chol.l().transpose();
    let lt_inv = lt
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Configuration("metric is singular".into()))?;
    let h = transport_matrix(&TransportLaw::parallel(m.clone(), step), curve, a, b)?.h;
    let r = &lt * h * lt_inv;
    let sin = 0.5 * (r[(1, 0)] - r[(0, 1)]);
    let cos = 0.5 * (r[(0, 0)] + r[(1, 1)]);
    Ok(sin.abs().atan2(cos))
}

/// Richardson extrapolation of [`loop_rotation_angle`] over `step` and `step/2`
/// for a fourth-order transport; returns the value and the size of the correction.
pub fn refined_loop_rotation_angle(m: &ConnectionManifold, curve: &Curve, step: f64) -> Result<(f64, f64)> {
    let coarse = loop_rotation_angle(m, curve, step)?;
    let fine = loop_rotation_angle(m, curve, step / 2.0)?;
    let refined = fine + (fine - coarse) / 15.0;
    Ok((refined, (refined - fine).abs()))
}

/// Finite-difference Jacobi field at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationEstimate {
    pub u: f64,
    pub value: Vector,
    /// Largest of the extrapolation change, the step-halving change and a
    /// round-off floor.
    pub bound: f64,
}

/// `∂/∂δ` of the geodesic started at `(x0 + δ·offset_v0, U0 + δ·offset_dv0)`,
/// evaluated at parameter `u`; `(x0, U0)` is the initial data of `base`.
pub fn two_geodesic_separation(
    m: &ConnectionManifold,
    base: &Curve,
    offset_v0: &Vector,
    offset_dv0: &Vector,
    u: f64,
    delta: f64,
    step: f64,
) -> Result<SeparationEstimate> {
    two_geodesic_separation_grid(m, base, offset_v0, offset_dv0, &[u], delta, step).map(|mut v| v.remove(0))
}

/// As [`two_geodesic_separation`] at several parameters, sharing the integrations.
///
/// Central differences in `δ` at `δ, δ/2, δ/4, δ/8` are Richardson-combined
/// pairwise; the whole estimate is repeated with half the integration step.
pub fn two_geodesic_separation_grid(
    m: &ConnectionManifold,
    base: &Curve,
    offset_v0: &Vector,
    offset_dv0: &Vector,
    us: &[f64],
    delta: f64,
    step: f64,
) -> Result<Vec<SeparationEstimate>> {
    if !(delta > 0.0) {
        return Err(Error::Configuration(format!("perturbation size must be positive, got {delta}")));
    }
    let (a, b) = base.interval();
    let x0 = base.point_at(a)?;
    let u0 = base.tangent_at(a)?;
    let estimate = |step: f64| -> Result<(Vec<Vector>, Vec<Vector>)> {
        let mut diffs: Vec<Vec<Vector>> = Vec::new();
        for level in 0..4 {
            let d = delta / f64::powi(2.0, level);
            let plus = integrate_geodesic(m, &(&x0 + offset_v0 * d), &(&u0 + offset_dv0 * d), (a, b), None, step)?;
            let minus = integrate_geodesic(m, &(&x0 - offset_v0 * d), &(&u0 - offset_dv0 * d), (a, b), None, step)?;
            diffs.push(
                us.iter()
                    .map(|&u| Ok((plus.point_at(u)? - minus.point_at(u)?) / (2.0 * d)))
                    .collect::<Result<_>>()?,
            );
        }
        let rich = |i: usize| -> Vec<Vector> {
            diffs[i + 1].iter().zip(&diffs[i]).map(|(f, c)| (f * 4.0 - c) / 3.0).collect()
        };
        Ok((rich(1), rich(2)))
    };
    let (r1, r2) = estimate(step)?;
    let (_, half) = estimate(step / 2.0)?;
    let floor = 1e3 * f64::EPSILON / (delta / 8.0);
    Ok(us
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let scale = 1.0 + x0.amax();
            let bound = (&r2[i] - &r1[i])
                .amax()
                .max((&half[i] - &r2[i]).amax())
                .max(floor * scale);
            SeparationEstimate {
                u,
                value: r2[i].clone(),
                bound,
            }
        })
        .collect())
}

/// Difference stencil for [`fd_second_deviation_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    ThreePoint,
    FivePoint,
}

/// `D²h/ds²` of the deviation vector along the observer's worldline: each
/// `h(s + kh_s)` is parallel-transported back to `x(s)` and the results are
/// differenced with the five-point stencil.
pub fn fd_second_deviation(
    scn: &DeviationScenario,
    law: &TransportLaw,
    s: f64,
    h_s: f64,
    panels: usize,
) -> Result<Vector> {
    fd_second_deviation_with(scn, law, s, h_s, panels, Stencil::FivePoint)
}

pub fn fd_second_deviation_with(
    scn: &DeviationScenario,
    law: &TransportLaw,
    s: f64,
    h_s: f64,
    panels: usize,
    stencil: Stencil,
) -> Result<Vector> {
    if !(h_s > 0.0) {
        return Err(Error::Configuration(format!("finite-difference step must be positive, got {h_s}")));
    }
    let parallel = TransportLaw::parallel(scn.manifold.clone(), law.step());
    let pulled = |k: f64| -> Result<Vector> {
        let sigma = s + k * h_s;
        let h = scn.deviation_vector(law, sigma, panels)?;
        Ok(transport_matrix(&parallel, &scn.x, sigma, s)?.h * h.components)
    };
    match stencil {
        Stencil::ThreePoint => Ok((pulled(-1.0)? - pulled(0.0)? * 2.0 + pulled(1.0)?) / (h_s * h_s)),
        Stencil::FivePoint => {
            let (m2, m1, c, p1, p2) = (pulled(-2.0)?, pulled(-1.0)?, pulled(0.0)?, pulled(1.0)?, pulled(2.0)?);
            Ok(((m1 + p1) * 16.0 - (m2 + p2) - c * 30.0) / (12.0 * h_s * h_s))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::builtin;
    use crate::geometry::curvature_tensor;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn exact_power_laws_fit_exactly() {
        for p in [2.0, 4.0] {
            let r = measure_order(|h| Ok(3.0 * f64::powf(h, p)), &[0.1, 0.05, 0.025, 0.0125]).unwrap();
            assert!((r.fitted_order - p).abs() < 1e-6);
        }
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(matches!(fit_order(vec![0.1, 0.05, 0.02], vec![1.0, 0.0, 1.0]), Err(Error::Fit(_))));
        assert!(matches!(fit_order(vec![0.1, 0.05], vec![1.0, 0.5]), Err(Error::Fit(_))));
        assert!(matches!(fit_order(vec![0.1, 0.2, 0.05], vec![1.0, 0.5, 0.2]), Err(Error::Fit(_))));
    }

    #[test]
    fn geodesic_integration_order_on_the_sphere() {
        let m = builtin("sphere2:1").unwrap();
        let report = measure_order(
            |h| {
                let c = integrate_geodesic(&m, &v(&[FRAC_PI_2, 0.0]), &v(&[0.6, 0.8]), (0.0, 2.0), None, h)?;
                let (s, co) = 2.0f64.sin_cos();
                let exact = v(&[(-0.6 * s).acos(), (0.8 * s).atan2(co)]);
                Ok((c.point_at(2.0)? - exact).norm())
            },
            &[0.08, 0.04, 0.02],
        )
        .unwrap();
        assert!((3.5..4.5).contains(&report.fitted_order), "{report:?}");
    }

    #[test]
    fn holonomy_matches_curvature_on_the_sphere() {
        let m = builtin("sphere2:1").unwrap();
        let x = [1.0, 0.3];
        let hol = holonomy_curvature(&m, &x, (0, 1), 1e-2, 1e-4).unwrap();
        let r = curvature_tensor(&m, &x, 1e-5).unwrap().plane_matrix(0, 1);
        assert!((&hol - &r).amax() < 1e-3, "{hol} vs {r}");
        let eq = holonomy_curvature(&m, &[FRAC_PI_2, 0.0], (0, 1), 1e-3, 1e-4).unwrap();
        assert!((eq[(0, 1)] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn holonomy_vanishes_in_flat_charts() {
        for name in ["euclidean:3", "euclidean2_polar"] {
            let m = builtin(name).unwrap();
            let x = [1.0, 0.5, 0.2];
            let hol = holonomy_curvature(&m, &x[..m.dim()], (0, 1), 1e-2, 1e-3).unwrap();
            assert!(hol.amax() < 1e-3, "{name}: {hol}");
        }
    }

    #[test]
    fn latitude_loop_rotates_by_half_a_turn() {
        let m = builtin("sphere2:1").unwrap();
        let lat = Curve::from_expressions("latitude", (0.0, 2.0 * PI), &["pi/3", "t"]).unwrap();
        let (angle, corr) = refined_loop_rotation_angle(&m, &lat, 1e-3).unwrap();
        assert!((angle - PI).abs() < 1e-9, "{angle}");
        assert!(corr < 1e-9);
    }

    #[test]
    fn flat_separation_is_linear() {
        let m = builtin("euclidean:2").unwrap();
        let base = Curve::from_expressions("line", (0.0, 2.0), &["t", "0"]).unwrap();
        let est = two_geodesic_separation(&m, &base, &v(&[0.5, 1.0]), &v(&[0.0, -1.0]), 1.5, 1e-2, 1e-2).unwrap();
        assert!((est.value - v(&[0.5, -0.5])).norm() < 1e-12);
    }

    #[test]
    fn equator_separation_is_a_sine() {
        let m = builtin("sphere2:1").unwrap();
        let base = Curve::from_expressions("equator", (0.0, 3.0), &["pi/2", "t"]).unwrap();
        let us = [0.5, 1.5, 2.5];
        let est = two_geodesic_separation_grid(&m, &base, &v(&[0.0, 0.0]), &v(&[1.0, 0.0]), &us, 1e-2, 1e-3).unwrap();
        for e in est {
            assert!((e.value[0] - e.u.sin()).abs() < 1e-5, "{e:?}");
            assert!((e.value[0] - e.u.sin()).abs() <= 10.0 * e.bound, "{e:?}");
            assert!(e.bound < 1e-6);
        }
    }
}
