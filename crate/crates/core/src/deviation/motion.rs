//! Two-parameter particle families `γ_s(r)` and the evaluators of the second
//! derivative of the deviation vector between two forced particles.

use std::sync::Arc;

use serde::Serialize;

use crate::displacement::{even_panels, simpson_weights};
use crate::error::{Error, Result};
use crate::expr::{parse_with_variables, Expr};
use crate::geometry::{curvature_from_parts, torsion_derivative_from_parts, torsion_from_gamma, ConnectionManifold, DEFAULT_GAMMA_STEP};
use crate::oracles::fd_second_deviation;
use crate::paths::{central4, central4_second, forced_endpoint, Congruence, SurfaceFn};
use crate::tensor::Vector;
use crate::transport::{transport_matrix, TransportLaw};

use super::multipoint::{multipoint_covariant_derivative, multipoint_second_derivative, Anchor, MultiPointTensor};
use super::DeviationScenario;

/// A surface `(s, r) ↦ γ_s(r)`: for fixed `r` a particle worldline in `s`,
/// for fixed `s` a connector in `r`.
pub trait ParticleFamily: Send + Sync {
    fn dim(&self) -> usize;

    fn point(&self, s: f64, r: f64) -> Result<Vector>;

    /// `γ′ = ∂γ/∂s`.
    fn s_tangent(&self, s: f64, r: f64) -> Result<Vector>;

    /// `γ̇ = ∂γ/∂r`.
    fn r_tangent(&self, s: f64, r: f64) -> Result<Vector>;

    /// `F_s(r) = ∇_{γ′}γ′`, the force acting on the particle labelled `r`.
    fn force(&self, m: &ConnectionManifold, s: f64, r: f64) -> Result<Vector>;
}

type Partial = Arc<dyn Fn(f64, f64) -> Result<Vector> + Send + Sync>;

/// A family given by a closed-form surface. Partial derivatives are exact
/// when supplied and fourth-order central differences otherwise.
#[derive(Clone)]
pub struct AnalyticFamily {
    dim: usize,
    y: SurfaceFn,
    ds: Option<Partial>,
    dr: Option<Partial>,
    dss: Option<Partial>,
    fd_step: f64,
}

impl AnalyticFamily {
    pub fn new(dim: usize, y: impl Fn(f64, f64) -> Result<Vector> + Send + Sync + 'static, fd_step: f64) -> Self {
        AnalyticFamily {
            dim,
            y: Arc::new(y),
            ds: None,
            dr: None,
            dss: None,
            fd_step,
        }
    }

    /// Components as expressions in `s` and `r`, differentiated symbolically.
    pub fn from_expressions(components: &[&str]) -> Result<Self> {
        let exprs: Vec<Expr> = components
            .iter()
            .map(|c| parse_with_variables(c, &["s", "r"]))
            .collect::<std::result::Result<_, _>>()?;
        let d_s: Vec<Expr> = exprs.iter().map(|e| e.derivative(0)).collect();
        let d_r: Vec<Expr> = exprs.iter().map(|e| e.derivative(1)).collect();
        let d_ss: Vec<Expr> = d_s.iter().map(|e| e.derivative(0)).collect();
        let eval = |es: Vec<Expr>| -> Partial {
            Arc::new(move |s, r| Ok(Vector::from_iterator(es.len(), es.iter().map(|e| e.eval(&[s, r])))))
        };
        let y = eval(exprs);
        Ok(AnalyticFamily {
            dim: components.len(),
            y: y.clone(),
            ds: Some(eval(d_s)),
            dr: Some(eval(d_r)),
            dss: Some(eval(d_ss)),
            fd_step: crate::paths::DEFAULT_CURVE_FD_STEP,
        })
    }
}

impl ParticleFamily for AnalyticFamily {
    fn dim(&self) -> usize {
        self.dim
    }

    fn point(&self, s: f64, r: f64) -> Result<Vector> {
        (self.y)(s, r)
    }

    fn s_tangent(&self, s: f64, r: f64) -> Result<Vector> {
        match &self.ds {
            Some(f) => f(s, r),
            None => central4(|t| (self.y)(t, r), s, self.fd_step),
        }
    }

    fn r_tangent(&self, s: f64, r: f64) -> Result<Vector> {
        match &self.dr {
            Some(f) => f(s, r),
            None => central4(|t| (self.y)(s, t), r, self.fd_step),
        }
    }

    fn force(&self, m: &ConnectionManifold, s: f64, r: f64) -> Result<Vector> {
        let acc = match &self.dss {
            Some(f) => f(s, r)?,
            None => central4_second(|t| (self.y)(t, r), s, self.fd_step)?,
        };
        let x = self.point(s, r)?;
        let v = self.s_tangent(s, r)?;
        Ok(acc + m.gamma(x.as_slice())?.apply(&v, &v))
    }
}

pub type ForceLaw = Arc<dyn Fn(f64, f64, &Vector, &Vector) -> Vector + Send + Sync>;
pub type InitialData = Arc<dyn Fn(f64) -> (Vector, Vector) + Send + Sync>;

/// Particles integrated from `initial(r) = (χ(r), φ(r))` at `s0` under the
/// force law `force(s, r, x, ẋ)`, each with the same number of steps so the
/// surface is smooth in both parameters.
#[derive(Clone)]
pub struct ForcedFamily {
    manifold: ConnectionManifold,
    initial: InitialData,
    force: ForceLaw,
    s0: f64,
    steps: usize,
    fd_step: f64,
}

impl ForcedFamily {
    pub fn new(manifold: ConnectionManifold, initial: InitialData, force: ForceLaw, s0: f64, steps: usize, fd_step: f64) -> Self {
        ForcedFamily {
            manifold,
            initial,
            force,
            s0,
            steps: steps.max(1),
            fd_step,
        }
    }

    fn state(&self, s: f64, r: f64) -> Result<(Vector, Vector)> {
        let (x0, v0) = (self.initial)(r);
        let law = |t: f64, x: &Vector, v: &Vector| (self.force)(t, r, x, v);
        forced_endpoint(&self.manifold, &x0, &v0, self.s0, s, self.steps, &law)
    }
}

impl ParticleFamily for ForcedFamily {
    fn dim(&self) -> usize {
        self.manifold.dim()
    }

    fn point(&self, s: f64, r: f64) -> Result<Vector> {
        self.state(s, r).map(|(x, _)| x)
    }

    fn s_tangent(&self, s: f64, r: f64) -> Result<Vector> {
        self.state(s, r).map(|(_, v)| v)
    }

    fn r_tangent(&self, s: f64, r: f64) -> Result<Vector> {
        central4(|t| self.point(s, t), r, self.fd_step)
    }

    fn force(&self, _m: &ConnectionManifold, s: f64, r: f64) -> Result<Vector> {
        let (x, v) = self.state(s, r)?;
        Ok((self.force)(s, r, &x, &v))
    }
}

/// A congruence read as a particle family with `s = u` and `r = v`.
#[derive(Clone)]
pub struct CongruenceFamily {
    manifold: ConnectionManifold,
    congruence: Congruence,
}

impl CongruenceFamily {
    pub fn new(manifold: ConnectionManifold, congruence: Congruence) -> Self {
        CongruenceFamily { manifold, congruence }
    }
}

impl ParticleFamily for CongruenceFamily {
    fn dim(&self) -> usize {
        self.congruence.dim()
    }

    fn point(&self, s: f64, r: f64) -> Result<Vector> {
        self.congruence.point(s, r)
    }

    fn s_tangent(&self, s: f64, r: f64) -> Result<Vector> {
        self.congruence.u_tangent(s, r)
    }

    fn r_tangent(&self, s: f64, r: f64) -> Result<Vector> {
        self.congruence.v_tangent(s, r)
    }

    fn force(&self, _m: &ConnectionManifold, s: f64, r: f64) -> Result<Vector> {
        let x = self.congruence.point(s, r)?;
        let u = self.congruence.u_tangent(s, r)?;
        Ok(self.congruence.uu(s, r)? + self.manifold.gamma(x.as_slice())?.apply(&u, &u))
    }
}

/// The three groups of terms of the second derivative of the deviation vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MotionTerms {
    /// `(D²H/ds²) H⁻¹ h`.
    pub observer: Vec<f64>,
    /// `2 (DH/ds) ∫ D/ds(Λ γ̇) du`.
    pub mixed: Vec<f64>,
    /// `H ∫ D²/ds²(Λ γ̇) du` with the curvature, torsion and force terms.
    pub dynamical: Vec<f64>,
    pub total: Vec<f64>,
}

struct Setup<'a> {
    scn: &'a DeviationScenario,
    law: &'a TransportLaw,
    family: &'a Arc<dyn ParticleFamily>,
    r1: f64,
    r2: f64,
    t1: f64,
    t2: f64,
}

impl<'a> Setup<'a> {
    fn new(scn: &'a DeviationScenario, law: &'a TransportLaw, s: f64, h: f64, what: &str) -> Result<Self> {
        let family = scn.require_family(what)?;
        let at = |sig: f64| ((scn.r_start)(sig), (scn.r_end)(sig), (scn.t_start)(sig), (scn.t_end)(sig));
        let centre = at(s);
        for sig in [s - 2.0 * h, s - h, s + h, s + 2.0 * h] {
            if at(sig) != centre {
                return Err(Error::Configuration(format!(
                    "{what} needs connector parameters independent of s"
                )));
            }
        }
        if !(h > 0.0) {
            return Err(Error::Configuration(format!("finite-difference step must be positive, got {h}")));
        }
        let (r1, r2, t1, t2) = centre;
        Ok(Setup {
            scn,
            law,
            family,
            r1,
            r2,
            t1,
            t2,
        })
    }

    /// `H(σ) = H(t″, t′; η_σ)` as a two-point tensor.
    fn observer_transport(&self, sigma: f64) -> Result<MultiPointTensor> {
        let eta = (self.scn.eta)(sigma)?;
        Ok(MultiPointTensor::two_point(
            Anchor::new("x", eta.point_at(self.t2)?),
            Anchor::new("x1", eta.point_at(self.t1)?),
            &transport_matrix(self.law, &eta, self.t1, self.t2)?.h,
        ))
    }

    /// `Λ(σ; u) = H(r′, u; γ_σ)` as a two-point tensor.
    fn connector_transport(&self, sigma: f64, u: f64) -> Result<MultiPointTensor> {
        let gamma = (self.scn.gamma)(sigma)?;
        Ok(MultiPointTensor::two_point(
            Anchor::new("x1", gamma.point_at(self.r1)?),
            Anchor::new("gamma(u)", gamma.point_at(u)?),
            &transport_matrix(self.law, &gamma, u, self.r1)?.h,
        ))
    }

    fn connector_tangent(&self, sigma: f64, u: f64) -> Result<MultiPointTensor> {
        Ok(MultiPointTensor::vector(
            Anchor::new("gamma(u)", self.family.point(sigma, u)?),
            &self.family.r_tangent(sigma, u)?,
        ))
    }

    fn force(&self, s: f64, u: f64) -> Result<MultiPointTensor> {
        Ok(MultiPointTensor::vector(
            Anchor::new("gamma(u)", self.family.point(s, u)?),
            &self.family.force(&self.scn.manifold, s, u)?,
        ))
    }

    fn nodes(&self, panels: usize) -> Vec<(f64, f64)> {
        let p = even_panels(panels.max(2));
        let step = (self.r2 - self.r1) / p as f64;
        simpson_weights(p)
            .into_iter()
            .enumerate()
            .map(|(k, w)| (if k == p { self.r2 } else { self.r1 + k as f64 * step }, w * step / 3.0))
            .collect()
    }

    fn zero_at_x1(&self, s: f64) -> Result<MultiPointTensor> {
        let p = self.family.point(s, self.r1)?;
        Ok(MultiPointTensor::vector(Anchor::new("x1", p), &Vector::zeros(self.family.dim())))
    }
}

fn components(t: &MultiPointTensor) -> Vec<f64> {
    t.components().to_vec()
}

/// Second covariant derivative of the deviation vector along the observer,
/// assembled from transports, their covariant derivatives across the family,
/// and curvature, torsion and force terms integrated along the connector.
///
/// Derivatives across the family use central differences of step `h_fd`;
/// the connector integral uses composite Simpson with `panels` panels.
pub fn equation_of_motion_rhs(
    law: &TransportLaw,
    scn: &DeviationScenario,
    s: f64,
    h_fd: f64,
    panels: usize,
) -> Result<MotionTerms> {
    let st = Setup::new(scn, law, s, h_fd, "equation_of_motion_rhs")?;
    let m = &scn.manifold;
    let eta = (scn.eta)(s)?;
    let h_obs = st.observer_transport(s)?;
    let dh_obs = multipoint_covariant_derivative(m, |sig| st.observer_transport(sig), s, h_fd)?;
    let d2h_obs = multipoint_second_derivative(m, |sig| st.observer_transport(sig), s, h_fd)?;
    let h_inv = MultiPointTensor::two_point(
        Anchor::new("x1", eta.point_at(st.t1)?),
        Anchor::new("x", eta.point_at(st.t2)?),
        &transport_matrix(law, &eta, st.t2, st.t1)?.h,
    );
    let dev = scn.deviation_vector(law, s, panels)?;
    let h_vec = MultiPointTensor::vector(Anchor::new("x", dev.base_point), &dev.components);
    let observer = d2h_obs.dot(&h_inv)?.dot(&h_vec)?;

    let mut first = st.zero_at_x1(s)?;
    let mut second = st.zero_at_x1(s)?;
    if st.r1 != st.r2 {
        for (u, w) in st.nodes(panels) {
            let lambda = st.connector_transport(s, u)?;
            let d_lambda = multipoint_covariant_derivative(m, |sig| st.connector_transport(sig, u), s, h_fd)?;
            let d2_lambda = multipoint_second_derivative(m, |sig| st.connector_transport(sig, u), s, h_fd)?;
            let gdot = st.connector_tangent(s, u)?;
            let d_gdot = multipoint_covariant_derivative(m, |sig| st.connector_tangent(sig, u), s, h_fd)?;
            let dg = d_gdot.as_vector().expect("vector");

            let y = st.family.point(s, u)?;
            let gp = st.family.s_tangent(s, u)?;
            let gd = gdot.as_vector().expect("vector");
            let g = m.gamma(y.as_slice())?;
            let dgam = m.gamma_derivatives(y.as_slice(), DEFAULT_GAMMA_STEP)?;
            let curv = curvature_from_parts(&g, &dgam);
            let tor = torsion_from_gamma(&g);
            let dtor = torsion_derivative_from_parts(&g, &dgam, &gp);
            let f = st.family.force(m, s, u)?;
            let df = multipoint_covariant_derivative(m, |rho| st.force(s, rho), u, h_fd)?
                .as_vector()
                .expect("vector");
            let bracket = curv.apply(&gp, &gd, &gp) + dtor.apply(&gp, &gd) + tor.apply(&gp, &dg) + df + tor.apply(&f, &gd);
            let bracket = MultiPointTensor::vector(gdot.anchors()[0].clone(), &bracket);

            let i1 = d_lambda.dot(&gdot)?.scaled_add(1.0, &lambda.dot(&d_gdot)?)?;
            let i2 = d2_lambda
                .dot(&gdot)?
                .scaled_add(2.0, &d_lambda.dot(&d_gdot)?)?
                .scaled_add(1.0, &lambda.dot(&bracket)?)?;
            first = first.scaled_add(w, &i1)?;
            second = second.scaled_add(w, &i2)?;
        }
    }
    let mixed = dh_obs.dot(&first)?.scale(2.0);
    let dynamical = h_obs.dot(&second)?;
    let total = observer.scaled_add(1.0, &mixed)?.scaled_add(1.0, &dynamical)?;
    Ok(MotionTerms {
        observer: components(&observer),
        mixed: components(&mixed),
        dynamical: components(&dynamical),
        total: components(&total),
    })
}

/// The force contribution `H ∫ Λ (DF/du + T(F, γ̇)) du` after integrating the
/// derivative of the force by parts:
///
/// `H (Λ(r″) F(r″) − F(r′)) + H ∫ (Λ T(F, γ̇) − (DΛ/du) F) du`.
///
/// Under a flat Cartesian chart this is `F(r″) − F(r′)`.
pub fn force_difference_term(
    law: &TransportLaw,
    scn: &DeviationScenario,
    s: f64,
    h_fd: f64,
    panels: usize,
) -> Result<Vec<f64>> {
    let st = Setup::new(scn, law, s, h_fd, "force_difference_term")?;
    let m = &scn.manifold;
    let h_obs = st.observer_transport(s)?;
    let mut acc = st
        .connector_transport(s, st.r2)?
        .dot(&st.force(s, st.r2)?)?
        .scaled_add(-1.0, &st.force(s, st.r1)?)?;
    if st.r1 != st.r2 {
        for (u, w) in st.nodes(panels) {
            let lambda = st.connector_transport(s, u)?;
            let d_lambda = multipoint_covariant_derivative(m, |rho| st.connector_transport(s, rho), u, h_fd)?;
            let f = st.force(s, u)?;
            let gd = st.family.r_tangent(s, u)?;
            let y = st.family.point(s, u)?;
            let tor = torsion_from_gamma(&m.gamma(y.as_slice())?);
            let tf = MultiPointTensor::vector(f.anchors()[0].clone(), &tor.apply(&f.as_vector().expect("vector"), &gd));
            let integrand = lambda.dot(&tf)?.scaled_add(-1.0, &d_lambda.dot(&f)?)?;
            acc = acc.scaled_add(w, &integrand)?;
        }
    }
    Ok(components(&h_obs.dot(&acc)?))
}

/// Right-hand side of the deviation equation for nearby particles, evaluated at
/// `x1(s) = γ_s(r′)` with `ζ = (r″ − r′) γ̇_s(r′)`:
///
/// `R(γ′, ζ)γ′ + (r″ − r′) DF/dr + T(F, ζ) + (∇_{γ′}T)(γ′, ζ) + T(γ′, Dζ/ds)`.
pub fn infinitesimal_deviation_rhs(scn: &DeviationScenario, s: f64, h_fd: f64) -> Result<Vector> {
    let family = scn.require_family("infinitesimal_deviation_rhs")?;
    let m = &scn.manifold;
    let r1 = (scn.r_start)(s);
    let dr = (scn.r_end)(s) - r1;
    let y = family.point(s, r1)?;
    let gp = family.s_tangent(s, r1)?;
    let zeta = family.r_tangent(s, r1)? * dr;
    let f = family.force(m, s, r1)?;
    let g = m.gamma(y.as_slice())?;
    let dgam = m.gamma_derivatives(y.as_slice(), DEFAULT_GAMMA_STEP)?;
    let curv = curvature_from_parts(&g, &dgam);
    let tor = torsion_from_gamma(&g);
    let dtor = torsion_derivative_from_parts(&g, &dgam, &gp);
    let along_r = |rho: f64| -> Result<MultiPointTensor> {
        Ok(MultiPointTensor::vector(Anchor::new("gamma(r)", family.point(s, rho)?), &family.force(m, s, rho)?))
    };
    let df_dr = multipoint_covariant_derivative(m, along_r, r1, h_fd)?.as_vector().expect("vector");
    let along_s = |sig: f64| -> Result<MultiPointTensor> {
        Ok(MultiPointTensor::vector(Anchor::new("x1", family.point(sig, r1)?), &family.r_tangent(sig, r1)?))
    };
    let dzeta = multipoint_covariant_derivative(m, along_s, s, h_fd)?.as_vector().expect("vector") * dr;
    Ok(curv.apply(&gp, &zeta, &gp) + df_dr * dr + tor.apply(&f, &zeta) + dtor.apply(&gp, &zeta) + tor.apply(&gp, &dzeta))
}

/// `‖D²h/ds² − RHS‖` with the left side from finite differences of the deviation
/// vector with step `h_s`. Expected to be `O(t″ − t′) + O((r″ − r′)²)`.
pub fn infinitesimal_deviation_equation_residual(
    law: &TransportLaw,
    scn: &DeviationScenario,
    s: f64,
    h_s: f64,
    panels: usize,
) -> Result<f64> {
    let lhs = fd_second_deviation(scn, law, s, h_s, panels)?;
    let rhs = infinitesimal_deviation_rhs(scn, s, h_s)?;
    Ok((lhs - rhs).norm())
}
