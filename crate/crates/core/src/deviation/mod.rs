//! Deviation vectors between two particles seen from an observer, and the
//! evaluators of their second covariant derivative.

pub mod basic;
pub mod congruence;
pub mod jacobi;
pub mod motion;
pub mod multipoint;

use std::fmt;
use std::sync::Arc;

use crate::displacement::{displacement_vector, even_panels, simpson_weights};
use crate::error::{Error, Result};
use crate::geometry::{ConnectionManifold, TangentVector};
use crate::paths::{geodesic_endpoint, integrate_geodesic_steps, shoot_geodesic, Congruence, Curve};
use crate::tensor::Vector;
use crate::transport::{transport_matrix, TransportLaw};

use self::motion::{CongruenceFamily, ParticleFamily};
use self::multipoint::{Anchor, MultiPointTensor};

pub type CurveFamily = Arc<dyn Fn(f64) -> Result<Curve> + Send + Sync>;
pub type ParamFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type DirectionFn = Arc<dyn Fn(f64) -> Vector + Send + Sync>;

/// Default tolerance of the four consistency identities of a scenario.
pub const DEFAULT_CONSISTENCY_TOLERANCE: f64 = 1e-8;

/// Where the observer sits relative to the first particle.
#[derive(Clone)]
pub enum Observer {
    /// The observer is the first particle; the observer path is trivial.
    FirstParticle,
    /// The observer path `η_s` is the geodesic from `x1(s)` with initial
    /// tangent `direction(s)`, followed for `length` in `steps` equal steps.
    Geodesic {
        direction: DirectionFn,
        length: f64,
        steps: usize,
    },
}

/// Two particles `x1`, `x2`, an observer `x`, and the path families joining them:
/// `γ_s` from `x1(τ1(s))` at `r′(s)` to `x2(τ2(s))` at `r″(s)`, and `η_s` from
/// `x1(τ1(s))` at `t′(s)` to `x(s)` at `t″(s)`.
#[derive(Clone)]
pub struct DeviationScenario {
    pub manifold: ConnectionManifold,
    pub x1: Curve,
    pub x2: Curve,
    pub x: Curve,
    pub tau1: ParamFn,
    pub tau2: ParamFn,
    pub gamma: CurveFamily,
    pub eta: CurveFamily,
    pub r_start: ParamFn,
    pub r_end: ParamFn,
    pub t_start: ParamFn,
    pub t_end: ParamFn,
    /// The surface `γ_s(r)` when it is known as a two-parameter family.
    pub family: Option<Arc<dyn ParticleFamily>>,
    pub tolerance: f64,
}

impl fmt::Debug for DeviationScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DeviationScenario")
            .field("manifold", &self.manifold.name())
            .field("x1", &self.x1)
            .field("x2", &self.x2)
            .field("x", &self.x)
            .field("tolerance", &self.tolerance)
            .finish_non_exhaustive()
    }
}

fn constant(c: f64) -> ParamFn {
    Arc::new(move |_| c)
}

fn identity() -> ParamFn {
    Arc::new(|s| s)
}

fn nan_vector(n: usize) -> Vector {
    Vector::from_element(n, f64::NAN)
}

impl DeviationScenario {
    /// Scenario with identity reparametrisations and fixed connector parameters.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        manifold: ConnectionManifold,
        x1: Curve,
        x2: Curve,
        x: Curve,
        gamma: CurveFamily,
        r: (f64, f64),
        eta: CurveFamily,
        t: (f64, f64),
    ) -> Self {
        DeviationScenario {
            manifold,
            x1,
            x2,
            x,
            tau1: identity(),
            tau2: identity(),
            gamma,
            eta,
            r_start: constant(r.0),
            r_end: constant(r.1),
            t_start: constant(t.0),
            t_end: constant(t.1),
            family: None,
            tolerance: DEFAULT_CONSISTENCY_TOLERANCE,
        }
    }

    /// Connects `x1(s)` to `x2(s)` and to `x(s)` by shooting geodesics on `[0, 1]`.
    /// When the observer coincides with `x1` the observer path is constant.
    pub fn with_geodesic_connectors(manifold: ConnectionManifold, x1: Curve, x2: Curve, x: Curve, step: f64) -> Self {
        let (m1, a1, b1) = (manifold.clone(), x1.clone(), x2.clone());
        let gamma: CurveFamily = Arc::new(move |s| shoot_geodesic(&m1, &a1.point_at(s)?, &b1.point_at(s)?, step));
        let (m2, a2, c2) = (manifold.clone(), x1.clone(), x.clone());
        let eta: CurveFamily = Arc::new(move |s| {
            let from = a2.point_at(s)?;
            let to = c2.point_at(s)?;
            if (&to - &from).amax() == 0.0 {
                Ok(Curve::constant("observer", (0.0, 1.0), from))
            } else {
                shoot_geodesic(&m2, &from, &to, step).map(|c| c.with_id("observer"))
            }
        });
        DeviationScenario::new(manifold, x1, x2, x, gamma, (0.0, 1.0), eta, (0.0, 1.0))
    }

    /// Scenario built on a two-parameter family `γ_s(r)`: the particles are the
    /// `s`-curves at `r′` and `r″`, the connectors are the `r`-curves.
    ///
    /// Connector curves are defined a little beyond `[r′, r″]` so that
    /// difference stencils at the ends stay on the curve.
    pub fn from_family(
        manifold: ConnectionManifold,
        family: Arc<dyn ParticleFamily>,
        r: (f64, f64),
        s_interval: (f64, f64),
        observer: Observer,
    ) -> Result<Self> {
        let n = family.dim();
        if n != manifold.dim() {
            return Err(Error::Dimension {
                expected: manifold.dim(),
                got: n,
            });
        }
        let (r1, r2) = r;
        let pad = 0.1 * (r2 - r1).abs() + 1e-2;
        let particle = |r_fixed: f64, id: &str| {
            let (f1, f2) = (family.clone(), family.clone());
            Curve::new(
                id,
                s_interval,
                move |s| f1.point(s, r_fixed).unwrap_or_else(|_| nan_vector(n)),
                move |s| s_tangent_or_nan(&f2, s, r_fixed, n),
            )
        };
        let x1 = particle(r1, "x1");
        let x2 = particle(r2, "x2");
        let fam = family.clone();
        let gamma: CurveFamily = Arc::new(move |s| {
            let (f1, f2) = (fam.clone(), fam.clone());
            Ok(Curve::new(
                format!("connector(s={s})"),
                (r1.min(r2) - pad, r1.max(r2) + pad),
                move |r| f1.point(s, r).unwrap_or_else(|_| nan_vector(n)),
                move |r| f2.r_tangent(s, r).unwrap_or_else(|_| nan_vector(n)),
            ))
        });
        let (eta, x, t): (CurveFamily, Curve, (f64, f64)) = match observer {
            Observer::FirstParticle => {
                let x1c = x1.clone();
                let eta: CurveFamily =
                    Arc::new(move |s| Ok(Curve::constant("observer", (0.0, 0.0), x1c.point_at(s)?)));
                (eta, x1.clone().with_id("x"), (0.0, 0.0))
            }
            Observer::Geodesic {
                direction,
                length,
                steps,
            } => {
                let (m, x1c, dir) = (manifold.clone(), x1.clone(), direction.clone());
                let eta: CurveFamily = Arc::new(move |s| {
                    integrate_geodesic_steps(&m, &x1c.point_at(s)?, &dir(s), (0.0, length), steps, None)
                        .map(|c| c.with_id("observer"))
                });
                let (m, x1c) = (manifold.clone(), x1.clone());
                let x = Curve::from_points(
                    "x",
                    s_interval,
                    move |s| {
                        let start = x1c.point_at(s).unwrap_or_else(|_| nan_vector(n));
                        geodesic_endpoint(&m, &start, &direction(s), 0.0, length, steps, None)
                            .map(|(p, _)| p)
                            .unwrap_or_else(|_| nan_vector(n))
                    },
                    crate::paths::DEFAULT_CURVE_FD_STEP,
                );
                (eta, x, (0.0, length))
            }
        };
        let mut scn = DeviationScenario::new(manifold, x1, x2, x, gamma, r, eta, t);
        scn.family = Some(family);
        Ok(scn)
    }

    /// Scenario of a congruence `y(u, v)`: particles are the `u`-paths at `v1`
    /// and `v2`, connectors the `v`-paths, and the observer is the first particle.
    pub fn from_congruence(
        manifold: ConnectionManifold,
        congruence: Congruence,
        v: (f64, f64),
        u_interval: (f64, f64),
    ) -> Result<Self> {
        let family = Arc::new(CongruenceFamily::new(manifold.clone(), congruence));
        DeviationScenario::from_family(manifold, family, v, u_interval, Observer::FirstParticle)
    }

    pub fn dim(&self) -> usize {
        self.manifold.dim()
    }

    fn params(&self, s: f64) -> (f64, f64, f64, f64) {
        ((self.r_start)(s), (self.r_end)(s), (self.t_start)(s), (self.t_end)(s))
    }

    /// Builds `γ_s` and `η_s` and checks the four endpoint identities.
    pub fn validate(&self, s: f64) -> Result<(Curve, Curve)> {
        let gamma = (self.gamma)(s)?;
        let eta = (self.eta)(s)?;
        let (r1, r2, t1, t2) = self.params(s);
        let p1 = self.x1.point_at((self.tau1)(s))?;
        let p2 = self.x2.point_at((self.tau2)(s))?;
        let px = self.x.point_at(s)?;
        let checks = [
            ("gamma_s(r') = x1(tau1(s))", gamma.point_at(r1)?, &p1),
            ("gamma_s(r'') = x2(tau2(s))", gamma.point_at(r2)?, &p2),
            ("eta_s(t') = x1(tau1(s))", eta.point_at(t1)?, &p1),
            ("eta_s(t'') = x(s)", eta.point_at(t2)?, &px),
        ];
        for (identity, a, b) in checks {
            let mismatch = (&a - b).amax();
            if !(mismatch <= self.tolerance) {
                return Err(Error::ScenarioConsistency {
                    identity: identity.to_string(),
                    mismatch,
                });
            }
        }
        Ok((gamma, eta))
    }

    /// `h(s) = H(t″, t′; η_s) d_{r′}(r″; γ_s)`, a vector at `x(s)`.
    pub fn deviation_vector(&self, law: &TransportLaw, s: f64, panels: usize) -> Result<TangentVector> {
        let (gamma, eta) = self.validate(s)?;
        let (r1, r2, t1, t2) = self.params(s);
        let d = displacement_vector(law, &gamma, r1, r2, panels)?.vector.components;
        let h = transport_matrix(law, &eta, t1, t2)?.h;
        Ok(TangentVector::new(eta.point_at(t2)?, h * d))
    }

    /// The same vector assembled as `H · ∫ Λ(u) γ̇(u) du` with two-point tensors
    /// `Λ(u) = H(r′, u; γ_s)` computed independently at every node.
    pub fn deviation_vector_matrix_form(&self, law: &TransportLaw, s: f64, panels: usize) -> Result<TangentVector> {
        let (gamma, eta) = self.validate(s)?;
        let (r1, r2, t1, t2) = self.params(s);
        let n = self.dim();
        let x1 = Anchor::new("x1", gamma.point_at(r1)?);
        let x = Anchor::new("x", eta.point_at(t2)?);
        let mut acc = MultiPointTensor::vector(x1.clone(), &Vector::zeros(n));
        if r1 != r2 {
            let p = even_panels(panels.max(2));
            let step = (r2 - r1) / p as f64;
            for (k, w) in simpson_weights(p).into_iter().enumerate() {
                let u = if k == p { r2 } else { r1 + k as f64 * step };
                let at_u = Anchor::new("gamma(u)", gamma.point_at(u)?);
                let lambda = MultiPointTensor::two_point(x1.clone(), at_u.clone(), &transport_matrix(law, &gamma, u, r1)?.h);
                let term = lambda.dot(&MultiPointTensor::vector(at_u, &gamma.tangent_at(u)?))?;
                acc = acc.scaled_add(w * step / 3.0, &term)?;
            }
        }
        let h = MultiPointTensor::two_point(x.clone(), x1, &transport_matrix(law, &eta, t1, t2)?.h);
        let out = h.dot(&acc)?;
        Ok(TangentVector::new(x.point, out.as_vector().expect("vector result")))
    }

    /// First-order approximation `(r″ − r′) γ̇_s(r′)` at `x1(τ1(s))`.
    pub fn infinitesimal_deviation(&self, s: f64) -> Result<TangentVector> {
        let gamma = (self.gamma)(s)?;
        let (r1, r2, _, _) = self.params(s);
        Ok(TangentVector::new(gamma.point_at(r1)?, gamma.tangent_at(r1)? * (r2 - r1)))
    }

    /// The family, or a configuration error naming `what` needs it.
    pub fn require_family(&self, what: &str) -> Result<&Arc<dyn ParticleFamily>> {
        self.family
            .as_ref()
            .ok_or_else(|| Error::Configuration(format!("{what} needs a scenario built from a particle family")))
    }
}

fn s_tangent_or_nan(f: &Arc<dyn ParticleFamily>, s: f64, r: f64, n: usize) -> Vector {
    f.s_tangent(s, r).unwrap_or_else(|_| nan_vector(n))
}
