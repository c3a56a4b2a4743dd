//! Charts with an affine connection and pointwise tensor calculus on them.
//!
//! Everything is expressed in the coordinate basis of a single chart, so the
//! structure constants of the frame vanish. The connection convention is
//! `∇_{e_j} e_k = Γ^i_jk e_i`; torsion and curvature are defined from `∇`
//! on coordinate fields:
//!
//! * `T(X, Y) = ∇_X Y − ∇_Y X − [X, Y]`, so `T^i_jk = Γ^i_jk − Γ^i_kj`;
//! * `R(X, Y)Z = ∇_X ∇_Y Z − ∇_Y ∇_X Z − ∇_[X,Y] Z`, so
//!   `R^i_jkl = ∂_k Γ^i_lj − ∂_l Γ^i_kj + Γ^i_km Γ^m_lj − Γ^i_lm Γ^m_kj`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{parse_expression, Expr};
use crate::tensor::{Matrix, Tensor3, Tensor4, Vector};

/// Default central-difference step for derivatives of connection coefficients.
pub const DEFAULT_GAMMA_STEP: f64 = 1e-5;

/// Default exclusion margin around chart singularities.
pub const DEFAULT_DOMAIN_MARGIN: f64 = 1e-3;

/// A field of connection coefficients over a chart.
pub trait ConnectionField: Send + Sync {
    fn dim(&self) -> usize;

    fn coefficients(&self, x: &[f64]) -> Tensor3;

    /// Analytic partial derivatives `∂_l Γ^i_jk`, one tensor per `l`, when known.
    fn derivatives(&self, _x: &[f64]) -> Option<Vec<Tensor3>> {
        None
    }
}

pub type DomainFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;
pub type MetricFn = Arc<dyn Fn(&[f64]) -> Matrix + Send + Sync>;

/// A chart with a linear connection.
#[derive(Clone)]
pub struct ConnectionManifold {
    name: String,
    dim: usize,
    field: Arc<dyn ConnectionField>,
    domain: DomainFn,
    metric: Option<MetricFn>,
    use_analytic_derivatives: bool,
}

impl fmt::Debug for ConnectionManifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConnectionManifold")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl ConnectionManifold {
    pub fn new(
        name: impl Into<String>,
        field: Arc<dyn ConnectionField>,
        domain: impl Fn(&[f64]) -> bool + Send + Sync + 'static,
    ) -> Self {
        let dim = field.dim();
        assert!(dim >= 1, "manifold dimension must be positive");
        ConnectionManifold {
            name: name.into(),
            dim,
            field,
            domain: Arc::new(domain),
            metric: None,
            use_analytic_derivatives: true,
        }
    }

    /// Builds a manifold from an `n×n×n` table of expression strings in `x1..xn`.
    pub fn from_expressions(
        name: impl Into<String>,
        entries: &[Vec<Vec<String>>],
        domain: impl Fn(&[f64]) -> bool + Send + Sync + 'static,
    ) -> Result<Self> {
        let field = ExpressionConnection::new(entries)?;
        Ok(Self::new(name, Arc::new(field), domain))
    }

    /// Attaches a metric. It is only used for diagnostics (norms, orthonormal
    /// frames); the geometry is determined by the connection alone.
    pub fn with_metric(mut self, metric: impl Fn(&[f64]) -> Matrix + Send + Sync + 'static) -> Self {
        self.metric = Some(Arc::new(metric));
        self
    }

    /// Ignores any analytic derivatives of `Γ` and differentiates numerically.
    pub fn with_finite_difference_derivatives(mut self) -> Self {
        self.use_analytic_derivatives = false;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim && x.iter().all(|v| v.is_finite()) && (self.domain)(x)
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        if !self.contains(x) {
            return Err(Error::OutsideDomain {
                manifold: self.name.clone(),
                point: x.to_vec(),
            });
        }
        Ok(())
    }

    pub fn check_vector(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Connection coefficients at `x`.
    pub fn gamma(&self, x: &[f64]) -> Result<Tensor3> {
        self.check_point(x)?;
        let g = self.field.coefficients(x);
        if !g.is_finite() {
            return Err(Error::NonFinite { point: x.to_vec() });
        }
        Ok(g)
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.use_analytic_derivatives && self.field.derivatives(&vec![0.0; self.dim]).is_some()
    }

    /// `∂_l Γ^i_jk` for each `l`: analytic when available, otherwise by central
    /// differences with the given step.
    pub fn gamma_derivatives(&self, x: &[f64], step: f64) -> Result<Vec<Tensor3>> {
        self.check_point(x)?;
        if self.use_analytic_derivatives {
            if let Some(d) = self.field.derivatives(x) {
                return Ok(d);
            }
        }
        let mut out = Vec::with_capacity(self.dim);
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        for l in 0..self.dim {
            plus[l] = x[l] + step;
            minus[l] = x[l] - step;
            if !self.contains(&plus) || !self.contains(&minus) {
                return Err(Error::Stencil {
                    manifold: self.name.clone(),
                    point: x.to_vec(),
                });
            }
            let gp = self.field.coefficients(&plus);
            let gm = self.field.coefficients(&minus);
            out.push(gp.scaled_add(-1.0, &gm).scale(0.5 / step));
            plus[l] = x[l];
            minus[l] = x[l];
        }
        Ok(out)
    }

    pub fn metric_at(&self, x: &[f64]) -> Option<Matrix> {
        self.metric.as_ref().map(|g| g(x))
    }

    /// Metric norm of `v` at `x` when a metric is attached, Euclidean
    /// component norm otherwise.
    pub fn norm(&self, x: &[f64], v: &Vector) -> f64 {
        match self.metric_at(x) {
            Some(g) => (v.transpose() * g * v)[(0, 0)].max(0.0).sqrt(),
            None => v.norm(),
        }
    }
}

/// A tangent vector with its base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base_point: Vector,
    pub components: Vector,
}

impl TangentVector {
    pub fn new(base_point: Vector, components: Vector) -> Self {
        TangentVector {
            base_point,
            components,
        }
    }
}

type FieldFn = Arc<dyn Fn(&[f64]) -> Vector + Send + Sync>;
type JacobianFn = Arc<dyn Fn(&[f64]) -> Matrix + Send + Sync>;

/// A vector field given by its components in the chart.
#[derive(Clone)]
pub struct VectorField {
    value: FieldFn,
    jacobian: Option<JacobianFn>,
    /// Number of derivatives that can be trusted.
    pub differentiability: u32,
}

impl VectorField {
    pub fn new(value: impl Fn(&[f64]) -> Vector + Send + Sync + 'static) -> Self {
        VectorField {
            value: Arc::new(value),
            jacobian: None,
            differentiability: 2,
        }
    }

    pub fn constant(components: Vector) -> Self {
        let n = components.len();
        VectorField::new(move |_| components.clone())
            .with_jacobian(move |_| Matrix::zeros(n, n))
    }

    /// Attaches the analytic Jacobian `J^i_k = ∂_k Y^i`.
    pub fn with_jacobian(mut self, jac: impl Fn(&[f64]) -> Matrix + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    /// Field whose components are expressions in `x1..xn`; the Jacobian is
    /// obtained by symbolic differentiation.
    pub fn from_expressions(components: &[&str]) -> Result<Self> {
        let n = components.len();
        let exprs: Vec<Expr> = components
            .iter()
            .map(|s| parse_expression(s))
            .collect::<std::result::Result<_, _>>()?;
        if let Some(bad) = exprs.iter().find(|e| e.arity() > n) {
            return Err(Error::Configuration(format!(
                "vector field component `{bad}` references a coordinate beyond x{n}"
            )));
        }
        let derivs: Vec<Vec<Expr>> = exprs
            .iter()
            .map(|e| (0..n).map(|k| e.derivative(k)).collect())
            .collect();
        let exprs = Arc::new(exprs);
        let derivs = Arc::new(derivs);
        Ok(VectorField::new(move |x| Vector::from_fn(n, |i, _| exprs[i].eval(x)))
            .with_jacobian(move |x| Matrix::from_fn(n, n, |i, k| derivs[i][k].eval(x))))
    }

    pub fn eval(&self, x: &[f64]) -> Vector {
        (self.value)(x)
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    /// `J^i_k = ∂_k Y^i`, analytic when attached, central differences otherwise.
    pub fn jacobian_at(&self, x: &[f64], h: f64) -> Matrix {
        if let Some(j) = &self.jacobian {
            return j(x);
        }
        let n = x.len();
        let mut jac = Matrix::zeros(n, n);
        let mut p = x.to_vec();
        for k in 0..n {
            p[k] = x[k] + h;
            let plus = self.eval(&p);
            p[k] = x[k] - h;
            let minus = self.eval(&p);
            p[k] = x[k];
            for i in 0..n {
                jac[(i, k)] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
        jac
    }
}

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A scalar field, used for module-structure checks (`∇_X(fY)`).
#[derive(Clone)]
pub struct ScalarField {
    value: ScalarFn,
}

impl ScalarField {
    pub fn new(value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField {
            value: Arc::new(value),
        }
    }

    pub fn from_expression(src: &str) -> Result<Self> {
        let e = parse_expression(src)?;
        Ok(ScalarField::new(move |x| e.eval(x)))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    /// `f · Y`.
    pub fn times(&self, y: &VectorField) -> VectorField {
        let f = self.clone();
        let y = y.clone();
        VectorField::new(move |x| y.eval(x) * f.eval(x))
    }
}

/// Connection coefficients given as expression strings in `x1..xn`.
pub struct ExpressionConnection {
    dim: usize,
    entries: Vec<Expr>,
    derivatives: Vec<Vec<Expr>>,
}

impl ExpressionConnection {
    /// `entries[i][j][k]` is the source of `Γ^i_jk`.
    pub fn new(entries: &[Vec<Vec<String>>]) -> Result<Self> {
        let n = entries.len();
        if n == 0 {
            return Err(Error::Configuration("connection table is empty".into()));
        }
        let mut parsed = Vec::with_capacity(n * n * n);
        for (i, plane) in entries.iter().enumerate() {
            if plane.len() != n {
                return Err(Error::Configuration(format!(
                    "connection table row {} has {} entries, expected {n}",
                    i + 1,
                    plane.len()
                )));
            }
            for (j, row) in plane.iter().enumerate() {
                if row.len() != n {
                    return Err(Error::Configuration(format!(
                        "connection table row ({}, {}) has {} entries, expected {n}",
                        i + 1,
                        j + 1,
                        row.len()
                    )));
                }
                for src in row {
                    let e = parse_expression(src)?;
                    if e.arity() > n {
                        return Err(Error::Configuration(format!(
                            "connection entry `{src}` references a coordinate beyond x{n}"
                        )));
                    }
                    parsed.push(e);
                }
            }
        }
        let derivatives = (0..n)
            .map(|l| parsed.iter().map(|e| e.derivative(l)).collect())
            .collect();
        Ok(ExpressionConnection {
            dim: n,
            entries: parsed,
            derivatives,
        })
    }
}

impl ConnectionField for ExpressionConnection {
    fn dim(&self) -> usize {
        self.dim
    }

    fn coefficients(&self, x: &[f64]) -> Tensor3 {
        let n = self.dim;
        Tensor3::from_fn(n, |i, j, k| self.entries[(i * n + j) * n + k].eval(x))
    }

    fn derivatives(&self, x: &[f64]) -> Option<Vec<Tensor3>> {
        let n = self.dim;
        Some(
            self.derivatives
                .iter()
                .map(|d| Tensor3::from_fn(n, |i, j, k| d[(i * n + j) * n + k].eval(x)))
                .collect(),
        )
    }
}

/// `T^i_jk = Γ^i_jk − Γ^i_kj`.
pub fn torsion_tensor(m: &ConnectionManifold, x: &[f64]) -> Result<Tensor3> {
    let g = m.gamma(x)?;
    Ok(torsion_from_gamma(&g))
}

pub(crate) fn torsion_from_gamma(g: &Tensor3) -> Tensor3 {
    let n = g.dim();
    let mut t = Tensor3::zeros(n);
    for i in 0..n {
        for j in 0..n {
            for k in (j + 1)..n {
                let v = g.get(i, j, k) - g.get(i, k, j);
                t.set(i, j, k, v);
                t.set(i, k, j, -v);
            }
        }
    }
    t
}

/// Curvature components `R^i_jkl`, exactly antisymmetric in `(k, l)`.
///
/// `dgamma_step` is used only when `Γ` has no analytic derivatives.
pub fn curvature_tensor(m: &ConnectionManifold, x: &[f64], dgamma_step: f64) -> Result<Tensor4> {
    let g = m.gamma(x)?;
    let dg = m.gamma_derivatives(x, dgamma_step)?;
    Ok(curvature_from_parts(&g, &dg))
}

pub(crate) fn curvature_from_parts(g: &Tensor3, dg: &[Tensor3]) -> Tensor4 {
    let n = g.dim();
    let mut r = Tensor4::zeros(n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in (k + 1)..n {
                    let mut v = dg[k].get(i, l, j) - dg[l].get(i, k, j);
                    for p in 0..n {
                        v += g.get(i, k, p) * g.get(p, l, j) - g.get(i, l, p) * g.get(p, k, j);
                    }
                    r.set(i, j, k, l, v);
                    r.set(i, j, l, k, -v);
                }
            }
        }
    }
    r
}

/// `(∇_X Y)^i = X^k ∂_k Y^i + Γ^i_km X^k Y^m` at `x`.
pub fn covariant_derivative(
    m: &ConnectionManifold,
    x_field: &VectorField,
    y_field: &VectorField,
    x: &[f64],
    h: f64,
) -> Result<Vector> {
    let g = m.gamma(x)?;
    if !y_field.has_jacobian() {
        check_stencil(m, x, h)?;
    }
    let xv = x_field.eval(x);
    let yv = y_field.eval(x);
    Ok(y_field.jacobian_at(x, h) * &xv + g.apply(&xv, &yv))
}

/// The field `∇_X Y`, differentiated numerically with step `h` when needed.
pub fn covariant_derivative_field(
    m: &ConnectionManifold,
    x_field: &VectorField,
    y_field: &VectorField,
    h: f64,
) -> VectorField {
    let (m, xf, yf) = (m.clone(), x_field.clone(), y_field.clone());
    let n = m.dim();
    VectorField::new(move |x| {
        covariant_derivative(&m, &xf, &yf, x, h).unwrap_or_else(|_| Vector::from_element(n, f64::NAN))
    })
}

/// `[X, Y]^i = X^k ∂_k Y^i − Y^k ∂_k X^i`.
pub fn lie_bracket(x_field: &VectorField, y_field: &VectorField, x: &[f64], h: f64) -> Vector {
    let xv = x_field.eval(x);
    let yv = y_field.eval(x);
    y_field.jacobian_at(x, h) * xv - x_field.jacobian_at(x, h) * yv
}

pub fn lie_bracket_field(x_field: &VectorField, y_field: &VectorField, h: f64) -> VectorField {
    let (xf, yf) = (x_field.clone(), y_field.clone());
    VectorField::new(move |x| lie_bracket(&xf, &yf, x, h))
}

/// Covariant derivative of the torsion tensor along `w`:
/// `(∇_w T)^i_jk = w^l (∂_l T^i_jk + Γ^i_lm T^m_jk − Γ^m_lj T^i_mk − Γ^m_lk T^i_jm)`.
pub fn torsion_covariant_derivative(
    m: &ConnectionManifold,
    x: &[f64],
    w: &Vector,
    dgamma_step: f64,
) -> Result<Tensor3> {
    let g = m.gamma(x)?;
    let dg = m.gamma_derivatives(x, dgamma_step)?;
    Ok(torsion_derivative_from_parts(&g, &dg, w))
}

pub(crate) fn torsion_derivative_from_parts(g: &Tensor3, dg: &[Tensor3], w: &Vector) -> Tensor3 {
    let n = g.dim();
    let t = torsion_from_gamma(g);
    let mut dt_dir = Tensor3::zeros(n);
    for (l, dgl) in dg.iter().enumerate() {
        if w[l] != 0.0 {
            dt_dir = dt_dir.scaled_add(w[l], &torsion_from_gamma(dgl));
        }
    }
    // A^a_b = Γ^a_lb w^l
    let a = g.contract_first(w);
    Tensor3::from_fn(n, |i, j, k| {
        let mut v = dt_dir.get(i, j, k);
        for p in 0..n {
            v += a[(i, p)] * t.get(p, j, k) - a[(p, j)] * t.get(i, p, k) - a[(p, k)] * t.get(i, j, p);
        }
        v
    })
}

pub(crate) fn check_stencil(m: &ConnectionManifold, x: &[f64], h: f64) -> Result<()> {
    let mut p = x.to_vec();
    for k in 0..x.len() {
        for sign in [-1.0, 1.0] {
            p[k] = x[k] + sign * h;
            if !m.contains(&p) {
                return Err(Error::Stencil {
                    manifold: m.name().to_string(),
                    point: x.to_vec(),
                });
            }
        }
        p[k] = x[k];
    }
    Ok(())
}
