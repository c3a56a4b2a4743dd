//! Tensors whose slots live at different points of the chart, and their
//! covariant derivative along a one-parameter family of anchor points.

use crate::error::{Error, Result};
use crate::geometry::ConnectionManifold;
use crate::tensor::{Matrix, Vector};

/// Tolerance used when deciding that two anchors are the same point.
pub const ANCHOR_TOLERANCE: f64 = 1e-8;

/// The point a tensor slot is attached to.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub label: String,
    pub point: Vector,
}

impl Anchor {
    pub fn new(label: impl Into<String>, point: Vector) -> Self {
        Anchor {
            label: label.into(),
            point,
        }
    }

    fn coincides(&self, other: &Anchor) -> bool {
        (&self.point - &other.point).amax() <= ANCHOR_TOLERANCE * (1.0 + self.point.amax())
    }
}

/// A tensor of valence `(p, q)` with one anchor per slot. Contravariant slots
/// come first; components are stored row-major over `(i_1..i_p, j_1..j_q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiPointTensor {
    dim: usize,
    contravariant: usize,
    anchors: Vec<Anchor>,
    components: Vec<f64>,
}

impl MultiPointTensor {
    pub fn new(
        dim: usize,
        contravariant: usize,
        anchors: Vec<Anchor>,
        components: Vec<f64>,
    ) -> Result<Self> {
        let rank = anchors.len();
        if contravariant > rank {
            return Err(Error::Configuration(format!(
                "{contravariant} contravariant slots but only {rank} anchors"
            )));
        }
        for a in &anchors {
            if a.point.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: a.point.len(),
                });
            }
        }
        let expected = dim.pow(rank as u32);
        if components.len() != expected {
            return Err(Error::Dimension {
                expected,
                got: components.len(),
            });
        }
        Ok(MultiPointTensor {
            dim,
            contravariant,
            anchors,
            components,
        })
    }

    pub fn scalar(dim: usize, value: f64) -> Self {
        MultiPointTensor {
            dim,
            contravariant: 0,
            anchors: Vec::new(),
            components: vec![value],
        }
    }

    pub fn vector(anchor: Anchor, v: &Vector) -> Self {
        MultiPointTensor {
            dim: v.len(),
            contravariant: 1,
            anchors: vec![anchor],
            components: v.as_slice().to_vec(),
        }
    }

    pub fn covector(anchor: Anchor, w: &Vector) -> Self {
        MultiPointTensor {
            dim: w.len(),
            contravariant: 0,
            anchors: vec![anchor],
            components: w.as_slice().to_vec(),
        }
    }

    /// A linear map from vectors at `down` to vectors at `up`, e.g. a transport matrix.
    pub fn two_point(up: Anchor, down: Anchor, m: &Matrix) -> Self {
        let n = m.nrows();
        assert_eq!(n, m.ncols(), "two-point tensors need a square matrix");
        let mut components = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                components.push(m[(i, j)]);
            }
        }
        MultiPointTensor {
            dim: n,
            contravariant: 1,
            anchors: vec![up, down],
            components,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.anchors.len()
    }

    pub fn valence(&self) -> (usize, usize) {
        (self.contravariant, self.rank() - self.contravariant)
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.components[self.flat(index)]
    }

    fn flat(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.rank());
        index.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    fn unflat(&self, mut k: usize) -> Vec<usize> {
        let mut idx = vec![0; self.rank()];
        for slot in (0..self.rank()).rev() {
            idx[slot] = k % self.dim;
            k /= self.dim;
        }
        idx
    }

    pub fn as_vector(&self) -> Option<Vector> {
        (self.valence() == (1, 0)).then(|| Vector::from_column_slice(&self.components))
    }

    pub fn as_matrix(&self) -> Option<Matrix> {
        (self.valence() == (1, 1)).then(|| Matrix::from_row_slice(self.dim, self.dim, &self.components))
    }

    /// `self ⊗ other`, with slots ordered as: contravariant slots of `self`,
    /// then of `other`, then covariant slots of `self`, then of `other`.
    pub fn tensor_product(&self, other: &MultiPointTensor) -> Result<MultiPointTensor> {
        if self.dim != other.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: other.dim,
            });
        }
        let (p1, q1) = self.valence();
        let (p2, _) = other.valence();
        let mut anchors = Vec::with_capacity(self.rank() + other.rank());
        anchors.extend_from_slice(&self.anchors[..p1]);
        anchors.extend_from_slice(&other.anchors[..p2]);
        anchors.extend_from_slice(&self.anchors[p1..]);
        anchors.extend_from_slice(&other.anchors[p2..]);
        let out_len = self.components.len() * other.components.len();
        let mut out = MultiPointTensor {
            dim: self.dim,
            contravariant: p1 + p2,
            anchors,
            components: vec![0.0; out_len],
        };
        for (a, &va) in self.components.iter().enumerate() {
            let ia = self.unflat(a);
            for (b, &vb) in other.components.iter().enumerate() {
                let ib = other.unflat(b);
                let mut idx = Vec::with_capacity(out.rank());
                idx.extend_from_slice(&ia[..p1]);
                idx.extend_from_slice(&ib[..p2]);
                idx.extend_from_slice(&ia[p1..p1 + q1]);
                idx.extend_from_slice(&ib[p2..]);
                let k = out.flat(&idx);
                out.components[k] = va * vb;
            }
        }
        Ok(out)
    }

    /// Contracts contravariant slot `up` with covariant slot `down` (both
    /// counted within their kind). The two slots must share an anchor.
    pub fn contract(&self, up: usize, down: usize) -> Result<MultiPointTensor> {
        let (p, q) = self.valence();
        if up >= p || down >= q {
            return Err(Error::Configuration(format!(
                "cannot contract slots ({up}, {down}) of a ({p}, {q}) tensor"
            )));
        }
        let su = up;
        let sd = p + down;
        if !self.anchors[su].coincides(&self.anchors[sd]) {
            return Err(Error::BasePointMismatch {
                expected: self.anchors[su].point.as_slice().to_vec(),
                got: self.anchors[sd].point.as_slice().to_vec(),
            });
        }
        let anchors: Vec<Anchor> = self
            .anchors
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != su && *k != sd)
            .map(|(_, a)| a.clone())
            .collect();
        let mut out = MultiPointTensor {
            dim: self.dim,
            contravariant: p - 1,
            components: vec![0.0; self.dim.pow(anchors.len() as u32)],
            anchors,
        };
        for (k, &v) in self.components.iter().enumerate() {
            let idx = self.unflat(k);
            if idx[su] != idx[sd] {
                continue;
            }
            let rest: Vec<usize> = idx
                .iter()
                .enumerate()
                .filter(|(s, _)| *s != su && *s != sd)
                .map(|(_, &i)| i)
                .collect();
            let f = out.flat(&rest);
            out.components[f] += v;
        }
        Ok(out)
    }

    /// Contracts the last covariant slot of `self` with the first
    /// contravariant slot of `other`, like a matrix product.
    pub fn dot(&self, other: &MultiPointTensor) -> Result<MultiPointTensor> {
        let (p1, q1) = self.valence();
        let (p2, _) = other.valence();
        if q1 == 0 || p2 == 0 {
            return Err(Error::Configuration("dot needs a covariant and a contravariant slot".into()));
        }
        self.tensor_product(other)?.contract(p1, q1 - 1)
    }

    /// `self + a · other`; anchors must agree slot by slot.
    pub fn scaled_add(&self, a: f64, other: &MultiPointTensor) -> Result<MultiPointTensor> {
        self.check_same_shape(other)?;
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(x, y)| x + a * y)
            .collect();
        Ok(MultiPointTensor {
            components,
            ..self.clone()
        })
    }

    pub fn scale(&self, a: f64) -> MultiPointTensor {
        MultiPointTensor {
            components: self.components.iter().map(|x| a * x).collect(),
            ..self.clone()
        }
    }

    pub fn max_abs_diff(&self, other: &MultiPointTensor) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .components
            .iter()
            .zip(&other.components)
            .fold(0.0, |m, (x, y)| m.max((x - y).abs())))
    }

    fn check_same_shape(&self, other: &MultiPointTensor) -> Result<()> {
        if self.valence() != other.valence() || self.dim != other.dim {
            return Err(Error::Configuration("tensors of different valence".into()));
        }
        for (a, b) in self.anchors.iter().zip(&other.anchors) {
            if !a.coincides(b) {
                return Err(Error::BasePointMismatch {
                    expected: a.point.as_slice().to_vec(),
                    got: b.point.as_slice().to_vec(),
                });
            }
        }
        Ok(())
    }

    /// `Σ_k M[i, k] A[.. k ..]` in the given slot.
    fn map_slot(&self, slot: usize, m: &Matrix) -> Vec<f64> {
        let mut out = vec![0.0; self.components.len()];
        for (k, &v) in self.components.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let mut idx = self.unflat(k);
            let src = idx[slot];
            for i in 0..self.dim {
                idx[slot] = i;
                out[self.flat(&idx)] += m[(i, src)] * v;
            }
        }
        out
    }
}

/// Covariant derivative of `σ ↦ A(σ)` at `σ = s`, where every slot of `A(σ)` is
/// anchored on its own curve `z_a(σ)`:
///
/// `(DA/dσ) = dA/dσ + Σ_contra Γ(z_a)(ż_a) A − Σ_co A Γ(z_b)(ż_b)`,
///
/// with `dA/dσ` and `ż` from central differences of step `h`.
pub fn multipoint_covariant_derivative<F>(
    m: &ConnectionManifold,
    field: F,
    s: f64,
    h: f64,
) -> Result<MultiPointTensor>
where
    F: Fn(f64) -> Result<MultiPointTensor>,
{
    let minus = field(s - h)?;
    let centre = field(s)?;
    let plus = field(s + h)?;
    if minus.valence() != centre.valence() || plus.valence() != centre.valence() {
        return Err(Error::Configuration("tensor valence changes along the family".into()));
    }
    let (p, _) = centre.valence();
    let mut out: Vec<f64> = plus
        .components
        .iter()
        .zip(&minus.components)
        .map(|(a, b)| (a - b) / (2.0 * h))
        .collect();
    for slot in 0..centre.rank() {
        let z = &centre.anchors[slot].point;
        let zdot = (&plus.anchors[slot].point - &minus.anchors[slot].point) / (2.0 * h);
        if zdot.amax() == 0.0 {
            continue;
        }
        let a = m.gamma(z.as_slice())?.contract_first(&zdot);
        let (mapped, sign) = if slot < p {
            (centre.map_slot(slot, &a), 1.0)
        } else {
            (centre.map_slot(slot, &a.transpose()), -1.0)
        };
        for (o, v) in out.iter_mut().zip(mapped) {
            *o += sign * v;
        }
    }
    Ok(MultiPointTensor {
        components: out,
        ..centre
    })
}

/// Second covariant derivative, as the derivative of the derivative.
pub fn multipoint_second_derivative<F>(
    m: &ConnectionManifold,
    field: F,
    s: f64,
    h: f64,
) -> Result<MultiPointTensor>
where
    F: Fn(f64) -> Result<MultiPointTensor>,
{
    multipoint_covariant_derivative(m, |sigma| multipoint_covariant_derivative(m, &field, sigma, h), s, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::builtin;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn on_latitude(t: f64) -> Anchor {
        Anchor::new("z", v(&[1.0 + 0.2 * t, t]))
    }

    #[test]
    fn vector_case_is_the_covariant_derivative_along_the_curve() {
        let m = builtin("sphere2:1").unwrap();
        let field = |t: f64| Ok(MultiPointTensor::vector(on_latitude(t), &v(&[t.sin(), t * t])));
        let t = 0.4;
        let d = multipoint_covariant_derivative(&m, field, t, 1e-4).unwrap();
        let z = v(&[1.0 + 0.2 * t, t]);
        let zdot = v(&[0.2, 1.0]);
        let a = v(&[t.sin(), t * t]);
        let expected = v(&[t.cos(), 2.0 * t]) + m.gamma(z.as_slice()).unwrap().apply(&zdot, &a);
        assert!((d.as_vector().unwrap() - expected).norm() < 1e-7);
    }

    #[test]
    fn contraction_commutes_with_differentiation() {
        let m = builtin("hyperbolic2").unwrap();
        let field = |t: f64| {
            let a = Anchor::new("z", v(&[t, 1.0 + t * t]));
            let mat = Matrix::from_row_slice(2, 2, &[t.cos(), t, 1.0 - t, t.exp()]);
            Ok(MultiPointTensor::two_point(a.clone(), a, &mat))
        };
        let t = 0.3;
        let d_then_c = multipoint_covariant_derivative(&m, field, t, 1e-4).unwrap().contract(0, 0).unwrap();
        let c_then_d = multipoint_covariant_derivative(&m, |s| field(s)?.contract(0, 0), t, 1e-4).unwrap();
        assert!((d_then_c.components()[0] - c_then_d.components()[0]).abs() < 1e-8);
    }

    #[test]
    fn leibniz_rule_for_dot() {
        let m = builtin("sphere2:1").unwrap();
        let a = |t: f64| {
            let mat = Matrix::from_row_slice(2, 2, &[1.0 + t, t * t, -t, 2.0]);
            Ok(MultiPointTensor::two_point(
                Anchor::new("x", v(&[0.8, 0.1 + t])),
                Anchor::new("y", v(&[1.2 - t, 0.5])),
                &mat,
            ))
        };
        let b = |t: f64| Ok(MultiPointTensor::vector(Anchor::new("y", v(&[1.2 - t, 0.5])), &v(&[t.sin(), 1.0])));
        let t = 0.2;
        let h = 1e-4;
        let lhs = multipoint_covariant_derivative(&m, |s| a(s)?.dot(&b(s)?), t, h).unwrap();
        let da = multipoint_covariant_derivative(&m, a, t, h).unwrap();
        let db = multipoint_covariant_derivative(&m, b, t, h).unwrap();
        let rhs = da.dot(&b(t).unwrap()).unwrap().scaled_add(1.0, &a(t).unwrap().dot(&db).unwrap()).unwrap();
        assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-7);
    }

    #[test]
    fn mismatched_anchors_refuse_to_contract() {
        let mat = Matrix::identity(2, 2);
        let t = MultiPointTensor::two_point(Anchor::new("x", v(&[0.0, 0.0])), Anchor::new("y", v(&[1.0, 0.0])), &mat);
        assert!(matches!(t.contract(0, 0), Err(Error::BasePointMismatch { .. })));
        let w = MultiPointTensor::vector(Anchor::new("x", v(&[0.0, 0.0])), &v(&[1.0, 2.0]));
        assert!(matches!(t.dot(&w), Err(Error::BasePointMismatch { .. })));
    }

    #[test]
    fn tensor_product_orders_slots() {
        let a = MultiPointTensor::vector(Anchor::new("x", v(&[0.0, 0.0])), &v(&[1.0, 2.0]));
        let w = MultiPointTensor::covector(Anchor::new("y", v(&[1.0, 0.0])), &v(&[3.0, 5.0]));
        let p = a.tensor_product(&w).unwrap();
        assert_eq!(p.valence(), (1, 1));
        assert_eq!(p.as_matrix().unwrap(), Matrix::from_row_slice(2, 2, &[3.0, 5.0, 6.0, 10.0]));
        assert_eq!(p.anchors()[1].label, "y");
    }
}
