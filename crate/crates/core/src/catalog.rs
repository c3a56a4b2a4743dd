//! Built-in charts with hand-written connection coefficients and derivatives.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{ConnectionField, ConnectionManifold, DEFAULT_DOMAIN_MARGIN};
use crate::tensor::{Matrix, Tensor3};

type CoeffFn = Box<dyn Fn(&[f64]) -> Tensor3 + Send + Sync>;
type DerivFn = Box<dyn Fn(&[f64]) -> Vec<Tensor3> + Send + Sync>;

struct NativeField {
    dim: usize,
    coefficients: CoeffFn,
    derivatives: DerivFn,
}

impl ConnectionField for NativeField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn coefficients(&self, x: &[f64]) -> Tensor3 {
        (self.coefficients)(x)
    }

    fn derivatives(&self, x: &[f64]) -> Option<Vec<Tensor3>> {
        Some((self.derivatives)(x))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub parameter: Option<&'static str>,
    pub dim: Option<usize>,
    pub coordinates: &'static str,
    pub description: &'static str,
}

pub fn catalog() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            name: "euclidean",
            parameter: Some("n (dimension)"),
            dim: None,
            coordinates: "x1..xn",
            description: "flat space in Cartesian coordinates, all coefficients zero",
        },
        CatalogEntry {
            name: "euclidean2_polar",
            parameter: None,
            dim: Some(2),
            coordinates: "r, phi",
            description: "flat plane in polar coordinates, r > margin",
        },
        CatalogEntry {
            name: "sphere2",
            parameter: Some("R (radius, metric only)"),
            dim: Some(2),
            coordinates: "theta, phi",
            description: "round sphere, Levi-Civita connection, margin < theta < pi - margin",
        },
        CatalogEntry {
            name: "hyperbolic2",
            parameter: None,
            dim: Some(2),
            coordinates: "x, y",
            description: "upper half plane with curvature -1, y > margin",
        },
        CatalogEntry {
            name: "flat_torsion",
            parameter: Some("c (torsion constant)"),
            dim: Some(2),
            coordinates: "x1, x2",
            description: "flat connection with constant torsion, Gamma^1_12 = c",
        },
    ]
}

pub fn catalog_names() -> Vec<String> {
    catalog()
        .iter()
        .map(|e| match e.parameter {
            Some(_) => format!("{}:<{}>", e.name, e.parameter.unwrap().split(' ').next().unwrap()),
            None => e.name.to_string(),
        })
        .collect()
}

/// Looks up a built-in manifold such as `"sphere2:1"` or `"euclidean:3"`.
pub fn builtin(spec: &str) -> Result<ConnectionManifold> {
    builtin_with_margin(spec, DEFAULT_DOMAIN_MARGIN)
}

pub fn builtin_with_margin(spec: &str, margin: f64) -> Result<ConnectionManifold> {
    let (name, param) = match spec.split_once(':') {
        Some((n, p)) => (n.trim(), Some(p.trim())),
        None => (spec.trim(), None),
    };
    let number = |required: bool| -> Result<Option<f64>> {
        match param {
            Some(p) => p
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| Error::Configuration(format!("invalid parameter `{p}` for manifold `{name}`"))),
            None if required => Err(Error::Configuration(format!(
                "manifold `{name}` needs a parameter, e.g. `{name}:1`"
            ))),
            None => Ok(None),
        }
    };
    let no_param = || -> Result<()> {
        match param {
            Some(p) => Err(Error::Configuration(format!(
                "manifold `{name}` takes no parameter (got `{p}`)"
            ))),
            None => Ok(()),
        }
    };
    match name {
        "euclidean" => {
            let n = number(true)?.unwrap();
            if n < 1.0 || n.fract() != 0.0 || n > 16.0 {
                return Err(Error::Configuration(format!("invalid dimension {n} for `euclidean`")));
            }
            Ok(euclidean(n as usize))
        }
        "euclidean2_polar" => {
            no_param()?;
            Ok(polar(margin))
        }
        "sphere2" => {
            let r = number(false)?.unwrap_or(1.0);
            if r <= 0.0 {
                return Err(Error::Configuration(format!("sphere radius must be positive, got {r}")));
            }
            Ok(sphere(r, margin))
        }
        "hyperbolic2" => {
            no_param()?;
            Ok(hyperbolic(margin))
        }
        "flat_torsion" => {
            let c = number(true)?.unwrap();
            Ok(flat_torsion(c))
        }
        _ => Err(Error::Configuration(format!(
            "unknown manifold `{spec}`; available: {}",
            catalog_names().join(", ")
        ))),
    }
}

fn native(
    name: String,
    dim: usize,
    coefficients: impl Fn(&[f64]) -> Tensor3 + Send + Sync + 'static,
    derivatives: impl Fn(&[f64]) -> Vec<Tensor3> + Send + Sync + 'static,
    domain: impl Fn(&[f64]) -> bool + Send + Sync + 'static,
) -> ConnectionManifold {
    let field = NativeField {
        dim,
        coefficients: Box::new(coefficients),
        derivatives: Box::new(derivatives),
    };
    ConnectionManifold::new(name, Arc::new(field), domain)
}

fn euclidean(n: usize) -> ConnectionManifold {
    native(
        format!("euclidean:{n}"),
        n,
        move |_| Tensor3::zeros(n),
        move |_| vec![Tensor3::zeros(n); n],
        |_| true,
    )
    .with_metric(move |_| Matrix::identity(n, n))
}

fn polar(margin: f64) -> ConnectionManifold {
    native(
        "euclidean2_polar".into(),
        2,
        |x| {
            let r = x[0];
            let mut g = Tensor3::zeros(2);
            g.set(0, 1, 1, -r);
            g.set(1, 0, 1, 1.0 / r);
            g.set(1, 1, 0, 1.0 / r);
            g
        },
        |x| {
            let r = x[0];
            let mut dr = Tensor3::zeros(2);
            dr.set(0, 1, 1, -1.0);
            dr.set(1, 0, 1, -1.0 / (r * r));
            dr.set(1, 1, 0, -1.0 / (r * r));
            vec![dr, Tensor3::zeros(2)]
        },
        move |x| x[0] > margin,
    )
    .with_metric(|x| Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, x[0] * x[0]])))
}

fn sphere(radius: f64, margin: f64) -> ConnectionManifold {
    native(
        format!("sphere2:{radius}"),
        2,
        |x| {
            let (s, c) = x[0].sin_cos();
            let mut g = Tensor3::zeros(2);
            g.set(0, 1, 1, -s * c);
            g.set(1, 0, 1, c / s);
            g.set(1, 1, 0, c / s);
            g
        },
        |x| {
            let s = x[0].sin();
            let mut dth = Tensor3::zeros(2);
            dth.set(0, 1, 1, -(2.0 * x[0]).cos());
            dth.set(1, 0, 1, -1.0 / (s * s));
            dth.set(1, 1, 0, -1.0 / (s * s));
            vec![dth, Tensor3::zeros(2)]
        },
        move |x| x[0] > margin && x[0] < std::f64::consts::PI - margin,
    )
    .with_metric(move |x| {
        let s = x[0].sin();
        Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![radius * radius, radius * radius * s * s]))
    })
}

fn hyperbolic(margin: f64) -> ConnectionManifold {
    native(
        "hyperbolic2".into(),
        2,
        |x| {
            let y = x[1];
            let mut g = Tensor3::zeros(2);
            g.set(0, 0, 1, -1.0 / y);
            g.set(0, 1, 0, -1.0 / y);
            g.set(1, 0, 0, 1.0 / y);
            g.set(1, 1, 1, -1.0 / y);
            g
        },
        |x| {
            let y2 = x[1] * x[1];
            let mut dy = Tensor3::zeros(2);
            dy.set(0, 0, 1, 1.0 / y2);
            dy.set(0, 1, 0, 1.0 / y2);
            dy.set(1, 0, 0, -1.0 / y2);
            dy.set(1, 1, 1, 1.0 / y2);
            vec![Tensor3::zeros(2), dy]
        },
        move |x| x[1] > margin,
    )
    .with_metric(|x| Matrix::identity(2, 2) / (x[1] * x[1]))
}

fn flat_torsion(c: f64) -> ConnectionManifold {
    native(
        format!("flat_torsion:{c}"),
        2,
        move |_| {
            let mut g = Tensor3::zeros(2);
            g.set(0, 0, 1, c);
            g
        },
        |_| vec![Tensor3::zeros(2); 2],
        |_| true,
    )
}
