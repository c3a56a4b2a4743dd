//! Fixed-step classical Runge–Kutta integration and Hermite dense output.

use crate::error::Result;
use crate::tensor::Vector;

/// Number of equal steps needed to cover `span` with steps no longer than `step`.
pub fn step_count(span: f64, step: f64) -> usize {
    assert!(step > 0.0 && step.is_finite(), "integration step must be positive");
    ((span.abs() / step).ceil() as usize).max(1)
}

/// One classical fourth-order step of `y' = f(t, y)`.
pub fn rk4_step<F>(f: &F, t: f64, y: &Vector, h: f64) -> Result<Vector>
where
    F: Fn(f64, &Vector) -> Result<Vector>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, &(y + &k1 * (0.5 * h)))?;
    let k3 = f(t + 0.5 * h, &(y + &k2 * (0.5 * h)))?;
    let k4 = f(t + h, &(y + &k3 * h))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Integrates from `t0` to `t1` in `n` equal steps and returns every node.
pub fn rk4_nodes<F>(f: &F, t0: f64, t1: f64, y0: Vector, n: usize) -> Result<Vec<(f64, Vector)>>
where
    F: Fn(f64, &Vector) -> Result<Vector>,
{
    let h = (t1 - t0) / n as f64;
    let mut out = Vec::with_capacity(n + 1);
    let mut y = y0;
    out.push((t0, y.clone()));
    for k in 0..n {
        let t = t0 + k as f64 * h;
        y = rk4_step(f, t, &y, h)?;
        let tk = if k + 1 == n { t1 } else { t0 + (k + 1) as f64 * h };
        out.push((tk, y.clone()));
    }
    Ok(out)
}

/// Integrates from `t0` to `t1` with steps no longer than `step`; returns the final state.
pub fn rk4_solve<F>(f: &F, t0: f64, t1: f64, y0: Vector, step: f64) -> Result<Vector>
where
    F: Fn(f64, &Vector) -> Result<Vector>,
{
    if t0 == t1 {
        return Ok(y0);
    }
    let n = step_count(t1 - t0, step);
    let h = (t1 - t0) / n as f64;
    let mut y = y0;
    for k in 0..n {
        y = rk4_step(f, t0 + k as f64 * h, &y, h)?;
    }
    Ok(y)
}

/// Cubic Hermite interpolation on `[t0, t1]` from values and derivatives at both ends.
pub fn hermite(t0: f64, t1: f64, y0: &Vector, d0: &Vector, y1: &Vector, d1: &Vector, t: f64) -> Vector {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    y0 * h00 + d0 * (h10 * h) + y1 * h01 + d1 * (h11 * h)
}
