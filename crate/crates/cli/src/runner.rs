//! Builds library objects from a validated configuration and evaluates the
//! task over its parameter grid.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use pathdev::catalog::builtin;
use pathdev::deviation::basic::basic_equation_terms;
use pathdev::deviation::congruence::{geodesic_deviation_rhs_general, lambda_factor};
use pathdev::deviation::jacobi::integrate_geodesic_deviation;
use pathdev::deviation::motion::{
    equation_of_motion_rhs, force_difference_term, infinitesimal_deviation_equation_residual, AnalyticFamily,
    ForcedFamily, ParticleFamily,
};
use pathdev::deviation::{DeviationScenario, Observer};
use pathdev::displacement::{composition_residual, displacement_vector, infinitesimal_displacement};
use pathdev::expr::{parse_with_variables, Expr};
use pathdev::geometry::{ConnectionManifold, VectorField};
use pathdev::oracles::{fd_second_deviation, fd_second_deviation_with, fit_order, refined_loop_rotation_angle, two_geodesic_separation, Stencil};
use pathdev::paths::{integrate_forced, integrate_geodesic, Congruence, Curve};
use pathdev::tensor::{Matrix, Vector};
use pathdev::transport::{compose_check, transport_matrix, TransportLaw};

use crate::config::{
    positive, CurveSpec, FamilySpec, IdentityTask, ManifoldSpec, ObserverSpec, ScenarioConfig, TaskConfig, TransportChoice,
};
use crate::error::CliError;

/// Evaluated grid: one row per grid point, the grid value first.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Summary statistics and oracle results derived from the rows.
    pub evidence: BTreeMap<String, Value>,
}

/// Everything written for one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub scenario_hash: String,
    pub version: String,
    pub task: String,
    pub manifold: String,
    pub grid_size: usize,
    pub wall_time_seconds: f64,
    #[serde(flatten)]
    pub table: Table,
    pub failure: Option<String>,
}

/// A run that may have stopped early; `record` then holds the rows computed
/// before the first failing grid point.
#[derive(Debug)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub error: Option<CliError>,
}

pub(crate) struct Prepared {
    manifold: ConnectionManifold,
    law: TransportLaw,
    job: Job,
}

type Family = Arc<dyn ParticleFamily>;
type Scalar2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

enum Job {
    Transport {
        curve: Curve,
        s: f64,
        ts: Vec<f64>,
        vector: Option<Vector>,
        closed_loop: bool,
    },
    Displacement {
        curve: Curve,
        s: f64,
        ts: Vec<f64>,
        r: Option<f64>,
    },
    Deviation {
        family: Family,
        s_interval: (f64, f64),
        r: (f64, f64),
        observer: Option<ObserverSpec>,
        ss: Vec<f64>,
    },
    Jacobi {
        base: Curve,
        h0: Vector,
        dh0: Vector,
        start: f64,
        us: Vec<f64>,
        reference: Option<Expr>,
        oracle_delta: Option<f64>,
    },
    Motion {
        family: Family,
        s_interval: (f64, f64),
        r: (f64, f64),
        observer: Option<ObserverSpec>,
        ss: Vec<f64>,
        lhs_step: f64,
    },
    Basic {
        u: VectorField,
        xi: VectorField,
        point: Vec<f64>,
        steps: Vec<f64>,
    },
    Congruence {
        congruence: Congruence,
        f: Option<Scalar2>,
        g: Option<Scalar2>,
        u: f64,
        v: (f64, f64),
        steps: Vec<f64>,
    },
    Nearby {
        family: Family,
        s_interval: (f64, f64),
        r: f64,
        offsets: Vec<f64>,
        s: f64,
        lhs_step: f64,
    },
    ObserverOffset {
        family: Family,
        s_interval: (f64, f64),
        r: (f64, f64),
        direction: Vec<String>,
        lengths: Vec<f64>,
        s: f64,
        steps: usize,
    },
}

fn coordinate_names(n: usize, prefix: &str) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn compile(key: &str, sources: &[String], vars: &[String]) -> Result<Vec<Expr>, CliError> {
    let names: Vec<&str> = vars.iter().map(String::as_str).collect();
    sources
        .iter()
        .enumerate()
        .map(|(i, src)| {
            parse_with_variables(src, &names).map_err(|e| CliError::invalid(&format!("{key}[{i}]"), e.to_string()))
        })
        .collect()
}

fn compile_one(key: &str, src: &str, vars: &[&str]) -> Result<Expr, CliError> {
    parse_with_variables(src, vars).map_err(|e| CliError::invalid(key, e.to_string()))
}

fn check_len(key: &str, got: usize, expected: usize) -> Result<(), CliError> {
    if got == expected {
        Ok(())
    } else {
        Err(CliError::invalid(key, format!("expected {expected} components, got {got}")))
    }
}

fn vector(key: &str, xs: &[f64], n: usize) -> Result<Vector, CliError> {
    check_len(key, xs.len(), n)?;
    Ok(Vector::from_column_slice(xs))
}

fn eval_all(exprs: &[Expr], vars: &[f64]) -> Vector {
    Vector::from_iterator(exprs.len(), exprs.iter().map(|e| e.eval(vars)))
}

fn build_manifold(spec: &ManifoldSpec) -> Result<ConnectionManifold, CliError> {
    match spec {
        ManifoldSpec::Named(name) => builtin(name).map_err(|e| CliError::invalid("manifold", e.to_string())),
        ManifoldSpec::Inline(inline) => {
            let n = inline.gamma.len();
            let domain = match &inline.domain {
                Some(src) => Some(compile("manifold.domain", std::slice::from_ref(src), &coordinate_names(n, "x"))?.remove(0)),
                None => None,
            };
            ConnectionManifold::from_expressions(&inline.name, &inline.gamma, move |x| {
                domain.as_ref().is_none_or(|d| d.eval(x) > 0.0)
            })
            .map_err(|e| CliError::invalid("manifold.gamma", e.to_string()))
        }
    }
}

fn build_curve(key: &str, spec: &CurveSpec, m: &ConnectionManifold, step: f64) -> Result<Curve, CliError> {
    let n = m.dim();
    let interval = (spec.interval[0], spec.interval[1]);
    if !(interval.0 < interval.1) {
        return Err(CliError::invalid(&format!("{key}.interval"), "must be increasing"));
    }
    match (&spec.expressions, &spec.initial_point, &spec.initial_velocity) {
        (Some(exprs), None, None) => {
            if spec.force.is_some() {
                return Err(CliError::invalid(&format!("{key}.force"), "only applies to integrated curves"));
            }
            check_len(&format!("{key}.expressions"), exprs.len(), n)?;
            compile(&format!("{key}.expressions"), exprs, &["t".to_string()])?;
            let refs: Vec<&str> = exprs.iter().map(String::as_str).collect();
            Curve::from_expressions(key, interval, &refs).map_err(|e| CliError::from_build(key, e))
        }
        (None, Some(x0), Some(v0)) => {
            let x0 = vector(&format!("{key}.initial_point"), x0, n)?;
            let v0 = vector(&format!("{key}.initial_velocity"), v0, n)?;
            match &spec.force {
                None => integrate_geodesic(m, &x0, &v0, interval, None, step),
                Some(force) => {
                    check_len(&format!("{key}.force"), force.len(), n)?;
                    let mut vars = vec!["t".to_string()];
                    vars.extend(coordinate_names(n, "x"));
                    vars.extend(coordinate_names(n, "v"));
                    let exprs = compile(&format!("{key}.force"), force, &vars)?;
                    let law = move |t: f64, x: &Vector, v: &Vector| {
                        let mut args = vec![t];
                        args.extend(x.iter());
                        args.extend(v.iter());
                        eval_all(&exprs, &args)
                    };
                    integrate_forced(m, &x0, &v0, &law, interval, step)
                }
            }
            .map_err(|e| CliError::from_build(key, e))
        }
        _ => Err(CliError::invalid(
            key,
            "give either `expressions` or both `initial_point` and `initial_velocity`",
        )),
    }
}

fn build_family(key: &str, spec: &FamilySpec, m: &ConnectionManifold, fd_step: f64) -> Result<Family, CliError> {
    let n = m.dim();
    if !(spec.s_interval[0] < spec.s_interval[1]) {
        return Err(CliError::invalid(&format!("{key}.s_interval"), "must be increasing"));
    }
    match (&spec.expressions, &spec.initial_point, &spec.initial_velocity) {
        (Some(exprs), None, None) => {
            if spec.force.is_some() || spec.s0.is_some() || spec.steps.is_some() {
                return Err(CliError::invalid(key, "`force`, `s0` and `steps` only apply to integrated families"));
            }
            check_len(&format!("{key}.expressions"), exprs.len(), n)?;
            compile(&format!("{key}.expressions"), exprs, &["s".to_string(), "r".to_string()])?;
            let refs: Vec<&str> = exprs.iter().map(String::as_str).collect();
            Ok(Arc::new(AnalyticFamily::from_expressions(&refs).map_err(|e| CliError::from_build(key, e))?))
        }
        (None, Some(x0), Some(v0)) => {
            check_len(&format!("{key}.initial_point"), x0.len(), n)?;
            check_len(&format!("{key}.initial_velocity"), v0.len(), n)?;
            let r = ["r".to_string()];
            let x0 = compile(&format!("{key}.initial_point"), x0, &r)?;
            let v0 = compile(&format!("{key}.initial_velocity"), v0, &r)?;
            let force = match &spec.force {
                Some(f) => {
                    check_len(&format!("{key}.force"), f.len(), n)?;
                    let mut vars = vec!["s".to_string(), "r".to_string()];
                    vars.extend(coordinate_names(n, "x"));
                    vars.extend(coordinate_names(n, "v"));
                    Some(compile(&format!("{key}.force"), f, &vars)?)
                }
                None => None,
            };
            let steps = spec.steps.unwrap_or(400);
            if steps == 0 {
                return Err(CliError::invalid(&format!("{key}.steps"), "must be at least 1"));
            }
            let initial = Arc::new(move |r: f64| (eval_all(&x0, &[r]), eval_all(&v0, &[r])));
            let law = Arc::new(move |s: f64, r: f64, x: &Vector, v: &Vector| match &force {
                Some(exprs) => {
                    let mut args = vec![s, r];
                    args.extend(x.iter());
                    args.extend(v.iter());
                    eval_all(exprs, &args)
                }
                None => Vector::zeros(x.len()),
            });
            let s0 = spec.s0.unwrap_or(spec.s_interval[0]);
            Ok(Arc::new(ForcedFamily::new(m.clone(), initial, law, s0, steps, fd_step)))
        }
        _ => Err(CliError::invalid(
            key,
            "give either `expressions` or both `initial_point` and `initial_velocity`",
        )),
    }
}

fn build_observer(key: &str, spec: &ObserverSpec, n: usize) -> Result<Observer, CliError> {
    check_len(&format!("{key}.direction"), spec.direction.len(), n)?;
    positive(&format!("{key}.length"), spec.length)?;
    if spec.steps == 0 {
        return Err(CliError::invalid(&format!("{key}.steps"), "must be at least 1"));
    }
    let dir = compile(&format!("{key}.direction"), &spec.direction, &["s".to_string()])?;
    Ok(Observer::Geodesic {
        direction: Arc::new(move |s| eval_all(&dir, &[s])),
        length: spec.length,
        steps: spec.steps,
    })
}

fn build_scalar(key: &str, src: &Option<String>) -> Result<Option<Scalar2>, CliError> {
    Ok(match src {
        Some(src) => {
            let e = compile_one(key, src, &["u", "v"])?;
            Some(Arc::new(move |u, v| e.eval(&[u, v])))
        }
        None => None,
    })
}

fn pair(xs: [f64; 2]) -> (f64, f64) {
    (xs[0], xs[1])
}

/// Compiles every expression and builds every object the task needs.
pub(crate) fn prepare(cfg: &ScenarioConfig) -> Result<Prepared, CliError> {
    let m = build_manifold(&cfg.manifold)?;
    let n = m.dim();
    let integ = cfg.integrator;
    let law = match cfg.transport {
        TransportChoice::Parallel => TransportLaw::parallel(m.clone(), integ.step),
        TransportChoice::Euclidean => TransportLaw::euclidean(integ.step),
    };
    let job = match &cfg.task {
        TaskConfig::Transport(t) => Job::Transport {
            curve: build_curve("task.curve", &t.curve, &m, integ.step)?,
            s: t.s,
            ts: t.t.points("task.t")?,
            vector: match &t.vector {
                Some(v) => Some(vector("task.vector", v, n)?),
                None => None,
            },
            closed_loop: t.closed_loop,
        },
        TaskConfig::Displacement(t) => Job::Displacement {
            curve: build_curve("task.curve", &t.curve, &m, integ.step)?,
            s: t.s,
            ts: t.t.points("task.t")?,
            r: t.r,
        },
        TaskConfig::Deviation(t) => {
            if let Some(o) = &t.observer {
                build_observer("task.observer", o, n)?;
            }
            Job::Deviation {
                family: build_family("task.family", &t.family, &m, integ.fd_step)?,
                s_interval: pair(t.family.s_interval),
                r: pair(t.r),
                observer: t.observer.clone(),
                ss: t.s.points("task.s")?,
            }
        }
        TaskConfig::Jacobi(t) => {
            let x0 = vector("task.x0", &t.x0, n)?;
            let u0 = vector("task.u0", &t.u0, n)?;
            let (a, b) = pair(t.interval);
            if !(a < b) {
                return Err(CliError::invalid("task.interval", "must be increasing"));
            }
            if let Some(d) = t.oracle_delta {
                positive("task.oracle_delta", d)?;
            }
            let us = t.u.points("task.u")?;
            if let Some(bad) = us.iter().find(|&&u| !(a..=b).contains(&u)) {
                return Err(CliError::invalid("task.u", format!("grid value {bad} outside the interval")));
            }
            Job::Jacobi {
                base: integrate_geodesic(&m, &x0, &u0, (a, b), None, integ.step)
                    .map_err(|e| CliError::from_build("task", e))?,
                h0: vector("task.h0", &t.h0, n)?,
                dh0: vector("task.dh0", &t.dh0, n)?,
                start: a,
                us,
                reference: match &t.reference {
                    Some(src) => Some(compile_one("task.reference", src, &["u"])?),
                    None => None,
                },
                oracle_delta: t.oracle_delta,
            }
        }
        TaskConfig::EquationOfMotion(t) => {
            if let Some(o) = &t.observer {
                build_observer("task.observer", o, n)?;
            }
            positive("task.lhs_step", t.lhs_step)?;
            Job::Motion {
                family: build_family("task.family", &t.family, &m, integ.fd_step)?,
                s_interval: pair(t.family.s_interval),
                r: pair(t.r),
                observer: t.observer.clone(),
                ss: t.s.points("task.s")?,
                lhs_step: t.lhs_step,
            }
        }
        TaskConfig::IdentityCheck(IdentityTask::Basic(c)) => {
            check_len("task.u", c.u.len(), n)?;
            check_len("task.xi", c.xi.len(), n)?;
            check_len("task.point", c.point.len(), n)?;
            let field = |key: &str, src: &[String]| -> Result<VectorField, CliError> {
                compile(key, src, &coordinate_names(n, "x"))?;
                let refs: Vec<&str> = src.iter().map(String::as_str).collect();
                VectorField::from_expressions(&refs).map_err(|e| CliError::from_build(key, e))
            };
            let steps = c.fd_steps.points("task.fd_steps")?;
            for h in &steps {
                positive("task.fd_steps", *h)?;
            }
            Job::Basic {
                u: field("task.u", &c.u)?,
                xi: field("task.xi", &c.xi)?,
                point: c.point.clone(),
                steps,
            }
        }
        TaskConfig::IdentityCheck(IdentityTask::Congruence(c)) => {
            check_len("task.surface", c.surface.len(), n)?;
            positive("task.surface_fd_step", c.surface_fd_step)?;
            let exprs = compile("task.surface", &c.surface, &["u".to_string(), "v".to_string()])?;
            let steps = c.fd_steps.points("task.fd_steps")?;
            for h in &steps {
                positive("task.fd_steps", *h)?;
            }
            Job::Congruence {
                congruence: Congruence::new(n, move |u, v| Ok(eval_all(&exprs, &[u, v])), c.surface_fd_step),
                f: build_scalar("task.f", &c.f)?,
                g: build_scalar("task.g", &c.g)?,
                u: c.u,
                v: pair(c.v),
                steps,
            }
        }
        TaskConfig::IdentityCheck(IdentityTask::NearbyParticles(c)) => {
            positive("task.lhs_step", c.lhs_step)?;
            Job::Nearby {
                family: build_family("task.family", &c.family, &m, integ.fd_step)?,
                s_interval: pair(c.family.s_interval),
                r: c.r,
                offsets: c.offsets.points("task.offsets")?,
                s: c.s,
                lhs_step: c.lhs_step,
            }
        }
        TaskConfig::IdentityCheck(IdentityTask::ObserverOffset(c)) => {
            check_len("task.direction", c.direction.len(), n)?;
            compile("task.direction", &c.direction, &["s".to_string()])?;
            Job::ObserverOffset {
                family: build_family("task.family", &c.family, &m, integ.fd_step)?,
                s_interval: pair(c.family.s_interval),
                r: pair(c.r),
                direction: c.direction.clone(),
                lengths: c.lengths.points("task.lengths")?,
                s: c.s,
                steps: c.steps,
            }
        }
    };
    Ok(Prepared { manifold: m, law, job })
}

/// Evaluates `f` at every grid value in parallel and keeps the rows in grid
/// order up to the first failure.
fn evaluate<F>(name: &str, grid: &[f64], f: F) -> (Vec<Vec<f64>>, Option<CliError>)
where
    F: Fn(f64) -> pathdev::Result<Vec<f64>> + Sync,
{
    let results: Vec<pathdev::Result<Vec<f64>>> = grid
        .par_iter()
        .map(|&x| {
            let mut row = vec![x];
            row.extend(f(x)?);
            Ok(row)
        })
        .collect();
    let mut rows = Vec::with_capacity(grid.len());
    for (index, (res, &value)) in results.into_iter().zip(grid).enumerate() {
        match res {
            Ok(row) => rows.push(row),
            Err(source) => {
                return (
                    rows,
                    Some(CliError::GridPoint {
                        index,
                        name: name.to_string(),
                        value,
                        source,
                    }),
                )
            }
        }
    }
    (rows, None)
}

fn column(table: &Table, name: &str) -> Vec<f64> {
    let idx = table.columns.iter().position(|c| c == name).expect("known column");
    table.rows.iter().map(|r| r[idx]).collect()
}

fn max_of(xs: &[f64]) -> Value {
    match xs.iter().cloned().reduce(f64::max) {
        Some(v) if v.is_finite() => json!(v),
        _ => Value::Null,
    }
}

/// Fitted power of `error ~ C·param^p`, or null when the data do not allow a fit.
fn order_of(params: &[f64], errors: &[f64]) -> Value {
    let mut pairs: Vec<(f64, f64)> = params.iter().map(|p| p.abs()).zip(errors.iter().cloned()).filter(|(p, _)| *p > 0.0).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (p, e): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    match fit_order(p, e) {
        Ok(report) => json!(report.fitted_order),
        Err(_) => Value::Null,
    }
}

fn vector_columns(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn observer_of(spec: &Option<ObserverSpec>, n: usize) -> Observer {
    match spec {
        Some(o) => build_observer("task.observer", o, n).expect("validated"),
        None => Observer::FirstParticle,
    }
}

/// Runs a configuration. Numerical failures stop the run at the failing grid
/// point; the rows before it are kept in the record.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutcome, CliError> {
    let started = Instant::now();
    let prepared = prepare(cfg)?;
    let (table, error) = execute(cfg, &prepared).map_err(CliError::Numerical)?;
    let manifold = match &cfg.manifold {
        ManifoldSpec::Named(name) => name.clone(),
        ManifoldSpec::Inline(inline) => inline.name.clone(),
    };
    let record = RunRecord {
        scenario_hash: cfg.hash(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        task: cfg.task.name().to_string(),
        manifold,
        grid_size: table.rows.len(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        table,
        failure: error.as_ref().map(|e| e.to_string()),
    };
    Ok(RunOutcome { record, error })
}

fn execute(cfg: &ScenarioConfig, p: &Prepared) -> pathdev::Result<(Table, Option<CliError>)> {
    let m = &p.manifold;
    let law = &p.law;
    let n = m.dim();
    let integ = cfg.integrator;
    let panels = integ.quad_panels;
    let mut table = Table::default();
    let error;
    match &p.job {
        Job::Transport {
            curve,
            s,
            ts,
            vector,
            closed_loop,
        } => {
            table.columns.push("t".into());
            match vector {
                Some(_) => table.columns.extend(vector_columns("v", n)),
                None => {
                    for i in 1..=n {
                        table.columns.extend((1..=n).map(|j| format!("h{i}_{j}")));
                    }
                }
            }
            table.columns.push("compose_residual".into());
            let end = curve.interval().1;
            let (rows, err) = evaluate("t", ts, |t| {
                let h = transport_matrix(law, curve, *s, t)?.h;
                let mut row: Vec<f64> = match vector {
                    Some(v) => (&h * v).iter().cloned().collect(),
                    None => h.transpose().iter().cloned().collect(),
                };
                row.push(compose_check(law, curve, *s, t, end)?);
                Ok(row)
            });
            table.rows = rows;
            error = err;
            let identity = transport_matrix(law, curve, *s, *s)?.h;
            table.evidence.insert("identity_exact".into(), json!(identity == Matrix::identity(n, n)));
            table.evidence.insert("max_compose_residual".into(), max_of(&column(&table, "compose_residual")));
            if *closed_loop {
                let (a, b) = curve.interval();
                let h = transport_matrix(law, curve, a, b)?.h;
                let deviation = (h - Matrix::identity(n, n)).amax();
                table.evidence.insert("loop_identity_error".into(), json!(deviation));
                if n == 2 && m.metric_at(curve.point_at(a)?.as_slice()).is_some() {
                    let (angle, correction) = refined_loop_rotation_angle(m, curve, integ.step)?;
                    table.evidence.insert("loop_rotation_angle".into(), json!(angle));
                    table.evidence.insert("loop_rotation_correction".into(), json!(correction));
                }
            }
        }
        Job::Displacement { curve, s, ts, r } => {
            table.columns.push("t".into());
            table.columns.extend(vector_columns("d", n));
            table.columns.push("coordinate_difference_error".into());
            table.columns.push("first_order_error".into());
            if r.is_some() {
                table.columns.push("composition_residual".into());
            }
            let (rows, err) = evaluate("t", ts, |t| {
                let d = displacement_vector(law, curve, *s, t, panels)?.vector.components;
                let chord = curve.point_at(t)? - curve.point_at(*s)?;
                let first = infinitesimal_displacement(curve, *s, t)?.components;
                let mut row: Vec<f64> = d.iter().cloned().collect();
                row.push((&d - chord).norm());
                row.push((&d - first).norm());
                if let Some(r) = r {
                    row.push(composition_residual(law, curve, *r, *s, t, panels)?);
                }
                Ok(row)
            });
            table.rows = rows;
            error = err;
            let offsets: Vec<f64> = column(&table, "t").iter().map(|t| t - s).collect();
            for name in ["coordinate_difference_error", "first_order_error"] {
                table.evidence.insert(format!("max_{name}"), max_of(&column(&table, name)));
            }
            table
                .evidence
                .insert("first_order_error_order".into(), order_of(&offsets, &column(&table, "first_order_error")));
            if r.is_some() {
                table
                    .evidence
                    .insert("max_composition_residual".into(), max_of(&column(&table, "composition_residual")));
            }
        }
        Job::Deviation {
            family,
            s_interval,
            r,
            observer,
            ss,
        } => {
            let scn = DeviationScenario::from_family(m.clone(), family.clone(), *r, *s_interval, observer_of(observer, n))?;
            table.columns.push("s".into());
            table.columns.extend(vector_columns("h", n));
            for c in ["matrix_form_discrepancy", "quadrature_error", "infinitesimal_error"] {
                table.columns.push(c.into());
            }
            let (rows, err) = evaluate("s", ss, |s| {
                let h = scn.deviation_vector(law, s, panels)?.components;
                let matrix_form = scn.deviation_vector_matrix_form(law, s, panels)?.components;
                let refined = scn.deviation_vector(law, s, 2 * panels)?.components;
                let zeta = scn.infinitesimal_deviation(s)?.components;
                let mut row: Vec<f64> = h.iter().cloned().collect();
                row.push((&h - matrix_form).norm());
                row.push((&h - refined).norm());
                row.push((&h - zeta).norm());
                Ok(row)
            });
            table.rows = rows;
            error = err;
            for name in ["matrix_form_discrepancy", "quadrature_error", "infinitesimal_error"] {
                table.evidence.insert(format!("max_{name}"), max_of(&column(&table, name)));
            }
        }
        Job::Jacobi {
            base,
            h0,
            dh0,
            start,
            us,
            reference,
            oracle_delta,
        } => {
            table.columns.push("u".into());
            table.columns.extend(vector_columns("h", n));
            table.columns.extend(vector_columns("dh", n));
            table.columns.push("norm".into());
            if reference.is_some() {
                table.columns.push("reference".into());
                table.columns.push("relative_error".into());
            }
            if oracle_delta.is_some() {
                table.columns.push("oracle_difference".into());
                table.columns.push("oracle_bound".into());
            }
            let x0 = base.point_at(*start)?;
            let u0 = base.tangent_at(*start)?;
            let raw_dv0 = dh0 - m.gamma(x0.as_slice())?.apply(&u0, h0);
            let (rows, err) = evaluate("u", us, |u| {
                let (h, dh) = if u == *start {
                    (h0.clone(), dh0.clone())
                } else {
                    let last = integrate_geodesic_deviation(m, base, h0, dh0, (*start, u), integ.step)?
                        .pop()
                        .expect("at least one node");
                    (last.h, last.dh)
                };
                let norm = m.norm(base.point_at(u)?.as_slice(), &h);
                let mut row: Vec<f64> = h.iter().chain(dh.iter()).cloned().collect();
                row.push(norm);
                if let Some(e) = reference {
                    let expected = e.eval(&[u]);
                    row.push(expected);
                    row.push((norm - expected).abs() / expected.abs());
                }
                if let Some(delta) = oracle_delta {
                    let est = two_geodesic_separation(m, base, h0, &raw_dv0, u, *delta, integ.step)?;
                    row.push((&h - &est.value).amax());
                    row.push(est.bound);
                }
                Ok(row)
            });
            table.rows = rows;
            error = err;
            if reference.is_some() {
                table.evidence.insert("max_relative_error".into(), max_of(&column(&table, "relative_error")));
            }
            if oracle_delta.is_some() {
                let ratios: Vec<f64> = column(&table, "oracle_difference")
                    .iter()
                    .zip(column(&table, "oracle_bound"))
                    .map(|(d, b)| d / b)
                    .collect();
                table.evidence.insert("max_oracle_ratio".into(), max_of(&ratios));
            }
        }
        Job::Motion {
            family,
            s_interval,
            r,
            observer,
            ss,
            lhs_step,
        } => {
            let scn = DeviationScenario::from_family(m.clone(), family.clone(), *r, *s_interval, observer_of(observer, n))?;
            table.columns.push("s".into());
            for prefix in ["lhs", "rhs", "observer", "mixed", "dynamical", "force_term"] {
                table.columns.extend(vector_columns(prefix, n));
            }
            for c in ["residual", "matrix_form_discrepancy", "quadrature_error"] {
                table.columns.push(c.into());
            }
            let (rows, err) = evaluate("s", ss, |s| {
                let lhs = fd_second_deviation(&scn, law, s, *lhs_step, panels)?;
                let terms = equation_of_motion_rhs(law, &scn, s, integ.fd_step, panels)?;
                let force = force_difference_term(law, &scn, s, integ.fd_step, panels)?;
                let h = scn.deviation_vector(law, s, panels)?.components;
                let matrix_form = scn.deviation_vector_matrix_form(law, s, panels)?.components;
                let refined = scn.deviation_vector(law, s, 2 * panels)?.components;
                let mut row: Vec<f64> = lhs.iter().cloned().collect();
                for part in [&terms.total, &terms.observer, &terms.mixed, &terms.dynamical, &force] {
                    row.extend(part.iter().cloned());
                }
                row.push((lhs - Vector::from_column_slice(&terms.total)).norm());
                row.push((&h - matrix_form).norm());
                row.push((&h - refined).norm());
                Ok(row)
            });
            table.rows = rows;
            error = err;
            for name in ["residual", "matrix_form_discrepancy", "quadrature_error"] {
                table.evidence.insert(format!("max_{name}"), max_of(&column(&table, name)));
            }
        }
        Job::Basic { u, xi, point, steps } => {
            table.columns.push("fd_step".into());
            table.columns.extend(vector_columns("lhs", n));
            table.columns.extend(vector_columns("rhs", n));
            table.columns.push("residual".into());
            let (rows, err) = evaluate("fd_step", steps, |h| {
                let terms = basic_equation_terms(m, u, xi, point, h)?;
                let rhs = terms.rhs();
                let mut row = terms.lhs.clone();
                row.extend(rhs.iter().cloned());
                row.push(terms.residual());
                Ok(row)
            });
            table.rows = rows;
            error = err;
            table
                .evidence
                .insert("fitted_order".into(), order_of(&column(&table, "fd_step"), &column(&table, "residual")));
        }
        Job::Congruence {
            congruence,
            f,
            g,
            u,
            v,
            steps,
        } => {
            let f_ref = f.as_deref().map(|f| f as &(dyn Fn(f64, f64) -> f64 + Sync));
            let g_ref = g.as_deref().map(|g| g as &(dyn Fn(f64, f64) -> f64 + Sync));
            let rhs = geodesic_deviation_rhs_general(m, congruence, *u, v.0, v.1, f_ref, g_ref, panels)?;
            let scn = DeviationScenario::from_congruence(m.clone(), congruence.clone(), *v, (*u - 1.0, *u + 1.0))?;
            table.columns.push("fd_step".into());
            table.columns.extend(vector_columns("lhs", n));
            table.columns.extend(vector_columns("rhs", n));
            table.columns.push("residual".into());
            let (rows, err) = evaluate("fd_step", steps, |h| {
                let lhs = fd_second_deviation_with(&scn, law, *u, h, panels, Stencil::ThreePoint)?;
                let mut row: Vec<f64> = lhs.iter().chain(rhs.iter()).cloned().collect();
                row.push((lhs - &rhs).norm());
                Ok(row)
            });
            table.rows = rows;
            error = err;
            table
                .evidence
                .insert("fitted_order".into(), order_of(&column(&table, "fd_step"), &column(&table, "residual")));
            if let Some(g) = g_ref {
                table
                    .evidence
                    .insert("lambda".into(), json!(lambda_factor(g, *u, v.0, v.1, panels)));
            }
        }
        Job::Nearby {
            family,
            s_interval,
            r,
            offsets,
            s,
            lhs_step,
        } => {
            table.columns.extend(["offset", "residual", "infinitesimal_error"].map(String::from));
            let (rows, err) = evaluate("offset", offsets, |dr| {
                let scn = DeviationScenario::from_family(m.clone(), family.clone(), (*r, r + dr), *s_interval, Observer::FirstParticle)?;
                let residual = infinitesimal_deviation_equation_residual(law, &scn, *s, *lhs_step, panels)?;
                let h = scn.deviation_vector(law, *s, panels)?.components;
                let zeta = scn.infinitesimal_deviation(*s)?.components;
                Ok(vec![residual, (h - zeta).norm()])
            });
            table.rows = rows;
            error = err;
            let offs = column(&table, "offset");
            table.evidence.insert("residual_order".into(), order_of(&offs, &column(&table, "residual")));
            table
                .evidence
                .insert("infinitesimal_error_order".into(), order_of(&offs, &column(&table, "infinitesimal_error")));
        }
        Job::ObserverOffset {
            family,
            s_interval,
            r,
            direction,
            lengths,
            s,
            steps,
        } => {
            table.columns.push("length".into());
            table.columns.extend(vector_columns("h", n));
            table.columns.push("infinitesimal_error".into());
            let (rows, err) = evaluate("length", lengths, |length| {
                let spec = ObserverSpec {
                    direction: direction.clone(),
                    length,
                    steps: *steps,
                };
                let observer = build_observer("task", &spec, n).map_err(|e| pathdev::Error::Configuration(e.to_string()))?;
                let scn = DeviationScenario::from_family(m.clone(), family.clone(), *r, *s_interval, observer)?;
                let h = scn.deviation_vector(law, *s, panels)?.components;
                let zeta = scn.infinitesimal_deviation(*s)?.components;
                let mut row: Vec<f64> = h.iter().cloned().collect();
                row.push((h - zeta).norm());
                Ok(row)
            });
            table.rows = rows;
            error = err;
            table.evidence.insert(
                "infinitesimal_error_order".into(),
                order_of(&column(&table, "length"), &column(&table, "infinitesimal_error")),
            );
        }
    }
    Ok((table, error))
}
