use std::io::Write;
use std::path::Path;

use carnot_core::geodesic::{control_oracle, shoot_distance};
use carnot_core::heisenberg::d0_squared_exact;
use carnot_core::hopflax::{hopf_lax_field, Problem};
use carnot_core::probe::{
    builtin_field, first_order_limit, semiconcavity_scan, standard_grid, FirstOrderLimit, GridSpec, ProbeConfig, ScaleSup,
    Verdict,
};
use carnot_core::{DistanceBackend, GroupSpec, HorizontalVec, Point};
use serde::Serialize;

use crate::config::Format;
use crate::error::{CliError, CliResult};
use crate::expr;
use crate::report::{fmt17, SCHEMA_VERSION};

/// Writes to the file when given, else to stdout.
pub fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct DistLine {
    pub schema_version: u32,
    pub group: String,
    pub point: Point,
    pub backend: String,
    pub d: f64,
    pub d2: f64,
    pub residual: f64,
}

pub fn dist(spec: &GroupSpec, point: &Point, backend: &DistanceBackend) -> CliResult<DistLine> {
    spec.check(point)?;
    let (d, residual) = match backend {
        DistanceBackend::Exact => (backend.d0(spec, point)?, 0.0),
        DistanceBackend::Shooting(opts) => {
            let r = shoot_distance(spec, point, opts)?;
            (r.distance, r.terminal_residual)
        }
        DistanceBackend::Oracle(opts) => {
            let r = control_oracle(spec, point, opts)?;
            (r.distance, r.residual)
        }
    };
    Ok(DistLine {
        schema_version: SCHEMA_VERSION,
        group: spec.name().to_string(),
        point: point.clone(),
        backend: backend.name().to_string(),
        d,
        d2: d * d,
        residual,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expectation {
    Bounded,
    Blowup,
    Limit(f64),
}

impl std::str::FromStr for Expectation {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "bounded" => Ok(Expectation::Bounded),
            "blowup" => Ok(Expectation::Blowup),
            _ => match s.strip_prefix("limit=") {
                Some(e) => Ok(Expectation::Limit(expr::eval(e)?)),
                None => Err(CliError::Config(format!("--expect takes bounded, blowup or limit=VALUE, not '{s}'"))),
            },
        }
    }
}

/// Parses `e1`, `e2`, … or a comma-separated vector, normalized.
pub fn parse_direction(spec: &GroupSpec, s: &str) -> CliResult<HorizontalVec> {
    let m = spec.horizontal_dim();
    if let Some(i) = s.strip_prefix('e').and_then(|i| i.parse::<usize>().ok()) {
        if i == 0 || i > m {
            return Err(CliError::Config(format!("direction {s} outside 1..={m}")));
        }
        return Ok(HorizontalVec::axis(m, i - 1));
    }
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Config(format!("cannot read direction '{s}'")))?;
    let h = HorizontalVec(v);
    if h.0.len() != m || !(h.norm() > 0.0) {
        return Err(CliError::Config(format!("direction '{s}' must be a nonzero {m}-vector")));
    }
    Ok(h.scaled(1.0 / h.norm()))
}

/// Identity plus a unit entry in the first coordinate of the top layer.
pub fn center_axis_point(spec: &GroupSpec) -> CliResult<Point> {
    let top = spec.layer_range(spec.step());
    if top.is_empty() {
        return Err(CliError::Config(format!("{} has an empty centre", spec.name())));
    }
    let mut p = spec.zero();
    p.0[top.start] = 1.0;
    Ok(p)
}

pub struct ProbeRequest {
    pub field: String,
    pub backend: DistanceBackend,
    pub points: Vec<Point>,
    pub grid: GridSpec,
    pub order: u8,
    pub directions: Option<Vec<HorizontalVec>>,
    pub ladder: Vec<f64>,
    pub seed: u64,
    pub expect: Option<Expectation>,
    pub tolerance: f64,
}

#[derive(Debug, Serialize)]
pub struct LimitEntry {
    pub point: Point,
    pub direction: HorizontalVec,
    #[serde(flatten)]
    pub result: FirstOrderLimit,
}

#[derive(Debug, Serialize)]
pub struct LimitReport {
    pub schema_version: u32,
    pub group: String,
    pub field: String,
    pub ladder: Vec<f64>,
    pub entries: Vec<LimitEntry>,
    pub expected: Option<f64>,
    pub tolerance: f64,
}

/// Runs the probe, writes its report, then checks the expectation.
pub fn probe(spec: &GroupSpec, req: &ProbeRequest, output: Option<&Path>, format: Format) -> CliResult<()> {
    let f = builtin_field(&req.field, spec, &req.backend)?;
    match req.order {
        1 => {
            let expected = match req.expect {
                None => None,
                Some(Expectation::Limit(v)) => Some(v),
                Some(_) => return Err(CliError::Config("--order 1 takes --expect limit=VALUE".into())),
            };
            if req.points.is_empty() {
                return Err(CliError::Config("--order 1 needs --point or --center-axis".into()));
            }
            let dirs = req
                .directions
                .clone()
                .unwrap_or_else(|| vec![HorizontalVec::axis(spec.horizontal_dim(), 0)]);
            let mut entries = Vec::new();
            for p in &req.points {
                for d in &dirs {
                    entries.push(LimitEntry {
                        point: p.clone(),
                        direction: d.clone(),
                        result: first_order_limit(&f, p, d, &req.ladder)?,
                    });
                }
            }
            let report = LimitReport {
                schema_version: SCHEMA_VERSION,
                group: spec.name().to_string(),
                field: req.field.clone(),
                ladder: req.ladder.clone(),
                entries,
                expected,
                tolerance: req.tolerance,
            };
            let text = match format {
                Format::Json => serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
                Format::Csv => {
                    let mut s = String::from("point,direction,limit,error_estimate,inconclusive\n");
                    for e in &report.entries {
                        s.push_str(&format!(
                            "{},{},{},{},{}\n",
                            join17(&e.point.0, ";"),
                            join17(&e.direction.0, ";"),
                            fmt17(e.result.limit),
                            fmt17(e.result.error_estimate),
                            e.result.inconclusive
                        ));
                    }
                    s
                }
            };
            emit(output, &text)?;
            if let Some(v) = expected {
                for e in &report.entries {
                    let rel = (e.result.limit - v).abs() / v.abs().max(f64::MIN_POSITIVE);
                    if e.result.inconclusive || !(rel <= req.tolerance) {
                        return Err(CliError::Expectation(format!(
                            "limit {} at {:?} differs from {v} by {rel:.3e} relative{}",
                            e.result.limit,
                            e.point.0,
                            if e.result.inconclusive { " (inconclusive)" } else { "" }
                        )));
                    }
                }
            }
            Ok(())
        }
        2 => {
            let grid = if req.points.is_empty() {
                let backend = req.backend.clone();
                let s = spec.clone();
                standard_grid(spec, &req.grid, move |p| backend.d0(&s, p))?
            } else {
                req.points.clone()
            };
            let config = ProbeConfig {
                ladder: req.ladder.clone(),
                directions: req.directions.clone(),
                seed: req.seed,
                ..Default::default()
            };
            let report = semiconcavity_scan(&f, &grid, &config)?;
            let text = match format {
                Format::Json => report.to_json() + "\n",
                Format::Csv => {
                    let mut buf = Vec::new();
                    report.write_csv(&mut buf)?;
                    String::from_utf8(buf).expect("csv is utf-8")
                }
            };
            emit(output, &text)?;
            let wanted = match &req.expect {
                None => return Ok(()),
                Some(Expectation::Bounded) => Verdict::Bounded,
                Some(Expectation::Blowup) => Verdict::Blowup,
                Some(Expectation::Limit(_)) => return Err(CliError::Config("limit expectations need --order 1".into())),
            };
            if report.verdict != wanted {
                return Err(CliError::Expectation(format!("verdict {} but expected {wanted}", report.verdict)));
            }
            Ok(())
        }
        o => Err(CliError::Config(format!("--order must be 1 or 2, not {o}"))),
    }
}

fn join17(v: &[f64], sep: &str) -> String {
    v.iter().map(|x| fmt17(*x)).collect::<Vec<_>>().join(sep)
}

#[derive(Debug, Serialize)]
struct ProbeLine<'a> {
    t: f64,
    probe: ProbeSummary<'a>,
}

#[derive(Debug, Serialize)]
struct ProbeSummary<'a> {
    verdict: Verdict,
    per_scale_sup: &'a [ScaleSup],
    points: usize,
}

/// One JSON line per `(t, p)`, then optionally one probe line per `t`.
pub fn hopflax(problem_path: &Path, probe_after_solve: bool, ladder: &[f64], seed: u64) -> CliResult<String> {
    let text = std::fs::read_to_string(problem_path)
        .map_err(|e| CliError::Config(format!("cannot read problem {}: {e}", problem_path.display())))?;
    let problem = Problem::from_json(&text)?;
    let mut out = String::new();
    for rec in problem.solve()? {
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    if probe_after_solve {
        let config = ProbeConfig {
            ladder: ladder.to_vec(),
            seed,
            ..Default::default()
        };
        for &t in &problem.times {
            let u = hopf_lax_field(&problem.spec, &problem.g, &problem.phi, t, &problem.backend, &problem.options)?;
            let report = semiconcavity_scan(&u, &problem.points, &config)?;
            let line = ProbeLine {
                t,
                probe: ProbeSummary {
                    verdict: report.verdict,
                    per_scale_sup: &report.per_scale_sup,
                    points: problem.points.len(),
                },
            };
            out.push_str(&serde_json::to_string(&line).expect("probe line serializes"));
            out.push('\n');
        }
    }
    Ok(out)
}

pub struct SliceWindow {
    pub x: (f64, f64),
    pub z: (f64, f64),
    pub nx: usize,
    pub nz: usize,
}

fn axis(range: (f64, f64), n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![range.0];
    }
    (0..n)
        .map(|i| ((n - 1 - i) as f64 * range.0 + i as f64 * range.1) / (n - 1) as f64)
        .collect()
}

/// CSV of `d₀²(x, 0, z)` over a rectangular window of the `y = 0` plane.
pub fn figure_slice(spec: &GroupSpec, w: &SliceWindow) -> CliResult<String> {
    if !carnot_core::geodesic::is_heisenberg(spec) {
        return Err(CliError::Config("figure-slice needs the Heisenberg group".into()));
    }
    if w.nx == 0 || w.nz == 0 || !(w.x.0 <= w.x.1) || !(w.z.0 <= w.z.1) {
        return Err(CliError::Config("empty slice window".into()));
    }
    let mut s = format!("# schema_version={SCHEMA_VERSION}\nx,z,d0sq\n");
    for x in axis(w.x, w.nx) {
        for z in axis(w.z, w.nz) {
            let v = d0_squared_exact(&Point(vec![x, 0.0, z]))?;
            s.push_str(&format!("{},{},{}\n", fmt17(x), fmt17(z), fmt17(v)));
        }
    }
    Ok(s)
}
