//! Metric Hopf-Lax solutions `u(t,p) = inf_q [g(q) + tΦ*(d(p,q)/t)]`,
//! Legendre-Fenchel conjugates, distance to finite sets and eikonal residuals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic::DistanceBackend;
use crate::group::{GroupSpec, HorizontalVec, Point};
use crate::optim::{self, NelderMeadOptions};
use crate::probe::ScalarField;

/// Convex, nondecreasing `Φ` on `[0, ∞)` with `Φ(0) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PhiSpec {
    /// `Φ(τ) = τ^α/α`, `α ∈ (1, 2]`.
    Power { alpha: f64 },
    /// `Φ(τ) = τ²/2`.
    Quadratic,
    /// Piecewise-linear interpolation of `(τ, Φ(τ))` nodes; `+∞` beyond the last node.
    Tabulated {
        tau: Vec<f64>,
        phi: Vec<f64>,
        /// Smallest slope increment found by validation.
        #[serde(default)]
        convexity_margin: f64,
    },
}

const CONVEXITY_TOL: f64 = 1e-10;

impl PhiSpec {
    pub fn power(alpha: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha <= 2.0) {
            return Err(Error::Validation(format!("power exponent must lie in (1, 2], got {alpha}")));
        }
        Ok(PhiSpec::Power { alpha })
    }

    /// Validates a table: starts at `(0, 0)`, strictly increasing `τ`,
    /// nondecreasing and convex values (slope increments ≥ −1e−10).
    pub fn tabulated(table: &[(f64, f64)]) -> Result<Self> {
        if table.len() < 2 {
            return Err(Error::Validation("tabulated Φ needs at least two nodes".into()));
        }
        if table[0] != (0.0, 0.0) {
            return Err(Error::Validation(format!("tabulated Φ must start at (0, 0), got {:?}", table[0])));
        }
        if table.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::Validation("tabulated Φ has non-finite entries".into()));
        }
        let tau: Vec<f64> = table.iter().map(|r| r.0).collect();
        let phi: Vec<f64> = table.iter().map(|r| r.1).collect();
        if tau.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("tabulated τ grid must be strictly increasing".into()));
        }
        let slopes: Vec<f64> = (1..tau.len()).map(|i| (phi[i] - phi[i - 1]) / (tau[i] - tau[i - 1])).collect();
        if slopes[0] < -CONVEXITY_TOL {
            return Err(Error::Validation("tabulated Φ is decreasing".into()));
        }
        let margin = slopes.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        if margin < -CONVEXITY_TOL {
            return Err(Error::Validation(format!("tabulated Φ is not convex (slope drop {:e})", -margin)));
        }
        Ok(PhiSpec::Tabulated {
            tau,
            phi,
            convexity_margin: if margin.is_finite() { margin } else { 0.0 },
        })
    }

    /// `Φ(τ)` for `τ ≥ 0`.
    pub fn value(&self, tau: f64) -> f64 {
        match self {
            PhiSpec::Power { alpha } => tau.powf(*alpha) / alpha,
            PhiSpec::Quadratic => 0.5 * tau * tau,
            PhiSpec::Tabulated { tau: t, phi, .. } => {
                if tau > *t.last().unwrap() {
                    return f64::INFINITY;
                }
                let i = t.partition_point(|x| *x <= tau).clamp(1, t.len() - 1);
                let w = (tau - t[i - 1]) / (t[i] - t[i - 1]);
                phi[i - 1] + w * (phi[i] - phi[i - 1])
            }
        }
    }

    /// `Φ′(τ)` for the smooth kinds.
    pub fn derivative(&self, tau: f64) -> Option<f64> {
        match self {
            PhiSpec::Power { alpha } => Some(tau.powf(alpha - 1.0)),
            PhiSpec::Quadratic => Some(tau),
            PhiSpec::Tabulated { .. } => None,
        }
    }
}

/// `Φ*(s) = sup_{τ≥0} {sτ − Φ(τ)}`.
pub fn legendre_conjugate(phi: &PhiSpec, s: f64) -> Result<f64> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("conjugate needs a finite s ≥ 0, got {s}")));
    }
    Ok(match phi {
        PhiSpec::Power { alpha } => {
            let beta = alpha / (alpha - 1.0);
            s.powf(beta) / beta
        }
        PhiSpec::Quadratic => 0.5 * s * s,
        PhiSpec::Tabulated { tau, phi: values, .. } => {
            let (k, best) = tau
                .iter()
                .zip(values)
                .map(|(t, v)| s * t - v)
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
            let lo = tau[k.saturating_sub(1)];
            let hi = tau[(k + 1).min(tau.len() - 1)];
            let (_, polished) = optim::golden_max(|x| s * x - phi.value(x), lo, hi, 1e-12 * (1.0 + hi));
            best.max(polished).max(0.0)
        }
    })
}

/// The initial datum `g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialDatum {
    Constant { value: f64 },
    /// `d(·, center)`.
    Distance { center: Point },
    /// `min(d(·, center), cap)`.
    TruncatedDistance { center: Point, cap: f64 },
    /// Distance to a finite cloud, optionally squared.
    SetDistance { points: Vec<Point>, squared: bool },
    /// Nearest-node lookup in a user table.
    Table { points: Vec<Point>, values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatumBounds {
    pub inf: f64,
    pub sup: f64,
    /// Lipschitz constant for the CC metric, when known.
    pub lipschitz: Option<f64>,
    /// `C` in `g(p) ≥ −C(1 + d₀(p))`, recorded for unbounded kinds.
    pub linear_lower_bound: Option<f64>,
}

impl InitialDatum {
    pub fn validate(&self, spec: &GroupSpec) -> Result<()> {
        match self {
            InitialDatum::Constant { value } if !value.is_finite() => {
                Err(Error::Validation("constant datum must be finite".into()))
            }
            InitialDatum::Distance { center } => spec.check(center),
            InitialDatum::TruncatedDistance { center, cap } => {
                if !(*cap > 0.0) || !cap.is_finite() {
                    return Err(Error::Validation(format!("cap must be positive, got {cap}")));
                }
                spec.check(center)
            }
            InitialDatum::SetDistance { points, .. } => {
                if points.is_empty() {
                    return Err(Error::Domain("distance to an empty set".into()));
                }
                points.iter().try_for_each(|p| spec.check(p))
            }
            InitialDatum::Table { points, values } => {
                if points.is_empty() || points.len() != values.len() {
                    return Err(Error::Validation("table needs matching, nonempty points and values".into()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Validation("table values must be finite".into()));
                }
                points.iter().try_for_each(|p| spec.check(p))
            }
            _ => Ok(()),
        }
    }

    pub fn bounds(&self) -> DatumBounds {
        match self {
            InitialDatum::Constant { value } => DatumBounds {
                inf: *value,
                sup: *value,
                lipschitz: Some(0.0),
                linear_lower_bound: None,
            },
            InitialDatum::Distance { .. } => DatumBounds {
                inf: 0.0,
                sup: f64::INFINITY,
                lipschitz: Some(1.0),
                linear_lower_bound: Some(0.0),
            },
            InitialDatum::TruncatedDistance { cap, .. } => DatumBounds {
                inf: 0.0,
                sup: *cap,
                lipschitz: Some(1.0),
                linear_lower_bound: None,
            },
            InitialDatum::SetDistance { squared, .. } => DatumBounds {
                inf: 0.0,
                sup: f64::INFINITY,
                lipschitz: (!squared).then_some(1.0),
                linear_lower_bound: Some(0.0),
            },
            InitialDatum::Table { values, .. } => DatumBounds {
                inf: values.iter().cloned().fold(f64::INFINITY, f64::min),
                sup: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                lipschitz: None,
                linear_lower_bound: None,
            },
        }
    }

    /// Points where `g` has a kink worth seeding the minimization at.
    fn landmarks(&self) -> Vec<Point> {
        match self {
            InitialDatum::Distance { center } | InitialDatum::TruncatedDistance { center, .. } => vec![center.clone()],
            InitialDatum::SetDistance { points, .. } | InitialDatum::Table { points, .. } => points.clone(),
            InitialDatum::Constant { .. } => Vec::new(),
        }
    }

    pub fn eval(&self, spec: &GroupSpec, backend: &DistanceBackend, p: &Point) -> Result<f64> {
        let v = match self {
            InitialDatum::Constant { value } => *value,
            InitialDatum::Distance { center } => backend.distance(spec, p, center)?,
            InitialDatum::TruncatedDistance { center, cap } => backend.distance(spec, p, center)?.min(*cap),
            InitialDatum::SetDistance { points, squared } => {
                let d = dist_to_set(spec, points, p, backend)?;
                if *squared {
                    d * d
                } else {
                    d
                }
            }
            InitialDatum::Table { points, values } => {
                spec.check(p)?;
                let k = points
                    .iter()
                    .enumerate()
                    .min_by(|a, b| p.euclidean_distance(a.1).total_cmp(&p.euclidean_distance(b.1)))
                    .map(|(k, _)| k)
                    .expect("validated nonempty");
                values[k]
            }
        };
        if !v.is_finite() {
            return Err(Error::Evaluation(format!("datum is not finite at {:?}", p.0)));
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopfLaxOptions {
    pub samples: usize,
    pub refine_from: usize,
    pub sequence_offset: u64,
}

impl Default for HopfLaxOptions {
    fn default() -> Self {
        Self {
            samples: 4096,
            refine_from: 8,
            sequence_offset: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HopfLaxResult {
    pub value: f64,
    pub argmin: Point,
    pub search_radius: f64,
    pub evaluations: usize,
    pub refinement_gap: f64,
}

/// Smallest `R` with `t·Φ*(R/t) ≥ target`, by bracketing and bisection.
pub fn search_radius(phi: &PhiSpec, t: f64, target: f64) -> Result<f64> {
    let f = |r: f64| -> Result<f64> { Ok(t * legendre_conjugate(phi, r / t)? - target) };
    let mut hi = 1.0;
    while f(hi)? < 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Config(format!(
                "no search radius reaches t·Φ*(R/t) = {target}; Φ* appears bounded"
            )));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(hi)
}

fn check_problem(spec: &GroupSpec, backend: &DistanceBackend, t: f64) -> Result<()> {
    if spec.step() != 2 {
        return Err(Error::Config(format!("Hopf-Lax solutions need a step-2 group, {} has step {}", spec.name(), spec.step())));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    backend.supports(spec)
}

#[derive(Clone, Debug)]
struct Trial {
    value: f64,
    gauge: f64,
    q: Point,
    w: Vec<f64>,
}

fn trial_order(a: &Trial, b: &Trial) -> std::cmp::Ordering {
    a.value
        .total_cmp(&b.value)
        .then(a.gauge.total_cmp(&b.gauge))
        .then_with(|| {
            a.q.0
                .iter()
                .zip(&b.q.0)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
}

/// Evaluates `u(t, p)` by seeded search over `q = p·w` in `B_CC(p, R)` and
/// simplex refinement from the best seeds.
pub fn hopf_lax_value(
    spec: &GroupSpec,
    g: &InitialDatum,
    phi: &PhiSpec,
    t: f64,
    p: &Point,
    backend: &DistanceBackend,
    opts: &HopfLaxOptions,
) -> Result<HopfLaxResult> {
    check_problem(spec, backend, t)?;
    g.validate(spec)?;
    spec.check(p)?;
    let n = spec.dim();
    let m = spec.horizontal_dim();
    let gp = g.eval(spec, backend, p)?;
    let b = g.bounds();
    let target = if b.sup.is_finite() { b.sup - b.inf + 1.0 } else { gp - b.inf + 1.0 };
    let radius = search_radius(phi, t, target)?;

    let objective = |w: &[f64]| -> Result<(f64, Point)> {
        let wp = Point(w.to_vec());
        let q = spec.multiply(p, &wp)?;
        let d = backend.d0(spec, &wp)?;
        Ok((g.eval(spec, backend, &q)? + t * legendre_conjugate(phi, d / t)?, q))
    };
    let make_trial = |w: Vec<f64>| -> Option<Trial> {
        let (value, q) = objective(&w).ok()?;
        let gauge = spec.homogeneous_norm(&q).ok()?;
        Some(Trial { value, gauge, q, w })
    };

    // |p⁽²⁾| ≤ C₀L²/2 along any horizontal curve of length L
    let c0 = spec.c0().unwrap_or(1.0).max(1e-12);
    let vertical = 0.5 * c0 * radius * radius;
    let gauge_cap = radius * (1.0 + 0.25 * c0 * c0).powf(0.25) * (1.0 + 1e-12);
    let mut seeds: Vec<Vec<f64>> = vec![vec![0.0; n]];
    for l in g.landmarks() {
        let w = spec.multiply(&spec.inverse(p)?, &l)?;
        seeds.push(w.0);
    }
    let mut index = opts.sequence_offset + 1;
    let mut drawn = 0;
    let mut kept = Vec::with_capacity(opts.samples);
    while kept.len() < opts.samples && drawn < 16 * opts.samples {
        let batch: Vec<Vec<f64>> = (0..opts.samples)
            .map(|k| {
                let u = optim::halton(index + k as u64, n);
                u.iter()
                    .enumerate()
                    .map(|(i, x)| (2.0 * x - 1.0) * if i < m { radius } else { vertical })
                    .collect()
            })
            .collect();
        index += opts.samples as u64;
        drawn += opts.samples;
        let inside: Vec<Vec<f64>> = batch
            .into_par_iter()
            .filter(|w| {
                spec.homogeneous_norm(&Point(w.clone())).map_or(false, |gn| gn <= gauge_cap)
                    && backend.d0(spec, &Point(w.clone())).map_or(false, |d| d <= radius)
            })
            .collect();
        kept.extend(inside);
    }
    kept.truncate(opts.samples);
    seeds.extend(kept);

    let mut trials: Vec<Trial> = seeds.par_iter().filter_map(|w| make_trial(w.clone())).collect();
    if trials.is_empty() {
        return Err(Error::Evaluation("no Hopf-Lax candidate could be evaluated".into()));
    }
    let mut evaluations = seeds.len();
    trials.sort_by(trial_order);
    let seed_best = trials[0].clone();
    let refined: Vec<(Trial, usize)> = trials
        .iter()
        .take(opts.refine_from)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|start| {
            let res = optim::nelder_mead(
                |w| objective(w).map_or(f64::INFINITY, |v| v.0),
                &start.w,
                &NelderMeadOptions {
                    max_iterations: 400,
                    initial_step: 0.05 * radius.max(1e-3),
                    f_tol: 1e-15,
                    x_tol: 1e-12,
                    ..Default::default()
                },
            );
            let trial = make_trial(res.x).unwrap_or_else(|| (*start).clone());
            (trial, res.evaluations)
        })
        .collect();
    let mut best = seed_best.clone();
    for (trial, evals) in refined {
        evaluations += evals;
        if trial_order(&trial, &best).is_lt() {
            best = trial;
        }
    }
    // q = p is always admissible
    let value = best.value.min(gp);
    Ok(HopfLaxResult {
        value,
        argmin: best.q,
        search_radius: radius,
        evaluations,
        refinement_gap: (seed_best.value - best.value).max(0.0),
    })
}

/// `p ↦ u(t, p)` as a probe-ready field.
pub fn hopf_lax_field(
    spec: &GroupSpec,
    g: &InitialDatum,
    phi: &PhiSpec,
    t: f64,
    backend: &DistanceBackend,
    opts: &HopfLaxOptions,
) -> Result<ScalarField> {
    check_problem(spec, backend, t)?;
    g.validate(spec)?;
    let (s, g, phi, backend, opts) = (spec.clone(), g.clone(), phi.clone(), backend.clone(), opts.clone());
    Ok(ScalarField::new(spec.clone(), format!("hopf-lax[t={t}]"), move |p| {
        hopf_lax_value(&s, &g, &phi, t, p, &backend, &opts).map(|r| r.value)
    }))
}

/// `min_{q ∈ S} d(p, q)`.
pub fn dist_to_set(spec: &GroupSpec, set: &[Point], p: &Point, backend: &DistanceBackend) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Domain("distance to an empty set".into()));
    }
    set.iter()
        .map(|q| backend.distance(spec, p, q))
        .try_fold(f64::INFINITY, |acc, d| d.map(|d| acc.min(d)))
}

/// `p ↦ d_S(p)` as a field.
pub fn set_distance_field(spec: &GroupSpec, set: Vec<Point>, backend: DistanceBackend, squared: bool) -> Result<ScalarField> {
    if set.is_empty() {
        return Err(Error::Domain("distance to an empty set".into()));
    }
    backend.supports(spec)?;
    let s = spec.clone();
    let label = if squared { "dS-squared" } else { "dS" };
    Ok(ScalarField::new(spec.clone(), label, move |p| {
        let d = dist_to_set(&s, &set, p, &backend)?;
        Ok(if squared { d * d } else { d })
    }))
}

/// Centered-difference horizontal gradient `(X_j f)(p)`.
pub fn fd_horizontal_gradient(f: &ScalarField, p: &Point, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::Domain(format!("step must be positive, got {step}")));
    }
    let spec = f.spec();
    let m = spec.horizontal_dim();
    (0..m)
        .map(|j| {
            let e = HorizontalVec::axis(m, j);
            let plus = f.eval(&spec.left_translate(p, &e, step)?)?;
            let minus = f.eval(&spec.left_translate(p, &e, -step)?)?;
            Ok((plus - minus) / (2.0 * step))
        })
        .collect()
}

/// `| |∇_H f(p)| − 1 |`. Points flagged by `exclude` are rejected as non-smooth.
pub fn eikonal_residual(f: &ScalarField, p: &Point, step: f64, exclude: Option<&dyn Fn(&Point) -> bool>) -> Result<f64> {
    if exclude.is_some_and(|ex| ex(p)) {
        return Err(Error::NonSmooth(format!("{:?} lies on an excluded locus", p.0)));
    }
    let grad = fd_horizontal_gradient(f, p, step)?;
    Ok((optim::l2(&grad) - 1.0).abs())
}

/// Either a single value or a list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
struct PhiDoc {
    kind: String,
    #[serde(default)]
    params: serde_json::Value,
    #[serde(default)]
    table: Option<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, Deserialize)]
struct DatumDoc {
    kind: String,
    #[serde(default)]
    params: serde_json::Value,
}

#[derive(Clone, Debug, Deserialize)]
struct ProblemDoc {
    #[serde(default)]
    schema_version: Option<u32>,
    group: String,
    phi: PhiDoc,
    g: DatumDoc,
    t: OneOrMany<f64>,
    points: Vec<Vec<f64>>,
    #[serde(default)]
    backend: Option<String>,
    #[serde(default)]
    samples: Option<usize>,
}

/// A parsed Hopf-Lax problem description.
#[derive(Clone, Debug)]
pub struct Problem {
    pub spec: GroupSpec,
    pub phi: PhiSpec,
    pub g: InitialDatum,
    pub times: Vec<f64>,
    pub points: Vec<Point>,
    pub backend: DistanceBackend,
    pub options: HopfLaxOptions,
}

fn param_f64(params: &serde_json::Value, key: &str) -> Result<f64> {
    params
        .get(key)
        .and_then(|v| v.as_f64())
        .ok_or_else(|| Error::Config(format!("missing numeric parameter '{key}'")))
}

fn param_point(spec: &GroupSpec, params: &serde_json::Value, key: &str) -> Result<Point> {
    match params.get(key) {
        None => Ok(spec.zero()),
        Some(v) => {
            let p: Point = serde_json::from_value(v.clone())?;
            spec.check(&p)?;
            Ok(p)
        }
    }
}

impl Problem {
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ProblemDoc = serde_json::from_str(text).map_err(|e| Error::Config(format!("bad problem document: {e}")))?;
        if let Some(v) = doc.schema_version {
            if v != 1 {
                return Err(Error::Config(format!("unsupported schema_version {v}")));
            }
        }
        let spec = GroupSpec::builtin(&doc.group).map_err(|e| Error::Config(e.to_string()))?;
        let phi = match doc.phi.kind.as_str() {
            "quadratic" => PhiSpec::Quadratic,
            "power" => PhiSpec::power(param_f64(&doc.phi.params, "alpha")?)?,
            "tabulated" => {
                let table = doc
                    .phi
                    .table
                    .ok_or_else(|| Error::Config("tabulated Φ needs a 'table'".into()))?;
                PhiSpec::tabulated(&table.iter().map(|r| (r[0], r[1])).collect::<Vec<_>>())?
            }
            other => return Err(Error::Config(format!("unknown Φ kind '{other}'"))),
        };
        let gp = &doc.g.params;
        let g = match doc.g.kind.as_str() {
            "constant" => InitialDatum::Constant {
                value: param_f64(gp, "value")?,
            },
            "zero" => InitialDatum::Constant { value: 0.0 },
            "distance" => InitialDatum::Distance {
                center: param_point(&spec, gp, "center")?,
            },
            "truncated-distance" => InitialDatum::TruncatedDistance {
                center: param_point(&spec, gp, "center")?,
                cap: param_f64(gp, "cap")?,
            },
            "set-distance" => InitialDatum::SetDistance {
                points: serde_json::from_value(gp.get("points").cloned().unwrap_or_default())
                    .map_err(|e| Error::Config(format!("set-distance points: {e}")))?,
                squared: gp.get("squared").and_then(|v| v.as_bool()).unwrap_or(false),
            },
            "table" => InitialDatum::Table {
                points: serde_json::from_value(gp.get("points").cloned().unwrap_or_default())
                    .map_err(|e| Error::Config(format!("table points: {e}")))?,
                values: serde_json::from_value(gp.get("values").cloned().unwrap_or_default())
                    .map_err(|e| Error::Config(format!("table values: {e}")))?,
            },
            other => return Err(Error::Config(format!("unknown datum kind '{other}'"))),
        };
        g.validate(&spec)?;
        let backend = match doc.backend.as_deref() {
            None if crate::geodesic::is_heisenberg(&spec) => DistanceBackend::Exact,
            None | Some("shooting") => DistanceBackend::Shooting(Default::default()),
            Some("exact") => DistanceBackend::Exact,
            Some("oracle") => DistanceBackend::Oracle(Default::default()),
            Some(other) => return Err(Error::Config(format!("unknown backend '{other}'"))),
        };
        backend.supports(&spec)?;
        let times = doc.t.to_vec();
        if times.is_empty() || times.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::Config("times must be positive".into()));
        }
        let points = doc
            .points
            .into_iter()
            .map(|c| {
                let p = Point(c);
                spec.check(&p).map(|_| p)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut options = HopfLaxOptions::default();
        if let Some(s) = doc.samples {
            options.samples = s.max(1);
        }
        Ok(Problem {
            spec,
            phi,
            g,
            times,
            points,
            backend,
            options,
        })
    }
}

/// One JSON-lines output record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HopfLaxRecord {
    pub t: f64,
    pub point: Point,
    pub value: f64,
    pub argmin: Point,
    pub search_radius: f64,
    pub evaluations: usize,
    pub refinement_gap: f64,
}

impl Problem {
    /// Solves every `(t, p)` pair, ordered by time then point.
    pub fn solve(&self) -> Result<Vec<HopfLaxRecord>> {
        let mut out = Vec::new();
        for &t in &self.times {
            for p in &self.points {
                let r = hopf_lax_value(&self.spec, &self.g, &self.phi, t, p, &self.backend, &self.options)?;
                out.push(HopfLaxRecord {
                    t,
                    point: p.clone(),
                    value: r.value,
                    argmin: r.argmin,
                    search_radius: r.search_radius,
                    evaluations: r.evaluations,
                    refinement_gap: r.refinement_gap,
                });
            }
        }
        Ok(out)
    }
}
