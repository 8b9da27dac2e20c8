//! Horizontal second differences, semiconcavity scans and finite-difference
//! horizontal Hessians of scalar fields on a group.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic::DistanceBackend;
use crate::group::{GroupSpec, HorizontalVec, Point};
use crate::heisenberg;

pub type EvalFn = Arc<dyn Fn(&Point) -> Result<f64> + Send + Sync>;

/// A deterministic real function on a group.
#[derive(Clone)]
pub struct ScalarField {
    spec: GroupSpec,
    label: String,
    eval: EvalFn,
    euclidean: bool,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("group", &self.spec.name())
            .field("label", &self.label)
            .field("euclidean", &self.euclidean)
            .finish()
    }
}

impl ScalarField {
    pub fn new<F>(spec: GroupSpec, label: impl Into<String>, eval: F) -> Self
    where
        F: Fn(&Point) -> Result<f64> + Send + Sync + 'static,
    {
        ScalarField {
            spec,
            label: label.into(),
            eval: Arc::new(eval),
            euclidean: false,
        }
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, p: &Point) -> Result<f64> {
        let v = (self.eval)(p)?;
        if v.is_nan() {
            return Err(Error::Evaluation(format!("{} returned NaN at {:?}", self.label, p.0)));
        }
        Ok(v)
    }

    /// Switches displacements to Euclidean addition. Only the abelian
    /// regression group accepts this, where both notions agree.
    pub fn with_euclidean_displacement(mut self) -> Result<Self> {
        if self.spec.step() != 2 || self.spec.layer_dims()[1] != 0 {
            return Err(Error::Config(format!(
                "euclidean displacement is reserved for abelian groups, not {}",
                self.spec.name()
            )));
        }
        self.euclidean = true;
        Ok(self)
    }

    fn displaced(&self, p: &Point, h: &HorizontalVec, sign: f64) -> Result<Point> {
        if self.euclidean {
            self.spec.check(p)?;
            let mut q = p.clone();
            for (c, v) in q.0.iter_mut().zip(&h.0) {
                *c += sign * v;
            }
            Ok(q)
        } else {
            self.spec.left_translate(p, h, sign)
        }
    }

    /// `d₀` through the given backend.
    pub fn distance(spec: GroupSpec, backend: DistanceBackend) -> Result<Self> {
        backend.supports(&spec)?;
        let s = spec.clone();
        let label = format!("d0[{}]", backend.name());
        Ok(ScalarField::new(spec, label, move |p| backend.d0(&s, p)))
    }

    /// `d₀²` through the given backend; the exact backend uses the closed form directly.
    pub fn distance_squared(spec: GroupSpec, backend: DistanceBackend) -> Result<Self> {
        backend.supports(&spec)?;
        if backend == DistanceBackend::Exact {
            return Ok(ScalarField::new(spec, "d0sq[exact]", heisenberg::d0_squared_exact));
        }
        let s = spec.clone();
        let label = format!("d0sq[{}]", backend.name());
        Ok(ScalarField::new(spec, label, move |p| backend.d0(&s, p).map(|d| d * d)))
    }

    /// `|p⁽¹⁾|²`.
    pub fn horizontal_square(spec: GroupSpec) -> Self {
        let m = spec.horizontal_dim();
        let s = spec.clone();
        ScalarField::new(spec, "horizontal-sq", move |p| {
            s.check(p)?;
            Ok(p.0[..m].iter().map(|v| v * v).sum())
        })
    }

    pub fn negated(self) -> Self {
        let inner = self.eval.clone();
        ScalarField {
            label: format!("-{}", self.label),
            eval: Arc::new(move |p| inner(p).map(|v| -v)),
            ..self
        }
    }

    pub fn scaled(self, c: f64) -> Self {
        let inner = self.eval.clone();
        ScalarField {
            label: format!("{c}*{}", self.label),
            eval: Arc::new(move |p| inner(p).map(|v| c * v)),
            ..self
        }
    }
}

/// `Ψ ∘ f` for a profile `Ψ` on `[0, ∞)`.
pub fn compose_with_psi<P>(label: &str, psi: P, f: ScalarField) -> ScalarField
where
    P: Fn(f64) -> f64 + Send + Sync + 'static,
{
    let inner = f.eval.clone();
    ScalarField {
        label: format!("{label}({})", f.label),
        eval: Arc::new(move |p| inner(p).map(&psi)),
        ..f
    }
}

/// Field names understood by [`builtin_field`].
pub const BUILTIN_FIELDS: [&str; 5] = ["d0", "d0sq", "neg-d0sq", "d0cube", "horizontal-sq"];

pub fn builtin_field(name: &str, spec: &GroupSpec, backend: &DistanceBackend) -> Result<ScalarField> {
    let spec = spec.clone();
    match name {
        "d0" => ScalarField::distance(spec, backend.clone()),
        "d0sq" => ScalarField::distance_squared(spec, backend.clone()),
        "neg-d0sq" => Ok(ScalarField::distance_squared(spec, backend.clone())?.negated()),
        "d0cube" => Ok(compose_with_psi("cube", |t| t * t * t, ScalarField::distance(spec, backend.clone())?)),
        "horizontal-sq" => Ok(ScalarField::horizontal_square(spec)),
        other => Err(Error::Config(format!(
            "unknown field '{other}', expected one of {}",
            BUILTIN_FIELDS.join(", ")
        ))),
    }
}

fn check_direction(spec: &GroupSpec, h: &HorizontalVec) -> Result<()> {
    if h.0.len() != spec.horizontal_dim() {
        return Err(Error::Dimension {
            layer: format!("layer 1 of {} (direction)", spec.name()),
            expected: spec.horizontal_dim(),
            got: h.0.len(),
        });
    }
    Ok(())
}

/// `f(p·h) + f(p·h⁻¹) − 2f(p)`.
pub fn second_diff(f: &ScalarField, p: &Point, h: &HorizontalVec) -> Result<f64> {
    let center = f.eval(p)?;
    second_diff_with_center(f, p, h, center)
}

fn second_diff_with_center(f: &ScalarField, p: &Point, h: &HorizontalVec, center: f64) -> Result<f64> {
    check_direction(&f.spec, h)?;
    let plus = f.eval(&f.displaced(p, h, 1.0)?)?;
    let minus = f.eval(&f.displaced(p, h, -1.0)?)?;
    Ok((plus + minus) - 2.0 * center)
}

pub const DEFAULT_LADDER: [f64; 5] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub ladder: Vec<f64>,
    /// Explicit unit directions; when absent the coordinate axes plus
    /// `random_directions` seeded unit vectors are used at every point.
    pub directions: Option<Vec<HorizontalVec>>,
    pub random_directions: usize,
    pub seed: u64,
    /// Largest tolerated fraction of failed evaluations.
    pub failure_tolerance: f64,
    /// Relative spread of the last two suprema accepted as stable.
    pub stability: f64,
    /// Level-over-level growth treated as blow-up.
    pub blowup_factor: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            ladder: DEFAULT_LADDER.to_vec(),
            directions: None,
            random_directions: 8,
            seed: 0,
            failure_tolerance: 0.01,
            stability: 0.1,
            blowup_factor: 2.0,
        }
    }
}

impl ProbeConfig {
    fn validate(&self, m: usize) -> Result<()> {
        if self.ladder.len() < 3 {
            return Err(Error::Config(format!("ladder needs at least 3 levels, got {}", self.ladder.len())));
        }
        if self.ladder.iter().any(|h| !(*h > 0.0) || !h.is_finite()) || self.ladder.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("ladder must be positive and strictly decreasing".into()));
        }
        if let Some(dirs) = &self.directions {
            if dirs.is_empty() {
                return Err(Error::Config("direction set is empty".into()));
            }
            for d in dirs {
                if d.0.len() != m || (d.norm() - 1.0).abs() > 1e-12 {
                    return Err(Error::Config(format!("directions must be unit vectors of length {m}")));
                }
            }
        }
        Ok(())
    }

    fn directions_at(&self, m: usize, index: usize) -> Vec<HorizontalVec> {
        if let Some(d) = &self.directions {
            return d.clone();
        }
        let mut dirs: Vec<HorizontalVec> = (0..m).map(|i| HorizontalVec::axis(m, i)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (index as u64).wrapping_mul(0x2545_F491_4F6C_DD1D));
        while dirs.len() < m + self.random_directions {
            let v: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = crate::optim::l2(&v);
            if n > 1e-3 {
                dirs.push(HorizontalVec(v.iter().map(|x| x / n).collect()));
            }
        }
        dirs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSample {
    pub point: Point,
    pub h: HorizontalVec,
    pub second_diff: f64,
    pub quotient2: f64,
    pub quotient1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Bounded,
    Blowup,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Bounded => "bounded",
            Verdict::Blowup => "blowup",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSup {
    pub level: f64,
    pub sup: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeReport {
    pub schema_version: u32,
    pub group: String,
    pub field: String,
    pub config: ProbeConfig,
    pub samples: Vec<ProbeSample>,
    pub per_scale_sup: Vec<ScaleSup>,
    pub verdict: Verdict,
    pub failures: Vec<String>,
}

impl ProbeReport {
    /// Supremum of `quotient2` at the finest level.
    pub fn final_sup(&self) -> f64 {
        self.per_scale_sup.last().map_or(f64::NAN, |s| s.sup)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// One sample per row: `level, p_1..p_n, h_1..h_m, second_diff, quotient2, quotient1`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let (n, m) = self
            .samples
            .first()
            .map_or((0, 0), |s| (s.point.len(), s.h.0.len()));
        let mut header = vec!["level".to_string()];
        header.extend((1..=n).map(|i| format!("p_{i}")));
        header.extend((1..=m).map(|i| format!("h_{i}")));
        header.extend(["second_diff", "quotient2", "quotient1"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for s in &self.samples {
            let mut row = vec![format!("{:.16e}", s.h.norm())];
            row.extend(s.point.0.iter().chain(&s.h.0).map(|v| format!("{v:.16e}")));
            row.extend([s.second_diff, s.quotient2, s.quotient1].iter().map(|v| format!("{v:.16e}")));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn lex(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Classifies a sequence of per-level suprema.
pub fn classify(sups: &[f64], stability: f64, blowup_factor: f64) -> Verdict {
    if sups.len() < 2 || sups.iter().any(|s| !s.is_finite()) {
        return Verdict::Inconclusive;
    }
    if sups.windows(2).all(|w| w[0] > 0.0 && w[1] >= blowup_factor * w[0]) {
        return Verdict::Blowup;
    }
    let (a, b) = (sups[sups.len() - 2], sups[sups.len() - 1]);
    let scale = a.abs().max(b.abs());
    if (a - b).abs() <= stability * scale || scale <= 1e-12 {
        return Verdict::Bounded;
    }
    Verdict::Inconclusive
}

/// Horizontal second-difference quotients of `f` over `grid`, for every ladder level and direction.
pub fn semiconcavity_scan(f: &ScalarField, grid: &[Point], config: &ProbeConfig) -> Result<ProbeReport> {
    let m = f.spec.horizontal_dim();
    config.validate(m)?;
    if grid.is_empty() {
        return Err(Error::Config("probe grid is empty".into()));
    }
    for p in grid {
        f.spec.check(p)?;
    }
    let centers: Vec<Result<f64>> = grid.par_iter().map(|p| f.eval(p)).collect();

    let mut tasks = Vec::new();
    for (i, p) in grid.iter().enumerate() {
        for dir in config.directions_at(m, i) {
            for &level in &config.ladder {
                tasks.push((i, p, dir.scaled(level)));
            }
        }
    }
    let outcomes: Vec<Result<ProbeSample>> = tasks
        .par_iter()
        .map(|(i, p, h)| {
            let center = centers[*i].clone()?;
            let sd = second_diff_with_center(f, p, h, center)?;
            let t = h.norm();
            Ok(ProbeSample {
                point: (*p).clone(),
                h: h.clone(),
                second_diff: sd,
                quotient2: sd / (t * t),
                quotient1: sd / t,
            })
        })
        .collect();

    let mut samples = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (o, (_, p, h)) in outcomes.into_iter().zip(&tasks) {
        match o {
            Ok(s) => samples.push(s),
            Err(e) => failures.push(format!("p = {:?}, h = {:?}: {e}", p.0, h.0)),
        }
    }
    if failures.len() as f64 > config.failure_tolerance * tasks.len() as f64 {
        return Err(Error::Evaluation(format!(
            "{} of {} probe evaluations failed; first: {}",
            failures.len(),
            tasks.len(),
            failures[0]
        )));
    }
    samples.sort_by(|a, b| {
        b.h.norm()
            .total_cmp(&a.h.norm())
            .then_with(|| lex(&a.point.0, &b.point.0))
            .then_with(|| lex(&a.h.0, &b.h.0))
    });

    let mut by_level: BTreeMap<usize, f64> = BTreeMap::new();
    for s in &samples {
        let t = s.h.norm();
        let k = config
            .ladder
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(k, _)| k)
            .unwrap_or(0);
        let e = by_level.entry(k).or_insert(f64::NEG_INFINITY);
        *e = e.max(s.quotient2);
    }
    let per_scale_sup: Vec<ScaleSup> = config
        .ladder
        .iter()
        .enumerate()
        .map(|(k, &level)| ScaleSup {
            level,
            sup: by_level.get(&k).copied().unwrap_or(f64::NAN),
        })
        .collect();
    let sups: Vec<f64> = per_scale_sup.iter().map(|s| s.sup).collect();
    Ok(ProbeReport {
        schema_version: 1,
        group: f.spec.name().to_string(),
        field: f.label.clone(),
        config: config.clone(),
        samples,
        per_scale_sup,
        verdict: classify(&sups, config.stability, config.blowup_factor),
        failures,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FirstOrderLimit {
    pub limit: f64,
    pub error_estimate: f64,
    /// `(|h|, quotient1)` per ladder level.
    pub raw: Vec<(f64, f64)>,
    pub inconclusive: bool,
}

/// Polynomial extrapolation to `h = 0` through the given nodes (Neville).
fn extrapolate_to_zero(nodes: &[(f64, f64)]) -> f64 {
    let mut p: Vec<f64> = nodes.iter().map(|n| n.1).collect();
    let h: Vec<f64> = nodes.iter().map(|n| n.0).collect();
    let k = p.len();
    for level in 1..k {
        for i in 0..k - level {
            let (a, b) = (h[i], h[i + level]);
            p[i] = (a * p[i + 1] - b * p[i]) / (a - b);
        }
    }
    p[0]
}

/// Limit of `second_diff / |h|` as `h → 0` along `dir`, by Richardson
/// extrapolation of the finest three ladder levels.
pub fn first_order_limit(f: &ScalarField, p: &Point, dir: &HorizontalVec, ladder: &[f64]) -> Result<FirstOrderLimit> {
    let m = f.spec.horizontal_dim();
    ProbeConfig {
        ladder: ladder.to_vec(),
        directions: Some(vec![dir.clone()]),
        ..Default::default()
    }
    .validate(m)?;
    let center = f.eval(p)?;
    let raw = ladder
        .par_iter()
        .map(|&t| second_diff_with_center(f, p, &dir.scaled(t), center).map(|sd| (t, sd / t)))
        .collect::<Result<Vec<_>>>()?;
    let diffs: Vec<f64> = raw.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let monotone = diffs.iter().all(|d| *d >= 0.0) || diffs.iter().all(|d| *d <= 0.0);
    let k = raw.len();
    let limit = extrapolate_to_zero(&raw[k - 3..]);
    let coarse = extrapolate_to_zero(&raw[k - 2..]);
    Ok(FirstOrderLimit {
        limit,
        error_estimate: (limit - coarse).abs(),
        raw,
        inconclusive: !monotone,
    })
}

/// Symmetric `n₁ × n₁` horizontal Hessian from second differences along
/// group-translated rays; off-diagonal entries by polarization on `(eᵢ ± eⱼ)/√2`.
pub fn fd_horizontal_hessian(f: &ScalarField, p: &Point, step: f64) -> Result<Vec<Vec<f64>>> {
    if !(step > 0.0) {
        return Err(Error::Domain(format!("step must be positive, got {step}")));
    }
    let m = f.spec.horizontal_dim();
    let center = f.eval(p)?;
    let dd = |h: Vec<f64>| -> Result<f64> {
        let h = HorizontalVec(h).scaled(step);
        Ok(second_diff_with_center(f, p, &h, center)? / (step * step))
    };
    let mut hess = vec![vec![0.0; m]; m];
    for i in 0..m {
        hess[i][i] = dd(HorizontalVec::axis(m, i).0)?;
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..m {
        for j in i + 1..m {
            let mut plus = vec![0.0; m];
            let mut minus = vec![0.0; m];
            plus[i] = r;
            plus[j] = r;
            minus[i] = r;
            minus[j] = -r;
            let v = 0.5 * (dd(plus)? - dd(minus)?);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    Ok(hess)
}

/// Counts for [`standard_grid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub include_origin: bool,
    pub axis: usize,
    pub sphere: usize,
    pub bulk: usize,
    /// Half-width of the coordinate box for bulk points and the axis range.
    pub extent: f64,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            include_origin: true,
            axis: 20,
            sphere: 40,
            bulk: 100,
            extent: 2.0,
            seed: 0,
        }
    }
}

/// The origin, points on the centre `p⁽¹⁾ = 0`, points on the unit sphere of
/// `d0`, and seeded bulk points in a coordinate box.
pub fn standard_grid<D>(spec: &GroupSpec, grid: &GridSpec, d0: D) -> Result<Vec<Point>>
where
    D: Fn(&Point) -> Result<f64>,
{
    let n = spec.dim();
    let m = spec.horizontal_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);
    let mut out = Vec::new();
    if grid.include_origin {
        out.push(spec.zero());
    }
    for k in 0..grid.axis {
        // alternate signs, magnitudes spread over (0, extent]
        let mag = grid.extent * (k / 2 + 1) as f64 / grid.axis.div_ceil(2) as f64;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let mut c = vec![0.0; n];
        if n > m {
            let dir: Vec<f64> = (m..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = crate::optim::l2(&dir).max(1e-12);
            for (i, v) in dir.iter().enumerate() {
                c[m + i] = sign * mag * v / norm;
            }
        }
        out.push(Point(c));
    }
    let mut sphere = 0;
    while sphere < grid.sphere {
        let raw: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let p = Point(raw);
        let d = d0(&p)?;
        if d > 1e-6 {
            out.push(spec.dilate(1.0 / d, &p)?);
            sphere += 1;
        }
    }
    for _ in 0..grid.bulk {
        let c: Vec<f64> = (0..n)
            .map(|_| grid.extent * (2.0 * rand::Rng::gen::<f64>(&mut rng) - 1.0))
            .collect();
        out.push(Point(c));
    }
    Ok(out)
}
