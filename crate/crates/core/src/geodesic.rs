//! Normal extremals, the endpoint map, shooting distances and a
//! control-discretization distance oracle.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{GroupSpec, Law, Point};
use crate::heisenberg;
use crate::optim::{self, BfgsOptions, NelderMeadOptions};

/// Dual coordinates at a base point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Covector(pub Vec<f64>);

impl Covector {
    pub fn new(xi: Vec<f64>) -> Self {
        Covector(xi)
    }

    pub fn norm(&self) -> f64 {
        optim::l2(&self.0)
    }
}

/// A sampled normal extremal on `[0, 1]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtremalPath {
    pub times: Vec<f64>,
    pub points: Vec<Point>,
    pub covectors: Vec<Covector>,
    pub energy: f64,
    pub hamiltonian_drift: f64,
}

impl ExtremalPath {
    pub fn endpoint(&self) -> &Point {
        self.points.last().expect("paths have at least one node")
    }

    /// Largest change of any covector component beyond the first layer.
    pub fn vertical_covector_drift(&self, spec: &GroupSpec) -> f64 {
        let m = spec.horizontal_dim();
        let first = &self.covectors[0].0;
        self.covectors
            .iter()
            .flat_map(|c| c.0[m..].iter().zip(&first[m..]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }

    /// CSV with columns `t, p_1..p_n, xi_1..xi_n`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.points.first().map_or(0, |p| p.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("p_{i}")));
        header.extend((1..=n).map(|i| format!("xi_{i}")));
        writeln!(w, "{}", header.join(","))?;
        for ((t, p), xi) in self.times.iter().zip(&self.points).zip(&self.covectors) {
            let mut row = vec![format!("{t:.16e}")];
            row.extend(p.0.iter().map(|v| format!("{v:.16e}")));
            row.extend(xi.0.iter().map(|v| format!("{v:.16e}")));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Flattened vector-field data for the inner integration loops.
#[derive(Clone, Debug)]
struct Dynamics {
    m: usize,
    n2: usize,
    /// `b[(k·m + i)·m + j] = B_k[i][j]`; empty for the Engel law.
    b: Vec<f64>,
    engel: bool,
}

impl Dynamics {
    fn new(spec: &GroupSpec) -> Self {
        let m = spec.horizontal_dim();
        match spec.law() {
            Law::Bilinear { matrices } => Dynamics {
                m,
                n2: matrices.len(),
                b: matrices.iter().flatten().flatten().copied().collect(),
                engel: false,
            },
            Law::Engel => Dynamics {
                m,
                n2: 0,
                b: Vec::new(),
                engel: true,
            },
        }
    }

    /// Controls `u_j = ⟨ξ, X_j(p)⟩`.
    fn controls(&self, p: &[f64], xi: &[f64], u: &mut [f64]) {
        let m = self.m;
        if self.engel {
            let (x, y, z) = (p[0], p[1], p[2]);
            u[0] = xi[0] - 0.5 * y * xi[2] - (x * y / 12.0 + 0.5 * z) * xi[3];
            u[1] = xi[1] + 0.5 * x * xi[2] + x * x / 12.0 * xi[3];
            return;
        }
        u[..m].copy_from_slice(&xi[..m]);
        for k in 0..self.n2 {
            let lam = xi[m + k];
            if lam == 0.0 {
                continue;
            }
            let bk = &self.b[k * m * m..(k + 1) * m * m];
            for i in 0..m {
                let pi = lam * p[i];
                let row = &bk[i * m..(i + 1) * m];
                for j in 0..m {
                    u[j] += pi * row[j];
                }
            }
        }
    }

    /// Right-hand side of Hamilton's equations for `H = ½ Σ ⟨ξ, X_j(p)⟩²`.
    fn rhs(&self, p: &[f64], xi: &[f64], u: &mut [f64], dp: &mut [f64], dxi: &mut [f64]) {
        let m = self.m;
        self.controls(p, xi, u);
        if self.engel {
            let (x, y, z) = (p[0], p[1], p[2]);
            let (u1, u2) = (u[0], u[1]);
            dp[0] = u1;
            dp[1] = u2;
            dp[2] = -0.5 * y * u1 + 0.5 * x * u2;
            dp[3] = -(x * y / 12.0 + 0.5 * z) * u1 + x * x / 12.0 * u2;
            dxi[0] = -(u1 * (-y / 12.0) * xi[3] + u2 * (0.5 * xi[2] + x / 6.0 * xi[3]));
            dxi[1] = -(u1 * (-0.5 * xi[2] - x / 12.0 * xi[3]));
            dxi[2] = 0.5 * u1 * xi[3];
            dxi[3] = 0.0;
            return;
        }
        dp[..m].copy_from_slice(&u[..m]);
        for d in dxi.iter_mut() {
            *d = 0.0;
        }
        for k in 0..self.n2 {
            let bk = &self.b[k * m * m..(k + 1) * m * m];
            let lam = xi[m + k];
            let mut v = 0.0;
            for i in 0..m {
                let row = &bk[i * m..(i + 1) * m];
                let bu: f64 = row.iter().zip(&u[..m]).map(|(b, uj)| b * uj).sum();
                v += p[i] * bu;
                dxi[i] -= lam * bu;
            }
            dp[m + k] = v;
        }
    }
}

fn check_covector(spec: &GroupSpec, xi: &Covector) -> Result<()> {
    if xi.0.len() != spec.dim() {
        return Err(Error::Dimension {
            layer: format!("covector of {}", spec.name()),
            expected: spec.dim(),
            got: xi.0.len(),
        });
    }
    if xi.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("covector has non-finite entries".into()));
    }
    Ok(())
}

/// `H(p, ξ) = ½ Σ_j ⟨ξ, X_j(p)⟩²`.
pub fn hamiltonian(spec: &GroupSpec, p: &Point, xi: &Covector) -> Result<f64> {
    spec.check(p)?;
    check_covector(spec, xi)?;
    let mut u = vec![0.0; spec.horizontal_dim()];
    Dynamics::new(spec).controls(&p.0, &xi.0, &mut u);
    Ok(0.5 * u.iter().map(|v| v * v).sum::<f64>())
}

struct Rk4 {
    dynamics: Dynamics,
    n: usize,
    u: Vec<f64>,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(spec: &GroupSpec) -> Self {
        let n = spec.dim();
        Rk4 {
            dynamics: Dynamics::new(spec),
            n,
            u: vec![0.0; spec.horizontal_dim()],
            k: std::array::from_fn(|_| vec![0.0; 2 * n]),
            tmp: vec![0.0; 2 * n],
        }
    }

    fn eval(dynamics: &Dynamics, n: usize, state: &[f64], u: &mut [f64], out: &mut [f64]) {
        let (dp, dxi) = out.split_at_mut(n);
        dynamics.rhs(&state[..n], &state[n..], u, dp, dxi);
    }

    /// Advances `state = (p, ξ)` by one classical RK4 step.
    fn step(&mut self, state: &mut [f64], dt: f64) {
        let n = self.n;
        let [k1, k2, k3, k4] = &mut self.k;
        Self::eval(&self.dynamics, n, state, &mut self.u, k1);
        for i in 0..2 * n {
            self.tmp[i] = state[i] + 0.5 * dt * k1[i];
        }
        Self::eval(&self.dynamics, n, &self.tmp, &mut self.u, k2);
        for i in 0..2 * n {
            self.tmp[i] = state[i] + 0.5 * dt * k2[i];
        }
        Self::eval(&self.dynamics, n, &self.tmp, &mut self.u, k3);
        for i in 0..2 * n {
            self.tmp[i] = state[i] + dt * k3[i];
        }
        Self::eval(&self.dynamics, n, &self.tmp, &mut self.u, k4);
        for i in 0..2 * n {
            state[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    fn energy(&mut self, state: &[f64]) -> f64 {
        self.dynamics.controls(&state[..self.n], &state[self.n..], &mut self.u);
        0.5 * self.u.iter().map(|v| v * v).sum::<f64>()
    }
}

/// Integrates the normal extremal from the identity with initial covector `xi0` on `[0, 1]`.
pub fn flow_extremal(spec: &GroupSpec, xi0: &Covector, steps: usize) -> Result<ExtremalPath> {
    if steps < 16 {
        return Err(Error::Domain(format!("flow needs at least 16 steps, got {steps}")));
    }
    check_covector(spec, xi0)?;
    let n = spec.dim();
    let mut rk = Rk4::new(spec);
    let mut state = vec![0.0; 2 * n];
    state[n..].copy_from_slice(&xi0.0);
    let h0 = rk.energy(&state);
    let dt = 1.0 / steps as f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut points = Vec::with_capacity(steps + 1);
    let mut covectors = Vec::with_capacity(steps + 1);
    times.push(0.0);
    points.push(Point(state[..n].to_vec()));
    covectors.push(Covector(state[n..].to_vec()));
    let mut drift = 0.0f64;
    for s in 1..=steps {
        rk.step(&mut state, dt);
        let t = s as f64 * dt;
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { time: t });
        }
        drift = drift.max((rk.energy(&state) - h0).abs());
        times.push(t);
        points.push(Point(state[..n].to_vec()));
        covectors.push(Covector(state[n..].to_vec()));
    }
    Ok(ExtremalPath {
        times,
        points,
        covectors,
        energy: h0,
        hamiltonian_drift: drift,
    })
}

/// Endpoint of the extremal without storing the path; `None` on divergence.
fn flow_endpoint(rk: &mut Rk4, xi0: &[f64], steps: usize) -> Option<Vec<f64>> {
    let n = rk.n;
    let mut state = vec![0.0; 2 * n];
    state[n..].copy_from_slice(xi0);
    let dt = 1.0 / steps as f64;
    for _ in 0..steps {
        rk.step(&mut state, dt);
    }
    state.truncate(n);
    state.iter().all(|v| v.is_finite()).then_some(state)
}

fn check_controls(spec: &GroupSpec, controls: &[Vec<f64>]) -> Result<()> {
    if controls.is_empty() {
        return Err(Error::Domain("endpoint map needs at least one control interval".into()));
    }
    let m = spec.horizontal_dim();
    for (k, u) in controls.iter().enumerate() {
        if u.len() != m {
            return Err(Error::Dimension {
                layer: format!("control interval {k} (layer 1 of {})", spec.name()),
                expected: m,
                got: u.len(),
            });
        }
    }
    Ok(())
}

/// Endpoint of `γ̇ = Σ u_j X_j(γ)` from `p0` for controls constant on `M` equal
/// intervals of `[0, 1]`. Each interval is a horizontal line, so the curve is
/// the exact product `p0·(u₁Δt)·…·(u_MΔt)`.
pub fn endpoint_map(spec: &GroupSpec, controls: &[Vec<f64>], p0: &Point) -> Result<Point> {
    spec.check(p0)?;
    check_controls(spec, controls)?;
    let dt = 1.0 / controls.len() as f64;
    let n = spec.dim();
    let mut p = p0.clone();
    let mut seg = vec![0.0; n];
    for u in controls {
        for (s, v) in seg.iter_mut().zip(u) {
            *s = v * dt;
        }
        p = spec.multiply_unchecked(&p.0, &seg);
    }
    Ok(p)
}

/// Same as [`endpoint_map`] but integrating the vector fields with RK4 sub-steps.
pub fn endpoint_map_integrated(spec: &GroupSpec, controls: &[Vec<f64>], p0: &Point, substeps: usize) -> Result<Point> {
    spec.check(p0)?;
    check_controls(spec, controls)?;
    let substeps = substeps.max(1);
    let dt = 1.0 / (controls.len() * substeps) as f64;
    let n = spec.dim();
    let velocity = |p: &[f64], u: &[f64]| -> Vec<f64> {
        let fields = spec.horizontal_fields(p);
        (0..n).map(|k| fields.iter().zip(u).map(|(x, uj)| uj * x[k]).sum()).collect()
    };
    let mut p = p0.0.clone();
    for u in controls {
        for _ in 0..substeps {
            let k1 = velocity(&p, u);
            let a: Vec<f64> = p.iter().zip(&k1).map(|(x, k)| x + 0.5 * dt * k).collect();
            let k2 = velocity(&a, u);
            let b: Vec<f64> = p.iter().zip(&k2).map(|(x, k)| x + 0.5 * dt * k).collect();
            let k3 = velocity(&b, u);
            let c: Vec<f64> = p.iter().zip(&k3).map(|(x, k)| x + dt * k).collect();
            let k4 = velocity(&c, u);
            for i in 0..n {
                p[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
    Ok(Point(p))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShootingOptions {
    pub starts: usize,
    pub steps: usize,
    /// Residual acceptance is `gap · (1 + |q̃|)` for the normalized target `q̃`.
    pub acceptance_gap: f64,
    pub max_doublings: usize,
    pub stabilization: f64,
    /// Index offset into the low-discrepancy start sequence.
    pub sequence_offset: u64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            starts: 64,
            steps: 256,
            acceptance_gap: 1e-8,
            max_doublings: 4,
            stabilization: 1e-6,
            sequence_offset: 0,
        }
    }
}

/// Outcome of [`shoot_distance`]. Covector, residual and radius refer to the
/// target rescaled by dilation to unit homogeneous norm.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShootingResult {
    pub distance: f64,
    pub best_covector: Covector,
    pub terminal_residual: f64,
    pub starts_tried: usize,
    pub search_radius: f64,
}

#[derive(Clone, Debug)]
struct Candidate {
    distance: f64,
    xi: Vec<f64>,
    residual: f64,
}

fn candidate_order(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then(optim::l2(&a.xi).total_cmp(&optim::l2(&b.xi)))
        .then_with(|| {
            a.xi.iter()
                .zip(&b.xi)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
}

fn residual_vec(spec: &GroupSpec, target: &[f64], xi: &[f64], steps: usize) -> Vec<f64> {
    let mut rk = Rk4::new(spec);
    match flow_endpoint(&mut rk, xi, steps) {
        Some(end) => end.iter().zip(target).map(|(a, b)| a - b).collect(),
        None => vec![f64::INFINITY; target.len()],
    }
}

/// Local solve from one start: simplex descent on the squared residual, then a
/// Gauss-Newton polish of the terminal condition at full resolution.
fn shoot_from(spec: &GroupSpec, target: &[f64], start: &[f64], steps: usize, gap: f64) -> Option<Candidate> {
    let m = spec.horizontal_dim();
    // the simplex only has to find the basin, so it runs on a coarser grid
    let coarse = (steps / 4).max(32);
    let sq = |xi: &[f64]| residual_vec(spec, target, xi, coarse).iter().map(|v| v * v).sum::<f64>();
    let nm = optim::nelder_mead(
        sq,
        start,
        &NelderMeadOptions {
            max_iterations: 250,
            target: 1e-6,
            initial_step: 0.25,
            ..Default::default()
        },
    );
    if !nm.value.is_finite() || nm.value > 1e-2 {
        return None;
    }
    let (xi, residual) = optim::gauss_newton(|xi| residual_vec(spec, target, xi, steps), &nm.x, 0.1 * gap, 30, 1e-7);
    (residual <= gap).then(|| Candidate {
        distance: optim::l2(&xi[..m]),
        xi,
        residual,
    })
}

/// CC distance from the identity to `q` by multi-start shooting of normal extremals.
pub fn shoot_distance(spec: &GroupSpec, q: &Point, opts: &ShootingOptions) -> Result<ShootingResult> {
    spec.check(q)?;
    if !q.is_finite() {
        return Err(Error::Domain("target has non-finite coordinates".into()));
    }
    let n = spec.dim();
    let scale = spec.homogeneous_norm(q)?;
    if scale == 0.0 {
        return Ok(ShootingResult {
            distance: 0.0,
            best_covector: Covector(vec![0.0; n]),
            terminal_residual: 0.0,
            starts_tried: 0,
            search_radius: 0.0,
        });
    }
    let target = spec.dilate_unchecked(1.0 / scale, &q.0).0;
    let gap = opts.acceptance_gap * (1.0 + optim::l2(&target));
    let base_radius = 2.0 * n as f64;

    let mut best: Option<Candidate> = None;
    let mut tried = 0;
    let mut radius = base_radius;
    let mut previous: Option<f64> = None;
    for level in 0..=opts.max_doublings {
        radius = base_radius * 2f64.powi(level as i32);
        let offset = opts.sequence_offset + (level * opts.starts * 4) as u64;
        let starts = optim::halton_ball(opts.starts, n, radius, offset);
        tried += starts.len();
        let found = starts
            .par_iter()
            .filter_map(|s| shoot_from(spec, &target, s, opts.steps, gap))
            .min_by(candidate_order);
        if let Some(c) = found {
            if best.as_ref().map_or(true, |b| candidate_order(&c, b).is_lt()) {
                best = Some(c);
            }
        }
        if let Some(b) = &best {
            if let Some(prev) = previous {
                if (b.distance - prev).abs() <= opts.stabilization * prev.max(f64::MIN_POSITIVE) {
                    break;
                }
            }
            previous = Some(b.distance);
        }
    }
    let Some(best) = best else {
        let best_residual = optim::halton_ball(opts.starts.min(16), n, radius, opts.sequence_offset)
            .iter()
            .map(|s| optim::l2(&residual_vec(spec, &target, s, opts.steps)))
            .fold(f64::INFINITY, f64::min);
        return Err(Error::UnreachedTarget { best_residual });
    };
    Ok(ShootingResult {
        distance: scale * best.distance,
        best_covector: Covector(best.xi),
        terminal_residual: best.residual,
        starts_tried: tried,
        search_radius: radius,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    pub segments: usize,
    pub restarts: usize,
    pub seed: u64,
    pub feasibility_tol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            segments: 32,
            restarts: 8,
            seed: 0,
            feasibility_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleResult {
    pub distance: f64,
    pub residual: f64,
    pub controls: Vec<Vec<f64>>,
}

/// Exact endpoint of controls packed as `[u₁; u₂; …]`, in place of `endpoint_map`
/// for the inner loops.
fn packed_endpoint(spec: &GroupSpec, u: &[f64], m: usize) -> Vec<f64> {
    let segs = u.len() / m;
    let dt = 1.0 / segs as f64;
    let n = spec.dim();
    let mut p = vec![0.0; n];
    let mut seg = vec![0.0; n];
    for k in 0..segs {
        for j in 0..m {
            seg[j] = u[k * m + j] * dt;
        }
        p = spec.multiply_unchecked(&p, &seg).0;
    }
    p
}

/// Jacobian of the packed endpoint, one column per control entry, by central
/// differences on each factor of `P_{k−1}·g_k·S_{k+1}`.
fn packed_jacobian(spec: &GroupSpec, u: &[f64], m: usize) -> Vec<Vec<f64>> {
    let segs = u.len() / m;
    let dt = 1.0 / segs as f64;
    let n = spec.dim();
    let seg = |k: usize| -> Vec<f64> {
        let mut s = vec![0.0; n];
        for j in 0..m {
            s[j] = u[k * m + j] * dt;
        }
        s
    };
    let mut prefix = vec![vec![0.0; n]; segs + 1];
    for k in 0..segs {
        prefix[k + 1] = spec.multiply_unchecked(&prefix[k], &seg(k)).0;
    }
    let mut suffix = vec![vec![0.0; n]; segs + 1];
    for k in (0..segs).rev() {
        suffix[k] = spec.multiply_unchecked(&seg(k), &suffix[k + 1]).0;
    }
    let mut cols = Vec::with_capacity(u.len());
    for k in 0..segs {
        let g = seg(k);
        for j in 0..m {
            let h = 1e-6 * (1.0 + g[j].abs());
            let mut gp = g.clone();
            let mut gm = g.clone();
            gp[j] += h;
            gm[j] -= h;
            let fp = spec.multiply_unchecked(&spec.multiply_unchecked(&prefix[k], &gp).0, &suffix[k + 1]).0;
            let fm = spec.multiply_unchecked(&spec.multiply_unchecked(&prefix[k], &gm).0, &suffix[k + 1]).0;
            // chain rule through g_k = u_k·Δt
            cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h) * dt).collect());
        }
    }
    cols
}

fn oracle_restart(spec: &GroupSpec, target: &[f64], u0: Vec<f64>, tol: f64) -> (Vec<f64>, f64) {
    let m = spec.horizontal_dim();
    let dt = m as f64 / u0.len() as f64;
    let n = spec.dim();
    let mut u = u0;
    let mut lambda = vec![0.0; n];
    let mut rho = 10.0;
    let mut last = f64::INFINITY;
    for _ in 0..40 {
        let lam = lambda.clone();
        let fg = |v: &[f64]| {
            let c: Vec<f64> = packed_endpoint(spec, v, m).iter().zip(target).map(|(a, b)| a - b).collect();
            let energy = 0.5 * dt * v.iter().map(|x| x * x).sum::<f64>();
            let value = energy + optim::dot(&lam, &c) + 0.5 * rho * c.iter().map(|x| x * x).sum::<f64>();
            let weights: Vec<f64> = lam.iter().zip(&c).map(|(l, ci)| l + rho * ci).collect();
            let cols = packed_jacobian(spec, v, m);
            let grad = v
                .iter()
                .zip(&cols)
                .map(|(x, col)| dt * x + optim::dot(col, &weights))
                .collect();
            (value, grad)
        };
        let res = optim::bfgs(
            fg,
            &u,
            &BfgsOptions {
                max_iterations: 400,
                grad_tol: 1e-10,
            },
        );
        u = res.x;
        let c: Vec<f64> = packed_endpoint(spec, &u, m).iter().zip(target).map(|(a, b)| a - b).collect();
        let cn = optim::l2(&c);
        for (l, ci) in lambda.iter_mut().zip(&c) {
            *l += rho * ci;
        }
        if cn <= 1e-10 {
            break;
        }
        if cn > 0.25 * last {
            rho = (rho * 4.0).min(1e8);
        }
        last = cn;
    }
    let residual_fn = |v: &[f64]| -> Vec<f64> { packed_endpoint(spec, v, m).iter().zip(target).map(|(a, b)| a - b).collect() };
    optim::gauss_newton(residual_fn, &u, 1e-3 * tol, 40, 1e-7)
}

/// CC distance estimate by direct minimization of the control energy over
/// piecewise-constant controls with `segments` intervals.
pub fn control_oracle_distance(spec: &GroupSpec, q: &Point, segments: usize) -> Result<f64> {
    control_oracle(
        spec,
        q,
        &OracleOptions {
            segments,
            ..Default::default()
        },
    )
    .map(|r| r.distance)
}

pub fn control_oracle(spec: &GroupSpec, q: &Point, opts: &OracleOptions) -> Result<OracleResult> {
    spec.check(q)?;
    if !(4..=64).contains(&opts.segments) {
        return Err(Error::Domain(format!("oracle segments must lie in [4, 64], got {}", opts.segments)));
    }
    let m = spec.horizontal_dim();
    let scale = spec.homogeneous_norm(q)?;
    if scale == 0.0 {
        return Ok(OracleResult {
            distance: 0.0,
            residual: 0.0,
            controls: vec![vec![0.0; m]; opts.segments],
        });
    }
    let target = spec.dilate_unchecked(1.0 / scale, &q.0).0;
    let len = m * opts.segments;
    let dt = 1.0 / opts.segments as f64;
    let initial: Vec<Vec<f64>> = (0..opts.restarts.max(1))
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_mul(0x9E37_79B9).wrapping_add(r as u64));
            (0..len)
                .map(|i| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    if r == 0 {
                        // the straight line towards the horizontal projection, lightly perturbed
                        target[i % m] + 0.05 * noise
                    } else {
                        noise
                    }
                })
                .collect()
        })
        .collect();
    let runs: Vec<(Vec<f64>, f64)> = initial
        .into_par_iter()
        .map(|u0| oracle_restart(spec, &target, u0, opts.feasibility_tol))
        .collect();
    let energy = |u: &[f64]| (dt * u.iter().map(|x| x * x).sum::<f64>()).sqrt();
    let best = runs
        .iter()
        .filter(|(_, r)| *r <= opts.feasibility_tol)
        .min_by(|a, b| energy(&a.0).total_cmp(&energy(&b.0)).then(a.1.total_cmp(&b.1)));
    match best {
        Some((u, r)) => Ok(OracleResult {
            distance: scale * energy(u),
            residual: *r,
            controls: u.chunks(m).map(|c| c.iter().map(|v| v * scale).collect()).collect(),
        }),
        None => Err(Error::OracleFailure {
            best_residual: runs.iter().map(|r| r.1).fold(f64::INFINITY, f64::min),
        }),
    }
}

/// How `d(p, q)` is evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistanceBackend {
    /// Closed form, Heisenberg only.
    Exact,
    Shooting(ShootingOptions),
    Oracle(OracleOptions),
}

impl DistanceBackend {
    pub fn name(&self) -> &'static str {
        match self {
            DistanceBackend::Exact => "exact",
            DistanceBackend::Shooting(_) => "shooting",
            DistanceBackend::Oracle(_) => "oracle",
        }
    }

    /// Rejects backends that cannot serve `spec`.
    pub fn supports(&self, spec: &GroupSpec) -> Result<()> {
        if matches!(self, DistanceBackend::Exact) && !is_heisenberg(spec) {
            return Err(Error::Config(format!(
                "the exact backend only covers the Heisenberg group, not {}",
                spec.name()
            )));
        }
        Ok(())
    }

    /// `d₀(q) = d(q, 0)`.
    pub fn d0(&self, spec: &GroupSpec, q: &Point) -> Result<f64> {
        match self {
            DistanceBackend::Exact => {
                self.supports(spec)?;
                heisenberg::d0_exact(q)
            }
            DistanceBackend::Shooting(o) => shoot_distance(spec, q, o).map(|r| r.distance),
            DistanceBackend::Oracle(o) => control_oracle(spec, q, o).map(|r| r.distance),
        }
    }

    /// `d(p, q) = d₀(q⁻¹·p)`.
    pub fn distance(&self, spec: &GroupSpec, p: &Point, q: &Point) -> Result<f64> {
        let qinv = spec.inverse(q)?;
        let rel = spec.multiply(&qinv, p)?;
        self.d0(spec, &rel)
    }
}

/// True when `spec` carries the standard Heisenberg law `B = ½(xỹ − x̃y)`.
pub fn is_heisenberg(spec: &GroupSpec) -> bool {
    match spec.law() {
        Law::Bilinear { matrices } => {
            spec.layer_dims() == [2, 1] && matrices.len() == 1 && matrices[0] == vec![vec![0.0, 0.5], vec![-0.5, 0.0]]
        }
        Law::Engel => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn heis() -> GroupSpec {
        GroupSpec::builtin("heisenberg").unwrap()
    }

    #[test]
    fn hamiltonian_examples() {
        let g = heis();
        let h = |p: [f64; 3], xi: [f64; 3]| hamiltonian(&g, &Point(p.to_vec()), &Covector(xi.to_vec())).unwrap();
        assert_eq!(h([0.0; 3], [1.0, 0.0, 0.0]), 0.5);
        assert_eq!(h([0.0; 3], [0.0, 0.0, 1.0]), 0.0);
        assert_eq!(h([1.0, 0.0, 0.0], [0.0, 0.0, 1.0]), 0.125);
        assert!(hamiltonian(&g, &Point(vec![0.0; 3]), &Covector(vec![1.0])).is_err());
    }

    #[test]
    fn rhs_matches_finite_differences_of_hamiltonian() {
        for name in ["heisenberg", "rxh", "engel"] {
            let g = GroupSpec::builtin(name).unwrap();
            let n = g.dim();
            let p: Vec<f64> = (0..n).map(|i| 0.3 + 0.17 * i as f64).collect();
            let xi: Vec<f64> = (0..n).map(|i| -0.4 + 0.5 * i as f64).collect();
            let mut u = vec![0.0; g.horizontal_dim()];
            let (mut dp, mut dxi) = (vec![0.0; n], vec![0.0; n]);
            Dynamics::new(&g).rhs(&p, &xi, &mut u, &mut dp, &mut dxi);
            let h = |p: &[f64], xi: &[f64]| hamiltonian(&g, &Point(p.to_vec()), &Covector(xi.to_vec())).unwrap();
            let e = 1e-6;
            for i in 0..n {
                let (mut a, mut b) = (xi.clone(), xi.clone());
                a[i] += e;
                b[i] -= e;
                assert!((dp[i] - (h(&p, &a) - h(&p, &b)) / (2.0 * e)).abs() < 1e-8, "{name} dp {i}");
                let (mut a, mut b) = (p.clone(), p.clone());
                a[i] += e;
                b[i] -= e;
                assert!((dxi[i] + (h(&a, &xi) - h(&b, &xi)) / (2.0 * e)).abs() < 1e-8, "{name} dxi {i}");
            }
        }
    }

    #[test]
    fn flow_examples() {
        let g = heis();
        let path = flow_extremal(&g, &Covector(vec![1.0, 0.0, 0.0]), 64).unwrap();
        assert_eq!(path.endpoint().0, vec![1.0, 0.0, 0.0]);
        assert_eq!(path.energy, 0.5);
        for name in ["heisenberg", "rxh", "engel", "abelian3"] {
            let g = GroupSpec::builtin(name).unwrap();
            let path = flow_extremal(&g, &Covector(vec![0.0; g.dim()]), 16).unwrap();
            assert!(path.endpoint().0.iter().all(|v| *v == 0.0));
        }
        let path = flow_extremal(&g, &Covector(vec![0.0, 0.0, 3.0]), 32).unwrap();
        assert!(path.endpoint().0.iter().all(|v| *v == 0.0));
        assert!(flow_extremal(&g, &Covector(vec![0.0; 3]), 8).is_err());
    }

    #[test]
    fn heisenberg_flow_reaches_closed_form_endpoint() {
        // with ξ = (a, 0, λ) the horizontal velocity rotates at rate λ and the
        // endpoint is (a sin λ/λ, a(1 − cos λ)/λ, a²(λ − sin λ)/(2λ²))
        let g = heis();
        let (a, l) = (1.3, 2.1);
        let path = flow_extremal(&g, &Covector(vec![a, 0.0, l]), 1024).unwrap();
        let e = &path.endpoint().0;
        assert!((e[0] - a * l.sin() / l).abs() < 1e-12);
        assert!((e[1] - a * (1.0 - l.cos()) / l).abs() < 1e-12);
        assert!((e[2] - a * a * (l - l.sin()) / (2.0 * l * l)).abs() < 1e-12);
        assert!(path.hamiltonian_drift < 1e-12);
        assert_eq!(path.vertical_covector_drift(&g), 0.0);
    }

    #[test]
    fn endpoint_examples() {
        let rxh = GroupSpec::builtin("rxh").unwrap();
        let p = endpoint_map(&rxh, &[vec![1.0, 0.0, 0.0]], &rxh.zero()).unwrap();
        assert_eq!(p.0, vec![1.0, 0.0, 0.0, 0.0]);
        let g = heis();
        let p0 = Point(vec![0.3, -1.0, 2.0]);
        assert_eq!(endpoint_map(&g, &vec![vec![0.0, 0.0]; 5], &p0).unwrap(), p0);
        let p = endpoint_map(&g, &[vec![1.0, 0.0], vec![0.0, 1.0]], &g.zero()).unwrap();
        assert_eq!(p.0, vec![0.5, 0.5, 0.125]);
        assert!(endpoint_map(&g, &[vec![1.0, 0.0, 0.0]], &g.zero()).is_err());
        assert!(endpoint_map(&g, &[], &g.zero()).is_err());
    }

    #[test]
    fn exact_endpoint_matches_integrated_fields() {
        for name in ["heisenberg", "rxh", "engel"] {
            let g = GroupSpec::builtin(name).unwrap();
            let m = g.horizontal_dim();
            let controls: Vec<Vec<f64>> = (0..7)
                .map(|k| (0..m).map(|j| ((k * 3 + j * 5) as f64 * 0.7).sin()).collect())
                .collect();
            let p0 = Point((0..g.dim()).map(|i| 0.1 * i as f64).collect());
            let a = endpoint_map(&g, &controls, &p0).unwrap();
            let b = endpoint_map_integrated(&g, &controls, &p0, 8).unwrap();
            assert!(a.euclidean_distance(&b) < 1e-12, "{name}");
        }
    }

    #[test]
    fn packed_jacobian_matches_full_differences() {
        let g = GroupSpec::builtin("engel").unwrap();
        let u: Vec<f64> = (0..12).map(|i| (i as f64 * 1.3).cos()).collect();
        let cols = packed_jacobian(&g, &u, 2);
        for (i, col) in cols.iter().enumerate() {
            let (mut a, mut b) = (u.clone(), u.clone());
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let (fa, fb) = (packed_endpoint(&g, &a, 2), packed_endpoint(&g, &b, 2));
            for k in 0..4 {
                assert!((col[k] - (fa[k] - fb[k]) / 2e-6).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn shooting_examples() {
        let g = heis();
        let o = ShootingOptions::default();
        let r = shoot_distance(&g, &Point(vec![1.0, 0.0, 0.0]), &o).unwrap();
        assert!((r.distance - 1.0).abs() < 1e-7, "{r:?}");
        let r = shoot_distance(&g, &Point(vec![0.0, 0.0, 1.0]), &o).unwrap();
        assert!((r.distance - 2.0 * PI.sqrt()).abs() < 1e-6, "{r:?}");
        let r = shoot_distance(&g, &g.zero(), &o).unwrap();
        assert_eq!(r.distance, 0.0);
        let e = GroupSpec::builtin("engel").unwrap();
        let r = shoot_distance(&e, &Point(vec![0.0, 1.0, 0.0, 0.0]), &o).unwrap();
        assert!((r.distance - 1.0).abs() < 1e-7, "{r:?}");
    }

    #[test]
    fn oracle_examples() {
        let g = heis();
        let d = control_oracle_distance(&g, &Point(vec![1.0, 0.0, 0.0]), 8).unwrap();
        assert!((d - 1.0).abs() < 1e-4, "{d}");
        let d = control_oracle_distance(&g, &Point(vec![0.0, 0.0, 1.0]), 32).unwrap();
        assert!((d - 2.0 * PI.sqrt()).abs() < 1e-2, "{d}");
        assert!(control_oracle_distance(&g, &Point(vec![0.0, 0.0, 1.0]), 2).is_err());
    }

    #[test]
    fn exact_backend_rejects_other_groups() {
        let e = GroupSpec::builtin("engel").unwrap();
        assert!(DistanceBackend::Exact.d0(&e, &e.zero()).is_err());
        assert!(is_heisenberg(&heis()));
    }
}
