//! Acceptance gate. Every criterion prints one PASS/FAIL line (written past the
//! test harness capture) and then asserts.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use carnot_core::geodesic::{control_oracle, flow_extremal, shoot_distance, OracleOptions, ShootingOptions};
use carnot_core::heisenberg::{self, d0_exact, d0_squared_exact, mu, mu_inverse};
use carnot_core::hopflax::{dist_to_set, eikonal_residual, hopf_lax_field, hopf_lax_value, set_distance_field, HopfLaxOptions, InitialDatum, PhiSpec};
use carnot_core::probe::{
    compose_with_psi, fd_horizontal_hessian, first_order_limit, semiconcavity_scan, standard_grid, GridSpec, ProbeConfig,
    ProbeReport, ScalarField, Verdict, DEFAULT_LADDER,
};
use carnot_core::{Covector, DistanceBackend, GroupSpec, HorizontalVec, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// criteria run one at a time so each runtime budget measures that criterion alone
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, pass: bool, detail: &str, elapsed: Duration) {
    let status = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {id:>2} [{status}] {detail} ({:.1}s)", elapsed.as_secs_f64());
}

fn heis() -> GroupSpec {
    GroupSpec::builtin("heisenberg").unwrap()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_point(r: &mut ChaCha8Rng, half: f64) -> Point {
    Point((0..3).map(|_| r.gen_range(-half..half)).collect())
}

/// Off-axis Heisenberg points with prescribed distance from the identity.
fn off_axis_points(seed: u64, count: usize, dmin: f64, dmax: f64, theta_max: f64) -> Vec<Point> {
    let g = heis();
    let mut r = rng(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let p = random_point(&mut r, 1.0);
        if heisenberg::theta(p.0[0], p.0[1], p.0[2]).unwrap().abs() > theta_max {
            continue;
        }
        let target = r.gen_range(dmin..dmax);
        out.push(g.dilate(target / d0_exact(&p).unwrap(), &p).unwrap());
    }
    out
}

fn sup_detail(rep: &ProbeReport) -> String {
    rep.per_scale_sup
        .iter()
        .map(|s| format!("{}:{:.4}", s.level, s.sup))
        .collect::<Vec<_>>()
        .join(" ")
}

fn last_two_spread(rep: &ProbeReport) -> f64 {
    let k = rep.per_scale_sup.len();
    let (a, b) = (rep.per_scale_sup[k - 2].sup, rep.per_scale_sup[k - 1].sup);
    (a - b).abs() / a.abs().max(b.abs())
}

#[test]
fn criterion_01_exact_heisenberg_values() {
    let _serial = serial();
    let t = Instant::now();
    let axis = d0_squared_exact(&Point(vec![0.0, 0.0, 1.0])).unwrap();
    let axis_err = (axis - 4.0 * PI).abs();
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (x, y) = (r.gen_range(-5.0..5.0), r.gen_range(-5.0..5.0));
        let v = d0_squared_exact(&Point(vec![x, y, 0.0])).unwrap();
        worst = worst.max((v - (x * x + y * y)).abs());
    }
    let elapsed = t.elapsed();
    let pass = axis_err <= 1e-10 && worst <= 1e-12 && elapsed < Duration::from_secs(1);
    report(1, pass, &format!("|d0²(0,0,1) − 4π| = {axis_err:.1e}, horizontal max err {worst:.1e}"), elapsed);
    assert!(pass);
}

#[test]
fn criterion_02_cross_method_agreement() {
    let _serial = serial();
    let t = Instant::now();
    let g = heis();
    let points = off_axis_points(2, 50, 0.2, 2.0, 2.8);
    let opts = ShootingOptions::default();
    let mut worst_shoot = 0.0f64;
    for p in &points {
        let exact = d0_squared_exact(p).unwrap();
        let s = shoot_distance(&g, p, &opts).unwrap();
        worst_shoot = worst_shoot.max((s.distance * s.distance - exact).abs() / exact.max(1.0));
    }
    let oracle = OracleOptions {
        segments: 32,
        ..Default::default()
    };
    let mut worst_oracle = 0.0f64;
    for p in points.iter().take(20) {
        let exact = d0_exact(p).unwrap();
        let d = control_oracle(&g, p, &oracle).unwrap().distance;
        worst_oracle = worst_oracle.max((d - exact).abs() / exact);
    }
    let elapsed = t.elapsed();
    let pass = worst_shoot <= 1e-4 && worst_oracle <= 1e-2 && elapsed < Duration::from_secs(300);
    report(
        2,
        pass,
        &format!("shooting max |Δd²|/max(1,d²) = {worst_shoot:.1e} (50 pts), oracle max rel {worst_oracle:.1e} (20 pts)"),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_03_homogeneity_and_invariance() {
    let _serial = serial();
    let t = Instant::now();
    let g = heis();
    let mut r = rng(3);
    let pairs: Vec<(Point, Point, Point, f64)> = (0..50)
        .map(|_| {
            (
                random_point(&mut r, 1.5),
                random_point(&mut r, 1.5),
                random_point(&mut r, 1.5),
                r.gen_range(0.2..4.0),
            )
        })
        .collect();
    let check = |backend: &DistanceBackend| -> f64 {
        let mut worst = 0.0f64;
        for (p, q, h, s) in &pairs {
            let d = backend.distance(&g, p, q).unwrap();
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
            let dp = g.dilate(*s, p).unwrap();
            let dq = g.dilate(*s, q).unwrap();
            worst = worst.max(rel(backend.distance(&g, &dp, &dq).unwrap(), s * d));
            let swapped = backend.d0(&g, &g.multiply(&g.inverse(p).unwrap(), q).unwrap()).unwrap();
            worst = worst.max(rel(swapped, d));
            if *backend == DistanceBackend::Exact {
                let hp = g.multiply(h, p).unwrap();
                let hq = g.multiply(h, q).unwrap();
                worst = worst.max(rel(backend.distance(&g, &hp, &hq).unwrap(), d));
            }
        }
        worst
    };
    let exact = check(&DistanceBackend::Exact);
    let shooting = check(&DistanceBackend::Shooting(ShootingOptions::default()));
    let elapsed = t.elapsed();
    // shooting tolerance: acceptance gap plus RK4 bias at 256 steps, well inside the 1e−4 agreement budget
    let pass = exact <= 1e-6 && shooting <= 1e-5;
    report(3, pass, &format!("50 pairs, max rel deviation exact {exact:.1e}, shooting {shooting:.1e}"), elapsed);
    assert!(pass);
}

fn standard_probe_grid() -> Vec<Point> {
    standard_grid(&heis(), &GridSpec::default(), d0_exact).unwrap()
}

fn d0sq_field() -> ScalarField {
    ScalarField::distance_squared(heis(), DistanceBackend::Exact).unwrap()
}

#[test]
fn criterion_04_d0_squared_is_h_semiconcave() {
    let _serial = serial();
    let t = Instant::now();
    let grid = standard_probe_grid();
    let rep = semiconcavity_scan(&d0sq_field(), &grid, &ProbeConfig::default()).unwrap();
    let spread = last_two_spread(&rep);
    let elapsed = t.elapsed();
    let pass = grid.len() == 161
        && rep.verdict == Verdict::Bounded
        && spread <= 0.1
        && *rep.config.ladder.last().unwrap() == 1e-3
        && elapsed < Duration::from_secs(120);
    report(
        4,
        pass,
        &format!("verdict {}, Ĉ = {:.4}, spread {:.2}% [{}]", rep.verdict, rep.final_sup(), 100.0 * spread, sup_detail(&rep)),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_05_first_order_limit_on_the_centre() {
    let _serial = serial();
    let t = Instant::now();
    let f = d0sq_field();
    let e1 = HorizontalVec(vec![1.0, 0.0]);
    let one = first_order_limit(&f, &Point(vec![0.0, 0.0, 1.0]), &e1, &DEFAULT_LADDER).unwrap();
    let four = first_order_limit(&f, &Point(vec![0.0, 0.0, 4.0]), &e1, &DEFAULT_LADDER).unwrap();
    let want1 = -8.0 * PI.sqrt();
    let want4 = -4.0 * d0_exact(&Point(vec![0.0, 0.0, 4.0])).unwrap();
    let rel1 = (one.limit - want1).abs() / want1.abs();
    let rel4 = (four.limit - want4).abs() / want4.abs();
    let h = 1e-2;
    let q2 = carnot_core::probe::second_diff(&f, &Point(vec![0.0, 0.0, 1.0]), &e1.scaled(h)).unwrap() / (h * h);
    let elapsed = t.elapsed();
    let pass = rel1 <= 0.01 && rel4 <= 0.01 && q2 <= -1e3 && elapsed < Duration::from_secs(10);
    report(
        5,
        pass,
        &format!(
            "limit(0,0,1) = {:.6} (−8√π, rel {rel1:.1e}), limit(0,0,4) = {:.6} (−16√π, rel {rel4:.1e}), quotient2(1e−2) = {q2:.1}",
            one.limit, four.limit
        ),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_06_engel_blowup() {
    let _serial = serial();
    let t = Instant::now();
    let g = GroupSpec::builtin("engel").unwrap();
    let backend = DistanceBackend::Oracle(OracleOptions {
        segments: 32,
        restarts: 8,
        seed: 0,
        feasibility_tol: 1e-6,
    });
    let f = ScalarField::distance(g, backend).unwrap();
    // endpoint of the horizontal line along X₂, an abnormal point
    let p = Point(vec![0.0, 1.0, 0.0, 0.0]);
    let config = ProbeConfig {
        ladder: vec![0.2, 0.1, 0.05, 0.025],
        directions: Some(vec![HorizontalVec(vec![1.0, 0.0])]),
        ..Default::default()
    };
    let rep = semiconcavity_scan(&f, &[p], &config).unwrap();
    let sups: Vec<f64> = rep.per_scale_sup.iter().map(|s| s.sup).collect();
    let ratios: Vec<String> = sups.windows(2).map(|w| format!("{:.3}", w[1] / w[0])).collect();
    let doubling = sups.windows(2).all(|w| w[1] >= 2.0 * w[0]);
    let elapsed = t.elapsed();
    let pass = doubling && rep.verdict == Verdict::Blowup && elapsed < Duration::from_secs(600);
    report(
        6,
        pass,
        &format!("verdict {}, quotient2 [{}], ratios [{}]", rep.verdict, sup_detail(&rep), ratios.join(", ")),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_07_hopf_lax_semiconcavity() {
    let _serial = serial();
    let t = Instant::now();
    let g = heis();
    let datum = InitialDatum::TruncatedDistance {
        center: g.zero(),
        cap: 1.0,
    };
    let phi = PhiSpec::Quadratic;
    let backend = DistanceBackend::Exact;
    let opts = HopfLaxOptions::default();
    let mut grid = vec![g.zero()];
    grid.extend(off_axis_points(7, 10, 0.1, 0.9, PI));
    let mut sups = Vec::new();
    let mut verdicts = Vec::new();
    for time in [1.0, 2.0] {
        let u = hopf_lax_field(&g, &datum, &phi, time, &backend, &opts).unwrap();
        let rep = semiconcavity_scan(&u, &grid, &ProbeConfig::default()).unwrap();
        sups.push(rep.final_sup());
        verdicts.push(rep.verdict);
    }
    let ratio = sups[1] / sups[0];

    let mut r = rng(77);
    let mut below_g = true;
    let mut monotone = true;
    for _ in 0..20 {
        let p = random_point(&mut r, 2.0);
        let gp = datum.eval(&g, &backend, &p).unwrap();
        let values: Vec<f64> = [0.25, 0.5, 1.0, 2.0]
            .iter()
            .map(|&time| hopf_lax_value(&g, &datum, &phi, time, &p, &backend, &opts).unwrap().value)
            .collect();
        below_g &= values.iter().all(|v| *v <= gp);
        monotone &= values.windows(2).all(|w| w[1] <= w[0]);
    }
    let elapsed = t.elapsed();
    let pass = verdicts.iter().all(|v| *v == Verdict::Bounded)
        && (0.375..=0.625).contains(&ratio)
        && below_g
        && monotone
        && elapsed < Duration::from_secs(600);
    report(
        7,
        pass,
        &format!(
            "verdicts {verdicts:?}, sup t=1 {:.4}, t=2 {:.4}, ratio {ratio:.4}, u ≤ g {below_g}, monotone in t {monotone}",
            sups[0], sups[1]
        ),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_08_eikonal_and_set_distance() {
    let _serial = serial();
    let t = Instant::now();
    let g = heis();
    let d0 = ScalarField::distance(g.clone(), DistanceBackend::Exact).unwrap();
    let set = vec![Point(vec![1.0, 0.0, 0.0]), Point(vec![-1.0, 0.0, 0.0])];
    let ds = set_distance_field(&g, set.clone(), DistanceBackend::Exact, false).unwrap();

    let mut worst_d0 = 0.0f64;
    for p in off_axis_points(8, 20, 0.3, 2.0, 2.8) {
        worst_d0 = worst_d0.max(eikonal_residual(&d0, &p, 1e-5, None).unwrap());
    }
    // smooth points of d_S: off both centres' axes and away from the equidistant set
    let near_singular = |p: &Point| -> bool {
        let rel: Vec<Point> = set.iter().map(|c| g.multiply(&g.inverse(c).unwrap(), p).unwrap()).collect();
        let off_axis = rel
            .iter()
            .all(|w| heisenberg::theta(w.0[0], w.0[1], w.0[2]).map_or(false, |th| th.abs() < 2.8));
        let d: Vec<f64> = rel.iter().map(|w| d0_exact(w).unwrap()).collect();
        !off_axis || (d[0] - d[1]).abs() < 0.1
    };
    let mut r = rng(88);
    let mut worst_ds = 0.0f64;
    let mut count = 0;
    while count < 20 {
        let p = random_point(&mut r, 1.5);
        if near_singular(&p) {
            continue;
        }
        worst_ds = worst_ds.max(eikonal_residual(&ds, &p, 1e-5, Some(&near_singular)).unwrap());
        count += 1;
    }
    let ds_sq = set_distance_field(&g, set.clone(), DistanceBackend::Exact, true).unwrap();
    let grid = standard_grid(
        &g,
        &GridSpec {
            include_origin: true,
            axis: 0,
            sphere: 0,
            bulk: 60,
            extent: 1.5,
            seed: 8,
        },
        d0_exact,
    )
    .unwrap();
    let rep = semiconcavity_scan(&ds_sq, &grid, &ProbeConfig::default()).unwrap();
    let at_origin = dist_to_set(&g, &set, &g.zero(), &DistanceBackend::Exact).unwrap();
    let elapsed = t.elapsed();
    let pass = worst_d0 <= 1e-4 && worst_ds <= 1e-4 && rep.verdict == Verdict::Bounded && at_origin == 1.0;
    report(
        8,
        pass,
        &format!(
            "eikonal max residual d0 {worst_d0:.1e}, d_S {worst_ds:.1e}; d_S² probe {} [{}]",
            rep.verdict,
            sup_detail(&rep)
        ),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_09_numerics_hygiene() {
    let _serial = serial();
    let t = Instant::now();
    let mut worst_mu = 0.0f64;
    let mut values: Vec<f64> = (0..=20_000).map(|i| -1e3 + 0.1 * i as f64).collect();
    values.extend((0..200).map(|i| 10f64.powf(-12.0 + 0.075 * i as f64)));
    for v in values {
        let s = mu_inverse(v).unwrap().value;
        worst_mu = worst_mu.max((mu(s).unwrap() - v).abs() / v.abs().max(1.0));
    }

    let mut r = rng(9);
    let mut worst_h = 0.0f64;
    let mut worst_vertical = 0.0f64;
    for name in ["heisenberg", "rxh", "engel", "abelian3"] {
        let g = GroupSpec::builtin(name).unwrap();
        for _ in 0..10 {
            let dir: Vec<f64> = (0..g.dim()).map(|_| r.gen_range(-1.0..1.0)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let radius = 5.0 * r.gen_range(0.0f64..1.0).powf(1.0 / g.dim() as f64);
            let xi = Covector(dir.iter().map(|v| radius * v / norm).collect());
            let path = flow_extremal(&g, &xi, 1024).unwrap();
            worst_h = worst_h.max(path.hamiltonian_drift);
            if g.step() == 2 {
                worst_vertical = worst_vertical.max(path.vertical_covector_drift(&g));
            }
        }
    }

    let f = d0sq_field();
    let mut worst_hess = 0.0f64;
    for p in off_axis_points(99, 50, 0.3, 2.0, 2.5) {
        let fd = fd_horizontal_hessian(&f, &p, 1e-4).unwrap();
        let exact = heisenberg::derivatives(&p).unwrap().horizontal_hess;
        for i in 0..2 {
            for j in 0..2 {
                worst_hess = worst_hess.max((fd[i][j] - exact[i][j]).abs() / exact[i][j].abs().max(1.0));
            }
        }
    }
    let elapsed = t.elapsed();
    let pass = worst_mu <= 1e-12 && worst_h <= 1e-8 && worst_vertical <= 1e-12 && worst_hess <= 1e-4;
    report(
        9,
        pass,
        &format!(
            "μ round trip {worst_mu:.1e}, H drift {worst_h:.1e}, vertical ξ drift {worst_vertical:.1e}, Hessian fd vs closed form {worst_hess:.1e}"
        ),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_10_laplacian_bound_and_profile() {
    let _serial = serial();
    let t = Instant::now();
    let grid = standard_probe_grid();
    let f = d0sq_field();
    let c_hat = semiconcavity_scan(&f, &grid, &ProbeConfig::default()).unwrap().final_sup();
    let mut worst_trace = f64::NEG_INFINITY;
    let mut smooth = 0;
    for p in &grid {
        let r = p.0[0].hypot(p.0[1]);
        if r < 1e-2 * p.0[2].abs().sqrt().max(1e-3) {
            continue;
        }
        let h = fd_horizontal_hessian(&f, p, 1e-4).unwrap();
        worst_trace = worst_trace.max(h[0][0] + h[1][1]);
        smooth += 1;
    }
    let d0 = ScalarField::distance(heis(), DistanceBackend::Exact).unwrap();
    let cube = compose_with_psi("cube", |s| s * s * s, d0);
    let bounded_grid: Vec<Point> = grid.iter().filter(|p| d0_exact(p).unwrap() <= 2.0).cloned().collect();
    let rep = semiconcavity_scan(&cube, &bounded_grid, &ProbeConfig::default()).unwrap();
    let elapsed = t.elapsed();
    let pass = smooth > 100 && worst_trace <= 2.0 * c_hat && rep.verdict == Verdict::Bounded;
    report(
        10,
        pass,
        &format!(
            "max trace {worst_trace:.4} ≤ 2Ĉ = {:.4} over {smooth} smooth points; Ψ = τ³ probe {} [{}]",
            2.0 * c_hat,
            rep.verdict,
            sup_detail(&rep)
        ),
        elapsed,
    );
    assert!(pass);
}
