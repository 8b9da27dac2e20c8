//! Named check suites behind `carnot-kit verify`.

use std::f64::consts::PI;

use carnot_core::geodesic::{control_oracle, flow_extremal, shoot_distance};
use carnot_core::heisenberg::{self, d0_exact, d0_squared_exact, mu, mu_inverse};
use carnot_core::hopflax::{eikonal_residual, hopf_lax_field, set_distance_field, HopfLaxOptions, InitialDatum, PhiSpec};
use carnot_core::probe::{
    compose_with_psi, fd_horizontal_hessian, first_order_limit, second_diff, semiconcavity_scan, standard_grid, GridSpec,
    ProbeConfig, ScalarField, Verdict, DEFAULT_LADDER,
};
use carnot_core::{Covector, DistanceBackend, GroupSpec, HorizontalVec, OracleOptions, Point, ShootingOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, CliResult};
use crate::report::{Check, Provenance, Report};

pub const SUITES: [&str; 3] = ["core", "heisenberg", "paper"];

pub struct VerifyOptions {
    pub seed: u64,
    /// Points used by the sampled checks.
    pub samples: usize,
}

pub fn run(suite: &str, opts: &VerifyOptions) -> CliResult<Report> {
    let checks = match suite {
        "core" => core_suite(opts),
        "heisenberg" => heisenberg_suite(opts),
        "paper" => theory_suite(opts),
        other => {
            return Err(CliError::Config(format!(
                "unknown suite '{other}' (available: {})",
                SUITES.join(", ")
            )))
        }
    };
    let config = serde_json::json!({"suite": suite, "seed": opts.seed, "samples": opts.samples});
    Ok(Report::new(suite, config, checks))
}

/// Folds a fallible measurement into a check; errors become failures.
fn guarded(name: &str, prov: Provenance, f: impl FnOnce() -> carnot_core::Result<Check>) -> Check {
    f().unwrap_or_else(|e| Check::failed(name, prov, e.to_string()))
}

fn random_point(r: &mut ChaCha8Rng, n: usize, half: f64) -> Point {
    Point((0..n).map(|_| r.gen_range(-half..half)).collect())
}

fn heis() -> GroupSpec {
    GroupSpec::builtin("heisenberg").expect("builtin")
}

fn core_suite(opts: &VerifyOptions) -> Vec<Check> {
    let mut checks = Vec::new();
    let mut r = ChaCha8Rng::seed_from_u64(opts.seed);
    for name in carnot_core::group::BUILTIN_GROUPS {
        let g = GroupSpec::builtin(name).expect("builtin");
        let n = g.dim();
        let triples: Vec<(Point, Point, Point, f64)> = (0..opts.samples.max(1))
            .map(|_| {
                (
                    random_point(&mut r, n, 2.0),
                    random_point(&mut r, n, 2.0),
                    random_point(&mut r, n, 2.0),
                    r.gen_range(0.1..3.0),
                )
            })
            .collect();
        let mut assoc = 0.0f64;
        let mut ident = 0.0f64;
        let mut inv = 0.0f64;
        let mut dil = 0.0f64;
        let mut norm = 0.0f64;
        let res: carnot_core::Result<()> = (|| {
            for (p, q, w, s) in &triples {
                let lhs = g.multiply(&g.multiply(p, q)?, w)?;
                let rhs = g.multiply(p, &g.multiply(q, w)?)?;
                assoc = assoc.max(lhs.euclidean_distance(&rhs));
                ident = ident.max(g.multiply(p, &g.zero())?.euclidean_distance(p));
                inv = inv.max(g.multiply(p, &g.inverse(p)?)?.norm());
                let a = g.dilate(*s, &g.multiply(p, q)?)?;
                let b = g.multiply(&g.dilate(*s, p)?, &g.dilate(*s, q)?)?;
                dil = dil.max(a.euclidean_distance(&b) / (1.0 + a.norm()));
                let hn = g.homogeneous_norm(p)?;
                norm = norm.max((g.homogeneous_norm(&g.dilate(*s, p)?)? - s * hn).abs() / (1.0 + s * hn));
            }
            Ok(())
        })();
        if let Err(e) = res {
            checks.push(Check::failed(&format!("{name}/group-axioms"), Provenance::Trivial, e.to_string()));
            continue;
        }
        checks.push(Check::at_most(&format!("{name}/associativity"), assoc, 1e-12, Provenance::Trivial));
        checks.push(Check::at_most(&format!("{name}/identity"), ident, 0.0, Provenance::Trivial));
        checks.push(Check::at_most(&format!("{name}/inverse"), inv, 1e-13, Provenance::Trivial));
        checks.push(Check::at_most(&format!("{name}/dilation-automorphism"), dil, 1e-13, Provenance::Trivial));
        checks.push(Check::at_most(&format!("{name}/norm-homogeneity"), norm, 1e-13, Provenance::Trivial));

        let name_h = format!("{name}/hamiltonian-drift");
        checks.push(guarded(&name_h, Provenance::Derived, || {
            let mut worst = 0.0f64;
            for _ in 0..5 {
                let xi = Covector((0..n).map(|_| r.gen_range(-2.0..2.0)).collect());
                worst = worst.max(flow_extremal(&g, &xi, 1024)?.hamiltonian_drift);
            }
            Ok(Check::at_most(&name_h, worst, 1e-8, Provenance::Derived))
        }));
    }
    checks.push(guarded("mu-round-trip", Provenance::Derived, || {
        let mut worst = 0.0f64;
        for i in 0..=20_000 {
            let v = -1e3 + 0.1 * i as f64;
            let s = mu_inverse(v)?.value;
            worst = worst.max((mu(s)? - v).abs() / v.abs().max(1.0));
        }
        Ok(Check::at_most("mu-round-trip", worst, 1e-12, Provenance::Derived))
    }));
    checks
}

fn heisenberg_suite(opts: &VerifyOptions) -> Vec<Check> {
    let g = heis();
    let mut checks = vec![
        guarded("d0sq-vertical-unit", Provenance::Paper, || {
            Ok(Check::close(
                "d0sq-vertical-unit",
                d0_squared_exact(&Point(vec![0.0, 0.0, 1.0]))?,
                4.0 * PI,
                1e-10,
                Provenance::Paper,
            ))
        }),
        guarded("d0-horizontal-3-4", Provenance::Paper, || {
            Ok(Check::close("d0-horizontal-3-4", d0_exact(&Point(vec![3.0, 4.0, 0.0]))?, 5.0, 1e-12, Provenance::Paper))
        }),
    ];
    let mut r = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut points = Vec::new();
    while points.len() < opts.samples.max(1) {
        let p = random_point(&mut r, 3, 1.0);
        match heisenberg::theta(p.0[0], p.0[1], p.0[2]) {
            Ok(th) if th.abs() <= 2.8 => {
                let target = r.gen_range(0.2..2.0);
                points.push(g.dilate(target / d0_exact(&p).unwrap_or(1.0), &p).unwrap_or(p));
            }
            _ => {}
        }
    }
    checks.push(guarded("exact-vs-shooting", Provenance::Derived, || {
        let mut worst = 0.0f64;
        for p in &points {
            let exact = d0_squared_exact(p)?;
            let s = shoot_distance(&g, p, &ShootingOptions::default())?;
            worst = worst.max((s.distance * s.distance - exact).abs() / exact.max(1.0));
        }
        Ok(Check::at_most("exact-vs-shooting", worst, 1e-4, Provenance::Derived))
    }));
    checks.push(guarded("exact-vs-oracle", Provenance::Derived, || {
        let mut worst = 0.0f64;
        for p in points.iter().take(5) {
            let d = control_oracle(&g, p, &OracleOptions::default())?.distance;
            worst = worst.max((d - d0_exact(p)?).abs() / d0_exact(p)?);
        }
        Ok(Check::at_most("exact-vs-oracle", worst, 1e-2, Provenance::Derived))
    }));
    checks.push(guarded("dilation-homogeneity", Provenance::Trivial, || {
        let mut worst = 0.0f64;
        for p in &points {
            let s = r.gen_range(0.1..5.0);
            let q = random_point(&mut r, 3, 1.0);
            let d = DistanceBackend::Exact.distance(&g, p, &q)?;
            let ds = DistanceBackend::Exact.distance(&g, &g.dilate(s, p)?, &g.dilate(s, &q)?)?;
            worst = worst.max((ds - s * d).abs() / (s * d));
        }
        Ok(Check::at_most("dilation-homogeneity", worst, 1e-6, Provenance::Trivial))
    }));
    checks
}

fn theory_suite(opts: &VerifyOptions) -> Vec<Check> {
    let g = heis();
    let mut checks = Vec::new();
    let d0sq = ScalarField::distance_squared(g.clone(), DistanceBackend::Exact).expect("exact backend");
    let grid = standard_grid(
        &g,
        &GridSpec {
            seed: opts.seed,
            ..Default::default()
        },
        d0_exact,
    )
    .unwrap_or_default();

    let mut c_hat = f64::NAN;
    checks.push(guarded("d0sq-semiconcave", Provenance::Paper, || {
        let rep = semiconcavity_scan(&d0sq, &grid, &ProbeConfig::default())?;
        c_hat = rep.final_sup();
        Ok(Check::flag(
            "d0sq-semiconcave",
            rep.verdict == Verdict::Bounded,
            Some(c_hat),
            Provenance::Paper,
            format!("verdict {}", rep.verdict),
        ))
    }));
    let e1 = HorizontalVec(vec![1.0, 0.0]);
    for (z, name) in [(1.0, "limit-at-0-0-1"), (4.0, "limit-at-0-0-4")] {
        checks.push(guarded(name, Provenance::Paper, || {
            let p = Point(vec![0.0, 0.0, z]);
            let want = -4.0 * d0_exact(&p)?;
            let lim = first_order_limit(&d0sq, &p, &e1, &DEFAULT_LADDER)?;
            Ok(Check::close(name, lim.limit, want, 0.01 * want.abs(), Provenance::Paper))
        }));
    }
    checks.push(guarded("no-semiconvexity", Provenance::Paper, || {
        let q2 = second_diff(&d0sq, &Point(vec![0.0, 0.0, 1.0]), &e1.scaled(1e-2))? / 1e-4;
        Ok(Check::at_most("no-semiconvexity", q2, -1e3, Provenance::Paper))
    }));
    checks.push(guarded("engel-blowup", Provenance::Paper, || {
        let engel = GroupSpec::builtin("engel")?;
        let f = ScalarField::distance(engel, DistanceBackend::Oracle(OracleOptions::default()))?;
        let config = ProbeConfig {
            ladder: vec![0.2, 0.1, 0.05, 0.025],
            directions: Some(vec![e1.clone()]),
            ..Default::default()
        };
        let rep = semiconcavity_scan(&f, &[Point(vec![0.0, 1.0, 0.0, 0.0])], &config)?;
        Ok(Check::flag(
            "engel-blowup",
            rep.verdict == Verdict::Blowup,
            Some(rep.final_sup()),
            Provenance::Paper,
            format!("verdict {}", rep.verdict),
        ))
    }));
    checks.push(guarded("hopf-lax-constant-ratio", Provenance::Paper, || {
        let datum = InitialDatum::TruncatedDistance {
            center: g.zero(),
            cap: 1.0,
        };
        let probe_points = vec![
            g.zero(),
            Point(vec![0.3, 0.2, 0.05]),
            Point(vec![-0.4, 0.1, -0.1]),
            Point(vec![0.1, -0.5, 0.02]),
        ];
        let mut sups = Vec::new();
        for t in [1.0, 2.0] {
            let u = hopf_lax_field(&g, &datum, &PhiSpec::Quadratic, t, &DistanceBackend::Exact, &HopfLaxOptions::default())?;
            let rep = semiconcavity_scan(&u, &probe_points, &ProbeConfig::default())?;
            if rep.verdict != Verdict::Bounded {
                return Ok(Check::failed("hopf-lax-constant-ratio", Provenance::Paper, format!("t = {t}: {}", rep.verdict)));
            }
            sups.push(rep.final_sup());
        }
        Ok(Check::close("hopf-lax-constant-ratio", sups[1] / sups[0], 0.5, 0.125, Provenance::Paper))
    }));
    checks.push(guarded("eikonal-d0", Provenance::Paper, || {
        let d0 = ScalarField::distance(g.clone(), DistanceBackend::Exact)?;
        let mut worst = 0.0f64;
        for p in grid.iter().filter(|p| p.0[0].hypot(p.0[1]) > 0.1) {
            if heisenberg::theta(p.0[0], p.0[1], p.0[2])?.abs() < 2.8 {
                worst = worst.max(eikonal_residual(&d0, p, 1e-5, None)?);
            }
        }
        Ok(Check::at_most("eikonal-d0", worst, 1e-4, Provenance::Paper))
    }));
    checks.push(guarded("set-distance-squared-semiconcave", Provenance::Paper, || {
        let set = vec![Point(vec![1.0, 0.0, 0.0]), Point(vec![-1.0, 0.0, 0.0])];
        let f = set_distance_field(&g, set, DistanceBackend::Exact, true)?;
        let pts: Vec<Point> = grid.iter().filter(|p| p.norm() <= 2.0).cloned().collect();
        let rep = semiconcavity_scan(&f, &pts, &ProbeConfig::default())?;
        Ok(Check::flag(
            "set-distance-squared-semiconcave",
            rep.verdict == Verdict::Bounded,
            Some(rep.final_sup()),
            Provenance::Paper,
            format!("verdict {}", rep.verdict),
        ))
    }));
    checks.push(guarded("horizontal-laplacian-bound", Provenance::Paper, || {
        let mut worst = f64::NEG_INFINITY;
        for p in &grid {
            if p.0[0].hypot(p.0[1]) < 1e-2 * p.0[2].abs().sqrt().max(1e-3) {
                continue;
            }
            let h = fd_horizontal_hessian(&d0sq, p, 1e-4)?;
            worst = worst.max(h[0][0] + h[1][1]);
        }
        Ok(Check::at_most("horizontal-laplacian-bound", worst, 2.0 * c_hat, Provenance::Paper))
    }));
    checks.push(guarded("cube-profile-semiconcave", Provenance::Paper, || {
        let d0 = ScalarField::distance(g.clone(), DistanceBackend::Exact)?;
        let f = compose_with_psi("cube", |s| s * s * s, d0);
        let pts: Vec<Point> = grid.iter().filter(|p| d0_exact(p).map_or(false, |d| d <= 2.0)).cloned().collect();
        let rep = semiconcavity_scan(&f, &pts, &ProbeConfig::default())?;
        Ok(Check::flag(
            "cube-profile-semiconcave",
            rep.verdict == Verdict::Bounded,
            Some(rep.final_sup()),
            Provenance::Paper,
            format!("verdict {}", rep.verdict),
        ))
    }));
    checks
}
