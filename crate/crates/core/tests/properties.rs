use carnot_core::geodesic::{control_oracle, flow_extremal, shoot_distance, OracleOptions, ShootingOptions};
use carnot_core::heisenberg::{d0_exact, d0_squared_exact};
use carnot_core::hopflax::{hopf_lax_value, HopfLaxOptions, InitialDatum, PhiSpec};
use carnot_core::probe::{second_diff, ScalarField};
use carnot_core::{Covector, DistanceBackend, GroupSpec, HorizontalVec, Point};
use proptest::prelude::*;

fn heis() -> GroupSpec {
    GroupSpec::builtin("heisenberg").unwrap()
}

fn coord() -> impl Strategy<Value = f64> {
    -3.0..3.0f64
}

fn point3() -> impl Strategy<Value = Point> {
    (coord(), coord(), coord()).prop_map(|(x, y, z)| Point(vec![x, y, z]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn triangle_inequality(p in point3(), q in point3(), r in point3()) {
        let g = heis();
        let b = DistanceBackend::Exact;
        let pr = b.distance(&g, &p, &r).unwrap();
        let via = b.distance(&g, &p, &q).unwrap() + b.distance(&g, &q, &r).unwrap();
        prop_assert!(pr <= via * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn symmetric_and_rotation_invariant(p in point3(), angle in 0.0..std::f64::consts::TAU) {
        let d = d0_exact(&p).unwrap();
        let inv = heis().inverse(&p).unwrap();
        prop_assert!((d0_exact(&inv).unwrap() - d).abs() <= 1e-12 * d.max(1.0));
        let (s, c) = angle.sin_cos();
        let rot = Point(vec![c * p.0[0] - s * p.0[1], s * p.0[0] + c * p.0[1], p.0[2]]);
        prop_assert!((d0_exact(&rot).unwrap() - d).abs() <= 1e-10 * d.max(1.0));
    }

    #[test]
    fn sandwiched_by_horizontal_and_vertical_parts(p in point3()) {
        // projection to the first layer is 1-Lipschitz, and 4π|z| bounds the pure-vertical cost
        let d2 = d0_squared_exact(&p).unwrap();
        let r2 = p.0[0] * p.0[0] + p.0[1] * p.0[1];
        prop_assert!(d2 >= r2 * (1.0 - 1e-12));
        let bound = (r2.sqrt() + (4.0 * std::f64::consts::PI * p.0[2].abs()).sqrt()).powi(2);
        prop_assert!(d2 <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn comparable_to_homogeneous_norm(p in point3()) {
        let g = heis();
        let n = g.homogeneous_norm(&p).unwrap();
        prop_assume!(n > 1e-6);
        let ratio = d0_exact(&p).unwrap() / n;
        prop_assert!((0.3..=4.0).contains(&ratio), "ratio {}", ratio);
    }

    #[test]
    fn short_normal_extremals_minimize(a in -2.0..2.0f64, b in -2.0..2.0f64, lambda in -6.0..6.0f64) {
        // before the first conjugate time 2π, the projected extremal is a geodesic
        prop_assume!(a.hypot(b) > 0.05);
        let path = flow_extremal(&heis(), &Covector(vec![a, b, lambda]), 512).unwrap();
        let d = d0_exact(path.endpoint()).unwrap();
        prop_assert!((d - a.hypot(b)).abs() <= 1e-8 * a.hypot(b), "{} vs {}", d, a.hypot(b));
    }

    #[test]
    fn second_difference_is_left_invariant(p in point3(), w in point3(), hx in -0.5..0.5f64, hy in -0.5..0.5f64) {
        // f(x) = d0²(w·x) shifted by w has the same second differences at p as d0² at w·p
        let g = heis();
        let wp = g.multiply(&w, &p).unwrap();
        let shifted = {
            let g2 = g.clone();
            let w2 = w.clone();
            ScalarField::new(g.clone(), "shifted", move |x| d0_squared_exact(&g2.multiply(&w2, x)?))
        };
        let plain = ScalarField::distance_squared(g.clone(), DistanceBackend::Exact).unwrap();
        let h = HorizontalVec(vec![hx, hy]);
        let a = second_diff(&shifted, &p, &h).unwrap();
        let b = second_diff(&plain, &wp, &h).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }
}

fn off_axis(seed: u64, count: usize) -> Vec<Point> {
    let g = heis();
    (0..count as u64)
        .map(|i| {
            let k = (seed + i) as f64;
            let p = Point(vec![(1.3 * k).sin(), (0.7 * k + 1.0).cos(), 0.4 * (2.1 * k).sin()]);
            let target = 0.3 + 1.5 * ((0.37 * k).sin() * 0.5 + 0.5);
            g.dilate(target / d0_exact(&p).unwrap(), &p).unwrap()
        })
        .collect()
}

#[test]
fn fine_oracle_tracks_exact_distance() {
    let g = heis();
    let opts = OracleOptions {
        segments: 64,
        ..Default::default()
    };
    for p in off_axis(11, 8) {
        let d = control_oracle(&g, &p, &opts).unwrap().distance;
        let exact = d0_exact(&p).unwrap();
        // piecewise-constant controls give admissible curves, never shorter than a geodesic
        assert!(d >= exact * (1.0 - 1e-6), "{d} < {exact}");
        assert!((d - exact) / exact <= 1e-3, "{p:?}: {d} vs {exact}");
    }
}

#[test]
fn oracle_and_shooting_agree_on_engel() {
    let g = GroupSpec::builtin("engel").unwrap();
    let targets = [
        Point(vec![0.5, 0.3, 0.1, 0.02]),
        Point(vec![-0.4, 0.6, -0.05, 0.03]),
        Point(vec![0.2, -0.5, 0.12, -0.04]),
    ];
    for q in targets {
        let s = shoot_distance(&g, &q, &ShootingOptions::default()).unwrap().distance;
        let o = control_oracle(&g, &q, &OracleOptions::default()).unwrap().distance;
        assert!((o - s).abs() / s <= 1e-2, "{q:?}: oracle {o}, shooting {s}");
    }
}

#[test]
fn hopf_lax_commutes_with_left_translation() {
    let g = heis();
    let c = Point(vec![0.4, -0.2, 0.3]);
    let moved = InitialDatum::Distance { center: c.clone() };
    let at_origin = InitialDatum::Distance { center: g.zero() };
    let phi = PhiSpec::power(1.5).unwrap();
    let opts = HopfLaxOptions::default();
    for p in off_axis(5, 5) {
        let a = hopf_lax_value(&g, &moved, &phi, 0.7, &p, &DistanceBackend::Exact, &opts).unwrap().value;
        let cp = g.multiply(&g.inverse(&c).unwrap(), &p).unwrap();
        let b = hopf_lax_value(&g, &at_origin, &phi, 0.7, &cp, &DistanceBackend::Exact, &opts).unwrap().value;
        assert!((a - b).abs() <= 1e-6 * (1.0 + a.abs()), "{a} vs {b}");
    }
}
