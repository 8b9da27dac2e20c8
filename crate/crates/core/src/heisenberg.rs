//! Closed-form Carnot-Carathéodory distance on the Heisenberg group.
//!
//! Off the centre, `d₀²(x,y,z) = (θ/sin θ)²(x²+y²)` with `θ = μ⁻¹(4z/(x²+y²))`
//! and `μ(s) = (2s − sin 2s)/(2 sin²s)`; on the centre `d₀²(0,0,z) = 4π|z|`.
//! θ is kept signed (odd in `z`), so the first and second derivative formulas
//! hold for both signs of `z`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::Point;

/// Below this `|s|` the truncated series replace the closed forms.
pub const SERIES_CROSSOVER: f64 = 1e-4;

/// Result of inverting `μ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuInversion {
    pub value: f64,
    pub input: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Gradient and Hessian of `d₀²` at a smooth point, Euclidean and horizontal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HessianBundle {
    pub theta: f64,
    pub euclidean_grad: [f64; 3],
    pub euclidean_hess: [[f64; 3]; 3],
    pub horizontal_grad: [f64; 2],
    pub horizontal_hess: [[f64; 2]; 2],
}

/// `x − sin x`, accurate also for small `x`.
fn x_minus_sin(x: f64) -> f64 {
    if x.abs() < 1.0 {
        // x³/3! − x⁵/5! + …
        let x2 = x * x;
        let mut term = x * x2 / 6.0;
        let mut sum = term;
        let mut j = 1.0;
        while term.abs() > 1e-18 * sum.abs() {
            term *= -x2 / ((2.0 * j + 2.0) * (2.0 * j + 3.0));
            sum += term;
            j += 1.0;
        }
        sum
    } else {
        x - x.sin()
    }
}

/// `sin s − s cos s`, accurate also for small `s`.
fn sin_minus_s_cos(s: f64) -> f64 {
    if s.abs() < 1.0 {
        // Σ_{k≥1} (−1)^{k+1} 2k s^{2k+1}/(2k+1)!
        let s2 = s * s;
        let mut pow_over_fact = s * s2 / 6.0; // s³/3!
        let mut sum = 2.0 * pow_over_fact;
        let mut k = 2.0f64;
        loop {
            pow_over_fact *= -s2 / ((2.0 * k) * (2.0 * k + 1.0));
            let term = 2.0 * k * pow_over_fact;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
            k += 1.0;
        }
        sum
    } else {
        s.sin() - s * s.cos()
    }
}

fn check_domain(s: f64) -> Result<()> {
    if !s.is_finite() || s.abs() >= PI {
        return Err(Error::Domain(format!("|s| must be < π, got {s}")));
    }
    Ok(())
}

/// `μ(s) = (2s − sin 2s)/(2 sin²s)` on `(−π, π)`.
pub fn mu(s: f64) -> Result<f64> {
    check_domain(s)?;
    Ok(mu_raw(s))
}

fn mu_raw(s: f64) -> f64 {
    if s.abs() < SERIES_CROSSOVER {
        let s2 = s * s;
        s * (2.0 / 3.0 + s2 * (4.0 / 45.0 + s2 * 4.0 / 315.0))
    } else {
        let sn = s.sin();
        x_minus_sin(2.0 * s) / (2.0 * sn * sn)
    }
}

/// `μ′(s) = 2(sin s − s cos s)/sin³s`, strictly positive on `(−π, π)`.
pub fn mu_prime(s: f64) -> Result<f64> {
    check_domain(s)?;
    Ok(mu_prime_raw(s))
}

fn mu_prime_raw(s: f64) -> f64 {
    if s.abs() < SERIES_CROSSOVER {
        let s2 = s * s;
        2.0 / 3.0 + s2 * (4.0 / 15.0 + s2 * 4.0 / 63.0)
    } else {
        let sn = s.sin();
        2.0 * sin_minus_s_cos(s) / (sn * sn * sn)
    }
}

/// `θ cot θ`, with its series near 0.
fn theta_cot(t: f64) -> f64 {
    if t.abs() < SERIES_CROSSOVER {
        let t2 = t * t;
        1.0 - t2 / 3.0 - t2 * t2 / 45.0
    } else {
        t / t.tan()
    }
}

/// `θ / sin θ`, with its series near 0.
fn theta_over_sin(t: f64) -> f64 {
    if t.abs() < SERIES_CROSSOVER {
        let t2 = t * t;
        1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0
    } else {
        t / t.sin()
    }
}

/// Inverts `μ` by a bracketed Newton iteration on `[0, π)` and restores the sign.
pub fn mu_inverse(v: f64) -> Result<MuInversion> {
    if !v.is_finite() {
        return Err(Error::Domain(format!("μ⁻¹ needs a finite input, got {v}")));
    }
    if v == 0.0 {
        return Ok(MuInversion {
            value: 0.0,
            input: v,
            iterations: 0,
            residual: 0.0,
        });
    }
    let a = v.abs();
    let tol = 1e-13 * a.max(1.0);
    let (mut lo, mut hi) = (0.0f64, PI);
    // μ(s) ≈ 2s/3 near 0 and ≈ π/(π−s)² near π
    let mut s = if a < 1.0 { 1.5 * a } else { PI - (PI / a).sqrt() };
    s = s.clamp(lo, hi).min(PI * (1.0 - 1e-16));
    let mut iterations = 0;
    let mut best = (f64::INFINITY, s);
    for _ in 0..200 {
        iterations += 1;
        let f = mu_raw(s) - a;
        if f.abs() < best.0 {
            best = (f.abs(), s);
        }
        if f.abs() <= tol {
            break;
        }
        if f > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
        let step = f / mu_prime_raw(s);
        let mut next = s - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        s = next;
    }
    let value = best.1.copysign(v);
    Ok(MuInversion {
        value,
        input: v,
        iterations,
        residual: (mu_raw(best.1) - a).abs(),
    })
}

fn heisenberg_coords(p: &Point) -> Result<(f64, f64, f64)> {
    if p.len() != 3 {
        return Err(Error::Dimension {
            layer: "heisenberg point".into(),
            expected: 3,
            got: p.len(),
        });
    }
    Ok((p.0[0], p.0[1], p.0[2]))
}

/// Signed `θ = μ⁻¹(4z/(x²+y²))`; requires `(x,y) ≠ 0`.
pub fn theta(x: f64, y: f64, z: f64) -> Result<f64> {
    let r2 = x * x + y * y;
    if r2 == 0.0 {
        return Err(Error::NonSmooth("θ is undefined on the centre (x,y) = (0,0)".into()));
    }
    Ok(mu_inverse(4.0 * z / r2)?.value)
}

/// Exact squared CC distance from the identity.
pub fn d0_squared_exact(p: &Point) -> Result<f64> {
    let (x, y, z) = heisenberg_coords(p)?;
    Ok(d0_squared_xyz(x, y, z))
}

pub(crate) fn d0_squared_xyz(x: f64, y: f64, z: f64) -> f64 {
    let r2 = x * x + y * y;
    if r2 == 0.0 {
        return 4.0 * PI * z.abs();
    }
    let v = 4.0 * z.abs() / r2;
    if !v.is_finite() {
        return 4.0 * PI * z.abs();
    }
    let t = mu_inverse(v).map(|m| m.value).unwrap_or(0.0);
    if t > 0.5 * PI {
        // equivalent form 8|z|θ²/(2θ − sin 2θ), free of the small sin θ near π
        8.0 * z.abs() * t * t / x_minus_sin(2.0 * t)
    } else {
        let f = theta_over_sin(t);
        f * f * r2
    }
}

/// Exact CC distance from the identity.
pub fn d0_exact(p: &Point) -> Result<f64> {
    Ok(d0_squared_exact(p)?.sqrt())
}

/// Full Euclidean and horizontal first/second derivatives of `d₀²` off the centre.
pub fn derivatives(p: &Point) -> Result<HessianBundle> {
    let (x, y, z) = heisenberg_coords(p)?;
    let r2 = x * x + y * y;
    if r2 == 0.0 {
        return Err(Error::NonSmooth(format!(
            "d₀² has no classical derivatives on the centre at z = {z}"
        )));
    }
    let t = theta(x, y, z)?;
    let tc = theta_cot(t);
    let m = mu_raw(t);
    let mp = mu_prime_raw(t);
    let q = r2 * mp;

    let gx = 2.0 * tc * x;
    let gy = 2.0 * tc * y;
    let gz = 4.0 * t;

    let dxx = 2.0 * tc + 4.0 * x * x * m * m / q;
    let dyy = 2.0 * tc + 4.0 * y * y * m * m / q;
    let dxy = 4.0 * x * y * m * m / q;
    let dxz = -8.0 * x * m / q;
    let dyz = -8.0 * y * m / q;
    let dzz = 16.0 / q;

    // X₁ = ∂x − (y/2)∂z, X₂ = ∂y + (x/2)∂z
    let h11 = dxx - y * dxz + 0.25 * y * y * dzz;
    let h22 = dyy + x * dyz + 0.25 * x * x * dzz;
    let h12 = dxy - 0.5 * y * dyz + 0.5 * x * dxz - 0.25 * x * y * dzz;

    Ok(HessianBundle {
        theta: t,
        euclidean_grad: [gx, gy, gz],
        euclidean_hess: [[dxx, dxy, dxz], [dxy, dyy, dyz], [dxz, dyz, dzz]],
        horizontal_grad: [gx - 0.5 * y * gz, gy + 0.5 * x * gz],
        horizontal_hess: [[h11, h12], [h12, h22]],
    })
}
