//! Small numerical building blocks: Nelder-Mead, BFGS, damped Gauss-Newton,
//! golden-section search and Halton sequences.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub struct NelderMeadOptions {
    pub max_iterations: usize,
    /// Stop once the best value drops below this.
    pub target: f64,
    /// Stop once the simplex values spread less than this.
    pub f_tol: f64,
    /// Stop once the simplex diameter is below this.
    pub x_tol: f64,
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            target: f64::NEG_INFINITY,
            f_tol: 1e-14,
            x_tol: 1e-12,
            initial_step: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Nelder-Mead simplex minimization with the standard coefficients (1, 2, ½, ½).
pub fn nelder_mead<F>(f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        let step = if x[i] != 0.0 {
            opts.initial_step * x[i].abs().max(1e-3)
        } else {
            opts.initial_step
        };
        x[i] += step;
        let v = eval(&x);
        simplex.push((x, v));
    }

    let mut iterations = 0;
    while iterations < opts.max_iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if best <= opts.target {
            break;
        }
        let spread = (worst - best).abs();
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= opts.f_tol * (1.0 + best.abs()) && diameter <= opts.x_tol * (1.0 + norm_inf(&simplex[0].0)) {
            break;
        }
        if diameter <= f64::EPSILON * (1.0 + norm_inf(&simplex[0].0)) {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(-0.5);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for (x, v) in simplex.iter_mut().skip(1) {
                    for (xi, bi) in x.iter_mut().zip(&x_best) {
                        *xi = bi + 0.5 * (*xi - bi);
                    }
                    *v = eval(x);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        iterations,
        evaluations,
    }
}

fn norm_inf(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    pub grad_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            grad_tol: 1e-10,
        }
    }
}

/// Dense BFGS with a backtracking Armijo line search. `fg` returns value and gradient.
pub fn bfgs<F>(fg: F, x0: &[f64], opts: &BfgsOptions) -> Minimum
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = fg(&x);
    let mut evaluations = 1;
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        if norm_inf(&g) <= opts.grad_tol * (1.0 + fx.abs()) {
            break;
        }
        iterations += 1;
        let gv = DVector::from_column_slice(&g);
        let mut d: Vec<f64> = (-(&hinv * &gv)).iter().copied().collect();
        let mut slope = dot(&d, &g);
        if slope >= 0.0 {
            hinv = DMatrix::identity(n, n);
            d = g.iter().map(|v| -v).collect();
            slope = dot(&d, &g);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let (ft, gt) = fg(&xt);
            evaluations += 1;
            if ft.is_finite() && ft <= fx + 1e-4 * t * slope {
                accepted = Some((xt, ft, gt));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else { break };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let improvement = fx - fnew;
        x = xn;
        g = gn;
        fx = fnew;
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let sv = DVector::from_column_slice(&s);
            let yv = DVector::from_column_slice(&y);
            let hy = &hinv * &yv;
            let yhy = yv.dot(&hy);
            // H⁺ = H − ρ(s yᵀH + H y sᵀ) + (ρ² yᵀHy + ρ) s sᵀ
            hinv -= rho * (&sv * hy.transpose() + &hy * sv.transpose());
            hinv += (rho * rho * yhy + rho) * (&sv * sv.transpose());
        }
        if improvement.abs() <= 1e-16 * (1.0 + fx.abs()) && norm_inf(&s) <= 1e-15 * (1.0 + norm_inf(&x)) {
            break;
        }
    }
    Minimum {
        x,
        value: fx,
        iterations,
        evaluations,
    }
}

/// Solves the square or wide system `r(x) = 0` by damped Gauss-Newton with a
/// finite-difference Jacobian. Returns the iterate with the smallest residual.
pub fn gauss_newton<F>(r: F, x0: &[f64], tol: f64, max_iterations: usize, fd_step: f64) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = x0.to_vec();
    let mut rx = r(&x);
    let mut best_norm = l2(&rx);
    let mut lambda = 1e-6;
    for _ in 0..max_iterations {
        if best_norm <= tol || !best_norm.is_finite() {
            break;
        }
        let m = rx.len();
        let n = x.len();
        let mut jac = DMatrix::<f64>::zeros(m, n);
        for j in 0..n {
            let h = fd_step * (1.0 + x[j].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let (rp, rm) = (r(&xp), r(&xm));
            for i in 0..m {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let rv = DVector::from_column_slice(&rx);
        let mut improved = false;
        for _ in 0..12 {
            // minimum-norm damped step δ = −Jᵀ(JJᵀ + λI)⁻¹ r
            let jjt = &jac * jac.transpose() + DMatrix::<f64>::identity(m, m) * lambda;
            let Some(sol) = jjt.lu().solve(&rv) else {
                lambda *= 10.0;
                continue;
            };
            let delta = -(jac.transpose() * sol);
            let xn: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            let rn = r(&xn);
            let nn = l2(&rn);
            if nn.is_finite() && nn < best_norm {
                x = xn;
                rx = rn;
                best_norm = nn;
                lambda = (lambda * 0.1).max(1e-14);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (x, best_norm)
}

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
pub fn golden_max<F>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Radical inverse of `i` in `base`.
fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Point `index` of the Halton sequence in `[0,1)^dim`.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "halton dimension too large");
    (0..dim).map(|d| radical_inverse(index, PRIMES[d])).collect()
}

/// Deterministic low-discrepancy points inside the Euclidean ball of radius
/// `radius` (rejection from the enclosing cube), starting at sequence `offset`.
pub fn halton_ball(count: usize, dim: usize, radius: f64, offset: u64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut i = offset + 1;
    while out.len() < count {
        let u = halton(i, dim);
        i += 1;
        let v: Vec<f64> = u.iter().map(|t| 2.0 * t - 1.0).collect();
        if l2(&v) <= 1.0 {
            out.push(v.iter().map(|t| t * radius).collect());
        }
    }
    out
}
