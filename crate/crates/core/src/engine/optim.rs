//! BFGS with backtracking line search.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the infinity norm of the gradient drops below this.
    pub grad_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `obj`, which returns the objective at `x` and writes its
/// gradient into the second argument. Non-finite values are treated as
/// +∞, so the search backs away from them.
pub fn minimize_bfgs<F>(mut obj: F, x0: &[f64], opts: &BfgsOptions) -> BfgsResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = obj(&x, &mut g);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return BfgsResult {
            x,
            value: f64::INFINITY,
            grad: g,
            iterations: 0,
            converged: false,
        };
    }
    // Inverse Hessian approximation, row-major.
    let mut h = identity(n);
    let mut first_step = true;
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut iterations = 0;
    let mut stalled = 0;

    while iterations < opts.max_iter {
        if inf_norm(&g) < opts.grad_tol {
            return done(x, fx, g, iterations, true);
        }
        iterations += 1;
        for i in 0..n {
            dir[i] = -dot(&h[i * n..(i + 1) * n], &g);
        }
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) {
            h = identity(n);
            dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
            slope = -dot(&g, &g);
        }
        let mut step = if first_step {
            (1.0 / inf_norm(&dir)).min(1.0)
        } else {
            1.0
        };
        let mut accepted = false;
        let mut f_new = f64::INFINITY;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            f_new = obj(&x_new, &mut g_new);
            if f_new.is_finite()
                && g_new.iter().all(|v| v.is_finite())
                && f_new <= fx + 1e-4 * step * slope
            {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Line search failed along the quasi-Newton direction; retry once
            // from steepest descent before giving up.
            if stalled == 0 {
                stalled = 1;
                h = identity(n);
                first_step = true;
                continue;
            }
            let converged = inf_norm(&g) < opts.grad_tol;
            return done(x, fx, g, iterations, converged);
        }
        stalled = 0;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() && sy > 0.0 {
            if first_step {
                let scale = sy / dot(&yv, &yv);
                h.iter_mut().for_each(|v| *v *= scale);
            }
            bfgs_update(&mut h, &s, &yv, sy);
        }
        first_step = false;
        let f_change = fx - f_new;
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        fx = f_new;
        if f_change.abs() <= 1e-15 * fx.abs().max(1.0) && inf_norm(&s) < 1e-12 {
            let converged = inf_norm(&g) < opts.grad_tol;
            return done(x, fx, g, iterations, converged);
        }
    }
    let converged = inf_norm(&g) < opts.grad_tol;
    done(x, fx, g, iterations, converged)
}

fn done(x: Vec<f64>, value: f64, grad: Vec<f64>, iterations: usize, converged: bool) -> BfgsResult {
    BfgsResult {
        x,
        value,
        grad,
        iterations,
        converged,
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

/// H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ with ρ = 1/(yᵀs).
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    let coef = (1.0 + rho * yhy) * rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

/// Central-difference derivative of `f` along coordinate `i`.
pub(crate) fn central_difference<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], i: usize) -> f64 {
    let h = 1e-5 * x[i].abs().max(1.0);
    let mut xp = x.to_vec();
    xp[i] = x[i] + h;
    let up = f(&xp);
    xp[i] = x[i] - h;
    let dn = f(&xp);
    (up - dn) / (2.0 * h)
}
