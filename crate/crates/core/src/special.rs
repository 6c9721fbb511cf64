//! Distribution functions used by the score models.
//!
//! The Student-t CDF goes through the regularized incomplete beta function;
//! its inverse is found by safeguarded Newton iteration inside a bisection
//! bracket, so no closed-form quantile approximation is relied upon.

use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc_inv;
use statrs::function::gamma::ln_gamma;

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Clamp applied to probabilities before quantile inversion.
pub const PIT_EPS: f64 = 1e-12;

pub fn clamp_unit(u: f64) -> f64 {
    u.clamp(PIT_EPS, 1.0 - PIT_EPS)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_quantile(u: f64) -> f64 {
    let x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u);
    if !x.is_finite() {
        return x;
    }
    // One Newton step against the accurate CDF.
    let dens = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if dens > 0.0 {
        x - (normal_cdf(x) - u) / dens
    } else {
        x
    }
}

/// Above this many degrees of freedom the incomplete beta loses accuracy and
/// the CDF switches to a corrected normal approximation (error O(1/ν²)).
const LARGE_NU: f64 = 4e5;

/// Log density of the standard Student-t with `nu` degrees of freedom.
pub fn student_t_ln_pdf(x: f64, nu: f64) -> f64 {
    ln_gamma(0.5 * (nu + 1.0))
        - ln_gamma(0.5 * nu)
        - 0.5 * (nu * std::f64::consts::PI).ln()
        - 0.5 * (nu + 1.0) * (x * x / nu).ln_1p()
}

/// CDF of the standard Student-t.
pub fn student_t_cdf(x: f64, nu: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.is_infinite() {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = student_t_lower(-x.abs(), nu);
    if x > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Lower-tail probability for x <= 0 without cancellation.
fn student_t_lower(x: f64, nu: f64) -> f64 {
    if nu > LARGE_NU {
        let v = 0.25 / nu;
        return normal_cdf(x * (1.0 - v) / (1.0 + 2.0 * x * x * v).sqrt());
    }
    0.5 * beta_reg(0.5 * nu, 0.5, nu / (nu + x * x))
}

/// Quantile of the standard Student-t, accurate to about 1e-12 absolute.
pub fn student_t_quantile(u: f64, nu: f64) -> f64 {
    if !(0.0..=1.0).contains(&u) || u.is_nan() {
        return f64::NAN;
    }
    if u == 0.5 {
        return 0.0;
    }
    if u > 0.5 {
        return -student_t_quantile(1.0 - u, nu);
    }
    if u == 0.0 {
        return f64::NEG_INFINITY;
    }
    // Solve F(x) = u on x < 0, working with the lower tail directly.
    let mut lo = -1.0;
    while student_t_lower(lo, nu) > u {
        lo *= 2.0;
        if lo < -1e300 {
            return f64::NEG_INFINITY;
        }
    }
    let mut hi = 0.0;
    // Normal-ish starting point, pulled into the bracket.
    let mut x = normal_quantile(u).clamp(lo, hi);
    if x <= lo || x >= hi {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let fx = student_t_lower(x, nu) - u;
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let dens = student_t_ln_pdf(x, nu).exp();
        let mut next = x - fx / dens;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        if step <= 1e-13 * x.abs().max(1.0) || hi - lo <= 1e-14 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Trapezoid-free composite Simpson integration of the t density.
    fn simpson_cdf(x: f64, nu: f64) -> f64 {
        // Integrate from 0 to x and add 1/2 (symmetry).
        let n = 20_000;
        let h = x / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * student_t_ln_pdf(i as f64 * h, nu).exp();
        }
        0.5 + acc * h / 3.0
    }

    #[test]
    fn normal_cdf_at_one() {
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert!((normal_quantile(0.841_344_746_068_542_9) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn t_cdf_matches_quadrature() {
        for &nu in &[2.5, 3.0, 8.0, 50.0] {
            for &x in &[0.3, 1.0, 2.5] {
                let a = student_t_cdf(x, nu);
                let b = simpson_cdf(x, nu);
                assert!((a - b).abs() < 1e-10, "nu={nu} x={x}: {a} vs {b}");
                assert!((student_t_cdf(-x, nu) - (1.0 - b)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn t3_closed_form() {
        // T_3(x) = 1/2 + (1/pi)[x/(sqrt3 (1+x^2/3)) + atan(x/sqrt3)]
        let x: f64 = 1.0;
        let s3 = 3f64.sqrt();
        let exact = 0.5
            + (x / (s3 * (1.0 + x * x / 3.0)) + (x / s3).atan()) / std::f64::consts::PI;
        assert!((student_t_cdf(1.0, 3.0) - exact).abs() < 1e-13);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &nu in &[2.1, 3.0, 6.0, 30.0, 200.0, 1e8] {
            for &u in &[1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-12] {
                let x = student_t_quantile(u, nu);
                let back = student_t_cdf(x, nu);
                assert!(
                    (back - u).abs() <= 1e-12 * u.min(1.0 - u).max(1e-3) * 10.0 + 1e-15,
                    "nu={nu} u={u} x={x} back={back}"
                );
            }
        }
    }

    #[test]
    fn quantile_gaussian_limit() {
        let x = student_t_quantile(0.975, 1e8);
        assert!((x - 1.959_963_984_540_054).abs() < 1e-6);
    }
}
