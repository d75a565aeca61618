//! Scalar distribution functions used throughout the crate.

use statrs::distribution::{Continuous, ContinuousCDF, StudentsT};
use statrs::function::erf::erfc_inv;

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;
pub const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF.
#[inline]
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Standard normal quantile.
pub fn std_normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let x = -SQRT_2 * erfc_inv(2.0 * p);
    // One Newton step against the CDF tightens the inverse to full precision.
    let d = std_normal_pdf(x);
    if d > 0.0 && x.is_finite() {
        x - (std_normal_cdf(x) - p) / d
    } else {
        x
    }
}

#[inline]
pub fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    std_normal_pdf((x - mu) / sigma) / sigma
}

#[inline]
pub fn normal_cdf(x: f64, mu: f64, sigma: f64) -> f64 {
    std_normal_cdf((x - mu) / sigma)
}

#[inline]
pub fn logistic_cdf(x: f64, mu: f64, s: f64) -> f64 {
    let z = (x - mu) / s;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logistic_pdf(x: f64, mu: f64, s: f64) -> f64 {
    let e = (-((x - mu) / s).abs()).exp();
    e / (s * (1.0 + e) * (1.0 + e))
}

pub fn logistic_quantile(p: f64, mu: f64, s: f64) -> f64 {
    mu + s * (p / (1.0 - p)).ln()
}

/// Location-scale Student-t; `df` must be positive.
pub fn student_t(df: f64, location: f64, scale: f64) -> StudentsT {
    StudentsT::new(location, scale, df).expect("validated Student-t parameters")
}

pub fn student_t_cdf(x: f64, df: f64, location: f64, scale: f64) -> f64 {
    student_t(df, location, scale).cdf(x)
}

pub fn student_t_pdf(x: f64, df: f64, location: f64, scale: f64) -> f64 {
    student_t(df, location, scale).pdf(x)
}

pub fn student_t_quantile(p: f64, df: f64, location: f64, scale: f64) -> f64 {
    student_t(df, location, scale).inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normal_reference_values() {
        assert_abs_diff_eq!(std_normal_cdf(0.0), 0.5, epsilon = 1e-16);
        assert_abs_diff_eq!(std_normal_cdf(1.959_963_984_540_054), 0.975, epsilon = 1e-14);
        assert_abs_diff_eq!(std_normal_quantile(0.975), 1.959_963_984_540_054, epsilon = 1e-12);
        assert_abs_diff_eq!(std_normal_pdf(0.0), FRAC_1_SQRT_2PI, epsilon = 1e-16);
    }

    #[test]
    fn logistic_cdf_quantile_inverse() {
        for &p in &[1e-9, 0.1, 0.5, 0.75, 0.999] {
            let x = logistic_quantile(p, 1.0, 0.7);
            assert_abs_diff_eq!(logistic_cdf(x, 1.0, 0.7), p, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(logistic_cdf(3f64.ln(), 0.0, 1.0), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn student_t_symmetry() {
        assert_abs_diff_eq!(student_t_cdf(0.0, 5.0, 0.0, 1.0), 0.5, epsilon = 1e-14);
        let q = student_t_quantile(0.9, 5.0, 1.0, 2.0);
        assert_abs_diff_eq!(student_t_cdf(q, 5.0, 1.0, 2.0), 0.9, epsilon = 1e-10);
    }
}
