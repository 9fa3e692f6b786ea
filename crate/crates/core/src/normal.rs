//! Standard normal density, log-CDF and Mills-ratio helpers that stay finite
//! deep in the lower tail.

use libm::erfc;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const TAIL: f64 = -5.0;
const CF_TERMS: usize = 200;

pub fn pdf(z: f64) -> f64 {
    ln_pdf(z).exp()
}

pub fn ln_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

pub fn cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `1 / (x + 2/(x + 3/(x + ...)))`, the tail of the Mills-ratio continued fraction.
fn mills_tail(x: f64) -> f64 {
    let mut t = 0.0;
    for k in (1..=CF_TERMS).rev() {
        t = k as f64 / (x + t);
    }
    t
}

/// `Phi(-x) / phi(x)` for `x >= 5`.
fn mills_ratio_upper(x: f64) -> f64 {
    1.0 / (x + mills_tail(x))
}

pub fn ln_cdf(z: f64) -> f64 {
    if z >= TAIL {
        if z > 0.0 {
            (-0.5 * erfc(z / std::f64::consts::SQRT_2)).ln_1p()
        } else {
            cdf(z).ln()
        }
    } else {
        ln_pdf(z) + mills_ratio_upper(-z).ln()
    }
}

/// `phi(a) / Phi(a)`.
pub fn pdf_over_cdf(a: f64) -> f64 {
    if a >= TAIL {
        pdf(a) / cdf(a)
    } else {
        1.0 / mills_ratio_upper(-a)
    }
}

/// `a * Phi(a) + phi(a)`, i.e. `E[max(Z + a, 0)]` for standard normal `Z`.
pub fn positive_part_mean(a: f64) -> f64 {
    if a >= TAIL {
        a * cdf(a) + pdf(a)
    } else {
        let x = -a;
        let t = mills_tail(x);
        pdf(a) * t / (x + t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert!((pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-16);
        assert!((cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((ln_cdf(0.0) + std::f64::consts::LN_2).abs() < 1e-15);
        // Phi(-1.96) = 0.024997895148220435
        assert!((cdf(-1.96) / 0.024_997_895_148_220_436 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tail_branches_join_smoothly() {
        for z in [-5.0 - 1e-9, -5.0, -4.999_999] {
            let direct = cdf(z).ln();
            assert!((ln_cdf(z) - direct).abs() < 1e-10, "{z}");
        }
        // Phi(-10) = 7.619853024160527e-24
        assert!((ln_cdf(-10.0) - 7.619_853_024_160_527e-24_f64.ln()).abs() < 1e-12);
        // far tail stays finite
        assert!(ln_cdf(-60.0).is_finite());
        assert!((pdf_over_cdf(-60.0) - 60.0).abs() < 0.02);
    }

    #[test]
    fn positive_part_mean_is_positive_and_continuous() {
        let left = positive_part_mean(-5.0 - 1e-12);
        let right = positive_part_mean(-5.0);
        assert!((left - right).abs() < 1e-14);
        let mut prev = 0.0;
        for i in 0..400 {
            let a = -30.0 + i as f64 * 0.1;
            let v = positive_part_mean(a);
            assert!(v > 0.0);
            assert!(v >= prev);
            prev = v;
        }
    }
}
