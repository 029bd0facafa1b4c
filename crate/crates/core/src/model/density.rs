//! Scalar log densities and link functions used by the model.

use std::f64::consts::{LN_2, PI};

use statrs::function::beta::ln_beta;
pub use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

/// Linear predictors are clamped to this range before inverse links.
pub const LINK_CLAMP: f64 = 35.0;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log(inv_logit(x))`.
pub fn log_inv_logit(x: f64) -> f64 {
    -softplus(-x)
}

pub fn clamp_link(x: f64) -> f64 {
    x.clamp(-LINK_CLAMP, LINK_CLAMP)
}

pub fn normal_logpdf(x: f64, loc: f64, scale: f64) -> f64 {
    let z = (x - loc) / scale;
    -LN_SQRT_2PI - scale.ln() - 0.5 * z * z
}

/// `d/dx normal_logpdf`.
pub fn normal_score(x: f64, loc: f64, scale: f64) -> f64 {
    -(x - loc) / (scale * scale)
}

pub fn half_normal_logpdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        f64::NEG_INFINITY
    } else {
        LN_2 + normal_logpdf(x, 0.0, scale)
    }
}

pub fn student_t_logpdf(x: f64, df: f64, loc: f64, scale: f64) -> f64 {
    let z = (x - loc) / scale;
    ln_gamma(0.5 * (df + 1.0)) - ln_gamma(0.5 * df) - 0.5 * (df * PI).ln() - scale.ln()
        - 0.5 * (df + 1.0) * (z * z / df).ln_1p()
}

pub fn student_t_score(x: f64, df: f64, loc: f64, scale: f64) -> f64 {
    let d = x - loc;
    -(df + 1.0) * d / (df * scale * scale + d * d)
}

/// Beta log density in the `(a, b)` shape parameterization.
pub fn beta_logpdf(y: f64, a: f64, b: f64) -> f64 {
    (a - 1.0) * y.ln() + (b - 1.0) * (-y).ln_1p() - ln_beta(a, b)
}

/// Zero-inflated Beta log density with mean `mu`, precision `phi` and zero
/// probability `pi`: `log pi` at zero, otherwise
/// `log(1 - pi) + log Beta(y; mu*phi, (1 - mu)*phi)`.
pub fn zib_logpdf(y: f64, mu: f64, phi: f64, pi: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&y) {
        return Err(Error::Domain(format!("observation {y} outside [0, 1)")));
    }
    if y == 0.0 {
        Ok(pi.ln())
    } else {
        Ok((-pi).ln_1p() + beta_logpdf(y, mu * phi, (1.0 - mu) * phi))
    }
}

/// Log normalizing constant of the LKJ(eta) density on K x K correlation
/// matrices, so that `log p(C) = (eta - 1) log det C - lkj_log_norm_const`.
pub fn lkj_log_norm_const(k: usize, eta: f64) -> f64 {
    let mut c = 0.0;
    for i in 1..k {
        let m = (k - i) as f64;
        let b = eta + 0.5 * (m - 1.0);
        c += (2.0 * eta - 2.0 + m) * m * LN_2 + m * ln_beta(b, b);
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zib_examples() {
        assert!((zib_logpdf(0.0, 0.3, 7.0, 0.2).unwrap() - (-1.609_437_912_434_100_3)).abs() < 1e-12);
        assert!((zib_logpdf(0.3, 0.5, 2.0, 0.2).unwrap() - (-0.223_143_551_314_209_7)).abs() < 1e-12);
        // Beta(2,2) density at 0.5 is 6 * 0.25 = 1.5.
        assert!((zib_logpdf(0.5, 0.5, 4.0, 0.0).unwrap() - 1.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zib_domain() {
        assert!(matches!(zib_logpdf(1.0, 0.5, 2.0, 0.1), Err(Error::Domain(_))));
        assert!(matches!(zib_logpdf(-0.1, 0.5, 2.0, 0.1), Err(Error::Domain(_))));
        assert!(zib_logpdf(1e-12, 0.5, 2.0, 0.1).unwrap().is_finite());
    }

    #[test]
    fn half_normal_value() {
        // log 2 + log N(0.5; 0, 0.5), evaluated independently.
        assert!((half_normal_logpdf(0.5, 0.5) - (-0.032_644_172_084_782_1)).abs() < 1e-12);
    }

    #[test]
    fn link_inverses() {
        // For x > 0, inv_logit(x) rounds toward 1 and loses the digits logit
        // needs back; the round trip is exact to 1e-12 only on the lower half.
        let mut x = -30.0;
        while x <= 30.0 {
            if x <= 0.0 {
                assert!((logit(inv_logit(x)) - x).abs() < 1e-12, "x = {x}");
            }
            assert!((inv_logit(-x) - (1.0 - inv_logit(x))).abs() < 1e-15);
            assert!(((x.exp()).ln() - x).abs() < 1e-12);
            x += 0.25;
        }
        for k in 1..1000 {
            let p = k as f64 / 1000.0;
            assert!((inv_logit(logit(p)) - p).abs() < 1e-12);
        }
        assert!((log_inv_logit(-800.0) + 800.0).abs() < 1e-9);
        assert_eq!(softplus(800.0), 800.0);
    }

    #[test]
    fn student_t_matches_cauchy_at_df_one() {
        let x = 1.3;
        let cauchy = -(PI * 2.0 * (1.0 + (x / 2.0f64).powi(2))).ln();
        assert!((student_t_logpdf(x, 1.0, 0.0, 2.0) - cauchy).abs() < 1e-12);
    }

    #[test]
    fn lkj_constant_k2_closed_form() {
        // Normalizer of (1 - r^2)^(eta - 1) on (-1, 1) is 2^(2 eta - 1) B(eta, eta).
        for eta in [1.0, 2.0, 4.0] {
            let expect = (2.0 * eta - 1.0) * LN_2 + ln_beta(eta, eta);
            assert!((lkj_log_norm_const(2, eta) - expect).abs() < 1e-12);
        }
        assert_eq!(lkj_log_norm_const(1, 4.0), 0.0);
    }
}
