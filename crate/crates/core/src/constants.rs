//! Universal constants of the discrete Green function asymptotics.

use std::f64::consts::PI;

/// Euler–Mascheroni constant.
pub const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;

/// `g = 2/pi`, the variance-rate constant of the planar walk's local times.
pub const G: f64 = 2.0 / PI;

/// `c0 = (2/pi) * (gamma + log(8)/2)`, the additive constant in the
/// on-diagonal Green asymptotic `G(x,x) = g log N + g log CR(x, D) + c0 + o(1)`.
pub const C0: f64 = G * (EULER_MASCHERONI + 1.039_720_770_839_917_9);

/// Recompute `c0` through an algebraically different route,
/// `(2*gamma + 3*log 2)/pi`; used by self-checks.
pub fn c0_alternate() -> f64 {
    (2.0 * EULER_MASCHERONI + 3.0 * std::f64::consts::LN_2) / PI
}

/// Thick-point local-time threshold `g * a * log^2 N`.
pub fn thickness_threshold(a: f64, n: u32) -> f64 {
    let ln = (n as f64).ln();
    G * a * ln * ln
}

/// Atom weight `log N / N^(2-a)` of the thick-point measure.
pub fn atom_weight(a: f64, n: u32) -> f64 {
    let nf = n as f64;
    nf.ln() / nf.powf(2.0 - a)
}

/// `exp(c0 * a / g)`, the multiplicative constant between the discrete
/// measures' first-moment limit and the continuum density.
pub fn limit_prefactor(a: f64) -> f64 {
    (C0 * a / G).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_match_independent_arithmetic() {
        // Frozen reference digits computed with 30-digit arithmetic.
        assert!((G - 0.636_619_772_367_581_34).abs() < 1e-15);
        assert!((C0 - 1.029_373_705_654_570_7).abs() < 1e-12);
        assert!((C0 - c0_alternate()).abs() < 1e-12);
        // half log 8 really is 1.5 log 2
        assert!((1.039_720_770_839_917_9 - 1.5 * std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn threshold_and_weight() {
        let n = 256;
        let ln = (256f64).ln();
        assert_eq!(thickness_threshold(0.5, n), G * 0.5 * ln * ln);
        assert_eq!(atom_weight(0.5, n), ln / (256f64).powf(1.5));
    }

    #[test]
    fn limit_prefactor_half() {
        assert!((limit_prefactor(0.5) - 2.244_467_317_244_953_8).abs() < 1e-12);
    }
}
