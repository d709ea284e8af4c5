//! Product integrals over the thickness simplex
//! `E(a,r) = { (a_1..a_r) in (0,a]^r : sum a_k = a }` with Lebesgue measure
//! `da_1 .. da_{r-1}`.

use super::ContinuumError;
use crate::quad;

/// Per-level absolute tolerance of the recursive quadrature for `r >= 3`.
const LEVEL_TOL: f64 = 1e-9;

/// Specification of a simplex product integral
/// `int_{E(a,r)} prod_k c_k^{a_k} da`.
#[derive(Debug, Clone)]
pub struct SimplexSpec {
    a: f64,
    coefficients: Vec<f64>,
}

impl SimplexSpec {
    pub fn new(a: f64, coefficients: Vec<f64>) -> Result<Self, ContinuumError> {
        if !(a > 0.0 && a < 2.0) {
            return Err(ContinuumError::BadSimplex(format!(
                "thickness a = {a} outside (0,2)"
            )));
        }
        if coefficients.is_empty() {
            return Err(ContinuumError::BadSimplex("r must be >= 1".into()));
        }
        if coefficients.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
            return Err(ContinuumError::BadSimplex(
                "all coefficients must be positive and finite".into(),
            ));
        }
        Ok(SimplexSpec { a, coefficients })
    }

    pub fn thickness(&self) -> f64 {
        self.a
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }
}

/// `int_{E(a,r)} prod_k c_k^{a_k} da_1 .. da_{r-1}`.
///
/// For `r = 1` the simplex degenerates to the point `a_1 = a` and the value
/// is `c_1^a`.  Coefficients are sorted internally, so permuting them gives a
/// bit-identical result.
pub fn simplex_product_integral(spec: &SimplexSpec) -> f64 {
    let mut c = spec.coefficients.clone();
    c.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eval(spec.a, &c)
}

fn eval(t: f64, c: &[f64]) -> f64 {
    match c.len() {
        1 => c[0].powf(t),
        2 => pair(t, c[0], c[1]),
        _ => {
            // integrate out the last coordinate:
            //   J_r(t) = int_0^t J_{r-1}(s) c_r^(t-s) ds
            let (head, last) = c.split_at(c.len() - 1);
            let cr = last[0];
            let f = |s: f64| eval(s, head) * cr.powf(t - s);
            quad::integrate(&f, 0.0, t, LEVEL_TOL)
        }
    }
}

/// Closed form `(c1^t - c2^t) / (log c1 - log c2)`, evaluated through
/// `expm1` so that clustered coefficients lose no precision; the equal
/// coefficient limit is `t c^t`.
fn pair(t: f64, c1: f64, c2: f64) -> f64 {
    let d = c1.ln() - c2.ln();
    if d == 0.0 {
        return t * c1.powf(t);
    }
    // (e^{t ln c1} - e^{t ln c2})/d = c2^t expm1(t d)/d
    c2.powf(t) * (t * d).exp_m1() / d
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(a: f64, c: &[f64]) -> SimplexSpec {
        SimplexSpec::new(a, c.to_vec()).unwrap()
    }

    /// Brute-force oracle: iterated midpoint quadrature over the open
    /// simplex, independent of the implementation's recursion/closed forms.
    fn brute_force(a: f64, c: &[f64], n: usize) -> f64 {
        match c.len() {
            1 => c[0].powf(a),
            2 => {
                let h = a / n as f64;
                (0..n)
                    .map(|i| {
                        let a1 = (i as f64 + 0.5) * h;
                        c[0].powf(a1) * c[1].powf(a - a1)
                    })
                    .sum::<f64>()
                    * h
            }
            3 => {
                let h = a / n as f64;
                let mut s = 0.0;
                for i in 0..n {
                    let a1 = (i as f64 + 0.5) * h;
                    for j in 0..n {
                        let a2 = (j as f64 + 0.5) * h;
                        let a3 = a - a1 - a2;
                        if a3 > 0.0 {
                            s += c[0].powf(a1) * c[1].powf(a2) * c[2].powf(a3);
                        }
                    }
                }
                s * h * h
            }
            _ => unreachable!("oracle supports r <= 3"),
        }
    }

    #[test]
    fn point_mass_r1() {
        assert_eq!(simplex_product_integral(&spec(1.0, &[0.75])), 0.75);
        assert_eq!(simplex_product_integral(&spec(0.5, &[2.0])), 2f64.powf(0.5));
    }

    #[test]
    fn closed_form_r2() {
        let v = simplex_product_integral(&spec(1.0, &[1.0, std::f64::consts::E]));
        assert!((v - 1.718_281_828_459_045_2).abs() < 1e-14, "{v}");
        // degenerate equal-coefficient limit a * c^a
        let v = simplex_product_integral(&spec(0.8, &[0.6, 0.6]));
        assert!((v - 0.8 * 0.6f64.powf(0.8)).abs() < 1e-15);
        // near-equal coefficients stay stable
        let v = simplex_product_integral(&spec(1.0, &[0.6, 0.6 + 1e-13]));
        assert!((v - 0.6).abs() < 1e-10);
    }

    #[test]
    fn recursive_r3_matches_2d_quadrature() {
        // frozen: scipy dblquad of c1^a1 c2^a2 c3^(a-a1-a2) over the triangle
        let v = simplex_product_integral(&spec(1.0, &[0.5, 0.6, 0.7]));
        assert!((v - 0.297_898_054_516_814_3).abs() < 1e-8, "{v}");
        let v = simplex_product_integral(&spec(0.8, &[0.3, 0.9, 1.4]));
        assert!((v - 0.255_000_471_745_934_9).abs() < 1e-8, "{v}");
    }

    #[test]
    fn permutation_invariance_is_exact() {
        let perms: [[f64; 3]; 6] = [
            [0.31, 0.62, 0.93],
            [0.31, 0.93, 0.62],
            [0.62, 0.31, 0.93],
            [0.62, 0.93, 0.31],
            [0.93, 0.31, 0.62],
            [0.93, 0.62, 0.31],
        ];
        let base = simplex_product_integral(&spec(1.3, &perms[0]));
        for p in &perms[1..] {
            let v = simplex_product_integral(&spec(1.3, p));
            assert_eq!(v.to_bits(), base.to_bits());
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(SimplexSpec::new(0.0, vec![1.0]).is_err());
        assert!(SimplexSpec::new(2.0, vec![1.0]).is_err());
        assert!(SimplexSpec::new(1.0, vec![]).is_err());
        assert!(SimplexSpec::new(1.0, vec![0.5, -0.1]).is_err());
        assert!(SimplexSpec::new(1.0, vec![0.0]).is_err());
    }

    proptest! {
        #[test]
        fn agrees_with_brute_force_r2(a in 0.1f64..1.9, c1 in 0.1f64..1.0, c2 in 0.1f64..1.0) {
            let v = simplex_product_integral(&spec(a, &[c1, c2]));
            let o = brute_force(a, &[c1, c2], 20_000);
            prop_assert!((v - o).abs() <= 1e-6 * o.abs().max(1e-3), "{} vs {}", v, o);
        }

        #[test]
        fn agrees_with_brute_force_r3(a in 0.2f64..1.8, c1 in 0.1f64..1.0, c2 in 0.1f64..1.0, c3 in 0.1f64..1.0) {
            let v = simplex_product_integral(&spec(a, &[c1, c2, c3]));
            let o = brute_force(a, &[c1, c2, c3], 700);
            // midpoint 2D oracle carries its own O(h^2) error
            prop_assert!((v - o).abs() <= 2e-5 * o.abs().max(1e-3), "{} vs {}", v, o);
        }

        #[test]
        fn permutation_invariance_r4(a in 0.2f64..1.8, mut c in proptest::collection::vec(0.1f64..2.0, 4)) {
            let v1 = simplex_product_integral(&spec(a, &c));
            c.reverse();
            let v2 = simplex_product_integral(&spec(a, &c));
            prop_assert_eq!(v1.to_bits(), v2.to_bits());
        }
    }
}
