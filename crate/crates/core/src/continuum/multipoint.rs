//! Multipoint first-moment densities and the strip martingale density.

use super::{
    conformal_radius, green_function, poisson_kernel, simplex_product_integral, ContinuumError,
    SimplexSpec, TripleDxz,
};
use num_complex::Complex64;

/// The three factors of a single-trajectory density
/// `psi(x) = cr^a * green * h_ratio` with the thickness exponent left open.
///
/// For analytic domains they come from the conformal formulas; for strip
/// subdomains the lattice solver supplies them (see [`crate::martingale`]).
#[derive(Debug, Clone, Copy)]
pub struct PsiFactors {
    /// `G^D(x_i, x)` (continuum normalisation).
    pub green: f64,
    /// `H^D(x, z_i) / H^D(x_i, z_i)`.
    pub h_ratio: f64,
    /// `CR(x, D)`.
    pub conformal_radius: f64,
}

impl PsiFactors {
    pub fn from_triple(t: &TripleDxz, x: Complex64) -> Result<Option<Self>, ContinuumError> {
        if !t.domain.contains(x) {
            return Ok(None);
        }
        if x == t.start {
            return Err(ContinuumError::PsiSingularity(x));
        }
        Ok(Some(PsiFactors {
            green: green_function(&t.domain, t.start, x)?,
            h_ratio: poisson_kernel(&t.domain, x, t.exit)?
                / poisson_kernel(&t.domain, t.start, t.exit)?,
            conformal_radius: conformal_radius(&t.domain, x)?,
        }))
    }

    /// `psi` at thickness `a`.
    pub fn psi(&self, a: f64) -> f64 {
        self.conformal_radius.powf(a) * self.green * self.h_ratio
    }
}

/// First-moment density of the multipoint measure at `x`:
/// `prod_k [G_k H_k-ratio] * int_{E(a,r)} prod_k CR_k(x)^{a_k} da`.
///
/// Zero when `x` lies outside the intersection of the domains; for `r = 1`
/// it reduces to the single-trajectory `psi` density.
pub fn multipoint_first_moment_density(
    triples: &[TripleDxz],
    a: f64,
    x: Complex64,
) -> Result<f64, ContinuumError> {
    if triples.is_empty() {
        return Err(ContinuumError::BadArgument("empty triple list".into()));
    }
    let mut factors = Vec::with_capacity(triples.len());
    for t in triples {
        match PsiFactors::from_triple(t, x)? {
            Some(f) => factors.push(f),
            None => return Ok(0.0),
        }
    }
    Ok(density_from_factors(&factors, a))
}

fn density_from_factors(factors: &[PsiFactors], a: f64) -> f64 {
    let base: f64 = factors.iter().map(|f| f.green * f.h_ratio).product();
    let crs: Vec<f64> = factors.iter().map(|f| f.conformal_radius).collect();
    let spec = SimplexSpec::new(a, crs).expect("conformal radii are positive");
    base * simplex_product_integral(&spec)
}

/// Result of the truncated subset sum of the martingale approximation.
#[derive(Debug, Clone)]
pub struct MartingaleDensity {
    /// Truncated density value at the evaluation point.
    pub value: f64,
    /// Contribution of each interaction order `r = 1..=r_max`.
    pub by_order: Vec<f64>,
    /// Upper bound on the dropped `r > r_max` tail.
    pub truncation_bound: f64,
}

/// Density of the conditional-expectation measure `mu_p` at a point covered
/// by the strips with the given `psi` factors:
///
/// ```text
/// sum_{r>=1} sum_{subsets {i_1..i_r}} int_{E(a,r)} prod_k psi_{i_k}^{a_k}(x) da
/// ```
///
/// truncated at subsets of size `r_max`.  The subset sum is exponential in
/// the number of covering strips, which is why the truncation (default depth
/// 3 in the CLI) exists; the dropped tail is bounded by
/// `sum_{r>r_max} e_r(f) max_cr^a a^{r-1}/(r-1)!` where `e_r` is the
/// elementary symmetric polynomial of the per-strip factors
/// `f_i = green_i * h_ratio_i`.
pub fn martingale_density(
    factors: &[PsiFactors],
    a: f64,
    r_max: usize,
) -> Result<MartingaleDensity, ContinuumError> {
    if r_max < 1 {
        return Err(ContinuumError::BadArgument("r_max must be >= 1".into()));
    }
    let n = factors.len();
    if n == 0 {
        return Ok(MartingaleDensity {
            value: 0.0,
            by_order: Vec::new(),
            truncation_bound: 0.0,
        });
    }
    let depth = r_max.min(n);
    let mut by_order = vec![0.0; depth];
    let mut subset: Vec<usize> = Vec::with_capacity(depth);
    let mut scratch: Vec<PsiFactors> = Vec::with_capacity(depth);
    for r in 1..=depth {
        let mut total = 0.0;
        enumerate_subsets(n, r, 0, &mut subset, &mut |s| {
            scratch.clear();
            scratch.extend(s.iter().map(|&i| factors[i]));
            total += density_from_factors(&scratch, a);
        });
        by_order[r - 1] = total;
    }

    let truncation_bound = tail_bound(factors, a, depth);
    Ok(MartingaleDensity {
        value: by_order.iter().sum(),
        by_order,
        truncation_bound,
    })
}

fn enumerate_subsets(
    n: usize,
    r: usize,
    start: usize,
    subset: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    if subset.len() == r {
        visit(subset);
        return;
    }
    let remaining = r - subset.len();
    for i in start..=n.saturating_sub(remaining) {
        subset.push(i);
        enumerate_subsets(n, r, i + 1, subset, visit);
        subset.pop();
    }
}

/// `sum_{r=r_max+1}^{n} e_r(f) * cr_max^a * a^{r-1}/(r-1)!` where
/// `J_r(a; c) <= max(c)^a vol(E(a,r)) = max(c)^a a^{r-1}/(r-1)!`.
fn tail_bound(factors: &[PsiFactors], a: f64, r_max: usize) -> f64 {
    let n = factors.len();
    if r_max >= n {
        return 0.0;
    }
    let cr_max = factors
        .iter()
        .map(|f| f.conformal_radius)
        .fold(f64::MIN, f64::max)
        .max(1e-300);
    // elementary symmetric polynomials of f_i = green_i * h_ratio_i
    let mut e = vec![0.0f64; n + 1];
    e[0] = 1.0;
    for f in factors {
        let fi = f.green * f.h_ratio;
        for k in (1..=n).rev() {
            e[k] += fi * e[k - 1];
        }
    }
    let mut bound = 0.0;
    let mut fact = (1..r_max.max(1)).map(|k| k as f64).product::<f64>(); // (r_max-1)!
    for r in (r_max + 1)..=n {
        fact *= (r - 1) as f64;
        bound += e[r] * cr_max.powf(a) * a.powi(r as i32 - 1) / fact;
    }
    bound
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuum::NiceDomain;
    use crate::quad;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn unit_triple(z: Complex64) -> TripleDxz {
        TripleDxz::new(NiceDomain::UnitDisc, c(0.0, 0.0), z).unwrap()
    }

    #[test]
    fn r1_reduces_to_psi_on_a_grid() {
        let t = TripleDxz::new(NiceDomain::disc(c(0.1, 0.0), 1.5), c(0.3, 0.2), c(1.6, 0.0))
            .unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let x = c(-1.0 + 0.25 * i as f64, -1.0 + 0.25 * j as f64);
                if x == t.start {
                    continue;
                }
                let multi =
                    multipoint_first_moment_density(std::slice::from_ref(&t), 0.8, x).unwrap();
                let single = super::super::psi_density(&t, 0.8, x).unwrap();
                assert!((multi - single).abs() <= 1e-10, "{multi} vs {single}");
            }
        }
    }

    #[test]
    fn disjoint_domains_vanish() {
        let t1 = TripleDxz::new(NiceDomain::disc(c(-5.0, 0.0), 1.0), c(-5.0, 0.0), c(-4.0, 0.0))
            .unwrap();
        let t2 = TripleDxz::new(NiceDomain::disc(c(5.0, 0.0), 1.0), c(5.0, 0.0), c(6.0, 0.0))
            .unwrap();
        for x in [c(-5.2, 0.1), c(0.0, 0.0), c(5.3, -0.2)] {
            assert_eq!(
                multipoint_first_moment_density(&[t1.clone(), t2.clone()], 1.0, x).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn r2_example_matches_quadrature_oracle() {
        // two trajectories in the unit disc from 0 exiting at +1 and -1,
        // a = 1, evaluated at x = 0.5i; frozen scipy value 0.12972231375791432
        let triples = [unit_triple(c(1.0, 0.0)), unit_triple(c(-1.0, 0.0))];
        let x = c(0.0, 0.5);
        let v = multipoint_first_moment_density(&triples, 1.0, x).unwrap();
        assert_relative_eq!(v, 0.129_722_313_757_914_3, epsilon = 1e-10);

        // independent route: 1D quadrature of psi1^(a1) psi2^(1-a1) da1 with
        // the shared green/h factors appearing once
        let f1 = PsiFactors::from_triple(&triples[0], x).unwrap().unwrap();
        let f2 = PsiFactors::from_triple(&triples[1], x).unwrap().unwrap();
        let oracle = quad::integrate(
            &|a1| {
                f1.conformal_radius.powf(a1) * f2.conformal_radius.powf(1.0 - a1)
            },
            0.0,
            1.0,
            1e-12,
        ) * (f1.green * f1.h_ratio)
            * (f2.green * f2.h_ratio);
        assert_relative_eq!(v, oracle, epsilon = 1e-9);
    }

    #[test]
    fn martingale_empty_and_single() {
        let d = martingale_density(&[], 0.5, 3).unwrap();
        assert_eq!(d.value, 0.0);
        assert_eq!(d.truncation_bound, 0.0);

        let f = PsiFactors {
            green: 0.7,
            h_ratio: 1.3,
            conformal_radius: 0.4,
        };
        let d = martingale_density(&[f], 0.5, 1).unwrap();
        assert_relative_eq!(d.value, f.psi(0.5), epsilon = 1e-14);
        assert_eq!(d.truncation_bound, 0.0);
    }

    #[test]
    fn martingale_two_strips_cross_term() {
        let f1 = PsiFactors {
            green: 0.7,
            h_ratio: 1.3,
            conformal_radius: 0.4,
        };
        let f2 = PsiFactors {
            green: 0.2,
            h_ratio: 0.9,
            conformal_radius: 0.6,
        };
        let a = 0.8;
        let d1 = martingale_density(&[f1, f2], a, 1).unwrap();
        let d2 = martingale_density(&[f1, f2], a, 2).unwrap();
        assert_relative_eq!(d1.value, f1.psi(a) + f2.psi(a), epsilon = 1e-13);
        // the r = 2 increment is the explicit cross term
        let cross = (f1.green * f1.h_ratio)
            * (f2.green * f2.h_ratio)
            * simplex_product_integral(
                &SimplexSpec::new(a, vec![f1.conformal_radius, f2.conformal_radius]).unwrap(),
            );
        assert_relative_eq!(d2.value - d1.value, cross, epsilon = 1e-12);
        // truncating at r_max = 1 reports a tail bound >= the true cross term
        assert!(d1.truncation_bound >= cross);
        assert_eq!(d2.truncation_bound, 0.0);
    }

    #[test]
    fn martingale_rejects_zero_rmax() {
        assert!(martingale_density(&[], 0.5, 0).is_err());
    }
}
