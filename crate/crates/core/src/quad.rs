//! Small numerical integration toolkit: adaptive Simpson in 1D and a
//! polar-grid rule for integrals over discs.

/// Adaptive Simpson quadrature with an absolute tolerance.
///
/// The integrand must be finite on the open interval; endpoints are only
/// evaluated once, so integrable endpoint singularities can be handled by
/// the caller nudging the limits.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    adaptive(f, a, b, fa, fm, fb, whole, abs_tol, 50)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adaptive(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + adaptive(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}

/// Integral of `f` over the disc `{|x - center| < radius}` in polar
/// coordinates: adaptive in `r`, trapezoid with `n_theta` points in the
/// angle (spectrally accurate for smooth periodic integrands).
pub fn integrate_disc(
    f: &dyn Fn(num_complex::Complex64) -> f64,
    center: num_complex::Complex64,
    radius: f64,
    n_theta: usize,
    abs_tol: f64,
) -> f64 {
    let ring = |r: f64| -> f64 {
        let mut s = 0.0;
        for k in 0..n_theta {
            let th = 2.0 * std::f64::consts::PI * (k as f64) / (n_theta as f64);
            let x = center + num_complex::Complex64::from_polar(r, th);
            s += f(x);
        }
        s * 2.0 * std::f64::consts::PI / (n_theta as f64) * r
    };
    // nudge away from r = 0 where radial densities often have a log factor
    integrate(&ring, radius * 1e-9, radius, abs_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn polynomial_exact() {
        let v = integrate(&|x| x * x * x - 2.0 * x + 1.0, -1.0, 2.0, 1e-12);
        // antiderivative x^4/4 - x^2 + x
        let exact = (16.0 / 4.0 - 4.0 + 2.0) - (0.25 - 1.0 - 1.0);
        assert!((v - exact).abs() < 1e-10);
    }

    #[test]
    fn log_singularity() {
        // int_0^1 log(1/x) dx = 1
        let v = integrate(&|x| (1.0 / x).ln(), 1e-14, 1.0, 1e-11);
        assert!((v - 1.0).abs() < 1e-7, "{v}");
    }

    #[test]
    fn disc_area() {
        let v = integrate_disc(&|_| 1.0, Complex64::new(0.3, -0.1), 0.7, 64, 1e-10);
        assert!((v - std::f64::consts::PI * 0.49).abs() < 1e-8);
    }

    #[test]
    fn disc_radial_log() {
        // int_{|x|<1} log(1/|x|) dx = pi/2
        let v = integrate_disc(&|x| (1.0 / x.norm()).ln(), Complex64::new(0.0, 0.0), 1.0, 16, 1e-10);
        assert!((v - std::f64::consts::PI / 2.0).abs() < 1e-7);
    }
}
