//! Continuum potential theory on nice planar domains.
//!
//! Everything here is expressed through a conformal map `f_D` of the domain
//! onto the unit disc:
//!
//! ```text
//! CR(x, D)  = (1 - |f(x)|^2) / |f'(x)|
//! G^D(x,y)  = log |1 - f(x) conj(f(y))| / |f(y) - f(x)|
//! H^D(x,z)  = |f'(z)| (1 - |f(x)|^2) / (2 pi |f(x) - f(z)|^2)
//! ```
//!
//! Supported domains are the unit disc, arbitrary discs and Möbius images of
//! the unit disc, for which `f_D` is exact.  Domains without a closed-form
//! map (strips, polygons) are served by the lattice solver instead.

mod multipoint;
mod simplex;

pub use multipoint::{
    martingale_density, multipoint_first_moment_density, MartingaleDensity, PsiFactors,
};
pub use simplex::{simplex_product_integral, SimplexSpec};

use num_complex::Complex64;
use thiserror::Error;

/// Margin used to decide strict interiority of reference points.
const INTERIOR_MARGIN: f64 = 1e-8;
/// Tolerance for `|f(z)| = 1` on boundary points.
const BOUNDARY_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ContinuumError {
    #[error("point {0} is not interior to the domain")]
    NotInterior(Complex64),
    #[error("point {0} is not on the domain boundary (|f| = {1})")]
    NotBoundary(Complex64, f64),
    #[error("green function singularity: x = y = {0}")]
    GreenSingularity(Complex64),
    #[error("psi density singularity at the trajectory start {0}")]
    PsiSingularity(Complex64),
    #[error("invalid simplex spec: {0}")]
    BadSimplex(String),
    #[error("invalid argument: {0}")]
    BadArgument(String),
}

/// A simply connected domain with an exact conformal map onto the unit disc.
#[derive(Debug, Clone, PartialEq)]
pub enum NiceDomain {
    UnitDisc,
    Disc { center: Complex64, radius: f64 },
    /// Image of the unit disc under the Möbius map
    /// `m(w) = (a w + b) / (c w + d)`; the pole `-d/c` must lie strictly
    /// outside the closed unit disc so the image is bounded.
    MobiusImage {
        a: Complex64,
        b: Complex64,
        c: Complex64,
        d: Complex64,
    },
}

impl NiceDomain {
    pub fn disc(center: Complex64, radius: f64) -> Self {
        assert!(radius > 0.0, "disc radius must be positive");
        NiceDomain::Disc { center, radius }
    }

    /// Möbius image of the unit disc; panics if the map is degenerate or the
    /// pole lies in the closed disc (unbounded image).
    pub fn mobius_image(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        let det = a * d - b * c;
        assert!(det.norm() > 1e-14, "degenerate Möbius map");
        if c.norm() > 1e-14 {
            assert!(
                (d / c).norm() > 1.0 + 1e-9,
                "Möbius pole inside the closed unit disc: image unbounded"
            );
        }
        NiceDomain::MobiusImage { a, b, c, d }
    }

    /// `f_D(x)`: the conformal map onto the unit disc.
    pub fn map(&self, x: Complex64) -> Complex64 {
        match self {
            NiceDomain::UnitDisc => x,
            NiceDomain::Disc { center, radius } => (x - center) / radius,
            // inverse of m(w) = (aw+b)/(cw+d)
            NiceDomain::MobiusImage { a, b, c, d } => (d * x - b) / (a - c * x),
        }
    }

    /// `f_D'(x)`.
    pub fn map_derivative(&self, x: Complex64) -> Complex64 {
        match self {
            NiceDomain::UnitDisc => Complex64::new(1.0, 0.0),
            NiceDomain::Disc { radius, .. } => Complex64::new(1.0 / radius, 0.0),
            NiceDomain::MobiusImage { a, b, c, d } => {
                let den = a - c * x;
                (a * d - b * c) / (den * den)
            }
        }
    }

    /// Inverse map from the unit disc back onto the domain.
    pub fn unmap(&self, w: Complex64) -> Complex64 {
        match self {
            NiceDomain::UnitDisc => w,
            NiceDomain::Disc { center, radius } => center + radius * w,
            NiceDomain::MobiusImage { a, b, c, d } => (a * w + b) / (c * w + d),
        }
    }

    pub fn contains(&self, x: Complex64) -> bool {
        self.map(x).norm() < 1.0
    }

    /// Point on the boundary at angle `theta` of the reference circle.
    pub fn boundary_point(&self, theta: f64) -> Complex64 {
        self.unmap(Complex64::from_polar(1.0, theta))
    }

    /// `|dz/dtheta|` of the boundary parameterisation, for boundary quadrature.
    pub fn boundary_speed(&self, theta: f64) -> f64 {
        let w = Complex64::from_polar(1.0, theta);
        match self {
            NiceDomain::UnitDisc => 1.0,
            NiceDomain::Disc { radius, .. } => *radius,
            NiceDomain::MobiusImage { a, b, c, d } => {
                let den = c * w + d;
                ((a * d - b * c) / (den * den)).norm()
            }
        }
    }

    fn require_interior(&self, x: Complex64) -> Result<Complex64, ContinuumError> {
        let fx = self.map(x);
        if fx.norm() < 1.0 - INTERIOR_MARGIN {
            Ok(fx)
        } else {
            Err(ContinuumError::NotInterior(x))
        }
    }

    fn require_boundary(&self, z: Complex64) -> Result<Complex64, ContinuumError> {
        let fz = self.map(z);
        if (fz.norm() - 1.0).abs() <= BOUNDARY_TOL {
            Ok(fz)
        } else {
            Err(ContinuumError::NotBoundary(z, fz.norm()))
        }
    }
}

/// A `(domain, start, exit)` triple.
#[derive(Debug, Clone)]
pub struct TripleDxz {
    pub domain: NiceDomain,
    pub start: Complex64,
    pub exit: Complex64,
}

impl TripleDxz {
    pub fn new(
        domain: NiceDomain,
        start: Complex64,
        exit: Complex64,
    ) -> Result<Self, ContinuumError> {
        domain.require_interior(start)?;
        domain.require_boundary(exit)?;
        Ok(TripleDxz {
            domain,
            start,
            exit,
        })
    }
}

/// Conformal radius `CR(x, D) = (1 - |f(x)|^2) / |f'(x)|`.
pub fn conformal_radius(d: &NiceDomain, x: Complex64) -> Result<f64, ContinuumError> {
    let fx = d.require_interior(x)?;
    Ok((1.0 - fx.norm_sqr()) / d.map_derivative(x).norm())
}

/// Green function with zero boundary values, normalised so
/// `G(x,y) ~ -log|x-y|` on the diagonal.
pub fn green_function(
    d: &NiceDomain,
    x: Complex64,
    y: Complex64,
) -> Result<f64, ContinuumError> {
    let fx = d.require_interior(x)?;
    let fy = d.require_interior(y)?;
    let sep = (fy - fx).norm();
    if sep == 0.0 {
        return Err(ContinuumError::GreenSingularity(x));
    }
    Ok(((Complex64::new(1.0, 0.0) - fx * fy.conj()).norm() / sep).ln())
}

/// Poisson kernel `H(x, z)` against arc length on the boundary.
pub fn poisson_kernel(
    d: &NiceDomain,
    x: Complex64,
    z: Complex64,
) -> Result<f64, ContinuumError> {
    let fx = d.require_interior(x)?;
    let fz = d.require_boundary(z)?;
    let fpz = d.map_derivative(z).norm();
    Ok(fpz * (1.0 - fx.norm_sqr()) / (2.0 * std::f64::consts::PI * (fx - fz).norm_sqr()))
}

/// The first-moment density of the conditioned measure:
/// `CR(x,D)^a G(x0,x) H(x,z)/H(x0,z)` inside `D`, zero outside.
pub fn psi_density(t: &TripleDxz, a: f64, x: Complex64) -> Result<f64, ContinuumError> {
    if !t.domain.contains(x) {
        return Ok(0.0);
    }
    if x == t.start {
        return Err(ContinuumError::PsiSingularity(x));
    }
    let cr = conformal_radius(&t.domain, x)?;
    let g = green_function(&t.domain, t.start, x)?;
    let hx = poisson_kernel(&t.domain, x, t.exit)?;
    let h0 = poisson_kernel(&t.domain, t.start, t.exit)?;
    Ok(cr.powf(a) * g * hx / h0)
}

/// Unconditioned first-moment density `CR(x,D)^a G(x0,x)` inside `D`.
pub fn phi_density(
    d: &NiceDomain,
    x0: Complex64,
    a: f64,
    x: Complex64,
) -> Result<f64, ContinuumError> {
    if !d.contains(x) {
        return Ok(0.0);
    }
    if x == x0 {
        return Err(ContinuumError::PsiSingularity(x));
    }
    Ok(conformal_radius(d, x)?.powf(a) * green_function(d, x0, x)?)
}
