//! Strip decomposition of a walk and the martingale approximation of its
//! thick-point measure.
//!
//! A trajectory is cut at the successive exits of narrow vertical strips of
//! half-width `2^-p`; each piece contributes a `(strip, start, end)` triple
//! whose `psi` factors are evaluated through the lattice solver (strips have
//! no closed-form conformal map) using the Green asymptotics:
//!
//! * `G^D(x0, x)   ~ G^{D_N}(N x0, N x) / g`
//! * `log CR(x,D)  ~ (G^{D_N}(Nx, Nx) - g log N - c0) / g`
//! * `H ratio      ~ H^{D_N}(Nx, Nz) / H^{D_N}(Nx0, Nz)`.

use crate::constants::{C0, G};
use crate::continuum::{martingale_density, MartingaleDensity, PsiFactors};
use crate::lattice::{LatticeDomain, Site, SiteKind};
use crate::solver::{green_row_cached, hit_field, PotentialField, SolverConfig, SolverError};
use crate::walk::{WalkError, WalkSample};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MartingaleError {
    #[error("walk: {0}")]
    Walk(#[from] WalkError),
    #[error("lattice: {0}")]
    Lattice(#[from] crate::lattice::LatticeError),
    #[error("solver: {0}")]
    Solver(#[from] SolverError),
    #[error("invalid argument: {0}")]
    BadArgument(String),
}

/// One strip piece of a decomposed trajectory.
pub struct StripPiece {
    pub strip: Arc<LatticeDomain>,
    /// Entry site (interior to the strip).
    pub start: Site,
    /// Exit site (on the strip boundary).
    pub end: Site,
}

/// A walk cut at the successive exits of vertical strips of half-width
/// `2^-p`.
pub struct StripDecomposition {
    pub pieces: Vec<StripPiece>,
    pub p: u32,
}

/// Decompose the path of `ws` into strip pieces at dyadic scale `p`.
///
/// The first strip is centred on the dyadic point `2^-p floor(2^p x0)`;
/// subsequent strips are centred on the successive strip-exit sites, each
/// taken as the connected component of the slice containing its entry site.
/// The last exit is the walk's boundary exit.
pub fn decompose_walk(ws: &WalkSample, p: u32) -> Result<StripDecomposition, MartingaleError> {
    let path = ws.path().ok_or(WalkError::PathRequired)?;
    let ld = ws.domain();
    let nf = ld.scale() as f64;
    let half_width = 0.5f64.powi(p as i32);

    let mut pieces = Vec::new();
    let mut idx = 0usize;
    let mut entry = path[0];
    let mut center = half_width * (path[0].x as f64 / nf / half_width).floor();
    loop {
        let strip = Arc::new(ld.strip_subdomain(center, half_width, entry)?);
        // scan forward to the first site outside this strip's interior
        let rel = path[idx..]
            .iter()
            .position(|&s| !strip.is_interior(s))
            .expect("the path exits every subdomain");
        idx += rel;
        let end = path[idx];
        debug_assert_eq!(strip.kind(end), SiteKind::Boundary);
        pieces.push(StripPiece {
            strip,
            start: entry,
            end,
        });
        if ld.kind(end) == SiteKind::Boundary {
            break;
        }
        entry = end;
        center = end.x as f64 / nf;
    }
    Ok(StripDecomposition { pieces, p })
}

/// Solver-backed `psi` factors of one strip triple at the site `x`;
/// `None` when `x` is not interior to the strip.
pub fn solver_psi_factors(
    piece: &StripPiece,
    x: Site,
    cfg: &SolverConfig,
    h_field: &PotentialField,
) -> Result<Option<PsiFactors>, MartingaleError> {
    let strip = &piece.strip;
    if !strip.is_interior(x) {
        return Ok(None);
    }
    let n = strip.scale() as f64;
    let row = green_row_cached(strip, x, cfg)?;
    let g_xx = row.value_at(strip, x).unwrap();
    let g_0x = row.value_at(strip, piece.start).unwrap();
    if g_0x <= 0.0 {
        return Ok(None); // x unreachable from the entry inside the strip
    }
    let h_x = h_field.value_at(strip, x).unwrap_or(0.0);
    let h_0 = h_field.value_at(strip, piece.start).unwrap_or(0.0);
    if h_0 <= 0.0 || h_x <= 0.0 {
        return Ok(None);
    }
    Ok(Some(PsiFactors {
        green: g_0x / G,
        h_ratio: h_x / h_0,
        conformal_radius: ((g_xx - G * n.ln() - C0) / G).exp(),
    }))
}

/// Evaluates the truncated martingale density over points of the plane.
pub struct MartingaleEvaluator {
    decomposition: StripDecomposition,
    h_fields: Vec<PotentialField>,
    a: f64,
    r_max: usize,
    cfg: SolverConfig,
}

impl MartingaleEvaluator {
    pub fn new(
        decomposition: StripDecomposition,
        a: f64,
        r_max: usize,
        cfg: SolverConfig,
    ) -> Result<Self, MartingaleError> {
        if r_max < 1 {
            return Err(MartingaleError::BadArgument("r_max must be >= 1".into()));
        }
        let h_fields = decomposition
            .pieces
            .iter()
            .map(|piece| hit_field(&piece.strip, piece.end, &cfg))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MartingaleEvaluator {
            decomposition,
            h_fields,
            a,
            r_max,
            cfg,
        })
    }

    pub fn pieces(&self) -> &[StripPiece] {
        &self.decomposition.pieces
    }

    /// Density of `mu_p` at the continuum point `x`, truncated at subsets of
    /// `r_max` strips.
    pub fn density_at(&self, x: (f64, f64)) -> Result<MartingaleDensity, MartingaleError> {
        let ld0 = &self.decomposition.pieces[0].strip;
        let nf = ld0.scale() as f64;
        let site = Site::new((x.0 * nf).floor() as i32, (x.1 * nf).floor() as i32);
        let mut factors = Vec::new();
        for (piece, h) in self.decomposition.pieces.iter().zip(&self.h_fields) {
            if let Some(f) = solver_psi_factors(piece, site, &self.cfg, h)? {
                factors.push(f);
            }
        }
        Ok(martingale_density(&factors, self.a, self.r_max)?)
    }
}

impl From<crate::continuum::ContinuumError> for MartingaleError {
    fn from(e: crate::continuum::ContinuumError) -> Self {
        MartingaleError::BadArgument(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::DomainSpec;
    use crate::walk::{sample_walk, WalkConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_disc(n: u32) -> Arc<LatticeDomain> {
        Arc::new(LatticeDomain::discretize(&DomainSpec::unit_disc(), n, (0.0, 0.0)).unwrap())
    }

    #[test]
    fn decomposition_chains_and_terminates() {
        let ld = unit_disc(48);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        rng.set_stream(1);
        let ws = sample_walk(&ld, Site::new(0, 0), &mut rng, WalkConfig::explicit(), 1).unwrap();
        let dec = decompose_walk(&ws, 2).unwrap();
        assert!(!dec.pieces.is_empty());
        for w in dec.pieces.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
        let last = dec.pieces.last().unwrap();
        assert_eq!(last.end, ws.exit());
        for piece in &dec.pieces {
            assert!(piece.strip.is_interior(piece.start));
            assert_eq!(piece.strip.kind(piece.end), SiteKind::Boundary);
            // strips really are narrow slices of the domain
            let hw = 0.25 * 48.0;
            for &s in piece.strip.interior_sites() {
                assert!((s.x as f64 - piece.start.x as f64).abs() <= 2.0 * hw + 1.0);
            }
        }
    }

    #[test]
    fn solver_factors_match_analytic_on_a_disc() {
        // the conversions are exact in the limit; on a full disc at moderate
        // N they should sit within a few percent of the conformal formulas
        let ld = unit_disc(96);
        let cfg = SolverConfig::default();
        let z_site = ld.nearest_boundary_site((1.0, 0.0)).unwrap();
        let piece = StripPiece {
            strip: ld.clone(),
            start: Site::new(0, 0),
            end: z_site,
        };
        let h = hit_field(&ld, z_site, &cfg).unwrap();
        let x = Site::new(24, 24);
        let f = solver_psi_factors(&piece, x, &cfg, &h).unwrap().unwrap();

        let xc = num_complex::Complex64::new(0.25, 0.25);
        let d = crate::continuum::NiceDomain::UnitDisc;
        let g_exact =
            crate::continuum::green_function(&d, num_complex::Complex64::new(0.0, 0.0), xc)
                .unwrap();
        let cr_exact = crate::continuum::conformal_radius(&d, xc).unwrap();
        let h_exact = crate::continuum::poisson_kernel(&d, xc, num_complex::Complex64::new(1.0, 0.0))
            .unwrap()
            / crate::continuum::poisson_kernel(
                &d,
                num_complex::Complex64::new(0.0, 0.0),
                num_complex::Complex64::new(1.0, 0.0),
            )
            .unwrap();
        assert!((f.green - g_exact).abs() < 0.05, "{} vs {}", f.green, g_exact);
        assert!(
            (f.conformal_radius - cr_exact).abs() < 0.05,
            "{} vs {}",
            f.conformal_radius,
            cr_exact
        );
        assert!((f.h_ratio - h_exact).abs() / h_exact < 0.08, "{} vs {}", f.h_ratio, h_exact);
    }

    #[test]
    fn evaluator_produces_nonnegative_density() {
        let ld = unit_disc(32);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        rng.set_stream(0);
        let ws = sample_walk(&ld, Site::new(0, 0), &mut rng, WalkConfig::explicit(), 0).unwrap();
        let dec = decompose_walk(&ws, 2).unwrap();
        let eval = MartingaleEvaluator::new(dec, 0.5, 2, SolverConfig::default()).unwrap();
        let mut positive = 0;
        for i in 0..8 {
            for j in 0..8 {
                let x = (-0.9 + 0.25 * i as f64, -0.9 + 0.25 * j as f64);
                let d = eval.density_at(x).unwrap();
                assert!(d.value >= 0.0);
                assert!(d.truncation_bound >= 0.0);
                if d.value > 0.0 {
                    positive += 1;
                }
            }
        }
        // the walk's own strips cover part of the grid
        assert!(positive > 0);
    }
}
