//! Discrete domains: `U_N` is the connected set of lattice sites reachable
//! from `floor(N x0)` through sites lying in `N*U` at distance at least one
//! from the scaled boundary, and `bd U_N` are its sites with a 4-neighbour
//! outside `U_N`.

use crate::continuum::NiceDomain;
use num_complex::Complex64;
use std::collections::VecDeque;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("scale N = {0} too small (need N >= 2)")]
    ScaleTooSmall(u32),
    #[error("reference point {0:?} does not survive the distance-1 pruning")]
    BadReferencePoint((f64, f64)),
    #[error("empty interior after pruning")]
    EmptyInterior,
    #[error("anchor {0:?} is outside the requested strip slice")]
    AnchorOutsideSlice(Site),
    #[error("boundary set is empty")]
    NoBoundary,
    #[error("polygon needs at least 3 vertices")]
    DegeneratePolygon,
}

/// A lattice site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    pub x: i32,
    pub y: i32,
}

impl Site {
    pub fn new(x: i32, y: i32) -> Self {
        Site { x, y }
    }

    pub fn neighbors(self) -> [Site; 4] {
        [
            Site::new(self.x + 1, self.y),
            Site::new(self.x - 1, self.y),
            Site::new(self.x, self.y + 1),
            Site::new(self.x, self.y - 1),
        ]
    }

    /// Euclidean distance to another site.
    pub fn dist(self, other: Site) -> f64 {
        let dx = (self.x - other.x) as f64;
        let dy = (self.y - other.y) as f64;
        (dx * dx + dy * dy).sqrt()
    }

    /// Chebyshev distance, the metric of the square contours `C_R`.
    pub fn dist_inf(self, other: Site) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.x as f64, self.y as f64)
    }
}

/// Continuum domain admissible for discretisation.
#[derive(Debug, Clone)]
pub enum DomainSpec {
    Analytic(NiceDomain),
    /// Simple polygon given by its vertices in order (closed implicitly).
    Polygon(Vec<(f64, f64)>),
}

impl DomainSpec {
    pub fn unit_disc() -> Self {
        DomainSpec::Analytic(NiceDomain::UnitDisc)
    }

    fn contains(&self, p: (f64, f64)) -> bool {
        match self {
            DomainSpec::Analytic(d) => d.contains(Complex64::new(p.0, p.1)),
            DomainSpec::Polygon(v) => point_in_polygon(p, v),
        }
    }

    /// Dense boundary polyline for distance queries where no closed form
    /// exists (Möbius images, polygons).
    fn boundary_polyline(&self, n: u32) -> Vec<(f64, f64)> {
        match self {
            DomainSpec::Analytic(NiceDomain::UnitDisc)
            | DomainSpec::Analytic(NiceDomain::Disc { .. }) => Vec::new(),
            DomainSpec::Analytic(d) => {
                let samples = (16 * n).max(256) as usize;
                (0..=samples)
                    .map(|k| {
                        let th = 2.0 * std::f64::consts::PI * k as f64 / samples as f64;
                        let z = d.boundary_point(th);
                        (z.re, z.im)
                    })
                    .collect()
            }
            DomainSpec::Polygon(v) => {
                let mut p = v.clone();
                p.push(v[0]);
                p
            }
        }
    }

    fn bounding_box(&self) -> ((f64, f64), (f64, f64)) {
        match self {
            DomainSpec::Analytic(NiceDomain::UnitDisc) => ((-1.0, -1.0), (1.0, 1.0)),
            DomainSpec::Analytic(NiceDomain::Disc { center, radius }) => (
                (center.re - radius, center.im - radius),
                (center.re + radius, center.im + radius),
            ),
            DomainSpec::Analytic(d) => {
                let mut lo = (f64::MAX, f64::MAX);
                let mut hi = (f64::MIN, f64::MIN);
                for k in 0..512 {
                    let th = 2.0 * std::f64::consts::PI * k as f64 / 512.0;
                    let z = d.boundary_point(th);
                    lo = (lo.0.min(z.re), lo.1.min(z.im));
                    hi = (hi.0.max(z.re), hi.1.max(z.im));
                }
                (lo, hi)
            }
            DomainSpec::Polygon(v) => {
                let mut lo = (f64::MAX, f64::MAX);
                let mut hi = (f64::MIN, f64::MIN);
                for &(x, y) in v {
                    lo = (lo.0.min(x), lo.1.min(y));
                    hi = (hi.0.max(x), hi.1.max(y));
                }
                (lo, hi)
            }
        }
    }
}

fn point_in_polygon(p: (f64, f64), v: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let n = v.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = v[i];
        let (xj, yj) = v[j];
        if (yi > p.1) != (yj > p.1) && p.0 < (xj - xi) * (p.1 - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn polyline_distance(p: (f64, f64), poly: &[(f64, f64)]) -> f64 {
    let mut best = f64::MAX;
    for w in poly.windows(2) {
        let (ax, ay) = w[0];
        let (bx, by) = w[1];
        let (ux, uy) = (bx - ax, by - ay);
        let len2 = ux * ux + uy * uy;
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((p.0 - ax) * ux + (p.1 - ay) * uy) / len2).clamp(0.0, 1.0)
        };
        let (cx, cy) = (ax + t * ux, ay + t * uy);
        let d2 = (p.0 - cx).powi(2) + (p.1 - cy).powi(2);
        best = best.min(d2);
    }
    best.sqrt()
}

/// How a site relates to the discrete domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteKind {
    /// In `U_N \ bd U_N`: the walk moves freely here.
    Interior,
    /// In `bd U_N`: absorbing.
    Boundary,
    Outside,
}

const OUTSIDE: u32 = u32::MAX;

/// The discretised domain `U_N` with its site index maps.
///
/// Immutable after construction; interior sites come first in the dense
/// index, boundary sites after, each block in lexicographic `(x, y)` order.
#[derive(Debug, Clone)]
pub struct LatticeDomain {
    n: u32,
    x0: Site,
    min_x: i32,
    min_y: i32,
    width: usize,
    height: usize,
    grid: Vec<u32>,
    sites: Vec<Site>,
    n_interior: usize,
    digest: u64,
}

impl LatticeDomain {
    /// Discretise `d` at scale `N` around the reference point `x0`.
    pub fn discretize(d: &DomainSpec, n: u32, x0: (f64, f64)) -> Result<Self, LatticeError> {
        if n < 2 {
            return Err(LatticeError::ScaleTooSmall(n));
        }
        let nf = n as f64;
        let polyline: Vec<(f64, f64)> = d
            .boundary_polyline(n)
            .iter()
            .map(|&(x, y)| (x * nf, y * nf))
            .collect();
        let scaled = |s: Site| (s.x as f64, s.y as f64);
        let admissible = |s: Site| -> bool {
            let p = scaled(s);
            d.contains((p.0 / nf, p.1 / nf)) && d.boundary_distance_scaled(p, &polyline, nf) >= 1.0
        };

        let x0_site = Site::new((nf * x0.0).floor() as i32, (nf * x0.1).floor() as i32);
        if !admissible(x0_site) {
            return Err(LatticeError::BadReferencePoint(x0));
        }

        let ((lo_x, lo_y), (hi_x, hi_y)) = d.bounding_box();
        let min_x = (lo_x * nf).floor() as i32 - 2;
        let min_y = (lo_y * nf).floor() as i32 - 2;
        let max_x = (hi_x * nf).ceil() as i32 + 2;
        let max_y = (hi_y * nf).ceil() as i32 + 2;
        let width = (max_x - min_x + 1) as usize;
        let height = (max_y - min_y + 1) as usize;

        // flood fill of the admissible set from the reference site
        let idx_of = |s: Site| -> usize {
            (s.y - min_y) as usize * width + (s.x - min_x) as usize
        };
        let in_box =
            |s: Site| s.x >= min_x && s.x <= max_x && s.y >= min_y && s.y <= max_y;
        let mut member = vec![false; width * height];
        let mut queue = VecDeque::new();
        member[idx_of(x0_site)] = true;
        queue.push_back(x0_site);
        while let Some(s) = queue.pop_front() {
            for nb in s.neighbors() {
                if in_box(nb) && !member[idx_of(nb)] && admissible(nb) {
                    member[idx_of(nb)] = true;
                    queue.push_back(nb);
                }
            }
        }

        Self::from_member_grid(n, x0_site, min_x, min_y, width, height, member)
    }

    /// Assemble the domain from a membership grid: classify boundary sites,
    /// build index maps, compute the digest.
    fn from_member_grid(
        n: u32,
        x0: Site,
        min_x: i32,
        min_y: i32,
        width: usize,
        height: usize,
        member: Vec<bool>,
    ) -> Result<Self, LatticeError> {
        let idx_of =
            |s: Site| (s.y - min_y) as usize * width + (s.x - min_x) as usize;
        let in_box = |s: Site| {
            s.x >= min_x
                && s.x < min_x + width as i32
                && s.y >= min_y
                && s.y < min_y + height as i32
        };
        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        for iy in 0..height {
            for ix in 0..width {
                if !member[iy * width + ix] {
                    continue;
                }
                let s = Site::new(min_x + ix as i32, min_y + iy as i32);
                let is_boundary = s
                    .neighbors()
                    .iter()
                    .any(|&nb| !in_box(nb) || !member[idx_of(nb)]);
                if is_boundary {
                    boundary.push(s);
                } else {
                    interior.push(s);
                }
            }
        }
        if interior.is_empty() {
            return Err(LatticeError::EmptyInterior);
        }
        interior.sort_unstable();
        boundary.sort_unstable();
        let n_interior = interior.len();
        let mut sites = interior;
        sites.extend_from_slice(&boundary);

        let mut grid = vec![OUTSIDE; width * height];
        for (i, &s) in sites.iter().enumerate() {
            grid[idx_of(s)] = i as u32;
        }

        let mut digest = 0xcbf29ce484222325u64;
        let mut mix = |v: u64| {
            digest ^= v;
            digest = digest.wrapping_mul(0x100000001b3);
        };
        mix(n as u64);
        mix(n_interior as u64);
        for &s in &sites {
            mix(s.x as u32 as u64);
            mix(s.y as u32 as u64);
        }

        Ok(LatticeDomain {
            n,
            x0,
            min_x,
            min_y,
            width,
            height,
            grid,
            sites,
            n_interior,
            digest,
        })
    }

    pub fn scale(&self) -> u32 {
        self.n
    }

    pub fn x0_site(&self) -> Site {
        self.x0
    }

    /// Stable content digest; equal digests mean equal `(N, site set)`.
    pub fn digest(&self) -> u64 {
        self.digest
    }

    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn num_interior(&self) -> usize {
        self.n_interior
    }

    pub fn num_boundary(&self) -> usize {
        self.sites.len() - self.n_interior
    }

    pub fn interior_sites(&self) -> &[Site] {
        &self.sites[..self.n_interior]
    }

    pub fn boundary_sites(&self) -> &[Site] {
        &self.sites[self.n_interior..]
    }

    /// Dense index of `s` among all sites (interior block first).
    #[inline]
    pub fn site_index(&self, s: Site) -> Option<usize> {
        if s.x < self.min_x
            || s.y < self.min_y
            || s.x >= self.min_x + self.width as i32
            || s.y >= self.min_y + self.height as i32
        {
            return None;
        }
        let v = self.grid
            [(s.y - self.min_y) as usize * self.width + (s.x - self.min_x) as usize];
        (v != OUTSIDE).then_some(v as usize)
    }

    #[inline]
    pub fn kind(&self, s: Site) -> SiteKind {
        match self.site_index(s) {
            None => SiteKind::Outside,
            Some(i) if i < self.n_interior => SiteKind::Interior,
            Some(_) => SiteKind::Boundary,
        }
    }

    /// Interior index of `s` (the index used by dense interior fields).
    #[inline]
    pub fn interior_index(&self, s: Site) -> Option<usize> {
        self.site_index(s).filter(|&i| i < self.n_interior)
    }

    #[inline]
    pub fn is_interior(&self, s: Site) -> bool {
        self.interior_index(s).is_some()
    }

    pub fn site_at(&self, index: usize) -> Site {
        self.sites[index]
    }

    /// The boundary site closest in Euclidean distance to `N*z`; ties are
    /// broken by lexicographic `(x, y)` order.
    pub fn nearest_boundary_site(&self, z: (f64, f64)) -> Result<Site, LatticeError> {
        let target = (z.0 * self.n as f64, z.1 * self.n as f64);
        self.boundary_sites()
            .iter()
            .copied()
            .min_by(|&a, &b| {
                let da = (a.x as f64 - target.0).powi(2) + (a.y as f64 - target.1).powi(2);
                let db = (b.x as f64 - target.0).powi(2) + (b.y as f64 - target.1).powi(2);
                da.partial_cmp(&db).unwrap().then(a.cmp(&b))
            })
            .ok_or(LatticeError::NoBoundary)
    }

    /// Connected component containing `anchor` of
    /// `U_N intersect { |x/N - center_x| < half_width }`, with its boundary
    /// recomputed.  This is the discrete analogue of the vertical strips of
    /// the martingale decomposition.
    pub fn strip_subdomain(
        &self,
        center_x: f64,
        half_width: f64,
        anchor: Site,
    ) -> Result<LatticeDomain, LatticeError> {
        let nf = self.n as f64;
        let in_slice = |s: Site| (s.x as f64 / nf - center_x).abs() < half_width;
        if self.site_index(anchor).is_none() || !in_slice(anchor) {
            return Err(LatticeError::AnchorOutsideSlice(anchor));
        }
        let idx_of =
            |s: Site| (s.y - self.min_y) as usize * self.width + (s.x - self.min_x) as usize;
        let mut member = vec![false; self.width * self.height];
        let mut queue = VecDeque::new();
        member[idx_of(anchor)] = true;
        queue.push_back(anchor);
        while let Some(s) = queue.pop_front() {
            for nb in s.neighbors() {
                if self.site_index(nb).is_some() && in_slice(nb) && !member[idx_of(nb)] {
                    member[idx_of(nb)] = true;
                    queue.push_back(nb);
                }
            }
        }
        Self::from_member_grid(
            self.n,
            anchor,
            self.min_x,
            self.min_y,
            self.width,
            self.height,
            member,
        )
    }

    /// True when flood fill over interior sites from `x0` reaches every
    /// interior site.
    pub fn interior_is_connected(&self) -> bool {
        let start = if self.is_interior(self.x0) {
            self.x0
        } else {
            self.sites[0]
        };
        let mut seen = vec![false; self.n_interior];
        let mut queue = VecDeque::new();
        seen[self.interior_index(start).unwrap()] = true;
        queue.push_back(start);
        let mut count = 1usize;
        while let Some(s) = queue.pop_front() {
            for nb in s.neighbors() {
                if let Some(i) = self.interior_index(nb) {
                    if !seen[i] {
                        seen[i] = true;
                        count += 1;
                        queue.push_back(nb);
                    }
                }
            }
        }
        count == self.n_interior
    }

    /// Compact site list: one `x y flag` line per site.
    pub fn to_site_list(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.sites.iter().enumerate() {
            let flag = if i < self.n_interior {
                "interior"
            } else {
                "boundary"
            };
            writeln!(out, "{} {} {}", s.x, s.y, flag).unwrap();
        }
        out
    }

    pub fn same_sites(&self, other: &LatticeDomain) -> bool {
        self.digest == other.digest && self.n == other.n && self.sites == other.sites
    }
}

impl DomainSpec {
    fn boundary_distance_scaled(&self, p: (f64, f64), polyline: &[(f64, f64)], nf: f64) -> f64 {
        match self {
            DomainSpec::Analytic(NiceDomain::UnitDisc) => {
                (nf - (p.0 * p.0 + p.1 * p.1).sqrt()).abs()
            }
            DomainSpec::Analytic(NiceDomain::Disc { center, radius }) => {
                let d =
                    ((p.0 - center.re * nf).powi(2) + (p.1 - center.im * nf).powi(2)).sqrt();
                (radius * nf - d).abs()
            }
            _ => polyline_distance(p, polyline),
        }
    }
}
