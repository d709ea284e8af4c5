//! Samplers for the rate-one continuous-time simple random walk stopped at
//! the discrete boundary, with local times, optional path storage, excursion
//! counting and the spatial split used by the Markov decomposition.
//!
//! Holding times are i.i.d. Exp(1) independent of the jump chain, so local
//! times can be drawn per site as Gamma(visits, 1) after the discrete path
//! has been generated; that is the default. Excursion statistics and exact
//! path splits need the time at a site partitioned over individual visits,
//! which only the per-visit mode provides.

use crate::lattice::{LatticeDomain, Site, SiteKind};
use crate::solver::PotentialField;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use std::io::{Read, Write};
use std::sync::Arc;
use thiserror::Error;

/// Hard cap on walk length; hitting it indicates a domain bug, never normal
/// behaviour, and is reported as an error rather than truncated silently.
const MAX_STEPS: u64 = 1_000_000_000;

#[derive(Debug, Error)]
pub enum WalkError {
    #[error("start site {0:?} is not interior")]
    BadStart(Site),
    #[error("walk exceeded {MAX_STEPS} steps without exiting; domain is broken")]
    RunawayWalk,
    #[error("operation requires a stored path")]
    PathRequired,
    #[error("operation requires per-visit local times (LocalTimeMode::PerVisit)")]
    PerVisitRequired,
    #[error("conditioning target {0:?} unreachable: h vanishes at the start")]
    UnreachableTarget(Site),
    #[error("h-field does not belong to this domain")]
    FieldMismatch,
    #[error("start site {0:?} is not interior to the split subdomain")]
    StartOutsideSub(Site),
    #[error("invalid argument: {0}")]
    BadArgument(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// How local times are attached to the sampled jump chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LocalTimeMode {
    /// Gamma(visits, 1) per visited site, drawn after the path.
    #[default]
    Aggregate,
    /// One Exp(1) draw per visit, kept aligned with the stored path.
    PerVisit,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WalkConfig {
    pub store_path: bool,
    pub local_time_mode: LocalTimeMode,
}

impl WalkConfig {
    /// Path plus per-visit holding times: what excursion counting and the
    /// Markov split require.
    pub fn explicit() -> Self {
        WalkConfig {
            store_path: true,
            local_time_mode: LocalTimeMode::PerVisit,
        }
    }
}

/// One simulated trajectory with its local-time field.
#[derive(Debug, Clone)]
pub struct WalkSample {
    domain: Arc<LatticeDomain>,
    start: Site,
    exit: Site,
    /// Dense over interior indices.
    visit_counts: Vec<u32>,
    /// Dense over interior indices; `> 0` exactly where `visit_counts > 0`.
    local_times: Vec<f64>,
    /// Interior indices in first-visit order.
    visited: Vec<u32>,
    path: Option<Vec<Site>>,
    /// Per-visit Exp(1) holding times, aligned with `path[..len-1]`.
    holding: Option<Vec<f64>>,
    stream_id: u64,
}

impl WalkSample {
    pub fn domain(&self) -> &Arc<LatticeDomain> {
        &self.domain
    }

    pub fn start(&self) -> Site {
        self.start
    }

    pub fn exit(&self) -> Site {
        self.exit
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn path(&self) -> Option<&[Site]> {
        self.path.as_deref()
    }

    pub fn holding_times(&self) -> Option<&[f64]> {
        self.holding.as_deref()
    }

    pub fn visits(&self, s: Site) -> u32 {
        self.domain
            .interior_index(s)
            .map_or(0, |i| self.visit_counts[i])
    }

    pub fn local_time(&self, s: Site) -> f64 {
        self.domain
            .interior_index(s)
            .map_or(0.0, |i| self.local_times[i])
    }

    /// Interior indices of visited sites, first-visit order.
    pub fn visited_indices(&self) -> &[u32] {
        &self.visited
    }

    /// Local time by interior index (see [`LatticeDomain::site_at`]).
    pub fn local_time_by_index(&self, i: usize) -> f64 {
        self.local_times[i]
    }

    pub fn total_local_time(&self) -> f64 {
        self.visited
            .iter()
            .map(|&i| self.local_times[i as usize])
            .sum()
    }

    /// Checks the structural path invariants; used by tests and the replay
    /// tooling, cheap enough to run on real samples.
    pub fn path_is_valid(&self) -> bool {
        let Some(path) = &self.path else {
            return true;
        };
        if path.first() != Some(&self.start) || path.last() != Some(&self.exit) {
            return false;
        }
        if self.domain.kind(self.exit) != SiteKind::Boundary {
            return false;
        }
        let mut counts = vec![0u32; self.domain.num_interior()];
        for w in path.windows(2) {
            if w[0].dist_inf(w[1]) != 1 || (w[0].x != w[1].x && w[0].y != w[1].y) {
                return false;
            }
        }
        for &s in &path[..path.len() - 1] {
            match self.domain.interior_index(s) {
                Some(i) => counts[i] += 1,
                None => return false,
            }
        }
        counts == self.visit_counts
    }
}

const STEPS: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Simple random walk from `start` to the boundary.
pub fn sample_walk<R: Rng>(
    ld: &Arc<LatticeDomain>,
    start: Site,
    rng: &mut R,
    cfg: WalkConfig,
    stream_id: u64,
) -> Result<WalkSample, WalkError> {
    run_walk(ld, start, rng, cfg, stream_id, |rng, _s| {
        STEPS[rng.gen_range(0..4usize)]
    })
}

/// Doob h-transform walk conditioned to exit at `h_field`'s target site:
/// from `x` the walk steps to neighbour `y` with probability proportional to
/// `h(y)`, where `h` is extended to the boundary by the indicator of the
/// target.
pub fn sample_conditioned_walk<R: Rng>(
    ld: &Arc<LatticeDomain>,
    start: Site,
    target: Site,
    h_field: &PotentialField,
    rng: &mut R,
    cfg: WalkConfig,
    stream_id: u64,
) -> Result<WalkSample, WalkError> {
    if h_field.domain_digest != ld.digest()
        || h_field.source != crate::solver::SourceKind::HarmonicTarget(target)
    {
        return Err(WalkError::FieldMismatch);
    }
    let h_at = |s: Site| -> f64 {
        match ld.kind(s) {
            SiteKind::Interior => h_field.values[ld.interior_index(s).unwrap()],
            SiteKind::Boundary => (s == target) as u32 as f64,
            SiteKind::Outside => 0.0,
        }
    };
    if h_at(start) <= 0.0 {
        return Err(WalkError::UnreachableTarget(target));
    }
    let sample = run_walk(ld, start, rng, cfg, stream_id, |rng, s| {
        let mut w = [0.0f64; 4];
        let mut total = 0.0;
        for (k, &(dx, dy)) in STEPS.iter().enumerate() {
            w[k] = h_at(Site::new(s.x + dx, s.y + dy));
            total += w[k];
        }
        let mut u = rng.gen::<f64>() * total;
        for k in 0..4 {
            if u < w[k] {
                return STEPS[k];
            }
            u -= w[k];
        }
        STEPS[3]
    })?;
    debug_assert_eq!(sample.exit, target);
    Ok(sample)
}

fn run_walk<R: Rng>(
    ld: &Arc<LatticeDomain>,
    start: Site,
    rng: &mut R,
    cfg: WalkConfig,
    stream_id: u64,
    mut step: impl FnMut(&mut R, Site) -> (i32, i32),
) -> Result<WalkSample, WalkError> {
    if !ld.is_interior(start) {
        return Err(WalkError::BadStart(start));
    }
    let per_visit = cfg.local_time_mode == LocalTimeMode::PerVisit;
    let mut visit_counts = vec![0u32; ld.num_interior()];
    let mut local_times = vec![0.0f64; ld.num_interior()];
    let mut visited: Vec<u32> = Vec::new();
    let mut path: Vec<Site> = Vec::new();
    let mut holding: Vec<f64> = Vec::new();
    let store = cfg.store_path || per_visit;

    let mut cur = start;
    let mut steps: u64 = 0;
    let exit = loop {
        let i = ld.interior_index(cur).unwrap();
        if visit_counts[i] == 0 {
            visited.push(i as u32);
        }
        visit_counts[i] += 1;
        if store {
            path.push(cur);
        }
        if per_visit {
            let h: f64 = Exp1.sample(rng);
            local_times[i] += h;
            holding.push(h);
        }
        let (dx, dy) = step(rng, cur);
        let next = Site::new(cur.x + dx, cur.y + dy);
        match ld.kind(next) {
            SiteKind::Boundary => break next,
            SiteKind::Interior => cur = next,
            SiteKind::Outside => {
                unreachable!("neighbour of an interior site left the domain")
            }
        }
        steps += 1;
        if steps >= MAX_STEPS {
            return Err(WalkError::RunawayWalk);
        }
    };
    if store {
        path.push(exit);
    }

    if !per_visit {
        // exact in distribution: the holding times are i.i.d. Exp(1)
        // independent of the jump chain
        for &i in &visited {
            let k = visit_counts[i as usize];
            local_times[i as usize] = if k == 1 {
                Exp1.sample(rng)
            } else {
                Gamma::new(k as f64, 1.0).unwrap().sample(rng)
            };
        }
    }

    Ok(WalkSample {
        domain: ld.clone(),
        start,
        exit,
        visit_counts,
        local_times,
        visited,
        path: cfg.store_path.then_some(path),
        holding: per_visit.then_some(holding),
        stream_id,
    })
}

/// Whether an excursion begun at the centre but cut off by the domain exit
/// before reaching the contour is counted.  The definition "number of
/// excursions from x to C_R(x) before tau" reads most naturally as counting
/// the started excursion, which is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TruncatedFinalExcursion {
    #[default]
    Count,
    Ignore,
}

/// Excursion statistics of one walk around a centre site.
#[derive(Debug, Clone)]
pub struct ExcursionStats {
    pub center: Site,
    pub radius: i32,
    /// `A_N(x -> R)`.
    pub count: u32,
    /// Local time at the centre accumulated during each counted excursion.
    pub local_times: Vec<f64>,
    /// `q_R = log(N/R)/log N`.
    pub q_r: f64,
}

/// Number of excursions from `x` to the square contour
/// `C_R(x) = Z^2 /\ boundary(x + [-R,R]^2)` before the domain exit.
/// Needs only the path.
pub fn excursion_count(
    ws: &WalkSample,
    x: Site,
    radius: i32,
    convention: TruncatedFinalExcursion,
) -> Result<u32, WalkError> {
    let path = ws.path().ok_or(WalkError::PathRequired)?;
    Ok(scan_excursions(path, None, x, radius, convention).0)
}

/// Excursion count plus per-excursion local times at the centre.
/// Needs the explicit per-visit mode so the centre's local time can be
/// partitioned over excursions.
pub fn count_excursions(
    ws: &WalkSample,
    x: Site,
    radius: i32,
    convention: TruncatedFinalExcursion,
) -> Result<ExcursionStats, WalkError> {
    if radius < 1 {
        return Err(WalkError::BadArgument(format!("radius {radius} < 1")));
    }
    let path = ws.path().ok_or(WalkError::PathRequired)?;
    let holding = ws.holding_times().ok_or(WalkError::PerVisitRequired)?;
    let (count, local_times) = scan_excursions(path, Some(holding), x, radius, convention);
    let n = ws.domain.scale() as f64;
    Ok(ExcursionStats {
        center: x,
        radius,
        count,
        local_times,
        q_r: (n / radius as f64).ln() / n.ln(),
    })
}

fn scan_excursions(
    path: &[Site],
    holding: Option<&[f64]>,
    x: Site,
    radius: i32,
    convention: TruncatedFinalExcursion,
) -> (u32, Vec<f64>) {
    let mut count = 0u32;
    let mut times = Vec::new();
    let mut in_excursion = false;
    let mut acc = 0.0f64;
    for (j, &s) in path.iter().enumerate() {
        if in_excursion {
            if s.dist_inf(x) >= radius {
                // first contour hit closes the excursion
                times.push(acc);
                acc = 0.0;
                in_excursion = false;
            } else if s == x {
                if let Some(h) = holding {
                    if j < h.len() {
                        acc += h[j];
                    }
                }
            }
        }
        if !in_excursion && s == x && j < path.len() - 1 {
            in_excursion = true;
            count += 1;
            if let Some(h) = holding {
                if j < h.len() {
                    acc += h[j];
                }
            }
        }
    }
    if in_excursion {
        match convention {
            TruncatedFinalExcursion::Count => times.push(acc),
            TruncatedFinalExcursion::Ignore => count -= 1,
        }
    }
    (count, times)
}

/// One scale of a good-event evaluation.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GoodEventCheck {
    pub radius: i32,
    pub count: u32,
    pub threshold: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct GoodEventReport {
    pub holds: bool,
    pub checks: Vec<GoodEventCheck>,
}

/// The good event at `x`: for every dyadic `R` in
/// `[N^(1/2 - a/4), eps N]`, the excursion count satisfies
/// `A_N(x -> R) <= (b/2) (1+q_R)/(1-q_R) log(N/R)`.
pub fn good_event(
    ws: &WalkSample,
    x: Site,
    a: f64,
    b: f64,
    eps: f64,
    convention: TruncatedFinalExcursion,
) -> Result<GoodEventReport, WalkError> {
    if b <= a {
        return Err(WalkError::BadArgument(format!("need b > a, got b={b} a={a}")));
    }
    if !(0.0..1.0).contains(&eps) || eps <= 0.0 {
        return Err(WalkError::BadArgument(format!("eps {eps} outside (0,1)")));
    }
    let n = ws.domain.scale() as f64;
    let lo = n.powf(0.5 - a / 4.0);
    let hi = eps * n;
    let mut checks = Vec::new();
    let mut holds = true;
    let mut radius = 2i64;
    while (radius as f64) <= hi {
        if radius as f64 >= lo {
            let r = radius as i32;
            let q = (n / r as f64).ln() / n.ln();
            let threshold = b / 2.0 * (1.0 + q) / (1.0 - q) * (n / r as f64).ln();
            let count = excursion_count(ws, x, r, convention)?;
            holds &= (count as f64) <= threshold;
            checks.push(GoodEventCheck {
                radius: r,
                count,
                threshold,
            });
        }
        radius *= 2;
    }
    if checks.is_empty() {
        log::debug!("good_event: empty dyadic range [{lo}, {hi}] at N={n}; vacuously true");
    }
    Ok(GoodEventReport { holds, checks })
}

/// Splits a walk at its first exit from `sub`: the piece inside `sub`, the
/// remainder, and the split site `Y` (distributed as harmonic measure of
/// `sub` from the start).  Local times partition exactly site by site.
pub fn split_at_first_exit(
    ws: &WalkSample,
    sub: &Arc<LatticeDomain>,
) -> Result<(WalkSample, WalkSample, Site), WalkError> {
    let path = ws.path().ok_or(WalkError::PathRequired)?;
    let holding = ws.holding_times().ok_or(WalkError::PerVisitRequired)?;
    if !sub.is_interior(ws.start) {
        return Err(WalkError::StartOutsideSub(ws.start));
    }
    let split = path
        .iter()
        .position(|&s| !sub.is_interior(s))
        .expect("path ends on the full boundary, which is outside sub's interior");
    let y = path[split];
    debug_assert_eq!(sub.kind(y), SiteKind::Boundary);

    let first = rebuild(sub, &path[..=split], &holding[..split], ws.stream_id);
    let second = rebuild(&ws.domain().clone(), &path[split..], &holding[split..], ws.stream_id);
    Ok((first, second, y))
}

/// Assemble a [`WalkSample`] from an explicit path piece and its holding
/// times.  Degenerate single-site paths (start on the boundary) are allowed;
/// they carry no visits.
fn rebuild(
    domain: &Arc<LatticeDomain>,
    path: &[Site],
    holding: &[f64],
    stream_id: u64,
) -> WalkSample {
    let mut visit_counts = vec![0u32; domain.num_interior()];
    let mut local_times = vec![0.0f64; domain.num_interior()];
    let mut visited = Vec::new();
    for (j, &s) in path[..path.len().saturating_sub(1)].iter().enumerate() {
        let i = domain.interior_index(s).expect("piece stays in its domain");
        if visit_counts[i] == 0 {
            visited.push(i as u32);
        }
        visit_counts[i] += 1;
        local_times[i] += holding[j];
    }
    WalkSample {
        domain: domain.clone(),
        start: path[0],
        exit: *path.last().unwrap(),
        visit_counts,
        local_times,
        visited,
        path: Some(path.to_vec()),
        holding: Some(holding.to_vec()),
        stream_id,
    }
}

// --- binary path dump -----------------------------------------------------

const PATH_DUMP_MAGIC: &[u8; 8] = b"TPPATH\x00\x01";

fn write_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            break;
        }
        out.push(byte | 0x80);
    }
}

fn read_varint(data: &mut impl Read) -> std::io::Result<u64> {
    let mut v = 0u64;
    let mut shift = 0;
    loop {
        let mut byte = [0u8; 1];
        data.read_exact(&mut byte)?;
        v |= ((byte[0] & 0x7f) as u64) << shift;
        if byte[0] & 0x80 == 0 {
            return Ok(v);
        }
        shift += 7;
    }
}

fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

fn unzigzag(v: u64) -> i64 {
    ((v >> 1) as i64) ^ -((v & 1) as i64)
}

/// Varint-delta encoded dump of path sequences, for replay and diffing.
pub fn dump_paths<W: Write>(samples: &[&WalkSample], mut w: W) -> Result<(), WalkError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(PATH_DUMP_MAGIC);
    write_varint(&mut buf, samples.len() as u64);
    for ws in samples {
        let path = ws.path().ok_or(WalkError::PathRequired)?;
        write_varint(&mut buf, path.len() as u64);
        write_varint(&mut buf, zigzag(path[0].x as i64));
        write_varint(&mut buf, zigzag(path[0].y as i64));
        for pair in path.windows(2) {
            write_varint(&mut buf, zigzag((pair[1].x - pair[0].x) as i64));
            write_varint(&mut buf, zigzag((pair[1].y - pair[0].y) as i64));
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Inverse of [`dump_paths`].
pub fn read_paths<R: Read>(mut r: R) -> Result<Vec<Vec<Site>>, WalkError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != PATH_DUMP_MAGIC {
        return Err(WalkError::BadArgument("bad path dump magic/version".into()));
    }
    let count = read_varint(&mut r)?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = read_varint(&mut r)? as usize;
        let mut path = Vec::with_capacity(len);
        let x = unzigzag(read_varint(&mut r)?) as i32;
        let y = unzigzag(read_varint(&mut r)?) as i32;
        path.push(Site::new(x, y));
        for _ in 1..len {
            let dx = unzigzag(read_varint(&mut r)?) as i32;
            let dy = unzigzag(read_varint(&mut r)?) as i32;
            let prev = *path.last().unwrap();
            path.push(Site::new(prev.x + dx, prev.y + dy));
        }
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::DomainSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_disc(n: u32) -> Arc<LatticeDomain> {
        Arc::new(LatticeDomain::discretize(&DomainSpec::unit_disc(), n, (0.0, 0.0)).unwrap())
    }

    fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(stream);
        r
    }

    #[test]
    fn path_invariants_hold() {
        let ld = unit_disc(24);
        for k in 0..50 {
            let mut r = rng(7, k);
            let ws = sample_walk(&ld, Site::new(0, 0), &mut r, WalkConfig::explicit(), k).unwrap();
            assert!(ws.path_is_valid());
            // local_times > 0 iff visits >= 1
            for i in 0..ld.num_interior() {
                assert_eq!(ws.local_times[i] > 0.0, ws.visit_counts[i] >= 1);
            }
        }
    }

    #[test]
    fn reproducibility_is_bitwise() {
        let ld = unit_disc(32);
        let run = || {
            let mut r = rng(99, 3);
            sample_walk(&ld, Site::new(1, -2), &mut r, WalkConfig::explicit(), 3).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.path, b.path);
        assert_eq!(a.exit, b.exit);
        assert_eq!(
            a.local_times.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.local_times.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn one_site_domain_single_visit() {
        let ld = unit_disc(2);
        let mut r = rng(1, 0);
        let ws = sample_walk(&ld, Site::new(0, 0), &mut r, WalkConfig::default(), 0).unwrap();
        assert_eq!(ws.visits(Site::new(0, 0)), 1);
        assert!(ws.local_time(Site::new(0, 0)) > 0.0);
    }

    #[test]
    fn aggregate_and_pervisit_agree_on_counts() {
        let ld = unit_disc(16);
        let mut r1 = rng(5, 1);
        let mut r2 = rng(5, 1);
        let a = sample_walk(&ld, Site::new(0, 0), &mut r1, WalkConfig::default(), 1).unwrap();
        let b = sample_walk(
            &ld,
            Site::new(0, 0),
            &mut r2,
            WalkConfig {
                store_path: false,
                local_time_mode: LocalTimeMode::PerVisit,
            },
            1,
        )
        .unwrap();
        // same jump chain? no: the per-visit mode interleaves Exp draws, so
        // chains differ; both must still satisfy structural invariants
        assert!(a.visits(a.exit) == 0 && b.visits(b.exit) == 0);
        assert_eq!(
            a.visited.len(),
            a.visit_counts.iter().filter(|&&c| c > 0).count()
        );
        assert_eq!(
            b.visited.len(),
            b.visit_counts.iter().filter(|&&c| c > 0).count()
        );
    }

    #[test]
    fn excursions_on_handcrafted_path() {
        let ld = unit_disc(8);
        let x = Site::new(0, 0);
        // out to the contour |.|_inf = 2 twice, third started but truncated
        let path = vec![
            Site::new(0, 0),
            Site::new(1, 0),
            Site::new(2, 0), // contour hit: excursion 1 ends
            Site::new(1, 0),
            Site::new(0, 0), // excursion 2 starts
            Site::new(0, 1),
            Site::new(0, 0),
            Site::new(0, -1),
            Site::new(0, -2), // contour hit: excursion 2 ends
            Site::new(-1, -2),
            Site::new(-1, -1),
            Site::new(-1, 0),
            Site::new(0, 0), // excursion 3 starts
            Site::new(1, 0),
            Site::new(1, 1),
            Site::new(2, 1), // contour again (excursion 3 would end here)
            Site::new(3, 1),
            Site::new(4, 1), // boundary-ish end of path
        ];
        let holding: Vec<f64> = (0..path.len() - 1).map(|i| 1.0 + i as f64).collect();
        let ws = rebuild(&ld, &path, &holding, 0);
        let stats = count_excursions(&ws, x, 2, TruncatedFinalExcursion::Count).unwrap();
        assert_eq!(stats.count, 3);
        // excursion 1: holding at path[0]; excursion 2: path[4] and path[6]
        assert_eq!(stats.local_times.len(), 3);
        assert!((stats.local_times[0] - 1.0).abs() < 1e-12);
        assert!((stats.local_times[1] - (5.0 + 7.0)).abs() < 1e-12);
        assert!((stats.local_times[2] - 13.0).abs() < 1e-12);
        assert!((stats.q_r - (8f64 / 2.0).ln() / 8f64.ln()).abs() < 1e-15);

        // never-visited centre
        let stats = count_excursions(&ws, Site::new(3, -3), 2, TruncatedFinalExcursion::Count)
            .unwrap();
        assert_eq!(stats.count, 0);
        assert!(stats.local_times.is_empty());
    }

    #[test]
    fn truncated_final_convention() {
        let ld = unit_disc(8);
        // one completed excursion, then a final visit with no contour return
        let path = vec![
            Site::new(0, 0),
            Site::new(1, 0),
            Site::new(2, 0), // contour R=2
            Site::new(1, 0),
            Site::new(0, 0), // started, never closed
            Site::new(0, 1),
            Site::new(0, 2),
        ];
        let holding = vec![1.0; path.len() - 1];
        let ws = rebuild(&ld, &path, &holding, 0);
        let c = excursion_count(&ws, Site::new(0, 0), 2, TruncatedFinalExcursion::Count).unwrap();
        let i = excursion_count(&ws, Site::new(0, 0), 2, TruncatedFinalExcursion::Ignore).unwrap();
        assert_eq!(c, 2);
        assert_eq!(i, 1);
    }

    #[test]
    fn good_event_thresholds_match_hand_arithmetic() {
        // N=256, eps=1/8, b=0.6, a=0.5: R in {8,16,32} with frozen thresholds
        let ld = unit_disc(2); // threshold formula only needs N via a fake domain? no:
        let _ = ld;
        let n = 256f64;
        let expect = [
            (8, 4.505_456_673_639_645),
            (16, 2.495_329_850_015_803),
            (32, 1.372_431_417_508_691_4),
        ];
        for (r, thr) in expect {
            let q = (n / r as f64).ln() / n.ln();
            let t = 0.6 / 2.0 * (1.0 + q) / (1.0 - q) * (n / r as f64).ln();
            assert!((t - thr).abs() < 1e-12, "R={r}: {t} vs {thr}");
        }
        assert_eq!(n.powf(0.5 - 0.5 / 4.0), 8.0);
    }

    #[test]
    fn good_event_trivial_cases() {
        let ld = unit_disc(64);
        let mut r = rng(11, 0);
        let ws = sample_walk(&ld, Site::new(0, 0), &mut r, WalkConfig::explicit(), 0).unwrap();
        // a site the walk never approached
        let far = Site::new(55, 0);
        let rep = good_event(&ws, far, 0.5, 0.6, 0.25, TruncatedFinalExcursion::Count).unwrap();
        assert!(rep.holds);
        assert!(rep.checks.iter().all(|c| c.count == 0));
        assert!(good_event(&ws, far, 0.5, 0.4, 0.25, TruncatedFinalExcursion::Count).is_err());
    }

    #[test]
    fn split_full_domain_is_degenerate() {
        let ld = unit_disc(16);
        let mut r = rng(3, 2);
        let ws = sample_walk(&ld, Site::new(0, 0), &mut r, WalkConfig::explicit(), 2).unwrap();
        let (first, second, y) = split_at_first_exit(&ws, &ld).unwrap();
        assert_eq!(y, ws.exit());
        assert_eq!(second.path().unwrap().len(), 1);
        assert_eq!(second.total_local_time(), 0.0);
        assert_eq!(first.total_local_time(), ws.total_local_time());
    }

    #[test]
    fn split_additivity_exact() {
        let ld = unit_disc(32);
        let sub = Arc::new(ld.strip_subdomain(0.0, 0.4, Site::new(0, 0)).unwrap());
        for k in 0..20 {
            let mut r = rng(17, k);
            let ws = sample_walk(&ld, Site::new(0, 0), &mut r, WalkConfig::explicit(), k).unwrap();
            let (first, second, y) = split_at_first_exit(&ws, &sub).unwrap();
            assert_eq!(sub.kind(y), SiteKind::Boundary);
            // per-site additivity: both sides fold the same holding values,
            // differing only in summation association
            for i in 0..ld.num_interior() {
                let s = ld.site_at(i);
                let sum = first.local_time(s) + second.local_time(s);
                let full = ws.local_time(s);
                assert!(
                    (sum - full).abs() <= 1e-12 * full.max(1.0),
                    "site {s:?}: {sum} vs {full}"
                );
                // zero/nonzero pattern is exact
                assert_eq!(sum == 0.0, full == 0.0);
            }
        }
    }

    #[test]
    fn split_requires_membership() {
        let ld = unit_disc(32);
        let sub = Arc::new(ld.strip_subdomain(0.4, 0.2, Site::new(13, 0)).unwrap());
        let mut r = rng(5, 0);
        let ws = sample_walk(&ld, Site::new(0, 0), &mut r, WalkConfig::explicit(), 0).unwrap();
        assert!(matches!(
            split_at_first_exit(&ws, &sub),
            Err(WalkError::StartOutsideSub(_))
        ));
    }

    #[test]
    fn path_dump_roundtrip() {
        let ld = unit_disc(16);
        let mut r = rng(23, 0);
        let a = sample_walk(&ld, Site::new(0, 0), &mut r, WalkConfig::explicit(), 0).unwrap();
        let b = sample_walk(&ld, Site::new(2, 2), &mut r, WalkConfig::explicit(), 0).unwrap();
        let mut buf = Vec::new();
        dump_paths(&[&a, &b], &mut buf).unwrap();
        let paths = read_paths(&buf[..]).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0], a.path().unwrap());
        assert_eq!(paths[1], b.path().unwrap());
    }
}
