//! Replication engine and statistics: seeded parallel runs with
//! deterministic aggregation, estimator reports with confidence intervals,
//! and the distributional tests used by the verification battery.

use crate::lattice::DomainSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Statistical acceptance uses `|z| <= 3`; together with `p > 0.001` on the
/// distributional tests this keeps the false-failure rate of the whole
/// battery under a percent.
pub const Z_GATE: f64 = 3.0;
/// p-value floor for the distributional tests.
pub const P_GATE: f64 = 0.001;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("{failed} of {total} replications failed; first failures: {examples:?}")]
    ReplicationFailures {
        failed: usize,
        total: u64,
        examples: Vec<(u64, String)>,
    },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("sparse contingency table: expected count {0:.2} < 5")]
    SparseCells(f64),
}

/// Experiment configuration; the seed and replication count drive
/// [`run_replications`], the rest parameterises the per-sample statistics.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub master_seed: u64,
    pub domain: DomainSpec,
    pub n: u32,
    pub a: f64,
    pub sample_count: u64,
    pub estimator: String,
    /// Good-event excursion cap parameter (`b > a`).
    pub b: f64,
    /// Good-event scale cutoff.
    pub eps: f64,
    /// Relative tolerance override for pass verdicts against analytic
    /// targets (absolute tolerance = `rel_tol * |target|`).
    pub rel_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            master_seed: 1,
            domain: DomainSpec::unit_disc(),
            n: 64,
            a: 0.5,
            sample_count: 1000,
            estimator: "unnamed".into(),
            b: 0.75,
            eps: 0.125,
            rel_tol: 0.15,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.sample_count < 1 {
            return Err(HarnessError::BadConfig("sample_count must be >= 1".into()));
        }
        if !(self.a > 0.0 && self.a < 2.0) {
            return Err(HarnessError::BadConfig(format!(
                "a = {} outside (0,2)",
                self.a
            )));
        }
        if self.n < 8 {
            return Err(HarnessError::BadConfig(format!("N = {} < 8", self.n)));
        }
        Ok(())
    }

    /// Independent RNG stream for a replication.  Streams are namespaced so
    /// different experiments of one battery never share a stream.
    pub fn rng_for(&self, namespace: u64, replication: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream((namespace << 32) ^ replication);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Informational,
}

/// Monte-Carlo estimate with its uncertainty and verdict.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub estimator: String,
    pub n: u64,
    pub point_estimate: f64,
    pub stderr: f64,
    pub ci95: (f64, f64),
    pub analytic_target: Option<f64>,
    pub verdict: Verdict,
    #[serde(skip)]
    pub wall_time: std::time::Duration,
}

impl EstimateReport {
    fn from_samples(estimator: &str, values: &[f64], wall_time: std::time::Duration) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let stderr = (var / n).sqrt();
        EstimateReport {
            estimator: estimator.to_string(),
            n: values.len() as u64,
            point_estimate: mean,
            stderr,
            ci95: (mean - 1.96 * stderr, mean + 1.96 * stderr),
            analytic_target: None,
            verdict: Verdict::Informational,
            wall_time,
        }
    }

    /// Attach an analytic target: pass when
    /// `|estimate - target| <= max(abs_tol, 3 stderr)`.
    pub fn with_target(mut self, target: f64, abs_tol: f64) -> Self {
        self.analytic_target = Some(target);
        let gap = (self.point_estimate - target).abs();
        self.verdict = if gap <= abs_tol.max(Z_GATE * self.stderr) {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }
}

/// Runs `cfg.sample_count` replications of a per-sample statistic in
/// parallel and aggregates them in replication order, so the report is a
/// pure function of the config regardless of the worker count.
pub fn run_replications<F>(
    cfg: &RunConfig,
    namespace: u64,
    statistic: F,
) -> Result<EstimateReport, HarnessError>
where
    F: Fn(u64, &mut ChaCha8Rng) -> Result<f64, String> + Sync,
{
    cfg.validate()?;
    let t0 = std::time::Instant::now();
    let results: Vec<Result<f64, String>> = (0..cfg.sample_count)
        .into_par_iter()
        .map(|rep| {
            let mut rng = cfg.rng_for(namespace, rep);
            statistic(rep, &mut rng)
        })
        .collect();

    let mut values = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (rep, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => values.push(v),
            Err(e) => {
                if failures.len() < 8 {
                    failures.push((rep as u64, e));
                }
            }
        }
    }
    if !failures.is_empty() {
        return Err(HarnessError::ReplicationFailures {
            failed: cfg.sample_count as usize - values.len(),
            total: cfg.sample_count,
            examples: failures,
        });
    }
    Ok(EstimateReport::from_samples(
        &cfg.estimator,
        &values,
        t0.elapsed(),
    ))
}

/// One scale of a convergence table.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub n: u32,
    #[serde(flatten)]
    pub report: EstimateReport,
    /// `|estimate(N_i) - estimate(N_{i-1})|`.
    pub drift_from_prev: Option<f64>,
}

/// Runs the same normalised statistic across several scales and tabulates
/// the pairwise drift; verdicts stay informational.
pub fn convergence_table<F>(
    cfg: &RunConfig,
    n_list: &[u32],
    make_statistic: F,
) -> Result<Vec<ConvergenceRow>, HarnessError>
where
    F: Fn(u32) -> Box<dyn Fn(u64, &mut ChaCha8Rng) -> Result<f64, String> + Sync>,
{
    if n_list.len() < 2 {
        return Err(HarnessError::BadConfig(
            "convergence table needs at least two scales".into(),
        ));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for &n in n_list {
        let mut sub = cfg.clone();
        sub.n = n;
        sub.estimator = format!("{}@N={}", cfg.estimator, n);
        let stat = make_statistic(n);
        let report = run_replications(&sub, n as u64, |rep, rng| stat(rep, rng))?;
        let drift_from_prev = rows
            .last()
            .map(|prev| (report.point_estimate - prev.report.point_estimate).abs());
        rows.push(ConvergenceRow {
            n,
            report,
            drift_from_prev,
        });
    }
    Ok(rows)
}

// --- distributional tests --------------------------------------------------

/// One-sample Kolmogorov-Smirnov statistic against Uniform(0,1) with the
/// asymptotic p-value `Q_KS(sqrt(n) D)`.
pub fn ks_uniform_test(samples: &[f64]) -> Result<(f64, f64), HarnessError> {
    if samples.len() < 5 {
        return Err(HarnessError::InsufficientData(format!(
            "KS needs n >= 5, got {}",
            samples.len()
        )));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        d = d
            .max(((i + 1) as f64 / n - x).abs())
            .max((i as f64 / n - x).abs());
    }
    Ok((d, kolmogorov_q(n.sqrt() * d)))
}

/// Complementary CDF of the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // theta-function form, accurate for small lambda
        let f = (std::f64::consts::PI * std::f64::consts::PI) / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for k in 0..20 {
            let m = (2 * k + 1) as f64;
            s += (-m * m * f).exp();
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s
    } else {
        let mut s = 0.0;
        for k in 1..100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            s += if k % 2 == 1 { term } else { -term };
            if term < 1e-18 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// `P(Gamma(k,1) > t) = e^{-t} sum_{i<k} t^i/i!`, accumulated in log space
/// so large `t` cannot underflow term by term.
pub fn gamma_tail(k: u32, t: f64) -> f64 {
    assert!(k >= 1, "shape must be >= 1");
    assert!(t >= 0.0, "t must be nonnegative");
    if t == 0.0 {
        return 1.0;
    }
    let ln_t = t.ln();
    let mut max_log = f64::NEG_INFINITY;
    let mut logs = Vec::with_capacity(k as usize);
    let mut ln_fact = 0.0;
    for i in 0..k {
        if i > 0 {
            ln_fact += (i as f64).ln();
        }
        let l = -t + i as f64 * ln_t - ln_fact;
        max_log = max_log.max(l);
        logs.push(l);
    }
    let sum: f64 = logs.iter().map(|l| (l - max_log).exp()).sum();
    (max_log + sum.ln()).exp().clamp(0.0, 1.0)
}

/// Pearson chi-squared independence test on a contingency table.
/// Errors out when any expected cell count drops below 5.
pub fn chi2_independence_test(table: &[Vec<u64>]) -> Result<(f64, f64), HarnessError> {
    let rows = table.len();
    let cols = table.first().map_or(0, |r| r.len());
    if rows < 2 || cols < 2 || table.iter().any(|r| r.len() != cols) {
        return Err(HarnessError::InsufficientData(
            "contingency table must be at least 2x2 and rectangular".into(),
        ));
    }
    let total: u64 = table.iter().flatten().sum();
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let col_sums: Vec<f64> = (0..cols)
        .map(|j| table.iter().map(|r| r[j] as f64).sum())
        .collect();
    let mut stat = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let expected = row_sums[i] * col_sums[j] / total as f64;
            if expected < 5.0 {
                return Err(HarnessError::SparseCells(expected));
            }
            let diff = table[i][j] as f64 - expected;
            stat += diff * diff / expected;
        }
    }
    let df = ((rows - 1) * (cols - 1)) as f64;
    let p = statrs::function::gamma::gamma_ur(df / 2.0, stat / 2.0);
    Ok((stat, p))
}

/// Stderr of an empirical proportion.
pub fn proportion_stderr(successes: u64, trials: u64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let p = successes as f64 / trials as f64;
    (p * (1.0 - p) / trials as f64).sqrt()
}
