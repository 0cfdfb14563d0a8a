//! The four change-point tests.
//!
//! * `Q`: sum over samples of the maximal squared standardized CUSUM of
//!   `S_k − Σ_{i≤k} target_i` (population targets known).
//! * `V`: maximal absolute pooled CUSUM over the product grid of sample
//!   indices, scaled by `N^{-1/2}` with `N = Σ_j N_j` (targets known).
//! * `Q̆`, `V̆`: the same with each sample centered by its own endpoint,
//!   `S_k − (k/N_j) S_{N_j}`, so no targets are needed.
//!
//! Q kinds are standardized by `α̂_j` and compared against simulated
//! quantiles of sums of squared Brownian (bridge) suprema. V kinds are not
//! standardized; their critical values are simulated with weights
//! `α̂_j √(N_j/N)`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limits::{self, PathCache, StatisticKind, DEFAULT_N_GRID, DEFAULT_N_REP};
use crate::lrv::{self, LrvEstimate, LrvMode};
use crate::sumproc::{self, ProjectedSample, ProjectionPair, TargetBilinear};

const MODULE: &str = "cptest";

/// Projection vectors: one pair shared by all samples, or one per sample
/// (sum-of-squares tests only).
#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    Shared(ProjectionPair),
    PerSample(Vec<ProjectionPair>),
}

impl Projection {
    fn for_sample(&self, j: usize) -> &ProjectionPair {
        match self {
            Projection::Shared(p) => p,
            Projection::PerSample(ps) => &ps[j],
        }
    }
}

/// Monte Carlo settings for the critical value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CritvalSettings {
    pub n_grid: usize,
    pub n_rep: usize,
    pub seed: u64,
}

impl CritvalSettings {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            n_grid: DEFAULT_N_GRID,
            n_rep: DEFAULT_N_REP,
            seed,
        }
    }
}

/// Everything needed to run one test on a set of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSpec {
    pub kind: StatisticKind,
    pub level: f64,
    pub projection: Projection,
    /// Population targets per sample; required by Q and V, refused by Q̆ and V̆.
    pub targets: Option<Vec<TargetBilinear>>,
    pub lrv_mode: LrvMode,
    /// Fixed kernel bandwidth instead of the Andrews rule.
    pub bandwidth: Option<f64>,
    pub critval: CritvalSettings,
}

impl TestSpec {
    pub fn new(kind: StatisticKind, projection: Projection, seed: u64) -> Self {
        Self {
            kind,
            level: 0.95,
            projection,
            targets: None,
            lrv_mode: LrvMode::InSample,
            bandwidth: None,
            critval: CritvalSettings::with_seed(seed),
        }
    }

    fn validate(&self, k: usize) -> Result<()> {
        limits::check_level(self.level)?;
        match (self.kind.is_bridge(), &self.targets) {
            (false, None) => {
                return Err(Error::config(MODULE, "targets", format!("the {} test needs population targets", self.kind)))
            }
            (true, Some(_)) => {
                return Err(Error::config(
                    MODULE,
                    "targets",
                    format!("the {} test does not use population targets", self.kind),
                ))
            }
            (false, Some(t)) if t.len() != k => {
                return Err(Error::config(MODULE, "targets", format!("expected {k} targets, got {}", t.len())))
            }
            _ => {}
        }
        match &self.projection {
            Projection::PerSample(_) if self.kind.is_pooled() => Err(Error::config(
                MODULE,
                "projection",
                "pooled statistics need one projection pair shared by all samples",
            )),
            Projection::PerSample(ps) if ps.len() != k => Err(Error::config(
                MODULE,
                "projection",
                format!("expected {k} projection pairs, got {}", ps.len()),
            )),
            _ => Ok(()),
        }
    }
}

/// Per-sample diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub alpha_sq: f64,
    pub bandwidth: f64,
    /// Observations entering the statistic (learning block excluded).
    pub n: usize,
    pub n_lags: usize,
    pub lrv_mode: String,
    pub rho_clamped: bool,
    pub lrv_degenerate: bool,
    /// Index where this sample's contribution peaks. A location hint only;
    /// it carries no inferential guarantee.
    pub argmax_k: usize,
    /// Digest of the projection pair used for this sample.
    pub projection: String,
}

/// Outcome of one test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub kind: StatisticKind,
    pub statistic: f64,
    pub critical_value: f64,
    pub level: f64,
    pub reject: bool,
    pub per_sample: Vec<SampleReport>,
    /// Seed of the critical-value simulation.
    pub seed: u64,
    pub n_grid: usize,
    pub n_rep: usize,
}

impl TestReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }
}

struct Prepared {
    test: ProjectedSample,
    lrv: LrvEstimate,
    digest: String,
}

fn prepare(samples: &[Array2<f64>], spec: &TestSpec) -> Result<Vec<Prepared>> {
    if samples.is_empty() {
        return Err(Error::shape(MODULE, "no samples"));
    }
    spec.validate(samples.len())?;
    samples
        .iter()
        .enumerate()
        .map(|(j, sample)| {
            let pair = spec.projection.for_sample(j);
            let full = sumproc::project(sample.view(), pair)?;
            let (test, lrv) = match spec.lrv_mode {
                LrvMode::InSample => {
                    let lrv = lrv::lrv_estimate(&full, spec.lrv_mode, spec.bandwidth);
                    (full, lrv)
                }
                LrvMode::LearningSample { length } => {
                    if length >= full.len() {
                        return Err(Error::config(
                            MODULE,
                            "learning_length",
                            format!("sample {j} has {} rows, not more than the learning length {length}", full.len()),
                        ));
                    }
                    let lrv = lrv::estimate_for_mode(&full, spec.lrv_mode, spec.bandwidth);
                    (full.slice(length..full.len()), lrv)
                }
            };
            let lrv = lrv.map_err(|e| e.with_sample(j))?;
            Ok(Prepared {
                test,
                lrv,
                digest: pair.digest(),
            })
        })
        .collect()
}

fn alpha(p: &Prepared, j: usize) -> Result<f64> {
    let a = p.lrv.alpha_sq.sqrt();
    if a > 0.0 && a.is_finite() {
        Ok(a)
    } else {
        Err(Error::DegenerateLrv {
            sample: j,
            reason: format!("estimated long-run variance {} cannot standardize", p.lrv.alpha_sq),
        })
    }
}

fn sample_report(p: &Prepared, argmax_k: usize) -> SampleReport {
    SampleReport {
        alpha_sq: p.lrv.alpha_sq,
        bandwidth: p.lrv.bandwidth,
        n: p.test.len(),
        n_lags: p.lrv.n_lags,
        lrv_mode: p.lrv.mode.label(),
        rho_clamped: p.lrv.rho_clamped,
        lrv_degenerate: p.lrv.degenerate,
        argmax_k,
        projection: p.digest.clone(),
    }
}

/// Sum of per-sample maximal squared standardized processes.
fn sum_of_squares(prepared: &[Prepared], processes: Vec<Vec<f64>>) -> Result<(f64, Vec<SampleReport>)> {
    let mut total = 0.0;
    let mut reports = Vec::with_capacity(prepared.len());
    for (j, (p, f)) in prepared.iter().zip(&processes).enumerate() {
        let (m, k) = sumproc::per_sample_max_sq(f, alpha(p, j)?).map_err(|e| e.with_sample(j))?;
        total += m;
        reports.push(sample_report(p, k));
    }
    Ok((total, reports))
}

/// Separable pooled maximum plus the critical-value weights `α̂_j √κ_j`.
fn pooled(prepared: &[Prepared], processes: Vec<Vec<f64>>) -> Result<(f64, Vec<SampleReport>, Vec<f64>)> {
    let refs: Vec<&[f64]> = processes.iter().map(Vec::as_slice).collect();
    let grid = sumproc::pooled_d_grid_max(&refs)?;
    let total_n: usize = prepared.iter().map(|p| p.test.len()).sum();
    let weights = prepared
        .iter()
        .enumerate()
        .map(|(j, p)| Ok(alpha(p, j)? * (p.test.len() as f64 / total_n as f64).sqrt()))
        .collect::<Result<Vec<_>>>()?;
    let reports = prepared.iter().zip(&grid.argmax).map(|(p, &k)| sample_report(p, k)).collect();
    Ok((grid.value, reports, weights))
}

fn pooled_denominator(prepared: &[Prepared]) -> f64 {
    (prepared.iter().map(|p| p.test.len()).sum::<usize>() as f64).sqrt()
}

fn targets_of(spec: &TestSpec) -> Result<&[TargetBilinear]> {
    spec.targets
        .as_deref()
        .ok_or_else(|| Error::config(MODULE, "targets", format!("the {} test needs population targets", spec.kind)))
}

fn finish(
    spec: &TestSpec,
    cache: &PathCache,
    statistic: f64,
    per_sample: Vec<SampleReport>,
    weights: Option<Vec<f64>>,
) -> Result<TestReport> {
    let c = spec.critval;
    let table = cache.get(per_sample.len(), c.n_grid, c.n_rep, c.seed);
    let critical_value = limits::critical_value_from(&table, spec.kind, spec.level, weights.as_deref())?;
    Ok(TestReport {
        kind: spec.kind,
        statistic,
        critical_value,
        level: spec.level,
        reject: statistic > critical_value,
        per_sample,
        seed: c.seed,
        n_grid: c.n_grid,
        n_rep: c.n_rep,
    })
}

fn expect_kind(spec: &TestSpec, kind: StatisticKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::config(MODULE, "kind", format!("expected a {kind} spec, got {}", spec.kind)));
    }
    Ok(())
}

fn critval_check(spec: &TestSpec) -> Result<()> {
    if spec.critval.n_grid < 100 || spec.critval.n_rep < 1000 {
        return Err(Error::config(MODULE, "critval", "n_grid >= 100 and n_rep >= 1000 are required"));
    }
    Ok(())
}

/// Sum-of-squares test with known targets.
pub fn run_q_test(samples: &[Array2<f64>], spec: &TestSpec, cache: &PathCache) -> Result<TestReport> {
    expect_kind(spec, StatisticKind::Q)?;
    critval_check(spec)?;
    let prepared = prepare(samples, spec)?;
    let targets = targets_of(spec)?;
    let processes = prepared
        .iter()
        .zip(targets)
        .map(|(p, t)| sumproc::d_process(&p.test, t))
        .collect::<Result<Vec<_>>>()?;
    let (stat, reports) = sum_of_squares(&prepared, processes)?;
    finish(spec, cache, stat, reports, None)
}

/// Sum-of-squares test on the bridge processes; no targets involved.
pub fn run_q_breve_test(samples: &[Array2<f64>], spec: &TestSpec, cache: &PathCache) -> Result<TestReport> {
    expect_kind(spec, StatisticKind::QBreve)?;
    critval_check(spec)?;
    let prepared = prepare(samples, spec)?;
    let processes = prepared
        .iter()
        .map(|p| sumproc::bridge_process(&p.test))
        .collect::<Result<Vec<_>>>()?;
    let (stat, reports) = sum_of_squares(&prepared, processes)?;
    finish(spec, cache, stat, reports, None)
}

/// Pooled test with known targets.
pub fn run_v_test(samples: &[Array2<f64>], spec: &TestSpec, cache: &PathCache) -> Result<TestReport> {
    expect_kind(spec, StatisticKind::V)?;
    critval_check(spec)?;
    let prepared = prepare(samples, spec)?;
    let targets = targets_of(spec)?;
    let denom = pooled_denominator(&prepared);
    let processes = prepared
        .iter()
        .zip(targets)
        .map(|(p, t)| sumproc::centered(&p.test, t, denom))
        .collect::<Result<Vec<_>>>()?;
    let (stat, reports, weights) = pooled(&prepared, processes)?;
    finish(spec, cache, stat, reports, Some(weights))
}

/// Pooled test on the bridge processes; no targets involved.
pub fn run_v_breve_test(samples: &[Array2<f64>], spec: &TestSpec, cache: &PathCache) -> Result<TestReport> {
    expect_kind(spec, StatisticKind::VBreve)?;
    critval_check(spec)?;
    let prepared = prepare(samples, spec)?;
    let denom = pooled_denominator(&prepared);
    let processes = prepared
        .iter()
        .map(|p| sumproc::bridge(p.test.partial_sums(), denom))
        .collect();
    let (stat, reports, weights) = pooled(&prepared, processes)?;
    finish(spec, cache, stat, reports, Some(weights))
}

/// Dispatches on `spec.kind`.
pub fn run_test(samples: &[Array2<f64>], spec: &TestSpec, cache: &PathCache) -> Result<TestReport> {
    match spec.kind {
        StatisticKind::Q => run_q_test(samples, spec, cache),
        StatisticKind::V => run_v_test(samples, spec, cache),
        StatisticKind::QBreve => run_q_breve_test(samples, spec, cache),
        StatisticKind::VBreve => run_v_breve_test(samples, spec, cache),
    }
}

/// The V̆ statistic by exhaustive enumeration of the index grid. Exponential
/// in K; meant for cross-checking small inputs only.
pub fn v_breve_brute_force(samples: &[Array2<f64>], pair: &ProjectionPair) -> Result<f64> {
    let projected = samples
        .iter()
        .map(|s| sumproc::project(s.view(), pair))
        .collect::<Result<Vec<_>>>()?;
    let denom = (projected.iter().map(ProjectedSample::len).sum::<usize>() as f64).sqrt();
    let f: Vec<Vec<f64>> = projected.iter().map(|p| sumproc::bridge(p.partial_sums(), denom)).collect();
    let mut idx = vec![0usize; f.len()];
    let mut best = 0.0f64;
    loop {
        let s: f64 = f.iter().zip(&idx).map(|(fj, &k)| fj[k]).sum();
        best = best.max(s.abs());
        let mut j = 0;
        loop {
            if j == f.len() {
                return Ok(best);
            }
            idx[j] += 1;
            if idx[j] < f[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Standardized pooled bilinear form
/// `Σ_j (S^{(j)}_{N_j} − N_j·target_j) / √(Σ_j α_j² N_j)`,
/// asymptotically standard normal under the null.
pub fn pooled_clt_statistic(
    samples: &[Array2<f64>],
    pair: &ProjectionPair,
    targets: &[f64],
    alpha_sq: &[f64],
) -> Result<f64> {
    let k = samples.len();
    if targets.len() != k || alpha_sq.len() != k {
        return Err(Error::shape(MODULE, "targets and alpha_sq need one entry per sample"));
    }
    let mut num = 0.0;
    let mut var = 0.0;
    for ((s, &t), &a2) in samples.iter().zip(targets).zip(alpha_sq) {
        let ps = sumproc::project(s.view(), pair)?;
        let n = ps.len();
        num += ps.partial_sums()[n] - n as f64 * t;
        var += a2 * n as f64;
    }
    Ok(num / var.sqrt())
}
