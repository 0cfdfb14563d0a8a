//! Null limit laws and simulated critical values.
//!
//! The four statistics converge to functionals of K independent Brownian
//! motions `B_j` (or bridges `B̄_j = B_j(t) − t·B_j(1)`):
//!
//! | kind | limit                                        |
//! |------|----------------------------------------------|
//! | Q    | `Σ_j sup B_j²`                               |
//! | Q̆    | `Σ_j sup B̄_j²`                               |
//! | V    | `sup_{s ∈ [0,1]^K} |Σ_j c_j B_j(s_j)|`        |
//! | V̆    | `sup_{s ∈ [0,1]^K} |Σ_j c_j B̄_j(s_j)|`       |
//!
//! with `c_j = α_j √κ_j`. Every functional only needs, per path, the
//! maximum and minimum of the discretized process, so a simulation is
//! reduced once to a [`PathExtrema`] table and any weight vector can then be
//! evaluated in `O(n_rep · K)`.

use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

const MODULE: &str = "limits";

pub const DEFAULT_N_GRID: usize = 2000;
pub const DEFAULT_N_REP: usize = 100_000;
const SERIES_EPS: f64 = 1e-17;
const MAX_TERMS: usize = 10_000;

/// The four change-point statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StatisticKind {
    #[serde(rename = "q")]
    Q,
    #[serde(rename = "v")]
    V,
    #[serde(rename = "q-breve")]
    QBreve,
    #[serde(rename = "v-breve")]
    VBreve,
}

impl StatisticKind {
    pub const ALL: [StatisticKind; 4] = [Self::Q, Self::V, Self::QBreve, Self::VBreve];

    /// Pooled kinds need per-sample weights for their critical values.
    pub fn is_pooled(self) -> bool {
        matches!(self, Self::V | Self::VBreve)
    }

    /// Bridge kinds do not use population targets.
    pub fn is_bridge(self) -> bool {
        matches!(self, Self::QBreve | Self::VBreve)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Q => "q",
            Self::V => "v",
            Self::QBreve => "q-breve",
            Self::VBreve => "v-breve",
        }
    }
}

impl fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StatisticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "q" => Ok(Self::Q),
            "v" => Ok(Self::V),
            "q-breve" | "qbreve" => Ok(Self::QBreve),
            "v-breve" | "vbreve" => Ok(Self::VBreve),
            other => Err(Error::config(
                MODULE,
                "kind",
                format!("unknown statistic `{other}` (expected q, v, q-breve or v-breve)"),
            )),
        }
    }
}

const BM_CROSSOVER: f64 = 16.0;

/// `P(sup_{[0,1]} |B| ≤ √y)` for standard Brownian motion.
pub fn sup_abs_bm_cdf(y: f64) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::domain(MODULE, format!("squared bound {y} must be non-negative")));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    // statrs' erfc carries ~1e-10 relative error, so the reflection form is
    // used only where its terms are already tiny in absolute terms.
    Ok(if y <= BM_CROSSOVER { bm_theta_series(y) } else { bm_reflection_series(y) })
}

/// `(4/π) Σ_{l≥0} (−1)^l/(2l+1) · exp(−(2l+1)²π²/(8y))`; fast for small `y`.
pub(crate) fn bm_theta_series(y: f64) -> f64 {
    let mut total = 0.0;
    for l in 0..MAX_TERMS {
        let m = (2 * l + 1) as f64;
        let term = (-(m * m) * PI * PI / (8.0 * y)).exp() / m;
        total += if l % 2 == 0 { term } else { -term };
        if term < SERIES_EPS {
            break;
        }
    }
    (4.0 / PI * total).clamp(0.0, 1.0)
}

/// Reflection-principle form `1 − 2 Σ_{m≥0} (−1)^m erfc((2m+1)√y/√2)`;
/// fast for large `y`.
pub(crate) fn bm_reflection_series(y: f64) -> f64 {
    let a = y.sqrt() / SQRT_2;
    let mut total = 0.0;
    for m in 0..MAX_TERMS {
        let term = erfc((2 * m + 1) as f64 * a);
        total += if m % 2 == 0 { term } else { -term };
        if term < SERIES_EPS {
            break;
        }
    }
    (1.0 - 2.0 * total).clamp(0.0, 1.0)
}

/// `P(sup_{[0,1]} |B̄| ≤ √y)` for the Brownian bridge (Kolmogorov law).
pub fn sup_abs_bb_cdf(y: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::domain(MODULE, format!("squared bound {y} must be positive")));
    }
    Ok(if y <= 1.0 { bb_theta_series(y) } else { bb_alternating_series(y) })
}

/// `√(2π/y) Σ_{l≥1} exp(−(2l−1)²π²/(8y))`.
pub(crate) fn bb_theta_series(y: f64) -> f64 {
    let mut total = 0.0;
    for l in 1..MAX_TERMS {
        let m = (2 * l - 1) as f64;
        let term = (-(m * m) * PI * PI / (8.0 * y)).exp();
        total += term;
        if term < SERIES_EPS {
            break;
        }
    }
    ((2.0 * PI / y).sqrt() * total).clamp(0.0, 1.0)
}

/// `1 − 2 Σ_{k≥1} (−1)^{k−1} exp(−2k²y)`.
pub(crate) fn bb_alternating_series(y: f64) -> f64 {
    let mut total = 0.0;
    for k in 1..MAX_TERMS {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * y).exp();
        total += if k % 2 == 1 { term } else { -term };
        if term < SERIES_EPS {
            break;
        }
    }
    (1.0 - 2.0 * total).clamp(0.0, 1.0)
}

/// Extremes of one discretized path and its bridge.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Extrema {
    pub max_bm: f64,
    pub min_bm: f64,
    pub max_bridge: f64,
    pub min_bridge: f64,
    /// `B(1)`.
    pub terminal: f64,
}

impl Extrema {
    pub fn sup_sq_bm(&self) -> f64 {
        self.max_bm.max(-self.min_bm).powi(2)
    }

    pub fn sup_sq_bridge(&self) -> f64 {
        self.max_bridge.max(-self.min_bridge).powi(2)
    }
}

/// Path extremes for `n_rep` replications of `k` independent paths.
#[derive(Debug, Clone)]
pub struct PathExtrema {
    pub k: usize,
    pub n_grid: usize,
    pub n_rep: usize,
    pub seed: u64,
    data: Vec<Extrema>,
}

impl PathExtrema {
    /// Extremes of replication `rep`, one entry per sample.
    pub fn replication(&self, rep: usize) -> &[Extrema] {
        &self.data[rep * self.k..(rep + 1) * self.k]
    }

    pub fn replications(&self) -> impl Iterator<Item = &[Extrema]> {
        self.data.chunks_exact(self.k)
    }

    /// One draw of the limiting functional per replication.
    ///
    /// `weights` are the `c_j = α_j √κ_j` for the pooled kinds and ignored
    /// otherwise.
    pub fn functional(&self, kind: StatisticKind, weights: Option<&[f64]>) -> Result<Vec<f64>> {
        let weights = match (kind.is_pooled(), weights) {
            (true, Some(c)) if c.len() == self.k => Some(c),
            (true, Some(c)) => {
                return Err(Error::config(
                    MODULE,
                    "alpha_weights",
                    format!("expected {} weights, got {}", self.k, c.len()),
                ))
            }
            (true, None) => {
                return Err(Error::config(MODULE, "alpha_weights", "pooled statistics need per-sample weights"))
            }
            (false, _) => None,
        };
        Ok(self
            .replications()
            .map(|rep| match (kind, weights) {
                (StatisticKind::Q, _) => rep.iter().map(Extrema::sup_sq_bm).sum(),
                (StatisticKind::QBreve, _) => rep.iter().map(Extrema::sup_sq_bridge).sum(),
                (StatisticKind::V, Some(c)) => {
                    let up: f64 = rep.iter().zip(c).map(|(e, c)| c * e.max_bm).sum();
                    let down: f64 = rep.iter().zip(c).map(|(e, c)| c * -e.min_bm).sum();
                    up.max(down)
                }
                (StatisticKind::VBreve, Some(c)) => {
                    let up: f64 = rep.iter().zip(c).map(|(e, c)| c * e.max_bridge).sum();
                    let down: f64 = rep.iter().zip(c).map(|(e, c)| c * -e.min_bridge).sum();
                    up.max(down)
                }
                _ => unreachable!("pooled weights checked above"),
            })
            .collect())
    }
}

/// Discretized standard Brownian motion on `k/n_grid`, `k = 0..=n_grid`,
/// for replication `rep` and sample `j`.
pub fn brownian_path(seed: u64, rep: usize, j: usize, n_grid: usize) -> Vec<f64> {
    let mut path = vec![0.0; n_grid + 1];
    fill_path(&mut path, seed, rep, j);
    path
}

fn fill_path(path: &mut [f64], seed: u64, rep: usize, j: usize) {
    let n_grid = path.len() - 1;
    let sd = (n_grid as f64).recip().sqrt();
    let mut rng = rng::stream(seed, Domain::BrownianPath, rep as u64, j as u64);
    let mut b = 0.0;
    path[0] = 0.0;
    for slot in &mut path[1..] {
        b += sd * rng.sample::<f64, _>(StandardNormal);
        *slot = b;
    }
}

fn extrema_of(path: &[f64]) -> Extrema {
    let n = (path.len() - 1) as f64;
    let terminal = path[path.len() - 1];
    let mut e = Extrema {
        terminal,
        ..Extrema::default()
    };
    for (k, &b) in path.iter().enumerate() {
        let bridge = b - (k as f64 / n) * terminal;
        e.max_bm = e.max_bm.max(b);
        e.min_bm = e.min_bm.min(b);
        e.max_bridge = e.max_bridge.max(bridge);
        e.min_bridge = e.min_bridge.min(bridge);
    }
    e
}

/// Simulates `n_rep × k` paths and keeps their extremes. The result depends
/// on `(k, n_grid, n_rep, seed)` only, not on the rayon pool size.
pub fn simulate_brownian_paths(k: usize, n_grid: usize, n_rep: usize, seed: u64) -> PathExtrema {
    let data = (0..n_rep)
        .into_par_iter()
        .map_init(
            || vec![0.0; n_grid + 1],
            |buf, rep| {
                (0..k)
                    .map(|j| {
                        fill_path(buf, seed, rep, j);
                        extrema_of(buf)
                    })
                    .collect::<Vec<_>>()
            },
        )
        .flatten()
        .collect();
    PathExtrema {
        k,
        n_grid,
        n_rep,
        seed,
        data,
    }
}

/// Largest and smallest value of a Brownian bridge from `a` to `b` over an
/// interval of length `h`, drawn exactly from their conditional laws.
fn interval_extremes(a: f64, b: f64, h: f64, rng: &mut impl Rng) -> (f64, f64) {
    let gap = (b - a) * (b - a);
    let mut spread = || (gap - 2.0 * h * (1.0 - rng.random::<f64>()).ln()).sqrt();
    let hi = 0.5 * (a + b + spread());
    let lo = 0.5 * (a + b - spread());
    (hi, lo)
}

/// Like [`simulate_brownian_paths`], but the extremes include the excursions
/// between grid points, sampled conditionally on the grid values. The grid
/// sampler understates `sup|B|` by roughly `0.58/√n_grid`; this one targets the
/// continuous-time law exactly. Critical values use the grid sampler.
pub fn simulate_interval_extrema(k: usize, n_grid: usize, n_rep: usize, seed: u64) -> PathExtrema {
    let h = (n_grid as f64).recip();
    let data = (0..n_rep)
        .into_par_iter()
        .map_init(
            || vec![0.0; n_grid + 1],
            |buf, rep| {
                (0..k)
                    .map(|j| {
                        fill_path(buf, seed, rep, j);
                        let mut rng = rng::stream(seed, Domain::IntervalExtrema, rep as u64, j as u64);
                        let terminal = buf[n_grid];
                        let mut e = Extrema {
                            terminal,
                            ..Extrema::default()
                        };
                        for (i, pair) in buf.windows(2).enumerate() {
                            let (hi, lo) = interval_extremes(pair[0], pair[1], h, &mut rng);
                            e.max_bm = e.max_bm.max(hi);
                            e.min_bm = e.min_bm.min(lo);
                            let a = pair[0] - i as f64 * h * terminal;
                            let b = pair[1] - (i + 1) as f64 * h * terminal;
                            let (hi, lo) = interval_extremes(a, b, h, &mut rng);
                            e.max_bridge = e.max_bridge.max(hi);
                            e.min_bridge = e.min_bridge.min(lo);
                        }
                        e
                    })
                    .collect::<Vec<_>>()
            },
        )
        .flatten()
        .collect();
    PathExtrema {
        k,
        n_grid,
        n_rep,
        seed,
        data,
    }
}

/// Type-1 empirical quantile: the `⌈level·n⌉`-th order statistic.
pub fn empirical_quantile(values: &mut [f64], level: f64) -> f64 {
    let n = values.len();
    let rank = ((level * n as f64).ceil() as usize).clamp(1, n);
    let (_, q, _) = values.select_nth_unstable_by(rank - 1, f64::total_cmp);
    *q
}

/// Quantiles at several levels from one sort of the simulated values.
pub fn empirical_quantiles(values: &mut [f64], levels: &[f64]) -> Vec<f64> {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    levels
        .iter()
        .map(|&level| values[((level * n as f64).ceil() as usize).clamp(1, n) - 1])
        .collect()
}

/// Parameters of one simulated critical value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritValRequest {
    pub kind: StatisticKind,
    pub k: usize,
    pub level: f64,
    /// Per-sample `α̂_j` (not squared); pooled kinds only.
    #[serde(default)]
    pub alpha_weights: Option<Vec<f64>>,
    /// Per-sample `κ_j = N_j / N`; pooled kinds only.
    #[serde(default)]
    pub kappa: Option<Vec<f64>>,
    pub n_grid: usize,
    pub n_rep: usize,
    pub seed: u64,
}

impl CritValRequest {
    pub fn new(kind: StatisticKind, k: usize, level: f64, seed: u64) -> Self {
        Self {
            kind,
            k,
            level,
            alpha_weights: None,
            kappa: None,
            n_grid: DEFAULT_N_GRID,
            n_rep: DEFAULT_N_REP,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config(MODULE, "K", "at least one sample is required"));
        }
        check_level(self.level)?;
        if self.n_grid < 100 {
            return Err(Error::config(MODULE, "n_grid", format!("{} < 100", self.n_grid)));
        }
        if self.n_rep < 1000 {
            return Err(Error::config(MODULE, "n_rep", format!("{} < 1000", self.n_rep)));
        }
        if self.kind.is_pooled() {
            self.pooled_weights()?;
        }
        Ok(())
    }

    /// `c_j = α_j √κ_j`.
    pub fn pooled_weights(&self) -> Result<Vec<f64>> {
        let alpha = self
            .alpha_weights
            .as_ref()
            .ok_or_else(|| Error::config(MODULE, "alpha_weights", "required for pooled statistics"))?;
        let kappa = self
            .kappa
            .as_ref()
            .ok_or_else(|| Error::config(MODULE, "kappa", "required for pooled statistics"))?;
        pooled_weights(alpha, kappa, self.k)
    }
}

pub(crate) fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::config(MODULE, "level", format!("{level} is not in (0, 1)")));
    }
    Ok(())
}

/// Validates `α` and `κ` and returns `c_j = α_j √κ_j`.
pub fn pooled_weights(alpha: &[f64], kappa: &[f64], k: usize) -> Result<Vec<f64>> {
    if alpha.len() != k {
        return Err(Error::config(MODULE, "alpha_weights", format!("expected {k} values, got {}", alpha.len())));
    }
    if kappa.len() != k {
        return Err(Error::config(MODULE, "kappa", format!("expected {k} values, got {}", kappa.len())));
    }
    if let Some(j) = alpha.iter().position(|a| !(a.is_finite() && *a > 0.0)) {
        return Err(Error::config(MODULE, format!("alpha_weights[{j}]"), "must be positive"));
    }
    if let Some(j) = kappa.iter().position(|a| !(a.is_finite() && *a > 0.0)) {
        return Err(Error::config(MODULE, format!("kappa[{j}]"), "must be positive"));
    }
    let total: f64 = kappa.iter().sum();
    if total > 1.0 + 1e-9 {
        return Err(Error::config(MODULE, "kappa", format!("entries sum to {total} > 1")));
    }
    Ok(alpha.iter().zip(kappa).map(|(a, k)| a * k.sqrt()).collect())
}

/// Critical value from an existing extrema table.
pub fn critical_value_from(
    table: &PathExtrema,
    kind: StatisticKind,
    level: f64,
    weights: Option<&[f64]>,
) -> Result<f64> {
    check_level(level)?;
    let mut draws = table.functional(kind, weights)?;
    Ok(empirical_quantile(&mut draws, level))
}

/// Simulates the limit law of `req.kind` and returns its `req.level` quantile.
pub fn critical_value(req: &CritValRequest) -> Result<f64> {
    req.validate()?;
    let table = simulate_brownian_paths(req.k, req.n_grid, req.n_rep, req.seed);
    let weights = if req.kind.is_pooled() { Some(req.pooled_weights()?) } else { None };
    critical_value_from(&table, req.kind, req.level, weights.as_deref())
}

/// Critical values at several levels, from one set of paths.
pub fn critical_values(req: &CritValRequest, levels: &[f64]) -> Result<Vec<CritValRow>> {
    req.validate()?;
    levels.iter().try_for_each(|&l| check_level(l))?;
    let table = simulate_brownian_paths(req.k, req.n_grid, req.n_rep, req.seed);
    let weights = if req.kind.is_pooled() { Some(req.pooled_weights()?) } else { None };
    let mut draws = table.functional(req.kind, weights.as_deref())?;
    let values = empirical_quantiles(&mut draws, levels);
    Ok(levels
        .iter()
        .zip(values)
        .map(|(&level, value)| CritValRow {
            kind: req.kind,
            k: req.k,
            level,
            value,
            n_grid: req.n_grid,
            n_rep: req.n_rep,
            seed: req.seed,
        })
        .collect())
}

/// One line of an exported critical-value table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritValRow {
    pub kind: StatisticKind,
    #[serde(rename = "K")]
    pub k: usize,
    pub level: f64,
    pub value: f64,
    pub n_grid: usize,
    pub n_rep: usize,
    pub seed: u64,
}

/// Writes rows as CSV with columns `kind,K,level,value,n_grid,n_rep,seed`.
pub fn write_critval_csv<W: std::io::Write>(rows: &[CritValRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io {
        path: "<critval csv>".into(),
        source: std::io::Error::other(e),
    };
    for row in rows {
        w.serialize(row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<critval csv>".into(),
        source: e,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct PathKey {
    k: usize,
    n_grid: usize,
    n_rep: usize,
    seed: u64,
}

/// Memoized extrema tables, shared across threads.
///
/// Pooled critical values depend on estimated weights, but the simulated
/// paths do not, so caching the tables serves every weight vector.
#[derive(Debug, Default)]
pub struct PathCache {
    tables: Mutex<HashMap<PathKey, Arc<PathExtrema>>>,
}

impl PathCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, k: usize, n_grid: usize, n_rep: usize, seed: u64) -> Arc<PathExtrema> {
        let key = PathKey { k, n_grid, n_rep, seed };
        if let Some(t) = self.tables.lock().expect("cache lock").get(&key) {
            return Arc::clone(t);
        }
        let table = Arc::new(simulate_brownian_paths(k, n_grid, n_rep, seed));
        self.tables
            .lock()
            .expect("cache lock")
            .entry(key)
            .or_insert(table)
            .clone()
    }
}
