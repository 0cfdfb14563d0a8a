//! Monte Carlo size and power study.
//!
//! Four samples with the sizes of one of the cases I–IV are observed over a
//! horizon of `T = 1200` time units, so sample `j` has sampling rate
//! `ω_j = N_j / T`. Coordinates follow AR(1) recursions with coefficients
//! `ρ_ν = 0.1 + 0.5ν/d` (after a coefficient change `0.4 + 0.5ν/d`) and
//! innovation scales `σ̃₀ = (1, 1.5, 0.7, 1)` (after a scale change
//! `σ̃₁ = (1, 0.7, 1.2, 1)`). A change at physical time `t` lands at index
//! `⌊ω_j t⌋` of sample `j`.
//!
//! Every replication draws a fresh panel and a fresh Dirichlet projection
//! `w`, used as both `v` and `w`, and runs each requested test on it.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cptest::{self, CritvalSettings, Projection, TestSpec};
use crate::error::{Error, Result};
use crate::limits::{PathCache, StatisticKind, DEFAULT_N_GRID, DEFAULT_N_REP};
use crate::lrv::LrvMode;
use crate::rng::{self, Domain};
use crate::simgen::{self, PanelConfig, DEFAULT_BURN_IN};
use crate::sumproc::ProjectionPair;

const MODULE: &str = "harness";

pub const HORIZON: usize = 1200;
pub const SIGMA_PRE: [f64; 4] = [1.0, 1.5, 0.7, 1.0];
pub const SIGMA_POST: [f64; 4] = [1.0, 0.7, 1.2, 1.0];
pub const CHANGE_TIMES: [usize; 3] = [240, 600, 960];

/// Sample-size presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Case {
    I,
    II,
    III,
    IV,
}

impl Case {
    pub const ALL: [Case; 4] = [Case::I, Case::II, Case::III, Case::IV];

    pub fn sizes(self) -> [usize; 4] {
        match self {
            Case::I => [100, 120, 70, 90],
            Case::II => [300, 250, 350, 180],
            Case::III => [500, 450, 550, 600],
            Case::IV => [1000, 900, 1100, 950],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Case::I => "I",
            Case::II => "II",
            Case::III => "III",
            Case::IV => "IV",
        }
    }
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Case::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(MODULE, "cases", format!("unknown case `{s}` (expected I, II, III or IV)")))
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    None,
    SigmaChange,
    CoefficientChange,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::None => "none",
            Scenario::SigmaChange => "sigma-change",
            Scenario::CoefficientChange => "coefficient-change",
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Scenario::None, Scenario::SigmaChange, Scenario::CoefficientChange]
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| {
                Error::config(
                    MODULE,
                    "scenario",
                    format!("unknown scenario `{s}` (expected none, sigma-change or coefficient-change)"),
                )
            })
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How projection vectors are drawn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionDraw {
    /// A fresh Dirichlet vector for every replication.
    #[default]
    PerReplication,
    /// One Dirichlet vector per data cell, reused by all its replications.
    /// Power then reflects that single vector rather than the average.
    PerCell,
}

impl FromStr for ProjectionDraw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-replication" => Ok(ProjectionDraw::PerReplication),
            "per-cell" => Ok(ProjectionDraw::PerCell),
            other => Err(Error::config(
                MODULE,
                "projection_draw",
                format!("unknown value `{other}` (expected per-replication or per-cell)"),
            )),
        }
    }
}

/// `ρ_ν = 0.1 + 0.5ν/d`, `ν = 1..=d`.
pub fn rho_pre(d: usize) -> Vec<f64> {
    (1..=d).map(|nu| 0.1 + 0.5 * nu as f64 / d as f64).collect()
}

/// `ρ_ν = 0.4 + 0.5ν/d`, `ν = 1..=d`.
pub fn rho_post(d: usize) -> Vec<f64> {
    (1..=d).map(|nu| 0.4 + 0.5 * nu as f64 / d as f64).collect()
}

/// Maps a physical change time to per-sample indices `τ_j = ⌊ω_j t⌋`,
/// clamped to `[1, N_j]`.
///
/// Rates are `N_j / horizon`; the product is formed as `N_j t / horizon`
/// in integers so exact multiples do not fall one short.
pub fn change_time_mapping(time: usize, sizes: &[usize], horizon: usize) -> Vec<usize> {
    sizes
        .iter()
        .map(|&n| ((n as u128 * time as u128) / horizon.max(1) as u128).clamp(1, n as u128) as usize)
        .collect()
}

fn default_horizon() -> usize {
    HORIZON
}
fn default_sigma0() -> Vec<f64> {
    SIGMA_PRE.to_vec()
}
fn default_sigma1() -> Vec<f64> {
    SIGMA_POST.to_vec()
}
fn default_level() -> f64 {
    0.95
}
fn default_n_grid() -> usize {
    DEFAULT_N_GRID
}
fn default_n_rep() -> usize {
    DEFAULT_N_REP
}
fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

/// A grid of experiment cells: every combination of case, dimension,
/// change time and LRV mode, each evaluated with every test kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub replications: usize,
    pub cases: Vec<Case>,
    pub dims: Vec<usize>,
    pub scenario: Scenario,
    /// Physical change times; must be empty for scenario `none`.
    #[serde(default)]
    pub change_times: Vec<usize>,
    pub kinds: Vec<StatisticKind>,
    pub lrv_modes: Vec<LrvMode>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_sigma0")]
    pub sigma0: Vec<f64>,
    #[serde(default = "default_sigma1")]
    pub sigma1: Vec<f64>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_n_grid")]
    pub n_grid: usize,
    #[serde(default = "default_n_rep")]
    pub n_rep: usize,
    #[serde(default)]
    pub projection_draw: ProjectionDraw,
}

/// Names accepted by [`ExperimentConfig::preset`].
pub const PRESETS: &[&str] = &[
    "size-learning",
    "size-in-sample",
    "power-sigma-learning",
    "power-coefficient-learning",
    "power-sigma-in-sample",
    "table4",
    "table5",
    "table7",
    "table8",
];

impl ExperimentConfig {
    /// Desk-scale versions of the published tables: case I–IV by d = 10, 50,
    /// 200; 2000 replications for size, 1000 for power.
    ///
    /// `table4`/`table5` are the squared-error/pooled power tables under a
    /// scale change with a learning sample; `table7`/`table8` the
    /// squared-error/pooled size tables with in-sample LRV estimation.
    pub fn preset(name: &str) -> Result<Self> {
        let learning = vec![LrvMode::LearningSample { length: 500 }, LrvMode::LearningSample { length: 1000 }];
        let both = vec![StatisticKind::QBreve, StatisticKind::VBreve];
        let base = |replications, scenario, change_times: Vec<usize>, kinds, lrv_modes| Self {
            replications,
            cases: Case::ALL.to_vec(),
            dims: vec![10, 50, 200],
            scenario,
            change_times,
            kinds,
            lrv_modes,
            level: 0.95,
            seed: 0,
            horizon: HORIZON,
            sigma0: SIGMA_PRE.to_vec(),
            sigma1: SIGMA_POST.to_vec(),
            burn_in: DEFAULT_BURN_IN,
            n_grid: DEFAULT_N_GRID,
            n_rep: DEFAULT_N_REP,
            projection_draw: ProjectionDraw::PerReplication,
        };
        Ok(match name {
            "size-learning" => base(2000, Scenario::None, vec![], both, learning),
            "size-in-sample" => base(2000, Scenario::None, vec![], both, vec![LrvMode::InSample]),
            "power-sigma-learning" => base(1000, Scenario::SigmaChange, CHANGE_TIMES.to_vec(), both, learning),
            "power-coefficient-learning" => {
                base(1000, Scenario::CoefficientChange, CHANGE_TIMES.to_vec(), both, learning)
            }
            "power-sigma-in-sample" => base(1000, Scenario::SigmaChange, vec![960], both, vec![LrvMode::InSample]),
            "table4" | "table5" => {
                let kind = if name == "table4" { StatisticKind::QBreve } else { StatisticKind::VBreve };
                base(1000, Scenario::SigmaChange, CHANGE_TIMES.to_vec(), vec![kind], learning)
            }
            "table7" | "table8" => {
                let kind = if name == "table7" { StatisticKind::QBreve } else { StatisticKind::VBreve };
                base(2000, Scenario::None, vec![], vec![kind], vec![LrvMode::InSample])
            }
            other => {
                return Err(Error::config(
                    MODULE,
                    "preset",
                    format!("unknown preset '{other}' (known: {})", PRESETS.join(", ")),
                ))
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::config(MODULE, "replications", "at least one replication is required"));
        }
        let empty = [
            ("cases", self.cases.is_empty()),
            ("dims", self.dims.is_empty()),
            ("kinds", self.kinds.is_empty()),
            ("lrv_modes", self.lrv_modes.is_empty()),
        ];
        if let Some((field, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::config(MODULE, *field, "must not be empty"));
        }
        if let Some(kind) = self.kinds.iter().find(|k| !k.is_bridge()) {
            return Err(Error::config(
                MODULE,
                "kinds",
                format!("{kind} needs population targets; simulated experiments run q-breve and v-breve"),
            ));
        }
        match (self.scenario, self.change_times.is_empty()) {
            (Scenario::None, false) => {
                return Err(Error::config(MODULE, "change_times", "scenario 'none' takes no change times"))
            }
            (Scenario::SigmaChange | Scenario::CoefficientChange, true) => {
                return Err(Error::config(MODULE, "change_times", "a change scenario needs at least one change time"))
            }
            _ => {}
        }
        if self.horizon == 0 {
            return Err(Error::config(MODULE, "horizon", "must be positive"));
        }
        if let Some(t) = self.change_times.iter().find(|&&t| t == 0 || t > self.horizon) {
            return Err(Error::config(
                MODULE,
                "change_times",
                format!("change time {t} is outside (0, {}]", self.horizon),
            ));
        }
        for (field, s) in [("sigma0", &self.sigma0), ("sigma1", &self.sigma1)] {
            if s.len() != 4 {
                return Err(Error::config(MODULE, field, format!("expected 4 values, got {}", s.len())));
            }
        }
        if self.n_grid < 100 || self.n_rep < 1000 {
            return Err(Error::config(MODULE, "n_grid", "n_grid >= 100 and n_rep >= 1000 are required"));
        }
        crate::limits::check_level(self.level)
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("configs always serialize");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

/// Identity of one data cell; every test kind in the cell sees the same
/// replication panels.
#[derive(Debug, Clone, Copy, PartialEq)]
struct DataCell {
    case: Case,
    d: usize,
    change_time: Option<usize>,
    lrv_mode: LrvMode,
}

impl DataCell {
    fn key(&self, scenario: Scenario) -> String {
        let t = self.change_time.map_or_else(|| "-".to_string(), |t| t.to_string());
        format!("{}|d={}|{}|t={}|{}", self.case, self.d, scenario, t, self.lrv_mode.label())
    }
}

/// Rejection tally of one (case, d, scenario, change time, lrv, kind) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub case: Case,
    pub d: usize,
    pub scenario: Scenario,
    /// Physical change time; absent under the null.
    pub change_time: Option<usize>,
    pub kind: StatisticKind,
    pub lrv: String,
    pub level: f64,
    /// Replications that produced a decision.
    pub n: usize,
    /// Replications that failed, e.g. on a degenerate LRV.
    pub failed: usize,
    pub rejections: usize,
    pub rate: f64,
    pub stderr: f64,
}

/// A cell that was not run, and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub cell: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config_hash: String,
    pub seed: u64,
    pub replications: usize,
    pub cells: Vec<CellResult>,
    pub skipped: Vec<SkippedCell>,
    /// Elapsed time. Left out of the serialized form so that replays
    /// compare byte for byte.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl ExperimentResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results always serialize")
    }

    /// CSV with one row per cell.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io {
            path: "<experiment csv>".into(),
            source: std::io::Error::other(e),
        };
        w.write_record([
            "case",
            "d",
            "scenario",
            "change_time",
            "kind",
            "lrv",
            "level",
            "n",
            "failed",
            "rejections",
            "rate",
            "stderr",
            "seed",
            "config_hash",
        ])
        .map_err(io)?;
        for c in &self.cells {
            w.write_record([
                c.case.to_string(),
                c.d.to_string(),
                c.scenario.to_string(),
                c.change_time.map(|t| t.to_string()).unwrap_or_default(),
                c.kind.to_string(),
                c.lrv.clone(),
                c.level.to_string(),
                c.n.to_string(),
                c.failed.to_string(),
                c.rejections.to_string(),
                c.rate.to_string(),
                c.stderr.to_string(),
                self.seed.to_string(),
                self.config_hash.clone(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<experiment csv>".into(),
            source: e,
        })
    }

    pub fn find(
        &self,
        case: Case,
        d: usize,
        change_time: Option<usize>,
        kind: StatisticKind,
    ) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.case == case && c.d == d && c.change_time == change_time && c.kind == kind)
    }

    /// Departures from the pattern "a change in the middle is detected more
    /// often than an early or late one" under a scale change. Informational.
    pub fn ordering_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for mid in self.cells.iter().filter(|c| c.scenario == Scenario::SigmaChange && c.change_time == Some(600)) {
            for t in [240, 960] {
                let other = self.cells.iter().find(|c| {
                    c.case == mid.case && c.d == mid.d && c.kind == mid.kind && c.lrv == mid.lrv && c.change_time == Some(t)
                });
                if let Some(o) = other {
                    if o.rate > mid.rate {
                        out.push(format!(
                            "case {} d={} {} {}: power after {t} ({:.4}) exceeds power after 600 ({:.4})",
                            mid.case, mid.d, mid.kind, mid.lrv, o.rate, mid.rate
                        ));
                    }
                }
            }
        }
        out
    }
}

/// Panel configuration for replication `rep` of a data cell.
fn panel_config(config: &ExperimentConfig, cell: &DataCell, seed: u64) -> Result<PanelConfig> {
    let sizes = cell.case.sizes();
    let learning = match cell.lrv_mode {
        LrvMode::InSample => 0,
        LrvMode::LearningSample { length } => length,
    };
    let tau = cell
        .change_time
        .map(|t| change_time_mapping(t, &sizes, config.horizon).iter().map(|tau| tau + learning).collect());
    let (rho1, sigma1) = match config.scenario {
        Scenario::None => (None, None),
        Scenario::SigmaChange => (None, Some(config.sigma1.clone())),
        Scenario::CoefficientChange => (Some(rho_post(cell.d)), None),
    };
    let pc = PanelConfig {
        d: cell.d,
        n: sizes.iter().map(|n| n + learning).collect(),
        rho0: rho_pre(cell.d),
        rho1,
        sigma0: config.sigma0.clone(),
        sigma1,
        tau,
        burn_in: config.burn_in,
        seed,
    };
    pc.validate()?;
    Ok(pc)
}

/// One replication: decisions per kind, or the error that stopped it.
fn replicate(
    config: &ExperimentConfig,
    cell: &DataCell,
    seed: u64,
    shared: Option<&ProjectionPair>,
    cache: &PathCache,
) -> Result<Vec<bool>> {
    let panel = simgen::gen_ar1_panel(&panel_config(config, cell, seed)?)?;
    let pair = match shared {
        Some(p) => p.clone(),
        None => ProjectionPair::quadratic(simgen::gen_dirichlet_projection(cell.d, seed)?)?,
    };
    config
        .kinds
        .iter()
        .map(|&kind| {
            let spec = TestSpec {
                kind,
                level: config.level,
                projection: Projection::Shared(pair.clone()),
                targets: None,
                lrv_mode: cell.lrv_mode,
                bandwidth: None,
                critval: critval_settings(config),
            };
            Ok(cptest::run_test(&panel.samples, &spec, cache)?.reject)
        })
        .collect()
}

fn critval_settings(config: &ExperimentConfig) -> CritvalSettings {
    CritvalSettings {
        n_grid: config.n_grid,
        n_rep: config.n_rep,
        seed: rng::mix(&[config.seed, Domain::BrownianPath as u64]),
    }
}

fn data_cells(config: &ExperimentConfig) -> Vec<DataCell> {
    let times: Vec<Option<usize>> = if config.change_times.is_empty() {
        vec![None]
    } else {
        config.change_times.iter().copied().map(Some).collect()
    };
    let mut cells = Vec::new();
    for &case in &config.cases {
        for &d in &config.dims {
            for &change_time in &times {
                for &lrv_mode in &config.lrv_modes {
                    cells.push(DataCell {
                        case,
                        d,
                        change_time,
                        lrv_mode,
                    });
                }
            }
        }
    }
    cells
}

/// Runs every cell of `config`. Results depend only on the configuration,
/// not on the number of worker threads.
pub fn run_experiment(config: &ExperimentConfig, cache: &PathCache) -> Result<ExperimentResult> {
    config.validate()?;
    let start = Instant::now();
    let mut cells = Vec::new();
    let mut skipped = Vec::new();
    for cell in data_cells(config) {
        let key = cell.key(config.scenario);
        if let Err(e) = panel_config(config, &cell, 0) {
            log::warn!("skipping cell {key}: {e}");
            skipped.push(SkippedCell {
                cell: key,
                reason: e.to_string(),
            });
            continue;
        }
        let cell_id = rng::fnv1a(key.as_bytes());
        // materialize the shared table before the parallel section
        let cv = critval_settings(config);
        cache.get(4, cv.n_grid, cv.n_rep, cv.seed);

        let shared = match config.projection_draw {
            ProjectionDraw::PerReplication => None,
            ProjectionDraw::PerCell => {
                let seed = rng::mix(&[config.seed, Domain::Projection as u64, cell_id]);
                Some(ProjectionPair::quadratic(simgen::gen_dirichlet_projection(cell.d, seed)?)?)
            }
        };

        let outcomes: Vec<Result<Vec<bool>>> = (0..config.replications)
            .into_par_iter()
            .map(|rep| {
                let seed = rng::mix(&[config.seed, Domain::Replication as u64, cell_id, rep as u64]);
                replicate(config, &cell, seed, shared.as_ref(), cache)
            })
            .collect();

        let mut failed = 0;
        let mut rejections = vec![0usize; config.kinds.len()];
        for (rep, outcome) in outcomes.iter().enumerate() {
            match outcome {
                Ok(decisions) => {
                    for (r, &d) in rejections.iter_mut().zip(decisions) {
                        *r += d as usize;
                    }
                }
                Err(e) => {
                    log::warn!("cell {key}, replication {rep}: {e}");
                    failed += 1;
                }
            }
        }
        let n = config.replications - failed;
        for (&kind, &rej) in config.kinds.iter().zip(&rejections) {
            let rate = if n > 0 { rej as f64 / n as f64 } else { f64::NAN };
            cells.push(CellResult {
                case: cell.case,
                d: cell.d,
                scenario: config.scenario,
                change_time: cell.change_time,
                kind,
                lrv: cell.lrv_mode.label(),
                level: config.level,
                n,
                failed,
                rejections: rej,
                rate,
                stderr: (rate * (1.0 - rate) / n as f64).sqrt(),
            });
        }
        log::info!("cell {key} done");
    }
    Ok(ExperimentResult {
        config_hash: config.hash(),
        seed: config.seed,
        replications: config.replications,
        cells,
        skipped,
        wall_time: start.elapsed(),
    })
}
