//! Long-run variance of a projected product series.
//!
//! The estimator is the kernel-weighted autocovariance sum
//!
//! ```text
//! α̂² = Γ̂(0) + 2 Σ_{h=1}^{m} k(h / S) Γ̂(h)
//! ```
//!
//! with quadratic-spectral weights `k` and an Andrews plug-in bandwidth `S`
//! computed from an AR(1) fit to the product series. Lags are truncated at
//! `m = min(⌈3S⌉, N − 1)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sumproc::ProjectedSample;

const MODULE: &str = "lrv";

/// Bound on |ρ̂| in the bandwidth plug-in.
pub const RHO_CLAMP: f64 = 0.97;
/// Truncation in units of the bandwidth.
pub const TRUNCATION_FACTOR: f64 = 3.0;
/// Relative floor applied to non-positive estimates.
pub const NEGATIVE_FLOOR: f64 = 1e-12;

/// Where the long-run variance is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum LrvMode {
    /// On the full (possibly contaminated) series that is also tested.
    InSample,
    /// On a held-out prefix of `length` observations that the test statistic
    /// never sees.
    LearningSample { length: usize },
}

impl LrvMode {
    pub fn label(&self) -> String {
        match self {
            LrvMode::InSample => "in-sample".to_string(),
            LrvMode::LearningSample { length } => format!("learning:{length}"),
        }
    }
}

impl std::str::FromStr for LrvMode {
    type Err = Error;

    /// Parses the form produced by [`LrvMode::label`].
    fn from_str(s: &str) -> Result<Self> {
        if s == "in-sample" {
            return Ok(LrvMode::InSample);
        }
        s.strip_prefix("learning:")
            .and_then(|n| n.parse().ok())
            .filter(|&length| length > 0)
            .map(|length| LrvMode::LearningSample { length })
            .ok_or_else(|| {
                Error::config(MODULE, "lrv_mode", format!("`{s}` is neither `in-sample` nor `learning:<length>`"))
            })
    }
}

/// Estimated long-run variance with the bandwidth that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrvEstimate {
    pub alpha_sq: f64,
    pub bandwidth: f64,
    pub n_lags: usize,
    pub mode: LrvMode,
    /// Lag-1 autocorrelation used by the bandwidth rule (after clamping);
    /// absent when the bandwidth was overridden.
    pub rho_hat: Option<f64>,
    /// The AR(1) coefficient hit the ±0.97 clamp.
    pub rho_clamped: bool,
    /// The weighted sum was not positive and was floored.
    pub degenerate: bool,
}

fn mean(p: &[f64]) -> f64 {
    p.iter().sum::<f64>() / p.len() as f64
}

fn autocov_centered(p: &[f64], mu: f64, h: usize) -> f64 {
    let n = p.len();
    p[..n - h]
        .iter()
        .zip(&p[h..])
        .map(|(a, b)| (a - mu) * (b - mu))
        .sum::<f64>()
        / n as f64
}

/// Sample autocovariance `Γ̂(h) = N⁻¹ Σ_{i=1}^{N−h} (p_i − μ̂)(p_{i+h} − μ̂)`.
pub fn autocov_hat(ps: &ProjectedSample, h: usize) -> Result<f64> {
    let p = ps.products();
    if h >= p.len() {
        return Err(Error::domain(
            MODULE,
            format!("lag {h} is not below the sample length {}", p.len()),
        ));
    }
    Ok(autocov_centered(p, mean(p), h))
}

/// Quadratic-spectral kernel.
pub fn qs_weight(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let z = 6.0 * PI * x / 5.0;
    25.0 / (12.0 * PI * PI * x * x) * (z.sin() / z - z.cos())
}

/// Andrews plug-in bandwidth for the QS kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidth {
    pub value: f64,
    pub rho_hat: f64,
    pub clamped: bool,
}

/// `S = 1.3221 · (α̂(2) · N)^{1/5}` with `α̂(2) = 4ρ̂² / (1 − ρ̂)⁴` from the
/// lag-1 autocorrelation of the centered product series.
pub fn andrews_bandwidth(ps: &ProjectedSample) -> Result<Bandwidth> {
    let p = ps.products();
    if p.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: p.len(),
        });
    }
    let mu = mean(p);
    let g0 = autocov_centered(p, mu, 0);
    if !(g0 > 0.0) {
        return Err(Error::DegenerateLrv {
            sample: 0,
            reason: "product series is constant".into(),
        });
    }
    let raw = autocov_centered(p, mu, 1) / g0;
    Ok(bandwidth_from_rho(raw, p.len()))
}

pub(crate) fn bandwidth_from_rho(raw: f64, n: usize) -> Bandwidth {
    let rho = raw.clamp(-RHO_CLAMP, RHO_CLAMP);
    let clamped = rho != raw;
    let alpha2 = 4.0 * rho * rho / (1.0 - rho).powi(4);
    let value = if alpha2 == 0.0 {
        0.0
    } else {
        1.3221 * (alpha2 * n as f64).powf(0.2)
    };
    Bandwidth {
        value,
        rho_hat: rho,
        clamped,
    }
}

/// Long-run variance of `ps`. The `mode` is recorded; selecting the
/// observations it refers to is the caller's job (see [`estimate_for_mode`]).
pub fn lrv_estimate(ps: &ProjectedSample, mode: LrvMode, bandwidth_override: Option<f64>) -> Result<LrvEstimate> {
    let p = ps.products();
    let n = p.len();
    let min_len = if bandwidth_override == Some(0.0) { 2 } else { 4 };
    if n < min_len {
        return Err(Error::InsufficientData { needed: min_len, got: n });
    }
    let (bandwidth, rho_hat, rho_clamped) = match bandwidth_override {
        Some(b) if b.is_finite() && b >= 0.0 => (b, None, false),
        Some(b) => {
            return Err(Error::config(MODULE, "bandwidth", format!("{b} is not a non-negative number")));
        }
        None => {
            let bw = andrews_bandwidth(ps)?;
            (bw.value, Some(bw.rho_hat), bw.clamped)
        }
    };

    let mu = mean(p);
    let g0 = autocov_centered(p, mu, 0);
    if !(g0 > 0.0) {
        return Err(Error::DegenerateLrv {
            sample: 0,
            reason: "product series is constant".into(),
        });
    }
    let n_lags = if bandwidth == 0.0 {
        0
    } else {
        ((TRUNCATION_FACTOR * bandwidth).ceil() as usize).min(n - 1)
    };
    let tail: f64 = (1..=n_lags)
        .map(|h| qs_weight(h as f64 / bandwidth) * autocov_centered(p, mu, h))
        .sum();
    let raw = g0 + 2.0 * tail;
    let degenerate = !(raw > 0.0);
    let alpha_sq = if degenerate { raw.max(NEGATIVE_FLOOR * g0) } else { raw };
    Ok(LrvEstimate {
        alpha_sq,
        bandwidth,
        n_lags,
        mode,
        rho_hat,
        rho_clamped,
        degenerate,
    })
}

/// Applies `mode` to a full sample: learning mode estimates on the first
/// `length` observations, in-sample mode on all of them.
pub fn estimate_for_mode(ps: &ProjectedSample, mode: LrvMode, bandwidth_override: Option<f64>) -> Result<LrvEstimate> {
    match mode {
        LrvMode::InSample => lrv_estimate(ps, mode, bandwidth_override),
        LrvMode::LearningSample { length } => {
            if length > ps.len() {
                return Err(Error::shape(
                    MODULE,
                    format!("learning length {length} exceeds the {} available observations", ps.len()),
                ));
            }
            lrv_estimate(&ps.slice(0..length), mode, bandwidth_override)
        }
    }
}
