//! Synthetic K-sample panels and random projection vectors.
//!
//! Each sample `j` is a `N_j x d` matrix whose coordinates follow AR(1)
//! recursions driven by one shared scalar innovation sequence per sample:
//!
//! ```text
//! Y[j,i,ν] = ρ_ν · Y[j,i-1,ν] + ε[j,i],   ε[j,i] ~ N(0, σ_j²)
//! ```
//!
//! so the coordinates of one sample are cross-correlated through the common
//! innovation. A change can be injected after observation `τ_j`; from
//! `i = τ_j + 1` onwards the recursion uses the post-change coefficients and
//! innovation scale. The state is carried over, so the transition is gradual.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

const MODULE: &str = "simgen";

pub const DEFAULT_BURN_IN: usize = 500;

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

/// Parameters of an AR(1) panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelConfig {
    /// Dimension of every observation vector.
    pub d: usize,
    /// Sample sizes, one per sample; `K = n.len()`.
    pub n: Vec<usize>,
    /// Pre-change AR coefficient per coordinate.
    pub rho0: Vec<f64>,
    /// Post-change AR coefficient per coordinate.
    #[serde(default)]
    pub rho1: Option<Vec<f64>>,
    /// Pre-change innovation standard deviation per sample.
    pub sigma0: Vec<f64>,
    /// Post-change innovation standard deviation per sample.
    #[serde(default)]
    pub sigma1: Option<Vec<f64>>,
    /// Observation index per sample after which the post-change regime applies.
    #[serde(default)]
    pub tau: Option<Vec<usize>>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub seed: u64,
}

impl PanelConfig {
    pub fn k(&self) -> usize {
        self.n.len()
    }

    /// Checks every invariant; the error names the offending field.
    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 {
            return Err(Error::config(MODULE, "n", "at least one sample is required"));
        }
        if let Some(j) = self.n.iter().position(|&n| n == 0) {
            return Err(Error::config(MODULE, format!("n[{j}]"), "sample sizes must be positive"));
        }
        if self.d == 0 {
            return Err(Error::config(MODULE, "d", "dimension must be at least 1"));
        }
        check_rho("rho0", &self.rho0, self.d)?;
        if let Some(rho1) = &self.rho1 {
            check_rho("rho1", rho1, self.d)?;
        }
        check_sigma("sigma0", &self.sigma0, k)?;
        if let Some(sigma1) = &self.sigma1 {
            check_sigma("sigma1", sigma1, k)?;
        }
        if let Some(tau) = &self.tau {
            if tau.len() != k {
                return Err(Error::config(
                    MODULE,
                    "tau",
                    format!("expected {k} change indices, got {}", tau.len()),
                ));
            }
            for (j, (&t, &n)) in tau.iter().zip(&self.n).enumerate() {
                if t < 1 || t > n {
                    return Err(Error::config(
                        MODULE,
                        format!("tau[{j}]"),
                        format!("change index {t} outside 1..={n}"),
                    ));
                }
            }
            if self.rho1.is_none() && self.sigma1.is_none() {
                return Err(Error::config(
                    MODULE,
                    "tau",
                    "a change index requires rho1 or sigma1",
                ));
            }
        }
        Ok(())
    }
}

fn check_rho(field: &str, rho: &[f64], d: usize) -> Result<()> {
    if rho.len() != d {
        return Err(Error::config(
            MODULE,
            field,
            format!("expected {d} coefficients, got {}", rho.len()),
        ));
    }
    if let Some(nu) = rho.iter().position(|r| !r.is_finite() || r.abs() >= 1.0) {
        return Err(Error::config(
            MODULE,
            format!("{field}[{nu}]"),
            format!("coefficient {} is not stationary (|rho| < 1 required)", rho[nu]),
        ));
    }
    Ok(())
}

fn check_sigma(field: &str, sigma: &[f64], k: usize) -> Result<()> {
    if sigma.len() != k {
        return Err(Error::config(
            MODULE,
            field,
            format!("expected {k} standard deviations, got {}", sigma.len()),
        ));
    }
    if let Some(j) = sigma.iter().position(|s| !s.is_finite() || *s <= 0.0) {
        return Err(Error::config(
            MODULE,
            format!("{field}[{j}]"),
            format!("standard deviation {} must be positive", sigma[j]),
        ));
    }
    Ok(())
}

/// K simulated samples together with the configuration that produced them.
#[derive(Debug, Clone)]
pub struct Panel {
    pub samples: Vec<Array2<f64>>,
    pub config: PanelConfig,
}

impl Panel {
    pub fn k(&self) -> usize {
        self.samples.len()
    }
}

/// Simulates an AR(1) panel. Output is a pure function of `config`.
pub fn gen_ar1_panel(config: &PanelConfig) -> Result<Panel> {
    config.validate()?;
    let d = config.d;
    let samples = config
        .n
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let mut rng = rng::stream(config.seed, Domain::PanelSample, j as u64, 0);
            let sigma_pre = config.sigma0[j];
            let sigma_post = config.sigma1.as_ref().map_or(sigma_pre, |s| s[j]);
            let rho_pre = config.rho0.as_slice();
            let rho_post = config.rho1.as_deref().unwrap_or(rho_pre);
            let tau = config.tau.as_ref().map_or(n, |t| t[j]);

            let mut state = vec![0.0; d];
            for _ in 0..config.burn_in {
                let eps = sigma_pre * rng.sample::<f64, _>(StandardNormal);
                ar_step(&mut state, rho_pre, eps);
            }

            let mut out = Array2::zeros((n, d));
            let data = out.as_slice_mut().expect("fresh arrays are contiguous");
            for (i, row) in data.chunks_exact_mut(d).enumerate() {
                let (rho, sigma) = if i + 1 > tau {
                    (rho_post, sigma_post)
                } else {
                    (rho_pre, sigma_pre)
                };
                let eps = sigma * rng.sample::<f64, _>(StandardNormal);
                ar_step(&mut state, rho, eps);
                row.copy_from_slice(&state);
            }
            out
        })
        .collect();
    Ok(Panel {
        samples,
        config: config.clone(),
    })
}

#[inline]
fn ar_step(state: &mut [f64], rho: &[f64], eps: f64) {
    for (y, r) in state.iter_mut().zip(rho) {
        *y = r * *y + eps;
    }
}

/// Draws a weight vector from a Dirichlet distribution whose `d` parameters
/// are themselves drawn uniformly from `(0, 1]`.
///
/// Gamma variates with small shape routinely underflow, so they are produced
/// in log space (`G(a) = G(a + 1) · U^{1/a}`) and normalized with a
/// log-sum-exp.
pub fn gen_dirichlet_projection(d: usize, seed: u64) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::config(MODULE, "d", "dimension must be at least 1"));
    }
    let mut rng = rng::stream(seed, Domain::Projection, d as u64, 0);
    let log_g: Vec<f64> = (0..d)
        .map(|_| {
            let shape = 1.0 - rng.random::<f64>();
            let boosted = Gamma::new(shape + 1.0, 1.0)
                .expect("shape in (1, 2] is valid")
                .sample(&mut rng);
            let u = 1.0 - rng.random::<f64>();
            boosted.ln() + u.ln() / shape
        })
        .collect();
    let max = log_g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = log_g.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    Ok(w)
}

/// Second-order moments of the stationary shared-innovation AR(1) model with
/// Gaussian innovations.
#[derive(Debug, Clone)]
pub struct Ar1Moments<'a> {
    rho: &'a [f64],
    sigma: f64,
}

impl<'a> Ar1Moments<'a> {
    pub fn new(rho: &'a [f64], sigma: f64) -> Self {
        Self { rho, sigma }
    }

    /// Variance of coordinate `nu`: `σ² / (1 - ρ_ν²)`.
    pub fn coordinate_variance(&self, nu: usize) -> f64 {
        self.sigma * self.sigma / (1.0 - self.rho[nu] * self.rho[nu])
    }

    /// `γ_{xy}(h) = E[(v'Y_i)(w'Y_{i+h})]` for `h >= 0`.
    fn cross_cov(&self, v: &[f64], w: &[f64], max_lag: usize) -> Vec<f64> {
        let s2 = self.sigma * self.sigma;
        let c: Vec<f64> = self
            .rho
            .iter()
            .map(|&rm| {
                v.iter()
                    .zip(self.rho)
                    .map(|(&vn, &rn)| vn / (1.0 - rn * rm))
                    .sum::<f64>()
            })
            .collect();
        let mut powers: Vec<f64> = vec![1.0; self.rho.len()];
        (0..=max_lag)
            .map(|_| {
                let g = s2 * w
                    .iter()
                    .zip(&c)
                    .zip(&powers)
                    .map(|((&wm, &cm), &pm)| wm * cm * pm)
                    .sum::<f64>();
                powers.iter_mut().zip(self.rho).for_each(|(p, r)| *p *= r);
                g
            })
            .collect()
    }

    /// Population bilinear form `v' Cov(Y_i) w`.
    pub fn bilinear(&self, v: &[f64], w: &[f64]) -> f64 {
        self.cross_cov(v, w, 0)[0]
    }

    /// Long-run variance of the product series `(v'Y_i)(w'Y_i)`, via
    /// Isserlis' theorem: `Cov(p_0, p_h) = γ_vv(h)γ_ww(h) + γ_vw(h)γ_vw(-h)`.
    pub fn product_lrv(&self, v: &[f64], w: &[f64]) -> f64 {
        let rmax = self.rho.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let max_lag = if rmax == 0.0 {
            0
        } else {
            ((1e-18f64).ln() / rmax.ln()).ceil() as usize + 1
        };
        let vv = self.cross_cov(v, v, max_lag);
        let ww = self.cross_cov(w, w, max_lag);
        let vw = self.cross_cov(v, w, max_lag);
        let wv = self.cross_cov(w, v, max_lag);
        let lag = |h: usize| vv[h] * ww[h] + vw[h] * wv[h];
        lag(0) + 2.0 * (1..=max_lag).map(lag).sum::<f64>()
    }
}
