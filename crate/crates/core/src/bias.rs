//! Closed-form biases of estimators that ignore or misspecify mobility, with
//! Monte-Carlo oracles that recompute each one by brute force.
//!
//! Two settings are covered. In the linear setting `W` and `G` are
//! unit-variance with correlation `rho` and
//! `Y = tau W beta_w + (1 - tau) G beta_g + eps` with a scalar `tau`. In the
//! misspecification setting `tau` varies across units independently of the
//! exposures, the truth uses `tau*` and the fitted model uses `tau`, and the
//! target is `omega = beta_w* mean(tau*) + beta_g* (1 - mean(tau*))`.

use std::io::Write;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::Law;
use crate::rng::substream;
use crate::stats;

/// Denominators at or below this magnitude are treated as zero.
const DEGENERATE: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearBiasSetting {
    pub tau: f64,
    pub rho: f64,
    pub beta_w: f64,
    pub beta_g: f64,
}

impl LinearBiasSetting {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau = {} outside [0, 1]", self.tau)));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho = {} outside [-1, 1]", self.rho)));
        }
        Ok(())
    }

    /// Effect of shifting both exposures by one unit.
    pub fn true_effect(&self) -> f64 {
        self.tau * self.beta_w + (1.0 - self.tau) * self.beta_g
    }
}

/// Population slope of `Y` on `W` alone.
pub fn naive_slope(s: &LinearBiasSetting) -> f64 {
    s.tau * s.beta_w + s.rho * (1.0 - s.tau) * s.beta_g
}

/// `tau^2 + 2 tau (1 - tau) rho + (1 - tau)^2`, the variance of `W*`.
pub fn weighted_exposure_variance(s: &LinearBiasSetting) -> f64 {
    let (t, r) = (s.tau, s.rho);
    t * t + 2.0 * t * (1.0 - t) * r + (1.0 - t) * (1.0 - t)
}

/// Population slope of `Y` on the combined exposure `W* = tau W + (1 - tau) G`.
pub fn weighted_slope_star(s: &LinearBiasSetting) -> Result<f64> {
    let (t, r) = (s.tau, s.rho);
    let den = weighted_exposure_variance(s);
    if den.abs() <= DEGENERATE {
        return Err(Error::DegenerateDenominator("weighted exposure variance"));
    }
    let num = t * t * s.beta_w
        + r * t * (1.0 - t) * s.beta_w
        + r * t * (1.0 - t) * s.beta_g
        + (1.0 - t) * (1.0 - t) * s.beta_g;
    Ok(num / den)
}

/// `tau (tau - 1) (2 tau - 1) (beta_w - beta_g) (rho - 1)`; zero exactly when
/// the combined-exposure slope equals the true effect.
pub fn unbiasedness_factor(s: &LinearBiasSetting) -> f64 {
    let t = s.tau;
    t * (t - 1.0) * (2.0 * t - 1.0) * (s.beta_w - s.beta_g) * (s.rho - 1.0)
}

/// First two moments of a non-negative weight or of a noise term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub second: f64,
}

pub type TauMoments = Moments;
pub type ErrorMoments = Moments;

impl Moments {
    pub fn new(mean: f64, second: f64) -> Result<Self> {
        let m = Moments { mean, second };
        m.validate()?;
        Ok(m)
    }

    pub fn from_law(law: &Law) -> Self {
        Moments {
            mean: law.mean(),
            second: law.second_moment(),
        }
    }

    pub fn from_samples(xs: &[f64]) -> Self {
        Moments {
            mean: stats::mean(xs),
            second: xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64,
        }
    }

    pub fn variance(&self) -> f64 {
        self.second - self.mean * self.mean
    }

    pub fn validate(&self) -> Result<()> {
        let tol = 1e-12 * self.second.abs().max(1.0);
        if !(self.mean.is_finite() && self.second.is_finite()) || self.variance() < -tol {
            return Err(Error::Config(format!(
                "moments E = {}, E2 = {} are inconsistent",
                self.mean, self.second
            )));
        }
        Ok(())
    }

    /// Moments of `1 - tau`.
    pub fn complement(&self) -> Self {
        Moments {
            mean: 1.0 - self.mean,
            second: 1.0 - 2.0 * self.mean + self.second,
        }
    }
}

/// Joint moments of the fitted weight `tau` and the true weight `tau*` that
/// determine the large-sample two-regressor fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointTauMoments {
    pub e_tau: f64,
    pub e_tau2: f64,
    pub e_star: f64,
    pub e_tau_star: f64,
}

impl JointTauMoments {
    /// `tau* = c tau`.
    pub fn scalar(c: f64, tau: &TauMoments) -> Self {
        JointTauMoments {
            e_tau: tau.mean,
            e_tau2: tau.second,
            e_star: c * tau.mean,
            e_tau_star: c * tau.second,
        }
    }

    /// `tau = tau* + eta` with `eta` independent of `tau*`.
    pub fn measurement_error(star: &TauMoments, eta: &ErrorMoments) -> Self {
        JointTauMoments {
            e_tau: star.mean + eta.mean,
            e_tau2: star.second + 2.0 * star.mean * eta.mean + eta.second,
            e_star: star.mean,
            e_tau_star: star.second + star.mean * eta.mean,
        }
    }

    /// `tau* = tau + eta` with `eta` independent of `tau`.
    pub fn additive_error(tau: &TauMoments, eta: &ErrorMoments) -> Self {
        JointTauMoments {
            e_tau: tau.mean,
            e_tau2: tau.second,
            e_star: tau.mean + eta.mean,
            e_tau_star: tau.second + tau.mean * eta.mean,
        }
    }
}

/// Large-sample bias of `omega_hat = b_w mean(tau) + b_g (1 - mean(tau))` where
/// `(b_w, b_g)` is the no-intercept OLS fit on `(tau W, (1 - tau) G)`.
pub fn asymptotic_omega_bias(m: &JointTauMoments, rho: f64, beta_w: f64, beta_g: f64) -> Result<f64> {
    let s_aa = m.e_tau2;
    let s_bb = 1.0 - 2.0 * m.e_tau + m.e_tau2;
    let s_ab = rho * (m.e_tau - m.e_tau2);
    let ay = beta_w * m.e_tau_star + beta_g * rho * (m.e_tau - m.e_tau_star);
    let by = beta_w * rho * (m.e_star - m.e_tau_star)
        + beta_g * (1.0 - m.e_tau - m.e_star + m.e_tau_star);
    let det = s_aa * s_bb - s_ab * s_ab;
    if det.abs() <= DEGENERATE {
        return Err(Error::DegenerateDenominator("two-regressor Gram determinant"));
    }
    let b_w = (s_bb * ay - s_ab * by) / det;
    let b_g = (s_aa * by - s_ab * ay) / det;
    let estimate = b_w * m.e_tau + b_g * (1.0 - m.e_tau);
    let target = beta_w * m.e_star + beta_g * (1.0 - m.e_star);
    Ok(estimate - target)
}

/// Bias of `omega_hat` when the assumed weights are `tau = tau*/c`, in terms of
/// the moments of the assumed `tau`.
pub fn scalar_misspec_bias(c: f64, rho: f64, tau: &TauMoments, beta_g_star: f64) -> Result<f64> {
    let (e1, e2) = (tau.mean, tau.second);
    let num = beta_g_star * (1.0 - c) * (1.0 - rho) * tau.variance() * (rho * e1 - (1.0 + rho) * e2);
    let cross = e1 - e2;
    let den = e2 * tau.complement().second - rho * rho * cross * cross;
    if den.abs() <= DEGENERATE {
        if num == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::DegenerateDenominator("scalar misspecification bias"));
    }
    Ok(num / den)
}

/// Attenuation factors under `tau = tau* + eta` with uncorrelated exposures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiResult {
    pub xi_w: f64,
    pub xi_g: f64,
    /// `beta_w* (xi_w - 1) E(tau*) + beta_g* (xi_g - 1) E(1 - tau*)`.
    pub bias: f64,
}

pub fn measurement_error_xi(star: &TauMoments, eta: &ErrorMoments, beta_w_star: f64, beta_g_star: f64) -> XiResult {
    let away = star.complement();
    let noisy_home = star.second + 2.0 * star.mean * eta.mean + eta.second;
    let noisy_away = away.second - 2.0 * away.mean * eta.mean + eta.second;
    let xi_w = star.second / noisy_home;
    let xi_g = away.second / noisy_away;
    XiResult {
        xi_w,
        xi_g,
        bias: beta_w_star * (xi_w * star.mean - star.mean) + beta_g_star * (xi_g * away.mean - away.mean),
    }
}

/// Large-sample bias of `omega_hat` when the truth is `tau* = tau + eta`.
pub fn additive_error_check(tau: &TauMoments, eta: &ErrorMoments, rho: f64, beta_w: f64, beta_g: f64) -> Result<f64> {
    asymptotic_omega_bias(&JointTauMoments::additive_error(tau, eta), rho, beta_w, beta_g)
}

// ---------------------------------------------------------------------------
// Monte-Carlo OLS oracle
// ---------------------------------------------------------------------------

/// Which estimator the oracle refits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "setting", rename_all = "snake_case")]
pub enum OracleSetting {
    /// Slope of `Y` on `W`, scored against the true effect.
    NaiveSlope,
    /// Slope of `Y` on `tau W + (1 - tau) G`, scored against the true effect.
    WeightedStar,
    /// `tau* = c tau`.
    ScalarMisspec { c: f64 },
    /// `tau = tau* + eta`; the weight law describes `tau*`.
    MeasurementError { eta: Law },
    /// `tau* = tau + eta`; the weight law describes `tau`.
    AdditiveError { eta: Law },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub setting: OracleSetting,
    /// Law of the per-unit weight (constant for the scalar-`tau` settings).
    pub tau: Law,
    pub rho: f64,
    pub beta_w: f64,
    pub beta_g: f64,
    pub sigma_eps: f64,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
}

/// Mean bias over replicates and its Monte-Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub bias: f64,
    pub se: f64,
}

impl OracleEstimate {
    /// Whether `value` lies within `k` standard errors of the estimate.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.bias - value).abs() <= k * self.se
    }
}

fn one_replicate(cfg: &OracleConfig, rng: &mut dyn RngCore) -> Result<f64> {
    let r = cfg.rho;
    let r_perp = (1.0 - r * r).max(0.0).sqrt();
    // accumulated cross-products: regressors a, b and outcome y
    let (mut aa, mut bb, mut ab, mut ay, mut by) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut sum_tau, mut sum_star) = (0.0, 0.0);
    for _ in 0..cfg.n {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        let w = z1;
        let g = r * z1 + r_perp * z2;
        let (tau, star) = match &cfg.setting {
            OracleSetting::NaiveSlope | OracleSetting::WeightedStar => {
                let t = cfg.tau.sample(rng);
                (t, t)
            }
            OracleSetting::ScalarMisspec { c } => {
                let t = cfg.tau.sample(rng);
                (t, c * t)
            }
            OracleSetting::MeasurementError { eta } => {
                let s = cfg.tau.sample(rng);
                (s + eta.sample(rng), s)
            }
            OracleSetting::AdditiveError { eta } => {
                let t = cfg.tau.sample(rng);
                (t, t + eta.sample(rng))
            }
        };
        let y = cfg.beta_w * star * w + cfg.beta_g * (1.0 - star) * g + cfg.sigma_eps * e;
        let (a, b) = match cfg.setting {
            OracleSetting::NaiveSlope => (w, 0.0),
            OracleSetting::WeightedStar => (tau * w + (1.0 - tau) * g, 0.0),
            _ => (tau * w, (1.0 - tau) * g),
        };
        aa += a * a;
        bb += b * b;
        ab += a * b;
        ay += a * y;
        by += b * y;
        sum_tau += tau;
        sum_star += star;
    }
    let n = cfg.n as f64;
    match cfg.setting {
        OracleSetting::NaiveSlope | OracleSetting::WeightedStar => {
            let tau = sum_tau / n;
            let truth = tau * cfg.beta_w + (1.0 - tau) * cfg.beta_g;
            Ok(ay / aa - truth)
        }
        _ => {
            let det = aa * bb - ab * ab;
            if det.abs() <= DEGENERATE * n * n {
                return Err(Error::DegenerateDenominator("sample Gram determinant"));
            }
            let b_w = (bb * ay - ab * by) / det;
            let b_g = (aa * by - ab * ay) / det;
            let (tau, star) = (sum_tau / n, sum_star / n);
            let estimate = b_w * tau + b_g * (1.0 - tau);
            let target = cfg.beta_w * star + cfg.beta_g * (1.0 - star);
            Ok(estimate - target)
        }
    }
}

/// Simulates `reps` datasets of size `n`, refits by OLS and reports the mean
/// bias with its standard error. Replicate `r` uses sub-stream `("oracle", r)`.
pub fn mc_ols_omega(cfg: &OracleConfig) -> Result<OracleEstimate> {
    if cfg.n < 3 || cfg.reps < 2 {
        return Err(Error::Config("oracle needs n >= 3 and reps >= 2".into()));
    }
    cfg.tau.validate()?;
    let biases: Vec<f64> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| one_replicate(cfg, &mut substream(cfg.seed, "oracle", r as u64)))
        .collect::<Result<_>>()?;
    Ok(OracleEstimate {
        bias: stats::mean(&biases),
        se: stats::std_error(&biases),
    })
}

/// The closed-form counterpart of an oracle configuration.
pub fn closed_form_bias(cfg: &OracleConfig) -> Result<f64> {
    let tau = Moments::from_law(&cfg.tau);
    let linear = |t: f64| LinearBiasSetting {
        tau: t,
        rho: cfg.rho,
        beta_w: cfg.beta_w,
        beta_g: cfg.beta_g,
    };
    match &cfg.setting {
        OracleSetting::NaiveSlope => {
            let s = linear(tau.mean);
            Ok(naive_slope(&s) - s.true_effect())
        }
        OracleSetting::WeightedStar => {
            let s = linear(tau.mean);
            Ok(weighted_slope_star(&s)? - s.true_effect())
        }
        OracleSetting::ScalarMisspec { c } => scalar_misspec_bias(*c, cfg.rho, &tau, cfg.beta_g),
        OracleSetting::MeasurementError { eta } => {
            let eta = Moments::from_law(eta);
            if cfg.rho == 0.0 {
                Ok(measurement_error_xi(&tau, &eta, cfg.beta_w, cfg.beta_g).bias)
            } else {
                asymptotic_omega_bias(&JointTauMoments::measurement_error(&tau, &eta), cfg.rho, cfg.beta_w, cfg.beta_g)
            }
        }
        OracleSetting::AdditiveError { eta } => {
            additive_error_check(&tau, &Moments::from_law(eta), cfg.rho, cfg.beta_w, cfg.beta_g)
        }
    }
}

// ---------------------------------------------------------------------------
// Curves and effects when the neighbourhood exposure is ignored
// ---------------------------------------------------------------------------

/// One joint draw of home exposure, neighbourhood exposure and covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDraw {
    pub w: f64,
    pub g: f64,
    pub x: Vec<f64>,
}

/// A data-generating process with a known conditional mean.
pub trait JointGenerator: Sync {
    fn n_covariates(&self) -> usize;
    fn sample(&self, rng: &mut dyn RngCore) -> JointDraw;
    /// `E(Y | W = w, G = g, X = x)`.
    fn mean(&self, w: f64, g: f64, x: &[f64]) -> f64;
}

/// Standard normal exposures with `corr(W, G) = rho`, an optional standard
/// normal covariate correlated with `W`, and conditional mean
/// `tau beta_w f(w) + (1 - tau) beta_g f(g) + beta_x x` with
/// `f(v) = v + curvature v^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianGenerator {
    pub rho: f64,
    pub tau: f64,
    pub beta_w: f64,
    pub beta_g: f64,
    pub curvature: f64,
    /// Include a covariate with this correlation to `W`.
    pub covariate: Option<f64>,
    pub beta_x: f64,
}

impl GaussianGenerator {
    pub fn new(rho: f64, tau: f64, beta_w: f64, beta_g: f64, curvature: f64) -> Self {
        GaussianGenerator {
            rho,
            tau,
            beta_w,
            beta_g,
            curvature,
            covariate: None,
            beta_x: 0.0,
        }
    }

    fn f(&self, v: f64) -> f64 {
        v + self.curvature * v * v
    }
}

impl JointGenerator for GaussianGenerator {
    fn n_covariates(&self) -> usize {
        usize::from(self.covariate.is_some())
    }

    fn sample(&self, rng: &mut dyn RngCore) -> JointDraw {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let perp = |r: f64| (1.0 - r * r).max(0.0).sqrt();
        let (w, x) = match self.covariate {
            Some(k) => {
                let x: f64 = rng.sample(StandardNormal);
                (k * x + perp(k) * z1, vec![x])
            }
            None => (z1, Vec::new()),
        };
        JointDraw {
            w,
            g: self.rho * w + perp(self.rho) * z2,
            x,
        }
    }

    fn mean(&self, w: f64, g: f64, x: &[f64]) -> f64 {
        let cov: f64 = x.iter().map(|v| self.beta_x * v).sum();
        self.tau * self.beta_w * self.f(w) + (1.0 - self.tau) * self.beta_g * self.f(g) + cov
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurveGapConfig {
    pub mc_draws: usize,
    /// Neighbours used for the conditional average; `ceil(sqrt(mc_draws))`
    /// when unset.
    pub k: Option<usize>,
    /// Covariate rows averaged over by the naive curve.
    pub outer: usize,
    /// Below this many draws the result is flagged as unreliable.
    pub min_draws: usize,
    pub seed: u64,
}

impl Default for CurveGapConfig {
    fn default() -> Self {
        CurveGapConfig {
            mc_draws: 100_000,
            k: None,
            outer: 200,
            min_draws: 1000,
            seed: 1,
        }
    }
}

impl CurveGapConfig {
    pub fn neighbours(&self) -> usize {
        self.k
            .unwrap_or_else(|| (self.mc_draws as f64).sqrt().ceil() as usize)
            .clamp(1, self.mc_draws)
    }
}

/// True and naive exposure-response curves on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveGap {
    pub grid: Vec<f64>,
    pub phi: Vec<f64>,
    pub phi_naive: Vec<f64>,
    /// `phi - phi_naive`.
    pub gap: Vec<f64>,
    pub k: usize,
    /// Set when fewer than `min_draws` draws were used.
    pub insufficient: bool,
}

/// Monte-Carlo sample with the standardisation used for neighbour search.
struct McSample {
    draws: Vec<JointDraw>,
    scale_w: f64,
    scale_x: Vec<f64>,
    k: usize,
}

impl McSample {
    fn new(gen: &dyn JointGenerator, cfg: &CurveGapConfig) -> Result<Self> {
        if cfg.mc_draws < 2 {
            return Err(Error::Config("mc_draws must be at least 2".into()));
        }
        if cfg.mc_draws < cfg.min_draws {
            log::warn!("only {} Monte-Carlo draws (minimum {})", cfg.mc_draws, cfg.min_draws);
        }
        let mut rng = substream(cfg.seed, "curve", 0);
        let draws: Vec<JointDraw> = (0..cfg.mc_draws).map(|_| gen.sample(&mut rng)).collect();
        let sd = |xs: Vec<f64>| stats::variance(&xs).sqrt().max(f64::MIN_POSITIVE);
        let scale_w = sd(draws.iter().map(|d| d.w).collect());
        let scale_x = (0..gen.n_covariates())
            .map(|j| sd(draws.iter().map(|d| d.x[j]).collect()))
            .collect();
        Ok(McSample {
            draws,
            scale_w,
            scale_x,
            k: cfg.neighbours(),
        })
    }

    /// Indices of the `k` draws nearest to `(w, x)` in standardised units.
    fn neighbours(&self, w: f64, x: &[f64]) -> Vec<usize> {
        let mut dist: Vec<(f64, usize)> = self
            .draws
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let mut s = ((d.w - w) / self.scale_w).powi(2);
                for (j, xv) in x.iter().enumerate() {
                    s += ((d.x[j] - xv) / self.scale_x[j]).powi(2);
                }
                (s, i)
            })
            .collect();
        let k = self.k.min(dist.len());
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0));
        }
        dist[..k].iter().map(|&(_, i)| i).collect()
    }

    /// Covariate rows the naive averages integrate over (none without covariates).
    fn outer_rows(&self, outer: usize) -> Vec<Vec<f64>> {
        if self.scale_x.is_empty() {
            return vec![Vec::new()];
        }
        self.draws.iter().take(outer.max(1)).map(|d| d.x.clone()).collect()
    }

    /// `E_X E_{G | W = w, X} m(w', G, X)`, with `w'` the evaluation point and
    /// `w` the conditioning point.
    fn conditional_average(&self, gen: &dyn JointGenerator, w_cond: f64, w_eval: f64, rows: &[Vec<f64>]) -> f64 {
        let per_row: Vec<f64> = rows
            .iter()
            .map(|x| {
                let nb = self.neighbours(w_cond, x);
                nb.iter().map(|&i| gen.mean(w_eval, self.draws[i].g, x)).sum::<f64>() / nb.len() as f64
            })
            .collect();
        stats::mean(&per_row)
    }
}

/// `phi(w)` integrates `G` and `X` over their marginals; `phi_naive(w)` uses
/// the conditional law of `G` given `(W = w, X)`, approximated by the
/// `k` nearest draws in standardised `(W, X)`.
pub fn naive_curve_gap(gen: &dyn JointGenerator, grid: &[f64], cfg: &CurveGapConfig) -> Result<CurveGap> {
    let mc = McSample::new(gen, cfg)?;
    let n = mc.draws.len();
    let rows = mc.outer_rows(cfg.outer);
    let (phi, phi_naive): (Vec<f64>, Vec<f64>) = grid
        .par_iter()
        .map(|&w| {
            // pairing G_k with X_{k+1} samples the product of the marginals
            let phi = (0..n)
                .map(|k| gen.mean(w, mc.draws[k].g, &mc.draws[(k + 1) % n].x))
                .sum::<f64>()
                / n as f64;
            (phi, mc.conditional_average(gen, w, w, &rows))
        })
        .unzip();
    let gap = phi.iter().zip(&phi_naive).map(|(a, b)| a - b).collect();
    Ok(CurveGap {
        grid: grid.to_vec(),
        phi,
        phi_naive,
        gap,
        k: mc.k,
        insufficient: n < cfg.min_draws,
    })
}

/// `lambda_naive - lambda` for moving `(w, g)` to `(w + dw, g + dg)`:
/// `E_X[m(w, g) - E_{G|w} m(w, G) + E_{G|w+dw} m(w + dw, G) - m(w + dw, g + dg)]`.
pub fn lambda_naive_gap(
    gen: &dyn JointGenerator,
    w: f64,
    g: f64,
    dw: f64,
    dg: f64,
    cfg: &CurveGapConfig,
) -> Result<f64> {
    let mc = McSample::new(gen, cfg)?;
    let rows = mc.outer_rows(cfg.outer);
    let fixed: Vec<f64> = rows
        .iter()
        .map(|x| gen.mean(w, g, x) - gen.mean(w + dw, g + dg, x))
        .collect();
    let w1 = w + dw;
    Ok(stats::mean(&fixed) - mc.conditional_average(gen, w, w, &rows) + mc.conditional_average(gen, w1, w1, &rows))
}

// ---------------------------------------------------------------------------
// Plot tables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub rho: f64,
    pub w: f64,
    pub phi: f64,
    pub phi_naive: f64,
    pub gap: f64,
}

/// Naive and true curves for each correlation.
pub fn curve_table(base: &GaussianGenerator, rhos: &[f64], grid: &[f64], cfg: &CurveGapConfig) -> Result<Vec<CurveRow>> {
    let mut rows = Vec::new();
    for &rho in rhos {
        let gen = GaussianGenerator { rho, ..*base };
        let c = naive_curve_gap(&gen, grid, cfg)?;
        for i in 0..grid.len() {
            rows.push(CurveRow {
                rho,
                w: grid[i],
                phi: c.phi[i],
                phi_naive: c.phi_naive[i],
                gap: c.gap[i],
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisspecRow {
    pub distribution: String,
    pub c: f64,
    pub rho: f64,
    pub bias: f64,
}

/// Weight laws used for the scalar-misspecification table.
pub fn misspec_reference_laws() -> Vec<Law> {
    [(0.006, 0.006), (1.0, 1.0), (148.0, 1.0), (1.0, 148.0)]
        .into_iter()
        .map(|(a, b)| Law::Beta { a, b })
        .collect()
}

/// Scalar-misspecification bias over a correlation grid for each law
/// (`beta_g* = 1`).
pub fn misspec_table(laws: &[Law], c: f64, rhos: &[f64]) -> Result<Vec<MisspecRow>> {
    let mut rows = Vec::new();
    for law in laws {
        let m = Moments::from_law(law);
        for &rho in rhos {
            rows.push(MisspecRow {
                distribution: law.to_string(),
                c,
                rho,
                bias: scalar_misspec_bias(c, rho, &m, 1.0)?,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiRow {
    pub distribution: String,
    pub eta2: f64,
    pub xi_w: f64,
    pub xi_g: f64,
    pub bias: f64,
}

/// Weight laws used for the measurement-error table.
pub fn xi_reference_laws() -> Vec<Law> {
    vec![
        Law::Uniform { lo: 0.25, hi: 0.75 },
        Law::Uniform { lo: 0.0, hi: 1.0 },
        Law::Beta { a: 30.0, b: 10.0 },
        Law::Beta { a: 2.0, b: 2.0 },
    ]
}

/// Attenuation factors and bias over a grid of `E(eta^2)` with mean-zero
/// noise (`beta_w* = beta_g* = 1`).
pub fn xi_table(laws: &[Law], eta2: &[f64]) -> Vec<XiRow> {
    let mut rows = Vec::new();
    for law in laws {
        let star = Moments::from_law(law);
        for &e2 in eta2 {
            let r = measurement_error_xi(&star, &Moments { mean: 0.0, second: e2 }, 1.0, 1.0);
            rows.push(XiRow {
                distribution: law.to_string(),
                eta2: e2,
                xi_w: r.xi_w,
                xi_g: r.xi_g,
                bias: r.bias,
            });
        }
    }
    rows
}

/// Evenly spaced grid with `n` points from `lo` to `hi`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn write_rows_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}
