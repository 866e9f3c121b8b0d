//! Gibbs sampler for the mobility-weighted additive outcome model
//!
//! ```text
//! E(Y | W, G, X) = (tau * phi(W) + (1 - tau) * phi(G)) beta
//!                + (1 - tau) * phi(G) zeta + X theta
//! ```
//!
//! where `zeta = gamma - beta` is the gap between neighbourhood and home
//! coefficients. The `tau` weights are folded into the design once
//! (`Phi_w = tau * phi(W)`, `Phi_g = (1 - tau) * phi(G)`), so every update is a
//! standard conditionally conjugate draw:
//!
//! ```text
//! beta    | . ~ N(A_b^-1 Phi_c'(y - Phi_g zeta - X theta), sigma2 A_b^-1),  A_b = Phi_c'Phi_c + I / sigma_beta2
//! sigma_beta2 ~ IG(1 + qM/2, 1 + |beta|^2 / (2 sigma2))
//! zeta    | . ~ N(A_z^-1 Phi_g'(y - Phi_c beta - X theta), sigma2 A_z^-1),  A_z = Phi_g'Phi_g + Lambda*^-1
//! lambda_j^2  ~ IG((1 + M)/2, 1/r_j + |zeta_j|^2 / (2 sigma2 nu2))
//! r_j         ~ IG(1, 1 + 1/lambda_j^2)
//! nu2         ~ IG((1 + qM)/2, 1/s + zeta' Lambda^-1 zeta / (2 sigma2))
//! s           ~ IG(1, 1 + 1/nu2)
//! theta   | . ~ N(..., sigma2 (X'X + I / sigma_theta2)^-1)
//! sigma2      ~ IG(1 + (n + qM + qM + p)/2, 1 + {RSS + |beta|^2/sigma_beta2 + zeta'Lambda*^-1 zeta + |theta|^2/sigma_theta2}/2)
//! ```
//!
//! with `Phi_c = Phi_w + Phi_g` and `Lambda* = nu2 * diag(lambda_j^2 repeated M times)`.
//! The half-Cauchy scales use the inverse-gamma auxiliary representation.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::mobility::ExposurePanel;
use crate::rng::{substream, SimRng};

/// Diagonal jitter added once before giving up on a Cholesky factorisation.
pub const CHOLESKY_JITTER: f64 = 1e-10;

/// Which prior sits on the coefficient gap `zeta`, or whether the
/// neighbourhood exposure is dropped altogether.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Horseshoe prior on `zeta`.
    Shrinkage,
    /// `zeta | sigma_zeta2 ~ N(0, sigma2 sigma_zeta2 I)`, `sigma_zeta2 ~ IG(1, 1)`.
    NonShrinkage,
    /// Regression on `phi(W)` only; mobility is ignored.
    Naive,
}

impl ModelKind {
    pub fn has_zeta(self) -> bool {
        !matches!(self, ModelKind::Naive)
    }
}

/// How the panel is turned into a design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignOptions {
    /// Prepend a constant column to the covariate block.
    pub intercept: bool,
    /// Multiplier applied to every `tau` before building the design (1 means
    /// the observed weights are used as-is).
    pub tau_scale: f64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions {
            intercept: true,
            tau_scale: 1.0,
        }
    }
}

impl DesignOptions {
    pub fn effective_tau(&self, tau: f64) -> f64 {
        (tau * self.tau_scale).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Total sweeps per chain, burn-in included.
    pub n_draws: usize,
    pub n_burnin: usize,
    pub n_chains: usize,
    pub thin: usize,
    pub seed: u64,
    /// Prior variance multiplier for the covariate coefficients.
    pub sigma_theta2: f64,
    pub design: DesignOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            n_draws: 2000,
            n_burnin: 500,
            n_chains: 1,
            thin: 1,
            seed: 1,
            sigma_theta2: 1e6,
            design: DesignOptions::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_draws == 0 || self.n_draws <= self.n_burnin {
            return Err(Error::Config(format!(
                "n_draws ({}) must exceed n_burnin ({})",
                self.n_draws, self.n_burnin
            )));
        }
        if self.thin == 0 || self.n_chains == 0 {
            return Err(Error::Config("thin and n_chains must be at least 1".into()));
        }
        if !(self.sigma_theta2 > 0.0) {
            return Err(Error::Config("sigma_theta2 must be positive".into()));
        }
        if !(self.design.tau_scale > 0.0) {
            return Err(Error::Config("tau_scale must be positive".into()));
        }
        Ok(())
    }

    /// Retained draws per chain.
    pub fn kept_per_chain(&self) -> usize {
        (self.n_draws - self.n_burnin) / self.thin
    }
}

/// One state of the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub beta: Vec<f64>,
    pub zeta: Vec<f64>,
    pub theta: Vec<f64>,
    pub sigma2: f64,
    pub sigma_beta2: f64,
    /// Variance multiplier of `zeta` in the non-shrinkage model.
    pub sigma_zeta2: f64,
    pub lambda2: Vec<f64>,
    pub nu2: f64,
    pub r: Vec<f64>,
    pub s: f64,
}

impl ModelState {
    /// Coefficients at zero, every variance and auxiliary at one.
    pub fn initial(q: usize, degree: usize, n_theta: usize, kind: ModelKind) -> Self {
        let qm = q * degree;
        ModelState {
            beta: vec![0.0; qm],
            zeta: vec![0.0; if kind.has_zeta() { qm } else { 0 }],
            theta: vec![0.0; n_theta],
            sigma2: 1.0,
            sigma_beta2: 1.0,
            sigma_zeta2: 1.0,
            lambda2: vec![1.0; q],
            nu2: 1.0,
            r: vec![1.0; q],
            s: 1.0,
        }
    }

    /// Neighbourhood coefficients `gamma = beta + zeta`.
    pub fn gamma(&self) -> Vec<f64> {
        if self.zeta.is_empty() {
            return self.beta.clone();
        }
        self.beta.iter().zip(&self.zeta).map(|(b, z)| b + z).collect()
    }

    fn check(&self, sweep: usize) -> Result<()> {
        let variances = [self.sigma2, self.sigma_beta2, self.sigma_zeta2, self.nu2, self.s];
        let ok = variances
            .iter()
            .chain(&self.lambda2)
            .chain(&self.r)
            .all(|v| v.is_finite() && *v > 0.0)
            && self
                .beta
                .iter()
                .chain(&self.zeta)
                .chain(&self.theta)
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::NumericalFailure {
                sweep,
                what: "non-finite or non-positive parameter after sweep".into(),
            })
        }
    }
}

/// Regression design built from a panel and a frozen basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    pub kind: ModelKind,
    pub degree: usize,
    /// `tau_i phi(w_i)`; for the naive model the unweighted `phi(w_i)`.
    pub home: DMatrix<f64>,
    /// `(1 - tau_i) phi(g_i)`; empty (zero columns) for the naive model.
    pub neighborhood: DMatrix<f64>,
    /// Design of `beta`: `home + neighborhood`.
    pub combined: DMatrix<f64>,
    /// Covariate block, intercept first when enabled.
    pub covariates: DMatrix<f64>,
    pub options: DesignOptions,
}

impl DesignMatrices {
    pub fn n(&self) -> usize {
        self.combined.nrows()
    }

    pub fn q(&self) -> usize {
        self.combined.ncols() / self.degree
    }

    /// Linear predictor for a state.
    pub fn fitted(&self, state: &ModelState) -> DVector<f64> {
        let mut f = &self.combined * DVector::from_column_slice(&state.beta);
        if self.kind.has_zeta() {
            f += &self.neighborhood * DVector::from_column_slice(&state.zeta);
        }
        if !state.theta.is_empty() {
            f += &self.covariates * DVector::from_column_slice(&state.theta);
        }
        f
    }
}

fn covariate_block(panel: &ExposurePanel, opts: &DesignOptions) -> DMatrix<f64> {
    let n = panel.n();
    let p = panel.p();
    let offset = usize::from(opts.intercept);
    let mut x = DMatrix::zeros(n, p + offset);
    if opts.intercept {
        x.column_mut(0).fill(1.0);
    }
    if let Some(cov) = &panel.x {
        x.columns_mut(offset, p).copy_from(cov);
    }
    x
}

/// Mobility-aware design: rows `tau_i phi(w_i)` and `(1 - tau_i) phi(g_i)`.
pub fn build_design(
    panel: &ExposurePanel,
    spec: &BasisSpec,
    opts: &DesignOptions,
) -> Result<DesignMatrices> {
    panel.y()?;
    build_design_kind(panel, spec, opts, ModelKind::Shrinkage)
}

/// Design of the mobility-agnostic comparator: `phi(w_i)` and covariates only.
pub fn build_naive_design(
    panel: &ExposurePanel,
    spec: &BasisSpec,
    opts: &DesignOptions,
) -> Result<DesignMatrices> {
    panel.y()?;
    build_design_kind(panel, spec, opts, ModelKind::Naive)
}

fn build_design_kind(
    panel: &ExposurePanel,
    spec: &BasisSpec,
    opts: &DesignOptions,
    kind: ModelKind,
) -> Result<DesignMatrices> {
    panel.validate()?;
    let phi_w = spec.eval(&panel.w)?;
    let n = panel.n();
    let covariates = covariate_block(panel, opts);
    if kind == ModelKind::Naive {
        return Ok(DesignMatrices {
            kind,
            degree: spec.degree,
            combined: phi_w.clone(),
            home: phi_w,
            neighborhood: DMatrix::zeros(n, 0),
            covariates,
            options: *opts,
        });
    }
    let phi_g = spec.eval(&panel.g)?;
    let mut home = phi_w;
    let mut neighborhood = phi_g;
    for i in 0..n {
        let t = opts.effective_tau(panel.tau[i]);
        home.row_mut(i).scale_mut(t);
        neighborhood.row_mut(i).scale_mut(1.0 - t);
    }
    let combined = &home + &neighborhood;
    Ok(DesignMatrices {
        kind,
        degree: spec.degree,
        home,
        neighborhood,
        combined,
        covariates,
        options: *opts,
    })
}

/// Parameters held at their current value instead of being resampled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FixedParams {
    pub sigma2: bool,
    pub sigma_beta2: bool,
    /// Holds `zeta` and its variance hierarchy fixed.
    pub zeta: bool,
    pub theta: bool,
}

/// Draws from the inverse-gamma distribution with the given shape and scale.
pub fn sample_inv_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0)
        .expect("inverse-gamma shape must be positive")
        .sample(rng);
    scale / g
}

/// Draws `N(A^-1 r, sigma2 A^-1)` through the Cholesky factor of `A`.
fn sample_gaussian_block<R: Rng + ?Sized>(
    rng: &mut R,
    precision: DMatrix<f64>,
    rhs: &DVector<f64>,
    sigma2: f64,
    sweep: usize,
    what: &str,
) -> Result<DVector<f64>> {
    let k = rhs.len();
    if k == 0 {
        return Ok(DVector::zeros(0));
    }
    let chol = match precision.clone().cholesky() {
        Some(c) => c,
        None => {
            let jittered = precision + DMatrix::identity(k, k) * CHOLESKY_JITTER;
            jittered.cholesky().ok_or_else(|| Error::NumericalFailure {
                sweep,
                what: format!("{what} posterior precision is not positive definite"),
            })?
        }
    };
    let mean = chol.solve(rhs);
    let z = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
    // L' x = z gives Cov(x) = (L L')^-1
    let noise = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::NumericalFailure {
            sweep,
            what: format!("{what} triangular solve failed"),
        })?;
    Ok(mean + noise * sigma2.sqrt())
}

/// Gibbs sampler over a fixed design and outcome, with the cross-products
/// precomputed.
pub struct GibbsSampler<'a> {
    design: &'a DesignMatrices,
    y: DVector<f64>,
    sigma_theta2: f64,
    fixed: FixedParams,
    gram_cc: DMatrix<f64>,
    gram_cg: DMatrix<f64>,
    gram_cx: DMatrix<f64>,
    gram_gg: DMatrix<f64>,
    gram_gx: DMatrix<f64>,
    gram_xx: DMatrix<f64>,
    cy: DVector<f64>,
    gy: DVector<f64>,
    xy: DVector<f64>,
    sweep: usize,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(design: &'a DesignMatrices, y: &[f64], sigma_theta2: f64) -> Result<Self> {
        if y.len() != design.n() {
            return Err(Error::DimensionMismatch(format!(
                "outcome has {} entries, design has {} rows",
                y.len(),
                design.n()
            )));
        }
        let (c, g, x) = (&design.combined, &design.neighborhood, &design.covariates);
        let mut s = GibbsSampler {
            design,
            y: DVector::zeros(0),
            sigma_theta2,
            fixed: FixedParams::default(),
            gram_cc: c.tr_mul(c),
            gram_cg: c.tr_mul(g),
            gram_cx: c.tr_mul(x),
            gram_gg: g.tr_mul(g),
            gram_gx: g.tr_mul(x),
            gram_xx: x.tr_mul(x),
            cy: DVector::zeros(0),
            gy: DVector::zeros(0),
            xy: DVector::zeros(0),
            sweep: 0,
        };
        s.set_outcome(y);
        Ok(s)
    }

    /// Replaces the outcome vector, keeping the design cross-products.
    pub fn set_outcome(&mut self, y: &[f64]) {
        assert_eq!(y.len(), self.design.n());
        self.y = DVector::from_column_slice(y);
        self.cy = self.design.combined.tr_mul(&self.y);
        self.gy = self.design.neighborhood.tr_mul(&self.y);
        self.xy = self.design.covariates.tr_mul(&self.y);
    }

    pub fn with_fixed(mut self, fixed: FixedParams) -> Self {
        self.fixed = fixed;
        self
    }

    pub fn sweeps(&self) -> usize {
        self.sweep
    }

    /// One full sweep, updating `state` in place.
    pub fn step<R: Rng + ?Sized>(&mut self, state: &mut ModelState, rng: &mut R) -> Result<()> {
        let d = self.design;
        let kind = d.kind;
        let degree = d.degree;
        let q = d.q();
        let qm = q * degree;
        let sweep = self.sweep;

        let beta_v = |s: &ModelState| DVector::from_column_slice(&s.beta);
        let zeta_v = |s: &ModelState| DVector::from_column_slice(&s.zeta);
        let theta_v = |s: &ModelState| DVector::from_column_slice(&s.theta);

        // beta
        {
            let mut rhs = self.cy.clone();
            if kind.has_zeta() {
                rhs -= &self.gram_cg * zeta_v(state);
            }
            if !state.theta.is_empty() {
                rhs -= &self.gram_cx * theta_v(state);
            }
            let mut prec = self.gram_cc.clone();
            for k in 0..qm {
                prec[(k, k)] += 1.0 / state.sigma_beta2;
            }
            let b = sample_gaussian_block(rng, prec, &rhs, state.sigma2, sweep, "beta")?;
            state.beta = b.as_slice().to_vec();
        }

        if !self.fixed.sigma_beta2 {
            let ss: f64 = state.beta.iter().map(|b| b * b).sum();
            state.sigma_beta2 =
                sample_inv_gamma(rng, 1.0 + qm as f64 / 2.0, 1.0 + ss / (2.0 * state.sigma2));
        }

        if kind.has_zeta() && !self.fixed.zeta {
            // prior precision multipliers of zeta (in units of 1/sigma2)
            let prior_prec: Vec<f64> = match kind {
                ModelKind::Shrinkage => (0..qm)
                    .map(|k| 1.0 / (state.lambda2[k / degree] * state.nu2))
                    .collect(),
                _ => vec![1.0 / state.sigma_zeta2; qm],
            };
            let mut rhs = self.gy.clone();
            rhs -= self.gram_cg.tr_mul(&beta_v(state));
            if !state.theta.is_empty() {
                rhs -= &self.gram_gx * theta_v(state);
            }
            let mut prec = self.gram_gg.clone();
            for k in 0..qm {
                prec[(k, k)] += prior_prec[k];
            }
            let z = sample_gaussian_block(rng, prec, &rhs, state.sigma2, sweep, "zeta")?;
            state.zeta = z.as_slice().to_vec();

            match kind {
                ModelKind::Shrinkage => {
                    for j in 0..q {
                        let ss: f64 = state.zeta[j * degree..(j + 1) * degree]
                            .iter()
                            .map(|z| z * z)
                            .sum();
                        state.lambda2[j] = sample_inv_gamma(
                            rng,
                            (1.0 + degree as f64) / 2.0,
                            1.0 / state.r[j] + ss / (2.0 * state.sigma2 * state.nu2),
                        );
                        state.r[j] = sample_inv_gamma(rng, 1.0, 1.0 + 1.0 / state.lambda2[j]);
                    }
                    let quad: f64 = (0..qm)
                        .map(|k| state.zeta[k].powi(2) / state.lambda2[k / degree])
                        .sum();
                    state.nu2 = sample_inv_gamma(
                        rng,
                        (1.0 + qm as f64) / 2.0,
                        1.0 / state.s + quad / (2.0 * state.sigma2),
                    );
                    state.s = sample_inv_gamma(rng, 1.0, 1.0 + 1.0 / state.nu2);
                }
                ModelKind::NonShrinkage => {
                    let ss: f64 = state.zeta.iter().map(|z| z * z).sum();
                    state.sigma_zeta2 = sample_inv_gamma(
                        rng,
                        1.0 + qm as f64 / 2.0,
                        1.0 + ss / (2.0 * state.sigma2),
                    );
                }
                ModelKind::Naive => unreachable!(),
            }
        }

        let n_theta = d.covariates.ncols();
        if n_theta > 0 && !self.fixed.theta {
            let mut rhs = self.xy.clone();
            rhs -= self.gram_cx.tr_mul(&beta_v(state));
            if kind.has_zeta() {
                rhs -= self.gram_gx.tr_mul(&zeta_v(state));
            }
            let mut prec = self.gram_xx.clone();
            for k in 0..n_theta {
                prec[(k, k)] += 1.0 / self.sigma_theta2;
            }
            let t = sample_gaussian_block(rng, prec, &rhs, state.sigma2, sweep, "theta")?;
            state.theta = t.as_slice().to_vec();
        }

        if !self.fixed.sigma2 {
            let resid = &self.y - d.fitted(state);
            let rss = resid.norm_squared();
            let mut quad = state.beta.iter().map(|b| b * b).sum::<f64>() / state.sigma_beta2;
            let mut dims = d.n() + qm + n_theta;
            if kind.has_zeta() {
                dims += qm;
                quad += match kind {
                    ModelKind::Shrinkage => (0..qm)
                        .map(|k| {
                            state.zeta[k].powi(2) / (state.lambda2[k / degree] * state.nu2)
                        })
                        .sum::<f64>(),
                    _ => state.zeta.iter().map(|z| z * z).sum::<f64>() / state.sigma_zeta2,
                };
            }
            quad += state.theta.iter().map(|t| t * t).sum::<f64>() / self.sigma_theta2;
            state.sigma2 = sample_inv_gamma(rng, 1.0 + dims as f64 / 2.0, 1.0 + (rss + quad) / 2.0);
        }

        state.check(sweep)?;
        self.sweep += 1;
        Ok(())
    }
}

/// One sweep from `state`; convenience wrapper that rebuilds the sampler.
pub fn gibbs_step<R: Rng + ?Sized>(
    state: &ModelState,
    design: &DesignMatrices,
    y: &[f64],
    sigma_theta2: f64,
    rng: &mut R,
) -> Result<ModelState> {
    let mut sampler = GibbsSampler::new(design, y, sigma_theta2)?;
    let mut next = state.clone();
    sampler.step(&mut next, rng)?;
    Ok(next)
}

/// Retained draws of all chains plus what is needed to evaluate the fitted
/// conditional mean at new exposures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub kind: ModelKind,
    pub basis: BasisSpec,
    pub config: FitConfig,
    /// Covariates in the panel (intercept excluded).
    pub n_covariates: usize,
    /// Chain index of each draw.
    pub chain: Vec<usize>,
    pub draws: Vec<ModelState>,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn design_options(&self) -> &DesignOptions {
        &self.config.design
    }

    /// Posterior mean of a scalar function of the state.
    pub fn mean_of(&self, f: impl Fn(&ModelState) -> f64) -> f64 {
        self.draws.iter().map(f).sum::<f64>() / self.len() as f64
    }
}

fn run_chain(
    design: &DesignMatrices,
    y: &[f64],
    cfg: &FitConfig,
    chain: usize,
) -> Result<Vec<ModelState>> {
    let mut rng: SimRng = substream(cfg.seed, "chain", chain as u64);
    let mut sampler = GibbsSampler::new(design, y, cfg.sigma_theta2)?;
    let mut state = ModelState::initial(design.q(), design.degree, design.covariates.ncols(), design.kind);
    let mut kept = Vec::with_capacity(cfg.kept_per_chain());
    for t in 0..cfg.n_draws {
        sampler.step(&mut state, &mut rng)?;
        if t >= cfg.n_burnin && (t - cfg.n_burnin + 1) % cfg.thin == 0 {
            kept.push(state.clone());
        }
    }
    Ok(kept)
}

fn fit_design(
    design: &DesignMatrices,
    panel: &ExposurePanel,
    spec: &BasisSpec,
    cfg: &FitConfig,
) -> Result<PosteriorDraws> {
    cfg.validate()?;
    let y = panel.y()?;
    let chains: Vec<Vec<ModelState>> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| run_chain(design, y, cfg, c))
        .collect::<Result<_>>()?;
    let mut chain = Vec::new();
    let mut draws = Vec::new();
    for (c, states) in chains.into_iter().enumerate() {
        chain.extend(std::iter::repeat_n(c, states.len()));
        draws.extend(states);
    }
    Ok(PosteriorDraws {
        kind: design.kind,
        basis: spec.clone(),
        config: cfg.clone(),
        n_covariates: panel.p(),
        chain,
        draws,
    })
}

/// Fits the mobility-aware model, with the horseshoe on `zeta` when
/// `shrinkage` is set and the Gaussian/inverse-gamma prior otherwise.
pub fn fit(
    panel: &ExposurePanel,
    spec: &BasisSpec,
    cfg: &FitConfig,
    shrinkage: bool,
) -> Result<PosteriorDraws> {
    let kind = if shrinkage {
        ModelKind::Shrinkage
    } else {
        ModelKind::NonShrinkage
    };
    let mut design = build_design(panel, spec, &cfg.design)?;
    design.kind = kind;
    fit_design(&design, panel, spec, cfg)
}

/// Fits the regression on home exposure only.
pub fn fit_naive(panel: &ExposurePanel, spec: &BasisSpec, cfg: &FitConfig) -> Result<PosteriorDraws> {
    let design = build_naive_design(panel, spec, &cfg.design)?;
    fit_design(&design, panel, spec, cfg)
}

pub fn fit_kind(
    panel: &ExposurePanel,
    spec: &BasisSpec,
    cfg: &FitConfig,
    kind: ModelKind,
) -> Result<PosteriorDraws> {
    match kind {
        ModelKind::Shrinkage => fit(panel, spec, cfg, true),
        ModelKind::NonShrinkage => fit(panel, spec, cfg, false),
        ModelKind::Naive => fit_naive(panel, spec, cfg),
    }
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

const MAGIC: &[u8; 8] = b"SPDRAWS1";

/// JSON header of the columnar draws file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DrawsHeader {
    schema_version: u32,
    kind: ModelKind,
    basis: BasisSpec,
    config: FitConfig,
    n_covariates: usize,
    n_draws: usize,
    q: usize,
    degree: usize,
    n_theta: usize,
    columns: Vec<String>,
}

fn column_names(q: usize, degree: usize, n_theta: usize, kind: ModelKind) -> Vec<String> {
    let mut names = vec!["chain".to_string()];
    let coef = |prefix: &str, names: &mut Vec<String>| {
        for j in 1..=q {
            for m in 1..=degree {
                names.push(format!("{prefix}_{j}_{m}"));
            }
        }
    };
    coef("beta", &mut names);
    if kind.has_zeta() {
        coef("zeta", &mut names);
    }
    names.extend((1..=n_theta).map(|k| format!("theta_{k}")));
    names.extend(["sigma2", "sigma_beta2", "sigma_zeta2", "nu2", "s"].map(String::from));
    names.extend((1..=q).map(|j| format!("lambda2_{j}")));
    names.extend((1..=q).map(|j| format!("r_{j}")));
    names
}

fn draw_row(chain: usize, s: &ModelState) -> Vec<f64> {
    let mut row = vec![chain as f64];
    row.extend(&s.beta);
    row.extend(&s.zeta);
    row.extend(&s.theta);
    row.extend([s.sigma2, s.sigma_beta2, s.sigma_zeta2, s.nu2, s.s]);
    row.extend(&s.lambda2);
    row.extend(&s.r);
    row
}

fn state_from_row(row: &[f64], qm: usize, q: usize, n_theta: usize, kind: ModelKind) -> (usize, ModelState) {
    let mut it = row.iter().copied();
    let mut take = |k: usize| -> Vec<f64> { it.by_ref().take(k).collect() };
    let chain = take(1)[0] as usize;
    let beta = take(qm);
    let zeta = take(if kind.has_zeta() { qm } else { 0 });
    let theta = take(n_theta);
    let v = take(5);
    let lambda2 = take(q);
    let r = take(q);
    (
        chain,
        ModelState {
            beta,
            zeta,
            theta,
            sigma2: v[0],
            sigma_beta2: v[1],
            sigma_zeta2: v[2],
            nu2: v[3],
            s: v[4],
            lambda2,
            r,
        },
    )
}

impl PosteriorDraws {
    fn dims(&self) -> (usize, usize, usize) {
        let q = self.basis.q();
        let degree = self.basis.degree;
        let n_theta = self.n_covariates + usize::from(self.config.design.intercept);
        (q, degree, n_theta)
    }

    /// Columnar binary file: magic, little-endian header length, JSON header,
    /// then each column as `n_draws` little-endian `f64`s.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        let (q, degree, n_theta) = self.dims();
        let columns = column_names(q, degree, n_theta, self.kind);
        let header = DrawsHeader {
            schema_version: 1,
            kind: self.kind,
            basis: self.basis.clone(),
            config: self.config.clone(),
            n_covariates: self.n_covariates,
            n_draws: self.len(),
            q,
            degree,
            n_theta,
            columns: columns.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        out.write_all(MAGIC)?;
        out.write_all(&(json.len() as u64).to_le_bytes())?;
        out.write_all(&json)?;
        let rows: Vec<Vec<f64>> = self
            .chain
            .iter()
            .zip(&self.draws)
            .map(|(&c, s)| draw_row(c, s))
            .collect();
        for k in 0..columns.len() {
            for row in &rows {
                out.write_all(&row[k].to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Parse("not a posterior draws file".into()));
        }
        let mut len = [0u8; 8];
        input.read_exact(&mut len)?;
        let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
        input.read_exact(&mut json)?;
        let h: DrawsHeader = serde_json::from_slice(&json)?;
        let ncol = h.columns.len();
        let mut rows = vec![vec![0.0; ncol]; h.n_draws];
        let mut buf = [0u8; 8];
        for k in 0..ncol {
            for row in rows.iter_mut() {
                input.read_exact(&mut buf)?;
                row[k] = f64::from_le_bytes(buf);
            }
        }
        let qm = h.q * h.degree;
        let (chain, draws) = rows
            .iter()
            .map(|r| state_from_row(r, qm, h.q, h.n_theta, h.kind))
            .unzip();
        Ok(PosteriorDraws {
            kind: h.kind,
            basis: h.basis,
            config: h.config,
            n_covariates: h.n_covariates,
            chain,
            draws,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_binary(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_binary(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// One CSV row per draw.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let (q, degree, n_theta) = self.dims();
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(column_names(q, degree, n_theta, self.kind))?;
        for (&c, s) in self.chain.iter().zip(&self.draws) {
            let row = draw_row(c, s);
            let mut rec: Vec<String> = vec![c.to_string()];
            rec.extend(row[1..].iter().map(|v| format!("{v:?}")));
            wtr.write_record(rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}
