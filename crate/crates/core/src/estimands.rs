//! Posterior summaries of causal estimands computed from fitted draws.
//!
//! For draw `b` the conditional mean of unit `i` at exposures `(w, g)` is
//! `tau_i phi(w) beta + (1 - tau_i) phi(g) (beta + zeta) + x_i theta`
//! (`phi(w) beta + x_i theta` for the naive model). Population averages over
//! units use Dirichlet(1, ..., 1) weights, one weight vector per draw, so the
//! uncertainty in the covariate and exposure distributions is propagated.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobility::{ExposurePanel, MobilityWeights};
use crate::model::{ModelKind, ModelState, PosteriorDraws};
use crate::rng::substream;
use crate::stats;

/// Lower and upper probabilities of the equal-tailed credible interval.
pub const INTERVAL: (f64, f64) = (0.025, 0.975);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimandResult {
    pub label: String,
    pub draws: Vec<f64>,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl EstimandResult {
    pub fn from_draws(label: impl Into<String>, draws: Vec<f64>) -> Self {
        let mut sorted = draws.clone();
        sorted.sort_by(f64::total_cmp);
        EstimandResult {
            label: label.into(),
            mean: stats::mean(&draws),
            lower: stats::quantile_sorted(&sorted, INTERVAL.0),
            upper: stats::quantile_sorted(&sorted, INTERVAL.1),
            draws,
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn summary(&self, draws_file: Option<String>) -> EstimandSummary {
        EstimandSummary {
            label: self.label.clone(),
            mean: self.mean,
            lower: self.lower,
            upper: self.upper,
            n_draws: self.draws.len(),
            draws_file,
        }
    }
}

/// JSON-facing view of an [`EstimandResult`] without the draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimandSummary {
    pub label: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub n_draws: usize,
    pub draws_file: Option<String>,
}

/// Total effect and its direct and spillover parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub total: EstimandResult,
    pub dir: EstimandResult,
    pub sp: EstimandResult,
}

/// A requested point fell outside the observed per-coordinate range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationWarning {
    /// `"w"` or `"g"`.
    pub exposure: String,
    pub coordinate: usize,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Exposure shift applied to every region.
#[derive(Debug, Clone, PartialEq)]
pub enum Intervention {
    /// The same shift everywhere. Travelling regions see the same shift in
    /// their neighbourhood exposure, isolated regions none.
    Uniform { delta: Vec<f64> },
    /// Region-specific home shifts with the induced neighbourhood shift
    /// `alpha * delta_w`.
    PerRegion {
        delta_w: DMatrix<f64>,
        delta_g: DMatrix<f64>,
    },
}

impl Intervention {
    pub fn uniform(delta: Vec<f64>) -> Self {
        Intervention::Uniform { delta }
    }

    pub fn per_region(delta_w: DMatrix<f64>, weights: &MobilityWeights) -> Result<Self> {
        if delta_w.nrows() != weights.n() {
            return Err(Error::DimensionMismatch(format!(
                "shift has {} rows but there are {} regions",
                delta_w.nrows(),
                weights.n()
            )));
        }
        let delta_g = weights.alpha.apply(&delta_w);
        Ok(Intervention::PerRegion { delta_w, delta_g })
    }

    /// Home and neighbourhood shift matrices for `panel`.
    pub fn shifts(&self, panel: &ExposurePanel) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let (n, q) = panel.w.shape();
        match self {
            Intervention::Uniform { delta } => {
                if delta.len() != q {
                    return Err(Error::DimensionMismatch(format!(
                        "shift has {} entries, panel has {q} exposures",
                        delta.len()
                    )));
                }
                let dw = DMatrix::from_fn(n, q, |_, j| delta[j]);
                let dg = DMatrix::from_fn(n, q, |i, j| if panel.isolated[i] { 0.0 } else { delta[j] });
                Ok((dw, dg))
            }
            Intervention::PerRegion { delta_w, delta_g } => {
                if delta_w.shape() != (n, q) || delta_g.shape() != (n, q) {
                    return Err(Error::DimensionMismatch(format!(
                        "shift is {:?}, panel exposures are {n}x{q}",
                        delta_w.shape()
                    )));
                }
                Ok((delta_w.clone(), delta_g.clone()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimandOptions {
    /// Dirichlet weights over units; uniform `1/n` weights when off.
    pub bootstrap: bool,
    pub seed: u64,
    /// Report the sample-average effect against observed outcomes (`true`) or
    /// against the fitted mean at observed exposures (`false`).
    pub observed_outcome: bool,
}

impl Default for EstimandOptions {
    fn default() -> Self {
        EstimandOptions {
            bootstrap: true,
            seed: 1,
            observed_outcome: true,
        }
    }
}

/// Weighted population averages of one draw's unit-level ingredients.
#[derive(Debug, Clone)]
struct DrawWeights {
    /// `sum_i g_i tau_i`
    tau: f64,
    /// `sum_i g_i x_i` (intercept first when present)
    x: DVector<f64>,
    /// `sum_i g_i tau_i phi(W_i)`
    home_basis: DVector<f64>,
    /// `sum_i g_i (1 - tau_i) phi(G_i)`
    away_basis: DVector<f64>,
}

/// Draw-by-draw evaluator for one posterior and one panel.
pub struct Estimator<'a> {
    post: &'a PosteriorDraws,
    panel: &'a ExposurePanel,
    opts: EstimandOptions,
    tau: Vec<f64>,
    covariates: DMatrix<f64>,
    phi_w: DMatrix<f64>,
    phi_g: DMatrix<f64>,
    /// Filled on first use; the sample-average effect does not need them.
    weights: Vec<DrawWeights>,
    pub warnings: Vec<ExtrapolationWarning>,
}

fn dot(a: &[f64], b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl<'a> Estimator<'a> {
    pub fn new(post: &'a PosteriorDraws, panel: &'a ExposurePanel, opts: EstimandOptions) -> Result<Self> {
        panel.validate()?;
        if panel.q() != post.basis.q() {
            return Err(Error::DimensionMismatch(format!(
                "posterior has {} exposures, panel has {}",
                post.basis.q(),
                panel.q()
            )));
        }
        if panel.p() != post.n_covariates {
            return Err(Error::DimensionMismatch(format!(
                "posterior has {} covariates, panel has {}",
                post.n_covariates,
                panel.p()
            )));
        }
        let n = panel.n();
        let design = post.design_options();
        let tau: Vec<f64> = if post.kind == ModelKind::Naive {
            vec![1.0; n]
        } else {
            panel.tau.iter().map(|&t| design.effective_tau(t)).collect()
        };
        let offset = usize::from(design.intercept);
        let mut covariates = DMatrix::zeros(n, panel.p() + offset);
        if design.intercept {
            covariates.column_mut(0).fill(1.0);
        }
        if let Some(x) = &panel.x {
            covariates.columns_mut(offset, panel.p()).copy_from(x);
        }
        let phi_w = post.basis.eval(&panel.w)?;
        let phi_g = post.basis.eval(&panel.g)?;
        Ok(Estimator {
            post,
            panel,
            opts,
            tau,
            covariates,
            phi_w,
            phi_g,
            weights: Vec::new(),
            warnings: Vec::new(),
        })
    }

    fn ensure_weights(&mut self) {
        if self.weights.len() != self.post.len() {
            let est = &*self;
            let weights = (0..est.post.len())
                .into_par_iter()
                .map(|b| est.draw_weights(b))
                .collect();
            self.weights = weights;
        }
    }

    fn unit_weights(&self, b: usize) -> Vec<f64> {
        let n = self.panel.n();
        if !self.opts.bootstrap {
            return vec![1.0 / n as f64; n];
        }
        let mut rng = substream(self.opts.seed, "bootstrap", b as u64);
        let e: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = e.iter().sum();
        e.into_iter().map(|v| v / total).collect()
    }

    fn draw_weights(&self, b: usize) -> DrawWeights {
        let gw = self.unit_weights(b);
        let home: Vec<f64> = gw.iter().zip(&self.tau).map(|(g, t)| g * t).collect();
        let away: Vec<f64> = gw.iter().zip(&self.tau).map(|(g, t)| g * (1.0 - t)).collect();
        DrawWeights {
            tau: home.iter().sum(),
            x: self.covariates.tr_mul(&DVector::from_vec(gw)),
            home_basis: self.phi_w.tr_mul(&DVector::from_vec(home)),
            away_basis: self.phi_g.tr_mul(&DVector::from_vec(away)),
        }
    }

    pub fn n_draws(&self) -> usize {
        self.post.len()
    }

    fn check_range(&mut self, exposure: &str, point: &[f64]) -> Result<()> {
        self.ensure_weights();
        if point.len() != self.panel.q() {
            return Err(Error::DimensionMismatch(format!(
                "{exposure} has {} entries, expected {}",
                point.len(),
                self.panel.q()
            )));
        }
        let data = if exposure == "w" { &self.panel.w } else { &self.panel.g };
        for (j, &v) in point.iter().enumerate() {
            let col = data.column(j);
            let (lo, hi) = (col.min(), col.max());
            if v < lo || v > hi {
                log::warn!("{exposure}[{j}] = {v} outside observed range [{lo}, {hi}]");
                self.warnings.push(ExtrapolationWarning {
                    exposure: exposure.to_string(),
                    coordinate: j,
                    value: v,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }

    fn home_value(&self, s: &ModelState, basis: &[f64]) -> f64 {
        dot_slices(basis, &s.beta)
    }

    fn away_value(&self, s: &ModelState, basis: &[f64]) -> f64 {
        if self.post.kind == ModelKind::Naive {
            return 0.0;
        }
        dot_slices(basis, &s.gamma())
    }

    /// `mu_b(w, g)` for every draw from pre-evaluated basis rows.
    fn mu_draws(&self, fw: &[f64], fg: &[f64]) -> Vec<f64> {
        self.post
            .draws
            .iter()
            .zip(&self.weights)
            .map(|(s, d)| {
                d.tau * self.home_value(s, fw) + (1.0 - d.tau) * self.away_value(s, fg) + dot(&s.theta, &d.x)
            })
            .collect()
    }

    /// Population-average mean outcome with home exposure `w` and
    /// neighbourhood exposure `g` imposed on every unit.
    pub fn mean_potential_outcome(&mut self, w: &[f64], g: &[f64]) -> Result<EstimandResult> {
        self.check_range("w", w)?;
        self.check_range("g", g)?;
        let fw = self.post.basis.eval_point(w)?;
        let fg = self.post.basis.eval_point(g)?;
        Ok(EstimandResult::from_draws("mu", self.mu_draws(&fw, &fg)))
    }

    /// Home-exposure response averaged over the observed neighbourhood
    /// exposures.
    pub fn marginal_phi(&mut self, w: &[f64]) -> Result<EstimandResult> {
        self.check_range("w", w)?;
        let fw = self.post.basis.eval_point(w)?;
        let draws = self
            .post
            .draws
            .iter()
            .zip(&self.weights)
            .map(|(s, d)| {
                d.tau * self.home_value(s, &fw)
                    + self.away_value(s, d.away_basis.as_slice())
                    + dot(&s.theta, &d.x)
            })
            .collect();
        Ok(EstimandResult::from_draws("phi", draws))
    }

    /// Neighbourhood-exposure response averaged over the observed home
    /// exposures.
    pub fn marginal_psi(&mut self, g: &[f64]) -> Result<EstimandResult> {
        self.check_range("g", g)?;
        let fg = self.post.basis.eval_point(g)?;
        let draws = self
            .post
            .draws
            .iter()
            .zip(&self.weights)
            .map(|(s, d)| {
                self.home_value(s, d.home_basis.as_slice())
                    + (1.0 - d.tau) * self.away_value(s, &fg)
                    + dot(&s.theta, &d.x)
            })
            .collect();
        Ok(EstimandResult::from_draws("psi", draws))
    }

    /// Effect of moving from `(w, g)` to `(w + dw, g + dg)`, split at
    /// `(w + dw, g)` into direct and spillover parts.
    pub fn lambda_effect(&mut self, w: &[f64], g: &[f64], dw: &[f64], dg: &[f64]) -> Result<Decomposition> {
        let q = self.panel.q();
        if dw.len() != q || dg.len() != q {
            return Err(Error::DimensionMismatch(format!("shifts must have {q} entries")));
        }
        let w1: Vec<f64> = w.iter().zip(dw).map(|(a, b)| a + b).collect();
        let g1: Vec<f64> = g.iter().zip(dg).map(|(a, b)| a + b).collect();
        for (label, p) in [("w", w), ("w", &w1[..])] {
            self.check_range(label, p)?;
        }
        for p in [g, &g1[..]] {
            self.check_range("g", p)?;
        }
        let basis = &self.post.basis;
        let (fw0, fw1) = (basis.eval_point(w)?, basis.eval_point(&w1)?);
        let (fg0, fg1) = (basis.eval_point(g)?, basis.eval_point(&g1)?);
        let m00 = self.mu_draws(&fw0, &fg0);
        let m10 = self.mu_draws(&fw1, &fg0);
        let m11 = self.mu_draws(&fw1, &fg1);
        let dir: Vec<f64> = m10.iter().zip(&m00).map(|(a, b)| a - b).collect();
        let sp: Vec<f64> = m11.iter().zip(&m10).map(|(a, b)| a - b).collect();
        let total = dir.iter().zip(&sp).map(|(a, b)| a + b).collect();
        Ok(Decomposition {
            total: EstimandResult::from_draws("lambda", total),
            dir: EstimandResult::from_draws("lambda_dir", dir),
            sp: EstimandResult::from_draws("lambda_sp", sp),
        })
    }

    /// Sample-average effect of an intervention on the observed units.
    pub fn omega_effect(&self, intervention: &Intervention) -> Result<OmegaResult> {
        let y = self.panel.y()?;
        let (dw, dg) = intervention.shifts(self.panel)?;
        let basis = &self.post.basis;
        let n = self.panel.n() as f64;
        // mean_i tau_i [phi(W_i + dW_i) - phi(W_i)] and its neighbourhood analogue
        let inc_w = basis.eval(&(&self.panel.w + &dw))? - &self.phi_w;
        let inc_g = basis.eval(&(&self.panel.g + &dg))? - &self.phi_g;
        let tau = DVector::from_column_slice(&self.tau);
        let away = tau.map(|t| 1.0 - t);
        let d_home = inc_w.tr_mul(&tau) / n;
        let d_away = inc_g.tr_mul(&away) / n;
        // column means of the fitted-value design
        let home_mean = self.phi_w.tr_mul(&tau) / n;
        let away_mean = self.phi_g.tr_mul(&away) / n;
        let x_mean = self.covariates.row_mean().transpose();
        let y_mean = stats::mean(y);

        let mut dir = Vec::with_capacity(self.n_draws());
        let mut sp = Vec::with_capacity(self.n_draws());
        let mut resid = Vec::with_capacity(self.n_draws());
        for s in &self.post.draws {
            dir.push(self.home_value(s, d_home.as_slice()));
            sp.push(self.away_value(s, d_away.as_slice()));
            let fitted = self.home_value(s, home_mean.as_slice())
                + self.away_value(s, away_mean.as_slice())
                + dot(&s.theta, &x_mean);
            resid.push(fitted - y_mean);
        }
        let total: Vec<f64> = dir
            .iter()
            .zip(&sp)
            .zip(&resid)
            .map(|((d, s), r)| {
                if self.opts.observed_outcome {
                    d + s + r
                } else {
                    d + s
                }
            })
            .collect();
        Ok(OmegaResult {
            effect: Decomposition {
                total: EstimandResult::from_draws("omega", total),
                dir: EstimandResult::from_draws("omega_dir", dir),
                sp: EstimandResult::from_draws("omega_sp", sp),
            },
            residual: EstimandResult::from_draws("mean_residual", resid),
            observed_outcome: self.opts.observed_outcome,
        })
    }
}

/// Sample-average effect with the in-sample mean residual
/// `(1/n) sum_i {E_b(Y | W_i, G_i, X_i) - Y_i}` per draw. When
/// `observed_outcome` is set, `total = dir + sp + residual` draw by draw,
/// otherwise `total = dir + sp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaResult {
    pub effect: Decomposition,
    pub residual: EstimandResult,
    pub observed_outcome: bool,
}

pub fn mean_potential_outcome(
    post: &PosteriorDraws,
    w: &[f64],
    g: &[f64],
    panel: &ExposurePanel,
    opts: EstimandOptions,
) -> Result<(EstimandResult, Vec<ExtrapolationWarning>)> {
    let mut est = Estimator::new(post, panel, opts)?;
    let r = est.mean_potential_outcome(w, g)?;
    Ok((r, est.warnings))
}

pub fn marginal_phi(
    post: &PosteriorDraws,
    w: &[f64],
    panel: &ExposurePanel,
    opts: EstimandOptions,
) -> Result<(EstimandResult, Vec<ExtrapolationWarning>)> {
    let mut est = Estimator::new(post, panel, opts)?;
    let r = est.marginal_phi(w)?;
    Ok((r, est.warnings))
}

pub fn marginal_psi(
    post: &PosteriorDraws,
    g: &[f64],
    panel: &ExposurePanel,
    opts: EstimandOptions,
) -> Result<(EstimandResult, Vec<ExtrapolationWarning>)> {
    let mut est = Estimator::new(post, panel, opts)?;
    let r = est.marginal_psi(g)?;
    Ok((r, est.warnings))
}

pub fn lambda_effect(
    post: &PosteriorDraws,
    w: &[f64],
    g: &[f64],
    dw: &[f64],
    dg: &[f64],
    panel: &ExposurePanel,
    opts: EstimandOptions,
) -> Result<(Decomposition, Vec<ExtrapolationWarning>)> {
    let mut est = Estimator::new(post, panel, opts)?;
    let r = est.lambda_effect(w, g, dw, dg)?;
    Ok((r, est.warnings))
}

pub fn omega_effect(
    post: &PosteriorDraws,
    intervention: &Intervention,
    panel: &ExposurePanel,
    opts: EstimandOptions,
) -> Result<OmegaResult> {
    Estimator::new(post, panel, opts)?.omega_effect(intervention)
}

/// One point of an exposure-response curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub grid: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Which marginal response to trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Phi,
    Psi,
}

impl Estimator<'_> {
    /// Traces `phi` or `psi` along coordinate `coord`, other coordinates held
    /// at `base`.
    pub fn curve(&mut self, kind: CurveKind, base: &[f64], coord: usize, grid: &[f64]) -> Result<Vec<CurvePoint>> {
        if coord >= base.len() {
            return Err(Error::DimensionMismatch(format!(
                "coordinate {coord} out of range for {} exposures",
                base.len()
            )));
        }
        grid.iter()
            .map(|&v| {
                let mut point = base.to_vec();
                point[coord] = v;
                let r = match kind {
                    CurveKind::Phi => self.marginal_phi(&point)?,
                    CurveKind::Psi => self.marginal_psi(&point)?,
                };
                Ok(CurvePoint {
                    grid: v,
                    mean: r.mean,
                    lower: r.lower,
                    upper: r.upper,
                })
            })
            .collect()
    }
}

pub fn write_curve_csv<W: Write>(points: &[CurvePoint], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for p in points {
        wtr.serialize(p)?;
    }
    wtr.flush()?;
    Ok(())
}
