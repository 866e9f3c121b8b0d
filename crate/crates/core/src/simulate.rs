//! Synthetic datasets with travel destinations drawn toward regions of similar
//! exposure, and the true data-generating mean needed to score estimators.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample_weighted;
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::{fit_stacked_basis, BasisScaling, BasisSpec};
use crate::error::{Error, Result};
use crate::mobility::{neighborhood_exposure, AlphaMatrix, ExposurePanel, MobilityWeights};
use crate::rng::{substream, SimRng};

/// Home-effect coefficients of the reference design, five exposures with three
/// basis terms each.
pub const REFERENCE_BETA: [f64; 15] = [
    0.5, 0.5, 0.0, 0.0, 0.3, 0.3, 0.0, 0.0, 0.7, 0.7, 0.0, 0.0, 0.0, 0.0, 0.0,
];

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub schema_version: u32,
    pub n: usize,
    pub q: usize,
    /// Standard deviation of the home/neighbourhood coefficient gap.
    pub sigma_zeta: f64,
    pub sigma_eps: f64,
    pub seed: u64,
    pub n_destinations: usize,
    pub similarity_rate: f64,
    pub tau_beta_params: (f64, f64),
    pub ar_corr: f64,
    pub degree: usize,
    pub scaling: BasisScaling,
    /// Overrides the reference coefficients; length `q * degree`.
    pub beta: Option<Vec<f64>>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            schema_version: SCHEMA_VERSION,
            n: 1000,
            q: 5,
            sigma_zeta: 0.0,
            sigma_eps: 1.0,
            seed: 1,
            n_destinations: 10,
            similarity_rate: 0.4,
            tau_beta_params: (30.0, 10.0),
            ar_corr: 0.7,
            degree: 3,
            scaling: BasisScaling::UnitVariance,
            beta: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n == 0 || self.q == 0 || self.degree == 0 {
            return bad("n, q and degree must be positive".into());
        }
        if self.n_destinations >= self.n {
            return bad(format!(
                "n_destinations ({}) must be below n ({})",
                self.n_destinations, self.n
            ));
        }
        let rates = [self.sigma_zeta, self.sigma_eps, self.similarity_rate];
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return bad("sigma_zeta, sigma_eps and similarity_rate must be non-negative".into());
        }
        let (a, b) = self.tau_beta_params;
        if !(a > 0.0 && b > 0.0) {
            return bad("tau Beta parameters must be positive".into());
        }
        if !(self.ar_corr.abs() < 1.0) {
            return bad("ar_corr must lie in (-1, 1)".into());
        }
        if let Some(beta) = &self.beta {
            if beta.len() != self.q * self.degree {
                return bad(format!(
                    "beta has {} entries, expected {}",
                    beta.len(),
                    self.q * self.degree
                ));
            }
        }
        Ok(())
    }

    pub fn beta(&self) -> Vec<f64> {
        self.beta
            .clone()
            .unwrap_or_else(|| default_beta(self.q, self.degree))
    }
}

/// The reference coefficient vector, zero-padded or truncated to `q * degree`.
pub fn default_beta(q: usize, degree: usize) -> Vec<f64> {
    (0..q * degree)
        .map(|k| REFERENCE_BETA.get(k).copied().unwrap_or(0.0))
        .collect()
}

/// Everything needed to recompute the noiseless outcome mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub beta: Vec<f64>,
    pub zeta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub basis: BasisSpec,
    pub tau: Vec<f64>,
    pub weights: MobilityWeights,
    pub w: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

/// Serializable part of [`SimTruth`], written next to the panel CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub schema_version: u32,
    pub seed: u64,
    pub config: SimConfig,
    pub beta: Vec<f64>,
    pub zeta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub basis: BasisSpec,
}

impl TruthSidecar {
    pub fn new(truth: &SimTruth, cfg: &SimConfig) -> Self {
        TruthSidecar {
            schema_version: SCHEMA_VERSION,
            seed: cfg.seed,
            config: cfg.clone(),
            beta: truth.beta.clone(),
            zeta: truth.zeta.clone(),
            gamma: truth.gamma.clone(),
            basis: truth.basis.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(f)?)
    }
}

/// Rows i.i.d. `N(0, S)` with `S_jk = ar_corr^|j-k|`.
pub fn draw_exposures<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> DMatrix<f64> {
    let q = cfg.q;
    let sigma = DMatrix::from_fn(q, q, |j, k| cfg.ar_corr.powi(j.abs_diff(k) as i32));
    let l = sigma
        .cholesky()
        .expect("AR(1) covariance is positive definite for |ar_corr| < 1")
        .unpack();
    let z = DMatrix::from_fn(cfg.n, q, |_, _| rng.sample::<f64, _>(StandardNormal));
    z * l.transpose()
}

/// Beta home-time fractions and `n_destinations` travel targets per region,
/// drawn without replacement with probability proportional to
/// `exp(-similarity_rate * |W_i - W_j|)`.
pub fn draw_mobility<R: Rng + ?Sized>(
    cfg: &SimConfig,
    w: &DMatrix<f64>,
    rng: &mut R,
) -> MobilityWeights {
    let n = w.nrows();
    let (a, b) = cfg.tau_beta_params;
    let tau_law = Beta::new(a, b).expect("validated Beta parameters");
    let tau: Vec<f64> = (0..n).map(|_| tau_law.sample(rng)).collect();
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            let wi = w.row(i);
            // index k over the n - 1 other regions
            let other = |k: usize| if k < i { k } else { k + 1 };
            let p = |j: usize| (-cfg.similarity_rate * (wi - w.row(j)).norm()).exp();
            let chosen = sample_weighted(rng, n - 1, |k| p(other(k)), cfg.n_destinations)
                .expect("similarity weights are positive and finite");
            let mut dest: Vec<(usize, f64)> = chosen.iter().map(|k| (other(k), p(other(k)))).collect();
            dest.sort_by_key(|&(j, _)| j);
            let total: f64 = dest.iter().map(|(_, v)| v).sum();
            dest.iter().map(|&(j, v)| (j, v / total)).collect()
        })
        .collect();
    MobilityWeights {
        tau,
        alpha: AlphaMatrix::from_rows(n, &rows),
        isolated: vec![false; n],
    }
}

/// Gap coefficients `N(0, sigma_zeta^2 I)`, exactly zero when `sigma_zeta = 0`.
pub fn draw_zeta<R: Rng + ?Sized>(cfg: &SimConfig, len: usize, rng: &mut R) -> Vec<f64> {
    if cfg.sigma_zeta == 0.0 {
        return vec![0.0; len];
    }
    (0..len)
        .map(|_| cfg.sigma_zeta * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

impl SimTruth {
    /// Noiseless mean `tau phi(w) beta + (1 - tau) phi(g) gamma` at one point.
    pub fn mean_at(&self, w: &[f64], g: &[f64], tau: f64) -> Result<f64> {
        let fw = self.basis.eval_point(w)?;
        let fg = self.basis.eval_point(g)?;
        let home: f64 = fw.iter().zip(&self.beta).map(|(a, b)| a * b).sum();
        let away: f64 = fg.iter().zip(&self.gamma).map(|(a, b)| a * b).sum();
        Ok(tau * home + (1.0 - tau) * away)
    }

    /// Noiseless mean for every region at exposures `w`, `g`.
    pub fn conditional_mean(&self, w: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DVector<f64>> {
        let fw = self.basis.eval(w)? * DVector::from_column_slice(&self.beta);
        let fg = self.basis.eval(g)? * DVector::from_column_slice(&self.gamma);
        Ok(DVector::from_fn(w.nrows(), |i, _| {
            self.tau[i] * fw[i] + (1.0 - self.tau[i]) * fg[i]
        }))
    }
}

/// `Y = mean + eps`, `eps ~ N(0, sigma_eps^2)`.
pub fn draw_outcome<R: Rng + ?Sized>(
    truth: &SimTruth,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mean = truth.conditional_mean(&truth.w, &truth.g)?;
    Ok(mean
        .iter()
        .map(|m| m + cfg.sigma_eps * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

/// Builds a full dataset. Each ingredient comes from its own sub-stream of
/// `cfg.seed`, so the output is bit-reproducible.
pub fn generate(cfg: &SimConfig) -> Result<(ExposurePanel, SimTruth)> {
    cfg.validate()?;
    let stream = |label: &str| -> SimRng { substream(cfg.seed, label, 0) };
    let w = draw_exposures(cfg, &mut stream("exposures"));
    let weights = draw_mobility(cfg, &w, &mut stream("mobility"));
    let g = neighborhood_exposure(&weights, &w)?;
    let basis = fit_stacked_basis(&w, &g, cfg.degree, cfg.scaling)?;
    let beta = cfg.beta();
    let zeta = draw_zeta(cfg, beta.len(), &mut stream("zeta"));
    let gamma = beta.iter().zip(&zeta).map(|(b, z)| b + z).collect();
    let truth = SimTruth {
        beta,
        zeta,
        gamma,
        basis,
        tau: weights.tau.clone(),
        weights,
        w,
        g,
    };
    let y = draw_outcome(&truth, cfg, &mut stream("noise"))?;
    let panel = ExposurePanel::from_mobility(&truth.weights, truth.w.clone(), None, Some(y))?;
    Ok((panel, truth))
}

/// True sample-average effect of shifting every region's home exposure by
/// `delta`, split into direct and spillover parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaTruth {
    pub total: f64,
    pub dir: f64,
    pub sp: f64,
}

/// Evaluates the noiseless mean before and after the shift. The induced
/// neighbourhood shift is `alpha * delta`, i.e. `delta` for travelling regions
/// and zero for isolated ones.
pub fn true_omega(truth: &SimTruth, delta: &[f64]) -> Result<OmegaTruth> {
    let (n, q) = truth.w.shape();
    if delta.len() != q {
        return Err(Error::DimensionMismatch(format!(
            "delta has {} entries, expected {q}",
            delta.len()
        )));
    }
    let shift = DMatrix::from_fn(n, q, |_, j| delta[j]);
    let w1 = &truth.w + &shift;
    let g1 = &truth.g + truth.weights.alpha.apply(&shift);
    let m00 = truth.conditional_mean(&truth.w, &truth.g)?;
    let m10 = truth.conditional_mean(&w1, &truth.g)?;
    let m11 = truth.conditional_mean(&w1, &g1)?;
    let dir = (&m10 - &m00).mean();
    let sp = (&m11 - &m10).mean();
    Ok(OmegaTruth {
        total: dir + sp,
        dir,
        sp,
    })
}
