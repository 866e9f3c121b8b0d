//! Repeated-simulation comparison of the shrinkage, non-shrinkage,
//! misspecified-weight and no-mobility estimators of the sample-average effect.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{fit_basis_scaled, fit_stacked_basis};
use crate::error::{Error, Result};
use crate::estimands::{omega_effect, EstimandOptions, EstimandResult, Intervention};
use crate::model::{fit_kind, FitConfig, ModelKind};
use crate::rng::substream_seed;
use crate::simulate::{generate, true_omega, OmegaTruth, SimConfig};
use crate::stats;

/// Relative MSE values above this are clipped in the display column.
pub const DISPLAY_CAP: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Shrinkage,
    NonShrinkage,
    Misspecified,
    NoMobility,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Shrinkage,
        EstimatorKind::NonShrinkage,
        EstimatorKind::Misspecified,
        EstimatorKind::NoMobility,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Shrinkage => "shrinkage",
            EstimatorKind::NonShrinkage => "non-shrinkage",
            EstimatorKind::Misspecified => "misspecified",
            EstimatorKind::NoMobility => "no-mobility",
        }
    }

    fn model(self) -> ModelKind {
        match self {
            EstimatorKind::Shrinkage | EstimatorKind::Misspecified => ModelKind::Shrinkage,
            EstimatorKind::NonShrinkage => ModelKind::NonShrinkage,
            EstimatorKind::NoMobility => ModelKind::Naive,
        }
    }

    pub fn uses_mobility(self) -> bool {
        self != EstimatorKind::NoMobility
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    NoDifference,
    SmallDifference,
    ModerateDifference,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 3] = [
        ScenarioName::NoDifference,
        ScenarioName::SmallDifference,
        ScenarioName::ModerateDifference,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioName::NoDifference => "no-difference",
            ScenarioName::SmallDifference => "small-difference",
            ScenarioName::ModerateDifference => "moderate-difference",
        }
    }

    pub fn sigma_zeta(self) -> f64 {
        match self {
            ScenarioName::NoDifference => 0.0,
            ScenarioName::SmallDifference => 0.15,
            ScenarioName::ModerateDifference => 0.3,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: ScenarioName,
    pub sigma_zeta: f64,
    pub n_reps: usize,
    pub estimators: Vec<EstimatorKind>,
    /// Factor applied to the weights by the misspecified estimator.
    pub misspec_factor: f64,
    /// Uniform shift of every exposure.
    pub delta: f64,
    /// Data-generating settings; `sigma_zeta` and `seed` are overridden.
    pub sim: SimConfig,
    pub fit: FitConfig,
}

impl Scenario {
    /// Desk-scale defaults: 300 regions, 100 replicates, 2000 sweeps with 500
    /// burn-in.
    pub fn desk(name: ScenarioName) -> Self {
        Scenario {
            name,
            sigma_zeta: name.sigma_zeta(),
            n_reps: 100,
            estimators: EstimatorKind::ALL.to_vec(),
            misspec_factor: 0.75,
            delta: 0.5,
            sim: SimConfig {
                n: 300,
                ..SimConfig::default()
            },
            fit: FitConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_reps == 0 {
            return Err(Error::Config("n_reps must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators selected".into()));
        }
        if !(self.misspec_factor > 0.0) {
            return Err(Error::Config("misspec_factor must be positive".into()));
        }
        self.fit.validate()
    }
}

/// One estimator's output on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub estimator: EstimatorKind,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub dir: f64,
    pub sp: f64,
    /// Interval of `dir + sp`, the effect scored against the fitted mean
    /// rather than the observed outcomes.
    pub fitted_lower: f64,
    pub fitted_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub truth: OmegaTruth,
    pub estimates: Vec<EstimateRecord>,
    /// Estimators whose fit failed, with the error text.
    pub failures: Vec<(EstimatorKind, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: EstimatorKind,
    pub mse: f64,
    /// MSE divided by the smallest MSE in the scenario.
    pub relative_mse: f64,
    pub coverage: f64,
    /// Coverage of the fitted-mean form of the effect.
    pub fitted_coverage: f64,
    pub mean_bias: f64,
    /// Coverage of the direct and spillover parts (mobility-aware estimators).
    pub dir_coverage: Option<f64>,
    pub sp_coverage: Option<f64>,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub seed: u64,
    pub summaries: Vec<EstimatorSummary>,
    pub replicates: Vec<ReplicateRecord>,
}

impl ScenarioResult {
    pub fn summary(&self, est: EstimatorKind) -> Option<&EstimatorSummary> {
        self.summaries.iter().find(|s| s.estimator == est)
    }
}

/// Interval bounds of the direct and spillover parts, kept for coverage.
#[derive(Debug, Clone, Copy)]
struct PartIntervals {
    dir: (f64, f64),
    sp: (f64, f64),
}

fn run_replicate(sc: &Scenario, seed: u64, r: usize) -> Result<(ReplicateRecord, Vec<Option<PartIntervals>>)> {
    let sim = SimConfig {
        sigma_zeta: sc.sigma_zeta,
        seed: substream_seed(seed, "simulate", r as u64),
        ..sc.sim.clone()
    };
    let (panel, truth) = generate(&sim)?;
    let delta = vec![sc.delta; sim.q];
    let truth_omega = true_omega(&truth, &delta)?;
    let intervention = Intervention::uniform(delta);

    // the estimators see only the panel, so each builds its own basis
    let joint_basis = fit_stacked_basis(&panel.w, &panel.g, sim.degree, sim.scaling)?;
    let home_basis = fit_basis_scaled(&panel.w, sim.degree, sim.scaling)?;

    let mut estimates = Vec::new();
    let mut parts = Vec::new();
    let mut failures = Vec::new();
    for &est in &sc.estimators {
        let mut fit = sc.fit.clone();
        fit.seed = substream_seed(seed, &format!("fit-{}", est.name()), r as u64);
        if est == EstimatorKind::Misspecified {
            fit.design.tau_scale = sc.misspec_factor;
        }
        let basis = if est.uses_mobility() { &joint_basis } else { &home_basis };
        let opts = EstimandOptions {
            seed: substream_seed(seed, "bootstrap", r as u64),
            ..EstimandOptions::default()
        };
        let outcome = fit_kind(&panel, basis, &fit, est.model())
            .and_then(|post| omega_effect(&post, &intervention, &panel, opts));
        match outcome {
            Ok(o) => {
                let e = &o.effect;
                let fitted: Vec<f64> = e.dir.draws.iter().zip(&e.sp.draws).map(|(d, s)| d + s).collect();
                let fitted = EstimandResult::from_draws("omega_fitted", fitted);
                estimates.push(EstimateRecord {
                    estimator: est,
                    estimate: e.total.mean,
                    lower: e.total.lower,
                    upper: e.total.upper,
                    dir: e.dir.mean,
                    sp: e.sp.mean,
                    fitted_lower: fitted.lower,
                    fitted_upper: fitted.upper,
                });
                parts.push(est.uses_mobility().then_some(PartIntervals {
                    dir: (e.dir.lower, e.dir.upper),
                    sp: (e.sp.lower, e.sp.upper),
                }));
            }
            Err(err) => {
                log::warn!("replicate {r}, {}: {err}", est.name());
                failures.push((est, err.to_string()));
            }
        }
    }
    Ok((
        ReplicateRecord {
            replicate: r,
            truth: truth_omega,
            estimates,
            failures,
        },
        parts,
    ))
}

/// Runs every replicate of a scenario. Replicate `r` draws all of its
/// randomness from sub-streams indexed by `r`, so the result does not depend
/// on scheduling.
pub fn run_scenario(sc: &Scenario, seed: u64) -> Result<ScenarioResult> {
    sc.validate()?;
    let outputs: Vec<(ReplicateRecord, Vec<Option<PartIntervals>>)> = (0..sc.n_reps)
        .into_par_iter()
        .map(|r| {
            run_replicate(sc, seed, r).map_err(|e| Error::Config(format!("replicate {r}: {e}")))
        })
        .collect::<Result<_>>()?;

    let mut summaries: Vec<EstimatorSummary> = sc
        .estimators
        .iter()
        .map(|&est| {
            let mut sq = Vec::new();
            let mut bias = Vec::new();
            let mut fitted_cov = 0usize;
            let (mut covered, mut dir_cov, mut sp_cov, mut n_parts) = (0usize, 0usize, 0usize, 0usize);
            let mut n_failed = 0;
            for (rec, parts) in &outputs {
                if rec.failures.iter().any(|(e, _)| *e == est) {
                    n_failed += 1;
                    continue;
                }
                let k = rec.estimates.iter().position(|e| e.estimator == est).expect("estimate present");
                let e = &rec.estimates[k];
                let t = rec.truth;
                sq.push((e.estimate - t.total).powi(2));
                bias.push(e.estimate - t.total);
                covered += usize::from(e.lower <= t.total && t.total <= e.upper);
                fitted_cov += usize::from(e.fitted_lower <= t.total && t.total <= e.fitted_upper);
                if let Some(p) = parts[k] {
                    n_parts += 1;
                    dir_cov += usize::from(p.dir.0 <= t.dir && t.dir <= p.dir.1);
                    sp_cov += usize::from(p.sp.0 <= t.sp && t.sp <= p.sp.1);
                }
            }
            let n_ok = sq.len();
            let frac = |c: usize, d: usize| if d == 0 { f64::NAN } else { c as f64 / d as f64 };
            EstimatorSummary {
                estimator: est,
                mse: stats::mean(&sq),
                relative_mse: f64::NAN,
                coverage: frac(covered, n_ok),
                fitted_coverage: frac(fitted_cov, n_ok),
                mean_bias: stats::mean(&bias),
                dir_coverage: (n_parts > 0).then(|| frac(dir_cov, n_parts)),
                sp_coverage: (n_parts > 0).then(|| frac(sp_cov, n_parts)),
                n_ok,
                n_failed,
            }
        })
        .collect();
    let best = summaries
        .iter()
        .map(|s| s.mse)
        .filter(|m| m.is_finite())
        .fold(f64::INFINITY, f64::min);
    for s in &mut summaries {
        s.relative_mse = s.mse / best;
    }
    Ok(ScenarioResult {
        scenario: sc.clone(),
        seed,
        summaries,
        replicates: outputs.into_iter().map(|(r, _)| r).collect(),
    })
}

/// Long-format plot row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub scenario: String,
    pub estimator: String,
    pub metric: String,
    pub value: f64,
    pub display: f64,
}

/// One relative-MSE row and one coverage row per estimator. Only the display
/// column of relative MSE is capped.
pub fn figure_tables(results: &[ScenarioResult]) -> Vec<FigureRow> {
    let mut rows = Vec::new();
    for res in results {
        for s in &res.summaries {
            let row = |metric: &str, value: f64, display: f64| FigureRow {
                scenario: res.scenario.name.name().to_string(),
                estimator: s.estimator.name().to_string(),
                metric: metric.to_string(),
                value,
                display,
            };
            rows.push(row("relative_mse", s.relative_mse, s.relative_mse.min(DISPLAY_CAP)));
            rows.push(row("coverage", s.coverage, s.coverage));
        }
    }
    rows
}

pub fn write_figure_csv<W: Write>(rows: &[FigureRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}
