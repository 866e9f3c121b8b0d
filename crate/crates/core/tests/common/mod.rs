//! Helpers shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use spillover::basis::{fit_stacked_basis, BasisScaling, BasisSpec};
use spillover::mobility::ExposurePanel;
use spillover::rng::substream;

/// Panel with independent standard normal exposures, given fractions and no
/// outcome.
pub fn random_panel(n: usize, q: usize, tau: impl Fn(usize) -> f64, seed: u64) -> ExposurePanel {
    let mut rng = substream(seed, "test-panel", 0);
    let mut normal = |_: usize, _: usize| rng.sample::<f64, _>(StandardNormal);
    let w = DMatrix::from_fn(n, q, &mut normal);
    let g = DMatrix::from_fn(n, q, &mut normal);
    let tau: Vec<f64> = (0..n).map(tau).collect();
    ExposurePanel {
        w,
        g,
        isolated: tau.iter().map(|&t| t == 1.0).collect(),
        tau,
        x: None,
        y: Some(vec![0.0; n]),
    }
}

pub fn stacked_basis(panel: &ExposurePanel, degree: usize) -> BasisSpec {
    fit_stacked_basis(&panel.w, &panel.g, degree, BasisScaling::UnitVariance).unwrap()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Monte-Carlo standard error of the mean of a correlated series by
/// non-overlapping batch means.
pub fn batch_mean_se(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&xs[b * size..(b + 1) * size])).collect();
    let m = mean(&means);
    let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}
