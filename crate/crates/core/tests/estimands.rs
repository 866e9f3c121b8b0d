mod common;

use common::{random_panel, stacked_basis};
use nalgebra::DMatrix;
use proptest::prelude::*;
use spillover::basis::BasisSpec;
use spillover::estimands::{EstimandOptions, Estimator, Intervention};
use spillover::mobility::ExposurePanel;
use spillover::model::{FitConfig, ModelKind, ModelState, PosteriorDraws};
use spillover::rng::substream;
use rand::Rng;

const DEGREE: usize = 2;

fn panel_with_covariate(n: usize, seed: u64) -> ExposurePanel {
    let mut p = random_panel(n, 2, |i| 0.1 + 0.8 * ((i * 7) % n) as f64 / n as f64, seed);
    p.x = Some(DMatrix::from_fn(n, 1, |i, _| (i as f64 * 0.37).sin()));
    p.y = Some((0..n).map(|i| (i as f64 * 0.11).cos()).collect());
    p
}

fn random_state(rng: &mut impl Rng, kind: ModelKind) -> ModelState {
    let qm = 2 * DEGREE;
    let mut s = ModelState::initial(2, DEGREE, 2, kind);
    s.beta = (0..qm).map(|_| rng.random_range(-1.0..1.0)).collect();
    if kind.has_zeta() {
        s.zeta = (0..qm).map(|_| rng.random_range(-0.5..0.5)).collect();
    }
    s.theta = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    s
}

fn posterior(basis: BasisSpec, kind: ModelKind, draws: usize, seed: u64) -> PosteriorDraws {
    let mut rng = substream(seed, "test-draws", 0);
    PosteriorDraws {
        kind,
        basis,
        config: FitConfig::default(),
        n_covariates: 1,
        chain: vec![0; draws],
        draws: (0..draws).map(|_| random_state(&mut rng, kind)).collect(),
    }
}

fn plain() -> EstimandOptions {
    EstimandOptions {
        bootstrap: false,
        ..EstimandOptions::default()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit-level model mean with exposures replaced.
fn unit_mean(post: &PosteriorDraws, s: &ModelState, panel: &ExposurePanel, i: usize, w: &[f64], g: &[f64]) -> f64 {
    let tau = panel.tau[i];
    let fw = post.basis.eval_point(w).unwrap();
    let fg = post.basis.eval_point(g).unwrap();
    let x = panel.x.as_ref().unwrap()[(i, 0)];
    tau * dot(&fw, &s.beta) + (1.0 - tau) * dot(&fg, &s.gamma()) + s.theta[0] + s.theta[1] * x
}

#[test]
fn mean_potential_outcome_matches_unit_average() {
    let panel = panel_with_covariate(40, 1);
    let post = posterior(stacked_basis(&panel, DEGREE), ModelKind::Shrinkage, 25, 2);
    let mut est = Estimator::new(&post, &panel, plain()).unwrap();
    let (w, g) = ([0.3, -0.2], [0.1, 0.4]);
    let r = est.mean_potential_outcome(&w, &g).unwrap();
    for (b, s) in post.draws.iter().enumerate() {
        let oracle = (0..40).map(|i| unit_mean(&post, s, &panel, i, &w, &g)).sum::<f64>() / 40.0;
        assert!((r.draws[b] - oracle).abs() < 1e-12);
    }
}

#[test]
fn marginal_curves_average_the_other_exposure() {
    let panel = panel_with_covariate(30, 3);
    let post = posterior(stacked_basis(&panel, DEGREE), ModelKind::NonShrinkage, 10, 4);
    let mut est = Estimator::new(&post, &panel, plain()).unwrap();
    let w = [0.5, 0.0];
    let phi = est.marginal_phi(&w).unwrap();
    let psi = est.marginal_psi(&w).unwrap();
    for (b, s) in post.draws.iter().enumerate() {
        let mut o_phi = 0.0;
        let mut o_psi = 0.0;
        for i in 0..30 {
            let gi: Vec<f64> = panel.g.row(i).iter().copied().collect();
            let wi: Vec<f64> = panel.w.row(i).iter().copied().collect();
            o_phi += unit_mean(&post, s, &panel, i, &w, &gi) / 30.0;
            o_psi += unit_mean(&post, s, &panel, i, &wi, &w) / 30.0;
        }
        assert!((phi.draws[b] - o_phi).abs() < 1e-12);
        assert!((psi.draws[b] - o_psi).abs() < 1e-12);
    }
}

#[test]
fn omega_matches_per_unit_recomputation() {
    let panel = panel_with_covariate(35, 5);
    let post = posterior(stacked_basis(&panel, DEGREE), ModelKind::Shrinkage, 15, 6);
    let y = panel.y.clone().unwrap();
    let y_bar = y.iter().sum::<f64>() / 35.0;
    let delta = [0.25, -0.5];
    let r = Estimator::new(&post, &panel, plain())
        .unwrap()
        .omega_effect(&Intervention::uniform(delta.to_vec()))
        .unwrap();
    for (b, s) in post.draws.iter().enumerate() {
        let (mut shifted, mut base) = (0.0, 0.0);
        for i in 0..35 {
            let wi: Vec<f64> = panel.w.row(i).iter().copied().collect();
            let gi: Vec<f64> = panel.g.row(i).iter().copied().collect();
            let w1: Vec<f64> = wi.iter().zip(&delta).map(|(a, d)| a + d).collect();
            let g1: Vec<f64> = gi.iter().zip(&delta).map(|(a, d)| a + d).collect();
            shifted += unit_mean(&post, s, &panel, i, &w1, &g1) / 35.0;
            base += unit_mean(&post, s, &panel, i, &wi, &gi) / 35.0;
        }
        // observed-outcome form: shifted model mean minus the observed mean
        let oracle = shifted - y_bar;
        assert!((r.effect.total.draws[b] - oracle).abs() < 1e-12);
        assert!((r.residual.draws[b] - (base - y_bar)).abs() < 1e-12);
    }
}

#[test]
fn zero_shift_gives_mean_residual() {
    let panel = panel_with_covariate(25, 7);
    let post = posterior(stacked_basis(&panel, DEGREE), ModelKind::NonShrinkage, 20, 8);
    let r = Estimator::new(&post, &panel, EstimandOptions::default())
        .unwrap()
        .omega_effect(&Intervention::uniform(vec![0.0, 0.0]))
        .unwrap();
    assert_eq!(r.effect.total.draws, r.residual.draws);
    assert!(r.effect.dir.draws.iter().chain(&r.effect.sp.draws).all(|v| *v == 0.0));
}

#[test]
fn per_region_shift_equals_uniform_when_constant() {
    let panel = panel_with_covariate(20, 9);
    let post = posterior(stacked_basis(&panel, DEGREE), ModelKind::Shrinkage, 8, 10);
    let est = Estimator::new(&post, &panel, plain()).unwrap();
    let a = est.omega_effect(&Intervention::uniform(vec![0.3, 0.1])).unwrap();
    let per = Intervention::PerRegion {
        delta_w: DMatrix::from_fn(20, 2, |_, k| [0.3, 0.1][k]),
        delta_g: DMatrix::from_fn(20, 2, |_, k| [0.3, 0.1][k]),
    };
    let b = est.omega_effect(&per).unwrap();
    assert_eq!(a.effect.total.draws, b.effect.total.draws);
}

#[test]
fn omega_increases_with_shift_for_increasing_linear_fit() {
    let panel = panel_with_covariate(50, 11);
    let mut post = posterior(stacked_basis(&panel, DEGREE), ModelKind::Shrinkage, 1, 12);
    // positive linear terms, no curvature, posterior mean is this single draw
    let s = &mut post.draws[0];
    s.beta = vec![0.6, 0.0, 0.4, 0.0];
    s.zeta = vec![0.2, 0.0, 0.1, 0.0];
    let est = Estimator::new(&post, &panel, plain()).unwrap();
    for coord in 0..2 {
        let mut last = f64::NEG_INFINITY;
        for step in 0..10 {
            let mut delta = vec![0.0, 0.0];
            delta[coord] = -1.0 + 0.2 * step as f64;
            let v = est.omega_effect(&Intervention::uniform(delta)).unwrap().effect.total.mean;
            assert!(v > last);
            last = v;
        }
    }
}

#[test]
fn bootstrap_is_inert_for_constant_tau_without_covariates() {
    let mut panel = random_panel(30, 2, |_| 0.6, 13);
    panel.y = Some(vec![0.0; 30]);
    let mut post = posterior(stacked_basis(&panel, DEGREE), ModelKind::Shrinkage, 12, 14);
    post.n_covariates = 0;
    for s in &mut post.draws {
        s.theta.truncate(1);
    }
    let (w, g) = ([0.2, 0.2], [0.1, -0.1]);
    let a = Estimator::new(&post, &panel, plain()).unwrap().mean_potential_outcome(&w, &g).unwrap();
    let b = Estimator::new(&post, &panel, EstimandOptions::default())
        .unwrap()
        .mean_potential_outcome(&w, &g)
        .unwrap();
    for (x, y) in a.draws.iter().zip(&b.draws) {
        assert!((x - y).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lambda_and_omega_decompose_per_draw(
        seed in 0u64..1000,
        w in prop::collection::vec(-1.0..1.0f64, 2),
        g in prop::collection::vec(-1.0..1.0f64, 2),
        dw in prop::collection::vec(-0.5..0.5f64, 2),
        dg in prop::collection::vec(-0.5..0.5f64, 2),
        naive in any::<bool>(),
    ) {
        let panel = panel_with_covariate(20, seed);
        let kind = if naive { ModelKind::Naive } else { ModelKind::Shrinkage };
        let post = posterior(stacked_basis(&panel, DEGREE), kind, 10, seed + 1);
        let mut est = Estimator::new(&post, &panel, EstimandOptions { seed, ..EstimandOptions::default() }).unwrap();
        let lam = est.lambda_effect(&w, &g, &dw, &dg).unwrap();
        for b in 0..10 {
            prop_assert_eq!(lam.total.draws[b], lam.dir.draws[b] + lam.sp.draws[b]);
            if naive {
                prop_assert_eq!(lam.sp.draws[b], 0.0);
            }
        }
        let om = est.omega_effect(&Intervention::uniform(dw.clone())).unwrap();
        for b in 0..10 {
            let sum = om.effect.dir.draws[b] + om.effect.sp.draws[b] + om.residual.draws[b];
            prop_assert_eq!(om.effect.total.draws[b], sum);
        }
        for r in [&lam.total, &lam.dir, &lam.sp, &om.effect.total] {
            prop_assert!(r.lower <= r.mean && r.mean <= r.upper);
        }
    }
}
