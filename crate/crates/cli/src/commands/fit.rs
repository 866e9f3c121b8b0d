use std::io::Write;

use log::info;
use spillover::basis::{fit_basis_scaled, fit_stacked_basis};
use spillover::mobility::load_panel_csv;
use spillover::model::{fit_kind, DesignOptions, FitConfig, ModelKind};

use crate::args::FitArgs;
use crate::io::create;
use crate::manifest::RunRecorder;
use crate::CliResult;

fn model_kind(args: &FitArgs) -> ModelKind {
    if args.naive {
        ModelKind::Naive
    } else if args.non_shrinkage {
        ModelKind::NonShrinkage
    } else {
        ModelKind::Shrinkage
    }
}

pub fn run(args: &FitArgs, rec: &mut RunRecorder) -> CliResult<()> {
    let kind = model_kind(args);
    let cfg = FitConfig {
        n_draws: args.draws,
        n_burnin: args.burnin,
        n_chains: args.chains,
        thin: args.thin,
        seed: args.seed,
        design: DesignOptions {
            intercept: !args.no_intercept,
            tau_scale: args.tau_scale,
        },
        ..FitConfig::default()
    };
    rec.config(serde_json::json!({
        "data": args.data,
        "model": kind,
        "degree": args.degree,
        "scaling": spillover::basis::BasisScaling::from(args.scaling),
        "fit": cfg,
    }));
    rec.seed("fit", cfg.seed);
    cfg.validate()?;
    rec.input(&args.data);
    let panel = load_panel_csv(&args.data)?;
    panel.y()?;

    let scaling = args.scaling.into();
    let basis = match kind {
        ModelKind::Naive => fit_basis_scaled(&panel.w, args.degree, scaling)?,
        _ => fit_stacked_basis(&panel.w, &panel.g, args.degree, scaling)?,
    };
    info!(
        "fitting {:?} model: {} regions, {} chains x {} sweeps",
        kind,
        panel.n(),
        cfg.n_chains,
        cfg.n_draws
    );
    let post = fit_kind(&panel, &basis, &cfg, kind)?;
    info!("kept {} draws", post.len());
    let mut out = create(&args.out)?;
    post.write_binary(&mut out)?;
    out.flush()?;
    rec.output(&args.out);
    if let Some(path) = &args.csv {
        let mut out = create(path)?;
        post.write_csv(&mut out)?;
        out.flush()?;
        rec.output(path);
    }
    Ok(())
}
