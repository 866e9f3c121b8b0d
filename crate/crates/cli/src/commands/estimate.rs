use std::io::Write;

use log::{info, warn};
use serde::Serialize;
use spillover::estimands::{
    write_curve_csv, CurveKind, Decomposition, EstimandOptions, EstimandResult, EstimandSummary, Estimator,
    ExtrapolationWarning, Intervention,
};
use spillover::mobility::load_panel_csv;
use spillover::model::PosteriorDraws;

use crate::args::{CurveArg, EstimandCommand, EstimateArgs};
use crate::io::{create, parse_grid, write_json, Table};
use crate::manifest::RunRecorder;
use crate::{CliError, CliResult};

#[derive(Serialize)]
struct Report {
    estimand: &'static str,
    n_draws: usize,
    results: Vec<EstimandSummary>,
    warnings: Vec<ExtrapolationWarning>,
}

fn decomposition(d: &Decomposition) -> Vec<&EstimandResult> {
    vec![&d.total, &d.dir, &d.sp]
}

/// One row per draw, one column per estimand.
fn write_draws(path: &std::path::Path, results: &[&EstimandResult]) -> CliResult<()> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    let map = |e: csv::Error| CliError::Core(e.into());
    wtr.write_record(results.iter().map(|r| r.label.as_str())).map_err(map)?;
    let n = results.first().map_or(0, |r| r.draws.len());
    for s in 0..n {
        wtr.write_record(results.iter().map(|r| format!("{:?}", r.draws[s]))).map_err(map)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Broadcasts a single value to every exposure.
fn per_exposure(flag: &str, values: &[f64], q: usize) -> CliResult<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; q]),
        k if k == q => Ok(values.to_vec()),
        k => Err(CliError::Usage(format!("--{flag} has {k} values for {q} exposures"))),
    }
}

fn read_shifts(path: &std::path::Path, q: usize, n: usize) -> CliResult<Intervention> {
    let table = Table::read(path)?;
    table.check_headers(&["dw", "dg"], &[])?;
    let missing = || CliError::Usage(format!("{} needs columns dw1..dw{q} and dg1..dg{q}", path.display()));
    let dw = table.numbered("dw")?.ok_or_else(missing)?;
    let dg = table.numbered("dg")?.ok_or_else(missing)?;
    if dw.shape() != (n, q) || dg.shape() != (n, q) {
        return Err(missing());
    }
    Ok(Intervention::PerRegion {
        delta_w: dw,
        delta_g: dg,
    })
}

pub fn run(args: &EstimateArgs, rec: &mut RunRecorder) -> CliResult<()> {
    let opts = EstimandOptions {
        bootstrap: !args.no_bootstrap,
        seed: args.seed,
        observed_outcome: !matches!(args.estimand, EstimandCommand::Omega { fitted_mean: true, .. }),
    };
    rec.seed("bootstrap", args.seed);
    rec.input(&args.posterior);
    rec.input(&args.data);
    let post = PosteriorDraws::load(&args.posterior)?;
    let panel = load_panel_csv(&args.data)?;
    let mut est = Estimator::new(&post, &panel, opts)?;
    let q = panel.q();

    let (name, results): (&'static str, Vec<EstimandResult>) = match &args.estimand {
        EstimandCommand::Omega { delta, shifts, .. } => {
            let intervention = match (delta, shifts) {
                (_, Some(path)) => {
                    rec.input(path);
                    read_shifts(path, q, panel.n())?
                }
                (Some(d), None) => Intervention::uniform(per_exposure("delta", d, q)?),
                (None, None) => return Err(CliError::Usage("omega needs --delta or --shifts".into())),
            };
            let r = est.omega_effect(&intervention)?;
            let mut out: Vec<EstimandResult> = decomposition(&r.effect).into_iter().cloned().collect();
            out.push(r.residual);
            ("omega", out)
        }
        EstimandCommand::Mu { w, g } => {
            let (w, g) = (per_exposure("w", w, q)?, per_exposure("g", g, q)?);
            ("mu", vec![est.mean_potential_outcome(&w, &g)?])
        }
        EstimandCommand::Phi { w } => ("phi", vec![est.marginal_phi(&per_exposure("w", w, q)?)?]),
        EstimandCommand::Psi { g } => ("psi", vec![est.marginal_psi(&per_exposure("g", g, q)?)?]),
        EstimandCommand::Lambda { w, g, dw, dg } => {
            let d = est.lambda_effect(
                &per_exposure("w", w, q)?,
                &per_exposure("g", g, q)?,
                &per_exposure("dw", dw, q)?,
                &per_exposure("dg", dg, q)?,
            )?;
            ("lambda", decomposition(&d).into_iter().cloned().collect())
        }
        EstimandCommand::Curve {
            kind,
            base,
            coord,
            grid,
            csv,
        } => {
            let kind = match kind {
                CurveArg::Phi => CurveKind::Phi,
                CurveArg::Psi => CurveKind::Psi,
            };
            let points = est.curve(kind, &per_exposure("base", base, q)?, *coord, &parse_grid(grid)?)?;
            let mut out = create(csv)?;
            write_curve_csv(&points, &mut out)?;
            out.flush()?;
            rec.output(csv);
            info!("wrote {} curve points to {}", points.len(), csv.display());
            ("curve", Vec::new())
        }
    };
    rec.config(serde_json::json!({
        "estimand": name,
        "posterior": args.posterior,
        "data": args.data,
        "options": opts,
        "args": args.estimand,
    }));
    for w in &est.warnings {
        warn!(
            "extrapolating: {} coordinate {} at {} outside observed [{}, {}]",
            w.exposure, w.coordinate, w.value, w.lo, w.hi
        );
    }
    let draws_file = args.draws_out.as_ref().map(|p| p.display().to_string());
    let report = Report {
        estimand: name,
        n_draws: est.n_draws(),
        results: results.iter().map(|r| r.summary(draws_file.clone())).collect(),
        warnings: est.warnings.clone(),
    };
    if let Some(path) = &args.draws_out {
        write_draws(path, &results.iter().collect::<Vec<_>>())?;
        rec.output(path);
    }
    match &args.out {
        Some(path) => {
            write_json(path, &report)?;
            rec.output(path);
        }
        None if name != "curve" => println!("{}", serde_json::to_string_pretty(&report)?),
        None => {}
    }
    Ok(())
}
