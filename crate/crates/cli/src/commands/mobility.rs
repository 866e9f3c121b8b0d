use std::path::Path;

use log::info;
use serde::Serialize;
use spillover::mobility::{compute_weights, load_mobility_csv, save_panel_csv, ExposurePanel, MobilityWeights};

use crate::args::MobilityArgs;
use crate::io::{create, Table};
use crate::manifest::RunRecorder;
use crate::{CliError, CliResult};

#[derive(Serialize)]
struct WeightRow {
    region: usize,
    tau: f64,
    isolated: bool,
}

#[derive(Serialize)]
struct AlphaEntry {
    from: usize,
    to: usize,
    alpha: f64,
}

fn write_weights(weights: &MobilityWeights, dir: &Path, rec: &mut RunRecorder) -> CliResult<()> {
    let path = dir.join("weights.csv");
    let mut wtr = csv::Writer::from_writer(create(&path)?);
    for i in 0..weights.n() {
        wtr.serialize(WeightRow {
            region: i,
            tau: weights.tau[i],
            isolated: weights.isolated[i],
        })
        .map_err(spillover::Error::from)?;
    }
    wtr.flush()?;
    rec.output(&path);

    // triplets keep the file proportional to the number of flows
    let path = dir.join("alpha.csv");
    let mut wtr = csv::Writer::from_writer(create(&path)?);
    for i in 0..weights.n() {
        for (j, a) in weights.alpha.row(i) {
            wtr.serialize(AlphaEntry { from: i, to: j, alpha: a })
                .map_err(spillover::Error::from)?;
        }
    }
    wtr.flush()?;
    rec.output(&path);
    Ok(())
}

pub fn run(args: &MobilityArgs, rec: &mut RunRecorder) -> CliResult<()> {
    rec.input(&args.matrix);
    let t = load_mobility_csv(&args.matrix)?;
    let weights = compute_weights(&t);
    weights.validate()?;
    let n_isolated = weights.isolated.iter().filter(|&&b| b).count();
    info!("{} regions, {} without away time", weights.n(), n_isolated);
    std::fs::create_dir_all(&args.out)?;
    write_weights(&weights, &args.out, rec)?;

    if let Some(path) = &args.exposures {
        rec.input(path);
        let table = Table::read(path)?;
        table.check_headers(&["w", "x"], &["y"])?;
        if table.rows() != weights.n() {
            return Err(CliError::Core(spillover::Error::DimensionMismatch(format!(
                "{} exposure rows for {} regions",
                table.rows(),
                weights.n()
            ))));
        }
        let w = table
            .numbered("w")?
            .ok_or_else(|| spillover::Error::Parse("exposures lack columns w1..wq".into()))?;
        let panel = ExposurePanel::from_mobility(&weights, w, table.numbered("x")?, table.column("y"))?;
        let out = args.out.join("panel.csv");
        save_panel_csv(&panel, &out)?;
        rec.output(&out);
    }
    rec.config(serde_json::json!({
        "matrix": args.matrix,
        "exposures": args.exposures,
        "regions": weights.n(),
        "isolated": n_isolated,
    }));
    Ok(())
}
