use log::info;
use spillover::mobility::save_panel_csv;
use spillover::simulate::{generate, SimConfig, TruthSidecar};

use crate::args::SimulateArgs;
use crate::io::{read_json, write_json};
use crate::manifest::RunRecorder;
use crate::CliResult;

pub fn run(args: &SimulateArgs, rec: &mut RunRecorder) -> CliResult<()> {
    let mut cfg: SimConfig = match &args.config {
        Some(path) => {
            rec.input(path);
            read_json(path)?
        }
        None => SimConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.n {
        cfg.n = n;
    }
    rec.config(&cfg);
    rec.seed("simulate", cfg.seed);
    cfg.validate()?;

    let (panel, truth) = generate(&cfg)?;
    info!("simulated {} regions with {} exposures", panel.n(), panel.q());
    std::fs::create_dir_all(&args.out)?;
    let panel_path = args.out.join("panel.csv");
    save_panel_csv(&panel, &panel_path)?;
    rec.output(&panel_path);
    let truth_path = args.out.join("truth.json");
    TruthSidecar::new(&truth, &cfg).save(&truth_path)?;
    rec.output(&truth_path);
    let config_path = args.out.join("config.json");
    write_json(&config_path, &cfg)?;
    rec.output(&config_path);
    Ok(())
}
