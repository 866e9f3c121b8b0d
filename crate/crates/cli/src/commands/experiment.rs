use std::io::Write;

use log::info;
use spillover::experiments::{figure_tables, run_scenario, write_figure_csv, Scenario, ScenarioName};

use crate::args::ExperimentArgs;
use crate::io::{create, write_json};
use crate::manifest::RunRecorder;
use crate::CliResult;

fn scenarios(args: &ExperimentArgs) -> CliResult<Vec<Scenario>> {
    let names = if args.scenario == "all" {
        ScenarioName::ALL.to_vec()
    } else {
        vec![ScenarioName::parse(&args.scenario)?]
    };
    Ok(names
        .into_iter()
        .map(|name| {
            let mut sc = Scenario::desk(name);
            if let Some(n) = args.n {
                sc.sim.n = n;
            }
            if let Some(reps) = args.reps {
                sc.n_reps = reps;
            }
            if let Some(d) = args.draws {
                sc.fit.n_draws = d;
            }
            if let Some(b) = args.burnin {
                sc.fit.n_burnin = b;
            }
            sc
        })
        .collect())
}

pub fn run(args: &ExperimentArgs, rec: &mut RunRecorder) -> CliResult<()> {
    let scenarios = scenarios(args)?;
    rec.config(&scenarios);
    rec.seed("experiment", args.seed);
    for sc in &scenarios {
        sc.sim.validate()?;
        sc.validate()?;
    }
    std::fs::create_dir_all(&args.out)?;
    let mut results = Vec::new();
    for sc in &scenarios {
        info!(
            "scenario {}: {} replicates of n = {}",
            sc.name.name(),
            sc.n_reps,
            sc.sim.n
        );
        let res = run_scenario(sc, args.seed)?;
        for s in &res.summaries {
            info!(
                "  {:<14} mse {:.4}  coverage {:.2}  failed {}",
                s.estimator.name(),
                s.mse,
                s.coverage,
                s.n_failed
            );
            rec.failures += s.n_failed;
        }
        let path = args.out.join(format!("{}.json", sc.name.name()));
        write_json(&path, &res)?;
        rec.output(&path);
        results.push(res);
    }
    let path = args.out.join("figure.csv");
    let mut out = create(&path)?;
    write_figure_csv(&figure_tables(&results), &mut out)?;
    out.flush()?;
    rec.output(&path);
    Ok(())
}
