use std::io::Write;
use std::path::Path;

use log::info;
use serde::Serialize;
use spillover::bias::{
    additive_error_check, closed_form_bias, curve_table, linspace, mc_ols_omega, measurement_error_xi,
    misspec_reference_laws, misspec_table, naive_slope, scalar_misspec_bias, weighted_slope_star, write_rows_csv,
    xi_reference_laws, xi_table, CurveGapConfig, GaussianGenerator, LinearBiasSetting, Moments, OracleConfig,
};
use spillover::laws::Law;

use crate::args::{BiasCommand, LinearArgs};
use crate::io::{create, read_json};
use crate::manifest::RunRecorder;
use crate::CliResult;

fn law(s: &str) -> CliResult<Law> {
    let law: Law = s.parse()?;
    law.validate()?;
    Ok(law)
}

fn setting(a: &LinearArgs) -> CliResult<LinearBiasSetting> {
    let s = LinearBiasSetting {
        tau: a.tau,
        rho: a.rho,
        beta_w: a.beta_w,
        beta_g: a.beta_g,
    };
    s.validate()?;
    Ok(s)
}

fn print(value: &impl Serialize) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_table<T: Serialize>(rows: &[T], path: &Path, rec: &mut RunRecorder) -> CliResult<()> {
    let mut out = create(path)?;
    write_rows_csv(rows, &mut out)?;
    out.flush()?;
    rec.output(path);
    info!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

pub fn run(cmd: &BiasCommand, rec: &mut RunRecorder) -> CliResult<()> {
    rec.config(cmd);
    match cmd {
        BiasCommand::Xi {
            tau_dist,
            eta_dist,
            beta_w,
            beta_g,
        } => {
            let star = Moments::from_law(&law(tau_dist)?);
            let eta = Moments::from_law(&law(eta_dist)?);
            print(&measurement_error_xi(&star, &eta, *beta_w, *beta_g))
        }
        BiasCommand::Misspec { c, rho, tau_dist, beta_g } => {
            let tau = Moments::from_law(&law(tau_dist)?);
            let bias = scalar_misspec_bias(*c, *rho, &tau, *beta_g)?;
            print(&serde_json::json!({ "c": c, "rho": rho, "bias": bias }))
        }
        BiasCommand::NaiveSlope(a) => {
            let s = setting(a)?;
            let slope = naive_slope(&s);
            print(&serde_json::json!({
                "slope": slope,
                "true_effect": s.true_effect(),
                "bias": slope - s.true_effect(),
            }))
        }
        BiasCommand::WeightedStar(a) => {
            let s = setting(a)?;
            let slope = weighted_slope_star(&s)?;
            print(&serde_json::json!({
                "slope": slope,
                "true_effect": s.true_effect(),
                "bias": slope - s.true_effect(),
            }))
        }
        BiasCommand::Additive {
            tau_dist,
            eta_dist,
            rho,
            beta_w,
            beta_g,
        } => {
            let tau = Moments::from_law(&law(tau_dist)?);
            let eta = Moments::from_law(&law(eta_dist)?);
            let bias = additive_error_check(&tau, &eta, *rho, *beta_w, *beta_g)?;
            print(&serde_json::json!({ "bias": bias }))
        }
        BiasCommand::Oracle { config } => {
            rec.input(config);
            let cfg: OracleConfig = read_json(config)?;
            rec.config(&cfg);
            rec.seed("oracle", cfg.seed);
            let closed = closed_form_bias(&cfg)?;
            let mc = mc_ols_omega(&cfg)?;
            print(&serde_json::json!({
                "closed_form": closed,
                "monte_carlo": mc,
                "within_3_se": mc.agrees_with(closed, 3.0),
            }))
        }
        BiasCommand::CurveTable {
            out,
            rhos,
            tau,
            curvature,
            mc_draws,
            seed,
        } => {
            let base = GaussianGenerator::new(0.0, *tau, 1.0, 1.0, *curvature);
            let cfg = CurveGapConfig {
                mc_draws: *mc_draws,
                seed: *seed,
                ..CurveGapConfig::default()
            };
            rec.seed("curve", *seed);
            let rows = curve_table(&base, rhos, &linspace(-2.0, 2.0, 41), &cfg)?;
            write_table(&rows, out, rec)
        }
        BiasCommand::MisspecTable { out, c } => {
            let rows = misspec_table(&misspec_reference_laws(), *c, &linspace(-1.0, 1.0, 41))?;
            write_table(&rows, out, rec)
        }
        BiasCommand::XiTable { out, max_eta2, points } => {
            let rows = xi_table(&xi_reference_laws(), &linspace(0.0, *max_eta2, *points));
            write_table(&rows, out, rec)
        }
    }
}
