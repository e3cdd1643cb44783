use log::info;
use serde_json::{json, Value};
use xper::experiments::{run_study, Scenario, StudyConfig};

use super::{to_value, RunContext};
use crate::args::SimulateArgs;
use crate::error::CliError;

pub fn run(mut args: SimulateArgs, ctx: &mut RunContext) -> Result<(SimulateArgs, Value), CliError> {
    let scenario: Scenario = args.scenario.parse()?;
    let mut config = StudyConfig::preset(scenario);
    config.replications = *args.reps.get_or_insert(config.replications);
    config.seed = *args.seed.get_or_insert(config.seed);
    config.train_size = *args.train_size.get_or_insert(config.train_size);
    config.test_size = *args.test_size.get_or_insert(config.test_size);
    if let Some(model) = &args.model {
        config.model = model.strip_prefix("builtin:").unwrap_or(model).parse()?;
    }
    args.model = Some(config.model.to_string());
    config.validate()?;
    ctx.seeds.push(config.seed);

    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", args.out_dir.display())))?;
    info!("running {scenario} with {} replications", config.replications);
    let result = run_study(&config)?;
    let csv = args.out_dir.join(format!("{scenario}.csv"));
    let summary = args.out_dir.join(format!("{scenario}_summary.json"));
    result.write_csv(&csv)?;
    result.write_summary_json(&summary)?;
    info!("wrote {} and {}", csv.display(), summary.display());

    let value = json!({
        "config": to_value(&result.config),
        "summary": to_value(&result.summary),
        "failures": to_value(&result.failures),
        "rows": result.rows.len(),
        "files": [csv.display().to_string(), summary.display().to_string()],
    });
    Ok((args, value))
}
