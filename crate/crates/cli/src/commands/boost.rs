use serde_json::Value;
use xper::experiments::{boost_pipeline, AssignmentRule, BoostConfig, ClusterSpace};

use super::{metric_spec, model_source, same_columns, to_value, ModelSource, RunContext};
use crate::args::{BoostArgs, SpaceArg};
use crate::error::CliError;

pub fn run(args: &BoostArgs, ctx: &mut RunContext) -> Result<Value, CliError> {
    let spec = metric_spec(&args.metric, args.threshold)?;
    let ModelSource::Builtin(recipe) = model_source(&args.model)? else {
        return Err(CliError::Usage("boost refits models and needs a built-in recipe".into()));
    };
    if args.clusters == 0 {
        return Err(CliError::Usage("--clusters must be at least 1".into()));
    }
    let train = ctx.load(&args.train, &args.columns)?;
    let test = ctx.load(&args.test, &args.columns)?;
    same_columns(&train, &test, "train and test")?;
    ctx.seeds.push(args.seed);

    let mut config = BoostConfig::new(recipe, spec, args.clusters, args.seed);
    config.spaces = match args.space {
        SpaceArg::Xper => vec![ClusterSpace::Xper],
        SpaceArg::Features => vec![ClusterSpace::Features],
        SpaceArg::Both => vec![ClusterSpace::Xper, ClusterSpace::Features],
    };
    if args.deploy_safe {
        config.assignment = AssignmentRule::DeploySafe;
    }
    let report = boost_pipeline(&train, &test, &config)?;
    Ok(to_value(&report))
}
