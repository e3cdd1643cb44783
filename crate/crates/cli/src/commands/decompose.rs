use log::info;
use serde_json::{json, Value};
use xper::exact::ExactOptions;
use xper::wls::CoalitionSampling;
use xper::{xper_exact, xper_wls, FittedMetric, WlsOptions};

use super::{metric_spec, model_source, same_columns, spawn_adapter, to_value, ModelSource, RunContext};
use crate::args::{DecomposeArgs, Method};
use crate::error::CliError;

pub fn run(args: &DecomposeArgs, ctx: &mut RunContext) -> Result<Value, CliError> {
    let spec = metric_spec(&args.metric, args.threshold)?;
    let source = model_source(&args.model)?;
    let data = ctx.load(&args.data, &args.columns)?;
    ctx.seeds.push(args.seed);

    let model = match &source {
        ModelSource::Builtin(recipe) => {
            let train = match &args.train {
                Some(path) => {
                    let train = ctx.load(path, &args.columns)?;
                    same_columns(&train, &data, "training and evaluation")?;
                    train
                }
                None => data.clone(),
            };
            info!("fitting {recipe} on {} rows", train.n());
            recipe.fit(&train, args.seed)?
        }
        ModelSource::Exec(program) => {
            if args.train.is_some() {
                return Err(CliError::Usage("--train applies to built-in models only".into()));
            }
            spawn_adapter(program, &args.adapter_args, &data)?
        }
    };
    let metric = FittedMetric::fit_with_model(spec, &data, &model)?;

    info!("decomposing {} over n = {}, q = {}", spec.id, data.n(), data.q());
    let report = match args.method {
        Method::Exact => {
            if args.k_samples.is_some() || args.unconstrained || args.kernel_sampling {
                return Err(CliError::Usage(
                    "--k-samples, --unconstrained and --kernel-sampling need --method wls".into(),
                ));
            }
            let options = ExactOptions {
                individual: args.individual,
                allow_large_q: args.allow_large_q,
                ..Default::default()
            };
            xper_exact(&data, &model, &metric, &options)?
        }
        Method::Wls => {
            let k = args
                .k_samples
                .ok_or_else(|| CliError::Usage("--method wls needs --k-samples".into()))?;
            let options = WlsOptions {
                individual: args.individual,
                constrained: !args.unconstrained,
                sampling: if args.kernel_sampling {
                    CoalitionSampling::KernelProportional
                } else {
                    CoalitionSampling::Uniform
                },
                ..WlsOptions::new(k, args.seed)
            };
            xper_wls(&data, &model, &metric, &options)?
        }
    };

    Ok(json!({
        "sample": {
            "n": data.n(),
            "q": data.q(),
            "task": data.task(),
            "target": data.target_name(),
        },
        "model": args.model,
        "metric": spec,
        "report": to_value(&report),
    }))
}
