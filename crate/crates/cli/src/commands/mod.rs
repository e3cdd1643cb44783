mod boost;
mod decompose;
mod generate;
mod oracle;
mod simulate;

pub use oracle::render_table as render_oracle_table;

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;
use xper::data::FeatureKind;
use xper::experiments::ModelRecipe;
use xper::models::ExternalModel;
use xper::{load_csv, Adapter, LoadOptions, MetricId, MetricSpec, Sample, Task};

use crate::args::{Command, DataArgs, TaskArg};
use crate::error::CliError;
use crate::manifest::{digest_file, InputDigest};

/// Inputs and seeds seen while running a command.
#[derive(Default)]
pub struct RunContext {
    pub inputs: Vec<InputDigest>,
    pub seeds: Vec<u64>,
}

impl RunContext {
    pub fn load(&mut self, path: &Path, columns: &DataArgs) -> Result<Sample, CliError> {
        self.inputs.push(digest_file(path)?);
        let options = LoadOptions {
            kinds: columns
                .categorical
                .iter()
                .map(|c| (c.clone(), FeatureKind::Categorical))
                .collect::<BTreeMap<_, _>>(),
            task: columns.task.map(|t| match t {
                TaskArg::Regression => Task::Regression,
                TaskArg::Binary => Task::BinaryClassification,
            }),
        };
        load_csv(path, &columns.target, &options).map_err(|e| match e {
            xper::XperError::Io(io) => CliError::Usage(format!("cannot read {}: {io}", path.display())),
            other => other.into(),
        })
    }
}

pub fn metric_spec(id: &str, threshold: f64) -> Result<MetricSpec, CliError> {
    let id: MetricId = id.parse()?;
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(CliError::Usage(format!("threshold {threshold} outside (0, 1)")));
    }
    Ok(MetricSpec::new(id).with_threshold(threshold))
}

pub enum ModelSource {
    Builtin(ModelRecipe),
    Exec(String),
}

/// Parses `builtin:<recipe>`, `exec:<program>`, or a bare recipe.
pub fn model_source(spec: &str) -> Result<ModelSource, CliError> {
    if let Some(program) = spec.strip_prefix("exec:") {
        if program.is_empty() {
            return Err(CliError::Usage("`exec:` needs a program path".into()));
        }
        return Ok(ModelSource::Exec(program.to_string()));
    }
    let recipe = spec.strip_prefix("builtin:").unwrap_or(spec);
    Ok(ModelSource::Builtin(recipe.parse()?))
}

pub fn spawn_adapter(program: &str, args: &[String], sample: &Sample) -> Result<Adapter, CliError> {
    Ok(ExternalModel::spawn(program, args, sample.task(), sample.q())?.into())
}

pub fn same_columns(a: &Sample, b: &Sample, what: &str) -> Result<(), CliError> {
    if a.feature_names() != b.feature_names() {
        return Err(CliError::Usage(format!(
            "{what} columns differ: [{}] vs [{}]",
            a.feature_names().join(", "),
            b.feature_names().join(", ")
        )));
    }
    Ok(())
}

pub fn to_value<S: serde::Serialize>(value: &S) -> Value {
    serde_json::to_value(value).expect("reports serialize to json")
}

/// Runs `command`, filling in defaults so that the returned command can be
/// replayed as is.
pub fn run(command: Command, ctx: &mut RunContext) -> Result<(Command, Value), CliError> {
    match command {
        Command::Decompose(a) => decompose::run(&a, ctx).map(|v| (Command::Decompose(a), v)),
        Command::Simulate(a) => simulate::run(a, ctx).map(|(a, v)| (Command::Simulate(a), v)),
        Command::Boost(a) => boost::run(&a, ctx).map(|v| (Command::Boost(a), v)),
        Command::Oracle(a) => oracle::run(&a, ctx).map(|v| (Command::Oracle(a), v)),
        Command::Generate(a) => generate::run(&a, ctx).map(|v| (Command::Generate(a), v)),
        Command::Replay(_) => Err(CliError::Usage("a replay cannot be nested".into())),
    }
}
