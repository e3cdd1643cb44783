use serde_json::{json, Value};
use xper::data::{simulate_latent_probit, simulate_linear};
use xper::experiments::{simulate_two_regime, TwoRegimeDgp};
use xper::{write_csv, Sample};

use super::RunContext;
use crate::args::{GenerateArgs, GenerateKind};
use crate::error::CliError;
use crate::manifest::digest_file;

fn with_names(sample: Sample) -> Result<Sample, CliError> {
    let names = (1..=sample.q()).map(|j| format!("x{j}")).collect();
    Ok(sample.with_feature_names(names)?.with_target_name("y"))
}

pub fn run(args: &GenerateArgs, ctx: &mut RunContext) -> Result<Value, CliError> {
    if args.n < 2 {
        return Err(CliError::Usage("--n must be at least 2".into()));
    }
    let beta = if args.beta.is_empty() {
        match args.kind {
            GenerateKind::TwoRegime => TwoRegimeDgp::default().beta(),
            _ => vec![0.05, 0.5, 0.5, 0.0],
        }
    } else {
        args.beta.clone()
    };
    if beta.len() < 2 {
        return Err(CliError::Usage("--beta needs an intercept and at least one slope".into()));
    }
    let q = beta.len() - 1;
    let cov = if args.cov.is_empty() { vec![1.0; q] } else { args.cov.clone() };
    if cov.len() != q {
        return Err(CliError::Usage(format!("--cov has {} values for {q} slopes", cov.len())));
    }
    ctx.seeds.push(args.seed);

    let sample = match args.kind {
        GenerateKind::Linear => simulate_linear(beta[0], &beta[1..], &cov, args.noise_sd, args.n, args.seed)?,
        GenerateKind::Probit => simulate_latent_probit(&beta, &cov, args.n, args.seed)?,
        GenerateKind::TwoRegime => {
            if cov.iter().any(|&v| v != 1.0) {
                return Err(CliError::Usage("the two-regime design uses unit variances".into()));
            }
            simulate_two_regime(&TwoRegimeDgp::from_beta(&beta)?, args.n, args.seed)?.0
        }
    };
    let sample = with_names(sample)?;
    write_csv(&sample, &args.csv)?;
    let digest = digest_file(&args.csv)?;
    Ok(json!({
        "path": digest.path,
        "rows": sample.n(),
        "features": sample.feature_names(),
        "task": sample.task(),
        "sha256": digest.sha256,
    }))
}
