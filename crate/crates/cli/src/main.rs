mod args;
mod commands;
mod error;
mod manifest;

use std::io::Write;
use std::path::Path;

use clap::error::ErrorKind;
use clap::Parser;
use log::info;

use args::{Cli, Command, Format};
use commands::RunContext;
use error::CliError;
use manifest::{now_ms, result_digest, strip_timings, Envelope, RunManifest, Timestamps, SCHEMA};

fn configure_threads(threads: usize) -> Result<(), CliError> {
    if threads == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot set up {threads} threads: {e}")))
}

fn execute(command: Command, threads: usize) -> Result<Envelope, CliError> {
    let started = now_ms();
    let mut ctx = RunContext::default();
    info!("running {}", command.name());
    let (command, mut result) = commands::run(command, &mut ctx)?;
    let compute_ms = strip_timings(&mut result);
    let result_sha256 = result_digest(&result);
    Ok(Envelope {
        schema: SCHEMA,
        manifest: RunManifest {
            tool: "xper".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command,
            seeds: ctx.seeds,
            threads,
            inputs: ctx.inputs,
            timestamps: Timestamps {
                started_unix_ms: started,
                finished_unix_ms: now_ms(),
                compute_ms,
            },
        },
        result,
        result_sha256,
    })
}

fn replay(path: &Path, threads: usize) -> Result<Envelope, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let old: Envelope = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{} is not an xper report: {e}", path.display())))?;
    if old.schema != SCHEMA {
        return Err(CliError::Usage(format!("unsupported report schema {}", old.schema)));
    }
    for input in &old.manifest.inputs {
        let now = manifest::digest_file(Path::new(&input.path))?;
        if now.sha256 != input.sha256 {
            return Err(CliError::Compute(format!("input {} changed since the recorded run", input.path)));
        }
    }
    let new = execute(old.manifest.command.clone(), threads)?;
    if new.result_sha256 == old.result_sha256 {
        info!("replay reproduced result {}", new.result_sha256);
        Ok(new)
    } else {
        Err(CliError::Compute(format!(
            "replay produced result {} but the report recorded {}",
            new.result_sha256, old.result_sha256
        )))
    }
}

fn write_output(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Compute(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Compute(format!("cannot write to stdout: {e}")))
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads(cli.threads)?;
    let table = matches!(&cli.command, Command::Oracle(a) if a.format == Format::Table);
    let envelope = match cli.command {
        Command::Replay(a) => replay(&a.report, cli.threads)?,
        command => execute(command, cli.threads)?,
    };
    let text = if table {
        commands::render_oracle_table(&envelope.result)
    } else {
        let mut s = serde_json::to_string_pretty(&envelope).expect("reports serialize to json");
        s.push('\n');
        s
    };
    write_output(&text, cli.out.as_deref())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let line: Vec<&str> = rendered
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect();
            eprintln!("xper: error: {}", line.join(" ").trim_start_matches("error: "));
            std::process::exit(2);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("xper: error: {e}");
        std::process::exit(e.exit_code());
    }
}
