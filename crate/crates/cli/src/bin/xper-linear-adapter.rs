//! Reference adapter for `exec:` models: a fixed linear index behind the
//! line protocol, optionally passed through a probit or logit link.
//!
//! Usage: `xper-linear-adapter --intercept 0.1 --coef 0.5,-0.2 [--link probit]`

use std::io::{self, BufRead, BufWriter, Write};

use clap::{Parser, ValueEnum};
use xper::scalar::{normal_cdf, sigmoid};

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Link {
    Identity,
    Probit,
    Logit,
}

#[derive(Parser, Debug)]
#[command(name = "xper-linear-adapter", version)]
struct Args {
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    intercept: f64,
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    coef: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Link::Identity)]
    link: Link,
}

fn predict(args: &Args, line: &str) -> Result<f64, String> {
    let mut eta = args.intercept;
    let mut count = 0;
    for (k, cell) in line.split(',').enumerate() {
        let x: f64 = cell.trim().parse().map_err(|_| format!("bad number `{cell}`"))?;
        let b = args.coef.get(k).ok_or("too many columns")?;
        eta += x * b;
        count += 1;
    }
    if count != args.coef.len() {
        return Err(format!("expected {} columns, got {count}", args.coef.len()));
    }
    Ok(match args.link {
        Link::Identity => eta,
        Link::Probit => normal_cdf(eta),
        Link::Logit => sigmoid(eta),
    })
}

fn serve(args: &Args) -> io::Result<()> {
    let stdin = io::stdin();
    let mut lines = stdin.lock().lines();
    let mut out = BufWriter::new(io::stdout().lock());
    while let Some(line) = lines.next() {
        let line = line?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["HELLO", "1", _task, q] => {
                if q.parse::<usize>().ok() != Some(args.coef.len()) {
                    writeln!(out, "ERR expected {} features", args.coef.len())?;
                } else if args.link == Link::Identity {
                    writeln!(out, "OK score")?;
                } else {
                    writeln!(out, "OK probability")?;
                }
            }
            ["PREDICT", m] => {
                let m: usize = m.parse().map_err(|_| io::Error::other("bad batch size"))?;
                let mut values = Vec::with_capacity(m);
                let mut failure = None;
                for _ in 0..m {
                    let row = lines.next().ok_or_else(|| io::Error::other("truncated batch"))??;
                    match predict(args, &row) {
                        Ok(v) => values.push(v),
                        Err(e) => failure = failure.or(Some(e)),
                    }
                }
                match failure {
                    Some(e) => writeln!(out, "ERR {e}")?,
                    None => {
                        for v in values {
                            writeln!(out, "{v}")?;
                        }
                    }
                }
            }
            _ => writeln!(out, "ERR unknown request `{line}`")?,
        }
        out.flush()?;
    }
    Ok(())
}

fn main() {
    let args = Args::parse();
    if let Err(e) = serve(&args) {
        eprintln!("xper-linear-adapter: {e}");
        std::process::exit(1);
    }
}
