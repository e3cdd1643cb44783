use std::fmt;

use xper::XperError;

/// A failed run. Usage errors exit with 2, computation errors with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Compute(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            CliError::Usage(m) | CliError::Compute(m) => m,
        };
        // Diagnostics stay on one line.
        f.write_str(&msg.replace('\n', " | "))
    }
}

fn is_usage(e: &XperError) -> bool {
    match e {
        XperError::Config(_) | XperError::MissingColumn(_) | XperError::GuardRail { .. } | XperError::Range(_) => true,
        XperError::Coalition { source, .. } | XperError::Replication { source, .. } => is_usage(source),
        _ => false,
    }
}

impl From<XperError> for CliError {
    fn from(e: XperError) -> Self {
        if is_usage(&e) {
            CliError::Usage(e.to_string())
        } else {
            CliError::Compute(e.to_string())
        }
    }
}
