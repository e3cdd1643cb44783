use thiserror::Error;

pub type Result<T, E = XperError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum XperError {
    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("parse error at data row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("malformed input: {0}")]
    Structure(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("stratification infeasible: {0}")]
    StratificationInfeasible(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("singular design: column `{column}` is linearly dependent on earlier columns")]
    SingularDesign { column: String },

    #[error("perfect separation: {0}")]
    Separation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("external adapter failure: {message}{}", diagnostics_suffix(.diagnostics))]
    Adapter {
        message: String,
        diagnostics: String,
    },

    #[error("coalition {mask:#b}: {source}")]
    Coalition {
        mask: u64,
        #[source]
        source: Box<XperError>,
    },

    #[error(
        "exact enumeration over q = {q} features exceeds the limit of {limit}; \
         use the WLS estimator or set the override"
    )]
    GuardRail { q: usize, limit: usize },

    #[error("rank deficient system: {0}")]
    Rank(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("group {group} is degenerate: {message}")]
    GroupDegenerate { group: usize, message: String },

    #[error("replication {replication}: {source}")]
    Replication {
        replication: usize,
        #[source]
        source: Box<XperError>,
    },
}

fn diagnostics_suffix(diagnostics: &str) -> String {
    let trimmed = diagnostics.trim();
    if trimmed.is_empty() {
        String::new()
    } else {
        format!(" (stderr: {})", trimmed.replace('\n', " | "))
    }
}

impl XperError {
    pub(crate) fn adapter(message: impl Into<String>) -> Self {
        XperError::Adapter {
            message: message.into(),
            diagnostics: String::new(),
        }
    }

    pub(crate) fn in_coalition(self, mask: u64) -> Self {
        XperError::Coalition {
            mask,
            source: Box::new(self),
        }
    }
}
