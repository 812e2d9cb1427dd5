use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Estimation,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("parse error at row {row}, column `{column}`: cannot read {value:?} as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("unbalanced panel: {} missing (unit, period) cell(s), first: {}", .missing.len(), format_cells(.missing))]
    Unbalanced { missing: Vec<(String, i64)> },

    #[error("duplicate row for unit `{unit}` in period {period}")]
    Duplicate { unit: String, period: i64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_cells(cells: &[(String, i64)]) -> String {
    cells
        .iter()
        .take(5)
        .map(|(u, p)| format!("({u}, {p})"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::UnknownColumn(_) | Error::Json(_) => ErrorKind::Config,
            Error::Parse { .. }
            | Error::Unbalanced { .. }
            | Error::Duplicate { .. }
            | Error::Domain(_)
            | Error::Io(_)
            | Error::Csv(_) => ErrorKind::Data,
            Error::InvalidArgument(_) | Error::Estimation(_) => ErrorKind::Estimation,
        }
    }
}
