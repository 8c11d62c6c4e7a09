use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// Variants are grouped by the stage that raises them; [`Error::category`]
/// folds them into the three classes the command line reports.
#[derive(Debug, Error)]
pub enum Error {
    // ingestion and panel construction
    #[error("input contains no data rows")]
    EmptyInput,
    #[error("required column `{0}` is missing")]
    MissingColumn(String),
    #[error("duplicate observation for entity `{entity}` in year {year}")]
    DuplicateKey { entity: String, year: i64 },
    #[error("cannot parse key field `{field}` value `{value}` on line {line}")]
    InvalidKey {
        field: String,
        value: String,
        line: usize,
    },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("negative vote count for entity `{entity}` in year {year}")]
    NegativeVotes { entity: String, year: i64 },
    #[error("indicator column `{column}` contains non-binary value {value}")]
    NonBinaryIndicator { column: String, value: f64 },
    #[error("column `{column}` is infinite for entity `{entity}` in year {year}")]
    InfiniteValue {
        column: String,
        entity: String,
        year: i64,
    },

    // fixed effects and least squares
    #[error("estimation sample is empty")]
    EmptySample,
    #[error("alternating demeaning did not converge within {iterations} sweeps")]
    NoConvergence { iterations: usize },
    #[error("design matrix has no columns or no rows")]
    EmptyDesign,
    #[error("design has {rows} rows and {columns} columns")]
    DimensionMismatch { rows: usize, columns: usize },
    #[error("every design column is aliased")]
    AllColumnsAliased,
    #[error("cluster-robust covariance needs at least two clusters")]
    SingleCluster,
    #[error("cluster id missing for estimation row {0}")]
    MissingClusterId(usize),
    #[error("restriction variance matrix is singular")]
    SingularRestrictionVariance,
    #[error("fit has no covariance matrix attached")]
    MissingCovariance,
    #[error("coefficient `{0}` is absent or aliased")]
    MissingCoefficient(String),

    // threshold search
    #[error("regime {regime} has fewer than two clusters at threshold {gamma}")]
    EmptyRegime { regime: &'static str, gamma: f64 },
    #[error("threshold grid has {found} candidates, need at least {needed}")]
    DegenerateGrid { found: usize, needed: usize },
    #[error("SSR profile is empty")]
    EmptyProfile,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    // binned scatter
    #[error("{found} observations cannot fill {bins} bins")]
    TooFewObservations { found: usize, bins: usize },

    // simulation
    #[error("negative monetary value {0}")]
    NegativeValue(f64),
    #[error("invalid simulation config: {0}")]
    ConfigInvalid(String),
    #[error("panel with {rows} rows exceeds the indicator-regression limit of {limit}")]
    TooLargeForOracle { rows: usize, limit: usize },

    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse error class, used for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Data,
    Numerical,
    Usage,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            NoConvergence { .. }
            | EmptyDesign
            | AllColumnsAliased
            | SingleCluster
            | SingularRestrictionVariance
            | MissingCovariance
            | MissingCoefficient(_)
            | EmptyRegime { .. }
            | DegenerateGrid { .. }
            | EmptyProfile
            | DimensionMismatch { .. } => ErrorCategory::Numerical,
            InvalidArgument(_) | ConfigInvalid(_) => ErrorCategory::Usage,
            _ => ErrorCategory::Data,
        }
    }

    /// Short machine-readable variant name.
    pub fn kind(&self) -> &'static str {
        use Error::*;
        match self {
            EmptyInput => "EmptyInput",
            MissingColumn(_) => "MissingColumn",
            DuplicateKey { .. } => "DuplicateKey",
            InvalidKey { .. } => "InvalidKey",
            UnknownVariable(_) => "UnknownVariable",
            NegativeVotes { .. } => "NegativeVotes",
            NonBinaryIndicator { .. } => "NonBinaryIndicator",
            InfiniteValue { .. } => "InfiniteValue",
            EmptySample => "EmptySample",
            NoConvergence { .. } => "NoConvergence",
            EmptyDesign => "EmptyDesign",
            DimensionMismatch { .. } => "DimensionMismatch",
            AllColumnsAliased => "AllColumnsAliased",
            SingleCluster => "SingleCluster",
            MissingClusterId(_) => "MissingClusterId",
            SingularRestrictionVariance => "SingularRestrictionVariance",
            MissingCovariance => "MissingCovariance",
            MissingCoefficient(_) => "MissingCoefficient",
            EmptyRegime { .. } => "EmptyRegime",
            DegenerateGrid { .. } => "DegenerateGrid",
            EmptyProfile => "EmptyProfile",
            InvalidArgument(_) => "InvalidArgument",
            TooFewObservations { .. } => "TooFewObservations",
            NegativeValue(_) => "NegativeValue",
            ConfigInvalid(_) => "ConfigInvalid",
            TooLargeForOracle { .. } => "TooLargeForOracle",
            Csv(_) => "Csv",
            Io(_) => "Io",
            Json(_) => "Json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
