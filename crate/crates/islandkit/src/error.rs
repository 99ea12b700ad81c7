use thiserror::Error;

/// Errors produced by islandkit operations.
///
/// Every variant maps to a stable error-code string via [`Error::code`],
/// which the CLI emits in its machine-readable error output.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {detail}")]
    Parse { path: String, detail: String },

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("snapshot record missing: {0}")]
    MissingRecord(String),

    #[error("invalid value: {0}")]
    Validation(String),

    #[error("nonuniform time grid: {0}")]
    NonuniformGrid(String),

    #[error("waveform series have ragged lengths: {0}")]
    RaggedSeries(String),

    #[error("frequency band {lo}..{hi} Hz contains no DFT bins (bin spacing {spacing} Hz)")]
    EmptyBand { lo: f64, hi: f64, spacing: f64 },

    #[error("window {0}..{1} s lies outside the waveform span 0..{2} s")]
    WindowOutOfRange(f64, f64, f64),

    #[error("graph has zero total weight; modularity is undefined")]
    EmptyGraph,

    #[error("layer dimensions disagree: {0}")]
    DimensionMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("eigensolver failed to converge on a {n}x{n} matrix (symmetry residual {sym_residual:.3e}, max |entry| {max_abs:.3e})")]
    EigenFailure {
        n: usize,
        sym_residual: f64,
        max_abs: f64,
    },

    #[error("matrix columns are not orthonormal: ||U^T U - I|| = {0:.3e}")]
    NotOrthonormal(f64),

    #[error("k = {k} exceeds the number of points {n}")]
    TooManyClusters { k: usize, n: usize },

    #[error("k = {0} equals the bus count; splitting every bus into its own island is not an islanding solution")]
    NonIslanding(usize),

    #[error("instance has {n} vertices, above the enumeration limit {limit}")]
    SizeLimit { n: usize, limit: usize },

    #[error("no partition into {k} connected clusters exists for this topology")]
    NoConnectedPartition { k: usize },
}

impl Error {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io_error",
            Error::Parse { .. } => "parse_error",
            Error::Topology(_) => "topology_error",
            Error::MissingRecord(_) => "missing_record",
            Error::Validation(_) => "validation_error",
            Error::NonuniformGrid(_) => "nonuniform_grid",
            Error::RaggedSeries(_) => "ragged_series",
            Error::EmptyBand { .. } => "empty_band",
            Error::WindowOutOfRange(..) => "window_out_of_range",
            Error::EmptyGraph => "empty_graph",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::Config(_) => "config_error",
            Error::EigenFailure { .. } => "eigen_failure",
            Error::NotOrthonormal(_) => "not_orthonormal",
            Error::TooManyClusters { .. } => "too_many_clusters",
            Error::NonIslanding(_) => "non_islanding",
            Error::SizeLimit { .. } => "size_limit",
            Error::NoConnectedPartition { .. } => "no_connected_partition",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
