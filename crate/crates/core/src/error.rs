use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("mollifier width {width} is below two lattice spacings (h = {spacing})")]
    WidthUnresolvable { width: f64, spacing: f64 },

    #[error("rescaling parameter eps = {eps} leaves the mollifier unresolved (width {width}, h = {spacing})")]
    EpsilonUnresolvable { eps: f64, width: f64, spacing: f64 },

    #[error("input field contains non-finite values")]
    NonFiniteInput,

    #[error("state became non-finite at step {step} (max |u| before failure {max_abs})")]
    NonFiniteState { step: usize, max_abs: f64 },

    #[error("trajectory spacing {spacing} exceeds the scheme step {dt}")]
    TrajectoryTooCoarse { spacing: f64, dt: f64 },

    #[error("need at least two snapshots spanning [{from}, {to}]")]
    InsufficientSnapshots { from: f64, to: f64 },

    #[error("trajectories do not share snapshot times")]
    SnapshotMismatch,

    #[error("time {0} is not a stored snapshot")]
    TimeNotInTrajectory(f64),

    #[error("test function takes negative values")]
    NegativeTestFunction,

    #[error("no registered statistic named `{0}`")]
    MissingSnapshot(String),

    #[error("driving noise was not stored for this ensemble")]
    NoiseNotStored,

    #[error("inner time step {step} is coarser than width^2/2 = {limit}")]
    QuadratureUnderResolved { step: f64, limit: f64 },

    #[error("pairing count overflows 64-bit integers for k = {0}")]
    Overflow(u32),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("replica {replica} (seed {seed}) failed: {source}")]
    Replica {
        replica: u64,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed field record: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no manifest in {0}; the directory is incomplete")]
    MissingManifest(std::path::PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by the requested parameters rather than by a run.
    pub fn is_config(&self) -> bool {
        match self {
            Error::InvalidGrid(_)
            | Error::WidthUnresolvable { .. }
            | Error::EpsilonUnresolvable { .. }
            | Error::QuadratureUnderResolved { .. }
            | Error::InvalidParam(_)
            | Error::Config(_)
            | Error::MissingManifest(_) => true,
            Error::Replica { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
