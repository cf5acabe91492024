use thiserror::Error;

pub type Result<T, E = SimError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid array configuration: {0}")]
    InvalidConfig(String),

    /// The W reload cadence leaves too few port slots for the X stream.
    #[error(
        "bandwidth-infeasible configuration L={rows} H={cols} P={pipe_regs}: \
         {gap_slots} gap slots per X window cannot carry {needed} X beats"
    )]
    BandwidthInfeasible { rows: usize, cols: usize, pipe_regs: usize, gap_slots: usize, needed: String },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
