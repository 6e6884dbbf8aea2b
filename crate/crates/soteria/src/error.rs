//! Single error type shared by every module in the crate.

use crate::ids::GatewayId;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value violates a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A die coordinate falls outside the modeled chip.
    #[error("coordinate ({x} mm, {y} mm) lies outside the {edge} mm die")]
    OutOfDie { x: f64, y: f64, edge: f64 },

    /// Malformed topology, key material, or ROM contents.
    #[error("structural error: {0}")]
    Structural(String),

    /// A fabric request exceeds the metadata-wavelength budget of a
    /// reservation waveguide (2 wavelengths per destination).
    #[error("scalability limit: {0}")]
    Scalability(String),

    /// A ROM lookup missed; the store holds no key for this destination.
    #[error("no unicast key for destination {target} in this ROM")]
    KeyNotFound { target: GatewayId },

    /// Encrypting an already-encrypted packet or decrypting plaintext.
    #[error("cipher state: {0}")]
    CipherState(&'static str),

    /// A traffic trace line could not be parsed.
    #[error("trace line {line}: {msg}")]
    TraceParse { line: usize, msg: String },

    /// An experiment spec failed validation; the message names the field.
    #[error("experiment spec: {0}")]
    InvalidSpec(String),

    /// The engine saw no delivery progress for an entire cycle budget.
    #[error("no delivery progress for {budget} cycles (at cycle {cycle})")]
    Deadlock { cycle: u64, budget: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit status the CLI maps this error to: 1 for validation problems
    /// in user input, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::InvalidSpec(_)
            | Error::TraceParse { .. }
            | Error::Scalability(_)
            | Error::Structural(_) => 1,
            _ => 2,
        }
    }
}
