use thiserror::Error;

/// Errors produced anywhere in the simulation, analysis or oracle code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("numerical abort at step {step}, bead {bead}: {message}")]
    Numerical {
        step: u64,
        bead: usize,
        message: String,
    },

    #[error("sign collapse: mean weight {mean:e} is within two standard errors ({stderr:e}) of zero")]
    SignCollapse { mean: f64, stderr: f64 },

    #[error(
        "no overlap between the two ensembles (Fermi averages {oo_mean:e} and {connected_mean:e}); \
         bias one or both legs with metadynamics"
    )]
    NoOverlap { oo_mean: f64, connected_mean: f64 },

    #[error("fermionic partition function is not positive (Z_O/Z_oo = {ratio})")]
    NonPositiveFermion { ratio: f64 },

    #[error("exact diagonalization not converged at cutoff {cutoff}: last {last} meV, previous {previous} meV")]
    NotConverged {
        cutoff: usize,
        last: f64,
        previous: f64,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
