use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("unknown reference: {0}")]
    Reference(String),

    #[error("ill-conditioned transfer matrix at omega = {omega}: condition estimate {condition:.3e}")]
    IllConditioned { omega: f64, condition: f64 },

    #[error("singular transfer matrix at omega = {omega} (zero pivot in column {column})")]
    Singular { omega: f64, column: usize },

    #[error("inversion residual {residual:.3e} exceeds bound {bound:.3e} at omega = {omega}")]
    Residual { omega: f64, residual: f64, bound: f64 },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("block index ({s}, {l}) outside truncation [-{k}, {k}]")]
    IndexOutOfRange { s: i64, l: i64, k: usize },

    #[error("heterodyne beat violates the resonance condition: 2*Omega/omega_d = {ratio} is not an integer; frequency components only correlate when shifted by integer multiples of omega_d")]
    Resonance { ratio: f64 },

    #[error("insufficient spectral resolution: {0}")]
    Resolution(String),

    #[error("integration unstable at step {step} (|c| = {norm:.3e}); reduce dt")]
    Unstable { step: usize, norm: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation { field: field.into(), message: message.into() }
    }

    /// True for errors produced by numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IllConditioned { .. } | Error::Singular { .. } | Error::Residual { .. } | Error::Unstable { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
