use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Optional-coefficient index set of the model an error refers to, when known.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ModelLabel(pub Option<Vec<usize>>);

impl fmt::Display for ModelLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            None => f.write_str("<unlabelled>"),
            Some(idx) => {
                f.write_str("{")?;
                for (i, j) in idx.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{j}")?;
                }
                f.write_str("}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("singular design for model {model} (condition estimate {condition:e})")]
    SingularDesign { model: ModelLabel, condition: f64 },
    #[error("fit for model {model} did not converge after {iterations} iterations (score residual {residual:e})")]
    NotConverged {
        model: ModelLabel,
        iterations: usize,
        residual: f64,
    },
    #[error("fit for model {model} diverged: coefficient magnitude {magnitude:e} suggests separation")]
    Separation { model: ModelLabel, magnitude: f64 },
    #[error("model space too large: q = {q} exceeds the limit of {max}")]
    Capacity { q: usize, max: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
}

impl Error {
    /// Attach the model's index set to fit-related errors that carry a label.
    pub fn with_model(self, included: &[usize]) -> Self {
        let label = ModelLabel(Some(included.to_vec()));
        match self {
            Error::SingularDesign { condition, .. } => Error::SingularDesign {
                model: label,
                condition,
            },
            Error::NotConverged {
                iterations,
                residual,
                ..
            } => Error::NotConverged {
                model: label,
                iterations,
                residual,
            },
            Error::Separation { magnitude, .. } => Error::Separation {
                model: label,
                magnitude,
            },
            other => other,
        }
    }

    /// True for failures of the numerical routines, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularDesign { .. }
                | Error::NotConverged { .. }
                | Error::Separation { .. }
                | Error::NonFinite(_)
        )
    }
}

pub type Result<T> = core::result::Result<T, Error>;
