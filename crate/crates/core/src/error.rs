use alloc::string::String;

/// Errors raised by the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("attribute arity mismatch: expected {expected}, got {actual}")]
    Arity { expected: usize, actual: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("unknown category group `{0}`")]
    UnknownGroup(String),
    #[error("non-finite {what} at step {step}: {detail}")]
    Diverged { what: String, step: u64, detail: String },
    #[error("degenerate attribute `{0}`: only one class present in oracle training data")]
    DegenerateAttribute(String),
    #[error("oracle under-trained: attribute `{name}` accuracy {accuracy:.4} < {required:.2}")]
    OracleUnderTrained { name: String, accuracy: f64, required: f64 },
    #[error("invalid edit: {0}")]
    Edit(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
