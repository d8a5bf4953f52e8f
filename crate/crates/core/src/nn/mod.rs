//! Small tape-based autograd engine and the multi-scale dilated TCN built on it.

mod graph;
mod optim;
mod params;
mod tcn;
mod tensor;
mod train;
mod weights;

pub use graph::{dilated_conv1d, gelu, Tape, Var};
pub use optim::{cosine_lr, AdamW};
pub use params::Params;
pub use tcn::{receptive_field, BlockConfig, Tcn, TcnConfig};
pub use tensor::{sigmoid, Tensor};
pub use train::{fit, split_by_signer, EpochLog, SignerSplit, TrainOutcome, TrainRecipe};
pub use weights::{load_weights, save_weights, Manifest, ModelFingerprint, TensorEntry, WeightsBundle};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown parameter {0:?}")]
    MissingParam(String),
    #[error("architecture fingerprint mismatch: manifest {manifest}, config hashes to {computed}")]
    Fingerprint { manifest: String, computed: String },
    #[error("corrupt weights: {0}")]
    Corrupt(String),
    #[error("model kind mismatch: expected {expected}, found {found}")]
    Kind { expected: String, found: String },
    #[error("training failed: {0}")]
    Training(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
