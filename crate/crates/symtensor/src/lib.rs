//! Symmetric tensors stored as fusion-tree decompositions.
//!
//! Tensors invariant under SU(2) (or an Abelian charge system) are kept as a
//! set of degeneracy blocks, one per fusion-consistent sector path of a
//! fusion tree. Every primitive operation (recoupling, permutation, fusion,
//! splitting, contraction) acts on those blocks through precomputed sparse
//! maps; a naive dense implementation lives alongside as a test oracle.

pub mod bench;
pub mod block_linalg;
pub mod charge;
pub mod dense;
pub mod fusion_tree;
pub mod gamma;
pub mod models;
pub mod rep_space;
pub mod su2;
pub mod sym_tensor;
pub mod verify;

pub use block_linalg::BlockDiagMatrix;
pub use charge::{Charge, ChargeSystem};
pub use dense::DenseTensor;
pub use fusion_tree::{FusionTree, SectorPath};
pub use gamma::{GammaCache, GammaMap};
pub use rep_space::{FuseMap, RepSpace};
pub use sym_tensor::{Direction, SymTensor};

/// Version tag written into every JSON document this crate produces.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid space: {0}")]
    InvalidSpace(String),
    #[error("charge systems differ: {0} vs {1}")]
    SystemMismatch(ChargeSystem, ChargeSystem),
    #[error("operation requires the su2 charge system")]
    NotSu2,
    #[error("dense realization with {0} entries exceeds the oracle limit")]
    TooLarge(usize),
    #[error("invalid fusion tree: {0}")]
    InvalidTree(String),
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("structure mismatch: {0}")]
    Structure(String),
    #[error("input is not invariant (relative residual {0:.3e})")]
    NotInvariant(f64),
    #[error("direction mismatch: {0}")]
    Direction(String),
    #[error("unsupported spin network: {0}")]
    UnsupportedNetwork(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("configuration error at {path}: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
