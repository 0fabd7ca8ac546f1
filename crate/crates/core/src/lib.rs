//! Modality-aware graph diffusion recommender.
//!
//! The crate trains a denoising diffusion model over per-user interaction
//! vectors for each item modality, rebuilds top-k modality-aware user-item
//! graphs from the denoised scores, fuses the modality views through graph
//! aggregation and cross-modal contrastive learning, and optimizes the joint
//! ranking objective end to end.
//!
//! All numeric kernels are generic over the scalar type: `f32` is the
//! training precision, `f64` the verification precision used by the test
//! oracles. Concrete aliases for both live at the crate root.

pub mod dataio;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod graph;
pub mod modality;
pub mod numerics;
pub mod ssl;
pub mod training;

pub use error::{Error, Result};
pub use numerics::dense::DenseMatrix;
pub use numerics::params::ParamStore;
pub use numerics::rng::SeededRng;
pub use numerics::scalar::Scalar;
pub use numerics::sparse::SparseMatrix;

/// Training-precision dense matrix.
pub type Mat32 = DenseMatrix<f32>;
/// Verification-precision dense matrix.
pub type Mat64 = DenseMatrix<f64>;
/// Training-precision sparse operator.
pub type Csr32 = SparseMatrix<f32>;
/// Verification-precision sparse operator.
pub type Csr64 = SparseMatrix<f64>;
/// Training-precision parameter store.
pub type Params32 = ParamStore<f32>;
/// Verification-precision parameter store.
pub type Params64 = ParamStore<f64>;
