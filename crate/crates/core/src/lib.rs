//! Deep linear matrix factorization with automatic depth discovery.
//!
//! A signal `S` is factorized as `S ≈ X₁·X₂·…·X_k·Y_k + Z`, where each layer
//! is fitted by an ADMM solver, the number of layers and their ranks are
//! read off a rank-revealing QR of each layer's features, and a final
//! backward sweep refines the features with multiplicative updates.
//!
//! ```
//! use delmar::{decompose, generate, AdmmConfig, DecomposeOptions, SynthSpec};
//!
//! let truth = generate(&SynthSpec {
//!     m: 40,
//!     n: 120,
//!     ranks: vec![8, 3],
//!     noise_sigma: 0.0,
//!     background_density: 0.0,
//!     background_amplitude: 1.0,
//!     seed: 1,
//! })?;
//! let (stack, _traces) = decompose(&truth.s, &AdmmConfig::default(), &DecomposeOptions::new(8))?;
//! assert_eq!(stack.ranks, vec![8, 3]);
//! # Ok::<(), delmar::DelmarError>(())
//! ```

pub mod admm;
pub mod error;
pub mod io;
pub mod linalg;
pub mod mbp;
pub mod metrics;
pub mod pipeline;
pub mod rro;
pub mod synth;

pub use admm::{solve_layer, AdmmConfig, ConvergenceTrace, LayerFactor, Termination, UpdateMode};
pub use error::{DelmarError, Result};
pub use linalg::Matrix;
pub use mbp::{backpropagate, MbpState};
pub use metrics::{compare_features, split_half_reproducibility, SimilarityReport, Threshold};
pub use pipeline::{decompose, reconstruct, DecomposeOptions, LayerStack};
pub use rro::{estimate_rank, RankDecision};
pub use synth::{generate, GroundTruth, SynthSpec};
