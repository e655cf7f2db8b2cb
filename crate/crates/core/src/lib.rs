//! Inference and explanation for complex-valued neural networks.
//!
//! Five explanation methods are provided: four Wirtinger-gradient saliency
//! methods ([`explain`]) and a Shapley-based contribution method with a
//! complex-valued multiplier chain rule ([`deepcshap`]), including exact
//! contributions for magnitude max-pooling ([`maxcshap`]). Brute-force
//! references live in [`oracle`]; [`harness`] runs the axiom checks and the
//! toy evaluation experiments.

pub mod complex;
pub mod cvnn;
pub mod deepcshap;
pub mod error;
pub mod explain;
pub mod harness;
pub mod maxcshap;
pub mod method;
pub mod oracle;
pub mod wirtinger;

pub use complex::{reduce_saliency, wirtinger_from_real_parts, CTensor, Reduction, WirtingerPair, C64};
pub use cvnn::{forward, load_model, save_model, ForwardTrace, Layer, Model, Pointwise};
pub use deepcshap::{explain_deepcshap, ContributionMap, DeepCshapConfig, MultiplierState, PartialContrib};
pub use error::{Error, Result};
pub use method::Method;
pub use wirtinger::{backward, Guided, OutputTarget, Part};

/// Crate version, echoed into report headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
