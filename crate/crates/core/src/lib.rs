//! Deep arbitrary polynomial chaos neural networks.
//!
//! Every node of a layer is a total-degree polynomial expansion of the layer's
//! input signals in an orthonormal basis built from the empirical moments of
//! those signals. The same building blocks give plain aPC expansions
//! (one layer, least-squares fit) and conventional networks with a fixed
//! `{1, x}` basis.

pub mod apc;
pub mod benchmarks;
pub mod dataset;
pub mod error;
pub mod gradients;
pub mod io;
pub mod multiindex;
pub mod network;
pub mod sampling;
pub mod trainer;

pub use apc::{raw_moments, univariate_basis, MomentSet, OrthonormalBasis1D};
pub use dataset::Dataset;
pub use error::{Error, Result, SignalLocation};
pub use multiindex::{enumerate_total_degree, eval_multivariate, term_count, MultiIndexSet};
pub use network::{Activation, BasisMode, LayerSpec, NetworkState};
pub use trainer::{fit_least_squares, train_lm, ApcExpansion, TrainingConfig, TrainingHistory};
