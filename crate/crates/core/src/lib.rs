//! Clustering of stationary time series with a Wishart mixture model over
//! per-series scatter matrices, followed by Yule-Walker estimation of one
//! autoregressive model per cluster.
//!
//! The pipeline is
//! [`features::extract_features`] → [`wmm::fit`] → [`yule_walker::assemble_armm`],
//! with [`selection`] choosing the number of groups and per-group lag,
//! [`baselines`] providing the distance- and coefficient-based competitors, and
//! [`simgen`] generating the benchmark scenarios.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod features;
pub mod output;
pub mod panel;
pub mod seed;
pub mod selection;
pub mod simgen;
pub mod special;
pub mod wmm;
pub mod yule_walker;

pub use error::{Error, ErrorKind, Result};
pub use features::{FeatureOptions, ScatterFeature, TimeSeries};
pub use special::SpdMatrix;
pub use wmm::{Init, Variant, WmmConfig, WmmFit};
pub use yule_walker::{ArMixtureModel, GroupArModel};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
