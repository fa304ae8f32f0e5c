//! AugBoost: gradient-boosted trees over BLE RSSI fingerprints, with the
//! feature space periodically re-augmented by small neural networks (or
//! random projections) during boosting. Built for grid-cell indoor
//! positioning, but the boosting core is plain multiclass log-loss GBDT
//! and works on any tabular data.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below pin the common `f64` and `f32` instantiations.

pub mod ann;
pub mod augment;
pub mod boost;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod grid;
pub mod matrix;
pub mod scalar;
pub mod tree;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use grid::GridMap;
pub use scalar::Scalar;

pub type Matrix64 = matrix::Matrix<f64>;
pub type Dataset64 = dataset::FingerprintDataset<f64>;
pub type Tree64 = tree::RegressionTree<f64>;
pub type Mlp64 = ann::Mlp<f64>;
pub type Augmenter64 = augment::Augmenter<f64>;
pub type Model64 = boost::BoostModel<f64>;

pub type Matrix32 = matrix::Matrix<f32>;
pub type Dataset32 = dataset::FingerprintDataset<f32>;
pub type Tree32 = tree::RegressionTree<f32>;
pub type Mlp32 = ann::Mlp<f32>;
pub type Augmenter32 = augment::Augmenter<f32>;
pub type Model32 = boost::BoostModel<f32>;
