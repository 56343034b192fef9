//! Learning pixel-level motion between pairs of binary images.
//!
//! A factored three-way Boltzmann machine conditions on a previous image and
//! models the current one; its hidden units gate input-output correlations
//! through a shared factor basis. The crate covers the full pipeline:
//! synthetic data generation ([`datagen`]), contrastive-divergence training
//! ([`training`]), max-flow inference and analogy reconstruction ([`flow`]),
//! and global-motion estimation with motion-violation segmentation
//! ([`motion`]).

pub mod datagen;
pub mod error;
pub mod flow;
pub mod idx;
pub mod image;
pub mod model;
pub mod motion;
pub mod netpbm;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
pub use image::{Image, PixelIndex};
pub use model::FactoredGrbm;
