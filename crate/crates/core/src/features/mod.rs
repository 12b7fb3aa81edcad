//! Modality selection, fusion and the temporal-convolution encoder.

pub mod selection;
pub mod tcn;

pub use selection::{fuse, FeatureSelection, Modality};
pub use tcn::{tcn_encode, TcnCache, TcnConfig, TcnEncoder};
