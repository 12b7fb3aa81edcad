//! Windowed multimodal transformer pipeline for surgical gesture recognition
//! and joint gesture/trajectory prediction.
//!
//! The pipeline runs over 1-second tumbling windows: a temporal-convolution
//! encoder feeds a transformer encoder that labels every observed frame, and a
//! transformer decoder predicts the next second of gestures and end-effector
//! positions from the encoder state, the observed labels and the raw fused
//! features.

pub mod cli;
pub mod data;
pub mod error;
pub mod experiment;
pub mod features;
pub mod inference;
pub mod metrics;
pub mod nn;
pub mod prediction;
pub mod recognition;
pub mod seed;

pub use error::{Error, Result};
