//! Vehicle trajectory forecasting with an attention-based conditional GAN.
//!
//! The pipeline: scenes are read or synthesized ([`scene`]), normalized and
//! augmented ([`preprocess`]), conditioned on map-feasible goal points
//! ([`targets`]) and on a self-attention social context
//! ([`model::encoder`]), then decoded by an LSTM generator trained against an
//! LSTM discriminator ([`model::gan`], [`train`]).

pub mod autodiff;
pub mod config;
pub mod error;
pub mod geometry;
pub mod model;
pub mod plot;
pub mod preprocess;
pub mod scene;
pub mod targets;
pub mod train;

pub use error::{Error, Result};
