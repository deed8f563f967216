//! Displacement transforms, straight/curve labelling, class-balanced batch
//! sampling and training-time augmentation.

mod augment;
mod displacement;
mod ransac;
mod sampler;

pub use augment::{augment, AugmentConfig};
pub use displacement::{to_displacements, DisplacementTrack};
pub use ransac::{classify_curvature, classify_points, fit_line, Curvature, CurvatureLabel, Line, RansacConfig};
pub use sampler::{split_counts, BalancedSampler, SamplerConfig, UniformSampler};
