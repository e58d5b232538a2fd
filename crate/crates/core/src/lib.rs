//! Core-set minibatch selection for GAN training.
//!
//! Draw an oversized batch from the prior (or from a cached embedding pool),
//! then keep the `k` points chosen by greedy k-center so the small batch
//! covers the large one. The crate also carries a toy GAN on 2-D Gaussian
//! mixtures to measure the effect on mode dropping, the metrics that score
//! it, and the `smallgan` command-line tool.

mod binio;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod projection;
pub mod sampling;
pub mod toygan;

pub use error::{Error, Result};
pub use geometry::{
    coverage_radius, exact_kcenter, greedy_coreset, pairwise_distance, CoresetResult, PointSet,
};
pub use metrics::{estimate_gaussian, gaussian_fid, mode_report, GaussianStats, ModeReport};
pub use projection::{load_cache, make_projection, project, save_cache, DataPool, EmbeddingCache, ProjectionMatrix};
pub use sampling::{CoresetMode, PriorSpec, Sampler, SamplerConfig};
