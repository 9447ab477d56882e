//! Clustering of daily electricity load curves through community detection.
//!
//! The pipeline turns household-day load curves into a weighted
//! nearest-neighbour network under banded DTW distance, partitions it with a
//! resolution-parameterised Louvain search, and summarises each community by a
//! DTW barycenter. A K-medoids baseline, six cluster-validity indices and a
//! multi-layer profile directory built from a resolution sweep complete the
//! toolkit.
//!
//! ```
//! use loadnet_core::dtw::{dtw_distance, DtwParams};
//!
//! let x = [0.1, 0.2, 0.7];
//! let d = dtw_distance(&x, &x, DtwParams::default()).unwrap();
//! assert_eq!(d, 0.0);
//! ```

pub mod error;
pub mod fmt;
pub mod ingest;
pub mod dtw;
pub mod netbuild;
pub mod community;
pub mod centers;
pub mod validity;
pub mod baseline;
pub mod synth;
pub mod directory;

pub use error::{Error, Result};
