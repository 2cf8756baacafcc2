//! Linear keypoint extraction, description and matching for rotating LiDAR scans.
//!
//! The pipeline runs in four stages: [`keypoints`] finds vertical edge
//! clusters, [`descriptor`] encodes the neighborhood of each cluster centroid,
//! [`matcher`] pairs descriptors between two scans, and [`registration`]
//! solves the rigid transform. [`synth`] and [`bench`] provide synthetic
//! scenes with ground truth and latency measurement.

pub mod bench;
pub mod descriptor;
pub mod keypoints;
pub mod matcher;
pub mod pipeline;
pub mod registration;
pub mod scan_io;
pub mod synth;
