//! Spray-robust LiDAR object detection post-processing.
//!
//! The crate removes spray returns from LiDAR point clouds ([`filter`]),
//! detects vehicles in the filtered cloud ([`detector`]), drops detections
//! that no radar target supports ([`gate`]) and scores the result with
//! range-binned 3D average precision ([`eval`]). [`sim`] generates
//! deterministic synthetic spray scenes that serve as ground truth for all of
//! the above, and [`io`] reads and writes every artifact.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled;
//! see [`exec`].

pub mod detector;
pub mod error;
pub mod eval;
pub mod exec;
pub mod filter;
pub mod gate;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod sim;
pub mod spatial;

pub use error::{Error, Result};
pub use exec::ExecMode;
pub use geometry::{
    bev_range, box_contains_point, box_iou_3d, pad_box, Box3D, Detection, ObjectClass, Point, PointClass,
    PointCloud, PointLabelArray, RadarTarget, RadarTargetList, ScoreArray,
};
