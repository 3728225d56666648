//! Obstacle-aware ground removal and geometry coding for LiDAR frames.
//!
//! The pipeline removes ground points that carry no context for object
//! perception, compresses what remains with a simple octree geometry
//! codec, and measures what that buys in rate, object-point retention,
//! and throughput:
//!
//! * [`cloud`] — frames, oriented boxes, ground masks.
//! * [`io`] — binary frames (KITTI velodyne layout), box CSV, mask files.
//! * [`synth`] — seeded synthetic scenes for desk-scale verification.
//! * [`grid`] — 2D pillar partition with height extrema and window queries.
//! * [`pgr`] — pillar removal + restoration producing per-point keep masks.
//! * [`oracle`] — label-driven removal with box-extension restoration.
//! * [`codec`] — quantize / octree occupancy / adaptive arithmetic coding.
//! * [`eval`] — preservation reports, rate sweeps, Bjontegaard deltas,
//!   throughput benchmarks.

pub mod cloud;
pub mod codec;
pub mod error;
pub mod eval;
pub mod grid;
pub mod io;
pub mod oracle;
pub mod pgr;
pub mod synth;

pub use cloud::{points_in_box, Box3D, ClassLabel, GroundMask, PointCloud};
pub use error::{Error, Result};
pub use grid::{
    build_grid, neighborhood_min_z, pillar_chessboard_distance, GridSpec, Pillar, PillarGrid,
};
pub use pgr::{
    apply_pgr, filter_cloud, named_config, KeepMask, PgrOutput, RemovalConfig, RestoreRule,
};
