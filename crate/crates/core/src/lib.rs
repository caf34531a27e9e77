//! Lidar point-cloud quality scoring.
//!
//! A frame is projected onto an azimuth-elevation grid; each cell gets the
//! Moran's I spatial autocorrelation of its ranges, scaled by a multiplier
//! that grows as the cell's mean intensity falls below a reference. The frame
//! score is the average over all cells, with empty cells counting as 0.
//!
//! ```
//! use pcq_core::{project_frame, frame_score, GridConfig, IntensityParams, PolarPoint, SensorProfile, WeightScheme};
//!
//! let profile = SensorProfile::lidar2();
//! let points = vec![PolarPoint::new(10.0, 0.0, 0.0, 0.3).unwrap()];
//! let grid = project_frame(&points, &profile, GridConfig::new(8, 16).unwrap());
//! let s = frame_score(&grid, WeightScheme::default(), IntensityParams::default());
//! assert!((s.score - (-1.0 / 128.0)).abs() < 1e-12);
//! ```

pub mod engine;
pub mod grid;
pub mod io;
pub mod metric;
pub mod report;
pub mod synth;

pub use engine::{Engine, ExecPolicy, StreamItem, StreamSetup, Workers};
pub use grid::{
    frame_score, mean_range_variance, project_frame, unweighted_frame_score, ConfigError, FrameGrid, FrameScore,
    GridConfig, SensorProfile,
};
pub use io::{FrameFormat, FrameRecord, IoError};
pub use metric::{
    intensity_multiplier, pairwise_weight, range_variance, spatial_autocorrelation, weighted_cell_score, CellScore,
    IntensityParams, MetricError, PointSet, PolarPoint, WeightScheme,
};
