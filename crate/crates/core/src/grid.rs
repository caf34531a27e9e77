//! Azimuth-elevation image grid and the grid-averaged frame score.
//!
//! Cells are stored row-major: row `i` indexes elevation bins from the bottom
//! of the field of view, column `j` indexes azimuth bins from the start
//! azimuth. The frame score divides by `V·H` whether or not a cell is empty.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

use crate::engine::{Engine, ExecPolicy};
use crate::metric::{
    normalize_azimuth, range_variance, CellScore, IntensityParams, PointSet, PolarPoint,
    WeightScheme, DEFAULT_GAMMA_REF,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid sensor profile: {0}")]
    Profile(String),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("unknown sensor profile {0:?} (expected lidar1 or lidar2)")]
    UnknownProfile(String),
}

/// Field of view, nominal scan resolution and reference intensity of a sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorProfile {
    name: String,
    azimuth_start: f64,
    azimuth_span: f64,
    elevation_min: f64,
    elevation_max: f64,
    gamma_ref: f64,
    rows: usize,
    cols: usize,
}

impl SensorProfile {
    /// `azimuth_start` is wrapped into `[0, 360)`; the azimuth field of view
    /// is `[start, start + span)` modulo 360.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        azimuth_start: f64,
        azimuth_span: f64,
        elevation_min: f64,
        elevation_max: f64,
        gamma_ref: f64,
        rows: usize,
        cols: usize,
    ) -> Result<Self, ConfigError> {
        let all_finite = [azimuth_start, azimuth_span, elevation_min, elevation_max, gamma_ref]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(ConfigError::Profile("non-finite field".into()));
        }
        if !(azimuth_span > 0.0 && azimuth_span <= 360.0) {
            return Err(ConfigError::Profile(format!(
                "azimuth span {azimuth_span} must lie in (0, 360]"
            )));
        }
        if elevation_max <= elevation_min {
            return Err(ConfigError::Profile(format!(
                "elevation span [{elevation_min}, {elevation_max}] is empty"
            )));
        }
        if !(gamma_ref > 0.0 && gamma_ref <= 1.0) {
            return Err(ConfigError::Profile(format!("gamma_ref {gamma_ref} must lie in (0, 1]")));
        }
        if rows == 0 || cols == 0 {
            return Err(ConfigError::Profile("scan resolution must be at least 1x1".into()));
        }
        Ok(Self {
            name: name.into(),
            azimuth_start: normalize_azimuth(azimuth_start),
            azimuth_span,
            elevation_min,
            elevation_max,
            gamma_ref,
            rows,
            cols,
        })
    }

    /// 905 nm surround-view sensor, 360° x 40°.
    pub fn lidar1() -> Self {
        Self::new("lidar1", 0.0, 360.0, -25.0, 15.0, DEFAULT_GAMMA_REF, 64, 1024)
            .expect("built-in profile")
    }

    /// 1550 nm forward-looking sensor, 120° x 25° centered on azimuth 0.
    pub fn lidar2() -> Self {
        Self::new("lidar2", -60.0, 120.0, -12.5, 12.5, DEFAULT_GAMMA_REF, 128, 512)
            .expect("built-in profile")
    }

    pub fn builtin(name: &str) -> Result<Self, ConfigError> {
        match name {
            "lidar1" => Ok(Self::lidar1()),
            "lidar2" => Ok(Self::lidar2()),
            other => Err(ConfigError::UnknownProfile(other.to_string())),
        }
    }

    /// Same field of view with a different scan resolution.
    pub fn with_resolution(mut self, rows: usize, cols: usize) -> Result<Self, ConfigError> {
        if rows == 0 || cols == 0 {
            return Err(ConfigError::Profile("scan resolution must be at least 1x1".into()));
        }
        self.rows = rows;
        self.cols = cols;
        Ok(self)
    }

    pub fn with_gamma_ref(mut self, gamma_ref: f64) -> Result<Self, ConfigError> {
        if !(gamma_ref > 0.0 && gamma_ref <= 1.0) {
            return Err(ConfigError::Profile(format!("gamma_ref {gamma_ref} must lie in (0, 1]")));
        }
        self.gamma_ref = gamma_ref;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn azimuth_start(&self) -> f64 {
        self.azimuth_start
    }

    pub fn azimuth_span(&self) -> f64 {
        self.azimuth_span
    }

    pub fn elevation_min(&self) -> f64 {
        self.elevation_min
    }

    pub fn elevation_max(&self) -> f64 {
        self.elevation_max
    }

    pub fn elevation_span(&self) -> f64 {
        self.elevation_max - self.elevation_min
    }

    pub fn full_circle(&self) -> bool {
        self.azimuth_span >= 360.0
    }

    pub fn gamma_ref(&self) -> f64 {
        self.gamma_ref
    }

    /// Scan rows `m` of the raw array layout.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Scan columns `n` of the raw array layout.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Default image grid for this field of view: 8x32 for full-circle
    /// sensors, 8x16 otherwise.
    pub fn default_grid(&self) -> GridConfig {
        if self.full_circle() {
            GridConfig { rows: 8, cols: 32 }
        } else {
            GridConfig { rows: 8, cols: 16 }
        }
    }

    /// Offset of `azimuth` from the start of the field of view, in `[0, 360)`.
    pub fn azimuth_offset(&self, azimuth: f64) -> f64 {
        normalize_azimuth(azimuth - self.azimuth_start)
    }

    /// Whether a direction lies inside the field of view (elevation closed).
    pub fn contains(&self, azimuth: f64, elevation: f64) -> bool {
        (self.full_circle() || self.azimuth_offset(azimuth) < self.azimuth_span)
            && elevation >= self.elevation_min
            && elevation <= self.elevation_max
    }
}

/// Grid dimensions: `rows` (V) elevation bins by `cols` (H) azimuth bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridConfig {
    rows: usize,
    cols: usize,
}

impl GridConfig {
    pub fn new(rows: usize, cols: usize) -> Result<Self, ConfigError> {
        if rows == 0 || cols == 0 {
            return Err(ConfigError::Grid(format!("{rows}x{cols} has no cells")));
        }
        Ok(Self { rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }
}

impl fmt::Display for GridConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

impl FromStr for GridConfig {
    type Err = ConfigError;

    /// Parses `VxH`, e.g. `8x32`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (v, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| ConfigError::Grid(format!("{s:?} is not of the form VxH")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| ConfigError::Grid(format!("{s:?} is not of the form VxH")))
        };
        Self::new(parse(v)?, parse(h)?)
    }
}

/// Bin index of `offset` in `[0, span)` split into `bins`; values outside are
/// clamped to the edge bins.
fn bin(offset: f64, span: f64, bins: usize) -> usize {
    let idx = (offset / span * bins as f64).floor();
    if idx <= 0.0 {
        0
    } else {
        (idx as usize).min(bins - 1)
    }
}

/// A frame's valid points bucketed into the image grid.
#[derive(Debug, Clone)]
pub struct FrameGrid {
    cells: Vec<PointSet>,
    config: GridConfig,
    profile: SensorProfile,
    dropped_invalid: usize,
    frame_id: u64,
}

impl FrameGrid {
    /// Elevation bin of a point. Below/above the field of view clamps to the
    /// bottom/top row.
    pub fn row_of(profile: &SensorProfile, config: GridConfig, elevation: f64) -> usize {
        bin(elevation - profile.elevation_min, profile.elevation_span(), config.rows)
    }

    /// Azimuth bin of a point. Outside a partial field of view the point goes
    /// to whichever edge column is angularly closer.
    pub fn col_of(profile: &SensorProfile, config: GridConfig, azimuth: f64) -> usize {
        let offset = profile.azimuth_offset(azimuth);
        let span = profile.azimuth_span;
        if profile.full_circle() || offset < span {
            return bin(offset, span, config.cols);
        }
        let past_end = offset - span;
        let before_start = 360.0 - offset;
        if past_end <= before_start {
            config.cols - 1
        } else {
            0
        }
    }

    pub fn cell(&self, row: usize, col: usize) -> &PointSet {
        &self.cells[row * self.config.cols + col]
    }

    /// Cells in row-major order.
    pub fn cells(&self) -> &[PointSet] {
        &self.cells
    }

    pub fn config(&self) -> GridConfig {
        self.config
    }

    pub fn profile(&self) -> &SensorProfile {
        &self.profile
    }

    pub fn dropped_invalid(&self) -> usize {
        self.dropped_invalid
    }

    pub fn frame_id(&self) -> u64 {
        self.frame_id
    }

    pub fn with_frame_id(mut self, frame_id: u64) -> Self {
        self.frame_id = frame_id;
        self
    }

    pub fn valid_points(&self) -> usize {
        self.cells.iter().map(PointSet::len).sum()
    }

    pub fn non_empty_cells(&self) -> usize {
        self.cells.iter().filter(|c| !c.is_empty()).count()
    }
}

/// Buckets a frame into the image grid. Range-0 sentinels are counted and
/// dropped; out-of-view points are clamped into the nearest edge cell.
pub fn project_frame(frame: &[PolarPoint], profile: &SensorProfile, config: GridConfig) -> FrameGrid {
    let mut cells = vec![PointSet::default(); config.cell_count()];
    let mut dropped_invalid = 0;
    for p in frame {
        if !p.is_valid() {
            dropped_invalid += 1;
            continue;
        }
        let row = FrameGrid::row_of(profile, config, p.elevation());
        let col = FrameGrid::col_of(profile, config, p.azimuth());
        cells[row * config.cols + col].push_valid(*p);
    }
    FrameGrid {
        cells,
        config,
        profile: profile.clone(),
        dropped_invalid,
        frame_id: 0,
    }
}

/// Grid-averaged quality score of one frame with its per-cell breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameScore {
    /// `(1 / V·H) Σ K_γ·I` over non-empty cells.
    pub score: f64,
    /// Row-major; `None` for empty cells.
    pub cells: Vec<Option<CellScore>>,
    pub config: GridConfig,
    pub frame_id: u64,
    pub compute_time: Duration,
}

impl FrameScore {
    pub(crate) fn from_cells(
        cells: Vec<Option<CellScore>>,
        config: GridConfig,
        frame_id: u64,
        compute_time: Duration,
    ) -> Self {
        let score = grid_average(&cells, config, |c| c.product);
        Self {
            score,
            cells,
            config,
            frame_id,
            compute_time,
        }
    }

    /// Same average with every multiplier forced to 1.
    pub fn unweighted_score(&self) -> f64 {
        grid_average(&self.cells, self.config, |c| c.autocorrelation)
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<&CellScore> {
        self.cells[row * self.config.cols() + col].as_ref()
    }

    /// Scores equal up to timing metadata.
    pub fn same_result(&self, other: &FrameScore) -> bool {
        self.score.to_bits() == other.score.to_bits()
            && self.frame_id == other.frame_id
            && self.config == other.config
            && self.cells.len() == other.cells.len()
            && self.cells.iter().zip(&other.cells).all(|(a, b)| match (a, b) {
                (None, None) => true,
                (Some(a), Some(b)) => {
                    a.count == b.count
                        && a.autocorrelation.to_bits() == b.autocorrelation.to_bits()
                        && a.multiplier.to_bits() == b.multiplier.to_bits()
                        && a.product.to_bits() == b.product.to_bits()
                }
                _ => false,
            })
    }
}

/// Fixed row-major sum over present cells divided by `V·H`.
fn grid_average(cells: &[Option<CellScore>], config: GridConfig, f: impl Fn(&CellScore) -> f64) -> f64 {
    let sum = cells.iter().flatten().fold(0.0, |acc, c| acc + f(c));
    sum / config.cell_count() as f64
}

/// Quality score of a projected frame using the default execution policy.
pub fn frame_score(grid: &FrameGrid, scheme: WeightScheme, params: IntensityParams) -> FrameScore {
    Engine::new(ExecPolicy::default()).score_grid(grid, scheme, params)
}

/// Frame score with every cell multiplier forced to 1.
pub fn unweighted_frame_score(grid: &FrameGrid, scheme: WeightScheme) -> f64 {
    Engine::new(ExecPolicy::default()).unweighted_score(grid, scheme)
}

/// Mean of per-cell range variances over non-empty cells; 0 if all are empty.
pub fn mean_range_variance(grid: &FrameGrid) -> f64 {
    let (sum, n) = grid
        .cells
        .iter()
        .filter(|c| !c.is_empty())
        .map(|c| range_variance(c).expect("non-empty cell"))
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
