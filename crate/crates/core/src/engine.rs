//! Per-cell execution and frame streaming.
//!
//! Each cell is evaluated wholly by one worker and results are assembled in
//! row-major order by the caller's thread, so the output does not depend on
//! the worker count. Without the `parallel` feature every policy runs on the
//! calling thread.

use std::num::NonZeroUsize;
use std::time::Instant;

use thiserror::Error;

use crate::grid::{project_frame, FrameGrid, FrameScore, GridConfig, SensorProfile};
use crate::io::FrameRecord;
use crate::metric::{
    multiplier_for_mean, spatial_autocorrelation, CellScore, IntensityParams, MetricError,
    PointSet, WeightScheme,
};

/// Default number of cells handed to a worker at a time.
pub const DEFAULT_CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Workers {
    /// One worker per available core.
    #[default]
    Auto,
    Fixed(NonZeroUsize),
}

impl Workers {
    pub fn fixed(n: usize) -> Option<Self> {
        NonZeroUsize::new(n).map(Self::Fixed)
    }
}

impl std::str::FromStr for Workers {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Self::Auto);
        }
        s.parse::<usize>()
            .ok()
            .and_then(Self::fixed)
            .ok_or_else(|| format!("worker count {s:?} must be a positive integer or \"auto\""))
    }
}

/// How per-cell work is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecPolicy {
    pub workers: Workers,
    chunk: NonZeroUsize,
}

impl Default for ExecPolicy {
    fn default() -> Self {
        Self {
            workers: Workers::Auto,
            chunk: NonZeroUsize::new(DEFAULT_CHUNK).unwrap(),
        }
    }
}

impl ExecPolicy {
    pub fn with_workers(workers: usize) -> Self {
        Self {
            workers: Workers::fixed(workers).unwrap_or_default(),
            ..Self::default()
        }
    }

    pub fn sequential() -> Self {
        Self::with_workers(1)
    }

    pub fn chunk(mut self, cells_per_task: NonZeroUsize) -> Self {
        self.chunk = cells_per_task;
        self
    }

    pub fn cells_per_task(&self) -> usize {
        self.chunk.get()
    }

    /// Worker count after resolving `Auto`; always at least 1.
    pub fn resolved_workers(&self) -> usize {
        match self.workers {
            Workers::Fixed(n) => n.get(),
            Workers::Auto => std::thread::available_parallelism().map_or(1, NonZeroUsize::get),
        }
    }
}

/// Owns the worker pool for a given policy.
pub struct Engine {
    policy: ExecPolicy,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Engine {
    pub fn new(policy: ExecPolicy) -> Self {
        #[cfg(feature = "parallel")]
        {
            let workers = policy.resolved_workers();
            let pool = (workers > 1).then(|| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .thread_name(|i| format!("pcq-cell-{i}"))
                    .build()
                    .expect("failed to start worker pool")
            });
            Self { policy, pool }
        }
        #[cfg(not(feature = "parallel"))]
        Self { policy }
    }

    pub fn policy(&self) -> &ExecPolicy {
        &self.policy
    }

    /// Applies `cell_fn` to every non-empty cell. Empty cells map to `None`.
    /// On failure the error of the lowest-indexed failing cell is returned.
    pub fn map_cells<T, E, F>(&self, grid: &FrameGrid, cell_fn: F) -> Result<Vec<Option<T>>, E>
    where
        F: Fn(&PointSet) -> Result<T, E> + Sync,
        T: Send,
        E: Send,
    {
        let eval = |cell: &PointSet| (!cell.is_empty()).then(|| cell_fn(cell)).transpose();
        let results: Vec<Result<Option<T>, E>> = self.run(grid.cells(), eval);
        results.into_iter().collect()
    }

    #[cfg(feature = "parallel")]
    fn run<R, F>(&self, cells: &[PointSet], eval: F) -> Vec<R>
    where
        F: Fn(&PointSet) -> R + Sync,
        R: Send,
    {
        use rayon::prelude::*;
        match &self.pool {
            Some(pool) => pool.install(|| {
                cells
                    .par_chunks(self.policy.cells_per_task())
                    .flat_map_iter(|chunk| chunk.iter().map(&eval).collect::<Vec<_>>())
                    .collect()
            }),
            None => cells.iter().map(eval).collect(),
        }
    }

    #[cfg(not(feature = "parallel"))]
    fn run<R, F>(&self, cells: &[PointSet], eval: F) -> Vec<R>
    where
        F: Fn(&PointSet) -> R,
    {
        cells.iter().map(eval).collect()
    }

    pub fn score_grid(&self, grid: &FrameGrid, scheme: WeightScheme, params: IntensityParams) -> FrameScore {
        let start = Instant::now();
        let cells = self
            .map_cells(grid, |cell| cell_score(cell, scheme, params))
            .expect("projected cells hold only valid, finite detections");
        FrameScore::from_cells(cells, grid.config(), grid.frame_id(), start.elapsed())
    }

    pub fn unweighted_score(&self, grid: &FrameGrid, scheme: WeightScheme) -> f64 {
        let cells = self
            .map_cells(grid, |cell| {
                spatial_autocorrelation(cell, scheme).map(|i| CellScore {
                    autocorrelation: i,
                    multiplier: 1.0,
                    count: cell.len(),
                    product: i,
                })
            })
            .expect("projected cells hold only valid, finite detections");
        FrameScore::from_cells(cells, grid.config(), grid.frame_id(), Default::default()).score
    }

    /// Scores every `cadence`-th item of an ordered source. `load` is only
    /// called for the items that are scored.
    pub fn score_stream<'a, I, L, E>(
        &'a self,
        items: I,
        load: L,
        setup: &'a StreamSetup,
    ) -> impl Iterator<Item = StreamItem> + 'a
    where
        I: IntoIterator + 'a,
        L: FnMut(I::Item) -> Result<FrameRecord, E> + 'a,
        E: std::fmt::Display,
    {
        let mut load = load;
        items
            .into_iter()
            .enumerate()
            .step_by(setup.cadence.get())
            .map(move |(index, item)| match load(item) {
                Ok(record) => {
                    let grid = project_frame(&record.points, &setup.profile, setup.grid)
                        .with_frame_id(record.frame_id);
                    StreamItem::Scored {
                        index,
                        timestamp_us: record.timestamp_us,
                        score: self.score_grid(&grid, setup.scheme, setup.params),
                        mean_range_variance: crate::grid::mean_range_variance(&grid),
                    }
                }
                Err(e) => StreamItem::Failed {
                    index,
                    error: StreamError(e.to_string()),
                },
            })
    }
}

fn cell_score(cell: &PointSet, scheme: WeightScheme, params: IntensityParams) -> Result<CellScore, MetricError> {
    let autocorrelation = spatial_autocorrelation(cell, scheme)?;
    let gamma_mean = cell.iter().map(|p| p.intensity()).sum::<f64>() / cell.len() as f64;
    let multiplier = multiplier_for_mean(gamma_mean, params);
    Ok(CellScore {
        autocorrelation,
        multiplier,
        count: cell.len(),
        product: multiplier * autocorrelation,
    })
}

/// Applies `cell_fn` to every non-empty cell under `policy`.
pub fn map_cells<T, E, F>(grid: &FrameGrid, cell_fn: F, policy: &ExecPolicy) -> Result<Vec<Option<T>>, E>
where
    F: Fn(&PointSet) -> Result<T, E> + Sync,
    T: Send,
    E: Send,
{
    Engine::new(*policy).map_cells(grid, cell_fn)
}

/// Everything needed to turn a frame record into a score.
#[derive(Debug, Clone)]
pub struct StreamSetup {
    pub profile: SensorProfile,
    pub grid: GridConfig,
    pub scheme: WeightScheme,
    pub params: IntensityParams,
    /// Score every `cadence`-th frame, starting with the first.
    pub cadence: NonZeroUsize,
}

impl StreamSetup {
    /// Defaults for a profile: its default grid, the default weight scheme,
    /// the profile's reference intensity and a cadence of 1.
    pub fn for_profile(profile: SensorProfile) -> Self {
        let params = IntensityParams::new(profile.gamma_ref(), crate::metric::DEFAULT_K)
            .expect("profile gamma_ref is validated");
        Self {
            grid: profile.default_grid(),
            profile,
            scheme: WeightScheme::default(),
            params,
            cadence: NonZeroUsize::MIN,
        }
    }

    pub fn with_cadence(mut self, cadence: usize) -> Result<Self, MetricError> {
        self.cadence = NonZeroUsize::new(cadence).ok_or(MetricError::OutOfRange {
            field: "cadence",
            value: cadence as f64,
            reason: "must be >= 1",
        })?;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct StreamError(pub String);

/// One emitted element of a scored stream, tagged with its input position.
#[derive(Debug, Clone)]
pub enum StreamItem {
    Scored {
        index: usize,
        timestamp_us: u64,
        score: FrameScore,
        mean_range_variance: f64,
    },
    Failed {
        index: usize,
        error: StreamError,
    },
}

impl StreamItem {
    pub fn index(&self) -> usize {
        match self {
            Self::Scored { index, .. } | Self::Failed { index, .. } => *index,
        }
    }

    pub fn score(&self) -> Option<&FrameScore> {
        match self {
            Self::Scored { score, .. } => Some(score),
            Self::Failed { .. } => None,
        }
    }
}
