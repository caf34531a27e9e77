use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pcq_core::engine::{Engine, ExecPolicy, StreamItem, StreamSetup, Workers};
use pcq_core::io::{self, DatasetEntry, DatasetManifest, FrameFormat, FrameRecord};
use pcq_core::report::{self, ScoreRow, ScoreSeries, ThresholdReport, DEFAULT_FLAG_THRESHOLD};
use pcq_core::synth::{self, ScenarioScript};
use pcq_core::{project_frame, GridConfig, IntensityParams, SensorProfile, WeightScheme};

const SCORE_COLUMNS: &str = "\
Output columns (CSV, one row per scored frame):
  frame_id             frame number from the file name
  timestamp_us         nominal capture time: start_us + frame_id * 1e6 / rate_hz
  score                grid-averaged K*I, empty cells counted as 0
  unweighted           same average with every K forced to 1
  mean_range_variance  mean of per-cell range variances over non-empty cells";

const REPORT_COLUMNS: &str = "\
Threshold CSV columns: threshold, positive_kept, negative_filtered
  positive_kept      fraction of positive frames with score < threshold
  negative_filtered  fraction of negative frames with score >= threshold
CDF CSV columns: set (all|positive|negative), score, cumulative_fraction

Labels CSV: frame_id,label with label one of positive/pos/tp/1/true or
negative/neg/fp/0/false.";

const GRID_COLUMNS: &str = "\
Output columns (CSV, one row per cell, row-major):
  row, col          cell indices (elevation, azimuth)
  count             detections in the cell
  autocorrelation   I, blank for empty cells
  multiplier        K, blank for empty cells
  product           K*I, blank for empty cells
  flag              'empty', 'low' when I < --flag-threshold, else blank";

const GENERATE_HELP: &str = "\
Scenario script lines:
  profile <lidar1|lidar2>      sensor profile (default lidar2)
  rate <hz>                    frame rate (default 10)
  resolution <MxN>             scan array size
  <seconds> <scene> <noise>[+<noise>...] [key=value...] [seed=N]

Scenes: empty, wall, street, street-rain, depth-mix, open-road
Noise: none; scattered (count imin imax rmin rmax);
       cluster (az el radius range jitter ccount cap);
       attenuation (keep scale)";

/// Lidar point-cloud quality scoring.
///
/// Exit codes: 0 success, 1 usage error, 2 data error.
#[derive(Parser, Debug)]
#[command(name = "pcq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score a dataset directory or a single frame file.
    #[command(after_help = SCORE_COLUMNS)]
    Score(ScoreArgs),
    /// Threshold sweep and score CDF from a score CSV and labels.
    #[command(after_help = REPORT_COLUMNS)]
    Report(ReportArgs),
    /// Per-cell table of one frame.
    #[command(after_help = GRID_COLUMNS)]
    GridDump(GridDumpArgs),
    /// Render a scenario script into a dataset directory.
    #[command(after_help = GENERATE_HELP)]
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchemeArg {
    Uniform,
    InvAngular,
}

#[derive(Args, Debug)]
struct MetricArgs {
    /// Sensor profile; defaults to the dataset manifest's profile, else lidar1.
    #[arg(long)]
    profile: Option<String>,
    /// Grid as VxH (elevation x azimuth cells); defaults to the profile's grid.
    #[arg(long)]
    grid: Option<GridConfig>,
    #[arg(long, value_enum, default_value = "inv-angular")]
    scheme: SchemeArg,
    /// Reference intensity in (0, 1]; defaults to the profile's value.
    #[arg(long)]
    gamma_ref: Option<f64>,
    /// Multiplier scale factor.
    #[arg(long, default_value_t = pcq_core::metric::DEFAULT_K)]
    k: f64,
    /// Worker threads: a positive integer or "auto".
    #[arg(long, env = "PCQ_WORKERS", default_value = "auto")]
    workers: Workers,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// Dataset directory or frame file (.pcq or .csv).
    input: PathBuf,
    #[command(flatten)]
    metric: MetricArgs,
    /// Score every N-th frame, starting with the first.
    #[arg(long, default_value_t = 1)]
    cadence: usize,
    /// Write CSV here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Score CSV as written by `pcq score`.
    #[arg(long)]
    scores: PathBuf,
    /// Labels CSV (frame_id,label).
    #[arg(long)]
    labels: PathBuf,
    /// Comma-separated thresholds; default -1.0 to 1.0 in steps of 0.1.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    thresholds: Option<Vec<f64>>,
    /// Threshold CSV destination; stdout if omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// CDF CSV destination; appended to stdout after a blank line if omitted.
    #[arg(long)]
    cdf: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GridDumpArgs {
    /// Frame file (.pcq or .csv).
    frame: PathBuf,
    #[command(flatten)]
    metric: MetricArgs,
    /// Cells with I below this are flagged. The default only mirrors a
    /// review filter and is not a recommended operating threshold.
    #[arg(long, default_value_t = DEFAULT_FLAG_THRESHOLD, allow_negative_numbers = true)]
    flag_threshold: f64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Scenario script.
    script: PathBuf,
    /// Output directory; created if missing.
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Errors split by exit code.
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn data(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Data(e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Score(a) => cmd_score(a),
        Command::Report(a) => cmd_report(a),
        Command::GridDump(a) => cmd_grid_dump(a),
        Command::Generate(a) => cmd_generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text)
            .with_context(|| format!("writing {}", p.display()))
            .map_err(data),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(data),
    }
}

struct Resolved {
    setup: StreamSetup,
    engine: Engine,
}

fn resolve(m: &MetricArgs, manifest_profile: Option<&str>) -> Result<Resolved, Failure> {
    let name = m.profile.as_deref().or(manifest_profile).unwrap_or("lidar1");
    let mut profile = SensorProfile::builtin(name).map_err(usage)?;
    if let Some(g) = m.gamma_ref {
        profile = profile.with_gamma_ref(g).map_err(usage)?;
    }
    let params = IntensityParams::new(profile.gamma_ref(), m.k).map_err(usage)?;
    let scheme = match m.scheme {
        SchemeArg::Uniform => WeightScheme::Uniform,
        SchemeArg::InvAngular => WeightScheme::default(),
    };
    let mut setup = StreamSetup::for_profile(profile);
    if let Some(g) = m.grid {
        setup.grid = g;
    }
    setup.scheme = scheme;
    setup.params = params;
    let mut policy = ExecPolicy::default();
    policy.workers = m.workers;
    Ok(Resolved {
        setup,
        engine: Engine::new(policy),
    })
}

/// A directory is scanned as a dataset; a file is a one-frame dataset.
fn open_input(path: &Path) -> Result<DatasetManifest, Failure> {
    if !path.exists() {
        return Err(data(anyhow!("{}: no such file or directory", path.display())));
    }
    if path.is_dir() {
        return io::scan_dataset(path).map_err(data);
    }
    let format = FrameFormat::from_path(path)
        .ok_or_else(|| usage(anyhow!("{}: expected a directory, .pcq or .csv file", path.display())))?;
    let frame_id = path
        .file_name()
        .and_then(|n| n.to_str())
        .and_then(io::parse_frame_name)
        .map_or(0, |(id, _)| id);
    Ok(DatasetManifest {
        profile: None,
        rate_hz: io::DEFAULT_RATE_HZ,
        start_us: 0,
        entries: vec![DatasetEntry {
            frame_id,
            path: path.to_path_buf(),
            format,
        }],
    })
}

fn cmd_score(a: ScoreArgs) -> Result<(), Failure> {
    let manifest = open_input(&a.input)?;
    let r = resolve(&a.metric, manifest.profile.as_deref())?;
    let setup = r.setup.with_cadence(a.cadence).map_err(usage)?;

    let mut series = ScoreSeries::new();
    let stream = r
        .engine
        .score_stream(manifest.entries.iter(), |e| manifest.load(e), &setup);
    for item in stream {
        match item {
            StreamItem::Scored {
                timestamp_us,
                score,
                mean_range_variance,
                ..
            } => series
                .push(ScoreRow {
                    frame_id: score.frame_id,
                    timestamp_us,
                    score: score.score,
                    unweighted: score.unweighted_score(),
                    mean_range_variance,
                })
                .map_err(data)?,
            StreamItem::Failed { error, .. } => return Err(data(error)),
        }
    }
    write_output(a.output.as_deref(), &series.to_csv())
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(data)
}

fn cmd_report(a: ReportArgs) -> Result<(), Failure> {
    let series = ScoreSeries::parse_csv(&read_text(&a.scores)?)
        .with_context(|| a.scores.display().to_string())
        .map_err(data)?;
    let labels = report::parse_labels(&read_text(&a.labels)?)
        .with_context(|| a.labels.display().to_string())
        .map_err(data)?;
    let thresholds = a
        .thresholds
        .unwrap_or_else(|| (-10..=10).map(|i| i as f64 / 10.0).collect());
    if let Some(t) = thresholds.iter().find(|t| !t.is_finite()) {
        return Err(usage(anyhow!("threshold {t} is not finite")));
    }
    let scores: Vec<(u64, f64)> = series.rows().iter().map(|r| (r.frame_id, r.score)).collect();
    let sweep = ThresholdReport::build(&scores, &labels, &thresholds).map_err(data)?;
    let cdf = report::cdf_csv(&scores, &labels);
    match a.cdf {
        Some(p) => {
            write_output(a.output.as_deref(), &sweep.to_csv())?;
            write_output(Some(&p), &cdf)
        }
        None if a.output.is_some() => {
            write_output(a.output.as_deref(), &sweep.to_csv())?;
            write_output(None, &cdf)
        }
        None => write_output(None, &format!("{}\n{}", sweep.to_csv(), cdf)),
    }
}

fn cmd_grid_dump(a: GridDumpArgs) -> Result<(), Failure> {
    if !a.flag_threshold.is_finite() {
        return Err(usage(anyhow!("flag threshold must be finite")));
    }
    // a frame inside a dataset directory takes that dataset's profile
    let sibling = a
        .frame
        .parent()
        .map(|d| d.join(io::MANIFEST_FILE))
        .filter(|m| m.is_file())
        .and_then(|_| io::scan_dataset(a.frame.parent()?).ok())
        .and_then(|m| m.profile);
    let r = resolve(&a.metric, sibling.as_deref())?;
    let frame: FrameRecord = io::read_frame_file(&a.frame).map_err(data)?;
    let grid = project_frame(&frame.points, &r.setup.profile, r.setup.grid).with_frame_id(frame.frame_id);
    let score = r.engine.score_grid(&grid, r.setup.scheme, r.setup.params);
    write_output(a.output.as_deref(), &report::grid_dump_csv(&score, a.flag_threshold))
}

fn cmd_generate(a: GenerateArgs) -> Result<(), Failure> {
    let text = read_text(&a.script)?;
    let script = ScenarioScript::parse(&text)
        .with_context(|| a.script.display().to_string())
        .map_err(usage)?;
    let manifest = synth::generate_dataset(&script, &a.out_dir, a.seed).map_err(data)?;
    if manifest.is_empty() {
        return Err(data(anyhow!("scenario produced no frames")));
    }
    eprintln!("wrote {} frames to {}", manifest.len(), a.out_dir.display());
    Ok(())
}
