//! Seeded synthetic frames: clean scenes and phenomenological noise models.
//!
//! Scenes are ray-cast on the profile's scan array: every slot looks along a
//! fixed (azimuth, elevation) direction and returns the nearest surface it
//! hits, or an empty slot. Surfaces are vertical planar facades and an
//! optional flat ground. All randomness comes from ChaCha8 streams seeded by
//! the caller, and every emitted value is rounded to the binary format's f32
//! precision so generated datasets round-trip exactly.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::grid::{ConfigError, GridConfig, SensorProfile};
use crate::io::{
    frame_file_name, quantize_f32, write_frame_binary, DatasetEntry, DatasetManifest, FrameFormat,
    FrameRecord, IoError, DEFAULT_RATE_HZ, MANIFEST_FILE,
};
use crate::metric::PolarPoint;

/// Default intensity band of scattered (interference-like) noise.
pub const SCATTERED_INTENSITY: (f64, f64) = (0.0, 0.05);
/// Default range band of scattered noise, meters.
pub const SCATTERED_RANGE: (f64, f64) = (1.0, 100.0);
/// Default intensity cap of clustered noise.
pub const CLUSTER_INTENSITY_CAP: f64 = 0.02;
/// Widest planar facet a facade is split into, degrees.
const MAX_FACET_SPAN: f64 = 45.0;
/// Relative spread of surface intensities around their mean.
const INTENSITY_SPREAD: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene: {0}")]
    Scene(String),
    #[error("invalid noise: {0}")]
    Noise(String),
    #[error("scenario line {line}: {message}")]
    Script { line: usize, message: String },
    #[error("scenario has no segments")]
    EmptyScript,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
}

impl From<std::io::Error> for SynthError {
    fn from(e: std::io::Error) -> Self {
        SynthError::Io(IoError::Io(e))
    }
}

/// A vertical planar surface facing the sensor, e.g. a building front or the
/// back of a vehicle. `range` is the perpendicular distance; spans wider than
/// 45° are built from several facets at the same distance.
#[derive(Debug, Clone, PartialEq)]
pub struct Facade {
    pub azimuth_start: f64,
    pub azimuth_span: f64,
    pub elevation_min: f64,
    pub elevation_max: f64,
    pub range: f64,
    /// Standard deviation of per-return range noise, meters.
    pub range_jitter: f64,
    pub intensity: f64,
}

impl Facade {
    fn validate(&self) -> Result<(), SynthError> {
        let finite = [
            self.azimuth_start,
            self.azimuth_span,
            self.elevation_min,
            self.elevation_max,
            self.range,
            self.range_jitter,
            self.intensity,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(SynthError::Scene("non-finite facade field".into()));
        }
        if self.range <= 0.0 {
            return Err(SynthError::Scene(format!("facade range {} must be > 0", self.range)));
        }
        if !(self.azimuth_span > 0.0 && self.azimuth_span <= 360.0) {
            return Err(SynthError::Scene(format!("facade span {} outside (0, 360]", self.azimuth_span)));
        }
        if self.elevation_max <= self.elevation_min {
            return Err(SynthError::Scene("facade elevation span is empty".into()));
        }
        if self.range_jitter < 0.0 || !(0.0..=1.0).contains(&self.intensity) {
            return Err(SynthError::Scene("facade jitter must be >= 0 and intensity in [0, 1]".into()));
        }
        Ok(())
    }

    /// Noise-free distance along a direction, if the facade covers it.
    fn hit(&self, azimuth: f64, elevation: f64) -> Option<f64> {
        if elevation < self.elevation_min || elevation >= self.elevation_max {
            return None;
        }
        let offset = crate::metric::normalize_azimuth(azimuth - self.azimuth_start);
        if offset >= self.azimuth_span {
            return None;
        }
        let facets = (self.azimuth_span / MAX_FACET_SPAN).ceil().max(1.0);
        let facet_span = self.azimuth_span / facets;
        let facet = (offset / facet_span).floor().min(facets - 1.0);
        let off_axis = offset - (facet + 0.5) * facet_span;
        Some(self.range / (off_axis.to_radians().cos() * elevation.to_radians().cos()))
    }
}

/// Flat ground below the sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Ground {
    /// Sensor height above the ground, meters.
    pub height: f64,
    /// Returns beyond this distance are lost.
    pub max_range: f64,
    pub range_jitter: f64,
    pub intensity: f64,
}

/// Sparse far-field returns (foliage, distant clutter) in slots that hit no
/// surface.
#[derive(Debug, Clone, PartialEq)]
pub struct Background {
    /// Probability that an otherwise empty slot returns.
    pub density: f64,
    pub range_min: f64,
    pub range_max: f64,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub profile: SensorProfile,
    pub facades: Vec<Facade>,
    pub ground: Option<Ground>,
    pub background: Option<Background>,
}

impl SceneSpec {
    pub fn empty(profile: SensorProfile) -> Self {
        Self {
            profile,
            facades: Vec::new(),
            ground: None,
            background: None,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        for f in &self.facades {
            f.validate()?;
        }
        if let Some(g) = &self.ground {
            let ok = g.height > 0.0
                && g.max_range > 0.0
                && g.range_jitter >= 0.0
                && (0.0..=1.0).contains(&g.intensity);
            if !ok {
                return Err(SynthError::Scene("invalid ground".into()));
            }
        }
        if let Some(b) = &self.background {
            let ok = (0.0..=1.0).contains(&b.density)
                && b.range_min > 0.0
                && b.range_max >= b.range_min
                && (0.0..=1.0).contains(&b.intensity);
            if !ok {
                return Err(SynthError::Scene("invalid background".into()));
            }
        }
        Ok(())
    }
}

fn surface_intensity<R: Rng>(rng: &mut R, mean: f64) -> f64 {
    let spread = mean * INTENSITY_SPREAD;
    (mean + rng.random_range(-spread..=spread)).clamp(0.0, 1.0)
}

fn jittered<R: Rng>(rng: &mut R, range: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return range;
    }
    let noise = Normal::new(0.0, sigma).expect("sigma validated").sample(rng);
    (range + noise).max(0.01)
}

fn point(range: f64, azimuth: f64, elevation: f64, intensity: f64) -> PolarPoint {
    quantize_f32(&PolarPoint::new(range, azimuth, elevation, intensity).expect("generated point is valid"))
}

/// Ray-casts a scene onto the profile's scan array. The frame holds exactly
/// `rows * cols` slots, row-major, including empty ones.
pub fn generate_scene(spec: &SceneSpec, seed: u64) -> Result<FrameRecord, SynthError> {
    spec.validate()?;
    let profile = &spec.profile;
    let (rows, cols) = (profile.rows(), profile.cols());
    let el_step = profile.elevation_span() / rows as f64;
    let az_step = profile.azimuth_span() / cols as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(rows * cols);

    for row in 0..rows {
        let elevation = profile.elevation_min() + (row as f64 + 0.5) * el_step;
        for col in 0..cols {
            let azimuth = profile.azimuth_start() + (col as f64 + 0.5) * az_step;

            let mut nearest: Option<(f64, f64, f64)> = None;
            for f in &spec.facades {
                if let Some(r) = f.hit(azimuth, elevation) {
                    if nearest.is_none_or(|(best, _, _)| r < best) {
                        nearest = Some((r, f.range_jitter, f.intensity));
                    }
                }
            }
            if let Some(g) = &spec.ground {
                if elevation < 0.0 {
                    let r = g.height / (-elevation).to_radians().sin();
                    if r <= g.max_range && nearest.is_none_or(|(best, _, _)| r < best) {
                        nearest = Some((r, g.range_jitter, g.intensity));
                    }
                }
            }

            let p = match (nearest, &spec.background) {
                (Some((r, sigma, intensity)), _) => {
                    let range = jittered(&mut rng, r, sigma);
                    point(range, azimuth, elevation, surface_intensity(&mut rng, intensity))
                }
                (None, Some(bg)) if rng.random_bool(bg.density) => {
                    let range = rng.random_range(bg.range_min..=bg.range_max);
                    point(range, azimuth, elevation, surface_intensity(&mut rng, bg.intensity))
                }
                _ => PolarPoint::sentinel(),
            };
            points.push(p);
        }
    }
    Ok(FrameRecord::new(0, 0, points))
}

/// Anomaly models applied on top of a frame.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    /// Points uniform over the field of view and a range band, with uniform
    /// intensities; interference-like.
    Scattered {
        count: usize,
        intensity: (f64, f64),
        range: (f64, f64),
    },
    /// A compact angular disk of returns around one range with intensities
    /// in `[0, intensity_cap]`; rain-clutter-like.
    ClusteredLowIntensity {
        center_azimuth: f64,
        center_elevation: f64,
        radius: f64,
        range: f64,
        range_jitter: f64,
        count: usize,
        intensity_cap: f64,
    },
    /// Drops each return with probability `1 - keep_fraction` and scales the
    /// intensity of the survivors.
    Attenuation { keep_fraction: f64, intensity_scale: f64 },
}

impl NoiseKind {
    pub fn scattered(count: usize) -> Self {
        Self::Scattered {
            count,
            intensity: SCATTERED_INTENSITY,
            range: SCATTERED_RANGE,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Noise(m.to_string()));
        match *self {
            Self::Scattered { intensity, range, .. } => {
                if !(0.0 <= intensity.0 && intensity.0 <= intensity.1 && intensity.1 <= 1.0) {
                    return bad("scattered intensity band must lie in [0, 1]");
                }
                if !(range.0 > 0.0 && range.1 >= range.0 && range.1.is_finite()) {
                    return bad("scattered range band must be positive and ordered");
                }
            }
            Self::ClusteredLowIntensity {
                center_azimuth,
                center_elevation,
                radius,
                range,
                range_jitter,
                intensity_cap,
                ..
            } => {
                let finite = [center_azimuth, center_elevation, radius, range, range_jitter]
                    .iter()
                    .all(|v| v.is_finite());
                if !finite || radius < 0.0 || range <= 0.0 || range_jitter < 0.0 {
                    return bad("cluster needs finite center, radius >= 0, range > 0, jitter >= 0");
                }
                if !(0.0..=1.0).contains(&intensity_cap) {
                    return bad("cluster intensity cap must lie in [0, 1]");
                }
            }
            Self::Attenuation {
                keep_fraction,
                intensity_scale,
            } => {
                if !(0.0..=1.0).contains(&keep_fraction) {
                    return bad("keep fraction must lie in [0, 1]");
                }
                if !(intensity_scale >= 0.0 && intensity_scale.is_finite()) {
                    return bad("intensity scale must be >= 0");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, seed: u64) -> Self {
        Self { kind, seed }
    }
}

/// Applies a noise model. Added points are appended after the existing
/// slots; attenuated returns become empty slots so the array layout is kept.
pub fn inject_noise(frame: &FrameRecord, noise: &NoiseSpec, profile: &SensorProfile) -> Result<FrameRecord, SynthError> {
    noise.kind.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut out = frame.clone();
    match noise.kind {
        NoiseKind::Scattered { count, intensity, range } => {
            out.points.reserve(count);
            for _ in 0..count {
                let azimuth = profile.azimuth_start() + rng.random_range(0.0..profile.azimuth_span());
                let elevation = rng.random_range(profile.elevation_min()..=profile.elevation_max());
                let r = rng.random_range(range.0..=range.1);
                let i = rng.random_range(intensity.0..=intensity.1);
                out.points.push(point(r, azimuth, elevation, i));
            }
        }
        NoiseKind::ClusteredLowIntensity {
            center_azimuth,
            center_elevation,
            radius,
            range,
            range_jitter,
            count,
            intensity_cap,
        } => {
            out.points.reserve(count);
            for _ in 0..count {
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                let rho = radius * rng.random::<f64>().sqrt();
                let azimuth = center_azimuth + rho * theta.cos();
                let elevation = center_elevation + rho * theta.sin();
                let r = jittered(&mut rng, range, range_jitter);
                let i = rng.random_range(0.0..=intensity_cap);
                out.points.push(point(r, azimuth, elevation, i));
            }
        }
        NoiseKind::Attenuation {
            keep_fraction,
            intensity_scale,
        } => {
            for p in out.points.iter_mut().filter(|p| p.is_valid()) {
                *p = if rng.random_bool(keep_fraction) {
                    let i = (p.intensity() * intensity_scale).min(1.0);
                    point(p.range(), p.azimuth(), p.elevation(), i)
                } else {
                    PolarPoint::sentinel()
                };
            }
        }
    }
    Ok(out)
}

/// Built-in scenes. Facades and ground use σ = 5 cm range noise.
pub mod scenes {
    use super::*;

    pub const NAMES: [&str; 6] = ["empty", "wall", "street", "street-rain", "depth-mix", "open-road"];

    /// One facade covering the whole field of view at 20 m.
    pub fn wall(profile: &SensorProfile) -> SceneSpec {
        SceneSpec {
            facades: vec![Facade {
                azimuth_start: profile.azimuth_start(),
                azimuth_span: profile.azimuth_span(),
                elevation_min: profile.elevation_min() - 1.0,
                elevation_max: profile.elevation_max() + 1.0,
                range: 20.0,
                range_jitter: 0.05,
                intensity: 0.3,
            }],
            ..SceneSpec::empty(profile.clone())
        }
    }

    fn facade(az: f64, span: f64, el: (f64, f64), range: f64, intensity: f64) -> Facade {
        Facade {
            azimuth_start: az,
            azimuth_span: span,
            elevation_min: el.0,
            elevation_max: el.1,
            range,
            range_jitter: 0.05,
            intensity,
        }
    }

    /// Road with vehicles in front of a row of building fronts.
    /// Azimuths are relative to the start of the field of view.
    pub fn street(profile: &SensorProfile) -> SceneSpec {
        let a0 = profile.azimuth_start();
        let span = profile.azimuth_span();
        let el_lo = profile.elevation_min();
        let mut facades = vec![
            // building line across the whole view
            facade(a0, span, (el_lo - 1.0, 6.0), 35.0, 0.3),
        ];
        // vehicles and poles in front of the buildings
        let objects = [(0.08, 0.10, 12.0), (0.30, 0.06, 8.0), (0.55, 0.12, 18.0), (0.80, 0.05, 6.0)];
        for (start, width, range) in objects {
            facades.push(facade(a0 + start * span, width * span, (el_lo - 1.0, 2.0), range, 0.35));
        }
        SceneSpec {
            profile: profile.clone(),
            facades,
            ground: Some(Ground {
                height: 2.0,
                max_range: 80.0,
                range_jitter: 0.05,
                intensity: 0.25,
            }),
            background: None,

        }
    }

    /// Street scene under rain; identical geometry, used with rain noise.
    pub fn street_rain(profile: &SensorProfile) -> SceneSpec {
        street(profile)
    }

    /// Many facades at strongly different ranges: high per-cell range
    /// variance while every surface stays coherent.
    pub fn depth_mix(profile: &SensorProfile) -> SceneSpec {
        let a0 = profile.azimuth_start();
        let span = profile.azimuth_span();
        let (el_lo, el_hi) = (profile.elevation_min(), profile.elevation_max());
        let el_span = el_hi - el_lo;
        let mut facades = vec![facade(a0, span, (el_lo - 1.0, el_hi + 1.0), 60.0, 0.3)];
        let bands = 12;
        for b in 0..bands {
            let f = b as f64 / bands as f64;
            let range = [5.0, 14.0, 9.0, 22.0][b % 4];
            let top = el_lo + el_span * (0.35 + 0.3 * ((b * 7 % 5) as f64 / 4.0));
            facades.push(facade(a0 + (f + 0.01) * span, span / bands as f64 * 0.55, (el_lo - 1.0, top), range, 0.35));
        }
        SceneSpec {
            facades,
            ..SceneSpec::empty(profile.clone())
        }
    }

    /// Flat road to the horizon under open sky.
    pub fn open_road(profile: &SensorProfile) -> SceneSpec {
        SceneSpec {
            ground: Some(Ground {
                height: 2.0,
                max_range: 120.0,
                range_jitter: 0.05,
                intensity: 0.25,
            }),
            ..SceneSpec::empty(profile.clone())
        }
    }

    pub fn by_name(name: &str, profile: &SensorProfile) -> Option<SceneSpec> {
        match name {
            "empty" => Some(SceneSpec::empty(profile.clone())),
            "wall" => Some(wall(profile)),
            "street" => Some(street(profile)),
            "street-rain" => Some(street_rain(profile)),
            "depth-mix" => Some(depth_mix(profile)),
            "open-road" => Some(open_road(profile)),
            _ => None,
        }
    }
}

/// One timed piece of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub duration_s: f64,
    pub scene: String,
    pub noise: Vec<NoiseKind>,
    pub seed: u64,
}

/// A declarative list of segments rendered at a fixed frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioScript {
    pub profile: SensorProfile,
    pub rate_hz: f64,
    pub segments: Vec<Segment>,
}

impl ScenarioScript {
    /// Parses the scenario text format:
    ///
    /// ```text
    /// # comment
    /// profile lidar2
    /// rate 10
    /// resolution 32x128
    /// 10 street none seed=1
    /// 10 street scattered count=400 seed=2
    /// 10 street cluster+attenuation az=0 el=8 radius=6 count=300 keep=0.9 seed=3
    /// ```
    ///
    /// Segment lines are `<seconds> <scene> <noise>[+<noise>...] [key=value...]`.
    /// Noise names are `none`, `scattered`, `cluster` and `attenuation`.
    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let mut profile = SensorProfile::lidar2();
        let mut resolution: Option<(usize, usize)> = None;
        let mut rate_hz = DEFAULT_RATE_HZ;
        let mut segments = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |message: String| SynthError::Script { line: line_no, message };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            match tokens[0] {
                "profile" | "rate" | "resolution" if tokens.len() != 2 => {
                    return Err(err(format!("{} takes exactly one value", tokens[0])));
                }
                "profile" => profile = SensorProfile::builtin(tokens[1]).map_err(|e| err(e.to_string()))?,
                "rate" => {
                    rate_hz = tokens[1]
                        .parse()
                        .ok()
                        .filter(|r: &f64| r.is_finite() && *r > 0.0)
                        .ok_or_else(|| err(format!("bad rate {:?}", tokens[1])))?;
                }
                "resolution" => {
                    let g: GridConfig = tokens[1].parse().map_err(|e: ConfigError| err(e.to_string()))?;
                    resolution = Some((g.rows(), g.cols()));
                }
                _ => segments.push(parse_segment(&tokens, line_no, segments.len())?),
            }
        }
        if segments.is_empty() {
            return Err(SynthError::EmptyScript);
        }
        if let Some((m, n)) = resolution {
            profile = profile.with_resolution(m, n)?;
        }
        for s in &segments {
            if scenes::by_name(&s.scene, &profile).is_none() {
                return Err(SynthError::Scene(format!(
                    "unknown scene {:?} (known: {})",
                    s.scene,
                    scenes::NAMES.join(", ")
                )));
            }
        }
        Ok(Self {
            profile,
            rate_hz,
            segments,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.segments.iter().map(|s| self.segment_frames(s)).sum()
    }

    fn segment_frames(&self, s: &Segment) -> usize {
        (s.duration_s * self.rate_hz).round() as usize
    }
}

fn parse_segment(tokens: &[&str], line: usize, ordinal: usize) -> Result<Segment, SynthError> {
    let err = |message: String| SynthError::Script { line, message };
    if tokens.len() < 3 {
        return Err(err("expected <seconds> <scene> <noise> [key=value...]".into()));
    }
    let duration_s: f64 = tokens[0]
        .parse()
        .ok()
        .filter(|d: &f64| d.is_finite() && *d > 0.0)
        .ok_or_else(|| err(format!("bad duration {:?}", tokens[0])))?;

    let mut params = std::collections::BTreeMap::new();
    for kv in &tokens[3..] {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| err(format!("expected key=value, found {kv:?}")))?;
        params.insert(k, v);
    }
    let mut used = std::collections::BTreeSet::new();
    let mut num = |key: &'static str, default: f64| -> Result<f64, SynthError> {
        used.insert(key);
        match params.get(key) {
            Some(v) => v
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| err(format!("bad value for {key}: {v:?}"))),
            None => Ok(default),
        }
    };
    let count = |x: f64| -> Result<usize, SynthError> {
        if x >= 0.0 && x.fract() == 0.0 {
            Ok(x as usize)
        } else {
            Err(err(format!("count {x} must be a non-negative integer")))
        }
    };

    let mut noise = Vec::new();
    for name in tokens[2].split('+') {
        match name {
            "none" => {}
            "scattered" => noise.push(NoiseKind::Scattered {
                count: count(num("count", 0.0)?)?,
                intensity: (num("imin", SCATTERED_INTENSITY.0)?, num("imax", SCATTERED_INTENSITY.1)?),
                range: (num("rmin", SCATTERED_RANGE.0)?, num("rmax", SCATTERED_RANGE.1)?),
            }),
            "cluster" => noise.push(NoiseKind::ClusteredLowIntensity {
                center_azimuth: num("az", 0.0)?,
                center_elevation: num("el", 0.0)?,
                radius: num("radius", 5.0)?,
                range: num("range", 5.0)?,
                range_jitter: num("jitter", 0.3)?,
                count: count(num("ccount", 200.0)?)?,
                intensity_cap: num("cap", CLUSTER_INTENSITY_CAP)?,
            }),
            "attenuation" => noise.push(NoiseKind::Attenuation {
                keep_fraction: num("keep", 1.0)?,
                intensity_scale: num("scale", 1.0)?,
            }),
            other => return Err(err(format!("unknown noise {other:?}"))),
        }
    }
    for n in &noise {
        n.validate().map_err(|e| err(e.to_string()))?;
    }
    let seed = match params.get("seed") {
        Some(v) => v.parse().map_err(|_| err(format!("bad seed {v:?}")))?,
        None => ordinal as u64 + 1,
    };
    used.insert("seed");
    if let Some(unknown) = params.keys().find(|k| !used.contains(**k)) {
        return Err(err(format!("unknown parameter {unknown:?}")));
    }
    Ok(Segment {
        duration_s,
        scene: tokens[1].to_string(),
        noise,
        seed,
    })
}

/// SplitMix64 finalizer, used to derive independent per-frame seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Renders one frame of a segment.
pub fn render_frame(
    script: &ScenarioScript,
    segment: &Segment,
    frame_id: u64,
    base_seed: u64,
) -> Result<FrameRecord, SynthError> {
    let frame_seed = mix_seed(mix_seed(base_seed, segment.seed), frame_id);
    let spec = scenes::by_name(&segment.scene, &script.profile)
        .ok_or_else(|| SynthError::Scene(format!("unknown scene {:?}", segment.scene)))?;
    let mut frame = generate_scene(&spec, frame_seed)?;
    for (k, kind) in segment.noise.iter().enumerate() {
        let noise = NoiseSpec::new(kind.clone(), mix_seed(frame_seed, k as u64 + 1));
        frame = inject_noise(&frame, &noise, &script.profile)?;
    }
    frame.frame_id = frame_id;
    frame.timestamp_us = (frame_id as f64 * 1e6 / script.rate_hz).round() as u64;
    Ok(frame)
}

/// Writes every frame of a scenario as binary files plus a manifest.
pub fn generate_dataset(script: &ScenarioScript, out_dir: &Path, base_seed: u64) -> Result<DatasetManifest, SynthError> {
    if script.segments.is_empty() {
        return Err(SynthError::EmptyScript);
    }
    fs::create_dir_all(out_dir)?;
    let rows = script.profile.rows();
    let mut entries = Vec::with_capacity(script.frame_count());
    let mut frame_id = 0u64;
    for segment in &script.segments {
        for _ in 0..script.segment_frames(segment) {
            let frame = render_frame(script, segment, frame_id, base_seed)?;
            let cols = frame.points.len().div_ceil(rows).max(script.profile.cols());
            let path = out_dir.join(frame_file_name(frame_id, FrameFormat::Binary));
            fs::write(&path, write_frame_binary(&frame, rows, cols)?)?;
            entries.push(DatasetEntry {
                frame_id,
                path,
                format: FrameFormat::Binary,
            });
            frame_id += 1;
        }
    }
    let manifest = DatasetManifest {
        profile: Some(script.profile.name().to_string()),
        rate_hz: script.rate_hz,
        start_us: 0,
        entries,
    };
    let mut text = manifest.manifest_text();
    text.push_str(&format!("resolution={}x{}\n", script.profile.rows(), script.profile.cols()));
    fs::write(out_dir.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}
