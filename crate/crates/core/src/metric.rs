//! Spatial autocorrelation of range values and the intensity weight multiplier.
//!
//! For a set of `N` returns with ranges `r_i`, mean `r̄` and pairwise weights
//! `w_ij` (zero on the diagonal), the autocorrelation is
//!
//! ```text
//! I = N / W * Σ_i Σ_j w_ij (r_i - r̄)(r_j - r̄) / Σ_i (r_i - r̄)²,   W = Σ_i Σ_j w_ij
//! ```
//!
//! with `I = -1` for a single point and `I = +1` when every range is equal.
//! The multiplier is `exp(k * max(0, γ_ref - γ̄) / γ_ref)` over the mean
//! intensity `γ̄`. A cell's quality contribution is their product.

use thiserror::Error;

/// Default clamp floor for the angular distance, in degrees.
pub const DEFAULT_MIN_ANGULAR_SEPARATION: f64 = 0.05;
/// Default reference intensity on the normalized `[0, 1]` scale.
pub const DEFAULT_GAMMA_REF: f64 = 0.15;
/// Default multiplier scale factor.
pub const DEFAULT_K: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("point set is empty")]
    EmptySet,
    #[error("non-finite {field} value {value}")]
    NonFiniteInput { field: &'static str, value: f64 },
    #[error("{field} value {value} out of range: {reason}")]
    OutOfRange {
        field: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("point set member {index} is not a valid detection (range {range})")]
    InvalidDetection { index: usize, range: f64 },
}

/// Wraps an azimuth in degrees into `[0, 360)`.
pub fn normalize_azimuth(deg: f64) -> f64 {
    let wrapped = deg.rem_euclid(360.0);
    // rem_euclid rounds tiny negative inputs up to exactly 360.0
    if wrapped >= 360.0 {
        0.0
    } else {
        wrapped
    }
}

/// One LiDAR return in sensor polar coordinates.
///
/// A range of exactly zero is the "no detection" sentinel; such points are
/// carried through I/O but never enter a [`PointSet`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarPoint {
    range: f64,
    azimuth: f64,
    elevation: f64,
    intensity: f64,
}

impl PolarPoint {
    /// Range in meters, azimuth and elevation in degrees, intensity normalized
    /// to `[0, 1]`. The azimuth is wrapped into `[0, 360)`.
    pub fn new(range: f64, azimuth: f64, elevation: f64, intensity: f64) -> Result<Self, MetricError> {
        for (field, value) in [
            ("range", range),
            ("azimuth", azimuth),
            ("elevation", elevation),
            ("intensity", intensity),
        ] {
            if !value.is_finite() {
                return Err(MetricError::NonFiniteInput { field, value });
            }
        }
        if range < 0.0 {
            return Err(MetricError::OutOfRange {
                field: "range",
                value: range,
                reason: "must be >= 0",
            });
        }
        if !(0.0..=1.0).contains(&intensity) {
            return Err(MetricError::OutOfRange {
                field: "intensity",
                value: intensity,
                reason: "must lie in [0, 1]",
            });
        }
        Ok(Self {
            range,
            azimuth: normalize_azimuth(azimuth),
            elevation,
            intensity,
        })
    }

    /// An empty array slot.
    pub const fn sentinel() -> Self {
        Self {
            range: 0.0,
            azimuth: 0.0,
            elevation: 0.0,
            intensity: 0.0,
        }
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn elevation(&self) -> f64 {
        self.elevation
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    /// True for a real detection, false for the range-0 sentinel.
    pub fn is_valid(&self) -> bool {
        self.range > 0.0
    }
}

/// An ordered set of valid detections.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointSet {
    points: Vec<PolarPoint>,
}

impl PointSet {
    pub fn new(points: Vec<PolarPoint>) -> Result<Self, MetricError> {
        if let Some((index, p)) = points.iter().enumerate().find(|(_, p)| !p.is_valid()) {
            return Err(MetricError::InvalidDetection {
                index,
                range: p.range,
            });
        }
        Ok(Self { points })
    }


    pub(crate) fn push_valid(&mut self, p: PolarPoint) {
        debug_assert!(p.is_valid());
        self.points.push(p);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[PolarPoint] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, PolarPoint> {
        self.points.iter()
    }
}

impl<'a> IntoIterator for &'a PointSet {
    type Item = &'a PolarPoint;
    type IntoIter = std::slice::Iter<'a, PolarPoint>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

/// Pairwise weight definition for the autocorrelation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightScheme {
    /// Every distinct pair weighs 1.
    Uniform,
    /// Inverse squared angular distance, with the distance clamped below at
    /// `min_separation` degrees.
    InverseAngularSquared { min_separation: f64 },
}

impl WeightScheme {
    pub fn inverse_angular(min_separation: f64) -> Result<Self, MetricError> {
        if !min_separation.is_finite() {
            return Err(MetricError::NonFiniteInput {
                field: "min_angular_separation",
                value: min_separation,
            });
        }
        if min_separation <= 0.0 {
            return Err(MetricError::OutOfRange {
                field: "min_angular_separation",
                value: min_separation,
                reason: "must be > 0",
            });
        }
        Ok(Self::InverseAngularSquared { min_separation })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::InverseAngularSquared { .. } => "inv-angular",
        }
    }
}

impl Default for WeightScheme {
    fn default() -> Self {
        Self::InverseAngularSquared {
            min_separation: DEFAULT_MIN_ANGULAR_SEPARATION,
        }
    }
}

/// Reference intensity and scale factor of the intensity multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityParams {
    gamma_ref: f64,
    k: f64,
}

impl IntensityParams {
    pub fn new(gamma_ref: f64, k: f64) -> Result<Self, MetricError> {
        if !gamma_ref.is_finite() {
            return Err(MetricError::NonFiniteInput {
                field: "gamma_ref",
                value: gamma_ref,
            });
        }
        if !k.is_finite() {
            return Err(MetricError::NonFiniteInput { field: "k", value: k });
        }
        if gamma_ref <= 0.0 || gamma_ref > 1.0 {
            return Err(MetricError::OutOfRange {
                field: "gamma_ref",
                value: gamma_ref,
                reason: "must lie in (0, 1]",
            });
        }
        if k <= 0.0 {
            return Err(MetricError::OutOfRange {
                field: "k",
                value: k,
                reason: "must be > 0",
            });
        }
        Ok(Self { gamma_ref, k })
    }

    pub fn gamma_ref(&self) -> f64 {
        self.gamma_ref
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Largest value the multiplier can take, `e^k`.
    pub fn max_multiplier(&self) -> f64 {
        self.k.exp()
    }
}

impl Default for IntensityParams {
    fn default() -> Self {
        Self {
            gamma_ref: DEFAULT_GAMMA_REF,
            k: DEFAULT_K,
        }
    }
}

/// Per-cell result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellScore {
    /// Unweighted spatial autocorrelation `I`.
    pub autocorrelation: f64,
    /// Intensity multiplier `K_γ`.
    pub multiplier: f64,
    pub count: usize,
    /// `K_γ · I`.
    pub product: f64,
}

/// Squared angular distance in degrees², with circular azimuth difference.
#[inline(always)]
fn angular_distance_sq(az_a: f64, el_a: f64, az_b: f64, el_b: f64) -> f64 {
    let da = (az_a - az_b).abs();
    let wrapped = 360.0 - da;
    // select instead of f64::min so the loop vectorizes
    let da = if wrapped < da { wrapped } else { da };
    let de = el_a - el_b;
    da * da + de * de
}

#[inline(always)]
fn clamp_below(d2: f64, min_d2: f64) -> f64 {
    if d2 < min_d2 {
        min_d2
    } else {
        d2
    }
}

/// Weight between two distinct points. The `i == j` case is zero by
/// definition and is the caller's responsibility.
pub fn pairwise_weight(a: &PolarPoint, b: &PolarPoint, scheme: WeightScheme) -> f64 {
    match scheme {
        WeightScheme::Uniform => 1.0,
        WeightScheme::InverseAngularSquared { min_separation } => {
            let d2 = angular_distance_sq(a.azimuth, a.elevation, b.azimuth, b.elevation);
            1.0 / d2.max(min_separation * min_separation)
        }
    }
}

fn check_finite_ranges(points: &PointSet) -> Result<(), MetricError> {
    match points.iter().find(|p| !p.range.is_finite()) {
        Some(p) => Err(MetricError::NonFiniteInput {
            field: "range",
            value: p.range,
        }),
        None => Ok(()),
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Spatial autocorrelation of the set's range values.
pub fn spatial_autocorrelation(points: &PointSet, scheme: WeightScheme) -> Result<f64, MetricError> {
    check_finite_ranges(points)?;
    let n = points.len();
    match n {
        0 => return Err(MetricError::EmptySet),
        1 => return Ok(-1.0),
        _ => {}
    }
    let first = points.points[0].range;
    if points.iter().all(|p| p.range == first) {
        return Ok(1.0);
    }

    let r_mean = mean(points.iter().map(|p| p.range));
    let dev: Vec<f64> = points.iter().map(|p| p.range - r_mean).collect();
    let denom: f64 = dev.iter().map(|z| z * z).sum();
    if denom == 0.0 {
        // Distinct ranges whose deviations underflow; treat as constant.
        return Ok(1.0);
    }

    let (cross, total_weight) = match scheme {
        WeightScheme::Uniform => {
            // Σ_{i≠j} z_i z_j = (Σ z)² - Σ z²
            let s: f64 = dev.iter().sum();
            let nf = n as f64;
            (s * s - denom, nf * (nf - 1.0))
        }
        WeightScheme::InverseAngularSquared { min_separation } => {
            let az: Vec<f64> = points.iter().map(|p| p.azimuth).collect();
            let el: Vec<f64> = points.iter().map(|p| p.elevation).collect();
            inverse_angular_sums(&az, &el, &dev, min_separation * min_separation)
        }
    };
    Ok(n as f64 / total_weight * cross / denom)
}

const LANES: usize = 4;

/// Returns `(Σ_{i≠j} w_ij z_i z_j, Σ_{i≠j} w_ij)` over the upper triangle,
/// doubled. Summation order is fixed by the input order.
fn inverse_angular_sums(az: &[f64], el: &[f64], dev: &[f64], min_d2: f64) -> (f64, f64) {
    let n = dev.len();
    let mut cross = 0.0;
    let mut total = 0.0;
    for i in 0..n - 1 {
        let (ai, ei, zi) = (az[i], el[i], dev[i]);
        let (a_rest, e_rest, z_rest) = (&az[i + 1..], &el[i + 1..], &dev[i + 1..]);

        let mut acc_w = [0.0f64; LANES];
        let mut acc_wz = [0.0f64; LANES];
        let chunks = a_rest.len() / LANES;
        for c in 0..chunks {
            let base = c * LANES;
            let a = &a_rest[base..base + LANES];
            let e = &e_rest[base..base + LANES];
            let z = &z_rest[base..base + LANES];
            for l in 0..LANES {
                let w = 1.0 / clamp_below(angular_distance_sq(ai, ei, a[l], e[l]), min_d2);
                acc_w[l] += w;
                acc_wz[l] += w * z[l];
            }
        }
        let mut row_w = (acc_w[0] + acc_w[1]) + (acc_w[2] + acc_w[3]);
        let mut row_wz = (acc_wz[0] + acc_wz[1]) + (acc_wz[2] + acc_wz[3]);
        for t in chunks * LANES..a_rest.len() {
            let w = 1.0 / clamp_below(angular_distance_sq(ai, ei, a_rest[t], e_rest[t]), min_d2);
            row_w += w;
            row_wz += w * z_rest[t];
        }
        total += row_w;
        cross += zi * row_wz;
    }
    (2.0 * cross, 2.0 * total)
}

/// `exp(k * max(0, γ_ref - γ̄) / γ_ref)` over the set's mean intensity.
pub fn intensity_multiplier(points: &PointSet, params: IntensityParams) -> Result<f64, MetricError> {
    if points.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let gamma_mean = mean(points.iter().map(|p| p.intensity));
    Ok(multiplier_for_mean(gamma_mean, params))
}

pub(crate) fn multiplier_for_mean(gamma_mean: f64, params: IntensityParams) -> f64 {
    let deficit = (params.gamma_ref - gamma_mean).max(0.0);
    (params.k * deficit / params.gamma_ref).exp()
}

/// Autocorrelation, multiplier and their product for one cell.
pub fn weighted_cell_score(
    points: &PointSet,
    scheme: WeightScheme,
    params: IntensityParams,
) -> Result<CellScore, MetricError> {
    let autocorrelation = spatial_autocorrelation(points, scheme)?;
    let multiplier = intensity_multiplier(points, params)?;
    Ok(CellScore {
        autocorrelation,
        multiplier,
        count: points.len(),
        product: multiplier * autocorrelation,
    })
}

/// Population variance of the ranges (Welford's update).
pub fn range_variance(points: &PointSet) -> Result<f64, MetricError> {
    if points.is_empty() {
        return Err(MetricError::EmptySet);
    }
    check_finite_ranges(points)?;
    let mut running_mean = 0.0;
    let mut m2 = 0.0;
    for (idx, p) in points.iter().enumerate() {
        let count = (idx + 1) as f64;
        let delta = p.range - running_mean;
        running_mean += delta / count;
        m2 += delta * (p.range - running_mean);
    }
    Ok(m2 / points.len() as f64)
}
