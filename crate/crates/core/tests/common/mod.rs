//! Test-side reference implementations. Written from the formulas directly,
//! without reusing library internals: full `i != j` double loops, two-pass
//! statistics, and a separate binning routine.
#![allow(dead_code)]

use pcq_core::{PolarPoint, SensorProfile};

pub const MIN_SEP: f64 = 0.05;

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

fn circular_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}

/// Weight between two points; `None` means uniform weights.
pub fn weight(a: &PolarPoint, b: &PolarPoint, min_sep: Option<f64>) -> f64 {
    match min_sep {
        None => 1.0,
        Some(m) => {
            let da = circular_diff(a.azimuth(), b.azimuth());
            let de = a.elevation() - b.elevation();
            let d = (da * da + de * de).sqrt().max(m);
            1.0 / (d * d)
        }
    }
}

/// Moran's I of the ranges by direct double summation.
pub fn moran(points: &[PolarPoint], min_sep: Option<f64>) -> f64 {
    let n = points.len();
    assert!(n > 0);
    if n == 1 {
        return -1.0;
    }
    if points.iter().all(|p| p.range() == points[0].range()) {
        return 1.0;
    }
    let mean = points.iter().map(|p| p.range()).sum::<f64>() / n as f64;
    let mut num = 0.0;
    let mut w_total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = weight(&points[i], &points[j], min_sep);
            w_total += w;
            num += w * (points[i].range() - mean) * (points[j].range() - mean);
        }
    }
    let den: f64 = points.iter().map(|p| (p.range() - mean).powi(2)).sum();
    n as f64 / w_total * num / den
}

pub fn multiplier(points: &[PolarPoint], gamma_ref: f64, k: f64) -> f64 {
    let mean = points.iter().map(|p| p.intensity()).sum::<f64>() / points.len() as f64;
    (k * (gamma_ref - mean).max(0.0) / gamma_ref).exp()
}

/// Two-pass population variance.
pub fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Cell of a detection: equal-width bins, top edges closed, out-of-view
/// directions moved to the nearest edge cell.
pub fn bin(profile: &SensorProfile, rows: usize, cols: usize, azimuth: f64, elevation: f64) -> (usize, usize) {
    let el_frac = (elevation - profile.elevation_min()) / (profile.elevation_max() - profile.elevation_min());
    let row = ((el_frac * rows as f64).floor().max(0.0) as usize).min(rows - 1);

    let span = profile.azimuth_span();
    let offset = (azimuth - profile.azimuth_start()).rem_euclid(360.0);
    let col = if span >= 360.0 || offset < span {
        ((offset / span * cols as f64).floor() as usize).min(cols - 1)
    } else {
        let past_end = offset - span;
        let before_start = 360.0 - offset;
        if before_start < past_end {
            0
        } else {
            cols - 1
        }
    };
    (row, col)
}

pub struct Reference {
    pub score: f64,
    pub unweighted: f64,
    pub mean_range_variance: f64,
    /// Row-major `(I, K)` of non-empty cells.
    pub cells: Vec<Option<(f64, f64)>>,
}

/// Grid score from scratch: bin, per-cell double loop, average over all
/// `rows * cols` cells.
pub fn frame_reference(
    points: &[PolarPoint],
    profile: &SensorProfile,
    rows: usize,
    cols: usize,
    min_sep: Option<f64>,
    gamma_ref: f64,
    k: f64,
) -> Reference {
    let mut cells: Vec<Vec<PolarPoint>> = vec![Vec::new(); rows * cols];
    for p in points.iter().filter(|p| p.range() > 0.0) {
        let (r, c) = bin(profile, rows, cols, p.azimuth(), p.elevation());
        cells[r * cols + c].push(*p);
    }
    let mut out = Vec::with_capacity(cells.len());
    let (mut s, mut u, mut var_sum, mut non_empty) = (0.0, 0.0, 0.0, 0usize);
    for cell in &cells {
        if cell.is_empty() {
            out.push(None);
            continue;
        }
        let i = moran(cell, min_sep);
        let kk = multiplier(cell, gamma_ref, k);
        s += kk * i;
        u += i;
        let ranges: Vec<f64> = cell.iter().map(|p| p.range()).collect();
        var_sum += variance(&ranges);
        non_empty += 1;
        out.push(Some((i, kk)));
    }
    let vh = (rows * cols) as f64;
    Reference {
        score: s / vh,
        unweighted: u / vh,
        mean_range_variance: if non_empty == 0 { 0.0 } else { var_sum / non_empty as f64 },
        cells: out,
    }
}
