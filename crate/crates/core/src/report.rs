//! CSV reports: score series, threshold sweeps, score CDFs and grid dumps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::grid::FrameScore;

pub const SCORE_HEADER: &str = "frame_id,timestamp_us,score,unweighted,mean_range_variance";
pub const LABEL_HEADER: &str = "frame_id,label";
pub const THRESHOLD_HEADER: &str = "threshold,positive_kept,negative_filtered";
pub const CDF_HEADER: &str = "set,score,cumulative_fraction";
pub const GRID_HEADER: &str = "row,col,count,autocorrelation,multiplier,product,flag";
/// Default grid-dump flag bar.
pub const DEFAULT_FLAG_THRESHOLD: f64 = -0.4;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("frame ids must be strictly increasing: {previous} then {next}")]
    Unordered { previous: u64, next: u64 },
    #[error("frames without a label: {0:?}")]
    Unlabeled(Vec<u64>),
    #[error("duplicate label for frame {0}")]
    DuplicateLabel(u64),
    #[error("invalid threshold {0}")]
    Threshold(String),
}

/// One scored frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRow {
    pub frame_id: u64,
    pub timestamp_us: u64,
    pub score: f64,
    pub unweighted: f64,
    pub mean_range_variance: f64,
}

/// Score rows in strictly increasing frame-id order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSeries {
    rows: Vec<ScoreRow>,
}

impl ScoreSeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: ScoreRow) -> Result<(), ReportError> {
        if let Some(last) = self.rows.last() {
            if row.frame_id <= last.frame_id {
                return Err(ReportError::Unordered {
                    previous: last.frame_id,
                    next: row.frame_id,
                });
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[ScoreRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{SCORE_HEADER}\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.frame_id, r.timestamp_us, r.score, r.unweighted, r.mean_range_variance
            )
            .unwrap();
        }
        out
    }

    /// Parses [`Self::to_csv`] output. Extra columns after the fixed ones are
    /// ignored; `#` lines are comments.
    pub fn parse_csv(text: &str) -> Result<Self, ReportError> {
        let mut series = Self::new();
        let mut header_seen = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                header_seen = true;
                if line.starts_with("frame_id") {
                    continue;
                }
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() < 5 {
                return Err(parse_err(line_no, format!("expected 5 columns, found {}", f.len())));
            }
            let float = |s: &str, name: &str| {
                s.parse::<f64>()
                    .map_err(|_| parse_err(line_no, format!("bad {name} {s:?}")))
            };
            series.push(ScoreRow {
                frame_id: f[0].parse().map_err(|_| parse_err(line_no, format!("bad frame_id {:?}", f[0])))?,
                timestamp_us: f[1]
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad timestamp_us {:?}", f[1])))?,
                score: float(f[2], "score")?,
                unweighted: float(f[3], "unweighted")?,
                mean_range_variance: float(f[4], "mean_range_variance")?,
            })?;
        }
        Ok(series)
    }
}

fn parse_err(line: usize, message: String) -> ReportError {
    ReportError::Parse { line, message }
}

/// Parses `frame_id,label` lines. Positive labels: `positive`, `pos`, `tp`,
/// `1`, `true`; negative: `negative`, `neg`, `fp`, `0`, `false`.
pub fn parse_labels(text: &str) -> Result<BTreeMap<u64, bool>, ReportError> {
    let mut labels = BTreeMap::new();
    let mut header_seen = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            header_seen = true;
            if line.starts_with("frame_id") {
                continue;
            }
        }
        let (id, label) = line
            .split_once(',')
            .ok_or_else(|| parse_err(line_no, "expected frame_id,label".into()))?;
        let id: u64 = id
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad frame_id {id:?}")))?;
        let positive = match label.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" | "tp" | "1" | "true" => true,
            "negative" | "neg" | "fp" | "0" | "false" => false,
            other => return Err(parse_err(line_no, format!("unknown label {other:?}"))),
        };
        if labels.insert(id, positive).is_some() {
            return Err(ReportError::DuplicateLabel(id));
        }
    }
    Ok(labels)
}

/// Kept / filtered fractions per threshold. A frame is flagged when its score
/// is below the threshold: labeled positives that are flagged are kept,
/// labeled negatives that are not flagged are filtered.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    pub thresholds: Vec<f64>,
    pub positive_kept: Vec<f64>,
    pub negative_filtered: Vec<f64>,
    pub positives: usize,
    pub negatives: usize,
}

impl ThresholdReport {
    /// Thresholds are sorted and deduplicated. With no frames in a class,
    /// that class's fractions are reported as 0.
    pub fn build(scores: &[(u64, f64)], labels: &BTreeMap<u64, bool>, thresholds: &[f64]) -> Result<Self, ReportError> {
        if let Some(bad) = thresholds.iter().find(|t| !t.is_finite()) {
            return Err(ReportError::Threshold(bad.to_string()));
        }
        let unlabeled: BTreeSet<u64> = scores
            .iter()
            .filter(|(id, _)| !labels.contains_key(id))
            .map(|(id, _)| *id)
            .collect();
        if !unlabeled.is_empty() {
            return Err(ReportError::Unlabeled(unlabeled.into_iter().collect()));
        }

        let mut ts = thresholds.to_vec();
        ts.sort_by(f64::total_cmp);
        ts.dedup();

        let mut pos: Vec<f64> = scores.iter().filter(|(id, _)| labels[id]).map(|(_, s)| *s).collect();
        let mut neg: Vec<f64> = scores.iter().filter(|(id, _)| !labels[id]).map(|(_, s)| *s).collect();
        pos.sort_by(f64::total_cmp);
        neg.sort_by(f64::total_cmp);

        // number of sorted values strictly below t
        let below = |v: &[f64], t: f64| v.partition_point(|s| *s < t);
        let frac = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };

        let positive_kept = ts.iter().map(|&t| frac(below(&pos, t), pos.len())).collect();
        let negative_filtered = ts
            .iter()
            .map(|&t| frac(neg.len() - below(&neg, t), neg.len()))
            .collect();
        Ok(Self {
            thresholds: ts,
            positive_kept,
            negative_filtered,
            positives: pos.len(),
            negatives: neg.len(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{THRESHOLD_HEADER}\n");
        for i in 0..self.thresholds.len() {
            writeln!(
                out,
                "{},{},{}",
                self.thresholds[i], self.positive_kept[i], self.negative_filtered[i]
            )
            .unwrap();
        }
        out
    }
}

/// Empirical CDF as `(score, fraction of scores <= score)` at each distinct
/// score, ascending. Empty input gives an empty CDF.
pub fn score_cdf(scores: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, s) in sorted.iter().enumerate() {
        let fraction = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *s => last.1 = fraction,
            _ => out.push((*s, fraction)),
        }
    }
    out
}

/// CDF report over all scores and each labeled class, as CSV.
pub fn cdf_csv(scores: &[(u64, f64)], labels: &BTreeMap<u64, bool>) -> String {
    let mut out = format!("{CDF_HEADER}\n");
    for (name, class) in [("all", None), ("positive", Some(true)), ("negative", Some(false))] {
        let subset: Vec<f64> = scores
            .iter()
            .filter(|(id, _)| class.is_none() || labels.get(id) == class.as_ref())
            .map(|(_, s)| *s)
            .collect();
        for (s, f) in score_cdf(&subset) {
            writeln!(out, "{name},{s},{f}").unwrap();
        }
    }
    out
}

/// Per-cell table of a scored frame. Empty cells get blank numeric fields
/// and the flag `empty`; cells with `I` below the threshold are `low`.
pub fn grid_dump_csv(score: &FrameScore, flag_threshold: f64) -> String {
    let mut out = format!("{GRID_HEADER}\n");
    let cols = score.config.cols();
    for (idx, cell) in score.cells.iter().enumerate() {
        let (row, col) = (idx / cols, idx % cols);
        match cell {
            None => writeln!(out, "{row},{col},0,,,,empty").unwrap(),
            Some(c) => {
                let flag = if c.autocorrelation < flag_threshold { "low" } else { "" };
                writeln!(
                    out,
                    "{row},{col},{},{},{},{},{flag}",
                    c.count, c.autocorrelation, c.multiplier, c.product
                )
                .unwrap();
            }
        }
    }
    out
}

/// Number of non-empty cells whose `I` is below the threshold.
pub fn flagged_cells(score: &FrameScore, flag_threshold: f64) -> usize {
    score
        .cells
        .iter()
        .flatten()
        .filter(|c| c.autocorrelation < flag_threshold)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(pairs: &[(u64, bool)]) -> BTreeMap<u64, bool> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn boundaries_all_positive() {
        let scores = [(0, -0.5), (1, 0.2), (2, 0.7)];
        let l = labels(&[(0, true), (1, true), (2, true)]);
        let r = ThresholdReport::build(&scores, &l, &[-1.0, 1.0]).unwrap();
        assert_eq!(r.positive_kept, vec![0.0, 1.0]);
        assert_eq!(r.negative_filtered, vec![0.0, 0.0]);
    }

    #[test]
    fn threshold_is_strict() {
        let scores = [(0, 0.0), (1, 0.0)];
        let l = labels(&[(0, true), (1, false)]);
        let r = ThresholdReport::build(&scores, &l, &[0.0]).unwrap();
        assert_eq!(r.positive_kept, vec![0.0]);
        assert_eq!(r.negative_filtered, vec![1.0]);
    }

    #[test]
    fn unlabeled_frames_listed() {
        let scores = [(0, 0.1), (5, 0.2), (9, 0.3)];
        let l = labels(&[(0, true)]);
        match ThresholdReport::build(&scores, &l, &[0.0]) {
            Err(ReportError::Unlabeled(ids)) => assert_eq!(ids, vec![5, 9]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn thresholds_sorted_and_checked() {
        let r = ThresholdReport::build(&[], &BTreeMap::new(), &[0.5, -0.5, 0.5]).unwrap();
        assert_eq!(r.thresholds, vec![-0.5, 0.5]);
        assert!(ThresholdReport::build(&[], &BTreeMap::new(), &[f64::NAN]).is_err());
    }

    #[test]
    fn cdf_ties_and_end() {
        let cdf = score_cdf(&[0.3, -0.1, 0.3, 0.9]);
        assert_eq!(cdf, vec![(-0.1, 0.25), (0.3, 0.75), (0.9, 1.0)]);
        assert!(score_cdf(&[]).is_empty());
    }

    #[test]
    fn series_csv_round_trip() {
        let mut s = ScoreSeries::new();
        s.push(ScoreRow {
            frame_id: 0,
            timestamp_us: 0,
            score: 0.125,
            unweighted: 0.1,
            mean_range_variance: 3.5,
        })
        .unwrap();
        s.push(ScoreRow {
            frame_id: 10,
            timestamp_us: 1_000_000,
            score: -0.3,
            unweighted: -0.2,
            mean_range_variance: 0.0,
        })
        .unwrap();
        let back = ScoreSeries::parse_csv(&s.to_csv()).unwrap();
        assert_eq!(back, s);
        assert!(s
            .clone()
            .push(ScoreRow {
                frame_id: 10,
                ..s.rows()[0]
            })
            .is_err());
    }

    #[test]
    fn label_parsing() {
        let l = parse_labels("frame_id,label\n0,positive\n1,fp\n2, 1\n").unwrap();
        assert_eq!(l, labels(&[(0, true), (1, false), (2, true)]));
        assert!(parse_labels("0,maybe\n").is_err());
        assert!(matches!(parse_labels("0,tp\n0,fp\n"), Err(ReportError::DuplicateLabel(0))));
    }
}
