//! Precision-recall curves, restricted AUC, threshold tuning, P/R/F1, the
//! lemma baseline and expected validation performance.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::EntailmentInstance;
use crate::error::{LiicError, Result};

pub const DEFAULT_MIN_PRECISION: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub precision: f64,
    pub recall: f64,
    pub threshold: f64,
}

/// Points sorted by descending threshold; recall is non-decreasing.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(LiicError::Metric(format!("{a} scores/predictions but {b} labels")));
    }
    Ok(())
}

/// One point per distinct score `t`, predicting positive iff `score ≥ t`.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<PrCurve> {
    check_lengths(scores.len(), labels.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(LiicError::Metric("NaN score".into()));
    }
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 {
        return Err(LiicError::Metric("recall undefined: no positive labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / positives as f64,
            threshold: t,
        });
    }
    Ok(PrCurve { points })
}

/// Trapezoidal area under precision over recall where precision is at least
/// `min_precision`, unnormalized. Segments are integrated between consecutive
/// points; with `interpolate`, a segment crossing the cutoff contributes the
/// part on the qualifying side of the linearly interpolated crossing,
/// otherwise only segments with both endpoints qualifying count.
pub fn auc_restricted(curve: &PrCurve, min_precision: f64, interpolate: bool) -> f64 {
    let mut area = 0.0;
    for w in curve.points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let dr = b.recall - a.recall;
        if dr <= 0.0 {
            continue;
        }
        let (qa, qb) = (a.precision >= min_precision, b.precision >= min_precision);
        if qa && qb {
            area += dr * (a.precision + b.precision) / 2.0;
        } else if interpolate && (qa || qb) {
            let frac = (min_precision - a.precision) / (b.precision - a.precision);
            let r_cross = a.recall + frac * dr;
            area += if qa {
                (r_cross - a.recall) * (a.precision + min_precision) / 2.0
            } else {
                (b.recall - r_cross) * (min_precision + b.precision) / 2.0
            };
        }
    }
    area
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Counts,
    /// Set when nothing was predicted positive and precision was defined as 0.
    pub no_positive_predictions: bool,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn prf1(predictions: &[bool], labels: &[bool]) -> Result<Prf1> {
    check_lengths(predictions.len(), labels.len())?;
    let mut c = Counts::default();
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    let predicted = c.tp + c.fp;
    let precision = if predicted == 0 { 0.0 } else { c.tp as f64 / predicted as f64 };
    let recall = if c.tp + c.fn_ == 0 {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fn_) as f64
    };
    // from counts, so equal F1 values compare equal when tuning breaks ties
    let f1 = if c.tp == 0 {
        0.0
    } else {
        (2 * c.tp) as f64 / (2 * c.tp + c.fp + c.fn_) as f64
    };
    Ok(Prf1 {
        precision,
        recall,
        f1,
        counts: c,
        no_positive_predictions: predicted == 0,
    })
}

/// Predictions `score > ϑ` for every score.
pub fn predict(scores: &[f64], threshold: f64) -> Vec<bool> {
    scores.iter().map(|&s| s > threshold).collect()
}

/// Candidate thresholds: midpoints between consecutive distinct scores plus
/// `min − 1` and `max + 1`, in ascending order.
pub fn threshold_candidates(scores: &[f64]) -> Vec<f64> {
    let mut distinct: Vec<f64> = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut out = Vec::with_capacity(distinct.len() + 1);
    if let (Some(&lo), Some(&hi)) = (distinct.first(), distinct.last()) {
        out.push(lo - 1.0);
        out.extend(distinct.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
        out.push(hi + 1.0);
    }
    out
}

/// The F1-maximizing threshold for the decision `score > ϑ`, with its F1.
/// Ties go to the larger threshold.
pub fn tune_threshold(scores: &[f64], labels: &[bool]) -> Result<(f64, f64)> {
    check_lengths(scores.len(), labels.len())?;
    if scores.is_empty() || !labels.iter().any(|&y| y) {
        return Err(LiicError::Metric("threshold tuning needs a non-empty set with a positive".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(LiicError::Metric("non-finite score".into()));
    }
    let mut best = (f64::NAN, -1.0);
    for t in threshold_candidates(scores) {
        let f1 = prf1(&predict(scores, t), labels)?.f1;
        if f1 >= best.1 {
            best = (t, f1);
        }
    }
    Ok(best)
}

/// Lemma baseline: 1 iff the head lemmas of premise and hypothesis agree.
/// The boolean flag reports a fallback to lowercased last tokens because a
/// lemma was missing.
pub fn lemma_baseline(inst: &EntailmentInstance) -> (bool, bool) {
    match (inst.prem.head_lemma(), inst.hypo.head_lemma()) {
        (Some(a), Some(b)) => (a == b, false),
        _ => {
            let last = |e: &crate::datamodel::VerbalExpression| e.tokens.last().map(|t| t.to_lowercase());
            (last(&inst.prem) == last(&inst.hypo), true)
        }
    }
}

/// Expected maximum of `n` draws with replacement from `run_scores`:
/// `Σ v_i (F(v_i)ⁿ − F(v_{i−1})ⁿ)` over sorted distinct values.
pub fn expected_validation_performance(run_scores: &[f64], n: u32) -> Result<f64> {
    if run_scores.is_empty() || n == 0 {
        return Err(LiicError::Metric("expected validation performance needs scores and n ≥ 1".into()));
    }
    let mut sorted = run_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total = sorted.len() as f64;
    let mut out = 0.0;
    let mut prev_cdf_pow = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        while i < sorted.len() && sorted[i] == v {
            i += 1;
        }
        let cdf_pow = (i as f64 / total).powi(n as i32);
        out += v * (cdf_pow - prev_cdf_pow);
        prev_cdf_pow = cdf_pow;
    }
    Ok(out)
}

/// Metrics of one evaluated run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub auc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
    pub counts: Counts,
    #[serde(default)]
    pub no_positive_predictions: bool,
}

impl RunMetrics {
    /// Restricted AUC of the score curve plus P/R/F1 at `threshold`.
    pub fn compute(scores: &[f64], labels: &[bool], threshold: f64, interpolate: bool) -> Result<Self> {
        let curve = pr_curve(scores, labels)?;
        let m = prf1(&predict(scores, threshold), labels)?;
        Ok(RunMetrics {
            auc: auc_restricted(&curve, DEFAULT_MIN_PRECISION, interpolate),
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            threshold,
            counts: m.counts,
            no_positive_predictions: m.no_positive_predictions,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// CSV with header `threshold,precision,recall`.
pub fn write_curve_csv<W: Write>(curve: &PrCurve, mut out: W) -> Result<()> {
    writeln!(out, "threshold,precision,recall")?;
    for p in &curve.points {
        writeln!(out, "{},{},{}", p.threshold, p.precision, p.recall)?;
    }
    Ok(())
}
