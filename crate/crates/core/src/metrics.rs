//! Correlation and clean-detection metrics over per-utterance predictions.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pseudo score of unmixed utterances; the positive class for F1.
pub const CLEAN_SCORE: f64 = 8.0;

/// Operating point used when no threshold is fitted.
pub const DEFAULT_THRESHOLD: f64 = 7.1;

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::UndefinedCorrelation("inputs differ in length"));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least two observations"));
    }
    Ok(())
}

/// Pearson linear correlation coefficient.
pub fn lcc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn srcc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    lcc(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when a denominator was zero and the affected value defaulted to 0.
    pub degenerate: bool,
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_from(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Precision/recall/F1 of the clean class, predicting clean iff `score >= threshold`.
pub fn clean_f1(is_clean: &[bool], scores: &[f64], threshold: f64) -> Result<F1Score> {
    if is_clean.len() != scores.len() {
        return Err(Error::Config("clean flags and scores differ in length".into()));
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&clean, &s) in is_clean.iter().zip(scores) {
        match (clean, s >= threshold) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fneg += 1,
            (false, false) => {}
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { None } else { Some(num as f64 / den as f64) };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fneg);
    let degenerate = p.is_none() || r.is_none();
    let (precision, recall) = (p.unwrap_or(0.0), r.unwrap_or(0.0));
    Ok(F1Score {
        precision,
        recall,
        f1: f1_from(precision, recall),
        degenerate,
    })
}

/// Threshold maximising clean-class F1 on training predictions.
///
/// Candidates are midpoints between adjacent distinct sorted scores; ties in
/// F1 go to the higher threshold.
pub fn threshold_from_train(scores: &[f64], is_clean: &[bool]) -> Result<f64> {
    if scores.len() != is_clean.len() {
        return Err(Error::Config("clean flags and scores differ in length".into()));
    }
    let n_clean = is_clean.iter().filter(|&&c| c).count();
    if n_clean == 0 || n_clean == is_clean.len() {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sweep upward: everything at index >= i is predicted clean.
    let mut tp = n_clean;
    let mut fp = is_clean.len() - n_clean;
    let mut best: Option<(f64, f64)> = None;
    for i in 1..order.len() {
        let prev = order[i - 1];
        if is_clean[prev] {
            tp -= 1;
        } else {
            fp -= 1;
        }
        let (lo, hi) = (scores[prev], scores[order[i]]);
        if lo == hi {
            continue;
        }
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = tp as f64 / n_clean as f64;
        let f1 = f1_from(precision, recall);
        let threshold = lo + (hi - lo) / 2.0;
        if best.is_none_or(|(bf, _)| f1 >= bf) {
            best = Some((f1, threshold));
        }
    }
    best.map(|(_, t)| t)
        .ok_or(Error::Config("all scores are equal; no threshold separates them".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub target: f64,
    pub predicted: f64,
    pub is_clean: bool,
    pub predicted_clean: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub lcc: f64,
    pub srcc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
    pub rows: Vec<PredictionRow>,
}

impl EvalReport {
    /// Builds a report from `(id, target, predicted)` triples; clean means target = 8.
    pub fn from_predictions(
        predictions: impl IntoIterator<Item = (String, f64, f64)>,
        threshold: f64,
    ) -> Result<Self> {
        let rows: Vec<PredictionRow> = predictions
            .into_iter()
            .map(|(id, target, predicted)| PredictionRow {
                id,
                target,
                predicted,
                is_clean: target == CLEAN_SCORE,
                predicted_clean: predicted >= threshold,
            })
            .collect();
        let targets: Vec<f64> = rows.iter().map(|r| r.target).collect();
        let predicted: Vec<f64> = rows.iter().map(|r| r.predicted).collect();
        let clean: Vec<bool> = rows.iter().map(|r| r.is_clean).collect();
        let f = clean_f1(&clean, &predicted, threshold)?;
        Ok(Self {
            lcc: lcc(&targets, &predicted)?,
            srcc: srcc(&targets, &predicted)?,
            precision: f.precision,
            recall: f.recall,
            f1: f.f1,
            threshold,
            rows,
        })
    }

    /// Summary table, columns LCC, SRCC, Precision, Recall, F1.
    pub fn table(&self, label: &str) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "{:<12} {:>7} {:>7} {:>9} {:>7} {:>7}",
            "Method", "LCC", "SRCC", "Precision", "Recall", "F1"
        )
        .unwrap();
        writeln!(
            s,
            "{:<12} {:>7.3} {:>7.3} {:>9.3} {:>7.3} {:>7.3}",
            label, self.lcc, self.srcc, self.precision, self.recall, self.f1
        )
        .unwrap();
        write!(s, "threshold {:.4}, {} utterances", self.threshold, self.rows.len()).unwrap();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_and_negated() {
        let x = [1.0, 2.0, 4.0, 7.0, 11.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!((lcc(&x, &y).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((lcc(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_variance_is_undefined() {
        assert!(lcc(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(srcc(&[1.0, 2.0], &[5.0, 5.0]).is_err());
        assert!(lcc(&[1.0], &[1.0]).is_err());
        assert!(lcc(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn spearman_small_case() {
        assert!((srcc(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0, 20.0, 10.0]), vec![2.0, 4.5, 2.0, 6.0, 4.5, 2.0]);
    }

    #[test]
    fn table_three_f1_values() {
        assert!((f1_from(0.927, 0.781) - 0.848).abs() < 1e-3);
        assert!((f1_from(0.728, 0.777) - 0.752).abs() < 1e-3);
    }

    #[test]
    fn perfect_and_degenerate_f1() {
        let f = clean_f1(&[true, false, true], &[8.0, 3.0, 7.5], 7.1).unwrap();
        assert_eq!((f.precision, f.recall, f.f1, f.degenerate), (1.0, 1.0, 1.0, false));
        let f = clean_f1(&[true, false], &[1.0, 2.0], 7.1).unwrap();
        assert_eq!(f.f1, 0.0);
        assert!(f.degenerate);
    }

    #[test]
    fn separated_classes_give_gap_midpoint() {
        let scores = [1.0, 2.0, 4.0, 7.0, 8.0, 8.4];
        let clean = [false, false, false, false, true, true];
        assert_eq!(threshold_from_train(&scores, &clean).unwrap(), 7.5);
        assert!(matches!(
            threshold_from_train(&scores, &[false; 6]),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn report_table_column_order() {
        let r = EvalReport::from_predictions(
            vec![
                ("a".to_string(), 8.0, 8.0),
                ("b".to_string(), 1.0, 1.0),
                ("c".to_string(), 5.0, 5.0),
            ],
            7.1,
        )
        .unwrap();
        let header = r.table("LC_ATT").lines().next().unwrap().to_string();
        let cols: Vec<&str> = header.split_whitespace().collect();
        assert_eq!(cols, ["Method", "LCC", "SRCC", "Precision", "Recall", "F1"]);
        assert!(r.table("LC_ATT").contains("1.000"));
        assert_eq!(r.f1, 1.0);
    }
}
