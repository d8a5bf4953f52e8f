//! Evaluation metrics: character error rate, chrF, ROC AUC and operating
//! points for word detection, and temporal-overlap F1.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("ground truth is empty")]
    EmptyTruth,
    #[error("AUC needs both classes: {positives} positive, {negatives} negative samples")]
    SingleClass { positives: usize, negatives: usize },
    #[error("non-finite score {0}")]
    NonFinite(f64),
    #[error("span {id} ends before it starts ({start} > {end})")]
    BadSpan { id: String, start: usize, end: usize },
}

/// Levenshtein distance over characters, two-row dynamic programme.
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(ca != cb)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edits (substitutions, deletions, insertions) per ground-truth character;
/// spaces count as characters.
pub fn cer(truth: &str, hyp: &str) -> Result<f64, MetricError> {
    let t: Vec<char> = truth.chars().collect();
    if t.is_empty() {
        return Err(MetricError::EmptyTruth);
    }
    let h: Vec<char> = hyp.chars().collect();
    Ok(levenshtein(&t, &h) as f64 / t.len() as f64)
}

/// Corpus CER: total edits over total truth characters.
pub fn corpus_cer<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<f64, MetricError> {
    let (mut edits, mut chars) = (0usize, 0usize);
    for (truth, hyp) in pairs {
        let t: Vec<char> = truth.chars().collect();
        let h: Vec<char> = hyp.chars().collect();
        edits += levenshtein(&t, &h);
        chars += t.len();
    }
    if chars == 0 {
        return Err(MetricError::EmptyTruth);
    }
    Ok(edits as f64 / chars as f64)
}

pub const CHRF_ORDER: usize = 6;
pub const CHRF_BETA: f64 = 2.0;

/// chrF with the usual order 6 and β = 2.
pub fn chrf(reference: &str, hypothesis: &str) -> f64 {
    chrf_with(reference, hypothesis, CHRF_ORDER, CHRF_BETA)
}

/// Character n-gram F-score. Whitespace is removed; n-gram precision and
/// recall are averaged over the orders present on both sides, then combined
/// into F_β. Two empty strings score 1, one empty string scores 0.
pub fn chrf_with(reference: &str, hypothesis: &str, order: usize, beta: f64) -> f64 {
    let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let h: Vec<char> = hypothesis.chars().filter(|c| !c.is_whitespace()).collect();
    if r.is_empty() && h.is_empty() {
        return 1.0;
    }
    let (mut p_sum, mut r_sum, mut orders) = (0.0, 0.0, 0usize);
    for n in 1..=order {
        if r.len() < n || h.len() < n {
            continue;
        }
        let rc = ngram_counts(&r, n);
        let hc = ngram_counts(&h, n);
        let matched: usize = hc.iter().map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0))).sum();
        p_sum += matched as f64 / (h.len() - n + 1) as f64;
        r_sum += matched as f64 / (r.len() - n + 1) as f64;
        orders += 1;
    }
    if orders == 0 {
        return 0.0;
    }
    let (p, r) = (p_sum / orders as f64, r_sum / orders as f64);
    let b2 = beta * beta;
    if p + r == 0.0 {
        0.0
    } else {
        (1.0 + b2) * p * r / (b2 * p + r)
    }
}

fn ngram_counts(s: &[char], n: usize) -> HashMap<&[char], usize> {
    let mut m: HashMap<&[char], usize> = HashMap::new();
    for w in s.windows(n) {
        *m.entry(w).or_default() += 1;
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub score: f64,
    pub label: bool,
}

/// One ROC point: thresholding at `threshold` (score ≥ threshold is
/// positive) gives these rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

fn check_finite(samples: &[LabeledScore]) -> Result<(), MetricError> {
    match samples.iter().find(|s| !s.score.is_finite()) {
        Some(s) => Err(MetricError::NonFinite(s.score)),
        None => Ok(()),
    }
}

/// ROC AUC from the Mann–Whitney rank statistic (tied scores share their
/// average rank, so tied pairs count half), plus the ROC curve from
/// (0,0) to (1,1) with one point per distinct score.
pub fn roc_auc(samples: &[LabeledScore]) -> Result<(f64, Vec<RocPoint>), MetricError> {
    check_finite(samples)?;
    let positives = samples.iter().filter(|s| s.label).count();
    let negatives = samples.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricError::SingleClass { positives, negatives });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].score == sorted[i].score {
            j += 1;
        }
        // Ranks i+1..=j share their mean.
        let mean_rank = (i + 1 + j) as f64 / 2.0;
        rank_sum += mean_rank * sorted[i..j].iter().filter(|s| s.label).count() as f64;
        i = j;
    }
    let (np, nn) = (positives as f64, negatives as f64);
    let auc = (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);

    let mut curve = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = sorted.len();
    while k > 0 {
        let score = sorted[k - 1].score;
        while k > 0 && sorted[k - 1].score == score {
            if sorted[k - 1].label {
                tp += 1;
            } else {
                fp += 1;
            }
            k -= 1;
        }
        curve.push(RocPoint {
            threshold: score,
            fpr: fp as f64 / nn,
            tpr: tp as f64 / np,
        });
    }
    Ok((auc, curve))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrecisionRecall {
    /// From match counts; an empty denominator gives 0.
    pub fn from_counts(true_positives: usize, predicted: usize, actual: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(true_positives, predicted);
        let recall = ratio(true_positives, actual);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        PrecisionRecall { precision, recall, f1 }
    }
}

/// Precision, recall and F1 when samples scoring at least `threshold` are
/// called positive.
pub fn op_point(samples: &[LabeledScore], threshold: f64) -> PrecisionRecall {
    let predicted = samples.iter().filter(|s| s.score >= threshold).count();
    let tp = samples.iter().filter(|s| s.score >= threshold && s.label).count();
    let actual = samples.iter().filter(|s| s.label).count();
    PrecisionRecall::from_counts(tp, predicted, actual)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedSpan {
    pub id: String,
    pub start_frame: usize,
    pub end_frame: usize,
}

impl TimedSpan {
    pub fn new(id: impl Into<String>, start_frame: usize, end_frame: usize) -> Self {
        TimedSpan {
            id: id.into(),
            start_frame,
            end_frame,
        }
    }

    fn overlaps(&self, other: &TimedSpan) -> bool {
        self.start_frame <= other.end_frame && other.start_frame <= self.end_frame
    }
}

/// Greedy one-to-one matching in time order: each prediction takes the
/// earliest unmatched truth span sharing at least one frame with it.
pub fn temporal_f1(pred: &[TimedSpan], truth: &[TimedSpan]) -> Result<PrecisionRecall, MetricError> {
    for s in pred.iter().chain(truth) {
        if s.start_frame > s.end_frame {
            return Err(MetricError::BadSpan {
                id: s.id.clone(),
                start: s.start_frame,
                end: s.end_frame,
            });
        }
    }
    let key = |s: &&TimedSpan| (s.start_frame, s.end_frame);
    let mut p: Vec<&TimedSpan> = pred.iter().collect();
    let mut t: Vec<&TimedSpan> = truth.iter().collect();
    p.sort_by_key(key);
    t.sort_by_key(key);
    let mut used = vec![false; t.len()];
    let mut matched = 0;
    for q in p {
        if let Some(k) = (0..t.len()).find(|&k| !used[k] && q.overlaps(t[k])) {
            used[k] = true;
            matched += 1;
        }
    }
    Ok(PrecisionRecall::from_counts(matched, pred.len(), truth.len()))
}

/// Word-length strata. Both readings of "long word" are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    All,
    /// Three or more characters.
    AtLeast3,
    /// Four or more characters.
    MoreThan3,
}

impl Stratum {
    pub const ALL: [Stratum; 3] = [Stratum::All, Stratum::AtLeast3, Stratum::MoreThan3];

    pub fn contains(self, word: &str) -> bool {
        let n = word.chars().count();
        match self {
            Stratum::All => true,
            Stratum::AtLeast3 => n >= 3,
            Stratum::MoreThan3 => n > 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub stratum: Stratum,
    /// `None` when the metric is undefined on this stratum (for example AUC
    /// with one class only).
    pub value: Option<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub records: Vec<MetricRecord>,
}

impl MetricsReport {
    pub fn push(&mut self, metric: &str, stratum: Stratum, value: Option<f64>, samples: usize) {
        self.records.push(MetricRecord {
            metric: metric.to_string(),
            stratum,
            value,
            samples,
        });
    }

    pub fn get(&self, metric: &str, stratum: Stratum) -> Option<&MetricRecord> {
        self.records.iter().find(|r| r.metric == metric && r.stratum == stratum)
    }

    /// Fixed-width table for terminals.
    pub fn pretty(&self) -> String {
        let mut out = format!("{:<22} {:<12} {:>10} {:>8}\n", "metric", "stratum", "value", "n");
        for r in &self.records {
            let stratum = match r.stratum {
                Stratum::All => "all",
                Stratum::AtLeast3 => ">=3 chars",
                Stratum::MoreThan3 => ">3 chars",
            };
            let value = r.value.map_or("-".to_string(), |v| format!("{v:.4}"));
            out.push_str(&format!("{:<22} {:<12} {:>10} {:>8}\n", r.metric, stratum, value, r.samples));
        }
        out
    }
}

#[cfg(test)]
mod tests;
