//! Ecological and agreement statistics computed from behavior streams.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::model::{Ethogram, ObservationStream};
use crate::timeline::PairedSeries;

/// Label used for confusion-matrix entries outside the requested code list.
pub const OTHER: &str = "other";

/// Seconds of annotation effort per individual per second of video.
pub const DEFAULT_ANNOTATION_RATE: f64 = 1.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("stream is empty")]
    EmptyStream,
    #[error("no visible time")]
    NoVisibleTime,
    #[error("no countable transition pairs")]
    NoTransitions,
    #[error("sampling interval must be positive, got {0}")]
    InvalidInterval(f64),
    #[error("invalid code list: {0}")]
    InvalidCodes(String),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("degenerate marginals: expected agreement is 1")]
    DegenerateMarginals,
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("annotation cost needs n >= 1 and t > 0 (got n={n}, t={t})")]
    InvalidCostInput { n: u64, t: f64 },
}

type Result<T> = std::result::Result<T, MetricsError>;

/// Proportion of visible time spent in each behavior.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeBudget {
    pub t_visible: f64,
    /// Seconds per behavioral code.
    pub seconds: BTreeMap<String, f64>,
    pub proportions: BTreeMap<String, f64>,
}

pub fn time_budget(stream: &ObservationStream, ethogram: &Ethogram) -> Result<TimeBudget> {
    if stream.intervals.is_empty() {
        return Err(MetricsError::EmptyStream);
    }
    let mut seconds: BTreeMap<String, f64> = BTreeMap::new();
    for iv in stream.intervals.iter().filter(|iv| !ethogram.is_technical(&iv.code)) {
        *seconds.entry(iv.code.clone()).or_insert(0.0) += iv.duration();
    }
    let t_visible: f64 = seconds.values().sum();
    if t_visible <= 0.0 {
        return Err(MetricsError::NoVisibleTime);
    }
    let proportions = seconds.iter().map(|(c, t)| (c.clone(), t / t_visible)).collect();
    Ok(TimeBudget { t_visible, seconds, proportions })
}

/// Share of recorded time carrying a technical (visibility) code.
pub fn out_of_sight_fraction(stream: &ObservationStream, ethogram: &Ethogram) -> Result<f64> {
    let total = stream.total_duration();
    if stream.intervals.is_empty() || total <= 0.0 {
        return Err(MetricsError::EmptyStream);
    }
    let hidden: f64 = stream.intervals.iter().filter(|iv| ethogram.is_technical(&iv.code)).map(|iv| iv.duration()).sum();
    Ok((hidden / total).clamp(0.0, 1.0))
}

/// Transition counts and conditional probabilities `P(j | i)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionMatrix {
    pub codes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl TransitionMatrix {
    pub fn zeros(codes: Vec<String>) -> Self {
        let k = codes.len();
        Self { codes, counts: vec![vec![0; k]; k] }
    }

    pub fn index(&self, code: &str) -> Option<usize> {
        self.codes.iter().position(|c| c == code)
    }

    pub fn row_total(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Row-normalized probabilities; `None` for rows with no observations.
    pub fn probabilities(&self) -> Vec<Option<Vec<f64>>> {
        (0..self.codes.len())
            .map(|i| {
                let n = self.row_total(i);
                (n > 0).then(|| self.counts[i].iter().map(|&c| c as f64 / n as f64).collect())
            })
            .collect()
    }

    /// `P(to | from)`.
    pub fn p(&self, from: &str, to: &str) -> Option<f64> {
        let (i, j) = (self.index(from)?, self.index(to)?);
        let n = self.row_total(i);
        (n > 0).then(|| self.counts[i][j] as f64 / n as f64)
    }

    /// Adds another matrix over the same code list.
    pub fn merge(&mut self, other: &TransitionMatrix) -> Result<()> {
        if self.codes != other.codes {
            return Err(MetricsError::InvalidCodes("cannot merge matrices over different codes".into()));
        }
        for (r, o) in self.counts.iter_mut().zip(&other.counts) {
            for (c, v) in r.iter_mut().zip(o) {
                *c += v;
            }
        }
        Ok(())
    }
}

fn check_codes(codes: &[String]) -> Result<()> {
    if codes.is_empty() {
        return Err(MetricsError::InvalidCodes("empty".into()));
    }
    let unique: BTreeSet<&String> = codes.iter().collect();
    if unique.len() != codes.len() {
        return Err(MetricsError::InvalidCodes("duplicate codes".into()));
    }
    Ok(())
}

/// Point samples of a stream at `t0 + k * interval_s`, where `t0` is the start
/// of its first interval with a code in `codes`.
pub fn sample_stream<'a>(stream: &'a ObservationStream, interval_s: f64, codes: &[String]) -> Vec<Option<&'a str>> {
    let Some(first) = stream.intervals.iter().find(|iv| codes.contains(&iv.code) && iv.end > iv.start) else {
        return Vec::new();
    };
    let t0 = first.start;
    let end = stream.intervals.last().map(|iv| iv.end).unwrap_or(t0);
    let mut out = Vec::new();
    let mut k = 0u64;
    loop {
        let t = t0 + k as f64 * interval_s;
        if t >= end {
            break;
        }
        out.push(stream.code_at(t));
        k += 1;
    }
    out
}

/// Counts behavior transitions between consecutive point samples taken every
/// `interval_s` seconds. Pairs where either sample is outside `codes`
/// (technical codes, other behaviors, unrecorded time) are skipped. Counts
/// are pooled across streams.
pub fn transition_matrix(streams: &[ObservationStream], interval_s: f64, codes: &[String]) -> Result<TransitionMatrix> {
    if !(interval_s.is_finite() && interval_s > 0.0) {
        return Err(MetricsError::InvalidInterval(interval_s));
    }
    check_codes(codes)?;
    let mut m = TransitionMatrix::zeros(codes.to_vec());
    for s in streams {
        let idx: Vec<Option<usize>> = sample_stream(s, interval_s, codes).into_iter().map(|c| c.and_then(|c| m.index(c))).collect();
        for w in idx.windows(2) {
            if let (Some(i), Some(j)) = (w[0], w[1]) {
                m.counts[i][j] += 1;
            }
        }
    }
    if m.total() == 0 {
        return Err(MetricsError::NoTransitions);
    }
    Ok(m)
}

/// Counts of (reference, prediction) code pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionMatrix {
    pub codes: Vec<String>,
    /// Rows index method A (reference), columns method B (prediction).
    pub counts: Vec<Vec<u64>>,
    /// Codes that fell outside the requested list and were counted as [`OTHER`].
    pub other_codes: BTreeSet<String>,
}

impl ConfusionMatrix {
    pub fn from_counts(codes: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = codes.len();
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(MetricsError::InvalidMatrix(format!("expected a {k}x{k} matrix")));
        }
        Ok(Self { codes, counts, other_codes: BTreeSet::new() })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn index(&self, code: &str) -> Option<usize> {
        self.codes.iter().position(|c| c == code)
    }

    pub fn get(&self, a: &str, b: &str) -> u64 {
        match (self.index(a), self.index(b)) {
            (Some(i), Some(j)) => self.counts[i][j],
            _ => 0,
        }
    }

    /// Each row divided by its total; `None` for empty rows.
    pub fn row_normalized(&self) -> Vec<Option<Vec<f64>>> {
        self.counts
            .iter()
            .map(|r| {
                let n: u64 = r.iter().sum();
                (n > 0).then(|| r.iter().map(|&c| c as f64 / n as f64).collect())
            })
            .collect()
    }

    /// Same matrix with both axes reordered by `perm` (new index -> old index).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            codes: perm.iter().map(|&p| self.codes[p].clone()).collect(),
            counts: perm.iter().map(|&i| perm.iter().map(|&j| self.counts[i][j]).collect()).collect(),
            other_codes: self.other_codes.clone(),
        }
    }
}

/// Cross-tabulates paired samples. Codes outside `codes` are pooled under
/// [`OTHER`], which is appended to the code list when needed.
pub fn confusion(pairs: &PairedSeries, codes: &[String]) -> Result<ConfusionMatrix> {
    confusion_from_pairs(pairs.pairs(), codes)
}

pub fn confusion_from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>, codes: &[String]) -> Result<ConfusionMatrix> {
    check_codes(codes)?;
    let pairs: Vec<(&str, &str)> = pairs.into_iter().collect();
    if pairs.is_empty() {
        return Err(MetricsError::EmptyMatrix);
    }
    let mut other_codes = BTreeSet::new();
    for (a, b) in &pairs {
        for c in [a, b] {
            if !codes.iter().any(|k| k == c) {
                other_codes.insert(c.to_string());
            }
        }
    }
    let mut all = codes.to_vec();
    if !other_codes.is_empty() && !all.iter().any(|c| c == OTHER) {
        all.push(OTHER.to_string());
    }
    let k = all.len();
    let other_idx = all.iter().position(|c| c == OTHER);
    let lookup = |c: &str| all.iter().position(|k| k == c).or(other_idx).expect("other bucket present");
    let mut counts = vec![vec![0u64; k]; k];
    for (a, b) in pairs {
        counts[lookup(a)][lookup(b)] += 1;
    }
    Ok(ConfusionMatrix { codes: all, counts, other_codes })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgreementStats {
    pub observed: f64,
    pub expected: f64,
    pub kappa: f64,
}

/// Cohen's kappa with marginal-product chance agreement.
pub fn cohens_kappa(m: &ConfusionMatrix) -> Result<AgreementStats> {
    let n = m.total();
    if n == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let k = m.codes.len();
    let n = n as f64;
    let diag: u64 = (0..k).map(|i| m.counts[i][i]).sum();
    let observed = diag as f64 / n;
    let mut expected_num = 0.0;
    for i in 0..k {
        let row: u64 = m.counts[i].iter().sum();
        let col: u64 = m.counts.iter().map(|r| r[i]).sum();
        expected_num += row as f64 * col as f64;
    }
    let expected = expected_num / (n * n);
    if (1.0 - expected).abs() < 1e-15 {
        return Err(MetricsError::DegenerateMarginals);
    }
    Ok(AgreementStats { observed, expected, kappa: (observed - expected) / (1.0 - expected) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassScore {
    pub code: String,
    pub support: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub classes: Vec<ClassScore>,
    pub macro_precision: Option<f64>,
    pub macro_recall: Option<f64>,
    pub macro_f1: Option<f64>,
}

impl ClassMetrics {
    pub fn get(&self, code: &str) -> Option<&ClassScore> {
        self.classes.iter().find(|c| c.code == code)
    }
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-class precision, recall and F1, with unweighted (macro) means over
/// the classes where each value is defined.
pub fn class_metrics(m: &ConfusionMatrix) -> ClassMetrics {
    let k = m.codes.len();
    let classes: Vec<ClassScore> = (0..k)
        .map(|i| {
            let tp = m.counts[i][i] as f64;
            let support: u64 = m.counts[i].iter().sum();
            let predicted: u64 = m.counts.iter().map(|r| r[i]).sum();
            let precision = (predicted > 0).then(|| tp / predicted as f64);
            let recall = (support > 0).then(|| tp / support as f64);
            let f1 = match (precision, recall) {
                (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
                (Some(_), Some(_)) => Some(0.0),
                _ => None,
            };
            ClassScore { code: m.codes[i].clone(), support, precision, recall, f1 }
        })
        .collect();
    ClassMetrics {
        macro_precision: mean_defined(classes.iter().map(|c| c.precision)),
        macro_recall: mean_defined(classes.iter().map(|c| c.recall)),
        macro_f1: mean_defined(classes.iter().map(|c| c.f1)),
        classes,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GanttSegment {
    pub start: f64,
    pub end: f64,
    pub code: String,
}

/// Maximal constant-code runs in time order; gaps in the record end a run.
pub fn gantt_segments(stream: &ObservationStream) -> Vec<GanttSegment> {
    let mut out: Vec<GanttSegment> = Vec::new();
    for iv in stream.intervals.iter().filter(|iv| iv.end > iv.start) {
        match out.last_mut() {
            Some(last) if last.end == iv.start && last.code == iv.code => last.end = iv.end,
            _ => out.push(GanttSegment { start: iv.start, end: iv.end, code: iv.code.clone() }),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostEstimate {
    pub n_individuals: u64,
    pub duration_s: f64,
    pub rate: f64,
    pub total_s: f64,
}

/// Manual annotation effort: `rate * n * t` seconds.
pub fn annotation_cost(n: u64, t: f64, rate: f64) -> Result<CostEstimate> {
    if n == 0 || !(t.is_finite() && t > 0.0) || !(rate.is_finite() && rate > 0.0) {
        return Err(MetricsError::InvalidCostInput { n, t });
    }
    Ok(CostEstimate { n_individuals: n, duration_s: t, rate, total_s: rate * n as f64 * t })
}

/// CSV with a header row and first column of codes; empty cells for undefined values.
pub fn matrix_csv(codes: &[String], rows: &[Option<Vec<f64>>]) -> String {
    let mut out = format!("from,{}\n", codes.join(","));
    for (code, row) in codes.iter().zip(rows) {
        out.push_str(code);
        match row {
            Some(r) => r.iter().for_each(|v| out.push_str(&format!(",{v}"))),
            None => codes.iter().for_each(|_| out.push(',')),
        }
        out.push('\n');
    }
    out
}

pub fn count_matrix_csv(codes: &[String], counts: &[Vec<u64>]) -> String {
    let mut out = format!("from,{}\n", codes.join(","));
    for (code, row) in codes.iter().zip(counts) {
        out.push_str(code);
        row.iter().for_each(|v| out.push_str(&format!(",{v}")));
        out.push('\n');
    }
    out
}
