//! Harmonizing observation streams from different sampling methods so they
//! can be compared sample by sample.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::model::{Ethogram, Interval, LabelStream, Method, ModelError, ObservationStream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimelineError {
    #[error("expected a ground_scan stream, found {0}")]
    NotScan(Method),
    #[error("scan stream for {subject} has a non-instantaneous event at t={t}")]
    NotInstantaneous { subject: String, t: f64 },
    #[error("scan stream for {subject} has two events at t={t}")]
    DuplicateInstant { subject: String, t: f64 },
    #[error("no temporal overlap between {a} and {b}")]
    NoOverlap { a: String, b: String },
    #[error("unmapped codes: {}", .0.join(", "))]
    Unmapped(Vec<String>),
    #[error("common span of {span} s is shorter than the {interval} s sampling interval")]
    SpanTooShort { span: f64, interval: f64 },
    #[error("sampling interval must be positive, got {0}")]
    InvalidInterval(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

type Result<T> = std::result::Result<T, TimelineError>;

/// Half-open span `[start, end)` in seconds.
pub type Span = (f64, f64);

/// Turns instantaneous scan events into intervals lasting until the next
/// scan of the same subject or `horizon_s`, whichever comes first.
pub fn propagate_scan(events: &ObservationStream, horizon_s: f64) -> Result<ObservationStream> {
    if events.method != Method::GroundScan {
        return Err(TimelineError::NotScan(events.method));
    }
    if !(horizon_s.is_finite() && horizon_s > 0.0) {
        return Err(TimelineError::InvalidInterval(horizon_s));
    }
    let mut intervals = Vec::with_capacity(events.intervals.len());
    for (i, ev) in events.intervals.iter().enumerate() {
        if ev.end != ev.start {
            return Err(TimelineError::NotInstantaneous { subject: events.subject_id.clone(), t: ev.start });
        }
        let mut end = ev.start + horizon_s;
        if let Some(next) = events.intervals.get(i + 1) {
            if next.start <= ev.start {
                return Err(TimelineError::DuplicateInstant { subject: events.subject_id.clone(), t: next.start });
            }
            end = end.min(next.start);
        }
        intervals.push(Interval::new(ev.start, end, ev.code.clone()));
    }
    Ok(ObservationStream::new(events.subject_id.clone(), Method::GroundScan, intervals))
}

/// Merged spans covered by non-technical codes.
pub fn visible_spans(stream: &ObservationStream, ethogram: &Ethogram) -> Vec<Span> {
    merge_spans(stream.intervals.iter().filter(|iv| iv.end > iv.start && !ethogram.is_technical(&iv.code)).map(|iv| (iv.start, iv.end)))
}

fn merge_spans(spans: impl Iterator<Item = Span>) -> Vec<Span> {
    let mut out: Vec<Span> = Vec::new();
    for (s, e) in spans {
        match out.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

/// Intersection of two sorted, disjoint span lists.
pub fn intersect_spans(a: &[Span], b: &[Span]) -> Vec<Span> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        let s = a[i].0.max(b[j].0);
        let e = a[i].1.min(b[j].1);
        if e > s {
            out.push((s, e));
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Restricts a stream to the given spans, splitting intervals as needed.
pub fn clip_to_spans(stream: &ObservationStream, spans: &[Span]) -> ObservationStream {
    let mut out = Vec::new();
    let mut j = 0;
    for iv in &stream.intervals {
        while j < spans.len() && spans[j].1 <= iv.start {
            j += 1;
        }
        let mut k = j;
        while k < spans.len() && spans[k].0 < iv.end {
            let s = iv.start.max(spans[k].0);
            let e = iv.end.min(spans[k].1);
            if e > s {
                out.push(Interval::new(s, e, iv.code.clone()));
            }
            k += 1;
        }
    }
    ObservationStream::new(stream.subject_id.clone(), stream.method, out)
}

/// Removes from both streams every instant where either is not visible
/// (technical code or no record). Both outputs cover identical spans.
pub fn visibility_filter(
    a: &ObservationStream,
    b: &ObservationStream,
    ethogram: &Ethogram,
) -> Result<(ObservationStream, ObservationStream)> {
    let both = intersect_spans(&visible_spans(a, ethogram), &visible_spans(b, ethogram));
    if both.is_empty() {
        return Err(TimelineError::NoOverlap {
            a: format!("{} ({})", a.subject_id, a.method),
            b: format!("{} ({})", b.subject_id, b.method),
        });
    }
    Ok((clip_to_spans(a, &both), clip_to_spans(b, &both)))
}

fn check_mapping<'a>(codes: impl Iterator<Item = &'a str>, mapping: &BTreeMap<String, String>) -> Result<()> {
    let missing: BTreeSet<&str> = codes.filter(|c| !mapping.contains_key(*c)).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(TimelineError::Unmapped(missing.into_iter().map(String::from).collect()))
    }
}

/// Recodes a stream through `mapping`, merging touching intervals that end
/// up with the same code.
pub fn map_labels(stream: &ObservationStream, mapping: &BTreeMap<String, String>) -> Result<ObservationStream> {
    check_mapping(stream.intervals.iter().map(|iv| iv.code.as_str()), mapping)?;
    let mut out: Vec<Interval> = Vec::with_capacity(stream.intervals.len());
    for iv in &stream.intervals {
        let code = &mapping[&iv.code];
        match out.last_mut() {
            Some(last) if last.end == iv.start && last.code == *code && iv.end > iv.start => last.end = iv.end,
            _ => out.push(Interval::new(iv.start, iv.end, code.clone())),
        }
    }
    Ok(ObservationStream::new(stream.subject_id.clone(), stream.method, out))
}

/// [`map_labels`] for frame-indexed streams.
pub fn map_label_stream(stream: &LabelStream, mapping: &BTreeMap<String, String>) -> Result<LabelStream> {
    check_mapping(stream.segments().iter().map(|s| s.code.as_str()), mapping)?;
    let segments = stream.segments().iter().map(|s| crate::model::FrameSegment { code: mapping[&s.code].clone(), ..s.clone() }).collect();
    Ok(LabelStream::new(stream.track_id.clone(), segments)?)
}

/// Two streams sampled on a shared uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedSeries {
    pub subject_id: String,
    pub method_a: Method,
    pub method_b: Method,
    pub times: Vec<f64>,
    pub code_a: Vec<String>,
    pub code_b: Vec<String>,
}

impl PairedSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.code_a.iter().map(String::as_str).zip(self.code_b.iter().map(String::as_str))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,code_a,code_b\n");
        for ((t, a), b) in self.times.iter().zip(&self.code_a).zip(&self.code_b) {
            out.push_str(&format!("{t},{a},{b}\n"));
        }
        out
    }
}

/// Code holding the largest share of `[lo, hi)`; ties go to the code seen
/// first in the bin. `cursor` is advanced past intervals ending before `lo`.
fn majority_code<'a>(intervals: &'a [Interval], cursor: &mut usize, lo: f64, hi: f64) -> Option<&'a str> {
    while *cursor < intervals.len() && intervals[*cursor].end <= lo {
        *cursor += 1;
    }
    let mut tally: Vec<(&str, f64)> = Vec::new();
    for iv in intervals[*cursor..].iter().take_while(|iv| iv.start < hi) {
        let d = iv.end.min(hi) - iv.start.max(lo);
        if d <= 0.0 {
            continue;
        }
        match tally.iter_mut().find(|(c, _)| *c == iv.code) {
            Some(entry) => entry.1 += d,
            None => tally.push((iv.code.as_str(), d)),
        }
    }
    let best = tally.iter().map(|(_, d)| *d).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-9 * (hi - lo);
    tally.iter().find(|(_, d)| *d >= best - tol).map(|(c, _)| *c)
}

/// Samples both streams every `interval_s` over their common span. Each
/// sample carries, per stream, the code occupying most of the bin
/// `[t, t + interval_s)`; bins where either stream has no record are skipped.
pub fn align_pair(a: &ObservationStream, b: &ObservationStream, interval_s: f64) -> Result<PairedSeries> {
    if !(interval_s.is_finite() && interval_s > 0.0) {
        return Err(TimelineError::InvalidInterval(interval_s));
    }
    let (Some((sa, ea)), Some((sb, eb))) = (a.span(), b.span()) else {
        return Err(TimelineError::NoOverlap { a: a.subject_id.clone(), b: b.subject_id.clone() });
    };
    let (t0, t1) = (sa.max(sb), ea.min(eb));
    if t1 <= t0 {
        return Err(TimelineError::NoOverlap { a: a.subject_id.clone(), b: b.subject_id.clone() });
    }
    let span = t1 - t0;
    let bins = (span / interval_s + 1e-9).floor() as usize;
    if bins == 0 {
        return Err(TimelineError::SpanTooShort { span, interval: interval_s });
    }
    let mut series = PairedSeries {
        subject_id: a.subject_id.clone(),
        method_a: a.method,
        method_b: b.method,
        times: Vec::with_capacity(bins),
        code_a: Vec::with_capacity(bins),
        code_b: Vec::with_capacity(bins),
    };
    let (mut ca, mut cb) = (0, 0);
    for k in 0..bins {
        let lo = t0 + k as f64 * interval_s;
        let hi = t0 + (k + 1) as f64 * interval_s;
        let ma = majority_code(&a.intervals, &mut ca, lo, hi);
        let mb = majority_code(&b.intervals, &mut cb, lo, hi);
        if let (Some(x), Some(y)) = (ma, mb) {
            series.times.push(lo);
            series.code_a.push(x.to_string());
            series.code_b.push(y.to_string());
        }
    }
    Ok(series)
}
