//! Session-level quality control.
//!
//! Every problem is collected into a [`ValidationReport`]; nothing here fails
//! fast, so callers decide which violations are fatal.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::model::{Ethogram, LabelStream, ObservationStream, Track, VideoMeta};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Where the problem is, e.g. `track z3 frame 120`.
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    fn push(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { location: location.into(), message: message.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every domain invariant across one session.
pub fn validate_session(
    tracks: &[Track],
    labels: &[LabelStream],
    observations: &[ObservationStream],
    meta: &VideoMeta,
    ethogram: &Ethogram,
) -> ValidationReport {
    let mut report = ValidationReport::default();

    if let Err(e) = meta.check() {
        report.push(format!("session {}", meta.session_id), e.to_string());
    }

    let mut ids = BTreeSet::new();
    for track in tracks {
        let loc = format!("track {}", track.track_id);
        if !ids.insert(track.track_id.as_str()) {
            report.push(&loc, "duplicate track id");
        }
        for pair in track.boxes.windows(2) {
            if pair[1].frame <= pair[0].frame {
                report.push(
                    format!("{loc} frame {}", pair[1].frame),
                    format!("non-monotonic frames ({} after {})", pair[1].frame, pair[0].frame),
                );
            }
        }
        for b in &track.boxes {
            if !(b.w > 0.0 && b.h > 0.0) {
                report.push(format!("{loc} frame {}", b.frame), "degenerate box");
                continue;
            }
            let (cx, cy) = b.center();
            if cx < 0.0 || cy < 0.0 || cx > f64::from(meta.width_px) || cy > f64::from(meta.height_px) {
                report.push(format!("{loc} frame {}", b.frame), "box center out of frame bounds");
            }
        }
    }

    let mut labelled = BTreeSet::new();
    for stream in labels {
        let loc = format!("labels {}", stream.track_id);
        if !labelled.insert(stream.track_id.as_str()) {
            report.push(&loc, "duplicate label stream");
        }
        if !tracks.is_empty() && !ids.contains(stream.track_id.as_str()) {
            report.push(&loc, "label stream for unknown track");
        }
        for seg in stream.segments() {
            if !ethogram.contains(&seg.code) {
                report
                    .push(format!("{loc} frames {}..={}", seg.start_frame, seg.end_frame), format!("unknown behavior code `{}`", seg.code));
            }
        }
    }

    for stream in observations {
        let loc = format!("observations {} ({})", stream.subject_id, stream.method);
        let allow_instants = stream.method == crate::model::Method::GroundScan;
        if let Err(e) = stream.check(allow_instants) {
            report.push(&loc, e.to_string());
        }
        for iv in &stream.intervals {
            if !ethogram.contains(&iv.code) {
                report.push(format!("{loc} t={}", iv.start), format!("unknown behavior code `{}`", iv.code));
            }
        }
    }

    report
}
