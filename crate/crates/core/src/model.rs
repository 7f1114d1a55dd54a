//! Domain types shared by every analysis module.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while constructing domain values.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("degenerate box at frame {frame}: w={w}, h={h}")]
    DegenerateBox { frame: u64, w: f64, h: f64 },
    #[error("invalid video metadata: {0}")]
    InvalidMeta(String),
    #[error("invalid analysis parameter: {0}")]
    InvalidParams(String),
    #[error("invalid label stream: {0}")]
    InvalidStream(String),
    #[error("invalid ethogram: {0}")]
    InvalidEthogram(String),
    #[error("unknown {kind} `{value}`")]
    UnknownVariant { kind: &'static str, value: String },
}

/// Per-session video metadata. Frames are converted to seconds through `fps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub session_id: String,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub width_px: u32,
    pub height_px: u32,
    pub start_time: DateTime<Utc>,
}

fn default_fps() -> f64 {
    30.0
}

impl VideoMeta {
    pub fn new(
        session_id: impl Into<String>,
        fps: f64,
        width_px: u32,
        height_px: u32,
        start_time: DateTime<Utc>,
    ) -> Result<Self, ModelError> {
        let meta = Self { session_id: session_id.into(), fps, width_px, height_px, start_time };
        meta.check()?;
        Ok(meta)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(ModelError::InvalidMeta(format!("fps must be positive, got {}", self.fps)));
        }
        if self.width_px == 0 || self.height_px == 0 {
            return Err(ModelError::InvalidMeta("frame dimensions must be positive".into()));
        }
        Ok(())
    }

    /// Seconds from the start of the video to the start of `frame`.
    pub fn frame_to_seconds(&self, frame: u64) -> f64 {
        frame as f64 / self.fps
    }

    /// Frame containing the instant `seconds` after the start of the video.
    pub fn seconds_to_frame(&self, seconds: f64) -> u64 {
        (seconds * self.fps).floor().max(0.0) as u64
    }

    /// Video start as seconds since the Unix epoch.
    pub fn start_epoch_seconds(&self) -> f64 {
        epoch_seconds(&self.start_time)
    }
}

/// Seconds since the Unix epoch, with sub-second precision.
pub fn epoch_seconds(t: &DateTime<Utc>) -> f64 {
    t.timestamp() as f64 + f64::from(t.timestamp_subsec_nanos()) * 1e-9
}

/// Axis-aligned box in pixel coordinates (top-left origin).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub frame: u64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(frame: u64, x: f64, y: f64, w: f64, h: f64) -> Result<Self, ModelError> {
        let b = Self { frame, x, y, w, h };
        if !(w > 0.0 && h > 0.0) || !x.is_finite() || !y.is_finite() || !w.is_finite() || !h.is_finite() {
            return Err(ModelError::DegenerateBox { frame, w, h });
        }
        Ok(b)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Area of the intersection with `other`, ignoring frame indices.
    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if ix <= 0.0 || iy <= 0.0 {
            0.0
        } else {
            ix * iy
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Species {
    GrevysZebra,
    PlainsZebra,
    Giraffe,
    ZebraUnspecified,
    Other(String),
}

impl Species {
    pub fn as_str(&self) -> &str {
        match self {
            Species::GrevysZebra => "grevys_zebra",
            Species::PlainsZebra => "plains_zebra",
            Species::Giraffe => "giraffe",
            Species::ZebraUnspecified => "zebra_unspecified",
            Species::Other(s) => s,
        }
    }

    /// Loose match for free-text labels such as "Grevy's Zebra" or "reticulated giraffe".
    pub fn from_label(label: &str) -> Species {
        let norm: String = label.chars().filter(|c| c.is_ascii_alphanumeric()).map(|c| c.to_ascii_lowercase()).collect();
        match norm.as_str() {
            "grevyszebra" | "grevyzebra" | "grevys" => Species::GrevysZebra,
            "plainszebra" | "plainzebra" | "plains" => Species::PlainsZebra,
            "giraffe" | "reticulatedgiraffe" | "masaigiraffe" => Species::Giraffe,
            "zebra" | "zebraunspecified" => Species::ZebraUnspecified,
            _ => Species::Other(label.to_string()),
        }
    }

    pub fn is_zebra(&self) -> bool {
        matches!(self, Species::GrevysZebra | Species::PlainsZebra | Species::ZebraUnspecified)
    }
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Species {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Err(ModelError::UnknownVariant { kind: "species", value: String::new() });
        }
        Ok(match s {
            "grevys_zebra" => Species::GrevysZebra,
            "plains_zebra" => Species::PlainsZebra,
            "giraffe" => Species::Giraffe,
            "zebra_unspecified" => Species::ZebraUnspecified,
            other => Species::Other(other.to_string()),
        })
    }
}

impl From<Species> for String {
    fn from(s: Species) -> String {
        s.as_str().to_string()
    }
}

impl TryFrom<String> for Species {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// One animal's bounding-box trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub track_id: String,
    pub species: Species,
    pub boxes: Vec<BoundingBox>,
    /// Set when the track contains an identity switch; excluded tracks are
    /// ignored by every analysis.
    pub excluded: bool,
}

impl Track {
    pub fn new(track_id: impl Into<String>, species: Species, boxes: Vec<BoundingBox>) -> Self {
        Self { track_id: track_id.into(), species, boxes, excluded: false }
    }

    pub fn frame_range(&self) -> Option<(u64, u64)> {
        Some((self.boxes.first()?.frame, self.boxes.last()?.frame))
    }

    pub fn box_at(&self, frame: u64) -> Option<&BoundingBox> {
        self.boxes.binary_search_by_key(&frame, |b| b.frame).ok().map(|i| &self.boxes[i])
    }
}

/// Tracks that take part in analysis (identity-switch tracks removed).
pub fn retained_tracks(tracks: &[Track]) -> impl Iterator<Item = &Track> {
    tracks.iter().filter(|t| !t.excluded)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Applicability {
    Zebra,
    Giraffe,
    Both,
}

impl FromStr for Applicability {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zebra" | "Z" => Ok(Applicability::Zebra),
            "giraffe" | "G" => Ok(Applicability::Giraffe),
            "both" | "Both" => Ok(Applicability::Both),
            _ => Err(ModelError::UnknownVariant { kind: "species applicability", value: s.into() }),
        }
    }
}

impl fmt::Display for Applicability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Applicability::Zebra => "zebra",
            Applicability::Giraffe => "giraffe",
            Applicability::Both => "both",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorClass {
    pub code: String,
    pub name: String,
    pub species: Applicability,
    pub technical: bool,
    #[serde(default)]
    pub aliases: Vec<String>,
}

/// Codes of the four visibility ("technical") classes.
pub const OCCLUDED: &str = "OCL";
pub const OUT_OF_FOCUS: &str = "OOC";
pub const OUT_OF_FRAME: &str = "OOF";
pub const OUT_OF_SIGHT: &str = "OOS";
pub const TECHNICAL_CODES: [&str; 4] = [OCCLUDED, OUT_OF_FOCUS, OUT_OF_FRAME, OUT_OF_SIGHT];

/// The behavior vocabulary. Class order is preserved from the source file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ethogram {
    classes: Vec<BehaviorClass>,
}

impl Ethogram {
    pub fn new(classes: Vec<BehaviorClass>) -> Result<Self, ModelError> {
        let mut seen = BTreeSet::new();
        for c in &classes {
            if c.code.is_empty() {
                return Err(ModelError::InvalidEthogram("empty behavior code".into()));
            }
            if !seen.insert(c.code.as_str()) {
                return Err(ModelError::InvalidEthogram(format!("duplicate code `{}`", c.code)));
            }
            let should_be_technical = TECHNICAL_CODES.contains(&c.code.as_str());
            if c.technical != should_be_technical {
                return Err(ModelError::InvalidEthogram(format!(
                    "code `{}` has technical={} but the technical classes are exactly {:?}",
                    c.code, c.technical, TECHNICAL_CODES
                )));
            }
        }
        Ok(Self { classes })
    }

    /// The combined zebra and giraffe ethogram shipped with the crate.
    pub fn kabr_default() -> Self {
        crate::ingest::parse_ethogram(DEFAULT_ETHOGRAM_CSV).expect("bundled ethogram file is well-formed")
    }

    pub fn classes(&self) -> &[BehaviorClass] {
        &self.classes
    }

    pub fn get(&self, code: &str) -> Option<&BehaviorClass> {
        self.classes.iter().find(|c| c.code == code)
    }

    pub fn contains(&self, code: &str) -> bool {
        self.get(code).is_some()
    }

    pub fn is_technical(&self, code: &str) -> bool {
        self.get(code).map(|c| c.technical).unwrap_or(false)
    }

    /// Position of `code` in the ethogram, used to order codes in reports.
    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.code == code)
    }

    /// Resolve a code, display name or alias (case and punctuation insensitive).
    pub fn resolve(&self, value: &str) -> Option<&BehaviorClass> {
        if let Some(c) = self.get(value) {
            return Some(c);
        }
        let key = normalize_label(value);
        self.classes.iter().find(|c| {
            normalize_label(&c.code) == key || normalize_label(&c.name) == key || c.aliases.iter().any(|a| normalize_label(a) == key)
        })
    }

    pub fn behavioral_codes(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().filter(|c| !c.technical).map(|c| c.code.as_str())
    }
}

fn normalize_label(s: &str) -> String {
    s.chars().filter(|c| c.is_ascii_alphanumeric()).map(|c| c.to_ascii_lowercase()).collect()
}

pub const DEFAULT_ETHOGRAM_CSV: &str = include_str!("../data/ethogram.csv");

/// Inclusive frame range carrying one behavior code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSegment {
    pub start_frame: u64,
    pub end_frame: u64,
    pub code: String,
}

impl FrameSegment {
    pub fn len(&self) -> u64 {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Per-frame behavior labels for one track, run-length encoded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelStream {
    pub track_id: String,
    segments: Vec<FrameSegment>,
}

impl LabelStream {
    /// Builds a stream from segments, checking that they are sorted, contiguous
    /// and non-empty. Adjacent segments with the same code are merged.
    pub fn new(track_id: impl Into<String>, segments: Vec<FrameSegment>) -> Result<Self, ModelError> {
        let track_id = track_id.into();
        let mut out: Vec<FrameSegment> = Vec::with_capacity(segments.len());
        for seg in segments {
            if seg.end_frame < seg.start_frame {
                return Err(ModelError::InvalidStream(format!(
                    "track {track_id}: segment {}..={} ends before it starts",
                    seg.start_frame, seg.end_frame
                )));
            }
            if let Some(prev) = out.last_mut() {
                if seg.start_frame != prev.end_frame + 1 {
                    return Err(ModelError::InvalidStream(format!(
                        "track {track_id}: segment starting at frame {} does not follow frame {}",
                        seg.start_frame, prev.end_frame
                    )));
                }
                if prev.code == seg.code {
                    prev.end_frame = seg.end_frame;
                    continue;
                }
            }
            out.push(seg);
        }
        Ok(Self { track_id, segments: out })
    }

    /// Run-length encodes per-frame codes starting at `start_frame`.
    pub fn from_frames<S: AsRef<str>>(track_id: impl Into<String>, start_frame: u64, codes: &[S]) -> Self {
        let mut segments: Vec<FrameSegment> = Vec::new();
        for (i, code) in codes.iter().enumerate() {
            let frame = start_frame + i as u64;
            let code = code.as_ref();
            match segments.last_mut() {
                Some(last) if last.code == code => last.end_frame = frame,
                _ => segments.push(FrameSegment { start_frame: frame, end_frame: frame, code: code.to_string() }),
            }
        }
        Self { track_id: track_id.into(), segments }
    }

    pub fn segments(&self) -> &[FrameSegment] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Inclusive frame range covered by the stream.
    pub fn frame_range(&self) -> Option<(u64, u64)> {
        Some((self.segments.first()?.start_frame, self.segments.last()?.end_frame))
    }

    pub fn len_frames(&self) -> u64 {
        self.frame_range().map(|(a, b)| b - a + 1).unwrap_or(0)
    }

    pub fn expand(&self) -> Vec<String> {
        self.segments.iter().flat_map(|s| std::iter::repeat_n(s.code.clone(), s.len() as usize)).collect()
    }

    pub fn code_at(&self, frame: u64) -> Option<&str> {
        let i = self.segments.partition_point(|s| s.end_frame < frame);
        self.segments.get(i).filter(|s| s.start_frame <= frame).map(|s| s.code.as_str())
    }

    pub fn frame_counts(&self) -> BTreeMap<String, u64> {
        let mut counts = BTreeMap::new();
        for s in &self.segments {
            *counts.entry(s.code.clone()).or_insert(0) += s.len();
        }
        counts
    }

    /// Portion of the stream inside the inclusive range `[first, last]`.
    pub fn slice(&self, first: u64, last: u64) -> Option<LabelStream> {
        let segments: Vec<FrameSegment> = self
            .segments
            .iter()
            .filter(|s| s.end_frame >= first && s.start_frame <= last)
            .map(|s| FrameSegment { start_frame: s.start_frame.max(first), end_frame: s.end_frame.min(last), code: s.code.clone() })
            .collect();
        if segments.is_empty() {
            None
        } else {
            Some(LabelStream { track_id: self.track_id.clone(), segments })
        }
    }

    /// Re-expresses the stream on a seconds axis. Frame `f` covers
    /// `[origin + f/fps, origin + (f+1)/fps)`.
    pub fn to_observation(&self, meta: &VideoMeta, method: Method, origin_s: f64) -> ObservationStream {
        let intervals = self
            .segments
            .iter()
            .map(|s| Interval {
                start: origin_s + meta.frame_to_seconds(s.start_frame),
                end: origin_s + meta.frame_to_seconds(s.end_frame + 1),
                code: s.code.clone(),
            })
            .collect();
        ObservationStream { subject_id: self.track_id.clone(), method, intervals }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GroundFocal,
    GroundScan,
    DroneFocal,
    MlAuto,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::GroundFocal => "ground_focal",
            Method::GroundScan => "ground_scan",
            Method::DroneFocal => "drone_focal",
            Method::MlAuto => "ml_auto",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ground_focal" => Ok(Method::GroundFocal),
            "ground_scan" => Ok(Method::GroundScan),
            "drone_focal" => Ok(Method::DroneFocal),
            "ml_auto" => Ok(Method::MlAuto),
            _ => Err(ModelError::UnknownVariant { kind: "method", value: s.into() }),
        }
    }
}

/// Half-open time interval `[start, end)` in seconds carrying one code.
/// Instantaneous scan events have `start == end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    pub code: String,
}

impl Interval {
    pub fn new(start: f64, end: f64, code: impl Into<String>) -> Self {
        Self { start, end, code: code.into() }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Wall-clock behavior record for one subject from one sampling method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationStream {
    pub subject_id: String,
    pub method: Method,
    pub intervals: Vec<Interval>,
}

impl ObservationStream {
    pub fn new(subject_id: impl Into<String>, method: Method, intervals: Vec<Interval>) -> Self {
        Self { subject_id: subject_id.into(), method, intervals }
    }

    /// Checks ordering, positivity and non-overlap. Instantaneous events are
    /// allowed only when `allow_instants` is set.
    pub fn check(&self, allow_instants: bool) -> Result<(), ModelError> {
        let mut prev_end = f64::NEG_INFINITY;
        let mut prev_start = f64::NEG_INFINITY;
        for iv in &self.intervals {
            if !iv.start.is_finite() || !iv.end.is_finite() {
                return Err(ModelError::InvalidStream(format!("{}: non-finite time", self.subject_id)));
            }
            let instant = iv.end == iv.start;
            if iv.end < iv.start || (instant && !allow_instants) {
                return Err(ModelError::InvalidStream(format!(
                    "{}: interval [{}, {}) must have end > start",
                    self.subject_id, iv.start, iv.end
                )));
            }
            if iv.start < prev_end || (instant && iv.start <= prev_start) {
                return Err(ModelError::InvalidStream(format!(
                    "{}: interval at {} overlaps or precedes the previous one",
                    self.subject_id, iv.start
                )));
            }
            prev_end = iv.end;
            prev_start = iv.start;
        }
        Ok(())
    }

    pub fn span(&self) -> Option<(f64, f64)> {
        Some((self.intervals.first()?.start, self.intervals.last()?.end))
    }

    pub fn total_duration(&self) -> f64 {
        self.intervals.iter().map(Interval::duration).sum()
    }

    /// Code of the interval containing instant `t`.
    pub fn code_at(&self, t: f64) -> Option<&str> {
        let i = self.intervals.partition_point(|iv| iv.end <= t);
        self.intervals.get(i).filter(|iv| iv.start <= t && t < iv.end).map(|iv| iv.code.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeSex {
    AdultMale,
    AdultFemale,
    Subadult,
    Juvenile,
    Infant,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Habitat {
    Open,
    Closed,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HerdSizeCategory {
    Small,
    Large,
}

impl HerdSizeCategory {
    /// Herds of three or fewer animals are small.
    pub fn from_size(herd_size: u32) -> Self {
        if herd_size <= 3 {
            HerdSizeCategory::Small
        } else {
            HerdSizeCategory::Large
        }
    }
}

/// Herd membership for one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComposition {
    pub counts: BTreeMap<Species, BTreeMap<AgeSex, u32>>,
    pub herd_size: u32,
    pub habitat: Habitat,
    pub herd_size_category: HerdSizeCategory,
}

impl GroupComposition {
    pub fn new(counts: BTreeMap<Species, BTreeMap<AgeSex, u32>>, habitat: Habitat) -> Result<Self, ModelError> {
        let herd_size: u32 = counts.values().flat_map(|m| m.values()).sum();
        if herd_size == 0 {
            return Err(ModelError::InvalidParams("herd size must be positive".into()));
        }
        Ok(Self { counts, herd_size, habitat, herd_size_category: HerdSizeCategory::from_size(herd_size) })
    }

    /// Individuals per species, summed over age-sex classes.
    pub fn species_counts(&self) -> BTreeMap<Species, u32> {
        self.counts.iter().map(|(s, m)| (s.clone(), m.values().sum())).collect()
    }
}

/// One drone telemetry sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub timestamp: DateTime<Utc>,
    pub lat: f64,
    pub lon: f64,
    pub altitude_m: f64,
    pub heading_deg: f64,
    pub speed_mps: f64,
}

impl TelemetryRecord {
    pub fn seconds(&self) -> f64 {
        epoch_seconds(&self.timestamp)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(ModelError::InvalidParams(format!("lat/lon out of range: {}, {}", self.lat, self.lon)));
        }
        if !(0.0..360.0).contains(&self.heading_deg) {
            return Err(ModelError::InvalidParams(format!("heading {} outside [0, 360)", self.heading_deg)));
        }
        if self.speed_mps.is_nan() || self.speed_mps < 0.0 {
            return Err(ModelError::InvalidParams(format!("negative speed {}", self.speed_mps)));
        }
        Ok(())
    }
}

/// How two same-frame boxes are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMetric {
    /// Intersection over the smaller box's area.
    #[default]
    MinArea,
    /// Intersection over union.
    Iou,
}

/// Tunable thresholds shared by the analyses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisParams {
    pub downsample_interval_s: f64,
    pub scan_propagation_s: f64,
    pub min_miniscene_frames: u64,
    /// Overlap must be strictly greater than this.
    pub overlap_ratio_threshold: f64,
    pub min_overlap_frames: u64,
    pub max_track_gap_frames: u64,
    pub overlap_metric: OverlapMetric,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            downsample_interval_s: 10.0,
            scan_propagation_s: 120.0,
            min_miniscene_frames: 90,
            overlap_ratio_threshold: 0.5,
            min_overlap_frames: 4,
            max_track_gap_frames: 30,
            overlap_metric: OverlapMetric::MinArea,
        }
    }
}

impl AnalysisParams {
    pub fn check(&self) -> Result<(), ModelError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ModelError::InvalidParams(format!("{name} must be positive, got {v}")))
            }
        };
        positive("downsample_interval_s", self.downsample_interval_s)?;
        positive("scan_propagation_s", self.scan_propagation_s)?;
        if self.min_miniscene_frames == 0 || self.min_overlap_frames == 0 || self.max_track_gap_frames == 0 {
            return Err(ModelError::InvalidParams("frame counts must be positive".into()));
        }
        if !(self.overlap_ratio_threshold > 0.0 && self.overlap_ratio_threshold < 1.0) {
            return Err(ModelError::InvalidParams(format!(
                "overlap_ratio_threshold must lie in (0, 1), got {}",
                self.overlap_ratio_threshold
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ethogram_has_tab10_rows_plus_out_of_sight() {
        let e = Ethogram::kabr_default();
        assert_eq!(e.classes().len(), 22);
        assert_eq!(e.behavioral_codes().count(), 18);
        let tech: Vec<_> = e.classes().iter().filter(|c| c.technical).map(|c| c.code.as_str()).collect();
        assert_eq!(tech, TECHNICAL_CODES);
        assert_eq!(e.resolve("Walk").unwrap().code, "W");
        assert_eq!(e.resolve("head up").unwrap().code, "HU");
        assert_eq!(e.resolve("SG").unwrap().code, "AG");
        assert_eq!(e.resolve("D").unwrap().name, "Drinking");
    }

    #[test]
    fn ethogram_rejects_duplicates_and_misflagged_technical() {
        let c = |code: &str, technical| BehaviorClass {
            code: code.into(),
            name: code.into(),
            species: Applicability::Both,
            technical,
            aliases: vec![],
        };
        assert!(Ethogram::new(vec![c("G", false), c("G", false)]).is_err());
        assert!(Ethogram::new(vec![c("G", true)]).is_err());
        assert!(Ethogram::new(vec![c("OOS", false)]).is_err());
        assert!(Ethogram::new(vec![c("G", false), c("OOS", true)]).is_ok());
    }

    #[test]
    fn label_stream_requires_contiguity() {
        let seg = |a, b, c: &str| FrameSegment { start_frame: a, end_frame: b, code: c.into() };
        assert!(LabelStream::new("t", vec![seg(0, 4, "G"), seg(6, 8, "W")]).is_err());
        assert!(LabelStream::new("t", vec![seg(3, 2, "G")]).is_err());
        let s = LabelStream::new("t", vec![seg(0, 4, "G"), seg(5, 8, "G")]).unwrap();
        assert_eq!(s.segments().len(), 1);
        assert_eq!(s.code_at(8), Some("G"));
        assert_eq!(s.code_at(9), None);
    }

    #[test]
    fn label_stream_slicing() {
        let s = LabelStream::from_frames("t", 10, &["G", "G", "W", "W", "G"]);
        let sl = s.slice(11, 12).unwrap();
        assert_eq!(sl.expand(), vec!["G", "W"]);
        assert_eq!(sl.frame_range(), Some((11, 12)));
        assert!(s.slice(20, 30).is_none());
    }

    #[test]
    fn frame_seconds_conversion() {
        let meta = VideoMeta::new("s", 30.0, 1920, 1080, DateTime::<Utc>::UNIX_EPOCH).unwrap();
        assert_eq!(meta.frame_to_seconds(90), 3.0);
        assert_eq!(meta.seconds_to_frame(3.0), 90);
        assert!(VideoMeta::new("s", 0.0, 1, 1, DateTime::<Utc>::UNIX_EPOCH).is_err());
        let ls = LabelStream::from_frames("t", 0, &["G"; 30]);
        let obs = ls.to_observation(&meta, Method::DroneFocal, 0.0);
        assert_eq!(obs.intervals, vec![Interval::new(0.0, 1.0, "G")]);
    }

    #[test]
    fn herd_size_category_boundary() {
        assert_eq!(HerdSizeCategory::from_size(3), HerdSizeCategory::Small);
        assert_eq!(HerdSizeCategory::from_size(4), HerdSizeCategory::Large);
    }

    #[test]
    fn observation_stream_checks() {
        let ok = ObservationStream::new("a", Method::GroundFocal, vec![Interval::new(0.0, 1.0, "G"), Interval::new(1.0, 2.0, "W")]);
        assert!(ok.check(false).is_ok());
        let overlap = ObservationStream::new("a", Method::GroundFocal, vec![Interval::new(0.0, 1.5, "G"), Interval::new(1.0, 2.0, "W")]);
        assert!(overlap.check(false).is_err());
        let instants =
            ObservationStream::new("a", Method::GroundScan, vec![Interval::new(0.0, 0.0, "G"), Interval::new(120.0, 120.0, "W")]);
        assert!(instants.check(true).is_ok());
        assert!(instants.check(false).is_err());
        assert_eq!(ok.code_at(1.0), Some("W"));
        assert_eq!(ok.code_at(2.0), None);
    }

    #[test]
    fn params_defaults_valid() {
        assert!(AnalysisParams::default().check().is_ok());
        let bad = AnalysisParams { overlap_ratio_threshold: 1.0, ..Default::default() };
        assert!(bad.check().is_err());
    }
}
