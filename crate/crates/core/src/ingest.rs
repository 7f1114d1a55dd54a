//! Readers and writers for every external file format.
//!
//! Canonical CSVs are UTF-8 with LF line endings, an exact header row and
//! `.`-decimal numbers. Writers emit the unique canonical form, so reading a
//! canonical file and writing it back reproduces it byte for byte.

use std::collections::BTreeMap;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    epoch_seconds, Applicability, BehaviorClass, BoundingBox, Ethogram, FrameSegment, Interval, LabelStream, Method, ModelError,
    ObservationStream, Species, TelemetryRecord, Track, VideoMeta, OUT_OF_FRAME,
};

pub const TRACK_HEADER: [&str; 9] = ["session_id", "track_id", "species", "frame", "x", "y", "w", "h", "excluded"];
pub const LABEL_HEADER: [&str; 5] = ["session_id", "track_id", "start_frame", "end_frame", "code"];
pub const GROUND_HEADER: [&str; 5] = ["observer_id", "subject_id", "method", "timestamp_iso8601", "code"];
pub const TELEMETRY_HEADER: [&str; 6] = ["timestamp_iso8601", "lat", "lon", "altitude_m", "heading_deg", "speed_mps"];
pub const ETHOGRAM_HEADER: [&str; 5] = ["code", "name", "species", "technical", "aliases"];
pub const SPECIES_COUNT_HEADER: [&str; 2] = ["species", "count"];

/// Code closing a focal observation in a ground observation file.
pub const END_CODE: &str = "END";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unexpected header: expected `{expected}`, found `{found}`")]
    UnexpectedHeader { expected: String, found: String },
    #[error("row {row}, column `{column}`: {message}")]
    Field { row: u64, column: String, message: String },
    #[error("row {row}: {message}")]
    Row { row: u64, message: String },
    #[error("XML line {line}: {message}")]
    Xml { line: u32, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

type Result<T> = std::result::Result<T, IngestError>;

struct Rows {
    header: &'static [&'static str],
    records: Vec<(u64, csv::StringRecord)>,
}

impl Rows {
    fn parse(text: &str, header: &'static [&'static str]) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
        let mut iter = reader.records();
        let found = match iter.next() {
            Some(rec) => rec?.iter().collect::<Vec<_>>().join(","),
            None => String::new(),
        };
        let expected = header.join(",");
        if found != expected {
            return Err(IngestError::UnexpectedHeader { expected, found });
        }
        let mut records = Vec::new();
        for rec in iter {
            let rec = rec?;
            let row = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() != header.len() {
                return Err(IngestError::Row { row, message: format!("expected {} fields, found {}", header.len(), rec.len()) });
            }
            records.push((row, rec));
        }
        Ok(Self { header, records })
    }

    fn field<T>(&self, row: u64, rec: &csv::StringRecord, col: usize) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let raw = &rec[col];
        raw.parse::<T>().map_err(|e| IngestError::Field {
            row,
            column: self.header[col].to_string(),
            message: format!("cannot parse `{raw}`: {e}"),
        })
    }

    fn text(&self, row: u64, rec: &csv::StringRecord, col: usize) -> Result<String> {
        let raw = &rec[col];
        if raw.is_empty() {
            return Err(IngestError::Field { row, column: self.header[col].to_string(), message: "empty value".into() });
        }
        Ok(raw.to_string())
    }

    fn timestamp(&self, row: u64, rec: &csv::StringRecord, col: usize) -> Result<DateTime<Utc>> {
        let raw = &rec[col];
        DateTime::parse_from_rfc3339(raw).map(|t| t.with_timezone(&Utc)).map_err(|e| IngestError::Field {
            row,
            column: self.header[col].to_string(),
            message: format!("cannot parse `{raw}`: {e}"),
        })
    }
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("in-memory writer cannot fail");
    String::from_utf8(bytes).expect("csv output is valid UTF-8")
}

/// Canonical timestamp text: RFC 3339, UTC `Z`, only as many fractional digits as needed.
pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

/// Converts epoch seconds back to a timestamp, rounded to the microsecond.
pub fn timestamp_from_seconds(secs: f64) -> DateTime<Utc> {
    let micros = (secs * 1e6).round() as i64;
    Utc.timestamp_micros(micros).single().expect("timestamp in range")
}

// ---------------------------------------------------------------- ethogram

pub fn parse_ethogram(text: &str) -> Result<Ethogram> {
    let rows = Rows::parse(text, &ETHOGRAM_HEADER)?;
    let mut classes = Vec::with_capacity(rows.records.len());
    for (row, rec) in &rows.records {
        let aliases = rec[4].split(';').map(str::trim).filter(|a| !a.is_empty()).map(String::from).collect();
        classes.push(BehaviorClass {
            code: rows.text(*row, rec, 0)?,
            name: rows.text(*row, rec, 1)?,
            species: rows.field::<Applicability>(*row, rec, 2)?,
            technical: rows.field::<bool>(*row, rec, 3)?,
            aliases,
        });
    }
    Ok(Ethogram::new(classes)?)
}

pub fn write_ethogram(ethogram: &Ethogram) -> String {
    let mut w = writer();
    w.write_record(ETHOGRAM_HEADER).unwrap();
    for c in ethogram.classes() {
        w.write_record([
            c.code.as_str(),
            c.name.as_str(),
            &c.species.to_string(),
            if c.technical { "true" } else { "false" },
            &c.aliases.join(";"),
        ])
        .unwrap();
    }
    finish(w)
}

// ------------------------------------------------------------------ tracks

/// Contents of a canonical track file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackFile {
    pub session_id: String,
    pub tracks: Vec<Track>,
}

pub fn read_tracks(text: &str) -> Result<TrackFile> {
    let rows = Rows::parse(text, &TRACK_HEADER)?;
    let mut session_id: Option<String> = None;
    let mut tracks: Vec<Track> = Vec::new();
    for (row, rec) in &rows.records {
        let row = *row;
        let sid = rows.text(row, rec, 0)?;
        match &session_id {
            None => session_id = Some(sid),
            Some(s) if *s != sid => {
                return Err(IngestError::Field { row, column: "session_id".into(), message: format!("mixed sessions `{s}` and `{sid}`") })
            }
            _ => {}
        }
        let track_id = rows.text(row, rec, 1)?;
        let species: Species = rows.field(row, rec, 2)?;
        let frame: u64 = rows.field(row, rec, 3)?;
        let (x, y, w, h) = (
            rows.field::<f64>(row, rec, 4)?,
            rows.field::<f64>(row, rec, 5)?,
            rows.field::<f64>(row, rec, 6)?,
            rows.field::<f64>(row, rec, 7)?,
        );
        let excluded: bool = rows.field(row, rec, 8)?;
        let bbox = BoundingBox::new(frame, x, y, w, h).map_err(|e| IngestError::Field {
            row,
            column: if w > 0.0 { "h".into() } else { "w".into() },
            message: e.to_string(),
        })?;

        match tracks.last_mut() {
            Some(t) if t.track_id == track_id => {
                if t.species != species {
                    return Err(IngestError::Field { row, column: "species".into(), message: "species changes within a track".into() });
                }
                if t.excluded != excluded {
                    return Err(IngestError::Field {
                        row,
                        column: "excluded".into(),
                        message: "excluded flag changes within a track".into(),
                    });
                }
                if frame <= t.boxes.last().map(|b| b.frame).unwrap_or(0) {
                    return Err(IngestError::Field { row, column: "frame".into(), message: "rows not sorted by frame".into() });
                }
                t.boxes.push(bbox);
            }
            last => {
                if let Some(prev) = last {
                    if prev.track_id > track_id {
                        return Err(IngestError::Field { row, column: "track_id".into(), message: "rows not sorted by track_id".into() });
                    }
                }
                tracks.push(Track { track_id, species, boxes: vec![bbox], excluded });
            }
        }
    }
    Ok(TrackFile { session_id: session_id.unwrap_or_default(), tracks })
}

pub fn write_tracks(session_id: &str, tracks: &[Track]) -> String {
    let mut sorted: Vec<&Track> = tracks.iter().collect();
    sorted.sort_by(|a, b| a.track_id.cmp(&b.track_id));
    let mut w = writer();
    w.write_record(TRACK_HEADER).unwrap();
    for t in sorted {
        let species = t.species.to_string();
        let excluded = if t.excluded { "true" } else { "false" };
        for b in &t.boxes {
            w.write_record([
                session_id,
                &t.track_id,
                &species,
                &b.frame.to_string(),
                &b.x.to_string(),
                &b.y.to_string(),
                &b.w.to_string(),
                &b.h.to_string(),
                excluded,
            ])
            .unwrap();
        }
    }
    finish(w)
}

// ------------------------------------------------------------------ labels

#[derive(Debug, Clone, PartialEq)]
pub struct LabelFile {
    pub session_id: String,
    pub streams: Vec<LabelStream>,
}

pub fn read_labels(text: &str) -> Result<LabelFile> {
    let rows = Rows::parse(text, &LABEL_HEADER)?;
    let mut session_id: Option<String> = None;
    let mut grouped: Vec<(String, Vec<FrameSegment>, u64)> = Vec::new();
    for (row, rec) in &rows.records {
        let row = *row;
        let sid = rows.text(row, rec, 0)?;
        match &session_id {
            None => session_id = Some(sid),
            Some(s) if *s != sid => {
                return Err(IngestError::Field { row, column: "session_id".into(), message: format!("mixed sessions `{s}` and `{sid}`") })
            }
            _ => {}
        }
        let track_id = rows.text(row, rec, 1)?;
        let start_frame: u64 = rows.field(row, rec, 2)?;
        let end_frame: u64 = rows.field(row, rec, 3)?;
        let code = rows.text(row, rec, 4)?;
        if end_frame < start_frame {
            return Err(IngestError::Field { row, column: "end_frame".into(), message: "end_frame before start_frame".into() });
        }
        let seg = FrameSegment { start_frame, end_frame, code };
        match grouped.last_mut() {
            Some((id, segs, _)) if *id == track_id => {
                let prev_end = segs.last().map(|s| s.end_frame).unwrap_or(0);
                if start_frame != prev_end + 1 {
                    return Err(IngestError::Field {
                        row,
                        column: "start_frame".into(),
                        message: format!("segment does not continue from frame {prev_end}"),
                    });
                }
                segs.push(seg);
            }
            last => {
                if let Some((prev, _, _)) = last {
                    if *prev > track_id {
                        return Err(IngestError::Field { row, column: "track_id".into(), message: "rows not sorted by track_id".into() });
                    }
                }
                grouped.push((track_id, vec![seg], row));
            }
        }
    }
    let mut streams = Vec::with_capacity(grouped.len());
    for (id, segs, row) in grouped {
        streams.push(LabelStream::new(id, segs).map_err(|e| IngestError::Row { row, message: e.to_string() })?);
    }
    Ok(LabelFile { session_id: session_id.unwrap_or_default(), streams })
}

pub fn write_labels(session_id: &str, streams: &[LabelStream]) -> String {
    let mut sorted: Vec<&LabelStream> = streams.iter().collect();
    sorted.sort_by(|a, b| a.track_id.cmp(&b.track_id));
    let mut w = writer();
    w.write_record(LABEL_HEADER).unwrap();
    for s in sorted {
        for seg in s.segments() {
            w.write_record([session_id, &s.track_id, &seg.start_frame.to_string(), &seg.end_frame.to_string(), &seg.code]).unwrap();
        }
    }
    finish(w)
}

// ----------------------------------------------------- ground observations

/// One row of a ground observation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundEvent {
    pub observer_id: String,
    pub subject_id: String,
    pub method: Method,
    pub timestamp: DateTime<Utc>,
    pub code: String,
}

pub fn read_ground_observations(text: &str) -> Result<Vec<GroundEvent>> {
    let rows = Rows::parse(text, &GROUND_HEADER)?;
    let mut last_seen: BTreeMap<(String, String), DateTime<Utc>> = BTreeMap::new();
    let mut out = Vec::with_capacity(rows.records.len());
    for (row, rec) in &rows.records {
        let row = *row;
        let ev = GroundEvent {
            observer_id: rows.text(row, rec, 0)?,
            subject_id: rows.text(row, rec, 1)?,
            method: rows.field(row, rec, 2)?,
            timestamp: rows.timestamp(row, rec, 3)?,
            code: rows.text(row, rec, 4)?,
        };
        let key = (ev.observer_id.clone(), ev.subject_id.clone());
        if let Some(prev) = last_seen.get(&key) {
            if ev.timestamp < *prev {
                return Err(IngestError::Field {
                    row,
                    column: "timestamp_iso8601".into(),
                    message: format!("timestamp decreases for observer {} subject {}", key.0, key.1),
                });
            }
        }
        last_seen.insert(key, ev.timestamp);
        out.push(ev);
    }
    Ok(out)
}

pub fn write_ground_observations(events: &[GroundEvent]) -> String {
    let mut w = writer();
    w.write_record(GROUND_HEADER).unwrap();
    for e in events {
        w.write_record([e.observer_id.as_str(), &e.subject_id, e.method.as_str(), &format_timestamp(&e.timestamp), &e.code]).unwrap();
    }
    finish(w)
}

/// Groups ground events into observation streams (times in epoch seconds).
///
/// Scan rows become instantaneous events. Focal rows are behavior changes:
/// each lasts until the next row for the same observer, subject and method.
/// A row with code [`END_CODE`] closes the record; without one the last
/// behavior runs until the observer's final timestamp in the file.
pub fn ground_events_to_streams(events: &[GroundEvent]) -> Vec<ObservationStream> {
    let mut observer_end: BTreeMap<&str, DateTime<Utc>> = BTreeMap::new();
    for e in events {
        let end = observer_end.entry(e.observer_id.as_str()).or_insert(e.timestamp);
        if e.timestamp > *end {
            *end = e.timestamp;
        }
    }
    let mut grouped: BTreeMap<(&str, &str, Method), Vec<&GroundEvent>> = BTreeMap::new();
    for e in events {
        grouped.entry((e.subject_id.as_str(), e.observer_id.as_str(), e.method)).or_default().push(e);
    }
    let mut streams = Vec::new();
    for ((subject, observer, method), evs) in grouped {
        let mut intervals = Vec::new();
        if method == Method::GroundScan {
            for e in evs.iter().filter(|e| e.code != END_CODE) {
                let t = epoch_seconds(&e.timestamp);
                intervals.push(Interval::new(t, t, e.code.clone()));
            }
        } else {
            for (i, e) in evs.iter().enumerate() {
                if e.code == END_CODE {
                    continue;
                }
                let start = epoch_seconds(&e.timestamp);
                let end = match evs.get(i + 1) {
                    Some(next) => epoch_seconds(&next.timestamp),
                    None => epoch_seconds(&observer_end[observer]),
                };
                if end > start {
                    match intervals.last_mut() {
                        Some(Interval { end: pe, code, .. }) if *pe == start && *code == e.code => *pe = end,
                        _ => intervals.push(Interval::new(start, end, e.code.clone())),
                    }
                }
            }
        }
        if !intervals.is_empty() {
            streams.push(ObservationStream::new(subject, method, intervals));
        }
    }
    streams
}

/// Inverse of [`ground_events_to_streams`] for one observer.
pub fn streams_to_ground_events(observer_id: &str, streams: &[ObservationStream]) -> Vec<GroundEvent> {
    let mut out = Vec::new();
    for s in streams {
        let mut push = |t: f64, code: &str| {
            out.push(GroundEvent {
                observer_id: observer_id.to_string(),
                subject_id: s.subject_id.clone(),
                method: s.method,
                timestamp: timestamp_from_seconds(t),
                code: code.to_string(),
            })
        };
        if s.method == Method::GroundScan {
            for iv in &s.intervals {
                push(iv.start, &iv.code);
            }
            continue;
        }
        for (i, iv) in s.intervals.iter().enumerate() {
            push(iv.start, &iv.code);
            let contiguous = s.intervals.get(i + 1).map(|n| n.start == iv.end).unwrap_or(false);
            if !contiguous {
                push(iv.end, END_CODE);
            }
        }
    }
    out
}

// --------------------------------------------------------------- telemetry

pub fn read_telemetry(text: &str) -> Result<Vec<TelemetryRecord>> {
    let rows = Rows::parse(text, &TELEMETRY_HEADER)?;
    let mut out: Vec<TelemetryRecord> = Vec::with_capacity(rows.records.len());
    for (row, rec) in &rows.records {
        let row = *row;
        let r = TelemetryRecord {
            timestamp: rows.timestamp(row, rec, 0)?,
            lat: rows.field(row, rec, 1)?,
            lon: rows.field(row, rec, 2)?,
            altitude_m: rows.field(row, rec, 3)?,
            heading_deg: rows.field(row, rec, 4)?,
            speed_mps: rows.field(row, rec, 5)?,
        };
        r.check().map_err(|e| IngestError::Row { row, message: e.to_string() })?;
        if let Some(prev) = out.last() {
            if r.timestamp < prev.timestamp {
                return Err(IngestError::Field { row, column: "timestamp_iso8601".into(), message: "timestamps decrease".into() });
            }
        }
        out.push(r);
    }
    Ok(out)
}

pub fn write_telemetry(records: &[TelemetryRecord]) -> String {
    let mut w = writer();
    w.write_record(TELEMETRY_HEADER).unwrap();
    for r in records {
        w.write_record([
            format_timestamp(&r.timestamp),
            r.lat.to_string(),
            r.lon.to_string(),
            r.altitude_m.to_string(),
            r.heading_deg.to_string(),
            r.speed_mps.to_string(),
        ])
        .unwrap();
    }
    finish(w)
}

// ---------------------------------------------------------- species counts

/// `species,count` table used for herd composition.
pub fn read_species_counts(text: &str) -> Result<BTreeMap<Species, u32>> {
    let rows = Rows::parse(text, &SPECIES_COUNT_HEADER)?;
    let mut out = BTreeMap::new();
    for (row, rec) in &rows.records {
        let species: Species = rows.field(*row, rec, 0)?;
        let count: u32 = rows.field(*row, rec, 1)?;
        if out.insert(species, count).is_some() {
            return Err(IngestError::Field { row: *row, column: "species".into(), message: "duplicate species".into() });
        }
    }
    Ok(out)
}

pub const PAIR_COUNT_HEADER: [&str; 4] = ["species_a", "species_b", "overlap_count", "events"];

/// Pre-aggregated overlap counts per species pair. `events` may be empty (read as 0).
pub fn read_pair_counts(text: &str) -> Result<BTreeMap<(Species, Species), (u64, u64)>> {
    let rows = Rows::parse(text, &PAIR_COUNT_HEADER)?;
    let mut out = BTreeMap::new();
    for (row, rec) in &rows.records {
        let a: Species = rows.field(*row, rec, 0)?;
        let b: Species = rows.field(*row, rec, 1)?;
        let count: u64 = rows.field(*row, rec, 2)?;
        let events: u64 = if rec[3].is_empty() { 0 } else { rows.field(*row, rec, 3)? };
        let key = if a <= b { (a, b) } else { (b, a) };
        if out.insert(key, (count, events)).is_some() {
            return Err(IngestError::Row { row: *row, message: "duplicate species pair".into() });
        }
    }
    Ok(out)
}

// -------------------------------------------------------------------- CVAT

/// Result of importing a CVAT video annotation document.
#[derive(Debug, Clone, PartialEq)]
pub struct CvatImport {
    pub tracks: Vec<Track>,
    pub labels: Vec<LabelStream>,
    pub warnings: Vec<String>,
    /// Number of `<box>` elements anywhere in the document.
    pub box_elements: usize,
    /// Boxes not imported: `outside="1"` markers and boxes under skipped elements.
    pub skipped_boxes: usize,
}

fn line_of(doc: &roxmltree::Document, node: roxmltree::Node) -> u32 {
    doc.text_pos_at(node.range().start).row
}

fn attr<'a>(doc: &roxmltree::Document, node: roxmltree::Node<'a, 'a>, name: &str) -> Result<&'a str> {
    node.attribute(name).ok_or_else(|| IngestError::Xml {
        line: line_of(doc, node),
        message: format!("<{}> missing attribute `{name}`", node.tag_name().name()),
    })
}

fn num_attr<T: FromStr>(doc: &roxmltree::Document, node: roxmltree::Node, name: &str) -> Result<T> {
    let raw = attr(doc, node, name)?;
    raw.trim()
        .parse::<T>()
        .map_err(|_| IngestError::Xml { line: line_of(doc, node), message: format!("attribute `{name}` has invalid value `{raw}`") })
}

/// Imports tracks and per-frame behavior labels from CVAT "video annotation" XML.
///
/// Only `<track>` elements holding `<box>` children with a `behavior`
/// attribute are understood. Frames between visible boxes (including
/// `outside="1"` runs) are labelled Out of Frame.
pub fn import_cvat_video_xml(document: &str, meta: &VideoMeta, ethogram: &Ethogram) -> Result<CvatImport> {
    let doc = roxmltree::Document::parse(document).map_err(|e| IngestError::Xml { line: e.pos().row, message: e.to_string() })?;
    let root = doc.root_element();
    if root.tag_name().name() != "annotations" {
        return Err(IngestError::Xml {
            line: line_of(&doc, root),
            message: format!("expected <annotations> root, found <{}>", root.tag_name().name()),
        });
    }

    let box_elements = doc.descendants().filter(|n| n.has_tag_name("box")).count();
    let mut skipped_boxes = 0usize;
    let mut warnings = Vec::new();
    let mut tracks = Vec::new();
    let mut labels = Vec::new();

    for child in root.children().filter(|n| n.is_element()) {
        match child.tag_name().name() {
            "version" | "meta" => {}
            "track" => {
                let (track, stream, skipped) = import_track(&doc, child, meta, ethogram, &mut warnings)?;
                skipped_boxes += skipped;
                if let Some(track) = track {
                    tracks.push(track);
                }
                if let Some(stream) = stream {
                    labels.push(stream);
                }
            }
            other => {
                let nested = child.descendants().filter(|n| n.has_tag_name("box")).count();
                skipped_boxes += nested;
                warnings.push(format!("line {}: unsupported element <{other}> skipped", line_of(&doc, child)));
            }
        }
    }

    Ok(CvatImport { tracks, labels, warnings, box_elements, skipped_boxes })
}

type TrackImport = (Option<Track>, Option<LabelStream>, usize);

fn import_track(
    doc: &roxmltree::Document,
    node: roxmltree::Node,
    meta: &VideoMeta,
    ethogram: &Ethogram,
    warnings: &mut Vec<String>,
) -> Result<TrackImport> {
    let id = attr(doc, node, "id")?.to_string();
    let species = Species::from_label(attr(doc, node, "label")?);
    let mut skipped = 0usize;
    let mut visible: Vec<(BoundingBox, String, u32)> = Vec::new();

    for child in node.children().filter(|n| n.is_element()) {
        if child.tag_name().name() != "box" {
            skipped += child.descendants().filter(|n| n.has_tag_name("box")).count();
            warnings.push(format!("line {}: unsupported element <{}> in track {id} skipped", line_of(doc, child), child.tag_name().name()));
            continue;
        }
        let line = line_of(doc, child);
        let frame: u64 = num_attr(doc, child, "frame")?;
        let outside = child.attribute("outside").map(|v| v.trim() == "1").unwrap_or(false);
        if outside {
            skipped += 1;
            continue;
        }
        let xtl: f64 = num_attr(doc, child, "xtl")?;
        let ytl: f64 = num_attr(doc, child, "ytl")?;
        let xbr: f64 = num_attr(doc, child, "xbr")?;
        let ybr: f64 = num_attr(doc, child, "ybr")?;
        let bbox = BoundingBox::new(frame, xtl, ytl, xbr - xtl, ybr - ytl)
            .map_err(|_| IngestError::Xml { line, message: format!("degenerate box in track {id} at frame {frame}") })?;
        let (cx, cy) = bbox.center();
        if cx < 0.0 || cy < 0.0 || cx > f64::from(meta.width_px) || cy > f64::from(meta.height_px) {
            warnings.push(format!("line {line}: box center of track {id} frame {frame} is outside the video frame"));
        }
        let behavior = child
            .children()
            .find(|a| a.has_tag_name("attribute") && a.attribute("name") == Some("behavior"))
            .and_then(|a| a.text())
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .ok_or_else(|| IngestError::Xml { line, message: format!("box in track {id} at frame {frame} has no behavior attribute") })?;
        let code = ethogram.resolve(behavior).map(|c| c.code.clone()).unwrap_or_else(|| behavior.to_string());
        visible.push((bbox, code, line));
    }

    visible.sort_by_key(|(b, _, _)| b.frame);
    for w in visible.windows(2) {
        if w[0].0.frame == w[1].0.frame {
            return Err(IngestError::Xml { line: w[1].2, message: format!("duplicate box for track {id} at frame {}", w[1].0.frame) });
        }
    }
    if visible.is_empty() {
        return Ok((None, None, skipped));
    }

    let mut segments: Vec<FrameSegment> = Vec::new();
    let mut push = |start: u64, end: u64, code: &str| match segments.last_mut() {
        Some(last) if last.code == code && last.end_frame + 1 == start => last.end_frame = end,
        _ => segments.push(FrameSegment { start_frame: start, end_frame: end, code: code.to_string() }),
    };
    let mut prev: Option<u64> = None;
    for (b, code, _) in &visible {
        if let Some(p) = prev {
            if b.frame > p + 1 {
                push(p + 1, b.frame - 1, OUT_OF_FRAME);
            }
        }
        push(b.frame, b.frame, code);
        prev = Some(b.frame);
    }
    let stream = LabelStream::new(id.clone(), segments)?;
    let track = Track::new(id, species, visible.into_iter().map(|(b, _, _)| b).collect());
    Ok((Some(track), Some(stream), skipped))
}
