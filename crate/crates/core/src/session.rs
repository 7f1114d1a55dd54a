//! Session directories: one video's tracks and labels plus optional ground
//! observations, telemetry and herd composition.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::ingest::{self, GroundEvent};
use crate::model::{retained_tracks, LabelStream, Method, ObservationStream, Species, TelemetryRecord, Track, VideoMeta};
use crate::simulator::{observe_focal, observe_scan, SimWorld};

pub const SESSION_FILE: &str = "session.toml";
pub const TRACKS_FILE: &str = "tracks.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const ML_LABELS_FILE: &str = "ml_labels.csv";
pub const TRUTH_LABELS_FILE: &str = "truth_labels.csv";
pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const TELEMETRY_FILE: &str = "telemetry.csv";
pub const COMPOSITION_FILE: &str = "composition.csv";

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
}

type Result<T> = std::result::Result<T, SessionError>;

fn parse_err(path: &Path, e: impl ToString) -> SessionError {
    SessionError::Parse { path: path.to_path_buf(), message: e.to_string() }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| SessionError::Io { path: path.to_path_buf(), source })
}

fn read_optional(path: &Path) -> Result<Option<String>> {
    match fs::read_to_string(path) {
        Ok(t) => Ok(Some(t)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(source) => Err(SessionError::Io { path: path.to_path_buf(), source }),
    }
}

/// Writes through a temporary sibling and renames, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let io_err = |source| SessionError::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, contents).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub dir: PathBuf,
    pub meta: VideoMeta,
    pub tracks: Vec<Track>,
    pub labels: Vec<LabelStream>,
    pub ml_labels: Option<Vec<LabelStream>>,
    pub ground_events: Vec<GroundEvent>,
    pub observations: Vec<ObservationStream>,
    pub telemetry: Vec<TelemetryRecord>,
    pub composition: Option<BTreeMap<Species, u32>>,
}

fn check_session_id(path: &Path, found: &str, meta: &VideoMeta) -> Result<()> {
    if found.is_empty() || found == meta.session_id {
        Ok(())
    } else {
        Err(parse_err(path, format!("session_id `{found}` does not match `{}`", meta.session_id)))
    }
}

impl Session {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = dir.join(SESSION_FILE);
        let meta: VideoMeta = toml::from_str(&read_text(&manifest)?).map_err(|e| parse_err(&manifest, e))?;
        meta.check().map_err(|e| parse_err(&manifest, e))?;

        let path = dir.join(TRACKS_FILE);
        let tf = ingest::read_tracks(&read_text(&path)?).map_err(|e| parse_err(&path, e))?;
        check_session_id(&path, &tf.session_id, &meta)?;

        let path = dir.join(LABELS_FILE);
        let lf = ingest::read_labels(&read_text(&path)?).map_err(|e| parse_err(&path, e))?;
        check_session_id(&path, &lf.session_id, &meta)?;

        let path = dir.join(ML_LABELS_FILE);
        let ml_labels = match read_optional(&path)? {
            Some(t) => {
                let f = ingest::read_labels(&t).map_err(|e| parse_err(&path, e))?;
                check_session_id(&path, &f.session_id, &meta)?;
                Some(f.streams)
            }
            None => None,
        };

        let path = dir.join(OBSERVATIONS_FILE);
        let ground_events = match read_optional(&path)? {
            Some(t) => ingest::read_ground_observations(&t).map_err(|e| parse_err(&path, e))?,
            None => Vec::new(),
        };
        let observations = ingest::ground_events_to_streams(&ground_events);

        let path = dir.join(TELEMETRY_FILE);
        let telemetry = match read_optional(&path)? {
            Some(t) => ingest::read_telemetry(&t).map_err(|e| parse_err(&path, e))?,
            None => Vec::new(),
        };

        let path = dir.join(COMPOSITION_FILE);
        let composition = match read_optional(&path)? {
            Some(t) => Some(ingest::read_species_counts(&t).map_err(|e| parse_err(&path, e))?),
            None => None,
        };

        Ok(Session {
            dir: dir.to_path_buf(),
            meta,
            tracks: tf.tracks,
            labels: lf.streams,
            ml_labels,
            ground_events,
            observations,
            telemetry,
            composition,
        })
    }

    /// Frame labels on the epoch-seconds axis shared with ground observations.
    pub fn label_observations(&self, streams: &[LabelStream], method: Method) -> Vec<ObservationStream> {
        let origin = self.meta.start_epoch_seconds();
        streams.iter().map(|s| s.to_observation(&self.meta, method, origin)).collect()
    }

    pub fn observations_by(&self, method: Method) -> Vec<ObservationStream> {
        self.observations.iter().filter(|s| s.method == method).cloned().collect()
    }

    /// Explicit composition when present, otherwise retained tracks counted by species.
    pub fn composition(&self) -> BTreeMap<Species, u32> {
        if let Some(c) = &self.composition {
            return c.clone();
        }
        let mut out = BTreeMap::new();
        for t in retained_tracks(&self.tracks) {
            *out.entry(t.species.clone()).or_insert(0) += 1;
        }
        out
    }
}

pub const SCAN_OBSERVER: &str = "sim-scan";
pub const FOCAL_OBSERVER: &str = "sim-focal";

/// Canonical session files for a simulated world: drone-view labels in
/// `labels.csv`, ground truth in `truth_labels.csv`, and ground scan and
/// focal records in `observations.csv`.
pub fn simulated_session_files(world: &SimWorld) -> Vec<(&'static str, String)> {
    let meta = world.video_meta();
    let origin = meta.start_epoch_seconds();
    let n = world.individuals.len();
    let tracks = world.tracks();
    let drone: Vec<LabelStream> = (0..n).map(|i| world.observed_labels(i, Method::DroneFocal)).collect();
    let truth = world.all_truth_labels();

    let shift = |s: ObservationStream| {
        let mut s = s;
        for iv in &mut s.intervals {
            iv.start += origin;
            iv.end += origin;
        }
        s
    };
    let scans: Vec<ObservationStream> =
        observe_scan(world, world.config.scan_period_s).expect("validated scan period").into_iter().map(shift).collect();
    let focal: Vec<ObservationStream> =
        world.subject_ids().iter().map(|id| shift(observe_focal(world, id, Method::GroundFocal).expect("known subject"))).collect();
    let mut events = ingest::streams_to_ground_events(SCAN_OBSERVER, &scans);
    events.extend(ingest::streams_to_ground_events(FOCAL_OBSERVER, &focal));

    let mut composition = String::from("species,count\n");
    composition.push_str(&format!("{},{}\n", world.config.species, n));

    vec![
        (SESSION_FILE, toml::to_string(&meta).expect("metadata serializes")),
        (TRACKS_FILE, ingest::write_tracks(&meta.session_id, &tracks)),
        (LABELS_FILE, ingest::write_labels(&meta.session_id, &drone)),
        (TRUTH_LABELS_FILE, ingest::write_labels(&meta.session_id, &truth)),
        (OBSERVATIONS_FILE, ingest::write_ground_observations(&events)),
        (COMPOSITION_FILE, composition),
    ]
}
