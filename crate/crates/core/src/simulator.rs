//! Seeded synthetic herd: Markov behavior, reflected random-walk movement,
//! occlusion zones, and the sampling methods applied to it.
//!
//! Determinism: individual `i` draws every random number from
//! `ChaCha8Rng::seed_from_u64(seed)` with `set_stream(i)`. Per step the draw
//! order is: next code, heading perturbation, then (ground, drone) loss draws
//! for each zone entered, in zone order. Initial state draws, in order:
//! initial code (only when not fixed), x, y, heading, then the entry draws.

use std::f64::consts::PI;

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    BoundingBox, FrameSegment, Interval, LabelStream, Method, ObservationStream, Species, Track, VideoMeta, OUT_OF_SIGHT, TECHNICAL_CODES,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
    #[error("unknown subject `{0}`")]
    UnknownSubject(String),
    #[error("method {0} is not a focal method")]
    NotFocal(Method),
}

type Result<T> = std::result::Result<T, SimError>;

/// Axis-aligned rectangle in meters where observers may lose sight of animals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcclusionZone {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    /// Probability a ground observer loses the animal for one visit to the zone.
    pub ground_loss: f64,
    pub drone_loss: f64,
}

impl OcclusionZone {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.x0 <= x && x <= self.x1 && self.y0 <= y && y <= self.y1
    }

    fn loss(&self, method: Method) -> f64 {
        match method {
            Method::DroneFocal => self.drone_loss,
            _ => self.ground_loss,
        }
    }
}

fn default_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2023, 1, 18, 10, 0, 0).unwrap()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub n_individuals: usize,
    pub codes: Vec<String>,
    /// Row-stochastic transition matrix applied once per step.
    pub q: Vec<Vec<f64>>,
    /// Movement speed (m/s) while in each code.
    pub speeds: Vec<f64>,
    /// `None` draws each individual's first code uniformly.
    pub initial_code: Option<String>,
    pub arena_w_m: f64,
    pub arena_h_m: f64,
    pub zones: Vec<OcclusionZone>,
    pub fps: f64,
    pub duration_s: f64,
    pub step_s: f64,
    pub scan_period_s: f64,
    /// Standard deviation of the per-step heading change (radians).
    pub turn_sd: f64,
    pub px_per_m: f64,
    pub body_w_m: f64,
    pub body_h_m: f64,
    pub species: Species,
    pub session_id: String,
    pub start_time: DateTime<Utc>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_individuals: 8,
            codes: ["G", "W", "HU", "R"].map(String::from).to_vec(),
            q: vec![
                vec![0.911, 0.060, 0.025, 0.004],
                vec![0.100, 0.850, 0.040, 0.010],
                vec![0.080, 0.050, 0.860, 0.010],
                vec![0.050, 0.200, 0.050, 0.700],
            ],
            speeds: vec![0.2, 1.2, 0.0, 6.0],
            initial_code: None,
            arena_w_m: 200.0,
            arena_h_m: 150.0,
            zones: vec![OcclusionZone { x0: 0.0, y0: 0.0, x1: 60.0, y1: 150.0, ground_loss: 0.8, drone_loss: 0.3 }],
            fps: 30.0,
            duration_s: 600.0,
            step_s: 1.0,
            scan_period_s: 120.0,
            turn_sd: 0.5,
            px_per_m: 10.0,
            body_w_m: 2.5,
            body_h_m: 1.5,
            species: Species::GrevysZebra,
            session_id: "sim".into(),
            start_time: default_start(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> SimError {
    SimError::InvalidConfig(msg.into())
}

fn near_integer(v: f64) -> bool {
    (v - v.round()).abs() < 1e-9 * v.abs().max(1.0)
}

impl SimConfig {
    pub fn check(&self) -> Result<()> {
        let k = self.codes.len();
        if k == 0 {
            return Err(invalid("at least one behavior code is required"));
        }
        for (i, c) in self.codes.iter().enumerate() {
            if TECHNICAL_CODES.contains(&c.as_str()) {
                return Err(invalid(format!("technical code {c} cannot be simulated")));
            }
            if self.codes[..i].contains(c) {
                return Err(invalid(format!("duplicate code {c}")));
            }
        }
        if self.q.len() != k || self.q.iter().any(|r| r.len() != k) {
            return Err(invalid(format!("Q must be {k}x{k}")));
        }
        for (i, row) in self.q.iter().enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(invalid(format!("Q row {i} has a negative or non-finite entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(invalid(format!("Q row {i} sums to {s}")));
            }
        }
        if self.speeds.len() != k || self.speeds.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(invalid("one non-negative speed per code is required"));
        }
        if let Some(c) = &self.initial_code {
            if !self.codes.contains(c) {
                return Err(invalid(format!("initial code {c} is not among the codes")));
            }
        }
        if self.n_individuals == 0 {
            return Err(invalid("n_individuals must be positive"));
        }
        let positive = [
            ("duration_s", self.duration_s),
            ("step_s", self.step_s),
            ("fps", self.fps),
            ("scan_period_s", self.scan_period_s),
            ("arena_w_m", self.arena_w_m),
            ("arena_h_m", self.arena_h_m),
            ("px_per_m", self.px_per_m),
            ("body_w_m", self.body_w_m),
            ("body_h_m", self.body_h_m),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if !(self.turn_sd.is_finite() && self.turn_sd >= 0.0) {
            return Err(invalid("turn_sd must be non-negative"));
        }
        if !near_integer(self.duration_s / self.step_s) {
            return Err(invalid("duration_s must be a whole number of steps"));
        }
        if !near_integer(self.step_s * self.fps) {
            return Err(invalid("each step must span a whole number of frames"));
        }
        for (i, z) in self.zones.iter().enumerate() {
            if !(z.x0 < z.x1 && z.y0 < z.y1) {
                return Err(invalid(format!("zone {i} is empty")));
            }
            for p in [z.ground_loss, z.drone_loss] {
                if !(0.0..=1.0).contains(&p) {
                    return Err(invalid(format!("zone {i} loss probability {p} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.duration_s / self.step_s).round() as usize
    }

    fn frames_per_step(&self) -> u64 {
        (self.step_s * self.fps).round() as u64
    }
}

/// Ground-truth state of one individual at steps `0..=n_steps`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimIndividual {
    pub id: String,
    /// Indices into the config's codes.
    pub codes: Vec<usize>,
    pub positions: Vec<(f64, f64)>,
    pub ground_hidden: Vec<bool>,
    pub drone_hidden: Vec<bool>,
}

impl SimIndividual {
    fn hidden(&self, method: Method) -> &[bool] {
        match method {
            Method::DroneFocal => &self.drone_hidden,
            _ => &self.ground_hidden,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimWorld {
    pub config: SimConfig,
    pub individuals: Vec<SimIndividual>,
}

fn draw_index(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (j, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return j;
        }
    }
    // rounding slack: last code with positive weight
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1)
}

fn reflect(pos: f64, heading: f64, limit: f64, horizontal: bool) -> (f64, f64) {
    let (mut p, mut h) = (pos, heading);
    for _ in 0..64 {
        if p < 0.0 {
            p = -p;
        } else if p > limit {
            p = 2.0 * limit - p;
        } else {
            break;
        }
        h = if horizontal { PI - h } else { -h };
    }
    (p.clamp(0.0, limit), h)
}

struct ZoneState {
    inside: Vec<bool>,
    ground_lost: Vec<bool>,
    drone_lost: Vec<bool>,
}

impl ZoneState {
    fn update(&mut self, zones: &[OcclusionZone], (x, y): (f64, f64), rng: &mut ChaCha8Rng) -> (bool, bool) {
        let (mut g, mut d) = (false, false);
        for (i, z) in zones.iter().enumerate() {
            let now = z.contains(x, y);
            if now && !self.inside[i] {
                let ug: f64 = rng.gen();
                let ud: f64 = rng.gen();
                self.ground_lost[i] = ug < z.loss(Method::GroundFocal);
                self.drone_lost[i] = ud < z.loss(Method::DroneFocal);
            }
            self.inside[i] = now;
            g |= now && self.ground_lost[i];
            d |= now && self.drone_lost[i];
        }
        (g, d)
    }
}

/// Runs the simulation. Identical configs give bit-identical worlds.
pub fn simulate(config: &SimConfig) -> Result<SimWorld> {
    config.check()?;
    let n_steps = config.n_steps();
    let k = config.codes.len();
    let turn = Normal::new(0.0, config.turn_sd).map_err(|e| invalid(e.to_string()))?;
    let width = (config.n_individuals.max(1) as f64).log10().floor() as usize + 1;
    let fixed = config.initial_code.as_ref().and_then(|c| config.codes.iter().position(|x| x == c));

    let mut individuals = Vec::with_capacity(config.n_individuals);
    for i in 0..config.n_individuals {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(i as u64);
        let mut code = match fixed {
            Some(c) => c,
            None => rng.gen_range(0..k),
        };
        let mut x = rng.gen::<f64>() * config.arena_w_m;
        let mut y = rng.gen::<f64>() * config.arena_h_m;
        let mut heading = rng.gen::<f64>() * 2.0 * PI;
        let n_zones = config.zones.len();
        let mut zs = ZoneState { inside: vec![false; n_zones], ground_lost: vec![false; n_zones], drone_lost: vec![false; n_zones] };

        let mut ind = SimIndividual {
            id: format!("sim-{:0width$}", i + 1),
            codes: Vec::with_capacity(n_steps + 1),
            positions: Vec::with_capacity(n_steps + 1),
            ground_hidden: Vec::with_capacity(n_steps + 1),
            drone_hidden: Vec::with_capacity(n_steps + 1),
        };
        let (g, d) = zs.update(&config.zones, (x, y), &mut rng);
        ind.codes.push(code);
        ind.positions.push((x, y));
        ind.ground_hidden.push(g);
        ind.drone_hidden.push(d);

        for _ in 0..n_steps {
            let next = draw_index(&mut rng, &config.q[code]);
            heading += turn.sample(&mut rng);
            let dist = config.speeds[code] * config.step_s;
            (x, heading) = reflect(x + dist * heading.cos(), heading, config.arena_w_m, true);
            (y, heading) = reflect(y + dist * heading.sin(), heading, config.arena_h_m, false);
            heading = heading.rem_euclid(2.0 * PI);
            code = next;
            let (g, d) = zs.update(&config.zones, (x, y), &mut rng);
            ind.codes.push(code);
            ind.positions.push((x, y));
            ind.ground_hidden.push(g);
            ind.drone_hidden.push(d);
        }
        individuals.push(ind);
    }
    Ok(SimWorld { config: config.clone(), individuals })
}

/// Merges per-step codes over `[k*step, (k+1)*step)` into intervals.
fn step_intervals(step_s: f64, codes: impl Iterator<Item = String>) -> Vec<Interval> {
    let mut out: Vec<Interval> = Vec::new();
    for (k, code) in codes.enumerate() {
        let (start, end) = (k as f64 * step_s, (k + 1) as f64 * step_s);
        match out.last_mut() {
            Some(last) if last.code == code => last.end = end,
            _ => out.push(Interval::new(start, end, code)),
        }
    }
    out
}

impl SimWorld {
    pub fn subject_index(&self, subject: &str) -> Result<usize> {
        self.individuals.iter().position(|i| i.id == subject).ok_or_else(|| SimError::UnknownSubject(subject.into()))
    }

    pub fn subject_ids(&self) -> Vec<String> {
        self.individuals.iter().map(|i| i.id.clone()).collect()
    }

    fn code(&self, idx: usize) -> &str {
        &self.config.codes[idx]
    }

    /// Ground-truth behavior on the seconds axis (relative to the run start).
    pub fn truth_stream(&self, i: usize, method: Method) -> ObservationStream {
        let ind = &self.individuals[i];
        let n = self.config.n_steps();
        let intervals = step_intervals(self.config.step_s, ind.codes[..n].iter().map(|&c| self.code(c).to_string()));
        ObservationStream::new(ind.id.clone(), method, intervals)
    }

    /// Ground-truth behavior per video frame.
    pub fn truth_labels(&self, i: usize) -> LabelStream {
        self.frame_labels(i, None)
    }

    /// Per-frame labels as seen by a focal method: hidden steps are out-of-sight.
    pub fn observed_labels(&self, i: usize, method: Method) -> LabelStream {
        self.frame_labels(i, Some(self.individuals[i].hidden(method)))
    }

    fn frame_labels(&self, i: usize, hidden: Option<&[bool]>) -> LabelStream {
        let ind = &self.individuals[i];
        let fps = self.config.frames_per_step();
        let segments = ind.codes[..self.config.n_steps()]
            .iter()
            .enumerate()
            .map(|(k, &c)| FrameSegment {
                start_frame: k as u64 * fps,
                end_frame: (k as u64 + 1) * fps - 1,
                code: match hidden {
                    Some(h) if h[k] => OUT_OF_SIGHT.to_string(),
                    _ => self.code(c).to_string(),
                },
            })
            .collect();
        LabelStream::new(ind.id.clone(), segments).expect("contiguous simulated segments")
    }

    pub fn video_meta(&self) -> VideoMeta {
        let c = &self.config;
        VideoMeta {
            session_id: c.session_id.clone(),
            fps: c.fps,
            width_px: (c.arena_w_m * c.px_per_m).ceil() as u32,
            height_px: (c.arena_h_m * c.px_per_m).ceil() as u32,
            start_time: c.start_time,
        }
    }

    /// Track in a fixed affine camera; positions are interpolated between steps.
    pub fn track(&self, i: usize) -> Track {
        let c = &self.config;
        let ind = &self.individuals[i];
        let fps = c.frames_per_step();
        let n_frames = c.n_steps() as u64 * fps;
        let (w, h) = (c.body_w_m * c.px_per_m, c.body_h_m * c.px_per_m);
        let boxes = (0..n_frames)
            .map(|f| {
                let k = (f / fps) as usize;
                let frac = (f % fps) as f64 / fps as f64;
                let (x0, y0) = ind.positions[k];
                let (x1, y1) = ind.positions[k + 1];
                let cx = (x0 + frac * (x1 - x0)) * c.px_per_m;
                let cy = (y0 + frac * (y1 - y0)) * c.px_per_m;
                BoundingBox { frame: f, x: cx - w / 2.0, y: cy - h / 2.0, w, h }
            })
            .collect();
        Track::new(ind.id.clone(), c.species.clone(), boxes)
    }

    pub fn tracks(&self) -> Vec<Track> {
        (0..self.individuals.len()).map(|i| self.track(i)).collect()
    }

    pub fn all_truth_labels(&self) -> Vec<LabelStream> {
        (0..self.individuals.len()).map(|i| self.truth_labels(i)).collect()
    }
}

/// Instantaneous scan of every individual at each multiple of `period_s`,
/// including t = 0 and, when it falls on a multiple, the final instant.
/// Individuals hidden from the ground observer at an instant are skipped.
pub fn observe_scan(world: &SimWorld, period_s: f64) -> Result<Vec<ObservationStream>> {
    if !(period_s.is_finite() && period_s > 0.0) {
        return Err(invalid("scan period must be positive"));
    }
    let c = &world.config;
    let n = c.n_steps();
    let mut instants = Vec::new();
    let mut m = 0u64;
    loop {
        let t = m as f64 * period_s;
        if t > c.duration_s + 1e-9 {
            break;
        }
        instants.push(t);
        m += 1;
    }
    Ok(world
        .individuals
        .iter()
        .map(|ind| {
            let intervals = instants
                .iter()
                .filter_map(|&t| {
                    let k = ((t / c.step_s + 1e-9).floor() as usize).min(n);
                    (!ind.ground_hidden[k]).then(|| Interval::new(t, t, world.code(ind.codes[k])))
                })
                .collect();
            ObservationStream::new(ind.id.clone(), Method::GroundScan, intervals)
        })
        .collect())
}

/// Continuous record of one subject; hidden steps become out-of-sight.
pub fn observe_focal(world: &SimWorld, subject: &str, method: Method) -> Result<ObservationStream> {
    if !matches!(method, Method::GroundFocal | Method::DroneFocal) {
        return Err(SimError::NotFocal(method));
    }
    let i = world.subject_index(subject)?;
    let ind = &world.individuals[i];
    let hidden = ind.hidden(method);
    let n = world.config.n_steps();
    let codes = (0..n).map(|k| if hidden[k] { OUT_OF_SIGHT.to_string() } else { world.code(ind.codes[k]).to_string() });
    Ok(ObservationStream::new(ind.id.clone(), method, step_intervals(world.config.step_s, codes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SimConfig {
        SimConfig { seed, n_individuals: 3, duration_s: 600.0, fps: 5.0, ..SimConfig::default() }
    }

    #[test]
    fn identity_chain_is_absorbing() {
        let cfg = SimConfig {
            q: (0..4).map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
            initial_code: Some("G".into()),
            ..small(1)
        };
        let w = simulate(&cfg).unwrap();
        for i in 0..3 {
            let s = w.truth_stream(i, Method::DroneFocal);
            assert_eq!(s.intervals.len(), 1);
            assert_eq!(s.intervals[0].code, "G");
            assert_eq!(s.intervals[0].end, 600.0);
        }
    }

    #[test]
    fn same_seed_same_world() {
        assert_eq!(simulate(&small(9)).unwrap(), simulate(&small(9)).unwrap());
        assert_ne!(simulate(&small(9)).unwrap(), simulate(&small(10)).unwrap());
    }

    #[test]
    fn bad_q_rejected() {
        let mut cfg = small(1);
        cfg.q[0][0] = 0.5;
        assert!(matches!(simulate(&cfg), Err(SimError::InvalidConfig(_))));
        let mut cfg = small(1);
        cfg.codes[0] = "OOS".into();
        assert!(simulate(&cfg).is_err());
    }

    #[test]
    fn scan_includes_both_ends() {
        let cfg = SimConfig { zones: vec![], ..small(2) };
        let w = simulate(&cfg).unwrap();
        let scans = observe_scan(&w, 120.0).unwrap();
        assert!(scans.iter().all(|s| s.intervals.len() == 6));
        assert!(scans.iter().all(|s| s.check(true).is_ok()));
    }

    #[test]
    fn no_zones_focal_equals_truth() {
        let w = simulate(&SimConfig { zones: vec![], ..small(3) }).unwrap();
        for (i, id) in w.subject_ids().iter().enumerate() {
            let f = observe_focal(&w, id, Method::GroundFocal).unwrap();
            assert_eq!(f.intervals, w.truth_stream(i, Method::GroundFocal).intervals);
        }
    }

    #[test]
    fn full_arena_zone_extremes() {
        let cfg = SimConfig {
            zones: vec![OcclusionZone { x0: 0.0, y0: 0.0, x1: 200.0, y1: 150.0, ground_loss: 1.0, drone_loss: 0.0 }],
            ..small(4)
        };
        let w = simulate(&cfg).unwrap();
        let g = observe_focal(&w, "sim-1", Method::GroundFocal).unwrap();
        assert_eq!(g.intervals.len(), 1);
        assert_eq!(g.intervals[0].code, OUT_OF_SIGHT);
        let d = observe_focal(&w, "sim-1", Method::DroneFocal).unwrap();
        assert_eq!(d.intervals, w.truth_stream(0, Method::DroneFocal).intervals);
        assert!(observe_scan(&w, 120.0).unwrap().iter().all(|s| s.intervals.is_empty()));
    }

    #[test]
    fn focal_errors() {
        let w = simulate(&small(5)).unwrap();
        assert_eq!(observe_focal(&w, "nobody", Method::GroundFocal), Err(SimError::UnknownSubject("nobody".into())));
        assert_eq!(observe_focal(&w, "sim-1", Method::GroundScan), Err(SimError::NotFocal(Method::GroundScan)));
    }

    #[test]
    fn tracks_stay_in_frame() {
        let w = simulate(&small(6)).unwrap();
        let meta = w.video_meta();
        for t in w.tracks() {
            assert_eq!(t.boxes.len(), 3000);
            for b in &t.boxes {
                let (cx, cy) = b.center();
                assert!(cx >= 0.0 && cx <= meta.width_px as f64 && cy >= 0.0 && cy <= meta.height_px as f64);
            }
        }
        let labels = w.truth_labels(0);
        assert_eq!(labels.len_frames(), 3000);
    }

    #[test]
    fn empirical_two_state_frequencies() {
        let cfg = SimConfig {
            n_individuals: 1,
            codes: vec!["G".into(), "W".into()],
            q: vec![vec![0.9, 0.1], vec![0.5, 0.5]],
            speeds: vec![0.5, 1.0],
            zones: vec![],
            duration_s: 1_000_000.0,
            ..SimConfig::default()
        };
        let w = simulate(&cfg).unwrap();
        let codes = &w.individuals[0].codes;
        let mut counts = [[0u64; 2]; 2];
        for pair in codes.windows(2) {
            counts[pair[0]][pair[1]] += 1;
        }
        for (i, row) in counts.iter().enumerate() {
            let total = (row[0] + row[1]) as f64;
            for j in 0..2 {
                assert!((row[j] as f64 / total - cfg.q[i][j]).abs() < 0.005);
            }
        }
    }
}
