//! Spatial-proximity interactions between tracked animals and their
//! normalization by the number of possible pairs.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::model::{AnalysisParams, BoundingBox, LabelStream, OverlapMetric, Species, Track};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SocialError {
    #[error("boxes are from different frames ({0} and {1})")]
    FrameMismatch(u64, u64),
    #[error("species `{0}` appears in interactions but not in the herd composition")]
    MissingSpecies(Species),
}

/// Overlap between two same-frame boxes under the chosen metric.
pub fn overlap_ratio(a: &BoundingBox, b: &BoundingBox, metric: OverlapMetric) -> Result<f64, SocialError> {
    if a.frame != b.frame {
        return Err(SocialError::FrameMismatch(a.frame, b.frame));
    }
    let inter = a.intersection_area(b);
    let denom = match metric {
        OverlapMetric::MinArea => a.area().min(b.area()),
        OverlapMetric::Iou => a.area() + b.area() - inter,
    };
    Ok((inter / denom).clamp(0.0, 1.0))
}

/// A run of consecutive frames in which two animals' boxes overlap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteractionEvent {
    /// Lexicographically smaller track id.
    pub track_a: String,
    pub track_b: String,
    pub species_a: Species,
    pub species_b: Species,
    pub start_frame: u64,
    pub end_frame: u64,
    pub frames: u64,
    pub mean_ratio: f64,
    /// Most frequent concurrent `code_a/code_b` pair during the run, when labels are supplied.
    pub tag: Option<String>,
}

fn tag_for(a: Option<&LabelStream>, b: Option<&LabelStream>, start: u64, end: u64) -> Option<String> {
    let (a, b) = (a?, b?);
    let mut tally: Vec<(String, u64)> = Vec::new();
    for f in start..=end {
        if let (Some(x), Some(y)) = (a.code_at(f), b.code_at(f)) {
            let key = format!("{x}/{y}");
            match tally.iter_mut().find(|(k, _)| *k == key) {
                Some(e) => e.1 += 1,
                None => tally.push((key, 1)),
            }
        }
    }
    let best = tally.iter().map(|(_, n)| *n).max()?;
    tally.into_iter().find(|(_, n)| *n == best).map(|(k, _)| k)
}

/// Finds every maximal run of consecutive shared frames whose overlap ratio
/// strictly exceeds the threshold and lasts at least `min_overlap_frames`.
/// Excluded tracks are ignored.
pub fn detect_interactions(tracks: &[Track], labels: &[LabelStream], params: &AnalysisParams) -> Vec<InteractionEvent> {
    let mut retained: Vec<&Track> = tracks.iter().filter(|t| !t.excluded).collect();
    retained.sort_by(|a, b| a.track_id.cmp(&b.track_id));
    let label_of = |id: &str| labels.iter().find(|l| l.track_id == id);

    let mut events = Vec::new();
    for (i, ta) in retained.iter().enumerate() {
        for tb in &retained[i + 1..] {
            let mut run: Vec<(u64, f64)> = Vec::new();
            let mut flush = |run: &mut Vec<(u64, f64)>| {
                if run.len() as u64 >= params.min_overlap_frames {
                    let (start, end) = (run[0].0, run[run.len() - 1].0);
                    events.push(InteractionEvent {
                        track_a: ta.track_id.clone(),
                        track_b: tb.track_id.clone(),
                        species_a: ta.species.clone(),
                        species_b: tb.species.clone(),
                        start_frame: start,
                        end_frame: end,
                        frames: run.len() as u64,
                        mean_ratio: run.iter().map(|(_, r)| r).sum::<f64>() / run.len() as f64,
                        tag: tag_for(label_of(&ta.track_id), label_of(&tb.track_id), start, end),
                    });
                }
                run.clear();
            };
            let (mut x, mut y) = (0, 0);
            while x < ta.boxes.len() && y < tb.boxes.len() {
                let (ba, bb) = (&ta.boxes[x], &tb.boxes[y]);
                if ba.frame < bb.frame {
                    x += 1;
                    continue;
                }
                if bb.frame < ba.frame {
                    y += 1;
                    continue;
                }
                let ratio = overlap_ratio(ba, bb, params.overlap_metric).expect("same frame");
                let consecutive = run.last().map(|(f, _)| *f + 1 == ba.frame).unwrap_or(true);
                if !consecutive {
                    flush(&mut run);
                }
                if ratio > params.overlap_ratio_threshold {
                    run.push((ba.frame, ratio));
                } else {
                    flush(&mut run);
                }
                x += 1;
                y += 1;
            }
            flush(&mut run);
        }
    }
    events
}

/// One species-pair row of the overlap summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapRow {
    pub species_a: Species,
    pub species_b: Species,
    /// Total qualifying frames summed over events.
    pub overlap_count: u64,
    pub events: u64,
    pub possible_pairs: u64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapMatrix {
    pub rows: Vec<OverlapRow>,
}

impl OverlapMatrix {
    pub fn get(&self, a: &Species, b: &Species) -> Option<&OverlapRow> {
        self.rows.iter().find(|r| (r.species_a == *a && r.species_b == *b) || (r.species_a == *b && r.species_b == *a))
    }

    /// Table with normalized values rounded to two decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("species_a,species_b,overlap_count,events,possible_pairs,normalized\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{:.2}\n",
                r.species_a, r.species_b, r.overlap_count, r.events, r.possible_pairs, r.normalized
            ));
        }
        out
    }
}

/// `n(n-1)/2` for a single species, `n1 * n2` across species.
pub fn possible_pairs(n_a: u64, n_b: u64, same_species: bool) -> u64 {
    if same_species {
        n_a * n_a.saturating_sub(1) / 2
    } else {
        n_a * n_b
    }
}

fn key(a: &Species, b: &Species) -> (Species, Species) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

/// Normalizes already-aggregated overlap counts per species pair. Pairs
/// missing from `counts` get zero. Same-species rows come first.
pub fn summarize_counts(
    counts: &BTreeMap<(Species, Species), (u64, u64)>,
    composition: &BTreeMap<Species, u32>,
) -> Result<OverlapMatrix, SocialError> {
    for (a, b) in counts.keys() {
        for s in [a, b] {
            if !composition.contains_key(s) {
                return Err(SocialError::MissingSpecies(s.clone()));
            }
        }
    }
    let species: Vec<&Species> = composition.keys().collect();
    let mut order: Vec<(&Species, &Species)> = species.iter().map(|s| (*s, *s)).collect();
    for (i, a) in species.iter().enumerate() {
        for b in &species[i + 1..] {
            order.push((a, b));
        }
    }
    let rows = order
        .into_iter()
        .map(|(a, b)| {
            let (count, events) = counts.get(&key(a, b)).copied().unwrap_or((0, 0));
            let pairs = possible_pairs(u64::from(composition[a]), u64::from(composition[b]), a == b);
            OverlapRow {
                species_a: a.clone(),
                species_b: b.clone(),
                overlap_count: count,
                events,
                possible_pairs: pairs,
                normalized: if pairs == 0 { 0.0 } else { count as f64 / pairs as f64 },
            }
        })
        .collect();
    Ok(OverlapMatrix { rows })
}

/// Sums event frame counts per species pair and normalizes by possible pairs.
pub fn overlap_summary(events: &[InteractionEvent], composition: &BTreeMap<Species, u32>) -> Result<OverlapMatrix, SocialError> {
    let mut counts: BTreeMap<(Species, Species), (u64, u64)> = BTreeMap::new();
    for e in events {
        let entry = counts.entry(key(&e.species_a, &e.species_b)).or_insert((0, 0));
        entry.0 += e.frames;
        entry.1 += 1;
    }
    summarize_counts(&counts, composition)
}

pub fn events_csv(events: &[InteractionEvent]) -> String {
    let mut out = String::from("a,b,start_frame,end_frame,frames,mean_ratio,tag\n");
    for e in events {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e.track_a,
            e.track_b,
            e.start_frame,
            e.end_frame,
            e.frames,
            e.mean_ratio,
            e.tag.as_deref().unwrap_or("")
        ));
    }
    out
}
