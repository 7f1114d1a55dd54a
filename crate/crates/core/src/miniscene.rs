//! Mini-scene geometry: fixed-size crop windows that follow one animal.

use serde::Serialize;
use thiserror::Error;

use crate::model::{AnalysisParams, BoundingBox, LabelStream, Track, VideoMeta};

/// Crop size used when none is configured.
pub const DEFAULT_CROP: (u32, u32) = (400, 300);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MiniSceneError {
    #[error("center out of bounds: ({cx}, {cy}) in {width}x{height} frame")]
    CenterOutOfBounds { cx: f64, cy: f64, width: u32, height: u32 },
    #[error("crop {out_w}x{out_h} larger than {width}x{height} frame")]
    CropTooLarge { out_w: u32, out_h: u32, width: u32, height: u32 },
    #[error("track {track_id}: no label coverage for frames {start_frame}..={end_frame}")]
    MissingLabels { track_id: String, start_frame: u64, end_frame: u64 },
}

/// Half-open pixel rectangle `[x0, x0 + w) x [y0, y0 + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CropWindow {
    pub frame: u64,
    pub x0: f64,
    pub y0: f64,
    pub w: u32,
    pub h: u32,
}

impl CropWindow {
    pub fn center(&self) -> (f64, f64) {
        (self.x0 + f64::from(self.w) / 2.0, self.y0 + f64::from(self.h) / 2.0)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x < self.x0 + f64::from(self.w) && y >= self.y0 && y < self.y0 + f64::from(self.h)
    }
}

/// A crop window of exactly `out_w x out_h` centered on the box, translated
/// (never shrunk) to stay within the frame.
pub fn crop_window(b: &BoundingBox, out_w: u32, out_h: u32, meta: &VideoMeta) -> Result<CropWindow, MiniSceneError> {
    if out_w > meta.width_px || out_h > meta.height_px {
        return Err(MiniSceneError::CropTooLarge { out_w, out_h, width: meta.width_px, height: meta.height_px });
    }
    let (cx, cy) = b.center();
    let (width, height) = (f64::from(meta.width_px), f64::from(meta.height_px));
    if !(0.0..=width).contains(&cx) || !(0.0..=height).contains(&cy) {
        return Err(MiniSceneError::CenterOutOfBounds { cx, cy, width: meta.width_px, height: meta.height_px });
    }
    let (w, h) = (f64::from(out_w), f64::from(out_h));
    Ok(CropWindow {
        frame: b.frame,
        x0: (cx - w / 2.0).clamp(0.0, width - w),
        y0: (cy - h / 2.0).clamp(0.0, height - h),
        w: out_w,
        h: out_h,
    })
}

/// Crop geometry and labels for one contiguous stretch of a track.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiniScene {
    pub track_id: String,
    pub start_frame: u64,
    pub end_frame: u64,
    /// One window per frame of `start_frame..=end_frame`.
    pub windows: Vec<CropWindow>,
    #[serde(skip)]
    pub labels: LabelStream,
}

impl MiniScene {
    pub fn len_frames(&self) -> u64 {
        self.end_frame - self.start_frame + 1
    }
}

/// Splits a track's boxes wherever more than `max_gap` frames are missing.
pub fn split_segments(boxes: &[BoundingBox], max_gap: u64) -> Vec<&[BoundingBox]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..boxes.len() {
        if boxes[i].frame.saturating_sub(boxes[i - 1].frame + 1) > max_gap {
            out.push(&boxes[start..i]);
            start = i;
        }
    }
    if !boxes.is_empty() {
        out.push(&boxes[start..]);
    }
    out
}

/// Boxes for every frame of the segment; frames missing inside a retained
/// gap are linearly interpolated between their neighbours.
fn fill_frames(segment: &[BoundingBox]) -> Vec<BoundingBox> {
    let mut out = Vec::new();
    for (i, b) in segment.iter().enumerate() {
        if let Some(next) = segment.get(i + 1) {
            out.push(*b);
            let span = (next.frame - b.frame) as f64;
            for f in b.frame + 1..next.frame {
                let a = (f - b.frame) as f64 / span;
                let lerp = |p: f64, q: f64| p + (q - p) * a;
                out.push(BoundingBox { frame: f, x: lerp(b.x, next.x), y: lerp(b.y, next.y), w: lerp(b.w, next.w), h: lerp(b.h, next.h) });
            }
        } else {
            out.push(*b);
        }
    }
    out
}

/// Extracts mini-scenes from every retained track.
///
/// Tracks are split at gaps longer than `max_track_gap_frames`; the minimum
/// duration filter is then applied per segment.
pub fn extract_miniscenes(
    tracks: &[Track],
    labels: &[LabelStream],
    params: &AnalysisParams,
    meta: &VideoMeta,
    crop: (u32, u32),
) -> Result<Vec<MiniScene>, MiniSceneError> {
    let mut scenes = Vec::new();
    for track in tracks.iter().filter(|t| !t.excluded) {
        let stream = labels.iter().find(|l| l.track_id == track.track_id);
        for segment in split_segments(&track.boxes, params.max_track_gap_frames) {
            let start_frame = segment[0].frame;
            let end_frame = segment[segment.len() - 1].frame;
            if end_frame - start_frame + 1 < params.min_miniscene_frames {
                continue;
            }
            let covered = stream.and_then(|s| s.frame_range()).map(|(a, b)| a <= start_frame && b >= end_frame).unwrap_or(false);
            if !covered {
                return Err(MiniSceneError::MissingLabels { track_id: track.track_id.clone(), start_frame, end_frame });
            }
            let windows = fill_frames(segment).iter().map(|b| crop_window(b, crop.0, crop.1, meta)).collect::<Result<Vec<_>, _>>()?;
            scenes.push(MiniScene {
                track_id: track.track_id.clone(),
                start_frame,
                end_frame,
                windows,
                labels: stream.and_then(|s| s.slice(start_frame, end_frame)).expect("coverage checked"),
            });
        }
    }
    Ok(scenes)
}

/// Manifest rows `track_id,start_frame,end_frame,cx,cy,out_w,out_h`, one per frame.
pub fn manifest_csv(scenes: &[MiniScene]) -> String {
    let mut out = String::from("track_id,start_frame,end_frame,cx,cy,out_w,out_h\n");
    for s in scenes {
        for w in &s.windows {
            let (cx, cy) = w.center();
            out.push_str(&format!("{},{},{},{},{},{},{}\n", s.track_id, s.start_frame, s.end_frame, cx, cy, w.w, w.h));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Species;
    use chrono::{DateTime, Utc};
    use proptest::prelude::*;

    fn meta() -> VideoMeta {
        VideoMeta::new("s", 30.0, 1920, 1080, DateTime::<Utc>::UNIX_EPOCH).unwrap()
    }

    fn centered(cx: f64, cy: f64) -> BoundingBox {
        BoundingBox::new(0, cx - 20.0, cy - 10.0, 40.0, 20.0).unwrap()
    }

    fn track(id: &str, frames: impl Iterator<Item = u64>) -> (Track, LabelStream) {
        let boxes: Vec<_> = frames.map(|f| BoundingBox::new(f, 900.0, 500.0, 60.0, 40.0).unwrap()).collect();
        let (a, b) = (boxes[0].frame, boxes.last().unwrap().frame);
        let codes = vec!["G"; (b - a + 1) as usize];
        (Track::new(id, Species::GrevysZebra, boxes), LabelStream::from_frames(id, a, &codes))
    }

    #[test]
    fn symmetric_center() {
        let w = crop_window(&centered(960.0, 540.0), 400, 300, &meta()).unwrap();
        assert_eq!((w.x0, w.y0), (760.0, 390.0));
        assert_eq!(w.center(), (960.0, 540.0));
    }

    #[test]
    fn clamped_at_origin() {
        let w = crop_window(&centered(10.0, 10.0), 400, 300, &meta()).unwrap();
        assert_eq!((w.x0, w.y0, w.w, w.h), (0.0, 0.0, 400, 300));
    }

    #[test]
    fn center_outside_is_error() {
        let b = BoundingBox::new(0, 2000.0, 10.0, 10.0, 10.0).unwrap();
        assert!(matches!(crop_window(&b, 400, 300, &meta()), Err(MiniSceneError::CenterOutOfBounds { .. })));
    }

    #[test]
    fn ninety_frame_boundary() {
        let p = AnalysisParams::default();
        let (t89, l89) = track("a", 0..89);
        assert!(extract_miniscenes(&[t89], &[l89], &p, &meta(), DEFAULT_CROP).unwrap().is_empty());
        let (t90, l90) = track("a", 0..90);
        let scenes = extract_miniscenes(&[t90], &[l90], &p, &meta(), DEFAULT_CROP).unwrap();
        assert_eq!(scenes.len(), 1);
        assert_eq!(scenes[0].len_frames(), 90);
        assert_eq!(scenes[0].windows.len(), 90);
    }

    #[test]
    fn gap_split_drops_short_segment() {
        // frames 0..100 then a 40-frame gap, then 140..200
        let (t, _) = track("a", (0..100).chain(140..200));
        let segs = split_segments(&t.boxes, 30);
        assert_eq!(segs.iter().map(|s| s.len()).collect::<Vec<_>>(), vec![100, 60]);
        let labels = LabelStream::from_frames("a", 0, &vec!["G"; 200]);
        let scenes = extract_miniscenes(&[t], &[labels], &AnalysisParams::default(), &meta(), DEFAULT_CROP).unwrap();
        assert_eq!(scenes.len(), 1);
        assert_eq!((scenes[0].start_frame, scenes[0].end_frame), (0, 99));
    }

    #[test]
    fn small_gaps_are_interpolated() {
        let boxes = vec![BoundingBox::new(0, 100.0, 100.0, 10.0, 10.0).unwrap(), BoundingBox::new(4, 140.0, 100.0, 10.0, 10.0).unwrap()];
        let filled = fill_frames(&boxes);
        assert_eq!(filled.len(), 5);
        assert_eq!(filled[2].x, 120.0);
    }

    #[test]
    fn missing_labels_is_error() {
        let (t, _) = track("a", 0..100);
        let short = LabelStream::from_frames("a", 0, &vec!["G"; 50]);
        let err = extract_miniscenes(&[t], &[short], &AnalysisParams::default(), &meta(), DEFAULT_CROP).unwrap_err();
        assert!(err.to_string().contains("0..=99"));
    }

    #[test]
    fn excluded_tracks_ignored() {
        let (mut t, l) = track("a", 0..100);
        t.excluded = true;
        assert!(extract_miniscenes(&[t], &[l], &AnalysisParams::default(), &meta(), DEFAULT_CROP).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn window_inside_frame_and_contains_center(
            cx in 0.0f64..1920.0, cy in 0.0f64..1080.0,
            bw in 1.0f64..300.0, bh in 1.0f64..300.0,
            ow in 1u32..=1920, oh in 1u32..=1080,
        ) {
            let b = BoundingBox::new(7, cx - bw / 2.0, cy - bh / 2.0, bw, bh).unwrap();
            let (bcx, bcy) = b.center();
            let w = crop_window(&b, ow, oh, &meta()).unwrap();
            prop_assert!(w.x0 >= 0.0 && w.y0 >= 0.0);
            prop_assert!(w.x0 + f64::from(ow) <= 1920.0 + 1e-9);
            prop_assert!(w.y0 + f64::from(oh) <= 1080.0 + 1e-9);
            // the center may sit on the far edge of the frame, which the
            // half-open window excludes
            let inside = (w.contains(bcx, bcy))
                || (bcx >= 1920.0 - 1e-9 || bcy >= 1080.0 - 1e-9);
            prop_assert!(inside);
            let fits_x = bcx - f64::from(ow) / 2.0 >= 0.0 && bcx + f64::from(ow) / 2.0 <= 1920.0;
            if fits_x {
                prop_assert!((w.center().0 - bcx).abs() < 1e-9);
            }
        }
    }
}
