#![allow(dead_code)]

use ethokit::model::{BoundingBox, Species, Track};
use ethokit::stats::DesignMatrix;
use rand::Rng;

/// Solves `XᵀX β = Xᵀy` by Gaussian elimination with partial pivoting.
pub fn normal_equations(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = rows[0].len();
    let mut a = vec![vec![0.0; p + 1]; p];
    for (row, yi) in rows.iter().zip(y) {
        for i in 0..p {
            for j in 0..p {
                a[i][j] += row[i] * row[j];
            }
            a[i][p] += row[i] * yi;
        }
    }
    for col in 0..p {
        let pivot = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        for r in col + 1..p {
            let f = a[r][col] / a[col][col];
            for c in col..=p {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| a[i][j] * beta[j]).sum();
        beta[i] = (a[i][p] - s) / a[i][i];
    }
    beta
}

/// Random well-conditioned design with an intercept: `p` total columns, `n` rows.
pub fn random_design(rng: &mut impl Rng, n: usize, p: usize) -> DesignMatrix {
    let mut d = DesignMatrix::intercept_only(n);
    for j in 1..p {
        let col: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        d.add_continuous(&format!("x{j}"), &col).unwrap();
    }
    d
}

fn t_log_norm(df: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln()
}

pub fn t_pdf(x: f64, df: f64) -> f64 {
    (t_log_norm(df) - (df + 1.0) / 2.0 * (x * x / df).ln_1p()).exp()
}

/// `P(T <= t)` by composite Simpson integration of the density from 0.
pub fn t_cdf_quadrature(t: f64, df: f64) -> f64 {
    let panels = 20_000;
    let h = t.abs() / panels as f64;
    let kernel = |x: f64| (-(df + 1.0) / 2.0 * (x * x / df).ln_1p()).exp();
    let mut s = kernel(0.0) + kernel(t.abs());
    for k in 1..panels {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * kernel(k as f64 * h);
    }
    let half = t_log_norm(df).exp() * s * h / 3.0;
    if t >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

/// Stationary distribution of a row-stochastic matrix by power iteration.
pub fn stationary(q: &[Vec<f64>]) -> Vec<f64> {
    let k = q.len();
    let mut pi = vec![1.0 / k as f64; k];
    for _ in 0..10_000 {
        let next: Vec<f64> = (0..k).map(|j| (0..k).map(|i| pi[i] * q[i][j]).sum()).collect();
        let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if delta < 1e-15 {
            break;
        }
    }
    pi
}

/// Two tracks over frames `0..n`; `b_offset(frame)` gives the x shift of
/// track b's box relative to track a's box (both `w x h` at the origin).
pub fn track_pair(n: u64, w: f64, h: f64, b_offset: impl Fn(u64) -> f64) -> Vec<Track> {
    let a = (0..n).map(|f| BoundingBox::new(f, 100.0, 100.0, w, h).unwrap()).collect();
    let b = (0..n).map(|f| BoundingBox::new(f, 100.0 + b_offset(f), 100.0, w, h).unwrap()).collect();
    vec![Track::new("a", Species::GrevysZebra, a), Track::new("b", Species::Giraffe, b)]
}

pub mod interactions {
    use ethokit::model::AnalysisParams;
    use ethokit::social::{detect_interactions, InteractionEvent};
    use proptest::prelude::*;
    use proptest::test_runner::TestCaseError;

    fn events(tracks: &[ethokit::model::Track], threshold: f64, min_frames: u64) -> Vec<InteractionEvent> {
        let params = AnalysisParams { overlap_ratio_threshold: threshold, min_overlap_frames: min_frames, ..AnalysisParams::default() };
        detect_interactions(tracks, &[], &params)
    }

    /// (even width, height, frames)
    pub fn threshold_case() -> impl Strategy<Value = (u32, u32, u64)> {
        (1u32..100, 1u32..200, 4u64..40).prop_map(|(half, h, n)| (2 * half, h, n))
    }

    /// A half-width shift gives a ratio of exactly 0.5: never an event. A
    /// slightly smaller shift gives one event covering every frame.
    pub fn strict_threshold((w, h, n): (u32, u32, u64)) -> Result<(), TestCaseError> {
        let (w, h) = (f64::from(w), f64::from(h));
        let at = super::track_pair(n, w, h, |_| w / 2.0);
        prop_assert!(events(&at, 0.5, 4).is_empty());
        let above = super::track_pair(n, w, h, |_| w / 2.0 - 0.25);
        let ev = events(&above, 0.5, 4);
        prop_assert_eq!(ev.len(), 1);
        prop_assert_eq!((ev[0].start_frame, ev[0].frames), (0, n));
        Ok(())
    }

    /// (width, height, run length in {3, 4}, frames before, frames after)
    pub fn run_case() -> impl Strategy<Value = (u32, u32, u64, u64, u64)> {
        (2u32..200, 1u32..200, 3u64..=4, 0u64..20, 0u64..20)
    }

    pub fn run_length_boundary((w, h, run, pre, post): (u32, u32, u64, u64, u64)) -> Result<(), TestCaseError> {
        let w = f64::from(w);
        let tracks = super::track_pair(pre + run + post, w, f64::from(h), |f| if f >= pre && f < pre + run { 0.0 } else { w + 5.0 });
        let ev = events(&tracks, 0.5, 4);
        prop_assert_eq!(ev.len(), usize::from(run >= 4));
        if let Some(e) = ev.first() {
            prop_assert_eq!((e.start_frame, e.end_frame), (pre, pre + run - 1));
        }
        Ok(())
    }

    /// (width, per-frame shift fractions, two thresholds, two run minimums)
    pub fn monotone_case() -> impl Strategy<Value = (u32, Vec<f64>, (f64, f64), (u64, u64))> {
        (4u32..100, prop::collection::vec(0.0f64..1.2, 5..80), (0.0f64..1.0, 0.0f64..1.0), (1u64..8, 1u64..8))
    }

    fn contained(inner: &[InteractionEvent], outer: &[InteractionEvent]) -> bool {
        inner.iter().all(|e| outer.iter().any(|o| o.start_frame <= e.start_frame && e.end_frame <= o.end_frame))
    }

    fn total(ev: &[InteractionEvent]) -> u64 {
        ev.iter().map(|e| e.frames).sum()
    }

    /// Tightening the threshold or the minimum run never adds overlap frames.
    pub fn monotone((w, shifts, (t1, t2), (m1, m2)): (u32, Vec<f64>, (f64, f64), (u64, u64))) -> Result<(), TestCaseError> {
        let w = f64::from(w);
        let tracks = super::track_pair(shifts.len() as u64, w, 10.0, |f| shifts[f as usize] * w);
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let (loose, tight) = (events(&tracks, lo, 4), events(&tracks, hi, 4));
        prop_assert!(total(&tight) <= total(&loose));
        prop_assert!(contained(&tight, &loose));
        let (short, long) = (m1.min(m2), m1.max(m2));
        let (many, few) = (events(&tracks, lo, short), events(&tracks, lo, long));
        prop_assert!(total(&few) <= total(&many));
        prop_assert!(contained(&few, &many));
        Ok(())
    }
}
