//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Dataset-gated checks read `ETHOKIT_DATA_DIR`, a session directory holding
//! `session.toml`, `observations.csv` and a CVAT `annotations.xml`.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use ethokit::metrics::{annotation_cost, cohens_kappa, out_of_sight_fraction, time_budget, transition_matrix, ConfusionMatrix};
use ethokit::miniscene::extract_miniscenes;
use ethokit::model::{AnalysisParams, BoundingBox, Ethogram, LabelStream, Method, Species, Track, VideoMeta};
use ethokit::session::Session;
use ethokit::simulator::{simulate, SimConfig};
use ethokit::social::summarize_counts;
use ethokit::stats::{ols_fit, t_two_sided_p};
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Verdict;

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn overlap_table() -> Verdict {
    let t0 = Instant::now();
    let composition = BTreeMap::from([(Species::GrevysZebra, 11), (Species::Giraffe, 3), (Species::PlainsZebra, 2)]);
    let (g, p, r) = (Species::GrevysZebra, Species::PlainsZebra, Species::Giraffe);
    let published = [
        ((g.clone(), g.clone()), 4836, 55, "87.93"),
        ((p.clone(), p.clone()), 93, 1, "93.00"),
        ((r.clone(), r.clone()), 78, 3, "26.00"),
        ((g.clone(), p.clone()), 28, 22, "1.27"),
        ((r.clone(), p.clone()), 0, 6, "0.00"),
        ((r.clone(), g.clone()), 0, 33, "0.00"),
    ];
    let counts =
        published.iter().map(|((a, b), n, _, _)| (if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) }, (*n, 0))).collect();
    let m = match summarize_counts(&counts, &composition) {
        Ok(m) => m,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let mut got = Vec::new();
    let mut ok = true;
    for ((a, b), _, pairs, norm) in &published {
        let row = m.get(a, b);
        let (gp, gn) = row.map(|r| (r.possible_pairs, format!("{:.2}", r.normalized))).unwrap_or((0, "-".into()));
        ok &= gp == *pairs && gn == *norm;
        got.push(format!("{gp}:{gn}"));
    }
    let elapsed = t0.elapsed();
    verdict(ok && within(elapsed, 1.0), format!("{} in {elapsed:.2?}", got.join(" ")))
}

fn annotation_cost_case() -> Verdict {
    match annotation_cost(3, 600.0, ethokit::metrics::DEFAULT_ANNOTATION_RATE) {
        Ok(c) => verdict(c.total_s == 2700.0, format!("{} s", c.total_s)),
        Err(e) => Verdict::Fail(e.to_string()),
    }
}

fn t_distribution() -> Verdict {
    match t_two_sided_p(4.73, 5.0) {
        Ok(p) => verdict((p - 0.005).abs() <= 0.001, format!("p = {p:.5}")),
        Err(e) => Verdict::Fail(e.to_string()),
    }
}

fn miniscene_boundary() -> Verdict {
    let meta = VideoMeta::new("s", 30.0, 3840, 2160, Utc.with_ymd_and_hms(2023, 1, 18, 10, 0, 0).unwrap()).unwrap();
    let track = |id: &str, n: u64| {
        Track::new(id, Species::GrevysZebra, (0..n).map(|f| BoundingBox::new(f, 900.0, 600.0, 50.0, 30.0).unwrap()).collect())
    };
    let labels = |id: &str, n: u64| LabelStream::from_frames(id, 0, &vec!["G"; n as usize]);
    let tracks = [track("a89", 89), track("b90", 90)];
    let streams = [labels("a89", 89), labels("b90", 90)];
    match extract_miniscenes(&tracks, &streams, &AnalysisParams::default(), &meta, (400, 300)) {
        Ok(s) => {
            let kept: Vec<&str> = s.iter().map(|m| m.track_id.as_str()).collect();
            verdict(kept == ["b90"], format!("retained {kept:?}"))
        }
        Err(e) => Verdict::Fail(e.to_string()),
    }
}

fn estimator_soundness() -> Verdict {
    let t0 = Instant::now();
    let cfg = SimConfig { seed: 2024, n_individuals: 50, duration_s: 20_000.0, fps: 1.0, zones: Vec::new(), ..SimConfig::default() };
    let world = match simulate(&cfg) {
        Ok(w) => w,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let streams: Vec<_> = (0..cfg.n_individuals).map(|i| world.truth_stream(i, Method::DroneFocal)).collect();
    let tm = match transition_matrix(&streams, 1.0, &cfg.codes) {
        Ok(m) => m,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let probs = tm.probabilities();
    let mut max_err: f64 = 0.0;
    for (i, row) in probs.iter().enumerate() {
        match row {
            Some(row) => (0..cfg.codes.len()).for_each(|j| max_err = max_err.max((row[j] - cfg.q[i][j]).abs())),
            None => max_err = f64::INFINITY,
        }
    }

    let eth = Ethogram::kabr_default();
    let mut secs = vec![0.0; cfg.codes.len()];
    for s in &streams {
        let b = time_budget(s, &eth).expect("visible stream");
        for (k, c) in cfg.codes.iter().enumerate() {
            secs[k] += b.seconds.get(c).copied().unwrap_or(0.0);
        }
    }
    let total: f64 = secs.iter().sum();
    let pi = common::stationary(&cfg.q);
    let tv = secs.iter().zip(&pi).map(|(s, p)| (s / total - p).abs()).sum::<f64>() / 2.0;
    let elapsed = t0.elapsed();
    verdict(
        tm.total() >= 100_000 && max_err <= 0.02 && tv < 0.02 && within(elapsed, 30.0),
        format!("{} samples, max |P-Q| = {max_err:.4}, TV = {tv:.4}, {elapsed:.2?}", tm.total()),
    )
}

fn ols_oracle() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut max_beta, mut max_orth) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let p = rng.gen_range(1..=6);
        let n = rng.gen_range(p + 2..=50);
        let x = common::random_design(&mut rng, n, p);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let fit = match ols_fit(&x, &y) {
            Ok(f) => f,
            Err(e) => return Verdict::Fail(e.to_string()),
        };
        let oracle = common::normal_equations(&x.rows, &y);
        for (b, o) in fit.beta().iter().zip(&oracle) {
            max_beta = max_beta.max((b - o).abs() / o.abs().max(1.0));
        }
        let scale = y.iter().map(|v| v.abs()).sum::<f64>().max(1.0) * 3.0;
        for j in 0..p {
            let dot: f64 = x.rows.iter().zip(&fit.residuals).map(|(r, e)| r[j] * e).sum();
            max_orth = max_orth.max(dot.abs() / scale);
        }
    }

    let x = common::random_design(&mut rng, 30, 3);
    let beta = [1.0, -0.5, 2.0];
    let noise = Normal::new(0.0, 1.5).unwrap();
    let (mut covered, mut total) = (0u32, 0u32);
    for _ in 0..10_000 {
        let y: Vec<f64> = x.rows.iter().map(|r| r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + noise.sample(&mut rng)).collect();
        let fit = ols_fit(&x, &y).expect("full rank");
        for (c, b) in fit.coefficients.iter().zip(&beta) {
            covered += u32::from(c.ci_low <= *b && *b <= c.ci_high);
            total += 1;
        }
    }
    let coverage = f64::from(covered) / f64::from(total);
    let elapsed = t0.elapsed();
    verdict(
        max_beta < 1e-8 && max_orth < 1e-8 && (coverage - 0.95).abs() <= 0.02 && within(elapsed, 60.0),
        format!("max rel |dβ| = {max_beta:.1e}, max |Xᵀr| = {max_orth:.1e}, coverage = {:.2}%, {elapsed:.2?}", coverage * 100.0),
    )
}

fn kappa_hand_matrices() -> Verdict {
    let codes = vec!["a".to_string(), "b".to_string()];
    let mut got = Vec::new();
    let mut ok = true;
    for (m, want) in [([[5, 0], [0, 5]], 1.0), ([[25, 25], [25, 25]], 0.0), ([[20, 5], [10, 15]], 0.4)] {
        let cm = ConfusionMatrix::from_counts(codes.clone(), m.iter().map(|r| r.to_vec()).collect()).unwrap();
        match cohens_kappa(&cm) {
            Ok(k) => {
                ok &= (k.kappa - want).abs() < 1e-12;
                got.push(format!("{:.4}", k.kappa));
            }
            Err(e) => return Verdict::Fail(e.to_string()),
        }
    }
    verdict(ok, got.join(", "))
}

fn interaction_properties() -> Verdict {
    use common::interactions::*;
    let cases = 1000;
    let run = |name: &str, result: Result<(), String>| result.map_err(|e| format!("{name}: {e}"));
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    let outcome = run("strict threshold", runner.run(&threshold_case(), strict_threshold).map_err(|e| e.to_string()))
        .and_then(|_| run("run length", runner.run(&run_case(), run_length_boundary).map_err(|e| e.to_string())))
        .and_then(|_| run("monotonicity", runner.run(&monotone_case(), monotone).map_err(|e| e.to_string())));
    match outcome {
        Ok(()) => Verdict::Pass(format!("3 properties x {cases} generated pairs")),
        Err(e) => Verdict::Fail(e),
    }
}

fn pipeline_determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_ethokit");
    let cfg = tmp.path().join("sim.toml");
    fs::write(&cfg, "[simulator]\nn_individuals = 4\nduration_s = 900.0\nfps = 2.0\n").unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let dir = tmp.path().join(run);
        let sim = Command::new(bin).args(["simulate", "--seed", "7", "--config"]).arg(&cfg).arg("--out").arg(&dir).output().unwrap();
        if !sim.status.success() {
            return Verdict::Fail(String::from_utf8_lossy(&sim.stderr).into_owned());
        }
        let cmp_dir = tmp.path().join(format!("{run}-compare"));
        let cmp = Command::new(bin).arg("compare").arg(&dir).args(["--mode", "scan-vs-focal", "--out"]).arg(&cmp_dir).output().unwrap();
        if !cmp.status.success() {
            return Verdict::Fail(String::from_utf8_lossy(&cmp.stderr).into_owned());
        }
        outputs.push((read_dir_bytes(&dir), read_dir_bytes(&cmp_dir)));
    }
    let files = outputs[0].0.len() + outputs[0].1.len();
    verdict(outputs[0] == outputs[1] && files > 0, format!("{files} files compared"))
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect()
}

fn published_worked_example() -> Verdict {
    let Some(dir) = std::env::var_os("ETHOKIT_DATA_DIR") else {
        return Verdict::Skip("ETHOKIT_DATA_DIR not set".into());
    };
    let dir = Path::new(&dir);
    let xml = dir.join("annotations.xml");
    if !xml.exists() || !dir.join("session.toml").exists() {
        return Verdict::Skip(format!("worked-example files not found in {}", dir.display()));
    }
    let session = match Session::load(dir) {
        Ok(s) => s,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let eth = Ethogram::kabr_default();
    let import = match fs::read_to_string(&xml)
        .map_err(|e| e.to_string())
        .and_then(|t| ethokit::ingest::import_cvat_video_xml(&t, &session.meta, &eth).map_err(|e| e.to_string()))
    {
        Ok(i) => i,
        Err(e) => return Verdict::Fail(format!("CVAT import: {e}")),
    };
    let mean_oos = |streams: &[ethokit::model::ObservationStream]| -> Option<f64> {
        let v: Vec<f64> = streams.iter().filter_map(|s| out_of_sight_fraction(s, &eth).ok()).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let ground = session.observations_by(Method::GroundFocal);
    let mut drone = session.label_observations(&import.labels, Method::DroneFocal);
    drone.extend(session.observations_by(Method::DroneFocal));
    let (Some(g), Some(d)) = (mean_oos(&ground), mean_oos(&drone)) else {
        return Verdict::Fail("no ground or drone focal streams".into());
    };
    let codes: Vec<String> = eth.behavioral_codes().map(String::from).collect();
    let mut all = ground.clone();
    all.extend(drone);
    let graze = transition_matrix(&all, AnalysisParams::default().downsample_interval_s, &codes).ok().and_then(|m| m.p("G", "G"));
    let graze_ok = graze.map(|p| (p - 0.911).abs() <= 0.05).unwrap_or(false);
    verdict(
        (g - 0.234).abs() <= 0.03 && (d - 0.087).abs() <= 0.03 && graze_ok,
        format!("{} tracks; out of sight ground {:.1}%, drone {:.1}%; P(G|G) = {graze:?}", import.tracks.len(), g * 100.0, d * 100.0),
    )
}

fn main() {
    let checks: [(&str, Check); 10] = [
        ("overlap table reproduction", overlap_table),
        ("annotation cost model", annotation_cost_case),
        ("t-distribution two-sided p", t_distribution),
        ("mini-scene 89/90 frame boundary", miniscene_boundary),
        ("estimator soundness on simulated herd", estimator_soundness),
        ("OLS oracle equivalence and CI coverage", ols_oracle),
        ("Cohen's kappa hand matrices", kappa_hand_matrices),
        ("interaction detection properties", interaction_properties),
        ("pipeline determinism", pipeline_determinism),
        ("worked-example dataset (gated)", published_worked_example),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let line = match check() {
            Verdict::Pass(d) => format!("PASS  {name}: {d}"),
            Verdict::Fail(d) => {
                failed += 1;
                format!("FAIL  {name}: {d}")
            }
            Verdict::Skip(d) => format!("SKIP  {name}: {d}"),
        };
        println!("{line}");
    }
    println!("acceptance: {} checks, {failed} failed", checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
