use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ethokit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ethokit")).args(args).env_remove("ETHOKIT_ETHOGRAM").output().unwrap()
}

fn simulate_into(dir: &Path, seed: &str) {
    let cfg = dir.with_extension("toml");
    fs::write(&cfg, "[simulator]\nn_individuals = 3\nduration_s = 600.0\nfps = 2.0\n").unwrap();
    let out = ethokit(&["simulate", "--seed", seed, "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn clean_session_validates() {
    let tmp = tempfile::tempdir().unwrap();
    let s = tmp.path().join("s");
    simulate_into(&s, "7");
    let out = ethokit(&["validate", s.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn violations_exit_one_and_corrupt_input_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let s = tmp.path().join("s");
    simulate_into(&s, "7");
    let labels = s.join("labels.csv");
    let mut text = fs::read_to_string(&labels).unwrap();
    text.push_str("sim,zz-ghost,0,9,G\n");
    fs::write(&labels, &text).unwrap();
    let out = ethokit(&["validate", s.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("zz-ghost"));

    fs::write(&labels, "session_id,track_id,start_frame\nsim,x,notanumber\n").unwrap();
    assert_eq!(ethokit(&["validate", s.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(ethokit(&["validate", tmp.path().join("missing").to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(ethokit(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn simulate_and_compare_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate_into(&a, "7");
    simulate_into(&b, "7");
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 6);
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n:?}");
    }
    for mode in ["scan-vs-focal", "ground-vs-drone"] {
        let r1 = ethokit(&["compare", a.to_str().unwrap(), "--mode", mode]);
        let r2 = ethokit(&["compare", b.to_str().unwrap(), "--mode", mode]);
        assert!(r1.status.success(), "{}", String::from_utf8_lossy(&r1.stderr));
        assert_eq!(r1.stdout, r2.stdout);
    }
}

#[test]
fn simulate_requires_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ethokit(&["simulate", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn overlap_table_from_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let comp = tmp.path().join("composition.csv");
    let counts = tmp.path().join("counts.csv");
    fs::write(&comp, "species,count\ngrevys_zebra,11\ngiraffe,3\nplains_zebra,2\n").unwrap();
    fs::write(
        &counts,
        "species_a,species_b,overlap_count,events\ngrevys_zebra,grevys_zebra,4836,\nplains_zebra,plains_zebra,93,\n\
         giraffe,giraffe,78,\ngrevys_zebra,plains_zebra,28,\ngiraffe,plains_zebra,0,\ngiraffe,grevys_zebra,0,\n",
    )
    .unwrap();
    let out = ethokit(&["interactions", "--composition", comp.to_str().unwrap(), "--counts", counts.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let rows = csv_rows(&stdout);
    assert_eq!(rows.len(), 6);
    let find = |a: &str, b: &str| {
        rows.iter()
            .find(|r| (r[0] == a && r[1] == b) || (r[0] == b && r[1] == a))
            .unwrap_or_else(|| panic!("{a}/{b} missing in {stdout}"))
            .clone()
    };
    assert!(find("grevys_zebra", "grevys_zebra").contains(&"87.93".to_string()));
    assert!(find("plains_zebra", "plains_zebra").contains(&"93.00".to_string()));
    assert!(find("giraffe", "giraffe").contains(&"26.00".to_string()));
    assert!(find("grevys_zebra", "plains_zebra").contains(&"1.27".to_string()));
}

#[test]
fn report_writes_consistent_files() {
    let tmp = tempfile::tempdir().unwrap();
    let s = tmp.path().join("s");
    simulate_into(&s, "3");
    let out_dir = tmp.path().join("report");
    let out = ethokit(&["report", s.to_str().unwrap(), "--source", "labels", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let probs = fs::read_to_string(out_dir.join("transitions.csv")).unwrap();
    for row in csv_rows(&probs) {
        let vals: Vec<f64> = row[1..].iter().filter(|v| !v.is_empty()).map(|v| v.parse().unwrap()).collect();
        if !vals.is_empty() {
            assert!((vals.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{row:?}");
        }
    }

    let segments = csv_rows(&fs::read_to_string(out_dir.join("gantt_segments.csv")).unwrap()).len();
    let svg = fs::read_to_string(out_dir.join("gantt.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let rects = doc.descendants().filter(|n| n.has_tag_name("rect") && n.attribute("class") == Some("segment")).count();
    assert_eq!(rects, segments);
    assert!(out_dir.join("transitions.svg").exists());
    assert!(out_dir.join("timebudget.csv").exists());
}

#[test]
fn json_output_parses() {
    let out = ethokit(&["cost", "--individuals", "3", "--duration", "600", "--format", "json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["total_s"], 2700.0);
    assert_eq!(ethokit(&["cost", "--individuals", "0", "--duration", "600"]).status.code(), Some(2));
}

#[test]
fn regression_table_from_cli() {
    let tmp = tempfile::tempdir().unwrap();
    let table = tmp.path().join("t.csv");
    let mut text = String::from("habitat,herd,vigilance\n");
    let vals = [0.12, 0.31, 0.18, 0.44, 0.09, 0.35, 0.2, 0.5, 0.15, 0.28, 0.22, 0.41];
    for (i, v) in vals.iter().enumerate() {
        let h = if i % 2 == 0 { "closed" } else { "open" };
        let s = if i % 4 < 2 { "small" } else { "large" };
        text.push_str(&format!("{h},{s},{v}\n"));
    }
    fs::write(&table, text).unwrap();
    let out_dir = tmp.path().join("out");
    let out = ethokit(&[
        "regress",
        table.to_str().unwrap(),
        "--factor",
        "habitat=closed",
        "--factor",
        "herd=small",
        "--response",
        "vigilance",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let coef = fs::read_to_string(out_dir.join("coefficients.csv")).unwrap();
    assert!(coef.contains("habitat[open]"));
    let bad = ethokit(&["regress", table.to_str().unwrap(), "--factor", "habitat=forest", "--response", "vigilance"]);
    assert_ne!(bad.status.code(), Some(0));
}
