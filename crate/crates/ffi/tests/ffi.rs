use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use ethokit_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ethokit_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn kappa_hand_matrices() {
    let mut k = f64::NAN;
    for (m, expected) in [([5u64, 0, 0, 5], 1.0), ([25, 25, 25, 25], 0.0), ([20, 5, 10, 15], 0.4)] {
        assert_eq!(unsafe { ethokit_cohens_kappa(m.as_ptr(), 2, &mut k) }, EthokitStatus::Ok);
        assert!((k - expected).abs() < 1e-12);
    }
    let degenerate = [4u64, 0, 0, 0];
    assert_eq!(unsafe { ethokit_cohens_kappa(degenerate.as_ptr(), 2, &mut k) }, EthokitStatus::Analysis);
    assert!(!last_error().is_empty());
}

#[test]
fn null_pointers_are_reported() {
    assert_eq!(unsafe { ethokit_cohens_kappa(ptr::null(), 2, ptr::null_mut()) }, EthokitStatus::NullPointer);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { ethokit_session_open(ptr::null(), ptr::null(), &mut out) }, EthokitStatus::NullPointer);
    let mut n = 0usize;
    assert_eq!(unsafe { ethokit_session_validate(ptr::null(), &mut n) }, EthokitStatus::NullPointer);
}

#[test]
fn scalar_helpers() {
    let mut v = 0.0;
    assert_eq!(unsafe { ethokit_annotation_cost(3, 600.0, 1.5, &mut v) }, EthokitStatus::Ok);
    assert_eq!(v, 2700.0);
    assert_eq!(unsafe { ethokit_annotation_cost(0, 600.0, 1.5, &mut v) }, EthokitStatus::InvalidArgument);
    assert_eq!(unsafe { ethokit_overlap_normalized(4836, 11, 11, true, &mut v) }, EthokitStatus::Ok);
    assert_eq!(format!("{v:.2}"), "87.93");
    assert_eq!(unsafe { ethokit_t_two_sided_p(4.73, 5.0, &mut v) }, EthokitStatus::Ok);
    assert!((v - 0.005).abs() < 0.001);
    assert_eq!(unsafe { ethokit_t_two_sided_p(1.0, -1.0, &mut v) }, EthokitStatus::InvalidArgument);
}

#[test]
fn simulate_export_and_reopen() {
    let cfg = CString::new("[simulator]\nn_individuals = 2\nduration_s = 240.0\nfps = 5.0\n").unwrap();
    let mut world = ptr::null_mut();
    assert_eq!(unsafe { ethokit_simulate(cfg.as_ptr(), 11, &mut world) }, EthokitStatus::Ok);
    let mut n = 0usize;
    assert_eq!(unsafe { ethokit_world_individuals(world, &mut n) }, EthokitStatus::Ok);
    assert_eq!(n, 2);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ethokit_world_export(world, path.as_ptr()) }, EthokitStatus::Ok);
    unsafe { ethokit_world_free(world) };

    let mut session = ptr::null_mut();
    assert_eq!(unsafe { ethokit_session_open(path.as_ptr(), ptr::null(), &mut session) }, EthokitStatus::Ok);
    let mut violations = usize::MAX;
    assert_eq!(unsafe { ethokit_session_validate(session, &mut violations) }, EthokitStatus::Ok);
    assert_eq!(violations, 0);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { ethokit_session_transitions_json(session, 10.0, &mut json) }, EthokitStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    unsafe { ethokit_string_free(json) };
    assert!(text.contains("\"probabilities\""));

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { ethokit_session_time_budgets_json(session, &mut json) }, EthokitStatus::Ok);
    let parsed: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(json) }.to_str().unwrap()).unwrap();
    unsafe { ethokit_string_free(json) };
    assert_eq!(parsed.as_array().unwrap().len(), 2);
    unsafe { ethokit_session_free(session) };
}

#[test]
fn missing_session_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("absent").to_str().unwrap()).unwrap();
    let mut session = ptr::null_mut();
    assert_eq!(unsafe { ethokit_session_open(path.as_ptr(), ptr::null(), &mut session) }, EthokitStatus::Io);
    assert!(session.is_null());
    assert!(last_error().contains("session.toml"));
}

#[test]
fn bad_simulator_config_is_rejected() {
    let cfg = CString::new("[simulator]\nq = [[0.5]]\ncodes = [\"G\"]\nspeeds = [1.0]\n").unwrap();
    let mut world = ptr::null_mut();
    assert_eq!(unsafe { ethokit_simulate(cfg.as_ptr(), 1, &mut world) }, EthokitStatus::InvalidArgument);
    assert!(world.is_null());
}

#[test]
fn header_declares_every_export_and_compiles_as_c() {
    let header_path = concat!(env!("CARGO_MANIFEST_DIR"), "/include/ethokit.h");
    let header = std::fs::read_to_string(header_path).unwrap();
    for name in [
        "ethokit_last_error",
        "ethokit_string_free",
        "ethokit_cohens_kappa",
        "ethokit_session_open",
        "ethokit_session_free",
        "ethokit_simulate",
        "ethokit_world_export",
        "ETHOKIT_STATUS_OK = 0",
        "typedef struct EthokitSession EthokitSession",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"ethokit.h\"\nint main(void) { double k; uint64_t m[4] = {5,0,0,5};\n\
         return ethokit_cohens_kappa(m, 2, &k) == ETHOKIT_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    match Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", include]).arg(&src).output() {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(_) => eprintln!("no C compiler found; skipping syntax check"),
    }
}
