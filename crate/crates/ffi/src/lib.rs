//! C ABI over ethokit.
//!
//! Every function returns an [`EthokitStatus`]; on failure a message is
//! available from [`ethokit_last_error`] on the same thread. Handles are
//! opaque and must be released with their `_free` function. Strings returned
//! through out-parameters are owned by the caller and released with
//! [`ethokit_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ethokit::ingest::parse_ethogram;
use ethokit::metrics::{annotation_cost, cohens_kappa, time_budget, transition_matrix, ConfusionMatrix};
use ethokit::model::{Ethogram, Method};
use ethokit::session::{simulated_session_files, write_atomic, Session};
use ethokit::simulator::{simulate, SimConfig, SimWorld};
use ethokit::social::possible_pairs;
use ethokit::stats::t_two_sided_p;
use ethokit::validate::validate_session;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EthokitStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Parse = 5,
    Analysis = 6,
    Panic = 7,
}

/// A loaded session directory.
pub struct EthokitSession {
    session: Session,
    ethogram: Ethogram,
}

/// A simulated world.
pub struct EthokitWorld {
    world: SimWorld,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(EthokitStatus, String);

fn fail(status: EthokitStatus, msg: impl ToString) -> Failure {
    Failure(status, msg.to_string())
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EthokitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            EthokitStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            EthokitStatus::Panic
        }
    }
}

unsafe fn out_ref<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| fail(EthokitStatus::NullPointer, "null output pointer"))
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(EthokitStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p).to_str().map_err(|e| fail(EthokitStatus::InvalidUtf8, e))
}

fn c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s).map(CString::into_raw).map_err(|e| fail(EthokitStatus::Analysis, e))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next ethokit call on the same thread.
#[no_mangle]
pub extern "C" fn ethokit_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must come from an ethokit function, or be null.
#[no_mangle]
pub unsafe extern "C" fn ethokit_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Cohen's kappa of a row-major `k x k` count matrix.
///
/// # Safety
/// `counts` must point to `k * k` values and `out_kappa` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ethokit_cohens_kappa(counts: *const u64, k: usize, out_kappa: *mut f64) -> EthokitStatus {
    guard(|| {
        let out = out_ref(out_kappa)?;
        if counts.is_null() {
            return Err(fail(EthokitStatus::NullPointer, "null counts"));
        }
        let flat = std::slice::from_raw_parts(counts, k * k);
        let rows = flat.chunks(k.max(1)).map(<[u64]>::to_vec).collect();
        let codes = (0..k).map(|i| i.to_string()).collect();
        let m = ConfusionMatrix::from_counts(codes, rows).map_err(|e| fail(EthokitStatus::InvalidArgument, e))?;
        *out = cohens_kappa(&m).map_err(|e| fail(EthokitStatus::Analysis, e))?.kappa;
        Ok(())
    })
}

/// Overlap count divided by the number of possible pairs.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ethokit_overlap_normalized(count: u64, n_a: u64, n_b: u64, same_species: bool, out: *mut f64) -> EthokitStatus {
    guard(|| {
        let out = out_ref(out)?;
        let pairs = possible_pairs(n_a, n_b, same_species);
        *out = if pairs == 0 { 0.0 } else { count as f64 / pairs as f64 };
        Ok(())
    })
}

/// Manual annotation seconds for `n` individuals over `t` seconds of video.
///
/// # Safety
/// `out_seconds` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ethokit_annotation_cost(n: u64, t: f64, rate: f64, out_seconds: *mut f64) -> EthokitStatus {
    guard(|| {
        let out = out_ref(out_seconds)?;
        *out = annotation_cost(n, t, rate).map_err(|e| fail(EthokitStatus::InvalidArgument, e))?.total_s;
        Ok(())
    })
}

/// Two-sided p-value of a t statistic.
///
/// # Safety
/// `out_p` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ethokit_t_two_sided_p(t: f64, df: f64, out_p: *mut f64) -> EthokitStatus {
    guard(|| {
        let out = out_ref(out_p)?;
        *out = t_two_sided_p(t, df).map_err(|e| fail(EthokitStatus::InvalidArgument, e))?;
        Ok(())
    })
}

/// Loads a session directory. `ethogram_csv` may be null for the built-in ethogram.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ethokit_session_open(
    dir: *const c_char,
    ethogram_csv: *const c_char,
    out: *mut *mut EthokitSession,
) -> EthokitStatus {
    guard(|| {
        let out = out_ref(out)?;
        *out = ptr::null_mut();
        let dir = str_arg(dir)?;
        let ethogram = if ethogram_csv.is_null() {
            Ethogram::kabr_default()
        } else {
            parse_ethogram(str_arg(ethogram_csv)?).map_err(|e| fail(EthokitStatus::Parse, e))?
        };
        let session = Session::load(Path::new(dir)).map_err(|e| match e {
            ethokit::session::SessionError::Io { .. } => fail(EthokitStatus::Io, e),
            ethokit::session::SessionError::Parse { .. } => fail(EthokitStatus::Parse, e),
        })?;
        *out = Box::into_raw(Box::new(EthokitSession { session, ethogram }));
        Ok(())
    })
}

/// # Safety
/// `handle` must come from [`ethokit_session_open`] (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ethokit_session_free(handle: *mut EthokitSession) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

unsafe fn session_ref<'a>(h: *const EthokitSession) -> Result<&'a EthokitSession, Failure> {
    h.as_ref().ok_or_else(|| fail(EthokitStatus::NullPointer, "null session handle"))
}

/// Number of validation violations in the session.
///
/// # Safety
/// `handle` must be a live session; `out_count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ethokit_session_validate(handle: *const EthokitSession, out_count: *mut usize) -> EthokitStatus {
    guard(|| {
        let h = session_ref(handle)?;
        let out = out_ref(out_count)?;
        let s = &h.session;
        *out = validate_session(&s.tracks, &s.labels, &s.observations, &s.meta, &h.ethogram).len();
        Ok(())
    })
}

/// Time budgets of the session's frame labels as a JSON array.
///
/// # Safety
/// `handle` must be a live session; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ethokit_session_time_budgets_json(handle: *const EthokitSession, out_json: *mut *mut c_char) -> EthokitStatus {
    guard(|| {
        let h = session_ref(handle)?;
        let out = out_ref(out_json)?;
        let streams = h.session.label_observations(&h.session.labels, Method::DroneFocal);
        let mut items = Vec::new();
        for s in &streams {
            let b = time_budget(s, &h.ethogram).ok();
            items.push(serde_json::json!({"subject_id": s.subject_id, "budget": b}));
        }
        *out = c_string(serde_json::Value::Array(items).to_string())?;
        Ok(())
    })
}

/// Pooled transition matrix of the session's frame labels as JSON.
///
/// # Safety
/// `handle` must be a live session; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ethokit_session_transitions_json(
    handle: *const EthokitSession,
    interval_s: f64,
    out_json: *mut *mut c_char,
) -> EthokitStatus {
    guard(|| {
        let h = session_ref(handle)?;
        let out = out_ref(out_json)?;
        let streams = h.session.label_observations(&h.session.labels, Method::DroneFocal);
        let codes: Vec<String> = h
            .ethogram
            .behavioral_codes()
            .filter(|c| streams.iter().any(|s| s.intervals.iter().any(|iv| iv.code == *c)))
            .map(String::from)
            .collect();
        let tm = transition_matrix(&streams, interval_s, &codes).map_err(|e| fail(EthokitStatus::Analysis, e))?;
        let json = serde_json::json!({"codes": tm.codes, "counts": tm.counts, "probabilities": tm.probabilities()});
        *out = c_string(json.to_string())?;
        Ok(())
    })
}

/// Runs the simulator. `config_toml` may be null for defaults; `seed` always applies.
///
/// # Safety
/// `config_toml` must be NUL-terminated or null; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ethokit_simulate(config_toml: *const c_char, seed: u64, out: *mut *mut EthokitWorld) -> EthokitStatus {
    guard(|| {
        let out = out_ref(out)?;
        *out = ptr::null_mut();
        let mut cfg: SimConfig = if config_toml.is_null() {
            SimConfig::default()
        } else {
            ethokit::config::RunConfig::from_toml(str_arg(config_toml)?).map_err(|e| fail(EthokitStatus::Parse, e))?.simulator
        };
        cfg.seed = seed;
        let world = simulate(&cfg).map_err(|e| fail(EthokitStatus::InvalidArgument, e))?;
        *out = Box::into_raw(Box::new(EthokitWorld { world }));
        Ok(())
    })
}

/// # Safety
/// `world` must come from [`ethokit_simulate`] (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ethokit_world_free(world: *mut EthokitWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// # Safety
/// `world` must be live; `out_count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ethokit_world_individuals(world: *const EthokitWorld, out_count: *mut usize) -> EthokitStatus {
    guard(|| {
        let w = world.as_ref().ok_or_else(|| fail(EthokitStatus::NullPointer, "null world handle"))?;
        *out_ref(out_count)? = w.world.individuals.len();
        Ok(())
    })
}

/// Writes the world as a session directory readable by [`ethokit_session_open`].
///
/// # Safety
/// `world` must be live; `dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ethokit_world_export(world: *const EthokitWorld, dir: *const c_char) -> EthokitStatus {
    guard(|| {
        let w = world.as_ref().ok_or_else(|| fail(EthokitStatus::NullPointer, "null world handle"))?;
        let dir = Path::new(str_arg(dir)?);
        for (name, text) in simulated_session_files(&w.world) {
            write_atomic(&dir.join(name), &text).map_err(|e| fail(EthokitStatus::Io, e))?;
        }
        Ok(())
    })
}
