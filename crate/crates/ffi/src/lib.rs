//! C interface to the assembly simulator, decision parser and trial harness.
//!
//! Every function returns a [`VlmaStatus`]. On failure, a description is kept
//! per thread and can be read with [`vlma_last_error_message`]. Handles are
//! opaque and must be released with their `_free` function; strings handed
//! out by this library must be released with [`vlma_string_free`].

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use vlm_assembly::harness::{self, EvalReport, HarnessError, RunConfig};
use vlm_assembly::marking::MarkerId;
use vlm_assembly::parser::{self, Skill};
use vlm_assembly::world::{builtin_scenario, spawn_world, WorldState};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VlmaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    Backend = 4,
    Io = 5,
    Parse = 6,
    Scenario = 7,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VlmaSkillKind {
    Pick = 0,
    Place = 1,
    Insert = 2,
    Done = 3,
    Init = 4,
}

/// A parsed decision. `marker` is 0 for skills without an argument.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VlmaDecision {
    pub kind: VlmaSkillKind,
    pub marker: u32,
}

/// Result of a batch of trials.
pub struct VlmaReport {
    report: EvalReport,
    fatal_backend: bool,
}

/// A spawned scene.
pub struct VlmaWorld {
    world: WorldState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(VlmaStatus, String);

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let status = match &e {
            HarnessError::Config(_) | HarnessError::Template(_) => VlmaStatus::InvalidConfig,
            HarnessError::Scenario(_) => VlmaStatus::Scenario,
            HarnessError::Backend(_) => VlmaStatus::Backend,
            HarnessError::Io(_) => VlmaStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VlmaStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VlmaStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            VlmaStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(VlmaStatus::NullArgument, format!("{name} is null"))
}

unsafe fn read_str<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(ptr).to_str().map_err(|e| Failure(VlmaStatus::InvalidUtf8, format!("{name}: {e}")))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|e| Failure(VlmaStatus::InvalidUtf8, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn vlma_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn vlma_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a model reply. `known_markers` may be null when `n_known` is 0.
///
/// # Safety
/// `text` must be a NUL-terminated string, `known_markers` must point to
/// `n_known` values, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vlma_parse_decision(
    text: *const c_char,
    known_markers: *const u32,
    n_known: usize,
    out: *mut VlmaDecision,
) -> VlmaStatus {
    guard(|| {
        if text.is_null() {
            return Err(null("text"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        if known_markers.is_null() && n_known > 0 {
            return Err(null("known_markers"));
        }
        let raw = CStr::from_ptr(text).to_bytes();
        let known: BTreeSet<MarkerId> = if n_known == 0 {
            BTreeSet::new()
        } else {
            std::slice::from_raw_parts(known_markers, n_known).iter().map(|&m| MarkerId(m)).collect()
        };
        let decision = parser::parse_decision_bytes(raw, &known).map_err(|e| Failure(VlmaStatus::Parse, e.to_string()))?;
        let marker = decision.skill.marker().map_or(0, |m| m.0);
        let kind = match decision.skill {
            Skill::Pick { .. } => VlmaSkillKind::Pick,
            Skill::Place { .. } => VlmaSkillKind::Place,
            Skill::Insert { .. } => VlmaSkillKind::Insert,
            Skill::Done => VlmaSkillKind::Done,
            Skill::Init => VlmaSkillKind::Init,
        };
        *out = VlmaDecision { kind, marker };
        Ok(())
    })
}

/// Formats a success-rate cell such as `3/10 (30%)`.
///
/// # Safety
/// `out` must be writable; free the result with [`vlma_string_free`].
#[no_mangle]
pub unsafe extern "C" fn vlma_format_cell(successes: usize, trials: usize, out: *mut *mut c_char) -> VlmaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        write_string(out, harness::format_cell(successes, trials))
    })
}

/// Runs the trials described by a JSON run configuration, the same format
/// the command line accepts with `--config`.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vlma_run_trials(config_json: *const c_char, out: *mut *mut VlmaReport) -> VlmaStatus {
    guard(|| {
        let json = read_str(config_json, "config_json")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let config: RunConfig = serde_json::from_str(json).map_err(|e| Failure(VlmaStatus::InvalidConfig, e.to_string()))?;
        let run = config.resolve()?;
        let output = harness::run_trials_with(&run.spec)?;
        if let Some(dir) = &run.out {
            harness::write_outputs(dir, &output)?;
        }
        let fatal_backend = output.has_fatal_backend_error();
        *out = Box::into_raw(Box::new(VlmaReport { report: output.report, fatal_backend }));
        Ok(())
    })
}

/// Success counts of a report. Any output pointer may be null.
///
/// # Safety
/// `report` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn vlma_report_counts(
    report: *const VlmaReport,
    trials: *mut usize,
    pick_successes: *mut usize,
    insert_successes: *mut usize,
    assembled: *mut usize,
) -> VlmaStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(|| null("report"))?.report;
        for (ptr, v) in [
            (trials, r.trials),
            (pick_successes, r.pick_successes),
            (insert_successes, r.insert_successes),
            (assembled, r.assembled),
        ] {
            if !ptr.is_null() {
                *ptr = v;
            }
        }
        Ok(())
    })
}

/// Whether any episode of the run ended on a backend failure.
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vlma_report_had_backend_failure(report: *const VlmaReport, out: *mut bool) -> VlmaStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = r.fatal_backend;
        Ok(())
    })
}

/// The report rendered as a markdown table.
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vlma_report_markdown(report: *const VlmaReport, out: *mut *mut c_char) -> VlmaStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        write_string(out, harness::format_report(std::slice::from_ref(&r.report)))
    })
}

/// # Safety
/// `report` must be null or a handle from [`vlma_run_trials`], freed once.
#[no_mangle]
pub unsafe extern "C" fn vlma_report_free(report: *mut VlmaReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Spawns a built-in scenario (`sim`, `real1` or `real2`) with a seed.
///
/// # Safety
/// `scenario` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vlma_world_spawn(scenario: *const c_char, seed: u64, out: *mut *mut VlmaWorld) -> VlmaStatus {
    guard(|| {
        let name = read_str(scenario, "scenario")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = builtin_scenario(name)
            .ok_or_else(|| Failure(VlmaStatus::InvalidConfig, format!("unknown scenario {name:?}")))?;
        let world = spawn_world(&cfg, seed).map_err(|e| Failure(VlmaStatus::Scenario, e.to_string()))?;
        *out = Box::into_raw(Box::new(VlmaWorld { world }));
        Ok(())
    })
}

/// Hex digest of the world's canonical serialization.
///
/// # Safety
/// `world` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vlma_world_snapshot_hash(world: *const VlmaWorld, out: *mut *mut c_char) -> VlmaStatus {
    guard(|| {
        let w = world.as_ref().ok_or_else(|| null("world"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        write_string(out, w.world.snapshot_hash())
    })
}

/// Number of gear/shaft pairs that can be assembled next.
///
/// # Safety
/// `world` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vlma_world_eligible_pairs(world: *const VlmaWorld, out: *mut usize) -> VlmaStatus {
    guard(|| {
        let w = world.as_ref().ok_or_else(|| null("world"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = w.world.eligible_pairs().len();
        Ok(())
    })
}

/// # Safety
/// `world` must be null or a handle from [`vlma_world_spawn`], freed once.
#[no_mangle]
pub unsafe extern "C" fn vlma_world_free(world: *mut VlmaWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}
