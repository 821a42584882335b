//! C ABI over the exercise language, the test harness and content packs.
//!
//! Every function returns a [`ShipStatus`]; on anything but `SHIP_OK` the
//! message is available from [`ship_last_error`] on the same thread.
//! Structured results come back as JSON strings that the caller releases
//! with [`ship_string_free`]. Handles are released with their `_free`
//! function; passing null to any `_free` is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use shipcheck::content::{default_pack, ContentPack};
use shipcheck::harness::{compile_pair, run_suite};
use shipcheck::lang::{self, ExecLimits, Program, SourceUnit, UnitKind};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShipStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    CompileError = 3,
    UnknownEntry = 4,
    InvalidPack = 5,
    Internal = 6,
}

/// A parsed and checked source unit.
pub struct ShipProgram(Program);

/// A validated content pack.
pub struct ShipPack(ContentPack);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("NUL bytes were replaced"));
}

struct Failure(ShipStatus, String);

impl Failure {
    fn new(status: ShipStatus, message: impl ToString) -> Self {
        Self(status, message.to_string())
    }
}

/// Runs `f`, recording its error or panic message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ShipStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            ShipStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(format!("internal error: {message}"));
            ShipStatus::Internal
        }
    }
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(ShipStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(ShipStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn out_ptr<T>(out: *mut T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(ShipStatus::NullArgument, "output pointer is null"));
    }
    Ok(())
}

/// # Safety
/// `out` must be valid for writes.
unsafe fn write_json(out: *mut *mut c_char, value: &impl serde::Serialize) -> Result<(), Failure> {
    let json = serde_json::to_string(value).map_err(|e| Failure::new(ShipStatus::Internal, e))?;
    let c = CString::new(json).map_err(|e| Failure::new(ShipStatus::Internal, e))?;
    *out = c.into_raw();
    Ok(())
}

fn limits(wall_timeout_ms: u64, max_steps: u64) -> ExecLimits {
    let d = ExecLimits::default();
    ExecLimits {
        wall_timeout_ms: if wall_timeout_ms == 0 { d.wall_timeout_ms } else { wall_timeout_ms },
        max_steps: if max_steps == 0 { d.max_steps } else { max_steps },
        ..d
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn ship_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ship_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and checks a unit. `is_tests` selects a test file over a
/// component.
///
/// # Safety
/// `name` and `source` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ship_parse(
    name: *const c_char,
    source: *const c_char,
    is_tests: bool,
    out: *mut *mut ShipProgram,
) -> ShipStatus {
    guard(|| {
        out_ptr(out)?;
        *out = ptr::null_mut();
        let kind = if is_tests { UnitKind::Test } else { UnitKind::Cut };
        let unit = SourceUnit::new(text(name, "name")?, text(source, "source")?, kind);
        let program = lang::parse(&unit).map_err(|e| Failure::new(ShipStatus::CompileError, e))?;
        *out = Box::into_raw(Box::new(ShipProgram(program)));
        Ok(())
    })
}

/// # Safety
/// `program` must be null or a handle from [`ship_parse`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ship_program_free(program: *mut ShipProgram) {
    if !program.is_null() {
        drop(Box::from_raw(program));
    }
}

/// Writes the sorted executable line numbers as a JSON array.
///
/// # Safety
/// `program` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ship_program_executable_lines(
    program: *const ShipProgram,
    out: *mut *mut c_char,
) -> ShipStatus {
    guard(|| {
        out_ptr(out)?;
        let p = program
            .as_ref()
            .ok_or_else(|| Failure::new(ShipStatus::NullArgument, "program is null"))?;
        write_json(out, &p.0.executable_lines)
    })
}

/// Calls a parameterless function of a component and writes the outcome
/// as JSON. Zero limits mean the defaults.
///
/// # Safety
/// `program` must be a live handle, `entry` NUL-terminated and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ship_program_run(
    program: *const ShipProgram,
    entry: *const c_char,
    wall_timeout_ms: u64,
    max_steps: u64,
    out: *mut *mut c_char,
) -> ShipStatus {
    guard(|| {
        out_ptr(out)?;
        let p = program
            .as_ref()
            .ok_or_else(|| Failure::new(ShipStatus::NullArgument, "program is null"))?;
        let entry = text(entry, "entry")?;
        let outcome = lang::run(&p.0, entry, &limits(wall_timeout_ms, max_steps))
            .map_err(|e| Failure::new(ShipStatus::UnknownEntry, e))?;
        write_json(out, &outcome)
    })
}

/// Runs a test file against a component and writes the suite result,
/// with coverage, as JSON. `component_name` must match the name declared
/// in the component source. Zero limits mean the defaults.
///
/// # Safety
/// All strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ship_run_suite(
    component_name: *const c_char,
    component_source: *const c_char,
    tests_source: *const c_char,
    wall_timeout_ms: u64,
    max_steps: u64,
    out: *mut *mut c_char,
) -> ShipStatus {
    guard(|| {
        out_ptr(out)?;
        let name = text(component_name, "component name")?;
        let cut = SourceUnit::cut(name, text(component_source, "component source")?);
        let tests = SourceUnit::test(format!("{name}Test"), text(tests_source, "tests source")?);
        let suite = compile_pair(&cut, &tests).map_err(|e| Failure::new(ShipStatus::CompileError, e))?;
        write_json(out, &run_suite(&suite, &limits(wall_timeout_ms, max_steps)))
    })
}

/// Loads and validates a content pack directory, or the built-in pack
/// when `dir` is null.
///
/// # Safety
/// `dir` must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ship_pack_load(dir: *const c_char, out: *mut *mut ShipPack) -> ShipStatus {
    guard(|| {
        out_ptr(out)?;
        *out = ptr::null_mut();
        let pack = if dir.is_null() {
            default_pack()
        } else {
            ContentPack::load(Path::new(text(dir, "dir")?)).map_err(|r| Failure::new(ShipStatus::InvalidPack, r))?
        };
        *out = Box::into_raw(Box::new(ShipPack(pack)));
        Ok(())
    })
}

/// Number of rooms in a pack, or 0 for null.
///
/// # Safety
/// `pack` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ship_pack_room_count(pack: *const ShipPack) -> u32 {
    pack.as_ref().map_or(0, |p| p.0.room_count())
}

/// Writes the room table of a pack as JSON.
///
/// # Safety
/// `pack` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ship_pack_rooms(pack: *const ShipPack, out: *mut *mut c_char) -> ShipStatus {
    guard(|| {
        out_ptr(out)?;
        let p = pack
            .as_ref()
            .ok_or_else(|| Failure::new(ShipStatus::NullArgument, "pack is null"))?;
        let rooms: Vec<_> = p.0.rooms.iter().map(|r| &r.spec).collect();
        write_json(out, &rooms)
    })
}

/// # Safety
/// `pack` must be null or a handle from [`ship_pack_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ship_pack_free(pack: *mut ShipPack) {
    if !pack.is_null() {
        drop(Box::from_raw(pack));
    }
}
