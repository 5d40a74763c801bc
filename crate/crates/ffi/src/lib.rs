//! C ABI over the scenetone engine.
//!
//! Every fallible call returns an [`StStatus`]; on failure a description is
//! available from [`st_last_error`] on the same thread. Handles are opaque and
//! released with their `_free` function. Strings and byte buffers returned by
//! the library are released with [`st_string_free`] and [`st_bytes_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use scenetone::audio::encode_wav;
use scenetone::caption::CaptureFrame;
use scenetone::config::{ApiKeys, Config};
use scenetone::crossfade::{envelope_gains, EnvelopeFamily};
use scenetone::device::{encode_event, parse_line, Button, DeviceEvent, Edge, Firmware, Line, RawEdge};
use scenetone::prompt::InstrumentSelection;
use scenetone::scheduler::crossfade_window;
use scenetone::session::{prompt_tables, Backends, Control, Orchestrator, Simulation};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    InvalidState = 4,
    Backend = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StEnvelopeKind {
    EqualPower = 0,
    PowerLaw = 1,
}

/// Crossfade envelope; `alpha` is read only for the power-law family.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StEnvelope {
    pub kind: StEnvelopeKind,
    pub alpha: f64,
}

/// A debounced controller event. Buttons: keys 0, guitar 1, bass 2,
/// percussion 3, capture 4.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StDeviceEvent {
    pub button: u8,
    pub down: bool,
    pub at_ms: u64,
}

/// Most events a single firmware call can return.
pub const ST_MAX_EVENTS_PER_CALL: usize = 5;

/// A session run in virtual time.
pub struct StSession {
    sim: Simulation,
}

/// The controller firmware model.
pub struct StFirmware {
    fw: Firmware,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Fail(StStatus, String);

impl Fail {
    fn arg(msg: impl std::fmt::Display) -> Self {
        Fail(StStatus::InvalidArgument, msg.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> StStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => StStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            StStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(StStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(StStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail(StStatus::NullPointer, format!("{what} is null")))
}

unsafe fn handle<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    out(p, "handle")
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next call into the library on this thread.
#[no_mangle]
pub extern "C" fn st_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn st_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `data` and `len` must be exactly as returned by this library.
#[no_mangle]
pub unsafe extern "C" fn st_bytes_free(data: *mut u8, len: usize) {
    if !data.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(data, len)));
    }
}

/// Crossfade length in seconds for a tempo in beats per minute.
///
/// # Safety
/// `out_seconds` must be writable.
#[no_mangle]
pub unsafe extern "C" fn st_crossfade_window(bpm: f64, out_seconds: *mut f64) -> StStatus {
    guard(|| {
        let o = out(out_seconds, "out_seconds")?;
        *o = crossfade_window(bpm).map_err(Fail::arg)?;
        Ok(())
    })
}

/// Outgoing and incoming gains at sample `n` of a `len`-sample window.
///
/// # Safety
/// `out_gain_out` and `out_gain_in` must be writable.
#[no_mangle]
pub unsafe extern "C" fn st_envelope_gains(
    envelope: StEnvelope,
    n: usize,
    len: usize,
    out_gain_out: *mut f64,
    out_gain_in: *mut f64,
) -> StStatus {
    guard(|| {
        let (go, gi) = (out(out_gain_out, "out_gain_out")?, out(out_gain_in, "out_gain_in")?);
        let family = match envelope.kind {
            StEnvelopeKind::EqualPower => EnvelopeFamily::EqualPower,
            StEnvelopeKind::PowerLaw => EnvelopeFamily::power_law(envelope.alpha).map_err(Fail::arg)?,
        };
        (*go, *gi) = envelope_gains(family, n, len).map_err(Fail::arg)?;
        Ok(())
    })
}

/// Opens a session. `config_toml` may be NULL for defaults; environment
/// overrides and API keys are read from the process environment.
///
/// # Safety
/// `config_toml` is NULL or a NUL-terminated string; `out_session` is writable.
#[no_mangle]
pub unsafe extern "C" fn st_session_new(config_toml: *const c_char, out_session: *mut *mut StSession) -> StStatus {
    guard(|| {
        let slot = out(out_session, "out_session")?;
        *slot = ptr::null_mut();
        let mut config = if config_toml.is_null() {
            Config::default()
        } else {
            Config::from_toml(text(config_toml, "config_toml")?).map_err(Fail::arg)?
        };
        config.apply_env(std::env::vars()).map_err(Fail::arg)?;
        let backends = Backends::from_config(&config, &ApiKeys::from_env()).map_err(Fail::arg)?;
        let tables = prompt_tables(&config).map_err(Fail::arg)?;
        let orch = Orchestrator::new("ffi", config, tables);
        *slot = Box::into_raw(Box::new(StSession {
            sim: Simulation::new(orch, backends),
        }));
        Ok(())
    })
}

/// # Safety
/// `session` is NULL or a live handle; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn st_session_free(session: *mut StSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Queues a JPEG capture at virtual time `at_ms` with a comma-separated
/// instrument list such as `"keys,guitar"`.
///
/// # Safety
/// `jpeg` points to `len` readable bytes; `instruments` is NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn st_session_capture(
    session: *mut StSession,
    jpeg: *const u8,
    len: usize,
    instruments: *const c_char,
    at_ms: u64,
) -> StStatus {
    guard(|| {
        let s = handle(session)?;
        if jpeg.is_null() {
            return Err(Fail(StStatus::NullPointer, "jpeg is null".into()));
        }
        let bytes = std::slice::from_raw_parts(jpeg, len).to_vec();
        let sel = InstrumentSelection::parse_list(text(instruments, "instruments")?).map_err(Fail::arg)?;
        let frame = CaptureFrame::from_jpeg(bytes, 0).map_err(Fail::arg)?;
        s.sim.schedule_capture(at_ms * 1000, frame, sel);
        Ok(())
    })
}

/// Queues a control at virtual time `at_ms`, given as JSON, e.g.
/// `{"action":"set_auto_mix","enabled":true}` or `{"action":"master"}`.
///
/// # Safety
/// `control_json` is NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn st_session_control(
    session: *mut StSession,
    control_json: *const c_char,
    at_ms: u64,
) -> StStatus {
    guard(|| {
        let s = handle(session)?;
        let control: Control = serde_json::from_str(text(control_json, "control_json")?).map_err(Fail::arg)?;
        s.sim.schedule_control(at_ms * 1000, control);
        Ok(())
    })
}

/// Runs queued work until nothing is left.
///
/// # Safety
/// `session` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn st_session_run(session: *mut StSession) -> StStatus {
    guard(|| {
        handle(session)?.sim.run();
        Ok(())
    })
}

/// # Safety
/// `session` is a live handle; `out_count` is writable.
#[no_mangle]
pub unsafe extern "C" fn st_session_section_count(session: *mut StSession, out_count: *mut usize) -> StStatus {
    guard(|| {
        let s = handle(session)?;
        *out(out_count, "out_count")? = s.sim.orchestrator().timeline().map_or(0, |t| t.sections().len());
        Ok(())
    })
}

/// The full rendered session as a 16-bit stereo WAV. Release with
/// [`st_bytes_free`].
///
/// # Safety
/// `session` is a live handle; both out pointers are writable.
#[no_mangle]
pub unsafe extern "C" fn st_session_render_wav(
    session: *mut StSession,
    out_data: *mut *mut u8,
    out_len: *mut usize,
) -> StStatus {
    guard(|| {
        let s = handle(session)?;
        let (data, len) = (out(out_data, "out_data")?, out(out_len, "out_len")?);
        let audio = s
            .sim
            .orchestrator()
            .render()
            .ok_or_else(|| Fail(StStatus::InvalidState, "session has no sections".into()))?;
        let wav = encode_wav(&audio).into_boxed_slice();
        *len = wav.len();
        *data = Box::into_raw(wav).cast();
        Ok(())
    })
}

/// The session event log as JSON lines. Release with [`st_string_free`].
///
/// # Safety
/// `session` is a live handle; `out_jsonl` is writable.
#[no_mangle]
pub unsafe extern "C" fn st_session_event_log(session: *mut StSession, out_jsonl: *mut *mut c_char) -> StStatus {
    guard(|| {
        let s = handle(session)?;
        *out(out_jsonl, "out_jsonl")? = into_c_string(s.sim.orchestrator().event_log().to_jsonl());
        Ok(())
    })
}

/// State snapshot at the current virtual time as JSON. Release with
/// [`st_string_free`].
///
/// # Safety
/// `session` is a live handle; `out_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn st_session_state_json(session: *mut StSession, out_json: *mut *mut c_char) -> StStatus {
    guard(|| {
        let s = handle(session)?;
        let snap = s.sim.orchestrator().snapshot(s.sim.now_us());
        let json = serde_json::to_string(&snap).map_err(|e| Fail(StStatus::Backend, e.to_string()))?;
        *out(out_json, "out_json")? = into_c_string(json);
        Ok(())
    })
}

/// # Safety
/// `out_firmware` is writable.
#[no_mangle]
pub unsafe extern "C" fn st_firmware_new(out_firmware: *mut *mut StFirmware) -> StStatus {
    guard(|| {
        *out(out_firmware, "out_firmware")? = Box::into_raw(Box::new(StFirmware { fw: Firmware::new() }));
        Ok(())
    })
}

/// # Safety
/// `firmware` is NULL or a live handle; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn st_firmware_free(firmware: *mut StFirmware) {
    if !firmware.is_null() {
        drop(Box::from_raw(firmware));
    }
}

unsafe fn emit(events: Vec<DeviceEvent>, out_events: *mut StDeviceEvent, capacity: usize, out_count: *mut usize) -> Result<(), Fail> {
    let count = out(out_count, "out_count")?;
    if out_events.is_null() {
        return Err(Fail(StStatus::NullPointer, "out_events is null".into()));
    }
    if capacity < events.len() {
        return Err(Fail::arg(format!("capacity {capacity} below {} events", events.len())));
    }
    for (i, ev) in events.iter().enumerate() {
        *out_events.add(i) = StDeviceEvent {
            button: ev.button.index(),
            down: ev.kind == Edge::ButtonDown,
            at_ms: ev.at,
        };
    }
    *count = events.len();
    Ok(())
}

/// Feeds one raw contact level. Debounced events confirmed up to `at_ms` are
/// written to `out_events` (room for [`ST_MAX_EVENTS_PER_CALL`] suffices).
///
/// # Safety
/// `firmware` is a live handle; `out_events` has room for `capacity` events.
#[no_mangle]
pub unsafe extern "C" fn st_firmware_edge(
    firmware: *mut StFirmware,
    button: u8,
    pressed: bool,
    at_ms: u64,
    out_events: *mut StDeviceEvent,
    capacity: usize,
    out_count: *mut usize,
) -> StStatus {
    guard(|| {
        let f = handle(firmware)?;
        let button = Button::from_index(button).ok_or_else(|| Fail::arg(format!("no button {button}")))?;
        let evs = f.fw.edge(RawEdge {
            button,
            pressed,
            at: at_ms,
        });
        emit(evs, out_events, capacity, out_count)
    })
}

/// Confirms every pending level as if the contacts then held still.
///
/// # Safety
/// As for [`st_firmware_edge`].
#[no_mangle]
pub unsafe extern "C" fn st_firmware_settle(
    firmware: *mut StFirmware,
    out_events: *mut StDeviceEvent,
    capacity: usize,
    out_count: *mut usize,
) -> StStatus {
    guard(|| {
        let f = handle(firmware)?;
        let evs = f.fw.settle();
        emit(evs, out_events, capacity, out_count)
    })
}

/// Applies a host display line (`D ...`).
///
/// # Safety
/// `firmware` is a live handle; `line` is NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn st_firmware_host_line(firmware: *mut StFirmware, line: *const c_char) -> StStatus {
    guard(|| {
        let f = handle(firmware)?;
        match parse_line(text(line, "line")?).map_err(Fail::arg)? {
            Line::Display(state) => {
                f.fw.host_display(state);
                Ok(())
            }
            _ => Err(Fail::arg("expected a display line")),
        }
    })
}

/// LED mask currently shown: instruments in button order, then capture.
///
/// # Safety
/// `firmware` is a live handle; `out_mask` is writable.
#[no_mangle]
pub unsafe extern "C" fn st_firmware_leds(firmware: *mut StFirmware, out_mask: *mut u8) -> StStatus {
    guard(|| {
        let f = handle(firmware)?;
        *out(out_mask, "out_mask")? = f.fw.leds();
        Ok(())
    })
}

/// Wire form of an event (`B <idx> <d|u> <ms>\n`). Release with
/// [`st_string_free`].
///
/// # Safety
/// `out_line` is writable.
#[no_mangle]
pub unsafe extern "C" fn st_device_event_encode(event: StDeviceEvent, out_line: *mut *mut c_char) -> StStatus {
    guard(|| {
        let slot = out(out_line, "out_line")?;
        let button = Button::from_index(event.button).ok_or_else(|| Fail::arg(format!("no button {}", event.button)))?;
        let ev = DeviceEvent {
            kind: if event.down { Edge::ButtonDown } else { Edge::ButtonUp },
            button,
            at: event.at_ms,
        };
        *slot = into_c_string(encode_event(&ev));
        Ok(())
    })
}
