use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use scenetone_ffi::*;

fn fixture(name: &str) -> Vec<u8> {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/images").join(name);
    std::fs::read(p).unwrap()
}

fn last_error() -> String {
    let p = st_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn crossfade_window_values() {
    let mut s = 0.0;
    for (bpm, want) in [(60.0, 2.0), (90.0, 4.0 / 3.0), (120.0, 1.0), (200.0, 0.6), (240.0, 0.5)] {
        assert_eq!(unsafe { st_crossfade_window(bpm, &mut s) }, StStatus::Ok);
        assert_eq!(s, want);
    }
    assert_eq!(unsafe { st_crossfade_window(0.0, &mut s) }, StStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { st_crossfade_window(120.0, ptr::null_mut()) }, StStatus::NullPointer);
}

#[test]
fn envelope_gains_through_the_abi() {
    let (mut go, mut gi) = (0.0, 0.0);
    let ep = StEnvelope {
        kind: StEnvelopeKind::EqualPower,
        alpha: 0.0,
    };
    for n in 0..=441 {
        assert_eq!(unsafe { st_envelope_gains(ep, n, 441, &mut go, &mut gi) }, StStatus::Ok);
        assert!((go * go + gi * gi - 1.0).abs() < 1e-9);
    }
    let pl = StEnvelope {
        kind: StEnvelopeKind::PowerLaw,
        alpha: 2.5,
    };
    assert_eq!(unsafe { st_envelope_gains(pl, 50, 100, &mut go, &mut gi) }, StStatus::Ok);
    assert!((gi - 0.5f64.powf(2.5)).abs() < 1e-12);
    assert_eq!(unsafe { st_envelope_gains(pl, 101, 100, &mut go, &mut gi) }, StStatus::InvalidArgument);
    let bad = StEnvelope { alpha: -1.0, ..pl };
    assert_eq!(unsafe { st_envelope_gains(bad, 1, 100, &mut go, &mut gi) }, StStatus::InvalidArgument);
}

#[test]
fn session_lifecycle() {
    let config = CString::new("[latencies]\ncaption_ms = 0\ngeneration_ms = 0\n").unwrap();
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(st_session_new(config.as_ptr(), &mut s), StStatus::Ok);
        assert!(!s.is_null());
        let mut data = ptr::null_mut();
        let mut len = 0;
        assert_eq!(st_session_render_wav(s, &mut data, &mut len), StStatus::InvalidState);

        let inst = CString::new("keys,guitar").unwrap();
        for (i, img) in ["night_street.jpg", "beach_day.jpg"].iter().enumerate() {
            let jpeg = fixture(img);
            let st = st_session_capture(s, jpeg.as_ptr(), jpeg.len(), inst.as_ptr(), i as u64 * 10_000);
            assert_eq!(st, StStatus::Ok);
        }
        let too_many = CString::new("keys,guitar,bass,percussion").unwrap();
        let jpeg = fixture("forest_morning.jpg");
        assert_eq!(
            st_session_capture(s, jpeg.as_ptr(), jpeg.len(), too_many.as_ptr(), 0),
            StStatus::InvalidArgument
        );
        assert!(last_error().contains("between 1 and 3"));
        let junk = [1u8, 2, 3, 4];
        assert_eq!(st_session_capture(s, junk.as_ptr(), 4, inst.as_ptr(), 0), StStatus::InvalidArgument);

        let master = CString::new(r#"{"action":"master"}"#).unwrap();
        assert_eq!(st_session_control(s, master.as_ptr(), 30_000), StStatus::Ok);
        let garbage = CString::new("{").unwrap();
        assert_eq!(st_session_control(s, garbage.as_ptr(), 0), StStatus::InvalidArgument);
        assert_eq!(st_session_run(s), StStatus::Ok);

        let mut count = 0;
        assert_eq!(st_session_section_count(s, &mut count), StStatus::Ok);
        assert_eq!(count, 2);

        assert_eq!(st_session_render_wav(s, &mut data, &mut len), StStatus::Ok);
        let wav = std::slice::from_raw_parts(data, len);
        let audio = scenetone::audio::decode_wav(wav).unwrap();
        assert!(audio.len() > 44_100 * 20);
        st_bytes_free(data, len);

        let mut log = ptr::null_mut();
        assert_eq!(st_session_event_log(s, &mut log), StStatus::Ok);
        let text = CStr::from_ptr(log).to_str().unwrap().to_string();
        st_string_free(log);
        assert!(scenetone::session::EventLog::from_jsonl(&text).is_ok());
        assert!(text.contains("swap_committed"));

        let mut json = ptr::null_mut();
        assert_eq!(st_session_state_json(s, &mut json), StStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        st_string_free(json);
        assert_eq!(v["session"]["bpm"], 90.0);
        st_session_free(s);
    }
    assert_eq!(unsafe { st_session_run(ptr::null_mut()) }, StStatus::NullPointer);
}

#[test]
fn firmware_debounce_and_leds() {
    let mut fw = ptr::null_mut();
    let mut evs = [StDeviceEvent {
        button: 0,
        down: false,
        at_ms: 0,
    }; ST_MAX_EVENTS_PER_CALL];
    let mut n = 0;
    unsafe {
        assert_eq!(st_firmware_new(&mut fw), StStatus::Ok);
        for (pressed, at) in [(true, 10), (false, 12), (true, 14)] {
            assert_eq!(st_firmware_edge(fw, 1, pressed, at, evs.as_mut_ptr(), evs.len(), &mut n), StStatus::Ok);
            assert_eq!(n, 0);
        }
        assert_eq!(st_firmware_edge(fw, 1, false, 200, evs.as_mut_ptr(), evs.len(), &mut n), StStatus::Ok);
        assert_eq!(n, 1);
        assert_eq!(
            evs[0],
            StDeviceEvent {
                button: 1,
                down: true,
                at_ms: 14
            }
        );
        let mut leds = 0;
        st_firmware_leds(fw, &mut leds);
        assert_eq!(leds, 0b10);
        let line = CString::new("D 90 verse 3 05 ambient chill").unwrap();
        assert_eq!(st_firmware_host_line(fw, line.as_ptr()), StStatus::Ok);
        st_firmware_leds(fw, &mut leds);
        assert_eq!(leds, 0b101);
        assert_eq!(st_firmware_settle(fw, evs.as_mut_ptr(), evs.len(), &mut n), StStatus::Ok);
        assert_eq!((n, evs[0].down, evs[0].at_ms), (1, false, 200));
        assert_eq!(st_firmware_edge(fw, 9, true, 0, evs.as_mut_ptr(), evs.len(), &mut n), StStatus::InvalidArgument);
        let ack = CString::new("A").unwrap();
        assert_eq!(st_firmware_host_line(fw, ack.as_ptr()), StStatus::InvalidArgument);

        let mut out = ptr::null_mut();
        assert_eq!(st_device_event_encode(evs[0], &mut out), StStatus::Ok);
        assert_eq!(CStr::from_ptr(out).to_str().unwrap(), "B 1 u 200\n");
        st_string_free(out);
        st_firmware_free(fw);
    }
}

fn target_dir() -> PathBuf {
    // target/<profile>/deps/<test binary>
    std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_header() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler, skipping");
        return;
    }
    let lib_dir = target_dir();
    if !lib_dir.join("libscenetone_ffi.so").exists() {
        eprintln!("no shared library in {}, skipping", lib_dir.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "scenetone.h"
int main(void) {
    double s = 0;
    if (st_crossfade_window(90.0, &s) != ST_STATUS_OK) return 1;
    StEnvelope e = { ST_ENVELOPE_KIND_EQUAL_POWER, 0.0 };
    double go, gi;
    if (st_envelope_gains(e, 32, 64, &go, &gi) != ST_STATUS_OK) return 2;
    if (st_crossfade_window(-1.0, &s) != ST_STATUS_INVALID_ARGUMENT || !st_last_error()) return 3;
    StFirmware *fw = NULL;
    StDeviceEvent ev[ST_MAX_EVENTS_PER_CALL];
    size_t n = 0;
    st_firmware_new(&fw);
    st_firmware_edge(fw, 4, true, 100, ev, ST_MAX_EVENTS_PER_CALL, &n);
    st_firmware_settle(fw, ev, ST_MAX_EVENTS_PER_CALL, &n);
    st_firmware_free(fw);
    printf("%.6f %.6f %zu %u %llu\n", s, go * go + gi * gi, n, ev[0].button, (unsigned long long)ev[0].at_ms);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg("-L")
        .arg(&lib_dir)
        .arg("-lscenetone_ffi")
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).env("LD_LIBRARY_PATH", &lib_dir).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "1.333333 1.000000 1 4 100\n");
}
