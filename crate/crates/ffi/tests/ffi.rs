use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use lenbeam_ffi::*;

const MODEL: &str = r#"{"vocab":["a","b"],"eos":"$","contexts":{"":[0.6,0.1,0.3],"a":[0.1,0.2,0.7],"b":[0.3,0.3,0.4]}}"#;

fn model(json: &str) -> *mut LenbeamModel {
    let json = CString::new(json).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { lenbeam_model_from_json(json.as_ptr(), &mut m) }, LenbeamStatus::Ok);
    assert!(!m.is_null());
    m
}

fn last_error() -> String {
    let p = lenbeam_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn decode(m: *const LenbeamModel, cfg: &LenbeamConfig, t: usize) -> *mut LenbeamResult {
    let mut r = ptr::null_mut();
    let status = unsafe { lenbeam_decode(m, ptr::null(), cfg, t, &mut r) };
    assert_eq!(status, LenbeamStatus::Ok, "{}", last_error());
    r
}

fn labels(r: *const LenbeamResult, i: usize) -> Vec<usize> {
    let mut len = 0;
    let status = unsafe { lenbeam_result_labels(r, i, ptr::null_mut(), 0, &mut len) };
    assert!(status == LenbeamStatus::OutOfRange || len == 0);
    let mut buf = vec![0usize; len];
    assert_eq!(
        unsafe { lenbeam_result_labels(r, i, buf.as_mut_ptr(), buf.len(), &mut len) },
        LenbeamStatus::Ok
    );
    buf
}

#[test]
fn decodes_and_matches_the_library() {
    let m = model(MODEL);
    let mut cfg = lenbeam_config_default(LenbeamMode::Proposed);
    cfg.k_best = 3;
    let r = decode(m, &cfg, 6);

    let direct = {
        let tm = lenbeam::scorer::TableModel::from_json_str(MODEL).unwrap();
        let mut c = lenbeam::decode::DecodeConfig::new(lenbeam::decode::Mode::Proposed, 64);
        c.k_best = 3;
        lenbeam::decode::decode_with(&tm, &c, 6).unwrap()
    };
    assert_eq!(unsafe { lenbeam_result_len(r) }, direct.kbest.len());
    assert_eq!(unsafe { lenbeam_result_steps(r) }, direct.steps_taken);
    for (i, h) in direct.kbest.entries().iter().enumerate() {
        let mut e = LenbeamEntry::default();
        assert_eq!(unsafe { lenbeam_result_entry(r, i, &mut e) }, LenbeamStatus::Ok);
        assert_eq!(e.length, h.length());
        assert_eq!(e.raw_score, h.raw_score.0);
        assert_eq!(e.final_score, h.final_score);
        assert_eq!(e.final_score, e.p_b + e.p_not_end);
        assert_eq!(labels(r, i), h.labels);
    }
    let mut reason = LenbeamStopReason::MaxLength;
    assert_eq!(unsafe { lenbeam_result_stop_reason(r, &mut reason) }, LenbeamStatus::Ok);

    let mut e = LenbeamEntry::default();
    assert_eq!(unsafe { lenbeam_result_entry(r, 99, &mut e) }, LenbeamStatus::OutOfRange);
    assert!(last_error().contains("99"));
    unsafe {
        lenbeam_result_free(r);
        lenbeam_model_free(m);
    }
}

#[test]
fn labels_and_eos() {
    let m = model(MODEL);
    assert_eq!(unsafe { lenbeam_model_vocab_size(m) }, 3);
    let mut eos = 0;
    assert_eq!(unsafe { lenbeam_model_eos(m, &mut eos) }, LenbeamStatus::Ok);
    let mut name = ptr::null();
    assert_eq!(unsafe { lenbeam_model_label(m, eos, &mut name) }, LenbeamStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(name) }.to_str().unwrap(), "$");
    assert_eq!(unsafe { lenbeam_model_label(m, 3, &mut name) }, LenbeamStatus::OutOfRange);
    unsafe { lenbeam_model_free(m) };
}

#[test]
fn error_codes() {
    let mut m = ptr::null_mut();
    let bad = CString::new(r#"{"vocab":["a"],"eos":"$","contexts":{"":[0.7,0.7]}}"#).unwrap();
    assert_eq!(unsafe { lenbeam_model_from_json(bad.as_ptr(), &mut m) }, LenbeamStatus::InvalidModel);
    assert!(m.is_null());
    assert!(!last_error().is_empty());

    let missing = CString::new("/nonexistent/model.json").unwrap();
    assert_eq!(unsafe { lenbeam_model_load(missing.as_ptr(), &mut m) }, LenbeamStatus::Io);
    assert!(last_error().contains("/nonexistent/model.json"));
    assert_eq!(unsafe { lenbeam_model_load(ptr::null(), &mut m) }, LenbeamStatus::NullPointer);
    let not_utf8 = [0xffu8, 0];
    assert_eq!(
        unsafe { lenbeam_model_load(not_utf8.as_ptr().cast(), &mut m) },
        LenbeamStatus::InvalidUtf8
    );

    let good = model(MODEL);
    let mut r = ptr::null_mut();
    let mut cfg = lenbeam_config_default(LenbeamMode::Proposed);
    cfg.length_normalize = true;
    assert_eq!(unsafe { lenbeam_decode(good, ptr::null(), &cfg, 4, &mut r) }, LenbeamStatus::InvalidConfig);
    cfg = lenbeam_config_default(LenbeamMode::Simple);
    assert_eq!(unsafe { lenbeam_decode(good, ptr::null(), &cfg, 0, &mut r) }, LenbeamStatus::InvalidConfig);
    assert_eq!(unsafe { lenbeam_decode(ptr::null(), ptr::null(), &cfg, 4, &mut r) }, LenbeamStatus::NullPointer);
    assert!(r.is_null());

    // success clears the message
    let mut x = 0.0;
    assert_eq!(unsafe { lenbeam_length_normalized_score(-3.0, 3, &mut x) }, LenbeamStatus::Ok);
    assert!(lenbeam_last_error_message().is_null());
    unsafe { lenbeam_model_free(good) };
}

#[test]
fn unreachable_end_reports_no_hypothesis() {
    let m = model(r#"{"vocab":["a","b"],"eos":"$","contexts":{"":[0.5,0.5,0.0]}}"#);
    let cfg = lenbeam_config_default(LenbeamMode::Simple);
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { lenbeam_decode(m, ptr::null(), &cfg, 3, &mut r) }, LenbeamStatus::NoHypothesis);
    unsafe { lenbeam_model_free(m) };
}

#[test]
fn language_model_fusion() {
    let am = model(MODEL);
    let lm = model(r#"{"vocab":["a","b"],"eos":"$","contexts":{"":[0.1,0.8,0.1]}}"#);
    let mut cfg = lenbeam_config_default(LenbeamMode::Proposed);
    let plain = decode(am, &cfg, 4);
    cfg.lm_scale = 2.0;
    let mut fused = ptr::null_mut();
    assert_eq!(unsafe { lenbeam_decode(am, lm, &cfg, 4, &mut fused) }, LenbeamStatus::Ok);
    assert_ne!(labels(plain, 0), labels(fused, 0));
    let other_vocab = model(r#"{"vocab":["x"],"eos":"$","contexts":{"":[0.5,0.5]}}"#);
    let mut r = ptr::null_mut();
    assert_eq!(
        unsafe { lenbeam_decode(am, other_vocab, &cfg, 4, &mut r) },
        LenbeamStatus::InvalidModel
    );
    unsafe {
        lenbeam_result_free(plain);
        lenbeam_result_free(fused);
        lenbeam_model_free(am);
        lenbeam_model_free(lm);
        lenbeam_model_free(other_vocab);
    }
}

#[test]
fn numeric_helpers() {
    let mut out = 0.0;
    let xs = [(0.25f64).ln(), (0.5f64).ln(), f64::NEG_INFINITY];
    assert_eq!(unsafe { lenbeam_log_sum_exp(xs.as_ptr(), xs.len(), &mut out) }, LenbeamStatus::Ok);
    assert!((out - 0.75f64.ln()).abs() < 1e-15);
    assert_ne!(unsafe { lenbeam_log_sum_exp(ptr::null(), 0, &mut out) }, LenbeamStatus::Ok);
    assert_eq!(unsafe { lenbeam_length_normalized_score(-10.55, 3, &mut out) }, LenbeamStatus::Ok);
    assert!((out + 3.52).abs() <= 0.005);
    assert_ne!(unsafe { lenbeam_length_normalized_score(-1.0, 0, &mut out) }, LenbeamStatus::Ok);
    let v = unsafe { CStr::from_ptr(lenbeam_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/lenbeam.h")
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(header()).unwrap();
    for name in [
        "lenbeam_model_load",
        "lenbeam_model_from_json",
        "lenbeam_model_free",
        "lenbeam_decode",
        "lenbeam_result_free",
        "lenbeam_result_labels",
        "lenbeam_last_error_message",
        "LENBEAM_STATUS_NO_HYPOTHESIS",
        "typedef struct LenbeamModel LenbeamModel;",
    ] {
        assert!(h.contains(name), "{name} missing from the header");
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "lenbeam.h"

int main(void) {
    const char *json = "{\"vocab\":[\"a\",\"b\"],\"eos\":\"$\",\"contexts\":{\"\":[0.6,0.1,0.3],\"a\":[0.1,0.2,0.7]}}";
    LenbeamModel *m = NULL;
    if (lenbeam_model_from_json(json, &m) != LENBEAM_STATUS_OK) return 10;
    LenbeamConfig cfg = lenbeam_config_default(LENBEAM_MODE_PROPOSED);
    LenbeamResult *r = NULL;
    if (lenbeam_decode(m, NULL, &cfg, 5, &r) != LENBEAM_STATUS_OK) return 11;
    LenbeamEntry e;
    if (lenbeam_result_entry(r, 0, &e) != LENBEAM_STATUS_OK) return 12;
    size_t ids[16], n = 0;
    if (lenbeam_result_labels(r, 0, ids, 16, &n) != LENBEAM_STATUS_OK) return 13;
    for (size_t i = 0; i < n; i++) {
        const char *label = NULL;
        lenbeam_model_label(m, ids[i], &label);
        printf("%s ", label);
    }
    printf("%.6f\n", e.final_score);
    if (lenbeam_decode(m, NULL, NULL, 5, &r) != LENBEAM_STATUS_NULL_POINTER) return 14;
    if (strlen(lenbeam_last_error_message()) == 0) return 15;
    lenbeam_result_free(r);
    lenbeam_model_free(m);
    return 0;
}
"#;

/// Compiles a small C client against the header and the static library.
/// Skipped (with a note) when no C compiler or static library is around.
#[test]
fn c_client_links_and_runs() {
    let Some(target_dir) = std::env::current_exe()
        .ok()
        .and_then(|p| p.parent().and_then(Path::parent).map(Path::to_path_buf))
    else {
        return;
    };
    let lib = target_dir.join("liblenbeam_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no static library at {} or no cc", lib.display());
        return;
    }
    let dir = tempfile_dir();
    let src = dir.join("client.c");
    let exe = dir.join("client");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let include = header().parent().unwrap().to_path_buf();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .unwrap();
    assert!(status.success(), "C client failed to build");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C client exited with {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.ends_with('\n'));
    let final_score: f64 = text.split_whitespace().last().unwrap().parse().unwrap();
    assert!(final_score <= 0.0);
    std::fs::remove_dir_all(&dir).ok();
}

fn tempfile_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lenbeam-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
