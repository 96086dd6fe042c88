use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use plunnecke_ffi::*;

unsafe fn take(s: *mut c_char) -> String {
    assert!(!s.is_null());
    let out = CStr::from_ptr(s).to_str().unwrap().to_owned();
    plk_string_free(s);
    out
}

unsafe fn last_error() -> String {
    CStr::from_ptr(plk_last_error()).to_str().unwrap().to_owned()
}

#[test]
fn handles_round_trip() {
    unsafe {
        let mut a: *mut PlkPointSet = ptr::null_mut();
        assert_eq!(plk_pointset_new(4, 4, &mut a), PlkStatus::Ok);
        assert_eq!(plk_pointset_insert(a, 0, 0), PlkStatus::Ok);
        assert_eq!(plk_pointset_insert(a, 1, 2), PlkStatus::Ok);
        assert_eq!(plk_pointset_len(a), 2);
        let mut hit = -1;
        assert_eq!(plk_pointset_contains(a, 1, 2, &mut hit), PlkStatus::Ok);
        assert_eq!(hit, 1);
        let mut json = ptr::null_mut();
        assert_eq!(plk_pointset_to_json(a, &mut json), PlkStatus::Ok);
        let json = CString::new(take(json)).unwrap();
        let mut b: *mut PlkPointSet = ptr::null_mut();
        assert_eq!(plk_pointset_from_json(json.as_ptr(), &mut b), PlkStatus::Ok);
        assert_eq!(plk_pointset_len(b), 2);
        let mut s: *mut PlkPointSet = ptr::null_mut();
        assert_eq!(plk_sumset(a, b, &mut s), PlkStatus::Ok);
        // {0,0},{1,2},{2,4 clipped} -> (0,0),(1,2)
        assert_eq!(plk_pointset_len(s), 2);
        for p in [a, b, s] {
            plk_pointset_free(p);
        }
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        let mut a: *mut PlkPointSet = ptr::null_mut();
        assert_eq!(plk_pointset_new(0, 4, &mut a), PlkStatus::InvalidArgument);
        assert!(a.is_null());
        assert!(last_error().contains("positive"));
        assert_eq!(plk_pointset_new(3, 3, &mut a), PlkStatus::Ok);
        assert_eq!(plk_pointset_insert(a, 3, 0), PlkStatus::OutOfWindow);
        assert_eq!(plk_pointset_insert(ptr::null_mut(), 0, 0), PlkStatus::NullPointer);
        let bad = CString::new("{not json").unwrap();
        let mut b = ptr::null_mut();
        assert_eq!(plk_pointset_from_json(bad.as_ptr(), &mut b), PlkStatus::Parse);
        assert_eq!(plk_pointset_len(ptr::null()), 0);
        plk_pointset_free(a);
        plk_pointset_free(ptr::null_mut());
    }
}

#[test]
fn density_calls() {
    unsafe {
        let j = CString::new(r#"{"w":4,"h":4,"points":[[0,0],[1,0],[0,1],[2,2]]}"#).unwrap();
        let mut a = ptr::null_mut();
        assert_eq!(plk_pointset_from_json(j.as_ptr(), &mut a), PlkStatus::Ok);
        let mut out = ptr::null_mut();
        assert_eq!(plk_schnirelmann(a, 1, 1, &mut out), PlkStatus::Ok);
        assert_eq!(take(out), "3/4");
        assert_eq!(plk_tab_lower_estimate(a, 0, 1, 1, 0, 0, &mut out), PlkStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(v["value"], "1/4");
        plk_pointset_free(a);

        let pat = CString::new(r#"{"n":1,"points":[[0,0],[1,1]]}"#).unwrap();
        assert_eq!(plk_fractal_densities(pat.as_ptr(), &mut out), PlkStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(v["rect_density"], "1/2");
        assert_eq!(v["tab_density"], "1/3");
    }
}

#[test]
fn experiment_calls() {
    unsafe {
        let cfg = CString::new(r#"{"n":1,"m":1,"k":2,"k_prime":1,"mode":"exhaustive","seed":0}"#).unwrap();
        let mut out = ptr::null_mut();
        assert_eq!(plk_search_schnirelmann(cfg.as_ptr(), 0, 0, &mut out), PlkStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(v["instances_tested"], 128);

        let cfg = CString::new(
            r#"{"window":[64,64],"a":"full","b":{"family":{"kind":"axes"}},"k":2,"k_prime":1,"l":2,"q":8,"term":[[64,64]]}"#,
        )
        .unwrap();
        assert_eq!(plk_pipeline_replay(cfg.as_ptr(), &mut out), PlkStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(v["basis_case"], true);
    }
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/plunnecke.h")).unwrap();
    for sym in [
        "typedef struct PlkPointSet PlkPointSet",
        "PLK_STATUS_NULL_POINTER = 1",
        "PLK_STATUS_VIOLATION = 7",
        "plk_last_error(void)",
        "plk_pointset_new(size_t w, size_t h, struct PlkPointSet **out)",
        "plk_sumset(",
        "plk_pipeline_replay(",
        "plk_search_schnirelmann(",
    ] {
        assert!(h.contains(sym), "header lacks {sym}");
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "plunnecke.h"

int main(void) {
    PlkPointSet *a = NULL, *s = NULL;
    if (plk_pointset_new(8, 8, &a) != PLK_STATUS_OK) return 10;
    plk_pointset_insert(a, 0, 0);
    plk_pointset_insert(a, 1, 0);
    plk_pointset_insert(a, 0, 1);
    if (plk_sumset(a, a, &s) != PLK_STATUS_OK) return 11;
    if (plk_pointset_len(s) != 6) return 12;
    char *ratio = NULL;
    if (plk_schnirelmann(s, 1, 1, &ratio) != PLK_STATUS_OK) return 13;
    int bad = plk_pointset_insert(a, 99, 0) != PLK_STATUS_OUT_OF_WINDOW || strlen(plk_last_error()) == 0;
    printf("%s\n", ratio);
    plk_string_free(ratio);
    plk_pointset_free(a);
    plk_pointset_free(s);
    return bad ? 14 : 0;
}
"#;

/// Builds a C program against the generated header and static library.
#[test]
fn c_program_links_against_the_static_library() {
    // target/<profile>/deps/abi-* -> target/<profile>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap().to_path_buf();
    let lib = profile_dir.join("libplunnecke_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("ffi-c");
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("main.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let bin = dir.join("main");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "cc failed");
    let out = Command::new(&bin).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "1");
}
