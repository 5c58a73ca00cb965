//! Exercises the C ABI from Rust and from a C program linked against the
//! static library.

use chanflow_ffi::*;
use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

fn last_error() -> Option<String> {
    let p = chanflow_last_error();
    if p.is_null() {
        return None;
    }
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { chanflow_string_free(p) };
    Some(s)
}

fn small_config() -> *mut ChanflowConfig {
    let json = CString::new(r#"{"grid": {"nodes": [17]}, "sweep": {"eps": [0.02, 0.01, 0.005, 0.002], "audits": false}}"#).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { chanflow_config_from_json(json.as_ptr(), &mut cfg) }, ChanflowStatus::Ok);
    assert!(!cfg.is_null());
    cfg
}

#[test]
fn version_is_static_string() {
    let v = unsafe { CStr::from_ptr(chanflow_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_reported() {
    assert_eq!(unsafe { chanflow_config_default(ptr::null_mut()) }, ChanflowStatus::NullPointer);
    assert!(last_error().unwrap().contains("NULL"));
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { chanflow_sweep_run(ptr::null(), &mut out) }, ChanflowStatus::NullPointer);
    assert!(out.is_null());
    unsafe {
        chanflow_config_free(ptr::null_mut());
        chanflow_sweep_free(ptr::null_mut());
        chanflow_string_free(ptr::null_mut());
    }
}

#[test]
fn invalid_config_is_a_config_error() {
    let json = CString::new(r#"{"sweep": {"eps": [0.01, 0.1]}}"#).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { chanflow_config_from_json(json.as_ptr(), &mut cfg) }, ChanflowStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().unwrap().contains("decreasing"));

    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { chanflow_config_default(&mut cfg) }, ChanflowStatus::Ok);
    assert!(last_error().is_none());
    let bad = [0.1, 0.2];
    assert_eq!(unsafe { chanflow_config_set_eps(cfg, bad.as_ptr(), 2) }, ChanflowStatus::Config);
    assert_eq!(unsafe { chanflow_config_set_grid(cfg, 3) }, ChanflowStatus::Config);
    let mut text = ptr::null_mut();
    assert_eq!(unsafe { chanflow_config_to_json(cfg, &mut text) }, ChanflowStatus::Ok);
    let s = unsafe { CStr::from_ptr(text) }.to_str().unwrap().to_string();
    unsafe { chanflow_string_free(text) };
    // The rejected edits left the configuration unchanged.
    assert!(s.contains("129"));
    unsafe { chanflow_config_free(cfg) };
}

#[test]
fn sweep_round_trip() {
    let cfg = small_config();
    let mut sw = ptr::null_mut();
    assert_eq!(unsafe { chanflow_sweep_run(cfg, &mut sw) }, ChanflowStatus::Ok, "{:?}", last_error());
    let mut n = 0usize;
    assert_eq!(unsafe { chanflow_sweep_len(sw, &mut n) }, ChanflowStatus::Ok);
    assert_eq!(n, 4);
    let mut p = ChanflowPoint {
        eps: 0.0,
        eta: 0.0,
        length: 0.0,
        grid: 0,
        status: ChanflowPointStatus::Failed,
        converged: false,
        iterations: 0,
        max_ratio: 0.0,
        max_bound_ratio: 0.0,
    };
    assert_eq!(unsafe { chanflow_sweep_point(sw, 1, &mut p) }, ChanflowStatus::Ok);
    assert_eq!(p.eps, 0.01);
    assert_eq!(p.grid, 17);
    assert_eq!(p.status, ChanflowPointStatus::Ok);
    assert!(p.converged && p.iterations >= 1);
    assert!((p.eta - 0.01f64.powf(0.55)).abs() < 1e-15);
    assert_eq!(unsafe { chanflow_sweep_point(sw, 9, &mut p) }, ChanflowStatus::OutOfRange);

    let name = CString::new("gap_rho").unwrap();
    let mut v = -1.0;
    assert_eq!(unsafe { chanflow_sweep_quantity(sw, 0, name.as_ptr(), &mut v) }, ChanflowStatus::Ok);
    assert!(v > 0.0 && v < 1e-2);
    let missing = CString::new("no_such_quantity").unwrap();
    assert_eq!(unsafe { chanflow_sweep_quantity(sw, 0, missing.as_ptr(), &mut v) }, ChanflowStatus::OutOfRange);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { chanflow_sweep_summary_json(sw, &mut json) }, ChanflowStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_string();
    unsafe { chanflow_string_free(json) };
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed["points"].as_array().unwrap().len(), 4);
    assert!(parsed["fits"].is_array());

    let dir = tempfile::tempdir().unwrap();
    let d = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { chanflow_sweep_write_report(sw, d.as_ptr()) }, ChanflowStatus::Ok);
    for f in ["gaps.csv", "audits.csv", "plots.gp", "summary.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    unsafe {
        chanflow_sweep_free(sw);
        chanflow_config_free(cfg);
    }
}

#[test]
fn single_point_solve() {
    let cfg = small_config();
    let mut sw = ptr::null_mut();
    assert_eq!(unsafe { chanflow_solve_point(cfg, 0.01, 17, &mut sw) }, ChanflowStatus::Ok);
    let mut n = 0usize;
    unsafe { chanflow_sweep_len(sw, &mut n) };
    assert_eq!(n, 1);
    let mut pass = false;
    assert_eq!(unsafe { chanflow_sweep_passed(sw, &mut pass) }, ChanflowStatus::Ok);
    unsafe {
        chanflow_sweep_free(sw);
        chanflow_config_free(cfg);
    }
}

#[test]
fn rate_fit_and_profile() {
    let eps = [1e-1, 5e-2, 2e-2, 1e-2, 5e-3];
    let vals: Vec<f64> = eps.iter().map(|e: &f64| 2.0 * e.powf(0.75)).collect();
    let (mut s, mut ci) = (0.0, 0.0);
    assert_eq!(unsafe { chanflow_fit_rate(eps.as_ptr(), vals.as_ptr(), 5, &mut s, &mut ci) }, ChanflowStatus::Ok);
    assert!((s - 0.75).abs() < 1e-12);
    assert_eq!(unsafe { chanflow_fit_rate(eps.as_ptr(), vals.as_ptr(), 3, &mut s, &mut ci) }, ChanflowStatus::InvalidArgument);
    assert_eq!(chanflow_shear_profile(1.0, 1.0, 1.0, 1.0), 3.0);
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

/// Directory holding the built static library (target/<profile>).
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn generated_header_declares_the_api() {
    let h = std::fs::read_to_string(crate_dir().join("include/chanflow.h")).unwrap();
    for item in [
        "typedef struct ChanflowConfig ChanflowConfig;",
        "typedef struct ChanflowSweep ChanflowSweep;",
        "CHANFLOW_STATUS_OK = 0",
        "chanflow_string_free(char *s)",
        "chanflow_last_error(void)",
        "chanflow_sweep_run(",
    ] {
        assert!(h.contains(item), "header lacks {item}");
    }
}

#[test]
fn c_program_links_and_runs() {
    let lib = artifact_dir().join("libchanflow_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include "chanflow.h"
#include <stdio.h>
#include <string.h>

int main(void) {
    ChanflowConfig *cfg = NULL;
    if (chanflow_config_from_json("{\"sweep\": {\"eps\": [0.5, 0.1]}, \"oops\": 1}", &cfg) != CHANFLOW_STATUS_CONFIG) return 1;
    char *err = chanflow_last_error();
    if (err == NULL || strstr(err, "oops") == NULL) return 2;
    chanflow_string_free(err);
    if (chanflow_config_default(&cfg) != CHANFLOW_STATUS_OK) return 3;
    if (chanflow_config_set_audits(cfg, false) != CHANFLOW_STATUS_OK) return 4;
    ChanflowSweep *sw = NULL;
    if (chanflow_solve_point(cfg, 0.01, 17, &sw) != CHANFLOW_STATUS_OK) return 5;
    ChanflowPoint p;
    if (chanflow_sweep_point(sw, 0, &p) != CHANFLOW_STATUS_OK) return 6;
    if (p.status != CHANFLOW_POINT_STATUS_OK || p.grid != 17) return 7;
    double gap = -1.0;
    if (chanflow_sweep_quantity(sw, 0, "gap_rho", &gap) != CHANFLOW_STATUS_OK || !(gap > 0.0)) return 8;
    printf("iterations=%zu gap_rho=%.3e\n", p.iterations, gap);
    chanflow_sweep_free(sw);
    chanflow_config_free(cfg);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = tmp.path().join("smoke");
    let out = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .expect("a C compiler (cc) is required");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}: {}", run.status.code(), String::from_utf8_lossy(&run.stdout));
    assert!(String::from_utf8_lossy(&run.stdout).contains("iterations="));
}
