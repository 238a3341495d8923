//! Exercises the C ABI from Rust and from a small C program built against
//! the generated header.

use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use artifact_repair::datasets::{synth_corpus, SynthPlan};
use artifact_repair_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn cpath(p: &Path) -> CString {
    cstr(p.to_str().unwrap())
}

fn last_error() -> String {
    let p = ar_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn corpus(dir: &Path) -> PathBuf {
    let root = dir.join("corpus");
    synth_corpus(&root, &SynthPlan::balanced(1, 1), 5).unwrap();
    root
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(ar_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn config_round_trip_and_errors() {
    unsafe {
        let mut cfg: *mut ArConfig = ptr::null_mut();
        assert_eq!(ar_config_default(&mut cfg), ArStatus::Ok);
        let mut text: *mut c_char = ptr::null_mut();
        assert_eq!(ar_config_to_toml(cfg, &mut text), ArStatus::Ok);
        let dumped = CStr::from_ptr(text).to_owned();
        ar_string_free(text);
        ar_config_free(cfg);

        let mut again: *mut ArConfig = ptr::null_mut();
        assert_eq!(ar_config_from_toml(dumped.as_ptr(), &mut again), ArStatus::Ok);
        let mut text2: *mut c_char = ptr::null_mut();
        assert_eq!(ar_config_to_toml(again, &mut text2), ArStatus::Ok);
        assert_eq!(CStr::from_ptr(text2), dumped.as_c_str());
        ar_string_free(text2);

        assert_eq!(ar_config_set_seeds(again, ptr::null(), 0), ArStatus::InvalidArgument);
        let seeds = [3u64, 4];
        assert_eq!(ar_config_set_seeds(again, seeds.as_ptr(), seeds.len()), ArStatus::Ok);
        ar_config_free(again);

        let mut bad: *mut ArConfig = ptr::null_mut();
        let status = ar_config_from_toml(cstr("[detector]\nbogus = 1\n").as_ptr(), &mut bad);
        assert_eq!(status, ArStatus::Config);
        assert!(bad.is_null());
        assert!(last_error().contains("bogus"));

        let status = ar_config_load(cstr("/nonexistent/pipeline.toml").as_ptr(), &mut bad);
        assert_eq!(status, ArStatus::MissingFile);
        assert_eq!(ar_config_default(ptr::null_mut()), ArStatus::NullArgument);
    }
}

#[test]
fn images_and_ssim() {
    unsafe {
        let px: Vec<u8> = (0..8 * 8 * 3).map(|i| (i * 7 % 251) as u8).collect();
        let mut a: *mut ArImage = ptr::null_mut();
        assert_eq!(ar_image_new(8, 8, px.as_ptr(), px.len(), &mut a), ArStatus::Ok);
        assert_eq!((ar_image_width(a), ar_image_height(a)), (8, 8));
        let mut len = 0usize;
        let data = ar_image_data(a, &mut len);
        assert_eq!(std::slice::from_raw_parts(data, len), &px[..]);

        let dir = tempfile::tempdir().unwrap();
        let path = cpath(&dir.path().join("a.png"));
        assert_eq!(ar_image_save_png(a, path.as_ptr()), ArStatus::Ok);
        let mut b: *mut ArImage = ptr::null_mut();
        assert_eq!(ar_image_load_png(path.as_ptr(), &mut b), ArStatus::Ok);
        let mut s = 0.0;
        assert_eq!(ar_ssim(a, b, &mut s), ArStatus::Ok);
        assert_eq!(s, 1.0);

        let mut small: *mut ArImage = ptr::null_mut();
        assert_eq!(ar_image_new(2, 2, px.as_ptr(), 12, &mut small), ArStatus::Ok);
        assert_eq!(ar_ssim(a, small, &mut s), ArStatus::DimensionMismatch);
        assert_eq!(ar_image_new(3, 3, px.as_ptr(), 12, &mut small as *mut _), ArStatus::InvalidArgument);

        ar_image_free(a);
        ar_image_free(b);
        ar_image_free(small);
        ar_image_free(ptr::null_mut());
        assert!(ar_image_data(ptr::null(), ptr::null_mut()).is_null());
    }
}

#[test]
fn detect_repair_and_write() {
    let dir = tempfile::tempdir().unwrap();
    let root = corpus(dir.path());
    unsafe {
        let mut cfg: *mut ArConfig = ptr::null_mut();
        assert_eq!(ar_config_default(&mut cfg), ArStatus::Ok);
        let mut inst: *mut ArInstance = ptr::null_mut();
        assert_eq!(ar_instance_load(cpath(&root).as_ptr(), cstr("color_texture_000").as_ptr(), &mut inst), ArStatus::Ok);

        let mut det: *mut ArDetection = ptr::null_mut();
        assert_eq!(ar_detect(cfg, inst, &mut det), ArStatus::Ok);
        assert_eq!(ar_detection_count(det), 1);
        assert_eq!(CStr::from_ptr(ar_detection_class(det, 0)).to_str().unwrap(), "ColorTexture");
        assert!(ar_detection_area(det, 0) > 0);
        assert!(ar_detection_class(det, 5).is_null());
        ar_detection_free(det);

        let mut rep: *mut ArRepair = ptr::null_mut();
        assert_eq!(ar_repair(cfg, inst, cstr("mock:oracle").as_ptr(), &mut rep), ArStatus::Ok);
        assert_eq!(ar_repair_report_count(rep), 1);
        let mut seed = 0u64;
        assert!(ar_repair_chosen_seed(rep, &mut seed));
        let mut img: *mut ArImage = ptr::null_mut();
        assert_eq!(ar_repair_image(rep, &mut img), ArStatus::Ok);
        let mut target: *mut ArImage = ptr::null_mut();
        assert_eq!(ar_image_load_png(cpath(&root.join("color_texture_000/target.png")).as_ptr(), &mut target), ArStatus::Ok);
        let mut s = 0.0;
        assert_eq!(ar_ssim(img, target, &mut s), ArStatus::Ok);
        assert!(s > 0.99, "ssim {s}");

        let out = dir.path().join("out");
        assert_eq!(ar_repair_write(rep, cpath(&out).as_ptr()), ArStatus::Ok);
        assert!(out.join("repaired.png").exists());
        assert!(out.join("repair.json").exists());

        assert_eq!(ar_repair(cfg, inst, cstr("ftp:nowhere").as_ptr(), &mut rep), ArStatus::InvalidArgument);
        assert!(last_error().contains("ftp"));

        ar_image_free(img);
        ar_image_free(target);
        ar_repair_free(rep);
        ar_instance_free(inst);

        assert_eq!(ar_instance_load(cpath(&root).as_ptr(), cstr("nope").as_ptr(), &mut inst), ArStatus::NotFound);
        assert_eq!(ar_instance_load_dir(cpath(&root.join("clean_000")).as_ptr(), ArTask::PoseTransfer, &mut inst), ArStatus::Ok);
        let mut det: *mut ArDetection = ptr::null_mut();
        assert_eq!(ar_detect(cfg, inst, &mut det), ArStatus::Ok);
        assert_eq!(ar_detection_count(det), 0);
        ar_detection_free(det);
        ar_instance_free(inst);
        ar_config_free(cfg);
    }
}

#[test]
fn corpus_validation_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let root = corpus(dir.path());
    unsafe {
        let mut violations = 99usize;
        let mut json: *mut c_char = ptr::null_mut();
        assert_eq!(ar_validate_corpus(cpath(&root).as_ptr(), &mut violations, &mut json), ArStatus::Ok);
        assert_eq!(violations, 0);
        let report: serde_json::Value = serde_json::from_slice(CStr::from_ptr(json).to_bytes()).unwrap();
        assert!(report.is_object());
        ar_string_free(json);

        let mut cfg: *mut ArConfig = ptr::null_mut();
        assert_eq!(ar_config_default(&mut cfg), ArStatus::Ok);
        let out = dir.path().join("eval");
        let mut failures = 99usize;
        let status = ar_eval(cpath(&root).as_ptr(), cfg, cstr("mock:oracle").as_ptr(), cpath(&out).as_ptr(), &mut failures);
        assert_eq!(status, ArStatus::Ok, "{}", last_error());
        assert_eq!(failures, 0);
        assert!(out.join("eval.csv").exists());
        ar_config_free(cfg);

        std::fs::remove_file(root.join("deformation_000/target.png")).unwrap();
        assert_eq!(ar_validate_corpus(cpath(&root).as_ptr(), &mut violations, ptr::null_mut()), ArStatus::Ok);
        assert_eq!(violations, 1);
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "artifact_repair.h"

int main(void) {
    ArConfig *cfg = NULL;
    if (ar_config_default(&cfg) != AR_STATUS_OK) return 1;
    char *text = NULL;
    if (ar_config_to_toml(cfg, &text) != AR_STATUS_OK) return 2;
    if (strstr(text, "[detector]") == NULL) return 3;
    ar_string_free(text);
    ar_config_free(cfg);

    ArConfig *bad = NULL;
    if (ar_config_from_toml("[nope]\n", &bad) != AR_STATUS_CONFIG) return 4;
    if (ar_last_error() == NULL) return 5;

    unsigned char px[4 * 4 * 3];
    memset(px, 120, sizeof px);
    ArImage *a = NULL, *b = NULL;
    if (ar_image_new(4, 4, px, sizeof px, &a) != AR_STATUS_OK) return 6;
    if (ar_image_new(4, 4, px, sizeof px, &b) != AR_STATUS_OK) return 7;
    double s = 0.0;
    if (ar_ssim(a, b, &s) != AR_STATUS_OK || s != 1.0) return 8;
    ar_image_free(a);
    ar_image_free(b);
    printf("%s\n", ar_version());
    return 0;
}
"#;

#[test]
fn header_compiles_and_links_from_c() {
    let header_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(header_dir.join("artifact_repair.h").exists());
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler found; skipping the C link check");
        return;
    }
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libartifact_repair_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let exe = dir.path().join("smoke");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let o = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .output()
        .unwrap();
    assert!(o.status.success(), "cc failed:\n{}", String::from_utf8_lossy(&o.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
