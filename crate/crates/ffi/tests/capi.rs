use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use spinjunction_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 512];
    let n = unsafe { sj_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0, "no error recorded");
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn bessel_and_decay_rate() {
    assert_eq!(sj_bessel_j0(0.0), 1.0);
    let (mut re, mut im, mut near) = (0.0, 0.0, 0);
    let s = unsafe { sj_decay_rate(0.0, 1.0, 0.0, 1.0, 1e-12, &mut re, &mut im, &mut near) };
    assert_eq!(s, SjStatus::Ok);
    assert!((re - 0.25).abs() < 1e-9 && im.abs() < 1e-9);
    assert_eq!(near, 0);
    let s = unsafe { sj_decay_rate(0.0, -1.0, 0.0, 1.0, 1e-12, &mut re, &mut im, &mut near) };
    assert_eq!(s, SjStatus::InvalidArgument);
    assert!(last_error().contains(".j"));
}

#[test]
fn null_arguments_are_reported() {
    let s = unsafe { sj_decay_rate(0.0, 1.0, 0.0, 1.0, 1e-12, ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(s, SjStatus::NullPointer);
    assert!(last_error().contains("re"));
    assert_eq!(unsafe { sj_trace_len(ptr::null()) }, 0);
    unsafe {
        sj_trace_free(ptr::null_mut());
        sj_spec_free(ptr::null_mut());
        sj_string_free(ptr::null_mut());
    }
}

#[test]
fn spec_round_trip_and_overrides() {
    let mut spec = ptr::null_mut();
    assert_eq!(unsafe { sj_spec_new(c("born").as_ptr(), &mut spec) }, SjStatus::Ok);
    assert_eq!(unsafe { sj_spec_set(spec, c("left.jz").as_ptr(), c("0.5").as_ptr()) }, SjStatus::Ok);
    let json = unsafe { sj_spec_to_json(spec) };
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    unsafe { sj_string_free(json) };
    let mut again = ptr::null_mut();
    assert_eq!(unsafe { sj_spec_from_json(c(&text).as_ptr(), &mut again) }, SjStatus::Ok);
    let json2 = unsafe { sj_spec_to_json(again) };
    assert_eq!(unsafe { CStr::from_ptr(json2) }.to_str().unwrap(), text);
    unsafe {
        sj_string_free(json2);
        sj_spec_free(again);
        sj_spec_free(spec);
    }
    let mut bad = ptr::null_mut();
    assert_eq!(unsafe { sj_spec_new(c("nonsense").as_ptr(), &mut bad) }, SjStatus::InvalidArgument);
    assert!(bad.is_null());
}

#[test]
fn steady_handle_matches_library() {
    let mut spec = ptr::null_mut();
    unsafe { sj_spec_new(c("steady").as_ptr(), &mut spec) };
    let mut st = ptr::null_mut();
    assert_eq!(unsafe { sj_steady_compute(spec, SjGenerator::Redfield, &mut st) }, SjStatus::Ok);
    let (mut l, mut r, mut t) = (0.0, 0.0, 0.0);
    unsafe { sj_steady_currents(st, &mut l, &mut r, &mut t) };
    assert!((t - 0.5 * (l - r)).abs() < 1e-18);
    let direct = spinjunction::pipeline::steady_for(
        &spinjunction::pipeline::RunSpec::new(spinjunction::pipeline::Mode::Steady),
        spinjunction::steady::GeneratorKind::Redfield,
    )
    .unwrap();
    assert_eq!(t, direct.currents.unwrap().total);
    let mut re = [0.0; 16];
    let mut im = [0.0; 16];
    unsafe { sj_steady_density(st, re.as_mut_ptr(), im.as_mut_ptr()) };
    let tr: f64 = (0..4).map(|k| re[5 * k]).sum();
    assert!((tr - 1.0).abs() < 1e-12);
    unsafe {
        sj_steady_free(st);
        sj_spec_free(spec);
    }
}

#[test]
fn trace_handle_and_buffers() {
    let mut spec = ptr::null_mut();
    unsafe {
        sj_spec_new(c("kubo").as_ptr(), &mut spec);
        sj_spec_set(spec, c("kubo.horizon").as_ptr(), c("5").as_ptr());
    }
    let mut tr = ptr::null_mut();
    assert_eq!(unsafe { sj_trace_compute(spec, SjMethod::Kubo, &mut tr) }, SjStatus::Ok);
    let n = unsafe { sj_trace_len(tr) };
    assert_eq!(n, 501);
    let mut times = vec![0.0; n];
    let mut total = vec![0.0; n];
    assert_eq!(unsafe { sj_trace_copy(tr, times.as_mut_ptr(), total.as_mut_ptr(), n - 1) }, SjStatus::BufferTooSmall);
    assert_eq!(unsafe { sj_trace_copy(tr, times.as_mut_ptr(), total.as_mut_ptr(), n) }, SjStatus::Ok);
    assert_eq!(times[n - 1], 5.0);
    let mut avg = 0.0;
    assert_eq!(unsafe { sj_trace_time_average(tr, 5.0, &mut avg) }, SjStatus::Ok);
    assert!(avg > 0.0);
    unsafe {
        sj_trace_free(tr);
        sj_spec_free(spec);
    }
}

#[test]
fn rectification_codes() {
    let (mut r, mut d) = (0.0, 0.0);
    assert_eq!(unsafe { sj_rectification(3.0, 1.0, &mut r, &mut d) }, SjStatus::Ok);
    assert_eq!(r, 0.5);
    assert_eq!(d, 1.5);
    assert_eq!(unsafe { sj_rectification(0.0, 0.0, &mut r, &mut d) }, SjStatus::NumericFailure);
}

#[test]
fn run_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ptr::null_mut();
    unsafe { sj_spec_new(c("correlations").as_ptr(), &mut spec) };
    let mut bundle = ptr::null_mut();
    let out = c(dir.path().to_str().unwrap());
    assert_eq!(unsafe { sj_run(spec, out.as_ptr(), &mut bundle) }, SjStatus::Ok);
    let mut v = -1.0;
    assert_eq!(unsafe { sj_bundle_summary(bundle, c("left_max_deviation_from_hp").as_ptr(), &mut v) }, SjStatus::Ok);
    assert_eq!(v, 0.0);
    assert_eq!(unsafe { sj_bundle_summary(bundle, c("missing").as_ptr(), &mut v) }, SjStatus::InvalidArgument);
    assert_eq!(unsafe { sj_bundle_warning_count(bundle) }, 0);
    assert!(dir.path().join("manifest.json").exists());
    unsafe {
        sj_bundle_free(bundle);
        sj_spec_free(spec);
    }
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/spinjunction.h")).unwrap();
    for name in [
        "sj_last_error", "sj_bessel_j0", "sj_decay_rate", "sj_spec_new", "sj_spec_set", "sj_run",
        "sj_steady_compute", "sj_steady_density", "sj_trace_compute", "sj_trace_copy", "SJ_STATUS_NULL_POINTER",
        "typedef struct SjSteady SjSteady",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

/// Compile a C program against the generated header and the shared library.
#[test]
fn c_program_links_and_runs() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let exe = std::env::current_exe().unwrap();
    // the test binary sits next to the freshly built shared library in `deps/`
    let lib_dir = exe.parent().unwrap().to_path_buf();
    if !lib_dir.join("libspinjunction_ffi.so").exists() {
        eprintln!("shared library not found in {}; skipping", lib_dir.display());
        return;
    }
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let tmp = tempfile::tempdir().unwrap();
    let bin = tmp.path().join("smoke");
    let status = Command::new(cc)
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg("-L")
        .arg(&lib_dir)
        .arg("-lspinjunction_ffi")
        .arg("-lm")
        .arg("-o")
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).env("LD_LIBRARY_PATH", &lib_dir).output().unwrap();
    assert!(out.status.success(), "smoke program exited with {:?}", out.status.code());
    let value: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!(value > 0.0);
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
