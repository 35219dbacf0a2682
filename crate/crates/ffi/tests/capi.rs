use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use polytrack_ffi::*;

fn asset(name: &str) -> CString {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/assets").join(name);
    CString::new(path.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe {
        let len = pt_last_error_message(ptr::null_mut(), 0);
        let mut buf = vec![0 as std::ffi::c_char; len + 1];
        assert_eq!(pt_last_error_message(buf.as_mut_ptr(), buf.len()), len);
        CStr::from_ptr(buf.as_ptr()).to_str().unwrap().to_owned()
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(pt_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn bernstein_basis_sums_to_one() {
    let mut out = [0.0; 4];
    assert_eq!(unsafe { pt_bernstein_basis(3, 0.25, out.as_mut_ptr(), 4) }, PtStatus::Ok);
    let want = [27.0 / 64.0, 27.0 / 64.0, 9.0 / 64.0, 1.0 / 64.0];
    for (g, w) in out.iter().zip(want) {
        assert!((g - w).abs() < 1e-15);
    }
    assert_eq!(unsafe { pt_bernstein_basis(-1, 0.5, out.as_mut_ptr(), 4) }, PtStatus::Domain);
    assert!(last_error().contains("negative"));
    assert_eq!(unsafe { pt_bernstein_basis(3, 1.5, out.as_mut_ptr(), 4) }, PtStatus::Domain);
    assert_eq!(unsafe { pt_bernstein_basis(5, 0.5, out.as_mut_ptr(), 4) }, PtStatus::BufferTooSmall);
    assert_eq!(unsafe { pt_bernstein_basis(2, 0.5, ptr::null_mut(), 3) }, PtStatus::NullPointer);
}

#[test]
fn bezier_eval_matches_the_curve() {
    // Quadratic from (0,0) through control (1,2) to (2,0).
    let pts = [0.0, 0.0, 1.0, 2.0, 2.0, 0.0];
    let mut out = [0.0; 2];
    assert_eq!(unsafe { pt_bezier_eval(pts.as_ptr(), 2, 2, 0.5, 0, out.as_mut_ptr()) }, PtStatus::Ok);
    assert!((out[0] - 1.0).abs() < 1e-15 && (out[1] - 1.0).abs() < 1e-15);
    assert_eq!(unsafe { pt_bezier_eval(pts.as_ptr(), 2, 2, 0.0, 1, out.as_mut_ptr()) }, PtStatus::Ok);
    assert!((out[0] - 2.0).abs() < 1e-14 && (out[1] - 4.0).abs() < 1e-14);
    assert_eq!(unsafe { pt_bezier_eval(pts.as_ptr(), 0, 2, 0.5, 0, out.as_mut_ptr()) }, PtStatus::Dimension);
    assert_eq!(unsafe { pt_bezier_eval(pts.as_ptr(), 2, 2, -0.1, 0, out.as_mut_ptr()) }, PtStatus::Domain);
}

#[test]
fn null_handles_are_rejected() {
    let mut dim = 0;
    let mut cells = 0;
    unsafe {
        assert_eq!(pt_environment_shape(ptr::null(), &mut dim, &mut cells), PtStatus::NullPointer);
        assert!(last_error().contains("env"));
        assert_eq!(pt_environment_load(ptr::null(), &mut ptr::null_mut()), PtStatus::NullPointer);
        let mut lib = ptr::null_mut();
        assert_eq!(pt_synthesize(ptr::null(), ptr::null(), &mut lib), PtStatus::NullPointer);
        assert!(lib.is_null());
        let mut summary = std::mem::zeroed();
        assert_eq!(pt_log_summary(ptr::null(), &mut summary), PtStatus::NullPointer);
        pt_environment_free(ptr::null_mut());
        pt_gain_library_free(ptr::null_mut());
        pt_log_free(ptr::null_mut());
    }
}

#[test]
fn load_errors_carry_their_kind() {
    unsafe {
        let mut env = ptr::null_mut();
        let missing = CString::new("/nonexistent/env.json").unwrap();
        assert_eq!(pt_environment_load(missing.as_ptr(), &mut env), PtStatus::Io);
        let bad = CString::new("{ \"dimension\": ").unwrap();
        assert_eq!(pt_environment_from_json(bad.as_ptr(), &mut env), PtStatus::Parse);
        assert!(last_error().contains("byte offset"), "{}", last_error());
        assert!(env.is_null());

        assert_eq!(pt_environment_load(asset("broken_chain.json").as_ptr(), &mut env), PtStatus::Ok);
        let mut findings = 0;
        assert_eq!(pt_environment_validate(env, &mut findings), PtStatus::Ok);
        assert!(findings > 0);
        assert!(last_error().contains("c1"));
        pt_environment_free(env);
    }
}

#[test]
fn full_pipeline_on_the_corridor() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let mut env = ptr::null_mut();
        assert_eq!(pt_environment_load(asset("corridor3.json").as_ptr(), &mut env), PtStatus::Ok);
        let (mut dim, mut cells, mut findings) = (0, 0, 1);
        assert_eq!(pt_environment_shape(env, &mut dim, &mut cells), PtStatus::Ok);
        assert_eq!((dim, cells), (2, 3));
        assert_eq!(pt_environment_validate(env, &mut findings), PtStatus::Ok);
        assert_eq!(findings, 0);

        let mut lib = ptr::null_mut();
        assert_eq!(pt_synthesize(env, ptr::null(), &mut lib), PtStatus::Ok, "{}", last_error());
        let mut len = 0;
        assert_eq!(pt_gain_library_len(lib, &mut len), PtStatus::Ok);
        assert_eq!(len, 3);
        for i in 0..len {
            let (mut mu, mut passed) = (0.0, false);
            assert_eq!(pt_gain_library_certificate(lib, i, &mut mu, &mut passed), PtStatus::Ok);
            assert!(passed && mu < 0.0);
        }
        let (mut mu, mut passed) = (0.0, false);
        assert_eq!(pt_gain_library_certificate(lib, 3, &mut mu, &mut passed), PtStatus::InvalidArgument);

        let gains = CString::new(dir.path().join("gains.json").to_str().unwrap()).unwrap();
        assert_eq!(pt_gain_library_save(lib, gains.as_ptr()), PtStatus::Ok);
        let mut reloaded = ptr::null_mut();
        assert_eq!(pt_gain_library_load(gains.as_ptr(), &mut reloaded), PtStatus::Ok);

        let x0 = [0.3, 2.2];
        let mut log = ptr::null_mut();
        let options = pt_simulation_options_default();
        assert_eq!(pt_simulate(env, reloaded, x0.as_ptr(), 2, &options, &mut log), PtStatus::Ok, "{}", last_error());
        let mut summary = std::mem::zeroed::<PtLogSummary>();
        assert_eq!(pt_log_summary(log, &mut summary), PtStatus::Ok);
        assert_eq!(summary.switches, 2);
        assert!(summary.min_h >= 0.0);
        assert!(summary.records > 10 && summary.duration > 0.0);
        let mut x = [0.0; 2];
        assert_eq!(pt_log_final_state(log, x.as_mut_ptr(), 2), PtStatus::Ok);
        assert_eq!(pt_log_final_state(log, x.as_mut_ptr(), 1), PtStatus::BufferTooSmall);
        let csv = CString::new(dir.path().join("run.csv").to_str().unwrap()).unwrap();
        assert_eq!(pt_log_write_csv(log, csv.as_ptr()), PtStatus::Ok);
        let text = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
        assert_eq!(text.lines().count(), summary.records + 1);

        let far = [-5.0, -5.0];
        let mut none = ptr::null_mut();
        assert_eq!(pt_simulate(env, lib, far.as_ptr(), 2, ptr::null(), &mut none), PtStatus::Simulation);
        assert_eq!(pt_simulate(env, lib, far.as_ptr(), 1, ptr::null(), &mut none), PtStatus::Dimension);
        assert!(none.is_null());

        let tight = PtSynthesisOptions { k_max: 1e-3, ..pt_synthesis_options_default() };
        let mut failed = ptr::null_mut();
        assert_eq!(pt_synthesize(env, &tight, &mut failed), PtStatus::Infeasible);
        assert!(failed.is_null());

        pt_log_free(log);
        pt_gain_library_free(reloaded);
        pt_gain_library_free(lib);
        pt_environment_free(env);
    }
}

#[test]
fn errors_are_per_thread() {
    let mut out = [0.0; 1];
    assert_eq!(unsafe { pt_bernstein_basis(-3, 0.5, out.as_mut_ptr(), 1) }, PtStatus::Domain);
    let here = last_error();
    std::thread::spawn(|| assert_eq!(last_error(), "")).join().unwrap();
    assert_eq!(last_error(), here);
    assert_eq!(unsafe { pt_bernstein_basis(0, 0.5, out.as_mut_ptr(), 1) }, PtStatus::Ok);
    assert_eq!(last_error(), "");
}

#[test]
fn header_declares_the_api() {
    let header = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/polytrack.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "typedef struct PtEnvironment PtEnvironment",
        "PT_STATUS_NULL_POINTER = 1",
        "pt_synthesize(",
        "pt_simulate(",
        "pt_last_error_message(",
        "pt_log_summary(",
    ] {
        assert!(text.contains(name), "missing {name}");
    }
    if let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .status()
    {
        assert!(status.success(), "header does not compile");
    }
}
