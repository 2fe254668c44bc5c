use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use biconvex_ffi::*;

const SMALL: &str = "var x(2) nonneg\nvar y(2) nonneg\nparam c(2) = [1, 2]\n\
                     minimize transpose(c) @ x + sum(y) + transpose(x) @ y\nsubject to\n  sum(x) >= 1\n  sum(y) >= 1\n\
                     partition [x] [y]\n";

fn last_error() -> String {
    unsafe { CStr::from_ptr(bcx_last_error()) }
        .to_str()
        .unwrap()
        .to_string()
}

fn load(text: &str) -> (BcxCode, *mut BcxProblem) {
    let text = CString::new(text).unwrap();
    let mut p = ptr::null_mut();
    let code = unsafe { bcx_problem_from_text(text.as_ptr(), ptr::null(), &mut p) };
    (code, p)
}

fn take_string(s: *mut c_char) -> String {
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { bcx_string_free(s) };
    out
}

#[test]
fn solve_round_trip() {
    let (code, p) = load(SMALL);
    assert_eq!(code, BcxCode::Ok, "{}", last_error());
    let mut compliant = false;
    let mut verdict = ptr::null_mut();
    assert_eq!(unsafe { bcx_check_dbcp(p, &mut compliant, &mut verdict) }, BcxCode::Ok);
    assert!(compliant);
    let v: serde_json::Value = serde_json::from_str(&take_string(verdict)).unwrap();
    assert_eq!(v["dbcp"], true);

    let opts = BcxOptions {
        seed: 4,
        ..bcx_options_default()
    };
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { bcx_solve(p, &opts, &mut r) }, BcxCode::Ok, "{}", last_error());
    assert_eq!(unsafe { bcx_report_status(r) }, BcxStatus::Converged);
    assert!(unsafe { bcx_report_iterations(r) } >= 1);
    let objective = unsafe { bcx_report_objective(r) };
    // x = e1, y at either coordinate: 1 + 1 + x'y, and x'y = 0 is reachable
    assert!((objective - 2.0).abs() < 1e-5, "{objective}");

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { bcx_report_json(r, &mut json) }, BcxCode::Ok);
    let j: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
    assert_eq!(j["status"], "converged");
    assert_eq!(j["objective"].as_f64().unwrap(), objective);
    unsafe {
        bcx_report_free(r);
        bcx_problem_free(p);
    }
}

#[test]
fn max_iters_still_yields_a_report() {
    let (_, p) = load(SMALL);
    let opts = BcxOptions {
        max_iters: 1,
        ..bcx_options_default()
    };
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { bcx_solve(p, &opts, &mut r) }, BcxCode::Ok);
    assert_eq!(unsafe { bcx_report_status(r) }, BcxStatus::MaxIters);
    unsafe {
        bcx_report_free(r);
        bcx_problem_free(p);
    }
}

#[test]
fn failures_set_codes_and_messages() {
    let (code, p) = load("var x(1)\nminimize x *\npartition [x] []\n");
    assert_eq!(code, BcxCode::Parse);
    assert!(p.is_null());
    assert!(last_error().contains("3:1: syntax error"), "{}", last_error());

    let (code, p) = load("var x(1)\nvar y(1)\nvar z(1)\nminimize x * y + y * z + z * x\npartition [x] [y]\n");
    assert_eq!(code, BcxCode::Ok);
    let mut compliant = true;
    assert_eq!(
        unsafe { bcx_check_dbcp(p, &mut compliant, ptr::null_mut()) },
        BcxCode::Ok
    );
    assert!(!compliant);
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { bcx_solve(p, ptr::null(), &mut r) }, BcxCode::NotDbcp);
    assert!(r.is_null());
    assert!(last_error().contains("interaction-cycle"), "{}", last_error());
    unsafe { bcx_problem_free(p) };

    let (_, p) = load(SMALL);
    let bad = BcxOptions {
        lbd: -1.0,
        ..bcx_options_default()
    };
    assert_eq!(unsafe { bcx_solve(p, &bad, &mut r) }, BcxCode::Solver);
    assert!(last_error().contains("lbd"), "{}", last_error());
    unsafe { bcx_problem_free(p) };

    let invalid = [0xffu8, 0];
    let mut p = ptr::null_mut();
    let code = unsafe { bcx_problem_from_text(invalid.as_ptr().cast(), ptr::null(), &mut p) };
    assert_eq!(code, BcxCode::Utf8);
}

#[test]
fn null_arguments_are_rejected() {
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(
            bcx_problem_from_text(ptr::null(), ptr::null(), &mut p),
            BcxCode::NullPointer
        );
        assert_eq!(
            bcx_problem_from_text(c"x".as_ptr(), ptr::null(), ptr::null_mut()),
            BcxCode::NullPointer
        );
        assert_eq!(
            bcx_check_dbcp(ptr::null(), ptr::null_mut(), ptr::null_mut()),
            BcxCode::NullPointer
        );
        let mut r = ptr::null_mut();
        assert_eq!(bcx_solve(ptr::null(), ptr::null(), &mut r), BcxCode::NullPointer);
        assert_eq!(bcx_report_json(ptr::null(), ptr::null_mut()), BcxCode::NullPointer);
        assert!(bcx_report_objective(ptr::null()).is_nan());
        assert_eq!(bcx_report_iterations(ptr::null()), 0);
        bcx_problem_free(ptr::null_mut());
        bcx_report_free(ptr::null_mut());
        bcx_string_free(ptr::null_mut());
    }
    assert!(!last_error().is_empty());
    let version = unsafe { CStr::from_ptr(bcx_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}

#[test]
fn csv_paths_use_base_dir() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.csv"), "3\n5\n").unwrap();
    let text = CString::new(
        "var x(2) nonneg\nvar y(1) nonneg\nparam c(2) = @csv(\"c.csv\")\n\
         minimize transpose(c) @ x + y\nsubject to\n  sum(x) >= 1\npartition [x] [y]\n",
    )
    .unwrap();
    let base = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut p = ptr::null_mut();
    let code = unsafe { bcx_problem_from_text(text.as_ptr(), base.as_ptr(), &mut p) };
    assert_eq!(code, BcxCode::Ok, "{}", last_error());
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { bcx_solve(p, ptr::null(), &mut r) }, BcxCode::Ok);
    assert!((unsafe { bcx_report_objective(r) } - 3.0).abs() < 1e-5);
    unsafe {
        bcx_report_free(r);
        bcx_problem_free(p);
    }
}

/// Compile and run a C program against the generated header and static library.
#[test]
fn c_program_links_against_header() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // test binaries live in <target>/<profile>/deps, next to the archive
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let lib = [deps.join("libbiconvex_ffi.a"), deps.join("../libbiconvex_ffi.a")]
        .into_iter()
        .find(|p| p.exists())
        .expect("static library next to the test binary");
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{stdout}{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("status 0"), "{stdout}");
    assert!(stdout.contains("not dbcp 4"), "{stdout}");
}
