use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use iqvip_ffi::*;

fn last_error() -> String {
    let p = iqvip_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn inertial(sigma: f64, tau: f64) -> IqvipSolverParams {
    IqvipSolverParams {
        variant: IqvipVariant::Inertial,
        sigma,
        tau,
        h: 1.0,
        max_iter: 100_000,
        stop_residual: 0.0,
        stop_error: 0.0,
    }
}

#[test]
fn constants_match_the_library() {
    let mut c = IqvipConstants::default();
    assert_eq!(iqvip_compute_constants(2.2, 2.0, 1.0, 2.0, &mut c), IqvipStatus::Ok);
    assert!((c.theta - 0.08).abs() < 1e-12);
    assert!(iqvip_last_error().is_null());

    let mut p = ptr::null_mut();
    assert_eq!(iqvip_problem_example51(&mut p), IqvipStatus::Ok);
    let mut from_problem = IqvipConstants::default();
    assert_eq!(iqvip_problem_constants(p, &mut from_problem), IqvipStatus::Ok);
    assert_eq!(c, from_problem);
    unsafe { iqvip_problem_free(p) };

    let mut cert = IqvipStepCertificate::default();
    assert_eq!(iqvip_check_discrete(c.theta, c.theta1, 0.59, 0.000146, &mut cert), IqvipStatus::Ok);
    assert!(cert.discrete_ok);
}

#[test]
fn solve_matches_published_step_count() {
    let mut p = ptr::null_mut();
    assert_eq!(iqvip_problem_example51(&mut p), IqvipStatus::Ok);
    assert_eq!(iqvip_problem_dim(p), 2);
    let mut params = inertial(0.59, 0.000146);
    params.stop_error = 0.1;
    let x0 = [7.0, 5.0];
    let mut t = ptr::null_mut();
    assert_eq!(iqvip_solve(p, &params, x0.as_ptr(), 2, &mut t), IqvipStatus::Ok);
    assert_eq!(iqvip_trace_steps_used(t), 12957);
    assert_eq!(iqvip_trace_len(t), 12958);

    let mut reason = IqvipStopReason::MaxIter;
    assert_eq!(iqvip_trace_stop_reason(t, &mut reason), IqvipStatus::Ok);
    assert_eq!(reason, IqvipStopReason::Error);

    let mut x = [0.0; 2];
    assert_eq!(iqvip_trace_point(t, 0, x.as_mut_ptr(), 2), IqvipStatus::Ok);
    assert_eq!(x, x0);
    let mut e = 0.0;
    assert_eq!(iqvip_trace_error(t, 12957, &mut e), IqvipStatus::Ok);
    assert!(e <= 0.1);

    let (mut q, mut r2) = (0.0, 0.0);
    assert_eq!(iqvip_trace_linear_rate(t, 0.5, &mut q, &mut r2), IqvipStatus::Ok);
    assert!(q > 0.0 && q < 1.0 && r2 > 0.99);

    assert_eq!(iqvip_trace_point(t, 1, x.as_mut_ptr(), 1), IqvipStatus::BufferTooSmall);
    assert_eq!(iqvip_trace_point(t, 99_999, x.as_mut_ptr(), 2), IqvipStatus::InvalidArgument);
    assert!(last_error().contains("out of range"));

    unsafe { iqvip_trace_free(t) };
    unsafe { iqvip_problem_free(p) };
}

#[test]
fn divergence_still_returns_partial_trace() {
    let mut p = ptr::null_mut();
    iqvip_problem_example51(&mut p);
    let mut t = ptr::null_mut();
    let status = iqvip_solve(p, &inertial(0.5, 50.0), [7.0, 5.0].as_ptr(), 2, &mut t);
    assert_eq!(status, IqvipStatus::Diverged);
    assert!(!t.is_null());
    assert!(iqvip_trace_len(t) > 1);
    unsafe { iqvip_trace_free(t) };
    unsafe { iqvip_problem_free(p) };
}

#[test]
fn bad_inputs_map_to_status_codes() {
    let mut p = ptr::null_mut();
    iqvip_problem_example51(&mut p);
    let mut out = [0.0; 3];
    assert_eq!(
        iqvip_problem_natural_map(p, [1.0, 2.0, 3.0].as_ptr(), 3, out.as_mut_ptr(), 3),
        IqvipStatus::DimensionMismatch
    );
    assert_eq!(
        iqvip_problem_natural_map(p, [f64::NAN, 0.0].as_ptr(), 2, out.as_mut_ptr(), 3),
        IqvipStatus::NonFinite
    );
    assert_eq!(iqvip_problem_natural_map(p, [7.0, 5.0].as_ptr(), 2, out.as_mut_ptr(), 3), IqvipStatus::Ok);
    let mut r = 0.0;
    assert_eq!(iqvip_problem_residual(p, [7.0, 5.0].as_ptr(), 2, &mut r), IqvipStatus::Ok);
    assert!((r - (out[0].hypot(out[1]))).abs() < 1e-12);
    assert_eq!(iqvip_problem_residual(ptr::null(), ptr::null(), 0, &mut r), IqvipStatus::NullPointer);
    assert_eq!(iqvip_problem_dim(ptr::null()), 0);
    unsafe { iqvip_problem_free(ptr::null_mut()) };
    unsafe { iqvip_problem_free(p) };

    let bad = CString::new("{\"matrix\": [[1]]").unwrap();
    let mut q = ptr::null_mut();
    assert_eq!(iqvip_problem_from_json(bad.as_ptr(), &mut q), IqvipStatus::Parse);
    assert!(!last_error().is_empty());
}

#[test]
fn json_problem_without_constants_reports_not_available() {
    let doc = CString::new(
        r#"{"matrix": [[2, 0], [0, 2]], "mu": 2, "family": {"kind": "whole_space"}}"#,
    )
    .unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(iqvip_problem_from_json(doc.as_ptr(), &mut p), IqvipStatus::Ok);
    let mut c = IqvipConstants::default();
    assert_eq!(iqvip_problem_constants(p, &mut c), IqvipStatus::NotAvailable);
    unsafe { iqvip_problem_free(p) };
}

#[test]
fn traffic_calls_round_trip() {
    let mut net = ptr::null_mut();
    assert_eq!(iqvip_network_traffic_demo(&mut net), IqvipStatus::Ok);
    let m = iqvip_network_controlled_count(net);
    assert_eq!(m, 3);
    let mut flows = vec![0.0; m];
    let tolls = vec![0.0; m];
    assert_eq!(iqvip_flow_map(net, tolls.as_ptr(), m, 0.0, flows.as_mut_ptr(), m), IqvipStatus::Ok);
    assert!(flows.iter().all(|&v| v >= 0.0));

    let mut params = inertial(0.6, 0.02);
    params.max_iter = 40;
    let mut t = ptr::null_mut();
    assert_eq!(iqvip_solve_tolls(net, 0.5, &params, 0.0, &mut t), IqvipStatus::Ok);
    let (mut r0, mut r1) = (0.0, 0.0);
    iqvip_trace_residual(t, 0, &mut r0);
    iqvip_trace_residual(t, iqvip_trace_len(t) - 1, &mut r1);
    assert!(r1 < r0);
    unsafe { iqvip_trace_free(t) };
    unsafe { iqvip_network_free(net) };

    let bad = CString::new(r#"{"nodes": [1], "links": []}"#).unwrap();
    let mut n2 = ptr::null_mut();
    assert_ne!(iqvip_network_from_json(bad.as_ptr(), &mut n2), IqvipStatus::Ok);
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(iqvip_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("iqvip.h");
    assert!(header.exists());
    let Some(cc) = ["cc", "clang", "gcc"].into_iter().find(|c| Command::new(c).arg("--version").output().is_ok())
    else {
        eprintln!("no C compiler; skipping header check");
        return;
    };
    for lang in ["c", "c++"] {
        let out = Command::new(cc)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg(&header)
            .output()
            .unwrap();
        assert!(out.status.success(), "{lang}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
