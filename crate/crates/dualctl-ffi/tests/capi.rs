//! Exercises the C ABI through its Rust signatures.

use std::ptr;

use dualctl_ffi::*;

const A: [f64; 4] = [0.49, 0.49, 0.0, 0.49];
const B: [f64; 2] = [0.0, 1.0];
const OMEGAS: [f64; 3] = [0.0, 0.2, 0.4];

fn d0(scale: f64) -> [f64; 9] {
    [scale, 0.0, 0.0, 0.0, scale, 0.0, 0.0, 0.0, scale]
}

fn prior(scale: f64) -> *mut DcPrior {
    let mut p = ptr::null_mut();
    let d = d0(scale);
    let s = unsafe { dc_prior_new(2, A.as_ptr(), B.as_ptr(), d.as_ptr(), 0.01, &mut p) };
    assert_eq!(s, DcStatus::Ok);
    assert!(!p.is_null());
    p
}

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    let n = unsafe { dc_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0);
    let c = unsafe { std::ffi::CStr::from_ptr(buf.as_ptr()) };
    c.to_string_lossy().into_owned()
}

#[test]
fn prior_round_trip() {
    let p = prior(1e3);
    let mut c = 0.0;
    assert_eq!(unsafe { dc_prior_c_delta(p, &mut c) }, DcStatus::Ok);
    // chi-squared 0.99 quantile with 6 degrees of freedom
    assert!((c - 16.811893829770927).abs() < 1e-6, "{c}");
    unsafe { dc_prior_free(p) };
}

#[test]
fn null_and_dimension_errors() {
    let d = d0(1.0);
    let s = unsafe { dc_prior_new(2, ptr::null(), B.as_ptr(), d.as_ptr(), 0.01, &mut ptr::null_mut()) };
    assert_eq!(s, DcStatus::NullPointer);
    assert!(last_error().contains("a_hat"));
    let s = unsafe { dc_prior_new(0, A.as_ptr(), B.as_ptr(), d.as_ptr(), 0.01, &mut ptr::null_mut()) };
    assert_eq!(s, DcStatus::Dimension);
    let s = unsafe { dc_prior_new(2, A.as_ptr(), B.as_ptr(), d.as_ptr(), 0.01, ptr::null_mut()) };
    assert_eq!(s, DcStatus::NullPointer);
    unsafe {
        dc_prior_free(ptr::null_mut());
        dc_plan_free(ptr::null_mut());
        dc_controller_free(ptr::null_mut());
    }
    assert_eq!(unsafe { dc_plan_len(ptr::null()) }, 0);
}

#[test]
fn explore_meets_goal() {
    let p = prior(1e3);
    let goal = [1e5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let mut plan = ptr::null_mut();
    let s = unsafe { dc_explore(p, 100, OMEGAS.as_ptr(), OMEGAS.len(), 1.0, goal.as_ptr(), 0.5, 7, &mut plan) };
    assert_eq!(s, DcStatus::Ok, "{}", last_error());
    let n = unsafe { dc_plan_len(plan) };
    assert_eq!(n, 3);
    let mut amps = vec![0.0; n];
    assert_eq!(unsafe { dc_plan_amplitudes(plan, amps.as_mut_ptr(), n) }, DcStatus::Ok);
    let mut gamma_e = 0.0;
    assert_eq!(unsafe { dc_plan_gamma_e(plan, &mut gamma_e) }, DcStatus::Ok);
    let norm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!(norm > 0.0 && norm <= gamma_e * (1.0 + 1e-9));
    let mut dbar = [0.0; 9];
    assert_eq!(unsafe { dc_plan_excitation(plan, dbar.as_mut_ptr(), 9) }, DcStatus::Ok);
    assert!(dbar[0] >= goal[0] * (1.0 - 1e-6), "{}", dbar[0]);
    let mut u = vec![0.0; 100];
    assert_eq!(unsafe { dc_plan_input(plan, u.as_mut_ptr(), 100) }, DcStatus::Ok);
    assert!(u.iter().any(|x| *x != 0.0));
    let mut small = [0.0; 1];
    assert_eq!(unsafe { dc_plan_input(plan, small.as_mut_ptr(), 1) }, DcStatus::BufferTooSmall);
    unsafe {
        dc_plan_free(plan);
        dc_prior_free(p);
    }
}

#[test]
fn large_uncertainty_is_reported() {
    let p = prior(1e-2);
    let goal = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let mut plan = ptr::null_mut();
    let s = unsafe { dc_explore(p, 100, OMEGAS.as_ptr(), OMEGAS.len(), 1.0, goal.as_ptr(), 0.5, 7, &mut plan) };
    assert_eq!(s, DcStatus::UncertaintyTooLarge);
    assert!(plan.is_null());
    unsafe { dc_prior_free(p) };
}

#[test]
fn dual_gives_stabilizing_gain() {
    let p = prior(1e3);
    let mut plan = ptr::null_mut();
    let mut ctrl = ptr::null_mut();
    let s = unsafe { dc_dual(p, 100, OMEGAS.as_ptr(), OMEGAS.len(), 1.0, 10.0, 3, &mut plan, &mut ctrl) };
    assert_eq!(s, DcStatus::Ok, "{}", last_error());
    let mut k = [0.0; 2];
    let s = unsafe { dc_controller_gain(ctrl, p, A.as_ptr(), B.as_ptr(), k.as_mut_ptr(), 2) };
    assert_eq!(s, DcStatus::Ok, "{}", last_error());
    // closed loop A + B K for the 2 × 2 chain
    let acl = [A[0], A[1], A[2] + k[0], A[3] + k[1]];
    let tr = acl[0] + acl[3];
    let det = acl[0] * acl[3] - acl[1] * acl[2];
    // Jury conditions for a real 2 × 2 matrix
    assert!(det.abs() < 1.0 && tr.abs() < 1.0 + det, "K = {k:?}");
    unsafe {
        dc_controller_free(ctrl);
        dc_plan_free(plan);
        dc_prior_free(p);
    }
}

#[test]
fn dual_below_nominal_is_infeasible() {
    let p = prior(1e3);
    let mut plan = ptr::null_mut();
    let mut ctrl = ptr::null_mut();
    let s = unsafe { dc_dual(p, 100, OMEGAS.as_ptr(), OMEGAS.len(), 1.0, 0.5, 3, &mut plan, &mut ctrl) };
    assert_eq!(s, DcStatus::Infeasible);
    assert!(plan.is_null() && ctrl.is_null());
    let s = unsafe { dc_dual(p, 100, OMEGAS.as_ptr(), OMEGAS.len(), 1.0, -1.0, 3, &mut plan, &mut ctrl) };
    assert_eq!(s, DcStatus::InvalidArgument);
    unsafe { dc_prior_free(p) };
}
