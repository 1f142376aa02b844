//! C ABI for dualctl.
//!
//! Objects are opaque handles created by `dc_*_new` style functions and
//! released with the matching `dc_*_free`. Every fallible call returns a
//! [`DcStatus`]; the message of the last failure on the calling thread is
//! available through [`dc_last_error`]. Matrices are passed row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dualctl::bounds::{compute_constants, ConstantsOptions, Method};
use dualctl::estimation::GaussianPrior;
use dualctl::linalg::Mat;
use dualctl::model::PerformanceIndex;
use dualctl::spectral::{generate_input, ExplorationPlan, FrequencyGrid};
use dualctl::synthesis::{extract_controller, solve_dual_problem, solve_exploration_problem, Candidate, DualOptions, GainScheduledController};
use dualctl::Error;

/// Status codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DcStatus {
    Ok = 0,
    NullPointer = 1,
    Dimension = 2,
    InvalidArgument = 3,
    Infeasible = 4,
    UncertaintyTooLarge = 5,
    Solver = 6,
    Singular = 7,
    BufferTooSmall = 8,
    Panic = 9,
    Other = 10,
}

/// Gaussian prior over (A, B).
pub struct DcPrior(GaussianPrior);

/// Exploration plan: frequency grid, amplitudes and certified excitation.
pub struct DcPlan(ExplorationPlan);

/// Gain-scheduled controller.
pub struct DcController(GainScheduledController);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DcStatus {
    match e {
        Error::Dimension(_) => DcStatus::Dimension,
        Error::InvalidArgument(_) | Error::Config(_) => DcStatus::InvalidArgument,
        Error::UncertaintyTooLarge(_) => DcStatus::UncertaintyTooLarge,
        Error::Unreachable | Error::Infeasible(_) => DcStatus::Infeasible,
        Error::Solver(_) => DcStatus::Solver,
        Error::Singular(_) | Error::ResolventSingular | Error::NotSchur => DcStatus::Singular,
        _ => DcStatus::Other,
    }
}

fn guard<F: FnOnce() -> Result<(), DcStatus>>(f: F) -> DcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DcStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            DcStatus::Panic
        }
    }
}

fn fail(e: Error) -> DcStatus {
    set_error(&e.to_string());
    status_of(&e)
}

fn null(what: &str) -> DcStatus {
    set_error(&format!("null pointer: {what}"));
    DcStatus::NullPointer
}

unsafe fn matrix(p: *const f64, rows: usize, cols: usize, what: &str) -> Result<Mat, DcStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = std::slice::from_raw_parts(p, rows * cols);
    Ok(Mat::from_row_slice(rows, cols, s))
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], DcStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn write_out(dst: *mut f64, cap: usize, src: &[f64]) -> Result<(), DcStatus> {
    if dst.is_null() {
        return Err(null("output buffer"));
    }
    if cap < src.len() {
        set_error(&format!("buffer holds {cap} values, {} needed", src.len()));
        return Err(DcStatus::BufferTooSmall);
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL terminated)
/// and returns the full message length; 0 when there is no error.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn dc_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Creates a prior with center (Â, B̂) (n_x × n_x and n_x × 1) and
/// credibility shape D₀ ((n_x + 1) × (n_x + 1)).
///
/// # Safety
/// Array arguments must hold the stated number of doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dc_prior_new(
    n_x: usize,
    a_hat: *const f64,
    b_hat: *const f64,
    d0: *const f64,
    delta: f64,
    out: *mut *mut DcPrior,
) -> DcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if n_x == 0 {
            return Err(fail(Error::Dimension("n_x must be positive".into())));
        }
        let a = matrix(a_hat, n_x, n_x, "a_hat")?;
        let b = matrix(b_hat, n_x, 1, "b_hat")?;
        let d = matrix(d0, n_x + 1, n_x + 1, "d0")?;
        let p = GaussianPrior::from_d0(&a, &b, d, delta).map_err(fail)?;
        *out = Box::into_raw(Box::new(DcPrior(p)));
        Ok(())
    })
}

/// Releases a prior.
///
/// # Safety
/// `p` must come from [`dc_prior_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dc_prior_free(p: *mut DcPrior) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Chi-squared critical value c_δ of a prior.
///
/// # Safety
/// `p` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dc_prior_c_delta(p: *const DcPrior, out: *mut f64) -> DcStatus {
    if p.is_null() || out.is_null() {
        return null("prior or out");
    }
    *out = (*p).0.c_delta;
    DcStatus::Ok
}

unsafe fn grid_of(t: usize, omegas: *const f64, n: usize) -> Result<FrequencyGrid, DcStatus> {
    let om = slice(omegas, n, "omegas")?;
    FrequencyGrid::from_omegas(t, om).map_err(fail)
}

/// Minimal-energy exploration plan guaranteeing D_T ⪰ `goal` with the
/// scenario constants (seeded) and the L-iteration.
///
/// # Safety
/// `omegas` holds `n_omega` values, `goal` (n_x + 1)² values row-major; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn dc_explore(
    prior: *const DcPrior,
    horizon: usize,
    omegas: *const f64,
    n_omega: usize,
    sigma_w: f64,
    goal: *const f64,
    eps: f64,
    seed: u64,
    out: *mut *mut DcPlan,
) -> DcStatus {
    guard(|| {
        if prior.is_null() || out.is_null() {
            return Err(null("prior or out"));
        }
        let p = &(*prior).0;
        let grid = grid_of(horizon, omegas, n_omega)?;
        let n = p.n_phi();
        let g = matrix(goal, n, n, "goal")?;
        let opts = ConstantsOptions { eps, beta: 1e-10, method: Method::Scenario };
        let c = compute_constants(p, &grid, sigma_w, opts, seed).map_err(fail)?;
        let o = solve_exploration_problem(p, &grid, &c, sigma_w, &g, &Candidate::Scaled, 50).map_err(fail)?;
        *out = Box::into_raw(Box::new(DcPlan(o.plan)));
        Ok(())
    })
}

/// Joint exploration plan and controller for the ℓ₂-gain level `gamma_p` on
/// the channel z = [x; u].
///
/// # Safety
/// `omegas` holds `n_omega` values; `plan_out` and `ctrl_out` valid.
#[no_mangle]
pub unsafe extern "C" fn dc_dual(
    prior: *const DcPrior,
    horizon: usize,
    omegas: *const f64,
    n_omega: usize,
    sigma_w: f64,
    gamma_p: f64,
    seed: u64,
    plan_out: *mut *mut DcPlan,
    ctrl_out: *mut *mut DcController,
) -> DcStatus {
    guard(|| {
        if prior.is_null() || plan_out.is_null() || ctrl_out.is_null() {
            return Err(null("prior or outputs"));
        }
        let p = &(*prior).0;
        let grid = grid_of(horizon, omegas, n_omega)?;
        if !(gamma_p > 0.0) {
            return Err(fail(Error::InvalidArgument("gamma_p must be positive".into())));
        }
        let perf = PerformanceIndex::default_channel(p.n_x, gamma_p);
        let opts = ConstantsOptions { eps: 0.5, beta: 1e-10, method: Method::Scenario };
        let c = compute_constants(p, &grid, sigma_w, opts, seed).map_err(fail)?;
        let d = solve_dual_problem(p, &grid, &c, sigma_w, &perf, &DualOptions::default()).map_err(fail)?;
        *plan_out = Box::into_raw(Box::new(DcPlan(d.plan)));
        *ctrl_out = Box::into_raw(Box::new(DcController(d.controller)));
        Ok(())
    })
}

/// Number of spectral lines of a plan.
///
/// # Safety
/// `plan` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn dc_plan_len(plan: *const DcPlan) -> usize {
    if plan.is_null() {
        0
    } else {
        (*plan).0.amplitudes.len()
    }
}

/// Energy bound γ_e of a plan.
///
/// # Safety
/// `plan` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dc_plan_gamma_e(plan: *const DcPlan, out: *mut f64) -> DcStatus {
    if plan.is_null() || out.is_null() {
        return null("plan or out");
    }
    *out = (*plan).0.gamma_e;
    DcStatus::Ok
}

/// Copies the line amplitudes into `out` (capacity `cap`).
///
/// # Safety
/// `out` must be valid for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn dc_plan_amplitudes(plan: *const DcPlan, out: *mut f64, cap: usize) -> DcStatus {
    guard(|| {
        if plan.is_null() {
            return Err(null("plan"));
        }
        write_out(out, cap, &(*plan).0.amplitudes)
    })
}

/// Copies the certified excitation D̄_T (row-major, (n_x + 1)²) into `out`.
///
/// # Safety
/// `out` must be valid for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn dc_plan_excitation(plan: *const DcPlan, out: *mut f64, cap: usize) -> DcStatus {
    guard(|| {
        if plan.is_null() {
            return Err(null("plan"));
        }
        let d = &(*plan).0.dbar_t;
        let rows: Vec<f64> = (0..d.nrows()).flat_map(|i| d.row(i).iter().copied().collect::<Vec<_>>()).collect();
        write_out(out, cap, &rows)
    })
}

/// Writes the T input samples u_k of a plan into `out`.
///
/// # Safety
/// `out` must be valid for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn dc_plan_input(plan: *const DcPlan, out: *mut f64, cap: usize) -> DcStatus {
    guard(|| {
        if plan.is_null() {
            return Err(null("plan"));
        }
        write_out(out, cap, &generate_input(&(*plan).0))
    })
}

/// Releases a plan.
///
/// # Safety
/// `plan` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dc_plan_free(plan: *mut DcPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Explicit feedback K (1 × n_x) at the scheduling point (Ã, B̃).
///
/// # Safety
/// `a_tilde` holds n_x², `b_tilde` n_x and `k_out` at least n_x doubles.
#[no_mangle]
pub unsafe extern "C" fn dc_controller_gain(
    ctrl: *const DcController,
    prior: *const DcPrior,
    a_tilde: *const f64,
    b_tilde: *const f64,
    k_out: *mut f64,
    cap: usize,
) -> DcStatus {
    guard(|| {
        if ctrl.is_null() || prior.is_null() {
            return Err(null("controller or prior"));
        }
        let p = &(*prior).0;
        let n = p.n_x;
        let at = matrix(a_tilde, n, n, "a_tilde")?;
        let bt = matrix(b_tilde, n, 1, "b_tilde")?;
        let (a0, b0) = p.ab();
        let k = extract_controller(&(*ctrl).0, &a0, &b0, &at, &bt).map_err(fail)?;
        write_out(k_out, cap, k.as_slice())
    })
}

/// Releases a controller.
///
/// # Safety
/// `ctrl` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dc_controller_free(ctrl: *mut DcController) {
    if !ctrl.is_null() {
        drop(Box::from_raw(ctrl));
    }
}
