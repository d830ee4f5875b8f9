//! C ABI for `resexp`.
//!
//! Matrices are opaque handles created by `resexp_matrix_*` constructors and
//! released with `resexp_matrix_free`. Every fallible call returns a
//! `ResexpCode`; on failure `resexp_last_error` describes what went wrong.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use resexp::arnoldi::{expv_restarted, ArnoldiOptions, StopCriterion};
use resexp::chebyshev::{cheb_expv, ChebOptions, SpectrumScaling};
use resexp::krylov_richardson::{kr_expv, KrMode, KrOptions};
use resexp::linalg::csr::CsrMatrix;
use resexp::linalg::mmio::read_matrix_market_file;
use resexp::linalg::tridiag::Tridiagonal;
use resexp::problems::{conv_diff_2d, ConvDiffSpec};
use resexp::result::{ExpvResult, Status};
use resexp::richardson::{exp_richardson, RichardsonOptions};
use resexp::sai::{sai_expv, InnerSolver, SaiOptions};
use resexp::Error;

/// Opaque sparse matrix.
pub struct ResexpMatrix {
    inner: CsrMatrix,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResexpCode {
    Ok = 0,
    /// The result is the best iterate; the iteration budget ran out.
    BudgetExhausted = 1,
    /// The method broke down; the result is the last iterate.
    Breakdown = 2,
    NullPointer = -1,
    InvalidArgument = -2,
    DimensionMismatch = -3,
    Numerical = -4,
    Io = -5,
    Panic = -6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResexpMethod {
    Arnoldi = 0,
    ShiftInvert = 1,
    Chebyshev = 2,
    Richardson = 3,
    KrylovRichardson = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResexpCriterion {
    Residual = 0,
    Generalized = 1,
    Stagnation = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResexpInner {
    Lu = 0,
    Gmres = 1,
}

/// Solver options; obtain defaults from `resexp_default_options`.
///
/// Enumerated fields hold the integer values of `ResexpMethod`,
/// `ResexpCriterion` and `ResexpInner`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct ResexpOptions {
    pub method: i32,
    pub tol: f64,
    /// Restart length (Arnoldi) or cycle length (Krylov-Richardson).
    pub restart: usize,
    pub max_iter: usize,
    pub criterion: i32,
    pub inner: i32,
    /// Shift-and-invert parameter; `<= 0` selects `0.1 t`.
    pub gamma: f64,
    /// Krylov-Richardson only: build cycles with shift-and-invert.
    pub kr_shift_invert: bool,
    /// Richardson only: sample count of the residual.
    pub samples: usize,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct ResexpStats {
    pub iterations: usize,
    pub matvecs: usize,
    pub inner_work: usize,
    pub lu_factorizations: usize,
    pub solves: usize,
    pub residual: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::default());
}

fn code_of(e: &Error) -> ResexpCode {
    match e {
        Error::DimensionMismatch { .. } => ResexpCode::DimensionMismatch,
        Error::Io(_) => ResexpCode::Io,
        Error::Singular(_) | Error::Divergence(_) | Error::NotConverged { .. } | Error::Integrator { .. } => {
            ResexpCode::Numerical
        }
        _ => ResexpCode::InvalidArgument,
    }
}

fn fail(code: ResexpCode, msg: impl Into<String>) -> ResexpCode {
    set_error(msg);
    code
}

fn guard(f: impl FnOnce() -> ResexpCode) -> ResexpCode {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(c) => c,
        Err(_) => fail(ResexpCode::Panic, "internal panic"),
    }
}

fn into_handle(r: resexp::Result<CsrMatrix>) -> *mut ResexpMatrix {
    match r {
        Ok(inner) => {
            clear_error();
            Box::into_raw(Box::new(ResexpMatrix { inner }))
        }
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

fn guard_handle(f: impl FnOnce() -> *mut ResexpMatrix) -> *mut ResexpMatrix {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| {
        set_error("internal panic");
        ptr::null_mut()
    })
}

/// Message for the most recent failure on this thread, or an empty string.
///
/// The pointer stays valid until the next `resexp_*` call on the same thread.
#[no_mangle]
pub extern "C" fn resexp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn resexp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds an `n x n` matrix from CSR arrays (copied). Returns NULL on error.
///
/// # Safety
/// `row_ptr` must point to `n + 1` values; `col_idx` and `values` to
/// `row_ptr[n]` values each.
#[no_mangle]
pub unsafe extern "C" fn resexp_matrix_from_csr(
    n: usize,
    row_ptr: *const usize,
    col_idx: *const usize,
    values: *const f64,
) -> *mut ResexpMatrix {
    guard_handle(|| {
        if row_ptr.is_null() {
            set_error("row_ptr is NULL");
            return ptr::null_mut();
        }
        let rp = std::slice::from_raw_parts(row_ptr, n + 1).to_vec();
        let nnz = rp[n];
        if nnz > 0 && (col_idx.is_null() || values.is_null()) {
            set_error("col_idx or values is NULL");
            return ptr::null_mut();
        }
        let (ci, va) = if nnz == 0 {
            (Vec::new(), Vec::new())
        } else {
            (
                std::slice::from_raw_parts(col_idx, nnz).to_vec(),
                std::slice::from_raw_parts(values, nnz).to_vec(),
            )
        };
        into_handle(CsrMatrix::new(n, rp, ci, va))
    })
}

/// The convection-diffusion test operator on an `nx x nx` interior grid.
#[no_mangle]
pub extern "C" fn resexp_matrix_conv_diff(nx: usize, pe: f64) -> *mut ResexpMatrix {
    guard_handle(|| {
        if nx == 0 {
            set_error("nx must be positive");
            return ptr::null_mut();
        }
        into_handle(conv_diff_2d(&ConvDiffSpec::new(nx, pe)))
    })
}

/// Reads a Matrix Market coordinate file. Returns NULL on error.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn resexp_matrix_read_mtx(path: *const c_char) -> *mut ResexpMatrix {
    guard_handle(|| {
        if path.is_null() {
            set_error("path is NULL");
            return ptr::null_mut();
        }
        match CStr::from_ptr(path).to_str() {
            Ok(p) => into_handle(read_matrix_market_file(p)),
            Err(_) => {
                set_error("path is not valid UTF-8");
                ptr::null_mut()
            }
        }
    })
}

/// Dimension of the matrix, or 0 for NULL.
///
/// # Safety
/// `a` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn resexp_matrix_dim(a: *const ResexpMatrix) -> usize {
    a.as_ref().map_or(0, |m| m.inner.n())
}

/// Stored nonzeros, or 0 for NULL.
///
/// # Safety
/// `a` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn resexp_matrix_nnz(a: *const ResexpMatrix) -> usize {
    a.as_ref().map_or(0, |m| m.inner.nnz())
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `a` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn resexp_matrix_free(a: *mut ResexpMatrix) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

#[no_mangle]
pub extern "C" fn resexp_default_options() -> ResexpOptions {
    ResexpOptions {
        method: ResexpMethod::Arnoldi as i32,
        tol: 1e-8,
        restart: 100,
        max_iter: 5000,
        criterion: ResexpCriterion::Residual as i32,
        inner: ResexpInner::Lu as i32,
        gamma: 0.0,
        kr_shift_invert: false,
        samples: 20,
    }
}

fn method_of(v: i32) -> Option<ResexpMethod> {
    use ResexpMethod::*;
    [Arnoldi, ShiftInvert, Chebyshev, Richardson, KrylovRichardson]
        .into_iter()
        .find(|m| *m as i32 == v)
}

fn criterion_of(v: i32) -> Option<StopCriterion> {
    match v {
        0 => Some(StopCriterion::Residual),
        1 => Some(StopCriterion::Generalized),
        2 => Some(StopCriterion::Stagnation),
        _ => None,
    }
}

fn inner_of(v: i32) -> Option<InnerSolver> {
    match v {
        0 => Some(InnerSolver::Lu),
        1 => Some(InnerSolver::Gmres),
        _ => None,
    }
}

fn dispatch(a: &CsrMatrix, v: &[f64], t: f64, o: &ResexpOptions) -> Result<ExpvResult, ResexpCode> {
    let method = method_of(o.method).ok_or_else(|| fail(ResexpCode::InvalidArgument, "unknown method"))?;
    let criterion =
        criterion_of(o.criterion).ok_or_else(|| fail(ResexpCode::InvalidArgument, "unknown criterion"))?;
    let inner = inner_of(o.inner).ok_or_else(|| fail(ResexpCode::InvalidArgument, "unknown inner solver"))?;
    let gamma = (o.gamma > 0.0).then_some(o.gamma);
    let r = match method {
        ResexpMethod::Arnoldi => expv_restarted(
            a,
            v,
            t,
            &ArnoldiOptions {
                tol: o.tol,
                restart: o.restart,
                criterion,
                max_matvecs: o.max_iter,
                ..Default::default()
            },
            None,
        ),
        ResexpMethod::ShiftInvert => sai_expv(
            a,
            v,
            t,
            &SaiOptions {
                tol: o.tol,
                gamma,
                inner,
                max_steps: o.max_iter,
                ..Default::default()
            },
            None,
        ),
        ResexpMethod::Chebyshev => cheb_expv(
            a,
            v,
            t,
            &ChebOptions {
                tol: o.tol,
                max_iter: o.max_iter,
                scaling: SpectrumScaling::gershgorin(a),
                ..Default::default()
            },
            None,
        ),
        ResexpMethod::Richardson => exp_richardson(
            a,
            &Tridiagonal::from_csr(a),
            v,
            t,
            &RichardsonOptions {
                tol: o.tol,
                max_iter: o.max_iter,
                n_samples: o.samples,
                ..Default::default()
            },
            None,
        ),
        ResexpMethod::KrylovRichardson => kr_expv(
            a,
            v,
            t,
            &KrOptions {
                tol: o.tol,
                cycle_len: o.restart,
                mode: if o.kr_shift_invert { KrMode::Sai { gamma, inner } } else { KrMode::Plain },
                max_steps: o.max_iter,
                ..Default::default()
            },
            None,
        ),
    };
    r.map_err(|e| fail(code_of(&e), e.to_string()))
}

/// Computes `out = exp(-t A) v`.
///
/// `opts` may be NULL for defaults and `stats` may be NULL. On
/// `BudgetExhausted` and `Breakdown`, `out` holds the last iterate.
///
/// # Safety
/// `a` must be a live handle, `v` and `out` must point to `n` doubles, and
/// `opts` and `stats` must be NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn resexp_expv(
    a: *const ResexpMatrix,
    v: *const f64,
    n: usize,
    t: f64,
    opts: *const ResexpOptions,
    out: *mut f64,
    stats: *mut ResexpStats,
) -> ResexpCode {
    guard(|| {
        let Some(a) = a.as_ref() else {
            return fail(ResexpCode::NullPointer, "matrix is NULL");
        };
        if v.is_null() || out.is_null() {
            return fail(ResexpCode::NullPointer, "v or out is NULL");
        }
        if n != a.inner.n() {
            return fail(
                ResexpCode::DimensionMismatch,
                format!("vector length {n} does not match matrix dimension {}", a.inner.n()),
            );
        }
        let o = opts.as_ref().copied().unwrap_or_else(|| resexp_default_options());
        let v = std::slice::from_raw_parts(v, n);
        let res = match dispatch(&a.inner, v, t, &o) {
            Ok(r) => r,
            Err(code) => return code,
        };
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&res.y);
        if let Some(s) = stats.as_mut() {
            *s = ResexpStats {
                iterations: res.iterations(),
                matvecs: res.stats.matvecs,
                inner_work: res.stats.inner_work,
                lu_factorizations: res.stats.lu_factorizations,
                solves: res.stats.solves,
                residual: res.final_residual(),
            };
        }
        match res.status {
            Status::Converged => {
                clear_error();
                ResexpCode::Ok
            }
            Status::BudgetExhausted => fail(ResexpCode::BudgetExhausted, "iteration budget exhausted"),
            Status::Breakdown => fail(ResexpCode::Breakdown, "method broke down"),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_round_trip() {
        for m in 0..5 {
            assert_eq!(method_of(m).unwrap() as i32, m);
        }
        assert!(method_of(5).is_none());
        assert!(method_of(-1).is_none());
    }

    #[test]
    fn error_text_has_no_interior_nul() {
        set_error("a\0b");
        let s = unsafe { CStr::from_ptr(resexp_last_error()) };
        assert_eq!(s.to_str().unwrap(), "a b");
        clear_error();
        assert!(unsafe { CStr::from_ptr(resexp_last_error()) }.to_bytes().is_empty());
    }
}
