use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use resexp::linalg::dense::DenseMatrix;
use resexp::linalg::expm::expm_dense;
use resexp::linalg::vector::rel_diff;
use resexp_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(resexp_last_error()) }.to_string_lossy().into_owned()
}

fn tridiag_handle(n: usize) -> *mut ResexpMatrix {
    let mut rp = vec![0usize];
    let mut ci = Vec::new();
    let mut va = Vec::new();
    for i in 0..n {
        for (j, x) in [(i.wrapping_sub(1), -1.0), (i, 2.5), (i + 1, -0.5)] {
            if j < n {
                ci.push(j);
                va.push(x);
            }
        }
        rp.push(ci.len());
    }
    unsafe { resexp_matrix_from_csr(n, rp.as_ptr(), ci.as_ptr(), va.as_ptr()) }
}

fn dense_tridiag(n: usize) -> DenseMatrix {
    DenseMatrix::from_fn(n, n, |i, j| {
        if i == j {
            2.5
        } else if j + 1 == i {
            -1.0
        } else if i + 1 == j {
            -0.5
        } else {
            0.0
        }
    })
}

#[test]
fn every_method_matches_dense_exponential() {
    let n = 40;
    let a = tridiag_handle(n);
    assert!(!a.is_null(), "{}", last_error());
    assert_eq!(unsafe { resexp_matrix_dim(a) }, n);
    assert_eq!(unsafe { resexp_matrix_nnz(a) }, 3 * n - 2);
    let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin() + 1.0).collect();
    let expected = expm_dense(&dense_tridiag(n), 0.5).unwrap().matvec(&v);

    let methods = [
        ResexpMethod::Arnoldi,
        ResexpMethod::ShiftInvert,
        ResexpMethod::Chebyshev,
        ResexpMethod::Richardson,
        ResexpMethod::KrylovRichardson,
    ];
    for m in methods {
        let mut opts = resexp_default_options();
        opts.method = m as i32;
        opts.tol = 1e-7;
        opts.restart = 8;
        let mut y = vec![0.0; n];
        let mut stats = ResexpStats::default();
        let rc = unsafe { resexp_expv(a, v.as_ptr(), n, 0.5, &opts, y.as_mut_ptr(), &mut stats) };
        assert_eq!(rc, ResexpCode::Ok, "{m:?}: {}", last_error());
        assert!(rel_diff(&y, &expected) < 1e-5, "{m:?}: {:e}", rel_diff(&y, &expected));
        assert!(stats.matvecs > 0 && stats.iterations > 0, "{m:?}: {stats:?}");
        assert!(last_error().is_empty());
    }
    unsafe { resexp_matrix_free(a) };
}

#[test]
fn null_and_bad_arguments() {
    let mut y = [0.0; 4];
    let v = [1.0; 4];
    let rc = unsafe { resexp_expv(ptr::null(), v.as_ptr(), 4, 1.0, ptr::null(), y.as_mut_ptr(), ptr::null_mut()) };
    assert_eq!(rc, ResexpCode::NullPointer);
    assert!(last_error().contains("NULL"));

    let a = tridiag_handle(4);
    let rc = unsafe { resexp_expv(a, v.as_ptr(), 3, 1.0, ptr::null(), y.as_mut_ptr(), ptr::null_mut()) };
    assert_eq!(rc, ResexpCode::DimensionMismatch);

    let mut opts = resexp_default_options();
    opts.method = 99;
    let rc = unsafe { resexp_expv(a, v.as_ptr(), 4, 1.0, &opts, y.as_mut_ptr(), ptr::null_mut()) };
    assert_eq!(rc, ResexpCode::InvalidArgument);
    assert!(last_error().contains("method"));

    opts = resexp_default_options();
    opts.tol = -1.0;
    let rc = unsafe { resexp_expv(a, v.as_ptr(), 4, 1.0, &opts, y.as_mut_ptr(), ptr::null_mut()) };
    assert_eq!(rc, ResexpCode::InvalidArgument);
    unsafe { resexp_matrix_free(a) };
    unsafe { resexp_matrix_free(ptr::null_mut()) };
    assert_eq!(unsafe { resexp_matrix_dim(ptr::null()) }, 0);
}

#[test]
fn malformed_csr_is_rejected() {
    let rp = [0usize, 1, 1];
    let ci = [5usize];
    let va = [1.0];
    let a = unsafe { resexp_matrix_from_csr(2, rp.as_ptr(), ci.as_ptr(), va.as_ptr()) };
    assert!(a.is_null());
    assert!(!last_error().is_empty());
    assert!(unsafe { resexp_matrix_from_csr(2, ptr::null(), ci.as_ptr(), va.as_ptr()) }.is_null());
}

#[test]
fn budget_exhaustion_returns_iterate() {
    let a = resexp_matrix_conv_diff(10, 100.0);
    let n = unsafe { resexp_matrix_dim(a) };
    let v = vec![1.0; n];
    let mut y = vec![f64::NAN; n];
    let mut opts = resexp_default_options();
    opts.restart = 3;
    opts.max_iter = 6;
    let mut stats = ResexpStats::default();
    let rc = unsafe { resexp_expv(a, v.as_ptr(), n, 1.0, &opts, y.as_mut_ptr(), &mut stats) };
    assert_eq!(rc, ResexpCode::BudgetExhausted);
    assert!(y.iter().all(|x| x.is_finite()));
    assert!(stats.matvecs <= 6);
    unsafe { resexp_matrix_free(a) };
}

#[test]
fn reads_matrix_market() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.mtx");
    std::fs::write(&path, "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 2.0\n2 2 3.0\n1 2 -1.0\n").unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let a = unsafe { resexp_matrix_read_mtx(c.as_ptr()) };
    assert!(!a.is_null(), "{}", last_error());
    assert_eq!(unsafe { resexp_matrix_nnz(a) }, 3);
    unsafe { resexp_matrix_free(a) };

    let missing = CString::new("/nonexistent/x.mtx").unwrap();
    assert!(unsafe { resexp_matrix_read_mtx(missing.as_ptr()) }.is_null());
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(resexp_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn c_compiler() -> Option<String> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(&cc).arg("--version").output().ok().filter(|o| o.status.success()).map(|_| cc)
}

#[test]
fn header_compiles_as_c() {
    let Some(cc) = c_compiler() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = root.join("include/resexp.h");
    assert!(header.exists(), "header was not generated");
    let dir = tempfile::tempdir().unwrap();
    let obj = dir.path().join("smoke.o");
    let out = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-c"])
        .arg("-I")
        .arg(root.join("include"))
        .arg(root.join("tests/c/smoke.c"))
        .arg("-o")
        .arg(&obj)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // link and run when the static library from this build is at hand
    let target = std::env::var_os("CARGO_TARGET_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| root.join("../../target"));
    let lib = target.join("debug/libresexp_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping link", lib.display());
        return;
    }
    let exe = dir.path().join("smoke");
    let out = Command::new(&cc)
        .arg(&obj)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).contains("matvecs="));
}
