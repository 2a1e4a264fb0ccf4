//! C ABI over `dtlab`.
//!
//! Every function returns a [`DtlabStatus`]. On failure the message is kept in
//! a thread-local slot and can be fetched with [`dtlab_last_error_message`].
//! Objects are opaque handles released with their `_free` function; strings
//! handed out by the library are released with [`dtlab_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dtlab::dgauss::{tau, PiecewisePoly, WordExpr};
use dtlab::ensembles::{self, EnsembleSpec, MatrixWord, MeasureSpec};
use dtlab::{rational, Error};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DtlabStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    Parse = 3,
    NotSquare = 4,
    Precision = 5,
    Precondition = 6,
    CheckFailed = 7,
    Io = 8,
    Panic = 9,
}

/// Piecewise polynomial on `[0,1]` with rational coefficients.
pub struct DtlabPoly(PiecewisePoly);

/// Linear combination of words in `T1, T1*, T2, T2*` with polynomial insertions.
pub struct DtlabWord(WordExpr);

/// A DT random matrix ensemble: diagonal law, `c`, dimension and seed.
pub struct DtlabEnsemble(EnsembleSpec);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Fail {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn status_of(e: &Error) -> DtlabStatus {
    match e {
        Error::Argument(_) => DtlabStatus::InvalidArgument,
        Error::Parse(_) => DtlabStatus::Parse,
        Error::NotSquare(_) => DtlabStatus::NotSquare,
        Error::Precision(_) => DtlabStatus::Precision,
        Error::Precondition(_) => DtlabStatus::Precondition,
        Error::Check(_) => DtlabStatus::CheckFailed,
        Error::Io(_) => DtlabStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DtlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DtlabStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            DtlabStatus::NullPointer
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            DtlabStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Core(Error::Parse(format!("{what} is not UTF-8"))))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    let c = CString::new(s).map_err(|_| Fail::Core(Error::Argument("string contains NUL".into())))?;
    out.write(c.into_raw());
    Ok(())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dtlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Free with
/// [`dtlab_string_free`].
#[no_mangle]
pub extern "C" fn dtlab_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |c| c.clone().into_raw()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dtlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses `"[0,1/2]:0,1;[1/2,1]:1"` or a bare coefficient list `"c0,c1,..."`.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtlab_poly_parse(text_in: *const c_char, out: *mut *mut DtlabPoly) -> DtlabStatus {
    guard(|| {
        let p: PiecewisePoly = text(text_in, "text")?.parse()?;
        put(out, Box::into_raw(Box::new(DtlabPoly(p))), "out")
    })
}

/// # Safety
/// `p` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dtlab_poly_free(p: *mut DtlabPoly) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtlab_poly_to_string(p: *const DtlabPoly, out: *mut *mut c_char) -> DtlabStatus {
    guard(|| put_string(out, handle(p, "poly")?.0.to_string()))
}

/// Value at `x ∈ [0,1]`.
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtlab_poly_eval(p: *const DtlabPoly, x: f64, out: *mut f64) -> DtlabStatus {
    guard(|| {
        let p = handle(p, "poly")?;
        let xr = rational::Rational::from_float(x).ok_or_else(|| Error::Argument("x must be finite".into()))?;
        let v = p.0.eval(&xr)?;
        put(out, rational::to_f64(&v), "out")
    })
}

/// Exact `∫₀¹ p` as `"p/q"`.
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtlab_poly_integral(p: *const DtlabPoly, out: *mut *mut c_char) -> DtlabStatus {
    guard(|| put_string(out, rational::fmt(&handle(p, "poly")?.0.integral())))
}

/// `x ↦ ∫_x^1 p`.
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtlab_poly_cov_l(p: *const DtlabPoly, out: *mut *mut DtlabPoly) -> DtlabStatus {
    guard(|| put(out, Box::into_raw(Box::new(DtlabPoly(handle(p, "poly")?.0.cov_l()))), "out"))
}

/// `x ↦ ∫_0^x p`.
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtlab_poly_cov_lstar(p: *const DtlabPoly, out: *mut *mut DtlabPoly) -> DtlabStatus {
    guard(|| put(out, Box::into_raw(Box::new(DtlabPoly(handle(p, "poly")?.0.cov_lstar()))), "out"))
}

/// Parses a word expression such as `"2 T1 {[0,1]:0,1} T2* -1/3 T2"`.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtlab_word_parse(text_in: *const c_char, out: *mut *mut DtlabWord) -> DtlabStatus {
    guard(|| {
        let w: WordExpr = text(text_in, "text")?.parse()?;
        put(out, Box::into_raw(Box::new(DtlabWord(w))), "out")
    })
}

/// # Safety
/// `w` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dtlab_word_free(w: *mut DtlabWord) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

/// # Safety
/// `w` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtlab_word_to_string(w: *const DtlabWord, out: *mut *mut c_char) -> DtlabStatus {
    guard(|| put_string(out, handle(w, "word")?.0.to_string()))
}

/// Exact trace `τ(w)` as `"p/q"`.
///
/// # Safety
/// `w` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtlab_word_tau(w: *const DtlabWord, out: *mut *mut c_char) -> DtlabStatus {
    guard(|| put_string(out, rational::fmt(&tau(&handle(w, "word")?.0)?)))
}

/// `Φ*(S_t, S_t* : 𝒟)` from the conjugate vector, as `"p/q"`. Needs
/// `√(t/(c²+t))` rational; otherwise returns `NotSquare`.
///
/// # Safety
/// `t` and `csq` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtlab_fisher_exact(t: *const c_char, csq: *const c_char, out: *mut *mut c_char) -> DtlabStatus {
    guard(|| {
        let t = rational::parse(text(t, "t")?)?;
        let csq = rational::parse(text(csq, "csq")?)?;
        put_string(out, rational::fmt(&dtlab::dgauss::fisher_exact(&t, &csq)?))
    })
}

/// Number of non-crossing partitions of `{1..n}`, `1 ≤ n ≤ 14`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtlab_nc_partition_count(n: u32, out: *mut u64) -> DtlabStatus {
    guard(|| {
        let count = dtlab::ncpart::enumerate_nc_partitions(n as usize)?.len();
        put(out, count as u64, "out")
    })
}

/// `mu` uses the text form of the CLI, e.g. `"delta:0"` or `"atomic:0@1/2;1@1/2"`.
///
/// # Safety
/// `mu` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtlab_ensemble_new(
    mu: *const c_char,
    c: f64,
    n: usize,
    seed: u64,
    out: *mut *mut DtlabEnsemble,
) -> DtlabStatus {
    guard(|| {
        let mu: MeasureSpec = text(mu, "mu")?.parse()?;
        let spec = EnsembleSpec::new(mu, c, n, seed)?;
        put(out, Box::into_raw(Box::new(DtlabEnsemble(spec))), "out")
    })
}

/// # Safety
/// `e` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dtlab_ensemble_free(e: *mut DtlabEnsemble) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Monte Carlo mean and standard error of the normalized trace of `word`
/// (e.g. `"Z Z*"`), `reps ≥ 2`.
///
/// # Safety
/// `e` must be a live handle, `word` a NUL-terminated string, `mean` and
/// `stderr_out` writable.
#[no_mangle]
pub unsafe extern "C" fn dtlab_ensemble_estimate(
    e: *const DtlabEnsemble,
    word: *const c_char,
    reps: usize,
    mean: *mut f64,
    stderr_out: *mut f64,
) -> DtlabStatus {
    guard(|| {
        let e = handle(e, "ensemble")?;
        let w: MatrixWord = text(word, "word")?.parse()?;
        let est = ensembles::estimate_star_moment(&e.0, &w, reps)?;
        put(mean, est.mean, "mean")?;
        put(stderr_out, est.stderr, "stderr")
    })
}

/// Mean largest singular value of `Z_n` over `reps` replicates.
///
/// # Safety
/// `e` must be a live handle; `mean` and `stderr_out` writable.
#[no_mangle]
pub unsafe extern "C" fn dtlab_ensemble_norm(e: *const DtlabEnsemble, reps: usize, mean: *mut f64, stderr_out: *mut f64) -> DtlabStatus {
    guard(|| {
        let e = handle(e, "ensemble")?;
        let est = ensembles::norm_estimate(&e.0, reps)?;
        put(mean, est.mean, "mean")?;
        put(stderr_out, est.stderr, "stderr")
    })
}
