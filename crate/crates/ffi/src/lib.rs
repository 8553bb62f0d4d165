//! C ABI over the `limitfield` library.
//!
//! Families are opaque `LfFamily` handles. Every fallible call returns an
//! `LfStatus`; on failure `lf_last_error_message` describes the error on the
//! calling thread. Strings returned through out-parameters are owned by the
//! caller and released with `lf_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use limitfield::bench::probes_for;
use limitfield::expr::{builtin_family, BuiltinFamily, ExprError, SmoothingFamily};
use limitfield::field::{estimate_limit_field, EstimatorConfig, FieldError};
use limitfield::hull::{min_norm_point, PointSet, DEFAULT_TOL};
use limitfield::solver::{certify_final, smoothing_solve, InnerSolver, Schedule, SolverError, DEFAULT_CERT_TOL};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    EvalError = 4,
    KinkError = 5,
    SolverError = 6,
    Panic = 7,
}

/// Opaque smoothing family.
pub struct LfFamily {
    family: SmoothingFamily,
    builtin: Option<BuiltinFamily>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).expect("interior nuls replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(LfStatus, String);

impl From<ExprError> for Failure {
    fn from(e: ExprError) -> Self {
        let status = match e {
            ExprError::Kink { .. } => LfStatus::KinkError,
            ExprError::Parse(_) | ExprError::UnknownBuiltin(_) | ExprError::Invalid(_) => LfStatus::ParseError,
            ExprError::InvalidParameter { .. } | ExprError::DimensionMismatch { .. } => LfStatus::InvalidArgument,
            _ => LfStatus::EvalError,
        };
        Failure(status, e.to_string())
    }
}

impl From<FieldError> for Failure {
    fn from(e: FieldError) -> Self {
        match e {
            FieldError::Expr(inner) => inner.into(),
            other => Failure(LfStatus::InvalidArgument, other.to_string()),
        }
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::InvalidSchedule(_) | SolverError::DimensionMismatch { .. } | SolverError::NonFiniteStart => {
                Failure(LfStatus::InvalidArgument, e.to_string())
            }
            other => Failure(LfStatus::SolverError, other.to_string()),
        }
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            LfStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside limitfield");
            LfStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(LfStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(LfStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn read_family<'a>(fam: *const LfFamily) -> Result<&'a LfFamily, Failure> {
    fam.as_ref().ok_or_else(|| null("family"))
}

unsafe fn read_point<'a>(x: *const f64, len: usize, fam: &LfFamily) -> Result<&'a [f64], Failure> {
    if x.is_null() {
        return Err(null("point"));
    }
    if len != fam.family.dimension() {
        return Err(Failure(
            LfStatus::InvalidArgument,
            format!("point has length {len}, family expects {}", fam.family.dimension()),
        ));
    }
    Ok(std::slice::from_raw_parts(x, len))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(LfStatus::EvalError, "output contains a nul byte".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn box_family(out: *mut *mut LfFamily, family: SmoothingFamily, builtin: Option<BuiltinFamily>) {
    let h = Box::new(LfFamily { family, builtin });
    // SAFETY: callers check `out` for null first.
    unsafe { *out = Box::into_raw(h) };
}

/// Creates a builtin family by name (`sin`, `hat`, `chen`, `signsqrt`,
/// `absl1`, `maxfinite`, `nonlipq`).
///
/// # Safety
/// `name` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lf_family_builtin(name: *const c_char, out: *mut *mut LfFamily) -> LfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let b: BuiltinFamily = read_str(name, "name")?.parse()?;
        box_family(out, builtin_family(b), Some(b));
        Ok(())
    })
}

/// Parses a family from its JSON description.
///
/// # Safety
/// `json` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lf_family_from_json(json: *const c_char, out: *mut *mut LfFamily) -> LfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let fam = SmoothingFamily::from_json(read_str(json, "json")?)?;
        box_family(out, fam, None);
        Ok(())
    })
}

/// Releases a family; null is ignored.
///
/// # Safety
/// `fam` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lf_family_free(fam: *mut LfFamily) {
    if !fam.is_null() {
        drop(Box::from_raw(fam));
    }
}

/// Dimension of the family's domain, or 0 for a null handle.
///
/// # Safety
/// `fam` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lf_family_dimension(fam: *const LfFamily) -> usize {
    fam.as_ref().map_or(0, |f| f.family.dimension())
}

/// Writes `f_a(x)` to `out`.
///
/// # Safety
/// `x` must point to `len` doubles and `out` to one.
#[no_mangle]
pub unsafe extern "C" fn lf_family_eval(fam: *const LfFamily, x: *const f64, len: usize, a: f64, out: *mut f64) -> LfStatus {
    guard(|| {
        let fam = read_family(fam)?;
        let x = read_point(x, len, fam)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = fam.family.eval(x, a)?;
        Ok(())
    })
}

/// Writes `∇f_a(x)` to `grad`, which must hold `len` doubles.
///
/// # Safety
/// `x` and `grad` must each point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lf_family_grad(fam: *const LfFamily, x: *const f64, len: usize, a: f64, grad: *mut f64) -> LfStatus {
    guard(|| {
        let fam = read_family(fam)?;
        let x = read_point(x, len, fam)?;
        if grad.is_null() {
            return Err(null("grad"));
        }
        let g = fam.family.grad(x, a)?;
        std::slice::from_raw_parts_mut(grad, len).copy_from_slice(&g);
        Ok(())
    })
}

/// Estimates the limit field at `x` and returns it as JSON. `config_json`
/// may be null for defaults; builtin families get their probe curves unless
/// the config lists its own.
///
/// # Safety
/// `x` must point to `len` doubles; `config_json` null or a C string; `out`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lf_estimate_json(
    fam: *const LfFamily,
    x: *const f64,
    len: usize,
    config_json: *const c_char,
    out: *mut *mut c_char,
) -> LfStatus {
    guard(|| {
        let fam = read_family(fam)?;
        let x = read_point(x, len, fam)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mut cfg: EstimatorConfig = if config_json.is_null() {
            EstimatorConfig::default()
        } else {
            serde_json::from_str(read_str(config_json, "config")?)
                .map_err(|e| Failure(LfStatus::ParseError, format!("config parse error: {e}")))?
        };
        if let (Some(b), true) = (fam.builtin, cfg.probes.is_empty()) {
            cfg.probes = probes_for(b);
        }
        let est = estimate_limit_field(&fam.family, x, &cfg)?;
        write_string(out, serde_json::to_string(&est).expect("estimate serializes"))
    })
}

/// Runs the smoothing method from `x0` and returns `{trace, certificate}` as
/// JSON. `schedule_json` may be null for defaults.
///
/// # Safety
/// As for `lf_estimate_json`.
#[no_mangle]
pub unsafe extern "C" fn lf_solve_json(
    fam: *const LfFamily,
    x0: *const f64,
    len: usize,
    schedule_json: *const c_char,
    out: *mut *mut c_char,
) -> LfStatus {
    guard(|| {
        let fam = read_family(fam)?;
        let x0 = read_point(x0, len, fam)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let sch: Schedule = if schedule_json.is_null() {
            Schedule::default()
        } else {
            serde_json::from_str(read_str(schedule_json, "schedule")?)
                .map_err(|e| Failure(LfStatus::ParseError, format!("schedule parse error: {e}")))?
        };
        let trace = smoothing_solve(&fam.family, x0, &sch, InnerSolver::DescentArmijo)?;
        let cfg = EstimatorConfig::default().with_probes(fam.builtin.map(probes_for).unwrap_or_default());
        let cert = certify_final(&trace, &fam.family, &cfg, DEFAULT_CERT_TOL)?;
        let v = serde_json::json!({ "trace": trace, "certificate": cert });
        write_string(out, v.to_string())
    })
}

/// Minimum-norm point of the hull of `count` points of dimension `dim`,
/// stored row-major in `points`.
///
/// # Safety
/// `points` must hold `count * dim` doubles, `out_point` `dim` doubles and
/// `out_distance` one.
#[no_mangle]
pub unsafe extern "C" fn lf_min_norm_point(
    points: *const f64,
    count: usize,
    dim: usize,
    out_point: *mut f64,
    out_distance: *mut f64,
) -> LfStatus {
    guard(|| {
        if points.is_null() || out_point.is_null() || out_distance.is_null() {
            return Err(null("argument"));
        }
        let n = count
            .checked_mul(dim)
            .ok_or_else(|| Failure(LfStatus::InvalidArgument, "size overflow".into()))?;
        let flat = std::slice::from_raw_parts(points, n);
        let rows = if dim == 0 { Vec::new() } else { flat.chunks(dim).map(<[f64]>::to_vec).collect() };
        let set = PointSet::new(rows).map_err(|e| Failure(LfStatus::InvalidArgument, e.to_string()))?;
        let r = min_norm_point(&set, DEFAULT_TOL);
        std::slice::from_raw_parts_mut(out_point, dim).copy_from_slice(&r.point);
        *out_distance = r.distance;
        Ok(())
    })
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn lf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
