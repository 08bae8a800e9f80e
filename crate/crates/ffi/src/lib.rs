//! C interface to `infogeom`.
//!
//! Objects cross the boundary as opaque handles returned by constructors such
//! as `ig_model_from_json` and released by the matching `ig_*_free`. Every fallible call
//! returns an [`IgStatus`]; on failure, [`ig_last_error`] describes the cause
//! for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use infogeom::error::Error;
use infogeom::exact::{self, Convention};
use infogeom::freelimit::{self, EquilibriumMeasure};
use infogeom::geometry;
use infogeom::mcmc::{self, SampleBatch, SamplerConfig};
use infogeom::model::{ModelSpec, Theta};
use infogeom::poly::Polynomial;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IgStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or a buffer of the wrong length.
    InvalidArgument = 1,
    /// Model, parameter or configuration rejected.
    Domain = 2,
    /// A numerical routine failed.
    Numerical = 3,
    Io = 4,
    /// The library panicked; the handle involved should be discarded.
    Panic = 5,
}

/// Normalization of the pressure.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IgConvention {
    Eigenvalue = 0,
    Matrix = 1,
    MatrixEntrywise = 2,
}

impl From<IgConvention> for Convention {
    fn from(c: IgConvention) -> Self {
        match c {
            IgConvention::Eigenvalue => Convention::Eigenvalue,
            IgConvention::Matrix => Convention::Matrix,
            IgConvention::MatrixEntrywise => Convention::MatrixEntrywise,
        }
    }
}

/// A validated model.
pub struct IgModel(ModelSpec);

/// A one-cut equilibrium measure.
pub struct IgEquilibrium(EquilibriumMeasure);

/// Retained Monte-Carlo draws.
pub struct IgBatch(SampleBatch);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> IgStatus {
    match e.exit_code() {
        3 => IgStatus::Numerical,
        4 => IgStatus::Io,
        _ => IgStatus::Domain,
    }
}

struct Fail(IgStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn invalid(msg: &str) -> Fail {
    Fail(IgStatus::InvalidArgument, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> IgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            IgStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            IgStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(invalid("null array pointer"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| invalid(&format!("null {what} handle")))
}

fn out_ptr<T>(p: *mut T) -> Result<(), Fail> {
    if p.is_null() {
        Err(invalid("null output pointer"))
    } else {
        Ok(())
    }
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn ig_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ig_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses and validates a model from its JSON description.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ig_model_from_json(json: *const c_char, out: *mut *mut IgModel) -> IgStatus {
    guard(|| {
        out_ptr(out)?;
        if json.is_null() {
            return Err(invalid("null json string"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|_| invalid("json is not UTF-8"))?;
        let spec = ModelSpec::from_json(text)?;
        *out = Box::into_raw(Box::new(IgModel(spec)));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`ig_model_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ig_model_free(model: *mut IgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of perturbations, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ig_model_dim(model: *const IgModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.dim())
}

/// Matrix size `n`, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ig_model_size(model: *const IgModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.n)
}

/// Exact pressure at `theta`.
///
/// # Safety
/// `theta` must hold `theta_len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ig_pressure(
    model: *const IgModel,
    theta: *const f64,
    theta_len: usize,
    convention: IgConvention,
    out: *mut f64,
) -> IgStatus {
    guard(|| {
        let m = handle(model, "model")?;
        out_ptr(out)?;
        let theta = Theta::new(slice(theta, theta_len)?.to_vec());
        *out = exact::pressure_exact(&m.0, &theta, convention.into())?;
        Ok(())
    })
}

/// Exact Fisher metric at `theta`, written row-major into `out`, which must
/// hold `dim * dim` doubles.
///
/// # Safety
/// `theta` must hold `theta_len` doubles; `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ig_metric(
    model: *const IgModel,
    theta: *const f64,
    theta_len: usize,
    out: *mut f64,
    out_len: usize,
) -> IgStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let dim = m.0.dim();
        if out_len != dim * dim {
            return Err(invalid(&format!("output holds {out_len} values, metric has {}", dim * dim)));
        }
        let theta = Theta::new(slice(theta, theta_len)?.to_vec());
        let g = exact::metric_exact(&m.0, &theta)?;
        if dim > 0 {
            out_ptr(out)?;
            let dst = std::slice::from_raw_parts_mut(out, out_len);
            for i in 0..dim {
                for j in 0..dim {
                    dst[i * dim + j] = g[(i, j)];
                }
            }
        }
        Ok(())
    })
}

/// Solves for the one-cut equilibrium measure of the potential with ascending
/// coefficients `coeffs`.
///
/// # Safety
/// `coeffs` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ig_solve_equilibrium(coeffs: *const f64, len: usize, out: *mut *mut IgEquilibrium) -> IgStatus {
    guard(|| {
        out_ptr(out)?;
        let p = Polynomial::new(slice(coeffs, len)?.to_vec());
        let q = freelimit::solve_one_cut(&p)?;
        *out = Box::into_raw(Box::new(IgEquilibrium(q)));
        Ok(())
    })
}

/// Support endpoints `[a, b]`.
///
/// # Safety
/// `eq` must be a live handle; `a` and `b` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ig_equilibrium_support(eq: *const IgEquilibrium, a: *mut f64, b: *mut f64) -> IgStatus {
    guard(|| {
        let q = handle(eq, "equilibrium")?;
        out_ptr(a)?;
        out_ptr(b)?;
        *a = q.0.a;
        *b = q.0.b;
        Ok(())
    })
}

/// Density at `x`; zero outside the support, NaN for a null handle.
///
/// # Safety
/// `eq` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ig_equilibrium_density(eq: *const IgEquilibrium, x: f64) -> f64 {
    eq.as_ref().map_or(f64::NAN, |q| q.0.density(x))
}

/// Releases an equilibrium measure. Null is ignored.
///
/// # Safety
/// `eq` must come from [`ig_solve_equilibrium`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ig_equilibrium_free(eq: *mut IgEquilibrium) {
    if !eq.is_null() {
        drop(Box::from_raw(eq));
    }
}

/// Runs the Metropolis sampler with default burn-in and proposal scale.
///
/// # Safety
/// `theta` must hold `theta_len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ig_sample(
    model: *const IgModel,
    theta: *const f64,
    theta_len: usize,
    chains: usize,
    steps: usize,
    seed: u64,
    out: *mut *mut IgBatch,
) -> IgStatus {
    guard(|| {
        let m = handle(model, "model")?;
        out_ptr(out)?;
        let theta = Theta::new(slice(theta, theta_len)?.to_vec());
        let batch = mcmc::sample(&m.0, &theta, &SamplerConfig::new(chains, steps, seed))?;
        *out = Box::into_raw(Box::new(IgBatch(batch)));
        Ok(())
    })
}

/// Number of retained draws, or 0 for a null handle.
///
/// # Safety
/// `batch` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ig_batch_len(batch: *const IgBatch) -> usize {
    batch.as_ref().map_or(0, |b| b.0.len())
}

/// Monte-Carlo Fisher metric and its standard errors, row-major. Both
/// buffers must hold `dim * dim` doubles; `stderr_out` may be null.
///
/// # Safety
/// `value_out` (and `stderr_out` when non-null) must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ig_batch_metric(
    batch: *const IgBatch,
    value_out: *mut f64,
    stderr_out: *mut f64,
    len: usize,
) -> IgStatus {
    guard(|| {
        let b = handle(batch, "batch")?;
        let g = geometry::fisher_metric_mcmc(&b.0)?;
        let dim = g.value.len();
        if len != dim * dim {
            return Err(invalid(&format!("output holds {len} values, metric has {}", dim * dim)));
        }
        if dim == 0 {
            return Ok(());
        }
        out_ptr(value_out)?;
        let values = std::slice::from_raw_parts_mut(value_out, len);
        let mut errors = (!stderr_out.is_null()).then(|| std::slice::from_raw_parts_mut(stderr_out, len));
        for i in 0..dim {
            for j in 0..dim {
                values[i * dim + j] = g.value[i][j];
                if let Some(e) = errors.as_mut() {
                    e[i * dim + j] = g.stderr[i][j];
                }
            }
        }
        Ok(())
    })
}

/// Releases a batch. Null is ignored.
///
/// # Safety
/// `batch` must come from [`ig_sample`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ig_batch_free(batch: *mut IgBatch) {
    if !batch.is_null() {
        drop(Box::from_raw(batch));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_follows_error_class() {
        assert_eq!(status_of(&Error::InvalidModel("x".into())), IgStatus::Domain);
        assert_eq!(status_of(&Error::Solver("x".into())), IgStatus::Numerical);
        assert_eq!(status_of(&Error::Io(std::io::Error::other("x"))), IgStatus::Io);
    }

    #[test]
    fn panics_are_contained() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, IgStatus::Panic);
        let msg = unsafe { CStr::from_ptr(ig_last_error()) }.to_str().unwrap().to_owned();
        assert!(msg.contains("boom"));
        assert_eq!(guard(|| Ok(())), IgStatus::Ok);
        assert!(ig_last_error().is_null());
    }
}
