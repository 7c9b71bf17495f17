//! C ABI over `v2v_core`.
//!
//! Every function returns a [`V2vStatus`]. On failure the message is kept in
//! a thread-local slot readable through [`v2v_last_error_message`]. Panics
//! never cross the boundary; they surface as [`V2vStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use v2v_core::dsp::Waveform;
use v2v_core::losses::{AlphaVector, LossKind, LossSpec, SampleBatch};
use v2v_core::metrics::{seg_snr, stoi};
use v2v_core::network::Mlp;
use v2v_core::theory::lipschitz_upper;
use v2v_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum V2vStatus {
    Ok = 0,
    NullArgument = 1,
    /// Shape, range or precondition violation.
    Contract = 2,
    /// Malformed or unsupported file contents.
    Parse = 3,
    Io = 4,
    /// An iterative method failed to converge.
    Numeric = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum V2vLossKind {
    Mae = 0,
    Mse = 1,
    Ld = 2,
    Gd = 3,
}

impl From<V2vLossKind> for LossKind {
    fn from(kind: V2vLossKind) -> Self {
        match kind {
            V2vLossKind::Mae => LossKind::Mae,
            V2vLossKind::Mse => LossKind::Mse,
            V2vLossKind::Ld => LossKind::Ld,
            V2vLossKind::Gd => LossKind::Gd,
        }
    }
}

/// Opaque handle to a trained network.
pub struct V2vModel {
    net: Mlp,
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn status(&self) -> V2vStatus {
        match self {
            Failure::Null(_) => V2vStatus::NullArgument,
            Failure::Core(e) => match e {
                Error::Parse { .. } | Error::Unsupported(_) | Error::Version { .. } => {
                    V2vStatus::Parse
                }
                Error::Io(_) => V2vStatus::Io,
                Error::NonConvergence { .. } | Error::Diverged { .. } => V2vStatus::Numeric,
                _ => V2vStatus::Contract,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Null(name) => format!("null pointer passed for `{name}`"),
            Failure::Core(e) => e.to_string(),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> V2vStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => V2vStatus::Ok,
        Ok(Err(failure)) => {
            set_last_error(failure.message());
            failure.status()
        }
        Err(payload) => {
            let text = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_last_error(format!("panic: {text}"));
            V2vStatus::Panic
        }
    }
}

unsafe fn input<'a>(ptr: *const f64, len: usize, name: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn output<'a>(
    ptr: *mut f64,
    len: usize,
    name: &'static str,
) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn write<T>(ptr: *mut T, value: T, name: &'static str) -> Result<(), Failure> {
    if ptr.is_null() {
        return Err(Failure::Null(name));
    }
    ptr.write(value);
    Ok(())
}

fn check_len(expected: usize, got: usize, what: &str) -> Result<(), Failure> {
    if expected != got {
        return Err(Failure::Core(Error::Contract(format!(
            "{what}: expected length {expected}, got {got}"
        ))));
    }
    Ok(())
}

unsafe fn model<'a>(ptr: *const V2vModel) -> Result<&'a V2vModel, Failure> {
    ptr.as_ref().ok_or(Failure::Null("model"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn v2v_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent failure on this thread, or NULL after a
/// success. The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn v2v_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |c| c.as_ptr())
    })
}

/// Load a model file. On success `*out` owns a handle to release with
/// [`v2v_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn v2v_model_load(path: *const c_char, out: *mut *mut V2vModel) -> V2vStatus {
    guard(|| {
        if path.is_null() {
            return Err(Failure::Null("path"));
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|e| Failure::Core(Error::Contract(format!("path is not UTF-8: {e}"))))?;
        let net = Mlp::load(path)?;
        out.write(Box::into_raw(Box::new(V2vModel { net })));
        Ok(())
    })
}

/// Decode a model from an in-memory buffer.
///
/// # Safety
/// `bytes` must point to `len` readable bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn v2v_model_from_bytes(
    bytes: *const u8,
    len: usize,
    out: *mut *mut V2vModel,
) -> V2vStatus {
    guard(|| {
        if bytes.is_null() {
            return Err(Failure::Null("bytes"));
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let net = Mlp::from_bytes(std::slice::from_raw_parts(bytes, len))?;
        out.write(Box::into_raw(Box::new(V2vModel { net })));
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn v2v_model_free(model: *mut V2vModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; `input_dim` and `output_dim` must be writable.
#[no_mangle]
pub unsafe extern "C" fn v2v_model_dims(
    model: *const V2vModel,
    input_dim: *mut usize,
    output_dim: *mut usize,
) -> V2vStatus {
    guard(|| {
        let m = self::model(model)?;
        write(input_dim, m.net.input_dim(), "input_dim")?;
        write(output_dim, m.net.output_dim(), "output_dim")
    })
}

/// Forward one input vector.
///
/// # Safety
/// `input` must hold `input_len` values and `output` room for `output_len`.
#[no_mangle]
pub unsafe extern "C" fn v2v_model_forward(
    model: *const V2vModel,
    input: *const f64,
    input_len: usize,
    output: *mut f64,
    output_len: usize,
) -> V2vStatus {
    guard(|| {
        let m = self::model(model)?;
        check_len(m.net.input_dim(), input_len, "input")?;
        check_len(m.net.output_dim(), output_len, "output")?;
        let x = self::input(input, input_len, "input")?;
        let y = m.net.forward(x)?;
        self::output(output, output_len, "output")?.copy_from_slice(y.as_slice());
        Ok(())
    })
}

/// Spectral-norm upper bound on the per-output Lipschitz constants.
///
/// `per_output` may be NULL when `per_output_len` is 0; otherwise its length
/// must equal the output dimension. `total` receives the sum.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn v2v_model_lipschitz_upper(
    model: *const V2vModel,
    per_output: *mut f64,
    per_output_len: usize,
    total: *mut f64,
) -> V2vStatus {
    guard(|| {
        let m = self::model(model)?;
        if per_output_len != 0 {
            check_len(m.net.output_dim(), per_output_len, "per_output")?;
        }
        let estimate = lipschitz_upper(&m.net)?;
        output(per_output, per_output_len, "per_output")?
            .copy_from_slice(&estimate.per_output[..per_output_len]);
        write(total, estimate.total, "total")
    })
}

/// Batch loss over `n` row-major samples of dimension `dim`.
///
/// `alpha` holds `dim` scales and is required for LD and GD; it is ignored
/// (and may be NULL) for MAE and MSE.
///
/// # Safety
/// `predictions` and `targets` must each hold `n * dim` values.
#[no_mangle]
pub unsafe extern "C" fn v2v_loss(
    kind: V2vLossKind,
    predictions: *const f64,
    targets: *const f64,
    n: usize,
    dim: usize,
    alpha: *const f64,
    out: *mut f64,
) -> V2vStatus {
    guard(|| {
        let len = n
            .checked_mul(dim)
            .ok_or_else(|| Failure::Core(Error::Contract("n * dim overflows".to_string())))?;
        if len == 0 {
            return Err(Failure::Core(Error::Contract("empty batch".to_string())));
        }
        let p = input(predictions, len, "predictions")?;
        let t = input(targets, len, "targets")?;
        let rows = |s: &[f64]| s.chunks(dim).map(<[f64]>::to_vec).collect::<Vec<_>>();
        let batch = SampleBatch::from_slices(&rows(p), &rows(t))?;
        let kind = LossKind::from(kind);
        let alpha = if kind.needs_alpha() {
            Some(AlphaVector::new(input(alpha, dim, "alpha")?.to_vec())?)
        } else {
            None
        };
        let value = LossSpec::new(kind, alpha)?.evaluate(&batch)?;
        write(out, value, "out")
    })
}

/// Short-time objective intelligibility of `processed` against `clean`.
///
/// # Safety
/// Both signals must hold `len` samples.
#[no_mangle]
pub unsafe extern "C" fn v2v_stoi(
    clean: *const f64,
    processed: *const f64,
    len: usize,
    sample_rate: u32,
    out: *mut f64,
) -> V2vStatus {
    guard(|| {
        let c = Waveform::new(input(clean, len, "clean")?.to_vec(), sample_rate)?;
        let p = Waveform::new(input(processed, len, "processed")?.to_vec(), sample_rate)?;
        write(out, stoi(&c, &p, sample_rate)?, "out")
    })
}

/// Segmental SNR in dB over non-overlapping frames of `frame` samples.
///
/// # Safety
/// Both signals must hold `len` samples.
#[no_mangle]
pub unsafe extern "C" fn v2v_seg_snr(
    clean: *const f64,
    processed: *const f64,
    len: usize,
    sample_rate: u32,
    frame: usize,
    out: *mut f64,
) -> V2vStatus {
    guard(|| {
        let c = Waveform::new(input(clean, len, "clean")?.to_vec(), sample_rate)?;
        let p = Waveform::new(input(processed, len, "processed")?.to_vec(), sample_rate)?;
        write(out, seg_snr(&c, &p, frame)?, "out")
    })
}
