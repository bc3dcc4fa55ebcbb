//! C ABI over the latent-shap engine.
//!
//! Every function returns an [`LsStatus`]; on failure a message is kept per
//! thread and can be read with [`ls_last_error`]. Handles are opaque and must
//! be released with their matching `_free` function.

use std::cell::{Cell, RefCell};
use std::ffi::{c_char, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use latent_shap::codec::Codec;
use latent_shap::models::Model;
use latent_shap::pipeline::{
    explain_local, BuildOptions, CodecSpec, ExplainConfig, Explainer, MethodChoice, ModelSpec, Report, TargetPolicy,
};
use latent_shap::value_fn::BackgroundSet;
use latent_shap::{exact_shapley, mc_shapley, Attribution, Coalition, Error, Image, Shape, ValueFunction};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    PlayerCountExceeded = 3,
    InsufficientSamples = 4,
    InvalidValue = 5,
    CallbackFailed = 6,
    Config = 7,
    Protocol = 8,
    ShapeMismatch = 9,
    UnknownImage = 10,
    Internal = 11,
    Panic = 12,
}

/// A classifier handle.
pub struct LsModel {
    inner: Arc<dyn Model>,
}

/// A codec handle.
pub struct LsCodec {
    inner: Arc<dyn Codec>,
}

/// Shapley values with standard errors.
pub struct LsAttribution {
    inner: Attribution,
}

/// `v(S)` callback: writes the value of the coalition bitmask to `out` and
/// returns 0, or returns non-zero on failure. Called from one thread at a time.
pub type LsValueFn = Option<unsafe extern "C" fn(user_data: *mut c_void, coalition: u64, out: *mut f64) -> i32>;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> LsStatus {
    match e.root() {
        Error::PlayerCountExceeded { .. } | Error::TooManyFeatures(_) => LsStatus::PlayerCountExceeded,
        Error::InsufficientSamples(_) => LsStatus::InsufficientSamples,
        Error::InvalidValue { .. } => LsStatus::InvalidValue,
        Error::ShapeMismatch { .. } | Error::GroupingMismatch(_) => LsStatus::ShapeMismatch,
        Error::UnknownImage => LsStatus::UnknownImage,
        Error::Protocol { .. } | Error::ProcessExited(_) | Error::Timeout(_) | Error::BadProbabilities(_) => {
            LsStatus::Protocol
        }
        Error::Config(_) | Error::InvalidBinCount(_) | Error::EmptyDataset | Error::CodecMismatch => LsStatus::Config,
        _ => LsStatus::Internal,
    }
}

fn fail(status: LsStatus, msg: &str) -> LsStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting engine errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), LsStatus>) -> LsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            LsStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => fail(LsStatus::Panic, "panic inside latent-shap"),
    }
}

fn engine<T>(r: latent_shap::Result<T>) -> Result<T, LsStatus> {
    r.map_err(|e| fail(status_of(&e), &e.to_string()))
}

unsafe fn str_arg<'a>(s: *const c_char, name: &str) -> Result<&'a str, LsStatus> {
    if s.is_null() {
        return Err(fail(LsStatus::NullPointer, &format!("{name} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(LsStatus::InvalidArgument, &format!("{name} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], LsStatus> {
    if p.is_null() {
        return Err(fail(LsStatus::NullPointer, &format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn shape_arg(height: u32, width: u32, channels: u32) -> Result<Shape, LsStatus> {
    if height == 0 || width == 0 || channels == 0 {
        return Err(fail(LsStatus::InvalidArgument, "image dimensions must be positive"));
    }
    Ok(Shape::new(height as usize, width as usize, channels as usize))
}

struct CallbackGame {
    n: usize,
    f: unsafe extern "C" fn(*mut c_void, u64, *mut f64) -> i32,
    user_data: *mut c_void,
    failed: Cell<Option<i32>>,
}

// Calls are serialized through `concurrent() == false`.
unsafe impl Sync for CallbackGame {}

impl ValueFunction for CallbackGame {
    fn num_players(&self) -> usize {
        self.n
    }

    fn evaluate(&self, coalition: Coalition) -> latent_shap::Result<f64> {
        let mut out = f64::NAN;
        let code = unsafe { (self.f)(self.user_data, coalition.members(), &mut out) };
        if code != 0 {
            self.failed.set(Some(code));
            return Err(Error::config(format!(
                "value callback returned {code} for coalition {:#x}",
                coalition.members()
            )));
        }
        Ok(out)
    }

    fn concurrent(&self) -> bool {
        false
    }
}

unsafe fn shapley_with(
    n: u32,
    f: LsValueFn,
    user_data: *mut c_void,
    out: *mut *mut LsAttribution,
    run: impl FnOnce(&CallbackGame) -> latent_shap::Result<Attribution>,
) -> LsStatus {
    guard(|| {
        let f = f.ok_or_else(|| fail(LsStatus::NullPointer, "callback is null"))?;
        if out.is_null() {
            return Err(fail(LsStatus::NullPointer, "out is null"));
        }
        let game = CallbackGame {
            n: n as usize,
            f,
            user_data,
            failed: Cell::new(None),
        };
        let result = run(&game);
        if game.failed.get().is_some() {
            if let Err(e) = &result {
                return Err(fail(LsStatus::CallbackFailed, &e.to_string()));
            }
        }
        let inner = engine(result)?;
        *out = Box::into_raw(Box::new(LsAttribution { inner }));
        Ok(())
    })
}

/// Exact Shapley values of the `n`-player game given by `f`.
///
/// # Safety
/// `f` must be safe to call with `user_data`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ls_exact_shapley(
    n: u32,
    f: LsValueFn,
    user_data: *mut c_void,
    out: *mut *mut LsAttribution,
) -> LsStatus {
    shapley_with(n, f, user_data, out, exact_shapley)
}

/// Monte-Carlo permutation estimate with `num_samples` permutations.
///
/// # Safety
/// As [`ls_exact_shapley`].
#[no_mangle]
pub unsafe extern "C" fn ls_mc_shapley(
    n: u32,
    f: LsValueFn,
    user_data: *mut c_void,
    num_samples: usize,
    seed: u64,
    out: *mut *mut LsAttribution,
) -> LsStatus {
    shapley_with(n, f, user_data, out, |g| mc_shapley(g, num_samples, seed))
}

/// Builds a model from a spec string (`builtin:tophalf`, `builtin:hole` or
/// `exec:<cmd>`) for images of the given shape.
///
/// # Safety
/// `spec` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ls_model_new(
    spec: *const c_char,
    height: u32,
    width: u32,
    channels: u32,
    out: *mut *mut LsModel,
) -> LsStatus {
    guard(|| {
        let spec = engine(str_arg(spec, "spec")?.parse::<ModelSpec>())?;
        let shape = shape_arg(height, width, channels)?;
        if out.is_null() {
            return Err(fail(LsStatus::NullPointer, "out is null"));
        }
        let inner = engine(spec.build(shape, None, &BuildOptions::default()))?;
        *out = Box::into_raw(Box::new(LsModel { inner }));
        Ok(())
    })
}

/// Number of classes, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ls_model_num_classes(model: *const LsModel) -> u32 {
    model.as_ref().map_or(0, |m| m.inner.num_classes() as u32)
}

/// Class probabilities of one image (`H·W·C` values, row-major,
/// channel-last) written to `probs[0..num_classes]`.
///
/// # Safety
/// `image` must hold `len` doubles and `probs` `num_classes` doubles.
#[no_mangle]
pub unsafe extern "C" fn ls_model_predict(
    model: *const LsModel,
    image: *const f64,
    len: usize,
    height: u32,
    width: u32,
    channels: u32,
    probs: *mut f64,
    num_classes: usize,
) -> LsStatus {
    guard(|| {
        let model = model
            .as_ref()
            .ok_or_else(|| fail(LsStatus::NullPointer, "model is null"))?;
        let shape = shape_arg(height, width, channels)?;
        let data = slice_arg(image, len, "image")?;
        if probs.is_null() {
            return Err(fail(LsStatus::NullPointer, "probs is null"));
        }
        if num_classes != model.inner.num_classes() {
            return Err(fail(LsStatus::InvalidArgument, "num_classes does not match the model"));
        }
        let x = engine(Image::new(shape, data.to_vec()))?;
        let p = engine(model.inner.predict_one(&x))?;
        ptr::copy_nonoverlapping(p.as_ptr(), probs, num_classes);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`ls_model_new`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ls_model_free(model: *mut LsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Builds a codec (`identity`, `fourier` or `exec:<cmd>`); `bins` = 0 keeps
/// one Fourier feature per conjugate mode pair.
///
/// # Safety
/// `spec` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ls_codec_new(
    spec: *const c_char,
    height: u32,
    width: u32,
    channels: u32,
    bins: u32,
    out: *mut *mut LsCodec,
) -> LsStatus {
    guard(|| {
        let spec = engine(str_arg(spec, "spec")?.parse::<CodecSpec>())?;
        let shape = shape_arg(height, width, channels)?;
        if out.is_null() {
            return Err(fail(LsStatus::NullPointer, "out is null"));
        }
        let opts = BuildOptions {
            bins: (bins > 0).then_some(bins as usize),
            ..BuildOptions::default()
        };
        let inner = engine(spec.build(shape, None, &opts))?;
        *out = Box::into_raw(Box::new(LsCodec { inner }));
        Ok(())
    })
}

/// Number of semantic features, or 0 for a null handle.
///
/// # Safety
/// `codec` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ls_codec_num_features(codec: *const LsCodec) -> u32 {
    codec.as_ref().map_or(0, |c| c.inner.grouping().num_features() as u32)
}

/// # Safety
/// `codec` must be null or a handle from [`ls_codec_new`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ls_codec_free(codec: *mut LsCodec) {
    if !codec.is_null() {
        drop(Box::from_raw(codec));
    }
}

/// Local explanation of `x` against `num_background` background images laid
/// out back to back. `target` < 0 explains the predicted class. Exact when
/// affordable, otherwise `num_samples` Monte-Carlo permutations.
///
/// # Safety
/// `x` must hold `H·W·C` doubles and `background` `num_background·H·W·C`.
#[no_mangle]
pub unsafe extern "C" fn ls_explain_local(
    model: *const LsModel,
    codec: *const LsCodec,
    x: *const f64,
    background: *const f64,
    num_background: usize,
    height: u32,
    width: u32,
    channels: u32,
    target: i64,
    num_samples: usize,
    seed: u64,
    out: *mut *mut LsAttribution,
) -> LsStatus {
    guard(|| {
        let model = model
            .as_ref()
            .ok_or_else(|| fail(LsStatus::NullPointer, "model is null"))?;
        let codec = codec
            .as_ref()
            .ok_or_else(|| fail(LsStatus::NullPointer, "codec is null"))?;
        if out.is_null() {
            return Err(fail(LsStatus::NullPointer, "out is null"));
        }
        let shape = shape_arg(height, width, channels)?;
        let len = shape.len();
        let x = engine(Image::new(shape, slice_arg(x, len, "x")?.to_vec()))?;
        let bg_data = slice_arg(background, len * num_background, "background")?;
        let points = bg_data
            .chunks(len)
            .map(|c| Image::new(shape, c.to_vec()))
            .collect::<latent_shap::Result<Vec<_>>>();
        let bg = engine(points.and_then(BackgroundSet::new))?;
        let config = ExplainConfig {
            target: if target < 0 {
                TargetPolicy::Argmax
            } else {
                TargetPolicy::Fixed(target as usize)
            },
            method: MethodChoice::Auto,
            num_samples,
            seed,
            ..ExplainConfig::default()
        };
        let ex = Explainer::new(model.inner.clone(), codec.inner.clone(), config);
        let inner = engine(explain_local(&ex, &x, &bg, None))?;
        *out = Box::into_raw(Box::new(LsAttribution { inner }));
        Ok(())
    })
}

/// Number of players, or 0 for a null handle.
///
/// # Safety
/// `a` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ls_attribution_len(a: *const LsAttribution) -> usize {
    a.as_ref().map_or(0, |a| a.inner.values.len())
}

/// Copies values and standard errors (either may be null) into arrays of
/// length `len`, which must equal [`ls_attribution_len`].
///
/// # Safety
/// Non-null output pointers must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ls_attribution_values(
    a: *const LsAttribution,
    values: *mut f64,
    std_errors: *mut f64,
    len: usize,
) -> LsStatus {
    guard(|| {
        let a = a
            .as_ref()
            .ok_or_else(|| fail(LsStatus::NullPointer, "attribution is null"))?;
        if len != a.inner.values.len() {
            return Err(fail(LsStatus::InvalidArgument, "len does not match the attribution"));
        }
        if !values.is_null() {
            ptr::copy_nonoverlapping(a.inner.values.as_ptr(), values, len);
        }
        if !std_errors.is_null() {
            ptr::copy_nonoverlapping(a.inner.std_errors.as_ptr(), std_errors, len);
        }
        Ok(())
    })
}

/// `v(N)` and `v(∅)` (sample means for Monte-Carlo results).
///
/// # Safety
/// Non-null output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ls_attribution_endpoints(
    a: *const LsAttribution,
    v_full: *mut f64,
    v_empty: *mut f64,
) -> LsStatus {
    guard(|| {
        let a = a
            .as_ref()
            .ok_or_else(|| fail(LsStatus::NullPointer, "attribution is null"))?;
        if !v_full.is_null() {
            *v_full = a.inner.v_full;
        }
        if !v_empty.is_null() {
            *v_empty = a.inner.v_empty;
        }
        Ok(())
    })
}

/// JSON report of the attribution; release with [`ls_string_free`].
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ls_attribution_to_json(a: *const LsAttribution, out: *mut *mut c_char) -> LsStatus {
    guard(|| {
        let a = a
            .as_ref()
            .ok_or_else(|| fail(LsStatus::NullPointer, "attribution is null"))?;
        if out.is_null() {
            return Err(fail(LsStatus::NullPointer, "out is null"));
        }
        let json = Report::Local(a.inner.clone()).to_json();
        *out = CString::new(json)
            .map_err(|_| fail(LsStatus::Internal, "report contains NUL"))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `a` must be null or a handle returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ls_attribution_free(a: *mut LsAttribution) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ls_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ls_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}
