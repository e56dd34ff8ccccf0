//! C ABI over the gait classifier.
//!
//! Every fallible call returns a [`GvStatus`]; on failure the message is kept
//! per thread and read back with [`gv_last_error`]. Handles are opaque and
//! released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::OnceLock;

use candle_core::Device;
use gait_vlm::caption_decoder::{token_to_value, value_to_token};
use gait_vlm::encoders::Tokenizer;
use gait_vlm::harness::GaitModel;
use gait_vlm::video_branch::FrameSequence;
use gait_vlm::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Config = 5,
    Shape = 6,
    OutOfRange = 7,
    Invalid = 8,
    Tensor = 9,
    Diverged = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

impl From<&Error> for GvStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Tensor(_) => GvStatus::Tensor,
            Error::Io { .. } => GvStatus::Io,
            Error::Parse { .. } => GvStatus::Parse,
            Error::Config(_) => GvStatus::Config,
            Error::Degenerate { .. } => GvStatus::Invalid,
            Error::Shape { .. } => GvStatus::Shape,
            Error::ContextOverflow { .. } => GvStatus::OutOfRange,
            Error::OutOfRange(_) => GvStatus::OutOfRange,
            Error::Invalid(_) => GvStatus::Invalid,
            Error::Diverged(_) => GvStatus::Diverged,
        }
    }
}

/// Opaque trained classifier.
pub struct GvModel {
    inner: GaitModel,
    names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(status: GvStatus, message: impl Into<String>) -> GvStatus {
    let msg = CString::new(message.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
    status
}

fn guard(f: impl FnOnce() -> Result<(), GvStatus>) -> GvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GvStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => set_error(GvStatus::Panic, "panic inside gait-vlm"),
    }
}

fn lib_err(e: Error) -> GvStatus {
    set_error(GvStatus::from(&e), e.to_string())
}

fn null(what: &str) -> GvStatus {
    set_error(GvStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, GvStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| set_error(GvStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn tokenizer() -> &'static Tokenizer {
    static TOKENIZER: OnceLock<Tokenizer> = OnceLock::new();
    TOKENIZER.get_or_init(Tokenizer::new)
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn gv_status_name(status: GvStatus) -> *const c_char {
    let s: &'static CStr = match status {
        GvStatus::Ok => c"ok",
        GvStatus::NullPointer => c"null pointer",
        GvStatus::InvalidUtf8 => c"invalid utf-8",
        GvStatus::Io => c"io error",
        GvStatus::Parse => c"parse error",
        GvStatus::Config => c"config error",
        GvStatus::Shape => c"shape mismatch",
        GvStatus::OutOfRange => c"out of range",
        GvStatus::Invalid => c"invalid input",
        GvStatus::Tensor => c"tensor error",
        GvStatus::Diverged => c"diverged",
        GvStatus::BufferTooSmall => c"buffer too small",
        GvStatus::Panic => c"panic",
    };
    s.as_ptr()
}

/// Loads a checkpoint directory written by `gait-vlm train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gv_model_load(path: *const c_char, out: *mut *mut GvModel) -> GvStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let inner = GaitModel::load(path, &Device::Cpu).map_err(lib_err)?;
        let names = inner
            .class_names()
            .into_iter()
            .map(|n| CString::new(n).map_err(|_| set_error(GvStatus::Invalid, "class name contains NUL")))
            .collect::<Result<Vec<_>, _>>()?;
        *out = Box::into_raw(Box::new(GvModel { inner, names }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`gv_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gv_model_free(model: *mut GvModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of classes, 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gv_model_num_classes(model: *const GvModel) -> usize {
    model.as_ref().map_or(0, |m| m.names.len())
}

/// Class name owned by the handle, null when out of range.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gv_model_class_name(model: *const GvModel, index: usize) -> *const c_char {
    model
        .as_ref()
        .and_then(|m| m.names.get(index))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Classifies `frames` grayscale or color frames of `height x width x channels`
/// u8 pixels. Writes class probabilities to `probabilities[0..capacity]` and the
/// predicted index to `class_out`.
///
/// # Safety
/// `pixels` must hold `frames * height * width * channels` bytes and
/// `probabilities` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn gv_model_classify(
    model: *const GvModel,
    pixels: *const u8,
    frames: usize,
    height: usize,
    width: usize,
    channels: usize,
    probabilities: *mut f64,
    capacity: usize,
    class_out: *mut usize,
) -> GvStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if pixels.is_null() {
            return Err(null("pixels"));
        }
        if class_out.is_null() {
            return Err(null("class_out"));
        }
        let k = m.names.len();
        if capacity < k {
            return Err(set_error(
                GvStatus::BufferTooSmall,
                format!("probability buffer holds {capacity}, need {k}"),
            ));
        }
        if probabilities.is_null() {
            return Err(null("probabilities"));
        }
        let n = frames
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| set_error(GvStatus::OutOfRange, "frame buffer size overflows"))?;
        let buf = std::slice::from_raw_parts(pixels, n).to_vec();
        let video = FrameSequence::new(buf, frames, height, width, channels).map_err(lib_err)?;
        let pred = m.inner.classify_video(&video).map_err(lib_err)?;
        std::slice::from_raw_parts_mut(probabilities, k).copy_from_slice(&pred.probabilities);
        *class_out = pred.class;
        Ok(())
    })
}

/// Number token for a parameter value.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gv_value_to_token(value: f64, out: *mut u32) -> GvStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = value_to_token(value).map_err(lib_err)?;
        Ok(())
    })
}

/// Value represented by a number token.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gv_token_to_value(token: u32, out: *mut f64) -> GvStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = token_to_value(token).map_err(lib_err)?;
        Ok(())
    })
}

/// Tokenizes `text` with start and end markers. `len_out` always receives the
/// required length; ids are written only when `capacity` suffices.
///
/// # Safety
/// `text` must be NUL-terminated, `ids` must hold `capacity` values or be null
/// when `capacity` is 0, and `len_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gv_tokenize(text: *const c_char, ids: *mut u32, capacity: usize, len_out: *mut usize) -> GvStatus {
    guard(|| {
        if len_out.is_null() {
            return Err(null("len_out"));
        }
        let text = str_arg(text, "text")?;
        let tokens = tokenizer().tokenize(text);
        *len_out = tokens.len();
        if capacity < tokens.len() {
            return Err(set_error(
                GvStatus::BufferTooSmall,
                format!("id buffer holds {capacity}, need {}", tokens.len()),
            ));
        }
        if ids.is_null() {
            return Err(null("ids"));
        }
        std::slice::from_raw_parts_mut(ids, tokens.len()).copy_from_slice(&tokens);
        Ok(())
    })
}
