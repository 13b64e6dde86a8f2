//! C ABI for fibergcn.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free` function. Every fallible call returns an
//! [`FgStatus`]; the message of the most recent failure on the calling
//! thread is available from [`fg_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use fibergcn::evaluation::{dice_score, precision_recall, predict_labels, voxelize_streamlines, ConfusionCounts};
use fibergcn::gcnn::GcnnModel;
use fibergcn::slt::{parse_streamline_file, write_streamline_file};
use fibergcn::streamline::StreamlineSet;
use fibergcn::synthetic::{generate_synthetic_dataset, SyntheticSpec};
use fibergcn::train::{deserialize_model, serialize_model};
use fibergcn::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    /// Model file version or consistency error.
    Model = 5,
    /// Output buffer too small; the required size was still reported.
    BufferTooSmall = 6,
    /// Any other library error.
    Failed = 7,
    Panic = 8,
}

/// Opaque set of labeled streamlines.
pub struct FgStreamlineSet {
    inner: StreamlineSet,
}

/// Opaque trained bundle detector.
pub struct FgModel {
    inner: GcnnModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FgStatus {
    match e {
        Error::Io { .. } => FgStatus::Io,
        Error::Parse { .. } => FgStatus::Parse,
        Error::Version(_) | Error::Inconsistent(_) => FgStatus::Model,
        Error::InvalidArgument(_) | Error::InvalidStreamline { .. } | Error::MissingBundle(_) => {
            FgStatus::InvalidArgument
        }
        _ => FgStatus::Failed,
    }
}

/// Runs `f`, converting errors and panics into a status and recording the message.
fn guard(f: impl FnOnce() -> Result<(), (FgStatus, String)>) -> FgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FgStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            FgStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (FgStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (FgStatus, String) {
    (FgStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, (FgStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (FgStatus::InvalidArgument, format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (FgStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `cap`) and returns the full message length without the NUL.
/// Returns 0 when the previous call succeeded.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fg_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && cap > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Reads an SLT file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fg_streamline_set_read(path: *const c_char, out: *mut *mut FgStreamlineSet) -> FgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path, "path")?;
        let inner = parse_streamline_file(path).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(FgStreamlineSet { inner }));
        Ok(())
    })
}

/// Writes a set as an SLT file (atomically).
///
/// # Safety
/// `set` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fg_streamline_set_write(set: *const FgStreamlineSet, path: *const c_char) -> FgStatus {
    guard(|| {
        let set = as_ref(set, "set")?;
        let path = path_arg(path, "path")?;
        write_streamline_file(&set.inner, path).map_err(lib_err)
    })
}

/// Generates a labeled synthetic set from a spec file.
///
/// # Safety
/// `spec_path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fg_generate_synthetic(
    spec_path: *const c_char,
    seed: u64,
    out: *mut *mut FgStreamlineSet,
) -> FgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(spec_path, "spec_path")?;
        let spec = SyntheticSpec::read(path, seed).map_err(lib_err)?;
        let inner = generate_synthetic_dataset(&spec).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(FgStreamlineSet { inner }));
        Ok(())
    })
}

/// Releases a set; null is ignored.
///
/// # Safety
/// `set` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fg_streamline_set_free(set: *mut FgStreamlineSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Number of streamlines in the set.
///
/// # Safety
/// `set` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fg_streamline_set_len(set: *const FgStreamlineSet, out: *mut usize) -> FgStatus {
    guard(|| {
        let set = as_ref(set, "set")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = set.inner.len();
        Ok(())
    })
}

/// Copies streamline ids into `ids`; `*written` receives the set size.
///
/// # Safety
/// `ids` must point to `cap` writable `u64`s (or be null with `cap` 0).
#[no_mangle]
pub unsafe extern "C" fn fg_streamline_set_ids(
    set: *const FgStreamlineSet,
    ids: *mut u64,
    cap: usize,
    written: *mut usize,
) -> FgStatus {
    guard(|| {
        let set = as_ref(set, "set")?;
        if written.is_null() {
            return Err(null("written"));
        }
        let n = set.inner.len();
        *written = n;
        if cap < n {
            return Err((FgStatus::BufferTooSmall, format!("need {n} ids, buffer holds {cap}")));
        }
        if n > 0 && ids.is_null() {
            return Err(null("ids"));
        }
        for (i, s) in set.inner.streamlines.iter().enumerate() {
            *ids.add(i) = s.id;
        }
        Ok(())
    })
}

/// Reads a `GCM 1` model file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fg_model_read(path: *const c_char, out: *mut *mut FgModel) -> FgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path, "path")?;
        let inner = deserialize_model(&path).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(FgModel { inner }));
        Ok(())
    })
}

/// Writes a model file (atomically).
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fg_model_write(model: *const FgModel, path: *const c_char) -> FgStatus {
    guard(|| {
        let model = as_ref(model, "model")?;
        let path = path_arg(path, "path")?;
        serialize_model(&model.inner, &path).map_err(lib_err)
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fg_model_free(model: *mut FgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Copies the model's bundle name (NUL-terminated) into `buf`; `*needed`
/// receives the buffer size required including the NUL.
///
/// # Safety
/// `buf` must point to `cap` writable bytes (or be null with `cap` 0).
#[no_mangle]
pub unsafe extern "C" fn fg_model_bundle(
    model: *const FgModel,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> FgStatus {
    guard(|| {
        let model = as_ref(model, "model")?;
        if needed.is_null() {
            return Err(null("needed"));
        }
        let name = model.inner.bundle.as_bytes();
        *needed = name.len() + 1;
        if cap < name.len() + 1 {
            return Err((FgStatus::BufferTooSmall, format!("need {} bytes", name.len() + 1)));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        std::ptr::copy_nonoverlapping(name.as_ptr(), buf.cast::<u8>(), name.len());
        *buf.add(name.len()) = 0;
        Ok(())
    })
}

/// Classifies every streamline of `set`.
///
/// Results for the `*written` classified streamlines go to `ids`,
/// `probabilities` and `labels` (each with room for `cap` entries; a buffer
/// of the set's length always suffices). Zero-length streamlines are skipped
/// and counted in `*skipped`.
///
/// # Safety
/// Output arrays must each point to `cap` writable elements; `written` and
/// `skipped` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fg_predict(
    model: *const FgModel,
    set: *const FgStreamlineSet,
    threshold: f64,
    ids: *mut u64,
    probabilities: *mut f64,
    labels: *mut u8,
    cap: usize,
    written: *mut usize,
    skipped: *mut usize,
) -> FgStatus {
    guard(|| {
        let model = as_ref(model, "model")?;
        let set = as_ref(set, "set")?;
        if written.is_null() || skipped.is_null() {
            return Err(null("written/skipped"));
        }
        let preds = predict_labels(&model.inner, &set.inner, threshold).map_err(lib_err)?;
        let n = preds.entries.len();
        *written = n;
        *skipped = preds.skipped.len();
        if cap < n {
            return Err((FgStatus::BufferTooSmall, format!("need {n} entries, buffers hold {cap}")));
        }
        if n > 0 && (ids.is_null() || probabilities.is_null() || labels.is_null()) {
            return Err(null("output buffer"));
        }
        for (i, p) in preds.entries.iter().enumerate() {
            *ids.add(i) = p.id;
            *probabilities.add(i) = p.probability;
            *labels.add(i) = p.label as u8;
        }
        Ok(())
    })
}

/// Precision and recall from confusion counts; an undefined ratio is NaN.
///
/// # Safety
/// `precision` and `recall` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fg_precision_recall(
    true_positives: u64,
    false_positives: u64,
    false_negatives: u64,
    precision: *mut f64,
    recall: *mut f64,
) -> FgStatus {
    guard(|| {
        if precision.is_null() || recall.is_null() {
            return Err(null("precision/recall"));
        }
        let (p, r) = precision_recall(&ConfusionCounts::new(true_positives, false_positives, false_negatives, 0));
        *precision = p.unwrap_or(f64::NAN);
        *recall = r.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// Dice overlap of the visitation maps of two streamline sets.
///
/// # Safety
/// `a` and `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fg_dice(
    a: *const FgStreamlineSet,
    b: *const FgStreamlineSet,
    voxel_size: f64,
    out: *mut f64,
) -> FgStatus {
    guard(|| {
        let a = as_ref(a, "a")?;
        let b = as_ref(b, "b")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ma = voxelize_streamlines(&a.inner.streamlines, voxel_size).map_err(lib_err)?;
        let mb = voxelize_streamlines(&b.inner.streamlines, voxel_size).map_err(lib_err)?;
        *out = dice_score(&ma, &mb).map_err(lib_err)?;
        Ok(())
    })
}
