//! C ABI over the pipeline model: load a saved model, score frame buffers
//! and compute equal error rates.
//!
//! Every fallible call returns an [`SmnaeStatus`]. On failure the message is
//! kept per thread and can be read with [`smnae_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use smnae::eval::compute_eer;
use smnae::pipeline::{score_with_fusion, Fusion, PipelineModel, VideoSequence};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmnaeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    DimensionMismatch = 5,
    Numerical = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmnaeFusion {
    /// Use the rule stored in the model.
    Default = 0,
    Sum = 1,
    Max = 2,
}

/// Result of scoring one ordered video pair.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SmnaeScore {
    pub fused_score: f64,
    /// Fused score on a per-vidlet scale (sum divided by the vidlet count).
    pub normalized_score: f64,
    pub threshold: f64,
    pub vidlets: usize,
    /// 1 when the pair is declared kin.
    pub kin: u8,
}

/// Opaque handle to a loaded pipeline model.
pub struct SmnaeModel {
    inner: PipelineModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = clean);
}

fn fail(status: SmnaeStatus, msg: &str) -> SmnaeStatus {
    set_error(msg);
    status
}

fn status_of(e: &smnae::Error) -> SmnaeStatus {
    use smnae::Error as E;
    match e {
        E::DimensionMismatch { .. } => SmnaeStatus::DimensionMismatch,
        E::InvalidParameter(_) | E::InsufficientData(_) => SmnaeStatus::InvalidArgument,
        E::NonFinite(_) | E::Divergence { .. } => SmnaeStatus::Numerical,
        E::Io { .. } => SmnaeStatus::Io,
        E::Format(_) => SmnaeStatus::Format,
    }
}

fn guard(body: impl FnOnce() -> Result<(), SmnaeStatus>) -> SmnaeStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SmnaeStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(SmnaeStatus::Panic, "internal panic"),
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, SmnaeStatus>;
}

impl<T> OrStatus<T> for smnae::Result<T> {
    fn or_status(self) -> Result<T, SmnaeStatus> {
        self.map_err(|e| fail(status_of(&e), &e.to_string()))
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), SmnaeStatus> {
    if p.is_null() {
        Err(fail(SmnaeStatus::NullPointer, &format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// Copies `n_frames * frame_dim` row-major values into a video.
unsafe fn video_from(frames: *const f64, n_frames: usize, frame_dim: usize, name: &str) -> Result<VideoSequence, SmnaeStatus> {
    non_null(frames, name)?;
    let len = n_frames
        .checked_mul(frame_dim)
        .ok_or_else(|| fail(SmnaeStatus::InvalidArgument, "frame buffer size overflows"))?;
    if len == 0 {
        return Err(fail(SmnaeStatus::InvalidArgument, &format!("{name} is empty")));
    }
    let data = slice::from_raw_parts(frames, len);
    VideoSequence::new(data.chunks(frame_dim).map(<[f64]>::to_vec).collect(), name, name).or_status()
}

fn fusion_for(model: &PipelineModel, fusion: SmnaeFusion) -> Fusion {
    match fusion {
        SmnaeFusion::Default => model.fusion,
        SmnaeFusion::Sum => Fusion::Sum,
        SmnaeFusion::Max => Fusion::Max,
    }
}

/// Message of the last failure on this thread, or an empty string. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn smnae_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn smnae_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Loads a model file. On success `*out` owns a handle to release with
/// [`smnae_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn smnae_model_load(path: *const c_char, out: *mut *mut SmnaeModel) -> SmnaeStatus {
    guard(|| {
        non_null(path, "path")?;
        non_null(out, "out")?;
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(SmnaeStatus::InvalidArgument, "path is not valid UTF-8"))?;
        let inner = PipelineModel::load(Path::new(path)).or_status()?;
        *out = Box::into_raw(Box::new(SmnaeModel { inner }));
        Ok(())
    })
}

/// Loads a model from an in-memory copy of a model file.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smnae_model_load_bytes(data: *const u8, len: usize, out: *mut *mut SmnaeModel) -> SmnaeStatus {
    guard(|| {
        non_null(data, "data")?;
        non_null(out, "out")?;
        let inner = PipelineModel::from_bytes(slice::from_raw_parts(data, len)).or_status()?;
        *out = Box::into_raw(Box::new(SmnaeModel { inner }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from a load function and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn smnae_model_free(model: *mut SmnaeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Pixels per frame the model expects.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn smnae_model_frame_dim(model: *const SmnaeModel, out: *mut usize) -> SmnaeStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        *out = (*model).inner.frame_dim();
        Ok(())
    })
}

/// Vidlet half-width `z`; a vidlet spans `2z + 1` frames.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn smnae_model_z(model: *const SmnaeModel, out: *mut usize) -> SmnaeStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        *out = (*model).inner.z;
        Ok(())
    })
}

/// Scores the ordered pair `(a, b)`. Frames are row-major: frame `t` of a
/// video occupies `frames[t * frame_dim .. (t + 1) * frame_dim]`.
///
/// # Safety
/// The frame buffers must hold `n_frames * frame_dim` readable values and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smnae_score_pair(
    model: *const SmnaeModel,
    frames_a: *const f64,
    n_frames_a: usize,
    frames_b: *const f64,
    n_frames_b: usize,
    frame_dim: usize,
    fusion: SmnaeFusion,
    out: *mut SmnaeScore,
) -> SmnaeStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        let model = &(*model).inner;
        let a = video_from(frames_a, n_frames_a, frame_dim, "frames_a")?;
        let b = video_from(frames_b, n_frames_b, frame_dim, "frames_b")?;
        let report = score_with_fusion(model, &a, &b, fusion_for(model, fusion)).or_status()?;
        *out = SmnaeScore {
            fused_score: report.fused_score,
            normalized_score: report.normalized_score(),
            threshold: report.threshold,
            vidlets: report.per_vidlet_probs.len(),
            kin: u8::from(report.kin),
        };
        Ok(())
    })
}

/// Writes up to `capacity` per-vidlet kin probabilities to `probs` and the
/// full count to `*written`. With too small a buffer nothing is copied, the
/// count is still reported and the status is `InvalidArgument`.
///
/// # Safety
/// Buffers as for [`smnae_score_pair`]; `probs` must hold `capacity` values.
#[no_mangle]
pub unsafe extern "C" fn smnae_vidlet_probabilities(
    model: *const SmnaeModel,
    frames_a: *const f64,
    n_frames_a: usize,
    frames_b: *const f64,
    n_frames_b: usize,
    frame_dim: usize,
    probs: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> SmnaeStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(written, "written")?;
        let model = &(*model).inner;
        let a = video_from(frames_a, n_frames_a, frame_dim, "frames_a")?;
        let b = video_from(frames_b, n_frames_b, frame_dim, "frames_b")?;
        let p = smnae::pipeline::vidlet_probabilities(model, &a, &b).or_status()?;
        *written = p.len();
        if p.len() > capacity {
            return Err(fail(
                SmnaeStatus::InvalidArgument,
                &format!("buffer holds {capacity} values, {} needed", p.len()),
            ));
        }
        if !p.is_empty() {
            non_null(probs, "probs")?;
            ptr::copy_nonoverlapping(p.as_ptr(), probs, p.len());
        }
        Ok(())
    })
}

/// Equal error rate of `n` scores with labels (nonzero = kin). Writes the
/// rate in [0, 1] and the accuracy `100 * (1 - eer)`.
///
/// # Safety
/// `scores` and `labels` must hold `n` values; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn smnae_compute_eer(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    eer: *mut f64,
    accuracy_pct: *mut f64,
) -> SmnaeStatus {
    guard(|| {
        non_null(scores, "scores")?;
        non_null(labels, "labels")?;
        non_null(eer, "eer")?;
        non_null(accuracy_pct, "accuracy_pct")?;
        let s = slice::from_raw_parts(scores, n);
        let l: Vec<bool> = slice::from_raw_parts(labels, n).iter().map(|&v| v != 0).collect();
        let r = compute_eer(s, &l).or_status()?;
        *eer = r.eer;
        *accuracy_pct = r.accuracy_pct;
        Ok(())
    })
}
