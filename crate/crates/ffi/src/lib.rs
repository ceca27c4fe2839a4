//! C ABI over the trackfuse engine.
//!
//! Objects are opaque handles created and destroyed through this API. Every
//! fallible call returns a [`TfStatus`]; on failure the message is available
//! from [`tf_last_error_message`] on the same thread. Strings handed out by the
//! library are NUL-terminated UTF-8 and must be released with [`tf_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use trackfuse::assignment::hungarian;
use trackfuse::io::{segment_set_line, JsonlReader};
use trackfuse::mask::{Bitmap, Mask, SegmentSet};
use trackfuse::pipeline::{run_video, Config, Tracker};
use trackfuse::propagation::SyntheticPropagator;
use trackfuse::warp::{Affine, WarpChain, WarpField};
use trackfuse::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TfStatus {
    Ok = 0,
    /// A required pointer was null.
    NullPointer = 1,
    /// Bad argument or configuration.
    InvalidArgument = 2,
    /// Malformed JSON or inconsistent input data.
    Format = 3,
    /// Propagation backend failure.
    Backend = 4,
    /// Bug or panic inside the library.
    Internal = 5,
}

/// A binary mask.
pub struct TfMask(Mask);

/// Streaming tracker driven by known inter-frame warps.
pub struct TfTracker(Tracker<SyntheticPropagator>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(TfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match (&e, e.exit_code()) {
            (Error::InvalidCost(_), _) | (_, 1) => TfStatus::InvalidArgument,
            (_, 2) => TfStatus::Format,
            (_, 3) => TfStatus::Backend,
            _ => TfStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(TfStatus::NullPointer, format!("{what} is null"))
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TfStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            TfStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(TfStatus::InvalidArgument, format!("{what} is not UTF-8: {e}")))
}

fn json_error(what: &str, e: serde_json::Error) -> Failure {
    Failure(TfStatus::Format, format!("{what}: {e}"))
}

unsafe fn config_arg(p: *const c_char) -> Result<Config, Failure> {
    let config = if p.is_null() {
        Config::default()
    } else {
        serde_json::from_str(str_arg(p, "config_json")?).map_err(|e| json_error("config", e))?
    };
    config.validate()?;
    Ok(config)
}

unsafe fn put_string(out: *mut *mut c_char, s: String) {
    *out = CString::new(s).expect("JSON has no NUL").into_raw();
}

fn jsonl(sets: &[SegmentSet]) -> String {
    sets.iter().map(|s| segment_set_line(s) + "\n").collect()
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn tf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn tf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn tf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a mask from `width * height` row-major bytes; non-zero is foreground.
///
/// # Safety
/// `data` must point to `width * height` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tf_mask_from_bitmap(
    width: u32,
    height: u32,
    data: *const u8,
    out: *mut *mut TfMask,
) -> TfStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let n = width as usize * height as usize;
        let bytes = std::slice::from_raw_parts(data, n);
        let bm = Bitmap::from_vec(width, height, bytes.iter().map(|b| *b != 0).collect())?;
        *out = Box::into_raw(Box::new(TfMask(Mask::encode(&bm))));
        Ok(())
    })
}

/// Writes the mask as `width * height` bytes of 0 or 1.
///
/// # Safety
/// `mask` must be a live handle; `out` must have room for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn tf_mask_to_bitmap(mask: *const TfMask, out: *mut u8, len: usize) -> TfStatus {
    guard(|| {
        let m = &mask.as_ref().ok_or_else(|| null("mask"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let bm = m.decode();
        if len != bm.as_slice().len() {
            return Err(Failure(
                TfStatus::InvalidArgument,
                format!("buffer holds {len} bytes, mask has {}", bm.as_slice().len()),
            ));
        }
        let dst = std::slice::from_raw_parts_mut(out, len);
        for (d, v) in dst.iter_mut().zip(bm.as_slice()) {
            *d = u8::from(*v);
        }
        Ok(())
    })
}

/// # Safety
/// `mask` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tf_mask_free(mask: *mut TfMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// Foreground pixel count; 0 for null.
///
/// # Safety
/// `mask` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tf_mask_area(mask: *const TfMask) -> u64 {
    mask.as_ref().map_or(0, |m| m.0.area())
}

/// # Safety
/// `a` and `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tf_mask_iou(a: *const TfMask, b: *const TfMask, out: *mut f64) -> TfStatus {
    guard(|| {
        let a = &a.as_ref().ok_or_else(|| null("a"))?.0;
        let b = &b.as_ref().ok_or_else(|| null("b"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = a.iou(b)?;
        Ok(())
    })
}

/// Minimum-cost assignment of an `n x n` row-major cost matrix; writes the
/// column of each row to `out`. Ties resolve to the lexicographically
/// smallest assignment.
///
/// # Safety
/// `cost` must hold `n * n` doubles and `out` room for `n` entries.
#[no_mangle]
pub unsafe extern "C" fn tf_hungarian(cost: *const f64, n: usize, out: *mut usize) -> TfStatus {
    guard(|| {
        if n == 0 {
            return Ok(());
        }
        if cost.is_null() {
            return Err(null("cost"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let flat = std::slice::from_raw_parts(cost, n * n);
        let rows: Vec<Vec<f64>> = flat.chunks(n).map(<[f64]>::to_vec).collect();
        let perm = hungarian(&rows)?;
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&perm);
        Ok(())
    })
}

/// Creates a tracker. `config_json` may be null for the defaults.
///
/// # Safety
/// `config_json` must be null or a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tf_tracker_new(config_json: *const c_char, out: *mut *mut TfTracker) -> TfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = config_arg(config_json)?;
        let tracker = Tracker::new(config, SyntheticPropagator::new(WarpChain::new()))?;
        *out = Box::into_raw(Box::new(TfTracker(tracker)));
        Ok(())
    })
}

/// Registers the motion from frame `from` to frame `to = from + 1` as the
/// affine `[a, b, tx, c, d, ty]`, mapping `(x, y)` to `(a x + b y + tx, c x + d y + ty)`.
///
/// # Safety
/// `tracker` must be live; `affine` must hold 6 doubles.
#[no_mangle]
pub unsafe extern "C" fn tf_tracker_add_warp(
    tracker: *mut TfTracker,
    from: usize,
    to: usize,
    affine: *const f64,
) -> TfStatus {
    guard(|| {
        let t = &mut tracker.as_mut().ok_or_else(|| null("tracker"))?.0;
        if affine.is_null() {
            return Err(null("affine"));
        }
        let a: [f64; 6] = std::slice::from_raw_parts(affine, 6).try_into().expect("six values");
        t.propagator_mut().add_warp(WarpField::new(from, to, Affine(a))?)?;
        Ok(())
    })
}

/// Feeds one frame of detections as a segment-set JSON object. `*out_jsonl`
/// receives the results of any window completed by this frame, one JSON line
/// per frame; it is an empty string otherwise.
///
/// # Safety
/// `tracker` must be live; `frame_json` NUL-terminated; `out_jsonl` writable.
#[no_mangle]
pub unsafe extern "C" fn tf_tracker_push_frame_json(
    tracker: *mut TfTracker,
    frame_json: *const c_char,
    out_jsonl: *mut *mut c_char,
) -> TfStatus {
    guard(|| {
        let t = &mut tracker.as_mut().ok_or_else(|| null("tracker"))?.0;
        if out_jsonl.is_null() {
            return Err(null("out_jsonl"));
        }
        let set: SegmentSet =
            serde_json::from_str(str_arg(frame_json, "frame_json")?).map_err(|e| json_error("frame", e))?;
        let done = t.push(set)?;
        put_string(out_jsonl, jsonl(&done));
        Ok(())
    })
}

/// Processes the last, partially filled window. Results as for
/// [`tf_tracker_push_frame_json`].
///
/// # Safety
/// `tracker` must be live; `out_jsonl` writable.
#[no_mangle]
pub unsafe extern "C" fn tf_tracker_finish(tracker: *mut TfTracker, out_jsonl: *mut *mut c_char) -> TfStatus {
    guard(|| {
        let t = &mut tracker.as_mut().ok_or_else(|| null("tracker"))?.0;
        if out_jsonl.is_null() {
            return Err(null("out_jsonl"));
        }
        let done = t.finish()?;
        put_string(out_jsonl, jsonl(&done));
        Ok(())
    })
}

/// # Safety
/// `tracker` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tf_tracker_free(tracker: *mut TfTracker) {
    if !tracker.is_null() {
        drop(Box::from_raw(tracker));
    }
}

/// Whole-video run on in-memory JSON Lines: detections (one segment set per
/// frame) and warps (one per consecutive frame pair). `config_json` may be
/// null. `*out_jsonl` receives one result line per frame.
///
/// # Safety
/// String arguments must be NUL-terminated or, for `config_json`, null;
/// `out_jsonl` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tf_run_video_json(
    detections_jsonl: *const c_char,
    warps_jsonl: *const c_char,
    config_json: *const c_char,
    out_jsonl: *mut *mut c_char,
) -> TfStatus {
    guard(|| {
        if out_jsonl.is_null() {
            return Err(null("out_jsonl"));
        }
        let det = str_arg(detections_jsonl, "detections_jsonl")?;
        let warps = str_arg(warps_jsonl, "warps_jsonl")?;
        let config = config_arg(config_json)?;
        let detections = JsonlReader::<_, SegmentSet>::new("detections", det.as_bytes())
            .map(|r| r.map(|(_, s)| s))
            .collect::<trackfuse::Result<Vec<_>>>()?;
        let fields = JsonlReader::<_, WarpField>::new("warps", warps.as_bytes())
            .map(|r| r.map(|(_, w)| w))
            .collect::<trackfuse::Result<Vec<_>>>()?;
        let chain = WarpChain::from_warps(fields)?;
        let out = run_video(&detections, SyntheticPropagator::new(chain), &config, None)?;
        put_string(out_jsonl, jsonl(&out.frames));
        Ok(())
    })
}
