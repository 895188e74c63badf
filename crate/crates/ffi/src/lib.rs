//! C ABI over the metrics, phantom and degradation routines.
//!
//! Volumes cross the boundary as opaque handles that the caller frees with
//! the matching `*_free` function. Every fallible call returns a
//! [`VbStatus`]; on failure a message is kept per thread and can be read with
//! [`vb_last_error`]. Arrays are C-order (last axis fastest).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use vesselbench::degrade::DegradationSpec;
use vesselbench::io::{read_label, read_volume, write_volume};
use vesselbench::metrics::{cl_dice, dice, skeletonize};
use vesselbench::phantom::{generate_phantom, PhantomConfig};
use vesselbench::{confusion_counts, Error, Geometry, LabelVolume, Volume3D};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VbStatus {
    Ok = 0,
    NullPointer = 1,
    Io = 2,
    Format = 3,
    ShapeMismatch = 4,
    InvalidArgument = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Binary mask, values 0/1.
pub struct VbLabel(LabelVolume);

/// Intensity volume.
pub struct VbVolume(Volume3D);

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VbClDiceReport {
    pub tprec: f64,
    pub tsens: f64,
    pub cldice: f64,
    pub dice: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(VbStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => VbStatus::Io,
            Error::MalformedHeader(_) | Error::Non3d(_) | Error::Json(_) | Error::Csv(_) => VbStatus::Format,
            Error::ShapeMismatch(..) => VbStatus::ShapeMismatch,
            _ => VbStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(VbStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, turning errors and panics into a status plus stored message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> VbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VbStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            VbStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(VbStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn shape_arg(shape: *const usize) -> Result<[usize; 3], Fail> {
    if shape.is_null() {
        return Err(null("shape"));
    }
    let s = std::slice::from_raw_parts(shape, 3);
    Ok([s[0], s[1], s[2]])
}

unsafe fn put<T>(out: *mut *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(v));
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn vb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a label from `shape[0]*shape[1]*shape[2]` bytes; nonzero is
/// foreground.
///
/// # Safety
/// `shape` points to 3 values, `data` to `len` bytes, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn vb_label_new(shape: *const usize, data: *const u8, len: usize, out: *mut *mut VbLabel) -> VbStatus {
    guard(|| {
        let shape = shape_arg(shape)?;
        if data.is_null() {
            return Err(null("data"));
        }
        let bytes = std::slice::from_raw_parts(data, len).iter().map(|&b| (b != 0) as u8).collect();
        let geom = Geometry::new(shape, [1.0; 3])?;
        put(out, VbLabel(LabelVolume::new(geom, bytes)?))
    })
}

/// # Safety
/// `path` is a NUL-terminated string, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn vb_label_read(path: *const c_char, out: *mut *mut VbLabel) -> VbStatus {
    guard(|| put(out, VbLabel(read_label(PathBuf::from(str_arg(path, "path")?))?)))
}

/// # Safety
/// `label` is a live handle, `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vb_label_write(label: *const VbLabel, path: *const c_char) -> VbStatus {
    guard(|| Ok(write_volume(&ref_arg(label, "label")?.0, str_arg(path, "path")?)?))
}

/// # Safety
/// `label` is a live handle, `shape` points to 3 writable values.
#[no_mangle]
pub unsafe extern "C" fn vb_label_shape(label: *const VbLabel, shape: *mut usize) -> VbStatus {
    guard(|| {
        let l = ref_arg(label, "label")?;
        if shape.is_null() {
            return Err(null("shape"));
        }
        std::slice::from_raw_parts_mut(shape, 3).copy_from_slice(&l.0.shape());
        Ok(())
    })
}

/// Number of foreground voxels, or 0 for a null handle.
///
/// # Safety
/// `label` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vb_label_count(label: *const VbLabel) -> usize {
    label.as_ref().map_or(0, |l| l.0.count())
}

/// Copies the voxels into `buf`, which must hold at least the voxel count.
///
/// # Safety
/// `label` is a live handle, `buf` points to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn vb_label_copy(label: *const VbLabel, buf: *mut u8, len: usize) -> VbStatus {
    guard(|| {
        let l = &ref_arg(label, "label")?.0;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < l.data.len() {
            return Err(Fail(VbStatus::BufferTooSmall, format!("need {} bytes, got {len}", l.data.len())));
        }
        std::slice::from_raw_parts_mut(buf, l.data.len()).copy_from_slice(&l.data);
        Ok(())
    })
}

/// # Safety
/// `label` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vb_label_free(label: *mut VbLabel) {
    if !label.is_null() {
        drop(Box::from_raw(label));
    }
}

/// # Safety
/// `path` is a NUL-terminated string, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn vb_volume_read(path: *const c_char, out: *mut *mut VbVolume) -> VbStatus {
    guard(|| put(out, VbVolume(read_volume(PathBuf::from(str_arg(path, "path")?))?)))
}

/// # Safety
/// `volume` is a live handle, `shape` points to 3 writable values.
#[no_mangle]
pub unsafe extern "C" fn vb_volume_shape(volume: *const VbVolume, shape: *mut usize) -> VbStatus {
    guard(|| {
        let v = ref_arg(volume, "volume")?;
        if shape.is_null() {
            return Err(null("shape"));
        }
        std::slice::from_raw_parts_mut(shape, 3).copy_from_slice(&v.0.shape());
        Ok(())
    })
}

/// # Safety
/// `volume` is a live handle, `buf` points to `len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn vb_volume_copy(volume: *const VbVolume, buf: *mut f32, len: usize) -> VbStatus {
    guard(|| {
        let v = &ref_arg(volume, "volume")?.0;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < v.data.len() {
            return Err(Fail(VbStatus::BufferTooSmall, format!("need {} floats, got {len}", v.data.len())));
        }
        std::slice::from_raw_parts_mut(buf, v.data.len()).copy_from_slice(&v.data);
        Ok(())
    })
}

/// # Safety
/// `volume` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vb_volume_free(volume: *mut VbVolume) {
    if !volume.is_null() {
        drop(Box::from_raw(volume));
    }
}

/// Generates a phantom. `config_json` may be null for defaults; missing keys
/// take their defaults.
///
/// # Safety
/// `config_json` is null or NUL-terminated; both outputs are writable.
#[no_mangle]
pub unsafe extern "C" fn vb_phantom_generate(
    config_json: *const c_char,
    image_out: *mut *mut VbVolume,
    label_out: *mut *mut VbLabel,
) -> VbStatus {
    guard(|| {
        if image_out.is_null() || label_out.is_null() {
            return Err(null("output handle"));
        }
        let cfg: PhantomConfig = if config_json.is_null() {
            PhantomConfig::default()
        } else {
            serde_json::from_str(str_arg(config_json, "config_json")?).map_err(Error::from)?
        };
        let p = generate_phantom(&cfg)?;
        put(image_out, VbVolume(p.image))?;
        put(label_out, VbLabel(p.label))
    })
}

/// # Safety
/// Both handles are live and `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn vb_dice(pred: *const VbLabel, gt: *const VbLabel, out: *mut f64) -> VbStatus {
    guard(|| {
        let c = confusion_counts(&ref_arg(pred, "pred")?.0, &ref_arg(gt, "gt")?.0)?;
        *out.as_mut().ok_or_else(|| null("out"))? = dice(&c);
        Ok(())
    })
}

/// # Safety
/// Both handles are live and `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn vb_cldice(pred: *const VbLabel, gt: *const VbLabel, out: *mut VbClDiceReport) -> VbStatus {
    guard(|| {
        let r = cl_dice(&ref_arg(pred, "pred")?.0, &ref_arg(gt, "gt")?.0)?;
        *out.as_mut().ok_or_else(|| null("out"))? =
            VbClDiceReport { tprec: r.tprec, tsens: r.tsens, cldice: r.cldice, dice: r.dice };
        Ok(())
    })
}

/// # Safety
/// `mask` is a live handle and `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn vb_skeletonize(mask: *const VbLabel, out: *mut *mut VbLabel) -> VbStatus {
    guard(|| put(out, VbLabel(skeletonize(&ref_arg(mask, "mask")?.0).mask)))
}

/// Applies `erosion`, `dilation` or `removed`; `level` (1..=3) is read only
/// for `removed`, as is `seed`.
///
/// # Safety
/// `label` is a live handle, `kind` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vb_degrade(
    label: *const VbLabel,
    kind: *const c_char,
    level: u8,
    seed: u64,
    out: *mut *mut VbLabel,
) -> VbStatus {
    guard(|| {
        let kind = str_arg(kind, "kind")?;
        let level = (kind == "removed").then_some(level);
        let spec = DegradationSpec::parse(kind, level, seed)?;
        put(out, VbLabel(spec.apply(&ref_arg(label, "label")?.0)?))
    })
}
