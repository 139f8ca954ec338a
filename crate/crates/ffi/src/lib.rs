//! C interface to the slide pipeline.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free` function. Every fallible call returns a
//! [`LeanetStatus`] and, on failure, records a message readable through
//! [`leanet_last_error`] on the same thread. Strings handed out by this
//! library are NUL-terminated UTF-8 and must be released with
//! [`leanet_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use leanet::dataio::LabelSet;
use leanet::extract::{AdapterRegistry, SlideDocument};
use leanet::narrate::{script_for, to_markup, transcript, Mode};
use leanet::pipeline::{process_slide, PipelineOptions};
use leanet::segnet::{checkpoint, SegNet};
use leanet::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LeanetStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    NotFound = 3,
    Io = 4,
    /// Malformed or invalid checkpoint, image or document.
    Parse = 5,
    Internal = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LeanetMode {
    /// Every region in reading order.
    ReadAll = 0,
    /// The single region named by `region_id`.
    Interactive = 1,
}

/// A loaded network with its label set and stub recognisers.
pub struct LeanetModel {
    net: SegNet,
    labels: LabelSet,
    registry: AdapterRegistry,
}

pub struct LeanetDocument {
    doc: SlideDocument,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(LeanetStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NotFound(_) => LeanetStatus::NotFound,
            Error::Io { .. } => LeanetStatus::Io,
            Error::Config(_) | Error::Shape(_) => LeanetStatus::InvalidArgument,
            Error::Parse { .. } | Error::Validation { .. } | Error::Json(_) | Error::Image(_) => LeanetStatus::Parse,
            _ => LeanetStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(LeanetStatus::InvalidArgument, msg.into())
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Run `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LeanetStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LeanetStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            LeanetStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(LeanetStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("`{name}` is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(LeanetStatus::NullArgument, format!("`{name}` is null")))
}

fn check_out<T>(out: *mut T) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure(LeanetStatus::NullArgument, "output pointer is null".into()))
    } else {
        Ok(())
    }
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(LeanetStatus::Internal, "string contains a NUL byte".into()))
}

fn check_threshold(threshold: f64) -> Result<(), Failure> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("threshold must lie in (0, 1), got {threshold}")))
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn leanet_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Load a checkpoint. `labels_path` may be NULL, in which case `labels.txt`
/// next to the checkpoint is read.
///
/// # Safety
/// String arguments must be NUL-terminated or NULL; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn leanet_model_load(
    checkpoint_path: *const c_char,
    labels_path: *const c_char,
    out: *mut *mut LeanetModel,
) -> LeanetStatus {
    guard(|| {
        check_out(out)?;
        let ckpt = Path::new(str_arg(checkpoint_path, "checkpoint_path")?);
        if !ckpt.is_file() {
            return Err(Failure(
                LeanetStatus::NotFound,
                format!("checkpoint `{}` does not exist", ckpt.display()),
            ));
        }
        let labels_file = if labels_path.is_null() {
            ckpt.with_file_name("labels.txt")
        } else {
            Path::new(str_arg(labels_path, "labels_path")?).to_path_buf()
        };
        if !labels_file.is_file() {
            return Err(Failure(
                LeanetStatus::NotFound,
                format!("label manifest `{}` does not exist", labels_file.display()),
            ));
        }
        let text = std::fs::read_to_string(&labels_file).map_err(|e| Error::io(&labels_file, e))?;
        let labels = LabelSet::from_manifest(&text)?;
        let net = checkpoint::load(ckpt, None)?;
        net.check_label_count(labels.len())?;
        let model = LeanetModel {
            net,
            labels,
            registry: AdapterRegistry::stubs(None),
        };
        *out = Box::into_raw(Box::new(model));
        Ok(())
    })
}

/// Number of output classes, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle from [`leanet_model_load`].
#[no_mangle]
pub unsafe extern "C" fn leanet_model_num_classes(model: *const LeanetModel) -> usize {
    model.as_ref().map_or(0, |m| m.labels.len())
}

/// # Safety
/// `model` must be NULL or a handle from [`leanet_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn leanet_model_free(model: *mut LeanetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

fn run_pipeline(model: &LeanetModel, image: &image::RgbImage, image_ref: &str, threshold: f64) -> Result<LeanetDocument, Failure> {
    check_threshold(threshold)?;
    let opts = PipelineOptions {
        threshold,
        ..PipelineOptions::default()
    };
    let doc = process_slide(&model.net, &model.labels, image, image_ref, &model.registry, &opts)?;
    Ok(LeanetDocument { doc })
}

/// Segment an encoded image (PNG) held in memory and build its document.
///
/// # Safety
/// `data` must point to `len` readable bytes; `image_ref` must be
/// NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn leanet_process_image(
    model: *const LeanetModel,
    data: *const u8,
    len: usize,
    image_ref: *const c_char,
    threshold: f64,
    out: *mut *mut LeanetDocument,
) -> LeanetStatus {
    guard(|| {
        check_out(out)?;
        let model = ref_arg(model, "model")?;
        if data.is_null() {
            return Err(Failure(LeanetStatus::NullArgument, "`data` is null".into()));
        }
        let image_ref = str_arg(image_ref, "image_ref")?;
        let bytes = std::slice::from_raw_parts(data, len);
        let image = image::load_from_memory(bytes).map_err(Error::from)?.to_rgb8();
        *out = Box::into_raw(Box::new(run_pipeline(model, &image, image_ref, threshold)?));
        Ok(())
    })
}

/// Segment an image file; the document's `image_ref` is the file name.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn leanet_process_file(
    model: *const LeanetModel,
    path: *const c_char,
    threshold: f64,
    out: *mut *mut LeanetDocument,
) -> LeanetStatus {
    guard(|| {
        check_out(out)?;
        let model = ref_arg(model, "model")?;
        let path = Path::new(str_arg(path, "path")?);
        if !path.is_file() {
            return Err(Failure(
                LeanetStatus::NotFound,
                format!("image `{}` does not exist", path.display()),
            ));
        }
        let image = image::open(path).map_err(Error::from)?.to_rgb8();
        let image_ref = path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        *out = Box::into_raw(Box::new(run_pipeline(model, &image, &image_ref, threshold)?));
        Ok(())
    })
}

/// Parse and validate a document from its JSON form.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn leanet_document_parse(json: *const c_char, out: *mut *mut LeanetDocument) -> LeanetStatus {
    guard(|| {
        check_out(out)?;
        let doc = SlideDocument::from_json(str_arg(json, "json")?)?;
        *out = Box::into_raw(Box::new(LeanetDocument { doc }));
        Ok(())
    })
}

/// Canonical JSON of the document.
///
/// # Safety
/// `doc` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn leanet_document_to_json(doc: *const LeanetDocument, out: *mut *mut c_char) -> LeanetStatus {
    guard(|| {
        check_out(out)?;
        let doc = ref_arg(doc, "doc")?;
        *out = into_c_string(doc.doc.to_canonical_json()?)?;
        Ok(())
    })
}

/// Number of regions, or 0 for NULL.
///
/// # Safety
/// `doc` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn leanet_document_region_count(doc: *const LeanetDocument) -> usize {
    doc.as_ref().map_or(0, |d| d.doc.regions.len())
}

/// Spoken transcript, one line per utterance. `region_id` is read only in
/// interactive mode.
///
/// # Safety
/// `doc` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn leanet_document_narrate(
    doc: *const LeanetDocument,
    mode: LeanetMode,
    region_id: u32,
    out: *mut *mut c_char,
) -> LeanetStatus {
    guard(|| {
        check_out(out)?;
        let doc = ref_arg(doc, "doc")?;
        let script = match mode {
            LeanetMode::ReadAll => script_for(&doc.doc, Mode::NonInteractive, None)?,
            LeanetMode::Interactive => script_for(&doc.doc, Mode::Interactive, Some(region_id))?,
        };
        *out = into_c_string(transcript(&script))?;
        Ok(())
    })
}

/// Markup rendering of the document.
///
/// # Safety
/// `doc` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn leanet_document_markup(doc: *const LeanetDocument, out: *mut *mut c_char) -> LeanetStatus {
    guard(|| {
        check_out(out)?;
        let doc = ref_arg(doc, "doc")?;
        *out = into_c_string(to_markup(&doc.doc))?;
        Ok(())
    })
}

/// # Safety
/// `doc` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn leanet_document_free(doc: *mut LeanetDocument) {
    if !doc.is_null() {
        drop(Box::from_raw(doc));
    }
}

/// # Safety
/// `s` must be NULL or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn leanet_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
