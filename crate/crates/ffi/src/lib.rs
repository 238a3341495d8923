//! C ABI over the artifact-repair toolkit.
//!
//! Objects are exposed as opaque handles created by `ar_*_new`/`ar_*_load`
//! functions and released with the matching `ar_*_free`. Every fallible
//! call returns an [`ArStatus`]; on failure a description is available from
//! [`ar_last_error`] on the same thread. Strings returned to the caller are
//! owned by the caller and must be released with [`ar_string_free`].
//!
//! Panics never cross the boundary; they are reported as
//! [`ArStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use artifact_repair::conditioning::PaletteCaptioner;
use artifact_repair::config::PipelineConfig;
use artifact_repair::datasets::{corpus_refs, validate_corpus, DatasetInstance, InstanceRef};
use artifact_repair::detector::{detect, ArtifactReport, Task};
use artifact_repair::image::RasterImage;
use artifact_repair::metrics::{eval_run, ssim, EvalOptions};
use artifact_repair::orchestrator::{
    repair, write_instance_repair, Backend, BackendChoice, Collaborators, MockBackend, RepairResult,
};
use artifact_repair::Error;

/// Result codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Config = 4,
    MissingFile = 5,
    Malformed = 6,
    DimensionMismatch = 7,
    Backend = 8,
    NotFound = 9,
    Internal = 10,
    Panic = 11,
}

/// Task of an instance loaded from a bare directory.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArTask {
    Vton = 0,
    PoseTransfer = 1,
}

/// Opaque pipeline configuration.
pub struct ArConfig {
    inner: PipelineConfig,
}

/// Opaque RGB8 image.
pub struct ArImage {
    inner: RasterImage,
}

/// Opaque corpus instance with all of its rasters and sidecars.
pub struct ArInstance {
    inner: DatasetInstance,
    dir: std::path::PathBuf,
}

/// Opaque detection result.
pub struct ArDetection {
    reports: Vec<ArtifactReport>,
}

/// Opaque repair result.
pub struct ArRepair {
    inner: RepairResult,
    source: std::path::PathBuf,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ArStatus {
    match e {
        Error::Parameter(_) | Error::UnknownLabel(_) | Error::NothingToRepair => ArStatus::InvalidArgument,
        Error::DimensionMismatch { .. } => ArStatus::DimensionMismatch,
        Error::EmptyRegion(_) | Error::Degenerate(_) | Error::Numerical(_) | Error::InsufficientCorrespondence { .. } => {
            ArStatus::Internal
        }
        Error::MissingFile(_) => ArStatus::MissingFile,
        Error::MalformedSidecar { .. } | Error::Json(_) | Error::Image(_) | Error::PngDecode(_) => ArStatus::Malformed,
        Error::PngEncode(_) => ArStatus::Internal,
        Error::Config(_) => ArStatus::Config,
        Error::Backend(_) => ArStatus::Backend,
        Error::Io(_) => ArStatus::Io,
    }
}

struct Failure(ArStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ArStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ArStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            ArStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(ArStatus::NullArgument, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(ArStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    let c = CString::new(s).map_err(|_| Failure(ArStatus::Internal, "string contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn parse_backend(name: &str) -> Result<BackendChoice, Failure> {
    name.parse().map_err(|e: String| Failure(ArStatus::InvalidArgument, e))
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ar_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ar_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ar_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------------------
// Configuration

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ar_config_default(out: *mut *mut ArConfig) -> ArStatus {
    guard(|| put(out, ArConfig { inner: PipelineConfig::default() }))
}

/// Parses TOML text; missing keys take their defaults.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ar_config_from_toml(toml: *const c_char, out: *mut *mut ArConfig) -> ArStatus {
    guard(|| {
        let text = str_arg(toml, "toml")?;
        put(out, ArConfig { inner: PipelineConfig::from_toml_str(text)? })
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ar_config_load(path: *const c_char, out: *mut *mut ArConfig) -> ArStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        put(out, ArConfig { inner: PipelineConfig::load(Path::new(path))? })
    })
}

/// Canonical TOML rendering; free with [`ar_string_free`].
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ar_config_to_toml(config: *const ArConfig, out: *mut *mut c_char) -> ArStatus {
    guard(|| {
        let cfg = ref_arg(config, "config")?;
        put_string(out, cfg.inner.to_toml()?)
    })
}

/// Overrides the inpainting seeds.
///
/// # Safety
/// `config` must be a live handle; `seeds` must point to `len` values.
#[no_mangle]
pub unsafe extern "C" fn ar_config_set_seeds(config: *mut ArConfig, seeds: *const u64, len: usize) -> ArStatus {
    guard(|| {
        let cfg = config.as_mut().ok_or_else(|| null("config"))?;
        if seeds.is_null() || len == 0 {
            return Err(Failure(ArStatus::InvalidArgument, "at least one seed is required".into()));
        }
        cfg.inner.repair.seeds = std::slice::from_raw_parts(seeds, len).to_vec();
        Ok(())
    })
}

/// # Safety
/// `config` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ar_config_free(config: *mut ArConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

// ---------------------------------------------------------------------------
// Images

/// Copies `width * height * 3` bytes of row-major RGB8 data.
///
/// # Safety
/// `rgb` must point to `len` readable bytes and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ar_image_new(width: usize, height: usize, rgb: *const u8, len: usize, out: *mut *mut ArImage) -> ArStatus {
    guard(|| {
        if rgb.is_null() {
            return Err(null("rgb"));
        }
        let data = std::slice::from_raw_parts(rgb, len).to_vec();
        put(out, ArImage { inner: RasterImage::new(width, height, data)? })
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ar_image_load_png(path: *const c_char, out: *mut *mut ArImage) -> ArStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        put(out, ArImage { inner: RasterImage::load_png(Path::new(path))? })
    })
}

/// # Safety
/// `image` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ar_image_save_png(image: *const ArImage, path: *const c_char) -> ArStatus {
    guard(|| {
        let img = ref_arg(image, "image")?;
        let path = str_arg(path, "path")?;
        Ok(img.inner.save_png(Path::new(path))?)
    })
}

/// # Safety
/// `image` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ar_image_width(image: *const ArImage) -> usize {
    image.as_ref().map_or(0, |i| i.inner.width())
}

/// # Safety
/// `image` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ar_image_height(image: *const ArImage) -> usize {
    image.as_ref().map_or(0, |i| i.inner.height())
}

/// Borrowed pointer to the RGB8 pixels, valid while the handle lives.
///
/// # Safety
/// `image` must be NULL or a live handle; `len` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn ar_image_data(image: *const ArImage, len: *mut usize) -> *const u8 {
    let Some(img) = image.as_ref() else {
        return ptr::null();
    };
    if let Some(l) = len.as_mut() {
        *l = img.inner.data().len();
    }
    img.inner.data().as_ptr()
}

/// # Safety
/// `image` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ar_image_free(image: *mut ArImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// Structural similarity of two equally sized images.
///
/// # Safety
/// `a` and `b` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ar_ssim(a: *const ArImage, b: *const ArImage, out: *mut f64) -> ArStatus {
    guard(|| {
        let (a, b) = (ref_arg(a, "a")?, ref_arg(b, "b")?);
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ssim(&a.inner, &b.inner)?;
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Instances, detection, repair

/// Loads instance `id` of the corpus at `root`.
///
/// # Safety
/// `root` and `id` must be NUL-terminated strings and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ar_instance_load(root: *const c_char, id: *const c_char, out: *mut *mut ArInstance) -> ArStatus {
    guard(|| {
        let root = Path::new(str_arg(root, "root")?);
        let id = str_arg(id, "id")?;
        let (_, refs) = corpus_refs(root)?;
        let r = refs
            .into_iter()
            .find(|r| r.id == id)
            .ok_or_else(|| Failure(ArStatus::NotFound, format!("instance {id} is not indexed")))?;
        let (inner, _) = r.load()?;
        put(out, ArInstance { inner, dir: r.dir })
    })
}

/// Loads a bare instance directory; ground-truth masks are optional.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ar_instance_load_dir(dir: *const c_char, task: ArTask, out: *mut *mut ArInstance) -> ArStatus {
    guard(|| {
        let dir = Path::new(str_arg(dir, "dir")?).to_path_buf();
        let id = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let r = InstanceRef {
            id,
            dir: dir.clone(),
            task: match task {
                ArTask::Vton => Task::Vton,
                ArTask::PoseTransfer => Task::PoseTransfer,
            },
            clean: true,
        };
        let (inner, _) = r.load()?;
        put(out, ArInstance { inner, dir })
    })
}

/// # Safety
/// `instance` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ar_instance_free(instance: *mut ArInstance) {
    if !instance.is_null() {
        drop(Box::from_raw(instance));
    }
}

/// Runs the detector.
///
/// # Safety
/// Handles must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ar_detect(config: *const ArConfig, instance: *const ArInstance, out: *mut *mut ArDetection) -> ArStatus {
    guard(|| {
        let cfg = ref_arg(config, "config")?;
        let inst = ref_arg(instance, "instance")?;
        let outcome = detect(&inst.inner.detector_inputs(), &cfg.inner.detector)?;
        put(out, ArDetection { reports: outcome.reports })
    })
}

/// # Safety
/// `detection` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ar_detection_count(detection: *const ArDetection) -> usize {
    detection.as_ref().map_or(0, |d| d.reports.len())
}

/// Class name (`"ColorTexture"`, `"Deformation"`, `"ClothDesign"`) of report
/// `index` as a static string, or NULL when out of range.
///
/// # Safety
/// `detection` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ar_detection_class(detection: *const ArDetection, index: usize) -> *const c_char {
    let Some(r) = detection.as_ref().and_then(|d| d.reports.get(index)) else {
        return ptr::null();
    };
    let s: &'static CStr = match r.class.as_str() {
        "ColorTexture" => c"ColorTexture",
        "Deformation" => c"Deformation",
        _ => c"ClothDesign",
    };
    s.as_ptr()
}

/// Pixel count of the detected mask of report `index`.
///
/// # Safety
/// `detection` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ar_detection_area(detection: *const ArDetection, index: usize) -> usize {
    detection
        .as_ref()
        .and_then(|d| d.reports.get(index))
        .map_or(0, |r| r.mask.count())
}

/// # Safety
/// `detection` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ar_detection_free(detection: *mut ArDetection) {
    if !detection.is_null() {
        drop(Box::from_raw(detection));
    }
}

/// Repairs one instance with the backend named by `backend`
/// (`mock:oracle`, `mock:blur` or `http:<url>`). The oracle uses the
/// instance target.
///
/// # Safety
/// Handles must be live, `backend` a NUL-terminated string and `out` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn ar_repair(
    config: *const ArConfig,
    instance: *const ArInstance,
    backend: *const c_char,
    out: *mut *mut ArRepair,
) -> ArStatus {
    guard(|| {
        let cfg = &ref_arg(config, "config")?.inner;
        let inst = ref_arg(instance, "instance")?;
        let choice = parse_backend(str_arg(backend, "backend")?)?;
        let target = inst.inner.target_at_output()?;
        let backend: Box<dyn Backend> = match &choice {
            BackendChoice::MockOracle => Box::new(MockBackend::oracle(target.clone())),
            BackendChoice::MockBlur => Box::new(MockBackend::blur_fill(cfg.repair.blur_sigma)),
            BackendChoice::Http(url) => Box::new(cfg.backend.client(Some(url))),
        };
        let captioner = PaletteCaptioner;
        let collab = Collaborators {
            captioner: &captioner,
            scale_model: None,
        };
        let result = repair(&inst.inner.detector_inputs(), Some(&target), cfg, backend.as_ref(), collab)?;
        put(
            out,
            ArRepair {
                inner: result,
                source: inst.dir.clone(),
            },
        )
    })
}

/// Copy of the repaired image; free with [`ar_image_free`].
///
/// # Safety
/// `result` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ar_repair_image(result: *const ArRepair, out: *mut *mut ArImage) -> ArStatus {
    guard(|| {
        let r = ref_arg(result, "result")?;
        put(out, ArImage { inner: r.inner.repaired.clone() })
    })
}

/// Number of artifact reports behind the repair.
///
/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ar_repair_report_count(result: *const ArRepair) -> usize {
    result.as_ref().map_or(0, |r| r.inner.reports.len())
}

/// Chosen seed, or false when nothing needed repair.
///
/// # Safety
/// `result` must be NULL or a live handle; `seed` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ar_repair_chosen_seed(result: *const ArRepair, seed: *mut u64) -> bool {
    match (result.as_ref().and_then(|r| r.inner.chosen_seed), seed.as_mut()) {
        (Some(s), Some(out)) => {
            *out = s;
            true
        }
        _ => false,
    }
}

/// Writes all repair artifacts into `dir` (created if needed).
///
/// # Safety
/// `result` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ar_repair_write(result: *const ArRepair, dir: *const c_char) -> ArStatus {
    guard(|| {
        let r = ref_arg(result, "result")?;
        let dir = Path::new(str_arg(dir, "dir")?);
        std::fs::create_dir_all(dir).map_err(Error::from)?;
        Ok(write_instance_repair(dir, &r.inner, &r.source)?)
    })
}

/// # Safety
/// `result` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ar_repair_free(result: *mut ArRepair) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

// ---------------------------------------------------------------------------
// Corpus tooling

/// Validates a corpus. `violations` receives the number of problems found;
/// `report_json`, when not NULL, receives the full report.
///
/// # Safety
/// `root` must be a NUL-terminated string; `violations` a valid pointer;
/// `report_json` NULL or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ar_validate_corpus(root: *const c_char, violations: *mut usize, report_json: *mut *mut c_char) -> ArStatus {
    guard(|| {
        let root = Path::new(str_arg(root, "root")?);
        let count = violations.as_mut().ok_or_else(|| null("violations"))?;
        let report = validate_corpus(root)?;
        *count = report.violations.len();
        if !report_json.is_null() {
            put_string(report_json, serde_json::to_string(&report).map_err(Error::from)?)?;
        }
        Ok(())
    })
}

/// Evaluates a corpus and writes the report files into `out_dir`.
/// `failures` receives the number of instances that could not be evaluated.
///
/// # Safety
/// Strings must be NUL-terminated, `config` a live handle and `failures` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ar_eval(
    root: *const c_char,
    config: *const ArConfig,
    backend: *const c_char,
    out_dir: *const c_char,
    failures: *mut usize,
) -> ArStatus {
    guard(|| {
        let root = Path::new(str_arg(root, "root")?);
        let cfg = &ref_arg(config, "config")?.inner;
        let choice = parse_backend(str_arg(backend, "backend")?)?;
        let out_dir = Path::new(str_arg(out_dir, "out_dir")?);
        let failures = failures.as_mut().ok_or_else(|| null("failures"))?;
        let captioner = PaletteCaptioner;
        let collab = Collaborators {
            captioner: &captioner,
            scale_model: None,
        };
        let opts = EvalOptions {
            jobs: cfg.runtime.jobs,
            ..EvalOptions::default()
        };
        let report = eval_run(root, cfg, &choice, collab, &opts)?;
        report.write(out_dir)?;
        *failures = report.failures.len();
        Ok(())
    })
}
