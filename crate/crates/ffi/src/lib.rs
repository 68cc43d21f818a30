//! C interface to `textscale`.
//!
//! Objects cross the boundary as opaque handles created by `*_load` or
//! `*_new` functions and released with the matching `*_free`. Every
//! fallible function returns a [`TsStatus`]; on failure a message is
//! available from [`ts_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use ndarray::Array2;
use textscale::invariance::{learn_scale_distribution, MarginTable, ScaleDistribution};
use textscale::kernels::{self, smooth_separable_2d, BoundaryPolicy, KernelFamily};
use textscale::semgraph::{SemanticGraph, SemanticMode, SemanticSmoother};
use textscale::signals::{Signal2D, SignalKind};
use textscale::tasks::evaluate_retrieval;
use textscale::textio;
use textscale::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Format = 4,
    InvalidArgument = 5,
    DimensionMismatch = 6,
    Numerical = 7,
    Data = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsKernelFamily {
    DiscreteGaussian = 0,
    SampledGaussian = 1,
    Poisson = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsBoundary {
    Mirror = 0,
    Renormalize = 1,
    ZeroPad = 2,
}

impl From<TsKernelFamily> for KernelFamily {
    fn from(f: TsKernelFamily) -> Self {
        match f {
            TsKernelFamily::DiscreteGaussian => KernelFamily::DiscreteGaussian,
            TsKernelFamily::SampledGaussian => KernelFamily::SampledGaussian,
            TsKernelFamily::Poisson => KernelFamily::Poisson,
        }
    }
}

impl From<TsBoundary> for BoundaryPolicy {
    fn from(b: TsBoundary) -> Self {
        match b {
            TsBoundary::Mirror => BoundaryPolicy::Mirror,
            TsBoundary::Renormalize => BoundaryPolicy::Renormalize,
            TsBoundary::ZeroPad => BoundaryPolicy::ZeroPad,
        }
    }
}

pub struct TsVocabulary {
    inner: textio::Vocabulary,
}

pub struct TsGraph {
    inner: Arc<SemanticGraph>,
}

pub struct TsSignal {
    inner: Signal2D,
}

pub struct TsScaleDistribution {
    inner: ScaleDistribution,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

fn status_of(e: &Error) -> TsStatus {
    match e {
        Error::Io { .. } => TsStatus::Io,
        Error::Format { .. } => TsStatus::Format,
        Error::InvalidParameter(_)
        | Error::InvalidScale(_)
        | Error::InvalidRange(_)
        | Error::UnsupportedOrder(_)
        | Error::UnstableStep(_) => TsStatus::InvalidArgument,
        Error::DimensionMismatch(_) => TsStatus::DimensionMismatch,
        Error::SingularSystem(_) | Error::ZeroMass | Error::NoPositiveMargin => TsStatus::Numerical,
        _ => TsStatus::Data,
    }
}

struct Failure(TsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `body`, converting errors and panics into a status code.
fn guard<F>(body: F) -> TsStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            TsStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            TsStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(TsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Failure(TsStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ts_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_vocabulary_load(path: *const c_char, out: *mut *mut TsVocabulary) -> TsStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        store(out, TsVocabulary { inner: textio::read_vocabulary(path)? })
    })
}

/// # Safety
/// `vocab` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ts_vocabulary_len(vocab: *const TsVocabulary) -> usize {
    vocab.as_ref().map_or(0, |v| v.inner.len())
}

/// # Safety
/// `vocab` must come from [`ts_vocabulary_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ts_vocabulary_free(vocab: *mut TsVocabulary) {
    free(vocab)
}

/// # Safety
/// `path` must be a NUL-terminated string, `vocab` a live handle and `out`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_graph_load(
    path: *const c_char,
    vocab: *const TsVocabulary,
    out: *mut *mut TsGraph,
) -> TsStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        let vocab = handle(vocab, "vocabulary")?;
        let graph = textio::read_graph(path, &vocab.inner)?;
        store(out, TsGraph { inner: Arc::new(graph) })
    })
}

/// # Safety
/// `graph` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ts_graph_edge_count(graph: *const TsGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.inner.edge_count())
}

/// # Safety
/// `graph` must come from [`ts_graph_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ts_graph_free(graph: *mut TsGraph) {
    free(graph)
}

/// Copies a row-major `rows` by `cols` array into a new signal.
///
/// # Safety
/// `values` must point to `rows * cols` doubles and `out` be a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_signal_new(
    values: *const f64,
    rows: usize,
    cols: usize,
    out: *mut *mut TsSignal,
) -> TsStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Failure(TsStatus::InvalidArgument, "signal size overflows".into()))?;
        let data = std::slice::from_raw_parts(values, len).to_vec();
        let matrix = Array2::from_shape_vec((rows, cols), data).expect("length checked");
        store(out, TsSignal { inner: Signal2D::new(matrix, SignalKind::Generic)? })
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_signal_load(path: *const c_char, out: *mut *mut TsSignal) -> TsStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        store(out, TsSignal { inner: textio::read_signal(path, SignalKind::Generic)? })
    })
}

/// # Safety
/// `signal` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ts_signal_save(signal: *const TsSignal, path: *const c_char) -> TsStatus {
    guard(|| {
        let signal = handle(signal, "signal")?;
        let path = path_arg(path, "path")?;
        Ok(textio::write_signal(path, &signal.inner)?)
    })
}

/// # Safety
/// `signal` must be a live handle; `rows` and `cols` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ts_signal_shape(signal: *const TsSignal, rows: *mut usize, cols: *mut usize) -> TsStatus {
    guard(|| {
        let signal = handle(signal, "signal")?;
        if rows.is_null() || cols.is_null() {
            return Err(null("shape output"));
        }
        *rows = signal.inner.spatial_len();
        *cols = signal.inner.semantic_len();
        Ok(())
    })
}

/// Copies the values row-major into `buffer` of `capacity` doubles.
///
/// # Safety
/// `signal` must be a live handle and `buffer` point to `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn ts_signal_values(signal: *const TsSignal, buffer: *mut f64, capacity: usize) -> TsStatus {
    guard(|| {
        let signal = handle(signal, "signal")?;
        if buffer.is_null() {
            return Err(null("buffer"));
        }
        let values = signal.inner.values();
        if capacity < values.len() {
            return Err(Failure(
                TsStatus::BufferTooSmall,
                format!("signal has {} values, buffer holds {capacity}", values.len()),
            ));
        }
        let out = std::slice::from_raw_parts_mut(buffer, values.len());
        for (o, v) in out.iter_mut().zip(values.iter()) {
            *o = *v;
        }
        Ok(())
    })
}

/// # Safety
/// `signal` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ts_signal_free(signal: *mut TsSignal) {
    free(signal)
}

/// Smooths at `(sx, sy)`. With a null `graph` the semantic axis is left
/// unchanged; otherwise the distance kernel of the graph is applied.
///
/// # Safety
/// `signal` must be a live handle, `graph` a live handle or null, and `out`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_smooth(
    signal: *const TsSignal,
    graph: *const TsGraph,
    sx: f64,
    sy: f64,
    family: TsKernelFamily,
    boundary: TsBoundary,
    trunc_mass: f64,
    out: *mut *mut TsSignal,
) -> TsStatus {
    guard(|| {
        let signal = handle(signal, "signal")?;
        let smoother = match graph.as_ref() {
            Some(g) => SemanticSmoother::new(Arc::clone(&g.inner), SemanticMode::DistanceKernel),
            None => SemanticSmoother::identity(signal.inner.semantic_len()),
        };
        let op = smoother.operator(sy)?;
        let smoothed = smooth_separable_2d(&signal.inner, sx, family.into(), &op, boundary.into(), trunc_mass)?;
        store(out, TsSignal { inner: smoothed })
    })
}

/// Writes the taps of a smoothing kernel into `buffer`. `len` receives the
/// tap count and `center` the index of the zero-displacement tap; when the
/// buffer is too small only those two are written.
///
/// # Safety
/// `buffer` must point to `capacity` doubles (or be null with capacity 0);
/// `len` and `center` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ts_kernel_taps(
    family: TsKernelFamily,
    s: f64,
    trunc_mass: f64,
    buffer: *mut f64,
    capacity: usize,
    len: *mut usize,
    center: *mut usize,
) -> TsStatus {
    guard(|| {
        if len.is_null() || center.is_null() {
            return Err(null("length output"));
        }
        let kernel = kernels::smoothing_kernel(family.into(), s, trunc_mass)?;
        *len = kernel.taps().len();
        *center = kernel.center();
        if capacity < kernel.taps().len() {
            return Err(Failure(
                TsStatus::BufferTooSmall,
                format!("kernel has {} taps, buffer holds {capacity}", kernel.taps().len()),
            ));
        }
        if buffer.is_null() {
            return Err(null("buffer"));
        }
        std::slice::from_raw_parts_mut(buffer, kernel.taps().len()).copy_from_slice(kernel.taps());
        Ok(())
    })
}

/// Learns the scale distribution from a row-major `rows` by `cols` margin
/// table over the ascending `scales`. The result is l2-normalized.
///
/// # Safety
/// `margins` must point to `rows * cols` doubles, `scales` to `cols`
/// doubles, and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_learn_scale_distribution(
    margins: *const f64,
    rows: usize,
    cols: usize,
    scales: *const f64,
    out: *mut *mut TsScaleDistribution,
) -> TsStatus {
    guard(|| {
        if margins.is_null() || scales.is_null() {
            return Err(null("margins or scales"));
        }
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Failure(TsStatus::InvalidArgument, "margin table size overflows".into()))?;
        let values = Array2::from_shape_vec((rows, cols), std::slice::from_raw_parts(margins, len).to_vec())
            .expect("length checked");
        let names = (0..rows).map(|i| i.to_string()).collect();
        let table = MarginTable::new(names, std::slice::from_raw_parts(scales, cols).to_vec(), values)?;
        store(out, TsScaleDistribution { inner: learn_scale_distribution(&table)? })
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_distribution_load(path: *const c_char, out: *mut *mut TsScaleDistribution) -> TsStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        store(out, TsScaleDistribution { inner: textio::read_scale_distribution(path)? })
    })
}

/// # Safety
/// `dist` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ts_distribution_save(dist: *const TsScaleDistribution, path: *const c_char) -> TsStatus {
    guard(|| {
        let dist = handle(dist, "distribution")?;
        let path = path_arg(path, "path")?;
        Ok(textio::write_scale_distribution(path, &dist.inner)?)
    })
}

/// # Safety
/// `dist` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ts_distribution_len(dist: *const TsScaleDistribution) -> usize {
    dist.as_ref().map_or(0, |d| d.inner.len())
}

/// Copies scales and weights into two buffers of `capacity` doubles each.
///
/// # Safety
/// `dist` must be a live handle; `scales` and `weights` must each point to
/// `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn ts_distribution_values(
    dist: *const TsScaleDistribution,
    scales: *mut f64,
    weights: *mut f64,
    capacity: usize,
) -> TsStatus {
    guard(|| {
        let dist = handle(dist, "distribution")?;
        if scales.is_null() || weights.is_null() {
            return Err(null("output buffer"));
        }
        let n = dist.inner.len();
        if capacity < n {
            return Err(Failure(
                TsStatus::BufferTooSmall,
                format!("distribution has {n} scales, buffers hold {capacity}"),
            ));
        }
        std::slice::from_raw_parts_mut(scales, n).copy_from_slice(dist.inner.scales());
        std::slice::from_raw_parts_mut(weights, n).copy_from_slice(dist.inner.weights());
        Ok(())
    })
}

/// # Safety
/// `dist` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ts_distribution_free(dist: *mut TsScaleDistribution) {
    free(dist)
}

/// MAP, P@5 and P@10 of a TREC run file against a qrels file.
///
/// # Safety
/// Paths must be NUL-terminated strings; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ts_eval_run(
    qrels_path: *const c_char,
    run_path: *const c_char,
    map: *mut f64,
    p5: *mut f64,
    p10: *mut f64,
) -> TsStatus {
    guard(|| {
        let qrels = textio::read_qrels(path_arg(qrels_path, "qrels path")?)?;
        let run = textio::read_run(path_arg(run_path, "run path")?)?;
        if map.is_null() || p5.is_null() || p10.is_null() {
            return Err(null("metric output"));
        }
        let report = evaluate_retrieval(&run, &qrels)?;
        *map = report.map;
        *p5 = report.p5;
        *p10 = report.p10;
        Ok(())
    })
}
