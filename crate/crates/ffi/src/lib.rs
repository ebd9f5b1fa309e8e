//! C ABI over `zcp-har`.
//!
//! Conventions:
//! - Every fallible function returns a [`ZcpStatus`]; on failure a message
//!   is available from [`zcp_last_error_message`] on the same thread.
//! - Objects are opaque handles created by `*_new`/`*_from_*` functions and
//!   released with the matching `*_free`. Freeing NULL is a no-op.
//! - Strings returned through `char **` are owned by the caller and must be
//!   released with [`zcp_string_free`].
//! - Tensors are dense, row-major `double` buffers; model inputs are laid
//!   out as `[batch, channels, seq_len]`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use zcp_har::arch::{count_search_space, instantiate, sample_architectures, ArchSpec, SearchSpaceConfig};
use zcp_har::data::{Split, WindowedDataset};
use zcp_har::eval::spearman_columns;
use zcp_har::nn::{Model, TensorValue};
use zcp_har::proxies::{score_model, ProxyName};
use zcp_har::train::macro_f1;
use zcp_har::ZcpError;

/// Result codes. `ZCP_STATUS_OK` is zero; everything else is an error.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZcpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    ParseError = 4,
    InvalidArch = 5,
    ShapeMismatch = 6,
    Degenerate = 7,
    Panic = 8,
    Internal = 9,
}

/// An architecture description.
pub struct ZcpArchSpec {
    inner: ArchSpec,
}

/// A list of sampled architectures.
pub struct ZcpArchList {
    items: Vec<ArchSpec>,
}

/// An initialised network.
pub struct ZcpModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &ZcpError) -> ZcpStatus {
    match err {
        ZcpError::Parse { .. } | ZcpError::Config(_) => ZcpStatus::ParseError,
        ZcpError::InvalidArch(_) => ZcpStatus::InvalidArch,
        ZcpError::ShapeMismatch { .. } | ZcpError::InvalidTensor(_) => ZcpStatus::ShapeMismatch,
        ZcpError::Degenerate(_) => ZcpStatus::Degenerate,
        ZcpError::InvalidArgument(_)
        | ZcpError::LabelOutOfRange { .. }
        | ZcpError::Empty(_)
        | ZcpError::MissingProxy(_) => ZcpStatus::InvalidArgument,
        _ => ZcpStatus::Internal,
    }
}

struct Failure(ZcpStatus, String);

impl From<ZcpError> for Failure {
    fn from(e: ZcpError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail(status: ZcpStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ZcpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ZcpStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            ZcpStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(ZcpStatus::NullPointer, format!("{what} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(ZcpStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| fail(ZcpStatus::NullPointer, format!("{what} is NULL")))
}

unsafe fn in_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(ZcpStatus::NullPointer, format!("{what} is NULL")))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(ZcpStatus::NullPointer, format!("{what} is NULL")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn to_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| fail(ZcpStatus::Internal, "string contains NUL"))
}

unsafe fn search_space(toml_text: *const c_char) -> Result<SearchSpaceConfig, Failure> {
    if toml_text.is_null() {
        return Ok(SearchSpaceConfig::default());
    }
    let text = read_str(toml_text, "search space")?;
    let cfg: SearchSpaceConfig =
        toml::from_str(text).map_err(|e| fail(ZcpStatus::ParseError, format!("search space: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn zcp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a pointer obtained from this library that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn zcp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses the canonical JSON text form of an architecture.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn zcp_arch_from_text(text: *const c_char, out: *mut *mut ZcpArchSpec) -> ZcpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let spec = ArchSpec::from_canonical(read_str(text, "text")?)?;
        spec.validate_structure()?;
        *out = Box::into_raw(Box::new(ZcpArchSpec { inner: spec }));
        Ok(())
    })
}

/// Canonical text form of an architecture.
///
/// # Safety
/// `spec` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn zcp_arch_to_text(spec: *const ZcpArchSpec, out: *mut *mut c_char) -> ZcpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = to_c_string(in_ref(spec, "spec")?.inner.to_canonical())?;
        Ok(())
    })
}

/// Hex SHA-256 of the canonical text form.
///
/// # Safety
/// `spec` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn zcp_arch_hash(spec: *const ZcpArchSpec, out: *mut *mut c_char) -> ZcpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = to_c_string(in_ref(spec, "spec")?.inner.spec_hash())?;
        Ok(())
    })
}

/// # Safety
/// `spec` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn zcp_arch_free(spec: *mut ZcpArchSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Samples architectures. `search_space_toml` may be NULL for the default
/// ranges.
///
/// # Safety
/// `search_space_toml` must be NULL or NUL-terminated; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn zcp_sample_architectures(
    search_space_toml: *const c_char,
    seed: u64,
    out: *mut *mut ZcpArchList,
) -> ZcpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let cfg = search_space(search_space_toml)?;
        *out = Box::into_raw(Box::new(ZcpArchList {
            items: sample_architectures(&cfg, seed),
        }));
        Ok(())
    })
}

/// Number of architectures in a list (0 for NULL).
///
/// # Safety
/// `list` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn zcp_arch_list_len(list: *const ZcpArchList) -> usize {
    list.as_ref().map_or(0, |l| l.items.len())
}

/// Copies element `index` into a new architecture handle.
///
/// # Safety
/// `list` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn zcp_arch_list_get(list: *const ZcpArchList, index: usize, out: *mut *mut ZcpArchSpec) -> ZcpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let list = in_ref(list, "list")?;
        let spec = list.items.get(index).ok_or_else(|| {
            fail(
                ZcpStatus::InvalidArgument,
                format!("index {index} out of range for {} architectures", list.items.len()),
            )
        })?;
        *out = Box::into_raw(Box::new(ZcpArchSpec { inner: spec.clone() }));
        Ok(())
    })
}

/// # Safety
/// `list` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn zcp_arch_list_free(list: *mut ZcpArchList) {
    if !list.is_null() {
        drop(Box::from_raw(list));
    }
}

/// Exact search-space sizes as decimal strings. `search_space_toml` may be
/// NULL for the default ranges.
///
/// # Safety
/// `search_space_toml` must be NULL or NUL-terminated; both outputs must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn zcp_count_search_space(
    search_space_toml: *const c_char,
    cnn_total: *mut *mut c_char,
    lstm_total: *mut *mut c_char,
) -> ZcpStatus {
    guard(|| {
        let cnn_out = out_ptr(cnn_total, "cnn_total")?;
        let lstm_out = out_ptr(lstm_total, "lstm_total")?;
        let size = count_search_space(&search_space(search_space_toml)?);
        let cnn = to_c_string(size.cnn_total.to_string())?;
        let lstm = to_c_string(size.lstm_total.to_string())?;
        *cnn_out = cnn;
        *lstm_out = lstm;
        Ok(())
    })
}

/// Builds and Xavier-initialises the network for `spec`.
///
/// # Safety
/// `spec` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn zcp_model_new(
    spec: *const ZcpArchSpec,
    num_classes: usize,
    seq_len: usize,
    seed: u64,
    out: *mut *mut ZcpModel,
) -> ZcpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let model = instantiate(&in_ref(spec, "spec")?.inner, num_classes, seq_len, seed)?;
        *out = Box::into_raw(Box::new(ZcpModel { inner: model }));
        Ok(())
    })
}

/// Total number of scalar parameters (0 for NULL).
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn zcp_model_num_params(model: *const ZcpModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.params().num_scalars())
}

/// Inference: writes `batch * num_classes` logits to `out_logits`.
///
/// # Safety
/// `input` must hold `batch * channels * seq_len` doubles and `out_logits`
/// `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn zcp_model_forward(
    model: *const ZcpModel,
    input: *const f64,
    batch: usize,
    out_logits: *mut f64,
    out_len: usize,
) -> ZcpStatus {
    guard(|| {
        let m = &in_ref(model, "model")?.inner;
        let n_in = batch * m.input_channels() * m.seq_len();
        let x = TensorValue::new(vec![batch, m.input_channels(), m.seq_len()], slice(input, n_in, "input")?.to_vec())?;
        let logits = m.infer(&x)?;
        if out_len != logits.len() {
            return Err(fail(
                ZcpStatus::ShapeMismatch,
                format!("out_len {out_len} but the model produces {} logits", logits.len()),
            ));
        }
        if out_logits.is_null() {
            return Err(fail(ZcpStatus::NullPointer, "out_logits is NULL"));
        }
        std::slice::from_raw_parts_mut(out_logits, out_len).copy_from_slice(logits.data());
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn zcp_model_free(model: *mut ZcpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Scores `model` with one per-architecture proxy (by name, e.g.
/// `"synflow"`) on a labelled batch. The ensemble and `initial_val_f1` need
/// more than one batch and are rejected. Parameters are left unchanged.
///
/// # Safety
/// `inputs` must hold `batch * channels * seq_len` doubles and `labels`
/// `batch` entries; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn zcp_score_proxy(
    model: *mut ZcpModel,
    proxy: *const c_char,
    inputs: *const f64,
    labels: *const usize,
    batch: usize,
    value: *mut f64,
    degenerate: *mut bool,
) -> ZcpStatus {
    guard(|| {
        let value = out_ptr(value, "value")?;
        let degenerate = out_ptr(degenerate, "degenerate")?;
        let m = &mut out_ptr(model, "model")?.inner;
        let name: ProxyName = read_str(proxy, "proxy")?.parse()?;
        if matches!(name, ProxyName::Ensemble | ProxyName::InitialValF1) {
            return Err(fail(ZcpStatus::InvalidArgument, format!("{name} cannot be scored from a single batch")));
        }
        let n_in = batch * m.input_channels() * m.seq_len();
        let x = TensorValue::new(vec![batch, m.input_channels(), m.seq_len()], slice(inputs, n_in, "inputs")?.to_vec())?;
        let y = slice(labels, batch, "labels")?;
        let no_val = WindowedDataset {
            windows: TensorValue::zeros(&[0, m.input_channels(), m.seq_len()]),
            labels: Vec::new(),
            user_ids: Vec::new(),
            split: Split::Val,
            class_names: Vec::new(),
        };
        let score = score_model(m, &x, y, &no_val, &[name])?[0];
        *value = score.value;
        *degenerate = score.degenerate;
        Ok(())
    })
}

/// Spearman rank correlation with average ranks on ties.
///
/// # Safety
/// `x` and `y` must each hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn zcp_spearman(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> ZcpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = spearman_columns(slice(x, n, "x")?, slice(y, n, "y")?)?;
        Ok(())
    })
}

/// Macro F1 over the classes present in `labels`.
///
/// # Safety
/// `predictions` and `labels` must each hold `n` entries; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn zcp_macro_f1(predictions: *const usize, labels: *const usize, n: usize, out: *mut f64) -> ZcpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = macro_f1(slice(predictions, n, "predictions")?, slice(labels, n, "labels")?)?;
        Ok(())
    })
}

/// Names of all proxies accepted by [`zcp_score_proxy`] and the pipeline,
/// comma separated.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn zcp_proxy_names(out: *mut *mut c_char) -> ZcpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let names: Vec<&str> = ProxyName::ALL.iter().map(|p| p.as_str()).collect();
        *out = to_c_string(names.join(","))?;
        Ok(())
    })
}
