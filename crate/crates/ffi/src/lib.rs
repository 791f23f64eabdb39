//! C ABI over `pvgadf`.
//!
//! Every fallible function returns a [`PvgStatus`]; on failure a message is
//! kept per thread and can be read with [`pvg_last_error_message`]. Objects
//! are opaque handles created by `*_new`/`*_load` and released by `*_free`.
//! Panics never cross the boundary; they surface as `PVG_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pvgadf::array::{array_iv_curve, ArrayConfig};
use pvgadf::curve::IVCurve;
use pvgadf::fault::{sample_fault, FaultClass};
use pvgadf::model::EnvCondition;
use pvgadf::nn::{checkpoint, Network, Tensor3};
use pvgadf::preprocess::{gadf, stacked_feature, Limits, NormalizationStrategy, FEATURE_CHANNELS, FEATURE_SIZE};
use pvgadf::Error;

/// Values in one feature tensor (`50 x 50 x 2`, channel-last).
pub const PVG_FEATURE_LEN: usize = 5000;
const _: () = assert!(PVG_FEATURE_LEN == FEATURE_SIZE * FEATURE_SIZE * FEATURE_CHANNELS);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PvgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    Convergence = 4,
    OutOfRange = 5,
    Io = 6,
    Format = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PvgStrategy {
    Normal = 0,
    Global = 1,
    IscVoc = 2,
}

/// A 3-series x 2-parallel Shell SP-70 array.
pub struct PvgArray {
    cfg: ArrayConfig,
}

/// A trained classifier.
pub struct PvgModel {
    net: Network<f32>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PvgStatus {
    match e {
        Error::ConvergenceFailure { .. } => PvgStatus::Convergence,
        Error::OutOfRangeInput { .. } | Error::LimitExceeded { .. } | Error::IdealBelowMeasured { .. } => {
            PvgStatus::OutOfRange
        }
        Error::Io { .. } => PvgStatus::Io,
        Error::Format { .. } | Error::MalformedRecord { .. } => PvgStatus::Format,
        _ => PvgStatus::InvalidArgument,
    }
}

fn fail(status: PvgStatus, msg: impl Into<String>) -> PvgStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, recording errors and converting panics.
fn guard(f: impl FnOnce() -> Result<(), (PvgStatus, String)>) -> PvgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PvgStatus::Ok,
        Ok(Err((s, m))) => fail(s, m),
        Err(_) => fail(PvgStatus::Panic, "internal panic"),
    }
}

fn core_err(e: Error) -> (PvgStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (PvgStatus, String) {
    (PvgStatus::NullPointer, format!("{what} is null"))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pvg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static name of fault class `id` (0..14), or null.
#[no_mangle]
pub extern "C" fn pvg_class_name(id: u16) -> *const c_char {
    const NAMES: [&CStr; 14] = [
        c"Healthy",
        c"LL1",
        c"LL2",
        c"OC",
        c"Shade1",
        c"Shade2",
        c"SDegradation",
        c"ADegradation",
        c"Soiling",
        c"Soiling_LL1",
        c"Soiling_LL2",
        c"Soiling_OC",
        c"Soiling_SDegradation",
        c"Soiling_ADegradation",
    ];
    NAMES.get(id as usize).map_or(ptr::null(), |n| n.as_ptr())
}

/// New array with or without blocking diodes. Free with [`pvg_array_free`].
#[no_mangle]
pub extern "C" fn pvg_array_new(blocking_diodes: bool) -> *mut PvgArray {
    Box::into_raw(Box::new(PvgArray { cfg: ArrayConfig::with_blocking_diodes(blocking_diodes) }))
}

/// # Safety
/// `array` must come from [`pvg_array_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pvg_array_free(array: *mut PvgArray) {
    if !array.is_null() {
        drop(Box::from_raw(array));
    }
}

/// Simulates `n_points` samples of the array's I-V curve under fault class
/// `class_id` with severities drawn from `seed`, at irradiance `g` (W/m2)
/// and module temperature `t_kelvin`.
///
/// # Safety
/// `v_out` and `i_out` must each point to `n_points` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pvg_array_iv_curve(
    array: *const PvgArray,
    class_id: u16,
    seed: u64,
    g: f64,
    t_kelvin: f64,
    n_points: usize,
    v_out: *mut f64,
    i_out: *mut f64,
) -> PvgStatus {
    guard(|| {
        let array = array.as_ref().ok_or_else(|| null("array"))?;
        if v_out.is_null() || i_out.is_null() {
            return Err(null("output buffer"));
        }
        if n_points < 2 {
            return Err((PvgStatus::InvalidArgument, "n_points must be >= 2".into()));
        }
        let class = FaultClass::from_id(class_id)
            .ok_or_else(|| (PvgStatus::InvalidArgument, format!("unknown class id {class_id}")))?;
        let env = EnvCondition::new(g, t_kelvin);
        env.validate().map_err(core_err)?;
        let fault = sample_fault(class, &array.cfg, seed);
        let curve = array_iv_curve(&array.cfg, &fault, &env, n_points).map_err(core_err)?;
        std::slice::from_raw_parts_mut(v_out, n_points).copy_from_slice(&curve.v);
        std::slice::from_raw_parts_mut(i_out, n_points).copy_from_slice(&curve.i);
        Ok(())
    })
}

/// Two-channel feature tensor of a measured curve (`n` points, ascending
/// voltage) at condition (`g`, `t_kelvin`). `limit_isc`/`limit_voc` are read
/// only for the Global strategy. Writes [`PVG_FEATURE_LEN`] floats.
///
/// # Safety
/// `v` and `i` must point to `n` doubles; `out` to `out_len` floats.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn pvg_feature(
    array: *const PvgArray,
    v: *const f64,
    i: *const f64,
    n: usize,
    g: f64,
    t_kelvin: f64,
    strategy: PvgStrategy,
    limit_isc: f64,
    limit_voc: f64,
    out: *mut f32,
    out_len: usize,
) -> PvgStatus {
    guard(|| {
        let array = array.as_ref().ok_or_else(|| null("array"))?;
        if v.is_null() || i.is_null() || out.is_null() {
            return Err(null("buffer"));
        }
        if out_len < PVG_FEATURE_LEN {
            return Err((PvgStatus::BufferTooSmall, format!("need {PVG_FEATURE_LEN} floats, got {out_len}")));
        }
        let curve = IVCurve::new(
            std::slice::from_raw_parts(v, n).to_vec(),
            std::slice::from_raw_parts(i, n).to_vec(),
            EnvCondition::new(g, t_kelvin),
        )
        .map_err(core_err)?;
        let norm = match strategy {
            PvgStrategy::Normal => NormalizationStrategy::Normal,
            PvgStrategy::Global => NormalizationStrategy::Global(Limits { isc: limit_isc, voc: limit_voc }),
            PvgStrategy::IscVoc => NormalizationStrategy::IscVoc,
        };
        let t = stacked_feature(&curve, &array.cfg, &norm).map_err(core_err)?;
        std::slice::from_raw_parts_mut(out, t.data.len()).copy_from_slice(&t.data);
        Ok(())
    })
}

/// GADF of a series already scaled to `[0, 1]`; writes `n * n` doubles.
///
/// # Safety
/// `x` must point to `n` doubles and `out` to `n * n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pvg_gadf(x: *const f64, n: usize, out: *mut f64) -> PvgStatus {
    guard(|| {
        if x.is_null() || out.is_null() {
            return Err(null("buffer"));
        }
        let m = gadf(std::slice::from_raw_parts(x, n)).map_err(core_err)?;
        std::slice::from_raw_parts_mut(out, m.len()).copy_from_slice(&m);
        Ok(())
    })
}

/// Loads a weight checkpoint into `*out`. Free with [`pvg_model_free`].
///
/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pvg_model_load(path: *const c_char, out: *mut *mut PvgModel) -> PvgStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let path =
            CStr::from_ptr(path).to_str().map_err(|_| (PvgStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let net = checkpoint::load(Path::new(path)).map_err(core_err)?;
        *out = Box::into_raw(Box::new(PvgModel { net }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`pvg_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pvg_model_free(model: *mut PvgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of output classes, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pvg_model_n_classes(model: *const PvgModel) -> usize {
    model.as_ref().map_or(0, |m| m.net.config.n_classes)
}

/// Expected input length `size * size * channels`, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pvg_model_input_len(model: *const PvgModel) -> usize {
    model.as_ref().map_or(0, |m| {
        let c = &m.net.config;
        c.input_size * c.input_size * c.in_channels
    })
}

/// Classifies one channel-last input. Writes the class index to `*class_out`
/// and, when `probs` is not null, `probs_len >= n_classes` probabilities.
///
/// # Safety
/// `input` must point to `input_len` floats; `probs` to `probs_len` floats.
#[no_mangle]
pub unsafe extern "C" fn pvg_model_predict(
    model: *const PvgModel,
    input: *const f32,
    input_len: usize,
    class_out: *mut usize,
    probs: *mut f32,
    probs_len: usize,
) -> PvgStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if input.is_null() || class_out.is_null() {
            return Err(null("buffer"));
        }
        let c = &model.net.config;
        if !probs.is_null() && probs_len < c.n_classes {
            return Err((PvgStatus::BufferTooSmall, format!("need {} probabilities, got {probs_len}", c.n_classes)));
        }
        let hwc = std::slice::from_raw_parts(input, input_len);
        let x = Tensor3::from_hwc(c.input_size, c.input_size, c.in_channels, hwc).map_err(core_err)?;
        let p = model.net.forward(&x).map_err(core_err)?;
        *class_out = pvgadf::nn::argmax(&p);
        if !probs.is_null() {
            std::slice::from_raw_parts_mut(probs, p.len()).copy_from_slice(&p);
        }
        Ok(())
    })
}
