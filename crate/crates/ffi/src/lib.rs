//! C interface to `nlab`.
//!
//! Every function returns an `NLAB_*` status code; on failure the message
//! is kept per thread and can be read with [`nlab_last_error`]. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use nlab::detection::{decide, fit_gmm_1d, DecisionStrategy, EmOptions, Feature, GmmModel, TemperatureSchedule};
use nlab::evaluation::class_probabilities;
use nlab::nn::{checkpoint, ImageBatch, TwoHeadNetwork, CLASS_OUTPUTS, ROT_OUTPUTS};
use nlab::NlabError;

pub const NLAB_OK: i32 = 0;
pub const NLAB_ERR_NULL: i32 = 1;
pub const NLAB_ERR_INVALID: i32 = 2;
pub const NLAB_ERR_SHAPE: i32 = 3;
pub const NLAB_ERR_IO: i32 = 4;
pub const NLAB_ERR_FORMAT: i32 = 5;
pub const NLAB_ERR_NUMERIC: i32 = 6;
pub const NLAB_ERR_PANIC: i32 = 7;

pub const NLAB_FEATURE_LOSS: u32 = 0;
pub const NLAB_FEATURE_CONFIDENCE: u32 = 1;

pub const NLAB_STRATEGY_LOSS_ONLY: u32 = 0;
pub const NLAB_STRATEGY_HARD: u32 = 1;
pub const NLAB_STRATEGY_ELASTIC: u32 = 2;

pub const NLAB_PROTOCOL_ONE_IMAGE: u32 = 0;
pub const NLAB_PROTOCOL_FOUR_ROTATION: u32 = 1;

/// A trained two-head network loaded from a checkpoint.
pub struct NlabNetwork {
    net: TwoHeadNetwork<f32>,
}

/// A fitted two-component mixture.
pub struct NlabGmm {
    model: GmmModel,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NlabGmmParams {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub variances: [f64; 2],
    /// Index of the clean component.
    pub clean_component: u32,
    /// Nonzero when the input had no spread and every posterior is 0.5.
    pub degenerate: u32,
}

/// Cosine temperature schedule for the elastic decision.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlabSchedule {
    pub alpha_start: f64,
    pub alpha_end: f64,
    pub total_epochs: usize,
    pub epsilon: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(i32, String);

impl From<NlabError> for Failure {
    fn from(e: NlabError) -> Self {
        let code = match &e {
            NlabError::Shape { .. } => NLAB_ERR_SHAPE,
            NlabError::Validation(_) | NlabError::Config(_) => NLAB_ERR_INVALID,
            NlabError::Io { .. } => NLAB_ERR_IO,
            NlabError::Ingestion { .. } | NlabError::Checkpoint(_) | NlabError::Csv { .. } => NLAB_ERR_FORMAT,
            NlabError::NonFiniteGradient { .. } | NlabError::Numeric(_) => NLAB_ERR_NUMERIC,
        };
        Failure(code, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(NLAB_ERR_NULL, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(NLAB_ERR_INVALID, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            NLAB_OK
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            NLAB_ERR_PANIC
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn write<T>(ptr: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    ptr.write(value);
    Ok(())
}

fn strategy(code: u32) -> Result<DecisionStrategy, Failure> {
    match code {
        NLAB_STRATEGY_LOSS_ONLY => Ok(DecisionStrategy::LossOnly),
        NLAB_STRATEGY_HARD => Ok(DecisionStrategy::Hard),
        NLAB_STRATEGY_ELASTIC => Ok(DecisionStrategy::Elastic),
        other => Err(invalid(format!("unknown strategy {other}"))),
    }
}

unsafe fn schedule(ptr: *const NlabSchedule) -> Result<TemperatureSchedule, Failure> {
    let s = ptr.as_ref().ok_or_else(|| null("schedule"))?;
    let sched = TemperatureSchedule {
        alpha_start: s.alpha_start,
        alpha_end: s.alpha_end,
        total_epochs: s.total_epochs,
        epsilon: s.epsilon,
    };
    sched.validate()?;
    Ok(sched)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`). Returns the full message length
/// excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn nlab_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Loads a network checkpoint from `path`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nlab_network_load(path: *const c_char, out: *mut *mut NlabNetwork) -> i32 {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| invalid("path is not UTF-8"))?;
        let net = checkpoint::load::<f32>(Path::new(path))?;
        write(out, Box::into_raw(Box::new(NlabNetwork { net })), "out")
    })
}

/// Releases a network; null is ignored.
///
/// # Safety
/// `net` must come from [`nlab_network_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nlab_network_free(net: *mut NlabNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Input height, width, channels and total parameter count.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nlab_network_shape(
    net: *const NlabNetwork,
    height: *mut usize,
    width: *mut usize,
    channels: *mut usize,
    parameters: *mut usize,
) -> i32 {
    guard(|| {
        let net = &net.as_ref().ok_or_else(|| null("net"))?.net;
        let shape = net.architecture().input;
        write(height, shape.height, "height")?;
        write(width, shape.width, "width")?;
        write(channels, shape.channels, "channels")?;
        write(parameters, net.parameter_count(), "parameters")
    })
}

fn batch(net: &TwoHeadNetwork<f32>, images: &[f32], count: usize) -> Result<ImageBatch<f32>, Failure> {
    let b = ImageBatch::new(net.architecture().input, images.to_vec())?;
    if b.count != count {
        return Err(Failure(
            NLAB_ERR_SHAPE,
            format!("expected {count} images, got {}", b.count),
        ));
    }
    Ok(b)
}

/// Raw logits for `count` normalized C×H×W images.
///
/// # Safety
/// `images` holds `count × H × W × C` floats; `class_logits` has room for
/// `count × 10` and `rot_logits` for `count × 4`.
#[no_mangle]
pub unsafe extern "C" fn nlab_network_forward(
    net: *const NlabNetwork,
    images: *const f32,
    count: usize,
    class_logits: *mut f32,
    rot_logits: *mut f32,
) -> i32 {
    guard(|| {
        let net = &net.as_ref().ok_or_else(|| null("net"))?.net;
        if count == 0 {
            return Err(invalid("no images"));
        }
        let images = slice(images, count * net.architecture().input.len(), "images")?;
        let logits = net.forward(&batch(net, images, count)?)?;
        slice_mut(class_logits, count * CLASS_OUTPUTS, "class_logits")?.copy_from_slice(&logits.class);
        slice_mut(rot_logits, count * ROT_OUTPUTS, "rot_logits")?.copy_from_slice(&logits.rot);
        Ok(())
    })
}

/// Class probabilities (`count × 10`) under `NLAB_PROTOCOL_ONE_IMAGE` or
/// `NLAB_PROTOCOL_FOUR_ROTATION`.
///
/// # Safety
/// As for [`nlab_network_forward`]; `probabilities` has room for `count × 10`.
#[no_mangle]
pub unsafe extern "C" fn nlab_network_class_probabilities(
    net: *const NlabNetwork,
    images: *const f32,
    count: usize,
    protocol: u32,
    probabilities: *mut f64,
) -> i32 {
    guard(|| {
        let net = &net.as_ref().ok_or_else(|| null("net"))?.net;
        let four = match protocol {
            NLAB_PROTOCOL_ONE_IMAGE => false,
            NLAB_PROTOCOL_FOUR_ROTATION => true,
            other => return Err(invalid(format!("unknown protocol {other}"))),
        };
        if count == 0 {
            return Err(invalid("no images"));
        }
        let images = slice(images, count * net.architecture().input.len(), "images")?;
        let (one, avg) = class_probabilities(net, &batch(net, images, count)?, four, 256)?;
        let src = avg.unwrap_or(one);
        slice_mut(probabilities, count * CLASS_OUTPUTS, "probabilities")?.copy_from_slice(&src);
        Ok(())
    })
}

/// Fits a two-component mixture to `n` values of `feature`
/// (`NLAB_FEATURE_LOSS` or `NLAB_FEATURE_CONFIDENCE`). A `max_iters` of 0
/// uses the library defaults for the EM settings.
///
/// # Safety
/// `values` holds `n` doubles; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nlab_gmm_fit(
    values: *const f64,
    n: usize,
    feature: u32,
    max_iters: usize,
    tol: f64,
    out: *mut *mut NlabGmm,
) -> i32 {
    guard(|| {
        let feature = match feature {
            NLAB_FEATURE_LOSS => Feature::Loss,
            NLAB_FEATURE_CONFIDENCE => Feature::Confidence,
            other => return Err(invalid(format!("unknown feature {other}"))),
        };
        let opts = if max_iters == 0 {
            EmOptions::default()
        } else {
            EmOptions {
                max_iters,
                tol,
                ..Default::default()
            }
        };
        let fit = fit_gmm_1d(slice(values, n, "values")?, feature, opts)?;
        write(out, Box::into_raw(Box::new(NlabGmm { model: fit.model })), "out")
    })
}

/// Releases a mixture; null is ignored.
///
/// # Safety
/// `gmm` must come from [`nlab_gmm_fit`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nlab_gmm_free(gmm: *mut NlabGmm) {
    if !gmm.is_null() {
        drop(Box::from_raw(gmm));
    }
}

/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nlab_gmm_params(gmm: *const NlabGmm, out: *mut NlabGmmParams) -> i32 {
    guard(|| {
        let m = &gmm.as_ref().ok_or_else(|| null("gmm"))?.model;
        let p = NlabGmmParams {
            weights: m.weights,
            means: m.means,
            variances: m.variances,
            clean_component: m.clean_component as u32,
            degenerate: u32::from(m.degenerate),
        };
        write(out, p, "out")
    })
}

/// Clean-component posterior for each of `n` values.
///
/// # Safety
/// `values` and `posteriors` hold `n` doubles each.
#[no_mangle]
pub unsafe extern "C" fn nlab_gmm_posterior_clean(
    gmm: *const NlabGmm,
    values: *const f64,
    n: usize,
    posteriors: *mut f64,
) -> i32 {
    guard(|| {
        let m = &gmm.as_ref().ok_or_else(|| null("gmm"))?.model;
        let values = slice(values, n, "values")?;
        let out = slice_mut(posteriors, n, "posteriors")?;
        for (o, &v) in out.iter_mut().zip(values) {
            *o = m.posterior_clean(v);
        }
        Ok(())
    })
}

/// λ and clean call for `n` posterior pairs under `strategy`. The schedule
/// is only read for `NLAB_STRATEGY_ELASTIC` and may be null otherwise.
///
/// # Safety
/// `p_loss`, `p_conf` and `lambda` hold `n` doubles; `is_clean` holds `n`
/// bytes, each set to 0 or 1.
#[no_mangle]
pub unsafe extern "C" fn nlab_decide(
    strategy_code: u32,
    p_loss: *const f64,
    p_conf: *const f64,
    n: usize,
    sched: *const NlabSchedule,
    epoch: usize,
    lambda: *mut f64,
    is_clean: *mut u8,
) -> i32 {
    guard(|| {
        let s = strategy(strategy_code)?;
        let sched = if s == DecisionStrategy::Elastic {
            schedule(sched)?
        } else {
            TemperatureSchedule::default()
        };
        let (pl, pc) = (slice(p_loss, n, "p_loss")?, slice(p_conf, n, "p_conf")?);
        if let Some(bad) = pl.iter().chain(pc).find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(invalid(format!("posterior {bad} outside [0, 1]")));
        }
        let lambda = slice_mut(lambda, n, "lambda")?;
        let clean = slice_mut(is_clean, n, "is_clean")?;
        for i in 0..n {
            let (l, c) = decide(s, pl[i], pc[i], &sched, epoch);
            lambda[i] = l;
            clean[i] = u8::from(c);
        }
        Ok(())
    })
}

/// Elastic temperature at `epoch`.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nlab_temperature_at(sched: *const NlabSchedule, epoch: usize, alpha: *mut f64) -> i32 {
    guard(|| {
        let s = schedule(sched)?;
        write(alpha, s.temperature_at(epoch), "alpha")
    })
}
