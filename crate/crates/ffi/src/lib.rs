//! C ABI over the simulation engine.
//!
//! Engines are opaque handles created from TOML config text and released
//! with [`etgp_engine_free`]. Every fallible call returns an [`EtgpStatus`];
//! the message of the most recent failure on the calling thread is available
//! through [`etgp_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use etgp::config::ExperimentConfig;
use etgp::engine::Engine;
use etgp::experiments::prepare_trial;
use etgp::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtgpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    InvalidArgument = 4,
    NotConnected = 5,
    NonPositiveWeight = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

/// Opaque engine handle.
pub struct EtgpEngine {
    engine: Engine,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn fail(status: EtgpStatus, msg: impl Into<String>) -> EtgpStatus {
    let mut bytes = msg.into().into_bytes();
    bytes.retain(|&b| b != 0);
    LAST_ERROR.with(|e| *e.borrow_mut() = bytes);
    status
}

fn from_error(err: Error) -> EtgpStatus {
    let status = match &err {
        Error::Config(_) => EtgpStatus::InvalidConfig,
        Error::NotConnected { .. } => EtgpStatus::NotConnected,
        Error::NonPositiveWeight { .. } => EtgpStatus::NonPositiveWeight,
        Error::InvalidArgument(_) | Error::DecayFit(_) | Error::Divergent(_) => EtgpStatus::InvalidArgument,
        Error::Io { .. } | Error::Csv(_) => EtgpStatus::Internal,
    };
    fail(status, err.to_string())
}

fn guarded(f: impl FnOnce() -> EtgpStatus) -> EtgpStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(EtgpStatus::Internal, "panic inside etgp"))
}

/// Builds an engine for trial 0 of the config given as NUL-terminated TOML
/// text. An empty string selects the defaults. On success `*out` owns a new
/// handle.
///
/// # Safety
/// `config_toml` must be a valid NUL-terminated string and `out` a valid
/// pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn etgp_engine_new(config_toml: *const c_char, out: *mut *mut EtgpEngine) -> EtgpStatus {
    guarded(|| {
        if config_toml.is_null() || out.is_null() {
            return fail(EtgpStatus::NullPointer, "null argument");
        }
        *out = std::ptr::null_mut();
        let Ok(text) = CStr::from_ptr(config_toml).to_str() else {
            return fail(EtgpStatus::InvalidUtf8, "config is not valid UTF-8");
        };
        let built = ExperimentConfig::parse(text).and_then(|cfg| {
            let trial = prepare_trial(&cfg, 0, cfg.run.horizon)?;
            trial
                .sim_config(cfg.schedules.into(), cfg.run.horizon, None, 0, false)
                .build_engine()
        });
        match built {
            Ok(engine) => {
                *out = Box::into_raw(Box::new(EtgpEngine { engine }));
                EtgpStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `engine` must be null or a handle from [`etgp_engine_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn etgp_engine_free(engine: *mut EtgpEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Advances `rounds` synchronous rounds.
///
/// # Safety
/// `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn etgp_engine_step(engine: *mut EtgpEngine, rounds: usize) -> EtgpStatus {
    guarded(|| {
        let Some(h) = engine.as_mut() else {
            return fail(EtgpStatus::NullPointer, "null engine");
        };
        for _ in 0..rounds {
            if let Err(e) = h.engine.step() {
                return from_error(e);
            }
        }
        EtgpStatus::Ok
    })
}

/// Rounds completed so far; 0 for a null handle.
///
/// # Safety
/// `engine` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn etgp_engine_round(engine: *const EtgpEngine) -> usize {
    engine.as_ref().map_or(0, |h| h.engine.round())
}

/// Number of agents `m`; 0 for a null handle.
///
/// # Safety
/// `engine` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn etgp_engine_agents(engine: *const EtgpEngine) -> usize {
    engine.as_ref().map_or(0, |h| h.engine.agents())
}

/// Decision dimension `d`; 0 for a null handle.
///
/// # Safety
/// `engine` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn etgp_engine_dim(engine: *const EtgpEngine) -> usize {
    engine.as_ref().map_or(0, |h| h.engine.dim())
}

unsafe fn copy_out(engine: *const EtgpEngine, out: *mut f64, len: usize, pick: fn(&Engine) -> &[f64]) -> EtgpStatus {
    guarded(|| {
        let Some(h) = engine.as_ref() else {
            return fail(EtgpStatus::NullPointer, "null engine");
        };
        let src = pick(&h.engine);
        if len < src.len() {
            return fail(EtgpStatus::BufferTooSmall, format!("need {} values, got {len}", src.len()));
        }
        if out.is_null() {
            return fail(EtgpStatus::NullPointer, "null buffer");
        }
        std::slice::from_raw_parts_mut(out, src.len()).copy_from_slice(src);
        EtgpStatus::Ok
    })
}

/// Copies the ratio estimates `ẑ` (row-major, `m × d`) into `out`.
///
/// # Safety
/// `out` must point to at least `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn etgp_engine_copy_z_hat(engine: *const EtgpEngine, out: *mut f64, len: usize) -> EtgpStatus {
    copy_out(engine, out, len, Engine::z_hat)
}

/// Copies the states `x` (row-major, `m × d`) into `out`.
///
/// # Safety
/// `out` must point to at least `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn etgp_engine_copy_x(engine: *const EtgpEngine, out: *mut f64, len: usize) -> EtgpStatus {
    copy_out(engine, out, len, Engine::x)
}

/// Copies the push-sum weights `y` (length `m`) into `out`.
///
/// # Safety
/// `out` must point to at least `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn etgp_engine_copy_y(engine: *const EtgpEngine, out: *mut f64, len: usize) -> EtgpStatus {
    copy_out(engine, out, len, Engine::y)
}

/// Total x- and y-channel triggers summed over agents.
///
/// # Safety
/// `x_total` and `y_total` must be valid writable pointers.
#[no_mangle]
pub unsafe extern "C" fn etgp_engine_trigger_totals(
    engine: *const EtgpEngine,
    x_total: *mut u64,
    y_total: *mut u64,
) -> EtgpStatus {
    guarded(|| {
        let Some(h) = engine.as_ref() else {
            return fail(EtgpStatus::NullPointer, "null engine");
        };
        if x_total.is_null() || y_total.is_null() {
            return fail(EtgpStatus::NullPointer, "null output");
        }
        *x_total = h.engine.x_trigger_counts().iter().sum();
        *y_total = h.engine.y_trigger_counts().iter().sum();
        EtgpStatus::Ok
    })
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len − 1` bytes) and returns the full message length.
/// Pass a null `buf` to query the length.
///
/// # Safety
/// `buf` must be null or point to at least `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn etgp_last_error(buf: *mut c_char, len: usize) -> usize {
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

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn etgp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
