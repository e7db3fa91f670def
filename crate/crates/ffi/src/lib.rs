//! C interface to gdiff.
//!
//! Objects are opaque handles created by `*_new`/`*_load` functions and
//! released with the matching `*_free`. Every fallible call returns a
//! [`GdiffStatus`]; on failure [`gdiff_last_error`] describes what went
//! wrong on the calling thread. Output buffers are caller-allocated.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use gdiff::forward::closed_form_sample;
use gdiff::model::{load_checkpoint, Checkpoint};
use gdiff::noise::{FamilySpec, NoiseProcess};
use gdiff::reverse::{sample, timestep_subsequence, EpsModel, SamplerConfig, SamplerKind};
use gdiff::rng::{stream, StreamRng};
use gdiff::schedule::{linear_schedule, NoiseSchedule};
use gdiff::stats::ks_two_sample;
use gdiff::{Error, Tensor};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GdiffStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Format = 4,
    Io = 5,
    NonFinite = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GdiffSampler {
    Ddpm = 0,
    Ddim = 1,
}

pub struct GdiffSchedule {
    inner: NoiseSchedule,
}

pub struct GdiffProcess {
    inner: NoiseProcess,
}

pub struct GdiffRng {
    inner: StreamRng,
}

pub struct GdiffModel {
    inner: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(GdiffStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Shape { .. } => GdiffStatus::Shape,
            Error::Format { .. } | Error::Json(_) => GdiffStatus::Format,
            Error::Io { .. } => GdiffStatus::Io,
            Error::NonFinite(_) => GdiffStatus::NonFinite,
            _ => GdiffStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(GdiffStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GdiffStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            GdiffStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            GdiffStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Fail(GdiffStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    let slot = unsafe { deref_mut(out, "out") }?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn gdiff_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gdiff_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn gdiff_schedule_linear(
    steps: usize,
    beta_start: f64,
    beta_end: f64,
    out: *mut *mut GdiffSchedule,
) -> GdiffStatus {
    guard(|| unsafe {
        store(out, GdiffSchedule {
            inner: linear_schedule(steps, beta_start, beta_end)?,
        })
    })
}

#[no_mangle]
pub unsafe extern "C" fn gdiff_schedule_from_betas(
    betas: *const f64,
    len: usize,
    out: *mut *mut GdiffSchedule,
) -> GdiffStatus {
    guard(|| unsafe {
        let b = slice(betas, len, "betas")?;
        store(out, GdiffSchedule {
            inner: NoiseSchedule::from_betas(b.to_vec())?,
        })
    })
}

/// Builds a schedule from its JSON description, e.g.
/// `{"type":"linear","T":1000,"beta_start":1e-4,"beta_end":0.02}`.
#[no_mangle]
pub unsafe extern "C" fn gdiff_schedule_from_json(json: *const c_char, out: *mut *mut GdiffSchedule) -> GdiffStatus {
    guard(|| unsafe {
        let s = text(json, "json")?;
        store(out, GdiffSchedule {
            inner: NoiseSchedule::from_json(s)?,
        })
    })
}

#[no_mangle]
pub unsafe extern "C" fn gdiff_schedule_len(schedule: *const GdiffSchedule) -> usize {
    unsafe { schedule.as_ref() }.map_or(0, |s| s.inner.len())
}

/// `ᾱ_t` for `t` in `[0, T]`.
#[no_mangle]
pub unsafe extern "C" fn gdiff_schedule_alpha_bar(
    schedule: *const GdiffSchedule,
    t: usize,
    out: *mut f64,
) -> GdiffStatus {
    guard(|| unsafe {
        let s = &deref(schedule, "schedule")?.inner;
        if t > s.len() {
            return Err(Error::TimestepOutOfRange { t, len: s.len() }.into());
        }
        *deref_mut(out, "out")? = s.alpha_bar(t);
        Ok(())
    })
}

/// Writes the 16-character schedule hash plus a NUL into `buf`, which must
/// hold at least 17 bytes.
#[no_mangle]
pub unsafe extern "C" fn gdiff_schedule_hash(
    schedule: *const GdiffSchedule,
    buf: *mut c_char,
    cap: usize,
) -> GdiffStatus {
    guard(|| unsafe {
        let h = deref(schedule, "schedule")?.inner.hash();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if cap <= h.len() {
            return Err(Fail(
                GdiffStatus::InvalidArgument,
                format!("buffer of {cap} bytes cannot hold {} plus NUL", h.len()),
            ));
        }
        std::ptr::copy_nonoverlapping(h.as_ptr().cast(), buf, h.len());
        *buf.add(h.len()) = 0;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gdiff_schedule_free(schedule: *mut GdiffSchedule) {
    if !schedule.is_null() {
        drop(unsafe { Box::from_raw(schedule) });
    }
}

/// Binds a noise family, given as JSON such as `{"family":"gamma","theta0":0.001}`,
/// to a copy of `schedule`.
#[no_mangle]
pub unsafe extern "C" fn gdiff_process_new(
    schedule: *const GdiffSchedule,
    family_json: *const c_char,
    out: *mut *mut GdiffProcess,
) -> GdiffStatus {
    guard(|| unsafe {
        let s = deref(schedule, "schedule")?.inner.clone();
        let spec: FamilySpec = serde_json::from_str(text(family_json, "family_json")?).map_err(Error::from)?;
        store(out, GdiffProcess {
            inner: NoiseProcess::new(spec, s)?,
        })
    })
}

#[no_mangle]
pub unsafe extern "C" fn gdiff_process_free(process: *mut GdiffProcess) {
    if !process.is_null() {
        drop(unsafe { Box::from_raw(process) });
    }
}

/// Random stream `index` of `domain` under `seed`.
#[no_mangle]
pub unsafe extern "C" fn gdiff_rng_new(seed: u64, domain: u64, index: u64, out: *mut *mut GdiffRng) -> GdiffStatus {
    guard(|| unsafe {
        store(out, GdiffRng {
            inner: stream(seed, domain, index),
        })
    })
}

#[no_mangle]
pub unsafe extern "C" fn gdiff_rng_free(rng: *mut GdiffRng) {
    if !rng.is_null() {
        drop(unsafe { Box::from_raw(rng) });
    }
}

/// One closed-form jump of `n` independent elements from `x0` to step `t`.
/// Writes `x_t` and the unit-variance noise target, each of length `n`.
#[no_mangle]
pub unsafe extern "C" fn gdiff_closed_form_sample(
    process: *const GdiffProcess,
    x0: *const f64,
    n: usize,
    t: usize,
    rng: *mut GdiffRng,
    x_t_out: *mut f64,
    target_out: *mut f64,
) -> GdiffStatus {
    guard(|| unsafe {
        let p = &deref(process, "process")?.inner;
        let rng = &mut deref_mut(rng, "rng")?.inner;
        let x0 = Tensor::new(slice(x0, n, "x0")?.to_vec(), vec![n])?;
        let pair = closed_form_sample(&x0, t, p, rng)?;
        slice_mut(x_t_out, n, "x_t_out")?.copy_from_slice(pair.x_t.data());
        slice_mut(target_out, n, "target_out")?.copy_from_slice(pair.target.data());
        Ok(())
    })
}

/// Loads a checkpoint written by `gdiff train`.
#[no_mangle]
pub unsafe extern "C" fn gdiff_model_load(path: *const c_char, out: *mut *mut GdiffModel) -> GdiffStatus {
    guard(|| unsafe {
        let p = text(path, "path")?;
        store(out, GdiffModel {
            inner: load_checkpoint(Path::new(p))?,
        })
    })
}

/// Number of values in one sample.
#[no_mangle]
pub unsafe extern "C" fn gdiff_model_data_dim(model: *const GdiffModel) -> usize {
    unsafe { model.as_ref() }.map_or(0, |m| m.inner.model.architecture().data_dim())
}

/// Number of diffusion steps the model was trained with.
#[no_mangle]
pub unsafe extern "C" fn gdiff_model_steps(model: *const GdiffModel) -> usize {
    unsafe { model.as_ref() }.map_or(0, |m| m.inner.schedule.len())
}

/// Noise prediction for `rows` samples at timestep `t`. `x_t` and `out`
/// hold `rows * data_dim` values.
#[no_mangle]
pub unsafe extern "C" fn gdiff_model_predict(
    model: *const GdiffModel,
    x_t: *const f64,
    rows: usize,
    t: usize,
    out: *mut f64,
) -> GdiffStatus {
    guard(|| unsafe {
        let ck = &deref(model, "model")?.inner;
        let mut shape = vec![rows];
        shape.extend(&ck.model.architecture().data_shape);
        let len = shape.iter().product();
        let x = Tensor::new(slice(x_t, len, "x_t")?.to_vec(), shape)?;
        let eps = ck.model.predict(&x, t, &ck.schedule)?;
        slice_mut(out, len, "out")?.copy_from_slice(eps.data());
        Ok(())
    })
}

/// Draws `n` samples with `steps` evenly spaced timesteps. `out` holds
/// `n * data_dim` values.
#[no_mangle]
pub unsafe extern "C" fn gdiff_model_sample(
    model: *const GdiffModel,
    kind: GdiffSampler,
    steps: usize,
    eta: f64,
    n: usize,
    rng: *mut GdiffRng,
    out: *mut f64,
) -> GdiffStatus {
    guard(|| unsafe {
        let ck = &deref(model, "model")?.inner;
        let rng = &mut deref_mut(rng, "rng")?.inner;
        let process = NoiseProcess::new(ck.family.clone(), ck.schedule.clone())?;
        let cfg = SamplerConfig {
            kind: match kind {
                GdiffSampler::Ddpm => SamplerKind::Ddpm,
                GdiffSampler::Ddim => SamplerKind::Ddim,
            },
            eta,
            steps: timestep_subsequence(ck.schedule.len(), steps)?,
            clip_x0: ck.model.architecture().data_shape.len() > 1,
            record_every: 0,
        };
        let len = n * ck.model.architecture().data_dim();
        let dst = slice_mut(out, len, "out")?;
        let traj = sample(&ck.model, &process, &cfg, n, rng)?;
        dst.copy_from_slice(traj.x0.data());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gdiff_model_free(model: *mut GdiffModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
#[no_mangle]
pub unsafe extern "C" fn gdiff_ks_two_sample(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    d_out: *mut f64,
    p_out: *mut f64,
) -> GdiffStatus {
    guard(|| unsafe {
        let (d, p) = ks_two_sample(slice(a, na, "a")?, slice(b, nb, "b")?)?;
        *deref_mut(d_out, "d_out")? = d;
        *deref_mut(p_out, "p_out")? = p;
        Ok(())
    })
}
