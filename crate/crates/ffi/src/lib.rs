//! C ABI over `grw-core`.
//!
//! Objects are opaque handles created by `grw_*_new` style functions and
//! released with the matching `grw_*_free`. Every fallible call returns a
//! [`GrwStatus`]; on failure the message is available from
//! [`grw_last_error_message`] on the same thread.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use num_complex::Complex64;

use grw_core::arrow::KacRing;
use grw_core::collapse::{self, Branches, GrwParams};
use grw_core::harness::{self, LoadedConfig};
use grw_core::qstate::{self, GridSpec, Region, WaveFunction};
use grw_core::rng::RngStream;
use grw_core::scenarios::OutcomeTally;
use grw_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrwStatus {
    Ok = 0,
    NullPointer = 1,
    Validation = 2,
    Runtime = 3,
    BufferTooSmall = 4,
    Panic = 5,
}

/// Opaque wavefunction on a periodic grid.
pub struct GrwWaveFunction(WaveFunction);

/// Opaque random stream.
pub struct GrwRng(RngStream);

/// Opaque Kac ring.
pub struct GrwKacRing(KacRing);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> GrwStatus {
    if e.is_validation() {
        GrwStatus::Validation
    } else {
        GrwStatus::Runtime
    }
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), GrwStatus>) -> GrwStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GrwStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside grw");
            GrwStatus::Panic
        }
    }
}

fn fail(e: Error) -> GrwStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(what: &str) -> GrwStatus {
    set_error(format!("{what} is null"));
    GrwStatus::NullPointer
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, GrwStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, GrwStatus> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), GrwStatus> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL, or 0
/// when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn grw_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Static version string.
#[no_mangle]
pub extern "C" fn grw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Normalized Gaussian packet with density standard deviation `sigma`.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn grw_wavefunction_gaussian(
    x_min: f64,
    x_max: f64,
    n_points: usize,
    center: f64,
    sigma: f64,
    momentum: f64,
    out: *mut *mut GrwWaveFunction,
) -> GrwStatus {
    guard(|| {
        let grid = GridSpec::new(x_min, x_max, n_points).map_err(fail)?;
        let psi = WaveFunction::gaussian(grid, center, sigma, momentum).map_err(fail)?;
        put(out, Box::into_raw(Box::new(GrwWaveFunction(psi))), "out")
    })
}

/// `√w₁ e^{0}|left⟩ + √(1−w₁) e^{iφ}|right⟩` with packets at `center ∓ separation/2`.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn grw_wavefunction_two_peak(
    x_min: f64,
    x_max: f64,
    n_points: usize,
    c1_sq: f64,
    phase: f64,
    center: f64,
    separation: f64,
    sigma: f64,
    out: *mut *mut GrwWaveFunction,
) -> GrwStatus {
    guard(|| {
        if !(0.0..=1.0).contains(&c1_sq) {
            return Err(fail(Error::Validation(format!("c1_sq = {c1_sq} not in [0, 1]"))));
        }
        let grid = GridSpec::new(x_min, x_max, n_points).map_err(fail)?;
        let c1 = Complex64::new(c1_sq.sqrt(), 0.0);
        let c2 = Complex64::from_polar((1.0 - c1_sq).sqrt(), phase);
        let d = 0.5 * separation;
        let psi = WaveFunction::superposition(grid, &[(c1, center - d, sigma), (c2, center + d, sigma)])
            .map_err(fail)?;
        put(out, Box::into_raw(Box::new(GrwWaveFunction(psi))), "out")
    })
}

/// # Safety
/// `psi` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn grw_wavefunction_free(psi: *mut GrwWaveFunction) {
    if !psi.is_null() {
        drop(Box::from_raw(psi));
    }
}

/// # Safety
/// Handles and output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn grw_wavefunction_norm(psi: *const GrwWaveFunction, out: *mut f64) -> GrwStatus {
    guard(|| {
        let psi = deref(psi, "psi")?;
        put(out, psi.0.norm_sqr(), "out")
    })
}

/// Weight in `[lo, hi)`.
///
/// # Safety
/// Handles and output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn grw_wavefunction_region_weight(
    psi: *const GrwWaveFunction,
    lo: f64,
    hi: f64,
    out: *mut f64,
) -> GrwStatus {
    guard(|| {
        let psi = deref(psi, "psi")?;
        let region = Region::new(lo, hi, psi.0.grid()).map_err(fail)?;
        put(out, qstate::region_weight(&psi.0, &region), "out")
    })
}

/// # Safety
/// Handles and output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn grw_wavefunction_moments(
    psi: *const GrwWaveFunction,
    mean: *mut f64,
    variance: *mut f64,
) -> GrwStatus {
    guard(|| {
        let psi = deref(psi, "psi")?;
        let (m, v) = qstate::position_moments(&psi.0);
        put(mean, m, "mean")?;
        put(variance, v, "variance")
    })
}

/// Copies the density `|ψ(xᵢ)|²` (summed over levels) into `buf`.
///
/// # Safety
/// `buf` must point to `len` writable doubles; `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn grw_wavefunction_density(
    psi: *const GrwWaveFunction,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> GrwStatus {
    guard(|| {
        let psi = deref(psi, "psi")?;
        let d = psi.0.density();
        put(written, d.len(), "written")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < d.len() {
            set_error(format!("buffer holds {len} values, need {}", d.len()));
            return Err(GrwStatus::BufferTooSmall);
        }
        ptr::copy_nonoverlapping(d.as_ptr(), buf, d.len());
        Ok(())
    })
}

/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn grw_rng_new(seed: u64, stream_id: u64, out: *mut *mut GrwRng) -> GrwStatus {
    guard(|| put(out, Box::into_raw(Box::new(GrwRng(RngStream::new(seed, stream_id)))), "out"))
}

/// # Safety
/// `rng` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn grw_rng_free(rng: *mut GrwRng) {
    if !rng.is_null() {
        drop(Box::from_raw(rng));
    }
}

/// Uniform draw in `[0, 1)`.
///
/// # Safety
/// Handles and output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn grw_rng_uniform(rng: *mut GrwRng, out: *mut f64) -> GrwStatus {
    guard(|| {
        let rng = deref_mut(rng, "rng")?;
        put(out, rng.0.uniform(), "out")
    })
}

fn params(tau: f64, a: f64, n_eff: f64) -> Result<GrwParams, GrwStatus> {
    GrwParams::new(tau, a, n_eff).map_err(fail)
}

/// Draws a collapse center from the current state.
///
/// # Safety
/// Handles and output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn grw_sample_center(
    psi: *const GrwWaveFunction,
    a: f64,
    rng: *mut GrwRng,
    out: *mut f64,
) -> GrwStatus {
    guard(|| {
        let psi = deref(psi, "psi")?;
        let rng = deref_mut(rng, "rng")?;
        let p = params(1.0, a, 1.0)?;
        p.validate_for_grid(psi.0.grid()).map_err(fail)?;
        let x = collapse::sample_center(&psi.0, &p, &mut rng.0).map_err(fail)?;
        put(out, x, "out")
    })
}

/// Multiplies the state by the Gaussian jump at `center` and renormalizes in place.
///
/// # Safety
/// `psi` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn grw_apply_jump(psi: *mut GrwWaveFunction, center: f64, a: f64) -> GrwStatus {
    guard(|| {
        let psi = deref_mut(psi, "psi")?;
        let p = params(1.0, a, 1.0)?;
        p.validate_for_grid(psi.0.grid()).map_err(fail)?;
        let (next, _) = collapse::apply_jump(&psi.0, center, &p, Branches::Levels).map_err(fail)?;
        psi.0 = next;
        Ok(())
    })
}

/// Poisson hit times on `(0, horizon]` at rate `n_eff / tau`. Writes up to
/// `len` times; `count` receives the total, which may exceed `len`.
///
/// # Safety
/// `buf` must point to `len` writable doubles (or be null with `len == 0`).
#[no_mangle]
pub unsafe extern "C" fn grw_schedule_jumps(
    tau: f64,
    n_eff: f64,
    horizon: f64,
    rng: *mut GrwRng,
    buf: *mut f64,
    len: usize,
    count: *mut usize,
) -> GrwStatus {
    guard(|| {
        let rng = deref_mut(rng, "rng")?;
        let p = params(tau, 1.0, n_eff)?;
        let times = collapse::schedule_jumps(&p, horizon, &mut rng.0);
        put(count, times.len(), "count")?;
        if times.len() > len {
            set_error(format!("buffer holds {len} times, need {}", times.len()));
            return Err(GrwStatus::BufferTooSmall);
        }
        if !times.is_empty() {
            if buf.is_null() {
                return Err(null("buf"));
            }
            ptr::copy_nonoverlapping(times.as_ptr(), buf, times.len());
        }
        Ok(())
    })
}

/// `tau / n_eff`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn grw_mean_first_jump_time(tau: f64, n_eff: f64, out: *mut f64) -> GrwStatus {
    guard(|| {
        if !(tau > 0.0 && n_eff > 0.0) {
            return Err(fail(Error::InvalidParams(format!("tau = {tau}, n_eff = {n_eff} must be positive"))));
        }
        put(out, harness::mean_first_jump_time(tau, n_eff), "out")
    })
}

/// Chi-square of decided counts against expected probabilities `(p1, p2)`.
///
/// # Safety
/// Output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn grw_born_chi_square(
    count_1: usize,
    count_2: usize,
    p1: f64,
    p2: f64,
    statistic: *mut f64,
    p_value: *mut f64,
) -> GrwStatus {
    guard(|| {
        let tally = OutcomeTally {
            counts: [count_1, count_2, 0],
            total: count_1 + count_2,
            frequencies: [0.0; 3],
            intervals: [(0.0, 1.0); 2],
        };
        let c = harness::born_chi_square(&tally, [p1, p2]).map_err(fail)?;
        put(statistic, c.statistic, "statistic")?;
        put(p_value, c.p_value, "p_value")
    })
}

/// Ring from per-site bytes (nonzero = black ball / marked edge).
///
/// # Safety
/// `colors` and `markers` must point to `n_sites` readable bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn grw_kac_ring_new(
    n_sites: usize,
    colors: *const u8,
    markers: *const u8,
    out: *mut *mut GrwKacRing,
) -> GrwStatus {
    guard(|| {
        if colors.is_null() || markers.is_null() {
            return Err(null("colors or markers"));
        }
        if n_sites == 0 {
            return Err(fail(Error::InvalidParams("n_sites must be positive".into())));
        }
        let c: Vec<bool> = std::slice::from_raw_parts(colors, n_sites).iter().map(|&b| b != 0).collect();
        let m: Vec<bool> = std::slice::from_raw_parts(markers, n_sites).iter().map(|&b| b != 0).collect();
        let ring = KacRing::new(&c, &m).map_err(fail)?;
        put(out, Box::into_raw(Box::new(GrwKacRing(ring))), "out")
    })
}

/// # Safety
/// `ring` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn grw_kac_ring_free(ring: *mut GrwKacRing) {
    if !ring.is_null() {
        drop(Box::from_raw(ring));
    }
}

/// Advances `steps` deterministic steps; negative values step backwards.
///
/// # Safety
/// `ring` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn grw_kac_ring_step(ring: *mut GrwKacRing, steps: i64) -> GrwStatus {
    guard(|| {
        let ring = deref_mut(ring, "ring")?;
        for _ in 0..steps.unsigned_abs() {
            if steps > 0 {
                ring.0.step();
            } else {
                ring.0.step_inverse();
            }
        }
        Ok(())
    })
}

/// Fraction of black balls.
///
/// # Safety
/// Handles and output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn grw_kac_ring_fraction(ring: *const GrwKacRing, out: *mut f64) -> GrwStatus {
    guard(|| {
        let ring = deref(ring, "ring")?;
        put(out, ring.0.fraction(), "out")
    })
}

/// Runs a cat or measurement-chain config file and reports
/// `[outcome 1, outcome 2, undecided]` counts.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `counts` must point to 3 writable values.
#[no_mangle]
pub unsafe extern "C" fn grw_run_config(
    config_path: *const c_char,
    trajectories: usize,
    master_seed: u64,
    workers: usize,
    counts: *mut usize,
) -> GrwStatus {
    guard(|| {
        if config_path.is_null() {
            return Err(null("config_path"));
        }
        if counts.is_null() {
            return Err(null("counts"));
        }
        let path = CStr::from_ptr(config_path)
            .to_str()
            .map_err(|_| fail(Error::Validation("config path is not UTF-8".into())))?;
        let loaded = harness::load_config(Path::new(path)).map_err(fail)?;
        let LoadedConfig::Scenario(run) = loaded else {
            return Err(fail(Error::Validation("config is not a cat or measurement_chain scenario".into())));
        };
        let e = harness::run_ensemble(&run.config, trajectories, master_seed, workers).map_err(fail)?;
        ptr::copy_nonoverlapping(e.summary.tally.counts.as_ptr(), counts, 3);
        Ok(())
    })
}
