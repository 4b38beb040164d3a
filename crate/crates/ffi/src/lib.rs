//! C ABI for the `fpe-mpc` controller.
//!
//! Objects cross the boundary as opaque handles that must be released with
//! the matching `*_free` function. Every fallible call returns an
//! [`FmpcStatus`]; on failure [`fmpc_last_error`] describes what went wrong.
//! Array arguments are caller-owned buffers with an explicit length.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use fpe_mpc::fpe::{chang_cooper_delta, gaussian_pdf, l2_distance, moments, step};
use fpe_mpc::monte_carlo::{confidence_report, run_ensemble};
use fpe_mpc::mpc::run_episode;
use fpe_mpc::scenario::{parse_scenario, Scenario};
use fpe_mpc::{EpisodeResult, Error, Grid2D, GridPdf};
use nalgebra::{Matrix2, Vector2};

/// Result of a C API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmpcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    Numeric = 5,
    GridMismatch = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Parsed scenario.
pub struct FmpcScenario(Scenario);

/// Traces of one controller episode.
pub struct FmpcEpisode(EpisodeResult);

/// Density on a grid.
pub struct FmpcPdf(GridPdf);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> FmpcStatus {
    match err {
        Error::InvalidArgument(_) | Error::EmptyEnsemble => FmpcStatus::InvalidArgument,
        Error::GridMismatch(_) => FmpcStatus::GridMismatch,
        Error::Parse(_) => FmpcStatus::Parse,
        Error::Io { .. } => FmpcStatus::Io,
        _ => FmpcStatus::Numeric,
    }
}

struct Failure(FmpcStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(FmpcStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FmpcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FmpcStatus::Ok,
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
            FmpcStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    unsafe { ptr.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn str_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| Failure(FmpcStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

unsafe fn write_slice(out: *mut f64, len: usize, values: &[f64]) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if len < values.len() {
        return Err(Failure(
            FmpcStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", values.len()),
        ));
    }
    unsafe { std::ptr::copy_nonoverlapping(values.as_ptr(), out, values.len()) };
    Ok(())
}

unsafe fn read_slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(unsafe { std::slice::from_raw_parts(ptr, len) })
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fmpc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fmpc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Chang-Cooper weight `1/w - 1/(exp(w) - 1)`.
#[no_mangle]
pub extern "C" fn fmpc_chang_cooper_delta(w: f64) -> f64 {
    chang_cooper_delta(w)
}

/// Parses a scenario from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fmpc_scenario_parse(toml: *const c_char, out: *mut *mut FmpcScenario) -> FmpcStatus {
    guard(|| {
        let text = unsafe { str_arg(toml, "toml") }?;
        let scenario = Scenario::from_toml_str(text)?;
        unsafe { put(out, FmpcScenario(scenario), "out") }
    })
}

/// Reads a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fmpc_scenario_load(path: *const c_char, out: *mut *mut FmpcScenario) -> FmpcStatus {
    guard(|| {
        let path = unsafe { str_arg(path, "path") }?;
        let scenario = parse_scenario(Path::new(path))?;
        unsafe { put(out, FmpcScenario(scenario), "out") }
    })
}

/// # Safety
/// `scenario` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn fmpc_scenario_free(scenario: *mut FmpcScenario) {
    if !scenario.is_null() {
        drop(unsafe { Box::from_raw(scenario) });
    }
}

/// Runs one controller episode.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fmpc_episode_run(scenario: *const FmpcScenario, out: *mut *mut FmpcEpisode) -> FmpcStatus {
    guard(|| {
        let scenario = unsafe { deref(scenario, "scenario") }?;
        let result = run_episode(&scenario.0.episode_spec())?;
        unsafe { put(out, FmpcEpisode(result), "out") }
    })
}

/// Number of control steps, 0 for a null handle.
///
/// # Safety
/// `episode` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fmpc_episode_steps(episode: *const FmpcEpisode) -> usize {
    unsafe { episode.as_ref() }.map_or(0, |e| e.0.steps())
}

/// Copies the inputs as `steps x 3` row-major values.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fmpc_episode_inputs(episode: *const FmpcEpisode, out: *mut f64, len: usize) -> FmpcStatus {
    guard(|| {
        let episode = unsafe { deref(episode, "episode") }?;
        let flat: Vec<f64> = episode.0.inputs.iter().flat_map(|u| u.as_array()).collect();
        unsafe { write_slice(out, len, &flat) }
    })
}

/// Copies the objective after each step (`steps` values).
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fmpc_episode_objectives(episode: *const FmpcEpisode, out: *mut f64, len: usize) -> FmpcStatus {
    guard(|| {
        let episode = unsafe { deref(episode, "episode") }?;
        unsafe { write_slice(out, len, &episode.0.objective_trace) }
    })
}

/// Objective of the starting density and after the last step.
///
/// # Safety
/// Both outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fmpc_episode_summary(
    episode: *const FmpcEpisode,
    initial_objective: *mut f64,
    final_objective: *mut f64,
) -> FmpcStatus {
    guard(|| {
        let episode = unsafe { deref(episode, "episode") }?;
        unsafe { write_slice(initial_objective, 1, &[episode.0.initial_objective]) }?;
        unsafe { write_slice(final_objective, 1, &[episode.0.final_objective]) }
    })
}

/// Copy of the density after the last step.
///
/// # Safety
/// `episode` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fmpc_episode_final_pdf(episode: *const FmpcEpisode, out: *mut *mut FmpcPdf) -> FmpcStatus {
    guard(|| {
        let episode = unsafe { deref(episode, "episode") }?;
        unsafe { put(out, FmpcPdf(episode.0.final_pdf().clone()), "out") }
    })
}

/// Monte-Carlo check of the episode's inputs against the scenario reference.
/// Writes the per-joint share of finals inside the 95% band and the number
/// of diverged samples.
///
/// # Safety
/// Handles must be live; `fraction_inside` must hold 2 doubles.
#[no_mangle]
pub unsafe extern "C" fn fmpc_episode_validate(
    scenario: *const FmpcScenario,
    episode: *const FmpcEpisode,
    samples: usize,
    seed: u64,
    fraction_inside: *mut f64,
    diverged: *mut usize,
) -> FmpcStatus {
    guard(|| {
        let s = &unsafe { deref(scenario, "scenario") }?.0;
        let e = &unsafe { deref(episode, "episode") }?.0;
        if diverged.is_null() {
            return Err(null("diverged"));
        }
        let ensemble = run_ensemble(&s.geometry, &s.shapes, &e.inputs, s.mpc.dt, s.ensemble.dt_fine, samples, seed)?;
        let report = confidence_report(&ensemble, &s.reference)?;
        unsafe { write_slice(fraction_inside, 2, &report.fraction_inside) }?;
        unsafe { *diverged = report.diverged };
        Ok(())
    })
}

/// # Safety
/// `episode` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn fmpc_episode_free(episode: *mut FmpcEpisode) {
    if !episode.is_null() {
        drop(unsafe { Box::from_raw(episode) });
    }
}

/// Normalized product Gaussian on a `points x points` grid.
///
/// # Safety
/// Array arguments must hold 2 doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fmpc_pdf_gaussian(
    lower: *const f64,
    upper: *const f64,
    points: usize,
    mu: *const f64,
    sigma: *const f64,
    out: *mut *mut FmpcPdf,
) -> FmpcStatus {
    guard(|| {
        let pair = |p: *const f64, what: &str| -> Result<[f64; 2], Failure> {
            let s = unsafe { read_slice(p, 2, what) }?;
            Ok([s[0], s[1]])
        };
        let grid = Grid2D::new(pair(lower, "lower")?, pair(upper, "upper")?, points)?;
        let pdf = gaussian_pdf(&grid, pair(mu, "mu")?, pair(sigma, "sigma")?)?;
        unsafe { put(out, FmpcPdf(pdf), "out") }
    })
}

/// One implicit step under nodal drift (`2 * nodes` values) and diffusion
/// (`4 * nodes` values, row-major 2x2 per node). `previous` may be null for
/// a backward-Euler start.
///
/// # Safety
/// Handles must be live and the arrays must hold the stated counts.
#[no_mangle]
pub unsafe extern "C" fn fmpc_pdf_step(
    current: *const FmpcPdf,
    previous: *const FmpcPdf,
    drift: *const f64,
    diffusion: *const f64,
    nodes: usize,
    dt: f64,
    out: *mut *mut FmpcPdf,
) -> FmpcStatus {
    guard(|| {
        let current = &unsafe { deref(current, "current") }?.0;
        let previous = unsafe { previous.as_ref() }.map(|p| &p.0);
        if nodes != current.grid().len() {
            return Err(Failure(
                FmpcStatus::GridMismatch,
                format!("{nodes} nodes given, grid has {}", current.grid().len()),
            ));
        }
        let f = unsafe { read_slice(drift, 2 * nodes, "drift") }?;
        let a = unsafe { read_slice(diffusion, 4 * nodes, "diffusion") }?;
        let f: Vec<Vector2<f64>> = f.chunks_exact(2).map(|c| Vector2::new(c[0], c[1])).collect();
        let a: Vec<Matrix2<f64>> = a.chunks_exact(4).map(|c| Matrix2::new(c[0], c[1], c[2], c[3])).collect();
        let next = step(current, previous, &f, &a, dt)?;
        unsafe { put(out, FmpcPdf(next.pdf), "out") }
    })
}

/// Number of grid nodes, 0 for a null handle.
///
/// # Safety
/// `pdf` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fmpc_pdf_len(pdf: *const FmpcPdf) -> usize {
    unsafe { pdf.as_ref() }.map_or(0, |p| p.0.values().len())
}

/// Copies the nodal values, `q2` index fastest.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fmpc_pdf_values(pdf: *const FmpcPdf, out: *mut f64, len: usize) -> FmpcStatus {
    guard(|| {
        let pdf = unsafe { deref(pdf, "pdf") }?;
        unsafe { write_slice(out, len, pdf.0.values()) }
    })
}

/// Mean (2 values) and row-major covariance (4 values).
///
/// # Safety
/// `mean` must hold 2 and `cov` 4 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fmpc_pdf_moments(pdf: *const FmpcPdf, mean: *mut f64, cov: *mut f64) -> FmpcStatus {
    guard(|| {
        let pdf = unsafe { deref(pdf, "pdf") }?;
        let (m, c) = moments(&pdf.0);
        unsafe { write_slice(mean, 2, &[m[0], m[1]]) }?;
        unsafe { write_slice(cov, 4, &[c[(0, 0)], c[(0, 1)], c[(1, 0)], c[(1, 1)]]) }
    })
}

/// Sum of squared nodal differences.
///
/// # Safety
/// Handles must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fmpc_pdf_l2(a: *const FmpcPdf, b: *const FmpcPdf, out: *mut f64) -> FmpcStatus {
    guard(|| {
        let a = unsafe { deref(a, "a") }?;
        let b = unsafe { deref(b, "b") }?;
        let d = l2_distance(&a.0, &b.0)?;
        unsafe { write_slice(out, 1, &[d]) }
    })
}

/// # Safety
/// `pdf` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn fmpc_pdf_free(pdf: *mut FmpcPdf) {
    if !pdf.is_null() {
        drop(unsafe { Box::from_raw(pdf) });
    }
}
