//! C interface to `binagg`.
//!
//! Every function returns a `BinaggStatus`. On failure a description is
//! kept per thread and can be read with `binagg_last_error_message`.
//! Matrices are passed row-major. Handles returned through out-pointers are
//! owned by the caller and released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use binagg::aggregation::{label_bound, NoiseMode};
use binagg::gdp::{self, GdpBudget, RandomSource};
use binagg::pipeline::{self, PipelineConfig};
use binagg::regression::{CorrectionScaling, NoiseCalibration};
use binagg::{Error, PrivateFit, Region, SyntheticDataset};
use nalgebra::{DMatrix, DVector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaggStatus {
    Ok = 0,
    InvalidArgument = 1,
    EmptyResult = 2,
    InsufficientBins = 3,
    Singular = 4,
    Load = 5,
    Io = 6,
    NullPointer = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BinaggStatus {
    match e {
        Error::InvalidArgument(_) => BinaggStatus::InvalidArgument,
        Error::EmptyResult => BinaggStatus::EmptyResult,
        Error::InsufficientBins { .. } => BinaggStatus::InsufficientBins,
        Error::Singular { .. } => BinaggStatus::Singular,
        Error::Load { .. } => BinaggStatus::Load,
        Error::Io(_) => BinaggStatus::Io,
    }
}

struct Fail(BinaggStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null() -> Fail {
    Fail(BinaggStatus::NullPointer, "null pointer argument".into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BinaggStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            BinaggStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            BinaggStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T: Copy>(dst: *mut T, src: &[T], capacity: usize) -> Result<(), Fail> {
    if dst.is_null() {
        return Err(null());
    }
    if capacity < src.len() {
        return Err(Fail(
            BinaggStatus::BufferTooSmall,
            format!("buffer holds {capacity} values, need {}", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes, 0 if there
/// is none.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn binagg_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn binagg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Composition of `n` GDP guarantees.
///
/// # Safety
/// `mus` must point to `n` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn binagg_compose(mus: *const f64, n: usize, out: *mut f64) -> BinaggStatus {
    guard(|| {
        let mus = slice(mus, n)?;
        let budgets = mus
            .iter()
            .map(|&m| GdpBudget::new(m))
            .collect::<Result<Vec<_>, _>>()?;
        let total = gdp::compose(&budgets)?;
        write_out(out, &[total.value()], 1)
    })
}

/// δ(ε) of a μ-GDP mechanism.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn binagg_gdp_to_delta(mu: f64, epsilon: f64, out: *mut f64) -> BinaggStatus {
    guard(|| {
        let p = gdp::gdp_to_approx_dp(GdpBudget::new(mu)?, epsilon)?;
        write_out(out, &[p.delta], 1)
    })
}

/// Smallest ε at which a μ-GDP mechanism is (ε, δ)-DP.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn binagg_gdp_to_epsilon(mu: f64, delta: f64, out: *mut f64) -> BinaggStatus {
    guard(|| {
        let eps = gdp::gdp_to_epsilon(GdpBudget::new(mu)?, delta)?;
        write_out(out, &[eps], 1)
    })
}

/// μ for which every ε-DP mechanism is μ-GDP.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn binagg_pure_dp_to_gdp(epsilon: f64, out: *mut f64) -> BinaggStatus {
    guard(|| {
        let mu = gdp::pure_dp_to_gdp(epsilon)?;
        write_out(out, &[mu.value()], 1)
    })
}

/// Pipeline settings. Obtain defaults from `binagg_config_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BinaggConfig {
    pub total_mu: f64,
    /// Budget ratios for bins, counts, feature sums and label sums.
    pub ratios: [f64; 4],
    pub theta: f64,
    pub max_depth: u32,
    pub min_count: i64,
    pub alpha: f64,
    pub strict_l2: bool,
    pub algorithm2_literal: bool,
    pub intercept: bool,
    /// Turns off every mechanism. The output is then not private.
    pub disable_noise: bool,
}

impl From<&BinaggConfig> for PipelineConfig {
    fn from(c: &BinaggConfig) -> Self {
        PipelineConfig {
            total_mu: c.total_mu,
            ratios: c.ratios,
            theta: c.theta,
            max_depth: c.max_depth as usize,
            min_count: c.min_count,
            alpha: c.alpha,
            calibration: if c.strict_l2 {
                NoiseCalibration::StrictL2
            } else {
                NoiseCalibration::PerCoordinate
            },
            scaling: if c.algorithm2_literal {
                CorrectionScaling::Averaged
            } else {
                CorrectionScaling::Summed
            },
            intercept: c.intercept,
            noise: if c.disable_noise {
                NoiseMode::Disabled
            } else {
                NoiseMode::Calibrated
            },
        }
    }
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn binagg_config_default(out: *mut BinaggConfig) -> BinaggStatus {
    guard(|| {
        let p = PipelineConfig::default();
        let c = BinaggConfig {
            total_mu: p.total_mu,
            ratios: p.ratios,
            theta: p.theta,
            max_depth: p.max_depth as u32,
            min_count: p.min_count,
            alpha: p.alpha,
            strict_l2: false,
            algorithm2_literal: false,
            intercept: false,
            disable_noise: false,
        };
        write_out(out, &[c], 1)
    })
}

/// Dataset description shared by the fitting and synthesis entry points.
/// `x` is `n × d` row-major, `lower`/`upper` hold the `d` domain bounds.
/// Rows must already lie inside the domain and labels inside the label
/// bounds.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BinaggData {
    pub x: *const f64,
    pub y: *const f64,
    pub n: usize,
    pub d: usize,
    pub lower: *const f64,
    pub upper: *const f64,
    pub label_lower: f64,
    pub label_upper: f64,
}

struct Inputs {
    x: DMatrix<f64>,
    y: DVector<f64>,
    domain: Region,
    label_bound: f64,
    config: PipelineConfig,
}

unsafe fn inputs(data: *const BinaggData, config: *const BinaggConfig) -> Result<Inputs, Fail> {
    if data.is_null() || config.is_null() {
        return Err(null());
    }
    let data = &*data;
    if data.n == 0 || data.d == 0 {
        return Err(Fail(BinaggStatus::InvalidArgument, "empty dataset".into()));
    }
    let len = data
        .n
        .checked_mul(data.d)
        .ok_or_else(|| Fail(BinaggStatus::InvalidArgument, "n * d overflows".into()))?;
    let x = DMatrix::from_row_slice(data.n, data.d, slice(data.x, len)?);
    let y = DVector::from_column_slice(slice(data.y, data.n)?);
    let domain = Region::new(
        slice(data.lower, data.d)?.to_vec(),
        slice(data.upper, data.d)?.to_vec(),
    )?;
    let label_bound = label_bound(data.label_lower, data.label_upper)?;
    Ok(Inputs {
        x,
        y,
        domain,
        label_bound,
        config: (&*config).into(),
    })
}

/// Opaque result of `binagg_fit`.
pub struct BinaggFit {
    fit: PrivateFit,
    total_mu: f64,
}

/// Fits the private regression. On success `*out` receives a handle to be
/// released with `binagg_fit_free`.
///
/// # Safety
/// `data` and `config` must be valid, the arrays inside `data` must have the
/// stated sizes, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn binagg_fit(
    data: *const BinaggData,
    config: *const BinaggConfig,
    seed: u64,
    out: *mut *mut BinaggFit,
) -> BinaggStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        *out = ptr::null_mut();
        let inp = inputs(data, config)?;
        let mut rng = RandomSource::new(seed, 0);
        let res = pipeline::run_regression(
            &inp.x,
            &inp.y,
            &inp.domain,
            inp.label_bound,
            &inp.config,
            None,
            &mut rng,
        )?;
        let handle = Box::new(BinaggFit {
            total_mu: res.budgets.total().value(),
            fit: res.fit,
        });
        *out = Box::into_raw(handle);
        Ok(())
    })
}

/// # Safety
/// `fit` must be null or a handle from `binagg_fit` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn binagg_fit_free(fit: *mut BinaggFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Number of coefficients (including an intercept if requested); 0 for null.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn binagg_fit_dim(fit: *const BinaggFit) -> usize {
    fit.as_ref().map_or(0, |f| f.fit.dim())
}

/// Number of bins used by the fit; 0 for null.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn binagg_fit_bins(fit: *const BinaggFit) -> usize {
    fit.as_ref().map_or(0, |f| f.fit.bins)
}

/// Composed privacy cost of the run; NaN for null.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn binagg_fit_total_mu(fit: *const BinaggFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.total_mu)
}

/// # Safety
/// `fit` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn binagg_fit_coefficients(
    fit: *const BinaggFit,
    out: *mut f64,
    len: usize,
) -> BinaggStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(null)?;
        write_out(out, f.fit.beta.as_slice(), len)
    })
}

/// # Safety
/// `fit` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn binagg_fit_std_errors(
    fit: *const BinaggFit,
    out: *mut f64,
    len: usize,
) -> BinaggStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(null)?;
        write_out(out, &f.fit.standard_errors(), len)
    })
}

/// Confidence interval endpoints at the configured level.
///
/// # Safety
/// `fit` must be a live handle; `lower` and `upper` must each hold `len`
/// values.
#[no_mangle]
pub unsafe extern "C" fn binagg_fit_intervals(
    fit: *const BinaggFit,
    lower: *mut f64,
    upper: *mut f64,
    len: usize,
) -> BinaggStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(null)?;
        let lo: Vec<f64> = f.fit.intervals.iter().map(|i| i.0).collect();
        let hi: Vec<f64> = f.fit.intervals.iter().map(|i| i.1).collect();
        write_out(lower, &lo, len)?;
        write_out(upper, &hi, len)
    })
}

/// Covariance matrix, row-major `dim × dim`.
///
/// # Safety
/// `fit` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn binagg_fit_covariance(
    fit: *const BinaggFit,
    out: *mut f64,
    len: usize,
) -> BinaggStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(null)?;
        let rows: Vec<f64> = f.fit.covariance.transpose().as_slice().to_vec();
        write_out(out, &rows, len)
    })
}

/// Opaque result of `binagg_synthesize`.
pub struct BinaggSynthetic {
    data: SyntheticDataset,
    total_mu: f64,
}

/// Generates a synthetic dataset. The intercept setting is ignored.
///
/// # Safety
/// As for `binagg_fit`.
#[no_mangle]
pub unsafe extern "C" fn binagg_synthesize(
    data: *const BinaggData,
    config: *const BinaggConfig,
    seed: u64,
    out: *mut *mut BinaggSynthetic,
) -> BinaggStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        *out = ptr::null_mut();
        let mut inp = inputs(data, config)?;
        inp.config.intercept = false;
        let mut rng = RandomSource::new(seed, 0);
        let (ds, budgets) = pipeline::run_synthesis(
            &inp.x,
            &inp.y,
            &inp.domain,
            inp.label_bound,
            &inp.config,
            &mut rng,
        )?;
        *out = Box::into_raw(Box::new(BinaggSynthetic {
            data: ds,
            total_mu: budgets.total().value(),
        }));
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle from `binagg_synthesize` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn binagg_synthetic_free(ds: *mut BinaggSynthetic) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn binagg_synthetic_len(ds: *const BinaggSynthetic) -> usize {
    ds.as_ref().map_or(0, |s| s.data.len())
}

/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn binagg_synthetic_dim(ds: *const BinaggSynthetic) -> usize {
    ds.as_ref().map_or(0, |s| s.data.dim())
}

/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn binagg_synthetic_bins(ds: *const BinaggSynthetic) -> usize {
    ds.as_ref().map_or(0, |s| s.data.bins())
}

/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn binagg_synthetic_total_mu(ds: *const BinaggSynthetic) -> f64 {
    ds.as_ref().map_or(f64::NAN, |s| s.total_mu)
}

/// Copies the records out: `x` receives `len × dim` values row-major, `y`
/// and `bin` receive `len` values each. `bin` may be null.
///
/// # Safety
/// `ds` must be a live handle and the buffers must have the sizes above
/// with `rows >= len`.
#[no_mangle]
pub unsafe extern "C" fn binagg_synthetic_records(
    ds: *const BinaggSynthetic,
    x: *mut f64,
    y: *mut f64,
    bin: *mut usize,
    rows: usize,
) -> BinaggStatus {
    guard(|| {
        let s = ds.as_ref().ok_or_else(null)?;
        let recs = s.data.records();
        let xs: Vec<f64> = recs.iter().flat_map(|r| r.x.iter().copied()).collect();
        let ys: Vec<f64> = recs.iter().map(|r| r.y).collect();
        write_out(x, &xs, rows.saturating_mul(s.data.dim()))?;
        write_out(y, &ys, rows)?;
        if !bin.is_null() {
            let bins: Vec<usize> = recs.iter().map(|r| r.bin).collect();
            write_out(bin, &bins, rows)?;
        }
        Ok(())
    })
}
