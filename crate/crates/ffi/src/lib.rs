//! C ABI for the smallgan core-set library.
//!
//! Every fallible function returns a [`SmallganStatus`]. On failure the
//! message is kept per thread and can be read with
//! [`smallgan_last_error_message`]. Objects are opaque handles that must be
//! released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use smallgan::geometry::greedy_coreset_from;
use smallgan::projection::pool_for_cache;
use smallgan::{
    coverage_radius, exact_kcenter, gaussian_fid, greedy_coreset, load_cache, make_projection, save_cache,
    CoresetResult, EmbeddingCache, Error, GaussianStats, PointSet, ProjectionMatrix,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmallganStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Format = 3,
    Io = 4,
    OracleTooLarge = 5,
    NotPsd = 6,
    Diverged = 7,
    Panic = 8,
}

/// Row-major `n x d` point set.
pub struct SmallganPointSet(PointSet);

/// Embedding cache loaded from disk.
pub struct SmallganEmbeddingCache(EmbeddingCache);

/// Gaussian random projection matrix.
pub struct SmallganProjection(ProjectionMatrix);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> SmallganStatus {
    match err {
        Error::Contract(_) | Error::PoolExhausted { .. } => SmallganStatus::InvalidArgument,
        Error::OracleTooLarge { .. } => SmallganStatus::OracleTooLarge,
        Error::Format { .. } => SmallganStatus::Format,
        Error::Diverged { .. } => SmallganStatus::Diverged,
        Error::NotPsd { .. } => SmallganStatus::NotPsd,
        Error::Io(_) => SmallganStatus::Io,
    }
}

struct Fail(SmallganStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SmallganStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(SmallganStatus::InvalidArgument, msg.into())
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> SmallganStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            SmallganStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".to_string());
            SmallganStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn input_slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output_slice<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn path_arg(p: *const c_char) -> Result<String, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| invalid("path is not valid UTF-8"))
}

unsafe fn write_result(
    res: &CoresetResult,
    out_indices: *mut usize,
    out_radius: *mut f64,
) -> Result<(), Fail> {
    let out = output_slice(out_indices, res.indices.len(), "out_indices")?;
    out.copy_from_slice(&res.indices);
    if !out_radius.is_null() {
        *out_radius = res.coverage_radius;
    }
    Ok(())
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length in bytes
/// excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn smallgan_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn smallgan_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `n * d` row-major values into a new point set.
///
/// # Safety
/// `data` must point to `n * d` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smallgan_points_new(
    data: *const f64,
    n: usize,
    d: usize,
    out: *mut *mut SmallganPointSet,
) -> SmallganStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let len = n.checked_mul(d).ok_or_else(|| invalid("n * d overflows"))?;
        let values = input_slice(data, len, "data")?;
        let arr = ndarray::Array2::from_shape_vec((n, d), values.to_vec()).map_err(|e| invalid(e.to_string()))?;
        let points = PointSet::new(arr)?;
        *out = Box::into_raw(Box::new(SmallganPointSet(points)));
        Ok(())
    })
}

/// # Safety
/// `points` must be null or a handle from [`smallgan_points_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn smallgan_points_free(points: *mut SmallganPointSet) {
    if !points.is_null() {
        drop(Box::from_raw(points));
    }
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `points` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn smallgan_points_len(points: *const SmallganPointSet) -> usize {
    points.as_ref().map_or(0, |p| p.0.len())
}

/// Number of columns, or 0 for a null handle.
///
/// # Safety
/// `points` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn smallgan_points_dim(points: *const SmallganPointSet) -> usize {
    points.as_ref().map_or(0, |p| p.0.dim())
}

/// Greedy k-center selection with a seeded first center. Writes `k` row
/// indices in selection order and, if `out_radius` is non-null, the coverage
/// radius.
///
/// # Safety
/// `out_indices` must have room for `k` values.
#[no_mangle]
pub unsafe extern "C" fn smallgan_greedy_coreset(
    points: *const SmallganPointSet,
    k: usize,
    seed: u64,
    out_indices: *mut usize,
    out_radius: *mut f64,
) -> SmallganStatus {
    guard(|| {
        let p = borrow(points, "points")?;
        write_result(&greedy_coreset(&p.0, k, seed)?, out_indices, out_radius)
    })
}

/// Greedy k-center selection starting from row `first`.
///
/// # Safety
/// `out_indices` must have room for `k` values.
#[no_mangle]
pub unsafe extern "C" fn smallgan_greedy_coreset_from(
    points: *const SmallganPointSet,
    k: usize,
    first: usize,
    out_indices: *mut usize,
    out_radius: *mut f64,
) -> SmallganStatus {
    guard(|| {
        let p = borrow(points, "points")?;
        write_result(&greedy_coreset_from(&p.0, k, first)?, out_indices, out_radius)
    })
}

/// Optimal k-center by enumeration, for at most 20 points. Indices are
/// written in increasing order.
///
/// # Safety
/// `out_indices` must have room for `k` values.
#[no_mangle]
pub unsafe extern "C" fn smallgan_exact_kcenter(
    points: *const SmallganPointSet,
    k: usize,
    out_indices: *mut usize,
    out_radius: *mut f64,
) -> SmallganStatus {
    guard(|| {
        let p = borrow(points, "points")?;
        write_result(&exact_kcenter(&p.0, k)?, out_indices, out_radius)
    })
}

/// Largest distance from any point to its nearest selected row.
///
/// # Safety
/// `selected` must point to `count` readable indices.
#[no_mangle]
pub unsafe extern "C" fn smallgan_coverage_radius(
    points: *const SmallganPointSet,
    selected: *const usize,
    count: usize,
    out_radius: *mut f64,
) -> SmallganStatus {
    guard(|| {
        let p = borrow(points, "points")?;
        let sel = input_slice(selected, count, "selected")?;
        if out_radius.is_null() {
            return Err(null("out_radius"));
        }
        *out_radius = coverage_radius(&p.0, sel)?;
        Ok(())
    })
}

/// Loads a binary embedding cache.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smallgan_cache_load(
    path: *const c_char,
    out: *mut *mut SmallganEmbeddingCache,
) -> SmallganStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let cache = load_cache(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(SmallganEmbeddingCache(cache)));
        Ok(())
    })
}

/// Builds a cache from `n` ids and `n * d` row-major float32 values.
///
/// # Safety
/// `ids` must hold `n` values, `values` must hold `n * d`, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smallgan_cache_new(
    ids: *const u64,
    values: *const f32,
    n: usize,
    d: usize,
    out: *mut *mut SmallganEmbeddingCache,
) -> SmallganStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let len = n.checked_mul(d).ok_or_else(|| invalid("n * d overflows"))?;
        let ids = input_slice(ids, n, "ids")?.to_vec();
        let vals = input_slice(values, len, "values")?.to_vec();
        let arr = ndarray::Array2::from_shape_vec((n, d), vals).map_err(|e| invalid(e.to_string()))?;
        let cache = EmbeddingCache::new(ids, arr)?;
        *out = Box::into_raw(Box::new(SmallganEmbeddingCache(cache)));
        Ok(())
    })
}

/// # Safety
/// `cache` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn smallgan_cache_save(
    cache: *const SmallganEmbeddingCache,
    path: *const c_char,
) -> SmallganStatus {
    guard(|| {
        let c = borrow(cache, "cache")?;
        save_cache(&c.0, path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `cache` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn smallgan_cache_free(cache: *mut SmallganEmbeddingCache) {
    if !cache.is_null() {
        drop(Box::from_raw(cache));
    }
}

/// # Safety
/// `cache` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn smallgan_cache_len(cache: *const SmallganEmbeddingCache) -> usize {
    cache.as_ref().map_or(0, |c| c.0.len())
}

/// # Safety
/// `cache` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn smallgan_cache_dim(cache: *const SmallganEmbeddingCache) -> usize {
    cache.as_ref().map_or(0, |c| c.0.dim())
}

/// Copies all ids into `out_ids`.
///
/// # Safety
/// `out_ids` must have room for `smallgan_cache_len(cache)` values.
#[no_mangle]
pub unsafe extern "C" fn smallgan_cache_ids(
    cache: *const SmallganEmbeddingCache,
    out_ids: *mut u64,
) -> SmallganStatus {
    guard(|| {
        let c = borrow(cache, "cache")?;
        output_slice(out_ids, c.0.len(), "out_ids")?.copy_from_slice(c.0.ids());
        Ok(())
    })
}

/// Selects `k` dataset ids from the cache. The embeddings are first
/// projected to `proj_dim` dimensions; pass 0 to select on raw embeddings.
/// Ids are written in selection order.
///
/// # Safety
/// `out_ids` must have room for `k` values.
#[no_mangle]
pub unsafe extern "C" fn smallgan_cache_coreset(
    cache: *const SmallganEmbeddingCache,
    k: usize,
    proj_dim: usize,
    seed: u64,
    out_ids: *mut u64,
    out_radius: *mut f64,
) -> SmallganStatus {
    guard(|| {
        let c = borrow(cache, "cache")?;
        let dim = (proj_dim > 0).then_some(proj_dim);
        let pool = pool_for_cache(&c.0, dim, seed)?;
        let res = greedy_coreset(pool.points(), k, seed)?;
        let out = output_slice(out_ids, k, "out_ids")?;
        for (o, &r) in out.iter_mut().zip(&res.indices) {
            *o = pool.ids()[r];
        }
        if !out_radius.is_null() {
            *out_radius = res.coverage_radius;
        }
        Ok(())
    })
}

/// Seeded Gaussian projection from `input_dim` to `output_dim` dimensions.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smallgan_projection_new(
    input_dim: usize,
    output_dim: usize,
    seed: u64,
    out: *mut *mut SmallganProjection,
) -> SmallganStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let proj = make_projection(input_dim, output_dim, seed)?;
        *out = Box::into_raw(Box::new(SmallganProjection(proj)));
        Ok(())
    })
}

/// # Safety
/// `proj` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn smallgan_projection_free(proj: *mut SmallganProjection) {
    if !proj.is_null() {
        drop(Box::from_raw(proj));
    }
}

/// Projects `n` row-major input rows into `out` (`n * output_dim` values).
///
/// # Safety
/// `rows` must hold `n * input_dim` values and `out` room for `n * output_dim`.
#[no_mangle]
pub unsafe extern "C" fn smallgan_projection_apply(
    proj: *const SmallganProjection,
    rows: *const f64,
    n: usize,
    out: *mut f64,
) -> SmallganStatus {
    guard(|| {
        let p = borrow(proj, "proj")?;
        let (d, m) = (p.0.input_dim(), p.0.output_dim());
        let in_len = n.checked_mul(d).ok_or_else(|| invalid("n * input_dim overflows"))?;
        let input = input_slice(rows, in_len, "rows")?;
        let arr = ndarray::Array2::from_shape_vec((n, d), input.to_vec()).map_err(|e| invalid(e.to_string()))?;
        let projected = p.0.apply(&arr)?;
        let dst = output_slice(out, n * m, "out")?;
        for (o, v) in dst.iter_mut().zip(projected.iter()) {
            *o = *v;
        }
        Ok(())
    })
}

/// Frechet distance between N(mean_a, cov_a) and N(mean_b, cov_b) in `d`
/// dimensions. Covariances are row-major `d x d`.
///
/// # Safety
/// Means must hold `d` values and covariances `d * d`.
#[no_mangle]
pub unsafe extern "C" fn smallgan_gaussian_fid(
    mean_a: *const f64,
    cov_a: *const f64,
    mean_b: *const f64,
    cov_b: *const f64,
    d: usize,
    out: *mut f64,
) -> SmallganStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let dd = d.checked_mul(d).ok_or_else(|| invalid("d * d overflows"))?;
        let stats = |mean: *const f64, cov: *const f64| -> Result<GaussianStats, Fail> {
            let m = input_slice(mean, d, "mean")?.to_vec();
            let c = input_slice(cov, dd, "cov")?.to_vec();
            let c = ndarray::Array2::from_shape_vec((d, d), c).map_err(|e| invalid(e.to_string()))?;
            Ok(GaussianStats::new(ndarray::Array1::from(m), c)?)
        };
        let a = stats(mean_a, cov_a)?;
        let b = stats(mean_b, cov_b)?;
        *out = gaussian_fid(&a, &b)?;
        Ok(())
    })
}
