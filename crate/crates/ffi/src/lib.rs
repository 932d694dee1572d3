//! C ABI for `coulombflow`.
//!
//! Every function returns a [`CfStatus`]. Results go through out-pointers,
//! objects are opaque handles released with their `*_free` function, and the
//! message of the most recent failure on the calling thread is available from
//! [`cf_last_error_message`]. Panics are caught at the boundary and reported
//! as [`CfStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_complex::Complex64;

use coulombflow::freecalc::{free_entropy, free_fisher, hilbert_transform, stieltjes};
use coulombflow::measures::{wasserstein, EmpiricalMeasure, Grid, GridDensity, DEFAULT_QUANTILE_NODES};
use coulombflow::pde::{step, InitSpec};
use coulombflow::potentials::{equilibrium_closed_form, make_potential, Potential, PotentialSpec};
use coulombflow::sde::{simulate_ensemble, EnsembleOutput, SdeConfig, SdeInit};
use coulombflow::Error;

/// Status code returned by every function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numerical = 4,
    Verification = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// A potential `V`.
pub struct CfPotential(Potential);

/// A piecewise-constant density on a uniform grid.
pub struct CfDensity(GridDensity);

/// Output of a particle ensemble run.
pub struct CfEnsemble(EnsembleOutput);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> CfStatus {
    match e {
        Error::Config(_) | Error::Json(_) => CfStatus::Config,
        Error::Io(_) => CfStatus::Io,
        Error::Verification(_) => CfStatus::Verification,
        _ if e.exit_code() == 3 => CfStatus::Numerical,
        _ => CfStatus::InvalidArgument,
    }
}

enum Fail {
    Null(&'static str),
    Small { needed: usize, got: usize },
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            CfStatus::Ok
        }
        Ok(Err(Fail::Null(name))) => {
            set_error(format!("null pointer: {name}"));
            CfStatus::NullPointer
        }
        Ok(Err(Fail::Small { needed, got })) => {
            set_error(format!("buffer holds {got} values, {needed} needed"));
            CfStatus::BufferTooSmall
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CfStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(name))
}

unsafe fn out<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(name))
}

unsafe fn text<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Core(Error::InvalidArgument(format!("{name} is not UTF-8"))))
}

/// Copies `src` into a caller buffer of `len` values; `written` receives the
/// length needed even when the buffer is too small.
unsafe fn fill(src: &[f64], buf: *mut f64, len: usize, written: *mut usize) -> Result<(), Fail> {
    if let Some(w) = written.as_mut() {
        *w = src.len();
    }
    if len < src.len() {
        return Err(Fail::Small { needed: src.len(), got: len });
    }
    if buf.is_null() {
        return Err(Fail::Null("buf"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Copies the last error message of this thread, NUL-terminated and
/// truncated to `len` bytes. Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cf_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds a potential from a spec string such as `quadratic:theta=0.5`.
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_potential_new(spec: *const c_char, out_handle: *mut *mut CfPotential) -> CfStatus {
    guard(|| {
        let o = out(out_handle, "out")?;
        let spec = PotentialSpec::parse(text(spec, "spec")?)?;
        *o = boxed(CfPotential(make_potential(&spec)?));
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle from [`cf_potential_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cf_potential_free(p: *mut CfPotential) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// `V(x)` and `V'(x)`.
///
/// # Safety
/// `p` must be a live handle; `v` and `dv` may be null.
#[no_mangle]
pub unsafe extern "C" fn cf_potential_eval(p: *const CfPotential, x: f64, v: *mut f64, dv: *mut f64) -> CfStatus {
    guard(|| {
        let p = &deref(p, "potential")?.0;
        if let Some(v) = v.as_mut() {
            *v = p.v(x);
        }
        if let Some(dv) = dv.as_mut() {
            *dv = p.dv(x);
        }
        Ok(())
    })
}

/// A density from `n` cell values on `[left, right]`, normalized to unit mass.
///
/// # Safety
/// `values` must point to `n` readable values and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn cf_density_new(
    left: f64,
    right: f64,
    n: usize,
    values: *const f64,
    out_handle: *mut *mut CfDensity,
) -> CfStatus {
    guard(|| {
        let o = out(out_handle, "out")?;
        if values.is_null() {
            return Err(Fail::Null("values"));
        }
        let grid = Grid::new(left, right, n)?;
        let values = std::slice::from_raw_parts(values, n).to_vec();
        *o = boxed(CfDensity(GridDensity::from_cell_values(grid, values)?));
        Ok(())
    })
}

/// The closed-form equilibrium of `potential` on `[left, right]` with `n` cells.
///
/// # Safety
/// `potential` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cf_density_equilibrium(
    potential: *const CfPotential,
    left: f64,
    right: f64,
    n: usize,
    out_handle: *mut *mut CfDensity,
) -> CfStatus {
    guard(|| {
        let o = out(out_handle, "out")?;
        let p = &deref(potential, "potential")?.0;
        let grid = Grid::new(left, right, n)?;
        *o = boxed(CfDensity(equilibrium_closed_form(p, &grid)?));
        Ok(())
    })
}

/// # Safety
/// `d` must be null or a live density handle.
#[no_mangle]
pub unsafe extern "C" fn cf_density_free(d: *mut CfDensity) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Cell count of the grid.
///
/// # Safety
/// `d` must be a live handle and `n` valid.
#[no_mangle]
pub unsafe extern "C" fn cf_density_len(d: *const CfDensity, n: *mut usize) -> CfStatus {
    guard(|| {
        *out(n, "n")? = deref(d, "density")?.0.values().len();
        Ok(())
    })
}

/// Cell values of the density.
///
/// # Safety
/// `buf` must point to `len` writable values; `written` may be null.
#[no_mangle]
pub unsafe extern "C" fn cf_density_values(
    d: *const CfDensity,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> CfStatus {
    guard(|| fill(deref(d, "density")?.0.values(), buf, len, written))
}

/// Hilbert transform `Hρ` at the cell centers.
///
/// # Safety
/// As for [`cf_density_values`].
#[no_mangle]
pub unsafe extern "C" fn cf_hilbert(d: *const CfDensity, buf: *mut f64, len: usize, written: *mut usize) -> CfStatus {
    guard(|| fill(hilbert_transform(&deref(d, "density")?.0).values(), buf, len, written))
}

/// Free entropy `Σ_V(ρ)`.
///
/// # Safety
/// Handles must be live and `value` valid.
#[no_mangle]
pub unsafe extern "C" fn cf_free_entropy(d: *const CfDensity, p: *const CfPotential, value: *mut f64) -> CfStatus {
    guard(|| {
        let v = out(value, "value")?;
        *v = free_entropy(&deref(d, "density")?.0, &deref(p, "potential")?.0)?;
        Ok(())
    })
}

/// Free Fisher information `∫ (Hρ − V'/2)² dρ`.
///
/// # Safety
/// Handles must be live and `value` valid.
#[no_mangle]
pub unsafe extern "C" fn cf_free_fisher(d: *const CfDensity, p: *const CfPotential, value: *mut f64) -> CfStatus {
    guard(|| {
        let v = out(value, "value")?;
        *v = free_fisher(&deref(d, "density")?.0, &deref(p, "potential")?.0);
        Ok(())
    })
}

/// Wasserstein distance of order `p ∈ [1, 2]` between two densities.
///
/// # Safety
/// Handles must be live and `value` valid.
#[no_mangle]
pub unsafe extern "C" fn cf_wasserstein(a: *const CfDensity, b: *const CfDensity, p: f64, value: *mut f64) -> CfStatus {
    guard(|| {
        let v = out(value, "value")?;
        *v = wasserstein(p, &deref(a, "a")?.0, &deref(b, "b")?.0, DEFAULT_QUANTILE_NODES)?;
        Ok(())
    })
}

/// Wasserstein distance of order `p` between a density and the empirical
/// measure of `n` atoms.
///
/// # Safety
/// `atoms` must point to `n` readable values.
#[no_mangle]
pub unsafe extern "C" fn cf_wasserstein_atoms(
    d: *const CfDensity,
    atoms: *const f64,
    n: usize,
    p: f64,
    value: *mut f64,
) -> CfStatus {
    guard(|| {
        let v = out(value, "value")?;
        if atoms.is_null() {
            return Err(Fail::Null("atoms"));
        }
        let e = EmpiricalMeasure::new(std::slice::from_raw_parts(atoms, n).to_vec())?;
        *v = wasserstein(p, &deref(d, "density")?.0, &e, DEFAULT_QUANTILE_NODES)?;
        Ok(())
    })
}

/// Stieltjes transform `G(z) = ∫ ρ(x)/(z − x) dx` off the real axis.
///
/// # Safety
/// `d` must be live; `g_re` and `g_im` valid.
#[no_mangle]
pub unsafe extern "C" fn cf_stieltjes(
    d: *const CfDensity,
    z_re: f64,
    z_im: f64,
    g_re: *mut f64,
    g_im: *mut f64,
) -> CfStatus {
    guard(|| {
        let re = out(g_re, "g_re")?;
        let im = out(g_im, "g_im")?;
        let g = stieltjes(&deref(d, "density")?.0, Complex64::new(z_re, z_im))?.g;
        *re = g.re;
        *im = g.im;
        Ok(())
    })
}

/// One upwind finite-volume step of size `dt`; the result is a new handle.
///
/// # Safety
/// Handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cf_pde_step(
    d: *const CfDensity,
    p: *const CfPotential,
    dt: f64,
    out_handle: *mut *mut CfDensity,
) -> CfStatus {
    guard(|| {
        let o = out(out_handle, "out")?;
        *o = boxed(CfDensity(step(&deref(d, "density")?.0, &deref(p, "potential")?.0, dt)?));
        Ok(())
    })
}

/// Runs `n_paths` particle paths up to `t_end` with snapshots at `0` and
/// `t_end`. Particles start at the quantiles of `init`, a density spec such
/// as `semicircle:radius=2`. `dt <= 0` selects the default step.
///
/// # Safety
/// `p` must be live, `init` NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cf_sde_run(
    p: *const CfPotential,
    init: *const c_char,
    n_particles: usize,
    beta: f64,
    n_paths: usize,
    t_end: f64,
    dt: f64,
    seed: u64,
    out_handle: *mut *mut CfEnsemble,
) -> CfStatus {
    guard(|| {
        let o = out(out_handle, "out")?;
        let spec = deref(p, "potential")?.0.spec().clone();
        let density = InitSpec::parse(text(init, "init")?)?;
        let mut config = SdeConfig::new(n_particles, beta, spec, t_end, SdeInit::Quantiles { density });
        config.seed = seed;
        config.dt = (dt > 0.0).then_some(dt);
        *o = boxed(CfEnsemble(simulate_ensemble(&config, n_paths)?));
        Ok(())
    })
}

/// # Safety
/// `e` must be null or a live ensemble handle.
#[no_mangle]
pub unsafe extern "C" fn cf_ensemble_free(e: *mut CfEnsemble) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Number of snapshots (2 for [`cf_sde_run`]: `t = 0` and `t_end`).
///
/// # Safety
/// `e` must be live and `n` valid.
#[no_mangle]
pub unsafe extern "C" fn cf_ensemble_snapshots(e: *const CfEnsemble, n: *mut usize) -> CfStatus {
    guard(|| {
        *out(n, "n")? = deref(e, "ensemble")?.0.snapshot_times.len();
        Ok(())
    })
}

/// Sorted atoms of all paths pooled at snapshot `k`.
///
/// # Safety
/// As for [`cf_density_values`].
#[no_mangle]
pub unsafe extern "C" fn cf_ensemble_atoms(
    e: *const CfEnsemble,
    k: usize,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> CfStatus {
    guard(|| {
        let e = &deref(e, "ensemble")?.0;
        let pooled = e
            .pooled
            .get(k)
            .ok_or_else(|| Error::InvalidArgument(format!("snapshot {k} of {}", e.pooled.len())))?;
        fill(pooled.atoms(), buf, len, written)
    })
}

/// Path mean of the second moment at snapshot `k`.
///
/// # Safety
/// `e` must be live and `value` valid.
#[no_mangle]
pub unsafe extern "C" fn cf_ensemble_m2(e: *const CfEnsemble, k: usize, value: *mut f64) -> CfStatus {
    guard(|| {
        let v = out(value, "value")?;
        let e = &deref(e, "ensemble")?.0;
        let pooled = e
            .pooled
            .get(k)
            .ok_or_else(|| Error::InvalidArgument(format!("snapshot {k} of {}", e.pooled.len())))?;
        *v = pooled.integrate(|x| x * x);
        Ok(())
    })
}
