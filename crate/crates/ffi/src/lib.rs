//! C interface to the vqmc engine.
//!
//! Every function returns a [`VqmcStatus`]; on failure a message is available
//! from [`vqmc_last_error`] on the same thread. Objects are opaque handles
//! created by `*_new`/`*_from_*`/`*_load` functions and released with the
//! matching `*_free`. Outputs are written through caller-provided pointers
//! only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use vqmc::analysis::{self, ExtrapolationPair, ReactionTable};
use vqmc::features::FeatureKind;
use vqmc::hamiltonian;
use vqmc::network::{checkpoint, FermiNet, NetworkHyperparams, WavefunctionParams};
use vqmc::system::{Molecule, WalkerBatch};
use vqmc::wavefunction::Wavefunction;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VqmcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidArgument = 4,
    Io = 5,
    Numerical = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VqmcFeatureKind {
    Linear = 0,
    Slater = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VqmcHyperparams {
    pub n_layers: usize,
    pub width_one: usize,
    pub width_two: usize,
    pub n_det: usize,
    pub feature_kind: VqmcFeatureKind,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VqmcExtrapolation {
    pub i_left: f64,
    pub i_right: f64,
    pub i_exact: f64,
    /// 1 when `i2 < i1`.
    pub monotonic: i32,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VqmcErrorStatistics {
    pub delta_max_abs: f64,
    pub mean_abs: f64,
    pub std: f64,
}

/// Opaque molecule handle.
pub struct VqmcMolecule {
    inner: Molecule,
}

/// Opaque wavefunction-parameter handle.
pub struct VqmcParams {
    inner: WavefunctionParams,
}

struct Failure {
    status: VqmcStatus,
    message: String,
}

impl Failure {
    fn new(status: VqmcStatus, message: impl ToString) -> Self {
        Failure {
            status,
            message: message.to_string(),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VqmcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VqmcStatus::Ok,
        Ok(Err(e)) => {
            set_last_error(&e.message);
            e.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "internal panic".into());
            set_last_error(&msg);
            VqmcStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(VqmcStatus::NullPointer, format!("{name} is null")))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(VqmcStatus::NullPointer, format!("{name} is null")))
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(VqmcStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(VqmcStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(Failure::new(VqmcStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn invalid(e: impl ToString) -> Failure {
    Failure::new(VqmcStatus::InvalidArgument, e)
}

/// Message describing the last failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vqmc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vqmc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a molecule from TOML text with a `[molecule]` table.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vqmc_molecule_from_toml(toml: *const c_char, out_mol: *mut *mut VqmcMolecule) -> VqmcStatus {
    guard(|| {
        let src = text(toml, "toml")?;
        let slot = out(out_mol, "out_mol")?;
        let inner = Molecule::from_toml(src).map_err(|e| Failure::new(VqmcStatus::Parse, e))?;
        *slot = Box::into_raw(Box::new(VqmcMolecule { inner }));
        Ok(())
    })
}

/// # Safety
/// `mol` must come from [`vqmc_molecule_from_toml`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vqmc_molecule_free(mol: *mut VqmcMolecule) {
    if !mol.is_null() {
        drop(Box::from_raw(mol));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vqmc_molecule_n_electrons(mol: *const VqmcMolecule, n: *mut usize) -> VqmcStatus {
    guard(|| {
        let m = borrow(mol, "mol")?;
        *out(n, "n")? = m.inner.n_electrons();
        Ok(())
    })
}

/// Nuclear repulsion energy in hartree.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vqmc_molecule_nuclear_repulsion(mol: *const VqmcMolecule, energy: *mut f64) -> VqmcStatus {
    guard(|| {
        let m = borrow(mol, "mol")?;
        let e = m.inner.nuclear_repulsion().map_err(invalid)?;
        *out(energy, "energy")? = e;
        Ok(())
    })
}

/// Default network hyperparameters.
#[no_mangle]
pub extern "C" fn vqmc_hyperparams_default() -> VqmcHyperparams {
    to_c(NetworkHyperparams::default())
}

fn to_c(hp: NetworkHyperparams) -> VqmcHyperparams {
    VqmcHyperparams {
        n_layers: hp.n_layers,
        width_one: hp.width_one,
        width_two: hp.width_two,
        n_det: hp.n_det,
        feature_kind: match hp.feature_kind {
            FeatureKind::Linear => VqmcFeatureKind::Linear,
            FeatureKind::Slater => VqmcFeatureKind::Slater,
        },
    }
}

fn from_c(hp: &VqmcHyperparams) -> NetworkHyperparams {
    NetworkHyperparams {
        n_layers: hp.n_layers,
        width_one: hp.width_one,
        width_two: hp.width_two,
        n_det: hp.n_det,
        feature_kind: match hp.feature_kind {
            VqmcFeatureKind::Linear => FeatureKind::Linear,
            VqmcFeatureKind::Slater => FeatureKind::Slater,
        },
    }
}

/// Randomly initialised parameters for `mol`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vqmc_params_init(
    mol: *const VqmcMolecule,
    hp: *const VqmcHyperparams,
    seed: u64,
    out_params: *mut *mut VqmcParams,
) -> VqmcStatus {
    guard(|| {
        let m = borrow(mol, "mol")?;
        let h = from_c(borrow(hp, "hp")?);
        let slot = out(out_params, "out_params")?;
        let inner = WavefunctionParams::init(&m.inner, h, seed).map_err(invalid)?;
        *slot = Box::into_raw(Box::new(VqmcParams { inner }));
        Ok(())
    })
}

/// Reads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_params` valid.
#[no_mangle]
pub unsafe extern "C" fn vqmc_params_load(path: *const c_char, out_params: *mut *mut VqmcParams) -> VqmcStatus {
    guard(|| {
        let p = text(path, "path")?;
        let slot = out(out_params, "out_params")?;
        let inner = checkpoint::load(Path::new(p)).map_err(|e| match e {
            checkpoint::CheckpointError::Io(_) => Failure::new(VqmcStatus::Io, e),
            _ => Failure::new(VqmcStatus::Parse, e),
        })?;
        *slot = Box::into_raw(Box::new(VqmcParams { inner }));
        Ok(())
    })
}

/// Writes a checkpoint file.
///
/// # Safety
/// Pointers must be valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn vqmc_params_save(params: *const VqmcParams, path: *const c_char) -> VqmcStatus {
    guard(|| {
        let p = borrow(params, "params")?;
        let file = text(path, "path")?;
        checkpoint::save(&p.inner, Path::new(file)).map_err(|e| Failure::new(VqmcStatus::Io, e))
    })
}

/// Number of scalar parameters.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vqmc_params_len(params: *const VqmcParams, n: *mut usize) -> VqmcStatus {
    guard(|| {
        let p = borrow(params, "params")?;
        *out(n, "n")? = p.inner.len();
        Ok(())
    })
}

/// # Safety
/// `params` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vqmc_params_free(params: *mut VqmcParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

fn network<'a>(m: &VqmcMolecule, p: &'a VqmcParams) -> Result<FermiNet<'a>, Failure> {
    FermiNet::new(&m.inner, &p.inner).map_err(invalid)
}

/// Sign and `log|Ψ|` at one configuration of `3 * n_electrons` coordinates
/// (bohr, `x0 y0 z0 x1 ...`, spin-up electrons first).
///
/// # Safety
/// `coords` must point to `n_coords` doubles; other pointers valid.
#[no_mangle]
pub unsafe extern "C" fn vqmc_log_psi(
    mol: *const VqmcMolecule,
    params: *const VqmcParams,
    coords: *const f64,
    n_coords: usize,
    sign: *mut f64,
    log_abs: *mut f64,
) -> VqmcStatus {
    guard(|| {
        let m = borrow(mol, "mol")?;
        let p = borrow(params, "params")?;
        let x = slice(coords, n_coords, "coords")?;
        let net = network(m, p)?;
        if n_coords != 3 * net.n_electrons() {
            return Err(invalid(format!("expected {} coordinates, got {n_coords}", 3 * net.n_electrons())));
        }
        let (s, l) = (out(sign, "sign")?, out(log_abs, "log_abs")?);
        let v = net.log_psi(x);
        *s = v.sign;
        *l = v.log_abs;
        Ok(())
    })
}

/// Local energies of `n_walkers` configurations stored walker-major. Walkers
/// at a node or a coalescence get NaN; the call still succeeds.
///
/// # Safety
/// `coords` must hold `n_walkers * 3 * n_electrons` doubles and `energies`
/// room for `n_walkers`.
#[no_mangle]
pub unsafe extern "C" fn vqmc_local_energy(
    mol: *const VqmcMolecule,
    params: *const VqmcParams,
    coords: *const f64,
    n_walkers: usize,
    energies: *mut f64,
) -> VqmcStatus {
    guard(|| {
        let m = borrow(mol, "mol")?;
        let p = borrow(params, "params")?;
        let net = network(m, p)?;
        if n_walkers == 0 {
            return Err(invalid("n_walkers must be positive"));
        }
        let n = 3 * net.n_electrons() * n_walkers;
        let x = slice(coords, n, "coords")?;
        if energies.is_null() {
            return Err(Failure::new(VqmcStatus::NullPointer, "energies is null"));
        }
        let walkers = WalkerBatch::from_flat(net.n_electrons(), x.to_vec());
        let samples = hamiltonian::local_energy(&net, &walkers, &m.inner).map_err(|e| Failure::new(VqmcStatus::Numerical, e))?;
        let dst = std::slice::from_raw_parts_mut(energies, n_walkers);
        for (d, s) in dst.iter_mut().zip(samples) {
            *d = s.map_or(f64::NAN, |s| s.total);
        }
        Ok(())
    })
}

/// Two-point extrapolation of Monte Carlo estimates `i1`, `i2` obtained from
/// `n1 < n2` samples.
///
/// # Safety
/// `result` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vqmc_extrapolate(n1: f64, i1: f64, n2: f64, i2: f64, result: *mut VqmcExtrapolation) -> VqmcStatus {
    guard(|| {
        let slot = out(result, "result")?;
        let r = analysis::extrapolate(ExtrapolationPair { n1, i1, n2, i2 }).map_err(invalid)?;
        *slot = VqmcExtrapolation {
            i_left: r.i_left,
            i_right: r.i_right,
            i_exact: r.i_exact,
            monotonic: i32::from(r.monotonic),
        };
        Ok(())
    })
}

/// Error statistics (kJ/mol) of a reaction table given as TOML text.
///
/// # Safety
/// `toml` must be NUL-terminated and `result` valid.
#[no_mangle]
pub unsafe extern "C" fn vqmc_reaction_statistics(toml: *const c_char, result: *mut VqmcErrorStatistics) -> VqmcStatus {
    guard(|| {
        let src = text(toml, "toml")?;
        let slot = out(result, "result")?;
        let table = ReactionTable::from_toml(src).map_err(|e| Failure::new(VqmcStatus::Parse, e))?;
        let s = analysis::error_statistics(&table).map_err(invalid)?;
        *slot = VqmcErrorStatistics {
            delta_max_abs: s.delta_max_abs,
            mean_abs: s.mean_abs,
            std: s.std,
        };
        Ok(())
    })
}
