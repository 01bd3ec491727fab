//! Coordinate derivatives of `log|Ψ|`.
//!
//! The exact engine evaluates the wavefunction once per coordinate axis in
//! [`Jet`] arithmetic, which yields `∂ log|Ψ| / ∂x_c` and `∂² log|Ψ| / ∂x_c²`
//! together. The finite-difference routines are kept as an independent oracle.

use rayon::prelude::*;
use thiserror::Error;

use crate::scalar::{Jet, Scalar};
use crate::system::WalkerBatch;
use crate::wavefunction::{LogPsi, Wavefunction};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum DerivativeError {
    #[error("walker {walker} sits on a node of the wavefunction")]
    Node { walker: usize },
    #[error("non-finite derivative at walker {walker}")]
    NonFinite { walker: usize },
}

/// Derivatives for one walker.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkerDerivatives {
    pub log_psi: LogPsi,
    /// `∂ log|Ψ| / ∂x`, length `3N`.
    pub grad: Vec<f64>,
    /// `Σ_c ∂² log|Ψ| / ∂x_c²`.
    pub laplacian: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoordinateDerivatives {
    /// `B × N × 3`, flat.
    pub grad: Vec<f64>,
    /// One entry per walker.
    pub laplacian: Vec<f64>,
}

/// Exact gradient and Laplacian of `log|Ψ|` at one configuration. `walker` is
/// only used to label errors.
pub fn walker_derivatives<W: Wavefunction>(
    wf: &W,
    coords: &[f64],
    walker: usize,
) -> Result<WalkerDerivatives, DerivativeError> {
    let mut seeded: Vec<Jet> = coords.iter().map(|&x| Jet::constant(x)).collect();
    let mut grad = Vec::with_capacity(coords.len());
    let mut laplacian = 0.0;
    let mut log_psi = LogPsi::zero();
    for c in 0..coords.len() {
        seeded[c].d = 1.0;
        let out = wf.eval(&seeded);
        seeded[c].d = 0.0;
        if out.sign == 0.0 || !out.log_abs.v.is_finite() {
            return Err(DerivativeError::Node { walker });
        }
        log_psi = LogPsi {
            sign: out.sign,
            log_abs: out.log_abs.v,
        };
        grad.push(out.log_abs.d);
        laplacian += out.log_abs.dd;
    }
    if coords.is_empty() {
        log_psi = wf.log_psi(coords);
    }
    if !laplacian.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(DerivativeError::NonFinite { walker });
    }
    Ok(WalkerDerivatives {
        log_psi,
        grad,
        laplacian,
    })
}

/// Exact derivatives for every walker of the batch.
pub fn coordinate_derivatives<W: Wavefunction>(
    wf: &W,
    walkers: &WalkerBatch,
) -> Result<CoordinateDerivatives, DerivativeError> {
    let per: Vec<_> = walkers
        .as_flat()
        .par_chunks(3 * walkers.n_electrons())
        .enumerate()
        .map(|(b, x)| walker_derivatives(wf, x, b))
        .collect();
    collect(per)
}

fn collect(per: Vec<Result<WalkerDerivatives, DerivativeError>>) -> Result<CoordinateDerivatives, DerivativeError> {
    let mut grad = Vec::new();
    let mut laplacian = Vec::with_capacity(per.len());
    for d in per {
        let d = d?;
        grad.extend(d.grad);
        laplacian.push(d.laplacian);
    }
    Ok(CoordinateDerivatives { grad, laplacian })
}

/// Central differences of `log|Ψ|` evaluated in the scalar type `S`.
///
/// Returns `(gradient, laplacian)`. Using an extended-precision `S` removes
/// the roundoff that otherwise dominates the second difference at small
/// steps.
pub fn fd_walker_derivatives<S: Scalar, W: Wavefunction>(wf: &W, coords: &[f64], step: f64) -> (Vec<f64>, f64) {
    assert!(step > 0.0, "finite-difference step must be positive");
    let base: Vec<S> = coords.iter().map(|&x| S::from_f64(x)).collect();
    let h = S::from_f64(step);
    let l0 = wf.eval(&base).log_abs;
    let mut grad = Vec::with_capacity(coords.len());
    let mut lap = S::zero();
    let mut x = base.clone();
    for c in 0..coords.len() {
        x[c] = base[c] + h;
        let lp = wf.eval(&x).log_abs;
        x[c] = base[c] - h;
        let lm = wf.eval(&x).log_abs;
        x[c] = base[c];
        grad.push(((lp - lm) / (h + h)).value());
        lap += (lp - l0 - l0 + lm) / (h * h);
    }
    (grad, lap.value())
}

/// Finite-difference oracle in plain `f64`.
pub fn fd_coordinate_derivatives<W: Wavefunction>(wf: &W, walkers: &WalkerBatch, step: f64) -> CoordinateDerivatives {
    let mut grad = Vec::with_capacity(walkers.as_flat().len());
    let mut laplacian = Vec::with_capacity(walkers.n_walkers());
    for x in walkers.iter() {
        let (g, l) = fd_walker_derivatives::<f64, W>(wf, x, step);
        grad.extend(g);
        laplacian.push(l);
    }
    CoordinateDerivatives { grad, laplacian }
}
