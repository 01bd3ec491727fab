//! Coulomb potential and local energy `E_L = (HΨ)/Ψ`.

use rayon::prelude::*;
use thiserror::Error;

use crate::derivatives::{walker_derivatives, DerivativeError};
use crate::system::{Molecule, SystemError, WalkerBatch};
use crate::wavefunction::Wavefunction;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EnergyError {
    #[error("walker {walker}: zero distance between particles")]
    Coalescence { walker: usize },
    #[error(transparent)]
    Derivative(#[from] DerivativeError),
    #[error("{0}")]
    System(String),
}

impl From<SystemError> for EnergyError {
    fn from(e: SystemError) -> Self {
        EnergyError::System(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalEnergySample {
    pub kinetic: f64,
    pub potential: f64,
    pub total: f64,
}

/// Electron-nuclear attraction plus electron-electron repulsion for one walker,
/// without the nuclear repulsion constant.
fn electronic_potential(coords: &[f64], mol: &Molecule, walker: usize) -> Result<f64, EnergyError> {
    let n = coords.len() / 3;
    let mut v = 0.0;
    for i in 0..n {
        let r = &coords[3 * i..3 * i + 3];
        for nuc in &mol.nuclei {
            let d = dist(r, &nuc.position);
            if d == 0.0 {
                return Err(EnergyError::Coalescence { walker });
            }
            v -= f64::from(nuc.charge) / d;
        }
        for j in 0..i {
            let d = dist(r, &coords[3 * j..3 * j + 3]);
            if d == 0.0 {
                return Err(EnergyError::Coalescence { walker });
            }
            v += 1.0 / d;
        }
    }
    Ok(v)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Total potential energy of every walker, including nuclear repulsion.
pub fn potential(walkers: &WalkerBatch, mol: &Molecule) -> Result<Vec<Result<f64, EnergyError>>, EnergyError> {
    let vnn = mol.nuclear_repulsion()?;
    Ok(walkers
        .iter()
        .enumerate()
        .map(|(b, x)| electronic_potential(x, mol, b).map(|v| v + vnn))
        .collect())
}

/// `E_L` for one walker given the nuclear repulsion constant.
pub fn walker_local_energy<W: Wavefunction>(
    wf: &W,
    coords: &[f64],
    mol: &Molecule,
    vnn: f64,
    walker: usize,
) -> Result<LocalEnergySample, EnergyError> {
    let potential = electronic_potential(coords, mol, walker)? + vnn;
    let d = walker_derivatives(wf, coords, walker)?;
    let grad_sq: f64 = d.grad.iter().map(|g| g * g).sum();
    let kinetic = -0.5 * (grad_sq + d.laplacian);
    Ok(LocalEnergySample {
        kinetic,
        potential,
        total: kinetic + potential,
    })
}

/// `E_L = -½ Σ_i (|∇_i log|Ψ||² + ∇²_i log|Ψ|) + V` per walker.
pub fn local_energy<W: Wavefunction>(
    wf: &W,
    walkers: &WalkerBatch,
    mol: &Molecule,
) -> Result<Vec<Result<LocalEnergySample, EnergyError>>, EnergyError> {
    let vnn = mol.nuclear_repulsion()?;
    let stride = 3 * walkers.n_electrons();
    Ok(walkers
        .as_flat()
        .par_chunks(stride)
        .enumerate()
        .map(|(b, x)| walker_local_energy(wf, x, mol, vnn, b))
        .collect())
}
