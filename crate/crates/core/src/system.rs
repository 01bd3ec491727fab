//! Molecular systems, configuration files and walker initialization.
//!
//! All lengths are stored in bohr. Electrons are spin-assigned by index: the
//! first `n_up` electrons of every walker are spin-up, the rest spin-down.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bohr radius in angstrom (CODATA 2018).
pub const BOHR_IN_ANGSTROM: f64 = 0.529177210903;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("malformed molecule config: {0}")]
    Config(String),
    #[error("nucleus {index} has non-positive charge {charge}")]
    NonPositiveCharge { index: usize, charge: i64 },
    #[error("nucleus {index} has a non-finite position")]
    NonFinitePosition { index: usize },
    #[error("unknown length unit {0:?} (expected \"bohr\" or \"angstrom\")")]
    UnknownUnits(String),
    #[error("invalid electron counts n_up={n_up}, n_down={n_down}: need n_up >= n_down and at least one electron")]
    ElectronCounts { n_up: usize, n_down: usize },
    #[error("molecule has no nuclei")]
    NoNuclei,
    #[error("nuclei {0} and {1} coincide")]
    CoincidentNuclei(usize, usize),
    #[error("batch size must be at least 1")]
    EmptyBatch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nucleus {
    pub symbol: String,
    pub charge: u32,
    pub position: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Molecule {
    pub name: String,
    pub nuclei: Vec<Nucleus>,
    pub n_up: usize,
    pub n_down: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNucleus {
    #[serde(default)]
    symbol: String,
    charge: i64,
    position: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawMolecule {
    #[serde(default)]
    name: String,
    #[serde(default = "default_units")]
    units: String,
    n_up: usize,
    n_down: usize,
    nuclei: Vec<RawNucleus>,
}

fn default_units() -> String {
    "bohr".to_string()
}

#[derive(Debug, Deserialize)]
struct MoleculeFile {
    molecule: RawMolecule,
}

#[derive(Serialize)]
struct MoleculeOut<'a> {
    name: &'a str,
    units: &'static str,
    n_up: usize,
    n_down: usize,
    nuclei: &'a [Nucleus],
}

#[derive(Serialize)]
struct MoleculeFileOut<'a> {
    molecule: MoleculeOut<'a>,
}

impl RawMolecule {
    pub(crate) fn into_molecule(self) -> Result<Molecule, SystemError> {
        let scale = match self.units.as_str() {
            "bohr" => 1.0,
            "angstrom" => 1.0 / BOHR_IN_ANGSTROM,
            other => return Err(SystemError::UnknownUnits(other.to_string())),
        };
        let mut nuclei = Vec::with_capacity(self.nuclei.len());
        for (index, raw) in self.nuclei.into_iter().enumerate() {
            if raw.charge < 1 {
                return Err(SystemError::NonPositiveCharge {
                    index,
                    charge: raw.charge,
                });
            }
            if raw.position.iter().any(|c| !c.is_finite()) {
                return Err(SystemError::NonFinitePosition { index });
            }
            let charge = u32::try_from(raw.charge).map_err(|_| SystemError::NonPositiveCharge {
                index,
                charge: raw.charge,
            })?;
            nuclei.push(Nucleus {
                symbol: raw.symbol,
                charge,
                position: raw.position.map(|c| c * scale),
            });
        }
        Molecule::new(self.name, nuclei, self.n_up, self.n_down)
    }
}

impl Molecule {
    pub fn new(
        name: impl Into<String>,
        nuclei: Vec<Nucleus>,
        n_up: usize,
        n_down: usize,
    ) -> Result<Self, SystemError> {
        if nuclei.is_empty() {
            return Err(SystemError::NoNuclei);
        }
        for (index, n) in nuclei.iter().enumerate() {
            if n.charge == 0 {
                return Err(SystemError::NonPositiveCharge { index, charge: 0 });
            }
            if n.position.iter().any(|c| !c.is_finite()) {
                return Err(SystemError::NonFinitePosition { index });
            }
        }
        if n_up + n_down == 0 || n_up < n_down {
            return Err(SystemError::ElectronCounts { n_up, n_down });
        }
        Ok(Molecule {
            name: name.into(),
            nuclei,
            n_up,
            n_down,
        })
    }

    /// Parses the `[molecule]` table of a TOML config.
    pub fn from_toml(text: &str) -> Result<Self, SystemError> {
        let file: MoleculeFile =
            toml::from_str(text).map_err(|e| SystemError::Config(e.message().to_string()))?;
        file.molecule.into_molecule()
    }

    /// Serializes to the config format, always in bohr.
    pub fn to_toml(&self) -> String {
        let out = MoleculeFileOut {
            molecule: MoleculeOut {
                name: &self.name,
                units: "bohr",
                n_up: self.n_up,
                n_down: self.n_down,
                nuclei: &self.nuclei,
            },
        };
        toml::to_string(&out).expect("molecule serializes")
    }

    pub fn n_electrons(&self) -> usize {
        self.n_up + self.n_down
    }

    pub fn n_nuclei(&self) -> usize {
        self.nuclei.len()
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.nuclei.iter().map(|n| n.position).collect()
    }

    /// Constant nucleus-nucleus Coulomb energy, hartree.
    pub fn nuclear_repulsion(&self) -> Result<f64, SystemError> {
        let mut e = 0.0;
        for (a, na) in self.nuclei.iter().enumerate() {
            for (b, nb) in self.nuclei.iter().enumerate().skip(a + 1) {
                let r = distance(&na.position, &nb.position);
                if r == 0.0 {
                    return Err(SystemError::CoincidentNuclei(a, b));
                }
                e += f64::from(na.charge) * f64::from(nb.charge) / r;
            }
        }
        Ok(e)
    }

    /// Index of the spin channel electron `i` belongs to (0 = up, 1 = down).
    pub fn spin_of(&self, i: usize) -> usize {
        usize::from(i >= self.n_up)
    }

    /// Nucleus each electron is initially placed around: round-robin over the
    /// nuclei, each nucleus taking at most `charge` electrons per pass.
    pub fn initial_assignment(&self) -> Vec<usize> {
        let n = self.n_electrons();
        let mut out = Vec::with_capacity(n);
        let mut taken = vec![0u32; self.nuclei.len()];
        while out.len() < n {
            let mut placed = false;
            for (a, nuc) in self.nuclei.iter().enumerate() {
                if out.len() == n {
                    break;
                }
                if taken[a] < nuc.charge {
                    taken[a] += 1;
                    out.push(a);
                    placed = true;
                }
            }
            if !placed {
                // more electrons than total charge (anion): start a new pass
                taken.iter_mut().for_each(|t| *t = 0);
            }
        }
        out
    }
}

pub(crate) fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// A batch of electron configurations, stored walker-major as `B × N × 3`.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkerBatch {
    n_electrons: usize,
    positions: Vec<f64>,
}

impl WalkerBatch {
    /// Wraps a flat `B × N × 3` coordinate array.
    ///
    /// Panics if the length is not a positive multiple of `3 * n_electrons`.
    pub fn from_flat(n_electrons: usize, positions: Vec<f64>) -> Self {
        assert!(n_electrons > 0, "walkers need at least one electron");
        assert!(
            !positions.is_empty() && positions.len() % (3 * n_electrons) == 0,
            "coordinate array length {} is not a positive multiple of 3*{}",
            positions.len(),
            n_electrons
        );
        WalkerBatch {
            n_electrons,
            positions,
        }
    }

    pub fn n_walkers(&self) -> usize {
        self.positions.len() / (3 * self.n_electrons)
    }

    pub fn n_electrons(&self) -> usize {
        self.n_electrons
    }

    pub fn walker(&self, b: usize) -> &[f64] {
        let w = 3 * self.n_electrons;
        &self.positions[b * w..(b + 1) * w]
    }

    pub fn walker_mut(&mut self, b: usize) -> &mut [f64] {
        let w = 3 * self.n_electrons;
        &mut self.positions[b * w..(b + 1) * w]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.positions.chunks_exact(3 * self.n_electrons)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.positions
    }

    pub(crate) fn chunks_mut(&mut self) -> std::slice::ChunksExactMut<'_, f64> {
        self.positions.chunks_exact_mut(3 * self.n_electrons)
    }

    pub(crate) fn par_chunks_mut(&mut self) -> rayon::slice::ChunksExactMut<'_, f64> {
        use rayon::slice::ParallelSliceMut;
        self.positions.par_chunks_exact_mut(3 * self.n_electrons)
    }

    /// Swaps electrons `i` and `j` in every walker.
    pub fn swap_electrons(&mut self, i: usize, j: usize) {
        for w in self.chunks_mut() {
            for c in 0..3 {
                w.swap(3 * i + c, 3 * j + c);
            }
        }
    }
}

/// Places each electron at its assigned nucleus plus unit-variance Gaussian
/// noise per axis.
pub fn init_walkers(mol: &Molecule, batch_size: usize, seed: u64) -> Result<WalkerBatch, SystemError> {
    if batch_size == 0 {
        return Err(SystemError::EmptyBatch);
    }
    let assignment = mol.initial_assignment();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = mol.n_electrons();
    let mut positions = Vec::with_capacity(batch_size * n * 3);
    for _ in 0..batch_size {
        for &a in &assignment {
            let centre = mol.nuclei[a].position;
            for c in centre {
                let z: f64 = StandardNormal.sample(&mut rng);
                positions.push(c + z);
            }
        }
    }
    Ok(WalkerBatch::from_flat(n, positions))
}
