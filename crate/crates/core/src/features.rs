//! Input features for the one- and two-electron streams.
//!
//! Each electron sees, per nucleus, the displacement `r_i - R_a` and a
//! distance feature; each electron pair sees `r_i - r_j` and a distance
//! feature. The distance feature is either the plain distance (linear) or the
//! bounded Slater exponential `(1 - exp(-b d)) / b`, which agrees with the
//! plain distance to first order at coalescence and saturates at `1/b`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{Jet, Scalar};
use crate::system::{Molecule, WalkerBatch};

/// Spin channels of an electron pair.
pub const UP_UP: usize = 0;
pub const DOWN_DOWN: usize = 1;
pub const UP_DOWN: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Linear,
    #[default]
    Slater,
}

impl std::str::FromStr for FeatureKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(FeatureKind::Linear),
            "slater" => Ok(FeatureKind::Slater),
            other => Err(format!("unknown feature kind {other:?} (expected linear|slater)")),
        }
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureKind::Linear => "linear",
            FeatureKind::Slater => "slater",
        })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("Slater exponent {name} = {value} must be positive and finite")]
    NonPositive { name: String, value: f64 },
    #[error("expected {expected} nuclear exponents, got {got}")]
    Shape { expected: usize, got: usize },
}

/// Exponents of the Slater distance features: one per nucleus, one per pair
/// spin channel (`UP_UP`, `DOWN_DOWN`, `UP_DOWN`).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureParams {
    pub beta: Vec<f64>,
    pub gamma: [f64; 3],
}

impl FeatureParams {
    pub fn new(beta: Vec<f64>, gamma: [f64; 3]) -> Result<Self, FeatureError> {
        for (a, &b) in beta.iter().enumerate() {
            check_positive(&format!("beta[{a}]"), b)?;
        }
        for (c, &g) in gamma.iter().enumerate() {
            check_positive(&format!("gamma[{c}]"), g)?;
        }
        Ok(FeatureParams { beta, gamma })
    }

    /// Nuclear exponents equal to the nuclear charges, unit pair exponents.
    pub fn for_molecule(mol: &Molecule) -> Self {
        FeatureParams {
            beta: mol.nuclei.iter().map(|n| f64::from(n.charge)).collect(),
            gamma: [1.0; 3],
        }
    }
}

fn check_positive(name: &str, value: f64) -> Result<(), FeatureError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(FeatureError::NonPositive {
            name: name.to_string(),
            value,
        })
    }
}

/// Smooth positive map used to store exponents unconstrained.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] on `(0, inf)`.
pub fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// Derivative of [`softplus`].
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `(1 - exp(-b d)) / b`.
#[inline]
pub fn slater<T: Scalar>(d: T, b: f64) -> T {
    -(d.scale(-b).exp_m1()).scale(1.0 / b)
}

/// Partial derivative of [`slater`] with respect to the exponent.
pub fn slater_d_exponent(d: f64, b: f64) -> f64 {
    let e = (-b * d).exp();
    (b * d * e + (-b * d).exp_m1()) / (b * b)
}

/// Channel of the pair `(i, j)` given `n_up`.
pub fn pair_channel(i: usize, j: usize, n_up: usize) -> usize {
    match (i < n_up, j < n_up) {
        (true, true) => UP_UP,
        (false, false) => DOWN_DOWN,
        _ => UP_DOWN,
    }
}

/// Feature tensors for one walker. `one` is `N × 4M`, `two` is `N × N × 4`;
/// the distances are kept for exponent gradients.
#[derive(Clone, Debug)]
pub struct WalkerFeatures<T> {
    pub one: Vec<T>,
    pub two: Vec<T>,
    pub dist_en: Vec<T>,
    pub dist_ee: Vec<T>,
}

/// Distance transform applied to the raw distances.
#[derive(Clone, Copy, Debug)]
pub enum DistanceMap<'a> {
    Linear,
    Slater(&'a FeatureParams),
}

#[inline]
fn norm3<T: Scalar>(v: [T; 3]) -> T {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn walker_features<T: Scalar>(
    coords: &[T],
    nuclei: &[[f64; 3]],
    n_up: usize,
    map: DistanceMap<'_>,
) -> WalkerFeatures<T> {
    let n = coords.len() / 3;
    let m = nuclei.len();
    let mut one = Vec::with_capacity(n * 4 * m);
    let mut dist_en = Vec::with_capacity(n * m);
    for i in 0..n {
        let r = &coords[3 * i..3 * i + 3];
        for (a, nuc) in nuclei.iter().enumerate() {
            let diff = [
                r[0] - T::from_f64(nuc[0]),
                r[1] - T::from_f64(nuc[1]),
                r[2] - T::from_f64(nuc[2]),
            ];
            let d = norm3(diff);
            dist_en.push(d);
            let f = match map {
                DistanceMap::Linear => d,
                DistanceMap::Slater(fp) => slater(d, fp.beta[a]),
            };
            one.extend_from_slice(&diff);
            one.push(f);
        }
    }
    let mut two = Vec::with_capacity(n * n * 4);
    let mut dist_ee = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                two.extend_from_slice(&[T::zero(); 4]);
                dist_ee.push(T::zero());
                continue;
            }
            let diff = [
                coords[3 * i] - coords[3 * j],
                coords[3 * i + 1] - coords[3 * j + 1],
                coords[3 * i + 2] - coords[3 * j + 2],
            ];
            let d = norm3(diff);
            dist_ee.push(d);
            let f = match map {
                DistanceMap::Linear => d,
                DistanceMap::Slater(fp) => slater(d, fp.gamma[pair_channel(i, j, n_up)]),
            };
            two.extend_from_slice(&diff);
            two.push(f);
        }
    }
    WalkerFeatures {
        one,
        two,
        dist_en,
        dist_ee,
    }
}

/// Batched feature arrays: `one_electron` is `B × N × 4M`, `two_electron`
/// is `B × N × N × 4` with a zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensors {
    pub n_walkers: usize,
    pub n_electrons: usize,
    pub n_nuclei: usize,
    pub one_electron: Vec<f64>,
    pub two_electron: Vec<f64>,
}

impl FeatureTensors {
    pub fn one_row(&self, b: usize, i: usize) -> &[f64] {
        let w = 4 * self.n_nuclei;
        let start = (b * self.n_electrons + i) * w;
        &self.one_electron[start..start + w]
    }

    pub fn pair(&self, b: usize, i: usize, j: usize) -> &[f64] {
        let n = self.n_electrons;
        let start = ((b * n + i) * n + j) * 4;
        &self.two_electron[start..start + 4]
    }
}

fn batch_features(walkers: &WalkerBatch, mol: &Molecule, map: DistanceMap<'_>) -> FeatureTensors {
    let nuclei = mol.positions();
    let mut one_electron = Vec::new();
    let mut two_electron = Vec::new();
    for w in walkers.iter() {
        let f = walker_features(w, &nuclei, mol.n_up, map);
        one_electron.extend(f.one);
        two_electron.extend(f.two);
    }
    FeatureTensors {
        n_walkers: walkers.n_walkers(),
        n_electrons: walkers.n_electrons(),
        n_nuclei: nuclei.len(),
        one_electron,
        two_electron,
    }
}

pub fn linear_features(walkers: &WalkerBatch, mol: &Molecule) -> FeatureTensors {
    batch_features(walkers, mol, DistanceMap::Linear)
}

pub fn slater_features(
    walkers: &WalkerBatch,
    mol: &Molecule,
    fp: &FeatureParams,
) -> Result<FeatureTensors, FeatureError> {
    let fp = FeatureParams::new(fp.beta.clone(), fp.gamma)?;
    if fp.beta.len() != mol.n_nuclei() {
        return Err(FeatureError::Shape {
            expected: mol.n_nuclei(),
            got: fp.beta.len(),
        });
    }
    Ok(batch_features(walkers, mol, DistanceMap::Slater(&fp)))
}

/// Which kind of distance a cusp slope is requested for.
#[derive(Clone, Copy, Debug)]
pub enum DistanceKind {
    /// Nucleus index.
    ElectronNuclear(usize),
    /// Pair spin channel.
    ElectronElectron(usize),
}

/// `d f / d r` at `r = 0` for the Slater feature selected by `kind`.
pub fn feature_cusp_slope(fp: &FeatureParams, kind: DistanceKind) -> f64 {
    let exponent = match kind {
        DistanceKind::ElectronNuclear(a) => fp.beta[a],
        DistanceKind::ElectronElectron(c) => fp.gamma[c],
    };
    slater(Jet::variable(0.0), exponent).d
}
