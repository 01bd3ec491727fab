//! Permutation-equivariant neural wavefunction.
//!
//! One-electron and two-electron streams are updated layer by layer; the
//! one-electron stream is fed spin-group means of both streams so that every
//! update is equivariant under exchange of same-spin electrons. The final
//! one-electron features are projected to orbitals, multiplied by anisotropic
//! exponential envelopes, and combined into a weighted sum of products of
//! spin-up and spin-down determinants. Everything is evaluated in the log
//! domain.
//!
//! Parameters live in one flat buffer described by a [`ParamLayout`]; the
//! gradient of `log|Ψ|` uses the same layout.

mod backward;
pub mod checkpoint;
mod forward;

pub use backward::{log_psi_gradient, parameter_gradient};
pub use forward::Trace;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{softplus, softplus_inverse, FeatureKind, FeatureParams};
use crate::linalg::SignedLog;
use crate::scalar::Scalar;
use crate::system::Molecule;
use crate::wavefunction::Wavefunction;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("hyperparameter {0} must be at least 1")]
    ZeroCount(&'static str),
    #[error("parameters were built for n_up={n_up}, n_down={n_down}, {n_nuclei} nuclei; molecule has n_up={mol_up}, n_down={mol_down}, {mol_nuclei} nuclei")]
    Mismatch {
        n_up: usize,
        n_down: usize,
        n_nuclei: usize,
        mol_up: usize,
        mol_down: usize,
        mol_nuclei: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkHyperparams {
    pub n_layers: usize,
    pub width_one: usize,
    pub width_two: usize,
    pub n_det: usize,
    pub feature_kind: FeatureKind,
}

impl Default for NetworkHyperparams {
    fn default() -> Self {
        NetworkHyperparams {
            n_layers: 4,
            width_one: 256,
            width_two: 32,
            n_det: 16,
            feature_kind: FeatureKind::Slater,
        }
    }
}

impl NetworkHyperparams {
    pub fn validate(&self) -> Result<(), NetworkError> {
        for (name, v) in [
            ("n_layers", self.n_layers),
            ("width_one", self.width_one),
            ("width_two", self.width_two),
            ("n_det", self.n_det),
        ] {
            if v == 0 {
                return Err(NetworkError::ZeroCount(name));
            }
        }
        Ok(())
    }
}

/// Offsets of a dense layer `y = W x + b` with `W` stored row-major
/// `[out][in]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Dense {
    pub weight: usize,
    pub bias: usize,
    pub n_out: usize,
    pub n_in: usize,
}

/// Offsets of the orbital projection and envelope blocks of one spin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct SpinBlocks {
    /// `[det][orbital][width_one]`
    pub proj_w: usize,
    /// `[det][orbital]`
    pub proj_b: usize,
    /// `[det][orbital][nucleus]`
    pub env_pi: usize,
    /// `[det][orbital][nucleus][3][3]`
    pub env_sigma: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl BlockInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Shape of the parameter buffer for a given system size and
/// hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamLayout {
    pub hp: NetworkHyperparams,
    pub n_up: usize,
    pub n_down: usize,
    pub n_nuclei: usize,
    pub(crate) one: Vec<Dense>,
    pub(crate) two: Vec<Dense>,
    pub(crate) spins: [Option<SpinBlocks>; 2],
    pub(crate) det_weights: usize,
    pub(crate) beta_raw: usize,
    pub(crate) gamma_raw: usize,
    blocks: Vec<BlockInfo>,
    total: usize,
}

struct LayoutBuilder {
    blocks: Vec<BlockInfo>,
    total: usize,
}

impl LayoutBuilder {
    fn push(&mut self, name: String, shape: Vec<usize>) -> usize {
        let offset = self.total;
        self.total += shape.iter().product::<usize>();
        self.blocks.push(BlockInfo {
            name,
            shape,
            offset,
        });
        offset
    }

    fn dense(&mut self, prefix: &str, n_out: usize, n_in: usize) -> Dense {
        let weight = self.push(format!("{prefix}.weight"), vec![n_out, n_in]);
        let bias = self.push(format!("{prefix}.bias"), vec![n_out]);
        Dense {
            weight,
            bias,
            n_out,
            n_in,
        }
    }
}

impl ParamLayout {
    pub fn new(hp: NetworkHyperparams, n_up: usize, n_down: usize, n_nuclei: usize) -> Self {
        let groups = usize::from(n_up > 0) + usize::from(n_down > 0);
        let mut b = LayoutBuilder {
            blocks: Vec::new(),
            total: 0,
        };
        let mut one = Vec::with_capacity(hp.n_layers);
        let mut two = Vec::with_capacity(hp.n_layers.saturating_sub(1));
        for l in 0..hp.n_layers {
            let (d1, d2) = Self::stream_widths(&hp, n_nuclei, l);
            one.push(b.dense(&format!("one.{l}"), hp.width_one, d1 * (1 + groups) + d2 * groups));
            // the last two-electron update would never be read
            if l + 1 < hp.n_layers {
                two.push(b.dense(&format!("two.{l}"), hp.width_two, d2));
            }
        }
        let mut spins = [None, None];
        for (s, n_s) in [n_up, n_down].into_iter().enumerate() {
            if n_s == 0 {
                continue;
            }
            let tag = ["up", "down"][s];
            let k = hp.n_det;
            let proj_w = b.push(format!("orbital.{tag}.weight"), vec![k, n_s, hp.width_one]);
            let proj_b = b.push(format!("orbital.{tag}.bias"), vec![k, n_s]);
            let env_pi = b.push(format!("envelope.{tag}.pi"), vec![k, n_s, n_nuclei]);
            let env_sigma = b.push(format!("envelope.{tag}.sigma"), vec![k, n_s, n_nuclei, 3, 3]);
            spins[s] = Some(SpinBlocks {
                proj_w,
                proj_b,
                env_pi,
                env_sigma,
            });
        }
        let det_weights = b.push("det_weights".into(), vec![hp.n_det]);
        let beta_raw = b.push("features.beta_raw".into(), vec![n_nuclei]);
        let gamma_raw = b.push("features.gamma_raw".into(), vec![3]);
        ParamLayout {
            hp,
            n_up,
            n_down,
            n_nuclei,
            one,
            two,
            spins,
            det_weights,
            beta_raw,
            gamma_raw,
            blocks: b.blocks,
            total: b.total,
        }
    }

    /// Widths of the one- and two-electron stream features entering layer `l`.
    pub(crate) fn stream_widths(hp: &NetworkHyperparams, n_nuclei: usize, l: usize) -> (usize, usize) {
        if l == 0 {
            (4 * n_nuclei, 4)
        } else {
            (hp.width_one, hp.width_two)
        }
    }

    pub fn n_params(&self) -> usize {
        self.total
    }

    pub fn blocks(&self) -> &[BlockInfo] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&BlockInfo> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn n_electrons(&self) -> usize {
        self.n_up + self.n_down
    }

    /// `(first electron, count)` of each non-empty spin group, with its spin.
    pub(crate) fn groups(&self) -> impl Iterator<Item = (usize, usize, usize)> {
        [(0, 0, self.n_up), (1, self.n_up, self.n_down)]
            .into_iter()
            .filter(|g| g.2 > 0)
    }
}

/// All trainable quantities of the wavefunction, plus the seed they were
/// initialized from.
#[derive(Clone, Debug, PartialEq)]
pub struct WavefunctionParams {
    pub seed: u64,
    layout: ParamLayout,
    data: Vec<f64>,
}

impl WavefunctionParams {
    /// Random initialization: Gaussian weights with variance `1/fan_in`, zero
    /// biases, unit isotropic envelopes, uniform determinant weights, nuclear
    /// exponents equal to the charges and unit pair exponents.
    pub fn init(mol: &Molecule, hp: NetworkHyperparams, seed: u64) -> Result<Self, NetworkError> {
        hp.validate()?;
        let layout = ParamLayout::new(hp, mol.n_up, mol.n_down, mol.n_nuclei());
        let mut data = vec![0.0; layout.n_params()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gaussian = |out: &mut [f64], fan_in: usize| {
            let std = 1.0 / (fan_in as f64).sqrt();
            for x in out {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x = std * z;
            }
        };
        for d in layout.one.iter().chain(&layout.two) {
            gaussian(&mut data[d.weight..d.weight + d.n_out * d.n_in], d.n_in);
        }
        for (s, blocks) in layout.spins.iter().enumerate() {
            let Some(sb) = blocks else { continue };
            let n_s = if s == 0 { mol.n_up } else { mol.n_down };
            let n_orb = hp.n_det * n_s;
            gaussian(
                &mut data[sb.proj_w..sb.proj_w + n_orb * hp.width_one],
                hp.width_one,
            );
            let m = mol.n_nuclei();
            data[sb.env_pi..sb.env_pi + n_orb * m].fill(1.0);
            for e in 0..n_orb * m {
                let a = &mut data[sb.env_sigma + 9 * e..sb.env_sigma + 9 * e + 9];
                a.copy_from_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
            }
        }
        data[layout.det_weights..layout.det_weights + hp.n_det].fill(1.0 / hp.n_det as f64);
        for (a, n) in mol.nuclei.iter().enumerate() {
            data[layout.beta_raw + a] = softplus_inverse(f64::from(n.charge));
        }
        data[layout.gamma_raw..layout.gamma_raw + 3].fill(softplus_inverse(1.0));
        Ok(WavefunctionParams { seed, layout, data })
    }

    /// Wraps an existing buffer; panics on a length mismatch.
    pub fn from_parts(layout: ParamLayout, data: Vec<f64>, seed: u64) -> Self {
        assert_eq!(layout.n_params(), data.len(), "parameter buffer length");
        WavefunctionParams { seed, layout, data }
    }

    pub fn zeros_like(&self) -> Self {
        WavefunctionParams {
            seed: self.seed,
            layout: self.layout.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn hyperparams(&self) -> &NetworkHyperparams {
        &self.layout.hp
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        let b = self.layout.block(name)?;
        Some(&self.data[b.offset..b.offset + b.len()])
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let b = self.layout.block(name)?.clone();
        Some(&mut self.data[b.offset..b.offset + b.len()])
    }

    pub fn det_weights(&self) -> &[f64] {
        let o = self.layout.det_weights;
        &self.data[o..o + self.layout.hp.n_det]
    }

    pub fn det_weights_mut(&mut self) -> &mut [f64] {
        let o = self.layout.det_weights;
        let k = self.layout.hp.n_det;
        &mut self.data[o..o + k]
    }

    /// Positive exponents obtained from the stored unconstrained values.
    pub fn feature_params(&self) -> FeatureParams {
        let l = &self.layout;
        FeatureParams {
            beta: self.data[l.beta_raw..l.beta_raw + l.n_nuclei]
                .iter()
                .map(|&x| softplus(x))
                .collect(),
            gamma: [0, 1, 2].map(|c| softplus(self.data[l.gamma_raw + c])),
        }
    }

    /// Overwrites the exponents (stored through the inverse softplus).
    pub fn set_feature_params(&mut self, fp: &FeatureParams) {
        let l = self.layout.clone();
        for (a, &b) in fp.beta.iter().enumerate().take(l.n_nuclei) {
            self.data[l.beta_raw + a] = softplus_inverse(b);
        }
        for c in 0..3 {
            self.data[l.gamma_raw + c] = softplus_inverse(fp.gamma[c]);
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &WavefunctionParams) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn dot(&self, other: &WavefunctionParams) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn check_molecule(&self, mol: &Molecule) -> Result<(), NetworkError> {
        let l = &self.layout;
        if l.n_up != mol.n_up || l.n_down != mol.n_down || l.n_nuclei != mol.n_nuclei() {
            return Err(NetworkError::Mismatch {
                n_up: l.n_up,
                n_down: l.n_down,
                n_nuclei: l.n_nuclei,
                mol_up: mol.n_up,
                mol_down: mol.n_down,
                mol_nuclei: mol.n_nuclei(),
            });
        }
        Ok(())
    }
}

/// Convenience: initialize parameters from a molecule.
pub fn init_params(
    mol: &Molecule,
    hp: NetworkHyperparams,
    seed: u64,
) -> Result<WavefunctionParams, NetworkError> {
    WavefunctionParams::init(mol, hp, seed)
}

/// The network bound to a molecule, usable wherever a [`Wavefunction`] is.
#[derive(Clone, Debug)]
pub struct FermiNet<'a> {
    pub(crate) params: &'a WavefunctionParams,
    pub(crate) nuclei: Vec<[f64; 3]>,
    pub(crate) features: FeatureParams,
}

impl<'a> FermiNet<'a> {
    pub fn new(mol: &Molecule, params: &'a WavefunctionParams) -> Result<Self, NetworkError> {
        params.check_molecule(mol)?;
        Ok(FermiNet {
            params,
            nuclei: mol.positions(),
            features: params.feature_params(),
        })
    }

    pub fn params(&self) -> &WavefunctionParams {
        self.params
    }

    /// Full forward pass with every intermediate kept.
    pub fn trace<T: Scalar>(&self, coords: &[T]) -> Trace<T> {
        forward::forward(self, coords)
    }

    /// One-electron stream features after each layer, `N × width` each
    /// (entry 0 is the input layer).
    pub fn one_stream(&self, coords: &[f64]) -> Vec<Vec<f64>> {
        self.trace(coords).h1
    }

    /// Orbital matrices `[det][orbital][electron]` for the given spin.
    pub fn orbitals(&self, coords: &[f64], spin: usize) -> Option<Vec<f64>> {
        let t = self.trace(coords);
        t.orbitals.into_iter().find(|o| o.spin == spin).map(|o| o.phi)
    }

    /// `envelope(r)` for determinant `k`, orbital `i` of `spin`.
    pub fn envelope(&self, r: [f64; 3], spin: usize, k: usize, i: usize) -> f64 {
        let l = &self.params.layout;
        let sb = l.spins[spin].expect("spin group present");
        let n_s = if spin == 0 { l.n_up } else { l.n_down };
        forward::envelope_value(self.params.as_slice(), &sb, &self.nuclei, n_s, k, i, r)
    }
}

impl Wavefunction for FermiNet<'_> {
    fn n_electrons(&self) -> usize {
        self.params.layout.n_electrons()
    }

    fn eval<T: Scalar>(&self, coords: &[T]) -> SignedLog<T> {
        forward::forward(self, coords).out
    }

    fn singular_centres(&self) -> &[[f64; 3]] {
        &self.nuclei
    }
}
