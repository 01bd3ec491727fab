//! Stochastic energy minimization, learning curves and their statistics.

use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hamiltonian::{local_energy, EnergyError};
use crate::network::checkpoint::{self, CheckpointError};
use crate::network::{parameter_gradient, FermiNet, NetworkError, NetworkHyperparams, WavefunctionParams};
use crate::optim::{learning_rate, Adam, AdamConfig};
use crate::sampler::{burn_in, mcmc_step, SamplerState};
use crate::system::{init_walkers, Molecule, WalkerBatch};

/// Largest tolerated fraction of walkers with an unusable local energy.
pub const MAX_INVALID_FRACTION: f64 = 0.1;
/// Abort when the batch energy exceeds the first one by this much (hartree).
pub const DIVERGENCE_MARGIN: f64 = 10.0;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("{0}")]
    System(String),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("step {step}: {invalid} of {total} walkers have a non-finite local energy")]
    InvalidEnergies { step: usize, invalid: usize, total: usize },
    #[error("step {step}: energy {energy} Ha exceeds the initial {initial} Ha by more than {DIVERGENCE_MARGIN} Ha")]
    Diverged { step: usize, energy: f64, initial: f64 },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("learning curve i/o: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<crate::system::SystemError> for TrainError {
    fn from(e: crate::system::SystemError) -> Self {
        TrainError::System(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// `lr_t = learning_rate / (1 + t / lr_decay_steps)`.
    pub lr_decay_steps: f64,
    /// Half-width of the local-energy clipping window in units of the median
    /// absolute deviation.
    pub clip_width: f64,
    pub mcmc_steps_per_update: usize,
    pub burn_in_steps: usize,
    pub initial_step_size: f64,
    pub target_acceptance: f64,
    pub seed: u64,
    pub convergence_threshold: f64,
    pub convergence_window: usize,
    /// Stop as soon as convergence is detected instead of running all
    /// iterations.
    pub early_stop: bool,
    /// Iterations between checkpoints (0 disables periodic checkpoints).
    pub checkpoint_every: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_iterations: 10_000,
            batch_size: 256,
            learning_rate: 1e-3,
            lr_decay_steps: 1e4,
            clip_width: 5.0,
            mcmc_steps_per_update: 10,
            burn_in_steps: 200,
            initial_step_size: 0.5,
            target_acceptance: 0.5,
            seed: 0,
            convergence_threshold: 1e-4,
            convergence_window: 1000,
            early_stop: false,
            checkpoint_every: 1000,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.mcmc_steps_per_update == 0 {
            return bad("mcmc_steps_per_update must be at least 1");
        }
        if self.convergence_window < 2 {
            return bad("convergence_window must be at least 2");
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("lr_decay_steps", self.lr_decay_steps),
            ("clip_width", self.clip_width),
            ("initial_step_size", self.initial_step_size),
            ("convergence_threshold", self.convergence_threshold),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive and finite"));
            }
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return bad("target_acceptance must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningRecord {
    pub step: usize,
    #[serde(rename = "energy_ha")]
    pub energy: f64,
    #[serde(rename = "variance_ha2")]
    pub variance: f64,
    pub acceptance: f64,
    pub walltime_ms: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LearningCurve {
    pub records: Vec<LearningRecord>,
}

impl LearningCurve {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy).collect()
    }

    /// Curve whose energies are `values`, at steps `0, 1, ...`.
    pub fn from_energies(values: &[f64]) -> Self {
        LearningCurve {
            records: values
                .iter()
                .enumerate()
                .map(|(step, &energy)| LearningRecord {
                    step,
                    energy,
                    variance: 0.0,
                    acceptance: 0.0,
                    walltime_ms: 0,
                })
                .collect(),
        }
    }

    /// CSV with header `step,energy_ha,variance_ha2,acceptance,walltime_ms`.
    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<(), TrainError> {
        let mut wr = csv::Writer::from_writer(w);
        if self.records.is_empty() {
            wr.write_record(["step", "energy_ha", "variance_ha2", "acceptance", "walltime_ms"])?;
        }
        for r in &self.records {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(r: R) -> Result<Self, TrainError> {
        let mut rd = csv::Reader::from_reader(r);
        let records = rd.deserialize().collect::<Result<Vec<LearningRecord>, _>>()?;
        Ok(LearningCurve { records })
    }
}

/// Batch estimate of the energy and its gradient.
#[derive(Clone, Debug)]
pub struct EnergyGradient {
    /// Mean of the clipped local energies.
    pub energy: f64,
    /// Population variance of the clipped local energies.
    pub variance: f64,
    pub grad: WavefunctionParams,
    /// Walkers whose local energy was usable.
    pub n_valid: usize,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Clamps `values` to `median ± width · MAD`, MAD being the median absolute
/// deviation from the median.
pub fn clip_local_energies(values: &[f64], width: f64) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let med = median(&sorted(values));
    let dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    let mad = median(&sorted(&dev));
    values
        .iter()
        .map(|&v| v.clamp(med - width * mad, med + width * mad))
        .collect()
}

/// `Ē` and `(2/B) Σ_b (Ẽ_L(x_b) − Ē) ∂ log|Ψ(x_b)| / ∂θ` over the valid walkers.
///
/// Walkers whose local energy is non-finite or undefined are left out of
/// both; more than [`MAX_INVALID_FRACTION`] of them is an error.
pub fn energy_and_grad(
    net: &FermiNet<'_>,
    walkers: &WalkerBatch,
    mol: &Molecule,
    clip_width: f64,
) -> Result<EnergyGradient, TrainError> {
    let samples = local_energy(net, walkers, mol)?;
    let total = samples.len();
    let valid: Vec<Option<f64>> = samples
        .into_iter()
        .map(|s| s.ok().map(|s| s.total).filter(|e| e.is_finite()))
        .collect();
    let values: Vec<f64> = valid.iter().flatten().copied().collect();
    let invalid = total - values.len();
    if values.is_empty() || invalid as f64 > MAX_INVALID_FRACTION * total as f64 {
        return Err(TrainError::InvalidEnergies {
            step: 0,
            invalid,
            total,
        });
    }
    let clipped = clip_local_energies(&values, clip_width);
    let b = clipped.len() as f64;
    let energy = clipped.iter().sum::<f64>() / b;
    let variance = clipped.iter().map(|e| (e - energy).powi(2)).sum::<f64>() / b;

    let mut it = clipped.iter();
    let weights: Vec<f64> = valid
        .iter()
        .map(|v| match v {
            Some(_) => 2.0 / b * (it.next().expect("one clipped value per valid walker") - energy),
            None => 0.0,
        })
        .collect();
    let grad = parameter_gradient(net, walkers, &weights);
    Ok(EnergyGradient {
        energy,
        variance,
        grad,
        n_valid: values.len(),
    })
}

/// Mean of the last `window` energies and its standard error from blocking:
/// the largest standard error of block means over block sizes `1, 2, 4, ...`
/// that still leave at least 16 blocks.
pub fn curve_energy(curve: &LearningCurve, window: usize) -> Result<(f64, f64), TrainError> {
    if window == 0 || curve.is_empty() {
        return Err(TrainError::Config("empty averaging window".into()));
    }
    if window > curve.len() {
        return Err(TrainError::Config(format!(
            "averaging window {window} exceeds curve length {}",
            curve.len()
        )));
    }
    let tail: Vec<f64> = curve.records[curve.len() - window..].iter().map(|r| r.energy).collect();
    let mean = tail.iter().sum::<f64>() / window as f64;
    Ok((mean, blocking_stderr(&tail)))
}

pub(crate) fn blocking_stderr(x: &[f64]) -> f64 {
    let mut best = 0.0f64;
    let mut size = 1;
    loop {
        let n_blocks = x.len() / size;
        if n_blocks < 16 && size > 1 {
            break;
        }
        if n_blocks < 2 {
            break;
        }
        let means: Vec<f64> = x
            .chunks_exact(size)
            .take(n_blocks)
            .map(|c| c.iter().sum::<f64>() / size as f64)
            .collect();
        let m = means.iter().sum::<f64>() / n_blocks as f64;
        let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n_blocks - 1) as f64;
        best = best.max((var / n_blocks as f64).sqrt());
        size *= 2;
    }
    best
}

/// Index of the first record `t` at which the means of the windows
/// `[t+1-2w, t+1-w)` and `[t+1-w, t+1)` differ by less than `threshold`.
pub fn detect_convergence(curve: &LearningCurve, threshold: f64, window: usize) -> Option<usize> {
    assert!(window >= 2, "convergence window must be at least 2");
    let e = curve.energies();
    if e.len() < 2 * window {
        return None;
    }
    let mut prefix = Vec::with_capacity(e.len() + 1);
    prefix.push(0.0);
    for v in &e {
        prefix.push(prefix.last().unwrap() + v);
    }
    let w = window as f64;
    (2 * window - 1..e.len()).find(|&t| {
        let end = t + 1;
        let older = (prefix[end - window] - prefix[end - 2 * window]) / w;
        let newer = (prefix[end] - prefix[end - window]) / w;
        (older - newer).abs() < threshold
    })
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: WavefunctionParams,
    pub curve: LearningCurve,
    /// Curve index at which convergence was first detected.
    pub converged_at: Option<usize>,
}

/// A training run in progress.
pub struct Trainer {
    pub mol: Molecule,
    pub params: WavefunctionParams,
    pub config: TrainConfig,
    pub sampler: SamplerState,
    pub curve: LearningCurve,
    optimizer: Adam,
    initial_energy: Option<f64>,
    started: Instant,
    checkpoint: Option<PathBuf>,
}

impl Trainer {
    /// Draws walkers, and equilibrates them under the initial parameters.
    pub fn new(mol: &Molecule, params: WavefunctionParams, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        params.check_molecule(mol)?;
        let walkers = init_walkers(mol, config.batch_size, config.seed)?;
        let net = FermiNet::new(mol, &params)?;
        let mut sampler = SamplerState::new(&net, walkers, config.seed, config.initial_step_size);
        sampler.target_acceptance = config.target_acceptance;
        burn_in(&net, &mut sampler, config.burn_in_steps);
        let optimizer = Adam::new(params.len(), config.adam);
        Ok(Trainer {
            mol: mol.clone(),
            params,
            config,
            sampler,
            curve: LearningCurve::default(),
            optimizer,
            initial_energy: None,
            started: Instant::now(),
            checkpoint: None,
        })
    }

    /// Periodic checkpoints are written to `path`.
    pub fn with_checkpoint(mut self, path: impl Into<PathBuf>) -> Self {
        self.checkpoint = Some(path.into());
        self
    }

    pub fn checkpoint_path(&self) -> Option<&Path> {
        self.checkpoint.as_deref()
    }

    /// Sampling, one parameter update and one learning-curve record.
    pub fn step(&mut self) -> Result<LearningRecord, TrainError> {
        let t = self.curve.len();
        let net = FermiNet::new(&self.mol, &self.params)?;
        let mut acc = 0.0;
        for _ in 0..self.config.mcmc_steps_per_update {
            acc += mcmc_step(&net, &mut self.sampler);
        }
        let acceptance = acc / self.config.mcmc_steps_per_update as f64;
        let eg = match energy_and_grad(&net, &self.sampler.walkers, &self.mol, self.config.clip_width) {
            Err(TrainError::InvalidEnergies { invalid, total, .. }) => {
                return Err(TrainError::InvalidEnergies { step: t, invalid, total })
            }
            r => r?,
        };
        let initial = *self.initial_energy.get_or_insert(eg.energy);
        if !eg.energy.is_finite() || eg.energy > initial + DIVERGENCE_MARGIN {
            return Err(TrainError::Diverged {
                step: t,
                energy: eg.energy,
                initial,
            });
        }
        let lr = learning_rate(self.config.learning_rate, self.config.lr_decay_steps, t);
        self.optimizer
            .step(self.params.as_mut_slice(), eg.grad.as_slice(), lr);
        let net = FermiNet::new(&self.mol, &self.params)?;
        self.sampler.refresh(&net);

        let record = LearningRecord {
            step: t,
            energy: eg.energy,
            variance: eg.variance,
            acceptance,
            walltime_ms: self.started.elapsed().as_millis() as u64,
        };
        self.curve.records.push(record);
        if let Some(path) = &self.checkpoint {
            let every = self.config.checkpoint_every;
            if every > 0 && (t + 1) % every == 0 {
                checkpoint::save(&self.params, path)?;
            }
        }
        Ok(record)
    }

    /// Runs to `n_iterations`, or until convergence when `early_stop` is set,
    /// and returns the curve index where convergence was detected. A final
    /// checkpoint is written on success; on failure the last periodic one is
    /// left in place and the curve so far stays available.
    pub fn run(&mut self) -> Result<Option<usize>, TrainError> {
        self.run_with(|_| {})
    }

    /// [`Trainer::run`], calling `progress` after every update.
    pub fn run_with(&mut self, mut progress: impl FnMut(&LearningRecord)) -> Result<Option<usize>, TrainError> {
        let mut converged_at = None;
        while self.curve.len() < self.config.n_iterations {
            let record = self.step()?;
            progress(&record);
            if converged_at.is_none() {
                converged_at = self.newly_converged();
                if converged_at.is_some() && self.config.early_stop {
                    break;
                }
            }
        }
        if let Some(path) = &self.checkpoint {
            checkpoint::save(&self.params, path)?;
        }
        Ok(converged_at)
    }

    pub fn into_outcome(self, converged_at: Option<usize>) -> TrainOutcome {
        TrainOutcome {
            params: self.params,
            curve: self.curve,
            converged_at,
        }
    }

    /// Checks only the window pair ending at the latest record.
    fn newly_converged(&self) -> Option<usize> {
        let w = self.config.convergence_window;
        let n = self.curve.len();
        if n < 2 * w {
            return None;
        }
        let e = &self.curve.records[n - 2 * w..];
        let older = e[..w].iter().map(|r| r.energy).sum::<f64>() / w as f64;
        let newer = e[w..].iter().map(|r| r.energy).sum::<f64>() / w as f64;
        ((older - newer).abs() < self.config.convergence_threshold).then_some(n - 1)
    }
}

/// Initializes parameters from `config.seed` and trains.
pub fn train(mol: &Molecule, hp: NetworkHyperparams, config: TrainConfig) -> Result<TrainOutcome, TrainError> {
    let params = WavefunctionParams::init(mol, hp, config.seed)?;
    let mut trainer = Trainer::new(mol, params, config)?;
    let converged_at = trainer.run()?;
    Ok(trainer.into_outcome(converged_at))
}
