//! Metropolis random walk over `|Ψ|²` with all-electron Gaussian moves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::system::WalkerBatch;
use crate::wavefunction::Wavefunction;

pub const MIN_STEP: f64 = 1e-3;
pub const MAX_STEP: f64 = 10.0;
/// Step-size multiplier sensitivity to the acceptance mismatch.
pub const ADAPT_RATE: f64 = 0.1;
/// Burn-in steps between step-size adaptations.
pub const ADAPT_EVERY: usize = 20;
/// Weight of the previous value in the acceptance moving average.
pub const EMA_DECAY: f64 = 0.9;
/// Proposals closer than this to a nucleus or another electron are rejected.
pub const SINGULAR_RADIUS: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SamplerState {
    pub walkers: WalkerBatch,
    /// `log|Ψ|` of every walker, kept consistent with `walkers`.
    pub log_psi: Vec<f64>,
    pub step_size: f64,
    pub acceptance_ema: f64,
    pub target_acceptance: f64,
    rngs: Vec<ChaCha8Rng>,
}

impl SamplerState {
    /// Walker `b` draws from stream `b` of a ChaCha8 generator keyed by `seed`.
    pub fn new<W: Wavefunction>(wf: &W, walkers: WalkerBatch, seed: u64, step_size: f64) -> Self {
        assert!(step_size > 0.0, "step size must be positive");
        let rngs = (0..walkers.n_walkers())
            .map(|b| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(b as u64);
                r
            })
            .collect();
        let mut s = SamplerState {
            log_psi: Vec::new(),
            walkers,
            step_size,
            acceptance_ema: 0.5,
            target_acceptance: 0.5,
            rngs,
        };
        s.refresh(wf);
        s
    }

    /// Recomputes the `log|Ψ|` cache, e.g. after a parameter update.
    pub fn refresh<W: Wavefunction>(&mut self, wf: &W) {
        self.log_psi = self
            .walkers
            .as_flat()
            .par_chunks(3 * self.walkers.n_electrons())
            .map(|x| wf.log_psi(x).log_abs)
            .collect();
    }
}

fn too_close(r: &[f64], centres: &[[f64; 3]], others: &[f64]) -> bool {
    let d2 = |a: &[f64], b: &[f64]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2);
    let lim = SINGULAR_RADIUS * SINGULAR_RADIUS;
    centres.iter().any(|c| d2(r, c) < lim) || others.chunks_exact(3).any(|o| d2(r, o) < lim)
}

/// One Metropolis step for every walker. Returns the fraction accepted.
pub fn mcmc_step<W: Wavefunction>(wf: &W, state: &mut SamplerState) -> f64 {
    let stride = 3 * state.walkers.n_electrons();
    let step = state.step_size;
    let centres = wf.singular_centres();
    let accepted: usize = state
        .walkers
        .par_chunks_mut()
        .zip(state.log_psi.par_iter_mut())
        .zip(state.rngs.par_iter_mut())
        .map(|((x, lp), rng)| {
            let mut proposal = Vec::with_capacity(stride);
            for &xi in x.iter() {
                let z: f64 = rng.sample(StandardNormal);
                proposal.push(xi + step * z);
            }
            let u: f64 = rng.random();
            let singular = proposal
                .chunks_exact(3)
                .enumerate()
                .any(|(i, r)| too_close(r, centres, &proposal[..3 * i]));
            if singular {
                return 0;
            }
            let new = wf.log_psi(&proposal).log_abs;
            if u < (2.0 * (new - *lp)).exp() {
                x.copy_from_slice(&proposal);
                *lp = new;
                1
            } else {
                0
            }
        })
        .sum();
    let rate = accepted as f64 / state.walkers.n_walkers() as f64;
    state.acceptance_ema = EMA_DECAY * state.acceptance_ema + (1.0 - EMA_DECAY) * rate;
    rate
}

/// `step ← step · exp(κ (ema − target))`, clamped to `[MIN_STEP, MAX_STEP]`.
pub fn adapt_step(state: &mut SamplerState, target_acceptance: f64) {
    assert!(
        target_acceptance > 0.0 && target_acceptance < 1.0,
        "target acceptance must lie in (0, 1)"
    );
    let factor = (ADAPT_RATE * (state.acceptance_ema - target_acceptance)).exp();
    state.step_size = (state.step_size * factor).clamp(MIN_STEP, MAX_STEP);
}

/// Runs `n_steps` steps, adapting the step size every [`ADAPT_EVERY`] steps
/// towards `state.target_acceptance`. The step size is not touched again
/// afterwards by the sampler.
pub fn burn_in<W: Wavefunction>(wf: &W, state: &mut SamplerState, n_steps: usize) {
    state.refresh(wf);
    for s in 1..=n_steps {
        mcmc_step(wf, state);
        if s % ADAPT_EVERY == 0 {
            let target = state.target_acceptance;
            adapt_step(state, target);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SignedLog;
    use crate::scalar::Scalar;
    use crate::system::{init_walkers, Molecule, Nucleus};
    use crate::wavefunction::{Constant, Gaussian, Hydrogenic};

    fn h_atom() -> Molecule {
        let nuc = Nucleus {
            symbol: "H".into(),
            charge: 1,
            position: [0.0; 3],
        };
        Molecule::new("H", vec![nuc], 1, 0).unwrap()
    }

    fn mean_radius(w: &WalkerBatch) -> f64 {
        w.iter().map(|r| (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt()).sum::<f64>() / w.n_walkers() as f64
    }

    #[test]
    fn constant_wavefunction_accepts_everything() {
        let wf = Constant {
            n_electrons: 1,
            log_value: 0.0,
        };
        let mut s = SamplerState::new(&wf, init_walkers(&h_atom(), 50, 0).unwrap(), 1, 0.3);
        for _ in 0..5 {
            assert_eq!(mcmc_step(&wf, &mut s), 1.0);
        }
    }

    #[test]
    fn nodes_are_never_entered() {
        struct HalfSpace;
        impl Wavefunction for HalfSpace {
            fn n_electrons(&self) -> usize {
                1
            }
            fn eval<T: Scalar>(&self, x: &[T]) -> SignedLog<T> {
                if x[0].value() > 0.0 {
                    SignedLog::one()
                } else {
                    SignedLog::zero()
                }
            }
        }
        let w = WalkerBatch::from_flat(1, [1.0, 0.0, 0.0].repeat(20));
        let mut s = SamplerState::new(&HalfSpace, w, 2, 1.0);
        for _ in 0..50 {
            mcmc_step(&HalfSpace, &mut s);
            assert!(s.walkers.iter().all(|r| r[0] > 0.0));
        }
    }

    #[test]
    fn adaptation_rule() {
        let wf = Constant {
            n_electrons: 1,
            log_value: 0.0,
        };
        let mut s = SamplerState::new(&wf, init_walkers(&h_atom(), 2, 0).unwrap(), 1, 0.5);
        s.acceptance_ema = 0.5;
        adapt_step(&mut s, 0.5);
        assert_eq!(s.step_size, 0.5);
        s.acceptance_ema = 0.9;
        adapt_step(&mut s, 0.5);
        assert!((s.step_size - 0.5 * 0.04f64.exp()).abs() < 1e-15);
        s.step_size = 10.0;
        adapt_step(&mut s, 0.5);
        assert_eq!(s.step_size, 10.0);
    }

    #[test]
    fn chains_are_seed_deterministic() {
        let wf = Hydrogenic::hydrogen();
        let run = |seed| {
            let mut s = SamplerState::new(&wf, init_walkers(&h_atom(), 16, 3).unwrap(), seed, 0.5);
            burn_in(&wf, &mut s, 60);
            (s.walkers.as_flat().to_vec(), s.step_size)
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4).0, run(5).0);
    }

    #[test]
    fn zero_burn_in_only_refreshes() {
        let wf = Hydrogenic::hydrogen();
        let mut s = SamplerState::new(&wf, init_walkers(&h_atom(), 4, 3).unwrap(), 0, 0.5);
        let before = s.walkers.clone();
        s.log_psi.fill(0.0);
        burn_in(&wf, &mut s, 0);
        assert_eq!(s.walkers, before);
        assert_eq!(s.log_psi[0], wf.log_psi(before.walker(0)).log_abs);
    }

    #[test]
    fn hydrogen_mean_radius() {
        let wf = Hydrogenic::hydrogen();
        let mut s = SamplerState::new(&wf, init_walkers(&h_atom(), 500, 1).unwrap(), 2, 0.5);
        burn_in(&wf, &mut s, 400);
        let mut acc = 0.0;
        let n = 400;
        for _ in 0..n {
            mcmc_step(&wf, &mut s);
            acc += mean_radius(&s.walkers);
        }
        let mean = acc / n as f64;
        assert!((mean - 1.5).abs() < 0.02 * 1.5, "<r> = {mean}");
    }

    #[test]
    fn gaussian_second_moment() {
        // |Ψ|² ∝ exp(-r²): variance 1/2 per axis
        let wf = Gaussian::new(1, 0.5, [0.0; 3]);
        let mut s = SamplerState::new(&wf, init_walkers(&h_atom(), 500, 1).unwrap(), 9, 1.0);
        burn_in(&wf, &mut s, 200);
        let mut m2 = 0.0;
        let n = 200;
        for _ in 0..n {
            mcmc_step(&wf, &mut s);
            m2 += s.walkers.as_flat().iter().map(|x| x * x).sum::<f64>();
        }
        let m2 = m2 / (n * 500 * 3) as f64;
        assert!((m2 - 0.5).abs() < 0.005, "{m2}");
    }
}
