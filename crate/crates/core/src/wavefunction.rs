//! The evaluable-wavefunction abstraction shared by the sampler, the
//! derivative engine and the Hamiltonian, plus closed-form wavefunctions used
//! as references.

use crate::linalg::SignedLog;
use crate::scalar::Scalar;

/// Sign and natural log of `|Ψ|` at one configuration.
pub type LogPsi = SignedLog<f64>;

/// A real wavefunction of `N` electrons evaluable in any [`Scalar`].
///
/// Coordinates are passed flat as `[x_0, y_0, z_0, x_1, ...]`.
pub trait Wavefunction: Sync {
    fn n_electrons(&self) -> usize;

    fn eval<T: Scalar>(&self, coords: &[T]) -> SignedLog<T>;

    fn log_psi(&self, coords: &[f64]) -> LogPsi {
        self.eval::<f64>(coords)
    }

    /// Fixed points where the potential is singular (nuclear positions).
    fn singular_centres(&self) -> &[[f64; 3]] {
        &[]
    }
}

impl<W: Wavefunction> Wavefunction for &W {
    fn n_electrons(&self) -> usize {
        (**self).n_electrons()
    }
    fn eval<T: Scalar>(&self, coords: &[T]) -> SignedLog<T> {
        (**self).eval(coords)
    }
    fn singular_centres(&self) -> &[[f64; 3]] {
        (**self).singular_centres()
    }
}

fn dist_to<T: Scalar>(r: &[T], c: &[f64; 3]) -> T {
    let dx = r[0] - T::from_f64(c[0]);
    let dy = r[1] - T::from_f64(c[1]);
    let dz = r[2] - T::from_f64(c[2]);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Product of 1s Slater orbitals, `log|Ψ| = -ζ Σ_i |r_i - c|`. With one
/// electron and `ζ = 1` this is the exact hydrogen ground state.
#[derive(Clone, Debug)]
pub struct Hydrogenic {
    pub n_electrons: usize,
    pub zeta: f64,
    centre: [[f64; 3]; 1],
}

impl Hydrogenic {
    pub fn new(n_electrons: usize, zeta: f64, centre: [f64; 3]) -> Self {
        Hydrogenic {
            n_electrons,
            zeta,
            centre: [centre],
        }
    }

    /// Hydrogen atom ground state at the origin.
    pub fn hydrogen() -> Self {
        Self::new(1, 1.0, [0.0; 3])
    }
}

impl Wavefunction for Hydrogenic {
    fn n_electrons(&self) -> usize {
        self.n_electrons
    }
    fn eval<T: Scalar>(&self, coords: &[T]) -> SignedLog<T> {
        let mut s = T::zero();
        for r in coords.chunks_exact(3) {
            s += dist_to(r, &self.centre[0]);
        }
        SignedLog {
            sign: 1.0,
            log_abs: s.scale(-self.zeta),
        }
    }
    fn singular_centres(&self) -> &[[f64; 3]] {
        &self.centre
    }
}

/// `log|Ψ| = -α Σ_i |r_i - c|²`.
#[derive(Clone, Debug)]
pub struct Gaussian {
    pub n_electrons: usize,
    pub alpha: f64,
    centre: [[f64; 3]; 1],
}

impl Gaussian {
    pub fn new(n_electrons: usize, alpha: f64, centre: [f64; 3]) -> Self {
        Gaussian {
            n_electrons,
            alpha,
            centre: [centre],
        }
    }
}

impl Wavefunction for Gaussian {
    fn n_electrons(&self) -> usize {
        self.n_electrons
    }
    fn eval<T: Scalar>(&self, coords: &[T]) -> SignedLog<T> {
        let mut s = T::zero();
        for r in coords.chunks_exact(3) {
            for c in 0..3 {
                let d = r[c] - T::from_f64(self.centre[0][c]);
                s += d * d;
            }
        }
        SignedLog {
            sign: 1.0,
            log_abs: s.scale(-self.alpha),
        }
    }
    fn singular_centres(&self) -> &[[f64; 3]] {
        &self.centre
    }
}

/// `log|Ψ| = c`.
#[derive(Clone, Debug)]
pub struct Constant {
    pub n_electrons: usize,
    pub log_value: f64,
}

impl Wavefunction for Constant {
    fn n_electrons(&self) -> usize {
        self.n_electrons
    }
    fn eval<T: Scalar>(&self, _coords: &[T]) -> SignedLog<T> {
        SignedLog {
            sign: 1.0,
            log_abs: T::from_f64(self.log_value),
        }
    }
}

/// `log|Ψ| = a · x` over all `3N` coordinates.
#[derive(Clone, Debug)]
pub struct LinearLog {
    pub slope: Vec<f64>,
}

impl Wavefunction for LinearLog {
    fn n_electrons(&self) -> usize {
        self.slope.len() / 3
    }
    fn eval<T: Scalar>(&self, coords: &[T]) -> SignedLog<T> {
        let mut s = T::zero();
        for (&x, &a) in coords.iter().zip(&self.slope) {
            s += x.scale(a);
        }
        SignedLog {
            sign: 1.0,
            log_abs: s,
        }
    }
}
