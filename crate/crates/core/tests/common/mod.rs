#![allow(dead_code)]

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vqmc::features::FeatureKind;
use vqmc::network::{NetworkHyperparams, WavefunctionParams};
use vqmc::scalar::Scalar;
use vqmc::system::{Molecule, Nucleus};

/// Double-double number: the unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
///
/// About 106 bits of significand, enough that second differences at
/// `h = 1e-5` carry no visible roundoff.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.3190468138462996e-17,
};

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const fn new(hi: f64) -> Self {
        Dd { hi, lo: 0.0 }
    }

    fn norm(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Dd { hi, lo }
    }

    /// Exact multiplication by a power of two.
    fn ldexp(self, k: i32) -> Self {
        let f = 2f64.powi(k);
        Dd {
            hi: self.hi * f,
            lo: self.lo * f,
        }
    }

    /// `exp(x) - 1` for `|x| <= ln2 / 2`.
    fn expm1_reduced(self) -> Self {
        let r = self.ldexp(-10);
        let mut term = r;
        let mut s = r;
        for n in 2..12 {
            term = term * r / Dd::new(n as f64);
            s += term;
        }
        for _ in 0..10 {
            s = s.scale(2.0) + s * s;
        }
        s
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Dd::norm(s, e + f)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        Dd::norm(p, e + self.hi * o.lo + self.lo * o.hi)
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::new(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::new(q2);
        let q3 = r.hi / o.hi;
        Dd::norm(q1, q2) + Dd::new(q3)
    }
}

impl AddAssign for Dd {
    fn add_assign(&mut self, o: Dd) {
        *self = *self + o;
    }
}

impl SubAssign for Dd {
    fn sub_assign(&mut self, o: Dd) {
        *self = *self - o;
    }
}

impl Scalar for Dd {
    fn from_f64(v: f64) -> Self {
        Dd::new(v)
    }

    fn value(&self) -> f64 {
        self.hi + self.lo
    }

    fn scale(self, k: f64) -> Self {
        self * Dd::new(k)
    }

    fn exp(self) -> Self {
        if self.hi < -745.0 {
            return Dd::new(0.0);
        }
        let k = (self.hi / LN2.hi).round();
        let r = self - LN2 * Dd::new(k);
        (r.expm1_reduced() + Dd::new(1.0)).ldexp(k as i32)
    }

    fn exp_m1(self) -> Self {
        if self.hi.abs() < 0.34 {
            self.expm1_reduced()
        } else {
            self.exp() - Dd::new(1.0)
        }
    }

    fn ln(self) -> Self {
        let mut y = Dd::new(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - Dd::new(1.0);
        }
        y
    }

    fn sqrt(self) -> Self {
        if self.hi == 0.0 {
            return Dd::new(0.0);
        }
        let mut y = Dd::new(self.hi.sqrt());
        for _ in 0..2 {
            y = y + (self - y * y) / y.scale(2.0);
        }
        y
    }

    fn tanh(self) -> Self {
        let a = Dd::new(self.hi.abs()) + Dd::new(self.lo * self.hi.signum());
        let t = if a.hi < 1.0 {
            let e = a.scale(2.0).exp_m1();
            e / (e + Dd::new(2.0))
        } else if a.hi > 40.0 {
            Dd::new(1.0)
        } else {
            Dd::new(1.0) - Dd::new(2.0) / (a.scale(2.0).exp() + Dd::new(1.0))
        };
        if self.hi < 0.0 {
            -t
        } else {
            t
        }
    }
}

pub fn nucleus(symbol: &str, charge: u32, position: [f64; 3]) -> Nucleus {
    Nucleus {
        symbol: symbol.into(),
        charge,
        position,
    }
}

pub fn hydrogen_atom() -> Molecule {
    Molecule::new("H", vec![nucleus("H", 1, [0.0; 3])], 1, 0).unwrap()
}

pub fn h2() -> Molecule {
    Molecule::new(
        "H2",
        vec![nucleus("H", 1, [0.0; 3]), nucleus("H", 1, [0.0, 0.0, 1.4])],
        1,
        1,
    )
    .unwrap()
}

/// Four electrons (three up) around two nuclei: exercises both spin groups,
/// multi-row determinants and every pair channel.
pub fn four_electron() -> Molecule {
    Molecule::new(
        "LiH",
        vec![nucleus("Li", 3, [0.0; 3]), nucleus("H", 1, [0.0, 0.0, 3.015])],
        3,
        1,
    )
    .unwrap()
}

pub fn small_hp(kind: FeatureKind) -> NetworkHyperparams {
    NetworkHyperparams {
        n_layers: 2,
        width_one: 8,
        width_two: 4,
        n_det: 2,
        feature_kind: kind,
    }
}

/// Initialised parameters with every entry perturbed, so that no block sits at
/// a special value (zero biases, unit exponents, equal determinant weights).
pub fn random_params(mol: &Molecule, hp: NetworkHyperparams, seed: u64) -> WavefunctionParams {
    let mut p = WavefunctionParams::init(mol, hp, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for x in p.as_mut_slice() {
        *x += 0.1 * rng.random_range(-1.0..1.0);
    }
    p
}

/// Electron coordinates near the nuclei, away from coalescence.
pub fn random_coords(mol: &Molecule, rng: &mut impl Rng) -> Vec<f64> {
    let centres = mol.positions();
    loop {
        let mut x = Vec::with_capacity(3 * mol.n_electrons());
        for i in 0..mol.n_electrons() {
            let c = centres[i % centres.len()];
            for d in 0..3 {
                x.push(c[d] + rng.random_range(-1.5..1.5));
            }
        }
        if min_separation(mol, &x) > 0.05 {
            return x;
        }
    }
}

pub fn min_separation(mol: &Molecule, x: &[f64]) -> f64 {
    let dist = |a: &[f64], b: &[f64]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    let n = x.len() / 3;
    let mut m = f64::INFINITY;
    for i in 0..n {
        for c in mol.positions() {
            m = m.min(dist(&x[3 * i..3 * i + 3], &c));
        }
        for j in 0..i {
            m = m.min(dist(&x[3 * i..3 * i + 3], &x[3 * j..3 * j + 3]));
        }
    }
    m
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Prints the criterion line the acceptance target reports.
pub fn report(id: &str, name: &str, pass: bool, detail: &str) {
    println!("{} {id} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}
