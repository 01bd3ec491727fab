//! Randomised invariants across modules.

mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{four_electron, h2, random_coords, random_params, small_hp, Dd};
use vqmc::analysis::{error_statistics, extrapolate, ExtrapolationPair, Reaction, ReactionTable};
use vqmc::derivatives::{fd_walker_derivatives, walker_derivatives};
use vqmc::features::{slater, walker_features, DistanceMap, FeatureKind, FeatureParams};
use vqmc::hamiltonian::{potential, walker_local_energy};
use vqmc::network::{checkpoint, FermiNet};
use vqmc::system::{Molecule, Nucleus, WalkerBatch};
use vqmc::trainer::clip_local_energies;
use vqmc::wavefunction::Wavefunction;

fn rotation(a: f64, b: f64, c: f64) -> [[f64; 3]; 3] {
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let (sc, cc) = c.sin_cos();
    [
        [ca * cb, ca * sb * sc - sa * cc, ca * sb * cc + sa * sc],
        [sa * cb, sa * sb * sc + ca * cc, sa * sb * cc - ca * sc],
        [-sb, cb * sc, cb * cc],
    ]
}

fn apply(r: &[[f64; 3]; 3], t: [f64; 3], p: &[f64]) -> [f64; 3] {
    let mut q = t;
    for i in 0..3 {
        for j in 0..3 {
            q[i] += r[i][j] * p[j];
        }
    }
    q
}

fn moved_molecule(mol: &Molecule, r: &[[f64; 3]; 3], t: [f64; 3]) -> Molecule {
    let nuclei = mol
        .nuclei
        .iter()
        .map(|n| Nucleus {
            position: apply(r, t, &n.position),
            ..n.clone()
        })
        .collect();
    Molecule::new(&mol.name, nuclei, mol.n_up, mol.n_down).unwrap()
}

fn swap_electrons(x: &[f64], i: usize, j: usize) -> Vec<f64> {
    let mut y = x.to_vec();
    for d in 0..3 {
        y.swap(3 * i + d, 3 * j + d);
    }
    y
}

fn angle() -> impl Strategy<Value = f64> {
    -3.2f64..3.2
}

fn offset() -> impl Strategy<Value = [f64; 3]> {
    [-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn potential_is_invariant_under_rigid_motion(seed in 0u64..1000, a in angle(), b in angle(), c in angle(), t in offset()) {
        let mol = four_electron();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_coords(&mol, &mut rng);
        let r = rotation(a, b, c);
        let moved = moved_molecule(&mol, &r, t);
        let y: Vec<f64> = x.chunks_exact(3).flat_map(|p| apply(&r, t, p)).collect();
        let v0 = potential(&WalkerBatch::from_flat(4, x), &mol).unwrap()[0].clone().unwrap();
        let v1 = potential(&WalkerBatch::from_flat(4, y), &moved).unwrap()[0].clone().unwrap();
        prop_assert!((v0 - v1).abs() < 1e-11 * v0.abs().max(1.0));
        let e0 = mol.nuclear_repulsion().unwrap();
        prop_assert!((e0 - moved.nuclear_repulsion().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn molecule_round_trips_through_toml(x in -10.0f64..10.0, z in 0.5f64..6.0, charge in 1u32..10) {
        let mol = Molecule::new(
            "AB",
            vec![common::nucleus("A", charge, [x, 0.0, 0.0]), common::nucleus("H", 1, [x, 0.0, z])],
            ((charge + 1) as usize).div_ceil(2),
            (charge + 1) as usize / 2,
        )
        .unwrap();
        prop_assert_eq!(Molecule::from_toml(&mol.to_toml()).unwrap(), mol);
    }

    #[test]
    fn slater_feature_bounds(r in 0.0f64..50.0, b in 0.01f64..20.0) {
        let f = slater(r, b);
        prop_assert!(f >= 0.0);
        prop_assert!(f <= r * (1.0 + 1e-15));
        prop_assert!(f <= (1.0 / b) * (1.0 + 1e-15));
        prop_assert!(r - f <= b * r * r / 2.0 * (1.0 + 1e-12) + 1e-15);
        // saturates to 1/b in f64 once e^{-br} drops below the ulp
        if b * r < 30.0 {
            prop_assert!(slater(r + 0.01, b) > f);
        } else {
            prop_assert!(slater(r + 0.01, b) >= f);
        }
    }

    #[test]
    fn features_permute_with_electrons(seed in 0u64..1000, i in 0usize..3, j in 0usize..3) {
        prop_assume!(i != j);
        let mol = four_electron();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_coords(&mol, &mut rng);
        let y = swap_electrons(&x, i, j);
        let fp = FeatureParams::new(vec![2.5, 0.7], [0.9, 1.3, 0.4]).unwrap();
        let nuc = mol.positions();
        for map in [DistanceMap::Linear, DistanceMap::Slater(&fp)] {
            let fx = walker_features(&x, &nuc, mol.n_up, map);
            let fy = walker_features(&y, &nuc, mol.n_up, map);
            let perm = |e: usize| if e == i { j } else if e == j { i } else { e };
            let w1 = fx.one.len() / 4;
            for e in 0..4 {
                prop_assert_eq!(&fx.one[perm(e) * w1..(perm(e) + 1) * w1], &fy.one[e * w1..(e + 1) * w1]);
                for k in 0..4 {
                    let a = &fx.two[(perm(e) * 4 + perm(k)) * 4..(perm(e) * 4 + perm(k) + 1) * 4];
                    let b = &fy.two[(e * 4 + k) * 4..(e * 4 + k + 1) * 4];
                    prop_assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn network_is_translation_invariant(seed in 0u64..500, t in offset()) {
        let mol = four_electron();
        let params = random_params(&mol, small_hp(FeatureKind::Slater), seed);
        let moved = moved_molecule(&mol, &rotation(0.0, 0.0, 0.0), t);
        let (a, b) = (FermiNet::new(&mol, &params).unwrap(), FermiNet::new(&moved, &params).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_coords(&mol, &mut rng);
        let y: Vec<f64> = x.chunks_exact(3).flat_map(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]]).collect();
        let (u, v) = (a.log_psi(&x), b.log_psi(&y));
        prop_assert_eq!(u.sign, v.sign);
        prop_assert!((u.log_abs - v.log_abs).abs() < 1e-9);
    }

    #[test]
    fn determinant_weight_scaling_shifts_log(seed in 0u64..500, c in prop_oneof![-8.0f64..-0.1, 0.1f64..8.0]) {
        let mol = h2();
        let params = random_params(&mol, small_hp(FeatureKind::Slater), seed);
        let mut scaled = params.clone();
        for w in scaled.det_weights_mut() {
            *w *= c;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_coords(&mol, &mut rng);
        let y = random_coords(&mol, &mut rng);
        let (a, b) = (FermiNet::new(&mol, &params).unwrap(), FermiNet::new(&mol, &scaled).unwrap());
        let (ax, bx) = (a.log_psi(&x), b.log_psi(&x));
        prop_assert_eq!(bx.sign, ax.sign * c.signum());
        prop_assert!((bx.log_abs - ax.log_abs - c.abs().ln()).abs() < 1e-12 * ax.log_abs.abs().max(1.0));
        // Metropolis ratios, and hence the sampled density, are unchanged
        let ratio_a = a.log_psi(&y).log_abs - ax.log_abs;
        let ratio_b = b.log_psi(&y).log_abs - bx.log_abs;
        prop_assert!((ratio_a - ratio_b).abs() < 1e-12 * ratio_a.abs().max(1.0));
        // and so is the local energy
        let ea = walker_local_energy(&a, &x, &mol, 1.0 / 1.4, 0).unwrap().total;
        let eb = walker_local_energy(&b, &x, &mol, 1.0 / 1.4, 0).unwrap().total;
        prop_assert!((ea - eb).abs() < 1e-10 * ea.abs().max(1.0));
    }

    #[test]
    fn local_energy_is_exchange_invariant(seed in 0u64..500, kind in prop_oneof![Just(FeatureKind::Linear), Just(FeatureKind::Slater)]) {
        let mol = four_electron();
        let params = random_params(&mol, small_hp(kind), seed);
        let net = FermiNet::new(&mol, &params).unwrap();
        let vnn = mol.nuclear_repulsion().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_coords(&mol, &mut rng);
        let y = swap_electrons(&x, 0, 2);
        let ex = walker_local_energy(&net, &x, &mol, vnn, 0).unwrap();
        let ey = walker_local_energy(&net, &y, &mol, vnn, 0).unwrap();
        prop_assert!((ex.total - ey.total).abs() < 1e-8 * ex.total.abs().max(1.0));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact(seed in 0u64..10_000) {
        let mol = four_electron();
        let params = random_params(&mol, small_hp(FeatureKind::Slater), seed);
        let back = checkpoint::from_bytes(&checkpoint::to_bytes(&params)).unwrap();
        prop_assert_eq!(back, params);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Open shell, three electrons of one spin, every pair channel.
    #[test]
    fn open_shell_derivatives_match_finite_differences(seed in 0u64..10_000, kind in prop_oneof![Just(FeatureKind::Linear), Just(FeatureKind::Slater)]) {
        let mol = four_electron();
        let params = random_params(&mol, small_hp(kind), seed);
        let net = FermiNet::new(&mol, &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_coords(&mol, &mut rng);
        let d = walker_derivatives(&net, &x, 0).unwrap();
        let (g, l) = fd_walker_derivatives::<Dd, _>(&net, &x, 1e-5);
        let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in d.grad.iter().zip(&g) {
            prop_assert!((a - b).abs() <= 1e-5 * scale, "grad {a} vs {b}");
        }
        prop_assert!((d.laplacian - l).abs() <= 1e-5 * l.abs().max(1.0), "laplacian {} vs {l}", d.laplacian);
        prop_assert_eq!(d.log_psi.log_abs, net.log_psi(&x).log_abs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn extrapolation_is_affine_equivariant(
        n1 in 1.0f64..1e5, growth in 1.001f64..50.0,
        i1 in -500.0f64..500.0, drop in -1.0f64..1.0,
        a in prop_oneof![-10.0f64..-0.01, 0.01f64..10.0], b in -100.0f64..100.0,
    ) {
        let p = ExtrapolationPair { n1, i1, n2: n1 * growth, i2: i1 - drop };
        let r = extrapolate(p).unwrap();
        let t = extrapolate(ExtrapolationPair { i1: a * p.i1 + b, i2: a * p.i2 + b, ..p }).unwrap();
        for (u, v) in [(t.i_left, r.i_left), (t.i_right, r.i_right), (t.i_exact, r.i_exact)] {
            let want = a * v + b;
            prop_assert!((u - want).abs() <= 1e-9 * (want.abs() + (a * drop).abs() * growth.sqrt() * 4.0).max(1.0), "{u} vs {want}");
        }
        prop_assert_eq!(r.monotonic, drop > 0.0);
    }

    #[test]
    fn extrapolation_orders_monotone_pairs(n1 in 1.0f64..1e5, growth in 1.001f64..50.0, i1 in -500.0f64..500.0, drop in 0.0f64..1.0) {
        let (i2, n2) = (i1 - drop, n1 * growth);
        let r = extrapolate(ExtrapolationPair { n1, i1, n2, i2 }).unwrap();
        prop_assert!(r.i_left <= i2 && i2 <= r.i_right && r.i_right <= i1);
        prop_assert!(r.i_left <= r.i_exact && r.i_exact <= r.i_right);
    }

    #[test]
    fn clipping_is_bounded_and_monotone(values in prop::collection::vec(-100.0f64..100.0, 1..64), width in 0.5f64..10.0) {
        let clipped = clip_local_energies(&values, width);
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        for (k, (&c, &v)) in clipped.iter().zip(&values).enumerate() {
            prop_assert!(c >= lo && c <= hi);
            prop_assert!((c - v).abs() <= (lo - hi).abs());
            for (&c2, &v2) in clipped.iter().zip(&values).skip(k + 1) {
                if v < v2 {
                    prop_assert!(c <= c2);
                }
            }
        }
        prop_assert_eq!(clip_local_energies(&clipped, width).len(), values.len());
    }

    #[test]
    fn error_statistics_symmetries(errors in prop::collection::vec(-20.0f64..20.0, 2..16), rot in 0usize..16) {
        let table = |errs: &[f64]| ReactionTable {
            species: Default::default(),
            reactions: errs
                .iter()
                .enumerate()
                .map(|(k, e)| Reaction {
                    name: format!("r{k}"),
                    stoichiometry: Default::default(),
                    computed: Some(100.0 + e),
                    reference: 100.0,
                })
                .collect(),
        };
        let base = error_statistics(&table(&errors)).unwrap();
        let mut permuted = errors.clone();
        permuted.rotate_left(rot % errors.len());
        permuted.reverse();
        let p = error_statistics(&table(&permuted)).unwrap();
        let negated: Vec<f64> = errors.iter().map(|e| -e).collect();
        let n = error_statistics(&table(&negated)).unwrap();
        for s in [p, n] {
            prop_assert!((s.delta_max_abs - base.delta_max_abs).abs() < 1e-12);
            prop_assert!((s.mean_abs - base.mean_abs).abs() < 1e-12);
            prop_assert!((s.std - base.std).abs() < 1e-9);
        }
    }
}

#[test]
fn extrapolation_approaches_the_second_estimate_in_the_limit() {
    let (n2, i2) = (1000.0, -2.5);
    let mut last = f64::INFINITY;
    for k in 1..8 {
        let eps = 10f64.powi(-k);
        let r = extrapolate(ExtrapolationPair {
            n1: n2 * (1.0 - eps),
            i1: i2 + eps * eps,
            n2,
            i2,
        })
        .unwrap();
        let dev = (r.i_exact - i2).abs();
        assert!(dev < last, "deviation {dev} did not shrink at eps = {eps}");
        assert!(dev <= 4.0 * eps);
        last = dev;
    }
}

#[test]
fn exchange_negates_every_spin_group() {
    let mol = four_electron();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..50 {
        let params = random_params(&mol, small_hp(FeatureKind::Slater), seed);
        let net = FermiNet::new(&mol, &params).unwrap();
        let x = random_coords(&mol, &mut rng);
        let base = net.log_psi(&x);
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let s = net.log_psi(&swap_electrons(&x, i, j));
            assert_eq!(s.sign, -base.sign);
            assert!((s.log_abs - base.log_abs).abs() <= 1e-12);
        }
    }
}

#[test]
fn streams_permute_at_every_layer_and_orbitals_ignore_other_electrons() {
    let mol = four_electron();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for seed in 0..50 {
        let kind = if seed % 2 == 0 { FeatureKind::Slater } else { FeatureKind::Linear };
        let params = random_params(&mol, small_hp(kind), seed);
        let net = FermiNet::new(&mol, &params).unwrap();
        let x = random_coords(&mol, &mut rng);
        let y = swap_electrons(&x, 1, 2);
        let perm = |e: usize| [0, 2, 1, 3][e];
        for (hx, hy) in net.one_stream(&x).iter().zip(net.one_stream(&y).iter()) {
            let w = hx.len() / 4;
            for e in 0..4 {
                for k in 0..w {
                    assert!((hx[perm(e) * w + k] - hy[e * w + k]).abs() <= 1e-13);
                }
            }
        }
        // column 0 of every up-spin orbital matrix belongs to electron 0
        let (ox, oy) = (net.orbitals(&x, 0).unwrap(), net.orbitals(&y, 0).unwrap());
        let n = mol.n_up;
        for m in (0..ox.len()).step_by(n) {
            assert!((ox[m] - oy[m]).abs() <= 1e-13 * ox[m].abs().max(1.0));
        }
    }
}
