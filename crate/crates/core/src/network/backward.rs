//! Reverse pass: gradient of `log|Ψ|` with respect to every parameter.

use rayon::prelude::*;

use crate::features::{pair_channel, sigmoid, slater_d_exponent, FeatureKind};
use crate::linalg::invert;
use crate::system::WalkerBatch;

use super::forward::Trace;
use super::{Dense, FermiNet, ParamLayout, WavefunctionParams};

/// Backpropagates one dense `tanh` stream layer. `upstream` is the adjoint of
/// the layer output; adds into `d_input` and the parameter gradient.
#[allow(clippy::too_many_arguments)]
fn stream_layer_backward(
    p: &[f64],
    d: &Dense,
    x: &[f64],
    t: &[f64],
    upstream: &[f64],
    rows: usize,
    residual: bool,
    weight: f64,
    grad: &mut [f64],
    d_input: &mut [f64],
) {
    let mut dz = vec![0.0; d.n_out];
    for r in 0..rows {
        let up = &upstream[r * d.n_out..(r + 1) * d.n_out];
        let mut any = false;
        for o in 0..d.n_out {
            let tv = t[r * d.n_out + o];
            dz[o] = up[o] * (1.0 - tv * tv);
            any |= dz[o] != 0.0;
        }
        let xr = &x[r * d.n_in..(r + 1) * d.n_in];
        let dx = &mut d_input[r * d.n_in..(r + 1) * d.n_in];
        if residual {
            for (a, &u) in dx.iter_mut().zip(up) {
                *a += u;
            }
        }
        if !any {
            continue;
        }
        for o in 0..d.n_out {
            let g = dz[o];
            if g == 0.0 {
                continue;
            }
            grad[d.bias + o] += weight * g;
            let wrow = &p[d.weight + o * d.n_in..d.weight + (o + 1) * d.n_in];
            let grow = &mut grad[d.weight + o * d.n_in..d.weight + (o + 1) * d.n_in];
            let wg = weight * g;
            for q in 0..d.n_in {
                grow[q] += wg * xr[q];
                dx[q] += g * wrow[q];
            }
        }
    }
}

/// Adds `weight · ∂ log|Ψ| / ∂θ` for the traced walker into `grad`.
pub(crate) fn accumulate(net: &FermiNet<'_>, trace: &Trace<f64>, weight: f64, grad: &mut [f64]) {
    if trace.out.is_zero() || weight == 0.0 {
        return;
    }
    let p = net.params.as_slice();
    let layout = &net.params.layout;
    let hp = &layout.hp;
    let n = layout.n_electrons();
    let m = layout.n_nuclei;
    let width = hp.width_one;
    let log_psi = trace.out.log_abs;

    // Ψ = Σ_k ω_k D_k↑ D_k↓
    let mut dh = vec![0.0; n * width];
    for k in 0..hp.n_det {
        let [up, down] = trace.dets[k];
        if up.is_zero() || down.is_zero() {
            continue;
        }
        let prod = up.sign * down.sign * trace.out.sign;
        grad[layout.det_weights + k] += weight * prod * (up.log_abs + down.log_abs - log_psi).exp();

        let term = trace.terms[k];
        if term.is_zero() {
            continue;
        }
        // ∂ log|Ψ| / ∂ log|term_k|
        let c = term.sign * trace.out.sign * (term.log_abs - log_psi).exp();

        for o in &trace.orbitals {
            let sb = layout.spins[o.spin].expect("spin blocks");
            let n_s = o.n;
            let nn = n_s * n_s;
            let phi = &o.phi[k * nn..(k + 1) * nn];
            let Some(inv) = invert(phi, n_s) else { continue };
            for i in 0..n_s {
                let orb = k * n_s + i;
                for j in 0..n_s {
                    // ∂ log|det Φ| / ∂Φ_ij = (Φ⁻¹)_ji
                    let dphi = c * inv[j * n_s + i];
                    let idx = orb * n_s + j;
                    let dpre = dphi * o.env[idx];
                    let denv = dphi * o.pre[idx];
                    let e = o.start + j;
                    let hj = &trace.h1[hp.n_layers][e * width..(e + 1) * width];
                    grad[sb.proj_b + orb] += weight * dpre;
                    let wrow = &p[sb.proj_w + orb * width..sb.proj_w + (orb + 1) * width];
                    let grow = &mut grad[sb.proj_w + orb * width..sb.proj_w + (orb + 1) * width];
                    let dhj = &mut dh[e * width..(e + 1) * width];
                    for q in 0..width {
                        grow[q] += weight * dpre * hj[q];
                        dhj[q] += dpre * wrow[q];
                    }
                    for a in 0..m {
                        let pidx = orb * m + a;
                        let nrm = o.env_norm[idx * m + a];
                        let decay = (-nrm).exp();
                        grad[sb.env_pi + pidx] += weight * denv * decay;
                        if nrm > 0.0 {
                            let dn = -denv * p[sb.env_pi + pidx] * decay / nrm;
                            let proj = &o.env_proj[(idx * m + a) * 3..(idx * m + a) * 3 + 3];
                            let diff = &trace.features.one[e * 4 * m + 4 * a..e * 4 * m + 4 * a + 3];
                            for row in 0..3 {
                                for col in 0..3 {
                                    grad[sb.env_sigma + 9 * pidx + 3 * row + col] +=
                                        weight * dn * proj[row] * diff[col];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    let groups: Vec<(usize, usize, usize)> = layout.groups().collect();
    let mut dh2: Vec<Vec<f64>> = trace.h2.iter().map(|h| vec![0.0; h.len()]).collect();
    let mut upstream = dh;
    for l in (0..hp.n_layers).rev() {
        let (d1, d2) = ParamLayout::stream_widths(hp, m, l);

        if l + 1 < hp.n_layers {
            let dense2 = &layout.two[l];
            let (lower, upper) = dh2.split_at_mut(l + 1);
            stream_layer_backward(
                p,
                dense2,
                &trace.h2[l],
                &trace.t2[l],
                &upper[0],
                n * n,
                d2 == dense2.n_out,
                weight,
                grad,
                &mut lower[l],
            );
        }

        let dense = &layout.one[l];
        let fdim = dense.n_in;
        let mut df = vec![0.0; n * fdim];
        stream_layer_backward(
            p,
            dense,
            &trace.f[l],
            &trace.t1[l],
            &upstream,
            n,
            false,
            weight,
            grad,
            &mut df,
        );
        let mut below = vec![0.0; n * d1];
        if d1 == dense.n_out {
            below.copy_from_slice(&upstream);
        }
        let g = groups.len();
        for i in 0..n {
            let row = &df[i * fdim..(i + 1) * fdim];
            for c in 0..d1 {
                below[i * d1 + c] += row[c];
            }
            for (gi, &(_, start, count)) in groups.iter().enumerate() {
                let block = &row[d1 * (1 + gi)..d1 * (2 + gi)];
                let inv = 1.0 / count as f64;
                for j in start..start + count {
                    for c in 0..d1 {
                        below[j * d1 + c] += block[c] * inv;
                    }
                }
            }
            for (gi, &(_, start, count)) in groups.iter().enumerate() {
                let off = d1 * (1 + g) + d2 * gi;
                let block = &row[off..off + d2];
                let inv = 1.0 / count as f64;
                for j in start..start + count {
                    let dst = &mut dh2[l][(i * n + j) * d2..(i * n + j + 1) * d2];
                    for c in 0..d2 {
                        dst[c] += block[c] * inv;
                    }
                }
            }
        }
        upstream = below;
    }

    if hp.feature_kind == FeatureKind::Slater {
        let fp = &net.features;
        for i in 0..n {
            for a in 0..m {
                let adj = upstream[i * 4 * m + 4 * a + 3];
                let d = trace.features.dist_en[i * m + a];
                let raw = p[layout.beta_raw + a];
                grad[layout.beta_raw + a] += weight * adj * slater_d_exponent(d, fp.beta[a]) * sigmoid(raw);
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let c = pair_channel(i, j, layout.n_up);
                let adj = dh2[0][(i * n + j) * 4 + 3];
                let d = trace.features.dist_ee[i * n + j];
                let raw = p[layout.gamma_raw + c];
                grad[layout.gamma_raw + c] += weight * adj * slater_d_exponent(d, fp.gamma[c]) * sigmoid(raw);
            }
        }
    }
}

/// `∂ log|Ψ(x)| / ∂θ` for a single configuration.
pub fn log_psi_gradient(net: &FermiNet<'_>, coords: &[f64]) -> WavefunctionParams {
    let mut g = net.params.zeros_like();
    let trace = net.trace(coords);
    accumulate(net, &trace, 1.0, g.as_mut_slice());
    g
}

const CHUNK: usize = 8;

/// `Σ_b weights[b] · ∂ log|Ψ(x_b)| / ∂θ`.
///
/// Walkers are processed in fixed-size chunks whose partial sums are added in
/// order, so the result does not depend on thread scheduling.
pub fn parameter_gradient(net: &FermiNet<'_>, walkers: &WalkerBatch, weights: &[f64]) -> WavefunctionParams {
    assert_eq!(weights.len(), walkers.n_walkers(), "one weight per walker");
    let coords: Vec<&[f64]> = walkers.iter().collect();
    let partials: Vec<Vec<f64>> = coords
        .par_chunks(CHUNK)
        .zip(weights.par_chunks(CHUNK))
        .map(|(cs, ws)| {
            let mut g = vec![0.0; net.params.len()];
            for (c, &w) in cs.iter().zip(ws) {
                if w != 0.0 {
                    let trace = net.trace(c);
                    accumulate(net, &trace, w, &mut g);
                }
            }
            g
        })
        .collect();
    let mut total = net.params.zeros_like();
    for part in partials {
        for (t, v) in total.as_mut_slice().iter_mut().zip(part) {
            *t += v;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::network::NetworkHyperparams;
    use crate::system::{init_walkers, Molecule, Nucleus};
    use crate::wavefunction::Wavefunction;

    fn molecule(charges: &[(u32, f64)], n_up: usize, n_down: usize) -> Molecule {
        let nuclei = charges
            .iter()
            .map(|&(z, x)| Nucleus {
                symbol: "X".into(),
                charge: z,
                position: [x, 0.1 * x, -0.2],
            })
            .collect();
        Molecule::new("test", nuclei, n_up, n_down).unwrap()
    }

    fn jittered(mol: &Molecule, kind: FeatureKind, seed: u64) -> WavefunctionParams {
        let hp = NetworkHyperparams {
            n_layers: 3,
            width_one: 6,
            width_two: 3,
            n_det: 2,
            feature_kind: kind,
        };
        let mut p = WavefunctionParams::init(mol, hp, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for x in p.as_mut_slice() {
            *x += rng.random_range(-0.3..0.3);
        }
        p
    }

    fn check(mol: &Molecule, kind: FeatureKind, seed: u64) {
        let p = jittered(mol, kind, seed);
        let walkers = init_walkers(mol, 1, seed).unwrap();
        let x = walkers.walker(0);
        let net = FermiNet::new(mol, &p).unwrap();
        let g = log_psi_gradient(&net, x);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<f64> = (0..p.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);

        let eps = 1e-5;
        let shifted = |s: f64| {
            let mut q = p.clone();
            for (a, b) in q.as_mut_slice().iter_mut().zip(&v) {
                *a += s * b;
            }
            FermiNet::new(mol, &q).unwrap().log_psi(x).log_abs
        };
        let fd = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
        let an: f64 = g.as_slice().iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "{kind}: fd {fd} vs analytic {an}");

        // every block individually, to localize mistakes
        for b in p.layout().blocks() {
            let mut w = vec![0.0; p.len()];
            for (i, slot) in w[b.offset..b.offset + b.len()].iter_mut().enumerate() {
                *slot = ((i * 7 + 3) % 5) as f64 - 2.0;
            }
            let shifted = |s: f64| {
                let mut q = p.clone();
                for (a, c) in q.as_mut_slice().iter_mut().zip(&w) {
                    *a += s * c;
                }
                FermiNet::new(mol, &q).unwrap().log_psi(x).log_abs
            };
            let fd = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
            let an: f64 = g.as_slice().iter().zip(&w).map(|(a, c)| a * c).sum();
            assert!(
                (fd - an).abs() <= 1e-5 * an.abs().max(1.0),
                "{kind} block {}: fd {fd} vs analytic {an}",
                b.name
            );
        }
    }

    #[test]
    fn matches_finite_differences_for_h2() {
        let mol = molecule(&[(1, 0.0), (1, 1.4)], 1, 1);
        for seed in 0..3 {
            check(&mol, FeatureKind::Slater, seed);
            check(&mol, FeatureKind::Linear, seed);
        }
    }

    #[test]
    fn matches_finite_differences_for_open_shell_and_atom() {
        check(&molecule(&[(3, 0.0), (1, 3.0)], 2, 1), FeatureKind::Slater, 4);
        check(&molecule(&[(2, 0.0)], 2, 0), FeatureKind::Slater, 5);
        check(&molecule(&[(1, 0.0)], 1, 0), FeatureKind::Linear, 6);
    }

    #[test]
    fn zero_weights_give_zero_gradient() {
        let mol = molecule(&[(1, 0.0), (1, 1.4)], 1, 1);
        let p = jittered(&mol, FeatureKind::Slater, 1);
        let net = FermiNet::new(&mol, &p).unwrap();
        let w = init_walkers(&mol, 5, 2).unwrap();
        let g = parameter_gradient(&net, &w, &[0.0; 5]);
        assert!(g.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn batch_gradient_is_linear_in_weights() {
        let mol = molecule(&[(1, 0.0), (1, 1.4)], 1, 1);
        let p = jittered(&mol, FeatureKind::Slater, 1);
        let net = FermiNet::new(&mol, &p).unwrap();
        let w = init_walkers(&mol, 11, 2).unwrap();
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.1 - 0.4).collect();
        let b: Vec<f64> = (0..11).map(|i| ((i * 3) % 4) as f64).collect();
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let ga = parameter_gradient(&net, &w, &a);
        let gb = parameter_gradient(&net, &w, &b);
        let gab = parameter_gradient(&net, &w, &ab);
        for ((x, y), z) in ga.as_slice().iter().zip(gb.as_slice()).zip(gab.as_slice()) {
            assert!((x + y - z).abs() <= 1e-10 * (1.0 + z.abs()));
        }
    }
}
