use crate::features::{walker_features, DistanceMap, FeatureKind, WalkerFeatures};
use crate::linalg::{signed_log_det, signed_log_sum_exp, SignedLog};
use crate::scalar::Scalar;

use super::{Dense, FermiNet, ParamLayout, SpinBlocks};

/// Orbital-stage intermediates of one spin group.
#[derive(Clone, Debug)]
pub struct SpinOrbitals<T> {
    pub spin: usize,
    pub start: usize,
    pub n: usize,
    /// `w·h + g`, `[det][orbital][electron]`
    pub pre: Vec<T>,
    /// envelope values, `[det][orbital][electron]`
    pub env: Vec<T>,
    /// `|A (r - R)|`, `[det][orbital][electron][nucleus]`
    pub env_norm: Vec<T>,
    /// `A (r - R)`, `[det][orbital][electron][nucleus][3]`
    pub env_proj: Vec<T>,
    /// orbital matrices, `[det][orbital][electron]`
    pub phi: Vec<T>,
}

/// Every intermediate of a forward pass for one walker.
#[derive(Clone, Debug)]
pub struct Trace<T> {
    pub features: WalkerFeatures<T>,
    /// One-electron stream entering each layer plus the output, `L + 1`
    /// entries of `N × width`.
    pub h1: Vec<Vec<T>>,
    /// Two-electron stream entering each layer, `L` entries of `N × N × width`.
    pub h2: Vec<Vec<T>>,
    pub(crate) f: Vec<Vec<T>>,
    pub(crate) t1: Vec<Vec<T>>,
    pub(crate) t2: Vec<Vec<T>>,
    pub orbitals: Vec<SpinOrbitals<T>>,
    /// `[det] -> (up, down)` determinants.
    pub dets: Vec<[SignedLog<T>; 2]>,
    pub terms: Vec<SignedLog<T>>,
    pub out: SignedLog<T>,
}

#[inline]
fn affine<T: Scalar>(p: &[f64], d: &Dense, x: &[T], o: usize) -> T {
    let row = &p[d.weight + o * d.n_in..d.weight + (o + 1) * d.n_in];
    let mut acc = T::from_f64(p[d.bias + o]);
    for (xi, &w) in x.iter().zip(row) {
        acc += xi.scale(w);
    }
    acc
}

/// Applies `tanh(W x + b)` (plus `x` when widths agree) to each row of `x`.
fn stream_layer<T: Scalar>(p: &[f64], d: &Dense, x: &[T], rows: usize, residual: Option<&[T]>) -> (Vec<T>, Vec<T>) {
    let mut t = Vec::with_capacity(rows * d.n_out);
    let mut next = Vec::with_capacity(rows * d.n_out);
    for r in 0..rows {
        let xr = &x[r * d.n_in..(r + 1) * d.n_in];
        for o in 0..d.n_out {
            let a = affine(p, d, xr, o).tanh();
            t.push(a);
            next.push(match residual {
                Some(h) => a + h[r * d.n_out + o],
                None => a,
            });
        }
    }
    (t, next)
}

pub(super) fn envelope_terms<T: Scalar>(
    p: &[f64],
    sb: &SpinBlocks,
    nuclei: &[[f64; 3]],
    n_s: usize,
    k: usize,
    i: usize,
    r: &[T],
    norms: &mut Vec<T>,
    projs: &mut Vec<T>,
) -> T {
    let m = nuclei.len();
    let mut env = T::zero();
    for (a, nuc) in nuclei.iter().enumerate() {
        let idx = (k * n_s + i) * m + a;
        let pi = p[sb.env_pi + idx];
        let sigma = &p[sb.env_sigma + 9 * idx..sb.env_sigma + 9 * idx + 9];
        let d = [
            r[0] - T::from_f64(nuc[0]),
            r[1] - T::from_f64(nuc[1]),
            r[2] - T::from_f64(nuc[2]),
        ];
        let mut sq = T::zero();
        for row in 0..3 {
            let v = d[0].scale(sigma[3 * row]) + d[1].scale(sigma[3 * row + 1]) + d[2].scale(sigma[3 * row + 2]);
            projs.push(v);
            sq += v * v;
        }
        let norm = sq.sqrt();
        norms.push(norm);
        env += (-norm).exp().scale(pi);
    }
    env
}

pub(super) fn envelope_value(
    p: &[f64],
    sb: &SpinBlocks,
    nuclei: &[[f64; 3]],
    n_s: usize,
    k: usize,
    i: usize,
    r: [f64; 3],
) -> f64 {
    let mut norms = Vec::new();
    let mut projs = Vec::new();
    envelope_terms(p, sb, nuclei, n_s, k, i, &r, &mut norms, &mut projs)
}

pub(super) fn forward<T: Scalar>(net: &FermiNet<'_>, coords: &[T]) -> Trace<T> {
    let p = net.params.as_slice();
    let layout = &net.params.layout;
    let hp = &layout.hp;
    let n = layout.n_electrons();
    let m = layout.n_nuclei;
    assert_eq!(coords.len(), 3 * n, "walker has the wrong number of coordinates");

    let map = match hp.feature_kind {
        FeatureKind::Linear => DistanceMap::Linear,
        FeatureKind::Slater => DistanceMap::Slater(&net.features),
    };
    let features = walker_features(coords, &net.nuclei, layout.n_up, map);
    let groups: Vec<(usize, usize, usize)> = layout.groups().collect();

    let mut h1 = vec![features.one.clone()];
    let mut h2 = vec![features.two.clone()];
    let mut fs = Vec::with_capacity(hp.n_layers);
    let mut t1s = Vec::with_capacity(hp.n_layers);
    let mut t2s = Vec::with_capacity(hp.n_layers.saturating_sub(1));

    for l in 0..hp.n_layers {
        let (d1, d2) = ParamLayout::stream_widths(hp, m, l);
        let cur1 = &h1[l];
        let cur2 = &h2[l];

        let mut pooled = Vec::with_capacity(groups.len() * d1);
        for &(_, start, count) in &groups {
            let inv = 1.0 / count as f64;
            for c in 0..d1 {
                let mut s = T::zero();
                for j in start..start + count {
                    s += cur1[j * d1 + c];
                }
                pooled.push(s.scale(inv));
            }
        }

        let dense = &layout.one[l];
        let mut f = Vec::with_capacity(n * dense.n_in);
        for i in 0..n {
            f.extend_from_slice(&cur1[i * d1..(i + 1) * d1]);
            f.extend_from_slice(&pooled);
            for &(_, start, count) in &groups {
                let inv = 1.0 / count as f64;
                for c in 0..d2 {
                    let mut s = T::zero();
                    for j in start..start + count {
                        s += cur2[(i * n + j) * d2 + c];
                    }
                    f.push(s.scale(inv));
                }
            }
        }
        let residual = (d1 == dense.n_out).then_some(cur1.as_slice());
        let (t1, next1) = stream_layer(p, dense, &f, n, residual);

        if l + 1 < hp.n_layers {
            let dense2 = &layout.two[l];
            let residual = (d2 == dense2.n_out).then_some(cur2.as_slice());
            let (t2, next2) = stream_layer(p, dense2, cur2, n * n, residual);
            t2s.push(t2);
            h2.push(next2);
        }
        fs.push(f);
        t1s.push(t1);
        h1.push(next1);
    }

    let width = hp.width_one;
    let h_last = &h1[hp.n_layers];
    let k_det = hp.n_det;
    let mut orbitals = Vec::with_capacity(groups.len());
    for &(spin, start, n_s) in &groups {
        let sb = layout.spins[spin].expect("non-empty spin group has orbital blocks");
        let cap = k_det * n_s * n_s;
        let mut pre = Vec::with_capacity(cap);
        let mut env = Vec::with_capacity(cap);
        let mut env_norm = Vec::with_capacity(cap * m);
        let mut env_proj = Vec::with_capacity(cap * m * 3);
        let mut phi = Vec::with_capacity(cap);
        for k in 0..k_det {
            for i in 0..n_s {
                let orb = k * n_s + i;
                let w = &p[sb.proj_w + orb * width..sb.proj_w + (orb + 1) * width];
                let bias = p[sb.proj_b + orb];
                for j in 0..n_s {
                    let e = start + j;
                    let hj = &h_last[e * width..(e + 1) * width];
                    let mut o = T::from_f64(bias);
                    for (x, &wv) in hj.iter().zip(w) {
                        o += x.scale(wv);
                    }
                    let r = &coords[3 * e..3 * e + 3];
                    let ev = envelope_terms(p, &sb, &net.nuclei, n_s, k, i, r, &mut env_norm, &mut env_proj);
                    pre.push(o);
                    env.push(ev);
                    phi.push(o * ev);
                }
            }
        }
        orbitals.push(SpinOrbitals {
            spin,
            start,
            n: n_s,
            pre,
            env,
            env_norm,
            env_proj,
            phi,
        });
    }

    let mut dets = Vec::with_capacity(k_det);
    let mut terms = Vec::with_capacity(k_det);
    for k in 0..k_det {
        let mut pair = [SignedLog::one(), SignedLog::one()];
        for o in &orbitals {
            let nn = o.n * o.n;
            pair[o.spin] = signed_log_det(&o.phi[k * nn..(k + 1) * nn], o.n);
        }
        let omega = p[layout.det_weights + k];
        let sign = omega.signum() * pair[0].sign * pair[1].sign;
        let term = if omega == 0.0 || sign == 0.0 {
            SignedLog::zero()
        } else {
            SignedLog {
                sign,
                log_abs: pair[0].log_abs + pair[1].log_abs + T::from_f64(omega.abs().ln()),
            }
        };
        dets.push(pair);
        terms.push(term);
    }
    let out = signed_log_sum_exp(&terms);

    Trace {
        features,
        h1,
        h2,
        f: fs,
        t1: t1s,
        t2: t2s,
        orbitals,
        dets,
        terms,
        out,
    }
}
