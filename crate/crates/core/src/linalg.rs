//! Small dense linear algebra in the log domain.

use crate::scalar::Scalar;

/// `sign · exp(log_abs)`; `sign == 0` encodes an exact zero with
/// `log_abs = -inf`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignedLog<T> {
    pub sign: f64,
    pub log_abs: T,
}

impl<T: Scalar> SignedLog<T> {
    pub fn zero() -> Self {
        SignedLog {
            sign: 0.0,
            log_abs: T::from_f64(f64::NEG_INFINITY),
        }
    }

    pub fn one() -> Self {
        SignedLog {
            sign: 1.0,
            log_abs: T::zero(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0.0 || self.log_abs.value() == f64::NEG_INFINITY
    }
}

#[inline]
fn abs<T: Scalar>(x: T) -> T {
    if x.value() < 0.0 {
        -x
    } else {
        x
    }
}

/// Sign and log-absolute-value of the determinant of the row-major `n × n`
/// matrix, by LU factorization with partial pivoting.
pub fn signed_log_det<T: Scalar>(matrix: &[T], n: usize) -> SignedLog<T> {
    debug_assert_eq!(matrix.len(), n * n);
    let mut a = matrix.to_vec();
    let mut sign = 1.0;
    let mut log_abs = T::zero();
    for k in 0..n {
        let mut p = k;
        let mut best = a[k * n + k].value().abs();
        for i in k + 1..n {
            let v = a[i * n + k].value().abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == 0.0 {
            return SignedLog::zero();
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            sign = -sign;
        }
        let pivot = a[k * n + k];
        if pivot.value() < 0.0 {
            sign = -sign;
        }
        log_abs += abs(pivot).ln();
        for i in k + 1..n {
            let factor = a[i * n + k] / pivot;
            for j in k + 1..n {
                let u = a[k * n + j];
                a[i * n + j] -= factor * u;
            }
        }
    }
    SignedLog { sign, log_abs }
}

/// Inverse of a row-major `n × n` matrix, `None` if exactly singular.
pub fn invert(matrix: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut a = matrix.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for k in 0..n {
        let p = (k..n).max_by(|&x, &y| a[x * n + k].abs().total_cmp(&a[y * n + k].abs()))?;
        if a[p * n + k] == 0.0 {
            return None;
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
                inv.swap(k * n + j, p * n + j);
            }
        }
        let pivot = a[k * n + k];
        for j in 0..n {
            a[k * n + j] /= pivot;
            inv[k * n + j] /= pivot;
        }
        for i in 0..n {
            if i == k {
                continue;
            }
            let f = a[i * n + k];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                a[i * n + j] -= f * a[k * n + j];
                inv[i * n + j] -= f * inv[k * n + j];
            }
        }
    }
    Some(inv)
}

/// `log |Σ_k s_k exp(l_k)|` and its sign, shifting by the largest term.
pub fn signed_log_sum_exp<T: Scalar>(terms: &[SignedLog<T>]) -> SignedLog<T> {
    let shift = terms
        .iter()
        .filter(|t| !t.is_zero())
        .map(|t| t.log_abs.value())
        .fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return SignedLog::zero();
    }
    let mut sum = T::zero();
    for t in terms.iter().filter(|t| !t.is_zero()) {
        let e = (t.log_abs - T::from_f64(shift)).exp();
        sum += e.scale(t.sign);
    }
    let v = sum.value();
    if v == 0.0 {
        return SignedLog::zero();
    }
    let sign = v.signum();
    SignedLog {
        sign,
        log_abs: abs(sum).ln() + T::from_f64(shift),
    }
}
