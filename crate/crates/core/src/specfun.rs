//! Associated Legendre functions and the coefficient bookkeeping of the
//! truncated Green's function expansion.
//!
//! Pairs `(n, m)` with `0 <= m <= n <= M` are stored in a flat array at index
//! `n(n+1)/2 + m`, giving `K = (M+1)(M+2)/2` slots.

use crate::error::{Error, Result};

/// Truncation degree `M` and derived coefficient count `K`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExpansionOrder {
    max_degree: usize,
}

impl ExpansionOrder {
    pub const fn new(max_degree: usize) -> Self {
        Self { max_degree }
    }

    /// Truncation degree `M`.
    pub const fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// Number of `(n, m)` pairs, `(M+1)(M+2)/2`.
    pub const fn len(&self) -> usize {
        (self.max_degree + 1) * (self.max_degree + 2) / 2
    }

    pub const fn is_empty(&self) -> bool {
        false
    }

    /// Zero-based flat index of `(n, m)`.
    pub fn flat_index(&self, n: usize, m: usize) -> Result<usize> {
        if m > n || n > self.max_degree {
            return Err(Error::IndexOutOfRange { n, m });
        }
        Ok(flat(n, m))
    }

    /// Inverse of [`flat_index`](Self::flat_index).
    pub fn pair(&self, k: usize) -> Option<(usize, usize)> {
        if k >= self.len() {
            return None;
        }
        // Largest n with n(n+1)/2 <= k.
        let mut n = (((8 * k + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
        while flat(n + 1, 0) <= k {
            n += 1;
        }
        while flat(n, 0) > k {
            n -= 1;
        }
        Some((n, k - flat(n, 0)))
    }
}

#[inline]
pub(crate) const fn flat(n: usize, m: usize) -> usize {
    n * (n + 1) / 2 + m
}

/// Neumann factor: 1 for `m = 0`, 2 otherwise.
pub fn neumann(m: usize) -> f64 {
    if m == 0 {
        1.0
    } else {
        2.0
    }
}

/// `eps_m (n-m)!/(n+m)!`, accumulated as a product of reciprocals.
pub fn coeff_d(n: usize, m: usize) -> Result<f64> {
    if m > n {
        return Err(Error::IndexOutOfRange { n, m });
    }
    let ratio = ((n - m + 1)..=(n + m)).fold(1.0, |acc, k| acc / k as f64);
    Ok(neumann(m) * ratio)
}

/// Table of `d_{n,m}` for every pair up to the truncation degree.
#[derive(Clone, Debug)]
pub struct CoeffTable {
    order: ExpansionOrder,
    d: Vec<f64>,
}

impl CoeffTable {
    pub fn new(order: ExpansionOrder) -> Self {
        let mut d = vec![0.0; order.len()];
        for n in 0..=order.max_degree() {
            for m in 0..=n {
                d[flat(n, m)] = coeff_d(n, m).expect("m <= n");
            }
        }
        Self { order, d }
    }

    pub fn order(&self) -> ExpansionOrder {
        self.order
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.d
    }

    pub fn get(&self, n: usize, m: usize) -> Result<f64> {
        Ok(self.d[self.order.flat_index(n, m)?])
    }
}

fn check_arg(x: f64) -> Result<()> {
    if x.abs() <= 1.0 {
        Ok(())
    } else {
        Err(Error::ArgumentOutOfDomain(x))
    }
}

/// Associated Legendre function `P_n^m(x)` with the Condon-Shortley phase.
pub fn assoc_legendre(n: usize, m: usize, x: f64) -> Result<f64> {
    if m > n {
        return Err(Error::IndexOutOfRange { n, m });
    }
    check_arg(x)?;
    let s = ((1.0 - x) * (1.0 + x)).sqrt();
    let mut pmm = 1.0;
    for i in 0..m {
        pmm *= -((2 * i + 1) as f64) * s;
    }
    if n == m {
        return Ok(pmm);
    }
    let mut prev = pmm;
    let mut cur = x * (2 * m + 1) as f64 * pmm;
    for l in (m + 2)..=n {
        let next = ((2 * l - 1) as f64 * x * cur - (l + m - 1) as f64 * prev) / (l - m) as f64;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Legendre polynomial `P_n(x)` by the three-term recurrence.
pub fn legendre(n: usize, x: f64) -> Result<f64> {
    check_arg(x)?;
    if n == 0 {
        return Ok(1.0);
    }
    let (mut prev, mut cur) = (1.0, x);
    for l in 2..=n {
        let next = ((2 * l - 1) as f64 * x * cur - (l - 1) as f64 * prev) / l as f64;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Fills `out[flat(n, m)] = P_n^m(x)` for all `0 <= m <= n <= max_degree`.
///
/// `x` must lie in `[-1, 1]`; callers guarantee this (it is a cosine).
pub(crate) fn fill_assoc_legendre(max_degree: usize, x: f64, out: &mut [f64]) {
    debug_assert!(out.len() > flat(max_degree, max_degree));
    let s = ((1.0 - x) * (1.0 + x)).max(0.0).sqrt();
    let mut pmm = 1.0;
    for m in 0..=max_degree {
        if m > 0 {
            pmm *= -((2 * m - 1) as f64) * s;
        }
        out[flat(m, m)] = pmm;
        if m == max_degree {
            break;
        }
        let mut prev = pmm;
        let mut cur = x * (2 * m + 1) as f64 * pmm;
        out[flat(m + 1, m)] = cur;
        for l in (m + 2)..=max_degree {
            let next =
                ((2 * l - 1) as f64 * x * cur - (l + m - 1) as f64 * prev) / (l - m) as f64;
            out[flat(l, m)] = next;
            prev = cur;
            cur = next;
        }
    }
}
