//! Weights of sl_N in epsilon coordinates, roots, and zero-weight spin-chain states.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use num_rational::Rational64;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::theta::{eval_shift, AffineShift, Assignment, C64};

/// Weight `sum c_i eps_i`, stored modulo the diagonal with mean-zero coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Weight {
    coords: Vec<AffineShift>,
}

impl Weight {
    pub fn from_coords(coords: Vec<AffineShift>) -> Self {
        Weight { coords }.canonical()
    }

    pub fn zero(n: usize) -> Self {
        Weight { coords: vec![AffineShift::zero(); n] }
    }

    /// `eps_i`, 1-based.
    pub fn epsilon(n: usize, i: usize) -> Self {
        let mut c = vec![AffineShift::zero(); n];
        c[i - 1] = AffineShift::int(1);
        Weight::from_coords(c)
    }

    /// Fundamental weight `varpi_k = eps_1 + ... + eps_k`; `varpi_0 = 0`.
    pub fn varpi(n: usize, k: usize) -> Self {
        let c = (0..n).map(|i| if i < k { AffineShift::int(1) } else { AffineShift::zero() }).collect();
        Weight::from_coords(c)
    }

    /// Simple root `alpha_i = eps_i - eps_{i+1}`.
    pub fn alpha(n: usize, i: usize) -> Self {
        Weight::epsilon(n, i) - Weight::epsilon(n, i + 1)
    }

    pub fn rank(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[AffineShift] {
        &self.coords
    }

    pub fn scale(&self, s: &AffineShift) -> Self {
        // Only constant-by-shift products are exact; callers never multiply two symbolic parts.
        let c = self
            .coords
            .iter()
            .map(|x| {
                assert!(x.is_constant() || s.is_constant(), "nonlinear weight scaling");
                if x.is_constant() {
                    s.scale(x.constant_part())
                } else {
                    x.scale(s.constant_part())
                }
            })
            .collect();
        Weight::from_coords(c)
    }

    pub fn scale_int(&self, k: i64) -> Self {
        Weight { coords: self.coords.iter().map(|x| x.clone() * k).collect() }
    }

    /// Numeric coordinates under an assignment of indeterminates.
    pub fn to_complex(&self, assignment: &Assignment) -> Result<Vec<C64>> {
        self.coords.iter().map(|c| eval_shift(c, assignment)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|c| c.is_zero())
    }

    fn canonical(mut self) -> Self {
        let n = self.coords.len() as i64;
        if n == 0 {
            return self;
        }
        let mut sum = AffineShift::zero();
        for c in &self.coords {
            sum = sum + c.clone();
        }
        let mean = sum.scale(Rational64::new(1, n));
        for c in &mut self.coords {
            *c = c.clone() - mean.clone();
        }
        self
    }
}

impl Add for Weight {
    type Output = Weight;
    fn add(self, rhs: Weight) -> Weight {
        assert_eq!(self.coords.len(), rhs.coords.len(), "weights of different rank");
        let coords = self.coords.into_iter().zip(rhs.coords).map(|(a, b)| a + b).collect();
        Weight { coords }
    }
}

impl Sub for Weight {
    type Output = Weight;
    fn sub(self, rhs: Weight) -> Weight {
        self + (-rhs)
    }
}

impl Neg for Weight {
    type Output = Weight;
    fn neg(self) -> Weight {
        Weight { coords: self.coords.into_iter().map(|c| -c).collect() }
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coords.iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// `-sum n_i alpha_i` in the negative root cone.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DepthVector {
    pub n: Vec<u32>,
}

impl DepthVector {
    pub fn zero(rank: usize) -> Self {
        DepthVector { n: vec![0; rank] }
    }

    pub fn depth(&self) -> u32 {
        self.n.iter().sum()
    }

    pub fn add(&self, other: &DepthVector) -> DepthVector {
        DepthVector { n: self.n.iter().zip(&other.n).map(|(a, b)| a + b).collect() }
    }

    /// The weight `-sum n_i alpha_i` for sl_N with `N = rank + 1`.
    pub fn to_weight(&self) -> Weight {
        let n = self.n.len() + 1;
        let mut w = Weight::zero(n);
        for (i, k) in self.n.iter().enumerate() {
            w = w - Weight::alpha(n, i + 1).scale_int(*k as i64);
        }
        w
    }

    /// All depth vectors of total depth at most `max`, ordered by depth then lexicographically.
    pub fn all_up_to(rank: usize, max: u32) -> Vec<DepthVector> {
        let mut out = vec![];
        fn rec(rank: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<DepthVector>) {
            if cur.len() == rank {
                out.push(DepthVector { n: cur.clone() });
                return;
            }
            for k in 0..=left {
                cur.push(k);
                rec(rank, left - k, cur, out);
                cur.pop();
            }
        }
        rec(rank, max, &mut vec![], &mut out);
        out.sort_by_key(|d| (d.depth(), d.n.clone()));
        out
    }
}

/// `lambda_i - lambda_j`, 1-based.
pub fn lambda_ij(lam: &[C64], i: usize, j: usize) -> Result<C64> {
    let n = lam.len();
    if i == 0 || j == 0 || i > n || j > n {
        return Err(Error::IndexOutOfRange(format!("({i},{j}) for N={n}")));
    }
    Ok(lam[i - 1] - lam[j - 1])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateBasis {
    pub n: usize,
    pub ell: usize,
    /// Letters are 1-based.
    pub states: Vec<Vec<usize>>,
}

impl StateBasis {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// All `ell`-tuples over `1..=N` in which each letter occurs `ell/N` times, lexicographically.
pub fn enumerate_zero_weight_states(n: usize, ell: usize) -> Result<StateBasis> {
    if n < 2 {
        return Err(Error::InvalidParams(format!("N must be at least 2, got {n}")));
    }
    if ell == 0 || !ell.is_multiple_of(n) {
        return Err(Error::NotMultiple(format!("ell={ell} is not a positive multiple of N={n}")));
    }
    let kappa = ell / n;
    let mut counts = vec![0usize; n];
    let mut cur = Vec::with_capacity(ell);
    let mut states = Vec::new();
    fn rec(n: usize, ell: usize, kappa: usize, counts: &mut [usize], cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == ell {
            out.push(cur.clone());
            return;
        }
        for letter in 1..=n {
            if counts[letter - 1] < kappa {
                counts[letter - 1] += 1;
                cur.push(letter);
                rec(n, ell, kappa, counts, cur, out);
                cur.pop();
                counts[letter - 1] -= 1;
            }
        }
    }
    rec(n, ell, kappa, &mut counts, &mut cur, &mut states);
    Ok(StateBasis { n, ell, states })
}

/// Alpha-coordinates of `anchor - beta`, which must be a non-negative integer combination of simple roots.
pub fn weight_depth(beta: &Weight, anchor: &Weight) -> Result<DepthVector> {
    let d = anchor.clone() - beta.clone();
    let n = d.rank();
    let mut partial = AffineShift::zero();
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    for k in 0..n.saturating_sub(1) {
        partial = partial + d.coords()[k].clone();
        let c = partial.to_f64().filter(|_| partial.constant_part().is_integer());
        match c {
            Some(v) if v >= 0.0 => out.push(partial.constant_part().to_integer() as u32),
            _ => return Err(Error::NotInRootCone(format!("{anchor} - {beta} has coordinate {partial}"))),
        }
    }
    if !(partial + d.coords()[n - 1].clone()).is_zero() {
        return Err(Error::NotInRootCone(format!("{anchor} - {beta}")));
    }
    Ok(DepthVector { n: out })
}

/// Numeric pairing `lambda + hbar * weight` on mean-zero coordinates.
pub fn shift_lambda(lam: &[C64], weight: &[C64], hbar: C64) -> Vec<C64> {
    lam.iter().zip(weight).map(|(l, w)| l + hbar * w).collect()
}

/// Numeric eps_i coordinates (mean-zero) for the weight of a tuple of letters.
pub fn letters_weight(n: usize, letters: &[usize]) -> Vec<C64> {
    let mut w = vec![C64::new(0.0, 0.0); n];
    for &l in letters {
        w[l - 1] += 1.0;
    }
    let mean = w.iter().sum::<C64>() / n as f64;
    w.iter().map(|x| x - mean).collect()
}

pub fn rational_to_f64(r: &Rational64) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_states(n: usize, ell: usize) -> Vec<Vec<usize>> {
        let total = n.pow(ell as u32);
        let mut out = vec![];
        for code in 0..total {
            let mut c = code;
            let mut t = vec![0; ell];
            for slot in (0..ell).rev() {
                t[slot] = c % n + 1;
                c /= n;
            }
            let w = letters_weight(n, &t);
            if w.iter().all(|x| x.norm() < 1e-12) {
                out.push(t);
            }
        }
        out
    }

    #[test]
    fn lambda_examples() {
        let lam: Vec<C64> = [1.0, 2.0, 3.0].iter().map(|&x| C64::new(x, 0.0)).collect();
        assert_eq!(lambda_ij(&lam, 1, 3).unwrap(), C64::new(-2.0, 0.0));
        assert_eq!(lambda_ij(&lam, 2, 2).unwrap(), C64::new(0.0, 0.0));
        let c = C64::new(0.37, -1.2);
        let lam2: Vec<C64> = lam.iter().map(|x| x + c).collect();
        assert!((lambda_ij(&lam2, 1, 3).unwrap() - lambda_ij(&lam, 1, 3).unwrap()).norm() < 1e-15);
        assert!(lambda_ij(&lam, 0, 1).is_err());
        assert!(lambda_ij(&lam, 1, 4).is_err());
    }

    #[test]
    fn zero_weight_states_match_brute_force() {
        for (n, ell) in [(2, 2), (3, 3), (2, 4), (2, 6), (3, 6)] {
            let got = enumerate_zero_weight_states(n, ell).unwrap();
            assert_eq!(got.states, brute_force_states(n, ell), "N={n} ell={ell}");
        }
        let b = enumerate_zero_weight_states(2, 2).unwrap();
        assert_eq!(b.states, vec![vec![1, 2], vec![2, 1]]);
        assert_eq!(enumerate_zero_weight_states(2, 4).unwrap().len(), 6);
        assert_eq!(enumerate_zero_weight_states(3, 3).unwrap().len(), 6);
        assert!(enumerate_zero_weight_states(3, 4).is_err());
    }

    #[test]
    fn multinomial_counts() {
        fn fact(k: usize) -> usize {
            (1..=k).product()
        }
        for n in 2..=3 {
            for kappa in 1..=6 / n {
                let ell = n * kappa;
                let expect = fact(ell) / fact(kappa).pow(n as u32);
                assert_eq!(enumerate_zero_weight_states(n, ell).unwrap().len(), expect);
            }
        }
    }

    #[test]
    fn roots_and_fundamental_weights() {
        for n in 2..=5 {
            for i in 1..n {
                let a = Weight::alpha(n, i);
                let mut c = vec![AffineShift::zero(); n];
                c[i - 1] = AffineShift::int(1);
                c[i] = AffineShift::int(-1);
                assert_eq!(a, Weight::from_coords(c));
            }
            assert!(Weight::varpi(n, n).is_zero());
            assert!(Weight::varpi(n, 0).is_zero());
        }
    }

    #[test]
    fn depth_examples() {
        let w1 = Weight::varpi(2, 1);
        assert_eq!(weight_depth(&w1, &w1).unwrap().n, vec![0]);
        let b = Weight::varpi(2, 1) - Weight::alpha(2, 1);
        assert_eq!(weight_depth(&b, &w1).unwrap().n, vec![1]);
        let anchor = Weight::varpi(3, 1).scale_int(2);
        let b = anchor.clone() - Weight::alpha(3, 1) - Weight::alpha(3, 2);
        assert_eq!(weight_depth(&b, &anchor).unwrap().n, vec![1, 1]);
        assert!(weight_depth(&anchor, &b).is_err());
        let d = DepthVector { n: vec![2, 1] };
        assert_eq!(weight_depth(&(anchor.clone() + d.to_weight()), &anchor).unwrap(), d);
    }

    #[test]
    fn symbolic_weight_depth() {
        let lam = AffineShift::var("L");
        let top = Weight::varpi(2, 1).scale(&lam);
        let v3 = top.clone() - Weight::alpha(2, 1).scale_int(3);
        assert_eq!(weight_depth(&v3, &top).unwrap().n, vec![3]);
    }
}
